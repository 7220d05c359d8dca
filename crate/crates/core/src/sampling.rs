//! Uniform collocation points and the adaptive point-doubling controller.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Default validation/training loss ratio that triggers a doubling.
pub const DEFAULT_Q: f64 = 5.0;

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// `n` i.i.d. uniform points in the open cube `(0,1)^d`.
pub fn sample_interior<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::EmptyPointSet("interior sample"));
    }
    let coords = (0..n * dim).map(|_| open_unit(rng)).collect();
    PointSet::new(dim, coords)
}

/// `n` i.i.d. uniform points on the boundary of `[0,1]^d`: a face is chosen
/// uniformly among the `2d`, its fixed coordinate is set exactly to 0 or 1,
/// and the others are uniform.
pub fn sample_boundary<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::EmptyPointSet("boundary sample"));
    }
    let mut coords = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let face = rng.random_range(0..2 * dim);
        let (axis, side) = (face / 2, (face % 2) as f64);
        for k in 0..dim {
            coords.push(if k == axis { side } else { rng.random::<f64>() });
        }
    }
    PointSet::new(dim, coords)
}

/// Interior and boundary collocation points drawn from one seed stream.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub interior: PointSet,
    pub boundary: PointSet,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Keep,
    DoubleInterior,
    DoubleBoundary,
    DoubleBoth,
}

impl Decision {
    pub fn doubles_interior(self) -> bool {
        matches!(self, Decision::DoubleInterior | Decision::DoubleBoth)
    }

    pub fn doubles_boundary(self) -> bool {
        matches!(self, Decision::DoubleBoundary | Decision::DoubleBoth)
    }
}

/// Training and validation collocation sets with their current counts.
///
/// Generation `g` draws the training set from ChaCha stream `2g` and the
/// validation set from stream `2g + 1` of `seed`, so the whole sequence of
/// sets is a function of the seed and the decisions taken.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveState {
    pub n_interior: usize,
    pub n_boundary: usize,
    pub q: f64,
    pub train: CollocationSet,
    pub validation: CollocationSet,
    /// Set for `d = 1`, where the two endpoints are the whole boundary.
    pub boundary_frozen: bool,
    dim: usize,
    seed: u64,
    generation: u64,
}

impl AdaptiveState {
    /// Draws generation 0. In one dimension the boundary set is exactly
    /// `{0, 1}` and `n_boundary` is ignored.
    pub fn new(dim: usize, n_interior: usize, n_boundary: usize, q: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("threshold q must exceed 1, got {q}")));
        }
        let boundary_frozen = dim == 1;
        let n_boundary = if boundary_frozen { 2 } else { n_boundary };
        if n_interior == 0 {
            return Err(Error::EmptyPointSet("interior collocation"));
        }
        if n_boundary == 0 {
            return Err(Error::EmptyPointSet("boundary collocation"));
        }
        let mut state = Self {
            n_interior,
            n_boundary,
            q,
            train: empty_set(dim)?,
            validation: empty_set(dim)?,
            boundary_frozen,
            dim,
            seed,
            generation: 0,
        };
        state.regenerate()?;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of point-set regenerations so far.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    fn draw(&self, stream: u64) -> Result<CollocationSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let interior = sample_interior(self.dim, self.n_interior, &mut rng)?;
        let boundary = if self.boundary_frozen {
            PointSet::new(1, vec![0.0, 1.0])?
        } else {
            sample_boundary(self.dim, self.n_boundary, &mut rng)?
        };
        Ok(CollocationSet {
            interior,
            boundary,
            seed: self.seed,
        })
    }

    fn regenerate(&mut self) -> Result<()> {
        self.train = self.draw(2 * self.generation)?;
        self.validation = self.draw(2 * self.generation + 1)?;
        Ok(())
    }

    /// Applies `decision` in place. Returns whether the point sets changed.
    pub fn apply(&mut self, decision: Decision) -> Result<bool> {
        let grow_i = decision.doubles_interior();
        let grow_b = decision.doubles_boundary() && !self.boundary_frozen;
        if !grow_i && !grow_b {
            return Ok(false);
        }
        if grow_i {
            self.n_interior *= 2;
        }
        if grow_b {
            self.n_boundary *= 2;
        }
        self.generation += 1;
        self.regenerate()?;
        Ok(true)
    }
}

fn empty_set(dim: usize) -> Result<CollocationSet> {
    Ok(CollocationSet {
        interior: PointSet::new(dim, Vec::new())?,
        boundary: PointSet::new(dim, Vec::new())?,
        seed: 0,
    })
}

/// Component-wise trigger: a component doubles when its validation loss
/// exceeds `q` times its training loss.
pub fn adaptive_check(train: (f64, f64), validation: (f64, f64), state: &AdaptiveState) -> Decision {
    let grow_i = validation.0 > state.q * train.0;
    let grow_b = !state.boundary_frozen && validation.1 > state.q * train.1;
    match (grow_i, grow_b) {
        (true, true) => Decision::DoubleBoth,
        (true, false) => Decision::DoubleInterior,
        (false, true) => Decision::DoubleBoundary,
        (false, false) => Decision::Keep,
    }
}

/// Functional form of [`AdaptiveState::apply`].
pub fn apply_doubling(mut state: AdaptiveState, decision: Decision) -> Result<AdaptiveState> {
    state.apply(decision)?;
    Ok(state)
}
