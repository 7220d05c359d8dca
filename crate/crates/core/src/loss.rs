//! Monte-Carlo residual losses and the three total-loss strategies.
//!
//! Per-point residuals come from one batched jet pass over each point set;
//! gradients are assembled by seeding the network adjoint with the
//! derivative of the total with respect to every output channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Objective;
use crate::error::{Error, Result};
use crate::net::{BatchOutput, ChannelLayout, Network};
use crate::points::PointSet;
use crate::problem::{LinearPdeProblem, OperatorTerm};
use crate::sampling::{sample_boundary, CollocationSet};

pub const DEFAULT_INTERIOR_FLOOR: f64 = 1e-30;

/// Boundary samples used to precompute the mean of `|G|^p`.
pub const BOUNDARY_MEAN_SAMPLES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    /// `L_I + L_B`.
    Original,
    /// `|Omega| lambda L_I + |dOmega| (1 - lambda) L_B`.
    OptimalWeight { lambda: f64 },
    /// Each component divided by the magnitude of its own terms.
    MagnitudeNormalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossStrategy {
    pub kind: LossKind,
    pub p: f64,
    /// Mean of `|G|^p` over the boundary, fixed in advance. `None` divides by
    /// the sum of `|G|^p` over the current boundary points instead.
    pub boundary_denominator: Option<f64>,
    pub interior_floor: f64,
}

impl LossStrategy {
    fn build(kind: LossKind, p: f64, boundary_denominator: Option<f64>) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must be at least 1, got {p}")));
        }
        if let LossKind::OptimalWeight { lambda } = kind {
            check_lambda(lambda)?;
        }
        if let Some(d) = boundary_denominator {
            if d == 0.0 {
                return Err(Error::HomogeneousBoundary);
            }
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "boundary denominator must be positive, got {d}"
                )));
            }
        }
        Ok(Self {
            kind,
            p,
            boundary_denominator,
            interior_floor: DEFAULT_INTERIOR_FLOOR,
        })
    }

    pub fn original(p: f64) -> Result<Self> {
        Self::build(LossKind::Original, p, None)
    }

    pub fn optimal_weight(lambda: f64, p: f64) -> Result<Self> {
        Self::build(LossKind::OptimalWeight { lambda }, p, None)
    }

    /// Magnitude normalization with a precomputed boundary mean (`Some`) or
    /// the same-point sum (`None`).
    pub fn magnitude_normalized(p: f64, boundary_denominator: Option<f64>) -> Result<Self> {
        Self::build(LossKind::MagnitudeNormalized, p, boundary_denominator)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    Ok(())
}

/// Loss components at one parameter vector.
///
/// `interior` and `boundary` are the mean residual powers `L_I`, `L_B`. For
/// the magnitude-normalized strategy the denominators are the per-point means
/// the components are divided by, so that
/// `total = interior / interior_denominator + boundary / boundary_denominator`;
/// the other strategies report denominators of 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub interior: f64,
    pub boundary: f64,
    pub interior_denominator: f64,
    pub boundary_denominator: f64,
    pub total: f64,
    pub log_total: f64,
}

/// `L_I + L_B`.
pub fn total_original(interior: f64, boundary: f64) -> f64 {
    interior + boundary
}

/// `|Omega| lambda L_I + |dOmega| (1 - lambda) L_B`.
pub fn total_weighted(interior: f64, boundary: f64, lambda: f64, measures: (f64, f64)) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(measures.0 * lambda * interior + measures.1 * (1.0 - lambda) * boundary)
}

/// Natural log of a loss. An exactly zero loss maps to `-inf`.
pub fn log_objective(total: f64) -> Result<f64> {
    if total.is_nan() || total < 0.0 {
        return Err(Error::NonFinite(format!("cannot take the log of loss {total}")));
    }
    Ok(total.ln())
}

/// Mean of `|G|^p` over the boundary of the cube. Exact in one dimension,
/// otherwise a fixed-seed Monte-Carlo mean.
pub fn boundary_data_mean(problem: &LinearPdeProblem, p: f64, samples: usize, seed: u64) -> Result<f64> {
    let points = if problem.dim() == 1 {
        PointSet::new(1, vec![0.0, 1.0])?
    } else {
        sample_boundary(problem.dim(), samples, &mut ChaCha8Rng::seed_from_u64(seed))?
    };
    let sum: f64 = points.iter().map(|x| problem.boundary_data(x).abs().powf(p)).sum();
    Ok(sum / points.len() as f64)
}

/// Operator coefficients and right-hand side tabulated at a point set.
#[derive(Clone, Debug)]
pub struct PreparedSet {
    points: PointSet,
    order: usize,
    channels: Vec<usize>,
    /// `coeffs[t][k]`: coefficient of term `t` at point `k`.
    coeffs: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl PreparedSet {
    fn new(points: &PointSet, terms: &[OperatorTerm], rhs: impl Fn(&[f64]) -> f64, order: usize) -> Result<Self> {
        let layout = ChannelLayout::new(points.dim(), order)?;
        let channels = terms
            .iter()
            .map(|t| layout.channel_of(&t.index))
            .collect::<Result<Vec<_>>>()?;
        let coeffs = terms
            .iter()
            .map(|t| points.iter().map(|x| (t.coeff)(x)).collect())
            .collect();
        Ok(Self {
            points: points.clone(),
            order,
            channels,
            coeffs,
            rhs: points.iter().map(rhs).collect(),
        })
    }

    pub fn interior(problem: &LinearPdeProblem, points: &PointSet) -> Result<Self> {
        check_points(problem, points, "interior points")?;
        Self::new(
            points,
            problem.interior_terms(),
            |x| problem.source(x),
            problem.interior_order(),
        )
    }

    pub fn boundary(problem: &LinearPdeProblem, points: &PointSet) -> Result<Self> {
        check_points(problem, points, "boundary points")?;
        Self::new(
            points,
            problem.boundary_terms(),
            |x| problem.boundary_data(x),
            problem.boundary_order(),
        )
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn residuals(&self, out: &BatchOutput) -> Vec<f64> {
        let mut r: Vec<f64> = self.rhs.iter().map(|f| -f).collect();
        for (c, a) in self.channels.iter().zip(&self.coeffs) {
            for ((rk, ak), uk) in r.iter_mut().zip(a).zip(out.channel(*c)) {
                *rk += ak * uk;
            }
        }
        r
    }

    /// `sum_j |a_j D^{b_j} u| + |F|` per point.
    fn magnitudes(&self, out: &BatchOutput) -> Vec<f64> {
        let mut m: Vec<f64> = self.rhs.iter().map(|f| f.abs()).collect();
        for (c, a) in self.channels.iter().zip(&self.coeffs) {
            for ((mk, ak), uk) in m.iter_mut().zip(a).zip(out.channel(*c)) {
                *mk += (ak * uk).abs();
            }
        }
        m
    }

    /// `sum_k |G_k|^p`.
    fn rhs_power_sum(&self, p: f64) -> f64 {
        self.rhs.iter().map(|g| g.abs().powf(p)).sum()
    }
}

fn check_points(problem: &LinearPdeProblem, points: &PointSet, what: &'static str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet(what));
    }
    if points.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: points.dim(),
        });
    }
    Ok(())
}

fn power(r: f64, p: f64) -> f64 {
    if p == 2.0 {
        r * r
    } else {
        r.abs().powf(p)
    }
}

/// `d |r|^p / dr`.
fn power_derivative(r: f64, p: f64) -> f64 {
    if p == 2.0 {
        2.0 * r
    } else if r == 0.0 {
        0.0
    } else {
        p * r.abs().powf(p - 1.0) * r.signum()
    }
}

/// Mean of `|N(u)(x_k) - F(x_k)|^p` over interior points.
pub fn interior_loss(
    problem: &LinearPdeProblem,
    net: &Network,
    params: &[f64],
    points: &PointSet,
    p: f64,
) -> Result<f64> {
    let set = PreparedSet::interior(problem, points)?;
    let out = net.forward_batch(params, points, set.order)?;
    Ok(set.residuals(&out).iter().map(|&r| power(r, p)).sum::<f64>() / set.len() as f64)
}

/// Mean of `|B(u)(x_k) - G(x_k)|^p` over boundary points.
pub fn boundary_loss(
    problem: &LinearPdeProblem,
    net: &Network,
    params: &[f64],
    points: &PointSet,
    p: f64,
) -> Result<f64> {
    let set = PreparedSet::boundary(problem, points)?;
    let out = net.forward_batch(params, points, set.order)?;
    Ok(set.residuals(&out).iter().map(|&r| power(r, p)).sum::<f64>() / set.len() as f64)
}

/// Magnitude-normalized total with its components.
pub fn total_magnitude_normalized(
    problem: &LinearPdeProblem,
    net: &Network,
    params: &[f64],
    interior: &PointSet,
    boundary: &PointSet,
    strategy: &LossStrategy,
) -> Result<LossBreakdown> {
    let strategy = LossStrategy {
        kind: LossKind::MagnitudeNormalized,
        ..*strategy
    };
    let objective = PinnObjective::new(problem, net.clone(), strategy, interior, boundary)?.with_log(false);
    objective.breakdown(params)
}

/// Intermediate sums of one evaluation.
struct Sums {
    n_i: f64,
    n_b: f64,
    /// `sum r_I^p`, `sum r_B^p`.
    num_i: f64,
    num_b: f64,
    /// Floored `sum m_I^p` (magnitude normalization only).
    den_i: f64,
    den_i_active: bool,
    /// Boundary divisor applied to `num_b`.
    den_b: f64,
}

/// The training objective: a loss strategy applied to a problem, a network
/// and the current collocation points.
#[derive(Clone)]
pub struct PinnObjective {
    problem: LinearPdeProblem,
    network: Network,
    strategy: LossStrategy,
    interior: PreparedSet,
    boundary: PreparedSet,
    log: bool,
}

impl PinnObjective {
    /// Builds the objective. The log transform is on by default.
    pub fn new(
        problem: &LinearPdeProblem,
        network: Network,
        strategy: LossStrategy,
        interior: &PointSet,
        boundary: &PointSet,
    ) -> Result<Self> {
        if network.input_dim() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: network.input_dim(),
            });
        }
        let objective = Self {
            interior: PreparedSet::interior(problem, interior)?,
            boundary: PreparedSet::boundary(problem, boundary)?,
            problem: problem.clone(),
            network,
            strategy,
            log: true,
        };
        if strategy.kind == LossKind::MagnitudeNormalized
            && strategy.boundary_denominator.is_none()
            && objective.boundary.rhs_power_sum(strategy.p) == 0.0
        {
            return Err(Error::HomogeneousBoundary);
        }
        Ok(objective)
    }

    pub fn with_log(mut self, log: bool) -> Self {
        self.log = log;
        self
    }

    pub fn strategy(&self) -> &LossStrategy {
        &self.strategy
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn problem(&self) -> &LinearPdeProblem {
        &self.problem
    }

    pub fn interior_points(&self) -> &PointSet {
        self.interior.points()
    }

    pub fn boundary_points(&self) -> &PointSet {
        self.boundary.points()
    }

    /// Replaces the collocation points.
    pub fn set_points(&mut self, points: &CollocationSet) -> Result<()> {
        let interior = PreparedSet::interior(&self.problem, &points.interior)?;
        let boundary = PreparedSet::boundary(&self.problem, &points.boundary)?;
        if self.strategy.kind == LossKind::MagnitudeNormalized
            && self.strategy.boundary_denominator.is_none()
            && boundary.rhs_power_sum(self.strategy.p) == 0.0
        {
            return Err(Error::HomogeneousBoundary);
        }
        self.interior = interior;
        self.boundary = boundary;
        Ok(())
    }

    fn sums(&self, r_i: &[f64], m_i: Option<&[f64]>, r_b: &[f64]) -> Sums {
        let p = self.strategy.p;
        let n_i = r_i.len() as f64;
        let n_b = r_b.len() as f64;
        let num_i = r_i.iter().map(|&r| power(r, p)).sum();
        let num_b = r_b.iter().map(|&r| power(r, p)).sum();
        let (den_i, den_i_active, den_b) = match self.strategy.kind {
            LossKind::MagnitudeNormalized => {
                let raw: f64 = m_i.map_or(0.0, |m| m.iter().map(|&v| power(v, p)).sum());
                let floor = self.strategy.interior_floor;
                let den_b = match self.strategy.boundary_denominator {
                    Some(mean) => mean * n_b,
                    None => self.boundary.rhs_power_sum(p),
                };
                (raw.max(floor), raw > floor, den_b)
            }
            _ => (1.0, false, 1.0),
        };
        Sums {
            n_i,
            n_b,
            num_i,
            num_b,
            den_i,
            den_i_active,
            den_b,
        }
    }

    fn assemble(&self, s: &Sums) -> (LossBreakdown, f64) {
        let (li, lb) = (s.num_i / s.n_i, s.num_b / s.n_b);
        let (total, den_i, den_b) = match self.strategy.kind {
            LossKind::Original => (total_original(li, lb), 1.0, 1.0),
            LossKind::OptimalWeight { lambda } => (
                self.problem.interior_measure() * lambda * li + self.problem.boundary_measure() * (1.0 - lambda) * lb,
                1.0,
                1.0,
            ),
            LossKind::MagnitudeNormalized => (s.num_i / s.den_i + s.num_b / s.den_b, s.den_i / s.n_i, s.den_b / s.n_b),
        };
        let breakdown = LossBreakdown {
            interior: li,
            boundary: lb,
            interior_denominator: den_i,
            boundary_denominator: den_b,
            total,
            log_total: total.ln(),
        };
        (breakdown, total)
    }

    fn needs_magnitudes(&self) -> bool {
        self.strategy.kind == LossKind::MagnitudeNormalized
    }

    /// Loss components at `params`, without gradient.
    pub fn breakdown(&self, params: &[f64]) -> Result<LossBreakdown> {
        let out_i = self
            .network
            .forward_batch(params, &self.interior.points, self.interior.order)?;
        let out_b = self
            .network
            .forward_batch(params, &self.boundary.points, self.boundary.order)?;
        let r_i = self.interior.residuals(&out_i);
        let r_b = self.boundary.residuals(&out_b);
        let m_i = self.needs_magnitudes().then(|| self.interior.magnitudes(&out_i));
        let sums = self.sums(&r_i, m_i.as_deref(), &r_b);
        let (b, _) = self.assemble(&sums);
        check_finite(&b)?;
        Ok(b)
    }

    /// Loss components on another collocation set.
    pub fn breakdown_on(&self, params: &[f64], points: &CollocationSet) -> Result<LossBreakdown> {
        let mut other = self.clone();
        other.set_points(points)?;
        other.breakdown(params)
    }

    /// The untransformed total and its gradient.
    pub fn total_with_gradient(&self, params: &[f64]) -> Result<(LossBreakdown, Vec<f64>)> {
        let p = self.strategy.p;
        let fw_i = self
            .network
            .forward_batch_taped(params, &self.interior.points, self.interior.order)?;
        let fw_b = self
            .network
            .forward_batch_taped(params, &self.boundary.points, self.boundary.order)?;
        let (out_i, out_b) = (fw_i.output(), fw_b.output());
        let r_i = self.interior.residuals(out_i);
        let r_b = self.boundary.residuals(out_b);
        let m_i = self.needs_magnitudes().then(|| self.interior.magnitudes(out_i));
        let s = self.sums(&r_i, m_i.as_deref(), &r_b);
        let (breakdown, _) = self.assemble(&s);
        check_finite(&breakdown)?;

        // d total / d num_i, d num_b, d den_i.
        let (w_num_i, w_num_b, w_den_i) = match self.strategy.kind {
            LossKind::Original => (1.0 / s.n_i, 1.0 / s.n_b, 0.0),
            LossKind::OptimalWeight { lambda } => (
                self.problem.interior_measure() * lambda / s.n_i,
                self.problem.boundary_measure() * (1.0 - lambda) / s.n_b,
                0.0,
            ),
            LossKind::MagnitudeNormalized => (
                1.0 / s.den_i,
                1.0 / s.den_b,
                if s.den_i_active {
                    -s.num_i / (s.den_i * s.den_i)
                } else {
                    0.0
                },
            ),
        };

        let mut grad = vec![0.0; params.len()];
        let n_i = self.interior.len();
        let mut seeds = vec![0.0; out_i.layout().count() * n_i];
        for (c, a) in self.interior.channels.iter().zip(&self.interior.coeffs) {
            let row = &mut seeds[c * n_i..(c + 1) * n_i];
            let u = out_i.channel(*c);
            for k in 0..n_i {
                let mut g = w_num_i * power_derivative(r_i[k], p) * a[k];
                if w_den_i != 0.0 {
                    let m = m_i.as_ref().expect("magnitudes computed")[k];
                    let term = a[k] * u[k];
                    g += w_den_i * power_derivative(m, p) * sign(term) * a[k];
                }
                row[k] += g;
            }
        }
        self.network.backward_batch(params, &fw_i, &seeds, &mut grad)?;

        let n_b = self.boundary.len();
        let mut seeds = vec![0.0; out_b.layout().count() * n_b];
        for (c, a) in self.boundary.channels.iter().zip(&self.boundary.coeffs) {
            let row = &mut seeds[c * n_b..(c + 1) * n_b];
            for k in 0..n_b {
                row[k] += w_num_b * power_derivative(r_b[k], p) * a[k];
            }
        }
        self.network.backward_batch(params, &fw_b, &seeds, &mut grad)?;
        Ok((breakdown, grad))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_finite(b: &LossBreakdown) -> Result<()> {
    if !b.total.is_finite() || !b.interior.is_finite() || !b.boundary.is_finite() {
        return Err(Error::NonFinite(format!("loss components {b:?}")));
    }
    Ok(())
}

impl Objective for PinnObjective {
    fn evaluate(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (b, mut grad) = self.total_with_gradient(params)?;
        if !self.log {
            return Ok((b.total, grad));
        }
        if b.total == 0.0 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return Ok((f64::NEG_INFINITY, grad));
        }
        let inv = 1.0 / b.total;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((log_objective(b.total)?, grad))
    }
}
