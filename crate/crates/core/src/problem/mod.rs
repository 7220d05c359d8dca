//! Linear boundary-value problems on the unit hypercube `[0,1]^d`.
//!
//! A problem is written in residual form
//!
//! ```text
//! sum_j a_j(x) D^{b_j} u(x) - F(x) = 0   in the open cube
//! sum_j c_j(x) D^{g_j} u(x) - G(x) = 0   on its boundary
//! ```
//!
//! with each term an [`OperatorTerm`] (a coefficient function and a
//! [`MultiIndex`]). Besides residuals this module provides the magnitude
//! integrands that bound the losses of near-solutions, their Monte-Carlo
//! integrals, and the loss weights derived from them.

mod factories;

pub use factories::{
    convection_diffusion, laplace_eigen, laplace_leading_frequency, poisson_eigen, poisson_peak, ConvectionSolution,
};

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Jet;
use crate::sampling::{sample_boundary, sample_interior};

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type JetField = Arc<dyn Fn(&[f64]) -> Jet + Send + Sync>;

/// Number of random interior points used to check an analytic solution.
const CONSISTENCY_POINTS: usize = 100;
const CONSISTENCY_TOLERANCE: f64 = 1e-9;

/// Partial derivative orders per coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(orders: Vec<usize>) -> Self {
        Self(orders)
    }

    /// The identity (no differentiation).
    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `d / dx_i`.
    pub fn first(dim: usize, i: usize) -> Self {
        let mut o = vec![0; dim];
        o[i] = 1;
        Self(o)
    }

    /// `d^2 / dx_i dx_j`.
    pub fn second(dim: usize, i: usize, j: usize) -> Self {
        let mut o = vec![0; dim];
        o[i] += 1;
        o[j] += 1;
        Self(o)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn orders(&self) -> &[usize] {
        &self.0
    }

    /// Total order `|b|`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }
}

/// One term `a(x) D^b u(x)` of a linear operator.
#[derive(Clone)]
pub struct OperatorTerm {
    pub coeff: ScalarField,
    pub index: MultiIndex,
}

impl OperatorTerm {
    pub fn new(coeff: ScalarField, index: MultiIndex) -> Self {
        Self { coeff, index }
    }

    pub fn constant(c: f64, index: MultiIndex) -> Self {
        Self {
            coeff: Arc::new(move |_| c),
            index,
        }
    }

    fn scaled(&self, c: f64) -> Self {
        let coeff = self.coeff.clone();
        Self {
            coeff: Arc::new(move |x| c * coeff(x)),
            index: self.index.clone(),
        }
    }
}

impl fmt::Debug for OperatorTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorTerm")
            .field("index", &self.index)
            .finish_non_exhaustive()
    }
}

/// Integrated magnitudes `M_I`, `M_B` of the operator terms of a function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeBounds {
    pub m_interior: f64,
    pub m_boundary: f64,
    pub p: f64,
}

#[derive(Clone)]
pub struct LinearPdeProblem {
    name: String,
    dim: usize,
    interior_terms: Vec<OperatorTerm>,
    source: ScalarField,
    boundary_terms: Vec<OperatorTerm>,
    boundary_data: ScalarField,
    solution: Option<JetField>,
    closed_form: Option<MagnitudeBounds>,
}

impl fmt::Debug for LinearPdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearPdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("interior_terms", &self.interior_terms)
            .field("boundary_terms", &self.boundary_terms)
            .field("has_solution", &self.solution.is_some())
            .field("closed_form", &self.closed_form)
            .finish()
    }
}

fn max_order(terms: &[OperatorTerm]) -> usize {
    terms.iter().map(|t| t.index.order()).max().unwrap_or(0)
}

fn apply_terms(terms: &[OperatorTerm], jet: &Jet, x: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for t in terms {
        acc += (t.coeff)(x) * jet.derivative(&t.index)?;
    }
    Ok(acc)
}

fn magnitude_sum(terms: &[OperatorTerm], jet: &Jet, x: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for t in terms {
        acc += ((t.coeff)(x) * jet.derivative(&t.index)?).abs();
    }
    Ok(acc)
}

impl LinearPdeProblem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        interior_terms: Vec<OperatorTerm>,
        source: ScalarField,
        boundary_terms: Vec<OperatorTerm>,
        boundary_data: ScalarField,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if interior_terms.is_empty() || boundary_terms.is_empty() {
            return Err(Error::InvalidParameter(
                "a problem needs at least one interior and one boundary term".into(),
            ));
        }
        for t in interior_terms.iter().chain(&boundary_terms) {
            if t.index.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.index.dim(),
                });
            }
            if t.index.order() > 2 {
                return Err(Error::UnsupportedOrder(t.index.order()));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            interior_terms,
            source,
            boundary_terms,
            boundary_data,
            solution: None,
            closed_form: None,
        })
    }

    /// Attaches an analytic solution after checking that it satisfies the
    /// interior equation at random points.
    pub fn with_solution(mut self, solution: JetField) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let points = sample_interior(self.dim, CONSISTENCY_POINTS, &mut rng)?;
        for x in points.iter() {
            let r = self.interior_residual(&solution(x), x)?;
            if !(r.abs() <= CONSISTENCY_TOLERANCE) {
                return Err(Error::InconsistentSolution(r));
            }
        }
        self.solution = Some(solution);
        Ok(self)
    }

    /// Closed-form magnitude bounds of the analytic solution, when known.
    pub fn with_closed_form_bounds(mut self, bounds: MagnitudeBounds) -> Self {
        self.closed_form = Some(bounds);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interior_terms(&self) -> &[OperatorTerm] {
        &self.interior_terms
    }

    pub fn boundary_terms(&self) -> &[OperatorTerm] {
        &self.boundary_terms
    }

    pub fn source(&self, x: &[f64]) -> f64 {
        (self.source)(x)
    }

    pub fn boundary_data(&self, x: &[f64]) -> f64 {
        (self.boundary_data)(x)
    }

    pub fn solution(&self) -> Option<&JetField> {
        self.solution.as_ref()
    }

    pub fn require_solution(&self) -> Result<&JetField> {
        self.solution.as_ref().ok_or_else(|| Error::NoAnalyticSolution {
            problem: self.name.clone(),
        })
    }

    pub fn closed_form_bounds(&self) -> Option<MagnitudeBounds> {
        self.closed_form
    }

    /// Highest derivative order used by the interior operator.
    pub fn interior_order(&self) -> usize {
        max_order(&self.interior_terms)
    }

    pub fn boundary_order(&self) -> usize {
        max_order(&self.boundary_terms)
    }

    /// True when the boundary operator only involves point values.
    pub fn is_dirichlet(&self) -> bool {
        self.boundary_order() == 0
    }

    /// `|Omega|` of the unit hypercube.
    pub fn interior_measure(&self) -> f64 {
        1.0
    }

    /// `|dOmega|` of the unit hypercube: `2d` unit faces.
    pub fn boundary_measure(&self) -> f64 {
        2.0 * self.dim as f64
    }

    pub fn interior_residual(&self, jet: &Jet, x: &[f64]) -> Result<f64> {
        Ok(apply_terms(&self.interior_terms, jet, x)? - self.source(x))
    }

    pub fn boundary_residual(&self, jet: &Jet, x: &[f64]) -> Result<f64> {
        Ok(apply_terms(&self.boundary_terms, jet, x)? - self.boundary_data(x))
    }

    /// `[sum_j |a_j D^{b_j} u| (+ |F|)]^p`.
    pub fn magnitude_integrand_interior(&self, jet: &Jet, x: &[f64], p: f64, include_source: bool) -> Result<f64> {
        let mut m = magnitude_sum(&self.interior_terms, jet, x)?;
        if include_source {
            m += self.source(x).abs();
        }
        Ok(m.powf(p))
    }

    /// `[sum_j |c_j D^{g_j} u|]^p`.
    pub fn magnitude_integrand_boundary(&self, jet: &Jet, x: &[f64], p: f64) -> Result<f64> {
        Ok(magnitude_sum(&self.boundary_terms, jet, x)?.powf(p))
    }

    /// The problem with the interior equation multiplied by `c1` and the
    /// boundary equation by `c2`. Solutions are unchanged.
    pub fn scaled(&self, c1: f64, c2: f64) -> Self {
        let source = self.source.clone();
        let data = self.boundary_data.clone();
        Self {
            name: self.name.clone(),
            dim: self.dim,
            interior_terms: self.interior_terms.iter().map(|t| t.scaled(c1)).collect(),
            source: Arc::new(move |x| c1 * source(x)),
            boundary_terms: self.boundary_terms.iter().map(|t| t.scaled(c2)).collect(),
            boundary_data: Arc::new(move |x| c2 * data(x)),
            solution: self.solution.clone(),
            closed_form: self.closed_form.map(|b| MagnitudeBounds {
                m_interior: c1.abs().powf(b.p) * b.m_interior,
                m_boundary: c2.abs().powf(b.p) * b.m_boundary,
                p: b.p,
            }),
        }
    }
}

/// Monte-Carlo estimate of `M_I`, `M_B` for the function whose jets
/// `solution` returns: the cube measures times the sample means of the
/// magnitude integrands over uniform interior and boundary samples.
pub fn estimate_magnitude_bounds<R: Rng + ?Sized>(
    problem: &LinearPdeProblem,
    solution: &dyn Fn(&[f64]) -> Jet,
    rng: &mut R,
    n_interior: usize,
    n_boundary: usize,
    p: f64,
    include_source: bool,
) -> Result<MagnitudeBounds> {
    let interior = sample_interior(problem.dim(), n_interior, rng)?;
    let boundary = sample_boundary(problem.dim(), n_boundary, rng)?;
    let mut sum_i = 0.0;
    for x in interior.iter() {
        sum_i += problem.magnitude_integrand_interior(&solution(x), x, p, include_source)?;
    }
    let mut sum_b = 0.0;
    for x in boundary.iter() {
        sum_b += problem.magnitude_integrand_boundary(&solution(x), x, p)?;
    }
    Ok(MagnitudeBounds {
        m_interior: problem.interior_measure() * sum_i / n_interior as f64,
        m_boundary: problem.boundary_measure() * sum_b / n_boundary as f64,
        p,
    })
}

/// `lambda = M_B / (M_I + M_B)`.
pub fn optimal_lambda(bounds: &MagnitudeBounds) -> Result<f64> {
    optimal_weights(bounds).map(|(lambda, _)| lambda)
}

/// `(lambda, 1 - lambda)`, each formed as its own quotient so the
/// complement keeps full relative precision when `lambda` is close to 1.
pub fn optimal_weights(bounds: &MagnitudeBounds) -> Result<(f64, f64)> {
    let MagnitudeBounds {
        m_interior, m_boundary, ..
    } = *bounds;
    if !(m_interior.is_finite() && m_boundary.is_finite()) || m_interior < 0.0 || m_boundary < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "magnitude bounds must be finite and non-negative, got ({m_interior}, {m_boundary})"
        )));
    }
    let sum = m_interior + m_boundary;
    if sum == 0.0 {
        return Err(Error::DegenerateBounds);
    }
    Ok((m_boundary / sum, m_interior / sum))
}

/// The weight under which the weighted loss is proportional to the plain
/// sum of interior and boundary mean losses: `|dOmega| / (|dOmega| + |Omega|)`.
pub fn lambda_original(problem: &LinearPdeProblem) -> f64 {
    let (omega, boundary) = (problem.interior_measure(), problem.boundary_measure());
    boundary / (boundary + omega)
}

/// Loss level `delta` below which a candidate of a well-posed linear problem
/// (Lipschitz constant `C`) is guaranteed to be within `epsilon`:
///
/// `delta = eps^p [C (c1^{-1/p} |Omega|^{1-1/p} + c2^{-1/p} |dOmega|^{1-1/p})]^{-p}`.
#[allow(clippy::too_many_arguments)]
pub fn delta_bound(
    epsilon: f64,
    p: f64,
    lipschitz: f64,
    measure_interior: f64,
    measure_boundary: f64,
    c1: f64,
    c2: f64,
) -> Result<f64> {
    let named = [
        ("epsilon", epsilon),
        ("lipschitz constant", lipschitz),
        ("interior measure", measure_interior),
        ("boundary measure", measure_boundary),
        ("c1", c1),
        ("c2", c2),
    ];
    for (name, v) in named {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be at least 1, got {p}")));
    }
    let e = 1.0 - 1.0 / p;
    let inner = c1.powf(-1.0 / p) * measure_interior.powf(e) + c2.powf(-1.0 / p) * measure_boundary.powf(e);
    Ok(epsilon.powf(p) * (lipschitz * inner).powf(-p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dirichlet_square(g: f64) -> LinearPdeProblem {
        LinearPdeProblem::new(
            "const",
            2,
            vec![
                OperatorTerm::constant(1.0, MultiIndex::second(2, 0, 0)),
                OperatorTerm::constant(1.0, MultiIndex::second(2, 1, 1)),
            ],
            Arc::new(|_| 0.0),
            vec![OperatorTerm::constant(1.0, MultiIndex::zero(2))],
            Arc::new(move |_| g),
        )
        .unwrap()
    }

    #[test]
    fn multi_index_orders() {
        assert_eq!(MultiIndex::second(3, 1, 1).orders(), &[0, 2, 0]);
        assert_eq!(MultiIndex::second(3, 0, 2).order(), 2);
        assert_eq!(MultiIndex::first(2, 1).order(), 1);
        assert_eq!(MultiIndex::zero(4).order(), 0);
    }

    #[test]
    fn construction_rejects_bad_terms() {
        let e = LinearPdeProblem::new(
            "x",
            2,
            vec![],
            Arc::new(|_| 0.0),
            vec![OperatorTerm::constant(1.0, MultiIndex::zero(2))],
            Arc::new(|_| 0.0),
        );
        assert!(e.is_err());
        let e = LinearPdeProblem::new(
            "x",
            2,
            vec![OperatorTerm::constant(1.0, MultiIndex::new(vec![3, 0]))],
            Arc::new(|_| 0.0),
            vec![OperatorTerm::constant(1.0, MultiIndex::zero(2))],
            Arc::new(|_| 0.0),
        );
        assert!(matches!(e, Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn inconsistent_solution_is_rejected() {
        let p = dirichlet_square(1.0);
        // x^2 is not harmonic.
        let bad: JetField = Arc::new(|x| Jet::new(x[0] * x[0], vec![2.0 * x[0], 0.0], vec![2.0, 0.0, 0.0, 0.0]));
        assert!(matches!(p.with_solution(bad), Err(Error::InconsistentSolution(_))));
    }

    #[test]
    fn dirichlet_boundary_residuals() {
        let p = dirichlet_square(0.75);
        let x = [0.0, 0.3];
        assert_eq!(p.boundary_residual(&Jet::constant(2, 0.75), &x).unwrap(), 0.0);
        assert_eq!(p.boundary_residual(&Jet::constant(2, 1.75), &x).unwrap(), 1.0);
        assert_eq!(
            p.magnitude_integrand_boundary(&Jet::constant(2, -3.0), &x, 2.0)
                .unwrap(),
            9.0
        );
        assert_eq!(
            p.magnitude_integrand_boundary(&Jet::constant(2, -3.0), &x, 1.0)
                .unwrap(),
            3.0
        );
    }

    #[test]
    fn constant_boundary_data_bound() {
        let p = dirichlet_square(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b =
            estimate_magnitude_bounds(&p, &|_x| Jet::constant(2, 1.0), &mut rng, 1000, 100_000, 2.0, false).unwrap();
        assert!((b.m_boundary - 4.0).abs() < 0.02 * 4.0);
        assert_eq!(b.m_interior, 0.0);
    }

    #[test]
    fn lambda_values() {
        let b = MagnitudeBounds {
            m_interior: 3.0,
            m_boundary: 3.0,
            p: 2.0,
        };
        assert_eq!(optimal_lambda(&b).unwrap(), 0.5);
        let zero = MagnitudeBounds {
            m_interior: 0.0,
            m_boundary: 0.0,
            p: 2.0,
        };
        assert!(matches!(optimal_lambda(&zero), Err(Error::DegenerateBounds)));

        // 1 - lambda would keep only about seven digits here.
        let skewed = MagnitudeBounds {
            m_interior: 1.5e-9,
            m_boundary: 1.0,
            p: 2.0,
        };
        let (lambda, complement) = optimal_weights(&skewed).unwrap();
        assert_eq!(lambda, 1.0 / (1.0 + 1.5e-9));
        assert!((complement / (1.5e-9 / (1.0 + 1.5e-9)) - 1.0).abs() < 1e-15);

        assert_eq!(lambda_original(&dirichlet_square(1.0)), 0.8);
        let cube = laplace_eigen(&[PI, PI]).unwrap();
        assert!((lambda_original(&cube) - 6.0 / 7.0).abs() < 1e-15);
        let line = convection_diffusion(1.0, 0.1, ConvectionSolution::Exact).unwrap();
        assert!((lambda_original(&line) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn delta_bound_examples() {
        assert!((delta_bound(1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        // p = 1: the measures drop out.
        let d = delta_bound(0.3, 1.0, 2.0, 5.0, 7.0, 0.5, 4.0).unwrap();
        assert!((d - 0.3 / (2.0 * (1.0 / 0.5 + 1.0 / 4.0))).abs() < 1e-15);
        let a = delta_bound(0.1, 2.0, 3.0, 1.0, 4.0, 1.0, 1.0).unwrap();
        let b = delta_bound(0.2, 2.0, 3.0, 1.0, 4.0, 1.0, 1.0).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!(delta_bound(0.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(delta_bound(1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(delta_bound(1.0, 2.0, -1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn delta_bound_monotonicity() {
        let mut prev = 0.0;
        for k in 1..50 {
            let d = delta_bound(k as f64 * 0.01, 2.0, 1.5, 1.0, 4.0, 1.0, 1.0).unwrap();
            assert!(d > prev);
            prev = d;
        }
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let d = delta_bound(0.1, 2.0, k as f64 * 0.1, 1.0, 4.0, 1.0, 1.0).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }
}
