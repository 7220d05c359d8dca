//! Model problems with analytic solutions.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{JetField, LinearPdeProblem, MagnitudeBounds, MultiIndex, OperatorTerm};
use crate::error::{Error, Result};
use crate::net::Jet;

/// Width parameter of the Gaussian peak.
const PEAK_SHARPNESS: f64 = 1000.0;

fn check_multiple_of_pi(omega: f64) -> Result<()> {
    let k = omega / PI;
    if !(omega > 0.0 && omega.is_finite()) || (k - k.round()).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency {omega} is not a positive multiple of pi"
        )));
    }
    Ok(())
}

fn laplacian_terms(dim: usize) -> Vec<OperatorTerm> {
    (0..dim)
        .map(|i| OperatorTerm::constant(1.0, MultiIndex::second(dim, i, i)))
        .collect()
}

fn dirichlet(dim: usize) -> Vec<OperatorTerm> {
    vec![OperatorTerm::constant(1.0, MultiIndex::zero(dim))]
}

/// Jet of a separable product `prod_k f_k(x_k)` from per-coordinate
/// `(f, f', f'')`.
fn product_jet(factors: &[(f64, f64, f64)]) -> Jet {
    let d = factors.len();
    let prod_except = |skip: &[usize]| -> f64 {
        factors
            .iter()
            .enumerate()
            .filter(|(m, _)| !skip.contains(m))
            .map(|(_, f)| f.0)
            .product()
    };
    let value = prod_except(&[]);
    let first: Vec<f64> = (0..d).map(|k| factors[k].1 * prod_except(&[k])).collect();
    let mut second = vec![0.0; d * d];
    for k in 0..d {
        second[k * d + k] = factors[k].2 * prod_except(&[k]);
        for l in k + 1..d {
            let v = factors[k].1 * factors[l].1 * prod_except(&[k, l]);
            second[k * d + l] = v;
            second[l * d + k] = v;
        }
    }
    Jet::new(value, first, second)
}

/// Harmonic eigenfunction `exp(-w1 x1) prod_{i>=2} sin(w_i x_i)` with
/// `w1 = sqrt(sum w_i^2)`, in dimension `frequencies.len() + 1`. Boundary data
/// is the solution itself.
pub fn laplace_eigen(frequencies: &[f64]) -> Result<LinearPdeProblem> {
    if frequencies.is_empty() {
        return Err(Error::InvalidParameter("at least one frequency is required".into()));
    }
    for &w in frequencies {
        check_multiple_of_pi(w)?;
    }
    let dim = frequencies.len() + 1;
    let w1 = frequencies.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut omegas = vec![w1];
    omegas.extend_from_slice(frequencies);
    let omegas: Arc<[f64]> = omegas.into();

    let jet_omegas = omegas.clone();
    let solution: JetField = Arc::new(move |x| {
        let factors: Vec<(f64, f64, f64)> = x
            .iter()
            .zip(jet_omegas.iter())
            .enumerate()
            .map(|(k, (&xk, &w))| {
                if k == 0 {
                    let e = (-w * xk).exp();
                    (e, -w * e, w * w * e)
                } else {
                    let (s, c) = (w * xk).sin_cos();
                    (s, w * c, -w * w * s)
                }
            })
            .collect();
        product_jet(&factors)
    });
    let data_omegas = omegas.clone();
    let data = Arc::new(move |x: &[f64]| {
        (-data_omegas[0] * x[0]).exp()
            * x[1..]
                .iter()
                .zip(&data_omegas[1..])
                .map(|(xi, w)| (w * xi).sin())
                .product::<f64>()
    });

    // Each trailing face integral of sin^2 contributes 1/2; sum of the
    // absolute second-derivative coefficients is 2 w1^2.
    let half_pow = 0.5f64.powi(dim as i32 - 1);
    let decay = (-2.0 * w1).exp();
    let bounds = MagnitudeBounds {
        m_interior: 2.0 * w1.powi(3) * (1.0 - decay) * half_pow,
        m_boundary: (1.0 + decay) * half_pow,
        p: 2.0,
    };
    Ok(LinearPdeProblem::new(
        "laplace_eigen",
        dim,
        laplacian_terms(dim),
        Arc::new(|_| 0.0),
        dirichlet(dim),
        data,
    )?
    .with_solution(solution)?
    .with_closed_form_bounds(bounds))
}

/// `w1` of [`laplace_eigen`] for the given trailing frequencies.
pub fn laplace_leading_frequency(frequencies: &[f64]) -> f64 {
    frequencies.iter().map(|w| w * w).sum::<f64>().sqrt()
}

/// Poisson problem on the unit square with solution
/// `cos(w x) sin(w y)` and source `-2 w^2 cos(w x) sin(w y)`.
pub fn poisson_eigen(omega: f64) -> Result<LinearPdeProblem> {
    check_multiple_of_pi(omega)?;
    let w = omega;
    let u = move |x: &[f64]| (w * x[0]).cos() * (w * x[1]).sin();
    let solution: JetField = Arc::new(move |x| {
        let (sx, cx) = (w * x[0]).sin_cos();
        let (sy, cy) = (w * x[1]).sin_cos();
        product_jet(&[(cx, -w * sx, -w * w * cx), (sy, w * cy, -w * w * sy)])
    });
    let bounds = MagnitudeBounds {
        m_interior: w.powi(4),
        m_boundary: 1.0,
        p: 2.0,
    };
    Ok(LinearPdeProblem::new(
        "poisson_eigen",
        2,
        laplacian_terms(2),
        Arc::new(move |x| -2.0 * w * w * u(x)),
        dirichlet(2),
        Arc::new(u),
    )?
    .with_solution(solution)?
    .with_closed_form_bounds(bounds))
}

/// Poisson problem whose solution `sin(pi x) + exp(-1000 |x - c|^2) - 1/2`,
/// `c = (1/2, 1/2)`, has a sharp peak at the centre of the square.
pub fn poisson_peak() -> Result<LinearPdeProblem> {
    let a = PEAK_SHARPNESS;
    let peak = move |x: &[f64]| {
        let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
        (dx, dy, (-a * (dx * dx + dy * dy)).exp())
    };
    let u = move |x: &[f64]| {
        let (_, _, g) = peak(x);
        (PI * x[0]).sin() + g - 0.5
    };
    let source = move |x: &[f64]| {
        let (dx, dy, g) = peak(x);
        -PI * PI * (PI * x[0]).sin() + g * (4.0 * a * a * (dx * dx + dy * dy) - 4.0 * a)
    };
    let solution: JetField = Arc::new(move |x| {
        let (dx, dy, g) = peak(x);
        let (s, c) = (PI * x[0]).sin_cos();
        let gx = -2.0 * a * dx * g;
        let gy = -2.0 * a * dy * g;
        let gxx = (4.0 * a * a * dx * dx - 2.0 * a) * g;
        let gyy = (4.0 * a * a * dy * dy - 2.0 * a) * g;
        let gxy = 4.0 * a * a * dx * dy * g;
        Jet::new(
            s + g - 0.5,
            vec![PI * c + gx, gy],
            vec![-PI * PI * s + gxx, gxy, gxy, gyy],
        )
    });
    LinearPdeProblem::new(
        "poisson_peak",
        2,
        laplacian_terms(2),
        Arc::new(source),
        dirichlet(2),
        Arc::new(u),
    )?
    .with_solution(solution)
}

/// Which closed form to attach to [`convection_diffusion`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvectionSolution {
    /// `A + B exp(-v x / alpha)` with `A`, `B` fitted to both boundary values.
    Exact,
    /// `exp(-v x / alpha) / (1 - exp(-v / alpha)) - 1/2`, which solves the
    /// equation but misses `u(0) = 1/2` by about `exp(-v / alpha)`.
    Legacy,
}

/// `v u' + alpha u'' = 0` on `[0, 1]` with `u(0) = 1/2`, `u(1) = -1/2`.
pub fn convection_diffusion(velocity: f64, diffusivity: f64, variant: ConvectionSolution) -> Result<LinearPdeProblem> {
    if !(diffusivity > 0.0 && diffusivity.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "diffusivity must be positive, got {diffusivity}"
        )));
    }
    if !(velocity > 0.0 && velocity.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "velocity must be positive, got {velocity}"
        )));
    }
    let (v, alpha) = (velocity, diffusivity);
    let k = v / alpha;
    let b = 1.0 / (1.0 - (-k).exp());
    let a = match variant {
        ConvectionSolution::Exact => 0.5 - b,
        ConvectionSolution::Legacy => -0.5,
    };
    let solution: JetField = Arc::new(move |x| {
        let e = b * (-k * x[0]).exp();
        Jet::new(a + e, vec![-k * e], vec![k * k * e])
    });
    let interior = vec![
        OperatorTerm::constant(v, MultiIndex::first(1, 0)),
        OperatorTerm::constant(alpha, MultiIndex::second(1, 0, 0)),
    ];
    let data = Arc::new(|x: &[f64]| if x[0] < 0.5 { 0.5 } else { -0.5 });
    let problem = LinearPdeProblem::new(
        "convection_diffusion",
        1,
        interior,
        Arc::new(|_| 0.0),
        dirichlet(1),
        data,
    )?
    .with_solution(solution)?;
    Ok(match variant {
        ConvectionSolution::Exact => problem.with_closed_form_bounds(MagnitudeBounds {
            m_interior: 2.0 * b * b * v.powi(3) / alpha * (1.0 - (-2.0 * k).exp()),
            m_boundary: 0.5,
            p: 2.0,
        }),
        ConvectionSolution::Legacy => problem,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{estimate_magnitude_bounds, optimal_lambda};
    use crate::sampling::{sample_boundary, sample_interior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_problems() -> Vec<LinearPdeProblem> {
        vec![
            laplace_eigen(&[PI]).unwrap(),
            laplace_eigen(&[2.0 * PI]).unwrap(),
            laplace_eigen(&[10.0 * PI]).unwrap(),
            laplace_eigen(&[4.0 * PI, PI]).unwrap(),
            laplace_eigen(&[4.0 * PI, PI, PI, PI, PI]).unwrap(),
            poisson_eigen(PI).unwrap(),
            poisson_eigen(6.0 * PI).unwrap(),
            poisson_peak().unwrap(),
            convection_diffusion(1.0, 0.1, ConvectionSolution::Exact).unwrap(),
            convection_diffusion(1.0, 1e-2, ConvectionSolution::Exact).unwrap(),
            convection_diffusion(1.0, 1e-4, ConvectionSolution::Exact).unwrap(),
        ]
    }

    #[test]
    fn exact_solutions_have_vanishing_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for p in all_problems() {
            let u = p.solution().unwrap().clone();
            for x in sample_interior(p.dim(), 1000, &mut rng).unwrap().iter() {
                let r = p.interior_residual(&u(x), x).unwrap();
                assert!(r.abs() <= 1e-9, "{}: interior residual {r}", p.name());
            }
            for x in sample_boundary(p.dim(), 1000, &mut rng).unwrap().iter() {
                let r = p.boundary_residual(&u(x), x).unwrap();
                assert!(r.abs() <= 1e-9, "{}: boundary residual {r}", p.name());
            }
        }
    }

    #[test]
    fn analytic_jets_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in all_problems().into_iter().filter(|p| p.dim() <= 3) {
            let u = p.solution().unwrap().clone();
            let d = p.dim();
            for x in sample_interior(d, 20, &mut rng).unwrap().iter() {
                let jet = u(x);
                let h = 1e-6;
                for i in 0..d {
                    let mut xp = x.to_vec();
                    xp[i] += h;
                    let mut xm = x.to_vec();
                    xm[i] -= h;
                    let (jp, jm) = (u(&xp), u(&xm));
                    let scale = 1.0 + jet.first()[i].abs();
                    assert!(
                        ((jp.value() - jm.value()) / (2.0 * h) - jet.first()[i]).abs()
                            < 1e-4 * scale * (1.0 + jet.hessian().iter().fold(0.0f64, |m, v| m.max(v.abs())) * 1e-3)
                    );
                    for j in 0..d {
                        let fd = (jp.first()[j] - jm.first()[j]) / (2.0 * h);
                        let s = 1.0 + jet.second(i, j).abs();
                        assert!(
                            (fd - jet.second(i, j)).abs() < 1e-4 * s * 1e2,
                            "{} d2u/dx{i}dx{j}",
                            p.name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn leading_frequency() {
        assert!((laplace_leading_frequency(&[4.0 * PI, PI]) - PI * 17f64.sqrt()).abs() < 1e-12);
        assert_eq!(laplace_eigen(&[4.0 * PI, PI]).unwrap().dim(), 3);
    }

    #[test]
    fn invalid_parameters() {
        assert!(laplace_eigen(&[]).is_err());
        assert!(laplace_eigen(&[1.0]).is_err());
        assert!(poisson_eigen(-PI).is_err());
        assert!(convection_diffusion(1.0, 0.0, ConvectionSolution::Exact).is_err());
        assert!(convection_diffusion(1.0, -1.0, ConvectionSolution::Exact).is_err());
    }

    #[test]
    fn laplace_residual_and_integrands() {
        let w = 3.0 * PI;
        let p = laplace_eigen(&[w]).unwrap();
        let u = p.solution().unwrap();
        let x = [0.37, 0.81];
        let expected = 4.0 * w.powi(4) * (-2.0 * w * x[0]).exp() * (w * x[1]).sin().powi(2);
        let got = p.magnitude_integrand_interior(&u(&x), &x, 2.0, false).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);

        let edge = [0.0, 0.25];
        let got = p.magnitude_integrand_boundary(&u(&edge), &edge, 2.0).unwrap();
        assert!((got - (w / 4.0).sin().powi(2)).abs() < 1e-14);
        let floor = [0.4, 0.0];
        assert_eq!(p.magnitude_integrand_boundary(&u(&floor), &floor, 2.0).unwrap(), 0.0);

        let pi_problem = laplace_eigen(&[PI]).unwrap();
        let side = [0.0, 0.5];
        let r = pi_problem
            .boundary_residual(&pi_problem.solution().unwrap()(&side), &side)
            .unwrap();
        assert!(r.abs() <= 1e-12);
    }

    #[test]
    fn zero_jet_integrands() {
        let p = poisson_eigen(2.0 * PI).unwrap();
        let x = [0.3, 0.6];
        let zero = Jet::zero(2);
        assert_eq!(p.magnitude_integrand_interior(&zero, &x, 2.0, false).unwrap(), 0.0);
        let f = p.source(&x);
        assert!((p.magnitude_integrand_interior(&zero, &x, 2.0, true).unwrap() - f * f).abs() < 1e-12);
        assert_eq!(p.interior_residual(&zero, &x).unwrap(), -f);
    }

    #[test]
    fn convection_diffusion_boundary_values() {
        let p = convection_diffusion(1.0, 0.1, ConvectionSolution::Exact).unwrap();
        let u = p.solution().unwrap();
        assert!((u(&[0.0]).value() - 0.5).abs() <= 1e-15);
        assert!((u(&[1.0]).value() + 0.5).abs() <= 1e-15);
        let r = p.interior_residual(&u(&[0.5]), &[0.5]).unwrap();
        assert!(r.abs() <= 1e-9);

        let legacy = convection_diffusion(1.0, 0.1, ConvectionSolution::Legacy).unwrap();
        let miss = legacy.solution().unwrap()(&[0.0]).value() - 0.5;
        assert!((miss - (-10f64).exp() / (1.0 - (-10f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn poisson_closed_form_lambda() {
        let p = poisson_eigen(PI).unwrap();
        let lam = optimal_lambda(&p.closed_form_bounds().unwrap()).unwrap();
        assert!((lam - 1.0 / (1.0 + PI.powi(4))).abs() < 1e-15);
        assert!((lam - 1.02e-2).abs() < 0.02 * 1.02e-2);
    }

    #[test]
    fn convection_closed_form_matches_monte_carlo() {
        let p = convection_diffusion(1.0, 0.1, ConvectionSolution::Exact).unwrap();
        let u = p.solution().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mc = estimate_magnitude_bounds(&p, &*u, &mut rng, 200_000, 10_000, 2.0, false).unwrap();
        let cf = p.closed_form_bounds().unwrap();
        assert!((mc.m_interior / cf.m_interior - 1.0).abs() < 0.03);
        assert!((mc.m_boundary / cf.m_boundary - 1.0).abs() < 0.03);
    }
}
