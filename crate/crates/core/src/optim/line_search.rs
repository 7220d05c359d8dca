//! Strong-Wolfe line search with cubic interpolation (bracketing phase
//! followed by zoom).

use super::dot;
use crate::autodiff::{objective_gradient, Objective};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchParams {
    pub c1: f64,
    pub c2: f64,
    pub max_steps: usize,
}

/// An accepted step `x + alpha d`.
#[derive(Clone, Debug)]
pub struct WolfeStep {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug)]
pub enum LineSearchOutcome {
    Accepted(WolfeStep),
    /// No step satisfying both conditions was found within the budget.
    Failed,
}

#[derive(Clone)]
struct Trial {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

impl Trial {
    fn into_step(self) -> WolfeStep {
        WolfeStep {
            alpha: self.alpha,
            x: self.x,
            value: self.value,
            grad: self.grad,
        }
    }
}

struct Phi<'a, O: ?Sized> {
    objective: &'a O,
    x: &'a [f64],
    d: &'a [f64],
    evaluations: &'a mut usize,
}

impl<O: Objective + ?Sized> Phi<'_, O> {
    /// `phi(alpha)`; non-finite evaluations come back as `+inf` so the
    /// search retreats from them.
    fn eval(&mut self, alpha: f64) -> Result<Trial> {
        let x: Vec<f64> = self.x.iter().zip(self.d).map(|(xi, di)| xi + alpha * di).collect();
        *self.evaluations += 1;
        match objective_gradient(self.objective, &x) {
            Ok((value, grad)) => {
                let slope = dot(&grad, self.d);
                Ok(Trial {
                    alpha,
                    value,
                    slope,
                    x,
                    grad,
                })
            }
            Err(Error::NonFinite(_)) => Ok(Trial {
                alpha,
                value: f64::INFINITY,
                slope: f64::NAN,
                x,
                grad: Vec::new(),
            }),
            Err(e) => Err(e),
        }
    }
}

/// Minimizer of the cubic through `(a, fa, ga)` and `(b, fb, gb)`, kept
/// inside the middle 80% of the interval; bisection when undefined.
fn cubic_step(a: &Trial, b: &Trial) -> f64 {
    let (lo, hi) = (a.alpha.min(b.alpha), a.alpha.max(b.alpha));
    let width = hi - lo;
    let bisect = 0.5 * (lo + hi);
    if !(a.value.is_finite() && b.value.is_finite() && a.slope.is_finite() && b.slope.is_finite()) {
        return bisect;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return bisect;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    if !t.is_finite() {
        return bisect;
    }
    t.clamp(lo + 0.1 * width, hi - 0.1 * width)
}

/// Searches along descent direction `d` from `x` (value `f0`, directional
/// derivative `slope0 < 0`) for a step satisfying
/// `phi(a) <= f0 + c1 a slope0` and `|phi'(a)| <= c2 |slope0|`.
///
/// A trial with value `-inf` is accepted at once.
#[allow(clippy::too_many_arguments)]
pub fn strong_wolfe<O: Objective + ?Sized>(
    objective: &O,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    alpha_init: f64,
    params: LineSearchParams,
    evaluations: &mut usize,
) -> Result<LineSearchOutcome> {
    debug_assert!(slope0 < 0.0);
    let LineSearchParams { c1, c2, max_steps } = params;
    let mut phi = Phi {
        objective,
        x,
        d,
        evaluations,
    };
    let armijo = |t: &Trial| t.value <= f0 + c1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -c2 * slope0;

    let mut prev = Trial {
        alpha: 0.0,
        value: f0,
        slope: slope0,
        x: x.to_vec(),
        grad: Vec::new(),
    };
    let mut alpha = alpha_init;
    let mut steps = 0;
    let (mut lo, mut hi) = loop {
        if steps >= max_steps {
            return Ok(LineSearchOutcome::Failed);
        }
        steps += 1;
        let t = phi.eval(alpha)?;
        if t.value == f64::NEG_INFINITY {
            return Ok(LineSearchOutcome::Accepted(t.into_step()));
        }
        if !armijo(&t) || (prev.alpha > 0.0 && t.value >= prev.value) {
            break (prev, t);
        }
        if curvature(&t) {
            return Ok(LineSearchOutcome::Accepted(t.into_step()));
        }
        if t.slope >= 0.0 {
            break (t, prev);
        }
        alpha = 2.0 * t.alpha;
        prev = t;
    };

    while steps < max_steps {
        steps += 1;
        let a = cubic_step(&lo, &hi);
        if a == lo.alpha || a == hi.alpha {
            break;
        }
        let t = phi.eval(a)?;
        if t.value == f64::NEG_INFINITY {
            return Ok(LineSearchOutcome::Accepted(t.into_step()));
        }
        if !armijo(&t) || t.value >= lo.value {
            hi = t;
        } else {
            if curvature(&t) {
                return Ok(LineSearchOutcome::Accepted(t.into_step()));
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    Ok(LineSearchOutcome::Failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((p[0] - 3.0).powi(2), vec![2.0 * (p[0] - 3.0)]))
    }

    #[test]
    fn exact_step_on_a_parabola() {
        let mut evals = 0;
        let params = LineSearchParams {
            c1: 1e-4,
            c2: 1e-3,
            max_steps: 20,
        };
        let out = strong_wolfe(&quadratic, &[0.0], 9.0, -36.0, &[6.0], 1.0, params, &mut evals).unwrap();
        let LineSearchOutcome::Accepted(step) = out else {
            panic!("line search failed")
        };
        assert!((step.alpha - 0.5).abs() < 1e-12);
        assert!(step.value < 1e-20);
    }

    #[test]
    fn retreats_from_non_finite_values() {
        let f = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
            if p[0] > 1.0 {
                Ok((f64::NAN, vec![0.0]))
            } else {
                Ok(((p[0] - 0.5).powi(2), vec![2.0 * (p[0] - 0.5)]))
            }
        };
        let mut evals = 0;
        let params = LineSearchParams {
            c1: 1e-4,
            c2: 0.9,
            max_steps: 30,
        };
        let out = strong_wolfe(&f, &[0.0], 0.25, -1.0, &[1.0], 100.0, params, &mut evals).unwrap();
        let LineSearchOutcome::Accepted(step) = out else {
            panic!("line search failed")
        };
        assert!(step.alpha <= 1.0 && step.value < 0.25);
    }
}
