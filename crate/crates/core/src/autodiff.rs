//! Differentiable scalar objectives over a parameter vector.
//!
//! Anything the optimizers minimize implements [`Objective`]. The training
//! losses implement it with the batched network adjoint; arbitrary closures
//! can be differentiated with the scalar reverse-mode [`Tape`] through
//! [`TapeObjective`].

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// A scalar function of the parameters together with its exact gradient.
pub trait Objective {
    fn evaluate(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn evaluate(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(params)
    }
}

/// Evaluates `objective` and its gradient, rejecting non-finite results.
///
/// `-inf` is allowed: it is how a log-transformed loss reports an exactly
/// zero loss.
pub fn objective_gradient<O: Objective + ?Sized>(objective: &O, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (value, grad) = objective.evaluate(params)?;
    if value.is_nan() || value == f64::INFINITY {
        return Err(Error::NonFinite(format!("objective value {value}")));
    }
    if grad.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grad.len(),
        });
    }
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {k} is {}", grad[k])));
    }
    Ok((value, grad))
}

#[derive(Clone, Copy)]
struct Node {
    parents: [(usize, f64); 2],
}

/// Records scalar operations for reverse accumulation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, parents: [(usize, f64); 2]) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents });
        nodes.len() - 1
    }

    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push([(usize::MAX, 0.0); 2]);
        Var {
            tape: self,
            index,
            value,
        }
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.var(value)
    }

    /// Adjoints of every recorded node with respect to `output`.
    pub fn gradient(&self, output: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[output.index] = 1.0;
        for i in (0..=output.index).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, w) in &nodes[i].parents {
                if p != usize::MAX {
                    adj[p] += w * a;
                }
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    fn unary(self, value: f64, d: f64) -> Var<'t> {
        let index = self.tape.push([(self.index, d), (usize::MAX, 0.0)]);
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    fn binary(self, other: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        let index = self.tape.push([(self.index, da), (other.index, db)]);
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(self.value.cos(), -self.value.sin())
    }

    pub fn sqrt(self) -> Var<'t> {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }

    pub fn abs(self) -> Var<'t> {
        let sign = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.value.abs(), sign)
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        let d = if n == 0 { 0.0 } else { n as f64 * self.value.powi(n - 1) };
        self.unary(self.value.powi(n), d)
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        let d = if self.value == 0.0 {
            0.0
        } else {
            p * self.value.powf(p - 1.0)
        };
        self.unary(self.value.powf(p), d)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let q = self.value / rhs.value;
        self.binary(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

/// An [`Objective`] defined by a closure over tape variables.
pub struct TapeObjective<F> {
    f: F,
}

impl<F> TapeObjective<F>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> Objective for TapeObjective<F>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    fn evaluate(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.iter().map(|&v| tape.var(v)).collect();
        let out = (self.f)(&tape, &vars);
        let adj = tape.gradient(out);
        let grad = vars.iter().map(|v| adj[v.index]).collect();
        Ok((out.value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_norm_gradient_is_twice_theta() {
        let obj =
            TapeObjective::new(|tape: &Tape, th: &[Var<'_>]| th.iter().fold(tape.constant(0.0), |acc, &t| acc + t * t));
        let theta = [1.5, -2.0, 0.25, 0.0];
        let (v, g) = objective_gradient(&obj, &theta).unwrap();
        assert_eq!(v, 1.5 * 1.5 + 4.0 + 0.0625);
        assert_eq!(g, vec![3.0, -4.0, 0.5, 0.0]);
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let obj = TapeObjective::new(|tape: &Tape, _th: &[Var<'_>]| tape.constant(4.2));
        let (v, g) = objective_gradient(&obj, &[1.0, 2.0]).unwrap();
        assert_eq!(v, 4.2);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn composite_matches_finite_differences() {
        let obj = TapeObjective::new(|_tape: &Tape, th: &[Var<'_>]| {
            ((th[0] * th[1]).tanh() + th[1].exp() / (th[0] * th[0] + 1.0)).ln() - th[0].sin() * th[1].cos()
        });
        let x = [0.3, 0.8];
        let (_, g) = objective_gradient(&obj, &x).unwrap();
        for k in 0..2 {
            let h = 1e-6;
            let mut p = x;
            p[k] += h;
            let mut m = x;
            m[k] -= h;
            let fd = (obj.evaluate(&p).unwrap().0 - obj.evaluate(&m).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn non_finite_value_is_rejected() {
        let obj = |_p: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![0.0])) };
        assert!(matches!(objective_gradient(&obj, &[1.0]), Err(Error::NonFinite(_))));
        let obj = |_p: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((1.0, vec![f64::INFINITY])) };
        assert!(matches!(objective_gradient(&obj, &[1.0]), Err(Error::NonFinite(_))));
    }
}
