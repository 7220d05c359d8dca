use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::line_search::{strong_wolfe, LineSearchOutcome, LineSearchParams};
use super::{dot, norm, Control, IterationInfo, Minimization, Status};
use crate::autodiff::{objective_gradient, Objective};
use crate::error::{Error, Result};

/// Curvature pairs with `s.y <= SKIP_RATIO |s| |y|` are dropped.
const SKIP_RATIO: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub history: usize,
    pub max_iterations: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub grad_tolerance: f64,
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 10,
            max_iterations: 1000,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            grad_tolerance: 0.0,
            max_line_search_steps: 25,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.history == 0 {
            return Err(Error::InvalidParameter("L-BFGS history must be at least 1".into()));
        }
        if self.max_line_search_steps == 0 {
            return Err(Error::InvalidParameter("line search needs at least one step".into()));
        }
        Ok(())
    }
}

/// Curvature pairs `(s, y, 1 / s.y)`, oldest first.
#[derive(Clone, Debug, Default)]
pub struct LbfgsState {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl LbfgsState {
    pub fn new(capacity: usize) -> Self {
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Empties the pair store; the next direction is steepest descent.
    pub fn reset(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` unless it would break positive definiteness.
    /// Returns whether the pair was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > SKIP_RATIO * norm(&s) * norm(&y)) {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// `-H g` by the two-loop recursion with `H0 = gamma I`,
    /// `gamma = s.y / y.y` of the newest pair (1 when empty).
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = self.pairs.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|qi| *qi = -*qi);
        q
    }
}

/// Minimizes `objective` from `x0` by L-BFGS with a strong-Wolfe line search.
///
/// Steps taken from an empty history use the trial step `min(1, 1/|g|)`.
/// A failed line search with stored pairs clears them and retries once from
/// steepest descent; a second failure ends the run with
/// [`Status::LineSearchFailed`].
pub fn lbfgs_minimize<O, F>(
    objective: &mut O,
    x0: Vec<f64>,
    config: &LbfgsConfig,
    mut callback: F,
) -> Result<Minimization>
where
    O: Objective + ?Sized,
    F: FnMut(&mut O, &IterationInfo<'_>) -> Result<Control>,
{
    config.validate()?;
    let params = LineSearchParams {
        c1: config.wolfe_c1,
        c2: config.wolfe_c2,
        max_steps: config.max_line_search_steps,
    };
    let mut x = x0;
    let (mut f, mut g) = objective_gradient(&*objective, &x)?;
    let mut evaluations = 1;
    let mut state = LbfgsState::new(config.history);
    let mut iteration = 0;

    let status = loop {
        if f == f64::NEG_INFINITY {
            break Status::ZeroLoss;
        }
        if iteration >= config.max_iterations {
            break Status::MaxIterations;
        }
        let gnorm = norm(&g);
        if gnorm <= config.grad_tolerance {
            break Status::GradientTolerance;
        }

        let mut d = state.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            state.reset();
            d = state.direction(&g);
            slope = dot(&g, &d);
        }
        let alpha0 = if state.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let outcome = strong_wolfe(&*objective, &x, f, slope, &d, alpha0, params, &mut evaluations)?;
        let step = match outcome {
            LineSearchOutcome::Accepted(step) => step,
            LineSearchOutcome::Failed if !state.is_empty() => {
                state.reset();
                continue;
            }
            LineSearchOutcome::Failed => break Status::LineSearchFailed,
        };

        iteration += 1;
        if step.value == f64::NEG_INFINITY {
            x = step.x;
            f = step.value;
            continue;
        }
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        state.push(s, y);
        x = step.x;
        f = step.value;
        g = step.grad;

        let info = IterationInfo {
            iteration,
            value: f,
            grad_norm: norm(&g),
            params: &x,
            evaluations,
        };
        match callback(objective, &info)? {
            Control::Continue => {}
            Control::Stop => break Status::Stopped,
            Control::Reset => {
                state.reset();
                (f, g) = objective_gradient(&*objective, &x)?;
                evaluations += 1;
            }
        }
    };

    Ok(Minimization {
        params: x,
        value: f,
        iterations: iteration,
        evaluations,
        status,
    })
}
