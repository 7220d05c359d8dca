//! Gradient-based minimizers with a per-iteration callback.
//!
//! Callbacks receive the objective mutably, so a training driver can swap
//! collocation points between iterations and answer [`Control::Reset`] to
//! make the optimizer re-evaluate and drop its curvature or moment history.

mod adam;
mod lbfgs;
mod line_search;

pub use adam::{adam_minimize, AdamConfig};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsState};
pub use line_search::{strong_wolfe, LineSearchOutcome, LineSearchParams, WolfeStep};

use serde::{Deserialize, Serialize};

/// Snapshot handed to the callback after every completed iteration.
#[derive(Debug)]
pub struct IterationInfo<'a> {
    /// 1-based index of the iteration just completed.
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub params: &'a [f64],
    /// Objective evaluations so far, including line-search trials.
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    /// The objective changed: re-evaluate and clear history.
    Reset,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    MaxIterations,
    GradientTolerance,
    /// The objective reached `-inf` (a log-loss of an exactly zero loss).
    ZeroLoss,
    LineSearchFailed,
    Stopped,
}

/// Result of a minimization run. `params` is the best point seen on the
/// objective as it stood when the run ended.
#[derive(Clone, Debug)]
pub struct Minimization {
    pub params: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

/// Loss history of one training run, written by the training driver.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    pub status: Option<Status>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub train_interior: f64,
    pub train_boundary: f64,
    pub validation_interior: f64,
    pub validation_boundary: f64,
    pub total: f64,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub wall_seconds: f64,
}

impl TrainingTrace {
    /// Appends a record. Iteration indices must strictly increase.
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            assert!(record.iteration > last.iteration, "trace iterations must increase");
        }
        self.records.push(record);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
