//! Neural-network solvers for linear boundary-value problems on the unit
//! hypercube, trained by minimizing weighted residual losses.
//!
//! The crate is organised bottom-up:
//!
//! - [`net`]: a fully connected tanh network with exact input derivatives up
//!   to second order and reverse-mode parameter gradients.
//! - [`autodiff`]: the [`Objective`] abstraction and a small scalar tape.
//! - [`problem`]: linear PDE problems, residuals, magnitude bounds and the
//!   optimal loss weight.
//! - [`sampling`]: collocation points and the adaptive point-count controller.
//! - [`loss`]: Monte-Carlo losses and the three total-loss strategies.
//! - [`optim`]: L-BFGS with a strong Wolfe line search, and Adam.
//! - [`experiment`]: experiment configuration, training driver, error metrics
//!   and result files.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod net;
pub mod optim;
pub mod points;
pub mod problem;
pub mod sampling;

pub use autodiff::{objective_gradient, Objective};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Method, ResultRecord};
pub use loss::{LossBreakdown, LossKind, LossStrategy, PinnObjective};
pub use net::{Jet, Network, NetworkArchitecture, ParameterVector};
pub use optim::{LbfgsConfig, TrainingTrace};
pub use points::PointSet;
pub use problem::{LinearPdeProblem, MagnitudeBounds, MultiIndex, OperatorTerm};
pub use sampling::{AdaptiveState, CollocationSet, Decision};
