//! Fixtures shared by the solver benchmarks.

use wpinn_core::loss::LossStrategy;
use wpinn_core::problem::laplace_eigen;
use wpinn_core::{
    AdaptiveState, CollocationSet, LinearPdeProblem, Network, NetworkArchitecture, ParameterVector, PinnObjective,
};

/// Laplace problem with leading frequency 2pi, the standard 4x20 network and
/// `n` interior and boundary points drawn from a fixed seed.
pub struct Fixture {
    pub problem: LinearPdeProblem,
    pub network: Network,
    pub params: ParameterVector,
    pub points: CollocationSet,
}

impl Fixture {
    pub fn laplace(n: usize) -> Self {
        let problem = laplace_eigen(&[2.0 * std::f64::consts::PI]).expect("valid frequency");
        let network = Network::new(NetworkArchitecture::standard(2).expect("2d architecture"));
        let params = network.glorot_init(7);
        let points = AdaptiveState::new(2, n, n, 5.0, 11).expect("valid counts").train;
        Self {
            problem,
            network,
            params,
            points,
        }
    }

    pub fn objective(&self, strategy: LossStrategy) -> PinnObjective {
        PinnObjective::new(
            &self.problem,
            self.network.clone(),
            strategy,
            &self.points.interior,
            &self.points.boundary,
        )
        .expect("consistent fixture")
    }
}
