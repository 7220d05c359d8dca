use serde::{Deserialize, Serialize};

use super::{norm, Control, IterationInfo, Minimization, Status};
use crate::autodiff::{objective_gradient, Objective};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 1000,
        }
    }
}

/// Adam with bias-corrected moments. [`Control::Reset`] zeroes the moments
/// and restarts the bias correction. The returned point is the last iterate.
pub fn adam_minimize<O, F>(
    objective: &mut O,
    x0: Vec<f64>,
    config: &AdamConfig,
    mut callback: F,
) -> Result<Minimization>
where
    O: Objective + ?Sized,
    F: FnMut(&mut O, &IterationInfo<'_>) -> Result<Control>,
{
    if !(config.learning_rate > 0.0
        && (0.0..1.0).contains(&config.beta1)
        && (0.0..1.0).contains(&config.beta2)
        && config.epsilon > 0.0)
    {
        return Err(Error::InvalidParameter(format!(
            "invalid Adam configuration {config:?}"
        )));
    }
    let n = x0.len();
    let mut x = x0;
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut t = 0i32;
    let (mut f, mut g) = objective_gradient(&*objective, &x)?;
    let mut evaluations = 1;
    let mut iteration = 0;
    let status = loop {
        if f == f64::NEG_INFINITY {
            break Status::ZeroLoss;
        }
        if iteration >= config.max_iterations {
            break Status::MaxIterations;
        }
        t += 1;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for i in 0..n {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            x[i] -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + config.epsilon);
        }
        iteration += 1;
        (f, g) = objective_gradient(&*objective, &x)?;
        evaluations += 1;
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
                m.iter_mut().for_each(|v| *v = 0.0);
                v.iter_mut().for_each(|v| *v = 0.0);
                t = 0;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_parabola() {
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0] * x[0], vec![2.0 * x[0]])) };
        let config = AdamConfig {
            learning_rate: 1e-2,
            max_iterations: 10_000,
            ..AdamConfig::default()
        };
        let r = adam_minimize(&mut f, vec![1.0], &config, |_, _| Ok(Control::Continue)).unwrap();
        assert!(r.params[0].abs() < 1e-3);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut f = |_x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((1.0, vec![0.0, 0.0])) };
        let r = adam_minimize(&mut f, vec![0.3, -0.7], &AdamConfig::default(), |_, _| {
            Ok(Control::Continue)
        })
        .unwrap();
        assert_eq!(r.params, vec![0.3, -0.7]);
    }

    #[test]
    fn three_updates_by_hand() {
        // f(x) = x: g = 1 each step, so m_hat = v_hat = 1 and each update is
        // lr / (1 + eps).
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0], vec![1.0])) };
        let config = AdamConfig {
            learning_rate: 0.1,
            max_iterations: 3,
            ..AdamConfig::default()
        };
        let mut xs = Vec::new();
        adam_minimize(&mut f, vec![0.0], &config, |_, info| {
            xs.push(info.params[0]);
            Ok(Control::Continue)
        })
        .unwrap();
        let step = 0.1 / (1.0 + 1e-8);
        for (k, x) in xs.iter().enumerate() {
            assert!((x + step * (k + 1) as f64).abs() < 1e-15);
        }
    }
}
