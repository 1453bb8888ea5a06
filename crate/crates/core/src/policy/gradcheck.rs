use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::Network;
use super::real::Real;
use super::Example;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Differences below this are accepted outright; covers parameters whose
    /// true gradient is zero, where relative error is meaningless.
    pub absolute_floor: f64,
    /// Check a seeded random subset of this many parameters instead of all.
    pub max_params: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> GradCheckOptions {
        GradCheckOptions {
            step: 1e-4,
            tolerance: 1e-4,
            absolute_floor: 1e-8,
            max_params: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Largest relative error among entries not settled by the absolute floor.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Parameter index of the worst relative error.
    pub worst_index: Option<usize>,
    /// Entries accepted by the absolute floor.
    pub absolute_passes: usize,
    pub failures: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares backpropagated gradients with central finite differences of the
/// loss. The network is evaluated in `f64` whatever its storage type.
pub fn gradient_check<T: Real, E: Example>(
    net: &Network<T>,
    batch: &[E],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let net64 = net.cast::<f64>();
    let (_, analytic) = net64.loss_and_gradients(batch)?;
    gradient_check_against(&net64, batch, &analytic, opts)
}

/// Like [`gradient_check`] but against a caller-supplied gradient.
pub fn gradient_check_against<E: Example>(
    net: &Network<f64>,
    batch: &[E],
    analytic: &[f64],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let n = net.num_params();
    if analytic.len() != n {
        return Err(Error::Config(format!(
            "gradient has {} entries, network has {n} parameters",
            analytic.len()
        )));
    }
    if !(opts.step > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let indices: Vec<usize> = match opts.max_params {
        Some(m) if m < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut v = sample(&mut rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..n).collect(),
    };

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        checked: indices.len(),
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst_index: None,
        absolute_passes: 0,
        failures: 0,
        tolerance: opts.tolerance,
    };
    // perturbing a parameter leaves every activation before its layer alone
    let acts = probe.layer_inputs(batch)?;
    for i in indices {
        let layer = probe.layer_of_param(i);
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + opts.step;
        let up = probe.loss_from(&acts[layer], layer, batch);
        probe.params_mut()[i] = orig - opts.step;
        let down = probe.loss_from(&acts[layer], layer, batch);
        probe.params_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * opts.step);
        let a = analytic[i];
        let abs = (a - numeric).abs();
        if !abs.is_finite() {
            report.failures += 1;
            report.max_relative_error = f64::INFINITY;
            report.worst_index = Some(i);
            continue;
        }
        report.max_absolute_error = report.max_absolute_error.max(abs);
        if abs < opts.absolute_floor {
            report.absolute_passes += 1;
            continue;
        }
        let rel = abs / a.abs().max(numeric.abs());
        if report.worst_index.is_none() || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_index = Some(i);
        }
        if rel >= opts.tolerance {
            report.failures += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ConvPolicy, ConvPolicyConfig, TrainSample};
    use crate::samegame::{encode_board, generate_board, BoardSeed};

    fn batch(n: u64, d: usize, colors: u8) -> Vec<TrainSample> {
        (0..n)
            .map(|s| {
                let b = generate_board(&BoardSeed::new(100 + s, d, d, colors)).unwrap();
                TrainSample::new(encode_board(&b), (s as usize * 7) % (d * d))
            })
            .collect()
    }

    #[test]
    fn tiny_network_passes() {
        let net = ConvPolicy::new(ConvPolicyConfig::tiny(4, 4, 3, 5)).unwrap();
        let r = gradient_check(&net, &batch(5, 4, 3), &GradCheckOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checked, net.num_params());
    }

    #[test]
    fn deep_network_subset_passes() {
        let net = ConvPolicy::new(ConvPolicyConfig::reduced(4, 4, 3, 3, 2)).unwrap();
        let opts = GradCheckOptions {
            max_params: Some(150),
            ..GradCheckOptions::default()
        };
        let r = gradient_check(&net, &batch(3, 4, 3), &opts).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checked, 150);
    }

    #[test]
    fn zero_gradients_use_the_absolute_floor() {
        // a zero head makes every conv gradient exactly zero
        let mut net = ConvPolicy::new(ConvPolicyConfig::tiny(3, 3, 2, 1)).unwrap();
        let head = net.head_range();
        net.params_mut()[head].iter_mut().for_each(|p| *p = 0.0);
        let r = gradient_check(&net, &batch(2, 3, 2), &GradCheckOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.absolute_passes >= net.head_range().start);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let net = ConvPolicy::new(ConvPolicyConfig::tiny(3, 3, 2, 4))
            .unwrap()
            .cast::<f64>();
        let data = batch(2, 3, 2);
        let (_, mut g) = net.loss_and_gradients(&data).unwrap();
        let i = g.iter().position(|v| v.abs() > 1e-3).unwrap();
        g[i] *= 1.01;
        let r = gradient_check_against(&net, &data, &g, &GradCheckOptions::default()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.failures, 1);
        assert_eq!(r.worst_index, Some(i));
    }
}
