use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, QNetwork};
use crate::error::{Error, Result};

/// Per-episode ε-greedy decay: `max(ε_min, ε₀·δ^episode)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationSchedule {
    pub epsilon_start: f64,
    pub decay: f64,
    pub epsilon_min: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self {
            epsilon_start: 1.0,
            decay: 0.999,
            epsilon_min: 0.01,
        }
    }
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.epsilon_start) || !unit(self.epsilon_min) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config("exploration: epsilons must lie in [0, 1] and decay in (0, 1]"));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: u64) -> f64 {
        let e = self.epsilon_start * self.decay.powf(episode as f64);
        e.max(self.epsilon_min).min(1.0)
    }
}

/// ε-greedy choice over the network's Q-values.
pub fn select_action<R: Rng + ?Sized>(net: &QNetwork, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        Ok(rng.random_range(0..net.output_len()))
    } else {
        deploy_policy(net, obs)
    }
}

/// Greedy deployment policy: `argmax_a Q(s, a)`.
pub fn deploy_policy(net: &QNetwork, obs: &[f64]) -> Result<usize> {
    Ok(argmax(&net.forward(obs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q_net(q: &[f64]) -> QNetwork {
        let mut net = QNetwork::zeros(&[1, q.len()]).unwrap();
        let mut p = vec![0.0; q.len()];
        p.extend_from_slice(q);
        net.set_params(&p).unwrap();
        net
    }

    #[test]
    fn uniform_when_fully_exploring() {
        let net = q_net(&[0.0; 11]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let mut counts = [0usize; 11];
        for _ in 0..n {
            counts[select_action(&net, &[0.0], 1.0, &mut rng).unwrap()] += 1;
        }
        let expected = n as f64 / 11.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 10 degrees of freedom
        assert!(chi2 < 29.59, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn greedy_choices() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&q_net(&[1.0, 3.0, 2.0]), &[0.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(select_action(&q_net(&[2.0, 2.0, 0.0]), &[0.0], 0.0, &mut rng).unwrap(), 0);
        let net = q_net(&[0.3, -1.0, 0.9, 0.1]);
        for _ in 0..5 {
            assert_eq!(deploy_policy(&net, &[0.0]).unwrap(), 2);
        }
    }

    #[test]
    fn schedule_examples() {
        let s = ExplorationSchedule::default();
        assert_eq!(s.epsilon(0), 1.0);
        assert!((s.epsilon(1) - 0.999).abs() < 1e-15);
        assert_eq!(s.epsilon(100_000), 0.01);
    }

    proptest::proptest! {
        #[test]
        fn schedule_monotone_and_floored(e0 in 0.0f64..=1.0, d in 0.5f64..=1.0, emin in 0.0f64..0.5, ep in 0u64..10_000) {
            let s = ExplorationSchedule { epsilon_start: e0, decay: d, epsilon_min: emin };
            proptest::prop_assert!(s.epsilon(ep + 1) <= s.epsilon(ep));
            proptest::prop_assert!(s.epsilon(ep) >= emin);
            proptest::prop_assert!(s.epsilon(ep) <= 1.0);
        }

        #[test]
        fn argmax_invariant_under_bias_shift_and_scaling(
            seed in 0u64..1000,
            shift in -50.0f64..50.0,
            scale in 0.01f64..100.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = QNetwork::glorot(&[3, 8, 5], &mut rng).unwrap();
            let obs = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let a = deploy_policy(&net, &obs).unwrap();
            let mut scaled = net.clone();
            let last = scaled.layers_mut().last_mut().unwrap();
            last.weights.iter_mut().for_each(|w| *w *= scale);
            last.biases.iter_mut().for_each(|b| *b *= scale);
            proptest::prop_assert_eq!(deploy_policy(&scaled, &obs).unwrap(), a);
            let last = net.layers_mut().last_mut().unwrap();
            last.biases.iter_mut().for_each(|b| *b += shift);
            let shifted = deploy_policy(&net, &obs).unwrap();
            // a constant shift can only matter through rounding on near-ties
            let q = net.forward(&obs).unwrap();
            proptest::prop_assert!(shifted == a || (q[shifted] - q[a]).abs() < 1e-12);
        }
    }
}
