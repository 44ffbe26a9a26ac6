//! Exogenous fundamental price paths and each agent's noisy view of them.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalParams {
    pub initial_value: f64,
    pub step_volatility: f64,
    /// Probability of a jump at each step.
    pub jump_rate: f64,
    /// Log size of a jump.
    pub jump_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalSeries {
    values: Vec<f64>,
    pub step_volatility: f64,
    pub jump_rate: f64,
    pub jump_scale: f64,
}

impl FundamentalSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at step `t`. Steps past the end read the last value.
    pub fn at(&self, t: usize) -> f64 {
        self.values[t.min(self.values.len() - 1)]
    }
}

/// Geometric random walk with rare symmetric jumps.
///
/// Each step consumes exactly two draws (Gaussian increment, jump trial) plus
/// one sign draw when a jump fires.
pub fn generate_fundamental_series<R: Rng + ?Sized>(
    params: &FundamentalParams,
    length: usize,
    rng: &mut R,
) -> FundamentalSeries {
    assert!(length >= 1, "fundamental series needs at least one value");
    let mut values = Vec::with_capacity(length);
    let mut log_value = params.initial_value.ln();
    values.push(params.initial_value);
    for _ in 1..length {
        let z: f64 = rng.sample(StandardNormal);
        log_value += params.step_volatility * z;
        if rng.random::<f64>() < params.jump_rate {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            log_value += sign * params.jump_scale;
        }
        values.push(log_value.exp());
    }
    FundamentalSeries {
        values,
        step_volatility: params.step_volatility,
        jump_rate: params.jump_rate,
        jump_scale: params.jump_scale,
    }
}

/// Agent-constant multiplicative bias plus fresh lognormal noise per look.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentFundamentalLens {
    pub multiplicative_bias: f64,
    pub observation_noise_scale: f64,
}

impl AgentFundamentalLens {
    pub fn transparent() -> Self {
        Self {
            multiplicative_bias: 1.0,
            observation_noise_scale: 0.0,
        }
    }

    /// Draws the agent's bias `exp(eps)`, `eps ~ N(0, bias_sd^2)`.
    pub fn draw<R: Rng + ?Sized>(bias_sd: f64, observation_noise_scale: f64, rng: &mut R) -> Self {
        let eps: f64 = rng.sample(StandardNormal);
        Self {
            multiplicative_bias: (bias_sd * eps).exp(),
            observation_noise_scale,
        }
    }

    /// Always consumes one Gaussian draw, even with zero noise.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        series: &FundamentalSeries,
        t: usize,
        rng: &mut R,
    ) -> f64 {
        let eta: f64 = rng.sample(StandardNormal);
        series.at(t) * self.multiplicative_bias * (self.observation_noise_scale * eta).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(sigma: f64, jump_rate: f64) -> FundamentalParams {
        FundamentalParams {
            initial_value: 100.0,
            step_volatility: sigma,
            jump_rate,
            jump_scale: 0.1,
        }
    }

    fn log_increments(series: &FundamentalSeries) -> Vec<f64> {
        series
            .values()
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .collect()
    }

    #[test]
    fn degenerate_walk_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = generate_fundamental_series(&params(0.0, 0.0), 500, &mut rng);
        assert_eq!(s.len(), 500);
        assert!(s.values().iter().all(|&v| (v - 100.0).abs() < 1e-9));
    }

    #[test]
    fn same_seed_same_series() {
        let p = params(0.01, 1.0 / 286.0);
        let a = generate_fundamental_series(&p, 1000, &mut ChaCha8Rng::seed_from_u64(5));
        let b = generate_fundamental_series(&p, 1000, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn increment_std_matches_step_volatility() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = generate_fundamental_series(&params(0.01, 0.0), 100_001, &mut rng);
        let inc = log_increments(&s);
        let n = inc.len() as f64;
        let mean = inc.iter().sum::<f64>() / n;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.01).abs() < 0.05 * 0.01);

        // Lag-1 autocorrelation of i.i.d. increments.
        let cov = inc
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n - 1.0);
        let rho = cov / var;
        assert!(rho.abs() < 3.0 / n.sqrt());
    }

    #[test]
    fn jumps_show_up_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = generate_fundamental_series(&params(0.0, 0.05), 20_000, &mut rng);
        let inc = log_increments(&s);
        let jumps = inc.iter().filter(|x| x.abs() > 1e-12).count();
        assert!(inc
            .iter()
            .all(|x| x.abs() < 1e-12 || (x.abs() - 0.1).abs() < 1e-9));
        let expected = 0.05 * inc.len() as f64;
        assert!((jumps as f64 - expected).abs() < 4.0 * expected.sqrt());
        assert!(s.values().iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn transparent_lens_reads_the_series() {
        let s =
            generate_fundamental_series(&params(0.01, 0.0), 50, &mut ChaCha8Rng::seed_from_u64(2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lens = AgentFundamentalLens::transparent();
        for t in [0, 10, 49] {
            assert_eq!(lens.estimate(&s, t, &mut rng), s.at(t));
        }
    }

    #[test]
    fn biased_lens_scales() {
        let s =
            generate_fundamental_series(&params(0.0, 0.0), 5, &mut ChaCha8Rng::seed_from_u64(2));
        let lens = AgentFundamentalLens {
            multiplicative_bias: 1.1,
            observation_noise_scale: 0.0,
        };
        let est = lens.estimate(&s, 2, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((est - 110.0).abs() < 1e-9);
    }

    #[test]
    fn noisy_lens_lognormal_mean() {
        let s =
            generate_fundamental_series(&params(0.0, 0.0), 5, &mut ChaCha8Rng::seed_from_u64(2));
        let lens = AgentFundamentalLens {
            multiplicative_bias: 1.0,
            observation_noise_scale: 0.01,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let mean = (0..n).map(|_| lens.estimate(&s, 3, &mut rng)).sum::<f64>() / n as f64;
        let target = 100.0 * (0.00005f64).exp();
        assert!((mean - target).abs() < 0.01 * target);
    }

    #[test]
    fn estimate_ratio_is_stationary() {
        let s = generate_fundamental_series(
            &params(0.02, 0.01),
            20_000,
            &mut ChaCha8Rng::seed_from_u64(4),
        );
        let lens = AgentFundamentalLens {
            multiplicative_bias: 0.93,
            observation_noise_scale: 0.01,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ratios: Vec<f64> = (0..s.len())
            .map(|t| lens.estimate(&s, t, &mut rng) / s.at(t))
            .collect();
        let half = ratios.len() / 2;
        let m1 = ratios[..half].iter().sum::<f64>() / half as f64;
        let m2 = ratios[half..].iter().sum::<f64>() / (ratios.len() - half) as f64;
        // Standard error of each half-mean is about 0.93 * 0.01 / sqrt(10^4).
        assert!((m1 - m2).abs() < 5e-4);
        assert!((m1 - 0.93).abs() < 5e-4);
    }
}
