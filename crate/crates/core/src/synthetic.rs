//! Seeded synthetic demand-like series: a seasonal signal, a price effect
//! driven by occasional discount episodes, and Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::Tick;
use crate::data::{series_seed, SeriesRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub series: usize,
    pub length: usize,
    pub period: usize,
    /// Noise standard deviation relative to the series level.
    pub noise: f64,
    /// Probability that a discount episode starts at a tick.
    pub promo_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            series: 4,
            length: 600,
            period: 12,
            noise: 0.05,
            promo_rate: 0.04,
            seed: 0,
        }
    }
}

/// Generates fully observed series `syn0, syn1, ...`. Exogenous input is the
/// price; the endogenous value rises when the price drops. Values are
/// non-negative.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<SeriesRecord>> {
    if cfg.series == 0 || cfg.length == 0 || cfg.period < 2 {
        return Err(Error::Usage("synthetic data needs series, length >= 1 and period >= 2".into()));
    }
    if !(0.0..=1.0).contains(&cfg.promo_rate) || cfg.noise < 0.0 {
        return Err(Error::Usage("promo_rate must lie in [0, 1] and noise be non-negative".into()));
    }
    Ok((0..cfg.series)
        .map(|s| {
            let id = format!("syn{s}");
            let mut rng = ChaCha8Rng::seed_from_u64(series_seed(cfg.seed, &id));
            let level = rng.gen_range(20.0..60.0);
            let amplitude = level * rng.gen_range(0.2..0.4);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let base_price = rng.gen_range(2.0..10.0);
            let elasticity = level * rng.gen_range(1.0..2.0);
            let mut promo_left = 0usize;
            let mut discount = 0.0;
            let ticks = (0..cfg.length)
                .map(|t| {
                    if promo_left == 0 && rng.gen_bool(cfg.promo_rate) {
                        promo_left = rng.gen_range(3..=8);
                        discount = rng.gen_range(0.15..0.4);
                    }
                    let d = if promo_left > 0 {
                        promo_left -= 1;
                        discount
                    } else {
                        0.0
                    };
                    let price = base_price * (1.0 - d);
                    let season = amplitude * (std::f64::consts::TAU * t as f64 / cfg.period as f64 + phase).sin();
                    let noise = cfg.noise * level * rng.sample::<f64, _>(StandardNormal);
                    let y = (level + season + elasticity * d + noise).max(0.0);
                    Tick::observed(vec![price], vec![y])
                })
                .collect();
            SeriesRecord {
                id,
                first_tick: 1,
                ticks,
            }
        })
        .collect())
}
