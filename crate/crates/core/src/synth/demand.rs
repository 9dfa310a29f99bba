//! Synthetic hourly station demand with shared station profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::demand::DemandRow;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandConfig {
    pub stations: usize,
    pub hours: u32,
    /// Distinct daily usage curves shared by groups of stations.
    pub profiles: usize,
    /// Mean hourly demand at a profile's peak, before the station scale.
    pub peak: f64,
    pub seed: u64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            stations: 60,
            hours: 24 * 28,
            profiles: 4,
            peak: 12.0,
            seed: 0,
        }
    }
}

/// Rates per hour of day for one profile: a baseline plus two Gaussian
/// bumps at random hours, with quieter weekends for odd profiles.
fn profile_curve(rng: &mut ChaCha8Rng, peak: f64) -> [f64; 24] {
    let base = rng.random_range(0.05..0.2);
    let bumps: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| (rng.random_range(0.0..24.0), rng.random_range(1.0..3.0), rng.random_range(0.4..1.0)))
        .collect();
    let mut curve = [0.0; 24];
    for (h, c) in curve.iter_mut().enumerate() {
        let mut v = base;
        for &(centre, width, height) in &bumps {
            // Circular distance so evening bumps wrap into the morning.
            let d = (h as f64 - centre).abs();
            let d = d.min(24.0 - d);
            v += height * (-0.5 * (d / width).powi(2)).exp();
        }
        *c = peak * v;
    }
    curve
}

pub fn generate_demand(config: &DemandConfig) -> Result<Vec<DemandRow>> {
    if config.stations == 0 || config.profiles == 0 || config.hours < 48 {
        return Err(Error::Config(
            "demand generation needs stations, profiles and at least 48 hours".into(),
        ));
    }
    if !(config.peak > 0.0 && config.peak.is_finite()) {
        return Err(Error::Config(format!("peak {} must be positive", config.peak)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let curves: Vec<[f64; 24]> = (0..config.profiles).map(|_| profile_curve(&mut rng, config.peak)).collect();
    let mut rows = Vec::with_capacity(config.stations * config.hours as usize);
    for s in 0..config.stations {
        let profile = s % config.profiles;
        let scale: f64 = rng.random_range(0.5..1.5);
        for hour in 0..config.hours {
            let weekend = (hour / 24) % 7 >= 5;
            let damp = if weekend && profile % 2 == 1 { 0.4 } else { 1.0 };
            let rate = scale * damp * curves[profile][(hour % 24) as usize];
            let demand = Poisson::new(rate).map_err(|e| Error::Numeric(e.to_string()))?.sample(&mut rng);
            rows.push(DemandRow {
                station: format!("st{s:03}"),
                hour,
                demand,
            });
        }
    }
    Ok(rows)
}
