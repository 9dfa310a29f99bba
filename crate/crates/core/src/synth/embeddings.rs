//! Labelled Gaussian-mixture embeddings, for exercising compression and
//! inference at scale without training an encoder first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingSet;
use crate::error::{Error, Result};
use crate::task::Label;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Standard deviation of points around their cluster centre; centres
    /// are standard normal.
    pub spread: f64,
    pub positive_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            dim: 256,
            clusters: 200,
            spread: 0.5,
            positive_rate: 0.1,
            seed: 0,
        }
    }
}

/// Points drawn around random centres. Each cluster has its own positive
/// propensity (mean `positive_rate`), so labels cluster with the geometry.
pub fn synthetic_embeddings(config: &EmbeddingConfig) -> Result<EmbeddingSet> {
    if config.n == 0 || config.dim == 0 || config.clusters == 0 {
        return Err(Error::Config("n, dim and clusters must be positive".into()));
    }
    if !(config.positive_rate > 0.0 && config.positive_rate < 0.5) {
        return Err(Error::Config("positive_rate must lie in (0, 0.5)".into()));
    }
    if !(config.spread >= 0.0 && config.spread.is_finite()) {
        return Err(Error::Config(format!("spread {} must be nonnegative", config.spread)));
    }
    let noise = Normal::new(0.0, config.spread).map_err(|e| Error::Config(format!("spread: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centres: Vec<Vec<f64>> = (0..config.clusters)
        .map(|_| (0..config.dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
        .collect();
    // Uniform on [0, 2r] keeps the mean at r.
    let propensity: Vec<f64> = (0..config.clusters)
        .map(|_| rng.random_range(0.0..2.0 * config.positive_rate))
        .collect();
    let mut data = Vec::with_capacity(config.n * config.dim);
    let mut labels = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let c = i % config.clusters;
        data.extend(centres[c].iter().map(|&m| m + noise.sample(&mut rng)));
        labels.push(Label::Class(usize::from(rng.random_bool(propensity[c]))));
    }
    // Every run needs both classes present.
    if !labels.contains(&Label::Class(1)) {
        labels[0] = Label::Class(1);
    }
    if !labels.contains(&Label::Class(0)) {
        labels[0] = Label::Class(0);
    }
    let width = config.n.to_string().len();
    let ids = (0..config.n).map(|i| format!("e{i:0width$}")).collect();
    EmbeddingSet::new(ids, Matrix::from_vec(config.n, config.dim, data)?, labels)
}
