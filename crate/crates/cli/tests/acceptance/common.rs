use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqgraph::graph::SimilarityMetric;
use seqgraph::tensor::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Plain-loop cosine or Pearson, kept apart from the library's prepared rows.
pub fn naive_similarity(x: &[f64], y: &[f64], metric: SimilarityMetric) -> f64 {
    let center = |v: &[f64]| -> Vec<f64> {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| a - m).collect()
    };
    let (a, b) = match metric {
        SimilarityMetric::Pearson => (center(x), center(y)),
        SimilarityMetric::Cosine => (x.to_vec(), y.to_vec()),
    };
    let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub const FD_STEP: f64 = 1e-5;

/// Largest `|a − n| / max(|a|, |n|, 1e-5)` between analytic gradients and
/// central differences of `loss` over every parameter entry.
pub fn max_gradient_error(
    params: &[Matrix],
    analytic: &[Matrix],
    mut loss: impl FnMut(&[Matrix]) -> f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for m in 0..p.len() {
        assert_eq!(p[m].shape(), analytic[m].shape());
        for e in 0..p[m].as_slice().len() {
            let orig = p[m].as_slice()[e];
            p[m].as_mut_slice()[e] = orig + FD_STEP;
            let up = loss(&p);
            p[m].as_mut_slice()[e] = orig - FD_STEP;
            let down = loss(&p);
            p[m].as_mut_slice()[e] = orig;
            let n = (up - down) / (2.0 * FD_STEP);
            let a = analytic[m].as_slice()[e];
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-5));
        }
    }
    worst
}
