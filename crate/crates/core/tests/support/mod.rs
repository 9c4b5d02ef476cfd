#![allow(dead_code)]

use mta_core::{ClassEmbeddings, EmbeddingSet, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Instance {
    pub views: EmbeddingSet<f64>,
    pub classes: ClassEmbeddings<f64>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// A cluster of views around a random centre with a random spread, some
/// uniform outliers, and `k` classes of which one sits near the centre.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> Instance {
    let center = unit(gaussian(rng, d));
    let spread: f64 = rng.random_range(0.2..1.5);
    let outlier_rate: f64 = rng.random_range(0.0..0.4);
    let scale = spread / (d as f64).sqrt();
    let mut rows = Vec::with_capacity(n * d);
    for p in 0..n {
        let v = if p > 0 && rng.random_bool(outlier_rate) {
            gaussian(rng, d)
        } else {
            center
                .iter()
                .zip(gaussian(rng, d))
                .map(|(c, g)| c + scale * g)
                .collect()
        };
        rows.extend(unit(v));
    }
    let mut text = Vec::with_capacity(k * d);
    for c in 0..k {
        let t = if c == 0 {
            center
                .iter()
                .zip(gaussian(rng, d))
                .map(|(c, g)| c + 0.5 / (d as f64).sqrt() * g)
                .collect()
        } else {
            gaussian(rng, d)
        };
        text.extend(unit(t));
    }
    Instance {
        views: EmbeddingSet::new(Matrix::from_vec(n, d, rows).unwrap(), 0).unwrap(),
        classes: ClassEmbeddings::new(Matrix::from_vec(k, d, text).unwrap(), 100.0, vec![]).unwrap(),
    }
}

/// Instance with sizes drawn from the given inclusive ranges.
pub fn random_sized(
    rng: &mut ChaCha8Rng,
    n: (usize, usize),
    d: (usize, usize),
    k: (usize, usize),
) -> Instance {
    let n = rng.random_range(n.0..=n.1);
    let d = rng.random_range(d.0..=d.1);
    let k = rng.random_range(k.0..=k.1);
    random_instance(rng, n, d, k)
}

/// Pass/fail line in the acceptance output.
pub fn report(id: &str, pass: bool, detail: impl AsRef<str>) {
    println!(
        "[{}] {id}: {}",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
}
