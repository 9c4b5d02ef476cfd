//! Per-view variable bandwidths and the Gaussian kernel.

use crate::embedding::EmbeddingSet;
use crate::error::{MtaError, Result};
use crate::linalg::sq_dist;
use crate::scalar::Scalar;

/// Lower clamp on every squared bandwidth.
pub const BANDWIDTH_FLOOR: f64 = 1e-12;

/// Squared bandwidths `h_p²`, one per view.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthVector<T> {
    h_sq: Vec<T>,
    rho: T,
    floor: T,
}

impl<T: Scalar> BandwidthVector<T> {
    /// Explicit squared bandwidths, clamped below by the floor.
    pub fn from_squared(h_sq: Vec<T>) -> Self {
        let floor = T::lit(BANDWIDTH_FLOOR);
        Self {
            h_sq: h_sq.into_iter().map(|h| h.max(floor)).collect(),
            rho: T::one(),
            floor,
        }
    }

    /// The same squared bandwidth for all `n` views.
    pub fn uniform(n: usize, h_sq: T) -> Self {
        Self::from_squared(vec![h_sq; n])
    }

    pub fn squared(&self) -> &[T] {
        &self.h_sq
    }

    pub fn get(&self, p: usize) -> T {
        self.h_sq[p]
    }

    pub fn len(&self) -> usize {
        self.h_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_sq.is_empty()
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn floor(&self) -> T {
        self.floor
    }

    pub fn max_squared(&self) -> T {
        self.h_sq.iter().copied().fold(self.floor, T::max)
    }

    /// Reorder to follow a permutation (or selection) of the views.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            h_sq: idx.iter().map(|&i| self.h_sq[i]).collect(),
            rho: self.rho,
            floor: self.floor,
        }
    }
}

/// Number of nearest neighbours used for each view's bandwidth.
pub fn neighbor_count(n_views: usize, rho: f64) -> usize {
    if n_views <= 1 {
        return 0;
    }
    let raw = (rho * (n_views - 1) as f64).round() as usize;
    raw.clamp(1, n_views - 1)
}

/// `h_p² = 1/(ρ(N−1)) Σ_{q ∈ I_p} ‖f_p − f_q‖²` over the nearest neighbours
/// `I_p` of each view (lower index wins distance ties).
pub fn variable_bandwidth<T: Scalar>(views: &EmbeddingSet<T>, rho: T) -> Result<BandwidthVector<T>> {
    if !(rho > T::zero() && rho <= T::one()) {
        return Err(MtaError::InvalidParameter {
            name: "rho",
            reason: format!("must lie in (0, 1], got {rho}"),
        });
    }
    let n = views.n_views();
    let floor = T::lit(BANDWIDTH_FLOOR);
    if n == 1 {
        return Ok(BandwidthVector {
            h_sq: vec![floor],
            rho,
            floor,
        });
    }
    let k = neighbor_count(n, rho.to_f64_lossy());
    let denom = rho * T::from_usize_lossy(n - 1);
    let mut dists: Vec<(T, usize)> = Vec::with_capacity(n - 1);
    let h_sq = (0..n)
        .map(|p| {
            dists.clear();
            dists.extend(
                (0..n)
                    .filter(|&q| q != p)
                    .map(|q| (sq_dist(views.view(p), views.view(q)), q)),
            );
            // total order: distance, then index
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let total: T = dists[..k].iter().map(|d| d.0).sum();
            (total / denom).max(floor)
        })
        .collect();
    Ok(BandwidthVector { h_sq, rho, floor })
}

/// `k_p = exp(−‖f_p − m‖² / h_p²)`, unnormalized so `k_p ∈ (0, 1]`.
pub fn gaussian_kernel<T: Scalar>(
    views: &EmbeddingSet<T>,
    mode: &[T],
    h_sq: &BandwidthVector<T>,
) -> Vec<T> {
    let mut out = Vec::with_capacity(views.n_views());
    gaussian_kernel_into(views, mode, h_sq, &mut out);
    out
}

pub(crate) fn gaussian_kernel_into<T: Scalar>(
    views: &EmbeddingSet<T>,
    mode: &[T],
    h_sq: &BandwidthVector<T>,
    out: &mut Vec<T>,
) {
    out.clear();
    out.extend(
        (0..views.n_views()).map(|p| (-sq_dist(views.view(p), mode) / h_sq.get(p)).exp()),
    );
}
