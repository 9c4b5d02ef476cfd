use crate::affinity::AffinityMatrix;
use crate::bandwidth::{gaussian_kernel, BandwidthVector};
use crate::embedding::EmbeddingSet;
use crate::linalg::dot;
use crate::scalar::Scalar;
use crate::solver::Hyperparams;

/// Shannon entropy `−Σ y_p ln y_p` with `0 ln 0 = 0`.
pub fn entropy<T: Scalar>(y: &[T]) -> T {
    -y.iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| v * v.ln())
        .sum::<T>()
}

/// Objective restricted to `y` for precomputed kernel values:
/// `−Σ y_p k_p − (λ/2) yᵀWy − λ_y H(y)`.
pub fn objective_from_kernels<T: Scalar>(
    kernels: &[T],
    y: &[T],
    w: &AffinityMatrix<T>,
    params: &Hyperparams,
) -> T {
    let lambda = T::lit(params.lambda);
    let lambda_y = T::lit(params.lambda_y);
    -dot(y, kernels) - lambda / T::lit(2.0) * w.quadratic_form(y) - lambda_y * entropy(y)
}

/// Full objective at `(m, y)`.
pub fn objective<T: Scalar>(
    views: &EmbeddingSet<T>,
    mode: &[T],
    y: &[T],
    w: &AffinityMatrix<T>,
    h_sq: &BandwidthVector<T>,
    params: &Hyperparams,
) -> T {
    let k = gaussian_kernel(views, mode, h_sq);
    objective_from_kernels(&k, y, w, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{text_affinity, DiagonalMode};
    use crate::embedding::{softmax_predictions, ClassEmbeddings};

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert!((entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    fn pair() -> (EmbeddingSet<f64>, ClassEmbeddings<f64>) {
        let views = EmbeddingSet::<f64>::from_rows(&[[0.8, 0.6], [0.8, 0.6]]).unwrap();
        let classes = ClassEmbeddings::<f64>::from_rows(&[[1.0, 0.0], [0.0, 1.0]], 10.0).unwrap();
        (views, classes)
    }

    #[test]
    fn single_view_objective_is_minus_one() {
        let views = EmbeddingSet::<f64>::from_rows(&[[0.0, 1.0]]).unwrap();
        let classes = ClassEmbeddings::<f64>::from_rows(&[[1.0, 0.0], [0.0, 1.0]], 10.0).unwrap();
        let w = text_affinity(&softmax_predictions(&views, &classes).unwrap(), DiagonalMode::Zeroed);
        let h = BandwidthVector::uniform(1, 0.5);
        let p = Hyperparams {
            lambda: 0.0,
            ..Default::default()
        };
        let l = objective(&views, &[0.0, 1.0], &[1.0], &w, &h, &p);
        assert_eq!(l, -1.0);
    }

    #[test]
    fn uniform_y_without_coupling() {
        let views = EmbeddingSet::<f64>::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]).unwrap();
        let classes = ClassEmbeddings::<f64>::from_rows(&[[1.0, 0.0], [0.0, 1.0]], 10.0).unwrap();
        let w = text_affinity(&softmax_predictions(&views, &classes).unwrap(), DiagonalMode::Zeroed);
        let h = BandwidthVector::from_squared(vec![0.5, 1.0, 2.0]);
        let p = Hyperparams {
            lambda: 0.0,
            ..Default::default()
        };
        let m = [0.6, 0.8];
        let k = gaussian_kernel(&views, &m, &h);
        let expected = -(k.iter().sum::<f64>()) / 3.0 - 0.2 * 3f64.ln();
        let l = objective(&views, &m, &[1.0 / 3.0; 3], &w, &h, &p);
        assert!((l - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_pair_hand_evaluation() {
        // Both kernels are 1 at m = f_1. With s = softmax(10·(0.8, 0.6)),
        // w_12 = ‖s‖², the coupling term is (λ/2)(2 w_12 · 1/4) and the
        // entropy term is λ_y ln 2.
        let (views, classes) = pair();
        let preds = softmax_predictions(&views, &classes).unwrap();
        let w = text_affinity(&preds, DiagonalMode::Zeroed);
        let e2 = (2.0f64).exp();
        let s0 = e2 / (e2 + 1.0);
        let w12 = s0 * s0 + (1.0 - s0) * (1.0 - s0);
        let expected = -1.0 - 2.0 * (2.0 * w12 * 0.25) - 0.2 * 2f64.ln();
        let h = BandwidthVector::uniform(2, 1.0);
        let l = objective(&views, &[0.8, 0.6], &[0.5, 0.5], &w, &h, &Hyperparams::default());
        assert!((l - expected).abs() < 1e-14, "{l} vs {expected}");
    }
}
