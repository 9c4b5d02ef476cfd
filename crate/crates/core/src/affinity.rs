//! Pairwise view affinities coupling the inlierness scores.

use serde::{Deserialize, Serialize};

use crate::embedding::{softmax_predictions, ClassEmbeddings, EmbeddingSet, PredictionMatrix};
use crate::error::Result;
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

/// Which features the affinity is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffinityKind {
    /// Inner products of the per-view softmax predictions.
    #[default]
    Text,
    /// Inner products of the raw view embeddings.
    Vision,
}

/// Treatment of the `p = q` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagonalMode {
    /// `w_pp = 0`.
    #[default]
    Zeroed,
    /// `w_pp = ‖s_p‖²` (or `‖f_p‖²`); the text Gram matrix is then PSD.
    Kept,
}

/// Symmetric N×N affinity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix<T> {
    w: Matrix<T>,
    diagonal_mode: DiagonalMode,
}

impl<T: Scalar> AffinityMatrix<T> {
    pub fn matrix(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn diagonal_mode(&self) -> DiagonalMode {
        self.diagonal_mode
    }

    pub fn len(&self) -> usize {
        self.w.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.rows() == 0
    }

    pub fn get(&self, p: usize, q: usize) -> T {
        self.w.get(p, q)
    }

    /// `W y`.
    pub fn apply(&self, y: &[T]) -> Vec<T> {
        self.w.iter_rows().map(|row| dot(row, y)).collect()
    }

    /// `yᵀ W y`.
    pub fn quadratic_form(&self, y: &[T]) -> T {
        dot(&self.apply(y), y)
    }

    /// Same matrix with rows and columns reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = perm.len();
        let mut w = Matrix::zeros(n, n);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                w.set(i, j, self.w.get(pi, pj));
            }
        }
        Self {
            w,
            diagonal_mode: self.diagonal_mode,
        }
    }

    /// Principal submatrix over `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        self.permuted(idx)
    }
}

fn gram<T: Scalar>(rows: &Matrix<T>, diagonal_mode: DiagonalMode) -> AffinityMatrix<T> {
    let n = rows.rows();
    let mut w = Matrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let v = if p == q && diagonal_mode == DiagonalMode::Zeroed {
                T::zero()
            } else {
                dot(rows.row(p), rows.row(q))
            };
            w.set(p, q, v);
            w.set(q, p, v);
        }
    }
    AffinityMatrix { w, diagonal_mode }
}

/// `w_pq = s_p · s_q`.
pub fn text_affinity<T: Scalar>(
    preds: &PredictionMatrix<T>,
    diagonal_mode: DiagonalMode,
) -> AffinityMatrix<T> {
    gram(preds.probs(), diagonal_mode)
}

/// `w_pq = f_p · f_q`.
pub fn vision_affinity<T: Scalar>(
    views: &EmbeddingSet<T>,
    diagonal_mode: DiagonalMode,
) -> AffinityMatrix<T> {
    gram(views.views(), diagonal_mode)
}

/// Affinity of the requested kind for one sample.
pub fn build_affinity<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
    kind: AffinityKind,
    diagonal_mode: DiagonalMode,
) -> Result<AffinityMatrix<T>> {
    match kind {
        AffinityKind::Text => Ok(text_affinity(
            &softmax_predictions(views, classes)?,
            diagonal_mode,
        )),
        AffinityKind::Vision => {
            classes.check_dim(views.dim())?;
            Ok(vision_affinity(views, diagonal_mode))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(rows: &[[f64; 3]]) -> PredictionMatrix<f64> {
        // Softmax of large one-hot logits reproduces near one-hot rows; build
        // through the public path with a huge temperature instead.
        let views = EmbeddingSet::<f64>::from_rows(rows).unwrap();
        let classes = ClassEmbeddings::<f64>::from_rows(
            &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            1e4,
        )
        .unwrap();
        softmax_predictions(&views, &classes).unwrap()
    }

    #[test]
    fn same_one_hot_gives_one() {
        let s = preds(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let w = text_affinity(&s, DiagonalMode::Zeroed);
        assert!((w.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(w.get(0, 0), 0.0);
        assert_eq!(w.get(1, 1), 0.0);
    }

    #[test]
    fn different_one_hot_gives_zero() {
        let s = preds(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let w = text_affinity(&s, DiagonalMode::Kept);
        assert!(w.get(0, 1).abs() < 1e-12);
        assert!((w.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_rows_give_one_over_k() {
        let views = EmbeddingSet::<f64>::from_rows(&[[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, -1.0]]).unwrap();
        let classes = ClassEmbeddings::<f64>::from_rows(
            &[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            100.0,
        )
        .unwrap();
        let w = build_affinity(&views, &classes, AffinityKind::Text, DiagonalMode::Zeroed).unwrap();
        assert!((w.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn vision_affinity_extremes() {
        let views =
            EmbeddingSet::<f64>::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let w = vision_affinity(&views, DiagonalMode::Zeroed);
        assert!((w.get(0, 1) - 1.0).abs() < 1e-15);
        assert!(w.get(0, 2).abs() < 1e-15);
        assert!((w.get(0, 3) + 1.0).abs() < 1e-15);
        assert_eq!(w.get(2, 2), 0.0);
        let kept = vision_affinity(&views, DiagonalMode::Kept);
        assert!((kept.get(2, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_is_exactly_symmetric() {
        let views = EmbeddingSet::<f64>::from_rows(&[
            [0.3, 0.1, 0.7],
            [0.2, 0.9, 0.1],
            [0.5, 0.5, 0.5],
            [0.8, 0.1, 0.05],
        ])
        .unwrap();
        let classes =
            ClassEmbeddings::<f64>::from_rows(&[[1.0, 0.1, 0.0], [0.0, 1.0, 0.2], [0.1, 0.0, 1.0]], 20.0)
                .unwrap();
        for kind in [AffinityKind::Text, AffinityKind::Vision] {
            let w = build_affinity(&views, &classes, kind, DiagonalMode::Kept).unwrap();
            for p in 0..4 {
                for q in 0..4 {
                    assert_eq!(w.get(p, q).to_bits(), w.get(q, p).to_bits());
                }
            }
        }
    }
}
