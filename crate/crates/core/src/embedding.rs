//! View and class embeddings, row normalization, and text-driven softmax
//! predictions for every view.

use crate::error::{MtaError, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::scalar::Scalar;

/// Default logit scale used when bundle metadata does not carry one.
pub const DEFAULT_TEMPERATURE: f64 = 100.0;

const MIN_ROW_NORM: f64 = 1e-12;

/// Scale every row to unit L2 norm.
pub fn l2_normalize<T: Scalar>(matrix: &Matrix<T>) -> Result<Matrix<T>> {
    if let Some((row, col)) = matrix.find_non_finite() {
        return Err(MtaError::NonFinite { row, col });
    }
    let mut out = matrix.clone();
    for i in 0..out.rows() {
        let n = norm(out.row(i));
        if n < T::lit(MIN_ROW_NORM) {
            return Err(MtaError::ZeroVector { row: i });
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// Numerically stable in-place softmax of one row of logits.
pub fn softmax_in_place<T: Scalar>(logits: &mut [T]) {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let mut total = T::zero();
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logits.iter_mut() {
        *v /= total;
    }
}

/// The augmented views of one test sample, rows on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T> {
    views: Matrix<T>,
    original_index: usize,
}

impl<T: Scalar> EmbeddingSet<T> {
    /// Normalizes the rows of `views`. Row `original_index` is the
    /// non-augmented image.
    pub fn new(views: Matrix<T>, original_index: usize) -> Result<Self> {
        if views.rows() == 0 {
            return Err(MtaError::Empty("embedding set needs at least one view"));
        }
        if views.cols() == 0 {
            return Err(MtaError::Empty("embedding dimension must be at least 1"));
        }
        if original_index >= views.rows() {
            return Err(MtaError::InvalidParameter {
                name: "original_index",
                reason: format!("{original_index} out of range for {} views", views.rows()),
            });
        }
        Ok(Self {
            views: l2_normalize(&views)?,
            original_index,
        })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, 0)
    }

    pub fn n_views(&self) -> usize {
        self.views.rows()
    }

    pub fn dim(&self) -> usize {
        self.views.cols()
    }

    pub fn original_index(&self) -> usize {
        self.original_index
    }

    pub fn view(&self, p: usize) -> &[T] {
        self.views.row(p)
    }

    pub fn original(&self) -> &[T] {
        self.views.row(self.original_index)
    }

    pub fn views(&self) -> &Matrix<T> {
        &self.views
    }

    /// Subset of views; `original_index` follows the original row if kept,
    /// otherwise it points at the first selected row.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(MtaError::Empty("view subset is empty"));
        }
        let original_index = idx
            .iter()
            .position(|&i| i == self.original_index)
            .unwrap_or(0);
        Ok(Self {
            views: self.views.select_rows(idx),
            original_index,
        })
    }

    /// Arithmetic mean of the views (not renormalized).
    pub fn mean(&self) -> Vec<T> {
        let n = T::from_usize_lossy(self.n_views());
        let mut m = vec![T::zero(); self.dim()];
        for row in self.views.iter_rows() {
            for (a, &b) in m.iter_mut().zip(row) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Class text embeddings with the logit temperature of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddings<T> {
    classes: Matrix<T>,
    temperature: T,
    class_names: Vec<String>,
}

impl<T: Scalar> ClassEmbeddings<T> {
    /// Normalizes the rows of `classes`. Empty `class_names` are filled with
    /// `class_<k>`.
    pub fn new(classes: Matrix<T>, temperature: T, class_names: Vec<String>) -> Result<Self> {
        if classes.rows() < 2 {
            return Err(MtaError::InvalidParameter {
                name: "n_classes",
                reason: format!("need at least 2 classes, got {}", classes.rows()),
            });
        }
        if !(temperature.is_finite() && temperature > T::zero()) {
            return Err(MtaError::InvalidParameter {
                name: "temperature",
                reason: format!("must be finite and positive, got {temperature}"),
            });
        }
        let class_names = if class_names.is_empty() {
            (0..classes.rows()).map(|k| format!("class_{k}")).collect()
        } else if class_names.len() != classes.rows() {
            return Err(MtaError::DimensionMismatch {
                expected: classes.rows(),
                found: class_names.len(),
            });
        } else {
            class_names
        };
        Ok(Self {
            classes: l2_normalize(&classes)?,
            temperature,
            class_names,
        })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R], temperature: T) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, temperature, Vec::new())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.rows()
    }

    pub fn dim(&self) -> usize {
        self.classes.cols()
    }

    pub fn temperature(&self) -> T {
        self.temperature
    }

    pub fn class(&self, k: usize) -> &[T] {
        self.classes.row(k)
    }

    pub fn classes(&self) -> &Matrix<T> {
        &self.classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Inner products of `v` with every class embedding.
    pub fn similarities(&self, v: &[T]) -> Vec<T> {
        self.classes.iter_rows().map(|t| dot(v, t)).collect()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(MtaError::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

/// Per-view softmax class probabilities, one row per view.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix<T> {
    probs: Matrix<T>,
}

impl<T: Scalar> PredictionMatrix<T> {
    pub fn probs(&self) -> &Matrix<T> {
        &self.probs
    }

    pub fn row(&self, p: usize) -> &[T] {
        self.probs.row(p)
    }

    pub fn n_views(&self) -> usize {
        self.probs.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.cols()
    }

    /// Shannon entropy of each view's prediction.
    pub fn entropies(&self) -> Vec<T> {
        self.probs
            .iter_rows()
            .map(|row| {
                -row.iter()
                    .filter(|&&s| s > T::zero())
                    .map(|&s| s * s.ln())
                    .sum::<T>()
            })
            .collect()
    }
}

/// `s_{p,k} = softmax_k(τ f_p · t_k)` for every view.
pub fn softmax_predictions<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
) -> Result<PredictionMatrix<T>> {
    classes.check_dim(views.dim())?;
    let tau = classes.temperature();
    let mut probs = Matrix::zeros(views.n_views(), classes.n_classes());
    for p in 0..views.n_views() {
        let f = views.view(p);
        let row = probs.row_mut(p);
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = tau * dot(f, classes.class(k));
        }
        softmax_in_place(row);
    }
    Ok(PredictionMatrix { probs })
}
