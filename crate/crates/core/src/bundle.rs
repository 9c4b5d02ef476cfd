//! On-disk sample bundles.
//!
//! A bundle is a directory holding one test sample:
//!
//! ```text
//! header.toml        format, version, dimensions, temperature, class names
//! views.f32          N × d little-endian f32, row-major
//! classes_000.f32    K × d little-endian f32, one file per prompt set
//! classes_001.f32    ...
//! ```
//!
//! Rows are re-normalized on load and widened to the working scalar type.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{ClassEmbeddings, EmbeddingSet, DEFAULT_TEMPERATURE};
use crate::error::MtaError;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const FORMAT_NAME: &str = "mta-bundle";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_FILE: &str = "header.toml";
pub const VIEWS_FILE: &str = "views.f32";

pub fn class_file_name(set: usize) -> String {
    format!("classes_{set:03}.f32")
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: non-finite value at element {index}")]
    NonFinite { path: PathBuf, index: usize },

    #[error("invalid bundle contents: {0}")]
    Invalid(#[from] MtaError),
}

/// `header.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub format: String,
    pub version: u32,
    pub n_views: usize,
    pub n_classes: usize,
    pub dim: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub original_index: usize,
    #[serde(default = "one")]
    pub prompt_sets: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
    /// Ground-truth class, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    /// Free-form provenance (model id, crop parameters, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn one() -> usize {
    1
}

/// Raw contents of a bundle, exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub header: BundleHeader,
    pub views: Vec<f32>,
    pub class_sets: Vec<Vec<f32>>,
}

/// A bundle converted to working types.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub views: EmbeddingSet<T>,
    pub class_sets: Vec<ClassEmbeddings<T>>,
    pub header: BundleHeader,
}

/// Optional header fields supplied when writing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BundleMeta {
    pub label: Option<usize>,
    pub metadata: BTreeMap<String, String>,
}

fn format_err(path: &Path, reason: impl Into<String>) -> BundleError {
    BundleError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_f32s(path: &Path, count: usize) -> Result<Vec<f32>, BundleError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = count as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(BundleError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(BundleError::NonFinite {
            path: path.to_path_buf(),
            index,
        });
    }
    Ok(values)
}

fn write_f32s(path: &Path, values: &[f32]) -> Result<(), BundleError> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(io_err(path))
}

impl BundleHeader {
    fn check(&self, path: &Path) -> Result<(), BundleError> {
        if self.format != FORMAT_NAME {
            return Err(format_err(
                path,
                format!("not an {FORMAT_NAME} header (format = {:?})", self.format),
            ));
        }
        if self.version > FORMAT_VERSION {
            return Err(format_err(
                path,
                format!(
                    "bundle version {} is newer than the supported version {FORMAT_VERSION}; upgrade mta to read it",
                    self.version
                ),
            ));
        }
        if self.version == 0 {
            return Err(format_err(path, "bundle version 0 is invalid"));
        }
        if self.n_views == 0 || self.dim == 0 {
            return Err(format_err(path, "n_views and dim must be at least 1"));
        }
        if self.n_classes < 2 {
            return Err(format_err(path, "n_classes must be at least 2"));
        }
        if self.prompt_sets == 0 {
            return Err(format_err(path, "prompt_sets must be at least 1"));
        }
        if self.original_index >= self.n_views {
            return Err(format_err(
                path,
                format!("original_index {} out of range", self.original_index),
            ));
        }
        if !self.class_names.is_empty() && self.class_names.len() != self.n_classes {
            return Err(format_err(
                path,
                format!(
                    "{} class names for {} classes",
                    self.class_names.len(),
                    self.n_classes
                ),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(format_err(path, "temperature must be finite and positive"));
        }
        Ok(())
    }
}

/// Read and validate the bundle at `dir` without converting it.
pub fn read_bundle_raw(dir: &Path) -> Result<Bundle, BundleError> {
    let header_path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let header: BundleHeader =
        toml::from_str(&text).map_err(|e| format_err(&header_path, e.to_string()))?;
    header.check(&header_path)?;
    let views = read_f32s(&dir.join(VIEWS_FILE), header.n_views * header.dim)?;
    let class_sets = (0..header.prompt_sets)
        .map(|s| read_f32s(&dir.join(class_file_name(s)), header.n_classes * header.dim))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Bundle {
        header,
        views,
        class_sets,
    })
}

impl Bundle {
    /// Widen to `T` and normalize every row.
    pub fn to_sample<T: Scalar>(&self) -> Result<Sample<T>, BundleError> {
        let h = &self.header;
        let widen = |v: &[f32]| v.iter().map(|&x| T::lit(x as f64)).collect::<Vec<T>>();
        let views = EmbeddingSet::new(
            Matrix::from_vec(h.n_views, h.dim, widen(&self.views))?,
            h.original_index,
        )?;
        let class_sets = self
            .class_sets
            .iter()
            .map(|c| {
                ClassEmbeddings::new(
                    Matrix::from_vec(h.n_classes, h.dim, widen(c))?,
                    T::lit(h.temperature),
                    h.class_names.clone(),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Sample {
            views,
            class_sets,
            header: h.clone(),
        })
    }

    /// Write to `dir` (created if missing). Output bytes depend only on the
    /// bundle contents.
    pub fn write(&self, dir: &Path) -> Result<(), BundleError> {
        let h = &self.header;
        let header_path = dir.join(HEADER_FILE);
        h.check(&header_path)?;
        if self.views.len() != h.n_views * h.dim {
            return Err(BundleError::Invalid(MtaError::DimensionMismatch {
                expected: h.n_views * h.dim,
                found: self.views.len(),
            }));
        }
        if self.class_sets.len() != h.prompt_sets {
            return Err(BundleError::Invalid(MtaError::DimensionMismatch {
                expected: h.prompt_sets,
                found: self.class_sets.len(),
            }));
        }
        for c in &self.class_sets {
            if c.len() != h.n_classes * h.dim {
                return Err(BundleError::Invalid(MtaError::DimensionMismatch {
                    expected: h.n_classes * h.dim,
                    found: c.len(),
                }));
            }
        }
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let text = toml::to_string(h).map_err(|e| format_err(&header_path, e.to_string()))?;
        fs::write(&header_path, text).map_err(io_err(&header_path))?;
        write_f32s(&dir.join(VIEWS_FILE), &self.views)?;
        for (s, c) in self.class_sets.iter().enumerate() {
            write_f32s(&dir.join(class_file_name(s)), c)?;
        }
        Ok(())
    }
}

/// Read the bundle at `dir` into working types.
pub fn read_bundle<T: Scalar>(dir: &Path) -> Result<Sample<T>, BundleError> {
    read_bundle_raw(dir)?.to_sample()
}

/// Narrow to f32 and write a bundle. Temperature and class names come from
/// the first class set.
pub fn write_bundle<T: Scalar>(
    views: &EmbeddingSet<T>,
    class_sets: &[ClassEmbeddings<T>],
    meta: &BundleMeta,
    dir: &Path,
) -> Result<(), BundleError> {
    let first = class_sets
        .first()
        .ok_or(MtaError::Empty("bundle needs at least one class-embedding set"))?;
    for c in class_sets {
        if c.n_classes() != first.n_classes() || c.dim() != views.dim() {
            return Err(MtaError::DimensionMismatch {
                expected: first.n_classes() * views.dim(),
                found: c.n_classes() * c.dim(),
            }
            .into());
        }
    }
    let narrow = |v: &[T]| v.iter().map(|x| x.to_f64_lossy() as f32).collect::<Vec<f32>>();
    let bundle = Bundle {
        header: BundleHeader {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            n_views: views.n_views(),
            n_classes: first.n_classes(),
            dim: views.dim(),
            temperature: first.temperature().to_f64_lossy(),
            original_index: views.original_index(),
            prompt_sets: class_sets.len(),
            class_names: first.class_names().to_vec(),
            label: meta.label,
            metadata: meta.metadata.clone(),
        },
        views: narrow(views.views().as_slice()),
        class_sets: class_sets
            .iter()
            .map(|c| narrow(c.classes().as_slice()))
            .collect(),
    };
    bundle.write(dir)
}
