//! Embedding matrices, corpora of row-aligned embedders, and the
//! preprocessing applied before any estimation.

pub mod npy;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Npy,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "npy" => Some(Format::Npy),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

/// One embedder's outputs over a shared sample set, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T: Scalar = f64> {
    pub embedder_id: String,
    pub dataset_id: String,
    values: Array2<T>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(
        embedder_id: impl Into<String>,
        dataset_id: impl Into<String>,
        values: Array2<T>,
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("embedding matrix"));
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self {
            embedder_id: embedder_id.into(),
            dataset_id: dataset_id.into(),
            values: values.as_standard_layout().into_owned(),
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn with_values(&self, values: Array2<T>) -> Result<Self> {
        Self::new(self.embedder_id.clone(), self.dataset_id.clone(), values)
    }

    /// Gathers the given rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Array2<T> {
        self.values.select(Axis(0), idx)
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            embedder_id: self.embedder_id.clone(),
            dataset_id: self.dataset_id.clone(),
            values: self.values.mapv(|v| U::lit(v.as_f64())),
        }
    }
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    format: Format,
    embedder_id: &str,
    dataset_id: &str,
) -> Result<EmbeddingMatrix<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = match format {
        Format::Npy => {
            let (r, c, v) = npy::decode(&bytes)?;
            Array2::from_shape_vec((r, c), v).expect("shape checked by decoder")
        }
        Format::Csv => parse_csv(&bytes)?,
    };
    EmbeddingMatrix::new(embedder_id, dataset_id, values)
}

fn parse_csv(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut cols = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Csv {
                    line,
                    msg: format!("ragged row: expected {c} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Csv {
                line,
                msg: format!("not a number: {field:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::Empty("csv file"))?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("rectangular csv"))
}

pub fn save_npy(m: &EmbeddingMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = npy::encode(m.rows(), m.dim(), m.values.as_slice().expect("standard layout"));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_csv(m: &EmbeddingMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in m.values.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Row-aligned embedders evaluated on one dataset.
#[derive(Debug, Clone)]
pub struct Corpus<T: Scalar = f64> {
    pub dataset_id: String,
    members: Vec<EmbeddingMatrix<T>>,
}

impl<T: Scalar> Corpus<T> {
    pub fn sample_count(&self) -> usize {
        self.members[0].rows()
    }

    pub fn members(&self) -> &[EmbeddingMatrix<T>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.embedder_id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Result<&EmbeddingMatrix<T>> {
        self.members
            .iter()
            .find(|m| m.embedder_id == id)
            .ok_or_else(|| Error::UnknownEmbedder(id.to_string()))
    }

    pub fn map_members<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&EmbeddingMatrix<T>) -> Result<EmbeddingMatrix<T>>,
    {
        build_corpus(self.members.iter().map(f).collect::<Result<Vec<_>>>()?)
    }
}

pub fn build_corpus<T: Scalar>(matrices: Vec<EmbeddingMatrix<T>>) -> Result<Corpus<T>> {
    let first = matrices.first().ok_or(Error::Empty("corpus"))?;
    let (n, dataset_id) = (first.rows(), first.dataset_id.clone());
    let mut seen = HashSet::new();
    for m in &matrices {
        if m.rows() != n {
            return Err(Error::RowCountMismatch {
                id: m.embedder_id.clone(),
                expected: n,
                found: m.rows(),
            });
        }
        if m.dataset_id != dataset_id {
            return Err(Error::DatasetMismatch {
                id: m.embedder_id.clone(),
                expected: dataset_id,
                found: m.dataset_id.clone(),
            });
        }
        if !seen.insert(m.embedder_id.as_str()) {
            return Err(Error::DuplicateEmbedder(m.embedder_id.clone()));
        }
    }
    Ok(Corpus {
        dataset_id,
        members: matrices,
    })
}

/// Column z-scoring with population standard deviation. Constant columns are
/// centered and keep unit scale.
pub fn standardize<T: Scalar>(m: &EmbeddingMatrix<T>) -> Result<EmbeddingMatrix<T>> {
    if m.rows() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            found: m.rows(),
        });
    }
    let mean: Array1<T> = m.values.mean_axis(Axis(0)).expect("non-empty");
    let std = m.values.std_axis(Axis(0), T::zero());
    let floor = T::lit(1e-12);
    let scale = std.mapv(|s| if s < floor { T::one() } else { s });
    let z = (&m.values - &mean) / &scale;
    m.with_values(z)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub heldout: Vec<usize>,
}

/// Seeded train / held-out partition of `0..n`, both lists sorted.
pub fn split(n: usize, heldout_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(heldout_fraction > 0.0 && heldout_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "held-out fraction must lie in (0, 1), got {heldout_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, found: n });
    }
    let heldout_len = ((n as f64 * heldout_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let mut heldout = idx[..heldout_len].to_vec();
    let mut train = idx[heldout_len..].to_vec();
    heldout.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, heldout })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub format: Format,
}

/// `{"dataset_id": ..., "embedders": [{"id", "path", "format"}]}`. Relative
/// paths resolve against the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_id: String,
    pub embedders: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, base))
    }

    pub fn load_corpus(&self, base: &Path) -> Result<Corpus<f64>> {
        let matrices = self
            .embedders
            .iter()
            .map(|e| load_embeddings(base.join(&e.path), e.format, &e.id, &self.dataset_id))
            .collect::<Result<Vec<_>>>()?;
        build_corpus(matrices)
    }
}
