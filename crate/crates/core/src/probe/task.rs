use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{grid_search, train_probe, ProbeConfig, ProbeData, TaskKind};
use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::stats::PerformanceRow;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    #[serde(default)]
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::invalid(format!("split index {i} out of range for {n} rows")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("row {i} appears in more than one split")));
            }
        }
        if self.train.is_empty() || self.test.is_empty() {
            return Err(Error::Empty("train or test split"));
        }
        Ok(())
    }
}

/// `{"task_id", "kind", "features", "labels", "splits"}`. `features` points
/// at an embedder manifest, `labels` at a CSV with one value per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub task_id: String,
    pub kind: TaskKind,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub splits: Splits,
}

impl TaskManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let task = serde_json::from_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((task, base))
    }
}

/// One numeric label per line; blank lines are skipped.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Csv {
            line: i + 1,
            msg: format!("not a number: {line:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        out.push(v);
    }
    Ok(out)
}

/// Probes every embedder of the task. A single config without a validation
/// split is trained once; otherwise `grid` is searched over `seeds` runs.
pub fn run_task(task: &TaskManifest, base: &Path, grid: &[ProbeConfig], seeds: usize) -> Result<Vec<PerformanceRow>> {
    if grid.iter().any(|c| c.task_kind != task.kind) {
        return Err(Error::invalid("probe config kind differs from the task kind"));
    }
    let (manifest, features_base) = Manifest::read(base.join(&task.features))?;
    let corpus = manifest.load_corpus(&features_base)?;
    let labels = load_labels(base.join(&task.labels))?;
    if labels.len() != corpus.sample_count() {
        return Err(Error::RowCountMismatch {
            id: task.task_id.clone(),
            expected: corpus.sample_count(),
            found: labels.len(),
        });
    }
    task.splits.check(labels.len())?;

    let mut rows = Vec::new();
    for m in corpus.members() {
        let data = ProbeData::new(m.values().clone(), labels.clone())?;
        let train = data.select(&task.splits.train);
        let val = data.select(&task.splits.val);
        let test = data.select(&task.splits.test);
        let result = if grid.len() == 1 && (val.is_empty() || seeds <= 1) {
            train_probe(&train, &val, &test, &grid[0])?
        } else {
            grid_search(&train, &val, &test, grid, seeds)?.1
        };
        log::info!("{} on {}: {} = {:.4}", m.embedder_id, task.task_id, result.metric_name, result.value);
        rows.push(PerformanceRow {
            embedder_id: m.embedder_id.clone(),
            task_id: task.task_id.clone(),
            metric: result.metric_name,
            value: result.value,
        });
    }
    Ok(rows)
}
