//! Downstream probes, grid search and the KNN label-consistency proxy.

mod knn;
mod metrics;
mod task;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use knn::{knn_consistency, nearest_neighbors, squared_distance, KnnConsistencyResult};
pub use metrics::{accuracy, auroc, r2};
pub use task::{load_labels, run_task, Splits, TaskManifest};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};
use crate::num::Scalar;
use crate::rng;
use crate::stats::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    Multiclass,
    Regression,
}

impl TaskKind {
    pub fn metric(self) -> Metric {
        match self {
            TaskKind::Binary => Metric::Auroc,
            TaskKind::Multiclass => Metric::Accuracy,
            TaskKind::Regression => Metric::R2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden_widths: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub task_kind: TaskKind,
}

impl ProbeConfig {
    /// Two hidden layers of 256, two epochs, no early stopping.
    pub fn text_default(task_kind: TaskKind) -> Self {
        Self {
            hidden_widths: vec![256, 256],
            dropout: 0.0,
            epochs: 2,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            task_kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::invalid("probe counts must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// `min(200, 200·5000/size)`, at least one epoch.
pub fn epochs_for_task_size(size: usize) -> usize {
    let scaled = 200.0 * 5000.0 / size.max(1) as f64;
    (scaled.floor() as usize).clamp(1, 200)
}

/// Dropout {0, 0.2} × width {4, 8, …, 128} × depth {1, 2, 3}, with the
/// epoch count set from the task size.
pub fn grid_lattice(task_kind: TaskKind, task_size: usize, learning_rate: f64, batch_size: usize) -> Vec<ProbeConfig> {
    let mut grid = Vec::new();
    for dropout in [0.0, 0.2] {
        for width in [4, 8, 16, 32, 64, 128] {
            for depth in 1..=3 {
                grid.push(ProbeConfig {
                    hidden_widths: vec![width; depth],
                    dropout,
                    epochs: epochs_for_task_size(task_size),
                    learning_rate,
                    batch_size,
                    seed: 0,
                    task_kind,
                });
            }
        }
    }
    grid
}

/// Features and labels for one split. Class labels are stored as
/// non-negative integers in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeData<T: Scalar = f64> {
    pub x: Array2<T>,
    pub y: Vec<f64>,
}

impl<T: Scalar> ProbeData<T> {
    pub fn new(x: Array2<T>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite probe data"));
        }
        Ok(Self { x, y })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            x: Array2::zeros((0, dim)),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub metric_name: Metric,
    pub value: f64,
    pub per_seed: Vec<f64>,
}

fn class_of(y: f64) -> Result<usize> {
    if y >= 0.0 && y.fract() == 0.0 {
        Ok(y as usize)
    } else {
        Err(Error::invalid(format!("class label {y} is not a non-negative integer")))
    }
}

/// A trained probe together with its output encoding.
#[derive(Debug, Clone)]
pub struct FittedProbe<T: Scalar> {
    net: Mlp<T>,
    kind: TaskKind,
    y_mean: f64,
    y_scale: f64,
}

impl<T: Scalar> FittedProbe<T> {
    pub fn outputs(&self, x: ArrayView2<T>) -> Array2<T> {
        self.net.forward(x)
    }

    /// Metric of the task kind on `data`.
    pub fn evaluate(&self, data: &ProbeData<T>) -> Result<f64> {
        let out = self.outputs(data.x.view());
        match self.kind {
            TaskKind::Binary => {
                let scores: Vec<f64> = out.column(0).iter().map(|v| v.as_f64()).collect();
                let pos: Vec<bool> = data.y.iter().map(|&y| y == 1.0).collect();
                auroc(&scores, &pos)
            }
            TaskKind::Multiclass => {
                let pred: Vec<usize> = out
                    .rows()
                    .into_iter()
                    .map(|r| {
                        let mut best = 0;
                        for (c, &v) in r.iter().enumerate() {
                            if v > r[best] {
                                best = c;
                            }
                        }
                        best
                    })
                    .collect();
                let truth = data.y.iter().map(|&y| class_of(y)).collect::<Result<Vec<_>>>()?;
                accuracy(&pred, &truth)
            }
            TaskKind::Regression => {
                let pred: Vec<f64> = out.column(0).iter().map(|v| v.as_f64() * self.y_scale + self.y_mean).collect();
                r2(&pred, &data.y)
            }
        }
    }
}

fn check_labels(kind: TaskKind, train: &[f64], others: &[&[f64]]) -> Result<usize> {
    match kind {
        TaskKind::Regression => Ok(1),
        TaskKind::Binary => {
            for &y in train.iter().chain(others.iter().flat_map(|s| s.iter())) {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::invalid(format!("binary label {y} is not 0 or 1")));
                }
            }
            if !(train.contains(&0.0) && train.contains(&1.0)) {
                return Err(Error::invalid("training labels contain a single class"));
            }
            Ok(1)
        }
        TaskKind::Multiclass => {
            let mut classes = 0;
            for &y in train.iter().chain(others.iter().flat_map(|s| s.iter())) {
                classes = classes.max(class_of(y)? + 1);
            }
            let first = train.first().copied();
            if train.iter().all(|&y| Some(y) == first) {
                return Err(Error::invalid("training labels contain a single class"));
            }
            Ok(classes)
        }
    }
}

/// Trains a probe. With a non-empty validation split the epoch with the
/// best validation metric is kept, otherwise the last one. Returns the
/// fitted probe and its validation metric.
pub fn fit_probe<T: Scalar>(
    train: &ProbeData<T>,
    val: &ProbeData<T>,
    cfg: &ProbeConfig,
) -> Result<(FittedProbe<T>, Option<f64>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if val.x.ncols() != train.x.ncols() && !val.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: train.x.ncols(),
            found: val.x.ncols(),
        });
    }
    let outputs = check_labels(cfg.task_kind, &train.y, &[&val.y])?;
    let (y_mean, y_scale) = if cfg.task_kind == TaskKind::Regression {
        let n = train.len() as f64;
        let mean = train.y.iter().sum::<f64>() / n;
        let sd = (train.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        (mean, if sd > 1e-12 { sd } else { 1.0 })
    } else {
        (0.0, 1.0)
    };

    let mut rng = rng::seeded(rng::derive_seed(cfg.seed, &["probe"]));
    let mut sizes = vec![train.x.ncols()];
    sizes.extend_from_slice(&cfg.hidden_widths);
    sizes.push(outputs);
    let mut probe = FittedProbe {
        net: Mlp::new(&sizes, &mut rng),
        kind: cfg.task_kind,
        y_mean,
        y_scale,
    };
    let mut adam = Adam::new(T::lit(cfg.learning_rate), &probe.net.param_sizes());
    let dropout = T::lit(cfg.dropout);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, Mlp<T>)> = None;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = train.x.select(Axis(0), batch);
            let tape = probe.net.forward_train(xb.view(), dropout, Some(&mut rng));
            let grad = output_gradient(&probe, &tape.output, batch.iter().map(|&i| train.y[i]))?;
            let grads = probe.net.backward(&tape, grad);
            let g = grads.slices();
            adam.step(&mut probe.net.param_slices_mut(), &g);
        }
        if probe.net.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
            return Err(Error::Solver("probe training diverged".into()));
        }
        if !val.is_empty() {
            let m = probe.evaluate(val)?;
            if best.as_ref().is_none_or(|(b, _)| m > *b) {
                best = Some((m, probe.net.clone()));
            }
        }
    }
    let val_metric = best.map(|(m, net)| {
        probe.net = net;
        m
    });
    Ok((probe, val_metric))
}

/// d(mean loss)/d(output) for a batch.
fn output_gradient<T: Scalar>(
    probe: &FittedProbe<T>,
    out: &Array2<T>,
    labels: impl Iterator<Item = f64>,
) -> Result<Array2<T>> {
    let b = T::lit(out.nrows() as f64);
    let mut grad = Array2::zeros(out.dim());
    for ((mut g, o), y) in grad.rows_mut().into_iter().zip(out.rows()).zip(labels) {
        match probe.kind {
            TaskKind::Binary => {
                let p = T::one() / (T::one() + (-o[0]).exp());
                g[0] = (p - T::lit(y)) / b;
            }
            TaskKind::Multiclass => {
                let max = o.iter().copied().fold(T::neg_infinity(), T::max);
                let e: Array1<T> = o.mapv(|v| (v - max).exp());
                let z = e.sum();
                for (c, (gc, ec)) in g.iter_mut().zip(e.iter()).enumerate() {
                    let target = if c == class_of(y)? { T::one() } else { T::zero() };
                    *gc = (*ec / z - target) / b;
                }
            }
            TaskKind::Regression => {
                let t = T::lit((y - probe.y_mean) / probe.y_scale);
                g[0] = (o[0] - t) / b;
            }
        }
    }
    Ok(grad)
}

/// Trains on `train`, selects the checkpoint on `val`, reports on `test`.
pub fn train_probe<T: Scalar>(
    train: &ProbeData<T>,
    val: &ProbeData<T>,
    test: &ProbeData<T>,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    let (probe, _) = fit_probe(train, val, cfg)?;
    let value = probe.evaluate(test)?;
    Ok(ProbeResult {
        metric_name: cfg.task_kind.metric(),
        value,
        per_seed: vec![value],
    })
}

/// Picks the config with the best mean validation metric over `seeds`
/// runs (first wins ties) and reports its mean test metric.
pub fn grid_search<T: Scalar>(
    train: &ProbeData<T>,
    val: &ProbeData<T>,
    test: &ProbeData<T>,
    grid: &[ProbeConfig],
    seeds: usize,
) -> Result<(ProbeConfig, ProbeResult)> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    if seeds == 0 {
        return Err(Error::invalid("seeds must be positive"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..seeds).map(move |s| (g, s))).collect();
    let runs: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(g, s)| {
            let mut cfg = grid[g].clone();
            cfg.seed = rng::derive_seed(grid[g].seed, &["seed", &s.to_string()]);
            let (probe, val_metric) = fit_probe(train, val, &cfg)?;
            Ok((val_metric.expect("validation split is non-empty"), probe.evaluate(test)?))
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for g in 0..grid.len() {
        let mean_val = runs[g * seeds..(g + 1) * seeds].iter().map(|r| r.0).sum::<f64>() / seeds as f64;
        if mean_val > best_val {
            best = g;
            best_val = mean_val;
        }
    }
    let per_seed: Vec<f64> = runs[best * seeds..(best + 1) * seeds].iter().map(|r| r.1).collect();
    let value = per_seed.iter().sum::<f64>() / seeds as f64;
    Ok((
        grid[best].clone(),
        ProbeResult {
            metric_name: grid[best].task_kind.metric(),
            value,
            per_seed,
        },
    ))
}
