//! Rank correlations between embedder scores and downstream performance.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infosuff::ISScore;
use crate::num::Scalar;

fn check_pair<T: Scalar>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            found: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in correlation input"));
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    let n = T::lit(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::Undefined("correlation with zero variance"));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn fractional_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = T::lit((start + 1 + end) as f64 / 2.0);
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of fractional ranks.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Pair counts behind Kendall's τ_b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub pairs: u64,
    /// pairs tied in x
    pub ties_x: u64,
    /// pairs tied in y
    pub ties_y: u64,
    /// concordant minus discordant
    pub score: i64,
}

impl PairCounts {
    pub fn tau_b(&self) -> Option<f64> {
        let dx = self.pairs - self.ties_x;
        let dy = self.pairs - self.ties_y;
        if dx == 0 || dy == 0 {
            return None;
        }
        Some(self.score as f64 / ((dx as f64) * (dy as f64)).sqrt())
    }
}

fn tied_pairs(run: u64) -> u64 {
    run * run.saturating_sub(1) / 2
}

/// Knight's O(n log n) pair counting: sort by (x, y), count tie runs, then
/// count discordant pairs as merge-sort inversions of the y sequence.
pub fn kendall_counts<T: Scalar>(x: &[T], y: &[T]) -> Result<PairCounts> {
    check_pair(x, y)?;
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .expect("finite")
            .then(y[a].partial_cmp(&y[b]).expect("finite"))
    });

    let (mut ties_x, mut ties_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                ties_xy += tied_pairs(run_xy);
                run_xy = 1;
            }
        } else {
            ties_x += tied_pairs(run_x);
            ties_xy += tied_pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    ties_x += tied_pairs(run_x);
    ties_xy += tied_pairs(run_xy);

    let mut ys: Vec<T> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    let swaps = merge_count(&mut ys, &mut buf);

    let mut ties_y = 0u64;
    let mut run = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            ties_y += tied_pairs(run);
            run = 1;
        }
    }
    ties_y += tied_pairs(run);

    let pairs = tied_pairs(n as u64);
    let score = pairs as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * swaps as i64;
    Ok(PairCounts {
        pairs,
        ties_x,
        ties_y,
        score,
    })
}

/// Sorts `v` ascending, returning the number of strict inversions.
fn merge_count<T: Scalar>(v: &mut [T], buf: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's τ_b with tie correction.
pub fn kendall_tau<T: Scalar>(x: &[T], y: &[T]) -> Result<f64> {
    kendall_counts(x, y)?
        .tau_b()
        .ok_or(Error::Undefined("kendall tau of an all-tied vector"))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auroc,
    Accuracy,
    R2,
    Custom,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auroc" => Ok(Metric::Auroc),
            "accuracy" => Ok(Metric::Accuracy),
            "r2" => Ok(Metric::R2),
            "custom" => Ok(Metric::Custom),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Auroc => "auroc",
            Metric::Accuracy => "accuracy",
            Metric::R2 => "r2",
            Metric::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub embedder_id: String,
    pub task_id: String,
    pub metric: Metric,
    pub value: f64,
}

/// Downstream results, one row per (embedder, task). Higher is better for
/// every metric.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceTable {
    rows: Vec<PerformanceRow>,
}

impl PerformanceTable {
    pub fn new(rows: Vec<PerformanceRow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !r.value.is_finite() {
                return Err(Error::invalid(format!("non-finite value for {}/{}", r.embedder_id, r.task_id)));
            }
            if !seen.insert((r.embedder_id.as_str(), r.task_id.as_str())) {
                return Err(Error::invalid(format!("duplicate row {}/{}", r.embedder_id, r.task_id)));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[PerformanceRow] {
        &self.rows
    }

    pub fn task_ids(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.task_id.as_str()).collect()
    }

    fn task(&self, task: &str) -> impl Iterator<Item = &PerformanceRow> {
        let task = task.to_string();
        self.rows.iter().filter(move |r| r.task_id == task)
    }

    /// CSV `embedder_id,task_id,metric,value`; a header line with those
    /// names is optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line == "embedder_id,task_id,metric,value") {
                continue;
            }
            let bad = |msg: String| Error::Csv { line: line_no, msg };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", f.len())));
            }
            let metric = f[2].parse::<Metric>().map_err(|e| bad(e.to_string()))?;
            let value = f[3]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("not a number: {:?}", f[3])))?;
            rows.push(PerformanceRow {
                embedder_id: f[0].to_string(),
                task_id: f[1].to_string(),
                metric,
                value,
            });
        }
        Self::new(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("embedder_id,task_id,metric,value\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{:?}", r.embedder_id, r.task_id, r.metric, r.value).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Task,
    Group,
}

/// Coefficients are `None` when undefined (constant inputs); Pearson is
/// also `None` for groups that mix metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub id: String,
    pub kind: ReportKind,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub n: usize,
}

fn report(id: &str, kind: ReportKind, x: &[f64], y: &[f64], with_pearson: bool) -> Result<CorrelationReport> {
    let defined = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(CorrelationReport {
        id: id.to_string(),
        kind,
        pearson: if with_pearson { defined(pearson(x, y))? } else { None },
        spearman: defined(spearman(x, y))?,
        kendall: defined(kendall_tau(x, y))?,
        n: x.len(),
    })
}

/// Task groups: group id → task ids.
pub type TaskGroups = BTreeMap<String, Vec<String>>;

/// Correlates scores with each task's metric, and with the mean per-task
/// rank of each group (rank 1 = worst, so agreement gives positive values).
pub fn correlate_scores(
    scores: &[ISScore],
    table: &PerformanceTable,
    groups: &TaskGroups,
) -> Result<Vec<CorrelationReport>> {
    let score_of: HashMap<&str, f64> = scores.iter().map(|s| (s.embedder_id.as_str(), s.score)).collect();
    let mut reports = Vec::new();

    for task in table.task_ids() {
        let (x, y): (Vec<f64>, Vec<f64>) = table
            .task(task)
            .filter_map(|r| score_of.get(r.embedder_id.as_str()).map(|&s| (s, r.value)))
            .unzip();
        if x.len() < 2 {
            return Err(Error::NoOverlap(format!("task {task} shares fewer than two embedders with the scores")));
        }
        reports.push(report(task, ReportKind::Task, &x, &y, true)?);
    }

    for (group, tasks) in groups {
        if tasks.is_empty() {
            return Err(Error::invalid(format!("group {group} has no tasks")));
        }
        let mut common: BTreeSet<&str> = score_of.keys().copied().collect();
        let mut metrics = BTreeSet::new();
        for t in tasks {
            let present: BTreeSet<&str> = table.task(t).map(|r| r.embedder_id.as_str()).collect();
            if present.is_empty() {
                return Err(Error::invalid(format!("group {group}: unknown task {t}")));
            }
            common = &common & &present;
            metrics.extend(table.task(t).map(|r| r.metric.clone()));
        }
        if common.len() < 2 {
            return Err(Error::NoOverlap(format!(
                "group {group} has fewer than two embedders common to all its tasks and the scores"
            )));
        }
        let ids: Vec<&str> = common.into_iter().collect();
        let mut mean_rank = vec![0.0; ids.len()];
        for t in tasks {
            let by_id: HashMap<&str, f64> = table.task(t).map(|r| (r.embedder_id.as_str(), r.value)).collect();
            let values: Vec<f64> = ids.iter().map(|id| by_id[id]).collect();
            for (m, r) in mean_rank.iter_mut().zip(fractional_ranks(&values)) {
                *m += r / tasks.len() as f64;
            }
        }
        let x: Vec<f64> = ids.iter().map(|id| score_of[id]).collect();
        reports.push(report(group, ReportKind::Group, &x, &mean_rank, metrics.len() == 1)?);
    }
    Ok(reports)
}

/// `task_id,embedder_id,score,value` rows for external plotting.
pub fn scatter_csv(scores: &[ISScore], table: &PerformanceTable) -> String {
    let score_of: HashMap<&str, f64> = scores.iter().map(|s| (s.embedder_id.as_str(), s.score)).collect();
    let mut out = String::from("task_id,embedder_id,score,value\n");
    for r in table.rows() {
        if let Some(s) = score_of.get(r.embedder_id.as_str()) {
            writeln!(out, "{},{},{:?},{:?}", r.task_id, r.embedder_id, s, r.value).unwrap();
        }
    }
    out
}
