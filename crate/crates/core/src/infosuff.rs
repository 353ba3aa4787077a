//! Information sufficiency between embedders: the reduction in
//! cross-entropy of a target embedding `Z` obtained by conditioning on a
//! source embedding `U`, its dimension-normalized pairwise matrix, and the
//! per-embedder aggregate scores.

use std::fmt::Write as _;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split, standardize, Corpus, EmbeddingMatrix, SplitIndices};
use crate::density::{fit_conditional_kernel, fit_marginal_gm, train_with_early_stopping, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};
use crate::num::Scalar;
use crate::rng::{self, derive_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ISResult {
    pub source: String,
    pub target: String,
    /// Held-out cross-entropy of the marginal fit, nats.
    pub h_z: f64,
    /// Held-out cross-entropy of the conditional fit, nats.
    pub h_z_given_u: f64,
    pub raw_is: f64,
    /// `raw_is / dim(Z)`, nats per dimension.
    pub normalized_is: f64,
}

impl ISResult {
    fn new(source: &str, target: &str, h_z: f64, h_z_given_u: f64, target_dim: usize) -> Self {
        let raw_is = h_z - h_z_given_u;
        Self {
            source: source.to_string(),
            target: target.to_string(),
            h_z,
            h_z_given_u,
            raw_is,
            normalized_is: raw_is / target_dim as f64,
        }
    }

    pub fn value(&self, normalized: bool) -> f64 {
        if normalized {
            self.normalized_is
        } else {
            self.raw_is
        }
    }
}

fn check_aligned<T: Scalar>(u: &EmbeddingMatrix<T>, z: &EmbeddingMatrix<T>, split: &SplitIndices) -> Result<()> {
    if u.rows() != z.rows() {
        return Err(Error::RowCountMismatch {
            id: z.embedder_id.clone(),
            expected: u.rows(),
            found: z.rows(),
        });
    }
    if let Some(&bad) = split.train.iter().chain(&split.heldout).find(|&&i| i >= u.rows()) {
        return Err(Error::invalid(format!("split index {bad} out of range for {} rows", u.rows())));
    }
    Ok(())
}

/// Estimates `I_S(U → Z)`: both cross-entropies are fit on `split.train`
/// and evaluated on `split.heldout`. Inputs are expected standardized.
pub fn estimate_is<T: Scalar>(
    u: &EmbeddingMatrix<T>,
    z: &EmbeddingMatrix<T>,
    cfg: &TrainConfig,
    split: &SplitIndices,
) -> Result<ISResult> {
    check_aligned(u, z, split)?;
    let (z_train, z_held) = (z.select_rows(&split.train), z.select_rows(&split.heldout));
    let (_, marginal) = fit_marginal_gm(z_train.view(), z_held.view(), cfg)?;
    conditional_is(u, z, marginal.final_heldout_cross_entropy, cfg, split)
}

/// Second half of [`estimate_is`], reusing an already fitted marginal
/// cross-entropy for `Z`.
pub fn conditional_is<T: Scalar>(
    u: &EmbeddingMatrix<T>,
    z: &EmbeddingMatrix<T>,
    h_z: f64,
    cfg: &TrainConfig,
    split: &SplitIndices,
) -> Result<ISResult> {
    check_aligned(u, z, split)?;
    let (_, report) = fit_conditional_kernel(
        u.select_rows(&split.train).view(),
        z.select_rows(&split.train).view(),
        u.select_rows(&split.heldout).view(),
        z.select_rows(&split.heldout).view(),
        cfg,
    )?;
    Ok(ISResult::new(
        &u.embedder_id,
        &z.embedder_id,
        h_z,
        report.final_heldout_cross_entropy,
        z.dim(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOptions {
    pub seed: u64,
    pub heldout_fraction: f64,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    /// z-score every embedder before estimation.
    pub standardize: bool,
}

impl Default for PairwiseOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            heldout_fraction: 0.1,
            jobs: 0,
            standardize: true,
        }
    }
}

/// Estimates one ordered pair exactly as [`pairwise_is`] would for the
/// same corpus and options.
pub fn estimate_pair<T: Scalar>(
    corpus: &Corpus<T>,
    source: &str,
    target: &str,
    cfg: &TrainConfig,
    opts: &PairwiseOptions,
) -> Result<ISResult> {
    let prepare = |m: &EmbeddingMatrix<T>| if opts.standardize { standardize(m) } else { Ok(m.clone()) };
    let u = prepare(corpus.get(source)?)?;
    let z = prepare(corpus.get(target)?)?;
    let split = split(corpus.sample_count(), opts.heldout_fraction, derive_seed(opts.seed, &["split"]))?;
    let marginal_cfg = cfg.with_seed(derive_seed(opts.seed, &["marginal", target]));
    let (_, marginal) = fit_marginal_gm(
        z.select_rows(&split.train).view(),
        z.select_rows(&split.heldout).view(),
        &marginal_cfg,
    )?;
    let cfg = cfg.with_seed(derive_seed(opts.seed, &[source, target]));
    conditional_is(&u, &z, marginal.final_heldout_cross_entropy, &cfg, &split)
}

/// Dense cells of a parsed matrix CSV, `None` on the diagonal.
pub type MatrixCells = Vec<Vec<Option<f64>>>;

/// Directed matrix of information sufficiencies; the diagonal is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ISMatrix {
    pub embedder_ids: Vec<String>,
    entries: Vec<Option<ISResult>>,
}

impl ISMatrix {
    /// Assembles a matrix from off-diagonal results in any order.
    pub fn from_results(embedder_ids: Vec<String>, results: Vec<ISResult>) -> Result<Self> {
        let k = embedder_ids.len();
        let index = |id: &str| {
            embedder_ids
                .iter()
                .position(|e| e == id)
                .ok_or_else(|| Error::UnknownEmbedder(id.to_string()))
        };
        let mut entries = vec![None; k * k];
        for r in results {
            let (i, j) = (index(&r.source)?, index(&r.target)?);
            if i == j {
                return Err(Error::invalid(format!("self pair for {}", r.source)));
            }
            entries[i * k + j] = Some(r);
        }
        for i in 0..k {
            for j in (0..k).filter(|&j| j != i) {
                if entries[i * k + j].is_none() {
                    return Err(Error::invalid(format!(
                        "missing entry {} -> {}",
                        embedder_ids[i], embedder_ids[j]
                    )));
                }
            }
        }
        Ok(Self { embedder_ids, entries })
    }

    pub fn len(&self) -> usize {
        self.embedder_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embedder_ids.is_empty()
    }

    pub fn get(&self, source: usize, target: usize) -> Option<&ISResult> {
        let k = self.len();
        self.entries.get(source * k + target)?.as_ref()
    }

    pub fn results(&self) -> impl Iterator<Item = &ISResult> {
        self.entries.iter().flatten()
    }

    /// CSV with a header row and column of embedder ids and an empty
    /// diagonal; cells hold normalized IS.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for id in &self.embedder_ids {
            write!(out, ",{id}").unwrap();
        }
        out.push('\n');
        for (i, id) in self.embedder_ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.len() {
                out.push(',');
                if let Some(r) = self.get(i, j) {
                    write!(out, "{:?}", r.normalized_is).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`ISMatrix::to_csv`] into ids and a dense
    /// table with `None` on the diagonal.
    pub fn parse_csv(text: &str) -> Result<(Vec<String>, MatrixCells)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Empty("matrix csv"))?;
        let ids: Vec<String> = header
            .strip_prefix(',')
            .ok_or_else(|| Error::Csv {
                line: 1,
                msg: "header must start with an empty cell".into(),
            })?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::with_capacity(ids.len());
        for (i, line) in lines.enumerate() {
            let bad = |msg: String| Error::Csv { line: i + 2, msg };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != ids.len() + 1 || cells[0] != ids.get(i).map_or("", String::as_str) {
                return Err(bad("row does not match the header".into()));
            }
            let row = cells[1..]
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse().map(Some).map_err(|_| bad(format!("not a number: {c:?}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.len() != ids.len() {
            return Err(Error::Csv {
                line: rows.len() + 1,
                msg: "matrix is not square".into(),
            });
        }
        Ok((ids, rows))
    }

    pub fn to_json(&self) -> String {
        let records: Vec<&ISResult> = self.results().collect();
        serde_json::to_string_pretty(&records).expect("serializable")
    }
}

/// Estimates every ordered pair of the corpus. Each target's marginal is fit
/// once and shared by all sources; per-pair seeds derive from
/// `(seed, source, target)` so results do not depend on scheduling.
pub fn pairwise_is<T: Scalar>(corpus: &Corpus<T>, cfg: &TrainConfig, opts: &PairwiseOptions) -> Result<ISMatrix> {
    if corpus.len() < 2 {
        return Err(Error::invalid("pairwise estimation needs at least two embedders"));
    }
    let corpus = if opts.standardize {
        corpus.map_members(standardize)?
    } else {
        corpus.clone()
    };
    let split = split(corpus.sample_count(), opts.heldout_fraction, derive_seed(opts.seed, &["split"]))?;
    let members = corpus.members();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;

    pool.install(|| {
        let marginals = members
            .par_iter()
            .map(|z| {
                let cfg = cfg.with_seed(derive_seed(opts.seed, &["marginal", &z.embedder_id]));
                let (train, held) = (z.select_rows(&split.train), z.select_rows(&split.heldout));
                log::debug!("fitting marginal for {}", z.embedder_id);
                fit_marginal_gm(train.view(), held.view(), &cfg).map(|(_, r)| r.final_heldout_cross_entropy)
            })
            .collect::<Result<Vec<f64>>>()?;

        let pairs: Vec<(usize, usize)> = (0..members.len())
            .flat_map(|i| (0..members.len()).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        let results = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (u, z) = (&members[i], &members[j]);
                let cfg = cfg.with_seed(derive_seed(opts.seed, &[&u.embedder_id, &z.embedder_id]));
                let r = conditional_is(u, z, marginals[j], &cfg, &split)?;
                log::info!("{} -> {}: {:.4} nats/dim", r.source, r.target, r.normalized_is);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        ISMatrix::from_results(corpus.ids().iter().map(|s| s.to_string()).collect(), results)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ISScore {
    pub embedder_id: String,
    /// Aggregate of outgoing IS: how well this embedder simulates others.
    pub score: f64,
    /// Aggregate of incoming IS: how well others simulate this embedder.
    pub incoming_score: f64,
}

/// Exact median; mean of the two central values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl Aggregation {
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        match self {
            Aggregation::Median => median(values),
            Aggregation::Mean => mean(values),
        }
    }
}

pub fn score_with(m: &ISMatrix, k: usize, agg: Aggregation, normalized: bool) -> Result<ISScore> {
    if k >= m.len() {
        return Err(Error::invalid(format!("embedder index {k} out of range")));
    }
    let others = || (0..m.len()).filter(move |&l| l != k);
    let outgoing: Vec<f64> = others().filter_map(|l| m.get(k, l)).map(|r| r.value(normalized)).collect();
    let incoming: Vec<f64> = others().filter_map(|l| m.get(l, k)).map(|r| r.value(normalized)).collect();
    let empty = || Error::invalid("scores need at least two embedders");
    Ok(ISScore {
        embedder_id: m.embedder_ids[k].clone(),
        score: agg.apply(&outgoing).ok_or_else(empty)?,
        incoming_score: agg.apply(&incoming).ok_or_else(empty)?,
    })
}

/// Median of the outgoing (and incoming) normalized IS of embedder `k`.
pub fn is_score(m: &ISMatrix, k: usize) -> Result<ISScore> {
    score_with(m, k, Aggregation::Median, true)
}

pub fn mean_is_score(m: &ISMatrix, k: usize) -> Result<ISScore> {
    score_with(m, k, Aggregation::Mean, true)
}

pub fn all_scores(m: &ISMatrix, agg: Aggregation, normalized: bool) -> Result<Vec<ISScore>> {
    (0..m.len()).map(|k| score_with(m, k, agg, normalized)).collect()
}

pub fn scores_to_csv(scores: &[ISScore]) -> String {
    let mut out = String::from("embedder_id,score,incoming_score\n");
    for s in scores {
        writeln!(out, "{},{:?},{:?}", s.embedder_id, s.score, s.incoming_score).unwrap();
    }
    out
}

pub fn scores_from_csv(text: &str) -> Result<Vec<ISScore>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "embedder_id,score,incoming_score" => {}
        _ => {
            return Err(Error::Csv {
                line: 1,
                msg: "expected header embedder_id,score,incoming_score".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |msg: &str| Error::Csv {
                line: i + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad("expected 3 fields"));
            }
            let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("not a number"));
            Ok(ISScore {
                embedder_id: fields[0].to_string(),
                score: num(fields[1])?,
                incoming_score: num(fields[2])?,
            })
        })
        .collect()
}

/// Held-out mean squared error per dimension of a network regressing `z`
/// on `u` (same architecture as the conditional kernel).
pub fn l2_baseline<T: Scalar>(
    u: &EmbeddingMatrix<T>,
    z: &EmbeddingMatrix<T>,
    cfg: &TrainConfig,
    split: &SplitIndices,
) -> Result<f64> {
    cfg.validate()?;
    check_aligned(u, z, split)?;
    let (u_train, z_train) = (u.select_rows(&split.train), z.select_rows(&split.train));
    let (u_held, z_held) = (u.select_rows(&split.heldout), z.select_rows(&split.heldout));
    if u_held.nrows() == 0 || u_train.nrows() == 0 {
        return Err(Error::Empty("split"));
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut sizes = vec![u.dim()];
    sizes.extend(cfg.hidden_for(u.dim()));
    sizes.push(z.dim());
    let net = Mlp::<T>::new(&sizes, &mut rng);
    let opt = Adam::new(T::lit(cfg.learning_rate), &net.param_sizes());
    let mut state = (net, opt);
    let dz = T::lit(z.dim() as f64);

    let report = train_with_early_stopping(
        &mut state,
        cfg,
        u_train.nrows(),
        &mut rng,
        |(net, opt), batch| {
            let ub = u_train.select(Axis(0), batch);
            let zb = z_train.select(Axis(0), batch);
            let tape = net.forward_train(ub.view(), T::zero(), None);
            let resid = &tape.output - &zb;
            let n = T::lit(batch.len() as f64) * dz;
            let loss = resid.mapv(|r| r * r).sum() / n;
            let grads = net.backward(&tape, resid.mapv(|r| (r + r) / n));
            opt.step(&mut net.param_slices_mut(), &grads.slices());
            loss.as_f64()
        },
        |(net, _)| mse_per_dim(net, u_held.view(), z_held.view()),
    )?;
    Ok(report.final_heldout_cross_entropy)
}

fn mse_per_dim<T: Scalar>(net: &Mlp<T>, u: ArrayView2<T>, z: ArrayView2<T>) -> f64 {
    let resid = net.forward(u) - z;
    resid.mapv(|r| r * r).sum().as_f64() / resid.len() as f64
}
