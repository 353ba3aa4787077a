//! End-to-end runs that read manifests and write report files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelFile, DiscreteChannel, DiscreteTask, LeCamReport};
use crate::data::{Corpus, Manifest};
use crate::density::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::{build_graph_with_scores, louvain, ISGraph, Partition};
use crate::infosuff::{all_scores, estimate_pair, pairwise_is, scores_from_csv, scores_to_csv, Aggregation};
use crate::infosuff::{ISMatrix, ISResult, ISScore, PairwiseOptions};
use crate::rng;
use crate::stats::{correlate_scores, scatter_csv, CorrelationReport, PerformanceTable, TaskGroups};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub components: usize,
    pub seed: u64,
    pub heldout_fraction: f64,
    pub threshold: f64,
    pub aggregation: Aggregation,
    /// 0 uses every core.
    pub jobs: usize,
    pub max_epochs: usize,
    /// Divide IS by the target dimension before aggregating.
    pub normalize: bool,
    pub resolution: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            manifest: PathBuf::new(),
            out: PathBuf::from("."),
            components: train.components,
            seed: 0,
            heldout_fraction: 0.1,
            threshold: 0.0,
            aggregation: Aggregation::Median,
            jobs: 0,
            max_epochs: train.max_epochs,
            normalize: true,
            resolution: 1.0,
        }
    }
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            components: self.components,
            max_epochs: self.max_epochs,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn pairwise_options(&self) -> PairwiseOptions {
        PairwiseOptions {
            seed: self.seed,
            heldout_fraction: self.heldout_fraction,
            jobs: self.jobs,
            standardize: true,
        }
    }

    /// Checks every value before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return Err(Error::invalid("heldout fraction must be in (0, 1)"));
        }
        if self.threshold.is_nan() {
            return Err(Error::invalid("threshold is NaN"));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::invalid("resolution must be positive"));
        }
        Ok(())
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let (manifest, base) = Manifest::read(&self.manifest)?;
        manifest.load_corpus(&base)
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let name = path.file_name().ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(contents.as_bytes())?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn run_estimate(cfg: &RunConfig, source: &str, target: &str) -> Result<ISResult> {
    cfg.validate()?;
    let corpus = cfg.load_corpus()?;
    corpus.get(source)?;
    corpus.get(target)?;
    if source == target {
        return Err(Error::invalid("source and target must differ"));
    }
    estimate_pair(&corpus, source, target, &cfg.train_config(), &cfg.pairwise_options())
}

#[derive(Debug, Clone)]
pub struct MatrixOutputs {
    pub matrix: ISMatrix,
    pub scores: Vec<ISScore>,
    pub graph: ISGraph,
    pub partition: Partition,
}

/// Matrix, scores, graph and communities for a loaded corpus.
pub fn matrix_outputs(corpus: &Corpus, cfg: &RunConfig) -> Result<MatrixOutputs> {
    cfg.validate()?;
    let matrix = pairwise_is(corpus, &cfg.train_config(), &cfg.pairwise_options())?;
    outputs_from_matrix(matrix, cfg)
}

pub fn outputs_from_matrix(matrix: ISMatrix, cfg: &RunConfig) -> Result<MatrixOutputs> {
    let scores = all_scores(&matrix, cfg.aggregation, cfg.normalize)?;
    let graph = build_graph_with_scores(&matrix, cfg.threshold, &scores)?;
    let partition = louvain(&graph, cfg.resolution, cfg.seed)?;
    Ok(MatrixOutputs {
        matrix,
        scores,
        graph,
        partition,
    })
}

/// Writes `is_matrix.csv`, `is_scores.csv`, `graph.dot`, `communities.csv`
/// and `is_results.json` into `cfg.out`.
pub fn run_matrix(cfg: &RunConfig) -> Result<MatrixOutputs> {
    cfg.validate()?;
    let corpus = cfg.load_corpus()?;
    if corpus.len() < 2 {
        return Err(Error::invalid("the manifest needs at least two embedders"));
    }
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let outputs = matrix_outputs(&corpus, cfg)?;
    write_matrix_outputs(&cfg.out, &outputs)?;
    Ok(outputs)
}

pub fn write_matrix_outputs(dir: &Path, o: &MatrixOutputs) -> Result<()> {
    write_atomic(dir.join("is_matrix.csv"), &o.matrix.to_csv())?;
    write_atomic(dir.join("is_scores.csv"), &scores_to_csv(&o.scores))?;
    write_atomic(dir.join("graph.dot"), &o.graph.to_dot())?;
    write_atomic(dir.join("communities.csv"), &o.partition.to_csv(&o.graph))?;
    write_atomic(dir.join("is_results.json"), &o.matrix.to_json())
}

/// Reads scores, performances and optional groups (`{"group": ["task", …]}`),
/// writes `correlation_report.json` and `scatter.csv` into `out`.
pub fn run_correlate(scores: &Path, performance: &Path, groups: Option<&Path>, out: &Path) -> Result<Vec<CorrelationReport>> {
    let scores = scores_from_csv(&read(scores)?)?;
    let table = PerformanceTable::from_csv(&read(performance)?)?;
    let groups: TaskGroups = match groups {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => TaskGroups::new(),
    };
    let report = correlate_scores(&scores, &table, &groups)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_atomic(out.join("correlation_report.json"), &serde_json::to_string_pretty(&report)?)?;
    write_atomic(out.join("scatter.csv"), &scatter_csv(&scores, &table))?;
    Ok(report)
}

pub fn read_channel(path: &Path) -> Result<(DiscreteChannel, Vec<f64>)> {
    let file: ChannelFile = serde_json::from_str(&read(path)?)?;
    Ok((file.channel()?, file.prior_or_uniform()))
}

pub fn read_task(path: &Path) -> Result<DiscreteTask> {
    let file: ChannelFile = serde_json::from_str(&read(path)?)?;
    file.task()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficiencyReport {
    pub delta: f64,
    pub delta_reverse: f64,
    pub witness: Vec<Vec<f64>>,
    pub witness_reverse: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// δ(u→v) and δ(v→u) under `prior` (uniform when absent).
pub fn channel_deficiency(u: &DiscreteChannel, v: &DiscreteChannel, prior: Option<&[f64]>) -> Result<DeficiencyReport> {
    let uniform = channel::uniform_prior(u.inputs());
    let prior = prior.unwrap_or(&uniform);
    let fwd = channel::deficiency(u, v, prior)?;
    let rev = channel::deficiency(v, u, prior)?;
    Ok(DeficiencyReport {
        delta: fwd.value,
        delta_reverse: rev.value,
        witness: fwd.witness.rows(),
        witness_reverse: rev.witness.rows(),
        iterations: fwd.iterations + rev.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesReport {
    pub risk: f64,
}

pub fn channel_bayes(c: &DiscreteChannel, task: &DiscreteTask) -> Result<BayesReport> {
    Ok(BayesReport {
        risk: channel::bayes_risk(c, task)?,
    })
}

/// Checks the bound on the given tasks plus `random` tasks with up to
/// three labels drawn from `seed`.
pub fn channel_lecam(
    u: &DiscreteChannel,
    v: &DiscreteChannel,
    mut tasks: Vec<DiscreteTask>,
    random: usize,
    seed: u64,
) -> Result<LeCamReport> {
    let mut rng = rng::seeded(rng::derive_seed(seed, &["lecam"]));
    for i in 0..random {
        let labels = 2 + i % 2;
        tasks.push(channel::random_task(u.inputs(), labels, &mut rng));
    }
    channel::check_lecam_bound(u, v, &tasks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn atomic_write_reports_missing_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(write_atomic(dir.path().join("no/x.csv"), "a"), Err(Error::Io { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig {
            heldout_fraction: 1.0,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_deficiency_report() {
        let id = DiscreteChannel::identity(3);
        let r = channel_deficiency(&id, &id, None).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.delta_reverse, 0.0);
    }

    #[test]
    fn bsc_bayes_report() {
        let c = DiscreteChannel::binary_symmetric(0.1).unwrap();
        let t = DiscreteTask::new(vec![0.5, 0.5], DiscreteChannel::identity(2)).unwrap();
        assert!((channel_bayes(&c, &t).unwrap().risk - 0.1).abs() < 1e-15);
    }
}
