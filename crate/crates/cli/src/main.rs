use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use embedrank::infosuff::Aggregation;
use embedrank::pipeline::{self, RunConfig};
use embedrank::probe::{grid_lattice, run_task, ProbeConfig, TaskManifest};
use embedrank::stats::PerformanceTable;
use embedrank::Error;

#[derive(Parser)]
#[command(name = "embedrank", version, about = "Rank embedding models by information sufficiency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate IS(source → target) and print it as JSON.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
    },
    /// Estimate every pair and write the matrix, scores, graph and communities.
    Matrix {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = AggregationArg::Median)]
        aggregation: AggregationArg,
        /// Aggregate raw IS instead of IS per target dimension.
        #[arg(long)]
        no_normalize: bool,
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
    },
    /// Correlate scores with downstream performance.
    Correlate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        performance: PathBuf,
        /// JSON object mapping group ids to lists of task ids.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Train probes for every embedder of a task and write a performance CSV.
    Probe {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Search the full width/depth/dropout grid instead of the default probe.
        #[arg(long)]
        grid: bool,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact computations on finite channels.
    Channel {
        #[command(subcommand)]
        command: ChannelCommand,
    },
}

#[derive(Subcommand)]
enum ChannelCommand {
    /// Deficiency in both directions.
    Deficiency {
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        v: PathBuf,
    },
    /// Bayes risk of a task observed through a channel.
    Bayes {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long)]
        task: PathBuf,
    },
    /// Check R_U − R_V ≤ δ(u→v) on given and random tasks.
    Lecam {
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        v: PathBuf,
        #[arg(long)]
        task: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 8)]
    components: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    heldout: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Median,
    Mean,
}

impl RunArgs {
    fn config(self) -> RunConfig {
        RunConfig {
            manifest: self.manifest,
            components: self.components,
            seed: self.seed,
            heldout_fraction: self.heldout,
            jobs: self.jobs,
            max_epochs: self.max_epochs,
            ..RunConfig::default()
        }
    }
}

fn json(value: &impl serde::Serialize) -> embedrank::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> embedrank::Result<()> {
    match cli.command {
        Command::Estimate { run, source, target } => json(&pipeline::run_estimate(&run.config(), &source, &target)?),
        Command::Matrix {
            run,
            out,
            threshold,
            aggregation,
            no_normalize,
            resolution,
        } => {
            let cfg = RunConfig {
                out,
                threshold,
                aggregation: match aggregation {
                    AggregationArg::Median => Aggregation::Median,
                    AggregationArg::Mean => Aggregation::Mean,
                },
                normalize: !no_normalize,
                resolution,
                ..run.config()
            };
            let o = pipeline::run_matrix(&cfg)?;
            json(&o.scores)
        }
        Command::Correlate {
            scores,
            performance,
            groups,
            out,
        } => json(&pipeline::run_correlate(&scores, &performance, groups.as_deref(), &out)?),
        Command::Probe {
            task,
            out,
            grid,
            seeds,
            seed,
        } => {
            let (manifest, base) = TaskManifest::read(&task)?;
            let size = manifest.splits.train.len() + manifest.splits.val.len() + manifest.splits.test.len();
            let mut configs = if grid {
                grid_lattice(manifest.kind, size, 1e-3, 32)
            } else {
                vec![ProbeConfig::text_default(manifest.kind)]
            };
            for c in &mut configs {
                c.seed = seed;
            }
            let rows = run_task(&manifest, &base, &configs, seeds)?;
            let table = PerformanceTable::new(rows)?;
            pipeline::write_atomic(&out, &table.to_csv())?;
            Ok(())
        }
        Command::Channel { command } => match command {
            ChannelCommand::Deficiency { u, v } => {
                let (u, prior) = pipeline::read_channel(&u)?;
                let (v, _) = pipeline::read_channel(&v)?;
                json(&pipeline::channel_deficiency(&u, &v, Some(&prior))?)
            }
            ChannelCommand::Bayes { channel, task } => {
                let (c, _) = pipeline::read_channel(&channel)?;
                json(&pipeline::channel_bayes(&c, &pipeline::read_task(&task)?)?)
            }
            ChannelCommand::Lecam {
                u,
                v,
                task,
                random,
                seed,
            } => {
                let (u, _) = pipeline::read_channel(&u)?;
                let (v, _) = pipeline::read_channel(&v)?;
                let tasks = task.iter().map(|p| pipeline::read_task(p)).collect::<embedrank::Result<_>>()?;
                json(&pipeline::channel_lecam(&u, &v, tasks, random, seed)?)
            }
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EMBEDRANK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        1
    }
}
