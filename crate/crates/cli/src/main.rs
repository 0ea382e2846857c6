use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use potions::abm::{run_simulation, RecipeTable, SimConfig};
use potions::experiments::{self, derive_seed, ExperimentConfig, Mode};
use potions::sbm::{FamilyId, FamilySpec, SbmParams, DEFAULT_MAX_TRIES};
use potions::spectral::{embed, EmbeddingKind, ResampleModel};
use potions::{Error, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "potions", version, about = "Innovation on two-block networks")]
struct Cli {
    /// Worker threads for experiments.
    #[arg(long, global = true, env = "POTIONS_JOBS", default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample connected SBM graphs at one point of a family.
    Generate {
        /// Family spec JSON (`n`, `family`, `base`, `delta`, `theta`).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "m1")]
        family: FamilyArg,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Block size; the graph has 2n nodes.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_TRIES)]
        max_tries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one simulation and print its result as one JSON line.
    Simulate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Step cap; 0 runs until discovery.
        #[arg(long, default_value_t = SimConfig::DEFAULT_MAX_STEPS)]
        max_steps: u64,
        #[arg(long)]
        recipes: Option<PathBuf>,
        /// Include per-step mean and max score series.
        #[arg(long)]
        trajectory: bool,
    },
    /// Write a spectral embedding as CSV.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "ase")]
        kind: KindArg,
        /// Embedding dimension; chosen from the scree plot when omitted.
        #[arg(long)]
        dim: Option<usize>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw connected graphs from a density-adjusted RDPG fit.
    Resample {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "ase")]
        kind: KindArg,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_TRIES)]
        max_tries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a family or spectral sweep from a config file.
    Experiment {
        /// Overrides the config's `mode`.
        #[arg(value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a records CSV into per-regime summary rows.
    Summarize {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    M1,
    M2,
    M3,
    M4,
}

impl From<FamilyArg> for FamilyId {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::M1 => FamilyId::M1,
            FamilyArg::M2 => FamilyId::M2,
            FamilyArg::M3 => FamilyId::M3,
            FamilyArg::M4 => FamilyId::M4,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ase,
    Lse,
}

impl From<KindArg> for EmbeddingKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ase => EmbeddingKind::Ase,
            KindArg::Lse => EmbeddingKind::Lse,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Family,
    Spectral,
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())).into())
}

fn read_graph(path: &Path) -> Result<Graph> {
    let text = read_input(path)?;
    Graph::parse_edge_list(&text)
        .map_err(|e| e.context(format!("parsing {}", path.display())).into())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            family,
            theta,
            n,
            count,
            max_tries,
            seed,
            out,
        } => {
            let mut spec = match config {
                Some(path) => serde_json::from_str::<FamilySpec>(&read_input(&path)?)
                    .map_err(|e| usage(format!("malformed family spec: {e}")))?,
                None => FamilySpec {
                    n: potions::sbm::DEFAULT_BLOCK_SIZE,
                    family: family.into(),
                    base: None,
                    delta: None,
                    theta: None,
                },
            };
            if let Some(n) = n {
                spec.n = n;
            }
            if count == 0 || max_tries == 0 {
                return Err(usage("count and max-tries must be at least 1"));
            }
            let block = spec.build()?.point(theta)?;
            let params = SbmParams::new(spec.n, block)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for k in 0..count {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[k as u64]));
                let sample = params.sample_connected(&mut rng, max_tries)?;
                write_file(&out.join(format!("graph_{k:04}.edges")), &sample.graph.to_edge_list())?;
                log::info!("graph {k}: {} edges, {} rejected draws", sample.graph.edge_count(), sample.rejected);
            }
        }
        Command::Simulate {
            graph,
            seed,
            max_steps,
            recipes,
            trajectory,
        } => {
            let g = read_graph(&graph)?;
            let table = match recipes {
                Some(path) => RecipeTable::from_json(&read_input(&path)?)?,
                None => RecipeTable::default_table(),
            };
            let cfg = SimConfig {
                max_steps: (max_steps > 0).then_some(max_steps),
                seed,
                record_trajectory: trajectory,
            };
            let result = run_simulation(&g, &cfg, &table)?;
            println!("{}", serde_json::to_string(&result)?);
        }
        Command::Embed {
            graph,
            kind,
            dim,
            out,
        } => {
            let e = embed(&read_graph(&graph)?, kind.into(), dim)?;
            match out {
                Some(path) => write_file(&path, &e.to_csv())?,
                None => print!("{}", e.to_csv()),
            }
        }
        Command::Resample {
            graph,
            kind,
            count,
            max_tries,
            seed,
            out,
        } => {
            if count == 0 || max_tries == 0 {
                return Err(usage("count and max-tries must be at least 1"));
            }
            let g = read_graph(&graph)?;
            if !g.is_connected() {
                return Err(usage(format!("{} is not connected", graph.display())));
            }
            let model = ResampleModel::fit(&g, kind.into())?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rejections = 0;
            for k in 0..count {
                let sample = model.sample_connected(&mut rng, max_tries)?;
                rejections += sample.rejected;
                write_file(&out.join(format!("resample_{k:04}.edges")), &sample.graph.to_edge_list())?;
            }
            let manifest = serde_json::to_string_pretty(&model.manifest(rejections))?;
            write_file(&out.join("manifest.json"), &(manifest + "\n"))?;
        }
        Command::Experiment {
            mode,
            config,
            seed,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(mode) = mode {
                cfg.mode = match mode {
                    ModeArg::Family => Mode::Family,
                    ModeArg::Spectral => Mode::Spectral,
                };
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if cli.jobs == 0 {
                return Err(usage("--jobs must be at least 1"));
            }
            let output = experiments::run_experiment(&cfg, cli.jobs, &out)?;
            eprintln!(
                "{}: {} records, {} distance rows in {:.1}s -> {}",
                output.manifest.experiment,
                output.manifest.record_count,
                output.manifest.emd_count,
                output.manifest.wall_clock_seconds,
                out.display()
            );
        }
        Command::Summarize { records, out } => {
            if !records.is_file() {
                return Err(usage(format!("cannot read {}", records.display())));
            }
            let rows = experiments::aggregate_records(&experiments::read_records(&records)?);
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    experiments::write_aggregates(&rows, &mut buf)?;
                    write_file(&path, &String::from_utf8(buf)?)?;
                }
                None => experiments::write_aggregates(&rows, std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<Error>().is_some_and(Error::is_usage);
            ExitCode::from(if is_usage { 2 } else { 1 })
        }
    }
}
