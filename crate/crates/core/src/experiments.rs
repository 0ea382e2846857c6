//! Seeded parameter sweeps over SBM families.
//!
//! Two modes share one config format:
//!
//! * `family`: for every b-row, every theta and every network, sample a
//!   connected SBM graph and run `sims_per_network` simulations on it.
//! * `spectral`: additionally fit ASE and LSE resampling models to each base
//!   network, run one simulation per resampled graph, and compare the
//!   resampled discovery times with the base ones by earth mover's distance.
//!
//! Every random stream is seeded from the master seed and the task's
//! coordinates, so output does not depend on the worker count. Tasks run on
//! a rayon pool and results are collected in canonical order before writing.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abm::{RecipeTable, Simulation};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sbm::{
    classify_structure, BlockMatrix, FamilyId, FamilySpec, SbmFamily, SbmParams, Structure,
    DEFAULT_MARGIN, DEFAULT_MAX_TRIES,
};
use crate::spectral::{EmbeddingKind, ResampleModel};
use crate::stats::{emd_1d, summarize, EmpiricalDistribution, Summary};

/// Step ceiling applied when a config asks for unlimited steps.
pub const SAFETY_MAX_STEPS: u64 = 1_000_000;

pub const RECORDS_FILE: &str = "records.csv";
pub const EMD_FILE: &str = "emd.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const STREAM_NETWORK: u64 = 1;
const STREAM_BASE_SIM: u64 = 2;
const STREAM_RESAMPLE_GRAPH: u64 = 3;
const STREAM_RESAMPLE_SIM: u64 = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Family,
    Spectral,
}

/// Experiment description. The SBM block (`n`, `family`, `base`, `delta`,
/// `theta`) sits at the top level next to the run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(flatten)]
    pub sbm: FamilySpec,
    /// Replaces `base.b` with each listed value in turn.
    #[serde(default)]
    pub b_rows: Option<Vec<f64>>,
    #[serde(default)]
    pub networks_per_theta: Option<usize>,
    #[serde(default)]
    pub sims_per_network: Option<usize>,
    #[serde(default)]
    pub resamples_per_embedding: Option<usize>,
    /// `None` runs to discovery, bounded by [`SAFETY_MAX_STEPS`].
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_tries: Option<usize>,
    #[serde(default)]
    pub resample_max_tries: Option<usize>,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub recipes: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    pub fn family(family: FamilyId) -> Self {
        ExperimentConfig {
            experiment: None,
            mode: Mode::Family,
            sbm: FamilySpec {
                n: crate::sbm::DEFAULT_BLOCK_SIZE,
                family,
                base: None,
                delta: None,
                theta: None,
            },
            b_rows: None,
            networks_per_theta: None,
            sims_per_network: None,
            resamples_per_embedding: None,
            max_steps: None,
            seed: 0,
            max_tries: None,
            resample_max_tries: None,
            margin: None,
            recipes: None,
        }
    }

    pub fn spectral() -> Self {
        ExperimentConfig {
            mode: Mode::Spectral,
            ..Self::family(FamilyId::M1)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn experiment_id(&self) -> String {
        self.experiment.clone().unwrap_or_else(|| match self.mode {
            Mode::Family => self.sbm.family.to_string(),
            Mode::Spectral => format!("spectral-{}", self.sbm.family),
        })
    }

    pub fn networks_per_theta(&self) -> usize {
        self.networks_per_theta.unwrap_or(match self.mode {
            Mode::Family => 500,
            Mode::Spectral => 50,
        })
    }

    pub fn sims_per_network(&self) -> usize {
        self.sims_per_network.unwrap_or(match self.mode {
            Mode::Family => 1,
            Mode::Spectral => 100,
        })
    }

    pub fn resamples_per_embedding(&self) -> usize {
        match self.mode {
            Mode::Family => 0,
            Mode::Spectral => self.resamples_per_embedding.unwrap_or(100),
        }
    }

    pub fn step_cap(&self) -> u64 {
        self.max_steps.unwrap_or(SAFETY_MAX_STEPS)
    }

    pub fn max_tries(&self) -> usize {
        self.max_tries.unwrap_or(DEFAULT_MAX_TRIES)
    }

    pub fn resample_max_tries(&self) -> usize {
        self.resample_max_tries.unwrap_or(DEFAULT_MAX_TRIES)
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(DEFAULT_MARGIN)
    }

    /// Base parameters; spectral mode defaults to `(0.75, 0.05, 0.15)`.
    pub fn base(&self) -> Result<BlockMatrix> {
        match (self.sbm.base, self.mode) {
            (Some(_), _) | (None, Mode::Family) => self.sbm.base_matrix(),
            (None, Mode::Spectral) => BlockMatrix::new(0.75, 0.05, 0.15),
        }
    }

    /// One family per b-row.
    pub fn families(&self) -> Result<Vec<SbmFamily>> {
        let base = self.base()?;
        let rows = match &self.b_rows {
            Some(rows) if rows.is_empty() => {
                return Err(Error::Config("b_rows is empty".into()));
            }
            Some(rows) => rows.clone(),
            None => vec![base.b],
        };
        rows.iter()
            .map(|&b| {
                let row_base = BlockMatrix::new(base.a, b, base.c)?;
                self.sbm.build_with_base(row_base)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::Config(_) => e,
                other => Error::Config(other.to_string()),
            })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sbm.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.networks_per_theta() == 0 {
            return Err(Error::Config("networks_per_theta must be at least 1".into()));
        }
        if self.sims_per_network() == 0 {
            return Err(Error::Config("sims_per_network must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if self.max_tries() == 0 || self.resample_max_tries() == 0 {
            return Err(Error::Config("max_tries must be at least 1".into()));
        }
        if self.margin() <= 1.0 {
            return Err(Error::Config("margin must exceed 1".into()));
        }
        self.families()?;
        Ok(())
    }

    fn recipe_table(&self) -> Result<RecipeTable> {
        match &self.recipes {
            Some(path) => RecipeTable::load(path),
            None => Ok(RecipeTable::default_table()),
        }
    }
}

/// Mixes the master seed with task coordinates (splitmix64 finalizer per
/// component), so every stream is fixed by `(master, coordinates)` alone.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    coords
        .iter()
        .fold(mix(master), |acc, &c| mix(acc ^ mix(c.wrapping_add(0x632b_e59b_d9b4_e019))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "ASE")]
    Ase,
    #[serde(rename = "LSE")]
    Lse,
}

impl From<EmbeddingKind> for Source {
    fn from(kind: EmbeddingKind) -> Self {
        match kind {
            EmbeddingKind::Ase => Source::Ase,
            EmbeddingKind::Lse => Source::Lse,
        }
    }
}

/// One simulation run. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub family: FamilyId,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub structure: Structure,
    pub network_id: u64,
    pub sim_id: u64,
    pub source: Source,
    pub discovery_time: Option<u64>,
    pub censored: bool,
    pub steps_run: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdRecord {
    pub experiment: String,
    pub theta: f64,
    pub network_id: u64,
    pub kind: EmbeddingKind,
    pub emd: f64,
    pub n_base_sims: usize,
    pub n_resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub family: FamilyId,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub structure: Structure,
    pub source: Source,
    pub runs: usize,
    /// `None` when every run in the group was censored.
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdAggregate {
    pub theta: f64,
    pub kind: EmbeddingKind,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindDiagnostics {
    pub models: usize,
    pub mean_dim: f64,
    pub mean_ratio: f64,
    pub clipped_entries: usize,
    pub rejections: usize,
    pub exhausted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Disconnected SBM draws discarded while sampling base networks.
    pub base_rejections: usize,
    pub base_networks: usize,
    pub skipped_networks: usize,
    pub ase: KindDiagnostics,
    pub lse: KindDiagnostics,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub jobs: usize,
    pub record_count: usize,
    pub expected_record_count: usize,
    pub emd_count: usize,
    pub aggregates: Vec<AggregateRow>,
    pub emd_aggregates: Vec<EmdAggregate>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ResultRecord>,
    pub emd: Vec<EmdRecord>,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, Copy)]
struct NetworkTask {
    row: usize,
    theta_idx: usize,
    local: usize,
    network_id: u64,
    theta: f64,
    block: BlockMatrix,
}

#[derive(Debug, Default)]
struct TaskOutput {
    records: Vec<ResultRecord>,
    emd: Vec<EmdRecord>,
    base_rejections: usize,
    skipped: bool,
    kinds: [KindDiagnostics; 2],
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    experiment: String,
    family: FamilyId,
    table: RecipeTable,
    n: usize,
}

impl Context<'_> {
    fn record(
        &self,
        task: &NetworkTask,
        sim_id: u64,
        source: Source,
        seed: u64,
        graph: &Graph,
    ) -> ResultRecord {
        let sim = Simulation::seeded(graph, &self.table, seed)
            .expect("sampled networks are connected with at least two nodes");
        let result = sim.run(Some(self.cfg.step_cap()), false);
        ResultRecord {
            experiment: self.experiment.clone(),
            family: self.family,
            theta: task.theta,
            a: task.block.a,
            b: task.block.b,
            c: task.block.c,
            structure: classify_structure(task.block, self.cfg.margin()),
            network_id: task.network_id,
            sim_id,
            source,
            discovery_time: result.discovery_time,
            censored: result.censored,
            steps_run: result.steps_run,
            seed,
        }
    }

    fn coords(&self, task: &NetworkTask) -> [u64; 3] {
        [task.row as u64, task.theta_idx as u64, task.local as u64]
    }

    fn run(&self, task: &NetworkTask) -> Result<TaskOutput> {
        let [row, th, local] = self.coords(task);
        let master = self.cfg.seed;
        let params = SbmParams::new(self.n, task.block)?;
        let mut net_rng = ChaCha8Rng::seed_from_u64(derive_seed(master, &[row, th, local, STREAM_NETWORK]));
        let sample = match params.sample_connected(&mut net_rng, self.cfg.max_tries()) {
            Err(Error::ConnectivityExhausted { tries }) if self.cfg.mode == Mode::Spectral => {
                log::warn!("network {}: no connected sample in {tries} tries", task.network_id);
                return Ok(TaskOutput {
                    base_rejections: tries,
                    skipped: true,
                    ..TaskOutput::default()
                });
            }
            other => other,
        };
        let sample = sample
            .map_err(|e| {
                e.context(format!(
                    "network {} at theta={} (a,b,c)=({}, {}, {})",
                    task.network_id, task.theta, task.block.a, task.block.b, task.block.c
                ))
            })?;
        let graph = sample.graph;
        let mut out = TaskOutput {
            base_rejections: sample.rejected,
            ..TaskOutput::default()
        };

        let mut base = EmpiricalDistribution::default();
        for sim in 0..self.cfg.sims_per_network() as u64 {
            let seed = derive_seed(master, &[row, th, local, sim, STREAM_BASE_SIM]);
            let rec = self.record(task, sim, Source::Base, seed, &graph);
            base.push(rec.discovery_time);
            out.records.push(rec);
        }

        let resamples = self.cfg.resamples_per_embedding();
        if self.cfg.mode != Mode::Spectral || resamples == 0 {
            return Ok(out);
        }

        let mut resampled_records = Vec::new();
        let mut emd_rows = Vec::new();
        for (k, kind) in [EmbeddingKind::Ase, EmbeddingKind::Lse].into_iter().enumerate() {
            let diag = &mut out.kinds[k];
            let model = match ResampleModel::fit(&graph, kind) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("network {}: {kind} fit failed: {e}", task.network_id);
                    out.skipped = true;
                    break;
                }
            };
            diag.models = 1;
            diag.mean_dim = model.dim as f64;
            diag.mean_ratio = model.ratio;
            diag.clipped_entries = model.clipped_raw + model.clipped_adjusted;
            let mut dist = EmpiricalDistribution::default();
            for j in 0..resamples as u64 {
                let tag = k as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    master,
                    &[row, th, local, j, STREAM_RESAMPLE_GRAPH, tag],
                ));
                let drawn = match model.sample_connected(&mut rng, self.cfg.resample_max_tries()) {
                    Ok(s) => s,
                    Err(Error::ConnectivityExhausted { tries }) => {
                        diag.rejections += tries;
                        diag.exhausted += 1;
                        out.skipped = true;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                diag.rejections += drawn.rejected;
                let seed = derive_seed(master, &[row, th, local, j, STREAM_RESAMPLE_SIM, tag]);
                let rec = self.record(task, j, kind.into(), seed, &drawn.graph);
                dist.push(rec.discovery_time);
                resampled_records.push(rec);
            }
            if out.skipped {
                break;
            }
            if base.is_empty() || dist.is_empty() {
                log::warn!(
                    "network {}: no uncensored runs for {kind} distance",
                    task.network_id
                );
                continue;
            }
            emd_rows.push(EmdRecord {
                experiment: self.experiment.clone(),
                theta: task.theta,
                network_id: task.network_id,
                kind,
                emd: emd_1d(&base, &dist)?,
                n_base_sims: base.len(),
                n_resamples: dist.len(),
            });
        }
        if out.skipped {
            out.records.clear();
        } else {
            out.records.extend(resampled_records);
            out.emd = emd_rows;
        }
        Ok(out)
    }
}

/// Runs an experiment in memory on `jobs` worker threads.
pub fn execute(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let families = cfg.families()?;
    let grid = cfg.sbm.theta_grid();
    let nets = cfg.networks_per_theta();
    let ctx = Context {
        cfg,
        experiment: cfg.experiment_id(),
        family: cfg.sbm.family,
        table: cfg.recipe_table()?,
        n: cfg.sbm.n,
    };

    let mut tasks = Vec::new();
    for (row, family) in families.iter().enumerate() {
        for (theta_idx, &theta) in grid.iter().enumerate() {
            let block = family.point(theta).map_err(|e| Error::Config(e.to_string()))?;
            for local in 0..nets {
                tasks.push(NetworkTask {
                    row,
                    theta_idx,
                    local,
                    network_id: tasks.len() as u64,
                    theta,
                    block,
                });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outputs: Vec<TaskOutput> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| ctx.run(t))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut diagnostics = Diagnostics {
        base_networks: tasks.len(),
        ..Diagnostics::default()
    };
    if cfg.mode == Mode::Spectral && cfg.resamples_per_embedding() == 0 {
        let msg = "resamples_per_embedding is 0; no distance rows will be produced".to_string();
        log::warn!("{msg}");
        diagnostics.warnings.push(msg);
    }
    let mut records = Vec::new();
    let mut emd = Vec::new();
    let mut kind_sums = [KindDiagnostics::default(); 2];
    for out in outputs {
        diagnostics.base_rejections += out.base_rejections;
        diagnostics.skipped_networks += usize::from(out.skipped);
        for (sum, d) in kind_sums.iter_mut().zip(out.kinds) {
            sum.models += d.models;
            sum.mean_dim += d.mean_dim;
            sum.mean_ratio += d.mean_ratio;
            sum.clipped_entries += d.clipped_entries;
            sum.rejections += d.rejections;
            sum.exhausted += d.exhausted;
        }
        records.extend(out.records);
        emd.extend(out.emd);
    }
    for sum in &mut kind_sums {
        if sum.models > 0 {
            sum.mean_dim /= sum.models as f64;
            sum.mean_ratio /= sum.models as f64;
        }
    }
    [diagnostics.ase, diagnostics.lse] = kind_sums;
    if diagnostics.skipped_networks > 0 {
        let msg = format!(
            "{} base networks skipped after resampling failures",
            diagnostics.skipped_networks
        );
        log::warn!("{msg}");
        diagnostics.warnings.push(msg);
    }

    let kept = tasks.len() - diagnostics.skipped_networks;
    let expected_record_count = kept * (cfg.sims_per_network() + 2 * cfg.resamples_per_embedding());
    if records.len() != expected_record_count {
        return Err(Error::Config(format!(
            "record count {} does not match expected {expected_record_count}",
            records.len()
        )));
    }

    let manifest = RunManifest {
        experiment: ctx.experiment.clone(),
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        jobs: jobs.max(1),
        record_count: records.len(),
        expected_record_count,
        emd_count: emd.len(),
        aggregates: aggregate_records(&records),
        emd_aggregates: aggregate_emd(&emd),
        diagnostics,
    };
    Ok(ExperimentOutput {
        records,
        emd,
        manifest,
    })
}

/// Runs an experiment and writes `records.csv`, `emd.csv` (spectral mode)
/// and `manifest.json` under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize, out_dir: &Path) -> Result<ExperimentOutput> {
    let output = execute(cfg, jobs)?;
    write_output(&output, cfg.mode, out_dir)?;
    Ok(output)
}

pub fn run_family_experiment(cfg: &ExperimentConfig, jobs: usize, out_dir: &Path) -> Result<ExperimentOutput> {
    if cfg.mode != Mode::Family {
        return Err(Error::Config("expected a family-mode config".into()));
    }
    run_experiment(cfg, jobs, out_dir)
}

pub fn run_spectral_experiment(cfg: &ExperimentConfig, jobs: usize, out_dir: &Path) -> Result<ExperimentOutput> {
    if cfg.mode != Mode::Spectral {
        return Err(Error::Config("expected a spectral-mode config".into()));
    }
    run_experiment(cfg, jobs, out_dir)
}

pub fn write_output(output: &ExperimentOutput, mode: Mode, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join(RECORDS_FILE), &output.records, RECORD_HEADER)?;
    if mode == Mode::Spectral {
        write_csv(&out_dir.join(EMD_FILE), &output.emd, EMD_HEADER)?;
    }
    let manifest = serde_json::to_string_pretty(&output.manifest)?;
    fs::write(out_dir.join(MANIFEST_FILE), manifest + "\n")?;
    Ok(())
}

pub const RECORD_HEADER: &[&str] = &[
    "experiment", "family", "theta", "a", "b", "c", "structure", "network_id", "sim_id",
    "source", "discovery_time", "censored", "steps_run", "seed",
];

pub const EMD_HEADER: &[&str] = &[
    "experiment", "theta", "network_id", "kind", "emd", "n_base_sims", "n_resamples",
];

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_HEADER {
        return Err(Error::Parse(format!(
            "{}: unexpected header {}",
            path.display(),
            header.join(",")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn read_emd(path: &Path) -> Result<Vec<EmdRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Discovery-time summaries grouped by `(theta, a, b, c, source)`, in the
/// order each group first appears.
pub fn aggregate_records(records: &[ResultRecord]) -> Vec<AggregateRow> {
    type Key = [u64; 4];
    let key = |r: &ResultRecord| -> Key { [r.theta, r.a, r.b, r.c].map(f64::to_bits) };
    let mut groups: Vec<(&ResultRecord, EmpiricalDistribution, usize)> = Vec::new();
    for r in records {
        match groups
            .iter_mut()
            .find(|(first, ..)| key(first) == key(r) && first.source == r.source)
        {
            Some(g) => {
                g.1.push(r.discovery_time);
                g.2 += 1;
            }
            None => groups.push((r, EmpiricalDistribution::from_outcomes([r.discovery_time]), 1)),
        }
    }
    groups
        .into_iter()
        .map(|(r, dist, runs)| AggregateRow {
            family: r.family,
            theta: r.theta,
            a: r.a,
            b: r.b,
            c: r.c,
            structure: r.structure,
            source: r.source,
            runs,
            summary: summarize(&dist).ok(),
        })
        .collect()
}

pub fn aggregate_emd(rows: &[EmdRecord]) -> Vec<EmdAggregate> {
    let mut groups: Vec<(u64, EmbeddingKind, f64, Vec<f64>)> = Vec::new();
    for r in rows {
        let key = r.theta.to_bits();
        match groups.iter_mut().find(|g| g.0 == key && g.1 == r.kind) {
            Some(g) => g.3.push(r.emd),
            None => groups.push((key, r.kind, r.theta, vec![r.emd])),
        }
    }
    groups
        .into_iter()
        .map(|(_, kind, theta, values)| EmdAggregate {
            theta,
            kind,
            summary: summarize(&EmpiricalDistribution::new(values)).expect("group is nonempty"),
        })
        .collect()
}

/// Writes aggregate rows as a flat CSV table.
pub fn write_aggregates<W: std::io::Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "family", "theta", "a", "b", "c", "structure", "source", "runs", "count",
        "censored_count", "mean", "median", "q1", "q3", "min", "max",
    ])?;
    for r in rows {
        let mut fields = vec![
            r.family.to_string(),
            r.theta.to_string(),
            r.a.to_string(),
            r.b.to_string(),
            r.c.to_string(),
            r.structure.to_string(),
            serde_json::to_value(r.source)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
            r.runs.to_string(),
        ];
        match &r.summary {
            Some(s) => fields.extend(
                [
                    s.count.to_string(),
                    s.censored_count.to_string(),
                    s.mean.to_string(),
                    s.median.to_string(),
                    s.q1.to_string(),
                    s.q3.to_string(),
                    s.min.to_string(),
                    s.max.to_string(),
                ],
            ),
            None => {
                fields.push("0".into());
                fields.push(r.runs.to_string());
                fields.extend(std::iter::repeat_n(String::new(), 6));
            }
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `mean(a) - mean(b)`.
    pub diff: f64,
    /// Bootstrap probability that `mean(a) >= mean(b)`, with ties counted
    /// as one half. Small values support `mean(a) < mean(b)`.
    pub p_one_sided: f64,
}

/// One-sided bootstrap test of `mean(a) < mean(b)`: both samples are
/// resampled independently with replacement `iters` times.
pub fn bootstrap_mean_diff<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    iters: usize,
    rng: &mut R,
) -> Result<BootstrapResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    if iters < 1000 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 1000 iterations, got {iters}"
        )));
    }
    let resampled_mean = |xs: &[f64], rng: &mut R| {
        (0..xs.len())
            .map(|_| xs[rng.random_range(0..xs.len())])
            .sum::<f64>()
            / xs.len() as f64
    };
    let mut not_less = 0.0;
    for _ in 0..iters {
        let d = resampled_mean(a, rng) - resampled_mean(b, rng);
        if d > 0.0 {
            not_less += 1.0;
        } else if d == 0.0 {
            not_less += 0.5;
        }
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(BootstrapResult {
        diff: mean(a) - mean(b),
        p_one_sided: not_less / iters as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_config() -> ExperimentConfig {
        ExperimentConfig {
            networks_per_theta: Some(3),
            sims_per_network: Some(2),
            seed: 42,
            sbm: FamilySpec {
                n: 6,
                family: FamilyId::M1,
                base: Some([0.75, 0.3, 0.3]),
                delta: None,
                theta: Some(vec![0.0, 0.2]),
            },
            ..ExperimentConfig::family(FamilyId::M1)
        }
    }

    #[test]
    fn seed_derivation_separates_coordinates() {
        let a = derive_seed(1, &[0, 0, 1]);
        assert_eq!(a, derive_seed(1, &[0, 0, 1]));
        assert_ne!(a, derive_seed(1, &[0, 1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 0, 1]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[0, 0]));
    }

    #[test]
    fn config_json_with_sbm_block() {
        let cfg = ExperimentConfig::from_json(
            r#"{ "n": 12, "base": [0.75,0.05,0.05], "delta": [-1,0,1], "theta": [0, 0.15],
                 "family": "M1", "b_rows": [0.01, 0.05, 0.1, 0.15], "networks_per_theta": 2 }"#,
        )
        .unwrap();
        let fams = cfg.families().unwrap();
        assert_eq!(fams.len(), 4);
        assert_eq!(fams[0].base(), BlockMatrix::new(0.75, 0.01, 0.05).unwrap());
        assert_eq!(cfg.experiment_id(), "M1");
        assert_eq!(cfg.sims_per_network(), 1);
        assert_eq!(cfg.step_cap(), SAFETY_MAX_STEPS);
        assert!(ExperimentConfig::from_json("{}").is_err());
        let bad = ExperimentConfig {
            networks_per_theta: Some(0),
            ..cfg.clone()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let out_of_range = ExperimentConfig::from_json(
            r#"{ "family": "M1", "base": [0.2,0.05,0.05], "theta": [0, 0.35] }"#,
        )
        .unwrap();
        assert!(out_of_range.validate().is_err());
    }

    #[test]
    fn spectral_defaults() {
        let cfg = ExperimentConfig::spectral();
        assert_eq!(cfg.networks_per_theta(), 50);
        assert_eq!(cfg.sims_per_network(), 100);
        assert_eq!(cfg.resamples_per_embedding(), 100);
        assert_eq!(cfg.base().unwrap(), BlockMatrix::new(0.75, 0.05, 0.15).unwrap());
    }

    #[test]
    fn single_record_run() {
        let cfg = ExperimentConfig {
            networks_per_theta: Some(1),
            sims_per_network: Some(1),
            sbm: FamilySpec {
                theta: Some(vec![0.1]),
                ..mini_config().sbm
            },
            ..mini_config()
        };
        let out = execute(&cfg, 1).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.manifest.expected_record_count, 1);
        assert!(out.emd.is_empty());
    }

    #[test]
    fn records_are_complete_and_unique() {
        let out = execute(&mini_config(), 2).unwrap();
        assert_eq!(out.records.len(), 2 * 3 * 2);
        let mut keys: Vec<_> = out
            .records
            .iter()
            .map(|r| (r.network_id, r.sim_id, r.source))
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), out.records.len());
        assert!(out.records.iter().all(|r| !r.censored));
        assert_eq!(out.manifest.aggregates.len(), 2);
    }

    #[test]
    fn spectral_counts() {
        let cfg = ExperimentConfig {
            mode: Mode::Spectral,
            networks_per_theta: Some(1),
            sims_per_network: Some(2),
            resamples_per_embedding: Some(2),
            seed: 5,
            sbm: FamilySpec {
                n: 6,
                family: FamilyId::M1,
                base: Some([0.9, 0.5, 0.6]),
                delta: None,
                theta: Some(vec![0.0]),
            },
            ..ExperimentConfig::spectral()
        };
        let out = execute(&cfg, 1).unwrap();
        assert_eq!(out.manifest.diagnostics.skipped_networks, 0);
        assert_eq!(out.emd.len(), 2);
        assert_eq!(out.records.len(), 2 + 2 * 2);
        let kinds: Vec<_> = out.emd.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EmbeddingKind::Ase, EmbeddingKind::Lse]);

        let none = ExperimentConfig {
            resamples_per_embedding: Some(0),
            ..cfg
        };
        let out = execute(&none, 1).unwrap();
        assert!(out.emd.is_empty());
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.manifest.diagnostics.warnings.len(), 1);
    }

    #[test]
    fn exhausted_base_networks() {
        let sparse = FamilySpec {
            n: 12,
            family: FamilyId::M1,
            base: Some([0.75, 0.01, 0.05]),
            delta: None,
            theta: Some(vec![0.0]),
        };
        let spectral = ExperimentConfig {
            mode: Mode::Spectral,
            networks_per_theta: Some(2),
            sims_per_network: Some(1),
            resamples_per_embedding: Some(1),
            max_tries: Some(1),
            sbm: sparse.clone(),
            ..ExperimentConfig::spectral()
        };
        let out = execute(&spectral, 1).unwrap();
        assert_eq!(out.manifest.diagnostics.skipped_networks, 2);
        assert!(out.records.is_empty());
        let family = ExperimentConfig {
            networks_per_theta: Some(1),
            max_tries: Some(1),
            sbm: sparse,
            ..ExperimentConfig::family(FamilyId::M1)
        };
        let err = execute(&family, 1).unwrap_err();
        assert!(matches!(err.root(), Error::ConnectivityExhausted { tries: 1 }), "{err}");
    }

    #[test]
    fn bootstrap_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sep = bootstrap_mean_diff(&[1.0, 1.0, 1.0], &[9.0, 9.0, 9.0], 2000, &mut rng).unwrap();
        assert_eq!(sep.diff, -8.0);
        assert_eq!(sep.p_one_sided, 0.0);
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let same = bootstrap_mean_diff(&xs, &xs, 5000, &mut rng).unwrap();
        assert!((same.p_one_sided - 0.5).abs() < 0.05);
        let flat = bootstrap_mean_diff(&[3.0], &[3.0], 1000, &mut rng).unwrap();
        assert_eq!(flat.p_one_sided, 0.5);
        assert!(bootstrap_mean_diff(&[], &[1.0], 1000, &mut rng).is_err());
        assert!(bootstrap_mean_diff(&[1.0], &[1.0], 999, &mut rng).is_err());
    }

    #[test]
    fn bootstrap_agrees_with_permutation_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let na = rng.random_range(5..15);
            let nb = rng.random_range(5..15);
            let shift = rng.random_range(-2.0..2.0);
            let a: Vec<f64> = (0..na).map(|_| rng.random::<f64>() * 3.0).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.random::<f64>() * 3.0 + shift).collect();
            // Permutation p-value for mean(a) < mean(b).
            let observed = crate::stats::mean(&a).unwrap() - crate::stats::mean(&b).unwrap();
            let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let mut perm = pooled.clone();
            let mut hits = 0;
            let perms = 2000;
            for _ in 0..perms {
                use rand::seq::SliceRandom;
                perm.copy_from_slice(&pooled);
                perm.shuffle(&mut rng);
                let d = crate::stats::mean(&perm[..na]).unwrap() - crate::stats::mean(&perm[na..]).unwrap();
                if d <= observed {
                    hits += 1;
                }
            }
            let p_perm = hits as f64 / perms as f64;
            let boot = bootstrap_mean_diff(&a, &b, 2000, &mut rng).unwrap();
            if (p_perm - 0.5).abs() > 0.1 {
                assert_eq!(p_perm < 0.5, boot.p_one_sided < 0.5, "perm {p_perm} boot {}", boot.p_one_sided);
            }
        }
    }
}
