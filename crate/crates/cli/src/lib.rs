//! Command-line driver for the `ckm-nav` simulator.
//!
//! Every subcommand reads JSON configs, applies flag overrides and the
//! `CKM_NAV_SEED` environment override, writes its outputs into `--out-dir`
//! and records a [`RunManifest`] there as `manifest.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use ckm_nav::env::{ScenarioConfig, UrbanScenario};
use ckm_nav::geom::{self, Trajectory};
use ckm_nav::io;
use ckm_nav::kriging::KrigingEngine;
use ckm_nav::sim::{self, CampaignConfig, ExperimentConfig, PlannerConfig, SweepConfig};
use ckm_nav::spp::{self, PrizeParams, SppMode, SppWeights};
use ckm_nav::tsp::{self, TspParams, TspSolver};
use ckm_nav::{ChannelKnowledgeMap, GridIndex, GridSpec};

/// Environment variable that replaces every seed of a run.
pub const SEED_ENV: &str = "CKM_NAV_SEED";

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "ckm-nav", version, about = "UAV navigation with channel-knowledge-map completion")]
pub struct Cli {
    /// Worker threads; one per core when absent.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an urban scenario from a scenario or experiment config.
    GenEnv(GenEnvArgs),
    /// Build the ground-truth map and the Kriging-completed partial map.
    BuildCkm(BuildCkmArgs),
    /// Plan one trajectory on a stored map.
    Plan(PlanArgs),
    /// Run a multi-round measurement campaign.
    Campaign(CampaignArgs),
    /// Evaluate a grid of planner settings from the same initial map.
    Sweep(SweepArgs),
    /// Write one CSV per altitude layer of a stored map.
    ExportSlices(ExportSlicesArgs),
}

#[derive(Debug, Args)]
pub struct GenEnvArgs {
    /// Scenario config, or an experiment config with a `scenario` key.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Overrides for experiment config keys.
#[derive(Debug, Args, Default)]
pub struct ExperimentFlags {
    #[arg(long)]
    pub delta_m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_th_db: Option<f64>,
    #[arg(long)]
    pub missing_fraction: Option<f64>,
    #[arg(long)]
    pub mask_seed: Option<u64>,
    #[arg(long)]
    pub scenario_seed: Option<u64>,
}

impl ExperimentFlags {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.delta_m {
            cfg.delta_m = v;
        }
        if let Some(v) = self.gamma_th_db {
            cfg.gamma_th_db = v;
        }
        if let Some(v) = self.missing_fraction {
            cfg.missing_fraction = v;
        }
        if let Some(v) = self.mask_seed {
            cfg.mask_seed = v;
        }
        if let Some(v) = self.scenario_seed {
            cfg.scenario.seed = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildCkmArgs {
    /// Experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Use a scenario written by `gen-env` instead of generating one.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ExperimentFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlannerKind {
    Spp,
    Tsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    #[value(name = "nn_2opt")]
    Nn2opt,
    #[value(name = "sim_anneal")]
    SimAnneal,
    #[value(name = "brute_force")]
    BruteForce,
}

impl From<SolverArg> for TspSolver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Nn2opt => TspSolver::Nn2opt,
            SolverArg::SimAnneal => TspSolver::SimAnneal,
            SolverArg::BruteForce => TspSolver::BruteForce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "floyd")]
    Floyd,
    #[value(name = "bellman_ford")]
    BellmanFord,
    #[value(name = "prize_greedy")]
    PrizeGreedy,
}

impl From<ModeArg> for SppMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Floyd => SppMode::Floyd,
            ModeArg::BellmanFord => SppMode::BellmanFord,
            ModeArg::PrizeGreedy => SppMode::PrizeGreedy,
        }
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Map header written by `build-ckm` or `campaign`.
    #[arg(long)]
    pub ckm: PathBuf,
    /// Planner config; `--kind` alone starts from that planner's defaults.
    #[arg(long)]
    pub planner: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<PlannerKind>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu2: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub corridor_m: Option<f64>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the tsp tour weight matrix to `weights.csv`.
    #[arg(long)]
    pub dump_weights: bool,
    /// 1-based lattice index `i,j,k`.
    #[arg(long)]
    pub start: GridIndex,
    /// 1-based lattice index `i,j,k`.
    #[arg(long)]
    pub end: GridIndex,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// Experiment config.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub flags: ExperimentFlags,
    /// Campaign config.
    #[arg(long)]
    pub campaign: PathBuf,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Experiment config.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub flags: ExperimentFlags,
    /// Sweep config: a base campaign and the planner grid.
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportSlicesArgs {
    /// Map header.
    #[arg(long)]
    pub ckm: PathBuf,
    #[arg(long, default_value = "slice")]
    pub stem: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the resolved config as compact JSON with sorted keys.
    pub config_sha256: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: BTreeMap<String, u64>, outputs: Vec<String>) -> Self {
        let config = canonical(&config);
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_hash(&config),
            config,
            seeds,
            outputs,
        }
    }
}

/// Copy of `v` with every object's keys in sorted order.
pub fn canonical(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            Value::Object(keys.into_iter().map(|k| (k.clone(), canonical(&m[k]))).collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(canonical).collect()),
        other => other.clone(),
    }
}

pub fn config_hash(v: &Value) -> String {
    hex::encode(Sha256::digest(canonical(v).to_string().as_bytes()))
}

/// Seed from `CKM_NAV_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("{SEED_ENV}: `{s}` is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{SEED_ENV}: {e}")),
    }
}

fn read_value(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: not valid JSON", path.display()))
}

/// Deserializes `value`, naming the offending field path on failure.
fn from_value<T: DeserializeOwned>(value: Value, origin: &Path, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = match (prefix, path.as_str()) {
            (p, ".") => p.to_string(),
            ("", q) => q.to_string(),
            (p, q) => format!("{p}.{q}"),
        };
        if field.is_empty() {
            anyhow!("{}: {}", origin.display(), e.inner())
        } else {
            anyhow!("{}: field `{field}`: {}", origin.display(), e.inner())
        }
    })
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_value(read_value(path)?, path, "")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    io::write_json(&dir.join(MANIFEST_FILE), manifest)?;
    log::info!("{}: config {}", manifest.command, manifest.config_sha256);
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn experiment_seeds(cfg: &ExperimentConfig) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("scenario".to_string(), cfg.scenario.seed),
        ("mask".to_string(), cfg.mask_seed),
        ("fit".to_string(), cfg.kriging.fit_seed),
    ])
}

fn load_experiment(path: &Path, flags: &ExperimentFlags, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_config(path)?;
    flags.apply(&mut cfg);
    if let Some(s) = seed {
        cfg.override_seeds(s);
    }
    Ok(cfg)
}

fn seed_planner(p: &mut PlannerConfig, seed: u64) {
    if let PlannerConfig::Tsp(t) = p {
        t.seed = seed;
    }
}

fn seed_campaign(c: &mut CampaignConfig, seed: u64) {
    c.seed = seed;
    c.kriging.fit_seed = seed;
    seed_planner(&mut c.planner, seed);
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            bail!("jobs: must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("jobs: configuring the thread pool")?;
    }
    let seed = env_seed()?;
    match cli.command {
        Command::GenEnv(a) => gen_env(&a, seed),
        Command::BuildCkm(a) => build_ckm(&a, seed),
        Command::Plan(a) => plan(&a, seed),
        Command::Campaign(a) => campaign(&a, seed),
        Command::Sweep(a) => sweep(&a, seed),
        Command::ExportSlices(a) => export_slices(&a),
    }
}

fn gen_env(a: &GenEnvArgs, seed: Option<u64>) -> Result<()> {
    let mut value = read_value(&a.config)?;
    let prefix = match value.get_mut("scenario") {
        Some(inner) => {
            value = inner.take();
            "scenario"
        }
        None => "",
    };
    let mut cfg: ScenarioConfig = from_value(value, &a.config, prefix)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let scenario = UrbanScenario::generate(&cfg)?;
    out_dir(&a.out_dir)?;
    io::write_json(&a.out_dir.join("scenario.json"), &scenario)?;
    log::info!("{} buildings", scenario.buildings.len());
    let manifest = RunManifest::new(
        "gen-env",
        serde_json::to_value(&cfg)?,
        BTreeMap::from([("scenario".to_string(), cfg.seed)]),
        vec!["scenario.json".to_string()],
    );
    write_manifest(&a.out_dir, &manifest)
}

fn build_ckm(a: &BuildCkmArgs, seed: Option<u64>) -> Result<()> {
    let cfg = load_experiment(&a.config, &a.flags, seed)?;
    let scenario = match &a.scenario {
        Some(p) => {
            let s: UrbanScenario = read_config(p)?;
            s.validate().with_context(|| format!("{}", p.display()))?;
            s
        }
        None => UrbanScenario::generate(&cfg.scenario)?,
    };
    let spec = GridSpec::from_bounds(&scenario.bounds, cfg.delta_m)?;
    let truth = ChannelKnowledgeMap::build_ground_truth(&scenario, spec, cfg.gamma_th_db)?;
    out_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    let header = a.out_dir.join("truth.json");
    let body = io::save_ckm(&truth, None, &header)?;
    outputs.extend([file_name(&header), file_name(&body)]);
    if cfg.missing_fraction > 0.0 {
        let (partial, model) = truth.mask_partial(cfg.missing_fraction, cfg.mask_seed, &cfg.kriging)?;
        let header = a.out_dir.join("partial.json");
        let body = io::save_ckm(&partial, model.as_ref(), &header)?;
        outputs.extend([file_name(&header), file_name(&body)]);
        log::info!(
            "{} of {} cells measured",
            partial.measured_count(),
            partial.len()
        );
    }
    let config = json!({
        "experiment": cfg,
        "scenario_file": a.scenario.as_ref().map(|p| p.display().to_string()),
    });
    let manifest = RunManifest::new("build-ckm", config, experiment_seeds(&cfg), outputs);
    write_manifest(&a.out_dir, &manifest)
}

fn resolve_planner(a: &PlanArgs) -> Result<PlannerConfig> {
    let mut p = match (&a.planner, a.kind) {
        (Some(path), kind) => {
            let p: PlannerConfig = read_config(path)?;
            if let Some(k) = kind {
                let name = k.to_possible_value().expect("no skipped variants");
                if name.get_name() != p.name() {
                    bail!(
                        "kind: --kind {} conflicts with the {} planner in {}",
                        name.get_name(),
                        p.name(),
                        path.display()
                    );
                }
            }
            p
        }
        (None, Some(PlannerKind::Spp)) => PlannerConfig::Spp {
            weights: SppWeights { mu1: 0.0, mu2: 0.0 },
            mode: None,
            prize: PrizeParams::default(),
        },
        (None, Some(PlannerKind::Tsp)) => PlannerConfig::Tsp(TspParams::default()),
        (None, None) => bail!("planner: give --planner <file> or --kind"),
    };
    match &mut p {
        PlannerConfig::Spp { weights, mode, .. } => {
            if a.n.is_some() || a.beta.is_some() || a.corridor_m.is_some() || a.solver.is_some() {
                bail!("planner: --n, --beta, --corridor-m and --solver apply to tsp planners");
            }
            if let Some(v) = a.mu1 {
                weights.mu1 = v;
            }
            if let Some(v) = a.mu2 {
                weights.mu2 = v;
            }
            if let Some(m) = a.mode {
                *mode = Some(m.into());
            }
        }
        PlannerConfig::Tsp(t) => {
            if a.mu1.is_some() || a.mu2.is_some() || a.mode.is_some() {
                bail!("planner: --mu1, --mu2 and --mode apply to spp planners");
            }
            if let Some(v) = a.n {
                t.n = v;
            }
            if let Some(v) = a.beta {
                t.beta = v;
            }
            if let Some(v) = a.corridor_m {
                t.corridor_m = Some(v);
            }
            if let Some(s) = a.solver {
                t.solver = s.into();
            }
            if let Some(s) = a.seed {
                t.seed = s;
            }
        }
    }
    Ok(p)
}

/// Objectives of a single planned flight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSummary {
    pub planner: PlannerConfig,
    pub t_r: f64,
    pub o_r: f64,
    pub m_r: usize,
    pub total_weight: f64,
    pub waypoints: usize,
}

fn plan(a: &PlanArgs, seed: Option<u64>) -> Result<()> {
    let mut planner = resolve_planner(a)?;
    if let Some(s) = seed {
        seed_planner(&mut planner, s);
    }
    let (ckm, model) = io::load_ckm(&a.ckm).with_context(|| format!("{}", a.ckm.display()))?;
    ckm.spec.check(a.start).context("start")?;
    ckm.spec.check(a.end).context("end")?;
    let (trajectory, total_weight, tsp_plan): (Trajectory, f64, Option<tsp::TspPlan>) = match &planner {
        PlannerConfig::Spp {
            weights,
            mode,
            prize,
        } => {
            let mode = mode.unwrap_or_else(|| SppMode::auto(weights));
            let p = spp::plan(&ckm, a.start, a.end, weights, mode, prize)?;
            (p.trajectory, p.total_weight, None)
        }
        PlannerConfig::Tsp(t) => {
            let model = model.ok_or_else(|| {
                anyhow!("model: {} has no fitted semivariogram; tsp planning needs a partial map", a.ckm.display())
            })?;
            let settings = ckm_nav::kriging::KrigingSettings::default();
            let engine = KrigingEngine::new(model.model, settings.neighborhood(), &ckm.spec);
            let p = tsp::plan(&ckm, &engine, a.start, a.end, t)?;
            (p.trajectory.clone(), p.total_weight, Some(p))
        }
    };
    let obj = geom::eval_objectives(&trajectory, &ckm, &ckm.measured);
    let summary = PlanSummary {
        planner: planner.clone(),
        t_r: obj.t_r,
        o_r: obj.o_r,
        m_r: obj.m_r,
        total_weight,
        waypoints: trajectory.waypoints.len(),
    };
    out_dir(&a.out_dir)?;
    io::write_waypoints(std::slice::from_ref(&trajectory), &ckm.spec, create(&a.out_dir.join("waypoints.csv"))?)?;
    io::write_json(&a.out_dir.join("summary.json"), &summary)?;
    let mut outputs = vec!["waypoints.csv".to_string(), "summary.json".to_string()];
    if let Some(p) = &tsp_plan {
        io::write_cells(0, &p.set.grids, &ckm.spec, create(&a.out_dir.join("measurement_set.csv"))?)?;
        outputs.push("measurement_set.csv".to_string());
        if a.dump_weights {
            io::write_weight_matrix(&p.nodes, &p.weights, create(&a.out_dir.join("weights.csv"))?)?;
            outputs.push("weights.csv".to_string());
        }
    } else if a.dump_weights {
        log::warn!("--dump-weights only applies to tsp planners");
    }
    println!("{}", serde_json::to_string(&summary)?);
    let mut seeds = BTreeMap::new();
    if let PlannerConfig::Tsp(t) = &planner {
        seeds.insert("solver".to_string(), t.seed);
    }
    let config = json!({
        "ckm": a.ckm.display().to_string(),
        "planner": planner,
        "start": a.start,
        "end": a.end,
    });
    write_manifest(&a.out_dir, &RunManifest::new("plan", config, seeds, outputs))
}

fn campaign(a: &CampaignArgs, seed: Option<u64>) -> Result<()> {
    let exp_cfg = load_experiment(&a.config, &a.flags, seed)?;
    let mut camp: CampaignConfig = read_config(&a.campaign)?;
    if let Some(r) = a.rounds {
        camp.rounds = r;
    }
    if let Some(s) = a.seed {
        camp.seed = s;
    }
    if let Some(s) = seed {
        seed_campaign(&mut camp, s);
    }
    let exp = exp_cfg.build()?;
    let mut state = exp.state(&camp.kriging);
    let outcomes = sim::run_campaign(&mut state, &camp)?;
    let metrics: Vec<_> = outcomes.iter().map(|o| o.metrics).collect();
    let trajectories: Vec<_> = outcomes.into_iter().map(|o| o.trajectory).collect();
    out_dir(&a.out_dir)?;
    io::write_metrics(&metrics, create(&a.out_dir.join("metrics.csv"))?)?;
    io::write_waypoints(&trajectories, &state.ckm.spec, create(&a.out_dir.join("waypoints.csv"))?)?;
    let header = a.out_dir.join("final.json");
    let body = io::save_ckm(&state.ckm, Some(&exp.model), &header)?;
    let mut seeds = experiment_seeds(&exp_cfg);
    seeds.insert("campaign".to_string(), camp.seed);
    let config = json!({ "experiment": exp_cfg, "campaign": camp });
    let outputs = vec![
        "metrics.csv".to_string(),
        "waypoints.csv".to_string(),
        file_name(&header),
        file_name(&body),
    ];
    write_manifest(&a.out_dir, &RunManifest::new("campaign", config, seeds, outputs))
}

fn sweep(a: &SweepArgs, seed: Option<u64>) -> Result<()> {
    let exp_cfg = load_experiment(&a.config, &a.flags, seed)?;
    let mut sw: SweepConfig = read_config(&a.sweep)?;
    if let Some(r) = a.rounds {
        sw.base.rounds = r;
    }
    if let Some(s) = a.seed {
        sw.base.seed = s;
    }
    if let Some(s) = seed {
        seed_campaign(&mut sw.base, s);
        for p in &mut sw.grid {
            seed_planner(p, s);
        }
    }
    let exp = exp_cfg.build()?;
    let state = exp.state(&sw.base.kriging);
    let rows = sim::pareto_sweep(&state, &sw.base, &sw.grid)?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("point {}: {}", r.point, r.error.as_deref().unwrap_or_default());
    }
    out_dir(&a.out_dir)?;
    io::write_sweep(&rows, create(&a.out_dir.join("sweep.csv"))?)?;
    let mut seeds = experiment_seeds(&exp_cfg);
    seeds.insert("campaign".to_string(), sw.base.seed);
    let config = json!({ "experiment": exp_cfg, "sweep": sw });
    write_manifest(
        &a.out_dir,
        &RunManifest::new("sweep", config, seeds, vec!["sweep.csv".to_string()]),
    )
}

fn export_slices(a: &ExportSlicesArgs) -> Result<()> {
    let (ckm, _) = io::load_ckm(&a.ckm).with_context(|| format!("{}", a.ckm.display()))?;
    out_dir(&a.out_dir)?;
    let files = io::export_slices(&ckm, &a.out_dir, &a.stem)?;
    let config = json!({ "ckm": a.ckm.display().to_string(), "stem": a.stem });
    let outputs = files.iter().map(|p| file_name(p)).collect();
    write_manifest(
        &a.out_dir,
        &RunManifest::new("export-slices", config, BTreeMap::new(), outputs),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b":1,"a":{"y":[1,2],"x":null}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a":{"x":null,"y":[1,2]},"b":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c: Value = serde_json::from_str(r#"{"a":{"x":null,"y":[2,1]},"b":1}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn hash_of_empty_object() {
        // sha256 of the two bytes "{}"
        assert_eq!(
            config_hash(&json!({})),
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
        );
    }
}
