//! Multi-round measurement campaigns and parameter sweeps.
//!
//! A round plans a trajectory on the current map, scores it against the
//! map as it stood before the flight, samples the outage actually seen under
//! small-scale fading, records every traversed cell as measured and
//! re-completes the map by Kriging.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ckm::{best_sinr, ChannelKnowledgeMap};
use crate::env::{Fading, ScenarioConfig, UrbanScenario};
use crate::error::{Error, Result};
use crate::geom::{self, RoundObjectives, Trajectory};
use crate::grid::{GridIndex, GridSpec};
use crate::kriging::{self, FittedModel, KrigingEngine, KrigingSettings};
use crate::spp::{self, PrizeParams, SppMode, SppWeights};
use crate::tsp::{self, TspParams};
use crate::vec3::{self, Point3};

/// World and initial map: scenario, lattice, threshold, masking and Kriging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub delta_m: f64,
    pub gamma_th_db: f64,
    pub missing_fraction: f64,
    pub mask_seed: u64,
    #[serde(default)]
    pub kriging: KrigingSettings,
}

/// Everything a campaign starts from.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: UrbanScenario,
    pub truth: ChannelKnowledgeMap,
    pub partial: ChannelKnowledgeMap,
    pub model: FittedModel,
}

impl ExperimentConfig {
    /// Replaces every seed with `seed` (scenario, mask and fit subsampling).
    pub fn override_seeds(&mut self, seed: u64) {
        self.scenario.seed = seed;
        self.mask_seed = seed;
        self.kriging.fit_seed = seed;
    }

    pub fn build(&self) -> Result<Experiment> {
        let scenario = UrbanScenario::generate(&self.scenario)?;
        let spec = GridSpec::from_bounds(&scenario.bounds, self.delta_m)?;
        let truth = ChannelKnowledgeMap::build_ground_truth(&scenario, spec, self.gamma_th_db)?;
        if !(self.missing_fraction > 0.0) {
            return Err(Error::invalid("missing_fraction", "experiments need a partial map"));
        }
        let (partial, model) = truth.mask_partial(self.missing_fraction, self.mask_seed, &self.kriging)?;
        let model = model.expect("a positive fraction masks cells");
        Ok(Experiment {
            scenario,
            truth,
            partial,
            model,
        })
    }
}

impl Experiment {
    pub fn state(&self, settings: &KrigingSettings) -> CampaignState {
        CampaignState::new(self.scenario.clone(), self.partial.clone(), &self.model, settings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerConfig {
    Spp {
        #[serde(flatten)]
        weights: SppWeights,
        /// Chosen from the weights when absent.
        #[serde(default)]
        mode: Option<SppMode>,
        #[serde(default)]
        prize: PrizeParams,
    },
    Tsp(TspParams),
}

impl PlannerConfig {
    pub fn spp(mu1: f64, mu2: f64) -> Self {
        PlannerConfig::Spp {
            weights: SppWeights { mu1, mu2 },
            mode: None,
            prize: PrizeParams::default(),
        }
    }

    pub fn tsp(n: usize, beta: f64) -> Self {
        PlannerConfig::Tsp(TspParams {
            n,
            beta,
            ..TspParams::default()
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlannerConfig::Spp { .. } => "spp",
            PlannerConfig::Tsp(_) => "tsp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartPolicy {
    Fixed { start: GridIndex },
    /// Uniform over the lattice, redrawn while it equals the end point.
    RandomPerRound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub rounds: usize,
    pub planner: PlannerConfig,
    pub start: StartPolicy,
    pub end: GridIndex,
    pub seed: u64,
    /// Fading walk resolution; a fifth of the lattice spacing when absent.
    #[serde(default)]
    pub fading_step_m: Option<f64>,
    #[serde(default)]
    pub fading: Fading,
    /// Standard deviation of additive measurement noise (dB); 0 is noiseless.
    #[serde(default)]
    pub measurement_noise_db: f64,
    /// Refit the semivariogram every this many rounds; never when absent.
    #[serde(default)]
    pub refit_every: Option<usize>,
    #[serde(default)]
    pub kriging: KrigingSettings,
}

impl CampaignConfig {
    pub fn validate(&self, ckm: &ChannelKnowledgeMap) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", "must be at least 1"));
        }
        ckm.spec.check(self.end)?;
        if let StartPolicy::Fixed { start } = self.start {
            ckm.spec.check(start)?;
            if start == self.end {
                return Err(Error::CoincidentPoints("start and end"));
            }
        }
        if ckm.len() < 2 {
            return Err(Error::invalid("grid", "campaigns need at least two cells"));
        }
        if let Some(s) = self.fading_step_m {
            if !(s > 0.0) {
                return Err(Error::invalid("fading_step_m", "must be positive"));
            }
        }
        if !(self.measurement_noise_db >= 0.0) {
            return Err(Error::invalid("measurement_noise_db", "must be non-negative"));
        }
        if self.refit_every == Some(0) {
            return Err(Error::invalid("refit_every", "must be at least 1"));
        }
        match &self.planner {
            PlannerConfig::Spp { weights, .. } => weights.validate(),
            PlannerConfig::Tsp(p) if !(p.beta >= 0.0) => {
                Err(Error::invalid("beta", "must be non-negative"))
            }
            PlannerConfig::Tsp(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub t_r: f64,
    pub o_r: f64,
    pub m_r: usize,
    pub mse_after: f64,
    pub realized_outage_m: f64,
    pub outage_fraction: f64,
    pub measured_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub metrics: RoundMetrics,
    pub trajectory: Trajectory,
}

/// Evolving campaign state: the ground-truth world, the map and the Kriging engine.
#[derive(Debug, Clone)]
pub struct CampaignState {
    pub scenario: UrbanScenario,
    pub ckm: ChannelKnowledgeMap,
    pub engine: KrigingEngine,
    /// Rounds completed so far.
    pub round: usize,
}

impl CampaignState {
    pub fn new(scenario: UrbanScenario, ckm: ChannelKnowledgeMap, model: &FittedModel, settings: &KrigingSettings) -> Self {
        let engine = KrigingEngine::new(model.model, settings.neighborhood(), &ckm.spec);
        CampaignState {
            scenario,
            ckm,
            engine,
            round: 0,
        }
    }
}

/// Plans one trajectory on the current map.
pub fn plan_trajectory(
    ckm: &ChannelKnowledgeMap,
    engine: &KrigingEngine,
    planner: &PlannerConfig,
    start: GridIndex,
    end: GridIndex,
    seed: u64,
) -> Result<Trajectory> {
    match planner {
        PlannerConfig::Spp {
            weights,
            mode,
            prize,
        } => {
            let mode = mode.unwrap_or_else(|| SppMode::auto(weights));
            Ok(spp::plan(ckm, start, end, weights, mode, prize)?.trajectory)
        }
        PlannerConfig::Tsp(p) => {
            let corridor = p.corridor_for(ckm, start, end);
            let available = tsp::corridor_candidates(ckm, start, end, corridor)?.len();
            if available == 0 {
                return Trajectory::new(0, vec![start, end], &ckm.spec);
            }
            let p = TspParams {
                n: p.n.min(available),
                seed,
                ..*p
            };
            Ok(tsp::plan(ckm, engine, start, end, &p)?.trajectory)
        }
    }
}

/// Length flown in outage when every base station's power is scaled by a
/// fading draw, sampled at the midpoints of steps no longer than `step_m`.
///
/// The serving station at each sample is the one with the best expected SINR.
pub fn realize_outage_along<R: Rng + ?Sized>(
    points: &[Point3],
    scenario: &UrbanScenario,
    gamma_th_db: f64,
    fading: Fading,
    rng: &mut R,
    step_m: f64,
) -> Result<f64> {
    if !(step_m > 0.0) {
        return Err(Error::invalid("step_m", "must be positive"));
    }
    let noise = scenario.radio.noise_mw();
    let th = crate::env::db_to_linear(gamma_th_db);
    let mut out = 0.0;
    for w in points.windows(2) {
        let len = vec3::dist(w[0], w[1]);
        if len == 0.0 {
            continue;
        }
        let steps = (len / step_m).ceil().max(1.0) as usize;
        let piece = len / steps as f64;
        for s in 0..steps {
            let p = vec3::lerp(w[0], w[1], (s as f64 + 0.5) / steps as f64);
            let rx = scenario.mean_received_mw(p)?;
            let (_, b) = best_sinr(&rx, noise);
            let faded: Vec<f64> = rx.iter().map(|v| v * fading.sample(rng)).collect();
            let total: f64 = faded.iter().sum();
            let sinr = faded[b] / (total - faded[b] + noise);
            if sinr < th {
                out += piece;
            }
        }
    }
    Ok(out)
}

/// [`realize_outage_along`] for a lattice trajectory.
pub fn realize_outage<R: Rng + ?Sized>(
    traj: &Trajectory,
    scenario: &UrbanScenario,
    ckm: &ChannelKnowledgeMap,
    fading: Fading,
    rng: &mut R,
    step_m: f64,
) -> Result<f64> {
    realize_outage_along(&traj.points(&ckm.spec), scenario, ckm.gamma_th_db, fading, rng, step_m)
}

/// Per-round seeds drawn from the campaign stream.
struct RoundSeeds {
    start: GridIndex,
    fading: u64,
    noise: u64,
    solver: u64,
}

fn draw_round(rng: &mut ChaCha8Rng, config: &CampaignConfig, ckm: &ChannelKnowledgeMap) -> RoundSeeds {
    let start = match config.start {
        StartPolicy::Fixed { start } => start,
        StartPolicy::RandomPerRound => loop {
            let s = ckm.spec.index(rng.random_range(0..ckm.len()));
            if s != config.end {
                break s;
            }
        },
    };
    RoundSeeds {
        start,
        fading: rng.random(),
        noise: rng.random(),
        solver: rng.random(),
    }
}

fn round_inner(state: &mut CampaignState, config: &CampaignConfig, seeds: &RoundSeeds) -> Result<RoundOutcome> {
    let round = state.round + 1;
    let spec = state.ckm.spec;
    let traj = plan_trajectory(&state.ckm, &state.engine, &config.planner, seeds.start, config.end, seeds.solver)?;
    let traj = Trajectory { round, ..traj };
    let before = state.ckm.measured.clone();
    let RoundObjectives { t_r, o_r, m_r } = geom::eval_objectives(&traj, &state.ckm, &before);

    let step = config.fading_step_m.unwrap_or(spec.delta / 5.0);
    let mut frng = ChaCha8Rng::seed_from_u64(seeds.fading);
    let realized = realize_outage(&traj, &state.scenario, &state.ckm, config.fading, &mut frng, step)?;

    let mut nrng = ChaCha8Rng::seed_from_u64(seeds.noise);
    let noise = Normal::new(0.0, config.measurement_noise_db).map_err(|e| Error::invalid("measurement_noise_db", e.to_string()))?;
    for l in traj.traversed_cells(&spec) {
        if !state.ckm.measured[l] {
            let v = state.ckm.truth_sinr_db[l] + noise.sample(&mut nrng);
            state.ckm.mark_measured(l, v);
        }
    }
    if let Some(every) = config.refit_every {
        if round % every == 0 {
            let fit = kriging::fit_from_map(&state.ckm, &config.kriging)?;
            state.engine = KrigingEngine::new(fit.model, config.kriging.neighborhood(), &spec);
        }
    }
    if state.ckm.measured.iter().any(|m| !m) {
        state.engine.complete(&mut state.ckm)?;
    }
    state.round = round;
    Ok(RoundOutcome {
        metrics: RoundMetrics {
            round,
            t_r,
            o_r,
            m_r,
            mse_after: kriging::global_mse(&state.ckm),
            realized_outage_m: realized,
            outage_fraction: if t_r > 0.0 { (o_r / t_r).min(1.0) } else { 0.0 },
            measured_count: state.ckm.measured_count(),
        },
        trajectory: traj,
    })
}

/// Runs one round from `start`; `seed` drives fading, noise and the solver.
pub fn run_round(state: &mut CampaignState, config: &CampaignConfig, start: GridIndex, seed: u64) -> Result<RoundOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = RoundSeeds {
        start,
        fading: rng.random(),
        noise: rng.random(),
        solver: rng.random(),
    };
    let round = state.round + 1;
    round_inner(state, config, &seeds).map_err(|e| Error::Round {
        round,
        source: Box::new(e),
    })
}

/// Runs every round of a campaign sequentially.
pub fn run_campaign(state: &mut CampaignState, config: &CampaignConfig) -> Result<Vec<RoundOutcome>> {
    config.validate(&state.ckm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let seeds = draw_round(&mut rng, config, &state.ckm);
        let round = state.round + 1;
        let o = round_inner(state, config, &seeds).map_err(|e| Error::Round {
            round,
            source: Box::new(e),
        })?;
        log::info!(
            "round {round}: T={:.1} O={:.1} M={} mse={:.4}",
            o.metrics.t_r,
            o.metrics.o_r,
            o.metrics.m_r,
            o.metrics.mse_after
        );
        out.push(o);
    }
    Ok(out)
}

/// Base campaign plus the planner grid of a Pareto sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: CampaignConfig,
    pub grid: Vec<PlannerConfig>,
}

/// One sweep point: planner parameters with mean objectives, or the error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub planner: PlannerConfig,
    pub mean_t_r: f64,
    pub mean_o_r: f64,
    pub mean_m_r: f64,
    pub mean_mse_after: f64,
    pub error: Option<String>,
}

/// Evaluates every planner of `grid` from the same initial state.
///
/// Each point runs `base.rounds` rounds (one round reproduces a single
/// mission per point) with the base seeds; a failing point is reported in
/// its row and the sweep continues. Points run in parallel.
pub fn pareto_sweep(state: &CampaignState, base: &CampaignConfig, grid: &[PlannerConfig]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "sweep needs at least one point"));
    }
    Ok(grid
        .par_iter()
        .enumerate()
        .map(|(point, planner)| {
            let cfg = CampaignConfig {
                planner: planner.clone(),
                ..base.clone()
            };
            let mut st = state.clone();
            let nan = f64::NAN;
            match run_campaign(&mut st, &cfg) {
                Ok(rounds) => {
                    let n = rounds.len() as f64;
                    let mean = |f: &dyn Fn(&RoundMetrics) -> f64| rounds.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
                    SweepRow {
                        point,
                        planner: planner.clone(),
                        mean_t_r: mean(&|m| m.t_r),
                        mean_o_r: mean(&|m| m.o_r),
                        mean_m_r: mean(&|m| m.m_r as f64),
                        mean_mse_after: mean(&|m| m.mse_after),
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    point,
                    planner: planner.clone(),
                    mean_t_r: nan,
                    mean_o_r: nan,
                    mean_m_r: nan,
                    mean_mse_after: nan,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}
