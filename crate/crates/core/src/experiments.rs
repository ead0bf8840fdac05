//! Config-driven experiments: run several naming-game conditions over paired
//! seeds, record agreement and alignment metrics over time, and summarize.
//!
//! For a given seed index every condition sees the same world, the same
//! observations and the same initial agents, so conditions can be compared
//! pairwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{init_agent, AgentState, Hyperparams, SignPrior};
use crate::alignment::{
    adjusted_rand_index, cohen_kappa, compute_rdm, default_epsilon, gw_align_with, matching_accuracy, rsa,
    Correlation, DistanceMetric, GwOptions, Rdm,
};
use crate::error::{CpcError, Result};
use crate::naming_game::{run_game_observed, GameConfig, GameMode, GameTrace};
use crate::rng::mix_seed;
use crate::stats::{mann_whitney_u, mean, sample_std};
use crate::world::{generate_world, observe, parse_field, ModalityTransform, ObservationSet, TransformKind, WorldConfig};

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RECORD_SCHEMA_VERSION: u32 = 1;

pub const RUN_RECORD_FILE: &str = "run_record.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LONG_TABLE_FILE: &str = "summary_long.csv";
pub const TRACE_DIR: &str = "traces";

// salts separating the per-replicate seed families
const SALT_TRANSFORM: u64 = 0x7472_616e;
const SALT_MASK: u64 = 0x6d61_736b;
const SALT_AGENT: u64 = 0x6167_656e;

/// Prior hyperparameters as written in a config file. Omitted fields fall
/// back to a weak isotropic prior centred at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub n_signs: usize,
    #[serde(default = "default_prior_scale")]
    pub prior_scale: f64,
    /// Defaults to obs_dim + 2.
    #[serde(default)]
    pub prior_dof: Option<f64>,
    #[serde(default = "default_scatter_scale")]
    pub prior_scatter_scale: f64,
    /// Defaults to the zero vector.
    #[serde(default)]
    pub prior_mean: Option<Vec<f64>>,
    /// Unnormalized log prior weights over signs; uniform when absent.
    #[serde(default)]
    pub sign_log_weights: Option<Vec<f64>>,
}

fn default_prior_scale() -> f64 {
    0.1
}

fn default_scatter_scale() -> f64 {
    1.0
}

impl HyperConfig {
    pub fn to_hyperparams(&self, obs_dim: usize) -> Result<Hyperparams> {
        let dof = self.prior_dof.unwrap_or(obs_dim as f64 + 2.0);
        let mut h = Hyperparams::isotropic(obs_dim, self.n_signs, self.prior_scale, dof, self.prior_scatter_scale);
        if let Some(m) = &self.prior_mean {
            if m.len() != obs_dim {
                return Err(CpcError::InvalidConfig(format!(
                    "prior_mean has {} entries, obs_dim is {obs_dim}",
                    m.len()
                )));
            }
            h.prior_mean = DVector::from_column_slice(m);
        }
        if let Some(w) = &self.sign_log_weights {
            h.sign_prior = SignPrior::LogWeights(w.clone());
        }
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `world.seed` is ignored: each replicate derives its own world seed
    /// from `seed`.
    pub world: WorldConfig,
    pub hyper: HyperConfig,
    /// `game.mode` is ignored in favour of `conditions`.
    pub game: GameConfig,
    pub conditions: Vec<GameMode>,
    pub n_seeds: usize,
    #[serde(default)]
    pub seed: u64,
    /// GW regularization; `None` = scale-adaptive default.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_gw_n_init")]
    pub gw_n_init: usize,
    pub output_dir: PathBuf,
    /// Rounds at which metrics are recorded (0 = before the first round).
    /// Defaults to every round.
    #[serde(default)]
    pub measure_schedule: Option<Vec<usize>>,
    /// Isometry applied to every agent but agent 0.
    #[serde(default = "default_transform")]
    pub agent_transform: TransformKind,
    /// Fraction of stimuli each agent perceives.
    #[serde(default = "default_visible_fraction")]
    pub visible_fraction: f64,
}

fn default_gw_n_init() -> usize {
    10
}

fn default_transform() -> TransformKind {
    TransformKind::Identity
}

fn default_visible_fraction() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CpcError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CpcError::InvalidConfig(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CpcError::InvalidConfig(m));
        self.world.validate()?;
        self.game.validate()?;
        self.hyper.to_hyperparams(self.world.obs_dim)?;
        if self.world.n_agents < 2 {
            return bad(format!("experiments need at least 2 agents, got {}", self.world.n_agents));
        }
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1".into());
        }
        if self.conditions.is_empty() {
            return bad("conditions must not be empty".into());
        }
        let distinct: BTreeSet<_> = self.conditions.iter().collect();
        if distinct.len() != self.conditions.len() {
            return bad("conditions contain duplicates".into());
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad(format!("epsilon must be positive, got {eps}"));
            }
        }
        if self.gw_n_init == 0 {
            return bad("gw_n_init must be at least 1".into());
        }
        if !(self.visible_fraction > 0.0 && self.visible_fraction <= 1.0) {
            return bad(format!("visible_fraction must be in (0, 1], got {}", self.visible_fraction));
        }
        if let Some(s) = &self.measure_schedule {
            if s.is_empty() {
                return bad("measure_schedule must not be empty".into());
            }
            if s.windows(2).any(|w| w[0] >= w[1]) {
                return bad("measure_schedule must be strictly increasing".into());
            }
            if s.iter().any(|&r| r > self.game.n_rounds) {
                return bad(format!("measure_schedule rounds must be <= n_rounds ({})", self.game.n_rounds));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Vec<usize> {
        self.measure_schedule
            .clone()
            .unwrap_or_else(|| (0..=self.game.n_rounds).collect())
    }

    /// World seed of replicate `index`.
    pub fn replicate_seed(&self, index: usize) -> u64 {
        mix_seed(self.seed, index as u64)
    }
}

/// Metrics between agents 0 and 1 at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub round: usize,
    pub ari: f64,
    pub kappa: f64,
    /// Signs currently used by both agents; centroid metrics use these.
    pub n_shared_signs: usize,
    /// Pearson RSA between the agents' sign-centroid RDMs; needs three shared
    /// signs and non-constant distances.
    pub rsa_centroid: Option<f64>,
    /// Pearson RSA between per-stimulus sign-probability profile RDMs.
    pub rsa_profile: Option<f64>,
    /// Fraction of shared signs that GW maps onto the same sign.
    pub gw_matching_accuracy: Option<f64>,
    pub gw_distance: Option<f64>,
    /// Running acceptance rate; `None` at round 0 and for
    /// non-communicative modes.
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub condition: GameMode,
    pub seed_index: usize,
    pub seed: u64,
    pub points: Vec<MetricPoint>,
}

impl RunSeries {
    pub fn final_point(&self) -> Option<&MetricPoint> {
        self.points.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub software_version: String,
    pub config: ExperimentConfig,
    /// Ordered by condition (config order), then seed index.
    pub series: Vec<RunSeries>,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: RunRecord = serde_json::from_str(text)?;
        if rec.schema_version != RECORD_SCHEMA_VERSION {
            return Err(CpcError::SchemaVersion {
                found: rec.schema_version,
                expected: RECORD_SCHEMA_VERSION,
            });
        }
        Ok(rec)
    }

    pub fn conditions(&self) -> Vec<GameMode> {
        self.config.conditions.clone()
    }

    /// One row per (condition, seed, round). Contains no timing data, so
    /// identical configs give identical bytes.
    pub fn write_metrics_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(METRIC_COLUMNS)?;
        for s in &self.series {
            for p in &s.points {
                w.write_record([
                    s.condition.to_string(),
                    s.seed_index.to_string(),
                    s.seed.to_string(),
                    p.round.to_string(),
                    p.ari.to_string(),
                    p.kappa.to_string(),
                    p.n_shared_signs.to_string(),
                    opt(p.rsa_centroid),
                    opt(p.rsa_profile),
                    opt(p.gw_matching_accuracy),
                    opt(p.gw_distance),
                    opt(p.acceptance_rate),
                ])?;
            }
        }
        w.flush().map_err(|e| CpcError::io(METRICS_FILE, e))?;
        Ok(())
    }
}

const METRIC_COLUMNS: [&str; 12] = [
    "condition",
    "seed_index",
    "seed",
    "round",
    "ari",
    "kappa",
    "n_shared_signs",
    "rsa_centroid",
    "rsa_profile",
    "gw_matching_accuracy",
    "gw_distance",
    "acceptance_rate",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(rec: &csv::StringRecord, idx: usize) -> Result<Option<f64>> {
    match rec.get(idx) {
        Some("") => Ok(None),
        _ => parse_field(rec, idx).map(Some),
    }
}

/// Reads a metrics table back into series (order preserved).
pub fn read_metrics_csv<R: Read>(reader: R) -> Result<Vec<RunSeries>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(METRIC_COLUMNS) {
        return Err(CpcError::InvalidInput(format!("unexpected metrics header: {header:?}")));
    }
    let mut out: Vec<RunSeries> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let condition: GameMode = rec[0].parse()?;
        let seed_index: usize = parse_field(&rec, 1)?;
        let seed: u64 = parse_field(&rec, 2)?;
        let point = MetricPoint {
            round: parse_field(&rec, 3)?,
            ari: parse_field(&rec, 4)?,
            kappa: parse_field(&rec, 5)?,
            n_shared_signs: parse_field(&rec, 6)?,
            rsa_centroid: parse_opt(&rec, 7)?,
            rsa_profile: parse_opt(&rec, 8)?,
            gw_matching_accuracy: parse_opt(&rec, 9)?,
            gw_distance: parse_opt(&rec, 10)?,
            acceptance_rate: parse_opt(&rec, 11)?,
        };
        match out.last_mut() {
            Some(s) if s.condition == condition && s.seed_index == seed_index => s.points.push(point),
            _ => out.push(RunSeries {
                condition,
                seed_index,
                seed,
                points: vec![point],
            }),
        }
    }
    Ok(out)
}

/// Everything one replicate shares across conditions.
struct Replicate {
    world: crate::world::World,
    observations: Vec<ObservationSet>,
    agents: Vec<AgentState>,
}

fn build_replicate(cfg: &ExperimentConfig, hyper: &Hyperparams, seed: u64) -> Result<Replicate> {
    let world_cfg = WorldConfig {
        seed,
        ..cfg.world.clone()
    };
    let world = generate_world(&world_cfg)?;
    let dim = world_cfg.obs_dim;
    let mut observations = Vec::with_capacity(world_cfg.n_agents);
    for k in 0..world_cfg.n_agents {
        let transform = if k == 0 {
            ModalityTransform::identity(dim)
        } else {
            ModalityTransform::of_kind(cfg.agent_transform, dim, mix_seed(seed ^ SALT_TRANSFORM, k as u64))
        };
        let mut o = observe(&world, k, &transform, world_cfg.obs_noise, seed)?;
        if cfg.visible_fraction < 1.0 {
            o = o.with_random_mask(cfg.visible_fraction, mix_seed(seed ^ SALT_MASK, k as u64))?;
        }
        observations.push(o);
    }
    let agents = observations
        .iter()
        .enumerate()
        .map(|(k, o)| init_agent(hyper.clone(), o.clone(), mix_seed(seed ^ SALT_AGENT, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Replicate {
        world,
        observations,
        agents,
    })
}

fn shared_signs(a: &AgentState, b: &AgentState) -> Vec<usize> {
    let used: BTreeSet<usize> = b.used_signs().into_iter().collect();
    a.used_signs().into_iter().filter(|s| used.contains(s)).collect()
}

fn centroid_points(agent: &AgentState, signs: &[usize]) -> DMatrix<f64> {
    let dim = agent.hyper().obs_dim();
    DMatrix::from_fn(signs.len(), dim, |i, d| agent.posteriors()[signs[i]].mean[d])
}

fn profile_points(agent: &AgentState) -> Result<DMatrix<f64>> {
    let rows = (0..agent.n_stimuli())
        .map(|s| agent.sign_probabilities(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(rows.len(), agent.n_signs(), |i, j| rows[i][j]))
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(CpcError::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn measure(cfg: &ExperimentConfig, agents: &[AgentState], round: usize, gw_seed: u64) -> Result<MetricPoint> {
    let (a, b) = (&agents[0], &agents[1]);
    let ari = adjusted_rand_index(a.assignments(), b.assignments())?;
    let kappa = cohen_kappa(a.assignments(), b.assignments())?;
    let shared = shared_signs(a, b);

    let (mut rsa_centroid, mut gw_matching_accuracy, mut gw_distance) = (None, None, None);
    if shared.len() >= 2 {
        let ra = compute_rdm(&centroid_points(a, &shared), DistanceMetric::Euclidean)?;
        let rb = compute_rdm(&centroid_points(b, &shared), DistanceMetric::Euclidean)?;
        if shared.len() >= 3 {
            rsa_centroid = defined(rsa(&ra, &rb, Correlation::Pearson))?;
        }
        if ra.mean_entry() > 0.0 && rb.mean_entry() > 0.0 {
            let (acc, dist) = gw_centroids(cfg, &ra, &rb, gw_seed)?;
            gw_matching_accuracy = Some(acc);
            gw_distance = Some(dist);
        }
    }

    let pa = compute_rdm(&profile_points(a)?, DistanceMetric::Euclidean)?;
    let pb = compute_rdm(&profile_points(b)?, DistanceMetric::Euclidean)?;
    let rsa_profile = defined(rsa(&pa, &pb, Correlation::Pearson))?;

    Ok(MetricPoint {
        round,
        ari,
        kappa,
        n_shared_signs: shared.len(),
        rsa_centroid,
        rsa_profile,
        gw_matching_accuracy,
        gw_distance,
        acceptance_rate: None,
    })
}

fn gw_centroids(cfg: &ExperimentConfig, a: &Rdm, b: &Rdm, seed: u64) -> Result<(f64, f64)> {
    let opts = GwOptions {
        epsilon: Some(cfg.epsilon.unwrap_or_else(|| default_epsilon(a, b))),
        n_init: cfg.gw_n_init,
        seed,
        ..GwOptions::default()
    };
    let res = gw_align_with(a, b, &opts)?;
    let identity: Vec<usize> = (0..a.len()).collect();
    Ok((matching_accuracy(&res.best.plan, &identity, 1)?, res.best.gw_distance))
}

fn run_condition(
    cfg: &ExperimentConfig,
    rep: &Replicate,
    mode: GameMode,
    seed_index: usize,
    seed: u64,
) -> Result<(RunSeries, GameTrace)> {
    let schedule: BTreeSet<usize> = cfg.schedule().into_iter().collect();
    let game = GameConfig {
        mode,
        seed,
        ..cfg.game.clone()
    };
    let mut points = Vec::with_capacity(schedule.len());
    let (_, trace) = run_game_observed(&rep.world, rep.agents.clone(), &rep.observations, &game, |round, agents| {
        if schedule.contains(&round) {
            points.push(measure(cfg, agents, round, mix_seed(seed, round as u64))?);
        }
        Ok(())
    })?;
    for p in &mut points {
        if p.round > 0 {
            p.acceptance_rate = trace.acceptance_rate_curve[p.round - 1];
        }
    }
    let series = RunSeries {
        condition: mode,
        seed_index,
        seed,
        points,
    };
    Ok((series, trace))
}

pub struct ExperimentOutput {
    pub record: RunRecord,
    /// Same order as `record.series`.
    pub traces: Vec<GameTrace>,
}

/// Runs every condition on every replicate. Replicates and conditions run
/// in parallel; results are ordered by condition then seed index.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let start = Instant::now();
    let hyper = config.hyper.to_hyperparams(config.world.obs_dim)?;
    let replicates = (0..config.n_seeds)
        .into_par_iter()
        .map(|i| build_replicate(config, &hyper, config.replicate_seed(i)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(GameMode, usize)> = config
        .conditions
        .iter()
        .flat_map(|&m| (0..config.n_seeds).map(move |i| (m, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(mode, i)| run_condition(config, &replicates[i], mode, i, config.replicate_seed(i)))
        .collect::<Result<Vec<_>>>()?;
    let (series, traces) = results.into_iter().unzip();
    let record = RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        software_version: SOFTWARE_VERSION.to_string(),
        config: config.clone(),
        series,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(ExperimentOutput { record, traces })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CpcError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CpcError::io(path, e))
}

impl ExperimentOutput {
    /// Writes `run_record.json`, `metrics.csv` and `traces/` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_file(&dir.join(RUN_RECORD_FILE), self.record.to_json()?.as_bytes())?;
        let mut csv = Vec::new();
        self.record.write_metrics_csv(&mut csv)?;
        write_file(&dir.join(METRICS_FILE), &csv)?;
        let traces = dir.join(TRACE_DIR);
        ensure_dir(&traces)?;
        for t in &self.traces {
            t.write_files(&traces)?;
        }
        Ok(())
    }
}

/// Runs the experiment and writes its outputs to `config.output_dir`, which
/// is created up front so an unwritable location fails before any work.
pub fn run_and_write(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    ensure_dir(&config.output_dir)?;
    let out = run_experiment(config)?;
    out.write_to(&config.output_dir)?;
    Ok(out.record)
}

pub const SUMMARY_METRICS: [&str; 8] = [
    "ari",
    "kappa",
    "rsa_centroid",
    "rsa_profile",
    "gw_matching_accuracy",
    "gw_distance",
    "acceptance_rate",
    "n_shared_signs",
];

fn metric_value(p: &MetricPoint, name: &str) -> Option<f64> {
    match name {
        "ari" => Some(p.ari),
        "kappa" => Some(p.kappa),
        "rsa_centroid" => p.rsa_centroid,
        "rsa_profile" => p.rsa_profile,
        "gw_matching_accuracy" => p.gw_matching_accuracy,
        "gw_distance" => p.gw_distance,
        "acceptance_rate" => p.acceptance_rate,
        "n_shared_signs" => Some(p.n_shared_signs as f64),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    /// Seeds with a defined value.
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: GameMode,
    pub n_seeds: usize,
    /// Statistics of each metric at the last measured round.
    pub final_metrics: BTreeMap<String, MetricStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub condition_a: GameMode,
    pub condition_b: GameMode,
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub u_statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub condition: GameMode,
    pub seed_index: usize,
    pub round: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub conditions: Vec<ConditionSummary>,
    /// Mann–Whitney U on final values for every condition pair and metric,
    /// only when both conditions have values for the same seeds (at least
    /// two).
    pub contrasts: Vec<Contrast>,
    pub long_table: Vec<LongRow>,
}

impl SummaryReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn condition(&self, mode: GameMode) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == mode)
    }

    pub fn contrast(&self, a: GameMode, b: GameMode, metric: &str) -> Option<&Contrast> {
        self.contrasts
            .iter()
            .find(|c| c.condition_a == a && c.condition_b == b && c.metric == metric)
    }

    pub fn write_long_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["condition", "seed_index", "round", "metric", "value"])?;
        for r in &self.long_table {
            w.write_record([
                r.condition.to_string(),
                r.seed_index.to_string(),
                r.round.to_string(),
                r.metric.clone(),
                r.value.to_string(),
            ])?;
        }
        w.flush().map_err(|e| CpcError::io(LONG_TABLE_FILE, e))?;
        Ok(())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_file(&dir.join(SUMMARY_FILE), self.to_json()?.as_bytes())?;
        let mut csv = Vec::new();
        self.write_long_csv(&mut csv)?;
        write_file(&dir.join(LONG_TABLE_FILE), &csv)
    }
}

/// Aggregates one or more run records that compare the same conditions.
/// Seeds from several records are pooled; seed indices are renumbered in
/// record order.
pub fn summarize(records: &[RunRecord]) -> Result<SummaryReport> {
    let first = records
        .first()
        .ok_or_else(|| CpcError::InvalidInput("no run records to summarize".into()))?;
    let conditions = first.conditions();
    let expected: BTreeSet<GameMode> = conditions.iter().copied().collect();
    for r in &records[1..] {
        let got: BTreeSet<GameMode> = r.conditions().into_iter().collect();
        if got != expected {
            return Err(CpcError::InvalidInput(format!(
                "mismatched condition sets: {:?} vs {:?}",
                expected, got
            )));
        }
    }

    // condition -> pooled seed index -> series
    let mut by_condition: BTreeMap<GameMode, BTreeMap<usize, &RunSeries>> = BTreeMap::new();
    let mut long_table = Vec::new();
    let mut offset = 0;
    for r in records {
        for s in &r.series {
            let idx = offset + s.seed_index;
            by_condition.entry(s.condition).or_default().insert(idx, s);
        }
        offset += r.config.n_seeds;
    }
    for &mode in &conditions {
        for (&idx, s) in by_condition.get(&mode).into_iter().flatten() {
            for p in &s.points {
                for m in SUMMARY_METRICS {
                    if let Some(v) = metric_value(p, m) {
                        long_table.push(LongRow {
                            condition: mode,
                            seed_index: idx,
                            round: p.round,
                            metric: m.to_string(),
                            value: v,
                        });
                    }
                }
            }
        }
    }

    let finals = |mode: GameMode, metric: &str| -> BTreeMap<usize, f64> {
        by_condition
            .get(&mode)
            .into_iter()
            .flatten()
            .filter_map(|(&i, s)| s.final_point().and_then(|p| metric_value(p, metric)).map(|v| (i, v)))
            .collect()
    };

    let summaries = conditions
        .iter()
        .map(|&mode| {
            let final_metrics = SUMMARY_METRICS
                .iter()
                .map(|&m| {
                    let vals: Vec<f64> = finals(mode, m).into_values().collect();
                    let stat = MetricStat {
                        n: vals.len(),
                        mean: (!vals.is_empty()).then(|| mean(&vals)),
                        std: (!vals.is_empty()).then(|| sample_std(&vals)),
                    };
                    (m.to_string(), stat)
                })
                .collect();
            ConditionSummary {
                condition: mode,
                n_seeds: by_condition.get(&mode).map_or(0, |m| m.len()),
                final_metrics,
            }
        })
        .collect();

    let mut contrasts = Vec::new();
    for (i, &a) in conditions.iter().enumerate() {
        for &b in &conditions[i + 1..] {
            for m in SUMMARY_METRICS {
                let (fa, fb) = (finals(a, m), finals(b, m));
                if fa.len() < 2 || !fa.keys().eq(fb.keys()) {
                    continue;
                }
                let (xa, xb): (Vec<f64>, Vec<f64>) = (fa.into_values().collect(), fb.into_values().collect());
                let t = mann_whitney_u(&xa, &xb);
                contrasts.push(Contrast {
                    condition_a: a,
                    condition_b: b,
                    metric: m.to_string(),
                    mean_a: mean(&xa),
                    mean_b: mean(&xb),
                    u_statistic: t.u,
                    p_value: t.p_value,
                    exact: t.exact,
                });
            }
        }
    }

    Ok(SummaryReport {
        conditions: summaries,
        contrasts,
        long_table,
    })
}

/// Loads every `run_record.json` in `dir` and its immediate subdirectories,
/// in path order.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths = Vec::new();
    let direct = dir.join(RUN_RECORD_FILE);
    if direct.is_file() {
        paths.push(direct);
    }
    let entries = fs::read_dir(dir).map_err(|e| CpcError::io(dir, e))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    paths.extend(subdirs.into_iter().map(|d| d.join(RUN_RECORD_FILE)).filter(|p| p.is_file()));
    if paths.is_empty() {
        return Err(CpcError::InvalidInput(format!("no {RUN_RECORD_FILE} found under {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| CpcError::io(p, e))?;
            RunRecord::from_json(&text)
        })
        .collect()
}
