//! Metropolis–Hastings naming game.
//!
//! For a jointly attended stimulus the speaker samples a sign from its own
//! posterior, and the listener accepts it with probability
//! `min(1, p_L(o_L | w*) / p_L(o_L | w_current))`. With the agents' parameters
//! held fixed this is an independence Metropolis–Hastings sampler whose
//! target is `p(w) p_S(o_S | w) p_L(o_L | w)`, so the population jointly
//! samples the shared sign without any agent seeing another's observations.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{check_temperature, sample_from_logits, AgentState, AssignmentOwner, NiwParams, SignAssignment};
use crate::error::{CpcError, Result};
use crate::rng::{rng_for, streams};
use crate::world::{parse_field, ObservationSet, World};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameMode {
    /// Speaker proposes, listener accepts by predictive ratio.
    #[default]
    Mh,
    /// Listener always adopts the proposal.
    AlwaysAccept,
    /// Agents resample their own assignments; no signs are exchanged.
    NoCommunication,
    /// Centralized collapsed Gibbs over the pooled model.
    OracleGibbs,
}

impl GameMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            GameMode::Mh => "mh",
            GameMode::AlwaysAccept => "always_accept",
            GameMode::NoCommunication => "no_communication",
            GameMode::OracleGibbs => "oracle_gibbs",
        }
    }

    pub fn is_communicative(&self) -> bool {
        matches!(self, GameMode::Mh | GameMode::AlwaysAccept)
    }
}

impl std::fmt::Display for GameMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GameMode {
    type Err = CpcError;

    fn from_str(s: &str) -> Result<Self> {
        [GameMode::Mh, GameMode::AlwaysAccept, GameMode::NoCommunication, GameMode::OracleGibbs]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CpcError::InvalidInput(format!("unknown game mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleSchedule {
    #[default]
    AlternateEachRound,
    Random,
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub n_rounds: usize,
    #[serde(default)]
    pub mode: GameMode,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub role_schedule: RoleSchedule,
    #[serde(default)]
    pub seed: u64,
}

impl GameConfig {
    pub fn new(n_rounds: usize, mode: GameMode, seed: u64) -> Self {
        GameConfig {
            n_rounds,
            mode,
            temperature: 1.0,
            role_schedule: RoleSchedule::AlternateEachRound,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(CpcError::InvalidConfig("n_rounds must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(CpcError::InvalidConfig(format!(
                "game temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: usize,
    pub speaker_id: usize,
    pub listener_id: usize,
    pub stimulus: usize,
    pub proposed_sign: usize,
    pub accepted: bool,
    pub acceptance_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub mode: GameMode,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub final_assignments: Vec<SignAssignment>,
    /// Running mean of acceptances up to the end of each round; `None`
    /// while no proposal has been made (non-communicative modes).
    pub acceptance_rate_curve: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOutcome {
    pub accepted: bool,
    pub sign: usize,
    pub acceptance_prob: f64,
}

/// Listener's acceptance probability for moving from `current` to
/// `proposed`, from log predictive densities.
pub fn acceptance_probability(log_proposed: f64, log_current: f64) -> Result<f64> {
    if log_proposed == f64::NEG_INFINITY && log_current == f64::NEG_INFINITY {
        return Err(CpcError::DegenerateDensity(
            "listener density is zero for both the proposed and the current sign".into(),
        ));
    }
    if log_proposed.is_nan() || log_current.is_nan() {
        return Err(CpcError::DegenerateDensity("listener density is NaN".into()));
    }
    Ok((log_proposed - log_current).min(0.0).exp())
}

/// One naming-game exchange about `stimulus`. The speaker samples a sign for
/// `obs_speaker`; the listener scores it against its current sign using
/// `obs_listener` (`None` = the listener did not perceive the stimulus, so
/// every sign is equally likely and the proposal is accepted). The
/// listener's assignment is updated in place on acceptance.
pub fn mh_step<R: Rng + ?Sized>(
    speaker: &AgentState,
    listener: &mut AgentState,
    obs_speaker: Option<&DVector<f64>>,
    obs_listener: Option<&DVector<f64>>,
    stimulus: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<MhOutcome> {
    check_pair(speaker, listener, stimulus)?;
    let proposed = speaker.sample_sign_for(obs_speaker, temperature, rng)?;
    let current = listener.assignments()[stimulus];
    let r = match obs_listener {
        Some(x) => acceptance_probability(
            listener.posterior_predictive_logdensity(x, proposed)?,
            listener.posterior_predictive_logdensity(x, current)?,
        )?,
        None => 1.0,
    };
    let u: f64 = rng.random();
    let accepted = u < r;
    if accepted {
        listener.set_assignment(stimulus, proposed)?;
    }
    Ok(MhOutcome {
        accepted,
        sign: proposed,
        acceptance_prob: r,
    })
}

fn check_pair(speaker: &AgentState, listener: &AgentState, stimulus: usize) -> Result<()> {
    if speaker.n_signs() != listener.n_signs() {
        return Err(CpcError::InvalidInput(format!(
            "speaker has {} signs, listener has {}",
            speaker.n_signs(),
            listener.n_signs()
        )));
    }
    if stimulus >= speaker.n_stimuli() || stimulus >= listener.n_stimuli() {
        return Err(CpcError::InvalidInput(format!("stimulus {stimulus} out of range")));
    }
    Ok(())
}

/// Runs MH exchanges with frozen parameters (no refits), cycling through the
/// stimuli in index order, and counts how often the listener's full
/// assignment vector visits each state.
pub fn frozen_listener_chain(
    speaker: &AgentState,
    listener: &AgentState,
    n_steps: usize,
    temperature: f64,
    seed: u64,
) -> Result<BTreeMap<Vec<usize>, usize>> {
    let mut listener = listener.clone();
    let mut rng = rng_for(seed, streams::GAME);
    let mut counts = BTreeMap::new();
    let n = listener.n_stimuli();
    for step in 0..n_steps {
        let s = step % n;
        let os = speaker.observation(s);
        let ol = listener.observation(s);
        mh_step(speaker, &mut listener, os.as_ref(), ol.as_ref(), s, temperature, &mut rng)?;
        *counts.entry(listener.assignments().to_vec()).or_insert(0) += 1;
    }
    Ok(counts)
}

fn validate_game(world: &World, agents: &[AgentState], observations: &[ObservationSet], config: &GameConfig) -> Result<()> {
    config.validate()?;
    check_temperature(config.temperature)?;
    if agents.is_empty() {
        return Err(CpcError::InvalidConfig("at least one agent is required".into()));
    }
    if config.mode.is_communicative() && agents.len() < 2 {
        return Err(CpcError::InvalidConfig(format!(
            "mode {} needs at least 2 agents, got {}",
            config.mode,
            agents.len()
        )));
    }
    if observations.len() != agents.len() {
        return Err(CpcError::InvalidConfig(format!(
            "{} observation sets for {} agents",
            observations.len(),
            agents.len()
        )));
    }
    let n_signs = agents[0].n_signs();
    for (a, o) in agents.iter().zip(observations) {
        if a.n_signs() != n_signs {
            return Err(CpcError::InvalidConfig("agents disagree on n_signs".into()));
        }
        if o.n_stimuli() != world.n_stimuli() || a.n_stimuli() != world.n_stimuli() {
            return Err(CpcError::DimensionMismatch(format!(
                "agent {} does not cover the world's {} stimuli",
                a.agent_id(),
                world.n_stimuli()
            )));
        }
        if o.obs_dim() != a.hyper().obs_dim() {
            return Err(CpcError::DimensionMismatch(format!(
                "agent {} observation dim {} vs prior dim {}",
                a.agent_id(),
                o.obs_dim(),
                a.hyper().obs_dim()
            )));
        }
    }
    Ok(())
}

pub fn run_game(
    world: &World,
    agents: Vec<AgentState>,
    observations: &[ObservationSet],
    config: &GameConfig,
) -> Result<(Vec<AgentState>, GameTrace)> {
    run_game_observed(world, agents, observations, config, |_, _| Ok(()))
}

/// [`run_game`] with a hook called on the agents before the first round
/// (round 0) and after every round `r` (round `r`, 1-based).
pub fn run_game_observed<F>(
    world: &World,
    mut agents: Vec<AgentState>,
    observations: &[ObservationSet],
    config: &GameConfig,
    mut observe: F,
) -> Result<(Vec<AgentState>, GameTrace)>
where
    F: FnMut(usize, &[AgentState]) -> Result<()>,
{
    validate_game(world, &agents, observations, config)?;
    let mut rng = rng_for(config.seed, streams::GAME);
    let n_stimuli = world.n_stimuli();
    let k = agents.len();
    let mut records = Vec::new();
    let mut curve = Vec::with_capacity(config.n_rounds);
    let mut accepted_total = 0usize;

    observe(0, &agents)?;
    for round in 0..config.n_rounds {
        let mut order: Vec<usize> = (0..n_stimuli).collect();
        order.shuffle(&mut rng);
        match config.mode {
            GameMode::Mh | GameMode::AlwaysAccept => {
                let (sp, li) = pick_roles(round, k, config.role_schedule, &mut rng);
                let speaker = agents[sp].clone();
                let listener = &mut agents[li];
                for &s in &order {
                    let rec = match config.mode {
                        GameMode::Mh => {
                            let os = speaker.observation(s);
                            let ol = listener.observation(s);
                            let out = mh_step(&speaker, listener, os.as_ref(), ol.as_ref(), s, config.temperature, &mut rng)?;
                            StepRecord {
                                round,
                                speaker_id: speaker.agent_id(),
                                listener_id: listener.agent_id(),
                                stimulus: s,
                                proposed_sign: out.sign,
                                accepted: out.accepted,
                                acceptance_prob: out.acceptance_prob,
                            }
                        }
                        _ => {
                            let sign = speaker.sample_sign_posterior(s, config.temperature, &mut rng)?;
                            listener.set_assignment(s, sign)?;
                            StepRecord {
                                round,
                                speaker_id: speaker.agent_id(),
                                listener_id: listener.agent_id(),
                                stimulus: s,
                                proposed_sign: sign,
                                accepted: true,
                                acceptance_prob: 1.0,
                            }
                        }
                    };
                    accepted_total += usize::from(rec.accepted);
                    records.push(rec);
                }
            }
            GameMode::NoCommunication => {
                for agent in agents.iter_mut() {
                    for &s in &order {
                        let sign = agent.sample_sign_posterior(s, config.temperature, &mut rng)?;
                        agent.set_assignment(s, sign)?;
                    }
                }
            }
            GameMode::OracleGibbs => {
                let shared = collapsed_gibbs_pass(&agents, observations, &order, config.temperature, &mut rng)?;
                for agent in agents.iter_mut() {
                    for (s, &w) in shared.iter().enumerate() {
                        agent.set_assignment(s, w)?;
                    }
                }
            }
        }
        agents = agents
            .iter()
            .zip(observations)
            .map(|(a, o)| a.gibbs_update_params(o, &a.assignment_view(AssignmentOwner::Shared)))
            .collect::<Result<_>>()?;
        curve.push((!records.is_empty()).then(|| accepted_total as f64 / records.len() as f64));
        observe(round + 1, &agents)?;
    }

    let final_assignments = agents
        .iter()
        .map(|a| {
            let owner = match config.mode {
                GameMode::OracleGibbs => AssignmentOwner::Shared,
                _ => AssignmentOwner::ListenerView,
            };
            a.assignment_view(owner)
        })
        .collect();
    let trace = GameTrace {
        mode: config.mode,
        seed: config.seed,
        records,
        final_assignments,
        acceptance_rate_curve: curve,
    };
    Ok((agents, trace))
}

fn pick_roles<R: Rng + ?Sized>(round: usize, k: usize, schedule: RoleSchedule, rng: &mut R) -> (usize, usize) {
    match schedule {
        RoleSchedule::AlternateEachRound => (round % k, (round + 1) % k),
        RoleSchedule::Random => {
            let sp = rng.random_range(0..k);
            let offset = rng.random_range(1..k);
            (sp, (sp + offset) % k)
        }
    }
}

/// One sweep of collapsed Gibbs over the shared sign of every stimulus,
/// starting from agent 0's assignments. Each agent contributes the predictive
/// of its own observation under the sign's posterior with that observation
/// removed.
fn collapsed_gibbs_pass<R: Rng + ?Sized>(
    agents: &[AgentState],
    observations: &[ObservationSet],
    order: &[usize],
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n_signs = agents[0].n_signs();
    let mut shared = agents[0].assignments().to_vec();
    // per agent, per sign posteriors under the shared assignment
    let mut posts: Vec<Vec<NiwParams>> = agents
        .iter()
        .zip(observations)
        .map(|(a, o)| {
            a.gibbs_update_params(o, &SignAssignment::new(shared.clone(), AssignmentOwner::Shared))
                .map(|fitted| fitted.posteriors().to_vec())
        })
        .collect::<Result<_>>()?;
    let sign_prior = &agents[0].hyper().sign_prior;
    let base: Vec<f64> = match sign_prior {
        crate::agent::SignPrior::Uniform => vec![0.0; n_signs],
        crate::agent::SignPrior::LogWeights(w) => w.clone(),
    };

    for &s in order {
        let old = shared[s];
        let mut logits = base.clone();
        for (k, o) in observations.iter().enumerate() {
            if !o.is_visible(s) {
                continue;
            }
            let x = o.row(s);
            posts[k][old] = posts[k][old].without_observation(&x);
            for (w, logit) in logits.iter_mut().enumerate() {
                *logit += posts[k][w].log_predictive(&x)?;
            }
        }
        for l in logits.iter_mut() {
            *l /= temperature;
        }
        let new = sample_from_logits(&logits, false, rng)?;
        for (k, o) in observations.iter().enumerate() {
            if o.is_visible(s) {
                posts[k][new] = posts[k][new].with_observation(&o.row(s));
            }
        }
        shared[s] = new;
    }
    Ok(shared)
}

impl GameTrace {
    pub fn acceptance_rate(&self) -> Option<f64> {
        self.acceptance_rate_curve.last().copied().flatten()
    }

    /// `trace_<mode>_seed<seed>` (extension added by the caller).
    pub fn file_stem(&self) -> String {
        format!("trace_{}_seed{}", self.mode, self.seed)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "round",
            "speaker_id",
            "listener_id",
            "stimulus",
            "proposed_sign",
            "accepted",
            "acceptance_prob",
        ])?;
        for r in &self.records {
            w.write_record([
                r.round.to_string(),
                r.speaker_id.to_string(),
                r.listener_id.to_string(),
                r.stimulus.to_string(),
                r.proposed_sign.to_string(),
                u8::from(r.accepted).to_string(),
                r.acceptance_prob.to_string(),
            ])?;
        }
        w.flush().map_err(|e| CpcError::io("<trace csv>", e))?;
        Ok(())
    }

    pub fn read_csv_records<R: Read>(reader: R) -> Result<Vec<StepRecord>> {
        let mut r = csv::Reader::from_reader(reader);
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            out.push(StepRecord {
                round: parse_field(&rec, 0)?,
                speaker_id: parse_field(&rec, 1)?,
                listener_id: parse_field(&rec, 2)?,
                stimulus: parse_field(&rec, 3)?,
                proposed_sign: parse_field(&rec, 4)?,
                accepted: parse_field::<u8>(&rec, 5)? != 0,
                acceptance_prob: parse_field(&rec, 6)?,
            });
        }
        Ok(out)
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            mode: self.mode,
            seed: self.seed,
            n_steps: self.records.len(),
            final_assignments: self.final_assignments.clone(),
            acceptance_rate_curve: self.acceptance_rate_curve.clone(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`, returning both paths.
    pub fn write_files(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv_path = dir.join(format!("{}.csv", self.file_stem()));
        let json_path = dir.join(format!("{}.json", self.file_stem()));
        let f = std::fs::File::create(&csv_path).map_err(|e| CpcError::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let json = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(&json_path, json).map_err(|e| CpcError::io(&json_path, e))?;
        Ok((csv_path, json_path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mode: GameMode,
    pub seed: u64,
    pub n_steps: usize,
    pub final_assignments: Vec<SignAssignment>,
    pub acceptance_rate_curve: Vec<Option<f64>>,
}
