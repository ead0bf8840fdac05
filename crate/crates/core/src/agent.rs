//! Bayesian perceptual learner.
//!
//! Each agent keeps one Normal–Inverse-Wishart posterior per sign over its own
//! observation space. Marginalizing the Gaussian parameters gives a
//! multivariate Student-t posterior predictive, which is what the naming game
//! uses both to propose signs (speaker) and to judge proposals (listener).

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{CpcError, Result};
use crate::linalg::{chol_logdet, chol_quad_form, log_sum_exp, spd_cholesky};
use crate::rng::{rng_for, streams};
use crate::world::ObservationSet;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Prior over signs, p(w). Added to the log predictive before tempering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignPrior {
    #[default]
    Uniform,
    /// Unnormalized log weights, one per sign.
    LogWeights(Vec<f64>),
}

impl SignPrior {
    fn log_weight(&self, sign: usize) -> f64 {
        match self {
            SignPrior::Uniform => 0.0,
            SignPrior::LogWeights(w) => w[sign],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub prior_mean: DVector<f64>,
    /// κ₀, pseudo-count on the mean.
    pub prior_scale: f64,
    /// ν₀, must exceed obs_dim − 1.
    pub prior_dof: f64,
    /// Ψ₀, symmetric positive-definite.
    pub prior_scatter: DMatrix<f64>,
    pub n_signs: usize,
    #[serde(default)]
    pub sign_prior: SignPrior,
}

impl Hyperparams {
    /// Zero prior mean and scatter `scatter_scale · I`.
    pub fn isotropic(obs_dim: usize, n_signs: usize, prior_scale: f64, prior_dof: f64, scatter_scale: f64) -> Self {
        Hyperparams {
            prior_mean: DVector::zeros(obs_dim),
            prior_scale,
            prior_dof,
            prior_scatter: DMatrix::identity(obs_dim, obs_dim) * scatter_scale,
            n_signs,
            sign_prior: SignPrior::Uniform,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.obs_dim();
        if d == 0 {
            return Err(CpcError::InvalidConfig("prior_mean must be non-empty".into()));
        }
        if self.n_signs == 0 {
            return Err(CpcError::InvalidConfig("n_signs must be positive".into()));
        }
        if !(self.prior_scale > 0.0 && self.prior_scale.is_finite()) {
            return Err(CpcError::InvalidConfig(format!("prior_scale must be > 0, got {}", self.prior_scale)));
        }
        if !(self.prior_dof > d as f64 - 1.0 && self.prior_dof.is_finite()) {
            return Err(CpcError::InvalidConfig(format!(
                "prior_dof must exceed obs_dim - 1 = {}, got {}",
                d - 1,
                self.prior_dof
            )));
        }
        if !self.prior_mean.iter().all(|v| v.is_finite()) {
            return Err(CpcError::InvalidConfig("prior_mean must be finite".into()));
        }
        if self.prior_scatter.shape() != (d, d) {
            return Err(CpcError::DimensionMismatch(format!(
                "prior_scatter is {:?}, expected ({d}, {d})",
                self.prior_scatter.shape()
            )));
        }
        spd_cholesky(&self.prior_scatter, "prior_scatter")?;
        if let SignPrior::LogWeights(w) = &self.sign_prior {
            if w.len() != self.n_signs {
                return Err(CpcError::DimensionMismatch(format!(
                    "sign prior has {} weights for {} signs",
                    w.len(),
                    self.n_signs
                )));
            }
            if w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) || w.iter().all(|v| *v == f64::NEG_INFINITY) {
                return Err(CpcError::InvalidConfig("sign prior log weights are degenerate".into()));
            }
        }
        Ok(())
    }
}

/// Normal–Inverse-Wishart parameters (μ, κ, ν, Ψ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    pub mean: DVector<f64>,
    pub scale: f64,
    pub dof: f64,
    pub scatter: DMatrix<f64>,
}

impl NiwParams {
    pub fn prior(hyper: &Hyperparams) -> Self {
        NiwParams {
            mean: hyper.prior_mean.clone(),
            scale: hyper.prior_scale,
            dof: hyper.prior_dof,
            scatter: hyper.prior_scatter.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Closed-form conjugate update with a batch of observations.
    pub fn updated(&self, data: &[DVector<f64>]) -> NiwParams {
        if data.is_empty() {
            return self.clone();
        }
        let n = data.len() as f64;
        let d = self.dim();
        let xbar = data.iter().fold(DVector::zeros(d), |acc, x| acc + x) / n;
        let mut centered = DMatrix::zeros(d, d);
        for x in data {
            let r = x - &xbar;
            centered.ger(1.0, &r, &r, 1.0);
        }
        let scale = self.scale + n;
        let mean = (&self.mean * self.scale + &xbar * n) / scale;
        let shift = &xbar - &self.mean;
        let mut scatter = &self.scatter + centered;
        scatter.ger(self.scale * n / scale, &shift, &shift, 1.0);
        symmetrize(&mut scatter);
        NiwParams {
            mean,
            scale,
            dof: self.dof + n,
            scatter,
        }
    }

    /// Rank-one update with a single observation.
    pub fn with_observation(&self, x: &DVector<f64>) -> NiwParams {
        let scale = self.scale + 1.0;
        let r = x - &self.mean;
        let mut scatter = self.scatter.clone();
        scatter.ger(self.scale / scale, &r, &r, 1.0);
        NiwParams {
            mean: (&self.mean * self.scale + x) / scale,
            scale,
            dof: self.dof + 1.0,
            scatter,
        }
    }

    /// Inverse of [`NiwParams::with_observation`].
    pub fn without_observation(&self, x: &DVector<f64>) -> NiwParams {
        let scale = self.scale - 1.0;
        let mean = (&self.mean * self.scale - x) / scale;
        let r = x - &mean;
        let mut scatter = self.scatter.clone();
        scatter.ger(-scale / self.scale, &r, &r, 1.0);
        NiwParams {
            mean,
            scale,
            dof: self.dof - 1.0,
            scatter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(self.scale > 0.0) {
            return Err(CpcError::NotPositiveDefinite(format!("NIW scale {} is not positive", self.scale)));
        }
        if !(self.dof > d as f64 - 1.0) {
            return Err(CpcError::NotPositiveDefinite(format!("NIW dof {} <= obs_dim - 1", self.dof)));
        }
        spd_cholesky(&self.scatter, "NIW scatter").map(|_| ())
    }

    /// Multivariate Student-t posterior predictive.
    pub fn predictive(&self) -> Result<StudentT> {
        self.validate()?;
        let d = self.dim() as f64;
        let dof = self.dof - d + 1.0;
        let shape = &self.scatter * ((self.scale + 1.0) / (self.scale * dof));
        StudentT::new(self.mean.clone(), shape, dof)
    }

    pub fn log_predictive(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.predictive()?.log_density(x))
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Multivariate Student-t with location, shape matrix and degrees of freedom.
#[derive(Debug, Clone)]
pub struct StudentT {
    loc: DVector<f64>,
    dof: f64,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl StudentT {
    pub fn new(loc: DVector<f64>, shape: DMatrix<f64>, dof: f64) -> Result<Self> {
        if !(dof > 0.0) {
            return Err(CpcError::InvalidInput(format!("student-t dof must be > 0, got {dof}")));
        }
        let d = loc.len() as f64;
        let chol = spd_cholesky(&shape, "student-t shape")?;
        let log_norm = ln_gamma((dof + d) / 2.0)
            - ln_gamma(dof / 2.0)
            - 0.5 * d * (dof * PI).ln()
            - 0.5 * chol_logdet(&chol);
        Ok(StudentT {
            loc,
            dof,
            chol,
            log_norm,
        })
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = self.loc.len() as f64;
        let q = chol_quad_form(&self.chol, &(x - &self.loc));
        self.log_norm - 0.5 * (self.dof + d) * (q / self.dof).ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentOwner {
    SpeakerView,
    ListenerView,
    Shared,
}

/// Per-stimulus sign indices: one view of the shared language variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignAssignment {
    pub signs: Vec<usize>,
    pub owner: AssignmentOwner,
}

impl SignAssignment {
    pub fn new(signs: Vec<usize>, owner: AssignmentOwner) -> Self {
        SignAssignment { signs, owner }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

/// An agent's internal representation system: per-sign posteriors plus its
/// current belief about the sign of every stimulus.
#[derive(Debug, Clone)]
pub struct AgentState {
    agent_id: usize,
    hyper: Hyperparams,
    posteriors: Vec<NiwParams>,
    assignments: Vec<usize>,
    observations: ObservationSet,
    predictive: Vec<StudentT>,
}

impl PartialEq for AgentState {
    fn eq(&self, other: &Self) -> bool {
        self.agent_id == other.agent_id
            && self.hyper == other.hyper
            && self.posteriors == other.posteriors
            && self.assignments == other.assignments
            && self.observations == other.observations
    }
}

/// `temperature == 0` selects the argmax sign (lowest index on ties).
pub fn check_temperature(temperature: f64) -> Result<()> {
    if temperature >= 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(CpcError::InvalidInput(format!("temperature must be finite and >= 0, got {temperature}")))
    }
}

/// Draw an index with probability ∝ exp(logits), or the first argmax when
/// `argmax` is set.
pub fn sample_from_logits<R: Rng + ?Sized>(logits: &[f64], argmax: bool, rng: &mut R) -> Result<usize> {
    let norm = log_sum_exp(logits.iter().copied());
    if norm == f64::NEG_INFINITY || norm.is_nan() {
        return Err(CpcError::DegenerateDensity("every sign has zero predictive density".into()));
    }
    if argmax {
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        return Ok(best);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &l) in logits.iter().enumerate() {
        let p = (l - norm).exp();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_positive)
}

impl AgentState {
    /// Random initial assignments, then the conjugate update they imply.
    pub fn init(hyper: Hyperparams, observations: ObservationSet, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if observations.obs_dim() != hyper.obs_dim() {
            return Err(CpcError::DimensionMismatch(format!(
                "observations have dim {} but prior has dim {}",
                observations.obs_dim(),
                hyper.obs_dim()
            )));
        }
        if !observations.observations.iter().all(|v| v.is_finite()) {
            return Err(CpcError::InvalidInput("observations must be finite".into()));
        }
        let mut rng = rng_for(seed, streams::AGENT_INIT);
        let assignments: Vec<usize> = (0..observations.n_stimuli())
            .map(|_| rng.random_range(0..hyper.n_signs))
            .collect();
        let prior = NiwParams::prior(&hyper);
        let mut state = AgentState {
            agent_id: observations.agent_id,
            posteriors: vec![prior; hyper.n_signs],
            hyper,
            assignments,
            observations,
            predictive: Vec::new(),
        };
        state.refit()?;
        Ok(state)
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn n_signs(&self) -> usize {
        self.hyper.n_signs
    }

    pub fn n_stimuli(&self) -> usize {
        self.assignments.len()
    }

    pub fn posteriors(&self) -> &[NiwParams] {
        &self.posteriors
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.observations
    }

    pub fn assignment_view(&self, owner: AssignmentOwner) -> SignAssignment {
        SignAssignment::new(self.assignments.clone(), owner)
    }

    /// Set one stimulus's sign without refitting the posteriors.
    pub fn set_assignment(&mut self, stimulus: usize, sign: usize) -> Result<()> {
        self.check_stimulus(stimulus)?;
        self.check_sign(sign)?;
        self.assignments[stimulus] = sign;
        Ok(())
    }

    /// This agent's observation of `stimulus`, or `None` if masked out.
    pub fn observation(&self, stimulus: usize) -> Option<DVector<f64>> {
        self.observations
            .is_visible(stimulus)
            .then(|| self.observations.row(stimulus))
    }

    /// Signs with at least one stimulus assigned, ascending.
    pub fn used_signs(&self) -> Vec<usize> {
        let mut used = vec![false; self.n_signs()];
        for &s in &self.assignments {
            used[s] = true;
        }
        (0..self.n_signs()).filter(|&s| used[s]).collect()
    }

    fn check_sign(&self, sign: usize) -> Result<()> {
        if sign >= self.n_signs() {
            return Err(CpcError::InvalidInput(format!("sign {sign} out of range (n_signs = {})", self.n_signs())));
        }
        Ok(())
    }

    fn check_stimulus(&self, stimulus: usize) -> Result<()> {
        if stimulus >= self.n_stimuli() {
            return Err(CpcError::InvalidInput(format!(
                "stimulus {stimulus} out of range (n_stimuli = {})",
                self.n_stimuli()
            )));
        }
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        let prior = NiwParams::prior(&self.hyper);
        let mut buckets: Vec<Vec<DVector<f64>>> = vec![Vec::new(); self.n_signs()];
        for (i, &s) in self.assignments.iter().enumerate() {
            if self.observations.is_visible(i) {
                buckets[s].push(self.observations.row(i));
            }
        }
        self.posteriors = buckets.iter().map(|b| prior.updated(b)).collect();
        self.predictive = self
            .posteriors
            .iter()
            .map(NiwParams::predictive)
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// log p(obs | sign) under the sign's Student-t posterior predictive.
    pub fn posterior_predictive_logdensity(&self, obs: &DVector<f64>, sign: usize) -> Result<f64> {
        self.check_sign(sign)?;
        if obs.len() != self.hyper.obs_dim() {
            return Err(CpcError::DimensionMismatch(format!(
                "observation has dim {} but agent has dim {}",
                obs.len(),
                self.hyper.obs_dim()
            )));
        }
        Ok(self.predictive[sign].log_density(obs))
    }

    /// Log predictive of this agent's own observation of `stimulus`;
    /// 0 when the stimulus is masked out (a flat likelihood).
    pub fn stimulus_logdensity(&self, stimulus: usize, sign: usize) -> Result<f64> {
        self.check_stimulus(stimulus)?;
        match self.observation(stimulus) {
            Some(x) => self.posterior_predictive_logdensity(&x, sign),
            None => {
                self.check_sign(sign)?;
                Ok(0.0)
            }
        }
    }

    /// Unnormalized log posterior over signs, (log p(w) + log p(o|w)) / T.
    /// `obs = None` means no evidence. `temperature == 0` returns untempered
    /// values (for argmax use).
    pub fn sign_logits(&self, obs: Option<&DVector<f64>>, temperature: f64) -> Result<Vec<f64>> {
        check_temperature(temperature)?;
        let t = if temperature == 0.0 { 1.0 } else { temperature };
        (0..self.n_signs())
            .map(|s| {
                let ll = match obs {
                    Some(x) => self.posterior_predictive_logdensity(x, s)?,
                    None => 0.0,
                };
                Ok((self.hyper.sign_prior.log_weight(s) + ll) / t)
            })
            .collect()
    }

    /// Normalized posterior over signs for `stimulus` at temperature 1.
    pub fn sign_probabilities(&self, stimulus: usize) -> Result<Vec<f64>> {
        self.check_stimulus(stimulus)?;
        let logits = self.sign_logits(self.observation(stimulus).as_ref(), 1.0)?;
        let norm = log_sum_exp(logits.iter().copied());
        if norm == f64::NEG_INFINITY {
            return Err(CpcError::DegenerateDensity("every sign has zero predictive density".into()));
        }
        Ok(logits.iter().map(|l| (l - norm).exp()).collect())
    }

    /// Draw a sign for an arbitrary observation vector.
    pub fn sample_sign_for<R: Rng + ?Sized>(
        &self,
        obs: Option<&DVector<f64>>,
        temperature: f64,
        rng: &mut R,
    ) -> Result<usize> {
        let logits = self.sign_logits(obs, temperature)?;
        sample_from_logits(&logits, temperature == 0.0, rng)
    }

    /// Draw a sign for one of this agent's stimuli, with probability
    /// ∝ exp((log p(w) + log p(o|w)) / T).
    pub fn sample_sign_posterior<R: Rng + ?Sized>(&self, stimulus: usize, temperature: f64, rng: &mut R) -> Result<usize> {
        self.check_stimulus(stimulus)?;
        self.sample_sign_for(self.observation(stimulus).as_ref(), temperature, rng)
    }

    /// Refit every sign's posterior to exactly the observations assigned to it.
    pub fn gibbs_update_params(&self, observations: &ObservationSet, assignments: &SignAssignment) -> Result<AgentState> {
        if assignments.len() != observations.n_stimuli() {
            return Err(CpcError::DimensionMismatch(format!(
                "{} assignments for {} observations",
                assignments.len(),
                observations.n_stimuli()
            )));
        }
        if observations.obs_dim() != self.hyper.obs_dim() {
            return Err(CpcError::DimensionMismatch(format!(
                "observations have dim {} but agent has dim {}",
                observations.obs_dim(),
                self.hyper.obs_dim()
            )));
        }
        if let Some(bad) = assignments.signs.iter().find(|&&s| s >= self.n_signs()) {
            return Err(CpcError::InvalidInput(format!("sign {bad} out of range (n_signs = {})", self.n_signs())));
        }
        let mut next = AgentState {
            agent_id: self.agent_id,
            hyper: self.hyper.clone(),
            posteriors: Vec::new(),
            assignments: assignments.signs.clone(),
            observations: observations.clone(),
            predictive: Vec::new(),
        };
        next.refit()?;
        Ok(next)
    }

    /// Refit on the agent's own observations and current assignments.
    pub fn refresh(&self) -> Result<AgentState> {
        let a = self.assignment_view(AssignmentOwner::Shared);
        self.gibbs_update_params(&self.observations, &a)
    }

    /// Replace the posteriors directly (frozen-parameter experiments).
    pub fn with_posteriors(&self, posteriors: Vec<NiwParams>) -> Result<AgentState> {
        if posteriors.len() != self.n_signs() {
            return Err(CpcError::DimensionMismatch(format!(
                "{} posteriors for {} signs",
                posteriors.len(),
                self.n_signs()
            )));
        }
        let predictive = posteriors.iter().map(NiwParams::predictive).collect::<Result<_>>()?;
        Ok(AgentState {
            posteriors,
            predictive,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let cp = Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            agent_id: self.agent_id,
            hyper: self.hyper.clone(),
            posteriors: self.posteriors.clone(),
            assignments: self.assignments.clone(),
            observations: self.observations.clone(),
        };
        Ok(serde_json::to_string_pretty(&cp)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        if cp.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(CpcError::SchemaVersion {
                found: cp.schema_version,
                expected: CHECKPOINT_SCHEMA_VERSION,
            });
        }
        cp.hyper.validate()?;
        if cp.assignments.len() != cp.observations.n_stimuli() || cp.assignments.iter().any(|&s| s >= cp.hyper.n_signs) {
            return Err(CpcError::InvalidInput("checkpoint assignments are inconsistent".into()));
        }
        let state = AgentState {
            agent_id: cp.agent_id,
            posteriors: vec![NiwParams::prior(&cp.hyper); cp.hyper.n_signs],
            hyper: cp.hyper,
            assignments: cp.assignments,
            observations: cp.observations,
            predictive: Vec::new(),
        };
        state.with_posteriors(cp.posteriors)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    agent_id: usize,
    hyper: Hyperparams,
    posteriors: Vec<NiwParams>,
    assignments: Vec<usize>,
    observations: ObservationSet,
}

pub fn init_agent(hyper: Hyperparams, observations: ObservationSet, seed: u64) -> Result<AgentState> {
    AgentState::init(hyper, observations, seed)
}
