//! Synthetic shared environments and per-agent observation channels.
//!
//! A world is a set of Gaussian category prototypes and a list of stimuli,
//! each stimulus being the (noise-free) prototype of its category. Agents
//! perceive stimuli through an isometric [`ModalityTransform`] plus private
//! Gaussian noise, so two agents can share structure while disagreeing on
//! coordinates.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CpcError, Result};
use crate::linalg::{orthogonality_defect, permutation_matrix, random_orthogonal};
use crate::rng::{mix_seed, rng_for, streams};

pub const ORTHOGONALITY_TOL: f64 = 1e-9;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_categories: usize,
    pub n_stimuli: usize,
    pub obs_dim: usize,
    pub prototype_spread: f64,
    pub obs_noise: f64,
    pub n_agents: usize,
    #[serde(default)]
    pub seed: u64,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CpcError::InvalidConfig(m));
        if self.n_categories == 0 {
            return bad("n_categories must be positive".into());
        }
        if self.obs_dim == 0 {
            return bad("obs_dim must be positive".into());
        }
        if self.n_agents == 0 {
            return bad("n_agents must be positive".into());
        }
        if self.n_stimuli < self.n_categories {
            return bad(format!(
                "n_stimuli ({}) must be at least n_categories ({})",
                self.n_stimuli, self.n_categories
            ));
        }
        if !(self.prototype_spread >= 0.0 && self.prototype_spread.is_finite()) {
            return bad(format!("prototype_spread must be a finite value >= 0, got {}", self.prototype_spread));
        }
        if !(self.obs_noise >= 0.0 && self.obs_noise.is_finite()) {
            return bad(format!("obs_noise must be a finite value >= 0, got {}", self.obs_noise));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub prototypes: DMatrix<f64>,
    pub true_labels: Vec<usize>,
    pub stimuli: DMatrix<f64>,
}

impl World {
    pub fn n_stimuli(&self) -> usize {
        self.stimuli.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.stimuli.ncols()
    }

    pub fn n_categories(&self) -> usize {
        self.prototypes.nrows()
    }
}

pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = rng_for(config.seed, streams::WORLD);
    let normal = Normal::new(0.0, config.prototype_spread)
        .map_err(|e| CpcError::InvalidConfig(e.to_string()))?;
    // row-major draw order so results do not depend on nalgebra's storage
    let mut prototypes = DMatrix::zeros(config.n_categories, config.obs_dim);
    for c in 0..config.n_categories {
        for d in 0..config.obs_dim {
            prototypes[(c, d)] = normal.sample(&mut rng);
        }
    }
    let true_labels: Vec<usize> = (0..config.n_stimuli).map(|i| i % config.n_categories).collect();
    let stimuli = DMatrix::from_fn(config.n_stimuli, config.obs_dim, |i, d| {
        prototypes[(true_labels[i], d)]
    });
    Ok(World {
        prototypes,
        true_labels,
        stimuli,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    OrthogonalRotation,
    CoordinatePermutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityTransform {
    pub kind: TransformKind,
    pub matrix: DMatrix<f64>,
}

impl ModalityTransform {
    pub fn identity(dim: usize) -> Self {
        ModalityTransform {
            kind: TransformKind::Identity,
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        ModalityTransform {
            kind: TransformKind::OrthogonalRotation,
            matrix: random_orthogonal(dim, rng),
        }
    }

    /// Output coordinate `i` reads input coordinate `perm[i]`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        Ok(ModalityTransform {
            kind: TransformKind::CoordinatePermutation,
            matrix: permutation_matrix(perm)?,
        })
    }

    pub fn random_permutation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..dim).collect();
        perm.shuffle(rng);
        Self::permutation(&perm).expect("shuffled range is a permutation")
    }

    /// Seeded transform of the given kind (the seed is ignored for identity).
    pub fn of_kind(kind: TransformKind, dim: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, streams::TRANSFORM);
        match kind {
            TransformKind::Identity => Self::identity(dim),
            TransformKind::OrthogonalRotation => Self::random_rotation(dim, &mut rng),
            TransformKind::CoordinatePermutation => Self::random_permutation(dim, &mut rng),
        }
    }

    pub fn from_matrix(kind: TransformKind, matrix: DMatrix<f64>) -> Result<Self> {
        let t = ModalityTransform { kind, matrix };
        t.validate()?;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let defect = orthogonality_defect(&self.matrix);
        if defect > ORTHOGONALITY_TOL {
            return Err(CpcError::InvalidInput(format!(
                "transform is not orthogonal (defect {defect:e})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub agent_id: usize,
    pub observations: DMatrix<f64>,
    /// Which stimuli this agent perceives. All true unless a mask is applied.
    pub visible: Vec<bool>,
}

impl ObservationSet {
    pub fn new(agent_id: usize, observations: DMatrix<f64>) -> Result<Self> {
        if !observations.iter().all(|v| v.is_finite()) {
            return Err(CpcError::InvalidInput("observations must be finite".into()));
        }
        let n = observations.nrows();
        Ok(ObservationSet {
            agent_id,
            observations,
            visible: vec![true; n],
        })
    }

    pub fn n_stimuli(&self) -> usize {
        self.observations.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.ncols()
    }

    pub fn row(&self, stimulus: usize) -> nalgebra::DVector<f64> {
        self.observations.row(stimulus).transpose()
    }

    pub fn is_visible(&self, stimulus: usize) -> bool {
        self.visible[stimulus]
    }

    pub fn with_mask(mut self, visible: Vec<bool>) -> Result<Self> {
        if visible.len() != self.n_stimuli() {
            return Err(CpcError::DimensionMismatch(format!(
                "mask has {} entries for {} stimuli",
                visible.len(),
                self.n_stimuli()
            )));
        }
        self.visible = visible;
        Ok(self)
    }

    /// Keep each stimulus visible independently with probability `fraction`.
    pub fn with_random_mask(self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(CpcError::InvalidConfig(format!("visible fraction {fraction} outside [0,1]")));
        }
        if fraction >= 1.0 {
            return Ok(self);
        }
        let mut rng = rng_for(mix_seed(seed, self.agent_id as u64), streams::OBSERVATION + 100);
        let mask = (0..self.n_stimuli()).map(|_| rng.random::<f64>() < fraction).collect();
        self.with_mask(mask)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["stimulus".to_string(), "visible".to_string()];
        header.extend((0..self.obs_dim()).map(|d| format!("x{d}")));
        w.write_record(&header)?;
        for i in 0..self.n_stimuli() {
            let mut row = vec![i.to_string(), u8::from(self.visible[i]).to_string()];
            row.extend((0..self.obs_dim()).map(|d| self.observations[(i, d)].to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| CpcError::io("<observation csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(agent_id: usize, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let dim = r.headers()?.len().checked_sub(2).filter(|d| *d > 0).ok_or_else(|| {
            CpcError::InvalidInput("observation csv needs stimulus, visible and >= 1 coordinate".into())
        })?;
        let mut data = Vec::new();
        let mut visible = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            visible.push(parse_field::<u8>(&rec, 1)? != 0);
            for d in 0..dim {
                data.push(parse_field::<f64>(&rec, 2 + d)?);
            }
        }
        let n = visible.len();
        ObservationSet::new(agent_id, DMatrix::from_row_slice(n, dim, &data))?.with_mask(visible)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| CpcError::InvalidInput(format!("missing column {idx}")))?;
    raw.trim()
        .parse()
        .map_err(|_| CpcError::InvalidInput(format!("cannot parse {raw:?} in column {idx}")))
}

/// Perceive the world through `transform` with isotropic Gaussian noise.
/// Noise for a given (seed, agent_id) is independent of every other agent.
pub fn observe(
    world: &World,
    agent_id: usize,
    transform: &ModalityTransform,
    noise_std: f64,
    seed: u64,
) -> Result<ObservationSet> {
    if transform.dim() != world.obs_dim() || !transform.matrix.is_square() {
        return Err(CpcError::DimensionMismatch(format!(
            "transform is {}x{} but world obs_dim is {}",
            transform.matrix.nrows(),
            transform.matrix.ncols(),
            world.obs_dim()
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(CpcError::InvalidInput(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let mut observations = &world.stimuli * transform.matrix.transpose();
    if noise_std > 0.0 {
        let mut rng = rng_for(mix_seed(seed, agent_id as u64), streams::OBSERVATION);
        let normal = Normal::new(0.0, noise_std).expect("validated std");
        for i in 0..observations.nrows() {
            for d in 0..observations.ncols() {
                observations[(i, d)] += normal.sample(&mut rng);
            }
        }
    }
    ObservationSet::new(agent_id, observations)
}

/// Stimuli with their labels, one row per stimulus.
pub fn write_world_csv<W: Write>(world: &World, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["stimulus".to_string(), "label".to_string()];
    header.extend((0..world.obs_dim()).map(|d| format!("x{d}")));
    w.write_record(&header)?;
    for i in 0..world.n_stimuli() {
        let mut row = vec![i.to_string(), world.true_labels[i].to_string()];
        row.extend((0..world.obs_dim()).map(|d| world.stimuli[(i, d)].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CpcError::io("<world csv>", e))?;
    Ok(())
}

/// Inverse of [`write_world_csv`]. Prototypes are recovered from the first
/// stimulus of each category, which is exact since stimuli are noise-free.
pub fn read_world_csv<R: Read>(reader: R) -> Result<World> {
    let mut r = csv::Reader::from_reader(reader);
    let dim = r.headers()?.len().checked_sub(2).filter(|d| *d > 0).ok_or_else(|| {
        CpcError::InvalidInput("world csv needs stimulus, label and >= 1 coordinate".into())
    })?;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        labels.push(parse_field::<usize>(&rec, 1)?);
        for d in 0..dim {
            data.push(parse_field::<f64>(&rec, 2 + d)?);
        }
    }
    let n = labels.len();
    let stimuli = DMatrix::from_row_slice(n, dim, &data);
    let n_categories = labels.iter().max().map_or(0, |m| m + 1);
    let mut prototypes = DMatrix::zeros(n_categories, dim);
    let mut seen = vec![false; n_categories];
    for (i, &l) in labels.iter().enumerate() {
        if !seen[l] {
            seen[l] = true;
            prototypes.row_mut(l).copy_from(&stimuli.row(i));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(CpcError::InvalidInput("world csv leaves a category without stimuli".into()));
    }
    Ok(World {
        prototypes,
        true_labels: labels,
        stimuli,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentChannel {
    pub agent_id: usize,
    pub transform: TransformKind,
    pub noise_std: f64,
    pub seed: u64,
}

/// JSON record describing how a world and its observation sets were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub world: WorldConfig,
    pub channels: Vec<AgentChannel>,
}

impl RunManifest {
    pub fn new(world: WorldConfig, channels: Vec<AgentChannel>) -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            world,
            channels,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(CpcError::SchemaVersion {
                found: m.schema_version,
                expected: MANIFEST_SCHEMA_VERSION,
            });
        }
        Ok(m)
    }
}
