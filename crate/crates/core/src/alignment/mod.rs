//! Representational structure and alignment between systems.
//!
//! Supervised comparison correlates two RDMs under a known stimulus
//! correspondence (RSA). Unsupervised comparison infers the correspondence
//! from structure alone, by minimizing the entropic Gromov–Wasserstein
//! objective with iterated linearization and a log-domain Sinkhorn solver.

mod agreement;
mod gw;
mod ot;
mod rdm;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use agreement::{adjusted_rand_index, categorization_agreement, cohen_kappa, Agreement};
pub use gw::{
    default_epsilon, entropy, gw_align, gw_align_with, gw_cost, matching_accuracy, GwOptions, GwResult, GwRun,
    InitKind,
};
pub use ot::{sinkhorn, sinkhorn_warm, uniform, SinkhornSolution, TransportPlan};
pub use rdm::{compute_rdm, compute_rdm_labeled, rsa, Correlation, DistanceMetric, Rdm, SYMMETRY_TOL};

use crate::error::{CpcError, Result};
use crate::linalg::validate_permutation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// `None` when an RDM's upper triangle is constant.
    pub rsa_pearson: Option<f64>,
    pub rsa_spearman: Option<f64>,
    pub gw_distance: f64,
    pub matching_accuracy: f64,
    pub top_k_accuracy: BTreeMap<usize, f64>,
    pub epsilon: f64,
    pub n_initializations: usize,
    pub best_init_seed: u64,
}

impl AlignmentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOptions {
    pub gw: GwOptions,
    /// Match items by label instead of by position.
    pub supervised: bool,
    pub top_k: Vec<usize>,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            gw: GwOptions::default(),
            supervised: false,
            top_k: vec![1, 3, 5],
        }
    }
}

/// Item correspondence between two RDMs: by label when `supervised`,
/// otherwise by position.
pub fn correspondence(a: &Rdm, b: &Rdm, supervised: bool) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(CpcError::DimensionMismatch(format!("RDMs have {} and {} items", a.len(), b.len())));
    }
    if !supervised {
        return Ok((0..a.len()).collect());
    }
    let index: BTreeMap<&str, usize> = b.labels().iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    if index.len() != b.len() {
        return Err(CpcError::InvalidInput("labels of the second RDM are not unique".into()));
    }
    let perm: Vec<usize> = a
        .labels()
        .iter()
        .map(|l| {
            index
                .get(l.as_str())
                .copied()
                .ok_or_else(|| CpcError::InvalidInput(format!("label {l:?} missing from the second RDM")))
        })
        .collect::<Result<_>>()?;
    validate_permutation(&perm)?;
    Ok(perm)
}

/// Supervised (RSA) and unsupervised (GW) comparison of two RDMs.
pub fn align_rdms(a: &Rdm, b: &Rdm, opts: &AlignOptions) -> Result<AlignmentReport> {
    let perm = correspondence(a, b, opts.supervised)?;
    let b_matched = b.reordered(&perm)?;
    let optional = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(CpcError::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let rsa_pearson = optional(rsa(a, &b_matched, Correlation::Pearson))?;
    let rsa_spearman = optional(rsa(a, &b_matched, Correlation::Spearman))?;
    let gw = gw_align_with(a, b, &opts.gw)?;
    let plan = &gw.best.plan;
    let mut top_k = BTreeMap::new();
    for &k in &opts.top_k {
        if k >= 1 && k <= b.len() {
            top_k.insert(k, matching_accuracy(plan, &perm, k)?);
        }
    }
    Ok(AlignmentReport {
        rsa_pearson,
        rsa_spearman,
        gw_distance: gw.best.gw_distance,
        matching_accuracy: matching_accuracy(plan, &perm, 1)?,
        top_k_accuracy: top_k,
        epsilon: gw.epsilon,
        n_initializations: opts.gw.n_init,
        best_init_seed: gw.best.init_seed,
    })
}
