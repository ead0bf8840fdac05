//! Agreement between two categorizations of the same stimuli.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::SignAssignment;
use crate::error::{CpcError, Result};

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings. Degenerate cases where the
/// expected and maximum index coincide (e.g. both labelings a single
/// cluster) count as perfect agreement.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CpcError::DimensionMismatch(format!("labelings have lengths {} and {}", a.len(), b.len())));
    }
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(a.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Cohen's kappa on raw labels. Returns 1 when chance agreement is already
/// 1 (both labelings constant and equal).
pub fn cohen_kappa(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CpcError::DimensionMismatch(format!("labelings have lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(CpcError::InvalidInput("kappa of empty labelings".into()));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut fa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut fb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *fa.entry(x).or_default() += 1.0 / n;
        *fb.entry(y).or_default() += 1.0 / n;
    }
    let expected: f64 = fa.iter().map(|(l, pa)| pa * fb.get(l).copied().unwrap_or(0.0)).sum();
    if (1.0 - expected).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub ari: f64,
    pub kappa: f64,
}

pub fn categorization_agreement(a: &SignAssignment, b: &SignAssignment) -> Result<Agreement> {
    Ok(Agreement {
        ari: adjusted_rand_index(&a.signs, &b.signs)?,
        kappa: cohen_kappa(&a.signs, &b.signs)?,
    })
}

