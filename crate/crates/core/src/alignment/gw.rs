//! Entropic Gromov–Wasserstein by iterated linearization.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ot::{check_marginal, sinkhorn, sinkhorn_warm, uniform, TransportPlan};
use super::rdm::Rdm;
use crate::error::{CpcError, Result};
use crate::linalg::validate_permutation;
use crate::rng::{mix_seed, rng_for, streams};

/// −Σ P log P (with 0 log 0 = 0).
pub fn entropy(plan: &DMatrix<f64>) -> f64 {
    -plan.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Σ_{i,j,k,l} (a_ij − b_kl)² T_ik T_jl, evaluated with the plan's actual
/// marginals so it is exact for any nonnegative T.
pub fn gw_cost(a: &DMatrix<f64>, b: &DMatrix<f64>, plan: &DMatrix<f64>) -> f64 {
    let r: nalgebra::DVector<f64> = plan.column_sum();
    let c: nalgebra::DVector<f64> = plan.row_sum().transpose();
    let a2 = a.component_mul(a);
    let b2 = b.component_mul(b);
    let term_a = (r.transpose() * &a2 * &r)[(0, 0)];
    let term_b = (c.transpose() * &b2 * &c)[(0, 0)];
    let cross = (a * plan * b).component_mul(plan).sum();
    (term_a + term_b - 2.0 * cross).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    IdentityBiased,
    AntiIdentityBiased,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwOptions {
    /// `None` selects [`default_epsilon`].
    pub epsilon: Option<f64>,
    pub n_init: usize,
    pub seed: u64,
    pub max_outer: usize,
    /// Relative change of the regularized objective below which the outer
    /// loop stops.
    pub outer_tol: f64,
    pub sinkhorn_max_iter: usize,
    pub sinkhorn_tol: f64,
    /// `None` = uniform marginals.
    pub marginals: Option<(Vec<f64>, Vec<f64>)>,
    /// ε-continuation warm-up: each restart first descends at
    /// `anneal_start × mean(a) × mean(b)` (the scale of the GW cost) and halves
    /// ε stage by stage down to the target. 0 disables the warm-up.
    pub anneal_start: f64,
    /// Outer iterations per warm-up stage.
    pub anneal_stage_iters: usize,
}

impl Default for GwOptions {
    fn default() -> Self {
        GwOptions {
            epsilon: None,
            n_init: 10,
            seed: 0,
            max_outer: 200,
            outer_tol: 1e-10,
            sinkhorn_max_iter: 20_000,
            sinkhorn_tol: 1e-9,
            marginals: None,
            anneal_start: 0.5,
            anneal_stage_iters: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwRun {
    pub init: InitKind,
    pub init_seed: u64,
    pub plan: TransportPlan,
    /// Regularized objective after each accepted outer iteration; entry 0 is
    /// the initial coupling.
    pub objective_history: Vec<f64>,
    pub gw_distance: f64,
}

impl GwRun {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history starts with the initial objective")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwResult {
    pub best: GwRun,
    pub runs: Vec<GwRun>,
    pub epsilon: f64,
}

/// Scale-adaptive regularization: 0.02 × the mean of all entries of both
/// RDMs.
pub fn default_epsilon(a: &Rdm, b: &Rdm) -> f64 {
    let total = a.matrix().sum() + b.matrix().sum();
    let count = (a.len() * a.len() + b.len() * b.len()) as f64;
    let eps = 0.02 * total / count;
    if eps > 0.0 {
        eps
    } else {
        1e-3
    }
}

fn position_biased_init(n: usize, m: usize, p: &[f64], q: &[f64], reverse: bool, opts: &GwOptions) -> Result<TransportPlan> {
    let pos = |i: usize, len: usize| if len > 1 { i as f64 / (len - 1) as f64 } else { 0.0 };
    let cost = DMatrix::from_fn(n, m, |i, j| {
        let y = if reverse { 1.0 - pos(j, m) } else { pos(j, m) };
        (pos(i, n) - y).powi(2)
    });
    let scale = 1.0 / (n.max(m) as f64).powi(2);
    sinkhorn(&cost, p, q, scale.max(1e-4), opts.sinkhorn_max_iter, opts.sinkhorn_tol)
}

fn random_init(n: usize, m: usize, p: &[f64], q: &[f64], seed: u64, opts: &GwOptions) -> Result<TransportPlan> {
    let mut rng = rng_for(seed, streams::GW_INIT);
    // kernel = uniform(0,1) weights, Sinkhorn-projected onto the couplings
    let cost = DMatrix::from_fn(n, m, |_, _| -(rng.random::<f64>().max(1e-12)).ln());
    sinkhorn(&cost, p, q, 1.0, opts.sinkhorn_max_iter, opts.sinkhorn_tol)
}

/// Σ_ij A²_ij p_i p_j row term plus Σ_kl B²_kl q_k q_l column term of the
/// linearized cost.
fn constant_cost(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &[f64], q: &[f64]) -> DMatrix<f64> {
    let pv = nalgebra::DVector::from_column_slice(p);
    let qv = nalgebra::DVector::from_column_slice(q);
    let ra = a.component_mul(a) * pv;
    let rb = b.component_mul(b) * qv;
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, k| ra[i] + rb[k])
}

fn regularized(a: &DMatrix<f64>, b: &DMatrix<f64>, t: &DMatrix<f64>, eps: f64) -> f64 {
    gw_cost(a, b, t) - eps * entropy(t)
}

/// Golden-section search for the step along `t → target` minimizing the
/// regularized objective. Returns (step, value); step 0 if nothing improves.
fn line_search(a: &DMatrix<f64>, b: &DMatrix<f64>, t: &DMatrix<f64>, target: &DMatrix<f64>, eps: f64, f0: f64) -> (f64, f64) {
    let dir = target - t;
    let f = |alpha: f64| regularized(a, b, &(t + &dir * alpha), eps);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = (0.0, f0);
    for _ in 0..60 {
        if f1 < best.1 {
            best = (x1, f1);
        }
        if f2 < best.1 {
            best = (x2, f2);
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    best
}

/// ε-continuation from the cost scale down to (but excluding) `eps`.
fn warm_up(a: &Rdm, b: &Rdm, p: &[f64], q: &[f64], eps: f64, init: TransportPlan, opts: &GwOptions) -> Result<TransportPlan> {
    let mut plan = init;
    let mut stage_eps = opts.anneal_start * a.matrix().mean() * b.matrix().mean();
    while stage_eps > eps * (1.0 + 1e-12) {
        plan = gw_descend(a, b, p, q, stage_eps, plan, opts.anneal_stage_iters, opts)?.0;
        stage_eps /= 2.0;
    }
    Ok(plan)
}

fn gw_descend(
    a: &Rdm,
    b: &Rdm,
    p: &[f64],
    q: &[f64],
    eps: f64,
    init: TransportPlan,
    max_outer: usize,
    opts: &GwOptions,
) -> Result<(TransportPlan, Vec<f64>)> {
    let (am, bm) = (a.matrix(), b.matrix());
    let const_c = constant_cost(am, bm, p, q);
    let mut t = init.plan;
    let mut f_cur = regularized(am, bm, &t, eps);
    let mut history = vec![f_cur];
    let mut warm: Option<Vec<f64>> = None;
    let scale = am.mean().powi(2) + bm.mean().powi(2);
    for _ in 0..max_outer {
        let linear = &const_c - (am * &t * bm) * 2.0;
        let sol = sinkhorn_warm(&linear, p, q, eps, opts.sinkhorn_max_iter, opts.sinkhorn_tol, warm.as_deref())?;
        warm = Some(sol.v);
        let candidate = sol.plan.plan;
        let f_full = regularized(am, bm, &candidate, eps);
        let (next, f_next) = if f_full <= f_cur {
            (candidate, f_full)
        } else {
            let (alpha, f_alpha) = line_search(am, bm, &t, &candidate, eps, f_cur);
            if alpha == 0.0 {
                break;
            }
            (&t + (&candidate - &t) * alpha, f_alpha)
        };
        let improvement = f_cur - f_next;
        t = next;
        f_cur = f_next;
        history.push(f_cur);
        if improvement <= opts.outer_tol * scale.max(f_cur.abs()) {
            break;
        }
    }
    Ok((
        TransportPlan {
            plan: t,
            row_marginal: p.to_vec(),
            col_marginal: q.to_vec(),
        },
        history,
    ))
}

/// Entropic Gromov–Wasserstein alignment with multiple initializations.
///
/// Initializations, in order: identity-biased, anti-identity-biased, then
/// seeded random couplings, truncated to `n_init`. Restarts run in parallel;
/// the reported run has the lowest final regularized objective, ties going
/// to the lowest init seed.
pub fn gw_align_with(a: &Rdm, b: &Rdm, opts: &GwOptions) -> Result<GwResult> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(CpcError::InvalidInput("cannot align an empty RDM".into()));
    }
    if opts.n_init == 0 {
        return Err(CpcError::InvalidConfig("n_init must be at least 1".into()));
    }
    let (p, q) = match &opts.marginals {
        Some((p, q)) => {
            check_marginal("row_marginal", p, n)?;
            check_marginal("col_marginal", q, m)?;
            (p.clone(), q.clone())
        }
        None => (uniform(n), uniform(m)),
    };
    let eps = opts.epsilon.unwrap_or_else(|| default_epsilon(a, b));
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CpcError::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }

    let starts: Vec<(InitKind, u64)> = (0..opts.n_init)
        .map(|i| {
            let kind = match i {
                0 => InitKind::IdentityBiased,
                1 => InitKind::AntiIdentityBiased,
                _ => InitKind::Random,
            };
            (kind, mix_seed(opts.seed, i as u64))
        })
        .collect();

    let runs: Vec<GwRun> = starts
        .par_iter()
        .map(|&(kind, init_seed)| {
            let init = match kind {
                InitKind::IdentityBiased => position_biased_init(n, m, &p, &q, false, opts)?,
                InitKind::AntiIdentityBiased => position_biased_init(n, m, &p, &q, true, opts)?,
                InitKind::Random => random_init(n, m, &p, &q, init_seed, opts)?,
            };
            let init = warm_up(a, b, &p, &q, eps, init, opts)?;
            let (plan, history) = gw_descend(a, b, &p, &q, eps, init, opts.max_outer, opts)?;
            let gw_distance = gw_cost(a.matrix(), b.matrix(), &plan.plan);
            Ok(GwRun {
                init: kind,
                init_seed,
                plan,
                objective_history: history,
                gw_distance,
            })
        })
        .collect::<Result<_>>()?;

    let best = runs
        .iter()
        .min_by(|x, y| x.objective().total_cmp(&y.objective()).then(x.init_seed.cmp(&y.init_seed)))
        .expect("n_init >= 1")
        .clone();
    Ok(GwResult { best, runs, epsilon: eps })
}

/// Returns the best plan and its unregularized GW cost.
pub fn gw_align(a: &Rdm, b: &Rdm, epsilon: Option<f64>, n_init: usize, seed: u64) -> Result<(TransportPlan, f64)> {
    let opts = GwOptions {
        epsilon,
        n_init,
        seed,
        ..GwOptions::default()
    };
    let res = gw_align_with(a, b, &opts)?;
    Ok((res.best.plan, res.best.gw_distance))
}

/// Fraction of rows whose `k` heaviest plan entries (ties by lowest column)
/// include the true counterpart `true_correspondence[row]`.
pub fn matching_accuracy(plan: &TransportPlan, true_correspondence: &[usize], k: usize) -> Result<f64> {
    let (n, m) = plan.plan.shape();
    if n != m {
        return Err(CpcError::DimensionMismatch(format!("matching accuracy needs a square plan, got {n}x{m}")));
    }
    if true_correspondence.len() != n {
        return Err(CpcError::DimensionMismatch(format!(
            "correspondence has {} entries for {n} rows",
            true_correspondence.len()
        )));
    }
    validate_permutation(true_correspondence)?;
    if k == 0 || k > m {
        return Err(CpcError::InvalidInput(format!("k = {k} must be in 1..={m}")));
    }
    let hits = (0..n)
        .filter(|&i| plan.ranked_columns(i)[..k].contains(&true_correspondence[i]))
        .count();
    Ok(hits as f64 / n as f64)
}

