//! Entropic optimal transport.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CpcError, Result};
use crate::linalg::log_sum_exp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub plan: DMatrix<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
}

impl TransportPlan {
    /// Largest absolute deviation of the plan's row and column sums from
    /// the marginals.
    pub fn marginal_residual(&self) -> f64 {
        let rows = self.plan.row_iter().zip(&self.row_marginal).map(|(r, a)| (r.sum() - a).abs());
        let cols = self.plan.column_iter().zip(&self.col_marginal).map(|(c, b)| (c.sum() - b).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn transport_cost(&self, cost: &DMatrix<f64>) -> f64 {
        self.plan.component_mul(cost).sum()
    }

    /// Columns of row `i` ordered by mass, descending; ties by lowest index.
    pub fn ranked_columns(&self, i: usize) -> Vec<usize> {
        let row = self.plan.row(i);
        let mut cols: Vec<usize> = (0..self.plan.ncols()).collect();
        cols.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
        cols
    }

    /// Row-wise argmax (lowest index on ties).
    pub fn argmax_matching(&self) -> Vec<usize> {
        (0..self.plan.nrows()).map(|i| self.ranked_columns(i)[0]).collect()
    }
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub(crate) fn check_marginal(name: &str, m: &[f64], len: usize) -> Result<()> {
    if m.len() != len {
        return Err(CpcError::DimensionMismatch(format!("{name} has {} entries, expected {len}", m.len())));
    }
    if m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(CpcError::InvalidInput(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = m.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(CpcError::InvalidInput(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Entropic optimal transport, `min ⟨C, P⟩ − ε H(P)` over couplings of the two
/// marginals, by log-domain Sinkhorn iterations. Stops once the largest
/// marginal residual is at most `tol`.
pub fn sinkhorn(
    cost: &DMatrix<f64>,
    row_marginal: &[f64],
    col_marginal: &[f64],
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TransportPlan> {
    sinkhorn_warm(cost, row_marginal, col_marginal, epsilon, max_iter, tol, None).map(|s| s.plan)
}

/// Sinkhorn solution together with its scaled dual potentials
/// (`u = f/ε`, `v = g/ε`), which can warm-start a nearby problem.
#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub plan: TransportPlan,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
}

/// Plain Sinkhorn sweeps attempted before switching to Newton steps.
const SINKHORN_SWEEPS_BEFORE_NEWTON: usize = 100;

pub fn sinkhorn_warm(
    cost: &DMatrix<f64>,
    row_marginal: &[f64],
    col_marginal: &[f64],
    epsilon: f64,
    max_iter: usize,
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<SinkhornSolution> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Err(CpcError::InvalidInput("empty cost matrix".into()));
    }
    check_marginal("row_marginal", row_marginal, n)?;
    check_marginal("col_marginal", col_marginal, m)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CpcError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if !cost.iter().all(|c| c.is_finite()) {
        return Err(CpcError::InvalidInput("cost matrix must be finite".into()));
    }
    let mut state = DualState {
        log_a: row_marginal.iter().map(|a| a.ln()).collect(),
        log_b: col_marginal.iter().map(|b| b.ln()).collect(),
        // plan = exp(u_i + v_j + k_ij), k = −C/ε
        k: cost / -epsilon,
        u: vec![0.0; n],
        v: match warm {
            Some(v0) if v0.len() == m && v0.iter().all(|x| x.is_finite()) => v0.to_vec(),
            _ => vec![0.0; m],
        },
    };
    let newton_ok = row_marginal.iter().chain(col_marginal).all(|&x| x > 0.0);
    let mut residual = f64::INFINITY;
    let max_iter = max_iter.max(1);

    for it in 0..max_iter {
        if newton_ok && it >= SINKHORN_SWEEPS_BEFORE_NEWTON {
            // a failed Newton step leaves the potentials unchanged
            state.newton_step(row_marginal, col_marginal);
        }
        state.sweep();
        residual = state.row_residual(row_marginal);
        if residual <= tol {
            let plan = TransportPlan {
                plan: state.plan(),
                row_marginal: row_marginal.to_vec(),
                col_marginal: col_marginal.to_vec(),
            };
            if plan.marginal_residual() <= tol {
                let v = state.v.iter().map(|x| if x.is_finite() { *x } else { 0.0 }).collect();
                return Ok(SinkhornSolution {
                    plan,
                    u: state.u,
                    v,
                    iterations: it + 1,
                });
            }
        }
    }
    Err(CpcError::NonConvergence {
        iterations: max_iter,
        residual,
        tol,
    })
}

struct DualState {
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    k: DMatrix<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl DualState {
    fn log_row(&self, i: usize, v: &[f64]) -> f64 {
        log_sum_exp((0..self.k.ncols()).map(|j| v[j] + self.k[(i, j)]))
    }

    fn log_col(&self, j: usize, u: &[f64]) -> f64 {
        log_sum_exp((0..self.k.nrows()).map(|i| u[i] + self.k[(i, j)]))
    }

    /// One Sinkhorn iteration: fit rows, then columns (exactly).
    fn sweep(&mut self) {
        for i in 0..self.u.len() {
            self.u[i] = if self.log_a[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                self.log_a[i] - self.log_row(i, &self.v)
            };
        }
        for j in 0..self.v.len() {
            self.v[j] = if self.log_b[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                self.log_b[j] - self.log_col(j, &self.u)
            };
        }
    }

    fn row_residual(&self, a: &[f64]) -> f64 {
        (0..self.u.len())
            .map(|i| {
                if self.u[i] == f64::NEG_INFINITY {
                    return 0.0;
                }
                ((self.log_row(i, &self.v) + self.u[i]).exp() - a[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    fn plan_with(&self, u: &[f64], v: &[f64]) -> DMatrix<f64> {
        let (n, m) = self.k.shape();
        DMatrix::from_fn(n, m, |i, j| {
            if u[i] == f64::NEG_INFINITY || v[j] == f64::NEG_INFINITY {
                0.0
            } else {
                (u[i] + v[j] + self.k[(i, j)]).exp()
            }
        })
    }

    fn plan(&self) -> DMatrix<f64> {
        self.plan_with(&self.u, &self.v)
    }

    /// Concave dual ⟨a,u⟩ + ⟨b,v⟩ − Σ P_ij (all marginals positive).
    fn dual(&self, a: &[f64], b: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let lin: f64 = a.iter().zip(u).map(|(x, y)| x * y).sum::<f64>() + b.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        lin - self.plan_with(u, v).sum()
    }

    /// Damped Newton ascent step on the dual with Armijo backtracking. The
    /// last column potential is pinned to remove the (u + c, v − c) null
    /// direction. Returns false when no improving step was found.
    fn newton_step(&mut self, a: &[f64], b: &[f64]) -> bool {
        let (n, m) = self.k.shape();
        let p = self.plan();
        let rows = p.column_sum();
        let cols = p.row_sum();
        let dim = n + m - 1;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for i in 0..n {
            grad[i] = a[i] - rows[i];
            hess[(i, i)] = rows[i];
        }
        for j in 0..m - 1 {
            grad[n + j] = b[j] - cols[j];
            hess[(n + j, n + j)] = cols[j];
            for i in 0..n {
                hess[(i, n + j)] = p[(i, j)];
                hess[(n + j, i)] = p[(i, j)];
            }
        }
        let damping = 1e-13 * hess.diagonal().max().max(f64::MIN_POSITIVE);
        for d in 0..dim {
            hess[(d, d)] += damping;
        }
        let dir = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match hess.lu().solve(&grad) {
                Some(d) => d,
                None => return false,
            },
        };
        if !dir.iter().all(|x| x.is_finite()) {
            return false;
        }
        let slope = grad.dot(&dir);
        if !(slope > 0.0) {
            return false;
        }
        let base = self.dual(a, b, &self.u, &self.v);
        let mut step = 1.0;
        for _ in 0..40 {
            let u: Vec<f64> = (0..n).map(|i| self.u[i] + step * dir[i]).collect();
            let v: Vec<f64> = (0..m).map(|j| if j < m - 1 { self.v[j] + step * dir[n + j] } else { self.v[j] }).collect();
            let value = self.dual(a, b, &u, &v);
            if value.is_finite() && value >= base + 1e-4 * step * slope {
                self.u = u;
                self.v = v;
                return true;
            }
            step *= 0.5;
        }
        false
    }
}

