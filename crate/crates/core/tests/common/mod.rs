//! Brute-force reference implementations shared by the integration tests
//! and the acceptance harness. None of them call into the library's metric
//! or solver code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use cpc::agent::{AgentState, NiwParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{Continuous, StudentsT};

/// Fold observations in one at a time: κ' = κ + 1, μ' = (κμ + x)/κ',
/// Ψ' = Ψ + κ/κ' (x − μ)(x − μ)ᵀ, ν' = ν + 1.
pub fn sequential_niw(prior: &NiwParams, data: &[DVector<f64>]) -> NiwParams {
    let mut mean = prior.mean.clone();
    let mut kappa = prior.scale;
    let mut nu = prior.dof;
    let mut psi = prior.scatter.clone();
    for x in data {
        let r = x - &mean;
        let k1 = kappa + 1.0;
        psi += (&r * r.transpose()) * (kappa / k1);
        mean = (mean * kappa + x) / k1;
        kappa = k1;
        nu += 1.0;
    }
    NiwParams {
        mean,
        scale: kappa,
        dof: nu,
        scatter: psi,
    }
}

pub fn niw_max_diff(a: &NiwParams, b: &NiwParams) -> f64 {
    let scale = 1.0 + b.scatter.amax();
    [
        (&a.mean - &b.mean).amax(),
        (a.scale - b.scale).abs(),
        (a.dof - b.dof).abs(),
        (&a.scatter - &b.scatter).amax() / scale,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// `n` points in a 10-wide Gaussian cloud, redrawn until every pair is at
/// least 5 apart.
pub fn well_separated_points(seed: u64, n: usize, d: usize) -> DMatrix<f64> {
    let mut rng = cpc::rng::rng_for(seed, 0);
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let x = DVector::from_fn(d, |_, _| 10.0 * rng.sample::<f64, _>(rand_distr::StandardNormal));
        if rows.iter().all(|r| (r - &x).norm() >= 5.0) {
            rows.push(x);
        }
    }
    DMatrix::from_fn(n, d, |i, j| rows[i][j])
}

/// Double loop over row pairs.
pub fn naive_euclidean_rdm(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..points.ncols() {
                let d = points[(i, k)] - points[(j, k)];
                s += d * d;
            }
            out[(i, j)] = s.sqrt();
        }
    }
    out
}

pub fn naive_cosine_rdm(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (mut dot, mut ni, mut nj) = (0.0, 0.0, 0.0);
            for k in 0..points.ncols() {
                dot += points[(i, k)] * points[(j, k)];
                ni += points[(i, k)] * points[(i, k)];
                nj += points[(j, k)] * points[(j, k)];
            }
            out[(i, j)] = 1.0 - dot / (ni.sqrt() * nj.sqrt());
        }
    }
    out
}

pub fn upper(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Σ(x−x̄)(y−ȳ) / √(Σ(x−x̄)² Σ(y−ȳ)²).
pub fn direct_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Rank = 1 + #smaller + (#equal − 1)/2.
pub fn direct_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let eq = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

pub fn direct_spearman(x: &[f64], y: &[f64]) -> f64 {
    direct_pearson(&direct_ranks(x), &direct_ranks(y))
}

/// ARI from explicit pair counts: (a − E) / (max − E) over all unordered
/// pairs, with a = pairs together in both.
pub fn pair_counting_ari(x: &[usize], y: &[usize]) -> f64 {
    let n = x.len();
    let (mut both, mut in_x, mut in_y, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sx = x[i] == x[j];
            let sy = y[i] == y[j];
            pairs += 1.0;
            if sx {
                in_x += 1.0;
            }
            if sy {
                in_y += 1.0;
            }
            if sx && sy {
                both += 1.0;
            }
        }
    }
    let expected = in_x * in_y / pairs;
    let max = 0.5 * (in_x + in_y);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// Random feasible coupling: positive random matrix projected onto the
/// marginal constraints by iterative proportional fitting.
pub fn random_coupling<R: Rng>(rng: &mut R, p: &[f64], q: &[f64]) -> DMatrix<f64> {
    let (n, m) = (p.len(), q.len());
    let mut t = DMatrix::from_fn(n, m, |_, _| -(rng.random::<f64>().max(1e-300)).ln().powi(3));
    for _ in 0..500 {
        for i in 0..n {
            let s: f64 = t.row(i).sum();
            t.row_mut(i).scale_mut(p[i] / s);
        }
        for j in 0..m {
            let s: f64 = t.column(j).sum();
            t.column_mut(j).scale_mut(q[j] / s);
        }
    }
    t
}

pub fn entropic_objective(cost: &DMatrix<f64>, plan: &DMatrix<f64>, eps: f64) -> f64 {
    let mut lin = 0.0;
    let mut ent = 0.0;
    for (c, t) in cost.iter().zip(plan.iter()) {
        lin += c * t;
        if *t > 0.0 {
            ent -= t * (t.ln() - 1.0);
        }
    }
    lin - eps * ent
}

pub fn marginal_residual(plan: &DMatrix<f64>, p: &[f64], q: &[f64]) -> f64 {
    let r = (0..plan.nrows()).map(|i| (plan.row(i).sum() - p[i]).abs());
    let c = (0..plan.ncols()).map(|j| (plan.column(j).sum() - q[j]).abs());
    r.chain(c).fold(0.0, f64::max)
}

/// 1-D NIW posterior predictive: Student-t with ν dof, location μ and
/// scale² = Ψ(κ+1)/(κν).
pub fn student_t_density_1d(post: &NiwParams, x: f64) -> f64 {
    let nu = post.dof;
    let scale = (post.scatter[(0, 0)] * (post.scale + 1.0) / (post.scale * nu)).sqrt();
    StudentsT::new(post.mean[0], scale, nu).unwrap().pdf(x)
}

/// Exact stationary law of the frozen-parameter listener chain on a 1-D
/// world with uniform sign prior: for each stimulus independently,
/// π(w) ∝ p_S(o_S | w) p_L(o_L | w). Returns the product over stimuli for
/// every assignment vector.
pub fn enumerate_listener_target(speaker: &AgentState, listener: &AgentState) -> BTreeMap<Vec<usize>, f64> {
    let n = listener.n_stimuli();
    let k = listener.n_signs();
    let per_stimulus: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let os = speaker.observations().row(s)[0];
            let ol = listener.observations().row(s)[0];
            let w: Vec<f64> = (0..k)
                .map(|j| {
                    student_t_density_1d(&speaker.posteriors()[j], os) * student_t_density_1d(&listener.posteriors()[j], ol)
                })
                .collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        })
        .collect();
    let mut out = BTreeMap::new();
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut state = Vec::with_capacity(n);
        let mut p = 1.0;
        for probs in &per_stimulus {
            let j = c % k;
            c /= k;
            state.push(j);
            p *= probs[j];
        }
        out.insert(state, p);
    }
    out
}

pub fn total_variation(counts: &BTreeMap<Vec<usize>, usize>, target: &BTreeMap<Vec<usize>, f64>) -> f64 {
    let n: usize = counts.values().sum();
    let mut tv = 0.0;
    for (state, p) in target {
        let emp = *counts.get(state).unwrap_or(&0) as f64 / n as f64;
        tv += (emp - p).abs();
    }
    for (state, c) in counts {
        if !target.contains_key(state) {
            tv += *c as f64 / n as f64;
        }
    }
    0.5 * tv
}
