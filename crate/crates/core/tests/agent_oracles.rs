//! Independent oracles for the NIW agent: quadrature over (μ, σ²) for the
//! predictive density and a one-at-a-time fold for the conjugate update.

mod common;

use common::sequential_niw as sequential_oracle;
use cpc::agent::{init_agent, AssignmentOwner, Hyperparams, NiwParams, SignAssignment};
use cpc::rng::rng_for;
use cpc::world::ObservationSet;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// p(x) = ∫∫ N(x | μ, σ²) N(μ | m, σ²/κ) InvGamma(σ² | ν/2, ψ/2) dμ dσ²,
/// integrated numerically with σ² = exp(t).
fn niw_predictive_quadrature(x: f64, m: f64, kappa: f64, nu: f64, psi: f64) -> f64 {
    let a = nu / 2.0;
    let b = psi / 2.0;
    let log_ig_norm = a * b.ln() - ln_gamma(a);
    let outer = |t: f64| {
        let var = t.exp();
        let sd = var.sqrt();
        let prior_sd = (var / kappa).sqrt();
        let lo = m.min(x) - 12.0 * sd.max(prior_sd);
        let hi = m.max(x) + 12.0 * sd.max(prior_sd);
        let inner = simpson(
            |mu| {
                let l1 = -0.5 * ((x - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
                let l2 = -0.5 * ((mu - m) / prior_sd).powi(2) - prior_sd.ln()
                    - 0.5 * (2.0 * std::f64::consts::PI).ln();
                (l1 + l2).exp()
            },
            lo,
            hi,
            600,
        );
        let log_ig = log_ig_norm - (a + 1.0) * var.ln() - b / var;
        inner * (log_ig + t).exp()
    };
    simpson(outer, -25.0, 25.0, 6000)
}

fn agent_1d(n_signs: usize, prior: (f64, f64, f64, f64), data: &[f64]) -> cpc::agent::AgentState {
    let (m, kappa, nu, psi) = prior;
    let h = Hyperparams {
        prior_mean: DVector::from_element(1, m),
        prior_scale: kappa,
        prior_dof: nu,
        prior_scatter: DMatrix::from_element(1, 1, psi),
        n_signs,
        sign_prior: Default::default(),
    };
    let o = ObservationSet::new(0, DMatrix::from_column_slice(data.len(), 1, data)).unwrap();
    init_agent(h, o, 0).unwrap()
}

#[test]
fn prior_predictive_matches_quadrature_at_zero() {
    let agent = agent_1d(1, (0.0, 1.0, 3.0, 1.0), &[0.0]);
    let prior_only = agent
        .with_posteriors(vec![NiwParams::prior(agent.hyper())])
        .unwrap();
    let got = prior_only
        .posterior_predictive_logdensity(&DVector::from_element(1, 0.0), 0)
        .unwrap()
        .exp();
    let oracle = niw_predictive_quadrature(0.0, 0.0, 1.0, 3.0, 1.0);
    assert!((got - oracle).abs() < 1e-6, "got {got}, oracle {oracle}");
}

#[test]
fn posterior_predictive_matches_quadrature_after_data() {
    let agent = agent_1d(1, (0.5, 2.0, 4.0, 1.5), &[1.0, -0.3, 2.2]);
    let post = &agent.posteriors()[0];
    for x in [-2.0, 0.0, 0.7, 3.5] {
        let got = agent
            .posterior_predictive_logdensity(&DVector::from_element(1, x), 0)
            .unwrap()
            .exp();
        let oracle = niw_predictive_quadrature(x, post.mean[0], post.scale, post.dof, post.scatter[(0, 0)]);
        assert!((got - oracle).abs() < 1e-6, "x={x}: got {got}, oracle {oracle}");
    }
}

#[test]
fn predictive_integrates_to_one() {
    let agent = agent_1d(1, (0.0, 1.0, 3.0, 1.0), &[0.0]);
    let prior_only = agent
        .with_posteriors(vec![NiwParams::prior(agent.hyper())])
        .unwrap();
    let n = 200_000;
    let (a, b) = (-50.0, 50.0);
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        prior_only
            .posterior_predictive_logdensity(&DVector::from_element(1, x), 0)
            .unwrap()
            .exp()
    };
    let mut total = 0.5 * (f(a) + f(b));
    for i in 1..n {
        total += f(a + i as f64 * h);
    }
    total *= h;
    assert!((total - 1.0).abs() < 1e-4, "{total}");
}

fn assert_niw_close(a: &NiwParams, b: &NiwParams, tol: f64) {
    let scale = 1.0 + b.scatter.amax();
    assert!((&a.mean - &b.mean).amax() < tol, "mean {} vs {}", a.mean, b.mean);
    assert!((a.scale - b.scale).abs() < tol);
    assert!((a.dof - b.dof).abs() < tol);
    assert!((&a.scatter - &b.scatter).amax() < tol * scale, "scatter {} vs {}", a.scatter, b.scatter);
}

#[test]
fn batch_update_matches_sequential_fold_at_dim_two() {
    let mut rng = rng_for(2024, 0);
    let h = Hyperparams::isotropic(2, 1, 0.8, 4.5, 1.3);
    let prior = NiwParams::prior(&h);
    let data: Vec<DVector<f64>> = (0..5)
        .map(|_| DVector::from_fn(2, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    assert_niw_close(&prior.updated(&data), &sequential_oracle(&prior, &data), 1e-10);

    // through the agent API as well
    let obs = DMatrix::from_fn(5, 2, |i, j| data[i][j]);
    let o = ObservationSet::new(0, obs).unwrap();
    let agent = init_agent(h, o.clone(), 1).unwrap();
    let agent = agent
        .gibbs_update_params(&o, &SignAssignment::new(vec![0; 5], AssignmentOwner::Shared))
        .unwrap();
    assert_niw_close(&agent.posteriors()[0], &sequential_oracle(&prior, &data), 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batch_equals_sequential_in_any_order(
        seed in any::<u64>(),
        dim in prop::sample::select(vec![1usize, 2, 5]),
        n in 0usize..12,
    ) {
        let mut rng = rng_for(seed, 0);
        let mut h = Hyperparams::isotropic(dim, 1, 0.1 + rng.random::<f64>() * 3.0, dim as f64 + rng.random::<f64>() * 4.0, 0.5 + rng.random::<f64>());
        h.prior_mean = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prior = NiwParams::prior(&h);
        let mut data: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(dim, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let batch = prior.updated(&data);
        assert_niw_close(&batch, &sequential_oracle(&prior, &data), 1e-10);
        data.reverse();
        assert_niw_close(&batch, &sequential_oracle(&prior, &data), 1e-10);
    }
}

#[test]
fn three_sign_draws_match_oracle_frequencies() {
    let agent = agent_1d(3, (0.0, 1.0, 3.0, 1.0), &[0.4]);
    let priors = [(-1.0, 2.0, 4.0, 1.0), (0.5, 1.0, 3.0, 0.5), (2.0, 3.0, 5.0, 2.0)];
    let posts: Vec<NiwParams> = priors
        .iter()
        .map(|&(m, k, v, p)| NiwParams {
            mean: DVector::from_element(1, m),
            scale: k,
            dof: v,
            scatter: DMatrix::from_element(1, 1, p),
        })
        .collect();
    let agent = agent.with_posteriors(posts).unwrap();

    let x = 0.4;
    let dens: Vec<f64> = priors
        .iter()
        .map(|&(m, k, v, p)| niw_predictive_quadrature(x, m, k, v, p))
        .collect();
    let z: f64 = dens.iter().sum();
    let expected: Vec<f64> = dens.iter().map(|d| d / z).collect();

    let n = 10_000;
    let mut counts = [0usize; 3];
    let mut rng = rng_for(77, 0);
    for _ in 0..n {
        counts[agent.sample_sign_posterior(0, 1.0, &mut rng).unwrap()] += 1;
    }
    for s in 0..3 {
        let p = expected[s];
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (counts[s] as f64 - n as f64 * p).abs();
        assert!(dev < 3.0 * sigma, "sign {s}: {} vs expected {}", counts[s], n as f64 * p);
    }
}
