//! Sampler conditionals measured against quadrature and enumeration on tiny
//! instances. Each check returns its worst error so callers pick tolerances.

use interfactor::gibbs::{full_residual, sigma2_posterior, update_alpha_row, update_sigma2, Layouts};
use interfactor::gp::{update_f_row, update_f_shared, z_log_odds};
use interfactor::kernel::{se_kernel, KernelMatrix};
use interfactor::mult::{eta_conditional, lambda_conditional, update_theta_row};
use interfactor::rng::{stream, Purpose};
use interfactor::spec::{BetaPrior, InvGammaPrior, ModelSpec, ZPriorStrategy};
use interfactor::spike_slab::{logistic, slab_posterior};
use interfactor::state::McmcState;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, InverseGamma};

use super::*;

pub const SWEEPS: usize = 50_000;

pub fn row(m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    m.row(i).transpose()
}

/// Worst relative error of the slab mean and variance, and the absolute
/// error of the log Bayes factor, over every loading of the toy state.
pub fn slab_errors() -> (f64, f64) {
    let (state, x) = toy_mult_state(None);
    let eta = state.eta.as_ref().unwrap();
    let theta = state.theta.as_ref().unwrap();
    let omega = 10.0;
    let (mut rel, mut bf) = (0.0f64, 0.0f64);
    for i in 0..3 {
        for l in 0..2 {
            let s2 = state.sigma2[i];
            let reg = row(&state.lambda, l);
            let r = DVector::from_fn(4, |j, _| {
                x[(i, j)] - state.alpha[(i, 1 - l)] * state.lambda[(1 - l, j)] - theta[(i, 0)] * eta[(0, j)]
            });
            let loglik = |a: f64| (0..4).map(|j| normal_logpdf(r[j], a * reg[j], s2)).sum::<f64>();
            let (log_z, mean, var) = quadrature_moments(|a| loglik(a) + normal_logpdf(a, 0.0, omega), 0.0, 12.0);
            let post = slab_posterior(reg.iter().zip(r.iter()).map(|(&a, &b)| (a, b)), s2, omega);
            rel = rel.max(rel_err(post.mean, mean)).max(rel_err(post.var, var));
            bf = bf.max((post.log_bayes_factor - (log_z - loglik(0.0))).abs());
        }
    }
    (rel, bf)
}

/// Log joint of `lambda_lj` with `eta` integrated out (`nu = 0` gives the
/// exact-product model).
fn collapsed_log_joint(state: &McmcState, x: &DMatrix<f64>, nu: f64, j: usize, l: usize, v: f64) -> f64 {
    let mut lam = state.lambda.column(j).into_owned();
    lam[l] = v;
    let theta = state.theta.as_ref().unwrap();
    let mean = DVector::from_fn(3, |i, _| {
        state.alpha[(i, 0)] * lam[0] + state.alpha[(i, 1)] * lam[1] + theta[(i, 0)] * lam[0] * lam[1]
    });
    let cov = DMatrix::from_diagonal(&state.sigma2) + theta * theta.transpose() * nu;
    mvn_logpdf(&x.column(j).into_owned(), &mean, &cov) + normal_logpdf(v, 0.0, 1.0)
}

pub fn score_rel_error() -> f64 {
    let mut worst = 0.0f64;
    for (spec, nu) in [
        (ModelSpec::mult_approach2(2), 0.0),
        (ModelSpec::mult_approach1(2, 0.4), 0.4),
        (ModelSpec::mult_approach1(2, 1e-5), 1e-5),
    ] {
        let (state, x) = toy_mult_state(None);
        for j in 0..4 {
            for l in 0..2 {
                let (mean, var) = lambda_conditional(j, l, &state, &x, &spec);
                let (_, qm, qv) = quadrature_moments(|v| collapsed_log_joint(&state, &x, nu, j, l, v), mean, 12.0);
                worst = worst.max(rel_err(mean, qm)).max(rel_err(var, qv));
            }
        }
    }
    worst
}

pub fn interaction_score_rel_error() -> f64 {
    let nu = 0.3;
    let spec = ModelSpec::mult_approach1(2, nu);
    let (state, x) = toy_mult_state(Some(nu));
    let theta = state.theta.as_ref().unwrap();
    let mut worst = 0.0f64;
    for j in 0..4 {
        let prior_mean = state.lambda[(0, j)] * state.lambda[(1, j)];
        let logf = |e: f64| {
            (0..3)
                .map(|i| {
                    let mu = state.alpha[(i, 0)] * state.lambda[(0, j)]
                        + state.alpha[(i, 1)] * state.lambda[(1, j)]
                        + theta[(i, 0)] * e;
                    normal_logpdf(x[(i, j)], mu, state.sigma2[i])
                })
                .sum::<f64>()
                + normal_logpdf(e, prior_mean, nu)
        };
        let (mean, cov) = eta_conditional(j, &state, &x, &spec);
        let (_, qm, qv) = quadrature_moments(logf, mean[0], 8.0);
        worst = worst.max(rel_err(mean[0], qm)).max(rel_err(cov[(0, 0)], qv));
    }
    worst
}

/// Asymptotic Kolmogorov distribution tail.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let t = (n as f64).sqrt() * d;
    let p: f64 = (1..100)
        .map(|k| 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64 * t).powi(2)).exp())
        .sum();
    p.clamp(0.0, 1.0)
}

/// Relative error of the inverse-gamma posterior moments against quadrature
/// in `log sigma2`, and the KS p-value of sampler draws against that law.
pub fn noise_variance_check() -> (f64, f64) {
    let spec = ModelSpec::mult_approach2(2);
    let (mut state, x) = toy_mult_state(None);
    let i = 1;
    let rss = full_residual(&state, &x, i).norm_squared();
    let prior = InvGammaPrior { shape: 2.1, scale: 1.1 };
    let post = sigma2_posterior(prior, rss, 4);
    let logf = |u: f64| {
        let s2 = u.exp();
        -2.0 * s2.ln() - 0.5 * rss / s2 - (prior.shape + 1.0) * s2.ln() - prior.scale / s2 + u
    };
    let (a, b, n) = (-12.0, 8.0, 40_000);
    let peak = (0..=200)
        .map(|k| logf(a + (b - a) * k as f64 / 200.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let z = simpson(|u| (logf(u) - peak).exp(), a, b, n);
    let m1 = simpson(|u| u.exp() * (logf(u) - peak).exp(), a, b, n) / z;
    let m2 = simpson(|u| (u.exp() - m1).powi(2) * (logf(u) - peak).exp(), a, b, n) / z;
    let mean = post.scale / (post.shape - 1.0);
    let var = post.scale.powi(2) / ((post.shape - 1.0).powi(2) * (post.shape - 2.0));
    let rel = rel_err(mean, m1).max(rel_err(var, m2));

    let mut rng = stream(6, 0, Purpose::Sweep);
    let mut draws: Vec<f64> = (0..SWEEPS)
        .map(|_| {
            update_sigma2(i, &mut state, &x, &spec, &mut rng);
            state.sigma2[i]
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let dist = InverseGamma::new(post.shape, post.scale).unwrap();
    let nf = SWEEPS as f64;
    let d = draws
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let c = dist.cdf(v);
            (c - k as f64 / nf).abs().max(((k + 1) as f64 / nf - c).abs())
        })
        .fold(0.0, f64::max);
    (rel, ks_p_value(d, SWEEPS))
}

fn beta_moments_by_quadrature(prior: BetaPrior, ones: usize, zeros: usize) -> (f64, f64) {
    let logf = |q: f64| (prior.a - 1.0 + ones as f64) * q.ln() + (prior.b - 1.0 + zeros as f64) * (1.0 - q).ln();
    let (a, b, n) = (1e-9, 1.0 - 1e-9, 200_000);
    let z = simpson(|q| logf(q).exp(), a, b, n);
    let m1 = simpson(|q| q * logf(q).exp(), a, b, n) / z;
    let m2 = simpson(|q| (q - m1).powi(2) * logf(q).exp(), a, b, n) / z;
    (m1, m2)
}

pub fn beta_mean_var(p: BetaPrior) -> (f64, f64) {
    let s = p.a + p.b;
    (p.a / s, p.a * p.b / (s * s * (s + 1.0)))
}

/// Worst relative moment error of the `q` and `rho` conditionals, and the
/// standardized deviation of the sampled `rho` mean.
pub fn probability_check() -> (f64, f64) {
    let spec = ModelSpec::mult_approach2(2);
    let layouts = Layouts::new(&spec, 3);
    let mut h = DMatrix::from_element(3, 2, false);
    h[(1, 0)] = true;
    let post = layouts.h.posterior_params(&h);
    let (m, v) = beta_moments_by_quadrature(BetaPrior::UNIFORM, 1, 0);
    let (pm, pv) = beta_mean_var(post[2]);
    let mut rel = rel_err(pm, m).max(rel_err(pv, v));

    let mut gspec = ModelSpec::gp(2, 1).unwrap();
    gspec.z_prior_strategy = ZPriorStrategy::Global;
    gspec.beta.default = BetaPrior::new(2.0, 3.0);
    let layouts = Layouts::new(&gspec, 3);
    let z = DMatrix::from_column_slice(3, 1, &[true, false, true]);
    let post = layouts.z.posterior_params(&z);
    let (m, v) = beta_moments_by_quadrature(BetaPrior::new(2.0, 3.0), 2, 1);
    let (pm, pv) = beta_mean_var(post[0]);
    rel = rel.max(rel_err(pm, m)).max(rel_err(pv, v));

    let mut rng = stream(8, 0, Purpose::Sweep);
    let mean = (0..SWEEPS).map(|_| layouts.z.draw_params(&z, &mut rng)[0]).sum::<f64>() / SWEEPS as f64;
    (rel, (mean - pm).abs() / (pv / SWEEPS as f64).sqrt())
}

/// Total variation between sampled and enumerated `(h_i1, h_i2, z_i1)`
/// frequencies for one feature of the toy model, plus the oracle itself.
pub fn row_indicator_tv(sweeps: usize) -> (f64, Vec<f64>) {
    let spec = ModelSpec::mult_approach2(2);
    let (mut state, x) = toy_mult_state(None);
    let layouts = Layouts::new(&spec, 3);
    state.q = vec![0.4; layouts.h.n_params()];
    state.rho = vec![0.3; layouts.z.n_params()];
    let i = 0;
    let l0 = row(&state.lambda, 0);
    let l1 = row(&state.lambda, 1);
    let e0 = row(state.eta.as_ref().unwrap(), 0);
    let oracle = enumerate_row_configs(
        &row(&x, i),
        [&l0, &l1, &e0],
        [10.0; 3],
        [0.4, 0.4, 0.3],
        state.sigma2[i],
    );
    let mut rng = stream(11, 0, Purpose::Sweep);
    let mut counts = [0usize; 8];
    for _ in 0..sweeps {
        update_alpha_row(i, &mut state, &x, &spec, &layouts.h, &mut rng);
        update_theta_row(i, &mut state, &x, &spec, &layouts.z, &mut rng);
        assert!(state.sparsity_consistent());
        counts[state.h[(i, 0)] as usize + 2 * state.h[(i, 1)] as usize + 4 * state.z[(i, 0)] as usize] += 1;
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / sweeps as f64).collect();
    (total_variation(&freq, &oracle), oracle)
}

pub fn gp_toy(n: usize, seed: u64) -> (DMatrix<f64>, KernelMatrix) {
    let mut rng = stream(seed, 0, Purpose::Simulation);
    let lambda = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.5..1.5));
    (lambda.clone(), se_kernel(&lambda, 0.6).unwrap())
}

fn explicit_log_odds(r: &DVector<f64>, k: &KernelMatrix, s2: f64, prior: f64) -> f64 {
    let n = r.len();
    let zero = DVector::zeros(n);
    prior.ln() - (1.0 - prior).ln() + mvn_logpdf(r, &zero, &(k.covariance() + DMatrix::identity(n, n) * s2))
        - mvn_logpdf(r, &zero, &(DMatrix::identity(n, n) * s2))
}

/// Worst absolute log-odds error of the GP indicator against explicit
/// multivariate-normal densities, `n` up to 10.
pub fn gp_log_odds_error() -> f64 {
    let mut worst = 0.0f64;
    for n in [1usize, 2, 5, 10] {
        let (_, k) = gp_toy(n, n as u64);
        let spectrum = k.spectrum();
        let r = DVector::from_fn(n, |j, _| ((j * 37 % 11) as f64 - 5.0) / 4.0);
        for s2 in [0.3, 1.0, 2.5] {
            let got = z_log_odds(0.25, &r, &spectrum, s2);
            worst = worst.max((got - explicit_log_odds(&r, &k, s2, 0.25)).abs());
        }
    }
    worst
}

pub fn gp_state(m: usize, lambda: DMatrix<f64>, f_shared: bool) -> McmcState {
    let n = lambda.ncols();
    McmcState {
        alpha: DMatrix::zeros(m, 2),
        lambda,
        theta: None,
        eta: None,
        f: Some(DMatrix::zeros(m, n)),
        f_shared: f_shared.then(|| DVector::zeros(n)),
        sigma2: DVector::from_fn(m, |i, _| 0.5 + 0.3 * i as f64),
        h: DMatrix::from_element(m, 2, false),
        z: DMatrix::from_element(m, 1, false),
        q: Vec::new(),
        rho: Vec::new(),
    }
}

/// Worst total variation between sampled GP indicator frequencies and the
/// explicit-density posterior, over two rows.
pub fn gp_indicator_tv(sweeps: usize) -> f64 {
    let spec = ModelSpec::gp(2, 1).unwrap();
    let (lambda, k) = gp_toy(4, 21);
    let x = DMatrix::from_row_slice(2, 4, &[0.9, -0.3, 1.2, 0.4, 0.1, 0.2, -0.1, 0.05]);
    let mut state = gp_state(2, lambda, false);
    let layouts = Layouts::new(&spec, 2);
    state.rho = vec![0.4; layouts.z.n_params()];
    state.q = vec![0.5; layouts.h.n_params()];
    let spectrum = k.spectrum();
    let mut rng = stream(9, 0, Purpose::Sweep);
    let mut worst = 0.0f64;
    for i in 0..2 {
        let p = logistic(explicit_log_odds(&row(&x, i), &k, state.sigma2[i], 0.4));
        let mut ones = 0;
        for _ in 0..sweeps {
            update_f_row(i, &mut state, &x, &spectrum, &layouts.z, &mut rng);
            assert!(state.sparsity_consistent());
            ones += state.z[(i, 0)] as usize;
        }
        worst = worst.max((ones as f64 / sweeps as f64 - p).abs());
    }
    worst
}

/// Enumeration over the four `z` configurations of two rows sharing one GP
/// row, integrating the shared row out on a 2-D grid.
pub fn shared_oracle(x: &DMatrix<f64>, k: &DMatrix<f64>, sigma2: &[f64], rho: f64) -> [f64; 4] {
    let kinv = k.clone().try_inverse().unwrap();
    let logdet = k.determinant().ln();
    let prior = |a: f64, b: f64| {
        let v = DVector::from_vec(vec![a, b]);
        -0.5 * (v.transpose() * &kinv * &v)[(0, 0)] - 0.5 * logdet - (2.0 * std::f64::consts::PI).ln()
    };
    let weight = |k: usize, last: usize| {
        if k == 0 || k == last {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let grid = 600;
    let (lo, hi) = (-7.0, 7.0);
    let h = (hi - lo) / grid as f64;
    let mut w = [0.0; 4];
    for (c, slot) in w.iter_mut().enumerate() {
        let active = [c & 1 == 1, c & 2 == 2];
        let mut total = 0.0;
        for a in 0..=grid {
            let fa = lo + a as f64 * h;
            for b in 0..=grid {
                let fb = lo + b as f64 * h;
                let mut lp = prior(fa, fb);
                for i in 0..2 {
                    let f = if active[i] { [fa, fb] } else { [0.0, 0.0] };
                    for j in 0..2 {
                        lp += normal_logpdf(x[(i, j)], f[j], sigma2[i]);
                    }
                }
                total += weight(a, grid) * weight(b, grid) * lp.exp();
            }
        }
        let prior_z: f64 = active.iter().map(|&a| if a { rho } else { 1.0 - rho }).product();
        *slot = prior_z * total * h * h / 9.0;
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Total variation of the shared-row indicator frequencies against
/// [`shared_oracle`]. Also checks that active rows copy the shared row.
pub fn shared_indicator_tv(sweeps: usize) -> f64 {
    let spec = ModelSpec::gp(2, 2).unwrap();
    let lambda = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.0, 0.3]);
    let k = se_kernel(&lambda, 0.6).unwrap();
    let x = DMatrix::from_row_slice(2, 2, &[1.4, 0.9, 0.6, -0.2]);
    let mut state = gp_state(2, lambda, true);
    let layouts = Layouts::new(&spec, 2);
    state.rho = vec![0.5; layouts.z.n_params()];
    let oracle = shared_oracle(&x, &k.covariance(), &[state.sigma2[0], state.sigma2[1]], 0.5);
    let spectrum = k.spectrum();
    let mut rng = stream(10, 0, Purpose::Sweep);
    let mut counts = [0usize; 4];
    for _ in 0..sweeps {
        update_f_shared(&mut state, &x, &spectrum, &layouts.z, &mut rng);
        counts[state.z[(0, 0)] as usize + 2 * state.z[(1, 0)] as usize] += 1;
        let f = state.f.as_ref().unwrap();
        let shared = state.f_shared.as_ref().unwrap();
        for i in 0..2 {
            if state.z[(i, 0)] {
                assert!(f.row(i).iter().zip(shared.iter()).all(|(a, b)| a == b));
            }
        }
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / sweeps as f64).collect();
    total_variation(&freq, &oracle)
}
