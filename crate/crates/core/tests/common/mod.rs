//! Brute-force oracles and planted data sets shared by the integration tests.
#![allow(dead_code)]

pub mod conditionals;

use std::f64::consts::PI;

use interfactor::data::{standardize_rows, DataMatrix};
use interfactor::gibbs::pair_products;
use interfactor::rng::{stream, Purpose};
use interfactor::state::McmcState;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Normalizing constant (log), mean and variance of `exp(logf)` by
/// quadrature over `[center - width, center + width]`.
pub fn quadrature_moments<F: Fn(f64) -> f64>(logf: F, center: f64, width: f64) -> (f64, f64, f64) {
    let n = 40_000;
    let (a, b) = (center - width, center + width);
    let peak = logf(center);
    let z = simpson(|t| (logf(t) - peak).exp(), a, b, n);
    let m1 = simpson(|t| t * (logf(t) - peak).exp(), a, b, n) / z;
    let m2 = simpson(|t| (t - m1) * (t - m1) * (logf(t) - peak).exp(), a, b, n) / z;
    (z.ln() + peak, m1, m2)
}

/// Multivariate normal log density via explicit determinant and inverse.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x - mean;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let quad = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * quad - 0.5 * cov.determinant().ln() - 0.5 * x.len() as f64 * (2.0 * PI).ln()
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / var - 0.5 * (2.0 * PI * var).ln()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Total-variation distance between two discrete distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `m = 3, n = 4, L = 2` multiplicative state with fixed values.
pub fn toy_mult_state(nu: Option<f64>) -> (McmcState, DMatrix<f64>) {
    let x = DMatrix::from_row_slice(3, 4, &[0.9, -1.3, 0.4, 1.8, -0.2, 0.7, -1.1, 0.5, 1.4, 0.1, -0.6, -1.6]);
    let lambda = DMatrix::from_row_slice(2, 4, &[0.8, -0.4, 1.1, -1.2, 0.3, 1.0, -0.7, -0.9]);
    let mut eta = pair_products(&lambda, &[(0, 1)]);
    if nu.is_some() {
        eta[(0, 1)] += 0.15;
        eta[(0, 3)] -= 0.2;
    }
    let state = McmcState {
        alpha: DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.0, -0.4, 0.9, 0.3]),
        lambda,
        theta: Some(DMatrix::from_column_slice(3, 1, &[0.7, 0.0, -0.5])),
        eta: Some(eta),
        f: None,
        f_shared: None,
        sigma2: DVector::from_vec(vec![0.6, 0.9, 0.45]),
        h: DMatrix::from_row_slice(3, 2, &[true, false, false, true, true, true]),
        z: DMatrix::from_column_slice(3, 1, &[true, false, true]),
        q: Vec::new(),
        rho: Vec::new(),
    };
    (state, x)
}

/// Seed groups loading on one factor each; the first `flipped` genes of the
/// first group load with the opposite sign.
pub struct PlantedSeeds {
    pub data: DataMatrix,
    pub g1: Vec<usize>,
    pub g2: Vec<usize>,
    pub flipped: Vec<usize>,
}

pub fn planted_seed_data(seed: u64, flipped: usize) -> PlantedSeeds {
    let mut rng = stream(seed, 0, Purpose::Simulation);
    let (n1, n2, n) = (15, 12, 80);
    let m = n1 + n2;
    let lambda = DMatrix::from_fn(2, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut raw = DMatrix::zeros(m, n);
    for i in 0..m {
        let (l, sign) = if i < n1 {
            (0, if i < flipped { -1.0 } else { 1.0 })
        } else {
            (1, 1.0)
        };
        let a = sign * rng.random_range(0.8..1.6);
        for j in 0..n {
            raw[(i, j)] = a * lambda[(l, j)] + 0.6 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let (data, _) = standardize_rows(&DataMatrix::from_values(raw).unwrap()).unwrap();
    PlantedSeeds {
        data,
        g1: (0..n1).collect(),
        g2: (n1..m).collect(),
        flipped: (0..flipped).collect(),
    }
}

/// Seeds plus 20 genes loading on both factors, 40 on one, 40 on none.
pub struct PlantedCandidates {
    pub data: DataMatrix,
    pub g1: Vec<usize>,
    pub g2: Vec<usize>,
    pub two_factor: Vec<usize>,
}

pub fn planted_candidate_data(seed: u64) -> PlantedCandidates {
    let mut rng = stream(seed, 1, Purpose::Simulation);
    let n = 100;
    let (s, both, one, none) = (10, 20, 40, 40);
    let m = 2 * s + both + one + none;
    let lambda = DMatrix::from_fn(2, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut alpha = DMatrix::zeros(m, 2);
    let mag = |rng: &mut interfactor::rng::ChainRng| {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sign * rng.random_range(0.7..1.5)
    };
    for i in 0..s {
        alpha[(i, 0)] = 1.2;
        alpha[(s + i, 1)] = 1.2;
    }
    let start = 2 * s;
    for i in start..start + both {
        alpha[(i, 0)] = mag(&mut rng);
        alpha[(i, 1)] = mag(&mut rng);
    }
    for i in start + both..start + both + one {
        let l = i % 2;
        alpha[(i, l)] = mag(&mut rng);
    }
    let mut raw = &alpha * &lambda;
    for v in raw.iter_mut() {
        *v += 0.7 * rng.sample::<f64, _>(StandardNormal);
    }
    let (data, _) = standardize_rows(&DataMatrix::from_values(raw).unwrap()).unwrap();
    PlantedCandidates {
        data,
        g1: (0..s).collect(),
        g2: (s..2 * s).collect(),
        two_factor: (start..start + both).collect(),
    }
}

/// Posterior over all `(h_i1, h_i2, z_i1)` configurations of one feature of
/// a two-factor multiplicative model, by enumeration with the coefficients
/// integrated out analytically. Index = h1 + 2 h2 + 4 z.
pub fn enumerate_row_configs(
    r: &DVector<f64>,
    regressors: [&DVector<f64>; 3],
    slab_vars: [f64; 3],
    priors: [f64; 3],
    sigma2: f64,
) -> Vec<f64> {
    let n = r.len();
    let mut logp = Vec::with_capacity(8);
    for c in 0..8usize {
        let mut cov = DMatrix::identity(n, n) * sigma2;
        let mut lp = 0.0;
        for k in 0..3 {
            let on = (c >> k) & 1 == 1;
            if on {
                cov += regressors[k] * regressors[k].transpose() * slab_vars[k];
                lp += priors[k].ln();
            } else {
                lp += (1.0 - priors[k]).ln();
            }
        }
        logp.push(lp + mvn_logpdf(r, &DVector::zeros(n), &cov));
    }
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Batch-means standard error of the mean of an autocorrelated trace.
pub fn batch_se(trace: &[f64], batches: usize) -> f64 {
    let size = trace.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| trace[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mu = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
