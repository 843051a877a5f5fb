//! Gibbs sampler for `X = alpha lambda + theta eta + e` with pairwise
//! products of factor scores as interaction scores.
//!
//! Under the Gaussian-prior approach (`eta_t ~ N(lambda_a lambda_b, nu)`) the
//! factor scores are updated with `eta` integrated out, which keeps the chain
//! moving when `nu` is tiny; `eta` is redrawn from its full conditional right
//! after. Under the exact-product approach `eta` is recomputed from `lambda`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gibbs::{
    initial_state, linear_at, pair_products, update_alpha_row, update_probabilities, update_sigma2, Layouts,
    McmcSettings,
};
use crate::rng::{stream, ChainRng, Purpose};
use crate::spec::{interaction_pairs, Family, ModelSpec, ValidatedSpec};
use crate::spike_slab::{draw_spike_slab, slab_posterior_from_moments, InclusionLayout};
use crate::state::{McmcState, PosteriorDraws};

/// Noise covariance of one data column once `eta` is integrated out:
/// `S = D + nu Theta Theta'`, applied through the Woodbury identity.
struct CollapsedNoise {
    inv_d: DVector<f64>,
    theta: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl CollapsedNoise {
    fn new(theta: &DMatrix<f64>, sigma2: &DVector<f64>, nu: f64) -> Self {
        let inv_d = sigma2.map(|s| 1.0 / s);
        let chol = (nu > 0.0 && theta.iter().any(|&v| v != 0.0)).then(|| {
            let m = eta_precision(theta, &inv_d, nu);
            Cholesky::new(m).expect("eta precision is positive definite")
        });
        Self {
            inv_d,
            theta: theta.clone(),
            chol,
        }
    }

    /// `S^{-1} v`.
    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let dv = v.component_mul(&self.inv_d);
        match &self.chol {
            None => dv,
            Some(chol) => {
                let u = chol.solve(&self.theta.tr_mul(&dv));
                dv - (&self.theta * u).component_mul(&self.inv_d)
            }
        }
    }
}

/// `I/nu + Theta' D^{-1} Theta`.
fn eta_precision(theta: &DMatrix<f64>, inv_d: &DVector<f64>, nu: f64) -> DMatrix<f64> {
    let t = theta.ncols();
    let mut m = DMatrix::identity(t, t) / nu;
    for i in 0..theta.nrows() {
        for a in 0..t {
            for b in 0..t {
                m[(a, b)] += theta[(i, a)] * theta[(i, b)] * inv_d[i];
            }
        }
    }
    m
}

fn nu_of(spec: &ModelSpec) -> f64 {
    match spec.family {
        Family::MultApproach1 => spec.nu.unwrap_or(0.0),
        _ => 0.0,
    }
}

/// Effective regressor `c` and partial residual `y` of factor `l` in column
/// `j`: the column mean is `c lambda_lj + (x_j - y)`.
fn lambda_regression(
    j: usize,
    l: usize,
    state: &McmcState,
    x: &DMatrix<f64>,
    pairs: &[(usize, usize)],
) -> (DVector<f64>, DVector<f64>) {
    let m = x.nrows();
    let theta = state.theta.as_ref().expect("multiplicative state");
    let lam = state.lambda.column(j);
    let mut c = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    for i in 0..m {
        let mut ci = state.alpha[(i, l)];
        let mut mean = linear_at(state, i, j);
        for (t, &(a, b)) in pairs.iter().enumerate() {
            mean += theta[(i, t)] * lam[a] * lam[b];
            if a == l {
                ci += theta[(i, t)] * lam[b];
            } else if b == l {
                ci += theta[(i, t)] * lam[a];
            }
        }
        c[i] = ci;
        y[i] = x[(i, j)] - (mean - ci * lam[l]);
    }
    (c, y)
}

fn lambda_conditional_with(
    j: usize,
    l: usize,
    state: &McmcState,
    x: &DMatrix<f64>,
    pairs: &[(usize, usize)],
    noise: &CollapsedNoise,
) -> (f64, f64) {
    let (c, y) = lambda_regression(j, l, state, x, pairs);
    let w = noise.solve(&c);
    let prec = 1.0 + c.dot(&w);
    (w.dot(&y) / prec, 1.0 / prec)
}

/// Mean and variance of `lambda_lj` given everything except `eta`.
pub fn lambda_conditional(j: usize, l: usize, state: &McmcState, x: &DMatrix<f64>, spec: &ModelSpec) -> (f64, f64) {
    let pairs = interaction_pairs(spec.factors).expect("validated factor count");
    let theta = state.theta.as_ref().expect("multiplicative state");
    let noise = CollapsedNoise::new(theta, &state.sigma2, nu_of(spec));
    lambda_conditional_with(j, l, state, x, &pairs, &noise)
}

fn update_lambda_column<R: Rng + ?Sized>(
    j: usize,
    state: &mut McmcState,
    x: &DMatrix<f64>,
    spec: &ModelSpec,
    pairs: &[(usize, usize)],
    noise: &CollapsedNoise,
    rng: &mut R,
) {
    for l in 0..spec.factors {
        let (mean, var) = lambda_conditional_with(j, l, state, x, pairs, noise);
        state.lambda[(l, j)] = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }
    if spec.family == Family::MultApproach2 {
        let eta = state.eta.as_mut().expect("multiplicative state");
        for (t, &(a, b)) in pairs.iter().enumerate() {
            eta[(t, j)] = state.lambda[(a, j)] * state.lambda[(b, j)];
        }
    }
}

/// Coordinate-wise update of factor-score column `j`.
pub fn update_lambda_mult<R: Rng + ?Sized>(
    j: usize,
    state: &mut McmcState,
    x: &DMatrix<f64>,
    spec: &ModelSpec,
    rng: &mut R,
) {
    let pairs = interaction_pairs(spec.factors).expect("validated factor count");
    let noise = CollapsedNoise::new(
        state.theta.as_ref().expect("multiplicative state"),
        &state.sigma2,
        nu_of(spec),
    );
    update_lambda_column(j, state, x, spec, &pairs, &noise, rng);
}

/// Joint Gaussian conditional of interaction-score column `j`: mean and
/// covariance.
pub fn eta_conditional(
    j: usize,
    state: &McmcState,
    x: &DMatrix<f64>,
    spec: &ModelSpec,
) -> (DVector<f64>, DMatrix<f64>) {
    let (mean, chol) = eta_conditional_chol(j, state, x, spec);
    (mean, chol.inverse())
}

fn eta_conditional_chol(
    j: usize,
    state: &McmcState,
    x: &DMatrix<f64>,
    spec: &ModelSpec,
) -> (DVector<f64>, Cholesky<f64, Dyn>) {
    let nu = spec.nu.expect("Gaussian-prior approach has nu");
    let theta = state.theta.as_ref().expect("multiplicative state");
    let pairs = interaction_pairs(spec.factors).expect("validated factor count");
    let inv_d = state.sigma2.map(|s| 1.0 / s);
    let prec = eta_precision(theta, &inv_d, nu);
    let resid = DVector::from_fn(x.nrows(), |i, _| (x[(i, j)] - linear_at(state, i, j)) * inv_d[i]);
    let prior_mean = DVector::from_fn(pairs.len(), |t, _| {
        let (a, b) = pairs[t];
        state.lambda[(a, j)] * state.lambda[(b, j)]
    });
    let rhs = prior_mean / nu + theta.tr_mul(&resid);
    let chol = Cholesky::new(prec).expect("eta precision is positive definite");
    (chol.solve(&rhs), chol)
}

/// Draws interaction-score column `j` (Gaussian-prior approach only).
pub fn update_eta<R: Rng + ?Sized>(j: usize, state: &mut McmcState, x: &DMatrix<f64>, spec: &ModelSpec, rng: &mut R) {
    let (mean, chol) = eta_conditional_chol(j, state, x, spec);
    let xi = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = chol
        .l_dirty()
        .tr_solve_upper_triangular(&xi)
        .expect("cholesky factor has a positive diagonal");
    let eta = state.eta.as_mut().expect("multiplicative state");
    for t in 0..mean.len() {
        eta[(t, j)] = mean[t] + noise[t];
    }
}

/// Spike-and-slab update of the interaction loadings of feature `i`.
pub fn update_theta_row<R: Rng + ?Sized>(
    i: usize,
    state: &mut McmcState,
    x: &DMatrix<f64>,
    spec: &ModelSpec,
    layout: &InclusionLayout,
    rng: &mut R,
) {
    let n = x.ncols();
    let omega = spec.omega_theta.expect("multiplicative spec has omega_theta");
    let mut r = crate::gibbs::full_residual(state, x, i);
    let s2 = state.sigma2[i];
    let theta = state.theta.as_mut().expect("multiplicative state");
    let eta = state.eta.as_ref().expect("multiplicative state");
    for t in 0..theta.ncols() {
        let old = theta[(i, t)];
        let mut sxx = 0.0;
        let mut sxr = 0.0;
        for j in 0..n {
            let e = eta[(t, j)];
            r[j] += old * e;
            sxx += e * e;
            sxr += e * r[j];
        }
        let post = slab_posterior_from_moments(sxx, sxr, s2, omega);
        let prior = layout.probability(&state.rho, i, t);
        let (inc, value) = draw_spike_slab(&post, prior, rng);
        state.z[(i, t)] = inc;
        theta[(i, t)] = value;
        for j in 0..n {
            r[j] -= value * eta[(t, j)];
        }
    }
}

/// One chain of the multiplicative sampler.
#[derive(Debug, Clone)]
pub struct MultChain {
    spec: ModelSpec,
    x: DMatrix<f64>,
    pairs: Vec<(usize, usize)>,
    layouts: Layouts,
    state: McmcState,
    rng: ChainRng,
    iteration: usize,
}

impl MultChain {
    pub fn new(spec: &ValidatedSpec, data: &DataMatrix, seed: u64, chain: u64) -> Result<Self> {
        if !spec.family.is_mult() {
            return Err(Error::InvalidInput(
                "multiplicative sampler needs a MULT family spec".into(),
            ));
        }
        check_rows(spec, data)?;
        let m = data.n_features();
        let layouts = Layouts::new(spec, m);
        let mut init = stream(seed, chain, Purpose::Initialization);
        let state = initial_state(spec, &layouts, m, data.n_samples(), &mut init);
        Ok(Self {
            spec: (**spec).clone(),
            x: data.values().clone(),
            pairs: interaction_pairs(spec.factors)?,
            layouts,
            state,
            rng: stream(seed, chain, Purpose::Sweep),
            iteration: 0,
        })
    }

    pub fn state(&self) -> &McmcState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn layouts(&self) -> &Layouts {
        &self.layouts
    }

    /// One full sweep: loadings, factor scores, interaction scores,
    /// interaction loadings, noise variances, inclusion probabilities.
    pub fn sweep(&mut self) {
        let (m, n) = self.x.shape();
        let st = &mut self.state;
        for i in 0..m {
            update_alpha_row(i, st, &self.x, &self.spec, &self.layouts.h, &mut self.rng);
        }
        let noise = CollapsedNoise::new(
            st.theta.as_ref().expect("multiplicative state"),
            &st.sigma2,
            nu_of(&self.spec),
        );
        for j in 0..n {
            update_lambda_column(j, st, &self.x, &self.spec, &self.pairs, &noise, &mut self.rng);
        }
        if self.spec.family == Family::MultApproach1 {
            for j in 0..n {
                update_eta(j, st, &self.x, &self.spec, &mut self.rng);
            }
        }
        for i in 0..m {
            update_theta_row(i, st, &self.x, &self.spec, &self.layouts.z, &mut self.rng);
        }
        for i in 0..m {
            update_sigma2(i, st, &self.x, &self.spec, &mut self.rng);
        }
        update_probabilities(st, &self.layouts, &mut self.rng);
        self.iteration += 1;
    }

    pub fn run(mut self, settings: &McmcSettings) -> Result<PosteriorDraws> {
        settings.validate()?;
        let mut states = Vec::new();
        for it in 0..settings.iters {
            self.sweep();
            if it >= settings.burn_in && (it - settings.burn_in + 1).is_multiple_of(settings.thin) {
                states.push(self.state.clone());
            }
        }
        Ok(PosteriorDraws {
            states,
            burn_in: settings.burn_in,
            thin: settings.thin,
            total_iters: settings.iters,
            acceptance: None,
        })
    }
}

pub(crate) fn check_rows(spec: &ValidatedSpec, data: &DataMatrix) -> Result<()> {
    if spec.n_features() != data.n_features() {
        return Err(Error::ShapeMismatch {
            expected: (spec.n_features(), data.n_samples()),
            found: (data.n_features(), data.n_samples()),
        });
    }
    Ok(())
}

pub fn run_mult_chain(spec: &ValidatedSpec, data: &DataMatrix, settings: &McmcSettings) -> Result<PosteriorDraws> {
    MultChain::new(spec, data, settings.seed, settings.chain)?.run(settings)
}

/// Recomputes `eta` from `lambda` for every pair; used to check the
/// exact-product identity.
pub fn product_scores(state: &McmcState) -> DMatrix<f64> {
    let pairs = interaction_pairs(state.n_factors()).expect("at least two factors");
    pair_products(&state.lambda, &pairs)
}
