//! Updates shared by the multiplicative and GP samplers: chain settings,
//! initialization, linear loadings, noise variances and inclusion
//! probabilities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::spec::{interaction_pairs, FPrior, InvGammaPrior, ModelSpec};
use crate::spike_slab::{draw_spike_slab, slab_posterior_from_moments, InclusionLayout};
use crate::state::McmcState;

#[derive(Debug, Clone, PartialEq)]
pub struct McmcSettings {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chain: u64,
    /// Initial random-walk scale of the GP factor-score proposals.
    pub rw_step: f64,
    /// Adapt the random-walk scale during burn-in.
    pub adapt: bool,
    pub target_accept: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            iters: 600,
            burn_in: 300,
            thin: 1,
            seed: 0,
            chain: 0,
            rw_step: 0.1,
            adapt: true,
            target_accept: 0.3,
        }
    }
}

impl McmcSettings {
    pub fn new(iters: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            iters,
            burn_in,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iters {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iters ({})",
                self.burn_in, self.iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.rw_step >= 0.0) || !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("rw_step must be >= 0 and target_accept in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Inclusion layouts of the loading (`h`) and interaction (`z`) indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct Layouts {
    pub h: InclusionLayout,
    pub z: InclusionLayout,
}

impl Layouts {
    pub fn new(spec: &ModelSpec, n_features: usize) -> Self {
        Self {
            h: InclusionLayout::for_loadings(spec, n_features),
            z: InclusionLayout::for_interactions(spec, n_features),
        }
    }
}

/// Pairwise products of factor-score rows, one row per interaction pair.
pub fn pair_products(lambda: &DMatrix<f64>, pairs: &[(usize, usize)]) -> DMatrix<f64> {
    DMatrix::from_fn(pairs.len(), lambda.ncols(), |t, j| {
        let (a, b) = pairs[t];
        lambda[(a, j)] * lambda[(b, j)]
    })
}

/// Starting state: zero loadings and interaction effects, unit noise
/// variances, standard normal factor scores, indicators drawn from their
/// prior means.
pub fn initial_state<R: Rng + ?Sized>(
    spec: &ModelSpec,
    layouts: &Layouts,
    n_features: usize,
    n_samples: usize,
    rng: &mut R,
) -> McmcState {
    let l = spec.factors;
    let lambda = DMatrix::from_fn(l, n_samples, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = layouts.h.initial_params();
    let h = layouts.h.initial_indicators(&q, rng);
    let rho = layouts.z.initial_params();
    let z = layouts.z.initial_indicators(&rho, rng);
    let (theta, eta, f, f_shared) = if spec.family.is_mult() {
        let pairs = interaction_pairs(l).expect("validated factor count");
        let eta = pair_products(&lambda, &pairs);
        (Some(DMatrix::zeros(n_features, pairs.len())), Some(eta), None, None)
    } else {
        let shared = (spec.f_prior() == Some(FPrior::Shared)).then(|| DVector::zeros(n_samples));
        (None, None, Some(DMatrix::zeros(n_features, n_samples)), shared)
    };
    McmcState {
        alpha: DMatrix::zeros(n_features, l),
        lambda,
        theta,
        eta,
        f,
        f_shared,
        sigma2: DVector::from_element(n_features, 1.0),
        h,
        z,
        q,
        rho,
    }
}

/// Interaction contribution of feature `i` at sample `j`.
pub(crate) fn interaction_at(state: &McmcState, i: usize, j: usize) -> f64 {
    match (&state.theta, &state.eta, &state.f) {
        (Some(theta), Some(eta), _) => (0..theta.ncols()).map(|t| theta[(i, t)] * eta[(t, j)]).sum(),
        (_, _, Some(f)) => f[(i, j)],
        _ => 0.0,
    }
}

pub(crate) fn linear_at(state: &McmcState, i: usize, j: usize) -> f64 {
    (0..state.n_factors())
        .map(|l| state.alpha[(i, l)] * state.lambda[(l, j)])
        .sum()
}

/// `X_i - alpha_i lambda - interaction_i`.
pub fn full_residual(state: &McmcState, x: &DMatrix<f64>, i: usize) -> DVector<f64> {
    DVector::from_fn(x.ncols(), |j, _| {
        x[(i, j)] - linear_at(state, i, j) - interaction_at(state, i, j)
    })
}

/// Spike-and-slab update of the loadings of feature `i`, one factor at a time.
pub fn update_alpha_row<R: Rng + ?Sized>(
    i: usize,
    state: &mut McmcState,
    x: &DMatrix<f64>,
    spec: &ModelSpec,
    layout: &InclusionLayout,
    rng: &mut R,
) {
    let n = x.ncols();
    let mut r = full_residual(state, x, i);
    let s2 = state.sigma2[i];
    for l in 0..state.n_factors() {
        let old = state.alpha[(i, l)];
        let mut sxx = 0.0;
        let mut sxr = 0.0;
        for j in 0..n {
            let lam = state.lambda[(l, j)];
            r[j] += old * lam;
            sxx += lam * lam;
            sxr += lam * r[j];
        }
        let post = slab_posterior_from_moments(sxx, sxr, s2, spec.omega_alpha);
        let prior = layout.probability(&state.q, i, l);
        let (inc, value) = draw_spike_slab(&post, prior, rng);
        state.h[(i, l)] = inc;
        state.alpha[(i, l)] = value;
        for j in 0..n {
            r[j] -= value * state.lambda[(l, j)];
        }
    }
}

/// Conjugate inverse-gamma conditional of one noise variance.
pub fn sigma2_posterior(prior: InvGammaPrior, rss: f64, n: usize) -> InvGammaPrior {
    InvGammaPrior {
        shape: prior.shape + 0.5 * n as f64,
        scale: prior.scale + 0.5 * rss,
    }
}

pub fn draw_inv_gamma<R: Rng + ?Sized>(p: InvGammaPrior, rng: &mut R) -> f64 {
    let g = Gamma::new(p.shape, 1.0 / p.scale).expect("positive inverse-gamma parameters");
    1.0 / g.sample(rng)
}

pub fn update_sigma2<R: Rng + ?Sized>(
    i: usize,
    state: &mut McmcState,
    x: &DMatrix<f64>,
    spec: &ModelSpec,
    rng: &mut R,
) {
    let rss = full_residual(state, x, i).norm_squared();
    let post = sigma2_posterior(spec.sigma2_prior, rss, x.ncols());
    state.sigma2[i] = draw_inv_gamma(post, rng);
}

/// Redraws the free `q` and `rho` parameters from their Beta conditionals.
pub fn update_probabilities<R: Rng + ?Sized>(state: &mut McmcState, layouts: &Layouts, rng: &mut R) {
    state.q = layouts.h.draw_params(&state.h, rng);
    state.rho = layouts.z.draw_params(&state.z, rng);
}
