//! Spike-and-slab conditionals and Beta-Bernoulli inclusion probabilities.
//!
//! Every indicator (`h` for loadings, `z` for interactions) is tied to a
//! probability through an [`InclusionLayout`], which resolves the prior
//! strategy and any fixed seed assumptions into a flat parameter vector.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::spec::{BetaPrior, HPriorStrategy, ModelSpec, PriorTable, ZPriorStrategy};

/// Gaussian slab conditional of one coefficient plus the slab/spike log
/// Bayes factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabPosterior {
    pub mean: f64,
    pub var: f64,
    pub log_bayes_factor: f64,
}

/// Conditional of `b` in `r_j = b x_j + e_j`, `e_j ~ N(0, noise_var)`, under
/// the slab `b ~ N(0, slab_var)`.
pub fn slab_posterior<I>(pairs: I, noise_var: f64, slab_var: f64) -> SlabPosterior
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (sxx, sxr) = pairs
        .into_iter()
        .fold((0.0, 0.0), |(sxx, sxr), (x, r)| (sxx + x * x, sxr + x * r));
    slab_posterior_from_moments(sxx, sxr, noise_var, slab_var)
}

pub fn slab_posterior_from_moments(sxx: f64, sxr: f64, noise_var: f64, slab_var: f64) -> SlabPosterior {
    let var = 1.0 / (1.0 / slab_var + sxx / noise_var);
    let mean = var * sxr / noise_var;
    let log_bayes_factor = 0.5 * (var / slab_var).ln() + 0.5 * mean * mean / var;
    SlabPosterior {
        mean,
        var,
        log_bayes_factor,
    }
}

/// `1 / (1 + exp(-x))` without overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Posterior probability of the slab given prior probability `prior` and the
/// log Bayes factor. Degenerate priors stay degenerate.
pub fn inclusion_probability(prior: f64, log_bayes_factor: f64) -> f64 {
    if prior <= 0.0 {
        return 0.0;
    }
    if prior >= 1.0 {
        return 1.0;
    }
    let log_odds = prior.ln() - (-prior).ln_1p() + log_bayes_factor;
    logistic(log_odds)
}

/// Draws the indicator and coefficient; the coefficient is exactly zero
/// whenever the spike is selected.
pub fn draw_spike_slab<R: Rng + ?Sized>(post: &SlabPosterior, prior: f64, rng: &mut R) -> (bool, f64) {
    let p = inclusion_probability(prior, post.log_bayes_factor);
    let u: f64 = rng.random();
    if u < p {
        let v = Normal::new(post.mean, post.var.sqrt())
            .expect("slab variance is positive")
            .sample(rng);
        (true, v)
    } else {
        (false, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Fixed(bool),
    Free(usize),
}

/// Maps each indicator entry `(i, c)` to either a fixed value or one of the
/// free probability parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionLayout {
    rows: usize,
    cols: usize,
    slots: Vec<Slot>,
    priors: Vec<BetaPrior>,
}

impl InclusionLayout {
    /// Layout of the loading indicators `h` (`m x L`).
    pub fn for_loadings(spec: &ModelSpec, n_features: usize) -> Self {
        let cols = spec.factors;
        let mut slots = Vec::with_capacity(n_features * cols);
        let mut priors = Vec::new();
        if spec.h_prior_strategy == HPriorStrategy::Grouped {
            priors.extend((0..3).map(|g| group_prior(&spec.gamma, g)));
        }
        for i in 0..n_features {
            for l in 0..cols {
                if let Some(&v) = spec.degenerate_q.get(&(i, l)) {
                    slots.push(Slot::Fixed(v));
                    continue;
                }
                let slot = match spec.h_prior_strategy {
                    HPriorStrategy::PerEntry => {
                        priors.push(spec.gamma.entry(i, l));
                        priors.len() - 1
                    }
                    HPriorStrategy::Grouped => spec.h_group(i, l),
                };
                slots.push(Slot::Free(slot));
            }
        }
        Self {
            rows: n_features,
            cols,
            slots,
            priors,
        }
    }

    /// Layout of the interaction indicators `z` (`m x T`, or `m x 1` for GP).
    pub fn for_interactions(spec: &ModelSpec, n_features: usize) -> Self {
        let cols = if spec.family.is_mult() { spec.pair_count() } else { 1 };
        let mut slots = Vec::with_capacity(n_features * cols);
        let mut priors = Vec::new();
        match spec.z_prior_strategy {
            ZPriorStrategy::Global => priors.push(spec.beta.default),
            ZPriorStrategy::Grouped => priors.extend((0..2).map(|g| group_prior(&spec.beta, g))),
            ZPriorStrategy::PerFeature => {}
        }
        for i in 0..n_features {
            for c in 0..cols {
                if let Some(&v) = spec.degenerate_rho.get(&i) {
                    slots.push(Slot::Fixed(v));
                    continue;
                }
                let slot = match spec.z_prior_strategy {
                    ZPriorStrategy::PerFeature => {
                        priors.push(spec.beta.entry(i, c));
                        priors.len() - 1
                    }
                    ZPriorStrategy::Global => 0,
                    ZPriorStrategy::Grouped => spec.z_group(i),
                };
                slots.push(Slot::Free(slot));
            }
        }
        Self {
            rows: n_features,
            cols,
            slots,
            priors,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn n_params(&self) -> usize {
        self.priors.len()
    }

    pub fn priors(&self) -> &[BetaPrior] {
        &self.priors
    }

    pub fn slot(&self, i: usize, c: usize) -> Slot {
        self.slots[i * self.cols + c]
    }

    /// Prior inclusion probability of entry `(i, c)` given the free parameters.
    pub fn probability(&self, params: &[f64], i: usize, c: usize) -> f64 {
        match self.slot(i, c) {
            Slot::Fixed(v) => f64::from(u8::from(v)),
            Slot::Free(p) => params[p],
        }
    }

    pub fn initial_params(&self) -> Vec<f64> {
        self.priors.iter().map(BetaPrior::mean).collect()
    }

    /// Conjugate Beta posterior of every free parameter given the indicators.
    /// Parameters without any free entry keep their prior.
    pub fn posterior_params(&self, indicators: &DMatrix<bool>) -> Vec<BetaPrior> {
        let mut ones = vec![0.0; self.priors.len()];
        let mut totals = vec![0.0; self.priors.len()];
        for i in 0..self.rows {
            for c in 0..self.cols {
                if let Slot::Free(p) = self.slot(i, c) {
                    totals[p] += 1.0;
                    if indicators[(i, c)] {
                        ones[p] += 1.0;
                    }
                }
            }
        }
        self.priors
            .iter()
            .zip(ones.iter().zip(&totals))
            .map(|(prior, (&k, &t))| BetaPrior::new(prior.a + k, prior.b + t - k))
            .collect()
    }

    pub fn draw_params<R: Rng + ?Sized>(&self, indicators: &DMatrix<bool>, rng: &mut R) -> Vec<f64> {
        self.posterior_params(indicators)
            .into_iter()
            .map(|p| Beta::new(p.a, p.b).expect("Beta parameters are positive").sample(rng))
            .collect()
    }

    /// Initial indicators: fixed entries take their value, free entries are
    /// drawn from Bernoulli(initial probability).
    pub fn initial_indicators<R: Rng + ?Sized>(&self, params: &[f64], rng: &mut R) -> DMatrix<bool> {
        DMatrix::from_fn(self.rows, self.cols, |i, c| match self.slot(i, c) {
            Slot::Fixed(v) => v,
            Slot::Free(p) => rng.random::<f64>() < params[p],
        })
    }
}

fn group_prior(table: &PriorTable, group: usize) -> BetaPrior {
    table.groups.get(group).copied().unwrap_or(table.default)
}
