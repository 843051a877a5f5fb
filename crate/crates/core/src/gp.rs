//! Metropolis-within-Gibbs sampler for `X = alpha lambda + F + e`, where the
//! rows of `F` carry a Gaussian-process prior over the factor-score columns.
//!
//! Indicator updates integrate the GP row out. Given the kernel, the row
//! posteriors are evaluated in the eigenbasis of the jittered kernel, which is
//! computed once per sweep after the factor-score moves.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gibbs::{initial_state, update_alpha_row, update_probabilities, update_sigma2, Layouts, McmcSettings};
use crate::kernel::{se_kernel, KernelMatrix, KernelSpectrum};
use crate::mult::check_rows;
use crate::rng::{stream, ChainRng, Purpose};
use crate::spec::{FPrior, ModelSpec, ValidatedSpec};
use crate::spike_slab::{inclusion_probability, InclusionLayout};
use crate::state::{AcceptanceLedger, McmcState, PosteriorDraws};

fn linear_residual(state: &McmcState, x: &DMatrix<f64>, i: usize) -> DVector<f64> {
    DVector::from_fn(x.ncols(), |j, _| x[(i, j)] - crate::gibbs::linear_at(state, i, j))
}

fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Dense posterior mean and covariance of a GP row observed as
/// `r = F_i + e`, `e ~ N(0, sigma2 I)`.
pub fn f_row_conditional(
    residual: &DVector<f64>,
    spectrum: &KernelSpectrum,
    sigma2: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let (mean, var) = spectrum.row_posterior(&spectrum.project(residual), sigma2);
    let mean = spectrum.unproject(&mean);
    let n = var.len();
    let mut cov = DMatrix::zeros(n, n);
    for k in 0..n {
        let u = spectrum.unproject(&DVector::from_fn(n, |a, _| if a == k { 1.0 } else { 0.0 }));
        cov += &u * u.transpose() * var[k];
    }
    (mean, cov)
}

/// Log odds of `z_i = 1` with the GP row integrated out.
pub fn z_log_odds(prior: f64, residual: &DVector<f64>, spectrum: &KernelSpectrum, sigma2: f64) -> f64 {
    let bf = spectrum.loglik_ratio(&spectrum.project(residual), sigma2);
    prior.ln() - (-prior).ln_1p() + bf
}

/// Indicator and GP row of feature `i` under independent row priors.
pub fn update_f_row<R: Rng + ?Sized>(
    i: usize,
    state: &mut McmcState,
    x: &DMatrix<f64>,
    spectrum: &KernelSpectrum,
    layout: &InclusionLayout,
    rng: &mut R,
) {
    let s2 = state.sigma2[i];
    let prior = layout.probability(&state.rho, i, 0);
    let r = linear_residual(state, x, i);
    let f = state.f.as_mut().expect("GP state");
    let y = spectrum.project(&r);
    let p = inclusion_probability(prior, spectrum.loglik_ratio(&y, s2));
    let inc = rng.random::<f64>() < p;
    state.z[(i, 0)] = inc;
    if inc {
        let (mean, var) = spectrum.row_posterior(&y, s2);
        let xi = standard_normals(mean.len(), rng);
        let coef = mean + var.map(f64::sqrt).component_mul(&xi);
        f.set_row(i, &spectrum.unproject(&coef).transpose());
    } else {
        f.row_mut(i).fill(0.0);
    }
}

/// Pooled statistics `(U' sum r_i/sigma2_i, sum 1/sigma2_i)` of the rows in
/// `active`, from pre-projected residuals.
fn pooled(projected: &[DVector<f64>], sigma2: &DVector<f64>, active: &[bool]) -> (DVector<f64>, f64) {
    let n = projected[0].len();
    let mut b = DVector::zeros(n);
    let mut tau = 0.0;
    for (i, y) in projected.iter().enumerate() {
        if active[i] {
            b.axpy(1.0 / sigma2[i], y, 1.0);
            tau += 1.0 / sigma2[i];
        }
    }
    (b, tau)
}

/// Shared GP row: each indicator is updated with the shared row integrated
/// out, then the shared row is drawn given the final active set.
pub fn update_f_shared<R: Rng + ?Sized>(
    state: &mut McmcState,
    x: &DMatrix<f64>,
    spectrum: &KernelSpectrum,
    layout: &InclusionLayout,
    rng: &mut R,
) {
    let m = x.nrows();
    let projected: Vec<DVector<f64>> = (0..m)
        .map(|i| spectrum.project(&linear_residual(state, x, i)))
        .collect();
    let mut active: Vec<bool> = (0..m).map(|i| state.z[(i, 0)]).collect();
    let (mut b, mut tau) = pooled(&projected, &state.sigma2, &active);
    for i in 0..m {
        let w = 1.0 / state.sigma2[i];
        if active[i] {
            b.axpy(-w, &projected[i], 1.0);
            tau -= w;
        }
        let without = spectrum.shared_log_evidence(&b, tau);
        let b_with = &b + &projected[i] * w;
        let with = spectrum.shared_log_evidence(&b_with, tau + w);
        let prior = layout.probability(&state.rho, i, 0);
        let p = inclusion_probability(prior, with - without);
        let inc = rng.random::<f64>() < p;
        active[i] = inc;
        state.z[(i, 0)] = inc;
        if inc {
            b = b_with;
            tau += w;
        }
    }
    let tau = tau.max(0.0);
    let (mean, var) = spectrum.shared_posterior(&b, tau);
    let xi = standard_normals(mean.len(), rng);
    let shared = spectrum.unproject(&(mean + var.map(f64::sqrt).component_mul(&xi)));
    let f = state.f.as_mut().expect("GP state");
    for (i, &on) in active.iter().enumerate().take(m) {
        if on {
            f.set_row(i, &shared.transpose());
        } else {
            f.row_mut(i).fill(0.0);
        }
    }
    state.f_shared = Some(shared);
}

/// GP prior log density (up to a constant) of whatever depends on the kernel.
fn gp_log_prior(state: &McmcState, kernel: &KernelMatrix, f_prior: FPrior) -> f64 {
    match f_prior {
        FPrior::PerRow => {
            let rows: Vec<usize> = (0..state.n_features()).filter(|&i| state.z[(i, 0)]).collect();
            kernel.rows_log_density(state.f.as_ref().expect("GP state"), &rows)
        }
        FPrior::Shared => {
            let shared = state.f_shared.as_ref().expect("shared GP row");
            kernel.rows_log_density(&DMatrix::from_row_slice(1, shared.len(), shared.as_slice()), &[0])
        }
    }
}

/// Log likelihood of data column `j` given scores `lam`, up to a constant.
fn column_loglik(state: &McmcState, x: &DMatrix<f64>, j: usize, lam: &DVector<f64>) -> f64 {
    let f = state.f.as_ref().expect("GP state");
    (0..x.nrows())
        .map(|i| {
            let mean: f64 = (0..lam.len()).map(|l| state.alpha[(i, l)] * lam[l]).sum::<f64>() + f[(i, j)];
            let d = x[(i, j)] - mean;
            -0.5 * d * d / state.sigma2[i]
        })
        .sum()
}

/// Random-walk Metropolis move of factor-score column `j`. Returns whether
/// the proposal was accepted; a proposal whose kernel cannot be factored is
/// rejected.
#[allow(clippy::too_many_arguments)]
pub fn update_lambda_mh<R: Rng + ?Sized>(
    j: usize,
    state: &mut McmcState,
    kernel: &mut KernelMatrix,
    x: &DMatrix<f64>,
    spec: &ModelSpec,
    rw_step: f64,
    likelihood: bool,
    rng: &mut R,
) -> bool {
    let f_prior = spec.f_prior().expect("GP spec has an F prior");
    let ls = spec.length_scale.expect("GP spec has a length scale");
    let current = state.lambda.column(j).into_owned();
    let proposal = &current + standard_normals(current.len(), rng) * rw_step;
    let mut lambda = state.lambda.clone();
    lambda.set_column(j, &proposal);
    let Ok(new_kernel) = se_kernel(&lambda, ls) else {
        return false;
    };
    let mut delta = -0.5 * (proposal.norm_squared() - current.norm_squared());
    if likelihood {
        delta += column_loglik(state, x, j, &proposal) - column_loglik(state, x, j, &current);
    }
    delta += gp_log_prior(state, &new_kernel, f_prior) - gp_log_prior(state, kernel, f_prior);
    let accept = delta >= 0.0 || rng.random::<f64>().ln() < delta;
    if accept {
        state.lambda = lambda;
        *kernel = new_kernel;
    }
    accept
}

/// Redraws the interaction inclusion probabilities.
pub fn update_z_probability<R: Rng + ?Sized>(state: &mut McmcState, layout: &InclusionLayout, rng: &mut R) {
    state.rho = layout.draw_params(&state.z, rng);
}

/// One chain of the GP sampler.
#[derive(Debug, Clone)]
pub struct GpChain {
    spec: ModelSpec,
    x: DMatrix<f64>,
    layouts: Layouts,
    state: McmcState,
    kernel: KernelMatrix,
    rng: ChainRng,
    iteration: usize,
    rw_step: f64,
    likelihood: bool,
    ledger: AcceptanceLedger,
}

impl GpChain {
    pub fn new(spec: &ValidatedSpec, data: &DataMatrix, seed: u64, chain: u64, rw_step: f64) -> Result<Self> {
        if spec.family.is_mult() {
            return Err(Error::InvalidInput("GP sampler needs a GP family spec".into()));
        }
        check_rows(spec, data)?;
        let m = data.n_features();
        let n = data.n_samples();
        let layouts = Layouts::new(spec, m);
        let mut init = stream(seed, chain, Purpose::Initialization);
        let state = initial_state(spec, &layouts, m, n, &mut init);
        let kernel = se_kernel(&state.lambda, spec.length_scale.expect("validated GP spec"))?;
        Ok(Self {
            spec: (**spec).clone(),
            x: data.values().clone(),
            layouts,
            state,
            kernel,
            rng: stream(seed, chain, Purpose::Sweep),
            iteration: 0,
            rw_step,
            likelihood: true,
            ledger: AcceptanceLedger::new(n, rw_step),
        })
    }

    /// Drops the data term from the factor-score moves (prior-recovery checks).
    pub fn without_likelihood(mut self) -> Self {
        self.likelihood = false;
        self
    }

    pub fn state(&self) -> &McmcState {
        &self.state
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn rw_step(&self) -> f64 {
        self.rw_step
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn ledger(&self) -> &AcceptanceLedger {
        &self.ledger
    }

    /// One sweep; returns which factor-score columns accepted their move.
    pub fn sweep(&mut self) -> Vec<bool> {
        let (m, n) = self.x.shape();
        let st = &mut self.state;
        if self.likelihood {
            for i in 0..m {
                update_alpha_row(i, st, &self.x, &self.spec, &self.layouts.h, &mut self.rng);
            }
        }
        let mut accepted = Vec::with_capacity(n);
        for j in 0..n {
            accepted.push(update_lambda_mh(
                j,
                st,
                &mut self.kernel,
                &self.x,
                &self.spec,
                self.rw_step,
                self.likelihood,
                &mut self.rng,
            ));
        }
        if self.likelihood {
            let spectrum = self.kernel.spectrum();
            match self.spec.f_prior() {
                Some(FPrior::Shared) => update_f_shared(st, &self.x, &spectrum, &self.layouts.z, &mut self.rng),
                _ => {
                    for i in 0..m {
                        update_f_row(i, st, &self.x, &spectrum, &self.layouts.z, &mut self.rng);
                    }
                }
            }
            for i in 0..m {
                update_sigma2(i, st, &self.x, &self.spec, &mut self.rng);
            }
            update_probabilities(st, &self.layouts, &mut self.rng);
        }
        self.iteration += 1;
        accepted
    }

    pub fn run(mut self, settings: &McmcSettings) -> Result<PosteriorDraws> {
        settings.validate()?;
        let n = self.x.ncols();
        let mut states = Vec::new();
        for it in 0..settings.iters {
            let accepted = self.sweep();
            let count = accepted.iter().filter(|&&a| a).count();
            if it < settings.burn_in {
                self.ledger.burn_in_accepted += count as u64;
                self.ledger.burn_in_proposed += n as u64;
                if settings.adapt && self.rw_step > 0.0 {
                    let rate = count as f64 / n as f64;
                    let gain = (10.0 / (it + 10) as f64).powf(0.6);
                    self.rw_step *= (gain * (rate - settings.target_accept)).exp();
                }
            } else {
                for (j, &a) in accepted.iter().enumerate() {
                    self.ledger.proposed[j] += 1;
                    self.ledger.accepted[j] += a as u64;
                }
                if (it - settings.burn_in + 1).is_multiple_of(settings.thin) {
                    states.push(self.state.clone());
                }
            }
        }
        self.ledger.final_step = self.rw_step;
        Ok(PosteriorDraws {
            states,
            burn_in: settings.burn_in,
            thin: settings.thin,
            total_iters: settings.iters,
            acceptance: Some(self.ledger),
        })
    }
}

pub fn run_gp_chain(spec: &ValidatedSpec, data: &DataMatrix, settings: &McmcSettings) -> Result<PosteriorDraws> {
    GpChain::new(spec, data, settings.seed, settings.chain, settings.rw_step)?.run(settings)
}
