//! Sampler state and retained posterior draws.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One full set of latent quantities at a sampler iteration.
///
/// `theta`/`eta` are present for the multiplicative families, `f` for the GP
/// family, and `f_shared` only under the shared-`F` prior. `z` is `m x T`
/// for the multiplicative families and `m x 1` for the GP family.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcState {
    pub alpha: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub theta: Option<DMatrix<f64>>,
    pub eta: Option<DMatrix<f64>>,
    pub f: Option<DMatrix<f64>>,
    pub f_shared: Option<DVector<f64>>,
    pub sigma2: DVector<f64>,
    pub h: DMatrix<bool>,
    pub z: DMatrix<bool>,
    /// Free `q` parameters, laid out by the loading inclusion layout.
    pub q: Vec<f64>,
    /// Free `rho` parameters, laid out by the interaction inclusion layout.
    pub rho: Vec<f64>,
}

impl McmcState {
    pub fn n_features(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.lambda.ncols()
    }

    /// Whether feature `i` carries any interaction effect in this state.
    pub fn interacts(&self, i: usize) -> bool {
        self.z.row(i).iter().any(|&b| b)
    }

    /// The interaction contribution `theta * eta` or `F`, as an `m x n` matrix.
    pub fn interaction_effect(&self) -> DMatrix<f64> {
        match (&self.theta, &self.eta, &self.f) {
            (Some(theta), Some(eta), _) => theta * eta,
            (_, _, Some(f)) => f.clone(),
            _ => DMatrix::zeros(self.n_features(), self.n_samples()),
        }
    }

    /// Checks the structural invariants tying values to their indicators.
    pub fn sparsity_consistent(&self) -> bool {
        let alpha_ok = self.alpha.iter().zip(self.h.iter()).all(|(&a, &h)| (a != 0.0) == h);
        let theta_ok = match &self.theta {
            Some(theta) => theta.iter().zip(self.z.iter()).all(|(&t, &z)| (t != 0.0) == z),
            None => true,
        };
        let f_ok = match &self.f {
            Some(f) => (0..f.nrows()).all(|i| f.row(i).iter().all(|&v| v == 0.0) != self.z[(i, 0)]),
            None => true,
        };
        alpha_ok && theta_ok && f_ok
    }
}

/// Accept/propose tallies of the per-column random-walk updates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceLedger {
    /// Post-burn-in accepted proposals per column.
    pub accepted: Vec<u64>,
    /// Post-burn-in proposals per column.
    pub proposed: Vec<u64>,
    pub burn_in_accepted: u64,
    pub burn_in_proposed: u64,
    /// Proposal scale in force after burn-in.
    pub final_step: f64,
}

impl AcceptanceLedger {
    pub fn new(columns: usize, step: f64) -> Self {
        Self {
            accepted: vec![0; columns],
            proposed: vec![0; columns],
            burn_in_accepted: 0,
            burn_in_proposed: 0,
            final_step: step,
        }
    }

    pub fn rate(&self) -> f64 {
        let p: u64 = self.proposed.iter().sum();
        if p == 0 {
            return f64::NAN;
        }
        self.accepted.iter().sum::<u64>() as f64 / p as f64
    }

    pub fn column_rate(&self, j: usize) -> f64 {
        self.accepted[j] as f64 / self.proposed[j].max(1) as f64
    }
}

/// Retained post-burn-in states of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub states: Vec<McmcState>,
    pub burn_in: usize,
    pub thin: usize,
    pub total_iters: usize,
    pub acceptance: Option<AcceptanceLedger>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Element-wise posterior mean of a matrix-valued quantity.
    pub fn mean_of<F>(&self, get: F) -> DMatrix<f64>
    where
        F: Fn(&McmcState) -> DMatrix<f64>,
    {
        let mut iter = self.states.iter();
        let first = get(iter.next().expect("no retained states"));
        let mut acc = first;
        for s in iter {
            acc += get(s);
        }
        acc / self.states.len() as f64
    }

    pub fn mean_alpha(&self) -> DMatrix<f64> {
        self.mean_of(|s| s.alpha.clone())
    }

    pub fn mean_lambda(&self) -> DMatrix<f64> {
        self.mean_of(|s| s.lambda.clone())
    }

    pub fn mean_interaction(&self) -> DMatrix<f64> {
        self.mean_of(McmcState::interaction_effect)
    }

    /// Posterior probability that each feature carries an interaction effect.
    pub fn interaction_probabilities(&self) -> Vec<f64> {
        let m = self.states[0].n_features();
        let mut counts = vec![0usize; m];
        for s in &self.states {
            for (i, c) in counts.iter_mut().enumerate() {
                if s.interacts(i) {
                    *c += 1;
                }
            }
        }
        counts
            .into_iter()
            .map(|c| c as f64 / self.states.len() as f64)
            .collect()
    }

    /// Posterior inclusion probabilities of the linear loadings, `m x L`.
    pub fn loading_probabilities(&self) -> DMatrix<f64> {
        self.mean_of(|s| s.h.map(|b| if b { 1.0 } else { 0.0 }))
    }

    /// Keeps every `factor`-th retained state.
    pub fn thinned(&self, factor: usize) -> PosteriorDraws {
        let factor = factor.max(1);
        PosteriorDraws {
            states: self.states.iter().step_by(factor).cloned().collect(),
            burn_in: self.burn_in,
            thin: self.thin * factor,
            total_iters: self.total_iters,
            acceptance: self.acceptance.clone(),
        }
    }
}

/// Number of states kept by a run of `iters` sweeps.
pub fn retained_count(iters: usize, burn_in: usize, thin: usize) -> usize {
    iters.saturating_sub(burn_in) / thin.max(1)
}
