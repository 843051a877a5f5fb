//! Squared-exponential covariance over factor-score columns.
//!
//! `K_{ab} = exp(-|lambda_a - lambda_b|^2 / (2 l_s^2))`, unit amplitude. The
//! Cholesky factor is taken of `K + jitter I`, with the jitter escalated by
//! decades from `1e-10` to `1e-4` times the mean diagonal until it succeeds.
//! All GP densities in the samplers use this jittered covariance.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    k: DMatrix<f64>,
    length_scale: f64,
    jitter: f64,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl PartialEq for KernelMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.length_scale == other.length_scale
            && self.jitter == other.jitter
            && self.chol.l_dirty() == other.chol.l_dirty()
    }
}

/// Builds the SE kernel over the columns of `lambda` (`L x n`).
pub fn se_kernel(lambda: &DMatrix<f64>, length_scale: f64) -> Result<KernelMatrix> {
    if !(length_scale > 0.0) {
        return Err(Error::InvalidInput(format!(
            "length scale must be positive, got {length_scale}"
        )));
    }
    let n = lambda.ncols();
    let denom = 2.0 * length_scale * length_scale;
    let mut k = DMatrix::identity(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let d2: f64 = lambda
                .column(a)
                .iter()
                .zip(lambda.column(b).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let v = (-d2 / denom).exp();
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    KernelMatrix::with_length_scale(k, length_scale)
}

impl KernelMatrix {
    /// Wraps an explicit symmetric covariance, applying the jitter policy.
    pub fn from_matrix(k: DMatrix<f64>) -> Result<Self> {
        Self::with_length_scale(k, f64::NAN)
    }

    fn with_length_scale(k: DMatrix<f64>, length_scale: f64) -> Result<Self> {
        let n = k.nrows();
        if n == 0 || k.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: (n, n),
                found: k.shape(),
            });
        }
        let scale = k.trace() / n as f64;
        let mut jitter = JITTER_START * scale;
        loop {
            let mut shifted = k.clone();
            for d in 0..n {
                shifted[(d, d)] += jitter;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Ok(Self {
                    k,
                    length_scale,
                    jitter,
                    chol,
                });
            }
            if jitter >= JITTER_MAX * scale * (1.0 - 1e-9) {
                return Err(Error::CholeskyFailure { jitter });
            }
            jitter *= 10.0;
        }
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor of `K + jitter I`.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `K + jitter I`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut c = self.k.clone();
        for d in 0..self.n() {
            c[(d, d)] += self.jitter;
        }
        c
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// `|L^{-1} v|^2 = v' (K + jitter I)^{-1} v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("cholesky factor has a positive diagonal");
        w.norm_squared()
    }

    /// `log N(v; 0, K + jitter I)`.
    pub fn log_density(&self, v: &DVector<f64>) -> f64 {
        -0.5 * self.quad_form(v) - 0.5 * self.log_det() - 0.5 * self.n() as f64 * (2.0 * PI).ln()
    }

    /// Sum of `log N(row; 0, K + jitter I)` over the given rows of `f`,
    /// dropping the `2 pi` constant.
    pub fn rows_log_density(&self, f: &DMatrix<f64>, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let n = self.n();
        let mut rhs = DMatrix::zeros(n, rows.len());
        for (c, &i) in rows.iter().enumerate() {
            for j in 0..n {
                rhs[(j, c)] = f[(i, j)];
            }
        }
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&rhs)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * w.norm_squared() - 0.5 * rows.len() as f64 * self.log_det()
    }

    /// Eigen decomposition of `K + jitter I`, used for the per-row updates.
    pub fn spectrum(&self) -> KernelSpectrum {
        let eig = SymmetricEigen::new(self.covariance());
        let values = eig.eigenvalues.map(|v| v.max(0.0));
        KernelSpectrum {
            vectors: eig.eigenvectors,
            values,
        }
    }
}

/// `log N(r; 0, K + s2 I) - log N(r; 0, s2 I)`: the log Bayes factor of a GP
/// interaction row against a zero row, with the GP row integrated out.
pub fn gp_marginal_loglik_ratio(residual: &DVector<f64>, kernel: &KernelMatrix, sigma2: f64) -> Result<f64> {
    let n = kernel.n();
    if residual.len() != n {
        return Err(Error::ShapeMismatch {
            expected: (n, 1),
            found: (residual.len(), 1),
        });
    }
    let mut a = kernel.covariance();
    for d in 0..n {
        a[(d, d)] += sigma2;
    }
    let chol = Cholesky::new(a).ok_or(Error::CholeskyFailure {
        jitter: kernel.jitter(),
    })?;
    let l = chol.l_dirty();
    let w = l
        .solve_lower_triangular(residual)
        .expect("cholesky factor has a positive diagonal");
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * w.norm_squared() - 0.5 * log_det + 0.5 * residual.norm_squared() / sigma2 + 0.5 * n as f64 * sigma2.ln())
}

/// `K + jitter I = U diag(s) U'`.
///
/// In the eigenbasis the GP row posterior decouples into independent scalar
/// problems, so each row update costs `O(n^2)` once the spectrum is known.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl KernelSpectrum {
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// `U' r`.
    pub fn project(&self, r: &DVector<f64>) -> DVector<f64> {
        self.vectors.tr_mul(r)
    }

    /// `U c`.
    pub fn unproject(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.vectors * c
    }

    /// Same quantity as [`gp_marginal_loglik_ratio`], from projected residuals.
    pub fn loglik_ratio(&self, projected: &DVector<f64>, sigma2: f64) -> f64 {
        self.values
            .iter()
            .zip(projected.iter())
            .map(|(&s, &y)| -0.5 * (s / sigma2).ln_1p() + 0.5 * y * y * s / (sigma2 * (s + sigma2)))
            .sum()
    }

    /// Posterior mean and variance coefficients (in the eigenbasis) of a GP
    /// row observed with noise `sigma2`: mean `s/(s+sigma2) y`, variance
    /// `s sigma2/(s+sigma2)`.
    pub fn row_posterior(&self, projected: &DVector<f64>, sigma2: f64) -> (DVector<f64>, DVector<f64>) {
        let mean = DVector::from_fn(self.values.len(), |k, _| {
            let s = self.values[k];
            s / (s + sigma2) * projected[k]
        });
        let var = self.values.map(|s| s * sigma2 / (s + sigma2));
        (mean, var)
    }

    /// Posterior of a shared GP row observed by several rows with total
    /// precision `tau = sum 1/sigma2_i` and projected weighted sum
    /// `b = U' sum r_i / sigma2_i`: mean `s b/(1 + s tau)`, variance
    /// `s/(1 + s tau)`.
    pub fn shared_posterior(&self, b: &DVector<f64>, tau: f64) -> (DVector<f64>, DVector<f64>) {
        let var = self.values.map(|s| s / (1.0 + s * tau));
        let mean = var.component_mul(b);
        (mean, var)
    }

    /// Log marginal likelihood of a shared GP row, relative to all rows being
    /// zero, given the pooled statistics `(b, tau)`.
    pub fn shared_log_evidence(&self, b: &DVector<f64>, tau: f64) -> f64 {
        self.values
            .iter()
            .zip(b.iter())
            .map(|(&s, &bk)| -0.5 * (s * tau).ln_1p() + 0.5 * s * bk * bk / (1.0 + s * tau))
            .sum()
    }
}
