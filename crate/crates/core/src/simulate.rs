//! Synthetic saddle-interaction data, factor alignment, AAD and surface export.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize_rows, DataMatrix};
use crate::error::{Error, Result};
use crate::gibbs::McmcSettings;
use crate::gp::run_gp_chain;
use crate::mult::run_mult_chain;
use crate::rng::{stream, Purpose};
use crate::spec::ValidatedSpec;
use crate::state::PosteriorDraws;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaddleConfig {
    pub m: usize,
    pub n: usize,
    pub frac_affected: f64,
    pub noise_scale: f64,
    pub seed: u64,
    /// Fraction of features in each of the two seed groups.
    pub seed_fraction: f64,
    /// Adds a third, unmodelled factor loading on half of the non-seed rows.
    pub hidden_factor: bool,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        Self {
            m: 100,
            n: 100,
            frac_affected: 0.1,
            noise_scale: 1.0,
            seed: 0,
            seed_fraction: 0.1,
            hidden_factor: false,
        }
    }
}

/// Ground truth on the standardized scale of the generated data.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub alpha_true: DMatrix<f64>,
    pub lambda_true: DMatrix<f64>,
    pub f_true: DMatrix<f64>,
    pub sigma2_true: DVector<f64>,
    /// Sorted indices of features with a nonzero interaction row.
    pub affected_set: Vec<usize>,
    pub seed_groups: Vec<Vec<usize>>,
}

impl SyntheticTruth {
    pub fn is_affected(&self, i: usize) -> bool {
        self.affected_set.binary_search(&i).is_ok()
    }
}

pub fn generate_saddle_dataset(
    m: usize,
    n: usize,
    frac_affected: f64,
    noise_scale: f64,
    seed: u64,
) -> Result<(DataMatrix, SyntheticTruth)> {
    generate(&SaddleConfig {
        m,
        n,
        frac_affected,
        noise_scale,
        seed,
        ..SaddleConfig::default()
    })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Two seed groups load on one factor each with a common sign; the
/// remaining rows load on each factor with probability one half, and a
/// `frac_affected` share of them carry `c lambda_1 lambda_2`.
pub fn generate(cfg: &SaddleConfig) -> Result<(DataMatrix, SyntheticTruth)> {
    if !(0.0..1.0).contains(&cfg.frac_affected) {
        return Err(Error::InvalidFraction(cfg.frac_affected));
    }
    if cfg.m < 10 || cfg.n < 10 {
        return Err(Error::InvalidInput(format!(
            "saddle data needs m >= 10 and n >= 10, got {}x{}",
            cfg.m, cfg.n
        )));
    }
    if !(cfg.noise_scale > 0.0) || !(cfg.seed_fraction > 0.0 && cfg.seed_fraction < 0.5) {
        return Err(Error::InvalidInput(
            "noise_scale must be positive and seed_fraction in (0, 0.5)".into(),
        ));
    }
    let (m, n) = (cfg.m, cfg.n);
    let mut rng = stream(cfg.seed, 0, Purpose::Simulation);
    let lambda = DMatrix::from_fn(2, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g = ((m as f64 * cfg.seed_fraction).round() as usize).max(2);
    let seed_groups = vec![(0..g).collect::<Vec<_>>(), (g..2 * g).collect::<Vec<_>>()];
    let others: Vec<usize> = (2 * g..m).collect();

    let mut alpha = DMatrix::zeros(m, 2);
    for (l, group) in seed_groups.iter().enumerate() {
        let sign = random_sign(&mut rng);
        for &i in group {
            alpha[(i, l)] = sign * uniform(&mut rng, 0.8, 1.6);
        }
    }
    for &i in &others {
        for l in 0..2 {
            if rng.random::<bool>() {
                alpha[(i, l)] = random_sign(&mut rng) * uniform(&mut rng, 0.5, 1.5);
            }
        }
    }

    let k = (frac_affected_count(others.len(), cfg.frac_affected)).min(others.len());
    let mut affected: Vec<usize> = sample(&mut rng, others.len(), k)
        .into_iter()
        .map(|a| others[a])
        .collect();
    affected.sort_unstable();
    let product = DVector::from_fn(n, |j, _| lambda[(0, j)] * lambda[(1, j)]);
    let mut f = DMatrix::zeros(m, n);
    for &i in &affected {
        let c = random_sign(&mut rng) * uniform(&mut rng, 1.5, 2.5);
        f.set_row(i, &(&product * c).transpose());
    }

    let mut raw = &alpha * &lambda + &f;
    if cfg.hidden_factor {
        let extra = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        for &i in &others {
            if rng.random::<bool>() {
                let a = random_sign(&mut rng) * uniform(&mut rng, 0.8, 1.6);
                for j in 0..n {
                    raw[(i, j)] += a * extra[j];
                }
            }
        }
    }
    for v in raw.iter_mut() {
        *v += cfg.noise_scale * rng.sample::<f64, _>(StandardNormal);
    }
    let feature_ids = (0..m).map(|i| format!("f{i}")).collect();
    let sample_ids = (0..n).map(|j| format!("s{j}")).collect();
    let (data, scaling) = standardize_rows(&DataMatrix::new(raw, feature_ids, sample_ids)?)?;
    let mut sigma2 = DVector::from_element(m, cfg.noise_scale * cfg.noise_scale);
    for i in 0..m {
        let sd = scaling.sds[i];
        for l in 0..2 {
            alpha[(i, l)] /= sd;
        }
        for j in 0..n {
            f[(i, j)] /= sd;
        }
        sigma2[i] /= sd * sd;
    }
    Ok((
        data,
        SyntheticTruth {
            alpha_true: alpha,
            lambda_true: lambda,
            f_true: f,
            sigma2_true: sigma2,
            affected_set: affected,
            seed_groups,
        },
    ))
}

fn frac_affected_count(pool: usize, frac: f64) -> usize {
    (pool as f64 * frac).round() as usize
}

/// Mean absolute difference over all entries.
pub fn aad(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            expected: truth.shape(),
            found: estimate.shape(),
        });
    }
    if estimate.is_empty() {
        return Ok(0.0);
    }
    Ok((estimate - truth).abs().sum() / estimate.len() as f64)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Matching of estimated factors to true factors: estimated row `perm[k]`
/// times `signs[k]` corresponds to true factor `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
    pub correlations: Vec<f64>,
}

/// Greedy matching by largest absolute correlation of factor-score rows.
pub fn align_factors(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Alignment {
    let k = truth.nrows().min(estimate.nrows());
    let row = |mat: &DMatrix<f64>, r: usize| mat.row(r).iter().copied().collect::<Vec<_>>();
    let mut pairs = Vec::new();
    for t in 0..truth.nrows() {
        for e in 0..estimate.nrows() {
            pairs.push((correlation(&row(estimate, e), &row(truth, t)), t, e));
        }
    }
    pairs.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    let mut perm = vec![usize::MAX; truth.nrows()];
    let mut signs = vec![1.0; truth.nrows()];
    let mut correlations = vec![0.0; truth.nrows()];
    let mut used = vec![false; estimate.nrows()];
    let mut matched = 0;
    for (c, t, e) in pairs {
        if matched == k {
            break;
        }
        if perm[t] != usize::MAX || used[e] {
            continue;
        }
        perm[t] = e;
        signs[t] = if c < 0.0 { -1.0 } else { 1.0 };
        correlations[t] = c.abs();
        used[e] = true;
        matched += 1;
    }
    Alignment {
        perm,
        signs,
        correlations,
    }
}

impl Alignment {
    /// Factor scores (`L x n`) reordered and sign-flipped onto the truth.
    pub fn apply_rows(&self, lambda: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.perm.len(), lambda.ncols(), |t, j| {
            self.signs[t] * lambda[(self.perm[t], j)]
        })
    }

    /// Loadings (`m x L`) reordered and sign-flipped onto the truth.
    pub fn apply_cols(&self, alpha: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(alpha.nrows(), self.perm.len(), |i, t| {
            self.signs[t] * alpha[(i, self.perm[t])]
        })
    }
}

/// Sample points of an interaction surface plus an interpolated grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub points: Vec<[f64; 3]>,
    pub grid: Vec<[f64; 3]>,
}

pub const IDW_NEIGHBOURS: usize = 8;

/// Inverse-distance-weighted surface over a `size x size` grid spanning the
/// observed factor-score range.
pub fn export_surface(lambda1: &[f64], lambda2: &[f64], effect: &[f64], size: usize) -> Result<SurfaceGrid> {
    let n = effect.len();
    if lambda1.len() != n || lambda2.len() != n || n == 0 {
        return Err(Error::ShapeMismatch {
            expected: (n, 3),
            found: (lambda1.len().min(lambda2.len()), 3),
        });
    }
    let points: Vec<[f64; 3]> = (0..n).map(|j| [lambda1[j], lambda2[j], effect[j]]).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (lo1, hi1) = span(lambda1);
    let (lo2, hi2) = span(lambda2);
    let at = |lo: f64, hi: f64, k: usize| {
        if size <= 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (size - 1) as f64
        }
    };
    let mut grid = Vec::with_capacity(size * size);
    for a in 0..size {
        for b in 0..size {
            let (g1, g2) = (at(lo1, hi1, a), at(lo2, hi2, b));
            grid.push([g1, g2, idw(&points, g1, g2)]);
        }
    }
    Ok(SurfaceGrid { points, grid })
}

fn idw(points: &[[f64; 3]], x: f64, y: f64) -> f64 {
    let mut d: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p[0] - x).powi(2) + (p[1] - y).powi(2), p[2]))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    d.truncate(IDW_NEIGHBOURS);
    if let Some(&(_, v)) = d.iter().find(|(d2, _)| *d2 == 0.0) {
        return v;
    }
    let (num, den) = d.iter().fold((0.0, 0.0), |(num, den), &(d2, v)| {
        (num + v / d2.sqrt(), den + 1.0 / d2.sqrt())
    });
    num / den
}

/// Sign of the mean effect in the quadrants `(+,+)`, `(+,-)`, `(-,+)`,
/// `(-,-)` of the two factor scores; 0 for an empty or flat quadrant.
pub fn quadrant_signs(points: &[[f64; 3]]) -> [i8; 4] {
    let mut sum = [0.0; 4];
    let mut count = [0usize; 4];
    for p in points {
        let q = match (p[0] >= 0.0, p[1] >= 0.0) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        sum[q] += p[2];
        count[q] += 1;
    }
    let mut out = [0i8; 4];
    for q in 0..4 {
        if count[q] > 0 {
            let mean = sum[q] / count[q] as f64;
            out[q] = if mean > 0.0 {
                1
            } else if mean < 0.0 {
                -1
            } else {
                0
            };
        }
    }
    out
}

impl SurfaceGrid {
    pub fn grid_quadrant_signs(&self) -> [i8; 4] {
        quadrant_signs(&self.grid)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda1", "lambda2", "effect", "source"])?;
        for (rows, source) in [(&self.points, "sample"), (&self.grid, "grid")] {
            for p in rows {
                w.write_record([p[0].to_string(), p[1].to_string(), p[2].to_string(), source.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Surface of feature `i` from posterior means, in sign-aligned factor
/// coordinates.
pub fn feature_surface(draws: &PosteriorDraws, alignment: &Alignment, i: usize, size: usize) -> Result<SurfaceGrid> {
    let lambda = alignment.apply_rows(&draws.mean_lambda());
    if lambda.nrows() < 2 {
        return Err(Error::InvalidInput("surface needs two factors".into()));
    }
    let effect: Vec<f64> = draws.mean_interaction().row(i).iter().copied().collect();
    let l1: Vec<f64> = lambda.row(0).iter().copied().collect();
    let l2: Vec<f64> = lambda.row(1).iter().copied().collect();
    export_surface(&l1, &l2, &effect, size)
}

/// Per-fit comparison against the planted truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub aad_lambda: f64,
    pub aad_alpha: f64,
    pub aad_interaction: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    /// Affected features whose estimated surface has the true quadrant signs.
    pub saddle_recovered: usize,
    pub acceptance_rate: Option<f64>,
}

impl ComparisonRow {
    pub fn accuracy(&self) -> f64 {
        let ok = self.true_positives + self.true_negatives;
        ok as f64 / (ok + self.false_positives + self.false_negatives) as f64
    }

    pub fn saddle_rate(&self) -> f64 {
        let affected = self.true_positives + self.false_negatives;
        if affected == 0 {
            return 1.0;
        }
        self.saddle_recovered as f64 / affected as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

/// Scores one fit against the truth: AADs after factor alignment, z
/// classification at `threshold`, and quadrant-sign saddle recovery.
pub fn evaluate_fit(
    label: &str,
    draws: &PosteriorDraws,
    truth: &SyntheticTruth,
    threshold: f64,
) -> Result<ComparisonRow> {
    if draws.is_empty() {
        return Err(Error::InsufficientDraws { needed: 1, found: 0 });
    }
    let lambda_hat = draws.mean_lambda();
    let alignment = align_factors(&lambda_hat, &truth.lambda_true);
    let interaction = draws.mean_interaction();
    let probs = draws.interaction_probabilities();
    let aligned_lambda = alignment.apply_rows(&lambda_hat);
    let mut row = ComparisonRow {
        label: label.to_string(),
        aad_lambda: aad(&aligned_lambda, &truth.lambda_true)?,
        aad_alpha: aad(&alignment.apply_cols(&draws.mean_alpha()), &truth.alpha_true)?,
        aad_interaction: aad(&interaction, &truth.f_true)?,
        true_positives: 0,
        false_positives: 0,
        true_negatives: 0,
        false_negatives: 0,
        saddle_recovered: 0,
        acceptance_rate: draws.acceptance.as_ref().map(|a| a.rate()),
    };
    let l1: Vec<f64> = aligned_lambda.row(0).iter().copied().collect();
    let l2: Vec<f64> = aligned_lambda.row(1).iter().copied().collect();
    let t1: Vec<f64> = truth.lambda_true.row(0).iter().copied().collect();
    let t2: Vec<f64> = truth.lambda_true.row(1).iter().copied().collect();
    for (i, &p) in probs.iter().enumerate() {
        let called = p > threshold;
        let affected = truth.is_affected(i);
        match (called, affected) {
            (true, true) => row.true_positives += 1,
            (true, false) => row.false_positives += 1,
            (false, false) => row.true_negatives += 1,
            (false, true) => row.false_negatives += 1,
        }
        if affected {
            let est: Vec<[f64; 3]> = (0..l1.len()).map(|j| [l1[j], l2[j], interaction[(i, j)]]).collect();
            let tru: Vec<[f64; 3]> = (0..t1.len()).map(|j| [t1[j], t2[j], truth.f_true[(i, j)]]).collect();
            if quadrant_signs(&est) == quadrant_signs(&tru) {
                row.saddle_recovered += 1;
            }
        }
    }
    Ok(row)
}

/// Fits every spec (concurrently) and scores each against the truth.
pub fn compare_models(
    data: &DataMatrix,
    truth: &SyntheticTruth,
    specs: &[(String, ValidatedSpec)],
    settings: &McmcSettings,
) -> Result<ComparisonReport> {
    let rows = specs
        .par_iter()
        .map(|(label, spec)| {
            let draws = fit(spec, data, settings)?;
            evaluate_fit(label, &draws, truth, 0.5)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { rows })
}

/// Dispatches to the sampler matching the spec family.
pub fn fit(spec: &ValidatedSpec, data: &DataMatrix, settings: &McmcSettings) -> Result<PosteriorDraws> {
    if spec.family.is_mult() {
        run_mult_chain(spec, data, settings)
    } else {
        run_gp_chain(spec, data, settings)
    }
}
