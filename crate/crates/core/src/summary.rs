//! Mixture-aware posterior summaries.
//!
//! For spike-and-slab parameters the point estimate and interval come from
//! the component holding most posterior weight: the slab draws when the
//! inclusion probability exceeds one half, otherwise the spike at zero.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::state::{McmcState, PosteriorDraws};

pub const MIN_SUMMARY_DRAWS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub parameter: String,
    pub role: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Inclusion probability of spike-and-slab parameters; the spike carries
    /// the complementary weight.
    pub inclusion_prob: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub entries: Vec<ParameterSummary>,
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var)
}

/// Compares the mean of the first 10% of a trace with the mean of its last
/// 50%; converged when the standardized difference is below 3.
pub fn two_window_converged(trace: &[f64]) -> bool {
    let n = trace.len();
    let head = (n / 10).max(1);
    let tail = (n / 2).max(1);
    let (m1, v1) = mean_var(&trace[..head]);
    let (m2, v2) = mean_var(&trace[n - tail..]);
    let se = (v1 / head as f64 + v2 / tail as f64).sqrt();
    if se == 0.0 {
        return m1 == m2;
    }
    ((m1 - m2) / se).abs() < 3.0
}

fn interval(values: &[f64]) -> (f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean, quantile(&sorted, 0.025), quantile(&sorted, 0.975))
}

/// Summary of a plain scalar: mean and equal-tailed 95% interval.
pub fn summarize_plain(parameter: String, role: &str, trace: &[f64]) -> ParameterSummary {
    let (estimate, ci_low, ci_high) = interval(trace);
    ParameterSummary {
        parameter,
        role: role.to_string(),
        estimate,
        ci_low,
        ci_high,
        inclusion_prob: None,
        converged: two_window_converged(trace),
    }
}

/// Summary of a spike-and-slab scalar from its values and indicators.
pub fn summarize_mixture(parameter: String, role: &str, trace: &[f64], included: &[bool]) -> ParameterSummary {
    let p = included.iter().filter(|&&b| b).count() as f64 / included.len() as f64;
    let (estimate, ci_low, ci_high) = if p > 0.5 {
        let slab: Vec<f64> = trace
            .iter()
            .zip(included)
            .filter(|(_, &b)| b)
            .map(|(&v, _)| v)
            .collect();
        interval(&slab)
    } else {
        (0.0, 0.0, 0.0)
    };
    ParameterSummary {
        parameter,
        role: role.to_string(),
        estimate,
        ci_low,
        ci_high,
        inclusion_prob: Some(p),
        converged: two_window_converged(trace),
    }
}

fn trace<F: Fn(&McmcState) -> f64>(states: &[McmcState], get: F) -> Vec<f64> {
    states.iter().map(get).collect()
}

pub fn posterior_summary(draws: &PosteriorDraws) -> Result<PosteriorSummary> {
    if draws.len() < MIN_SUMMARY_DRAWS {
        return Err(Error::InsufficientDraws {
            needed: MIN_SUMMARY_DRAWS,
            found: draws.len(),
        });
    }
    let states = &draws.states;
    let first = &states[0];
    let (m, l, n) = (first.n_features(), first.n_factors(), first.n_samples());
    let mut entries = Vec::new();
    for i in 0..m {
        for k in 0..l {
            let v = trace(states, |s| s.alpha[(i, k)]);
            let inc: Vec<bool> = states.iter().map(|s| s.h[(i, k)]).collect();
            entries.push(summarize_mixture(format!("alpha[{i},{k}]"), "loading", &v, &inc));
        }
    }
    for k in 0..l {
        for j in 0..n {
            let v = trace(states, |s| s.lambda[(k, j)]);
            entries.push(summarize_plain(format!("lambda[{k},{j}]"), "score", &v));
        }
    }
    if let Some(theta) = &first.theta {
        for i in 0..m {
            for t in 0..theta.ncols() {
                let v = trace(states, |s| s.theta.as_ref().expect("uniform draws")[(i, t)]);
                let inc: Vec<bool> = states.iter().map(|s| s.z[(i, t)]).collect();
                entries.push(summarize_mixture(
                    format!("theta[{i},{t}]"),
                    "interaction_loading",
                    &v,
                    &inc,
                ));
            }
        }
    }
    if let Some(eta) = &first.eta {
        for t in 0..eta.nrows() {
            for j in 0..n {
                let v = trace(states, |s| s.eta.as_ref().expect("uniform draws")[(t, j)]);
                entries.push(summarize_plain(format!("eta[{t},{j}]"), "interaction_score", &v));
            }
        }
    }
    if first.f.is_some() {
        for i in 0..m {
            let inc: Vec<bool> = states.iter().map(|s| s.z[(i, 0)]).collect();
            for j in 0..n {
                let v = trace(states, |s| s.f.as_ref().expect("uniform draws")[(i, j)]);
                entries.push(summarize_mixture(format!("F[{i},{j}]"), "interaction_effect", &v, &inc));
            }
        }
    }
    if first.f_shared.is_some() {
        for j in 0..n {
            let v = trace(states, |s| s.f_shared.as_ref().expect("uniform draws")[j]);
            entries.push(summarize_plain(format!("Fstar[{j}]"), "shared_effect", &v));
        }
    }
    for i in 0..m {
        let v = trace(states, |s| s.sigma2[i]);
        entries.push(summarize_plain(format!("sigma2[{i}]"), "noise_variance", &v));
    }
    for k in 0..first.q.len() {
        let v = trace(states, |s| s.q[k]);
        entries.push(summarize_plain(format!("q[{k}]"), "loading_probability", &v));
    }
    for k in 0..first.rho.len() {
        let v = trace(states, |s| s.rho[k]);
        entries.push(summarize_plain(format!("rho[{k}]"), "interaction_probability", &v));
    }
    Ok(PosteriorSummary { entries })
}

impl PosteriorSummary {
    pub fn get(&self, parameter: &str) -> Option<&ParameterSummary> {
        self.entries.iter().find(|e| e.parameter == parameter)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "parameter",
            "role",
            "estimate",
            "ci_low",
            "ci_high",
            "inclusion_prob",
            "converged",
        ])?;
        for e in &self.entries {
            w.write_record([
                e.parameter.clone(),
                e.role.clone(),
                e.estimate.to_string(),
                e.ci_low.to_string(),
                e.ci_high.to_string(),
                e.inclusion_prob.map(|p| p.to_string()).unwrap_or_default(),
                e.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
