//! Seed-gene windows, seed cleaning, candidate selection, interaction
//! detection and the cross-dataset overlap permutation test.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gibbs::McmcSettings;
use crate::mult::run_mult_chain;
use crate::rng::{stream, Purpose};
use crate::spec::{HPriorStrategy, ModelSpec};
use crate::state::PosteriorDraws;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub probe_id: String,
    pub chromosome: String,
    pub position: u64,
}

/// Reads `probe_id,chromosome,position` rows; probe ids must be unique.
pub fn read_annotation<R: Read>(reader: R) -> Result<Vec<Annotation>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.deserialize() {
        let a: Annotation = rec?;
        if !seen.insert(a.probe_id.clone()) {
            return Err(Error::InvalidInput(format!("duplicate probe id {}", a.probe_id)));
        }
        out.push(a);
    }
    Ok(out)
}

pub fn load_annotation(path: &Path) -> Result<Vec<Annotation>> {
    read_annotation(std::fs::File::open(path)?)
}

/// Indices of the probes on `chromosome` within `half_width` base pairs of
/// `center`. An empty window is logged, not an error.
pub fn seed_gene_window(annotation: &[Annotation], chromosome: &str, center: u64, half_width: u64) -> Vec<usize> {
    let hits: Vec<usize> = annotation
        .iter()
        .enumerate()
        .filter(|(_, a)| a.chromosome == chromosome && a.position.abs_diff(center) <= half_width)
        .map(|(k, _)| k)
        .collect();
    if hits.is_empty() {
        warn!("EMPTY_WINDOW: no probes on chromosome {chromosome} within {half_width} of {center}");
    }
    hits
}

/// Data rows of the annotation entries selected by `window`, dropping probes
/// absent from the data.
pub fn window_rows(data: &DataMatrix, annotation: &[Annotation], window: &[usize]) -> Vec<usize> {
    let ids: Vec<&str> = window.iter().map(|&k| annotation[k].probe_id.as_str()).collect();
    data.feature_indices(&ids)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Removal {
    pub feature: usize,
    pub group: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovalReport {
    pub removed: Vec<Removal>,
}

/// Posterior inclusion probability and slab-mean loading of one entry.
fn loading_stats(draws: &PosteriorDraws, i: usize, l: usize) -> (f64, f64) {
    let mut count = 0usize;
    let mut sum = 0.0;
    for s in &draws.states {
        if s.h[(i, l)] {
            count += 1;
            sum += s.alpha[(i, l)];
        }
    }
    let p = count as f64 / draws.len() as f64;
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    (p, mean)
}

/// Fits a two-factor model without interactions to the seed rows and drops
/// every seed gene that does not load on its own factor with the group's
/// majority sign, or that loads on the other factor.
///
/// The seed groups inform the loading prior (grouped strategy) but are not
/// fixed, so violations remain visible in the posterior.
pub fn clean_seed_genes(
    data: &DataMatrix,
    g1: &[usize],
    g2: &[usize],
    settings: &McmcSettings,
) -> Result<(Vec<usize>, Vec<usize>, RemovalReport)> {
    if g1.is_empty() || g2.is_empty() {
        return Err(Error::InvalidInput("seed groups must be nonempty".into()));
    }
    if g1.iter().any(|i| g2.contains(i)) {
        return Err(Error::SpecConflict {
            first: "G1",
            second: "G2",
            detail: "seed groups overlap".into(),
        });
    }
    let rows: Vec<usize> = g1.iter().chain(g2).copied().collect();
    let sub = data.select_rows(&rows)?;
    let local = vec![(0..g1.len()).collect::<Vec<_>>(), (g1.len()..rows.len()).collect()];
    let mut spec = ModelSpec::mult_approach2(2)
        .with_seed_groups(local.clone())
        .without_interactions(rows.len());
    spec.h_prior_strategy = HPriorStrategy::Grouped;
    let spec = spec.validate(rows.len())?;
    let draws = run_mult_chain(&spec, &sub, settings)?;

    // Factor labels are exchangeable under this prior; give each group the
    // factor its members load on most.
    let probs = draws.loading_probabilities();
    let affinity = |group: &[usize], l: usize| group.iter().map(|&k| probs[(k, l)]).sum::<f64>() / group.len() as f64;
    let swapped = affinity(&local[0], 1) + affinity(&local[1], 0) > affinity(&local[0], 0) + affinity(&local[1], 1);

    let mut kept = [Vec::new(), Vec::new()];
    let mut removed = Vec::new();
    for (g, group) in local.iter().enumerate() {
        let own = if swapped { 1 - g } else { g };
        let other = 1 - own;
        let stats: Vec<((f64, f64), (f64, f64))> = group
            .iter()
            .map(|&k| (loading_stats(&draws, k, own), loading_stats(&draws, k, other)))
            .collect();
        let positive = stats.iter().filter(|s| s.0 .0 > 0.5 && s.0 .1 > 0.0).count();
        let negative = stats.iter().filter(|s| s.0 .0 > 0.5 && s.0 .1 < 0.0).count();
        let majority = if negative > positive { -1.0 } else { 1.0 };
        for (&k, &((p_own, a_own), (p_other, _))) in group.iter().zip(&stats) {
            let feature = rows[k];
            let reason = if p_own <= 0.5 {
                Some("no loading on own factor")
            } else if a_own * majority < 0.0 {
                Some("loading sign disagrees with group")
            } else if p_other > 0.5 {
                Some("loads on the other factor")
            } else {
                None
            };
            match reason {
                Some(r) => removed.push(Removal {
                    feature,
                    group: g,
                    reason: r.to_string(),
                }),
                None => kept[g].push(feature),
            }
        }
        if kept[g].is_empty() {
            return Err(Error::AllRemoved(format!("G{}", g + 1)));
        }
    }
    let [c1, c2] = kept;
    Ok((c1, c2, RemovalReport { removed }))
}

/// Features outside the seed groups loading on both factors with posterior
/// inclusion probability above one half, under the seed-constrained
/// no-interaction model.
pub fn select_candidate_genes(
    data: &DataMatrix,
    g1: &[usize],
    g2: &[usize],
    settings: &McmcSettings,
) -> Result<Vec<usize>> {
    let m = data.n_features();
    let spec = ModelSpec::mult_approach2(2)
        .with_seed_groups(vec![g1.to_vec(), g2.to_vec()])
        .with_seed_constraints()
        .without_interactions(m)
        .validate(m)?;
    let draws = run_mult_chain(&spec, data, settings)?;
    let probs = draws.loading_probabilities();
    Ok((0..m)
        .filter(|i| !g1.contains(i) && !g2.contains(i))
        .filter(|&i| probs[(i, 0)] > 0.5 && probs[(i, 1)] > 0.5)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub feature: usize,
    pub probability: f64,
}

/// Features whose posterior interaction probability exceeds `threshold`.
pub fn detect_interactions(draws: &PosteriorDraws, threshold: f64) -> Result<Vec<Detection>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!(
            "threshold must be in (0, 1), got {threshold}"
        )));
    }
    if draws.is_empty() {
        return Err(Error::InsufficientDraws { needed: 1, found: 0 });
    }
    Ok(draws
        .interaction_probabilities()
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p > threshold)
        .map(|(feature, probability)| Detection { feature, probability })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTestInput {
    pub population_size: usize,
    pub per_dataset_counts: Vec<usize>,
    pub observed_overlap: u64,
    pub n_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapResult {
    pub p_value: f64,
    pub n_replicates: usize,
    pub exceedances: usize,
    pub mean_overlap: f64,
    pub sd_overlap: f64,
    pub max_overlap: u64,
}

/// Sum over dataset pairs of the intersection sizes, given how many
/// datasets contain each gene: `sum_g C(c_g, 2)`.
pub fn pairwise_overlap(membership: &[u8]) -> u64 {
    membership
        .iter()
        .map(|&c| (c as u64) * (c as u64).saturating_sub(1) / 2)
        .sum()
}

fn replicate_overlap(input: &OverlapTestInput, seed: u64, k: u64) -> u64 {
    let mut rng = stream(seed, 0, Purpose::Replicate(k));
    let mut membership = vec![0u8; input.population_size];
    for &c in &input.per_dataset_counts {
        for g in sample(&mut rng, input.population_size, c) {
            membership[g] += 1;
        }
    }
    pairwise_overlap(&membership)
}

/// Draws each dataset's gene set uniformly without replacement and reports
/// `p = #{replicate overlap >= observed} / n_replicates`.
pub fn overlap_permutation_test(input: &OverlapTestInput, seed: u64) -> Result<OverlapResult> {
    if input.n_replicates == 0 {
        return Err(Error::InvalidInput("n_replicates must be at least 1".into()));
    }
    if input.per_dataset_counts.len() > u8::MAX as usize {
        return Err(Error::InvalidInput("too many datasets".into()));
    }
    if let Some(&c) = input.per_dataset_counts.iter().find(|&&c| c > input.population_size) {
        return Err(Error::InvalidInput(format!(
            "count {c} exceeds population size {}",
            input.population_size
        )));
    }
    let overlaps: Vec<u64> = (0..input.n_replicates as u64)
        .into_par_iter()
        .map(|k| replicate_overlap(input, seed, k))
        .collect();
    let exceedances = overlaps.iter().filter(|&&o| o >= input.observed_overlap).count();
    let r = overlaps.len() as f64;
    let mean = overlaps.iter().map(|&o| o as f64).sum::<f64>() / r;
    let var = overlaps.iter().map(|&o| (o as f64 - mean).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
    Ok(OverlapResult {
        p_value: exceedances as f64 / r,
        n_replicates: overlaps.len(),
        exceedances,
        mean_overlap: mean,
        sd_overlap: var.sqrt(),
        max_overlap: overlaps.iter().copied().max().unwrap_or(0),
    })
}

/// Expected replicate overlap: `sum over pairs of c_a c_b / N`.
pub fn expected_overlap(input: &OverlapTestInput) -> f64 {
    let c = &input.per_dataset_counts;
    let mut e = 0.0;
    for a in 0..c.len() {
        for b in (a + 1)..c.len() {
            e += (c[a] * c[b]) as f64 / input.population_size as f64;
        }
    }
    e
}
