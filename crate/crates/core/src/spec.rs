//! Declarative model description: family, factor count, priors and seed constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `eta_tj ~ N(lambda_l1j * lambda_l2j, nu)`.
    MultApproach1,
    /// `eta_tj = lambda_l1j * lambda_l2j` exactly.
    MultApproach2,
    /// Row-wise Gaussian-process interaction term `F`.
    Gp,
}

impl Family {
    pub fn is_mult(self) -> bool {
        matches!(self, Family::MultApproach1 | Family::MultApproach2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HPriorStrategy {
    /// One `q_il` per loading.
    PerEntry,
    /// Shared `q_R` over the three seed-derived groups.
    Grouped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZPriorStrategy {
    /// One `rho` per feature (per feature and pair for the multiplicative model).
    PerFeature,
    /// A single global `rho`.
    Global,
    /// Shared `rho_R` over seed features and the rest.
    Grouped,
}

/// Prior on the interaction rows of `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FPrior {
    /// Each active row has its own GP draw.
    PerRow,
    /// All active rows equal one shared GP draw `F*`.
    Shared,
}

/// The five prior configurations of the GP model as `(h, F, z)` selections.
pub const GP_VARIANTS: [(u8, HPriorStrategy, FPrior, ZPriorStrategy); 5] = [
    (1, HPriorStrategy::PerEntry, FPrior::PerRow, ZPriorStrategy::PerFeature),
    (2, HPriorStrategy::PerEntry, FPrior::Shared, ZPriorStrategy::PerFeature),
    (3, HPriorStrategy::PerEntry, FPrior::PerRow, ZPriorStrategy::Global),
    (4, HPriorStrategy::PerEntry, FPrior::Shared, ZPriorStrategy::Global),
    (5, HPriorStrategy::Grouped, FPrior::PerRow, ZPriorStrategy::Grouped),
];

pub fn gp_variant_priors(variant: u8) -> Option<(HPriorStrategy, FPrior, ZPriorStrategy)> {
    GP_VARIANTS
        .iter()
        .find(|v| v.0 == variant)
        .map(|&(_, h, f, z)| (h, f, z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub const UNIFORM: BetaPrior = BetaPrior::new(1.0, 1.0);

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

/// Beta hyperparameters for an inclusion probability family.
///
/// `entries` overrides `default` per `(feature, column)`; `groups` is used
/// only under a grouped strategy and is indexed by group id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    pub default: BetaPrior,
    pub entries: BTreeMap<(usize, usize), BetaPrior>,
    pub groups: Vec<BetaPrior>,
}

impl PriorTable {
    pub fn new(default: BetaPrior) -> Self {
        Self {
            default,
            entries: BTreeMap::new(),
            groups: Vec::new(),
        }
    }

    pub fn with_groups(mut self, groups: Vec<BetaPrior>) -> Self {
        self.groups = groups;
        self
    }

    pub fn entry(&self, i: usize, c: usize) -> BetaPrior {
        self.entries.get(&(i, c)).copied().unwrap_or(self.default)
    }
}

/// Number of unordered factor pairs, `L (L - 1) / 2`.
pub fn interaction_pair_count(factors: usize) -> Result<usize> {
    if factors < 2 {
        return Err(Error::InvalidFactorCount(factors));
    }
    Ok(factors * (factors - 1) / 2)
}

/// Factor pairs `(l1, l2)`, `l1 < l2`, in lexicographic order (zero based).
pub fn interaction_pairs(factors: usize) -> Result<Vec<(usize, usize)>> {
    interaction_pair_count(factors)?;
    Ok((0..factors)
        .flat_map(|a| ((a + 1)..factors).map(move |b| (a, b)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub factors: usize,
    pub gp_variant: Option<u8>,
    pub nu: Option<f64>,
    /// Slab variance of the linear loadings.
    pub omega_alpha: f64,
    /// Slab variance of the interaction loadings (multiplicative families).
    pub omega_theta: Option<f64>,
    pub sigma2_prior: InvGammaPrior,
    pub length_scale: Option<f64>,
    pub h_prior_strategy: HPriorStrategy,
    pub z_prior_strategy: ZPriorStrategy,
    /// Hyperparameters of `q` (the loading inclusion probabilities).
    pub gamma: PriorTable,
    /// Hyperparameters of `rho` (the interaction inclusion probabilities).
    pub beta: PriorTable,
    /// `seed_groups[l]` lists the features assumed to load on factor `l` only.
    pub seed_groups: Vec<Vec<usize>>,
    /// Loadings whose inclusion indicator is fixed.
    pub degenerate_q: BTreeMap<(usize, usize), bool>,
    /// Features whose interaction indicators are fixed.
    pub degenerate_rho: BTreeMap<usize, bool>,
}

pub const DEFAULT_LENGTH_SCALE: f64 = 0.2;
pub const DEFAULT_OMEGA: f64 = 10.0;
pub const DEFAULT_SIGMA2_PRIOR: InvGammaPrior = InvGammaPrior { shape: 2.1, scale: 1.1 };

impl ModelSpec {
    fn base(family: Family, factors: usize) -> Self {
        Self {
            family,
            factors,
            gp_variant: None,
            nu: None,
            omega_alpha: DEFAULT_OMEGA,
            omega_theta: None,
            sigma2_prior: DEFAULT_SIGMA2_PRIOR,
            length_scale: None,
            h_prior_strategy: HPriorStrategy::PerEntry,
            z_prior_strategy: ZPriorStrategy::PerFeature,
            gamma: PriorTable::new(BetaPrior::UNIFORM).with_groups(default_h_groups()),
            beta: PriorTable::new(BetaPrior::UNIFORM).with_groups(default_z_groups()),
            seed_groups: Vec::new(),
            degenerate_q: BTreeMap::new(),
            degenerate_rho: BTreeMap::new(),
        }
    }

    /// Multiplicative model with Gaussian-prior interaction scores.
    pub fn mult_approach1(factors: usize, nu: f64) -> Self {
        let mut spec = Self::base(Family::MultApproach1, factors);
        spec.nu = Some(nu);
        spec.omega_theta = Some(DEFAULT_OMEGA);
        spec.beta.default = BetaPrior::new(1.0, 10.0);
        spec
    }

    /// Multiplicative model with exact product interaction scores.
    pub fn mult_approach2(factors: usize) -> Self {
        let mut spec = Self::base(Family::MultApproach2, factors);
        spec.omega_theta = Some(DEFAULT_OMEGA);
        spec.beta.default = BetaPrior::new(1.0, 10.0);
        spec
    }

    /// GP model configured as one of the five prior variants.
    pub fn gp(factors: usize, variant: u8) -> Result<Self> {
        let (h, _, z) = gp_variant_priors(variant).ok_or_else(|| Error::SpecConflict {
            first: "gp_variant",
            second: "family",
            detail: format!("variant must be 1..=5, got {variant}"),
        })?;
        let mut spec = Self::base(Family::Gp, factors);
        spec.gp_variant = Some(variant);
        spec.length_scale = Some(DEFAULT_LENGTH_SCALE);
        spec.h_prior_strategy = h;
        spec.z_prior_strategy = z;
        Ok(spec)
    }

    pub fn with_seed_groups(mut self, groups: Vec<Vec<usize>>) -> Self {
        self.seed_groups = groups;
        self
    }

    /// Fixes the seed-gene assumptions: loading on the own factor is always
    /// present, on any other factor always absent, and seeds carry no
    /// interaction effect.
    pub fn with_seed_constraints(mut self) -> Self {
        for (l, group) in self.seed_groups.iter().enumerate() {
            for &i in group {
                for k in 0..self.factors {
                    self.degenerate_q.insert((i, k), k == l);
                }
                self.degenerate_rho.insert(i, false);
            }
        }
        self
    }

    /// Forces every interaction indicator to zero, leaving a purely linear
    /// factor model.
    pub fn without_interactions(mut self, n_features: usize) -> Self {
        for i in 0..n_features {
            self.degenerate_rho.insert(i, false);
        }
        self
    }

    pub fn f_prior(&self) -> Option<FPrior> {
        self.gp_variant.and_then(gp_variant_priors).map(|(_, f, _)| f)
    }

    pub fn pair_count(&self) -> usize {
        self.factors * self.factors.saturating_sub(1) / 2
    }

    pub fn seed_of(&self, feature: usize) -> Option<usize> {
        self.seed_groups.iter().position(|g| g.contains(&feature))
    }

    /// Group of loading `(i, l)` under the grouped `h` strategy:
    /// 0 = expected association, 1 = no association expected, 2 = unknown.
    pub fn h_group(&self, i: usize, l: usize) -> usize {
        match self.seed_of(i) {
            Some(s) if s == l => 0,
            Some(_) => 1,
            None => 2,
        }
    }

    /// Group of feature `i` under the grouped `z` strategy:
    /// 0 = seed feature (no interaction expected), 1 = unknown.
    pub fn z_group(&self, i: usize) -> usize {
        if self.seed_of(i).is_some() {
            0
        } else {
            1
        }
    }

    /// Cross-field consistency checks against a data set with `n_features` rows.
    pub fn validate(self, n_features: usize) -> Result<ValidatedSpec> {
        fn conflict<T>(first: &'static str, second: &'static str, detail: String) -> Result<T> {
            Err(Error::SpecConflict { first, second, detail })
        }
        if self.factors < 2 {
            return Err(Error::InvalidFactorCount(self.factors));
        }
        if !(self.omega_alpha > 0.0) {
            return conflict("omega_alpha", "omega_alpha", "slab variance must be positive".into());
        }
        if !(self.sigma2_prior.shape > 0.0 && self.sigma2_prior.scale > 0.0) {
            return conflict(
                "sigma2_prior",
                "sigma2_prior",
                "shape and scale must be positive".into(),
            );
        }
        match self.family {
            Family::MultApproach1 | Family::MultApproach2 => {
                if self.gp_variant.is_some() {
                    return conflict(
                        "gp_variant",
                        "family",
                        "GP variant set on a multiplicative model".into(),
                    );
                }
                if self.length_scale.is_some() {
                    return conflict(
                        "length_scale",
                        "family",
                        "length scale set on a multiplicative model".into(),
                    );
                }
                match (self.family, self.nu) {
                    (Family::MultApproach1, Some(nu)) if nu > 0.0 => {}
                    (Family::MultApproach1, _) => {
                        return conflict("nu", "family", "approach 1 needs a positive nu".into())
                    }
                    (_, Some(_)) => return conflict("nu", "family", "nu only applies to approach 1".into()),
                    _ => {}
                }
                match self.omega_theta {
                    Some(w) if w > 0.0 => {}
                    _ => {
                        return conflict(
                            "omega_theta",
                            "family",
                            "multiplicative models need a positive omega_theta".into(),
                        )
                    }
                }
            }
            Family::Gp => {
                if self.nu.is_some() {
                    return conflict("nu", "family", "nu only applies to approach 1".into());
                }
                if self.omega_theta.is_some() {
                    return conflict(
                        "omega_theta",
                        "family",
                        "the GP model has no interaction loadings".into(),
                    );
                }
                let variant = match self.gp_variant {
                    Some(v) => v,
                    None => return conflict("gp_variant", "family", "GP model needs a variant".into()),
                };
                let Some((h, _, z)) = gp_variant_priors(variant) else {
                    return conflict("gp_variant", "family", format!("variant must be 1..=5, got {variant}"));
                };
                if h != self.h_prior_strategy {
                    return conflict(
                        "gp_variant",
                        "h_prior_strategy",
                        format!("variant {variant} requires {h:?}, got {:?}", self.h_prior_strategy),
                    );
                }
                if z != self.z_prior_strategy {
                    return conflict(
                        "gp_variant",
                        "z_prior_strategy",
                        format!("variant {variant} requires {z:?}, got {:?}", self.z_prior_strategy),
                    );
                }
                match self.length_scale {
                    Some(ls) if ls > 0.0 => {}
                    _ => {
                        return conflict(
                            "length_scale",
                            "family",
                            "GP model needs a positive length scale".into(),
                        )
                    }
                }
            }
        }

        let check_beta = |name: &'static str, table: &PriorTable, groups: usize| -> Result<()> {
            let ok = |p: &BetaPrior| p.a > 0.0 && p.b > 0.0;
            if !ok(&table.default) || !table.entries.values().all(ok) || !table.groups.iter().all(ok) {
                return conflict(name, name, "Beta parameters must be positive".into());
            }
            if table.groups.len() < groups {
                return conflict(
                    name,
                    "strategy",
                    format!("grouped strategy needs {groups} group priors"),
                );
            }
            Ok(())
        };
        let h_groups = if self.h_prior_strategy == HPriorStrategy::Grouped {
            3
        } else {
            0
        };
        let z_groups = if self.z_prior_strategy == ZPriorStrategy::Grouped {
            2
        } else {
            0
        };
        check_beta("gamma", &self.gamma, h_groups)?;
        check_beta("beta", &self.beta, z_groups)?;

        if self.seed_groups.len() > self.factors {
            return conflict(
                "seed_groups",
                "factors",
                format!("{} seed groups for {} factors", self.seed_groups.len(), self.factors),
            );
        }
        let mut seen = BTreeSet::new();
        for (l, group) in self.seed_groups.iter().enumerate() {
            for &i in group {
                if i >= n_features {
                    return conflict("seed_groups", "data", format!("feature {i} out of range"));
                }
                if !seen.insert(i) {
                    return conflict(
                        "seed_groups",
                        "seed_groups",
                        format!("feature {i} appears in more than one group (second in group {l})"),
                    );
                }
            }
        }
        let cols = if self.family == Family::Gp {
            1
        } else {
            self.pair_count()
        };
        for &(i, l) in self.degenerate_q.keys() {
            if i >= n_features || l >= self.factors {
                return conflict("degenerate_q", "data", format!("entry ({i}, {l}) out of range"));
            }
        }
        for &i in self.degenerate_rho.keys() {
            if i >= n_features {
                return conflict("degenerate_rho", "data", format!("feature {i} out of range"));
            }
        }
        for &(i, c) in self.beta.entries.keys() {
            if i >= n_features || c >= cols {
                return conflict("beta", "data", format!("entry ({i}, {c}) out of range"));
            }
        }
        for &(i, l) in self.gamma.entries.keys() {
            if i >= n_features || l >= self.factors {
                return conflict("gamma", "data", format!("entry ({i}, {l}) out of range"));
            }
        }
        Ok(ValidatedSpec { spec: self, n_features })
    }
}

fn default_h_groups() -> Vec<BetaPrior> {
    vec![BetaPrior::new(9.0, 1.0), BetaPrior::new(1.0, 9.0), BetaPrior::UNIFORM]
}

fn default_z_groups() -> Vec<BetaPrior> {
    vec![BetaPrior::new(1.0, 9.0), BetaPrior::UNIFORM]
}

/// A [`ModelSpec`] that passed [`ModelSpec::validate`] for a given feature count.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSpec {
    spec: ModelSpec,
    n_features: usize,
}

impl ValidatedSpec {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn into_inner(self) -> ModelSpec {
        self.spec
    }
}

impl Deref for ValidatedSpec {
    type Target = ModelSpec;

    fn deref(&self) -> &ModelSpec {
        &self.spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_counts() {
        assert_eq!(interaction_pair_count(2).unwrap(), 1);
        assert_eq!(interaction_pair_count(3).unwrap(), 3);
        assert_eq!(interaction_pair_count(5).unwrap(), 10);
        assert!(matches!(interaction_pair_count(1), Err(Error::InvalidFactorCount(1))));
    }

    #[test]
    fn pairs_are_lexicographic() {
        assert_eq!(
            interaction_pairs(4).unwrap(),
            vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        );
        for l in 2..=10 {
            assert_eq!(interaction_pairs(l).unwrap().len(), interaction_pair_count(l).unwrap());
        }
    }

    #[test]
    fn gp_variant_table_is_a_bijection() {
        let triples: BTreeSet<_> = GP_VARIANTS
            .iter()
            .map(|&(_, h, f, z)| format!("{h:?}/{f:?}/{z:?}"))
            .collect();
        assert_eq!(triples.len(), 5);
        assert_eq!(gp_variant_priors(2).unwrap().1, FPrior::Shared);
        assert_eq!(gp_variant_priors(3).unwrap().2, ZPriorStrategy::Global);
        assert!(gp_variant_priors(0).is_none());
        assert!(gp_variant_priors(6).is_none());
    }

    #[test]
    fn gp_spec_with_nu_conflicts() {
        let mut spec = ModelSpec::gp(2, 1).unwrap();
        spec.nu = Some(1.0);
        let err = spec.validate(10).unwrap_err();
        assert!(matches!(err, Error::SpecConflict { first: "nu", .. }));
    }

    #[test]
    fn variant_five_requires_grouped_h() {
        let mut spec = ModelSpec::gp(2, 5).unwrap();
        spec.h_prior_strategy = HPriorStrategy::PerEntry;
        let err = spec.validate(10).unwrap_err();
        assert!(matches!(
            err,
            Error::SpecConflict {
                first: "gp_variant",
                second: "h_prior_strategy",
                ..
            }
        ));
    }

    #[test]
    fn overlapping_seed_groups_conflict() {
        let spec = ModelSpec::mult_approach2(2).with_seed_groups(vec![vec![0, 1, 2], vec![2, 3]]);
        let err = spec.validate(10).unwrap_err();
        assert!(matches!(
            err,
            Error::SpecConflict {
                first: "seed_groups",
                ..
            }
        ));
    }

    #[test]
    fn out_of_range_seed_conflicts() {
        let spec = ModelSpec::mult_approach2(2).with_seed_groups(vec![vec![0], vec![10]]);
        assert!(spec.validate(10).is_err());
    }

    #[test]
    fn approach1_needs_nu_and_approach2_rejects_it() {
        let mut a1 = ModelSpec::mult_approach1(2, 1e-5);
        a1.nu = None;
        assert!(a1.validate(5).is_err());
        let mut a2 = ModelSpec::mult_approach2(2);
        a2.nu = Some(1.0);
        assert!(a2.validate(5).is_err());
    }

    #[test]
    fn seed_constraints_fix_loadings_and_interactions() {
        let spec = ModelSpec::mult_approach2(2)
            .with_seed_groups(vec![vec![0, 1], vec![2]])
            .with_seed_constraints();
        assert!(spec.degenerate_q[&(0, 0)]);
        assert!(!spec.degenerate_q[&(0, 1)]);
        assert!(spec.degenerate_q[&(2, 1)]);
        assert!(!spec.degenerate_rho[&2]);
        assert!(!spec.degenerate_rho.contains_key(&3));
        assert_eq!(spec.h_group(0, 0), 0);
        assert_eq!(spec.h_group(0, 1), 1);
        assert_eq!(spec.h_group(5, 1), 2);
        assert!(spec.validate(4).is_ok());
    }

    #[test]
    fn all_gp_variants_validate() {
        for v in 1..=5 {
            ModelSpec::gp(3, v).unwrap().validate(4).unwrap();
        }
        assert!(ModelSpec::gp(2, 7).is_err());
    }
}
