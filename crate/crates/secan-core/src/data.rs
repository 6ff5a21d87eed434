//! Matched case-control data layout.
//!
//! Subjects are grouped into matching strata. Within stratum `k` the design
//! guarantees at least one case (`d = 1`) and one control (`d = 0`); the
//! likelihood code relies on that, so construction validates it. Stratum
//! indices are 1-based at the API boundary and contiguous: a dataset with
//! `k()` strata uses exactly the labels `1..=k()`.

use thiserror::Error;

/// One subject: disease indicator, 1-based stratum label, secondary outcome,
/// and covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub disease: u8,
    pub stratum: usize,
    pub outcome: u8,
    pub covariates: Vec<f64>,
}

/// Column-verified storage for one stratum. Covariates are row-major
/// (`n * q`), subjects kept in insertion order.
#[derive(Debug, Clone)]
pub struct Stratum {
    disease: Vec<u8>,
    outcome: Vec<u8>,
    covariates: Vec<f64>,
    q: usize,
    n_cases: usize,
}

impl Stratum {
    /// Subjects in the stratum.
    pub fn n(&self) -> usize {
        self.disease.len()
    }

    pub fn n_cases(&self) -> usize {
        self.n_cases
    }

    pub fn n_controls(&self) -> usize {
        self.n() - self.n_cases
    }

    pub fn disease(&self, i: usize) -> u8 {
        self.disease[i]
    }

    pub fn outcome(&self, i: usize) -> u8 {
        self.outcome[i]
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.q..(i + 1) * self.q]
    }
}

/// A full dataset: strata plus optional matching-factor metadata.
///
/// `factor_levels`, when present, records for each stratum the tuple of
/// matching-factor level indices that defines it (all strata share the same
/// number of factors). The naive regression builders use it to construct
/// additive main-effect designs; without it, the stratum label itself acts
/// as a single factor.
#[derive(Debug, Clone)]
pub struct StratifiedDataset {
    strata: Vec<Stratum>,
    q: usize,
    factor_levels: Option<Vec<Vec<usize>>>,
}

/// Construction failures for [`StratifiedDataset`].
#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("dataset contains no observations")]
    Empty,
    #[error("observation {index} has a non-binary value {value} in the {field} field")]
    NonBinary { index: usize, field: &'static str, value: u8 },
    #[error("observation {index} has stratum label {label}; labels must be 1-based")]
    ZeroStratum { index: usize, label: usize },
    #[error("stratum {stratum} has no observations but higher labels exist")]
    MissingStratum { stratum: usize },
    #[error("stratum {stratum} is degenerate: {cases} case(s), {controls} control(s); each stratum needs at least one of each")]
    DegenerateStratum { stratum: usize, cases: usize, controls: usize },
    #[error("observation {index} has {got} covariates, expected {expected}")]
    CovariateDim { index: usize, got: usize, expected: usize },
    #[error("observation {index} has a non-finite covariate in position {position}")]
    NonFiniteCovariate { index: usize, position: usize },
    #[error("factor metadata has {got} entries for {strata} strata")]
    FactorLen { got: usize, strata: usize },
    #[error("factor metadata rows have inconsistent lengths")]
    FactorShape,
}

impl StratifiedDataset {
    /// Groups observations by stratum label and validates the matched
    /// design. Subject order within a stratum follows input order.
    pub fn from_observations(obs: &[Observation]) -> Result<Self, DataError> {
        if obs.is_empty() {
            return Err(DataError::Empty);
        }
        let q = obs[0].covariates.len();
        let mut k = 0usize;
        for (index, o) in obs.iter().enumerate() {
            if o.disease > 1 {
                return Err(DataError::NonBinary { index, field: "disease", value: o.disease });
            }
            if o.outcome > 1 {
                return Err(DataError::NonBinary { index, field: "outcome", value: o.outcome });
            }
            if o.stratum == 0 {
                return Err(DataError::ZeroStratum { index, label: o.stratum });
            }
            if o.covariates.len() != q {
                return Err(DataError::CovariateDim { index, got: o.covariates.len(), expected: q });
            }
            if let Some(position) = o.covariates.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFiniteCovariate { index, position });
            }
            k = k.max(o.stratum);
        }
        let mut strata: Vec<Stratum> = (0..k)
            .map(|_| Stratum { disease: Vec::new(), outcome: Vec::new(), covariates: Vec::new(), q, n_cases: 0 })
            .collect();
        for o in obs {
            let s = &mut strata[o.stratum - 1];
            s.disease.push(o.disease);
            s.outcome.push(o.outcome);
            s.covariates.extend_from_slice(&o.covariates);
            s.n_cases += usize::from(o.disease == 1);
        }
        for (i, s) in strata.iter().enumerate() {
            if s.n() == 0 {
                return Err(DataError::MissingStratum { stratum: i + 1 });
            }
            if s.n_cases == 0 || s.n_controls() == 0 {
                return Err(DataError::DegenerateStratum {
                    stratum: i + 1,
                    cases: s.n_cases,
                    controls: s.n_controls(),
                });
            }
        }
        Ok(Self { strata, q, factor_levels: None })
    }

    /// Attaches matching-factor metadata (one level tuple per stratum).
    pub fn with_factor_levels(mut self, levels: Vec<Vec<usize>>) -> Result<Self, DataError> {
        if levels.len() != self.strata.len() {
            return Err(DataError::FactorLen { got: levels.len(), strata: self.strata.len() });
        }
        if let Some(first) = levels.first() {
            let f = first.len();
            if levels.iter().any(|l| l.len() != f) {
                return Err(DataError::FactorShape);
            }
        }
        self.factor_levels = Some(levels);
        Ok(self)
    }

    /// Number of strata.
    pub fn k(&self) -> usize {
        self.strata.len()
    }

    /// Covariate dimension.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Total subjects across strata.
    pub fn n_total(&self) -> usize {
        self.strata.iter().map(Stratum::n).sum()
    }

    /// Stratum by 0-based index.
    pub fn stratum(&self, idx: usize) -> &Stratum {
        &self.strata[idx]
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn factor_levels(&self) -> Option<&[Vec<usize>]> {
        self.factor_levels.as_deref()
    }

    /// Flattens back to observation records (stratum-major, original
    /// within-stratum order), for serialization.
    pub fn to_observations(&self) -> Vec<Observation> {
        let mut out = Vec::with_capacity(self.n_total());
        for (k, s) in self.strata.iter().enumerate() {
            for i in 0..s.n() {
                out.push(Observation {
                    disease: s.disease(i),
                    stratum: k + 1,
                    outcome: s.outcome(i),
                    covariates: s.covariates(i).to_vec(),
                });
            }
        }
        out
    }
}
