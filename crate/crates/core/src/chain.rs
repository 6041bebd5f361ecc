//! State spaces, sparse row-stochastic kernels and validated chain specifications.
//!
//! Everything downstream works on dense state indices `0..N`; labels are only
//! kept for reporting. Validation is the single entry point that turns raw
//! label-keyed maps (typically parsed from a chain file) into a [`ChainSpec`].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance on row sums and initial mass.
pub const DEFAULT_ROW_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("state space is empty")]
    EmptyStateSpace,
    #[error("state label at position {0} is empty")]
    EmptyLabel(usize),
    #[error("duplicate state label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown state `{label}` referenced in {section}")]
    UnknownLabel { section: Section, label: String },
    #[error("{section} entry for `{label}` is negative ({value})")]
    NegativeProbability { section: Section, label: String, value: f64 },
    #[error("{section} entry for `{label}` is not a finite number")]
    NonFinite { section: Section, label: String },
    #[error("row `{row}` sums to {sum}, expected 1 within {tol:e}")]
    RowSumError { row: String, sum: f64, tol: f64 },
    #[error("initial distribution has total mass {sum}, expected 1 within {tol:e}")]
    InitialMassError { sum: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Which part of a chain description an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Transitions,
    Initial,
    G,
}

impl std::fmt::Display for Section {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Section::Transitions => "transitions",
            Section::Initial => "initial",
            Section::G => "g",
        })
    }
}

impl ChainError {
    /// The label (and section) the error is anchored to, if any.
    pub fn anchor(&self) -> Option<(Section, &str)> {
        match self {
            ChainError::UnknownLabel { section, label }
            | ChainError::NegativeProbability { section, label, .. }
            | ChainError::NonFinite { section, label } => Some((*section, label)),
            ChainError::RowSumError { row, .. } => Some((Section::Transitions, row)),
            _ => None,
        }
    }
}

/// Ordered, unique state labels with the inverse lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl StateSpace {
    pub fn new<I, S>(labels: I) -> Result<Self, ChainError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(ChainError::EmptyStateSpace);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() {
                return Err(ChainError::EmptyLabel(i));
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(ChainError::DuplicateLabel(label.clone()));
            }
        }
        Ok(StateSpace { labels, index })
    }

    /// States labelled `0`, `1`, ... `n-1`.
    pub fn numbered(n: usize) -> Result<Self, ChainError> {
        Self::new((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// Sparse row-stochastic matrix in compressed-row form.
///
/// Columns within a row are strictly increasing and every stored value is in
/// `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds a matrix from per-row `(column, probability)` lists.
    ///
    /// Zero entries are dropped, duplicate columns are summed, and rows whose
    /// sum is within `row_tol` of 1 are renormalized.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, row_tol: f64) -> Result<Self, ChainError> {
        let n = rows.len();
        if n == 0 {
            return Err(ChainError::EmptyStateSpace);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        row_ptr.push(0);
        for (r, row) in rows.into_iter().enumerate() {
            let mut entries: BTreeMap<usize, f64> = BTreeMap::new();
            for (c, p) in row {
                if c >= n {
                    return Err(ChainError::Dimension(format!(
                        "row {r} references column {c} of an {n}-state matrix"
                    )));
                }
                check_weight(Section::Transitions, &r.to_string(), p)?;
                if p > 0.0 {
                    *entries.entry(c).or_insert(0.0) += p;
                }
            }
            let (c, p): (Vec<usize>, Vec<f64>) = entries.into_iter().unzip();
            let p = normalize(p, row_tol).map_err(|sum| ChainError::RowSumError {
                row: r.to_string(),
                sum,
                tol: row_tol,
            })?;
            cols.extend(c);
            probs.extend(p);
            row_ptr.push(cols.len());
        }
        Ok(StochasticMatrix { row_ptr, cols, probs })
    }

    /// Dense row-major input; convenient for tests and small examples.
    pub fn from_dense(rows: &[Vec<f64>], row_tol: f64) -> Result<Self, ChainError> {
        let n = rows.len();
        let sparse = rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                if row.len() != n {
                    return Err(ChainError::Dimension(format!(
                        "row {r} has {} entries, expected {n}",
                        row.len()
                    )));
                }
                Ok(row.iter().copied().enumerate().collect())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(sparse, row_tol)
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix {
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            probs: vec![1.0; n],
        }
    }

    pub fn n_states(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Stored `(column, probability)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl ExactSizeIterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.probs[span].iter().copied())
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_probs(&self, i: usize) -> &[f64] {
        &self.probs[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = self.row_cols(i);
        match cols.binary_search(&j) {
            Ok(k) => self.row_probs(i)[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_states();
        (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                for (j, p) in self.row(i) {
                    row[j] = p;
                }
                row
            })
            .collect()
    }

    /// Row vector times matrix: `out = v P`.
    pub fn left_mul(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, p) in self.row(i) {
                out[j] += vi * p;
            }
        }
    }
}

/// Sparse probability vector over state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    weights: BTreeMap<usize, f64>,
}

impl Distribution {
    pub fn from_weights(
        n_states: usize,
        weights: impl IntoIterator<Item = (usize, f64)>,
        tol: f64,
    ) -> Result<Self, ChainError> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, w) in weights {
            if i >= n_states {
                return Err(ChainError::Dimension(format!(
                    "initial weight on index {i} of an {n_states}-state chain"
                )));
            }
            check_weight(Section::Initial, &i.to_string(), w)?;
            if w > 0.0 {
                *acc.entry(i).or_insert(0.0) += w;
            }
        }
        let (idx, w): (Vec<usize>, Vec<f64>) = acc.into_iter().unzip();
        let w = normalize(w, tol).map_err(|sum| ChainError::InitialMassError { sum, tol })?;
        Ok(Distribution {
            weights: idx.into_iter().zip(w).collect(),
        })
    }

    pub fn point(i: usize) -> Self {
        Distribution {
            weights: BTreeMap::from([(i, 1.0)]),
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights.get(&i).copied().unwrap_or(0.0)
    }

    /// Support in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().map(|(&i, &w)| (i, w))
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (i, w) in self.iter() {
            v[i] = w;
        }
        v
    }
}

/// A fully validated finite chain: state space, kernel, initial law and an
/// optional observable `g` (zero where absent).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub space: StateSpace,
    pub p: StochasticMatrix,
    pub mu0: Distribution,
    pub g: Option<BTreeMap<usize, f64>>,
}

impl ChainSpec {
    pub fn n_states(&self) -> usize {
        self.space.len()
    }

    /// `g` as a dense vector; the zero function when absent.
    pub fn g_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        if let Some(g) = &self.g {
            for (&i, &x) in g {
                v[i] = x;
            }
        }
        v
    }

    /// Label-keyed form accepted by [`validate_chain`].
    pub fn to_raw(&self) -> RawChain {
        let label = |i: usize| self.space.label(i).to_owned();
        RawChain {
            states: self.space.labels().to_vec(),
            transitions: (0..self.n_states())
                .map(|i| (label(i), self.p.row(i).map(|(j, p)| (label(j), p)).collect()))
                .collect(),
            initial: self.mu0.iter().map(|(i, w)| (label(i), w)).collect(),
            g: self
                .g
                .as_ref()
                .map(|g| g.iter().map(|(&i, &x)| (label(i), x)).collect()),
        }
    }
}

/// Chain file document: label-keyed, unknown top-level keys rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChain {
    pub states: Vec<String>,
    pub transitions: BTreeMap<String, BTreeMap<String, f64>>,
    pub initial: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<BTreeMap<String, f64>>,
}

/// Validates a raw chain description against `row_tol`.
pub fn validate_chain(raw: &RawChain, row_tol: f64) -> Result<ChainSpec, ChainError> {
    let space = StateSpace::new(raw.states.iter().cloned())?;
    let n = space.len();
    let lookup = |section: Section, label: &str| {
        space.index_of(label).ok_or_else(|| ChainError::UnknownLabel {
            section,
            label: label.to_owned(),
        })
    };

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (from, targets) in &raw.transitions {
        let i = lookup(Section::Transitions, from)?;
        for (to, &p) in targets {
            let j = lookup(Section::Transitions, to)?;
            check_weight(Section::Transitions, from, p)?;
            rows[i].push((j, p));
        }
    }
    // Re-label row errors: from_rows only knows indices.
    let p = StochasticMatrix::from_rows(rows, row_tol).map_err(|e| match e {
        ChainError::RowSumError { row, sum, tol } => ChainError::RowSumError {
            row: space.label(row.parse().expect("numeric row")).to_owned(),
            sum,
            tol,
        },
        other => other,
    })?;

    let mut initial = Vec::with_capacity(raw.initial.len());
    for (label, &w) in &raw.initial {
        let i = lookup(Section::Initial, label)?;
        check_weight(Section::Initial, label, w)?;
        initial.push((i, w));
    }
    let mu0 = Distribution::from_weights(n, initial, row_tol)?;

    let g = match &raw.g {
        None => None,
        Some(g) => {
            let mut out = BTreeMap::new();
            for (label, &x) in g {
                let i = lookup(Section::G, label)?;
                if !x.is_finite() {
                    return Err(ChainError::NonFinite {
                        section: Section::G,
                        label: label.clone(),
                    });
                }
                out.insert(i, x);
            }
            Some(out)
        }
    };

    Ok(ChainSpec { space, p, mu0, g })
}

fn check_weight(section: Section, label: &str, w: f64) -> Result<(), ChainError> {
    if !w.is_finite() {
        return Err(ChainError::NonFinite {
            section,
            label: label.to_owned(),
        });
    }
    if w < 0.0 {
        return Err(ChainError::NegativeProbability {
            section,
            label: label.to_owned(),
            value: w,
        });
    }
    Ok(())
}

/// Rescales `w` to unit mass if it is within `tol` of 1; returns the sum otherwise.
///
/// Sums already equal to 1 up to accumulated rounding are left untouched so
/// that normalizing twice is the identity.
fn normalize(mut w: Vec<f64>, tol: f64) -> Result<Vec<f64>, f64> {
    let sum: f64 = w.iter().sum();
    if !((sum - 1.0).abs() <= tol) {
        return Err(sum);
    }
    let rounding = 2.0 * (w.len() as f64 + 1.0) * f64::EPSILON;
    if (sum - 1.0).abs() > rounding {
        w.iter_mut().for_each(|x| *x /= sum);
    }
    w.iter_mut().for_each(|x| *x = x.min(1.0));
    Ok(w)
}
