//! Domain types for categorical response data and estimation output.
//!
//! A response matrix holds the observed data: `N` subjects, `J` items, integer
//! responses in `0..=M` where 0 means no response. The estimators also run on
//! real-valued nonnegative matrices so that the population matrix `Pi * Theta'`
//! can be pushed through the exact same code path in oracle tests.

use ndarray::{Array2, ArrayView2};

use crate::error::{GomError, Result};

/// Dense nonnegative data an estimator can operate on: an observed response
/// matrix or a real-valued population matrix.
pub trait ResponseData {
    fn values(&self) -> ArrayView2<'_, f64>;

    fn n_subjects(&self) -> usize {
        self.values().nrows()
    }

    fn n_items(&self) -> usize {
        self.values().ncols()
    }

    /// Per-subject row sums. Integer data is accumulated in integer arithmetic
    /// so the sums are exact.
    fn row_sums(&self) -> Vec<f64>;

    /// Smallest integral bound on the entries: `M` for observed responses, the
    /// ceiling of the largest entry for real-valued input. Used for the default
    /// regularizer and for clipping estimated item parameters.
    fn response_ceiling(&self) -> f64;
}

/// Observed `N x J` response matrix with integer entries in `0..=m_max`.
///
/// Entries are stored as `f64` (validated to be integral) so the spectral
/// pipeline can borrow them without copying.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    values: Array2<f64>,
    m_max: u32,
}

impl ResponseMatrix {
    /// Validates shape and entry range. Rows that are entirely zero are
    /// permitted here; ingestion cleanup lives in [`validate_response_matrix`].
    pub fn new(values: Array2<f64>, m_max: u32) -> Result<Self> {
        if m_max == 0 {
            return Err(GomError::InvalidArgument("m_max must be >= 1".into()));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(GomError::DegenerateInput("empty response matrix".into()));
        }
        for ((i, j), &v) in values.indexed_iter() {
            if !v.is_finite() || v.fract() != 0.0 || v < 0.0 || v > f64::from(m_max) {
                return Err(GomError::EntryOutOfRange {
                    row: i,
                    col: j,
                    value: if v.is_finite() && v.abs() < 1e18 {
                        v as i64
                    } else {
                        i64::MAX
                    },
                    max: m_max,
                });
            }
        }
        Ok(Self { values, m_max })
    }

    pub fn m_max(&self) -> u32 {
        self.m_max
    }

    /// Fraction of zero entries (the no-response proportion).
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.values.iter().filter(|&&v| v == 0.0).count();
        zeros as f64 / (self.values.len() as f64)
    }

    pub fn to_real(&self) -> RealMatrix {
        RealMatrix {
            values: self.values.clone(),
        }
    }
}

impl ResponseData for ResponseMatrix {
    fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    fn row_sums(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|&v| v as u64).sum::<u64>() as f64)
            .collect()
    }

    fn response_ceiling(&self) -> f64 {
        f64::from(self.m_max)
    }
}

/// Real-valued nonnegative `N x J` matrix; houses the population matrix so the
/// noiseless algorithms are the same code as the noisy ones.
#[derive(Debug, Clone)]
pub struct RealMatrix {
    values: Array2<f64>,
}

impl RealMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(GomError::DegenerateInput("empty matrix".into()));
        }
        if let Some(((i, j), &v)) = values
            .indexed_iter()
            .find(|(_, &v)| !v.is_finite() || v < 0.0)
        {
            return Err(GomError::InvalidArgument(format!(
                "entry ({i}, {j}) = {v} is not a finite nonnegative value"
            )));
        }
        Ok(Self { values })
    }
}

impl ResponseData for RealMatrix {
    fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    fn row_sums(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|row| row.sum())
            .collect()
    }

    fn response_ceiling(&self) -> f64 {
        let max = self.values.iter().cloned().fold(0.0_f64, f64::max);
        max.ceil().max(1.0)
    }
}

/// Result of ingestion cleanup: the validated matrix plus the original indices
/// of subjects removed because they responded to nothing.
#[derive(Debug, Clone)]
pub struct IngestedMatrix {
    pub matrix: ResponseMatrix,
    pub dropped_rows: Vec<usize>,
}

/// Validates a raw integer grid and drops all-zero subjects, reporting their
/// original row indices. Idempotent: re-validating the output changes nothing.
pub fn validate_response_matrix(raw: &[Vec<i64>], m_max: u32) -> Result<IngestedMatrix> {
    if m_max == 0 {
        return Err(GomError::InvalidArgument("m_max must be >= 1".into()));
    }
    if raw.is_empty() {
        return Err(GomError::DegenerateInput("empty response matrix".into()));
    }
    let width = raw[0].len();
    for (i, row) in raw.iter().enumerate() {
        if row.len() != width {
            return Err(GomError::InvalidArgument(format!(
                "row {i} has {} entries, expected {width}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            if v < 0 || v > i64::from(m_max) {
                return Err(GomError::EntryOutOfRange {
                    row: i,
                    col: j,
                    value: v,
                    max: m_max,
                });
            }
        }
    }
    if width == 0 {
        return Err(GomError::DegenerateInput("response matrix has no items".into()));
    }

    let mut dropped_rows = Vec::new();
    let mut kept = Vec::new();
    for (i, row) in raw.iter().enumerate() {
        if row.iter().all(|&v| v == 0) {
            dropped_rows.push(i);
        } else {
            kept.push(row);
        }
    }
    if kept.is_empty() {
        return Err(GomError::DegenerateInput(
            "all subjects were dropped: every row is entirely zero".into(),
        ));
    }
    let mut values = Array2::<f64>::zeros((kept.len(), width));
    for (i, row) in kept.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values[(i, j)] = v as f64;
        }
    }
    Ok(IngestedMatrix {
        matrix: ResponseMatrix::new(values, m_max)?,
        dropped_rows,
    })
}

/// Tolerance on membership row sums, asserted on construction.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// `N x K` nonnegative row-stochastic matrix; houses the true memberships and
/// every estimate of them.
#[derive(Debug, Clone)]
pub struct MembershipMatrix {
    weights: Array2<f64>,
}

impl MembershipMatrix {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(GomError::DegenerateInput("empty membership matrix".into()));
        }
        for ((i, j), &v) in weights.indexed_iter() {
            if !v.is_finite() || !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(&v) {
                return Err(GomError::InvalidArgument(format!(
                    "membership ({i}, {j}) = {v} is outside [0, 1]"
                )));
            }
        }
        for (i, row) in weights.rows().into_iter().enumerate() {
            let sum = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(GomError::InvalidArgument(format!(
                    "membership row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn n_subjects(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.weights.ncols()
    }
}

/// `J x K` item parameter matrix together with its largest entry `rho`, the
/// sparsity parameter.
#[derive(Debug, Clone)]
pub struct ItemParams {
    theta: Array2<f64>,
    rho: f64,
}

impl ItemParams {
    pub fn new(theta: Array2<f64>) -> Result<Self> {
        if theta.nrows() == 0 || theta.ncols() == 0 {
            return Err(GomError::DegenerateInput("empty item parameter matrix".into()));
        }
        if let Some(((j, k), &v)) = theta
            .indexed_iter()
            .find(|(_, &v)| !v.is_finite() || v < 0.0)
        {
            return Err(GomError::InvalidArgument(format!(
                "item parameter ({j}, {k}) = {v} is not a finite nonnegative value"
            )));
        }
        let rho = theta.iter().cloned().fold(0.0_f64, f64::max);
        Ok(Self { theta, rho })
    }

    pub fn theta(&self) -> ArrayView2<'_, f64> {
        self.theta.view()
    }

    /// Sparsity parameter: the largest item parameter.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Normalized item parameters `theta / rho`; its largest entry is 1
    /// whenever `rho > 0`, and it is all zeros otherwise.
    pub fn b(&self) -> Array2<f64> {
        if self.rho > 0.0 {
            &self.theta / self.rho
        } else {
            Array2::zeros(self.theta.raw_dim())
        }
    }

    pub fn n_items(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.theta.ncols()
    }
}

/// Fitting algorithm tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Simplex regularized spectral clustering.
    Srsc,
    /// Cone regularized spectral clustering.
    Crsc,
    /// Simplex spectral clustering on the raw response matrix.
    Ssc,
    /// Successive projection directly on response rows; no SVD involved.
    Srm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Srsc, Method::Crsc, Method::Ssc, Method::Srm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Srsc => "SRSC",
            Method::Crsc => "CRSC",
            Method::Ssc => "SSC",
            Method::Srm => "SRM",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "srsc" => Ok(Method::Srsc),
            "crsc" => Ok(Method::Crsc),
            "ssc" => Ok(Method::Ssc),
            "srm" => Ok(Method::Srm),
            other => Err(GomError::InvalidArgument(format!(
                "unknown method '{other}' (expected srsc, crsc, ssc, or srm)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a fit produces: estimated memberships and item parameters, the
/// anchor subjects, the singular values that were used, and bookkeeping.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub pi_hat: MembershipMatrix,
    pub theta_hat: ItemParams,
    /// One estimated pure subject per latent class, in discovery order.
    pub index_set: Vec<usize>,
    /// Top singular values consumed by the fit; empty for SRM, which performs
    /// no decomposition.
    pub singular_values: Vec<f64>,
    pub method: Method,
    /// Regularizer actually used; `None` for the methods that have none.
    pub tau: Option<f64>,
    /// Wall-clock seconds spent inside the fit.
    pub elapsed: f64,
    /// Subjects whose weight rows collapsed and were replaced by the uniform
    /// membership.
    pub degenerate_rows: Vec<usize>,
}

impl EstimationResult {
    pub fn validate(&self) -> Result<()> {
        let n = self.pi_hat.n_subjects();
        let k = self.pi_hat.n_classes();
        if self.theta_hat.n_classes() != k {
            return Err(GomError::InvalidArgument(format!(
                "pi_hat has {k} classes but theta_hat has {}",
                self.theta_hat.n_classes()
            )));
        }
        if self.index_set.len() != k {
            return Err(GomError::InvalidArgument(format!(
                "index set has {} entries, expected {k}",
                self.index_set.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for &i in &self.index_set {
            if i >= n {
                return Err(GomError::InvalidArgument(format!(
                    "index set entry {i} out of range for {n} subjects"
                )));
            }
            if !seen.insert(i) {
                return Err(GomError::InvalidArgument(format!(
                    "index set entry {i} is duplicated"
                )));
            }
        }
        for w in self.singular_values.windows(2) {
            if w[1] > w[0] || w[0].is_nan() || w[1].is_nan() {
                return Err(GomError::InvalidArgument(
                    "singular values are not non-increasing".into(),
                ));
            }
        }
        if self.singular_values.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(GomError::InvalidArgument(
                "singular values must be strictly positive".into(),
            ));
        }
        if !self.elapsed.is_finite() || self.elapsed < 0.0 {
            return Err(GomError::InvalidArgument("elapsed time must be finite".into()));
        }
        Ok(())
    }
}
