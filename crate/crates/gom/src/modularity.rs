//! Fuzzy modularity of an estimated membership matrix and the argmax-over-k
//! pipeline that selects the number of latent classes.
//!
//! The adjacency matrix is `A = R R'`; its fuzzy modularity is
//!
//! ```text
//! Q = (1/omega) * sum_{i, i'} (A(i,i') - d_i d_i' / omega) <Pi(i,:), Pi(i',:)>
//! ```
//!
//! with `d_i` the row sums of `A` and `omega = sum_i d_i`. The double sum runs
//! over all ordered pairs, diagonal included. With one latent class the value
//! is identically zero, and with one-hot rows it reduces to Newman-Girvan
//! modularity.

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::{MembershipMatrix, Method, ResponseData};
use crate::error::{GomError, Result};
use crate::estimators::{fit, FitConfig};

/// Materializes `A = R R'` with its degrees and total weight. O(N^2) memory;
/// meant for modest N or explicit export. Model selection never calls this —
/// it uses [`fuzzy_modularity_from_data`] instead.
pub fn adjacency<D: ResponseData>(data: &D) -> Result<(Array2<f64>, Vec<f64>, f64)> {
    let r = data.values();
    let a = r.dot(&r.t());
    let degrees: Vec<f64> = a.rows().into_iter().map(|row| row.sum()).collect();
    let omega: f64 = degrees.iter().sum();
    if omega == 0.0 {
        return Err(GomError::DegenerateInput(
            "adjacency matrix has zero total weight".into(),
        ));
    }
    Ok((a, degrees, omega))
}

/// Fuzzy modularity of a soft partition against a materialized adjacency
/// matrix, evaluated through the per-class quadratic forms (equivalent to the
/// pairwise double sum).
pub fn fuzzy_modularity(
    a: &Array2<f64>,
    degrees: &[f64],
    omega: f64,
    pi_hat: &MembershipMatrix,
) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n || degrees.len() != n || pi_hat.n_subjects() != n {
        return Err(GomError::InvalidArgument(
            "adjacency, degrees, and memberships disagree on N".into(),
        ));
    }
    if omega.is_nan() || omega <= 0.0 {
        return Err(GomError::InvalidArgument(format!(
            "omega must be positive, got {omega}"
        )));
    }
    // One class makes the double sum vanish identically.
    if pi_hat.n_classes() == 1 {
        return Ok(0.0);
    }
    let pi = pi_hat.weights();
    let a_pi = a.dot(&pi);
    let mut quad = 0.0_f64;
    for (x, y) in a_pi.iter().zip(pi.iter()) {
        quad += x * y;
    }
    let mut deg = 0.0_f64;
    for col in pi.columns() {
        let dpk: f64 = col.iter().zip(degrees).map(|(&p, &d)| p * d).sum();
        deg += dpk * dpk;
    }
    Ok((quad - deg / omega) / omega)
}

/// Fuzzy modularity computed straight from the responses without forming
/// `A = R R'`: `Q = (1/omega) (sum_k ||R' pi_k||^2 - sum_k (d' pi_k)^2 / omega)`,
/// an O(NJK) evaluation.
pub fn fuzzy_modularity_from_data<D: ResponseData>(
    data: &D,
    pi_hat: &MembershipMatrix,
) -> Result<f64> {
    let r = data.values();
    let n = r.nrows();
    if pi_hat.n_subjects() != n {
        return Err(GomError::InvalidArgument(format!(
            "memberships cover {} subjects, data has {n}",
            pi_hat.n_subjects()
        )));
    }
    // column sums c, degrees d_i = <R(i,:), c>, omega = sum d
    let cols: Vec<f64> = r.columns().into_iter().map(|c| c.sum()).collect();
    let degrees: Vec<f64> = r
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(&cols).map(|(&v, &c)| v * c).sum())
        .collect();
    let omega: f64 = degrees.iter().sum();
    if omega == 0.0 {
        return Err(GomError::DegenerateInput(
            "adjacency matrix has zero total weight".into(),
        ));
    }
    if pi_hat.n_classes() == 1 {
        return Ok(0.0);
    }
    let pi = pi_hat.weights();
    let gram = r.t().dot(&pi); // J x K
    let quad: f64 = gram.iter().map(|&v| v * v).sum();
    let mut deg = 0.0_f64;
    for col in pi.columns() {
        let dpk: f64 = col.iter().zip(&degrees).map(|(&p, &d)| p * d).sum();
        deg += dpk * dpk;
    }
    Ok((quad - deg / omega) / omega)
}

/// Modularity values across a range of candidate class counts, plus the argmax
/// (ties resolved toward the smallest k). Candidates whose fit failed carry
/// `-inf` and a diagnostic.
#[derive(Debug, Clone)]
pub struct ModularityCurve {
    pub k_values: Vec<usize>,
    pub q_values: Vec<f64>,
    pub argmax_k: usize,
    pub diagnostics: Vec<Option<String>>,
}

impl ModularityCurve {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,q")?;
        for (k, q) in self.k_values.iter().zip(&self.q_values) {
            writeln!(w, "{k},{q}")?;
        }
        Ok(())
    }
}

/// Fits the chosen method for every `k` in `k_min..=k_max`, scores each fit by
/// fuzzy modularity, and returns the curve with its argmax. `cfg.k` is
/// overridden by each candidate.
pub fn select_k<D: ResponseData + Sync>(
    data: &D,
    method: Method,
    k_min: usize,
    k_max: usize,
    cfg: &FitConfig,
) -> Result<ModularityCurve> {
    let max_k = data.n_subjects().min(data.n_items());
    if k_min == 0 || k_min > k_max || k_max > max_k {
        return Err(GomError::InvalidArgument(format!(
            "need 1 <= k_min <= k_max <= min(N, J) = {max_k}, got {k_min}..={k_max}"
        )));
    }
    let k_values: Vec<usize> = (k_min..=k_max).collect();
    let scored: Vec<(f64, Option<String>)> = k_values
        .par_iter()
        .map(|&k| {
            let mut candidate = cfg.clone();
            candidate.k = k;
            match fit(method, data, &candidate)
                .and_then(|res| fuzzy_modularity_from_data(data, &res.pi_hat))
            {
                Ok(q) => (q, None),
                Err(e) => (f64::NEG_INFINITY, Some(e.to_string())),
            }
        })
        .collect();

    if scored.iter().all(|(q, _)| *q == f64::NEG_INFINITY) {
        return Err(GomError::SelectionFailed);
    }
    let mut argmax_k = k_values[0];
    let mut best = f64::NEG_INFINITY;
    for (&k, (q, _)) in k_values.iter().zip(&scored) {
        if *q > best {
            best = *q;
            argmax_k = k;
        }
    }
    let (q_values, diagnostics): (Vec<f64>, Vec<Option<String>>) =
        scored.into_iter().unzip();
    Ok(ModularityCurve {
        k_values,
        q_values,
        argmax_k,
        diagnostics,
    })
}
