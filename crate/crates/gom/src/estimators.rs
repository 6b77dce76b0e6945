//! The four fitting algorithms and the shared membership / item-parameter
//! recovery steps.
//!
//! All of them accept any [`ResponseData`], so the noiseless population matrix
//! runs through exactly the code that handles observed responses — which is
//! what makes exact-recovery oracle tests possible.

use std::time::Instant;

use ndarray::Array2;

use crate::data::{
    EstimationResult, ItemParams, MembershipMatrix, Method, ResponseData,
};
use crate::error::{GomError, Result};
use crate::linalg::{
    regularized_laplacian, right_solve, row_normalize, scale_rows, solve_k_by_k,
    truncated_svd,
};
use crate::vertex::{successive_projection, svm_cone, IndexSet};

/// Regularizer choice: the documented default or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    /// `response_ceiling * max(N, J)`.
    Auto,
    Fixed(f64),
}

/// Knobs shared by every fit.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub k: usize,
    pub tau: Tau,
    pub svd_tol: f64,
    /// Width of the margin band used to collect cone corner candidates. A wide
    /// band lets the cluster centroids average corner noise away; on observed
    /// data 1.0 (margins within twice the minimum) works well, while noiseless
    /// input wants a tight band like 1e-6 so only exact corners qualify.
    pub margin_slack: f64,
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            tau: Tau::Auto,
            svd_tol: 1e-10,
            margin_slack: 1.0,
        }
    }

    pub fn with_tau(mut self, tau: Tau) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_svd_tol(mut self, tol: f64) -> Self {
        self.svd_tol = tol;
        self
    }

    pub fn with_margin_slack(mut self, slack: f64) -> Self {
        self.margin_slack = slack;
        self
    }

    fn validate<D: ResponseData>(&self, data: &D) -> Result<()> {
        let max_k = data.n_subjects().min(data.n_items());
        if self.k == 0 || self.k > max_k {
            return Err(GomError::InvalidArgument(format!(
                "k = {} must satisfy 1 <= k <= min(N, J) = {max_k}",
                self.k
            )));
        }
        if let Tau::Fixed(t) = self.tau {
            if !t.is_finite() || t < 0.0 {
                return Err(GomError::InvalidArgument(format!(
                    "tau must be finite and nonnegative, got {t}"
                )));
            }
        }
        Ok(())
    }

    fn resolve_tau<D: ResponseData>(&self, data: &D) -> f64 {
        match self.tau {
            Tau::Fixed(t) => t,
            Tau::Auto => {
                data.response_ceiling() * data.n_subjects().max(data.n_items()) as f64
            }
        }
    }
}

/// Clips weights at zero and normalizes each row to unit 1-norm. Rows whose
/// clipped mass falls under 1e-12 become the uniform membership and are
/// reported back.
pub fn memberships_from_weights(z: &Array2<f64>) -> Result<(MembershipMatrix, Vec<usize>)> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(GomError::InvalidArgument(
            "weights must be finite".into(),
        ));
    }
    let k = z.ncols();
    let mut out = z.mapv(|v| v.max(0.0));
    let mut degenerate = Vec::new();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let mass: f64 = row.iter().sum();
        if mass < 1e-12 {
            row.fill(1.0 / k as f64);
            degenerate.push(i);
        } else {
            row.mapv_inplace(|v| v / mass);
        }
    }
    Ok((MembershipMatrix::new(out)?, degenerate))
}

/// Estimated item parameters `clip(R' Pi (Pi' Pi)^{-1}, 0, m_max)`.
pub fn item_params<D: ResponseData>(
    data: &D,
    pi_hat: &MembershipMatrix,
    m_max: f64,
) -> Result<ItemParams> {
    if pi_hat.n_subjects() != data.n_subjects() {
        return Err(GomError::InvalidArgument(format!(
            "membership matrix has {} rows for {} subjects",
            pi_hat.n_subjects(),
            data.n_subjects()
        )));
    }
    let pi = pi_hat.weights();
    let gram = pi.t().dot(&pi); // K x K
    let w = data.values().t().dot(&pi); // J x K
    let (yt, _cond) = solve_k_by_k(&gram, &w.t().to_owned(), "item parameter recovery")?;
    let theta = yt.t().mapv(|v| v.max(0.0).min(m_max));
    ItemParams::new(theta)
}

/// Simplex regularized spectral clustering: SVD of the regularized Laplacian,
/// row scaling back by `sqrt(D + tau)`, successive projection, then the shared
/// recovery steps.
pub fn fit_srsc<D: ResponseData>(data: &D, cfg: &FitConfig) -> Result<EstimationResult> {
    let start = Instant::now();
    cfg.validate(data)?;
    let tau = cfg.resolve_tau(data);
    let lap = regularized_laplacian(data, tau)?;
    let svd = truncated_svd(lap.l_tau.view(), cfg.k, cfg.svd_tol)?;
    let u_tau = scale_rows(&svd.u, &lap.d_tau_sqrt)?;
    let anchors = successive_projection(u_tau.view(), cfg.k)?;
    let corner = take_rows(&u_tau, &anchors.indices);
    let z = right_solve(&u_tau, &corner, "simplex membership recovery")?;
    finish(
        data,
        Method::Srsc,
        Some(tau),
        anchors,
        svd.sigma,
        z,
        start,
    )
}

/// Cone regularized spectral clustering: SVD of the regularized Laplacian,
/// unit-normalized rows, corner hunting on the cone, then recovery with the
/// corner scalings undone.
pub fn fit_crsc<D: ResponseData>(data: &D, cfg: &FitConfig) -> Result<EstimationResult> {
    let start = Instant::now();
    cfg.validate(data)?;
    let tau = cfg.resolve_tau(data);
    let lap = regularized_laplacian(data, tau)?;
    let svd = truncated_svd(lap.l_tau.view(), cfg.k, cfg.svd_tol)?;
    let (u_star, d_u) = row_normalize(&svd.u)?;
    let anchors = svm_cone(u_star.view(), cfg.k, cfg.margin_slack)?;
    let corner = take_rows(&u_star, &anchors.indices);
    let mut z = right_solve(&svd.u, &corner, "cone membership recovery")?;
    for (c, &idx) in anchors.indices.iter().enumerate() {
        let scale = d_u[idx] / lap.d_tau_sqrt[idx];
        z.column_mut(c).mapv_inplace(|v| v * scale);
    }
    finish(
        data,
        Method::Crsc,
        Some(tau),
        anchors,
        svd.sigma,
        z,
        start,
    )
}

/// Simplex spectral clustering on the raw data: SVD of the responses
/// themselves, successive projection on the left factor, shared recovery.
pub fn fit_ssc<D: ResponseData>(data: &D, cfg: &FitConfig) -> Result<EstimationResult> {
    let start = Instant::now();
    cfg.validate(data)?;
    let svd = truncated_svd(data.values(), cfg.k, cfg.svd_tol)?;
    let anchors = successive_projection(svd.u.view(), cfg.k)?;
    let corner = take_rows(&svd.u, &anchors.indices);
    let z = right_solve(&svd.u, &corner, "simplex membership recovery")?;
    finish(data, Method::Ssc, None, anchors, svd.sigma, z, start)
}

/// Successive projection straight on the response rows; weights come from the
/// normal equations against the anchor rows, with no decomposition at all.
pub fn fit_srm<D: ResponseData>(data: &D, cfg: &FitConfig) -> Result<EstimationResult> {
    let start = Instant::now();
    cfg.validate(data)?;
    let values = data.values();
    let anchors = successive_projection(values, cfg.k)?;
    let rows = take_rows(&values.to_owned(), &anchors.indices); // K x J
    let gram = rows.dot(&rows.t()); // K x K
    let w = values.dot(&rows.t()); // N x K
    let z = right_solve(&w, &gram, "anchor-row normal equations")?;
    finish(data, Method::Srm, None, anchors, Vec::new(), z, start)
}

/// Dispatches on the method tag.
pub fn fit<D: ResponseData>(
    method: Method,
    data: &D,
    cfg: &FitConfig,
) -> Result<EstimationResult> {
    match method {
        Method::Srsc => fit_srsc(data, cfg),
        Method::Crsc => fit_crsc(data, cfg),
        Method::Ssc => fit_ssc(data, cfg),
        Method::Srm => fit_srm(data, cfg),
    }
}

fn take_rows(m: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((indices.len(), m.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

fn finish<D: ResponseData>(
    data: &D,
    method: Method,
    tau: Option<f64>,
    anchors: IndexSet,
    singular_values: Vec<f64>,
    z: Array2<f64>,
    start: Instant,
) -> Result<EstimationResult> {
    let (pi_hat, degenerate_rows) = memberships_from_weights(&z)?;
    let theta_hat = item_params(data, &pi_hat, data.response_ceiling())?;
    let result = EstimationResult {
        pi_hat,
        theta_hat,
        index_set: anchors.indices,
        singular_values,
        method,
        tau,
        elapsed: start.elapsed().as_secs_f64(),
        degenerate_rows,
    };
    result.validate()?;
    Ok(result)
}
