//! Regularized Laplacian construction, deterministic truncated SVD, row
//! scalings, and the small dense solves every estimator leans on.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{ResponseData, ResponseMatrix};
use crate::error::{GomError, Result};

/// Condition-number ceiling beyond which a small solve is rejected.
pub const COND_LIMIT: f64 = 1e12;

/// Relative floor under which a trailing singular value is considered zero.
const RANK_FLOOR: f64 = 1e-12;

/// Rank-K factorization with orthonormal columns and non-increasing singular
/// values.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Array2<f64>,
    pub sigma: Vec<f64>,
    pub v: Array2<f64>,
    /// Set when `sigma[k-1] < 1e-12 * sigma[0]`; not fatal, since inputs of
    /// exact rank K are a supported use.
    pub rank_deficient: bool,
}

/// Row-scaled response matrix `L_tau` together with the scaling that produced
/// it, so it can be undone downstream.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub l_tau: Array2<f64>,
    /// `sqrt(row_sum + tau)` per subject.
    pub d_tau_sqrt: Vec<f64>,
    /// Exact row sums of the input (integer arithmetic for observed data).
    pub row_sums: Vec<f64>,
    pub tau: f64,
}

/// Default regularizer `M * max(N, J)`.
pub fn default_tau(r: &ResponseMatrix) -> f64 {
    f64::from(r.m_max()) * r.n_subjects().max(r.n_items()) as f64
}

/// Divides each row of the data by `sqrt(row_sum + tau)`. The same code path
/// serves the observed and the population matrix.
pub fn regularized_laplacian<D: ResponseData>(data: &D, tau: f64) -> Result<LaplacianPair> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(GomError::InvalidArgument(format!(
            "tau must be a finite nonnegative value, got {tau}"
        )));
    }
    let row_sums = data.row_sums();
    if tau == 0.0 {
        if let Some(row) = row_sums.iter().position(|&s| s == 0.0) {
            return Err(GomError::ZeroRowSum { row });
        }
    }
    let d_tau_sqrt: Vec<f64> = row_sums.iter().map(|&s| (s + tau).sqrt()).collect();
    let mut l_tau = data.values().to_owned();
    for (mut row, &d) in l_tau.rows_mut().into_iter().zip(&d_tau_sqrt) {
        row.mapv_inplace(|v| v / d);
    }
    Ok(LaplacianPair {
        l_tau,
        d_tau_sqrt,
        row_sums,
        tau,
    })
}

/// Multiplies row `i` by `scale[i]`.
pub fn scale_rows(u: &Array2<f64>, scale: &[f64]) -> Result<Array2<f64>> {
    if scale.len() != u.nrows() {
        return Err(GomError::InvalidArgument(format!(
            "scale has {} entries for {} rows",
            scale.len(),
            u.nrows()
        )));
    }
    if let Some(i) = scale.iter().position(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(GomError::InvalidArgument(format!(
            "scale[{i}] = {} is not a positive finite value",
            scale[i]
        )));
    }
    let mut out = u.clone();
    for (mut row, &s) in out.rows_mut().into_iter().zip(scale) {
        row.mapv_inplace(|v| v * s);
    }
    Ok(out)
}

/// Normalizes each row to unit Euclidean norm; returns the normalized matrix
/// and the reciprocals `1 / ||u(i, :)||` that were applied.
pub fn row_normalize(u: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut out = u.clone();
    let mut d_u = Vec::with_capacity(u.nrows());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|&v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(GomError::DegenerateRow { row: i });
        }
        let inv = 1.0 / norm;
        row.mapv_inplace(|v| v * inv);
        d_u.push(inv);
    }
    Ok((out, d_u))
}

/// Solves `a * x = b` for a small square `a` (K <= 64) by LU with partial
/// pivoting plus one step of iterative refinement. Returns the solution and a
/// 1-norm condition estimate; estimates above 1e12 are rejected because they
/// usually mean the vertex hunt failed.
pub fn solve_k_by_k(
    a: &Array2<f64>,
    b: &Array2<f64>,
    stage: &'static str,
) -> Result<(Array2<f64>, f64)> {
    let k = a.nrows();
    if a.ncols() != k {
        return Err(GomError::InvalidArgument(format!(
            "solve_k_by_k needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if k > 64 {
        return Err(GomError::InvalidArgument(format!(
            "solve_k_by_k supports K <= 64, got {k}"
        )));
    }
    if b.nrows() != k {
        return Err(GomError::InvalidArgument(format!(
            "right-hand side has {} rows, expected {k}",
            b.nrows()
        )));
    }

    let lu = match LuFactors::factor(a) {
        Some(lu) => lu,
        None => return Err(GomError::IllConditioned {
            stage,
            cond: f64::INFINITY,
        }),
    };

    // 1-norm condition estimate via the explicit inverse; K is tiny.
    let mut inv_norm_1 = 0.0_f64;
    for j in 0..k {
        let mut e = Array1::<f64>::zeros(k);
        e[j] = 1.0;
        let col = lu.solve_vec(&e);
        inv_norm_1 = inv_norm_1.max(col.iter().map(|v| v.abs()).sum());
    }
    let a_norm_1 = (0..k)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let cond = a_norm_1 * inv_norm_1;
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(GomError::IllConditioned { stage, cond });
    }

    let mut x = Array2::<f64>::zeros(b.raw_dim());
    for (j, bcol) in b.columns().into_iter().enumerate() {
        let sol = lu.solve_vec(&bcol.to_owned());
        // one refinement step
        let r = &bcol.to_owned() - &a.dot(&sol);
        let dx = lu.solve_vec(&r);
        x.column_mut(j).assign(&(&sol + &dx));
    }
    Ok((x, cond))
}

/// Computes `m * a^{-1}` through `solve(a', m')'`.
pub(crate) fn right_solve(
    m: &Array2<f64>,
    a: &Array2<f64>,
    stage: &'static str,
) -> Result<Array2<f64>> {
    let at = a.t().to_owned();
    let mt = m.t().to_owned();
    let (xt, _cond) = solve_k_by_k(&at, &mt, stage)?;
    Ok(xt.t().to_owned())
}

struct LuFactors {
    lu: Array2<f64>,
    piv: Vec<usize>,
}

impl LuFactors {
    fn factor(a: &Array2<f64>) -> Option<Self> {
        let k = a.nrows();
        let mut lu = a.clone();
        let mut piv = Vec::with_capacity(k);
        for col in 0..k {
            let mut p = col;
            let mut best = lu[(col, col)].abs();
            for r in col + 1..k {
                let v = lu[(r, col)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if p != col {
                for c in 0..k {
                    lu.swap((col, c), (p, c));
                }
            }
            piv.push(p);
            let pivot = lu[(col, col)];
            for r in col + 1..k {
                let factor = lu[(r, col)] / pivot;
                lu[(r, col)] = factor;
                for c in col + 1..k {
                    lu[(r, c)] -= factor * lu[(col, c)];
                }
            }
        }
        Some(Self { lu, piv })
    }

    fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        let k = self.lu.nrows();
        let mut y = b.clone();
        for col in 0..k {
            y.swap(col, self.piv[col]);
        }
        for col in 0..k {
            for r in col + 1..k {
                let f = self.lu[(r, col)];
                let yc = y[col];
                y[r] -= f * yc;
            }
        }
        for col in (0..k).rev() {
            let mut s = y[col];
            for c in col + 1..k {
                s -= self.lu[(col, c)] * y[c];
            }
            y[col] = s / self.lu[(col, col)];
        }
        y
    }
}

/// Thin Q factor of a Householder QR; always orthonormal, even when the input
/// is rank deficient.
fn thin_q(a: &Array2<f64>) -> Array2<f64> {
    let (n, b) = a.dim();
    debug_assert!(b <= n);
    let mut w = a.clone();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(b);
    for j in 0..b {
        let norm = (j..n).map(|r| w[(r, j)] * w[(r, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let x0 = w[(j, j)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|r| w[(r, j)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|&t| t * t).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        for t in v.iter_mut() {
            *t /= vnorm;
        }
        for c in j..b {
            let dot: f64 = (j..n).map(|r| v[r - j] * w[(r, c)]).sum();
            for r in j..n {
                w[(r, c)] -= 2.0 * dot * v[r - j];
            }
        }
        reflectors.push(Some(v));
    }

    let mut q = Array2::<f64>::zeros((n, b));
    for c in 0..b {
        let mut y = vec![0.0; n];
        y[c] = 1.0;
        for j in (0..b).rev() {
            if let Some(v) = &reflectors[j] {
                let dot: f64 = (j..n).map(|r| v[r - j] * y[r]).sum();
                for r in j..n {
                    y[r] -= 2.0 * dot * v[r - j];
                }
            }
        }
        for r in 0..n {
            q[(r, c)] = y[r];
        }
    }
    q
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations;
/// eigenvalues come back in descending order.
pub(crate) fn sym_eig_desc(sym: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = sym.nrows();
    let mut a = sym.clone();
    let mut v = Array2::<f64>::eye(n);
    let frob = a.iter().map(|&x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[(p, i)];
                    let aqi = a[(q, i)];
                    a[(p, i)] = c * api - s * aqi;
                    a[(q, i)] = s * api + c * aqi;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let eigs: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (c, &i) in order.iter().enumerate() {
        vecs.column_mut(c).assign(&v.column(i));
    }
    (eigs, vecs)
}

/// Top-k singular triplets by block subspace iteration with oversampling k+8,
/// a fixed internal seed, and per-triplet residual control. Deterministic for
/// a given input.
pub fn truncated_svd(x: ArrayView2<'_, f64>, k: usize, tol: f64) -> Result<SvdFactors> {
    let (n, jdim) = x.dim();
    if k == 0 || k > n.min(jdim) {
        return Err(GomError::InvalidArgument(format!(
            "k = {k} must satisfy 1 <= k <= min({n}, {jdim})"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GomError::InvalidArgument(
            "matrix entries must be finite".into(),
        ));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(GomError::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }

    let b = (k + 8).min(n.min(jdim));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut omega = Array2::<f64>::zeros((jdim, b));
    for v in omega.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }

    let mut q = thin_q(&x.dot(&omega));
    let mut u = Array2::<f64>::zeros((n, k));
    let mut v = Array2::<f64>::zeros((jdim, k));
    let mut sigma = vec![0.0_f64; k];

    for iter in 0..300 {
        let y = x.t().dot(&q); // j x b, equals (q' x)'
        let small = y.t().dot(&y); // b x b
        let (lam, w) = sym_eig_desc(&small);
        for (s, &l) in sigma.iter_mut().zip(lam.iter()) {
            *s = l.max(0.0).sqrt();
        }
        let wk = w.slice(s![.., ..k]).to_owned();
        u = q.dot(&wk);
        let xv_pre = y.dot(&wk); // j x k, equals x' u

        let floor = RANK_FLOOR * sigma[0];
        let mut degenerate = Vec::new();
        for (i, &s) in sigma.iter().enumerate() {
            if s > floor && s > 0.0 {
                let col = xv_pre.column(i).mapv(|t| t / s);
                v.column_mut(i).assign(&col);
            } else {
                degenerate.push(i);
            }
        }
        fill_degenerate_columns(&mut v, &degenerate, jdim);

        let xv = x.dot(&v);
        let mut converged = true;
        for i in 0..k {
            if degenerate.contains(&i) {
                continue;
            }
            let resid: f64 = (0..n)
                .map(|r| {
                    let d = xv[(r, i)] - sigma[i] * u[(r, i)];
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            if resid > tol * sigma[i] {
                converged = false;
                break;
            }
        }
        if converged || iter == 299 {
            break;
        }
        let p = thin_q(&y);
        q = thin_q(&x.dot(&p));
    }

    // Sign convention: largest-magnitude entry of each left vector is positive.
    for i in 0..k {
        let mut arg = 0;
        let mut best = -1.0_f64;
        for r in 0..n {
            let a = u[(r, i)].abs();
            if a > best {
                best = a;
                arg = r;
            }
        }
        if u[(arg, i)] < 0.0 {
            u.column_mut(i).mapv_inplace(|t| -t);
            v.column_mut(i).mapv_inplace(|t| -t);
        }
    }

    let rank_deficient = sigma[0] == 0.0 || sigma[k - 1] < RANK_FLOOR * sigma[0];
    Ok(SvdFactors {
        u,
        sigma,
        v,
        rank_deficient,
    })
}

/// Deterministically completes V columns whose singular value vanished with
/// unit vectors orthogonal to the rest.
fn fill_degenerate_columns(v: &mut Array2<f64>, degenerate: &[usize], jdim: usize) {
    let k = v.ncols();
    for &i in degenerate {
        let mut filled = false;
        for t in 0..jdim {
            let mut cand = Array1::<f64>::zeros(jdim);
            cand[t] = 1.0;
            for c in 0..k {
                // skip self and degenerate columns not yet filled
                if c == i || (c > i && degenerate.contains(&c)) {
                    continue;
                }
                let dot = cand.dot(&v.column(c));
                cand = cand - dot * &v.column(c).to_owned();
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > 1e-3 {
                v.column_mut(i).assign(&(cand / norm));
                filled = true;
                break;
            }
        }
        debug_assert!(filled, "failed to complete an orthonormal basis");
    }
}
