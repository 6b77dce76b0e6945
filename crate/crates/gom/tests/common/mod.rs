//! Independent oracles used to check the implementation from a second route.
//! Nothing here calls into the code paths under test.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};

/// Full SVD by one-sided Jacobi: orthogonalize column pairs of the (tall)
/// matrix until all pairwise inner products vanish. Returns singular values in
/// descending order with matching left/right vectors.
pub fn jacobi_svd(x: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let (n, j) = x.dim();
    if n < j {
        let (u, s, v) = jacobi_svd_tall(x.t().to_owned());
        return (v, s, u);
    }
    jacobi_svd_tall(x.to_owned())
}

fn jacobi_svd_tall(mut a: Array2<f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let (n, j) = a.dim();
    let mut v = Array2::<f64>::eye(j);
    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..j {
            for q in p + 1..j {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for r in 0..n {
                    app += a[(r, p)] * a[(r, p)];
                    aqq += a[(r, q)] * a[(r, q)];
                    apq += a[(r, p)] * a[(r, q)];
                }
                if apq.abs() <= eps * (app * aqq).sqrt().max(f64::MIN_POSITIVE) {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let rp = a[(r, p)];
                    let rq = a[(r, q)];
                    a[(r, p)] = c * rp - s * rq;
                    a[(r, q)] = s * rp + c * rq;
                }
                for r in 0..j {
                    let vp = v[(r, p)];
                    let vq = v[(r, q)];
                    v[(r, p)] = c * vp - s * vq;
                    v[(r, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..j)
        .map(|c| a.column(c).iter().map(|&t| t * t).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&i, &k| sigma[k].partial_cmp(&sigma[i]).unwrap());
    let mut u = Array2::<f64>::zeros((n, j));
    let mut vs = Array2::<f64>::zeros((j, j));
    let mut s_sorted = vec![0.0; j];
    for (c, &i) in order.iter().enumerate() {
        s_sorted[c] = sigma[i];
        if sigma[i] > 0.0 {
            u.column_mut(c).assign(&(a.column(i).mapv(|t| t / sigma[i])));
        }
        vs.column_mut(c).assign(&v.column(i));
    }
    sigma = s_sorted;
    (u, sigma, vs)
}

/// Fuzzy modularity evaluated literally as the double sum over all ordered
/// pairs, diagonal included.
pub fn naive_fuzzy_modularity(
    a: &Array2<f64>,
    degrees: &[f64],
    omega: f64,
    pi: ArrayView2<'_, f64>,
) -> f64 {
    let n = a.nrows();
    let mut q = 0.0;
    for i in 0..n {
        for ibar in 0..n {
            let overlap: f64 = pi.row(i).dot(&pi.row(ibar));
            q += (a[(i, ibar)] - degrees[i] * degrees[ibar] / omega) * overlap;
        }
    }
    q / omega
}

/// Newman-Girvan modularity of a hard partition, computed per community.
pub fn newman_girvan(a: &Array2<f64>, degrees: &[f64], omega: f64, labels: &[usize]) -> f64 {
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    let n = a.nrows();
    let mut q = 0.0;
    for c in 0..k {
        let mut internal = 0.0;
        let mut degree = 0.0;
        for i in 0..n {
            if labels[i] != c {
                continue;
            }
            degree += degrees[i];
            for j in 0..n {
                if labels[j] == c {
                    internal += a[(i, j)];
                }
            }
        }
        q += internal / omega - (degree / omega) * (degree / omega);
    }
    q
}

/// Hamming error by explicitly forming every column-permuted truth matrix.
/// Costs are accumulated per column, then across columns, the same evaluation
/// order as the implementation, so values agree bit for bit.
pub fn hamming_oracle(est: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> f64 {
    let (n, k) = est.dim();
    let mut best = f64::INFINITY;
    for perm in permutations(k) {
        let mut permuted = Array2::<f64>::zeros((n, k));
        for (c, &src) in perm.iter().enumerate() {
            permuted.column_mut(c).assign(&truth.column(src));
        }
        let mut total = 0.0;
        for c in 0..k {
            let mut col = 0.0;
            for i in 0..n {
                col += (est[(i, c)] - permuted[(i, c)]).abs();
            }
            total += col;
        }
        if total < best {
            best = total;
        }
    }
    best / n as f64
}

/// All permutations of 0..k in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    let mut used = vec![false; k];
    fn rec(
        k: usize,
        depth: usize,
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if depth == k {
            out.push(current.clone());
            return;
        }
        for v in 0..k {
            if !used[v] {
                used[v] = true;
                current[depth] = v;
                rec(k, depth + 1, current, used, out);
                used[v] = false;
            }
        }
    }
    rec(k, 0, &mut current, &mut used, &mut out);
    out
}

/// Minimum over column permutations of the largest per-row l1 difference.
pub fn max_row_l1_aligned(est: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> f64 {
    let (n, k) = est.dim();
    let mut best = f64::INFINITY;
    for perm in permutations(k) {
        let mut worst = 0.0_f64;
        for i in 0..n {
            let mut rowdiff = 0.0;
            for c in 0..k {
                rowdiff += (est[(i, c)] - truth[(i, perm[c])]).abs();
            }
            worst = worst.max(rowdiff);
        }
        if worst < best {
            best = worst;
        }
    }
    best
}

/// Least-squares coefficients of `row` against the rows of `basis` (small K),
/// solved through the normal equations; returns (coefficients, residual norm).
pub fn least_squares_coeffs(row: ArrayView2<'_, f64>, basis: &Array2<f64>) -> (Vec<f64>, f64) {
    let k = basis.nrows();
    let gram = basis.dot(&basis.t());
    let rhs: Array1<f64> = basis.dot(&row.row(0).to_owned());
    let coeffs = solve_dense(&gram, &rhs);
    let recon = basis.t().dot(&Array1::from(coeffs.clone()));
    let resid = (&row.row(0).to_owned() - &recon)
        .iter()
        .map(|t| t * t)
        .sum::<f64>()
        .sqrt();
    let _ = k;
    (coeffs.to_vec(), resid)
}

fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let k = a.nrows();
    let mut m = a.clone();
    let mut y = b.clone();
    for col in 0..k {
        let mut p = col;
        for r in col + 1..k {
            if m[(r, col)].abs() > m[(p, col)].abs() {
                p = r;
            }
        }
        if p != col {
            for c in 0..k {
                m.swap((col, c), (p, c));
            }
            y.swap(col, p);
        }
        let pivot = m[(col, col)];
        for r in col + 1..k {
            let f = m[(r, col)] / pivot;
            for c in col..k {
                m[(r, c)] -= f * m[(col, c)];
            }
            let yc = y[col];
            y[r] -= f * yc;
        }
    }
    for col in (0..k).rev() {
        let mut s = y[col];
        for c in col + 1..k {
            s -= m[(col, c)] * y[c];
        }
        y[col] = s / m[(col, col)];
    }
    y
}

/// Binomial probability mass function.
pub fn binomial_pmf(m: u32, p: f64, count: u32) -> f64 {
    let mut coeff = 1.0_f64;
    for i in 0..count {
        coeff *= (m - i) as f64 / (i + 1) as f64;
    }
    coeff * p.powi(count as i32) * (1.0 - p).powi((m - count) as i32)
}
