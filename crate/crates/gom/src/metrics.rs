//! Evaluation metrics: permutation-aligned Hamming and Relative errors,
//! K-recovery accuracy, and purity proportions.

use crate::data::{ItemParams, MembershipMatrix};
use crate::error::{GomError, Result};

/// Largest K for which the brute-force permutation search runs.
pub const MAX_ALIGN_K: usize = 10;

/// An error value together with the column permutation that attains it:
/// `permutation[k]` is the truth column aligned with estimate column `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedError {
    pub value: f64,
    pub permutation: Vec<usize>,
}

/// Minimum over all K! column permutations of the entrywise 1-norm difference
/// divided by N. "1-norm" here means the sum of absolute entries (the
/// per-subject l1 distances summed over subjects), not the induced matrix
/// 1-norm; the value lies in [0, 2].
pub fn hamming_error(
    pi_hat: &MembershipMatrix,
    pi_true: &MembershipMatrix,
) -> Result<AlignedError> {
    let n = pi_hat.n_subjects();
    let k = pi_hat.n_classes();
    if pi_true.n_subjects() != n || pi_true.n_classes() != k {
        return Err(GomError::InvalidArgument(format!(
            "shape mismatch: {n}x{k} vs {}x{}",
            pi_true.n_subjects(),
            pi_true.n_classes()
        )));
    }
    if k > MAX_ALIGN_K {
        return Err(GomError::UnsupportedK {
            k,
            what: "permutation alignment",
            max: MAX_ALIGN_K,
        });
    }
    let est = pi_hat.weights();
    let truth = pi_true.weights();
    // column_cost[k][l] = sum_i |est(i,k) - truth(i,l)|
    let mut column_cost = vec![vec![0.0_f64; k]; k];
    for (ck, row) in column_cost.iter_mut().enumerate() {
        for (cl, cost) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (est[(i, ck)] - truth[(i, cl)]).abs();
            }
            *cost = acc;
        }
    }
    let (perm, total) = min_assignment(&column_cost);
    Ok(AlignedError {
        value: total / n as f64,
        permutation: perm,
    })
}

/// Minimum over all K! column permutations of the Frobenius-norm difference
/// relative to the Frobenius norm of the truth.
pub fn relative_error(
    theta_hat: &ItemParams,
    theta_true: &ItemParams,
) -> Result<AlignedError> {
    let j = theta_hat.n_items();
    let k = theta_hat.n_classes();
    if theta_true.n_items() != j || theta_true.n_classes() != k {
        return Err(GomError::InvalidArgument(format!(
            "shape mismatch: {j}x{k} vs {}x{}",
            theta_true.n_items(),
            theta_true.n_classes()
        )));
    }
    if k > MAX_ALIGN_K {
        return Err(GomError::UnsupportedK {
            k,
            what: "permutation alignment",
            max: MAX_ALIGN_K,
        });
    }
    let truth_norm = theta_true
        .theta()
        .iter()
        .map(|&v| v * v)
        .sum::<f64>()
        .sqrt();
    if truth_norm == 0.0 {
        return Err(GomError::InvalidArgument(
            "true item parameters are all zero".into(),
        ));
    }
    let est = theta_hat.theta();
    let truth = theta_true.theta();
    let mut column_cost = vec![vec![0.0_f64; k]; k];
    for (ck, row) in column_cost.iter_mut().enumerate() {
        for (cl, cost) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..j {
                let d = est[(i, ck)] - truth[(i, cl)];
                acc += d * d;
            }
            *cost = acc;
        }
    }
    let (perm, total) = min_assignment(&column_cost);
    Ok(AlignedError {
        value: total.sqrt() / truth_norm,
        permutation: perm,
    })
}

/// Fraction of trials whose estimate equals the true number of classes.
pub fn accuracy_rate(estimates: &[usize], k_true: usize) -> Result<f64> {
    if estimates.is_empty() {
        return Err(GomError::InvalidArgument(
            "accuracy rate needs at least one estimate".into(),
        ));
    }
    let hits = estimates.iter().filter(|&&e| e == k_true).count();
    Ok(hits as f64 / estimates.len() as f64)
}

/// Proportions of highly pure subjects (row maximum >= 0.9) and highly mixed
/// subjects (row maximum <= 0.7).
pub fn purity_proportions(pi_hat: &MembershipMatrix) -> (f64, f64) {
    let n = pi_hat.n_subjects();
    let mut pure = 0usize;
    let mut mixed = 0usize;
    for row in pi_hat.weights().rows() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max >= 0.9 {
            pure += 1;
        }
        if max <= 0.7 {
            mixed += 1;
        }
    }
    (pure as f64 / n as f64, mixed as f64 / n as f64)
}

/// Brute-force assignment: enumerate permutations in lexicographic order and
/// keep the first one attaining the minimal summed cost. Costs are summed
/// column by column in index order so an external enumeration oracle can
/// reproduce the value bit for bit.
fn min_assignment(column_cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let k = column_cost.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best_perm = perm.clone();
    let mut best = eval_perm(column_cost, &perm);
    while next_permutation(&mut perm) {
        let total = eval_perm(column_cost, &perm);
        if total < best {
            best = total;
            best_perm = perm.clone();
        }
    }
    (best_perm, best)
}

fn eval_perm(column_cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    let mut total = 0.0;
    for (k, &l) in perm.iter().enumerate() {
        total += column_cost[k][l];
    }
    total
}

/// Advances to the next lexicographic permutation; false once wrapped.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn membership(values: Array2<f64>) -> MembershipMatrix {
        MembershipMatrix::new(values).unwrap()
    }

    #[test]
    fn identical_memberships_have_zero_error() {
        let pi = membership(array![[0.2, 0.8], [1.0, 0.0]]);
        let got = hamming_error(&pi, &pi).unwrap();
        assert_eq!(got.value, 0.0);
        assert_eq!(got.permutation, vec![0, 1]);
    }

    #[test]
    fn column_swap_is_free() {
        let pi = membership(array![[0.2, 0.8], [1.0, 0.0]]);
        let swapped = membership(array![[0.8, 0.2], [0.0, 1.0]]);
        let got = hamming_error(&pi, &swapped).unwrap();
        assert_eq!(got.value, 0.0);
        assert_eq!(got.permutation, vec![1, 0]);
    }

    #[test]
    fn single_perturbed_row_costs_two_deviations_over_n() {
        let mut a = Array2::<f64>::zeros((10, 2));
        for mut row in a.rows_mut() {
            row[0] = 1.0;
        }
        let mut b = a.clone();
        a[(0, 0)] = 0.6;
        a[(0, 1)] = 0.4;
        b[(0, 0)] = 0.5;
        b[(0, 1)] = 0.5;
        let got = hamming_error(&membership(a), &membership(b)).unwrap();
        assert!((got.value - 0.02).abs() < 1e-15);
    }

    #[test]
    fn relative_error_scale_and_swap() {
        let t = ItemParams::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(relative_error(&t, &t).unwrap().value, 0.0);

        let doubled = ItemParams::new(array![[2.0, 4.0], [6.0, 8.0]]).unwrap();
        let got = relative_error(&doubled, &t).unwrap();
        assert!((got.value - 1.0).abs() < 1e-15);

        let a = ItemParams::new(array![[4.0, 3.0]]).unwrap();
        let b = ItemParams::new(array![[3.0, 4.0]]).unwrap();
        let got = relative_error(&a, &b).unwrap();
        assert_eq!(got.value, 0.0);
        assert_eq!(got.permutation, vec![1, 0]);
    }

    #[test]
    fn accuracy_rate_counts_hits() {
        assert_eq!(accuracy_rate(&[3, 3, 3, 3], 3).unwrap(), 1.0);
        assert_eq!(accuracy_rate(&[3, 2, 3, 4], 3).unwrap(), 0.5);
        assert_eq!(accuracy_rate(&[2], 3).unwrap(), 0.0);
        assert!(accuracy_rate(&[], 3).is_err());
    }

    #[test]
    fn purity_thresholds() {
        let onehot = membership(array![[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(purity_proportions(&onehot), (1.0, 0.0));

        let uniform = membership(array![[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(purity_proportions(&uniform), (0.0, 1.0));

        let mixed = membership(array![[0.95, 0.05], [0.8, 0.2], [0.6, 0.4]]);
        let (mu, nu) = purity_proportions(&mixed);
        assert!((mu - 1.0 / 3.0).abs() < 1e-15);
        assert!((nu - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_shape_mismatch_and_large_k() {
        let a = membership(array![[1.0, 0.0]]);
        let b = membership(array![[1.0, 0.0], [0.0, 1.0]]);
        assert!(hamming_error(&a, &b).is_err());

        let wide = membership(Array2::from_elem((2, 11), 1.0 / 11.0));
        assert!(matches!(
            hamming_error(&wide, &wide),
            Err(GomError::UnsupportedK { .. })
        ));
    }
}
