//! Property tests for structural invariants.

mod common;

use ndarray::Array2;
use proptest::prelude::*;

use gom::{
    hamming_error, memberships_from_weights, purity_proportions, regularized_laplacian,
    successive_projection, truncated_svd, MembershipMatrix, ResponseData, ResponseMatrix,
};

fn response_grid(max_n: usize, max_j: usize, m: u32) -> impl Strategy<Value = Vec<Vec<u32>>> {
    (1..=max_n, 1..=max_j).prop_flat_map(move |(n, j)| {
        proptest::collection::vec(proptest::collection::vec(0..=m, j), n)
    })
}

fn to_matrix(grid: &[Vec<u32>], m: u32) -> ResponseMatrix {
    let n = grid.len();
    let j = grid[0].len();
    let mut values = Array2::<f64>::zeros((n, j));
    for (i, row) in grid.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            values[(i, c)] = f64::from(v);
        }
    }
    ResponseMatrix::new(values, m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_preserves_zero_pattern(grid in response_grid(12, 9, 4), tau in 0.5_f64..50.0) {
        let r = to_matrix(&grid, 4);
        let lap = regularized_laplacian(&r, tau).unwrap();
        for ((i, j), &v) in lap.l_tau.indexed_iter() {
            prop_assert_eq!(v == 0.0, r.values()[(i, j)] == 0.0);
        }
        // scaling diagnostics stay consistent with the exact row sums
        for (i, (&d, &s)) in lap.d_tau_sqrt.iter().zip(&lap.row_sums).enumerate() {
            prop_assert_eq!(s, grid[i].iter().map(|&v| u64::from(v)).sum::<u64>() as f64);
            prop_assert!((d * d - tau - s).abs() <= 1e-9 * (s + tau).max(1.0));
        }
    }

    #[test]
    fn weight_rows_become_stochastic(
        rows in proptest::collection::vec(
            proptest::collection::vec(-5.0_f64..5.0, 3), 1..12)
    ) {
        let n = rows.len();
        let mut z = Array2::<f64>::zeros((n, 3));
        for (i, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                z[(i, c)] = v;
            }
        }
        let (pi, _degenerate) = memberships_from_weights(&z).unwrap();
        for row in pi.weights().rows() {
            let sum: f64 = row.sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        }
        let (mu, nu) = purity_proportions(&pi);
        prop_assert!((0.0..=1.0).contains(&mu));
        prop_assert!((0.0..=1.0).contains(&nu));
        prop_assert!(mu + nu <= 1.0 + 1e-12);
    }

    #[test]
    fn hamming_is_invariant_under_simultaneous_permutation(
        rows in proptest::collection::vec(
            proptest::collection::vec(0.01_f64..1.0, 3), 2..10),
        perm_sel in 0usize..6
    ) {
        let n = rows.len();
        let mut a = Array2::<f64>::zeros((n, 3));
        for (i, row) in rows.iter().enumerate() {
            let total: f64 = row.iter().sum();
            for (c, &v) in row.iter().enumerate() {
                a[(i, c)] = v / total;
            }
        }
        let a = MembershipMatrix::new(a).unwrap();
        let perms = common::permutations(3);
        let perm = &perms[perm_sel];
        let mut b = Array2::<f64>::zeros((n, 3));
        for (c, &src) in perm.iter().enumerate() {
            b.column_mut(c).assign(&a.weights().column(src));
        }
        let b = MembershipMatrix::new(b).unwrap();
        // permuting one side costs nothing
        prop_assert_eq!(hamming_error(&a, &b).unwrap().value, 0.0);
        // permuting both sides identically changes nothing
        let self_dist = hamming_error(&b, &b).unwrap().value;
        prop_assert_eq!(self_dist, 0.0);
    }

    #[test]
    fn sp_is_permutation_equivariant(
        rows in proptest::collection::vec(
            proptest::collection::vec(-3.0_f64..3.0, 4), 4..10),
        rotate_by in 1usize..4
    ) {
        let n = rows.len();
        let mut pts = Array2::<f64>::zeros((n, 4));
        for (i, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                pts[(i, c)] = v;
            }
        }
        let Ok(base) = successive_projection(pts.view(), 2) else {
            return Ok(()); // rank-deficient draw; nothing to compare
        };
        // rotate rows by a fixed offset
        let shift = rotate_by % n;
        let mut shifted = Array2::<f64>::zeros((n, 4));
        for i in 0..n {
            shifted.row_mut((i + shift) % n).assign(&pts.row(i));
        }
        let Ok(moved) = successive_projection(shifted.view(), 2) else {
            return Ok(());
        };
        let expect: Vec<usize> = base.indices.iter().map(|&i| (i + shift) % n).collect();
        prop_assert_eq!(moved.indices, expect);
    }

    #[test]
    fn svd_orthonormal_for_random_input(
        rows in proptest::collection::vec(
            proptest::collection::vec(-2.0_f64..2.0, 6), 8..16),
        k in 1usize..4
    ) {
        let n = rows.len();
        let mut x = Array2::<f64>::zeros((n, 6));
        for (i, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                x[(i, c)] = v;
            }
        }
        let f = truncated_svd(x.view(), k, 1e-10).unwrap();
        let utu = f.u.t().dot(&f.u);
        let vtv = f.v.t().dot(&f.v);
        for ((i, j), &v) in utu.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            prop_assert!((v - expect).abs() <= 1e-8);
        }
        for ((i, j), &v) in vtv.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            prop_assert!((v - expect).abs() <= 1e-8);
        }
        for w in f.sigma.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn response_csv_write_then_read_is_identity(grid in response_grid(8, 6, 5)) {
        let r = to_matrix(&grid, 5);
        // write as integer csv
        let mut text = String::new();
        for row in grid.iter() {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        use std::io::Write;
        f.write_all(text.as_bytes()).unwrap();
        let kept: Vec<&Vec<u32>> = grid.iter().filter(|row| row.iter().any(|&v| v != 0)).collect();
        let outcome = gom::io::read_matrix(f.path(), gom::io::MatrixFormat::Csv, Some(5));
        if kept.is_empty() {
            prop_assert!(outcome.is_err());
            return Ok(());
        }
        let back = outcome.unwrap();
        prop_assert_eq!(back.matrix.n_subjects(), kept.len());
        for (i, row) in kept.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                prop_assert_eq!(back.matrix.values()[(i, c)], f64::from(v));
            }
        }
        let _ = r;
    }
}
