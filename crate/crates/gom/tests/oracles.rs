//! Checks against independent oracles: a one-sided Jacobi SVD, the literal
//! pairwise modularity sum, explicit permutation enumeration, and closed-form
//! constructions.

mod common;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gom::{
    adjacency, fuzzy_modularity, fuzzy_modularity_from_data, hamming_error,
    one_class_hyperplane, regularized_laplacian, row_normalize, sample_gom,
    successive_projection, svm_cone, truncated_svd, GomSampler, ItemParams,
    MembershipMatrix, RealMatrix, ResponseData,
};

fn random_matrix(n: usize, j: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((n, j));
    for v in m.iter_mut() {
        *v = rng.random::<f64>() * 2.0 - 1.0;
    }
    m
}

#[test]
fn truncated_svd_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x = random_matrix(50, 20, &mut rng);
    let fast = truncated_svd(x.view(), 5, 1e-10).unwrap();
    let (_u, sigma, _v) = common::jacobi_svd(x.view());
    for i in 0..5 {
        assert!(
            (fast.sigma[i] - sigma[i]).abs() <= 1e-8 * sigma[0],
            "triplet {i}: {} vs {}",
            fast.sigma[i],
            sigma[i]
        );
    }
}

#[test]
fn population_laplacian_has_exactly_k_singular_values() {
    let inst = sample_gom(60, 20, 3, 4, 1.0, 5).unwrap();
    let pop = inst.population();
    let lap = regularized_laplacian(&pop, 80.0).unwrap();
    let (_u, sigma, _v) = common::jacobi_svd(lap.l_tau.view());
    assert!(sigma[2] > 0.0);
    assert!(
        sigma[3] <= 1e-10 * sigma[0],
        "sigma_4 = {} vs sigma_1 = {}",
        sigma[3],
        sigma[0]
    );
}

#[test]
fn sp_recovers_vertices_of_random_convex_combinations() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let vertices = Array2::from_shape_vec(
        (3, 4),
        vec![
            3.0, 0.5, 0.0, 1.0, //
            0.0, 2.5, 1.0, 0.0, //
            1.0, 0.0, 3.0, 2.0,
        ],
    )
    .unwrap();
    let n = 203;
    let mut points = Array2::<f64>::zeros((n, 4));
    for c in 0..3 {
        points.row_mut(c).assign(&vertices.row(c));
    }
    for i in 3..n {
        let a = rng.random::<f64>();
        let b = rng.random::<f64>() * (1.0 - a);
        let w = [a, b, 1.0 - a - b];
        for d in 0..4 {
            points[(i, d)] = (0..3).map(|c| w[c] * vertices[(c, d)]).sum();
        }
    }
    let picked = successive_projection(points.view(), 3).unwrap();
    let mut sorted = picked.indices.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, vec![0, 1, 2]);

    // every row must be a convex combination of the returned rows
    let basis = {
        let mut b = Array2::<f64>::zeros((3, 4));
        for (r, &i) in picked.indices.iter().enumerate() {
            b.row_mut(r).assign(&points.row(i));
        }
        b
    };
    for i in 0..n {
        let row = points.row(i).insert_axis(ndarray::Axis(0));
        let (coeffs, resid) = common::least_squares_coeffs(row, &basis);
        assert!(resid <= 1e-10, "row {i} residual {resid}");
        assert!(coeffs.iter().all(|&c| c >= -1e-9), "row {i}: {coeffs:?}");
        let total: f64 = coeffs.iter().sum();
        assert!((total - 1.0).abs() <= 1e-9, "row {i} weight sum {total}");
    }
}

/// Ideal unit-row geometry for a known instance, via the oracle SVD of the
/// population Laplacian.
fn ideal_u_star(inst: &gom::GomInstance, tau: f64) -> Array2<f64> {
    let pop = inst.population();
    let lap = regularized_laplacian(&pop, tau).unwrap();
    let (u, _sigma, _v) = common::jacobi_svd(lap.l_tau.view());
    let k = inst.pi.n_classes();
    let uk = u.slice(ndarray::s![.., ..k]).to_owned();
    let (u_star, _d) = row_normalize(&uk).unwrap();
    u_star
}

#[test]
fn hyperplane_margins_bottom_out_at_true_pure_rows() {
    let inst = sample_gom(100, 25, 3, 4, 1.0, 17).unwrap();
    let u_star = ideal_u_star(&inst, 400.0);
    let (_w, margins) = one_class_hyperplane(u_star.view()).unwrap();
    let min = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    for rows in &inst.pure_rows {
        for &i in rows {
            assert!(
                (margins[i] - min).abs() <= 1e-8,
                "pure row {i} margin {} vs min {min}",
                margins[i]
            );
        }
    }
    // mixed rows sit strictly inside
    let pure: std::collections::HashSet<usize> =
        inst.pure_rows.iter().flatten().copied().collect();
    for (i, &m) in margins.iter().enumerate() {
        if !pure.contains(&i) {
            assert!(m > min + 1e-8, "mixed row {i} at the margin floor");
        }
    }
}

#[test]
fn hyperplane_margins_are_rotation_invariant() {
    let inst = sample_gom(60, 18, 3, 4, 1.0, 23).unwrap();
    let u_star = ideal_u_star(&inst, 240.0);
    let (_w1, margins1) = one_class_hyperplane(u_star.view()).unwrap();

    // random rotation from the QR of a Gaussian matrix, applied to all points
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = random_matrix(3, 3, &mut rng);
    let rot = orthonormalize(&g);
    let rotated = u_star.dot(&rot);
    let (_w2, margins2) = one_class_hyperplane(rotated.view()).unwrap();
    for (a, b) in margins1.iter().zip(&margins2) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

fn orthonormalize(g: &Array2<f64>) -> Array2<f64> {
    // Gram-Schmidt is fine at 3x3 for building a test rotation.
    let n = g.nrows();
    let mut q = g.clone();
    for c in 0..n {
        for prev in 0..c {
            let dot = q.column(c).dot(&q.column(prev));
            let sub = q.column(prev).mapv(|v| v * dot);
            let col = &q.column(c) - &sub;
            q.column_mut(c).assign(&col);
        }
        let norm = q.column(c).dot(&q.column(c)).sqrt();
        q.column_mut(c).mapv_inplace(|v| v / norm);
    }
    q
}

#[test]
fn svm_cone_returns_one_true_pure_subject_per_class() {
    let mut sampler = GomSampler::new(12, 6, 2, 4, 1.0);
    sampler.pure_per_class = Some(2);
    let inst = sampler.sample(31).unwrap();
    let u_star = ideal_u_star(&inst, 48.0);
    let picked = svm_cone(u_star.view(), 2, 1e-6).unwrap();
    assert_eq!(picked.indices.len(), 2);
    let mut classes_seen = [false; 2];
    for &i in &picked.indices {
        let class = inst
            .pure_rows
            .iter()
            .position(|rows| rows.contains(&i))
            .unwrap_or_else(|| panic!("picked row {i} is not a true pure subject"));
        classes_seen[class] = true;
    }
    assert!(classes_seen.iter().all(|&seen| seen));
}

#[test]
fn factored_modularity_matches_naive_double_sum_on_response_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let n = 4 + (trial % 7);
        let j = 3 + (trial % 5);
        let mut values = Array2::<f64>::zeros((n, j));
        for v in values.iter_mut() {
            *v = f64::from(rng.random_range(0..=3u32));
        }
        if values.iter().all(|&v| v == 0.0) {
            values[(0, 0)] = 1.0;
        }
        let r = gom::ResponseMatrix::new(values, 3).unwrap();
        let k = 2 + (trial % 3);
        let pi = random_stochastic(n, k, &mut rng);
        let (a, d, omega) = adjacency(&r).unwrap();
        let naive = common::naive_fuzzy_modularity(&a, &d, omega, pi.weights());
        let dense = fuzzy_modularity(&a, &d, omega, &pi).unwrap();
        let factored = fuzzy_modularity_from_data(&r, &pi).unwrap();
        assert!((dense - naive).abs() <= 1e-10, "{dense} vs {naive}");
        assert!((factored - naive).abs() <= 1e-10, "{factored} vs {naive}");
    }
}

fn random_stochastic(n: usize, k: usize, rng: &mut ChaCha8Rng) -> MembershipMatrix {
    let mut pi = Array2::<f64>::zeros((n, k));
    for mut row in pi.rows_mut() {
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = rng.random::<f64>() + 1e-3;
            total += *v;
        }
        row.mapv_inplace(|v| v / total);
    }
    MembershipMatrix::new(pi).unwrap()
}

#[test]
fn disconnected_blocks_reach_the_closed_form_value() {
    // two equal disconnected blocks: Q = 1 - sum (omega_b / omega)^2 = 0.5
    let mut values = Array2::<f64>::zeros((6, 4));
    for i in 0..3 {
        values[(i, 0)] = 1.0;
        values[(i, 1)] = 2.0;
    }
    for i in 3..6 {
        values[(i, 2)] = 1.0;
        values[(i, 3)] = 2.0;
    }
    let r = gom::ResponseMatrix::new(values, 2).unwrap();
    let mut pi = Array2::<f64>::zeros((6, 2));
    for i in 0..3 {
        pi[(i, 0)] = 1.0;
    }
    for i in 3..6 {
        pi[(i, 1)] = 1.0;
    }
    let pi = MembershipMatrix::new(pi).unwrap();
    let (a, d, omega) = adjacency(&r).unwrap();
    let q = fuzzy_modularity(&a, &d, omega, &pi).unwrap();
    assert!((q - 0.5).abs() <= 1e-12, "q = {q}");
    let naive = common::naive_fuzzy_modularity(&a, &d, omega, pi.weights());
    assert!((q - naive).abs() <= 1e-12);
}

#[test]
fn one_hot_memberships_reduce_to_newman_girvan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = 8;
        let mut values = Array2::<f64>::zeros((n, 5));
        for v in values.iter_mut() {
            *v = f64::from(rng.random_range(0..=2u32));
        }
        values[(0, 0)] += 1.0;
        let r = gom::ResponseMatrix::new(values, 3).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3usize)).collect();
        let mut pi = Array2::<f64>::zeros((n, 3));
        for (i, &c) in labels.iter().enumerate() {
            pi[(i, c)] = 1.0;
        }
        let pi = MembershipMatrix::new(pi).unwrap();
        let (a, d, omega) = adjacency(&r).unwrap();
        let fuzzy = fuzzy_modularity(&a, &d, omega, &pi).unwrap();
        let hard = common::newman_girvan(&a, &d, omega, &labels);
        assert!((fuzzy - hard).abs() <= 1e-12, "{fuzzy} vs {hard}");
    }
}

#[test]
fn hamming_error_matches_enumeration_oracle_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let n = 3 + (trial % 8);
        let k = 2 + (trial % 4); // K in 2..=5
        let est = random_stochastic(n, k, &mut rng);
        let truth = random_stochastic(n, k, &mut rng);
        let got = hamming_error(&est, &truth).unwrap();
        let oracle = common::hamming_oracle(est.weights(), truth.weights());
        assert_eq!(got.value, oracle, "trial {trial}");
    }
}

#[test]
fn hamming_error_is_zero_for_any_column_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let pi = random_stochastic(9, 4, &mut rng);
    for perm in common::permutations(4) {
        let mut permuted = Array2::<f64>::zeros((9, 4));
        for (c, &src) in perm.iter().enumerate() {
            permuted.column_mut(c).assign(&pi.weights().column(src));
        }
        let permuted = MembershipMatrix::new(permuted).unwrap();
        let got = hamming_error(&pi, &permuted).unwrap();
        assert_eq!(got.value, 0.0);
    }
}

#[test]
fn sampler_mean_tracks_population_within_three_standard_errors() {
    let inst = sample_gom(800, 200, 3, 4, 1.0, 2024).unwrap();
    assert!(inst.dropped_rows.is_empty());
    let pop = inst.population();
    let reps = 200usize;
    let mut mean = Array2::<f64>::zeros((10, 10));
    for rep in 0..reps {
        let r = inst.resample_responses(5000 + rep as u64);
        for i in 0..10 {
            for j in 0..10 {
                mean[(i, j)] += r.values()[(i, j)];
            }
        }
    }
    mean.mapv_inplace(|v| v / reps as f64);
    let m = 4.0;
    for i in 0..10 {
        for j in 0..10 {
            let expect = pop.values()[(i, j)];
            let p = expect / m;
            let var = m * p * (1.0 - p);
            let se = (var / reps as f64).sqrt();
            let diff = (mean[(i, j)] - expect).abs();
            assert!(
                diff <= 3.0 * se + 1e-12,
                "entry ({i}, {j}): mean {} vs expectation {expect}, 3se = {}",
                mean[(i, j)],
                3.0 * se
            );
        }
    }
}

#[test]
fn sampled_responses_follow_the_binomial_pmf() {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    let inst = sample_gom(8, 2, 2, 5, 4.0, 77).unwrap();
    let pop = inst.population();
    let m = 5u32;
    let p = pop.values()[(0, 0)] / f64::from(m);
    let draws = 100_000usize;
    let mut counts = vec![0usize; m as usize + 1];
    for rep in 0..draws {
        let r = inst.resample_responses(900_000 + rep as u64);
        counts[r.values()[(0, 0)] as usize] += 1;
    }
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    for (value, &observed) in counts.iter().enumerate() {
        let expected = draws as f64 * common::binomial_pmf(m, p, value as u32);
        if expected < 1e-9 {
            assert_eq!(observed, 0, "saw impossible value {value}");
            continue;
        }
        chi2 += (observed as f64 - expected).powi(2) / expected;
        dof += 1;
    }
    let dist = ChiSquared::new((dof - 1) as f64).unwrap();
    let p_value = 1.0 - dist.cdf(chi2);
    assert!(p_value > 0.01, "chi2 = {chi2}, p = {p_value}");
}

#[test]
fn estimators_accept_real_valued_population_input() {
    // RealMatrix and ResponseMatrix flow through the same laplacian path.
    let inst = sample_gom(24, 8, 2, 4, 2.0, 1).unwrap();
    let pop = inst.population();
    let lap_pop = regularized_laplacian(&pop, 0.0).unwrap();
    assert_eq!(lap_pop.tau, 0.0);
    let real = RealMatrix::new(pop.values().to_owned()).unwrap();
    let lap_again = regularized_laplacian(&real, 0.0).unwrap();
    assert_eq!(lap_pop.l_tau, lap_again.l_tau);
}

#[test]
fn item_params_alternative_form_is_exact_on_population_data() {
    // theta = population' * pi * (pi' pi)^{-1}
    let inst = sample_gom(40, 10, 3, 4, 1.5, 9).unwrap();
    let pop = inst.population();
    let theta = gom::item_params(&pop, &inst.pi, f64::INFINITY).unwrap();
    let diff = max_abs_diff(theta.theta(), inst.theta.theta());
    assert!(diff <= 1e-8, "max deviation {diff}");
}

fn max_abs_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (&x, &y)| m.max((x - y).abs()))
}

#[test]
fn theta_hat_from_identity_membership_is_clipped_transpose() {
    let values = ndarray::array![[1.0, 0.0, 2.0], [0.0, 3.0, 1.0]];
    let r = gom::ResponseMatrix::new(values.clone(), 3).unwrap();
    let pi = MembershipMatrix::new(ndarray::array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let theta = gom::item_params(&r, &pi, 2.0).unwrap();
    // entries clipped into [0, 2]
    let expect = ndarray::array![[1.0, 0.0], [0.0, 2.0], [2.0, 1.0]];
    assert_eq!(theta.theta(), expect.view());
    let _ = ItemParams::new(values).unwrap();
}
