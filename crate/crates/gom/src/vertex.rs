//! Vertex hunting: locate the rows that anchor the simplex (successive
//! projection) or the cone (supporting hyperplane plus clustering of the
//! minimum-margin rows).

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GomError, Result};

/// Which geometry produced an index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Simplex,
    Cone,
}

/// K distinct row indices of estimated pure subjects.
#[derive(Debug, Clone)]
pub struct IndexSet {
    pub indices: Vec<usize>,
    pub geometry: Geometry,
}

impl IndexSet {
    fn new(indices: Vec<usize>, geometry: Geometry) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &i in &indices {
            if !seen.insert(i) {
                return Err(GomError::InvalidArgument(format!(
                    "duplicate index {i} in vertex set"
                )));
            }
        }
        Ok(Self { indices, geometry })
    }
}

/// Greedy successive projection: repeatedly pick the row of largest residual
/// norm (ties broken by lowest index) and project everything onto its
/// orthogonal complement. On noiseless separable data the picks are exactly
/// the vertex rows.
pub fn successive_projection(points: ArrayView2<'_, f64>, k: usize) -> Result<IndexSet> {
    let (n, dim) = points.dim();
    if k == 0 || k > n {
        return Err(GomError::InvalidArgument(format!(
            "k = {k} must satisfy 1 <= k <= {n}"
        )));
    }
    let mut resid = points.to_owned();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = 0usize;
        let mut best_sq = -1.0_f64;
        for (i, row) in resid.rows().into_iter().enumerate() {
            let sq = row.iter().map(|&v| v * v).sum::<f64>();
            if sq > best_sq {
                best_sq = sq;
                best = i;
            }
        }
        if best_sq.sqrt() < 1e-12 {
            return Err(GomError::RankDeficient {
                stage: "successive projection",
                message: format!(
                    "residual collapsed after {} of {k} picks",
                    picked.len()
                ),
            });
        }
        picked.push(best);
        let norm = best_sq.sqrt();
        let v: Array1<f64> = resid.row(best).mapv(|t| t / norm);
        for mut row in resid.rows_mut() {
            let dot = row.dot(&v);
            for (r, &vv) in row.iter_mut().zip(v.iter()) {
                *r -= dot * vv;
            }
        }
    }
    let _ = dim;
    IndexSet::new(picked, Geometry::Simplex)
}

/// Iteration cap for the supporting-hyperplane ascent.
const HYPERPLANE_MAX_ITERS: usize = 100_000;
/// Dual variables growing past this signal that no supporting hyperplane exists.
const DUAL_GROWTH_LIMIT: f64 = 1e6;
/// Target KKT residual.
const KKT_TOL: f64 = 1e-8;

/// Solves `min 0.5 ||w||^2  s.t.  <w, x_i> >= 1` over unit rows by projected
/// gradient ascent on the dual, with an exact line search along the projected
/// direction. Returns the normal `w` and the margins `<w, x_i>`.
///
/// Margins are best-effort once the iteration cap is hit; on cone-shaped input
/// the KKT residual reaches 1e-8 well before that.
pub fn one_class_hyperplane(points: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, dim) = points.dim();
    if n == 0 {
        return Err(GomError::InvalidArgument("no rows given".into()));
    }
    for (i, row) in points.rows().into_iter().enumerate() {
        let norm = row.iter().map(|&v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(GomError::InvalidArgument(format!(
                "row {i} has norm {norm}, expected unit rows"
            )));
        }
    }

    let mut alpha = vec![0.0_f64; n];
    let mut w = vec![0.0_f64; dim];
    let mut margins = vec![0.0_f64; n];

    for _iter in 0..HYPERPLANE_MAX_ITERS {
        for (m, row) in margins.iter_mut().zip(points.rows()) {
            *m = row
                .iter()
                .zip(&w)
                .map(|(&x, &wv)| x * wv)
                .sum::<f64>();
        }

        let mut feas = 0.0_f64;
        let mut comp = 0.0_f64;
        for i in 0..n {
            feas = feas.max(1.0 - margins[i]);
            comp = comp.max((alpha[i] * (margins[i] - 1.0)).abs());
        }
        if feas.max(comp) <= KKT_TOL {
            return Ok((w, margins));
        }

        // Projected ascent direction: follow the gradient on free coordinates,
        // only its positive part on the boundary.
        let mut gd = 0.0_f64;
        let mut dir = vec![0.0_f64; n];
        for i in 0..n {
            let g = 1.0 - margins[i];
            let d = if alpha[i] > 0.0 { g } else { g.max(0.0) };
            dir[i] = d;
            gd += g * d;
        }
        if gd <= 0.0 {
            return Ok((w, margins));
        }
        let mut xd = vec![0.0_f64; dim];
        for (i, row) in points.rows().into_iter().enumerate() {
            if dir[i] != 0.0 {
                for (acc, &x) in xd.iter_mut().zip(row.iter()) {
                    *acc += dir[i] * x;
                }
            }
        }
        let curvature: f64 = xd.iter().map(|&t| t * t).sum();
        if curvature <= 0.0 {
            return Err(GomError::NoCone(
                "unbounded ascent direction in the dual".into(),
            ));
        }
        let step = gd / curvature;
        let mut grown = 0.0_f64;
        for i in 0..n {
            alpha[i] = (alpha[i] + step * dir[i]).max(0.0);
            grown = grown.max(alpha[i]);
        }
        if grown > DUAL_GROWTH_LIMIT {
            return Err(GomError::NoCone(format!(
                "dual iterate grew past {DUAL_GROWTH_LIMIT:.0e}"
            )));
        }
        for wv in w.iter_mut() {
            *wv = 0.0;
        }
        for (i, row) in points.rows().into_iter().enumerate() {
            if alpha[i] != 0.0 {
                for (acc, &x) in w.iter_mut().zip(row.iter()) {
                    *acc += alpha[i] * x;
                }
            }
        }
    }
    Ok((w, margins))
}

/// Corner hunting on a cone: take the rows whose margin sits within
/// `(1 + margin_slack)` of the minimum, split them into `k` groups by k-means,
/// and return the member of each group closest to the group centroid. The
/// centroid averages the noise out of the corner estimate; an extreme-margin
/// member would be biased outward.
pub fn svm_cone(
    points: ArrayView2<'_, f64>,
    k: usize,
    margin_slack: f64,
) -> Result<IndexSet> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(GomError::InvalidArgument(format!(
            "k = {k} must satisfy 1 <= k <= {n}"
        )));
    }
    if margin_slack.is_nan() || margin_slack < 0.0 {
        return Err(GomError::InvalidArgument(format!(
            "margin_slack must be nonnegative, got {margin_slack}"
        )));
    }
    let (_w, margins) = one_class_hyperplane(points)?;
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_margin.is_nan() || min_margin <= 0.0 {
        return Err(GomError::NoCone(format!(
            "minimum margin {min_margin} is not positive"
        )));
    }

    let mut slack = margin_slack;
    let mut candidates: Vec<usize> = Vec::new();
    for _attempt in 0..=8 {
        candidates = (0..n)
            .filter(|&i| margins[i] <= (1.0 + slack) * min_margin)
            .collect();
        if candidates.len() >= k {
            break;
        }
        slack = if slack > 0.0 { slack * 2.0 } else { 1e-6 };
    }
    if candidates.len() < k {
        return Err(GomError::InsufficientCorners {
            found: candidates.len(),
            needed: k,
        });
    }

    let mut coords = Array2::<f64>::zeros((candidates.len(), points.ncols()));
    for (r, &i) in candidates.iter().enumerate() {
        coords.row_mut(r).assign(&points.row(i));
    }
    let assignment = kmeans(&coords, k, 50, 0);

    let dim = points.ncols();
    let mut centroids = Array2::<f64>::zeros((k, dim));
    let mut sizes = vec![0.0_f64; k];
    for (r, &g) in assignment.iter().enumerate() {
        sizes[g] += 1.0;
        for d in 0..dim {
            centroids[(g, d)] += coords[(r, d)];
        }
    }
    for g in 0..k {
        if sizes[g] > 0.0 {
            for d in 0..dim {
                centroids[(g, d)] /= sizes[g];
            }
        }
    }
    let mut picks = vec![None::<(f64, usize)>; k];
    for (r, &i) in candidates.iter().enumerate() {
        let g = assignment[r];
        let dist = sq_dist(
            coords.row(r).as_slice().unwrap(),
            centroids.row(g).as_slice().unwrap(),
        );
        let better = match picks[g] {
            None => true,
            Some((cur_dist, cur_i)) => dist < cur_dist || (dist == cur_dist && i < cur_i),
        };
        if better {
            picks[g] = Some((dist, i));
        }
    }
    let indices: Vec<usize> = picks.into_iter().flatten().map(|(_, i)| i).collect();
    if indices.len() < k {
        return Err(GomError::InsufficientCorners {
            found: indices.len(),
            needed: k,
        });
    }
    IndexSet::new(indices, Geometry::Cone)
}

/// Plain Lloyd k-means with k-means++ seeding, a fixed seed per restart, and a
/// best-of reduction over restarts by (inertia, restart id). Returns the
/// cluster id of every point; every cluster is nonempty when `n >= k`.
fn kmeans(points: &Array2<f64>, k: usize, restarts: u64, base_seed: u64) -> Vec<usize> {
    let n = points.nrows();
    let dim = points.ncols();
    debug_assert!(n >= k && k >= 1);

    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(restart + 1)));
        let mut centers = Array2::<f64>::zeros((k, dim));

        // k-means++ seeding
        let first = rng.random_range(0..n);
        centers.row_mut(0).assign(&points.row(first));
        let mut dist_sq: Vec<f64> = (0..n)
            .map(|i| sq_dist(points.row(i).as_slice().unwrap(), centers.row(0).as_slice().unwrap()))
            .collect();
        for c in 1..k {
            let total: f64 = dist_sq.iter().sum();
            let pick = if total > 0.0 {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for (i, &d) in dist_sq.iter().enumerate() {
                    acc += d;
                    if acc >= target {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                // all remaining points coincide with a center; pick deterministically
                c.min(n - 1)
            };
            centers.row_mut(c).assign(&points.row(pick));
            for (i, ds) in dist_sq.iter_mut().enumerate() {
                let d = sq_dist(
                    points.row(i).as_slice().unwrap(),
                    centers.row(c).as_slice().unwrap(),
                );
                if d < *ds {
                    *ds = d;
                }
            }
        }

        let mut assign = vec![0usize; n];
        for _ in 0..100 {
            let mut changed = false;
            for (i, slot) in assign.iter_mut().enumerate() {
                let mut best_c = 0usize;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let d = sq_dist(
                        points.row(i).as_slice().unwrap(),
                        centers.row(c).as_slice().unwrap(),
                    );
                    if d < best_d {
                        best_d = d;
                        best_c = c;
                    }
                }
                if *slot != best_c {
                    *slot = best_c;
                    changed = true;
                }
            }
            // refill empty clusters with the point farthest from its center
            let mut counts = vec![0usize; k];
            for &a in &assign {
                counts[a] += 1;
            }
            for c in 0..k {
                if counts[c] == 0 {
                    let mut far = None::<(f64, usize)>;
                    for i in 0..n {
                        if counts[assign[i]] <= 1 {
                            continue;
                        }
                        let d = sq_dist(
                            points.row(i).as_slice().unwrap(),
                            centers.row(assign[i]).as_slice().unwrap(),
                        );
                        if far.is_none_or(|(fd, _)| d > fd) {
                            far = Some((d, i));
                        }
                    }
                    if let Some((_, i)) = far {
                        counts[assign[i]] -= 1;
                        assign[i] = c;
                        counts[c] = 1;
                        changed = true;
                    }
                }
            }
            // recompute centers
            let mut sums = Array2::<f64>::zeros((k, dim));
            let mut sizes = vec![0.0_f64; k];
            for i in 0..n {
                let c = assign[i];
                sizes[c] += 1.0;
                for d in 0..dim {
                    sums[(c, d)] += points[(i, d)];
                }
            }
            for c in 0..k {
                if sizes[c] > 0.0 {
                    for d in 0..dim {
                        centers[(c, d)] = sums[(c, d)] / sizes[c];
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let inertia: f64 = (0..n)
            .map(|i| {
                sq_dist(
                    points.row(i).as_slice().unwrap(),
                    centers.row(assign[i]).as_slice().unwrap(),
                )
            })
            .sum();
        if best.as_ref().is_none_or(|(bi, _)| inertia < *bi) {
            best = Some((inertia, assign));
        }
    }
    best.expect("at least one restart").1
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sp_finds_exact_simplex_vertices() {
        let pts = array![
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
        ];
        let got = successive_projection(pts.view(), 3).unwrap();
        assert_eq!(got.indices, vec![0, 1, 2]);
        assert_eq!(got.geometry, Geometry::Simplex);
    }

    #[test]
    fn sp_picks_largest_norm_first() {
        let pts = array![[2.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        let got = successive_projection(pts.view(), 2).unwrap();
        assert_eq!(got.indices, vec![0, 1]);
    }

    #[test]
    fn sp_errors_when_rank_is_exhausted() {
        let pts = array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        assert!(matches!(
            successive_projection(pts.view(), 2),
            Err(GomError::RankDeficient { .. })
        ));
    }

    #[test]
    fn hyperplane_for_two_axis_points() {
        let pts = array![[1.0, 0.0], [0.0, 1.0]];
        let (w, margins) = one_class_hyperplane(pts.view()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-6, "w = {w:?}");
        assert!((w[1] - 1.0).abs() < 1e-6);
        assert!((margins[0] - 1.0).abs() < 1e-8);
        assert!((margins[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hyperplane_interior_point_gets_larger_margin() {
        let h = 1.0 / 2.0_f64.sqrt();
        let pts = array![[1.0, 0.0], [0.0, 1.0], [h, h]];
        let (w, margins) = one_class_hyperplane(pts.view()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-6);
        assert!((w[1] - 1.0).abs() < 1e-6);
        assert!((margins[2] - 2.0_f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn hyperplane_rejects_non_unit_rows() {
        let pts = array![[2.0, 0.0]];
        assert!(one_class_hyperplane(pts.view()).is_err());
    }

    #[test]
    fn svm_cone_with_repeated_unit_vectors() {
        let pts = array![
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 0.0]
        ];
        let got = svm_cone(pts.view(), 2, 1e-6).unwrap();
        let mut vals: Vec<(f64, f64)> = got
            .indices
            .iter()
            .map(|&i| (pts[(i, 0)], pts[(i, 1)]))
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals, vec![(0.0, 1.0), (1.0, 0.0)]);
    }

    #[test]
    fn svm_cone_k1_returns_min_margin_row() {
        let h = 1.0 / 2.0_f64.sqrt();
        let pts = array![[h, h], [1.0, 0.0], [0.0, 1.0]];
        // w points at the centroid direction; the two axis rows share the
        // minimum margin and the lowest index wins within the single group.
        let got = svm_cone(pts.view(), 1, 1e-6).unwrap();
        let (_w, margins) = one_class_hyperplane(pts.view()).unwrap();
        let min = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(margins[got.indices[0]] <= min * (1.0 + 1e-9));
    }
}
