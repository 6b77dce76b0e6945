//! Data generator for the Grade of Membership model and the simulation
//! harness that sweeps the regularizer, the sparsity level, and the data size.
//!
//! Reproducibility contract: every draw comes from a ChaCha8 stream seeded
//! explicitly, and each (grid point, repetition) cell derives its own seed via
//! [`derive_seed`], so results are identical regardless of how the cells are
//! scheduled across threads.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{
    ItemParams, MembershipMatrix, Method, RealMatrix, ResponseData, ResponseMatrix,
};
use crate::error::{GomError, Result};
use crate::estimators::{fit, FitConfig, Tau};
use crate::linalg::sym_eig_desc;
use crate::metrics::{accuracy_rate, hamming_error, relative_error};
use crate::modularity::select_k;

/// How membership rows for mixed subjects are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixedRecipe {
    /// First k-1 coordinates uniform on [0, 1/2] (rejected until they fit in
    /// the simplex), last coordinate the remainder. For k = 3 no rejection
    /// ever triggers.
    HalfUniform,
    /// Uniform (flat Dirichlet) draw on the simplex.
    UniformSimplex,
}

/// A generated instance: the truth, the observed responses, and bookkeeping.
#[derive(Debug, Clone)]
pub struct GomInstance {
    pub pi: MembershipMatrix,
    pub theta: ItemParams,
    pub r: ResponseMatrix,
    pub rho: f64,
    pub seed: u64,
    /// Indices (into the kept rows) of pure subjects, grouped by class.
    pub pure_rows: Vec<Vec<usize>>,
    /// Original indices of subjects dropped because they answered nothing.
    pub dropped_rows: Vec<usize>,
}

impl GomInstance {
    /// `Pi * Theta'`, the expectation of the responses.
    pub fn population(&self) -> RealMatrix {
        let prod = self.pi.weights().dot(&self.theta.theta().t());
        RealMatrix::new(prod).expect("population matrix is finite and nonnegative")
    }

    /// Redraws the responses from the same truth (no cleanup applied); used to
    /// check the sampler against the population mean.
    pub fn resample_responses(&self, seed: u64) -> ResponseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.r.m_max();
        let pop = self.population();
        let values = sample_binomial_grid(&pop.values().to_owned(), m, &mut rng);
        ResponseMatrix::new(values, m).expect("resampled responses are in range")
    }
}

/// Generator configuration; [`sample_gom`] covers the common case.
#[derive(Debug, Clone)]
pub struct GomSampler {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub m: u32,
    pub rho: f64,
    pub mixed: MixedRecipe,
    /// Pure subjects per class; defaults to `floor(3n / 4k)`, which keeps
    /// three quarters of the subjects pure overall.
    pub pure_per_class: Option<usize>,
}

impl GomSampler {
    pub fn new(n: usize, j: usize, k: usize, m: u32, rho: f64) -> Self {
        Self {
            n,
            j,
            k,
            m,
            rho,
            mixed: MixedRecipe::HalfUniform,
            pure_per_class: None,
        }
    }

    pub fn sample(&self, seed: u64) -> Result<GomInstance> {
        let (n, j, k, m) = (self.n, self.j, self.k, self.m);
        if m == 0 {
            return Err(GomError::InvalidArgument("m must be >= 1".into()));
        }
        if self.rho.is_nan() || self.rho <= 0.0 || self.rho > f64::from(m) {
            return Err(GomError::InvalidArgument(format!(
                "rho = {} must lie in (0, {m}]",
                self.rho
            )));
        }
        if k == 0 || n < 4 * k {
            return Err(GomError::InvalidArgument(format!(
                "need n >= 4k so each class gets pure subjects, got n = {n}, k = {k}"
            )));
        }
        if j < k {
            return Err(GomError::InvalidArgument(format!(
                "need j >= k for a rank-k item parameter matrix, got j = {j}, k = {k}"
            )));
        }
        let n0 = match self.pure_per_class {
            Some(p) => p,
            None => (3 * n) / (4 * k),
        };
        if n0 == 0 || n0 * k > n {
            return Err(GomError::InvalidArgument(format!(
                "{n0} pure subjects per class do not fit {k} classes into {n} subjects"
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // Membership matrix: the first k*n0 subjects are pure, the rest mixed.
        let mut pi = Array2::<f64>::zeros((n, k));
        let mut pure_rows: Vec<Vec<usize>> = vec![Vec::new(); k];
        for c in 0..k {
            for i in c * n0..(c + 1) * n0 {
                pi[(i, c)] = 1.0;
                pure_rows[c].push(i);
            }
        }
        for i in k * n0..n {
            let row = self.draw_mixed_row(&mut rng)?;
            for (c, v) in row.into_iter().enumerate() {
                pi[(i, c)] = v;
            }
        }

        // Item parameters: uniform entries rescaled so the largest is exactly
        // one, resampled if the rank check fails, then scaled by rho.
        let mut b = Array2::<f64>::zeros((j, k));
        let mut ok = false;
        for _attempt in 0..10 {
            for v in b.iter_mut() {
                *v = rng.random::<f64>();
            }
            let max = b.iter().cloned().fold(0.0_f64, f64::max);
            if max == 0.0 {
                continue;
            }
            b.mapv_inplace(|v| v / max);
            let gram = b.t().dot(&b);
            let (eigs, _) = sym_eig_desc(&gram);
            let s1 = eigs[0].max(0.0).sqrt();
            let sk = eigs[k - 1].max(0.0).sqrt();
            if sk > 1e-10 * s1 {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(GomError::RankDeficient {
                stage: "item parameter sampling",
                message: "could not draw a rank-k item parameter matrix in 10 attempts".into(),
            });
        }
        let theta_values = b.mapv(|v| v * self.rho);

        // Responses: Binomial(m, population / m) via m uniform draws per entry.
        let population = pi.dot(&theta_values.t());
        let r_values = sample_binomial_grid(&population, m, &mut rng);

        // Ingestion-style cleanup: drop subjects without a single response.
        let zero_rows: Vec<usize> = r_values
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(_, row)| row.iter().all(|&v| v == 0.0))
            .map(|(i, _)| i)
            .collect();
        let (pi, r_values, pure_rows) = if zero_rows.is_empty() {
            (pi, r_values, pure_rows)
        } else {
            if zero_rows.len() == n {
                return Err(GomError::DegenerateInput(
                    "every generated subject is all-zero; rho is too small".into(),
                ));
            }
            let keep: Vec<usize> = (0..n).filter(|i| !zero_rows.contains(i)).collect();
            let mut new_index = vec![usize::MAX; n];
            for (new, &old) in keep.iter().enumerate() {
                new_index[old] = new;
            }
            let mut pi_kept = Array2::<f64>::zeros((keep.len(), k));
            let mut r_kept = Array2::<f64>::zeros((keep.len(), j));
            for (new, &old) in keep.iter().enumerate() {
                pi_kept.row_mut(new).assign(&pi.row(old));
                r_kept.row_mut(new).assign(&r_values.row(old));
            }
            let remapped: Vec<Vec<usize>> = pure_rows
                .iter()
                .map(|rows| {
                    rows.iter()
                        .filter(|&&i| new_index[i] != usize::MAX)
                        .map(|&i| new_index[i])
                        .collect()
                })
                .collect();
            if let Some(c) = remapped.iter().position(|rows| rows.is_empty()) {
                return Err(GomError::DegenerateInput(format!(
                    "class {c} lost all its pure subjects to the all-zero cleanup"
                )));
            }
            (pi_kept, r_kept, remapped)
        };

        Ok(GomInstance {
            pi: MembershipMatrix::new(pi)?,
            theta: ItemParams::new(theta_values)?,
            r: ResponseMatrix::new(r_values, m)?,
            rho: self.rho,
            seed,
            pure_rows,
            dropped_rows: zero_rows,
        })
    }

    fn draw_mixed_row(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let k = self.k;
        match self.mixed {
            MixedRecipe::HalfUniform => {
                if k == 1 {
                    return Ok(vec![1.0]);
                }
                for _attempt in 0..100_000 {
                    let head: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>() / 2.0).collect();
                    let sum: f64 = head.iter().sum();
                    if sum <= 1.0 {
                        let mut row = head;
                        row.push(1.0 - sum);
                        return Ok(row);
                    }
                }
                Err(GomError::InvalidArgument(format!(
                    "half-uniform mixed rows are too unlikely at k = {k}; \
                     use MixedRecipe::UniformSimplex"
                )))
            }
            MixedRecipe::UniformSimplex => {
                let draws: Vec<f64> = (0..k)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let sum: f64 = draws.iter().sum();
                Ok(draws.into_iter().map(|v| v / sum).collect())
            }
        }
    }
}

/// Draws a GoM instance with the default recipe.
pub fn sample_gom(
    n: usize,
    j: usize,
    k: usize,
    m: u32,
    rho: f64,
    seed: u64,
) -> Result<GomInstance> {
    GomSampler::new(n, j, k, m, rho).sample(seed)
}

fn sample_binomial_grid(population: &Array2<f64>, m: u32, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mf = f64::from(m);
    population.mapv(|p| {
        let prob = p / mf;
        let mut count = 0u32;
        for _ in 0..m {
            if rng.random::<f64>() < prob {
                count += 1;
            }
        }
        f64::from(count)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Cell seed for (grid point, repetition):
/// `splitmix64(splitmix64(splitmix64(root) ^ grid_index) ^ rep)`.
pub fn derive_seed(root: u64, grid_index: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ grid_index) ^ rep)
}

/// Which quantity an experiment sweeps.
#[derive(Debug, Clone)]
pub enum Grid {
    /// Regularizer `tau = factor * M * max(N, J)`.
    TauFactor(Vec<f64>),
    /// Sparsity parameter.
    Rho(Vec<f64>),
    /// Number of subjects (J follows as N / 4).
    SubjectCount(Vec<usize>),
    /// A single cell; the grid column reports rho.
    Fixed,
}

impl Grid {
    fn len(&self) -> usize {
        match self {
            Grid::TauFactor(v) => v.len(),
            Grid::Rho(v) => v.len(),
            Grid::SubjectCount(v) => v.len(),
            Grid::Fixed => 1,
        }
    }
}

/// Full description of one simulation experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: u8,
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub m: u32,
    pub rho: f64,
    pub grid: Grid,
    pub reps: u32,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// When set, every cell also runs model selection over this k range and
    /// records the chosen k.
    pub select_k_range: Option<(usize, usize)>,
    /// Record wall-clock runtimes. Off by default so repeated invocations
    /// produce byte-identical tables.
    pub timing: bool,
}

impl ExperimentConfig {
    /// Regularizer sweep: `tau = alpha * M * max(N, J)` for alpha in
    /// 0.2, 0.4, ..., 7.0 at N = 800, J = 200, K = 3, M = 4, rho = 1.
    pub fn experiment_1(reps: u32, seed: u64) -> Self {
        let alphas: Vec<f64> = (1..=35).map(|i| i as f64 * 0.2).collect();
        Self {
            experiment: 1,
            n: 800,
            j: 200,
            k: 3,
            m: 4,
            rho: 1.0,
            grid: Grid::TauFactor(alphas),
            reps,
            methods: vec![Method::Srsc, Method::Crsc],
            seed,
            select_k_range: None,
            timing: false,
        }
    }

    /// Sparsity sweep: rho in 0.2, 0.4, ..., 3.0 at N = 800.
    pub fn experiment_2(reps: u32, seed: u64) -> Self {
        let rhos: Vec<f64> = (1..=15).map(|i| i as f64 * 0.2).collect();
        Self {
            experiment: 2,
            n: 800,
            j: 200,
            k: 3,
            m: 4,
            rho: 1.0,
            grid: Grid::Rho(rhos),
            reps,
            methods: Method::ALL.to_vec(),
            seed,
            select_k_range: None,
            timing: false,
        }
    }

    /// Size sweep: N in 800, 1600, ..., 8000 with J = N / 4 at rho = 0.2.
    pub fn experiment_3(reps: u32, seed: u64) -> Self {
        let ns: Vec<usize> = (1..=10).map(|i| i * 800).collect();
        Self {
            experiment: 3,
            n: 800,
            j: 200,
            k: 3,
            m: 4,
            rho: 0.2,
            grid: Grid::SubjectCount(ns),
            reps,
            methods: Method::ALL.to_vec(),
            seed,
            select_k_range: None,
            timing: false,
        }
    }

    /// Toy setting: K = 2, N = 20, J = 10, M = 5.
    pub fn experiment_4(reps: u32, seed: u64) -> Self {
        Self {
            experiment: 4,
            n: 20,
            j: 10,
            k: 2,
            m: 5,
            rho: 5.0,
            grid: Grid::Fixed,
            reps,
            methods: Method::ALL.to_vec(),
            seed,
            select_k_range: None,
            timing: false,
        }
    }

    pub fn preset(experiment: u8, reps: u32, seed: u64) -> Result<Self> {
        match experiment {
            1 => Ok(Self::experiment_1(reps, seed)),
            2 => Ok(Self::experiment_2(reps, seed)),
            3 => Ok(Self::experiment_3(reps, seed)),
            4 => Ok(Self::experiment_4(reps, seed)),
            other => Err(GomError::InvalidArgument(format!(
                "experiment must be 1, 2, 3, or 4, got {other}"
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(GomError::InvalidArgument("reps must be >= 1".into()));
        }
        if self.grid.len() == 0 {
            return Err(GomError::InvalidArgument("empty grid".into()));
        }
        if self.methods.is_empty() {
            return Err(GomError::InvalidArgument("no methods selected".into()));
        }
        if let Some((lo, hi)) = self.select_k_range {
            if lo == 0 || lo > hi {
                return Err(GomError::InvalidArgument(format!(
                    "bad selection range {lo}..={hi}"
                )));
            }
        }
        Ok(())
    }
}

/// One long-format result row.
#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub grid_value: f64,
    pub rep: u32,
    pub method: Method,
    pub hamming: Option<f64>,
    pub relative: Option<f64>,
    pub runtime_s: f64,
    pub k_hat: Option<usize>,
    pub error: Option<String>,
}

/// Long-format results plus what is needed to summarize them.
#[derive(Debug, Clone)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    pub k_true: usize,
}

impl ExperimentTable {
    /// Fixed column order: grid_value, rep, method, hamming, relative,
    /// runtime_s, k_hat, error.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "grid_value",
            "rep",
            "method",
            "hamming",
            "relative",
            "runtime_s",
            "k_hat",
            "error",
        ])
        .map_err(csv_err)?;
        for row in &self.rows {
            wtr.write_record([
                row.grid_value.to_string(),
                row.rep.to_string(),
                row.method.name().to_string(),
                row.hamming.map(|v| v.to_string()).unwrap_or_default(),
                row.relative.map(|v| v.to_string()).unwrap_or_default(),
                row.runtime_s.to_string(),
                row.k_hat.map(|v| v.to_string()).unwrap_or_default(),
                row.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Means over repetitions per (grid point, method), matching the layout of
    /// the per-grid-point figures.
    pub fn write_summary_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "grid_value",
            "method",
            "mean_hamming",
            "mean_relative",
            "mean_runtime_s",
            "k_accuracy",
            "failures",
        ])
        .map_err(csv_err)?;
        let mut seen: Vec<(f64, Method)> = Vec::new();
        for row in &self.rows {
            let key = (row.grid_value, row.method);
            if !seen.iter().any(|&(g, m)| g == key.0 && m == key.1) {
                seen.push(key);
            }
        }
        for (grid_value, method) in seen {
            let cells: Vec<&ExperimentRow> = self
                .rows
                .iter()
                .filter(|r| r.grid_value == grid_value && r.method == method)
                .collect();
            let hams: Vec<f64> = cells.iter().filter_map(|r| r.hamming).collect();
            let rels: Vec<f64> = cells.iter().filter_map(|r| r.relative).collect();
            let runtimes: Vec<f64> = cells
                .iter()
                .filter(|r| r.error.is_none())
                .map(|r| r.runtime_s)
                .collect();
            let k_hats: Vec<usize> = cells.iter().filter_map(|r| r.k_hat).collect();
            let failures = cells.iter().filter(|r| r.error.is_some()).count();
            let k_acc = if k_hats.is_empty() {
                String::new()
            } else {
                accuracy_rate(&k_hats, self.k_true)?.to_string()
            };
            wtr.write_record([
                grid_value.to_string(),
                method.name().to_string(),
                mean(&hams).map(|v| v.to_string()).unwrap_or_default(),
                mean(&rels).map(|v| v.to_string()).unwrap_or_default(),
                mean(&runtimes).map(|v| v.to_string()).unwrap_or_default(),
                k_acc,
                failures.to_string(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn csv_err(e: csv::Error) -> GomError {
    GomError::InvalidArgument(format!("csv write failed: {e}"))
}

/// Runs every (grid point, repetition, method) cell and collects the long
/// table. Cells are independent and run in parallel; per-cell seeds make the
/// output identical for any thread count. Individual fit failures are recorded
/// in their row, not raised.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    cfg.validate()?;
    let cells: Vec<(usize, u32)> = (0..cfg.grid.len())
        .flat_map(|g| (0..cfg.reps).map(move |r| (g, r)))
        .collect();

    let mut results: Vec<(usize, u32, Vec<ExperimentRow>)> = cells
        .par_iter()
        .map(|&(grid_index, rep)| {
            let rows = run_cell(cfg, grid_index, rep);
            (grid_index, rep, rows)
        })
        .collect();
    results.sort_by_key(|&(g, r, _)| (g, r));
    Ok(ExperimentTable {
        rows: results.into_iter().flat_map(|(_, _, rows)| rows).collect(),
        k_true: cfg.k,
    })
}

fn run_cell(cfg: &ExperimentConfig, grid_index: usize, rep: u32) -> Vec<ExperimentRow> {
    let (n, j, rho, tau, grid_value) = match &cfg.grid {
        Grid::TauFactor(alphas) => {
            let alpha = alphas[grid_index];
            let tau = alpha * f64::from(cfg.m) * cfg.n.max(cfg.j) as f64;
            (cfg.n, cfg.j, cfg.rho, Tau::Fixed(tau), alpha)
        }
        Grid::Rho(rhos) => (cfg.n, cfg.j, rhos[grid_index], Tau::Auto, rhos[grid_index]),
        Grid::SubjectCount(ns) => {
            let n = ns[grid_index];
            (n, n / 4, cfg.rho, Tau::Auto, n as f64)
        }
        Grid::Fixed => (cfg.n, cfg.j, cfg.rho, Tau::Auto, cfg.rho),
    };
    let seed = derive_seed(cfg.seed, grid_index as u64, u64::from(rep));
    let instance = match sample_gom(n, j, cfg.k, cfg.m, rho, seed) {
        Ok(inst) => inst,
        Err(e) => {
            return cfg
                .methods
                .iter()
                .map(|&method| ExperimentRow {
                    grid_value,
                    rep,
                    method,
                    hamming: None,
                    relative: None,
                    runtime_s: 0.0,
                    k_hat: None,
                    error: Some(format!("generator: {e}")),
                })
                .collect();
        }
    };

    cfg.methods
        .iter()
        .map(|&method| {
            let fit_cfg = FitConfig::new(cfg.k).with_tau(tau);
            let started = Instant::now();
            let outcome = fit(method, &instance.r, &fit_cfg);
            let runtime_s = if cfg.timing {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            };
            match outcome {
                Ok(res) => {
                    let hamming = hamming_error(&res.pi_hat, &instance.pi)
                        .map(|e| e.value)
                        .ok();
                    let relative = relative_error(&res.theta_hat, &instance.theta)
                        .map(|e| e.value)
                        .ok();
                    let k_hat = cfg.select_k_range.and_then(|(lo, hi)| {
                        let hi = hi.min(instance.r.n_subjects().min(instance.r.n_items()));
                        select_k(&instance.r, method, lo, hi, &fit_cfg)
                            .map(|curve| curve.argmax_k)
                            .ok()
                    });
                    ExperimentRow {
                        grid_value,
                        rep,
                        method,
                        hamming,
                        relative,
                        runtime_s,
                        k_hat,
                        error: None,
                    }
                }
                Err(e) => ExperimentRow {
                    grid_value,
                    rep,
                    method,
                    hamming: None,
                    relative: None,
                    runtime_s,
                    k_hat: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
