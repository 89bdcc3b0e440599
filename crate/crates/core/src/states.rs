//! Density matrices, synthetic targets and the quantumness driver.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

// Unused when a dependency links std.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::flow::{integrate, FlowConfig, Termination, Trajectory};
use crate::linalg::{self, Matrix};
use crate::objective::{cc_state, weighted_gram, CCFactorization};
use crate::rng::{self, exponential, standard_normal};
use crate::stiefel::random_stiefel;

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const EIGENVALUE_FLOOR: f64 = -1e-10;
pub const TRACE_TOL: f64 = 1e-12;

/// Measured invariants of a candidate density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityReport {
    /// `max |A[i,j] − A[j,i]|`.
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub trace: f64,
}

impl DensityReport {
    pub fn measure(value: &Matrix) -> Result<Self> {
        if !value.is_square() {
            return Err(Error::size("DensityReport", format!("non-square {:?}", value.shape())));
        }
        let d = value.rows();
        let mut asymmetry: f64 = 0.0;
        for j in 0..d {
            for i in 0..j {
                asymmetry = asymmetry.max((value[(i, j)] - value[(j, i)]).abs());
            }
        }
        let eig = linalg::sym_eigen(value)?;
        Ok(DensityReport {
            asymmetry,
            min_eigenvalue: eig.values.first().copied().unwrap_or(0.0),
            trace: value.trace(),
        })
    }

    /// The first violated invariant, if any.
    pub fn check(&self) -> Result<()> {
        if !(self.asymmetry <= SYMMETRY_TOL) {
            return Err(Error::Validation {
                invariant: "symmetric",
                value: self.asymmetry,
                tolerance: SYMMETRY_TOL,
            });
        }
        if !(self.min_eigenvalue >= EIGENVALUE_FLOOR) {
            return Err(Error::Validation {
                invariant: "positive semidefinite (min eigenvalue)",
                value: self.min_eigenvalue,
                tolerance: EIGENVALUE_FLOOR,
            });
        }
        if !((self.trace - 1.0).abs() <= TRACE_TOL) {
            return Err(Error::Validation {
                invariant: "trace",
                value: self.trace,
                tolerance: TRACE_TOL,
            });
        }
        Ok(())
    }
}

/// A real density matrix on `ℝⁿ ⊗ ℝᵐ`: symmetric, positive semidefinite,
/// unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim_a: usize,
    dim_b: usize,
    value: Matrix,
}

impl DensityMatrix {
    pub fn new(dim_a: usize, dim_b: usize, value: Matrix) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 || value.shape() != (dim_a * dim_b, dim_a * dim_b) {
            return Err(Error::size(
                "DensityMatrix",
                format!("{:?} matrix is not ({dim_a}·{dim_b})²", value.shape()),
            ));
        }
        DensityReport::measure(&value)?.check()?;
        Ok(DensityMatrix { dim_a, dim_b, value })
    }

    /// `(n, m)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    /// `n·m`.
    pub fn dim(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.value
    }

    /// The same operator viewed on `ℝⁿ ⊗ ℝᵐ` for another factorisation of
    /// its dimension.
    pub fn with_dims(&self, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a == 0 || dim_a * dim_b != self.dim() {
            return Err(Error::size(
                "DensityMatrix::with_dims",
                format!("{dim_a}·{dim_b} != {}", self.dim()),
            ));
        }
        Ok(DensityMatrix {
            dim_a,
            dim_b,
            value: self.value.clone(),
        })
    }
}

/// Uniform draw from the open probability simplex (Dirichlet(1, …, 1)).
pub fn random_simplex<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..len).map(|_| exponential(rng)).collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 && raw.iter().all(|&x| x > 0.0) {
            return raw.iter().map(|x| x / total).collect();
        }
    }
}

/// A random classical-classical state of rank `r` on `ℝⁿ ⊗ ℝᵐ` and the
/// factorization that generated it. Each weight is at least `0.01 / r`.
pub fn random_cc_state<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    r: usize,
    rng: &mut R,
) -> Result<(DensityMatrix, CCFactorization)> {
    if r == 0 || r > n.min(m) {
        return Err(Error::size(
            "random_cc_state",
            format!("rank {r} outside 1..={}", n.min(m)),
        ));
    }
    let u = random_stiefel(n, r, rng)?;
    let v = random_stiefel(m, r, rng)?;
    let floor = 0.01 / r as f64;
    let theta: Vec<f64> = random_simplex(r, rng)
        .into_iter()
        .map(|d| floor + (1.0 - r as f64 * floor) * d)
        .collect();
    let f = CCFactorization::new(u, v, theta)?;
    let rho = DensityMatrix::new(n, m, cc_state(&f))?;
    Ok((rho, f))
}

/// `G·Gᵀ / tr(G·Gᵀ)` for an `nm × rank` standard-normal `G`.
pub fn random_density<R: Rng + ?Sized>(n: usize, m: usize, rank: usize, rng: &mut R) -> Result<DensityMatrix> {
    let d = n * m;
    if rank == 0 || rank > d {
        return Err(Error::size("random_density", format!("rank {rank} outside 1..={d}")));
    }
    let g = Matrix::from_fn(d, rank, |_, _| standard_normal(rng));
    let ones = alloc::vec![1.0; rank];
    let a = weighted_gram(&g, &ones);
    let tr = a.trace();
    let mut value = a.scale(1.0 / tr);
    // Put the rounding of the division on the diagonal so the trace is exact
    // to the last bit or two.
    let excess = value.trace() - 1.0;
    value[(0, 0)] -= excess;
    DensityMatrix::new(n, m, value)
}

/// Random starting point: a pair of random Stiefel points and a uniform
/// simplex weight vector.
pub fn random_init<R: Rng + ?Sized>(n: usize, m: usize, rank: usize, rng: &mut R) -> Result<CCFactorization> {
    let u = random_stiefel(n, rank, rng)?;
    let v = random_stiefel(m, rank, rng)?;
    CCFactorization::new(u, v, random_simplex(rank, rng))
}

#[derive(Clone, Debug)]
pub struct RestartRun {
    pub factorization: CCFactorization,
    pub trajectory: Trajectory,
    pub objective: f64,
}

impl RestartRun {
    pub fn termination(&self) -> Option<Termination> {
        self.trajectory.termination()
    }
}

/// Runs restart `index` of work item `cell`. The initial point is drawn from
/// its own stream, so the result does not depend on which other restarts run.
pub fn run_restart(
    rho: &DensityMatrix,
    rank: usize,
    cfg: &FlowConfig,
    seed: u64,
    cell: u64,
    index: usize,
) -> Result<RestartRun> {
    let (n, m) = rho.dims();
    let mut rng = rng::stream(seed, rng::restart_stream(cell, index as u64));
    let init = random_init(n, m, rank, &mut rng)?;
    let (factorization, trajectory) = integrate(rho, &init, cfg)?;
    let objective = trajectory.last().map_or(f64::NAN, |s| s.objective);
    Ok(RestartRun {
        factorization,
        trajectory,
        objective,
    })
}

/// Per-restart diagnostics of a quantumness estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartSummary {
    pub objective: f64,
    pub termination: Termination,
}

/// Best distance to the classical-classical set found over all restarts.
#[derive(Clone, Debug)]
pub struct QuantumnessResult {
    /// `√(2·F*)` with `F*` the best final objective.
    pub q: f64,
    pub best: CCFactorization,
    pub best_objective: f64,
    /// `None` entries are restarts that failed.
    pub per_restart: Vec<Option<RestartSummary>>,
    pub restarts: usize,
}

/// Folds restart outcomes into a [`QuantumnessResult`]. Failed restarts are
/// kept as `None`; the call fails only if every restart failed.
pub fn summarize(outcomes: Vec<Result<RestartRun>>) -> Result<QuantumnessResult> {
    let restarts = outcomes.len();
    let mut per_restart = Vec::with_capacity(restarts);
    let mut best: Option<RestartRun> = None;
    let mut first_err = None;
    for outcome in outcomes {
        match outcome {
            Ok(run) => {
                per_restart.push(Some(RestartSummary {
                    objective: run.objective,
                    termination: run.termination().unwrap_or(Termination::Horizon),
                }));
                if best.as_ref().is_none_or(|b| run.objective < b.objective) {
                    best = Some(run);
                }
            }
            Err(e) => {
                per_restart.push(None);
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(run) => Ok(QuantumnessResult {
            q: (2.0 * run.objective.max(0.0)).sqrt(),
            best_objective: run.objective,
            best: run.factorization,
            per_restart,
            restarts,
        }),
        None => Err(Error::AllRestartsFailed {
            restarts,
            first: Box::new(first_err.unwrap_or(Error::Degenerate {
                op: "quantumness",
                detail: "no restarts requested".into(),
            })),
        }),
    }
}

/// Estimates `Q(ρ) = min_σ ‖ρ − σ‖_F` over classical-classical `σ` with at
/// most `rank` terms, from `restarts` random initial points.
pub fn quantumness(
    rho: &DensityMatrix,
    rank: usize,
    restarts: usize,
    cfg: &FlowConfig,
    seed: u64,
) -> Result<QuantumnessResult> {
    check_quantumness_args(rho, rank, restarts)?;
    summarize(
        (0..restarts)
            .map(|i| run_restart(rho, rank, cfg, seed, 0, i))
            .collect(),
    )
}

pub fn check_quantumness_args(rho: &DensityMatrix, rank: usize, restarts: usize) -> Result<()> {
    let (n, m) = rho.dims();
    if rank == 0 || rank > n.min(m) {
        return Err(Error::size("quantumness", format!("rank {rank} outside 1..={}", n.min(m))));
    }
    if restarts == 0 {
        return Err(Error::size("quantumness", "at least one restart is required".into()));
    }
    Ok(())
}

/// Ordered pairs `(n, m)` with `n, m ≥ 2` and `n·m = dim`.
pub fn factor_pairs(dim: usize) -> Result<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (2..=dim / 2)
        .filter(|&n| dim.is_multiple_of(n) && dim / n >= 2)
        .map(|n| (n, dim / n))
        .collect();
    if pairs.is_empty() {
        return Err(Error::UnsupportedDimension {
            dim,
            reason: "no factorisation n·m with n, m >= 2 (prime or < 4)",
        });
    }
    Ok(pairs)
}

/// One `(n, m, r)` configuration of a rank sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SweepCell {
    pub n: usize,
    pub m: usize,
    pub r: usize,
}

impl SweepCell {
    /// Stable id used to derive the cell's random streams.
    pub fn stream_id(&self) -> u64 {
        ((self.n as u64) << 24) | ((self.m as u64) << 8) | self.r as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub best_objective: f64,
    pub mean_objective: f64,
    pub restarts: usize,
    /// Restarts that finished without error.
    pub succeeded: usize,
}

/// Every `(n, m, r)` with `(n, m)` from [`factor_pairs`] and
/// `1 ≤ r ≤ min(n, m)`.
pub fn sweep_cells(dim: usize) -> Result<Vec<SweepCell>> {
    Ok(factor_pairs(dim)?
        .into_iter()
        .flat_map(|(n, m)| (1..=n.min(m)).map(move |r| SweepCell { n, m, r }))
        .collect())
}

/// Runs all restarts of one sweep cell.
pub fn sweep_cell(
    rho: &DensityMatrix,
    cell: SweepCell,
    restarts: usize,
    cfg: &FlowConfig,
    seed: u64,
) -> Result<SweepRow> {
    let view = rho.with_dims(cell.n, cell.m)?;
    let outcomes = (0..restarts)
        .map(|i| run_restart(&view, cell.r, cfg, seed, cell.stream_id(), i))
        .collect();
    sweep_row(cell, outcomes)
}

pub fn sweep_row(cell: SweepCell, outcomes: Vec<Result<RestartRun>>) -> Result<SweepRow> {
    let restarts = outcomes.len();
    let result = summarize(outcomes)?;
    let finals: Vec<f64> = result.per_restart.iter().flatten().map(|s| s.objective).collect();
    Ok(SweepRow {
        cell,
        best_objective: result.best_objective,
        mean_objective: finals.iter().sum::<f64>() / finals.len() as f64,
        restarts,
        succeeded: finals.len(),
    })
}

/// Sorts rows by best objective, ties broken by cell.
pub fn sort_sweep(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| a.best_objective.total_cmp(&b.best_objective).then(a.cell.cmp(&b.cell)));
}

/// Runs [`quantumness`] for every sweep cell of `rho`'s dimension; rows are
/// sorted by best objective.
pub fn rank_sweep(rho: &DensityMatrix, restarts: usize, cfg: &FlowConfig, seed: u64) -> Result<Vec<SweepRow>> {
    let mut rows = sweep_cells(rho.dim())?
        .into_iter()
        .map(|cell| sweep_cell(rho, cell, restarts, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    sort_sweep(&mut rows);
    Ok(rows)
}
