//! The four experiments. Each `*_run` function does the numerical work and
//! returns plain data; the `cmd_*` wrappers add files, console output and an
//! exit code.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;

use qnflow_core::flow::{FlowConfig, Termination};
use qnflow_core::rng::{self, TARGET_STREAM};
use qnflow_core::states::{
    self, check_quantumness_args, random_cc_state, random_density, run_restart, sort_sweep, summarize, sweep_cells,
    sweep_row, DensityReport, RestartRun, SweepRow,
};
use qnflow_core::{CCFactorization, DensityMatrix, Error as CoreError, QuantumnessResult};

use crate::args::{ConsistencyArgs, DecomposeArgs, QuantifyArgs, RanksweepArgs, TargetRank};
use crate::exit;
use crate::io;
use crate::manifest::{json_f64, RunManifest};
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn prepare(cfg: &FlowConfig, out: &Path) -> Result<()> {
    cfg.validate().map_err(|e| usage(format!("invalid flow configuration: {e}")))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

/// Runs restarts `0..count` of `cell` in parallel; results keep index order.
pub fn parallel_restarts(
    rho: &DensityMatrix,
    rank: usize,
    cfg: &FlowConfig,
    seed: u64,
    cell: u64,
    count: usize,
) -> Vec<qnflow_core::Result<RestartRun>> {
    (0..count)
        .into_par_iter()
        .map(|i| run_restart(rho, rank, cfg, seed, cell, i))
        .collect()
}

pub fn termination_code(t: Option<Termination>) -> i32 {
    match t {
        Some(Termination::Stationarity) => exit::SUCCESS,
        Some(Termination::Horizon) | None => exit::HORIZON,
        Some(Termination::Stalled) => exit::STALLED,
    }
}

pub struct Decomposition {
    pub rho: DensityMatrix,
    pub truth: CCFactorization,
    pub run: RestartRun,
}

/// Target from the seed's target stream, initial guess from restart 0.
pub fn decompose_run(n: usize, m: usize, rank: usize, init_rank: usize, cfg: &FlowConfig, seed: u64) -> Result<Decomposition> {
    if rank == 0 || rank > n.min(m) {
        return Err(usage(format!("--rank must be in 1..={} for n = {n}, m = {m}", n.min(m))));
    }
    if init_rank == 0 || init_rank > n.min(m) {
        return Err(usage(format!("--init-rank must be in 1..={} for n = {n}, m = {m}", n.min(m))));
    }
    let mut target_rng = rng::stream(seed, TARGET_STREAM);
    let (rho, truth) = random_cc_state(n, m, rank, &mut target_rng)?;
    let run = run_restart(&rho, init_rank, cfg, seed, 0, 0)?;
    Ok(Decomposition { rho, truth, run })
}

pub fn cmd_decompose(args: &DecomposeArgs, argv: &[String]) -> Result<i32> {
    let started = Instant::now();
    let cfg = args.flow.config();
    let out = &args.out.out;
    prepare(&cfg, out)?;
    let (n, m) = (args.n, args.m);
    let init_rank = args.init_rank.unwrap_or(n.min(m));
    let seed = args.seed.seed;

    let result = decompose_run(n, m, args.rank, init_rank, &cfg, seed);
    let d = match result {
        Ok(d) => d,
        Err(e) => {
            // keep whatever was recorded before a non-finite state
            if let Some(CoreError::NonFinite {
                trajectory: Some(traj), ..
            }) = e.downcast_ref::<CoreError>()
            {
                io::write_file(out, "trajectory.csv", |w| io::write_trajectory(w, traj))?;
                io::write_file(out, "events.csv", |w| io::write_events(w, traj))?;
            }
            return Err(e);
        }
    };
    let traj = &d.run.trajectory;
    io::write_file(out, "trajectory.csv", |w| io::write_trajectory(w, traj))?;
    io::write_file(out, "events.csv", |w| io::write_events(w, traj))?;
    io::write_factorization(out, &d.run.factorization)?;

    let termination = traj.termination();
    let mut manifest = RunManifest::new("decompose", argv, seed, cfg)
        .dim("n", n)
        .dim("m", m)
        .dim("rank", args.rank)
        .dim("init_rank", init_rank);
    manifest.outputs = ["trajectory.csv", "events.csv", "u.csv", "v.csv", "theta.csv"].map(String::from).to_vec();
    manifest.note("final_objective", json_f64(d.run.objective));
    manifest.note("surviving_rank", d.run.factorization.rank());
    manifest.note("discards", traj.discard_count());
    manifest.note("repairs", traj.repair_count());
    manifest.note("termination", termination.map_or("none", |t| t.as_str()));
    manifest.note("true_theta", d.truth.theta().iter().map(|&x| json_f64(x)).collect::<Vec<_>>());
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;

    println!("final objective   {:e}", d.run.objective);
    println!("surviving rank    {}", d.run.factorization.rank());
    println!("discards          {}", traj.discard_count());
    println!("termination       {}", termination.map_or("none", |t| t.as_str()));
    println!("t                 {}", traj.last().map_or(0.0, |s| s.t));
    Ok(termination_code(termination))
}

pub struct Trial {
    pub final_objective: f64,
    pub termination: Option<Termination>,
    pub rank: usize,
    pub max_sum_deviation: f64,
    pub first_ascent: Option<usize>,
}

pub struct ConsistencyReport {
    pub rho: DensityMatrix,
    pub runs: Vec<RestartRun>,
    pub trials: Vec<Trial>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std: f64,
    pub max_sum_deviation: f64,
}

impl ConsistencyReport {
    pub fn relative_std(&self) -> f64 {
        self.std / self.mean.abs()
    }
}

pub fn consistency_run(
    n: usize,
    m: usize,
    target_rank: TargetRank,
    terms: usize,
    trials: usize,
    cfg: &FlowConfig,
    seed: u64,
) -> Result<ConsistencyReport> {
    let rank = match target_rank {
        TargetRank::Full => n * m,
        TargetRank::Rank(r) => r,
    };
    if rank > n * m {
        return Err(usage(format!("--target-rank {rank} exceeds n·m = {}", n * m)));
    }
    if trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    if terms == 0 || terms > n.min(m) {
        return Err(usage(format!("--N must be in 1..={}", n.min(m))));
    }
    let rho = random_density(n, m, rank, &mut rng::stream(seed, TARGET_STREAM))?;
    let runs = parallel_restarts(&rho, terms, cfg, seed, 0, trials)
        .into_iter()
        .collect::<qnflow_core::Result<Vec<_>>>()?;
    let trial_rows: Vec<Trial> = runs
        .iter()
        .map(|r| Trial {
            final_objective: r.objective,
            termination: r.termination(),
            rank: r.factorization.rank(),
            max_sum_deviation: r.trajectory.max_theta_sum_deviation(),
            first_ascent: r.trajectory.first_ascent(cfg),
        })
        .collect();
    let finals: Vec<f64> = trial_rows.iter().map(|t| t.final_objective).collect();
    let k = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / k;
    let std = if finals.len() > 1 {
        (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let max_sum_deviation = trial_rows.iter().fold(0.0f64, |a, t| a.max(t.max_sum_deviation));
    Ok(ConsistencyReport {
        rho,
        runs,
        trials: trial_rows,
        mean,
        std,
        max_sum_deviation,
    })
}

pub fn cmd_consistency(args: &ConsistencyArgs, argv: &[String]) -> Result<i32> {
    let started = Instant::now();
    let cfg = args.flow.config();
    let out = &args.out.out;
    prepare(&cfg, out)?;
    let terms = args.terms.unwrap_or(args.n.min(args.m));
    let seed = args.seed.seed;
    let report = consistency_run(args.n, args.m, args.target_rank, terms, args.trials, &cfg, seed)?;

    io::write_matrix_csv(&out.join("target.csv"), report.rho.as_matrix())?;
    io::write_file(out, "curves.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["trial", "t", "objective", "theta_sum"])?;
        for (i, run) in report.runs.iter().enumerate() {
            for s in &run.trajectory.samples {
                csv.write_record([
                    i.to_string(),
                    io::fmt_f64(s.t),
                    io::fmt_f64(s.objective),
                    io::fmt_f64(s.theta_sum),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    io::write_file(out, "trials.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "trial",
            "final_objective",
            "termination",
            "rank",
            "max_theta_sum_deviation",
            "first_ascent",
        ])?;
        for (i, t) in report.trials.iter().enumerate() {
            csv.write_record([
                i.to_string(),
                io::fmt_f64(t.final_objective),
                t.termination.map_or("none", |t| t.as_str()).to_string(),
                t.rank.to_string(),
                io::fmt_f64(t.max_sum_deviation),
                t.first_ascent.map_or(String::new(), |k| k.to_string()),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;

    let ascents = report.trials.iter().filter(|t| t.first_ascent.is_some()).count();
    let mut manifest = RunManifest::new("consistency", argv, seed, cfg)
        .dim("n", args.n)
        .dim("m", args.m)
        .dim("N", terms)
        .dim("trials", args.trials);
    manifest.dims.insert("target_rank".into(), args.target_rank.to_string().into());
    manifest.outputs = ["target.csv", "curves.csv", "trials.csv"].map(String::from).to_vec();
    manifest.note("mean_objective", json_f64(report.mean));
    manifest.note("std_objective", json_f64(report.std));
    manifest.note("max_theta_sum_deviation", json_f64(report.max_sum_deviation));
    manifest.note("trials_with_ascent", ascents);
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;

    println!("trials                    {}", report.trials.len());
    println!("mean final objective      {:e}", report.mean);
    println!("std final objective       {:e}", report.std);
    println!("relative std              {:e}", report.relative_std());
    println!("max |sum(theta) - 1|      {:e}", report.max_sum_deviation);
    println!("trials with ascent        {ascents}");
    Ok(exit::SUCCESS)
}

/// All `(cell, restart)` pairs run in one parallel pass; rows come back
/// sorted by best objective.
pub fn ranksweep_run(rho: &DensityMatrix, restarts: usize, cfg: &FlowConfig, seed: u64) -> Result<Vec<SweepRow>> {
    if restarts == 0 {
        return Err(usage("--restarts must be positive"));
    }
    let cells = sweep_cells(rho.dim())?;
    let views = cells
        .iter()
        .map(|c| rho.with_dims(c.n, c.m))
        .collect::<qnflow_core::Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..restarts).map(move |i| (c, i))).collect();
    let mut results: Vec<_> = jobs
        .into_par_iter()
        .map(|(c, i)| {
            let cell = cells[c];
            run_restart(&views[c], cell.r, cfg, seed, cell.stream_id(), i)
        })
        .collect();
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells.iter().rev() {
        let outcomes = results.split_off(results.len() - restarts);
        rows.push(sweep_row(*cell, outcomes)?);
    }
    sort_sweep(&mut rows);
    Ok(rows)
}

/// `(n, m, r)` triples whose best objective exceeds that of `(n, m, r − 1)`.
pub fn monotonicity_violations(rows: &[SweepRow]) -> Vec<(usize, usize, usize)> {
    let mut by_cell: Vec<&SweepRow> = rows.iter().collect();
    by_cell.sort_by_key(|r| r.cell);
    by_cell
        .windows(2)
        .filter(|w| {
            let (a, b) = (w[0].cell, w[1].cell);
            (a.n, a.m) == (b.n, b.m) && b.r == a.r + 1 && w[1].best_objective > w[0].best_objective
        })
        .map(|w| (w[1].cell.n, w[1].cell.m, w[1].cell.r))
        .collect()
}

pub fn cmd_ranksweep(args: &RanksweepArgs, argv: &[String]) -> Result<i32> {
    let started = Instant::now();
    let cfg = args.flow.config();
    let out = &args.out.out;
    prepare(&cfg, out)?;
    let seed = args.seed.seed;
    let d = args.dim;
    if let Err(e @ CoreError::UnsupportedDimension { .. }) = states::factor_pairs(d) {
        return Err(e.into());
    }
    let rho = match &args.input {
        Some(path) => {
            let file = io::read_matrix(path)?;
            DensityMatrix::new(1, d, file.matrix).with_context(|| format!("validating {}", path.display()))?
        }
        None => random_density(1, d, d, &mut rng::stream(seed, TARGET_STREAM))?,
    };
    let rows = ranksweep_run(&rho, args.restarts, &cfg, seed)?;
    io::write_file(out, "sweep.csv", |w| io::write_sweep(w, &rows))?;
    if args.input.is_none() {
        io::write_matrix_csv(&out.join("target.csv"), rho.as_matrix())?;
    }

    let violations = monotonicity_violations(&rows);
    let best = &rows[0];
    let mut manifest = RunManifest::new("ranksweep", argv, seed, cfg)
        .dim("dim", d)
        .dim("restarts", args.restarts);
    manifest.outputs = vec!["sweep.csv".into()];
    if args.input.is_none() {
        manifest.outputs.push("target.csv".into());
    }
    manifest.note("best_n", best.cell.n);
    manifest.note("best_m", best.cell.m);
    manifest.note("best_r", best.cell.r);
    manifest.note("best_objective", json_f64(best.best_objective));
    manifest.note("monotonicity_violations", violations.len());
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;

    println!(
        "best: n = {}, m = {}, r = {}, objective = {:e} ({} rows)",
        best.cell.n,
        best.cell.m,
        best.cell.r,
        best.best_objective,
        rows.len()
    );
    for (n, m, r) in &violations {
        println!("warning: best objective increases from r = {} to r = {r} at (n, m) = ({n}, {m})", r - 1);
    }
    Ok(exit::SUCCESS)
}

pub fn quantify_run(
    rho: &DensityMatrix,
    terms: usize,
    restarts: usize,
    cfg: &FlowConfig,
    seed: u64,
) -> Result<QuantumnessResult> {
    check_quantumness_args(rho, terms, restarts).map_err(|e| usage(e.to_string()))?;
    Ok(summarize(parallel_restarts(rho, terms, cfg, seed, 0, restarts))?)
}

/// Reads and validates the input, printing the measured invariants.
pub fn load_density(path: &Path, n: Option<usize>, m: Option<usize>) -> Result<DensityMatrix> {
    let file = io::read_matrix(path)?;
    let a = file.matrix;
    if !a.is_square() {
        return Err(CoreError::Size {
            op: "quantify",
            detail: format!("input is {}×{}, not square", a.rows(), a.cols()),
        }
        .into());
    }
    let d = a.rows();
    let (n, m) = match (n.or(file.dims.map(|x| x.0)), m.or(file.dims.map(|x| x.1))) {
        (Some(n), Some(m)) => (n, m),
        (Some(n), None) if n > 0 && d % n == 0 => (n, d / n),
        (None, Some(m)) if m > 0 && d % m == 0 => (d / m, m),
        _ => return Err(usage("give --n and --m (or a JSON input carrying them)")),
    };
    if n * m != d {
        return Err(CoreError::Size {
            op: "quantify",
            detail: format!("input dimension {d} is not n·m = {n}·{m} = {}", n * m),
        }
        .into());
    }
    let report = DensityReport::measure(&a)?;
    eprintln!(
        "input {}: max |A - Aᵀ| = {:e} (tol {:e}), min eigenvalue = {:e} (floor {:e}), trace = {} (tol {:e})",
        path.display(),
        report.asymmetry,
        states::SYMMETRY_TOL,
        report.min_eigenvalue,
        states::EIGENVALUE_FLOOR,
        report.trace,
        states::TRACE_TOL
    );
    Ok(DensityMatrix::new(n, m, a)?)
}

pub fn cmd_quantify(args: &QuantifyArgs, argv: &[String]) -> Result<i32> {
    let started = Instant::now();
    let cfg = args.flow.config();
    let out = &args.out.out;
    cfg.validate().map_err(|e| usage(format!("invalid flow configuration: {e}")))?;
    let rho = load_density(&args.input, args.n, args.m)?;
    let (n, m) = rho.dims();
    let terms = args.terms.unwrap_or(n.min(m));
    let seed = args.seed.seed;
    let result = quantify_run(&rho, terms, args.restarts, &cfg, seed)?;
    prepare(&cfg, out)?;

    io::write_factorization(out, &result.best)?;
    io::write_file(out, "restarts.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["restart", "final_objective", "termination"])?;
        for (i, r) in result.per_restart.iter().enumerate() {
            let (obj, term) = match r {
                Some(s) => (io::fmt_f64(s.objective), s.termination.as_str()),
                None => (String::new(), "failed"),
            };
            csv.write_record([i.to_string(), obj, term.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let mut manifest = RunManifest::new("quantify", argv, seed, cfg)
        .dim("n", n)
        .dim("m", m)
        .dim("N", terms)
        .dim("restarts", args.restarts);
    manifest.outputs = ["u.csv", "v.csv", "theta.csv", "restarts.csv"].map(String::from).to_vec();
    manifest.note("input", args.input.display().to_string());
    manifest.note("q", json_f64(result.q));
    manifest.note("best_objective", json_f64(result.best_objective));
    manifest.note("surviving_rank", result.best.rank());
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(out)?;

    println!("q                 {:e}", result.q);
    println!("best objective    {:e}", result.best_objective);
    println!("surviving rank    {}", result.best.rank());
    let failed = result.per_restart.iter().filter(|r| r.is_none()).count();
    if failed > 0 {
        println!("failed restarts   {failed}");
    }
    Ok(exit::SUCCESS)
}
