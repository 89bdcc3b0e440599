//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test --release -p qnflow --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use qnflow::args::TargetRank;
use qnflow::commands::{consistency_run, decompose_run, monotonicity_violations, ranksweep_run};
use qnflow::io::read_sweep;
use qnflow_core::flow::{rhs, FlowConfig, FlowState, Termination, Trajectory};
use qnflow_core::linalg::{khatri_rao, Matrix};
use qnflow_core::objective::{gradient, gradient_explicit, stationarity_residual, CCFactorization};
use qnflow_core::rng::{stream, TARGET_STREAM};
use qnflow_core::states::{random_density, random_simplex, DensityMatrix};
use qnflow_core::stiefel::random_stiefel;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// A finished run kept for the cross-cutting criteria.
struct Record {
    label: String,
    rho: DensityMatrix,
    factorization: CCFactorization,
    trajectory: Trajectory,
    cfg: FlowConfig,
}

/// Criterion 1 does not fix the horizon, only a per-run budget of 60 s;
/// the default `t_max` of 5000 cuts off seeds whose smallest weight is
/// slow to separate. Every other setting is the default.
const RECOVERY_T_MAX: f64 = 50_000.0;

fn criterion_1(records: &mut Vec<Record>) -> Verdict {
    let cfg = FlowConfig {
        t_max: RECOVERY_T_MAX,
        ..FlowConfig::default()
    };
    let mut ok = 0;
    let mut ok_by_default_horizon = 0;
    let mut slowest: f64 = 0.0;
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let started = Instant::now();
        let d = decompose_run(16, 8, 3, 8, &cfg, seed).expect("decompose run");
        let secs = started.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let traj = &d.run.trajectory;
        let rank = d.run.factorization.rank();
        let discards = traj.discard_count();
        let t_end = traj.last().map_or(0.0, |s| s.t);
        let pass = rank == 3 && d.run.objective <= 1e-8 && discards == 5 && secs <= 60.0;
        ok += pass as usize;
        ok_by_default_horizon += (pass && t_end <= FlowConfig::default().t_max) as usize;
        lines.push(format!(
            "      seed {seed:2}: rank {rank}, discards {discards}, objective {:.2e}, t_end {t_end:.0}, {:?}, {secs:.1}s",
            d.run.objective,
            traj.termination().unwrap_or(Termination::Horizon)
        ));
        records.push(Record {
            label: format!("decompose seed {seed}"),
            rho: d.rho,
            factorization: d.run.factorization,
            trajectory: d.run.trajectory,
            cfg,
        });
    }
    for l in &lines {
        println!("{l}");
    }
    Verdict {
        id: 1,
        name: "decomposition recovery",
        pass: ok >= 9,
        detail: format!(
            "{ok}/10 runs recover rank 3 with 5 discards and objective <= 1e-8 (need 9); \
             {ok_by_default_horizon}/10 within t <= 5000; slowest run {slowest:.1}s"
        ),
    }
}

fn criterion_3(records: &[Record]) -> Verdict {
    let recovery: Vec<&Record> = records.iter().filter(|r| r.label.starts_with("decompose")).collect();
    let ortho = recovery.iter().fold(0.0f64, |a, r| a.max(r.trajectory.max_ortho_residual()));
    let repairs: usize = recovery.iter().map(|r| r.trajectory.repair_count()).sum();
    Verdict {
        id: 3,
        name: "manifold preservation",
        pass: ortho <= 1e-8 && repairs == 0 && recovery.len() == 10,
        detail: format!("max orthonormality residual {ortho:.2e} (<= 1e-8), {repairs} repairs (need 0)"),
    }
}

fn criterion_4(records: &mut Vec<Record>) -> Verdict {
    let cfg = FlowConfig::default();
    let mut report = |target: TargetRank| {
        let r = consistency_run(8, 5, target, 5, 10, &cfg, 1).expect("consistency run");
        let rel = r.relative_std();
        let ascents = r.trials.iter().filter(|t| t.first_ascent.is_some()).count();
        for (i, run) in r.runs.into_iter().enumerate() {
            records.push(Record {
                label: format!("consistency {target} trial {i}"),
                rho: r.rho.clone(),
                factorization: run.factorization,
                trajectory: run.trajectory,
                cfg,
            });
        }
        (r.mean, rel, ascents)
    };
    let (mean3, rel3, asc3) = report(TargetRank::Rank(3));
    let (mean_full, rel_full, asc_full) = report(TargetRank::Full);
    println!(
        "      full-rank target (not gated): mean {mean_full:.6e}, relative std {rel_full:.2e}, {asc_full} trials with ascent"
    );
    Verdict {
        id: 4,
        name: "consistency",
        pass: rel3 <= 1e-3 && asc3 == 0 && asc_full == 0,
        detail: format!(
            "rank-3 target: mean {mean3:.6e}, relative std {rel3:.2e} (<= 1e-3); \
             trials with ascent beyond slack: {asc3} + {asc_full} (need 0)"
        ),
    }
}

fn criterion_2(records: &[Record]) -> Verdict {
    let worst = records.iter().fold(0.0f64, |a, r| a.max(r.trajectory.max_theta_sum_deviation()));
    let samples: usize = records.iter().map(|r| r.trajectory.samples.len()).sum();
    Verdict {
        id: 2,
        name: "sum-to-one preservation",
        pass: worst <= 1e-10,
        detail: format!(
            "max |sum(theta) - 1| = {worst:.2e} over {samples} samples of {} runs (<= 1e-10)",
            records.len()
        ),
    }
}

fn criterion_5(dir: &Path) -> Verdict {
    let started = Instant::now();
    let seed = 1;
    let rho = random_density(1, 60, 60, &mut stream(seed, TARGET_STREAM)).expect("target");
    let rows = ranksweep_run(&rho, 5, &FlowConfig::default(), seed).expect("sweep");
    let path = dir.join("sweep.csv");
    qnflow::io::write_file(dir, "sweep.csv", |w| qnflow::io::write_sweep(w, &rows)).expect("write sweep");
    let secs = started.elapsed().as_secs_f64();

    // check against the emitted table, not the in-memory rows
    let table = read_sweep(&path).expect("read sweep");
    let mut violations = 0;
    let mut pairs = 0;
    let mut keyed: Vec<_> = table.iter().collect();
    keyed.sort_by_key(|r| (r.n, r.m, r.r));
    for w in keyed.windows(2) {
        if (w[0].n, w[0].m) == (w[1].n, w[1].m) {
            pairs += 1;
            if w[1].best_objective > w[0].best_objective {
                violations += 1;
                println!("      increase at ({}, {}): r = {} -> {}", w[1].n, w[1].m, w[0].r, w[1].r);
            }
        }
    }
    let has_15_4_4 = table.iter().any(|r| (r.n, r.m, r.r) == (15, 4, 4));
    let all_restarts = table.iter().all(|r| r.restarts == 5);
    assert_eq!(violations, monotonicity_violations(&rows).len());
    Verdict {
        id: 5,
        name: "rank-sweep monotonicity",
        pass: violations == 0 && has_15_4_4 && all_restarts && secs <= 900.0,
        detail: format!(
            "{} rows, {violations} increases over {pairs} consecutive-r pairs, (15,4,4) present: {has_15_4_4}, {secs:.0}s (<= 900s)",
            table.len()
        ),
    }
}

/// `½‖ρ − Σᵢ θᵢ zᵢzᵢᵀ‖²` summed entry by entry on raw factors.
fn raw_objective(rho: &Matrix, u: &Matrix, v: &Matrix, theta: &[f64]) -> f64 {
    let k = khatri_rao(u, v).unwrap();
    let d = rho.rows();
    let mut total = 0.0;
    for p in 0..d {
        for q in 0..d {
            let s: f64 = (0..theta.len()).map(|i| theta[i] * k[(p, i)] * k[(q, i)]).sum();
            total += (rho[(p, q)] - s).powi(2);
        }
    }
    0.5 * total
}

fn small_instance(rng: &mut qnflow_core::rng::StreamRng) -> (DensityMatrix, CCFactorization) {
    let n = rng.random_range(1..=5);
    let m = rng.random_range(1..=4);
    let rank = rng.random_range(1..=3usize.min(n).min(m));
    let rho = random_density(n, m, n * m, rng).unwrap();
    let u = random_stiefel(n, rank, rng).unwrap();
    let v = random_stiefel(m, rank, rng).unwrap();
    (rho, CCFactorization::new(u, v, random_simplex(rank, rng)).unwrap())
}

fn criterion_6() -> Verdict {
    const H: f64 = 1e-6;
    let mut rng = stream(6, 0);
    let mut worst_fd: f64 = 0.0;
    let mut fd_fail = 0;
    let mut worst_explicit: f64 = 0.0;
    for _ in 0..20 {
        let (rho, f) = small_instance(&mut rng);
        let g = gradient(&rho, &f).unwrap();
        let (u, v, theta) = (f.u().as_matrix().clone(), f.v().as_matrix().clone(), f.theta().to_vec());
        let rho_m = rho.as_matrix();
        let mut check = |analytic: f64, plus: f64, minus: f64| {
            let fd = (plus - minus) / (2.0 * H);
            let err = (analytic - fd).abs();
            let rel = err / analytic.abs().max(fd.abs()).max(1e-300);
            if err > 1e-8 {
                worst_fd = worst_fd.max(rel);
                fd_fail += (rel > 1e-5) as usize;
            }
        };
        for j in 0..theta.len() {
            for i in 0..u.rows() {
                let (mut a, mut b) = (u.clone(), u.clone());
                a[(i, j)] += H;
                b[(i, j)] -= H;
                check(g.du[(i, j)], raw_objective(rho_m, &a, &v, &theta), raw_objective(rho_m, &b, &v, &theta));
            }
            for i in 0..v.rows() {
                let (mut a, mut b) = (v.clone(), v.clone());
                a[(i, j)] += H;
                b[(i, j)] -= H;
                check(g.dv[(i, j)], raw_objective(rho_m, &u, &a, &theta), raw_objective(rho_m, &u, &b, &theta));
            }
            let (mut a, mut b) = (theta.clone(), theta.clone());
            a[j] += H;
            b[j] -= H;
            check(g.dtheta[j], raw_objective(rho_m, &u, &v, &a), raw_objective(rho_m, &u, &v, &b));
        }
        let e = gradient_explicit(&rho, &f).unwrap();
        let rel = |a: &Matrix, b: &Matrix| a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300);
        worst_explicit = worst_explicit.max(rel(&g.du, &e.du)).max(rel(&g.dv, &e.dv));
        let t_err: f64 = g.dtheta.iter().zip(&e.dtheta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let t_norm: f64 = e.dtheta.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst_explicit = worst_explicit.max(t_err / t_norm.max(1e-300));
    }
    Verdict {
        id: 6,
        name: "gradient correctness",
        pass: fd_fail == 0 && worst_explicit <= 1e-12,
        detail: format!(
            "finite differences: {fd_fail} partials beyond 1e-5 (worst relative {worst_fd:.2e}, abs floor 1e-8); \
             implicit vs explicit: {worst_explicit:.2e} (<= 1e-12)"
        ),
    }
}

fn criterion_7(records: &[Record]) -> Verdict {
    let mut stationary = 0;
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for r in records {
        if r.trajectory.termination() == Some(Termination::Stationarity) {
            stationary += 1;
            let res = stationarity_residual(&r.rho, &r.factorization).unwrap();
            worst = worst.max(res / r.cfg.grad_tol);
            bad += (res > 10.0 * r.cfg.grad_tol) as usize;
        }
    }
    let mut rng = stream(7, 0);
    let mut max_inner = f64::NEG_INFINITY;
    for _ in 0..50 {
        let (n, m) = (rng.random_range(2..=6), rng.random_range(2..=5));
        let rank = rng.random_range(1..=n.min(m));
        let rho = random_density(n, m, rng.random_range(1..=n * m), &mut rng).unwrap();
        let u = random_stiefel(n, rank, &mut rng).unwrap();
        let v = random_stiefel(m, rank, &mut rng).unwrap();
        let f = CCFactorization::new(u, v, random_simplex(rank, &mut rng)).unwrap();
        let vel = rhs(&FlowState::pack(&f), &rho).unwrap();
        let g = gradient(&rho, &f).unwrap();
        let inner: f64 = g
            .du
            .as_slice()
            .iter()
            .chain(g.dv.as_slice())
            .chain(&g.dtheta)
            .zip(&vel)
            .map(|(a, b)| a * b)
            .sum();
        max_inner = max_inner.max(inner);
    }
    Verdict {
        id: 7,
        name: "stationarity and descent",
        pass: bad == 0 && stationary > 0 && max_inner <= 0.0,
        detail: format!(
            "{stationary} stationarity exits, worst residual {worst:.2}·grad_tol (<= 10); \
             max <gradient, rhs> over 50 states {max_inner:.2e} (<= 0)"
        ),
    }
}

fn run_cli(args: &[&str]) -> i32 {
    qnflow::run(std::iter::once("qnflow").chain(args.iter().copied()))
}

fn criterion_8(dir: &Path) -> Verdict {
    let cases: [(&str, Vec<&str>, &[&str]); 3] = [
        (
            "decompose",
            vec!["decompose", "--n", "16", "--m", "8", "--rank", "3", "--init-rank", "8", "--seed", "3"],
            &["trajectory.csv", "events.csv", "u.csv", "v.csv", "theta.csv"],
        ),
        (
            "consistency",
            vec!["consistency", "--target-rank", "3", "--trials", "4", "--seed", "5", "--t-max", "500"],
            &["curves.csv", "trials.csv", "target.csv"],
        ),
        ("ranksweep", vec!["ranksweep", "--dim", "12", "--restarts", "2", "--seed", "8"], &["sweep.csv", "target.csv"]),
    ];
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (name, args, files) in cases {
        let mut outputs = Vec::new();
        for (rep, threads) in [(0, "1"), (1, "4")] {
            let out = dir.join(format!("{name}-{rep}"));
            let mut full: Vec<&str> = vec!["--threads", threads];
            full.extend(&args);
            let out_str = out.to_str().unwrap().to_string();
            full.extend(["--out", &out_str]);
            let code = run_cli(&full);
            assert!(code == 0 || code == 2, "{name} exited {code}");
            outputs.push(out);
        }
        for f in files {
            compared += 1;
            let a = fs::read(outputs[0].join(f)).unwrap();
            let b = fs::read(outputs[1].join(f)).unwrap();
            if a != b {
                mismatched.push(format!("{name}/{f}"));
            }
        }
    }
    Verdict {
        id: 8,
        name: "determinism",
        pass: mismatched.is_empty(),
        detail: format!(
            "{compared} CSV files compared across repeated runs (1 vs 4 threads); mismatches: {:?}",
            mismatched
        ),
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters are not supported; run everything
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let dir = tempfile::tempdir().expect("temp dir");
    let started = Instant::now();
    let mut records = Vec::new();
    let mut verdicts = Vec::new();

    let timed = |v: Verdict, t: Instant| {
        println!(
            "criterion {} [{}] {}: {} ({:.1}s)",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail,
            t.elapsed().as_secs_f64()
        );
        v
    };

    let t = Instant::now();
    verdicts.push(timed(criterion_6(), t));
    let t = Instant::now();
    verdicts.push(timed(criterion_1(&mut records), t));
    let t = Instant::now();
    verdicts.push(timed(criterion_3(&records), t));
    let t = Instant::now();
    verdicts.push(timed(criterion_4(&mut records), t));
    let t = Instant::now();
    verdicts.push(timed(criterion_2(&records), t));
    let t = Instant::now();
    verdicts.push(timed(criterion_7(&records), t));
    let t = Instant::now();
    verdicts.push(timed(criterion_5(dir.path()), t));
    let t = Instant::now();
    verdicts.push(timed(criterion_8(dir.path()), t));

    verdicts.sort_by_key(|v| v.id);
    println!();
    println!("summary ({:.0}s):", started.elapsed().as_secs_f64());
    for v in &verdicts {
        println!("  criterion {} {}: {}", v.id, v.name, if v.pass { "PASS" } else { "FAIL" });
    }
    if verdicts.iter().all(|v| v.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
