//! Text formats: dense matrix input, and the CSV outputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qnflow_core::flow::{EventKind, Trajectory};
use qnflow_core::states::SweepRow;
use qnflow_core::{CCFactorization, Matrix};

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "objective", "theta_sum", "grad_norm", "ortho_u", "ortho_v"];
pub const EVENTS_HEADER: [&str; 3] = ["t", "kind", "detail"];
pub const SWEEP_HEADER: [&str; 6] = ["n", "m", "r", "best_objective", "mean_objective", "restarts"];

/// Shortest round-trip representation in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// A matrix read from disk, with the factor dimensions if the file named them.
#[derive(Debug)]
pub struct MatrixFile {
    pub matrix: Matrix,
    pub dims: Option<(usize, usize)>,
}

#[derive(Deserialize)]
struct JsonMatrix {
    n: usize,
    m: usize,
    data: Vec<Vec<f64>>,
}

/// Reads `.json` files as `{"n", "m", "data": [[row], ...]}` and anything
/// else as headerless dense CSV.
pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let parsed: JsonMatrix =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let matrix = rows_to_matrix(&parsed.data).with_context(|| format!("in {}", path.display()))?;
        return Ok(MatrixFile {
            matrix,
            dims: Some((parsed.n, parsed.m)),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {}", path.display(), line + 1))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field
                    .parse::<f64>()
                    .with_context(|| format!("{}: row {}, column {}: `{field}`", path.display(), line + 1, col + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let matrix = rows_to_matrix(&rows).with_context(|| format!("in {}", path.display()))?;
    Ok(MatrixFile { matrix, dims: None })
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    if rows.is_empty() {
        bail!("empty matrix");
    }
    let cols = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        bail!("row {} has {} entries, expected {cols}", i + 1, r.len());
    }
    Ok(Matrix::from_rows(rows)?)
}

pub fn write_matrix_csv(path: &Path, a: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for i in 0..a.rows() {
        w.write_record((0..a.cols()).map(|j| fmt_f64(a[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

/// `u.csv`, `v.csv` and `theta.csv` in `dir`.
pub fn write_factorization(dir: &Path, f: &CCFactorization) -> Result<()> {
    write_matrix_csv(&dir.join("u.csv"), f.u().as_matrix())?;
    write_matrix_csv(&dir.join("v.csv"), f.v().as_matrix())?;
    let mut w = csv::Writer::from_path(dir.join("theta.csv"))?;
    w.write_record(["theta"])?;
    for &t in f.theta() {
        w.write_record([fmt_f64(t)])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per recorded sample; `theta_k` is the weight of original column
/// `k` and is left blank once that column has been discarded.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let slots = traj.initial_rank;
    let mut header: Vec<String> = TRAJECTORY_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend((1..=slots).map(|k| format!("theta_{k}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for s in &traj.samples {
        row.clear();
        row.extend([s.t, s.objective, s.theta_sum, s.grad_norm, s.ortho_u, s.ortho_v].map(fmt_f64));
        row.resize(header.len(), String::new());
        for (&slot, &theta) in s.slots.iter().zip(&s.theta) {
            row[TRAJECTORY_HEADER.len() + slot] = fmt_f64(theta);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `kind` is `discard`, `reorthonormalize` or `terminate`. Discard slots are
/// 1-based to match the `theta_k` columns of the trajectory.
pub fn write_events<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for e in &traj.events {
        let (kind, detail) = match &e.kind {
            EventKind::Discard { slot, theta, rescale } => (
                "discard",
                format!("slot={} theta={} rescale={}", slot + 1, fmt_f64(*theta), fmt_f64(*rescale)),
            ),
            EventKind::Reorthonormalize { ortho_u, ortho_v } => (
                "reorthonormalize",
                format!("ortho_u={} ortho_v={}", fmt_f64(*ortho_u), fmt_f64(*ortho_v)),
            ),
            EventKind::Terminate(reason) => ("terminate", reason.to_string()),
        };
        w.write_record([fmt_f64(e.t), kind.to_string(), detail])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.cell.n.to_string(),
            r.cell.m.to_string(),
            r.cell.r.to_string(),
            fmt_f64(r.best_objective),
            fmt_f64(r.mean_objective),
            r.restarts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed `sweep.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub best_objective: f64,
    pub mean_objective: f64,
    pub restarts: usize,
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(SWEEP_HEADER) {
        bail!("unexpected sweep header {headers:?}");
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let f = |i: usize| rec[i].parse::<f64>();
            let u = |i: usize| rec[i].parse::<usize>();
            Ok(SweepRecord {
                n: u(0)?,
                m: u(1)?,
                r: u(2)?,
                best_objective: f(3)?,
                mean_objective: f(4)?,
                restarts: u(5)?,
            })
        })
        .collect()
}

/// Writes `contents` to `dir/name` through a buffered file.
pub fn write_file(dir: &Path, name: &str, contents: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let path = dir.join(name);
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut buf = std::io::BufWriter::new(file);
    contents(&mut buf)?;
    buf.flush()?;
    Ok(())
}
