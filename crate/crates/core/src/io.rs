//! File formats: run manifests, JSON reports, plot-ready CSV tables and
//! trajectory checkpoints.
//!
//! Floating-point CSV fields are written as `{:.16e}` (17 significant digits),
//! which round-trips every `f64` exactly. JSON uses the shortest exact form.
//!
//! CSV schemas:
//!
//! | file | columns |
//! |------|---------|
//! | estimates | `estimator,alpha,n,replicate,value` |
//! | basis dump | `index,n1,n2,parity,lambda` |
//! | linear battery | `mode,empirical_mean,analytic_mean,z_score` |
//! | trajectory | `time,u_1,...,u_M[,b_1,...,b_M]` after `#` header lines |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::basis::StokesBasis;
use crate::config::ParsedConfig;
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::experiments::{LinearBatteryReport, McReport};
use crate::nse::SolverConfig;
use crate::trajectory::Trajectory;

pub const ESTIMATES_HEADER: &str = "estimator,alpha,n,replicate,value";
pub const BASIS_HEADER: &str = "index,n1,n2,parity,lambda";
pub const LINEAR_HEADER: &str = "mode,empirical_mean,analytic_mean,z_score";
const TRAJECTORY_MAGIC: &str = "# snse-trajectory v1";

pub fn code_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Provenance of one CLI run. Timestamps live here and nowhere else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub master_seed: u64,
    pub threads: Option<usize>,
    pub config: Option<ParsedConfig>,
    pub started_unix_s: f64,
    pub finished_unix_s: Option<f64>,
    pub outputs: Vec<PathBuf>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, master_seed: u64, config: Option<ParsedConfig>) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            code_version: code_version().to_string(),
            master_seed,
            threads: None,
            config,
            started_unix_s: now(),
            finished_unix_s: None,
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.finished_unix_s = Some(now());
        write_json(self, path)
    }
}

fn create(path: impl AsRef<Path>) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad {what} value `{s}`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Writes a Monte Carlo report as JSON or as the flat estimates CSV.
pub fn write_report(report: &McReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => write_json(report, path),
        ReportFormat::Csv => write_estimates_csv(report, path),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub kind: EstimatorKind,
    pub alpha: f64,
    pub n: usize,
    pub replicate: u64,
    pub value: f64,
}

pub fn write_estimates_csv(report: &McReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# config_hash={}", report.config_hash)?;
    writeln!(w, "{ESTIMATES_HEADER}")?;
    for e in &report.entries {
        for (id, v) in e.replicate_ids.iter().zip(&e.values) {
            writeln!(w, "{},{},{},{},{}", e.kind.as_str(), fmt(e.alpha), e.n, id, fmt(*v))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Data lines of a CSV file, skipping `#` comments and checking the header.
fn csv_rows(path: impl AsRef<Path>, header: &str) -> Result<Vec<Vec<String>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().filter(|l| !matches!(l, Ok(s) if s.starts_with('#')));
    match lines.next() {
        Some(Ok(h)) if h == header => {}
        Some(Ok(h)) => return Err(Error::Format(format!("expected header `{header}`, found `{h}`"))),
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::Format("empty file".into())),
    }
    lines
        .map(|l| Ok(l?.split(',').map(str::to_string).collect()))
        .collect()
}

pub fn read_estimates_csv(path: impl AsRef<Path>) -> Result<Vec<EstimateRow>> {
    csv_rows(path, ESTIMATES_HEADER)?
        .into_iter()
        .map(|f| {
            if f.len() != 5 {
                return Err(Error::Format(format!("expected 5 fields, found {}", f.len())));
            }
            Ok(EstimateRow {
                kind: f[0].parse().map_err(|_| Error::Format(format!("unknown estimator `{}`", f[0])))?,
                alpha: parse_f64(&f[1], "alpha")?,
                n: f[2].parse().map_err(|_| Error::Format(format!("bad N `{}`", f[2])))?,
                replicate: f[3].parse().map_err(|_| Error::Format(format!("bad replicate `{}`", f[3])))?,
                value: parse_f64(&f[4], "estimate")?,
            })
        })
        .collect()
}

pub fn write_basis_csv(basis: &StokesBasis, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# basis_hash={}", basis.hash())?;
    writeln!(w, "{BASIS_HEADER}")?;
    for (i, m) in basis.modes().iter().enumerate() {
        writeln!(w, "{},{},{},{},{}", i + 1, m.n1, m.n2, m.parity.as_str(), fmt(m.lambda))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_linear_csv(report: &LinearBatteryReport, config_hash: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "{LINEAR_HEADER}")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.mode,
            fmt(r.empirical_mean),
            fmt(r.analytic_mean),
            fmt(r.z_score)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes states (and the nonlinear record when present) with a header that
/// carries the configuration, so the file can be re-read for estimation.
pub fn write_trajectory(traj: &Trajectory, config_hash: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path)?;
    let m = traj.recorded_modes;
    writeln!(w, "{TRAJECTORY_MAGIC}")?;
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "# basis_hash={}", traj.config.basis().hash())?;
    writeln!(w, "# replicate={}", traj.replicate)?;
    writeln!(w, "# solver={}", serde_json::to_string(&traj.config)?)?;
    let mut header = String::from("time");
    for k in 1..=m {
        header.push_str(&format!(",u_{k}"));
    }
    if traj.nonlinear.is_some() {
        for k in 1..=m {
            header.push_str(&format!(",b_{k}"));
        }
    }
    writeln!(w, "{header}")?;
    for i in 0..=traj.steps() {
        let mut line = fmt(traj.time(i));
        for x in traj.state(i) {
            line.push(',');
            line.push_str(&fmt(*x));
        }
        if traj.nonlinear.is_some() {
            match (i < traj.steps()).then(|| traj.nonlinear_row(i)).flatten() {
                Some(row) => row.iter().for_each(|x| {
                    line.push(',');
                    line.push_str(&fmt(*x));
                }),
                None => line.push_str(&",".repeat(m)),
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub config_hash: String,
    pub basis_hash: String,
    pub trajectory: Trajectory,
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<TrajectoryFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?
            .map_err(Error::from)
    };
    if next()? != TRAJECTORY_MAGIC {
        return Err(Error::Format("not a trajectory file".into()));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = next()?;
        line.strip_prefix(&format!("# {key}="))
            .map(str::to_string)
            .ok_or_else(|| Error::Format(format!("missing `{key}` header line")))
    };
    let config_hash = field("config_hash")?;
    let basis_hash = field("basis_hash")?;
    let replicate: u64 = field("replicate")?
        .parse()
        .map_err(|_| Error::Format("bad replicate".into()))?;
    let config: SolverConfig = serde_json::from_str(&field("solver")?)?;
    let header = next()?;
    let columns = header.split(',').count();
    let m = header.split(',').filter(|c| c.starts_with("u_")).count();
    let has_b = columns == 1 + 2 * m;
    if m == 0 || !(columns == 1 + m || has_b) {
        return Err(Error::Format(format!("unexpected header `{header}`")));
    }

    let steps = config.steps();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * m);
    let mut nonlinear = has_b.then(|| Vec::with_capacity(steps * m));
    for i in 0..=steps {
        let line = next()?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::Format(format!("row {i} has {} fields, expected {columns}", fields.len())));
        }
        times.push(parse_f64(fields[0], "time")?);
        for f in &fields[1..=m] {
            states.push(parse_f64(f, "state")?);
        }
        if let Some(b) = nonlinear.as_mut() {
            if i < steps {
                for f in &fields[1 + m..] {
                    b.push(parse_f64(f, "nonlinear")?);
                }
            }
        }
    }
    let trajectory = Trajectory {
        dt: config.dt,
        config,
        replicate,
        recorded_modes: m,
        states,
        noise: None,
        nonlinear,
        residual: None,
    };
    for (i, t) in times.iter().enumerate() {
        if (t - trajectory.time(i)).abs() > 1e-9 * trajectory.horizon() {
            return Err(Error::Format(format!("time column disagrees with dt at row {i}")));
        }
    }
    Ok(TrajectoryFile {
        config_hash,
        basis_hash,
        trajectory,
    })
}
