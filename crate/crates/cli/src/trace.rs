//! CSV trace: one record per optimizer step.
//!
//! Floats are written with 17 significant digits so a trace read back gives
//! bitwise-equal values. Absent diagnostics are empty fields.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use wssr_core::vmc::TraceRecord;

pub const HEADER: &str = "step,raw_energy,clipped_energy,energy_variance,acceptance_rate,\
effective_rank,r_max,ssi_iterations,sigma_drift,projector_drift,wall_ms";

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn format_record(r: &TraceRecord) -> String {
    [
        r.step.to_string(),
        float(r.raw_energy),
        float(r.clipped_energy),
        float(r.energy_variance),
        float(r.acceptance_rate),
        opt(r.effective_rank, |v| v.to_string()),
        opt(r.r_max, |v| v.to_string()),
        opt(r.ssi_iterations, |v| v.to_string()),
        opt(r.sigma_drift, float),
        opt(r.projector_drift, float),
        float(r.wall_ms),
    ]
    .join(",")
}

fn invalid(line: usize, what: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("trace line {line}: {what}"))
}

pub fn parse_record(line: &str, lineno: usize) -> io::Result<TraceRecord> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 11 {
        return Err(invalid(lineno, "expected 11 fields"));
    }
    fn req<T: std::str::FromStr>(s: &str, n: usize) -> io::Result<T> {
        s.parse().map_err(|_| invalid(n, "malformed field"))
    }
    fn opt<T: std::str::FromStr>(s: &str, n: usize) -> io::Result<Option<T>> {
        if s.is_empty() {
            Ok(None)
        } else {
            req(s, n).map(Some)
        }
    }
    Ok(TraceRecord {
        step: req(f[0], lineno)?,
        raw_energy: req(f[1], lineno)?,
        clipped_energy: req(f[2], lineno)?,
        energy_variance: req(f[3], lineno)?,
        acceptance_rate: req(f[4], lineno)?,
        effective_rank: opt(f[5], lineno)?,
        r_max: opt(f[6], lineno)?,
        ssi_iterations: opt(f[7], lineno)?,
        sigma_drift: opt(f[8], lineno)?,
        projector_drift: opt(f[9], lineno)?,
        wall_ms: req(f[10], lineno)?,
    })
}

pub fn read_trace(path: &Path) -> io::Result<Vec<TraceRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != HEADER {
                return Err(invalid(1, "unexpected header"));
            }
            continue;
        }
        if !line.is_empty() {
            out.push(parse_record(&line, i + 1)?);
        }
    }
    Ok(out)
}

/// Appends records, flushing after each one so an aborted run keeps every
/// completed step.
pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    /// Starts a new trace file, replacing any existing one.
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    /// Reopens a trace for a run resumed after step `step`: records beyond it
    /// are dropped. A missing file starts a fresh trace.
    pub fn resume(path: &Path, step: u64) -> io::Result<Self> {
        if !path.exists() {
            return Self::create(path);
        }
        let kept: Vec<TraceRecord> = read_trace(path)?.into_iter().filter(|r| r.step <= step).collect();
        let mut w = Self::create(path)?;
        for r in &kept {
            w.write(r)?;
        }
        Ok(w)
    }

    pub fn write(&mut self, r: &TraceRecord) -> io::Result<()> {
        writeln!(self.out, "{}", format_record(r))?;
        self.out.flush()
    }
}
