//! Las Vegas process contract, seeded bulk collection and the run log.
//!
//! # Run-log format
//!
//! UTF-8, one JSON object per line. The first line is a header:
//!
//! ```text
//! {"cap":20000,"process":"mlp hidden=3 ..."}
//! ```
//!
//! followed by one record per run:
//!
//! ```text
//! {"seed":6255936897162689696,"epochs":412,"converged":true,"final_error":0.019998}
//! ```
//!
//! Records of runs that produced non-finite values carry an extra
//! `"diverged_at":<epoch>` field. Floats are written in the shortest form that
//! parses back to the same `f64`.
//!
//! # Seed derivation
//!
//! Run `i` of a batch with base seed `b` uses [`derive_seed`]`(b, i)` =
//! `mix(mix(b) ^ i)`, where `mix` is the SplitMix64 step
//!
//! ```text
//! z = z + 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! with wrapping 64-bit arithmetic. Mixing the base first keeps batches
//! with nearby base seeds from reusing each other's run seeds.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mlp::RunRecord;

/// A randomized process whose only observable is its completion time.
///
/// `attempt(seed, cutoff)` runs the process with randomness fixed by
/// `seed` for at most `cutoff` epochs. It must be deterministic per seed,
/// and a run that converges at epoch `e` under one cutoff must converge at
/// the same `e` under any cutoff `>= e`.
pub trait LasVegasProcess: Send + Sync {
    fn attempt(&self, seed: u64, cutoff: u32) -> RunRecord;

    /// Default censoring cap used when collecting unrestarted runs.
    fn cap(&self) -> u32;

    fn describe(&self) -> String;
}

impl<P: LasVegasProcess + ?Sized> LasVegasProcess for &P {
    fn attempt(&self, seed: u64, cutoff: u32) -> RunRecord {
        (**self).attempt(seed, cutoff)
    }

    fn cap(&self) -> u32 {
        (**self).cap()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<P: LasVegasProcess + ?Sized> LasVegasProcess for Box<P> {
    fn attempt(&self, seed: u64, cutoff: u32) -> RunRecord {
        (**self).attempt(seed, cutoff)
    }

    fn cap(&self) -> u32 {
        (**self).cap()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

fn splitmix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index` in a batch with base seed `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix(splitmix(base) ^ index)
}

/// Unrestarted runs of one process, all censored at the same cap.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSample {
    pub records: Vec<RunRecord>,
    pub cap: u32,
    pub metadata: String,
}

impl RunSample {
    pub fn new(records: Vec<RunRecord>, cap: u32, metadata: impl Into<String>) -> Self {
        Self {
            records,
            cap,
            metadata: metadata.into(),
        }
    }

    /// Sample of converged runs with the given completion times. Handy for
    /// hand-built examples; the cap is the largest time.
    pub fn from_epochs(epochs: &[u32]) -> Self {
        let cap = epochs.iter().copied().max().unwrap_or(1);
        let records = epochs
            .iter()
            .enumerate()
            .map(|(i, &e)| RunRecord::converged(i as u64, e, 0.0))
            .collect();
        Self::new(records, cap, "hand-built")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Completion times of converged records, in record order.
    pub fn converged_epochs(&self) -> Vec<u32> {
        self.records
            .iter()
            .filter(|r| r.converged)
            .map(|r| r.epochs)
            .collect()
    }

    pub fn n_converged(&self) -> usize {
        self.records.iter().filter(|r| r.converged).count()
    }

    pub fn n_censored(&self) -> usize {
        self.len() - self.n_converged()
    }
}

/// Runs `n_runs` seeded attempts at the process cap, in parallel.
///
/// Record `i` comes from seed `derive_seed(base_seed, i)`; the result is
/// ordered by `i` and does not depend on the thread count.
pub fn collect_runs<P: LasVegasProcess + ?Sized>(
    p: &P,
    n_runs: usize,
    base_seed: u64,
) -> RunSample {
    let cap = p.cap();
    let records = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| p.attempt(derive_seed(base_seed, i), cap))
        .collect();
    RunSample::new(records, cap, p.describe())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub stddev: f64,
    /// `stddev / mean`.
    pub ratio: f64,
    pub n_converged: usize,
    pub n_censored: usize,
}

#[derive(Debug, Error, PartialEq)]
#[error("need at least {needed} converged runs, found {found}")]
pub struct InsufficientData {
    pub needed: usize,
    pub found: usize,
}

/// Mean, deviation and their ratio over converged records.
pub fn summary_stats(s: &RunSample) -> Result<SummaryStats, InsufficientData> {
    let epochs = s.converged_epochs();
    let m = epochs.len();
    if m < 2 {
        return Err(InsufficientData {
            needed: 2,
            found: m,
        });
    }
    let mean = epochs.iter().map(|&e| f64::from(e)).sum::<f64>() / m as f64;
    let var = epochs
        .iter()
        .map(|&e| (f64::from(e) - mean).powi(2))
        .sum::<f64>()
        / (m - 1) as f64;
    let stddev = var.sqrt();
    Ok(SummaryStats {
        mean,
        stddev,
        ratio: stddev / mean,
        n_converged: m,
        n_censored: s.n_censored(),
    })
}

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("run log contains no records")]
    EmptySample,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    cap: u32,
    process: String,
}

/// Renders a sample in the run-log format.
pub fn write_runs<W: Write>(s: &RunSample, mut w: W) -> io::Result<()> {
    let header = Header {
        cap: s.cap,
        process: s.metadata.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for r in &s.records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn save_runs(s: &RunSample, path: impl AsRef<Path>) -> Result<(), RunLogError> {
    let path = path.as_ref();
    let io_err = |source| RunLogError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    write_runs(s, BufWriter::new(file)).map_err(io_err)
}

/// Parses run-log text, checking the record invariants against the cap.
pub fn parse_runs(text: &str) -> Result<RunSample, RunLogError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, htext)) = lines.next() else {
        return Err(RunLogError::EmptySample);
    };
    let header: Header = serde_json::from_str(htext).map_err(|e| RunLogError::Schema {
        line: hline,
        reason: format!("bad header: {e}"),
    })?;
    if header.cap == 0 {
        return Err(RunLogError::Schema {
            line: hline,
            reason: "cap must be positive".into(),
        });
    }
    let mut records = Vec::new();
    for (line, text) in lines {
        let r: RunRecord = serde_json::from_str(text).map_err(|e| RunLogError::Schema {
            line,
            reason: e.to_string(),
        })?;
        let violation = if r.epochs == 0 {
            Some("epochs must be positive")
        } else if r.epochs > header.cap {
            Some("epochs exceed the cap")
        } else if !r.converged && r.epochs != header.cap {
            Some("censored record must sit at the cap")
        } else if r.final_error.is_nan() || r.final_error < 0.0 {
            Some("final_error must be nonnegative")
        } else {
            None
        };
        if let Some(reason) = violation {
            return Err(RunLogError::Schema {
                line,
                reason: reason.into(),
            });
        }
        records.push(r);
    }
    if records.is_empty() {
        return Err(RunLogError::EmptySample);
    }
    Ok(RunSample::new(records, header.cap, header.process))
}

pub fn load_runs(path: impl AsRef<Path>) -> Result<RunSample, RunLogError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RunLogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_runs(&text)
}
