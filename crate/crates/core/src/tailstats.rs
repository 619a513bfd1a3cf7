//! Empirical runtime distribution: ECDF, survival, tail slope, Hill
//! estimator and conditional remaining time.
//!
//! `q(t)` is `P(T <= t)` throughout. Censored runs count towards the
//! total when estimating probabilities (they ran past every `t <= cap`)
//! but are left out of every moment estimate.

use std::fmt::Write as _;

use thiserror::Error;

use crate::runner::RunSample;

#[derive(Debug, Error, PartialEq)]
pub enum TailError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate tail: the top {r} order statistics are all equal")]
    DegenerateTail { r: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Step-function CDF over integer epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    support: Vec<u32>,
    cum_prob: Vec<f64>,
    censored_mass: f64,
    cap: u32,
}

impl Ecdf {
    /// Builds an ECDF from jump points and the CDF value at each.
    ///
    /// The censored mass is `1 - cum_prob.last()`.
    pub fn from_points(support: Vec<u32>, cum_prob: Vec<f64>, cap: u32) -> Result<Self, TailError> {
        let invalid = |m: &str| Err(TailError::InvalidArgument(m.to_string()));
        if support.is_empty() {
            return Err(TailError::InsufficientData(
                "ECDF has no support points".into(),
            ));
        }
        if support.len() != cum_prob.len() {
            return invalid("support and probabilities differ in length");
        }
        if support[0] == 0 || support.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("support must be strictly increasing positive epochs");
        }
        if *support.last().unwrap() > cap {
            return invalid("support exceeds the cap");
        }
        if cum_prob.iter().any(|&q| !(q > 0.0 && q <= 1.0))
            || cum_prob.windows(2).any(|w| w[0] > w[1])
        {
            return invalid("probabilities must be nondecreasing in (0, 1]");
        }
        let censored_mass = (1.0 - cum_prob.last().unwrap()).max(0.0);
        Ok(Self {
            support,
            cum_prob,
            censored_mass,
            cap,
        })
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn cum_prob(&self) -> &[f64] {
        &self.cum_prob
    }

    /// Probability mass that never completed within the cap.
    pub fn censored_mass(&self) -> f64 {
        self.censored_mass
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    /// `q(t) = P(T <= t)`.
    pub fn cdf(&self, t: u32) -> f64 {
        match self.support.partition_point(|&s| s <= t) {
            0 => 0.0,
            j => self.cum_prob[j - 1],
        }
    }

    /// `P(T > t) = 1 - q(t)`; censored mass survives past the cap.
    pub fn survival(&self, t: u32) -> f64 {
        1.0 - self.cdf(t)
    }

    /// `sum_{t'=1}^{t-1} q(t')`, walking the constant pieces of `q`.
    pub fn cdf_sum_below(&self, t: u32) -> f64 {
        let mut total = 0.0;
        for (j, (&s, &q)) in self.support.iter().zip(&self.cum_prob).enumerate() {
            if s >= t {
                break;
            }
            let next = self.support.get(j + 1).map_or(t, |&n| n.min(t));
            total += q * f64::from(next - s);
        }
        total
    }
}

/// ECDF of a run sample over all records, censored ones included in the
/// denominator.
pub fn empirical_cdf(s: &RunSample) -> Result<Ecdf, TailError> {
    let mut epochs = s.converged_epochs();
    if epochs.is_empty() {
        return Err(TailError::InsufficientData("no converged runs".into()));
    }
    epochs.sort_unstable();
    let n_total = s.len() as f64;
    let mut support = Vec::new();
    let mut cum_prob = Vec::new();
    for (i, &e) in epochs.iter().enumerate() {
        if epochs.get(i + 1) != Some(&e) {
            support.push(e);
            cum_prob.push((i + 1) as f64 / n_total);
        }
    }
    let mut e = Ecdf::from_points(support, cum_prob, s.cap)?;
    e.censored_mass = s.n_censored() as f64 / n_total;
    Ok(e)
}

pub fn survival(e: &Ecdf, t: u32) -> f64 {
    e.survival(t)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Result<f64, TailError> {
    if points.len() < 2 {
        return Err(TailError::InsufficientData(
            "a line fit needs at least two points".into(),
        ));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(TailError::InsufficientData(
            "all points share one abscissa".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// `(ln t, ln P(T > t))` at distinct support points with `t >= from` and
/// nonzero survival.
pub fn loglog_points(e: &Ecdf, from: u32) -> Vec<(f64, f64)> {
    e.support
        .iter()
        .filter(|&&t| t >= from)
        .filter_map(|&t| {
            let s = e.survival(t);
            (s > 0.0).then(|| (f64::from(t).ln(), s.ln()))
        })
        .collect()
}

/// Slope of the log-log survival plot over the largest `tail_fraction`
/// of converged completion times. Heavy tails give roughly `-alpha`.
///
/// Each distinct completion time contributes one point. The largest one
/// drops out when nothing is censored, as its survival is zero.
pub fn loglog_tail_slope(s: &RunSample, tail_fraction: f64) -> Result<f64, TailError> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(TailError::InvalidArgument(
            "tail fraction must lie in (0, 1)".into(),
        ));
    }
    let mut epochs = s.converged_epochs();
    epochs.sort_unstable();
    let k = (tail_fraction * epochs.len() as f64).ceil() as usize;
    if k < 10 {
        return Err(TailError::InsufficientData(format!(
            "tail holds {k} converged runs, need at least 10"
        )));
    }
    let threshold = epochs[epochs.len() - k];
    let e = empirical_cdf(s)?;
    least_squares_slope(&loglog_points(&e, threshold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HillEstimate {
    /// Tail index `1 / H`.
    pub alpha: f64,
    /// Mean log-spacing `H` of the top `r` order statistics over `T_(m-r)`.
    pub mean_log_spacing: f64,
    pub r: usize,
    pub m: usize,
}

/// Hill estimator over positive observations using the top `r` order
/// statistics: `H = r^-1 sum_{j=1..r} ln T_(m-j+1) - ln T_(m-r)` and
/// `alpha = 1 / H`.
pub fn hill_tail_index(values: &[f64], r: usize) -> Result<HillEstimate, TailError> {
    let m = values.len();
    if r < 2 || r >= m {
        return Err(TailError::InvalidArgument(format!(
            "Hill cutoff needs 2 <= r < m, got r={r}, m={m}"
        )));
    }
    if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(TailError::InvalidArgument(
            "observations must be positive and finite".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let base = sorted[m - r - 1].ln();
    let h = sorted[m - r..].iter().map(|v| v.ln()).sum::<f64>() / r as f64 - base;
    if h <= 0.0 {
        return Err(TailError::DegenerateTail { r });
    }
    Ok(HillEstimate {
        alpha: 1.0 / h,
        mean_log_spacing: h,
        r,
        m,
    })
}

/// [`hill_tail_index`] over the converged completion times of a sample.
pub fn hill_estimator(s: &RunSample, r: usize) -> Result<HillEstimate, TailError> {
    let values: Vec<f64> = s.converged_epochs().into_iter().map(f64::from).collect();
    hill_tail_index(&values, r)
}

/// Cutoff `r = floor(fraction * m)` clamped into `[2, m - 1]`.
pub fn hill_cutoff(m: usize, fraction: f64) -> usize {
    ((fraction * m as f64).floor() as usize).clamp(2, m.saturating_sub(1).max(2))
}

/// Mean with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMean {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; NaN for a single record.
    pub std_error: f64,
    pub count: usize,
}

/// `E[T - tau | T > tau]` over converged records.
pub fn expected_remaining(s: &RunSample, tau: u32) -> Result<ConditionalMean, TailError> {
    let tau = f64::from(tau);
    let rest: Vec<f64> = s
        .converged_epochs()
        .into_iter()
        .map(f64::from)
        .filter(|&e| e > tau)
        .map(|e| e - tau)
        .collect();
    if rest.is_empty() {
        return Err(TailError::InsufficientData(format!(
            "no converged run lasted beyond {tau}"
        )));
    }
    let n = rest.len() as f64;
    let mean = rest.iter().sum::<f64>() / n;
    let var = rest.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ConditionalMean {
        mean,
        std_error: (var / n).sqrt(),
        count: rest.len(),
    })
}

/// One point of the `E[T - tau | T > tau]` curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainingPoint {
    pub tau: u32,
    pub remaining: ConditionalMean,
}

/// The conditional remaining-time curve at every distinct converged
/// completion time that has at least one converged run beyond it.
pub fn remaining_curve(s: &RunSample) -> Vec<RemainingPoint> {
    let mut epochs = s.converged_epochs();
    epochs.sort_unstable();
    // Welford accumulation over the suffix of runs beyond each tau.
    let mut out = Vec::new();
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    let mut i = epochs.len();
    while i > 0 {
        let tau = epochs[i - 1];
        if n > 0 {
            let nf = n as f64;
            out.push(RemainingPoint {
                tau,
                remaining: ConditionalMean {
                    mean: mean - f64::from(tau),
                    std_error: (m2 / (nf - 1.0) / nf).sqrt(),
                    count: n,
                },
            });
        }
        while i > 0 && epochs[i - 1] == tau {
            let x = f64::from(epochs[i - 1]);
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
            i -= 1;
        }
    }
    out.reverse();
    out
}

/// Every observed `tau` with `E[T] < E[T - tau | T > tau]`, where `E[T]`
/// is the converged-sample mean.
pub fn restart_profitable(s: &RunSample) -> Vec<u32> {
    let epochs = s.converged_epochs();
    if epochs.is_empty() {
        return Vec::new();
    }
    let mean = epochs.iter().map(|&e| f64::from(e)).sum::<f64>() / epochs.len() as f64;
    remaining_curve(s)
        .into_iter()
        .filter(|p| mean < p.remaining.mean)
        .map(|p| p.tau)
        .collect()
}

/// Tab-separated `t`, `survival` at every support point, with header.
pub fn survival_tsv(e: &Ecdf) -> String {
    let mut out = String::from("t\tsurvival\n");
    for &t in &e.support {
        writeln!(out, "{t}\t{}", e.survival(t)).unwrap();
    }
    out
}

/// Tab-separated `log_t`, `log_survival` at support points with nonzero survival.
pub fn loglog_tsv(e: &Ecdf) -> String {
    let mut out = String::from("log_t\tlog_survival\n");
    for (x, y) in loglog_points(e, 0) {
        writeln!(out, "{x}\t{y}").unwrap();
    }
    out
}

/// Tab-separated remaining-time curve with the `E[T]` baseline repeated per row.
pub fn remaining_tsv(curve: &[RemainingPoint], baseline: f64) -> String {
    let mut out = String::from("tau\tremaining\tstderr\tcount\tbaseline\n");
    for p in curve {
        let r = &p.remaining;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{baseline}",
            p.tau, r.mean, r.std_error, r.count
        )
        .unwrap();
    }
    out
}
