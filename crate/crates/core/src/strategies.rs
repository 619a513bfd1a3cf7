//! Restart schedules, closed-form evaluation of fixed cutoffs against a
//! known distribution, and Monte Carlo execution of schedules.
//!
//! For a fixed cutoff `t` and `q(t) = P(T <= t)`, the expected total time
//! until success is
//!
//! ```text
//! E[S_t] = (t - sum_{t'=1}^{t-1} q(t')) / q(t)
//! ```
//!
//! Every failed attempt costs `t` and a successful one costs its
//! completion time, so by the renewal argument the numerator is
//! `E[min(T, t)]` and `1 / q(t)` is the expected number of attempts.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::runner::{derive_seed, LasVegasProcess};
use crate::tailstats::Ecdf;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("all {n_trials} trials exhausted the {budget}-epoch budget (mean {mean_attempts:.1} attempts per trial)")]
    AllFailed {
        n_trials: usize,
        budget: u64,
        mean_attempts: f64,
    },
}

/// `q(t) = 0`: no attempt of length `t` ever succeeds.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("expected time is infinite: no completions within {cutoff} epochs")]
pub struct InfiniteExpectation {
    pub cutoff: u32,
}

/// Closed-form expected time of the fixed-cutoff strategy.
pub fn fixed_cutoff_expected_time(e: &Ecdf, t: u32) -> Result<f64, InfiniteExpectation> {
    let q = e.cdf(t);
    if q <= 0.0 {
        return Err(InfiniteExpectation { cutoff: t });
    }
    Ok((f64::from(t) - e.cdf_sum_below(t)) / q)
}

/// `E[S_t]` at every support point, in increasing `t`.
///
/// Runs in one pass over the support by carrying the partial sum of `q`.
pub fn expected_time_curve(e: &Ecdf) -> Vec<(u32, f64)> {
    let support = e.support();
    let probs = e.cum_prob();
    let mut out = Vec::with_capacity(support.len());
    // sum_{t' < support[j]} q(t')
    let mut below = 0.0;
    for j in 0..support.len() {
        if j > 0 {
            below += probs[j - 1] * f64::from(support[j] - support[j - 1]);
        }
        out.push((support[j], (f64::from(support[j]) - below) / probs[j]));
    }
    out
}

/// Minimizer of `E[S_t]` over the support; ties go to the smaller `t`.
///
/// Between support points `q` is constant and `E[S_t]` increases with
/// `t`, so the minimum sits on a support point.
pub fn optimal_cutoff(e: &Ecdf) -> (u32, f64) {
    expected_time_curve(e)
        .into_iter()
        .fold(
            (0, f64::INFINITY),
            |best, (t, v)| if v < best.1 { (t, v) } else { best },
        )
}

/// Rule giving the cutoff `t_i` of attempt `i >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RestartSchedule {
    /// `t_i = t`.
    Fixed(u32),
    /// `t_i = ceil(gamma^(i-1))`.
    Walsh(f64),
    /// `t_i = unit * luby(i)`.
    Luby(u32),
}

impl RestartSchedule {
    pub fn fixed(t: u32) -> Result<Self, StrategyError> {
        Self::Fixed(t).validated()
    }

    pub fn walsh(gamma: f64) -> Result<Self, StrategyError> {
        Self::Walsh(gamma).validated()
    }

    pub fn luby(unit: u32) -> Result<Self, StrategyError> {
        Self::Luby(unit).validated()
    }

    pub fn validated(self) -> Result<Self, StrategyError> {
        let ok = match self {
            Self::Fixed(t) => t >= 1,
            Self::Walsh(g) => g > 1.0 && g.is_finite(),
            Self::Luby(u) => u >= 1,
        };
        if ok {
            Ok(self)
        } else {
            Err(StrategyError::InvalidSchedule(match self {
                Self::Fixed(_) => "fixed cutoff must be at least 1".into(),
                Self::Walsh(_) => "walsh gamma must exceed 1".into(),
                Self::Luby(_) => "luby unit must be at least 1".into(),
            }))
        }
    }

    /// Cutoff of attempt `i` (1-based), saturating at `u32::MAX`.
    pub fn cutoff(&self, i: u32) -> u32 {
        assert!(i >= 1, "attempt indices start at 1");
        match *self {
            Self::Fixed(t) => t,
            Self::Walsh(g) => {
                let v = g.powi((i - 1) as i32).ceil();
                if v >= f64::from(u32::MAX) {
                    u32::MAX
                } else {
                    v as u32
                }
            }
            Self::Luby(unit) => u32::try_from(luby(u64::from(i)).saturating_mul(u64::from(unit)))
                .unwrap_or(u32::MAX),
        }
    }
}

impl fmt::Display for RestartSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(t) => write!(f, "fixed:{t}"),
            Self::Walsh(g) => write!(f, "walsh:{g}"),
            Self::Luby(u) => write!(f, "luby:{u}"),
        }
    }
}

impl FromStr for RestartSchedule {
    type Err = StrategyError;

    /// `fixed:T`, `walsh:GAMMA` or `luby:UNIT`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StrategyError::InvalidSchedule(format!("cannot parse schedule {s:?}"));
        let (kind, param) = s.split_once(':').ok_or_else(bad)?;
        let sched = match kind {
            "fixed" => Self::Fixed(param.parse().map_err(|_| bad())?),
            "walsh" => Self::Walsh(param.parse().map_err(|_| bad())?),
            "luby" => Self::Luby(param.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        sched.validated()
    }
}

/// Term `i` (1-based) of the Luby sequence 1, 1, 2, 1, 1, 2, 4, ...
///
/// `luby(i) = 2^(k-1)` if `i = 2^k - 1`, otherwise
/// `luby(i - 2^(k-1) + 1)` for `2^(k-1) <= i < 2^k - 1`.
pub fn luby(mut i: u64) -> u64 {
    assert!(i >= 1, "luby terms start at 1");
    loop {
        // smallest k with 2^k - 1 >= i
        let k = 64 - i.leading_zeros();
        if i == (1u64 << k) - 1 {
            return 1 << (k - 1);
        }
        i -= (1 << (k - 1)) - 1;
    }
}

/// Trace of one restarted execution.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub total_epochs: u64,
    pub attempts: u32,
    pub succeeded: bool,
    /// `(cutoff, epochs_used)` per attempt.
    pub per_attempt: Vec<(u32, u32)>,
}

/// Runs attempts `i = 1, 2, ...` with seeds `derive_seed(base_seed, i)`
/// and cutoffs from `s` until one converges or `budget` epochs are spent.
///
/// An attempt whose cutoff would overrun the budget is shortened to the
/// remaining epochs, so the total never exceeds `budget`.
pub fn run_with_strategy<P: LasVegasProcess + ?Sized>(
    p: &P,
    s: &RestartSchedule,
    base_seed: u64,
    budget: u64,
) -> StrategyOutcome {
    let mut out = StrategyOutcome {
        total_epochs: 0,
        attempts: 0,
        succeeded: false,
        per_attempt: Vec::new(),
    };
    let mut i: u32 = 1;
    while out.total_epochs < budget {
        let remaining = budget - out.total_epochs;
        let cutoff = u64::from(s.cutoff(i)).min(remaining) as u32;
        let rec = p.attempt(derive_seed(base_seed, u64::from(i)), cutoff);
        let used = if rec.converged { rec.epochs } else { cutoff };
        out.total_epochs += u64::from(used);
        out.attempts = i;
        out.per_attempt.push((cutoff, used));
        if rec.converged {
            out.succeeded = true;
            break;
        }
        i = match i.checked_add(1) {
            Some(n) => n,
            None => break,
        };
    }
    out
}

/// Monte Carlo estimate of a strategy's expected total time.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    /// Mean total epochs over succeeded trials.
    pub mean_epochs: f64,
    /// Standard error of `mean_epochs`; NaN with fewer than two successes.
    pub stderr: f64,
    pub failure_rate: f64,
    pub n_trials: usize,
    pub n_succeeded: usize,
}

/// Runs `n_trials` independent executions; trial `j` uses base seed
/// `derive_seed(base_seed, j)`. Results are merged by trial index.
pub fn evaluate_strategy_mc<P: LasVegasProcess + ?Sized>(
    p: &P,
    s: &RestartSchedule,
    n_trials: usize,
    base_seed: u64,
    budget: u64,
) -> Result<McEstimate, StrategyError> {
    if n_trials < 2 {
        return Err(StrategyError::InvalidArgument(
            "Monte Carlo evaluation needs at least 2 trials".into(),
        ));
    }
    if budget == 0 {
        return Err(StrategyError::InvalidArgument(
            "budget must be positive".into(),
        ));
    }
    let outcomes: Vec<StrategyOutcome> = (0..n_trials as u64)
        .into_par_iter()
        .map(|j| run_with_strategy(p, s, derive_seed(base_seed, j), budget))
        .collect();
    let totals: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.succeeded)
        .map(|o| o.total_epochs as f64)
        .collect();
    let n_ok = totals.len();
    if n_ok == 0 {
        let attempts: u64 = outcomes.iter().map(|o| u64::from(o.attempts)).sum();
        return Err(StrategyError::AllFailed {
            n_trials,
            budget,
            mean_attempts: attempts as f64 / n_trials as f64,
        });
    }
    let n = n_ok as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let stderr = if n_ok < 2 {
        f64::NAN
    } else {
        let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok(McEstimate {
        mean_epochs: mean,
        stderr,
        failure_rate: (n_trials - n_ok) as f64 / n_trials as f64,
        n_trials,
        n_succeeded: n_ok,
    })
}
