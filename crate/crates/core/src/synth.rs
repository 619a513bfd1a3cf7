//! Synthetic integer runtime laws with closed-form CDFs.
//!
//! Each law is sampled by inverse CDF from a ChaCha8 stream seeded per
//! draw, so `sample(law, seed)` is a pure function. The string grammar
//! `name:param:...` is what the command line accepts after `--stub`:
//!
//! | grammar                        | law                                       |
//! |--------------------------------|-------------------------------------------|
//! | `constant:c`                   | `T = c`                                   |
//! | `two-point:p:a:b`              | `T = a` w.p. `p`, else `b`                |
//! | `geometric:p`                  | `P(T = k) = (1-p)^(k-1) p`, `k >= 1`      |
//! | `discrete-pareto:alpha[:xmin]` | `T = ceil(X)`, `X ~ Pareto(alpha, xmin)`  |

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mlp::RunRecord;
use crate::runner::LasVegasProcess;
use crate::tailstats::{Ecdf, TailError};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid law parameters: {0}")]
    InvalidParameters(String),
    #[error("cannot parse law {spec:?}: {reason}")]
    Parse { spec: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticLaw {
    Constant(u32),
    TwoPoint { p: f64, a: u32, b: u32 },
    Geometric(f64),
    DiscretePareto { alpha: f64, x_min: f64 },
}

impl SyntheticLaw {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParameters(m.to_string()));
        match *self {
            Self::Constant(c) if c < 1 => bad("constant must be at least 1"),
            Self::TwoPoint { p, a, b } => {
                if !(p > 0.0 && p < 1.0) {
                    bad("two-point probability must lie in (0, 1)")
                } else if a < 1 || a >= b {
                    bad("two-point values must satisfy 1 <= a < b")
                } else {
                    Ok(())
                }
            }
            Self::Geometric(p) if !(p > 0.0 && p < 1.0) => {
                bad("geometric probability must lie in (0, 1)")
            }
            Self::DiscretePareto { alpha, x_min } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    bad("pareto alpha must be positive")
                } else if !(x_min >= 1.0 && x_min.is_finite()) {
                    bad("pareto x_min must be at least 1")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Closed-form `P(T <= t)`.
    pub fn exact_cdf(&self, t: u32) -> f64 {
        let tf = f64::from(t);
        match *self {
            Self::Constant(c) => f64::from(u8::from(t >= c)),
            Self::TwoPoint { p, a, b } => {
                if t < a {
                    0.0
                } else if t < b {
                    p
                } else {
                    1.0
                }
            }
            Self::Geometric(p) => 1.0 - (1.0 - p).powf(tf),
            // P(ceil X <= t) = P(X <= t) for integer t.
            Self::DiscretePareto { alpha, x_min } => {
                if tf < x_min {
                    0.0
                } else {
                    1.0 - (x_min / tf).powf(alpha)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Constant(c) => f64::from(c),
            Self::TwoPoint { p, a, b } => p * f64::from(a) + (1.0 - p) * f64::from(b),
            Self::Geometric(p) => 1.0 / p,
            Self::DiscretePareto { alpha, x_min } => {
                if alpha <= 1.0 {
                    f64::INFINITY
                } else {
                    // E[ceil X] = sum_{t>=0} P(X > t). Terms are 1 below x_min and
                    // (x_min/t)^alpha above; the far tail uses Euler-Maclaurin.
                    let first = x_min.floor() + 1.0;
                    let last = first + 10_000.0;
                    let mut zeta = 0.0;
                    let mut t = first;
                    while t < last {
                        zeta += t.powf(-alpha);
                        t += 1.0;
                    }
                    zeta += last.powf(1.0 - alpha) / (alpha - 1.0)
                        + 0.5 * last.powf(-alpha)
                        + alpha / 12.0 * last.powf(-alpha - 1.0);
                    first + x_min.powf(alpha) * zeta
                }
            }
        }
    }

    /// Inverse-CDF draw for `seed`. Values are at least 1 and saturate at `u32::MAX`.
    pub fn sample(&self, seed: u64) -> u32 {
        let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
        // v in (0, 1]
        let v = 1.0 - u;
        let t = match *self {
            Self::Constant(c) => return c,
            Self::TwoPoint { p, a, b } => return if u < p { a } else { b },
            Self::Geometric(p) => (v.ln() / (1.0 - p).ln()).ceil(),
            Self::DiscretePareto { alpha, x_min } => (x_min * v.powf(-1.0 / alpha)).ceil(),
        };
        if t >= f64::from(u32::MAX) {
            u32::MAX
        } else {
            (t as u32).max(1)
        }
    }

    /// The exact law truncated at `cap`, as an [`Ecdf`] whose censored
    /// mass is `P(T > cap)`.
    pub fn exact_ecdf(&self, cap: u32) -> Result<Ecdf, TailError> {
        let mut support = Vec::new();
        let mut cum = Vec::new();
        let mut prev = 0.0;
        for t in 1..=cap {
            let q = self.exact_cdf(t);
            if q > prev {
                support.push(t);
                cum.push(q);
                prev = q;
            }
            if q >= 1.0 {
                break;
            }
        }
        Ecdf::from_points(support, cum, cap)
    }
}

/// Continuous Pareto draw `x_min * V^(-1/alpha)`, `V ~ U(0, 1]`.
pub fn continuous_pareto(alpha: f64, x_min: f64, seed: u64) -> f64 {
    let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
    x_min * (1.0 - u).powf(-1.0 / alpha)
}

impl fmt::Display for SyntheticLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "constant:{c}"),
            Self::TwoPoint { p, a, b } => write!(f, "two-point:{p}:{a}:{b}"),
            Self::Geometric(p) => write!(f, "geometric:{p}"),
            Self::DiscretePareto { alpha, x_min } => write!(f, "discrete-pareto:{alpha}:{x_min}"),
        }
    }
}

impl FromStr for SyntheticLaw {
    type Err = SynthError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let parse_err = |reason: String| SynthError::Parse {
            spec: spec.to_string(),
            reason,
        };
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |i: usize| -> Result<f64, SynthError> {
            parts[i]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("{:?} is not a number", parts[i])))
        };
        let int = |i: usize| -> Result<u32, SynthError> {
            parts[i]
                .parse::<u32>()
                .map_err(|_| parse_err(format!("{:?} is not a positive integer", parts[i])))
        };
        let arity = |n: &[usize]| -> Result<(), SynthError> {
            if n.contains(&(parts.len() - 1)) {
                Ok(())
            } else {
                Err(parse_err(format!(
                    "{} takes {:?} parameters, got {}",
                    parts[0],
                    n,
                    parts.len() - 1
                )))
            }
        };
        let law = match parts[0] {
            "constant" => {
                arity(&[1])?;
                Self::Constant(int(1)?)
            }
            "two-point" => {
                arity(&[3])?;
                Self::TwoPoint {
                    p: num(1)?,
                    a: int(2)?,
                    b: int(3)?,
                }
            }
            "geometric" => {
                arity(&[1])?;
                Self::Geometric(num(1)?)
            }
            "discrete-pareto" => {
                arity(&[1, 2])?;
                Self::DiscretePareto {
                    alpha: num(1)?,
                    x_min: if parts.len() == 3 { num(2)? } else { 1.0 },
                }
            }
            other => return Err(parse_err(format!("unknown law {other:?}"))),
        };
        law.validate()?;
        Ok(law)
    }
}

/// A synthetic law plugged into the [`LasVegasProcess`] contract.
///
/// Completed attempts report `final_error` 0 and censored ones 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProcess {
    pub law: SyntheticLaw,
    pub cap: u32,
}

impl SyntheticProcess {
    pub fn new(law: SyntheticLaw, cap: u32) -> Result<Self, SynthError> {
        law.validate()?;
        if cap == 0 {
            return Err(SynthError::InvalidParameters("cap must be positive".into()));
        }
        Ok(Self { law, cap })
    }
}

impl LasVegasProcess for SyntheticProcess {
    fn attempt(&self, seed: u64, cutoff: u32) -> RunRecord {
        let t = self.law.sample(seed);
        if t <= cutoff {
            RunRecord::converged(seed, t, 0.0)
        } else {
            RunRecord::censored(seed, cutoff, 1.0)
        }
    }

    fn cap(&self) -> u32 {
        self.cap
    }

    fn describe(&self) -> String {
        format!("stub {} cap={}", self.law, self.cap)
    }
}
