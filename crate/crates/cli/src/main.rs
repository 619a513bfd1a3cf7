//! `tailrestart`: collect run-time samples, analyse their tails and evaluate
//! restart strategies.
//!
//! Tables go to stdout as tab-separated text with a header line; plot data
//! goes to the files named by `--*-out` flags; diagnostics go to stderr.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use tailrestart::dataset::{kfold_split, load_thyroid, scale_min_max};
use tailrestart::runner::{collect_runs, load_runs, save_runs, summary_stats};
use tailrestart::strategies::{
    evaluate_strategy_mc, expected_time_curve, optimal_cutoff, run_with_strategy,
};
use tailrestart::tailstats::{
    empirical_cdf, hill_cutoff, hill_estimator, loglog_tail_slope, loglog_tsv, remaining_curve,
    remaining_tsv, restart_profitable, survival_tsv,
};
use tailrestart::{
    derive_seed, LasVegasProcess, MlpConfig, MlpProcess, RestartSchedule, SyntheticLaw,
    SyntheticProcess,
};

#[derive(Debug, Parser)]
#[command(name = "tailrestart", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect unrestarted runs into a run log and print summary statistics.
    Collect(CollectArgs),
    /// Tail analysis of a run log: Hill index, log-log slope, restart verdict.
    Tail(TailArgs),
    /// Optimal fixed cutoff of a run log.
    Optimize(OptimizeArgs),
    /// Monte Carlo comparison of restart schedules against no restarts.
    Sweep(SweepArgs),
    /// Execute one restart schedule and print its attempt trace.
    RestartRun(RestartRunArgs),
}

#[derive(Debug, Args)]
struct ProcessArgs {
    /// Thyroid training patterns ("ann" format).
    #[arg(
        long,
        value_name = "PATH",
        required_unless_present = "stub",
        conflicts_with = "stub"
    )]
    data: Option<PathBuf>,
    /// Synthetic law instead of training, e.g. `two-point:0.5:1:10`,
    /// `geometric:0.1`, `discrete-pareto:1.5`, `constant:3`.
    #[arg(long, value_name = "SPEC")]
    stub: Option<SyntheticLaw>,
    /// Hidden units.
    #[arg(long, default_value_t = 3)]
    hidden: usize,
    /// Target training error.
    #[arg(long, default_value_t = MlpConfig::DEFAULT_TARGET_ERROR)]
    delta: f64,
    #[arg(long, default_value_t = MlpConfig::DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    /// Initial weights are uniform on [-w, w].
    #[arg(long, value_name = "W", default_value_t = MlpConfig::DEFAULT_INIT_HALF_WIDTH)]
    init_width: f64,
    /// Censoring cap, in epochs. Also applies to stubs.
    #[arg(long, default_value_t = MlpConfig::DEFAULT_MAX_EPOCHS)]
    max_epochs: u32,
    /// Split the data into K folds and train on all but `--fold`.
    #[arg(long, value_name = "K", requires = "fold")]
    folds: Option<usize>,
    /// Held-out fold index in 0..K.
    #[arg(long, value_name = "I", requires = "folds")]
    fold: Option<usize>,
    /// Seed of the fold shuffle.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Debug, Args)]
struct CollectArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run log to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TailArgs {
    #[arg(long, value_name = "PATH")]
    log: PathBuf,
    /// Hill cutoff r as a fraction of the converged runs.
    #[arg(long, default_value_t = 0.1)]
    r_fraction: f64,
    /// Upper fraction of converged runs used for the log-log slope.
    #[arg(long, default_value_t = 0.1)]
    tail_fraction: f64,
    /// Survival function P[T > t] at each observed t.
    #[arg(long, value_name = "PATH")]
    survival_out: Option<PathBuf>,
    /// ln t against ln P[T > t].
    #[arg(long, value_name = "PATH")]
    loglog_out: Option<PathBuf>,
    /// E[T - tau | T > tau] with the unconditional mean as baseline.
    #[arg(long, value_name = "PATH")]
    remaining_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long, value_name = "PATH")]
    log: PathBuf,
    /// Expected time under every observed fixed cutoff.
    #[arg(long, value_name = "PATH")]
    curve_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    process: ProcessArgs,
    /// Walsh growth factors.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8,9,10")]
    gammas: Vec<f64>,
    /// Also evaluate the Luby schedule with this unit.
    #[arg(long, value_name = "UNIT")]
    luby: Option<u32>,
    /// Also evaluate fixed cutoffs.
    #[arg(long, value_name = "T", value_delimiter = ',')]
    fixed: Vec<u32>,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Epoch budget per restarted execution [default: 10 x max-epochs].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    budget: Option<u64>,
}

#[derive(Debug, Args)]
struct RestartRunArgs {
    #[command(flatten)]
    process: ProcessArgs,
    /// `fixed:T`, `walsh:GAMMA` or `luby:UNIT`.
    #[arg(long)]
    schedule: RestartSchedule,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Epoch budget [default: 10 x max-epochs].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    budget: Option<u64>,
}

/// Flags checked against library preconditions before any work starts.
enum ProcessSpec {
    Stub(SyntheticProcess),
    Mlp {
        cfg: MlpConfig,
        data: PathBuf,
        folds: Option<(usize, usize)>,
        split_seed: u64,
    },
}

impl ProcessArgs {
    fn validate(&self) -> Result<ProcessSpec, String> {
        if let Some(law) = self.stub {
            let p = SyntheticProcess::new(law, self.max_epochs).map_err(|e| e.to_string())?;
            return Ok(ProcessSpec::Stub(p));
        }
        let cfg = MlpConfig {
            learning_rate: self.lr,
            momentum: self.momentum,
            init_half_width: self.init_width,
            target_error: self.delta,
            max_epochs: self.max_epochs,
            ..MlpConfig::thyroid(self.hidden)
        };
        cfg.validate().map_err(|e| e.to_string())?;
        let folds = match (self.folds, self.fold) {
            (Some(k), Some(i)) => {
                if k < 2 {
                    return Err(format!("--folds must be at least 2, got {k}"));
                }
                if i >= k {
                    return Err(format!("--fold must be below --folds {k}, got {i}"));
                }
                Some((k, i))
            }
            _ => None,
        };
        Ok(ProcessSpec::Mlp {
            cfg,
            data: self
                .data
                .clone()
                .expect("clap requires --data without --stub"),
            folds,
            split_seed: self.split_seed,
        })
    }
}

impl ProcessSpec {
    fn cap(&self) -> u32 {
        match self {
            Self::Stub(p) => p.cap,
            Self::Mlp { cfg, .. } => cfg.max_epochs,
        }
    }

    fn build(self) -> Result<Box<dyn LasVegasProcess>> {
        match self {
            Self::Stub(p) => Ok(Box::new(p)),
            Self::Mlp {
                cfg,
                data,
                folds,
                split_seed,
            } => {
                let full = load_thyroid(&data)?;
                let scaled = scale_min_max(&full);
                let (train, desc) = match folds {
                    None => (scaled, format!("data={}", data.display())),
                    Some((k, i)) => {
                        let split = kfold_split(scaled.n_rows(), k, split_seed)?;
                        let train = scaled.subset(&split[i].train_indices);
                        let desc = format!(
                            "data={} fold={i}/{k} split_seed={split_seed}",
                            data.display()
                        );
                        (train, desc)
                    }
                };
                Ok(Box::new(MlpProcess::new(cfg, Arc::new(train), desc)?))
            }
        }
    }
}

fn usage_error(msg: impl Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

fn validated(p: &ProcessArgs) -> ProcessSpec {
    p.validate().unwrap_or_else(|e| usage_error(e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pct(reduction: f64) -> String {
    format!("{:.1}", 100.0 * reduction)
}

fn cmd_collect(args: CollectArgs) -> Result<()> {
    let spec = validated(&args.process);
    let p = spec.build()?;
    let sample = collect_runs(p.as_ref(), args.runs as usize, args.seed);
    save_runs(&sample, &args.out)?;

    println!("runs\tconverged\tcensored\tmean\tstddev\tratio");
    match summary_stats(&sample) {
        Ok(s) => println!(
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            sample.len(),
            s.n_converged,
            s.n_censored,
            s.mean,
            s.stddev,
            s.ratio
        ),
        Err(e) => {
            eprintln!("warning: {e}; statistics unavailable");
            println!(
                "{}\t{}\t{}\tNA\tNA\tNA",
                sample.len(),
                sample.n_converged(),
                sample.n_censored()
            );
        }
    }
    Ok(())
}

fn cmd_tail(args: TailArgs) -> Result<()> {
    if !(args.r_fraction > 0.0 && args.r_fraction < 1.0) {
        usage_error("--r-fraction must lie in (0, 1)");
    }
    if !(args.tail_fraction > 0.0 && args.tail_fraction <= 1.0) {
        usage_error("--tail-fraction must lie in (0, 1]");
    }
    let sample = load_runs(&args.log)?;
    let ecdf = empirical_cdf(&sample)?;
    let m = sample.n_converged();

    println!("quantity\tvalue");
    println!("runs\t{}", sample.len());
    println!("converged\t{m}");
    println!("censored\t{}", sample.n_censored());

    let r = hill_cutoff(m, args.r_fraction);
    println!("hill_r\t{r}");
    match hill_estimator(&sample, r) {
        Ok(h) => {
            println!("hill_alpha\t{:.4}", h.alpha);
            println!("hill_mean_log_spacing\t{:.6}", h.mean_log_spacing);
        }
        Err(e) => {
            eprintln!("warning: Hill estimator: {e}");
            println!("hill_alpha\tNA");
            println!("hill_mean_log_spacing\tNA");
        }
    }
    match loglog_tail_slope(&sample, args.tail_fraction) {
        Ok(slope) => println!("loglog_slope\t{slope:.4}"),
        Err(e) => {
            eprintln!("warning: log-log slope: {e}");
            println!("loglog_slope\tNA");
        }
    }

    let curve = remaining_curve(&sample);
    let profitable = restart_profitable(&sample);
    println!("profitable_tau\t{}", profitable.len());
    match (profitable.first(), profitable.last()) {
        (Some(lo), Some(hi)) => println!(
            "verdict\trestart profitable at {} of {} observed tau (from {lo} to {hi})",
            profitable.len(),
            curve.len()
        ),
        _ => println!("verdict\trestart not profitable (no τ)"),
    }

    if let Some(path) = &args.survival_out {
        write_file(path, &survival_tsv(&ecdf))?;
    }
    if let Some(path) = &args.loglog_out {
        write_file(path, &loglog_tsv(&ecdf))?;
    }
    if let Some(path) = &args.remaining_out {
        let epochs = sample.converged_epochs();
        let mean = epochs.iter().map(|&e| f64::from(e)).sum::<f64>() / m as f64;
        write_file(path, &remaining_tsv(&curve, mean))?;
    }
    Ok(())
}

fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let sample = load_runs(&args.log)?;
    let ecdf = empirical_cdf(&sample)?;
    let epochs = sample.converged_epochs();
    let mean = epochs.iter().map(|&e| f64::from(e)).sum::<f64>() / epochs.len() as f64;
    let (t_star, expected) = optimal_cutoff(&ecdf);

    println!("t_star\texpected\tconverged_mean\treduction_pct");
    println!(
        "{t_star}\t{expected:.4}\t{mean:.4}\t{}",
        pct((mean - expected) / mean)
    );

    if let Some(path) = &args.curve_out {
        let mut out = String::from("t\texpected\n");
        for (t, e) in expected_time_curve(&ecdf) {
            out.push_str(&format!("{t}\t{e}\n"));
        }
        write_file(path, &out)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let spec = validated(&args.process);
    let mut schedules = Vec::new();
    for &g in &args.gammas {
        schedules.push(RestartSchedule::walsh(g).unwrap_or_else(|e| usage_error(e)));
    }
    if let Some(u) = args.luby {
        schedules.push(RestartSchedule::luby(u).unwrap_or_else(|e| usage_error(e)));
    }
    for &t in &args.fixed {
        schedules.push(RestartSchedule::fixed(t).unwrap_or_else(|e| usage_error(e)));
    }
    if schedules.is_empty() {
        usage_error("nothing to sweep");
    }
    let cap = spec.cap();
    let budget = args.budget.unwrap_or(10 * u64::from(cap));
    let p = spec.build()?;
    let trials = args.trials as usize;

    println!("schedule\tmean\tstderr\tfailure_rate\treduction_pct");
    let baseline = RestartSchedule::Fixed(cap);
    let base_mean =
        match evaluate_strategy_mc(p.as_ref(), &baseline, trials, args.seed, u64::from(cap)) {
            Ok(est) => {
                println!(
                    "none\t{:.4}\t{:.4}\t{:.4}\t0.0",
                    est.mean_epochs, est.stderr, est.failure_rate
                );
                Some(est.mean_epochs)
            }
            Err(e) => {
                eprintln!("warning: no-restart baseline: {e}");
                println!("none\tNA\tNA\t1.0000\tNA");
                None
            }
        };
    for s in &schedules {
        match evaluate_strategy_mc(p.as_ref(), s, trials, args.seed, budget) {
            Ok(est) => {
                let reduction = base_mean
                    .map(|b| pct((b - est.mean_epochs) / b))
                    .unwrap_or_else(|| "NA".into());
                println!(
                    "{s}\t{:.4}\t{:.4}\t{:.4}\t{reduction}",
                    est.mean_epochs, est.stderr, est.failure_rate
                );
            }
            Err(e) => {
                eprintln!("warning: {s}: {e}");
                println!("{s}\tNA\tNA\t1.0000\tNA");
            }
        }
    }
    Ok(())
}

fn cmd_restart_run(args: RestartRunArgs) -> Result<()> {
    let spec = validated(&args.process);
    let schedule = args.schedule;
    let budget = args.budget.unwrap_or(10 * u64::from(spec.cap()));
    let p = spec.build()?;
    let out = run_with_strategy(p.as_ref(), &schedule, args.seed, budget);

    println!("schedule\ttotal_epochs\tattempts\tsucceeded");
    println!(
        "{schedule}\t{}\t{}\t{}",
        out.total_epochs, out.attempts, out.succeeded
    );
    println!();
    println!("attempt\tseed\tcutoff\tepochs");
    for (i, &(cutoff, used)) in out.per_attempt.iter().enumerate() {
        let attempt = i as u64 + 1;
        println!(
            "{attempt}\t{}\t{cutoff}\t{used}",
            derive_seed(args.seed, attempt)
        );
    }
    if !out.succeeded {
        eprintln!("warning: no attempt converged within the budget of {budget} epochs");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Collect(a) => cmd_collect(a),
        Command::Tail(a) => cmd_tail(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::RestartRun(a) => cmd_restart_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
