//! `vadcal`: selection-aware calibration experiments from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vadcal::calibrators::{fit_histogram, fit_isotonic, fit_platt, fit_scaling_binning, Calibrator};
use vadcal::dataset::load_scores_csv;
use vadcal::harness::{
    load_experiment_config, load_theory_config, run_experiment, run_theory_check, DataSource,
    ExperimentConfig, ScorePaths, TheoryConfig,
};
use vadcal::report::ReportFormat;
use vadcal::vad::compute_lambda;
use vadcal::{Error, LinkFunction};

#[derive(Parser)]
#[command(
    name = "vadcal",
    about = "Selection-aware calibration: VAD debiasing, baseline calibrators, top-alpha metrics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (JSON). Omitted: the built-in synthetic protocol.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the report file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (default: all cores). Output bytes never depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic covariate-shift experiment (paper protocol by
    /// default; override pieces with --config).
    Synth(RunArgs),
    /// Run the pipeline on CSV feature files (train/val-train/val-test/test).
    Pipeline(RunArgs),
    /// Evaluate externally produced score files (no model fitting).
    Scores {
        #[command(flatten)]
        run: RunArgs,
        /// Scores CSV for the test set (label,l1,...,lS).
        #[arg(long)]
        test: Option<PathBuf>,
        /// Scores CSV for the unlabeled val-test set.
        #[arg(long)]
        val_test: Option<PathBuf>,
        /// Scores CSV for the labeled val-train set (enables baselines and
        /// VAD+).
        #[arg(long)]
        val_train: Option<PathBuf>,
    },
    /// Verify the bias formula numerically and write a JSON report.
    TheoryCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit one calibrator (or VAD parameters) from a scores CSV and save it
    /// as JSON.
    Calibrate {
        /// One of: platt, histogram, isotonic, scaling_binning, vad.
        #[arg(long)]
        method: String,
        /// Scores CSV (label,l1,...,lS); labels are ignored for vad.
        #[arg(long)]
        scores: PathBuf,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Bin count for histogram / scaling_binning.
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Link function: logistic or identity.
        #[arg(long, default_value = "logistic")]
        link: String,
    },
}

fn parse_link(s: &str) -> Result<LinkFunction, Error> {
    match s {
        "logistic" => Ok(LinkFunction::Logistic),
        "identity" => Ok(LinkFunction::Identity),
        other => Err(Error::InvalidConfig(format!(
            "unknown link '{other}', expected logistic or identity"
        ))),
    }
}

fn with_pool<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn report_path(out: &Option<PathBuf>, format: ReportFormat) -> PathBuf {
    let name = match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Markdown => "report.md",
    };
    match out {
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

fn run_table_command(mut cfg: ExperimentConfig, args: &RunArgs) -> Result<(), Error> {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.replications = reps;
    }
    cfg.validate()?;
    let format: ReportFormat = args.format.parse()?;
    let table = with_pool(args.threads, || run_experiment(&cfg))?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
    }
    let path = report_path(&args.out, format);
    table.write(format, &path)?;
    // the markdown view reads well on a terminal too
    print!("{}", table.render(ReportFormat::Markdown));
    eprintln!("report written to {}", path.display());
    Ok(())
}

fn cmd_synth(args: &RunArgs) -> Result<(), Error> {
    let cfg = match &args.config {
        Some(path) => {
            let cfg = load_experiment_config(path)?;
            if !matches!(cfg.data, DataSource::Synthetic(_)) {
                return Err(Error::InvalidConfig(
                    "`synth` needs a config with a synthetic data source".into(),
                ));
            }
            cfg
        }
        None => ExperimentConfig::synthetic_default(),
    };
    run_table_command(cfg, args)
}

fn cmd_pipeline(args: &RunArgs) -> Result<(), Error> {
    let path = args.config.as_ref().ok_or_else(|| {
        Error::InvalidConfig("`pipeline` needs --config with csv paths".into())
    })?;
    let cfg = load_experiment_config(path)?;
    if !matches!(cfg.data, DataSource::Csv(_)) {
        return Err(Error::InvalidConfig(
            "`pipeline` needs a config with a csv data source".into(),
        ));
    }
    run_table_command(cfg, args)
}

fn cmd_scores(
    run: &RunArgs,
    test: &Option<PathBuf>,
    val_test: &Option<PathBuf>,
    val_train: &Option<PathBuf>,
) -> Result<(), Error> {
    let cfg = match (&run.config, test, val_test) {
        (Some(path), None, None) => {
            let cfg = load_experiment_config(path)?;
            if !matches!(cfg.data, DataSource::Scores(_)) {
                return Err(Error::InvalidConfig(
                    "`scores` needs a config with a scores data source".into(),
                ));
            }
            cfg
        }
        (None, Some(test), Some(val_test)) => {
            let mut cfg = ExperimentConfig::synthetic_default();
            cfg.data = DataSource::Scores(ScorePaths {
                test: test.clone(),
                val_test: val_test.clone(),
                val_train: val_train.clone(),
            });
            cfg.replications = 1;
            cfg
        }
        _ => {
            return Err(Error::InvalidConfig(
                "`scores` needs either --config or both --test and --val-test".into(),
            ))
        }
    };
    run_table_command(cfg, run)
}

fn cmd_theory_check(
    config: &Option<PathBuf>,
    out: &Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<bool, Error> {
    let mut cfg = match config {
        Some(path) => load_theory_config(path)?,
        None => TheoryConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = with_pool(threads, || run_theory_check(&cfg))?;
    let path = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            dir.join("theory_report.json")
        }
        None => PathBuf::from("theory_report.json"),
    };
    report.save(&path)?;
    for c in &report.truncated_mean {
        println!(
            "truncated_mean alpha={}: value {:.10} ref {:.10} mc {:.6}±{:.6} [{}]",
            c.alpha,
            c.value,
            c.reference,
            c.mc.mean,
            c.mc.std_err,
            if c.pass_analytic && c.pass_mc { "pass" } else { "FAIL" }
        );
    }
    for (alpha, b) in &report.hprime_bounds {
        println!(
            "hprime_bounds alpha={alpha}: margins [{:.3e}, {:.3e}] [{}]",
            b.min_lower_margin,
            b.min_upper_margin,
            if b.pass { "pass" } else { "FAIL" }
        );
    }
    let d = &report.decomposition_logistic;
    println!(
        "decomposition logistic: lhs {:.5} rhs {:.5} diff {:.2e}±{:.2e} [{}]",
        d.lhs,
        d.rhs,
        d.diff,
        d.diff_se,
        if d.pass { "pass" } else { "FAIL" }
    );
    println!(
        "decomposition linear: lhs {:.6} analytic {:.6} [{}]",
        report.decomposition_linear.lhs,
        report.decomposition_linear.analytic_rhs,
        if report.decomposition_linear.pass { "pass" } else { "FAIL" }
    );
    println!(
        "decomposition linear (zero noise): [{}]",
        if report.decomposition_linear_zero_noise.pass { "pass" } else { "FAIL" }
    );
    let ok_random = report.consistency_random.iter().filter(|c| c.pass).count();
    println!(
        "bias consistency random settings: {ok_random}/{} pass",
        report.consistency_random.len()
    );
    for c in &report.consistency_refit {
        println!(
            "bias consistency paper config: formula {:.5} mc {:.5} diff {:.2e}±{:.2e} [{}]",
            c.formula_mean,
            c.mc_mean,
            c.diff,
            c.diff_se,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    let ok_roots = report.shrink_roots.iter().filter(|c| c.pass).count();
    println!("shrink-factor roots: {ok_roots}/{} within 1e-6", report.shrink_roots.len());
    println!("all checks: {}", if report.all_pass { "PASS" } else { "FAIL" });
    eprintln!("report written to {}", path.display());
    Ok(report.all_pass)
}

fn cmd_calibrate(
    method: &str,
    scores_path: &Path,
    out: &Path,
    bins: usize,
    link: &str,
) -> Result<(), Error> {
    let link = parse_link(link)?;
    let table = load_scores_csv(scores_path)?;
    let logits = table.column(0);
    match method {
        "vad" => {
            let params = compute_lambda(&table.logits, link)?;
            params.save(out)?;
            println!(
                "lambda {:.6} (raw {:.6}), y_bar {:.6}",
                params.lambda, params.diagnostics.raw_lambda, params.y_bar
            );
        }
        name => {
            let probs: Vec<f64> = logits.iter().map(|l| link.phi(*l)).collect();
            let cal = match name {
                "platt" => Calibrator::Platt(fit_platt(&logits, &table.labels)?),
                "histogram" => {
                    Calibrator::Histogram(fit_histogram(&probs, &table.labels, bins)?)
                }
                "isotonic" => Calibrator::Isotonic(fit_isotonic(&probs, &table.labels)?),
                "scaling_binning" => Calibrator::ScalingBinning(fit_scaling_binning(
                    &logits,
                    &table.labels,
                    bins,
                )?),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown method '{other}': expected platt, histogram, isotonic, scaling_binning, or vad"
                    )))
                }
            };
            cal.save(out)?;
        }
    }
    eprintln!("saved to {}", out.display());
    Ok(())
}

/// Exit codes: 0 success, 1 config error, 2 data error, 3 check failure.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::Json(_) => 1,
        Error::InvalidInput(_)
        | Error::DegenerateData(_)
        | Error::Parse { .. }
        | Error::Io(_) => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome: Result<bool, Error> = match &cli.command {
        Command::Synth(args) => cmd_synth(args).map(|()| true),
        Command::Pipeline(args) => cmd_pipeline(args).map(|()| true),
        Command::Scores { run, test, val_test, val_train } => {
            cmd_scores(run, test, val_test, val_train).map(|()| true)
        }
        Command::TheoryCheck { config, out, seed, threads } => {
            cmd_theory_check(config, out, *seed, *threads)
        }
        Command::Calibrate { method, scores, out, bins, link } => {
            cmd_calibrate(method, scores, out, *bins, link).map(|()| true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
