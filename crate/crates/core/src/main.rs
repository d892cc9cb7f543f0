use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use icl_lab::harness::{
    emit_plot, load_config, resolve_threads, run_parity_sweep, run_regression_sweep, run_verify, Experiment,
    HarnessError, PlotSpec, RunConfig, SuiteFilter, VerifyOptions, EXIT_VERIFY_FAILED,
};

const CONFIG_KEYS: &str = "\
Config files are JSON objects. Unknown keys are rejected.

  experiment          \"regression-sweep\" | \"parity-sweep\" | \"verify\" (required)
  seed                u64, default 0
  threads             worker threads, default all cores (ICL_LAB_THREADS overrides)
  out_dir             output directory, overridden by --out
  regression {
    d                 dimension, default 4
    n                 pretraining prompt length N, default 8
    eigenvalues       non-increasing spectrum, default 2^-i
    random_basis      random eigenbasis from the seed, default true
    weight            evaluation weight in eigen-coordinates, default (1, 1/2, 1/4, ..., 0)
    m_list            evaluation prompt lengths, default [4, 16]
    r_list            model ranks, default [1, 2, 4]
    sigma_list        label noise levels, default [0, 0.5]
    trials            Monte Carlo trials per cell, default 100000
    pretrain_prompts  prompts B for the empirical pretraining risk, default 100000
    pretrain_n        prompt length for the empirical pretraining risk, default 16
    gd                {lr, steps, restarts, tol}, default scaled to the spectrum
  }
  parity {
    nu1, nu2          log2 of important and total coordinates, default 1, 3
    gamma             label bias in (0, 1/4), default 0.1
    p_t               less-important task probabilities, default [0, threshold/2]
    m_list            prompt lengths (>= 4), default [16, 64, 256, 1024]
    ratio_pairs       (nu1, nu2) pairs for the energy ratio, default [[1,2],[1,3],[2,3]]
    ratio_trials      default 100000
    loss_n            prompt length for the Monte Carlo hinge loss, default 1024
    loss_trials       default 10000
    residual_trials   default 20000
    residual_modes    subset of [\"idealized\", \"empirical-iid\", \"empirical-balanced\"]
  }

Exit codes: 0 success, 1 verification failure, 2 config or input error, 3 I/O error.";

#[derive(Parser)]
#[command(name = "icl-lab", version, about = "Closed forms and numerical checks for in-context learning models", after_long_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluation-loss and optimum tables for the regression setting.
    RegressionSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss, energy-ratio and residual tables for the parity setting.
    ParitySweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification suites and print a pass/fail report.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteFilter,
        #[arg(long)]
        seed: Option<u64>,
        /// Add this value to every entry of the closed-form optimum.
        #[arg(long)]
        perturb: Option<f64>,
        /// Optional config supplying the setting, grids and trial counts.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Draw a line chart from two CSV columns.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        series: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads(configured: Option<usize>) -> Result<usize, HarnessError> {
    let threads = resolve_threads(configured)?;
    // a second initialisation only happens in-process and is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(threads)
}

fn sweep_config(path: &Path, expected: Experiment) -> Result<RunConfig, HarnessError> {
    let cfg = load_config(path)?;
    if cfg.experiment != expected {
        return Err(HarnessError::config(
            "experiment",
            format!("config is for {:?}, command expects {:?}", cfg.experiment, expected),
        ));
    }
    Ok(cfg)
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, HarnessError> {
    flag.or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| HarnessError::config("out_dir", "pass --out or set out_dir in the config"))
}

fn run(cli: Cli) -> Result<u8, HarnessError> {
    match cli.command {
        Command::RegressionSweep { config, out } => {
            let cfg = sweep_config(&config, Experiment::RegressionSweep)?;
            let dir = out_dir(out, &cfg)?;
            let threads = init_threads(cfg.threads)?;
            let manifest = run_regression_sweep(&cfg, &dir, threads)?;
            println!("wrote {} tables to {}", manifest.tables.len(), dir.display());
            Ok(0)
        }
        Command::ParitySweep { config, out } => {
            let cfg = sweep_config(&config, Experiment::ParitySweep)?;
            let dir = out_dir(out, &cfg)?;
            let threads = init_threads(cfg.threads)?;
            let manifest = run_parity_sweep(&cfg, &dir, threads)?;
            for (key, slope) in &manifest.summary {
                println!("{key} = {slope:.4}");
            }
            println!("wrote {} tables to {}", manifest.tables.len(), dir.display());
            Ok(0)
        }
        Command::Verify {
            suite,
            seed,
            perturb,
            config,
            report,
        } => {
            let cfg = match &config {
                Some(path) => load_config(path)?,
                None => RunConfig::new(Experiment::Verify, 0),
            };
            init_threads(cfg.threads)?;
            let opts = VerifyOptions {
                seed: seed.unwrap_or(cfg.seed),
                suite,
                perturb,
                regression: cfg.regression,
                parity: cfg.parity,
            };
            let result = run_verify(&opts)?;
            print!("{}", result.text);
            if let Some(path) = report {
                std::fs::write(&path, &result.text).map_err(|e| HarnessError::io(&path, e))?;
            }
            Ok(if result.passed() { 0 } else { EXIT_VERIFY_FAILED })
        }
        Command::Plot {
            csv,
            x,
            y,
            series,
            out,
        } => {
            emit_plot(&PlotSpec { csv, x, y, series }, &out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
