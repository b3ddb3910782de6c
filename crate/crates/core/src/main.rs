use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alrelu::config::{ExperimentConfig, DEFAULT_HOSTILE_BIAS};
use alrelu::eval::{self, CvOptions, StressOptions};
use alrelu::{gradcheck, report};

#[derive(Parser)]
#[command(
    name = "alrelu",
    version,
    about = "Train small networks under relu / lrelu / alrelu and compare them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validated comparison driven by a JSON config; writes
    /// summary.json and table.csv and prints the score table.
    Run {
        config: PathBuf,
        /// Where to write output files (overrides the config).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Suppress progress messages on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Check analytic gradients against central finite differences, both
    /// per-activation and through whole tiny models.
    Gradcheck {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Random points per activation kind.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Train hostilely initialized models and record how many units die
    /// per epoch under each activation; writes stress.csv.
    Stress {
        config: PathBuf,
        /// Where to write output files (overrides the config).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Suppress progress messages on stderr.
        #[arg(long)]
        quiet: bool,
    },
}

/// Exit 2 for usage/config problems, 1 for runtime failures.
struct CliError {
    code: u8,
    message: String,
}

fn config_err(e: alrelu::Error) -> CliError {
    CliError { code: 2, message: e.to_string() }
}

fn runtime_err(e: alrelu::Error) -> CliError {
    CliError { code: 1, message: e.to_string() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output_dir, quiet } => cmd_run(&config, output_dir, quiet),
        Command::Gradcheck { seed, trials } => cmd_gradcheck(seed, trials),
        Command::Stress { config, output_dir, quiet } => cmd_stress(&config, output_dir, quiet),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

macro_rules! progress {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            eprintln!($($arg)*);
        }
    };
}

fn resolve_output_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_run(config_path: &Path, output_dir: Option<PathBuf>, quiet: bool) -> Result<ExitCode, CliError> {
    let config = ExperimentConfig::from_path(config_path).map_err(config_err)?;
    let kinds = config.validate().map_err(config_err)?;

    let dataset = config.dataset.load().map_err(runtime_err)?;
    progress!(
        quiet,
        "dataset {}: {} samples, {} classes, shape {:?}",
        config.dataset.label(),
        dataset.n_samples(),
        dataset.n_classes(),
        dataset.sample_shape()
    );

    let opts = CvOptions {
        k: config.k,
        repeats: config.repeats,
        base_seed: config.seed,
        epochs: config.train.epochs,
        batch_size: config.train.batch_size,
        learning_rate: config.train.learning_rate,
        optimizer: config.train.optimizer,
    };
    progress!(
        quiet,
        "running {} activations x {} repeats x {} folds = {} training runs",
        kinds.len(),
        opts.repeats,
        opts.k,
        kinds.len() * opts.repeats * opts.k
    );

    let preset = config.model;
    let n_classes = dataset.n_classes();
    let summary = eval::run_cv(&dataset, |kind| preset.specs(kind, n_classes), &kinds, &opts)
        .map_err(runtime_err)?;

    let dir = resolve_output_dir(output_dir, &config);
    let label = config.dataset.label();
    let json = report::summary_json(&summary).map_err(runtime_err)?;
    report::write_atomic(&dir.join("summary.json"), json.as_bytes()).map_err(runtime_err)?;
    let table = report::table_csv(&summary, &label);
    report::write_atomic(&dir.join("table.csv"), table.as_bytes()).map_err(runtime_err)?;
    progress!(quiet, "wrote {}", dir.join("summary.json").display());
    progress!(quiet, "wrote {}", dir.join("table.csv").display());

    print!("{}", report::render_table(&summary, &label));
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(seed: u64, trials: usize) -> Result<ExitCode, CliError> {
    if trials == 0 {
        return Err(CliError {
            code: 2,
            message: "nothing to check: trials must be at least 1".into(),
        });
    }
    let mut all_ok = true;

    for check in gradcheck::check_activations(seed, trials).map_err(runtime_err)? {
        let status = if check.passed() { "PASS" } else { "FAIL" };
        all_ok &= check.passed();
        println!(
            "{status} activation {:<7} max rel err {:.3e} over {} points",
            check.name, check.max_rel_err, check.points
        );
    }

    for check in gradcheck::default_model_checks(seed).map_err(runtime_err)? {
        let status = if check.passed() { "PASS" } else { "FAIL" };
        all_ok &= check.passed();
        println!(
            "{status} model {:<12} {} failures, {}/{} params checked ({} skipped at kinks), worst rel {:.3e} abs {:.3e}",
            check.name,
            check.failures,
            check.params_checked,
            check.params_total,
            check.params_skipped,
            check.max_rel_err,
            check.max_abs_err
        );
    }

    if all_ok {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_stress(config_path: &Path, output_dir: Option<PathBuf>, quiet: bool) -> Result<ExitCode, CliError> {
    let config = ExperimentConfig::from_path(config_path).map_err(config_err)?;
    let kinds = config.validate().map_err(config_err)?;

    let dataset = config.dataset.load().map_err(runtime_err)?;
    progress!(
        quiet,
        "dataset {}: {} samples, {} classes",
        config.dataset.label(),
        dataset.n_samples(),
        dataset.n_classes()
    );

    let opts = StressOptions {
        epochs: config.train.epochs,
        batch_size: config.train.batch_size,
        learning_rate: config.train.learning_rate,
        optimizer: config.train.optimizer,
        base_seed: config.seed,
        hostile_bias: config.hostile_bias.unwrap_or(DEFAULT_HOSTILE_BIAS),
    };
    progress!(
        quiet,
        "stress-training {} activations for {} epochs (bias init {})",
        kinds.len(),
        opts.epochs,
        opts.hostile_bias
    );

    let preset = config.model;
    let n_classes = dataset.n_classes();
    let series = eval::run_stress(&dataset, |kind| preset.specs(kind, n_classes), &kinds, &opts)
        .map_err(runtime_err)?;

    let dir = resolve_output_dir(output_dir, &config);
    report::write_atomic(&dir.join("stress.csv"), report::stress_csv(&series).as_bytes())
        .map_err(runtime_err)?;
    progress!(quiet, "wrote {}", dir.join("stress.csv").display());

    print!("{}", report::render_stress(&series));
    Ok(ExitCode::SUCCESS)
}
