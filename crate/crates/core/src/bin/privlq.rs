use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use privlq::harness::{
    calibrate_variants, emit, run_experiment, ExperimentConfig, ModeSpec, OutputFormat,
    DEFAULT_OUTPUT,
};
use privlq::Error;

/// Overrides the directory output files are written to.
const OUT_DIR_ENV: &str = "PRIVLQ_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "privlq",
    version,
    about = "Episodic LQ control experiments, with and without privacy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by the config.
    Run(Common),
    /// Run an epsilon sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated epsilons; replaces the config's mode.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long)]
        delta: Option<f64>,
        /// Also run the non-private agent.
        #[arg(long)]
        include_non_private: bool,
    },
    /// Print noise scales and regularization for each variant as JSON.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output file; its directory is replaced by $PRIVLQ_OUT_DIR when set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of replicas; overrides the config.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn output_path(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    let path = out
        .or_else(|| cfg.output.path.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => {
            let name = path
                .file_name()
                .map(PathBuf::from)
                .unwrap_or_else(|| DEFAULT_OUTPUT.into());
            PathBuf::from(dir).join(name)
        }
        _ => path,
    }
}

fn apply_common(cfg: &mut ExperimentConfig, common: &Common) {
    if let Some(seeds) = common.seeds {
        cfg.replicas = seeds;
    }
    if let Some(format) = common.format {
        cfg.output.format = format.into();
    }
}

fn execute(mut cfg: ExperimentConfig, common: Common) -> Result<(), Error> {
    apply_common(&mut cfg, &common);
    cfg.validate()?;
    let path = output_path(&cfg, common.out);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let output = run_experiment(&cfg)?;
    let written = emit(&output, cfg.output.format, &path)?;
    let files: Vec<_> = written.iter().map(|p| p.display().to_string()).collect();
    println!(
        "{}",
        json!({ "config_hash": output.config_hash, "traces": output.traces.len(), "files": files })
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(common) => execute(load(&common.config)?, common),
        Command::Sweep {
            common,
            epsilons,
            delta,
            include_non_private,
        } => {
            let mut cfg = load(&common.config)?;
            match (epsilons, &mut cfg.mode) {
                (
                    Some(eps),
                    ModeSpec::Sweep {
                        epsilons,
                        delta: d,
                        include_non_private: inc,
                        ..
                    },
                ) => {
                    *epsilons = eps;
                    *d = delta.unwrap_or(*d);
                    *inc |= include_non_private;
                }
                (Some(eps), mode) => {
                    let lambda = match mode {
                        ModeSpec::NonPrivate { lambda } => *lambda,
                        _ => privlq::harness::DEFAULT_LAMBDA,
                    };
                    let delta = match (delta, &*mode) {
                        (Some(d), _) => d,
                        (None, ModeSpec::Private { delta, .. }) => *delta,
                        (None, _) => {
                            return Err(Error::Config {
                                field: "mode.delta".into(),
                                reason: "a sweep needs --delta or a delta in the config".into(),
                            })
                        }
                    };
                    *mode = ModeSpec::Sweep {
                        epsilons: eps,
                        delta,
                        include_non_private,
                        lambda,
                    };
                }
                (
                    None,
                    ModeSpec::Sweep {
                        delta: d,
                        include_non_private: inc,
                        ..
                    },
                ) => {
                    *d = delta.unwrap_or(*d);
                    *inc |= include_non_private;
                }
                (None, _) => {
                    return Err(Error::Config {
                        field: "mode.kind".into(),
                        reason: "sweep needs a config with kind \"sweep\" or --epsilons".into(),
                    })
                }
            }
            execute(cfg, common)
        }
        Command::Calibrate { config } => {
            let cfg = load(&config)?;
            let calibration = calibrate_variants(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&calibration)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, body) = match &err {
                Error::Config { field, reason } => (
                    2,
                    json!({ "error": "config", "field": field, "reason": reason }),
                ),
                Error::Json(e) => (
                    2,
                    json!({ "error": "config", "field": null, "reason": e.to_string() }),
                ),
                Error::Io(e) => (1, json!({ "error": "io", "message": e.to_string() })),
                other => (1, json!({ "error": "run", "message": other.to_string() })),
            };
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
