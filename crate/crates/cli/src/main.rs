use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use relay_csi::channel::ChannelDistribution;
use relay_csi::harness::{self, ExperimentSpec, QuantizerMethod, RunError, SpecError};

const EXIT_SPEC: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "relay-csi",
    version,
    about = "Quantized CSI experiments for DF relay networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a spec file.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to one per core).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a spec file and print any warnings.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Print a quantization vector as JSON.
    Design {
        /// `uniform`, `rayleigh` or a path to a tabulated pdf CSV.
        #[arg(long)]
        dist: String,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: f64,
        #[arg(long)]
        levels: usize,
        #[arg(long, value_enum, default_value_t = Method::General)]
        method: Method,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Uniform,
    General,
    FixedPoint,
    MaxEntropy,
}

impl From<Method> for QuantizerMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Uniform => QuantizerMethod::Uniform,
            Method::General => QuantizerMethod::General,
            Method::FixedPoint => QuantizerMethod::FixedPoint,
            Method::MaxEntropy => QuantizerMethod::MaxEntropy,
        }
    }
}

enum Failure {
    Spec(String),
    Numerical(String),
    Other(anyhow::Error),
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        Failure::Spec(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Spec(e) => e.into(),
            RunError::Numerical(m) => Failure::Numerical(m),
            other => Failure::Other(other.into()),
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Spec(m)) => {
            eprintln!("spec error: {m}");
            ExitCode::from(EXIT_SPEC)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { spec, out, threads } => {
            let spec = ExperimentSpec::from_path(&spec)?;
            let summary = harness::run_with_threads(&spec, &out, threads)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", pretty(&summary.summary)?);
            eprintln!(
                "wrote {} and {}",
                summary.csv_path.display(),
                summary.manifest_path.display()
            );
        }
        Command::Validate { spec } => {
            let spec = ExperimentSpec::from_path(&spec)?;
            let warnings = harness::validate_spec(&spec)?;
            for w in &warnings {
                println!("warning: {w}");
            }
            println!("ok: {} spec is valid", spec.scenario.name());
        }
        Command::Design {
            dist,
            snr_db,
            levels,
            method,
        } => {
            let law = match dist.as_str() {
                "uniform" => ChannelDistribution::uniform(),
                "rayleigh" => ChannelDistribution::rayleigh(),
                path => ChannelDistribution::from_csv_path(path)
                    .map_err(|e| Failure::Spec(format!("--dist: {e}")))?,
            };
            if !snr_db.is_finite() {
                return Err(Failure::Spec("--snr-db must be finite".into()));
            }
            if matches!(method, Method::Uniform) && law.support_max() != 2.0 {
                return Err(Failure::Spec(
                    "--method uniform needs the uniform law on [0, 2]".into(),
                ));
            }
            if levels == 0 || (matches!(method, Method::General) && levels < 2) {
                return Err(Failure::Spec(format!(
                    "--levels {levels} is too small for this method"
                )));
            }
            let q = QuantizerMethod::from(method)
                .design(levels, harness::db_to_linear(snr_db), &law)
                .map_err(|e| Failure::Numerical(e.to_string()))?;
            println!("{}", pretty(&q)?);
        }
    }
    Ok(())
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.into()))
}
