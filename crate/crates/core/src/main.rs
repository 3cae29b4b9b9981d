use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use segrobust::cli::{
    cmd_bland_altman, cmd_compare, cmd_evaluate, cmd_transform, evaluation_exit_code, BlandAltmanOptions, CliError,
    CompareMode, CompareOptions, EvalEncoding, EvaluateOptions, Pairing, TransformMode, TransformOptions,
};
use segrobust::metrics::{Hd95Convention, Hd95Options, PercentileMethod};
use segrobust::scenario::{DropoutConfig, Scenario};
use segrobust::stats::StatConfig;

#[derive(Debug, Parser)]
#[command(name = "segrobust", version, about = "Missing-modality robustness evaluation for brain tumor segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score predictions against references and summarise per target.
    Evaluate(EvaluateArgs),
    /// Paired bootstrap comparison of two records files.
    Compare(CompareArgs),
    /// Volume agreement between prediction and reference.
    BlandAltman(BlandAltmanArgs),
    /// Materialise an inference scenario or training-time FLAIR dropout.
    Transform(TransformArgs),
}

#[derive(Debug, Args)]
struct StatArgs {
    /// Equivalence / non-inferiority margin in DSC percentage points.
    #[arg(long, default_value_t = 1.5)]
    margin_pp: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    #[arg(long, env = "SEGROBUST_SEED", default_value_t = 0)]
    seed: u64,
}

impl StatArgs {
    fn config(&self) -> StatConfig {
        StatConfig { margin_pp: self.margin_pp, alpha: self.alpha, replicates: self.replicates, seed: self.seed }
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "flair-present")]
    scenario: Scenario,
    /// label, region or hd-glio
    #[arg(long, default_value = "region")]
    encoding: EvalEncoding,
    /// Label scheme JSON; BraTS codes when omitted.
    #[arg(long)]
    scheme: Option<PathBuf>,
    #[arg(long, default_value = "max-directed")]
    hd95_convention: Hd95Convention,
    #[arg(long, default_value = "nearest-rank")]
    hd95_percentile: PercentileMethod,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    records_a: PathBuf,
    #[arg(long)]
    records_b: PathBuf,
    #[arg(long, default_value = "equivalence")]
    mode: CompareMode,
    #[arg(long, default_value = "same-labels")]
    pairing: Pairing,
    #[command(flatten)]
    stats: StatArgs,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BlandAltmanArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value = "WT")]
    target: String,
    #[command(flatten)]
    stats: StatArgs,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, conflicts_with = "dropout_rate")]
    scenario: Option<Scenario>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long, env = "SEGROBUST_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Evaluate(a) => {
            let report = cmd_evaluate(&EvaluateOptions {
                manifest: a.manifest,
                scenario: a.scenario,
                encoding: a.encoding,
                scheme: a.scheme,
                hd95: Hd95Options { convention: a.hd95_convention, percentile: a.hd95_percentile },
                jobs: a.jobs,
                out: a.out,
            })?;
            for e in &report.errors {
                eprintln!("warning: patient {}: {}", e.patient_id, e.message);
            }
            Ok(evaluation_exit_code(&report))
        }
        Command::Compare(a) => {
            cmd_compare(&CompareOptions {
                records_a: a.records_a,
                records_b: a.records_b,
                mode: a.mode,
                pairing: a.pairing,
                stats: a.stats.config(),
                jobs: a.jobs,
                out: a.out,
            })?;
            Ok(0)
        }
        Command::BlandAltman(a) => {
            cmd_bland_altman(&BlandAltmanOptions {
                records: a.records,
                target: a.target,
                stats: a.stats.config(),
                jobs: a.jobs,
                out: a.out,
            })?;
            Ok(0)
        }
        Command::Transform(a) => {
            let mode = match (a.scenario, a.dropout_rate) {
                (Some(s), None) => TransformMode::Scenario(s),
                (None, Some(rate)) => TransformMode::Dropout(DropoutConfig::new(rate, a.seed)?),
                _ => return Err(CliError::Config("transform needs exactly one of --scenario or --dropout-rate".into())),
            };
            cmd_transform(&TransformOptions { manifest: a.manifest, mode, jobs: a.jobs, out: a.out })?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code().clamp(0, 255) as u8)
        }
    }
}
