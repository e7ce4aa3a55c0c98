use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimo_mc_harness::experiment::render_ops;
use mimo_mc_harness::{
    count_ops_report, render_csv, run_ccr_experiment, run_ser_experiment, ExperimentConfig,
    HarnessError, RunReport,
};

#[derive(Parser)]
#[command(
    name = "mc",
    about = "Seeded MIMO modulation classification and detection sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correct classification ratio per classifier and SNR.
    Ccr(Overrides),
    /// Symbol error rate of the layer of interest per detector and SNR.
    Ser(Overrides),
    /// Worst-case operation counts against the closed-form bounds.
    Ops(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat `key = value` config file; CLI flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// SNR grid, `start:stop:step` or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Classifiers (ccr, ops) or detectors (ser), comma separated.
    #[arg(long)]
    classifiers: Option<String>,
    #[arg(long)]
    hypotheses: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long, short = 'n')]
    antennas: Option<String>,
    #[arg(long)]
    frames: Option<String>,
    /// Observations per frame.
    #[arg(long, short = 't')]
    observations: Option<String>,
    #[arg(long)]
    slice_const: Option<String>,
    #[arg(long)]
    layer_mt: Option<String>,
    #[arg(long)]
    layer: Option<String>,
    /// column-energy or post-equalization.
    #[arg(long)]
    zf_variance: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// Per-frame JSON-lines debug log.
    #[arg(long)]
    trace: Option<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let pairs = [
            ("snr_db", &self.snr_db),
            ("seed", &self.seed),
            ("classifiers", &self.classifiers),
            ("hypotheses", &self.hypotheses),
            ("rho", &self.rho),
            ("n", &self.antennas),
            ("frames", &self.frames),
            ("t", &self.observations),
            ("slice_const", &self.slice_const),
            ("layer_mt", &self.layer_mt),
            ("layer", &self.layer),
            ("zf_variance", &self.zf_variance),
            ("output", &self.out),
            ("threads", &self.threads),
            ("trace", &self.trace),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<(), HarnessError> {
    match &cfg.output_path {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn finish(cfg: &ExperimentConfig, report: RunReport) -> Result<(), HarnessError> {
    emit(cfg, &render_csv(&report.rows))?;
    if let Some(path) = &cfg.trace_path {
        write_file(path, &report.trace_jsonl())?;
    }
    if report.numerical_failure() {
        return Err(HarnessError::Numerical(format!(
            "{} of {} frames failed to decompose",
            report.failed_frames, report.frames
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Ccr(o) => {
            let cfg = o.resolve()?;
            let report = run_ccr_experiment(&cfg)?;
            finish(&cfg, report)
        }
        Command::Ser(o) => {
            let cfg = o.resolve()?;
            let report = run_ser_experiment(&cfg)?;
            finish(&cfg, report)
        }
        Command::Ops(o) => {
            let cfg = o.resolve()?;
            let rows = count_ops_report(&cfg)?;
            emit(&cfg, &render_ops(&rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
