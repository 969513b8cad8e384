//! `edgeseg` experiment harness.
//!
//! Exit codes: 0 on success, 1 on argument errors, 2 on I/O errors.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgeseg::experiment::{
    cmd_calibrate, cmd_profile, cmd_segment, cmd_sweep, cmd_systolic, parse_measurements, write_csv,
    write_json, CalibrationGrid, ExperimentConfig, PartitionerChoice,
};
use edgeseg::model::{ModelKind, SweepConfig};
use edgeseg::{Error, SystolicArrayConfig};

#[derive(Parser, Debug)]
#[command(name = "edgeseg", version, about = "Segmented multi-accelerator inference experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// even | threshold=<sec> | exhaustive
    #[arg(long, global = true)]
    partitioner: Option<PartitionerChoice>,
    /// Comma-separated batch sizes, e.g. 1,50.
    #[arg(long, global = true, value_delimiter = ',')]
    batches: Option<Vec<usize>>,
    /// Comma-separated segment counts, e.g. 1,2,3,4.
    #[arg(long, global = true, value_delimiter = ',')]
    segments: Option<Vec<usize>>,
    /// Sweep family used when no config file is given.
    #[arg(long, global = true, default_value = "fc")]
    kind: ModelKind,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single-device sweep; writes sweep.csv.
    Sweep,
    /// Multi-device segmentation sweep; writes segment.csv.
    Segment,
    /// Evaluate every partition of one model; writes profile_<id>_s<s>.json.
    Profile {
        #[arg(long)]
        model: String,
        #[arg(long)]
        s: usize,
    },
    /// Fit the device profile to measured `param,time_s` rows.
    Calibrate {
        #[arg(long)]
        measured: PathBuf,
    },
    /// Run the systolic array on random int8 data: R C CLOCK [M K B].
    Systolic {
        rows: usize,
        cols: usize,
        clock: f64,
        m: Option<usize>,
        k: Option<usize>,
        batch: Option<usize>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::new(SweepConfig::default_for(common.kind)),
    };
    if let Some(p) = common.partitioner {
        config.partitioner = p;
    }
    if let Some(b) = &common.batches {
        config.batches = b.clone();
    }
    if let Some(s) = &common.segments {
        config.segments = s.clone();
    }
    if let Some(out) = &common.out {
        config.output_dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> Result<PathBuf, Error> {
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn systolic(
    seed: u64,
    rows: usize,
    cols: usize,
    clock: f64,
    m: Option<usize>,
    k: Option<usize>,
    batch: Option<usize>,
) -> Result<(), Error> {
    if !(clock.is_finite() && clock >= 1.0 && clock.fract() == 0.0 && clock <= u64::MAX as f64) {
        return Err(Error::Argument(format!("clock must be a positive integer in Hz, got {clock}")));
    }
    let config = SystolicArrayConfig { rows, cols, clock_hz: clock as u64 };
    let report = cmd_systolic(config, m.unwrap_or(rows), k.unwrap_or(cols), batch.unwrap_or(1), seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let common = &cli.common;
    if let Command::Systolic { rows, cols, clock, m, k, batch } = cli.command {
        return systolic(common.seed, rows, cols, clock, m, k, batch);
    }
    let config = load_config(common)?;
    match cli.command {
        Command::Sweep => {
            let rows = cmd_sweep(&config)?;
            let path = out_dir(&config)?.join("sweep.csv");
            write_csv(&path, &rows)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Segment => {
            let rows = cmd_segment(&config)?;
            let path = out_dir(&config)?.join("segment.csv");
            write_csv(&path, &rows)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Profile { model, s } => {
            let report = cmd_profile(&config, &model, s)?;
            let path = out_dir(&config)?.join(format!("profile_{model}_s{s}.json"));
            write_json(&path, &report)?;
            eprintln!("wrote {} entries to {}", report.entries.len(), path.display());
        }
        Command::Calibrate { measured } => {
            let rows = parse_measurements(open(&measured)?)?;
            let report = cmd_calibrate(&rows, &config, &CalibrationGrid::default())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Systolic { .. } => unreachable!(),
    }
    Ok(())
}

fn open(path: &Path) -> Result<File, Error> {
    Ok(File::open(path)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
