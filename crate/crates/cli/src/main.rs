//! `bandsel` command-line tool.
//!
//! Every pipeline stage writes a JSON checkpoint into the output directory,
//! so a later command can resume with `--stage` instead of starting over.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bandsel_core::artifacts::{emit_artifacts, write_atomic, REPORT_JSON};
use bandsel_core::dataset::{write_labels, LabeledDataset};
use bandsel_core::error::StageContext;
use bandsel_core::pipeline::{evaluate_report, prepare, select_bands, PipelineConfig, Report};
use bandsel_core::synthgen::{generate_sensors, SynthConfig};
use bandsel_core::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

const PREPARED_JSON: &str = "prepared.json";
const SELECTION_JSON: &str = "selection.json";
const CONFIG_JSON: &str = "config.json";

#[derive(Parser, Debug)]
#[command(name = "bandsel", version, about = "Select multispectral bands from hyperspectral leaf spectra")]
struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Resume from this stage using checkpoints of earlier stages in the
    /// output directory.
    #[arg(long, global = true, value_enum)]
    stage: Option<Stage>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load or generate spectra, merge sensors, drop outliers and split by
    /// nitrogen level.
    Prepare,
    /// Run the window and band selection stages.
    Select,
    /// Compare selection methods and write every report artifact.
    Evaluate,
    /// Write a synthetic dataset as spectra and label CSV files.
    Synth,
    /// Rewrite the artifacts of an existing report.json.
    Report,
    /// Print the default configuration, or write it with --out.
    InitConfig,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Prepare,
    Select,
    Evaluate,
}

#[derive(Serialize, Deserialize)]
struct PreparedCheckpoint {
    n_wavelengths: usize,
    removed_outliers: Vec<String>,
    dataset: LabeledDataset,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BANDSEL_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("cannot set up {n} threads: {e}")))?;
    }
    match cli.command {
        Command::InitConfig => init_config(cli),
        Command::Synth => synth(cli),
        Command::Report => {
            let config = load_config(cli)?;
            let report: Report = read_json(&config.output_dir.join(REPORT_JSON))?;
            emit(&report, &config.output_dir)
        }
        Command::Prepare => run_stages(cli, Stage::Prepare),
        Command::Select => run_stages(cli, Stage::Select),
        Command::Evaluate => run_stages(cli, Stage::Evaluate),
    }
}

fn init_config(cli: &Cli) -> Result<(), Error> {
    let mut config = PipelineConfig::default();
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let text = serde_json::to_string_pretty(&config)? + "\n";
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            let path = dir.join(CONFIG_JSON);
            write_atomic(&path, text.as_bytes())?;
            println!("{}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn synth(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    let mut synth = config.input.synthetic.clone().unwrap_or_else(SynthConfig::default);
    if let Some(seed) = cli.seed {
        synth.seed = seed;
    }
    let (tables, labels) = generate_sensors(&synth)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    for (i, table) in tables.iter().enumerate() {
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        let path = dir.join(format!("spectra_{}.csv", i + 1));
        write_atomic(&path, &buf)?;
        println!("{}", path.display());
    }
    let mut buf = Vec::new();
    write_labels(&labels, &mut buf)?;
    let path = dir.join("labels.csv");
    write_atomic(&path, &buf)?;
    println!("{}", path.display());
    Ok(())
}

/// Runs stages from `--stage` (or the beginning) through `target`.
fn run_stages(cli: &Cli, target: Stage) -> Result<(), Error> {
    let config = load_config(cli)?;
    let start = cli.stage.unwrap_or(Stage::Prepare);
    if start > target {
        return Err(Error::Validation(format!(
            "cannot resume at stage {start:?} for a command that stops at {target:?}"
        )));
    }
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    write_atomic(&dir.join(CONFIG_JSON), (serde_json::to_string_pretty(&config)? + "\n").as_bytes())?;

    let prepared: PreparedCheckpoint = if start == Stage::Prepare {
        let p = prepare(&config).stage("data preparation")?;
        let checkpoint = PreparedCheckpoint {
            n_wavelengths: p.spectra.n_wavelengths(),
            removed_outliers: p.removed_outliers,
            dataset: p.dataset,
        };
        write_json(&dir.join(PREPARED_JSON), &checkpoint)?;
        checkpoint
    } else {
        read_json(&dir.join(PREPARED_JSON))?
    };
    if target == Stage::Prepare {
        let ds = &prepared.dataset;
        println!(
            "{} wavelengths, {} extreme and {} inner samples, {} outliers removed",
            prepared.n_wavelengths,
            ds.y_extreme.len(),
            ds.y_inner.len(),
            prepared.removed_outliers.len()
        );
        return Ok(());
    }

    let selection: Report = if start <= Stage::Select {
        let mut report = select_bands(&prepared.dataset, &config)?;
        report.data.n_outliers = prepared.removed_outliers.len();
        write_json(&dir.join(SELECTION_JSON), &report)?;
        if let Some(corr) = &report.correlation {
            let mut buf = Vec::new();
            corr.write_csv(&mut buf)?;
            write_atomic(&dir.join(bandsel_core::artifacts::CORRELATION_CSV), &buf)?;
        }
        report
    } else {
        read_json(&dir.join(SELECTION_JSON))?
    };
    if target == Stage::Select {
        print_bands(&selection);
        return Ok(());
    }

    let report = evaluate_report(&prepared.dataset, selection, &config)?;
    emit(&report, dir)?;
    print_bands(&report);
    for row in &report.comparison {
        println!(
            "{:<30} {:>4}  F1 {:.3} ± {:.3}  moderate {:.3}",
            row.method, row.subset_size, row.f1_mean_extreme, row.f1_std_extreme, row.f1_moderate
        );
    }
    Ok(())
}

fn emit(report: &Report, dir: &Path) -> Result<(), Error> {
    for path in emit_artifacts(report, dir)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn print_bands(report: &Report) {
    for b in &report.selected_bands {
        println!(
            "band {} nm  range {} - {} nm  width {} nm",
            b.name(),
            b.lo_nm,
            b.hi_nm,
            b.nominal_width_nm
        );
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    write_atomic(path, serde_json::to_string(value)?.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        row: Some(e.line()),
        column: None,
        message: e.to_string(),
    })
}
