use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use gridloss_core::calibration::write_factors_csv;
use gridloss_core::io::{load_config, load_series, DatasetError, LoadedSeries};
use gridloss_core::study::{
    calibrate_series, calibration_quality, run_hour, run_study, write_report, QualityOptions, ScenarioId, StudyConfig, StudyError,
};
use log::warn;

/// Relative output paths are resolved under this directory when it is set.
const OUT_DIR_ENV: &str = "GRIDLOSS_OUT_DIR";

#[derive(Parser)]
#[command(name = "gridloss", version, about = "Zonal market clearing with implicit transmission-loss factors")]
struct Cli {
    /// Study configuration (TOML); command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset against the schema and the instance invariants.
    Validate { manifest: PathBuf },
    /// Calibrate linear and piecewise loss factors and write them as CSV.
    Calibrate {
        manifest: PathBuf,
        #[arg(long)]
        segment_mw: Option<f64>,
        #[arg(long, default_value = "factors.csv")]
        out: PathBuf,
    },
    /// Clear a single hour under one scenario and write the result as JSON.
    Clear {
        manifest: PathBuf,
        #[arg(long)]
        hour: usize,
        #[arg(long, default_value = "S3")]
        scenario: ScenarioId,
        #[arg(long)]
        segment_mw: Option<f64>,
        #[arg(long, default_value = "result.json")]
        out: PathBuf,
    },
    /// Run the scenario comparison over every hour of the dataset.
    Study {
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<ScenarioId>>,
        #[arg(long)]
        reference: Option<ScenarioId>,
        #[arg(long)]
        segment_mw: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "study")]
        out: PathBuf,
    },
    /// Approximation error and per-hour solve time for each factor granularity.
    Rmse {
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "600,300,150,60,5")]
        segment_mw: Vec<f64>,
        /// Time at most this many evenly spaced hours.
        #[arg(long)]
        hours: Option<usize>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status 1: the input is invalid or unusable. Exit status 2: a solve failed.
enum Failure {
    Invalid(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::Invalid(e.into())
    }
}

fn study_failure(e: StudyError) -> Failure {
    match e {
        StudyError::Solver { .. } | StudyError::Pool(_) => Failure::Solver(e.into()),
        e => Failure::Invalid(e.into()),
    }
}

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load(manifest: &Path) -> anyhow::Result<LoadedSeries> {
    let series = load_series(manifest)?;
    for w in &series.warnings {
        warn!("{w}");
    }
    for (hour, rep) in &series.invalid_hours {
        warn!("hour {hour} is invalid and will be skipped ({} violations)", rep.violations.len());
    }
    Ok(series)
}

fn validate(manifest: &Path) -> Result<(), Failure> {
    let series = load_series(manifest)?;
    for w in &series.warnings {
        println!("warning: {w}");
    }
    if let Some(agg) = &series.aggregation {
        println!("aggregated nodal data: {agg:?}");
    }
    for (hour, rep) in &series.invalid_hours {
        for v in &rep.violations {
            println!("hour {hour}: {v}");
        }
    }
    println!("{} hours, {} invalid", series.instances.len(), series.invalid_hours.len());
    if series.invalid_hours.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invalid(anyhow!("{} invalid hours", series.invalid_hours.len())))
    }
}

fn calibrate(manifest: &Path, config: &StudyConfig, out: &Path) -> Result<(), Failure> {
    let series = load(manifest)?;
    let (_, table) = calibrate_series(&series.instances, &series.flow_history, config.segment_mw, config).map_err(study_failure)?;
    let path = out_path(out);
    write_factors_csv(create(&path)?, &table).map_err(anyhow::Error::from)?;
    println!("{} lines calibrated at {} MW segments -> {}", table.len(), config.segment_mw, path.display());
    Ok(())
}

fn clear_hour(manifest: &Path, config: &StudyConfig, hour: usize, scenario: ScenarioId, out: &Path) -> Result<(), Failure> {
    let series = load(manifest)?;
    if !series.instances.iter().any(|i| i.timestamp == hour) {
        return Err(anyhow!("hour {hour} is not in the dataset").into());
    }
    if let Some((_, rep)) = series.invalid_hours.iter().find(|(h, _)| *h == hour) {
        let list: Vec<String> = rep.violations.iter().map(|v| v.to_string()).collect();
        return Err(anyhow!("hour {hour} is invalid: {}", list.join("; ")).into());
    }
    let (calibrated, _) = calibrate_series(&series.instances, &series.flow_history, config.segment_mw, config).map_err(study_failure)?;
    let inst = calibrated.iter().find(|i| i.timestamp == hour).expect("calibration keeps every hour");
    let res = run_hour(inst, scenario, &config.exclude_lines)
        .map_err(|e| study_failure(StudyError::Solver { hour, source: e }))?;
    let path = out_path(out);
    serde_json::to_writer_pretty(create(&path)?, &res).map_err(anyhow::Error::from)?;
    println!(
        "hour {hour} {}: objective {:.2} EUR, HVDC loss {:.3} MW, AC loss {:.3} MW -> {}",
        scenario.code(),
        res.dispatch.objective,
        res.hvdc_loss_mw,
        res.ac_loss_mw,
        path.display()
    );
    for (zone, price) in &res.dispatch.zonal_price {
        println!("  {zone:<8} {price:>10.4} EUR/MWh");
    }
    Ok(())
}

fn study(manifest: &Path, config: &StudyConfig, out: &Path) -> Result<(), Failure> {
    let series = load(manifest)?;
    let (report, results) = run_study(&series.instances, &series.flow_history, config).map_err(study_failure)?;
    let dir = out_path(out);
    write_report(&dir, &report, &results, config.gzip_hourly).map_err(study_failure)?;
    println!("{:<4} {:>6} {:>12} {:>12} {:>14} {:>12}", "", "hours", "HVDC GWh", "AC GWh", "cost EUR", "saving MEUR");
    for s in &report.scenarios {
        println!(
            "{:<4} {:>6} {:>12.4} {:>12.4} {:>14.0} {:>12.4}",
            s.scenario.code(),
            s.hours_solved,
            s.hvdc_loss_gwh,
            s.ac_loss_gwh,
            s.system_cost_eur,
            s.cost_saving_meur
        );
    }
    println!("report written to {}", dir.display());
    Ok(())
}

fn rmse(manifest: &Path, config: &StudyConfig, segments: &[f64], opts: &QualityOptions, out: Option<&Path>) -> Result<(), Failure> {
    let series = load(manifest)?;
    let rows = calibration_quality(&series.instances, &series.flow_history, segments, config, opts).map_err(study_failure)?;
    let label = |s: Option<f64>| s.map_or("linear".to_string(), |s| format!("{s} MW"));
    println!("{:<10} {:>12} {:>14} {:>6}", "factors", "RMSE MW", "s per hour", "hours");
    for r in &rows {
        println!("{:<10} {:>12.6} {:>14.6} {:>6}", label(r.segment_mw), r.mean_rmse_mw, r.solve_secs_per_hour, r.hours_timed);
    }
    if let Some(out) = out {
        use std::io::Write;
        let path = out_path(out);
        let mut w = create(&path)?;
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(w, "factors,segment_mw,mean_rmse_mw,solve_secs_per_hour,hours_timed")?;
            for r in &rows {
                let seg = r.segment_mw.map_or(String::new(), |s| s.to_string());
                writeln!(w, "{},{seg},{},{},{}", label(r.segment_mw), r.mean_rmse_mw, r.solve_secs_per_hour, r.hours_timed)?;
            }
            w.flush()
        };
        write(&mut w).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => StudyConfig::default(),
    };
    let set_segment = |config: &mut StudyConfig, s: Option<f64>| -> Result<(), Failure> {
        if let Some(s) = s {
            if !(s > 0.0) {
                return Err(anyhow!("--segment-mw must be positive, got {s}").into());
            }
            config.segment_mw = s;
        }
        Ok(())
    };
    match cli.command {
        Command::Validate { manifest } => validate(&manifest),
        Command::Calibrate { manifest, segment_mw, out } => {
            set_segment(&mut config, segment_mw)?;
            calibrate(&manifest, &config, &out)
        }
        Command::Clear { manifest, hour, scenario, segment_mw, out } => {
            set_segment(&mut config, segment_mw)?;
            clear_hour(&manifest, &config, hour, scenario, &out)
        }
        Command::Study { manifest, scenarios, reference, segment_mw, workers, out } => {
            set_segment(&mut config, segment_mw)?;
            if let Some(s) = scenarios {
                config.scenarios = s;
            }
            if let Some(r) = reference {
                config.reference = r;
            }
            if let Some(w) = workers {
                config.workers = w;
            }
            study(&manifest, &config, &out)
        }
        Command::Rmse { manifest, segment_mw, hours, repeats, out } => {
            if let Some(s) = segment_mw.iter().find(|&&s| !(s > 0.0)) {
                return Err(anyhow!("segment lengths must be positive, got {s}").into());
            }
            let opts = QualityOptions { max_hours: hours, repeats };
            rmse(&manifest, &config, &segment_mw, &opts, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(2)
        }
    }
}
