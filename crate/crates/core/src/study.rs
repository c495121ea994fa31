//! The five-scenario comparison over an hourly series.
//!
//! * S1: no loss factors; every loss line gets a two-pass fixed estimate.
//! * S2/S3: linear/piecewise factors on HVDC lines, AC lines estimated as in S1.
//! * S4/S5: linear/piecewise factors on AC and HVDC lines.
//!
//! Losses of every scenario are then recomputed ex post from the cleared
//! flows with the quadratic curves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use gridloss_milp::{BranchAndBound, Status};
use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{self, loss_at, FlowHistory};
use crate::formulation::{self, clear_with, DispatchResult, FormulationError, FormulationSpec, Variant};
use crate::market::{LineKind, MarketInstance};

/// Tolerance for calling two first/second-pass flows identical.
const FIXED_POINT_TOL: f64 = 1e-6;
/// Price gap below which an hour counts as having equal endpoint prices.
const ZERO_PRICE_DIFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "S1")]
    S1NoLF,
    #[serde(rename = "S2")]
    S2LinearHvdc,
    #[serde(rename = "S3")]
    S3PiecewiseHvdc,
    #[serde(rename = "S4")]
    S4LinearAcHvdc,
    #[serde(rename = "S5")]
    S5PiecewiseAcHvdc,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::S1NoLF,
        ScenarioId::S2LinearHvdc,
        ScenarioId::S3PiecewiseHvdc,
        ScenarioId::S4LinearAcHvdc,
        ScenarioId::S5PiecewiseAcHvdc,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ScenarioId::S1NoLF => "S1",
            ScenarioId::S2LinearHvdc => "S2",
            ScenarioId::S3PiecewiseHvdc => "S3",
            ScenarioId::S4LinearAcHvdc => "S4",
            ScenarioId::S5PiecewiseAcHvdc => "S5",
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            ScenarioId::S1NoLF => Variant::FixedLosses,
            ScenarioId::S2LinearHvdc | ScenarioId::S4LinearAcHvdc => Variant::LinearLF,
            ScenarioId::S3PiecewiseHvdc | ScenarioId::S5PiecewiseAcHvdc => Variant::PiecewiseLF,
        }
    }

    /// Line kinds that carry loss factors in this scenario.
    pub fn factor_kinds(self) -> &'static [LineKind] {
        match self {
            ScenarioId::S1NoLF => &[],
            ScenarioId::S2LinearHvdc | ScenarioId::S3PiecewiseHvdc => &[LineKind::Hvdc],
            ScenarioId::S4LinearAcHvdc | ScenarioId::S5PiecewiseAcHvdc => &[LineKind::Hvdc, LineKind::Ac],
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let code = s.trim().split('_').next().unwrap_or("").to_ascii_uppercase();
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.code() == code)
            .ok_or_else(|| format!("unknown scenario {s:?} (expected S1..S5)"))
    }
}

fn default_scenarios() -> Vec<ScenarioId> {
    ScenarioId::ALL.to_vec()
}

fn default_segment_mw() -> f64 {
    60.0
}

fn default_workers() -> usize {
    1
}

fn default_reference() -> ScenarioId {
    ScenarioId::S1NoLF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioId>,
    #[serde(default = "default_segment_mw")]
    pub segment_mw: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_reference")]
    pub reference: ScenarioId,
    /// Lines whose flows are fixed exchanges: never given loss factors or
    /// estimates and left out of the loss accounting.
    #[serde(default)]
    pub exclude_lines: BTreeSet<String>,
    /// Write the hourly table gzipped.
    #[serde(default)]
    pub gzip_hourly: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            scenarios: default_scenarios(),
            segment_mw: default_segment_mw(),
            workers: default_workers(),
            reference: default_reference(),
            exclude_lines: BTreeSet::new(),
            gzip_hourly: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("line {line} has no {needs} loss factors; calibrate before running {scenario}")]
    CalibrationMissing { line: String, needs: &'static str, scenario: ScenarioId },
    #[error("scenario results cover different hours")]
    SeriesMismatch,
    #[error("reference scenario {0} was not run")]
    MissingReference(ScenarioId),
    #[error("hour {hour}: {source}")]
    Solver { hour: usize, source: FormulationError },
    #[error(transparent)]
    Calibration(#[from] calibration::CalibrationError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing report: {0}")]
    Serialize(String),
}

/// Lines of an instance that take part in loss modelling.
fn loss_lines<'a>(inst: &'a MarketInstance, exclude: &'a BTreeSet<String>) -> impl Iterator<Item = &'a crate::market::Interconnector> {
    inst.interconnectors.iter().filter(move |l| l.loss_model.is_some() && !exclude.contains(&l.id))
}

/// Two-pass estimate: clear without losses and evaluate the quadratic
/// curves at the resulting flows. Returns the estimates and the first-pass
/// dispatch.
pub fn estimate_fixed_losses_with_dispatch(
    inst: &MarketInstance,
    lines: &BTreeSet<String>,
) -> Result<(BTreeMap<String, f64>, DispatchResult), FormulationError> {
    let first = clear_with(&BranchAndBound::default(), inst, &FormulationSpec::lossless())?;
    let mut est = BTreeMap::new();
    for id in lines {
        let line = inst.line(id).ok_or_else(|| FormulationError::UnknownLine(id.clone()))?;
        let model = line.loss_model.as_ref().ok_or(FormulationError::UncalibratedLine {
            line: id.clone(),
            needs: "quadratic",
        })?;
        est.insert(id.clone(), loss_at(model, first.flow[id]));
    }
    Ok((est, first))
}

pub fn estimate_fixed_losses(
    inst: &MarketInstance,
    lines: &BTreeSet<String>,
) -> Result<BTreeMap<String, f64>, FormulationError> {
    estimate_fixed_losses_with_dispatch(inst, lines).map(|(est, _)| est)
}

/// Formulation a scenario uses for one hour, including any two-pass estimates.
pub fn scenario_spec(
    inst: &MarketInstance,
    id: ScenarioId,
    exclude: &BTreeSet<String>,
) -> Result<(FormulationSpec, Option<DispatchResult>), FormulationError> {
    let kinds = id.factor_kinds();
    let mut factor_lines = BTreeSet::new();
    let mut estimated = BTreeSet::new();
    for l in loss_lines(inst, exclude) {
        if kinds.contains(&l.kind) {
            factor_lines.insert(l.id.clone());
        } else {
            estimated.insert(l.id.clone());
        }
    }
    let (estimates, first) = if estimated.is_empty() {
        (BTreeMap::new(), None)
    } else {
        let (e, d) = estimate_fixed_losses_with_dispatch(inst, &estimated)?;
        (e, Some(d))
    };
    let spec = match id.variant() {
        Variant::FixedLosses => FormulationSpec::fixed_losses(estimates),
        v => FormulationSpec::with_factors(v, factor_lines).and_fixed_losses(estimates),
    };
    Ok((spec, first))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourResult {
    pub timestamp: usize,
    pub dispatch: DispatchResult,
    /// Quadratic loss at the cleared flow, per accounted line (MW).
    pub ex_post_loss: BTreeMap<String, f64>,
    pub hvdc_loss_mw: f64,
    pub ac_loss_mw: f64,
    /// For two-pass scenarios: whether the second pass reproduced the
    /// first-pass flows on the estimated lines.
    pub fixed_point: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedHour {
    pub timestamp: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineInfo {
    pub id: String,
    pub kind: LineKind,
    pub from_zone: String,
    pub to_zone: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: ScenarioId,
    /// Solved hours sorted by timestamp.
    pub hours: Vec<HourResult>,
    pub skipped: Vec<SkippedHour>,
    /// Accounted lines, taken from the first hour of the series.
    pub lines: Vec<LineInfo>,
}

impl ScenarioResult {
    pub fn hvdc_loss_gwh(&self) -> f64 {
        self.hours.iter().map(|h| h.hvdc_loss_mw).sum::<f64>() / 1000.0
    }

    pub fn ac_loss_gwh(&self) -> f64 {
        self.hours.iter().map(|h| h.ac_loss_mw).sum::<f64>() / 1000.0
    }

    pub fn system_cost_eur(&self) -> f64 {
        self.hours.iter().map(|h| h.dispatch.objective).sum()
    }

    fn timestamps(&self) -> BTreeSet<usize> {
        self.hours.iter().map(|h| h.timestamp).chain(self.skipped.iter().map(|s| s.timestamp)).collect()
    }
}

fn is_skippable(e: &FormulationError) -> bool {
    matches!(e, FormulationError::InvalidInstance(_) | FormulationError::StatusNotOptimal(Status::Infeasible))
}

/// Clears one hour under a scenario and accounts its ex-post losses.
pub fn run_hour(inst: &MarketInstance, id: ScenarioId, exclude: &BTreeSet<String>) -> Result<HourResult, FormulationError> {
    let solver = BranchAndBound::default();
    let (spec, first) = scenario_spec(inst, id, exclude)?;
    let dispatch = clear_with(&solver, inst, &spec)?;
    let fixed_point = first.map(|first| {
        spec.fixed_losses.keys().all(|l| (first.flow[l] - dispatch.flow[l]).abs() <= FIXED_POINT_TOL)
    });
    let mut ex_post = BTreeMap::new();
    let (mut hvdc, mut ac) = (0.0, 0.0);
    for l in loss_lines(inst, exclude) {
        let p = loss_at(l.loss_model.as_ref().expect("filtered"), dispatch.flow[&l.id]);
        match l.kind {
            LineKind::Hvdc => hvdc += p,
            LineKind::Ac => ac += p,
        }
        ex_post.insert(l.id.clone(), p);
    }
    if fixed_point == Some(false) {
        debug!("hour {}: {id} second-pass flows differ from the first pass", inst.timestamp);
    }
    Ok(HourResult { timestamp: inst.timestamp, dispatch, ex_post_loss: ex_post, hvdc_loss_mw: hvdc, ac_loss_mw: ac, fixed_point })
}

fn check_calibrated(series: &[MarketInstance], id: ScenarioId, exclude: &BTreeSet<String>) -> Result<(), StudyError> {
    let kinds = id.factor_kinds();
    for inst in series {
        for l in loss_lines(inst, exclude).filter(|l| kinds.contains(&l.kind)) {
            let m = l.loss_model.as_ref().expect("filtered");
            let (ok, needs) = match id.variant() {
                Variant::PiecewiseLF => (m.piecewise.is_some(), "piecewise"),
                _ => (m.linear.is_some(), "linear"),
            };
            if !ok {
                return Err(StudyError::CalibrationMissing { line: l.id.clone(), needs, scenario: id });
            }
        }
    }
    Ok(())
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, StudyError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| StudyError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs a scenario over the series on `config.workers` threads. Infeasible
/// hours are skipped and listed; solver failures abort the run.
pub fn run_scenario(series: &[MarketInstance], id: ScenarioId, config: &StudyConfig) -> Result<ScenarioResult, StudyError> {
    check_calibrated(series, id, &config.exclude_lines)?;
    let outcomes: Vec<(usize, Result<HourResult, FormulationError>)> = with_pool(config.workers, || {
        series.par_iter().map(|inst| (inst.timestamp, run_hour(inst, id, &config.exclude_lines))).collect()
    })?;

    let mut hours = Vec::new();
    let mut skipped = Vec::new();
    for (ts, out) in outcomes {
        match out {
            Ok(h) => hours.push(h),
            Err(e) if is_skippable(&e) => {
                warn!("{id}: skipping hour {ts}: {e}");
                skipped.push(SkippedHour { timestamp: ts, reason: e.to_string() });
            }
            Err(e) => return Err(StudyError::Solver { hour: ts, source: e }),
        }
    }
    hours.sort_by_key(|h| h.timestamp);
    skipped.sort_by_key(|s| s.timestamp);
    let lines = series
        .iter()
        .min_by_key(|i| i.timestamp)
        .map(|inst| {
            loss_lines(inst, &config.exclude_lines)
                .map(|l| LineInfo { id: l.id.clone(), kind: l.kind, from_zone: l.from_zone.clone(), to_zone: l.to_zone.clone() })
                .collect()
        })
        .unwrap_or_default();
    info!("{id}: {} hours solved, {} skipped", hours.len(), skipped.len());
    Ok(ScenarioResult { scenario: id, hours, skipped, lines })
}

/// Attaches linear and piecewise factors to every loss line of the series.
///
/// The linear median comes from `history` when given for a line, otherwise
/// from the lossless clearing flows of the series itself. A line that never
/// carries flow falls back to half its rating.
pub fn calibrate_series(
    series: &[MarketInstance],
    history: &[FlowHistory],
    segment_mw: f64,
    config: &StudyConfig,
) -> Result<(Vec<MarketInstance>, Vec<calibration::LineFactors>), StudyError> {
    let Some(first) = series.first() else { return Ok((Vec::new(), Vec::new())) };
    let lines: Vec<_> = loss_lines(first, &config.exclude_lines).map(|l| l.id.clone()).collect();
    let mut samples: BTreeMap<String, Vec<f64>> = history.iter().map(|h| (h.line.clone(), h.samples.clone())).collect();

    if lines.iter().any(|l| !samples.contains_key(l)) {
        info!("no flow history for some lines; deriving it from lossless clearing");
        let flows: Vec<Option<DispatchResult>> = with_pool(config.workers, || {
            series.par_iter().map(|inst| formulation::clear(inst, &FormulationSpec::lossless()).ok()).collect()
        })?;
        for l in &lines {
            samples
                .entry(l.clone())
                .or_insert_with(|| flows.iter().flatten().filter_map(|d| d.flow.get(l).copied()).collect());
        }
    }

    let mut table = Vec::new();
    let mut models = BTreeMap::new();
    for id in &lines {
        let line = first.line(id).expect("taken from this instance");
        let mut model = line.loss_model.clone().expect("loss line");
        let hist = FlowHistory { line: id.clone(), samples: samples[id].clone() };
        let lin = match calibration::linear_factors(&model, &hist) {
            Ok(f) => f,
            Err(calibration::CalibrationError::NoNonzeroFlows(_)) => {
                warn!("{id} never carries flow; using half its rating as median");
                calibration::linear_factors_at_median(&model, 0.5 * line.rated_capacity)
            }
            Err(e) => return Err(e.into()),
        };
        let segs = calibration::piecewise_factors(&model, line.rated_capacity, segment_mw)?;
        model.linear = Some(lin);
        model.piecewise = Some(segs.clone());
        table.push(calibration::LineFactors {
            line: id.clone(),
            rated_capacity: line.rated_capacity,
            linear: Some(lin),
            piecewise: Some(segs),
        });
        models.insert(id.clone(), model);
    }

    let calibrated = series
        .iter()
        .map(|inst| {
            let mut inst = inst.clone();
            for l in &mut inst.interconnectors {
                if let Some(m) = models.get(&l.id) {
                    l.loss_model = Some(m.clone());
                }
            }
            inst
        })
        .collect();
    Ok((calibrated, table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: ScenarioId,
    pub hours_solved: usize,
    pub hours_skipped: usize,
    pub hvdc_loss_gwh: f64,
    pub ac_loss_gwh: f64,
    pub total_loss_gwh: f64,
    pub system_cost_eur: f64,
    pub delta_hvdc_gwh: f64,
    pub delta_ac_gwh: f64,
    pub delta_total_gwh: f64,
    pub delta_hvdc_pct: f64,
    pub delta_ac_pct: f64,
    pub delta_total_pct: f64,
    /// Reference cost minus scenario cost, in MEUR; positive is a saving.
    pub cost_saving_meur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRow {
    pub scenario: ScenarioId,
    pub hour: usize,
    pub objective_eur: f64,
    pub hvdc_loss_mw: f64,
    pub ac_loss_mw: f64,
    pub fixed_point: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub reference: ScenarioId,
    pub scenarios: Vec<ScenarioSummary>,
    pub hourly: Vec<HourlyRow>,
}

fn pct(delta: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * delta / base
    }
}

pub fn compare_scenarios(results: &[ScenarioResult], reference: ScenarioId) -> Result<StudyReport, StudyError> {
    let base = results.iter().find(|r| r.scenario == reference).ok_or(StudyError::MissingReference(reference))?;
    let hours = base.timestamps();
    if results.iter().any(|r| r.timestamps() != hours) {
        return Err(StudyError::SeriesMismatch);
    }
    let (b_hvdc, b_ac, b_cost) = (base.hvdc_loss_gwh(), base.ac_loss_gwh(), base.system_cost_eur());
    let mut scenarios = Vec::new();
    let mut hourly = Vec::new();
    for r in results {
        let (hvdc, ac, cost) = (r.hvdc_loss_gwh(), r.ac_loss_gwh(), r.system_cost_eur());
        let (dh, da) = (hvdc - b_hvdc, ac - b_ac);
        scenarios.push(ScenarioSummary {
            scenario: r.scenario,
            hours_solved: r.hours.len(),
            hours_skipped: r.skipped.len(),
            hvdc_loss_gwh: hvdc,
            ac_loss_gwh: ac,
            total_loss_gwh: hvdc + ac,
            system_cost_eur: cost,
            delta_hvdc_gwh: dh,
            delta_ac_gwh: da,
            delta_total_gwh: dh + da,
            delta_hvdc_pct: pct(dh, b_hvdc),
            delta_ac_pct: pct(da, b_ac),
            delta_total_pct: pct(dh + da, b_hvdc + b_ac),
            cost_saving_meur: (b_cost - cost) / 1e6,
        });
        hourly.extend(r.hours.iter().map(|h| HourlyRow {
            scenario: r.scenario,
            hour: h.timestamp,
            objective_eur: h.dispatch.objective,
            hvdc_loss_mw: h.hvdc_loss_mw,
            ac_loss_mw: h.ac_loss_mw,
            fixed_point: h.fixed_point,
        }));
    }
    Ok(StudyReport { reference, scenarios, hourly })
}

/// Loss cost a line's owners bear in hours without a price difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineLossCost {
    pub line: String,
    pub from_zone: String,
    pub to_zone: String,
    pub hours: usize,
    pub zero_diff_hours: usize,
    pub loss_cost_eur: f64,
    pub from_share_eur: f64,
    pub to_share_eur: f64,
}

impl LineLossCost {
    pub fn zero_diff_share(&self) -> f64 {
        if self.hours == 0 {
            0.0
        } else {
            self.zero_diff_hours as f64 / self.hours as f64
        }
    }
}

/// In hours where a line's endpoint prices coincide the market pays nothing
/// for its losses; the owners buy them at the mean endpoint price and split
/// the bill evenly.
pub fn tso_loss_cost_accounting(result: &ScenarioResult) -> Vec<LineLossCost> {
    result
        .lines
        .iter()
        .map(|l| {
            let mut c = LineLossCost {
                line: l.id.clone(),
                from_zone: l.from_zone.clone(),
                to_zone: l.to_zone.clone(),
                hours: 0,
                zero_diff_hours: 0,
                loss_cost_eur: 0.0,
                from_share_eur: 0.0,
                to_share_eur: 0.0,
            };
            for h in &result.hours {
                let Some(&loss) = h.ex_post_loss.get(&l.id) else { continue };
                c.hours += 1;
                let pf = h.dispatch.zonal_price[&l.from_zone];
                let pt = h.dispatch.zonal_price[&l.to_zone];
                if (pf - pt).abs() < ZERO_PRICE_DIFF {
                    c.zero_diff_hours += 1;
                    c.loss_cost_eur += loss * 0.5 * (pf + pt);
                }
            }
            c.from_share_eur = 0.5 * c.loss_cost_eur;
            c.to_share_eur = 0.5 * c.loss_cost_eur;
            c
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    // Avoid "-0.000000" so that equal values always print identically.
    let s = format!("{v:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

pub fn write_summary_csv<W: Write>(mut w: W, report: &StudyReport) -> std::io::Result<()> {
    writeln!(
        w,
        "scenario,hours_solved,hours_skipped,hvdc_loss_gwh,ac_loss_gwh,total_loss_gwh,system_cost_eur,\
         delta_hvdc_gwh,delta_ac_gwh,delta_total_gwh,delta_hvdc_pct,delta_ac_pct,delta_total_pct,cost_saving_meur"
    )?;
    for s in &report.scenarios {
        let nums = [
            s.hvdc_loss_gwh,
            s.ac_loss_gwh,
            s.total_loss_gwh,
            s.system_cost_eur,
            s.delta_hvdc_gwh,
            s.delta_ac_gwh,
            s.delta_total_gwh,
            s.delta_hvdc_pct,
            s.delta_ac_pct,
            s.delta_total_pct,
            s.cost_saving_meur,
        ];
        let nums: Vec<String> = nums.iter().map(|&v| fmt_num(v)).collect();
        writeln!(w, "{},{},{},{}", s.scenario, s.hours_solved, s.hours_skipped, nums.join(","))?;
    }
    Ok(())
}

pub fn write_hourly_csv<W: Write>(mut w: W, report: &StudyReport) -> std::io::Result<()> {
    writeln!(w, "scenario,hour,objective_eur,hvdc_loss_mw,ac_loss_mw,fixed_point")?;
    for h in &report.hourly {
        let fp = match h.fixed_point {
            Some(true) => "yes",
            Some(false) => "no",
            None => "",
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            h.scenario,
            h.hour,
            fmt_num(h.objective_eur),
            fmt_num(h.hvdc_loss_mw),
            fmt_num(h.ac_loss_mw),
            fp
        )?;
    }
    Ok(())
}

pub fn write_tso_costs_csv<W: Write>(mut w: W, results: &[ScenarioResult]) -> std::io::Result<()> {
    writeln!(w, "scenario,line,from_zone,to_zone,hours,zero_diff_hours,zero_diff_pct,loss_cost_eur,from_share_eur,to_share_eur")?;
    for r in results {
        for c in tso_loss_cost_accounting(r) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.scenario,
                c.line,
                c.from_zone,
                c.to_zone,
                c.hours,
                c.zero_diff_hours,
                fmt_num(100.0 * c.zero_diff_share()),
                fmt_num(c.loss_cost_eur),
                fmt_num(c.from_share_eur),
                fmt_num(c.to_share_eur)
            )?;
        }
    }
    Ok(())
}

/// Writes `summary.csv`, `hourly.csv` (or `hourly.csv.gz`), `report.json`
/// and `tso_loss_costs.csv` into `dir`.
pub fn write_report(dir: &Path, report: &StudyReport, results: &[ScenarioResult], gzip_hourly: bool) -> Result<(), StudyError> {
    std::fs::create_dir_all(dir)?;
    let mut summary = BufWriter::new(File::create(dir.join("summary.csv"))?);
    write_summary_csv(&mut summary, report)?;
    summary.flush()?;

    if gzip_hourly {
        let file = File::create(dir.join("hourly.csv.gz"))?;
        let mut gz = flate2::write::GzEncoder::new(BufWriter::new(file), flate2::Compression::default());
        write_hourly_csv(&mut gz, report)?;
        gz.finish()?.flush()?;
    } else {
        let mut hourly = BufWriter::new(File::create(dir.join("hourly.csv"))?);
        write_hourly_csv(&mut hourly, report)?;
        hourly.flush()?;
    }

    let mut tso = BufWriter::new(File::create(dir.join("tso_loss_costs.csv"))?);
    write_tso_costs_csv(&mut tso, results)?;
    tso.flush()?;

    let json = serde_json::to_string_pretty(report).map_err(|e| StudyError::Serialize(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    Ok(())
}

/// Calibrates the series, runs the configured scenarios and compares them.
pub fn run_study(
    series: &[MarketInstance],
    history: &[FlowHistory],
    config: &StudyConfig,
) -> Result<(StudyReport, Vec<ScenarioResult>), StudyError> {
    let (calibrated, _) = calibrate_series(series, history, config.segment_mw, config)?;
    let mut ids = config.scenarios.clone();
    if !ids.contains(&config.reference) {
        ids.insert(0, config.reference);
    }
    let mut results = Vec::with_capacity(ids.len());
    for id in ids {
        results.push(run_scenario(&calibrated, id, config)?);
    }
    let report = compare_scenarios(&results, config.reference)?;
    Ok((report, results))
}

/// One row of the calibration-quality table: a factor granularity with its
/// approximation error and what it costs to clear with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    /// `None` for the linear factors.
    pub segment_mw: Option<f64>,
    /// Mean over the factor lines of the RMSE on a 1 MW grid.
    pub mean_rmse_mw: f64,
    pub solve_secs_per_hour: f64,
    pub hours_timed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityOptions {
    /// Time at most this many evenly spaced hours.
    pub max_hours: Option<usize>,
    /// Each hour is cleared this many times and the fastest run kept.
    pub repeats: usize,
}

impl Default for QualityOptions {
    fn default() -> Self {
        QualityOptions { max_hours: None, repeats: 1 }
    }
}

fn sample_hours(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(k) if k < n => (0..k.max(1)).map(|i| i * n / k.max(1)).collect(),
        _ => (0..n).collect(),
    }
}

/// RMSE and per-hour clearing time of linear factors (S2) and of piecewise
/// factors (S3) at each segment length, on the HVDC lines of the series.
/// Hours are cleared one at a time on the calling thread.
pub fn calibration_quality(
    series: &[MarketInstance],
    history: &[FlowHistory],
    segment_lengths: &[f64],
    config: &StudyConfig,
    opts: &QualityOptions,
) -> Result<Vec<QualityRow>, StudyError> {
    let hours = sample_hours(series.len(), opts.max_hours);
    let mut granularity: Vec<Option<f64>> = vec![None];
    granularity.extend(segment_lengths.iter().map(|&s| Some(s)));

    let mut rows = Vec::with_capacity(granularity.len());
    for seg in granularity {
        let (calibrated, table) = calibrate_series(series, history, seg.unwrap_or(config.segment_mw), config)?;
        let Some(first) = calibrated.first() else { break };
        let mut rmse = Vec::new();
        for lf in &table {
            let line = first.line(&lf.line).expect("calibrated from this series");
            if line.kind != LineKind::Hvdc {
                continue;
            }
            let model = line.loss_model.as_ref().expect("loss line");
            let factors = match seg {
                None => calibration::Factors::Linear(lf.linear.as_ref().expect("calibrated")),
                Some(_) => calibration::Factors::Piecewise(lf.piecewise.as_deref().expect("calibrated")),
            };
            rmse.push(calibration::approximation_rmse(model, factors, line.rated_capacity, 1.0));
        }
        let id = if seg.is_none() { ScenarioId::S2LinearHvdc } else { ScenarioId::S3PiecewiseHvdc };
        let mut secs = 0.0;
        let mut timed = 0;
        for &h in &hours {
            let mut best = f64::INFINITY;
            for _ in 0..opts.repeats.max(1) {
                let t = std::time::Instant::now();
                match run_hour(&calibrated[h], id, &config.exclude_lines) {
                    Ok(_) => best = best.min(t.elapsed().as_secs_f64()),
                    Err(e) if is_skippable(&e) => break,
                    Err(e) => return Err(StudyError::Solver { hour: calibrated[h].timestamp, source: e }),
                }
            }
            if best.is_finite() {
                secs += best;
                timed += 1;
            }
        }
        rows.push(QualityRow {
            segment_mw: seg,
            mean_rmse_mw: if rmse.is_empty() { 0.0 } else { rmse.iter().sum::<f64>() / rmse.len() as f64 },
            solve_secs_per_hour: if timed == 0 { 0.0 } else { secs / timed as f64 },
            hours_timed: timed,
        });
        info!("quality {:?}: {} hours timed", seg, timed);
    }
    Ok(rows)
}
