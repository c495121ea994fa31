//! Dataset ingestion: a TOML manifest pointing at plain CSV tables.
//!
//! Zonal tables (headers in brackets):
//!
//! * `zones`: `id`
//! * `generators`: `id,zone,cost,p_min,p_max`
//! * `interconnectors`: `id,kind,from_zone,to_zone,rated_mw,quad_a,quad_b,quad_c`
//!   (leave the three loss columns empty for a lossless line)
//! * `atc`: `hour,line,fwd_mw,rev_mw`, one row per hour and line
//! * `demand`, `injections`: `hour,zone,mw`; missing rows mean zero
//! * `flow_history` (optional): `line,mw`
//!
//! A `[nodal]` section may replace the zonal tables with node-level ones,
//! which are aggregated to zones on load (see [`aggregate_nodal_to_zonal`]).
//! Relative paths resolve against the manifest's directory. Hours are
//! 0-based and must be contiguous.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::FlowHistory;
use crate::market::{validate_instance, Generator, Interconnector, LineKind, LossModel, MarketInstance, ValidationReport, Zone};
use crate::study::StudyConfig;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}:{line}{}: {msg}", .column.as_ref().map(|c| format!(" column {c}")).unwrap_or_default())]
    Parse { file: PathBuf, line: u64, column: Option<String>, msg: String },
    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("{0}")]
    Referential(String),
    #[error("node {0} is not mapped to a zone")]
    UnmappedNode(String),
    #[error("config {path}: {msg}")]
    Config { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodalFiles {
    /// `node,zone`
    pub nodes: PathBuf,
    /// `hour,node,mw`
    pub demand: PathBuf,
    /// `hour,node,mw`
    #[serde(default)]
    pub injections: Option<PathBuf>,
    /// `id,node,cost,p_min,p_max`
    pub generators: PathBuf,
    /// `id,kind,from_node,to_node,limit_mw,r_ohm,v_kv,quad_a,quad_b,quad_c`
    pub circuits: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub zones: Option<PathBuf>,
    pub generators: Option<PathBuf>,
    pub interconnectors: Option<PathBuf>,
    pub atc: Option<PathBuf>,
    pub demand: Option<PathBuf>,
    pub injections: Option<PathBuf>,
    pub flow_history: Option<PathBuf>,
    pub nodal: Option<NodalFiles>,
    /// Directory relative paths resolve against; set on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io { path: path.into(), source: e })?;
        let mut m: DatasetManifest =
            toml::from_str(&text).map_err(|e| DatasetError::Manifest { path: path.into(), msg: e.to_string() })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let zonal = [&m.zones, &m.generators, &m.interconnectors, &m.atc, &m.demand];
        if m.nodal.is_none() && zonal.iter().any(|p| p.is_none()) {
            return Err(DatasetError::Manifest {
                path: path.into(),
                msg: "zones, generators, interconnectors, atc and demand are required without a [nodal] section".into(),
            });
        }
        for p in m.referenced_files() {
            if !p.is_file() {
                return Err(DatasetError::Manifest { path: path.into(), msg: format!("{} does not exist", p.display()) });
            }
        }
        Ok(m)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn referenced_files(&self) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = [&self.zones, &self.generators, &self.interconnectors, &self.atc, &self.demand, &self.injections, &self.flow_history]
            .into_iter()
            .flatten()
            .map(|p| self.resolve(p))
            .collect();
        if let Some(n) = &self.nodal {
            out.extend([&n.nodes, &n.demand, &n.generators, &n.circuits].into_iter().map(|p| self.resolve(p)));
            out.extend(n.injections.iter().map(|p| self.resolve(p)));
        }
        out
    }
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::Io { path: path.into(), source: e })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Parse { file: path.into(), line: 1, column: None, msg: e.to_string() })?
        .clone();
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        match rec {
            Ok(r) => out.push(r),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                let column = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => {
                        err.field().and_then(|i| headers.get(i as usize)).map(str::to_string)
                    }
                    _ => None,
                };
                let msg = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err.kind().to_string(),
                    _ => e.to_string(),
                };
                return Err(DatasetError::Parse { file: path.into(), line, column, msg });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize, Serialize)]
struct ZoneRow {
    id: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct GeneratorRow {
    id: String,
    zone: String,
    cost: f64,
    p_min: f64,
    p_max: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct LineRow {
    id: String,
    kind: String,
    from_zone: String,
    to_zone: String,
    rated_mw: f64,
    quad_a: Option<f64>,
    quad_b: Option<f64>,
    quad_c: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct AtcRow {
    hour: usize,
    line: String,
    fwd_mw: f64,
    rev_mw: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct HourValueRow {
    hour: usize,
    zone: String,
    mw: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct FlowRow {
    line: String,
    mw: f64,
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    node: String,
    zone: String,
}

#[derive(Debug, Deserialize)]
struct NodeValueRow {
    hour: usize,
    node: String,
    mw: f64,
}

#[derive(Debug, Deserialize)]
struct NodeGeneratorRow {
    id: String,
    node: String,
    cost: f64,
    p_min: f64,
    p_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Circuit {
    pub id: String,
    pub kind: String,
    pub from_node: String,
    pub to_node: String,
    pub limit_mw: f64,
    pub r_ohm: Option<f64>,
    pub v_kv: Option<f64>,
    pub quad_a: Option<f64>,
    pub quad_b: Option<f64>,
    pub quad_c: Option<f64>,
}

/// Node-level data before aggregation.
#[derive(Debug, Clone, Default)]
pub struct NodalData {
    pub node_zone: BTreeMap<String, String>,
    /// `(hour, node, MW)`
    pub demand: Vec<(usize, String, f64)>,
    pub injections: Vec<(usize, String, f64)>,
    /// Generators with `zone` holding the node id.
    pub generators: Vec<Generator>,
    pub circuits: Vec<Circuit>,
}

/// One equivalent line built from parallel AC circuits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalentLine {
    pub id: String,
    pub members: Vec<String>,
    /// Parallel combination of member resistances, when all are known.
    pub r_eq_ohm: Option<f64>,
    /// ATC set to the sum of member limits rather than a TSO-computed value.
    pub atc_is_sum_of_limits: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregationReport {
    pub equivalent_lines: Vec<EquivalentLine>,
    pub dropped_internal_circuits: Vec<String>,
}

/// Static and hourly zonal tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZonalDataset {
    pub zones: Vec<String>,
    pub generators: Vec<Generator>,
    /// Lines with their ATC fields unset (the hourly table holds those).
    pub lines: Vec<Interconnector>,
    pub hours: usize,
    pub atc: BTreeMap<(usize, String), (f64, f64)>,
    pub demand: BTreeMap<(usize, String), f64>,
    pub injections: BTreeMap<(usize, String), f64>,
}

fn loss_model(a: Option<f64>, b: Option<f64>, c: Option<f64>) -> Option<LossModel> {
    if a.is_none() && b.is_none() && c.is_none() {
        None
    } else {
        Some(LossModel::quadratic(a.unwrap_or(0.0), b.unwrap_or(0.0), c.unwrap_or(0.0)))
    }
}

fn parse_kind(s: &str, file: &Path, what: &str) -> Result<LineKind, DatasetError> {
    s.parse().map_err(|msg| DatasetError::Parse { file: file.into(), line: 0, column: Some("kind".into()), msg: format!("{what}: {msg}") })
}

fn add_hourly(map: &mut BTreeMap<(usize, String), f64>, hour: usize, key: &str, mw: f64) {
    *map.entry((hour, key.to_string())).or_insert(0.0) += mw;
}

/// Sums node data per zone and collapses inter-zonal AC circuits between
/// the same pair of zones into one equivalent line. HVDC circuits stay
/// individual lines. The equivalent loss coefficient is the parallel
/// combination of the members' `r / v^2`.
pub fn aggregate_nodal_to_zonal(data: &NodalData) -> Result<(ZonalDataset, AggregationReport), DatasetError> {
    let zone_of = |node: &str| data.node_zone.get(node).cloned().ok_or_else(|| DatasetError::UnmappedNode(node.to_string()));
    let zones: BTreeSet<String> = data.node_zone.values().cloned().collect();
    let mut ds = ZonalDataset { zones: zones.into_iter().collect(), ..Default::default() };
    let mut report = AggregationReport::default();

    for (h, node, mw) in &data.demand {
        add_hourly(&mut ds.demand, *h, &zone_of(node)?, *mw);
    }
    for (h, node, mw) in &data.injections {
        add_hourly(&mut ds.injections, *h, &zone_of(node)?, *mw);
    }
    for g in &data.generators {
        ds.generators.push(Generator { zone: zone_of(&g.zone)?, ..g.clone() });
    }

    let mut ac_groups: BTreeMap<(String, String), Vec<&Circuit>> = BTreeMap::new();
    for c in &data.circuits {
        let (zf, zt) = (zone_of(&c.from_node)?, zone_of(&c.to_node)?);
        if zf == zt {
            report.dropped_internal_circuits.push(c.id.clone());
            continue;
        }
        let kind = parse_kind(&c.kind, Path::new("circuits"), &c.id)?;
        match kind {
            LineKind::Hvdc => ds.lines.push(Interconnector {
                id: c.id.clone(),
                kind,
                from_zone: zf,
                to_zone: zt,
                atc_fwd: 0.0,
                atc_rev: 0.0,
                rated_capacity: c.limit_mw,
                loss_model: loss_model(c.quad_a, c.quad_b, c.quad_c),
            }),
            LineKind::Ac => {
                let key = if zf < zt { (zf, zt) } else { (zt, zf) };
                ac_groups.entry(key).or_default().push(c);
            }
        }
    }
    for ((za, zb), members) in ac_groups {
        let limit: f64 = members.iter().map(|c| c.limit_mw).sum();
        let r_eq = members
            .iter()
            .map(|c| c.r_ohm)
            .collect::<Option<Vec<f64>>>()
            .map(|rs| if rs.iter().any(|&r| r == 0.0) { 0.0 } else { 1.0 / rs.iter().map(|r| 1.0 / r).sum::<f64>() });
        let coeffs = members
            .iter()
            .map(|c| match (c.r_ohm, c.v_kv) {
                (Some(r), Some(v)) if v > 0.0 => Some(r / (v * v)),
                _ => c.quad_a,
            })
            .collect::<Option<Vec<f64>>>();
        let model = coeffs.map(|a| {
            let a_eq = if a.iter().any(|&x| x == 0.0) { 0.0 } else { 1.0 / a.iter().map(|x| 1.0 / x).sum::<f64>() };
            LossModel::quadratic(a_eq, 0.0, 0.0)
        });
        let id = format!("{za}-{zb}");
        report.equivalent_lines.push(EquivalentLine {
            id: id.clone(),
            members: members.iter().map(|c| c.id.clone()).collect(),
            r_eq_ohm: r_eq,
            atc_is_sum_of_limits: true,
        });
        ds.lines.push(Interconnector {
            id,
            kind: LineKind::Ac,
            from_zone: za,
            to_zone: zb,
            atc_fwd: 0.0,
            atc_rev: 0.0,
            rated_capacity: limit,
            loss_model: model,
        });
    }

    ds.hours = data.demand.iter().chain(&data.injections).map(|(h, _, _)| h + 1).max().unwrap_or(0);
    for h in 0..ds.hours {
        for l in &ds.lines {
            ds.atc.insert((h, l.id.clone()), (l.rated_capacity, l.rated_capacity));
        }
    }
    if !report.equivalent_lines.is_empty() {
        warn!("equivalent AC lines use the sum of circuit limits as ATC");
    }
    Ok((ds, report))
}

fn load_nodal(m: &DatasetManifest, n: &NodalFiles) -> Result<(ZonalDataset, AggregationReport), DatasetError> {
    let mut data = NodalData::default();
    for r in read_csv::<NodeRow>(&m.resolve(&n.nodes))? {
        if let Some(prev) = data.node_zone.insert(r.node.clone(), r.zone.clone()) {
            if prev != r.zone {
                return Err(DatasetError::Referential(format!("node {} mapped to both {prev} and {}", r.node, r.zone)));
            }
        }
    }
    data.demand = read_csv::<NodeValueRow>(&m.resolve(&n.demand))?.into_iter().map(|r| (r.hour, r.node, r.mw)).collect();
    if let Some(p) = &n.injections {
        data.injections = read_csv::<NodeValueRow>(&m.resolve(p))?.into_iter().map(|r| (r.hour, r.node, r.mw)).collect();
    }
    data.generators = read_csv::<NodeGeneratorRow>(&m.resolve(&n.generators))?
        .into_iter()
        .map(|r| Generator { id: r.id, zone: r.node, cost: r.cost, p_min: r.p_min, p_max: r.p_max })
        .collect();
    data.circuits = read_csv(&m.resolve(&n.circuits))?;
    aggregate_nodal_to_zonal(&data)
}

fn load_zonal(m: &DatasetManifest) -> Result<ZonalDataset, DatasetError> {
    let req = |p: &Option<PathBuf>| m.resolve(p.as_ref().expect("checked by DatasetManifest::load"));
    let mut ds = ZonalDataset {
        zones: read_csv::<ZoneRow>(&req(&m.zones))?.into_iter().map(|z| z.id).collect(),
        ..Default::default()
    };
    ds.generators = read_csv::<GeneratorRow>(&req(&m.generators))?
        .into_iter()
        .map(|r| Generator { id: r.id, zone: r.zone, cost: r.cost, p_min: r.p_min, p_max: r.p_max })
        .collect();
    let lines_path = req(&m.interconnectors);
    for r in read_csv::<LineRow>(&lines_path)? {
        ds.lines.push(Interconnector {
            kind: parse_kind(&r.kind, &lines_path, &r.id)?,
            id: r.id,
            from_zone: r.from_zone,
            to_zone: r.to_zone,
            atc_fwd: 0.0,
            atc_rev: 0.0,
            rated_capacity: r.rated_mw,
            loss_model: loss_model(r.quad_a, r.quad_b, r.quad_c),
        });
    }
    let mut hours = BTreeSet::new();
    for r in read_csv::<AtcRow>(&req(&m.atc))? {
        hours.insert(r.hour);
        if ds.atc.insert((r.hour, r.line.clone()), (r.fwd_mw, r.rev_mw)).is_some() {
            return Err(DatasetError::Referential(format!("duplicate atc row for hour {} line {}", r.hour, r.line)));
        }
    }
    for r in read_csv::<HourValueRow>(&req(&m.demand))? {
        hours.insert(r.hour);
        add_hourly(&mut ds.demand, r.hour, &r.zone, r.mw);
    }
    if let Some(p) = &m.injections {
        for r in read_csv::<HourValueRow>(&m.resolve(p))? {
            hours.insert(r.hour);
            add_hourly(&mut ds.injections, r.hour, &r.zone, r.mw);
        }
    }
    ds.hours = hours.len();
    if let Some(&last) = hours.iter().next_back() {
        if last + 1 != hours.len() {
            let missing = (0..last).find(|h| !hours.contains(h)).unwrap_or(0);
            return Err(DatasetError::Referential(format!("hour indices are not contiguous from 0: hour {missing} missing")));
        }
    }
    Ok(ds)
}

impl ZonalDataset {
    fn check_references(&self) -> Result<(), DatasetError> {
        let zones: BTreeSet<&str> = self.zones.iter().map(String::as_str).collect();
        let lines: BTreeSet<&str> = self.lines.iter().map(|l| l.id.as_str()).collect();
        let dangling = |what: &str, id: &str, zone: &str| {
            DatasetError::Referential(format!("{what} {id} references unknown zone {zone}"))
        };
        for g in &self.generators {
            if !zones.contains(g.zone.as_str()) {
                return Err(dangling("generator", &g.id, &g.zone));
            }
        }
        for l in &self.lines {
            for z in [&l.from_zone, &l.to_zone] {
                if !zones.contains(z.as_str()) {
                    return Err(dangling("line", &l.id, z));
                }
            }
        }
        for ((h, z), _) in self.demand.iter().chain(&self.injections) {
            if !zones.contains(z.as_str()) {
                return Err(DatasetError::Referential(format!("hour {h} references unknown zone {z}")));
            }
        }
        for (h, l) in self.atc.keys() {
            if !lines.contains(l.as_str()) {
                return Err(DatasetError::Referential(format!("atc row for hour {h} references unknown line {l}")));
            }
        }
        for h in 0..self.hours {
            for l in &self.lines {
                if !self.atc.contains_key(&(h, l.id.clone())) {
                    return Err(DatasetError::Referential(format!("atc missing for hour {h} line {}", l.id)));
                }
            }
        }
        Ok(())
    }

    /// One instance per hour; negative ATC values are clamped to zero.
    pub fn instances(&self, warnings: &mut Vec<String>) -> Vec<MarketInstance> {
        (0..self.hours)
            .map(|h| MarketInstance {
                timestamp: h,
                zones: self
                    .zones
                    .iter()
                    .map(|z| {
                        let key = (h, z.clone());
                        Zone::new(
                            z.clone(),
                            self.demand.get(&key).copied().unwrap_or(0.0),
                            self.injections.get(&key).copied().unwrap_or(0.0),
                        )
                    })
                    .collect(),
                generators: self.generators.clone(),
                interconnectors: self
                    .lines
                    .iter()
                    .map(|l| {
                        let (mut fwd, mut rev) = self.atc[&(h, l.id.clone())];
                        if fwd < 0.0 || rev < 0.0 {
                            let msg = format!("hour {h} line {}: negative ATC ({fwd}, {rev}) clamped to 0", l.id);
                            warn!("{msg}");
                            warnings.push(msg);
                            fwd = fwd.max(0.0);
                            rev = rev.max(0.0);
                        }
                        Interconnector { atc_fwd: fwd, atc_rev: rev, ..l.clone() }
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Everything read from a manifest.
#[derive(Debug, Clone, Default)]
pub struct LoadedSeries {
    pub instances: Vec<MarketInstance>,
    /// Validation reports of hours that break an invariant.
    pub invalid_hours: Vec<(usize, ValidationReport)>,
    pub flow_history: Vec<FlowHistory>,
    pub warnings: Vec<String>,
    pub aggregation: Option<AggregationReport>,
}

pub fn load_series(manifest_path: &Path) -> Result<LoadedSeries, DatasetError> {
    let m = DatasetManifest::load(manifest_path)?;
    let (ds, aggregation) = match &m.nodal {
        Some(n) => {
            let (ds, rep) = load_nodal(&m, n)?;
            (ds, Some(rep))
        }
        None => (load_zonal(&m)?, None),
    };
    ds.check_references()?;

    let mut out = LoadedSeries { aggregation, ..Default::default() };
    out.instances = ds.instances(&mut out.warnings);
    for inst in &out.instances {
        let rep = validate_instance(inst);
        if !rep.is_valid() {
            out.invalid_hours.push((inst.timestamp, rep));
        }
    }
    if let Some(p) = &m.flow_history {
        let mut by_line: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in read_csv::<FlowRow>(&m.resolve(p))? {
            if !ds.lines.iter().any(|l| l.id == r.line) {
                return Err(DatasetError::Referential(format!("flow history references unknown line {}", r.line)));
            }
            by_line.entry(r.line).or_default().push(r.mw);
        }
        out.flow_history = by_line.into_iter().map(|(line, samples)| FlowHistory { line, samples }).collect();
    }
    info!("loaded {} hours from {}", out.instances.len(), manifest_path.display());
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), DatasetError> {
    let io_err = |e: std::io::Error| DatasetError::Io { path: path.into(), source: e };
    let mut w = csv::Writer::from_path(path).map_err(|e| DatasetError::Io { path: path.into(), source: e.into() })?;
    for r in rows {
        w.serialize(r).map_err(|e| DatasetError::Io { path: path.into(), source: e.into() })?;
    }
    w.flush().map_err(io_err)
}

/// Writes a series in the zonal schema plus a `manifest.toml` into `dir`.
/// Generators and line definitions must be the same in every hour.
pub fn write_series(dir: &Path, series: &[MarketInstance], history: &[FlowHistory]) -> Result<PathBuf, DatasetError> {
    let err = |msg: String| DatasetError::Manifest { path: dir.into(), msg };
    let first = series.first().ok_or_else(|| err("empty series".into()))?;
    for (h, inst) in series.iter().enumerate() {
        if inst.timestamp != h {
            return Err(err(format!("series position {h} has timestamp {}", inst.timestamp)));
        }
        let same_lines = inst.interconnectors.len() == first.interconnectors.len()
            && inst.interconnectors.iter().zip(&first.interconnectors).all(|(a, b)| {
                a.id == b.id && a.kind == b.kind && a.from_zone == b.from_zone && a.to_zone == b.to_zone
                    && a.rated_capacity == b.rated_capacity && a.loss_model == b.loss_model
            });
        let same_zones = inst.zones.iter().map(|z| &z.id).eq(first.zones.iter().map(|z| &z.id));
        if inst.generators != first.generators || !same_lines || !same_zones {
            return Err(err(format!("hour {h} changes static data; the zonal schema cannot express that")));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| DatasetError::Io { path: dir.into(), source: e })?;

    write_csv(&dir.join("zones.csv"), first.zones.iter().map(|z| ZoneRow { id: z.id.clone() }))?;
    write_csv(
        &dir.join("generators.csv"),
        first.generators.iter().map(|g| GeneratorRow {
            id: g.id.clone(),
            zone: g.zone.clone(),
            cost: g.cost,
            p_min: g.p_min,
            p_max: g.p_max,
        }),
    )?;
    write_csv(
        &dir.join("interconnectors.csv"),
        first.interconnectors.iter().map(|l| LineRow {
            id: l.id.clone(),
            kind: l.kind.to_string(),
            from_zone: l.from_zone.clone(),
            to_zone: l.to_zone.clone(),
            rated_mw: l.rated_capacity,
            quad_a: l.loss_model.as_ref().map(|m| m.quad_a),
            quad_b: l.loss_model.as_ref().map(|m| m.quad_b),
            quad_c: l.loss_model.as_ref().map(|m| m.quad_c),
        }),
    )?;
    write_csv(
        &dir.join("atc.csv"),
        series.iter().flat_map(|inst| {
            inst.interconnectors.iter().map(move |l| AtcRow {
                hour: inst.timestamp,
                line: l.id.clone(),
                fwd_mw: l.atc_fwd,
                rev_mw: l.atc_rev,
            })
        }),
    )?;
    let hourly = |f: fn(&Zone) -> f64| {
        series
            .iter()
            .flat_map(move |inst| {
                inst.zones.iter().map(move |z| HourValueRow { hour: inst.timestamp, zone: z.id.clone(), mw: f(z) })
            })
            .collect::<Vec<_>>()
    };
    write_csv(&dir.join("demand.csv"), hourly(|z| z.demand))?;
    write_csv(&dir.join("injections.csv"), hourly(|z| z.fixed_injection))?;

    let mut manifest = String::from(
        "zones = \"zones.csv\"\ngenerators = \"generators.csv\"\ninterconnectors = \"interconnectors.csv\"\n\
         atc = \"atc.csv\"\ndemand = \"demand.csv\"\ninjections = \"injections.csv\"\n",
    );
    if !history.is_empty() {
        write_csv(
            &dir.join("flow_history.csv"),
            history.iter().flat_map(|h| h.samples.iter().map(|&mw| FlowRow { line: h.line.clone(), mw })),
        )?;
        manifest.push_str("flow_history = \"flow_history.csv\"\n");
    }
    let path = dir.join("manifest.toml");
    let mut f = File::create(&path).map_err(|e| DatasetError::Io { path: path.clone(), source: e })?;
    f.write_all(manifest.as_bytes()).map_err(|e| DatasetError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

pub fn load_config(path: &Path) -> Result<StudyConfig, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io { path: path.into(), source: e })?;
    toml::from_str(&text).map_err(|e| DatasetError::Config { path: path.into(), msg: e.to_string() })
}
