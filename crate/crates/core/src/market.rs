//! Zonal market instances and their invariant checks.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Tolerance used when comparing MW quantities in invariant checks.
const MW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    /// Load in MW.
    pub demand: f64,
    /// Signed price-independent injection in MW: wind, solar and fixed
    /// exchanges with neighbouring systems. Positive values reduce net load.
    pub fixed_injection: f64,
}

impl Zone {
    pub fn new(id: impl Into<String>, demand: f64, fixed_injection: f64) -> Self {
        Zone { id: id.into(), demand, fixed_injection }
    }

    pub fn net_demand(&self) -> f64 {
        self.demand - self.fixed_injection
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub zone: String,
    /// Offer price in EUR/MWh; may be negative.
    pub cost: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LineKind {
    Ac,
    Hvdc,
}

impl LineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LineKind::Ac => "AC",
            LineKind::Hvdc => "HVDC",
        }
    }
}

impl fmt::Display for LineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AC" => Ok(LineKind::Ac),
            "HVDC" | "DC" => Ok(LineKind::Hvdc),
            other => Err(format!("unknown line kind {other:?}")),
        }
    }
}

/// Loss approximation through a single straight line `alpha * |f| + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFactors {
    pub alpha: f64,
    pub beta: f64,
}

/// One piece of a piecewise-linear loss approximation, valid for
/// `lo <= |f| <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Segment {
    pub fn loss(&self, abs_flow: f64) -> f64 {
        self.alpha * abs_flow + self.beta
    }
}

/// Quadratic loss curve `quad_a * f^2 + quad_b * |f| + quad_c` (MW) plus
/// whatever loss factors have been calibrated from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    /// 1/MW.
    pub quad_a: f64,
    pub quad_b: f64,
    /// Stand-by loss in MW.
    pub quad_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearFactors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub piecewise: Option<Vec<Segment>>,
}

impl LossModel {
    pub fn quadratic(quad_a: f64, quad_b: f64, quad_c: f64) -> Self {
        LossModel { quad_a, quad_b, quad_c, linear: None, piecewise: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interconnector {
    pub id: String,
    pub kind: LineKind,
    pub from_zone: String,
    pub to_zone: String,
    /// Allowed transfer from `from_zone` to `to_zone` this hour (MW).
    pub atc_fwd: f64,
    /// Allowed transfer from `to_zone` to `from_zone` this hour (MW).
    pub atc_rev: f64,
    pub rated_capacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_model: Option<LossModel>,
}

/// One hour of a zonal market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    pub timestamp: usize,
    pub zones: Vec<Zone>,
    pub generators: Vec<Generator>,
    pub interconnectors: Vec<Interconnector>,
}

impl MarketInstance {
    pub fn zone_index(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }

    pub fn line(&self, id: &str) -> Option<&Interconnector> {
        self.interconnectors.iter().find(|l| l.id == id)
    }

    pub fn line_mut(&mut self, id: &str) -> Option<&mut Interconnector> {
        self.interconnectors.iter_mut().find(|l| l.id == id)
    }

    pub fn total_net_demand(&self) -> f64 {
        self.zones.iter().map(Zone::net_demand).sum()
    }
}

/// A broken invariant, tagged with the entity it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.entity, self.rule, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, entity: &str, rule: &str, detail: String) {
        self.violations.push(Violation { entity: entity.to_string(), rule: rule.to_string(), detail });
    }
}

/// Lists every invariant the instance breaks. An empty report means the
/// instance can be handed to the clearing formulations.
pub fn validate_instance(inst: &MarketInstance) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let mut zone_ids = BTreeSet::new();
    for z in &inst.zones {
        if !zone_ids.insert(z.id.as_str()) {
            rep.push(&z.id, "duplicate zone id", "zone ids must be unique".into());
        }
        if !z.demand.is_finite() || !z.fixed_injection.is_finite() {
            rep.push(&z.id, "non-finite value", format!("demand={} injection={}", z.demand, z.fixed_injection));
        } else if z.demand < 0.0 {
            rep.push(&z.id, "negative demand", format!("demand={}", z.demand));
        }
    }

    let mut gen_ids = BTreeSet::new();
    let mut capacity = 0.0;
    for g in &inst.generators {
        if !gen_ids.insert(g.id.as_str()) {
            rep.push(&g.id, "duplicate generator id", "generator ids must be unique".into());
        }
        if !zone_ids.contains(g.zone.as_str()) {
            rep.push(&g.id, "unknown zone", format!("zone {:?} does not exist", g.zone));
        }
        if !(g.cost.is_finite() && g.p_min.is_finite() && g.p_max.is_finite()) {
            rep.push(&g.id, "non-finite value", format!("cost={} p_min={} p_max={}", g.cost, g.p_min, g.p_max));
            continue;
        }
        if g.p_min > g.p_max {
            rep.push(&g.id, "p_min>p_max", format!("p_min={} p_max={}", g.p_min, g.p_max));
        }
        capacity += g.p_max;
    }

    let mut line_ids = BTreeSet::new();
    for l in &inst.interconnectors {
        if !line_ids.insert(l.id.as_str()) {
            rep.push(&l.id, "duplicate line id", "interconnector ids must be unique".into());
        }
        for z in [&l.from_zone, &l.to_zone] {
            if !zone_ids.contains(z.as_str()) {
                rep.push(&l.id, "unknown zone", format!("zone {z:?} does not exist"));
            }
        }
        if l.from_zone == l.to_zone {
            rep.push(&l.id, "from equals to", format!("both ends in {}", l.from_zone));
        }
        if !(l.atc_fwd.is_finite() && l.atc_rev.is_finite() && l.rated_capacity.is_finite()) {
            rep.push(&l.id, "non-finite value", format!("atc=({}, {}) rating={}", l.atc_fwd, l.atc_rev, l.rated_capacity));
            continue;
        }
        if l.rated_capacity <= 0.0 {
            rep.push(&l.id, "non-positive rating", format!("rated_capacity={}", l.rated_capacity));
        }
        if l.atc_fwd < 0.0 || l.atc_rev < 0.0 {
            rep.push(&l.id, "negative atc", format!("atc_fwd={} atc_rev={}", l.atc_fwd, l.atc_rev));
        }
        if l.atc_fwd > l.rated_capacity + MW_TOL || l.atc_rev > l.rated_capacity + MW_TOL {
            rep.push(
                &l.id,
                "atc exceeds rating",
                format!("atc_fwd={} atc_rev={} rated_capacity={}", l.atc_fwd, l.atc_rev, l.rated_capacity),
            );
        }
        if let Some(m) = &l.loss_model {
            check_loss_model(&l.id, m, l.rated_capacity, &mut rep);
        }
    }

    let net = inst.total_net_demand();
    if capacity + MW_TOL < net {
        rep.push("instance", "insufficient capacity", format!("capacity {capacity} < net demand {net}"));
    }
    rep
}

fn check_loss_model(id: &str, m: &LossModel, rated: f64, rep: &mut ValidationReport) {
    if !(m.quad_a.is_finite() && m.quad_b.is_finite() && m.quad_c.is_finite()) {
        rep.push(id, "non-finite value", format!("loss model ({}, {}, {})", m.quad_a, m.quad_b, m.quad_c));
        return;
    }
    if m.quad_a < 0.0 {
        rep.push(id, "negative quad_a", format!("quad_a={}", m.quad_a));
    }
    if m.quad_c < 0.0 {
        rep.push(id, "negative quad_c", format!("quad_c={}", m.quad_c));
    }
    let Some(segs) = &m.piecewise else { return };
    if segs.is_empty() {
        rep.push(id, "empty segment grid", "piecewise factors without segments".into());
        return;
    }
    let width = segs[0].hi - segs[0].lo;
    let tol = 1e-9 * rated.max(1.0);
    if segs[0].lo.abs() > tol {
        rep.push(id, "segments not contiguous", format!("first segment starts at {}", segs[0].lo));
    }
    for (k, s) in segs.iter().enumerate() {
        if s.hi <= s.lo {
            rep.push(id, "empty segment", format!("segment {} is [{}, {}]", k + 1, s.lo, s.hi));
        }
        if k > 0 && (s.lo - segs[k - 1].hi).abs() > tol {
            rep.push(id, "segments not contiguous", format!("segment {} starts at {}", k + 1, s.lo));
        }
        let last = k + 1 == segs.len();
        if !last && ((s.hi - s.lo) - width).abs() > tol {
            rep.push(id, "unequal segment width", format!("segment {} has width {}", k + 1, s.hi - s.lo));
        }
        if k > 0 && m.quad_a > 0.0 && s.alpha <= segs[k - 1].alpha {
            rep.push(id, "alpha not increasing", format!("segment {} alpha {}", k + 1, s.alpha));
        }
    }
    let end = segs[segs.len() - 1].hi;
    if (end - rated).abs() > tol {
        rep.push(id, "segment grid does not end at rating", format!("last hi {end} vs rated {rated}"));
    }
}
