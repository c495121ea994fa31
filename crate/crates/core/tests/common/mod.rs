#![allow(dead_code)]

use std::path::PathBuf;

use gridloss_core::calibration::{linear_factors_at_median, nordic_hvdc_fleet, piecewise_factors};
use gridloss_core::market::{Generator, Interconnector, LineKind, LossModel, MarketInstance, Zone};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn mini_nordic_manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini_nordic/manifest.toml")
}

pub fn gen(id: &str, zone: &str, cost: f64, p_max: f64) -> Generator {
    Generator { id: id.into(), zone: zone.into(), cost, p_min: 0.0, p_max }
}

pub fn line(id: &str, kind: LineKind, from: &str, to: &str, atc: f64, rated: f64, model: Option<LossModel>) -> Interconnector {
    Interconnector {
        id: id.into(),
        kind,
        from_zone: from.into(),
        to_zone: to.into(),
        atc_fwd: atc,
        atc_rev: atc,
        rated_capacity: rated,
        loss_model: model,
    }
}

/// Attaches linear factors at `median` and piecewise factors of `segment_mw`.
pub fn calibrated(model: LossModel, rated: f64, median: f64, segment_mw: f64) -> LossModel {
    let mut m = model;
    m.linear = Some(linear_factors_at_median(&m, median));
    m.piecewise = Some(piecewise_factors(&m, rated, segment_mw).unwrap());
    m
}

fn fleet_model(id: &str) -> (LossModel, f64, f64) {
    let f = nordic_hvdc_fleet().into_iter().find(|f| f.id == id).unwrap();
    let median = f.implied_median();
    (f.model, f.rated_capacity, median)
}

/// Calibrated fleet line (published median) between two zones.
pub fn fleet_line(fleet_id: &str, id: &str, from: &str, to: &str, atc: f64, segment_mw: f64) -> Interconnector {
    let (model, rated, median) = fleet_model(fleet_id);
    line(id, LineKind::Hvdc, from, to, atc.min(rated), rated, Some(calibrated(model, rated, median, segment_mw)))
}

/// Two zones; A exports to B over one calibrated Storebaelt-like line.
pub fn two_zone_hvdc(demand_b: f64, segment_mw: f64) -> MarketInstance {
    MarketInstance {
        timestamp: 0,
        zones: vec![Zone::new("A", 0.0, 0.0), Zone::new("B", demand_b, 0.0)],
        generators: vec![gen("gA", "A", 10.0, 2000.0), gen("gB", "B", 60.0, 2000.0)],
        interconnectors: vec![fleet_line("Storebaelt", "AB", "A", "B", 600.0, segment_mw)],
    }
}

/// Two zones joined by three parallel HVDC lines with the Storebaelt,
/// Konti-Skan and Skagerrak loss curves. Cheap supply sits in A.
pub fn parallel_hvdc(demand_b: f64, segment_mw: f64) -> MarketInstance {
    MarketInstance {
        timestamp: 0,
        zones: vec![Zone::new("A", 0.0, 0.0), Zone::new("B", demand_b, 0.0)],
        generators: vec![gen("gA", "A", 10.0, 4000.0), gen("gB", "B", 80.0, 4000.0)],
        interconnectors: vec![
            fleet_line("Storebaelt", "SB", "A", "B", 600.0, segment_mw),
            fleet_line("Konti-Skan", "KS", "A", "B", 740.0, segment_mw),
            fleet_line("Skagerrak", "SK", "A", "B", 1700.0, segment_mw),
        ],
    }
}

/// A zone with surplus must-run supply at a negative price next to a zone
/// with some load: spilling energy into losses is profitable there.
pub fn negative_price() -> MarketInstance {
    MarketInstance {
        timestamp: 0,
        zones: vec![Zone::new("A", 50.0, 0.0), Zone::new("B", 100.0, 0.0)],
        generators: vec![
            Generator { id: "wind".into(), zone: "A".into(), cost: -10.0, p_min: 0.0, p_max: 400.0 },
            gen("gB", "B", 30.0, 300.0),
        ],
        interconnectors: vec![fleet_line("Storebaelt", "AB", "A", "B", 600.0, 60.0)],
    }
}

/// Three zones: HVDC SE3-FI in parallel with the AC path SE3-SE1-FI.
/// Cheap supply in SE3, two slightly dearer blocks in SE1 and dear supply in FI.
pub fn ac_parallel(fi_demand: f64, segment_mw: f64) -> MarketInstance {
    let ac = |id: &str, from: &str, to: &str, atc: f64, a: f64| {
        let rated = atc;
        let model = LossModel::quadratic(a, 0.0, 0.0);
        line(id, LineKind::Ac, from, to, atc, rated, Some(calibrated(model, rated, 0.5 * rated, segment_mw)))
    };
    MarketInstance {
        timestamp: 0,
        zones: vec![Zone::new("SE3", 300.0, 0.0), Zone::new("SE1", 100.0, 0.0), Zone::new("FI", fi_demand, 0.0)],
        generators: vec![
            gen("gSE3", "SE3", 10.0, 5000.0),
            gen("gSE1", "SE1", 10.1, 400.0),
            gen("gSE1b", "SE1", 10.3, 300.0),
            gen("gFI", "FI", 50.0, 3000.0),
        ],
        interconnectors: vec![
            fleet_line("Fenno-Skan", "FennoSkan", "SE3", "FI", 1200.0, segment_mw),
            ac("SE3-SE1", "SE3", "SE1", 600.0, 2.0e-5),
            ac("SE1-FI", "SE1", "FI", 1500.0, 1.5e-5),
        ],
    }
}

/// Random connected zonal market with strictly positive offer prices and
/// calibrated linear factors on every line.
pub fn random_positive(rng: &mut ChaCha8Rng) -> MarketInstance {
    let nz = rng.gen_range(2..=5);
    let zones: Vec<Zone> = (0..nz).map(|i| Zone::new(format!("Z{i}"), rng.gen_range(0.0..800.0), rng.gen_range(-50.0..100.0))).collect();
    let mut generators = Vec::new();
    for (i, z) in zones.iter().enumerate() {
        for k in 0..rng.gen_range(1..=3) {
            generators.push(gen(&format!("g{i}_{k}"), &z.id, rng.gen_range(5.0..90.0), rng.gen_range(200.0..900.0)));
        }
    }
    let mut lines = Vec::new();
    let fleet = nordic_hvdc_fleet();
    let mut add = |i: usize, j: usize, rng: &mut ChaCha8Rng| {
        let f = &fleet[rng.gen_range(0..fleet.len())];
        let rated = f.rated_capacity;
        let atc_fwd = rng.gen_range(0.3..1.0) * rated;
        let atc_rev = rng.gen_range(0.3..1.0) * rated;
        let median = rng.gen_range(0.2..0.9) * rated;
        let kind = if rng.gen_bool(0.5) { LineKind::Hvdc } else { LineKind::Ac };
        lines.push(Interconnector {
            id: format!("L{}", lines.len()),
            kind,
            from_zone: format!("Z{i}"),
            to_zone: format!("Z{j}"),
            atc_fwd,
            atc_rev,
            rated_capacity: rated,
            loss_model: Some(calibrated(f.model.clone(), rated, median, 60.0)),
        });
    };
    for j in 1..nz {
        let i = rng.gen_range(0..j);
        add(i, j, rng);
    }
    if nz > 2 && rng.gen_bool(0.5) {
        add(0, nz - 1, rng);
    }
    MarketInstance { timestamp: 0, zones, generators, interconnectors: lines }
}
