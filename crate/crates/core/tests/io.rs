mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gridloss_core::calibration::FlowHistory;
use gridloss_core::io::*;
use gridloss_core::market::{Generator, LineKind, MarketInstance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn copy_fixture(dst: &Path) -> std::path::PathBuf {
    let src = common::mini_nordic_manifest().parent().unwrap().to_path_buf();
    for entry in fs::read_dir(&src).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dst.join(entry.file_name())).unwrap();
    }
    dst.join("manifest.toml")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn mini_nordic_loads_24_valid_hours() {
    let s = load_series(&common::mini_nordic_manifest()).unwrap();
    assert_eq!(s.instances.len(), 24);
    assert!(s.invalid_hours.is_empty(), "{:?}", s.invalid_hours);
    let first = &s.instances[0];
    assert_eq!(first.zones.len(), 11);
    assert_eq!(first.interconnectors.len(), 15);
    assert_eq!(first.interconnectors.iter().filter(|l| l.kind == LineKind::Hvdc).count(), 4);
    assert!(s.instances.iter().enumerate().all(|(h, i)| i.timestamp == h));
}

#[test]
fn missing_atc_row_names_hour_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = copy_fixture(dir.path());
    let atc = fs::read_to_string(dir.path().join("atc.csv")).unwrap();
    let mut lines: Vec<&str> = atc.lines().collect();
    let victim = lines.iter().position(|l| l.starts_with("7,")).unwrap();
    let line_id = lines[victim].split(',').nth(1).unwrap().to_string();
    lines.remove(victim);
    fs::write(dir.path().join("atc.csv"), lines.join("\n") + "\n").unwrap();
    match load_series(&manifest) {
        Err(DatasetError::Referential(msg)) => {
            assert!(msg.contains("hour 7") && msg.contains(&line_id), "{msg}");
        }
        other => panic!("expected a referential error, got {other:?}"),
    }
}

#[test]
fn parse_errors_carry_file_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = copy_fixture(dir.path());
    let gens = fs::read_to_string(dir.path().join("generators.csv")).unwrap();
    let mut lines: Vec<String> = gens.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[3].split(',').map(String::from).collect();
    fields[2] = "cheap".into();
    lines[3] = fields.join(",");
    fs::write(dir.path().join("generators.csv"), lines.join("\n") + "\n").unwrap();
    match load_series(&manifest) {
        Err(DatasetError::Parse { file, line, column, .. }) => {
            assert!(file.ends_with("generators.csv"));
            assert_eq!(line, 4);
            assert_eq!(column.as_deref(), Some("cost"));
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn manifest_must_point_at_existing_files() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = copy_fixture(dir.path());
    fs::remove_file(dir.path().join("demand.csv")).unwrap();
    assert!(matches!(load_series(&manifest), Err(DatasetError::Manifest { .. })));
}

#[test]
fn hours_must_be_contiguous() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "zones.csv", "id\nA\n");
    write(dir.path(), "generators.csv", "id,zone,cost,p_min,p_max\ng,A,1,0,10\n");
    write(dir.path(), "interconnectors.csv", "id,kind,from_zone,to_zone,rated_mw,quad_a,quad_b,quad_c\n");
    write(dir.path(), "atc.csv", "hour,line,fwd_mw,rev_mw\n");
    write(dir.path(), "demand.csv", "hour,zone,mw\n0,A,1\n2,A,1\n");
    write(
        dir.path(),
        "m.toml",
        "zones = \"zones.csv\"\ngenerators = \"generators.csv\"\ninterconnectors = \"interconnectors.csv\"\natc = \"atc.csv\"\ndemand = \"demand.csv\"\n",
    );
    match load_series(&dir.path().join("m.toml")) {
        Err(DatasetError::Referential(msg)) => assert!(msg.contains("hour 1"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn negative_atc_is_clamped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = copy_fixture(dir.path());
    let atc = fs::read_to_string(dir.path().join("atc.csv")).unwrap();
    let mut lines: Vec<String> = atc.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    let (hour, id) = (fields[0].parse::<usize>().unwrap(), fields[1].clone());
    fields[3] = "-50".into();
    lines[1] = fields.join(",");
    fs::write(dir.path().join("atc.csv"), lines.join("\n") + "\n").unwrap();
    let s = load_series(&manifest).unwrap();
    assert_eq!(s.instances[hour].line(&id).unwrap().atc_rev, 0.0);
    assert!(s.warnings.iter().any(|w| w.contains(&id) && w.contains("clamped")));
}

fn circuit(id: &str, kind: &str, from: &str, to: &str, limit: f64, r: Option<f64>) -> Circuit {
    Circuit {
        id: id.into(),
        kind: kind.into(),
        from_node: from.into(),
        to_node: to.into(),
        limit_mw: limit,
        r_ohm: r,
        v_kv: r.map(|_| 400.0),
        quad_a: None,
        quad_b: None,
        quad_c: None,
    }
}

fn toy_nodal() -> NodalData {
    NodalData {
        node_zone: BTreeMap::from([
            ("n1".to_string(), "SE3".to_string()),
            ("n2".to_string(), "SE3".to_string()),
            ("n3".to_string(), "SE1".to_string()),
            ("n4".to_string(), "FI".to_string()),
        ]),
        demand: vec![(0, "n1".into(), 100.0), (0, "n2".into(), 50.0), (0, "n3".into(), 30.0), (0, "n4".into(), 20.0)],
        injections: vec![(0, "n2".into(), 12.0), (0, "n4".into(), -4.0)],
        generators: vec![
            Generator { id: "g1".into(), zone: "n1".into(), cost: 10.0, p_min: 0.0, p_max: 300.0 },
            Generator { id: "g3".into(), zone: "n3".into(), cost: 20.0, p_min: 0.0, p_max: 150.0 },
        ],
        circuits: vec![
            circuit("c12", "AC", "n1", "n2", 999.0, Some(1.0)),
            circuit("c13a", "AC", "n1", "n3", 500.0, Some(2.0)),
            circuit("c23", "AC", "n3", "n2", 700.0, Some(2.0)),
            circuit("c34", "AC", "n3", "n4", 300.0, Some(4.0)),
            circuit("dc", "HVDC", "n2", "n4", 1200.0, None),
        ],
    }
}

#[test]
fn nodal_values_are_summed_per_zone() {
    let (ds, _) = aggregate_nodal_to_zonal(&toy_nodal()).unwrap();
    assert_eq!(ds.demand[&(0, "SE3".to_string())], 150.0);
    assert_eq!(ds.injections[&(0, "SE3".to_string())], 12.0);
    assert_eq!(ds.generators.iter().find(|g| g.id == "g3").unwrap().zone, "SE1");
}

#[test]
fn parallel_circuits_become_one_equivalent_line() {
    let (ds, rep) = aggregate_nodal_to_zonal(&toy_nodal()).unwrap();
    // c13a and c23 both join SE3 and SE1: R = 2 || 2 = 1, ATC = 500 + 700.
    let eq = rep.equivalent_lines.iter().find(|e| e.members.len() == 2).unwrap();
    assert_eq!(eq.members, vec!["c13a", "c23"]);
    assert_eq!(eq.r_eq_ohm, Some(1.0));
    assert!(eq.atc_is_sum_of_limits);
    let line = ds.lines.iter().find(|l| l.id == eq.id).unwrap();
    assert_eq!(line.rated_capacity, 1200.0);
    assert_eq!(ds.atc[&(0, eq.id.clone())], (1200.0, 1200.0));
    let a = line.loss_model.as_ref().unwrap().quad_a;
    assert!((a - 1.0 / (400.0 * 400.0)).abs() < 1e-18);

    assert_eq!(rep.dropped_internal_circuits, vec!["c12"]);
    let dc = ds.lines.iter().find(|l| l.id == "dc").unwrap();
    assert_eq!((dc.kind, dc.from_zone.as_str(), dc.to_zone.as_str()), (LineKind::Hvdc, "SE3", "FI"));
}

#[test]
fn single_node_zones_aggregate_to_themselves() {
    let mut data = toy_nodal();
    data.node_zone.remove("n2");
    data.demand.retain(|(_, n, _)| n != "n2");
    data.injections.retain(|(_, n, _)| n != "n2");
    data.circuits.retain(|c| c.from_node != "n2" && c.to_node != "n2");
    let (ds, rep) = aggregate_nodal_to_zonal(&data).unwrap();
    assert_eq!(ds.demand[&(0, "SE3".to_string())], 100.0);
    assert_eq!(ds.demand[&(0, "SE1".to_string())], 30.0);
    assert!(rep.equivalent_lines.iter().all(|e| e.members.len() == 1));
    assert_eq!(ds.lines.len(), 2);
}

#[test]
fn unmapped_node_is_an_error() {
    let mut data = toy_nodal();
    data.demand.push((0, "ghost".into(), 1.0));
    assert!(matches!(aggregate_nodal_to_zonal(&data), Err(DatasetError::UnmappedNode(n)) if n == "ghost"));
}

#[test]
fn nodal_manifest_loads_through_aggregation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "nodes.csv", "node,zone\nn1,A\nn2,A\nn3,B\n");
    write(p, "demand.csv", "hour,node,mw\n0,n1,100\n0,n2,50\n0,n3,80\n1,n1,90\n1,n2,40\n1,n3,85\n");
    write(p, "gens.csv", "id,node,cost,p_min,p_max\ng1,n1,10,0,400\ng3,n3,40,0,200\n");
    write(
        p,
        "circuits.csv",
        "id,kind,from_node,to_node,limit_mw,r_ohm,v_kv,quad_a,quad_b,quad_c\nx1,AC,n1,n3,200,2,400,,,\nx2,AC,n2,n3,300,2,400,,,\n",
    );
    write(p, "m.toml", "[nodal]\nnodes = \"nodes.csv\"\ndemand = \"demand.csv\"\ngenerators = \"gens.csv\"\ncircuits = \"circuits.csv\"\n");
    let s = load_series(&p.join("m.toml")).unwrap();
    assert_eq!(s.instances.len(), 2);
    assert_eq!(s.instances[0].zones.iter().find(|z| z.id == "A").unwrap().demand, 150.0);
    let l = &s.instances[1].interconnectors[0];
    assert_eq!((l.id.as_str(), l.atc_fwd), ("A-B", 500.0));
    assert_eq!(s.aggregation.unwrap().equivalent_lines[0].r_eq_ohm, Some(1.0));
}

#[test]
fn config_file_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "ok.toml", "scenarios = [\"S1\", \"S2\"]\nsegment_mw = 30\nworkers = 2\n");
    let cfg = load_config(&dir.path().join("ok.toml")).unwrap();
    assert_eq!((cfg.segment_mw, cfg.workers), (30.0, 2));
    write(dir.path(), "bad.toml", "segment_mw = \"wide\"\n");
    assert!(matches!(load_config(&dir.path().join("bad.toml")), Err(DatasetError::Config { .. })));
}

fn strip_factors(mut inst: MarketInstance) -> MarketInstance {
    for l in &mut inst.interconnectors {
        if let Some(m) = &mut l.loss_model {
            m.linear = None;
            m.piecewise = None;
        }
    }
    inst
}

fn random_series(seed: u64, hours: usize) -> Vec<MarketInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = strip_factors(common::random_positive(&mut rng));
    (0..hours)
        .map(|h| {
            let mut inst = base.clone();
            inst.timestamp = h;
            for (k, z) in inst.zones.iter_mut().enumerate() {
                z.demand *= 1.0 + 0.1 * ((h + k) as f64).sin();
                z.fixed_injection -= h as f64 / 3.0;
            }
            for l in &mut inst.interconnectors {
                l.atc_fwd *= 0.9 + 0.01 * h as f64;
            }
            inst
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn write_then_load_is_identity(seed in any::<u64>(), hours in 1usize..5) {
        let series = random_series(seed, hours);
        let history = vec![FlowHistory { line: series[0].interconnectors[0].id.clone(), samples: vec![1.5, -0.25, 0.1] }];
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_series(dir.path(), &series, &history).unwrap();
        let loaded = load_series(&manifest).unwrap();
        prop_assert_eq!(loaded.instances, series);
        prop_assert_eq!(loaded.flow_history, history);
    }

    #[test]
    fn aggregation_conserves_totals(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let nz = rng.gen_range(1..4);
        let nn = rng.gen_range(nz..10);
        let node_zone: BTreeMap<String, String> = (0..nn).map(|i| (format!("n{i}"), format!("Z{}", i % nz))).collect();
        let demand: Vec<(usize, String, f64)> = (0..nn).flat_map(|i| (0..2).map(move |h| (h, format!("n{i}"), 10.0 * (i + h) as f64 + 0.5))).collect();
        let injections: Vec<(usize, String, f64)> = (0..nn).map(|i| (0, format!("n{i}"), i as f64 - 2.25)).collect();
        let generators: Vec<Generator> = (0..nn)
            .map(|i| Generator { id: format!("g{i}"), zone: format!("n{i}"), cost: 1.0, p_min: 0.0, p_max: 37.5 * (i + 1) as f64 })
            .collect();
        let data = NodalData { node_zone, demand: demand.clone(), injections: injections.clone(), generators: generators.clone(), circuits: Vec::new() };
        let (ds, _) = aggregate_nodal_to_zonal(&data).unwrap();
        let total = |v: &[(usize, String, f64)]| v.iter().map(|x| x.2).sum::<f64>();
        prop_assert!((ds.demand.values().sum::<f64>() - total(&demand)).abs() < 1e-9);
        prop_assert!((ds.injections.values().sum::<f64>() - total(&injections)).abs() < 1e-9);
        let cap = |g: &[Generator]| g.iter().map(|g| g.p_max).sum::<f64>();
        prop_assert_eq!(cap(&ds.generators), cap(&generators));
    }
}
