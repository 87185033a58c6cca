use std::path::{Path, PathBuf};

use wtrom::harness::emit::{read_trajectory_csv, trajectory_csv_string, trajectory_svg, TRAJECTORY_COLUMNS};
use wtrom::harness::{
    self, compare, critical_clearing_time, fault_report, is_stable, load_document, load_scenario,
    parse_scenario, run_model, scenario_from_document, set_parameter, sweep, ModelKind, Trajectory,
};
use wtrom::rom::{RunStatus, SolverConfig};
use wtrom::seqnet::{FaultKind, SequenceImpedance};
use wtrom::Error;

fn manifest(parts: &[&str]) -> PathBuf {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.extend(parts);
    p
}

fn bundled(name: &str) -> PathBuf {
    manifest(&["scenarios", name])
}

fn loss_of_sync() -> PathBuf {
    manifest(&["tests", "data", "loss_of_sync.scn"])
}

fn text(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn parse(s: &str) -> wtrom::Result<harness::Scenario> {
    parse_scenario(s, Path::new("inline.scn"))
}

const MINIMAL: &str = r#"
schema_version = 1
label = "minimal"
t_end_s = 0.5

[network]
vg_pu = 1.0
zg1_r_pu = 0.0037
zg1_l_pu = 0.06

[fault]
kind = "SLG_A"
zf_pu = 0.05
t_on_s = 0.1
t_clear_s = 0.2

[currents.prefault]
id_pu = 1.0
iq_pu = -0.1

[currents.fault]
id_pu = 0.0
iq_pu = -0.5
iq_neg_pu = 0.2

[pll]
kp_radps_per_pu = 14.08
ki_radps2_per_pu = 845.1
"#;

#[test]
fn bundled_scenarios_validate() {
    for name in ["slg_paper.scn", "dlg_paper.scn", "dl_paper.scn"] {
        let sc = load_scenario(bundled(name)).unwrap();
        assert_eq!(sc.schema_version, 1);
        assert_eq!(sc.hash.len(), 64);
        assert!((sc.zf_pu() - 6.02e-4 / (690.0f64.powi(2) / 12e6)).abs() < 1e-12);
        let v_peak = 690.0 * (2.0f64 / 3.0).sqrt();
        assert!((sc.pll.kp - 0.025 * v_peak).abs() < 1e-12);
        assert!((sc.pll.ki - 1.5 * v_peak).abs() < 1e-12);
        assert_eq!(sc.zset.neg, sc.zset.pos);
        assert_eq!(sc.zset.zero, sc.zset.pos);
    }
}

#[test]
fn minimal_scenario_takes_defaults() {
    let sc = parse(MINIMAL).unwrap();
    assert_eq!(sc.zset.neg, SequenceImpedance::new(0.0037, 0.06));
    assert_eq!(sc.zset.zero, SequenceImpedance::new(0.0037, 0.06));
    assert_eq!(sc.series, SequenceImpedance::ZERO);
    assert_eq!(sc.cc_tau, 2e-3);
    assert_eq!(sc.notch, None);
    assert_eq!(sc.solver, SolverConfig::new(2.0 * std::f64::consts::PI * 50.0));
    assert_eq!(sc.refmodel_dt, sc.solver.dt);
    assert_eq!(sc.grid_frequency.value(0.3), sc.omega0());
}

#[test]
fn invalid_scenarios_name_the_problem() {
    let cases = [
        ("zf_pu = 0.05", "zf_pu = -0.05"),
        ("t_clear_s = 0.2", "t_clear_s = 0.05"),
        ("t_end_s = 0.5", "t_end_s = 0.05"),
        ("schema_version = 1", "schema_version = 2"),
        ("zg1_r_pu = 0.0037", "zg1_r_pu = -0.0037"),
        ("ki_radps2_per_pu = 845.1", "ki_radps2_per_pu = 0.0"),
    ];
    for (from, to) in cases {
        let r = parse(&MINIMAL.replace(from, to));
        assert!(matches!(r, Err(Error::Validation(_))), "{to}: {r:?}");
    }
    let typo = parse(&MINIMAL.replace("zf_pu = 0.05", "zf_pu = 0.05\nzf_phm = 1.0"));
    assert!(matches!(typo, Err(Error::Parse { .. })));
    let both = parse(&MINIMAL.replace("zf_pu = 0.05", "zf_pu = 0.05\nzf_ohm = 1.0"));
    assert!(matches!(both, Err(Error::Validation(_))));
}

#[test]
fn hash_follows_content_not_layout() {
    let a = parse(MINIMAL).unwrap();
    let b = parse(&format!("# a comment\n{}", MINIMAL.replace("zf_pu = 0.05", "zf_pu   =   0.05"))).unwrap();
    let c = parse(&MINIMAL.replace("zf_pu = 0.05", "zf_pu = 0.06")).unwrap();
    assert_eq!(a.hash, b.hash);
    assert_ne!(a.hash, c.hash);
}

#[test]
fn open_fault_leaves_the_rom_at_rest() {
    let sc = parse(&MINIMAL.replace("zf_pu = 0.05", "zf_pu = 1e9").replace("kind = \"SLG_A\"", "kind = \"BALANCED_3PH\""))
        .unwrap();
    let mut sc = sc;
    sc.fault_currents = harness::scenario::FaultCurrents::Fixed(sc.prefault_currents);
    let t = harness::run_rom(&sc).unwrap();
    let d0 = t.rows[0].delta;
    assert!(t.rows.iter().all(|r| (r.delta - d0).abs() < 1e-6 && r.delta_dot.abs() < 1e-4));
    assert_eq!(t.status, RunStatus::Completed);
}

#[test]
fn loss_of_synchronism_diverges_in_both_models() {
    let sc = load_scenario(loss_of_sync()).unwrap();
    let out = harness::run(&sc, ModelKind::Both).unwrap();
    for t in [out.rom.as_ref().unwrap(), out.refmodel.as_ref().unwrap()] {
        let RunStatus::Diverged { t: td } = t.status else { panic!("{} did not diverge", t.model) };
        assert!(td > sc.fault.t_on && td < sc.t_end);
        assert_eq!(t.t_end(), Some(td));
        assert!(!is_stable(&sc, t));
    }
    // Comparison stays inside the shorter run.
    let report = out.report.unwrap();
    let shorter = out.rom.unwrap().t_end().unwrap().min(out.refmodel.unwrap().t_end().unwrap());
    assert!(report.window.1 <= shorter);
}

#[test]
fn comparison_never_extrapolates() {
    let sc = load_scenario(bundled("slg_paper.scn")).unwrap();
    let rom = harness::run_rom(&sc).unwrap();
    let mut reference = harness::run_refmodel(&sc).unwrap();
    reference.rows.retain(|r| r.t <= 0.6);
    let r = compare(&rom, &reference, 0.0, &[]).unwrap();
    assert_eq!(r.window, (0.0, 0.6));
    assert_eq!(r.samples, 6001);
    let empty = Trajectory { rows: Vec::new(), ..rom.clone() };
    assert!(compare(&rom, &empty, 0.0, &[]).is_err());
}

#[test]
fn empty_sweep_gives_an_empty_table() {
    let doc = load_document(bundled("slg_paper.scn")).unwrap();
    assert!(sweep(&doc, "fault.zf_ohm", &[], ModelKind::Rom, None).unwrap().is_empty());
}

#[test]
fn unknown_sweep_parameter_is_reported() {
    let doc = load_document(bundled("slg_paper.scn")).unwrap();
    for path in ["fault.zf_megaohm", "label", "pll.kp_radps_per_v.x", "solver.rate_jump"] {
        let r = sweep(&doc, path, &[1.0], ModelKind::Rom, None);
        assert!(matches!(r, Err(Error::UnknownParameter(_))), "{path}");
    }
}

#[test]
fn baseline_sweep_row_matches_a_single_run() {
    let path = bundled("slg_paper.scn");
    let doc = load_document(&path).unwrap();
    let rows = sweep(&doc, "pll.kp_radps_per_v", &[0.025], ModelKind::Rom, None).unwrap();
    let sc = load_scenario(&path).unwrap();
    let single = harness::run_rom(&sc).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].stable, is_stable(&sc, &single));
    assert_eq!(rows[0].status, single.status);

    let mut edited = doc.clone();
    set_parameter(&mut edited, "pll.kp_radps_per_v", 0.025).unwrap();
    let again = harness::run_rom(&scenario_from_document(&edited).unwrap()).unwrap();
    assert_eq!(again.rows, single.rows);
}

fn assert_monotone(rows: &[harness::SweepRow]) {
    let first_stable = rows.iter().position(|r| r.stable).unwrap_or(rows.len());
    assert!(rows[first_stable..].iter().all(|r| r.stable), "{rows:?}");
}

#[test]
fn shallower_faults_are_never_less_stable() {
    let values: Vec<f64> = (0..8).map(|i| 6.02e-4 * 4f64.powi(i)).collect();
    let doc = load_document(bundled("slg_paper.scn")).unwrap();
    let rows = sweep(&doc, "fault.zf_ohm", &values, ModelKind::Rom, None).unwrap();
    assert!(rows.windows(2).all(|w| w[0].value < w[1].value));
    assert_monotone(&rows);

    // The weak-grid case crosses the boundary inside the sweep.
    let mut doc = load_document(loss_of_sync()).unwrap();
    doc["fault"].as_table_mut().unwrap().insert("t_clear_s".into(), toml::Value::Float(0.33));
    let values: Vec<f64> = (0..12).map(|i| 0.01 * i as f64).collect();
    let rows = sweep(&doc, "fault.zf_pu", &values, ModelKind::Rom, None).unwrap();
    assert!(!rows[0].stable && rows.last().unwrap().stable, "{rows:?}");
    assert_monotone(&rows);
}

#[test]
fn clearing_time_matches_an_exhaustive_scan() {
    let mut sc = load_scenario(loss_of_sync()).unwrap();
    sc.fault.t_clear = Some(0.25);
    let tol = 1e-3;
    let c = critical_clearing_time(&sc, (0.21, 0.51), tol, ModelKind::Rom).unwrap();
    assert!(c.bisection_runs <= 9);
    let stable_at = |tc: f64| {
        let mut trial = sc.clone();
        trial.fault.t_clear = Some(tc);
        is_stable(&trial, &run_model(&trial, ModelKind::Rom).unwrap())
    };
    let grid: Vec<f64> = (0..=300).map(|k| 0.21 + k as f64 * 1e-3).collect();
    let flags: Vec<bool> = grid.iter().map(|&t| stable_at(t)).collect();
    let change = flags.iter().position(|s| !s).unwrap();
    assert!(flags[change..].iter().all(|s| !s), "scan is not monotone");
    let (lo, hi) = (grid[change - 1], grid[change]);
    assert!(c.cct >= lo - tol && c.cct <= hi + tol, "cct {} vs scan [{lo}, {hi}]", c.cct);

    let bad = critical_clearing_time(&sc, (0.21, 0.25), tol, ModelKind::Rom);
    assert!(matches!(bad, Err(Error::BracketInvalid { .. })));
}

#[test]
fn fault_report_flags_the_documented_cases() {
    let slg = fault_report(&load_scenario(bundled("slg_paper.scn")).unwrap()).unwrap();
    assert_eq!(slg.kind, FaultKind::SlgA);
    assert!(!slg.flagged && slg.relative_discrepancy < 1e-9);
    assert!(slg.note.is_none());
    let dl = fault_report(&load_scenario(bundled("dl_paper.scn")).unwrap()).unwrap();
    assert!(dl.flagged && dl.note.is_some());
    let dlg = fault_report(&load_scenario(bundled("dlg_paper.scn")).unwrap()).unwrap();
    assert!(!dlg.flagged, "equal z1 and z2 keep the DLG closed form exact");
}

#[test]
fn csv_round_trip_and_layout() {
    let sc = load_scenario(bundled("dlg_paper.scn")).unwrap();
    let t = harness::run_rom(&sc).unwrap();
    let csv = trajectory_csv_string(&t).unwrap();
    assert!(csv.starts_with("# scenario dlg_paper\n"));
    assert!(csv.contains(&format!("# scenario_sha256 {}\n", sc.hash)));
    assert!(csv.contains("# event 0.2 fault on DLG_BC\n"));
    assert!(csv.contains("# event 0.4 fault cleared\n"));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, TRAJECTORY_COLUMNS.join(","));
    let back = read_trajectory_csv(csv.as_bytes()).unwrap();
    assert_eq!(back, t);
}

#[test]
fn empty_trajectory_writes_only_the_header() {
    let t = Trajectory {
        label: "empty".into(),
        model: "rom".into(),
        scenario_hash: "0".repeat(64),
        rows: Vec::new(),
        events: Vec::new(),
        status: RunStatus::Completed,
    };
    let csv = trajectory_csv_string(&t).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body, vec![TRAJECTORY_COLUMNS.join(",")]);
    assert_eq!(read_trajectory_csv(csv.as_bytes()).unwrap(), t);
}

#[test]
fn comparison_svg_has_two_series_per_panel() {
    let sc = load_scenario(bundled("slg_paper.scn")).unwrap();
    let out = harness::run(&sc, ModelKind::Both).unwrap();
    let svg = trajectory_svg(&[out.rom.as_ref().unwrap(), out.refmodel.as_ref().unwrap()]);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches(r#"class="panel""#).count(), 2);
    assert_eq!(svg.matches(r#"data-label="rom""#).count(), 2);
    assert_eq!(svg.matches(r#"data-label="refmodel""#).count(), 2);
    assert_eq!(svg.matches(r#"class="event""#).count(), 4);
}

#[test]
fn bundled_files_are_plain_text_with_units() {
    for name in ["slg_paper.scn", "dlg_paper.scn", "dl_paper.scn"] {
        let s = text(&bundled(name));
        for line in s.lines().filter(|l| l.contains('=') && !l.starts_with('#')) {
            let key = line.split('=').next().unwrap().trim();
            let unitless = ["schema_version", "label", "kind", "damping", "rate_jump", "refmodel_integrator"];
            assert!(
                unitless.contains(&key) || ["_pu", "_s", "_ohm", "_radps", "_hz", "_va", "_v"].iter().any(|u| key.contains(u)),
                "{name}: `{key}` carries no unit"
            );
        }
    }
}
