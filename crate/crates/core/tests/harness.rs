use proptest::prelude::*;
use rtahs_core::dynamics::DofId;
use rtahs_core::estimators::{BiasReference, EstimatorKind};
use rtahs_core::harness::config::{CaseConfig, CaseId, CosimMode, CoupledPreset, ForceKind};
use rtahs_core::harness::{compare_series, run_case, Envelope, Summary};
use rtahs_core::series::TimeSeries;

#[test]
fn identical_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = CaseConfig::preset(CaseId::Case1Nonlinear);
    cfg.t_end = 2.0;
    let mut files = Vec::new();
    for i in 0..2 {
        let run = run_case(&cfg).unwrap();
        let rtahs = dir.path().join(format!("rtahs{i}.csv"));
        let summary = dir.path().join(format!("summary{i}.txt"));
        run.rtahs.save_csv(&rtahs).unwrap();
        Summary::for_case(&run).save(&summary).unwrap();
        files.push((std::fs::read(rtahs).unwrap(), std::fs::read(summary).unwrap()));
    }
    assert_eq!(files[0], files[1]);

    cfg.seed += 1;
    let other = run_case(&cfg).unwrap();
    let mut buf = Vec::new();
    other.rtahs.write_csv(&mut buf).unwrap();
    assert_ne!(buf, files[0].0);
}

#[test]
fn csv_round_trip_is_exact() {
    let mut cfg = CaseConfig::preset(CaseId::Case2Dof);
    cfg.t_end = 1.0;
    let run = run_case(&cfg).unwrap();
    let mut buf = Vec::new();
    run.rtahs.write_csv(&mut buf).unwrap();
    let header = std::str::from_utf8(&buf).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "t,heave_x,heave_x_dot,heave_f,torsion_x,torsion_x_dot,torsion_f"
    );
    let back = TimeSeries::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, run.rtahs);
}

fn series(values: &[f64]) -> TimeSeries {
    let mut s = TimeSeries::for_dofs(0.001, &[DofId::Heave]);
    for (k, &v) in values.iter().enumerate() {
        s.push_state(k as f64 * 0.001, &[v], &[0.0], &[0.0]);
    }
    s
}

proptest! {
    #[test]
    fn rms_error_is_symmetric(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..300)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (sa, sb) = (series(&a), series(&b));
        let ab = compare_series(&sa, &sb, "heave_x").unwrap();
        let ba = compare_series(&sb, &sa, "heave_x").unwrap();
        prop_assert_eq!(ab.rms_error, ba.rms_error);
        prop_assert_eq!(ab.peak_error, ba.peak_error);
        prop_assert!(ab.rms_error >= 0.0 && ab.peak_error >= ab.rms_error);
        if let Some(n) = ab.normalized_rms {
            prop_assert!(n >= 0.0);
        }
    }
}

#[test]
fn full_schema_loads_from_toml() {
    let text = r#"
case = "case2dof"
dt = 0.002
t_end = 4.0
estimator = "ekf"
mode = "udp"
delay = 0.05
seed = 9

[[structure]]
dof = "torsion"
inertia = 0.4
damping_ratio = 0.004
circ_freq = 14.0

[[structure]]
dof = "heave"
inertia = 9.0
damping_ratio = 0.004
circ_freq = 5.0

[initial]
displacement = [0.002, 0.004]
velocity = [0.0, 0.01]

[aero]
rho = 1.2

[forces]
span = 1.0
preset = "custom"
coupled = { damping = [[-0.1, 0.0], [0.0, 0.0]], stiffness = [[0.0, 1.0], [0.0, -1.0]] }

[filter]
process_noise = 1e-7
bias_reference = "linearized"
initial_state = [0.002, 0.0, 0.004, 0.01]

[physical]
mode = "echo"
force_noise_std = 0.001

[protocol]
timeout_ms = 50
max_resends = 5

[oracle]
divergence_factor = 100.0
"#;
    let cfg = CaseConfig::from_toml_str(text, None).unwrap();
    assert_eq!(cfg.dt, 0.002);
    assert_eq!(cfg.estimator, EstimatorKind::Ekf);
    assert_eq!(cfg.mode, CosimMode::Udp);
    assert_eq!(cfg.structure[0].dof, DofId::Torsion);
    assert_eq!(cfg.aero.rho, 1.2);
    assert_eq!(cfg.aero.wind_speed, 9.1);
    assert_eq!(cfg.forces.preset, CoupledPreset::Custom);
    assert_eq!(cfg.coupled_matrices().stiffness, [[0.0, 1.0], [0.0, -1.0]]);
    assert_eq!(cfg.filter.bias_reference, BiasReference::Linearized);
    assert_eq!(cfg.filter.measurement_noise, 1e-8);
    assert_eq!(cfg.protocol.max_resends, 5);
    assert_eq!(cfg.force_kind(), ForceKind::CoupledSe);
    // and it runs
    let run = run_case(&cfg).unwrap();
    assert!(run.failure.is_none());
    assert_eq!(run.rtahs.len(), cfg.steps());
}

#[test]
fn case1_envelopes_follow_y1() {
    for (y1, expected) in [(6.5, Envelope::Convergent), (11.966, Envelope::Divergent)] {
        let mut cfg = CaseConfig::preset(CaseId::Case1Linear);
        cfg.aero.y1 = y1;
        let run = run_case(&cfg).unwrap();
        assert_eq!(run.primary().classification, expected, "Y1 = {y1}");
    }
}

#[test]
fn coupled_presets_give_opposite_torsional_trends() {
    let mut cfg = CaseConfig::preset(CaseId::Case2Dof);
    let torsion = |cfg: &CaseConfig| run_case(cfg).unwrap().channel("torsion_x").unwrap().classification;
    assert_eq!(torsion(&cfg), Envelope::Convergent);
    cfg.forces.preset = CoupledPreset::Divergent;
    assert_eq!(torsion(&cfg), Envelope::Divergent);
}
