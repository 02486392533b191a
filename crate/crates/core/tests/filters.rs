use nalgebra::DMatrix;
use rtahs_core::cosim::{PhysicalReply, PhysicalSubstructure};
use rtahs_core::estimators::EstimatorKind;
use rtahs_core::harness::config::{CaseConfig, CaseId};
use rtahs_core::harness::run::{build_numerical, physical_config};

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn assert_psd_throughout(cfg: &CaseConfig) {
    let mut numerical = build_numerical(cfg).unwrap();
    let mut physical = PhysicalSubstructure::new(physical_config(cfg).unwrap()).unwrap();
    for k in 0..cfg.steps() {
        let cmd = numerical.command(k).unwrap();
        let PhysicalReply::Measurement { forces, displacements } = physical.on_command(k as u32, &cmd).unwrap() else {
            panic!("diverged at {k}");
        };
        numerical.on_measurement(k, &forces, &displacements).unwrap();
        let st = numerical.state();
        assert_eq!(st.p, st.p.transpose(), "P asymmetric at step {k}");
        assert!(
            min_eigenvalue(&st.p) > 0.0,
            "P not PSD at step {k} ({:?}, {})",
            cfg.estimator,
            cfg.case
        );
        if cfg.estimator == EstimatorKind::Aekf {
            assert!(min_eigenvalue(&st.noise.big_q) > 0.0, "Q-hat at step {k}");
            assert!(min_eigenvalue(&st.noise.big_r) > 0.0, "R-hat at step {k}");
        }
    }
}

#[test]
fn covariance_stays_psd_in_every_case() {
    for case in CaseId::ALL {
        for est in [EstimatorKind::Kf, EstimatorKind::Ekf, EstimatorKind::Aekf] {
            let mut cfg = CaseConfig::preset(case);
            cfg.estimator = est;
            cfg.t_end = 10.0;
            assert_psd_throughout(&cfg);
        }
    }
}

#[test]
fn covariance_stays_psd_under_delay_and_divergence() {
    let mut cfg = CaseConfig::preset(CaseId::Case2Dof);
    cfg.delay = 0.1;
    assert_psd_throughout(&cfg);
    let mut cfg = CaseConfig::preset(CaseId::Case1Linear);
    cfg.aero.y1 = 11.966;
    cfg.estimator = EstimatorKind::Aekf;
    assert_psd_throughout(&cfg);
}
