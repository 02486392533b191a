use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rtahs_core::dynamics::{assemble_matrices, build_state_space, DofId, ModalParams};
use rtahs_core::integrators::{
    newmark_step, rk4_step, simulate, GoverningModel, MechState, NewmarkParams, Scheme, Structure,
};

fn series_exp(a: &DMatrix<f64>, dt: f64, terms: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..terms {
        term = &term * a * (dt / k as f64);
        sum += &term;
    }
    sum
}

#[test]
fn transition_matrix_matches_power_series() {
    let params = [
        ModalParams::new(DofId::Heave, 9.096, 0.003, 5.236).unwrap(),
        ModalParams::new(DofId::Torsion, 0.3952, 0.003, 14.556).unwrap(),
    ];
    let ss = build_state_space(&params, 0.001).unwrap();
    let reference = series_exp(&ss.a, 0.001, 20);
    assert!((&ss.phi - reference).amax() < 1e-12);
}

#[test]
fn dof_order_of_input_is_irrelevant() {
    let h = ModalParams::new(DofId::Heave, 9.096, 0.003, 5.236).unwrap();
    let t = ModalParams::new(DofId::Torsion, 0.3952, 0.003, 14.556).unwrap();
    let l = ModalParams::new(DofId::Transverse, 9.096, 0.004, 3.0).unwrap();
    let a = build_state_space(&[h, t, l], 0.002).unwrap();
    let b = build_state_space(&[l, h, t], 0.002).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dofs, vec![DofId::Heave, DofId::Transverse, DofId::Torsion]);
}

proptest! {
    #[test]
    fn continuous_poles_never_in_right_half_plane(
        xi in 0.0f64..2.0,
        w in 0.1f64..100.0,
        m in 0.01f64..1e4,
        dt in 1e-4f64..1e-2,
    ) {
        let p = ModalParams::new(DofId::Heave, m, xi, w).unwrap();
        let ss = build_state_space(&[p], dt).unwrap();
        for ev in ss.a.complex_eigenvalues().iter() {
            prop_assert!(ev.re <= 1e-9 * w, "pole {ev}");
        }
        for ev in ss.phi.complex_eigenvalues().iter() {
            prop_assert!(ev.norm() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn newmark_average_acceleration_preserves_energy() {
    let mats = assemble_matrices(&[ModalParams::new(DofId::Heave, 182.178, 0.0, 17.64).unwrap()]).unwrap();
    let (m, k) = (mats.mass[(0, 0)], mats.stiffness[(0, 0)]);
    let energy = |s: &MechState| 0.5 * m * s.v[0] * s.v[0] + 0.5 * k * s.x[0] * s.x[0];
    let f = DVector::zeros(1);
    let mut s = MechState::new(DVector::from_element(1, 0.01), DVector::zeros(1));
    let e0 = energy(&s);
    for _ in 0..10_000 {
        s = newmark_step(&s, &f, &f, &mats, 0.001, NewmarkParams::default()).unwrap();
    }
    let drift = (energy(&s) - e0).abs() / e0;
    assert!(drift <= 1e-6, "relative energy drift {drift:e}");
}

fn rk4_error(dt: f64) -> f64 {
    // x'' = -x from (1, 0); exact x(t) = cos t
    let deriv = |_t: f64, y: &DVector<f64>| DVector::from_vec(vec![y[1], -y[0]]);
    let steps = (2.0 / dt).round() as usize;
    let mut y = DVector::from_vec(vec![1.0, 0.0]);
    for i in 0..steps {
        y = rk4_step(deriv, &y, i as f64 * dt, dt).unwrap();
    }
    (y[0] - 2.0f64.cos()).abs()
}

#[test]
fn rk4_is_fourth_order() {
    let ratio = rk4_error(0.1) / rk4_error(0.05);
    assert!((ratio - 16.0).abs() <= 2.0, "error ratio {ratio}");
}

#[test]
fn free_decay_matches_logarithmic_decrement() {
    let xi = 0.02;
    let w = 17.64;
    let mats = assemble_matrices(&[ModalParams::new(DofId::Heave, 182.178, xi, w).unwrap()]).unwrap();
    let model = GoverningModel {
        structure: Structure::Linear(mats),
        scheme: Scheme::Rk4,
        divergence_limit: f64::INFINITY,
    };
    let zero = |_t: f64, _x: &DVector<f64>, _v: &DVector<f64>| DVector::zeros(1);
    let init = MechState::new(DVector::from_element(1, 0.01), DVector::zeros(1));
    let sim = simulate(&model, zero, init, 0.0005, 5.0).unwrap();
    let x = sim.series.channel("heave_x").unwrap();
    // positive local maxima, refined by a parabola through three samples
    let peaks: Vec<f64> = (1..x.len() - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > 0.0)
        .map(|i| {
            let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
            let denom = a - 2.0 * b + c;
            let off = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            b - 0.25 * (a - c) * off
        })
        .collect();
    assert!(peaks.len() >= 10);
    let cycles = (peaks.len() - 1) as f64;
    let measured = (peaks[0] / peaks[peaks.len() - 1]).ln() / cycles;
    let expected = 2.0 * std::f64::consts::PI * xi / (1.0 - xi * xi).sqrt();
    let rel = (measured - expected).abs() / expected;
    assert!(rel <= 0.01, "log decrement {measured} vs {expected}");
}

#[test]
fn newmark_and_rk4_agree_on_smooth_response() {
    let mats = assemble_matrices(&[ModalParams::new(DofId::Heave, 182.178, 0.005, 17.64).unwrap()]).unwrap();
    let zero = |_t: f64, _x: &DVector<f64>, _v: &DVector<f64>| DVector::zeros(1);
    let init = MechState::new(DVector::from_element(1, 0.01), DVector::zeros(1));
    let run = |scheme| {
        let model = GoverningModel {
            structure: Structure::Linear(mats.clone()),
            scheme,
            divergence_limit: f64::INFINITY,
        };
        simulate(&model, zero, init.clone(), 0.001, 2.0).unwrap().series
    };
    let a = run(Scheme::Rk4);
    let b = run(Scheme::Newmark(NewmarkParams::default()));
    let (xa, xb) = (a.channel("heave_x").unwrap(), b.channel("heave_x").unwrap());
    let worst = xa.iter().zip(xb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    // trapezoidal-rule period error over ~6 cycles
    assert!(worst < 2e-4, "{worst}");
}
