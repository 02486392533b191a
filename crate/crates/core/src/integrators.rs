//! Fixed-step reference integrators (Newmark-beta, classical RK4) and the
//! oracle driver that produces ground-truth time histories.
//!
//! These also run inside the surrogate physical substructure, so the physical
//! side and the stand-alone oracle produce bit-identical trajectories.

use nalgebra::{DMatrix, DVector};

use crate::aero::{amplitude_dep_damping, amplitude_dep_frequency, instantaneous_amplitude, ForceModel};
use crate::dynamics::{DofId, StructuralMatrices};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Displacement, velocity and acceleration at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub acc: DVector<f64>,
    pub t: f64,
}

impl MechState {
    pub fn at_rest(n: usize) -> Self {
        MechState {
            x: DVector::zeros(n),
            v: DVector::zeros(n),
            acc: DVector::zeros(n),
            t: 0.0,
        }
    }

    pub fn new(x: DVector<f64>, v: DVector<f64>) -> Self {
        let n = x.len();
        MechState {
            x,
            v,
            acc: DVector::zeros(n),
            t: 0.0,
        }
    }

    pub fn n_dof(&self) -> usize {
        self.x.len()
    }

    /// Interleaved `[x_0, v_0, x_1, v_1, ...]`, the estimator state layout.
    pub fn to_state_vector(&self) -> DVector<f64> {
        let n = self.n_dof();
        DVector::from_fn(2 * n, |i, _| if i % 2 == 0 { self.x[i / 2] } else { self.v[i / 2] })
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.v.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewmarkParams {
    pub gamma: f64,
    pub beta: f64,
}

impl Default for NewmarkParams {
    /// Average acceleration.
    fn default() -> Self {
        NewmarkParams { gamma: 0.5, beta: 0.25 }
    }
}

impl NewmarkParams {
    pub fn is_unconditionally_stable(&self) -> bool {
        self.gamma >= 0.5 && 2.0 * self.beta >= self.gamma
    }
}

/// Advances `M a + C v + K x = f` by one Newmark step.
///
/// The start-of-step acceleration is recomputed from `f_now` so the state's
/// stored `acc` never goes stale; `f_next` is the end-of-step force.
pub fn newmark_step(
    s: &MechState,
    f_now: &DVector<f64>,
    f_next: &DVector<f64>,
    mats: &StructuralMatrices,
    dt: f64,
    params: NewmarkParams,
) -> Result<MechState> {
    if !(dt > 0.0) {
        return Err(Error::validation(format!("dt must be positive, got {dt}")));
    }
    if !params.is_unconditionally_stable() {
        log::warn!(
            "Newmark gamma={} beta={} is only conditionally stable",
            params.gamma,
            params.beta
        );
    }
    let NewmarkParams { gamma, beta } = params;
    let (m, c, k) = (&mats.mass, &mats.damping, &mats.stiffness);
    let a0 = m
        .clone()
        .lu()
        .solve(&(f_now - c * &s.v - k * &s.x))
        .ok_or_else(|| Error::numerical(None, "singular mass matrix"))?;

    let x_pred = &s.x + &s.v * dt + &a0 * ((0.5 - beta) * dt * dt);
    let v_pred = &s.v + &a0 * ((1.0 - gamma) * dt);
    let k_eff: DMatrix<f64> = m + c * (gamma * dt) + k * (beta * dt * dt);
    let rhs = f_next - c * &v_pred - k * &x_pred;
    let a1 = k_eff
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical(None, "singular effective stiffness"))?;
    Ok(MechState {
        x: x_pred + &a1 * (beta * dt * dt),
        v: v_pred + &a1 * (gamma * dt),
        acc: a1,
        t: s.t + dt,
    })
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(mut deriv: F, y: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::validation(format!("dt must be positive, got {dt}")));
    }
    let check = |k: DVector<f64>| -> Result<DVector<f64>> {
        if k.iter().all(|v| v.is_finite()) {
            Ok(k)
        } else {
            Err(Error::numerical(None, "non-finite derivative"))
        }
    };
    let half = 0.5 * dt;
    let k1 = check(deriv(t, y))?;
    let k2 = check(deriv(t + half, &(y + &k1 * half)))?;
    let k3 = check(deriv(t + half, &(y + &k2 * half)))?;
    let k4 = check(deriv(t + dt, &(y + &k3 * dt)))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Single-DOF heave oscillator whose damping ratio and frequency follow the
/// instantaneous amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeDependentSdof {
    pub inertia: f64,
    pub omega0: f64,
    /// Section depth D entering both amplitude laws.
    pub depth: f64,
}

impl AmplitudeDependentSdof {
    /// `h'' = f/m - 2 xi(a) w(a) h' - w(a)^2 h`.
    pub fn acceleration(&self, h: f64, h_dot: f64, force: f64) -> f64 {
        let a = instantaneous_amplitude(h, h_dot, self.omega0);
        let xi = amplitude_dep_damping(a, self.depth);
        let w = amplitude_dep_frequency(a, self.depth, self.omega0);
        force / self.inertia - 2.0 * xi * w * h_dot - w * w * h
    }
}

/// The structural side of a governing equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Linear(StructuralMatrices),
    AmplitudeDependent(AmplitudeDependentSdof),
}

impl Structure {
    pub fn dofs(&self) -> Vec<DofId> {
        match self {
            Structure::Linear(m) => m.dofs.clone(),
            Structure::AmplitudeDependent(_) => vec![DofId::Heave],
        }
    }

    pub fn acceleration(&self, x: &DVector<f64>, v: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
        match self {
            // diagonal M
            Structure::Linear(m) => {
                let rhs = f - &m.damping * v - &m.stiffness * x;
                DVector::from_fn(rhs.len(), |i, _| rhs[i] / m.mass[(i, i)])
            }
            Structure::AmplitudeDependent(s) => DVector::from_element(1, s.acceleration(x[0], v[0], f[0])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Newmark(NewmarkParams),
    Rk4,
}

/// Governing equation plus the scheme used to integrate it.
#[derive(Debug, Clone, PartialEq)]
pub struct GoverningModel {
    pub structure: Structure,
    pub scheme: Scheme,
    /// Runs stop once any |x| exceeds this (flutter onset); infinite disables it.
    pub divergence_limit: f64,
}

/// Supplies the applied force `(t, x, v) -> f`.
pub trait ForceProvider {
    fn force(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
}

impl<F> ForceProvider for F
where
    F: Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    fn force(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self(t, x, v)
    }
}

impl ForceProvider for ForceModel {
    fn force(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(ForceModel::force(self, t, x.as_slice(), v.as_slice()))
    }
}

const NEWMARK_MAX_ITER: usize = 50;
const NEWMARK_FORCE_TOL: f64 = 1e-14;

/// Steps a [`GoverningModel`] under a state-dependent force.
#[derive(Debug, Clone)]
pub struct Stepper<F> {
    model: GoverningModel,
    force: F,
    state: MechState,
    force_now: DVector<f64>,
    dt: f64,
}

impl<F: ForceProvider> Stepper<F> {
    pub fn new(model: GoverningModel, force: F, init: MechState, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::validation(format!("dt must be positive, got {dt}")));
        }
        if let (Structure::AmplitudeDependent(_), Scheme::Newmark(_)) = (&model.structure, model.scheme) {
            return Err(Error::Config("Newmark integration requires a linear structure".into()));
        }
        let force_now = force.force(init.t, &init.x, &init.v);
        let mut state = init;
        state.acc = model.structure.acceleration(&state.x, &state.v, &force_now);
        Ok(Stepper {
            model,
            force,
            state,
            force_now,
            dt,
        })
    }

    pub fn state(&self) -> &MechState {
        &self.state
    }

    /// Force applied at the current state.
    pub fn force(&self) -> &DVector<f64> {
        &self.force_now
    }

    pub fn advance(&mut self) -> Result<()> {
        let dt = self.dt;
        let force = &self.force;
        let next = match (&self.model.structure, self.model.scheme) {
            (Structure::Linear(mats), Scheme::Newmark(params)) => {
                // implicit in the state-dependent force: fixed-point on f_next
                let s = &self.state;
                let t1 = s.t + dt;
                let x_guess = &s.x + &s.v * dt + &s.acc * (0.5 * dt * dt);
                let v_guess = &s.v + &s.acc * dt;
                let mut f_next = force.force(t1, &x_guess, &v_guess);
                let mut next = newmark_step(s, &self.force_now, &f_next, mats, dt, params)?;
                for _ in 0..NEWMARK_MAX_ITER {
                    let f_new = force.force(t1, &next.x, &next.v);
                    let change = (&f_new - &f_next).amax();
                    f_next = f_new;
                    next = newmark_step(s, &self.force_now, &f_next, mats, dt, params)?;
                    if change <= NEWMARK_FORCE_TOL * (1.0 + f_next.amax()) {
                        break;
                    }
                }
                next
            }
            (structure, Scheme::Rk4) => {
                let n = self.state.n_dof();
                let y = self.state.to_state_vector();
                let deriv = |t: f64, y: &DVector<f64>| {
                    let x = DVector::from_fn(n, |i, _| y[2 * i]);
                    let v = DVector::from_fn(n, |i, _| y[2 * i + 1]);
                    let f = force.force(t, &x, &v);
                    let a = structure.acceleration(&x, &v, &f);
                    DVector::from_fn(2 * n, |i, _| if i % 2 == 0 { v[i / 2] } else { a[i / 2] })
                };
                let y1 = rk4_step(deriv, &y, self.state.t, dt)?;
                let x = DVector::from_fn(n, |i, _| y1[2 * i]);
                let v = DVector::from_fn(n, |i, _| y1[2 * i + 1]);
                MechState {
                    acc: DVector::zeros(n),
                    x,
                    v,
                    t: self.state.t + dt,
                }
            }
            (Structure::AmplitudeDependent(_), Scheme::Newmark(_)) => unreachable!("rejected in new"),
        };
        self.force_now = force.force(next.t, &next.x, &next.v);
        let acc = self.model.structure.acceleration(&next.x, &next.v, &self.force_now);
        self.state = MechState { acc, ..next };
        Ok(())
    }

    /// True once the state is non-finite or beyond the divergence limit.
    pub fn diverged(&self) -> bool {
        !self.state.is_finite() || self.state.x.amax() > self.model.divergence_limit
    }
}

/// Oracle run result.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub series: TimeSeries,
    /// Index of the first record past the divergence limit, when truncated.
    pub diverged_at: Option<usize>,
}

/// Number of records in a run of `t_end` at `dt`, including t = 0.
pub fn record_count(dt: f64, t_end: f64) -> usize {
    // tolerate t_end/dt landing a hair under an integer
    ((t_end / dt) * (1.0 + 1e-12)).floor() as usize + 1
}

pub fn simulate<F: ForceProvider>(
    model: &GoverningModel,
    force: F,
    init: MechState,
    dt: f64,
    t_end: f64,
) -> Result<Simulation> {
    if !(t_end > 0.0) {
        return Err(Error::validation(format!("t_end must be positive, got {t_end}")));
    }
    let dofs = model.structure.dofs();
    if dofs.len() != init.n_dof() {
        return Err(Error::Config(format!(
            "initial state has {} DOFs, model has {}",
            init.n_dof(),
            dofs.len()
        )));
    }
    let steps = record_count(dt, t_end);
    let mut series = TimeSeries::for_dofs(dt, &dofs);
    let mut stepper = Stepper::new(model.clone(), force, init, dt)?;
    let record = |series: &mut TimeSeries, s: &Stepper<F>, k: usize| {
        let st = s.state();
        series.push_state(k as f64 * dt, st.x.as_slice(), st.v.as_slice(), s.force().as_slice());
    };
    record(&mut series, &stepper, 0);
    for k in 1..steps {
        match stepper.advance() {
            Ok(()) if !stepper.diverged() => record(&mut series, &stepper, k),
            Ok(()) | Err(Error::Numerical { .. }) => {
                return Ok(Simulation {
                    series,
                    diverged_at: Some(k),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Simulation {
        series,
        diverged_at: None,
    })
}
