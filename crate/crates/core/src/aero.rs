//! Aerodynamic force models and amplitude-dependent structural properties.
//!
//! All forces are per unit span (N/m or N m/m). Callers that drive a lumped
//! oscillator with a total mass scale by the effective span themselves.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp on the reduced amplitude `2a/D` in the damping law.
pub const MIN_REDUCED_AMPLITUDE: f64 = 1e-3;
/// Lower clamp on `omega(a) / omega0`.
pub const MIN_FREQUENCY_FRACTION: f64 = 0.01;

/// Flow and section properties for the vortex-induced force models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroParams {
    /// Air density, kg/m^3.
    pub rho: f64,
    /// Wind speed, m/s.
    pub wind_speed: f64,
    /// Section height D, m.
    pub depth: f64,
    /// Section width B, m. Only used for reduced-velocity reporting.
    pub width: f64,
    pub y1: f64,
    pub y2: f64,
    pub epsilon: f64,
    /// Vortex-shedding force amplitude.
    pub cl_tilde: f64,
    /// Vortex-shedding circular frequency, rad/s.
    pub omega_vs: f64,
    /// Phase of the shedding force, rad.
    pub psi: f64,
}

impl Default for AeroParams {
    /// Heave-VIV section (U = 9.1 m/s, D = 0.175 m) with the convergent Y1.
    fn default() -> Self {
        AeroParams {
            rho: 1.25,
            wind_speed: 9.1,
            depth: 0.175,
            width: 0.0,
            y1: 6.5,
            y2: -2.194,
            epsilon: 0.5,
            cl_tilde: -0.022,
            omega_vs: 0.4477,
            psi: -0.0128,
        }
    }
}

impl AeroParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho", self.rho),
            ("wind_speed", self.wind_speed),
            ("depth", self.depth),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `1/2 rho U^2 (2D)`.
    pub fn dynamic_pressure_scale(&self) -> f64 {
        self.rho * self.wind_speed * self.wind_speed * self.depth
    }
}

/// Linear self-excited heave force `1/2 rho U^2 (2D) [Y1 h'/U + Y2 h/U]`.
pub fn linear_se_force(h: f64, h_dot: f64, p: &AeroParams) -> f64 {
    let u = p.wind_speed;
    p.dynamic_pressure_scale() * (p.y1 * h_dot / u + p.y2 * h / u)
}

/// Nonlinear vortex-induced force
/// `1/2 rho U^2 (2D) [Y1 (1 - eps h^2/D^2) h'/U + Y2 h/D + 1/2 CL sin(w_vs t + psi)]`.
pub fn nonlinear_vortex_force(h: f64, h_dot: f64, t: f64, p: &AeroParams) -> f64 {
    let u = p.wind_speed;
    let d = p.depth;
    let damping = p.y1 * (1.0 - p.epsilon * h * h / (d * d)) * h_dot / u;
    let stiffness = p.y2 * h / d;
    let shedding = 0.5 * p.cl_tilde * (p.omega_vs * t + p.psi).sin();
    p.dynamic_pressure_scale() * (damping + stiffness + shedding)
}

/// `a = sqrt(h^2 + (h'/w0)^2)`.
pub fn instantaneous_amplitude(h: f64, h_dot: f64, omega0: f64) -> f64 {
    h.hypot(h_dot / omega0)
}

/// `xi(a) = 1.247e-4 / r + 3.65e-3 + 1.264e-2 r` with `r = max(2a/D, 1e-3)`.
pub fn amplitude_dep_damping(a: f64, depth: f64) -> f64 {
    let r = (2.0 * a / depth).max(MIN_REDUCED_AMPLITUDE);
    1.247e-4 / r + 3.65e-3 + 1.264e-2 * r
}

/// `omega(a) = omega0 (1 - a / 5D)`, floored at `0.01 omega0`.
pub fn amplitude_dep_frequency(a: f64, depth: f64, omega0: f64) -> f64 {
    let frac = (1.0 - a / (5.0 * depth)).max(MIN_FREQUENCY_FRACTION);
    omega0 * frac
}

/// Linear heave-torsion self-excited force surrogate:
/// `[L, M]^T = E_d [h', a']^T + E_s [h, a]^T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledSeMatrices {
    /// Row-major 2x2, maps velocities `[h', alpha']`.
    pub damping: [[f64; 2]; 2],
    /// Row-major 2x2, maps displacements `[h, alpha]`.
    pub stiffness: [[f64; 2]; 2],
}

impl CoupledSeMatrices {
    pub fn zero() -> Self {
        CoupledSeMatrices {
            damping: [[0.0; 2]; 2],
            stiffness: [[0.0; 2]; 2],
        }
    }

    pub fn damping_matrix(&self) -> Matrix2<f64> {
        let d = &self.damping;
        Matrix2::new(d[0][0], d[0][1], d[1][0], d[1][1])
    }

    pub fn stiffness_matrix(&self) -> Matrix2<f64> {
        let s = &self.stiffness;
        Matrix2::new(s[0][0], s[0][1], s[1][0], s[1][1])
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .damping
            .iter()
            .chain(self.stiffness.iter())
            .flatten()
            .all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::validation("coupled force matrices must be finite"))
        }
    }
}

/// Returns `(L_se, M_se)`.
pub fn coupled_se_force(h: f64, h_dot: f64, alpha: f64, alpha_dot: f64, m: &CoupledSeMatrices) -> (f64, f64) {
    let f = m.damping_matrix() * Vector2::new(h_dot, alpha_dot) + m.stiffness_matrix() * Vector2::new(h, alpha);
    (f[0], f[1])
}

/// Motion-dependent force acting on the section, as seen by the structure.
///
/// `span` multiplies the per-unit-length force, turning it into the total
/// force on a lumped model; use 1 when inertias are per unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForceModel {
    Zero,
    /// Heave only.
    LinearSe {
        params: AeroParams,
        span: f64,
    },
    /// Heave only.
    NonlinearVortex {
        params: AeroParams,
        span: f64,
    },
    /// Heave and torsion, in that order.
    CoupledSe {
        matrices: CoupledSeMatrices,
        span: f64,
    },
}

impl ForceModel {
    pub const NAMES: [&'static str; 4] = ["zero", "linear-se", "nonlinear-vortex", "coupled-se"];

    pub fn name(&self) -> &'static str {
        match self {
            ForceModel::Zero => "zero",
            ForceModel::LinearSe { .. } => "linear-se",
            ForceModel::NonlinearVortex { .. } => "nonlinear-vortex",
            ForceModel::CoupledSe { .. } => "coupled-se",
        }
    }

    /// Number of DOFs the model acts on, `None` for any.
    pub fn dof_count(&self) -> Option<usize> {
        match self {
            ForceModel::Zero => None,
            ForceModel::LinearSe { .. } | ForceModel::NonlinearVortex { .. } => Some(1),
            ForceModel::CoupledSe { .. } => Some(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let span = match self {
            ForceModel::Zero => return Ok(()),
            ForceModel::LinearSe { params, span } | ForceModel::NonlinearVortex { params, span } => {
                params.validate()?;
                *span
            }
            ForceModel::CoupledSe { matrices, span } => {
                matrices.validate()?;
                *span
            }
        };
        if !(span > 0.0 && span.is_finite()) {
            return Err(Error::validation(format!("span must be positive, got {span}")));
        }
        Ok(())
    }

    /// Force vector at time `t` for displacements `x` and velocities `v`.
    pub fn force(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            ForceModel::Zero => vec![0.0; x.len()],
            ForceModel::LinearSe { params, span } => vec![span * linear_se_force(x[0], v[0], params)],
            ForceModel::NonlinearVortex { params, span } => {
                vec![span * nonlinear_vortex_force(x[0], v[0], t, params)]
            }
            ForceModel::CoupledSe { matrices, span } => {
                let (l, m) = coupled_se_force(x[0], v[0], x[1], v[1], matrices);
                vec![span * l, span * m]
            }
        }
    }
}
