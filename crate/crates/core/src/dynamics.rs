//! Structural parameters, diagonal M/C/K assembly and the state-space model
//! shared by the estimators and the oracle integrators.
//!
//! State ordering is per DOF `[x_i, x_dot_i]`, DOFs in canonical order
//! heave < transverse < torsion. Absent DOFs are removed, not zero-padded.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree of freedom of the section model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DofId {
    Heave,
    Transverse,
    Torsion,
}

impl DofId {
    pub const ALL: [DofId; 3] = [DofId::Heave, DofId::Transverse, DofId::Torsion];

    /// Bit used for this DOF in the wire-protocol DOF mask.
    pub fn mask_bit(self) -> u8 {
        match self {
            DofId::Heave => 0b001,
            DofId::Transverse => 0b010,
            DofId::Torsion => 0b100,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DofId::Heave => "heave",
            DofId::Transverse => "transverse",
            DofId::Torsion => "torsion",
        }
    }
}

impl fmt::Display for DofId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Packs a set of DOFs into the wire mask.
pub fn dof_mask(dofs: &[DofId]) -> u8 {
    dofs.iter().fold(0, |m, d| m | d.mask_bit())
}

/// Expands a wire mask into canonical DOF order.
pub fn dofs_from_mask(mask: u8) -> Vec<DofId> {
    DofId::ALL.into_iter().filter(|d| mask & d.mask_bit() != 0).collect()
}

/// Effective modal properties of one DOF.
///
/// `inertia` is mass per unit length (kg/m) for heave/transverse and mass
/// moment of inertia per unit length (kg m^2/m) for torsion. It aggregates
/// model, suspension and still-air added mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalParams {
    pub dof: DofId,
    pub inertia: f64,
    pub damping_ratio: f64,
    pub circ_freq: f64,
}

impl ModalParams {
    pub fn new(dof: DofId, inertia: f64, damping_ratio: f64, circ_freq: f64) -> Result<Self> {
        let p = ModalParams {
            dof,
            inertia,
            damping_ratio,
            circ_freq,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            return Err(Error::validation(format!(
                "{}: inertia must be positive, got {}",
                self.dof, self.inertia
            )));
        }
        if !(self.circ_freq > 0.0 && self.circ_freq.is_finite()) {
            return Err(Error::validation(format!(
                "{}: circular frequency must be positive, got {}",
                self.dof, self.circ_freq
            )));
        }
        if !(self.damping_ratio >= 0.0 && self.damping_ratio.is_finite()) {
            return Err(Error::validation(format!(
                "{}: damping ratio must be non-negative, got {}",
                self.dof, self.damping_ratio
            )));
        }
        Ok(())
    }

    pub fn stiffness(&self) -> f64 {
        self.inertia * self.circ_freq * self.circ_freq
    }

    pub fn damping(&self) -> f64 {
        2.0 * self.inertia * self.damping_ratio * self.circ_freq
    }
}

/// Diagonal mass, damping and stiffness matrices in canonical DOF order.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralMatrices {
    pub dofs: Vec<DofId>,
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

impl StructuralMatrices {
    pub fn n_dof(&self) -> usize {
        self.dofs.len()
    }
}

fn canonical(params: &[ModalParams]) -> Result<Vec<ModalParams>> {
    if params.is_empty() {
        return Err(Error::Config("at least one DOF is required".into()));
    }
    let mut sorted = params.to_vec();
    sorted.sort_by_key(|p| p.dof);
    for pair in sorted.windows(2) {
        if pair[0].dof == pair[1].dof {
            return Err(Error::Config(format!("duplicate DOF {}", pair[0].dof)));
        }
    }
    for p in &sorted {
        p.validate()?;
    }
    Ok(sorted)
}

/// Builds M = diag(m_i), C = diag(2 m_i xi_i w_i), K = diag(m_i w_i^2).
pub fn assemble_matrices(params: &[ModalParams]) -> Result<StructuralMatrices> {
    let sorted = canonical(params)?;
    let mass = DVector::from_iterator(sorted.len(), sorted.iter().map(|p| p.inertia));
    let damping = DVector::from_iterator(sorted.len(), sorted.iter().map(|p| p.damping()));
    let stiffness = DVector::from_iterator(sorted.len(), sorted.iter().map(|p| p.stiffness()));
    Ok(StructuralMatrices {
        dofs: sorted.iter().map(|p| p.dof).collect(),
        mass: DMatrix::from_diagonal(&mass),
        damping: DMatrix::from_diagonal(&damping),
        stiffness: DMatrix::from_diagonal(&stiffness),
    })
}

/// Continuous model `x' = A x + B u`, `y = H x`, plus its zero-order-hold
/// discretisation over `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub dofs: Vec<DofId>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub dt: f64,
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn n_dof(&self) -> usize {
        self.dofs.len()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.dofs.len()
    }

    /// One exact step of the linear model with the input held over the step.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.phi * x + &self.gamma * u
    }
}

/// Per-DOF blocks `[[0, 1], [-w^2, -2 xi w]]`, input `[0, 1/m]^T`,
/// observation row `[1, 0]`.
pub fn build_state_space(params: &[ModalParams], dt: f64) -> Result<StateSpaceModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("dt must be positive, got {dt}")));
    }
    let sorted = canonical(params)?;
    let n = sorted.len();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, n);
    let mut h = DMatrix::zeros(n, 2 * n);
    for (i, p) in sorted.iter().enumerate() {
        let (r, w) = (2 * i, p.circ_freq);
        a[(r, r + 1)] = 1.0;
        a[(r + 1, r)] = -w * w;
        a[(r + 1, r + 1)] = -2.0 * p.damping_ratio * w;
        b[(r + 1, i)] = 1.0 / p.inertia;
        h[(i, r)] = 1.0;
    }
    let (phi, gamma) = zero_order_hold(&a, &b, dt);
    Ok(StateSpaceModel {
        dofs: sorted.iter().map(|p| p.dof).collect(),
        a,
        b,
        h,
        dt,
        phi,
        gamma,
    })
}

/// Exact discretisation of `x' = A x + B u` with `u` held constant:
/// `exp([[A, B], [0, 0]] dt) = [[Phi, Gamma], [0, I]]`.
pub fn zero_order_hold(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = (aug * dt).exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case1() -> ModalParams {
        ModalParams::new(DofId::Heave, 182.178, 0.005, 17.64).unwrap()
    }

    #[test]
    fn case1_stiffness_and_damping() {
        let m = assemble_matrices(&[case1()]).unwrap();
        // 182.178 * 17.64^2 and 2 * 182.178 * 0.005 * 17.64
        assert!((m.stiffness[(0, 0)] - 56_688.3).abs() < 0.1);
        assert!((m.damping[(0, 0)] - 32.136).abs() < 1e-3);
    }

    #[test]
    fn zero_damping_ratio_gives_zero_damping() {
        let p = ModalParams::new(DofId::Heave, 3.0, 0.0, 2.0).unwrap();
        let m = assemble_matrices(&[p]).unwrap();
        assert_eq!(m.damping[(0, 0)], 0.0);
    }

    #[test]
    fn duplicate_dof_is_config_error() {
        let err = assemble_matrices(&[case1(), case1()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bad_params_are_validation_errors() {
        assert!(matches!(
            ModalParams::new(DofId::Heave, 0.0, 0.01, 1.0),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            ModalParams::new(DofId::Heave, 1.0, 0.01, -1.0),
            Err(Error::Validation(_))
        ));
        let raw = ModalParams {
            dof: DofId::Torsion,
            inertia: -1.0,
            damping_ratio: 0.0,
            circ_freq: 1.0,
        };
        assert!(matches!(assemble_matrices(&[raw]), Err(Error::Validation(_))));
        assert!(matches!(assemble_matrices(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn canonical_order_and_mask() {
        let t = ModalParams::new(DofId::Torsion, 0.3952, 0.003, 14.5).unwrap();
        let h = ModalParams::new(DofId::Heave, 9.096, 0.003, 5.2).unwrap();
        let m = assemble_matrices(&[t, h]).unwrap();
        assert_eq!(m.dofs, vec![DofId::Heave, DofId::Torsion]);
        assert_eq!(m.mass[(0, 0)], 9.096);
        assert_eq!(dof_mask(&m.dofs), 0b101);
        assert_eq!(dofs_from_mask(0b101), m.dofs);
    }

    #[test]
    fn single_dof_observation_matrix() {
        let ss = build_state_space(&[case1()], 0.001).unwrap();
        assert_eq!(ss.h, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(ss.a[(1, 0)], -17.64 * 17.64);
    }

    #[test]
    fn non_positive_dt_rejected() {
        assert!(matches!(build_state_space(&[case1()], 0.0), Err(Error::Validation(_))));
    }

    #[test]
    fn phi_tends_to_identity() {
        let p = ModalParams::new(DofId::Heave, 1.0, 0.0, 1.0).unwrap();
        let ss = build_state_space(&[p], 1e-12).unwrap();
        assert!((ss.phi - DMatrix::identity(2, 2)).amax() < 1e-11);
    }
}
