use nalgebra::{DMatrix, DVector};

use super::TransitionModel;
use crate::dynamics::StateSpaceModel;
use crate::error::{Error, Result};
use crate::integrators::{rk4_step, AmplitudeDependentSdof};

/// Relative central-difference step of [`numeric_jacobian`].
pub const JACOBIAN_REL_STEP: f64 = 1e-6;

/// RK4 substeps per filter step for nonlinear models.
pub const RK4_SUBSTEPS: usize = 4;

/// Central-difference Jacobian of `map` at `x`, perturbing component `i` by
/// `rel_step * max(|x_i|, max_j |x_j|)`, or by `rel_step` at the origin.
///
/// Steps follow the size of the state, so millimetre-scale displacements
/// are not swamped by an absolute step.
pub fn numeric_jacobian<F>(map: F, x: &DVector<f64>, rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut probe = x.clone();
    let norm = x.amax();
    for i in 0..n {
        let scale = x[i].abs().max(norm);
        let h = rel_step * if scale > 0.0 { scale } else { 1.0 };
        probe[i] = x[i] + h;
        let plus = map(&probe)?;
        probe[i] = x[i] - h;
        let minus = map(&probe)?;
        probe[i] = x[i];
        let col = (plus - minus) / (2.0 * h);
        if !col.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical(None, format!("non-finite Jacobian column {i}")));
        }
        cols.push(col);
    }
    let m = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(m, n, |r, c| cols[c][r]))
}

/// `x_k = Phi x_{k-1} + Gamma u`, `y = H x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(phi: DMatrix<f64>, gamma: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        let n = phi.nrows();
        if !phi.is_square() || gamma.nrows() != n || h.ncols() != n {
            return Err(Error::Config("inconsistent linear model dimensions".into()));
        }
        Ok(LinearModel { phi, gamma, h })
    }
}

impl From<&StateSpaceModel> for LinearModel {
    fn from(ss: &StateSpaceModel) -> Self {
        LinearModel {
            phi: ss.phi.clone(),
            gamma: ss.gamma.clone(),
            h: ss.h.clone(),
        }
    }
}

impl TransitionModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    fn propagate(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.phi * x + &self.gamma * u)
    }

    fn transition_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.phi.clone())
    }

    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }

    fn observation_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.h.clone()
    }
}

/// Heave oscillator with amplitude-dependent damping and frequency, state
/// `[h, h_dot]`, input the measured force. Propagated with RK4 substeps and
/// linearised numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeDependentModel {
    pub structure: AmplitudeDependentSdof,
    pub dt: f64,
}

impl AmplitudeDependentModel {
    pub fn new(structure: AmplitudeDependentSdof, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::validation(format!("dt must be positive, got {dt}")));
        }
        Ok(AmplitudeDependentModel { structure, dt })
    }

    /// Continuous right-hand side `[h_dot, h_ddot]`.
    pub fn rhs(&self, x: &DVector<f64>, force: f64) -> DVector<f64> {
        DVector::from_vec(vec![x[1], self.structure.acceleration(x[0], x[1], force)])
    }
}

impl TransitionModel for AmplitudeDependentModel {
    fn state_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn propagate(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.dt / RK4_SUBSTEPS as f64;
        let mut y = x.clone();
        for _ in 0..RK4_SUBSTEPS {
            y = rk4_step(|_, y: &DVector<f64>| self.rhs(y, u[0]), &y, 0.0, h)?;
        }
        Ok(y)
    }

    fn transition_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        numeric_jacobian(|x| self.propagate(x, u), x, JACOBIAN_REL_STEP)
    }

    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn observation_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
    }
}
