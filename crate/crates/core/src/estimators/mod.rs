//! Kalman-family filters for the numerical substructure.
//!
//! All three filters share one predict/update core. The KF runs it with a
//! linear model and fixed noise; the EKF linearises a (possibly nonlinear)
//! model about the previous posterior; the AEKF additionally re-estimates the
//! noise statistics from the innovation sequence with exponential forgetting.
//!
//! Process and measurement noise enter additively, so the noise Jacobians
//! are identities throughout.

mod models;

pub use models::{numeric_jacobian, AmplitudeDependentModel, LinearModel, JACOBIAN_REL_STEP, RK4_SUBSTEPS};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest eigenvalue allowed in P, Q-hat and R-hat.
pub const PSD_FLOOR: f64 = 1e-12;

/// Default forgetting factor of the covariance-matching recursions.
pub const DEFAULT_FORGETTING: f64 = 0.96;

/// A discrete-time process model with additive noise.
pub trait TransitionModel {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// One-step map `x_{k} = Phi(x_{k-1}, u)` with `u` held over the step.
    fn propagate(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
    /// `dPhi/dx` at `(x, u)`.
    fn transition_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn observe(&self, x: &DVector<f64>) -> DVector<f64>;
    fn observation_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// First and second moments of the process (`q`) and measurement (`r`) noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStats {
    pub q_hat: DVector<f64>,
    pub big_q: DMatrix<f64>,
    pub r_hat: DVector<f64>,
    pub big_r: DMatrix<f64>,
}

impl NoiseStats {
    /// Zero-mean noise with covariances `q I` and `r I`.
    pub fn isotropic(state_dim: usize, obs_dim: usize, q: f64, r: f64) -> Self {
        NoiseStats {
            q_hat: DVector::zeros(state_dim),
            big_q: DMatrix::identity(state_dim, state_dim) * q,
            r_hat: DVector::zeros(obs_dim),
            big_r: DMatrix::identity(obs_dim, obs_dim) * r,
        }
    }
}

/// Posterior after `k` measurement updates.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub noise: NoiseStats,
    pub k: usize,
}

impl FilterState {
    pub fn new(x0: DVector<f64>, p0: DMatrix<f64>, noise: NoiseStats) -> Result<Self> {
        let n = x0.len();
        if p0.shape() != (n, n) || noise.big_q.shape() != (n, n) || noise.q_hat.len() != n {
            return Err(Error::Config(format!("filter dimensions disagree with state size {n}")));
        }
        if noise.big_r.nrows() != noise.r_hat.len() || !noise.big_r.is_square() {
            return Err(Error::Config("measurement noise dimensions disagree".into()));
        }
        Ok(FilterState {
            x_hat: x0,
            p: p0,
            noise,
            k: 0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.x_hat.len()
    }
}

/// Which filter runs the numerical substructure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Kf,
    Ekf,
    Aekf,
}

impl EstimatorKind {
    /// Identifier carried in the handshake frame.
    pub fn wire_id(self) -> u8 {
        match self {
            EstimatorKind::Kf => 1,
            EstimatorKind::Ekf => 2,
            EstimatorKind::Aekf => 3,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(EstimatorKind::Kf),
            2 => Some(EstimatorKind::Ekf),
            3 => Some(EstimatorKind::Aekf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Kf => "kf",
            EstimatorKind::Ekf => "ekf",
            EstimatorKind::Aekf => "aekf",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kf" => Ok(EstimatorKind::Kf),
            "ekf" => Ok(EstimatorKind::Ekf),
            "aekf" => Ok(EstimatorKind::Aekf),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Reference subtracted from the posterior when re-estimating the process
/// noise mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasReference {
    /// `x_k - Phi(x_{k-1}, u)`: the deterministic one-step prediction.
    #[default]
    Propagated,
    /// `x_k - A_k x_{k-1}`: the linearised transition alone.
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AekfConfig {
    /// Forgetting factor `b` in (0, 1).
    pub forgetting: f64,
    /// When false the noise statistics are frozen and the AEKF is an EKF.
    pub adapt: bool,
    pub bias_reference: BiasReference,
}

impl Default for AekfConfig {
    fn default() -> Self {
        AekfConfig {
            forgetting: DEFAULT_FORGETTING,
            adapt: true,
            bias_reference: BiasReference::default(),
        }
    }
}

impl AekfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.forgetting > 0.0 && self.forgetting < 1.0) {
            return Err(Error::validation(format!(
                "forgetting factor must lie in (0, 1), got {}",
                self.forgetting
            )));
        }
        Ok(())
    }
}

/// Symmetrises `m` and lifts any eigenvalue below `floor` to `floor`.
pub fn enforce_psd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= floor {
        return sym;
    }
    let lifted = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&lifted) * v.transpose();
    (&r + r.transpose()) * 0.5
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn all_finite<'a>(it: impl IntoIterator<Item = &'a f64>) -> bool {
    it.into_iter().all(|v| v.is_finite())
}

/// Prior moments plus the transition Jacobian they were built with.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

/// Time update: `x- = Phi(x, u) + q_hat`, `P- = A P A' + Q_hat`.
pub fn predict<M: TransitionModel + ?Sized>(fs: &FilterState, u: &DVector<f64>, m: &M) -> Result<Prior> {
    let step = Some(fs.k + 1);
    let a = m
        .transition_jacobian(&fs.x_hat, u)
        .map_err(|e| with_step(e, fs.k + 1))?;
    let x = m.propagate(&fs.x_hat, u).map_err(|e| with_step(e, fs.k + 1))? + &fs.noise.q_hat;
    let p = symmetrize(&a * &fs.p * a.transpose() + &fs.noise.big_q);
    if !all_finite(x.iter()) || !all_finite(p.iter()) {
        return Err(Error::numerical(step, "non-finite prediction"));
    }
    Ok(Prior { x, p, a })
}

fn with_step(e: Error, k: usize) -> Error {
    match e {
        Error::Numerical { step: None, reason } => Error::Numerical { step: Some(k), reason },
        other => other,
    }
}

/// Measurement update products needed by covariance matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub state: FilterState,
    pub gain: DMatrix<f64>,
    /// `z - h(x-) - r_hat`.
    pub innovation: DVector<f64>,
    pub h: DMatrix<f64>,
}

/// Measurement update with the noise statistics in `noise`.
pub fn update<M: TransitionModel + ?Sized>(
    prior: &Prior,
    z: &DVector<f64>,
    m: &M,
    noise: &NoiseStats,
    k: usize,
) -> Result<Update> {
    let h = m.observation_jacobian(&prior.x);
    let s = &h * &prior.p * h.transpose() + &noise.big_r;
    let s_inv = s
        .try_inverse()
        .filter(|inv| all_finite(inv.iter()))
        .ok_or_else(|| Error::numerical(Some(k), "singular innovation covariance"))?;
    let gain = &prior.p * h.transpose() * s_inv;
    let innovation = z - m.observe(&prior.x) - &noise.r_hat;
    let x_hat = &prior.x + &gain * &innovation;
    let n = prior.x.len();
    let p = enforce_psd(&((DMatrix::identity(n, n) - &gain * &h) * &prior.p), PSD_FLOOR);
    if !all_finite(x_hat.iter()) || !all_finite(p.iter()) {
        return Err(Error::numerical(Some(k), "non-finite posterior"));
    }
    Ok(Update {
        state: FilterState {
            x_hat,
            p,
            noise: noise.clone(),
            k,
        },
        gain,
        innovation,
        h,
    })
}

/// Weight of the newest sample after `k` steps: `(1 - b) / (1 - b^k)`.
pub fn forgetting_weight(b: f64, k: usize) -> f64 {
    if k <= 1 {
        return 1.0;
    }
    (1.0 - b) / (1.0 - b.powi(k as i32))
}

/// Quantities from step `k` that drive covariance matching.
#[derive(Debug, Clone, Copy)]
pub struct MatchInputs<'a> {
    pub prior: &'a Prior,
    pub update: &'a Update,
    /// Posterior covariance of step `k - 1`.
    pub p_prev: &'a DMatrix<f64>,
    /// Reference the posterior mean is compared with when estimating `q_hat`.
    pub bias_reference: &'a DVector<f64>,
}

/// Exponentially forgetting re-estimate of the noise statistics at step
/// `fs.k`. `prev` are the statistics used during that step.
pub fn covariance_match(fs: &FilterState, inp: MatchInputs<'_>, prev: &NoiseStats, b: f64) -> NoiseStats {
    let d = forgetting_weight(b, fs.k);
    blend_noise(fs, inp, prev, d)
}

fn blend_noise(fs: &FilterState, inp: MatchInputs<'_>, prev: &NoiseStats, d: f64) -> NoiseStats {
    if d == 0.0 {
        return prev.clone();
    }
    let MatchInputs {
        prior,
        update,
        p_prev,
        bias_reference,
    } = inp;
    let eps = &update.innovation;
    let h = &update.h;
    let keep = 1.0 - d;

    let q_hat = &prev.q_hat * keep + (&fs.x_hat - bias_reference) * d;
    let k_eps = &update.gain * eps;
    let q_sample = &k_eps * k_eps.transpose() + &fs.p - &prior.a * p_prev * prior.a.transpose();
    let big_q = enforce_psd(&(&prev.big_q * keep + q_sample * d), PSD_FLOOR);

    let raw_residual = eps + &prev.r_hat;
    let r_hat = &prev.r_hat * keep + raw_residual * d;
    let r_sample = eps * eps.transpose() - h * &prior.p * h.transpose();
    let big_r = enforce_psd(&(&prev.big_r * keep + r_sample * d), PSD_FLOOR);

    NoiseStats {
        q_hat,
        big_q,
        r_hat,
        big_r,
    }
}

fn filter_step<M: TransitionModel + ?Sized>(
    fs: &FilterState,
    u: &DVector<f64>,
    z: &DVector<f64>,
    m: &M,
) -> Result<(Prior, Update)> {
    let prior = predict(fs, u, m)?;
    let upd = update(&prior, z, m, &fs.noise, fs.k + 1)?;
    Ok((prior, upd))
}

/// Linear Kalman filter step with fixed noise statistics.
pub fn kf_step(fs: &FilterState, u: &DVector<f64>, z: &DVector<f64>, m: &LinearModel) -> Result<FilterState> {
    Ok(filter_step(fs, u, z, m)?.1.state)
}

/// Extended Kalman filter step with fixed noise statistics.
pub fn ekf_step<M: TransitionModel + ?Sized>(
    fs: &FilterState,
    u: &DVector<f64>,
    z: &DVector<f64>,
    m: &M,
) -> Result<FilterState> {
    Ok(filter_step(fs, u, z, m)?.1.state)
}

/// EKF step followed by covariance matching of the noise statistics.
pub fn aekf_step<M: TransitionModel + ?Sized>(
    fs: &FilterState,
    u: &DVector<f64>,
    z: &DVector<f64>,
    m: &M,
    cfg: &AekfConfig,
) -> Result<FilterState> {
    let (prior, upd) = filter_step(fs, u, z, m)?;
    if !cfg.adapt {
        return Ok(upd.state);
    }
    let reference = match cfg.bias_reference {
        BiasReference::Propagated => &prior.x - &fs.noise.q_hat,
        BiasReference::Linearized => &prior.a * &fs.x_hat,
    };
    let noise = covariance_match(
        &upd.state,
        MatchInputs {
            prior: &prior,
            update: &upd,
            p_prev: &fs.p,
            bias_reference: &reference,
        },
        &fs.noise,
        cfg.forgetting,
    );
    let mut state = upd.state;
    state.noise = noise;
    Ok(state)
}

/// A configured filter bound to its model.
pub enum Estimator {
    Kf(LinearModel),
    Ekf(Box<dyn TransitionModel + Send + Sync>),
    Aekf(Box<dyn TransitionModel + Send + Sync>, AekfConfig),
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Kf(_) => EstimatorKind::Kf,
            Estimator::Ekf(_) => EstimatorKind::Ekf,
            Estimator::Aekf(..) => EstimatorKind::Aekf,
        }
    }

    pub fn step(&self, fs: &FilterState, u: &DVector<f64>, z: &DVector<f64>) -> Result<FilterState> {
        match self {
            Estimator::Kf(m) => kf_step(fs, u, z, m),
            Estimator::Ekf(m) => ekf_step(fs, u, z, m.as_ref()),
            Estimator::Aekf(m, cfg) => aekf_step(fs, u, z, m.as_ref(), cfg),
        }
    }

    /// Deterministic one-step prediction `h(Phi(x, u))` without noise means.
    pub fn predict_observation(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let m: &dyn TransitionModel = match self {
            Estimator::Kf(m) => m,
            Estimator::Ekf(m) | Estimator::Aekf(m, _) => m.as_ref(),
        };
        Ok(m.observe(&m.propagate(x, u)?))
    }
}
