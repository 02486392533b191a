//! Case configuration: presets for the three validation cases, TOML
//! overlay and validation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::aero::{AeroParams, CoupledSeMatrices, ForceModel};
use crate::cosim::{PhysicalMode, ProtocolConfig};
use crate::dynamics::{assemble_matrices, DofId, ModalParams};
use crate::error::{Error, Result};
use crate::estimators::{AekfConfig, BiasReference, EstimatorKind};
use crate::integrators::{AmplitudeDependentSdof, GoverningModel, MechState, NewmarkParams, Scheme, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    /// Heave oscillator under the linear self-excited force, Newmark oracle.
    #[serde(rename = "case1-linear")]
    Case1Linear,
    /// Amplitude-dependent heave oscillator under the nonlinear vortex force,
    /// RK4 oracle.
    #[serde(rename = "case1-nonlinear")]
    Case1Nonlinear,
    /// Heave-torsion section under the coupled surrogate force, RK4 oracle.
    #[serde(rename = "case2dof")]
    Case2Dof,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::Case1Linear, CaseId::Case1Nonlinear, CaseId::Case2Dof];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Case1Linear => "case1-linear",
            CaseId::Case1Nonlinear => "case1-nonlinear",
            CaseId::Case2Dof => "case2dof",
        }
    }

    pub fn dofs(self) -> Vec<DofId> {
        match self {
            CaseId::Case1Linear | CaseId::Case1Nonlinear => vec![DofId::Heave],
            CaseId::Case2Dof => vec![DofId::Heave, DofId::Torsion],
        }
    }

    pub fn default_estimator(self) -> EstimatorKind {
        match self {
            CaseId::Case1Linear => EstimatorKind::Kf,
            CaseId::Case1Nonlinear => EstimatorKind::Ekf,
            CaseId::Case2Dof => EstimatorKind::Aekf,
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown case {s:?} (expected case1-linear, case1-nonlinear or case2dof)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CosimMode {
    #[default]
    InProcess,
    Udp,
}

impl FromStr for CosimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-process" => Ok(CosimMode::InProcess),
            "udp" => Ok(CosimMode::Udp),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    /// Per DOF in canonical order (m or rad).
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceKind {
    /// The case's own force law.
    Auto,
    Zero,
    LinearSe,
    NonlinearVortex,
    CoupledSe,
}

impl FromStr for ForceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ForceKind::Auto),
            "zero" => Ok(ForceKind::Zero),
            "linear-se" => Ok(ForceKind::LinearSe),
            "nonlinear-vortex" => Ok(ForceKind::NonlinearVortex),
            "coupled-se" => Ok(ForceKind::CoupledSe),
            other => Err(Error::Config(format!(
                "unknown force model {other:?} (expected one of auto, {})",
                ForceModel::NAMES.join(", ")
            ))),
        }
    }
}

/// Named coupled-force matrices for the heave-torsion case.
///
/// All three share `E_s = [[0, 3], [0, -3]]` and `E_d[0] = [-0.2, 0]`,
/// `E_d[1][0] = 0.02`, and differ in the torsional aerodynamic damping
/// `E_d[1][1]`, which moves the torsional root across the imaginary axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoupledPreset {
    /// Torsional root real part about -0.044 /s.
    Convergent,
    /// Torsional root real part about +0.032 /s.
    Divergent,
    /// Lightly damped, about -0.006 /s.
    Alternate,
    /// Use `forces.coupled` as given.
    Custom,
}

impl CoupledPreset {
    pub fn matrices(self) -> Option<CoupledSeMatrices> {
        let torsion_damping = match self {
            CoupledPreset::Convergent => 0.0,
            CoupledPreset::Divergent => 0.06,
            CoupledPreset::Alternate => 0.03,
            CoupledPreset::Custom => return None,
        };
        Some(CoupledSeMatrices {
            damping: [[-0.2, 0.0], [0.02, torsion_damping]],
            stiffness: [[0.0, 3.0], [0.0, -3.0]],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSettings {
    pub model: ForceKind,
    /// Span multiplying per-unit-length forces (m); 1 for per-length inertias.
    pub span: f64,
    pub preset: CoupledPreset,
    pub coupled: CoupledSeMatrices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    /// Continuous-time process noise intensity; the per-step covariance is
    /// `process_noise * dt * I`.
    pub process_noise: f64,
    /// Measurement noise covariance per displacement channel.
    pub measurement_noise: f64,
    /// `P0 = initial_covariance * I`.
    pub initial_covariance: f64,
    /// Initial estimate `[x, x_dot]` per DOF; defaults to the initial
    /// conditions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    pub forgetting: f64,
    pub adapt: bool,
    pub bias_reference: BiasReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSettings {
    pub mode: PhysicalMode,
    /// Std of the additive noise on measured displacements (m or rad).
    pub displacement_noise_std: f64,
    pub force_noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSettings {
    pub timeout_ms: u64,
    pub max_resends: u32,
    pub connect_timeout_ms: u64,
    pub loss_probability: f64,
    pub loss_seed: u64,
}

impl ProtocolSettings {
    pub fn to_protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            timeout: Duration::from_millis(self.timeout_ms),
            max_resends: self.max_resends,
            connect_timeout: Duration::from_millis(self.connect_timeout_ms),
            loss_probability: self.loss_probability,
            loss_seed: self.loss_seed,
        }
    }
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        ProtocolSettings {
            timeout_ms: p.timeout.as_millis() as u64,
            max_resends: p.max_resends,
            connect_timeout_ms: p.connect_timeout.as_millis() as u64,
            loss_probability: p.loss_probability,
            loss_seed: p.loss_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    pub newmark_gamma: f64,
    pub newmark_beta: f64,
    /// Runs stop once |x| exceeds this multiple of the section depth.
    pub divergence_factor: f64,
}

/// Everything needed to run one validation case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub case: CaseId,
    pub dt: f64,
    pub t_end: f64,
    pub estimator: EstimatorKind,
    pub mode: CosimMode,
    /// Force-channel delay on the physical side, s.
    pub delay: f64,
    /// Seed of the measurement noise.
    pub seed: u64,
    pub structure: Vec<ModalParams>,
    pub initial: InitialConditions,
    pub aero: AeroParams,
    pub forces: ForceSettings,
    pub filter: FilterSettings,
    pub physical: PhysicalSettings,
    pub protocol: ProtocolSettings,
    pub oracle: OracleSettings,
}

impl CaseConfig {
    /// Default configuration of a validation case.
    pub fn preset(case: CaseId) -> Self {
        let (structure, initial, t_end, span, q, r, sigma) = match case {
            CaseId::Case1Linear | CaseId::Case1Nonlinear => {
                let heave = ModalParams {
                    dof: DofId::Heave,
                    inertia: 182.178,
                    damping_ratio: 0.005,
                    circ_freq: 17.64,
                };
                let init = InitialConditions {
                    displacement: vec![0.01],
                    velocity: vec![0.0],
                };
                let (q, r, sigma) = if case == CaseId::Case1Linear {
                    (1e-5, 1e-5, 1e-5)
                } else {
                    (1e-8, 1e-8, 1e-4)
                };
                (vec![heave], init, 50.0, 1.7, q, r, sigma)
            }
            CaseId::Case2Dof => {
                let two_pi = 2.0 * std::f64::consts::PI;
                let heave = ModalParams {
                    dof: DofId::Heave,
                    inertia: 9.096,
                    damping_ratio: 0.003,
                    circ_freq: two_pi * 0.8333,
                };
                let torsion = ModalParams {
                    dof: DofId::Torsion,
                    inertia: 0.3952,
                    damping_ratio: 0.003,
                    circ_freq: two_pi * 2.3166,
                };
                let init = InitialConditions {
                    displacement: vec![0.005, 0.01],
                    velocity: vec![0.0, 0.0],
                };
                (vec![heave, torsion], init, 20.0, 1.0, 1e-8, 1e-8, 1e-5)
            }
        };
        let preset = CoupledPreset::Convergent;
        let aekf = AekfConfig::default();
        CaseConfig {
            case,
            dt: 0.001,
            t_end,
            estimator: case.default_estimator(),
            mode: CosimMode::InProcess,
            delay: 0.0,
            seed: 1,
            structure,
            initial,
            aero: AeroParams::default(),
            forces: ForceSettings {
                model: ForceKind::Auto,
                span,
                preset,
                coupled: preset.matrices().expect("named preset"),
            },
            filter: FilterSettings {
                process_noise: q,
                measurement_noise: r,
                initial_covariance: 1e-10,
                initial_state: None,
                forgetting: aekf.forgetting,
                adapt: aekf.adapt,
                bias_reference: aekf.bias_reference,
            },
            physical: PhysicalSettings {
                mode: PhysicalMode::Integrator,
                displacement_noise_std: sigma,
                force_noise_std: 0.0,
            },
            protocol: ProtocolSettings::default(),
            oracle: OracleSettings {
                newmark_gamma: 0.5,
                newmark_beta: 0.25,
                divergence_factor: 1e3,
            },
        }
    }

    /// Preset for the case named in `table` (or `case` when given), with
    /// every key in `table` overriding the preset.
    pub fn from_table(mut table: toml::Table, case: Option<CaseId>) -> Result<Self> {
        let named = match table.remove("case") {
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| Error::Config("`case` must be a string".into()))?
                    .parse::<CaseId>()?,
            ),
            None => None,
        };
        let case = match (case, named) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!(
                    "case {a} requested but the config file is for {b}"
                )))
            }
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => return Err(Error::Config("no case given".into())),
        };
        let mut base = toml::Table::try_from(CaseConfig::preset(case))
            .map_err(|e| Error::Config(format!("cannot serialise preset: {e}")))?;
        merge(&mut base, table);
        let cfg: CaseConfig = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, case: Option<CaseId>) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(table, case)
    }

    pub fn load(path: impl AsRef<Path>, case: Option<CaseId>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, case)
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serialises to a table")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Sets one dotted key, e.g. `aero.y1 = 11.966`, re-validating.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parsed: toml::Value = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            // bare words are taken as strings
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut overlay = toml::Table::new();
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts
            .pop()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Config(format!("bad key {key:?}")))?;
        let mut slot = &mut overlay;
        for p in parts {
            slot = slot
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .expect("fresh table");
        }
        slot.insert(last.to_string(), parsed);
        let mut base = self.to_table();
        if overlay.contains_key("case") {
            return Err(Error::Config("the case cannot be changed by an override".into()));
        }
        merge(&mut base, overlay);
        let cfg: CaseConfig = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {e}")))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn dofs(&self) -> Vec<DofId> {
        self.case.dofs()
    }

    pub fn n_dof(&self) -> usize {
        self.case.dofs().len()
    }

    /// Number of records in a run, including t = 0.
    pub fn steps(&self) -> usize {
        crate::integrators::record_count(self.dt, self.t_end)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > self.dt && self.t_end.is_finite()) {
            return Err(Error::validation(format!("t_end must exceed dt, got {}", self.t_end)));
        }
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return Err(Error::validation(format!(
                "delay must be non-negative, got {}",
                self.delay
            )));
        }
        let mats = assemble_matrices(&self.structure)?;
        if mats.dofs != self.dofs() {
            return Err(Error::Config(format!(
                "{} needs DOFs {:?}, structure gives {:?}",
                self.case,
                self.dofs(),
                mats.dofs
            )));
        }
        let n = self.n_dof();
        if self.initial.displacement.len() != n || self.initial.velocity.len() != n {
            return Err(Error::Config(format!("initial conditions need {n} values per vector")));
        }
        if let Some(x0) = &self.filter.initial_state {
            if x0.len() != 2 * n {
                return Err(Error::Config(format!("filter.initial_state needs {} values", 2 * n)));
            }
        }
        self.aero.validate()?;
        for (name, v) in [
            ("filter.process_noise", self.filter.process_noise),
            ("filter.measurement_noise", self.filter.measurement_noise),
            ("filter.initial_covariance", self.filter.initial_covariance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        self.aekf().validate()?;
        if !(self.protocol.loss_probability >= 0.0 && self.protocol.loss_probability < 1.0) {
            return Err(Error::validation("protocol.loss_probability must lie in [0, 1)"));
        }
        if !(self.oracle.divergence_factor > 0.0) {
            return Err(Error::validation("oracle.divergence_factor must be positive"));
        }
        self.force_model()?.validate()?;
        Ok(())
    }

    pub fn aekf(&self) -> AekfConfig {
        AekfConfig {
            forgetting: self.filter.forgetting,
            adapt: self.filter.adapt,
            bias_reference: self.filter.bias_reference,
        }
    }

    pub fn coupled_matrices(&self) -> CoupledSeMatrices {
        self.forces.preset.matrices().unwrap_or(self.forces.coupled)
    }

    pub fn force_kind(&self) -> ForceKind {
        match (self.forces.model, self.case) {
            (ForceKind::Auto, CaseId::Case1Linear) => ForceKind::LinearSe,
            (ForceKind::Auto, CaseId::Case1Nonlinear) => ForceKind::NonlinearVortex,
            (ForceKind::Auto, CaseId::Case2Dof) => ForceKind::CoupledSe,
            (k, _) => k,
        }
    }

    pub fn force_model(&self) -> Result<ForceModel> {
        let span = self.forces.span;
        let model = match self.force_kind() {
            ForceKind::Zero => ForceModel::Zero,
            ForceKind::LinearSe => ForceModel::LinearSe {
                params: self.aero,
                span,
            },
            ForceKind::NonlinearVortex => ForceModel::NonlinearVortex {
                params: self.aero,
                span,
            },
            ForceKind::CoupledSe => ForceModel::CoupledSe {
                matrices: self.coupled_matrices(),
                span,
            },
            ForceKind::Auto => unreachable!("resolved above"),
        };
        if let Some(k) = model.dof_count() {
            if k != self.n_dof() {
                return Err(Error::Config(format!(
                    "force model {} does not fit {}",
                    model.name(),
                    self.case
                )));
            }
        }
        Ok(model)
    }

    /// The structure integrated by the oracle and the physical surrogate.
    pub fn governing_model(&self) -> Result<GoverningModel> {
        let limit = self.oracle.divergence_factor * self.aero.depth;
        let (structure, scheme) = match self.case {
            CaseId::Case1Linear => (
                Structure::Linear(assemble_matrices(&self.structure)?),
                Scheme::Newmark(NewmarkParams {
                    gamma: self.oracle.newmark_gamma,
                    beta: self.oracle.newmark_beta,
                }),
            ),
            CaseId::Case1Nonlinear => {
                let p = &self.structure[0];
                (
                    Structure::AmplitudeDependent(AmplitudeDependentSdof {
                        inertia: p.inertia,
                        omega0: p.circ_freq,
                        depth: self.aero.depth,
                    }),
                    Scheme::Rk4,
                )
            }
            CaseId::Case2Dof => (Structure::Linear(assemble_matrices(&self.structure)?), Scheme::Rk4),
        };
        Ok(GoverningModel {
            structure,
            scheme,
            divergence_limit: limit,
        })
    }

    pub fn initial_state(&self) -> MechState {
        MechState::new(
            nalgebra::DVector::from_column_slice(&self.initial.displacement),
            nalgebra::DVector::from_column_slice(&self.initial.velocity),
        )
    }
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for case in CaseId::ALL {
            let cfg = CaseConfig::preset(case);
            cfg.validate().unwrap();
            let back = CaseConfig::from_toml_str(&cfg.to_toml_string(), None).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn overlay_changes_only_named_keys() {
        let cfg = CaseConfig::from_toml_str("case = \"case1-linear\"\n[aero]\ny1 = 11.966\n", None).unwrap();
        let mut expected = CaseConfig::preset(CaseId::Case1Linear);
        expected.aero.y1 = 11.966;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn dotted_set() {
        let mut cfg = CaseConfig::preset(CaseId::Case2Dof);
        cfg.set("forces.preset", "divergent").unwrap();
        cfg.set("filter.adapt", "false").unwrap();
        cfg.set("dt", "0.002").unwrap();
        assert_eq!(cfg.forces.preset, CoupledPreset::Divergent);
        assert!(!cfg.filter.adapt);
        assert_eq!(cfg.dt, 0.002);
        assert!(cfg.set("dt", "-1").is_err());
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("case", "case1-linear").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            CaseConfig::from_toml_str("dt = 0.001", None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            CaseConfig::from_toml_str("case = \"case9\"", None),
            Err(Error::Config(_))
        ));
        assert!(CaseConfig::from_toml_str("case = \"case2dof\"\nbogus = 1", None).is_err());
        let mut cfg = CaseConfig::preset(CaseId::Case2Dof);
        for key in ["aero.nope", "filter.adapt.nope"] {
            assert!(matches!(cfg.set(key, "1"), Err(Error::Config(_))), "{key}");
        }
        let mut text = CaseConfig::preset(CaseId::Case2Dof).to_toml_string();
        text = text.replacen("[[structure]]\n", "[[structure]]\nnope = 1\n", 1);
        assert!(matches!(CaseConfig::from_toml_str(&text, None), Err(Error::Config(_))));
        assert!(CaseConfig::from_toml_str("case = \"case2dof\"", Some(CaseId::Case1Linear)).is_err());
        let dup = "case = \"case1-linear\"\n[[structure]]\ndof = \"heave\"\ninertia = 1.0\ndamping_ratio = 0.0\ncirc_freq = 1.0\n[[structure]]\ndof = \"heave\"\ninertia = 1.0\ndamping_ratio = 0.0\ncirc_freq = 1.0\n";
        assert!(matches!(CaseConfig::from_toml_str(dup, None), Err(Error::Config(_))));
        let mut cfg = CaseConfig::preset(CaseId::Case1Linear);
        cfg.t_end = cfg.dt;
        assert!(cfg.validate().is_err());
        cfg = CaseConfig::preset(CaseId::Case1Linear);
        cfg.forces.model = ForceKind::CoupledSe;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn coupled_presets_differ_in_torsional_damping() {
        let c = CoupledPreset::Convergent.matrices().unwrap();
        let d = CoupledPreset::Divergent.matrices().unwrap();
        assert_eq!(c.stiffness, d.stiffness);
        assert!(d.damping[1][1] > c.damping[1][1]);
        assert!(CoupledPreset::Custom.matrices().is_none());
    }
}
