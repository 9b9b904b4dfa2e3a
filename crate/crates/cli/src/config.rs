//! Experiment configuration: JSON schema, validation and conversion into
//! library objects.

use std::sync::Arc;

use gvi_core::discrete::NewtonConfig;
use gvi_core::dynamics::{FlowConfig, GradientMode, LagrangianSystem, QuadraticLagrangian, SeparablePolynomial};
use gvi_core::exact::{CertifyConfig, JacobianMode, ShootingConfig};
use gvi_core::geometry::{AlgebroidVector, GroupoidElement, Instance, MatrixGroup};
use gvi_core::schemes::SchemeSpec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Matrix given as a list of rows.
pub type RowMajor = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub scheme: Option<SchemeSpec>,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub h_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub initial: Option<InitialData>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub order: OrderBlock,
    #[serde(default)]
    pub exact: ExactBlock,
    #[serde(default)]
    pub certify: CertifyBlock,
    #[serde(default)]
    pub check: CheckBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    /// `½|v|² − ½ω²|q|²` on `Rⁿ × Rⁿ`.
    HarmonicOscillator {
        #[serde(default = "one_usize")]
        dim: usize,
        #[serde(default = "one_f64")]
        omega: f64,
    },
    FreeParticle {
        #[serde(default = "one_usize")]
        dim: usize,
    },
    /// `½ ξᵀ diag(I) ξ` on so(3).
    RigidBody { inertia: [f64; 3] },
    /// Rigid body coupled to a particle on `SO(3) × Rᵐ`.
    HeavyTop {
        inertia: [f64; 3],
        mass: f64,
        gravity: f64,
        #[serde(default)]
        coupling: f64,
        base_dim: usize,
    },
    /// `½ yᵀ M y − Σ_i Σ_k c_ik x_i^k` on any instance.
    Quadratic {
        instance: InstanceConfig,
        mass_matrix: RowMajor,
        #[serde(default)]
        potential: Vec<Vec<f64>>,
    },
}

fn one_usize() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceConfig {
    Pair {
        dim: usize,
    },
    So3,
    MatrixGroup {
        basis: Vec<RowMajor>,
    },
    /// `K × (Rᵐ × Rᵐ)`; `K = SO(3)` unless a basis is given.
    TrivialBundle {
        #[serde(default)]
        basis: Option<Vec<RowMajor>>,
        base_dim: usize,
    },
}

/// Starting data: an algebroid value `a0` (the first arrow is then
/// `exp_h(a0)`), or an explicit arrow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Velocity(VelocitySpec),
    Arrow(ArrowSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySpec {
    #[serde(default)]
    pub base: Vec<f64>,
    pub fiber: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrowSpec {
    Pair(PairArrow),
    Group(GroupArrow),
    Bundle(BundleArrow),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairArrow {
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupArrow {
    pub g: RowMajor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleArrow {
    pub k: RowMajor,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub flow_rel: f64,
    pub flow_abs: f64,
    pub flow_max_steps: usize,
    pub shooting: f64,
    pub shooting_max_iters: usize,
    pub shooting_jacobian: JacobianMode,
    pub newton: f64,
    pub newton_max_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let flow = FlowConfig::default();
        let shoot = ShootingConfig::default();
        let newton = NewtonConfig::default();
        Self {
            flow_rel: flow.rel_tol,
            flow_abs: flow.abs_tol,
            flow_max_steps: flow.max_steps,
            shooting: shoot.residual_tol,
            shooting_max_iters: shoot.max_newton_iters,
            shooting_jacobian: shoot.jacobian,
            newton: newton.residual_tol,
            newton_max_iters: newton.max_iters,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderBlock {
    /// Probe algebroid values; defaults to the `initial` velocity.
    pub probes: Vec<VelocitySpec>,
    /// Allowed deviation of the DL-difference slope from `r + 1`.
    pub dl_band: Option<f64>,
    /// Allowed deviation of the local flow slope from `r + 1`.
    pub flow_band: Option<f64>,
    /// When set, also sweep the error after this fixed time.
    pub global_time: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactBlock {
    pub arrows: Vec<ArrowSpec>,
    pub quad_order: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyBlock {
    pub r0: f64,
    pub r1: f64,
    pub target_radius: f64,
    pub samples: usize,
    pub h_max: f64,
    pub center: Option<Vec<f64>>,
}

impl Default for CertifyBlock {
    fn default() -> Self {
        let c = CertifyConfig::default();
        Self { r0: c.r0, r1: c.r1, target_radius: c.target_radius, samples: c.samples, h_max: c.h_max, center: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckBlock {
    /// Arrows to check; when empty, `random_arrows` arrows `exp_h(a0)` are
    /// drawn with `‖a0‖ ≤ probe_radius`.
    pub arrows: Vec<ArrowSpec>,
    pub random_arrows: usize,
    pub probe_radius: f64,
    /// Thresholds at shooting tolerance 1e-12; they scale linearly with
    /// looser shooting tolerances.
    pub hamiltonian_map_threshold: Option<f64>,
    pub legendre_threshold: f64,
    pub legendre_fd_threshold: f64,
    pub reduction_threshold: f64,
    pub symplectic_threshold: f64,
    /// Test fixture: flips the sign of the minus Legendre transform fed to
    /// the Hamiltonian-flow identity.
    pub negate_minus_legendre: bool,
}

impl Default for CheckBlock {
    fn default() -> Self {
        Self {
            arrows: Vec::new(),
            random_arrows: 20,
            probe_radius: 1.0,
            hamiltonian_map_threshold: None,
            legendre_threshold: 1e-8,
            legendre_fd_threshold: 1e-6,
            reduction_threshold: 1e-7,
            symplectic_threshold: 1e-5,
            negate_minus_legendre: false,
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(config_error(format!("`{name}` must be positive and finite, got {x}")))
    }
}

pub fn matrix(rows: &RowMajor, what: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(config_error(format!("`{what}` must be a non-empty list of equal-length rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(config_error(format!("`{what}` has non-finite entries")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn vector(v: &[f64], what: &str) -> Result<DVector<f64>, CliError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(config_error(format!("`{what}` has non-finite entries")));
    }
    Ok(DVector::from_row_slice(v))
}

fn group_from_basis(basis: &[RowMajor]) -> Result<MatrixGroup, CliError> {
    let mats = basis.iter().map(|b| matrix(b, "basis")).collect::<Result<Vec<_>, _>>()?;
    MatrixGroup::from_basis(mats).map_err(|e| config_error(e.to_string()))
}

impl InstanceConfig {
    pub fn build(&self) -> Result<Instance, CliError> {
        Ok(match self {
            InstanceConfig::Pair { dim } if *dim > 0 => Instance::pair(*dim),
            InstanceConfig::Pair { .. } => return Err(config_error("pair dimension must be positive")),
            InstanceConfig::So3 => Instance::so3(),
            InstanceConfig::MatrixGroup { basis } => Instance::MatrixGroup(Arc::new(group_from_basis(basis)?)),
            InstanceConfig::TrivialBundle { basis, base_dim } => {
                let group = match basis {
                    Some(b) => group_from_basis(b)?,
                    None => MatrixGroup::so3(),
                };
                if *base_dim == 0 {
                    return Err(config_error("bundle base dimension must be positive"));
                }
                Instance::bundle(group, *base_dim)
            }
        })
    }
}

impl SystemConfig {
    pub fn build(&self) -> Result<LagrangianSystem, CliError> {
        let lib = |r: gvi_core::Result<LagrangianSystem>| r.map_err(|e| config_error(e.to_string()));
        match self {
            SystemConfig::HarmonicOscillator { dim, omega } => {
                if *dim == 0 || !omega.is_finite() {
                    return Err(config_error("oscillator needs a positive dimension and finite omega"));
                }
                Ok(LagrangianSystem::harmonic_oscillator(*dim, *omega))
            }
            SystemConfig::FreeParticle { dim } => {
                if *dim == 0 {
                    return Err(config_error("free particle needs a positive dimension"));
                }
                Ok(LagrangianSystem::free_particle(*dim))
            }
            SystemConfig::RigidBody { inertia } => lib(LagrangianSystem::rigid_body(*inertia)),
            SystemConfig::HeavyTop { inertia, mass, gravity, coupling, base_dim } => {
                if !gravity.is_finite() || !coupling.is_finite() {
                    return Err(config_error("heavy top parameters must be finite"));
                }
                lib(LagrangianSystem::heavy_top_trivial_bundle(*inertia, *mass, *gravity, *coupling, *base_dim))
            }
            SystemConfig::Quadratic { instance, mass_matrix, potential } => {
                let inst = instance.build()?;
                let mass = matrix(mass_matrix, "mass_matrix")?;
                let d = inst.fiber_dim();
                if mass.nrows() != d || mass.ncols() != d {
                    return Err(config_error(format!("mass_matrix must be {d}x{d}")));
                }
                let nb = inst.base_dim();
                let potential = if potential.is_empty() {
                    SeparablePolynomial::zero(nb)
                } else if potential.len() == nb && potential.iter().flatten().all(|c| c.is_finite()) {
                    SeparablePolynomial { coeffs: potential.clone() }
                } else {
                    return Err(config_error(format!("potential needs {nb} finite coefficient lists")));
                };
                let l = QuadraticLagrangian::new(mass, potential).map_err(|e| config_error(e.to_string()))?;
                Ok(LagrangianSystem::new(inst, Arc::new(l), GradientMode::Analytic))
            }
        }
    }
}

impl VelocitySpec {
    pub fn build(&self, inst: &Instance) -> Result<AlgebroidVector, CliError> {
        let a = AlgebroidVector::new(vector(&self.base, "base")?, vector(&self.fiber, "fiber")?);
        inst.check_vector(&a).map_err(|e| config_error(e.to_string()))?;
        Ok(a)
    }
}

impl ArrowSpec {
    pub fn build(&self, inst: &Instance) -> Result<GroupoidElement, CliError> {
        let g = match self {
            ArrowSpec::Pair(p) => GroupoidElement::Pair { q0: vector(&p.q0, "q0")?, q1: vector(&p.q1, "q1")? },
            ArrowSpec::Group(p) => GroupoidElement::Group { g: matrix(&p.g, "g")? },
            ArrowSpec::Bundle(p) => {
                GroupoidElement::Bundle { k: matrix(&p.k, "k")?, x0: vector(&p.x0, "x0")?, x1: vector(&p.x1, "x1")? }
            }
        };
        inst.check_element(&g).map_err(|e| config_error(e.to_string()))?;
        Ok(g)
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<(), CliError> {
        positive("tolerances.flow_rel", self.flow_rel)?;
        positive("tolerances.flow_abs", self.flow_abs)?;
        positive("tolerances.shooting", self.shooting)?;
        positive("tolerances.newton", self.newton)?;
        if self.flow_max_steps == 0 || self.shooting_max_iters == 0 || self.newton_max_iters == 0 {
            return Err(config_error("iteration limits must be positive"));
        }
        Ok(())
    }

    pub fn flow(&self) -> FlowConfig {
        FlowConfig { abs_tol: self.flow_abs, rel_tol: self.flow_rel, max_steps: self.flow_max_steps }
    }

    pub fn shooting(&self) -> ShootingConfig {
        ShootingConfig {
            residual_tol: self.shooting,
            max_newton_iters: self.shooting_max_iters,
            jacobian: self.shooting_jacobian,
            flow: self.flow(),
            ..ShootingConfig::default()
        }
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig { residual_tol: self.newton, max_iters: self.newton_max_iters, ..NewtonConfig::default() }
    }
}

impl ExperimentConfig {
    /// Parses and validates the parts every command uses.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.tolerances.validate()?;
        if let Some(h) = cfg.h {
            positive("h", h)?;
        }
        if let Some(grid) = &cfg.h_grid {
            for &h in grid {
                positive("h_grid", h)?;
            }
        }
        Ok(cfg)
    }

    pub fn require_h(&self) -> Result<f64, CliError> {
        self.h.ok_or_else(|| config_error("`h` is required"))
    }

    pub fn require_scheme(&self) -> Result<&SchemeSpec, CliError> {
        self.scheme.as_ref().ok_or_else(|| config_error("`scheme` is required"))
    }

    pub fn require_initial(&self) -> Result<&InitialData, CliError> {
        self.initial.as_ref().ok_or_else(|| config_error("`initial` is required"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = ExperimentConfig::from_json(r#"{"system":{"kind":"harmonic_oscillator"}}"#).unwrap();
        assert_eq!(cfg.system, SystemConfig::HarmonicOscillator { dim: 1, omega: 1.0 });
        assert_eq!(cfg.tolerances, Tolerances::default());
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"system":{"kind":"harmonic_oscillator"},"extra":1}"#,
            r#"{"system":{"kind":"harmonic_oscillator","mass":2}}"#,
            r#"{"system":{"kind":"harmonic_oscillator"},"tolerances":{"flow":1e-9}}"#,
            r#"{"system":{"kind":"pendulum"}}"#,
            r#"{"system":{"kind":"free_particle"},"initial":{"velocity":{"fiber":[1],"speed":2}}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn arrows_and_instances() {
        let text = r#"{
            "system": {"kind": "quadratic", "instance": {"kind": "so3"},
                       "mass_matrix": [[1,0,0],[0,2,0],[0,0,3]]},
            "initial": {"arrow": {"g": [[1,0,0],[0,1,0],[0,0,1]]}}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let sys = cfg.system.build().unwrap();
        let InitialData::Arrow(a) = cfg.initial.unwrap() else { panic!() };
        assert_eq!(a.build(sys.instance()).unwrap(), GroupoidElement::Group { g: DMatrix::identity(3, 3) });
        // a non-rotation is rejected by the instance
        let bad = ArrowSpec::Group(GroupArrow { g: vec![vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]] });
        assert!(bad.build(sys.instance()).is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::from_json(r#"{"system":{"kind":"free_particle"},"h":-0.1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"system":{"kind":"free_particle"},"tolerances":{"newton":0}}"#).is_err());
        let cfg = ExperimentConfig::from_json(r#"{"system":{"kind":"rigid_body","inertia":[1,-2,3]}}"#).unwrap();
        assert!(cfg.system.build().is_err());
    }
}
