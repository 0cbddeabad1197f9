//! Run configuration. Every field has a default and the defaults describe the
//! Kuramoto–Sivashinsky worked example, so `{"schema_version": 1}` is a
//! complete config. Node ids are 1-based in the file.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{AlgorithmParams, PerformanceWeights};
use crate::error::{Error, Result};
use crate::lmi::SolverOptions;
use crate::network::{Edge, NetworkSpec, SensorNetwork};
use crate::simulate::{DisturbanceSpec, InitialCondition, SimulationOptions};
use crate::spectral::{
    build_modal_system, estimate_kappa1, Kappa1, Kappa1Source, ModalSystem, OperatorSpec,
    DEFAULT_KAPPA1_SAMPLES, DEFAULT_KAPPA1_SEED, DEFAULT_RADIUS_FACTOR,
};

pub const SCHEMA_VERSION: u32 = 1;

/// A spatial location: radians, or a multiple of π as `{"pi": x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Location {
    Radians(f64),
    Pi {
        pi: f64,
    },
}

impl Location {
    pub fn radians(self) -> f64 {
        match self {
            Location::Radians(z) => z,
            Location::Pi { pi } => pi * PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kappa1Estimate {
    /// Ball radius in slow coordinates. Takes precedence over `radius_factor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Radius as a multiple of `‖x_s,0‖` when `radius` is absent.
    #[serde(default = "default_radius_factor")]
    pub radius_factor: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_kappa_seed")]
    pub seed: u64,
}

fn default_radius_factor() -> f64 {
    DEFAULT_RADIUS_FACTOR
}
fn default_samples() -> usize {
    DEFAULT_KAPPA1_SAMPLES
}
fn default_kappa_seed() -> u64 {
    DEFAULT_KAPPA1_SEED
}

impl Default for Kappa1Estimate {
    fn default() -> Self {
        Self {
            radius: None,
            radius_factor: DEFAULT_RADIUS_FACTOR,
            samples: DEFAULT_KAPPA1_SAMPLES,
            seed: DEFAULT_KAPPA1_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Kappa1Config {
    Value(f64),
    Estimate(Kappa1Estimate),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub instability: f64,
    pub slow_modes: usize,
    pub actuators: Vec<Location>,
    pub disturbances: Vec<Location>,
    pub input_gain: f64,
    pub disturbance_gain: f64,
    /// `U(z, 0) = Σ_k c_k sin(kz)`, `k = 1, 2, …`.
    pub initial_sine_coefficients: Vec<f64>,
    pub kappa1: Kappa1Config,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            instability: 0.4,
            slow_modes: 2,
            actuators: vec![Location::Pi { pi: -0.2 }, Location::Pi { pi: 0.4 }],
            disturbances: vec![Location::Pi { pi: -0.1 }, Location::Pi { pi: 0.2 }],
            input_gain: 1.0,
            disturbance_gain: 1.0,
            initial_sine_coefficients: vec![3.0, 2.0, -1.0],
            kappa1: Kappa1Config::Estimate(Kappa1Estimate {
                radius: Some(0.2),
                ..Default::default()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub from: usize,
    pub to: usize,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: usize,
    /// `from → to` means `to` is a neighbor of `from`.
    pub edges: Vec<EdgeConfig>,
    /// Point-sensor locations per node.
    pub sensors: Vec<Vec<Location>>,
    pub sensor_gain: f64,
    pub controllers: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let e = |from, to| EdgeConfig { from, to, weight: 1.0 };
        Self {
            nodes: 4,
            edges: vec![e(1, 2), e(1, 4), e(2, 1), e(3, 1), e(4, 3)],
            sensors: [-0.6, -0.3, 0.2, 0.5]
                .iter()
                .map(|&pi| vec![Location::Pi { pi }])
                .collect(),
            sensor_gain: 1.0,
            controllers: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub t_f: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            q: vec![0.1, 0.1],
            r: vec![0.0, 0.0],
            t_f: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub relative_margin: f64,
    pub dim_cap: usize,
    pub feasibility_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            relative_margin: d.relative_margin,
            dim_cap: d.dim_cap,
            feasibility_tol: d.feasibility_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub rho0: f64,
    pub xi: f64,
    pub delta_rho: f64,
    pub seed_cap: usize,
    pub rho_cap: usize,
    pub beta_tol: f64,
    pub gain_bound: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub bisection_tol: f64,
    pub solver: SolverConfig,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        let d = AlgorithmParams::default();
        Self {
            rho0: d.rho0,
            xi: d.xi,
            delta_rho: d.delta_rho,
            seed_cap: d.seed_cap,
            rho_cap: d.rho_cap,
            beta_tol: d.beta_tol,
            gain_bound: d.gain_bound,
            tau_min: d.tau_min,
            tau_max: d.tau_max,
            bisection_tol: d.bisection_tol,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbancePreset {
    None,
    Reference,
    Random,
}

impl std::str::FromStr for DisturbancePreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "reference" => Ok(Self::Reference),
            "random" => Ok(Self::Random),
            _ => Err(format!("unknown disturbance preset {s:?} (none, reference, random)")),
        }
    }
}

/// Initial plant state. `Auto` starts from rest when a disturbance is active
/// (the attenuation ratio is defined for a zero initial state) and from the
/// configured profile otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialPreset {
    Auto,
    Model,
    Zero,
}

impl std::str::FromStr for InitialPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "model" => Ok(Self::Model),
            "zero" => Ok(Self::Zero),
            _ => Err(format!("unknown initial condition {s:?} (auto, model, zero)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    /// Retained modes `N`, slow and fast together.
    pub modes: usize,
    pub decimation: usize,
    pub disturbance: DisturbancePreset,
    pub initial: InitialPreset,
    /// Seed and amplitude of the `random` preset.
    pub seed: u64,
    pub amplitude: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: crate::simulate::DEFAULT_DT,
            modes: 30,
            decimation: crate::simulate::DEFAULT_DECIMATION,
            disturbance: DisturbancePreset::Reference,
            initial: InitialPreset::Auto,
            seed: 1,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub network: NetworkConfig,
    pub weights: WeightsConfig,
    pub algorithm: AlgorithmConfig,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: ModelConfig::default(),
            network: NetworkConfig::default(),
            weights: WeightsConfig::default(),
            algorithm: AlgorithmConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| invalid(format!("malformed JSON: {e}")))?;
        match value.get("schema_version") {
            Some(v) if v.as_u64() == Some(u64::from(SCHEMA_VERSION)) => {}
            Some(v) => return Err(invalid(format!("unsupported schema_version {v}"))),
            None => return Err(invalid("missing schema_version")),
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not need the modal basis.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.slow_modes < 1 {
            return Err(invalid("model.slow_modes must be at least 1"));
        }
        if self.simulation.modes < m.slow_modes {
            return Err(invalid(format!(
                "simulation.modes ({}) is below model.slow_modes ({})",
                self.simulation.modes, m.slow_modes
            )));
        }
        match &m.kappa1 {
            Kappa1Config::Value(v) if !(v.is_finite() && *v >= 0.0) => {
                return Err(invalid(format!("kappa1 value must be nonnegative, got {v}")))
            }
            Kappa1Config::Estimate(e) => {
                if e.samples < 1 {
                    return Err(invalid("kappa1 estimate needs at least one sample"));
                }
                if e.radius.map_or(false, |r| !(r > 0.0)) || !(e.radius_factor > 0.0) {
                    return Err(invalid("kappa1 estimate radius must be positive"));
                }
            }
            _ => {}
        }
        let n = &self.network;
        if n.sensors.len() != n.nodes {
            return Err(invalid(format!(
                "network.sensors lists {} nodes, network.nodes is {}",
                n.sensors.len(),
                n.nodes
            )));
        }
        let id_ok = |id: usize| id >= 1 && id <= n.nodes;
        for e in &n.edges {
            if !id_ok(e.from) || !id_ok(e.to) {
                return Err(invalid(format!("edge {} -> {} names an unknown node", e.from, e.to)));
            }
        }
        for &c in &n.controllers {
            if !id_ok(c) {
                return Err(invalid(format!("controller node {c} does not exist")));
            }
        }
        let w = &self.weights;
        if w.q.len() != m.slow_modes {
            return Err(invalid(format!(
                "weights.q has {} entries, expected {}",
                w.q.len(),
                m.slow_modes
            )));
        }
        if w.r.len() != m.actuators.len() {
            return Err(invalid(format!(
                "weights.r has {} entries, expected {}",
                w.r.len(),
                m.actuators.len()
            )));
        }
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.dt.is_finite()) || s.decimation < 1 {
            return Err(invalid("simulation.dt must be positive and decimation at least 1"));
        }
        let a = &self.algorithm;
        if !(a.rho0 > 0.0 && a.xi > 0.0 && a.delta_rho > 0.0) {
            return Err(invalid("algorithm.rho0, xi and delta_rho must be positive"));
        }
        if !(a.tau_min > 0.0 && a.tau_max > a.tau_min) {
            return Err(invalid("algorithm needs 0 < tau_min < tau_max"));
        }
        Ok(())
    }

    pub fn operator_spec(&self, modes: usize) -> OperatorSpec {
        let m = &self.model;
        OperatorSpec {
            instability: m.instability,
            n_slow: m.slow_modes,
            n_total: modes,
            actuator_locations: m.actuators.iter().map(|l| l.radians()).collect(),
            disturbance_locations: m.disturbances.iter().map(|l| l.radians()).collect(),
            input_gain: m.input_gain,
            disturbance_gain: m.disturbance_gain,
        }
    }

    pub fn initial_field(&self, z: f64) -> f64 {
        self.model
            .initial_sine_coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * z).sin())
            .sum()
    }

    /// Modal system with `modes` retained modes and κ₁ as configured.
    pub fn build_modal(&self, modes: usize) -> Result<ModalSystem> {
        let mut sys = build_modal_system(&self.operator_spec(modes), |z| self.initial_field(z))
            .map_err(|e| invalid(e.to_string()))?;
        sys.kappa1 = match &self.model.kappa1 {
            Kappa1Config::Value(v) => Kappa1::configured(*v),
            Kappa1Config::Estimate(e) => {
                let radius = match e.radius {
                    Some(r) => r,
                    None => {
                        let norm = sys.x_s0.norm();
                        if norm > 0.0 {
                            e.radius_factor * norm
                        } else {
                            1.0
                        }
                    }
                };
                Kappa1 {
                    value: estimate_kappa1(&sys, radius, e.samples, e.seed)?,
                    radius: Some(radius),
                    source: Kappa1Source::Estimated {
                        samples: e.samples,
                        seed: e.seed,
                    },
                }
            }
        };
        Ok(sys)
    }

    /// The network with 0-based node ids.
    pub fn network_spec(&self) -> NetworkSpec {
        let n = &self.network;
        NetworkSpec {
            node_count: n.nodes,
            edges: n
                .edges
                .iter()
                .map(|e| Edge {
                    from: e.from - 1,
                    to: e.to - 1,
                    weight: e.weight,
                })
                .collect(),
            sensor_locations: n
                .sensors
                .iter()
                .map(|s| s.iter().map(|l| l.radians()).collect())
                .collect(),
            sensor_gain: n.sensor_gain,
            controller_nodes: n.controllers.iter().map(|c| c - 1).collect(),
        }
    }

    pub fn build_network(&self, modal: &ModalSystem) -> Result<SensorNetwork> {
        SensorNetwork::new(self.network_spec(), &modal.eigen).map_err(|e| invalid(e.to_string()))
    }

    pub fn weights(&self) -> Result<PerformanceWeights> {
        PerformanceWeights::diagonal(&self.weights.q, &self.weights.r, self.weights.t_f)
            .map_err(|e| invalid(e.to_string()))
    }

    pub fn algorithm_params(&self) -> AlgorithmParams {
        let a = &self.algorithm;
        AlgorithmParams {
            rho0: a.rho0,
            xi: a.xi,
            delta_rho: a.delta_rho,
            seed_cap: a.seed_cap,
            rho_cap: a.rho_cap,
            beta_tol: a.beta_tol,
            gain_bound: a.gain_bound,
            tau_min: a.tau_min,
            tau_max: a.tau_max,
            bisection_tol: a.bisection_tol,
            solver: SolverOptions {
                tol: a.solver.tol,
                max_iter: a.solver.max_iter,
                relative_margin: a.solver.relative_margin,
                dim_cap: a.solver.dim_cap,
                feasibility_tol: a.solver.feasibility_tol,
                ..SolverOptions::default()
            },
        }
    }

    pub fn disturbance(&self) -> DisturbanceSpec {
        let s = &self.simulation;
        match s.disturbance {
            DisturbancePreset::None => DisturbanceSpec::None,
            DisturbancePreset::Reference => DisturbanceSpec::Reference,
            DisturbancePreset::Random => DisturbanceSpec::RandomBounded {
                seed: s.seed,
                amplitude: s.amplitude,
            },
        }
    }

    pub fn simulation_options(&self) -> SimulationOptions {
        let s = &self.simulation;
        let initial = match s.initial {
            InitialPreset::Model => InitialCondition::Model,
            InitialPreset::Zero => InitialCondition::Zero,
            InitialPreset::Auto => match s.disturbance {
                DisturbancePreset::None => InitialCondition::Model,
                _ => InitialCondition::Zero,
            },
        };
        SimulationOptions {
            t_f: self.weights.t_f,
            dt: s.dt,
            decimation: s.decimation,
            initial,
            nonlinear: true,
        }
    }
}
