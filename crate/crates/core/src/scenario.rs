//! Scenario files: one TOML document describing a room, its inputs and
//! measurements, the exogenous signals and every solver setting.

use std::collections::BTreeMap;
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::analysis::EigenOptions;
use crate::cascade::ActuatorSensor;
use crate::error::{Error, Result};
use crate::fem::{InputShape, ObservationSpec, PhysicalParams};
use crate::mesh::{BoundaryInterval, Region, RoomGeometry};
use crate::sim::{ExogenousSignals, SignalChannel};
use crate::steady::{ForcingFields, NewtonOptions};
use crate::synthesis::{SignalSpec, SynthesisParams};

/// The reference room shipped with the crate.
pub const PAPER_ROOM: &str = include_str!("../scenarios/paper_room.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub inlet: Option<BoundaryInterval>,
    #[serde(default)]
    pub outlet: Option<BoundaryInterval>,
    #[serde(default)]
    pub heater: Option<BoundaryInterval>,
    #[serde(default)]
    pub regions: BTreeMap<String, Region>,
}

impl GeometrySection {
    pub fn room(&self) -> RoomGeometry {
        RoomGeometry {
            width: self.width,
            height: self.height,
            inlet: self.inlet,
            outlet: self.outlet,
            heater: self.heater,
            regions: self.regions.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    pub initial: ForcingFields,
    pub target: ForcingFields,
}

type Rows = Vec<Vec<f64>>;

/// Actuator and sensor realizations; each defaults to `ẋ = −x + u`, `y = x`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSection {
    pub a_a: Option<Rows>,
    pub b_a: Option<Rows>,
    pub c_a: Option<Rows>,
    pub a_s: Option<Rows>,
    pub b_s: Option<Rows>,
    pub c_s: Option<Rows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsSection {
    pub frequencies: Vec<f64>,
    #[serde(default)]
    pub orders: Vec<usize>,
    pub reference: Vec<SignalChannel>,
    #[serde(default)]
    pub disturbance: Vec<SignalChannel>,
}

impl SignalsSection {
    pub fn spec(&self) -> SignalSpec {
        SignalSpec {
            frequencies: self.frequencies.clone(),
            orders: self.orders.clone(),
        }
    }

    pub fn exogenous(&self) -> ExogenousSignals {
        ExogenousSignals {
            reference: self.reference.clone(),
            disturbance: self.disturbance.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    /// Mesh parameter `n` (`h = 1/n`) of the design model.
    pub synthesis_mesh: usize,
    /// Mesh parameter of the simulated plant.
    pub simulation_mesh: usize,
    /// Penalty `ε` of the simulated plant.
    pub penalty: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    /// Window of the steady tracking-error metrics.
    #[serde(default = "default_window")]
    pub metric_window: [f64; 2],
    /// Window of the exponential-envelope fit.
    #[serde(default = "default_fit")]
    pub fit_window: [f64; 2],
}

fn default_window() -> [f64; 2] {
    [40.0, 50.0]
}

fn default_fit() -> [f64; 2] {
    [5.0, 45.0]
}

/// Deliberate mismatch between design and simulation, for robustness runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    /// Simulated `A_a` is this multiple of the design `A_a`.
    #[serde(default = "unit")]
    pub actuator_scale: f64,
    /// Every disturbance coefficient is multiplied by this factor.
    #[serde(default = "unit")]
    pub disturbance_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for PerturbationSection {
    fn default() -> Self {
        PerturbationSection {
            actuator_scale: 1.0,
            disturbance_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomScenario {
    pub name: String,
    pub geometry: GeometrySection,
    pub physics: PhysicalParams,
    pub forcing: ForcingSection,
    #[serde(default)]
    pub newton: NewtonOptions,
    pub controls: Vec<InputShape>,
    #[serde(default)]
    pub disturbances: Vec<InputShape>,
    pub observations: Vec<ObservationSpec>,
    #[serde(default)]
    pub actuators: ActuatorSection,
    pub signals: SignalsSection,
    pub synthesis: SynthesisParams,
    pub discretization: DiscretizationSection,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub analysis: EigenOptions,
    #[serde(default)]
    pub perturbation: PerturbationSection,
}

fn matrix(rows: &Option<Rows>, default: Mat<f64>, path: &str) -> Result<Mat<f64>> {
    let Some(rows) = rows else { return Ok(default) };
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Schema {
            path: path.into(),
            reason: "rows have different lengths".into(),
        });
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl RoomScenario {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let mut s: RoomScenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let mut path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().to_string();
            // serde reports a missing key at its parent; name the key itself.
            if let Some(field) = msg.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
                path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
            }
            Error::Schema {
                path,
                reason: msg.trim().to_string(),
            }
        })?;
        s.normalize();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn paper_room() -> Self {
        Self::parse(PAPER_ROOM).expect("bundled scenario is valid")
    }

    /// Bundled scenarios by name.
    pub fn bundled(name: &str) -> Option<Self> {
        (name == "paper_room").then(Self::paper_room)
    }

    fn normalize(&mut self) {
        if self.signals.orders.is_empty() {
            self.signals.orders = vec![1; self.signals.frequencies.len()];
        }
    }

    /// Canonical TOML with defaults filled in; parses back to `self`.
    pub fn normalized_dump(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn inputs(&self) -> usize {
        self.controls.len()
    }

    pub fn outputs(&self) -> usize {
        self.observations.len()
    }

    pub fn room(&self) -> RoomGeometry {
        self.geometry.room()
    }

    pub fn actuator_sensor(&self) -> Result<ActuatorSensor> {
        let (m, p) = (self.inputs(), self.outputs());
        let d = ActuatorSensor::first_order(m, p);
        let a = &self.actuators;
        let acts = ActuatorSensor {
            a_a: matrix(&a.a_a, d.a_a, "actuators.a_a")?,
            b_a: matrix(&a.b_a, d.b_a, "actuators.b_a")?,
            c_a: matrix(&a.c_a, d.c_a, "actuators.c_a")?,
            a_s: matrix(&a.a_s, d.a_s, "actuators.a_s")?,
            b_s: matrix(&a.b_s, d.b_s, "actuators.b_s")?,
            c_s: matrix(&a.c_s, d.c_s, "actuators.c_s")?,
        };
        acts.validate()?;
        if acts.c_a.nrows() != m || acts.b_s.ncols() != p {
            return Err(Error::Invariant(format!(
                "actuators must feed {m} plant inputs and sensors read {p} plant outputs"
            )));
        }
        Ok(acts)
    }

    /// The cascade as simulated: `A_a` scaled by the perturbation factor.
    pub fn simulated_actuator_sensor(&self) -> Result<ActuatorSensor> {
        let mut acts = self.actuator_sensor()?;
        acts.a_a = &acts.a_a * faer::Scale(self.perturbation.actuator_scale);
        Ok(acts)
    }

    pub fn simulated_signals(&self) -> ExogenousSignals {
        self.signals.exogenous().with_disturbance_scale(self.perturbation.disturbance_scale)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, p) = (self.inputs(), self.outputs());
        if p == 0 {
            return Err(Error::Invariant("at least one observation is required".into()));
        }
        if m < p {
            return Err(Error::Invariant(format!(
                "inputs must at least match outputs ({m} controls, {p} observations)"
            )));
        }
        let room = self.room();
        room.validate()?;
        self.physics.validate()?;
        for name in self
            .controls
            .iter()
            .chain(&self.disturbances)
            .map(|s| &s.region)
            .chain(self.observations.iter().map(|o| &o.region))
        {
            room.region(name)?;
        }
        let spec = self.signals.spec();
        spec.validate()?;
        let ex = self.signals.exogenous();
        if ex.reference.len() != p {
            return Err(Error::Invariant(format!("{} reference signals for {p} outputs", ex.reference.len())));
        }
        if ex.disturbance.len() != self.disturbances.len() {
            return Err(Error::Invariant(format!(
                "{} disturbance signals for {} disturbance inputs",
                ex.disturbance.len(),
                self.disturbances.len()
            )));
        }
        ex.validate(&spec)?;
        self.actuator_sensor()?;
        self.synthesis.r1_matrix(p)?;
        self.synthesis.r2_matrix(self.actuator_sensor()?.b_a.ncols())?;
        let d = &self.discretization;
        if d.synthesis_mesh == 0 || d.simulation_mesh == 0 {
            return Err(Error::Invariant("mesh parameters must be positive".into()));
        }
        if !(d.penalty > 0.0) {
            return Err(Error::Invariant("penalty ε must be positive".into()));
        }
        let sim = &self.simulation;
        if !(sim.dt > 0.0 && sim.t_end > 0.0 && sim.dt <= sim.t_end) {
            return Err(Error::Invariant("need 0 < dt ≤ t_end".into()));
        }
        if !(self.synthesis.alpha1 >= 0.0 && self.synthesis.alpha2 >= 0.0) {
            return Err(Error::Invariant("α₁, α₂ must be non-negative".into()));
        }
        Ok(())
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, mesh: Option<usize>, dt: Option<f64>, t_end: Option<f64>) -> Result<Self> {
        if let Some(n) = mesh {
            self.discretization.synthesis_mesh = n;
            self.discretization.simulation_mesh = n;
        }
        if let Some(dt) = dt {
            self.simulation.dt = dt;
        }
        if let Some(t) = t_end {
            // Windows keep their place relative to the horizon.
            let old = self.simulation.t_end;
            let rescale = |w: [f64; 2]| [w[0] / old * t, w[1] / old * t];
            self.simulation.metric_window = rescale(self.simulation.metric_window);
            self.simulation.fit_window = rescale(self.simulation.fit_window);
            self.simulation.t_end = t;
            self.simulation.snapshots = vec![t];
        }
        self.validate()?;
        Ok(self)
    }
}
