//! Simulator backends: the interface the evaluator consumes, plus two
//! in-repo deterministic reference engines standing in for external physics
//! engines at desk scale.

pub mod engine;
mod external;
pub mod scenes;

pub use engine::{
    forward_kinematics, reference_engine_a, reference_engine_b, ContactSet, EngineParams,
    EngineState, ObjectBody, ReferenceEngine,
};
pub use external::ExternalBackend;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{BodyInventory, ParameterRegistry, ParameterVector};
use crate::pose::{Pose, Vec3};
use crate::scalar::Real;
use crate::trajectory::TimedTrajectory;

/// The sampling rate of reference data and simulated wrist trajectories.
pub const GRID_RATE_HZ: f64 = 20.0;

/// Object shapes available in the task set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectShape {
    Cube,
    Cuboid,
    Cylinder,
    Cone,
}

impl ObjectShape {
    /// Cylinders and cones roll; cubes and cuboids slide.
    pub fn rolls(&self) -> bool {
        matches!(self, ObjectShape::Cylinder | ObjectShape::Cone)
    }

    /// Characteristic contact radius, meters (fixed per shape).
    pub fn contact_radius(&self) -> f64 {
        match self {
            ObjectShape::Cube => 0.025,
            ObjectShape::Cuboid => 0.03,
            ObjectShape::Cylinder => 0.025,
            ObjectShape::Cone => 0.025,
        }
    }
}

impl std::fmt::Display for ObjectShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ObjectShape::Cube => "cube",
            ObjectShape::Cuboid => "cuboid",
            ObjectShape::Cylinder => "cylinder",
            ObjectShape::Cone => "cone",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Wood,
    Plastic,
}

impl std::fmt::Display for Material {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}",
            match self {
                Material::Wood => "wood",
                Material::Plastic => "plastic",
            }
        )
    }
}

/// The manipulated object of a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec<R> {
    pub shape: ObjectShape,
    pub material: Material,
    /// Nominal mass, kg (the mass bounds are built around this).
    pub nominal_mass: R,
    pub initial_pose: Pose<R>,
}

impl<R> ObjectSpec<R> {
    /// Registry body name: distinct per physical object across a campaign,
    /// shared by tasks that reuse the same object.
    pub fn body_id(&self) -> String {
        format!("object_{}_{}", self.shape, self.material)
    }
}

/// One waypoint of the arm command script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep<R> {
    /// Activation time, seconds.
    pub time: R,
    /// Per-joint target angles, radians.
    pub targets: [R; 6],
}

/// Scene description: a 6-DOF arm over a floor plane at z = 0, an optional
/// object, and the joint command script driving the episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec<R> {
    /// Link lengths, meters.
    pub link_lengths: [R; 6],
    /// Nominal link masses, kg.
    pub link_masses: [R; 6],
    /// Nominal gripper mass, kg.
    pub gripper_mass: R,
    pub command_script: Vec<ScriptStep<R>>,
    pub object: Option<ObjectSpec<R>>,
    /// Episode length, seconds.
    pub duration: R,
}

impl<R: Real> SceneSpec<R> {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > R::zero()) {
            return Err(Error::InvalidScene("duration must be positive".into()));
        }
        for w in self.command_script.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::InvalidScene(format!(
                    "command script times not strictly increasing at t={}",
                    w[1].time
                )));
            }
        }
        if self.link_lengths.iter().any(|l| !(*l > R::zero())) {
            return Err(Error::InvalidScene("link lengths must be positive".into()));
        }
        if let Some(obj) = &self.object {
            if !(obj.nominal_mass > R::zero()) {
                return Err(Error::InvalidScene("object mass must be positive".into()));
            }
        }
        Ok(())
    }

    /// The bodies this scene exposes to the parameter registry. The object
    /// mass entry is named after the physical object (shape and material),
    /// so registries built over several scenes get one mass descriptor per
    /// distinct object while contact parameters stay per-role.
    pub fn body_inventory(&self) -> BodyInventory<R> {
        let mut inv = BodyInventory::standard(&self.link_masses, self.gripper_mass, None);
        if let Some(obj) = &self.object {
            inv.massive.push((obj.body_id(), obj.nominal_mass));
            inv.contact.push("object".into());
        }
        inv
    }
}

/// Simulation outcome status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimStatus {
    Ok,
    Diverged,
    NonFinite,
}

/// What a backend returns: the wrist trajectory on the 20 Hz grid, the final
/// object position when the scene has an object, and a status flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult<R> {
    pub wrist: TimedTrajectory<R>,
    pub object_final: Option<Vec3<R>>,
    pub status: SimStatus,
}

/// Backend identifier, e.g. `engine-a` or `external:./my_sim`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BackendId(pub String);

impl BackendId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for BackendId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for BackendId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A simulator usable by the evaluator. Implementations must be
/// deterministic: equal inputs yield equal outputs.
pub trait SimulatorBackend<R: Real>: Send + Sync {
    fn id(&self) -> &BackendId;

    /// Runs one episode. `params` is aligned to `registry`; parameters the
    /// backend does not understand are ignored, absent ones fall back to the
    /// backend's generic values.
    fn simulate(
        &self,
        scene: &SceneSpec<R>,
        registry: &ParameterRegistry<R>,
        params: &ParameterVector<R>,
    ) -> Result<SimResult<R>>;

    /// The backend's documented out-of-the-box parameter values, encoded
    /// over `registry`. Always within the registry bounds so the vector can
    /// be evaluated or injected into a population.
    fn generic_defaults(
        &self,
        registry: &ParameterRegistry<R>,
        scene: &SceneSpec<R>,
    ) -> ParameterVector<R>;
}

/// Registry of available backends.
pub struct BackendRegistry<R: Real> {
    backends: Vec<Box<dyn SimulatorBackend<R>>>,
}

impl<R: Real> BackendRegistry<R> {
    pub fn empty() -> Self {
        Self {
            backends: Vec::new(),
        }
    }

    /// Registry preloaded with the two reference engines.
    pub fn with_reference_engines() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(reference_engine_a()));
        reg.register(Box::new(reference_engine_b()));
        reg
    }

    pub fn register(&mut self, backend: Box<dyn SimulatorBackend<R>>) {
        self.backends.push(backend);
    }

    pub fn get(&self, id: &BackendId) -> Result<&dyn SimulatorBackend<R>> {
        self.backends
            .iter()
            .map(|b| b.as_ref())
            .find(|b| b.id() == id)
            .ok_or_else(|| Error::UnknownBackend(id.to_string()))
    }

    /// Resolves `external:<command>` ids into subprocess backends on demand,
    /// otherwise looks the id up among registered backends.
    pub fn resolve(&mut self, id: &BackendId) -> Result<()> {
        if self.backends.iter().any(|b| b.id() == id) {
            return Ok(());
        }
        if let Some(command) = id.as_str().strip_prefix("external:") {
            self.register(Box::new(ExternalBackend::new(id.clone(), command)));
            return Ok(());
        }
        Err(Error::UnknownBackend(id.to_string()))
    }
}

/// Dispatches a simulation to the named backend.
pub fn simulate<R: Real>(
    backends: &BackendRegistry<R>,
    backend: &BackendId,
    scene: &SceneSpec<R>,
    registry: &ParameterRegistry<R>,
    params: &ParameterVector<R>,
) -> Result<SimResult<R>> {
    backends.get(backend)?.simulate(scene, registry, params)
}
