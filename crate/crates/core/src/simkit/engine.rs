//! The two reference engines.
//!
//! Both share one deliberately simple but parameter-faithful model: a
//! proportional controller tracks the command script per joint under
//! velocity and acceleration caps, the wrist follows from forward
//! kinematics, and a pushed object slides or rolls on the floor under
//! Coulomb friction. Every registry parameter has a mechanical channel:
//!
//! - `time_step`: integration and control-loop granularity (also shifts the
//!   state seen at each 20 Hz sample).
//! - `max_joint_velocity_j*` (deg/s): per-joint speed cap.
//! - `max_joint_torque_j*`: acceleration cap surrogate `torque / I_eff`,
//!   with `I_eff` scaled by the tunable distal masses.
//! - `mass_*`: arm inertia (links, gripper) and impulse mass ratio (object).
//! - `lateral_friction_*`: object-floor slide deceleration (object/floor
//!   pair) and gripper-object tangential velocity transfer (gripper).
//! - `joint_damping_j*`, gripper `linear/angular_damping`: multiplicative
//!   joint velocity decay per step.
//! - `rolling_friction_*`: roll deceleration for cylinders and cones;
//!   gripper rolling friction trims the imparted roll speed.
//! - `sliding_friction_*`: secondary slide-deceleration term.
//! - `restitution_*`: gripper-object impulse gain.
//! - object/floor `linear/angular_damping`: velocity decay of sliding and
//!   rolling objects (the angular terms act on rolling shapes).
//!
//! Engine A integrates joints with explicit Euler; engine B is
//! semi-implicit and transfers a stiffer contact impulse, which gives it
//! systematically different object outcomes.
//!
//! Fixed, non-tunable model constants: gravity 9.81 m/s^2, controller gain
//! 10 /s, gripper contact sphere radius 0.03 m.

use crate::error::{Error, Result};
use crate::params::{ParameterRegistry, ParameterVector};
use crate::pose::{Pose, UnitQuat, Vec3};
use crate::scalar::{real, Real};
use crate::trajectory::{grid_points, Sample, TimedTrajectory};

use super::{BackendId, SceneSpec, SimResult, SimStatus, SimulatorBackend, GRID_RATE_HZ};

pub const GRAVITY: f64 = 9.81;
pub const CONTROLLER_GAIN: f64 = 10.0;
pub const GRIPPER_RADIUS: f64 = 0.03;

/// Generic (out-of-the-box) values used for parameters that are not tuned.
pub mod generic {
    pub const TIMESTEP_ENGINE_A: f64 = 0.0041;
    pub const TIMESTEP_ENGINE_B: f64 = 0.05;
    pub const MAX_JOINT_TORQUE: f64 = 1000.0;
    pub const MAX_JOINT_VELOCITY_DEG: f64 = 36.0;
    pub const LATERAL_FRICTION: f64 = 0.5;
    pub const ROLLING_FRICTION: f64 = 0.002;
    pub const SLIDING_FRICTION: f64 = 0.5;
    pub const RESTITUTION: f64 = 0.1;
    pub const JOINT_DAMPING: f64 = 0.04;
    pub const LINEAR_DAMPING: f64 = 0.04;
    pub const ANGULAR_DAMPING: f64 = 0.04;
}

/// Per-contact-body coefficient triple.
#[derive(Clone, Copy, Debug)]
pub struct ContactSet<R> {
    pub gripper: R,
    pub floor: R,
    pub object: R,
}

impl<R: Real> ContactSet<R> {
    pub fn uniform(v: f64) -> Self {
        Self {
            gripper: real(v),
            floor: real(v),
            object: real(v),
        }
    }
}

/// Fully resolved engine inputs: registry values where declared, generic
/// defaults (and scene nominals for masses) elsewhere.
#[derive(Clone, Debug)]
pub struct EngineParams<R> {
    pub time_step: R,
    pub max_torque: [R; 6],
    pub max_velocity_deg: [R; 6],
    pub link_masses: [R; 6],
    pub gripper_mass: R,
    pub object_mass: R,
    pub joint_damping: [R; 6],
    pub lateral_friction: ContactSet<R>,
    pub rolling_friction: ContactSet<R>,
    pub sliding_friction: ContactSet<R>,
    pub restitution: ContactSet<R>,
    pub linear_damping: ContactSet<R>,
    pub angular_damping: ContactSet<R>,
}

impl<R: Real> EngineParams<R> {
    /// All-generic parameters for a scene (nominal masses, default
    /// coefficients, the given timestep).
    pub fn generic_for(scene: &SceneSpec<R>, time_step: f64) -> Self {
        Self {
            time_step: real(time_step),
            max_torque: [real(generic::MAX_JOINT_TORQUE); 6],
            max_velocity_deg: [real(generic::MAX_JOINT_VELOCITY_DEG); 6],
            link_masses: scene.link_masses,
            gripper_mass: scene.gripper_mass,
            object_mass: scene
                .object
                .as_ref()
                .map(|o| o.nominal_mass)
                .unwrap_or_else(R::one),
            joint_damping: [real(generic::JOINT_DAMPING); 6],
            lateral_friction: ContactSet::uniform(generic::LATERAL_FRICTION),
            rolling_friction: ContactSet::uniform(generic::ROLLING_FRICTION),
            sliding_friction: ContactSet::uniform(generic::SLIDING_FRICTION),
            restitution: ContactSet::uniform(generic::RESTITUTION),
            linear_damping: ContactSet::uniform(generic::LINEAR_DAMPING),
            angular_damping: ContactSet::uniform(generic::ANGULAR_DAMPING),
        }
    }

    /// Resolves a flat vector against the registry; `generic_time_step` is
    /// the engine's default used when `time_step` is not declared.
    pub fn resolve(
        registry: &ParameterRegistry<R>,
        params: &ParameterVector<R>,
        scene: &SceneSpec<R>,
        generic_time_step: f64,
    ) -> Result<Self> {
        if params.len() != registry.dimension() {
            return Err(Error::DimensionMismatch {
                expected: registry.dimension(),
                got: params.len(),
            });
        }
        let base = Self::generic_for(scene, generic_time_step);
        let get =
            |name: &str, default: R| -> R { registry.value_of(params, name).unwrap_or(default) };
        let per_joint = |prefix: &str, defaults: &[R; 6]| -> [R; 6] {
            std::array::from_fn(|j| get(&format!("{prefix}_j{}", j + 1), defaults[j]))
        };
        let per_body = |prefix: &str, d: &ContactSet<R>| -> ContactSet<R> {
            ContactSet {
                gripper: get(&format!("{prefix}_gripper"), d.gripper),
                floor: get(&format!("{prefix}_floor"), d.floor),
                object: get(&format!("{prefix}_object"), d.object),
            }
        };

        // The object's mass descriptor is named after the physical object
        // (`mass_object_cube_wood`); plain `mass_object` is accepted too.
        let object_mass = scene
            .object
            .as_ref()
            .and_then(|o| registry.value_of(params, &format!("mass_{}", o.body_id())))
            .unwrap_or_else(|| get("mass_object", base.object_mass));

        Ok(Self {
            time_step: get("time_step", base.time_step),
            max_torque: per_joint("max_joint_torque", &base.max_torque),
            max_velocity_deg: per_joint("max_joint_velocity", &base.max_velocity_deg),
            link_masses: std::array::from_fn(|i| {
                get(&format!("mass_link{}", i + 1), base.link_masses[i])
            }),
            gripper_mass: get("mass_gripper", base.gripper_mass),
            object_mass,
            joint_damping: per_joint("joint_damping", &base.joint_damping),
            lateral_friction: per_body("lateral_friction", &base.lateral_friction),
            rolling_friction: per_body("rolling_friction", &base.rolling_friction),
            sliding_friction: per_body("sliding_friction", &base.sliding_friction),
            restitution: per_body("restitution", &base.restitution),
            linear_damping: per_body("linear_damping", &base.linear_damping),
            angular_damping: per_body("angular_damping", &base.angular_damping),
        })
    }
}

/// Joint rotation axes of the kinematic chain.
const AXES: [[f64; 3]; 6] = [
    [0.0, 0.0, 1.0], // base yaw
    [0.0, 1.0, 0.0], // shoulder pitch
    [0.0, 1.0, 0.0], // elbow pitch
    [0.0, 0.0, 1.0], // forearm yaw
    [0.0, 1.0, 0.0], // wrist pitch
    [1.0, 0.0, 0.0], // wrist roll (no positional effect)
];

/// Forward kinematics: link 1 rises along +Z from the base, links 2..6
/// extend along their local +X.
pub fn forward_kinematics<R: Real>(link_lengths: &[R; 6], q: &[R; 6]) -> Pose<R> {
    let mut orientation = UnitQuat::identity();
    let mut position = Vec3::zero();
    for j in 0..6 {
        let axis = Vec3::new(real(AXES[j][0]), real(AXES[j][1]), real(AXES[j][2]));
        orientation = orientation.mul(&UnitQuat::from_axis_angle(&axis, q[j]));
        let local = if j == 0 {
            Vec3::new(R::zero(), R::zero(), link_lengths[0])
        } else {
            Vec3::new(link_lengths[j], R::zero(), R::zero())
        };
        position = position.add(&orientation.rotate(&local));
    }
    Pose {
        position,
        orientation,
    }
}

/// Integration scheme distinguishing the two engines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scheme {
    /// Positions advance with the pre-update velocity (engine A).
    ExplicitEuler,
    /// Positions advance with the post-update velocity, contacts transfer a
    /// stiffer impulse (engine B).
    SemiImplicit,
}

impl Scheme {
    fn impulse_stiffness(&self) -> f64 {
        match self {
            Scheme::ExplicitEuler => 1.0,
            Scheme::SemiImplicit => 1.3,
        }
    }
}

/// Tracked object state: planar position on the floor plus xy velocity.
#[derive(Clone, Copy, Debug)]
pub struct ObjectBody<R> {
    pub position: Vec3<R>,
    pub velocity_xy: (R, R),
}

/// Full integration state of a reference engine.
#[derive(Clone, Debug)]
pub struct EngineState<R> {
    pub t: R,
    pub q: [R; 6],
    pub qd: [R; 6],
    pub object: Option<ObjectBody<R>>,
    /// Wrist position of the previous step, for finite-difference velocity.
    pub ee_prev: Vec3<R>,
}

impl<R: Real> EngineState<R> {
    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|v| v.is_finite())
            && self.qd.iter().all(|v| v.is_finite())
            && self.object.is_none_or(|o| {
                o.position.is_finite() && o.velocity_xy.0.is_finite() && o.velocity_xy.1.is_finite()
            })
    }

    pub fn diverged(&self) -> bool {
        let cap: R = real(1e3);
        self.q.iter().any(|v| v.abs() > cap) || self.object.is_some_and(|o| o.position.norm() > cap)
    }

    pub fn wrist_pose(&self, scene: &SceneSpec<R>) -> Pose<R> {
        forward_kinematics(&scene.link_lengths, &self.q)
    }
}

/// One of the two bundled deterministic engines.
pub struct ReferenceEngine {
    id: BackendId,
    scheme: Scheme,
    generic_time_step: f64,
}

pub fn reference_engine_a() -> ReferenceEngine {
    ReferenceEngine {
        id: BackendId::new("engine-a"),
        scheme: Scheme::ExplicitEuler,
        generic_time_step: generic::TIMESTEP_ENGINE_A,
    }
}

pub fn reference_engine_b() -> ReferenceEngine {
    ReferenceEngine {
        id: BackendId::new("engine-b"),
        scheme: Scheme::SemiImplicit,
        generic_time_step: generic::TIMESTEP_ENGINE_B,
    }
}

/// Combined pair coefficient for two contacting surfaces.
fn pair<R: Real>(a: R, b: R) -> R {
    (a.max(R::zero()) * b.max(R::zero())).sqrt()
}

/// Asymmetric pair coefficient for object-floor friction: the object's
/// surface dominates (exponent 0.8 vs 0.2 for the floor).
fn pair_object_dominant<R: Real>(object: R, floor: R) -> R {
    object.max(R::zero()).powf(real(0.8)) * floor.max(R::zero()).powf(real(0.2))
}

impl ReferenceEngine {
    pub fn generic_time_step(&self) -> f64 {
        self.generic_time_step
    }

    /// Arm at home (all joints zero), object at its initial pose, t = 0.
    pub fn initial_state<R: Real>(&self, scene: &SceneSpec<R>) -> EngineState<R> {
        let q = [R::zero(); 6];
        EngineState {
            t: R::zero(),
            q,
            qd: [R::zero(); 6],
            object: scene.object.as_ref().map(|o| ObjectBody {
                position: o.initial_pose.position,
                velocity_xy: (R::zero(), R::zero()),
            }),
            ee_prev: forward_kinematics(&scene.link_lengths, &q).position,
        }
    }

    fn effective_inertia<R: Real>(scene: &SceneSpec<R>, p: &EngineParams<R>) -> [R; 6] {
        // Surrogate: mass distal of the joint times the squared distal reach.
        std::array::from_fn(|j| {
            let mut mass = p.gripper_mass;
            let mut reach = R::zero();
            for k in j..6 {
                mass += p.link_masses[k];
                reach += scene.link_lengths[k];
            }
            (mass * reach * reach).max(real(1e-6))
        })
    }

    /// Advances the state by one `params.time_step`.
    pub fn step<R: Real>(
        &self,
        scene: &SceneSpec<R>,
        p: &EngineParams<R>,
        state: &mut EngineState<R>,
    ) -> Result<()> {
        let dt = p.time_step;
        if !(dt > R::zero()) || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let gain: R = real(CONTROLLER_GAIN);
        let deg: R = real(std::f64::consts::PI / 180.0);
        let inertia = Self::effective_inertia(scene, p);

        // --- arm ---
        let targets = script_targets(scene, state.t);
        for j in 0..6 {
            // Gripper damping bleeds into the joint response.
            let decay = p.joint_damping[j]
                + real::<R>(0.1) * (p.linear_damping.gripper + p.angular_damping.gripper);
            let v_max = p.max_velocity_deg[j] * deg;
            let a_max = p.max_torque[j] / inertia[j];
            let qd_old = state.qd[j];
            let v_des = (gain * (targets[j] - state.q[j])).max(-v_max).min(v_max);
            let dv = (v_des - qd_old).max(-a_max * dt).min(a_max * dt);
            let qd_new = (qd_old + dv) * (R::one() - decay * dt).max(R::zero());
            let v_for_position = match self.scheme {
                Scheme::ExplicitEuler => qd_old,
                Scheme::SemiImplicit => qd_new,
            };
            state.q[j] += v_for_position * dt;
            state.qd[j] = qd_new;
        }
        let ee_now = forward_kinematics(&scene.link_lengths, &state.q).position;

        // --- object ---
        if let (Some(obj), Some(scene_obj)) = (state.object.as_mut(), scene.object.as_ref()) {
            let g: R = real(GRAVITY);
            let rolls = scene_obj.shape.rolls();
            let contact_dist: R = real(GRIPPER_RADIUS + scene_obj.shape.contact_radius());

            let decel = if rolls {
                g * (pair_object_dominant(p.rolling_friction.object, p.rolling_friction.floor)
                    + real::<R>(0.05)
                        * pair_object_dominant(p.lateral_friction.object, p.lateral_friction.floor))
            } else {
                g * (pair_object_dominant(p.lateral_friction.object, p.lateral_friction.floor)
                    + real::<R>(0.25) * pair(p.sliding_friction.object, p.sliding_friction.floor))
            };
            let decay = if rolls {
                (p.linear_damping.object + real::<R>(0.1) * p.linear_damping.floor)
                    + real::<R>(0.5)
                        * (p.angular_damping.object + real::<R>(0.1) * p.angular_damping.floor)
            } else {
                p.linear_damping.object + real::<R>(0.1) * p.linear_damping.floor
            };

            let restitution_pair = pair(p.restitution.gripper, p.restitution.object);
            let mu_contact = pair(p.lateral_friction.gripper, p.lateral_friction.object)
                * (real::<R>(0.75) + real::<R>(0.5) * p.sliding_friction.gripper);
            let tangential_frac = mu_contact / (R::one() + mu_contact);
            let roll_transfer =
                (R::one() - real::<R>(0.2) * p.rolling_friction.gripper).max(R::zero());
            let mass_ratio = p.gripper_mass / (p.gripper_mass + p.object_mass);
            let stiffness: R = real(self.scheme.impulse_stiffness());

            let ee_vel = ee_now.sub(&state.ee_prev).scale(R::one() / dt);
            step_object(
                obj,
                &ee_now,
                &ee_vel,
                contact_dist,
                decel,
                decay,
                restitution_pair,
                tangential_frac,
                roll_transfer,
                mass_ratio,
                stiffness,
                rolls,
                dt,
            );
        }

        state.ee_prev = ee_now;
        state.t += dt;
        Ok(())
    }

    fn run<R: Real>(&self, scene: &SceneSpec<R>, p: &EngineParams<R>) -> Result<SimResult<R>> {
        scene.validate()?;
        let rate: R = real(GRID_RATE_HZ);
        let n_samples = grid_points(scene.duration, rate);
        let mut samples: Vec<Sample<R>> = Vec::with_capacity(n_samples);
        let mut status = SimStatus::Ok;
        let mut state = self.initial_state(scene);

        'grid: for k in 0..n_samples {
            let grid_t = R::from_usize(k).expect("grid index") / rate;
            while state.t + real(1e-12) < grid_t {
                self.step(scene, p, &mut state)?;
                if !state.is_finite() {
                    status = SimStatus::NonFinite;
                    samples.push(sample_at(grid_t, scene, &state));
                    break 'grid;
                }
                if state.diverged() {
                    status = SimStatus::Diverged;
                    samples.push(sample_at(grid_t, scene, &state));
                    break 'grid;
                }
            }
            samples.push(sample_at(grid_t, scene, &state));
        }

        let wrist = TimedTrajectory::new("wrist", samples)?;
        let object_final = state.object.map(|o| o.position);
        Ok(SimResult {
            wrist,
            object_final,
            status,
        })
    }
}

fn script_targets<R: Real>(scene: &SceneSpec<R>, t: R) -> [R; 6] {
    let mut targets = [R::zero(); 6];
    for step in &scene.command_script {
        if step.time <= t {
            targets = step.targets;
        } else {
            break;
        }
    }
    targets
}

fn sample_at<R: Real>(grid_t: R, scene: &SceneSpec<R>, state: &EngineState<R>) -> Sample<R> {
    Sample {
        time: grid_t,
        pose: state.wrist_pose(scene),
    }
}

#[allow(clippy::too_many_arguments)]
fn step_object<R: Real>(
    obj: &mut ObjectBody<R>,
    ee_now: &Vec3<R>,
    ee_vel: &Vec3<R>,
    contact_dist: R,
    decel: R,
    decay: R,
    restitution_pair: R,
    tangential_frac: R,
    roll_transfer: R,
    mass_ratio: R,
    stiffness: R,
    rolls: bool,
    dt: R,
) {
    // Contact: impulse transfer and de-penetration.
    let offset = obj.position.sub(ee_now);
    let dist = offset.norm();
    if dist < contact_dist && dist > real(1e-9) {
        let normal = offset.scale(R::one() / dist);
        let rel = Vec3::new(
            ee_vel.x - obj.velocity_xy.0,
            ee_vel.y - obj.velocity_xy.1,
            ee_vel.z,
        );
        let closing = rel.dot(&normal);
        if closing > R::zero() {
            let mut dv_n = (R::one() + restitution_pair) * mass_ratio * closing * stiffness;
            if rolls {
                dv_n *= roll_transfer;
            }
            let tangent = Vec3::new(
                rel.x - closing * normal.x,
                rel.y - closing * normal.y,
                R::zero(),
            );
            obj.velocity_xy.0 += dv_n * normal.x + mass_ratio * tangential_frac * tangent.x;
            obj.velocity_xy.1 += dv_n * normal.y + mass_ratio * tangential_frac * tangent.y;
        }
        // Push the object out of the overlap horizontally.
        let horiz = Vec3::new(normal.x, normal.y, R::zero());
        let hn = horiz.norm();
        if hn > real(1e-9) {
            let shift = (contact_dist - dist) / hn;
            obj.position.x += horiz.x * shift;
            obj.position.y += horiz.y * shift;
        }
    }

    // Free planar motion under Coulomb deceleration (exact per-step), then
    // multiplicative damping.
    let (vx, vy) = obj.velocity_xy;
    let speed = (vx * vx + vy * vy).sqrt();
    if speed > R::zero() {
        let (dir_x, dir_y) = (vx / speed, vy / speed);
        let advance;
        let new_speed;
        if speed <= decel * dt {
            advance = speed * speed / (real::<R>(2.0) * decel.max(real(1e-12)));
            new_speed = R::zero();
        } else {
            advance = speed * dt - decel * dt * dt / real(2.0);
            new_speed = speed - decel * dt;
        }
        obj.position.x += dir_x * advance;
        obj.position.y += dir_y * advance;
        let damped = new_speed * (R::one() - decay * dt).max(R::zero());
        obj.velocity_xy = (dir_x * damped, dir_y * damped);
    }
}

impl<R: Real> SimulatorBackend<R> for ReferenceEngine {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn simulate(
        &self,
        scene: &SceneSpec<R>,
        registry: &ParameterRegistry<R>,
        params: &ParameterVector<R>,
    ) -> Result<SimResult<R>> {
        let resolved = EngineParams::resolve(registry, params, scene, self.generic_time_step)?;
        self.run(scene, &resolved)
    }

    fn generic_defaults(
        &self,
        registry: &ParameterRegistry<R>,
        scene: &SceneSpec<R>,
    ) -> ParameterVector<R> {
        generic_vector(registry, scene, self.generic_time_step)
    }
}

/// The generic value for every canonical descriptor name.
pub(super) fn generic_vector<R: Real>(
    registry: &ParameterRegistry<R>,
    scene: &SceneSpec<R>,
    time_step: f64,
) -> ParameterVector<R> {
    let values = registry
        .descriptors()
        .iter()
        .map(|d| {
            let name = d.name.as_str();
            let v: R = if name == "time_step" {
                real(time_step)
            } else if name.starts_with("max_joint_torque") {
                real(generic::MAX_JOINT_TORQUE)
            } else if name.starts_with("max_joint_velocity") {
                real(generic::MAX_JOINT_VELOCITY_DEG)
            } else if let Some(body) = name.strip_prefix("mass_") {
                // Bodies outside this scene fall back to the bounds midpoint,
                // which recovers the nominal mass of a 0.7M..1.3M range.
                nominal_mass(scene, body).unwrap_or((d.lower + d.upper) / real(2.0))
            } else if name.starts_with("lateral_friction") {
                real(generic::LATERAL_FRICTION)
            } else if name.starts_with("joint_damping") {
                real(generic::JOINT_DAMPING)
            } else if name.starts_with("rolling_friction") {
                real(generic::ROLLING_FRICTION)
            } else if name.starts_with("sliding_friction") {
                real(generic::SLIDING_FRICTION)
            } else if name.starts_with("restitution") {
                real(generic::RESTITUTION)
            } else if name.starts_with("linear_damping") {
                real(generic::LINEAR_DAMPING)
            } else if name.starts_with("angular_damping") {
                real(generic::ANGULAR_DAMPING)
            } else {
                // Unknown custom descriptor: midpoint of its bounds.
                (d.lower + d.upper) / real(2.0)
            };
            // Keep the generic value usable as a population member.
            v.max(d.lower).min(d.upper)
        })
        .collect();
    ParameterVector::new(values)
}

fn nominal_mass<R: Real>(scene: &SceneSpec<R>, body: &str) -> Option<R> {
    if body == "gripper" {
        Some(scene.gripper_mass)
    } else if body == "object" {
        scene.object.as_ref().map(|o| o.nominal_mass)
    } else if body.starts_with("object_") {
        scene
            .object
            .as_ref()
            .filter(|o| o.body_id() == format!("object_{}", &body["object_".len()..]))
            .map(|o| o.nominal_mass)
    } else if let Some(idx) = body
        .strip_prefix("link")
        .and_then(|s| s.parse::<usize>().ok())
    {
        (1..=6).contains(&idx).then(|| scene.link_masses[idx - 1])
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_shared_registry;
    use crate::simkit::scenes::standard_task;
    use crate::simkit::Material;
    use crate::simkit::ObjectShape;
    use crate::simkit::ObjectSpec;

    fn push_scene() -> SceneSpec<f64> {
        standard_task(3).unwrap()
    }

    #[test]
    fn zero_length_script_keeps_home_pose() {
        let mut scene = push_scene();
        scene.command_script.clear();
        scene.object = None;
        let engine = reference_engine_a();
        let p = EngineParams::generic_for(&scene, 0.002);
        let result = engine.run(&scene, &p).unwrap();
        assert_eq!(result.status, SimStatus::Ok);
        let home = forward_kinematics(&scene.link_lengths, &[0.0; 6]).position;
        for s in result.wrist.samples() {
            assert!((s.pose.position.sub(&home)).norm() < 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let scene = push_scene();
        let registry = default_shared_registry(&scene.body_inventory(), 6).unwrap();
        let mut rng = crate::rng::derive_rng(&[42]);
        let params = registry.sample_uniform(&mut rng);
        let engine = reference_engine_a();
        let a = engine.simulate(&scene, &registry, &params).unwrap();
        let b = engine.simulate(&scene, &registry, &params).unwrap();
        assert_eq!(a, b);
        let bytes_a = serde_json::to_string(&a).unwrap();
        let bytes_b = serde_json::to_string(&b).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn full_stack_runs_in_f32() {
        // Scene, registry, simulation and fitness all instantiate at f32 and
        // agree with the f64 path to single precision.
        let scene32: SceneSpec<f32> = standard_task(3).unwrap();
        let registry32 = default_shared_registry(&scene32.body_inventory(), 6).unwrap();
        let engine = reference_engine_a();
        let generic32 = engine.generic_defaults(&registry32, &scene32);
        let r32 = engine.simulate(&scene32, &registry32, &generic32).unwrap();
        assert_eq!(r32.status, SimStatus::Ok);
        assert_eq!(
            crate::fitness::kinematic_fitness(&r32.wrist, &r32.wrist)
                .unwrap()
                .value,
            0.0f32
        );

        let scene64: SceneSpec<f64> = standard_task(3).unwrap();
        let registry64 = default_shared_registry(&scene64.body_inventory(), 6).unwrap();
        let generic64 = engine.generic_defaults(&registry64, &scene64);
        let r64 = engine.simulate(&scene64, &registry64, &generic64).unwrap();
        let f32_final = r32.object_final.unwrap();
        let f64_final = r64.object_final.unwrap();
        assert!((f32_final.x as f64 - f64_final.x).abs() < 1e-2);
        assert!((f32_final.y as f64 - f64_final.y).abs() < 1e-2);
    }

    #[test]
    fn coarse_timestep_increases_tracking_error() {
        // Self-comparison: with a fast script, dt at the upper bound tracks
        // the 0.001-dt trajectory of the same script poorly.
        let scene: SceneSpec<f64> = standard_task(1).unwrap();
        let engine = reference_engine_a();
        let fine = engine
            .run(&scene, &EngineParams::generic_for(&scene, 0.001))
            .unwrap();
        let coarse = engine
            .run(&scene, &EngineParams::generic_for(&scene, 0.05))
            .unwrap();
        let err = crate::fitness::kinematic_fitness(&coarse.wrist, &fine.wrist)
            .unwrap()
            .value;
        assert!(err > 1e-3, "coarse-vs-fine error {err} unexpectedly small");

        let mid = engine
            .run(&scene, &EngineParams::generic_for(&scene, 0.004))
            .unwrap();
        let err_mid = crate::fitness::kinematic_fitness(&mid.wrist, &fine.wrist)
            .unwrap()
            .value;
        assert!(err_mid < err, "integration error should grow with step");
    }

    #[test]
    fn object_at_rest_stays_put_without_contact() {
        let mut scene = push_scene();
        scene.command_script.clear(); // arm holds home, far from the object
        let engine = reference_engine_a();
        let p = EngineParams::generic_for(&scene, 0.002);
        let result = engine.run(&scene, &p).unwrap();
        let initial = scene.object.as_ref().unwrap().initial_pose.position;
        let final_pos = result.object_final.unwrap();
        assert_eq!(final_pos, initial);
    }

    #[test]
    fn coulomb_slide_distance_matches_closed_form() {
        // Object with initial speed v on the floor, friction mu on both
        // surfaces, damping off: travel = v^2 / (2 mu g).
        for mu in [0.1, 0.5, 1.0] {
            let scene = SceneSpec::<f64> {
                object: Some(ObjectSpec {
                    shape: ObjectShape::Cube,
                    material: Material::Wood,
                    nominal_mass: 0.12,
                    initial_pose: crate::pose::Pose::from_position(Vec3::new(5.0, 0.0, 0.025)),
                }),
                command_script: Vec::new(),
                ..standard_task(3).unwrap()
            };
            let mut p = EngineParams::generic_for(&scene, 0.001);
            p.lateral_friction = ContactSet {
                gripper: 0.5,
                floor: mu,
                object: mu,
            };
            p.sliding_friction = ContactSet::uniform(0.0);
            p.linear_damping = ContactSet::uniform(0.0);
            p.angular_damping = ContactSet::uniform(0.0);

            let engine = reference_engine_a();
            let mut state = engine.initial_state(&scene);
            let v0 = 1.0;
            state.object.as_mut().unwrap().velocity_xy = (v0, 0.0);
            let start = state.object.unwrap().position;
            for _ in 0..20_000 {
                engine.step(&scene, &p, &mut state).unwrap();
                if state.object.unwrap().velocity_xy.0 == 0.0 {
                    break;
                }
            }
            let travelled = state.object.unwrap().position.sub(&start).norm();
            let expected = v0 * v0 / (2.0 * mu * GRAVITY);
            let rel = (travelled - expected).abs() / expected;
            assert!(
                rel < 0.02,
                "mu={mu}: travelled {travelled}, expected {expected}, rel err {rel}"
            );
        }
    }

    #[test]
    fn higher_velocity_cap_is_no_slower_to_waypoints() {
        // With the controller saturated, doubling the per-joint velocity cap
        // must not delay reaching any waypoint.
        let scene: SceneSpec<f64> = standard_task(2).unwrap();
        let engine = reference_engine_a();
        let mut slow = EngineParams::generic_for(&scene, 0.002);
        slow.max_velocity_deg = [12.0; 6];
        let mut fast = slow.clone();
        fast.max_velocity_deg = [24.0; 6];

        let arrival = |p: &EngineParams<f64>| -> Vec<usize> {
            let result = engine.run(&scene, p).unwrap();
            scene
                .command_script
                .iter()
                .map(|stepdef| {
                    let target = forward_kinematics(&scene.link_lengths, &stepdef.targets).position;
                    result
                        .wrist
                        .samples()
                        .iter()
                        .position(|s| {
                            s.time >= stepdef.time && s.pose.position.sub(&target).norm() < 0.02
                        })
                        .unwrap_or(usize::MAX)
                })
                .collect()
        };
        for (f, s) in arrival(&fast).iter().zip(arrival(&slow)) {
            assert!(*f <= s, "faster cap arrived later: {f} vs {s}");
        }
    }

    #[test]
    fn mass_bounds_never_degenerate() {
        // Table bounds 0.7M..1.3M with M > 0 keep every mass positive.
        let scene = push_scene();
        let registry = default_shared_registry(&scene.body_inventory(), 6).unwrap();
        let mut rng = crate::rng::derive_rng(&[77]);
        for _ in 0..200 {
            let v = registry.sample_uniform(&mut rng);
            let p = EngineParams::resolve(&registry, &v, &scene, 0.002).unwrap();
            assert!(p.link_masses.iter().all(|m| *m > 0.0));
            assert!(p.gripper_mass > 0.0 && p.object_mass > 0.0);
        }
    }

    #[test]
    fn in_bounds_params_never_crash() {
        // Random in-bounds vectors over all dataset scenes: status is ok or a
        // mapped failure, never a panic or error.
        let engines = [reference_engine_a(), reference_engine_b()];
        let mut rng = crate::rng::derive_rng(&[101]);
        for task in 1..=10u8 {
            let scene: SceneSpec<f64> = standard_task(task).unwrap();
            let registry = default_shared_registry(&scene.body_inventory(), 6).unwrap();
            for engine in &engines {
                for _ in 0..20 {
                    let v = registry.sample_uniform(&mut rng);
                    let result = engine.simulate(&scene, &registry, &v).unwrap();
                    assert!(matches!(
                        result.status,
                        SimStatus::Ok | SimStatus::Diverged | SimStatus::NonFinite
                    ));
                    assert_eq!(result.object_final.is_some(), scene.object.is_some());
                }
            }
        }
    }

    #[test]
    fn engines_differ_on_object_outcomes() {
        // The stiffer engine-b impulse sends a rolling cylinder visibly
        // farther under identical parameters.
        let scene: SceneSpec<f64> = standard_task(5).unwrap();
        let registry = default_shared_registry(&scene.body_inventory(), 6).unwrap();
        let a = reference_engine_a();
        let b = reference_engine_b();
        // Same parameters for both engines (engine-a's generic vector).
        let params = a.generic_defaults(&registry, &scene);
        let ra = a.simulate(&scene, &registry, &params).unwrap();
        let rb = b.simulate(&scene, &registry, &params).unwrap();
        let fa = ra.object_final.unwrap();
        let fb = rb.object_final.unwrap();
        assert!(fa.sub(&fb).norm() > 1e-3, "engines unexpectedly agree");
    }

    #[test]
    fn rejects_non_positive_timestep() {
        let scene = push_scene();
        let engine = reference_engine_a();
        let mut p = EngineParams::generic_for(&scene, 0.002);
        p.time_step = 0.0;
        let mut state = engine.initial_state(&scene);
        assert!(engine.step(&scene, &p, &mut state).is_err());
    }

    #[test]
    fn influential_parameters_dominate_joint_damping() {
        // Perturbing timestep, object lateral friction, or max joint
        // velocity by 20% moves the fitness against a fixed reference more
        // than perturbing joint damping by 20%, on the push task.
        let scene = push_scene();
        let engine = reference_engine_a();
        let base = EngineParams::generic_for(&scene, 0.0041);
        let reference = engine.run(&scene, &base).unwrap();

        let fitness_of = |p: &EngineParams<f64>| -> f64 {
            let r = engine.run(&scene, p).unwrap();
            let kin = crate::fitness::kinematic_fitness(&r.wrist, &reference.wrist)
                .unwrap()
                .value;
            kin + r
                .object_final
                .unwrap()
                .sub(&reference.object_final.unwrap())
                .norm()
        };

        let scale = 1.2;
        let mut ts = base.clone();
        ts.time_step *= scale;
        let mut fric = base.clone();
        fric.lateral_friction.object *= scale;
        let mut vel = base.clone();
        for v in vel.max_velocity_deg.iter_mut() {
            *v *= scale;
        }
        let mut damp = base.clone();
        for d in damp.joint_damping.iter_mut() {
            *d *= scale;
        }

        let damping_effect = fitness_of(&damp);
        for (name, p) in [
            ("time_step", ts),
            ("lateral_friction", fric),
            ("velocity", vel),
        ] {
            let effect = fitness_of(&p);
            assert!(
                effect > damping_effect,
                "{name} effect {effect} not above joint damping {damping_effect}"
            );
        }
    }
}
