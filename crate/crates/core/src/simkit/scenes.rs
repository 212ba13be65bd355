//! The ten bundled desk-scale tasks: two pure-kinematic arm motions and
//! eight non-prehensile pushes covering all four object shapes in both
//! materials. Placements are calibrated so the scripted sweep makes contact
//! under generic as well as tuned parameters.

use crate::error::{Error, Result};
use crate::fitness::TaskId;
use crate::pose::{Pose, Vec3};
use crate::scalar::{real, Real};

use super::{Material, ObjectShape, ObjectSpec, SceneSpec, ScriptStep};

pub const STANDARD_LINK_LENGTHS: [f64; 6] = [0.28, 0.28, 0.21, 0.21, 0.16, 0.10];
pub const STANDARD_LINK_MASSES: [f64; 6] = [1.4, 1.2, 1.0, 0.8, 0.6, 0.5];
pub const STANDARD_GRIPPER_MASS: f64 = 0.9;

/// Pitch that brings the wrist down to ~5 cm above the floor.
const PITCH_DOWN: f64 = 0.242;
/// Horizontal wrist radius at that pitch.
const PUSH_RADIUS: f64 = 0.932;

fn step<R: Real>(time: f64, targets: [f64; 6]) -> ScriptStep<R> {
    ScriptStep {
        time: real(time),
        targets: targets.map(real),
    }
}

fn arm_scene<R: Real>(script: Vec<ScriptStep<R>>, duration: f64) -> SceneSpec<R> {
    SceneSpec {
        link_lengths: STANDARD_LINK_LENGTHS.map(real),
        link_masses: STANDARD_LINK_MASSES.map(real),
        gripper_mass: real(STANDARD_GRIPPER_MASS),
        command_script: script,
        object: None,
        duration: real(duration),
    }
}

fn push_scene<R: Real>(
    shape: ObjectShape,
    material: Material,
    nominal_mass: f64,
    y_offset: f64,
) -> SceneSpec<R> {
    // The approach flourish exercises joints 2-5 so their velocity caps
    // leave a signature before the yaw sweep pushes the object.
    let script = vec![
        step(0.0, [-0.35, 0.15, 0.30, 0.35, -0.40, 0.0]),
        step(1.0, [-0.35, PITCH_DOWN, 0.0, 0.0, 0.0, 0.0]),
        step(1.8, [0.35, PITCH_DOWN, 0.0, 0.0, 0.0, 0.0]),
        step(3.5, [0.35, 0.1, 0.0, 0.0, 0.0, 0.0]),
    ];
    let z = shape.contact_radius();
    let object = ObjectSpec {
        shape,
        material,
        nominal_mass: real(nominal_mass),
        initial_pose: Pose::from_position(Vec3::new(real(PUSH_RADIUS), real(y_offset), real(z))),
    };
    SceneSpec {
        object: Some(object),
        ..arm_scene(script, 4.0)
    }
}

/// Builds the scene for one of the ten standard tasks.
///
/// Tasks 1-2 are kinematic; 3-10 push an object: cubes and cuboids slide,
/// cylinders and cones roll, each shape once in wood and once in plastic.
pub fn standard_task<R: Real>(task: TaskId) -> Result<SceneSpec<R>> {
    let scene = match task {
        1 => arm_scene(
            vec![
                step(0.0, [0.4, 0.15, -0.1, 0.0, 0.1, 0.0]),
                step(1.2, [-0.4, 0.3, 0.15, 0.2, -0.15, 0.3]),
                step(2.4, [0.2, 0.1, -0.2, -0.2, 0.2, -0.3]),
                step(3.2, [0.0; 6]),
            ],
            4.0,
        ),
        2 => arm_scene(
            vec![
                step(0.0, [-0.3, 0.35, 0.2, 0.0, 0.0, 0.0]),
                step(1.0, [-0.3, 0.05, -0.15, 0.3, 0.25, 0.0]),
                step(2.0, [0.35, 0.25, 0.1, -0.3, -0.2, 0.2]),
                step(3.0, [0.1, 0.4, 0.2, 0.1, 0.1, 0.0]),
            ],
            4.0,
        ),
        3 => push_scene(ObjectShape::Cube, Material::Wood, 0.12, 0.0),
        4 => push_scene(ObjectShape::Cuboid, Material::Wood, 0.18, 0.02),
        5 => push_scene(ObjectShape::Cylinder, Material::Wood, 0.10, -0.02),
        6 => push_scene(ObjectShape::Cone, Material::Wood, 0.07, 0.01),
        7 => push_scene(ObjectShape::Cylinder, Material::Plastic, 0.035, -0.01),
        8 => push_scene(ObjectShape::Cone, Material::Plastic, 0.025, 0.02),
        9 => push_scene(ObjectShape::Cuboid, Material::Plastic, 0.06, -0.02),
        10 => push_scene(ObjectShape::Cube, Material::Plastic, 0.04, 0.0),
        _ => {
            return Err(Error::InvalidScene(format!(
                "task {task} outside the dataset range 1..=10"
            )))
        }
    };
    Ok(scene)
}
