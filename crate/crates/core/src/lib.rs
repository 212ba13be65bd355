//! Simulator calibration toolkit: tunes bounded physics-engine parameters
//! with differential evolution so simulated arm trajectories and object
//! interactions match recorded reference motion, and reports which
//! parameters matter.
//!
//! The numeric core is generic over the scalar type ([`scalar::Real`],
//! implemented for `f32` and `f64`); the aliases below pin the shipped
//! `f64` precision used by all file formats and the CLI.

// Validations use the negated form `!(a < b)` so that NaN inputs fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dataset;
pub mod de;
pub mod error;
pub mod fitness;
pub mod params;
pub mod pose;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod simkit;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Real;

/// Shipped scalar type: all file formats and the CLI use 64-bit floats.
pub type Scalar = f64;

pub type Vec3 = pose::Vec3<Scalar>;
pub type UnitQuat = pose::UnitQuat<Scalar>;
pub type Pose = pose::Pose<Scalar>;
pub type Sample = trajectory::Sample<Scalar>;
pub type TimedTrajectory = trajectory::TimedTrajectory<Scalar>;
pub type FitnessValue = fitness::FitnessValue<Scalar>;
pub type ParameterDescriptor = params::ParameterDescriptor<Scalar>;
pub type ParameterRegistry = params::ParameterRegistry<Scalar>;
pub type ParameterVector = params::ParameterVector<Scalar>;
pub type BodyInventory = params::BodyInventory<Scalar>;
pub type DeConfig = de::DeConfig<Scalar>;
pub type Population = de::Population<Scalar>;
pub type GenerationRecord = de::GenerationRecord<Scalar>;
pub type DeOutcome = de::DeOutcome<Scalar>;
pub type SceneSpec = simkit::SceneSpec<Scalar>;
pub type ObjectSpec = simkit::ObjectSpec<Scalar>;
pub type ScriptStep = simkit::ScriptStep<Scalar>;
pub type SimResult = simkit::SimResult<Scalar>;
pub type EngineParams = simkit::EngineParams<Scalar>;
pub type BackendRegistry = simkit::BackendRegistry<Scalar>;
