//! Tunable simulator parameters: descriptors, bounded registries and the
//! flat vectors the optimizer works on.

use std::collections::BTreeMap;

use rand::distributions::Uniform;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Whether a parameter is exposed by every engine or engine-specific.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParameterGroup {
    Shared,
    Individual,
}

impl std::fmt::Display for ParameterGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParameterGroup::Shared => write!(f, "shared"),
            ParameterGroup::Individual => write!(f, "individual"),
        }
    }
}

/// What a parameter applies to inside the simulator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterTarget {
    EngineGlobal,
    /// Joint index, 1-based.
    Joint(usize),
    /// Body identifier, e.g. `link3`, `gripper`, `object`, `floor`.
    Body(String),
}

/// One named, bounded, unit-tagged tunable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDescriptor<R> {
    pub name: String,
    pub group: ParameterGroup,
    pub lower: R,
    pub upper: R,
    pub unit: String,
    pub target: ParameterTarget,
}

impl<R: Real> ParameterDescriptor<R> {
    pub fn new(
        name: impl Into<String>,
        group: ParameterGroup,
        lower: R,
        upper: R,
        unit: impl Into<String>,
        target: ParameterTarget,
    ) -> Result<Self> {
        let name = name.into();
        if !(lower < upper) {
            return Err(Error::InvalidDescriptor {
                name,
                message: format!("lower {lower} must be < upper {upper}"),
            });
        }
        Ok(Self {
            name,
            group,
            lower,
            upper,
            unit: unit.into(),
            target,
        })
    }

    pub fn width(&self) -> R {
        self.upper - self.lower
    }

    pub fn contains(&self, value: R) -> bool {
        value >= self.lower && value <= self.upper
    }
}

/// Ordered set of descriptors defining the optimization space.
///
/// Shared descriptors precede Individual ones so the Shared sub-registry is
/// always a stable prefix of the full vector layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "Vec<ParameterDescriptor<R>>",
    into = "Vec<ParameterDescriptor<R>>"
)]
#[serde(bound(serialize = "R: Real", deserialize = "R: Real"))]
pub struct ParameterRegistry<R: Real> {
    descriptors: Vec<ParameterDescriptor<R>>,
}

impl<R: Real> TryFrom<Vec<ParameterDescriptor<R>>> for ParameterRegistry<R> {
    type Error = Error;
    fn try_from(descriptors: Vec<ParameterDescriptor<R>>) -> Result<Self> {
        Self::new(descriptors)
    }
}

impl<R: Real> From<ParameterRegistry<R>> for Vec<ParameterDescriptor<R>> {
    fn from(r: ParameterRegistry<R>) -> Self {
        r.descriptors
    }
}

impl<R: Real> ParameterRegistry<R> {
    pub fn new(descriptors: Vec<ParameterDescriptor<R>>) -> Result<Self> {
        let mut names = std::collections::HashSet::new();
        for d in &descriptors {
            if !names.insert(d.name.clone()) {
                return Err(Error::InvalidRegistry(format!(
                    "duplicate descriptor name `{}`",
                    d.name
                )));
            }
        }
        let first_individual = descriptors
            .iter()
            .position(|d| d.group == ParameterGroup::Individual);
        if let Some(i) = first_individual {
            if descriptors[i..]
                .iter()
                .any(|d| d.group == ParameterGroup::Shared)
            {
                return Err(Error::InvalidRegistry(
                    "shared descriptors must precede individual descriptors".into(),
                ));
            }
        }
        Ok(Self { descriptors })
    }

    /// Problem dimension D.
    pub fn dimension(&self) -> usize {
        self.descriptors.len()
    }

    pub fn descriptors(&self) -> &[ParameterDescriptor<R>] {
        &self.descriptors
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.name == name)
    }

    pub fn descriptor(&self, name: &str) -> Option<&ParameterDescriptor<R>> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    /// Value of the named parameter within `vector`, if declared.
    pub fn value_of(&self, vector: &ParameterVector<R>, name: &str) -> Option<R> {
        self.position_of(name).map(|i| vector.values()[i])
    }

    /// The Shared-prefix sub-registry (or a clone for `Individual`).
    pub fn subset(&self, group: ParameterGroup) -> Self {
        match group {
            ParameterGroup::Individual => self.clone(),
            ParameterGroup::Shared => Self {
                descriptors: self
                    .descriptors
                    .iter()
                    .filter(|d| d.group == ParameterGroup::Shared)
                    .cloned()
                    .collect(),
            },
        }
    }

    /// Checks alignment and bounds of a vector against this registry.
    pub fn validate(&self, vector: &ParameterVector<R>) -> Result<()> {
        if vector.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: vector.len(),
            });
        }
        for (d, &v) in self.descriptors.iter().zip(vector.values()) {
            if !v.is_finite() || !d.contains(v) {
                return Err(Error::InvalidRegistry(format!(
                    "value {v} for `{}` outside [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
        }
        Ok(())
    }

    /// Named view of a vector; inverse of [`ParameterRegistry::encode`].
    pub fn decode(&self, vector: &ParameterVector<R>) -> Result<BTreeMap<String, R>> {
        if vector.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: vector.len(),
            });
        }
        Ok(self
            .descriptors
            .iter()
            .zip(vector.values())
            .map(|(d, &v)| (d.name.clone(), v))
            .collect())
    }

    /// Builds a vector from a complete named assignment.
    pub fn encode(&self, assignment: &BTreeMap<String, R>) -> Result<ParameterVector<R>> {
        if assignment.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: assignment.len(),
            });
        }
        let mut values = Vec::with_capacity(self.dimension());
        for d in &self.descriptors {
            let v = assignment.get(&d.name).ok_or_else(|| {
                Error::InvalidRegistry(format!("assignment missing `{}`", d.name))
            })?;
            values.push(*v);
        }
        Ok(ParameterVector::new(values))
    }

    /// Uniform random vector within bounds.
    pub fn sample_uniform(&self, rng: &mut impl Rng) -> ParameterVector<R> {
        let values = self
            .descriptors
            .iter()
            .map(|d| rng.sample(Uniform::new_inclusive(d.lower, d.upper)))
            .collect();
        ParameterVector::new(values)
    }

    /// Replaces every out-of-bound component with a fresh uniform draw within
    /// its bounds; in-bound components pass through untouched.
    ///
    /// Resampling rather than clipping keeps population diversity at bound
    /// faces.
    pub fn clamp_or_resample(
        &self,
        vector: &ParameterVector<R>,
        rng: &mut impl Rng,
    ) -> ParameterVector<R> {
        let values = self
            .descriptors
            .iter()
            .zip(vector.values())
            .map(|(d, &v)| {
                if v.is_finite() && d.contains(v) {
                    v
                } else {
                    rng.sample(Uniform::new_inclusive(d.lower, d.upper))
                }
            })
            .collect();
        ParameterVector::new(values)
    }
}

/// Concrete assignment aligned to a registry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector<R> {
    values: Vec<R>,
}

impl<R: Real> ParameterVector<R> {
    pub fn new(values: Vec<R>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scene bodies a registry is built for.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BodyInventory<R> {
    /// Bodies with a tunable mass: `(body id, nominal mass in kg)`.
    pub massive: Vec<(String, R)>,
    /// Bodies that take part in contacts and carry friction-style parameters.
    pub contact: Vec<String>,
}

impl<R: Real> BodyInventory<R> {
    /// The standard scene: six links, gripper, one object, floor.
    pub fn standard(link_masses: &[R; 6], gripper_mass: R, object_mass: Option<R>) -> Self {
        let mut massive: Vec<(String, R)> = link_masses
            .iter()
            .enumerate()
            .map(|(i, &m)| (format!("link{}", i + 1), m))
            .collect();
        massive.push(("gripper".into(), gripper_mass));
        if let Some(m) = object_mass {
            massive.push(("object".into(), m));
        }
        let mut contact = vec!["gripper".to_string(), "floor".to_string()];
        if object_mass.is_some() {
            contact.push("object".into());
        }
        Self { massive, contact }
    }
}

const MASS_SPREAD: f64 = 0.3; // bounds are [0.7*M, 1.3*M] around nominal M

fn push_per_joint<R: Real>(
    out: &mut Vec<ParameterDescriptor<R>>,
    prefix: &str,
    group: ParameterGroup,
    joints: usize,
    lower: f64,
    upper: f64,
    unit: &str,
) -> Result<()> {
    for j in 1..=joints {
        out.push(ParameterDescriptor::new(
            format!("{prefix}_j{j}"),
            group,
            real(lower),
            real(upper),
            unit,
            ParameterTarget::Joint(j),
        )?);
    }
    Ok(())
}

fn push_per_body<R: Real>(
    out: &mut Vec<ParameterDescriptor<R>>,
    prefix: &str,
    group: ParameterGroup,
    bodies: &[String],
    lower: f64,
    upper: f64,
    unit: &str,
) -> Result<()> {
    for b in bodies {
        out.push(ParameterDescriptor::new(
            format!("{prefix}_{b}"),
            group,
            real(lower),
            real(upper),
            unit,
            ParameterTarget::Body(b.clone()),
        )?);
    }
    Ok(())
}

/// Parameters every engine exposes: timestep, per-joint torque and velocity
/// caps, per-body masses and lateral frictions.
///
/// For the standard single-object scene this yields 24 descriptors.
pub fn default_shared_registry<R: Real>(
    bodies: &BodyInventory<R>,
    joints: usize,
) -> Result<ParameterRegistry<R>> {
    if joints == 0 {
        return Err(Error::InvalidRegistry("at least one joint required".into()));
    }
    let mut d = Vec::new();
    d.push(ParameterDescriptor::new(
        "time_step",
        ParameterGroup::Shared,
        real(0.001),
        real(0.05),
        "s",
        ParameterTarget::EngineGlobal,
    )?);
    push_per_joint(
        &mut d,
        "max_joint_torque",
        ParameterGroup::Shared,
        joints,
        100.0,
        9000.0,
        "engine",
    )?;
    push_per_joint(
        &mut d,
        "max_joint_velocity",
        ParameterGroup::Shared,
        joints,
        10.0,
        40.0,
        "deg/s",
    )?;
    for (body, nominal) in &bodies.massive {
        let spread: R = real(MASS_SPREAD);
        d.push(ParameterDescriptor::new(
            format!("mass_{body}"),
            ParameterGroup::Shared,
            *nominal * (R::one() - spread),
            *nominal * (R::one() + spread),
            "kg",
            ParameterTarget::Body(body.clone()),
        )?);
    }
    push_per_body(
        &mut d,
        "lateral_friction",
        ParameterGroup::Shared,
        &bodies.contact,
        0.0001,
        1.25,
        "",
    )?;
    ParameterRegistry::new(d)
}

/// The Shared registry extended with the engine-specific parameters:
/// per-joint damping and per-contact-body rolling/sliding friction,
/// restitution and linear/angular damping.
pub fn default_individual_registry<R: Real>(
    bodies: &BodyInventory<R>,
    joints: usize,
) -> Result<ParameterRegistry<R>> {
    let shared = default_shared_registry(bodies, joints)?;
    let mut d: Vec<ParameterDescriptor<R>> = shared.descriptors.clone();
    push_per_joint(
        &mut d,
        "joint_damping",
        ParameterGroup::Individual,
        joints,
        0.0001,
        0.9,
        "1/s",
    )?;
    for (prefix, lower, upper) in [
        ("rolling_friction", 0.0001, 1.25),
        ("sliding_friction", 0.0001, 1.25),
        ("restitution", 0.0001, 0.9),
        ("linear_damping", 0.0001, 0.9),
        ("angular_damping", 0.0001, 0.9),
    ] {
        push_per_body(
            &mut d,
            prefix,
            ParameterGroup::Individual,
            &bodies.contact,
            lower,
            upper,
            "",
        )?;
    }
    ParameterRegistry::new(d)
}
