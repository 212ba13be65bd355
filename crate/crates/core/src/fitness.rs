//! Fitness signals: mean trajectory error, trajectory-plus-object error and
//! the all-tasks aggregate, plus the penalty for failed simulations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{euclidean_distance, Vec3};
use crate::scalar::{real, KahanSum, Real};
use crate::trajectory::TimedTrajectory;

/// Dataset task identifier, 1..=10.
pub type TaskId = u8;

/// Sentinel fitness for failed evaluations, meters. Strictly larger than any
/// physical error reachable in a desk-scale workspace.
pub const DEFAULT_PENALTY: f64 = 1e4;

/// Why a simulation failed to produce a scorable result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    Diverged,
    NonFiniteState,
    Timeout,
}

/// A scalar fitness, tagged with the task it scored and whether it is a
/// penalty sentinel rather than a measured error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue<R> {
    pub value: R,
    pub task_id: Option<TaskId>,
    pub failure: Option<FailureReason>,
}

impl<R: Real> FitnessValue<R> {
    pub fn measured(value: R, task_id: Option<TaskId>) -> Self {
        Self {
            value,
            task_id,
            failure: None,
        }
    }

    pub fn is_penalty(&self) -> bool {
        self.failure.is_some()
    }

    /// Total order on the value; NaN sorts worst.
    pub fn cmp_value(&self, other: &Self) -> std::cmp::Ordering {
        match (self.value.is_nan(), other.value.is_nan()) {
            (true, true) => std::cmp::Ordering::Equal,
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            (false, false) => self
                .value
                .partial_cmp(&other.value)
                .unwrap_or(std::cmp::Ordering::Equal),
        }
    }
}

/// Maps a failure to the penalty sentinel (default constant).
pub fn penalize_failure<R: Real>(reason: FailureReason) -> FitnessValue<R> {
    penalize_failure_with(reason, real(DEFAULT_PENALTY))
}

/// Maps a failure to a configured penalty constant.
pub fn penalize_failure_with<R: Real>(reason: FailureReason, penalty: R) -> FitnessValue<R> {
    FitnessValue {
        value: penalty,
        task_id: None,
        failure: Some(reason),
    }
}

fn check_common_grid<R: Real>(
    sim: &TimedTrajectory<R>,
    reference: &TimedTrajectory<R>,
) -> Result<()> {
    if sim.len() != reference.len() {
        return Err(Error::GridMismatch(format!(
            "point counts differ: sim {} vs reference {}",
            sim.len(),
            reference.len()
        )));
    }
    for (a, b) in sim.samples().iter().zip(reference.samples()) {
        if (a.time - b.time).abs() > real(1e-9) {
            return Err(Error::GridMismatch(format!(
                "timestamps differ: sim {} vs reference {}",
                a.time, b.time
            )));
        }
    }
    Ok(())
}

/// Mean Euclidean wrist error over a common grid:
/// sum over points of ||W_ref - W_sim|| divided by the point count.
///
/// Both trajectories must already sit on the same grid (callers resample to
/// 20 Hz); mismatched grids are a contract error, not silently realigned.
pub fn kinematic_fitness<R: Real>(
    sim_wrist: &TimedTrajectory<R>,
    ref_wrist: &TimedTrajectory<R>,
) -> Result<FitnessValue<R>> {
    let value = mean_point_error(sim_wrist, ref_wrist)?;
    Ok(FitnessValue::measured(value, None))
}

fn mean_point_error<R: Real>(
    sim: &TimedTrajectory<R>,
    reference: &TimedTrajectory<R>,
) -> Result<R> {
    check_common_grid(sim, reference)?;
    let mut acc = KahanSum::new();
    for (s, r) in sim.samples().iter().zip(reference.samples()) {
        acc.add(euclidean_distance(&s.pose.position, &r.pose.position));
    }
    let n = R::from_usize(sim.len()).expect("point count");
    Ok(acc.total() / n)
}

/// Wrist error plus the final-object-position offset.
pub fn object_fitness<R: Real>(
    sim_wrist: &TimedTrajectory<R>,
    ref_wrist: &TimedTrajectory<R>,
    sim_obj_final: &Vec3<R>,
    ref_obj_final: &Vec3<R>,
) -> Result<FitnessValue<R>> {
    if !sim_obj_final.is_finite() || !ref_obj_final.is_finite() {
        return Err(Error::FitnessContract(
            "object final positions must be finite".into(),
        ));
    }
    let kinematic = mean_point_error(sim_wrist, ref_wrist)?;
    let object = euclidean_distance(sim_obj_final, ref_obj_final);
    Ok(FitnessValue::measured(kinematic + object, None))
}

/// Sum of the ten per-task fitnesses (the combined 11th experiment).
///
/// Requires tasks 1..=10 each exactly once; uses compensated summation so the
/// result is independent of input order.
pub fn combined_fitness<R: Real>(per_task: &[FitnessValue<R>]) -> Result<FitnessValue<R>> {
    if per_task.len() != 10 {
        return Err(Error::FitnessContract(format!(
            "combined fitness needs exactly 10 task values, got {}",
            per_task.len()
        )));
    }
    let mut seen = [false; 10];
    for f in per_task {
        let id = f.task_id.ok_or_else(|| {
            Error::FitnessContract("combined fitness input missing task id".into())
        })?;
        if !(1..=10).contains(&id) {
            return Err(Error::FitnessContract(format!(
                "task id {id} out of 1..=10"
            )));
        }
        let slot = &mut seen[(id - 1) as usize];
        if *slot {
            return Err(Error::FitnessContract(format!("task {id} present twice")));
        }
        *slot = true;
    }
    let mut acc = KahanSum::new();
    let mut failure = None;
    for f in per_task {
        acc.add(f.value);
        failure = failure.or(f.failure);
    }
    Ok(FitnessValue {
        value: acc.total(),
        task_id: None,
        failure,
    })
}
