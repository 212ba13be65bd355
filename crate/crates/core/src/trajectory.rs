//! Time-stamped pose sequences and the 20 Hz resampling used by the fitness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Pose, UnitQuat, Vec3};
use crate::scalar::{real, KahanSum, Real};

/// One trajectory sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample<R> {
    /// Timestamp, seconds.
    pub time: R,
    pub pose: Pose<R>,
}

/// Time-stamped pose sequence for one tracked body.
///
/// Invariants: at least one sample, timestamps strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedTrajectory<R> {
    pub body_id: String,
    samples: Vec<Sample<R>>,
}

impl<R: Real> TimedTrajectory<R> {
    pub fn new(body_id: impl Into<String>, samples: Vec<Sample<R>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidTrajectory("no samples".into()));
        }
        for pair in samples.windows(2) {
            if !(pair[1].time > pair[0].time) {
                return Err(Error::InvalidTrajectory(format!(
                    "timestamps not strictly increasing at t={} -> t={}",
                    pair[0].time, pair[1].time
                )));
            }
        }
        if samples.iter().any(|s| !s.time.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite timestamp".into()));
        }
        Ok(Self {
            body_id: body_id.into(),
            samples,
        })
    }

    pub fn samples(&self) -> &[Sample<R>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty sample lists
    }

    pub fn start_time(&self) -> R {
        self.samples[0].time
    }

    pub fn end_time(&self) -> R {
        self.samples[self.samples.len() - 1].time
    }

    pub fn duration(&self) -> R {
        self.end_time() - self.start_time()
    }

    pub fn last_pose(&self) -> &Pose<R> {
        &self.samples[self.samples.len() - 1].pose
    }

    /// Pose at time `t`: linear in position, spherical in orientation,
    /// clamped to the first/last sample outside the covered span.
    pub fn pose_at(&self, t: R) -> Pose<R> {
        if t <= self.start_time() {
            return self.samples[0].pose;
        }
        if t >= self.end_time() {
            return *self.last_pose();
        }
        // First sample with time > t; its predecessor brackets from below.
        let hi = self.samples.partition_point(|s| s.time <= t);
        let a = &self.samples[hi - 1];
        if a.time == t {
            return a.pose;
        }
        let b = &self.samples[hi];
        let alpha = (t - a.time) / (b.time - a.time);
        Pose::interpolate(&a.pose, &b.pose, alpha)
    }

    /// Shifts all timestamps by `offset` (used to normalize starts to zero).
    pub fn shift_time(&self, offset: R) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                time: s.time + offset,
                pose: s.pose,
            })
            .collect();
        Self {
            body_id: self.body_id.clone(),
            samples,
        }
    }
}

/// Number of grid points for a span of `duration` at `rate`, robust to the
/// float jitter of `k/rate` arithmetic at exact boundaries.
pub(crate) fn grid_points<R: Real>(duration: R, rate: R) -> usize {
    let steps = duration * rate;
    let eps = real::<R>(1e-9) * steps.max(R::one());
    let k = (steps + eps).floor();
    k.to_usize().unwrap_or(0) + 1
}

/// Resamples a trajectory to a uniform grid at `rate` Hz.
///
/// Output timestamps are `t0 + k/rate` for `k = 0..=floor(duration*rate)`,
/// with positions linearly and orientations spherically interpolated.
/// A single-sample trajectory resamples to itself (no interpolation exists).
pub fn resample<R: Real>(traj: &TimedTrajectory<R>, rate: R) -> Result<TimedTrajectory<R>> {
    if !(rate > R::zero()) || !rate.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "resample rate must be positive and finite, got {rate}"
        )));
    }
    if traj.len() == 1 {
        return Ok(traj.clone());
    }
    let t0 = traj.start_time();
    let n = grid_points(traj.duration(), rate);
    let samples = (0..n)
        .map(|k| {
            let t = t0 + R::from_usize(k).expect("grid index") / rate;
            Sample {
                time: t,
                pose: traj.pose_at(t),
            }
        })
        .collect();
    TimedTrajectory::new(traj.body_id.clone(), samples)
}

/// Point-wise mean of several trajectories aligned on a common grid.
///
/// All inputs must have equal length and timestamps; positions are averaged
/// component-wise with compensated sums, orientations by sign-aligned
/// normalized quaternion mean.
pub fn average_aligned<R: Real>(trajectories: &[TimedTrajectory<R>]) -> Result<TimedTrajectory<R>> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::DegenerateInput("no trajectories to average".into()))?;
    for t in &trajectories[1..] {
        if t.len() != first.len() {
            return Err(Error::GridMismatch(format!(
                "trajectory lengths differ: {} vs {}",
                first.len(),
                t.len()
            )));
        }
        for (a, b) in first.samples().iter().zip(t.samples()) {
            if (a.time - b.time).abs() > real(1e-9) {
                return Err(Error::GridMismatch(format!(
                    "timestamps differ: {} vs {}",
                    a.time, b.time
                )));
            }
        }
    }
    let count = R::from_usize(trajectories.len()).expect("count");
    let samples = (0..first.len())
        .map(|i| {
            let mut x = KahanSum::new();
            let mut y = KahanSum::new();
            let mut z = KahanSum::new();
            for t in trajectories {
                let p = t.samples()[i].pose.position;
                x.add(p.x);
                y.add(p.y);
                z.add(p.z);
            }
            let position = Vec3::new(x.total() / count, y.total() / count, z.total() / count);
            let orientation =
                mean_quaternion(trajectories.iter().map(|t| t.samples()[i].pose.orientation));
            Sample {
                time: first.samples()[i].time,
                pose: Pose {
                    position,
                    orientation,
                },
            }
        })
        .collect();
    TimedTrajectory::new(first.body_id.clone(), samples)
}

/// Sign-aligned normalized component mean; adequate for clustered rotations.
pub fn mean_quaternion<R: Real>(quats: impl IntoIterator<Item = UnitQuat<R>>) -> UnitQuat<R> {
    let mut iter = quats.into_iter();
    let reference = match iter.next() {
        Some(q) => q,
        None => return UnitQuat::identity(),
    };
    let (mut x, mut y, mut z, mut w) = (reference.x, reference.y, reference.z, reference.w);
    let mut n = 1usize;
    for q in iter {
        let sign = if reference.dot(&q) < R::zero() {
            -R::one()
        } else {
            R::one()
        };
        x += q.x * sign;
        y += q.y * sign;
        z += q.z * sign;
        w += q.w * sign;
        n += 1;
    }
    if n == 1 {
        return reference;
    }
    UnitQuat::new(x, y, z, w).unwrap_or(reference)
}
