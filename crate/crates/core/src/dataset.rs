//! Ground-truth dataset ingestion and storage.
//!
//! One CSV per task per tracked body, header `t,x,y,z,qx,qy,qz,qw`, rows in
//! time order. A task directory holds `wrist_repNN.csv` files (one per
//! real-world repetition) and, for object tasks, single-row
//! `object_repNN.csv` files with the final object pose of each repeat.
//!
//! Multiple wrist repeats are resampled to a common 20 Hz grid and averaged
//! point-wise; object trajectories are never averaged, only the final poses
//! are, since repeats with different object end states have no meaningful
//! mean trajectory. A single repeat is loaded verbatim.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fitness::TaskId;
use crate::pose::{Pose, UnitQuat, Vec3};
use crate::simkit::GRID_RATE_HZ;
use crate::trajectory::{average_aligned, mean_quaternion, resample, Sample, TimedTrajectory};

pub const CSV_HEADER: [&str; 8] = ["t", "x", "y", "z", "qx", "qy", "qz", "qw"];

/// First task that manipulates an object.
pub const FIRST_OBJECT_TASK: TaskId = 3;

/// Aggregated reference data for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthRecord {
    /// Task 1..=10.
    pub task_id: TaskId,
    pub wrist: TimedTrajectory<f64>,
    /// Mean final object pose across repeats; present iff the task
    /// manipulates an object (tasks 3..=10).
    pub object_final_pose: Option<Pose<f64>>,
    /// Real-world repetitions aggregated into this record.
    pub repeats: u32,
}

impl GroundTruthRecord {
    pub fn new(
        task_id: TaskId,
        wrist: TimedTrajectory<f64>,
        object_final_pose: Option<Pose<f64>>,
        repeats: u32,
    ) -> Result<Self> {
        if !(1..=10).contains(&task_id) {
            return Err(Error::InvalidExperiment(format!(
                "task id {task_id} outside 1..=10"
            )));
        }
        let needs_object = task_id >= FIRST_OBJECT_TASK;
        if needs_object != object_final_pose.is_some() {
            return Err(Error::InvalidExperiment(format!(
                "task {task_id} {} an object final pose",
                if needs_object {
                    "requires"
                } else {
                    "must not carry"
                }
            )));
        }
        if repeats == 0 {
            return Err(Error::InvalidExperiment("repeats must be >= 1".into()));
        }
        Ok(Self {
            task_id,
            wrist,
            object_final_pose,
            repeats,
        })
    }
}

fn parse_field(path: &Path, row: usize, name: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        message: format!("column `{name}`: cannot parse `{raw}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("column `{name}`: non-finite value {v}"),
        });
    }
    Ok(v)
}

fn parse_row(path: &Path, row: usize, record: &csv::StringRecord) -> Result<(f64, Pose<f64>)> {
    if record.len() != CSV_HEADER.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!(
                "expected {} columns, found {}",
                CSV_HEADER.len(),
                record.len()
            ),
        });
    }
    let mut vals = [0.0; 8];
    for (i, name) in CSV_HEADER.iter().enumerate() {
        vals[i] = parse_field(path, row, name, &record[i])?;
    }
    let [t, x, y, z, qx, qy, qz, qw] = vals;
    let norm = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("quaternion ({qx}, {qy}, {qz}, {qw}) is not normalizable"),
        });
    }
    // Keep already-unit quaternions bit-exact; repair the rest.
    let orientation = if (norm - 1.0).abs() <= crate::pose::QUAT_NORM_TOL {
        UnitQuat {
            x: qx,
            y: qy,
            z: qz,
            w: qw,
        }
    } else {
        UnitQuat::new(qx, qy, qz, qw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?
    };
    let pose = Pose::new(Vec3::new(x, y, z), orientation).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row,
        message: e.to_string(),
    })?;
    Ok((t, pose))
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<fs::File>) -> Result<()> {
    let headers = reader.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != CSV_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: format!("header {got:?} does not match {CSV_HEADER:?}"),
        });
    }
    Ok(())
}

/// Reads a trajectory file. Row numbers in errors count the header as row 1.
pub fn read_trajectory_csv(path: &Path, body_id: &str) -> Result<TimedTrajectory<f64>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader)?;
    let mut samples = Vec::new();
    let mut prev_t: Option<f64> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        let (t, pose) = parse_row(path, row, &record)?;
        if let Some(p) = prev_t {
            if t <= p {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    message: format!("timestamp {t} not greater than previous {p}"),
                });
            }
        }
        prev_t = Some(t);
        samples.push(Sample { time: t, pose });
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 2,
            message: "no data rows".into(),
        });
    }
    TimedTrajectory::new(body_id, samples)
}

/// Reads a single-row pose file (object final pose layout).
pub fn read_pose_csv(path: &Path) -> Result<(f64, Pose<f64>)> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        rows.push(parse_row(path, row, &record)?);
    }
    match rows.len() {
        1 => Ok(rows.remove(0)),
        n => Err(Error::Parse {
            path: path.to_path_buf(),
            row: 2,
            message: format!("expected exactly one data row, found {n}"),
        }),
    }
}

fn format_row(t: f64, pose: &Pose<f64>) -> [String; 8] {
    let p = pose.position;
    let q = pose.orientation;
    [
        format!("{t}"),
        format!("{}", p.x),
        format!("{}", p.y),
        format!("{}", p.z),
        format!("{}", q.x),
        format!("{}", q.y),
        format!("{}", q.z),
        format!("{}", q.w),
    ]
}

pub fn write_trajectory_csv(path: &Path, traj: &TimedTrajectory<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Serialize(e.to_string()))?;
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    for s in traj.samples() {
        writer
            .write_record(format_row(s.time, &s.pose))
            .map_err(|e| Error::Serialize(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pose_csv(path: &Path, t: f64, pose: &Pose<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Serialize(e.to_string()))?;
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    writer
        .write_record(format_row(t, pose))
        .map_err(|e| Error::Serialize(e.to_string()))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

fn repeat_files(task_dir: &Path, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
    let mut files = Vec::new();
    let entries = fs::read_dir(task_dir).map_err(|e| Error::io(task_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(task_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with(prefix) && name.ends_with(".csv") {
            files.push(entry.path());
        }
    }
    files.sort();
    Ok(files)
}

/// Loads and aggregates a task directory into one record.
///
/// A single wrist repeat is returned verbatim; several repeats are shifted
/// to start at t = 0, resampled to the 20 Hz grid, truncated to the common
/// length and averaged point-wise.
pub fn load_ground_truth(task_dir: &Path, task_id: TaskId) -> Result<GroundTruthRecord> {
    let wrist_files = repeat_files(task_dir, "wrist_rep")?;
    if wrist_files.is_empty() {
        return Err(Error::CampaignData(format!(
            "no wrist_rep*.csv files in {}",
            task_dir.display()
        )));
    }
    let repeats = wrist_files.len() as u32;

    let wrist = if wrist_files.len() == 1 {
        read_trajectory_csv(&wrist_files[0], "wrist")?
    } else {
        let mut resampled = Vec::new();
        for f in &wrist_files {
            let raw = read_trajectory_csv(f, "wrist")?;
            let zeroed = raw.shift_time(-raw.start_time());
            resampled.push(resample(&zeroed, GRID_RATE_HZ)?);
        }
        let min_len = resampled.iter().map(|t| t.len()).min().unwrap_or(1);
        let trimmed: Vec<TimedTrajectory<f64>> = resampled
            .iter()
            .map(|t| {
                TimedTrajectory::new("wrist", t.samples()[..min_len].to_vec())
                    .expect("non-empty truncation")
            })
            .collect();
        average_aligned(&trimmed)?
    };

    let object_files = repeat_files(task_dir, "object_rep")?;
    let object_final_pose = if object_files.is_empty() {
        None
    } else {
        let mut positions: Vec<Vec3<f64>> = Vec::new();
        let mut quats = Vec::new();
        for f in &object_files {
            let (_, pose) = read_pose_csv(f)?;
            positions.push(pose.position);
            quats.push(pose.orientation);
        }
        let n = positions.len() as f64;
        let mean_pos = positions
            .iter()
            .fold(Vec3::zero(), |acc, p| acc.add(p))
            .scale(1.0 / n);
        Some(Pose {
            position: mean_pos,
            orientation: mean_quaternion(quats),
        })
    };

    GroundTruthRecord::new(task_id, wrist, object_final_pose, repeats)
}

/// Writes a record back as a single-repeat task directory.
pub fn store_ground_truth(record: &GroundTruthRecord, task_dir: &Path) -> Result<()> {
    fs::create_dir_all(task_dir).map_err(|e| Error::io(task_dir, e))?;
    write_trajectory_csv(&task_dir.join("wrist_rep01.csv"), &record.wrist)?;
    if let Some(pose) = &record.object_final_pose {
        write_pose_csv(
            &task_dir.join("object_rep01.csv"),
            record.wrist.end_time(),
            pose,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn write_lines(path: &Path, lines: &[&str]) {
        fs::write(path, lines.join("\n")).unwrap();
    }

    #[test]
    fn three_row_fixture_loads_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("wrist_rep01.csv");
        write_lines(
            &file,
            &[
                "t,x,y,z,qx,qy,qz,qw",
                "0.0,0.1,0.2,0.3,0,0,0,1",
                "0.05,0.11,0.21,0.31,0,0,0,1",
                "0.1,0.12,0.22,0.32,0,0,0,1",
            ],
        );
        let traj = read_trajectory_csv(&file, "wrist").unwrap();
        assert_eq!(traj.len(), 3);
        assert_eq!(traj.samples()[1].time, 0.05);
        assert_eq!(traj.samples()[2].pose.position.x, 0.12);
    }

    #[test]
    fn repeated_timestamp_names_offending_row() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("wrist_rep01.csv");
        write_lines(
            &file,
            &[
                "t,x,y,z,qx,qy,qz,qw",
                "0.0,0,0,0,0,0,0,1",
                "0.0,1,0,0,0,0,0,1",
            ],
        );
        match read_trajectory_csv(&file, "wrist") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_zero_quaternion_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("wrist_rep01.csv");
        write_lines(&file, &["t,x,y,z,qx,qy,qz", "0.0,0,0,0,0,0,0"]);
        assert!(matches!(
            read_trajectory_csv(&file, "wrist"),
            Err(Error::Parse { row: 1, .. })
        ));

        write_lines(&file, &["t,x,y,z,qx,qy,qz,qw", "0.0,0,0,0,0,0,0,0"]);
        match read_trajectory_csv(&file, "wrist") {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 2);
                assert!(message.contains("not normalizable"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn off_unit_quaternion_is_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("wrist_rep01.csv");
        write_lines(&file, &["t,x,y,z,qx,qy,qz,qw", "0.0,0,0,0,0,0,0,2.0"]);
        let traj = read_trajectory_csv(&file, "wrist").unwrap();
        assert_eq!(traj.samples()[0].pose.orientation.w, 1.0);
    }

    #[test]
    fn kinematic_task_must_not_have_object() {
        let dir = tempfile::tempdir().unwrap();
        write_lines(
            &dir.path().join("wrist_rep01.csv"),
            &["t,x,y,z,qx,qy,qz,qw", "0.0,0,0,0,0,0,0,1"],
        );
        write_lines(
            &dir.path().join("object_rep01.csv"),
            &["t,x,y,z,qx,qy,qz,qw", "4.0,1,0,0,0,0,0,1"],
        );
        assert!(load_ground_truth(dir.path(), 1).is_err());
        assert!(load_ground_truth(dir.path(), 3).is_ok());
    }

    #[test]
    fn multi_repeat_wrists_average_pointwise() {
        let dir = tempfile::tempdir().unwrap();
        // Two repeats on the exact 20 Hz grid, positions differing by 1.0.
        let rows_a: Vec<String> = (0..=10)
            .map(|k| format!("{},{},0,0,0,0,0,1", k as f64 / 20.0, k as f64 * 0.01))
            .collect();
        let rows_b: Vec<String> = (0..=10)
            .map(|k| format!("{},{},0,0,0,0,0,1", k as f64 / 20.0, k as f64 * 0.01 + 1.0))
            .collect();
        let mut content_a = vec!["t,x,y,z,qx,qy,qz,qw".to_string()];
        content_a.extend(rows_a);
        let mut content_b = vec!["t,x,y,z,qx,qy,qz,qw".to_string()];
        content_b.extend(rows_b);
        fs::write(dir.path().join("wrist_rep01.csv"), content_a.join("\n")).unwrap();
        fs::write(dir.path().join("wrist_rep02.csv"), content_b.join("\n")).unwrap();

        let record = load_ground_truth(dir.path(), 1).unwrap();
        assert_eq!(record.repeats, 2);
        assert_eq!(record.wrist.len(), 11);
        for (k, s) in record.wrist.samples().iter().enumerate() {
            let expect = k as f64 * 0.01 + 0.5;
            assert!((s.pose.position.x - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn object_final_poses_average_positions() {
        let dir = tempfile::tempdir().unwrap();
        write_lines(
            &dir.path().join("wrist_rep01.csv"),
            &[
                "t,x,y,z,qx,qy,qz,qw",
                "0.0,0,0,0,0,0,0,1",
                "0.05,0,0,0,0,0,0,1",
            ],
        );
        write_lines(
            &dir.path().join("wrist_rep02.csv"),
            &[
                "t,x,y,z,qx,qy,qz,qw",
                "0.0,0,0,0,0,0,0,1",
                "0.05,0,0,0,0,0,0,1",
            ],
        );
        write_lines(
            &dir.path().join("object_rep01.csv"),
            &["t,x,y,z,qx,qy,qz,qw", "4.0,1.0,0.0,0.0,0,0,0,1"],
        );
        write_lines(
            &dir.path().join("object_rep02.csv"),
            &["t,x,y,z,qx,qy,qz,qw", "4.0,3.0,0.5,0.0,0,0,0,1"],
        );
        let record = load_ground_truth(dir.path(), 4).unwrap();
        let pose = record.object_final_pose.unwrap();
        assert!((pose.position.x - 2.0).abs() < 1e-15);
        assert!((pose.position.y - 0.25).abs() < 1e-15);
    }

    fn random_unit_quat(rng: &mut impl rand::Rng) -> UnitQuat<f64> {
        loop {
            let q = UnitQuat::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if let Ok(q) = q {
                return q;
            }
        }
    }

    fn random_record(seed: u64) -> GroundTruthRecord {
        let mut rng = crate::rng::derive_rng(&[seed, 0xDA7A]);
        let task_id: TaskId = rng.gen_range(1..=10);
        let len = rng.gen_range(2..40);
        let mut t = 0.0;
        let samples: Vec<Sample<f64>> = (0..len)
            .map(|_| {
                t += rng.gen_range(0.01..0.2);
                Sample {
                    time: t,
                    pose: Pose {
                        position: Vec3::new(
                            rng.gen_range(-2.0..2.0),
                            rng.gen_range(-2.0..2.0),
                            rng.gen_range(-2.0..2.0),
                        ),
                        orientation: random_unit_quat(&mut rng),
                    },
                }
            })
            .collect();
        let wrist = TimedTrajectory::new("wrist", samples).unwrap();
        let object = (task_id >= FIRST_OBJECT_TASK).then(|| Pose {
            position: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.025),
            orientation: random_unit_quat(&mut rng),
        });
        GroundTruthRecord::new(task_id, wrist, object, 1).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn store_load_round_trip_is_bit_exact(seed in 0u64..10_000) {
            let record = random_record(seed);
            let dir = tempfile::tempdir().unwrap();
            store_ground_truth(&record, dir.path()).unwrap();
            let back = load_ground_truth(dir.path(), record.task_id).unwrap();
            prop_assert_eq!(back, record);
        }
    }
}
