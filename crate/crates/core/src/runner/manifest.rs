//! Campaign manifest: the on-disk TOML description of what to run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::load_ground_truth;
use crate::error::{Error, Result};
use crate::fitness::TaskId;
use crate::params::{ParameterGroup, ParameterRegistry};
use crate::simkit::{BackendId, SceneSpec};
use crate::{DeConfig, Scalar};

use super::ExperimentSpec;

fn default_true() -> bool {
    true
}

/// One experiment row of the manifest. Scenes are inlined; ground truth is
/// referenced by task directory (relative paths resolve against the
/// manifest's directory). Map keys are task numbers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub id: u8,
    pub tasks: Vec<TaskId>,
    pub group: ParameterGroup,
    pub ground_truth: BTreeMap<String, PathBuf>,
    pub scenes: BTreeMap<String, SceneSpec<Scalar>>,
}

/// Everything a campaign needs: experiments, backends, repeat count, the
/// optimizer constants, the parameter registry and the output location.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// Master seed; per-cell seeds derive from it.
    pub seed: u64,
    pub repeats: u32,
    pub output_dir: PathBuf,
    pub backends: Vec<BackendId>,
    /// Seed each backend's generic defaults as one initial population
    /// member, making "tuned beats generic" structural. On by default.
    #[serde(default = "default_true")]
    pub inject_baseline: bool,
    /// Optimizer constants. The `seed` field inside is ignored; cells use
    /// seeds derived from the manifest seed.
    pub de: DeConfig,
    pub registry: ParameterRegistry<Scalar>,
    pub experiments: Vec<ExperimentEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: RunManifest =
            toml::from_str(&text).map_err(|e| Error::InvalidManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidManifest("repeats must be >= 1".into()));
        }
        if self.backends.is_empty() {
            return Err(Error::InvalidManifest("no backends listed".into()));
        }
        if self.experiments.is_empty() {
            return Err(Error::InvalidManifest("no experiments listed".into()));
        }
        self.de.validate()?;
        Ok(())
    }

    /// Number of optimization cells this manifest schedules:
    /// experiment entries (already one per parameter group) x backends x
    /// repeats.
    pub fn cell_count(&self) -> usize {
        self.experiments.len() * self.backends.len() * self.repeats as usize
    }

    /// Loads ground truth and materializes every experiment entry.
    pub fn resolve_experiments(&self, manifest_dir: &Path) -> Result<Vec<ExperimentSpec>> {
        self.experiments
            .iter()
            .map(|entry| {
                let mut scenes = BTreeMap::new();
                for (key, scene) in &entry.scenes {
                    scenes.insert(parse_task_key(key)?, scene.clone());
                }
                let mut ground_truth = BTreeMap::new();
                for (key, dir) in &entry.ground_truth {
                    let task = parse_task_key(key)?;
                    let dir = if dir.is_absolute() {
                        dir.clone()
                    } else {
                        manifest_dir.join(dir)
                    };
                    ground_truth.insert(task, load_ground_truth(&dir, task)?);
                }
                let spec = ExperimentSpec::new(entry.id, scenes, ground_truth, entry.group)?;
                if spec.task_ids != entry.tasks {
                    return Err(Error::InvalidManifest(format!(
                        "experiment {} lists tasks {:?} but its scenes cover {:?}",
                        entry.id, entry.tasks, spec.task_ids
                    )));
                }
                Ok(spec)
            })
            .collect()
    }
}

fn parse_task_key(key: &str) -> Result<TaskId> {
    key.parse::<TaskId>()
        .ok()
        .filter(|t| (1..=10).contains(t))
        .ok_or_else(|| Error::InvalidManifest(format!("bad task key `{key}`")))
}
