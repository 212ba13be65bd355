//! Subprocess backend: one simulation per process invocation over a stdio
//! line protocol. Request and response are single-line JSON using the same
//! field names as the manifest schema.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParameterRegistry, ParameterVector};
use crate::scalar::Real;

use super::{BackendId, SceneSpec, SimResult, SimulatorBackend};

/// Request line sent to the external simulator.
#[derive(Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "R: Real", deserialize = "R: Real"))]
pub struct ExternalRequest<R: Real> {
    pub scene: SceneSpec<R>,
    /// Named parameter assignment decoded against the active registry.
    pub params: std::collections::BTreeMap<String, R>,
}

/// Wires a real simulator behind the backend interface via
/// `<command> < request-line > response-line`.
pub struct ExternalBackend {
    id: BackendId,
    command: PathBuf,
    generic_time_step: f64,
}

impl ExternalBackend {
    pub fn new(id: BackendId, command: impl Into<PathBuf>) -> Self {
        Self {
            id,
            command: command.into(),
            generic_time_step: 0.05,
        }
    }

    /// Overrides the documented default timestep reported for baselines.
    pub fn with_generic_time_step(mut self, time_step: f64) -> Self {
        self.generic_time_step = time_step;
        self
    }
}

impl<R: Real> SimulatorBackend<R> for ExternalBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn simulate(
        &self,
        scene: &SceneSpec<R>,
        registry: &ParameterRegistry<R>,
        params: &ParameterVector<R>,
    ) -> Result<SimResult<R>> {
        let request = ExternalRequest {
            scene: scene.clone(),
            params: registry.decode(params)?,
        };
        let mut line =
            serde_json::to_string(&request).map_err(|e| Error::Serialize(e.to_string()))?;
        line.push('\n');

        let mut child = Command::new(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::ExternalBackend(format!("spawn {:?}: {e}", self.command)))?;
        child
            .stdin
            .as_mut()
            .expect("piped stdin")
            .write_all(line.as_bytes())
            .map_err(|e| Error::ExternalBackend(format!("write request: {e}")))?;
        let output = child
            .wait_with_output()
            .map_err(|e| Error::ExternalBackend(format!("wait: {e}")))?;
        if !output.status.success() {
            return Err(Error::ExternalBackend(format!(
                "{:?} exited with {}",
                self.command, output.status
            )));
        }
        let text = String::from_utf8_lossy(&output.stdout);
        let response = text
            .lines()
            .next()
            .ok_or_else(|| Error::ExternalBackend("empty response".into()))?;
        serde_json::from_str(response)
            .map_err(|e| Error::ExternalBackend(format!("bad response line: {e}")))
    }

    fn generic_defaults(
        &self,
        registry: &ParameterRegistry<R>,
        scene: &SceneSpec<R>,
    ) -> ParameterVector<R> {
        super::engine::generic_vector(registry, scene, self.generic_time_step)
    }
}
