//! Campaign execution: one optimization per (group, experiment, backend,
//! repeat) cell, persisted so interrupted campaigns resume without redoing
//! finished cells.
//!
//! Cell layout under the output directory:
//!
//! ```text
//! g{group}_e{experiment}_b{backend}_r{repeat}/
//!   generations.csv   per-generation stream
//!   best.toml         final best vector, fitness, termination reason
//!   complete          marker written last; absent means the cell is redone
//! ```
//!
//! Campaign-level files: `manifest.toml` (copy), `baselines.csv` (generic
//! fitness per experiment and backend) and `summary.csv` (one row per cell).
//!
//! Runs use the deterministic per-evaluation clock, so all persisted files
//! are byte-reproducible for a given manifest regardless of worker count;
//! the budget cap then counts evaluations instead of wall seconds.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::de::{BudgetClock, DifferentialEvolution, GenerationRecord, Termination};
use crate::error::{Error, Result};
use crate::params::ParameterGroup;
use crate::rng::{derive_seed, hash_str};
use crate::simkit::{BackendId, BackendRegistry};
use crate::Scalar;

use super::manifest::RunManifest;
use super::{baseline_fitness, CellEvaluator, ExperimentSpec};

pub const GENERATIONS_FILE: &str = "generations.csv";
pub const BEST_FILE: &str = "best.toml";
pub const COMPLETE_MARKER: &str = "complete";
pub const BASELINES_FILE: &str = "baselines.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_COPY: &str = "manifest.toml";

#[derive(Clone, Copy, Debug)]
pub struct CampaignOptions {
    /// Worker threads bounding concurrent simulations within a cell.
    pub workers: usize,
    /// Skip cells whose `complete` marker exists.
    pub resume: bool,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            resume: false,
        }
    }
}

/// Identity of one optimization run within a campaign.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellId {
    pub group: ParameterGroup,
    pub experiment: u8,
    pub backend: BackendId,
    pub repeat: u32,
}

impl CellId {
    pub fn dir_name(&self) -> String {
        let backend: String = self
            .backend
            .as_str()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
            .collect();
        format!(
            "g{}_e{:02}_b{}_r{:02}",
            self.group, self.experiment, backend, self.repeat
        )
    }

    /// Reproducible, pairwise-distinct cell seed. Masked to 63 bits so the
    /// persisted TOML (integers are i64) can hold it.
    pub fn seed(&self, campaign_seed: u64) -> u64 {
        derive_seed(&[
            campaign_seed,
            self.group as u64,
            u64::from(self.experiment),
            hash_str(self.backend.as_str()),
            u64::from(self.repeat),
        ]) & (i64::MAX as u64)
    }
}

/// Persisted final-best record of a cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellBest {
    pub group: ParameterGroup,
    pub experiment: u8,
    pub backend: BackendId,
    pub repeat: u32,
    pub seed: u64,
    pub termination: Termination,
    pub generations: u64,
    pub baseline_fitness: Scalar,
    pub best_fitness: Scalar,
    pub best_vector: Vec<Scalar>,
}

#[derive(Clone, Debug)]
pub struct CampaignSummary {
    pub cells: Vec<CellBest>,
    pub executed: usize,
    pub skipped: usize,
    pub output_dir: PathBuf,
}

fn write_generations_csv(path: &Path, records: &[GenerationRecord<Scalar>]) -> Result<()> {
    let dim = records.first().map_or(0, |r| r.best_vector.len());
    let mut out = String::new();
    out.push_str("generation,best_fitness,mean_fitness,std_fitness,elapsed_s");
    for i in 0..dim {
        out.push_str(&format!(",best_vector[{i}]"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}",
            r.generation, r.best_fitness, r.mean_fitness, r.std_fitness, r.elapsed
        ));
        for v in r.best_vector.values() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parsed row of a generations stream (the analysis-facing view).
#[derive(Clone, Debug)]
pub struct GenerationRow {
    pub generation: u64,
    pub best_fitness: Scalar,
    pub mean_fitness: Scalar,
    pub std_fitness: Scalar,
    pub elapsed: Scalar,
    pub best_vector: Vec<Scalar>,
}

pub fn read_generations_csv(path: &Path) -> Result<Vec<GenerationRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                message: format!("expected >= 5 fields, got {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<Scalar> {
            s.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                message: format!("bad number `{s}`"),
            })
        };
        rows.push(GenerationRow {
            generation: fields[0].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                message: format!("bad generation `{}`", fields[0]),
            })?,
            best_fitness: num(fields[1])?,
            mean_fitness: num(fields[2])?,
            std_fitness: num(fields[3])?,
            elapsed: num(fields[4])?,
            best_vector: fields[5..]
                .iter()
                .map(|s| num(s))
                .collect::<Result<Vec<_>>>()?,
        });
    }
    Ok(rows)
}

fn atomic_write(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn run_cell(
    id: &CellId,
    cell_dir: &Path,
    manifest: &RunManifest,
    spec: &ExperimentSpec,
    backends: &BackendRegistry<Scalar>,
) -> Result<CellBest> {
    fs::create_dir_all(cell_dir).map_err(|e| Error::io(cell_dir, e))?;
    // Clear any partial output from an interrupted run.
    let marker = cell_dir.join(COMPLETE_MARKER);
    let _ = fs::remove_file(&marker);

    let backend = backends.get(&id.backend)?;
    let registry = manifest.registry.subset(id.group);
    let (generic_vector, generic_fitness) = baseline_fitness(spec, backend, &registry);

    let seed = id.seed(manifest.seed);
    let config = crate::DeConfig {
        seed,
        ..manifest.de.clone()
    };
    let evaluator = CellEvaluator {
        spec,
        backend,
        registry: &registry,
    };
    let injected = if manifest.inject_baseline {
        vec![generic_vector]
    } else {
        Vec::new()
    };
    let outcome = DifferentialEvolution::new(&registry, config)
        .with_injected(injected)
        .with_clock(BudgetClock::PerEvaluation {
            seconds_per_eval: 1.0,
        })
        .run(&evaluator)?;

    let best = CellBest {
        group: id.group,
        experiment: id.experiment,
        backend: id.backend.clone(),
        repeat: id.repeat,
        seed,
        termination: outcome.termination,
        generations: outcome.records.last().map_or(0, |r| r.generation),
        baseline_fitness: generic_fitness.value,
        best_fitness: outcome.best_fitness.value,
        best_vector: outcome.best_vector.values().to_vec(),
    };

    atomic_write(&cell_dir.join(GENERATIONS_FILE), |p| {
        write_generations_csv(p, &outcome.records)
    })?;
    atomic_write(&cell_dir.join(BEST_FILE), |p| {
        let text = toml::to_string_pretty(&best).map_err(|e| Error::Serialize(e.to_string()))?;
        fs::write(p, text).map_err(|e| Error::io(p, e))
    })?;
    fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    Ok(best)
}

pub fn read_cell_best(cell_dir: &Path) -> Result<CellBest> {
    let path = cell_dir.join(BEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::CampaignData(e.to_string()))
}

/// Generic (baseline) fitness per experiment and backend.
pub fn load_baselines(campaign_dir: &Path) -> Result<BTreeMap<(u8, BackendId), Scalar>> {
    let path = campaign_dir.join(BASELINES_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.clone(),
                row: i + 1,
                message: "expected experiment,backend,baseline_fitness".into(),
            });
        }
        let experiment: u8 = fields[0].parse().map_err(|_| Error::Parse {
            path: path.clone(),
            row: i + 1,
            message: format!("bad experiment `{}`", fields[0]),
        })?;
        let fitness: Scalar = fields[2].parse().map_err(|_| Error::Parse {
            path: path.clone(),
            row: i + 1,
            message: format!("bad fitness `{}`", fields[2]),
        })?;
        out.insert((experiment, BackendId::new(fields[1])), fitness);
    }
    Ok(out)
}

/// Executes every cell of the manifest. With `resume`, cells whose marker
/// file exists are left untouched and their persisted results reused.
pub fn run_campaign(
    manifest: &RunManifest,
    manifest_dir: &Path,
    backends: &BackendRegistry<Scalar>,
    options: &CampaignOptions,
) -> Result<CampaignSummary> {
    manifest.validate()?;
    let output_dir = if manifest.output_dir.is_absolute() {
        manifest.output_dir.clone()
    } else {
        manifest_dir.join(&manifest.output_dir)
    };
    fs::create_dir_all(&output_dir).map_err(|e| Error::io(&output_dir, e))?;
    manifest.store(&output_dir.join(MANIFEST_COPY))?;

    let experiments = manifest.resolve_experiments(manifest_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    // Baselines: one generic evaluation per (experiment, backend); the value
    // does not depend on the tuned group.
    let mut baselines: BTreeMap<(u8, BackendId), Scalar> = BTreeMap::new();
    for spec in &experiments {
        for backend_id in &manifest.backends {
            let key = (spec.experiment_id, backend_id.clone());
            if baselines.contains_key(&key) {
                continue;
            }
            let backend = backends.get(backend_id)?;
            let registry = manifest.registry.subset(spec.parameter_group);
            let (_, fitness) = baseline_fitness(spec, backend, &registry);
            baselines.insert(key, fitness.value);
        }
    }
    let mut baseline_csv = String::from("experiment,backend,baseline_fitness\n");
    for ((experiment, backend), fitness) in &baselines {
        baseline_csv.push_str(&format!("{experiment},{backend},{fitness}\n"));
    }
    let baselines_path = output_dir.join(BASELINES_FILE);
    fs::write(&baselines_path, baseline_csv).map_err(|e| Error::io(&baselines_path, e))?;

    let mut cells = Vec::new();
    let mut executed = 0usize;
    let mut skipped = 0usize;

    pool.install(|| -> Result<()> {
        for spec in &experiments {
            for backend_id in &manifest.backends {
                for repeat in 1..=manifest.repeats {
                    let id = CellId {
                        group: spec.parameter_group,
                        experiment: spec.experiment_id,
                        backend: backend_id.clone(),
                        repeat,
                    };
                    let cell_dir = output_dir.join(id.dir_name());
                    if options.resume && cell_dir.join(COMPLETE_MARKER).exists() {
                        cells.push(read_cell_best(&cell_dir)?);
                        skipped += 1;
                        continue;
                    }
                    cells.push(run_cell(&id, &cell_dir, manifest, spec, backends)?);
                    executed += 1;
                }
            }
        }
        Ok(())
    })?;

    let mut summary_csv = String::from(
        "group,experiment,backend,repeat,baseline_fitness,best_fitness,termination,generations\n",
    );
    for c in &cells {
        summary_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.group,
            c.experiment,
            c.backend,
            c.repeat,
            c.baseline_fitness,
            c.best_fitness,
            c.termination,
            c.generations
        ));
    }
    let summary_path = output_dir.join(SUMMARY_FILE);
    let mut f = fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    f.write_all(summary_csv.as_bytes())
        .map_err(|e| Error::io(&summary_path, e))?;

    Ok(CampaignSummary {
        cells,
        executed,
        skipped,
        output_dir,
    })
}
