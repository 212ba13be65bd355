//! Experiment definitions, candidate evaluation, and campaign execution.

mod campaign;
mod manifest;

pub use campaign::{
    load_baselines, read_cell_best, read_generations_csv, run_campaign, CampaignOptions,
    CampaignSummary, CellBest, CellId, GenerationRow, BASELINES_FILE, BEST_FILE, COMPLETE_MARKER,
    GENERATIONS_FILE, MANIFEST_COPY, SUMMARY_FILE,
};
pub use manifest::{ExperimentEntry, RunManifest};

use std::collections::BTreeMap;

use crate::dataset::{GroundTruthRecord, FIRST_OBJECT_TASK};
use crate::de::{EvalContext, Evaluator};
use crate::error::{Error, Result};
use crate::fitness::{
    combined_fitness, kinematic_fitness, object_fitness, penalize_failure, FailureReason,
    FitnessValue, TaskId,
};
use crate::params::{BodyInventory, ParameterGroup, ParameterRegistry, ParameterVector};
use crate::pose::Vec3;
use crate::scalar::Real;
use crate::simkit::{SceneSpec, SimStatus, SimulatorBackend, GRID_RATE_HZ};
use crate::trajectory::{resample, Sample, TimedTrajectory};
use crate::Scalar;

/// Reference data prepared for fitness evaluation: wrist shifted to t = 0 on
/// the 20 Hz grid, plus the mean final object position.
#[derive(Clone, Debug)]
struct PreparedReference {
    wrist: TimedTrajectory<Scalar>,
    object_final: Option<Vec3<Scalar>>,
}

/// One experiment: a task (or all ten for the combined 11th), its scenes and
/// ground truth, and the parameter group being tuned.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub experiment_id: u8,
    pub task_ids: Vec<TaskId>,
    pub scenes: BTreeMap<TaskId, SceneSpec<Scalar>>,
    pub ground_truth: BTreeMap<TaskId, GroundTruthRecord>,
    pub parameter_group: ParameterGroup,
    references: BTreeMap<TaskId, PreparedReference>,
}

impl ExperimentSpec {
    pub fn new(
        experiment_id: u8,
        scenes: BTreeMap<TaskId, SceneSpec<Scalar>>,
        ground_truth: BTreeMap<TaskId, GroundTruthRecord>,
        parameter_group: ParameterGroup,
    ) -> Result<Self> {
        let task_ids: Vec<TaskId> = scenes.keys().copied().collect();
        match experiment_id {
            1..=10 => {
                if task_ids != [experiment_id] {
                    return Err(Error::InvalidExperiment(format!(
                        "experiment {experiment_id} must contain exactly task {experiment_id}, got {task_ids:?}"
                    )));
                }
            }
            11 => {
                let all: Vec<TaskId> = (1..=10).collect();
                if task_ids != all {
                    return Err(Error::InvalidExperiment(format!(
                        "experiment 11 must contain exactly tasks 1..=10, got {task_ids:?}"
                    )));
                }
            }
            other => {
                return Err(Error::InvalidExperiment(format!(
                    "experiment id {other} outside 1..=11"
                )))
            }
        }

        let mut references = BTreeMap::new();
        for (&task, scene) in &scenes {
            scene.validate()?;
            let needs_object = task >= FIRST_OBJECT_TASK;
            if scene.object.is_some() != needs_object {
                return Err(Error::InvalidExperiment(format!(
                    "task {task} scene {} an object",
                    if needs_object {
                        "must have"
                    } else {
                        "must not have"
                    }
                )));
            }
            let gt = ground_truth.get(&task).ok_or_else(|| {
                Error::InvalidExperiment(format!("task {task} has no ground truth"))
            })?;
            if gt.task_id != task {
                return Err(Error::InvalidExperiment(format!(
                    "ground truth for task {task} carries task id {}",
                    gt.task_id
                )));
            }
            let zeroed = gt.wrist.shift_time(-gt.wrist.start_time());
            references.insert(
                task,
                PreparedReference {
                    wrist: resample(&zeroed, GRID_RATE_HZ)?,
                    object_final: gt.object_final_pose.as_ref().map(|p| p.position),
                },
            );
        }
        if ground_truth.keys().any(|t| !scenes.contains_key(t)) {
            return Err(Error::InvalidExperiment(
                "ground truth present for a task without a scene".into(),
            ));
        }

        Ok(Self {
            experiment_id,
            task_ids,
            scenes,
            ground_truth,
            parameter_group,
            references,
        })
    }
}

/// Pads or trims a simulated wrist trajectory onto the reference grid; an
/// episode that ended early is scored against its last pose.
fn align_to_reference(
    sim: &TimedTrajectory<Scalar>,
    reference: &TimedTrajectory<Scalar>,
) -> Result<TimedTrajectory<Scalar>> {
    let zeroed = sim.shift_time(-sim.start_time());
    let gridded = resample(&zeroed, GRID_RATE_HZ)?;
    let n = reference.len();
    let samples: Vec<Sample<Scalar>> = (0..n)
        .map(|k| {
            let time = reference.samples()[k].time;
            let pose = if k < gridded.len() {
                gridded.samples()[k].pose
            } else {
                *gridded.last_pose()
            };
            Sample { time, pose }
        })
        .collect();
    TimedTrajectory::new(sim.body_id.clone(), samples)
}

fn score_task(
    spec: &ExperimentSpec,
    backend: &dyn SimulatorBackend<Scalar>,
    registry: &ParameterRegistry<Scalar>,
    params: &ParameterVector<Scalar>,
    task: TaskId,
) -> FitnessValue<Scalar> {
    let scene = &spec.scenes[&task];
    let reference = &spec.references[&task];
    let mut fitness = match backend.simulate(scene, registry, params) {
        Err(_) => penalize_failure(FailureReason::NonFiniteState),
        Ok(result) => match result.status {
            SimStatus::Diverged => penalize_failure(FailureReason::Diverged),
            SimStatus::NonFinite => penalize_failure(FailureReason::NonFiniteState),
            SimStatus::Ok => {
                let scored = align_to_reference(&result.wrist, &reference.wrist).and_then(
                    |aligned| match (&reference.object_final, &result.object_final) {
                        (Some(ref_obj), Some(sim_obj)) => {
                            object_fitness(&aligned, &reference.wrist, sim_obj, ref_obj)
                        }
                        (None, _) => kinematic_fitness(&aligned, &reference.wrist),
                        (Some(_), None) => Err(Error::FitnessContract(format!(
                            "backend returned no object position for task {task}"
                        ))),
                    },
                );
                scored.unwrap_or_else(|_| penalize_failure(FailureReason::NonFiniteState))
            }
        },
    };
    fitness.task_id = Some(task);
    fitness
}

/// Evaluates one parameter vector on one experiment: per-task simulation,
/// kinematic fitness for tasks 1-2, trajectory-plus-object fitness for 3-10,
/// and the sum over all ten for experiment 11. Failures fold into the
/// penalty fitness; no errors surface.
pub fn evaluate_candidate(
    spec: &ExperimentSpec,
    backend: &dyn SimulatorBackend<Scalar>,
    registry: &ParameterRegistry<Scalar>,
    params: &ParameterVector<Scalar>,
) -> FitnessValue<Scalar> {
    let per_task: Vec<FitnessValue<Scalar>> = spec
        .task_ids
        .iter()
        .map(|&task| score_task(spec, backend, registry, params, task))
        .collect();
    if spec.experiment_id == 11 {
        combined_fitness(&per_task)
            .unwrap_or_else(|_| penalize_failure(FailureReason::NonFiniteState))
    } else {
        per_task[0]
    }
}

/// Adapter wiring an experiment and backend into the optimizer.
pub struct CellEvaluator<'a> {
    pub spec: &'a ExperimentSpec,
    pub backend: &'a dyn SimulatorBackend<Scalar>,
    pub registry: &'a ParameterRegistry<Scalar>,
}

impl Evaluator<Scalar> for CellEvaluator<'_> {
    fn evaluate(
        &self,
        params: &ParameterVector<Scalar>,
        _ctx: &EvalContext,
    ) -> FitnessValue<Scalar> {
        evaluate_candidate(self.spec, self.backend, self.registry, params)
    }
}

/// Single evaluation of the backend's documented defaults; no optimization.
pub fn baseline_fitness(
    spec: &ExperimentSpec,
    backend: &dyn SimulatorBackend<Scalar>,
    registry: &ParameterRegistry<Scalar>,
) -> (ParameterVector<Scalar>, FitnessValue<Scalar>) {
    let scene = spec.scenes.values().next().expect("validated experiment");
    let generic = backend.generic_defaults(registry, scene);
    let fitness = evaluate_candidate(spec, backend, registry, &generic);
    (generic, fitness)
}

/// Union of the body inventories of several scenes; nominal masses must
/// agree where body names coincide.
pub fn campaign_inventory<'a, R: Real>(
    scenes: impl IntoIterator<Item = &'a SceneSpec<R>>,
) -> Result<BodyInventory<R>> {
    let mut massive: Vec<(String, R)> = Vec::new();
    let mut contact: Vec<String> = Vec::new();
    for scene in scenes {
        let inv = scene.body_inventory();
        for (name, mass) in inv.massive {
            match massive.iter().find(|(n, _)| *n == name) {
                None => massive.push((name, mass)),
                Some((_, existing)) => {
                    if (*existing - mass).abs() > crate::scalar::real(1e-9) {
                        return Err(Error::InvalidManifest(format!(
                            "body `{name}` has conflicting nominal masses {existing} and {mass}"
                        )));
                    }
                }
            }
        }
        for name in inv.contact {
            if !contact.contains(&name) {
                contact.push(name);
            }
        }
    }
    if massive.is_empty() {
        return Err(Error::InvalidManifest("no scenes given".into()));
    }
    Ok(BodyInventory { massive, contact })
}

/// Simulates a scene with known parameters and wraps the result as a
/// ground-truth record (synthetic fixtures and recovery experiments).
pub fn synthesize_ground_truth(
    backend: &dyn SimulatorBackend<Scalar>,
    scene: &SceneSpec<Scalar>,
    registry: &ParameterRegistry<Scalar>,
    params: &ParameterVector<Scalar>,
    task_id: TaskId,
) -> Result<GroundTruthRecord> {
    let result = backend.simulate(scene, registry, params)?;
    if result.status != SimStatus::Ok {
        return Err(Error::InvalidExperiment(format!(
            "synthetic ground truth for task {task_id} failed: {:?}",
            result.status
        )));
    }
    let object = result.object_final.map(crate::pose::Pose::from_position);
    GroundTruthRecord::new(task_id, result.wrist, object, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_shared_registry;
    use crate::simkit::{scenes::standard_task, BackendRegistry};

    fn push_experiment(group: ParameterGroup) -> (ExperimentSpec, ParameterRegistry<Scalar>) {
        let scene = standard_task(3).unwrap();
        let registry = default_shared_registry(&scene.body_inventory(), 6).unwrap();
        let engines = BackendRegistry::with_reference_engines();
        let backend = engines.get(&"engine-a".into()).unwrap();
        let hidden = backend.generic_defaults(&registry, &scene);
        let gt = synthesize_ground_truth(backend, &scene, &registry, &hidden, 3).unwrap();
        let spec = ExperimentSpec::new(3, [(3, scene)].into(), [(3, gt)].into(), group).unwrap();
        (spec, registry)
    }

    #[test]
    fn self_consistent_candidate_scores_zero() {
        let (spec, registry) = push_experiment(ParameterGroup::Shared);
        let engines = BackendRegistry::with_reference_engines();
        let backend = engines.get(&"engine-a".into()).unwrap();
        let generic = backend.generic_defaults(&registry, &spec.scenes[&3]);
        let f = evaluate_candidate(&spec, backend, &registry, &generic);
        assert_eq!(f.value, 0.0);
        assert!(!f.is_penalty());
    }

    #[test]
    fn baseline_self_consistency_is_zero() {
        let (spec, registry) = push_experiment(ParameterGroup::Shared);
        let engines = BackendRegistry::with_reference_engines();
        let backend = engines.get(&"engine-a".into()).unwrap();
        let (_, f) = baseline_fitness(&spec, backend, &registry);
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn other_backend_scores_nonzero() {
        let (spec, registry) = push_experiment(ParameterGroup::Shared);
        let engines = BackendRegistry::with_reference_engines();
        let b = engines.get(&"engine-b".into()).unwrap();
        let (_, f) = baseline_fitness(&spec, b, &registry);
        assert!(f.value > 1e-4);
    }

    #[test]
    fn experiment_invariants_enforced() {
        let scene = standard_task(3).unwrap();
        let engines = BackendRegistry::with_reference_engines();
        let backend = engines.get(&"engine-a".into()).unwrap();
        let registry = default_shared_registry(&scene.body_inventory(), 6).unwrap();
        let hidden = backend.generic_defaults(&registry, &scene);
        let gt = synthesize_ground_truth(backend, &scene, &registry, &hidden, 3).unwrap();

        // Experiment id must match its single task.
        assert!(ExperimentSpec::new(
            4,
            [(3, scene.clone())].into(),
            [(3, gt.clone())].into(),
            ParameterGroup::Shared,
        )
        .is_err());

        // Kinematic experiments must not carry an object scene.
        assert!(ExperimentSpec::new(
            1,
            [(1, scene.clone())].into(),
            [(1, gt.clone())].into(),
            ParameterGroup::Shared,
        )
        .is_err());

        // Experiment 11 needs all ten tasks.
        assert!(ExperimentSpec::new(
            11,
            [(3, scene)].into(),
            [(3, gt)].into(),
            ParameterGroup::Shared,
        )
        .is_err());
    }

    #[test]
    fn combined_experiment_is_sum_of_parts() {
        let engines = BackendRegistry::with_reference_engines();
        let backend = engines.get(&"engine-a".into()).unwrap();

        let mut scenes = BTreeMap::new();
        let mut gts = BTreeMap::new();
        for task in 1..=10u8 {
            scenes.insert(task, standard_task::<Scalar>(task).unwrap());
        }
        let inventory = campaign_inventory(scenes.values()).unwrap();
        let registry = default_shared_registry(&inventory, 6).unwrap();
        // Ground truth from a perturbed vector so per-task fitnesses differ.
        let mut rng = crate::rng::derive_rng(&[55]);
        let hidden = registry.sample_uniform(&mut rng);
        for task in 1..=10u8 {
            let gt =
                synthesize_ground_truth(backend, &scenes[&task], &registry, &hidden, task).unwrap();
            gts.insert(task, gt);
        }

        let combined =
            ExperimentSpec::new(11, scenes.clone(), gts.clone(), ParameterGroup::Shared).unwrap();
        let candidate = backend.generic_defaults(&registry, &scenes[&3]);
        let total = evaluate_candidate(&combined, backend, &registry, &candidate);

        let mut sum = crate::scalar::KahanSum::new();
        for task in 1..=10u8 {
            let single = ExperimentSpec::new(
                task,
                [(task, scenes[&task].clone())].into(),
                [(task, gts[&task].clone())].into(),
                ParameterGroup::Shared,
            )
            .unwrap();
            sum.add(evaluate_candidate(&single, backend, &registry, &candidate).value);
        }
        assert!((total.value - sum.total()).abs() < 1e-12);
    }

    #[test]
    fn campaign_wide_shared_registry_has_31_variables() {
        // Across all ten standard tasks: timestep + 6 torque + 6 velocity
        // + 15 masses (6 links, gripper, 8 distinct objects) + 3 lateral
        // frictions.
        let scenes: Vec<SceneSpec<Scalar>> = (1..=10).map(|t| standard_task(t).unwrap()).collect();
        let inventory = campaign_inventory(scenes.iter()).unwrap();
        let registry = default_shared_registry(&inventory, 6).unwrap();
        assert_eq!(registry.dimension(), 31);
    }

    struct FailingBackend;

    impl SimulatorBackend<Scalar> for FailingBackend {
        fn id(&self) -> &crate::simkit::BackendId {
            static ID: std::sync::OnceLock<crate::simkit::BackendId> = std::sync::OnceLock::new();
            ID.get_or_init(|| crate::simkit::BackendId::new("failing"))
        }
        fn simulate(
            &self,
            scene: &SceneSpec<Scalar>,
            _registry: &ParameterRegistry<Scalar>,
            _params: &ParameterVector<Scalar>,
        ) -> crate::error::Result<crate::simkit::SimResult<Scalar>> {
            let sample = Sample {
                time: 0.0,
                pose: crate::pose::Pose::identity(),
            };
            Ok(crate::simkit::SimResult {
                wrist: TimedTrajectory::new("wrist", vec![sample]).unwrap(),
                object_final: scene.object.as_ref().map(|_| Vec3::zero()),
                status: SimStatus::Diverged,
            })
        }
        fn generic_defaults(
            &self,
            registry: &ParameterRegistry<Scalar>,
            _scene: &SceneSpec<Scalar>,
        ) -> ParameterVector<Scalar> {
            ParameterVector::new(vec![0.0; registry.dimension()])
        }
    }

    #[test]
    fn diverged_simulation_becomes_penalty() {
        let (spec, registry) = push_experiment(ParameterGroup::Shared);
        let backend = FailingBackend;
        let generic = ParameterVector::new(vec![0.0; registry.dimension()]);
        let f = evaluate_candidate(&spec, &backend, &registry, &generic);
        assert!(f.is_penalty());
        assert_eq!(f.value, crate::fitness::DEFAULT_PENALTY);
    }

    #[test]
    fn penalty_dominates_any_reachable_fitness() {
        // Desk-scale workspace: wrist within ~1 m of the base, objects a few
        // meters at most, so measured fitness stays far below the penalty.
        let (spec, registry) = push_experiment(ParameterGroup::Shared);
        let engines = BackendRegistry::with_reference_engines();
        let mut rng = crate::rng::derive_rng(&[808]);
        for backend_name in ["engine-a", "engine-b"] {
            let backend = engines.get(&backend_name.into()).unwrap();
            for _ in 0..25 {
                let params = registry.sample_uniform(&mut rng);
                let f = evaluate_candidate(&spec, backend, &registry, &params);
                if !f.is_penalty() {
                    assert!(
                        f.value < 0.01 * crate::fitness::DEFAULT_PENALTY,
                        "measured fitness {} approaches the penalty",
                        f.value
                    );
                }
            }
        }
    }

    #[test]
    fn unknown_backend_is_a_registry_error() {
        let engines = BackendRegistry::with_reference_engines();
        let (spec, registry) = push_experiment(ParameterGroup::Shared);
        let params = ParameterVector::new(vec![0.0; registry.dimension()]);
        let result = crate::simkit::simulate(
            &engines,
            &crate::simkit::BackendId::new("engine-z"),
            &spec.scenes[&3],
            &registry,
            &params,
        );
        assert!(matches!(result, Err(crate::Error::UnknownBackend(_))));
    }
}
