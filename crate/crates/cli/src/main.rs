//! `simcal`: run calibration campaigns and report on their results.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use simcal_core::analysis::CampaignData;
use simcal_core::params::{default_individual_registry, default_shared_registry, ParameterGroup};
use simcal_core::runner::{
    baseline_fitness, campaign_inventory, run_campaign, synthesize_ground_truth, CampaignOptions,
    ExperimentEntry, RunManifest,
};
use simcal_core::simkit::{scenes::standard_task, BackendId, BackendRegistry};
use simcal_core::{dataset, DeConfig};

#[derive(Parser)]
#[command(name = "simcal", version, about = "Simulator parameter calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every cell of a campaign manifest.
    Run(RunArgs),
    /// Evaluate the generic (untuned) parameters of every backend.
    Baseline(BaselineArgs),
    /// Export analysis tables from a finished campaign.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Write a ready-to-run demo manifest with synthetic ground truth.
    Init(InitArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Worker threads for population evaluation.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Skip cells already completed in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Best generic vs best tuned fitness per experiment.
    Improvement(ImprovementArgs),
    /// Across-repeat parameter statistics for one cell family.
    Importance(ImportanceArgs),
    /// Mean best-fitness curve per backend for one experiment.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
struct ImprovementArgs {
    #[arg(long)]
    campaign: PathBuf,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    campaign: PathBuf,
    #[arg(long)]
    backend: String,
    #[arg(long)]
    experiment: u8,
    /// Parameter group (defaults to shared).
    #[arg(long, default_value = "shared")]
    group: String,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    campaign: PathBuf,
    #[arg(long)]
    experiment: u8,
    /// Parameter group; required only when the campaign ran both.
    #[arg(long)]
    group: Option<String>,
}

#[derive(Args)]
struct InitArgs {
    /// Directory to create (manifest, ground truth, campaign output).
    #[arg(long)]
    out: PathBuf,
    /// Experiments to include, e.g. `1,3,5` or `all` (11 implies 1-10 data).
    #[arg(long, default_value = "1,3")]
    experiments: String,
    /// Parameter groups: `shared`, `individual` or `both`.
    #[arg(long, default_value = "shared")]
    groups: String,
    #[arg(long, default_value_t = 2)]
    repeats: u32,
    #[arg(long, default_value_t = 40)]
    max_generations: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_group(s: &str) -> Result<ParameterGroup> {
    match s {
        "shared" => Ok(ParameterGroup::Shared),
        "individual" => Ok(ParameterGroup::Individual),
        other => bail!("unknown parameter group `{other}` (shared|individual)"),
    }
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Prints CSV rows, stopping quietly when the consumer closes the pipe
/// (e.g. `simcal report ... | head`).
fn emit_csv(lines: impl IntoIterator<Item = String>) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in lines {
        if let Err(e) = writeln!(out, "{line}") {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                return Ok(());
            }
            return Err(e.into());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Report(report) => match report {
            ReportCommand::Improvement(args) => cmd_improvement(args),
            ReportCommand::Importance(args) => cmd_importance(args),
            ReportCommand::Convergence(args) => cmd_convergence(args),
        },
        Command::Init(args) => cmd_init(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let manifest = RunManifest::load(&args.manifest)
        .with_context(|| format!("loading {}", args.manifest.display()))?;
    let mut backends = BackendRegistry::with_reference_engines();
    for id in &manifest.backends {
        backends.resolve(id)?;
    }
    let options = CampaignOptions {
        workers: args.workers,
        resume: args.resume,
    };
    let summary = run_campaign(
        &manifest,
        &manifest_dir(&args.manifest),
        &backends,
        &options,
    )?;
    println!(
        "campaign complete: {} cells ({} executed, {} resumed) in {}",
        summary.cells.len(),
        summary.executed,
        summary.skipped,
        summary.output_dir.display()
    );
    for cell in &summary.cells {
        println!(
            "  g{} e{:02} {} r{:02}: best {:.6} (baseline {:.6}, {} after {} generations)",
            cell.group,
            cell.experiment,
            cell.backend,
            cell.repeat,
            cell.best_fitness,
            cell.baseline_fitness,
            cell.termination,
            cell.generations
        );
    }
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    let mut backends = BackendRegistry::with_reference_engines();
    for id in &manifest.backends {
        backends.resolve(id)?;
    }
    let experiments = manifest.resolve_experiments(&manifest_dir(&args.manifest))?;
    let mut lines = vec!["experiment,backend,baseline_fitness".to_string()];
    let mut seen = std::collections::BTreeSet::new();
    for spec in &experiments {
        for backend_id in &manifest.backends {
            if !seen.insert((spec.experiment_id, backend_id.clone())) {
                continue;
            }
            let backend = backends.get(backend_id)?;
            let registry = manifest.registry.subset(spec.parameter_group);
            let (_, fitness) = baseline_fitness(spec, backend, &registry);
            lines.push(format!(
                "{},{},{}",
                spec.experiment_id, backend_id, fitness.value
            ));
        }
    }
    emit_csv(lines)
}

fn cmd_improvement(args: ImprovementArgs) -> Result<()> {
    let data = CampaignData::load(&args.campaign)?;
    let mut lines = vec![
        "experiment,best_generic_backend,best_generic,best_tuned_backend,best_tuned,improvement"
            .to_string(),
    ];
    for r in data.improvement_reports()? {
        let improvement = r
            .improvement
            .map(|v| v.to_string())
            .unwrap_or_else(|| "undefined".into());
        lines.push(format!(
            "{},{},{},{},{},{}",
            r.experiment_id,
            r.best_generic.0,
            r.best_generic.1,
            r.best_tuned.0,
            r.best_tuned.1,
            improvement
        ));
    }
    emit_csv(lines)
}

fn cmd_importance(args: ImportanceArgs) -> Result<()> {
    let data = CampaignData::load(&args.campaign)?;
    let group = parse_group(&args.group)?;
    let rows = data.importance(group, &BackendId::new(&args.backend), args.experiment)?;
    let mut lines = vec!["parameter,median,std,q1,q3,min,max,normalized_std".to_string()];
    for r in rows {
        lines.push(format!(
            "{},{},{},{},{},{},{},{}",
            r.parameter, r.median, r.std, r.q1, r.q3, r.min, r.max, r.normalized_std
        ));
    }
    emit_csv(lines)
}

fn cmd_convergence(args: ConvergenceArgs) -> Result<()> {
    let data = CampaignData::load(&args.campaign)?;
    let group = args.group.as_deref().map(parse_group).transpose()?;
    let mut lines = vec!["generation,backend,mean_best_fitness".to_string()];
    for (generation, backend, fitness) in data.convergence(args.experiment, group)? {
        lines.push(format!("{generation},{backend},{fitness}"));
    }
    emit_csv(lines)
}

fn parse_experiments(arg: &str) -> Result<Vec<u8>> {
    if arg == "all" {
        return Ok((1..=11).collect());
    }
    let mut ids = Vec::new();
    for part in arg.split(',') {
        let id: u8 = part.trim().parse().context("experiment list")?;
        if !(1..=11).contains(&id) {
            bail!("experiment {id} outside 1..=11");
        }
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

/// The deliberately non-generic parameters used to synthesize demo ground
/// truth: a tuned campaign should recover them.
fn demo_hidden_overrides() -> Vec<(String, f64)> {
    let mut overrides = vec![
        ("time_step".to_string(), 0.01),
        ("lateral_friction_object".to_string(), 0.3),
    ];
    for j in 1..=5 {
        overrides.push((format!("max_joint_velocity_j{j}"), 20.0));
    }
    overrides
}

fn cmd_init(args: InitArgs) -> Result<()> {
    let experiments = parse_experiments(&args.experiments)?;
    let groups = match args.groups.as_str() {
        "shared" => vec![ParameterGroup::Shared],
        "individual" => vec![ParameterGroup::Individual],
        "both" => vec![ParameterGroup::Shared, ParameterGroup::Individual],
        other => bail!("unknown groups `{other}` (shared|individual|both)"),
    };

    // Tasks needed: the experiment ids themselves, all ten for experiment 11.
    let mut tasks: Vec<u8> = experiments
        .iter()
        .flat_map(|&e| if e == 11 { (1..=10).collect() } else { vec![e] })
        .collect();
    tasks.sort_unstable();
    tasks.dedup();

    let scenes: BTreeMap<u8, simcal_core::SceneSpec> = tasks
        .iter()
        .map(|&t| Ok((t, standard_task(t)?)))
        .collect::<Result<_, simcal_core::Error>>()?;

    let inventory = campaign_inventory(scenes.values())?;
    let registry = if groups.contains(&ParameterGroup::Individual) {
        default_individual_registry(&inventory, 6)?
    } else {
        default_shared_registry(&inventory, 6)?
    };

    let backends = BackendRegistry::with_reference_engines();
    let engine_a = backends.get(&BackendId::new("engine-a"))?;

    // Hidden "true" parameters: generic defaults with a few deliberate
    // deviations the optimization should recover.
    let any_scene = scenes.values().next().expect("at least one task");
    let mut named = registry.decode(&engine_a.generic_defaults(&registry, any_scene))?;
    for (name, value) in demo_hidden_overrides() {
        if let Some(slot) = named.get_mut(&name) {
            *slot = value;
        }
    }
    let hidden = registry.encode(&named)?;

    std::fs::create_dir_all(&args.out)?;
    for (&task, scene) in &scenes {
        let record = synthesize_ground_truth(engine_a, scene, &registry, &hidden, task)?;
        dataset::store_ground_truth(&record, &args.out.join(format!("gt/task_{task:02}")))?;
    }

    let mut entries = Vec::new();
    for &group in &groups {
        for &experiment in &experiments {
            let expt_tasks: Vec<u8> = if experiment == 11 {
                (1..=10).collect()
            } else {
                vec![experiment]
            };
            entries.push(ExperimentEntry {
                id: experiment,
                tasks: expt_tasks.clone(),
                group,
                ground_truth: expt_tasks
                    .iter()
                    .map(|t| (t.to_string(), PathBuf::from(format!("gt/task_{t:02}"))))
                    .collect(),
                scenes: expt_tasks
                    .iter()
                    .map(|t| (t.to_string(), scenes[t].clone()))
                    .collect(),
            });
        }
    }

    let manifest = RunManifest {
        seed: args.seed,
        repeats: args.repeats,
        output_dir: PathBuf::from("campaign"),
        backends: vec![BackendId::new("engine-a"), BackendId::new("engine-b")],
        inject_baseline: true,
        de: DeConfig {
            max_generations: args.max_generations,
            ..DeConfig::default()
        },
        registry,
        experiments: entries,
    };
    let manifest_path = args.out.join("manifest.toml");
    manifest.store(&manifest_path)?;
    println!(
        "wrote {} ({} experiments x {} groups x 2 backends x {} repeats = {} cells; D = {})",
        manifest_path.display(),
        experiments.len(),
        groups.len(),
        args.repeats,
        experiments.len() * groups.len() * 2 * args.repeats as usize,
        manifest.registry.dimension()
    );
    println!("next: simcal run --manifest {}", manifest_path.display());
    Ok(())
}
