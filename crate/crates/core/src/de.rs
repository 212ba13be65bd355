//! Differential evolution, best/1/bin: the best member is mutated by a
//! scaled difference of two random members, recombined binomially, and a
//! child replaces its parent only when strictly fitter.
//!
//! The mutation factor is dithered once per generation, and every random
//! draw comes from seeds derived from (run seed, generation, member), so a
//! run is reproducible regardless of how the evaluation batch is scheduled.

use std::time::Instant;

use rand::distributions::Uniform;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::{penalize_failure, FailureReason, FitnessValue};
use crate::params::{ParameterRegistry, ParameterVector};
use crate::rng::derive_rng;
use crate::scalar::{real, KahanSum, Real};

const TAG_INIT: u64 = 0x494e_4954;
const TAG_GEN: u64 = 0x4745_4e45;
const TAG_EVAL: u64 = 0x4556_414c;

/// Algorithm constants; defaults follow the experiment protocol
/// (CR 0.7, F dithered in [0.5, 1.0], N = 1D, 1000 generations, 1% tolerance).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeConfig<R> {
    /// Binomial crossover rate, in (0, 1].
    pub crossover_rate: R,
    /// Dither range (F_lo, F_hi) for the mutation factor, 0 < lo <= hi <= 2.
    pub mutation_range: (R, R),
    /// Population size multiplier: N = ceil(population_factor * D).
    pub population_factor: R,
    pub max_generations: u64,
    /// Budget in clock units (seconds under a wall clock); `None` = unbounded.
    pub wall_clock_budget: Option<f64>,
    /// Convergence when population std < tol * |mean| of the fitnesses.
    pub convergence_tol: R,
    pub seed: u64,
}

impl<R: Real> Default for DeConfig<R> {
    fn default() -> Self {
        Self {
            crossover_rate: real(0.7),
            mutation_range: (real(0.5), real(1.0)),
            population_factor: R::one(),
            max_generations: 1000,
            wall_clock_budget: None,
            convergence_tol: real(0.01),
            seed: 0,
        }
    }
}

impl<R: Real> DeConfig<R> {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.mutation_range;
        if !(self.crossover_rate > R::zero() && self.crossover_rate <= R::one()) {
            return Err(Error::InvalidConfig(format!(
                "crossover rate {} outside (0, 1]",
                self.crossover_rate
            )));
        }
        if !(R::zero() < lo && lo <= hi && hi <= real(2.0)) {
            return Err(Error::InvalidConfig(format!(
                "mutation range ({lo}, {hi}) violates 0 < lo <= hi <= 2"
            )));
        }
        if !(self.convergence_tol >= R::zero()) {
            return Err(Error::InvalidConfig(
                "negative convergence tolerance".into(),
            ));
        }
        Ok(())
    }

    /// Population size for dimension `d`.
    pub fn population_size(&self, d: usize) -> usize {
        let n = (self.population_factor * R::from_usize(d).expect("dimension")).ceil();
        n.to_usize().unwrap_or(0)
    }
}

/// Result of a termination check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Continue,
    Converged,
    GenerationCap,
    TimeCap,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::Continue => write!(f, "continue"),
            Termination::Converged => write!(f, "converged"),
            Termination::GenerationCap => write!(f, "generation-cap"),
            Termination::TimeCap => write!(f, "time-cap"),
        }
    }
}

/// Evaluation identity handed to the evaluator; `seed` is derived from
/// (run seed, generation, member) so results cannot depend on scheduling.
#[derive(Clone, Copy, Debug)]
pub struct EvalContext {
    pub seed: u64,
    pub generation: u64,
    pub member: usize,
}

/// Maps a parameter vector to a fitness. Implementations must be pure given
/// (params, ctx.seed): the optimizer may evaluate a batch in any order.
pub trait Evaluator<R: Real>: Sync {
    fn evaluate(&self, params: &ParameterVector<R>, ctx: &EvalContext) -> FitnessValue<R>;
}

impl<R, F> Evaluator<R> for F
where
    R: Real,
    F: Fn(&ParameterVector<R>, &EvalContext) -> FitnessValue<R> + Sync,
{
    fn evaluate(&self, params: &ParameterVector<R>, ctx: &EvalContext) -> FitnessValue<R> {
        self(params, ctx)
    }
}

/// Current population snapshot.
#[derive(Clone, Debug)]
pub struct Population<R> {
    pub members: Vec<ParameterVector<R>>,
    pub fitnesses: Vec<FitnessValue<R>>,
    pub generation: u64,
    pub best_index: usize,
}

impl<R: Real> Population<R> {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn best_fitness(&self) -> &FitnessValue<R> {
        &self.fitnesses[self.best_index]
    }

    pub fn best_member(&self) -> &ParameterVector<R> {
        &self.members[self.best_index]
    }

    fn recompute_best(&mut self) {
        let mut best = 0;
        for i in 1..self.fitnesses.len() {
            if self.fitnesses[i].cmp_value(&self.fitnesses[best]) == std::cmp::Ordering::Less {
                best = i;
            }
        }
        self.best_index = best;
    }
}

/// Mean and population standard deviation over the non-penalty fitnesses.
///
/// Penalty sentinels are excluded so one diverged member cannot drag the
/// statistic; `None` when fewer than two measured values remain.
pub fn population_statistics<R: Real>(fitnesses: &[FitnessValue<R>]) -> Option<(R, R)> {
    let measured: Vec<R> = fitnesses
        .iter()
        .filter(|f| !f.is_penalty())
        .map(|f| f.value)
        .collect();
    if measured.len() < 2 {
        return None;
    }
    let n = R::from_usize(measured.len()).expect("count");
    let mean = measured.iter().copied().collect::<KahanSum<R>>().total() / n;
    let var = measured
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .collect::<KahanSum<R>>()
        .total()
        / n;
    Some((mean, var.sqrt()))
}

/// Applies the three stopping rules: convergence (std < tol * |mean|),
/// generation cap, and clock budget, in that order.
pub fn check_termination<R: Real>(
    pop: &Population<R>,
    config: &DeConfig<R>,
    elapsed: f64,
) -> Termination {
    if let Some((mean, std)) = population_statistics(&pop.fitnesses) {
        if std < config.convergence_tol * mean.abs() {
            return Termination::Converged;
        }
    }
    if pop.generation >= config.max_generations {
        return Termination::GenerationCap;
    }
    if let Some(budget) = config.wall_clock_budget {
        if elapsed >= budget {
            return Termination::TimeCap;
        }
    }
    Termination::Continue
}

/// best/1 mutation: `best + F * (r1 - r2)` componentwise, bound-repaired by
/// resampling any out-of-bounds component uniformly within its bounds.
pub fn mutate_best1<R: Real>(
    registry: &ParameterRegistry<R>,
    best: &ParameterVector<R>,
    r1: &ParameterVector<R>,
    r2: &ParameterVector<R>,
    factor: R,
    rng: &mut impl Rng,
) -> ParameterVector<R> {
    let values = best
        .values()
        .iter()
        .zip(r1.values().iter().zip(r2.values()))
        .map(|(&b, (&a, &c))| b + factor * (a - c))
        .collect();
    registry.clamp_or_resample(&ParameterVector::new(values), rng)
}

/// Binomial crossover: each component comes from the mutant when the uniform
/// draw is below CR; one randomly chosen index always comes from the mutant.
pub fn crossover_binomial<R: Real>(
    parent: &ParameterVector<R>,
    mutant: &ParameterVector<R>,
    crossover_rate: R,
    rng: &mut impl Rng,
) -> ParameterVector<R> {
    let d = parent.len();
    let forced = rng.gen_range(0..d);
    let unit = Uniform::new(R::zero(), R::one());
    let values = (0..d)
        .map(|j| {
            let draw = rng.sample(&unit);
            if j == forced || draw < crossover_rate {
                mutant.values()[j]
            } else {
                parent.values()[j]
            }
        })
        .collect();
    ParameterVector::new(values)
}

/// Greedy selection outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    KeepParent,
    KeepChild,
}

/// Keep the child only when strictly fitter; ties keep the parent.
pub fn select<R: Real>(
    parent_fitness: &FitnessValue<R>,
    child_fitness: &FitnessValue<R>,
) -> Selection {
    if child_fitness.cmp_value(parent_fitness) == std::cmp::Ordering::Less {
        Selection::KeepChild
    } else {
        Selection::KeepParent
    }
}

/// Per-generation optimizer state snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord<R> {
    pub generation: u64,
    pub best_fitness: R,
    pub mean_fitness: R,
    pub std_fitness: R,
    pub best_vector: ParameterVector<R>,
    /// Clock units consumed so far (seconds under a wall clock).
    pub elapsed: f64,
}

/// Time source for the budget cap.
///
/// `PerEvaluation` is a deterministic clock that advances by a fixed amount
/// per completed evaluation; campaign runs use it so persisted records are
/// reproducible byte for byte, while the cap mechanism stays identical.
#[derive(Clone, Copy, Debug)]
pub enum BudgetClock {
    Wall,
    PerEvaluation { seconds_per_eval: f64 },
}

/// Final outcome of an optimization run.
#[derive(Clone, Debug)]
pub struct DeOutcome<R> {
    pub best_vector: ParameterVector<R>,
    pub best_fitness: FitnessValue<R>,
    pub records: Vec<GenerationRecord<R>>,
    pub termination: Termination,
}

/// The optimizer. Construct, optionally inject known members into the
/// initial population, then [`run`](DifferentialEvolution::run).
pub struct DifferentialEvolution<'a, R: Real> {
    registry: &'a ParameterRegistry<R>,
    config: DeConfig<R>,
    injected: Vec<ParameterVector<R>>,
    clock: BudgetClock,
}

impl<'a, R: Real> DifferentialEvolution<'a, R> {
    pub fn new(registry: &'a ParameterRegistry<R>, config: DeConfig<R>) -> Self {
        Self {
            registry,
            config,
            injected: Vec::new(),
            clock: BudgetClock::Wall,
        }
    }

    /// Seeds known vectors (e.g. an engine's generic defaults) as the first
    /// members of the initial population.
    pub fn with_injected(mut self, members: Vec<ParameterVector<R>>) -> Self {
        self.injected = members;
        self
    }

    pub fn with_clock(mut self, clock: BudgetClock) -> Self {
        self.clock = clock;
        self
    }

    fn population_size(&self) -> Result<usize> {
        let n = self.config.population_size(self.registry.dimension());
        if n < 4 {
            return Err(Error::InvalidConfig(format!(
                "population size {n} < 4: best/1/bin needs best, two partners and a target"
            )));
        }
        if self.injected.len() > n {
            return Err(Error::InvalidConfig(format!(
                "{} injected members exceed population size {n}",
                self.injected.len()
            )));
        }
        Ok(n)
    }

    /// Random population within bounds, evaluated, best index set.
    pub fn initialize(&self, evaluator: &impl Evaluator<R>) -> Result<Population<R>> {
        self.config.validate()?;
        let n = self.population_size()?;
        for inj in &self.injected {
            self.registry.validate(inj)?;
        }
        let mut rng = derive_rng(&[self.config.seed, TAG_INIT]);
        let members: Vec<ParameterVector<R>> = (0..n)
            .map(|i| {
                self.injected
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| self.registry.sample_uniform(&mut rng))
            })
            .collect();
        let fitnesses = self.evaluate_batch(&members, 0, evaluator);
        let mut pop = Population {
            members,
            fitnesses,
            generation: 0,
            best_index: 0,
        };
        pop.recompute_best();
        Ok(pop)
    }

    fn evaluate_batch(
        &self,
        members: &[ParameterVector<R>],
        generation: u64,
        evaluator: &impl Evaluator<R>,
    ) -> Vec<FitnessValue<R>> {
        members
            .par_iter()
            .enumerate()
            .map(|(i, m)| {
                let ctx = EvalContext {
                    seed: crate::rng::derive_seed(&[
                        self.config.seed,
                        TAG_EVAL,
                        generation,
                        i as u64,
                    ]),
                    generation,
                    member: i,
                };
                sanitize(evaluator.evaluate(m, &ctx))
            })
            .collect()
    }

    /// Runs the full loop until one of the three stopping rules fires.
    pub fn run(&self, evaluator: &impl Evaluator<R>) -> Result<DeOutcome<R>> {
        let start = Instant::now();
        let mut evals: u64 = 0;
        let elapsed = |evals: u64| -> f64 {
            match self.clock {
                BudgetClock::Wall => start.elapsed().as_secs_f64(),
                BudgetClock::PerEvaluation { seconds_per_eval } => seconds_per_eval * evals as f64,
            }
        };

        let mut pop = self.initialize(evaluator)?;
        evals += pop.size() as u64;
        let mut records = vec![make_record(&pop, elapsed(evals))];

        let mut termination = if self.config.max_generations == 0 {
            Termination::GenerationCap
        } else {
            Termination::Continue
        };
        // Budget may already be exhausted before evolving (tiny caps).
        if termination == Termination::Continue {
            if let Some(budget) = self.config.wall_clock_budget {
                if elapsed(evals) >= budget {
                    termination = Termination::TimeCap;
                }
            }
        }

        let n = pop.size();
        let unit_f = {
            let (lo, hi) = self.config.mutation_range;
            Uniform::new_inclusive(lo, hi)
        };

        while termination == Termination::Continue {
            let g = pop.generation + 1;
            let mut rng: ChaCha8Rng = derive_rng(&[self.config.seed, TAG_GEN, g]);
            // Dither: one factor per generation, shared by all members.
            let factor = rng.sample(&unit_f);

            let best = pop.best_index;
            let children: Vec<ParameterVector<R>> = (0..n)
                .map(|i| {
                    let r1 = pick_distinct(&mut rng, n, &[best, i]);
                    let r2 = pick_distinct(&mut rng, n, &[best, i, r1]);
                    let mutant = mutate_best1(
                        self.registry,
                        &pop.members[best],
                        &pop.members[r1],
                        &pop.members[r2],
                        factor,
                        &mut rng,
                    );
                    crossover_binomial(
                        &pop.members[i],
                        &mutant,
                        self.config.crossover_rate,
                        &mut rng,
                    )
                })
                .collect();

            let child_fitnesses = self.evaluate_batch(&children, g, evaluator);
            evals += n as u64;

            for (i, (child, fitness)) in children.into_iter().zip(child_fitnesses).enumerate() {
                if select(&pop.fitnesses[i], &fitness) == Selection::KeepChild {
                    pop.members[i] = child;
                    pop.fitnesses[i] = fitness;
                }
            }
            pop.generation = g;
            pop.recompute_best();

            let now = elapsed(evals);
            records.push(make_record(&pop, now));
            termination = check_termination(&pop, &self.config, now);
        }

        Ok(DeOutcome {
            best_vector: pop.best_member().clone(),
            best_fitness: *pop.best_fitness(),
            records,
            termination,
        })
    }
}

fn sanitize<R: Real>(f: FitnessValue<R>) -> FitnessValue<R> {
    if f.value.is_finite() {
        f
    } else {
        penalize_failure(FailureReason::NonFiniteState)
    }
}

fn make_record<R: Real>(pop: &Population<R>, elapsed: f64) -> GenerationRecord<R> {
    let (mean, std) = population_statistics(&pop.fitnesses).unwrap_or((R::nan(), R::nan()));
    GenerationRecord {
        generation: pop.generation,
        best_fitness: pop.best_fitness().value,
        mean_fitness: mean,
        std_fitness: std,
        best_vector: pop.best_member().clone(),
        elapsed,
    }
}

fn pick_distinct(rng: &mut impl Rng, n: usize, exclude: &[usize]) -> usize {
    loop {
        let c = rng.gen_range(0..n);
        if !exclude.contains(&c) {
            return c;
        }
    }
}
