//! Post-campaign analytics: improvement over generic settings, parameter
//! importance from across-repeat deviation, and convergence-curve export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::params::{ParameterGroup, ParameterRegistry};
use crate::runner::{
    load_baselines, CellBest, CellId, RunManifest, BEST_FILE, GENERATIONS_FILE, MANIFEST_COPY,
};
use crate::scalar::KahanSum;
use crate::simkit::BackendId;
use crate::Scalar;

/// Best-generic versus best-tuned fitness for one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ImprovementReport {
    pub experiment_id: u8,
    pub best_generic: (BackendId, Scalar),
    pub best_tuned: (BackendId, Scalar),
    /// `(generic - tuned) / generic`; `None` when the generic best is zero.
    pub improvement: Option<Scalar>,
}

fn table_min(table: &[(BackendId, Scalar)]) -> Option<(BackendId, Scalar)> {
    table
        .iter()
        .min_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        })
        .cloned()
}

/// Picks the best backend from each table and reports the relative
/// improvement of tuned over generic.
pub fn compute_improvement(
    generic: &[(BackendId, Scalar)],
    tuned: &[(BackendId, Scalar)],
    experiment_id: u8,
) -> Result<ImprovementReport> {
    let best_generic = table_min(generic).ok_or_else(|| {
        Error::InsufficientData(format!("experiment {experiment_id}: empty generic table"))
    })?;
    let best_tuned = table_min(tuned).ok_or_else(|| {
        Error::InsufficientData(format!("experiment {experiment_id}: empty tuned table"))
    })?;
    let improvement = if best_generic.1 > 0.0 {
        Some((best_generic.1 - best_tuned.1) / best_generic.1)
    } else {
        None
    };
    Ok(ImprovementReport {
        experiment_id,
        best_generic,
        best_tuned,
        improvement,
    })
}

/// Across-repeat statistics of one parameter's best values.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterImportance {
    pub parameter: String,
    pub median: Scalar,
    pub std: Scalar,
    pub q1: Scalar,
    pub q3: Scalar,
    pub min: Scalar,
    pub max: Scalar,
    /// Std divided by the parameter's bound width; comparable across units.
    pub normalized_std: Scalar,
}

/// Linear-interpolation quantile on a sorted slice.
fn quantile(sorted: &[Scalar], p: Scalar) -> Scalar {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as Scalar - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as Scalar;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn population_std(values: &[Scalar]) -> Scalar {
    if values.iter().all(|v| *v == values[0]) {
        return 0.0;
    }
    let n = values.len() as Scalar;
    let mean = values.iter().copied().collect::<KahanSum<Scalar>>().total() / n;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<KahanSum<Scalar>>()
        .total()
        / n;
    var.sqrt()
}

/// Statistics over the repeat-best parameter values, ranked ascending by
/// bound-normalized standard deviation (low deviation = tightly constrained
/// = important).
///
/// Requires at least two repeats; fewer is an error, not a fabricated
/// statistic.
pub fn parameter_importance(
    repeat_best: &[Vec<Scalar>],
    registry: &ParameterRegistry<Scalar>,
) -> Result<Vec<ParameterImportance>> {
    if repeat_best.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "parameter importance needs >= 2 repeats, got {}",
            repeat_best.len()
        )));
    }
    let dim = registry.dimension();
    for v in repeat_best {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let mut out: Vec<ParameterImportance> = registry
        .descriptors()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut values: Vec<Scalar> = repeat_best.iter().map(|v| v[i]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let std = population_std(&values);
            ParameterImportance {
                parameter: d.name.clone(),
                median: quantile(&values, 0.5),
                std,
                q1: quantile(&values, 0.25),
                q3: quantile(&values, 0.75),
                min: values[0],
                max: values[values.len() - 1],
                normalized_std: std / d.width(),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.normalized_std
            .partial_cmp(&b.normalized_std)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.parameter.cmp(&b.parameter))
    });
    Ok(out)
}

/// Per-generation best fitness averaged across repeats.
///
/// Ragged repeats are aligned by carrying each run's final value forward to
/// the longest length (a converged run's best persists).
pub fn average_convergence(repeat_curves: &[Vec<Scalar>]) -> Vec<Scalar> {
    let longest = repeat_curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|g| {
            let mut acc = KahanSum::new();
            let mut count = 0usize;
            for curve in repeat_curves {
                if curve.is_empty() {
                    continue;
                }
                let v = *curve.get(g).unwrap_or(curve.last().expect("non-empty"));
                acc.add(v);
                count += 1;
            }
            acc.total() / count.max(1) as Scalar
        })
        .collect()
}

/// A campaign output directory opened for reporting.
pub struct CampaignData {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub cells: Vec<CellBest>,
}

impl CampaignData {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::load(&dir.join(MANIFEST_COPY))?;
        let mut cells = Vec::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut cell_dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.join(BEST_FILE).exists())
            .collect();
        cell_dirs.sort();
        for cell_dir in cell_dirs {
            cells.push(super::runner::read_cell_best(&cell_dir)?);
        }
        if cells.is_empty() {
            return Err(Error::CampaignData(format!(
                "no completed cells under {}",
                dir.display()
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            cells,
        })
    }

    fn experiments(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self.cells.iter().map(|c| c.experiment).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// One improvement report per experiment present in the campaign.
    pub fn improvement_reports(&self) -> Result<Vec<ImprovementReport>> {
        let baselines = load_baselines(&self.dir)?;
        self.experiments()
            .into_iter()
            .map(|experiment| {
                let generic: Vec<(BackendId, Scalar)> = baselines
                    .iter()
                    .filter(|((e, _), _)| *e == experiment)
                    .map(|((_, b), f)| (b.clone(), *f))
                    .collect();
                let mut tuned_best: BTreeMap<BackendId, Scalar> = BTreeMap::new();
                for c in self.cells.iter().filter(|c| c.experiment == experiment) {
                    let entry = tuned_best
                        .entry(c.backend.clone())
                        .or_insert(Scalar::INFINITY);
                    *entry = entry.min(c.best_fitness);
                }
                let tuned: Vec<(BackendId, Scalar)> = tuned_best.into_iter().collect();
                compute_improvement(&generic, &tuned, experiment)
            })
            .collect()
    }

    /// Repeat-best statistics for one cell family.
    pub fn importance(
        &self,
        group: ParameterGroup,
        backend: &BackendId,
        experiment: u8,
    ) -> Result<Vec<ParameterImportance>> {
        let registry = self.manifest.registry.subset(group);
        let repeat_best: Vec<Vec<Scalar>> = self
            .cells
            .iter()
            .filter(|c| c.group == group && &c.backend == backend && c.experiment == experiment)
            .map(|c| c.best_vector.clone())
            .collect();
        parameter_importance(&repeat_best, &registry)
    }

    /// Mean best-fitness curve per backend for one experiment (optionally
    /// restricted to one parameter group).
    pub fn convergence(
        &self,
        experiment: u8,
        group: Option<ParameterGroup>,
    ) -> Result<Vec<(u64, BackendId, Scalar)>> {
        let groups_present: Vec<ParameterGroup> = {
            let mut gs: Vec<ParameterGroup> = self
                .cells
                .iter()
                .filter(|c| c.experiment == experiment)
                .map(|c| c.group)
                .collect();
            gs.sort();
            gs.dedup();
            gs
        };
        let group = match (group, groups_present.as_slice()) {
            (Some(g), _) => g,
            (None, [only]) => *only,
            (None, []) => {
                return Err(Error::CampaignData(format!(
                    "no cells for experiment {experiment}"
                )))
            }
            (None, _) => {
                return Err(Error::CampaignData(format!(
                    "experiment {experiment} has several parameter groups; pass one explicitly"
                )))
            }
        };

        let mut backends: Vec<BackendId> = self
            .cells
            .iter()
            .filter(|c| c.experiment == experiment && c.group == group)
            .map(|c| c.backend.clone())
            .collect();
        backends.sort();
        backends.dedup();
        if backends.is_empty() {
            return Err(Error::CampaignData(format!(
                "no cells for experiment {experiment} in group {group}"
            )));
        }

        let mut rows = Vec::new();
        for backend in backends {
            let mut curves = Vec::new();
            for cell in self
                .cells
                .iter()
                .filter(|c| c.experiment == experiment && c.group == group && c.backend == backend)
            {
                let id = CellId {
                    group: cell.group,
                    experiment: cell.experiment,
                    backend: cell.backend.clone(),
                    repeat: cell.repeat,
                };
                let stream = self.dir.join(id.dir_name()).join(GENERATIONS_FILE);
                let curve = super::runner::read_generations_csv(&stream)?
                    .into_iter()
                    .map(|r| r.best_fitness)
                    .collect::<Vec<_>>();
                curves.push(curve);
            }
            let averaged = average_convergence(&curves);
            for (g, v) in averaged.into_iter().enumerate() {
                rows.push((g as u64, backend.clone(), v));
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParameterDescriptor, ParameterTarget};

    fn backend(name: &str) -> BackendId {
        BackendId::new(name)
    }

    #[test]
    fn improvement_matches_benchmark_experiment_6() {
        // Fixture: generic fitness of experiment 6 across five engines, and
        // the best tuned result.
        let generic = vec![
            (backend("pybullet"), 503.3037),
            (backend("bullet278"), 0.6029),
            (backend("bullet283"), 0.6096),
            (backend("ode"), 0.5972),
            (backend("newton"), 0.5977),
        ];
        let tuned = vec![(backend("pybullet"), 0.0552)];
        let report = compute_improvement(&generic, &tuned, 6).unwrap();
        assert_eq!(report.best_generic, (backend("ode"), 0.5972));
        let improvement = report.improvement.unwrap();
        assert!(
            (improvement - 0.91).abs() < 0.01,
            "improvement {improvement}"
        );
    }

    #[test]
    fn improvement_matches_benchmark_experiment_2() {
        let generic = vec![
            (backend("pybullet"), 0.1283),
            (backend("bullet278"), 0.1320),
            (backend("bullet283"), 0.1582),
            (backend("ode"), 0.1285),
            (backend("newton"), 0.1147),
        ];
        let tuned = vec![(backend("newton"), 0.0984)];
        let report = compute_improvement(&generic, &tuned, 2).unwrap();
        assert_eq!(report.best_generic, (backend("newton"), 0.1147));
        let improvement = report.improvement.unwrap();
        assert!(
            (improvement - 0.14).abs() < 0.01,
            "improvement {improvement}"
        );
    }

    #[test]
    fn improvement_zero_when_tuned_equals_generic() {
        let table = vec![(backend("a"), 0.5)];
        let report = compute_improvement(&table, &table, 1).unwrap();
        assert_eq!(report.improvement, Some(0.0));
    }

    #[test]
    fn improvement_undefined_on_zero_generic() {
        let generic = vec![(backend("a"), 0.0)];
        let tuned = vec![(backend("a"), 0.0)];
        let report = compute_improvement(&generic, &tuned, 1).unwrap();
        assert_eq!(report.improvement, None);
    }

    #[test]
    fn improvement_invariant_to_row_order() {
        let mut generic = vec![
            (backend("a"), 0.3),
            (backend("b"), 0.2),
            (backend("c"), 0.25),
        ];
        let tuned = vec![(backend("a"), 0.1), (backend("b"), 0.15)];
        let fwd = compute_improvement(&generic, &tuned, 1).unwrap();
        generic.reverse();
        let rev = compute_improvement(&generic, &tuned, 1).unwrap();
        assert_eq!(fwd, rev);
    }

    fn unit_registry(names: &[&str]) -> ParameterRegistry<Scalar> {
        ParameterRegistry::new(
            names
                .iter()
                .map(|n| {
                    ParameterDescriptor::new(
                        n.to_string(),
                        ParameterGroup::Shared,
                        0.0,
                        1.0,
                        "",
                        ParameterTarget::EngineGlobal,
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_spread_ranks_first() {
        let registry = unit_registry(&["time_step", "noise"]);
        // time_step identical across repeats, noise spread out.
        let repeat_best = vec![vec![0.4, 0.1], vec![0.4, 0.9], vec![0.4, 0.5]];
        let ranked = parameter_importance(&repeat_best, &registry).unwrap();
        assert_eq!(ranked[0].parameter, "time_step");
        assert_eq!(ranked[0].std, 0.0);
        assert_eq!(ranked[0].normalized_std, 0.0);
    }

    #[test]
    fn uniform_values_have_sqrt_twelfth_normalized_std() {
        // Uniform draws over the bounds: normalized std -> 1/sqrt(12).
        let registry = unit_registry(&["irrelevant"]);
        let mut rng = crate::rng::derive_rng(&[2024]);
        let repeat_best: Vec<Vec<Scalar>> = (0..10_000)
            .map(|_| vec![rand::Rng::gen_range(&mut rng, 0.0..1.0)])
            .collect();
        let ranked = parameter_importance(&repeat_best, &registry).unwrap();
        let expected = 1.0 / 12f64.sqrt();
        assert!(
            (ranked[0].normalized_std - expected).abs() < 0.01,
            "normalized std {} vs {expected}",
            ranked[0].normalized_std
        );
    }

    #[test]
    fn normalized_std_invariant_under_bound_scaling() {
        // Scaling a parameter and its bounds by a constant leaves the
        // normalized deviation unchanged.
        let registry_unit = unit_registry(&["p"]);
        let registry_scaled = ParameterRegistry::new(vec![ParameterDescriptor::new(
            "p",
            ParameterGroup::Shared,
            0.0,
            50.0,
            "",
            ParameterTarget::EngineGlobal,
        )
        .unwrap()])
        .unwrap();
        let values = [0.12, 0.55, 0.31, 0.77, 0.48];
        let unit_vecs: Vec<Vec<Scalar>> = values.iter().map(|&v| vec![v]).collect();
        let scaled_vecs: Vec<Vec<Scalar>> = values.iter().map(|&v| vec![v * 50.0]).collect();
        let a = parameter_importance(&unit_vecs, &registry_unit).unwrap();
        let b = parameter_importance(&scaled_vecs, &registry_scaled).unwrap();
        assert!((a[0].normalized_std - b[0].normalized_std).abs() < 1e-12);
    }

    #[test]
    fn importance_needs_two_repeats() {
        let registry = unit_registry(&["p"]);
        assert!(matches!(
            parameter_importance(&[vec![0.5]], &registry),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn quartiles_are_ordered() {
        let registry = unit_registry(&["p"]);
        let repeat_best: Vec<Vec<Scalar>> =
            [0.9, 0.1, 0.4, 0.6, 0.2].iter().map(|&v| vec![v]).collect();
        let r = &parameter_importance(&repeat_best, &registry).unwrap()[0];
        assert!(r.min <= r.q1 && r.q1 <= r.median && r.median <= r.q3 && r.q3 <= r.max);
        assert_eq!(r.median, 0.4);
    }

    #[test]
    fn convergence_single_repeat_is_identity() {
        let curve = vec![5.0, 3.0, 2.5, 2.5];
        assert_eq!(average_convergence(std::slice::from_ref(&curve)), curve);
    }

    #[test]
    fn convergence_carry_forward_hand_case() {
        // Lengths 3 and 5 with constant values a and b: averaged curve has
        // length 5 and value (a+b)/2 throughout.
        let a = 4.0;
        let b = 1.0;
        let curves = vec![vec![a; 3], vec![b; 5]];
        let avg = average_convergence(&curves);
        assert_eq!(avg.len(), 5);
        for v in avg {
            assert!((v - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn averaged_curve_non_increasing_when_inputs_are() {
        let mut rng = crate::rng::derive_rng(&[3030]);
        for _ in 0..50 {
            let curves: Vec<Vec<Scalar>> = (0..4)
                .map(|_| {
                    let len = rand::Rng::gen_range(&mut rng, 2..12);
                    let mut v = 10.0;
                    (0..len)
                        .map(|_| {
                            v -= rand::Rng::gen_range(&mut rng, 0.0..1.0);
                            v
                        })
                        .collect()
                })
                .collect();
            let avg = average_convergence(&curves);
            assert_eq!(avg.len(), curves.iter().map(Vec::len).max().unwrap());
            for pair in avg.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12);
            }
        }
    }
}
