//! Experiment orchestration: degradation tables, the fifteen-variant
//! permutation study, the branch-capacity sweep, cross-task validation, and
//! modality-distance quantification, plus CSV/plot-data emission.
//!
//! Trend experiments run over seed ensembles; independent runs execute
//! concurrently and reduce in a fixed order, so results are deterministic
//! for a given (config, seed list).

use crate::dataset::TaskTag;
use crate::error::{Error, Result};
use crate::metrics::MetricSet;
use crate::model::ModelConfig;
use crate::taskgen::{default_task_specs, gen_task, Split, TaskDataset, TaskSpec};
use crate::train::{
    evaluate_task, execute_run, train_parallel_mixed, train_separate, Paradigm, RunRecord,
    TrainConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Everything an experiment needs: model shape, schedule, tasks, and the
/// seed ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tasks: Vec<TaskSpec>,
    /// Training seeds for trend ensembles.
    pub seeds: Vec<u64>,
    /// Branch depths for the capacity sweep, descending.
    pub depths: Vec<usize>,
    pub replay_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            tasks: default_task_specs(),
            seeds: (1..=10).collect(),
            depths: vec![6, 5, 4, 3, 2, 1],
            replay_fraction: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.tasks.is_empty() {
            return Err(Error::Invalid("experiment needs tasks".into()));
        }
        for t in &self.tasks {
            t.validate()?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tasks {
            if !seen.insert(t.task) {
                return Err(Error::Invalid(format!("duplicate task spec for {}", t.task)));
            }
        }
        if self.train.n_tasks != self.tasks.len() {
            return Err(Error::Invalid(format!(
                "n_tasks is {} but {} task specs are configured",
                self.train.n_tasks,
                self.tasks.len()
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Invalid("experiment needs at least one seed".into()));
        }
        if !(self.replay_fraction.is_finite()
            && 0.0 < self.replay_fraction
            && self.replay_fraction <= 1.0)
        {
            return Err(Error::Invalid("replay_fraction must lie in (0,1]".into()));
        }
        Ok(())
    }

    fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

/// Which scalar metrics a degradation row covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    Pr,
    Npr,
    Sr,
    Re,
    FScore,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Pr => "PR",
            MetricKind::Npr => "NPR",
            MetricKind::Sr => "SR",
            MetricKind::Re => "Re",
            MetricKind::FScore => "F",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One metric's separate-vs-unified comparison, in metric points (x100).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: MetricKind,
    pub separate: f64,
    pub unified: f64,
    /// unified - separate, in points; negative means the unified model lost
    /// ground on this task.
    pub delta_points: f64,
}

/// Per-task unified-vs-separate deltas with per-task means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub per_task: BTreeMap<TaskTag, Vec<MetricDelta>>,
    pub task_means: BTreeMap<TaskTag, f64>,
}

impl DegradationReport {
    /// Mean delta over every task, in points.
    pub fn overall_mean(&self) -> f64 {
        let n = self.task_means.len() as f64;
        self.task_means.values().sum::<f64>() / n
    }
}

/// Compare per-task metrics of separately trained models against a unified
/// model. Deltas are reported in absolute points (x100).
pub fn degradation(
    separate: &BTreeMap<TaskTag, MetricSet>,
    unified: &BTreeMap<TaskTag, MetricSet>,
) -> Result<DegradationReport> {
    if separate.is_empty() {
        return Err(Error::EmptyInput("degradation needs at least one task".into()));
    }
    let sep_keys: Vec<TaskTag> = separate.keys().copied().collect();
    let uni_keys: Vec<TaskTag> = unified.keys().copied().collect();
    if sep_keys != uni_keys {
        return Err(Error::Invalid(format!(
            "task keys differ: separate {sep_keys:?} vs unified {uni_keys:?}"
        )));
    }

    let mut per_task = BTreeMap::new();
    let mut task_means = BTreeMap::new();
    for (&task, sep) in separate {
        let uni = &unified[&task];
        let mut rows = vec![
            MetricDelta {
                metric: MetricKind::Pr,
                separate: sep.pr,
                unified: uni.pr,
                delta_points: (uni.pr - sep.pr) * 100.0,
            },
            MetricDelta {
                metric: MetricKind::Npr,
                separate: sep.npr,
                unified: uni.npr,
                delta_points: (uni.npr - sep.npr) * 100.0,
            },
            MetricDelta {
                metric: MetricKind::Sr,
                separate: sep.sr,
                unified: uni.sr,
                delta_points: (uni.sr - sep.sr) * 100.0,
            },
        ];
        if let (Some(a), Some(b)) = (sep.re, uni.re) {
            rows.push(MetricDelta {
                metric: MetricKind::Re,
                separate: a,
                unified: b,
                delta_points: (b - a) * 100.0,
            });
        }
        if let (Some(a), Some(b)) = (sep.f_score, uni.f_score) {
            rows.push(MetricDelta {
                metric: MetricKind::FScore,
                separate: a,
                unified: b,
                delta_points: (b - a) * 100.0,
            });
        }
        let mean = rows.iter().map(|r| r.delta_points).sum::<f64>() / rows.len() as f64;
        per_task.insert(task, rows);
        task_means.insert(task, mean);
    }
    Ok(DegradationReport {
        per_task,
        task_means,
    })
}

/// All nonempty ordered task chains over {T, D, E} without repetition:
/// 3 singles + 6 ordered pairs + 6 ordered triples = 15 variants.
pub fn permutation_plan() -> Vec<Vec<TaskTag>> {
    let tags = TaskTag::ALL;
    let mut plan = Vec::with_capacity(15);
    for &a in &tags {
        plan.push(vec![a]);
    }
    for &a in &tags {
        for &b in &tags {
            if a != b {
                plan.push(vec![a, b]);
            }
        }
    }
    for &a in &tags {
        for &b in &tags {
            for &c in &tags {
                if a != b && a != c && b != c {
                    plan.push(vec![a, b, c]);
                }
            }
        }
    }
    plan
}

/// Run a serial-replay chain for every permutation variant.
pub fn run_permutations(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cfg.tasks.len() != 3 {
        return Err(Error::Invalid(
            "the permutation study needs exactly the three tasks".into(),
        ));
    }
    let plan = permutation_plan();
    plan.par_iter()
        .map(|order| {
            let mut train = cfg.train.clone();
            train.n_tasks = cfg.tasks.len();
            execute_run(
                Paradigm::SerialReplay,
                order,
                &cfg.tasks,
                &cfg.model,
                &train,
                cfg.replay_fraction,
            )
        })
        .collect()
}

/// Train/eval datasets shared by the paired separate-vs-parallel runs.
struct PreparedTasks {
    train_sets: Vec<TaskDataset>,
    eval_sets: Vec<(TaskTag, TaskDataset)>,
}

fn prepare_tasks(specs: &[TaskSpec]) -> Result<PreparedTasks> {
    let train_sets = specs
        .iter()
        .map(|s| gen_task(s, Split::Train))
        .collect::<Result<Vec<_>>>()?;
    let eval_sets = specs
        .iter()
        .map(|s| Ok((s.task, gen_task(s, Split::Eval)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedTasks {
        train_sets,
        eval_sets,
    })
}

/// Separate-vs-parallel degradation for one training seed: each task's
/// separately trained model against the single parallel-mixed model, all
/// sharing the seed.
pub fn separate_vs_parallel(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<DegradationReport> {
    let prepared = prepare_tasks(&cfg.tasks)?;
    let train = cfg.with_seed(seed);

    let mut separate = BTreeMap::new();
    for (data, (task, eval)) in prepared.train_sets.iter().zip(&prepared.eval_sets) {
        let params = train_separate(data, &cfg.model, &train)?;
        separate.insert(*task, evaluate_task(&params, eval)?);
    }

    let unified_params = train_parallel_mixed(&prepared.train_sets, &cfg.model, &train)?;
    let mut unified = BTreeMap::new();
    for (task, eval) in &prepared.eval_sets {
        unified.insert(*task, evaluate_task(&unified_params, eval)?);
    }

    degradation(&separate, &unified)
}

/// One row of the capacity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub depth: usize,
    /// Seed-averaged mean degradation delta, in points (negative = loss).
    pub mean_delta_points: f64,
    pub n_seeds: usize,
}

/// Capacity sweep result, rows in descending depth order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitySweepResult {
    pub rows: Vec<CapacityRow>,
}

/// Mean separate-vs-parallel degradation per branch depth, averaged over the
/// configured seed ensemble.
pub fn capacity_sweep(depths: &[usize], cfg: &ExperimentConfig) -> Result<CapacitySweepResult> {
    cfg.validate()?;
    if depths.is_empty() {
        return Err(Error::EmptyInput("capacity sweep needs depths".into()));
    }
    if depths.iter().any(|&d| d == 0 || d > 6) {
        return Err(Error::Invalid("branch depths must lie in 1..=6".into()));
    }
    let mut sorted: Vec<usize> = depths.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted.dedup();

    let rows = sorted
        .par_iter()
        .map(|&depth| {
            let mut sub = cfg.clone();
            sub.model.branch_depth = depth;
            let deltas: Vec<f64> = cfg
                .seeds
                .par_iter()
                .map(|&seed| separate_vs_parallel(&sub, seed).map(|r| r.overall_mean()))
                .collect::<Result<_>>()?;
            Ok(CapacityRow {
                depth,
                mean_delta_points: deltas.iter().sum::<f64>() / deltas.len() as f64,
                n_seeds: deltas.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CapacitySweepResult { rows })
}

/// 3x3 cross-task validation: entry (a, b) scores the model trained
/// separately on task a against task b's eval set (SR). The diagonal holds
/// the separate baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValMatrix {
    pub tasks: Vec<TaskTag>,
    /// sr[a][b] with indices following `tasks`.
    pub sr: Vec<Vec<f64>>,
}

impl CrossValMatrix {
    pub fn value(&self, train_task: TaskTag, eval_task: TaskTag) -> Option<f64> {
        let a = self.tasks.iter().position(|&t| t == train_task)?;
        let b = self.tasks.iter().position(|&t| t == eval_task)?;
        Some(self.sr[a][b])
    }

    /// Relative drop (percent) of transferring a's model onto b, against b's
    /// own baseline.
    pub fn relative_drop(&self, train_task: TaskTag, eval_task: TaskTag) -> Option<f64> {
        let own = self.value(eval_task, eval_task)?;
        let transferred = self.value(train_task, eval_task)?;
        if own == 0.0 {
            return None;
        }
        Some((own - transferred) / own * 100.0)
    }
}

/// Train one separate model per task at the config seed and evaluate every
/// model on every task.
pub fn cross_validate(cfg: &ExperimentConfig) -> Result<CrossValMatrix> {
    cfg.validate()?;
    let prepared = prepare_tasks(&cfg.tasks)?;
    let train = cfg.with_seed(cfg.train.seed);
    let models: Vec<_> = prepared
        .train_sets
        .par_iter()
        .map(|data| train_separate(data, &cfg.model, &train))
        .collect::<Result<_>>()?;

    let tasks: Vec<TaskTag> = cfg.tasks.iter().map(|s| s.task).collect();
    let mut sr = Vec::with_capacity(tasks.len());
    for params in &models {
        let mut row = Vec::with_capacity(tasks.len());
        for (_, eval) in &prepared.eval_sets {
            row.push(evaluate_task(params, eval)?.sr);
        }
        sr.push(row);
    }
    Ok(CrossValMatrix { tasks, sr })
}

/// Pairwise centroid distances; the names follow the paper-order tasks:
/// c1 = D<->E, c2 = T<->E, c3 = T<->D.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityDistanceReport {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Euclidean distances between the three modality centroids.
pub fn modality_distances(specs: &[TaskSpec]) -> Result<ModalityDistanceReport> {
    let mu = |tag: TaskTag| -> Result<&[f64]> {
        specs
            .iter()
            .find(|s| s.task == tag)
            .map(|s| s.modality_mean.as_slice())
            .ok_or_else(|| Error::Invalid(format!("no task spec for {tag}")))
    };
    let t = mu(TaskTag::T)?;
    let d = mu(TaskTag::D)?;
    let e = mu(TaskTag::E)?;
    if t.len() != d.len() || t.len() != e.len() {
        return Err(Error::Invalid("centroid dimensions differ".into()));
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    Ok(ModalityDistanceReport {
        c1: dist(d, e),
        c2: dist(t, e),
        c3: dist(t, d),
    })
}

/// Spearman rank correlation. Ties get average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Invalid(
            "spearman needs two equally long series of length >= 2".into(),
        ));
    }
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).expect("finite values"));
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && vals[order[j + 1]] == vals[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                ranks[idx] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean) * (a - mean);
        dy += (b - mean) * (b - mean);
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(Error::Invalid("spearman undefined for constant series".into()));
    }
    Ok(num / (dx * dy).sqrt())
}

// ---------------------------------------------------------------------------
// Report emission
//
// CSV schemas (stable column order, one header line):
//   degradation.csv   task,metric,separate,unified,delta_points
//                     (one extra `mean` row per task with empty value cells)
//   permutations.csv  variant,stage,task,pr,npr,sr,n_frames
//   capacity.csv      depth,mean_delta_points,n_seeds
//   crossval.csv      train_task,eval_task,sr
//   distances.csv     c1,c2,c3
// Plot data files are two-column whitespace-separated numeric text with `#`
// comment headers.
// ---------------------------------------------------------------------------

pub fn degradation_csv(report: &DegradationReport) -> String {
    let mut out = String::from("task,metric,separate,unified,delta_points\n");
    for (task, rows) in &report.per_task {
        for r in rows {
            let _ = writeln!(
                out,
                "{task},{},{},{},{}",
                r.metric, r.separate, r.unified, r.delta_points
            );
        }
        let _ = writeln!(out, "{task},mean,,,{}", report.task_means[task]);
    }
    out
}

pub fn parse_degradation_csv(text: &str) -> Result<DegradationReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut per_task: BTreeMap<TaskTag, Vec<MetricDelta>> = BTreeMap::new();
    let mut task_means = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let task: TaskTag = row[0].parse()?;
        let metric = &row[1];
        if metric == "mean" {
            task_means.insert(task, parse_f64(&row[4])?);
            continue;
        }
        let kind = match metric {
            "PR" => MetricKind::Pr,
            "NPR" => MetricKind::Npr,
            "SR" => MetricKind::Sr,
            "Re" => MetricKind::Re,
            "F" => MetricKind::FScore,
            other => return Err(Error::Invalid(format!("unknown metric {other:?}"))),
        };
        per_task.entry(task).or_default().push(MetricDelta {
            metric: kind,
            separate: parse_f64(&row[2])?,
            unified: parse_f64(&row[3])?,
            delta_points: parse_f64(&row[4])?,
        });
    }
    Ok(DegradationReport {
        per_task,
        task_means,
    })
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Invalid(format!("bad float {s:?}")))
}

pub fn permutations_csv(records: &[RunRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no permutation records".into()));
    }
    let mut out = String::from("variant,stage,task,pr,npr,sr,n_frames\n");
    for rec in records {
        for (stage_idx, stage) in rec.stages.iter().enumerate() {
            for (task, m) in &stage.metrics {
                let _ = writeln!(
                    out,
                    "{},{},{task},{},{},{},{}",
                    rec.key(),
                    stage_idx,
                    m.pr,
                    m.npr,
                    m.sr,
                    m.n_frames
                );
            }
        }
    }
    Ok(out)
}

pub fn capacity_csv(result: &CapacitySweepResult) -> String {
    let mut out = String::from("depth,mean_delta_points,n_seeds\n");
    for row in &result.rows {
        let _ = writeln!(out, "{},{},{}", row.depth, row.mean_delta_points, row.n_seeds);
    }
    out
}

pub fn parse_capacity_csv(text: &str) -> Result<CapacitySweepResult> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        rows.push(CapacityRow {
            depth: row[0]
                .parse()
                .map_err(|_| Error::Invalid(format!("bad depth {:?}", &row[0])))?,
            mean_delta_points: parse_f64(&row[1])?,
            n_seeds: row[2]
                .parse()
                .map_err(|_| Error::Invalid(format!("bad n_seeds {:?}", &row[2])))?,
        });
    }
    Ok(CapacitySweepResult { rows })
}

pub fn crossval_csv(matrix: &CrossValMatrix) -> String {
    let mut out = String::from("train_task,eval_task,sr\n");
    for (a, row) in matrix.tasks.iter().zip(&matrix.sr) {
        for (b, v) in matrix.tasks.iter().zip(row) {
            let _ = writeln!(out, "{a},{b},{v}");
        }
    }
    out
}

pub fn distances_csv(report: &ModalityDistanceReport) -> String {
    format!("c1,c2,c3\n{},{},{}\n", report.c1, report.c2, report.c3)
}

pub fn parse_distances_csv(text: &str) -> Result<ModalityDistanceReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let row = reader
        .records()
        .next()
        .ok_or_else(|| Error::EmptyInput("distances CSV has no data row".into()))??;
    Ok(ModalityDistanceReport {
        c1: parse_f64(&row[0])?,
        c2: parse_f64(&row[1])?,
        c3: parse_f64(&row[2])?,
    })
}

/// Two-column plot data with a comment header.
pub fn plot_data(header: &str, points: &[(f64, f64)]) -> String {
    let mut out = format!("# {header}\n");
    for (x, y) in points {
        let _ = writeln!(out, "{x} {y}");
    }
    out
}

/// Capacity plot: depth against seed-averaged degradation.
pub fn capacity_plot_data(result: &CapacitySweepResult) -> String {
    let points: Vec<(f64, f64)> = result
        .rows
        .iter()
        .map(|r| (r.depth as f64, r.mean_delta_points))
        .collect();
    plot_data("branch_depth mean_delta_points", &points)
}

/// Per-variant final-stage SR averaged over tasks, indexed by plan position.
pub fn permutation_plot_data(records: &[RunRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no permutation records".into()));
    }
    let mut out = String::from("# variant_index mean_final_sr (variants in plan order)\n");
    for (i, rec) in records.iter().enumerate() {
        let last = rec
            .stages
            .last()
            .ok_or_else(|| Error::Invalid("run record without stages".into()))?;
        let mean_sr =
            last.metrics.values().map(|m| m.sr).sum::<f64>() / last.metrics.len() as f64;
        let _ = writeln!(out, "{i} {mean_sr}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricSet;

    fn reported(pr: f64, npr: f64, sr: f64) -> MetricSet {
        MetricSet::from_reported(pr, npr, sr).unwrap()
    }

    #[test]
    fn degradation_reference_rows() {
        // published-table anchor: PR 0.645->0.609, NPR 0.614->0.576,
        // SR 0.519->0.494 gives deltas (-3.6, -3.8, -2.5) and mean -3.30
        let mut separate = BTreeMap::new();
        let mut unified = BTreeMap::new();
        separate.insert(TaskTag::T, reported(0.645, 0.614, 0.519));
        unified.insert(TaskTag::T, reported(0.609, 0.576, 0.494));
        let report = degradation(&separate, &unified).unwrap();
        let rows = &report.per_task[&TaskTag::T];
        assert!((rows[0].delta_points - (-3.6)).abs() < 1e-9);
        assert!((rows[1].delta_points - (-3.8)).abs() < 1e-9);
        assert!((rows[2].delta_points - (-2.5)).abs() < 1e-9);
        assert!((report.task_means[&TaskTag::T] - (-3.30)).abs() < 1e-9);
    }

    #[test]
    fn degradation_identity_is_zero() {
        let mut maps = BTreeMap::new();
        maps.insert(TaskTag::D, reported(0.4, 0.5, 0.6));
        let report = degradation(&maps, &maps).unwrap();
        assert_eq!(report.task_means[&TaskTag::D], 0.0);
        assert!(report.per_task[&TaskTag::D]
            .iter()
            .all(|r| r.delta_points == 0.0));
    }

    #[test]
    fn degradation_matches_subtraction_and_antisymmetry() {
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        a.insert(TaskTag::E, reported(0.81, 0.43, 0.27));
        b.insert(TaskTag::E, reported(0.64, 0.52, 0.31));
        let fwd = degradation(&a, &b).unwrap();
        let bwd = degradation(&b, &a).unwrap();
        for (x, y) in fwd.per_task[&TaskTag::E]
            .iter()
            .zip(&bwd.per_task[&TaskTag::E])
        {
            assert!((x.delta_points - (x.unified - x.separate) * 100.0).abs() < 1e-12);
            assert_eq!(x.delta_points, -y.delta_points);
        }
    }

    #[test]
    fn degradation_rejects_key_mismatch() {
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        a.insert(TaskTag::T, reported(0.5, 0.5, 0.5));
        b.insert(TaskTag::D, reported(0.5, 0.5, 0.5));
        assert!(degradation(&a, &b).is_err());
    }

    #[test]
    fn plan_has_fifteen_unique_variants() {
        let plan = permutation_plan();
        assert_eq!(plan.len(), 15);
        let keys: std::collections::BTreeSet<String> = plan
            .iter()
            .map(|order| {
                order
                    .iter()
                    .map(|t| t.as_str())
                    .collect::<Vec<_>>()
                    .join("+")
            })
            .collect();
        assert_eq!(keys.len(), 15);
        assert_eq!(plan.iter().filter(|p| p.len() == 1).count(), 3);
        assert_eq!(plan.iter().filter(|p| p.len() == 2).count(), 6);
        assert_eq!(plan.iter().filter(|p| p.len() == 3).count(), 6);
        for order in &plan {
            let unique: std::collections::BTreeSet<_> = order.iter().collect();
            assert_eq!(unique.len(), order.len());
        }
    }

    #[test]
    fn modality_distances_defaults() {
        let report = modality_distances(&default_task_specs()).unwrap();
        assert_eq!((report.c1, report.c2, report.c3), (1.0, 2.0, 3.0));
        // (c3+c2) > (c3+c1) > (c2+c1): 5 > 4 > 3
        assert!(report.c3 + report.c2 > report.c3 + report.c1);
        assert!(report.c3 + report.c1 > report.c2 + report.c1);
    }

    #[test]
    fn modality_distances_coincident_is_zero() {
        let mut specs = default_task_specs();
        for s in &mut specs {
            s.modality_mean = vec![0.5; crate::taskgen::M_DIM];
        }
        let report = modality_distances(&specs).unwrap();
        assert_eq!((report.c1, report.c2, report.c3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn spearman_basics() {
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!((rho + 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn degradation_csv_roundtrip() {
        let mut separate = BTreeMap::new();
        let mut unified = BTreeMap::new();
        separate.insert(TaskTag::T, reported(0.645, 0.614, 0.519));
        separate.insert(TaskTag::D, reported(0.52, 0.61, 0.43));
        unified.insert(TaskTag::T, reported(0.609, 0.576, 0.494));
        unified.insert(TaskTag::D, reported(0.50, 0.59, 0.42));
        let report = degradation(&separate, &unified).unwrap();
        let text = degradation_csv(&report);
        let parsed = parse_degradation_csv(&text).unwrap();
        assert_eq!(parsed, report);
        // byte-stable emission
        assert_eq!(degradation_csv(&parsed), text);
    }

    #[test]
    fn distances_csv_roundtrip() {
        let report = ModalityDistanceReport {
            c1: 1.0,
            c2: 2.0,
            c3: 3.0,
        };
        let text = distances_csv(&report);
        assert_eq!(text, "c1,c2,c3\n1,2,3\n");
        let parsed = parse_distances_csv(&text).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn capacity_csv_roundtrip() {
        let result = CapacitySweepResult {
            rows: vec![
                CapacityRow {
                    depth: 6,
                    mean_delta_points: -1.25,
                    n_seeds: 10,
                },
                CapacityRow {
                    depth: 3,
                    mean_delta_points: -2.5,
                    n_seeds: 10,
                },
            ],
        };
        let text = capacity_csv(&result);
        let parsed = parse_capacity_csv(&text).unwrap();
        assert_eq!(parsed, result);
    }
}
