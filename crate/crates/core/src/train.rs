//! Training paradigms over synthetic multi-modal tasks.
//!
//! Four ways to fit the same model family:
//!
//! - `train_separate`: one model per task;
//! - `train_parallel_mixed`: a single stage over the pooled mixture of all
//!   tasks, with the step budget scaled by the task count so the total
//!   gradient-step budget matches a full serial chain;
//! - `train_serial_naive`: one stage per task in order, each stage training
//!   on the new task only (forgets earlier tasks);
//! - `train_serial_replay`: one stage per task, each stage training on the
//!   mixture of the new task and the retained pools of all earlier tasks.
//!
//! With a single task and equal budgets all four collapse to the same
//! parameter trajectory bit for bit: they share the init stream, the sampler
//! stream, and the optimizer.

use crate::dataset::TaskTag;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_sequence, FrameAnnotation, FramePrediction, MetricSet, Protocol};
use crate::model::{
    backward, forward, unsquash, ModelConfig, ModelParams, SgdOptimizer, TrainExample,
};
use crate::rng::Rng;
use crate::taskgen::{gen_task, Split, TaskDataset, TaskSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

// Stream tags under the training seed.
const STREAM_INIT: u64 = 101;
const STREAM_SAMPLER: u64 = 102;
const STREAM_REPLAY: u64 = 103;

/// Optimization schedule, shared by every paradigm so comparisons are
/// controlled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps_per_stage: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub n_tasks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps_per_stage: 2000,
            batch_size: 32,
            lr: 0.01,
            momentum: 0.9,
            seed: 1,
            n_tasks: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_stage == 0 || self.batch_size == 0 || self.n_tasks == 0 {
            return Err(Error::Invalid(
                "steps_per_stage, batch_size, and n_tasks must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Invalid("lr must be positive".into()));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Invalid("momentum must lie in [0,1)".into()));
        }
        Ok(())
    }
}

/// Uniform-with-replacement batches over the pooled samples of one or more
/// datasets. Each draw picks a pooled index uniformly, so per-batch task
/// counts follow the pool-size proportions up to binomial noise.
pub struct MixBatchSampler<'a> {
    datasets: &'a [TaskDataset],
    /// pooled index -> (dataset index, sample index)
    index: Vec<(usize, usize)>,
    batch_size: usize,
    rng: Rng,
}

impl<'a> MixBatchSampler<'a> {
    pub fn new(datasets: &'a [TaskDataset], batch_size: usize, seed: u64) -> Result<Self> {
        if datasets.is_empty() || datasets.iter().all(|d| d.is_empty()) {
            return Err(Error::EmptyInput("sampler needs nonempty datasets".into()));
        }
        if batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        let mut index = Vec::new();
        for (di, d) in datasets.iter().enumerate() {
            for si in 0..d.len() {
                index.push((di, si));
            }
        }
        Ok(MixBatchSampler {
            datasets,
            index,
            batch_size,
            rng: Rng::new(seed),
        })
    }

    /// Draw the next batch as (task, dataset index, sample index) triples.
    pub fn next_batch(&mut self) -> Vec<(TaskTag, usize, usize)> {
        (0..self.batch_size)
            .map(|_| {
                let (di, si) = self.index[self.rng.next_index(self.index.len())];
                (self.datasets[di].task, di, si)
            })
            .collect()
    }
}

/// Retained pools of previously seen tasks.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    pools: BTreeMap<TaskTag, TaskDataset>,
    replay_fraction: f64,
}

impl ReplayBuffer {
    pub fn new(replay_fraction: f64) -> Result<Self> {
        if !(replay_fraction.is_finite() && 0.0 < replay_fraction && replay_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "replay_fraction must lie in (0,1], got {replay_fraction}"
            )));
        }
        Ok(ReplayBuffer {
            pools: BTreeMap::new(),
            replay_fraction,
        })
    }

    pub fn replay_fraction(&self) -> f64 {
        self.replay_fraction
    }

    /// Retain a fraction of a finished task's training data. Sampling is
    /// without replacement from a dedicated stream; at fraction 1.0 the whole
    /// set is kept.
    pub fn retain(&mut self, data: &TaskDataset, rng: &mut Rng) -> Result<()> {
        if self.pools.contains_key(&data.task) {
            return Err(Error::Invalid(format!(
                "task {} already retained",
                data.task
            )));
        }
        let keep = ((data.len() as f64 * self.replay_fraction).round() as usize)
            .clamp(1, data.len());
        let pool = if keep == data.len() {
            data.clone()
        } else {
            let mut indices = rng.sample_indices(data.len(), keep);
            indices.sort_unstable();
            data.subset(&indices)
        };
        self.pools.insert(data.task, pool);
        Ok(())
    }

    pub fn pools(&self) -> impl Iterator<Item = &TaskDataset> {
        self.pools.values()
    }

    pub fn tasks(&self) -> Vec<TaskTag> {
        self.pools.keys().copied().collect()
    }
}

/// Ordered parameter snapshots from a serial run; snapshot `i` was
/// initialized from snapshot `i - 1`.
#[derive(Clone, Debug)]
pub struct CheckpointChain {
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    /// Tasks seen up to and including this stage, in training order.
    pub order_prefix: Vec<TaskTag>,
    pub params: ModelParams,
}

impl CheckpointChain {
    pub fn final_params(&self) -> &ModelParams {
        &self.checkpoints.last().expect("chains are nonempty").params
    }
}

fn pre_squash_targets(data: &TaskDataset) -> Vec<[f64; 4]> {
    (0..data.len()).map(|i| unsquash(data.target(i))).collect()
}

/// Run `steps` optimizer steps over the mixture of `datasets`.
///
/// `stage_idx` selects the sampler substream, so every stage of a serial
/// chain draws fresh batches while stage 0 coincides across paradigms.
fn run_stage(
    params: &mut ModelParams,
    datasets: &[TaskDataset],
    cfg: &TrainConfig,
    steps: usize,
    stage_idx: u64,
) -> Result<()> {
    let targets: Vec<Vec<[f64; 4]>> = datasets.iter().map(pre_squash_targets).collect();
    let sampler_seed = crate::rng::derive_seed(
        crate::rng::derive_seed(cfg.seed, STREAM_SAMPLER),
        stage_idx,
    );
    let mut sampler = MixBatchSampler::new(datasets, cfg.batch_size, sampler_seed)?;
    let mut opt = SgdOptimizer::new(cfg.lr, cfg.momentum);
    for _ in 0..steps {
        let picks = sampler.next_batch();
        let batch: Vec<TrainExample<'_>> = picks
            .iter()
            .map(|&(_, di, si)| TrainExample {
                r: datasets[di].r(si),
                m: datasets[di].m(si),
                target: targets[di][si],
            })
            .collect();
        let (_, grads) = backward(params, &batch)?;
        opt.step(params, &grads)?;
    }
    Ok(())
}

fn init_params(model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<ModelParams> {
    model_cfg.validate()?;
    cfg.validate()?;
    let mut rng = Rng::substream(cfg.seed, &[STREAM_INIT]);
    Ok(ModelParams::init(model_cfg, &mut rng))
}

/// Fit one task in isolation.
pub fn train_separate(
    data: &TaskDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    let mut params = init_params(model_cfg, cfg)?;
    run_stage(
        &mut params,
        std::slice::from_ref(data),
        cfg,
        cfg.steps_per_stage,
        0,
    )?;
    Ok(params)
}

/// One stage over the disordered mixture of all tasks. The budget is
/// `steps_per_stage * n` so the total step count matches a full serial chain.
pub fn train_parallel_mixed(
    datasets: &[TaskDataset],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput("parallel training needs tasks".into()));
    }
    let mut params = init_params(model_cfg, cfg)?;
    run_stage(
        &mut params,
        datasets,
        cfg,
        cfg.steps_per_stage * datasets.len(),
        0,
    )?;
    Ok(params)
}

fn check_order(datasets: &[TaskDataset]) -> Result<()> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput("serial training needs tasks".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for d in datasets {
        if !seen.insert(d.task) {
            return Err(Error::Invalid(format!(
                "task {} repeats in the training order",
                d.task
            )));
        }
    }
    Ok(())
}

/// Serial unification with replay: stage `i` starts from the previous
/// checkpoint and trains on the mixture of task `i` and the retained pools
/// of tasks `1..i`.
pub fn train_serial_replay(
    order: &[TaskDataset],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    replay_fraction: f64,
) -> Result<CheckpointChain> {
    check_order(order)?;
    let mut params = init_params(model_cfg, cfg)?;
    let mut buffer = ReplayBuffer::new(replay_fraction)?;
    let mut checkpoints = Vec::with_capacity(order.len());
    let mut prefix = Vec::new();

    for (i, data) in order.iter().enumerate() {
        let mut stage_sets: Vec<TaskDataset> = buffer.pools().cloned().collect();
        stage_sets.push(data.clone());
        run_stage(&mut params, &stage_sets, cfg, cfg.steps_per_stage, i as u64)?;

        let mut replay_rng =
            Rng::substream(cfg.seed, &[STREAM_REPLAY, i as u64, data.task as u64]);
        buffer.retain(data, &mut replay_rng)?;

        prefix.push(data.task);
        checkpoints.push(Checkpoint {
            order_prefix: prefix.clone(),
            params: params.clone(),
        });
    }
    Ok(CheckpointChain { checkpoints })
}

/// Serial training without replay: stage `i` sees task `i` only.
pub fn train_serial_naive(
    order: &[TaskDataset],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<CheckpointChain> {
    check_order(order)?;
    let mut params = init_params(model_cfg, cfg)?;
    let mut checkpoints = Vec::with_capacity(order.len());
    let mut prefix = Vec::new();
    for (i, data) in order.iter().enumerate() {
        run_stage(
            &mut params,
            std::slice::from_ref(data),
            cfg,
            cfg.steps_per_stage,
            i as u64,
        )?;
        prefix.push(data.task);
        checkpoints.push(Checkpoint {
            order_prefix: prefix.clone(),
            params: params.clone(),
        });
    }
    Ok(CheckpointChain { checkpoints })
}

/// Score a parameter snapshot on one task's eval set with the short-term
/// protocol (confident predictions against always-visible targets).
pub fn evaluate_task(params: &ModelParams, eval: &TaskDataset) -> Result<MetricSet> {
    if eval.is_empty() {
        return Err(Error::NoEvaluableFrames);
    }
    let mut preds = Vec::with_capacity(eval.len());
    let mut gts = Vec::with_capacity(eval.len());
    for i in 0..eval.len() {
        let b = forward(params, eval.r(i), eval.m(i));
        preds.push(FramePrediction::new(Some(b), 1.0)?);
        gts.push(FrameAnnotation::visible(*eval.target(i)));
    }
    evaluate_sequence(&preds, &gts, Protocol::ShortTerm)
}

/// Mean IoU of a snapshot's predictions against one task's eval targets.
pub fn mean_iou(params: &ModelParams, eval: &TaskDataset) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::NoEvaluableFrames);
    }
    let total: f64 = (0..eval.len())
        .map(|i| {
            let b = forward(params, eval.r(i), eval.m(i));
            crate::metrics::iou(&b, eval.target(i))
        })
        .sum();
    Ok(total / eval.len() as f64)
}

/// Paradigm selector for run records and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    Separate,
    Parallel,
    SerialNaive,
    SerialReplay,
}

impl std::str::FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separate" => Ok(Paradigm::Separate),
            "parallel" => Ok(Paradigm::Parallel),
            "serial-naive" => Ok(Paradigm::SerialNaive),
            "serial-replay" => Ok(Paradigm::SerialReplay),
            other => Err(Error::Invalid(format!("unknown paradigm {other:?}"))),
        }
    }
}

/// One stage of a finished run: the tasks seen so far, the parameter
/// snapshot, and that snapshot's score on every configured task.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub prefix: Vec<TaskTag>,
    pub params: Vec<f64>,
    pub metrics: BTreeMap<TaskTag, MetricSet>,
}

/// Full provenance of one training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub paradigm: Paradigm,
    pub order: Vec<TaskTag>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tasks: Vec<TaskSpec>,
    pub replay_fraction: Option<f64>,
    pub param_count: usize,
    pub stages: Vec<StageRecord>,
    /// Measured, hardware-dependent; the one field exempt from byte-for-byte
    /// reproducibility.
    pub wall_time_secs: f64,
}

impl RunRecord {
    /// Order string, e.g. "T+D+E".
    pub fn key(&self) -> String {
        let parts: Vec<&str> = self.order.iter().map(|t| t.as_str()).collect();
        parts.join("+")
    }
}

/// Run one paradigm end to end: generate data for the ordered tasks, train,
/// and score every stage checkpoint on every configured task's eval set.
pub fn execute_run(
    paradigm: Paradigm,
    order: &[TaskTag],
    specs: &[TaskSpec],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    replay_fraction: f64,
) -> Result<RunRecord> {
    let start = Instant::now();
    let spec_of = |tag: TaskTag| -> Result<&TaskSpec> {
        specs
            .iter()
            .find(|s| s.task == tag)
            .ok_or_else(|| Error::Invalid(format!("no task spec for {tag}")))
    };
    if order.is_empty() {
        return Err(Error::EmptyInput("run needs at least one task".into()));
    }

    let train_sets: Vec<TaskDataset> = order
        .iter()
        .map(|&t| gen_task(spec_of(t)?, Split::Train))
        .collect::<Result<_>>()?;
    let eval_sets: Vec<(TaskTag, TaskDataset)> = specs
        .iter()
        .map(|s| Ok((s.task, gen_task(s, Split::Eval)?)))
        .collect::<Result<_>>()?;

    let score_all = |params: &ModelParams| -> Result<BTreeMap<TaskTag, MetricSet>> {
        eval_sets
            .iter()
            .map(|(t, e)| Ok((*t, evaluate_task(params, e)?)))
            .collect()
    };

    let (stages, replay) = match paradigm {
        Paradigm::Separate => {
            if order.len() != 1 {
                return Err(Error::Invalid(
                    "separate training takes exactly one task".into(),
                ));
            }
            let params = train_separate(&train_sets[0], model_cfg, cfg)?;
            (
                vec![StageRecord {
                    prefix: order.to_vec(),
                    params: params.flatten(),
                    metrics: score_all(&params)?,
                }],
                None,
            )
        }
        Paradigm::Parallel => {
            let params = train_parallel_mixed(&train_sets, model_cfg, cfg)?;
            (
                vec![StageRecord {
                    prefix: order.to_vec(),
                    params: params.flatten(),
                    metrics: score_all(&params)?,
                }],
                None,
            )
        }
        Paradigm::SerialNaive => {
            let chain = train_serial_naive(&train_sets, model_cfg, cfg)?;
            (chain_to_stages(&chain, &score_all)?, None)
        }
        Paradigm::SerialReplay => {
            let chain = train_serial_replay(&train_sets, model_cfg, cfg, replay_fraction)?;
            (chain_to_stages(&chain, &score_all)?, Some(replay_fraction))
        }
    };

    let param_count = ModelParams::zeros(model_cfg).param_count();
    Ok(RunRecord {
        paradigm,
        order: order.to_vec(),
        model: *model_cfg,
        train: cfg.clone(),
        tasks: specs.to_vec(),
        replay_fraction: replay,
        param_count,
        stages,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn chain_to_stages(
    chain: &CheckpointChain,
    score_all: &dyn Fn(&ModelParams) -> Result<BTreeMap<TaskTag, MetricSet>>,
) -> Result<Vec<StageRecord>> {
    chain
        .checkpoints
        .iter()
        .map(|c| {
            Ok(StageRecord {
                prefix: c.order_prefix.clone(),
                params: c.params.flatten(),
                metrics: score_all(&c.params)?,
            })
        })
        .collect()
}
