//! Benchmark assembly: rank sequences by reference-tracker difficulty and
//! keep the hardest fixed-size slice per task.
//!
//! Reference-tracker scores arrive as CSV (`sequence_id,task,source,tracker,
//! mean_iou`, one row per sequence/tracker pair); the models that produced
//! them are outside this crate. Difficulty is the unweighted mean IoU across
//! trackers, lower meaning harder. Ties break lexicographically by id so the
//! selection is identical across runs and platforms.

use crate::dataset::{save_manifest, BenchmarkManifest, SequenceManifest, TaskTag};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Per-sequence mean IoU of each reference tracker.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceScore {
    pub sequence_id: String,
    pub task: TaskTag,
    pub source: String,
    pub per_tracker_mean_iou: BTreeMap<String, f64>,
}

/// Difficulty of a sequence: mean IoU over reference trackers (lower is
/// harder).
pub fn difficulty(score: &SequenceScore) -> Result<f64> {
    if score.per_tracker_mean_iou.is_empty() {
        return Err(Error::EmptyInput(format!(
            "sequence {} has no tracker scores",
            score.sequence_id
        )));
    }
    Ok(score.per_tracker_mean_iou.values().sum::<f64>()
        / score.per_tracker_mean_iou.len() as f64)
}

/// Tie-breaking rule; selection is deterministic under every variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    LexicographicById,
}

/// Assembly parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssemblyConfig {
    /// Sequences selected per task.
    pub per_task_quota: usize,
    /// Optional per-source split (e.g. two origin benchmarks contributing
    /// half a task's quota each). For a task whose sources appear here, every
    /// source of that task must be listed and the listed quotas must sum to
    /// `per_task_quota`.
    pub source_quotas: Option<BTreeMap<String, usize>>,
    pub tie_break: TieBreak,
    /// Name recorded in the emitted manifest.
    pub name: String,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            per_task_quota: 100,
            source_quotas: None,
            tie_break: TieBreak::LexicographicById,
            name: "unified-benchmark".to_string(),
        }
    }
}

impl AssemblyConfig {
    fn validate(&self) -> Result<()> {
        if self.per_task_quota == 0 {
            return Err(Error::Invalid("per_task_quota must be >= 1".into()));
        }
        if let Some(quotas) = &self.source_quotas {
            if quotas.values().any(|&q| q == 0) {
                return Err(Error::Invalid("source quotas must be >= 1".into()));
            }
        }
        Ok(())
    }
}

struct Ranked<'a> {
    score: &'a SequenceScore,
    difficulty: f64,
}

fn rank(pool: &mut Vec<Ranked<'_>>) {
    pool.sort_by(|a, b| {
        a.difficulty
            .partial_cmp(&b.difficulty)
            .expect("difficulties are finite")
            .then_with(|| a.score.sequence_id.cmp(&b.score.sequence_id))
    });
}

/// Select the hardest sequences per task (and per source when configured)
/// and build the unified manifest.
///
/// Manifest entries carry placeholder frame counts and derived annotation
/// paths; [`rank_and_select_with_pool`] joins real sequence metadata instead.
pub fn rank_and_select(
    scores: &[SequenceScore],
    cfg: &AssemblyConfig,
) -> Result<BenchmarkManifest> {
    let selected = select(scores, cfg)?;
    let sequences = selected
        .iter()
        .map(|r| SequenceManifest {
            id: r.score.sequence_id.clone(),
            task: r.score.task,
            frame_count: 1,
            annotation_path: format!("{}/{}.txt", r.score.source, r.score.sequence_id),
            source: r.score.source.clone(),
        })
        .collect();
    Ok(BenchmarkManifest {
        name: cfg.name.clone(),
        sequences,
    })
}

/// Like [`rank_and_select`] but resolves frame counts and annotation paths
/// from a metadata pool keyed by sequence id.
pub fn rank_and_select_with_pool(
    scores: &[SequenceScore],
    cfg: &AssemblyConfig,
    pool: &[SequenceManifest],
) -> Result<BenchmarkManifest> {
    let by_id: BTreeMap<&str, &SequenceManifest> =
        pool.iter().map(|m| (m.id.as_str(), m)).collect();
    let selected = select(scores, cfg)?;
    let mut sequences = Vec::with_capacity(selected.len());
    for r in &selected {
        let meta = by_id.get(r.score.sequence_id.as_str()).ok_or_else(|| {
            Error::Invalid(format!(
                "selected sequence {} missing from metadata pool",
                r.score.sequence_id
            ))
        })?;
        sequences.push((*meta).clone());
    }
    Ok(BenchmarkManifest {
        name: cfg.name.clone(),
        sequences,
    })
}

fn select<'a>(scores: &'a [SequenceScore], cfg: &AssemblyConfig) -> Result<Vec<Ranked<'a>>> {
    cfg.validate()?;

    let mut duplicate_check = std::collections::BTreeSet::new();
    for s in scores {
        if !duplicate_check.insert(s.sequence_id.as_str()) {
            return Err(Error::Invalid(format!(
                "duplicate sequence id {:?} in score table",
                s.sequence_id
            )));
        }
    }

    let mut by_task: BTreeMap<TaskTag, Vec<Ranked<'a>>> = BTreeMap::new();
    for s in scores {
        by_task.entry(s.task).or_default().push(Ranked {
            score: s,
            difficulty: difficulty(s)?,
        });
    }

    let mut selected: Vec<Ranked<'a>> = Vec::new();
    // paper task order: T, D, E
    for task in TaskTag::ALL {
        let Some(pool) = by_task.remove(&task) else { continue };

        let listed = cfg.source_quotas.as_ref().map(|quotas| {
            pool.iter()
                .any(|r| quotas.contains_key(r.score.source.as_str()))
        });
        if listed == Some(true) {
            let quotas = cfg.source_quotas.as_ref().expect("checked above");
            let mut by_source: BTreeMap<&str, Vec<Ranked<'a>>> = BTreeMap::new();
            for r in pool {
                by_source.entry(r.score.source.as_str()).or_default().push(r);
            }
            let mut quota_sum = 0;
            for source in by_source.keys() {
                match quotas.get(*source) {
                    Some(q) => quota_sum += q,
                    None => {
                        return Err(Error::Invalid(format!(
                            "task {task}: source {source:?} has no quota while others do"
                        )))
                    }
                }
            }
            if quota_sum != cfg.per_task_quota {
                return Err(Error::Invalid(format!(
                    "task {task}: source quotas sum to {quota_sum}, expected {}",
                    cfg.per_task_quota
                )));
            }
            for (source, mut sub) in by_source {
                let quota = quotas[source];
                if sub.len() < quota {
                    return Err(Error::InsufficientSequences {
                        scope: format!("task {task} source {source}"),
                        quota,
                        available: sub.len(),
                    });
                }
                rank(&mut sub);
                sub.truncate(quota);
                selected.extend(sub);
            }
        } else {
            let mut sub = pool;
            if sub.len() < cfg.per_task_quota {
                return Err(Error::InsufficientSequences {
                    scope: format!("task {task}"),
                    quota: cfg.per_task_quota,
                    available: sub.len(),
                });
            }
            rank(&mut sub);
            sub.truncate(cfg.per_task_quota);
            selected.extend(sub);
        }
    }

    // output order: task, then difficulty ascending, then id
    selected.sort_by(|a, b| {
        a.score
            .task
            .cmp(&b.score.task)
            .then(
                a.difficulty
                    .partial_cmp(&b.difficulty)
                    .expect("difficulties are finite"),
            )
            .then_with(|| a.score.sequence_id.cmp(&b.score.sequence_id))
    });
    Ok(selected)
}

/// Write a manifest; an empty manifest is rejected.
pub fn emit_manifest(manifest: &BenchmarkManifest, path: &Path) -> Result<()> {
    if manifest.sequences.is_empty() {
        return Err(Error::EmptyInput("refusing to emit an empty manifest".into()));
    }
    save_manifest(manifest, path)
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    sequence_id: String,
    task: String,
    source: String,
    tracker: String,
    mean_iou: f64,
}

/// Load a score CSV, grouping tracker rows per sequence.
pub fn load_scores_csv(path: &Path) -> Result<Vec<SequenceScore>> {
    let text = std::fs::read_to_string(path)?;
    parse_scores_csv(&text, &path.display().to_string())
}

pub fn parse_scores_csv(text: &str, origin: &str) -> Result<Vec<SequenceScore>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    {
        let headers = reader.headers()?;
        let expected = ["sequence_id", "task", "source", "tracker", "mean_iou"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Invalid(format!(
                "{origin}: score CSV header must be {}",
                expected.join(",")
            )));
        }
    }

    let mut by_id: BTreeMap<String, SequenceScore> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let line = i + 2; // header is line 1
        let row = row?;
        let task: TaskTag = row.task.parse().map_err(|e: Error| {
            Error::Parse {
                origin: origin.to_string(),
                line,
                msg: e.to_string(),
            }
        })?;
        if !row.mean_iou.is_finite() || !(0.0..=1.0).contains(&row.mean_iou) {
            return Err(Error::Parse {
                origin: origin.to_string(),
                line,
                msg: format!("mean_iou must lie in [0,1], got {}", row.mean_iou),
            });
        }
        let entry = by_id
            .entry(row.sequence_id.clone())
            .or_insert_with(|| {
                order.push(row.sequence_id.clone());
                SequenceScore {
                    sequence_id: row.sequence_id.clone(),
                    task,
                    source: row.source.clone(),
                    per_tracker_mean_iou: BTreeMap::new(),
                }
            });
        if entry.task != task || entry.source != row.source {
            return Err(Error::Parse {
                origin: origin.to_string(),
                line,
                msg: format!(
                    "sequence {:?} listed with conflicting task/source",
                    row.sequence_id
                ),
            });
        }
        if entry
            .per_tracker_mean_iou
            .insert(row.tracker.clone(), row.mean_iou)
            .is_some()
        {
            return Err(Error::Parse {
                origin: origin.to_string(),
                line,
                msg: format!(
                    "duplicate tracker {:?} for sequence {:?}",
                    row.tracker, row.sequence_id
                ),
            });
        }
    }
    Ok(order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("id recorded on insert"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(id: &str, task: TaskTag, ious: &[(&str, f64)]) -> SequenceScore {
        SequenceScore {
            sequence_id: id.to_string(),
            task,
            source: "src".to_string(),
            per_tracker_mean_iou: ious
                .iter()
                .map(|(t, v)| (t.to_string(), *v))
                .collect(),
        }
    }

    #[test]
    fn difficulty_means_tracker_scores() {
        assert_eq!(
            difficulty(&score("a", TaskTag::T, &[("x", 0.2)])).unwrap(),
            0.2
        );
        assert!(
            (difficulty(&score("a", TaskTag::T, &[("x", 0.2), ("y", 0.4)])).unwrap() - 0.3)
                .abs()
                < 1e-15
        );
        assert!((difficulty(&score(
            "a",
            TaskTag::T,
            &[("x", 0.1), ("y", 0.2), ("z", 0.3)]
        ))
        .unwrap()
            - 0.2)
            .abs()
            < 1e-15);
        let empty = SequenceScore {
            sequence_id: "a".into(),
            task: TaskTag::T,
            source: "s".into(),
            per_tracker_mean_iou: BTreeMap::new(),
        };
        assert!(difficulty(&empty).is_err());
    }

    fn cfg(quota: usize) -> AssemblyConfig {
        AssemblyConfig {
            per_task_quota: quota,
            ..AssemblyConfig::default()
        }
    }

    #[test]
    fn selects_lowest_difficulty() {
        let scores = vec![
            score("a", TaskTag::T, &[("x", 0.5)]),
            score("b", TaskTag::T, &[("x", 0.2)]),
            score("c", TaskTag::T, &[("x", 0.1)]),
            score("d", TaskTag::T, &[("x", 0.4)]),
        ];
        let manifest = rank_and_select(&scores, &cfg(2)).unwrap();
        let ids: Vec<&str> = manifest.sequences.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["c", "b"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let scores = vec![
            score("b", TaskTag::T, &[("x", 0.3)]),
            score("a", TaskTag::T, &[("x", 0.3)]),
        ];
        let manifest = rank_and_select(&scores, &cfg(1)).unwrap();
        assert_eq!(manifest.sequences[0].id, "a");
    }

    #[test]
    fn insufficient_pool_names_task() {
        let scores = vec![score("a", TaskTag::D, &[("x", 0.3)])];
        let err = rank_and_select(&scores, &cfg(2)).unwrap_err();
        assert!(err.to_string().contains("task D"), "{err}");
    }

    #[test]
    fn source_quotas_split_a_task() {
        let mut scores = Vec::new();
        for i in 0..4 {
            let mut s = score(&format!("p{i}"), TaskTag::D, &[("x", 0.1 * i as f64)]);
            s.source = "alpha".into();
            scores.push(s);
        }
        for i in 0..4 {
            let mut s = score(&format!("q{i}"), TaskTag::D, &[("x", 0.1 * i as f64)]);
            s.source = "beta".into();
            scores.push(s);
        }
        let config = AssemblyConfig {
            per_task_quota: 4,
            source_quotas: Some(
                [("alpha".to_string(), 2), ("beta".to_string(), 2)]
                    .into_iter()
                    .collect(),
            ),
            ..AssemblyConfig::default()
        };
        let manifest = rank_and_select(&scores, &config).unwrap();
        // output order is (task, difficulty, id), interleaving the sources
        let ids: Vec<&str> = manifest.sequences.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["p0", "q0", "p1", "q1"]);
        assert_eq!(manifest.per_task_counts()[&TaskTag::D], 4);
    }

    #[test]
    fn source_quota_sum_must_match() {
        let mut a = score("a", TaskTag::D, &[("x", 0.1)]);
        a.source = "alpha".into();
        let config = AssemblyConfig {
            per_task_quota: 2,
            source_quotas: Some([("alpha".to_string(), 1)].into_iter().collect()),
            ..AssemblyConfig::default()
        };
        let err = rank_and_select(&[a], &config).unwrap_err();
        assert!(err.to_string().contains("sum"), "{err}");
    }

    #[test]
    fn scaling_scores_keeps_selection() {
        // argmin-set invariance under a common positive factor <= 1
        let base = vec![
            score("a", TaskTag::T, &[("x", 0.5), ("y", 0.7)]),
            score("b", TaskTag::T, &[("x", 0.2), ("y", 0.6)]),
            score("c", TaskTag::T, &[("x", 0.9), ("y", 0.1)]),
            score("d", TaskTag::T, &[("x", 0.4), ("y", 0.4)]),
        ];
        let picked = |scores: &[SequenceScore]| -> Vec<String> {
            rank_and_select(scores, &cfg(2))
                .unwrap()
                .sequences
                .iter()
                .map(|s| s.id.clone())
                .collect()
        };
        let reference = picked(&base);
        for factor in [0.25, 0.5, 0.99] {
            let scaled: Vec<SequenceScore> = base
                .iter()
                .map(|s| SequenceScore {
                    per_tracker_mean_iou: s
                        .per_tracker_mean_iou
                        .iter()
                        .map(|(k, v)| (k.clone(), v * factor))
                        .collect(),
                    ..s.clone()
                })
                .collect();
            assert_eq!(picked(&scaled), reference, "factor {factor}");
        }
    }

    #[test]
    fn csv_roundtrip_and_validation() {
        let text = "sequence_id,task,source,tracker,mean_iou\n\
                    s1,T,lash,tk1,0.5\n\
                    s1,T,lash,tk2,0.3\n\
                    s2,D,dep,tk1,0.9\n";
        let scores = parse_scores_csv(text, "mem").unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].per_tracker_mean_iou.len(), 2);
        assert!((difficulty(&scores[0]).unwrap() - 0.4).abs() < 1e-15);

        let bad = "sequence_id,task,source,tracker,mean_iou\ns1,T,l,tk,1.5\n";
        assert!(parse_scores_csv(bad, "mem").is_err());
        let dup = "sequence_id,task,source,tracker,mean_iou\n\
                   s1,T,l,tk,0.5\ns1,T,l,tk,0.6\n";
        assert!(parse_scores_csv(dup, "mem").is_err());
        let badhdr = "id,task,source,tracker,mean_iou\ns1,T,l,tk,0.5\n";
        assert!(parse_scores_csv(badhdr, "mem").is_err());
    }

    #[test]
    fn emit_rejects_empty() {
        let manifest = BenchmarkManifest {
            name: "x".into(),
            sequences: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_manifest(&manifest, &dir.path().join("m.json")).is_err());
    }
}
