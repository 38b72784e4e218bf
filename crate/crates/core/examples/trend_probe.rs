//! Development probe for the trend experiments. Prints per-seed numbers for
//! the forgetting, modality, capacity, and cross-validation trends so the
//! synthetic-world constants can be sanity-checked quickly.

use mmtlab_core::analysis::{
    capacity_sweep, cross_validate, separate_vs_parallel, spearman, ExperimentConfig,
};
use mmtlab_core::dataset::TaskTag;
use mmtlab_core::taskgen::{gen_task, Split};
use mmtlab_core::train::{
    evaluate_task, mean_iou, train_parallel_mixed, train_separate, train_serial_naive,
    train_serial_replay, TrainConfig,
};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let mut cfg = ExperimentConfig::default();
    if let Ok(steps) = std::env::var("STEPS") {
        cfg.train.steps_per_stage = steps.parse().unwrap();
    }
    if let Ok(lr) = std::env::var("LR") {
        cfg.train.lr = lr.parse().unwrap();
    }

    if which == "curve" {
        learning_curve(&cfg);
        return;
    }

    if which == "all" || which == "baseline" {
        baseline(&cfg);
    }
    if which == "all" || which == "forget" {
        forgetting(&cfg);
    }
    if which == "all" || which == "modality" {
        modality(&cfg);
    }
    if which == "all" || which == "xval" {
        crossval(&cfg);
    }
    if which == "all" || which == "capacity" {
        capacity(&cfg);
    }
}

fn learning_curve(cfg: &ExperimentConfig) {
    println!("== separate-training learning curve (task T, seed 1) ==");
    let spec = &cfg.tasks[0];
    let data = gen_task(spec, Split::Train).unwrap();
    let eval = gen_task(spec, Split::Eval).unwrap();
    for steps in [100, 200, 400, 600, 800, 1200, 1600, 2000, 3000, 4000] {
        let train = TrainConfig {
            steps_per_stage: steps,
            seed: 1,
            ..cfg.train.clone()
        };
        let params = train_separate(&data, &cfg.model, &train).unwrap();
        let miou = mean_iou(&params, &eval).unwrap();
        let sr = evaluate_task(&params, &eval).unwrap().sr;
        println!("  steps {steps:5}: mean_iou={miou:.4} sr={sr:.4}");
    }
}

fn baseline(cfg: &ExperimentConfig) {
    let start = Instant::now();
    println!("== separate baselines (seed 1) ==");
    let train = TrainConfig {
        seed: 1,
        ..cfg.train.clone()
    };
    for spec in &cfg.tasks {
        let data = gen_task(spec, Split::Train).unwrap();
        let eval = gen_task(spec, Split::Eval).unwrap();
        let params = train_separate(&data, &cfg.model, &train).unwrap();
        let m = evaluate_task(&params, &eval).unwrap();
        let miou = mean_iou(&params, &eval).unwrap();
        println!(
            "  task {}: mean_iou={miou:.4} pr={:.4} npr={:.4} sr={:.4}",
            spec.task, m.pr, m.npr, m.sr
        );
    }
    println!("  ({:.1?})", start.elapsed());
}

fn forgetting(cfg: &ExperimentConfig) {
    let start = Instant::now();
    println!("== forgetting trend: previous-task SR (order T,D,E; prev = T,D) ==");
    let order = [TaskTag::T, TaskTag::D, TaskTag::E];
    let train_sets: Vec<_> = order
        .iter()
        .map(|t| {
            let spec = cfg.tasks.iter().find(|s| s.task == *t).unwrap();
            gen_task(spec, Split::Train).unwrap()
        })
        .collect();
    let evals: Vec<_> = order
        .iter()
        .take(2)
        .map(|t| {
            let spec = cfg.tasks.iter().find(|s| s.task == *t).unwrap();
            (*t, gen_task(spec, Split::Eval).unwrap())
        })
        .collect();

    let rows: Vec<(u64, Vec<f64>, Vec<f64>, Vec<f64>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let train = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let per_task = |params: &mmtlab_core::model::ModelParams| -> Vec<f64> {
                evals
                    .iter()
                    .map(|(_, e)| evaluate_task(params, e).unwrap().sr)
                    .collect()
            };
            let par = train_parallel_mixed(&train_sets, &cfg.model, &train).unwrap();
            let naive = train_serial_naive(&train_sets, &cfg.model, &train).unwrap();
            let replay = train_serial_replay(&train_sets, &cfg.model, &train, 1.0).unwrap();
            (
                seed,
                per_task(replay.final_params()),
                per_task(&par),
                per_task(naive.final_params()),
            )
        })
        .collect();

    let mut wins_rp = 0;
    let mut wins_pn = 0;
    let (mut mr, mut mp, mut mn) = (0.0, 0.0, 0.0);
    for (seed, rv, pv, nv) in &rows {
        let r = rv.iter().sum::<f64>() / rv.len() as f64;
        let p = pv.iter().sum::<f64>() / pv.len() as f64;
        let n = nv.iter().sum::<f64>() / nv.len() as f64;
        println!(
            "  seed {seed}: replay={r:.4} (T {:.3} D {:.3}) parallel={p:.4} (T {:.3} D {:.3}) naive={n:.4}",
            rv[0], rv[1], pv[0], pv[1]
        );
        if r > p {
            wins_rp += 1;
        }
        if p > n {
            wins_pn += 1;
        }
        mr += r;
        mp += p;
        mn += n;
    }
    let k = rows.len() as f64;
    println!(
        "  means: replay={:.4} parallel={:.4} naive={:.4}; replay>parallel {}/{}, parallel>naive {}/{}  ({:.1?})",
        mr / k,
        mp / k,
        mn / k,
        wins_rp,
        rows.len(),
        wins_pn,
        rows.len(),
        start.elapsed()
    );
}

fn modality(cfg: &ExperimentConfig) {
    let start = Instant::now();
    println!("== modality trend: per-task degradation (want |T| > |D| > |E|) ==");
    let rows: Vec<(u64, f64, f64, f64)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let rep = separate_vs_parallel(cfg, seed).unwrap();
            (
                seed,
                rep.task_means[&TaskTag::T],
                rep.task_means[&TaskTag::D],
                rep.task_means[&TaskTag::E],
            )
        })
        .collect();
    let mut holds = 0;
    let (mut st, mut sd, mut se) = (0.0, 0.0, 0.0);
    for (seed, t, d, e) in &rows {
        let ok = (-t > -d) && (-d > -e);
        println!("  seed {seed}: dT={t:+.3} dD={d:+.3} dE={e:+.3}  {}", if ok { "ok" } else { "-" });
        if ok {
            holds += 1;
        }
        st += t;
        sd += d;
        se += e;
    }
    let k = rows.len() as f64;
    println!(
        "  means: dT={:+.3} dD={:+.3} dE={:+.3}; ordering holds {}/{}  ({:.1?})",
        st / k,
        sd / k,
        se / k,
        holds,
        rows.len(),
        start.elapsed()
    );
}

fn crossval(cfg: &ExperimentConfig) {
    let start = Instant::now();
    println!("== cross-validation drops (want D->T > E->T, T->D > E->D, T->E > D->E) ==");
    let mut holds = 0;
    for &seed in &cfg.seeds {
        let mut sub = cfg.clone();
        sub.train.seed = seed;
        let m = cross_validate(&sub).unwrap();
        let dt = m.relative_drop(TaskTag::D, TaskTag::T).unwrap();
        let et = m.relative_drop(TaskTag::E, TaskTag::T).unwrap();
        let td = m.relative_drop(TaskTag::T, TaskTag::D).unwrap();
        let ed = m.relative_drop(TaskTag::E, TaskTag::D).unwrap();
        let te = m.relative_drop(TaskTag::T, TaskTag::E).unwrap();
        let de = m.relative_drop(TaskTag::D, TaskTag::E).unwrap();
        let ok = dt > et && td > ed && te > de;
        println!(
            "  seed {seed}: D->T {dt:.1}% E->T {et:.1}% | T->D {td:.1}% E->D {ed:.1}% | T->E {te:.1}% D->E {de:.1}%  {}",
            if ok { "ok" } else { "-" }
        );
        if ok {
            holds += 1;
        }
    }
    println!("  ordering holds {}/{}  ({:.1?})", holds, cfg.seeds.len(), start.elapsed());
}

fn capacity(cfg: &ExperimentConfig) {
    let start = Instant::now();
    println!("== capacity trend: seed-averaged degradation by branch depth ==");
    let result = capacity_sweep(&cfg.depths, cfg).unwrap();
    for row in &result.rows {
        println!("  depth {}: mean delta {:+.3} pts", row.depth, row.mean_delta_points);
    }
    let depths: Vec<f64> = result.rows.iter().map(|r| r.depth as f64).collect();
    let deltas: Vec<f64> = result.rows.iter().map(|r| r.mean_delta_points).collect();
    let rho = spearman(&depths, &deltas).unwrap();
    println!("  spearman(depth, delta) = {rho:.3}  ({:.1?})", start.elapsed());
}
