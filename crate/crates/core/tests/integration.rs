mod common;

use std::collections::BTreeMap;
use std::fs;
use std::sync::Arc;

use enomad::connectome::synthetic_connectome;
use enomad::harness::{
    self, compare_report, mean_std, read_records, run_sweep, BudgetConfig, HarnessConfig,
    TrainOptions,
};
use enomad::pipelines::train;
use enomad::{Budget, Connectome, PipelineKind, Task, TrainConfig, Trainer};

fn net() -> Arc<Connectome> {
    Arc::new(synthetic_connectome(5, 80, 600).unwrap())
}

fn quick() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.evo.population_size = 8;
    cfg.env.episode_steps = 80;
    cfg.mads.max_evaluations = Some(20);
    cfg.es.pop_pairs = 4;
    cfg
}

#[test]
fn call_count_audits_per_pipeline() {
    let conn = net();
    let cfg = quick();
    let n = cfg.evo.population_size as u64;
    let gens = 6;
    for kind in PipelineKind::ALL {
        let mut t = Trainer::new(kind, cfg.clone(), conn.clone(), 9).unwrap();
        let mut before = t.audit();
        for g in 0..gens {
            let evals_before = t.evaluator().evaluations();
            t.step().unwrap();
            let a = t.audit();
            let used = t.evaluator().evaluations() - evals_before;
            let mutated = a.mutated_coordinates - before.mutated_coordinates;
            let mads_evals = a.mads_evaluations - before.mads_evaluations;
            let direct = a.direct_evaluations - before.direct_evaluations;
            assert_eq!(used, mads_evals + direct, "{kind:?}: every evaluation is accounted for");
            match kind {
                PipelineKind::Renomad => {
                    assert_eq!(a.mutate_calls, 0);
                    assert_eq!(a.mads_calls - before.mads_calls, n);
                    assert!(used <= n * 20);
                }
                PipelineKind::Menomad => {
                    assert_eq!(mutated, 5 * n);
                    assert_eq!(a.mutate_calls - before.mutate_calls, n);
                }
                PipelineKind::PureEvo => {
                    assert_eq!(mutated, 5 * n);
                    assert_eq!(a.mads_calls, 0);
                    assert_eq!(used, n);
                }
                PipelineKind::OpenaiEs => {
                    assert_eq!(a.mutate_calls, 0);
                    assert_eq!(used, 2 * cfg.es.pop_pairs as u64 + 1);
                }
                PipelineKind::Cfnomad => {
                    let expect = if g % 4 == 0 { 2 } else { 0 };
                    assert_eq!(mutated, expect);
                }
            }
            before = a;
        }
        let a = t.audit();
        assert_eq!(
            t.evaluator().evaluations(),
            a.mads_evaluations + a.direct_evaluations,
            "{kind:?}: single evaluation entry point"
        );
    }
}

#[test]
fn menomad_stays_sparse_under_the_regularizer() {
    // desk scale: bundled network, full episodes, default regularizer
    let conn = Arc::new(harness::bundled_connectome().unwrap());
    let mut cfg = TrainConfig::default();
    cfg.evo.population_size = 16;
    cfg.mads.max_evaluations = Some(40);
    let mut medians = Vec::new();
    for seed in 0..3 {
        let mut t = Trainer::new(PipelineKind::Menomad, cfg.clone(), conn.clone(), seed).unwrap();
        t.run(&Budget::generations(50), |_, _| Ok(())).unwrap();
        let mut l0: Vec<usize> = t.state().population.iter().map(|i| i.genome.changed_count()).collect();
        l0.sort_unstable();
        medians.push(l0[l0.len() / 2]);
    }
    medians.sort_unstable();
    assert!(medians[medians.len() / 2] < 50, "median dirty-set sizes {medians:?}");
}

#[test]
fn identical_runs_produce_identical_records_and_checkpoints() {
    let conn = net();
    for kind in PipelineKind::ALL {
        let a = train(kind, &quick(), conn.clone(), 21, &Budget::generations(3)).unwrap();
        let b = train(kind, &quick(), conn.clone(), 21, &Budget::generations(3)).unwrap();
        let strip = |rs: &[enomad::RunRecord]| {
            rs.iter()
                .map(|r| (r.best_fitness.to_bits(), r.l2_best.to_bits(), r.l0_best, r.evaluations_cumulative))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.records), strip(&b.records), "{kind:?}");
        assert_eq!(a.best.genome.weights(), b.best.genome.weights());
    }
}

fn sweep_config() -> HarnessConfig {
    let mut c = HarnessConfig::default();
    let q = quick();
    c.pipelines = vec![PipelineKind::Menomad, PipelineKind::PureEvo];
    c.seeds = vec![0, 1, 2];
    c.tasks = vec![Task::Pentagon];
    c.evo = q.evo;
    c.env = q.env;
    c.mads = q.mads;
    c.es = q.es;
    c.wallclock_bucket_s = 0.05;
    c.budget = BudgetConfig {
        generations: Some(3),
        wall_clock_s: None,
        evaluations: None,
    };
    c
}

fn parse_aggregate(path: &std::path::Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

#[test]
fn sweep_files_aggregates_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config();
    let conn = net();
    let s = run_sweep(&cfg, conn.clone(), dir.path()).unwrap();
    assert_eq!(s.completed, 6);
    assert_eq!(fs::read_dir(dir.path().join("runs")).unwrap().count(), 6);
    assert!(dir.path().join("aggregate_generation.csv").exists());
    assert!(dir.path().join("aggregate_wallclock.csv").exists());

    // every aggregate number recomputed from the per-seed files
    let rows = parse_aggregate(&dir.path().join("aggregate_generation.csv"));
    assert_eq!(rows.len(), 2 * 3);
    for row in &rows {
        let kind: PipelineKind = row["pipeline"].parse().unwrap();
        let g: usize = row["generation"].parse().unwrap();
        let vals: Vec<enomad::RunRecord> = cfg
            .seeds
            .iter()
            .map(|&s| {
                let p = dir.path().join("runs").join(format!("{}.csv", harness::run_name(kind, Task::Pentagon, s)));
                read_records(&p).unwrap().into_iter().find(|r| r.generation == g).unwrap()
            })
            .collect();
        let col = |f: fn(&enomad::RunRecord) -> f64| mean_std(&vals.iter().map(f).collect::<Vec<_>>());
        for (name, f) in [
            ("best_fitness", (|r: &enomad::RunRecord| r.best_fitness) as fn(&enomad::RunRecord) -> f64),
            ("food_eaten", |r| r.food_eaten_best as f64),
            ("l2", |r| r.l2_best),
            ("l0", |r| r.l0_best as f64),
        ] {
            let (m, sd) = col(f);
            let got_m: f64 = row[&format!("{name}_mean")].parse().unwrap();
            let got_sd: f64 = row[&format!("{name}_std")].parse().unwrap();
            assert_eq!(got_m, m, "{name} mean");
            assert_eq!(got_sd, sd, "{name} std");
        }
        let (ev, _) = col(|r| r.evaluations_cumulative as f64);
        assert_eq!(row["evaluations_mean"].parse::<f64>().unwrap(), ev);
    }

    // the report's spread matches the final records
    let rep = compare_report(dir.path()).unwrap();
    for row in &rep.rows {
        let food: Vec<f64> = cfg
            .seeds
            .iter()
            .map(|&s| {
                let p = dir.path().join("runs").join(format!("{}.csv", harness::run_name(row.pipeline, row.task, s)));
                read_records(&p).unwrap().last().unwrap().food_eaten_best as f64
            })
            .collect();
        assert_eq!(mean_std(&food), (row.food_eaten_mean, row.food_eaten_std));
    }

    // interrupted sweep: one run lost, rerun reproduces it
    let victim = dir.path().join("runs").join(format!("{}.csv", harness::run_name(PipelineKind::Menomad, Task::Pentagon, 1)));
    let original = read_records(&victim).unwrap();
    fs::remove_file(&victim).unwrap();
    let s = run_sweep(&cfg, conn, dir.path()).unwrap();
    assert_eq!((s.completed, s.resumed), (1, 5));
    let again = read_records(&victim).unwrap();
    assert_eq!(original.len(), again.len());
    for (a, b) in original.iter().zip(&again) {
        assert_eq!(
            (a.best_fitness, a.l2_best, a.l0_best, a.evaluations_cumulative),
            (b.best_fitness, b.l2_best, b.l0_best, b.evaluations_cumulative)
        );
    }
    let rows_again = parse_aggregate(&dir.path().join("aggregate_generation.csv"));
    for (a, b) in rows.iter().zip(&rows_again) {
        assert_eq!(a["best_fitness_mean"], b["best_fitness_mean"]);
        assert_eq!(a["l0_mean"], b["l0_mean"]);
    }
}

#[test]
fn report_of_a_single_run_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sweep_config();
    cfg.pipelines = vec![PipelineKind::Cfnomad];
    cfg.seeds = vec![4];
    run_sweep(&cfg, net(), dir.path()).unwrap();
    let rep = compare_report(dir.path()).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.rows[0].food_eaten_std, 0.0);
    assert!(rep.pairs.is_empty());
}

#[test]
fn dominating_pipeline_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sweep_config();
    cfg.pipelines = vec![PipelineKind::Menomad, PipelineKind::OpenaiEs];
    cfg.budget.generations = Some(4);
    run_sweep(&cfg, net(), dir.path()).unwrap();
    let rep = compare_report(dir.path()).unwrap();
    let food = |k: PipelineKind| {
        cfg.seeds
            .iter()
            .map(|&s| {
                let p = dir.path().join("runs").join(format!("{}.csv", harness::run_name(k, Task::Pentagon, s)));
                read_records(&p).unwrap().last().unwrap().food_eaten_best
            })
            .collect::<Vec<_>>()
    };
    let (m, e) = (food(PipelineKind::Menomad), food(PipelineKind::OpenaiEs));
    let pair = &rep.pairs[0];
    if m.iter().zip(&e).all(|(a, b)| a > b) && m.iter().min() > e.iter().max() {
        assert_eq!(pair.better, PipelineKind::Menomad);
        assert!(pair.significant, "{m:?} vs {e:?}: p = {}", pair.p_value);
    }
    let (ma, _) = mean_std(&m.iter().map(|&x| x as f64).collect::<Vec<_>>());
    let (me, _) = mean_std(&e.iter().map(|&x| x as f64).collect::<Vec<_>>());
    assert_eq!(pair.better == PipelineKind::Menomad, ma >= me);
}

#[test]
fn rendered_food_matches_the_eaten_list() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sweep_config();
    cfg.env.episode_steps = 250;
    let conn = Arc::new(harness::bundled_connectome().unwrap());
    let opts = TrainOptions {
        render_svg: true,
        ..Default::default()
    };
    let s = harness::run_train(&cfg, conn, PipelineKind::Menomad, Task::Pentagon, 0, dir.path(), &opts).unwrap();
    let svg = fs::read_to_string(dir.path().join("trajectory.svg")).unwrap();
    assert!(!s.episode.eaten.is_empty());
    for (food, t) in &s.episode.eaten {
        let tag = format!("data-food=\"{food}\" data-eaten-step=\"{t}\"");
        assert!(svg.contains(&tag), "missing {tag}");
    }
    assert_eq!(svg.matches("fill=\"none\" stroke=\"#2e7d32\"").count(), s.episode.eaten.len());
    assert_eq!(svg.matches("class=\"seg\"").count(), 250);
    let traj = fs::read_to_string(dir.path().join("episode.csv")).unwrap();
    assert_eq!(traj.lines().count(), 252);
}

#[test]
fn wall_clock_and_evaluations_are_monotone_in_records() {
    let out = train(PipelineKind::Renomad, &quick(), net(), 2, &Budget::generations(4)).unwrap();
    for w in out.records.windows(2) {
        assert!(w[1].wall_clock_s >= w[0].wall_clock_s);
        assert!(w[1].evaluations_cumulative > w[0].evaluations_cumulative);
        assert_eq!(w[1].generation, w[0].generation + 1);
    }
    assert_eq!(out.records[0].generation, 1);
    assert_eq!(out.initial.generation, 0);
}

#[test]
fn evaluation_budget_is_checked_between_generations() {
    let b = Budget::evaluations(100);
    let out = train(PipelineKind::PureEvo, &quick(), net(), 3, &b).unwrap();
    let last = out.records.last().unwrap();
    assert!(last.evaluations_cumulative >= 100);
    assert!(out.records[out.records.len() - 2].evaluations_cumulative < 100);
    let unbounded = Budget {
        generations: None,
        wall_clock: None,
        evaluations: None,
    };
    assert!(train(PipelineKind::PureEvo, &quick(), net(), 3, &unbounded).is_err());
}
