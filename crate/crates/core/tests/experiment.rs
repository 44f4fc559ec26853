use std::fs;

use anneal_core::experiment::{
    aggregate_by_degeneracy, compare_annealers, degeneracy_histogram, generate_instances, read_records, run_sweep,
    ResultRecord, SweepConfig, Task,
};
use anneal_core::{solve_partition_bruteforce, AnnealerKind, ProblemInstance};
use proptest::prelude::*;

fn small_config(dir: &std::path::Path) -> SweepConfig {
    SweepConfig {
        rows: 2,
        cols: 4,
        instance_count: 10,
        seed: 5,
        total_time: 5.0,
        steps: 200,
        out_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn sweep_writes_one_record_per_instance_and_annealer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let summary = run_sweep(&cfg).unwrap();
    assert_eq!(summary.records.len(), 30);
    assert_eq!(summary.failed, 0);
    assert_eq!(summary.resumed, 0);
    let on_disk = read_records(&dir.path().join("records.csv")).unwrap();
    assert_eq!(on_disk, summary.records);

    // D and min_cut agree with an independent solve of each stored instance
    for r in &on_disk {
        let inst = ProblemInstance::load(&dir.path().join("instances").join(format!("{}.json", r.instance_id))).unwrap();
        let sol = solve_partition_bruteforce(&inst.graph).unwrap();
        assert_eq!((r.degeneracy, r.min_cut), (sol.degeneracy(), sol.min_cut));
        assert_eq!(r.degeneracy % 2, 0);
        let p = r.p_s_final.unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    let hist = degeneracy_histogram(&on_disk);
    assert_eq!(hist.values().sum::<usize>(), cfg.instance_count);
}

#[test]
fn reruns_are_byte_identical_and_resume() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_sweep(&small_config(a.path())).unwrap();
    run_sweep(&small_config(b.path())).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path().join("instances"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 10);
    for name in &names {
        let x = fs::read(a.path().join("instances").join(name)).unwrap();
        let y = fs::read(b.path().join("instances").join(name)).unwrap();
        assert_eq!(x, y, "{name:?}");
    }

    // a second run in the same directory skips everything that completed
    let again = run_sweep(&small_config(a.path())).unwrap();
    assert_eq!(again.resumed, 30);
    let first = read_records(&b.path().join("records.csv")).unwrap();
    let strip = |rs: Vec<ResultRecord>| -> Vec<(String, AnnealerKind, Option<f64>)> {
        rs.into_iter().map(|r| (r.instance_id, r.annealer, r.p_s_final)).collect()
    };
    assert_eq!(strip(again.records), strip(first));
}

#[test]
fn failed_tasks_are_recorded_and_retried() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.instance_count = 2;
    // below the balance bound: every Ising task fails, the atomic ones run
    cfg.alpha = 0.1;
    let summary = run_sweep(&cfg).unwrap();
    assert_eq!(summary.failed, 2);
    for r in &summary.records {
        if r.annealer == AnnealerKind::Ising {
            assert!(r.status.starts_with("failed"), "{}", r.status);
            assert!(r.p_s_final.is_none());
        } else {
            assert!(r.is_ok());
        }
    }
    cfg.alpha = 1.0;
    let retry = run_sweep(&cfg).unwrap();
    assert_eq!(retry.resumed, 4);
    assert_eq!(retry.failed, 0);
}

#[test]
fn spectral_tasks_write_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.instance_count = 1;
    cfg.annealers = vec![AnnealerKind::Fermion];
    cfg.tasks = vec![Task::Spectrum, Task::Susceptibility, Task::Glass, Task::DynamicsTrace];
    cfg.trace_grid = 21;
    cfg.gap_grid = 41;
    cfg.levels = 4;
    let summary = run_sweep(&cfg).unwrap();
    let r = &summary.records[0];
    assert!(r.is_ok(), "{}", r.status);
    assert!(r.relevant_gap.unwrap() > 0.0);
    assert!(r.p_s_final.is_some());
    let traces = dir.path().join("traces");
    let spectrum = fs::read_to_string(traces.join(format!("{}_fermion_spectrum.csv", r.instance_id))).unwrap();
    assert!(spectrum.starts_with("s,E_0,"));
    assert!(spectrum.lines().next().unwrap().ends_with(",q_gs,q_low12,S"));
    assert_eq!(spectrum.lines().count(), 22);
    let dynamics = fs::read_to_string(traces.join(format!("{}_fermion_dynamics.csv", r.instance_id))).unwrap();
    assert!(dynamics.starts_with("t,s,P_s,P_g,D_eff,q,norm_error\n"));
    let final_json = fs::read_to_string(traces.join(format!("{}_fermion_final.json", r.instance_id))).unwrap();
    let v: serde_json::Value = serde_json::from_str(&final_json).unwrap();
    assert_eq!(v["P_s_final"].as_f64(), r.p_s_final);
    assert_eq!(v["T"].as_f64(), Some(5.0));
}

#[test]
fn sweep_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.cols = 3;
    cfg.rows = 3;
    assert!(run_sweep(&cfg).is_err());
    let mut cfg = small_config(dir.path());
    cfg.instance_count = 0;
    assert!(run_sweep(&cfg).is_err());
}

/// About a third of 4x4 instances have the minimal degeneracy D = 2.
#[test]
fn two_fold_degenerate_share_at_4x4() {
    let instances = generate_instances(4, 4, 200, 2024).unwrap();
    let twos = instances
        .iter()
        .filter(|(_, inst)| solve_partition_bruteforce(&inst.graph).unwrap().degeneracy() == 2)
        .count();
    let share = twos as f64 / 200.0;
    assert!((share - 1.0 / 3.0).abs() <= 0.1, "D = 2 share {share}");
}

fn record_strategy() -> impl Strategy<Value = ResultRecord> {
    (0usize..12, 0usize..3, 0.0f64..=1.0).prop_map(|(id, kind, p)| ResultRecord {
        instance_id: format!("i{id}"),
        annealer: AnnealerKind::ALL[kind],
        n: 12,
        // the degeneracy belongs to the instance
        degeneracy: 2 * (1 + id % 4),
        min_cut: 6,
        p_s_final: Some(p),
        relevant_gap: None,
        runtime_seconds: 0.0,
        status: "ok".into(),
    })
}

proptest! {
    #[test]
    fn aggregation_ignores_record_order(records in prop::collection::vec(record_strategy(), 1..40), seed in any::<u64>()) {
        let mut shuffled = records.clone();
        // deterministic permutation from the seed
        let len = shuffled.len();
        for i in (1..len).rev() {
            let j = (seed.wrapping_mul(i as u64 + 1).rotate_left(17) % (i as u64 + 1)) as usize;
            shuffled.swap(i, j);
        }
        let a = aggregate_by_degeneracy(&records).unwrap();
        let b = aggregate_by_degeneracy(&shuffled).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.degeneracy, y.degeneracy);
            prop_assert_eq!(x.instances, y.instances);
            for kind in AnnealerKind::ALL {
                match (x.mean(kind), y.mean(kind)) {
                    (Some(m), Some(n)) => prop_assert!((m - n).abs() < 1e-12),
                    (m, n) => prop_assert_eq!(m, n),
                }
            }
        }
        let distinct: std::collections::HashSet<_> = records.iter().map(|r| &r.instance_id).collect();
        prop_assert_eq!(a.iter().map(|r| r.instances).sum::<usize>(), distinct.len());
    }

    #[test]
    fn comparison_rates_partition_unity(records in prop::collection::vec(record_strategy(), 1..40)) {
        let c = compare_annealers(&records, AnnealerKind::Boson, AnnealerKind::Fermion);
        if c.paired() > 0 {
            prop_assert!((c.win_rate() + c.loss_rate() + c.tie_rate() - 1.0).abs() < 1e-12);
        }
        let flipped = compare_annealers(&records, AnnealerKind::Fermion, AnnealerKind::Boson);
        prop_assert_eq!(flipped.wins_a, c.wins_b);
        prop_assert_eq!(flipped.ties, c.ties);
    }
}
