use tsnac_core::harness::{self, Matrix, MatrixScenario, RunOptions, ScenarioSource};
use tsnac_core::scenario::{RealisticCase, Scenario, SyntheticSpec};
use tsnac_core::StrategyKind;

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_sw: 6,
        n_es: 24,
        n_flows: 200,
        ..SyntheticSpec::default()
    }
}

#[test]
fn empty_event_list() {
    let mut sc = Scenario::synthetic(&small_spec()).unwrap();
    sc.events.clear();
    let m = harness::run(&sc, StrategyKind::Adaptive, &RunOptions::default()).unwrap();
    assert_eq!(m.admitted_total, 0);
    assert_eq!(m.requests, 0);
    assert_eq!(m.first_rejection_index, None);
    assert!(m.groups.is_empty());
    assert_eq!(m.admission_time.samples, 0);
}

#[test]
fn orion_run_has_120_groups() {
    let sc = Scenario::realistic(RealisticCase::OrionCev, 6000, 1).unwrap();
    let m = harness::run(&sc, StrategyKind::Adaptive, &RunOptions::default()).unwrap();
    assert_eq!(m.groups.len(), 120);
    assert!(m.groups.iter().all(|g| g.requests == 50));
    assert_eq!(m.groups.iter().map(|g| g.group).collect::<Vec<_>>(), (1..=120).collect::<Vec<_>>());
    let accepted = m.events.iter().filter(|e| e.decision == "accepted").count();
    assert_eq!(m.admitted_total, accepted);
    assert_eq!(m.groups.iter().map(|g| g.admitted_in_group).sum::<usize>(), accepted);
    assert_eq!(m.admission_time.samples, 6000 - 10);
    for g in &m.groups {
        let last = &m.events[g.group * 50 - 1];
        assert_eq!(last.bottleneck_count_after, g.bottleneck_port_count);
    }
}

#[test]
fn metrics_are_consistent_with_events() {
    let sc = Scenario::synthetic(&small_spec()).unwrap().with_churn(3, 0.3);
    for kind in StrategyKind::ALL {
        let opts = RunOptions {
            verify: true,
            gamma_trace: true,
            ..RunOptions::default()
        };
        let m = harness::run(&sc, kind, &opts).unwrap();
        assert_eq!(m.events.len(), sc.events.len());
        let adds: Vec<_> = m.events.iter().filter(|e| e.op == "add").collect();
        assert_eq!(adds.len(), m.requests);
        let first = adds.iter().position(|e| e.decision == "rejected").map(|i| i + 1);
        assert_eq!(m.first_rejection_index, first);
        for e in &adds {
            match e.decision.as_str() {
                "accepted" => {
                    assert!(!e.route.is_empty());
                    assert!(e.reason.is_empty());
                    if kind != StrategyKind::Adaptive {
                        assert!(e.gamma.is_none() || e.gamma == Some(1.0));
                    }
                }
                "rejected" => assert!(!e.reason.is_empty() && e.route.is_empty()),
                other => panic!("{other}"),
            }
        }
        if kind == StrategyKind::Adaptive {
            let adjusted = adds.iter().filter(|e| e.gamma.is_some_and(|g| g < 1.0)).count();
            assert!(adjusted > 0);
            assert!(!m.gamma_trace.is_empty());
        } else {
            assert!(m.gamma_trace.is_empty());
        }
    }
}

#[test]
fn decisions_reproduce_across_runs() {
    let sc = Scenario::synthetic(&small_spec()).unwrap().with_churn(5, 0.2);
    let strip = |m: tsnac_core::harness::RunMetrics| {
        m.events
            .into_iter()
            .map(|mut e| {
                e.elapsed_ns = 0;
                e
            })
            .collect::<Vec<_>>()
    };
    let opts = RunOptions::default();
    let a = strip(harness::run(&sc, StrategyKind::Adaptive, &opts).unwrap());
    let b = strip(harness::run(&sc, StrategyKind::Adaptive, &opts).unwrap());
    assert_eq!(a, b);
}

#[test]
fn output_files() {
    let dir = tempfile::tempdir().unwrap();
    let sc = Scenario::synthetic(&small_spec()).unwrap();
    let opts = RunOptions {
        gamma_trace: true,
        ..RunOptions::default()
    };
    let m = harness::run(&sc, StrategyKind::Adaptive, &opts).unwrap();
    harness::write_outputs(&m, dir.path()).unwrap();
    let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    let header = events.lines().next().unwrap();
    assert_eq!(
        header,
        "event_index,op,flow_id,class,decision,reason,route,gamma,cost,elapsed_ns,bottleneck_count_after"
    );
    assert_eq!(events.lines().count(), sc.events.len() + 1);
    let groups = std::fs::read_to_string(dir.path().join("groups.csv")).unwrap();
    assert_eq!(groups.lines().count(), m.groups.len() + 1);
    assert!(dir.path().join("gamma_trace.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["admitted_total"], m.admitted_total);
    assert_eq!(summary["version"], 1);

    // A rerun without tracing replaces the files and drops the stale trace.
    let m2 = harness::run(&sc, StrategyKind::Ep, &RunOptions::default()).unwrap();
    harness::write_outputs(&m2, dir.path()).unwrap();
    assert!(!dir.path().join("gamma_trace.csv").exists());
    let rows = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert_eq!(rows.lines().count(), sc.events.len() + 1);
}

#[test]
fn comparison_matrix_rows() {
    let matrix = Matrix {
        scenarios: vec![MatrixScenario {
            label: "small".into(),
            source: ScenarioSource::Er(small_spec()),
        }],
        strategies: vec![StrategyKind::Adaptive, StrategyKind::Ep],
        seeds: vec![1, 2],
        remove_prob: 0.0,
        options: RunOptions {
            verify: true,
            ..RunOptions::default()
        },
    };
    let rows = harness::compare(&matrix).unwrap();
    assert_eq!(rows.len(), 4);
    let keys: Vec<_> = rows.iter().map(|r| (r.seed, r.strategy)).collect();
    assert_eq!(
        keys,
        vec![
            (1, StrategyKind::Adaptive),
            (1, StrategyKind::Ep),
            (2, StrategyKind::Adaptive),
            (2, StrategyKind::Ep)
        ]
    );
    let dir = tempfile::tempdir().unwrap();
    let path = harness::write_comparison(&rows, dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 5);

    let text = serde_json::to_string(&matrix).unwrap();
    assert_eq!(Matrix::from_json(&text).unwrap(), matrix);
    let realistic = r#"{"scenarios":[{"label":"o","realistic":{"case":"orion","flows":100}}],"strategies":["adaptive","abp"],"seeds":[7]}"#;
    let m = Matrix::from_json(realistic).unwrap();
    assert_eq!(harness::compare(&m).unwrap().len(), 2);
}
