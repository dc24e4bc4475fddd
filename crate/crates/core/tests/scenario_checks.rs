mod common;

use std::collections::BTreeMap;

use tsnac_core::model::NodeId;
use tsnac_core::scenario::*;

fn physical_links(g: &tsnac_core::model::NetworkGraph) -> usize {
    g.links().len() / 2
}

fn switch_links(g: &tsnac_core::model::NetworkGraph) -> usize {
    g.links().iter().filter(|l| g.is_switch(l.id.from()) && g.is_switch(l.id.to())).count()
}

#[test]
fn synthetic_generation_is_deterministic() {
    let spec = SyntheticSpec {
        seed: 17,
        ..SyntheticSpec::default()
    };
    let a = Scenario::synthetic(&spec).unwrap().with_churn(17, 0.2);
    let b = Scenario::synthetic(&spec).unwrap().with_churn(17, 0.2);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = Scenario::synthetic(&SyntheticSpec { seed: 18, ..spec }).unwrap();
    assert_ne!(a.graph, c.graph);
}

#[test]
fn realistic_generation_is_deterministic() {
    for case in RealisticCase::ALL {
        let a = Scenario::realistic(case, 500, 3).unwrap();
        let b = Scenario::realistic(case, 500, 3).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a.events, Scenario::realistic(case, 500, 4).unwrap().events);
    }
}

#[test]
fn scenario_file_round_trip() {
    let sc = Scenario::synthetic(&SyntheticSpec::default()).unwrap().with_churn(1, 0.3);
    let text = sc.to_json().unwrap();
    assert_eq!(Scenario::from_json(&text).unwrap(), sc);

    let mut bad = sc.clone();
    bad.events.insert(0, Event::Remove { flow_id: tsnac_core::FlowId(5) });
    assert!(Scenario::from_json(&bad.to_json().unwrap()).is_err());
    assert!(Scenario::from_json(r#"{"format":"x","version":1}"#).is_err());
}

#[test]
fn complete_switch_graph_at_p_one() {
    let spec = SyntheticSpec {
        n_sw: 7,
        n_es: 20,
        p: 1.0,
        ..SyntheticSpec::default()
    };
    let g = gen_er_topology(&spec).unwrap();
    assert_eq!(switch_links(&g), 7 * 6);
}

#[test]
fn large_scale_topology() {
    let spec = SyntheticSpec {
        n_sw: 22,
        n_es: 110,
        p: 0.6,
        ..SyntheticSpec::default()
    };
    let g = gen_er_topology(&spec).unwrap();
    assert_eq!(g.switches().count(), 22);
    assert_eq!(g.end_systems().count(), 110);
    assert_eq!(g.links().len() - switch_links(&g), 2 * 110);
    assert!(g.links().iter().all(|l| l.rate == 1e8));
    // Round-robin attachment: every switch carries exactly five end systems.
    let mut per_switch: BTreeMap<NodeId, usize> = BTreeMap::new();
    for e in g.end_systems() {
        *per_switch.entry(g.attached_switch(e).unwrap()).or_default() += 1;
    }
    assert!(per_switch.values().all(|&n| n == 5));
}

#[test]
fn sparse_graphs_fail_after_retries() {
    let spec = SyntheticSpec {
        n_sw: 20,
        p: 0.0,
        ..SyntheticSpec::default()
    };
    assert!(matches!(gen_er_topology(&spec), Err(ScenarioError::Disconnected(_))));
}

#[test]
fn flow_attributes_within_ranges() {
    let spec = SyntheticSpec {
        n_flows: 5000,
        seed: 2,
        ..SyntheticSpec::default()
    };
    let g = gen_er_topology(&spec).unwrap();
    let flows = gen_flows(&spec, &g).unwrap();
    assert_eq!(flows.len(), 5000);
    for f in &flows {
        assert!((512.0..=12144.0).contains(&f.size));
        assert_eq!(f.size % 8.0, 0.0);
        assert!((2e-3..=9e-3).contains(&f.period));
        assert!((2e-3..=9e-3).contains(&f.deadline));
        assert_ne!(g.attached_switch(f.src), g.attached_switch(f.dst));
        assert!(g.is_end_system(f.src) && g.is_end_system(f.dst));
    }
    assert!(flows.iter().any(|f| f.deadline < f.period));
    let none = gen_flows(&SyntheticSpec { n_flows: 0, ..spec }, &g).unwrap();
    assert!(none.is_empty());
}

/// Each decile of the deadline range holds 10% ± 2 points of 1e5 draws, and
/// the counts pass a chi-square test at the 0.1% level (9 degrees of freedom).
#[test]
fn deadline_histogram_is_uniform() {
    let spec = SyntheticSpec {
        n_flows: 100_000,
        seed: 0,
        ..SyntheticSpec::default()
    };
    let g = gen_er_topology(&spec).unwrap();
    let flows = gen_flows(&spec, &g).unwrap();
    let mut bins = [0usize; 10];
    for f in &flows {
        let x = (f.deadline - 2e-3) / 7e-3;
        bins[((x * 10.0) as usize).min(9)] += 1;
    }
    let expected = 1e4;
    let mut chi2 = 0.0;
    for &c in &bins {
        let share = c as f64 / 1e5;
        assert!((share - 0.1).abs() <= 0.02, "{bins:?}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    assert!(chi2 < 27.88, "chi2 {chi2}, {bins:?}");
}

#[test]
fn class_assignment() {
    let mut r = common::rng(50);
    for n_avb in 1..=8u8 {
        for n in [0usize, 1, 7, 100, 401] {
            let mut flows: Vec<_> = (0..n)
                .map(|i| {
                    let mut f = common::flow(i as u64, 800.0, 1e-3);
                    f.deadline = rand::Rng::gen_range(&mut r, 2e-3..9e-3);
                    f
                })
                .collect();
            assign_classes(&mut flows, n_avb);
            let mut counts = vec![0usize; n_avb as usize];
            for f in &flows {
                counts[f.class_index()] += 1;
            }
            if n >= n_avb as usize {
                let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
                assert!(hi - lo <= 1, "{counts:?}");
            }
            for a in &flows {
                for b in &flows {
                    if a.deadline < b.deadline {
                        assert!(a.class <= b.class);
                    }
                }
            }
        }
    }
}

#[test]
fn class_assignment_examples() {
    let mut flows: Vec<_> = [2e-3, 3e-3, 7e-3, 9e-3]
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut f = common::flow(i as u64, 800.0, 1e-3);
            f.deadline = d;
            f
        })
        .collect();
    flows.reverse();
    assign_classes(&mut flows, 2);
    let classes: Vec<u8> = flows.iter().map(|f| f.class).collect();
    assert_eq!(classes, vec![2, 2, 1, 1]);
    assign_classes(&mut flows, 1);
    assert!(flows.iter().all(|f| f.class == 1));
}

#[test]
fn churn_only_removes_live_flows() {
    let sc = Scenario::synthetic(&SyntheticSpec::default()).unwrap();
    assert_eq!(sc.clone().with_churn(4, 0.0).events, sc.events);
    let churned = sc.clone().with_churn(4, 0.5);
    churned.validate().unwrap();
    let removes = churned.events.iter().filter(|e| matches!(e, Event::Remove { .. })).count();
    assert!(removes > 100);
    assert_eq!(churned.flows().count(), sc.flows().count());
}

#[test]
fn spec_strings() {
    let s: SyntheticSpec = "sw=22,es=110,p=0.6,flows=800,seed=9".parse().unwrap();
    assert_eq!((s.n_sw, s.n_es, s.p, s.n_flows, s.seed), (22, 110, 0.6, 800, 9));
    assert!("sw=x".parse::<SyntheticSpec>().is_err());
    assert!("colour=blue".parse::<SyntheticSpec>().is_err());
}

#[test]
fn realistic_topologies() {
    let (g, cc) = realistic_topology(RealisticCase::Automotive).unwrap();
    assert_eq!((g.end_systems().count(), g.switches().count(), physical_links(&g)), (14, 5, 18));
    assert_eq!(cc.n_avb, 4);
    let dm3 = g.node_by_name("DM3").unwrap();
    let sw3 = g.node_by_name("SW3").unwrap();
    for l in g.links() {
        let fast = (l.id.from(), l.id.to()) == (dm3, sw3) || (l.id.from(), l.id.to()) == (sw3, dm3);
        assert_eq!(l.rate, if fast { 1e9 } else { 1e8 }, "{}", l.id);
    }

    let (g, cc) = realistic_topology(RealisticCase::SpaceLauncher).unwrap();
    assert_eq!((g.end_systems().count(), g.switches().count()), (18, 18));
    assert_eq!(switch_links(&g) / 2, 24);
    assert_eq!(cc.n_avb, 3);
    assert!(g.links().iter().all(|l| l.rate == 1e8));

    let (g, cc) = realistic_topology(RealisticCase::OrionCev).unwrap();
    assert_eq!((g.end_systems().count(), g.switches().count(), physical_links(&g)), (31, 15, 55));
    assert_eq!(cc.n_avb, 4);
    assert!(g.links().iter().all(|l| l.rate == 1e9));
}

#[test]
fn realistic_flows_respect_rules() {
    for case in RealisticCase::ALL {
        let (g, cc, mut gen) = load_realistic(case, 5).unwrap();
        for _ in 0..3000 {
            let (f, row) = gen.next_with_row();
            f.validate(&g, &cc).unwrap();
            assert_ne!(g.attached_switch(f.src), g.attached_switch(f.dst));
            let t = case.templates()[row];
            assert_eq!(f.class, t.class);
            let name = |n| g.node(n).unwrap().name.clone().unwrap();
            match t.endpoints {
                Endpoints::Fixed(s, d) => assert_eq!((name(f.src).as_str(), name(f.dst).as_str()), (s, d)),
                Endpoints::Roles(s, d) => {
                    assert!(name(f.src).starts_with(s) && name(f.dst).starts_with(d));
                }
                Endpoints::Any => {}
            }
        }
    }
}
