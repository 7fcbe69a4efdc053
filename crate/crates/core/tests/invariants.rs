//! Seeded property suites spanning editing, transforms, inference and
//! cutset machinery.

mod common;

use beliefcore::clustering::{
    build_join_tree, build_join_tree_structure, TriangulationMethod,
};
use beliefcore::conditioning::{
    conditioning_infer_joint, conditioning_infer_weighted, find_loop_cutset,
};
use beliefcore::editing;
use beliefcore::generate::{random_evidence, random_network, RandomNetParams};
use beliefcore::model::{Evidence, NodeSpec};
use beliefcore::oracle::{joint_enumeration_oracle, joint_over};
use beliefcore::polytree::polytree_infer;
use beliefcore::reduction::reduction_query;
use beliefcore::transforms;
use beliefcore::{Diagram, Error};
use common::{table_linf, with_deterministic_node, TestRng};

fn net(seed: u64, nodes: usize, density: f64, polytree: bool) -> Diagram {
    random_network(&RandomNetParams {
        node_count: nodes,
        max_parents: 3,
        states: (2, 3),
        arc_density: density,
        polytree_only: polytree,
        seed,
    })
    .expect("valid params")
}

#[test]
fn seeded_edit_sequences_stay_consistent() {
    for seed in 0..500u64 {
        let mut rng = TestRng::new(seed);
        let mut d = net(seed, 6, 0.45, false);
        for step in 0..3 {
            let ids: Vec<String> =
                d.node_ids().map(|id| id.as_str().to_string()).collect();
            let pick = ids[rng.below(ids.len())].clone();
            let edited = match rng.below(6) {
                0 => {
                    let parents: Vec<&str> =
                        ids.iter().filter(|_| rng.chance(0.4)).map(String::as_str).collect();
                    let rows = (0..parents
                        .iter()
                        .map(|p| d.node(p).unwrap().states().len())
                        .product::<usize>())
                        .map(|_| vec![0.5, 0.5])
                        .collect();
                    let spec = NodeSpec::chance(&format!("x{step}"), &["t", "f"], &parents, rows);
                    editing::add_node(&d, &spec)
                }
                1 => editing::delete_node(&d, &pick, true),
                2 => {
                    let other = ids[rng.below(ids.len())].clone();
                    editing::add_arc(&d, &pick, &other)
                }
                3 => {
                    let other = ids[rng.below(ids.len())].clone();
                    editing::delete_arc(&d, &pick, &other)
                }
                4 => editing::add_state(&d, &pick, "extra"),
                _ => editing::delete_state(&d, &pick, "s0"),
            };
            match edited {
                Ok(next) => {
                    let report = next.is_consistent();
                    assert!(report.ok(), "seed {seed} step {step}: {report:?}");
                    d = next;
                }
                Err(_) => {} // inapplicable edit; the input is unchanged
            }
            if d.is_empty() {
                break;
            }
        }
    }
}

#[test]
fn add_arc_never_changes_posteriors() {
    let mut checked = 0;
    for seed in 0..80u64 {
        let d = net(seed, 6, 0.35, false);
        let mut rng = TestRng::new(seed ^ 0xabc);
        let ids: Vec<String> = d.node_ids().map(|id| id.as_str().to_string()).collect();
        let parent = &ids[rng.below(ids.len())];
        let child = &ids[rng.below(ids.len())];
        let Ok(grown) = editing::add_arc(&d, parent, child) else { continue };
        for ev_seed in 0..3 {
            let ev = random_evidence(&d, 2, seed * 31 + ev_seed);
            let Ok(before) = joint_enumeration_oracle(&d, &ev) else { continue };
            let after = joint_enumeration_oracle(&grown, &ev).expect("same support");
            assert!(before.linf(&after) < 1e-12, "seed {seed}");
            checked += 1;
        }
    }
    assert!(checked > 50, "only {checked} pairs were checkable");
}

#[test]
fn transforms_preserve_the_joint_over_survivors() {
    let mut applied = 0;
    for seed in 0..200u64 {
        let base = net(seed, 6, 0.4, false);
        let mut rng = TestRng::new(seed ^ 0x517);
        let ids: Vec<String> =
            base.node_ids().map(|id| id.as_str().to_string()).collect();
        let pick = ids[rng.below(ids.len())].clone();
        let (d, transformed) = match seed % 4 {
            0 => {
                // Reverse a random arc.
                let arcs: Vec<(String, String)> = base
                    .nodes()
                    .flat_map(|n| {
                        n.parents()
                            .iter()
                            .map(|p| (p.as_str().to_string(), n.id().as_str().to_string()))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                if arcs.is_empty() {
                    continue;
                }
                let (from, to) = arcs[rng.below(arcs.len())].clone();
                match transforms::reverse_arc(&base, &from, &to) {
                    Ok(out) => (base, out),
                    Err(Error::WouldCreateCycle { .. }) => continue,
                    Err(e) => panic!("seed {seed}: {e}"),
                }
            }
            1 => {
                let out = transforms::absorb_chance_node(&base, &pick).expect("chance node");
                (base, out)
            }
            2 => {
                let keep: Vec<&str> = ids
                    .iter()
                    .filter(|_| rng.chance(0.5))
                    .map(String::as_str)
                    .collect();
                let out = transforms::remove_all_barren(&base, &keep).expect("barren sweep");
                (base, out)
            }
            _ => {
                let det = with_deterministic_node(&base, &pick);
                let out =
                    transforms::reduce_deterministic_node(&det, &pick).expect("deterministic");
                (det, out)
            }
        };
        let report = transformed.is_consistent();
        assert!(report.ok(), "seed {seed}: {report:?}");
        if transformed.is_empty() {
            continue;
        }
        let survivors: Vec<&str> = transformed.node_ids().map(|id| id.as_str()).collect();
        let (_, expect) = joint_over(&d, &survivors).unwrap();
        let (_, got) = joint_over(&transformed, &survivors).unwrap();
        assert!(table_linf(&expect, &got) < 1e-10, "seed {seed}");
        applied += 1;
    }
    assert!(applied >= 150, "only {applied} transforms were applicable");
}

#[test]
fn double_reversal_restores_the_joint() {
    for seed in 0..40u64 {
        let d = net(seed, 6, 0.4, false);
        let arcs: Vec<(String, String)> = d
            .nodes()
            .flat_map(|n| {
                n.parents()
                    .iter()
                    .map(|p| (p.as_str().to_string(), n.id().as_str().to_string()))
                    .collect::<Vec<_>>()
            })
            .collect();
        let Some((from, to)) = arcs.first().cloned() else { continue };
        let Ok(once) = transforms::reverse_arc(&d, &from, &to) else { continue };
        let twice = transforms::reverse_arc(&once, &to, &from).expect("reverse back");
        let all: Vec<&str> = d.node_ids().map(|id| id.as_str()).collect();
        let (_, expect) = joint_over(&d, &all).unwrap();
        let (_, got) = joint_over(&twice, &all).unwrap();
        assert!(table_linf(&expect, &got) < 1e-10, "seed {seed}");
    }
}

#[test]
fn cutsets_leave_singly_connected_remainders() {
    for seed in 0..150u64 {
        let d = net(seed, 10, 0.45, false);
        let cutset = find_loop_cutset(&d).unwrap();
        // Removing the cutset nodes leaves an acyclic skeleton.
        let mut uf: Vec<usize> = (0..d.len()).collect();
        fn find(uf: &mut Vec<usize>, mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        let ids: Vec<&str> = d.node_ids().map(|id| id.as_str()).collect();
        let pos = |id: &str| ids.iter().position(|x| *x == id).unwrap();
        let in_cutset = |id: &str| cutset.nodes.iter().any(|c| c.as_str() == id);
        for node in d.nodes() {
            if in_cutset(node.id().as_str()) {
                continue;
            }
            for p in node.parents() {
                // Cutting the cutset's outgoing arcs: edges from a cutset
                // parent disappear, so only non-cutset endpoints matter.
                if in_cutset(p.as_str()) {
                    continue;
                }
                let (a, b) = (find(&mut uf, pos(node.id().as_str())), find(&mut uf, pos(p.as_str())));
                assert!(a != b, "seed {seed}: sliced skeleton still cyclic");
                uf[a] = b;
            }
        }
    }
}

#[test]
fn polytree_matches_oracle_with_exact_evidence_probability() {
    for seed in 0..200u64 {
        let d = net(seed, 9, 0.6, true);
        let ev = random_evidence(&d, 3, seed);
        let expect = joint_enumeration_oracle(&d, &ev);
        let got = polytree_infer(&d, &ev);
        match (expect, got) {
            (Ok(expect), Ok(got)) => {
                assert!(expect.linf(&got) < 1e-9, "seed {seed}");
                let pe = expect.evidence_probability().unwrap();
                let pg = got.evidence_probability().unwrap();
                assert!((pe - pg).abs() < 1e-12, "seed {seed}: {pe} vs {pg}");
            }
            (Err(Error::ImpossibleEvidence), Err(Error::ImpossibleEvidence)) => {}
            (e, g) => panic!("seed {seed}: oracle {e:?} vs polytree {g:?}"),
        }
    }
}

#[test]
fn exact_algorithms_agree_with_oracle_on_loopy_nets() {
    for seed in 0..60u64 {
        let d = net(seed, 8, 0.5, false);
        let ev = random_evidence(&d, 2, seed * 7);
        let oracle = joint_enumeration_oracle(&d, &ev);
        let weighted = conditioning_infer_weighted(&d, &ev).map(|(b, _)| b);
        let joint = conditioning_infer_joint(&d, &ev);
        let jensen = build_join_tree(&d, TriangulationMethod::Mcs)
            .and_then(|jt| beliefcore::clustering::jt_infer_jensen(&jt, &ev));
        let meta = build_join_tree(&d, TriangulationMethod::MinFill)
            .and_then(|jt| beliefcore::clustering::jt_infer_meta(&jt, &ev));
        match oracle {
            Ok(expect) => {
                for (name, got) in [
                    ("weighted", weighted),
                    ("joint", joint),
                    ("jensen", jensen),
                    ("meta", meta),
                ] {
                    let got = got.unwrap_or_else(|e| panic!("seed {seed} {name}: {e}"));
                    assert!(expect.linf(&got) < 1e-9, "seed {seed} {name}");
                }
                let target = d.node_ids().next().unwrap().as_str();
                if ev.get(target).is_none() {
                    let got = reduction_query(&d, target, &ev).expect("query");
                    assert!(expect.linf(&got) < 1e-9, "seed {seed} reduction");
                }
            }
            Err(Error::ImpossibleEvidence) => {
                for (name, got) in [("weighted", weighted), ("joint", joint), ("jensen", jensen)] {
                    assert_eq!(got, Err(Error::ImpossibleEvidence), "seed {seed} {name}");
                }
            }
            Err(e) => panic!("seed {seed}: oracle failed with {e}"),
        }
    }
}

#[test]
fn weighted_mixing_weights_sum_to_one() {
    use beliefcore::conditioning::conditioning_infer_weighted_debug;
    for seed in 0..40u64 {
        let d = net(seed, 8, 0.5, false);
        let ev = random_evidence(&d, 1, seed * 13);
        let Ok((_, log, weights)) = conditioning_infer_weighted_debug(&d, &ev) else {
            continue;
        };
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            let normalized: f64 = weights.iter().map(|w| w / total).sum();
            assert!((normalized - 1.0).abs() < 1e-12, "seed {seed}");
        }
        assert_eq!(log.total_cases, weights.len() as u64, "seed {seed}");
    }
}

#[test]
fn min_fill_beats_mcs_on_total_clique_space_most_of_the_time() {
    let mut wins = 0;
    let mut total = 0;
    for seed in 1000..1100u64 {
        let d = net(seed, 11, 0.4, false);
        let mcs = build_join_tree_structure(&d, TriangulationMethod::Mcs).unwrap();
        let min_fill = build_join_tree_structure(&d, TriangulationMethod::MinFill).unwrap();
        assert!(mcs.running_intersection_holds(), "seed {seed}");
        assert!(min_fill.running_intersection_holds(), "seed {seed}");
        total += 1;
        if min_fill.total_universe_space() <= mcs.total_universe_space() {
            wins += 1;
        }
    }
    assert!(
        wins * 100 >= total * 80,
        "min-fill within bound on only {wins}/{total} nets"
    );
}
