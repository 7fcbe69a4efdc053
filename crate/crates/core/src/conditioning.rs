//! Cutset conditioning for multiply connected belief networks.
//!
//! A loop cutset is found heuristically, the cutset nodes' outgoing arcs
//! are cut by slicing their children's tables at each cutset state, and
//! Pearl propagation runs on the singly connected remainder once per
//! cutset case. Two combination schemes are provided: explicit mixing
//! weights per case, and joint-scale accumulation normalized once at the
//! end.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Beliefs, Diagram, Evidence, NodeId};
use crate::polytree;

/// A loop cutset: clamping all of its nodes makes the remaining network
/// singly connected. Nodes are kept in graph order; cases enumerate their
/// joint states row-major with the first node most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutset {
    pub nodes: Vec<NodeId>,
    pub cards: Vec<usize>,
}

impl Cutset {
    pub fn case_count(&self) -> u64 {
        self.cards.iter().map(|&c| c as u64).product()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Case bookkeeping of a conditioning run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CutsetCaseLog {
    pub total_cases: u64,
    pub skipped_cases: u64,
    pub evaluated_cases: u64,
}

/// Finds a loop cutset with the max-degree heuristic.
///
/// Nodes of undirected degree one or less are stripped repeatedly; among
/// the remaining cyclic core, the candidates are the nodes with at most
/// one incoming arc inside the core (cutting their outgoing arcs then
/// breaks every loop through them), and the candidate of maximum degree is
/// taken, ties by ascending id. Polynomial time; minimality is not
/// attempted.
pub fn find_loop_cutset(d: &Diagram) -> Result<Cutset> {
    if !d.is_belief_net() {
        return Err(Error::NotBeliefNet);
    }
    let order = d.graph_order()?;
    let position: BTreeMap<&str, usize> =
        order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let n = order.len();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, id) in order.iter().enumerate() {
        let node = d.node(id.as_str()).expect("listed node");
        for p in node.parents() {
            let pi = position[p.as_str()];
            parents[i].push(pi);
            neighbors[i].push(pi);
            neighbors[pi].push(i);
        }
    }
    let mut alive = vec![true; n];
    let mut cutset: Vec<usize> = Vec::new();
    loop {
        // Strip the acyclic fringe.
        loop {
            let mut stripped = false;
            for x in 0..n {
                if alive[x] && degree(&neighbors, &alive, x) <= 1 {
                    alive[x] = false;
                    stripped = true;
                }
            }
            if !stripped {
                break;
            }
        }
        if alive.iter().all(|&a| !a) {
            break;
        }
        // Candidates: at most one incoming arc inside the core.
        let candidate = (0..n)
            .filter(|&x| alive[x])
            .filter(|&x| parents[x].iter().filter(|&&p| alive[p]).count() <= 1)
            .max_by_key(|&x| (degree(&neighbors, &alive, x), core::cmp::Reverse(x)))
            .expect("a DAG core has a parentless node");
        alive[candidate] = false;
        cutset.push(candidate);
    }
    cutset.sort_unstable();
    let nodes: Vec<NodeId> = cutset.iter().map(|&i| order[i].clone()).collect();
    let cards: Vec<usize> = nodes
        .iter()
        .map(|id| d.node(id.as_str()).expect("listed node").states().len())
        .collect();
    Ok(Cutset { nodes, cards })
}

fn degree(neighbors: &[Vec<usize>], alive: &[bool], x: usize) -> usize {
    neighbors[x].iter().filter(|&&y| alive[y]).count()
}

/// Cutset conditioning with explicit mixing weights.
///
/// Each cutset case contributes its per-node conditionals weighted by the
/// case's probability. Cases whose weight is provably zero are skipped:
/// subtrees of the case enumeration fall to a zero prefix factor without
/// being enumerated, and fully evaluated cases with a zero normalizer are
/// dropped individually. If every case is skipped the evidence itself is
/// impossible.
pub fn conditioning_infer_weighted(
    d: &Diagram,
    evidence: &Evidence,
) -> Result<(Beliefs, CutsetCaseLog)> {
    run_weighted(d, evidence, true).map(|(b, log, _)| (b, log))
}

/// Verification mode of [`conditioning_infer_weighted`]: enumerates every
/// case without prefix pruning and also returns each case's weight
/// (indexed by case rank), so tests can confirm that skipped cases carry
/// no mass.
pub fn conditioning_infer_weighted_debug(
    d: &Diagram,
    evidence: &Evidence,
) -> Result<(Beliefs, CutsetCaseLog, Vec<f64>)> {
    run_weighted(d, evidence, false)
}

fn run_weighted(
    d: &Diagram,
    evidence: &Evidence,
    prune: bool,
) -> Result<(Beliefs, CutsetCaseLog, Vec<f64>)> {
    let run = Run::prepare(d, evidence)?;
    let mut log = CutsetCaseLog { total_cases: run.total_cases(), ..Default::default() };
    let mut acc: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    let mut total_weight = 0.0;
    let mut weights: Vec<f64> = Vec::new();

    run.for_each_case(prune, &mut |outcome| {
        match outcome {
            CaseOutcome::PrunedSubtree { cases } => {
                log.skipped_cases += cases;
            }
            CaseOutcome::Evaluated { propagation } => {
                let weight = propagation.evidence_probability();
                weights.push(weight);
                if weight == 0.0 {
                    log.skipped_cases += 1;
                    return;
                }
                log.evaluated_cases += 1;
                total_weight += weight;
                for (x, id) in propagation.ids.iter().enumerate() {
                    let z = run.component_z(propagation, x);
                    let entry = acc
                        .entry(id.clone())
                        .or_insert_with(|| vec![0.0; propagation.bel[x].len()]);
                    for (a, &b) in entry.iter_mut().zip(propagation.bel[x].iter()) {
                        // weight * P(x | case, evidence)
                        *a += weight * (b / z);
                    }
                }
            }
        }
    })?;

    if total_weight <= 0.0 {
        debug_assert_eq!(log.skipped_cases, log.total_cases);
        return Err(Error::ImpossibleEvidence);
    }
    for v in acc.values_mut() {
        for x in v.iter_mut() {
            *x /= total_weight;
        }
    }
    Ok((Beliefs::new(acc, Some(total_weight)), log, weights))
}

/// Cutset conditioning in joint scale: per-case unnormalized beliefs are
/// accumulated over all cases and normalized once at the end, so no
/// conditional is formed per case. Impossible evidence surfaces as a zero
/// normalizer during that final normalization.
pub fn conditioning_infer_joint(d: &Diagram, evidence: &Evidence) -> Result<Beliefs> {
    let run = Run::prepare(d, evidence)?;
    let mut acc: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    let mut total = 0.0;

    run.for_each_case(false, &mut |outcome| {
        if let CaseOutcome::Evaluated { propagation } = outcome {
            total += propagation.evidence_probability();
            for (x, id) in propagation.ids.iter().enumerate() {
                // Scale by the other components' normalizers: pure products,
                // never a division.
                let scale = run.other_components_z(propagation, x);
                let entry = acc
                    .entry(id.clone())
                    .or_insert_with(|| vec![0.0; propagation.bel[x].len()]);
                for (a, &b) in entry.iter_mut().zip(propagation.bel[x].iter()) {
                    *a += scale * b;
                }
            }
        }
    })?;

    let mut posteriors = BTreeMap::new();
    for (id, mut v) in acc {
        let z: f64 = v.iter().sum();
        if z <= 0.0 {
            return Err(Error::ImpossibleEvidence);
        }
        for x in v.iter_mut() {
            *x /= z;
        }
        posteriors.insert(id, v);
    }
    if posteriors.is_empty() {
        return Err(Error::ImpossibleEvidence);
    }
    Ok(Beliefs::new(posteriors, Some(total)))
}

enum CaseOutcome<'a> {
    /// A whole subtree of cases fell to a zero prefix factor.
    PrunedSubtree { cases: u64 },
    Evaluated { propagation: &'a polytree::Propagation },
}

/// Shared setup for one conditioning run.
struct Run<'a> {
    diagram: &'a Diagram,
    evidence: &'a Evidence,
    cutset: Cutset,
    /// Case-enumeration domain per cutset node: evidence clamps it.
    domains: Vec<Vec<usize>>,
}

impl<'a> Run<'a> {
    fn prepare(d: &'a Diagram, evidence: &'a Evidence) -> Result<Run<'a>> {
        if !d.is_belief_net() {
            return Err(Error::NotBeliefNet);
        }
        evidence.validate(d)?;
        let cutset = find_loop_cutset(d)?;
        let domains: Vec<Vec<usize>> = cutset
            .nodes
            .iter()
            .zip(cutset.cards.iter())
            .map(|(id, &card)| match evidence.get(id.as_str()) {
                Some(s) => vec![s],
                None => (0..card).collect(),
            })
            .collect();
        Ok(Run { diagram: d, evidence, cutset, domains })
    }

    fn total_cases(&self) -> u64 {
        self.domains.iter().map(|d| d.len() as u64).product()
    }

    /// Normalizer of the component containing node `x`.
    fn component_z(&self, propagation: &polytree::Propagation, x: usize) -> f64 {
        propagation.component_z[propagation.component_of[x]]
    }

    /// Product of every other component's normalizer.
    fn other_components_z(&self, propagation: &polytree::Propagation, x: usize) -> f64 {
        let mine = propagation.component_of[x];
        propagation
            .component_z
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != mine)
            .map(|(_, &z)| z)
            .product()
    }

    /// Depth-first enumeration of the cutset cases. With `prune` set,
    /// a prefix whose newly determined table factor is exactly zero cuts
    /// the whole subtree; the callback sees how many cases died.
    fn for_each_case(
        &self,
        prune: bool,
        visit: &mut dyn FnMut(CaseOutcome<'_>),
    ) -> Result<()> {
        let mut assignment: Vec<usize> = Vec::new();
        self.descend(prune, &mut assignment, visit)
    }

    fn descend(
        &self,
        prune: bool,
        assignment: &mut Vec<usize>,
        visit: &mut dyn FnMut(CaseOutcome<'_>),
    ) -> Result<()> {
        let depth = assignment.len();
        if prune && self.prefix_is_impossible(assignment) {
            let remaining: u64 =
                self.domains[depth..].iter().map(|d| d.len() as u64).product();
            visit(CaseOutcome::PrunedSubtree { cases: remaining });
            return Ok(());
        }
        if depth == self.cutset.nodes.len() {
            let (sliced, case_evidence) = self.clamp(assignment)?;
            let propagation = polytree::propagate(&sliced, &case_evidence)?;
            visit(CaseOutcome::Evaluated { propagation: &propagation });
            return Ok(());
        }
        for &state in &self.domains[depth] {
            assignment.push(state);
            self.descend(prune, assignment, visit)?;
            assignment.pop();
        }
        Ok(())
    }

    /// True iff some node determined by the evidence plus the cutset
    /// prefix has a zero table factor, which forces P(prefix, evidence)
    /// to zero. Only exact zeros prune, so skipped cases provably carry
    /// no weight.
    fn prefix_is_impossible(&self, assignment: &[usize]) -> bool {
        let mut known: BTreeMap<&str, usize> = BTreeMap::new();
        for (id, s) in self.evidence.iter() {
            known.insert(id.as_str(), s);
        }
        for (id, &s) in self.cutset.nodes.iter().zip(assignment.iter()) {
            known.insert(id.as_str(), s);
        }
        let mut cfg: Vec<usize> = Vec::new();
        for (&id, &state) in &known {
            let node = self.diagram.node(id).expect("known node");
            cfg.clear();
            let mut determined = true;
            for p in node.parents() {
                match known.get(p.as_str()) {
                    Some(&ps) => cfg.push(ps),
                    None => {
                        determined = false;
                        break;
                    }
                }
            }
            if determined && node.table().expect("chance table").row(&cfg)[state] == 0.0 {
                return true;
            }
        }
        false
    }

    /// The case diagram: every cutset node's outgoing arcs are cut by
    /// slicing the child tables at the case states, and the cutset
    /// assignment joins the evidence.
    fn clamp(&self, assignment: &[usize]) -> Result<(Diagram, Evidence)> {
        let mut sliced = self.diagram.clone();
        for (id, &state) in self.cutset.nodes.iter().zip(assignment.iter()) {
            let children = sliced.children_map()[id.as_str()].clone();
            for child in children {
                let node = sliced.node_mut(child.as_str()).expect("child exists");
                let table = node.table.as_ref().expect("chance table");
                let pos = table.parent_pos(id).expect("arc exists");
                node.table = Some(table.slice_parent(pos, state));
                node.parents.retain(|p| p != id);
            }
        }
        let mut case_evidence = self.evidence.clone();
        for (id, &state) in self.cutset.nodes.iter().zip(assignment.iter()) {
            case_evidence.observe_index(&sliced, id.as_str(), state)?;
        }
        Ok((sliced, case_evidence))
    }
}

#[cfg(test)]
mod tests {
    use alloc::string::{String, ToString};

    use super::*;
    use crate::fixtures::fixture;
    use crate::model::{build_diagram, NodeSpec};
    use crate::oracle::joint_enumeration_oracle;

    #[test]
    fn diamond_cutset_is_the_root() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let cutset = find_loop_cutset(&d).unwrap();
        assert_eq!(cutset.nodes, vec![NodeId::from("A")]);
    }

    #[test]
    fn polytree_has_empty_cutset() {
        let d = fixture("FIX-CHAIN").unwrap();
        let cutset = find_loop_cutset(&d).unwrap();
        assert!(cutset.is_empty());
        assert_eq!(cutset.case_count(), 1);
    }

    #[test]
    fn stacked_diamonds_need_two_cutset_nodes() {
        let mut specs = Vec::new();
        for (prefix, root_parent) in [("p", None), ("q", Some("pD"))] {
            let id = |s: &str| alloc::format!("{prefix}{s}");
            let root_parents: Vec<String> = root_parent.iter().map(|s: &&str| (*s).to_string()).collect();
            let root_refs: Vec<&str> = root_parents.iter().map(String::as_str).collect();
            let rows = if root_parent.is_none() { vec![vec![0.5, 0.5]] } else { vec![vec![0.5, 0.5]; 2] };
            specs.push(NodeSpec::chance(&id("A"), &["t", "f"], &root_refs, rows));
            specs.push(NodeSpec::chance(
                &id("B"),
                &["t", "f"],
                &[&id("A")],
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            ));
            specs.push(NodeSpec::chance(
                &id("C"),
                &["t", "f"],
                &[&id("A")],
                vec![vec![0.7, 0.3], vec![0.1, 0.9]],
            ));
            specs.push(NodeSpec::chance(
                &id("D"),
                &["t", "f"],
                &[&id("B"), &id("C")],
                vec![vec![0.99, 0.01], vec![0.8, 0.2], vec![0.6, 0.4], vec![0.05, 0.95]],
            ));
        }
        let d = build_diagram("two-diamonds", &specs).unwrap();
        let cutset = find_loop_cutset(&d).unwrap();
        assert_eq!(cutset.nodes.len(), 2);
    }

    #[test]
    fn weighted_matches_oracle_on_diamond() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let ev = Evidence::single(&d, "D", "t").unwrap();
        let (beliefs, log) = conditioning_infer_weighted(&d, &ev).unwrap();
        assert!((beliefs.get("A").unwrap()[0] - 0.4416 / 0.5655).abs() < 1e-12);
        assert_eq!(log.total_cases, 2);
        assert_eq!(log.skipped_cases, 0);
        assert_eq!(log.evaluated_cases, 2);
        assert!((beliefs.evidence_probability().unwrap() - 0.5655).abs() < 1e-12);

        let oracle = joint_enumeration_oracle(&d, &ev).unwrap();
        assert!(beliefs.linf(&oracle) < 1e-12);
    }

    #[test]
    fn joint_variant_agrees_with_weighted() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let ev = Evidence::single(&d, "D", "t").unwrap();
        let (weighted, _) = conditioning_infer_weighted(&d, &ev).unwrap();
        let joint = conditioning_infer_joint(&d, &ev).unwrap();
        assert!(weighted.linf(&joint) < 1e-12);

        let no_ev = conditioning_infer_joint(&d, &Evidence::none()).unwrap();
        assert!((no_ev.get("D").unwrap()[0] - 0.5655).abs() < 1e-12);
    }

    #[test]
    fn impossible_evidence_in_loopy_net() {
        // FIX-ZERO embedded in a diamond: evidence (A=t, B=f) is
        // impossible because P(B=t | A=t) = 1.
        let d = build_diagram(
            "zero-loop",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
                NodeSpec::chance("B", &["t", "f"], &["A"], vec![vec![1.0, 0.0], vec![0.4, 0.6]]),
                NodeSpec::chance("C", &["t", "f"], &["A"], vec![vec![0.7, 0.3], vec![0.1, 0.9]]),
                NodeSpec::chance(
                    "D",
                    &["t", "f"],
                    &["B", "C"],
                    vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.6, 0.4], vec![0.1, 0.9]],
                ),
            ],
        )
        .unwrap();
        let mut ev = Evidence::none();
        ev.observe(&d, "A", "t").unwrap();
        ev.observe(&d, "B", "f").unwrap();
        let weighted = conditioning_infer_weighted(&d, &ev);
        assert_eq!(weighted, Err(Error::ImpossibleEvidence));
        assert_eq!(conditioning_infer_joint(&d, &ev), Err(Error::ImpossibleEvidence));
    }
}
