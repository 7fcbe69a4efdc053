//! Influence-diagram evaluation and query-style inference by successive
//! transformations: barren-node removal, chance-node absorption into the
//! value node, arc reversal and maximization over decisions.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{
    advance_config, config_index, state_space, Beliefs, ConditionalTable, Diagram, Evidence,
    NodeId, NodeKind,
};
use crate::transforms;

/// A decision rule: the chosen alternative for every configuration of the
/// decision's information parents (row-major, parents in stored order).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRule {
    pub decision: NodeId,
    pub info_parents: Vec<NodeId>,
    pub info_cards: Vec<usize>,
    pub choices: Vec<usize>,
}

impl DecisionRule {
    /// Alternative chosen under one information configuration.
    pub fn choice(&self, config: &[usize]) -> usize {
        self.choices[config_index(config, &self.info_cards)]
    }

    fn constant(decision: NodeId, info_parents: Vec<NodeId>, info_cards: Vec<usize>) -> Self {
        let configs = state_space(&info_cards);
        DecisionRule { decision, info_parents, info_cards, choices: vec![0; configs] }
    }
}

/// One rule per decision node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Policy {
    rules: BTreeMap<NodeId, DecisionRule>,
}

impl Policy {
    pub fn new(rules: BTreeMap<NodeId, DecisionRule>) -> Self {
        Policy { rules }
    }

    pub fn rule(&self, decision: &str) -> Option<&DecisionRule> {
        self.rules.get(decision)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Rules in ascending decision id order.
    pub fn iter(&self) -> impl Iterator<Item = &DecisionRule> {
        self.rules.values()
    }
}

/// Optimal policy and its expected utility.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub policy: Policy,
    pub expected_utility: f64,
}

/// Evaluates an influence diagram for the optimal policy by repeated
/// transformations on an internal copy.
///
/// Requires exactly one value node, decisions totally ordered by
/// information precedence, and the no-forgetting property (each later
/// decision observes every earlier decision and its information). Ties in
/// maximization break toward the lowest alternative index.
pub fn evaluate_influence_diagram(d: &Diagram) -> Result<SolveResult> {
    let value_id = single_value_node(d)?;
    let decision_order = ordered_decisions(d)?;

    let mut work = d.clone();
    let mut rules: BTreeMap<NodeId, DecisionRule> = BTreeMap::new();
    let mut pending: Vec<NodeId> = decision_order;

    loop {
        sweep_barren(&mut work, &value_id, &mut rules, &mut pending)?;
        if work.len() == 1 {
            break;
        }
        let value_parents: Vec<NodeId> =
            work.require(value_id.as_str())?.parents().to_vec();

        // Expectation: a chance parent of the value node whose only child
        // is the value node can be absorbed directly.
        let children = work.children_map();
        let mut absorbable: Vec<&NodeId> = value_parents
            .iter()
            .filter(|p| {
                let node = work.node(p.as_str()).expect("parent exists");
                node.kind().is_chance_like() && children[p.as_str()].len() == 1
            })
            .collect();
        if !absorbable.is_empty() {
            absorbable.sort_by_key(|p| (expectation_cost(&work, &value_id, p), (*p).clone()));
            let chosen = absorbable[0].clone();
            absorb_into_value(&mut work, &value_id, &chosen)?;
            continue;
        }

        // Maximization: the last pending decision is removable once every
        // other value parent is part of its information set.
        if let Some(last) = pending.last().cloned() {
            let info: Vec<NodeId> = work.require(last.as_str())?.parents().to_vec();
            let ready = value_parents
                .iter()
                .all(|p| *p == last || info.contains(p));
            if value_parents.contains(&last) && ready {
                let rule = maximize_decision(&mut work, &value_id, &last)?;
                rules.insert(last.clone(), rule);
                pending.pop();
                continue;
            }
        }

        // Otherwise reverse arcs out of some chance parent of the value
        // node until its only child is the value node, then absorb it.
        // Parents that inform a pending decision are left alone; they fall
        // to one of the cases above after that decision is maximized.
        let blocked: alloc::collections::BTreeSet<NodeId> = pending
            .last()
            .map(|last| {
                let mut set: alloc::collections::BTreeSet<NodeId> =
                    work.node(last.as_str()).expect("pending decision").parents().iter().cloned().collect();
                set.insert(last.clone());
                set
            })
            .unwrap_or_default();
        let mut candidates: Vec<&NodeId> = value_parents
            .iter()
            .filter(|p| {
                let node = work.node(p.as_str()).expect("parent exists");
                node.kind().is_chance_like() && !blocked.contains(p.as_str())
            })
            .collect();
        if candidates.is_empty() {
            // No chance parent is free; with a consistent, no-forgetting
            // diagram this cannot happen.
            return Err(Error::DecisionsUnordered);
        }
        candidates.sort_by_key(|p| (expectation_cost(&work, &value_id, p), (*p).clone()));
        let chosen = candidates[0].clone();
        reverse_out_of(&mut work, &value_id, &chosen)?;
        absorb_into_value(&mut work, &value_id, &chosen)?;
    }

    let value = work.require(value_id.as_str())?;
    debug_assert!(value.parents().is_empty());
    let expected_utility = value.table().expect("value table").rows()[0][0];
    Ok(SolveResult { policy: Policy::new(rules), expected_utility })
}

/// Posterior of `target` given `evidence`, computed purely by diagram
/// transformations: barren-node removal, arc reversals that make each
/// evidence node a root, evidence absorption into its children, and
/// absorption of the remaining non-target nodes.
///
/// Detects impossible evidence from the zero marginal on the evidence
/// configuration instead of returning a formally consistent but meaningless
/// distribution.
pub fn reduction_query(d: &Diagram, target: &str, evidence: &Evidence) -> Result<Beliefs> {
    if !d.is_belief_net() {
        return Err(Error::NotBeliefNet);
    }
    let target_node = d.require(target)?;
    let target_id = target_node.id().clone();
    let target_card = target_node.card();
    evidence.validate(d)?;

    let mut keep: Vec<NodeId> = evidence.iter().map(|(id, _)| id.clone()).collect();
    if !evidence.contains(target) {
        keep.push(target_id.clone());
    }
    let mut work = d.clone();
    let keep_refs: Vec<&str> = keep.iter().map(|id| id.as_str()).collect();
    transforms::remove_all_barren_in_place(&mut work, &keep_refs)?;

    let evidence_probability = absorb_evidence(&mut work, evidence)?;

    if let Some(state) = evidence.get(target) {
        let mut row = vec![0.0; target_card];
        row[state] = 1.0;
        let mut posteriors = BTreeMap::new();
        posteriors.insert(target_id, row);
        return Ok(Beliefs::new(posteriors, Some(evidence_probability)));
    }

    // Absorb everything else, smallest projected table first.
    loop {
        transforms::remove_all_barren_in_place(&mut work, &[target_id.as_str()])?;
        if work.len() == 1 {
            break;
        }
        let mut others: Vec<NodeId> =
            work.node_ids().filter(|id| **id != target_id).cloned().collect();
        others.sort_by_key(|id| (absorption_cost(&work, id), id.clone()));
        let chosen = others[0].clone();
        transforms::absorb_chance_node_in_place(&mut work, chosen.as_str())?;
    }

    let node = work.require(target_id.as_str())?;
    debug_assert!(node.parents().is_empty());
    let row = node.table().expect("chance table").rows()[0].clone();
    let mut posteriors = BTreeMap::new();
    posteriors.insert(target_id, row);
    Ok(Beliefs::new(posteriors, Some(evidence_probability)))
}

/// Reverses incoming arcs until each evidence node is a root, multiplies
/// its prior at the observed state into the running evidence probability,
/// slices it out of its children and removes it. Returns the probability
/// of the full evidence configuration; fails with `ImpossibleEvidence` as
/// soon as a zero marginal is met.
fn absorb_evidence(work: &mut Diagram, evidence: &Evidence) -> Result<f64> {
    let mut probability = 1.0;
    for (id, state) in evidence.iter() {
        make_root(work, id)?;
        let node = work.require(id.as_str())?;
        let prior = node.table().expect("chance table").rows()[0].clone();
        let p = prior[state];
        if p == 0.0 {
            return Err(Error::ImpossibleEvidence);
        }
        probability *= p;
        slice_out_root(work, id, state)?;
    }
    Ok(probability)
}

/// Reverses the arcs into `id` (topologically last parent first, which can
/// never create a cycle) until it has no parents.
fn make_root(work: &mut Diagram, id: &NodeId) -> Result<()> {
    loop {
        let parents = work.require(id.as_str())?.parents().to_vec();
        if parents.is_empty() {
            return Ok(());
        }
        let order = work.graph_order()?;
        let last = order
            .iter()
            .rev()
            .find(|n| parents.contains(n))
            .expect("some parent appears in graph order")
            .clone();
        transforms::reverse_arc_in_place(work, last.as_str(), id.as_str())?;
    }
}

/// Removes a root evidence node, slicing its children's tables at the
/// observed state.
fn slice_out_root(work: &mut Diagram, id: &NodeId, state: usize) -> Result<()> {
    let children = work.children_map()[id.as_str()].clone();
    for child in children {
        let node = work.node_mut(child.as_str()).expect("child exists");
        let table = node.table.as_ref().expect("child table");
        let pos = table.parent_pos(id).expect("arc exists");
        node.table = Some(table.slice_parent(pos, state));
        node.parents.retain(|p| p != id);
    }
    work.nodes.remove(id.as_str());
    Ok(())
}

/// State-space size of the table produced by absorbing `id` into the value
/// node (the expectation step alone; reversals may grow it further).
fn expectation_cost(work: &Diagram, value_id: &NodeId, id: &NodeId) -> usize {
    let value = work.node(value_id.as_str()).expect("value node");
    let node = work.node(id.as_str()).expect("candidate");
    let mut union: Vec<&NodeId> =
        value.parents().iter().filter(|p| *p != id).collect();
    for p in node.parents() {
        if !union.contains(&p) {
            union.push(p);
        }
    }
    union
        .iter()
        .map(|p| work.node(p.as_str()).expect("parent").card())
        .product()
}

/// State-space size of the family after absorbing `id` from a belief net.
fn absorption_cost(work: &Diagram, id: &NodeId) -> usize {
    let node = work.node(id.as_str()).expect("candidate");
    let children = work.children_map();
    let mut union: Vec<&NodeId> = node.parents().iter().collect();
    let mut span: usize = 1;
    for child in &children[id.as_str()] {
        let child_node = work.node(child.as_str()).expect("child");
        span = span.saturating_mul(child_node.card());
        for p in child_node.parents() {
            if *p != *id && !union.contains(&p) {
                union.push(p);
            }
        }
    }
    union
        .iter()
        .map(|p| work.node(p.as_str()).expect("parent").card())
        .product::<usize>()
        .saturating_mul(span)
}

/// Removes barren nodes; a barren decision node gets the constant
/// lowest-alternative rule, since the value cannot depend on it.
fn sweep_barren(
    work: &mut Diagram,
    value_id: &NodeId,
    rules: &mut BTreeMap<NodeId, DecisionRule>,
    pending: &mut Vec<NodeId>,
) -> Result<()> {
    loop {
        let children = work.children_map();
        let barren: Vec<NodeId> = work
            .nodes()
            .filter(|n| n.id() != value_id && children[n.id().as_str()].is_empty())
            .map(|n| n.id().clone())
            .collect();
        if barren.is_empty() {
            return Ok(());
        }
        for id in barren {
            let node = work.require(id.as_str())?;
            if node.kind() == NodeKind::Decision {
                let info_parents: Vec<NodeId> = node.parents().to_vec();
                let info_cards: Vec<usize> = info_parents
                    .iter()
                    .map(|p| work.node(p.as_str()).expect("parent").card())
                    .collect();
                rules.insert(id.clone(), DecisionRule::constant(id.clone(), info_parents, info_cards));
                pending.retain(|p| *p != id);
            }
            work.nodes.remove(id.as_str());
        }
    }
}

/// Replaces the value table with its expectation over `id` and removes
/// `id`. Requires `id`'s only child to be the value node.
fn absorb_into_value(work: &mut Diagram, value_id: &NodeId, id: &NodeId) -> Result<()> {
    let node = work.require(id.as_str())?.clone();
    let node_table = node.table().ok_or_else(|| Error::NotChance(id.clone()))?;
    let value = work.require(value_id.as_str())?;
    let value_table = value.table().expect("value table");

    let mut new_parents: Vec<NodeId> =
        value.parents().iter().filter(|p| *p != id).cloned().collect();
    for p in node.parents() {
        if !new_parents.contains(p) {
            new_parents.push(p.clone());
        }
    }
    let new_cards: Vec<usize> = new_parents
        .iter()
        .map(|p| work.node(p.as_str()).expect("parent").card())
        .collect();

    let value_pos: Vec<Option<usize>> = value
        .parents()
        .iter()
        .map(|p| {
            if p == id { None } else { Some(new_parents.iter().position(|q| q == p).unwrap()) }
        })
        .collect();
    let node_pos: Vec<usize> = node
        .parents()
        .iter()
        .map(|p| new_parents.iter().position(|q| q == p).unwrap())
        .collect();

    let mut rows = Vec::with_capacity(state_space(&new_cards));
    let mut cfg = vec![0usize; new_cards.len()];
    let mut node_cfg: Vec<usize> = Vec::new();
    let mut value_cfg: Vec<usize> = Vec::new();
    loop {
        node_cfg.clear();
        node_cfg.extend(node_pos.iter().map(|&p| cfg[p]));
        let prior = node_table.row(&node_cfg);
        let mut expectation = 0.0;
        for (state, &p) in prior.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            value_cfg.clear();
            value_cfg.extend(value_pos.iter().map(|slot| match slot {
                None => state,
                Some(pos) => cfg[*pos],
            }));
            expectation += p * value_table.row(&value_cfg)[0];
        }
        rows.push(vec![expectation]);
        if !advance_config(&mut cfg, &new_cards) {
            break;
        }
    }

    let value = work.node_mut(value_id.as_str()).expect("value node");
    value.table = Some(ConditionalTable::new(new_parents.clone(), new_cards, rows));
    value.parents = new_parents;
    work.nodes.remove(id.as_str());
    Ok(())
}

/// Maximizes the value table over the alternatives of `decision`, records
/// the argmax as the decision's rule and leaves the decision barren.
fn maximize_decision(
    work: &mut Diagram,
    value_id: &NodeId,
    decision: &NodeId,
) -> Result<DecisionRule> {
    let decision_node = work.require(decision.as_str())?.clone();
    let alternatives = decision_node.states().len();
    let info_parents: Vec<NodeId> = decision_node.parents().to_vec();
    let info_cards: Vec<usize> = info_parents
        .iter()
        .map(|p| work.node(p.as_str()).expect("parent").card())
        .collect();

    let value = work.require(value_id.as_str())?;
    let value_table = value.table().expect("value table");
    let new_parents: Vec<NodeId> =
        value.parents().iter().filter(|p| *p != decision).cloned().collect();
    let new_cards: Vec<usize> = new_parents
        .iter()
        .map(|p| work.node(p.as_str()).expect("parent").card())
        .collect();
    let value_pos: Vec<Option<usize>> = value
        .parents()
        .iter()
        .map(|p| {
            if p == decision {
                None
            } else {
                Some(new_parents.iter().position(|q| q == p).unwrap())
            }
        })
        .collect();

    // Argmax per reduced configuration; every remaining value parent is in
    // the decision's information set, so the rule extends to the full
    // information space by replication.
    let mut rows = Vec::with_capacity(state_space(&new_cards));
    let mut best_by_cfg: Vec<usize> = Vec::with_capacity(state_space(&new_cards));
    let mut cfg = vec![0usize; new_cards.len()];
    let mut value_cfg: Vec<usize> = Vec::new();
    loop {
        let mut best_alt = 0;
        let mut best_value = f64::NEG_INFINITY;
        for alt in 0..alternatives {
            value_cfg.clear();
            value_cfg.extend(value_pos.iter().map(|slot| match slot {
                None => alt,
                Some(pos) => cfg[*pos],
            }));
            let v = value_table.row(&value_cfg)[0];
            if v > best_value {
                best_value = v;
                best_alt = alt;
            }
        }
        rows.push(vec![best_value]);
        best_by_cfg.push(best_alt);
        if !advance_config(&mut cfg, &new_cards) {
            break;
        }
    }

    // Expand the reduced-configuration argmax over the information space.
    let reduced_pos: Vec<Option<usize>> = new_parents
        .iter()
        .map(|p| info_parents.iter().position(|q| q == p))
        .collect();
    debug_assert!(reduced_pos.iter().all(Option::is_some), "no-forgetting violated");
    let info_space = state_space(&info_cards);
    let mut choices = Vec::with_capacity(info_space);
    let mut info_cfg = vec![0usize; info_cards.len()];
    let mut reduced_cfg: Vec<usize> = Vec::new();
    loop {
        reduced_cfg.clear();
        reduced_cfg.extend(reduced_pos.iter().map(|slot| info_cfg[slot.unwrap()]));
        choices.push(best_by_cfg[config_index(&reduced_cfg, &new_cards)]);
        if !advance_config(&mut info_cfg, &info_cards) {
            break;
        }
    }

    let value = work.node_mut(value_id.as_str()).expect("value node");
    value.table = Some(ConditionalTable::new(new_parents.clone(), new_cards, rows));
    value.parents = new_parents;
    work.nodes.remove(decision.as_str());
    Ok(DecisionRule { decision: decision.clone(), info_parents, info_cards, choices })
}

/// Reverses the arcs from `id` to its non-value children (graph order)
/// until the value node is its only child.
fn reverse_out_of(work: &mut Diagram, value_id: &NodeId, id: &NodeId) -> Result<()> {
    loop {
        let children = work.children_map()[id.as_str()].clone();
        let order = work.graph_order()?;
        let next = order
            .iter()
            .find(|n| *n != value_id && children.contains(n))
            .cloned();
        match next {
            None => return Ok(()),
            Some(child) => {
                transforms::reverse_arc_in_place(work, id.as_str(), child.as_str())?;
            }
        }
    }
}

fn single_value_node(d: &Diagram) -> Result<NodeId> {
    let mut values = d.nodes().filter(|n| n.kind() == NodeKind::Value);
    let first = values.next().ok_or(Error::NoValueNode)?;
    if values.next().is_some() {
        return Err(Error::MultipleValueNodes);
    }
    Ok(first.id().clone())
}

/// Decisions sorted by information precedence, with the no-forgetting
/// property verified on each consecutive pair.
fn ordered_decisions(d: &Diagram) -> Result<Vec<NodeId>> {
    let order = d.graph_order()?;
    let decisions: Vec<NodeId> = order
        .into_iter()
        .filter(|id| d.node(id.as_str()).is_some_and(|n| n.kind() == NodeKind::Decision))
        .collect();
    for pair in decisions.windows(2) {
        let earlier = d.require(pair[0].as_str())?;
        let later = d.require(pair[1].as_str())?;
        if !later.parents().contains(&pair[0]) {
            return Err(Error::DecisionsUnordered);
        }
        let observes_all = earlier
            .parents()
            .iter()
            .all(|p| later.parents().contains(p));
        if !observes_all {
            return Err(Error::NotNoForgetting {
                earlier: pair[0].clone(),
                later: pair[1].clone(),
            });
        }
    }
    Ok(decisions)
}
