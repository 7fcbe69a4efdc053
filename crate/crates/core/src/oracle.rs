//! Brute-force enumeration oracles.
//!
//! These walk the full joint state space and are exponentially slow on
//! purpose: they share no code with the real algorithms and anchor every
//! equivalence test in the crate. They are also reachable from the CLI
//! (`--algorithm oracle`) for small diagrams.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{advance_config, Beliefs, Diagram, Evidence, NodeId, NodeKind};
use crate::reduction::{DecisionRule, Policy, SolveResult};

/// Joint state spaces above this bound are rejected with `TooLarge`.
pub const ORACLE_STATE_LIMIT: u128 = 10_000_000;

struct Layout<'a> {
    ids: Vec<&'a NodeId>,
    cards: Vec<usize>,
    /// Positions of each node's parents within `ids`.
    parent_pos: Vec<Vec<usize>>,
}

impl<'a> Layout<'a> {
    fn new(d: &'a Diagram) -> Result<Self> {
        let ids: Vec<&NodeId> = d.node_ids().collect();
        let index: BTreeMap<&str, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut cards = Vec::with_capacity(ids.len());
        let mut parent_pos = Vec::with_capacity(ids.len());
        let mut total: u128 = 1;
        for id in &ids {
            let node = d.node(id.as_str()).expect("listed node");
            cards.push(node.card());
            total = total.saturating_mul(node.card() as u128);
            parent_pos.push(node.parents().iter().map(|p| index[p.as_str()]).collect());
        }
        if total > ORACLE_STATE_LIMIT {
            return Err(Error::TooLarge { states: total, limit: ORACLE_STATE_LIMIT });
        }
        Ok(Layout { ids, cards, parent_pos })
    }

    /// Probability of one full configuration: the product of every node's
    /// table entry under its parents' states.
    fn weight(&self, d: &Diagram, config: &[usize]) -> f64 {
        let mut scratch: Vec<usize> = Vec::new();
        let mut w = 1.0;
        for (i, id) in self.ids.iter().enumerate() {
            let node = d.node(id.as_str()).expect("listed node");
            scratch.clear();
            scratch.extend(self.parent_pos[i].iter().map(|&p| config[p]));
            w *= node.table().expect("chance table").row(&scratch)[config[i]];
            if w == 0.0 {
                return 0.0;
            }
        }
        w
    }
}

/// Exact posteriors for a belief network by full enumeration of the joint
/// distribution. Returns `ImpossibleEvidence` iff the evidence has
/// probability zero.
pub fn joint_enumeration_oracle(d: &Diagram, evidence: &Evidence) -> Result<Beliefs> {
    if !d.is_belief_net() {
        return Err(Error::NotBeliefNet);
    }
    evidence.validate(d)?;
    let layout = Layout::new(d)?;
    let n = layout.ids.len();
    let mut accum: Vec<Vec<f64>> = layout.cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut total = 0.0;

    // Evidence nodes are clamped: their odometer digit has a single value.
    let domains: Vec<(usize, usize)> = layout
        .ids
        .iter()
        .zip(layout.cards.iter())
        .map(|(id, &card)| match evidence.get(id.as_str()) {
            Some(s) => (s, s + 1),
            None => (0, card),
        })
        .collect();
    let mut config: Vec<usize> = domains.iter().map(|&(lo, _)| lo).collect();
    let spans: Vec<usize> = domains.iter().map(|&(lo, hi)| hi - lo).collect();
    let mut offsets: Vec<usize> = vec![0; n];
    loop {
        let w = layout.weight(d, &config);
        if w > 0.0 {
            total += w;
            for (i, &s) in config.iter().enumerate() {
                accum[i][s] += w;
            }
        }
        if !advance_config(&mut offsets, &spans) {
            break;
        }
        for i in 0..n {
            config[i] = domains[i].0 + offsets[i];
        }
    }
    if total <= 0.0 {
        return Err(Error::ImpossibleEvidence);
    }
    let mut posteriors = BTreeMap::new();
    for (i, id) in layout.ids.iter().enumerate() {
        let mut v = core::mem::take(&mut accum[i]);
        for x in v.iter_mut() {
            *x /= total;
        }
        posteriors.insert((*id).clone(), v);
    }
    Ok(Beliefs::new(posteriors, Some(total)))
}

/// Exact joint marginal over `keep` (sorted by id), row-major, by full
/// enumeration. Used to check that transformations preserve the joint over
/// surviving nodes.
pub fn joint_over(d: &Diagram, keep: &[&str]) -> Result<(Vec<NodeId>, Vec<f64>)> {
    if !d.is_belief_net() {
        return Err(Error::NotBeliefNet);
    }
    let layout = Layout::new(d)?;
    let mut kept: Vec<usize> = Vec::with_capacity(keep.len());
    for id in keep {
        let pos = layout
            .ids
            .iter()
            .position(|n| n.as_str() == *id)
            .ok_or_else(|| Error::UnknownNode(NodeId::from(*id)))?;
        kept.push(pos);
    }
    kept.sort_unstable();
    kept.dedup();
    let kept_cards: Vec<usize> = kept.iter().map(|&i| layout.cards[i]).collect();
    let mut marginal = vec![0.0; kept_cards.iter().product::<usize>().max(1)];
    let mut config = vec![0usize; layout.ids.len()];
    loop {
        let w = layout.weight(d, &config);
        if w > 0.0 {
            let mut idx = 0;
            for (&pos, &card) in kept.iter().zip(kept_cards.iter()) {
                idx = idx * card + config[pos];
            }
            marginal[idx] += w;
        }
        if !advance_config(&mut config, &layout.cards) {
            break;
        }
    }
    Ok((kept.iter().map(|&i| layout.ids[i].clone()).collect(), marginal))
}

/// Expected utility of a fixed policy, by full enumeration over all chance
/// and decision configurations.
pub fn policy_expected_utility(d: &Diagram, policy: &Policy) -> Result<f64> {
    let value = d.value_node().ok_or(Error::NoValueNode)?;
    let chance_part = non_value_part(d)?;
    let layout = Layout::new(&chance_part)?;
    let index: BTreeMap<&str, usize> =
        layout.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let value_parent_pos: Vec<usize> =
        value.parents().iter().map(|p| index[p.as_str()]).collect();
    let decision_pos: Vec<(usize, &DecisionRule)> = d
        .decision_nodes()
        .iter()
        .map(|n| {
            let rule = policy
                .rule(n.id().as_str())
                .ok_or_else(|| Error::UnknownNode(n.id().clone()))?;
            Ok((index[n.id().as_str()], rule))
        })
        .collect::<Result<_>>()?;

    let mut eu = 0.0;
    let mut config = vec![0usize; layout.ids.len()];
    let mut scratch: Vec<usize> = Vec::new();
    loop {
        let mut consistent = true;
        for (pos, rule) in &decision_pos {
            scratch.clear();
            scratch.extend(rule.info_parents.iter().map(|p| config[index[p.as_str()]]));
            if rule.choice(&scratch) != config[*pos] {
                consistent = false;
                break;
            }
        }
        if consistent {
            let mut w = 1.0;
            for (i, id) in layout.ids.iter().enumerate() {
                let node = chance_part.node(id.as_str()).expect("listed node");
                if !node.kind().is_chance_like() {
                    continue;
                }
                scratch.clear();
                scratch.extend(layout.parent_pos[i].iter().map(|&p| config[p]));
                w *= node.table().expect("chance table").row(&scratch)[config[i]];
                if w == 0.0 {
                    break;
                }
            }
            if w > 0.0 {
                scratch.clear();
                scratch.extend(value_parent_pos.iter().map(|&p| config[p]));
                eu += w * value.table().expect("value table").row(&scratch)[0];
            }
        }
        if !advance_config(&mut config, &layout.cards) {
            break;
        }
    }
    Ok(eu)
}

/// Optimal policy by exhaustive enumeration of every decision rule.
///
/// Independent of the reduction machinery; intended as the oracle for
/// influence-diagram evaluation. Rules are enumerated with alternatives
/// ascending, and only strictly better expected utility replaces the
/// incumbent, so ties resolve toward the lowest alternative indices.
pub fn exhaustive_policy_search(d: &Diagram) -> Result<SolveResult> {
    let decisions = d.decision_nodes();
    if d.value_node().is_none() {
        return Err(Error::NoValueNode);
    }
    let mut rule_shapes: Vec<(NodeId, Vec<NodeId>, Vec<usize>, usize, usize)> = Vec::new();
    let mut policy_count: u128 = 1;
    for node in &decisions {
        let info_parents: Vec<NodeId> = node.parents().to_vec();
        let info_cards: Vec<usize> = info_parents
            .iter()
            .map(|p| d.require(p.as_str()).map(|n| n.card()))
            .collect::<Result<_>>()?;
        let configs: usize = info_cards.iter().product();
        let alternatives = node.states().len();
        policy_count =
            policy_count.saturating_mul((alternatives as u128).saturating_pow(configs as u32));
        rule_shapes.push((node.id().clone(), info_parents, info_cards, configs, alternatives));
    }
    if policy_count > 1_000_000 {
        return Err(Error::TooLarge { states: policy_count, limit: 1_000_000 });
    }

    // One odometer digit per (decision, information configuration).
    let mut digits: Vec<usize> = Vec::new();
    let mut digit_cards: Vec<usize> = Vec::new();
    for (_, _, _, configs, alternatives) in &rule_shapes {
        digits.extend(core::iter::repeat_n(0, *configs));
        digit_cards.extend(core::iter::repeat_n(*alternatives, *configs));
    }
    let mut best: Option<SolveResult> = None;
    loop {
        let mut rules = BTreeMap::new();
        let mut offset = 0;
        for (id, info_parents, info_cards, configs, _) in &rule_shapes {
            rules.insert(
                id.clone(),
                DecisionRule {
                    decision: id.clone(),
                    info_parents: info_parents.clone(),
                    info_cards: info_cards.clone(),
                    choices: digits[offset..offset + configs].to_vec(),
                },
            );
            offset += configs;
        }
        let policy = Policy::new(rules);
        let eu = policy_expected_utility(d, &policy)?;
        let better = match &best {
            None => true,
            Some(incumbent) => eu > incumbent.expected_utility,
        };
        if better {
            best = Some(SolveResult { policy, expected_utility: eu });
        }
        if !advance_config(&mut digits, &digit_cards) {
            break;
        }
    }
    Ok(best.expect("at least the all-zeros policy was scored"))
}

/// The diagram minus its value node, for joint-space layout purposes.
fn non_value_part(d: &Diagram) -> Result<Diagram> {
    let mut out = d.clone();
    let value_ids: Vec<NodeId> = out
        .nodes()
        .filter(|n| n.kind() == NodeKind::Value)
        .map(|n| n.id().clone())
        .collect();
    for id in value_ids {
        out.nodes.remove(id.as_str());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;
    use crate::model::{build_diagram, NodeSpec};

    #[test]
    fn chain_posterior_matches_hand_enumeration() {
        let d = fixture("FIX-CHAIN").unwrap();
        let beliefs = joint_enumeration_oracle(&d, &Evidence::none()).unwrap();
        assert!((beliefs.get("B").unwrap()[0] - 0.31).abs() < 1e-12);
        assert!((beliefs.evidence_probability().unwrap() - 1.0).abs() < 1e-12);

        let ev = Evidence::single(&d, "B", "t").unwrap();
        let beliefs = joint_enumeration_oracle(&d, &ev).unwrap();
        assert!((beliefs.get("A").unwrap()[0] - 24.0 / 31.0).abs() < 1e-12);
        assert!((beliefs.get("B").unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((beliefs.evidence_probability().unwrap() - 0.31).abs() < 1e-12);
    }

    #[test]
    fn diamond_posterior_matches_hand_enumeration() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let beliefs = joint_enumeration_oracle(&d, &Evidence::none()).unwrap();
        assert!((beliefs.get("D").unwrap()[0] - 0.5655).abs() < 1e-12);

        let ev = Evidence::single(&d, "D", "t").unwrap();
        let beliefs = joint_enumeration_oracle(&d, &ev).unwrap();
        assert!((beliefs.get("A").unwrap()[0] - 0.4416 / 0.5655).abs() < 1e-12);
    }

    #[test]
    fn impossible_evidence_is_detected() {
        let d = fixture("FIX-ZERO").unwrap();
        let mut ev = Evidence::none();
        ev.observe(&d, "A", "t").unwrap();
        ev.observe(&d, "B", "f").unwrap();
        assert_eq!(joint_enumeration_oracle(&d, &ev), Err(Error::ImpossibleEvidence));
    }

    #[test]
    fn state_space_guard() {
        let specs: Vec<NodeSpec> = (0..24)
            .map(|i| {
                NodeSpec::chance(&alloc::format!("n{i:02}"), &["a", "b"], &[], vec![vec![0.5, 0.5]])
            })
            .collect();
        let d = build_diagram("big", &specs).unwrap();
        assert!(matches!(
            joint_enumeration_oracle(&d, &Evidence::none()),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn joint_over_marginalizes() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let (ids, joint) = joint_over(&d, &["D"]).unwrap();
        assert_eq!(ids.len(), 1);
        assert!((joint[0] - 0.5655).abs() < 1e-12);
        assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
