//! Consistency-preserving diagram transformations: arc reversal, barren
//! node removal, chance-node absorption and deterministic-node reduction.
//!
//! Each transformation preserves the joint distribution over the surviving
//! nodes. The `*_in_place` variants mutate the diagram they are given (the
//! preconditions are checked before anything is touched); the plain
//! variants work on a copy and leave the input alone.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{
    advance_config, state_space, ConditionalTable, Diagram, Node, NodeId, NodeKind,
};

/// Reverses the arc `from -> to` by Bayes rule.
///
/// Both nodes must be chance or deterministic, and no other directed path
/// `from -> to` may exist. Afterwards both nodes carry the union of the old
/// parent sets (plus `to` as a parent of `from`) and the joint distribution
/// is unchanged. Where the new conditioning marginal is zero the
/// conditional row is set uniform, which keeps the diagram consistent; any
/// later use multiplies it by that zero marginal.
pub fn reverse_arc(d: &Diagram, from: &str, to: &str) -> Result<Diagram> {
    let mut out = d.clone();
    reverse_arc_in_place(&mut out, from, to)?;
    Ok(out)
}

pub fn reverse_arc_in_place(d: &mut Diagram, from: &str, to: &str) -> Result<()> {
    let from_node = d.require(from)?;
    let to_node = d.require(to)?;
    if !from_node.kind().is_chance_like() {
        return Err(Error::NotChance(from_node.id().clone()));
    }
    if !to_node.kind().is_chance_like() {
        return Err(Error::NotChance(to_node.id().clone()));
    }
    let from_id = from_node.id().clone();
    let to_id = to_node.id().clone();
    if !d.has_arc(from, to) {
        return Err(Error::NoSuchArc { parent: from_id, child: to_id });
    }
    if has_other_path(d, from, to) {
        return Err(Error::WouldCreateCycle { from: from_id, to: to_id });
    }

    let from_node = d.require(from)?.clone();
    let to_node = d.require(to)?.clone();
    let from_table = from_node.table().expect("chance table");
    let to_table = to_node.table().expect("chance table");
    let from_card = from_node.states().len();
    let to_card = to_node.states().len();

    // Shared conditioning context: parents of `from`, then parents of `to`
    // except `from`, without duplicates.
    let mut context: Vec<NodeId> = from_node.parents().to_vec();
    for p in to_node.parents() {
        if p != &from_id && !context.contains(p) {
            context.push(p.clone());
        }
    }
    let context_cards: Vec<usize> = context
        .iter()
        .map(|p| d.node(p.as_str()).expect("parent").card())
        .collect();
    let from_pos: Vec<usize> = from_node
        .parents()
        .iter()
        .map(|p| context.iter().position(|q| q == p).unwrap())
        .collect();
    // `to`'s old parent list with `from` marked.
    let to_pos: Vec<Option<usize>> = to_node
        .parents()
        .iter()
        .map(|p| {
            if p == &from_id { None } else { Some(context.iter().position(|q| q == p).unwrap()) }
        })
        .collect();

    let rows = state_space(&context_cards);
    let mut new_to_rows: Vec<Vec<f64>> = Vec::with_capacity(rows);
    let mut new_from_rows: Vec<Vec<f64>> = Vec::with_capacity(rows * to_card);
    let mut cfg = vec![0usize; context.len()];
    let mut from_cfg: Vec<usize> = Vec::new();
    let mut to_cfg: Vec<usize> = Vec::new();
    loop {
        from_cfg.clear();
        from_cfg.extend(from_pos.iter().map(|&p| cfg[p]));
        let prior = from_table.row(&from_cfg);

        // Joint over (from, to) in this context, then the two factors.
        let mut joint = vec![0.0; from_card * to_card];
        for a in 0..from_card {
            if prior[a] == 0.0 {
                continue;
            }
            to_cfg.clear();
            to_cfg.extend(to_pos.iter().map(|slot| match slot {
                None => a,
                Some(pos) => cfg[*pos],
            }));
            let row = to_table.row(&to_cfg);
            for b in 0..to_card {
                joint[a * to_card + b] = prior[a] * row[b];
            }
        }
        let mut marginal = vec![0.0; to_card];
        for a in 0..from_card {
            for b in 0..to_card {
                marginal[b] += joint[a * to_card + b];
            }
        }
        for b in 0..to_card {
            let mut conditional = vec![0.0; from_card];
            if marginal[b] == 0.0 {
                conditional.fill(1.0 / from_card as f64);
            } else {
                for a in 0..from_card {
                    conditional[a] = joint[a * to_card + b] / marginal[b];
                }
            }
            new_from_rows.push(conditional);
        }
        new_to_rows.push(marginal);
        if !advance_config(&mut cfg, &context_cards) {
            break;
        }
    }

    // New parent lists: `to` gets the context; `from` gets the context plus
    // `to` (appended last, so `from`'s rows group by context first).
    let mut from_parents = context.clone();
    from_parents.push(to_id.clone());
    let mut from_cards = context_cards.clone();
    from_cards.push(to_card);

    let node = d.node_mut(from).expect("node exists");
    node.parents = from_parents.clone();
    node.table = Some(ConditionalTable::new(from_parents, from_cards, new_from_rows));
    node.kind = NodeKind::Chance;
    let node = d.node_mut(to).expect("node exists");
    node.parents = context.clone();
    node.table = Some(ConditionalTable::new(context, context_cards, new_to_rows));
    node.kind = NodeKind::Chance;
    Ok(())
}

/// True iff a directed path `from -> to` exists that does not use the arc
/// `from -> to` itself.
fn has_other_path(d: &Diagram, from: &str, to: &str) -> bool {
    let children = d.children_map();
    let mut stack: Vec<&NodeId> = children[from]
        .iter()
        .filter(|c| c.as_str() != to)
        .collect();
    let mut seen: BTreeSet<&str> = stack.iter().map(|c| c.as_str()).collect();
    while let Some(next) = stack.pop() {
        if next.as_str() == to {
            return true;
        }
        for c in &children[next.as_str()] {
            if seen.insert(c.as_str()) {
                stack.push(c);
            }
        }
    }
    false
}

/// Removes a single barren node: a chance or deterministic node with no
/// children.
pub fn remove_barren_node(d: &Diagram, id: &str) -> Result<Diagram> {
    let mut out = d.clone();
    remove_barren_node_in_place(&mut out, id)?;
    Ok(out)
}

pub fn remove_barren_node_in_place(d: &mut Diagram, id: &str) -> Result<()> {
    let node = d.require(id)?;
    if !node.kind().is_chance_like() {
        return Err(Error::NotChance(node.id().clone()));
    }
    if !d.children_map()[id].is_empty() {
        return Err(Error::NotBarren(node.id().clone()));
    }
    d.nodes.remove(id);
    Ok(())
}

/// Iteratively removes every chance or deterministic node that has no
/// children and is not in `keep`. Posteriors of the kept nodes are
/// unchanged.
pub fn remove_all_barren(d: &Diagram, keep: &[&str]) -> Result<Diagram> {
    let mut out = d.clone();
    remove_all_barren_in_place(&mut out, keep)?;
    Ok(out)
}

pub fn remove_all_barren_in_place(d: &mut Diagram, keep: &[&str]) -> Result<()> {
    let keep: BTreeSet<&str> = keep.iter().copied().collect();
    loop {
        let children = d.children_map();
        let barren: Vec<NodeId> = d
            .nodes()
            .filter(|n| {
                n.kind().is_chance_like()
                    && !keep.contains(n.id().as_str())
                    && children[n.id().as_str()].is_empty()
            })
            .map(|n| n.id().clone())
            .collect();
        if barren.is_empty() {
            return Ok(());
        }
        for id in barren {
            d.nodes.remove(id.as_str());
        }
    }
}

/// Absorbs (marginalizes out) a chance node: every outgoing arc is
/// reversed, children in graph order, and the then-barren node is removed.
pub fn absorb_chance_node(d: &Diagram, id: &str) -> Result<Diagram> {
    let mut out = d.clone();
    absorb_chance_node_in_place(&mut out, id)?;
    Ok(out)
}

pub fn absorb_chance_node_in_place(d: &mut Diagram, id: &str) -> Result<()> {
    let node = d.require(id)?;
    if !node.kind().is_chance_like() {
        return Err(Error::NotChance(node.id().clone()));
    }
    loop {
        let children = d.children_map()[id].clone();
        if children.is_empty() {
            break;
        }
        let order = d.graph_order()?;
        let next = order
            .iter()
            .find(|n| children.contains(n))
            .expect("children appear in graph order")
            .clone();
        reverse_arc_in_place(d, id, next.as_str())?;
    }
    remove_barren_node_in_place(d, id)
}

/// Removes a deterministic node by substituting its function into every
/// child's table: each child is re-indexed over the deterministic node's
/// parents instead of the node itself.
pub fn reduce_deterministic_node(d: &Diagram, id: &str) -> Result<Diagram> {
    let mut out = d.clone();
    reduce_deterministic_node_in_place(&mut out, id)?;
    Ok(out)
}

pub fn reduce_deterministic_node_in_place(d: &mut Diagram, id: &str) -> Result<()> {
    let node = d.require(id)?.clone();
    if node.kind() != NodeKind::Deterministic {
        return Err(Error::NotDeterministic(node.id().clone()));
    }
    let det_id = node.id().clone();
    let det_table = node.table().expect("deterministic table");
    let det_parents: Vec<NodeId> = node.parents().to_vec();

    let children = d.children_map()[id].clone();
    for child_id in &children {
        let child = d.require(child_id.as_str())?;
        if child.table().is_none() {
            return Err(Error::BadParams(alloc::format!(
                "deterministic node `{det_id}` informs decision `{child_id}`; reduce after solving"
            )));
        }
    }
    for child_id in children {
        let child = d.require(child_id.as_str())?.clone();
        let child_table = child.table().expect("child table");
        let det_pos = child_table.parent_pos(&det_id).expect("arc exists");

        // New parent list: the child's parents with the deterministic node
        // replaced in place by its (not already present) parents.
        let mut new_parents: Vec<NodeId> = Vec::new();
        for (i, p) in child.parents().iter().enumerate() {
            if i == det_pos {
                for q in &det_parents {
                    if !new_parents.contains(q) && !child.parents()[i + 1..].contains(q) {
                        new_parents.push(q.clone());
                    }
                }
            } else if !new_parents.contains(p) {
                new_parents.push(p.clone());
            }
        }
        let new_cards: Vec<usize> = new_parents
            .iter()
            .map(|p| d.node(p.as_str()).expect("parent").card())
            .collect();

        let child_pos: Vec<Option<usize>> = child
            .parents()
            .iter()
            .map(|p| {
                if p == &det_id {
                    None
                } else {
                    Some(new_parents.iter().position(|q| q == p).unwrap())
                }
            })
            .collect();
        let det_parent_pos: Vec<usize> = det_parents
            .iter()
            .map(|p| new_parents.iter().position(|q| q == p).unwrap())
            .collect();

        let mut rows = Vec::with_capacity(state_space(&new_cards));
        let mut cfg = vec![0usize; new_parents.len()];
        let mut det_cfg: Vec<usize> = Vec::new();
        let mut child_cfg: Vec<usize> = Vec::new();
        loop {
            det_cfg.clear();
            det_cfg.extend(det_parent_pos.iter().map(|&p| cfg[p]));
            let det_state = det_table.unit_state(&det_cfg).expect("unit rows");
            child_cfg.clear();
            child_cfg.extend(child_pos.iter().map(|slot| match slot {
                None => det_state,
                Some(pos) => cfg[*pos],
            }));
            rows.push(child_table.row(&child_cfg).to_vec());
            if !advance_config(&mut cfg, &new_cards) {
                break;
            }
        }

        let entry = d.node_mut(child_id.as_str()).expect("child exists");
        entry.parents = new_parents.clone();
        entry.table = Some(ConditionalTable::new(new_parents, new_cards, rows));
    }
    d.nodes.remove(id);
    Ok(())
}

/// Shared helper for tests: a fresh copy with one node's kind replaced.
#[doc(hidden)]
pub fn with_kind(d: &Diagram, id: &str, kind: NodeKind) -> Result<Diagram> {
    let mut out = d.clone();
    let node: &mut Node = out.node_mut(id).ok_or_else(|| Error::UnknownNode(NodeId::from(id)))?;
    node.kind = kind;
    out.is_consistent().into_result()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;
    use crate::model::{build_diagram, Evidence, NodeSpec};
    use crate::oracle::{joint_enumeration_oracle, joint_over};

    fn assert_joint_preserved(before: &Diagram, after: &Diagram, tol: f64) {
        let survivors: Vec<&str> = after.node_ids().map(|id| id.as_str()).collect();
        let (_, expect) = joint_over(before, &survivors).unwrap();
        let (_, got) = joint_over(after, &survivors).unwrap();
        for (e, g) in expect.iter().zip(got.iter()) {
            assert!((e - g).abs() < tol, "joint changed: {e} vs {g}");
        }
    }

    #[test]
    fn reverse_chain_arc_matches_bayes_rule() {
        let d = fixture("FIX-CHAIN").unwrap();
        let reversed = reverse_arc(&d, "A", "B").unwrap();
        assert!(reversed.is_consistent().ok());
        assert!(reversed.has_arc("B", "A"));
        assert!(!reversed.has_arc("A", "B"));
        let b = reversed.node("B").unwrap().table().unwrap();
        assert!((b.rows()[0][0] - 0.31).abs() < 1e-15);
        let a = reversed.node("A").unwrap().table().unwrap();
        assert!((a.row(&[0])[0] - 24.0 / 31.0).abs() < 1e-15);
        assert!((a.row(&[1])[0] - 6.0 / 69.0).abs() < 1e-15);
        assert_joint_preserved(&d, &reversed, 1e-12);
    }

    #[test]
    fn zero_marginal_gets_uniform_row() {
        let d = build_diagram(
            "degenerate",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![1.0, 0.0]]),
                NodeSpec::chance("B", &["t", "f"], &["A"], vec![vec![1.0, 0.0], vec![0.3, 0.7]]),
            ],
        )
        .unwrap();
        let reversed = reverse_arc(&d, "A", "B").unwrap();
        assert!(reversed.is_consistent().ok());
        let b = reversed.node("B").unwrap().table().unwrap();
        assert_eq!(b.rows()[0], vec![1.0, 0.0]);
        let a = reversed.node("A").unwrap().table().unwrap();
        assert_eq!(a.row(&[1]), &[0.5, 0.5]);
        assert_joint_preserved(&d, &reversed, 1e-12);
    }

    #[test]
    fn double_reversal_restores_joint() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let once = reverse_arc(&d, "A", "B").unwrap();
        let twice = reverse_arc(&once, "B", "A").unwrap();
        assert_joint_preserved(&d, &twice, 1e-10);
    }

    #[test]
    fn reversal_cycle_guard() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let err = reverse_arc(&d, "A", "Z").unwrap_err();
        assert_eq!(err, Error::UnknownNode(NodeId::from("Z")));
        let err = reverse_arc(&d, "B", "A").unwrap_err();
        assert!(matches!(err, Error::NoSuchArc { .. }));

        // A -> C cannot be reversed while the detour A -> B -> C exists.
        let chained = build_diagram(
            "detour",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
                NodeSpec::chance("B", &["t", "f"], &["A"], vec![vec![0.5, 0.5]; 2]),
                NodeSpec::chance("C", &["t", "f"], &["A", "B"], vec![vec![0.5, 0.5]; 4]),
            ],
        )
        .unwrap();
        let err = reverse_arc(&chained, "A", "C").unwrap_err();
        assert!(matches!(err, Error::WouldCreateCycle { .. }));
    }

    #[test]
    fn barren_removal() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let pruned = remove_all_barren(&d, &["A"]).unwrap();
        assert_eq!(pruned.len(), 1);
        assert!(pruned.node("A").is_some());
        let row = &pruned.node("A").unwrap().table().unwrap().rows()[0];
        assert_eq!(row, &vec![0.5, 0.5]);

        let kept = remove_all_barren(&d, &["A", "D"]).unwrap();
        assert_eq!(kept.len(), 4);

        let err = remove_barren_node(&fixture("FIX-CHAIN").unwrap(), "A").unwrap_err();
        assert_eq!(err, Error::NotBarren(NodeId::from("A")));
    }

    #[test]
    fn absorb_marginalizes() {
        let d = fixture("FIX-CHAIN").unwrap();
        let absorbed = absorb_chance_node(&d, "A").unwrap();
        assert_eq!(absorbed.len(), 1);
        let b = absorbed.node("B").unwrap().table().unwrap();
        assert!((b.rows()[0][0] - 0.31).abs() < 1e-15);

        let diamond = fixture("FIX-DIAMOND").unwrap();
        let absorbed = absorb_chance_node(&diamond, "B").unwrap();
        assert!(absorbed.is_consistent().ok());
        assert_joint_preserved(&diamond, &absorbed, 1e-12);
    }

    #[test]
    fn reduce_identity_and_negation() {
        let base = |rows: Vec<Vec<f64>>| {
            build_diagram(
                "det",
                &[
                    NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.3, 0.7]]),
                    NodeSpec::deterministic("B", &["t", "f"], &["A"], rows),
                    NodeSpec::chance(
                        "C",
                        &["t", "f"],
                        &["B"],
                        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                    ),
                ],
            )
            .unwrap()
        };
        let identity = base(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let reduced = reduce_deterministic_node(&identity, "B").unwrap();
        assert!(reduced.is_consistent().ok());
        assert_eq!(reduced.node("C").unwrap().parents(), &[NodeId::from("A")]);
        assert_eq!(reduced.node("C").unwrap().table().unwrap().rows()[0], vec![0.9, 0.1]);
        assert_joint_preserved(&identity, &reduced, 1e-12);

        let negation = base(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let reduced = reduce_deterministic_node(&negation, "B").unwrap();
        assert_eq!(reduced.node("C").unwrap().table().unwrap().rows()[0], vec![0.2, 0.8]);
        assert_eq!(reduced.node("C").unwrap().table().unwrap().rows()[1], vec![0.9, 0.1]);
        assert_joint_preserved(&negation, &reduced, 1e-12);

        let err = reduce_deterministic_node(&identity, "A").unwrap_err();
        assert_eq!(err, Error::NotDeterministic(NodeId::from("A")));
    }

    #[test]
    fn absorbing_preserves_posteriors_under_evidence() {
        // Absorption then inference equals inference on the original.
        let d = fixture("FIX-DIAMOND").unwrap();
        let absorbed = absorb_chance_node(&d, "C").unwrap();
        let ev_before = Evidence::single(&d, "D", "t").unwrap();
        let ev_after = Evidence::single(&absorbed, "D", "t").unwrap();
        let before = joint_enumeration_oracle(&d, &ev_before).unwrap();
        let after = joint_enumeration_oracle(&absorbed, &ev_after).unwrap();
        assert!(before.linf(&after) < 1e-12);
    }
}
