//! Consistency-preserving diagram edits.
//!
//! Every function takes a fully specified diagram and returns a new,
//! consistent diagram; inputs are never mutated. Where an edit must extend
//! or collapse a table (new arcs, removed arcs, added states) the rules are
//! chosen so that all untouched marginals are preserved: new parents are
//! ignored by replication, removed parents are averaged uniformly, and new
//! states enter with probability zero.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{
    node_from_spec, valid_identifier, Diagram, NodeId, NodeKind, NodeSpec,
};

/// Adds a fully specified node. Parents must already exist.
pub fn add_node(d: &Diagram, spec: &NodeSpec) -> Result<Diagram> {
    if d.node(&spec.id).is_some() {
        return Err(Error::DuplicateId(NodeId::from(spec.id.as_str())));
    }
    let cards: BTreeMap<&str, usize> =
        d.nodes().map(|n| (n.id().as_str(), n.card())).collect();
    let node = node_from_spec(spec, &cards)?;
    for parent in node.parents() {
        let p = d.require(parent.as_str())?;
        if p.kind() == NodeKind::Value {
            return Err(Error::ValueNodeChild(p.id().clone()));
        }
    }
    let mut out = d.clone();
    out.insert_node(node);
    out.is_consistent().into_result()?;
    Ok(out)
}

/// Deletes a node. A node with children requires `cascade`, which first
/// removes each outgoing arc under the [`delete_arc`] averaging rule.
pub fn delete_node(d: &Diagram, id: &str, cascade: bool) -> Result<Diagram> {
    let node = d.require(id)?;
    let node_id = node.id().clone();
    let children = d.children_map()[id].clone();
    if !children.is_empty() && !cascade {
        return Err(Error::HasChildren(node_id));
    }
    let mut out = d.clone();
    for child in &children {
        out = delete_arc(&out, id, child.as_str())?;
    }
    out.nodes.remove(id);
    Ok(out)
}

/// Adds an arc. The child's table is extended by replicating its rows
/// across the new parent's states, so the child's distribution given its
/// old parents is unchanged for every state of the new parent.
pub fn add_arc(d: &Diagram, parent: &str, child: &str) -> Result<Diagram> {
    let p = d.require(parent)?;
    let c = d.require(child)?;
    if p.kind() == NodeKind::Value {
        return Err(Error::ValueNodeChild(p.id().clone()));
    }
    if d.has_arc(parent, child) {
        return Err(Error::ArcExists { parent: p.id().clone(), child: c.id().clone() });
    }
    if parent == child || reaches(d, child, parent) {
        return Err(Error::CycleDetected);
    }
    let parent_id = p.id().clone();
    let parent_card = p.card();
    let mut out = d.clone();
    let node = out.node_mut(child).expect("child exists");
    match &node.table {
        None => {
            // Information arc into a decision; parents stay sorted.
            node.parents.push(parent_id);
            node.parents.sort();
        }
        Some(table) => {
            node.table = Some(table.replicate_new_parent(parent_id.clone(), parent_card));
            node.parents.push(parent_id);
        }
    }
    Ok(out)
}

/// Deletes an arc, collapsing the child's rows by uniform averaging over
/// the removed parent's states. A deterministic child whose rows stop
/// being unit vectors becomes a plain chance node.
pub fn delete_arc(d: &Diagram, parent: &str, child: &str) -> Result<Diagram> {
    let p = d.require(parent)?;
    let c = d.require(child)?;
    if !d.has_arc(parent, child) {
        return Err(Error::NoSuchArc { parent: p.id().clone(), child: c.id().clone() });
    }
    let parent_id = p.id().clone();
    let mut out = d.clone();
    let node = out.node_mut(child).expect("child exists");
    match &node.table {
        None => {
            node.parents.retain(|q| q != &parent_id);
        }
        Some(table) => {
            let pos = table.parent_pos(&parent_id).expect("arc exists");
            let collapsed = table.average_parent(pos);
            if node.kind == NodeKind::Deterministic && !all_unit_rows(collapsed.rows()) {
                node.kind = NodeKind::Chance;
            }
            node.table = Some(collapsed);
            node.parents.retain(|q| q != &parent_id);
        }
    }
    Ok(out)
}

/// Adds a state to a node. The node's own rows give the new state
/// probability zero; chance children get uniform rows for configurations
/// involving the new state (value children get utility zero there), so no
/// existing marginal changes.
pub fn add_state(d: &Diagram, id: &str, label: &str) -> Result<Diagram> {
    let node = d.require(id)?;
    let node_id = node.id().clone();
    if node.kind() == NodeKind::Value {
        return Err(Error::ShapeMismatch {
            node: node_id,
            detail: "value nodes carry no states".to_string(),
        });
    }
    if !valid_identifier(label) {
        return Err(Error::BadIdentifier(label.to_string()));
    }
    if node.state_index(label).is_some() {
        return Err(Error::DuplicateState { node: node_id, label: label.to_string() });
    }
    let mut out = d.clone();
    let node = out.node_mut(id).expect("node exists");
    node.states.push(label.to_string());
    if let Some(table) = &node.table {
        let mut rows = table.rows().to_vec();
        for row in rows.iter_mut() {
            row.push(0.0);
        }
        node.table = Some(crate::model::ConditionalTable::new(
            table.parent_order().to_vec(),
            table.parent_cards().to_vec(),
            rows,
        ));
    }
    let children = out.children_map()[id].clone();
    for child in children {
        let node = out.node_mut(child.as_str()).expect("child exists");
        let Some(table) = &node.table else { continue };
        let pos = table.parent_pos(&node_id).expect("arc exists");
        let fill = match node.kind {
            NodeKind::Value => vec![0.0],
            _ => vec![1.0 / node.states.len() as f64; node.states.len()],
        };
        node.table = Some(table.extend_parent(pos, &fill));
        if node.kind == NodeKind::Deterministic {
            node.kind = NodeKind::Chance;
        }
    }
    Ok(out)
}

/// Deletes a state. The node's own rows drop the entry and renormalize
/// (a row left with zero mass becomes uniform); children drop the rows
/// conditioned on the removed state.
pub fn delete_state(d: &Diagram, id: &str, label: &str) -> Result<Diagram> {
    let node = d.require(id)?;
    let node_id = node.id().clone();
    let state = node
        .state_index(label)
        .ok_or_else(|| Error::UnknownState { node: node_id.clone(), label: label.to_string() })?;
    if node.states().len() < 2 {
        return Err(Error::LastState(node_id));
    }
    let mut out = d.clone();
    let node = out.node_mut(id).expect("node exists");
    node.states.remove(state);
    if let Some(table) = &node.table {
        let mut rows = table.rows().to_vec();
        let mut still_unit = true;
        for row in rows.iter_mut() {
            row.remove(state);
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                let uniform = 1.0 / row.len() as f64;
                row.fill(uniform);
                still_unit = false;
            } else if sum != 1.0 {
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
        node.table = Some(crate::model::ConditionalTable::new(
            table.parent_order().to_vec(),
            table.parent_cards().to_vec(),
            rows,
        ));
        if node.kind == NodeKind::Deterministic && !still_unit {
            node.kind = NodeKind::Chance;
        }
    }
    let children = out.children_map()[id].clone();
    for child in children {
        let node = out.node_mut(child.as_str()).expect("child exists");
        let Some(table) = &node.table else { continue };
        let pos = table.parent_pos(&node_id).expect("arc exists");
        node.table = Some(table.remove_parent_state(pos, state));
    }
    Ok(out)
}

/// Replaces a node's rows, re-validating shape, row sums and (for
/// deterministic nodes) unit rows.
pub fn edit_distribution(d: &Diagram, id: &str, rows: Vec<Vec<f64>>) -> Result<Diagram> {
    let node = d.require(id)?;
    if node.kind() == NodeKind::Decision {
        return Err(Error::ShapeMismatch {
            node: node.id().clone(),
            detail: "decision nodes carry no table".to_string(),
        });
    }
    let states: Vec<String> = node.states().to_vec();
    let parents: Vec<String> = node.parents().iter().map(|p| p.as_str().to_string()).collect();
    let spec = NodeSpec {
        id: id.to_string(),
        kind: node.kind(),
        states: states.iter().map(|s| s.to_string()).collect(),
        parents,
        rows: Some(rows),
    };
    let cards: BTreeMap<&str, usize> =
        d.nodes().map(|n| (n.id().as_str(), n.card())).collect();
    let rebuilt = node_from_spec(&spec, &cards)?;
    let mut out = d.clone();
    let node = out.node_mut(id).expect("node exists");
    node.table = rebuilt.table;
    Ok(out)
}

/// A complete, independent copy. Equivalent to `Clone`; provided for
/// symmetry with the other operations.
pub fn copy_diagram(d: &Diagram) -> Diagram {
    d.clone()
}

/// True iff a directed path `from -> to` exists.
fn reaches(d: &Diagram, from: &str, to: &str) -> bool {
    let children = d.children_map();
    let mut stack = vec![from];
    let mut seen = alloc::collections::BTreeSet::from([from]);
    while let Some(next) = stack.pop() {
        if next == to {
            return true;
        }
        for c in &children[next] {
            if seen.insert(c.as_str()) {
                stack.push(c.as_str());
            }
        }
    }
    false
}

fn all_unit_rows(rows: &[Vec<f64>]) -> bool {
    rows.iter().all(|row| {
        row.iter().filter(|&&v| v == 1.0).count() == 1
            && row.iter().all(|&v| v == 0.0 || v == 1.0)
    })
}
