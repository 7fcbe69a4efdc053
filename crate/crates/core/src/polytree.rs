//! Pearl's message-passing inference for singly connected belief networks.
//!
//! Messages and beliefs are kept in joint scale: no conditional is formed
//! during propagation, so no division can fail. The only divisions happen
//! when each node's belief vector is normalized at the very end, and a zero
//! normalizer there equals a zero-probability evidence configuration.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{advance_config, Beliefs, ConditionalTable, Diagram, Evidence, NodeId};

/// True iff the undirected skeleton of the diagram is acyclic.
pub fn is_polytree(d: &Diagram) -> bool {
    let ids: Vec<&NodeId> = d.node_ids().collect();
    let index: BTreeMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut parent = (0..ids.len()).collect::<Vec<_>>();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for node in d.nodes() {
        let child = index[node.id().as_str()];
        for p in node.parents() {
            let parent_idx = index[p.as_str()];
            let (a, b) = (find(&mut parent, child), find(&mut parent, parent_idx));
            if a == b {
                return false;
            }
            parent[a] = b;
        }
    }
    true
}

/// Per-node λ and π vectors plus the per-arc messages of one propagation,
/// all joint-scaled and unnormalized.
#[derive(Debug, Clone)]
pub struct MessageState {
    /// Node ids in graph order; all vectors below are indexed to match.
    pub ids: Vec<NodeId>,
    /// λ(x): evidence indicator times all children's λ messages.
    pub lambda: Vec<Vec<f64>>,
    /// π(x): table-weighted combination of all parents' π messages.
    pub pi: Vec<Vec<f64>>,
    /// π message along each arc, indexed `[child][parent position]`, a
    /// vector over the parent's states.
    pub pi_messages: Vec<Vec<Vec<f64>>>,
    /// λ message along each arc, same indexing and shape.
    pub lambda_messages: Vec<Vec<Vec<f64>>>,
}

/// Raw result of propagation: unnormalized beliefs plus the component
/// structure needed to combine them. Shared with the conditioning module.
pub(crate) struct Propagation {
    pub ids: Vec<NodeId>,
    /// Unnormalized belief (λ·π product) per node.
    pub bel: Vec<Vec<f64>>,
    /// Connected component of each node in the undirected skeleton.
    pub component_of: Vec<usize>,
    /// Per-component normalizer: the probability of the evidence that
    /// falls inside the component.
    pub component_z: Vec<f64>,
    pub state: MessageState,
}

impl Propagation {
    /// Probability of the entire evidence set: the product over components.
    pub fn evidence_probability(&self) -> f64 {
        self.component_z.iter().product()
    }
}

/// Pearl propagation over every connected component. Fails with
/// `NotPolytree` when some component's skeleton has a cycle; zero
/// normalizers are left to the caller.
pub(crate) fn propagate(d: &Diagram, evidence: &Evidence) -> Result<Propagation> {
    if !d.is_belief_net() {
        return Err(Error::NotBeliefNet);
    }
    evidence.validate(d)?;
    let ids = d.graph_order()?;
    let index: BTreeMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let n = ids.len();
    let mut cards = vec![0usize; n];
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut tables: Vec<&ConditionalTable> = Vec::with_capacity(n);
    for (i, id) in ids.iter().enumerate() {
        let node = d.node(id.as_str()).expect("listed node");
        cards[i] = node.states().len();
        parents[i] = node.parents().iter().map(|p| index[p.as_str()]).collect();
        for p in &parents[i] {
            children[*p].push(i);
        }
        tables.push(node.table().expect("chance table"));
    }
    for list in children.iter_mut() {
        list.sort_unstable();
    }
    let evidence_vec: Vec<Option<usize>> =
        ids.iter().map(|id| evidence.get(id.as_str())).collect();

    let mut engine = Engine {
        cards: &cards,
        parents: &parents,
        children: &children,
        tables: &tables,
        evidence: &evidence_vec,
        pi_messages: (0..n).map(|i| vec![Vec::new(); parents[i].len()]).collect(),
        lambda_messages: (0..n).map(|i| vec![Vec::new(); parents[i].len()]).collect(),
    };

    // Undirected adjacency, each entry (neighbor, arc) where the arc is
    // identified by its (child, parent position) slot.
    let mut adjacency: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (pos, &p) in parents[i].iter().enumerate() {
            adjacency[i].push((p, pos, true)); // neighbor is my parent
            adjacency[p].push((i, pos, false)); // neighbor is my child
        }
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
    }

    let mut component_of = vec![usize::MAX; n];
    let mut component_z: Vec<f64> = Vec::new();
    for root in 0..n {
        if component_of[root] != usize::MAX {
            continue;
        }
        let comp = component_z.len();
        // Rooted tree over the component, checking single-connectedness.
        // `tree_parent[x]` records the neighbor toward the root, the arc's
        // (child, position) slot via `pos`, and whether x is the DAG parent
        // on that arc.
        let mut order: Vec<usize> = vec![root];
        let mut tree_parent: Vec<Option<(usize, usize, bool)>> = vec![None; n];
        component_of[root] = comp;
        let mut cursor = 0;
        while cursor < order.len() {
            let x = order[cursor];
            cursor += 1;
            let toward = tree_parent[x].map(|(tp, _, _)| tp);
            for &(nb, pos, nb_is_parent) in &adjacency[x] {
                if Some(nb) == toward {
                    continue;
                }
                if component_of[nb] != usize::MAX {
                    return Err(Error::NotPolytree);
                }
                component_of[nb] = comp;
                tree_parent[nb] = Some((x, pos, nb_is_parent));
                order.push(nb);
            }
        }

        // Collect: leaves toward the root.
        for &x in order.iter().skip(1).rev() {
            let (toward, pos, x_is_parent) = tree_parent[x].expect("non-root");
            if x_is_parent {
                // x is the DAG parent: send a π message down the arc.
                engine.send_pi(x, toward, pos);
            } else {
                engine.send_lambda(x, toward, pos);
            }
        }
        // Distribute: root toward the leaves.
        for &x in &order {
            for &(nb, pos, nb_is_parent) in &adjacency[x] {
                if let Some((tp, _, _)) = tree_parent[x] {
                    if tp == nb {
                        continue;
                    }
                }
                if nb_is_parent {
                    engine.send_lambda(x, nb, pos);
                } else {
                    engine.send_pi(x, nb, pos);
                }
            }
        }
        component_z.push(0.0);
    }

    // Beliefs and per-component normalizers (read at each component root).
    let mut bel: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut lambda_all: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pi_all: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut seen_root = vec![false; component_z.len()];
    for x in 0..n {
        let lambda = engine.lambda_value(x, None);
        let pi = engine.pi_value(x);
        let product: Vec<f64> = lambda.iter().zip(pi.iter()).map(|(a, b)| a * b).collect();
        let comp = component_of[x];
        if !seen_root[comp] {
            seen_root[comp] = true;
            component_z[comp] = product.iter().sum();
        }
        bel.push(product);
        lambda_all.push(lambda);
        pi_all.push(pi);
    }

    Ok(Propagation {
        ids: ids.clone(),
        bel,
        component_of,
        component_z,
        state: MessageState {
            ids,
            lambda: lambda_all,
            pi: pi_all,
            pi_messages: engine.pi_messages,
            lambda_messages: engine.lambda_messages,
        },
    })
}

/// Runs one propagation and exposes the raw message state: λ/π vectors and
/// the per-arc messages, joint-scaled and unnormalized.
pub fn message_state(d: &Diagram, evidence: &Evidence) -> Result<MessageState> {
    propagate(d, evidence).map(|p| p.state)
}

struct Engine<'a> {
    cards: &'a [usize],
    parents: &'a [Vec<usize>],
    children: &'a [Vec<usize>],
    tables: &'a [&'a ConditionalTable],
    evidence: &'a [Option<usize>],
    /// `pi_messages[child][pos]`: π from `parents[child][pos]` to `child`.
    pi_messages: Vec<Vec<Vec<f64>>>,
    /// `lambda_messages[child][pos]`: λ from `child` to its parent.
    lambda_messages: Vec<Vec<Vec<f64>>>,
}

impl Engine<'_> {
    fn evidence_vec(&self, x: usize) -> Vec<f64> {
        match self.evidence[x] {
            None => vec![1.0; self.cards[x]],
            Some(s) => {
                let mut v = vec![0.0; self.cards[x]];
                v[s] = 1.0;
                v
            }
        }
    }

    /// λ(x): evidence indicator times children's λ messages, optionally
    /// excluding one child (the message receiver).
    fn lambda_value(&self, x: usize, exclude: Option<usize>) -> Vec<f64> {
        let mut lambda = self.evidence_vec(x);
        for &y in &self.children[x] {
            if Some(y) == exclude {
                continue;
            }
            let pos = self.parents[y].iter().position(|&p| p == x).expect("arc");
            let msg = &self.lambda_messages[y][pos];
            debug_assert!(!msg.is_empty(), "λ message not yet computed");
            for (l, m) in lambda.iter_mut().zip(msg.iter()) {
                *l *= m;
            }
        }
        lambda
    }

    /// π(x): the node's rows combined over all parents' π messages.
    fn pi_value(&self, x: usize) -> Vec<f64> {
        let parent_list = &self.parents[x];
        if parent_list.is_empty() {
            return self.tables[x].rows()[0].clone();
        }
        let cards: Vec<usize> = parent_list.iter().map(|&p| self.cards[p]).collect();
        let mut pi = vec![0.0; self.cards[x]];
        let mut cfg = vec![0usize; cards.len()];
        loop {
            let mut base = 1.0;
            for (pos, &_p) in parent_list.iter().enumerate() {
                let msg = &self.pi_messages[x][pos];
                debug_assert!(!msg.is_empty(), "π message not yet computed");
                base *= msg[cfg[pos]];
                if base == 0.0 {
                    break;
                }
            }
            if base != 0.0 {
                let row = self.tables[x].row(&cfg);
                for (out, v) in pi.iter_mut().zip(row.iter()) {
                    *out += base * v;
                }
            }
            if !advance_config(&mut cfg, &cards) {
                break;
            }
        }
        pi
    }

    /// Computes and stores the π message from `x` to its child `child`
    /// (where `x` sits at `pos` in the child's parent list).
    fn send_pi(&mut self, x: usize, child: usize, pos: usize) {
        let lambda = self.lambda_value(x, Some(child));
        let pi = self.pi_value(x);
        let msg: Vec<f64> = lambda.iter().zip(pi.iter()).map(|(a, b)| a * b).collect();
        self.pi_messages[child][pos] = msg;
    }

    /// Computes and stores the λ message from `x` to the parent at `pos`.
    fn send_lambda(&mut self, x: usize, parent: usize, pos: usize) {
        debug_assert_eq!(self.parents[x][pos], parent);
        let lambda = self.lambda_value(x, None);
        let parent_list = &self.parents[x];
        let cards: Vec<usize> = parent_list.iter().map(|&p| self.cards[p]).collect();
        let mut msg = vec![0.0; self.cards[parent]];
        let mut cfg = vec![0usize; cards.len()];
        loop {
            let mut base = 1.0;
            for (q, &_p) in parent_list.iter().enumerate() {
                if q == pos {
                    continue;
                }
                base *= self.pi_messages[x][q][cfg[q]];
                if base == 0.0 {
                    break;
                }
            }
            if base != 0.0 {
                let row = self.tables[x].row(&cfg);
                let mut dot = 0.0;
                for (l, v) in lambda.iter().zip(row.iter()) {
                    dot += l * v;
                }
                msg[cfg[pos]] += base * dot;
            }
            if !advance_config(&mut cfg, &cards) {
                break;
            }
        }
        self.lambda_messages[x][pos] = msg;
    }
}

/// Exact inference on a singly connected belief network.
///
/// Returns the posterior of every node and the evidence probability (the
/// propagation normalizer). A zero normalizer means the evidence is
/// impossible and is reported as such.
pub fn polytree_infer(d: &Diagram, evidence: &Evidence) -> Result<Beliefs> {
    let mut propagation = propagate(d, evidence)?;
    let mut posteriors = BTreeMap::new();
    let ids = core::mem::take(&mut propagation.ids);
    for (x, id) in ids.into_iter().enumerate() {
        let mut v = propagation.bel[x].clone();
        let z: f64 = v.iter().sum();
        if z <= 0.0 {
            return Err(Error::ImpossibleEvidence);
        }
        for entry in v.iter_mut() {
            *entry /= z;
        }
        posteriors.insert(id, v);
    }
    Ok(Beliefs::new(posteriors, Some(propagation.evidence_probability())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;
    use crate::model::{build_diagram, NodeSpec};

    #[test]
    fn polytree_detection() {
        assert!(is_polytree(&fixture("FIX-CHAIN").unwrap()));
        assert!(!is_polytree(&fixture("FIX-DIAMOND").unwrap()));

        let forest = build_diagram(
            "forest",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
                NodeSpec::chance("B", &["t", "f"], &["A"], vec![vec![0.5, 0.5]; 2]),
                NodeSpec::chance("X", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
                NodeSpec::chance("Y", &["t", "f"], &["X"], vec![vec![0.5, 0.5]; 2]),
            ],
        )
        .unwrap();
        assert!(is_polytree(&forest));
    }

    #[test]
    fn chain_inference_matches_hand_values() {
        let d = fixture("FIX-CHAIN").unwrap();
        let beliefs = polytree_infer(&d, &Evidence::none()).unwrap();
        assert!((beliefs.get("B").unwrap()[0] - 0.31).abs() < 1e-12);
        assert!((beliefs.evidence_probability().unwrap() - 1.0).abs() < 1e-12);

        let ev = Evidence::single(&d, "B", "t").unwrap();
        let beliefs = polytree_infer(&d, &ev).unwrap();
        assert!((beliefs.get("A").unwrap()[0] - 24.0 / 31.0).abs() < 1e-12);
        assert!((beliefs.evidence_probability().unwrap() - 0.31).abs() < 1e-12);
    }

    #[test]
    fn impossible_evidence_reports_zero_normalizer() {
        let d = fixture("FIX-ZERO").unwrap();
        let mut ev = Evidence::none();
        ev.observe(&d, "A", "t").unwrap();
        ev.observe(&d, "B", "f").unwrap();
        assert_eq!(polytree_infer(&d, &ev), Err(Error::ImpossibleEvidence));
    }

    #[test]
    fn loopy_input_is_rejected() {
        let d = fixture("FIX-DIAMOND").unwrap();
        assert_eq!(polytree_infer(&d, &Evidence::none()), Err(Error::NotPolytree));
    }

    #[test]
    fn message_state_entries_are_nonnegative_and_finite() {
        let d = fixture("FIX-CHAIN").unwrap();
        let ev = Evidence::single(&d, "B", "t").unwrap();
        let state = message_state(&d, &ev).unwrap();
        let all = state
            .lambda
            .iter()
            .chain(state.pi.iter())
            .chain(state.pi_messages.iter().flatten())
            .chain(state.lambda_messages.iter().flatten());
        for vector in all {
            for &v in vector {
                assert!(v.is_finite() && v >= 0.0);
            }
        }
    }

    #[test]
    fn forest_evidence_probability_is_componentwise_product() {
        let forest = build_diagram(
            "forest",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.3, 0.7]]),
                NodeSpec::chance("X", &["t", "f"], &[], vec![vec![0.6, 0.4]]),
            ],
        )
        .unwrap();
        let mut ev = Evidence::none();
        ev.observe(&forest, "A", "t").unwrap();
        ev.observe(&forest, "X", "f").unwrap();
        let beliefs = polytree_infer(&forest, &ev).unwrap();
        assert!((beliefs.evidence_probability().unwrap() - 0.3 * 0.4).abs() < 1e-12);
    }
}
