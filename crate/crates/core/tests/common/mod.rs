//! Shared helpers for the integration suites.

use beliefcore::model::{build_diagram, Diagram, NodeKind, NodeSpec};

/// Small deterministic generator for test-side choices (splitmix64).
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_add(0x9e37_79b9_7f4a_7c15))
    }

    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }

    pub fn chance(&mut self, p: f64) -> bool {
        (self.next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) < p
    }
}

/// Rebuilds the node specs of a diagram, so tests can derive variants.
pub fn specs_of(d: &Diagram) -> Vec<NodeSpec> {
    let order = d.graph_order().expect("acyclic");
    order
        .iter()
        .map(|id| {
            let node = d.node(id.as_str()).expect("listed");
            NodeSpec {
                id: node.id().as_str().to_string(),
                kind: node.kind(),
                states: node.states().to_vec(),
                parents: node.parents().iter().map(|p| p.as_str().to_string()).collect(),
                rows: node.table().map(|t| t.rows().to_vec()),
            }
        })
        .collect()
}

/// A copy of the diagram with one node forced deterministic: each of its
/// rows becomes the unit vector of its largest entry.
pub fn with_deterministic_node(d: &Diagram, id: &str) -> Diagram {
    let mut specs = specs_of(d);
    for spec in specs.iter_mut() {
        if spec.id == id {
            spec.kind = NodeKind::Deterministic;
            let rows = spec.rows.as_mut().expect("chance rows");
            for row in rows.iter_mut() {
                let best = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                for (i, v) in row.iter_mut().enumerate() {
                    *v = if i == best { 1.0 } else { 0.0 };
                }
            }
        }
    }
    build_diagram(d.name(), &specs).expect("unit rows stay consistent")
}

/// Largest absolute difference between two joint tables.
pub fn table_linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
