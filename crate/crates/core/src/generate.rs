//! Seeded random network generation, for testing algorithms and producing
//! benchmark inputs. A fixed seed yields a byte-identical diagram.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{build_diagram, Diagram, Evidence, NodeKind, NodeSpec};
use crate::rng::Rng;

/// Parameters for [`random_network`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetParams {
    pub node_count: usize,
    pub max_parents: usize,
    /// Inclusive range of states per node.
    pub states: (usize, usize),
    /// Probability of drawing each candidate arc.
    pub arc_density: f64,
    /// Keep the undirected skeleton acyclic.
    pub polytree_only: bool,
    pub seed: u64,
}

impl Default for RandomNetParams {
    fn default() -> Self {
        RandomNetParams {
            node_count: 8,
            max_parents: 3,
            states: (2, 2),
            arc_density: 0.4,
            polytree_only: false,
            seed: 0,
        }
    }
}

/// Generates a random belief network.
///
/// Nodes are created in index order with zero-padded ids (`n00`, `n01`, …)
/// so id order equals generation order; parents are drawn only from
/// earlier nodes, which makes the result acyclic by construction. Rows are
/// drawn uniformly from the probability simplex.
pub fn random_network(params: &RandomNetParams) -> Result<Diagram> {
    check_params(params)?;
    let mut rng = Rng::new(params.seed);
    let mut union_find = UnionFind::new(params.node_count);
    let width = id_width(params.node_count);
    let mut specs: Vec<NodeSpec> = Vec::with_capacity(params.node_count);
    let mut cards: Vec<usize> = Vec::with_capacity(params.node_count);

    for i in 0..params.node_count {
        let card = rng.range(params.states.0, params.states.1);
        cards.push(card);
        let mut parents: Vec<usize> = Vec::new();
        for j in 0..i {
            if parents.len() >= params.max_parents {
                break;
            }
            if !rng.chance(params.arc_density) {
                continue;
            }
            if params.polytree_only && union_find.same(i, j) {
                continue;
            }
            union_find.join(i, j);
            parents.push(j);
        }
        let row_count: usize = parents.iter().map(|&j| cards[j]).product();
        let rows: Vec<Vec<f64>> = (0..row_count).map(|_| rng.simplex(card)).collect();
        let states: Vec<String> = (0..card).map(|s| format!("s{s}")).collect();
        specs.push(NodeSpec {
            id: format!("n{i:0width$}"),
            kind: NodeKind::Chance,
            states,
            parents: parents.iter().map(|&j| format!("n{j:0width$}")).collect(),
            rows: Some(rows),
        });
    }
    build_diagram(&format!("gen-{}", params.seed), &specs)
}

/// Parameters for [`random_influence_diagram`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomIdParams {
    pub chance_count: usize,
    /// Decision nodes, all binary, interleaved between the chance nodes.
    pub decision_count: usize,
    /// Inclusive range of states per chance node.
    pub states: (usize, usize),
    pub max_parents: usize,
    pub arc_density: f64,
    pub seed: u64,
}

impl Default for RandomIdParams {
    fn default() -> Self {
        RandomIdParams {
            chance_count: 4,
            decision_count: 1,
            states: (2, 3),
            max_parents: 2,
            arc_density: 0.5,
            seed: 0,
        }
    }
}

/// Generates a random influence diagram: a chance DAG with interleaved
/// binary decisions, no-forgetting information arcs, and one value node.
///
/// Information sets are kept small (at most one fresh chance observation
/// per decision plus everything inherited by no-forgetting) so exhaustive
/// policy enumeration stays feasible on the generated diagrams.
pub fn random_influence_diagram(params: &RandomIdParams) -> Result<Diagram> {
    if params.chance_count < 1 || params.decision_count < 1 {
        return Err(Error::BadParams("need at least one chance and one decision node".into()));
    }
    if params.states.0 < 1 || params.states.0 > params.states.1 {
        return Err(Error::BadParams("empty states range".into()));
    }
    let mut rng = Rng::new(params.seed);
    let width = id_width(params.chance_count);
    let chance_id = |i: usize| format!("c{i:0width$}");
    let decision_id = |k: usize| format!("d{k}");

    // Decision k sits after `cut(k)` chance nodes.
    let cut = |k: usize| (k + 1) * params.chance_count / (params.decision_count + 1);

    let mut specs: Vec<NodeSpec> = Vec::new();
    let mut chance_cards: Vec<usize> = Vec::new();
    let mut info_sets: Vec<Vec<String>> = Vec::new();
    let mut placed_decisions = 0;

    for i in 0..params.chance_count {
        while placed_decisions < params.decision_count && cut(placed_decisions) == i {
            let mut info: Vec<String> = Vec::new();
            if placed_decisions > 0 {
                info.push(decision_id(placed_decisions - 1));
                info.extend(info_sets[placed_decisions - 1].iter().cloned());
            }
            if i > 0 && rng.chance(0.7) {
                let observed = chance_id(rng.below(i));
                if !info.contains(&observed) {
                    info.push(observed);
                }
            }
            info_sets.push(info.clone());
            specs.push(NodeSpec::decision(&decision_id(placed_decisions), &["a0", "a1"], &[]));
            let spec = specs.last_mut().expect("just pushed");
            spec.parents = info;
            placed_decisions += 1;
        }
        let card = rng.range(params.states.0, params.states.1);
        chance_cards.push(card);
        let mut parents: Vec<String> = Vec::new();
        for j in 0..i {
            if parents.len() >= params.max_parents {
                break;
            }
            if rng.chance(params.arc_density) {
                parents.push(chance_id(j));
            }
        }
        // Chance nodes after a decision may depend on it.
        if placed_decisions > 0 && rng.chance(0.5) {
            parents.push(decision_id(rng.below(placed_decisions)));
        }
        let row_count: usize = parents
            .iter()
            .map(|p| match p.strip_prefix('c') {
                Some(idx) => chance_cards[idx.parse::<usize>().expect("chance id")],
                None => 2,
            })
            .product();
        let rows: Vec<Vec<f64>> = (0..row_count).map(|_| rng.simplex(card)).collect();
        let states: Vec<String> = (0..card).map(|s| format!("s{s}")).collect();
        specs.push(NodeSpec {
            id: chance_id(i),
            kind: NodeKind::Chance,
            states,
            parents,
            rows: Some(rows),
        });
    }
    while placed_decisions < params.decision_count {
        let mut info: Vec<String> = Vec::new();
        if placed_decisions > 0 {
            info.push(decision_id(placed_decisions - 1));
            info.extend(info_sets[placed_decisions - 1].iter().cloned());
        }
        info_sets.push(info.clone());
        let mut spec = NodeSpec::decision(&decision_id(placed_decisions), &["a0", "a1"], &[]);
        spec.parents = info;
        specs.push(spec);
        placed_decisions += 1;
    }

    // Value node: all decisions plus one or two late chance nodes.
    let mut value_parents: Vec<String> =
        (0..params.decision_count).map(decision_id).collect();
    let picks = 1 + rng.below(2.min(params.chance_count));
    for _ in 0..picks {
        let lo = params.chance_count / 2;
        let candidate = chance_id(rng.range(lo, params.chance_count - 1));
        if !value_parents.contains(&candidate) {
            value_parents.push(candidate);
        }
    }
    let mut value_rows = 1usize;
    for p in &value_parents {
        value_rows *= match p.strip_prefix('c') {
            Some(idx) => chance_cards[idx.parse::<usize>().expect("chance id")],
            None => 2,
        };
    }
    let utilities: Vec<f64> = (0..value_rows).map(|_| rng.f64() * 100.0).collect();
    let value_refs: Vec<&str> = value_parents.iter().map(String::as_str).collect();
    specs.push(NodeSpec::value("v", &value_refs, utilities));

    build_diagram(&format!("genid-{}", params.seed), &specs)
}

/// Seeded evidence over up to `max_nodes` random chance nodes.
pub fn random_evidence(d: &Diagram, max_nodes: usize, seed: u64) -> Evidence {
    let mut rng = Rng::new(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let ids: Vec<&str> = d
        .nodes()
        .filter(|n| n.kind().is_chance_like())
        .map(|n| n.id().as_str())
        .collect();
    let mut evidence = Evidence::none();
    if ids.is_empty() || max_nodes == 0 {
        return evidence;
    }
    let count = rng.below(max_nodes.min(ids.len()) + 1);
    for _ in 0..count {
        let id = ids[rng.below(ids.len())];
        let card = d.node(id).expect("listed node").states().len();
        let _ = evidence.observe_index(d, id, rng.below(card));
    }
    evidence
}

fn check_params(params: &RandomNetParams) -> Result<()> {
    if params.node_count < 1 {
        return Err(Error::BadParams("node_count must be at least 1".into()));
    }
    if params.states.0 < 1 || params.states.0 > params.states.1 {
        return Err(Error::BadParams("empty states range".into()));
    }
    if !(0.0..=1.0).contains(&params.arc_density) {
        return Err(Error::BadParams("arc_density must be within [0, 1]".into()));
    }
    Ok(())
}

fn id_width(count: usize) -> usize {
    let mut width = 1;
    let mut rest = count.saturating_sub(1);
    while rest >= 10 {
        width += 1;
        rest /= 10;
    }
    width
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    fn join(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}
