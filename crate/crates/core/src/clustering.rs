//! Join-tree ("junction tree") construction and the two clustering
//! propagation variants.
//!
//! Construction moralizes the network, triangulates it (maximum
//! cardinality search or min-fill), extracts the maximal cliques as
//! *universes*, and connects them by a maximum-weight spanning tree that
//! satisfies the running intersection property. Compilation allocates and
//! calibrates the clique potentials once; queries then work on private
//! copies, so one compiled tree serves any number of evidence sets.
//!
//! Propagation is organized in whole passes over universe state spaces
//! (setup, absorb, sepset update, marginalization), and the instrumented
//! step counts are exactly the pass sizes. The estimator functions in
//! [`crate::estimators`] predict these counts from the tree structure
//! alone.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::estimators::StepCounter;
use crate::model::{advance_config, Beliefs, Diagram, Evidence, NodeId};

/// Simple undirected graph over node ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UndirectedGraph {
    adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl UndirectedGraph {
    pub fn new() -> Self {
        UndirectedGraph::default()
    }

    pub fn add_node(&mut self, id: NodeId) {
        self.adj.entry(id).or_default();
    }

    /// Adds an undirected edge; self-loops are ignored.
    pub fn add_edge(&mut self, a: &NodeId, b: &NodeId) {
        if a == b {
            return;
        }
        self.adj.entry(a.clone()).or_default().insert(b.clone());
        self.adj.entry(b.clone()).or_default().insert(a.clone());
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.adj.get(a).is_some_and(|n| n.contains(b))
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.adj.keys()
    }

    pub fn neighbors(&self, id: &str) -> impl Iterator<Item = &NodeId> {
        self.adj.get(id).into_iter().flatten()
    }
}

/// Moral graph: the skeleton plus edges marrying the parents of every
/// node.
pub fn moralize(d: &Diagram) -> UndirectedGraph {
    let mut g = UndirectedGraph::new();
    for node in d.nodes() {
        g.add_node(node.id().clone());
        for p in node.parents() {
            g.add_edge(node.id(), p);
        }
        for (i, p) in node.parents().iter().enumerate() {
            for q in &node.parents()[i + 1..] {
                g.add_edge(p, q);
            }
        }
    }
    g
}

/// Fill-in strategy for [`triangulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangulationMethod {
    /// Maximum cardinality search; zero fill on already chordal graphs.
    Mcs,
    /// Greedy minimum fill-in, ties by smaller resulting clique state
    /// space, then by id.
    MinFill,
}

/// Triangulates the graph, returning the fill edges and the elimination
/// order that produces them. `cards` supplies node cardinalities for the
/// min-fill tie-break (maximum cardinality search ignores it).
pub fn triangulate(
    g: &UndirectedGraph,
    method: TriangulationMethod,
    cards: &BTreeMap<NodeId, usize>,
) -> (Vec<(NodeId, NodeId)>, Vec<NodeId>) {
    let order = match method {
        TriangulationMethod::Mcs => mcs_elimination_order(g),
        TriangulationMethod::MinFill => return min_fill(g, cards),
    };
    let fill = fill_along(g, &order);
    (fill, order)
}

/// Maximum cardinality search visit order, reversed for elimination.
/// Ties (including the starting node) break toward the smallest id.
fn mcs_elimination_order(g: &UndirectedGraph) -> Vec<NodeId> {
    let mut scores: BTreeMap<&NodeId, usize> = g.nodes().map(|id| (id, 0)).collect();
    let mut visit_order: Vec<NodeId> = Vec::with_capacity(g.node_count());
    while !scores.is_empty() {
        let next: &NodeId = scores
            .iter()
            .max_by_key(|(id, &score)| (score, core::cmp::Reverse(*id)))
            .map(|(&id, _)| id)
            .expect("nonempty");
        scores.remove(next);
        visit_order.push(next.clone());
        for nb in g.neighbors(next.as_str()) {
            if let Some(score) = scores.get_mut(nb) {
                *score += 1;
            }
        }
    }
    visit_order.reverse();
    visit_order
}

/// Fill edges produced by eliminating along `order`.
fn fill_along(g: &UndirectedGraph, order: &[NodeId]) -> Vec<(NodeId, NodeId)> {
    let mut work = g.clone();
    let mut fill = Vec::new();
    for v in order {
        let neighbors: Vec<NodeId> = work.neighbors(v.as_str()).cloned().collect();
        for (i, a) in neighbors.iter().enumerate() {
            for b in &neighbors[i + 1..] {
                if !work.has_edge(a.as_str(), b.as_str()) {
                    work.add_edge(a, b);
                    fill.push((a.clone(), b.clone()));
                }
            }
        }
        remove_node(&mut work, v);
    }
    fill
}

fn remove_node(g: &mut UndirectedGraph, v: &NodeId) {
    if let Some(neighbors) = g.adj.remove(v.as_str()) {
        for nb in neighbors {
            if let Some(set) = g.adj.get_mut(nb.as_str()) {
                set.remove(v.as_str());
            }
        }
    }
}

fn min_fill(
    g: &UndirectedGraph,
    cards: &BTreeMap<NodeId, usize>,
) -> (Vec<(NodeId, NodeId)>, Vec<NodeId>) {
    let mut work = g.clone();
    let mut fill = Vec::new();
    let mut order = Vec::with_capacity(g.node_count());
    while work.node_count() > 0 {
        let mut best: Option<(usize, u64, &NodeId)> = None;
        for v in work.adj.keys() {
            let neighbors: Vec<&NodeId> = work.adj[v.as_str()].iter().collect();
            let mut missing = 0usize;
            for (i, a) in neighbors.iter().enumerate() {
                for b in &neighbors[i + 1..] {
                    if !work.has_edge(a.as_str(), b.as_str()) {
                        missing += 1;
                    }
                }
            }
            let clique_space: u64 = neighbors
                .iter()
                .chain(core::iter::once(&v))
                .map(|id| cards.get(id.as_str()).copied().unwrap_or(1) as u64)
                .product();
            let candidate = (missing, clique_space, v);
            let better = match &best {
                None => true,
                Some((m, s, id)) => {
                    (candidate.0, candidate.1, candidate.2) < (*m, *s, id)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
        let chosen = best.expect("nonempty graph").2.clone();
        let neighbors: Vec<NodeId> = work.neighbors(chosen.as_str()).cloned().collect();
        for (i, a) in neighbors.iter().enumerate() {
            for b in &neighbors[i + 1..] {
                if !work.has_edge(a.as_str(), b.as_str()) {
                    work.add_edge(a, b);
                    fill.push((a.clone(), b.clone()));
                }
            }
        }
        remove_node(&mut work, &chosen);
        order.push(chosen);
    }
    (fill, order)
}

/// One clique of the triangulated moral graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    /// Member node ids, ascending; potentials index them row-major.
    pub members: Vec<NodeId>,
    pub cards: Vec<usize>,
    /// S(U): the joint state space size.
    pub state_space: u64,
    /// N(U): neighbors in the join tree.
    pub neighbor_count: usize,
}

/// A join-tree edge and its sepset.
#[derive(Debug, Clone, PartialEq)]
pub struct SepsetEdge {
    pub a: usize,
    pub b: usize,
    pub members: Vec<NodeId>,
    pub cards: Vec<usize>,
    pub state_space: u64,
    /// Projection of an `a`-side (resp. `b`-side) universe configuration
    /// onto the sepset index: pairs of (position in universe, stride).
    proj_a: Vec<(usize, usize)>,
    proj_b: Vec<(usize, usize)>,
}

impl SepsetEdge {
    fn project(&self, from_a: bool, cfg: &[usize]) -> usize {
        let proj = if from_a { &self.proj_a } else { &self.proj_b };
        proj.iter().map(|&(pos, stride)| cfg[pos] * stride).sum()
    }

    fn other(&self, u: usize) -> usize {
        if self.a == u { self.b } else { self.a }
    }
}

/// The polynomial-size skeleton of a compiled join tree: universes,
/// sepsets, tree orientation and home assignments, but no potentials.
/// This is all the estimator functions need.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinTreeStructure {
    pub universes: Vec<Universe>,
    pub edges: Vec<SepsetEdge>,
    /// U_i: the smallest universe containing each net node.
    pub member_home: BTreeMap<NodeId, usize>,
    /// The universe whose potential absorbs each node's table.
    pub family_home: BTreeMap<NodeId, usize>,
    /// Net node cardinalities (S(i) in the estimator formulas).
    pub node_cards: BTreeMap<NodeId, usize>,
    pub root: usize,
    parent_edge: Vec<Option<usize>>,
    children_edges: Vec<Vec<usize>>,
    /// Universes ordered root-first.
    pre_order: Vec<usize>,
}

impl JoinTreeStructure {
    /// Universes in leaves-first order.
    fn post_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.pre_order.iter().rev().copied()
    }

    /// Largest universe state space, a measure of inference hardness.
    pub fn max_universe_space(&self) -> u64 {
        self.universes.iter().map(|u| u.state_space).max().unwrap_or(0)
    }

    /// Total potential cells over all universes.
    pub fn total_universe_space(&self) -> u64 {
        self.universes.iter().map(|u| u.state_space).sum()
    }

    /// Checks the running intersection property by explicit tree paths:
    /// any node shared by two universes must lie in every universe
    /// between them.
    pub fn running_intersection_holds(&self) -> bool {
        let count = self.universes.len();
        for a in 0..count {
            for b in a + 1..count {
                let shared: Vec<&NodeId> = self.universes[a]
                    .members
                    .iter()
                    .filter(|m| self.universes[b].members.contains(m))
                    .collect();
                if shared.is_empty() {
                    continue;
                }
                for step in self.tree_path(a, b) {
                    let members = &self.universes[step].members;
                    if shared.iter().any(|m| !members.contains(m)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn tree_path(&self, a: usize, b: usize) -> Vec<usize> {
        // Walk both nodes up to the root, then join the chains.
        let chain = |mut x: usize| {
            let mut path = vec![x];
            while let Some(edge) = self.parent_edge[x] {
                x = self.edges[edge].other(x);
                path.push(x);
            }
            path
        };
        let up_a = chain(a);
        let up_b = chain(b);
        let on_b: BTreeSet<usize> = up_b.iter().copied().collect();
        let meet = up_a.iter().find(|x| on_b.contains(x)).copied().expect("shared root");
        let mut path: Vec<usize> =
            up_a.iter().take_while(|&&x| x != meet).copied().collect();
        path.push(meet);
        let tail: Vec<usize> = up_b.iter().take_while(|&&x| x != meet).copied().collect();
        path.extend(tail.into_iter().rev());
        path
    }
}

/// A compiled join tree: the structure plus calibrated potentials. Queries
/// never mutate it, so a compiled tree can be shared and reused across any
/// number of evidence sets.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinTree {
    pub structure: JoinTreeStructure,
    /// Calibrated universe potentials (the universe joint marginals).
    potentials: Vec<Vec<f64>>,
    /// Calibrated sepset marginals per edge.
    sepsets: Vec<Vec<f64>>,
    /// Step count of compilation: setup, collect and distribute passes.
    init_steps: u64,
}

static POTENTIAL_ALLOCATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of potential tables allocated so far by join-tree compilation,
/// process-wide. Estimator functions must leave this untouched.
pub fn potential_allocations() -> u64 {
    POTENTIAL_ALLOCATIONS.load(Ordering::Relaxed)
}

/// Builds the join-tree structure: moralize, triangulate, extract maximal
/// cliques, and connect them by a maximum-weight spanning tree (shared
/// variable count; ties by clique order). Purely graph work: no potential
/// is allocated.
pub fn build_join_tree_structure(
    d: &Diagram,
    method: TriangulationMethod,
) -> Result<JoinTreeStructure> {
    if !d.is_belief_net() {
        return Err(Error::NotBeliefNet);
    }
    d.graph_order()?;
    let cards: BTreeMap<NodeId, usize> =
        d.nodes().map(|n| (n.id().clone(), n.states().len())).collect();
    let moral = moralize(d);
    let (fill, elimination) = triangulate(&moral, method, &cards);
    let mut tri = moral;
    for (a, b) in &fill {
        tri.add_edge(a, b);
    }

    // Cliques in elimination order: the node plus its not-yet-eliminated
    // neighbors; then keep only the maximal ones.
    let mut eliminated: BTreeSet<&NodeId> = BTreeSet::new();
    let mut candidates: Vec<BTreeSet<NodeId>> = Vec::new();
    for v in &elimination {
        let mut clique: BTreeSet<NodeId> = tri
            .neighbors(v.as_str())
            .filter(|nb| !eliminated.contains(nb))
            .cloned()
            .collect();
        clique.insert(v.clone());
        eliminated.insert(v);
        candidates.push(clique);
    }
    let mut cliques: Vec<BTreeSet<NodeId>> = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let maximal = candidates
            .iter()
            .enumerate()
            .all(|(j, other)| j == i || !(c.is_subset(other) && (c != other || j < i)));
        if maximal {
            cliques.push(c.clone());
        }
    }

    let universes: Vec<Universe> = cliques
        .iter()
        .map(|c| {
            let members: Vec<NodeId> = c.iter().cloned().collect();
            let member_cards: Vec<usize> =
                members.iter().map(|m| cards[m.as_str()]).collect();
            let state_space = member_cards.iter().map(|&c| c as u64).product();
            Universe { members, cards: member_cards, state_space, neighbor_count: 0 }
        })
        .collect();

    // Maximum-weight spanning tree over shared-variable counts. Zero
    // weight edges are allowed so disconnected components still join one
    // tree (their empty sepsets carry scalar mass between components).
    let count = universes.len();
    let mut candidate_edges: Vec<(usize, usize, usize)> = Vec::new();
    for a in 0..count {
        for b in a + 1..count {
            let weight = universes[a]
                .members
                .iter()
                .filter(|m| universes[b].members.contains(m))
                .count();
            candidate_edges.push((weight, a, b));
        }
    }
    candidate_edges.sort_by_key(|&(w, a, b)| (core::cmp::Reverse(w), a, b));
    let mut component: Vec<usize> = (0..count).collect();
    fn find(component: &mut [usize], mut x: usize) -> usize {
        while component[x] != x {
            component[x] = component[component[x]];
            x = component[x];
        }
        x
    }
    let mut edges: Vec<SepsetEdge> = Vec::new();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (_, a, b) in candidate_edges {
        let (ra, rb) = (find(&mut component, a), find(&mut component, b));
        if ra == rb {
            continue;
        }
        component[ra] = rb;
        let members: Vec<NodeId> = universes[a]
            .members
            .iter()
            .filter(|m| universes[b].members.contains(m))
            .cloned()
            .collect();
        let sep_cards: Vec<usize> = members.iter().map(|m| cards[m.as_str()]).collect();
        let state_space = sep_cards.iter().map(|&c| c as u64).product();
        let proj = |u: usize| -> Vec<(usize, usize)> {
            let mut strides = vec![0usize; members.len()];
            let mut stride = 1;
            for i in (0..members.len()).rev() {
                strides[i] = stride;
                stride *= sep_cards[i];
            }
            members
                .iter()
                .zip(strides)
                .map(|(m, s)| {
                    let pos = universes[u]
                        .members
                        .iter()
                        .position(|x| x == m)
                        .expect("sepset member is in both universes");
                    (pos, s)
                })
                .collect()
        };
        let edge_index = edges.len();
        adjacency[a].push(edge_index);
        adjacency[b].push(edge_index);
        edges.push(SepsetEdge {
            a,
            b,
            proj_a: proj(a),
            proj_b: proj(b),
            members,
            cards: sep_cards,
            state_space,
        });
    }

    let mut universes = universes;
    for u in 0..count {
        universes[u].neighbor_count = adjacency[u].len();
    }

    // Root the tree at universe 0 and order it root-first.
    let root = 0;
    let mut parent_edge: Vec<Option<usize>> = vec![None; count];
    let mut children_edges: Vec<Vec<usize>> = vec![Vec::new(); count];
    let mut pre_order = Vec::with_capacity(count);
    let mut visited = vec![false; count.max(1)];
    if count > 0 {
        let mut queue = vec![root];
        visited[root] = true;
        while let Some(u) = queue.pop() {
            pre_order.push(u);
            for &e in &adjacency[u] {
                let v = edges[e].other(u);
                if !visited[v] {
                    visited[v] = true;
                    parent_edge[v] = Some(e);
                    children_edges[u].push(e);
                    queue.push(v);
                }
            }
        }
        debug_assert_eq!(pre_order.len(), count, "spanning tree is connected");
    }

    // Home universes: smallest state space, ties by universe order.
    let mut member_home: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut family_home: BTreeMap<NodeId, usize> = BTreeMap::new();
    for node in d.nodes() {
        let holds_member = |u: &Universe| u.members.contains(node.id());
        let holds_family = |u: &Universe| {
            holds_member(u) && node.parents().iter().all(|p| u.members.contains(p))
        };
        let smallest = |pred: &dyn Fn(&Universe) -> bool| -> Option<usize> {
            (0..count)
                .filter(|&u| pred(&universes[u]))
                .min_by_key(|&u| (universes[u].state_space, u))
        };
        let member = smallest(&holds_member).expect("every node is in some clique");
        let family =
            smallest(&holds_family).expect("moralization keeps each family in a clique");
        member_home.insert(node.id().clone(), member);
        family_home.insert(node.id().clone(), family);
    }

    Ok(JoinTreeStructure {
        universes,
        edges,
        member_home,
        family_home,
        node_cards: cards,
        root,
        parent_edge,
        children_edges,
        pre_order,
    })
}

/// Upper bound on total potential cells accepted by [`JoinTree::compile`].
pub const COMPILE_CELL_LIMIT: u64 = 50_000_000;

impl JoinTree {
    /// Allocates the universe potentials, multiplies every node's table
    /// into its home universe (one setup pass per universe) and calibrates
    /// the tree with one collect/distribute round. The step count of this
    /// work is recorded as the instrumented initialization cost.
    pub fn compile(d: &Diagram, structure: JoinTreeStructure) -> Result<JoinTree> {
        let total_cells = structure.total_universe_space();
        if total_cells > COMPILE_CELL_LIMIT {
            return Err(Error::TooLarge {
                states: total_cells as u128,
                limit: COMPILE_CELL_LIMIT as u128,
            });
        }
        let mut counter = StepCounter::default();
        let count = structure.universes.len();
        let mut potentials: Vec<Vec<f64>> = Vec::with_capacity(count);

        // Which tables multiply into each universe, with member positions.
        let mut homed: Vec<Vec<(&NodeId, usize, Vec<usize>)>> = vec![Vec::new(); count];
        for (id, &u) in &structure.family_home {
            let node = d.require(id.as_str())?;
            let members = &structure.universes[u].members;
            let node_pos = members.iter().position(|m| m == id).expect("member");
            let parent_pos: Vec<usize> = node
                .parents()
                .iter()
                .map(|p| members.iter().position(|m| m == p).expect("family member"))
                .collect();
            homed[u].push((id, node_pos, parent_pos));
        }

        for u in 0..count {
            let universe = &structure.universes[u];
            let mut potential = vec![1.0f64; universe.state_space as usize];
            POTENTIAL_ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
            // Setup pass: every homed table enters during one sweep.
            counter.universe_pass(universe.state_space);
            let mut cfg = vec![0usize; universe.members.len()];
            let mut scratch: Vec<usize> = Vec::new();
            for cell in potential.iter_mut() {
                for (id, node_pos, parent_pos) in &homed[u] {
                    let node = d.node(id.as_str()).expect("homed node");
                    scratch.clear();
                    scratch.extend(parent_pos.iter().map(|&p| cfg[p]));
                    *cell *= node.table().expect("chance table").row(&scratch)[cfg[*node_pos]];
                }
                advance_config(&mut cfg, &universe.cards);
            }
            potentials.push(potential);
        }

        let mut sepsets: Vec<Vec<f64>> =
            structure.edges.iter().map(|e| vec![1.0; e.state_space as usize]).collect();
        let mut scratch = PropagationScratch::new(&structure, &mut potentials, &mut sepsets);
        scratch.collect(&structure, &mut counter);
        scratch.distribute(&structure, &mut counter);

        Ok(JoinTree {
            structure,
            potentials,
            sepsets,
            init_steps: counter.update_steps(),
        })
    }

    /// Instrumented initialization cost (total pass sizes of compile).
    pub fn init_steps(&self) -> u64 {
        self.init_steps
    }
}

/// Builds and compiles a join tree in one step.
pub fn build_join_tree(d: &Diagram, method: TriangulationMethod) -> Result<JoinTree> {
    let structure = build_join_tree_structure(d, method)?;
    JoinTree::compile(d, structure)
}

/// Mutable view of one propagation round over potentials and sepsets.
struct PropagationScratch<'a> {
    potentials: &'a mut [Vec<f64>],
    /// Per edge: the last written sepset and the ratio to multiply into
    /// the absorbing side.
    stored: &'a mut [Vec<f64>],
    ratios: Vec<Vec<f64>>,
    /// Total mass observed at the root during collect.
    root_mass: f64,
}

impl<'a> PropagationScratch<'a> {
    fn new(
        structure: &JoinTreeStructure,
        potentials: &'a mut [Vec<f64>],
        stored: &'a mut [Vec<f64>],
    ) -> Self {
        PropagationScratch {
            potentials,
            stored,
            ratios: structure.edges.iter().map(|e| vec![0.0; e.state_space as usize]).collect(),
            root_mass: 0.0,
        }
    }

    /// One absorb pass: multiply the ratios of the given edges into the
    /// universe potential.
    fn absorb(&mut self, structure: &JoinTreeStructure, u: usize, edge_list: &[usize]) {
        let universe = &structure.universes[u];
        let mut cfg = vec![0usize; universe.members.len()];
        for idx in 0..self.potentials[u].len() {
            let mut factor = 1.0;
            for &e in edge_list {
                let edge = &structure.edges[e];
                let sep_idx = edge.project(edge.a == u, &cfg);
                factor *= self.ratios[e][sep_idx];
            }
            self.potentials[u][idx] *= factor;
            advance_config(&mut cfg, &universe.cards);
        }
    }

    /// One update pass: marginalize the universe onto the sepset of `e`,
    /// replace the stored sepset and set the ratio (0/0 := 0).
    fn update_sepset(&mut self, structure: &JoinTreeStructure, u: usize, e: usize) {
        let universe = &structure.universes[u];
        let edge = &structure.edges[e];
        let mut fresh = vec![0.0; edge.state_space as usize];
        let mut cfg = vec![0usize; universe.members.len()];
        for idx in 0..self.potentials[u].len() {
            fresh[edge.project(edge.a == u, &cfg)] += self.potentials[u][idx];
            advance_config(&mut cfg, &universe.cards);
        }
        for (r, (new, old)) in
            self.ratios[e].iter_mut().zip(fresh.iter().zip(self.stored[e].iter()))
        {
            *r = if *old == 0.0 { 0.0 } else { new / old };
        }
        self.stored[e] = fresh;
    }

    /// Root-only pass standing in for its (absent) parent-sepset update:
    /// sums the potential, which is the evidence probability.
    fn root_mass_pass(&mut self, u: usize) {
        self.root_mass = self.potentials[u].iter().sum();
    }

    /// Collect evidence: every universe absorbs from its child sepsets and
    /// updates its parent sepset, leaves first. Two passes per universe.
    fn collect(&mut self, structure: &JoinTreeStructure, counter: &mut StepCounter) {
        for u in structure.post_order() {
            let size = structure.universes[u].state_space;
            self.absorb(structure, u, &structure.children_edges[u]);
            counter.universe_pass(size);
            match structure.parent_edge[u] {
                Some(e) => self.update_sepset(structure, u, e),
                None => self.root_mass_pass(u),
            }
            counter.universe_pass(size);
        }
    }

    /// Distribute evidence: every universe absorbs from its parent sepset
    /// and updates each child sepset, root first. N(U) passes per
    /// universe.
    fn distribute(&mut self, structure: &JoinTreeStructure, counter: &mut StepCounter) {
        for &u in &structure.pre_order {
            let size = structure.universes[u].state_space;
            if let Some(e) = structure.parent_edge[u] {
                self.absorb(structure, u, &[e]);
                counter.universe_pass(size);
            }
            for &e in &structure.children_edges[u] {
                self.update_sepset(structure, u, e);
                counter.universe_pass(size);
            }
        }
    }
}

fn validate_evidence(structure: &JoinTreeStructure, evidence: &Evidence) -> Result<()> {
    for (id, state) in evidence.iter() {
        match structure.node_cards.get(id.as_str()) {
            None => return Err(Error::UnknownNode(id.clone())),
            Some(&card) if state >= card => {
                return Err(Error::UnknownState {
                    node: id.clone(),
                    label: alloc::format!("#{state}"),
                })
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Jensen-style propagation on clique potentials, with step counting.
///
/// Evidence is declared into each observed node's home universe (counted
/// separately), one collect and one distribute round run over private
/// copies of the calibrated potentials, and each node's belief is read
/// from its smallest containing universe. A zero normalizer at that point
/// means the evidence is impossible. Sepset divisions define 0/0 as 0;
/// no other division happens before the final per-node normalization.
pub fn jt_infer_jensen_counted(
    jt: &JoinTree,
    evidence: &Evidence,
    counter: &mut StepCounter,
) -> Result<Beliefs> {
    let structure = &jt.structure;
    validate_evidence(structure, evidence)?;
    let mut potentials = jt.potentials.clone();
    let mut stored = jt.sepsets.clone();

    // Declare evidence: one pass over each observed node's home universe.
    for (id, state) in evidence.iter() {
        let u = structure.member_home[id.as_str()];
        let universe = &structure.universes[u];
        let pos = universe.members.iter().position(|m| m == id).expect("member");
        let mut cfg = vec![0usize; universe.members.len()];
        for cell in potentials[u].iter_mut() {
            if cfg[pos] != state {
                *cell = 0.0;
            }
            advance_config(&mut cfg, &universe.cards);
        }
        counter.evidence_pass(universe.state_space);
    }

    let mut scratch = PropagationScratch::new(structure, &mut potentials, &mut stored);
    scratch.collect(structure, counter);
    scratch.distribute(structure, counter);
    let evidence_probability = scratch.root_mass;

    // Marginalize each node out of its home universe (the sum over the
    // resulting vector rides along in the same pass), then divide.
    let mut posteriors = BTreeMap::new();
    for (id, &u) in &structure.member_home {
        let universe = &structure.universes[u];
        let pos = universe.members.iter().position(|m| m == id).expect("member");
        let card = structure.node_cards[id.as_str()];
        let mut bel = vec![0.0f64; card];
        let mut total = 0.0;
        let mut cfg = vec![0usize; universe.members.len()];
        for cell in potentials[u].iter() {
            bel[cfg[pos]] += *cell;
            total += *cell;
            advance_config(&mut cfg, &universe.cards);
        }
        counter.marginalize_pass(universe.state_space);
        if total <= 0.0 {
            return Err(Error::ImpossibleEvidence);
        }
        for v in bel.iter_mut() {
            *v /= total;
        }
        counter.divide_pass(card as u64);
        posteriors.insert(id.clone(), bel);
    }
    Ok(Beliefs::new(posteriors, Some(evidence_probability)))
}

/// [`jt_infer_jensen_counted`] without the counter.
pub fn jt_infer_jensen(jt: &JoinTree, evidence: &Evidence) -> Result<Beliefs> {
    let mut counter = StepCounter::default();
    jt_infer_jensen_counted(jt, evidence, &mut counter)
}

/// Clustering via a meta network: the join tree is oriented from its root
/// and each universe becomes one meta node whose conditional given the
/// parent sepset comes from the calibrated marginals; rows with a zero
/// parent marginal are set to all zeros (they can never receive mass).
/// The polytree message scheme then runs over the meta tree in joint
/// scale.
pub fn jt_infer_meta(jt: &JoinTree, evidence: &Evidence) -> Result<Beliefs> {
    let structure = &jt.structure;
    validate_evidence(structure, evidence)?;
    let count = structure.universes.len();

    // Evidence indicator per universe over its configurations.
    let mut indicator: Vec<Vec<f64>> = structure
        .universes
        .iter()
        .map(|u| vec![1.0; u.state_space as usize])
        .collect();
    for (id, state) in evidence.iter() {
        let u = structure.member_home[id.as_str()];
        let universe = &structure.universes[u];
        let pos = universe.members.iter().position(|m| m == id).expect("member");
        let mut cfg = vec![0usize; universe.members.len()];
        for cell in indicator[u].iter_mut() {
            if cfg[pos] != state {
                *cell = 0.0;
            }
            advance_config(&mut cfg, &universe.cards);
        }
    }

    // Meta conditional per non-root universe: P(u) / P(parent sepset),
    // zero where the sepset marginal is zero.
    let conditional: Vec<Vec<f64>> = (0..count)
        .map(|u| match structure.parent_edge[u] {
            None => jt.potentials[u].clone(),
            Some(e) => {
                let edge = &structure.edges[e];
                let universe = &structure.universes[u];
                let mut cond = jt.potentials[u].clone();
                let mut cfg = vec![0usize; universe.members.len()];
                for cell in cond.iter_mut() {
                    let sep = edge.project(edge.a == u, &cfg);
                    let marginal = jt.sepsets[e][sep];
                    *cell = if marginal == 0.0 { 0.0 } else { *cell / marginal };
                    advance_config(&mut cfg, &universe.cards);
                }
                cond
            }
        })
        .collect();

    // λ over universe configs, collapsed to sepset scale when sent up.
    let mut lambda_sep: Vec<Vec<f64>> =
        structure.edges.iter().map(|e| vec![0.0; e.state_space as usize]).collect();
    let mut pi_sep: Vec<Vec<f64>> =
        structure.edges.iter().map(|e| vec![0.0; e.state_space as usize]).collect();

    let lambda_of = |u: usize,
                     exclude: Option<usize>,
                     lambda_sep: &[Vec<f64>],
                     structure: &JoinTreeStructure|
     -> Vec<f64> {
        let universe = &structure.universes[u];
        let mut lambda = indicator[u].clone();
        let mut cfg = vec![0usize; universe.members.len()];
        for cell in lambda.iter_mut() {
            for &e in &structure.children_edges[u] {
                if Some(e) == exclude {
                    continue;
                }
                let edge = &structure.edges[e];
                *cell *= lambda_sep[e][edge.project(edge.a == u, &cfg)];
            }
            advance_config(&mut cfg, &universe.cards);
        }
        lambda
    };

    // Collect: leaves first, each universe sends λ to its parent sepset.
    for u in structure.post_order() {
        let Some(parent) = structure.parent_edge[u] else { continue };
        let universe = &structure.universes[u];
        let lambda = lambda_of(u, None, &lambda_sep, structure);
        let edge = &structure.edges[parent];
        let mut msg = vec![0.0; edge.state_space as usize];
        let mut cfg = vec![0usize; universe.members.len()];
        for (idx, l) in lambda.iter().enumerate() {
            msg[edge.project(edge.a == u, &cfg)] += l * conditional[u][idx];
            advance_config(&mut cfg, &universe.cards);
        }
        lambda_sep[parent] = msg;
    }

    // Distribute: root first, each universe sends π to every child sepset.
    let mut pi: Vec<Vec<f64>> = vec![Vec::new(); count];
    for &u in &structure.pre_order {
        let universe = &structure.universes[u];
        pi[u] = match structure.parent_edge[u] {
            None => conditional[u].clone(),
            Some(e) => {
                let edge = &structure.edges[e];
                let mut v = conditional[u].clone();
                let mut cfg = vec![0usize; universe.members.len()];
                for cell in v.iter_mut() {
                    *cell *= pi_sep[e][edge.project(edge.a == u, &cfg)];
                    advance_config(&mut cfg, &universe.cards);
                }
                v
            }
        };
        for &child_edge in &structure.children_edges[u] {
            let lambda = lambda_of(u, Some(child_edge), &lambda_sep, structure);
            let edge = &structure.edges[child_edge];
            let mut msg = vec![0.0; edge.state_space as usize];
            let mut cfg = vec![0usize; universe.members.len()];
            for (idx, l) in lambda.iter().enumerate() {
                msg[edge.project(edge.a == u, &cfg)] += l * pi[u][idx];
                advance_config(&mut cfg, &universe.cards);
            }
            pi_sep[child_edge] = msg;
        }
    }

    // Universe beliefs, then per-node marginals from the home universes.
    let mut evidence_probability = None;
    let mut bel: Vec<Vec<f64>> = Vec::with_capacity(count);
    for u in 0..count {
        let lambda = lambda_of(u, None, &lambda_sep, structure);
        let mut v = pi[u].clone();
        for (cell, l) in v.iter_mut().zip(lambda.iter()) {
            *cell *= l;
        }
        if u == structure.root {
            evidence_probability = Some(v.iter().sum());
        }
        bel.push(v);
    }
    let mut posteriors = BTreeMap::new();
    for (id, &u) in &structure.member_home {
        let universe = &structure.universes[u];
        let pos = universe.members.iter().position(|m| m == id).expect("member");
        let card = structure.node_cards[id.as_str()];
        let mut v = vec![0.0f64; card];
        let mut cfg = vec![0usize; universe.members.len()];
        for cell in bel[u].iter() {
            v[cfg[pos]] += *cell;
            advance_config(&mut cfg, &universe.cards);
        }
        let total: f64 = v.iter().sum();
        if total <= 0.0 {
            return Err(Error::ImpossibleEvidence);
        }
        for x in v.iter_mut() {
            *x /= total;
        }
        posteriors.insert(id.clone(), v);
    }
    Ok(Beliefs::new(posteriors, evidence_probability))
}
