//! Core diagram data model: typed nodes, conditional tables, evidence and
//! beliefs, plus the consistency checks and ordering utilities everything
//! else builds on.
//!
//! A [`Diagram`] is a directed acyclic graph of chance, deterministic,
//! decision and value nodes. Chance and deterministic nodes carry a
//! conditional probability table with one row per configuration of their
//! parents; value nodes carry a single utility per configuration; decision
//! nodes carry no table until they are solved. Diagrams are plain values:
//! every operation takes a diagram and returns a new one (or a report),
//! so they can be shared freely between threads.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Row sums of probability tables must match 1 within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Identifier of a node, unique within a diagram.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl core::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// The four node types of an influence diagram.
///
/// A deterministic node is a chance node whose rows are unit vectors: its
/// state is a function of its parents' states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Chance,
    Deterministic,
    Decision,
    Value,
}

impl NodeKind {
    /// Chance and deterministic nodes both carry probability rows.
    pub fn is_chance_like(self) -> bool {
        matches!(self, NodeKind::Chance | NodeKind::Deterministic)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Chance => "chance",
            NodeKind::Deterministic => "deterministic",
            NodeKind::Decision => "decision",
            NodeKind::Value => "value",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for NodeKind {
    type Err = ();

    fn from_str(s: &str) -> core::result::Result<Self, ()> {
        match s {
            "chance" => Ok(NodeKind::Chance),
            "deterministic" => Ok(NodeKind::Deterministic),
            "decision" => Ok(NodeKind::Decision),
            "value" => Ok(NodeKind::Value),
            _ => Err(()),
        }
    }
}

/// Numeric rows indexed by parent state configurations, row-major with the
/// first parent most significant.
///
/// Rows have one entry per state for chance and deterministic nodes and a
/// single utility entry for value nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    parent_order: Vec<NodeId>,
    parent_cards: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl ConditionalTable {
    pub(crate) fn new(
        parent_order: Vec<NodeId>,
        parent_cards: Vec<usize>,
        rows: Vec<Vec<f64>>,
    ) -> Self {
        debug_assert_eq!(parent_order.len(), parent_cards.len());
        debug_assert_eq!(rows.len(), state_space(&parent_cards));
        ConditionalTable { parent_order, parent_cards, rows }
    }

    pub fn parent_order(&self) -> &[NodeId] {
        &self.parent_order
    }

    pub fn parent_cards(&self) -> &[usize] {
        &self.parent_cards
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Entries per row (state count, or 1 for value nodes).
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Row for one parent configuration, given as one state index per parent
    /// in `parent_order`.
    pub fn row(&self, config: &[usize]) -> &[f64] {
        &self.rows[config_index(config, &self.parent_cards)]
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.rows
    }

    /// Position of `parent` in `parent_order`.
    pub(crate) fn parent_pos(&self, parent: &NodeId) -> Option<usize> {
        self.parent_order.iter().position(|p| p == parent)
    }

    /// Drops the parent at `pos`, keeping only the rows where it has state
    /// `state`.
    pub(crate) fn slice_parent(&self, pos: usize, state: usize) -> ConditionalTable {
        let mut order = self.parent_order.clone();
        let mut cards = self.parent_cards.clone();
        order.remove(pos);
        cards.remove(pos);
        let mut rows = Vec::with_capacity(state_space(&cards));
        let mut cfg = vec![0usize; cards.len()];
        loop {
            let mut full: Vec<usize> = cfg.clone();
            full.insert(pos, state);
            rows.push(self.row(&full).to_vec());
            if !advance_config(&mut cfg, &cards) {
                break;
            }
        }
        ConditionalTable::new(order, cards, rows)
    }

    /// Drops the parent at `pos`, averaging uniformly over its states.
    pub(crate) fn average_parent(&self, pos: usize) -> ConditionalTable {
        let removed_card = self.parent_cards[pos];
        let mut order = self.parent_order.clone();
        let mut cards = self.parent_cards.clone();
        order.remove(pos);
        cards.remove(pos);
        let width = self.width();
        let mut rows = Vec::with_capacity(state_space(&cards));
        let mut cfg = vec![0usize; cards.len()];
        loop {
            let mut avg = vec![0.0; width];
            for s in 0..removed_card {
                let mut full: Vec<usize> = cfg.clone();
                full.insert(pos, s);
                for (a, v) in avg.iter_mut().zip(self.row(&full)) {
                    *a += v;
                }
            }
            for a in avg.iter_mut() {
                *a /= removed_card as f64;
            }
            rows.push(avg);
            if !advance_config(&mut cfg, &cards) {
                break;
            }
        }
        ConditionalTable::new(order, cards, rows)
    }

    /// Grows the parent at `pos` by one state; rows for configurations with
    /// the new state are `fill`.
    pub(crate) fn extend_parent(&self, pos: usize, fill: &[f64]) -> ConditionalTable {
        let mut cards = self.parent_cards.clone();
        cards[pos] += 1;
        let mut rows = Vec::with_capacity(state_space(&cards));
        let mut cfg = vec![0usize; cards.len()];
        loop {
            if cfg[pos] + 1 == cards[pos] {
                rows.push(fill.to_vec());
            } else {
                rows.push(self.row(&cfg).to_vec());
            }
            if !advance_config(&mut cfg, &cards) {
                break;
            }
        }
        ConditionalTable::new(self.parent_order.clone(), cards, rows)
    }

    /// Shrinks the parent at `pos` by dropping the rows conditioned on
    /// `state`.
    pub(crate) fn remove_parent_state(&self, pos: usize, state: usize) -> ConditionalTable {
        let mut cards = self.parent_cards.clone();
        cards[pos] -= 1;
        let mut rows = Vec::with_capacity(state_space(&cards));
        let mut cfg = vec![0usize; cards.len()];
        loop {
            let mut full = cfg.clone();
            if full[pos] >= state {
                full[pos] += 1;
            }
            rows.push(self.row(&full).to_vec());
            if !advance_config(&mut cfg, &cards) {
                break;
            }
        }
        ConditionalTable::new(self.parent_order.clone(), cards, rows)
    }

    /// Appends a new parent, replicating every row across its states so the
    /// node stays independent of it.
    pub(crate) fn replicate_new_parent(&self, parent: NodeId, card: usize) -> ConditionalTable {
        let mut order = self.parent_order.clone();
        let mut cards = self.parent_cards.clone();
        order.push(parent);
        cards.push(card);
        let mut rows = Vec::with_capacity(self.rows.len() * card);
        for row in &self.rows {
            for _ in 0..card {
                rows.push(row.clone());
            }
        }
        ConditionalTable::new(order, cards, rows)
    }

    /// For a deterministic table, the state index selected by `config`.
    pub(crate) fn unit_state(&self, config: &[usize]) -> Option<usize> {
        self.row(config).iter().position(|&v| v == 1.0)
    }
}

/// A single node of a diagram.
#[derive(Debug, Clone)]
pub struct Node {
    pub(crate) id: NodeId,
    pub(crate) kind: NodeKind,
    pub(crate) states: Vec<String>,
    pub(crate) parents: Vec<NodeId>,
    pub(crate) table: Option<ConditionalTable>,
    pub(crate) order_index: usize,
}

impl Node {
    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    /// Number of states; 1 for value nodes (their table rows have width 1).
    pub fn card(&self) -> usize {
        if self.kind == NodeKind::Value { 1 } else { self.states.len() }
    }

    pub fn parents(&self) -> &[NodeId] {
        &self.parents
    }

    pub fn table(&self) -> Option<&ConditionalTable> {
        self.table.as_ref()
    }

    /// Sequence number assigned when the node entered the diagram.
    pub fn order_index(&self) -> usize {
        self.order_index
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }
}

/// Structural equality; the build-time `order_index` is not part of the
/// data model and is ignored.
impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.kind == other.kind
            && self.states == other.states
            && self.parents == other.parents
            && self.table == other.table
    }
}

/// Scope of an extension record: the whole diagram or a single node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExtScope {
    Diagram,
    Node(NodeId),
}

/// Custom key/value information carried verbatim through copy and
/// save/load.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtRecord {
    pub scope: ExtScope,
    pub key: String,
    pub value: String,
}

/// A belief network or influence diagram.
#[derive(Debug, Clone)]
pub struct Diagram {
    pub(crate) name: String,
    pub(crate) nodes: BTreeMap<NodeId, Node>,
    pub(crate) ext: Vec<ExtRecord>,
    pub(crate) next_order: usize,
}

/// Structural equality over name, nodes and extension records.
impl PartialEq for Diagram {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.nodes == other.nodes && self.ext == other.ext
    }
}

impl Diagram {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    /// Node lookup that reports an error for unknown ids.
    pub fn require(&self, id: &str) -> Result<&Node> {
        self.nodes.get(id).ok_or_else(|| Error::UnknownNode(NodeId::from(id)))
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn has_arc(&self, parent: &str, child: &str) -> bool {
        self.nodes.get(child).is_some_and(|n| n.parents.iter().any(|p| p.as_str() == parent))
    }

    /// Children of every node, each list in ascending id order.
    pub fn children_map(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut map: BTreeMap<NodeId, Vec<NodeId>> =
            self.nodes.keys().map(|id| (id.clone(), Vec::new())).collect();
        for node in self.nodes.values() {
            for parent in &node.parents {
                if let Some(children) = map.get_mut(parent) {
                    children.push(node.id.clone());
                }
            }
        }
        map
    }

    pub fn value_node(&self) -> Option<&Node> {
        self.nodes.values().find(|n| n.kind == NodeKind::Value)
    }

    pub fn decision_nodes(&self) -> Vec<&Node> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Decision).collect()
    }

    /// True iff the arc relation has no directed cycle.
    pub fn is_acyclic(&self) -> bool {
        self.graph_order().is_ok()
    }

    /// True iff every node is a chance or deterministic node.
    pub fn is_belief_net(&self) -> bool {
        self.nodes.values().all(|n| n.kind.is_chance_like())
    }

    /// True iff every probability table entry is greater than zero.
    ///
    /// Value tables carry utilities, not probabilities, and are not
    /// inspected.
    pub fn is_strictly_positive(&self) -> bool {
        self.nodes
            .values()
            .filter(|n| n.kind.is_chance_like())
            .flat_map(|n| n.table.iter())
            .all(|t| t.rows().iter().all(|row| row.iter().all(|&v| v > 0.0)))
    }

    /// Topological order of the node ids, ties broken by ascending id.
    pub fn graph_order(&self) -> Result<Vec<NodeId>> {
        let mut missing: BTreeMap<&NodeId, usize> = BTreeMap::new();
        let mut children: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for node in self.nodes.values() {
            let resolved =
                node.parents.iter().filter(|p| self.nodes.contains_key(p.as_str())).count();
            missing.insert(&node.id, resolved);
            for parent in &node.parents {
                children.entry(parent).or_default().push(&node.id);
            }
        }
        let mut ready: BTreeSet<&NodeId> =
            missing.iter().filter(|(_, &c)| c == 0).map(|(&id, _)| id).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(&id) = ready.iter().next() {
            ready.remove(id);
            order.push(id.clone());
            for &child in children.get(id).into_iter().flatten() {
                let count = missing.get_mut(child).expect("child is a node");
                *count -= 1;
                if *count == 0 {
                    ready.insert(child);
                }
            }
        }
        if order.len() == self.nodes.len() { Ok(order) } else { Err(Error::CycleDetected) }
    }

    /// Mixes every probability row with the uniform distribution:
    /// `(1 - eps) * p + eps * uniform`. With `eps` zero the diagram is
    /// returned unchanged; otherwise deterministic nodes become plain
    /// chance nodes, since their unit rows gain mass everywhere.
    pub fn make_strictly_positive(&self, eps: f64) -> Result<Diagram> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::BadEpsilon(eps));
        }
        let mut out = self.clone();
        if eps == 0.0 {
            return Ok(out);
        }
        for node in out.nodes.values_mut() {
            if !node.kind.is_chance_like() {
                continue;
            }
            if let Some(table) = node.table.as_mut() {
                for row in table.rows_mut() {
                    let uniform = eps / row.len() as f64;
                    for v in row.iter_mut() {
                        *v = (1.0 - eps) * *v + uniform;
                    }
                }
            }
            if node.kind == NodeKind::Deterministic {
                node.kind = NodeKind::Chance;
            }
        }
        Ok(out)
    }

    /// Checks every model invariant and reports all violations.
    pub fn is_consistent(&self) -> ConsistencyReport {
        let mut violations = Vec::new();
        if !valid_identifier(&self.name) {
            violations.push(Violation {
                node: None,
                rule: Rule::Identifier,
                detail: "diagram name is not a valid identifier".to_string(),
            });
        }
        if self.graph_order().is_err() {
            violations.push(Violation {
                node: None,
                rule: Rule::Acyclicity,
                detail: "the arc relation contains a cycle".to_string(),
            });
        }
        let value_count = self.nodes.values().filter(|n| n.kind == NodeKind::Value).count();
        if value_count > 1 {
            violations.push(Violation {
                node: None,
                rule: Rule::SingleValueNode,
                detail: alloc::format!("{value_count} value nodes; at most one is allowed"),
            });
        }
        for node in self.nodes.values() {
            self.check_node(node, &mut violations);
        }
        ConsistencyReport { violations }
    }

    fn check_node(&self, node: &Node, violations: &mut Vec<Violation>) {
        let mut push = |rule: Rule, detail: String| {
            violations.push(Violation { node: Some(node.id.clone()), rule, detail });
        };
        if !valid_identifier(node.id.as_str()) {
            push(Rule::Identifier, "node id is not a valid identifier".to_string());
        }
        for label in &node.states {
            if !valid_identifier(label) {
                push(Rule::Identifier, alloc::format!("state label `{label}` is invalid"));
            }
        }
        let mut seen = BTreeSet::new();
        for label in &node.states {
            if !seen.insert(label.as_str()) {
                push(Rule::StateLabels, alloc::format!("duplicate state label `{label}`"));
            }
        }
        match node.kind {
            NodeKind::Value => {
                if !node.states.is_empty() {
                    push(Rule::StateLabels, "value nodes carry no states".to_string());
                }
                let has_child = self
                    .nodes
                    .values()
                    .any(|n| n.parents.iter().any(|p| p == &node.id));
                if has_child {
                    push(Rule::ValueLeaf, "value node has a child".to_string());
                }
            }
            _ => {
                if node.states.is_empty() {
                    push(Rule::StateLabels, "node has no states".to_string());
                }
            }
        }
        let mut parent_cards = Vec::with_capacity(node.parents.len());
        let mut refs_ok = true;
        let mut seen_parents = BTreeSet::new();
        for parent in &node.parents {
            if !seen_parents.insert(parent.as_str()) {
                push(Rule::ReferenceIntegrity, alloc::format!("duplicate parent `{parent}`"));
                refs_ok = false;
            }
            match self.nodes.get(parent.as_str()) {
                Some(p) if p.kind == NodeKind::Value => {
                    push(Rule::ValueLeaf, alloc::format!("value node `{parent}` has a child"));
                    refs_ok = false;
                }
                Some(p) => parent_cards.push(p.card()),
                None => {
                    push(
                        Rule::ReferenceIntegrity,
                        alloc::format!("unknown parent `{parent}`"),
                    );
                    refs_ok = false;
                }
            }
        }
        match (&node.table, node.kind) {
            (None, NodeKind::Decision) => {}
            (Some(_), NodeKind::Decision) => {
                push(Rule::TableShape, "decision nodes carry no table".to_string());
            }
            (None, _) => {
                push(Rule::TableShape, "missing table".to_string());
            }
            (Some(table), kind) => {
                if table.parent_order() != node.parents.as_slice() {
                    push(
                        Rule::ReferenceIntegrity,
                        "table parent order differs from node parents".to_string(),
                    );
                    return;
                }
                if !refs_ok {
                    return;
                }
                if table.parent_cards() != parent_cards.as_slice() {
                    push(Rule::TableShape, "table sized for different parent states".to_string());
                    return;
                }
                let expect_width =
                    if kind == NodeKind::Value { 1 } else { node.states.len() };
                for (i, row) in table.rows().iter().enumerate() {
                    if row.len() != expect_width {
                        push(
                            Rule::TableShape,
                            alloc::format!(
                                "row {i} has {} entries, expected {expect_width}",
                                row.len()
                            ),
                        );
                        return;
                    }
                    if kind == NodeKind::Value {
                        continue;
                    }
                    if row.iter().any(|&v| !(v >= 0.0)) {
                        push(Rule::NonNegativity, alloc::format!("row {i} has a negative entry"));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        push(Rule::RowSum, alloc::format!("row {i} sums to {sum}"));
                    }
                    if kind == NodeKind::Deterministic {
                        let ones = row.iter().filter(|&&v| v == 1.0).count();
                        let zeros = row.iter().filter(|&&v| v == 0.0).count();
                        if ones != 1 || ones + zeros != row.len() {
                            push(
                                Rule::UnitRow,
                                alloc::format!("row {i} is not a unit vector"),
                            );
                        }
                    }
                }
            }
        }
    }

    /// Extension records, kept sorted by scope and key.
    pub fn ext_records(&self) -> &[ExtRecord] {
        &self.ext
    }

    /// Attaches (or replaces) an extension record. `scope` is a node id, or
    /// `None` for the whole diagram. Values may not contain newlines so
    /// they survive the text format verbatim.
    pub fn set_ext(&mut self, scope: Option<&str>, key: &str, value: &str) -> Result<()> {
        let scope = match scope {
            None => ExtScope::Diagram,
            Some(id) => {
                self.require(id)?;
                ExtScope::Node(NodeId::from(id))
            }
        };
        if !valid_identifier(key) {
            return Err(Error::BadIdentifier(key.to_string()));
        }
        if value.contains('\n') || value.contains('\r') || value.is_empty() || value != value.trim()
        {
            return Err(Error::BadParams(
                "ext values must be non-empty single-line text without surrounding blanks".into(),
            ));
        }
        let record = ExtRecord { scope, key: key.to_string(), value: value.to_string() };
        match self
            .ext
            .binary_search_by(|r| (&r.scope, &r.key).cmp(&(&record.scope, &record.key)))
        {
            Ok(pos) => self.ext[pos] = record,
            Err(pos) => self.ext.insert(pos, record),
        }
        Ok(())
    }

    pub(crate) fn node_mut(&mut self, id: &str) -> Option<&mut Node> {
        self.nodes.get_mut(id)
    }

    pub(crate) fn insert_node(&mut self, mut node: Node) {
        node.order_index = self.next_order;
        self.next_order += 1;
        self.nodes.insert(node.id.clone(), node);
    }
}

/// One consistency violation: the offending node (if any), the broken rule
/// and a human-readable detail.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub rule: Rule,
    pub detail: String,
}

/// Consistency rules checked by [`Diagram::is_consistent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Identifier,
    Acyclicity,
    ReferenceIntegrity,
    StateLabels,
    TableShape,
    RowSum,
    NonNegativity,
    UnitRow,
    ValueLeaf,
    SingleValueNode,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Identifier => "identifier",
            Rule::Acyclicity => "acyclicity",
            Rule::ReferenceIntegrity => "reference-integrity",
            Rule::StateLabels => "state-labels",
            Rule::TableShape => "table-shape",
            Rule::RowSum => "row-sum",
            Rule::NonNegativity => "non-negativity",
            Rule::UnitRow => "unit-row",
            Rule::ValueLeaf => "value-leaf",
            Rule::SingleValueNode => "single-value-node",
        };
        f.write_str(s)
    }
}

/// Result of a consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Turns the report into an error carrying the first violation.
    pub fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => {
                let at = v.node.as_ref().map(|n| alloc::format!(" at `{n}`")).unwrap_or_default();
                Err(Error::Inconsistent(alloc::format!("{}{at}: {}", v.rule, v.detail)))
            }
        }
    }
}

/// Hard evidence: an observed state index per node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    observed: BTreeMap<NodeId, usize>,
}

impl Evidence {
    pub fn none() -> Self {
        Evidence::default()
    }

    /// Records `node = state` (by state label), validating against the
    /// diagram.
    pub fn observe(&mut self, d: &Diagram, node: &str, state: &str) -> Result<()> {
        let n = d.require(node)?;
        let idx = n
            .state_index(state)
            .ok_or_else(|| Error::UnknownState { node: n.id.clone(), label: state.to_string() })?;
        self.observe_index(d, node, idx)
    }

    /// Records `node = state` by state index.
    pub fn observe_index(&mut self, d: &Diagram, node: &str, index: usize) -> Result<()> {
        let n = d.require(node)?;
        if !n.kind.is_chance_like() {
            return Err(Error::NotChance(n.id.clone()));
        }
        if index >= n.states.len() {
            return Err(Error::UnknownState {
                node: n.id.clone(),
                label: alloc::format!("#{index}"),
            });
        }
        self.observed.insert(n.id.clone(), index);
        Ok(())
    }

    /// Convenience constructor for a single observation.
    pub fn single(d: &Diagram, node: &str, state: &str) -> Result<Self> {
        let mut ev = Evidence::none();
        ev.observe(d, node, state)?;
        Ok(ev)
    }

    pub fn get(&self, node: &str) -> Option<usize> {
        self.observed.get(node).copied()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.observed.contains_key(node)
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Observations in ascending node id order.
    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, usize)> {
        self.observed.iter().map(|(id, &s)| (id, s))
    }

    pub(crate) fn validate(&self, d: &Diagram) -> Result<()> {
        for (id, &state) in &self.observed {
            let n = d.require(id.as_str())?;
            if !n.kind.is_chance_like() {
                return Err(Error::NotChance(n.id.clone()));
            }
            if state >= n.states.len() {
                return Err(Error::UnknownState {
                    node: n.id.clone(),
                    label: alloc::format!("#{state}"),
                });
            }
        }
        Ok(())
    }
}

/// Normalized per-node posteriors, the common output of every inference
/// algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    posteriors: BTreeMap<NodeId, Vec<f64>>,
    evidence_probability: Option<f64>,
}

impl Beliefs {
    pub(crate) fn new(
        posteriors: BTreeMap<NodeId, Vec<f64>>,
        evidence_probability: Option<f64>,
    ) -> Self {
        let evidence_probability = evidence_probability.map(|p| p.clamp(0.0, 1.0));
        Beliefs { posteriors, evidence_probability }
    }

    pub fn get(&self, node: &str) -> Option<&[f64]> {
        self.posteriors.get(node).map(Vec::as_slice)
    }

    /// Probability of the declared evidence, when the algorithm computes it.
    pub fn evidence_probability(&self) -> Option<f64> {
        self.evidence_probability
    }

    pub fn len(&self) -> usize {
        self.posteriors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posteriors.is_empty()
    }

    /// Posteriors in ascending node id order.
    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &[f64])> {
        self.posteriors.iter().map(|(id, v)| (id, v.as_slice()))
    }

    /// Largest absolute difference over the nodes present in both belief
    /// sets.
    pub fn linf(&self, other: &Beliefs) -> f64 {
        let mut worst = 0.0f64;
        for (id, mine) in &self.posteriors {
            if let Some(theirs) = other.posteriors.get(id) {
                for (a, b) in mine.iter().zip(theirs.iter()) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }
}

/// Description of one node for [`build_diagram`] and
/// [`crate::editing::add_node`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    pub states: Vec<String>,
    pub parents: Vec<String>,
    /// Probability/utility rows in row-major parent order; `None` for
    /// decision nodes.
    pub rows: Option<Vec<Vec<f64>>>,
}

impl NodeSpec {
    pub fn chance(id: &str, states: &[&str], parents: &[&str], rows: Vec<Vec<f64>>) -> Self {
        NodeSpec {
            id: id.to_string(),
            kind: NodeKind::Chance,
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            rows: Some(rows),
        }
    }

    pub fn deterministic(
        id: &str,
        states: &[&str],
        parents: &[&str],
        rows: Vec<Vec<f64>>,
    ) -> Self {
        NodeSpec { kind: NodeKind::Deterministic, ..NodeSpec::chance(id, states, parents, rows) }
    }

    pub fn decision(id: &str, states: &[&str], parents: &[&str]) -> Self {
        NodeSpec {
            id: id.to_string(),
            kind: NodeKind::Decision,
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            rows: None,
        }
    }

    /// Value node: one utility per parent configuration, row-major.
    pub fn value(id: &str, parents: &[&str], utilities: Vec<f64>) -> Self {
        NodeSpec {
            id: id.to_string(),
            kind: NodeKind::Value,
            states: Vec::new(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            rows: Some(utilities.into_iter().map(|u| vec![u]).collect()),
        }
    }
}

/// Builds a diagram from fully specified node descriptions.
///
/// Node specs may reference each other in any order. The result always
/// passes [`Diagram::is_consistent`]; otherwise the first violation is
/// returned as an error. Decision-node parents are stored in ascending id
/// order (information sets carry no table layout).
pub fn build_diagram(name: &str, specs: &[NodeSpec]) -> Result<Diagram> {
    if !valid_identifier(name) {
        return Err(Error::BadIdentifier(name.to_string()));
    }
    let mut cards: BTreeMap<&str, usize> = BTreeMap::new();
    for spec in specs {
        if !valid_identifier(&spec.id) {
            return Err(Error::BadIdentifier(spec.id.clone()));
        }
        let card = if spec.kind == NodeKind::Value { 1 } else { spec.states.len() };
        if cards.insert(&spec.id, card).is_some() {
            return Err(Error::DuplicateId(NodeId::from(spec.id.as_str())));
        }
    }
    let mut diagram = Diagram {
        name: name.to_string(),
        nodes: BTreeMap::new(),
        ext: Vec::new(),
        next_order: 0,
    };
    for spec in specs {
        let node = node_from_spec(spec, &cards)?;
        diagram.insert_node(node);
    }
    diagram.graph_order()?;
    diagram.is_consistent().into_result()?;
    Ok(diagram)
}

/// Validates one spec against the id/cardinality environment and produces a
/// node. Shared with the editing module.
pub(crate) fn node_from_spec(spec: &NodeSpec, cards: &BTreeMap<&str, usize>) -> Result<Node> {
    let id = NodeId::from(spec.id.as_str());
    if !valid_identifier(&spec.id) {
        return Err(Error::BadIdentifier(spec.id.clone()));
    }
    let mut seen = BTreeSet::new();
    for label in &spec.states {
        if !valid_identifier(label) {
            return Err(Error::BadIdentifier(label.clone()));
        }
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateState { node: id.clone(), label: label.clone() });
        }
    }
    if spec.kind == NodeKind::Value {
        if !spec.states.is_empty() {
            return Err(Error::ShapeMismatch {
                node: id,
                detail: "value nodes carry no states".to_string(),
            });
        }
    } else if spec.states.is_empty() {
        return Err(Error::ShapeMismatch { node: id, detail: "node has no states".to_string() });
    }
    let mut parents = Vec::with_capacity(spec.parents.len());
    let mut parent_cards = Vec::with_capacity(spec.parents.len());
    for parent in &spec.parents {
        if parent == &spec.id {
            return Err(Error::CycleDetected);
        }
        let card = *cards
            .get(parent.as_str())
            .ok_or_else(|| Error::UnknownParent {
                node: id.clone(),
                parent: NodeId::from(parent.as_str()),
            })?;
        if parents.contains(&NodeId::from(parent.as_str())) {
            return Err(Error::ShapeMismatch {
                node: id.clone(),
                detail: alloc::format!("duplicate parent `{parent}`"),
            });
        }
        parents.push(NodeId::from(parent.as_str()));
        parent_cards.push(card);
    }
    if spec.kind == NodeKind::Decision {
        parents.sort();
        if spec.rows.is_some() {
            return Err(Error::ShapeMismatch {
                node: id,
                detail: "decision nodes carry no table".to_string(),
            });
        }
        return Ok(Node {
            id,
            kind: spec.kind,
            states: spec.states.clone(),
            parents,
            table: None,
            order_index: 0,
        });
    }
    let rows = spec.rows.as_ref().ok_or_else(|| Error::ShapeMismatch {
        node: id.clone(),
        detail: "missing table".to_string(),
    })?;
    let expect_rows = state_space(&parent_cards);
    let expect_width = if spec.kind == NodeKind::Value { 1 } else { spec.states.len() };
    if rows.len() != expect_rows {
        return Err(Error::ShapeMismatch {
            node: id,
            detail: alloc::format!("{} rows, expected {expect_rows}", rows.len()),
        });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != expect_width {
            return Err(Error::ShapeMismatch {
                node: id.clone(),
                detail: alloc::format!("row {i} has {} entries, expected {expect_width}", row.len()),
            });
        }
        if spec.kind == NodeKind::Value {
            continue;
        }
        if row.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::NegativeEntry { node: id.clone(), row: i });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::RowSumViolation { node: id.clone(), row: i, sum });
        }
        if spec.kind == NodeKind::Deterministic {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::ShapeMismatch {
                    node: id.clone(),
                    detail: alloc::format!("row {i} is not a unit vector"),
                });
            }
        }
    }
    let table = ConditionalTable::new(parents.clone(), parent_cards, rows.clone());
    Ok(Node {
        id,
        kind: spec.kind,
        states: spec.states.clone(),
        parents,
        table: Some(table),
        order_index: 0,
    })
}

/// Identifiers (node ids, state labels, diagram names, ext keys) are
/// non-empty ASCII words over `[A-Za-z0-9._+-]`; this keeps the text
/// format unambiguous.
pub fn valid_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '+' | '-'))
}

/// Product of the cardinalities: the number of parent configurations.
pub(crate) fn state_space(cards: &[usize]) -> usize {
    cards.iter().product()
}

/// Row-major index of a configuration, first entry most significant.
pub(crate) fn config_index(config: &[usize], cards: &[usize]) -> usize {
    debug_assert_eq!(config.len(), cards.len());
    let mut idx = 0;
    for (&s, &c) in config.iter().zip(cards.iter()) {
        debug_assert!(s < c);
        idx = idx * c + s;
    }
    idx
}

/// Advances a configuration odometer in row-major order; returns `false`
/// after the last configuration wraps back to all zeros.
pub(crate) fn advance_config(config: &mut [usize], cards: &[usize]) -> bool {
    for i in (0..config.len()).rev() {
        config[i] += 1;
        if config[i] < cards[i] {
            return true;
        }
        config[i] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;

    fn decorate(rule_breaker: impl FnOnce(&mut Diagram)) -> ConsistencyReport {
        let mut d = fixture("FIX-CHAIN").unwrap();
        rule_breaker(&mut d);
        d.is_consistent()
    }

    #[test]
    fn chain_fixture_is_consistent() {
        let d = fixture("FIX-CHAIN").unwrap();
        assert!(d.is_consistent().ok());
        assert!(d.is_acyclic());
        assert!(d.is_belief_net());
        assert!(d.is_strictly_positive());
    }

    #[test]
    fn single_boundary_prior_is_consistent() {
        let d = build_diagram(
            "one",
            &[NodeSpec::chance("A", &["t", "f"], &[], vec![vec![1.0, 0.0]])],
        )
        .unwrap();
        assert!(d.is_consistent().ok());
        assert!(!d.is_strictly_positive());
    }

    #[test]
    fn cycle_is_rejected() {
        let err = build_diagram(
            "loop",
            &[
                NodeSpec::chance("A", &["t", "f"], &["B"], vec![vec![0.5, 0.5]; 2]),
                NodeSpec::chance("B", &["t", "f"], &["A"], vec![vec![0.5, 0.5]; 2]),
            ],
        )
        .unwrap_err();
        assert_eq!(err, Error::CycleDetected);
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let err = build_diagram(
            "dup",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
                NodeSpec::chance("A", &["x", "y"], &[], vec![vec![0.5, 0.5]]),
            ],
        )
        .unwrap_err();
        assert_eq!(err, Error::DuplicateId(NodeId::from("A")));
    }

    #[test]
    fn row_sum_violation_is_reported() {
        let report = decorate(|d| {
            let table = d.node_mut("B").unwrap().table.as_mut().unwrap();
            table.rows_mut()[0] = vec![0.8, 0.3];
        });
        assert!(!report.ok());
        assert!(report.violations.iter().any(|v| v.rule == Rule::RowSum));
    }

    #[test]
    fn value_node_with_child_is_reported() {
        let d = build_diagram(
            "bad-value",
            &[
                NodeSpec::value("V", &[], vec![1.0]),
                NodeSpec::chance("A", &["t", "f"], &["V"], vec![vec![0.5, 0.5]]),
            ],
        );
        assert!(matches!(d, Err(Error::Inconsistent(_)) | Err(Error::ValueNodeChild(_))));
    }

    #[test]
    fn graph_order_uses_id_tie_break() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let order: Vec<NodeId> = d.graph_order().unwrap();
        let order: Vec<&str> = order.iter().map(|n| n.as_str()).collect();
        assert_eq!(order, ["A", "B", "C", "D"]);

        let two = build_diagram(
            "pair",
            &[
                NodeSpec::chance("Y", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
                NodeSpec::chance("X", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
            ],
        )
        .unwrap();
        let order: Vec<NodeId> = two.graph_order().unwrap();
        let order: Vec<&str> = order.iter().map(|n| n.as_str()).collect();
        assert_eq!(order, ["X", "Y"]);
    }

    #[test]
    fn make_strictly_positive_mixes_rows() {
        let d = build_diagram(
            "one",
            &[NodeSpec::chance("A", &["t", "f"], &[], vec![vec![1.0, 0.0]])],
        )
        .unwrap();
        let fixed = d.make_strictly_positive(0.01).unwrap();
        let row = &fixed.node("A").unwrap().table().unwrap().rows()[0];
        assert!((row[0] - 0.995).abs() < 1e-15);
        assert!((row[1] - 0.005).abs() < 1e-15);
        assert!(fixed.is_strictly_positive());

        let zero = fixture("FIX-ZERO").unwrap();
        assert!(!zero.is_strictly_positive());
        assert!(zero.make_strictly_positive(0.01).unwrap().is_strictly_positive());
        assert_eq!(zero.make_strictly_positive(0.0).unwrap(), zero);
        assert!(zero.make_strictly_positive(1.0).is_err());
    }

    #[test]
    fn strictly_positive_perturbation_keeps_row_sums() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let fixed = d.make_strictly_positive(0.25).unwrap();
        for node in fixed.nodes() {
            for (i, row) in node.table().unwrap().rows().iter().enumerate() {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "row {i} of {} sums to {sum}", node.id());
                let before = d.node(node.id().as_str()).unwrap().table().unwrap().rows()[i].clone();
                for (a, b) in row.iter().zip(before.iter()) {
                    assert!((a - b).abs() <= 0.25 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn evidence_validates_nodes_and_states() {
        let d = fixture("FIX-CHAIN").unwrap();
        let mut ev = Evidence::none();
        ev.observe(&d, "B", "t").unwrap();
        assert_eq!(ev.get("B"), Some(0));
        assert!(ev.observe(&d, "B", "maybe").is_err());
        assert!(ev.observe(&d, "Z", "t").is_err());

        let id = fixture("FIX-ID").unwrap();
        let mut ev = Evidence::none();
        assert_eq!(ev.observe(&id, "D", "take"), Err(Error::NotChance(NodeId::from("D"))));
    }

    #[test]
    fn config_indexing_round_trips() {
        let cards = [2usize, 3, 2];
        let mut cfg = vec![0usize; 3];
        let mut seen = Vec::new();
        loop {
            assert_eq!(config_index(&cfg, &cards), seen.len());
            seen.push(cfg.clone());
            if !advance_config(&mut cfg, &cards) {
                break;
            }
        }
        assert_eq!(seen.len(), 12);
        assert_eq!(seen[0], [0, 0, 0]);
        assert_eq!(seen[1], [0, 0, 1]);
        assert_eq!(seen[2], [0, 1, 0]);
        assert_eq!(seen[11], [1, 2, 1]);
    }

    #[test]
    fn table_slice_and_average() {
        let d = fixture("FIX-CHAIN").unwrap();
        let table = d.node("B").unwrap().table().unwrap();
        let sliced = table.slice_parent(0, 0);
        assert_eq!(sliced.rows(), &[vec![0.8, 0.2]]);
        let averaged = table.average_parent(0);
        assert!((averaged.rows()[0][0] - 0.45).abs() < 1e-15);
        assert!((averaged.rows()[0][1] - 0.55).abs() < 1e-15);
        let wider = table.replicate_new_parent(NodeId::from("C"), 3);
        assert_eq!(wider.row_count(), 6);
        assert_eq!(wider.row(&[1, 2]), &[0.1, 0.9]);
    }

    #[test]
    fn ext_records_are_sorted_and_replaced() {
        let mut d = fixture("FIX-CHAIN").unwrap();
        d.set_ext(Some("B"), "layout.x", "10").unwrap();
        d.set_ext(None, "author", "someone").unwrap();
        d.set_ext(Some("B"), "layout.x", "12").unwrap();
        assert_eq!(d.ext_records().len(), 2);
        assert_eq!(d.ext_records()[0].scope, ExtScope::Diagram);
        assert_eq!(d.ext_records()[1].value, "12");
        assert!(d.set_ext(Some("Z"), "k", "v").is_err());
        assert!(d.set_ext(None, "bad key", "v").is_err());
    }
}
