//! Error type shared by all diagram operations and algorithms.

use alloc::string::String;

use crate::model::NodeId;

/// Errors produced by diagram construction, editing, transformation and
/// inference.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("node id `{0}` already exists")]
    DuplicateId(NodeId),
    #[error("node `{node}` declares state `{label}` more than once")]
    DuplicateState { node: NodeId, label: String },
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("node `{node}` references unknown parent `{parent}`")]
    UnknownParent { node: NodeId, parent: NodeId },
    #[error("node `{node}` has no state labelled `{label}`")]
    UnknownState { node: NodeId, label: String },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("identifier `{0}` is empty or contains characters outside [A-Za-z0-9._+-]")]
    BadIdentifier(String),
    #[error("the arc relation contains a cycle")]
    CycleDetected,
    #[error("reversing arc {from} -> {to} would create a cycle")]
    WouldCreateCycle { from: NodeId, to: NodeId },
    #[error("arc {parent} -> {child} already exists")]
    ArcExists { parent: NodeId, child: NodeId },
    #[error("no arc {parent} -> {child}")]
    NoSuchArc { parent: NodeId, child: NodeId },
    #[error("node `{0}` has children; pass cascade to delete it")]
    HasChildren(NodeId),
    #[error("cannot delete the last state of node `{0}`")]
    LastState(NodeId),
    #[error("row {row} of node `{node}` sums to {sum}, expected 1")]
    RowSumViolation { node: NodeId, row: usize, sum: f64 },
    #[error("row {row} of node `{node}` contains a negative entry")]
    NegativeEntry { node: NodeId, row: usize },
    #[error("table of node `{node}` has the wrong shape: {detail}")]
    ShapeMismatch { node: NodeId, detail: String },
    #[error("value node `{0}` may not have children")]
    ValueNodeChild(NodeId),
    #[error("node `{0}` is not a chance node")]
    NotChance(NodeId),
    #[error("node `{0}` is not barren (it has children)")]
    NotBarren(NodeId),
    #[error("node `{0}` is not deterministic")]
    NotDeterministic(NodeId),
    #[error("diagram is not a belief network (it contains decision or value nodes)")]
    NotBeliefNet,
    #[error("diagram is not a polytree (its undirected skeleton has a cycle)")]
    NotPolytree,
    #[error("distribution is not strictly positive")]
    NotStrictlyPositive,
    #[error("diagram has no value node")]
    NoValueNode,
    #[error("diagram has more than one value node")]
    MultipleValueNodes,
    #[error("decision `{later}` does not observe earlier decision `{earlier}` and its information")]
    NotNoForgetting { earlier: NodeId, later: NodeId },
    #[error("decision nodes cannot be totally ordered by information precedence")]
    DecisionsUnordered,
    #[error("the declared evidence has probability zero")]
    ImpossibleEvidence,
    #[error("epsilon {0} is outside [0, 1)")]
    BadEpsilon(f64),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("joint state space has {states} states, over the {limit} limit")]
    TooLarge { states: u128, limit: u128 },
    #[error("diagram is inconsistent: {0}")]
    Inconsistent(String),
}

/// Shorthand used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
