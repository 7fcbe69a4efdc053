//! Belief-network and influence-diagram engine.
//!
//! The crate provides the diagram data model with consistency checking and
//! editing, joint-preserving transformations (arc reversal, barren-node
//! removal, absorption, deterministic reduction), four families of
//! inference and evaluation algorithms behind one evidence/beliefs
//! interface, and runtime estimator functions with instrumented step
//! counters.
//!
//! The crate is `no_std` (with `alloc`); file formats and the command-line
//! front end live in the companion `beliefcli` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod clustering;
pub mod conditioning;
pub mod editing;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod generate;
pub mod model;
pub mod oracle;
pub mod polytree;
pub mod reduction;
mod rng;
pub mod simulation;
pub mod transforms;

pub use error::{Error, Result};
pub use model::{
    build_diagram, Beliefs, ConditionalTable, ConsistencyReport, Diagram, Evidence, ExtRecord,
    ExtScope, Node, NodeId, NodeKind, NodeSpec,
};

use simulation::SimParams;

/// Algorithm selector for [`infer`], the uniform front door to every
/// whole-network inference algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// Pearl's message passing; requires a singly connected network.
    Polytree,
    /// Cutset conditioning with explicit mixing weights.
    ConditioningWeighted,
    /// Cutset conditioning accumulating joint-scaled beliefs.
    ConditioningJoint,
    /// Join-tree propagation on clique potentials.
    ClusteringJensen,
    /// Join tree treated as a meta network run under message passing.
    ClusteringMeta,
    /// Gibbs sampling; requires a strictly positive distribution.
    Gibbs(SimParams),
    /// Brute-force joint enumeration (exponential; small nets only).
    Oracle,
}

/// Runs the selected algorithm on a belief network and returns the updated
/// beliefs of every node.
///
/// All exact algorithms return identical posteriors, so callers can choose
/// by structure and cost alone. Query-style reduction inference lives in
/// [`reduction::reduction_query`] since it targets a single node.
pub fn infer(d: &Diagram, evidence: &Evidence, algorithm: Algorithm) -> Result<Beliefs> {
    match algorithm {
        Algorithm::Polytree => polytree::polytree_infer(d, evidence),
        Algorithm::ConditioningWeighted => {
            conditioning::conditioning_infer_weighted(d, evidence).map(|(b, _)| b)
        }
        Algorithm::ConditioningJoint => conditioning::conditioning_infer_joint(d, evidence),
        Algorithm::ClusteringJensen => {
            let jt = clustering::build_join_tree(d, clustering::TriangulationMethod::MinFill)?;
            clustering::jt_infer_jensen(&jt, evidence)
        }
        Algorithm::ClusteringMeta => {
            let jt = clustering::build_join_tree(d, clustering::TriangulationMethod::MinFill)?;
            clustering::jt_infer_meta(&jt, evidence)
        }
        Algorithm::Gibbs(params) => simulation::gibbs_infer(d, evidence, &params),
        Algorithm::Oracle => oracle::joint_enumeration_oracle(d, evidence),
    }
}
