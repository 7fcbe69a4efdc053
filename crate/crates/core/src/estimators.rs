//! Polynomial-time runtime estimators and the step counters they predict.
//!
//! The complexity unit is one table cell visited during a pass that spans
//! a state space: setting the distribution of a binary node with one
//! binary parent costs 4, normalizing its belief vector costs 4 (a sum
//! pass plus a divide pass). The clustering propagation is organized in
//! exactly the passes these formulas assume, so the initialization
//! estimate is an identity and the update estimate is exact up to the
//! separately counted evidence-declaration passes.

use alloc::vec::Vec;

use crate::clustering::JoinTreeStructure;
use crate::model::Evidence;

/// Counter of table cells visited in state-space-spanning passes.
///
/// Evidence-declaration passes are tracked apart from the rest because the
/// update estimator deliberately leaves them out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounter {
    update_steps: u64,
    evidence_steps: u64,
}

impl StepCounter {
    pub fn new() -> Self {
        StepCounter::default()
    }

    /// One pass over a universe's joint state space (setup, absorb, or
    /// sepset update).
    pub fn universe_pass(&mut self, state_space: u64) {
        self.update_steps += state_space;
    }

    /// Marginalizing a node's belief vector out of its home universe; the
    /// vector's sum is accumulated in the same pass.
    pub fn marginalize_pass(&mut self, state_space: u64) {
        self.update_steps += state_space;
    }

    /// The divide half of a normalization whose sum rode along with the
    /// preceding marginalization.
    pub fn divide_pass(&mut self, states: u64) {
        self.update_steps += states;
    }

    /// A standalone normalization: one sum pass plus one divide pass.
    pub fn normalize_vector(&mut self, states: u64) {
        self.update_steps += 2 * states;
    }

    /// Setting a node's distribution: one pass over its table cells
    /// (child states times parent configurations).
    pub fn set_distribution(&mut self, table_cells: u64) {
        self.update_steps += table_cells;
    }

    /// Declaring one piece of evidence: a pass over the observed node's
    /// home universe.
    pub fn evidence_pass(&mut self, state_space: u64) {
        self.evidence_steps += state_space;
    }

    /// Steps excluding evidence declaration.
    pub fn update_steps(&self) -> u64 {
        self.update_steps
    }

    pub fn evidence_steps(&self) -> u64 {
        self.evidence_steps
    }

    pub fn total(&self) -> u64 {
        self.update_steps + self.evidence_steps
    }
}

/// Estimated cost of initializing the join tree:
/// the sum over universes of `(3 + N(U)) * S(U)`
/// (one setup pass, two collect passes, N(U) distribute passes).
///
/// Runs in time linear in the number of universes and never touches a
/// potential.
pub fn estimate_jensen_init(structure: &JoinTreeStructure) -> u64 {
    structure
        .universes
        .iter()
        .map(|u| (3 + u.neighbor_count as u64) * u.state_space)
        .sum()
}

/// Estimated cost of one update:
/// the sum over universes of `(2 + N(U)) * S(U)`, plus `S(U_i) + S(i)`
/// for every net node `i`, where `U_i` is the smallest universe containing
/// `i` (marginalization plus the divide pass of normalization).
///
/// The evidence argument is accepted for interface symmetry; the formula
/// deliberately ignores both the position of evidence in the tree and the
/// cost of declaring it, which the instrumented count carries as separate
/// slack.
pub fn estimate_jensen_update(structure: &JoinTreeStructure, _evidence: &Evidence) -> u64 {
    let propagation: u64 = structure
        .universes
        .iter()
        .map(|u| (2 + u.neighbor_count as u64) * u.state_space)
        .sum();
    let beliefs: u64 = structure
        .member_home
        .iter()
        .map(|(id, &u)| {
            structure.universes[u].state_space + structure.node_cards[id.as_str()] as u64
        })
        .sum();
    propagation + beliefs
}

/// The evidence-declaration slack: one home-universe pass per observation,
/// the exact amount by which the instrumented update may exceed the
/// estimate.
pub fn evidence_declaration_cost(structure: &JoinTreeStructure, evidence: &Evidence) -> u64 {
    evidence
        .iter()
        .map(|(id, _)| structure.universes[structure.member_home[id.as_str()]].state_space)
        .sum()
}

/// One row of the unit-step reference table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitStep {
    pub operation: &'static str,
    pub steps: u64,
}

/// The counting rules as a checked reference table, produced by actually
/// running a counter over the canonical examples.
pub fn unit_step_accounting() -> Vec<UnitStep> {
    let mut table = Vec::new();

    let mut counter = StepCounter::new();
    counter.set_distribution(2 * 2);
    table.push(UnitStep {
        operation: "set-distribution(binary node, one binary parent)",
        steps: counter.total(),
    });

    let mut counter = StepCounter::new();
    counter.normalize_vector(2);
    table.push(UnitStep {
        operation: "normalize(binary belief vector)",
        steps: counter.total(),
    });

    let mut counter = StepCounter::new();
    counter.set_distribution(3 * 2 * 2);
    table.push(UnitStep {
        operation: "set-distribution(3-state node, two binary parents)",
        steps: counter.total(),
    });

    table
}

/// Estimates and instrumented counts for one inference problem. The wall
/// time is filled in by measurement harnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimateReport {
    pub init_estimate: u64,
    pub update_estimate: u64,
    pub instrumented_init: u64,
    pub instrumented_update: u64,
    pub evidence_declaration_cost: u64,
    pub wall_time: core::time::Duration,
}
