//! Small named diagrams used throughout the test suites and handy for
//! experiments.

use alloc::vec;

use crate::error::{Error, Result};
use crate::model::{build_diagram, Diagram, NodeSpec};

/// Returns one of the built-in fixtures:
///
/// - `FIX-CHAIN`: binary chain `A -> B`.
/// - `FIX-DIAMOND`: binary diamond `A -> {B, C} -> D` (multiply connected).
/// - `FIX-ZERO`: chain with a deterministic-looking zero entry, so some
///   evidence configurations are impossible.
/// - `FIX-ID`: weather/umbrella influence diagram without an information
///   arc.
/// - `FIX-ID-INFO`: same with the information arc `W -> D`.
pub fn fixture(name: &str) -> Result<Diagram> {
    match name {
        "FIX-CHAIN" => build_diagram(
            "fix-chain",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.3, 0.7]]),
                NodeSpec::chance(
                    "B",
                    &["t", "f"],
                    &["A"],
                    vec![vec![0.8, 0.2], vec![0.1, 0.9]],
                ),
            ],
        ),
        "FIX-DIAMOND" => build_diagram(
            "fix-diamond",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
                NodeSpec::chance(
                    "B",
                    &["t", "f"],
                    &["A"],
                    vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                ),
                NodeSpec::chance(
                    "C",
                    &["t", "f"],
                    &["A"],
                    vec![vec![0.7, 0.3], vec![0.1, 0.9]],
                ),
                NodeSpec::chance(
                    "D",
                    &["t", "f"],
                    &["B", "C"],
                    vec![
                        vec![0.99, 0.01],
                        vec![0.8, 0.2],
                        vec![0.6, 0.4],
                        vec![0.05, 0.95],
                    ],
                ),
            ],
        ),
        "FIX-ZERO" => build_diagram(
            "fix-zero",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.5, 0.5]]),
                NodeSpec::chance(
                    "B",
                    &["t", "f"],
                    &["A"],
                    vec![vec![1.0, 0.0], vec![0.4, 0.6]],
                ),
            ],
        ),
        "FIX-ID" => build_diagram("fix-id", &influence_specs(false)),
        "FIX-ID-INFO" => build_diagram("fix-id-info", &influence_specs(true)),
        other => Err(Error::UnknownFixture(other.into())),
    }
}

fn influence_specs(information_arc: bool) -> [NodeSpec; 3] {
    let d_parents: &[&str] = if information_arc { &["W"] } else { &[] };
    [
        NodeSpec::chance("W", &["rain", "sun"], &[], vec![vec![0.4, 0.6]]),
        NodeSpec::decision("D", &["take", "leave"], d_parents),
        NodeSpec::value("V", &["W", "D"], vec![70.0, 0.0, 80.0, 100.0]),
    ]
}
