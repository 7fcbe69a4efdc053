//! The beliefcore text format: a line-oriented, platform-independent
//! serialization of diagrams.
//!
//! ```text
//! %beliefcore 1
//! diagram fix-chain
//! node A kind=chance states=t,f
//! node B kind=chance states=t,f
//! arc A -> B
//! cpt A | : 0.3 0.7
//! cpt B | A=t : 0.8 0.2
//! cpt B | A=f : 0.1 0.9
//! ext * author someone
//! ```
//!
//! Saving is canonical: nodes in graph order, arcs sorted by child then
//! parent, rows in row-major parent-index order, numbers in their shortest
//! round-trip decimal form, LF newlines. Loading the saved text
//! reconstructs the diagram field by field, and re-saving is
//! byte-identical. Lines whose first non-blank character is `#` and blank
//! lines are ignored; `ext` values run verbatim to the end of the line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use beliefcore::model::{
    build_diagram, Diagram, ExtScope, NodeKind, NodeSpec, ROW_SUM_TOLERANCE,
};

/// Format version accepted and emitted.
pub const FORMAT_VERSION: u32 = 1;

/// Errors from [`load`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse { line: usize, column: usize, reason: String },
    #[error("unsupported format version `{found}` (this build reads version 1)")]
    VersionUnsupported { found: String },
    #[error(transparent)]
    Model(#[from] beliefcore::Error),
}

impl FormatError {
    fn at(line: usize, column: usize, reason: impl Into<String>) -> Self {
        FormatError::Parse { line, column, reason: reason.into() }
    }
}

/// Loader options.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Renormalize probability rows whose sum is within 1e-6 of 1 instead
    /// of rejecting them (text round-trips from other tools drift).
    pub renormalize: bool,
}

/// Renormalization acceptance window with [`LoadOptions::renormalize`].
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Serializes a consistent diagram into the canonical text form.
pub fn save(d: &Diagram) -> Result<String, beliefcore::Error> {
    d.is_consistent().into_result()?;
    let order = d.graph_order()?;
    let mut out = String::new();
    let _ = writeln!(out, "%beliefcore {FORMAT_VERSION}");
    let _ = writeln!(out, "diagram {}", d.name());

    for id in &order {
        let node = d.node(id.as_str()).expect("listed node");
        if node.states().is_empty() {
            let _ = writeln!(out, "node {} kind={}", node.id(), node.kind());
        } else {
            let _ = writeln!(
                out,
                "node {} kind={} states={}",
                node.id(),
                node.kind(),
                node.states().join(",")
            );
        }
    }

    let mut arcs: Vec<(&str, &str)> = d
        .nodes()
        .flat_map(|n| n.parents().iter().map(move |p| (n.id().as_str(), p.as_str())))
        .collect();
    arcs.sort_unstable();
    for (child, parent) in arcs {
        let _ = writeln!(out, "arc {parent} -> {child}");
    }

    for id in &order {
        let node = d.node(id.as_str()).expect("listed node");
        let Some(table) = node.table() else { continue };
        let keyword = if node.kind() == NodeKind::Value { "val" } else { "cpt" };
        let parent_states: Vec<&[String]> = table
            .parent_order()
            .iter()
            .map(|p| d.node(p.as_str()).expect("parent").states())
            .collect();
        let mut cfg = vec![0usize; table.parent_order().len()];
        for row in table.rows() {
            let assignments: Vec<String> = table
                .parent_order()
                .iter()
                .zip(cfg.iter())
                .zip(parent_states.iter())
                .map(|((p, &s), states)| format!("{p}={}", states[s]))
                .collect();
            let values: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(
                out,
                "{keyword} {} | {} : {}",
                node.id(),
                assignments.join(","),
                values.join(" ")
            );
            advance(&mut cfg, &parent_states);
        }
    }

    for record in d.ext_records() {
        let scope = match &record.scope {
            ExtScope::Diagram => "*",
            ExtScope::Node(id) => id.as_str(),
        };
        let _ = writeln!(out, "ext {scope} {} {}", record.key, record.value);
    }
    Ok(out)
}

fn advance(cfg: &mut [usize], parent_states: &[&[String]]) -> bool {
    for i in (0..cfg.len()).rev() {
        cfg[i] += 1;
        if cfg[i] < parent_states[i].len() {
            return true;
        }
        cfg[i] = 0;
    }
    false
}

/// Parses the text format with default options.
pub fn load(text: &str) -> Result<Diagram, FormatError> {
    load_with(text, LoadOptions::default())
}

struct PendingNode {
    kind: NodeKind,
    states: Vec<String>,
    arc_parents: Vec<String>,
    cpt_parents: Option<Vec<String>>,
    rows: BTreeMap<usize, Vec<f64>>,
    declared_at: usize,
}

/// Parses the text format.
pub fn load_with(text: &str, options: LoadOptions) -> Result<Diagram, FormatError> {
    let mut name: Option<String> = None;
    let mut nodes: BTreeMap<String, PendingNode> = BTreeMap::new();
    let mut node_order: Vec<String> = Vec::new();
    let mut exts: Vec<(String, String, String)> = Vec::new();
    let mut version_seen = false;

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.trim_end_matches('\r');
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !version_seen {
            let Some(version) = trimmed.strip_prefix("%beliefcore") else {
                return Err(FormatError::at(line_no, 1, "expected `%beliefcore 1` header"));
            };
            let version = version.trim();
            if version != "1" {
                return Err(FormatError::VersionUnsupported { found: version.to_string() });
            }
            version_seen = true;
            continue;
        }
        let (keyword, rest) = split_word(trimmed);
        match keyword {
            "diagram" => {
                let value = rest.trim();
                if value.is_empty() || value.split_whitespace().count() != 1 {
                    return Err(FormatError::at(line_no, 9, "expected one diagram name"));
                }
                if name.replace(value.to_string()).is_some() {
                    return Err(FormatError::at(line_no, 1, "duplicate `diagram` line"));
                }
            }
            "node" => {
                let mut words = rest.split_whitespace();
                let id = words
                    .next()
                    .ok_or_else(|| FormatError::at(line_no, 6, "missing node id"))?;
                let mut kind: Option<NodeKind> = None;
                let mut states: Vec<String> = Vec::new();
                for word in words {
                    if let Some(value) = word.strip_prefix("kind=") {
                        kind = Some(value.parse().map_err(|()| {
                            FormatError::at(line_no, 1, format!("unknown kind `{value}`"))
                        })?);
                    } else if let Some(value) = word.strip_prefix("states=") {
                        states =
                            value.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
                    } else {
                        return Err(FormatError::at(
                            line_no,
                            1,
                            format!("unexpected token `{word}` on node line"),
                        ));
                    }
                }
                let kind = kind
                    .ok_or_else(|| FormatError::at(line_no, 1, "node line lacks kind="))?;
                let pending = PendingNode {
                    kind,
                    states,
                    arc_parents: Vec::new(),
                    cpt_parents: None,
                    rows: BTreeMap::new(),
                    declared_at: line_no,
                };
                if nodes.insert(id.to_string(), pending).is_some() {
                    return Err(FormatError::at(line_no, 6, format!("duplicate node `{id}`")));
                }
                node_order.push(id.to_string());
            }
            "arc" => {
                let words: Vec<&str> = rest.split_whitespace().collect();
                if words.len() != 3 || words[1] != "->" {
                    return Err(FormatError::at(line_no, 5, "expected `arc PARENT -> CHILD`"));
                }
                let (parent, child) = (words[0], words[2]);
                if !nodes.contains_key(parent) {
                    return Err(FormatError::at(line_no, 5, format!("unknown node `{parent}`")));
                }
                let entry = nodes.get_mut(child).ok_or_else(|| {
                    FormatError::at(line_no, 5, format!("unknown node `{child}`"))
                })?;
                entry.arc_parents.push(parent.to_string());
            }
            "cpt" | "val" => {
                parse_table_row(keyword, rest, line_no, &mut nodes)?;
            }
            "ext" => {
                let (scope, rest) = split_word(rest.trim_start());
                let (key, value) = split_word(rest.trim_start());
                if scope.is_empty() || key.is_empty() || value.trim().is_empty() {
                    return Err(FormatError::at(line_no, 5, "expected `ext SCOPE KEY VALUE`"));
                }
                exts.push((scope.to_string(), key.to_string(), value.to_string()));
            }
            other => {
                return Err(FormatError::at(
                    line_no,
                    1,
                    format!("unknown directive `{other}`"),
                ));
            }
        }
    }

    if !version_seen {
        return Err(FormatError::at(text.lines().count() + 1, 1, "missing `%beliefcore` header"));
    }
    let name = name.ok_or_else(|| {
        FormatError::at(text.lines().count() + 1, 1, "missing `diagram` line")
    })?;

    // Assemble node specs: table parent order comes from the cpt lines and
    // must use exactly the declared arcs.
    let mut specs: Vec<NodeSpec> = Vec::new();
    for id in &node_order {
        let pending = &nodes[id];
        let parents = match (&pending.cpt_parents, pending.kind) {
            (None, NodeKind::Decision) => pending.arc_parents.clone(),
            (None, _) if pending.arc_parents.is_empty() => Vec::new(),
            (None, _) => {
                return Err(FormatError::at(
                    pending.declared_at,
                    1,
                    format!("node `{id}` has arcs but no table rows"),
                ));
            }
            (Some(order), _) => {
                let mut declared = pending.arc_parents.clone();
                declared.sort_unstable();
                let mut used = order.clone();
                used.sort_unstable();
                if declared != used {
                    return Err(FormatError::at(
                        pending.declared_at,
                        1,
                        format!("node `{id}`: table parents differ from declared arcs"),
                    ));
                }
                order.clone()
            }
        };
        let rows = if pending.kind == NodeKind::Decision {
            if !pending.rows.is_empty() {
                return Err(FormatError::at(
                    pending.declared_at,
                    1,
                    format!("decision node `{id}` may not carry table rows"),
                ));
            }
            None
        } else {
            let expected: usize = parents
                .iter()
                .map(|p| state_count(&nodes, p))
                .product();
            if pending.rows.len() != expected {
                return Err(FormatError::at(
                    pending.declared_at,
                    1,
                    format!(
                        "node `{id}` has {} table rows, expected {expected}",
                        pending.rows.len()
                    ),
                ));
            }
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity(expected);
            for i in 0..expected {
                rows.push(pending.rows[&i].clone());
            }
            if options.renormalize && pending.kind.is_chance_like() {
                for row in rows.iter_mut() {
                    let sum: f64 = row.iter().sum();
                    if sum > 0.0
                        && (sum - 1.0).abs() > ROW_SUM_TOLERANCE
                        && (sum - 1.0).abs() <= RENORMALIZE_TOLERANCE
                    {
                        for v in row.iter_mut() {
                            *v /= sum;
                        }
                    }
                }
            }
            Some(rows)
        };
        specs.push(NodeSpec {
            id: id.clone(),
            kind: pending.kind,
            states: pending.states.clone(),
            parents,
            rows,
        });
    }

    let mut diagram = build_diagram(&name, &specs)?;
    for (scope, key, value) in exts {
        let scope = if scope == "*" { None } else { Some(scope.as_str()) };
        diagram.set_ext(scope, &key, &value)?;
    }
    Ok(diagram)
}

fn state_count(nodes: &BTreeMap<String, PendingNode>, id: &str) -> usize {
    nodes.get(id).map_or(0, |n| n.states.len())
}

fn parse_table_row(
    keyword: &str,
    rest: &str,
    line_no: usize,
    nodes: &mut BTreeMap<String, PendingNode>,
) -> Result<(), FormatError> {
    let (id, tail) = split_word(rest.trim_start());
    let Some((config_part, value_part)) = tail.split_once(':') else {
        return Err(FormatError::at(line_no, 1, "table row lacks `:`"));
    };
    let Some(config_part) = config_part.trim_start().strip_prefix('|') else {
        return Err(FormatError::at(line_no, 1, "table row lacks `|`"));
    };

    // Parse the parent assignment list.
    let mut parent_order: Vec<String> = Vec::new();
    let mut state_labels: Vec<String> = Vec::new();
    for piece in config_part.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let Some((parent, state)) = piece.split_once('=') else {
            return Err(FormatError::at(
                line_no,
                1,
                format!("bad assignment `{piece}`; expected PARENT=STATE"),
            ));
        };
        parent_order.push(parent.to_string());
        state_labels.push(state.to_string());
    }

    let mut values: Vec<f64> = Vec::new();
    for word in value_part.split_whitespace() {
        let value: f64 = word.parse().map_err(|_| {
            FormatError::at(line_no, 1, format!("bad number `{word}`"))
        })?;
        values.push(value);
    }
    if values.is_empty() {
        return Err(FormatError::at(line_no, 1, "table row has no values"));
    }

    // Resolve the row index before borrowing the target node mutably.
    let mut index = 0usize;
    for (parent, state) in parent_order.iter().zip(state_labels.iter()) {
        let parent_node = nodes.get(parent).ok_or_else(|| {
            FormatError::at(line_no, 1, format!("unknown parent `{parent}`"))
        })?;
        let position =
            parent_node.states.iter().position(|s| s == state).ok_or_else(|| {
                FormatError::at(
                    line_no,
                    1,
                    format!("parent `{parent}` has no state `{state}`"),
                )
            })?;
        index = index * parent_node.states.len() + position;
    }

    let node = nodes
        .get_mut(id)
        .ok_or_else(|| FormatError::at(line_no, 1, format!("unknown node `{id}`")))?;
    let expects_val = node.kind == NodeKind::Value;
    if expects_val != (keyword == "val") {
        return Err(FormatError::at(
            line_no,
            1,
            format!("`{keyword}` row does not match the kind of `{id}`"),
        ));
    }
    match &node.cpt_parents {
        None => node.cpt_parents = Some(parent_order),
        Some(existing) if *existing == parent_order => {}
        Some(_) => {
            return Err(FormatError::at(
                line_no,
                1,
                format!("node `{id}`: table rows disagree on parent order"),
            ));
        }
    }
    if node.rows.insert(index, values).is_some() {
        return Err(FormatError::at(
            line_no,
            1,
            format!("node `{id}`: duplicate row for this configuration"),
        ));
    }
    Ok(())
}

/// Splits off the first whitespace-delimited word.
fn split_word(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        None => (s, ""),
        Some(at) => (&s[..at], s[at..].trim_start_matches(' ')),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use beliefcore::fixtures::fixture;
    use beliefcore::model::Evidence;
    use beliefcore::oracle::joint_enumeration_oracle;

    #[test]
    fn canonical_chain_text() {
        let d = fixture("FIX-CHAIN").unwrap();
        let text = save(&d).unwrap();
        let expected = "%beliefcore 1\n\
                        diagram fix-chain\n\
                        node A kind=chance states=t,f\n\
                        node B kind=chance states=t,f\n\
                        arc A -> B\n\
                        cpt A | : 0.3 0.7\n\
                        cpt B | A=t : 0.8 0.2\n\
                        cpt B | A=f : 0.1 0.9\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn round_trip_identity_on_fixtures() {
        for name in ["FIX-CHAIN", "FIX-DIAMOND", "FIX-ZERO", "FIX-ID", "FIX-ID-INFO"] {
            let mut d = fixture(name).unwrap();
            d.set_ext(None, "origin", "fixture file").unwrap();
            let text = save(&d).unwrap();
            let loaded = load(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(loaded, d, "{name}");
            assert_eq!(save(&loaded).unwrap(), text, "{name}");
        }
    }

    #[test]
    fn round_trip_preserves_posteriors() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let loaded = load(&save(&d).unwrap()).unwrap();
        let ev = Evidence::single(&loaded, "D", "t").unwrap();
        let beliefs = joint_enumeration_oracle(&loaded, &ev).unwrap();
        assert!((beliefs.get("A").unwrap()[0] - 0.4416 / 0.5655).abs() < 1e-12);
    }

    #[test]
    fn renormalization_is_opt_in() {
        let text = "%beliefcore 1\n\
                    diagram drift\n\
                    node A kind=chance states=t,f\n\
                    cpt A | : 0.4999996 0.4999996\n";
        assert!(matches!(load(text), Err(FormatError::Model(_))));
        let fixed = load_with(text, LoadOptions { renormalize: true }).unwrap();
        let row = &fixed.node("A").unwrap().table().unwrap().rows()[0];
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((row[0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "%beliefcore 1\ndiagram x\nnode A kind=chance states=t,f\ncpt A | : 0.3\n";
        match load(text) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected shape error, got {other:?}"),
        }

        let truncated = "%beliefcore 1\ndiagram x\nnode A kind=chance";
        match load(truncated) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        match load("%beliefcore 2\ndiagram x\n") {
            Err(FormatError::VersionUnsupported { found }) => assert_eq!(found, "2"),
            other => panic!("expected version error, got {other:?}"),
        }

        match load("diagram x\n") {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "%beliefcore 1\n\
                    # a comment\n\
                    diagram x\n\
                    \n\
                    node A kind=chance states=t,f\n\
                    cpt A | : 0.5 0.5\n\
                    # trailing comment\n";
        let d = load(text).unwrap();
        assert_eq!(d.name(), "x");
    }

    #[test]
    fn ext_lines_round_trip_verbatim() {
        let mut d = fixture("FIX-CHAIN").unwrap();
        d.set_ext(Some("B"), "layout.x", "10").unwrap();
        d.set_ext(None, "note", "spaces # and hash survive").unwrap();
        let text = save(&d).unwrap();
        assert!(text.contains("ext * note spaces # and hash survive\n"));
        assert!(text.contains("ext B layout.x 10\n"));
        let loaded = load(&text).unwrap();
        assert_eq!(loaded.ext_records(), d.ext_records());
    }

    #[test]
    fn rejected_row_sum_names_the_node() {
        let text = "%beliefcore 1\n\
                    diagram x\n\
                    node A kind=chance states=t,f\n\
                    cpt A | : 0.8 0.3\n";
        match load(text) {
            Err(FormatError::Model(beliefcore::Error::RowSumViolation { node, .. })) => {
                assert_eq!(node.as_str(), "A");
            }
            other => panic!("expected row-sum error, got {other:?}"),
        }
    }
}
