//! Stochastic simulation: Gibbs sampling over the Markov blanket,
//! restricted to strictly positive distributions.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Beliefs, Diagram, Evidence, NodeId};
use crate::rng::Rng;

/// Sweep schedule of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimParams {
    /// Total sweeps; each sweep resamples every non-evidence node once, in
    /// graph order.
    pub sweeps: u32,
    /// Sweeps discarded before frequencies are counted.
    pub burn_in: u32,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { sweeps: 20_000, burn_in: 1_000, seed: 0 }
    }
}

/// Gibbs sampling: non-evidence nodes start uniformly at random and are
/// resampled in graph order from their Markov-blanket conditional; beliefs
/// are the post-burn-in state frequencies.
///
/// The network must be strictly positive; with a zero anywhere the chain
/// can be trapped and the run is refused instead. Fixed seeds reproduce
/// identical beliefs across platforms.
pub fn gibbs_infer(d: &Diagram, evidence: &Evidence, params: &SimParams) -> Result<Beliefs> {
    if !d.is_belief_net() {
        return Err(Error::NotBeliefNet);
    }
    evidence.validate(d)?;
    if !d.is_strictly_positive() {
        return Err(Error::NotStrictlyPositive);
    }
    if params.sweeps == 0 || params.sweeps <= params.burn_in {
        return Err(Error::BadParams("need sweeps > burn_in >= 0".into()));
    }

    let ids = d.graph_order()?;
    let index: BTreeMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let n = ids.len();
    let mut cards = vec![0usize; n];
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, id) in ids.iter().enumerate() {
        let node = d.node(id.as_str()).expect("listed node");
        cards[i] = node.states().len();
        parents[i] = node.parents().iter().map(|p| index[p.as_str()]).collect();
        for &p in &parents[i] {
            children[p].push(i);
        }
    }
    let observed: Vec<Option<usize>> = ids.iter().map(|id| evidence.get(id.as_str())).collect();
    let free: Vec<usize> = (0..n).filter(|&i| observed[i].is_none()).collect();

    let mut rng = Rng::new(params.seed);
    let mut state: Vec<usize> = (0..n)
        .map(|i| observed[i].unwrap_or_else(|| rng.below(cards[i])))
        .collect();
    let mut counts: Vec<Vec<u64>> = cards.iter().map(|&c| vec![0u64; c]).collect();

    let mut samples = 0u64;
    for sweep in 0..params.sweeps {
        for &i in &free {
            let weights = blanket_distribution(d, &ids, &parents, &children, &state, i);
            state[i] = sample_index(&mut rng, &weights);
        }
        if sweep >= params.burn_in {
            samples += 1;
            for (i, &s) in state.iter().enumerate() {
                counts[i][s] += 1;
            }
        }
    }

    let mut posteriors = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let v = match observed[i] {
            Some(s) => {
                let mut unit = vec![0.0; cards[i]];
                unit[s] = 1.0;
                unit
            }
            None => counts[i].iter().map(|&c| c as f64 / samples as f64).collect(),
        };
        posteriors.insert(id.clone(), v);
    }
    Ok(Beliefs::new(posteriors, None))
}

/// Unnormalized Markov-blanket conditional of node `i` under the current
/// state: its own row times each child's row.
fn blanket_distribution(
    d: &Diagram,
    ids: &[NodeId],
    parents: &[Vec<usize>],
    children: &[Vec<usize>],
    state: &[usize],
    i: usize,
) -> Vec<f64> {
    let node = d.node(ids[i].as_str()).expect("listed node");
    let table = node.table().expect("chance table");
    let own_cfg: Vec<usize> = parents[i].iter().map(|&p| state[p]).collect();
    let mut weights: Vec<f64> = table.row(&own_cfg).to_vec();
    let mut child_cfg: Vec<usize> = Vec::new();
    for &c in &children[i] {
        let child = d.node(ids[c].as_str()).expect("listed node");
        let child_table = child.table().expect("chance table");
        for (value, weight) in weights.iter_mut().enumerate() {
            if *weight == 0.0 {
                continue;
            }
            child_cfg.clear();
            child_cfg.extend(parents[c].iter().map(|&p| if p == i { value } else { state[p] }));
            *weight *= child_table.row(&child_cfg)[state[c]];
        }
    }
    weights
}

/// Cumulative-row sampling: one uniform draw scaled by the total weight,
/// walked against the running sum. Pure arithmetic, so a fixed seed gives
/// the same index everywhere.
fn sample_index(rng: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.f64() * total;
    let mut cumulative = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cumulative += w;
        if target < cumulative {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;
    use crate::model::{build_diagram, NodeSpec};
    use crate::oracle::joint_enumeration_oracle;

    #[test]
    fn strictly_positive_is_required() {
        let d = fixture("FIX-ZERO").unwrap();
        let out = gibbs_infer(&d, &Evidence::none(), &SimParams::default());
        assert_eq!(out, Err(Error::NotStrictlyPositive));
    }

    #[test]
    fn bad_schedules_are_rejected() {
        let d = fixture("FIX-CHAIN").unwrap();
        let params = SimParams { sweeps: 100, burn_in: 100, seed: 0 };
        assert!(matches!(gibbs_infer(&d, &Evidence::none(), &params), Err(Error::BadParams(_))));
    }

    #[test]
    fn chain_posterior_is_close_to_oracle() {
        let d = fixture("FIX-CHAIN").unwrap();
        let ev = Evidence::single(&d, "B", "t").unwrap();
        let params = SimParams { sweeps: 20_000, burn_in: 1_000, seed: 7 };
        let approx = gibbs_infer(&d, &ev, &params).unwrap();
        assert!((approx.get("A").unwrap()[0] - 24.0 / 31.0).abs() <= 0.05);
        assert!(approx.evidence_probability().is_none());
        assert_eq!(approx.get("B").unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn fixed_seed_reproduces_beliefs() {
        let d = fixture("FIX-DIAMOND").unwrap();
        let params = SimParams { sweeps: 500, burn_in: 50, seed: 123 };
        let a = gibbs_infer(&d, &Evidence::none(), &params).unwrap();
        let b = gibbs_infer(&d, &Evidence::none(), &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fully_observed_networks_need_no_sampling() {
        let d = fixture("FIX-CHAIN").unwrap();
        let mut ev = Evidence::none();
        ev.observe(&d, "A", "f").unwrap();
        ev.observe(&d, "B", "t").unwrap();
        let params = SimParams { sweeps: 10, burn_in: 0, seed: 0 };
        let beliefs = gibbs_infer(&d, &ev, &params).unwrap();
        assert_eq!(beliefs.get("A").unwrap(), &[0.0, 1.0]);
        assert_eq!(beliefs.get("B").unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn blanket_conditional_matches_joint_ratio() {
        // On a 3-node collider the blanket weights must be proportional to
        // the joint with the node swept over its states.
        let d = build_diagram(
            "collider",
            &[
                NodeSpec::chance("A", &["t", "f"], &[], vec![vec![0.25, 0.75]]),
                NodeSpec::chance("B", &["t", "f"], &[], vec![vec![0.6, 0.4]]),
                NodeSpec::chance(
                    "C",
                    &["t", "f"],
                    &["A", "B"],
                    vec![vec![0.9, 0.1], vec![0.7, 0.3], vec![0.2, 0.8], vec![0.5, 0.5]],
                ),
            ],
        )
        .unwrap();
        let ids = d.graph_order().unwrap();
        let index: BTreeMap<&str, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); 3];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); 3];
        for (i, id) in ids.iter().enumerate() {
            let node = d.node(id.as_str()).unwrap();
            parents[i] = node.parents().iter().map(|p| index[p.as_str()]).collect();
            for &p in &parents[i] {
                children[p].push(i);
            }
        }
        // State: A = t (index 0 varies), B = f, C = t.
        let state = vec![0usize, 1, 0];
        let target = index["A"];
        let weights = blanket_distribution(&d, &ids, &parents, &children, &state, target);

        let joint = |a: usize| -> f64 {
            let pa = d.node("A").unwrap().table().unwrap().rows()[0][a];
            let pb = d.node("B").unwrap().table().unwrap().rows()[0][1];
            let pc = d.node("C").unwrap().table().unwrap().row(&[a, 1])[0];
            pa * pb * pc
        };
        let scale = joint(0) / weights[0];
        for a in 0..2 {
            assert!((weights[a] * scale - joint(a)).abs() < 1e-12);
        }

        // And the full conditional agrees with the oracle given the rest.
        let mut ev = Evidence::none();
        ev.observe(&d, "B", "f").unwrap();
        ev.observe(&d, "C", "t").unwrap();
        let oracle = joint_enumeration_oracle(&d, &ev).unwrap();
        let total: f64 = weights.iter().sum();
        for a in 0..2 {
            assert!((weights[a] / total - oracle.get("A").unwrap()[a]).abs() < 1e-12);
        }
    }
}
