use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{is_path_open, CausalDiagram, Dag, Form, Role};
use crate::error::{Error, Result};
use crate::poly::PolyExpr;
use crate::scm::{treks, PathCache, TREK_CAP};

/// Largest candidate pool searched exhaustively by [`minimal_sufficient_sets`].
pub const DEFAULT_SEARCH_CAP: usize = 20;
const MAX_WITNESSES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentStatus {
    Sufficient,
    Insufficient,
    InvalidDescendant,
    InvalidUnobserved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentVerdict {
    pub status: AdjustmentStatus,
    /// Backdoor paths left open by the set (node names from treatment to outcome).
    pub open_paths: Vec<Vec<String>>,
    /// Backdoor treks whose coefficient products cancel exactly, when the
    /// empty set is sufficient by offsetting rather than blocking.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offsetting_paths: Vec<Vec<String>>,
    /// Set members that are unobserved or descend from the treatment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offending: Vec<String>,
}

impl AdjustmentVerdict {
    fn status(status: AdjustmentStatus) -> Self {
        Self { status, open_paths: Vec::new(), offsetting_paths: Vec::new(), offending: Vec::new() }
    }

    pub fn is_sufficient(&self) -> bool {
        self.status == AdjustmentStatus::Sufficient
    }
}

fn require_compact(diagram: &CausalDiagram) -> Result<()> {
    match diagram.form {
        Form::Compact => Ok(()),
        Form::Natural => Err(Error::NaturalForm),
    }
}

/// Backdoor criterion for `z` relative to the effect of `treatment` on `outcome`.
pub fn backdoor_check(
    diagram: &CausalDiagram,
    treatment: &str,
    outcome: &str,
    z: &BTreeSet<String>,
) -> Result<AdjustmentVerdict> {
    require_compact(diagram)?;
    let dag = diagram.index()?;
    let t = dag.id(treatment)?;
    let y = dag.id(outcome)?;
    let zs = dag.ids_of(z)?;
    if zs.contains(&t) || zs.contains(&y) {
        return Err(Error::InvalidArgument("adjustment set must not contain the treatment or the outcome".into()));
    }
    let unobserved: Vec<String> = z
        .iter()
        .filter(|n| diagram.node(n).map(|s| !s.observed).unwrap_or(false))
        .cloned()
        .collect();
    if !unobserved.is_empty() {
        return Ok(AdjustmentVerdict { offending: unobserved, ..AdjustmentVerdict::status(AdjustmentStatus::InvalidUnobserved) });
    }
    let desc = dag.descendants(t);
    let descendants: Vec<String> = zs.iter().filter(|&&i| desc[i]).map(|&i| dag.name(i).to_string()).collect();
    if !descendants.is_empty() {
        return Ok(AdjustmentVerdict { offending: descendants, ..AdjustmentVerdict::status(AdjustmentStatus::InvalidDescendant) });
    }
    let cut = Dag::build(diagram, |e| e.src != treatment)?;
    if cut.d_separated(&[t], &[y], &zs) {
        return Ok(AdjustmentVerdict::status(AdjustmentStatus::Sufficient));
    }
    if zs.is_empty() {
        if let Some(offsetting) = offsetting_treks(&dag, t, y)? {
            return Ok(AdjustmentVerdict { offsetting_paths: offsetting, ..AdjustmentVerdict::status(AdjustmentStatus::Sufficient) });
        }
    }
    let open_paths = open_paths(&cut, t, y, &zs)
        .into_iter()
        .map(|p| p.into_iter().map(|i| cut.name(i).to_string()).collect())
        .collect();
    Ok(AdjustmentVerdict { open_paths, ..AdjustmentVerdict::status(AdjustmentStatus::Insufficient) })
}

/// Backdoor treks between `t` and `y`, if their coefficient products sum to
/// the zero polynomial.
fn offsetting_treks(dag: &Dag, t: usize, y: usize) -> Result<Option<Vec<Vec<String>>>> {
    let mut cache = PathCache::new(dag, TREK_CAP);
    let backdoor: Vec<_> = treks(dag, t, y, &mut cache)?.into_iter().filter(|tr| tr.top != t).collect();
    let total = backdoor.iter().fold(PolyExpr::zero(), |acc, tr| &acc + &tr.product(dag));
    if backdoor.is_empty() || !total.is_zero() {
        return Ok(None);
    }
    Ok(Some(backdoor.iter().map(|tr| tr.node_names(dag)).collect()))
}

/// Simple paths from `t` to `y` that are open given `z`, up to a fixed count.
fn open_paths(dag: &Dag, t: usize, y: usize, z: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = vec![t];
    let mut on_path = vec![false; dag.len()];
    on_path[t] = true;
    extend(dag, y, z, &mut path, &mut on_path, &mut out);
    out
}

fn extend(dag: &Dag, y: usize, z: &[usize], path: &mut Vec<usize>, on_path: &mut [bool], out: &mut Vec<Vec<usize>>) {
    if out.len() >= MAX_WITNESSES {
        return;
    }
    let last = *path.last().unwrap();
    let mut neighbours: Vec<usize> = dag.parents(last).iter().map(|(p, _)| *p).collect();
    neighbours.extend_from_slice(dag.children(last));
    neighbours.sort_unstable();
    for n in neighbours {
        if on_path[n] {
            continue;
        }
        path.push(n);
        if is_path_open(dag, path, z) {
            if n == y {
                out.push(path.clone());
            } else {
                on_path[n] = true;
                extend(dag, y, z, path, on_path, out);
                on_path[n] = false;
            }
        }
        path.pop();
    }
}

/// Options for the exhaustive minimal-set search.
#[derive(Debug, Clone, Default)]
pub struct SetSearch {
    /// Candidate pool; defaults to every observed non-descendant of the
    /// treatment other than outcome-delta nodes and the outcome itself.
    pub candidates: Option<BTreeSet<String>>,
    /// Pool-size cap; defaults to [`DEFAULT_SEARCH_CAP`].
    pub cap: Option<usize>,
}

/// Every sufficient subset of the candidates with no sufficient proper
/// subset, ordered by size and then lexicographically.
pub fn minimal_sufficient_sets(
    diagram: &CausalDiagram,
    treatment: &str,
    outcome: &str,
    search: &SetSearch,
) -> Result<Vec<BTreeSet<String>>> {
    require_compact(diagram)?;
    let dag = diagram.index()?;
    let t = dag.id(treatment)?;
    dag.id(outcome)?;
    let pool: Vec<String> = match &search.candidates {
        Some(c) => {
            for n in c {
                dag.id(n)?;
            }
            c.iter().filter(|n| *n != treatment && *n != outcome).cloned().collect()
        }
        None => {
            let desc = dag.descendants(t);
            diagram
                .nodes
                .iter()
                .filter(|n| n.observed && n.role != Role::OutcomeDelta && n.name != outcome && !desc[dag.id(&n.name).unwrap()])
                .map(|n| n.name.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        }
    };
    let cap = search.cap.unwrap_or(DEFAULT_SEARCH_CAP);
    if pool.len() > cap {
        return Err(Error::Capacity { size: pool.len(), cap });
    }
    let mut found: Vec<BTreeSet<String>> = Vec::new();
    for size in 0..=pool.len() {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let set: BTreeSet<String> = combo.iter().map(|&i| pool[i].clone()).collect();
            if !found.iter().any(|f| f.is_subset(&set)) && backdoor_check(diagram, treatment, outcome, &set)?.is_sufficient() {
                found.push(set);
            }
            if !next_combination(&mut combo, pool.len()) {
                break;
            }
        }
    }
    Ok(found)
}

/// Advances to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
