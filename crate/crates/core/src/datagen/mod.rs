//! Seeded panel simulation from scenario models.

mod panel;
pub mod scenarios;

pub use panel::{ColumnSource, ColumnValue, Covariate, Frame, Layout, PanelDataset, PanelSchema};
pub use scenarios::{Estimand, ScenarioSpec, SCENARIO_NAMES};

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalDiagram, Role};
use crate::scm::{numeric_parents, solve_model};

/// Multiplier applied to the treatment's linear index in Bernoulli mode.
pub const LOGIT_SCALE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gaussian,
    #[default]
    Bernoulli,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intercept `c` with `mean(logistic(scale * index + c)) = 0.5`, by bisection.
fn calibrate_intercept(index: &[f64]) -> f64 {
    let mean_p = |c: f64| index.iter().map(|x| logistic(LOGIT_SCALE * x + c)).sum::<f64>() / index.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Node-name stem without the trailing period digits (`W1` -> `W`).
pub fn stem(name: &str) -> &str {
    let s = name.trim_end_matches(|c: char| c.is_ascii_digit());
    if s.is_empty() {
        name
    } else {
        s
    }
}

/// Panel periods and observed covariate columns implied by a natural diagram.
///
/// Covariate nodes sharing a stem form one column. A stem seen at a single
/// period is time-invariant and keeps the node name; otherwise the column is
/// time-varying and named by the stem.
pub fn schema_for(diagram: &CausalDiagram) -> Result<PanelSchema> {
    let periods: BTreeSet<i64> = diagram.nodes_with_role(Role::OutcomeLevel).filter_map(|n| n.time).collect();
    if periods.len() < 2 {
        return Err(Error::InvalidArgument("a panel needs outcome levels at two or more periods".into()));
    }
    let periods: Vec<i64> = periods.into_iter().collect();
    let mut families: Vec<(String, BTreeMap<i64, String>)> = Vec::new();
    for n in &diagram.nodes {
        if !n.observed || !matches!(n.role, Role::Covariate | Role::Other) {
            continue;
        }
        let t = n.time.unwrap_or(periods[0]);
        let key = stem(&n.name).to_string();
        match families.iter_mut().find(|(k, _)| *k == key) {
            Some((_, nodes)) => {
                nodes.insert(t, n.name.clone());
            }
            None => families.push((key, BTreeMap::from([(t, n.name.clone())]))),
        }
    }
    let mut columns = Vec::new();
    for (key, nodes) in families {
        if nodes.len() == 1 {
            let node = nodes.into_values().next().unwrap();
            columns.push((node.clone(), ColumnSource::Invariant { node }));
        } else {
            if let Some(p) = periods.iter().find(|p| !nodes.contains_key(p)) {
                return Err(Error::InvalidArgument(format!("time-varying covariate `{key}` has no node at period {p}")));
            }
            columns.push((key, ColumnSource::Varying { nodes }));
        }
    }
    Ok(PanelSchema { periods, columns })
}

/// Draws `n` units from the scenario's structural model.
pub fn simulate(spec: &ScenarioSpec, n: usize, mode: Mode, seed: u64) -> Result<PanelDataset> {
    simulate_diagram(&spec.diagram, &spec.assignment, n, mode, seed)
}

pub fn simulate_diagram(
    diagram: &CausalDiagram,
    assignment: &crate::scm::CoefficientAssignment,
    n: usize,
    mode: Mode,
    seed: u64,
) -> Result<PanelDataset> {
    if n < 2 {
        return Err(Error::InvalidArgument("simulation needs at least two units".into()));
    }
    let schema = schema_for(diagram)?;
    let dag = diagram.index()?;
    let (_, omegas) = solve_model(diagram, assignment)?;
    let beta = numeric_parents(&dag, assignment)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); dag.len()];
    for &v in dag.topo_order() {
        let mut x = vec![0.0; n];
        for (p, b) in &beta[v] {
            for (xi, pi) in x.iter_mut().zip(&values[*p]) {
                *xi += b * pi;
            }
        }
        let role = diagram.require_node(dag.name(v))?.role;
        if role == Role::Treatment && mode == Mode::Bernoulli {
            let c = calibrate_intercept(&x);
            for xi in x.iter_mut() {
                let p = logistic(LOGIT_SCALE * *xi + c);
                *xi = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
            }
        } else if omegas[v] > 0.0 {
            let sd = omegas[v].sqrt();
            for xi in x.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *xi += sd * e;
            }
        }
        values[v] = x;
    }
    let node_values = |name: &str| -> Result<Vec<f64>> { Ok(values[dag.id(name)?].clone()) };

    let outcome_nodes: BTreeMap<i64, String> = diagram
        .nodes_with_role(Role::OutcomeLevel)
        .filter_map(|nd| nd.time.map(|t| (t, nd.name.clone())))
        .collect();
    let treatment_nodes: BTreeMap<i64, String> = diagram
        .nodes_with_role(Role::Treatment)
        .filter_map(|nd| nd.time.map(|t| (t, nd.name.clone())))
        .collect();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    for (i, p) in schema.periods.iter().enumerate() {
        outcome.push(node_values(&outcome_nodes[p])?);
        if i == 0 {
            treatment.push(vec![0.0; n]);
        } else {
            let (_, node) = treatment_nodes
                .range(..=p)
                .next_back()
                .ok_or_else(|| Error::InvalidArgument(format!("no treatment node at or before period {p}")))?;
            treatment.push(node_values(node)?);
        }
    }
    let mut covariates = Vec::new();
    for (name, source) in &schema.columns {
        let per_period = schema
            .periods
            .iter()
            .map(|p| match source {
                ColumnSource::Invariant { node } => node_values(node),
                ColumnSource::Varying { nodes } => node_values(&nodes[p]),
                _ => unreachable!("schema_for builds only node-backed columns"),
            })
            .collect::<Result<Vec<_>>>()?;
        covariates.push(Covariate { name: name.clone(), source: source.clone(), values: per_period });
    }
    Ok(PanelDataset { periods: schema.periods, treatment, outcome, covariates })
}
