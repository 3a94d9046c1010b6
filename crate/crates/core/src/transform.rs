//! Outcome-change nodes and the projection from natural to compact diagrams.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::{fresh_symbol, CausalDiagram, Coeff, EdgeSpec, Form, NodeSpec, Role};

/// A delta node and the two outcome levels it differences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaBinding {
    pub delta: String,
    pub post: String,
    pub baseline: String,
}

/// Name used for the change node of period `t` when there are `posts` post periods.
pub fn delta_name(t: i64, posts: usize) -> String {
    if posts == 1 {
        "dY".to_string()
    } else {
        format!("dY{t}")
    }
}

/// Every bound delta node in the diagram.
pub fn bindings(diagram: &CausalDiagram) -> Vec<DeltaBinding> {
    diagram
        .nodes_with_role(Role::OutcomeDelta)
        .filter_map(|n| {
            Some(DeltaBinding { delta: n.name.clone(), post: n.post.clone()?, baseline: n.baseline.clone()? })
        })
        .collect()
}

pub fn binding(diagram: &CausalDiagram, delta: &str) -> Result<DeltaBinding> {
    bindings(diagram)
        .into_iter()
        .find(|b| b.delta == delta)
        .ok_or_else(|| Error::UnboundDelta(delta.to_string()))
}

/// Adds a change node `Y_t - Y_baseline` for every later outcome level.
pub fn build_delta_nodes(diagram: &CausalDiagram, baseline_time: i64) -> Result<CausalDiagram> {
    if diagram.form != Form::Natural {
        return Err(Error::CompactForm);
    }
    let levels: Vec<&NodeSpec> = diagram.nodes_with_role(Role::OutcomeLevel).collect();
    let base = levels
        .iter()
        .find(|n| n.time == Some(baseline_time))
        .ok_or(Error::MissingBaseline(baseline_time))?;
    let mut posts: Vec<&NodeSpec> = levels.iter().copied().filter(|n| n.time.is_some_and(|t| t > baseline_time)).collect();
    posts.sort_by_key(|n| n.time);
    if posts.is_empty() {
        return Err(Error::InvalidArgument(format!("no outcome_level node after period {baseline_time}")));
    }
    let existing = bindings(diagram);
    let mut out = diagram.clone();
    for post in &posts {
        if existing.iter().any(|b| b.post == post.name && b.baseline == base.name) {
            continue;
        }
        let t = post.time.expect("filtered on time");
        let name = delta_name(t, posts.len());
        if diagram.node(&name).is_some() {
            return Err(Error::NameCollision(name));
        }
        out.nodes.push(NodeSpec {
            name: name.clone(),
            time: Some(t),
            observed: true,
            role: Role::OutcomeDelta,
            post: Some(post.name.clone()),
            baseline: Some(base.name.clone()),
        });
        out.edges.push(EdgeSpec::new(&post.name, &name, Some(Coeff::Number(1.0))));
        out.edges.push(EdgeSpec::new(&base.name, &name, Some(Coeff::Number(-1.0))));
    }
    Ok(out)
}

fn coeff_text(e: &EdgeSpec) -> String {
    match &e.coeff {
        Some(c) => c.to_string(),
        None => fresh_symbol(&e.src, &e.dst),
    }
}

fn wrap(text: &str, poly_terms: usize) -> String {
    if poly_terms > 1 || text.starts_with('-') {
        format!("({text})")
    } else {
        text.to_string()
    }
}

/// Coefficient for `P -> delta`: the post edge minus the baseline edge.
fn difference(post: Option<&EdgeSpec>, base: Option<&EdgeSpec>) -> Result<Option<Coeff>> {
    let pp = post.map(EdgeSpec::poly).transpose()?;
    let bp = base.map(EdgeSpec::poly).transpose()?;
    Ok(match (post, base) {
        (Some(p), None) => Some(p.coeff.clone().unwrap_or_else(|| Coeff::Label(coeff_text(p)))),
        (None, Some(b)) => Some(match &b.coeff {
            Some(Coeff::Number(x)) => Coeff::Number(-x),
            _ => {
                let text = coeff_text(b);
                match text.strip_prefix('-') {
                    Some(rest) if bp.as_ref().unwrap().num_terms() == 1 => Coeff::Label(rest.to_string()),
                    _ => Coeff::Label(format!("-{}", wrap(&text, bp.as_ref().unwrap().num_terms()))),
                }
            }
        }),
        (Some(p), Some(b)) => {
            let diff = pp.as_ref().unwrap() - bp.as_ref().unwrap();
            if diff.is_zero() {
                None
            } else {
                let base_text = wrap(&coeff_text(b), bp.as_ref().unwrap().num_terms());
                Some(Coeff::Label(format!("{}-{}", coeff_text(p), base_text)))
            }
        }
        (None, None) => None,
    })
}

/// Marginalizes every outcome-level node into `delta`; other delta nodes are dropped.
pub fn compact(diagram: &CausalDiagram, delta: &str) -> Result<CausalDiagram> {
    if diagram.form != Form::Natural {
        return Err(Error::CompactForm);
    }
    diagram.index()?;
    let b = binding(diagram, delta)?;
    let levels: BTreeSet<&str> = diagram.nodes_with_role(Role::OutcomeLevel).map(|n| n.name.as_str()).collect();
    let deltas: BTreeSet<&str> = diagram.nodes_with_role(Role::OutcomeDelta).map(|n| n.name.as_str()).collect();
    for e in &diagram.edges {
        if levels.contains(e.src.as_str()) && !deltas.contains(e.dst.as_str()) {
            return Err(Error::CompactRejected { node: e.src.clone(), child: e.dst.clone() });
        }
    }
    let dropped = |n: &str| levels.contains(n) || (deltas.contains(n) && n != delta);
    let nodes: Vec<NodeSpec> = diagram.nodes.iter().filter(|n| !dropped(&n.name)).cloned().collect();
    let mut edges: Vec<EdgeSpec> = diagram
        .edges
        .iter()
        .filter(|e| !dropped(&e.src) && !dropped(&e.dst))
        .cloned()
        .collect();
    for parent in &nodes {
        let p = parent.name.as_str();
        let to_post = diagram.edge(p, &b.post);
        let to_base = diagram.edge(p, &b.baseline);
        if let Some(coeff) = difference(to_post, to_base)? {
            edges.push(EdgeSpec::new(p, delta, Some(coeff)));
        }
    }
    Ok(CausalDiagram { form: Form::Compact, nodes, edges })
}

/// Union of the compact diagrams for every delta node.
pub fn compact_all(diagram: &CausalDiagram) -> Result<CausalDiagram> {
    let bs = bindings(diagram);
    if bs.is_empty() {
        return Err(Error::InvalidArgument("diagram has no bound outcome_delta node".into()));
    }
    let parts = bs.iter().map(|b| compact(diagram, &b.delta)).collect::<Result<Vec<_>>>()?;
    Ok(union(&parts))
}

/// Merges compact diagrams, keeping the first occurrence of each node and edge.
pub fn union(parts: &[CausalDiagram]) -> CausalDiagram {
    let mut nodes: Vec<NodeSpec> = Vec::new();
    let mut edges: Vec<EdgeSpec> = Vec::new();
    for part in parts {
        for n in &part.nodes {
            if !nodes.iter().any(|m| m.name == n.name) {
                nodes.push(n.clone());
            }
        }
        for e in &part.edges {
            if !edges.iter().any(|f| f.src == e.src && f.dst == e.dst) {
                edges.push(e.clone());
            }
        }
    }
    CausalDiagram { form: Form::Compact, nodes, edges }
}
