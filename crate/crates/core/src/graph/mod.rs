//! Causal diagrams: the JSON-facing description, structural validation, and an
//! indexed view used by every graph query.

mod backdoor;
mod dsep;

pub use backdoor::{backdoor_check, minimal_sufficient_sets, AdjustmentStatus, AdjustmentVerdict, SetSearch};
pub use dsep::{d_separated, is_path_open};

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::PolyExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Treatment,
    OutcomeLevel,
    OutcomeDelta,
    Covariate,
    LatentConfounder,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Natural,
    Compact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<i64>,
    pub observed: bool,
    pub role: Role,
    /// Post-period outcome differenced by an `outcome_delta` node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<String>,
    /// Baseline outcome differenced by an `outcome_delta` node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
}

impl NodeSpec {
    pub fn new(name: &str, time: Option<i64>, observed: bool, role: Role) -> Self {
        Self { name: name.into(), time, observed, role, post: None, baseline: None }
    }
}

/// Edge coefficient as written: a number or an expression over symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeff {
    Number(f64),
    Label(String),
}

impl Coeff {
    pub fn to_poly(&self) -> Result<PolyExpr> {
        match self {
            Coeff::Number(x) => PolyExpr::from_f64(*x),
            Coeff::Label(s) => PolyExpr::parse(s),
        }
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coeff::Number(x) => write!(f, "{x}"),
            Coeff::Label(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<Coeff>,
}

impl EdgeSpec {
    pub fn new(src: &str, dst: &str, coeff: Option<Coeff>) -> Self {
        Self { src: src.into(), dst: dst.into(), coeff }
    }

    /// The edge's coefficient polynomial; unlabeled edges get a fresh symbol.
    pub fn poly(&self) -> Result<PolyExpr> {
        match &self.coeff {
            Some(c) => c.to_poly(),
            None => Ok(PolyExpr::symbol(&fresh_symbol(&self.src, &self.dst))),
        }
    }
}

pub fn fresh_symbol(src: &str, dst: &str) -> String {
    format!("b_{src}_{dst}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalDiagram {
    pub form: Form,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    DuplicateNode,
    UnknownNode,
    SelfLoop,
    DuplicateEdge,
    Cycle,
    LatentObserved,
    DeltaBinding,
    DeltaEdges,
    BadCoefficient,
    OutcomeIntoTreatment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub element: String,
    pub message: String,
}

impl Diagnostic {
    fn error(code: DiagnosticCode, element: impl Into<String>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, code, element: element.into(), message: message.into() }
    }
}

impl CausalDiagram {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagram serializes")
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn require_node(&self, name: &str) -> Result<&NodeSpec> {
        self.node(name).ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn edge(&self, src: &str, dst: &str) -> Option<&EdgeSpec> {
        self.edges.iter().find(|e| e.src == src && e.dst == dst)
    }

    pub fn nodes_with_role(&self, role: Role) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(move |n| n.role == role)
    }

    /// Every symbol appearing in an edge coefficient (fresh symbols included).
    pub fn symbols(&self) -> Result<BTreeSet<String>> {
        let mut out = BTreeSet::new();
        for e in &self.edges {
            out.extend(e.poly()?.symbols());
        }
        Ok(out)
    }

    /// Checks every structural invariant and reports each violation.
    pub fn validate(&self) -> Vec<Diagnostic> {
        use DiagnosticCode::*;
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.name.as_str()) {
                out.push(Diagnostic::error(DuplicateNode, &n.name, format!("node `{}` is declared more than once", n.name)));
            }
            if n.role == Role::LatentConfounder && n.observed {
                out.push(Diagnostic::error(LatentObserved, &n.name, format!("latent confounder `{}` is marked observed", n.name)));
            }
            self.validate_binding(n, &mut out);
        }
        let mut pairs = BTreeSet::new();
        for e in &self.edges {
            let label = format!("{}->{}", e.src, e.dst);
            for end in [&e.src, &e.dst] {
                if self.node(end).is_none() {
                    out.push(Diagnostic::error(UnknownNode, &label, format!("edge references unknown node `{end}`")));
                }
            }
            if e.src == e.dst {
                out.push(Diagnostic::error(SelfLoop, &label, format!("self-loop on `{}`", e.src)));
            }
            if !pairs.insert((e.src.as_str(), e.dst.as_str())) {
                out.push(Diagnostic::error(DuplicateEdge, &label, format!("edge {label} is declared more than once")));
            }
            if let Err(err) = e.poly() {
                out.push(Diagnostic::error(BadCoefficient, &label, err.to_string()));
            }
            if self.form == Form::Natural {
                let src_role = self.node(&e.src).map(|n| n.role);
                let dst_role = self.node(&e.dst).map(|n| n.role);
                if src_role == Some(Role::OutcomeLevel) && dst_role == Some(Role::Treatment) {
                    out.push(Diagnostic {
                        severity: Severity::Warning,
                        code: OutcomeIntoTreatment,
                        element: label.clone(),
                        message: format!("outcome `{}` causes treatment `{}`; difference-in-differences is not identified", e.src, e.dst),
                    });
                }
            }
        }
        if let Some(node) = self.find_cycle() {
            out.push(Diagnostic::error(Cycle, &node, format!("directed cycle through `{node}`")));
        }
        out
    }

    fn validate_binding(&self, n: &NodeSpec, out: &mut Vec<Diagnostic>) {
        use DiagnosticCode::*;
        if n.role != Role::OutcomeDelta {
            if n.post.is_some() || n.baseline.is_some() {
                out.push(Diagnostic::error(DeltaBinding, &n.name, format!("`{}` declares post/baseline but is not an outcome_delta node", n.name)));
            }
            return;
        }
        let (Some(post), Some(base)) = (&n.post, &n.baseline) else {
            out.push(Diagnostic::error(DeltaBinding, &n.name, format!("outcome_delta node `{}` must declare post and baseline", n.name)));
            return;
        };
        if self.form == Form::Compact {
            return;
        }
        let mut ok = true;
        for end in [post, base] {
            match self.node(end) {
                Some(m) if m.role == Role::OutcomeLevel => {}
                _ => {
                    ok = false;
                    out.push(Diagnostic::error(DeltaBinding, &n.name, format!("`{end}` bound by `{}` is not an outcome_level node", n.name)));
                }
            }
        }
        if ok {
            let (tp, tb) = (self.node(post).and_then(|m| m.time), self.node(base).and_then(|m| m.time));
            if let (Some(tp), Some(tb)) = (tp, tb) {
                if tp <= tb {
                    out.push(Diagnostic::error(DeltaBinding, &n.name, format!("post period {tp} is not after baseline period {tb}")));
                }
            }
        }
        let incoming: Vec<&EdgeSpec> = self.edges.iter().filter(|e| e.dst == n.name).collect();
        let expect = |src: &str, value: i64| {
            incoming
                .iter()
                .any(|e| e.src == src && e.poly().map(|p| p == PolyExpr::integer(value)).unwrap_or(false))
        };
        if incoming.len() != 2 || !expect(post, 1) || !expect(base, -1) {
            out.push(Diagnostic::error(
                DeltaEdges,
                &n.name,
                format!("`{}` must have exactly the edges {post}->{} (1) and {base}->{} (-1)", n.name, n.name, n.name),
            ));
        }
    }

    fn find_cycle(&self) -> Option<String> {
        let names: BTreeSet<&str> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        let mut indeg: BTreeMap<&str, usize> = names.iter().map(|n| (*n, 0)).collect();
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            if names.contains(e.src.as_str()) && names.contains(e.dst.as_str()) {
                *indeg.get_mut(e.dst.as_str()).unwrap() += 1;
                children.entry(e.src.as_str()).or_default().push(e.dst.as_str());
            }
        }
        let mut queue: VecDeque<&str> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        while let Some(n) = queue.pop_front() {
            for c in children.get(n).into_iter().flatten() {
                let d = indeg.get_mut(c).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push_back(c);
                }
            }
        }
        indeg.into_iter().find(|(_, d)| *d > 0).map(|(n, _)| n.to_string())
    }

    /// Builds the indexed view, failing on any structural error.
    pub fn index(&self) -> Result<Dag> {
        Dag::build(self, |_| true)
    }

    pub fn descendants(&self, node: &str) -> Result<BTreeSet<String>> {
        let dag = self.index()?;
        let i = dag.id(node)?;
        Ok(dag.names_of(&dag.descendants(i)))
    }

    pub fn ancestors(&self, node: &str) -> Result<BTreeSet<String>> {
        let dag = self.index()?;
        let i = dag.id(node)?;
        Ok(dag.names_of(&dag.ancestors(&[i])))
    }
}

/// Indexed, validated DAG with parsed coefficients.
#[derive(Debug, Clone)]
pub struct Dag {
    names: Vec<String>,
    ids: HashMap<String, usize>,
    parents: Vec<Vec<(usize, PolyExpr)>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl Dag {
    /// Builds from a diagram keeping only edges accepted by `keep`.
    pub fn build(d: &CausalDiagram, keep: impl Fn(&EdgeSpec) -> bool) -> Result<Self> {
        let mut ids = HashMap::new();
        let mut names = Vec::new();
        for n in &d.nodes {
            if ids.insert(n.name.clone(), names.len()).is_some() {
                return Err(Error::InvalidDiagram(format!("duplicate node `{}`", n.name)));
            }
            names.push(n.name.clone());
        }
        let k = names.len();
        let mut parents: Vec<Vec<(usize, PolyExpr)>> = vec![Vec::new(); k];
        let mut children = vec![Vec::new(); k];
        for e in d.edges.iter().filter(|e| keep(e)) {
            let s = *ids.get(&e.src).ok_or_else(|| Error::UnknownNode(e.src.clone()))?;
            let t = *ids.get(&e.dst).ok_or_else(|| Error::UnknownNode(e.dst.clone()))?;
            if s == t {
                return Err(Error::InvalidDiagram(format!("self-loop on `{}`", e.src)));
            }
            if children[s].contains(&t) {
                return Err(Error::InvalidDiagram(format!("duplicate edge {}->{}", e.src, e.dst)));
            }
            parents[t].push((s, e.poly()?));
            children[s].push(t);
        }
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..k).filter(|&i| indeg[i] == 0).collect();
        let mut topo = Vec::with_capacity(k);
        while let Some(i) = queue.pop_front() {
            topo.push(i);
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if topo.len() != k {
            let stuck = (0..k).find(|&i| indeg[i] > 0).unwrap();
            return Err(Error::Cycle(names[stuck].clone()));
        }
        Ok(Self { names, ids, parents, children, topo })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.ids.get(name).copied().ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self, i: usize) -> &[(usize, PolyExpr)] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn coeff(&self, src: usize, dst: usize) -> Option<&PolyExpr> {
        self.parents[dst].iter().find(|(p, _)| *p == src).map(|(_, c)| c)
    }

    pub fn ids_of<'a>(&self, names: impl IntoIterator<Item = &'a String>) -> Result<Vec<usize>> {
        names.into_iter().map(|n| self.id(n)).collect()
    }

    pub fn names_of(&self, ids: &[bool]) -> BTreeSet<String> {
        ids.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.names[i].clone())
            .collect()
    }

    /// Reflexive-transitive closure along edge direction, as a membership mask.
    pub fn descendants(&self, i: usize) -> Vec<bool> {
        let mut mark = vec![false; self.len()];
        let mut stack = vec![i];
        while let Some(v) = stack.pop() {
            if !std::mem::replace(&mut mark[v], true) {
                stack.extend(self.children[v].iter().copied());
            }
        }
        mark
    }

    /// Reflexive-transitive closure against edge direction from every start node.
    pub fn ancestors(&self, start: &[usize]) -> Vec<bool> {
        let mut mark = vec![false; self.len()];
        let mut stack = start.to_vec();
        while let Some(v) = stack.pop() {
            if !std::mem::replace(&mut mark[v], true) {
                stack.extend(self.parents[v].iter().map(|(p, _)| *p));
            }
        }
        mark
    }
}
