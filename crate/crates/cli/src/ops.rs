//! Request types and handlers shared by the command line and the HTTP server.

use std::collections::BTreeSet;
use std::sync::atomic::AtomicBool;

use didgraph::align::{align_table, AlignRow, LabelledPlan};
use didgraph::bench::{run_benchmark_with_cancel, BenchConfig, BiasReport};
use didgraph::datagen::{simulate, Layout, Mode, ScenarioSpec};
use didgraph::estimators::EstimatorKind;
use didgraph::graph::{
    backdoor_check, minimal_sufficient_sets, AdjustmentVerdict, CausalDiagram, Diagnostic, Form, Role, SetSearch,
};
use didgraph::scm::{trace, CoefficientAssignment, TraceResult};
use didgraph::transform::{compact, compact_all};
use didgraph::{Error, Result};
use serde::{Deserialize, Serialize};

/// A diagram given inline or by shipped scenario name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GraphSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<CausalDiagram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

impl GraphSource {
    pub fn resolve(&self) -> Result<CausalDiagram> {
        match (&self.graph, &self.scenario) {
            (Some(g), None) => Ok(g.clone()),
            (None, Some(s)) => Ok(ScenarioSpec::load(s)?.diagram),
            _ => Err(Error::InvalidArgument("give exactly one of `graph` and `scenario`".into())),
        }
    }
}

fn sole(diagram: &CausalDiagram, role: Role, what: &str) -> Result<String> {
    let mut names = diagram.nodes_with_role(role).map(|n| n.name.clone());
    match (names.next(), names.next()) {
        (Some(n), None) => Ok(n),
        (None, _) => Err(Error::InvalidArgument(format!("diagram has no {what} node"))),
        _ => Err(Error::InvalidArgument(format!("diagram has several {what} nodes; name one explicitly"))),
    }
}

/// The treatment and outcome of a query, inferred when the diagram has a
/// single node of each role.
pub fn endpoints(diagram: &CausalDiagram, treatment: Option<&str>, outcome: Option<&str>) -> Result<(String, String)> {
    let t = match treatment {
        Some(t) => t.to_string(),
        None => sole(diagram, Role::Treatment, "treatment")?,
    };
    let y = match outcome {
        Some(y) => y.to_string(),
        None => sole(diagram, Role::OutcomeDelta, "outcome-change")?,
    };
    Ok((t, y))
}

/// The compact diagram for `outcome`; natural input is compacted first.
fn compact_for(diagram: &CausalDiagram, outcome: &str) -> Result<CausalDiagram> {
    match diagram.form {
        Form::Natural => compact(diagram, outcome),
        Form::Compact => Ok(diagram.clone()),
    }
}

pub fn validate(diagram: &CausalDiagram) -> Vec<Diagnostic> {
    diagram.validate()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CompactRequest {
    #[serde(flatten)]
    pub source: GraphSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<String>,
}

pub fn compact_graph(req: &CompactRequest) -> Result<CausalDiagram> {
    let d = req.source.resolve()?;
    match &req.delta {
        Some(delta) => compact(&d, delta),
        None => compact_all(&d),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SetsRequest {
    #[serde(flatten)]
    pub source: GraphSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
}

pub fn sets(req: &SetsRequest) -> Result<Vec<Vec<String>>> {
    let d = req.source.resolve()?;
    let (t, y) = endpoints(&d, req.treatment.as_deref(), req.outcome.as_deref())?;
    let search = SetSearch { candidates: req.candidates.as_ref().map(|c| c.iter().cloned().collect()), cap: None };
    let found = minimal_sufficient_sets(&compact_for(&d, &y)?, &t, &y, &search)?;
    Ok(found.into_iter().map(|s| s.into_iter().collect()).collect())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdentifyRequest {
    #[serde(flatten)]
    pub source: GraphSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default)]
    pub set: Vec<String>,
}

pub fn identify(req: &IdentifyRequest) -> Result<AdjustmentVerdict> {
    let d = req.source.resolve()?;
    let (t, y) = endpoints(&d, req.treatment.as_deref(), req.outcome.as_deref())?;
    let set: BTreeSet<String> = req.set.iter().cloned().collect();
    backdoor_check(&compact_for(&d, &y)?, &t, &y, &set)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TraceRequest {
    #[serde(flatten)]
    pub source: GraphSource,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub given: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<CoefficientAssignment>,
}

pub fn trace_path(req: &TraceRequest) -> Result<TraceResult> {
    let d = req.source.resolve()?;
    trace(&d, &req.from, &req.to, &req.given, req.assignment.as_ref())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AlignRequest {
    #[serde(flatten)]
    pub source: GraphSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    /// All estimators when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Standard plans of the minimal sufficient sets when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plans: Option<Vec<LabelledPlan>>,
}

pub fn align(req: &AlignRequest) -> Result<Vec<AlignRow>> {
    let d = req.source.resolve()?;
    let (t, y) = endpoints(&d, req.treatment.as_deref(), req.outcome.as_deref())?;
    let kinds = req.estimators.clone().unwrap_or_else(|| EstimatorKind::ALL.to_vec());
    align_table(&d, &t, &y, &kinds, req.plans.as_deref())
}

fn default_layout() -> Layout {
    Layout::Long
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub scenario: String,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_layout")]
    pub layout: Layout,
}

/// Simulated panel as CSV text.
pub fn simulate_csv(req: &SimulateRequest) -> Result<String> {
    if req.n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let spec = ScenarioSpec::load(&req.scenario)?;
    let data = simulate(&spec, req.n, req.mode, req.seed)?;
    data.to_layout(req.layout).to_csv_string()
}

pub fn bench(config: &BenchConfig, cancel: &AtomicBool) -> Result<BiasReport> {
    run_benchmark_with_cancel(config, cancel)
}
