//! The shipped scenario registry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalDiagram, Coeff, EdgeSpec, Form, NodeSpec, Role};
use crate::poly::PolyExpr;
use crate::scm::{identity_check, implied_covariance, CoefficientAssignment, IdentityOptions};
use crate::transform::{build_delta_nodes, compact_all};

/// Stable public scenario identifiers.
pub const SCENARIO_NAMES: [&str; 10] = [
    "fig1",
    "fig4",
    "s5_1",
    "s5_2",
    "s5_3_1",
    "s5_3_2",
    "s5_3_3",
    "s5_3_4",
    "s5_4",
    "s5_4_feedback",
];

/// Default value of every structural coefficient.
pub const DEFAULT_COEFFICIENT: f64 = 0.35;

/// One causal contrast a scenario is built to study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimand {
    pub treatment: String,
    pub outcome: String,
    pub period: i64,
    /// Total effect of the treatment on the outcome change.
    pub truth: PolyExpr,
    /// A sufficient set used to validate `truth` when the scenario loads.
    pub sufficient_set: Vec<String>,
    /// Direct effect, for scenarios where conditioning on a mediator targets it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<PolyExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub description: String,
    /// Natural form, including the outcome-change nodes.
    pub diagram: CausalDiagram,
    pub assignment: CoefficientAssignment,
    pub estimands: Vec<Estimand>,
}

impl ScenarioSpec {
    /// Builds a shipped scenario and validates its truths.
    pub fn load(name: &str) -> Result<Self> {
        let spec = build(name)?;
        spec.validate()?;
        Ok(spec)
    }

    /// All shipped scenarios, in registry order.
    pub fn all() -> Result<Vec<Self>> {
        SCENARIO_NAMES.iter().map(|n| Self::load(n)).collect()
    }

    pub fn compact(&self) -> Result<CausalDiagram> {
        compact_all(&self.diagram)
    }

    pub fn with_assignment(mut self, assignment: CoefficientAssignment) -> Result<Self> {
        self.assignment = assignment;
        implied_covariance(&self.diagram, &self.assignment)?;
        Ok(self)
    }

    pub fn estimand(&self, outcome: &str) -> Result<&Estimand> {
        self.estimands
            .iter()
            .find(|e| e.outcome == outcome)
            .ok_or_else(|| Error::UnknownNode(outcome.to_string()))
    }

    /// Checks admissibility of the shipped assignment and every truth polynomial.
    pub fn validate(&self) -> Result<()> {
        implied_covariance(&self.diagram, &self.assignment)?;
        let compact = self.compact()?;
        let options = IdentityOptions { error_variances: self.assignment.error_variances.clone(), ..IdentityOptions::default() };
        for e in &self.estimands {
            let report = identity_check(&compact, &e.outcome, &e.treatment, &e.sufficient_set, &e.truth, &options)?;
            if !report.holds {
                return Err(Error::Config(format!(
                    "scenario {}: truth {} for {} fails identity check (max deviation {:e})",
                    self.name, e.truth, e.outcome, report.max_abs_diff
                )));
            }
        }
        Ok(())
    }

    pub fn truth_value(&self, estimand: &Estimand) -> Result<f64> {
        self.assignment.eval(&estimand.truth)
    }
}

struct Builder {
    nodes: Vec<NodeSpec>,
    edges: Vec<EdgeSpec>,
}

fn period_of(name: &str) -> Option<i64> {
    let digits: String = name.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

impl Builder {
    fn new() -> Self {
        Self { nodes: Vec::new(), edges: Vec::new() }
    }

    fn node(&mut self, name: &str, role: Role) -> &mut Self {
        let observed = role != Role::LatentConfounder;
        self.nodes.push(NodeSpec::new(name, period_of(name), observed, role));
        self
    }

    fn nodes(&mut self, names: &[&str], role: Role) -> &mut Self {
        for n in names {
            self.node(n, role);
        }
        self
    }

    fn edge(&mut self, src: &str, dst: &str, label: &str) -> &mut Self {
        let coeff = match label.parse::<f64>() {
            Ok(x) => Coeff::Number(x),
            Err(_) => Coeff::Label(label.to_string()),
        };
        self.edges.push(EdgeSpec::new(src, dst, Some(coeff)));
        self
    }

    fn edges(&mut self, list: &[(&str, &str, &str)]) -> &mut Self {
        for (s, d, l) in list {
            self.edge(s, d, l);
        }
        self
    }

    /// Latent confounders, the treatment and outcome levels shared by every
    /// scenario, with `V0` equally confounding each outcome level.
    fn base(&mut self, outcomes: &[&str]) -> &mut Self {
        self.nodes(&["V0", "S0"], Role::LatentConfounder)
            .node("A1", Role::Treatment)
            .nodes(outcomes, Role::OutcomeLevel)
            .edges(&[("V0", "A1", "b"), ("S0", "Y0", "d"), ("S0", "Y1", "e"), ("A1", "Y1", "a")]);
        for y in outcomes {
            self.edge("V0", y, "c");
        }
        self
    }

    fn finish(&self) -> Result<CausalDiagram> {
        let natural = CausalDiagram { form: Form::Natural, nodes: self.nodes.clone(), edges: self.edges.clone() };
        build_delta_nodes(&natural, 0)
    }
}

fn poly(s: &str) -> PolyExpr {
    PolyExpr::parse(s).expect("static expression")
}

fn estimand(treatment: &str, outcome: &str, period: i64, truth: &str, set: &[&str]) -> Estimand {
    Estimand {
        treatment: treatment.into(),
        outcome: outcome.into(),
        period,
        truth: poly(truth),
        sufficient_set: set.iter().map(|s| s.to_string()).collect(),
        direct: None,
    }
}

fn assignment(diagram: &CausalDiagram, raised: &[(&str, f64)]) -> Result<CoefficientAssignment> {
    let mut a = CoefficientAssignment::uniform(diagram.symbols()?, DEFAULT_COEFFICIENT);
    for (s, v) in raised {
        a.values.insert(s.to_string(), *v);
    }
    Ok(a)
}

fn build(name: &str) -> Result<ScenarioSpec> {
    use Role::*;
    let mut b = Builder::new();
    let (description, estimands, raised): (&str, Vec<Estimand>, Vec<(&str, f64)>) = match name {
        "fig1" => {
            b.base(&["Y0", "Y1"]);
            ("equi-confounding by V0; no covariates", vec![estimand("A1", "dY", 1, "a", &[])], vec![])
        }
        "fig4" => {
            b.base(&["Y0", "Y1"])
                .node("W0", Covariate)
                .edges(&[("W0", "Y0", "f"), ("W0", "Y1", "h"), ("W0", "A1", "g")]);
            (
                "baseline covariate with time-varying effect on the outcome",
                vec![estimand("A1", "dY", 1, "a", &["W0"])],
                vec![("g", 0.5), ("h", 0.5)],
            )
        }
        "s5_1" => {
            b.base(&["Y0", "Y1"])
                .nodes(&["W0", "Z0", "Z1", "Q0"], Covariate)
                .edges(&[
                    ("W0", "Y0", "f"),
                    ("W0", "Y1", "f"),
                    ("W0", "A1", "g"),
                    ("Z0", "W0", "i"),
                    ("Z0", "Z1", "1"),
                    ("Z1", "Y1", "h"),
                    ("Z0", "Y0", "h"),
                    ("Q0", "Z1", "j"),
                ]);
            (
                "time-varying Z whose shock is independent of treatment; unadjusted contrast is unbiased",
                vec![estimand("A1", "dY", 1, "a", &[])],
                vec![("c", 0.2), ("g", 0.65), ("h", 0.2), ("i", 0.8), ("j", 1.5)],
            )
        }
        "s5_2" => {
            b.base(&["Y0", "Y1"])
                .nodes(&["W0", "Z0", "Z1"], Covariate)
                .edges(&[
                    ("W0", "Y0", "f"),
                    ("W0", "Y1", "f"),
                    ("W0", "A1", "g"),
                    ("Z0", "W0", "i"),
                    ("Z0", "Z1", "j"),
                    ("Z1", "Y1", "k"),
                    ("Z0", "Y0", "h"),
                ]);
            (
                "time-varying Z with changing effect on the outcome",
                vec![estimand("A1", "dY", 1, "a", &["W0"])],
                vec![("h", 0.5)],
            )
        }
        "s5_3_1" => {
            b.base(&["Y0", "Y1"])
                .nodes(&["W0", "W1"], Covariate)
                .edges(&[("W0", "Y0", "f"), ("W0", "A1", "g"), ("W0", "W1", "i"), ("W1", "Y1", "h")]);
            (
                "time-varying confounder W driven only by its past",
                vec![estimand("A1", "dY", 1, "a", &["W0"])],
                vec![("c", 0.5), ("g", 0.5)],
            )
        }
        "s5_3_2" => {
            b.base(&["Y0", "Y1"])
                .nodes(&["W0", "W1", "Z0"], Covariate)
                .edges(&[
                    ("W0", "Y0", "f"),
                    ("W0", "A1", "g"),
                    ("W0", "W1", "k"),
                    ("W1", "Y1", "h"),
                    ("Z0", "A1", "i"),
                    ("Z0", "W1", "j"),
                ]);
            (
                "time-varying W also driven by an observed baseline cause Z0 of treatment",
                vec![estimand("A1", "dY", 1, "a", &["W0", "W1"])],
                vec![("c", 0.5), ("g", 0.5), ("k", 0.05)],
            )
        }
        "s5_3_3" => {
            b.base(&["Y0", "Y1"])
                .nodes(&["W0", "W1"], Covariate)
                .edges(&[
                    ("W0", "Y0", "f"),
                    ("W0", "A1", "g"),
                    ("W0", "W1", "j"),
                    ("W1", "Y1", "h"),
                    ("V0", "W1", "i"),
                ]);
            (
                "time-varying W driven by the latent confounder V0",
                vec![estimand("A1", "dY", 1, "a", &["W0", "W1"])],
                vec![("g", 0.5)],
            )
        }
        "s5_3_4" => {
            b.base(&["Y0", "Y1"])
                .nodes(&["W0", "W1"], Covariate)
                .edges(&[
                    ("W0", "Y0", "f"),
                    ("W0", "A1", "g"),
                    ("W0", "W1", "j"),
                    ("W1", "Y1", "h"),
                    ("A1", "W1", "i"),
                ]);
            let mut e = estimand("A1", "dY", 1, "a + i*h", &["W0"]);
            e.direct = Some(poly("a"));
            ("time-varying W mediating part of the treatment effect", vec![e], vec![])
        }
        "s5_4" => {
            b.base(&["Y0", "Y1", "Y2"])
                .nodes(&["W0", "W1", "W2"], Covariate)
                .edges(&[
                    ("W0", "Y0", "f"),
                    ("W0", "A1", "g"),
                    ("W0", "W1", "i"),
                    ("W1", "Y1", "h"),
                    ("W1", "W2", "j"),
                    ("W2", "Y2", "k"),
                    ("A1", "Y2", "a"),
                    ("S0", "Y2", "l"),
                ]);
            (
                "three periods with a static treatment",
                vec![estimand("A1", "dY1", 1, "a", &["W0"]), estimand("A1", "dY2", 2, "a", &["W0"])],
                vec![("c", 0.5), ("g", 0.5)],
            )
        }
        "s5_4_feedback" => {
            b.nodes(&["V0", "S0"], LatentConfounder)
                .nodes(&["A1", "A2"], Treatment)
                .nodes(&["Y0", "Y1", "Y2"], OutcomeLevel)
                .nodes(&["W0", "W1", "W2"], Covariate)
                .edges(&[
                    ("V0", "A1", "b"),
                    ("V0", "A2", "b"),
                    ("V0", "Y0", "c"),
                    ("V0", "Y1", "c"),
                    ("V0", "Y2", "c"),
                    ("S0", "Y0", "d"),
                    ("S0", "Y1", "e"),
                    ("S0", "Y2", "q"),
                    ("A1", "Y1", "a"),
                    ("A2", "Y2", "a"),
                    ("A1", "W1", "h"),
                    ("W1", "Y1", "i"),
                    ("W0", "W1", "j"),
                    ("W0", "A1", "g"),
                    ("W0", "Y0", "f"),
                    ("A2", "W2", "m"),
                    ("W2", "Y2", "n"),
                    ("A1", "A2", "p"),
                    ("W1", "A2", "l"),
                    ("W1", "W2", "k"),
                ]);
            (
                "two treatment periods with treatment-confounder feedback through W1",
                vec![estimand("A1", "dY1", 1, "a + h*i", &["W0"]), estimand("A2", "dY2", 2, "a + m*n", &["W0", "W1"])],
                vec![("f", 0.5)],
            )
        }
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    let diagram = b.finish()?;
    let mut assignment = assignment(&diagram, &raised)?;
    if name == "s5_1" {
        // Z1 = Z0 + j*Q0 exactly: Z moves only through the shock Q0.
        assignment.error_variances = BTreeMap::from([("Z1".to_string(), 0.0)]);
    }
    Ok(ScenarioSpec { name: name.to_string(), description: description.to_string(), diagram, assignment, estimands })
}
