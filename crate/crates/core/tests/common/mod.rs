//! Goldens and independent oracles shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use std::collections::BTreeSet;

use didgraph::datagen::PanelDataset;
use didgraph::graph::{CausalDiagram, Role};
use didgraph::scm::CoefficientAssignment;
use nalgebra::DMatrix;

pub type Edge = (&'static str, &'static str, &'static str);

/// Compact edge lists `(src, dst, coefficient)` per scenario and change node.
pub const COMPACT_GOLDENS: &[(&str, &str, &[Edge])] = &[
    ("fig1", "dY", &[("A1", "dY", "a"), ("S0", "dY", "e-d"), ("V0", "A1", "b")]),
    ("fig4", "dY", &[("A1", "dY", "a"), ("S0", "dY", "e-d"), ("V0", "A1", "b"), ("W0", "A1", "g"), ("W0", "dY", "h-f")]),
    (
        "s5_1",
        "dY",
        &[
            ("A1", "dY", "a"),
            ("Q0", "Z1", "j"),
            ("S0", "dY", "e-d"),
            ("V0", "A1", "b"),
            ("W0", "A1", "g"),
            ("Z0", "W0", "i"),
            ("Z0", "Z1", "1"),
            ("Z0", "dY", "-h"),
            ("Z1", "dY", "h"),
        ],
    ),
    (
        "s5_2",
        "dY",
        &[
            ("A1", "dY", "a"),
            ("S0", "dY", "e-d"),
            ("V0", "A1", "b"),
            ("W0", "A1", "g"),
            ("Z0", "W0", "i"),
            ("Z0", "Z1", "j"),
            ("Z0", "dY", "-h"),
            ("Z1", "dY", "k"),
        ],
    ),
    (
        "s5_3_1",
        "dY",
        &[
            ("A1", "dY", "a"),
            ("S0", "dY", "e-d"),
            ("V0", "A1", "b"),
            ("W0", "A1", "g"),
            ("W0", "W1", "i"),
            ("W0", "dY", "-f"),
            ("W1", "dY", "h"),
        ],
    ),
    (
        "s5_3_2",
        "dY",
        &[
            ("A1", "dY", "a"),
            ("S0", "dY", "e-d"),
            ("V0", "A1", "b"),
            ("W0", "A1", "g"),
            ("W0", "W1", "k"),
            ("W0", "dY", "-f"),
            ("W1", "dY", "h"),
            ("Z0", "A1", "i"),
            ("Z0", "W1", "j"),
        ],
    ),
    (
        "s5_3_3",
        "dY",
        &[
            ("A1", "dY", "a"),
            ("S0", "dY", "e-d"),
            ("V0", "A1", "b"),
            ("V0", "W1", "i"),
            ("W0", "A1", "g"),
            ("W0", "W1", "j"),
            ("W0", "dY", "-f"),
            ("W1", "dY", "h"),
        ],
    ),
    (
        "s5_3_4",
        "dY",
        &[
            ("A1", "W1", "i"),
            ("A1", "dY", "a"),
            ("S0", "dY", "e-d"),
            ("V0", "A1", "b"),
            ("W0", "A1", "g"),
            ("W0", "W1", "j"),
            ("W0", "dY", "-f"),
            ("W1", "dY", "h"),
        ],
    ),
    (
        "s5_4",
        "dY1",
        &[
            ("A1", "dY1", "a"),
            ("S0", "dY1", "e-d"),
            ("V0", "A1", "b"),
            ("W0", "A1", "g"),
            ("W0", "W1", "i"),
            ("W0", "dY1", "-f"),
            ("W1", "W2", "j"),
            ("W1", "dY1", "h"),
        ],
    ),
    (
        "s5_4",
        "dY2",
        &[
            ("A1", "dY2", "a"),
            ("S0", "dY2", "l-d"),
            ("V0", "A1", "b"),
            ("W0", "A1", "g"),
            ("W0", "W1", "i"),
            ("W0", "dY2", "-f"),
            ("W1", "W2", "j"),
            ("W2", "dY2", "k"),
        ],
    ),
    (
        "s5_4_feedback",
        "dY1",
        &[
            ("A1", "A2", "p"),
            ("A1", "W1", "h"),
            ("A1", "dY1", "a"),
            ("A2", "W2", "m"),
            ("S0", "dY1", "e-d"),
            ("V0", "A1", "b"),
            ("V0", "A2", "b"),
            ("W0", "A1", "g"),
            ("W0", "W1", "j"),
            ("W0", "dY1", "-f"),
            ("W1", "A2", "l"),
            ("W1", "W2", "k"),
            ("W1", "dY1", "i"),
        ],
    ),
    (
        "s5_4_feedback",
        "dY2",
        &[
            ("A1", "A2", "p"),
            ("A1", "W1", "h"),
            ("A2", "W2", "m"),
            ("A2", "dY2", "a"),
            ("S0", "dY2", "q-d"),
            ("V0", "A1", "b"),
            ("V0", "A2", "b"),
            ("W0", "A1", "g"),
            ("W0", "W1", "j"),
            ("W0", "dY2", "-f"),
            ("W1", "A2", "l"),
            ("W1", "W2", "k"),
            ("W2", "dY2", "n"),
        ],
    ),
];

/// Regression identities `(scenario, outcome, treatment, controls, coefficient)`.
pub const IDENTITIES: &[(&str, &str, &str, &[&str], &str)] = &[
    ("s5_2", "dY", "A1", &["W0"], "a"),
    ("s5_2", "dY", "A1", &["Z0"], "a"),
    ("s5_3_1", "dY", "A1", &["W0"], "a"),
    ("s5_3_2", "dY", "A1", &["W0", "Z0"], "a"),
    ("s5_3_2", "dY", "A1", &["W0", "W1"], "a"),
    ("s5_3_3", "dY", "A1", &["W0", "W1"], "a"),
    ("s5_3_4", "dY", "A1", &["W0"], "a + i*h"),
    ("s5_4", "dY1", "A1", &["W0"], "a"),
    ("s5_4", "dY2", "A1", &["W0"], "a"),
    ("s5_4_feedback", "dY1", "A1", &["W0"], "a + h*i"),
    ("s5_4_feedback", "dY2", "A2", &["W0", "W1"], "a + m*n"),
];

/// Minimal sufficient sets `(scenario, treatment, outcome, sets)`.
pub const MINIMAL_SETS: &[(&str, &str, &str, &[&[&str]])] = &[
    ("fig4", "A1", "dY", &[&["W0"]]),
    ("s5_1", "A1", "dY", &[&[]]),
    ("s5_2", "A1", "dY", &[&["W0"], &["Z0"]]),
    ("s5_3_1", "A1", "dY", &[&["W0"]]),
    ("s5_3_2", "A1", "dY", &[&["W0", "Z0"], &["W0", "W1"]]),
    ("s5_3_3", "A1", "dY", &[&["W0", "W1"]]),
    ("s5_3_4", "A1", "dY", &[&["W0"]]),
    ("s5_4", "A1", "dY1", &[&["W0"]]),
    ("s5_4", "A1", "dY2", &[&["W0"]]),
    ("s5_4_feedback", "A1", "dY1", &[&["W0"]]),
    ("s5_4_feedback", "A2", "dY2", &[&["W0", "W1"]]),
];

pub fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn edge_list(d: &CausalDiagram) -> Vec<(String, String, String)> {
    let mut out: Vec<_> = d
        .edges
        .iter()
        .map(|e| (e.src.clone(), e.dst.clone(), e.coeff.as_ref().map(|c| c.to_string()).unwrap_or_default()))
        .collect();
    out.sort();
    out
}

pub fn golden_list(edges: &[Edge]) -> Vec<(String, String, String)> {
    let mut out: Vec<_> = edges.iter().map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string())).collect();
    out.sort();
    out
}

/// Model covariance from `(I - B)^-1 Omega (I - B)^-T`, with each error
/// variance fixed so that stochastic nodes have unit variance. Rows follow
/// `diagram.nodes`.
pub fn covariance_oracle(diagram: &CausalDiagram, assignment: &CoefficientAssignment) -> DMatrix<f64> {
    let k = diagram.nodes.len();
    let pos = |name: &str| diagram.nodes.iter().position(|n| n.name == name).unwrap();
    let mut b = DMatrix::<f64>::zeros(k, k);
    for e in &diagram.edges {
        let poly = e.coeff.as_ref().unwrap().to_poly().unwrap();
        b[(pos(&e.dst), pos(&e.src))] = poly.eval(&assignment.values).unwrap();
    }
    let inv = (DMatrix::<f64>::identity(k, k) - &b).try_inverse().unwrap();
    let mut omega = DMatrix::<f64>::zeros(k, k);
    let mut fixed = vec![false; k];
    while fixed.iter().any(|f| !f) {
        let sigma = &inv * &omega * inv.transpose();
        let v = (0..k)
            .find(|&v| !fixed[v] && (0..k).all(|p| b[(v, p)] == 0.0 || fixed[p]))
            .expect("acyclic");
        let node = &diagram.nodes[v];
        let w = if let Some(w) = assignment.error_variances.get(&node.name) {
            *w
        } else if node.role == Role::OutcomeDelta {
            0.0
        } else {
            let row = b.row(v);
            1.0 - (row * &sigma * row.transpose())[(0, 0)]
        };
        omega[(v, v)] = w;
        fixed[v] = true;
    }
    &inv * &omega * inv.transpose()
}

/// Difference of mean outcome changes between treated and control units.
pub fn plain_did(data: &PanelDataset, period: i64) -> f64 {
    let a = data.treatment_at(period).unwrap();
    let dy = data.outcome_change(period).unwrap();
    let mean = |keep: bool| {
        let xs: Vec<f64> = dy.iter().zip(a).filter(|(_, t)| (**t != 0.0) == keep).map(|(y, _)| *y).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    mean(true) - mean(false)
}
