//! Covariance algebra for linear structural models: trek sums, implied
//! covariance matrices, partial regression coefficients and randomized
//! identity testing.

pub mod trek;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalDiagram, Dag, Role};
use crate::poly::{PolyExpr, RationalExpr};

pub use trek::{trek_covariance, treks, PathCache, Trek, TREK_CAP};

/// Largest condition number accepted by [`partial_regression`].
pub const MAX_CONDITION: f64 = 1e12;
/// Half-width of the uniform range used for random coefficient draws.
pub const DRAW_RANGE: f64 = 0.4;
/// Draws attempted per trial before giving up on admissibility.
pub const MAX_DRAWS: usize = 10_000;

/// Numeric values for edge symbols, plus optional fixed error variances.
///
/// Nodes without an override get error variance `1 - explained`, which makes
/// them unit-variance.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CoefficientAssignment {
    pub values: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub error_variances: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssignmentRepr {
    Full {
        values: BTreeMap<String, f64>,
        #[serde(default)]
        error_variances: BTreeMap<String, f64>,
    },
    Plain(BTreeMap<String, f64>),
}

impl<'de> Deserialize<'de> for CoefficientAssignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match AssignmentRepr::deserialize(d)? {
            AssignmentRepr::Full { values, error_variances } => Self { values, error_variances },
            AssignmentRepr::Plain(values) => Self { values, error_variances: BTreeMap::new() },
        })
    }
}

impl CoefficientAssignment {
    pub fn new(values: BTreeMap<String, f64>) -> Self {
        Self { values, error_variances: BTreeMap::new() }
    }

    pub fn uniform(symbols: impl IntoIterator<Item = String>, value: f64) -> Self {
        Self::new(symbols.into_iter().map(|s| (s, value)).collect())
    }

    pub fn with(mut self, symbol: &str, value: f64) -> Self {
        self.values.insert(symbol.to_string(), value);
        self
    }

    pub fn eval(&self, p: &PolyExpr) -> Result<f64> {
        p.eval(&self.values)
    }
}

/// Node-indexed model covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedCovariance {
    pub names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl ImpliedCovariance {
    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn get(&self, u: &str, v: &str) -> Result<f64> {
        Ok(self.matrix[self.index(u)?][self.index(v)?])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let k = self.names.len();
        let m = DMatrix::from_fn(k, k, |i, j| self.matrix[i][j]);
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates every edge coefficient, indexed like `dag.parents`.
pub fn numeric_parents(dag: &Dag, assignment: &CoefficientAssignment) -> Result<Vec<Vec<(usize, f64)>>> {
    (0..dag.len())
        .map(|v| {
            dag.parents(v)
                .iter()
                .map(|(p, c)| Ok((*p, assignment.eval(c)?)))
                .collect()
        })
        .collect()
}

/// Error variance of a node given the variance its parents explain.
pub fn error_variance(diagram: &CausalDiagram, name: &str, explained: f64, assignment: &CoefficientAssignment) -> Result<f64> {
    if let Some(w) = assignment.error_variances.get(name) {
        if *w < 0.0 {
            return Err(Error::InvalidArgument(format!("negative error variance for `{name}`")));
        }
        return Ok(*w);
    }
    let role = diagram.require_node(name)?.role;
    if role == Role::OutcomeDelta {
        return Ok(0.0);
    }
    let omega = 1.0 - explained;
    if omega <= 0.0 || !omega.is_finite() {
        return Err(Error::Inadmissible { node: name.to_string(), explained });
    }
    Ok(omega)
}

/// Model covariance by propagating covariances in topological order.
pub fn implied_covariance(diagram: &CausalDiagram, assignment: &CoefficientAssignment) -> Result<ImpliedCovariance> {
    solve_model(diagram, assignment).map(|(sigma, _)| sigma)
}

/// Implied covariance together with each node's structural error variance
/// (indexed like the diagram's nodes).
pub fn solve_model(diagram: &CausalDiagram, assignment: &CoefficientAssignment) -> Result<(ImpliedCovariance, Vec<f64>)> {
    let dag = diagram.index()?;
    let beta = numeric_parents(&dag, assignment)?;
    let k = dag.len();
    let mut s = vec![vec![0.0; k]; k];
    let mut omegas = vec![0.0; k];
    let mut done: Vec<usize> = Vec::with_capacity(k);
    for &v in dag.topo_order() {
        for &u in &done {
            let c: f64 = beta[v].iter().map(|(p, b)| b * s[u][*p]).sum();
            s[u][v] = c;
            s[v][u] = c;
        }
        let mut explained = 0.0;
        for (p, bp) in &beta[v] {
            for (q, bq) in &beta[v] {
                explained += bp * bq * s[*p][*q];
            }
        }
        let omega = error_variance(diagram, dag.name(v), explained, assignment)?;
        s[v][v] = explained + omega;
        omegas[v] = omega;
        done.push(v);
    }
    Ok((ImpliedCovariance { names: dag.names().to_vec(), matrix: s }, omegas))
}

/// Symbolic trek products for every node pair, grouped by trek top.
pub struct TrekTable {
    dag: Dag,
    // pairs[u][v] for u < v: (top, product)
    pairs: Vec<Vec<Vec<(usize, PolyExpr)>>>,
}

impl TrekTable {
    pub fn build(diagram: &CausalDiagram) -> Result<Self> {
        let dag = diagram.index()?;
        let k = dag.len();
        let mut pairs = vec![vec![Vec::new(); k]; k];
        let mut cache = PathCache::new(&dag, TREK_CAP);
        for u in 0..k {
            for v in (u + 1)..k {
                let ts = treks(&dag, u, v, &mut cache)?;
                pairs[u][v] = ts.iter().map(|t| (t.top, t.product(&dag))).collect();
            }
        }
        drop(cache);
        Ok(Self { dag, pairs })
    }

    /// Covariance matrix from trek sums, weighting each trek by the variance of
    /// its top. Node variances are accumulated in topological order.
    pub fn evaluate(&self, diagram: &CausalDiagram, assignment: &CoefficientAssignment) -> Result<ImpliedCovariance> {
        let dag = &self.dag;
        let k = dag.len();
        let beta = numeric_parents(dag, assignment)?;
        let mut values: Vec<Vec<Vec<(usize, f64)>>> = vec![vec![Vec::new(); k]; k];
        for u in 0..k {
            for v in (u + 1)..k {
                values[u][v] = self.pairs[u][v]
                    .iter()
                    .map(|(t, p)| Ok((*t, assignment.eval(p)?)))
                    .collect::<Result<_>>()?;
            }
        }
        let mut var = vec![0.0; k];
        let cov = |var: &[f64], u: usize, v: usize| -> f64 {
            if u == v {
                return var[u];
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            values[a][b].iter().map(|(t, x)| x * var[*t]).sum()
        };
        for &v in dag.topo_order() {
            let mut explained = 0.0;
            for (p, bp) in &beta[v] {
                for (q, bq) in &beta[v] {
                    explained += bp * bq * cov(&var, *p, *q);
                }
            }
            var[v] = explained + error_variance(diagram, dag.name(v), explained, assignment)?;
        }
        let matrix = (0..k).map(|u| (0..k).map(|v| cov(&var, u, v)).collect()).collect();
        Ok(ImpliedCovariance { names: dag.names().to_vec(), matrix })
    }
}

/// Coefficient on `a` in the population projection of `y` on `a` and `z`.
pub fn partial_regression(sigma: &ImpliedCovariance, y: &str, a: &str, z: &[String]) -> Result<f64> {
    let mut regs = vec![sigma.index(a)?];
    for n in z {
        regs.push(sigma.index(n)?);
    }
    let yi = sigma.index(y)?;
    let k = regs.len();
    let m = DMatrix::from_fn(k, k, |i, j| sigma.matrix[regs[i]][regs[j]]);
    let rhs = DVector::from_fn(k, |i, _| sigma.matrix[regs[i]][yi]);
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond < MAX_CONDITION) {
        return Err(Error::Singular(cond));
    }
    let beta = m.lu().solve(&rhs).ok_or(Error::Singular(cond))?;
    Ok(beta[0])
}

/// Closed-form partial regression coefficient for at most one control, under
/// unit variances.
pub fn cramer_symbolic(diagram: &CausalDiagram, y: &str, a: &str, z: Option<&str>) -> Result<RationalExpr> {
    let s_ya = trek_covariance(diagram, y, a)?;
    match z {
        None => Ok(RationalExpr::new(s_ya, PolyExpr::one())),
        Some(z) => {
            let s_yz = trek_covariance(diagram, y, z)?;
            let s_az = trek_covariance(diagram, a, z)?;
            let num = &s_ya - &(&s_yz * &s_az);
            let den = &PolyExpr::one() - &(&s_az * &s_az);
            Ok(RationalExpr::new(num, den))
        }
    }
}

/// Result of tracing the covariance (or partial regression coefficient)
/// between two nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub from: String,
    pub to: String,
    pub given: Vec<String>,
    /// Symbolic form; absent when more than one node is conditioned on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

/// Covariance of `from` and `to` by path tracing, or the coefficient on `from`
/// when regressing `to` on `from` and `given`. With an assignment the numeric
/// value is filled in.
pub fn trace(
    diagram: &CausalDiagram,
    from: &str,
    to: &str,
    given: &[String],
    assignment: Option<&CoefficientAssignment>,
) -> Result<TraceResult> {
    let symbolic = match given {
        [] => Some(RationalExpr::new(trek_covariance(diagram, to, from)?, PolyExpr::one())),
        [z] => Some(cramer_symbolic(diagram, to, from, Some(z))?),
        _ => {
            for z in given {
                diagram.require_node(z)?;
            }
            None
        }
    };
    let value = match (assignment, &symbolic) {
        (None, _) => None,
        (Some(a), Some(r)) => Some(r.eval(&a.values)?),
        (Some(a), None) => Some(partial_regression(&implied_covariance(diagram, a)?, to, from, given)?),
    };
    if symbolic.is_none() && value.is_none() {
        return Err(Error::InvalidArgument(
            "conditioning on more than one node needs a coefficient assignment".into(),
        ));
    }
    Ok(TraceResult {
        from: from.to_string(),
        to: to.to_string(),
        given: given.to_vec(),
        expression: symbolic.map(|r| r.to_string()),
        value,
    })
}

/// Draws a random assignment over the diagram's symbols, rejecting
/// inadmissible draws. Error-variance overrides are kept as given.
pub fn random_admissible(
    diagram: &CausalDiagram,
    rng: &mut impl Rng,
    error_variances: &BTreeMap<String, f64>,
) -> Result<(CoefficientAssignment, ImpliedCovariance)> {
    let symbols = diagram.symbols()?;
    for _ in 0..MAX_DRAWS {
        let values = symbols
            .iter()
            .map(|s| (s.clone(), rng.gen_range(-DRAW_RANGE..=DRAW_RANGE)))
            .collect();
        let assignment = CoefficientAssignment { values, error_variances: error_variances.clone() };
        match implied_covariance(diagram, &assignment) {
            Ok(sigma) => return Ok((assignment, sigma)),
            Err(Error::Inadmissible { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoAdmissible(MAX_DRAWS))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityOptions {
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    #[serde(default)]
    pub error_variances: BTreeMap<String, f64>,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        Self { trials: 20, seed: 0x5eed, tolerance: 1e-8, error_variances: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub holds: bool,
    pub trials: usize,
    pub max_abs_diff: f64,
}

/// Randomized polynomial identity test of `partial_regression(y, a | z) == claim`.
pub fn identity_check(
    diagram: &CausalDiagram,
    y: &str,
    a: &str,
    z: &[String],
    claim: &PolyExpr,
    options: &IdentityOptions,
) -> Result<IdentityReport> {
    if options.trials == 0 {
        return Err(Error::InvalidArgument("identity check needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..options.trials {
        let (assignment, sigma) = random_admissible(diagram, &mut rng, &options.error_variances)?;
        let beta = partial_regression(&sigma, y, a, z)?;
        let expected = assignment.eval(claim)?;
        worst = worst.max((beta - expected).abs());
    }
    Ok(IdentityReport { holds: worst <= options.tolerance, trials: options.trials, max_abs_diff: worst })
}
