//! Trek enumeration for path-tracing covariances.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::{CausalDiagram, Dag};
use crate::poly::PolyExpr;

/// Default ceiling on the number of treks enumerated for one node pair.
pub const TREK_CAP: usize = 1_000_000;

/// Two directed paths from a common top, sharing no node besides the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trek {
    pub top: usize,
    /// Nodes from the top down to the first endpoint (inclusive).
    pub left: Vec<usize>,
    /// Nodes from the top down to the second endpoint (inclusive).
    pub right: Vec<usize>,
}

impl Trek {
    /// Product of the coefficients along both sides.
    pub fn product(&self, dag: &Dag) -> PolyExpr {
        let mut acc = PolyExpr::one();
        for side in [&self.left, &self.right] {
            for w in side.windows(2) {
                acc = &acc * dag.coeff(w[0], w[1]).expect("trek follows edges");
            }
        }
        acc
    }

    pub fn node_names(&self, dag: &Dag) -> Vec<String> {
        let mut nodes: Vec<String> = self.left.iter().rev().map(|&i| dag.name(i).to_string()).collect();
        nodes.extend(self.right.iter().skip(1).map(|&i| dag.name(i).to_string()));
        nodes
    }
}

/// Memoized enumerator of directed paths between node pairs.
pub struct PathCache<'a> {
    dag: &'a Dag,
    memo: HashMap<(usize, usize), Vec<Vec<usize>>>,
    cap: usize,
}

impl<'a> PathCache<'a> {
    pub fn new(dag: &'a Dag, cap: usize) -> Self {
        Self { dag, memo: HashMap::new(), cap }
    }

    /// All directed paths `from -> ... -> to`, each listing its nodes in order.
    pub fn paths(&mut self, from: usize, to: usize) -> Result<&[Vec<usize>]> {
        if !self.memo.contains_key(&(from, to)) {
            let paths = if from == to {
                vec![vec![from]]
            } else {
                let mut out = Vec::new();
                let children: Vec<usize> = self.dag.children(from).to_vec();
                for c in children {
                    let sub = self.paths(c, to)?.to_vec();
                    for p in sub {
                        let mut full = Vec::with_capacity(p.len() + 1);
                        full.push(from);
                        full.extend(p);
                        out.push(full);
                        if out.len() > self.cap {
                            return Err(Error::TrekOverflow(self.cap));
                        }
                    }
                }
                out
            };
            self.memo.insert((from, to), paths);
        }
        Ok(&self.memo[&(from, to)])
    }
}

/// Every trek between `u` and `v`; for `u == v` only the trivial trek.
pub fn treks(dag: &Dag, u: usize, v: usize, cache: &mut PathCache<'_>) -> Result<Vec<Trek>> {
    if u == v {
        return Ok(vec![Trek { top: u, left: vec![u], right: vec![u] }]);
    }
    let anc_u = dag.ancestors(&[u]);
    let anc_v = dag.ancestors(&[v]);
    let mut out = Vec::new();
    for &top in dag.topo_order() {
        if !(anc_u[top] && anc_v[top]) {
            continue;
        }
        let lefts = cache.paths(top, u)?.to_vec();
        let rights = cache.paths(top, v)?.to_vec();
        for l in &lefts {
            for r in &rights {
                let disjoint = l.iter().skip(1).all(|x| !r[1..].contains(x));
                if disjoint {
                    out.push(Trek { top, left: l.clone(), right: r.clone() });
                    if out.len() > cache.cap {
                        return Err(Error::TrekOverflow(cache.cap));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Symbolic covariance of `u` and `v` under unit variances.
pub fn trek_covariance(diagram: &CausalDiagram, u: &str, v: &str) -> Result<PolyExpr> {
    let dag = diagram.index()?;
    let (ui, vi) = (dag.id(u)?, dag.id(v)?);
    if ui == vi {
        return Ok(PolyExpr::one());
    }
    let mut cache = PathCache::new(&dag, TREK_CAP);
    let mut acc = PolyExpr::zero();
    for t in treks(&dag, ui, vi, &mut cache)? {
        acc = &acc + &t.product(&dag);
    }
    Ok(acc)
}
