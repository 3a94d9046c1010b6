use std::collections::BTreeSet;

use super::{CausalDiagram, Dag};
use crate::error::{Error, Result};

/// Reachability ("Bayes ball") test: true iff every path between `x` and `y`
/// is blocked by `z`.
pub fn d_separated(
    diagram: &CausalDiagram,
    x: &BTreeSet<String>,
    y: &BTreeSet<String>,
    z: &BTreeSet<String>,
) -> Result<bool> {
    if let Some(shared) = x.intersection(y).next() {
        return Err(Error::InvalidArgument(format!("`{shared}` is in both node sets")));
    }
    let dag = diagram.index()?;
    let xs = dag.ids_of(x)?;
    let ys = dag.ids_of(y)?;
    let zs = dag.ids_of(z)?;
    Ok(dag.d_separated(&xs, &ys, &zs))
}

impl Dag {
    pub fn d_separated(&self, x: &[usize], y: &[usize], z: &[usize]) -> bool {
        let n = self.len();
        let mut in_z = vec![false; n];
        for &i in z {
            in_z[i] = true;
        }
        let mut in_y = vec![false; n];
        for &i in y {
            in_y[i] = true;
        }
        let anc_z = self.ancestors(z);
        // Direction flag: true when the ball arrived from a child (travelling up).
        let mut seen = vec![[false; 2]; n];
        let mut stack: Vec<(usize, bool)> = x.iter().map(|&i| (i, true)).collect();
        while let Some((v, up)) = stack.pop() {
            if std::mem::replace(&mut seen[v][up as usize], true) {
                continue;
            }
            if in_y[v] && !in_z[v] {
                return false;
            }
            if up {
                if !in_z[v] {
                    stack.extend(self.parents(v).iter().map(|(p, _)| (*p, true)));
                    stack.extend(self.children(v).iter().map(|&c| (c, false)));
                }
            } else {
                if !in_z[v] {
                    stack.extend(self.children(v).iter().map(|&c| (c, false)));
                }
                if anc_z[v] {
                    stack.extend(self.parents(v).iter().map(|(p, _)| (*p, true)));
                }
            }
        }
        true
    }

    /// Whether `a` and `b` are joined by an edge in either direction.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.children(a).contains(&b) || self.children(b).contains(&a)
    }
}

/// Checks one explicit path (consecutive nodes adjacent) for openness given `z`.
pub fn is_path_open(dag: &Dag, path: &[usize], z: &[usize]) -> bool {
    let mut in_z = vec![false; dag.len()];
    for &i in z {
        in_z[i] = true;
    }
    let anc_z = dag.ancestors(z);
    for w in path.windows(3) {
        let (a, v, b) = (w[0], w[1], w[2]);
        let into_from_a = dag.children(a).contains(&v);
        let into_from_b = dag.children(b).contains(&v);
        let collider = into_from_a && into_from_b;
        if collider {
            if !anc_z[v] {
                return false;
            }
        } else if in_z[v] {
            return false;
        }
    }
    true
}
