//! Least squares, logistic and multinomial-logit fitting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every numerical tolerance used by the fitting kernels and estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative size of an R diagonal entry below which a column counts as dependent.
    pub pivot: f64,
    /// Convergence threshold on the gradient of the mean log-likelihood.
    pub gradient: f64,
    pub max_iterations: usize,
    /// Coefficient norm above which a logit fit is declared separated.
    pub separation_norm: f64,
    /// Diagonal jitter added when a Hessian is not numerically positive definite.
    pub ridge: f64,
    /// Fitted propensities must lie in `(positivity, 1 - positivity)`.
    pub positivity: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    pivot: 1e-10,
    gradient: 1e-8,
    max_iterations: 100,
    separation_norm: 1e4,
    ridge: 1e-10,
    positivity: 1e-6,
};

/// Column-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidArgument("column names and columns differ in count".into()));
        }
        let n = columns.first().map(Vec::len).unwrap_or(0);
        for (i, (name, col)) in names.iter().zip(&columns).enumerate() {
            if names[..i].contains(name) {
                return Err(Error::NameCollision(name.clone()));
            }
            if col.len() != n {
                return Err(Error::InvalidArgument(format!("column `{name}` has {} rows, expected {n}", col.len())));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name.clone()));
            }
        }
        Ok(Self { names, columns })
    }

    /// A design with only an intercept column of length `n`.
    pub fn intercept(n: usize) -> Self {
        Self { names: vec!["(intercept)".into()], columns: vec![vec![1.0; n]] }
    }

    /// Appends a column.
    pub fn with(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        let mut names = std::mem::take(&mut self.names);
        let mut columns = std::mem::take(&mut self.columns);
        names.push(name.to_string());
        columns.push(values);
        Self::new(names, columns)
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map(Vec::len).unwrap_or(0)
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    /// Keeps the rows where `mask` is true.
    pub fn select_rows(&self, mask: &[bool]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| c.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect())
            .collect();
        Self { names: self.names.clone(), columns }
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| self.columns[j][i])
    }

    /// `X * beta`.
    pub fn predict(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        for (col, b) in self.columns.iter().zip(beta) {
            for (o, x) in out.iter_mut().zip(col) {
                *o += b * x;
            }
        }
        out
    }

    /// `X' v`.
    fn t_mul(&self, v: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|c| c.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Weighted residual sum of squares (least squares) or mean log-likelihood (logit fits).
    pub objective: f64,
    /// Objective at the start and after every accepted step.
    pub path: Vec<f64>,
}

impl FitResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Weighted least squares by Householder QR.
pub fn ols(x: &DesignMatrix, y: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < p || p == 0 {
        return Err(Error::TooFewRows { rows: n, cols: p });
    }
    if y.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::InvalidArgument("response or weights length differs from the design".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response".into()));
    }
    if let Some(w) = weights {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
    }
    let root_w: Vec<f64> = match weights {
        Some(w) => w.iter().map(|v| v.sqrt()).collect(),
        None => vec![1.0; n],
    };
    let xw = DMatrix::from_fn(n, p, |i, j| x.columns[j][i] * root_w[i]);
    let yw = DVector::from_fn(n, |i, _| y[i] * root_w[i]);
    let col_norms: Vec<f64> = (0..p).map(|j| xw.column(j).norm()).collect();
    let qr = xw.qr();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)].abs() <= TOLERANCES.pivot * col_norms[j].max(f64::MIN_POSITIVE) || col_norms[j] == 0.0 {
            return Err(Error::RankDeficient(x.names[j].clone()));
        }
    }
    let mut qty = yw;
    qr.q_tr_mul(&mut qty);
    let qty = qty.rows(0, p).into_owned();
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(x.names[p - 1].clone()))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let fitted = x.predict(&coefficients);
    let wres: Vec<f64> = (0..n).map(|i| (y[i] - fitted[i]) * root_w[i] * root_w[i]).collect();
    let ssr = (0..n).map(|i| (y[i] - fitted[i]).powi(2) * root_w[i] * root_w[i]).sum();
    Ok(FitResult {
        names: x.names.clone(),
        coefficients,
        converged: true,
        iterations: 1,
        gradient_norm: norm(&x.t_mul(&wres)),
        objective: ssr,
        path: vec![ssr],
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean Bernoulli log-likelihood at linear predictor `eta`.
pub fn logistic_loglik(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(e, yi)| yi * e - softplus(*e)).sum::<f64>() / eta.len() as f64
}

/// Step acceptance with slack for rounding in the summed log-likelihood.
fn improves(candidate: f64, current: f64) -> bool {
    candidate >= current - LOGLIK_SLACK * current.abs().max(1.0)
}

/// Relative slack below which a log-likelihood decrease counts as rounding.
pub const LOGLIK_SLACK: f64 = 1e-12;

/// Solves `h * step = g`, adding ridge jitter if `h` is not positive definite.
fn newton_step(h: DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let k = g.len();
    let rhs = DVector::from_column_slice(g);
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(&rhs).iter().copied().collect());
    }
    let jittered = h + DMatrix::identity(k, k) * TOLERANCES.ridge;
    jittered.cholesky().map(|ch| ch.solve(&rhs).iter().copied().collect())
}

/// Logistic regression by iteratively reweighted least squares (Newton steps
/// with step halving).
pub fn logistic(x: &DesignMatrix, y: &[f64]) -> Result<FitResult> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < p || p == 0 {
        return Err(Error::TooFewRows { rows: n, cols: p });
    }
    if y.len() != n || y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidArgument("logistic response must be 0/1 with one entry per row".into()));
    }
    let ones = y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::OneClass);
    }
    let nf = n as f64;
    let xm = x.matrix();
    let mut beta = vec![0.0; p];
    let mut eta = x.predict(&beta);
    let mut ll = logistic_loglik(&eta, y);
    let mut path = vec![ll];
    let mut grad_norm = f64::INFINITY;
    for iter in 0..=TOLERANCES.max_iterations {
        let prob: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let resid: Vec<f64> = y.iter().zip(&prob).map(|(yi, pi)| yi - pi).collect();
        let grad: Vec<f64> = x.t_mul(&resid).iter().map(|g| g / nf).collect();
        grad_norm = norm(&grad);
        if resid.iter().all(|r| r.abs() < 1e-6) {
            return Err(Error::Separation(norm(&beta)));
        }
        if grad_norm <= TOLERANCES.gradient {
            return Ok(FitResult { names: x.names.clone(), coefficients: beta, converged: true, iterations: iter, gradient_norm: grad_norm, objective: ll, path });
        }
        if iter == TOLERANCES.max_iterations {
            break;
        }
        let w: Vec<f64> = prob.iter().map(|q| q * (1.0 - q) / nf).collect();
        let mut xw = xm.clone();
        for (i, wi) in w.iter().enumerate() {
            xw.row_mut(i).scale_mut(*wi);
        }
        let h = xm.transpose() * xw;
        let step = newton_step(h, &grad).ok_or_else(|| Error::RankDeficient(x.names[p - 1].clone()))?;
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_eta = x.predict(&cand);
            let cand_ll = logistic_loglik(&cand_eta, y);
            if improves(cand_ll, ll) || t < 1e-10 {
                if improves(cand_ll, ll) {
                    beta = cand;
                    eta = cand_eta;
                    ll = cand_ll;
                    path.push(ll);
                }
                break;
            }
            t *= 0.5;
        }
        if norm(&beta) > TOLERANCES.separation_norm {
            return Err(Error::Separation(norm(&beta)));
        }
    }
    Ok(FitResult {
        names: x.names.clone(),
        coefficients: beta,
        converged: false,
        iterations: TOLERANCES.max_iterations,
        gradient_norm: grad_norm,
        objective: ll,
        path,
    })
}

/// Fitted probabilities `P(y = 1 | x)`.
pub fn logistic_predict(x: &DesignMatrix, fit: &FitResult) -> Vec<f64> {
    x.predict(&fit.coefficients).into_iter().map(sigmoid).collect()
}

/// Class probabilities for a multinomial logit with class 1 as reference.
/// `beta[k]` holds the coefficients of class `k + 2`.
fn softmax_rows(x: &DesignMatrix, beta: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let etas: Vec<Vec<f64>> = beta.iter().map(|b| x.predict(b)).collect();
    (0..x.nrows())
        .map(|i| {
            let mut logits = Vec::with_capacity(beta.len() + 1);
            logits.push(0.0);
            logits.extend(etas.iter().map(|e| e[i]));
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / s).collect()
        })
        .collect()
}

fn multinomial_loglik(probs: &[Vec<f64>], g: &[usize]) -> f64 {
    probs.iter().zip(g).map(|(p, gi)| p[gi - 1].max(f64::MIN_POSITIVE).ln()).sum::<f64>() / g.len() as f64
}

fn unflatten(theta: &[f64], p: usize) -> Vec<Vec<f64>> {
    theta.chunks(p).map(<[f64]>::to_vec).collect()
}

/// Multinomial logit over classes `1..=k` (class 1 is the reference), by
/// Newton steps with backtracking line search. Coefficients are named
/// `<class>:<column>`.
pub fn multinomial(x: &DesignMatrix, g: &[usize], k: usize) -> Result<FitResult> {
    let (n, p) = (x.nrows(), x.ncols());
    if k < 2 {
        return Err(Error::InvalidArgument("multinomial fit needs at least two classes".into()));
    }
    if n < p || p == 0 {
        return Err(Error::TooFewRows { rows: n, cols: p });
    }
    if g.len() != n || g.iter().any(|c| *c < 1 || *c > k) {
        return Err(Error::InvalidArgument(format!("class labels must lie in 1..={k}")));
    }
    for c in 1..=k {
        if !g.contains(&c) {
            return Err(Error::EmptyClass(c));
        }
    }
    let nf = n as f64;
    let xm = x.matrix();
    let q = (k - 1) * p;
    let mut theta = vec![0.0; q];
    let mut probs = softmax_rows(x, &unflatten(&theta, p));
    let mut ll = multinomial_loglik(&probs, g);
    let mut path = vec![ll];
    let names: Vec<String> = (2..=k).flat_map(|c| x.names.iter().map(move |nm| format!("{c}:{nm}"))).collect();
    let mut grad_norm = f64::INFINITY;
    for iter in 0..=TOLERANCES.max_iterations {
        let mut grad = vec![0.0; q];
        for c in 0..(k - 1) {
            let resid: Vec<f64> = (0..n).map(|i| f64::from(g[i] == c + 2) - probs[i][c + 1]).collect();
            for (j, v) in x.t_mul(&resid).into_iter().enumerate() {
                grad[c * p + j] = v / nf;
            }
        }
        grad_norm = norm(&grad);
        if grad_norm <= TOLERANCES.gradient {
            return Ok(FitResult { names, coefficients: theta, converged: true, iterations: iter, gradient_norm: grad_norm, objective: ll, path });
        }
        if iter == TOLERANCES.max_iterations {
            break;
        }
        let mut h = DMatrix::<f64>::zeros(q, q);
        for c in 0..(k - 1) {
            for d in c..(k - 1) {
                let mut xw = xm.clone();
                for (i, mut row) in xw.row_iter_mut().enumerate() {
                    let pc = probs[i][c + 1];
                    let w = if c == d { pc * (1.0 - pc) } else { -pc * probs[i][d + 1] };
                    row *= w / nf;
                }
                let block = xm.tr_mul(&xw);
                h.view_mut((c * p, d * p), (p, p)).copy_from(&block);
                if c != d {
                    h.view_mut((d * p, c * p), (p, p)).copy_from(&block.transpose());
                }
            }
        }
        let step = newton_step(h, &grad).unwrap_or_else(|| grad.clone());
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let cand_probs = softmax_rows(x, &unflatten(&cand, p));
            let cand_ll = multinomial_loglik(&cand_probs, g);
            if improves(cand_ll, ll) {
                theta = cand;
                probs = cand_probs;
                ll = cand_ll;
                path.push(ll);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if norm(&theta) > TOLERANCES.separation_norm {
            return Err(Error::Separation(norm(&theta)));
        }
    }
    Ok(FitResult { names, coefficients: theta, converged: false, iterations: TOLERANCES.max_iterations, gradient_norm: grad_norm, objective: ll, path })
}

/// Per-row class probabilities `[P(1), ..., P(k)]` for a multinomial fit.
pub fn multinomial_predict(x: &DesignMatrix, fit: &FitResult, k: usize) -> Vec<Vec<f64>> {
    softmax_rows(x, &unflatten(&fit.coefficients, x.ncols()).into_iter().take(k - 1).collect::<Vec<_>>())
}
