//! Difference-in-differences estimators over a two-period view of a panel.
//!
//! Every estimator compares the baseline period with one target period. The
//! group indicator is the treatment status at the target period.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{Layout, PanelDataset};
use crate::error::{Error, Result};
use crate::regression::{self, logistic_predict, multinomial_predict, DesignMatrix, TOLERANCES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    DeltaY,
    Twfe,
    TwfeAugmented,
    Dcdh,
    HeckmanOr,
    AbadieIpw,
    SzDr,
    StuartGroupPs,
    StuartTimePs,
    MyintAtt,
    MyintAte,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 11] = [
        EstimatorKind::DeltaY,
        EstimatorKind::Twfe,
        EstimatorKind::TwfeAugmented,
        EstimatorKind::Dcdh,
        EstimatorKind::HeckmanOr,
        EstimatorKind::AbadieIpw,
        EstimatorKind::SzDr,
        EstimatorKind::StuartGroupPs,
        EstimatorKind::StuartTimePs,
        EstimatorKind::MyintAtt,
        EstimatorKind::MyintAte,
    ];

    /// Kinds that return the plain unadjusted DiD when given no covariates.
    pub const COLLAPSING: [EstimatorKind; 7] = [
        EstimatorKind::DeltaY,
        EstimatorKind::Twfe,
        EstimatorKind::Dcdh,
        EstimatorKind::HeckmanOr,
        EstimatorKind::AbadieIpw,
        EstimatorKind::SzDr,
        EstimatorKind::MyintAtt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::DeltaY => "delta_y",
            EstimatorKind::Twfe => "twfe",
            EstimatorKind::TwfeAugmented => "twfe_augmented",
            EstimatorKind::Dcdh => "dcdh",
            EstimatorKind::HeckmanOr => "heckman_or",
            EstimatorKind::AbadieIpw => "abadie_ipw",
            EstimatorKind::SzDr => "sz_dr",
            EstimatorKind::StuartGroupPs => "stuart_group_ps",
            EstimatorKind::StuartTimePs => "stuart_time_ps",
            EstimatorKind::MyintAtt => "myint_att",
            EstimatorKind::MyintAte => "myint_ate",
        }
    }

    /// Display label used by the CLI and server registry.
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::DeltaY => "dY(X)",
            EstimatorKind::Twfe => "Y(X) TWFE",
            EstimatorKind::TwfeAugmented => "Y(X) TWFE x time",
            EstimatorKind::Dcdh => "e(dY(dX))",
            EstimatorKind::HeckmanOr => "e(dY(X))",
            EstimatorKind::AbadieIpw => "w(X) dY",
            EstimatorKind::SzDr => "w(X) e(dY(X))",
            EstimatorKind::StuartGroupPs => "w_g(X) Y",
            EstimatorKind::StuartTimePs => "w_t(X) Y",
            EstimatorKind::MyintAtt => "w_t^ATT(X) dY",
            EstimatorKind::MyintAte => "w_t^ATE(X) dY",
        }
    }

    /// Layout whose column names the covariate list refers to.
    pub fn layout(self) -> Layout {
        match self {
            EstimatorKind::DeltaY | EstimatorKind::MyintAtt | EstimatorKind::MyintAte => Layout::Wide,
            EstimatorKind::Dcdh => Layout::Differenced,
            _ => Layout::Long,
        }
    }

    /// Estimators whose point estimate is a least-squares contrast.
    pub fn is_ols_family(self) -> bool {
        matches!(
            self,
            EstimatorKind::DeltaY | EstimatorKind::Twfe | EstimatorKind::TwfeAugmented | EstimatorKind::Dcdh | EstimatorKind::HeckmanOr
        )
    }

    /// Whether the estimator needs a 0/1 treatment.
    pub fn needs_binary_treatment(self) -> bool {
        !matches!(self, EstimatorKind::DeltaY | EstimatorKind::Twfe | EstimatorKind::TwfeAugmented)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    /// Accepts the snake-case name or the registry label.
    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

/// `(label, kind)` pairs in registry order.
pub fn registry() -> Vec<(&'static str, EstimatorKind)> {
    EstimatorKind::ALL.iter().map(|k| (k.label(), *k)).collect()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorOptions {
    /// Propensity-model covariates for the doubly robust and weighting
    /// estimators; defaults to the main covariate list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ps_covariates: Option<Vec<String>>,
    /// Scale weights to sum to one within each group.
    #[serde(default = "yes")]
    pub normalize_weights: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { ps_covariates: None, normalize_weights: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Defaults to the first post-baseline period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_period: Option<i64>,
    #[serde(default)]
    pub options: EstimatorOptions,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, covariates: &[&str]) -> Self {
        Self {
            kind,
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            target_period: None,
            options: EstimatorOptions::default(),
        }
    }

    pub fn at_period(mut self, period: i64) -> Self {
        self.target_period = Some(period);
        self
    }

    pub fn with_ps_covariates(mut self, covariates: &[&str]) -> Self {
        self.options.ps_covariates = Some(covariates.iter().map(|s| s.to_string()).collect());
        self
    }

    fn ps_covariates(&self) -> &[String] {
        self.options.ps_covariates.as_deref().unwrap_or(&self.covariates)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    /// Smallest and largest raw weight, for weighting estimators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_range: Option<(f64, f64)>,
    /// Smallest and largest fitted propensity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propensity_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub diagnostics: Diagnostics,
}

/// Runs one estimator. Failures are wrapped with the estimator name.
pub fn estimate(data: &PanelDataset, spec: &EstimatorSpec) -> Result<EstimateResult> {
    run(data, spec).map_err(|e| Error::Estimator { kind: spec.kind.name().to_string(), source: Box::new(e) })
}

/// `mean(dY | treated) - mean(dY | control)` at `period`.
pub fn unadjusted_did(data: &PanelDataset, period: i64) -> Result<f64> {
    let view = View::new(data, Some(period), true)?;
    Ok(view.mean_treated(&view.dy) - view.mean_control(&view.dy))
}

/// The baseline and target slices of a panel.
struct View<'a> {
    data: &'a PanelDataset,
    base: i64,
    target: i64,
    treat: Vec<f64>,
    treated: Vec<bool>,
    dy: Vec<f64>,
    n_treated: usize,
}

impl<'a> View<'a> {
    fn new(data: &'a PanelDataset, target: Option<i64>, binary: bool) -> Result<Self> {
        if data.periods.len() < 2 {
            return Err(Error::InvalidArgument("panel has a single period".into()));
        }
        let base = data.baseline();
        let target = target.unwrap_or(data.periods[1]);
        if target == base {
            return Err(Error::InvalidArgument(format!("target period {target} is the baseline")));
        }
        let treat = data.treatment_at(target)?.to_vec();
        if binary && treat.iter().any(|a| *a != 0.0 && *a != 1.0) {
            return Err(Error::InvalidArgument("estimator needs a 0/1 treatment".into()));
        }
        let treated: Vec<bool> = treat.iter().map(|a| *a != 0.0).collect();
        let n_treated = treated.iter().filter(|t| **t).count();
        if binary && (n_treated == 0 || n_treated == treated.len()) {
            return Err(Error::InvalidArgument("both treated and control units are required".into()));
        }
        let dy = data.outcome_change(target)?;
        Ok(Self { data, base, target, treat, treated, dy, n_treated })
    }

    fn n(&self) -> usize {
        self.treated.len()
    }

    fn n_control(&self) -> usize {
        self.n() - self.n_treated
    }

    fn mean_treated(&self, v: &[f64]) -> f64 {
        masked_mean(v, &self.treated, true)
    }

    fn mean_control(&self, v: &[f64]) -> f64 {
        masked_mean(v, &self.treated, false)
    }

    fn controls(&self) -> Vec<bool> {
        self.treated.iter().map(|t| !t).collect()
    }

    /// Unit-level design: intercept plus the named columns looked up by `get`.
    fn unit_design<'b, F>(&self, names: &'b [String], get: F) -> Result<DesignMatrix>
    where
        F: Fn(&'b str) -> Result<Vec<f64>>,
    {
        let mut x = DesignMatrix::intercept(self.n());
        for name in names {
            x = x.with(name, get(name)?)?;
        }
        Ok(x)
    }

    fn wide_design(&self, names: &[String]) -> Result<DesignMatrix> {
        self.unit_design(names, |c| Ok(self.data.wide_column(c)?.to_vec()))
    }

    fn baseline_design(&self, names: &[String]) -> Result<DesignMatrix> {
        self.unit_design(names, |c| Ok(self.data.covariate_at(c, self.base)?.to_vec()))
    }

    fn period_design(&self, names: &[String], period: i64) -> Result<DesignMatrix> {
        self.unit_design(names, |c| Ok(self.data.covariate_at(c, period)?.to_vec()))
    }

    /// Stacked baseline-then-target long rows: (Y, G, P) per row.
    fn long_rows(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let y0 = self.data.outcome_at(self.base)?;
        let y1 = self.data.outcome_at(self.target)?;
        let n = self.n();
        let y: Vec<f64> = y0.iter().chain(y1).copied().collect();
        let g: Vec<f64> = self.treat.iter().chain(&self.treat).copied().collect();
        let p: Vec<f64> = (0..2 * n).map(|i| if i < n { 0.0 } else { 1.0 }).collect();
        Ok((y, g, p))
    }

    /// Long-row values of covariate `name`.
    fn long_covariate(&self, name: &str) -> Result<Vec<f64>> {
        let b = self.data.covariate_at(name, self.base)?;
        let t = self.data.covariate_at(name, self.target)?;
        Ok(b.iter().chain(t).copied().collect())
    }

    fn result(&self, estimate: f64, diagnostics: Diagnostics) -> Result<EstimateResult> {
        if !estimate.is_finite() {
            return Err(Error::NonFinite("estimate".into()));
        }
        Ok(EstimateResult { estimate, n_treated: self.n_treated, n_control: self.n_control(), diagnostics })
    }
}

fn masked_mean(v: &[f64], mask: &[bool], keep: bool) -> f64 {
    let (s, c) = v.iter().zip(mask).filter(|(_, m)| **m == keep).fold((0.0, 0usize), |(s, c), (x, _)| (s + x, c + 1));
    s / c as f64
}

fn weighted_mean(v: &[f64], w: &[f64], mask: &[bool], keep: bool, normalize: bool) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0usize;
    for ((x, wi), m) in v.iter().zip(w).zip(mask) {
        if *m == keep {
            num += wi * x;
            den += wi;
            count += 1;
        }
    }
    if normalize {
        num / den
    } else {
        num / count as f64
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

fn check_positivity(p: &[f64]) -> Result<(f64, f64)> {
    let (lo, hi) = range(p);
    if lo < TOLERANCES.positivity {
        return Err(Error::Positivity(lo));
    }
    if hi > 1.0 - TOLERANCES.positivity {
        return Err(Error::Positivity(hi));
    }
    Ok((lo, hi))
}

/// Fitted propensities `P(treated | X)` from a logit of the group indicator.
fn propensity(x: &DesignMatrix, treated: &[bool], diag: &mut Diagnostics) -> Result<Vec<f64>> {
    let y: Vec<f64> = treated.iter().map(|t| f64::from(u8::from(*t))).collect();
    let fit = regression::logistic(x, &y)?;
    diag.converged &= fit.converged;
    let e = logistic_predict(x, &fit);
    let r = check_positivity(&e)?;
    diag.propensity_range = Some(match diag.propensity_range {
        Some((lo, hi)) => (lo.min(r.0), hi.max(r.1)),
        None => r,
    });
    Ok(e)
}

fn run(data: &PanelDataset, spec: &EstimatorSpec) -> Result<EstimateResult> {
    let view = View::new(data, spec.target_period, spec.kind.needs_binary_treatment())?;
    let mut diag = Diagnostics { converged: true, ..Diagnostics::default() };
    let normalize = spec.options.normalize_weights;
    let estimate = match spec.kind {
        EstimatorKind::DeltaY => {
            let x = view.wide_design(&spec.covariates)?.with("A", view.treat.clone())?;
            regression::ols(&x, &view.dy, None)?.coef("A").expect("treatment column present")
        }
        EstimatorKind::Twfe | EstimatorKind::TwfeAugmented => {
            let (y, g, p) = view.long_rows()?;
            let gp: Vec<f64> = g.iter().zip(&p).map(|(a, b)| a * b).collect();
            let mut x = DesignMatrix::intercept(y.len()).with("G", g)?.with("P", p.clone())?.with("G:P", gp)?;
            for c in &spec.covariates {
                let v = view.long_covariate(c)?;
                if spec.kind == EstimatorKind::TwfeAugmented {
                    let vp = v.iter().zip(&p).map(|(a, b)| a * b).collect();
                    x = x.with(c, v)?.with(&format!("{c}:P"), vp)?;
                } else {
                    x = x.with(c, v)?;
                }
            }
            regression::ols(&x, &y, None)?.coef("G:P").expect("interaction column present")
        }
        EstimatorKind::Dcdh => {
            let mut x = DesignMatrix::intercept(view.n());
            for c in &spec.covariates {
                let b = data.covariate_at(c, view.base)?;
                let t = data.covariate_at(c, view.target)?;
                let d: Vec<f64> = t.iter().zip(b).map(|(a, b)| a - b).collect();
                if d.iter().all(|v| *v == 0.0) {
                    diag.dropped_columns.push(c.clone());
                    diag.notes.push(format!("change in `{c}` is identically zero; column dropped"));
                    continue;
                }
                x = x.with(c, d)?;
            }
            let fit = regression::ols(&x.select_rows(&view.controls()), &masked(&view.dy, &view.controls()), None)?;
            let resid: Vec<f64> = view.dy.iter().zip(x.predict(&fit.coefficients)).map(|(y, f)| y - f).collect();
            view.mean_treated(&resid) - view.mean_control(&resid)
        }
        EstimatorKind::HeckmanOr => {
            let resid = outcome_residuals(&view, &spec.covariates)?;
            view.mean_treated(&resid)
        }
        EstimatorKind::AbadieIpw | EstimatorKind::SzDr => {
            let e = propensity(&view.baseline_design(spec.ps_covariates())?, &view.treated, &mut diag)?;
            let w: Vec<f64> = e.iter().zip(&view.treated).map(|(e, t)| if *t { 1.0 } else { e / (1.0 - e) }).collect();
            diag.weight_range = Some(range(&w));
            let target = if spec.kind == EstimatorKind::SzDr { outcome_residuals(&view, &spec.covariates)? } else { view.dy.clone() };
            weighted_mean(&target, &w, &view.treated, true, normalize) - weighted_mean(&target, &w, &view.treated, false, normalize)
        }
        EstimatorKind::StuartGroupPs => {
            let (y, g, p) = view.long_rows()?;
            let class: Vec<usize> = g
                .iter()
                .zip(&p)
                .map(|(g, p)| match (*g != 0.0, *p != 0.0) {
                    (true, false) => 1,
                    (false, false) => 2,
                    (false, true) => 3,
                    (true, true) => 4,
                })
                .collect();
            let mut x = DesignMatrix::intercept(y.len());
            for c in spec.ps_covariates() {
                x = x.with(c, view.long_covariate(c)?)?;
            }
            let fit = regression::multinomial(&x, &class, 4)?;
            diag.converged &= fit.converged;
            let probs = multinomial_predict(&x, &fit, 4);
            let flat: Vec<f64> = probs.iter().flatten().copied().collect();
            diag.propensity_range = Some(check_positivity(&flat)?);
            let w: Vec<f64> = probs.iter().zip(&class).map(|(pr, c)| pr[0] / pr[c - 1]).collect();
            diag.weight_range = Some(range(&w));
            diag.notes.push("effective adjustment set unclear".into());
            weighted_twfe(&y, &g, &p, &w)?
        }
        EstimatorKind::StuartTimePs => {
            let (y, g, p) = view.long_rows()?;
            let mut w = Vec::with_capacity(y.len());
            for period in [view.base, view.target] {
                let e = propensity(&view.period_design(spec.ps_covariates(), period)?, &view.treated, &mut diag)?;
                w.extend(e.iter().zip(&view.treated).map(|(e, t)| if *t { 1.0 / e } else { 1.0 / (1.0 - e) }));
            }
            diag.weight_range = Some(range(&w));
            weighted_twfe(&y, &g, &p, &w)?
        }
        EstimatorKind::MyintAtt | EstimatorKind::MyintAte => {
            let e = propensity(&view.wide_design(spec.ps_covariates())?, &view.treated, &mut diag)?;
            let share = view.n_treated as f64 / view.n() as f64;
            let w: Vec<f64> = e
                .iter()
                .zip(&view.treated)
                .map(|(e, t)| match (spec.kind, *t) {
                    (EstimatorKind::MyintAtt, true) => 1.0,
                    (EstimatorKind::MyintAtt, false) => e / (1.0 - e),
                    (_, true) => share / e,
                    (_, false) => (1.0 - share) / (1.0 - e),
                })
                .collect();
            diag.weight_range = Some(range(&w));
            weighted_mean(&view.dy, &w, &view.treated, true, normalize) - weighted_mean(&view.dy, &w, &view.treated, false, normalize)
        }
    };
    view.result(estimate, diag)
}

fn masked(v: &[f64], mask: &[bool]) -> Vec<f64> {
    v.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect()
}

/// `dY - predicted dY` for every unit, from a control-only regression on baseline covariates.
fn outcome_residuals(view: &View<'_>, covariates: &[String]) -> Result<Vec<f64>> {
    let x = view.baseline_design(covariates)?;
    let controls = view.controls();
    let fit = regression::ols(&x.select_rows(&controls), &masked(&view.dy, &controls), None)?;
    Ok(view.dy.iter().zip(x.predict(&fit.coefficients)).map(|(y, f)| y - f).collect())
}

/// Interaction coefficient of `Y ~ 1 + G + P + G:P` under weights `w`.
fn weighted_twfe(y: &[f64], g: &[f64], p: &[f64], w: &[f64]) -> Result<f64> {
    let gp: Vec<f64> = g.iter().zip(p).map(|(a, b)| a * b).collect();
    let x = DesignMatrix::intercept(y.len()).with("G", g.to_vec())?.with("P", p.to_vec())?.with("G:P", gp)?;
    Ok(regression::ols(&x, y, Some(w))?.coef("G:P").expect("interaction column present"))
}
