//! Monte Carlo benchmark of the estimators against graph-derived adjustment
//! requirements.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{apply_plan, classify, effective_adjustment_set, estimator_columns, standard_plans, Category, CovariatePlan, EffectiveSet, LabelledPlan, PlanItem};
use crate::datagen::{schema_for, simulate, Estimand, Mode, ScenarioSpec, SCENARIO_NAMES};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorKind, EstimatorSpec};
use crate::graph::CausalDiagram;
use crate::scm::{implied_covariance, partial_regression};
use crate::transform::{binding, compact};

/// Note attached to cells that condition on a mediator of a scenario with a
/// separate direct effect.
pub const DIRECT_EFFECT_NOTE: &str = "direct effect a targeted";

fn default_n() -> usize {
    2000
}

fn default_reps() -> usize {
    200
}

fn default_seed() -> u64 {
    20_240_601
}

fn all_scenarios() -> Vec<String> {
    SCENARIO_NAMES.iter().map(|s| s.to_string()).collect()
}

/// One explicit grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub scenario: String,
    /// Outcome-change node; defaults to the scenario's first estimand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub plan: CovariatePlan,
    /// Plan label used in reports; defaults to the produced column list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "all_scenarios")]
    pub scenarios: Vec<String>,
    /// Restricts the default grid to these estimators; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Explicit grid; replaces the default grid when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<CellSpec>>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; the global pool when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub outputs: OutputPaths,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenarios: all_scenarios(),
            estimators: None,
            cells: None,
            n: default_n(),
            reps: default_reps(),
            mode: Mode::default(),
            seed: default_seed(),
            workers: None,
            outputs: OutputPaths::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::Config(format!("reps must be at least 2, got {}", self.reps)));
        }
        if self.n < 50 {
            return Err(Error::Config(format!("n must be at least 50, got {}", self.n)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        for s in &self.scenarios {
            if !SCENARIO_NAMES.contains(&s.as_str()) {
                return Err(Error::UnknownScenario(s.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    /// Scenario name, suffixed with `:<outcome>` for multi-estimand scenarios.
    pub scenario: String,
    pub estimator: EstimatorKind,
    pub plan: String,
    pub category: Category,
    pub mean_bias: Option<f64>,
    pub mc_se: Option<f64>,
    pub abs_bias: Option<f64>,
    /// Mean over replications of the absolute bias.
    pub mean_abs_rep_bias: Option<f64>,
    pub analytic_bias: Option<f64>,
    pub reps: usize,
    pub errors: usize,
    pub truth: f64,
    pub columns: Vec<String>,
    pub effective: EffectiveSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_error: Option<String>,
}

/// Mean absolute bias over the cells of one scenario, estimator and category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAggregate {
    pub scenario: String,
    pub estimator: EstimatorKind,
    pub category: Category,
    pub cells: usize,
    pub mean_abs_bias: f64,
    /// Absolute bias averaged over every replication of those cells.
    pub mean_abs_rep_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub config: BenchConfig,
    pub rows: Vec<BiasRow>,
    pub aggregates: Vec<CategoryAggregate>,
    pub notes: Vec<String>,
}

pub const CSV_HEADER: [&str; 10] =
    ["scenario", "estimator", "plan", "category", "mean_bias", "mc_se", "abs_bias", "analytic_bias", "reps", "errors"];

/// A resolved grid cell.
#[derive(Debug, Clone)]
struct Cell {
    scenario: usize,
    estimand: usize,
    kind: EstimatorKind,
    plan_label: String,
    plan: CovariatePlan,
    columns: Vec<String>,
    effective: EffectiveSet,
    category: Category,
    truth: f64,
    analytic: Option<f64>,
    note: Option<String>,
}

/// Node sets studied for each estimand beyond its validated sufficient set.
fn extra_sets(scenario: &str, outcome: &str) -> Vec<Vec<&'static str>> {
    match (scenario, outcome) {
        ("s5_1", _) => vec![vec!["Z1"], vec!["Z0", "Z1"]],
        ("s5_3_4", _) => vec![vec!["W0", "W1"]],
        ("s5_4_feedback", "dY1") => vec![vec!["W0", "W1"]],
        _ => vec![],
    }
}

/// The default grid for one scenario: for every estimand and estimator, the
/// standard plans of the validated sufficient set and any extra studied sets.
pub fn default_grid(spec: &ScenarioSpec, kinds: &[EstimatorKind]) -> Result<Vec<CellSpec>> {
    let schema = schema_for(&spec.diagram)?;
    let mut cells = Vec::new();
    for estimand in &spec.estimands {
        let mut sets: Vec<Vec<String>> = vec![estimand.sufficient_set.clone()];
        for extra in extra_sets(&spec.name, &estimand.outcome) {
            let s: Vec<String> = extra.into_iter().map(String::from).collect();
            if !sets.contains(&s) {
                sets.push(s);
            }
        }
        for &kind in kinds {
            for LabelledPlan { label, plan } in standard_plans(kind, &schema, estimand.period, &sets)? {
                cells.push(CellSpec {
                    scenario: spec.name.clone(),
                    outcome: Some(estimand.outcome.clone()),
                    estimator: kind,
                    plan,
                    label: Some(label),
                });
            }
        }
    }
    Ok(cells)
}

/// Population bias of a least-squares estimator whose effective set is known:
/// the partial regression of the target outcome level on treatment given the
/// target-period set, minus the same at baseline, minus the truth.
pub fn analytic_bias(spec: &ScenarioSpec, estimand: &Estimand, kind: EstimatorKind, effective: &EffectiveSet) -> Result<f64> {
    if !kind.is_ols_family() {
        return Err(Error::InvalidArgument(format!("no analytic bias for {kind}")));
    }
    let EffectiveSet::Known { periods } = effective else {
        return Err(Error::InvalidArgument("effective adjustment set is unclear".into()));
    };
    let b = binding(&spec.diagram, &estimand.outcome)?;
    let sigma = implied_covariance(&spec.diagram, &spec.assignment)?;
    let set = |i: usize| -> Vec<String> { periods.values().nth(i).map(|s| s.iter().cloned().collect()).unwrap_or_default() };
    let post = partial_regression(&sigma, &b.post, &estimand.treatment, &set(periods.len().saturating_sub(1)))?;
    let pre = partial_regression(&sigma, &b.baseline, &estimand.treatment, &set(0))?;
    Ok(post - pre - cell_truth(spec, estimand, effective)?.0)
}

/// Truth for a cell, and a note when a mediator shifts the target to the direct effect.
fn cell_truth(spec: &ScenarioSpec, estimand: &Estimand, effective: &EffectiveSet) -> Result<(f64, Option<String>)> {
    if let (Some(direct), EffectiveSet::Known { periods }) = (&estimand.direct, effective) {
        let descendants = spec.diagram.descendants(&estimand.treatment)?;
        if periods.values().flatten().any(|n| descendants.contains(n)) {
            return Ok((spec.assignment.eval(direct)?, Some(DIRECT_EFFECT_NOTE.to_string())));
        }
    }
    Ok((spec.truth_value(estimand)?, None))
}

struct Prepared {
    specs: Vec<ScenarioSpec>,
    cells: Vec<Cell>,
    /// Union of every cell plan, per scenario.
    merged: Vec<CovariatePlan>,
}

fn prepare(config: &BenchConfig) -> Result<Prepared> {
    config.validate()?;
    let mut specs: Vec<ScenarioSpec> = Vec::new();
    let mut wanted: Vec<CellSpec> = Vec::new();
    let kinds: Vec<EstimatorKind> = config
        .estimators
        .clone()
        .unwrap_or_else(|| EstimatorKind::ALL.to_vec())
        .into_iter()
        .filter(|k| config.mode == Mode::Bernoulli || !k.needs_binary_treatment())
        .collect();
    match &config.cells {
        Some(cells) => wanted.extend(cells.iter().cloned()),
        None => {
            for name in &config.scenarios {
                wanted.extend(default_grid(&ScenarioSpec::load(name)?, &kinds)?);
            }
        }
    }
    let mut compacts: BTreeMap<(usize, usize), CausalDiagram> = BTreeMap::new();
    let mut cells = Vec::new();
    for c in wanted {
        let si = match specs.iter().position(|s| s.name == c.scenario) {
            Some(i) => i,
            None => {
                specs.push(ScenarioSpec::load(&c.scenario)?);
                specs.len() - 1
            }
        };
        let spec = &specs[si];
        let ei = match &c.outcome {
            Some(o) => spec.estimands.iter().position(|e| &e.outcome == o).ok_or_else(|| Error::UnknownNode(o.clone()))?,
            None => 0,
        };
        let estimand = &spec.estimands[ei];
        let schema = schema_for(&spec.diagram)?;
        let (extended, produced) = c.plan.apply_schema(&schema)?;
        let columns = estimator_columns(c.estimator, &extended, &produced, estimand.period)?;
        let effective = effective_adjustment_set(c.estimator, &extended, &columns, estimand.period)?;
        if !compacts.contains_key(&(si, ei)) {
            compacts.insert((si, ei), compact(&spec.diagram, &estimand.outcome)?);
        }
        let category = classify(&effective, &compacts[&(si, ei)], &estimand.treatment, &estimand.outcome)?;
        let (truth, note) = cell_truth(spec, estimand, &effective)?;
        let analytic = if c.estimator.is_ols_family() { analytic_bias(spec, estimand, c.estimator, &effective).ok() } else { None };
        cells.push(Cell {
            scenario: si,
            estimand: ei,
            kind: c.estimator,
            plan_label: c.label.clone().unwrap_or_else(|| if columns.is_empty() { "none".into() } else { columns.join("+") }),
            plan: c.plan,
            columns,
            effective,
            category,
            truth,
            analytic,
            note,
        });
    }
    let merged = (0..specs.len())
        .map(|si| {
            let mut items: Vec<PlanItem> = Vec::new();
            for c in cells.iter().filter(|c| c.scenario == si) {
                for item in &c.plan.items {
                    if !items.contains(item) {
                        items.push(item.clone());
                    }
                }
            }
            CovariatePlan::new(items)
        })
        .collect();
    Ok(Prepared { specs, cells, merged })
}

type RepOutcome = std::result::Result<f64, String>;

/// Runs the benchmark. Deterministic given the configuration.
pub fn run_benchmark(config: &BenchConfig) -> Result<BiasReport> {
    run_benchmark_with_cancel(config, &AtomicBool::new(false))
}

/// As [`run_benchmark`], stopping with [`Error::Cancelled`] once `cancel` is set.
pub fn run_benchmark_with_cancel(config: &BenchConfig, cancel: &AtomicBool) -> Result<BiasReport> {
    let prepared = prepare(config)?;
    let tasks: Vec<(usize, usize)> =
        (0..prepared.specs.len()).flat_map(|s| (0..config.reps).map(move |r| (s, r))).collect();
    let work = || -> Result<Vec<Vec<(usize, RepOutcome)>>> {
        tasks
            .par_iter()
            .map(|&(si, rep)| {
                if cancel.load(Ordering::Relaxed) {
                    return Err(Error::Cancelled);
                }
                let seed = config.seed.wrapping_add(rep as u64);
                let data = simulate(&prepared.specs[si], config.n, config.mode, seed)?;
                let (data, _) = apply_plan(&data, &prepared.merged[si])?;
                Ok(prepared
                    .cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.scenario == si)
                    .map(|(ci, c)| {
                        let period = prepared.specs[si].estimands[c.estimand].period;
                        let spec = EstimatorSpec {
                            kind: c.kind,
                            covariates: c.columns.clone(),
                            target_period: Some(period),
                            options: Default::default(),
                        };
                        (ci, estimate(&data, &spec).map(|r| r.estimate - c.truth).map_err(|e| e.to_string()))
                    })
                    .collect())
            })
            .collect()
    };
    let per_task = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let mut outcomes: Vec<Vec<RepOutcome>> = vec![Vec::new(); prepared.cells.len()];
    for task in per_task {
        for (ci, o) in task {
            outcomes[ci].push(o);
        }
    }
    let rows: Vec<BiasRow> = prepared
        .cells
        .iter()
        .zip(outcomes)
        .map(|(c, outs)| {
            let spec = &prepared.specs[c.scenario];
            let biases: Vec<f64> = outs.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
            let first_error = outs.iter().find_map(|o| o.as_ref().err().cloned());
            let k = biases.len();
            let mean = (k > 0).then(|| biases.iter().sum::<f64>() / k as f64);
            let se = (k > 1).then(|| {
                let m = mean.unwrap_or(0.0);
                (biases.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt() / (k as f64).sqrt()
            });
            let scenario = if spec.estimands.len() > 1 {
                format!("{}:{}", spec.name, spec.estimands[c.estimand].outcome)
            } else {
                spec.name.clone()
            };
            BiasRow {
                scenario,
                estimator: c.kind,
                plan: c.plan_label.clone(),
                category: c.category,
                mean_bias: mean,
                mc_se: se,
                abs_bias: mean.map(f64::abs),
                mean_abs_rep_bias: (k > 0).then(|| biases.iter().map(|b| b.abs()).sum::<f64>() / k as f64),
                analytic_bias: c.analytic,
                reps: k,
                errors: outs.len() - k,
                truth: c.truth,
                columns: c.columns.clone(),
                effective: c.effective.clone(),
                note: c.note.clone(),
                first_error,
            }
        })
        .collect();
    let aggregates = aggregate(&rows);
    let mut notes = vec![format!(
        "n = {}, reps = {}, mode = {:?}, seed = {}",
        config.n,
        config.reps,
        config.mode,
        config.seed
    )];
    if rows.iter().any(|r| r.note.is_some()) {
        notes.push(format!("cells marked `{DIRECT_EFFECT_NOTE}` are scored against the direct effect"));
    }
    Ok(BiasReport { config: config.clone(), rows, aggregates, notes })
}

fn aggregate(rows: &[BiasRow]) -> Vec<CategoryAggregate> {
    let mut groups: BTreeMap<(String, EstimatorKind, Category), Vec<&BiasRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.scenario.clone(), r.estimator, r.category)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((scenario, estimator, category), rs)| {
            let abs: Vec<f64> = rs.iter().filter_map(|r| r.abs_bias).collect();
            let total_reps: usize = rs.iter().map(|r| r.reps).sum();
            let weighted: f64 = rs.iter().filter_map(|r| r.mean_abs_rep_bias.map(|a| a * r.reps as f64)).sum();
            CategoryAggregate {
                scenario,
                estimator,
                category,
                cells: rs.len(),
                mean_abs_bias: if abs.is_empty() { f64::NAN } else { abs.iter().sum::<f64>() / abs.len() as f64 },
                mean_abs_rep_bias: if total_reps == 0 { f64::NAN } else { weighted / total_reps as f64 },
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BiasReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.estimator.name().to_string(),
                r.plan.clone(),
                r.category.as_str().to_string(),
                opt(r.mean_bias),
                opt(r.mc_se),
                opt(r.abs_bias),
                opt(r.analytic_bias),
                r.reps.to_string(),
                r.errors.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Bar chart of |mean bias|, one panel per scenario, bars grouped by category.
    pub fn to_svg(&self) -> String {
        const BAR: f64 = 12.0;
        const GAP: f64 = 4.0;
        const PANEL_W: f64 = 420.0;
        const LABEL_W: f64 = 220.0;
        let mut panels: Vec<(String, Vec<&BiasRow>)> = Vec::new();
        for r in &self.rows {
            match panels.iter_mut().find(|(s, _)| *s == r.scenario) {
                Some((_, v)) => v.push(r),
                None => panels.push((r.scenario.clone(), vec![r])),
            }
        }
        let max = self.rows.iter().filter_map(|r| r.abs_bias).fold(0.0f64, f64::max).max(1e-12);
        let mut body = String::new();
        let mut y = 10.0;
        for (scenario, mut rows) in panels {
            rows.sort_by_key(|r| r.category);
            let height = rows.len() as f64 * (BAR + GAP) + 30.0;
            let _ = writeln!(body, r#"<g class="panel" data-scenario="{scenario}" transform="translate(0,{y})">"#);
            let _ = writeln!(body, r#"<text x="4" y="14" font-weight="bold">{scenario}</text>"#);
            for (i, r) in rows.iter().enumerate() {
                let top = 24.0 + i as f64 * (BAR + GAP);
                let width = r.abs_bias.unwrap_or(0.0) / max * PANEL_W;
                let color = match r.category {
                    Category::Sufficient => "#1b9e77",
                    Category::Insufficient => "#d95f02",
                    Category::Unclear => "#7570b3",
                };
                let _ = writeln!(
                    body,
                    r#"<text x="4" y="{:.1}" font-size="10">{} {}</text><rect class="bar" data-category="{}" x="{LABEL_W}" y="{top:.1}" width="{width:.2}" height="{BAR}" fill="{color}"/>"#,
                    top + BAR - 2.0,
                    xml_escape(r.estimator.label()),
                    xml_escape(&r.plan),
                    r.category.as_str(),
                );
            }
            body.push_str("</g>\n");
            y += height;
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\">\n{body}</svg>\n",
            LABEL_W + PANEL_W + 20.0,
            y + 10.0
        )
    }

    /// Writes every output path set in the configuration.
    pub fn emit(&self, paths: &OutputPaths) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Config("report has no rows".into()));
        }
        if let Some(p) = &paths.csv {
            self.write_csv(std::fs::File::create(p)?)?;
        }
        if let Some(p) = &paths.json {
            std::fs::write(p, self.to_json()?)?;
        }
        if let Some(p) = &paths.svg {
            std::fs::write(p, self.to_svg())?;
        }
        Ok(())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
