//! Covariate-handling transforms and the adjustment set each estimator
//! effectively conditions on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::datagen::{schema_for, ColumnSource, ColumnValue, Covariate, PanelDataset, PanelSchema};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::graph::{backdoor_check, minimal_sufficient_sets, AdjustmentStatus, CausalDiagram, Form, SetSearch};
use crate::transform::{binding, compact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    AsIs,
    /// Time-constant copy of the value at one period.
    Copy,
    /// Product with the post-period indicator.
    Interact,
    /// Change from baseline to one period, held constant.
    Change,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanItem {
    pub covariate: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<i64>,
}

impl PlanItem {
    pub fn as_is(covariate: &str) -> Self {
        Self { covariate: covariate.into(), strategy: Strategy::AsIs, period: None }
    }

    pub fn copy(covariate: &str, period: i64) -> Self {
        Self { covariate: covariate.into(), strategy: Strategy::Copy, period: Some(period) }
    }

    pub fn interact(covariate: &str) -> Self {
        Self { covariate: covariate.into(), strategy: Strategy::Interact, period: None }
    }

    pub fn change(covariate: &str, period: i64) -> Self {
        Self { covariate: covariate.into(), strategy: Strategy::Change, period: Some(period) }
    }

    /// Name of the column this item contributes.
    pub fn produced_name(&self) -> String {
        let x = &self.covariate;
        match (self.strategy, self.period) {
            (Strategy::AsIs, _) => x.clone(),
            (Strategy::Copy, Some(t)) => format!("{x}_dup{t}"),
            (Strategy::Change, Some(t)) => format!("{x}_chg{t}"),
            (Strategy::Interact, _) => format!("{x}_xP"),
            (_, None) => format!("{x}_?"),
        }
    }

    fn source(&self, schema: &PanelSchema) -> Result<Option<ColumnSource>> {
        let need_period = || -> Result<i64> {
            let p = self
                .period
                .ok_or_else(|| Error::InvalidArgument(format!("strategy for `{}` needs a period", self.covariate)))?;
            if !schema.periods.contains(&p) {
                return Err(Error::InvalidArgument(format!("period {p} is not observed")));
            }
            Ok(p)
        };
        let of = self.covariate.clone();
        Ok(match self.strategy {
            Strategy::AsIs => None,
            Strategy::Copy => Some(ColumnSource::Copy { of, period: need_period()? }),
            Strategy::Change => Some(ColumnSource::Change { of, period: need_period()? }),
            Strategy::Interact => Some(ColumnSource::Interact { of }),
        })
    }
}

/// Ordered covariate-handling steps. Later items may refer to columns
/// produced by earlier ones.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariatePlan {
    pub items: Vec<PlanItem>,
}

impl CovariatePlan {
    pub fn new(items: Vec<PlanItem>) -> Self {
        Self { items }
    }

    /// Supplies the named columns unchanged.
    pub fn as_is(columns: &[&str]) -> Self {
        Self::new(columns.iter().map(|c| PlanItem::as_is(c)).collect())
    }

    /// Extends `schema` with the produced columns. Returns the new schema and
    /// the produced column names in plan order.
    pub fn apply_schema(&self, schema: &PanelSchema) -> Result<(PanelSchema, Vec<String>)> {
        let mut out = schema.clone();
        let mut names = Vec::new();
        for item in &self.items {
            let known = out.source(&item.covariate).is_ok();
            match item.source(&out)? {
                None => {
                    if !known && !is_wide_node(&out, &item.covariate) {
                        return Err(Error::UnknownColumn(item.covariate.clone()));
                    }
                }
                Some(source) => {
                    out.source(&item.covariate)?;
                    let name = item.produced_name();
                    match out.source(&name) {
                        Ok(existing) if *existing == source => {}
                        Ok(_) => return Err(Error::NameCollision(name)),
                        Err(_) => out.columns.push((name, source)),
                    }
                }
            }
            let name = item.produced_name();
            if !names.contains(&name) {
                names.push(name);
            }
        }
        Ok((out, names))
    }
}

fn is_wide_node(schema: &PanelSchema, name: &str) -> bool {
    schema.columns.iter().any(|(_, s)| matches!(s, ColumnSource::Varying { nodes } if nodes.values().any(|n| n == name)))
}

/// Adds the plan's columns to a copy of `data`; original columns are untouched.
/// Returns the dataset and the produced column names in plan order.
pub fn apply_plan(data: &PanelDataset, plan: &CovariatePlan) -> Result<(PanelDataset, Vec<String>)> {
    let (schema, names) = plan.apply_schema(&data.schema())?;
    let mut out = data.clone();
    for (name, source) in schema.columns.iter().skip(data.covariates.len()) {
        let base = out.baseline();
        let values: Vec<Vec<f64>> = match source {
            ColumnSource::Copy { of, period } => vec![out.covariate_at(of, *period)?.to_vec(); out.periods.len()],
            ColumnSource::Change { of, period } => {
                let post = out.covariate_at(of, *period)?;
                let pre = out.covariate_at(of, base)?;
                vec![post.iter().zip(pre).map(|(a, b)| a - b).collect(); out.periods.len()]
            }
            ColumnSource::Interact { of } => {
                let c = out.covariate(of)?;
                c.values
                    .iter()
                    .zip(&out.periods)
                    .map(|(v, p)| if *p == base { vec![0.0; v.len()] } else { v.clone() })
                    .collect()
            }
            _ => unreachable!("plans only add derived columns"),
        };
        out.covariates.push(Covariate { name: name.clone(), source: source.clone(), values });
    }
    Ok((out, names))
}

/// How an estimator turns supplied columns into an adjustment set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Every supplied wide column enters as given.
    Verbatim,
    /// Pooled long regression: constant columns cancel unless their period
    /// interaction is also supplied, columns that are zero at baseline enter
    /// at the target period, other time-varying columns make the set unclear.
    CancelConstant,
    /// The baseline model sees baseline values and the target model sees
    /// target values.
    PerPeriod,
    /// Only baseline-to-target changes enter.
    Changes,
    /// Only baseline values enter.
    Baseline,
    Unclear,
}

/// The rule table, one row per estimator kind.
pub const RULES: [(EstimatorKind, Rule); 11] = [
    (EstimatorKind::DeltaY, Rule::Verbatim),
    (EstimatorKind::Twfe, Rule::CancelConstant),
    (EstimatorKind::TwfeAugmented, Rule::PerPeriod),
    (EstimatorKind::Dcdh, Rule::Changes),
    (EstimatorKind::HeckmanOr, Rule::Baseline),
    (EstimatorKind::AbadieIpw, Rule::Baseline),
    (EstimatorKind::SzDr, Rule::Baseline),
    (EstimatorKind::StuartGroupPs, Rule::Unclear),
    (EstimatorKind::StuartTimePs, Rule::PerPeriod),
    (EstimatorKind::MyintAtt, Rule::Verbatim),
    (EstimatorKind::MyintAte, Rule::Verbatim),
];

pub fn rule(kind: EstimatorKind) -> Rule {
    RULES.iter().find(|(k, _)| *k == kind).map(|(_, r)| *r).expect("every kind has a rule")
}

/// Diagram nodes an estimator conditions on, per period of the two-period view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectiveSet {
    Known {
        #[serde(with = "period_keys")]
        periods: BTreeMap<i64, BTreeSet<String>>,
    },
    Unclear { reason: String },
}

/// Period-keyed maps written with string keys, as JSON requires.
mod period_keys {
    use std::collections::{BTreeMap, BTreeSet};

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    type Periods = BTreeMap<i64, BTreeSet<String>>;

    pub fn serialize<S: Serializer>(periods: &Periods, s: S) -> Result<S::Ok, S::Error> {
        periods.iter().map(|(p, v)| (p.to_string(), v)).collect::<BTreeMap<_, _>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Periods, D::Error> {
        BTreeMap::<String, BTreeSet<String>>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.parse().map(|p| (p, v)).map_err(|_| D::Error::custom(format!("invalid period `{k}`"))))
            .collect()
    }
}

impl EffectiveSet {
    fn single(base: i64, target: i64, nodes: BTreeSet<String>) -> Self {
        Self::Known { periods: BTreeMap::from([(base, nodes.clone()), (target, nodes)]) }
    }

    fn unclear(reason: impl Into<String>) -> Self {
        Self::Unclear { reason: reason.into() }
    }

    /// The common node set when every period conditions on the same nodes.
    pub fn node_set(&self) -> Option<&BTreeSet<String>> {
        match self {
            EffectiveSet::Known { periods } => {
                let mut sets = periods.values();
                let first = sets.next()?;
                sets.all(|s| s == first).then_some(first)
            }
            EffectiveSet::Unclear { .. } => None,
        }
    }

    pub fn is_split(&self) -> bool {
        matches!(self, EffectiveSet::Known { .. }) && self.node_set().is_none()
    }
}

/// What a wide-layout column name holds.
fn wide_value(schema: &PanelSchema, name: &str) -> Result<ColumnValue> {
    if let Ok(source) = schema.source(name) {
        if source.is_constant() {
            return schema.value_at(name, schema.baseline());
        }
    }
    for (_, source) in &schema.columns {
        if let ColumnSource::Varying { nodes } = source {
            if nodes.values().any(|n| n == name) {
                return Ok(ColumnValue::Level { node: name.to_string() });
            }
        }
    }
    if let Some((col, p)) = name.rsplit_once('@') {
        if let Ok(p) = p.parse::<i64>() {
            return schema.value_at(col, p);
        }
    }
    Err(Error::UnknownColumn(name.to_string()))
}

/// Estimator covariate names for produced columns. Wide kinds see one column
/// per period of the two-period view for each time-varying column.
pub fn estimator_columns(kind: EstimatorKind, schema: &PanelSchema, produced: &[String], target: i64) -> Result<Vec<String>> {
    let wide = rule(kind) == Rule::Verbatim;
    let mut out = Vec::new();
    for name in produced {
        match schema.source(name) {
            Ok(source) if wide && !source.is_constant() => {
                for p in [schema.baseline(), target] {
                    out.push(match source {
                        ColumnSource::Varying { nodes } => nodes.get(&p).cloned().unwrap_or_else(|| format!("{name}@{p}")),
                        _ => format!("{name}@{p}"),
                    });
                }
            }
            Ok(_) => out.push(name.clone()),
            Err(_) if wide && is_wide_node(schema, name) => out.push(name.clone()),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Resolves level and difference values into a node set. A difference adds
/// the level it is missing when the other level is also present.
fn resolve(values: Vec<ColumnValue>) -> std::result::Result<BTreeSet<String>, String> {
    let mut nodes = BTreeSet::new();
    for v in &values {
        match v {
            ColumnValue::Level { node } => {
                nodes.insert(node.clone());
            }
            ColumnValue::Unknown => return Err("column without diagram provenance".into()),
            _ => {}
        }
    }
    let levels = nodes.clone();
    for v in values {
        if let ColumnValue::Difference { post, baseline } = v {
            if levels.contains(&baseline) {
                nodes.insert(post);
            } else if levels.contains(&post) {
                nodes.insert(baseline);
            } else {
                return Err(format!("change {post} - {baseline} without either level"));
            }
        }
    }
    Ok(nodes)
}

/// Difference of two per-period values, as seen by a change-based estimator.
fn change(pre: ColumnValue, post: ColumnValue) -> ColumnValue {
    match (pre, post) {
        (a, b) if a == b => ColumnValue::Zero,
        (ColumnValue::Zero, b) => b,
        (ColumnValue::Level { node: baseline }, ColumnValue::Level { node: post }) => ColumnValue::Difference { post, baseline },
        _ => ColumnValue::Unknown,
    }
}

/// The adjustment set `kind` effectively uses when given estimator columns
/// `columns` (names as passed to the estimator) at `target`.
pub fn effective_adjustment_set(kind: EstimatorKind, schema: &PanelSchema, columns: &[String], target: i64) -> Result<EffectiveSet> {
    let base = schema.baseline();
    let collect = |f: &dyn Fn(&str) -> Result<ColumnValue>| -> Result<Vec<ColumnValue>> { columns.iter().map(|c| f(c)).collect() };
    let single = |values: Vec<ColumnValue>| match resolve(values) {
        Ok(nodes) => EffectiveSet::single(base, target, nodes),
        Err(reason) => EffectiveSet::unclear(reason),
    };
    Ok(match rule(kind) {
        Rule::Verbatim => single(collect(&|c| wide_value(schema, c))?),
        Rule::Baseline => single(collect(&|c| schema.value_at(c, base))?),
        Rule::Changes => single(collect(&|c| Ok(change(schema.value_at(c, base)?, schema.value_at(c, target)?)))?),
        Rule::Unclear => EffectiveSet::unclear("pooled multinomial propensity model"),
        Rule::PerPeriod => {
            let at = |p: i64| -> Result<std::result::Result<BTreeSet<String>, String>> {
                Ok(resolve(columns.iter().map(|c| schema.value_at(c, p)).collect::<Result<Vec<_>>>()?))
            };
            match (at(base)?, at(target)?) {
                (Ok(b), Ok(t)) => EffectiveSet::Known { periods: BTreeMap::from([(base, b), (target, t)]) },
                (Err(r), _) | (_, Err(r)) => EffectiveSet::unclear(r),
            }
        }
        Rule::CancelConstant => {
            let mut constant = Vec::new();
            let mut post = Vec::new();
            for c in columns {
                let (b, t) = (schema.value_at(c, base)?, schema.value_at(c, target)?);
                if b == t {
                    constant.push(b);
                } else if b == ColumnValue::Zero {
                    post.push(t);
                } else {
                    return Ok(EffectiveSet::unclear(format!("time-varying column `{c}` in a pooled regression")));
                }
            }
            // A constant column whose interaction is also present gets a free
            // coefficient in each period; any other constant column cancels.
            let pre: Vec<ColumnValue> = constant.into_iter().filter(|v| post.contains(v)).collect();
            match (resolve(pre), resolve(post)) {
                (Ok(b), Ok(t)) => EffectiveSet::Known { periods: BTreeMap::from([(base, b), (target, t)]) },
                (Err(r), _) | (_, Err(r)) => EffectiveSet::unclear(r),
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Sufficient,
    Insufficient,
    Unclear,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Sufficient => "sufficient",
            Category::Insufficient => "insufficient",
            Category::Unclear => "unclear",
        }
    }
}

/// Sufficiency of an effective set against a compact diagram. Sets that
/// differ between periods are insufficient.
pub fn classify(effective: &EffectiveSet, compact: &CausalDiagram, treatment: &str, outcome: &str) -> Result<Category> {
    let periods = match effective {
        EffectiveSet::Unclear { .. } => return Ok(Category::Unclear),
        EffectiveSet::Known { periods } => periods,
    };
    for node in periods.values().flatten() {
        compact.require_node(node)?;
    }
    let Some(nodes) = effective.node_set() else {
        return Ok(Category::Insufficient);
    };
    let verdict = backdoor_check(compact, treatment, outcome, nodes)?;
    Ok(if verdict.status == AdjustmentStatus::Sufficient { Category::Sufficient } else { Category::Insufficient })
}

/// Column holding `node` in the schema, and the period for time-varying columns.
fn column_of(schema: &PanelSchema, node: &str) -> Result<(String, Option<i64>)> {
    for (name, source) in &schema.columns {
        match source {
            ColumnSource::Invariant { node: n } if n == node => return Ok((name.clone(), None)),
            ColumnSource::Varying { nodes } => {
                if let Some((p, _)) = nodes.iter().find(|(_, n)| *n == node) {
                    return Ok((name.clone(), Some(*p)));
                }
            }
            _ => {}
        }
    }
    Err(Error::UnknownColumn(node.to_string()))
}

/// How a node set is handed to an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStyle {
    Default,
    Aligned,
    Change,
}

impl PlanStyle {
    pub fn name(self) -> &'static str {
        match self {
            PlanStyle::Default => "default",
            PlanStyle::Aligned => "aligned",
            PlanStyle::Change => "change",
        }
    }
}

/// Plan supplying the node set `nodes` to estimator `kind` in one of three styles:
/// the natural columns, time-constant copies, or a baseline copy plus changes.
/// Pooled-regression and change-based estimators also get the period
/// interactions of the constant columns.
pub fn plan_for(kind: EstimatorKind, style: PlanStyle, nodes: &[String], schema: &PanelSchema) -> Result<Option<CovariatePlan>> {
    let wide = rule(kind) == Rule::Verbatim;
    let mut items: Vec<PlanItem> = Vec::new();
    let push = |items: &mut Vec<PlanItem>, item: PlanItem| {
        if !items.contains(&item) {
            items.push(item);
        }
    };
    let base = schema.baseline();
    let located: Vec<(String, Option<i64>, &String)> =
        nodes.iter().map(|n| column_of(schema, n).map(|(c, p)| (c, p, n))).collect::<Result<_>>()?;
    if style == PlanStyle::Change {
        let has_change = located.iter().any(|(c, p, _)| {
            p.is_some_and(|p| p != base) && located.iter().any(|(c2, p2, _)| c2 == c && *p2 == Some(base))
        });
        if !has_change {
            return Ok(None);
        }
    }
    for (column, period, node) in &located {
        let item = match (style, period) {
            (_, None) => PlanItem::as_is(column),
            (PlanStyle::Default, Some(_)) if wide => PlanItem::as_is(node),
            (PlanStyle::Default, Some(_)) => PlanItem::as_is(column),
            (PlanStyle::Change, Some(p))
                if *p != base && located.iter().any(|(c2, p2, _)| c2 == column && *p2 == Some(base)) =>
            {
                PlanItem::change(column, *p)
            }
            (_, Some(p)) => PlanItem::copy(column, *p),
        };
        push(&mut items, item);
    }
    if style != PlanStyle::Default && matches!(kind, EstimatorKind::Twfe | EstimatorKind::Dcdh) {
        for item in items.clone() {
            push(&mut items, PlanItem::interact(&item.produced_name()));
        }
    }
    Ok(Some(CovariatePlan::new(items)))
}

fn set_label(nodes: &[String]) -> String {
    format!("{{{}}}", nodes.join(","))
}

/// A covariate plan with a display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelledPlan {
    pub label: String,
    pub plan: CovariatePlan,
}

/// Plans for `kind`: no covariates, then the default, aligned and change
/// plans of each node set. Plans whose estimator columns repeat an earlier
/// plan are dropped.
pub fn standard_plans(kind: EstimatorKind, schema: &PanelSchema, target: i64, sets: &[Vec<String>]) -> Result<Vec<LabelledPlan>> {
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut out = Vec::new();
    let mut add = |label: String, plan: CovariatePlan| -> Result<()> {
        let (s, produced) = plan.apply_schema(schema)?;
        if seen.insert(estimator_columns(kind, &s, &produced, target)?) {
            out.push(LabelledPlan { label, plan });
        }
        Ok(())
    };
    add("none".into(), CovariatePlan::default())?;
    for set in sets.iter().filter(|s| !s.is_empty()) {
        for style in [PlanStyle::Default, PlanStyle::Aligned, PlanStyle::Change] {
            if let Some(plan) = plan_for(kind, style, set, schema)? {
                add(format!("{}{}", style.name(), set_label(set)), plan)?;
            }
        }
    }
    Ok(out)
}

/// One estimator under one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignRow {
    pub estimator: EstimatorKind,
    pub label: String,
    pub plan: CovariatePlan,
    pub columns: Vec<String>,
    pub effective: EffectiveSet,
    pub category: Category,
}

/// Effective set and category of each estimator under each plan, for the
/// change node `outcome` of a natural diagram. Without explicit plans every
/// estimator gets the standard plans of the minimal sufficient sets.
pub fn align_table(
    diagram: &CausalDiagram,
    treatment: &str,
    outcome: &str,
    kinds: &[EstimatorKind],
    plans: Option<&[LabelledPlan]>,
) -> Result<Vec<AlignRow>> {
    if diagram.form != Form::Natural {
        return Err(Error::CompactForm);
    }
    let post = binding(diagram, outcome)?.post;
    let target = diagram
        .require_node(&post)?
        .time
        .ok_or_else(|| Error::InvalidArgument(format!("outcome level `{post}` has no period")))?;
    let schema = schema_for(diagram)?;
    let reduced = compact(diagram, outcome)?;
    let sets: Vec<Vec<String>> = match plans {
        Some(_) => Vec::new(),
        None => minimal_sufficient_sets(&reduced, treatment, outcome, &SetSearch::default())?
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect(),
    };
    let mut rows = Vec::new();
    for &kind in kinds {
        let list = match plans {
            Some(p) => p.to_vec(),
            None => standard_plans(kind, &schema, target, &sets)?,
        };
        for LabelledPlan { label, plan } in list {
            let (extended, produced) = plan.apply_schema(&schema)?;
            let columns = estimator_columns(kind, &extended, &produced, target)?;
            let effective = effective_adjustment_set(kind, &extended, &columns, target)?;
            let category = classify(&effective, &reduced, treatment, outcome)?;
            rows.push(AlignRow { estimator: kind, label, plan, columns, effective, category });
        }
    }
    Ok(rows)
}
