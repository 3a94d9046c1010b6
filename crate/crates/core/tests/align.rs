mod common;

use std::collections::BTreeMap;

use common::set;
use didgraph::align::{
    align_table, apply_plan, classify, effective_adjustment_set, estimator_columns, plan_for, rule, Category, CovariatePlan,
    EffectiveSet, LabelledPlan, PlanItem, PlanStyle, Rule,
};
use didgraph::datagen::{simulate, ColumnSource, Covariate, Mode, PanelDataset, ScenarioSpec};
use didgraph::estimators::{estimate, EstimatorKind, EstimatorSpec};
use didgraph::Error;
use proptest::prelude::*;

fn panel(name: &str, n: usize, seed: u64) -> PanelDataset {
    simulate(&ScenarioSpec::load(name).unwrap(), n, Mode::Bernoulli, seed).unwrap()
}

fn known(sets: &[(i64, &[&str])]) -> EffectiveSet {
    EffectiveSet::Known { periods: sets.iter().map(|(p, s)| (*p, set(s))).collect() }
}

#[test]
fn rule_table() {
    use EstimatorKind::*;
    let expected = [
        (DeltaY, Rule::Verbatim),
        (MyintAtt, Rule::Verbatim),
        (MyintAte, Rule::Verbatim),
        (Twfe, Rule::CancelConstant),
        (TwfeAugmented, Rule::PerPeriod),
        (StuartTimePs, Rule::PerPeriod),
        (Dcdh, Rule::Changes),
        (HeckmanOr, Rule::Baseline),
        (AbadieIpw, Rule::Baseline),
        (SzDr, Rule::Baseline),
        (StuartGroupPs, Rule::Unclear),
    ];
    for (kind, r) in expected {
        assert_eq!(rule(kind), r, "{kind}");
    }
}

#[test]
fn derived_columns_hold_the_expected_values() {
    let d = panel("s5_3_1", 50, 1);
    let plan = CovariatePlan::new(vec![PlanItem::copy("W", 1), PlanItem::change("W", 1), PlanItem::interact("W")]);
    let (out, names) = apply_plan(&d, &plan).unwrap();
    assert_eq!(names, ["W_dup1", "W_chg1", "W_xP"]);
    assert_eq!(&out.covariates[..d.covariates.len()], &d.covariates[..]);
    let w0 = d.covariate_at("W", 0).unwrap();
    let w1 = d.covariate_at("W", 1).unwrap();
    for p in [0, 1] {
        assert_eq!(out.covariate_at("W_dup1", p).unwrap(), w1);
        let chg = out.covariate_at("W_chg1", p).unwrap();
        for u in 0..50 {
            assert_eq!(chg[u], w1[u] - w0[u]);
        }
    }
    let copy_change: Vec<f64> = out
        .covariate_at("W_dup1", 1)
        .unwrap()
        .iter()
        .zip(out.covariate_at("W_dup1", 0).unwrap())
        .map(|(a, b)| a - b)
        .collect();
    assert!(copy_change.iter().all(|v| *v == 0.0));
    assert!(out.covariate_at("W_xP", 0).unwrap().iter().all(|v| *v == 0.0));
    assert_eq!(out.covariate_at("W_xP", 1).unwrap(), w1);
}

#[test]
fn reapplying_a_plan_changes_nothing() {
    let d = panel("s5_3_2", 40, 2);
    let plan = CovariatePlan::new(vec![PlanItem::copy("W", 0), PlanItem::interact("W_dup0"), PlanItem::change("W", 1)]);
    let (once, names) = apply_plan(&d, &plan).unwrap();
    let (twice, again) = apply_plan(&once, &plan).unwrap();
    assert_eq!(once, twice);
    assert_eq!(names, again);
}

proptest! {
    #[test]
    fn independent_items_commute(order in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let d = panel("s5_3_2", 30, 3);
        let items = [PlanItem::copy("W", 0), PlanItem::copy("W", 1), PlanItem::change("W", 1), PlanItem::interact("W")];
        let reference: BTreeMap<String, Covariate> =
            apply_plan(&d, &CovariatePlan::new(items.to_vec())).unwrap().0.covariates.into_iter().map(|c| (c.name.clone(), c)).collect();
        let shuffled = CovariatePlan::new(order.iter().map(|i| items[*i].clone()).collect());
        let got: BTreeMap<String, Covariate> = apply_plan(&d, &shuffled).unwrap().0.covariates.into_iter().map(|c| (c.name.clone(), c)).collect();
        prop_assert_eq!(got, reference);
    }
}

#[test]
fn clashing_names_are_rejected() {
    let mut d = panel("s5_3_1", 20, 4);
    let w = d.covariate("W").unwrap().values.clone();
    d.covariates.push(Covariate { name: "W_dup1".into(), source: ColumnSource::Observed, values: w });
    let err = apply_plan(&d, &CovariatePlan::new(vec![PlanItem::copy("W", 1)])).unwrap_err();
    assert!(matches!(err, Error::NameCollision(ref n) if n == "W_dup1"));
    assert!(matches!(apply_plan(&d, &CovariatePlan::as_is(&["Q"])), Err(Error::UnknownColumn(_))));
}

#[test]
fn copies_and_changes_span_the_same_space() {
    let d = panel("s5_3_1", 2000, 5);
    let levels = CovariatePlan::new(vec![PlanItem::copy("W", 0), PlanItem::copy("W", 1)]);
    let changes = CovariatePlan::new(vec![PlanItem::copy("W", 0), PlanItem::change("W", 1)]);
    for kind in [EstimatorKind::HeckmanOr, EstimatorKind::DeltaY, EstimatorKind::SzDr] {
        let run = |plan: &CovariatePlan| {
            let (ext, names) = apply_plan(&d, plan).unwrap();
            let cols: Vec<&str> = names.iter().map(String::as_str).collect();
            estimate(&ext, &EstimatorSpec::new(kind, &cols).at_period(1)).unwrap().estimate
        };
        let (a, b) = (run(&levels), run(&changes));
        assert!((a - b).abs() < 1e-9, "{kind}: {a} vs {b}");
    }
    let wide = estimate(&d, &EstimatorSpec::new(EstimatorKind::DeltaY, &["W0", "W1"]).at_period(1)).unwrap().estimate;
    let (ext, _) = apply_plan(&d, &changes).unwrap();
    let mixed = estimate(&ext, &EstimatorSpec::new(EstimatorKind::DeltaY, &["W0", "W_chg1"]).at_period(1)).unwrap().estimate;
    assert!((wide - mixed).abs() < 1e-9);
}

#[test]
fn effective_sets_follow_the_rules() {
    let spec = ScenarioSpec::load("s5_3_1").unwrap();
    let schema = didgraph::datagen::schema_for(&spec.diagram).unwrap();
    let eff = |kind, plan: CovariatePlan| {
        let (s, produced) = plan.apply_schema(&schema).unwrap();
        let cols = estimator_columns(kind, &s, &produced, 1).unwrap();
        effective_adjustment_set(kind, &s, &cols, 1).unwrap()
    };
    assert_eq!(eff(EstimatorKind::DeltaY, CovariatePlan::as_is(&["W"])), known(&[(0, &["W0", "W1"]), (1, &["W0", "W1"])]));
    assert_eq!(eff(EstimatorKind::HeckmanOr, CovariatePlan::as_is(&["W"])), known(&[(0, &["W0"]), (1, &["W0"])]));
    assert_eq!(eff(EstimatorKind::TwfeAugmented, CovariatePlan::as_is(&["W"])), known(&[(0, &["W0"]), (1, &["W1"])]));
    assert!(eff(EstimatorKind::TwfeAugmented, CovariatePlan::as_is(&["W"])).is_split());
    assert!(matches!(eff(EstimatorKind::Twfe, CovariatePlan::as_is(&["W"])), EffectiveSet::Unclear { .. }));
    assert_eq!(eff(EstimatorKind::Twfe, CovariatePlan::new(vec![PlanItem::copy("W", 0)])), known(&[(0, &[]), (1, &[])]));
    let aligned = CovariatePlan::new(vec![PlanItem::copy("W", 0), PlanItem::interact("W_dup0")]);
    assert_eq!(eff(EstimatorKind::Twfe, aligned), known(&[(0, &["W0"]), (1, &["W0"])]));
    assert_eq!(eff(EstimatorKind::Dcdh, CovariatePlan::as_is(&["W"])), EffectiveSet::Unclear {
        reason: "change W1 - W0 without either level".into()
    });
    assert!(matches!(eff(EstimatorKind::StuartGroupPs, CovariatePlan::as_is(&["W"])), EffectiveSet::Unclear { .. }));
}

#[test]
fn classification_examples() {
    let s533 = ScenarioSpec::load("s5_3_3").unwrap().compact().unwrap();
    let both = known(&[(0, &["W0", "W1"]), (1, &["W0", "W1"])]);
    assert_eq!(classify(&both, &s533, "A1", "dY").unwrap(), Category::Sufficient);
    let split = known(&[(0, &["W0"]), (1, &["W1"])]);
    assert_eq!(classify(&split, &s533, "A1", "dY").unwrap(), Category::Insufficient);
    let s51 = ScenarioSpec::load("s5_1").unwrap().compact().unwrap();
    assert_eq!(classify(&known(&[(0, &["Z1"]), (1, &["Z1"])]), &s51, "A1", "dY").unwrap(), Category::Insufficient);
    let unclear = EffectiveSet::Unclear { reason: "x".into() };
    assert_eq!(classify(&unclear, &s51, "A1", "dY").unwrap(), Category::Unclear);
    assert!(classify(&known(&[(0, &["Nope"]), (1, &["Nope"])]), &s51, "A1", "dY").is_err());
}

#[test]
fn change_plans_need_a_time_varying_pair() {
    let spec = ScenarioSpec::load("s5_3_1").unwrap();
    let schema = didgraph::datagen::schema_for(&spec.diagram).unwrap();
    let nodes = vec!["W0".to_string()];
    assert!(plan_for(EstimatorKind::HeckmanOr, PlanStyle::Change, &nodes, &schema).unwrap().is_none());
    let pair = vec!["W0".to_string(), "W1".to_string()];
    let plan = plan_for(EstimatorKind::Twfe, PlanStyle::Change, &pair, &schema).unwrap().unwrap();
    assert_eq!(plan.items, vec![PlanItem::copy("W", 0), PlanItem::change("W", 1), PlanItem::interact("W_dup0"), PlanItem::interact("W_chg1")]);
}

#[test]
fn table_covers_each_estimator_and_plan() {
    let spec = ScenarioSpec::load("fig4").unwrap();
    let rows = align_table(&spec.diagram, "A1", "dY", &EstimatorKind::ALL, None).unwrap();
    for kind in EstimatorKind::ALL {
        let mine: Vec<_> = rows.iter().filter(|r| r.estimator == kind).collect();
        assert_eq!(mine[0].label, "none");
        assert_eq!(mine[0].category, if kind == EstimatorKind::StuartGroupPs { Category::Unclear } else { Category::Insufficient });
    }
    let find = |kind, label: &str| rows.iter().find(|r| r.estimator == kind && r.label == label).unwrap();
    assert_eq!(find(EstimatorKind::DeltaY, "default{W0}").category, Category::Sufficient);
    assert_eq!(find(EstimatorKind::Twfe, "default{W0}").category, Category::Insufficient);
    assert_eq!(find(EstimatorKind::Twfe, "aligned{W0}").category, Category::Sufficient);

    let plans = vec![LabelledPlan { label: "mine".into(), plan: CovariatePlan::as_is(&["W0"]) }];
    let custom = align_table(&spec.diagram, "A1", "dY", &[EstimatorKind::SzDr], Some(&plans)).unwrap();
    assert_eq!(custom.len(), 1);
    assert_eq!(custom[0].columns, ["W0"]);
    assert_eq!(custom[0].category, Category::Sufficient);
    assert!(matches!(align_table(&spec.compact().unwrap(), "A1", "dY", &[EstimatorKind::SzDr], None), Err(Error::CompactForm)));
}

#[test]
fn plans_serialize_as_item_lists() {
    let plan = CovariatePlan::new(vec![PlanItem::copy("W", 0), PlanItem::interact("W_dup0")]);
    let json = serde_json::to_string(&plan).unwrap();
    assert_eq!(json, r#"[{"covariate":"W","strategy":"copy","period":0},{"covariate":"W_dup0","strategy":"interact"}]"#);
    assert_eq!(serde_json::from_str::<CovariatePlan>(&json).unwrap(), plan);
}
