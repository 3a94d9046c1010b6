use didgraph::regression::{logistic, logistic_predict, multinomial, multinomial_predict, ols, DesignMatrix, LOGLIK_SLACK};
use didgraph::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn design(cols: &[(&str, Vec<f64>)]) -> DesignMatrix {
    DesignMatrix::new(cols.iter().map(|(n, _)| n.to_string()).collect(), cols.iter().map(|(_, c)| c.clone()).collect()).unwrap()
}

fn loglik(x: &[f64], y: &[f64], beta: f64) -> f64 {
    x.iter().zip(y).map(|(xi, yi)| {
        let eta = beta * xi;
        yi * eta - (1.0 + eta.exp()).ln()
    }).sum()
}

fn non_decreasing(path: &[f64]) -> bool {
    path.windows(2).all(|w| w[1] >= w[0] - LOGLIK_SLACK * w[0].abs().max(1.0))
}

#[test]
fn two_by_two_system_is_solved_exactly() {
    let x = DesignMatrix::intercept(2).with("x", vec![1.0, 3.0]).unwrap();
    let fit = ols(&x, &[2.0, 8.0], None).unwrap();
    assert!((fit.coef("(intercept)").unwrap_or(fit.coefficients[0]) + 1.0).abs() < 1e-12);
    assert!((fit.coef("x").unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn simple_regression_matches_normal_equations() {
    let x = DesignMatrix::intercept(3).with("x", vec![0.0, 1.0, 2.0]).unwrap();
    let fit = ols(&x, &[1.0, 2.0, 4.0], None).unwrap();
    assert!((fit.coefficients[0] - 5.0 / 6.0).abs() < 1e-12);
    assert!((fit.coefficients[1] - 1.5).abs() < 1e-12);
    assert!((fit.objective - 1.0 / 6.0).abs() < 1e-12);
}

#[test]
fn integer_weights_equal_duplicated_rows() {
    let xs = [0.5, 1.0, 2.0, 3.5];
    let ys = [1.0, 0.0, 3.0, 2.0];
    let w = [1.0, 3.0, 2.0, 1.0];
    let weighted = ols(&DesignMatrix::intercept(4).with("x", xs.to_vec()).unwrap(), &ys, Some(&w)).unwrap();
    let (mut dx, mut dy) = (Vec::new(), Vec::new());
    for i in 0..4 {
        for _ in 0..w[i] as usize {
            dx.push(xs[i]);
            dy.push(ys[i]);
        }
    }
    let dup = ols(&DesignMatrix::intercept(dx.len()).with("x", dx).unwrap(), &dy, None).unwrap();
    for (a, b) in weighted.coefficients.iter().zip(&dup.coefficients) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn dependent_column_is_named() {
    let x = DesignMatrix::intercept(4).with("x", vec![1.0, 2.0, 3.0, 4.0]).unwrap().with("x2", vec![2.0, 4.0, 6.0, 8.0]).unwrap();
    assert!(matches!(ols(&x, &[1.0, 2.0, 2.0, 5.0], None), Err(Error::RankDeficient(ref c)) if c == "x2"));
    let short = DesignMatrix::intercept(1).with("x", vec![1.0]).unwrap();
    assert!(matches!(ols(&short, &[1.0], None), Err(Error::TooFewRows { rows: 1, cols: 2 })));
}

#[test]
fn design_rejects_duplicates_and_non_finite_values() {
    assert!(DesignMatrix::intercept(2).with("x", vec![1.0, f64::NAN]).is_err());
    assert!(DesignMatrix::intercept(2).with("x", vec![1.0, 2.0]).unwrap().with("x", vec![0.0, 1.0]).is_err());
}

fn random_problem(seed: u64, n: usize, p: usize) -> (DesignMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DesignMatrix::intercept(n);
    for j in 0..p {
        x = x.with(&format!("x{j}"), (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
    }
    let y = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn residuals_are_orthogonal_to_columns(seed in any::<u64>(), n in 8usize..60, p in 1usize..4, weighted in any::<bool>()) {
        let (x, y) = random_problem(seed, n, p);
        let w: Vec<f64> = (0..n).map(|i| 0.5 + (i % 3) as f64).collect();
        let weights = weighted.then_some(w.as_slice());
        let fit = ols(&x, &y, weights).unwrap();
        let fitted = x.predict(&fit.coefficients);
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max) * n as f64;
        for j in 0..x.ncols() {
            let g: f64 = (0..n).map(|i| weights.map_or(1.0, |w| w[i]) * x.column(j)[i] * (y[i] - fitted[i])).sum();
            prop_assert!(g.abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn rescaling_a_column_rescales_its_coefficient(seed in any::<u64>(), n in 8usize..60, c in 0.01f64..100.0) {
        let (x, y) = random_problem(seed, n, 2);
        let fit = ols(&x, &y, None).unwrap();
        let scaled_col: Vec<f64> = x.column(1).iter().map(|v| v * c).collect();
        let scaled = DesignMatrix::intercept(n).with("x0", scaled_col).unwrap().with("x1", x.column(2).to_vec()).unwrap();
        let refit = ols(&scaled, &y, None).unwrap();
        prop_assert!((refit.coefficients[1] * c - fit.coefficients[1]).abs() <= 1e-9 * (1.0 + fit.coefficients[1].abs()));
        for (a, b) in x.predict(&fit.coefficients).iter().zip(scaled.predict(&refit.coefficients)) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn logistic_path_climbs_and_gradient_vanishes(seed in any::<u64>(), n in 30usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = xs.iter().map(|x| if rng.gen::<f64>() < 1.0 / (1.0 + (-0.8 * x + 0.3f64).exp()) { 1.0 } else { 0.0 }).collect();
        prop_assume!(y.iter().any(|v| *v == 1.0) && y.iter().any(|v| *v == 0.0));
        let x = DesignMatrix::intercept(n).with("x", xs.clone()).unwrap();
        let fit = match logistic(&x, &y) {
            Ok(f) => f,
            Err(Error::Separation(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(fit.converged);
        prop_assert!(non_decreasing(&fit.path));
        let ll = |b0: f64, b1: f64| -> f64 {
            xs.iter().zip(&y).map(|(xi, yi)| { let e = b0 + b1 * xi; yi * e - (1.0 + e.exp()).ln() }).sum::<f64>() / n as f64
        };
        let (b0, b1, h) = (fit.coefficients[0], fit.coefficients[1], 1e-5);
        let g0 = (ll(b0 + h, b1) - ll(b0 - h, b1)) / (2.0 * h);
        let g1 = (ll(b0, b1 + h) - ll(b0, b1 - h)) / (2.0 * h);
        prop_assert!(g0.abs() < 1e-6 && g1.abs() < 1e-6, "{} {}", g0, g1);
    }
}

#[test]
fn intercept_only_logit_is_the_log_odds() {
    let y = [1.0, 0.0, 0.0, 1.0, 1.0];
    let fit = logistic(&DesignMatrix::intercept(5), &y).unwrap();
    assert!((fit.coefficients[0] - (0.6f64 / 0.4).ln()).abs() < 1e-9);
    assert!(fit.converged);
}

#[test]
fn one_parameter_logit_matches_grid_search() {
    let x = vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 1.5, -1.5];
    let y = vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
    let fit = logistic(&design(&[("x", x.clone())]), &y).unwrap();
    let best = (-50_000..=50_000)
        .map(|i| i as f64 * 1e-4)
        .max_by(|a, b| loglik(&x, &y, *a).partial_cmp(&loglik(&x, &y, *b)).unwrap())
        .unwrap();
    assert!((fit.coefficients[0] - best).abs() <= 1e-4, "{} vs {best}", fit.coefficients[0]);
    assert!(fit.coefficients[0] > 0.0);
}

#[test]
fn degenerate_logit_inputs_are_errors() {
    let x = DesignMatrix::intercept(4).with("x", vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
    assert!(matches!(logistic(&x, &[1.0; 4]), Err(Error::OneClass)));
    assert!(matches!(logistic(&x, &[0.0, 0.0, 1.0, 1.0]), Err(Error::Separation(_))));
    assert!(logistic(&x, &[0.0, 0.5, 1.0, 1.0]).is_err());
}

fn three_class_data() -> (Vec<f64>, Vec<usize>) {
    let x = vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, -0.2, 0.3, 0.8];
    let g = vec![1, 1, 2, 1, 2, 3, 2, 3, 3, 3, 1, 2];
    (x, g)
}

#[test]
fn two_class_multinomial_is_logistic() {
    let (xs, g) = three_class_data();
    let g2: Vec<usize> = g.iter().map(|c| if *c == 3 { 2 } else { 1 }).collect();
    let x = DesignMatrix::intercept(xs.len()).with("x", xs).unwrap();
    let multi = multinomial(&x, &g2, 2).unwrap();
    let y: Vec<f64> = g2.iter().map(|c| if *c == 2 { 1.0 } else { 0.0 }).collect();
    let logit = logistic(&x, &y).unwrap();
    for (a, b) in multi.coefficients.iter().zip(&logit.coefficients) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn intercept_only_multinomial_reproduces_frequencies() {
    let (_, g) = three_class_data();
    let x = DesignMatrix::intercept(g.len());
    let fit = multinomial(&x, &g, 3).unwrap();
    let probs = multinomial_predict(&x, &fit, 3);
    for k in 1..=3 {
        let freq = g.iter().filter(|c| **c == k).count() as f64 / g.len() as f64;
        assert!((probs[0][k - 1] - freq).abs() < 1e-8);
    }
}

#[test]
fn three_class_fit_matches_grid_search() {
    let (xs, g) = three_class_data();
    let x = design(&[("x", xs.clone())]);
    let fit = multinomial(&x, &g, 3).unwrap();
    assert!(non_decreasing(&fit.path));
    let ll = |b2: f64, b3: f64| -> f64 {
        xs.iter().zip(&g).map(|(xi, gi)| {
            let logits = [0.0, b2 * xi, b3 * xi];
            let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
            logits[gi - 1] - lse
        }).sum()
    };
    let step = 0.005;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for i in -800..=800 {
        for j in -800..=800 {
            let (b2, b3) = (i as f64 * step, j as f64 * step);
            let v = ll(b2, b3);
            if v > best.2 {
                best = (b2, b3, v);
            }
        }
    }
    assert!((fit.coefficients[0] - best.0).abs() <= step, "{:?} vs {best:?}", fit.coefficients);
    assert!((fit.coefficients[1] - best.1).abs() <= step, "{:?} vs {best:?}", fit.coefficients);
}

#[test]
fn class_probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 300;
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let x = DesignMatrix::intercept(n).with("x", xs).unwrap();
    let fit = multinomial(&x, &g, 4).unwrap();
    assert!(fit.converged);
    for row in multinomial_predict(&x, &fit, 4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    let e = logistic_predict(&x, &logistic(&x, &g.iter().map(|c| f64::from(u8::from(*c == 2))).collect::<Vec<_>>()).unwrap());
    assert!(e.iter().all(|p| *p > 0.0 && *p < 1.0));
}

#[test]
fn missing_class_is_reported() {
    let x = DesignMatrix::intercept(4);
    assert!(matches!(multinomial(&x, &[1, 1, 3, 3], 3), Err(Error::EmptyClass(2))));
}
