//! Estimators checked against independent hand-written oracles.

mod common;

use common::solve;
use gformula::cohort::{CountingProcessRow, CountingProcessTable, CovariateColumn};
use gformula::estimators::{
    fit_additive_hazards, fit_linear, fit_logistic, lin_ying_system, predict_survival,
    CovariatePath, LogisticOptions,
};
use gformula::rng::StreamKey;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = StreamKey::new(101).rng();
    let (n, q) = (50, 3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![1.0, 5.0 + 2.0 * normal(&mut rng), normal(&mut rng)])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 1.0 + 0.3 * r[1] - 2.0 * r[2] + 0.5 * normal(&mut rng))
        .collect();

    let mut xtx = vec![vec![0.0; q]; q];
    let mut xty = vec![0.0; q];
    for (r, yi) in rows.iter().zip(&y) {
        for i in 0..q {
            xty[i] += r[i] * yi;
            for j in 0..q {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    let oracle = solve(xtx, xty);

    let design = DMatrix::from_fn(n, q, |i, j| rows[i][j]);
    let fit = fit_linear(&design, &y).unwrap();
    for (a, b) in fit.coefficients.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

/// Newton-Raphson written out with explicit gradient and Hessian loops.
fn scripted_newton(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let q = rows[0].len();
    let mut beta = vec![0.0; q];
    for _ in 0..100 {
        let mut grad = vec![0.0; q];
        let mut hess = vec![vec![0.0; q]; q];
        for (r, yi) in rows.iter().zip(y) {
            let eta: f64 = r.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            for i in 0..q {
                grad[i] += (yi - p) * r[i];
                for j in 0..q {
                    hess[i][j] += p * (1.0 - p) * r[i] * r[j];
                }
            }
        }
        let step = solve(hess, grad);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if step.iter().all(|s| s.abs() < 1e-15) {
            break;
        }
    }
    beta
}

#[test]
fn intercept_only_logistic_is_the_log_odds() {
    for (ones, n) in [(50usize, 200usize), (3, 4), (1, 7)] {
        let y: Vec<f64> = (0..n).map(|i| (i < ones) as u8 as f64).collect();
        let fit = fit_logistic(&DMatrix::from_element(n, 1, 1.0), &y, LogisticOptions::default()).unwrap();
        let p = ones as f64 / n as f64;
        assert!((fit.coefficients[0] - (p / (1.0 - p)).ln()).abs() <= 1e-6);
    }
}

#[test]
fn logistic_matches_scripted_newton() {
    let mut rng = StreamKey::new(202).rng();
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| vec![1.0, normal(&mut rng), 120.0 + 15.0 * normal(&mut rng)])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let p = 1.0 / (1.0 + (-(-4.0 + 0.8 * r[1] + 0.025 * r[2])).exp());
            (rng.random::<f64>() < p) as u8 as f64
        })
        .collect();
    let oracle = scripted_newton(&rows, &y);
    let design = DMatrix::from_fn(200, 3, |i, j| rows[i][j]);
    let fit = fit_logistic(&design, &y, LogisticOptions::default()).unwrap();
    assert!(fit.converged);
    for (a, b) in fit.coefficients.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }

    let beta = DVector::from_vec(fit.coefficients.clone());
    let eta = &design * beta;
    let resid = DVector::from_iterator(200, eta.iter().zip(&y).map(|(e, yi)| yi - 1.0 / (1.0 + (-e).exp())));
    assert!((design.transpose() * resid).amax() <= 1e-6);
}

fn row(subject: usize, t_start: f64, t_stop: f64, event: bool, x: &[f64]) -> CountingProcessRow {
    CountingProcessRow {
        subject,
        t_start,
        t_stop,
        outcome_event: event,
        exposure: x[0],
        baseline: vec![],
        current_mediator: x[1],
    }
}

fn table(rows: Vec<CountingProcessRow>) -> CountingProcessTable {
    let n = rows.iter().map(|r| r.subject).max().map_or(0, |m| m + 1);
    CountingProcessTable {
        subject_ids: (0..n).map(|i| i.to_string()).collect(),
        rows,
        covariate_names: vec![],
    }
}

const COLS: [CovariateColumn; 2] = [CovariateColumn::Exposure, CovariateColumn::Mediator];

/// Time-varying counting-process data with tied event times.
fn small_table() -> CountingProcessTable {
    let mut rng = StreamKey::new(303).rng();
    let mut rows = Vec::new();
    for i in 0..60 {
        let a: f64 = rng.random_range(0.0..3.0);
        let mut t = 0.0;
        for k in 0..3 {
            let m = 100.0 + 10.0 * normal(&mut rng) + 5.0 * a;
            let stop: f64 = if k == 2 { 12.0 } else { 4.0 * (k + 1) as f64 };
            let ev_time = (rng.random_range(t..stop + 6.0) * 2.0f64).round() / 2.0;
            if ev_time > t && ev_time <= stop && rng.random::<f64>() < 0.4 {
                rows.push(row(i, t, ev_time, true, &[a, m]));
                break;
            }
            rows.push(row(i, t, stop, false, &[a, m]));
            t = stop;
        }
    }
    table(rows)
}

/// The estimating equation evaluated directly from its definition: the `dt`
/// integral between consecutive breakpoints and the `dN` sum at each event.
fn brute_force_lin_ying(t: &CountingProcessTable) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = |r: &CountingProcessRow| [r.exposure, r.current_mediator];
    let mut breaks: Vec<f64> = t.rows.iter().flat_map(|r| [r.t_start, r.t_stop]).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let at_risk = |s: f64| t.rows.iter().filter(move |r| r.t_start < s && s <= r.t_stop);
    let mean = |s: f64| {
        let rs: Vec<_> = at_risk(s).collect();
        let n = rs.len() as f64;
        [0, 1].map(|j| rs.iter().map(|r| x(r)[j]).sum::<f64>() / n)
    };

    let mut a = vec![vec![0.0; 2]; 2];
    for w in breaks.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let xbar = mean(mid);
        for r in at_risk(mid) {
            let d = [x(r)[0] - xbar[0], x(r)[1] - xbar[1]];
            for i in 0..2 {
                for j in 0..2 {
                    a[i][j] += d[i] * d[j] * (w[1] - w[0]);
                }
            }
        }
    }
    let mut b = vec![0.0; 2];
    for r in t.rows.iter().filter(|r| r.outcome_event) {
        let xbar = mean(r.t_stop);
        for j in 0..2 {
            b[j] += x(r)[j] - xbar[j];
        }
    }
    (a, b)
}

#[test]
fn lin_ying_matches_brute_force() {
    let t = small_table();
    let (a, b) = brute_force_lin_ying(&t);
    let oracle = solve(a.clone(), b.clone());
    let fit = fit_additive_hazards(&t, &COLS).unwrap();
    for (x, y) in fit.coefficients.iter().zip(&oracle) {
        assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-6), "{x} vs {y}");
    }

    let (sa, sb) = lin_ying_system(&t, &COLS);
    for i in 0..2 {
        assert!((sb[i] - b[i]).abs() <= 1e-8 * b[i].abs().max(1.0));
        for j in 0..2 {
            assert!((sa[(i, j)] - a[i][j]).abs() <= 1e-8 * a[i][j].abs().max(1.0));
        }
    }
    let beta = DVector::from_vec(fit.coefficients.clone());
    let residual = &sa * beta - &sb;
    assert!(residual.amax() <= 1e-8 * sb.amax().max(sa.amax()));
}

#[test]
fn lin_ying_baseline_is_breslow_type() {
    let t = small_table();
    let fit = fit_additive_hazards(&t, &COLS).unwrap();
    let beta = &fit.coefficients;
    // Λ̂₀(s) = Σ_{events ≤ s} dN/R − β̂ᵀ∫₀ˢ X̄, evaluated by brute force.
    for s in [2.5, 4.0, 7.25, 11.0] {
        let mut jumps = 0.0;
        let mut events: Vec<f64> = t.rows.iter().filter(|r| r.outcome_event && r.t_stop <= s).map(|r| r.t_stop).collect();
        events.sort_by(f64::total_cmp);
        events.dedup();
        for e in events {
            let d = t.rows.iter().filter(|r| r.outcome_event && r.t_stop == e).count() as f64;
            let n = t.rows.iter().filter(|r| r.t_start < e && e <= r.t_stop).count() as f64;
            jumps += d / n;
        }
        let grid = 20_000;
        let mut drift = 0.0;
        for g in 0..grid {
            let u = (g as f64 + 0.5) * s / grid as f64;
            let rs: Vec<_> = t.rows.iter().filter(|r| r.t_start < u && u <= r.t_stop).collect();
            if rs.is_empty() {
                continue;
            }
            let n = rs.len() as f64;
            let xbar = [
                rs.iter().map(|r| r.exposure).sum::<f64>() / n,
                rs.iter().map(|r| r.current_mediator).sum::<f64>() / n,
            ];
            drift += (beta[0] * xbar[0] + beta[1] * xbar[1]) * s / grid as f64;
        }
        let expected = jumps - drift;
        let got = fit.baseline_cumhaz.at(s);
        assert!((got - expected).abs() < 1e-3 * expected.abs().max(0.01), "s={s}: {got} vs {expected}");
    }
}

/// Exponential times with hazard `0.10 + 0.05 x`, `x ∈ {0, 1}`, censored at 10.
fn exponential_table(n: usize, seed: u64) -> CountingProcessTable {
    let mut rng = StreamKey::new(seed).rng();
    let rows = (0..n)
        .map(|i| {
            let x = (i % 2) as f64;
            let t = -rng.open_uniform().ln() / (0.10 + 0.05 * x);
            let stop = t.min(10.0);
            row(i, 0.0, stop, t <= 10.0, &[x, 0.0])
        })
        .collect();
    table(rows)
}

#[test]
fn lin_ying_recovers_known_coefficient() {
    let t = exponential_table(10_000, 404);
    let fit = fit_additive_hazards(&t, &[CovariateColumn::Exposure]).unwrap();
    let b = fit.coefficients[0];
    assert!((b - 0.05).abs() <= 0.01, "β̂ = {b}");
}

#[test]
fn predicted_survival_matches_exponential_closed_form() {
    let t = exponential_table(10_000, 505);
    let fit = fit_additive_hazards(&t, &[CovariateColumn::Exposure]).unwrap();
    for x in [0.0, 1.0] {
        for h in [1.0, 5.0, 9.0] {
            let s = predict_survival(&fit, &CovariatePath::constant(vec![x]), h).unwrap().probability;
            let truth: f64 = (-(0.10 + 0.05 * x) * h).exp();
            // Binomial standard error for the 5,000 subjects in the arm.
            let se = (truth * (1.0 - truth) / 5_000.0).sqrt();
            assert!((s - truth).abs() < 4.0 * se, "x={x} h={h}: {s} vs {truth}");
        }
    }
}

#[test]
fn independent_covariate_is_near_zero() {
    // Monte Carlo spread of β̂ for a covariate unrelated to the outcome.
    let fits: Vec<f64> = (0..20)
        .map(|rep| {
            let mut t = exponential_table(2_000, 600 + rep);
            let mut rng = StreamKey::new(700 + rep).rng();
            for r in &mut t.rows {
                r.current_mediator = normal(&mut rng);
            }
            fit_additive_hazards(&t, &[CovariateColumn::Exposure, CovariateColumn::Mediator])
                .unwrap()
                .coefficients[1]
        })
        .collect();
    let mean = fits.iter().sum::<f64>() / fits.len() as f64;
    let sd = (fits.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (fits.len() - 1) as f64).sqrt();
    for b in &fits {
        assert!(b.abs() <= 3.0 * sd + 1e-12, "{b} vs sd {sd}");
    }
    assert!(mean.abs() <= 3.0 * sd / (fits.len() as f64).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn survival_is_non_increasing_in_horizon(seed in 0u64..1000, h1 in 0.0f64..15.0, h2 in 0.0f64..15.0) {
        let t = exponential_table(300, seed);
        let fit = fit_additive_hazards(&t, &[CovariateColumn::Exposure]).unwrap();
        let path = CovariatePath { knots: vec![0.0, 3.0], values: vec![vec![0.0], vec![1.0]] };
        let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
        let s_lo = predict_survival(&fit, &path, lo).unwrap();
        let s_hi = predict_survival(&fit, &path, hi).unwrap();
        prop_assume!(fit.coefficients[0] >= -0.1);
        prop_assert!(s_hi.probability <= s_lo.probability + 1e-12);
        prop_assert_eq!(predict_survival(&fit, &path, 0.0).unwrap().probability, 1.0);
    }
}
