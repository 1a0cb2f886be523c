//! Randomized invariant checks. Each `check_*` runs a deterministic proptest
//! runner and returns the first failure, so the same checks can back both
//! ordinary tests and the acceptance binary.

#![allow(dead_code)]

use ccpd::bench::shapes::random_cloud;
use ccpd::bench::synth::{
    add_color_noise, inject_color_outliers, remove_points, rms_error, CorrespondenceGroundTruth,
    Side,
};
use ccpd::driver::initial_sigma_shape;
use ccpd::{
    build_kernel, ccpd_posterior, color_likelihoods, cpd_posterior, register, register_with,
    shape_likelihoods, solve_coefficients, ColoredPointSet, LikelihoodMatrices, MStepInputs,
    Method, RegistrationConfig, SigmaColor,
};
use nalgebra::{DMatrix, RowDVector, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};

use super::oracles::{random_set, rng};

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| match e {
        TestError::Fail(why, input) => format!("{why} for input {input:?}"),
        TestError::Abort(why) => format!("aborted: {why}"),
    })
}

/// `(model count, anchor count, spatial dim, seed)`.
fn sizes(max: usize) -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1..=max, 1..=max, 2usize..=3, any::<u64>())
}

fn pair(m: usize, n: usize, ds: usize, dc: usize, seed: u64) -> (ColoredPointSet, ColoredPointSet) {
    let mut r = rng(seed);
    let anchor = random_set(&mut r, n, ds, dc);
    let model = random_set(&mut r, m, ds, dc);
    (anchor, model)
}

fn likelihoods(anchor: &ColoredPointSet, model: &ColoredPointSet, s2: f64, sc: f64) -> LikelihoodMatrices {
    let shape = shape_likelihoods(anchor, model.positions(), s2).unwrap();
    let color = color_likelihoods(anchor, model, sc).unwrap();
    LikelihoodMatrices::from_densities(&shape, Some(&color), s2, sc).unwrap()
}

pub fn check_kernel_symmetric_psd() -> Result<(), String> {
    run(32, (any::<u64>(), 0.1f64..3.0), |(seed, beta)| {
        let y = random_set(&mut rng(seed), 20, 3, 0);
        let g = build_kernel(y.positions(), beta);
        prop_assert_eq!(&g, &g.transpose());
        let min = SymmetricEigen::new(g).eigenvalues.min();
        prop_assert!(min >= -1e-10, "smallest eigenvalue {}", min);
        Ok(())
    })
}

pub fn check_posterior_bounds() -> Result<(), String> {
    let strategy = (sizes(12), 0.05f64..2.0, 0.05f64..1.0, 0.0f64..0.9, 0.2f64..3.0, 0.2f64..3.0);
    run(64, strategy, |((m, n, ds, seed), s2, sc, alpha, ws, wc)| {
        let (a, b) = pair(m, n, ds, 3, seed);
        let lik = likelihoods(&a, &b, s2, sc);
        let unit = RegistrationConfig {
            alpha,
            sigma_color: SigmaColor::Fixed(sc),
            ..RegistrationConfig::default()
        };
        let p = ccpd_posterior(&lik, &unit).unwrap();
        prop_assert!(p.weights.iter().all(|v| v.is_finite() && *v >= 0.0));
        for j in 0..n {
            prop_assert!(p.weights.column(j).sum() <= 1.0 + 1e-9);
        }
        let weighted = RegistrationConfig {
            w_shape: ws,
            w_color: wc,
            ..unit.clone()
        };
        let p = ccpd_posterior(&lik, &weighted).unwrap();
        prop_assert!(p.weights.iter().all(|v| v.is_finite() && *v >= 0.0));

        let c = cpd_posterior(&lik, alpha).unwrap();
        for j in 0..n {
            let total = c.weights.column(j).sum() + c.outlier_mass[j];
            prop_assert!((total - 1.0).abs() <= 1e-12, "column {} sums to {}", j, total);
        }
        Ok(())
    })
}

pub fn check_cpd_reduction() -> Result<(), String> {
    run(64, (sizes(12), 0.05f64..2.0, 0.0f64..0.9), |((m, n, ds, seed), s2, alpha)| {
        let (a, b) = pair(m, n, ds, 3, seed);
        let lik = likelihoods(&a, &b, s2, 0.3);
        let config = RegistrationConfig {
            alpha,
            w_shape: 1.0,
            w_color: 0.0,
            color_outlier_term: false,
            ..RegistrationConfig::default()
        };
        let p = ccpd_posterior(&lik, &config).unwrap();
        let q = cpd_posterior(&lik, alpha).unwrap();
        for (x, y) in p.weights.iter().zip(q.weights.iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        Ok(())
    })
}

pub fn check_scale_covariance() -> Result<(), String> {
    run(64, (sizes(10), 0.05f64..2.0, 0.1f64..10.0), |((m, n, ds, seed), s2, k)| {
        let (a, b) = pair(m, n, ds, 0, seed);
        let p = shape_likelihoods(&a, b.positions(), s2).unwrap();
        let a2 = a.with_positions(a.positions() * k).unwrap();
        let q = shape_likelihoods(&a2, &(b.positions() * k), s2 * k * k).unwrap();
        for col in 0..n {
            for i in 0..m {
                for j in 0..m {
                    if p[(j, col)] > 1e-250 && q[(j, col)] > 1e-250 {
                        let r1 = p[(i, col)] / p[(j, col)];
                        let r2 = q[(i, col)] / q[(j, col)];
                        prop_assert!((r1 - r2).abs() <= 1e-12 * r1.abs().max(1e-300) + 1e-300);
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn check_color_independent_of_positions() -> Result<(), String> {
    run(32, (sizes(10), 0.05f64..1.0), |((m, n, ds, seed), sc)| {
        let (a, b) = pair(m, n, ds, 3, seed);
        let before = color_likelihoods(&a, &b, sc).unwrap();
        let moved = b.with_positions(b.positions().map(|v| 3.0 * v - 0.7)).unwrap();
        prop_assert_eq!(before, color_likelihoods(&a, &moved, sc).unwrap());
        Ok(())
    })
}

pub fn check_shrinking_sharpens() -> Result<(), String> {
    run(64, (sizes(10), 0.05f64..1.0, 0.2f64..0.95), |((m, n, ds, seed), s2, shrink)| {
        let (a, b) = pair(m, n, ds, 0, seed);
        let wide = shape_likelihoods(&a, b.positions(), s2).unwrap();
        let narrow = shape_likelihoods(&a, b.positions(), s2 * shrink).unwrap();
        for col in 0..n {
            for i in 0..m {
                let d2 = (a.positions().row(col) - b.positions().row(i)).norm_squared();
                if d2 > s2 * ds as f64 {
                    prop_assert!(narrow[(i, col)] <= wide[(i, col)]);
                }
            }
            let ratio = |c: nalgebra::DVectorView<f64>| c.max() / c.min();
            let (rw, rn) = (ratio(wide.column(col)), ratio(narrow.column(col)));
            if rw.is_finite() && rn.is_finite() && rw > 1.0 + 1e-9 {
                prop_assert!(rn > rw, "ratio {} did not sharpen past {}", rn, rw);
            }
        }
        Ok(())
    })
}

pub fn check_regularization_dominance() -> Result<(), String> {
    run(32, (sizes(12), 0.1f64..1.0), |((m, n, ds, seed), s2)| {
        let (a, b) = pair(m, n, ds, 0, seed);
        let shape = shape_likelihoods(&a, b.positions(), s2).unwrap();
        let lik = LikelihoodMatrices::from_densities(&shape, None, s2, 1.0).unwrap();
        let p = cpd_posterior(&lik, 0.1).unwrap();
        let g = build_kernel(b.positions(), 2.0);
        let w = solve_coefficients(&MStepInputs {
            posterior: &p,
            anchor_positions: a.positions(),
            model_positions: b.positions(),
            kernel: &g,
            lambda: 1e8,
            sigma_shape_sq: s2,
        })
        .unwrap();
        let p1 = p.row_sums();
        let mut rhs = &p.weights * a.positions();
        for i in 0..m {
            let yi = b.positions().row(i) * p1[i];
            let mut r = rhs.row_mut(i);
            r -= yi;
        }
        let gw = (&g * &w).norm();
        prop_assert!(gw <= 1e-4 * rhs.norm() + 1e-300, "|GW| = {} vs |rhs| = {}", gw, rhs.norm());
        Ok(())
    })
}

pub fn check_translation_equivariance() -> Result<(), String> {
    let shift = proptest::collection::vec(-5.0f64..5.0, 3);
    run(32, (sizes(12), shift), |((m, n, ds, seed), v)| {
        let (a, b) = pair(m, n, ds, 1, seed);
        let config = RegistrationConfig {
            max_iterations: 1,
            sigma_color: SigmaColor::Fixed(0.3),
            ..RegistrationConfig::default()
        };
        let v = RowDVector::from_iterator(ds, v.into_iter().take(ds));
        let shift = |s: &ColoredPointSet| {
            let mut p = s.positions().clone();
            for mut r in p.row_iter_mut() {
                r += &v;
            }
            s.with_positions(p).unwrap()
        };
        let r1 = register(&a, &b, &config).unwrap();
        let r2 = register(&shift(&a), &shift(&b), &config).unwrap();
        let w1 = &r1.field.coefficients;
        let w2 = &r2.field.coefficients;
        let scale = w1.amax().max(1.0);
        prop_assert!((w1 - w2).amax() <= 1e-9 * scale, "coefficients moved by {}", (w1 - w2).amax());
        let t1 = shift(&r1.transformed);
        prop_assert!((t1.positions() - r2.transformed.positions()).amax() <= 1e-9 * (1.0 + v.amax()));
        Ok(())
    })
}

pub fn check_registration_traces() -> Result<(), String> {
    run(16, (sizes(25), 0.0f64..0.5), |((m, n, ds, seed), noise)| {
        let (a, _) = pair(m, n, ds, 3, seed);
        let mut r = rng(seed ^ 0x5eed);
        let b = random_set(&mut r, m, ds, 3);
        let b = b
            .with_positions(b.positions().map(|v| v * (1.0 - noise)))
            .unwrap();
        let config = RegistrationConfig {
            max_iterations: 40,
            ..RegistrationConfig::default()
        };
        for method in [Method::Ccpd, Method::Cpd] {
            let report = register_with(method, &a, &b, &config).unwrap();
            let again = register_with(method, &a, &b, &config).unwrap();
            prop_assert_eq!(&report, &again);
            let init = initial_sigma_shape(a.positions(), b.positions());
            prop_assert!(report.objective_trace.iter().all(|v| v.is_finite()));
            prop_assert!(report
                .sigma_shape_trace
                .iter()
                .all(|s| *s > 0.0 && *s <= 10.0 * init));
            if report.converged {
                let t = &report.objective_trace;
                prop_assert!(t.len() >= 2);
                let (p, c) = (t[t.len() - 2], t[t.len() - 1]);
                prop_assert!((c - p).abs() / p.abs() < config.tolerance);
            }
        }
        Ok(())
    })
}

pub fn check_generators() -> Result<(), String> {
    run(32, (2usize..60, any::<u64>(), 0.0f64..0.9, 0.0f64..30.0), |(count, seed, frac, snr)| {
        let s = random_cloud(count, 3, 3, seed).unwrap();
        prop_assert_eq!(&s, &random_cloud(count, 3, 3, seed).unwrap());
        let truth = CorrespondenceGroundTruth::identity(count);
        let (kept, t) = remove_points(&s, &truth, Side::Anchor, frac, seed).unwrap();
        prop_assert_eq!(
            (kept.clone(), t.clone()),
            remove_points(&s, &truth, Side::Anchor, frac, seed).unwrap()
        );
        for &(i, n) in t.pairs() {
            prop_assert_eq!(kept.positions().row(n), s.positions().row(i));
            prop_assert_eq!(kept.colors().row(n), s.colors().row(i));
        }
        let noisy = add_color_noise(&s, snr, seed).unwrap();
        prop_assert_eq!(noisy.positions(), s.positions());
        prop_assert_eq!(&noisy, &add_color_noise(&s, snr, seed).unwrap());
        let out = inject_color_outliers(&s, frac, seed).unwrap();
        prop_assert_eq!(out.positions(), s.positions());
        Ok(())
    })
}

pub fn check_rms_invariances() -> Result<(), String> {
    let motion = (0.0f64..std::f64::consts::TAU, -3.0f64..3.0, -3.0f64..3.0);
    run(64, (2usize..30, any::<u64>(), motion), |(count, seed, (angle, tx, ty))| {
        let mut r = rng(seed);
        let a = random_set(&mut r, count, 2, 0);
        let b = random_set(&mut r, count, 2, 0);
        let truth = CorrespondenceGroundTruth::identity(count);
        let base = rms_error(&b, &a, &truth).unwrap();
        let reversed: Vec<_> = truth.pairs().iter().rev().copied().collect();
        let reversed = CorrespondenceGroundTruth::new(reversed, count, count).unwrap();
        prop_assert!((rms_error(&b, &a, &reversed).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
        let (c, s) = (angle.cos(), angle.sin());
        let rot = DMatrix::from_row_slice(2, 2, &[c, s, -s, c]);
        let mv = |p: &ColoredPointSet| {
            let mut q = p.positions() * &rot;
            for mut row in q.row_iter_mut() {
                row[0] += tx;
                row[1] += ty;
            }
            p.with_positions(q).unwrap()
        };
        let moved = rms_error(&mv(&b), &mv(&a), &truth).unwrap();
        prop_assert!((moved - base).abs() <= 1e-9 * base.max(1.0));
        Ok(())
    })
}

/// Every check with its name.
pub fn all() -> Vec<(&'static str, fn() -> Result<(), String>)> {
    vec![
        ("kernel symmetric PSD", check_kernel_symmetric_psd as fn() -> Result<(), String>),
        ("posterior bounds", check_posterior_bounds),
        ("CPD reduction of the posterior", check_cpd_reduction),
        ("shape likelihood scale covariance", check_scale_covariance),
        ("color likelihoods ignore positions", check_color_independent_of_positions),
        ("shrinking sigma sharpens columns", check_shrinking_sharpens),
        ("regularization dominance", check_regularization_dominance),
        ("translation equivariance", check_translation_equivariance),
        ("registration traces and determinism", check_registration_traces),
        ("generators", check_generators),
        ("RMS invariances", check_rms_invariances),
    ]
}
