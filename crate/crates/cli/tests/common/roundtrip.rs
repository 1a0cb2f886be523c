//! Randomized file round-trip checks shared by the io tests and the
//! acceptance binary.

#![allow(dead_code)]

use ccpd::bench::shapes::random_cloud;
use ccpd::bench::synth::CorrespondenceGroundTruth;
use ccpd::ColoredPointSet;
use ccpd_cli::truth::{read_truth, write_truth};
use ccpd_cli::{hue_to_rgb, read_point_cloud, rgb_to_hue, write_point_cloud, Format};
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    runner.run(&strategy, test).map_err(|e| match e {
        TestError::Fail(why, input) => format!("{why} for input {input:?}"),
        TestError::Abort(why) => format!("aborted: {why}"),
    })
}

/// Positions within 1e-6 and colors within 1/255 per channel.
pub fn assert_close(a: &ColoredPointSet, b: &ColoredPointSet) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.len(), b.len());
    prop_assert_eq!(a.spatial_dim(), b.spatial_dim());
    prop_assert_eq!(a.color_dim(), b.color_dim());
    prop_assert!((a.positions() - b.positions()).amax() <= 1e-6);
    if a.color_dim() > 0 {
        prop_assert!((a.colors() - b.colors()).amax() <= 1.0 / 255.0 + 1e-12);
    }
    Ok(())
}

fn scaled(set: ColoredPointSet, scale: f64) -> ColoredPointSet {
    set.with_positions(set.positions() * scale).unwrap()
}

pub fn check_cloud_round_trips() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let shapes = (1usize..40, 2usize..=3, prop_oneof![Just(0usize), Just(1), Just(3)], any::<u64>(), 1e-3f64..1e3);
    run(48, shapes, |(count, ds, dc, seed, scale)| {
        let set = scaled(random_cloud(count, ds, dc, seed).unwrap(), scale);
        let csv = dir.path().join("cloud.csv");
        write_point_cloud(&set, &csv, None).unwrap();
        assert_close(&set, &read_point_cloud(&csv, None).unwrap())?;
        for (name, format) in [("cloud.ply", Format::Ply), ("cloud.pcd", Format::Pcd)] {
            let p = dir.path().join(name);
            let written = write_point_cloud(&set, &p, Some(format));
            if ds == 3 && dc != 1 {
                written.unwrap();
                assert_close(&set, &read_point_cloud(&p, None).unwrap())?;
            } else {
                prop_assert!(written.is_err());
            }
        }
        Ok(())
    })
}

pub fn check_truth_round_trips() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run(48, (1usize..200, any::<u64>()), |(count, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut anchors: Vec<usize> = (0..count).collect();
        anchors.shuffle(&mut rng);
        let keep = count / 2 + 1;
        let pairs: Vec<(usize, usize)> = (0..count).zip(anchors).take(keep).collect();
        let truth = CorrespondenceGroundTruth::new(pairs, count, count).unwrap();
        let p = dir.path().join("truth.csv");
        write_truth(&truth, &p).unwrap();
        prop_assert_eq!(read_truth(&p, count, count).unwrap(), truth);
        Ok(())
    })
}

pub fn check_hue_round_trips() -> Result<(), String> {
    run(256, 0.0f64..1.0, |h| {
        let hues = DMatrix::from_element(1, 1, h);
        let back = rgb_to_hue(&hue_to_rgb(&hues))[0];
        let diff = (back - h).abs().min(1.0 - (back - h).abs());
        prop_assert!(diff <= 1.0 / 255.0, "{} came back as {}", h, back);
        Ok(())
    })
}

pub fn all() -> Vec<(&'static str, fn() -> Result<(), String>)> {
    vec![
        ("point cloud file round-trips", check_cloud_round_trips as fn() -> Result<(), String>),
        ("ground truth file round-trips", check_truth_round_trips),
        ("hue round-trips", check_hue_round_trips),
    ]
}
