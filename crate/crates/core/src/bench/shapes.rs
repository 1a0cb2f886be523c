//! Deterministic synthetic point sets for tests and benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::pointset::ColoredPointSet;

/// Outline vertices of a stylized fish, nose at `(1, 0)`, traversed
/// counter-clockwise: head, dorsal fin, tail, ventral fin.
const FISH_OUTLINE: [[f64; 2]; 16] = [
    [1.0, 0.0],
    [0.7, 0.3],
    [0.3, 0.42],
    [0.1, 0.75],
    [-0.1, 0.4],
    [-0.5, 0.22],
    [-0.75, 0.06],
    [-1.05, 0.45],
    [-0.9, 0.0],
    [-1.05, -0.45],
    [-0.75, -0.06],
    [-0.5, -0.22],
    [-0.1, -0.4],
    [0.1, -0.7],
    [0.3, -0.42],
    [0.7, -0.3],
];

/// Number of hue regions painted on [`fish`].
pub const FISH_REGIONS: usize = 9;

/// `count` points spaced evenly by arc length along a closed fish outline,
/// split into [`FISH_REGIONS`] contiguous regions. Each region carries one
/// hue (`region / FISH_REGIONS`) as a single color channel.
pub fn fish(count: usize) -> Result<ColoredPointSet> {
    let k = FISH_OUTLINE.len();
    let seg_len: Vec<f64> = (0..k)
        .map(|i| {
            let a = FISH_OUTLINE[i];
            let b = FISH_OUTLINE[(i + 1) % k];
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        })
        .collect();
    let total: f64 = seg_len.iter().sum();
    let mut pos = DMatrix::zeros(count, 2);
    let mut col = DMatrix::zeros(count, 1);
    for p in 0..count {
        let frac = p as f64 / count as f64;
        let mut s = frac * total;
        let mut seg = 0;
        while s > seg_len[seg] && seg + 1 < k {
            s -= seg_len[seg];
            seg += 1;
        }
        let a = FISH_OUTLINE[seg];
        let b = FISH_OUTLINE[(seg + 1) % k];
        let t = s / seg_len[seg];
        pos[(p, 0)] = a[0] + t * (b[0] - a[0]);
        pos[(p, 1)] = a[1] + t * (b[1] - a[1]);
        let region = ((frac * FISH_REGIONS as f64) as usize).min(FISH_REGIONS - 1);
        col[(p, 0)] = region as f64 / FISH_REGIONS as f64;
    }
    ColoredPointSet::new(pos, col)
}

/// Uniform positions in `[-1, 1]^ds` with uniform colors in `[0, 1]^dc`.
pub fn random_cloud(count: usize, ds: usize, dc: usize, seed: u64) -> Result<ColoredPointSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = DMatrix::from_fn(count, ds, |_, _| rng.random_range(-1.0..1.0));
    let col = DMatrix::from_fn(count, dc, |_, _| rng.random_range(0.0..1.0));
    ColoredPointSet::new(pos, col)
}

/// Points on the unit sphere, RGB-colored by octant so that color varies
/// smoothly-by-region as on a painted surface.
pub fn painted_sphere(count: usize, seed: u64) -> Result<ColoredPointSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = DMatrix::zeros(count, 3);
    let mut col = DMatrix::zeros(count, 3);
    for i in 0..count {
        let v = loop {
            let v = [
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0f64),
            ];
            let r2 = v.iter().map(|c| c * c).sum::<f64>();
            if r2 > 1e-6 && r2 <= 1.0 {
                let r = r2.sqrt();
                break [v[0] / r, v[1] / r, v[2] / r];
            }
        };
        for k in 0..3 {
            pos[(i, k)] = v[k];
            col[(i, k)] = if v[k] > 0.0 { 0.85 } else { 0.15 };
        }
    }
    ColoredPointSet::new(pos, col)
}
