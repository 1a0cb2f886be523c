use std::collections::BTreeMap;

use ccpd::ColoredPointSet;
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Downsample {
    /// Keep exactly `target` points chosen at random.
    Uniform { target: usize, seed: u64 },
    /// Replace the points of each occupied cubic cell by their centroid and
    /// mean color.
    Voxel { cell: f64 },
}

pub fn downsample(set: &ColoredPointSet, strategy: Downsample) -> Result<ColoredPointSet> {
    match strategy {
        Downsample::Uniform { target, seed } => {
            if target > set.len() || target == 0 {
                return Err(CliError::Data(format!(
                    "cannot keep {target} of {} points",
                    set.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = sample(&mut rng, set.len(), target).into_vec();
            keep.sort_unstable();
            Ok(set.select(&keep)?)
        }
        Downsample::Voxel { cell } => {
            if !(cell > 0.0 && cell.is_finite()) {
                return Err(CliError::Data(format!("voxel size must be positive, got {cell}")));
            }
            let mut cells: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
            for (i, p) in set.positions().row_iter().enumerate() {
                let key = p.iter().map(|v| (v / cell).floor() as i64).collect();
                cells.entry(key).or_default().push(i);
            }
            let (ds, dc) = (set.spatial_dim(), set.color_dim());
            let mut pos = DMatrix::zeros(cells.len(), ds);
            let mut col = DMatrix::<f64>::zeros(cells.len(), dc);
            for (row, members) in cells.values().enumerate() {
                let k = members.len() as f64;
                for &i in members {
                    for d in 0..ds {
                        pos[(row, d)] += set.positions()[(i, d)] / k;
                    }
                    for d in 0..dc {
                        col[(row, d)] += set.colors()[(i, d)] / k;
                    }
                }
                for d in 0..dc {
                    col[(row, d)] = col[(row, d)].clamp(0.0, 1.0);
                }
            }
            Ok(ColoredPointSet::new(pos, col)?)
        }
    }
}
