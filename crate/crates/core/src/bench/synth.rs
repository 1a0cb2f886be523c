//! Corruptions applied to synthetic instances, and the metrics used to score
//! registrations against known correspondences.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CcpdError, Result};
use crate::pointset::ColoredPointSet;

/// Known true matches as `(model index, anchor index)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceGroundTruth {
    pairs: Vec<(usize, usize)>,
}

impl CorrespondenceGroundTruth {
    /// Checks that indices are in range and that no index repeats on either
    /// side.
    pub fn new(pairs: Vec<(usize, usize)>, model_count: usize, anchor_count: usize) -> Result<Self> {
        let mut seen_m = vec![false; model_count];
        let mut seen_a = vec![false; anchor_count];
        for &(i, n) in &pairs {
            if i >= model_count || n >= anchor_count {
                return Err(CcpdError::InvalidArgument(format!(
                    "correspondence ({i}, {n}) out of range for {model_count} model and {anchor_count} anchor points"
                )));
            }
            if seen_m[i] || seen_a[n] {
                return Err(CcpdError::InvalidArgument(format!(
                    "correspondence ({i}, {n}) repeats an index"
                )));
            }
            seen_m[i] = true;
            seen_a[n] = true;
        }
        Ok(Self { pairs })
    }

    /// Point `i` of the model matches point `i` of the anchor.
    pub fn identity(count: usize) -> Self {
        Self {
            pairs: (0..count).map(|i| (i, i)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Which set of a registration instance an operation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Anchor,
    Model,
}

/// One Gaussian bump of a displacement field.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfControl {
    pub center: Vec<f64>,
    pub amplitude: Vec<f64>,
}

/// A smooth displacement field: the sum over controls of
/// `amplitude * exp(-|p - center|^2 / (2 radius^2))`.
#[derive(Debug, Clone, PartialEq)]
pub enum Warp {
    None,
    Rbf {
        radius: f64,
        controls: Vec<RbfControl>,
    },
    /// `controls` bumps with centers drawn uniformly in the bounding box of
    /// the warped set and amplitude components uniform in
    /// `[-amplitude, amplitude]`.
    Random {
        controls: usize,
        amplitude: f64,
        radius: f64,
    },
}

impl Warp {
    /// Materializes a random field for `set`. Explicit fields are returned
    /// unchanged.
    pub fn resolve(&self, set: &ColoredPointSet, seed: u64) -> Warp {
        match *self {
            Warp::Random {
                controls,
                amplitude,
                radius,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = set.positions();
                let d = p.ncols();
                let lo: Vec<f64> = (0..d).map(|k| p.column(k).min()).collect();
                let hi: Vec<f64> = (0..d).map(|k| p.column(k).max()).collect();
                let controls = (0..controls)
                    .map(|_| RbfControl {
                        center: (0..d)
                            .map(|k| {
                                if hi[k] > lo[k] {
                                    rng.random_range(lo[k]..=hi[k])
                                } else {
                                    lo[k]
                                }
                            })
                            .collect(),
                        amplitude: (0..d)
                            .map(|_| {
                                if amplitude > 0.0 {
                                    rng.random_range(-amplitude..=amplitude)
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    })
                    .collect();
                Warp::Rbf { radius, controls }
            }
            _ => self.clone(),
        }
    }
}

/// Displaces every position by the field; colors are unchanged and the true
/// correspondence is the identity.
pub fn apply_warp(set: &ColoredPointSet, warp: &Warp, seed: u64) -> Result<ColoredPointSet> {
    let (radius, controls) = match warp.resolve(set, seed) {
        Warp::Rbf { radius, controls } => (radius, controls),
        _ => return Ok(set.clone()),
    };
    if !(radius > 0.0) {
        return Err(CcpdError::InvalidArgument(format!(
            "warp radius must be positive, got {radius}"
        )));
    }
    let d = set.spatial_dim();
    if controls
        .iter()
        .any(|c| c.center.len() != d || c.amplitude.len() != d)
    {
        return Err(CcpdError::DimensionMismatch(format!(
            "warp controls must be {d}-D"
        )));
    }
    let mut out = set.positions().clone();
    let inv = 1.0 / (2.0 * radius * radius);
    for (mut row, orig) in out.row_iter_mut().zip(set.positions().row_iter()) {
        for c in &controls {
            let d2: f64 = (0..d).map(|k| (orig[k] - c.center[k]).powi(2)).sum();
            let w = (-d2 * inv).exp();
            for k in 0..d {
                row[k] += w * c.amplitude[k];
            }
        }
    }
    set.with_positions(out)
}

/// Removes `floor(fraction * count)` points chosen uniformly at random and
/// prunes the ground truth to the surviving pairs, re-indexed. `side` says
/// whether `set` is the anchor or the model of `truth`.
pub fn remove_points(
    set: &ColoredPointSet,
    truth: &CorrespondenceGroundTruth,
    side: Side,
    fraction: f64,
    seed: u64,
) -> Result<(ColoredPointSet, CorrespondenceGroundTruth)> {
    let remove = removal_count(set.len(), fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut removed = vec![false; set.len()];
    for i in sample(&mut rng, set.len(), remove) {
        removed[i] = true;
    }
    prune(set, truth, side, &removed)
}

/// Removes the `floor(fraction * count)` points nearest to a randomly chosen
/// point of the set, cutting one contiguous piece out of the shape. Truth is
/// pruned as in [`remove_points`].
pub fn remove_cluster(
    set: &ColoredPointSet,
    truth: &CorrespondenceGroundTruth,
    side: Side,
    fraction: f64,
    seed: u64,
) -> Result<(ColoredPointSet, CorrespondenceGroundTruth)> {
    let remove = removal_count(set.len(), fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = set.positions();
    let center = p.row(rng.random_range(0..set.len())).into_owned();
    let mut order: Vec<(f64, usize)> = p
        .row_iter()
        .enumerate()
        .map(|(i, r)| ((r - &center).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut removed = vec![false; set.len()];
    for &(_, i) in &order[..remove] {
        removed[i] = true;
    }
    prune(set, truth, side, &removed)
}

fn removal_count(count: usize, fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CcpdError::InvalidArgument(format!(
            "removal fraction must be in [0, 1), got {fraction}"
        )));
    }
    let remove = (fraction * count as f64).floor() as usize;
    if remove >= count {
        return Err(CcpdError::InvalidArgument(
            "removal would empty the set".into(),
        ));
    }
    Ok(remove)
}

fn prune(
    set: &ColoredPointSet,
    truth: &CorrespondenceGroundTruth,
    side: Side,
    removed: &[bool],
) -> Result<(ColoredPointSet, CorrespondenceGroundTruth)> {
    let count = set.len();
    let keep: Vec<usize> = (0..count).filter(|&i| !removed[i]).collect();
    let mut new_index = vec![usize::MAX; count];
    for (new, &old) in keep.iter().enumerate() {
        new_index[old] = new;
    }
    let pairs = truth
        .pairs()
        .iter()
        .filter_map(|&(i, n)| match side {
            Side::Model if i < count && !removed[i] => Some((new_index[i], n)),
            Side::Anchor if n < count && !removed[n] => Some((i, new_index[n])),
            _ => None,
        })
        .collect();
    Ok((set.select(&keep)?, CorrespondenceGroundTruth { pairs }))
}

/// Adds i.i.d. Gaussian noise to every color channel at the given SNR in
/// decibels, then clamps to `[0, 1]`. Per channel, the noise variance is the
/// channel's mean square divided by `10^(snr_db / 10)`. An infinite SNR
/// leaves the set unchanged.
pub fn add_color_noise(set: &ColoredPointSet, snr_db: f64, seed: u64) -> Result<ColoredPointSet> {
    if snr_db == f64::INFINITY {
        return Ok(set.clone());
    }
    if !snr_db.is_finite() {
        return Err(CcpdError::InvalidArgument(format!(
            "SNR must be finite or +inf, got {snr_db}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut colors = set.colors().clone();
    for mut channel in colors.column_iter_mut() {
        let std = noise_std(channel.iter().copied(), snr_db);
        if std == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, std).map_err(|e| CcpdError::InvalidArgument(e.to_string()))?;
        for v in channel.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    set.with_colors(colors)
}

/// Noise standard deviation for one channel at `snr_db`.
pub fn noise_std(channel: impl ExactSizeIterator<Item = f64>, snr_db: f64) -> f64 {
    let n = channel.len();
    if n == 0 {
        return 0.0;
    }
    let power = channel.map(|v| v * v).sum::<f64>() / n as f64;
    (power / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// The corner of the color hypercube with the largest summed Euclidean
/// distance to all colors of the set. Ties go to the lexicographically
/// smallest corner.
pub fn farthest_color_corner(colors: &DMatrix<f64>) -> DVector<f64> {
    let dc = colors.ncols();
    let mut best = DVector::zeros(dc);
    let mut best_score = f64::NEG_INFINITY;
    // Bit k of `mask` (counting from the most significant channel) sets
    // channel k to 1, so masks ascend in lexicographic order.
    for mask in 0..(1usize << dc) {
        let corner = DVector::from_fn(dc, |k, _| ((mask >> (dc - 1 - k)) & 1) as f64);
        let score: f64 = colors
            .row_iter()
            .map(|r| (r.transpose() - &corner).norm())
            .sum();
        if score > best_score {
            best_score = score;
            best = corner;
        }
    }
    best
}

/// Recolors `floor(fraction * count)` randomly chosen points to the
/// farthest corner color of the set. Positions are untouched.
pub fn inject_color_outliers(set: &ColoredPointSet, fraction: f64, seed: u64) -> Result<ColoredPointSet> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CcpdError::InvalidArgument(format!(
            "outlier fraction must be in [0, 1], got {fraction}"
        )));
    }
    let count = set.len();
    let k = (fraction * count as f64).floor() as usize;
    if k == 0 || set.color_dim() == 0 {
        return Ok(set.clone());
    }
    let corner = farthest_color_corner(set.colors());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut colors = set.colors().clone();
    for i in sample(&mut rng, count, k) {
        colors.row_mut(i).copy_from(&corner.transpose());
    }
    set.with_colors(colors)
}

/// Root mean square distance between registered model points and their true
/// anchor matches.
pub fn rms_error(
    transformed: &ColoredPointSet,
    anchor: &ColoredPointSet,
    truth: &CorrespondenceGroundTruth,
) -> Result<f64> {
    if truth.is_empty() {
        return Err(CcpdError::InvalidArgument("ground truth is empty".into()));
    }
    if transformed.spatial_dim() != anchor.spatial_dim() {
        return Err(CcpdError::DimensionMismatch(
            "registered and anchor sets differ in dimension".into(),
        ));
    }
    let t = transformed.positions();
    let x = anchor.positions();
    let mut sum = 0.0;
    for &(i, n) in truth.pairs() {
        if i >= t.nrows() || n >= x.nrows() {
            return Err(CcpdError::InvalidArgument(format!(
                "correspondence ({i}, {n}) out of range"
            )));
        }
        sum += (t.row(i) - x.row(n)).norm_squared();
    }
    Ok((sum / truth.len() as f64).sqrt())
}

/// One displacement arrow from an original model point to its registered
/// position.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowArrow {
    pub origin: Vec<f64>,
    pub displacement: Vec<f64>,
}

pub fn flow_field(original: &ColoredPointSet, transformed: &ColoredPointSet) -> Result<Vec<FlowArrow>> {
    if original.len() != transformed.len() || original.spatial_dim() != transformed.spatial_dim() {
        return Err(CcpdError::DimensionMismatch(format!(
            "flow needs matching sets, got {} and {} points",
            original.len(),
            transformed.len()
        )));
    }
    Ok(original
        .positions()
        .row_iter()
        .zip(transformed.positions().row_iter())
        .map(|(y, t)| FlowArrow {
            origin: y.iter().copied().collect(),
            displacement: (t - y).iter().copied().collect(),
        })
        .collect())
}
