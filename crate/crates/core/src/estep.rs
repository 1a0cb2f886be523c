//! E-step: Gaussian likelihoods, outlier biases, posteriors and the
//! negative log-likelihood objective.
//!
//! Likelihoods are held in log space. Every posterior column is normalized
//! with a log-sum-exp shift, so a column whose raw densities would all
//! underflow still produces the exact ratio instead of `0 / 0`. The outlier
//! biases are carried through the same shift.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CcpdError, Result};
use crate::pointset::ColoredPointSet;
use crate::types::{PosteriorMatrix, RegistrationConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower clamp on each per-anchor mixture density before taking its log.
pub const OBJECTIVE_CLAMP: f64 = 1e-300;

/// Shape and color likelihoods of every (model, anchor) pair, stored as
/// `M x N` log densities.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMatrices {
    log_shape: DMatrix<f64>,
    log_color: Option<DMatrix<f64>>,
    pub sigma_shape_sq: f64,
    pub sigma_color: f64,
}

impl LikelihoodMatrices {
    pub fn from_logs(
        log_shape: DMatrix<f64>,
        log_color: Option<DMatrix<f64>>,
        sigma_shape_sq: f64,
        sigma_color: f64,
    ) -> Result<Self> {
        if let Some(c) = &log_color {
            if c.shape() != log_shape.shape() {
                return Err(CcpdError::DimensionMismatch(format!(
                    "shape likelihoods are {:?} but color likelihoods are {:?}",
                    log_shape.shape(),
                    c.shape()
                )));
            }
        }
        Ok(Self {
            log_shape,
            log_color,
            sigma_shape_sq,
            sigma_color,
        })
    }

    /// Wraps plain (non-log) density matrices.
    pub fn from_densities(
        shape: &DMatrix<f64>,
        color: Option<&DMatrix<f64>>,
        sigma_shape_sq: f64,
        sigma_color: f64,
    ) -> Result<Self> {
        let to_log = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            if m.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(CcpdError::InvalidArgument(
                    "densities must be finite and nonnegative".into(),
                ));
            }
            Ok(m.map(f64::ln))
        };
        let ls = to_log(shape)?;
        let lc = color.map(to_log).transpose()?;
        Self::from_logs(ls, lc, sigma_shape_sq, sigma_color)
    }

    /// Shape likelihoods of `anchor` against `transformed`, combined with a
    /// precomputed color log-likelihood matrix.
    pub fn with_cached_color(
        anchor_positions: &DMatrix<f64>,
        transformed: &DMatrix<f64>,
        sigma_shape_sq: f64,
        log_color: Option<DMatrix<f64>>,
        sigma_color: f64,
    ) -> Result<Self> {
        let ls = shape_log_likelihoods(anchor_positions, transformed, sigma_shape_sq)?;
        Self::from_logs(ls, log_color, sigma_shape_sq, sigma_color)
    }

    pub fn model_count(&self) -> usize {
        self.log_shape.nrows()
    }

    pub fn anchor_count(&self) -> usize {
        self.log_shape.ncols()
    }

    pub fn log_shape(&self) -> &DMatrix<f64> {
        &self.log_shape
    }

    pub fn log_color(&self) -> Option<&DMatrix<f64>> {
        self.log_color.as_ref()
    }

    pub fn shape(&self) -> DMatrix<f64> {
        self.log_shape.map(f64::exp)
    }

    pub fn color(&self) -> Option<DMatrix<f64>> {
        self.log_color.as_ref().map(|c| c.map(f64::exp))
    }

    /// Releases the color part so it can be reused for the next iteration.
    pub fn into_log_color(self) -> Option<DMatrix<f64>> {
        self.log_color
    }
}

/// Fills an `m x n` matrix one column at a time, columns in parallel.
fn fill_columns<F>(m: usize, n: usize, f: F) -> DMatrix<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut out = DMatrix::zeros(m, n);
    if m > 0 {
        out.as_mut_slice()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(j, col)| f(j, col));
    }
    out
}

/// `log N(x | mu, sigma^2 I)` for every (row of `centers`, row of `points`)
/// pair, laid out `centers x points`.
fn isotropic_log_gaussians(points: &DMatrix<f64>, centers: &DMatrix<f64>, var: f64) -> DMatrix<f64> {
    let d = points.ncols();
    let pt = points.transpose();
    let ct = centers.transpose();
    let log_norm = -0.5 * d as f64 * (LN_2PI + var.ln());
    let inv2 = 0.5 / var;
    fill_columns(centers.nrows(), points.nrows(), |n, col| {
        let x = pt.column(n);
        for (i, out) in col.iter_mut().enumerate() {
            let c = ct.column(i);
            let mut d2 = 0.0;
            for k in 0..d {
                let diff = x[k] - c[k];
                d2 += diff * diff;
            }
            *out = log_norm - d2 * inv2;
        }
    })
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CcpdError::NonFinitePosition)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CcpdError::InvalidArgument(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Log of the isotropic shape Gaussian of each anchor point around each
/// transformed model point. `M x N`.
pub fn shape_log_likelihoods(
    anchor_positions: &DMatrix<f64>,
    transformed: &DMatrix<f64>,
    sigma_shape_sq: f64,
) -> Result<DMatrix<f64>> {
    check_positive("sigma_shape_sq", sigma_shape_sq)?;
    check_finite(anchor_positions)?;
    check_finite(transformed)?;
    if anchor_positions.ncols() != transformed.ncols() {
        return Err(CcpdError::DimensionMismatch(format!(
            "anchor has {} spatial dimensions, transformed model has {}",
            anchor_positions.ncols(),
            transformed.ncols()
        )));
    }
    Ok(isotropic_log_gaussians(
        anchor_positions,
        transformed,
        sigma_shape_sq,
    ))
}

/// Shape likelihoods `p_S(a_n | m_i)` against the current transformed model
/// positions. `M x N`.
pub fn shape_likelihoods(
    anchor: &ColoredPointSet,
    transformed: &DMatrix<f64>,
    sigma_shape_sq: f64,
) -> Result<DMatrix<f64>> {
    check_positive("sigma_shape_sq", sigma_shape_sq)?;
    check_finite(transformed)?;
    let x = anchor.positions();
    if x.ncols() != transformed.ncols() {
        return Err(CcpdError::DimensionMismatch(format!(
            "anchor has {} spatial dimensions, transformed model has {}",
            x.ncols(),
            transformed.ncols()
        )));
    }
    let d = x.ncols() as f64;
    let norm = (2.0 * PI * sigma_shape_sq).powf(-0.5 * d);
    let inv2 = 0.5 / sigma_shape_sq;
    let xt = x.transpose();
    let tt = transformed.transpose();
    Ok(fill_columns(transformed.nrows(), x.nrows(), |n, col| {
        let a = xt.column(n);
        for (i, out) in col.iter_mut().enumerate() {
            let d2 = (a - tt.column(i)).norm_squared();
            *out = norm * (-d2 * inv2).exp();
        }
    }))
}

fn check_color_dims(anchor: &ColoredPointSet, model: &ColoredPointSet) -> Result<()> {
    if anchor.color_dim() != model.color_dim() {
        return Err(CcpdError::DimensionMismatch(format!(
            "anchor has {} color channels, model has {}",
            anchor.color_dim(),
            model.color_dim()
        )));
    }
    if anchor.color_dim() == 0 {
        return Err(CcpdError::DimensionMismatch(
            "color likelihoods need at least one color channel".into(),
        ));
    }
    Ok(())
}

/// Log color likelihoods. Model colors are never transformed, so this is
/// computed once per registration.
pub fn color_log_likelihoods(
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    sigma_color: f64,
) -> Result<DMatrix<f64>> {
    check_positive("sigma_color", sigma_color)?;
    check_color_dims(anchor, model)?;
    Ok(isotropic_log_gaussians(
        anchor.colors(),
        model.colors(),
        sigma_color * sigma_color,
    ))
}

/// Color likelihoods `p_C(a_n | m_i)`. `M x N`.
pub fn color_likelihoods(
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    sigma_color: f64,
) -> Result<DMatrix<f64>> {
    check_positive("sigma_color", sigma_color)?;
    check_color_dims(anchor, model)?;
    let d = anchor.color_dim() as f64;
    let var = sigma_color * sigma_color;
    let norm = (2.0 * PI * var).powf(-0.5 * d);
    let at = anchor.colors().transpose();
    let mt = model.colors().transpose();
    Ok(fill_columns(model.len(), anchor.len(), |n, col| {
        let a = at.column(n);
        for (i, out) in col.iter_mut().enumerate() {
            let d2 = (a - mt.column(i)).norm_squared();
            *out = norm * (-d2 / (2.0 * var)).exp();
        }
    }))
}

/// Location outlier bias `alpha / (1 - alpha) * M / N`.
pub fn location_outlier_term(alpha: f64, m: usize, n: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(CcpdError::InvalidArgument(format!(
            "alpha must be in [0, 1), got {alpha}"
        )));
    }
    if m == 0 || n == 0 {
        return Err(CcpdError::InvalidArgument(
            "point counts must be positive".into(),
        ));
    }
    Ok(alpha / (1.0 - alpha) * m as f64 / n as f64)
}

/// Color outlier bias of one anchor point, from the column of its color
/// likelihoods against all `M` model points:
/// `M / (sigma_C sqrt(2 pi)) * exp(-(sum_i p_C)^2 / (2 M sigma_C^2))`.
pub fn color_outlier_term(column: &[f64], sigma_color: f64) -> f64 {
    color_outlier_from_sum(column.iter().sum(), sigma_color, column.len())
}

fn color_outlier_from_sum(sum: f64, sigma_color: f64, m: usize) -> f64 {
    let m = m as f64;
    let lead = m / (sigma_color * (2.0 * PI).sqrt());
    lead * (-(sum * sum) / (m * 2.0 * sigma_color * sigma_color)).exp()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Color part of the combined posterior.
#[derive(Clone, Copy)]
struct ColorTerms<'a> {
    log_color: &'a DMatrix<f64>,
    weight: f64,
    outlier_term: bool,
    sigma: f64,
}

/// Column-wise evaluation of
/// `p_S^{wS} p_C^{wC} / ((sum p_S)^{wS} (sum p_C)^{wC} + o_C + o_L)`.
/// The plain coherent point drift posterior is the case `wS = 1` without
/// color terms.
fn combined_posterior(
    lik: &LikelihoodMatrices,
    w_shape: f64,
    color: Option<ColorTerms<'_>>,
    location_outlier: f64,
) -> Result<PosteriorMatrix> {
    let (m, n) = lik.log_shape.shape();
    let ls_all = &lik.log_shape;
    let mut weights = DMatrix::zeros(m, n);
    let masses: Vec<Option<f64>> = weights
        .as_mut_slice()
        .par_chunks_mut(m.max(1))
        .enumerate()
        .map(|(j, out)| {
            let ls = ls_all.column(j);
            let ls = ls.as_slice();
            let mut log_num: Vec<f64> = if w_shape == 0.0 {
                vec![0.0; m]
            } else {
                ls.iter().map(|v| w_shape * v).collect()
            };
            let mut head = if w_shape == 0.0 {
                0.0
            } else {
                w_shape * log_sum_exp(ls)
            };
            let mut outlier = location_outlier;
            if let Some(ct) = color {
                let lc = ct.log_color.column(j);
                let lc = lc.as_slice();
                let lse_c = log_sum_exp(lc);
                for (v, c) in log_num.iter_mut().zip(lc) {
                    *v += ct.weight * c;
                }
                head += ct.weight * lse_c;
                if ct.outlier_term {
                    outlier += color_outlier_from_sum(lse_c.exp(), ct.sigma, m);
                }
            }
            let log_outlier = if outlier > 0.0 {
                outlier.ln()
            } else {
                f64::NEG_INFINITY
            };
            let log_den = log_add_exp(head, log_outlier);
            if !log_den.is_finite() {
                return None;
            }
            for (o, v) in out.iter_mut().zip(&log_num) {
                *o = (v - log_den).exp();
            }
            Some((log_outlier - log_den).exp())
        })
        .collect();
    let mut outlier_mass = DVector::zeros(n);
    for (j, mass) in masses.into_iter().enumerate() {
        outlier_mass[j] = mass.ok_or(CcpdError::DegeneratePosterior { column: j })?;
    }
    Ok(PosteriorMatrix {
        weights,
        outlier_mass,
    })
}

/// The combined shape-and-color posterior.
pub fn ccpd_posterior(lik: &LikelihoodMatrices, config: &RegistrationConfig) -> Result<PosteriorMatrix> {
    let o_l = location_outlier_term(config.alpha, lik.model_count(), lik.anchor_count())?;
    let color = if config.uses_color() {
        let log_color = lik.log_color().ok_or_else(|| {
            CcpdError::InvalidArgument("color weight is positive but no color likelihoods".into())
        })?;
        Some(ColorTerms {
            log_color,
            weight: config.w_color,
            outlier_term: config.uses_color_outlier_term(),
            sigma: lik.sigma_color,
        })
    } else {
        None
    };
    combined_posterior(lik, config.w_shape, color, o_l)
}

/// The shape-only posterior `p_S / (sum_j p_S + alpha/(1-alpha) M/N)`.
pub fn cpd_posterior(lik: &LikelihoodMatrices, alpha: f64) -> Result<PosteriorMatrix> {
    let o_l = location_outlier_term(alpha, lik.model_count(), lik.anchor_count())?;
    combined_posterior(lik, 1.0, None, o_l)
}

/// `-sum_n log(sum_i (1 - alpha)/M q_in + alpha/N)` with
/// `q = p_S^{wS} p_C^{wC}` when `with_color`, else `q = p_S`. Each inner sum
/// is clamped at [`OBJECTIVE_CLAMP`] so the result is always finite for
/// finite likelihoods.
pub fn negative_log_likelihood(
    lik: &LikelihoodMatrices,
    config: &RegistrationConfig,
    with_color: bool,
) -> f64 {
    let (m, n) = lik.log_shape.shape();
    let alpha = config.alpha;
    let ln_or_neg_inf = |v: f64| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
    let log_inlier = ln_or_neg_inf((1.0 - alpha) / m as f64);
    let log_outlier = ln_or_neg_inf(alpha / n as f64);
    let color = if with_color && config.w_color > 0.0 {
        lik.log_color().map(|c| (c, config.w_color))
    } else {
        None
    };
    let w_shape = if color.is_some() { config.w_shape } else { 1.0 };
    let floor = OBJECTIVE_CLAMP.ln();
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let ls = lik.log_shape.column(j);
            let log_q: Vec<f64> = match color {
                Some((lc, wc)) => ls
                    .iter()
                    .zip(lc.column(j).iter())
                    .map(|(s, c)| w_shape * s + wc * c)
                    .collect(),
                None => ls.iter().copied().collect(),
            };
            let inner = log_add_exp(log_inlier + log_sum_exp(&log_q), log_outlier);
            if inner.is_nan() {
                inner
            } else {
                inner.max(floor)
            }
        })
        .collect();
    -terms.iter().sum::<f64>()
}
