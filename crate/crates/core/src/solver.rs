//! M-step: the motion-coherence kernel, the regularized solve for the
//! displacement coefficients, and the shape variance update.

use faer::linalg::solvers::Solve;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{CcpdError, Result};
use crate::types::PosteriorMatrix;

/// Model points whose total posterior mass is below this are decoupled from
/// the kernel in the M-step.
pub const MIN_ROW_MASS: f64 = 1e-12;

/// Gaussian kernel `g_ij = exp(-|y_i - y_j|^2 / (2 beta^2))` over the
/// original model positions. Symmetric with a unit diagonal.
pub fn build_kernel(model_positions: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let m = model_positions.nrows();
    let yt = model_positions.transpose();
    let scale = 1.0 / (2.0 * beta * beta);
    // Lower triangle column by column, then mirror so the result is exactly
    // symmetric.
    let mut g = DMatrix::zeros(m, m);
    if m > 0 {
        g.as_mut_slice()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(j, col)| {
                col[j] = 1.0;
                let yj = yt.column(j);
                for (i, out) in col.iter_mut().enumerate().skip(j + 1) {
                    *out = (-(yt.column(i) - yj).norm_squared() * scale).exp();
                }
            });
    }
    for j in 0..m {
        for i in (j + 1)..m {
            g[(j, i)] = g[(i, j)];
        }
    }
    g
}

/// Everything the coefficient solve needs.
#[derive(Debug, Clone, Copy)]
pub struct MStepInputs<'a> {
    pub posterior: &'a PosteriorMatrix,
    /// `X`, `N x D`.
    pub anchor_positions: &'a DMatrix<f64>,
    /// `Y`, `M x D`, untransformed.
    pub model_positions: &'a DMatrix<f64>,
    /// `G`, `M x M`.
    pub kernel: &'a DMatrix<f64>,
    pub lambda: f64,
    pub sigma_shape_sq: f64,
}

impl MStepInputs<'_> {
    fn check(&self) -> Result<()> {
        let (m, n) = self.posterior.weights.shape();
        let d = self.model_positions.ncols();
        let ok = self.anchor_positions.shape() == (n, d)
            && self.model_positions.nrows() == m
            && self.kernel.shape() == (m, m);
        if !ok {
            return Err(CcpdError::DimensionMismatch(format!(
                "posterior {m}x{n}, anchor {:?}, model {:?}, kernel {:?}",
                self.anchor_positions.shape(),
                self.model_positions.shape(),
                self.kernel.shape()
            )));
        }
        if !(self.lambda > 0.0 && self.sigma_shape_sq > 0.0) {
            return Err(CcpdError::InvalidArgument(
                "lambda and sigma_shape_sq must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Solves `(d(P1) G + lambda sigma^2 I) W = P X - d(P1) Y` for `W`.
///
/// This is the row-scaled form of `(G + lambda sigma^2 d(P1)^-1) W =
/// d(P1)^-1 P X - Y` and stays well posed when a model point receives no
/// posterior mass. Rows with mass below [`MIN_ROW_MASS`] are replaced by
/// `lambda sigma^2 W_i = -(P1)_i Y_i`.
pub fn solve_coefficients(inputs: &MStepInputs<'_>) -> Result<DMatrix<f64>> {
    inputs.check()?;
    let p = &inputs.posterior.weights;
    let y = inputs.model_positions;
    let g = inputs.kernel;
    let m = p.nrows();
    let d = y.ncols();
    let reg = inputs.lambda * inputs.sigma_shape_sq;
    let p1 = inputs.posterior.row_sums();
    let px = p * inputs.anchor_positions;

    let mut rhs = DMatrix::zeros(m, d);
    for i in 0..m {
        for k in 0..d {
            rhs[(i, k)] = if p1[i] < MIN_ROW_MASS {
                -p1[i] * y[(i, k)]
            } else {
                px[(i, k)] - p1[i] * y[(i, k)]
            };
        }
    }
    let system = faer::Mat::<f64>::from_fn(m, m, |i, j| {
        let coupling = if p1[i] < MIN_ROW_MASS {
            0.0
        } else {
            p1[i] * g[(i, j)]
        };
        if i == j {
            coupling + reg
        } else {
            coupling
        }
    });
    let b = faer::Mat::<f64>::from_fn(m, d, |i, k| rhs[(i, k)]);
    let lu = system.partial_piv_lu();
    let sol = lu.solve(&b);
    let w = DMatrix::from_fn(m, d, |i, k| sol[(i, k)]);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(CcpdError::SolveFailed);
    }

    // Accept only solutions with a small backward residual.
    let a = DMatrix::from_fn(m, m, |i, j| system[(i, j)]);
    let residual = (&a * &w - &rhs).norm();
    let bound = 1e-8 * (a.norm() * w.norm() + rhs.norm());
    if residual > bound && residual > f64::MIN_POSITIVE {
        return Err(CcpdError::SolveFailed);
    }
    Ok(w)
}

/// `T = Y + G W`.
pub fn apply_transform(
    model_positions: &DMatrix<f64>,
    kernel: &DMatrix<f64>,
    coefficients: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = model_positions.nrows();
    if kernel.shape() != (m, m) || coefficients.shape() != model_positions.shape() {
        return Err(CcpdError::DimensionMismatch(format!(
            "model {:?}, kernel {:?}, coefficients {:?}",
            model_positions.shape(),
            kernel.shape(),
            coefficients.shape()
        )));
    }
    Ok(model_positions + kernel * coefficients)
}

/// Posterior-weighted mean squared residual per dimension:
///
/// `sigma^2 = (sum_n (P^T 1)_n |x_n|^2 - 2 tr((P X)^T T) + sum_i (P 1)_i |t_i|^2) / (N_P D)`
///
/// where `N_P` is the total posterior mass. Clamped below at `sigma_floor`.
pub fn update_sigma_shape(
    posterior: &PosteriorMatrix,
    anchor_positions: &DMatrix<f64>,
    transformed: &DMatrix<f64>,
    sigma_floor: f64,
) -> Result<f64> {
    let (m, n) = posterior.weights.shape();
    if anchor_positions.nrows() != n
        || transformed.nrows() != m
        || anchor_positions.ncols() != transformed.ncols()
    {
        return Err(CcpdError::DimensionMismatch(format!(
            "posterior {m}x{n}, anchor {:?}, transformed {:?}",
            anchor_positions.shape(),
            transformed.shape()
        )));
    }
    let d = transformed.ncols() as f64;
    let p1 = posterior.row_sums();
    let pt1 = posterior.column_sums();
    let np: f64 = p1.sum();
    if !(np > 0.0) {
        return Err(CcpdError::PosteriorMassVanished);
    }
    let px = &posterior.weights * anchor_positions;
    let xx: f64 = anchor_positions
        .row_iter()
        .zip(pt1.iter())
        .map(|(x, w)| w * x.norm_squared())
        .sum();
    let tt: f64 = transformed
        .row_iter()
        .zip(p1.iter())
        .map(|(t, w)| w * t.norm_squared())
        .sum();
    let cross = px.component_mul(transformed).sum();
    let sigma2 = (xx - 2.0 * cross + tt) / (np * d);
    Ok(if sigma2.is_nan() {
        sigma2
    } else {
        sigma2.max(sigma_floor)
    })
}
