//! Straightforward scalar reference implementations used to cross-check the
//! vectorized code paths. Everything here works on plain densities with
//! explicit loops.

#![allow(dead_code)]

use std::f64::consts::PI;

use ccpd::ColoredPointSet;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(2 pi var)^(-d/2) exp(-|a - b|^2 / (2 var))` for every (model row, anchor
/// row) pair, as `M x N`.
pub fn gaussian_double_loop(anchor: &DMatrix<f64>, model: &DMatrix<f64>, var: f64) -> DMatrix<f64> {
    let d = anchor.ncols();
    let mut out = DMatrix::zeros(model.nrows(), anchor.nrows());
    for i in 0..model.nrows() {
        for n in 0..anchor.nrows() {
            let mut d2 = 0.0;
            for k in 0..d {
                let diff = anchor[(n, k)] - model[(i, k)];
                d2 += diff * diff;
            }
            out[(i, n)] = (2.0 * PI * var).powf(-(d as f64) / 2.0) * (-d2 / (2.0 * var)).exp();
        }
    }
    out
}

/// Combined posterior evaluated literally, one column at a time:
/// `pS^wS pC^wC / ((sum pS)^wS (sum pC)^wC + oC + oL)`.
pub fn ccpd_posterior_oracle(
    shape: &DMatrix<f64>,
    color: &DMatrix<f64>,
    alpha: f64,
    w_shape: f64,
    w_color: f64,
    sigma_color: f64,
    color_outlier: bool,
) -> DMatrix<f64> {
    let (m, n) = shape.shape();
    let o_l = alpha / (1.0 - alpha) * m as f64 / n as f64;
    let mut out = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut sum_s = 0.0;
        let mut sum_c = 0.0;
        for i in 0..m {
            sum_s += shape[(i, j)];
            sum_c += color[(i, j)];
        }
        let o_c = if color_outlier {
            m as f64 / (sigma_color * (2.0 * PI).sqrt())
                * (-(1.0 / m as f64) * sum_c * sum_c / (2.0 * sigma_color * sigma_color)).exp()
        } else {
            0.0
        };
        let denom = sum_s.powf(w_shape) * sum_c.powf(w_color) + o_c + o_l;
        for i in 0..m {
            out[(i, j)] = shape[(i, j)].powf(w_shape) * color[(i, j)].powf(w_color) / denom;
        }
    }
    out
}

/// `pS / (sum pS + alpha/(1-alpha) M/N)` column by column.
pub fn cpd_posterior_oracle(shape: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let (m, n) = shape.shape();
    let o_l = alpha / (1.0 - alpha) * m as f64 / n as f64;
    let mut out = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut sum = 0.0;
        for i in 0..m {
            sum += shape[(i, j)];
        }
        for i in 0..m {
            out[(i, j)] = shape[(i, j)] / (sum + o_l);
        }
    }
    out
}

/// Solves `(G + lambda sigma^2 d(P1)^-1) W = d(P1)^-1 P X - Y` densely.
/// Requires every row of `p` to carry mass.
pub fn coefficient_oracle(
    p: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    g: &DMatrix<f64>,
    lambda: f64,
    sigma2: f64,
) -> DMatrix<f64> {
    let m = p.nrows();
    let p1: Vec<f64> = (0..m).map(|i| p.row(i).sum()).collect();
    let mut a = g.clone();
    for i in 0..m {
        a[(i, i)] += lambda * sigma2 / p1[i];
    }
    let px = p * x;
    let mut b = DMatrix::zeros(m, y.ncols());
    for i in 0..m {
        for k in 0..y.ncols() {
            b[(i, k)] = px[(i, k)] / p1[i] - y[(i, k)];
        }
    }
    a.lu().solve(&b).expect("oracle system is singular")
}

/// `sum_{i,n} p_in |x_n - t_i|^2 / (sum p * D)` with a double loop.
pub fn sigma_oracle(p: &DMatrix<f64>, x: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    let d = x.ncols();
    let mut num = 0.0;
    let mut mass = 0.0;
    for i in 0..p.nrows() {
        for n in 0..p.ncols() {
            let mut d2 = 0.0;
            for k in 0..d {
                let diff = x[(n, k)] - t[(i, k)];
                d2 += diff * diff;
            }
            num += p[(i, n)] * d2;
            mass += p[(i, n)];
        }
    }
    num / (mass * d as f64)
}

/// Kernel `exp(-|y_i - y_j|^2 / (2 beta^2))` with a double loop.
pub fn kernel_oracle(y: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let m = y.nrows();
    DMatrix::from_fn(m, m, |i, j| {
        let d2: f64 = (0..y.ncols()).map(|k| (y[(i, k)] - y[(j, k)]).powi(2)).sum();
        (-d2 / (2.0 * beta * beta)).exp()
    })
}

/// A random colored set with positions in `[-1, 1]^ds` and colors in
/// `[0, 1]^dc`.
pub fn random_set(rng: &mut ChaCha8Rng, count: usize, ds: usize, dc: usize) -> ColoredPointSet {
    let p = DMatrix::from_fn(count, ds, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(count, dc, |_, _| rng.random_range(0.0..1.0));
    ColoredPointSet::new(p, c).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest entry-wise relative difference, with `floor` guarding tiny
/// denominators.
pub fn max_relative_diff(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
