//! HSV hue conversions for colors in `[0, 1]`.

use nalgebra::DMatrix;

/// Hue of each RGB row as a fraction of the color circle in `[0, 1)`.
/// Gray rows get hue 0.
pub fn rgb_to_hue(colors: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(colors.nrows(), 1, |i, _| {
        hue(colors[(i, 0)], colors[(i, 1)], colors[(i, 2)])
    })
}

fn hue(r: f64, g: f64, b: f64) -> f64 {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    if c <= 0.0 {
        return 0.0;
    }
    let sector = if max == r {
        ((g - b) / c).rem_euclid(6.0)
    } else if max == g {
        (b - r) / c + 2.0
    } else {
        (r - g) / c + 4.0
    };
    let h = sector / 6.0;
    if h >= 1.0 {
        0.0
    } else {
        h
    }
}

/// Fully saturated, full-value RGB for each hue row.
pub fn hue_to_rgb(hues: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(hues.nrows(), 3);
    for i in 0..hues.nrows() {
        let h = hues[(i, 0)].rem_euclid(1.0) * 6.0;
        let x = 1.0 - ((h % 2.0) - 1.0).abs();
        let (r, g, b) = match h as u32 {
            0 => (1.0, x, 0.0),
            1 => (x, 1.0, 0.0),
            2 => (0.0, 1.0, x),
            3 => (0.0, x, 1.0),
            4 => (x, 0.0, 1.0),
            _ => (1.0, 0.0, x),
        };
        out[(i, 0)] = r;
        out[(i, 1)] = g;
        out[(i, 2)] = b;
    }
    out
}
