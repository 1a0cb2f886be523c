//! Colored point sets.
//!
//! A [`ColoredPointSet`] pairs an `N x D_S` position matrix with an `N x D_C`
//! color matrix. Rows are points. Colors are normalized to `[0, 1]` per
//! channel; a set with `D_C = 0` carries no color and can only be used by the
//! shape-only registration path.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{CcpdError, Result};

/// A single violated invariant reported by [`validate_parts`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySet,
    RowMismatch { positions: usize, colors: usize },
    ZeroSpatialDimension,
    NonFinitePosition { point: usize },
    NonFiniteColor { point: usize },
    ColorOutOfRange { point: usize, channel: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySet => write!(f, "count must be positive"),
            Violation::RowMismatch { positions, colors } => write!(
                f,
                "row count mismatch: {positions} positions vs {colors} colors"
            ),
            Violation::ZeroSpatialDimension => write!(f, "spatial dimension must be positive"),
            Violation::NonFinitePosition { point } => {
                write!(f, "non-finite position at point {point}")
            }
            Violation::NonFiniteColor { point } => write!(f, "non-finite color at point {point}"),
            Violation::ColorOutOfRange {
                point,
                channel,
                value,
            } => write!(
                f,
                "color out of range at point {point}, channel {channel}: {value}"
            ),
        }
    }
}

/// Checks the point-set invariants on raw matrices. Returns every violation
/// found rather than stopping at the first one.
pub fn validate_parts(
    positions: &DMatrix<f64>,
    colors: &DMatrix<f64>,
) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if positions.nrows() == 0 {
        out.push(Violation::EmptySet);
    }
    if positions.nrows() != colors.nrows() {
        out.push(Violation::RowMismatch {
            positions: positions.nrows(),
            colors: colors.nrows(),
        });
    }
    if positions.ncols() == 0 {
        out.push(Violation::ZeroSpatialDimension);
    }
    for (i, row) in positions.row_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFinitePosition { point: i });
        }
    }
    for (i, row) in colors.row_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFiniteColor { point: i });
                break;
            }
            if !(0.0..=1.0).contains(&v) {
                out.push(Violation::ColorOutOfRange {
                    point: i,
                    channel: c,
                    value: v,
                });
                break;
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// A set of points with a position and a color per point.
///
/// Construction always validates, so every value of this type satisfies the
/// invariants checked by [`validate_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredPointSet {
    positions: DMatrix<f64>,
    colors: DMatrix<f64>,
}

impl ColoredPointSet {
    pub fn new(positions: DMatrix<f64>, colors: DMatrix<f64>) -> Result<Self> {
        validate_parts(&positions, &colors).map_err(CcpdError::InvalidPointSet)?;
        Ok(Self { positions, colors })
    }

    /// A set without color channels.
    pub fn uncolored(positions: DMatrix<f64>) -> Result<Self> {
        let n = positions.nrows();
        Self::new(positions, DMatrix::zeros(n, 0))
    }

    /// Builds a set from per-point position and color rows.
    pub fn from_rows(positions: &[Vec<f64>], colors: &[Vec<f64>]) -> Result<Self> {
        let ds = positions.first().map_or(0, Vec::len);
        let dc = colors.first().map_or(0, Vec::len);
        if positions.iter().any(|p| p.len() != ds) || colors.iter().any(|c| c.len() != dc) {
            return Err(CcpdError::DimensionMismatch(
                "ragged rows in point set".into(),
            ));
        }
        let p = DMatrix::from_fn(positions.len(), ds, |i, j| positions[i][j]);
        let c = DMatrix::from_fn(colors.len(), dc, |i, j| colors[i][j]);
        Self::new(p, c)
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn colors(&self) -> &DMatrix<f64> {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial_dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn color_dim(&self) -> usize {
        self.colors.ncols()
    }

    /// Re-checks the invariants. Always `Ok` for a constructed set.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        validate_parts(&self.positions, &self.colors)
    }

    /// Same colors, new positions.
    pub fn with_positions(&self, positions: DMatrix<f64>) -> Result<Self> {
        if positions.nrows() != self.len() {
            return Err(CcpdError::DimensionMismatch(format!(
                "expected {} positions, got {}",
                self.len(),
                positions.nrows()
            )));
        }
        Self::new(positions, self.colors.clone())
    }

    /// Same positions, new colors.
    pub fn with_colors(&self, colors: DMatrix<f64>) -> Result<Self> {
        Self::new(self.positions.clone(), colors)
    }

    /// Keeps the listed points, in the listed order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(CcpdError::InvalidArgument(format!(
                "point index {bad} out of range for {} points",
                self.len()
            )));
        }
        let p = self.positions.select_rows(indices);
        let c = self.colors.select_rows(indices);
        Self::new(p, c)
    }

    /// Row `n` of the result is the position of point `n` followed by its
    /// color, giving `D_S + D_C` columns.
    pub fn append_channels(&self) -> DMatrix<f64> {
        let (n, ds, dc) = (self.len(), self.spatial_dim(), self.color_dim());
        let mut out = DMatrix::zeros(n, ds + dc);
        out.columns_mut(0, ds).copy_from(&self.positions);
        out.columns_mut(ds, dc).copy_from(&self.colors);
        out
    }

    /// Inverse of [`append_channels`](Self::append_channels).
    pub fn split_channels(joined: &DMatrix<f64>, spatial_dim: usize) -> Result<Self> {
        if spatial_dim > joined.ncols() {
            return Err(CcpdError::DimensionMismatch(format!(
                "spatial dimension {spatial_dim} exceeds {} columns",
                joined.ncols()
            )));
        }
        let p = joined.columns(0, spatial_dim).into_owned();
        let c = joined
            .columns(spatial_dim, joined.ncols() - spatial_dim)
            .into_owned();
        Self::new(p, c)
    }
}
