//! Configuration, intermediate, and result types shared by the registration
//! stages.

use nalgebra::{DMatrix, DVector};

use crate::error::{CcpdError, Result};
use crate::pointset::ColoredPointSet;

/// How the color standard deviation is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaColor {
    /// Derived from the data: the mean squared color difference over all
    /// anchor/model pairs, divided by the number of color channels.
    Auto,
    Fixed(f64),
}

/// Hyperparameters of a registration run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    /// Weight of the uniform outlier component, in `[0, 1)`.
    pub alpha: f64,
    /// Width of the Gaussian motion-coherence kernel.
    pub beta: f64,
    /// Strength of the motion-coherence regularizer.
    pub lambda: f64,
    /// Exponent on the shape likelihood in the combined posterior.
    pub w_shape: f64,
    /// Exponent on the color likelihood in the combined posterior.
    pub w_color: f64,
    pub sigma_color: SigmaColor,
    /// Adds the color outlier bias to each posterior denominator. Ignored
    /// when `w_color == 0`.
    pub color_outlier_term: bool,
    pub max_iterations: usize,
    /// Relative change of the objective below which the loop stops.
    pub tolerance: f64,
    /// Lower clamp for the shape variance; reaching it stops the loop.
    pub sigma_floor: f64,
    /// Jointly center and scale both sets to unit extent before registering.
    /// The output is mapped back to the input frame.
    pub prenormalize: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 2.0,
            lambda: 3.0,
            w_shape: 1.0,
            w_color: 1.0,
            sigma_color: SigmaColor::Auto,
            color_outlier_term: true,
            max_iterations: 150,
            tolerance: 1e-8,
            sigma_floor: 1e-10,
            prenormalize: false,
        }
    }
}

impl RegistrationConfig {
    /// The shape-only configuration under which the combined posterior
    /// reduces to the plain coherent point drift posterior.
    pub fn shape_only(&self) -> Self {
        Self {
            w_shape: 1.0,
            w_color: 0.0,
            color_outlier_term: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CcpdError::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1), got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.w_shape >= 0.0 && self.w_shape.is_finite()) {
            return bad(format!("w_shape must be nonnegative, got {}", self.w_shape));
        }
        if !(self.w_color >= 0.0 && self.w_color.is_finite()) {
            return bad(format!("w_color must be nonnegative, got {}", self.w_color));
        }
        if self.w_shape + self.w_color <= 0.0 {
            return bad("w_shape + w_color must be positive".into());
        }
        if let SigmaColor::Fixed(s) = self.sigma_color {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma_color must be positive, got {s}"));
            }
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(self.sigma_floor > 0.0) {
            return bad(format!(
                "sigma_floor must be positive, got {}",
                self.sigma_floor
            ));
        }
        Ok(())
    }

    /// Whether the color outlier bias takes part in the posterior. Always
    /// false when color has zero weight.
    pub fn uses_color_outlier_term(&self) -> bool {
        self.color_outlier_term && self.w_color > 0.0
    }

    pub fn uses_color(&self) -> bool {
        self.w_color > 0.0
    }
}

/// The Gaussian kernel over the original model positions and the
/// coefficients of the displacement `T = Y + G W`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentField {
    pub kernel: DMatrix<f64>,
    pub coefficients: DMatrix<f64>,
}

impl CoherentField {
    pub fn displacement(&self) -> DMatrix<f64> {
        &self.kernel * &self.coefficients
    }
}

/// Soft correspondences: `weights[(i, n)]` is the posterior that model
/// point `i` generated anchor point `n`. `outlier_mass[n]` is the share of
/// column `n` assigned to the outlier terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    pub weights: DMatrix<f64>,
    pub outlier_mass: DVector<f64>,
}

impl PosteriorMatrix {
    pub fn model_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn anchor_count(&self) -> usize {
        self.weights.ncols()
    }

    /// `P 1`: total posterior mass of each model point.
    pub fn row_sums(&self) -> DVector<f64> {
        let m = self.weights.nrows();
        DVector::from_fn(m, |i, _| self.weights.row(i).sum())
    }

    /// `P^T 1`: total posterior mass of each anchor point.
    pub fn column_sums(&self) -> DVector<f64> {
        let n = self.weights.ncols();
        DVector::from_fn(n, |j, _| self.weights.column(j).sum())
    }

    /// Index of the most probable model point for each anchor point.
    pub fn column_argmax(&self) -> Vec<usize> {
        self.weights
            .column_iter()
            .map(|c| c.imax())
            .collect()
    }
}

/// Why the EM loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The relative objective change fell below the tolerance.
    Tolerance,
    /// The shape variance reached the configured floor.
    SigmaFloor,
    MaxIterations,
}

/// Outcome of a registration run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationReport {
    /// Registered model positions, carrying the model's colors.
    pub transformed: ColoredPointSet,
    /// Kernel and coefficients. Expressed in normalized coordinates when the
    /// run used prenormalization.
    pub field: CoherentField,
    /// Shape variance after each M-step.
    pub sigma_shape_trace: Vec<f64>,
    /// Negative log-likelihood at each E-step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// The color standard deviation the run used.
    pub sigma_color: f64,
}
