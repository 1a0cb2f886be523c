//! The EM registration loop.
//!
//! Each iteration evaluates the posterior with the previous transform and
//! variance (E-step), then solves for new kernel coefficients, applies the
//! transform and re-estimates the shape variance (M-step). Color
//! likelihoods do not depend on the transform and are computed once.

use nalgebra::{DMatrix, RowDVector};
use rayon::prelude::*;

use crate::error::{CcpdError, Result};
use crate::estep::{
    ccpd_posterior, color_log_likelihoods, cpd_posterior, negative_log_likelihood,
    LikelihoodMatrices,
};
use crate::pointset::ColoredPointSet;
use crate::solver::{apply_transform, build_kernel, solve_coefficients, update_sigma_shape, MStepInputs};
use crate::types::{
    CoherentField, PosteriorMatrix, RegistrationConfig, RegistrationReport, SigmaColor,
    StopReason,
};

/// Which posterior drives the E-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Shape and color combined.
    Ccpd,
    /// Shape only; colors are carried through untouched.
    Cpd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ccpd => "ccpd",
            Method::Cpd => "cpd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = CcpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ccpd" => Ok(Method::Ccpd),
            "cpd" => Ok(Method::Cpd),
            other => Err(CcpdError::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// State before the first iteration.
#[derive(Debug, Clone)]
pub struct InitialState {
    /// All zeros.
    pub coefficients: DMatrix<f64>,
    pub sigma_shape_sq: f64,
    pub sigma_color: f64,
    pub kernel: DMatrix<f64>,
    /// Present when the configuration gives color a positive weight.
    pub log_color: Option<DMatrix<f64>>,
}

/// `(1 / (D N M)) sum_{n,m} |x_n - y_m|^2`, with `D` the spatial dimension.
pub fn initial_sigma_shape(anchor_positions: &DMatrix<f64>, model_positions: &DMatrix<f64>) -> f64 {
    let (n, d) = anchor_positions.shape();
    let m = model_positions.nrows();
    let xt = anchor_positions.transpose();
    let yt = model_positions.transpose();
    let per_anchor: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = xt.column(j);
            (0..m).map(|i| (x - yt.column(i)).norm_squared()).sum()
        })
        .collect();
    per_anchor.iter().sum::<f64>() / (d * n * m) as f64
}

/// Resolves the color standard deviation. The automatic choice is
/// `sqrt(sum_{n,m} |a_n - m_m|^2 / (D_C N M))`, falling back to 1 when the
/// sets carry no color or all colors coincide.
pub fn resolve_sigma_color(
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    policy: SigmaColor,
) -> f64 {
    match policy {
        SigmaColor::Fixed(s) => s,
        SigmaColor::Auto => {
            if anchor.color_dim() == 0 || anchor.color_dim() != model.color_dim() {
                return 1.0;
            }
            let var = initial_sigma_shape(anchor.colors(), model.colors());
            if var > 0.0 && var.is_finite() {
                var.sqrt()
            } else {
                1.0
            }
        }
    }
}

fn check_inputs(
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    config: &RegistrationConfig,
) -> Result<()> {
    config.validate()?;
    if anchor.spatial_dim() != model.spatial_dim() {
        return Err(CcpdError::DimensionMismatch(format!(
            "anchor is {}-D, model is {}-D",
            anchor.spatial_dim(),
            model.spatial_dim()
        )));
    }
    if config.uses_color() {
        if anchor.color_dim() != model.color_dim() {
            return Err(CcpdError::DimensionMismatch(format!(
                "anchor has {} color channels, model has {}",
                anchor.color_dim(),
                model.color_dim()
            )));
        }
        if anchor.color_dim() == 0 {
            return Err(CcpdError::DimensionMismatch(
                "color weight is positive but the sets carry no color".into(),
            ));
        }
    }
    Ok(())
}

/// Zero coefficients, the initial shape variance (clamped at the floor), the
/// color standard deviation, the kernel, and the cached color likelihoods.
pub fn initialize(
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    config: &RegistrationConfig,
) -> Result<InitialState> {
    check_inputs(anchor, model, config)?;
    let y = model.positions();
    let sigma_shape_sq = initial_sigma_shape(anchor.positions(), y).max(config.sigma_floor);
    let sigma_color = resolve_sigma_color(anchor, model, config.sigma_color);
    let log_color = if config.uses_color() {
        Some(color_log_likelihoods(anchor, model, sigma_color)?)
    } else {
        None
    };
    Ok(InitialState {
        coefficients: DMatrix::zeros(y.nrows(), y.ncols()),
        sigma_shape_sq,
        sigma_color,
        kernel: build_kernel(y, config.beta),
        log_color,
    })
}

/// Joint centering and scaling applied to both sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub center: RowDVector<f64>,
    pub scale: f64,
}

impl Normalization {
    /// Zero mean over the union of both sets, and unit maximum distance from
    /// that mean.
    pub fn joint(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let count = (a.nrows() + b.nrows()) as f64;
        let center = (a.row_sum() + b.row_sum()) / count;
        let scale = a
            .row_iter()
            .chain(b.row_iter())
            .map(|r| (r - &center).norm())
            .fold(0.0, f64::max);
        Self {
            center,
            scale: if scale > 0.0 { scale } else { 1.0 },
        }
    }

    pub fn apply(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = p.clone();
        for mut r in out.row_iter_mut() {
            r -= &self.center;
            r /= self.scale;
        }
        out
    }

    pub fn invert(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = p.clone();
        for mut r in out.row_iter_mut() {
            r *= self.scale;
            r += &self.center;
        }
        out
    }
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    let diff = (cur - prev).abs();
    if prev == 0.0 {
        diff
    } else {
        diff / prev.abs()
    }
}

fn run(
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    config: &RegistrationConfig,
    method: Method,
) -> Result<RegistrationReport> {
    let init_config = match method {
        Method::Ccpd => config.clone(),
        Method::Cpd => config.shape_only(),
    };
    check_inputs(anchor, model, &init_config)?;
    let norm = config
        .prenormalize
        .then(|| Normalization::joint(anchor.positions(), model.positions()));
    let (anchor_n, model_n) = match &norm {
        Some(nz) => (
            anchor.with_positions(nz.apply(anchor.positions()))?,
            model.with_positions(nz.apply(model.positions()))?,
        ),
        None => (anchor.clone(), model.clone()),
    };

    let init = initialize(&anchor_n, &model_n, &init_config)?;
    let x = anchor_n.positions();
    let y = model_n.positions();
    let kernel = init.kernel;
    let sigma_color = init.sigma_color;
    let mut log_color = init.log_color;
    let mut sigma2 = init.sigma_shape_sq;
    let mut coefficients = init.coefficients;
    let mut transformed = y.clone();
    let mut sigma_trace = Vec::new();
    let mut objective_trace: Vec<f64> = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;
    let mut iterations = 0;

    for iteration in 1..=config.max_iterations {
        let lik = LikelihoodMatrices::with_cached_color(
            x,
            &transformed,
            sigma2,
            log_color.take(),
            sigma_color,
        )?;
        let posterior: PosteriorMatrix = match method {
            Method::Ccpd => ccpd_posterior(&lik, config)?,
            Method::Cpd => cpd_posterior(&lik, config.alpha)?,
        };
        let objective = negative_log_likelihood(&lik, config, method == Method::Ccpd);
        if !objective.is_finite() {
            return Err(CcpdError::Diverged { iteration });
        }
        log_color = lik.into_log_color();

        coefficients = solve_coefficients(&MStepInputs {
            posterior: &posterior,
            anchor_positions: x,
            model_positions: y,
            kernel: &kernel,
            lambda: config.lambda,
            sigma_shape_sq: sigma2,
        })?;
        transformed = apply_transform(y, &kernel, &coefficients)?;
        sigma2 = update_sigma_shape(&posterior, x, &transformed, config.sigma_floor)?;
        if !sigma2.is_finite() {
            return Err(CcpdError::Diverged { iteration });
        }
        sigma_trace.push(sigma2);
        iterations = iteration;

        let prev = objective_trace.last().copied();
        objective_trace.push(objective);
        if let Some(prev) = prev {
            if relative_change(prev, objective) < config.tolerance {
                stop_reason = StopReason::Tolerance;
                break;
            }
        }
        if sigma2 <= config.sigma_floor {
            stop_reason = StopReason::SigmaFloor;
            break;
        }
    }

    let out_positions = match &norm {
        Some(nz) => nz.invert(&transformed),
        None => transformed,
    };
    Ok(RegistrationReport {
        transformed: model.with_positions(out_positions)?,
        field: CoherentField {
            kernel,
            coefficients,
        },
        sigma_shape_trace: sigma_trace,
        objective_trace,
        iterations,
        converged: stop_reason == StopReason::Tolerance,
        stop_reason,
        sigma_color,
    })
}

/// Registers `model` onto `anchor` with the combined shape-and-color
/// posterior.
pub fn register(
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    config: &RegistrationConfig,
) -> Result<RegistrationReport> {
    run(anchor, model, config, Method::Ccpd)
}

/// Registers with the shape-only posterior. Same loop, same stopping rule.
pub fn baseline_cpd_register(
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    config: &RegistrationConfig,
) -> Result<RegistrationReport> {
    run(anchor, model, config, Method::Cpd)
}

pub fn register_with(
    method: Method,
    anchor: &ColoredPointSet,
    model: &ColoredPointSet,
    config: &RegistrationConfig,
) -> Result<RegistrationReport> {
    run(anchor, model, config, method)
}
