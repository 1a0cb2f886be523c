//! Non-rigid registration of colored point sets.
//!
//! The moving set is modelled as a Gaussian mixture whose components sit on
//! the moving points; an expectation-maximization loop estimates a smooth
//! displacement field `T = Y + G W` that aligns it to the anchor set. The
//! correspondence step combines spatial likelihoods with color likelihoods,
//! so points are matched by where they are and by what color they carry.
//! With zero color weight the method reduces to plain coherent point drift.
//!
//! ```no_run
//! use ccpd::{register, ColoredPointSet, RegistrationConfig};
//! # fn load() -> (ColoredPointSet, ColoredPointSet) { unimplemented!() }
//! let (anchor, moving) = load();
//! let report = register(&anchor, &moving, &RegistrationConfig::default())?;
//! println!("{} iterations", report.iterations);
//! # Ok::<(), ccpd::CcpdError>(())
//! ```

pub mod bench;
pub mod driver;
pub mod error;
pub mod estep;
pub mod pointset;
pub mod solver;
pub mod types;

pub use driver::{baseline_cpd_register, initialize, register, register_with, InitialState, Method};
pub use error::{CcpdError, Result};
pub use estep::{
    ccpd_posterior, color_likelihoods, color_outlier_term, cpd_posterior, location_outlier_term,
    negative_log_likelihood, shape_likelihoods, LikelihoodMatrices,
};
pub use pointset::{validate_parts, ColoredPointSet, Violation};
pub use solver::{apply_transform, build_kernel, solve_coefficients, update_sigma_shape, MStepInputs};
pub use types::{
    CoherentField, PosteriorMatrix, RegistrationConfig, RegistrationReport, SigmaColor, StopReason,
};
