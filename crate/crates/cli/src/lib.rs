//! File formats, configuration files and the command-line front end for
//! the `ccpd` registration library.

pub mod app;
pub mod cloud;
pub mod color;
pub mod config;
pub mod downsample;
pub mod error;
pub mod fileio;
pub mod truth;

pub use app::run_cli;
pub use cloud::{read_point_cloud, write_point_cloud, Format};
pub use color::{hue_to_rgb, rgb_to_hue};
pub use error::CliError;
