//! `key = value` registration settings.

use std::path::Path;

use ccpd::{RegistrationConfig, SigmaColor};

use crate::error::{CliError, Result};
use crate::fileio::read_to_string;

pub const KEYS: [&str; 11] = [
    "alpha",
    "beta",
    "lambda",
    "w_shape",
    "w_color",
    "sigma_color",
    "color_outlier_term",
    "max_iterations",
    "tolerance",
    "sigma_floor",
    "prenormalize",
];

/// Sets one field from its textual value.
pub fn apply_setting(config: &mut RegistrationConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let num = || value.parse::<f64>().map_err(|_| format!("{key}: bad number {value:?}"));
    let flag = || match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {value:?}")),
    };
    match key {
        "alpha" => config.alpha = num()?,
        "beta" => config.beta = num()?,
        "lambda" => config.lambda = num()?,
        "w_shape" => config.w_shape = num()?,
        "w_color" => config.w_color = num()?,
        "sigma_color" => {
            config.sigma_color = if value == "auto" {
                SigmaColor::Auto
            } else {
                SigmaColor::Fixed(num()?)
            }
        }
        "color_outlier_term" => config.color_outlier_term = flag()?,
        "max_iterations" => {
            config.max_iterations = value
                .parse()
                .map_err(|_| format!("{key}: bad count {value:?}"))?
        }
        "tolerance" => config.tolerance = num()?,
        "sigma_floor" => config.sigma_floor = num()?,
        "prenormalize" => config.prenormalize = flag()?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

pub fn parse_config(text: &str) -> std::result::Result<RegistrationConfig, (usize, String)> {
    let mut config = RegistrationConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or((i + 1, "expected key = value".to_string()))?;
        apply_setting(&mut config, k.trim(), v.trim()).map_err(|m| (i + 1, m))?;
    }
    config.validate().map_err(|e| (0, e.to_string()))?;
    Ok(config)
}

pub fn read_config(path: &Path) -> Result<RegistrationConfig> {
    parse_config(&read_to_string(path)?).map_err(|(line, m)| CliError::parse(path, line, m))
}

pub fn format_config(c: &RegistrationConfig) -> String {
    let sigma = match c.sigma_color {
        SigmaColor::Auto => "auto".to_string(),
        SigmaColor::Fixed(s) => format!("{s:?}"),
    };
    format!(
        "alpha = {:?}\nbeta = {:?}\nlambda = {:?}\nw_shape = {:?}\nw_color = {:?}\nsigma_color = {sigma}\n\
         color_outlier_term = {}\nmax_iterations = {}\ntolerance = {:?}\nsigma_floor = {:?}\nprenormalize = {}\n",
        c.alpha,
        c.beta,
        c.lambda,
        c.w_shape,
        c.w_color,
        c.color_outlier_term,
        c.max_iterations,
        c.tolerance,
        c.sigma_floor,
        c.prenormalize
    )
}
