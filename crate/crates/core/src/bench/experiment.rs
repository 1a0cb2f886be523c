//! Experiment descriptions, instance construction and method comparison.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::synth::{
    add_color_noise, apply_warp, inject_color_outliers, remove_cluster, remove_points, rms_error,
    CorrespondenceGroundTruth, RbfControl, Side, Warp,
};
use crate::driver::{register_with, Method};
use crate::error::{CcpdError, Result};
use crate::pointset::ColoredPointSet;
use crate::types::RegistrationConfig;

/// How points are chosen for removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalPattern {
    /// Uniformly at random over the set.
    Uniform,
    /// The nearest neighbours of one random point.
    Cluster,
}

/// One corrupted registration instance derived from a base set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub missing_fraction: f64,
    pub removal_side: Side,
    pub removal_pattern: RemovalPattern,
    pub color_snr_db: Option<f64>,
    pub color_outlier_fraction: f64,
    pub warp: Warp,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            missing_fraction: 0.0,
            removal_side: Side::Anchor,
            removal_pattern: RemovalPattern::Uniform,
            color_snr_db: None,
            color_outlier_fraction: 0.0,
            warp: Warp::None,
        }
    }
}

/// A registration problem with known answers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub anchor: ColoredPointSet,
    pub model: ColoredPointSet,
    pub truth: CorrespondenceGroundTruth,
}

/// Score of one method on one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    pub rms: f64,
    pub iterations: usize,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRecord {
    pub spec_hash: String,
    pub seed: u64,
    pub ccpd: MethodOutcome,
    pub cpd: MethodOutcome,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(CcpdError::InvalidArgument(format!(
                "missing_fraction must be in [0, 1), got {}",
                self.missing_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.color_outlier_fraction) {
            return Err(CcpdError::InvalidArgument(format!(
                "color_outlier_fraction must be in [0, 1], got {}",
                self.color_outlier_fraction
            )));
        }
        if let Some(snr) = self.color_snr_db {
            if !snr.is_finite() {
                return Err(CcpdError::InvalidArgument(format!(
                    "color_snr_db must be finite, got {snr}"
                )));
            }
        }
        match &self.warp {
            Warp::None => {}
            Warp::Rbf { radius, .. } | Warp::Random { radius, .. } if !(*radius > 0.0) => {
                return Err(CcpdError::InvalidArgument(format!(
                    "warp radius must be positive, got {radius}"
                )));
            }
            Warp::Random { amplitude, .. } if !(amplitude.is_finite() && *amplitude >= 0.0) => {
                return Err(CcpdError::InvalidArgument(format!(
                    "warp amplitude must be finite and non-negative, got {amplitude}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// Identifies the experimental condition: every field except the seed.
    pub fn spec_hash(&self) -> String {
        let mut canonical = self.to_text();
        canonical = canonical
            .lines()
            .filter(|l| !l.starts_with("seed"))
            .collect::<Vec<_>>()
            .join("\n");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Serializes as `key = value` lines.
    pub fn to_text(&self) -> String {
        let side = match self.removal_side {
            Side::Anchor => "anchor",
            Side::Model => "model",
        };
        let pattern = match self.removal_pattern {
            RemovalPattern::Uniform => "uniform",
            RemovalPattern::Cluster => "cluster",
        };
        let snr = self
            .color_snr_db
            .map_or_else(|| "none".to_string(), |v| format!("{v:?}"));
        format!(
            "seed = {}\nmissing_fraction = {:?}\nremoval_side = {side}\nremoval_pattern = {pattern}\n\
             color_snr_db = {snr}\ncolor_outlier_fraction = {:?}\nwarp = {}\n",
            self.seed, self.missing_fraction, self.color_outlier_fraction, WarpText(&self.warp)
        )
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// missing keys keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| CcpdError::InvalidArgument(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(&format!("bad number {v:?}")));
            match key {
                "seed" => spec.seed = value.parse().map_err(|_| bad("bad seed"))?,
                "missing_fraction" => spec.missing_fraction = num(value)?,
                "removal_side" => {
                    spec.removal_side = match value {
                        "anchor" => Side::Anchor,
                        "model" => Side::Model,
                        _ => return Err(bad("removal_side must be anchor or model")),
                    }
                }
                "removal_pattern" => {
                    spec.removal_pattern = match value {
                        "uniform" => RemovalPattern::Uniform,
                        "cluster" => RemovalPattern::Cluster,
                        _ => return Err(bad("removal_pattern must be uniform or cluster")),
                    }
                }
                "color_snr_db" => {
                    spec.color_snr_db = if value == "none" { None } else { Some(num(value)?) }
                }
                "color_outlier_fraction" => spec.color_outlier_fraction = num(value)?,
                "warp" => spec.warp = parse_warp(value).map_err(|e| bad(&e))?,
                _ => return Err(bad(&format!("unknown key {key:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Independent seeds for the warp, removal, noise and outlier draws.
    fn sub_seeds(&self) -> [u64; 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        [rng.next_u64(), rng.next_u64(), rng.next_u64(), rng.next_u64()]
    }
}

impl FromStr for ExperimentSpec {
    type Err = CcpdError;
    fn from_str(s: &str) -> Result<Self> {
        Self::from_text(s)
    }
}

struct WarpText<'a>(&'a Warp);

impl fmt::Display for WarpText<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        match self.0 {
            Warp::None => write!(f, "none"),
            Warp::Random {
                controls,
                amplitude,
                radius,
            } => write!(f, "random {controls} {amplitude:?} {radius:?}"),
            Warp::Rbf { radius, controls } => {
                write!(f, "rbf {radius:?}")?;
                for c in controls {
                    write!(f, " {}/{}", join(&c.center), join(&c.amplitude))?;
                }
                Ok(())
            }
        }
    }
}

/// `none`, `random <controls> <amplitude> <radius>`, or
/// `rbf <radius> <cx,cy,..>/<ax,ay,..> ...`.
fn parse_warp(value: &str) -> std::result::Result<Warp, String> {
    let mut parts = value.split_whitespace();
    let num = |s: Option<&str>| -> std::result::Result<f64, String> {
        let s = s.ok_or("warp is missing a field")?;
        s.parse().map_err(|_| format!("bad warp number {s:?}"))
    };
    let list = |s: &str| -> std::result::Result<Vec<f64>, String> {
        s.split(',')
            .map(|x| x.parse().map_err(|_| format!("bad warp number {x:?}")))
            .collect()
    };
    let warp = match parts.next() {
        Some("none") => Warp::None,
        Some("random") => {
            let controls = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or("random warp needs a control count")?;
            Warp::Random {
                controls,
                amplitude: num(parts.next())?,
                radius: num(parts.next())?,
            }
        }
        Some("rbf") => {
            let radius = num(parts.next())?;
            let controls = parts
                .by_ref()
                .map(|c| {
                    let (center, amp) = c.split_once('/').ok_or("rbf control needs center/amplitude")?;
                    Ok(RbfControl {
                        center: list(center)?,
                        amplitude: list(amp)?,
                    })
                })
                .collect::<std::result::Result<_, String>>()?;
            return Ok(Warp::Rbf { radius, controls });
        }
        _ => return Err(format!("unknown warp {value:?}")),
    };
    if parts.next().is_some() {
        return Err(format!("trailing fields in warp {value:?}"));
    }
    Ok(warp)
}

/// Materializes the instance: the anchor is the warped base and the model the
/// base itself, matched by index. Points are then removed from the chosen
/// side, and color noise and color outliers are applied to the model.
pub fn build_instance(spec: &ExperimentSpec, base: &ColoredPointSet) -> Result<Instance> {
    spec.validate()?;
    let [warp_seed, removal_seed, noise_seed, outlier_seed] = spec.sub_seeds();
    let mut anchor = apply_warp(base, &spec.warp, warp_seed)?;
    let mut model = base.clone();
    let mut truth = CorrespondenceGroundTruth::identity(base.len());
    let remove = match spec.removal_pattern {
        RemovalPattern::Uniform => remove_points,
        RemovalPattern::Cluster => remove_cluster,
    };
    match spec.removal_side {
        Side::Anchor => {
            (anchor, truth) = remove(&anchor, &truth, Side::Anchor, spec.missing_fraction, removal_seed)?
        }
        Side::Model => {
            (model, truth) = remove(&model, &truth, Side::Model, spec.missing_fraction, removal_seed)?
        }
    }
    if let Some(snr) = spec.color_snr_db {
        model = add_color_noise(&model, snr, noise_seed)?;
    }
    model = inject_color_outliers(&model, spec.color_outlier_fraction, outlier_seed)?;
    Ok(Instance {
        anchor,
        model,
        truth,
    })
}

/// Registers one instance with the given method and scores it.
pub fn score_method(instance: &Instance, config: &RegistrationConfig, method: Method) -> Result<MethodOutcome> {
    let start = Instant::now();
    let report = register_with(method, &instance.anchor, &instance.model, config)?;
    let millis = start.elapsed().as_secs_f64() * 1e3;
    Ok(MethodOutcome {
        rms: rms_error(&report.transformed, &instance.anchor, &instance.truth)?,
        iterations: report.iterations,
        millis,
    })
}

/// Builds the instance for `spec` and scores both methods with `config`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    base: &ColoredPointSet,
    config: &RegistrationConfig,
) -> Result<ComparisonRecord> {
    let instance = build_instance(spec, base)?;
    Ok(ComparisonRecord {
        spec_hash: spec.spec_hash(),
        seed: spec.seed,
        ccpd: score_method(&instance, config, Method::Ccpd)?,
        cpd: score_method(&instance, config, Method::Cpd)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::shapes::fish;

    fn sample_spec() -> ExperimentSpec {
        ExperimentSpec {
            seed: 11,
            missing_fraction: 0.25,
            removal_side: Side::Model,
            removal_pattern: RemovalPattern::Cluster,
            color_snr_db: Some(12.5),
            color_outlier_fraction: 0.1,
            warp: Warp::Rbf {
                radius: 0.5,
                controls: vec![RbfControl {
                    center: vec![0.1, -0.2],
                    amplitude: vec![0.05, 0.0],
                }],
            },
        }
    }

    #[test]
    fn text_round_trip() {
        let s = sample_spec();
        assert_eq!(ExperimentSpec::from_text(&s.to_text()).unwrap(), s);
        let r = ExperimentSpec {
            warp: Warp::Random {
                controls: 4,
                amplitude: 0.1,
                radius: 0.3,
            },
            color_snr_db: None,
            ..ExperimentSpec::default()
        };
        assert_eq!(ExperimentSpec::from_text(&r.to_text()).unwrap(), r);
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = sample_spec();
        let b = ExperimentSpec { seed: 99, ..a.clone() };
        let c = ExperimentSpec {
            missing_fraction: 0.3,
            ..a.clone()
        };
        assert_eq!(a.spec_hash(), b.spec_hash());
        assert_ne!(a.spec_hash(), c.spec_hash());
        assert_eq!(a.spec_hash().len(), 16);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(ExperimentSpec::from_text("missing_fraction = 1.0").is_err());
        assert!(ExperimentSpec::from_text("colour = 3").is_err());
        assert!(ExperimentSpec::from_text("warp = spiral").is_err());
        assert!(ExperimentSpec::from_text("color_snr_db = inf").is_err());
    }

    #[test]
    fn instances_are_deterministic() {
        let base = fish(91).unwrap();
        let s = sample_spec();
        let a = build_instance(&s, &base).unwrap();
        assert_eq!(a, build_instance(&s, &base).unwrap());
        assert_eq!(a.model.len(), 91 - 22);
        assert_eq!(a.anchor.len(), 91);
        let other = build_instance(&ExperimentSpec { seed: 12, ..s }, &base).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn null_spec_registers_exactly() {
        let base = fish(40).unwrap();
        let rec = run_experiment(&ExperimentSpec::default(), &base, &RegistrationConfig::default()).unwrap();
        assert!(rec.ccpd.rms < 1e-6, "{rec:?}");
        assert!(rec.cpd.rms < 1e-6, "{rec:?}");
    }
}
