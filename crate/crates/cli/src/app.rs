//! Subcommands of the `ccpd` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use ccpd::bench::experiment::{build_instance, run_experiment, ExperimentSpec};
use ccpd::bench::record::{format_summary, parse_rows, summarize, HEADER};
use ccpd::bench::shapes::fish;
use ccpd::bench::synth::{flow_field, rms_error};
use ccpd::{register_with, ColoredPointSet, Method, RegistrationConfig, RegistrationReport};
use clap::{Args, Parser, Subcommand};

use crate::cloud::{read_point_cloud, write_csv, write_point_cloud, Format};
use crate::config::{apply_setting, read_config};
use crate::downsample::{downsample, Downsample};
use crate::error::{CliError, Result};
use crate::fileio::{read_to_string, write_atomic};
use crate::truth::{read_truth, write_truth};

#[derive(Debug, Parser)]
#[command(name = "ccpd", version, about = "Non-rigid registration of colored point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register a moving cloud onto an anchor cloud.
    Register(RegisterArgs),
    /// Build an anchor, model and ground truth from a base cloud and an
    /// experiment description.
    Synth(SynthArgs),
    /// Print the RMS error of a registered cloud against ground truth.
    Eval(EvalArgs),
    /// Run both methods on an experiment and record the scores.
    Compare(CompareArgs),
    /// Average recorded scores per condition and method.
    Report(ReportArgs),
}

/// Settings that override the config file.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set lambda=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub w_color: Option<f64>,
    /// A positive number or `auto`.
    #[arg(long)]
    pub sigma_color: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RegistrationConfig> {
        let mut config = match &self.config {
            Some(p) => read_config(p)?,
            None => RegistrationConfig::default(),
        };
        let mut set = |k: &str, v: String| apply_setting(&mut config, k, &v).map_err(CliError::Usage);
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            set(k.trim(), v.trim().to_string())?;
        }
        let flags = [
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("w_color", self.w_color.map(|v| v.to_string())),
            ("sigma_color", self.sigma_color.clone()),
            ("max_iterations", self.max_iterations.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                set(k, v)?;
            }
        }
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub anchor: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "ccpd")]
    pub method: Method,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Registered cloud; CSV to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Displacement arrows as CSV.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    /// Iteration count, traces and (with --truth) the RMS error.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Keep this many random points of each cloud first.
    #[arg(long)]
    pub downsample: Option<usize>,
    /// Merge points per cubic cell of this size first.
    #[arg(long, conflicts_with = "downsample")]
    pub voxel: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Input format when the extension does not tell.
    #[arg(long)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Base cloud file, or `builtin:fish:<count>`.
    #[arg(long)]
    pub base: String,
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_anchor: PathBuf,
    #[arg(long)]
    pub out_model: PathBuf,
    #[arg(long)]
    pub out_truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub transformed: PathBuf,
    #[arg(long)]
    pub anchor: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Base cloud file, or `builtin:fish:<count>`.
    #[arg(long)]
    pub base: String,
    /// Experiment description. Repeat to run several conditions.
    #[arg(long, required = true)]
    pub spec: Vec<PathBuf>,
    /// Run this many consecutive seeds starting at the experiment's seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Record file to append to; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run_cli<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Register(a) => register_cmd(a, stdout, stderr),
        Command::Synth(a) => synth_cmd(a),
        Command::Eval(a) => eval_cmd(a, stdout),
        Command::Compare(a) => compare_cmd(a, stdout),
        Command::Report(a) => report_cmd(a, stdout),
    }
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::io("<stdout>", e)
}

fn load_base(base: &str) -> Result<ColoredPointSet> {
    if let Some(rest) = base.strip_prefix("builtin:") {
        let mut parts = rest.split(':');
        return match (parts.next(), parts.next().map(str::parse::<usize>), parts.next()) {
            (Some("fish"), Some(Ok(count)), None) if count > 0 => Ok(fish(count)?),
            (Some("fish"), None, None) => Ok(fish(91)?),
            _ => Err(CliError::Usage(format!("unknown builtin base {base:?}"))),
        };
    }
    read_point_cloud(Path::new(base), None)
}

fn read_spec(path: &Path) -> Result<ExperimentSpec> {
    ExperimentSpec::from_text(&read_to_string(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn register_cmd(a: RegisterArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let mut config = a.config.resolve()?;
    let mut anchor = read_point_cloud(&a.anchor, a.format)?;
    let mut model = read_point_cloud(&a.model, a.format)?;
    let strategy = match (a.downsample, a.voxel) {
        (Some(target), _) => Some(Downsample::Uniform { target, seed: a.seed }),
        (_, Some(cell)) => Some(Downsample::Voxel { cell }),
        _ => None,
    };
    if let Some(s) = strategy {
        if a.truth.is_some() {
            return Err(CliError::Usage("--truth cannot be combined with downsampling".into()));
        }
        let clamp = |s: Downsample, n: usize| match s {
            Downsample::Uniform { target, seed } => Downsample::Uniform {
                target: target.min(n),
                seed,
            },
            v => v,
        };
        anchor = downsample(&anchor, clamp(s, anchor.len()))?;
        model = downsample(&model, clamp(s, model.len()))?;
    }
    let mut method = a.method;
    if method == Method::Ccpd && config.uses_color() && (anchor.color_dim() == 0 || model.color_dim() == 0) {
        writeln!(stderr, "warning: input carries no color; registering on shape alone").map_err(out_err)?;
        config = config.shape_only();
        method = Method::Cpd;
    }
    let report = register_with(method, &anchor, &model, &config)?;
    let rms = match &a.truth {
        Some(p) => {
            let truth = read_truth(p, model.len(), anchor.len())?;
            Some(rms_error(&report.transformed, &anchor, &truth)?)
        }
        None => None,
    };
    match &a.out {
        Some(p) => write_point_cloud(&report.transformed, p, None)?,
        None => {
            write_csv(&report.transformed, stdout).map_err(out_err)?;
        }
    }
    if let Some(p) = &a.flow {
        write_flow(&model, &report.transformed, p)?;
    }
    if let Some(p) = &a.metrics {
        let text = metrics_text(method, &report, rms);
        write_atomic(p, |w| w.write_all(text.as_bytes()))?;
    }
    let rms_text = rms.map(|r| format!(", rms {r:e}")).unwrap_or_default();
    writeln!(
        stderr,
        "{}: {} iterations, stop {:?}{rms_text}",
        method.name(),
        report.iterations,
        report.stop_reason
    )
    .map_err(out_err)?;
    Ok(())
}

fn write_flow(model: &ColoredPointSet, transformed: &ColoredPointSet, path: &Path) -> Result<()> {
    let arrows = flow_field(model, transformed)?;
    let d = model.spatial_dim();
    let axes = ["x", "y", "z"];
    let mut header: Vec<String> = (0..d).map(|k| format!("o{}", axes.get(k).unwrap_or(&"w"))).collect();
    header.extend((0..d).map(|k| format!("d{}", axes.get(k).unwrap_or(&"w"))));
    write_atomic(path, |w| {
        writeln!(w, "{}", header.join(","))?;
        for arrow in &arrows {
            let fields: Vec<String> = arrow
                .origin
                .iter()
                .chain(arrow.displacement.iter())
                .map(|v| format!("{v:?}"))
                .collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    })
}

fn metrics_text(method: Method, r: &RegistrationReport, rms: Option<f64>) -> String {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
    let mut s = format!(
        "method = {}\niterations = {}\nconverged = {}\nstop_reason = {:?}\nsigma_color = {:e}\n",
        method.name(),
        r.iterations,
        r.converged,
        r.stop_reason,
        r.sigma_color
    );
    if let Some(rms) = rms {
        s.push_str(&format!("rms = {rms:e}\n"));
    }
    s.push_str(&format!("sigma_shape_sq_trace = {}\n", join(&r.sigma_shape_trace)));
    s.push_str(&format!("objective_trace = {}\n", join(&r.objective_trace)));
    s
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let base = load_base(&a.base)?;
    let spec = read_spec(&a.spec)?;
    let inst = build_instance(&spec, &base)?;
    write_point_cloud(&inst.anchor, &a.out_anchor, None)?;
    write_point_cloud(&inst.model, &a.out_model, None)?;
    write_truth(&inst.truth, &a.out_truth)
}

fn eval_cmd(a: EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let t = read_point_cloud(&a.transformed, None)?;
    let x = read_point_cloud(&a.anchor, None)?;
    let truth = read_truth(&a.truth, t.len(), x.len())?;
    let rms = rms_error(&t, &x, &truth)?;
    writeln!(stdout, "{rms:e}").map_err(out_err)
}

fn compare_cmd(a: CompareArgs, stdout: &mut dyn Write) -> Result<()> {
    let base = load_base(&a.base)?;
    let config = a.config.resolve()?;
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let mut lines = Vec::new();
    for path in &a.spec {
        let spec = read_spec(path)?;
        for k in 0..a.seeds {
            let s = ExperimentSpec {
                seed: spec.seed.wrapping_add(k),
                ..spec.clone()
            };
            let record = run_experiment(&s, &base, &config)?;
            lines.extend(record.rows().iter().map(|r| r.to_line()));
        }
    }
    match &a.out {
        Some(p) => {
            let mut text = if p.exists() { read_to_string(p)? } else { String::new() };
            if text.trim().is_empty() {
                text = format!("{HEADER}\n");
            } else if !text.ends_with('\n') {
                text.push('\n');
            }
            for l in &lines {
                text.push_str(l);
                text.push('\n');
            }
            write_atomic(p, |w| w.write_all(text.as_bytes()))
        }
        None => {
            let mut text = format!("{HEADER}\n");
            for l in &lines {
                text.push_str(l);
                text.push('\n');
            }
            stdout.write_all(text.as_bytes()).map_err(out_err)
        }
    }
}

fn report_cmd(a: ReportArgs, stdout: &mut dyn Write) -> Result<()> {
    let text = read_to_string(&a.input)?;
    let rows = parse_rows(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no records", a.input.display())));
    }
    stdout
        .write_all(format_summary(&summarize(&rows)).as_bytes())
        .map_err(out_err)
}
