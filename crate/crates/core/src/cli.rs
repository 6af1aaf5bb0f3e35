//! Command-line front end. `main` parses arguments and calls [`run`].
//!
//! Exit status: 0 on success, 1 when a check fails, 2 on usage or
//! configuration errors. Every output file is written to a temporary file
//! in its target directory and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::atlas::{lift_to_manifold, Atlas, Chart};
use crate::builtin::{self, Builtin, ModelConfig, Params};
use crate::error::{Error, Result};
use crate::funcspace::{SegmentC1, SAMPLES_PER_INTERVAL};
use crate::harness::{run_suite, sample_in_u, seeded_atlas, SuiteConfig, Target};
use crate::model::{Membership, Model};
use crate::semiflow::integrate;

/// Directory for outputs whose path is not given explicitly.
pub const OUT_DIR_ENV: &str = "SOLMAN_OUT_DIR";

/// Largest on-manifold residual `lift` accepts.
pub const LIFT_TOL: f64 = 1e-10;

/// Largest round-trip residual `chart` accepts.
pub const ROUND_TRIP_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "solman",
    version,
    about = "Charts, atlases and a semiflow integrator for state-dependent delay systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the verification suite and write a JSON report.
    Verify(VerifyArgs),
    /// Build an atlas from seeded random segments and write its manifest.
    Atlas(AtlasArgs),
    /// Correct a segment onto the solution manifold.
    Lift(LiftArgs),
    /// Map a manifold point into the chart codomain, or invert a chart.
    Chart(ChartArgs),
    /// Integrate the semiflow and write the trajectory as CSV.
    Integrate(IntegrateArgs),
    /// Write a segment or frame as JSON or CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Built-in model: ode, eq1, mvw or twodelay.
    #[arg(
        long,
        conflicts_with = "model_file",
        required_unless_present = "model_file"
    )]
    pub model: Option<String>,
    /// Model definition file (.json or .toml).
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Grid nodes on [-r, 0].
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Delays at or below this value count as vanishing.
    #[arg(long)]
    pub zero_tol: Option<f64>,
    /// Model parameter override, repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random segments per segment-based check.
    #[arg(long, default_value_t = 64)]
    pub segments: usize,
    /// Random pairs per pair-based check.
    #[arg(long, default_value_t = 32)]
    pub pairs: usize,
    /// Report path [default: $SOLMAN_OUT_DIR/report-<model>.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AtlasArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Manifest path [default: $SOLMAN_OUT_DIR/atlas-<model>.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Segment JSON. Resampled onto the model grid if needed.
    #[arg(long)]
    pub input: PathBuf,
    /// [default: $SOLMAN_OUT_DIR/lifted.json]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChartArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Segment JSON: a manifold point, or with `--invert` a point of X_0.
    #[arg(long)]
    pub input: PathBuf,
    /// Solve for the manifold point that the chart maps to the input.
    #[arg(long)]
    pub invert: bool,
    /// Atlas seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// [default: $SOLMAN_OUT_DIR/chart.json]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Step size.
    #[arg(long, default_value_t = 1e-2)]
    pub h: f64,
    /// Final time.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    /// Initial segment JSON, lifted onto the manifold if needed
    /// [default: the constant 1 lifted].
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Write every k-th step.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// [default: $SOLMAN_OUT_DIR/traj-<model>.csv]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    /// Random segment in U, not on the manifold.
    Sample,
    /// The same sample lifted onto the manifold.
    Manifold,
    /// The model's registration witness.
    Witness,
    /// Frame columns of the chart covering the lifted sample.
    Frame,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub kind: ExportKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `.csv` for sampled values, anything else for JSON
    /// [default: $SOLMAN_OUT_DIR/<kind>-<model>.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    CheckFailed,
}

/// Exit status for an outcome or an error.
pub fn exit_status(r: &Result<Outcome>) -> u8 {
    match r {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::CheckFailed) => 1,
        Err(
            Error::Config(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Registration(_),
        ) => 2,
        Err(_) => 1,
    }
}

/// Parses `argv`, runs the subcommand and reports errors on stderr.
pub fn main_with_args<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_status(&result))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Verify(a) => verify(a, &mut out),
        Command::Atlas(a) => atlas(a, &mut out),
        Command::Lift(a) => lift(a, &mut out),
        Command::Chart(a) => chart(a, &mut out),
        Command::Integrate(a) => integrate_cmd(a, &mut out),
        Command::Export(a) => export(a, &mut out),
    }
}

impl ModelArgs {
    fn load(&self) -> Result<Builtin> {
        let mut cfg = match (&self.model, &self.model_file) {
            (Some(id), None) => ModelConfig {
                builtin: id.clone(),
                nodes: None,
                zero_tol: None,
                params: Default::default(),
            },
            (None, Some(path)) => ModelConfig::load(path)?,
            _ => {
                return Err(Error::Config(
                    "give exactly one of --model and --model-file".into(),
                ))
            }
        };
        if self.nodes.is_some() {
            cfg.nodes = self.nodes;
        }
        if self.zero_tol.is_some() {
            cfg.zero_tol = self.zero_tol;
        }
        cfg.params.extend(self.params.iter().cloned());
        let params: Params = cfg.params();
        builtin::by_id(&cfg.builtin, &params)
    }
}

/// `explicit`, or `name` inside `$SOLMAN_OUT_DIR` (the working directory
/// when unset).
pub fn output_path(explicit: Option<&Path>, name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join(name),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn read_segment(model: &Model, path: &Path) -> Result<SegmentC1> {
    let text = std::fs::read_to_string(path)?;
    let seg = SegmentC1::from_json(&text)?;
    if seg.n() != model.n() {
        return Err(Error::Config(format!(
            "{} has {} components, model {} has {}",
            path.display(),
            seg.n(),
            model.name(),
            model.n()
        )));
    }
    if seg.grid() == model.grid() || **seg.grid() == **model.grid() {
        return SegmentC1::new(
            model.grid().clone(),
            seg.n(),
            seg.values().to_vec(),
            seg.derivs().to_vec(),
        );
    }
    if (seg.grid().r() - model.r()).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "{} lives on [-{}, 0], model {} on [-{}, 0]",
            path.display(),
            seg.grid().r(),
            model.name(),
            model.r()
        )));
    }
    SegmentC1::resample(model.grid().clone(), &seg)
}

fn json_pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<Outcome> {
    let b = a.model.load()?;
    let cfg = SuiteConfig {
        seed: a.seed,
        segments: a.segments,
        pairs: a.pairs,
    };
    let name = format!("report-{}.json", b.id);
    let report = run_suite(&Target::from(b), &cfg);
    let path = output_path(a.output.as_deref(), &name);
    let mut json = report.to_json()?;
    json.push('\n');
    write_text(&path, &json)?;
    write!(out, "{}", report.to_text())?;
    writeln!(out, "report: {}", path.display())?;
    Ok(if report.passed() {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

fn atlas(a: &AtlasArgs, out: &mut dyn Write) -> Result<Outcome> {
    let b = a.model.load()?;
    let atlas = seeded_atlas(&b.model, a.seed)?;
    let manifest = atlas.manifest()?;
    let path = output_path(a.output.as_deref(), &format!("atlas-{}.json", b.id));
    write_text(&path, &json_pretty(&manifest)?)?;
    let found: Vec<_> = atlas.strata().collect();
    let labels: Vec<String> = found.iter().map(|j| j.to_string()).collect();
    writeln!(
        out,
        "model {}: {} chart(s), strata {{{}}}",
        b.id,
        found.len(),
        labels.join(", ")
    )?;
    for s in &manifest.strata {
        writeln!(
            out,
            "  {:<8} {:<16} witnesses {:>2}  residual {:.3e}  round trip {:.3e}",
            s.label,
            s.chart,
            s.witnesses.len(),
            s.max_on_manifold_residual,
            s.max_round_trip_residual
        )?;
    }
    writeln!(out, "manifest: {}", path.display())?;
    let mut expected = b.expected_strata.clone();
    expected.sort();
    if found != expected {
        let want: Vec<String> = expected.iter().map(|j| j.to_string()).collect();
        writeln!(out, "expected strata {{{}}}", want.join(", "))?;
        return Ok(Outcome::CheckFailed);
    }
    Ok(Outcome::Ok)
}

fn lift(a: &LiftArgs, out: &mut dyn Write) -> Result<Outcome> {
    let b = a.model.load()?;
    let phi = read_segment(&b.model, &a.input)?;
    let lifted = lift_to_manifold(&b.model, &phi)?;
    let path = output_path(a.output.as_deref(), "lifted.json");
    write_text(&path, &json_pretty(&lifted.phi.to_doc())?)?;
    writeln!(out, "stratum {}", lifted.stratum)?;
    writeln!(out, "residual {:.3e}", lifted.residual)?;
    writeln!(out, "output: {}", path.display())?;
    Ok(if lifted.residual <= LIFT_TOL {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

fn chart_of<'a>(atlas: &'a Atlas, model: &Model, seg: &SegmentC1) -> Result<&'a Chart> {
    match model.membership(seg) {
        Membership::InU(j) => atlas.chart(j),
        Membership::OutsideU => Err(Error::OutsideW {
            w: model.apply_l(seg)?,
        }),
    }
}

fn chart(a: &ChartArgs, out: &mut dyn Write) -> Result<Outcome> {
    let b = a.model.load()?;
    let model = &b.model;
    let seg = read_segment(model, &a.input)?;
    let atlas = seeded_atlas(model, a.seed)?;
    let (result, round_trip, label) = if a.invert {
        // L is unchanged by the chart, so the input already sits in the right stratum
        let chart = chart_of(&atlas, model, &seg)?;
        let inv = chart.invert(&seg)?;
        writeln!(out, "newton iterations {}", inv.solution.iterations)?;
        let back = chart.project(&inv.phi)?;
        (inv.phi, back.node_distance(&seg)?, chart.stratum())
    } else {
        let (chart, image) = atlas.chart_for(&seg)?;
        let back = chart.invert(&image)?;
        (image, back.phi.node_distance(&seg)?, chart.stratum())
    };
    let path = output_path(a.output.as_deref(), "chart.json");
    write_text(&path, &json_pretty(&result.to_doc())?)?;
    writeln!(out, "stratum {label}")?;
    writeln!(out, "round trip {round_trip:.3e}")?;
    writeln!(out, "output: {}", path.display())?;
    Ok(if round_trip <= ROUND_TRIP_TOL {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

fn integrate_cmd(a: &IntegrateArgs, out: &mut dyn Write) -> Result<Outcome> {
    if a.stride == 0 {
        return Err(Error::Config("--stride must be positive".into()));
    }
    let b = a.model.load()?;
    let model = &b.model;
    let phi = match &a.input {
        Some(p) => read_segment(model, p)?,
        None => SegmentC1::constant(model.grid().clone(), &vec![1.0; model.n()]),
    };
    let phi0 = lift_to_manifold(model, &phi)?.phi;
    let traj = integrate(model, &phi0, a.h, a.t_end)?;
    let path = output_path(a.output.as_deref(), &format!("traj-{}.csv", b.id));
    write_atomic(&path, |w| traj.write_csv(w, a.stride))?;
    writeln!(
        out,
        "steps {}  t_end {}  max residual {:.3e}",
        traj.steps().len(),
        traj.t_end(),
        traj.max_residual()
    )?;
    if let Some(t) = traj.truncation() {
        writeln!(out, "stopped at t = {}: {}", t.t, t.reason)?;
    }
    writeln!(out, "output: {}", path.display())?;
    Ok(Outcome::Ok)
}

fn export(a: &ExportArgs, out: &mut dyn Write) -> Result<Outcome> {
    let b = a.model.load()?;
    let model = &b.model;
    let kind = a
        .kind
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    let path = output_path(a.output.as_deref(), &format!("{kind}-{}.json", b.id));
    let csv = path.extension().is_some_and(|e| e == "csv");
    let sample = || -> Result<SegmentC1> {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        sample_in_u(model, &mut rng)
    };
    let segments: Vec<SegmentC1> = match a.kind {
        ExportKind::Sample => vec![sample()?],
        ExportKind::Manifold => vec![lift_to_manifold(model, &sample()?)?.phi],
        ExportKind::Witness => vec![model.witness().clone()],
        ExportKind::Frame => {
            let phi = lift_to_manifold(model, &sample()?)?.phi;
            let atlas = seeded_atlas(model, a.seed)?;
            let chart = chart_of(&atlas, model, &phi)?;
            let frame = match chart {
                Chart::AllDelays(c) => c.frame().matrix().clone(),
                Chart::Positive(c) => (*c.frame().y(&model.apply_l(&phi)?)?).clone(),
            };
            frame.columns().to_vec()
        }
    };
    if csv {
        if segments.len() != 1 {
            return Err(Error::Config("frames export as JSON only".into()));
        }
        write_atomic(&path, |w| segments[0].write_csv(w, SAMPLES_PER_INTERVAL))?;
    } else if segments.len() == 1 {
        write_text(&path, &json_pretty(&segments[0].to_doc())?)?;
    } else {
        let docs: Vec<_> = segments.iter().map(SegmentC1::to_doc).collect();
        write_text(&path, &json_pretty(&docs)?)?;
    }
    writeln!(out, "{kind}: {}", path.display())?;
    Ok(Outcome::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn param_parsing() {
        assert_eq!(
            parse_param("delta_amp=0.25").unwrap(),
            ("delta_amp".into(), 0.25)
        );
        assert!(parse_param("delta_amp").is_err());
        assert!(parse_param("a=x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_status(&Ok(Outcome::Ok)), 0);
        assert_eq!(exit_status(&Ok(Outcome::CheckFailed)), 1);
        assert_eq!(exit_status(&Err(Error::Config("x".into()))), 2);
        assert_eq!(
            exit_status(&Err(Error::NoConvergence {
                iterations: 3,
                residual: 1.0
            })),
            1
        );
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_text(&p, "one").unwrap();
        write_text(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn model_args_need_one_source() {
        assert!(Cli::try_parse_from(["solman", "atlas"]).is_err());
        assert!(Cli::try_parse_from([
            "solman",
            "atlas",
            "--model",
            "ode",
            "--model-file",
            "m.toml"
        ])
        .is_err());
        assert!(Cli::try_parse_from(["solman", "atlas", "--model", "ode"]).is_ok());
    }
}
