//! `volreg`: register, evaluate and inspect 3D volumes from the command line.
//!
//! Exit codes: 0 on success, 2 on bad input (including usage errors), 3 when
//! the optimization aborts on a non-finite loss.

mod phantom_spec;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use volreg::io::config::format_config;
use volreg::io::volume::{read_field, read_labels, read_scalar};
use volreg::io::{atomic_write, read_config, read_keypoints, read_volume, write_keypoints, write_volume, Volume};
use volreg::metrics::{folding_stats, MetricsReport};
use volreg::phantom::gen_phantom_pair;
use volreg::warp::{warp_image, warp_labels};
use volreg::{register_multilevel, RegistrationConfig, RegistrationInputs};

use crate::phantom_spec::parse_phantom_spec;
use crate::report::{add_folding, add_metrics, loss_json, Report};

const EXIT_INPUT: u8 = 2;
const EXIT_NON_FINITE: u8 = 3;

#[derive(Parser)]
#[command(name = "volreg", version, about = "Deformable 3D image registration")]
struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a moving image onto a fixed image.
    Register(RegisterArgs),
    /// Evaluate a displacement field against masks and landmarks.
    Evaluate(EvaluateArgs),
    /// Jacobian determinant volume and folding statistics of a field.
    Jacobian(JacobianArgs),
    /// Write a synthetic image pair with known deformation.
    Phantom(PhantomArgs),
    /// Apply a displacement field to an image or label volume.
    Warp(WarpArgs),
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    fixed: PathBuf,
    #[arg(long)]
    moving: PathBuf,
    #[arg(long, requires = "moving_mask")]
    fixed_mask: Option<PathBuf>,
    #[arg(long, requires = "fixed_mask")]
    moving_mask: Option<PathBuf>,
    /// Keypoint pairs, one `fx fy fz mx my mz` line per pair.
    #[arg(long)]
    keypoints: Option<PathBuf>,
    /// Config text; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "field.mha")]
    out_field: PathBuf,
    #[arg(long)]
    out_warped: Option<PathBuf>,
    /// Run manifest; printed to standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep wall-clock timings out of the manifest.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long, requires = "moving_mask")]
    fixed_mask: Option<PathBuf>,
    #[arg(long, requires = "fixed_mask")]
    moving_mask: Option<PathBuf>,
    /// Landmark pairs in the keypoint text format.
    #[arg(long)]
    keypoints: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct JacobianArgs {
    #[arg(long)]
    field: PathBuf,
    /// Restrict the statistics to the foreground of this label volume.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Determinant volume output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    /// Phantom description (`key = value` lines); defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct WarpArgs {
    #[arg(long)]
    field: PathBuf,
    /// Scalar image (trilinear) or label volume (one-hot, then argmax).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn emit(report: &Report, path: Option<&Path>) -> Result<()> {
    let text = report.render();
    match path {
        Some(p) => atomic_write(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn resolve_config(args: &RegisterArgs) -> Result<RegistrationConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => RegistrationConfig::default(),
    };
    if let Some(n) = args.levels {
        cfg = if n <= cfg.level_count() {
            cfg.with_levels(n)?
        } else if args.config.is_none() {
            RegistrationConfig::default_for_levels(n)?
        } else {
            bail!("--levels {n} exceeds the {} levels of the config file", cfg.level_count());
        };
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.deterministic |= args.deterministic;
    Ok(cfg)
}

fn register(args: RegisterArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    let fixed = read_scalar(&args.fixed)?;
    let moving = read_scalar(&args.moving)?;
    let masks = match (&args.fixed_mask, &args.moving_mask) {
        (Some(f), Some(m)) => Some((read_labels(f)?, read_labels(m)?)),
        _ => None,
    };
    let keypoints = args.keypoints.as_deref().map(read_keypoints).transpose()?;
    let inputs = RegistrationInputs {
        fixed: &fixed,
        moving: &moving,
        fixed_mask: masks.as_ref().map(|m| &m.0),
        moving_mask: masks.as_ref().map(|m| &m.1),
        keypoints: keypoints.as_ref(),
    };

    let start = Instant::now();
    let result = register_multilevel(&inputs, &cfg)?;
    let elapsed = start.elapsed();
    write_volume(&Volume::Field(result.field.clone()), &args.out_field, None)?;
    if let Some(p) = &args.out_warped {
        write_volume(&Volume::Scalar(warp_image(&moving, &result.field)), p, None)?;
    }

    let warped_mask = masks.as_ref().map(|(_, m)| warp_labels(m, &result.field)).transpose()?;
    let metrics = MetricsReport::compute(
        &result.field,
        masks.as_ref().zip(warped_mask.as_ref()).map(|((f, _), w)| (f, w)),
        keypoints.as_ref(),
    )?;

    let mut r = Report::new("register");
    let mut inputs_json = serde_json::Map::new();
    for (key, p) in [
        ("fixed", Some(&args.fixed)),
        ("moving", Some(&args.moving)),
        ("fixed_mask", args.fixed_mask.as_ref()),
        ("moving_mask", args.moving_mask.as_ref()),
        ("keypoints", args.keypoints.as_ref()),
        ("config", args.config.as_ref()),
    ] {
        if let Some(p) = p {
            r.line(key, path_str(p));
            inputs_json.insert(key.into(), Value::String(path_str(p)));
        }
    }
    r.set("inputs", Value::Object(inputs_json));
    r.both("out_field", path_str(&args.out_field));
    r.both("seed", cfg.seed);
    r.both("deterministic", cfg.deterministic);
    r.both("levels", cfg.level_count());
    r.set("config", Value::String(format_config(&cfg)));

    let mut history = Vec::new();
    for h in &result.history {
        let first = h.losses.first().map(|l| l.total).unwrap_or(f64::NAN);
        let last = h.losses.last().map(|l| l.total).unwrap_or(f64::NAN);
        r.line(
            &format!("level_{}", h.level + 1),
            format!(
                "dims {}x{}x{} iterations {} loss {} -> {}",
                h.dims[0],
                h.dims[1],
                h.dims[2],
                h.losses.len().saturating_sub(1),
                first,
                last
            ),
        );
        history.push(json!({
            "level": h.level + 1,
            "dims": h.dims,
            "spacing": h.spacing,
            "full_resolution_distance": h.full_resolution_distance,
            "losses": h.losses.iter().map(loss_json).collect::<Vec<_>>(),
        }));
    }
    r.set("history", Value::Array(history));
    let s = &result.summary;
    r.line("initial_loss", s.initial.total);
    r.line("final_loss", s.fin.total);
    r.line("max_displacement_mm", s.max_displacement);
    r.set(
        "summary",
        json!({
            "initial": loss_json(&s.initial),
            "final": loss_json(&s.fin),
            "max_displacement": s.max_displacement,
        }),
    );
    add_metrics(&mut r, &metrics);
    if !cfg.deterministic {
        r.line("runtime_s", elapsed.as_secs_f64());
        r.set(
            "timings",
            json!({
                "total_s": elapsed.as_secs_f64(),
                "levels_s": result.timings.iter().map(|t| t.as_secs_f64()).collect::<Vec<_>>(),
            }),
        );
    }
    emit(&r, args.report.as_deref())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let field = read_field(&args.field)?;
    let masks = match (&args.fixed_mask, &args.moving_mask) {
        (Some(f), Some(m)) => {
            let (f, m) = (read_labels(f)?, read_labels(m)?);
            let w = warp_labels(&m, &field)?;
            Some((f, w))
        }
        _ => None,
    };
    let pairs = args.keypoints.as_deref().map(read_keypoints).transpose()?;
    let metrics = MetricsReport::compute(&field, masks.as_ref().map(|(f, w)| (f, w)), pairs.as_ref())?;
    let mut r = Report::new("evaluate");
    r.both("field", path_str(&args.field));
    add_metrics(&mut r, &metrics);
    emit(&r, args.report.as_deref())
}

fn jacobian(args: JacobianArgs) -> Result<()> {
    let field = read_field(&args.field)?;
    let det = volreg::losses::jacobian_det_field(&field);
    let mask = args.mask.as_deref().map(read_labels).transpose()?;
    if let Some(m) = &mask {
        m.grid().ensure_matches(field.grid(), "jacobian mask")?;
    }
    let stats = folding_stats(&det, mask.as_ref().map(|m| m.foreground()).as_deref())?;
    if let Some(p) = &args.out {
        write_volume(&Volume::Scalar(det), p, None)?;
    }
    let mut r = Report::new("jacobian");
    r.both("field", path_str(&args.field));
    r.line("counted_voxels", stats.counted);
    add_folding(&mut r, &stats);
    emit(&r, args.report.as_deref())
}

fn phantom(args: PhantomArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| path_str(p))?;
            parse_phantom_spec(&text).with_context(|| path_str(p))?
        }
        None => Default::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let pair = gen_phantom_pair(&spec)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).with_context(|| path_str(dir))?;
    write_volume(&Volume::Scalar(pair.fixed), &dir.join("fixed.mha"), None)?;
    write_volume(&Volume::Scalar(pair.moving), &dir.join("moving.mha"), None)?;
    write_volume(&Volume::Labels(pair.fixed_mask), &dir.join("fixed_mask.mha"), None)?;
    write_volume(&Volume::Labels(pair.moving_mask), &dir.join("moving_mask.mha"), None)?;
    write_volume(&Volume::Field(pair.u_gt), &dir.join("true_field.mha"), None)?;
    write_keypoints(&pair.keypoints, &dir.join("keypoints.txt"))?;
    write_keypoints(&pair.landmarks, &dir.join("landmarks.txt"))?;
    Ok(())
}

fn warp(args: WarpArgs) -> Result<()> {
    let field = read_field(&args.field)?;
    let out = match read_volume(&args.input)? {
        Volume::Scalar(s) => Volume::Scalar(warp_image(&s, &field)),
        Volume::Labels(l) => Volume::Labels(warp_labels(&l, &field)?),
        Volume::Field(_) => bail!("{}: cannot warp a displacement field", path_str(&args.input)),
    };
    Ok(write_volume(&out, &args.out, None)?)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<volreg::Error>() {
        Some(v) if !v.is_input_error() => EXIT_NON_FINITE,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code.clamp(0, 255) as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Register(a) => register(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Jacobian(a) => jacobian(a),
        Command::Phantom(a) => phantom(a),
        Command::Warp(a) => warp(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
