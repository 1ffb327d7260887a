//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use seqgc::planemap::{joint_refine, refine_structure, Bundle, RefineReport};
use seqgc::FitConfig;

use crate::error::{HarnessError, HarnessResult};
use crate::eval::{evaluate_homographies, evaluate_planes};
use crate::ingest::{apply_mask, read_mask, read_matches, read_points, write_mask_csv, write_matches_csv, write_points_csv};
use crate::pipeline::{run_homographies, run_planes, HomographyFitOutput, Mode, PlaneFitOutput};
use crate::synth::{synth_bundle, synth_homographies, synth_planes, SceneSpec, Truth};

/// Iteration caps of the two refinement passes.
pub const STRUCTURE_ITERATIONS: usize = 50;
pub const JOINT_ITERATIONS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "seqgc", version, about = "Sequential graph-cut RANSAC for planes and homographies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground truth and a corrupted mask.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit planes to a point cloud seeded by a segmentation mask.
    FitPlanes {
        #[arg(long)]
        points: PathBuf,
        /// `id,label` CSV; without it the labels of the points file are used.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "gc")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Include per-stage wall-clock times in the output.
        #[arg(long)]
        timings: bool,
    },
    /// Fit homographies to labeled correspondences.
    FitHomographies {
        #[arg(long)]
        matches: PathBuf,
        /// Reference image size as `WxH`.
        #[arg(long)]
        image_size: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timings: bool,
    },
    /// Refine structure with fixed cameras, then cameras, points and planes jointly.
    RefineMap {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON report of both passes.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a fit result against ground truth.
    Eval {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a gnuplot-compatible table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct RefineOutput {
    structure: RefineReport,
    joint: RefineReport,
}

fn read(path: &Path) -> HarnessResult<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> HarnessResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> HarnessResult<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_config(path: Option<&Path>) -> HarnessResult<FitConfig> {
    match path {
        None => Ok(FitConfig::default()),
        Some(p) => FitConfig::from_kv_str(&read(p)?).map_err(|e| HarnessError::from(e).context(p.display())),
    }
}

pub fn parse_image_size(s: &str) -> HarnessResult<(f64, f64)> {
    let bad = || HarnessError::Usage(format!("image size must look like 640x480, got `{s}`"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: f64 = w.trim().parse().map_err(|_| bad())?;
    let h: f64 = h.trim().parse().map_err(|_| bad())?;
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(bad());
    }
    Ok((w, h))
}

fn synth(spec: &Path, out: &Path) -> HarnessResult<()> {
    let spec: SceneSpec = serde_json::from_str(&read(spec)?).map_err(|e| HarnessError::Data(format!("{}: {e}", spec.display())))?;
    let truth: Truth = match &spec {
        SceneSpec::Planes(s) => {
            let scene = synth_planes(s)?;
            write(&out.join("points.csv"), write_points_csv(&scene.points, false))?;
            write(&out.join("mask.csv"), write_mask_csv(&scene.points))?;
            scene.truth()
        }
        SceneSpec::Homographies(s) => {
            let scene = synth_homographies(s)?;
            write(&out.join("matches.csv"), write_matches_csv(&scene.matches))?;
            scene.truth()
        }
        SceneSpec::Bundle(s) => {
            let (truth, init) = synth_bundle(s)?;
            write(&out.join("bundle.txt"), init.to_text())?;
            return write(&out.join("truth_bundle.txt"), truth.to_text());
        }
    };
    write(&out.join("truth.json"), json(&truth)?)
}

fn run(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::FitPlanes {
            points,
            mask,
            config,
            mode,
            seed,
            out,
            timings,
        } => {
            let mode = Mode::parse(&mode)?;
            let cfg = load_config(config.as_deref())?;
            let mut pts = read_points(&points)?;
            if let Some(m) = mask {
                apply_mask(&mut pts, &read_mask(&m)?).map_err(|e| e.context(m.display()))?;
            }
            let output = run_planes(&pts, &cfg, mode, seed, timings)?;
            write(&out, json(&output)?)
        }
        Command::FitHomographies {
            matches,
            image_size,
            config,
            seed,
            out,
            timings,
        } => {
            let size = parse_image_size(&image_size)?;
            let cfg = load_config(config.as_deref())?;
            let m = read_matches(&matches)?;
            let output = run_homographies(&m, size, &cfg, seed, timings)?;
            write(&out, json(&output)?)
        }
        Command::RefineMap {
            bundle,
            config,
            out,
            report,
        } => {
            let cfg = load_config(config.as_deref())?;
            let b = Bundle::from_text(&read(&bundle)?).map_err(|e| HarnessError::from(e).context(bundle.display()))?;
            let (b, structure) = refine_structure(&b, &cfg, STRUCTURE_ITERATIONS)?;
            let (b, joint) = joint_refine(&b, &cfg, JOINT_ITERATIONS)?;
            for w in [&structure.warning, &joint.warning].into_iter().flatten() {
                eprintln!("warning: {w}");
            }
            write(&out, b.to_text())?;
            if let Some(r) = report {
                write(&r, json(&RefineOutput { structure, joint })?)?;
            }
            Ok(())
        }
        Command::Eval {
            result,
            truth,
            out,
            table,
        } => {
            let truth_text = read(&truth)?;
            let t: Truth = serde_json::from_str(&truth_text).map_err(|e| HarnessError::Data(format!("{}: {e}", truth.display())))?;
            let text = read(&result)?;
            let parse_err = |e: serde_json::Error| HarnessError::Data(format!("{}: {e}", result.display()));
            let report = match t {
                Truth::Planes { .. } => evaluate_planes(&serde_json::from_str::<PlaneFitOutput>(&text).map_err(parse_err)?, &t)?,
                Truth::Homographies { .. } => {
                    evaluate_homographies(&serde_json::from_str::<HomographyFitOutput>(&text).map_err(parse_err)?, &t)?
                }
            };
            write(&out, json(&report)?)?;
            if let Some(p) = table {
                write(&p, report.to_table())?;
            }
            Ok(())
        }
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_size_parsing() {
        assert_eq!(parse_image_size("640x480").unwrap(), (640.0, 480.0));
        assert_eq!(parse_image_size("640").unwrap_err().exit_code(), 1);
        assert!(parse_image_size("0x480").is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["seqgc", "fit-planes"]), 1);
        assert_eq!(main_with_args(["seqgc", "bogus"]), 1);
    }
}
