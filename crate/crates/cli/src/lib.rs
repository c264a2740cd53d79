//! Command-line front end for the barkline pipeline.
//!
//! Exit codes: 0 on success (rejected panels included), 2 for configuration
//! or usage errors, 3 for I/O errors and partially processed inputs.

pub mod batch;
pub mod bench;
pub mod config;
pub mod error;
pub mod overlay;
pub mod synth;

use std::io::Write;
use std::path::{Path, PathBuf};

use barkline_core::raster::save_gray;
use barkline_core::segeval::{evaluate_directory, EvalError};
use clap::{Parser, Subcommand};

pub use config::PipelineConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "barkline",
    version,
    about = "Wood-panel key data from segmentation masks"
)]
pub struct Cli {
    /// Configuration file (falls back to $BARKLINE_CONFIG, then built-in defaults).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the key data of one mask as JSON.
    Keydata {
        mask: PathBuf,
        /// Also write the detected edge points as CSV.
        #[arg(long, value_name = "CSV")]
        dump_edges: Option<PathBuf>,
    },
    /// Process every mask matching a glob; prints JSON lines and a summary line.
    Batch {
        /// Glob pattern; defaults to `io.input` from the config.
        pattern: Option<String>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Directory for overlay images when `io.overlay` is set.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Score predicted masks against ground truth by file name.
    SegmentEval {
        truth_dir: PathBuf,
        pred_dir: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Render a mask with its edge points and fitted lines.
    Overlay { mask: PathBuf, out_png: PathBuf },
    /// Time the pipeline over a set of masks.
    Bench {
        /// Glob pattern; defaults to `io.input` from the config.
        pattern: Option<String>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        repetitions: u32,
    },
    /// Generate synthetic masks with ground-truth sidecars.
    Synth {
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Output directory; defaults to `io.output_dir` from the config.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Partition into train/ and val/, e.g. `8:2`.
        #[arg(long, value_name = "A:B")]
        split: Option<synth::Split>,
        /// TOML file with the parameter ranges to sample from.
        #[arg(long, value_name = "PATH")]
        spec: Option<PathBuf>,
    },
}

fn json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value).map_err(|e| CliError::Io(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

fn pattern_or_config(pattern: Option<String>, cfg: &PipelineConfig) -> Result<String, CliError> {
    pattern
        .or_else(|| cfg.io.input.clone())
        .ok_or_else(|| CliError::Usage("no input pattern given and `io.input` is not set".into()))
}

/// Runs a parsed command line, writing normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = PipelineConfig::resolve(cli.config.as_deref())?;
    let params = cfg.pipeline_params()?;
    match cli.command {
        Command::Keydata { mask, dump_edges } => {
            let analysis = batch::keydata_for_file(&mask, &params, dump_edges.as_deref())?;
            json_line(out, &analysis.keydata)
        }
        Command::Batch {
            pattern,
            jobs,
            out: dir,
        } => {
            let files = batch::expand_glob(&pattern_or_config(pattern, &cfg)?)?;
            let dir = dir.or_else(|| cfg.io.output_dir.clone());
            let overlay_dir = match (cfg.io.overlay, dir.as_deref()) {
                (true, Some(d)) => Some(d),
                (true, None) => {
                    return Err(CliError::Usage(
                        "io.overlay needs --out or io.output_dir".into(),
                    ))
                }
                (false, _) => None,
            };
            let records = batch::run_batch(&files, &params, jobs, overlay_dir)?;
            batch::write_json_lines(&records, out)?;
            Ok(())
        }
        Command::SegmentEval {
            truth_dir,
            pred_dir,
            json,
        } => segment_eval(&truth_dir, &pred_dir, json, out),
        Command::Overlay { mask, out_png } => {
            let m = batch::load_mask_at(&mask)?;
            let analysis = barkline_core::pipeline::analyze(&m, &params);
            save_gray(&overlay::render_overlay(&m, &analysis), &out_png)?;
            Ok(())
        }
        Command::Bench {
            pattern,
            repetitions,
        } => {
            let files = batch::expand_glob(&pattern_or_config(pattern, &cfg)?)?;
            let mut masks = Vec::with_capacity(files.len());
            let mut failures = Vec::new();
            for f in &files {
                match batch::load_mask_at(f) {
                    Ok(m) => masks.push(m),
                    Err(e) => failures.push(e.to_string()),
                }
            }
            if masks.is_empty() {
                return Err(CliError::Io(format!(
                    "none of the {} matching files could be loaded",
                    files.len()
                )));
            }
            let mut report = bench::bench_masks(&masks, &params, repetitions as usize);
            report.load_failures = failures;
            json_line(out, &report)
        }
        Command::Synth {
            count,
            out: dir,
            seed,
            split,
            spec,
        } => {
            let synth_cfg = match spec {
                Some(p) => synth::SynthConfig::load(&p)?,
                None => synth::SynthConfig::default(),
            };
            let dir = dir.or_else(|| cfg.io.output_dir.clone()).ok_or_else(|| {
                CliError::Usage("no --out given and `io.output_dir` is not set".into())
            })?;
            let files = synth::run_synth(&synth_cfg, count, seed, split, &dir)?;
            for f in files {
                writeln!(out, "{}", f.display())?;
            }
            Ok(())
        }
    }
}

fn segment_eval(
    truth: &Path,
    pred: &Path,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    // every failure here comes from reading or pairing the input files
    let report =
        evaluate_directory(truth, pred).map_err(|e: EvalError| CliError::Io(e.to_string()))?;
    if json {
        json_line(out, &report)?;
    } else {
        write!(out, "{}", report.to_table())?;
    }
    if report.is_partial() {
        let list: Vec<String> = report
            .failures
            .iter()
            .map(|f| format!("{}: {}", f.file, f.error))
            .collect();
        return Err(CliError::Partial(format!(
            "{} file(s) not evaluated:\n  {}",
            list.len(),
            list.join("\n  ")
        )));
    }
    Ok(())
}
