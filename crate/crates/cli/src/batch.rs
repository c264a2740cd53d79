//! `keydata` for one mask and `batch` over a glob.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use barkline_core::keydata::PanelKeyData;
use barkline_core::pipeline::{analyze, PanelAnalysis, PipelineParams};
use barkline_core::raster::{load_mask, save_gray, ClassMask};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::overlay::render_overlay;

pub fn load_mask_at(path: &Path) -> Result<ClassMask, CliError> {
    load_mask(path).map_err(|e| match e {
        barkline_core::raster::RasterError::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::io(path.display(), other),
    })
}

/// Warns when the reference column falls outside the mask; the offset is
/// still computed by extrapolating the main axis.
fn check_reference_column(path: &Path, mask: &ClassMask, params: &PipelineParams) {
    if let Err(e) = params.calibration.validate_for_frame(mask.width()) {
        eprintln!("barkline: warning: {}: {e}", path.display());
    }
}

/// Analyses one mask file; optionally writes its edge points as CSV.
pub fn keydata_for_file(
    path: &Path,
    params: &PipelineParams,
    dump_edges: Option<&Path>,
) -> Result<PanelAnalysis, CliError> {
    let mask = load_mask_at(path)?;
    check_reference_column(path, &mask, params);
    let analysis = analyze(&mask, params);
    if let Some(csv) = dump_edges {
        let file = File::create(csv).map_err(|e| CliError::io(csv.display(), e))?;
        let mut out = BufWriter::new(file);
        let written = match &analysis.edges {
            Some(edges) => edges.write_csv(&mut out),
            None => writeln!(out, "x,y,boundary,segment_id"),
        };
        written
            .and_then(|_| out.flush())
            .map_err(|e| CliError::io(csv.display(), e))?;
    }
    Ok(analysis)
}

/// One line of batch output: the key data, or the reason the file failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRecord {
    pub file: String,
    #[serde(flatten)]
    pub keydata: Option<PanelKeyData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BatchSummary {
    pub processed: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub errors: usize,
    /// Count per reason code, including panels accepted without a channel.
    pub reasons: BTreeMap<String, usize>,
    /// Count per selected channel id.
    pub channels: BTreeMap<String, usize>,
}

impl BatchSummary {
    pub fn from_records(records: &[BatchRecord]) -> Self {
        let mut s = BatchSummary {
            processed: records.len(),
            ..Default::default()
        };
        for r in records {
            let Some(kd) = &r.keydata else {
                s.errors += 1;
                continue;
            };
            if kd.rejected {
                s.rejected += 1;
            } else {
                s.accepted += 1;
            }
            if let Some(reason) = kd.reason {
                *s.reasons.entry(reason.to_string()).or_default() += 1;
            }
            if let Some(id) = kd.channel_id {
                *s.channels.entry(id.to_string()).or_default() += 1;
            }
        }
        s
    }
}

/// Sorted regular files matching `pattern`.
pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    let paths =
        glob::glob(pattern).map_err(|e| CliError::Usage(format!("bad glob `{pattern}`: {e}")))?;
    let mut files: Vec<PathBuf> = paths
        .filter_map(Result::ok)
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no files match `{pattern}`")));
    }
    Ok(files)
}

fn overlay_path(dir: &Path, mask: &Path) -> PathBuf {
    let stem = mask
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dir.join(format!("{stem}.overlay.png"))
}

fn process(path: &Path, params: &PipelineParams, overlay_dir: Option<&Path>) -> BatchRecord {
    let file = path.display().to_string();
    let mask = match load_mask_at(path) {
        Ok(m) => m,
        Err(e) => {
            return BatchRecord {
                file,
                keydata: None,
                error: Some(e.to_string()),
            }
        }
    };
    check_reference_column(path, &mask, params);
    let analysis = analyze(&mask, params);
    let error = overlay_dir.and_then(|dir| {
        let out = overlay_path(dir, path);
        save_gray(&render_overlay(&mask, &analysis), &out)
            .err()
            .map(|e| format!("overlay not written: {e}"))
    });
    BatchRecord {
        file,
        keydata: Some(analysis.keydata),
        error,
    }
}

/// Analyses every file, in parallel over `jobs` threads (0 = all cores).
/// The result is in input order regardless of `jobs`.
pub fn run_batch(
    files: &[PathBuf],
    params: &PipelineParams,
    jobs: usize,
    overlay_dir: Option<&Path>,
) -> Result<Vec<BatchRecord>, CliError> {
    if let Some(dir) = overlay_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| {
        files
            .par_iter()
            .map(|p| process(p, params, overlay_dir))
            .collect()
    }))
}

/// Writes one JSON object per record, then `{"summary": ...}`.
pub fn write_json_lines(
    records: &[BatchRecord],
    out: &mut dyn Write,
) -> Result<BatchSummary, CliError> {
    for r in records {
        serde_json::to_writer(&mut *out, r).map_err(|e| CliError::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    let summary = BatchSummary::from_records(records);
    serde_json::to_writer(&mut *out, &serde_json::json!({ "summary": &summary }))
        .map_err(|e| CliError::Io(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(summary)
}
