//! Synthetic dataset generation: masks plus ground-truth sidecars.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use barkline_core::raster::save_mask;
use barkline_core::synthgen::{generate, GroundTruth, PanelSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Train/validation ratio, written `A:B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub train: u32,
    pub val: u32,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected A:B, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("`{v}`: {e}"));
        let split = Split {
            train: parse(a)?,
            val: parse(b)?,
        };
        if split.train + split.val == 0 {
            return Err("split ratio cannot be 0:0".into());
        }
        Ok(split)
    }
}

impl Split {
    pub fn train_count(&self, total: usize) -> usize {
        let share = self.train as f64 / (self.train + self.val) as f64;
        (total as f64 * share).round() as usize
    }
}

/// Ranges the per-mask specs are drawn from. Lengths are in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub frame: [usize; 2],
    pub width_px: [f64; 2],
    pub angle_deg: [f64; 2],
    pub length_px: [f64; 2],
    /// Uniform offset of the panel centre from the frame centre, per axis.
    pub center_jitter_px: [f64; 2],
    pub bark_amplitude_px: [f64; 2],
    pub bark_waviness: [f64; 2],
    pub outlier_fraction: [f64; 2],
    pub outlier_magnitude_px: [f64; 2],
}

impl Default for SynthConfig {
    /// Panels 30–200 mm wide and 500–600 mm long at 0.42 mm/px.
    fn default() -> Self {
        Self {
            frame: [3072, 2048],
            width_px: [71.5, 476.0],
            angle_deg: [-5.0, 5.0],
            length_px: [1191.0, 1428.0],
            center_jitter_px: [100.0, 100.0],
            bark_amplitude_px: [0.0, 5.0],
            bark_waviness: [1.0, 5.0],
            outlier_fraction: [0.0, 0.05],
            outlier_magnitude_px: [5.0, 30.0],
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.frame[0] < 3 || self.frame[1] < 3 {
            return Err(CliError::Config(format!(
                "frame {:?} must be at least 3x3",
                self.frame
            )));
        }
        let ranges = [
            ("width_px", self.width_px),
            ("angle_deg", self.angle_deg),
            ("length_px", self.length_px),
            ("center_jitter_px", self.center_jitter_px),
            ("bark_amplitude_px", self.bark_amplitude_px),
            ("bark_waviness", self.bark_waviness),
            ("outlier_fraction", self.outlier_fraction),
            ("outlier_magnitude_px", self.outlier_magnitude_px),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || (name != "center_jitter_px" && lo > hi) {
                return Err(CliError::Config(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> PanelSpec {
        let (w, h) = (self.frame[0] as f64, self.frame[1] as f64);
        let [jx, jy] = self.center_jitter_px.map(f64::abs);
        PanelSpec {
            width_px: draw(rng, self.width_px),
            angle_deg: draw(rng, self.angle_deg),
            center: [
                (w - 1.0) / 2.0 + draw(rng, [-jx, jx]),
                (h - 1.0) / 2.0 + draw(rng, [-jy, jy]),
            ],
            length_px: draw(rng, self.length_px),
            bark_amplitude_px: draw(rng, self.bark_amplitude_px),
            bark_waviness: draw(rng, self.bark_waviness),
            outlier_fraction: draw(rng, self.outlier_fraction),
            outlier_magnitude_px: draw(rng, self.outlier_magnitude_px),
            seed: rng.random(),
        }
    }
}

/// Sidecar written next to each mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub frame: [usize; 2],
    pub spec: PanelSpec,
    pub ground_truth: GroundTruth,
}

/// Generates `count` masks under `out`, or under `out/train` and `out/val`
/// when a split is given. Returns the written mask paths in index order.
pub fn run_synth(
    cfg: &SynthConfig,
    count: usize,
    seed: u64,
    split: Option<Split>,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let frame = (cfg.frame[0], cfg.frame[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // generate everything before touching the disk so a bad spec writes nothing
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let spec = cfg.sample(&mut rng);
        let (mask, gt) =
            generate(&spec, frame).map_err(|e| CliError::Config(format!("mask {i}: {e}")))?;
        samples.push((
            mask,
            Sidecar {
                frame: cfg.frame,
                spec,
                ground_truth: gt,
            },
        ));
    }

    let mut dirs = vec![out.to_path_buf(); count];
    if let Some(split) = split {
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut rng);
        let n_train = split.train_count(count);
        for (rank, &i) in order.iter().enumerate() {
            dirs[i] = out.join(if rank < n_train { "train" } else { "val" });
        }
    }

    let mut written = Vec::with_capacity(count);
    for (i, ((mask, sidecar), dir)) in samples.into_iter().zip(dirs).enumerate() {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        let png = dir.join(format!("panel_{i:04}.png"));
        save_mask(&mask, &png)?;
        let json = dir.join(format!("panel_{i:04}.json"));
        let text =
            serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&json, text + "\n").map_err(|e| CliError::io(json.display(), e))?;
        written.push(png);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            frame: [300, 200],
            width_px: [40.0, 80.0],
            length_px: [200.0, 260.0],
            center_jitter_px: [5.0, 5.0],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn split_parsing() {
        assert_eq!("8:2".parse::<Split>().unwrap(), Split { train: 8, val: 2 });
        assert!("8".parse::<Split>().is_err());
        assert!("0:0".parse::<Split>().is_err());
        assert!("a:2".parse::<Split>().is_err());
        assert_eq!(Split { train: 8, val: 2 }.train_count(10), 8);
    }

    #[test]
    fn split_layout() {
        let dir = tempfile::tempdir().unwrap();
        let split = Some(Split { train: 8, val: 2 });
        let files = run_synth(&small(), 10, 5, split, dir.path()).unwrap();
        let in_dir = |name: &str| {
            files
                .iter()
                .filter(|p| p.parent().unwrap().ends_with(name))
                .count()
        };
        assert_eq!((in_dir("train"), in_dir("val")), (8, 2));
        for f in &files {
            assert!(f.with_extension("json").is_file());
        }
    }

    #[test]
    fn deterministic_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let fa = run_synth(&small(), 4, 9, None, a.path()).unwrap();
        let fb = run_synth(&small(), 4, 9, None, b.path()).unwrap();
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
            assert_eq!(
                std::fs::read(x.with_extension("json")).unwrap(),
                std::fs::read(y.with_extension("json")).unwrap()
            );
        }
    }

    #[test]
    fn oversize_names_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            width_px: [190.0, 195.0],
            ..small()
        };
        let err = run_synth(&cfg, 3, 1, None, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("width_px"), "{err}");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
