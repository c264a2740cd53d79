//! Synthetic panel masks with known boundary lines, plus the augmentation
//! transforms and their exact effect on the ground truth.
//!
//! Coordinates are pixel centres: pixel `(x, y)` sits at `(x, y)`. A column
//! `x` of the panel covers the rows `y` with `upper(x) <= y < lower(x)`,
//! where both boundaries may carry a smooth bark perturbation and sparse
//! gross outlier columns. The ground truth always records the unperturbed
//! lines.

use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::ClassMask;
use crate::robustfit::{Line, Point};

/// Minimum distance between the panel and the frame edge.
pub const FRAME_MARGIN_PX: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid panel spec: {parameter} {detail}")]
    InvalidSpec {
        parameter: &'static str,
        detail: String,
    },
    #[error("panel exceeds the {width}x{height} frame: {parameter} {detail}")]
    ExceedsFrame {
        parameter: &'static str,
        detail: String,
        width: usize,
        height: usize,
    },
    #[error("rotation clips the panel ({before} panel pixels before, {after} after)")]
    RotationClipped { before: usize, after: usize },
}

impl SynthError {
    /// Name of the spec field at fault, when there is one.
    pub fn parameter(&self) -> Option<&'static str> {
        match self {
            SynthError::InvalidSpec { parameter, .. }
            | SynthError::ExceedsFrame { parameter, .. } => Some(parameter),
            SynthError::RotationClipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSpec {
    /// Perpendicular distance between the two boundaries.
    pub width_px: f64,
    pub angle_deg: f64,
    pub center: [f64; 2],
    /// Panel extent along its main axis.
    pub length_px: f64,
    /// Peak bark perturbation of each boundary.
    pub bark_amplitude_px: f64,
    /// Mean number of perturbation cycles across the panel's column extent.
    pub bark_waviness: f64,
    /// Fraction of boundary columns displaced as gross outliers, per boundary.
    pub outlier_fraction: f64,
    pub outlier_magnitude_px: f64,
    pub seed: u64,
}

impl PanelSpec {
    /// Clean horizontal band of the given width centred in a frame.
    pub fn band(width_px: f64, frame: (usize, usize)) -> Self {
        let (w, h) = (frame.0 as f64, frame.1 as f64);
        Self {
            width_px,
            angle_deg: 0.0,
            center: [(w - 1.0) / 2.0, (h - 1.0) / 2.0],
            length_px: w - 2.0 * FRAME_MARGIN_PX - 2.0,
            bark_amplitude_px: 0.0,
            bark_waviness: 3.0,
            outlier_fraction: 0.0,
            outlier_magnitude_px: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid =
            |parameter, detail: String| Err(SynthError::InvalidSpec { parameter, detail });
        let finite = [
            ("width_px", self.width_px),
            ("angle_deg", self.angle_deg),
            ("center", self.center[0]),
            ("center", self.center[1]),
            ("length_px", self.length_px),
            ("bark_amplitude_px", self.bark_amplitude_px),
            ("bark_waviness", self.bark_waviness),
            ("outlier_fraction", self.outlier_fraction),
            ("outlier_magnitude_px", self.outlier_magnitude_px),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return invalid(name, "must be finite".into());
            }
        }
        if self.width_px <= 0.0 {
            return invalid("width_px", format!("must be > 0, got {}", self.width_px));
        }
        if self.length_px <= 0.0 {
            return invalid("length_px", format!("must be > 0, got {}", self.length_px));
        }
        if self.angle_deg.abs() >= 45.0 {
            return invalid(
                "angle_deg",
                format!("must satisfy |angle| < 45, got {}", self.angle_deg),
            );
        }
        if !(0.0..=0.5).contains(&self.outlier_fraction) {
            return invalid(
                "outlier_fraction",
                format!("must lie in [0, 0.5], got {}", self.outlier_fraction),
            );
        }
        if self.bark_amplitude_px < 0.0 {
            return invalid("bark_amplitude_px", "must be >= 0".into());
        }
        if self.bark_waviness < 0.0 {
            return invalid("bark_waviness", "must be >= 0".into());
        }
        if self.outlier_magnitude_px < 0.0 {
            return invalid("outlier_magnitude_px", "must be >= 0".into());
        }
        Ok(())
    }

    fn axis(&self) -> Line {
        let k = self.angle_deg.to_radians().tan();
        Line::new(k, self.center[1] - k * self.center[0])
    }

    /// Vertical offset of each boundary from the main axis.
    fn vertical_half_width(&self) -> f64 {
        self.width_px / 2.0 / self.angle_deg.to_radians().cos()
    }

    /// First and last panel column.
    fn column_range(&self) -> (i64, i64) {
        let half = self.length_px / 2.0 * self.angle_deg.to_radians().cos();
        (
            (self.center[0] - half).ceil() as i64,
            (self.center[0] + half).floor() as i64,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub upper_line: Line,
    pub lower_line: Line,
    pub true_width_px: f64,
    pub true_angle_deg: f64,
}

impl GroundTruth {
    pub fn from_spec(spec: &PanelSpec) -> Self {
        let axis = spec.axis();
        let h = spec.vertical_half_width();
        Self {
            upper_line: Line::new(axis.slope, axis.intercept - h),
            lower_line: Line::new(axis.slope, axis.intercept + h),
            true_width_px: spec.width_px,
            true_angle_deg: spec.angle_deg,
        }
    }
}

/// Smooth bark waviness: a seeded sum of 2–4 sinusoids whose amplitudes add
/// up to the requested peak.
struct BarkProfile {
    terms: Vec<(f64, f64, f64)>,
}

impl BarkProfile {
    fn new(rng: &mut ChaCha8Rng, amplitude: f64, cycles: f64, span: f64) -> Self {
        let count = rng.random_range(2..=4);
        let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.5..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let terms = raw
            .into_iter()
            .map(|a| {
                let freq = cycles * rng.random_range(0.5..1.5) / span.max(1.0);
                let phase = rng.random_range(0.0..TAU);
                (amplitude * a / total, freq, phase)
            })
            .collect();
        Self { terms }
    }

    fn at(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, f, p)| a * (TAU * f * t + p).sin())
            .sum()
    }
}

/// Renders the panel described by `spec` into a `frame = (width, height)` mask.
pub fn generate(
    spec: &PanelSpec,
    frame: (usize, usize),
) -> Result<(ClassMask, GroundTruth), SynthError> {
    spec.validate()?;
    let (fw, fh) = frame;
    let gt = GroundTruth::from_spec(spec);
    let (x0, x1) = spec.column_range();
    let exceeds = |parameter, detail: String| SynthError::ExceedsFrame {
        parameter,
        detail,
        width: fw,
        height: fh,
    };
    if x1 < x0 {
        return Err(exceeds("length_px", "covers no pixel column".into()));
    }
    let margin = FRAME_MARGIN_PX;
    if (x0 as f64) < margin || (x1 as f64) > fw as f64 - 1.0 - margin {
        return Err(exceeds(
            "length_px",
            format!("spans columns {x0}..={x1}, needs a {margin} px margin"),
        ));
    }
    let spike = if spec.outlier_fraction > 0.0 {
        spec.outlier_magnitude_px
    } else {
        0.0
    };
    let excursion = spec.bark_amplitude_px + spike;
    let top = [x0, x1]
        .map(|x| gt.upper_line.eval(x as f64))
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let bottom = [x0, x1]
        .map(|x| gt.lower_line.eval(x as f64))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let (lowest, highest) = (top - excursion, bottom + excursion);
    let last_row = fh as f64 - 1.0 - margin;
    if highest - lowest > last_row - margin {
        return Err(exceeds(
            "width_px",
            format!(
                "needs {:.1} rows, the frame allows {:.1}",
                highest - lowest,
                last_row - margin
            ),
        ));
    }
    if lowest < margin || highest > last_row {
        return Err(exceeds(
            "center",
            format!("panel spans rows {lowest:.1}..{highest:.1}"),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let span = (x1 - x0 + 1) as f64;
    let columns = (x1 - x0 + 1) as usize;
    let mut boundary_offsets = || {
        let bark = (spec.bark_amplitude_px > 0.0)
            .then(|| BarkProfile::new(&mut rng, spec.bark_amplitude_px, spec.bark_waviness, span));
        let mut offsets: Vec<f64> = (0..columns)
            .map(|i| bark.as_ref().map_or(0.0, |b| b.at(i as f64)))
            .collect();
        let n_out = (spec.outlier_fraction * columns as f64).round() as usize;
        for i in sample(&mut rng, columns, n_out.min(columns)).into_iter() {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            offsets[i] += sign * spec.outlier_magnitude_px;
        }
        offsets
    };
    let upper_offsets = boundary_offsets();
    let lower_offsets = boundary_offsets();

    let mut mask = ClassMask::filled(fw, fh, 0);
    for (i, x) in (x0..=x1).enumerate() {
        let xf = x as f64;
        let top = gt.upper_line.eval(xf) + upper_offsets[i];
        let bottom = gt.lower_line.eval(xf) + lower_offsets[i];
        let first = top.ceil().max(0.0) as usize;
        let end = (bottom.ceil().max(0.0) as usize).min(fh);
        for y in first..end {
            mask.set(x as usize, y, true);
        }
    }
    Ok((mask, gt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augment {
    /// Counter-rotation of the pixel grid about the frame centre by this many
    /// degrees: line angles `atan(k)` grow by the same amount.
    Rotate(f64),
    FlipHorizontal,
    MirrorVertical,
}

/// Applies an augmentation. Rotation uses nearest-neighbour sampling so the
/// result stays binary.
pub fn augment(mask: &ClassMask, op: Augment) -> Result<ClassMask, SynthError> {
    let (w, h) = (mask.width(), mask.height());
    match op {
        Augment::FlipHorizontal => Ok(ClassMask::from_fn(w, h, |x, y| mask.is_panel(w - 1 - x, y))),
        Augment::MirrorVertical => Ok(ClassMask::from_fn(w, h, |x, y| mask.is_panel(x, h - 1 - y))),
        Augment::Rotate(deg) => {
            let (s, c) = deg.to_radians().sin_cos();
            let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
            let rotated = ClassMask::from_fn(w, h, |x, y| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let sx = (cx + c * dx + s * dy).round();
                let sy = (cy - s * dx + c * dy).round();
                sx >= 0.0
                    && sy >= 0.0
                    && (sx as usize) < w
                    && (sy as usize) < h
                    && mask.is_panel(sx as usize, sy as usize)
            });
            let (before, after) = (mask.panel_count(), rotated.panel_count());
            if (before as f64 - after as f64).abs() > 0.01 * before as f64 {
                return Err(SynthError::RotationClipped { before, after });
            }
            Ok(rotated)
        }
    }
}

fn rotate_line(line: Line, deg: f64, (cx, cy): (f64, f64)) -> Line {
    let (s, c) = deg.to_radians().sin_cos();
    let (px, py) = (cx, line.eval(cx));
    let (dx, dy) = (px - cx, py - cy);
    let (qx, qy) = (cx + c * dx - s * dy, cy + s * dx + c * dy);
    let slope = (line.slope.atan() + deg.to_radians()).tan();
    Line::new(slope, qy - slope * qx)
}

/// The ground truth of `augment(mask, op)` given the ground truth of `mask`.
pub fn transform_ground_truth(gt: &GroundTruth, op: Augment, frame: (usize, usize)) -> GroundTruth {
    let (w, h) = (frame.0 as f64, frame.1 as f64);
    match op {
        Augment::FlipHorizontal => {
            let flip = |l: Line| Line::new(-l.slope, l.intercept + l.slope * (w - 1.0));
            GroundTruth {
                upper_line: flip(gt.upper_line),
                lower_line: flip(gt.lower_line),
                true_width_px: gt.true_width_px,
                true_angle_deg: -gt.true_angle_deg,
            }
        }
        Augment::MirrorVertical => {
            let mirror = |l: Line| Line::new(-l.slope, h - 1.0 - l.intercept);
            GroundTruth {
                upper_line: mirror(gt.lower_line),
                lower_line: mirror(gt.upper_line),
                true_width_px: gt.true_width_px,
                true_angle_deg: -gt.true_angle_deg,
            }
        }
        Augment::Rotate(deg) => {
            let centre = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
            GroundTruth {
                upper_line: rotate_line(gt.upper_line, deg, centre),
                lower_line: rotate_line(gt.lower_line, deg, centre),
                true_width_px: gt.true_width_px,
                true_angle_deg: gt.true_angle_deg + deg,
            }
        }
    }
}

/// Point samples of a known line with a block of gross outliers, for
/// exercising the fitter directly.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSampleSpec {
    pub line: Line,
    pub count: usize,
    pub x_span: f64,
    pub outlier_fraction: f64,
    /// Outlier displacements are drawn uniformly from this range.
    pub displacement_px: (f64, f64),
    /// Push every outlier the same way (+y) instead of a random side.
    pub one_sided: bool,
    pub seed: u64,
}

/// Returns the samples and a per-point outlier flag. Inliers lie exactly on the line.
pub fn line_samples(spec: &LineSampleSpec) -> (Vec<Point>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.count;
    let step = if n > 1 {
        spec.x_span / (n - 1) as f64
    } else {
        0.0
    };
    let mut points: Vec<Point> = (0..n)
        .map(|i| {
            let x = i as f64 * step;
            Point::new(x, spec.line.eval(x))
        })
        .collect();
    let mut flags = vec![false; n];
    let n_out = (spec.outlier_fraction * n as f64).round() as usize;
    let (lo, hi) = spec.displacement_px;
    for i in sample(&mut rng, n, n_out.min(n)).into_iter() {
        let magnitude = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let sign = if spec.one_sided || rng.random_bool(0.5) {
            1.0
        } else {
            -1.0
        };
        points[i].y += sign * magnitude;
        flags[i] = true;
    }
    (points, flags)
}
