//! Mask-to-key-data pipeline: edge detection, robust line fits, key data.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::edge::{detect_edges, Boundary, EdgeDetectParams, EdgeError, EdgePointSet};
use crate::keydata::{compute_keydata, CalibrationProfile, PanelKeyData, ReasonCode};
use crate::raster::ClassMask;
use crate::robustfit::{fit_line, LineFit, TukeyParams};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineParams {
    pub edge: EdgeDetectParams,
    pub tukey: TukeyParams,
    pub calibration: CalibrationProfile,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub edges: Duration,
    pub fit: Duration,
    pub keydata: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.edges + self.fit + self.keydata
    }
}

/// Everything computed for one mask. Fields after `keydata` are present as
/// far as the pipeline got before a rejection.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelAnalysis {
    pub keydata: PanelKeyData,
    pub edges: Option<EdgePointSet>,
    pub upper_fit: Option<LineFit>,
    pub lower_fit: Option<LineFit>,
    /// Column range covered by both boundaries.
    pub x_extent: Option<(f64, f64)>,
    pub timings: StageTimings,
}

impl PanelAnalysis {
    fn rejected(reason: ReasonCode, timings: StageTimings) -> Self {
        Self {
            keydata: PanelKeyData::rejected(reason),
            edges: None,
            upper_fit: None,
            lower_fit: None,
            x_extent: None,
            timings,
        }
    }
}

pub fn edge_reason(e: &EdgeError) -> ReasonCode {
    match e {
        EdgeError::ImageTooSmall { .. } => ReasonCode::ImageTooSmall,
        EdgeError::NoPanelPixels => ReasonCode::NoPanel,
        EdgeError::AllSegmentsFiltered(_) => ReasonCode::EdgesFiltered,
        EdgeError::NoEdgeResponses
        | EdgeError::DimensionMismatch(..)
        | EdgeError::InvalidParams(_) => ReasonCode::NoEdges,
    }
}

/// Runs the full pipeline on one mask. Never fails: problems come back as a
/// rejected [`PanelKeyData`].
pub fn analyze(mask: &ClassMask, params: &PipelineParams) -> PanelAnalysis {
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let edges = detect_edges(mask, &params.edge);
    timings.edges = t.elapsed();
    let edges = match edges {
        Ok(e) => e,
        Err(e) => return PanelAnalysis::rejected(edge_reason(&e), timings),
    };

    let t = Instant::now();
    let upper = fit_line(&edges.fit_points(Boundary::Upper), &params.tukey);
    let lower = fit_line(&edges.fit_points(Boundary::Lower), &params.tukey);
    timings.fit = t.elapsed();
    let (upper, lower) = match (upper, lower) {
        (Ok(u), Ok(l)) => (u, l),
        _ => {
            let mut out = PanelAnalysis::rejected(ReasonCode::FitDegenerate, timings);
            out.edges = Some(edges);
            return out;
        }
    };

    let t = Instant::now();
    let x_extent = match (
        edges.x_range(Boundary::Upper),
        edges.x_range(Boundary::Lower),
    ) {
        (Some((ua, ub)), Some((la, lb))) => Some((ua.max(la) as f64, ub.min(lb) as f64)),
        _ => None,
    };
    // A missing or inverted overlap is reported by compute_keydata.
    let keydata = compute_keydata(
        &upper,
        &lower,
        x_extent.unwrap_or((0.0, 0.0)),
        &params.calibration,
    );
    timings.keydata = t.elapsed();

    PanelAnalysis {
        keydata,
        edges: Some(edges),
        upper_fit: Some(upper),
        lower_fit: Some(lower),
        x_extent,
        timings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(w: usize, h: usize, top: usize, bottom: usize) -> ClassMask {
        ClassMask::from_fn(w, h, |_, y| (top..bottom).contains(&y))
    }

    #[test]
    fn horizontal_band_key_data() {
        let params = PipelineParams {
            calibration: CalibrationProfile {
                reference_x_px: 100.0,
                ..CalibrationProfile::default()
            },
            ..PipelineParams::default()
        };
        // 150 panel rows at 0.42 mm/px = 63 mm, so channel 3 (62 + 1 kerf)
        let out = analyze(&band(200, 300, 50, 200), &params);
        let kd = &out.keydata;
        assert!(!kd.rejected, "{kd:?}");
        assert!((kd.width_mm - 63.0).abs() < 1e-9);
        assert_eq!(kd.angle_deg, 0.0);
        assert_eq!(kd.channel_id, Some(3));
        let axis_row = 124.5;
        assert!((kd.centerline_offset_mm - axis_row * 0.42).abs() < 1e-9);
        assert!((kd.travel_mm.unwrap() - (455.0 - axis_row * 0.42)).abs() < 1e-9);
        assert_eq!(out.x_extent, Some((0.0, 199.0)));
    }

    #[test]
    fn rejections_carry_reasons() {
        let params = PipelineParams::default();
        let empty = ClassMask::filled(50, 50, 0);
        assert_eq!(
            analyze(&empty, &params).keydata.reason,
            Some(ReasonCode::NoPanel)
        );
        let full = ClassMask::filled(50, 50, 1);
        assert_eq!(
            analyze(&full, &params).keydata.reason,
            Some(ReasonCode::NoEdges)
        );
        let tiny = ClassMask::filled(2, 2, 1);
        assert_eq!(
            analyze(&tiny, &params).keydata.reason,
            Some(ReasonCode::ImageTooSmall)
        );
        // boundaries only 10 columns long
        let short = ClassMask::from_fn(100, 50, |x, y| x < 10 && (10..20).contains(&y));
        assert_eq!(
            analyze(&short, &params).keydata.reason,
            Some(ReasonCode::EdgesFiltered)
        );
    }

    #[test]
    fn crossed_boundaries_rejected() {
        // touches the top frame on the left and the bottom frame on the right,
        // so only the lower edge is seen on the left and only the upper on the right
        let mask = ClassMask::from_fn(200, 100, |x, y| if x < 100 { y < 30 } else { y >= 70 });
        let out = analyze(&mask, &PipelineParams::default());
        assert!(out.keydata.rejected);
        assert!(out.keydata.reason.is_some());
    }
}
