//! Machine-facing key data from the two fitted boundary lines.
//!
//! The panel main axis is the midline of the upper and lower boundary lines.
//! Cuttable width is the smaller of the two vertical boundary gaps at the
//! ends of the panel's column extent, projected perpendicular to the main
//! axis and scaled to millimetres. The panel is routed to the widest cutting
//! channel that still fits inside that width (with kerf allowance) and the
//! lateral travel that centres it on that channel is reported.
//!
//! Angles follow the pixel frame: `angle_deg = atan(k)`, positive when the
//! axis descends (y grows) with increasing x.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::robustfit::{Line, LineFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyDataError {
    #[error("boundary fit is degenerate")]
    FitDegenerate,
    #[error("lower boundary lies above the upper boundary within the panel extent")]
    BoundariesCrossed,
    #[error("minimum boundary gap is not positive ({0} px)")]
    NonpositiveWidth(f64),
    #[error("invalid x extent [{0}, {1}]")]
    InvalidExtent(f64, f64),
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuttingChannel {
    pub id: u32,
    pub nominal_width_mm: f64,
    /// Machine-frame lateral coordinate of the channel centreline.
    pub lateral_center_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub mm_per_px: f64,
    pub channels: Vec<CuttingChannel>,
    pub kerf_margin_mm: f64,
    /// Image column at which the lateral position of the main axis is read.
    pub reference_x_px: f64,
}

impl Default for CalibrationProfile {
    fn default() -> Self {
        let channel = |id, nominal_width_mm, lateral_center_mm| CuttingChannel {
            id,
            nominal_width_mm,
            lateral_center_mm,
        };
        Self {
            mm_per_px: 0.42,
            channels: vec![
                channel(1, 42.0, 215.0),
                channel(2, 52.0, 330.0),
                channel(3, 62.0, 455.0),
                channel(4, 72.0, 590.0),
            ],
            kerf_margin_mm: 1.0,
            reference_x_px: 1536.0,
        }
    }
}

impl CalibrationProfile {
    pub fn validate(&self) -> Result<(), KeyDataError> {
        let bad = |msg: String| Err(KeyDataError::InvalidCalibration(msg));
        if !(self.mm_per_px > 0.0 && self.mm_per_px.is_finite()) {
            return bad(format!("mm_per_px must be > 0, got {}", self.mm_per_px));
        }
        if !(self.kerf_margin_mm >= 0.0 && self.kerf_margin_mm.is_finite()) {
            return bad(format!(
                "kerf_margin_mm must be >= 0, got {}",
                self.kerf_margin_mm
            ));
        }
        if !self.reference_x_px.is_finite() {
            return bad("reference_x_px must be finite".into());
        }
        if self.channels.is_empty() {
            return bad("at least one cutting channel is required".into());
        }
        let mut ids = HashSet::new();
        for ch in &self.channels {
            if !ids.insert(ch.id) {
                return bad(format!("duplicate channel id {}", ch.id));
            }
            if !(ch.nominal_width_mm > 0.0 && ch.nominal_width_mm.is_finite()) {
                return bad(format!("channel {} nominal width must be > 0", ch.id));
            }
            if !ch.lateral_center_mm.is_finite() {
                return bad(format!("channel {} lateral centre must be finite", ch.id));
            }
        }
        if self
            .channels
            .windows(2)
            .any(|w| w[1].nominal_width_mm <= w[0].nominal_width_mm)
        {
            return bad("channel nominal widths must be strictly increasing".into());
        }
        Ok(())
    }

    /// Frame-dependent check: the reference column must lie inside the image.
    pub fn validate_for_frame(&self, frame_width: usize) -> Result<(), KeyDataError> {
        self.validate()?;
        if !(0.0..=(frame_width as f64 - 1.0)).contains(&self.reference_x_px) {
            return Err(KeyDataError::InvalidCalibration(format!(
                "reference_x_px {} outside a {frame_width}-px frame",
                self.reference_x_px
            )));
        }
        Ok(())
    }

    pub fn channel(&self, id: u32) -> Option<&CuttingChannel> {
        self.channels.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Attitude {
    pub main_axis: Line,
    pub angle_deg: f64,
}

/// Why a panel carries no channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    FitDegenerate,
    BoundariesCrossed,
    NonpositiveWidth,
    /// Valid panel, but narrower than every channel. Not a rejection.
    NoChannelFits,
    NoPanel,
    NoEdges,
    EdgesFiltered,
    ImageTooSmall,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::FitDegenerate => "fit_degenerate",
            ReasonCode::BoundariesCrossed => "boundaries_crossed",
            ReasonCode::NonpositiveWidth => "nonpositive_width",
            ReasonCode::NoChannelFits => "no_channel_fits",
            ReasonCode::NoPanel => "no_panel",
            ReasonCode::NoEdges => "no_edges",
            ReasonCode::EdgesFiltered => "edges_filtered",
            ReasonCode::ImageTooSmall => "image_too_small",
        }
    }
}

impl std::fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Key data for one panel. Rejection is encoded here, never raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelKeyData {
    pub width_mm: f64,
    pub angle_deg: f64,
    pub centerline_offset_mm: f64,
    pub channel_id: Option<u32>,
    /// Signed lateral move onto the channel centreline; positive toward increasing y.
    pub travel_mm: Option<f64>,
    pub rejected: bool,
    pub reason: Option<ReasonCode>,
}

impl PanelKeyData {
    /// A rejection raised before any geometry was available.
    pub fn rejected(reason: ReasonCode) -> Self {
        Self {
            width_mm: 0.0,
            angle_deg: 0.0,
            centerline_offset_mm: 0.0,
            channel_id: None,
            travel_mm: None,
            rejected: true,
            reason: Some(reason),
        }
    }
}

fn check_extent((x_min, x_max): (f64, f64)) -> Result<(), KeyDataError> {
    if x_min < x_max && x_min.is_finite() && x_max.is_finite() {
        Ok(())
    } else {
        Err(KeyDataError::InvalidExtent(x_min, x_max))
    }
}

/// Vertical gap `lower(x) - upper(x)` at both ends of the extent.
fn end_gaps(upper: Line, lower: Line, (x_min, x_max): (f64, f64)) -> [f64; 2] {
    [x_min, x_max].map(|x| lower.eval(x) - upper.eval(x))
}

pub fn compute_attitude(
    upper: &LineFit,
    lower: &LineFit,
    x_extent: (f64, f64),
) -> Result<Attitude, KeyDataError> {
    if upper.degenerate || lower.degenerate {
        return Err(KeyDataError::FitDegenerate);
    }
    check_extent(x_extent)?;
    // the gap is linear in x, so the ends bound it over the whole extent
    if end_gaps(upper.line(), lower.line(), x_extent)
        .iter()
        .any(|&g| g < 0.0)
    {
        return Err(KeyDataError::BoundariesCrossed);
    }
    let main_axis = Line::new(
        (upper.slope + lower.slope) / 2.0,
        (upper.intercept + lower.intercept) / 2.0,
    );
    Ok(Attitude {
        main_axis,
        angle_deg: main_axis.slope.atan().to_degrees(),
    })
}

pub fn cuttable_width(
    upper: &LineFit,
    lower: &LineFit,
    x_extent: (f64, f64),
    attitude: &Attitude,
    cal: &CalibrationProfile,
) -> Result<f64, KeyDataError> {
    check_extent(x_extent)?;
    let [a, b] = end_gaps(upper.line(), lower.line(), x_extent);
    let gap_px = a.min(b);
    if gap_px < 0.0 {
        return Err(KeyDataError::BoundariesCrossed);
    }
    if gap_px == 0.0 || gap_px.is_nan() {
        return Err(KeyDataError::NonpositiveWidth(gap_px));
    }
    Ok(gap_px * attitude.angle_deg.to_radians().cos() * cal.mm_per_px)
}

/// Widest channel with `nominal + kerf <= width`.
pub fn select_channel(width_mm: f64, cal: &CalibrationProfile) -> Option<&CuttingChannel> {
    cal.channels
        .iter()
        .filter(|c| c.nominal_width_mm + cal.kerf_margin_mm <= width_mm)
        .max_by(|a, b| a.nominal_width_mm.total_cmp(&b.nominal_width_mm))
}

pub fn compute_keydata(
    upper: &LineFit,
    lower: &LineFit,
    x_extent: (f64, f64),
    cal: &CalibrationProfile,
) -> PanelKeyData {
    let attitude = match compute_attitude(upper, lower, x_extent) {
        Ok(a) => a,
        Err(e) => return PanelKeyData::rejected(reason_for(&e)),
    };
    let centerline_offset_mm = attitude.main_axis.eval(cal.reference_x_px) * cal.mm_per_px;
    let base = PanelKeyData {
        width_mm: 0.0,
        angle_deg: attitude.angle_deg,
        centerline_offset_mm,
        channel_id: None,
        travel_mm: None,
        rejected: true,
        reason: None,
    };
    let width_mm = match cuttable_width(upper, lower, x_extent, &attitude, cal) {
        Ok(w) => w,
        Err(e) => {
            return PanelKeyData {
                reason: Some(reason_for(&e)),
                ..base
            }
        }
    };
    match select_channel(width_mm, cal) {
        Some(ch) => PanelKeyData {
            width_mm,
            channel_id: Some(ch.id),
            travel_mm: Some(ch.lateral_center_mm - centerline_offset_mm),
            rejected: false,
            ..base
        },
        None => PanelKeyData {
            width_mm,
            rejected: false,
            reason: Some(ReasonCode::NoChannelFits),
            ..base
        },
    }
}

fn reason_for(e: &KeyDataError) -> ReasonCode {
    match e {
        KeyDataError::FitDegenerate => ReasonCode::FitDegenerate,
        KeyDataError::BoundariesCrossed => ReasonCode::BoundariesCrossed,
        KeyDataError::NonpositiveWidth(_)
        | KeyDataError::InvalidExtent(..)
        | KeyDataError::InvalidCalibration(_) => ReasonCode::NonpositiveWidth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fit(slope: f64, intercept: f64) -> LineFit {
        LineFit {
            slope,
            intercept,
            n_points: 2,
            iterations: 1,
            converged: true,
            degenerate: false,
            final_weights: vec![1.0; 2],
            rms_residual: 0.0,
        }
    }

    fn channel_table(kerf: f64) -> CalibrationProfile {
        CalibrationProfile {
            kerf_margin_mm: kerf,
            ..Default::default()
        }
    }

    #[test]
    fn attitude_examples() {
        let a = compute_attitude(&fit(0.0, 100.0), &fit(0.0, 300.0), (0.0, 1000.0)).unwrap();
        assert_eq!(a.main_axis, Line::new(0.0, 200.0));
        assert_eq!(a.angle_deg, 0.0);

        let a = compute_attitude(&fit(0.1, 100.0), &fit(0.1, 300.0), (0.0, 1000.0)).unwrap();
        assert!((a.angle_deg - 5.710_593_137_499_643).abs() < 1e-12);

        let a = compute_attitude(&fit(0.02, 100.0), &fit(0.0, 300.0), (0.0, 1000.0)).unwrap();
        assert!((a.main_axis.slope - 0.01).abs() < 1e-15);
        assert_eq!(a.main_axis.intercept, 200.0);
    }

    #[test]
    fn attitude_rejects_crossing_and_degenerate() {
        // lines meet at x = 1000 and cross beyond it
        let r = compute_attitude(&fit(0.2, 100.0), &fit(0.0, 300.0), (0.0, 1500.0));
        assert_eq!(r, Err(KeyDataError::BoundariesCrossed));
        let mut d = fit(0.0, 100.0);
        d.degenerate = true;
        assert_eq!(
            compute_attitude(&d, &fit(0.0, 300.0), (0.0, 10.0)),
            Err(KeyDataError::FitDegenerate)
        );
    }

    #[test]
    fn width_examples() {
        let cal = CalibrationProfile {
            mm_per_px: 0.42,
            ..Default::default()
        };
        let (u, l) = (fit(0.0, 50.0), fit(0.0, 150.0));
        let att = compute_attitude(&u, &l, (0.0, 3000.0)).unwrap();
        let w = cuttable_width(&u, &l, (0.0, 3000.0), &att, &cal).unwrap();
        assert!((w - 42.0).abs() < 1e-9);

        let unit = CalibrationProfile {
            mm_per_px: 1.0,
            ..Default::default()
        };
        let (u, l) = (fit(0.0, 0.0), fit(0.01, 100.0));
        let att = Attitude {
            main_axis: Line::new(0.0, 50.0),
            angle_deg: 0.0,
        };
        assert!(
            (cuttable_width(&u, &l, (0.0, 1000.0), &att, &unit).unwrap() - 100.0).abs() < 1e-12
        );

        let (u, l) = (fit(0.1, 100.0), fit(0.1, 200.0));
        let att = compute_attitude(&u, &l, (0.0, 500.0)).unwrap();
        let w = cuttable_width(&u, &l, (0.0, 500.0), &att, &unit).unwrap();
        assert!((w - 99.503_719_020_998_92).abs() < 1e-9);
    }

    #[test]
    fn width_errors() {
        let cal = CalibrationProfile::default();
        let att = Attitude {
            main_axis: Line::new(0.0, 0.0),
            angle_deg: 0.0,
        };
        assert!(matches!(
            cuttable_width(&fit(0.0, 10.0), &fit(0.0, 10.0), (0.0, 5.0), &att, &cal),
            Err(KeyDataError::NonpositiveWidth(_))
        ));
        assert_eq!(
            cuttable_width(&fit(0.0, 10.0), &fit(0.0, 20.0), (5.0, 5.0), &att, &cal),
            Err(KeyDataError::InvalidExtent(5.0, 5.0))
        );
    }

    #[test]
    fn channel_selection_examples() {
        let cal = channel_table(0.0);
        assert_eq!(
            select_channel(58.0, &cal).map(|c| c.nominal_width_mm),
            Some(52.0)
        );
        assert_eq!(select_channel(41.9, &cal), None);
        assert_eq!(
            select_channel(72.0, &cal).map(|c| c.nominal_width_mm),
            Some(72.0)
        );
        let cal = channel_table(1.0);
        assert_eq!(
            select_channel(72.0, &cal).map(|c| c.nominal_width_mm),
            Some(62.0)
        );
    }

    #[test]
    fn keydata_travel_composition() {
        let cal = CalibrationProfile {
            mm_per_px: 0.5,
            kerf_margin_mm: 0.0,
            reference_x_px: 100.0,
            channels: vec![CuttingChannel {
                id: 9,
                nominal_width_mm: 40.0,
                lateral_center_mm: 150.0,
            }],
        };
        let kd = compute_keydata(&fit(0.0, 100.0), &fit(0.0, 300.0), (0.0, 1000.0), &cal);
        assert_eq!(kd.centerline_offset_mm, 100.0);
        assert_eq!(kd.channel_id, Some(9));
        assert_eq!(kd.travel_mm, Some(50.0));
        assert_eq!(kd.width_mm, 100.0);
        assert!(!kd.rejected && kd.reason.is_none());
    }

    #[test]
    fn keydata_rejection_paths() {
        let cal = CalibrationProfile::default();
        let mut d = fit(0.0, 100.0);
        d.degenerate = true;
        let kd = compute_keydata(&d, &fit(0.0, 300.0), (0.0, 100.0), &cal);
        assert!(kd.rejected);
        assert_eq!(kd.reason, Some(ReasonCode::FitDegenerate));
        assert_eq!(kd.channel_id, None);

        let kd = compute_keydata(&fit(0.0, 300.0), &fit(0.0, 100.0), (0.0, 100.0), &cal);
        assert_eq!(
            (kd.rejected, kd.reason),
            (true, Some(ReasonCode::BoundariesCrossed))
        );

        let kd = compute_keydata(&fit(0.0, 100.0), &fit(0.0, 100.0), (0.0, 100.0), &cal);
        assert_eq!(
            (kd.rejected, kd.reason),
            (true, Some(ReasonCode::NonpositiveWidth))
        );

        // 90 px * 0.42 = 37.8 mm, narrower than the 42 mm channel
        let kd = compute_keydata(&fit(0.0, 100.0), &fit(0.0, 190.0), (0.0, 100.0), &cal);
        assert!(!kd.rejected);
        assert_eq!(kd.reason, Some(ReasonCode::NoChannelFits));
        assert_eq!((kd.channel_id, kd.travel_mm), (None, None));
        assert!(kd.width_mm > 0.0);
    }

    #[test]
    fn calibration_validation() {
        assert!(CalibrationProfile::default().validate().is_ok());
        let mut c = CalibrationProfile::default();
        c.channels.swap(0, 1);
        assert!(c.validate().is_err());
        let mut c = CalibrationProfile::default();
        c.channels[1].id = c.channels[0].id;
        assert!(c.validate().is_err());
        let mut c = CalibrationProfile::default();
        c.channels.clear();
        assert!(c.validate().is_err());
        let c = CalibrationProfile {
            mm_per_px: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(CalibrationProfile::default()
            .validate_for_frame(3072)
            .is_ok());
        assert!(CalibrationProfile::default()
            .validate_for_frame(1024)
            .is_err());
    }

    #[test]
    fn reason_codes_serialize_snake_case() {
        for r in [
            ReasonCode::FitDegenerate,
            ReasonCode::BoundariesCrossed,
            ReasonCode::NonpositiveWidth,
            ReasonCode::NoChannelFits,
            ReasonCode::EdgesFiltered,
        ] {
            assert_eq!(
                serde_json::to_string(&r).unwrap(),
                format!("\"{}\"", r.as_str())
            );
        }
    }

    proptest! {
        #[test]
        fn selection_is_monotone(a in 0.0f64..120.0, b in 0.0f64..120.0, kerf in 0.0f64..3.0) {
            let cal = channel_table(kerf);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let w = |x| select_channel(x, &cal).map_or(0.0, |c| c.nominal_width_mm);
            prop_assert!(w(lo) <= w(hi));
            if let Some(c) = select_channel(lo, &cal) {
                prop_assert!(c.nominal_width_mm + kerf <= lo);
            }
        }

        #[test]
        fn doubling_scale_doubles_lengths(
            k in -0.08f64..0.08, b in 50.0f64..400.0, gap in 60.0f64..250.0, dk in -0.01f64..0.01,
        ) {
            let (u, l) = (fit(k, b), fit(k + dk, b + gap));
            let extent = (0.0, 1000.0);
            let cal = CalibrationProfile { mm_per_px: 0.37, ..Default::default() };
            let mut doubled = cal.clone();
            doubled.mm_per_px *= 2.0;
            doubled.kerf_margin_mm *= 2.0;
            for ch in &mut doubled.channels {
                ch.nominal_width_mm *= 2.0;
                ch.lateral_center_mm *= 2.0;
            }
            let a = compute_keydata(&u, &l, extent, &cal);
            let d = compute_keydata(&u, &l, extent, &doubled);
            prop_assume!(!a.rejected);
            prop_assert_eq!(d.width_mm, 2.0 * a.width_mm);
            prop_assert_eq!(d.centerline_offset_mm, 2.0 * a.centerline_offset_mm);
            prop_assert_eq!(d.channel_id, a.channel_id);
            prop_assert_eq!(d.travel_mm.map(f64::abs), a.travel_mm.map(|t| 2.0 * t.abs()));
            prop_assert!(a.width_mm > 0.0);
        }
    }
}
