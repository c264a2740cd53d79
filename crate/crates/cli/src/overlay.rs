//! Diagnostic rendering of a mask with its detected edges and fitted lines.

use barkline_core::edge::Boundary;
use barkline_core::pipeline::PanelAnalysis;
use barkline_core::raster::{ClassMask, GrayImage};
use barkline_core::robustfit::Line;

pub const LEVEL_BACKGROUND: u8 = 0;
pub const LEVEL_PANEL: u8 = 80;
pub const LEVEL_EDGE_POINT: u8 = 150;
pub const LEVEL_MAIN_AXIS: u8 = 200;
pub const LEVEL_FIT_LINE: u8 = 255;

fn draw_line(img: &mut GrayImage, line: Line, level: u8) {
    let h = img.height() as f64;
    for x in 0..img.width() {
        let y = line.eval(x as f64).round();
        if (0.0..h).contains(&y) {
            img.set(x, y as usize, level);
        }
    }
}

/// Lines are drawn only for panels that were not rejected; edge points are
/// drawn whenever detection got that far.
pub fn render_overlay(mask: &ClassMask, analysis: &PanelAnalysis) -> GrayImage {
    let mut img = GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        if mask.is_panel(x, y) {
            LEVEL_PANEL
        } else {
            LEVEL_BACKGROUND
        }
    });
    if let Some(edges) = &analysis.edges {
        for b in [Boundary::Upper, Boundary::Lower] {
            for p in edges.points(b) {
                img.set(p.x as usize, p.y as usize, LEVEL_EDGE_POINT);
            }
        }
    }
    if analysis.keydata.rejected {
        return img;
    }
    if let (Some(u), Some(l)) = (&analysis.upper_fit, &analysis.lower_fit) {
        let axis = Line::new((u.slope + l.slope) / 2.0, (u.intercept + l.intercept) / 2.0);
        draw_line(&mut img, axis, LEVEL_MAIN_AXIS);
        draw_line(&mut img, u.line(), LEVEL_FIT_LINE);
        draw_line(&mut img, l.line(), LEVEL_FIT_LINE);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use barkline_core::pipeline::{analyze, PipelineParams};

    fn rows_with(img: &GrayImage, x: usize, level: u8) -> Vec<usize> {
        (0..img.height())
            .filter(|&y| img.get(x, y) == level)
            .collect()
    }

    #[test]
    fn band_lines_on_truth_rows() {
        let mask = ClassMask::from_fn(200, 200, |_, y| (50..150).contains(&y));
        let analysis = analyze(&mask, &PipelineParams::default());
        let img = render_overlay(&mask, &analysis);
        for x in [0, 57, 199] {
            let fit = rows_with(&img, x, LEVEL_FIT_LINE);
            assert_eq!(fit.len(), 2);
            assert!(
                fit[0].abs_diff(50) <= 1 && fit[1].abs_diff(150) <= 1,
                "{fit:?}"
            );
            assert_eq!(rows_with(&img, x, LEVEL_MAIN_AXIS), vec![100]);
        }
        // pure observer
        let again = analyze(&mask, &PipelineParams::default());
        assert_eq!(again.keydata, analysis.keydata);
        assert_eq!(
            (again.upper_fit, again.lower_fit),
            (analysis.upper_fit.clone(), analysis.lower_fit.clone())
        );
    }

    #[test]
    fn rejected_panel_has_no_lines() {
        let mask = ClassMask::from_fn(200, 100, |x, y| if x < 100 { y < 30 } else { y >= 70 });
        let analysis = analyze(&mask, &PipelineParams::default());
        assert!(analysis.keydata.rejected);
        let img = render_overlay(&mask, &analysis);
        assert!(img
            .as_slice()
            .iter()
            .all(|&v| v != LEVEL_FIT_LINE && v != LEVEL_MAIN_AXIS));
        assert!(img.as_slice().contains(&LEVEL_EDGE_POINT));
    }
}
