//! Straight-line fitting of boundary points with Tukey-weighted IRLS.
//!
//! Lines are `y = slope · x + intercept` in pixel coordinates, residuals are
//! vertical and signed. The fit starts from ordinary least squares and then
//! alternates residuals → Tukey weights → weighted least squares until the
//! parameter change drops below tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Consistency factor turning a median absolute deviation into a normal sigma.
pub const MAD_TO_SIGMA: f64 = 1.4826;

/// Tukey constant for 95% asymptotic efficiency under normal errors.
pub const TUKEY_95_EFFICIENCY: f64 = 4.685;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("points have zero x-variance (vertical line)")]
    ZeroVariance,
    #[error("all weights are zero")]
    ZeroTotalWeight,
    #[error("{points} points but {weights} weights")]
    WeightCountMismatch { points: usize, weights: usize },
    #[error("tukey threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("invalid fit parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub const fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// How the Tukey threshold `c` is chosen at each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleMode {
    Fixed {
        c: f64,
    },
    /// `c = multiplier · 1.4826 · median(|r|)`, recomputed every iteration.
    MadScaled {
        multiplier: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    /// `(1 - (r/c)²)²` inside the threshold.
    StandardBiweight,
    /// `1 - (1 - |r|/c)²` inside the threshold. Gives zero weight to a zero
    /// residual; kept only for comparison experiments.
    ComplementQuadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TukeyParams {
    pub scale: ScaleMode,
    pub variant: WeightVariant,
    pub max_iterations: usize,
    pub tol_slope: f64,
    /// Bound on the change of the line's height at the mean abscissa.
    pub tol_intercept: f64,
    /// Lower bound on a MAD-derived `c`, in pixels. Without it `c` collapses
    /// to zero once more than half the points sit exactly on the line.
    pub min_c: f64,
}

impl Default for TukeyParams {
    fn default() -> Self {
        Self {
            scale: ScaleMode::MadScaled {
                multiplier: TUKEY_95_EFFICIENCY,
            },
            variant: WeightVariant::StandardBiweight,
            max_iterations: 50,
            tol_slope: 1e-6,
            tol_intercept: 1e-3,
            min_c: 0.5,
        }
    }
}

impl TukeyParams {
    pub fn validate(&self) -> Result<(), FitError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self.scale {
            ScaleMode::Fixed { c } if !positive(c) => {
                return Err(FitError::InvalidParams(format!(
                    "fixed c must be > 0, got {c}"
                )))
            }
            ScaleMode::MadScaled { multiplier } if !positive(multiplier) => {
                return Err(FitError::InvalidParams(format!(
                    "MAD multiplier must be > 0, got {multiplier}"
                )))
            }
            _ => {}
        }
        if self.max_iterations < 1 {
            return Err(FitError::InvalidParams(
                "max_iterations must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("tol_slope", self.tol_slope),
            ("tol_intercept", self.tol_intercept),
            ("min_c", self.min_c),
        ] {
            if !positive(v) {
                return Err(FitError::InvalidParams(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Result of [`fit_line`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFit {
    #[serde(rename = "k")]
    pub slope: f64,
    #[serde(rename = "b")]
    pub intercept: f64,
    pub n_points: usize,
    /// Weighted refits performed after the initial least-squares fit.
    pub iterations: usize,
    pub converged: bool,
    /// Set when a refit rejected every point; the parameters are then those
    /// of the previous iterate.
    pub degenerate: bool,
    #[serde(skip)]
    pub final_weights: Vec<f64>,
    /// Weighted RMS of the residuals at the returned line.
    pub rms_residual: f64,
}

impl LineFit {
    pub fn line(&self) -> Line {
        Line::new(self.slope, self.intercept)
    }
}

/// Closed-form least squares through the normal equations.
pub fn ols_fit(points: &[Point]) -> Result<Line, FitError> {
    let n = points.len();
    if n < 2 {
        return Err(FitError::TooFewPoints(n));
    }
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        sx += p.x;
        sy += p.y;
        sxx += p.x * p.x;
        sxy += p.x * p.y;
    }
    let n = n as f64;
    let denom = n * sxx - sx * sx;
    if denom <= 1e-12 * n * sxx {
        return Err(FitError::ZeroVariance);
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok(Line::new(slope, intercept))
}

/// Signed vertical residuals `y - (k·x + b)`.
pub fn residuals(points: &[Point], line: Line) -> Vec<f64> {
    points.iter().map(|p| p.y - line.eval(p.x)).collect()
}

pub fn tukey_weight(residual: f64, c: f64, variant: WeightVariant) -> f64 {
    let a = residual.abs();
    if a >= c {
        return 0.0;
    }
    match variant {
        WeightVariant::StandardBiweight => {
            let u = residual / c;
            let v = 1.0 - u * u;
            v * v
        }
        WeightVariant::ComplementQuadratic => {
            let v = 1.0 - a / c;
            1.0 - v * v
        }
    }
}

pub fn tukey_weights(
    residuals: &[f64],
    c: f64,
    variant: WeightVariant,
) -> Result<Vec<f64>, FitError> {
    if c.is_nan() || c <= 0.0 {
        return Err(FitError::NonPositiveThreshold(c));
    }
    Ok(residuals
        .iter()
        .map(|&r| tukey_weight(r, c, variant))
        .collect())
}

/// Weighted least squares about the weighted centroid.
pub fn weighted_ols_fit(points: &[Point], weights: &[f64]) -> Result<Line, FitError> {
    if points.len() != weights.len() {
        return Err(FitError::WeightCountMismatch {
            points: points.len(),
            weights: weights.len(),
        });
    }
    let (mut sw, mut swx, mut swy) = (0.0, 0.0, 0.0);
    for (p, &w) in points.iter().zip(weights) {
        sw += w;
        swx += w * p.x;
        swy += w * p.y;
    }
    if sw.is_nan() || sw <= 0.0 {
        return Err(FitError::ZeroTotalWeight);
    }
    let (xm, ym) = (swx / sw, swy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (p, &w) in points.iter().zip(weights) {
        let dx = p.x - xm;
        sxx += w * dx * dx;
        sxy += w * dx * (p.y - ym);
    }
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(FitError::ZeroVariance);
    }
    let slope = sxy / sxx;
    Ok(Line::new(slope, ym - slope * xm))
}

/// `1.4826 · median(|r|)`.
///
/// Residuals are measured from the current line, so the spread is taken
/// about zero rather than about their own median.
pub fn mad_scale(residuals: &[f64]) -> f64 {
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    MAD_TO_SIGMA * median_in_place(&mut abs)
}

fn median_in_place(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Tukey IRLS line fit.
pub fn fit_line(points: &[Point], params: &TukeyParams) -> Result<LineFit, FitError> {
    params.validate()?;
    let mut line = ols_fit(points)?;
    // Intercept changes are measured at the mean abscissa, so the stopping
    // iteration does not depend on where x = 0 lies (e.g. under a flip).
    let x_mid = points.iter().map(|p| p.x).sum::<f64>() / points.len() as f64;
    let mut weights = vec![1.0; points.len()];
    let mut iterations = 0;
    let mut converged = false;
    let mut degenerate = false;

    while iterations < params.max_iterations {
        let r = residuals(points, line);
        let c = match params.scale {
            ScaleMode::Fixed { c } => c,
            ScaleMode::MadScaled { multiplier } => (multiplier * mad_scale(&r)).max(params.min_c),
        };
        let w = tukey_weights(&r, c, params.variant)?;
        iterations += 1;
        let next = match weighted_ols_fit(points, &w) {
            Ok(next) => next,
            Err(FitError::ZeroTotalWeight | FitError::ZeroVariance) => {
                degenerate = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let settled = (next.slope - line.slope).abs() < params.tol_slope
            && (next.eval(x_mid) - line.eval(x_mid)).abs() < params.tol_intercept;
        line = next;
        weights = w;
        if settled {
            converged = true;
            break;
        }
    }

    Ok(LineFit {
        slope: line.slope,
        intercept: line.intercept,
        n_points: points.len(),
        iterations,
        converged,
        degenerate,
        rms_residual: weighted_rms(points, line, &weights),
        final_weights: weights,
    })
}

fn weighted_rms(points: &[Point], line: Line, weights: &[f64]) -> f64 {
    let sw: f64 = weights.iter().sum();
    let r = residuals(points, line);
    if sw > 0.0 {
        (r.iter().zip(weights).map(|(r, w)| w * r * r).sum::<f64>() / sw).sqrt()
    } else {
        (r.iter().map(|r| r * r).sum::<f64>() / r.len() as f64).sqrt()
    }
}
