//! Wood-panel key data from binary segmentation masks.
//!
//! A mask is turned into upper and lower boundary points by a vertical
//! Prewitt pair, each boundary gets a Tukey-biweight line fit, and the two
//! lines give the panel's width, attitude and the cutting channel to use.

pub mod edge;
pub mod keydata;
pub mod pipeline;
pub mod raster;
pub mod robustfit;
pub mod segeval;
pub mod synthgen;

pub use edge::{detect_edges, Boundary, EdgeDetectParams, EdgeError, EdgePoint, EdgePointSet};
pub use keydata::{compute_keydata, CalibrationProfile, CuttingChannel, PanelKeyData, ReasonCode};
pub use pipeline::{analyze, PanelAnalysis, PipelineParams, StageTimings};
pub use raster::{ClassMask, GrayImage, RasterError};
pub use robustfit::{fit_line, Line, LineFit, Point, ScaleMode, TukeyParams, WeightVariant};
pub use segeval::{ConfusionMatrix, SegEvalReport};
pub use synthgen::{augment, generate, Augment, GroundTruth, PanelSpec};
