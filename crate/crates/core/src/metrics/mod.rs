//! Evaluation metrics for multi-view geometry predictions.
//!
//! Five metric families, fifteen numbers total, collected per sequence into a
//! [`MetricReport`]:
//!
//! * pose accuracy over all ordered frame pairs — RRA / RTA at a threshold
//!   plus the exact area under the min(RRA, RTA) threshold curve up to 30°;
//! * trajectory errors after similarity alignment — ATE, and RPE for
//!   translation / rotation over consecutive frames;
//! * depth errors after a per-sequence least-squares scale+shift — Rel, RMSE,
//!   δ1;
//! * point-cloud errors after Umeyama + ICP alignment — accuracy,
//!   completeness, Chamfer distance;
//! * field-of-view errors from predicted ray maps — median horizontal /
//!   vertical error and the area under the joint threshold curve up to 10°.
//!
//! All functions are pure; callers parallelize across sequences.

mod align;
mod depth;
mod fov;
mod points;
mod pose;
mod report;

pub use align::{icp_refine, umeyama, SimilarityTransform};
pub use depth::depth_metrics;
pub use fov::fov_metrics;
pub use points::{aligned_point_metrics, cloud_from_geometry, point_metrics};
pub use pose::{auc_pose, pose_angular, trajectory};
pub use report::{MetricReport, METRIC_COLUMNS};

/// Failures shared across the metric families.
#[derive(Debug)]
pub enum MetricsError {
    /// Fewer frames than the metric is defined on.
    TooFewFrames { got: usize, need: usize },
    /// Paired inputs of different lengths.
    LengthMismatch { left: usize, right: usize },
    /// A configuration with no unique solution (coincident or collinear
    /// points, rank-deficient covariance, ...).
    Degenerate(String),
    /// A point metric received an empty cloud.
    EmptyCloud,
    /// No pixel is valid in both prediction and ground truth.
    NoValidPixels,
    /// Ground-truth depth must be strictly positive on valid pixels.
    NonpositiveDepth { frame: usize },
}

impl std::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricsError::TooFewFrames { got, need } => {
                write!(f, "needs at least {need} frames, got {got}")
            }
            MetricsError::LengthMismatch { left, right } => {
                write!(f, "paired inputs differ in length: {left} vs {right}")
            }
            MetricsError::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            MetricsError::EmptyCloud => write!(f, "point cloud is empty"),
            MetricsError::NoValidPixels => write!(f, "no jointly valid pixels"),
            MetricsError::NonpositiveDepth { frame } => {
                write!(f, "non-positive ground-truth depth in frame {frame}")
            }
        }
    }
}

impl std::error::Error for MetricsError {}
