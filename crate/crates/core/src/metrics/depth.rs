//! Depth errors after a per-sequence least-squares scale+shift alignment.

use super::MetricsError;
use crate::camera::DenseMap;

/// δ1 accepts pixels with max(d̂/d, d/d̂) below this ratio.
pub const DELTA1_RATIO: f64 = 1.25;

/// Rel, RMSE and δ1 over a sequence of depth maps.
///
/// `channel` selects the depth channel in both maps (geometry maps keep depth
/// beside the ray directions). A pixel participates if it is valid in both
/// the prediction and the ground truth. One scale and shift are fit jointly
/// over all frames of the sequence by least squares, then:
/// Rel = mean |d̂−d|/d, RMSE = √(mean (d̂−d)²), δ1 = fraction of pixels with
/// max(d̂/d, d/d̂) < 1.25 (non-positive aligned predictions count as misses).
pub fn depth_metrics(
    pred: &[DenseMap],
    gt: &[DenseMap],
    channel: usize,
) -> Result<(f64, f64, f64), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch { left: pred.len(), right: gt.len() });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (f, (p, g)) in pred.iter().zip(gt).enumerate() {
        assert_eq!((p.width, p.height), (g.width, g.height), "frame {f} sizes differ");
        assert!(channel < p.channels && channel < g.channels, "depth channel out of range");
        for y in 0..p.height {
            for x in 0..p.width {
                if !(p.is_valid(x, y) && g.is_valid(x, y)) {
                    continue;
                }
                let d = g.pixel(x, y)[channel];
                if d <= 0.0 {
                    return Err(MetricsError::NonpositiveDepth { frame: f });
                }
                xs.push(p.pixel(x, y)[channel]);
                ys.push(d);
            }
        }
    }
    if xs.is_empty() {
        return Err(MetricsError::NoValidPixels);
    }

    let (scale, shift) = fit_scale_shift(&xs, &ys);
    let n = xs.len() as f64;
    let mut rel = 0.0;
    let mut sq = 0.0;
    let mut hits = 0usize;
    for (&x, &y) in xs.iter().zip(&ys) {
        let d = scale * x + shift;
        rel += (d - y).abs() / y;
        sq += (d - y) * (d - y);
        if d > 0.0 && (d / y).max(y / d) < DELTA1_RATIO {
            hits += 1;
        }
    }
    Ok((rel / n, (sq / n).sqrt(), hits as f64 / n))
}

/// Least-squares `(s, b)` minimizing Σ (s·x + b − y)². A constant prediction
/// leaves the scale unconstrained; it degrades to a shift-only fit.
fn fit_scale_shift(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let den = n * sxx - sx * sx;
    if den.abs() <= 1e-12 * (n * sxx).abs().max(1e-300) {
        return (1.0, (sy - sx) / n);
    }
    let scale = (n * sxy - sx * sy) / den;
    (scale, (sy - scale * sx) / n)
}
