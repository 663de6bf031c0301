//! Similarity alignment: Umeyama closed form and point-to-point ICP.

use nalgebra::{Matrix3, Vector3};

use super::MetricsError;

/// `p ↦ s·R·p + t` with `s > 0` and `R` orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> SimilarityTransform {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rotation = self.rotation.transpose();
        let scale = 1.0 / self.scale;
        SimilarityTransform { scale, rotation, translation: -scale * (rotation * self.translation) }
    }
}

/// Closed-form least-squares similarity `dst ≈ s·R·src + t` (Umeyama).
///
/// Needs at least three correspondences spanning a plane; collapsed or
/// collinear configurations are reported as degenerate.
pub fn umeyama(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
) -> Result<SimilarityTransform, MetricsError> {
    if src.len() != dst.len() {
        return Err(MetricsError::LengthMismatch { left: src.len(), right: dst.len() });
    }
    if src.len() < 3 {
        return Err(MetricsError::Degenerate("umeyama needs at least 3 points".into()));
    }
    let n = src.len() as f64;
    let mu_s: Vector3<f64> = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() / n;

    let mut var_s = 0.0;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let cs = s - mu_s;
        let cd = d - mu_d;
        var_s += cs.norm_squared();
        cov += cd * cs.transpose();
    }
    var_s /= n;
    cov /= n;

    if var_s < 1e-18 {
        return Err(MetricsError::Degenerate("source points are coincident".into()));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let sv = svd.singular_values;
    if sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return Err(MetricsError::Degenerate(
            "correspondences are collinear; rotation is not determined".into(),
        ));
    }

    // Reflection fix: flip the least-significant axis if needed.
    let mut s_fix = Vector3::new(1.0, 1.0, 1.0);
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s_fix[2] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&s_fix) * v_t;
    let scale = (sv[0] * s_fix[0] + sv[1] * s_fix[1] + sv[2] * s_fix[2]) / var_s;
    if !(scale > 0.0) {
        return Err(MetricsError::Degenerate(format!("non-positive scale {scale}")));
    }
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(SimilarityTransform { scale, rotation, translation })
}

/// Exact nearest-neighbor index over a uniform grid.
pub(crate) struct GridIndex {
    points: Vec<Vector3<f64>>,
    cell: f64,
    origin: Vector3<f64>,
    dims: [i64; 3],
    buckets: std::collections::HashMap<[i64; 3], Vec<usize>>,
}

impl GridIndex {
    pub fn build(points: &[Vector3<f64>]) -> GridIndex {
        assert!(!points.is_empty(), "cannot index an empty cloud");
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let diag = (hi - lo).norm();
        let cell = (diag / (points.len() as f64).cbrt()).max(1e-9);
        let mut buckets: std::collections::HashMap<[i64; 3], Vec<usize>> =
            std::collections::HashMap::new();
        let key = |p: &Vector3<f64>| {
            [
                ((p.x - lo.x) / cell).floor() as i64,
                ((p.y - lo.y) / cell).floor() as i64,
                ((p.z - lo.z) / cell).floor() as i64,
            ]
        };
        for (i, p) in points.iter().enumerate() {
            buckets.entry(key(p)).or_default().push(i);
        }
        let dims = key(&hi).map(|k| k + 1);
        GridIndex { points: points.to_vec(), cell, origin: lo, dims, buckets }
    }

    /// Index and distance of the exact nearest point.
    ///
    /// Shells are scanned around the query's cell *clamped into the grid*, so
    /// queries far outside the cloud's bounding box stay O(grid) instead of
    /// walking empty space toward it.
    pub fn nearest(&self, q: Vector3<f64>) -> (usize, f64) {
        let raw = [
            ((q.x - self.origin.x) / self.cell).floor() as i64,
            ((q.y - self.origin.y) / self.cell).floor() as i64,
            ((q.z - self.origin.z) / self.cell).floor() as i64,
        ];
        let c: [i64; 3] = std::array::from_fn(|i| raw[i].clamp(0, self.dims[i] - 1));
        // Distance from q to the clamped cell's box (0 when q is inside it).
        let gap = (0..3)
            .map(|i| {
                let lo = self.origin[i] + c[i] as f64 * self.cell;
                (lo - q[i]).max(q[i] - (lo + self.cell)).max(0.0).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        // Scanning shells 0..=cover around the clamped cell visits every
        // occupied cell of the grid.
        let cover =
            (0..3).map(|i| c[i].max(self.dims[i] - 1 - c[i])).max().unwrap();
        let mut best = (usize::MAX, f64::INFINITY);
        for radius in 0..=cover {
            // A point in a cell at Chebyshev distance r from the clamped cell
            // is at least (r-1)·cell from that cell's box, hence at least
            // (r-1)·cell − gap from q; once the best beats that, stop.
            if best.1.is_finite() && best.1 < (radius - 1).max(0) as f64 * self.cell - gap {
                break;
            }
            for (dx, dy, dz) in shell(radius) {
                let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                if key.iter().zip(&self.dims).any(|(k, d)| *k < 0 || k >= d) {
                    continue;
                }
                let Some(bucket) = self.buckets.get(&key) else { continue };
                for &i in bucket {
                    let d = (self.points[i] - q).norm();
                    if d < best.1 {
                        best = (i, d);
                    }
                }
            }
        }
        debug_assert!(best.0 != usize::MAX);
        best
    }
}

/// Offsets of the cells whose Chebyshev distance from the center is exactly
/// `r`.
fn shell(r: i64) -> Vec<(i64, i64, i64)> {
    if r == 0 {
        return vec![(0, 0, 0)];
    }
    let mut out = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            for dz in -r..=r {
                if dx.abs().max(dy.abs()).max(dz.abs()) == r {
                    out.push((dx, dy, dz));
                }
            }
        }
    }
    out
}

/// Point-to-point ICP with exact nearest neighbors. Re-estimates a rigid
/// (rotation + translation) update each iteration, keeping the scale fixed
/// from `init`; stops when the RMS residual stops improving by more than
/// `tol` or after `max_iters`. The returned transform's residual never
/// exceeds `init`'s.
pub fn icp_refine(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    init: &SimilarityTransform,
    max_iters: usize,
    tol: f64,
) -> Result<SimilarityTransform, MetricsError> {
    if src.is_empty() || dst.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let index = GridIndex::build(dst);
    let residual = |t: &SimilarityTransform| -> f64 {
        let sum: f64 = src.iter().map(|p| index.nearest(t.apply(*p)).1.powi(2)).sum();
        (sum / src.len() as f64).sqrt()
    };

    let mut current = init.clone();
    let mut current_res = residual(&current);
    for _ in 0..max_iters {
        // Fixed correspondences for this round.
        let scaled: Vec<Vector3<f64>> = src.iter().map(|p| init.scale * p).collect();
        let matched: Vec<Vector3<f64>> =
            src.iter().map(|p| index.points[index.nearest(current.apply(*p)).0]).collect();

        // Kabsch: best rigid R, t for ‖R·(s·p) + t − q‖².
        let n = scaled.len() as f64;
        let mu_x: Vector3<f64> = scaled.iter().sum::<Vector3<f64>>() / n;
        let mu_q: Vector3<f64> = matched.iter().sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        for (x, q) in scaled.iter().zip(&matched) {
            cov += (q - mu_q) * (x - mu_x).transpose();
        }
        let svd = cov.svd(true, true);
        let u = svd.u.expect("svd requested u");
        let v_t = svd.v_t.expect("svd requested v_t");
        let mut s_fix = Vector3::new(1.0, 1.0, 1.0);
        if (u.determinant() * v_t.determinant()) < 0.0 {
            s_fix[2] = -1.0;
        }
        let rotation = u * Matrix3::from_diagonal(&s_fix) * v_t;
        let translation = mu_q - rotation * mu_x;
        let candidate = SimilarityTransform { scale: init.scale, rotation, translation };

        let cand_res = residual(&candidate);
        if cand_res < current_res {
            let improved = current_res - cand_res;
            current = candidate;
            current_res = cand_res;
            if improved < tol {
                break;
            }
        } else {
            break;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                )
            })
            .collect()
    }

    fn random_similarity(rng: &mut impl Rng) -> SimilarityTransform {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.gen_range(-2.5..2.5);
        let rotation = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            angle,
        )
        .into_inner();
        SimilarityTransform {
            scale: rng.gen_range(0.3..2.5),
            rotation,
            translation: Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ),
        }
    }

    #[test]
    fn apply_then_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = random_similarity(&mut rng);
            let inv = t.inverse();
            let p = Vector3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            assert!((inv.apply(t.apply(p)) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn umeyama_on_identical_clouds_is_identity() {
        let cloud = random_cloud(20, &mut ChaCha8Rng::seed_from_u64(2));
        let t = umeyama(&cloud, &cloud).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!((t.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn umeyama_recovers_a_known_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let src = random_cloud(15, &mut rng);
            let truth = random_similarity(&mut rng);
            let dst: Vec<_> = src.iter().map(|p| truth.apply(*p)).collect();
            let got = umeyama(&src, &dst).unwrap();
            assert!((got.scale - truth.scale).abs() < 1e-9);
            assert!((got.rotation - truth.rotation).norm() < 1e-9);
            assert!((got.translation - truth.translation).norm() < 1e-9);
        }
    }

    #[test]
    fn umeyama_beats_random_transforms_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = random_cloud(40, &mut rng);
        let truth = random_similarity(&mut rng);
        let dst: Vec<_> = src
            .iter()
            .map(|p| {
                truth.apply(*p)
                    + Vector3::new(
                        rng.gen_range(-0.05..0.05),
                        rng.gen_range(-0.05..0.05),
                        rng.gen_range(-0.05..0.05),
                    )
            })
            .collect();
        let fit = umeyama(&src, &dst).unwrap();
        let sq_residual = |t: &SimilarityTransform| -> f64 {
            src.iter().zip(&dst).map(|(s, d)| (t.apply(*s) - d).norm_squared()).sum()
        };
        let fit_res = sq_residual(&fit);
        for _ in 0..1000 {
            let rand_t = random_similarity(&mut rng);
            assert!(fit_res <= sq_residual(&rand_t) + 1e-12);
        }
    }

    #[test]
    fn umeyama_reports_degenerate_configurations() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            umeyama(&[p, p, p, p], &random_cloud(4, &mut ChaCha8Rng::seed_from_u64(5))),
            Err(MetricsError::Degenerate(_))
        ));
        // Collinear sources leave a free rotation about the line.
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(umeyama(&line, &line).is_err());
        assert!(matches!(
            umeyama(&[p, p], &[p, p, p]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn umeyama_fixes_reflections() {
        // A mirrored target must still produce a proper rotation.
        let src = random_cloud(25, &mut ChaCha8Rng::seed_from_u64(6));
        let dst: Vec<_> = src.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let t = umeyama(&src, &dst).unwrap();
        assert!((t.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grid_nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cloud = random_cloud(500, &mut rng);
        let index = GridIndex::build(&cloud);
        for _ in 0..300 {
            let q = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let (gi, gd) = index.nearest(q);
            let (bi, bd) = cloud
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert_eq!(gi, bi, "query {q:?}");
            assert!((gd - bd).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_handles_tiny_and_degenerate_clouds() {
        let single = vec![Vector3::new(1.0, 1.0, 1.0)];
        let index = GridIndex::build(&single);
        assert_eq!(index.nearest(Vector3::zeros()).0, 0);
        // All points identical: diagonal 0 forces the minimum cell size.
        let same = vec![Vector3::new(2.0, 0.0, 0.0); 5];
        let index = GridIndex::build(&same);
        let (i, d) = index.nearest(Vector3::new(2.0, 0.0, 0.1));
        assert!(i < 5);
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn icp_returns_init_when_already_optimal() {
        let cloud = random_cloud(60, &mut ChaCha8Rng::seed_from_u64(8));
        let t = icp_refine(&cloud, &cloud, &SimilarityTransform::identity(), 20, 1e-12).unwrap();
        let res: f64 =
            cloud.iter().map(|p| (t.apply(*p) - p).norm_squared()).sum::<f64>().sqrt();
        assert!(res < 1e-9, "identity alignment must stay put");
    }

    #[test]
    fn icp_recovers_a_small_rotation() {
        let cloud = random_cloud(120, &mut ChaCha8Rng::seed_from_u64(9));
        let small = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), 0.06).into_inner();
        let perturbed = SimilarityTransform {
            scale: 1.0,
            rotation: small,
            translation: Vector3::new(0.03, -0.02, 0.04),
        };
        let fixed = icp_refine(&cloud, &cloud, &perturbed, 60, 1e-14).unwrap();
        let worst = cloud
            .iter()
            .map(|p| (fixed.apply(*p) - p).norm())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-6, "residual after refinement: {worst}");
    }

    #[test]
    fn icp_residuals_never_increase() {
        // Run ICP one iteration at a time; the RMS residual sequence must be
        // non-increasing even from a poor initialization.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dst = random_cloud(150, &mut rng);
        let offset = random_similarity(&mut rng);
        let src: Vec<_> = dst.iter().map(|p| offset.inverse().apply(*p)).collect();
        let index = GridIndex::build(&dst);
        let rms = |t: &SimilarityTransform| -> f64 {
            let s: f64 = src.iter().map(|p| index.nearest(t.apply(*p)).1.powi(2)).sum();
            (s / src.len() as f64).sqrt()
        };
        let mut current = SimilarityTransform {
            scale: offset.scale,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        };
        let mut last = rms(&current);
        for _ in 0..25 {
            current = icp_refine(&src, &dst, &current, 1, 0.0).unwrap();
            let now = rms(&current);
            assert!(now <= last + 1e-12, "residual rose from {last} to {now}");
            last = now;
        }
    }

    #[test]
    fn icp_rejects_empty_clouds() {
        assert!(matches!(
            icp_refine(&[], &[Vector3::zeros()], &SimilarityTransform::identity(), 5, 1e-9),
            Err(MetricsError::EmptyCloud)
        ));
    }
}
