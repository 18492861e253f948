use serde::{Deserialize, Serialize};

use super::linalg::{svd3, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `x ↦ scale · rotation · x + translation`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform<T> {
    pub rotation: Mat3<T>,
    pub scale: T,
    pub translation: Vec3<T>,
}

impl<T: Real> SimilarityTransform<T> {
    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: Mat3::identity(),
            scale: T::one(),
            translation: Vec3::zero(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p).scale(self.scale) + self.translation
    }

    pub fn apply_all(&self, points: &[Vec3<T>]) -> Vec<Vec3<T>> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    /// Sum of squared residuals `Σ‖T(sourceᵢ) − targetᵢ‖²`.
    pub fn residual(&self, source: &[Vec3<T>], target: &[Vec3<T>]) -> T {
        source
            .iter()
            .zip(target)
            .map(|(s, t)| (self.apply(s) - *t).norm_squared())
            .sum()
    }
}

fn centroid<T: Real>(points: &[Vec3<T>]) -> Vec3<T> {
    let mut c = Vec3::zero();
    for p in points {
        c += *p;
    }
    c.scale(T::one() / T::from_usize_lossy(points.len()))
}

/// Least-squares similarity (or rigid, when `with_scale` is false) transform
/// mapping `source` onto `target` (Umeyama 1991).
pub fn umeyama_align<T: Real>(
    source: &[Vec3<T>],
    target: &[Vec3<T>],
    with_scale: bool,
) -> Result<SimilarityTransform<T>> {
    if source.len() != target.len() {
        return Err(Error::Alignment(format!(
            "point count mismatch: {} source vs {} target",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::Alignment(format!("need at least 3 points, got {n}")));
    }
    if !source.iter().chain(target).all(|p| p.is_finite()) {
        return Err(Error::Alignment("non-finite input point".into()));
    }

    let mu_s = centroid(source);
    let mu_t = centroid(target);
    let inv_n = T::one() / T::from_usize_lossy(n);

    let mut cov = Mat3::zero();
    let mut scatter = Mat3::zero();
    let mut var_s = T::zero();
    for (s, t) in source.iter().zip(target) {
        let ds = *s - mu_s;
        let dt = *t - mu_t;
        cov += dt.outer(&ds);
        scatter += ds.outer(&ds);
        var_s += ds.norm_squared();
    }
    let cov = cov.scale(inv_n);
    let var_s = var_s * inv_n;

    let spread = svd3(&scatter).singular_values;
    let rank_tol = T::epsilon().sqrt();
    if !(spread[0] > T::zero()) || spread[1] <= rank_tol * spread[0] {
        return Err(Error::Alignment(
            "degenerate source: centered points have rank < 2".into(),
        ));
    }

    let svd = svd3(&cov);
    let mut sign = Mat3::identity();
    if svd.u.determinant() * svd.v.determinant() < T::zero() {
        sign.0[2][2] = -T::one();
    }
    let rotation = svd.u * sign * svd.v.transpose();

    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * sign.0[0][0] + d[1] * sign.0[1][1] + d[2] * sign.0[2][2]) / var_s
    } else {
        T::one()
    };
    let translation = mu_t - rotation.mul_vec(&mu_s).scale(scale);

    Ok(SimilarityTransform {
        rotation,
        scale,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation::{rodrigues, AxisAngle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3<f64>> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3<f64> {
        let aa = AxisAngle::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        rodrigues(&aa).unwrap()
    }

    #[test]
    fn identity_on_equal_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = cloud(&mut rng, 10);
        let t = umeyama_align(&pts, &pts, true).unwrap();
        assert!(t.rotation.max_abs_diff(&Mat3::identity()) < 1e-12);
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_constructed_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let src = cloud(&mut rng, 15);
            let r0 = random_rotation(&mut rng);
            let t0 = Vec3::new(0.3, -1.2, 4.0);
            let truth = SimilarityTransform {
                rotation: r0,
                scale: 2.0,
                translation: t0,
            };
            let dst = truth.apply_all(&src);
            let est = umeyama_align(&src, &dst, true).unwrap();
            assert!((est.scale - 2.0).abs() < 1e-8);
            assert!(est.rotation.max_abs_diff(&r0) < 1e-8);
            assert!((est.translation - t0).norm() < 1e-8);
        }
    }

    #[test]
    fn rigid_variant_keeps_unit_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = cloud(&mut rng, 8);
        let dst: Vec<_> = src.iter().map(|p| p.scale(2.0)).collect();
        let est = umeyama_align(&src, &dst, false).unwrap();
        assert_eq!(est.scale, 1.0);
        assert!(est.residual(&src, &dst) > 0.0);
    }

    #[test]
    fn reflection_is_never_returned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = cloud(&mut rng, 12);
        let dst: Vec<_> = src.iter().map(|p| Vec3::new(-p.0[0], p.0[1], p.0[2])).collect();
        let est = umeyama_align(&src, &dst, true).unwrap();
        assert!((est.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn planar_source_is_accepted() {
        let src: Vec<_> = (0..6)
            .map(|i| Vec3::new(i as f64, ((i * i) % 5) as f64, 0.0))
            .collect();
        let r0 = rodrigues(&AxisAngle::new(0.2, 0.5, -0.3)).unwrap();
        let dst: Vec<_> = src.iter().map(|p| r0.mul_vec(p)).collect();
        let est = umeyama_align(&src, &dst, true).unwrap();
        assert!(est.residual(&src, &dst) < 1e-18);
        assert!((est.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let two = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        assert!(matches!(umeyama_align(&two, &two, true), Err(Error::Alignment(_))));
        let line: Vec<_> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.5 * i as f64)).collect();
        assert!(matches!(umeyama_align(&line, &line, true), Err(Error::Alignment(_))));
        let same = vec![Vec3::new(1.0, 1.0, 1.0); 4];
        assert!(umeyama_align(&same, &same, true).is_err());
    }
}
