//! Synthetic datasets with known ground truth.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::ImageBatch;
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Points on a manifold together with their intrinsic parameters.
#[derive(Clone, Debug)]
pub struct SyntheticManifold {
    pub points: Tensor,
    pub intrinsic: Tensor,
}

pub const SWISS_T_MIN: f64 = 1.5 * PI;
pub const SWISS_T_MAX: f64 = 4.5 * PI;
pub const SWISS_HEIGHT: f64 = 21.0;

/// Swiss roll `(t cos t, h, t sin t)` with `t ~ U[1.5pi, 4.5pi]`,
/// `h ~ U[0, 21]` and isotropic Gaussian noise.
pub fn make_swiss_roll(n: usize, noise_sd: f64, seed: u64) -> Result<SyntheticManifold> {
    if n == 0 {
        return Err(Error::Parameter("swiss roll needs n >= 1".into()));
    }
    let mut rng = seeded(seed);
    let mut pts = Vec::with_capacity(3 * n);
    let mut intr = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let t = SWISS_T_MIN + (SWISS_T_MAX - SWISS_T_MIN) * rng.random::<f64>();
        let h = SWISS_HEIGHT * rng.random::<f64>();
        let mut p = [t * t.cos(), h, t * t.sin()];
        if noise_sd > 0.0 {
            for v in &mut p {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise_sd * z;
            }
        }
        pts.extend_from_slice(&p);
        intr.extend_from_slice(&[t, h]);
    }
    Ok(SyntheticManifold {
        points: Tensor::matrix_from_f64(n, 3, &pts)?,
        intrinsic: Tensor::matrix_from_f64(n, 2, &intr)?,
    })
}

/// Isotropic Gaussian clusters. Returns the points and the cluster label of
/// each row; points are assigned to clusters round-robin.
pub fn make_blobs(
    n: usize,
    centers: &[Vec<f64>],
    sd: f64,
    seed: u64,
) -> Result<(Tensor, Vec<usize>)> {
    let dim = centers
        .first()
        .map(|c| c.len())
        .ok_or_else(|| Error::Parameter("need at least one center".into()))?;
    let mut rng = seeded(seed);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % centers.len();
        for &m in &centers[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(m + sd * z);
        }
        labels.push(c);
    }
    Ok((Tensor::matrix_from_f64(n, dim, &data)?, labels))
}

/// Grayscale images of a single rotated anisotropic Gaussian spot.
///
/// Each image is driven by six latent factors (center x/y, two widths,
/// rotation, peak brightness), so the data lies near a 6-dimensional manifold
/// in pixel space. Pixels are in `[-1, 1]`.
pub fn make_spot_images(n: usize, size: usize, seed: u64) -> Result<(ImageBatch, Tensor)> {
    if n == 0 || size < 4 {
        return Err(Error::Parameter("need n >= 1 and size >= 4".into()));
    }
    let mut rng = seeded(seed);
    let s = size as f64;
    let mut pixels = Vec::with_capacity(n * size * size);
    let mut latent = Vec::with_capacity(n * 6);
    for _ in 0..n {
        let cx = s * (0.3 + 0.4 * rng.random::<f64>());
        let cy = s * (0.3 + 0.4 * rng.random::<f64>());
        let sx = s * (0.06 + 0.12 * rng.random::<f64>());
        let sy = s * (0.06 + 0.12 * rng.random::<f64>());
        let theta = PI * rng.random::<f64>();
        let peak = 0.5 + 0.5 * rng.random::<f64>();
        let (c, sn) = (theta.cos(), theta.sin());
        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let u = c * dx + sn * dy;
                let v = -sn * dx + c * dy;
                let g = peak * (-(u * u) / (2.0 * sx * sx) - (v * v) / (2.0 * sy * sy)).exp();
                pixels.push((2.0 * g - 1.0).clamp(-1.0, 1.0) as f32);
            }
        }
        latent.extend_from_slice(&[cx, cy, sx, sy, theta, peak]);
    }
    let batch = ImageBatch::new(Tensor::new(vec![n, 1, size, size], pixels)?, (-1.0, 1.0))?;
    Ok((batch, Tensor::matrix_from_f64(n, 6, &latent)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_point_is_on_surface() {
        let m = make_swiss_roll(1, 0.0, 3).unwrap();
        let p = m.points.row(0);
        let t = m.intrinsic.row(0)[0] as f64;
        let h = m.intrinsic.row(0)[1] as f64;
        assert!((p[0] as f64 - t * t.cos()).abs() < 1e-5);
        assert!((p[1] as f64 - h).abs() < 1e-5);
        assert!((p[2] as f64 - t * t.sin()).abs() < 1e-5);
    }

    #[test]
    fn swiss_roll_is_deterministic() {
        let a = make_swiss_roll(50, 0.1, 11).unwrap();
        let b = make_swiss_roll(50, 0.1, 11).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.intrinsic, b.intrinsic);
    }

    #[test]
    fn all_noise_free_points_lie_on_surface() {
        let m = make_swiss_roll(500, 0.0, 1).unwrap();
        for i in 0..500 {
            let p = m.points.row(i);
            let t = m.intrinsic.row(i)[0] as f64;
            let on = [t * t.cos(), t * t.sin()];
            // f32 storage of t limits the check to relative precision.
            assert!((p[0] as f64 - on[0]).abs() < 1e-5 * 15.0);
            assert!((p[2] as f64 - on[1]).abs() < 1e-5 * 15.0);
        }
    }

    /// Arc length of the roll between two parameters, by Simpson quadrature of
    /// `sqrt(1 + t^2)` (the planar spiral speed), compared to the chord.
    #[test]
    fn geodesic_exceeds_chord_for_far_points() {
        fn arc(a: f64, b: f64) -> f64 {
            let n = 2000;
            let h = (b - a) / n as f64;
            let f = |t: f64| (1.0 + t * t).sqrt();
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        }
        let m = make_swiss_roll(2000, 0.0, 5).unwrap();
        let mut checked = 0;
        for i in (0..2000).step_by(37) {
            for j in (0..2000).step_by(41) {
                let (ti, tj) = (m.intrinsic.row(i)[0] as f64, m.intrinsic.row(j)[0] as f64);
                if (ti - tj).abs() < PI {
                    continue;
                }
                let (pi, pj) = (m.points.row(i), m.points.row(j));
                let chord: f64 = (0..3)
                    .map(|k| (pi[k] as f64 - pj[k] as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let dh = (m.intrinsic.row(i)[1] - m.intrinsic.row(j)[1]) as f64;
                let geo = (arc(ti.min(tj), ti.max(tj)).powi(2) + dh * dh).sqrt();
                assert!(geo > chord, "geo {geo} <= chord {chord}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn spot_images_in_range() {
        let (b, z) = make_spot_images(10, 28, 2).unwrap();
        assert_eq!(b.pixels.shape(), &[10, 1, 28, 28]);
        assert_eq!(z.shape(), &[10, 6]);
        assert!(b.pixels.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
