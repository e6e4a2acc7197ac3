use crate::error::{Error, Result};
use crate::image::ImageBatch;
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Mean squared elementwise difference, accumulated in f64.
pub fn metric_mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("mse", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Err(Error::Parameter("mse of empty tensors".into()));
    }
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum();
    Ok(s / a.len() as f64)
}

fn check_pair(a: &ImageBatch, b: &ImageBatch) -> Result<()> {
    if a.pixels.shape() != b.pixels.shape() {
        return Err(Error::shape("image metric", format!("{:?} vs {:?}", a.pixels.shape(), b.pixels.shape())));
    }
    if a.value_range != b.value_range {
        return Err(Error::Parameter(format!(
            "value ranges differ: {:?} vs {:?}",
            a.value_range, b.value_range
        )));
    }
    Ok(())
}

/// MSE after mapping both batches to `[0, 1]`.
pub fn unit_mse(a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
    check_pair(a, b)?;
    let (x, y) = (a.unit_range_f64(), b.unit_range_f64());
    if x.is_empty() {
        return Err(Error::Parameter("mse of empty batches".into()));
    }
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64)
}

/// `10 log10(1 / MSE)` with pixels in `[0, 1]`; `+inf` for identical batches.
pub fn metric_psnr(a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
    Ok(psnr_from_mse(unit_mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn ssim_window(n: f64, sa: f64, sb: f64, saa: f64, sbb: f64, sab: f64) -> f64 {
    let (ma, mb) = (sa / n, sb / n);
    let va = saa / n - ma * ma;
    let vb = sbb / n - mb * mb;
    let cov = sab / n - ma * mb;
    ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
}

/// Mean SSIM over every 8x8 window (stride 1, uniform weights, population
/// variances) of every image and channel, pixels mapped to `[0, 1]`.
pub fn metric_ssim(a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
    check_pair(a, b)?;
    let (h, w) = (a.height, a.width);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Parameter(format!("{h}x{w} images are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    if a.count == 0 {
        return Err(Error::Parameter("ssim of empty batches".into()));
    }
    let (x, y) = (a.unit_range_f64(), b.unit_range_f64());
    let k = SSIM_WINDOW;
    let n = (k * k) as f64;
    let (wh, ww) = (h - k + 1, w - k + 1);
    let planes = a.count * a.channels;
    let iw = w + 1;
    let mut total = 0.0;
    let mut tables = vec![vec![0.0f64; (h + 1) * iw]; 5];
    for p in 0..planes {
        let (pa, pb) = (&x[p * h * w..(p + 1) * h * w], &y[p * h * w..(p + 1) * h * w]);
        for r in 0..h {
            let mut row = [0.0f64; 5];
            for c in 0..w {
                let (u, v) = (pa[r * w + c], pb[r * w + c]);
                for (acc, val) in row.iter_mut().zip([u, v, u * u, v * v, u * v]) {
                    *acc += val;
                }
                for t in 0..5 {
                    tables[t][(r + 1) * iw + c + 1] = tables[t][r * iw + c + 1] + row[t];
                }
            }
        }
        let rect = |t: &[f64], r: usize, c: usize| {
            t[(r + k) * iw + c + k] - t[r * iw + c + k] - t[(r + k) * iw + c] + t[r * iw + c]
        };
        for r in 0..wh {
            for c in 0..ww {
                let s: Vec<f64> = tables.iter().map(|t| rect(t, r, c)).collect();
                total += ssim_window(n, s[0], s[1], s[2], s[3], s[4]);
            }
        }
    }
    Ok(total / (planes * wh * ww) as f64)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    pub fn random_batch(n: usize, c: usize, h: usize, w: usize, seed: u64) -> ImageBatch {
        let mut rng = seeded(seed);
        let px: Vec<f32> = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        ImageBatch::new(Tensor::new(vec![n, c, h, w], px).unwrap(), (-1.0, 1.0)).unwrap()
    }

    /// Direct per-window evaluation with two-pass statistics.
    fn naive_ssim(a: &ImageBatch, b: &ImageBatch) -> f64 {
        let (x, y) = (a.unit_range_f64(), b.unit_range_f64());
        let (h, w, k) = (a.height, a.width, SSIM_WINDOW);
        let mut total = 0.0;
        let mut count = 0.0;
        for p in 0..a.count * a.channels {
            for r in 0..=h - k {
                for c in 0..=w - k {
                    let idx: Vec<usize> = (0..k).flat_map(|i| (0..k).map(move |j| p * h * w + (r + i) * w + c + j)).collect();
                    let n = idx.len() as f64;
                    let ma = idx.iter().map(|&i| x[i]).sum::<f64>() / n;
                    let mb = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
                    let va = idx.iter().map(|&i| (x[i] - ma).powi(2)).sum::<f64>() / n;
                    let vb = idx.iter().map(|&i| (y[i] - mb).powi(2)).sum::<f64>() / n;
                    let cv = idx.iter().map(|&i| (x[i] - ma) * (y[i] - mb)).sum::<f64>() / n;
                    total += ((2.0 * ma * mb + C1) * (2.0 * cv + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                    count += 1.0;
                }
            }
        }
        total / count
    }

    #[test]
    fn mse_examples() {
        let a = Tensor::new(vec![2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(metric_mse(&a, &a).unwrap(), 0.0);
        let b = Tensor::new(vec![2, 2], vec![0.5, 1.5, 2.5, 3.5]).unwrap();
        assert_eq!(metric_mse(&a, &b).unwrap(), 0.25);
    }

    #[test]
    fn mse_matches_two_pass_oracle() {
        let a = random_batch(3, 1, 9, 9, 1).pixels;
        let b = random_batch(3, 1, 9, 9, 2).pixels;
        let d: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| *x as f64 - *y as f64).collect();
        let oracle = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        assert!((metric_mse(&a, &b).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn psnr_examples() {
        let a = random_batch(1, 1, 8, 8, 3);
        assert_eq!(metric_psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(1e-4) - 40.0).abs() < 1e-12);
        assert!(psnr_from_mse(0.02) < psnr_from_mse(0.01));
    }

    #[test]
    fn ssim_identity_symmetry_and_oracle() {
        let a = random_batch(2, 3, 12, 10, 4);
        let b = random_batch(2, 3, 12, 10, 5);
        assert_eq!(metric_ssim(&a, &a).unwrap(), 1.0);
        let ab = metric_ssim(&a, &b).unwrap();
        assert!((ab - metric_ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!((ab - naive_ssim(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn inverted_checkerboard_is_near_minus_one() {
        let px: Vec<f32> = (0..16 * 16).map(|k| if (k / 16 + k % 16) % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let inv: Vec<f32> = px.iter().map(|v| 1.0 - v).collect();
        let a = ImageBatch::new(Tensor::new(vec![1, 1, 16, 16], px).unwrap(), (0.0, 1.0)).unwrap();
        let b = ImageBatch::new(Tensor::new(vec![1, 1, 16, 16], inv).unwrap(), (0.0, 1.0)).unwrap();
        let s = metric_ssim(&a, &b).unwrap();
        assert!(s < -0.99, "{s}");
    }

    #[test]
    fn tiny_images_are_rejected() {
        let a = random_batch(1, 1, 7, 9, 1);
        assert!(matches!(metric_ssim(&a, &a), Err(Error::Parameter(_))));
    }
}
