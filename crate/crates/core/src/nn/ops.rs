use super::real::Real;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Geometry of a 2-D convolution reading a `channels x height x width`
/// image and producing an `out_h x out_w` grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn conv(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeom {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_h: (height + 2 * padding - kernel) / stride + 1,
            out_w: (width + 2 * padding - kernel) / stride + 1,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Calls `f(col_index, image_index)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let cols = self.col_cols();
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ki) as isize - p;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let img_row = (c * self.height + iy as usize) * self.width;
                        let col_row = row * cols + oy * self.out_w;
                        for ox in 0..self.out_w {
                            let ix = (ox * s + kj) as isize - p;
                            if ix >= 0 && ix < self.width as isize {
                                f(col_row + ox, img_row + ix as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Unfolds patches into `col` (`[C k k, out_h out_w]`), zeros for padding.
    pub fn im2col<R: Real>(&self, img: &[R], col: &mut [R]) {
        col.fill(R::zero());
        self.for_each_tap(|ci, ii| col[ci] = img[ii]);
    }

    /// Adjoint of [`im2col`](Self::im2col): accumulates `col` into `img`.
    pub fn col2im<R: Real>(&self, col: &[R], img: &mut [R]) {
        self.for_each_tap(|ci, ii| img[ii] += col[ci]);
    }
}

/// Transposed convolution of one sample: `x` is `[cin, h, w]`, `w` is
/// `[cin, cout, k, k]`, output `[cout, oh, ow]` accumulated into `out`.
pub(crate) fn conv_t_sample<R: Real>(
    g: &ConvGeom,
    cin: usize,
    weights: &[R],
    x: &[R],
    col: &mut [R],
    out: &mut [R],
) {
    let (kk, p) = (g.col_rows(), g.col_cols());
    // col = W^T x
    R::gemm(kk, cin, p, weights, (1, kk as isize), x, (p as isize, 1), R::zero(), col, (p as isize, 1));
    g.col2im(col, out);
}

/// Geometry of the convolution whose adjoint is this transposed
/// convolution (image = transposed output, grid = transposed input).
pub(crate) fn conv_t_geom(
    cout: usize,
    in_h: usize,
    in_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> ConvGeom {
    let oh = (in_h - 1) * stride + kernel + output_padding - 2 * padding;
    let ow = (in_w - 1) * stride + kernel + output_padding - 2 * padding;
    ConvGeom {
        channels: cout,
        height: oh,
        width: ow,
        kernel,
        stride,
        padding,
        out_h: in_h,
        out_w: in_w,
    }
}

/// Transposed 2-D convolution without bias on a `[b, cin, h, w]` batch with
/// `[cin, cout, k, k]` weights; output side length
/// `(in - 1) stride - 2 padding + k + output_padding`.
pub fn conv_transpose2d_forward(
    x: &Tensor,
    weights: &Tensor,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor> {
    let (b, cin, h, w) = match *x.shape() {
        [b, c, h, w] => (b, c, h, w),
        _ => return Err(Error::shape("conv_transpose2d", format!("input must be [b, c, h, w], got {:?}", x.shape()))),
    };
    let (wc, cout, k) = match *weights.shape() {
        [ci, co, k1, k2] if k1 == k2 => (ci, co, k1),
        _ => return Err(Error::shape("conv_transpose2d", format!("weights must be [cin, cout, k, k], got {:?}", weights.shape()))),
    };
    if wc != cin {
        return Err(Error::shape("conv_transpose2d", format!("input has {cin} channels, weights expect {wc}")));
    }
    let spec = super::LayerSpec::conv_t(cin, cout, k, stride, padding, output_padding);
    let out_shape = spec
        .output_shape(&[cin, h, w])
        .map_err(|m| Error::shape("conv_transpose2d", m))?;
    let g = conv_t_geom(cout, h, w, k, stride, padding, output_padding);
    debug_assert_eq!(out_shape, vec![cout, g.height, g.width]);
    let mut col = vec![0.0f32; g.col_rows() * g.col_cols()];
    let mut out = vec![0.0f32; b * g.image_len()];
    let in_len = cin * h * w;
    for s in 0..b {
        conv_t_sample(
            &g,
            cin,
            weights.data(),
            &x.data()[s * in_len..(s + 1) * in_len],
            &mut col,
            &mut out[s * g.image_len()..(s + 1) * g.image_len()],
        );
    }
    Tensor::new(vec![b, cout, g.height, g.width], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    /// Zero-insertion oracle: dilate the input by `stride`, pad by
    /// `k - 1 - padding` (plus `output_padding` on the far side) and run a
    /// plain stride-1 convolution with the spatially flipped kernel.
    fn zero_insertion(
        x: &[f32],
        cin: usize,
        h: usize,
        w: usize,
        wt: &[f32],
        cout: usize,
        k: usize,
        s: usize,
        p: usize,
        op: usize,
    ) -> Vec<f32> {
        let dh = (h - 1) * s + 1;
        let dw = (w - 1) * s + 1;
        let pad = k - 1 - p;
        let (ph, pw) = (dh + 2 * pad + op, dw + 2 * pad + op);
        let mut big = vec![0.0f32; cin * ph * pw];
        for c in 0..cin {
            for y in 0..h {
                for xx in 0..w {
                    big[(c * ph + pad + y * s) * pw + pad + xx * s] = x[(c * h + y) * w + xx];
                }
            }
        }
        let (oh, ow) = (ph - k + 1, pw - k + 1);
        let mut out = vec![0.0f32; cout * oh * ow];
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for c in 0..cin {
                        for i in 0..k {
                            for j in 0..k {
                                let wv = wt[((c * cout + co) * k + (k - 1 - i)) * k + (k - 1 - j)];
                                acc += wv * big[(c * ph + oy + i) * pw + ox + j];
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn single_pixel_gives_kernel_center_window() {
        let wt: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let x = Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap();
        let w = Tensor::new(vec![1, 1, 4, 4], wt).unwrap();
        let y = conv_transpose2d_forward(&x, &w, 2, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[15.0, 18.0, 27.0, 30.0]);
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let x = Tensor::new(vec![2, 3, 4, 4], vec![1.5; 96]).unwrap();
        let w = Tensor::zeros(vec![3, 2, 3, 3]);
        let y = conv_transpose2d_forward(&x, &w, 2, 1, 1).unwrap();
        assert_eq!(y.shape(), &[2, 2, 8, 8]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_zero_insertion_oracle_exactly() {
        // integer-valued data keeps every partial sum exact in f32
        let mut rng = seeded(3);
        for &(cin, cout, k, s, p, op) in &[
            (2, 3, 4, 2, 1, 0),
            (1, 2, 3, 1, 1, 0),
            (3, 1, 3, 2, 1, 1),
            (2, 2, 5, 3, 2, 2),
            (1, 1, 2, 2, 0, 0),
        ] {
            let x: Vec<f32> = (0..cin * 25).map(|_| rng.random_range(-4..=4) as f32).collect();
            let wt: Vec<f32> = (0..cin * cout * k * k).map(|_| rng.random_range(-3..=3) as f32).collect();
            let y = conv_transpose2d_forward(
                &Tensor::new(vec![1, cin, 5, 5], x.clone()).unwrap(),
                &Tensor::new(vec![cin, cout, k, k], wt.clone()).unwrap(),
                s,
                p,
                op,
            )
            .unwrap();
            let oracle = zero_insertion(&x, cin, 5, 5, &wt, cout, k, s, p, op);
            assert_eq!(y.data(), &oracle[..], "config {:?}", (cin, cout, k, s, p, op));
        }
    }

    #[test]
    fn invalid_arithmetic_is_shape_error() {
        let x = Tensor::zeros(vec![1, 1, 2, 2]);
        let w = Tensor::zeros(vec![1, 1, 3, 3]);
        assert!(matches!(conv_transpose2d_forward(&x, &w, 2, 1, 2), Err(Error::Shape { .. })));
        let w2 = Tensor::zeros(vec![2, 1, 3, 3]);
        assert!(matches!(conv_transpose2d_forward(&x, &w2, 1, 0, 0), Err(Error::Shape { .. })));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom::conv(2, 6, 5, 3, 2, 1);
        let mut rng = seeded(9);
        let img: Vec<f64> = (0..g.image_len()).map(|_| rng.random()).collect();
        let col_in: Vec<f64> = (0..g.col_rows() * g.col_cols()).map(|_| rng.random()).collect();
        let mut col = vec![0.0; col_in.len()];
        g.im2col(&img, &mut col);
        let mut back = vec![0.0; img.len()];
        g.col2im(&col_in, &mut back);
        let lhs: f64 = col.iter().zip(&col_in).map(|(a, b)| a * b).sum();
        let rhs: f64 = img.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
