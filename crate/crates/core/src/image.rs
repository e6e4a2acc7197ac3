//! Image batches, preprocessing and PGM/PPM I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A batch of images stored as `[count, channels, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Tensor,
    pub value_range: (f32, f32),
}

impl ImageBatch {
    pub fn new(pixels: Tensor, value_range: (f32, f32)) -> Result<Self> {
        let s = pixels.shape();
        if s.len() != 4 {
            return Err(Error::shape(
                "image batch",
                format!("expected [count, channels, h, w], got {s:?}"),
            ));
        }
        let (count, channels, height, width) = (s[0], s[1], s[2], s[3]);
        if channels != 1 && channels != 3 {
            return Err(Error::shape(
                "image batch",
                format!("channels must be 1 or 3, got {channels}"),
            ));
        }
        let (lo, hi) = value_range;
        if !(lo < hi) {
            return Err(Error::Parameter(format!("invalid value range ({lo}, {hi})")));
        }
        if let Some(v) = pixels.data().iter().find(|&&v| v < lo || v > hi) {
            return Err(Error::Data(format!(
                "pixel value {v} outside declared range [{lo}, {hi}]"
            )));
        }
        Ok(ImageBatch {
            count,
            channels,
            height,
            width,
            pixels,
            value_range,
        })
    }

    pub fn pixels_per_image(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f32] {
        self.pixels.row(i)
    }

    pub fn select(&self, idx: &[usize]) -> ImageBatch {
        ImageBatch {
            count: idx.len(),
            pixels: self.pixels.select_rows(idx),
            ..self.clone()
        }
    }

    /// Affine copy of the pixels into `[0, 1]`, as f64.
    pub fn unit_range_f64(&self) -> Vec<f64> {
        let (lo, hi) = (self.value_range.0 as f64, self.value_range.1 as f64);
        self.pixels
            .data()
            .iter()
            .map(|&v| (v as f64 - lo) / (hi - lo))
            .collect()
    }
}

/// Result of [`normalize_minmax`].
#[derive(Clone, Debug)]
pub struct Normalized {
    pub batch: ImageBatch,
    /// Set when the input was constant and every pixel was mapped to the
    /// midpoint of the target range.
    pub degenerate: bool,
}

/// Global (whole-batch) min-max scaling into `[lo, hi]`.
pub fn normalize_minmax(batch: &ImageBatch, lo: f32, hi: f32) -> Result<Normalized> {
    if !(lo < hi) {
        return Err(Error::Parameter(format!("invalid target range ({lo}, {hi})")));
    }
    let data = batch.pixels.data();
    let (mn, mx) = data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let degenerate = data.is_empty() || mn == mx;
    let out: Vec<f32> = if degenerate {
        let mid = ((lo as f64 + hi as f64) / 2.0) as f32;
        vec![mid; data.len()]
    } else {
        let (mn, mx, lo64, hi64) = (mn as f64, mx as f64, lo as f64, hi as f64);
        data.iter()
            .map(|&v| {
                let u = (v as f64 - mn) / (mx - mn);
                ((lo64 + u * (hi64 - lo64)) as f32).clamp(lo, hi)
            })
            .collect()
    };
    let pixels = Tensor::new(batch.pixels.shape().to_vec(), out)?;
    Ok(Normalized {
        batch: ImageBatch {
            pixels,
            value_range: (lo, hi),
            ..batch.clone()
        },
        degenerate,
    })
}

/// Bilinear resampling with half-pixel centers (align-corners = false).
pub fn resize_bilinear(batch: &ImageBatch, out_h: usize, out_w: usize) -> Result<ImageBatch> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Parameter("output size must be at least 1x1".into()));
    }
    if out_h == batch.height && out_w == batch.width {
        return Ok(batch.clone());
    }
    let (h, w) = (batch.height, batch.width);
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let ys = taps(h, out_h);
    let xs = taps(w, out_w);
    let planes = batch.count * batch.channels;
    let src = batch.pixels.data();
    let mut out = Vec::with_capacity(planes * out_h * out_w);
    for p in 0..planes {
        let plane = &src[p * h * w..(p + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let v00 = plane[y0 * w + x0] as f64;
                let v01 = plane[y0 * w + x1] as f64;
                let v10 = plane[y1 * w + x0] as f64;
                let v11 = plane[y1 * w + x1] as f64;
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bot = v10 * (1.0 - fx) + v11 * fx;
                out.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    let pixels = Tensor::new(vec![batch.count, batch.channels, out_h, out_w], out)?;
    Ok(ImageBatch {
        height: out_h,
        width: out_w,
        pixels,
        ..batch.clone()
    })
}

/// `[count, c, h, w]` to `[count, c*h*w]`, channel-major within each row.
pub fn flatten_images(batch: &ImageBatch) -> Tensor {
    batch
        .pixels
        .clone()
        .reshape(vec![batch.count, batch.pixels_per_image()])
        .expect("image batch shape is consistent")
}

pub fn unflatten_images(
    flat: &Tensor,
    channels: usize,
    height: usize,
    width: usize,
    value_range: (f32, f32),
) -> Result<ImageBatch> {
    if flat.rank() != 2 || flat.shape()[1] != channels * height * width {
        return Err(Error::shape(
            "unflatten",
            format!(
                "{:?} is not [n, {}]",
                flat.shape(),
                channels * height * width
            ),
        ));
    }
    let n = flat.shape()[0];
    ImageBatch::new(
        flat.clone().reshape(vec![n, channels, height, width])?,
        value_range,
    )
}

/// Tiles a batch into a single image with `cols` columns and a one-pixel
/// gutter filled with the low end of the value range.
pub fn tile_grid(batch: &ImageBatch, cols: usize) -> Result<ImageBatch> {
    if batch.count == 0 || cols == 0 {
        return Err(Error::Parameter("grid needs at least one image and column".into()));
    }
    let cols = cols.min(batch.count);
    let rows = batch.count.div_ceil(cols);
    let (h, w, c) = (batch.height, batch.width, batch.channels);
    let gh = rows * (h + 1) + 1;
    let gw = cols * (w + 1) + 1;
    let mut out = vec![batch.value_range.0; c * gh * gw];
    for i in 0..batch.count {
        let (r, q) = (i / cols, i % cols);
        let img = batch.image(i);
        for ch in 0..c {
            for y in 0..h {
                let dst = ch * gh * gw + (r * (h + 1) + 1 + y) * gw + q * (w + 1) + 1;
                let src = ch * h * w + y * w;
                out[dst..dst + w].copy_from_slice(&img[src..src + w]);
            }
        }
    }
    ImageBatch::new(Tensor::new(vec![1, c, gh, gw], out)?, batch.value_range)
}

/// Writes image 0 of the batch as binary PGM (1 channel) or PPM (3 channels).
pub fn write_pnm(batch: &ImageBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(batch, 0)?).map_err(|e| Error::io(path, e))
}

pub fn encode_pnm(batch: &ImageBatch, index: usize) -> Result<Vec<u8>> {
    if index >= batch.count {
        return Err(Error::Parameter(format!("image index {index} out of range")));
    }
    let (h, w, c) = (batch.height, batch.width, batch.channels);
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let (lo, hi) = (batch.value_range.0 as f64, batch.value_range.1 as f64);
    let img = batch.image(index);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let v = img[ch * h * w + y * w + x] as f64;
                let b = ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0);
                out.push(b as u8);
            }
        }
    }
    Ok(out)
}

/// Reads a binary PGM/PPM (maxval 255) into a one-image batch in `[0, 255]`.
pub fn read_pnm(path: impl AsRef<Path>) -> Result<ImageBatch> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBatch> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PNM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(Error::Format(format!("unsupported PNM magic {m}"))),
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PNM header field {s:?}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("maxval {maxval} unsupported, need 255")));
    }
    let n = w * h * channels;
    if bytes.len() < pos + n {
        return Err(Error::Format("truncated PNM payload".into()));
    }
    let raw = &bytes[pos..pos + n];
    let mut data = vec![0f32; n];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..channels {
                data[ch * h * w + y * w + x] = raw[(y * w + x) * channels + ch] as f32;
            }
        }
    }
    ImageBatch::new(Tensor::new(vec![1, channels, h, w], data)?, (0.0, 255.0))
}

/// Concatenates single images of identical geometry into one batch.
pub fn stack_images(images: &[ImageBatch]) -> Result<ImageBatch> {
    let first = images
        .first()
        .ok_or_else(|| Error::Parameter("no images to stack".into()))?;
    let mut data = Vec::new();
    let mut count = 0;
    for im in images {
        if (im.channels, im.height, im.width) != (first.channels, first.height, first.width) {
            return Err(Error::shape(
                "stack images",
                format!(
                    "{}x{}x{} differs from {}x{}x{}",
                    im.channels, im.height, im.width, first.channels, first.height, first.width
                ),
            ));
        }
        data.extend_from_slice(im.pixels.data());
        count += im.count;
    }
    let lo = images.iter().map(|b| b.value_range.0).fold(f32::INFINITY, f32::min);
    let hi = images.iter().map(|b| b.value_range.1).fold(f32::NEG_INFINITY, f32::max);
    ImageBatch::new(
        Tensor::new(vec![count, first.channels, first.height, first.width], data)?,
        (lo, hi),
    )
}
