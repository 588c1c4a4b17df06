//! Image I/O, BT.601 color conversion, Matlab-convention bicubic resampling
//! with antialiasing, patch extraction and the packed LR-HR dataset format.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    Srgb,
    /// Single luma plane.
    Luma,
    YCbCr,
}

/// 8-bit image, row-major, interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub colorspace: ColorSpace,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, colorspace: ColorSpace, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::invalid(
                "image",
                format!("{}x{}x{} image needs {} samples, got {}", width, height, channels, width * height * channels, data.len()),
            ));
        }
        Ok(Image { width, height, channels, colorspace, data })
    }

    /// One channel as a f64 plane in [0,255].
    pub fn plane_f64(&self, channel: usize) -> Vec<f64> {
        self.data[channel..]
            .iter()
            .step_by(self.channels)
            .map(|&v| v as f64)
            .collect()
    }

    pub fn from_planes_f64(width: usize, height: usize, colorspace: ColorSpace, planes: &[Vec<f64>]) -> Image {
        let channels = planes.len();
        let mut data = vec![0u8; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = quantize(v);
            }
        }
        Image { width, height, channels, colorspace, data }
    }
}

/// Matlab-style rounding: half away from zero, clamped to [0,255].
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn load_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| Error::Png { path: path.to_path_buf(), source: e })?;
    use image::DynamicImage::*;
    let (width, height) = (dynimg.width() as usize, dynimg.height() as usize);
    match dynimg {
        ImageLuma8(img) => Image::new(width, height, 1, ColorSpace::Luma, img.into_raw()),
        ImageLumaA8(img) => {
            let data = img.into_raw().chunks_exact(2).map(|p| p[0]).collect();
            Image::new(width, height, 1, ColorSpace::Luma, data)
        }
        ImageRgb8(img) => Image::new(width, height, 3, ColorSpace::Srgb, img.into_raw()),
        ImageRgba8(img) => {
            let mut data = Vec::with_capacity(width * height * 3);
            for p in img.into_raw().chunks_exact(4) {
                data.extend_from_slice(&p[..3]);
            }
            Image::new(width, height, 3, ColorSpace::Srgb, data)
        }
        other => Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            msg: format!("unsupported pixel format {:?} (only 8-bit gray/RGB)", other.color()),
        }),
    }
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let color = match img.channels {
        1 => image::ColorType::L8,
        3 => image::ColorType::Rgb8,
        n => return Err(Error::invalid("save_png", format!("cannot encode {n}-channel image"))),
    };
    image::save_buffer(path, &img.data, img.width as u32, img.height as u32, color)
        .map_err(|e| Error::Png { path: path.to_path_buf(), source: e })
}

/// BT.601 studio-swing conversion (Matlab `rgb2ycbcr` constants).
pub fn rgb_to_ycbcr(img: &Image) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::invalid("rgb_to_ycbcr", format!("expected 3 channels, got {}", img.channels)));
    }
    let mut out = vec![0u8; img.data.len()];
    for (dst, px) in out.chunks_exact_mut(3).zip(img.data.chunks_exact(3)) {
        let r = px[0] as f64 / 255.0;
        let g = px[1] as f64 / 255.0;
        let b = px[2] as f64 / 255.0;
        dst[0] = quantize(16.0 + 65.481 * r + 128.553 * g + 24.966 * b);
        dst[1] = quantize(128.0 - 37.797 * r - 74.203 * g + 112.0 * b);
        dst[2] = quantize(128.0 + 112.0 * r - 93.786 * g - 18.214 * b);
    }
    Image::new(img.width, img.height, 3, ColorSpace::YCbCr, out)
}

pub fn ycbcr_to_rgb(img: &Image) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::invalid("ycbcr_to_rgb", format!("expected 3 channels, got {}", img.channels)));
    }
    let mut out = vec![0u8; img.data.len()];
    for (dst, px) in out.chunks_exact_mut(3).zip(img.data.chunks_exact(3)) {
        let y = px[0] as f64 - 16.0;
        let cb = px[1] as f64 - 128.0;
        let cr = px[2] as f64 - 128.0;
        dst[0] = quantize(255.0 / 219.0 * y + 255.0 / 224.0 * 1.402 * cr);
        dst[1] = quantize(
            255.0 / 219.0 * y
                - 255.0 / 224.0 * 1.772 * (0.114 / 0.587) * cb
                - 255.0 / 224.0 * 1.402 * (0.299 / 0.587) * cr,
        );
        dst[2] = quantize(255.0 / 219.0 * y + 255.0 / 224.0 * 1.772 * cb);
    }
    Image::new(img.width, img.height, 3, ColorSpace::Srgb, out)
}

/// Luma plane of an image: identity for single-channel input.
pub fn to_luma(img: &Image) -> Result<Image> {
    match img.channels {
        1 => Ok(Image { colorspace: ColorSpace::Luma, ..img.clone() }),
        3 => {
            let ycbcr = rgb_to_ycbcr(img)?;
            let y: Vec<u8> = ycbcr.data.iter().step_by(3).copied().collect();
            Image::new(img.width, img.height, 1, ColorSpace::Luma, y)
        }
        n => Err(Error::invalid("to_luma", format!("unsupported channel count {n}"))),
    }
}

/// Keys cubic kernel, a = -0.5.
fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        1.5 * ax * ax * ax - 2.5 * ax * ax + 1.0
    } else if ax < 2.0 {
        -0.5 * ax * ax * ax + 2.5 * ax * ax - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// Per-output-pixel source indices (clamped to the border) and normalized
/// weights for one axis, Matlab `imresize` convention: half-pixel-centred
/// mapping, kernel stretched by `1/scale` when downscaling (antialiasing).
fn resample_taps(in_len: usize, out_len: usize) -> Vec<(Vec<usize>, Vec<f64>)> {
    let scale = out_len as f64 / in_len as f64;
    let (kernel_width, kernel_scale) = if scale < 1.0 { (4.0 / scale, scale) } else { (4.0, 1.0) };
    let tap_count = kernel_width.ceil() as isize + 2;
    let mut taps = Vec::with_capacity(out_len);
    for out in 0..out_len {
        // 1-based source coordinate of this output pixel's centre.
        let u = (out as f64 + 1.0) / scale + 0.5 * (1.0 - 1.0 / scale);
        let left = (u - kernel_width / 2.0).floor() as isize;
        let mut indices = Vec::with_capacity(tap_count as usize);
        let mut weights = Vec::with_capacity(tap_count as usize);
        let mut total = 0.0;
        for j in 0..tap_count {
            let idx = left + j;
            let w = kernel_scale * cubic(kernel_scale * (u - idx as f64));
            total += w;
            indices.push(idx.clamp(1, in_len as isize) as usize - 1);
            weights.push(w);
        }
        for w in &mut weights {
            *w /= total;
        }
        taps.push((indices, weights));
    }
    taps
}

fn resize_axis(src: &[f64], in_w: usize, taps: &[(Vec<usize>, Vec<f64>)], out_h: usize) -> Vec<f64> {
    // Resizes the vertical axis; callers transpose around this for horizontal.
    let mut out = vec![0.0; in_w * out_h];
    for (oy, (indices, weights)) in taps.iter().enumerate() {
        for x in 0..in_w {
            let mut acc = 0.0;
            for (idx, w) in indices.iter().zip(weights) {
                acc += w * src[idx * in_w + x];
            }
            out[oy * in_w + x] = acc;
        }
    }
    debug_assert_eq!(out.len(), in_w * out_h);
    out
}

fn transpose(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = src[y * w + x];
        }
    }
    out
}

/// Resamples one float plane (row-major, `in_w` columns), height axis first.
pub fn resize_plane_f64(
    src: &[f64],
    (in_w, in_h): (usize, usize),
    (out_w, out_h): (usize, usize),
) -> Vec<f64> {
    let v_taps = resample_taps(in_h, out_h);
    let tmp = resize_axis(src, in_w, &v_taps, out_h);
    let h_taps = resample_taps(in_w, out_w);
    let tmp_t = transpose(&tmp, in_w, out_h);
    let out_t = resize_axis(&tmp_t, out_h, &h_taps, out_w);
    transpose(&out_t, out_h, out_w)
}

pub fn bicubic_resize(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("bicubic_resize", "zero output extent"));
    }
    let planes: Vec<Vec<f64>> = (0..img.channels)
        .map(|c| resize_plane_f64(&img.plane_f64(c), (img.width, img.height), (out_w, out_h)))
        .collect();
    Ok(Image::from_planes_f64(out_w, out_h, img.colorspace, &planes))
}

/// Crops bottom/right so both extents are multiples of `r`.
pub fn modcrop(img: &Image, r: usize) -> Result<Image> {
    if r == 0 {
        return Err(Error::invalid("modcrop", "rate must be >= 1"));
    }
    let w = img.width / r * r;
    let h = img.height / r * r;
    if w == 0 || h == 0 {
        return Err(Error::invalid(
            "modcrop",
            format!("{}x{} image smaller than rate {r}", img.width, img.height),
        ));
    }
    if (w, h) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let mut data = Vec::with_capacity(w * h * img.channels);
    for y in 0..h {
        let row = &img.data[y * img.width * img.channels..];
        data.extend_from_slice(&row[..w * img.channels]);
    }
    Image::new(w, h, img.channels, img.colorspace, data)
}

fn crop(img: &Image, x0: usize, y0: usize, w: usize, h: usize) -> Image {
    let mut data = Vec::with_capacity(w * h * img.channels);
    for y in y0..y0 + h {
        let row = &img.data[(y * img.width + x0) * img.channels..];
        data.extend_from_slice(&row[..w * img.channels]);
    }
    Image { width: w, height: h, channels: img.channels, colorspace: img.colorspace, data }
}

/// One LR-HR training pair; `lr` is the bicubic 1/`scale` downscale of `hr`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub hr: Image,
    pub lr: Image,
    pub scale: usize,
}

/// Regular row-major grid of HR crops, each downscaled to its LR counterpart.
pub fn extract_pairs(hr_image: &Image, scale: usize, patch: usize, stride: usize) -> Result<Vec<PatchPair>> {
    if !patch.is_multiple_of(scale) {
        return Err(Error::invalid(
            "extract_pairs",
            format!("patch {patch} not divisible by scale {scale}"),
        ));
    }
    if stride == 0 {
        return Err(Error::invalid("extract_pairs", "stride must be >= 1"));
    }
    let img = modcrop(hr_image, scale)?;
    let mut pairs = Vec::new();
    if img.width < patch || img.height < patch {
        return Ok(pairs);
    }
    let mut y = 0;
    while y + patch <= img.height {
        let mut x = 0;
        while x + patch <= img.width {
            let hr = crop(&img, x, y, patch, patch);
            let lr = bicubic_resize(&hr, patch / scale, patch / scale)?;
            pairs.push(PatchPair { hr, lr, scale });
            x += stride;
        }
        y += stride;
    }
    Ok(pairs)
}

/// Packed pair container: magic `SRDP`, u32 version, u32 scale, u32 HR patch
/// extent, u32 channels, u64 pair count, then raw HR/LR sample records.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPack {
    pub scale: usize,
    pub patch: usize,
    pub channels: usize,
    pub pairs: Vec<PatchPair>,
}

pub const PACK_MAGIC: &[u8; 4] = b"SRDP";
pub const PACK_VERSION: u32 = 1;

pub fn pack_dataset(pairs: &[PatchPair], scale: usize, patch: usize, channels: usize, path: &Path) -> Result<()> {
    for pair in pairs {
        if pair.scale != scale
            || pair.hr.width != patch
            || pair.hr.height != patch
            || pair.hr.channels != channels
            || pair.lr.width != patch / scale
            || pair.lr.height != patch / scale
        {
            return Err(Error::DataMismatch(format!(
                "heterogeneous pair: hr {}x{}x{}, lr {}x{}, scale {}",
                pair.hr.width, pair.hr.height, pair.hr.channels, pair.lr.width, pair.lr.height, pair.scale
            )));
        }
    }
    let lr_patch = patch / scale;
    let mut buf = PACK_MAGIC.to_vec();
    buf.extend_from_slice(&PACK_VERSION.to_le_bytes());
    buf.extend_from_slice(&(scale as u32).to_le_bytes());
    buf.extend_from_slice(&(patch as u32).to_le_bytes());
    buf.extend_from_slice(&(channels as u32).to_le_bytes());
    buf.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
    for pair in pairs {
        debug_assert_eq!(pair.lr.width, lr_patch);
        buf.extend_from_slice(&pair.hr.data);
        buf.extend_from_slice(&pair.lr.data);
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<DatasetPack> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| Error::format(path, msg.to_string());
    if buf.len() < 28 {
        return Err(fail("truncated header"));
    }
    if &buf[..4] != PACK_MAGIC {
        return Err(fail("bad magic, not a dataset pack"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != PACK_VERSION {
        return Err(Error::format(path, format!("pack version {version}, this build reads version {PACK_VERSION}")));
    }
    let scale = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let patch = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let channels = u32::from_le_bytes(buf[16..20].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(buf[20..28].try_into().unwrap()) as usize;
    if scale == 0 || patch == 0 || channels == 0 || !patch.is_multiple_of(scale) {
        return Err(fail("inconsistent pack header"));
    }
    let lr_patch = patch / scale;
    let hr_len = patch * patch * channels;
    let lr_len = lr_patch * lr_patch * channels;
    let record = hr_len + lr_len;
    if buf.len() != 28 + count * record {
        return Err(fail("payload length does not match pair count"));
    }
    let colorspace = if channels == 1 { ColorSpace::Luma } else { ColorSpace::Srgb };
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let base = 28 + i * record;
        let hr = Image::new(patch, patch, channels, colorspace, buf[base..base + hr_len].to_vec())?;
        let lr = Image::new(lr_patch, lr_patch, channels, colorspace, buf[base + hr_len..base + record].to_vec())?;
        pairs.push(PatchPair { hr, lr, scale });
    }
    Ok(DatasetPack { scale, patch, channels, pairs })
}

/// Single-channel image to a `(1, 1, H, W)` tensor scaled to [0,1].
pub fn image_to_tensor<T: Scalar>(img: &Image) -> Result<Tensor<T>> {
    if img.channels != 1 {
        return Err(Error::invalid("image_to_tensor", "expected a single-channel image"));
    }
    let data = img.data.iter().map(|&v| T::from_f64(v as f64 / 255.0)).collect();
    Tensor::from_vec([1, 1, img.height, img.width], data)
}

/// `(1, 1, H, W)` tensor in [0,1] back to an 8-bit luma image.
pub fn tensor_to_image<T: Scalar>(t: &Tensor<T>) -> Result<Image> {
    let [n, c, h, w] = t.shape();
    if n != 1 || c != 1 {
        return Err(Error::ShapeMismatch { op: "tensor_to_image", expected: [1, 1, h, w], got: t.shape() });
    }
    let data = t.data().iter().map(|&v| quantize(v.to_f64() * 255.0)).collect();
    Image::new(w, h, 1, ColorSpace::Luma, data)
}
