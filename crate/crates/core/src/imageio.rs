//! Image decoding/encoding and the pixel-domain transforms applied before
//! spectral analysis: grayscale conversion, center cropping and JPEG
//! re-compression.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// ITU-R BT.601 luma weights for R, G and B.
pub const GRAYSCALE_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Qualities at or above this encode chroma at full resolution (4:4:4).
pub const FULL_CHROMA_QUALITY: u8 = 95;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("invalid dimensions {width}x{height}, both must be at least 2")]
    InvalidDimensions { width: usize, height: usize },
    #[error("data length {actual} does not match {width}x{height}x{channels}")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        actual: usize,
    },
    #[error("unsupported channel count {0}, expected 1 or 3")]
    UnsupportedChannelCount(usize),
    #[error("crop size {size} does not fit a {width}x{height} image (minimum 2)")]
    CropLargerThanImage {
        size: usize,
        width: usize,
        height: usize,
    },
    #[error("JPEG quality {0} outside [1, 100]")]
    InvalidQuality(u8),
    #[error("encode failure: {0}")]
    EncodeFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether pixel values are 8-bit integers or unquantized reals.
///
/// Both kinds share the same intensity scale of `[0, 255]`; a `Real` tensor
/// (for example the output of an inverse transform) may stray outside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelKind {
    Integer8,
    Real,
}

/// Interleaved row-major raster: sample `(x, y, c)` lives at
/// `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
    kind: PixelKind,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<T>,
        kind: PixelKind,
    ) -> Result<Self, ImageError> {
        if width < 2 || height < 2 {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::UnsupportedChannelCount(channels));
        }
        if data.len() != width * height * channels {
            return Err(ImageError::DataLength {
                width,
                height,
                channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            kind,
        })
    }

    /// Builds a tensor from a per-sample generator `f(x, y, c)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        kind: PixelKind,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data, kind)
    }

    pub fn from_u8(
        width: usize,
        height: usize,
        channels: usize,
        bytes: &[u8],
    ) -> Result<Self, ImageError> {
        let data = bytes.iter().map(|&b| T::lit(f64::from(b))).collect();
        Self::new(width, height, channels, data, PixelKind::Integer8)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kind(&self) -> PixelKind {
        self.kind
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Extracts one channel as a single-channel tensor.
    pub fn channel(&self, c: usize) -> Self {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Self {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            kind: self.kind,
        }
    }

    /// Interleaves single-channel planes of identical size.
    pub fn from_planes(planes: &[Self]) -> Result<Self, ImageError> {
        let channels = planes.len();
        let first = planes.first().ok_or(ImageError::UnsupportedChannelCount(0))?;
        let (width, height) = (first.width, first.height);
        let kind = if planes.iter().all(|p| p.kind == PixelKind::Integer8) {
            PixelKind::Integer8
        } else {
            PixelKind::Real
        };
        let mut data = Vec::with_capacity(width * height * channels);
        for i in 0..width * height {
            for p in planes {
                if p.channels != 1 || p.width != width || p.height != height {
                    return Err(ImageError::UnsupportedChannelCount(p.channels));
                }
                data.push(p.data[i]);
            }
        }
        Self::new(width, height, channels, data, kind)
    }

    /// Clamps to `[0, 255]` and rounds half-up. Returns the quantized tensor
    /// and the number of samples that had to be clipped.
    pub fn quantize(&self) -> (Self, usize) {
        let lo = T::zero();
        let hi = T::lit(255.0);
        let half = T::lit(0.5);
        let mut clipped = 0;
        let data = self
            .data
            .iter()
            .map(|&v| {
                if v < lo || v > hi {
                    clipped += 1;
                }
                (v.max(lo).min(hi) + half).floor()
            })
            .collect();
        let out = Self {
            data,
            kind: PixelKind::Integer8,
            ..*self
        };
        (out, clipped)
    }

    fn to_bytes(&self) -> Vec<u8> {
        let (q, _) = self.quantize();
        q.data
            .iter()
            .map(|v| v.to_u8().unwrap_or(0))
            .collect()
    }

    fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = self.to_bytes();
        match self.channels {
            1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("sized buffer")),
            _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("sized buffer")),
        }
    }

    /// Writes a lossless PNG (values are quantized to 8 bits first).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        self.to_dynamic()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => ImageError::Io(io),
                other => ImageError::EncodeFailure(other.to_string()),
            })
    }

    /// Writes a baseline JPEG at the given quality.
    pub fn save_jpeg(
        &self,
        path: impl AsRef<Path>,
        quality: CompressionQuality,
    ) -> Result<(), ImageError> {
        let bytes = encode_jpeg(self, quality)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

/// JPEG quality percentage in `[1, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CompressionQuality(u8);

impl CompressionQuality {
    pub const MAX: Self = Self(100);

    pub fn new(quality: u8) -> Result<Self, ImageError> {
        if (1..=100).contains(&quality) {
            Ok(Self(quality))
        } else {
            Err(ImageError::InvalidQuality(quality))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Chroma subsampling used by [`recompress_jpeg`] at this quality.
    pub fn chroma_subsampling(self) -> &'static str {
        if self.0 >= FULL_CHROMA_QUALITY {
            "4:4:4"
        } else {
            "4:2:0"
        }
    }
}

impl TryFrom<u8> for CompressionQuality {
    type Error = ImageError;

    fn try_from(q: u8) -> Result<Self, Self::Error> {
        Self::new(q)
    }
}

impl From<CompressionQuality> for u8 {
    fn from(q: CompressionQuality) -> u8 {
        q.0
    }
}

/// Decodes a PNG or JPEG file. Color images become 8-bit RGB (alpha dropped,
/// 16-bit samples down-converted); grayscale images stay single-channel.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageTensor<T>, ImageError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(ImageError::FileNotFound(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    let format = image::guess_format(&bytes)
        .map_err(|_| ImageError::UnsupportedFormat(path.display().to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(ImageError::UnsupportedFormat(format!("{format:?}")));
    }
    let decoded = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| ImageError::CorruptImage(format!("{}: {e}", path.display())))?;
    from_dynamic(decoded)
}

fn from_dynamic<T: Scalar>(img: DynamicImage) -> Result<ImageTensor<T>, ImageError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        ImageTensor::from_u8(w, h, 3, rgb.as_raw())
    } else {
        let luma = img.to_luma8();
        ImageTensor::from_u8(w, h, 1, luma.as_raw())
    }
}

/// Luma conversion with BT.601 weights. Integer images are rounded half-up;
/// real-valued images are left unrounded. Single-channel input is returned
/// unchanged.
pub fn to_grayscale<T: Scalar>(img: &ImageTensor<T>) -> Result<ImageTensor<T>, ImageError> {
    match img.channels {
        1 => Ok(img.clone()),
        3 => {
            let [wr, wg, wb] = GRAYSCALE_WEIGHTS.map(T::lit);
            let half = T::lit(0.5);
            let data = img
                .data
                .chunks_exact(3)
                .map(|px| {
                    let luma = wr * px[0] + wg * px[1] + wb * px[2];
                    match img.kind {
                        PixelKind::Integer8 => (luma + half).floor(),
                        PixelKind::Real => luma,
                    }
                })
                .collect();
            ImageTensor::new(img.width, img.height, 1, data, img.kind)
        }
        n => Err(ImageError::UnsupportedChannelCount(n)),
    }
}

/// Square window of side `size` centered in the image, with the offset
/// `floor((dim - size) / 2)` on each axis.
pub fn center_crop<T: Scalar>(
    img: &ImageTensor<T>,
    size: usize,
) -> Result<ImageTensor<T>, ImageError> {
    if size < 2 || size > img.width.min(img.height) {
        return Err(ImageError::CropLargerThanImage {
            size,
            width: img.width,
            height: img.height,
        });
    }
    let x0 = (img.width - size) / 2;
    let y0 = (img.height - size) / 2;
    let ch = img.channels;
    let mut data = Vec::with_capacity(size * size * ch);
    for y in y0..y0 + size {
        let start = (y * img.width + x0) * ch;
        data.extend_from_slice(&img.data[start..start + size * ch]);
    }
    ImageTensor::new(size, size, ch, data, img.kind)
}

fn encode_jpeg<T: Scalar>(
    img: &ImageTensor<T>,
    quality: CompressionQuality,
) -> Result<Vec<u8>, ImageError> {
    let bytes = img.to_bytes();
    let (w, h) = (
        u16::try_from(img.width).map_err(|e| ImageError::EncodeFailure(e.to_string()))?,
        u16::try_from(img.height).map_err(|e| ImageError::EncodeFailure(e.to_string()))?,
    );
    let mut out = Vec::new();
    let mut encoder = Encoder::new(&mut out, quality.get());
    encoder.set_sampling_factor(if quality.get() >= FULL_CHROMA_QUALITY {
        SamplingFactor::R_4_4_4
    } else {
        SamplingFactor::R_4_2_0
    });
    let color = if img.channels == 1 {
        ColorType::Luma
    } else {
        ColorType::Rgb
    };
    encoder
        .encode(&bytes, w, h, color)
        .map_err(|e| ImageError::EncodeFailure(e.to_string()))?;
    Ok(out)
}

/// Round-trips the image through a baseline JPEG encoder at quality `q`
/// (IJG quantization scaling; 4:2:0 chroma below quality 95, 4:4:4 from 95
/// up) and decodes it back.
pub fn recompress_jpeg<T: Scalar>(
    img: &ImageTensor<T>,
    q: CompressionQuality,
) -> Result<ImageTensor<T>, ImageError> {
    let bytes = encode_jpeg(img, q)?;
    let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Jpeg)
        .map_err(|e| ImageError::CorruptImage(e.to_string()))?;
    let (w, h) = (img.width as u32, img.height as u32);
    match img.channels {
        1 => {
            let luma = decoded.to_luma8();
            debug_assert_eq!(luma.dimensions(), (w, h));
            ImageTensor::from_u8(img.width, img.height, 1, luma.as_raw())
        }
        _ => {
            let rgb = decoded.to_rgb8();
            debug_assert_eq!(rgb.dimensions(), (w, h));
            ImageTensor::from_u8(img.width, img.height, 3, rgb.as_raw())
        }
    }
}

/// Decodes an in-memory PNG or JPEG buffer.
pub fn decode_image<T: Scalar>(bytes: &[u8]) -> Result<ImageTensor<T>, ImageError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(ImageError::Io)?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        other => return Err(ImageError::UnsupportedFormat(format!("{other:?}"))),
    }
    let decoded = reader
        .decode()
        .map_err(|e| ImageError::CorruptImage(e.to_string()))?;
    from_dynamic(decoded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImageTensor<f64> {
        ImageTensor::from_fn(w, h, 1, PixelKind::Integer8, |x, y, _| (y * w + x) as f64).unwrap()
    }

    #[test]
    fn rejects_degenerate_size() {
        let err = ImageTensor::<f64>::from_u8(1, 1, 3, &[255, 255, 255]).unwrap_err();
        assert!(matches!(err, ImageError::InvalidDimensions { width: 1, height: 1 }));
    }

    #[test]
    fn one_pixel_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        RgbImage::from_pixel(1, 1, image::Rgb([255, 255, 255]))
            .save(&path)
            .unwrap();
        let err = load_image::<f64>(&path).unwrap_err();
        assert!(matches!(err, ImageError::InvalidDimensions { .. }));
    }

    #[test]
    fn black_png_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("black.png");
        RgbImage::new(2, 2).save(&path).unwrap();
        let img = load_image::<f64>(&path).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 3));
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alpha_and_sixteen_bit_are_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba16.png");
        let px = image::Rgba([65535u16, 0, 32896, 1000]);
        image::ImageBuffer::<image::Rgba<u16>, _>::from_pixel(3, 2, px)
            .save(&path)
            .unwrap();
        let img = load_image::<f64>(&path).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(&img.data()[..3], &[255.0, 0.0, 128.0]);
    }

    #[test]
    fn missing_and_unsupported_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image::<f64>(dir.path().join("nope.png")),
            Err(ImageError::FileNotFound(_))
        ));
        let txt = dir.path().join("notes.png");
        std::fs::write(&txt, b"definitely not an image").unwrap();
        assert!(matches!(
            load_image::<f64>(&txt),
            Err(ImageError::UnsupportedFormat(_))
        ));
        let bmp = dir.path().join("x.bmp");
        std::fs::write(&bmp, b"BM\x3a\0\0\0\0\0\0\0\x36\0\0\0").unwrap();
        assert!(matches!(
            load_image::<f64>(&bmp),
            Err(ImageError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn truncated_png_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.png");
        let img = ramp(16, 16);
        img.save_png(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_image::<f64>(&path),
            Err(ImageError::CorruptImage(_))
        ));
    }

    #[test]
    fn grayscale_weights() {
        let img =
            ImageTensor::<f64>::from_u8(2, 2, 3, &[255, 0, 0, 9, 9, 9, 0, 255, 0, 0, 0, 255])
                .unwrap();
        let g = to_grayscale(&img).unwrap();
        // Reference: Pillow's fixed-point L conversion gives 76 / 9 / 150 / 29.
        assert_eq!(g.data(), &[76.0, 9.0, 150.0, 29.0]);
        assert_eq!(g.channels(), 1);
        assert_eq!(to_grayscale(&g).unwrap(), g);
    }

    #[test]
    fn crop_offsets() {
        let img = ramp(4, 4);
        let c = center_crop(&img, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
        assert_eq!(center_crop(&img, 4).unwrap(), img);
        assert!(matches!(
            center_crop(&img, 5),
            Err(ImageError::CropLargerThanImage { .. })
        ));
        assert!(center_crop(&img, 1).is_err());

        let big = ramp(1024, 1024);
        let c = center_crop(&big, 768).unwrap();
        assert_eq!(c.width(), 768);
        assert_eq!(c.get(0, 0, 0), (128 * 1024 + 128) as f64);
    }

    #[test]
    fn quality_bounds() {
        assert!(CompressionQuality::new(0).is_err());
        assert!(CompressionQuality::new(101).is_err());
        assert_eq!(CompressionQuality::new(85).unwrap().chroma_subsampling(), "4:2:0");
        assert_eq!(CompressionQuality::new(95).unwrap().chroma_subsampling(), "4:4:4");
    }

    #[test]
    fn uniform_gray_survives_jpeg() {
        let img =
            ImageTensor::<f64>::from_fn(24, 16, 3, PixelKind::Integer8, |_, _, _| 128.0).unwrap();
        for q in [1u8, 50, 85, 95, 100] {
            let out = recompress_jpeg(&img, CompressionQuality::new(q).unwrap()).unwrap();
            assert_eq!(out, img, "quality {q}");
        }
    }

    #[test]
    fn jpeg_at_full_quality_is_lossy_but_close() {
        let img = ImageTensor::<f64>::from_fn(64, 48, 3, PixelKind::Integer8, |x, y, c| {
            ((x * 37 + y * 11 + c * 71) % 256) as f64
        })
        .unwrap();
        let out = recompress_jpeg(&img, CompressionQuality::MAX).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (64, 48, 3));
        let max_dev = img
            .data()
            .iter()
            .zip(out.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_dev > 0.0);
        assert!(max_dev < 32.0, "max deviation {max_dev}");
    }

    #[test]
    fn quantize_counts_clipping() {
        let img = ImageTensor::new(2, 2, 1, vec![-3.0, 0.5, 254.49, 300.0], PixelKind::Real).unwrap();
        let (q, clipped) = img.quantize();
        assert_eq!(q.data(), &[0.0, 1.0, 254.0, 255.0]);
        assert_eq!(clipped, 2);
        assert_eq!(q.kind(), PixelKind::Integer8);
    }

    #[test]
    fn png_round_trip_and_single_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.png");
        let img = ramp(8, 8);
        img.save_png(&path).unwrap();
        assert_eq!(load_image::<f64>(&path).unwrap(), img);
        let single = load_image::<f32>(&path).unwrap();
        assert_eq!(single.get(7, 7, 0), 63.0);
    }

    #[test]
    fn planes_round_trip() {
        let img = ImageTensor::<f64>::from_fn(5, 3, 3, PixelKind::Integer8, |x, y, c| {
            (x + 10 * y + 100 * c) as f64
        })
        .unwrap();
        let planes: Vec<_> = (0..3).map(|c| img.channel(c)).collect();
        assert_eq!(ImageTensor::from_planes(&planes).unwrap(), img);
    }
}
