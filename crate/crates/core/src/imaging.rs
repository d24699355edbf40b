//! Raster types shared by every stage: 8-bit RGB images, CIELAB images,
//! gradient maps and binary masks, plus PNG input/output.

use std::io::BufWriter;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageEncoder};
use thiserror::Error;

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid dimensions {width}x{height} for {len} pixels")]
    InvalidDimensions { width: usize, height: usize, len: usize },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unsupported bit depth ({color:?}); only 8-bit images are accepted")]
    UnsupportedDepth { path: String, color: ColorType },
    #[error("{path}: malformed image: {reason}")]
    Malformed { path: String, reason: String },
    #[error("{path}: encoding failed: {reason}")]
    Encode { path: String, reason: String },
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImagingError::InvalidDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single color.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self::new(width, height, vec![color; width * height]).expect("non-zero dimensions")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels).expect("non-zero dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, color: Rgb) {
        self.pixels[y * self.width + x] = color;
    }
}

/// Row-major CIELAB raster, `[L, a, b]` per pixel with L in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Non-negative gradient magnitude per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GradientMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(ImagingError::InvalidDimensions {
                width,
                height,
                len: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height]).expect("non-zero dimensions")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits).expect("non-zero dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

// sRGB primaries, D65 reference white.
const WHITE_X: f64 = 0.950_47;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.088_83;
const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let cube = f * f * f;
    if cube > EPSILON {
        cube
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

/// Converts a single sRGB pixel to CIELAB (D65).
pub fn rgb_pixel_to_lab(rgb: Rgb) -> [f64; 3] {
    let r = srgb_to_linear(rgb[0]);
    let g = srgb_to_linear(rgb[1]);
    let b = srgb_to_linear(rgb[2]);

    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;

    let fx = lab_f(x / WHITE_X);
    let fy = lab_f(y / WHITE_Y);
    let fz = lab_f(z / WHITE_Z);

    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`rgb_pixel_to_lab`], rounding to the nearest 8-bit value.
pub fn lab_pixel_to_rgb(lab: [f64; 3]) -> Rgb {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;

    let x = lab_f_inv(fx) * WHITE_X;
    let y = lab_f_inv(fy) * WHITE_Y;
    let z = lab_f_inv(fz) * WHITE_Z;

    let r = 3.240_454_2 * x - 1.537_138_5 * y - 0.498_531_4 * z;
    let g = -0.969_266_0 * x + 1.876_010_8 * y + 0.041_556_0 * z;
    let b = 0.055_643_4 * x - 0.204_025_9 * y + 1.057_225_2 * z;

    [r, g, b].map(|c| (linear_to_srgb(c) * 255.0).round().clamp(0.0, 255.0) as u8)
}

pub fn rgb_to_lab(img: &Image) -> LabImage {
    LabImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| rgb_pixel_to_lab(p)).collect(),
    }
}

pub fn lab_to_rgb(lab: &LabImage) -> Image {
    Image {
        width: lab.width,
        height: lab.height,
        pixels: lab.pixels.iter().map(|&p| lab_pixel_to_rgb(p)).collect(),
    }
}

fn sq_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Squared central differences over the full Lab vector, border pixels replicated.
pub fn gradient_magnitude(img: &LabImage) -> GradientMap {
    let (w, h) = (img.width, img.height);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let gx = sq_dist(img.get(right, y), img.get(left, y));
            let gy = sq_dist(img.get(x, down), img.get(x, up));
            values.push(gx + gy);
        }
    }
    GradientMap {
        width: w,
        height: h,
        values,
    }
}

/// The L channel as a grey-tone altitude map.
pub fn lightness(img: &LabImage) -> Vec<f64> {
    img.pixels.iter().map(|p| p[0]).collect()
}

fn io_err(path: &Path, source: std::io::Error) -> ImagingError {
    ImagingError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn decode(path: &Path) -> Result<DynamicImage, ImagingError> {
    let display = path.display().to_string();
    let reader = image::ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .with_guessed_format()
        .map_err(|e| io_err(path, e))?;
    reader.decode().map_err(|e| match e {
        image::ImageError::IoError(source) => match source.kind() {
            std::io::ErrorKind::UnexpectedEof => ImagingError::Malformed {
                path: display,
                reason: source.to_string(),
            },
            _ => io_err(path, source),
        },
        other => ImagingError::Malformed {
            path: display,
            reason: other.to_string(),
        },
    })
}

/// Loads an 8-bit RGB or RGBA PNG; alpha is discarded.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image, ImagingError> {
    let path = path.as_ref();
    let decoded = decode(path)?;
    let rgb = match decoded {
        DynamicImage::ImageRgb8(buf) => buf,
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            decoded.to_rgb8()
        }
        other => {
            return Err(ImagingError::UnsupportedDepth {
                path: path.display().to_string(),
                color: other.color(),
            })
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels = rgb.pixels().map(|p| p.0).collect();
    Image::new(w, h, pixels)
}

fn write_png(
    path: &Path,
    data: &[u8],
    width: usize,
    height: usize,
    color: image::ExtendedColorType,
) -> Result<(), ImagingError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let encoder = image::codecs::png::PngEncoder::new(BufWriter::new(file));
    encoder
        .write_image(data, width as u32, height as u32, color)
        .map_err(|e| ImagingError::Encode {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let data: Vec<u8> = img.pixels.iter().flatten().copied().collect();
    write_png(
        path.as_ref(),
        &data,
        img.width,
        img.height,
        image::ExtendedColorType::Rgb8,
    )
}

/// Writes a mask as an 8-bit grayscale PNG with values 0 / 255.
pub fn save_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let data: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_png(
        path.as_ref(),
        &data,
        mask.width,
        mask.height,
        image::ExtendedColorType::L8,
    )
}

/// Loads a mask PNG; any pixel with non-zero luma is set.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<Mask, ImagingError> {
    let path = path.as_ref();
    let decoded = decode(path)?;
    let luma = match decoded {
        DynamicImage::ImageLuma8(buf) => buf,
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            decoded.to_luma8()
        }
        other => {
            return Err(ImagingError::UnsupportedDepth {
                path: path.display().to_string(),
                color: other.color(),
            })
        }
    };
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    Mask::new(w, h, luma.pixels().map(|p| p.0[0] > 0).collect())
}

/// Writes 16-bit grayscale data.
pub(crate) fn save_gray16_png(
    values: &[u16],
    width: usize,
    height: usize,
    path: &Path,
) -> Result<(), ImagingError> {
    // The encoder expects native-endian u16 samples as bytes.
    let data: Vec<u8> = values.iter().flat_map(|v| v.to_ne_bytes()).collect();
    write_png(path, &data, width, height, image::ExtendedColorType::L16)
}

pub(crate) fn load_gray16_png(path: &Path) -> Result<(usize, usize, Vec<u16>), ImagingError> {
    match decode(path)? {
        DynamicImage::ImageLuma16(buf) => Ok((
            buf.width() as usize,
            buf.height() as usize,
            buf.pixels().map(|p| p.0[0]).collect(),
        )),
        other => Err(ImagingError::Malformed {
            path: path.display().to_string(),
            reason: format!("expected 16-bit grayscale labels, found {:?}", other.color()),
        }),
    }
}
