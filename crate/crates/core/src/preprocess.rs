//! Min-max normalization, bilinear resizing and the two training-time
//! augmentations (random rotation, random horizontal flip).

use std::path::Path;

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length every image is standardized to before feature extraction.
pub const STANDARD_SIZE: usize = 224;
/// Largest 8-bit channel value, the `x_max` of the normalization.
pub const PIXEL_MAX: f32 = 255.0;

/// Float RGB image in row-major HWC layout.
///
/// Values produced by [`normalize`] and every transform here stay in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl NormalizedImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Precondition(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Dimension {
                expected: width * height * 3,
                actual: pixels.len(),
            });
        }
        Ok(NormalizedImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        NormalizedImage {
            width,
            height,
            pixels: vec![value; width * height * 3],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    pixels.push(f(x, y, c));
                }
            }
        }
        NormalizedImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn is_standard(&self) -> bool {
        self.width == STANDARD_SIZE && self.height == STANDARD_SIZE
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    /// Channel-major copy (`3 x H x W`), the layout backbone graphs expect.
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; plane * 3];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = px[c];
            }
        }
        out
    }

    /// Back to 8 bits, rounding to the nearest level.
    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self
            .pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * PIXEL_MAX).round() as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }
}

/// Range normalization `(x - xmin) / (xmax - xmin)`.
pub fn minmax(x: f64, xmin: f64, xmax: f64) -> Result<f64> {
    if !(xmax > xmin) {
        return Err(Error::Degenerate(format!(
            "min-max range is empty: xmin={xmin}, xmax={xmax}"
        )));
    }
    Ok((x - xmin) / (xmax - xmin))
}

/// Divides every channel by 255 (`x_min = 0`, `x_max` = the 8-bit maximum).
pub fn normalize(image: &RgbImage) -> NormalizedImage {
    NormalizedImage {
        width: image.width() as usize,
        height: image.height() as usize,
        pixels: image.as_raw().iter().map(|&v| f32::from(v) / PIXEL_MAX).collect(),
    }
}

/// Bilinear resize with half-pixel centers and edge clamping.
///
/// Resizing to the source size is the identity.
pub fn resize(image: &NormalizedImage, width: usize, height: usize) -> Result<NormalizedImage> {
    if width == 0 || height == 0 {
        return Err(Error::Precondition(format!(
            "target dimensions must be positive, got {width}x{height}"
        )));
    }
    if image.width == width && image.height == height {
        return Ok(image.clone());
    }
    let sx = image.width as f64 / width as f64;
    let sy = image.height as f64 / height as f64;
    let last_x = (image.width - 1) as f64;
    let last_y = (image.height - 1) as f64;

    // Horizontal taps are shared by every output row.
    let taps_x: Vec<(usize, usize, f32)> = (0..width)
        .map(|x| {
            let src = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, last_x);
            let x0 = src.floor() as usize;
            let x1 = (x0 + 1).min(image.width - 1);
            (x0, x1, (src - x0 as f64) as f32)
        })
        .collect();

    let mut pixels = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let src = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, last_y);
        let y0 = src.floor() as usize;
        let y1 = (y0 + 1).min(image.height - 1);
        let fy = (src - y0 as f64) as f32;
        for &(x0, x1, fx) in &taps_x {
            for c in 0..3 {
                let top = image.get(x0, y0, c) * (1.0 - fx) + image.get(x1, y0, c) * fx;
                let bottom = image.get(x0, y1, c) * (1.0 - fx) + image.get(x1, y1, c) * fx;
                pixels.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(NormalizedImage {
        width,
        height,
        pixels,
    })
}

/// Normalize then resize to 224x224.
pub fn standardize(image: &RgbImage) -> Result<NormalizedImage> {
    resize(&normalize(image), STANDARD_SIZE, STANDARD_SIZE)
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(decoded.to_rgb8())
}

pub fn load_standardized(path: impl AsRef<Path>) -> Result<NormalizedImage> {
    standardize(&load_rgb(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Rotates counter-clockwise (as displayed, y pointing down) about the image
/// center. Samples falling outside the source read as black.
pub fn rotate(image: &NormalizedImage, degrees: f64, interpolation: Interpolation) -> NormalizedImage {
    if degrees == 0.0 {
        return image.clone();
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = (image.width as f64 - 1.0) / 2.0;
    let cy = (image.height as f64 - 1.0) / 2.0;
    let mut pixels = vec![0.0f32; image.pixels.len()];
    for y in 0..image.height {
        let dy = y as f64 - cy;
        for x in 0..image.width {
            let dx = x as f64 - cx;
            // Inverse map: destination back into the source frame.
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let out = &mut pixels[(y * image.width + x) * 3..][..3];
            match interpolation {
                Interpolation::Nearest => sample_nearest(image, sx, sy, out),
                Interpolation::Bilinear => sample_bilinear(image, sx, sy, out),
            }
        }
    }
    NormalizedImage {
        width: image.width,
        height: image.height,
        pixels,
    }
}

fn sample_nearest(image: &NormalizedImage, sx: f64, sy: f64, out: &mut [f32]) {
    let (xr, yr) = (sx.round(), sy.round());
    if xr < 0.0 || yr < 0.0 || xr > (image.width - 1) as f64 || yr > (image.height - 1) as f64 {
        return;
    }
    let (x, y) = (xr as usize, yr as usize);
    for (c, o) in out.iter_mut().enumerate() {
        *o = image.get(x, y, c);
    }
}

fn sample_bilinear(image: &NormalizedImage, sx: f64, sy: f64, out: &mut [f32]) {
    if sx <= -1.0 || sy <= -1.0 || sx >= image.width as f64 || sy >= image.height as f64 {
        return;
    }
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = (sx - x0) as f32;
    let fy = (sy - y0) as f32;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |x: isize, y: isize, c: usize| -> f32 {
        if x < 0 || y < 0 || x >= image.width as isize || y >= image.height as isize {
            0.0
        } else {
            image.get(x as usize, y as usize, c)
        }
    };
    for (c, o) in out.iter_mut().enumerate() {
        let top = at(x0, y0, c) * (1.0 - fx) + at(x0 + 1, y0, c) * fx;
        let bottom = at(x0, y0 + 1, c) * (1.0 - fx) + at(x0 + 1, y0 + 1, c) * fx;
        *o = top * (1.0 - fy) + bottom * fy;
    }
}

pub fn hflip(image: &NormalizedImage) -> NormalizedImage {
    let mut pixels = Vec::with_capacity(image.pixels.len());
    for row in image.pixels.chunks_exact(image.width * 3) {
        for px in row.chunks_exact(3).rev() {
            pixels.extend_from_slice(px);
        }
    }
    NormalizedImage {
        width: image.width,
        height: image.height,
        pixels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    /// Rotation angles are drawn uniformly from `[-max, +max]` degrees.
    pub max_rotation_deg: f64,
    pub hflip_prob: f64,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            max_rotation_deg: 45.0,
            hflip_prob: 0.5,
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    /// Policy that leaves every image untouched.
    pub fn identity() -> Self {
        AugmentPolicy {
            max_rotation_deg: 0.0,
            hflip_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_rotation_deg.is_finite() && self.max_rotation_deg >= 0.0) {
            return Err(Error::Precondition(format!(
                "max_rotation_deg must be finite and non-negative, got {}",
                self.max_rotation_deg
            )));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Precondition(format!(
                "hflip_prob must lie in [0, 1], got {}",
                self.hflip_prob
            )));
        }
        Ok(())
    }
}

/// The random choices behind one augmented image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AugmentDraw {
    pub angle_deg: f64,
    pub flipped: bool,
}

pub fn draw<R: Rng + ?Sized>(policy: &AugmentPolicy, rng: &mut R) -> AugmentDraw {
    let max = policy.max_rotation_deg;
    let angle_deg = if max > 0.0 {
        rng.random_range(-max..=max)
    } else {
        0.0
    };
    let flipped = rng.random_bool(policy.hflip_prob);
    AugmentDraw { angle_deg, flipped }
}

pub fn apply(image: &NormalizedImage, draw: AugmentDraw) -> NormalizedImage {
    let rotated = rotate(image, draw.angle_deg, Interpolation::Bilinear);
    if draw.flipped {
        hflip(&rotated)
    } else {
        rotated
    }
}

/// Random rotation followed by a random horizontal flip.
pub fn augment<R: Rng + ?Sized>(
    image: &NormalizedImage,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> Result<NormalizedImage> {
    policy.validate()?;
    Ok(apply(image, draw(policy, rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gray(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> NormalizedImage {
        NormalizedImage::from_fn(width, height, |x, y, _| f(x, y))
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax(255.0, 0.0, 255.0).unwrap(), 1.0);
        assert_eq!(minmax(0.0, 0.0, 255.0).unwrap(), 0.0);
        assert_relative_eq!(minmax(51.0, 0.0, 255.0).unwrap(), 0.2, epsilon = 1e-15);
        assert!(matches!(minmax(3.0, 5.0, 5.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn normalize_examples() {
        let white = normalize(&RgbImage::from_pixel(5, 3, image::Rgb([255, 255, 255])));
        assert!(white.pixels().iter().all(|&v| v == 1.0));
        let black = normalize(&RgbImage::new(5, 3));
        assert!(black.pixels().iter().all(|&v| v == 0.0));
        let mid = normalize(&RgbImage::from_pixel(1, 1, image::Rgb([128, 128, 128])));
        assert_relative_eq!(mid.get(0, 0, 0), 0.501_960_8, epsilon = 1e-6);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = gray(224, 224, |x, y| ((x * 7 + y * 3) % 11) as f32 / 10.0);
        assert_eq!(resize(&img, 224, 224).unwrap(), img);
        let flat = NormalizedImage::filled(448, 448, 0.3);
        let small = resize(&flat, 224, 224).unwrap();
        assert_eq!((small.width(), small.height()), (224, 224));
        assert!(small.pixels().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        assert!(resize(&img, 0, 4).is_err());
    }

    #[test]
    fn resize_checkerboard_2x2_to_4x4() {
        // Source [[1, 0], [0, 1]]. With half-pixel centers the 4x4 targets
        // sample at -0.25, 0.25, 0.75, 1.25, clamped to [0, 1], so the
        // per-axis weights on the second source pixel are 0, 0.25, 0.75, 1.
        let src = gray(2, 2, |x, y| if x == y { 1.0 } else { 0.0 });
        let out = resize(&src, 4, 4).unwrap();
        let w = [0.0f32, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                let (wx, wy) = (w[x], w[y]);
                let expected = (1.0 - wx) * (1.0 - wy) + wx * wy;
                assert_relative_eq!(out.get(x, y, 0), expected, epsilon = 1e-6);
            }
        }
        assert_eq!(out.get(0, 0, 0), 1.0);
        assert_eq!(out.get(3, 0, 0), 0.0);
        assert_eq!(out.get(0, 3, 0), 0.0);
        assert_eq!(out.get(3, 3, 0), 1.0);
        assert_relative_eq!(out.get(1, 1, 0), 0.625, epsilon = 1e-6);
    }

    #[test]
    fn zero_rotation_without_flip_is_identity() {
        let img = gray(16, 12, |x, y| (x + y) as f32 / 30.0);
        let out = apply(&img, AugmentDraw { angle_deg: 0.0, flipped: false });
        assert_eq!(out, img);
        let mut rng = crate::rng::stream(1, 0);
        assert_eq!(augment(&img, &AugmentPolicy::identity(), &mut rng).unwrap(), img);
    }

    #[test]
    fn double_flip_is_identity() {
        let img = gray(7, 5, |x, y| (x * 5 + y) as f32 / 40.0);
        let once = apply(&img, AugmentDraw { angle_deg: 0.0, flipped: true });
        assert_ne!(once, img);
        assert_eq!(once.get(0, 2, 0), img.get(6, 2, 0));
        assert_eq!(apply(&once, AugmentDraw { angle_deg: 0.0, flipped: true }), img);
    }

    #[test]
    fn rotating_a_centered_square_by_45_degrees_gives_a_diamond() {
        let n = 101usize;
        let c = 50.0f64;
        let half = 20.0f64;
        let square = gray(n, n, |x, y| {
            if (x as f64 - c).abs() <= half && (y as f64 - c).abs() <= half {
                1.0
            } else {
                0.0
            }
        });
        let rotated = rotate(&square, 45.0, Interpolation::Bilinear);
        // Independent raster: a square of half-side h rotated by 45 degrees
        // is the diamond |u| + |v| <= h * sqrt(2). Pixels within 1.5 px of
        // the boundary are skipped to leave room for interpolation blur.
        let radius = half * std::f64::consts::SQRT_2;
        let mut checked = 0;
        for y in 0..n {
            for x in 0..n {
                let l1 = (x as f64 - c).abs() + (y as f64 - c).abs();
                let v = rotated.get(x, y, 0);
                if l1 < radius - 1.5 {
                    assert_relative_eq!(v, 1.0, epsilon = 1e-5);
                    checked += 1;
                } else if l1 > radius + 1.5 {
                    assert_eq!(v, 0.0, "pixel ({x},{y}) should be black");
                    checked += 1;
                }
            }
        }
        assert!(checked > n * n * 9 / 10);
        for (x, y) in [(0, 0), (n - 1, 0), (0, n - 1), (n - 1, n - 1)] {
            assert_eq!(rotated.get(x, y, 0), 0.0);
        }
    }

    #[test]
    fn quarter_turns_are_exact_with_nearest_sampling() {
        let img = gray(9, 9, |x, y| (y * 9 + x) as f32 / 81.0);
        let q = rotate(&img, 90.0, Interpolation::Nearest);
        // Counter-clockwise quarter turn in display coordinates.
        for y in 0..9 {
            for x in 0..9 {
                assert_eq!(q.get(x, y, 0), img.get(8 - y, x, 0));
            }
        }
        assert_eq!(rotate(&q, -90.0, Interpolation::Nearest), img);
    }

    fn blocks(n: usize) -> NormalizedImage {
        gray(n, n, |x, y| if (x / 8 + y / 8) % 2 == 0 { 1.0 } else { 0.2 })
    }

    proptest! {
        #[test]
        fn minmax_is_monotone_and_bounded(a in 0.0f64..255.0, b in 0.0f64..255.0) {
            let (fa, fb) = (minmax(a, 0.0, 255.0).unwrap(), minmax(b, 0.0, 255.0).unwrap());
            prop_assert!((0.0..=1.0).contains(&fa));
            if a <= b { prop_assert!(fa <= fb); }
        }

        #[test]
        fn normalize_then_unit_minmax_is_identity(v in 0u8..=255) {
            let img = normalize(&RgbImage::from_pixel(1, 1, image::Rgb([v, v, v])));
            let x = f64::from(img.get(0, 0, 0));
            prop_assert_eq!(minmax(x, 0.0, 1.0).unwrap(), x);
        }

        #[test]
        fn augment_preserves_shape_and_range(seed in any::<u64>()) {
            let img = gray(24, 24, |x, y| ((x * 13 + y * 7) % 17) as f32 / 16.0);
            let mut rng = crate::rng::stream(seed, 3);
            let out = augment(&img, &AugmentPolicy::default(), &mut rng).unwrap();
            prop_assert_eq!((out.width(), out.height()), (24, 24));
            prop_assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn augment_is_reproducible(seed in any::<u64>()) {
            let img = gray(20, 20, |x, y| (x * y % 9) as f32 / 8.0);
            let policy = AugmentPolicy::default();
            let a = augment(&img, &policy, &mut crate::rng::stream(seed, 0)).unwrap();
            let b = augment(&img, &policy, &mut crate::rng::stream(seed, 0)).unwrap();
            prop_assert_eq!(a.pixels(), b.pixels());
        }

        #[test]
        fn nearest_rotation_round_trip_recovers_interior(theta in -45.0f64..45.0) {
            // A nearest-sampled round trip lands within one pixel of the
            // start, so pixels whose 3x3 neighbourhood is uniform and that
            // stay inside the inscribed circle come back exactly.
            let n = 64;
            let img = blocks(n);
            let back = rotate(&rotate(&img, theta, Interpolation::Nearest), -theta, Interpolation::Nearest);
            let c = (n as f64 - 1.0) / 2.0;
            for y in 1..n - 1 {
                for x in 1..n - 1 {
                    let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                    if r > c - 3.0 { continue; }
                    let v = img.get(x, y, 0);
                    let uniform = (y - 1..=y + 1).all(|yy| (x - 1..=x + 1).all(|xx| img.get(xx, yy, 0) == v));
                    if uniform {
                        prop_assert_eq!(back.get(x, y, 0), v);
                    }
                }
            }
        }
    }
}
