//! Procedural road images: plain asphalt texture for `normal`, the same
//! texture with dark elliptical holes for `pothole`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ImageSample, Manifest, Split, CLASS_NAMES, NORMAL, POTHOLE};
use crate::error::{Error, Result};
use crate::rng;

/// Random-stream scope of the generator (per-image substreams live under it).
const SYNTH_SCOPE: u32 = 0x5359;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub pothole_count: usize,
    pub normal_count: usize,
    /// Inclusive range of image widths and heights in pixels.
    pub min_size: u32,
    pub max_size: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            pothole_count: 450,
            normal_count: 450,
            min_size: 240,
            max_size: 320,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_size < 16 || self.min_size > self.max_size {
            return Err(Error::Precondition(format!(
                "image size range {}..={} is invalid (minimum 16)",
                self.min_size, self.max_size
            )));
        }
        if self.pothole_count > u32::MAX as usize || self.normal_count > u32::MAX as usize {
            return Err(Error::Precondition("image count too large".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    depth: f64,
}

impl Ellipse {
    /// Normalized radius: `< 1` inside.
    fn radius(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        (u * u + v * v).sqrt()
    }
}

/// Straight dark crack segment present in both classes.
#[derive(Debug, Clone, Copy)]
struct Crack {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    width: f64,
}

impl Crack {
    fn distance(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (self.x1 - self.x0, self.y1 - self.y0);
        let len2 = dx * dx + dy * dy;
        let t = (((x - self.x0) * dx + (y - self.y0) * dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (self.x0 + t * dx, self.y0 + t * dy);
        ((x - px).powi(2) + (y - py).powi(2)).sqrt()
    }
}

/// Image `index` of class `label`; a pure function of its arguments.
pub fn generate_image(label: u8, index: u32, config: &SynthConfig) -> RgbImage {
    let mut rng = rng::substream(config.seed, SYNTH_SCOPE + u32::from(label), index);
    let w = rng.random_range(config.min_size..=config.max_size);
    let h = rng.random_range(config.min_size..=config.max_size);
    let (wf, hf) = (f64::from(w), f64::from(h));
    let side = wf.min(hf);

    let base: f64 = rng.random_range(68.0..72.0);
    let tint = [rng.random_range(0.97..1.0), rng.random_range(0.97..1.0), rng.random_range(1.0..1.03)];
    // Mean-zero illumination ramp across the image.
    let ramp_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let ramp = rng.random_range(0.0..8.0);
    let (ramp_x, ramp_y) = (ramp_angle.cos() * ramp, ramp_angle.sin() * ramp);

    let cracks: Vec<Crack> = (0..rng.random_range(0..=2))
        .map(|_| {
            let (x0, y0) = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let len = rng.random_range(0.2..0.5) * side;
            Crack {
                x0,
                y0,
                x1: x0 + angle.cos() * len,
                y1: y0 + angle.sin() * len,
                width: rng.random_range(0.8..2.0),
            }
        })
        .collect();

    let holes: Vec<Ellipse> = if label == POTHOLE {
        (0..rng.random_range(1..=3))
            .map(|_| {
                let a = rng.random_range(0.22..0.32) * side;
                let b = a * rng.random_range(0.6..1.0);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                Ellipse {
                    cx: rng.random_range(a..wf - a),
                    cy: rng.random_range(a..hf - a),
                    a,
                    b,
                    cos: angle.cos(),
                    sin: angle.sin(),
                    depth: rng.random_range(6.0..20.0),
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    let grain = Normal::new(0.0, 5.0).expect("valid normal");
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            let mut v = base + ramp_x * (fx / wf - 0.5) + ramp_y * (fy / hf - 0.5) + grain.sample(&mut rng);
            for c in &cracks {
                let d = c.distance(fx, fy);
                if d < c.width {
                    v -= 30.0 * (1.0 - d / c.width);
                }
            }
            for e in &holes {
                let r = e.radius(fx, fy);
                // Dark floor with a soft rim over the outer 15% of the radius.
                let inside = ((1.0 - r) / 0.15).clamp(0.0, 1.0);
                if inside > 0.0 {
                    v = v * (1.0 - inside) + (e.depth + 0.5 * grain.sample(&mut rng)) * inside;
                }
            }
            let px = tint.map(|t| (v * t).round().clamp(0.0, 255.0) as u8);
            img.put_pixel(x, y, Rgb(px));
        }
    }
    img
}

/// File path of image `index` of class `label` under `root`.
pub fn image_path(root: &Path, label: u8, index: usize) -> PathBuf {
    let class = CLASS_NAMES[usize::from(label)];
    root.join(class).join(format!("{class}_{index:04}.png"))
}

/// Writes every image as PNG under `<out>/<class>/` and returns the unsplit
/// manifest, potholes first. Images are generated in parallel.
pub fn synthesize(out: impl AsRef<Path>, config: &SynthConfig) -> Result<Manifest> {
    config.validate()?;
    let out = out.as_ref();
    for label in [POTHOLE, NORMAL] {
        let dir = out.join(CLASS_NAMES[usize::from(label)]);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let jobs: Vec<(u8, usize)> = (0..config.pothole_count)
        .map(|i| (POTHOLE, i))
        .chain((0..config.normal_count).map(|i| (NORMAL, i)))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(label, i)| {
            let path = image_path(out, label, i);
            generate_image(label, i as u32, config)
                .save(&path)
                .map_err(|e| Error::Decode {
                    path: path.clone(),
                    source: e,
                })?;
            Ok(ImageSample {
                path,
                label,
                split: Split::Unassigned,
                dims: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = Manifest::new(samples);
    manifest.seed = config.seed;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            pothole_count: 3,
            normal_count: 3,
            min_size: 40,
            max_size: 60,
            seed: 7,
        }
    }

    fn mean(img: &RgbImage) -> f64 {
        img.pixels().map(|p| p.0.iter().map(|&v| f64::from(v)).sum::<f64>() / 3.0).sum::<f64>()
            / f64::from(img.width() * img.height())
    }

    #[test]
    fn generation_is_a_pure_function_of_seed_and_index() {
        let cfg = small();
        assert_eq!(generate_image(POTHOLE, 2, &cfg), generate_image(POTHOLE, 2, &cfg));
        assert_ne!(generate_image(POTHOLE, 2, &cfg), generate_image(POTHOLE, 1, &cfg));
        assert_ne!(generate_image(POTHOLE, 2, &cfg), generate_image(NORMAL, 2, &cfg));
        let other = SynthConfig { seed: 8, ..cfg };
        assert_ne!(generate_image(NORMAL, 0, &cfg), generate_image(NORMAL, 0, &other));
    }

    #[test]
    fn sizes_stay_in_range_and_potholes_are_darker() {
        let cfg = SynthConfig { min_size: 64, max_size: 96, ..small() };
        let mut pothole = 0.0;
        let mut normal = 0.0;
        for i in 0..20 {
            let p = generate_image(POTHOLE, i, &cfg);
            let n = generate_image(NORMAL, i, &cfg);
            for img in [&p, &n] {
                assert!((64..=96).contains(&img.width()) && (64..=96).contains(&img.height()));
            }
            pothole += mean(&p);
            normal += mean(&n);
        }
        assert!(pothole / 20.0 < normal / 20.0 - 5.0, "{pothole} vs {normal}");
    }

    #[test]
    fn synthesize_writes_pngs_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = synthesize(dir.path(), &small()).unwrap();
        assert_eq!(m.len(), 6);
        assert_eq!(m.samples.iter().filter(|s| s.label == POTHOLE).count(), 3);
        assert!(m.samples.iter().all(|s| s.path.is_file() && s.split == Split::Unassigned));
        assert_eq!(m.samples[0].path, dir.path().join("pothole/pothole_0000.png"));
        let again = tempfile::tempdir().unwrap();
        synthesize(again.path(), &small()).unwrap();
        for s in &m.samples {
            let rel = s.path.strip_prefix(dir.path()).unwrap();
            assert_eq!(fs::read(&s.path).unwrap(), fs::read(again.path().join(rel)).unwrap());
        }
    }

    #[test]
    fn bad_size_range_is_rejected() {
        let cfg = SynthConfig { min_size: 100, max_size: 50, ..small() };
        assert!(synthesize(tempfile::tempdir().unwrap().path(), &cfg).is_err());
    }
}
