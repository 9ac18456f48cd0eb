use crate::error::Result;
use crate::preprocess::NormalizedImage;

use super::{BackboneId, BackboneSpec, FeatureExtractor};

/// Deterministic stand-in for a pretrained backbone with the same output
/// width: the image plane is cut into a `g x g` grid, `g = ceil(sqrt(dim))`,
/// and each cell contributes its mean grayscale value (row-major, truncated
/// to `dim`).
#[derive(Debug, Clone)]
pub struct StubExtractor {
    spec: BackboneSpec,
}

impl StubExtractor {
    pub fn new(id: BackboneId) -> Self {
        StubExtractor {
            spec: BackboneSpec::new(id),
        }
    }

    pub fn with_spec(spec: BackboneSpec) -> Self {
        StubExtractor { spec }
    }
}

impl FeatureExtractor for StubExtractor {
    fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    fn extract(&self, image: &NormalizedImage) -> Result<Vec<f32>> {
        Ok(stub_features(image, &self.spec))
    }
}

pub(crate) fn grid_side(output_dim: usize) -> usize {
    let mut g = (output_dim as f64).sqrt().floor() as usize;
    while g * g < output_dim {
        g += 1;
    }
    g
}

/// Cell `i` of a length-`len` axis cut into `cells` parts covers
/// `[floor(i * len / cells), floor((i + 1) * len / cells))`.
pub(crate) fn cell_bounds(len: usize, cells: usize) -> Vec<usize> {
    (0..=cells).map(|i| i * len / cells).collect()
}

pub fn stub_features(image: &NormalizedImage, spec: &BackboneSpec) -> Vec<f32> {
    let (w, h) = (image.width(), image.height());
    let g = grid_side(spec.output_dim);

    // Summed-area table of the per-pixel channel mean.
    let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            let px = &image.pixels()[(y * w + x) * 3..][..3];
            row += (f64::from(px[0]) + f64::from(px[1]) + f64::from(px[2])) / 3.0;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let area_sum = |x0: usize, y0: usize, x1: usize, y1: usize| {
        sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] + sat[y0 * (w + 1) + x0]
    };

    let xs = cell_bounds(w, g);
    let ys = cell_bounds(h, g);
    let mut out = Vec::with_capacity(spec.output_dim);
    'grid: for r in 0..g {
        for c in 0..g {
            if out.len() == spec.output_dim {
                break 'grid;
            }
            let (x0, x1, y0, y1) = (xs[c], xs[c + 1], ys[r], ys[r + 1]);
            let area = ((x1 - x0) * (y1 - y0)) as f64;
            out.push(if area > 0.0 {
                (area_sum(x0, y0, x1, y1) / area) as f32
            } else {
                0.0
            });
        }
    }
    out
}
