//! Quick-Shift mode seeking.
//!
//! Each pixel carries the feature vector `[λx, λy, L, a, b]`. A Parzen density
//! is estimated over a `⌈3σ⌉` window, and every pixel links to the closest
//! pixel (in feature space) of strictly higher density within `max_dist`
//! pixels. The resulting forest's trees are the segments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{invalid, LabelMap, Method, SegmenterError};
use crate::imaging::{rgb_to_lab, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuickShiftParams {
    /// Density bandwidth σ in feature units.
    pub kernel_size: f64,
    /// Maximum spatial length of a parent link, in pixels.
    pub max_dist: f64,
    /// Weight λ of the pixel coordinates against the Lab components.
    pub spatial_weight: f64,
    /// Amplitude of seeded uniform noise added to the densities to break
    /// ties. Zero disables it.
    pub density_jitter: f64,
}

impl Default for QuickShiftParams {
    fn default() -> Self {
        Self {
            kernel_size: 3.0,
            max_dist: 10.0,
            spatial_weight: 1.0,
            density_jitter: 0.0,
        }
    }
}

impl QuickShiftParams {
    fn validate(&self) -> Result<(), SegmenterError> {
        let m = Method::Quickshift;
        for (name, v) in [
            ("kernel_size", self.kernel_size),
            ("max_dist", self.max_dist),
            ("spatial_weight", self.spatial_weight),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(m, format!("{name} must be finite and > 0")));
            }
        }
        if !(self.density_jitter.is_finite() && self.density_jitter >= 0.0) {
            return Err(invalid(m, "density_jitter must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Densities and parent links of the Quick-Shift forest. A root is its own parent.
#[derive(Debug, Clone, PartialEq)]
pub struct QuickShiftForest {
    pub width: usize,
    pub height: usize,
    pub density: Vec<f64>,
    pub parent: Vec<usize>,
}

impl QuickShiftForest {
    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        self.parent.iter().enumerate().filter(|(i, &p)| *i == p).map(|(i, _)| i)
    }

    /// Root of every pixel's tree.
    pub fn root_of_each(&self) -> Vec<usize> {
        let n = self.parent.len();
        let mut root = vec![usize::MAX; n];
        let mut path = Vec::new();
        for start in 0..n {
            let mut i = start;
            while root[i] == usize::MAX && self.parent[i] != i {
                path.push(i);
                i = self.parent[i];
            }
            let r = if root[i] == usize::MAX { i } else { root[i] };
            root[i] = r;
            for j in path.drain(..) {
                root[j] = r;
            }
        }
        root
    }
}

fn features(img: &Image, lambda: f64) -> Vec<[f64; 5]> {
    let lab = rgb_to_lab(img);
    let w = img.width();
    lab.pixels()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            [lambda * x, lambda * y, p[0], p[1], p[2]]
        })
        .collect()
}

#[inline]
fn feature_dist2(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    let mut s = 0.0;
    for k in 0..5 {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

pub fn quickshift_forest(
    img: &Image,
    p: &QuickShiftParams,
    seed: u64,
) -> Result<QuickShiftForest, SegmenterError> {
    p.validate()?;
    let (w, h) = img.dims();
    let feats = features(img, p.spatial_weight);
    let two_sigma2 = 2.0 * p.kernel_size * p.kernel_size;
    let window = (3.0 * p.kernel_size).ceil() as isize;

    let mut density = vec![0.0; w * h];
    for y in 0..h as isize {
        let y0 = (y - window).max(0) as usize;
        let y1 = (y + window).min(h as isize - 1) as usize;
        for x in 0..w as isize {
            let x0 = (x - window).max(0) as usize;
            let x1 = (x + window).min(w as isize - 1) as usize;
            let i = y as usize * w + x as usize;
            let fi = &feats[i];
            let mut acc = 0.0;
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    acc += (-feature_dist2(fi, &feats[yy * w + xx]) / two_sigma2).exp();
                }
            }
            density[i] = acc;
        }
    }

    if p.density_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for d in &mut density {
            *d += rng.random::<f64>() * p.density_jitter;
        }
    }

    // Offsets inside the link radius, nearest first. Feature distance is at
    // least λ²·r², so the scan stops once that bound exceeds the best match.
    let reach = p.max_dist.floor() as isize;
    let max_dist2 = p.max_dist * p.max_dist;
    let mut offsets: Vec<(isize, isize, f64)> = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let r2 = (dx * dx + dy * dy) as f64;
            if r2 <= max_dist2 && (dx, dy) != (0, 0) {
                offsets.push((dx, dy, r2));
            }
        }
    }
    offsets.sort_by(|a, b| a.2.total_cmp(&b.2));
    let lambda2 = p.spatial_weight * p.spatial_weight;

    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let fi = &feats[i];
            let mut best = f64::INFINITY;
            for &(dx, dy, r2) in &offsets {
                if lambda2 * r2 > best {
                    break;
                }
                let (xx, yy) = (x + dx, y + dy);
                if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                    continue;
                }
                let j = yy as usize * w + xx as usize;
                if density[j] <= density[i] {
                    continue;
                }
                let d = feature_dist2(fi, &feats[j]);
                // Equal distances go to the smaller pixel index.
                if d < best || (d == best && j < parent[i]) {
                    best = d;
                    parent[i] = j;
                }
            }
        }
    }

    Ok(QuickShiftForest {
        width: w,
        height: h,
        density,
        parent,
    })
}

/// Quick-Shift segmentation. The segment count is an outcome, not an input.
pub fn segment_quickshift(
    img: &Image,
    p: &QuickShiftParams,
    seed: u64,
) -> Result<LabelMap, SegmenterError> {
    let forest = quickshift_forest(img, p, seed)?;
    Ok(LabelMap::from_raw(
        forest.width,
        forest.height,
        &forest.root_of_each(),
    ))
}
