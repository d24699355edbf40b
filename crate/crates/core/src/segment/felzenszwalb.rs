//! Graph-based segmentation after Felzenszwalb & Huttenlocher (2004).
//!
//! Pixels are nodes of an 8-connected grid graph weighted by the RGB distance
//! of the (optionally smoothed) image. Edges are visited in ascending weight
//! order; two components merge when the connecting edge is no heavier than
//! the internal difference of either component plus `scale / |C|`.

use serde::{Deserialize, Serialize};

use super::{invalid, LabelMap, Method, SegmenterError};
use crate::imaging::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FelzParams {
    /// Merge threshold strength. Larger values favour larger components.
    pub scale: f64,
    /// Standard deviation of the Gaussian pre-smoothing, in pixels.
    pub sigma: f64,
    /// Components smaller than this are merged into a neighbour.
    pub min_size: usize,
}

impl Default for FelzParams {
    fn default() -> Self {
        Self {
            scale: 100.0,
            sigma: 0.8,
            min_size: 20,
        }
    }
}

impl FelzParams {
    fn validate(&self, img: &Image) -> Result<(), SegmenterError> {
        let m = Method::Felzenszwalb;
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(invalid(m, "scale must be finite and > 0"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid(m, "sigma must be finite and >= 0"));
        }
        if self.min_size < 1 || self.min_size > img.len() {
            return Err(invalid(m, "min_size must lie in 1..=width*height"));
        }
        Ok(())
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    // Largest edge weight inside the component (its internal difference).
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) -> usize {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = weight.max(self.internal[a]).max(self.internal[b]);
        big
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur on float RGB with replicated borders.
fn smooth(img: &Image, sigma: f64) -> Vec<[f64; 3]> {
    let (w, h) = img.dims();
    let src: Vec<[f64; 3]> = img.pixels().iter().map(|p| p.map(f64::from)).collect();
    if sigma == 0.0 {
        return src;
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let blur = |src: &[[f64; 3]], horizontal: bool| -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for (ki, &kv) in kernel.iter().enumerate() {
                    let off = ki as isize - r;
                    let (sx, sy) = if horizontal {
                        ((x as isize + off).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + off).clamp(0, h as isize - 1) as usize)
                    };
                    let p = src[sy * w + sx];
                    for c in 0..3 {
                        acc[c] += kv * p[c];
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    let tmp = blur(&src, true);
    blur(&tmp, false)
}

pub fn segment_felzenszwalb(img: &Image, p: &FelzParams) -> Result<LabelMap, SegmenterError> {
    p.validate(img)?;
    let (w, h) = img.dims();
    let px = smooth(img, p.sigma);
    let dist = |a: usize, b: usize| {
        let (u, v) = (px[a], px[b]);
        ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt()
    };

    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(4 * w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push((dist(i, i + 1), i, i + 1));
            }
            if y + 1 < h {
                edges.push((dist(i, i + w), i, i + w));
                if x + 1 < w {
                    edges.push((dist(i, i + w + 1), i, i + w + 1));
                }
                if x > 0 {
                    edges.push((dist(i, i + w - 1), i, i + w - 1));
                }
            }
        }
    }
    // Stable sort keeps construction order among equal weights.
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut sets = DisjointSet::new(w * h);
    let mut threshold = vec![p.scale; w * h];
    for &(weight, a, b) in &edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra != rb && weight <= threshold[ra] && weight <= threshold[rb] {
            let root = sets.union(ra, rb, weight);
            threshold[root] = sets.internal[root] + p.scale / sets.size[root] as f64;
        }
    }

    for &(weight, a, b) in &edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra != rb && (sets.size[ra] < p.min_size || sets.size[rb] < p.min_size) {
            sets.union(ra, rb, weight);
        }
    }

    let raw: Vec<usize> = (0..w * h).map(|i| sets.find(i)).collect();
    Ok(LabelMap::from_raw(w, h, &raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Connectivity;

    #[test]
    fn constant_image_is_one_segment() {
        let img = Image::filled(9, 7, [12, 200, 40]);
        for scale in [0.5, 10.0, 1000.0] {
            let p = FelzParams {
                scale,
                min_size: 1,
                ..Default::default()
            };
            assert_eq!(segment_felzenszwalb(&img, &p).unwrap().n_segments(), 1);
        }
    }

    #[test]
    fn two_halves_split_cleanly() {
        // Hand trace on 4x4: in-half edges weigh 0 and merge first (threshold
        // starts at scale = 1). The half-to-half edges weigh ~441 > 0 + 1/8.
        let img = Image::from_fn(4, 4, |x, _| if x < 2 { [0; 3] } else { [255; 3] });
        let p = FelzParams {
            scale: 1.0,
            sigma: 0.0,
            min_size: 1,
        };
        let lm = segment_felzenszwalb(&img, &p).unwrap();
        assert_eq!(lm.n_segments(), 2);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(lm.get(x, y), u32::from(x >= 2));
            }
        }
    }

    #[test]
    fn min_size_of_whole_image_forces_single_segment() {
        let img = Image::from_fn(6, 5, |x, y| [(x * 40) as u8, (y * 50) as u8, 9]);
        let p = FelzParams {
            scale: 1.0,
            sigma: 0.0,
            min_size: 30,
        };
        assert_eq!(segment_felzenszwalb(&img, &p).unwrap().n_segments(), 1);
    }

    #[test]
    fn segments_are_eight_connected() {
        let img = Image::from_fn(20, 15, |x, y| {
            [((x * 37 + y * 11) % 256) as u8, ((x * y) % 256) as u8, 100]
        });
        let lm = segment_felzenszwalb(&img, &FelzParams::default()).unwrap();
        assert!(lm.is_dense_partition());
        assert!(lm.segments_connected(Connectivity::Eight));
    }

    #[test]
    fn rejects_bad_params() {
        let img = Image::filled(3, 3, [0; 3]);
        let bad = [
            FelzParams { scale: 0.0, ..Default::default() },
            FelzParams { sigma: -1.0, ..Default::default() },
            FelzParams { min_size: 10, ..Default::default() },
            FelzParams { min_size: 0, ..Default::default() },
        ];
        for p in bad {
            assert!(segment_felzenszwalb(&img, &p).is_err(), "{p:?}");
        }
    }
}
