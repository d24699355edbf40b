//! Compact watershed: marker-seeded priority flooding where the cost of
//! claiming a pixel mixes its grey-value difference to the region's seed with
//! the Euclidean distance to that seed.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{grid_seeds, invalid, LabelMap, Method, SegmenterError};
use crate::imaging::{lightness, rgb_to_lab, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompactWatershedParams {
    /// Number of grid markers; also the exact number of output segments.
    pub n_markers: usize,
    /// Weight of the seed distance against the grey-value difference.
    pub compactness: f64,
}

impl Default for CompactWatershedParams {
    fn default() -> Self {
        Self {
            n_markers: 100,
            compactness: 1.0,
        }
    }
}

impl CompactWatershedParams {
    fn validate(&self, img: &Image) -> Result<(), SegmenterError> {
        let m = Method::CompactWatershed;
        if self.n_markers < 1 || self.n_markers > img.len() {
            return Err(invalid(m, "n_markers must lie in 1..=width*height"));
        }
        if !(self.compactness.is_finite() && self.compactness >= 0.0) {
            return Err(invalid(m, "compactness must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    cost: f64,
    seq: u64,
    pixel: usize,
    region: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Region (seed index) per pixel, the order pixels were labelled in, and
/// the seed pixels.
pub struct Flood {
    pub region: Vec<usize>,
    pub order: Vec<usize>,
    pub seeds: Vec<usize>,
}

pub fn flood(img: &Image, p: &CompactWatershedParams) -> Result<Flood, SegmenterError> {
    p.validate(img)?;
    let (w, h) = img.dims();
    let grey = lightness(&rgb_to_lab(img));
    let seeds: Vec<usize> = grid_seeds(w, h, p.n_markers)
        .into_iter()
        .map(|(x, y)| y * w + x)
        .collect();

    const UNLABELED: usize = usize::MAX;
    let mut region = vec![UNLABELED; w * h];
    let mut order = Vec::with_capacity(w * h);
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    let cost = |pixel: usize, seed: usize| {
        let (px, py) = ((pixel % w) as f64, (pixel / w) as f64);
        let (sx, sy) = ((seed % w) as f64, (seed / w) as f64);
        (grey[pixel] - grey[seed]).abs() + p.compactness * ((px - sx).powi(2) + (py - sy).powi(2)).sqrt()
    };

    for (r, &s) in seeds.iter().enumerate() {
        region[s] = r;
        order.push(s);
    }
    let mut push_neighbours = |pixel: usize, r: usize, region: &[usize], heap: &mut BinaryHeap<_>| {
        let (x, y) = (pixel % w, pixel / w);
        let neighbours = [
            (y > 0).then(|| pixel - w),
            (x > 0).then(|| pixel - 1),
            (x + 1 < w).then(|| pixel + 1),
            (y + 1 < h).then(|| pixel + w),
        ];
        for q in neighbours.into_iter().flatten() {
            if region[q] == UNLABELED {
                heap.push(Reverse(Entry {
                    cost: cost(q, seeds[r]),
                    seq,
                    pixel: q,
                    region: r,
                }));
                seq += 1;
            }
        }
    };
    for (r, &s) in seeds.iter().enumerate() {
        push_neighbours(s, r, &region, &mut heap);
    }
    while let Some(Reverse(e)) = heap.pop() {
        if region[e.pixel] != UNLABELED {
            continue;
        }
        region[e.pixel] = e.region;
        order.push(e.pixel);
        push_neighbours(e.pixel, e.region, &region, &mut heap);
    }
    debug_assert!(region.iter().all(|&r| r != UNLABELED));

    Ok(Flood {
        region,
        order,
        seeds,
    })
}

pub fn segment_compact_watershed(
    img: &Image,
    p: &CompactWatershedParams,
) -> Result<LabelMap, SegmenterError> {
    let f = flood(img, p)?;
    Ok(LabelMap::from_raw(img.width(), img.height(), &f.region))
}
