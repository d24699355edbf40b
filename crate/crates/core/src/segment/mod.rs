//! Superpixel segmentation backends and the [`LabelMap`] they produce.
//!
//! Four methods are available: graph-based merging ([`felzenszwalb`]),
//! mode seeking ([`quickshift`]), localized k-means ([`slic`]) and compact
//! marker flooding ([`watershed`]). All of them are deterministic and return a
//! dense partition of the image.

pub mod felzenszwalb;
pub mod quickshift;
pub mod slic;
pub mod watershed;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, Image, ImagingError, Rgb};

pub use felzenszwalb::{segment_felzenszwalb, FelzParams};
pub use quickshift::{segment_quickshift, QuickShiftParams};
pub use slic::{segment_slic, slic_distance, SlicParams};
pub use watershed::{segment_compact_watershed, CompactWatershedParams, Flood};

#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("invalid {method} parameters: {reason}")]
    InvalidParams { method: Method, reason: String },
    #[error("dimension mismatch: image {image:?}, labels {labels:?}")]
    DimensionMismatch {
        image: (usize, usize),
        labels: (usize, usize),
    },
    #[error("{n_segments} segments do not fit a 16-bit label image")]
    TooManyLabels { n_segments: usize },
    #[error("unknown segmentation method `{0}`")]
    UnknownMethod(String),
    #[error("label file: {0}")]
    LabelFile(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Per-pixel superpixel assignment. Labels are dense: exactly `0..n_segments`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    n_segments: usize,
}

impl LabelMap {
    /// Builds a label map from arbitrary ids, renumbering them densely in
    /// order of first appearance (row-major).
    pub fn from_raw(width: usize, height: usize, raw: &[usize]) -> Self {
        assert!(width > 0 && height > 0 && raw.len() == width * height);
        let mut remap = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&id| {
                let next = remap.len() as u32;
                *remap.entry(id).or_insert(next)
            })
            .collect();
        Self {
            width,
            height,
            labels,
            n_segments: remap.len(),
        }
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

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel count of every segment.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_segments];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// True if the labels are exactly `0..n_segments` and every pixel is covered.
    pub fn is_dense_partition(&self) -> bool {
        self.n_segments >= 1
            && self.labels.len() == self.width * self.height
            && self.sizes().iter().all(|&s| s > 0)
            && self.labels.iter().all(|&l| (l as usize) < self.n_segments)
    }

    /// True if every segment forms a single connected region.
    pub fn segments_connected(&self, connectivity: Connectivity) -> bool {
        let components = connected_components(self.width, self.height, &self.labels, connectivity);
        let n_components = components.iter().max().map_or(0, |&m| m + 1);
        n_components == self.n_segments
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Labels connected regions of equal value, numbered in scan order.
pub(crate) fn connected_components<T: PartialEq>(
    width: usize,
    height: usize,
    values: &[T],
    connectivity: Connectivity,
) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let mut comp = vec![UNSET; values.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..values.len() {
        if comp[start] != UNSET {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if comp[j] == UNSET && values[j] == values[i] {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Felzenszwalb,
    Quickshift,
    Slic,
    CompactWatershed,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Felzenszwalb,
        Method::Quickshift,
        Method::Slic,
        Method::CompactWatershed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Felzenszwalb => "felzenszwalb",
            Method::Quickshift => "quickshift",
            Method::Slic => "slic",
            Method::CompactWatershed => "compact-watershed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SegmenterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "felzenszwalb" | "fsz" => Ok(Method::Felzenszwalb),
            "quickshift" | "quick-shift" | "qs" => Ok(Method::Quickshift),
            "slic" => Ok(Method::Slic),
            "compact-watershed" | "watershed" | "cw" => Ok(Method::CompactWatershed),
            _ => Err(SegmenterError::UnknownMethod(s.to_string())),
        }
    }
}

/// A segmentation method together with its parameter record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "kebab-case")]
pub enum Segmenter {
    Felzenszwalb(FelzParams),
    Quickshift(QuickShiftParams),
    Slic(SlicParams),
    CompactWatershed(CompactWatershedParams),
}

impl Segmenter {
    pub fn with_defaults(method: Method) -> Self {
        match method {
            Method::Felzenszwalb => Segmenter::Felzenszwalb(FelzParams::default()),
            Method::Quickshift => Segmenter::Quickshift(QuickShiftParams::default()),
            Method::Slic => Segmenter::Slic(SlicParams::default()),
            Method::CompactWatershed => {
                Segmenter::CompactWatershed(CompactWatershedParams::default())
            }
        }
    }

    /// Defaults for `method` with the given JSON fields overriding them.
    /// Unknown fields are rejected.
    pub fn from_overrides(
        method: Method,
        overrides: &serde_json::Map<String, serde_json::Value>,
    ) -> Result<Self, SegmenterError> {
        let mut params = Self::with_defaults(method).params_json();
        let fields = params.as_object_mut().expect("params serialize to an object");
        for (key, value) in overrides {
            if !fields.contains_key(key) {
                return Err(SegmenterError::InvalidParams {
                    method,
                    reason: format!(
                        "unknown parameter `{key}` (expected one of: {})",
                        fields.keys().cloned().collect::<Vec<_>>().join(", ")
                    ),
                });
            }
            fields.insert(key.clone(), value.clone());
        }
        let tagged = serde_json::json!({ "method": method.name(), "params": params });
        serde_json::from_value(tagged).map_err(|e| SegmenterError::InvalidParams {
            method,
            reason: e.to_string(),
        })
    }

    pub fn method(&self) -> Method {
        match self {
            Segmenter::Felzenszwalb(_) => Method::Felzenszwalb,
            Segmenter::Quickshift(_) => Method::Quickshift,
            Segmenter::Slic(_) => Method::Slic,
            Segmenter::CompactWatershed(_) => Method::CompactWatershed,
        }
    }

    pub fn params_json(&self) -> serde_json::Value {
        let tagged = serde_json::to_value(self).expect("parameters serialize");
        tagged["params"].clone()
    }

    /// Runs the segmentation. `seed` only matters for Quick-Shift with density
    /// jitter enabled.
    pub fn segment(&self, img: &Image, seed: u64) -> Result<LabelMap, SegmenterError> {
        match self {
            Segmenter::Felzenszwalb(p) => segment_felzenszwalb(img, p),
            Segmenter::Quickshift(p) => segment_quickshift(img, p, seed),
            Segmenter::Slic(p) => segment_slic(img, p),
            Segmenter::CompactWatershed(p) => segment_compact_watershed(img, p),
        }
    }
}

pub(crate) fn invalid(method: Method, reason: impl Into<String>) -> SegmenterError {
    SegmenterError::InvalidParams {
        method,
        reason: reason.into(),
    }
}

/// Copy of `img` with every pixel that has a 4-neighbour of another label
/// painted `color`.
pub fn boundary_overlay(img: &Image, lm: &LabelMap, color: Rgb) -> Result<Image, SegmenterError> {
    if img.dims() != lm.dims() {
        return Err(SegmenterError::DimensionMismatch {
            image: img.dims(),
            labels: lm.dims(),
        });
    }
    let (w, h) = lm.dims();
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let l = lm.get(x, y);
            let boundary = (x > 0 && lm.get(x - 1, y) != l)
                || (x + 1 < w && lm.get(x + 1, y) != l)
                || (y > 0 && lm.get(x, y - 1) != l)
                || (y + 1 < h && lm.get(x, y + 1) != l);
            if boundary {
                out.set(x, y, color);
            }
        }
    }
    Ok(out)
}

/// Sidecar metadata written next to a label PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSidecar {
    pub n_segments: usize,
    pub method: Method,
    pub params: serde_json::Value,
}

/// Writes the labels as a 16-bit grayscale PNG.
pub fn save_label_png(lm: &LabelMap, path: impl AsRef<Path>) -> Result<(), SegmenterError> {
    if lm.n_segments > u16::MAX as usize + 1 {
        return Err(SegmenterError::TooManyLabels {
            n_segments: lm.n_segments,
        });
    }
    let values: Vec<u16> = lm.labels.iter().map(|&l| l as u16).collect();
    imaging::save_gray16_png(&values, lm.width, lm.height, path.as_ref())?;
    Ok(())
}

pub fn load_label_png(path: impl AsRef<Path>) -> Result<LabelMap, SegmenterError> {
    let (w, h, values) = imaging::load_gray16_png(path.as_ref())?;
    let raw: Vec<usize> = values.iter().map(|&v| v as usize).collect();
    let n_segments = raw.iter().max().map_or(0, |&m| m + 1);
    let lm = LabelMap {
        width: w,
        height: h,
        labels: raw.iter().map(|&v| v as u32).collect(),
        n_segments,
    };
    if !lm.is_dense_partition() {
        return Err(SegmenterError::LabelFile(format!(
            "{}: labels are not dense",
            path.as_ref().display()
        )));
    }
    Ok(lm)
}

/// Writes `<prefix>.labels.png` and `<prefix>.labels.json`.
pub fn save_labels(
    lm: &LabelMap,
    segmenter: &Segmenter,
    prefix: impl AsRef<Path>,
) -> Result<(), SegmenterError> {
    let prefix = prefix.as_ref().display().to_string();
    save_label_png(lm, format!("{prefix}.labels.png"))?;
    let sidecar = LabelSidecar {
        n_segments: lm.n_segments,
        method: segmenter.method(),
        params: segmenter.params_json(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    let path = format!("{prefix}.labels.json");
    std::fs::write(&path, json + "\n").map_err(|source| {
        SegmenterError::Imaging(ImagingError::Io { path, source })
    })
}

/// Row-major grid positions for `count` seeds, placed as evenly as the image
/// shape allows. Returns exactly `count` distinct pixels.
pub(crate) fn grid_seeds(width: usize, height: usize, count: usize) -> Vec<(usize, usize)> {
    let n = width * height;
    assert!(count >= 1 && count <= n);
    let step = (n as f64 / count as f64).sqrt();
    let min_rows = count.div_ceil(width);
    let rows = ((height as f64 / step).round() as usize).clamp(min_rows, height.min(count));
    let mut seeds = Vec::with_capacity(count);
    for r in 0..rows {
        let in_row = count / rows + usize::from(r < count % rows);
        let y = ((r as f64 + 0.5) * height as f64 / rows as f64) as usize;
        for i in 0..in_row {
            let x = ((i as f64 + 0.5) * width as f64 / in_row as f64) as usize;
            seeds.push((x, y));
        }
    }
    seeds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densify_preserves_first_appearance_order() {
        let lm = LabelMap::from_raw(3, 2, &[7, 7, 2, 9, 2, 7]);
        assert_eq!(lm.labels(), &[0, 0, 1, 2, 1, 0]);
        assert_eq!(lm.n_segments(), 3);
        assert!(lm.is_dense_partition());
    }

    #[test]
    fn overlay_single_segment_is_identity() {
        let img = Image::from_fn(5, 4, |x, y| [x as u8, y as u8, 3]);
        let lm = LabelMap::from_raw(5, 4, &[0; 20]);
        assert_eq!(boundary_overlay(&img, &lm, [255, 255, 0]).unwrap(), img);
    }

    #[test]
    fn overlay_two_halves_marks_two_columns() {
        let img = Image::filled(4, 4, [0, 0, 0]);
        let raw: Vec<usize> = (0..16).map(|i| usize::from(i % 4 >= 2)).collect();
        let lm = LabelMap::from_raw(4, 4, &raw);
        let out = boundary_overlay(&img, &lm, [255, 255, 0]).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = if x == 1 || x == 2 { [255, 255, 0] } else { [0, 0, 0] };
                assert_eq!(out.get(x, y), expect);
            }
        }
    }

    #[test]
    fn overlay_rejects_mismatch() {
        let img = Image::filled(4, 4, [0; 3]);
        let lm = LabelMap::from_raw(4, 3, &[0; 12]);
        assert!(matches!(
            boundary_overlay(&img, &lm, [0; 3]),
            Err(SegmenterError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn grid_seeds_exact_and_distinct() {
        for (w, h) in [(12, 12), (16, 128), (1, 9), (7, 3), (128, 16)] {
            for count in [1, 2, 3, 4, 7, 10, w * h / 2, w * h] {
                if count == 0 || count > w * h {
                    continue;
                }
                let seeds = grid_seeds(w, h, count);
                assert_eq!(seeds.len(), count);
                let mut uniq = seeds.clone();
                uniq.sort();
                uniq.dedup();
                assert_eq!(uniq.len(), count, "{w}x{h} {count}");
                assert!(seeds.iter().all(|&(x, y)| x < w && y < h));
            }
        }
        assert_eq!(grid_seeds(12, 12, 4), vec![(3, 3), (9, 3), (3, 9), (9, 9)]);
    }

    #[test]
    fn overrides_reject_unknown_keys() {
        let mut map = serde_json::Map::new();
        map.insert("k".into(), serde_json::json!(12));
        let seg = Segmenter::from_overrides(Method::Slic, &map).unwrap();
        match seg {
            Segmenter::Slic(p) => assert_eq!(p.k, 12),
            other => panic!("{other:?}"),
        }
        map.insert("bogus".into(), serde_json::json!(1));
        assert!(Segmenter::from_overrides(Method::Slic, &map).is_err());
    }

    #[test]
    fn label_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raw: Vec<usize> = (0..30).map(|i| i / 7).collect();
        let lm = LabelMap::from_raw(6, 5, &raw);
        let seg = Segmenter::with_defaults(Method::Slic);
        let prefix = dir.path().join("x");
        save_labels(&lm, &seg, &prefix).unwrap();
        let back = load_label_png(dir.path().join("x.labels.png")).unwrap();
        assert_eq!(back, lm);
        let sidecar: LabelSidecar = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("x.labels.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(sidecar.n_segments, lm.n_segments());
        assert_eq!(sidecar.method, Method::Slic);
    }

    #[test]
    fn label_png_rejects_overflow() {
        let raw: Vec<usize> = (0..70_000).collect();
        let lm = LabelMap::from_raw(700, 100, &raw);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save_label_png(&lm, dir.path().join("big.png")),
            Err(SegmenterError::TooManyLabels { .. })
        ));
    }
}
