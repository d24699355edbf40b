//! Synthetic "stained cell" corpus: a pink disk on a grey background with one
//! dark blue-purple blob inside it. The blob is the reference relevance mask.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evaluation::REFERENCE_SUFFIX;
use crate::imaging::{save_mask_png, save_png, Image, ImagingError, Mask, Rgb};

const BACKGROUND: Rgb = [200, 200, 200];
const CELL: Rgb = [228, 168, 178];
const BLOB: Rgb = [72, 40, 128];
/// Per-channel uniform noise amplitude. Small enough that neither background
/// nor cell pixels can pass the stub's stain test.
const NOISE: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Disk {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (dx, dy) = (x as f64 - self.cx, y as f64 - self.cy);
        dx * dx + dy * dy <= self.r * self.r
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub id: String,
    pub image: Image,
    pub reference: Mask,
    pub cell: Disk,
    pub blob: Disk,
}

pub fn sample_id(index: usize) -> String {
    format!("cell_{index:05}")
}

/// `count` images of `size`×`size`, fully determined by `seed`.
pub fn synth_corpus(count: usize, size: usize, seed: u64) -> Vec<SynthSample> {
    assert!(size >= 8, "synthetic images need at least 8x8 pixels");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    (0..count)
        .map(|index| {
            let cell = Disk {
                cx: s / 2.0 + rng.random_range(-0.05..0.05) * s,
                cy: s / 2.0 + rng.random_range(-0.05..0.05) * s,
                r: rng.random_range(0.36..0.44) * s,
            };
            let r = rng.random_range(0.08..0.14) * s;
            let reach = (cell.r - r - 1.0).max(0.0);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = rng.random::<f64>().sqrt() * reach;
            let blob = Disk {
                cx: cell.cx + dist * angle.cos(),
                cy: cell.cy + dist * angle.sin(),
                r,
            };
            let image = Image::from_fn(size, size, |x, y| {
                let base = if blob.contains(x, y) {
                    BLOB
                } else if cell.contains(x, y) {
                    CELL
                } else {
                    BACKGROUND
                };
                base.map(|c| (c as i32 + rng.random_range(-NOISE..=NOISE)).clamp(0, 255) as u8)
            });
            let reference = Mask::from_fn(size, size, |x, y| blob.contains(x, y));
            SynthSample {
                id: sample_id(index),
                image,
                reference,
                cell,
                blob,
            }
        })
        .collect()
}

/// Writes `<id>.png` and `<id>.ref.png` for every sample.
pub fn write_corpus(dir: impl AsRef<Path>, samples: &[SynthSample]) -> Result<(), ImagingError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| ImagingError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for s in samples {
        save_png(&s.image, dir.join(format!("{}.png", s.id)))?;
        save_mask_png(&s.reference, dir.join(format!("{}{REFERENCE_SUFFIX}", s.id)))?;
    }
    Ok(())
}
