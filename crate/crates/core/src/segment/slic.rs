//! SLIC: localized k-means over `[l, a, b, x, y]`.

use serde::{Deserialize, Serialize};

use super::{connected_components, invalid, Connectivity, LabelMap, Method, SegmenterError};
use crate::imaging::{gradient_magnitude, rgb_to_lab, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlicParams {
    /// Requested number of superpixels.
    pub k: usize,
    /// Compactness m.
    pub m: f64,
    pub max_iters: usize,
    /// Stop once the summed center displacement falls to this value.
    pub threshold: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            k: 100,
            m: 10.0,
            max_iters: 10,
            threshold: 0.5,
        }
    }
}

impl SlicParams {
    fn validate(&self, img: &Image) -> Result<(), SegmenterError> {
        let method = Method::Slic;
        if self.k < 1 || self.k > img.len() {
            return Err(invalid(method, "k must lie in 1..=width*height"));
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(invalid(method, "m must be finite and > 0"));
        }
        if self.max_iters < 1 {
            return Err(invalid(method, "max_iters must be >= 1"));
        }
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(invalid(method, "threshold must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Combined color/space distance `√(d_c² + (d_s/S)² m²)`.
pub fn slic_distance(color_dist: f64, spatial_dist: f64, step: f64, m: f64) -> f64 {
    squared_distance(color_dist * color_dist, spatial_dist * spatial_dist, step, m).sqrt()
}

#[inline]
fn squared_distance(dc2: f64, ds2: f64, step: f64, m: f64) -> f64 {
    dc2 + ds2 / (step * step) * m * m
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// Clustering state after the iterative phase, before connectivity repair.
#[derive(Debug, Clone)]
pub struct SlicTrace {
    /// Grid step S.
    pub step: f64,
    /// Residual E after each iteration.
    pub residuals: Vec<f64>,
    pub initial_centers: Vec<(f64, f64)>,
}

pub fn segment_slic(img: &Image, p: &SlicParams) -> Result<LabelMap, SegmenterError> {
    slic_with_trace(img, p).map(|(lm, _)| lm)
}

pub fn slic_with_trace(img: &Image, p: &SlicParams) -> Result<(LabelMap, SlicTrace), SegmenterError> {
    p.validate(img)?;
    let (w, h) = img.dims();
    let n = w * h;
    let lab = rgb_to_lab(img);
    let grad = gradient_magnitude(&lab);
    let step = (n as f64 / p.k as f64).sqrt();

    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // Geometric middle of the grid cell in pixel-index coordinates.
            let cx = (i as f64 + 0.5) * sx - 0.5;
            let cy = (j as f64 + 0.5) * sy - 0.5;
            let (px, py) = (
                (cx.round() as usize).min(w - 1),
                (cy.round() as usize).min(h - 1),
            );
            // Move to the lowest gradient in the 3x3 neighbourhood, staying
            // put unless strictly lower.
            let mut best = (grad.get(px, py), px, py);
            for yy in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for xx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let g = grad.get(xx, yy);
                    if g < best.0 {
                        best = (g, xx, yy);
                    }
                }
            }
            let (x, y) = if (best.1, best.2) == (px, py) {
                (cx, cy)
            } else {
                (best.1 as f64, best.2 as f64)
            };
            centers.push(Center {
                lab: lab.get(best.1, best.2),
                x,
                y,
            });
        }
    }
    let initial_centers = centers.iter().map(|c| (c.x, c.y)).collect();

    let mut labels = vec![0usize; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut residuals = Vec::new();
    for _ in 0..p.max_iters {
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - step).ceil().max(0.0) as usize;
            let x1 = ((c.x + step).floor() as isize).min(w as isize - 1);
            let y0 = (c.y - step).ceil().max(0.0) as usize;
            let y1 = ((c.y + step).floor() as isize).min(h as isize - 1);
            if x1 < 0 || y1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let i = y * w + x;
                    let d = squared_distance(
                        color_dist2(lab.pixels()[i], c.lab),
                        (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2),
                        step,
                        p.m,
                    );
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci;
                    }
                }
            }
        }
        // Pixels outside every search window fall back to a global search.
        for i in 0..n {
            if dist[i].is_finite() {
                continue;
            }
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            for (ci, c) in centers.iter().enumerate() {
                let d = squared_distance(
                    color_dist2(lab.pixels()[i], c.lab),
                    (x - c.x).powi(2) + (y - c.y).powi(2),
                    step,
                    p.m,
                );
                if d < dist[i] {
                    dist[i] = d;
                    labels[i] = ci;
                }
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let px = lab.pixels()[i];
            let s = &mut sums[l];
            s[0] += px[0];
            s[1] += px[1];
            s[2] += px[2];
            s[3] += (i % w) as f64;
            s[4] += (i / w) as f64;
            s[5] += 1.0;
        }
        let mut residual = 0.0;
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] == 0.0 {
                continue;
            }
            let moved = Center {
                lab: [s[0] / s[5], s[1] / s[5], s[2] / s[5]],
                x: s[3] / s[5],
                y: s[4] / s[5],
            };
            residual += ((moved.x - c.x).powi(2) + (moved.y - c.y).powi(2)).sqrt();
            *c = moved;
        }
        residuals.push(residual);
        if residual <= p.threshold {
            break;
        }
    }

    let repaired = enforce_connectivity(w, h, &labels, &centers);
    Ok((
        LabelMap::from_raw(w, h, &repaired),
        SlicTrace {
            step,
            residuals,
            initial_centers,
        },
    ))
}

#[inline]
fn color_dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Keeps one 4-connected piece per cluster (the one holding the center's
/// pixel, else the largest) and folds every other piece into the adjacent
/// segment it shares the longest border with.
fn enforce_connectivity(w: usize, h: usize, labels: &[usize], centers: &[Center]) -> Vec<usize> {
    let comp = connected_components(w, h, labels, Connectivity::Four);
    let n_comp = comp.iter().max().map_or(0, |&m| m + 1);
    let mut comp_label = vec![0usize; n_comp];
    let mut comp_size = vec![0usize; n_comp];
    for (i, &c) in comp.iter().enumerate() {
        comp_label[c] = labels[i];
        comp_size[c] += 1;
    }

    let mut keeper: Vec<Option<usize>> = vec![None; centers.len()];
    for c in 0..n_comp {
        let l = comp_label[c];
        if keeper[l].is_none_or(|k| comp_size[c] > comp_size[k]) {
            keeper[l] = Some(c);
        }
    }
    // The piece holding the center's own pixel wins over the largest one.
    for (ci, c) in centers.iter().enumerate() {
        let px = (c.x.round().max(0.0) as usize).min(w - 1);
        let py = (c.y.round().max(0.0) as usize).min(h - 1);
        let at = py * w + px;
        if labels[at] == ci {
            keeper[ci] = Some(comp[at]);
        }
    }

    let mut final_label: Vec<Option<usize>> = vec![None; n_comp];
    for (l, k) in keeper.iter().enumerate() {
        if let Some(k) = k {
            final_label[*k] = Some(l);
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for (i, &c) in comp.iter().enumerate() {
        members[c].push(i);
    }

    loop {
        let mut pending = false;
        let mut progressed = false;
        for c in 0..n_comp {
            if final_label[c].is_some() {
                continue;
            }
            let mut border: Vec<(usize, usize)> = Vec::new();
            for &i in &members[c] {
                let (x, y) = (i % w, i / w);
                let neighbours = [
                    (x > 0).then(|| i - 1),
                    (x + 1 < w).then(|| i + 1),
                    (y > 0).then(|| i - w),
                    (y + 1 < h).then(|| i + w),
                ];
                for j in neighbours.into_iter().flatten() {
                    if comp[j] == c {
                        continue;
                    }
                    if let Some(l) = final_label[comp[j]] {
                        match border.iter_mut().find(|(bl, _)| *bl == l) {
                            Some(entry) => entry.1 += 1,
                            None => border.push((l, 1)),
                        }
                    }
                }
            }
            let best = border
                .iter()
                .copied()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
            match best {
                Some((l, _)) => {
                    final_label[c] = Some(l);
                    progressed = true;
                }
                None => pending = true,
            }
        }
        if !pending {
            break;
        }
        assert!(progressed, "orphan pieces with no labelled neighbour");
    }

    comp.iter()
        .map(|&c| final_label[c].expect("every piece is assigned"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_kernel() {
        let d = slic_distance(10.0, 5.0, 10.0, 10.0);
        assert!((d - 125f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_step_from_count() {
        let img = Image::filled(100, 100, [50; 3]);
        let p = SlicParams {
            k: 100,
            max_iters: 1,
            ..Default::default()
        };
        let (_, trace) = slic_with_trace(&img, &p).unwrap();
        assert_eq!(trace.step, 10.0);
        assert_eq!(trace.initial_centers.len(), 100);
        assert_eq!(trace.initial_centers[0], (4.5, 4.5));
        assert_eq!(trace.initial_centers[1], (14.5, 4.5));
    }

    #[test]
    fn constant_image_four_quadrants() {
        let img = Image::filled(20, 20, [120, 30, 200]);
        let p = SlicParams {
            k: 4,
            ..Default::default()
        };
        let lm = segment_slic(&img, &p).unwrap();
        assert_eq!(lm.n_segments(), 4);
        assert_eq!(lm.sizes(), vec![100; 4]);
        // Brute-force one assignment step: nearest of the four cell middles.
        let mids = [(4.5, 4.5), (14.5, 4.5), (4.5, 14.5), (14.5, 14.5)];
        for y in 0..20 {
            for x in 0..20 {
                let nearest = (0..4)
                    .min_by(|&a, &b| {
                        let da = (x as f64 - mids[a].0).powi(2) + (y as f64 - mids[a].1).powi(2);
                        let db = (x as f64 - mids[b].0).powi(2) + (y as f64 - mids[b].1).powi(2);
                        da.total_cmp(&db)
                    })
                    .unwrap();
                assert_eq!(lm.get(x, y) as usize, nearest);
            }
        }
    }

    #[test]
    fn residuals_finite_and_bounded_iterations() {
        let img = Image::from_fn(40, 30, |x, y| [(x * 6) as u8, (y * 8) as u8, ((x + y) * 3) as u8]);
        let p = SlicParams {
            k: 12,
            max_iters: 7,
            threshold: 0.0,
            ..Default::default()
        };
        let (lm, trace) = slic_with_trace(&img, &p).unwrap();
        assert!(!trace.residuals.is_empty() && trace.residuals.len() <= 7);
        assert!(trace.residuals.iter().all(|r| r.is_finite()));
        assert!(lm.segments_connected(Connectivity::Four));
    }

    #[test]
    fn count_contract_on_textured_image() {
        let img = Image::from_fn(64, 48, |x, y| {
            [((x * 13 + y * 7) % 256) as u8, ((x * y) % 256) as u8, ((x ^ y) * 4 % 256) as u8]
        });
        for k in [4, 10, 25, 60, 100] {
            let lm = segment_slic(&img, &SlicParams { k, ..Default::default() }).unwrap();
            let n = lm.n_segments() as f64;
            assert!(n >= 0.5 * k as f64 && n <= 2.0 * k as f64, "k={k} n={n}");
            assert!(lm.segments_connected(Connectivity::Four));
        }
    }

    #[test]
    fn rejects_k_larger_than_image() {
        let img = Image::filled(3, 3, [0; 3]);
        assert!(segment_slic(&img, &SlicParams { k: 10, ..Default::default() }).is_err());
    }
}
