//! LIME for images: perturb superpixels, query the classifier, weight the
//! samples by proximity and fit a sparse linear surrogate.

pub mod lasso;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, Gateway, Prediction};
use crate::imaging::{Image, Mask, Rgb};
use crate::segment::{LabelMap, Segmenter, SegmenterError};

pub use lasso::{LassoError, LassoFit, WeightedProblem};

/// Images sent to the classifier per call.
const CLASSIFY_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("segmentation failed: {0}")]
    Segmenter(#[from] SegmenterError),
    #[error("classifying samples {first}..{last}: {source}")]
    Classifier {
        first: usize,
        last: usize,
        #[source]
        source: ClassifierError,
    },
    #[error("the classifier output does not vary across the pool (zero signal)")]
    ZeroSignal,
    #[error("surrogate fit failed: {0}")]
    Numerical(String),
}

impl From<LassoError> for ExplainError {
    fn from(e: LassoError) -> Self {
        match e {
            LassoError::ZeroSignal => ExplainError::ZeroSignal,
            other => ExplainError::Numerical(other.to_string()),
        }
    }
}

/// What an "off" superpixel is painted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Replacement {
    MeanColor,
    FixedColor(Rgb),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub pool_size: usize,
    pub replacement: Replacement,
    pub on_probability: f64,
    pub kernel_width: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            pool_size: 1000,
            replacement: Replacement::FixedColor([128, 128, 128]),
            on_probability: 0.5,
            kernel_width: 0.25,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if self.pool_size < 2 {
            return Err(ExplainError::InvalidConfig("pool_size must be >= 2".into()));
        }
        if !(self.on_probability > 0.0 && self.on_probability < 1.0) {
            return Err(ExplainError::InvalidConfig(
                "on_probability must lie strictly between 0 and 1".into(),
            ));
        }
        if !(self.kernel_width.is_finite() && self.kernel_width > 0.0) {
            return Err(ExplainError::InvalidConfig("kernel_width must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSample {
    /// One bit per superpixel; `true` keeps the patch.
    pub z_prime: Vec<bool>,
    pub prediction: Prediction,
    pub proximity: f64,
}

/// `exp(-d²/σ²)` with `d` the cosine distance between `z` and the all-ones vector.
pub fn proximity(z_prime: &[bool], kernel_width: f64) -> f64 {
    let on = z_prime.iter().filter(|&&b| b).count() as f64;
    let n = z_prime.len() as f64;
    let cosine = (on / n).sqrt();
    let d = 1.0 - cosine;
    (-(d * d) / (kernel_width * kernel_width)).exp()
}

/// Renders perturbed versions of one image for one segmentation.
pub struct PatchRenderer<'a> {
    img: &'a Image,
    members: Vec<Vec<usize>>,
    fill: Vec<Rgb>,
}

impl<'a> PatchRenderer<'a> {
    pub fn new(img: &'a Image, lm: &LabelMap, replacement: Replacement) -> Self {
        let mut members = vec![Vec::new(); lm.n_segments()];
        for (i, &l) in lm.labels().iter().enumerate() {
            members[l as usize].push(i);
        }
        let fill = members
            .iter()
            .map(|px| match replacement {
                Replacement::FixedColor(c) => c,
                Replacement::MeanColor => {
                    let mut sum = [0u64; 3];
                    for &i in px {
                        for c in 0..3 {
                            sum[c] += img.pixels()[i][c] as u64;
                        }
                    }
                    let n = px.len().max(1) as f64;
                    sum.map(|s| (s as f64 / n).round() as u8)
                }
            })
            .collect();
        Self { img, members, fill }
    }

    pub fn render(&self, z_prime: &[bool]) -> Image {
        let mut out = self.img.clone();
        let pixels = out.pixels_mut();
        for (seg, &on) in z_prime.iter().enumerate() {
            if !on {
                for &i in &self.members[seg] {
                    pixels[i] = self.fill[seg];
                }
            }
        }
        out
    }
}

/// Draws the perturbation pool. Sample 0 is always the unperturbed image.
pub fn sample_pool(
    lm: &LabelMap,
    img: &Image,
    cfg: &PerturbationConfig,
    classifier: &Gateway,
) -> Result<Vec<PerturbedSample>, ExplainError> {
    cfg.validate()?;
    if img.dims() != lm.dims() {
        return Err(ExplainError::Segmenter(SegmenterError::DimensionMismatch {
            image: img.dims(),
            labels: lm.dims(),
        }));
    }
    let n_seg = lm.n_segments();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut codes: Vec<Vec<bool>> = Vec::with_capacity(cfg.pool_size);
    codes.push(vec![true; n_seg]);
    for _ in 1..cfg.pool_size {
        codes.push((0..n_seg).map(|_| rng.random::<f64>() < cfg.on_probability).collect());
    }

    let renderer = PatchRenderer::new(img, lm, cfg.replacement);
    let mut samples = Vec::with_capacity(cfg.pool_size);
    for (chunk_idx, chunk) in codes.chunks(CLASSIFY_CHUNK).enumerate() {
        let first = chunk_idx * CLASSIFY_CHUNK;
        let images: Vec<Image> = chunk.iter().map(|z| renderer.render(z)).collect();
        let predictions = classifier
            .classify_batch(&images)
            .map_err(|source| ExplainError::Classifier {
                first,
                last: first + chunk.len() - 1,
                source,
            })?;
        for (z, prediction) in chunk.iter().zip(predictions) {
            samples.push(PerturbedSample {
                proximity: proximity(z, cfg.kernel_width),
                z_prime: z.clone(),
                prediction,
            });
        }
    }
    Ok(samples)
}

/// The fitted sparse linear surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub target_class: usize,
    /// `(superpixel, weight)` sorted by descending |weight|.
    pub selected: Vec<(usize, f64)>,
    pub intercept: f64,
}

impl Surrogate {
    pub fn weight_of(&self, segment: usize) -> Option<f64> {
        self.selected
            .iter()
            .find(|(s, _)| *s == segment)
            .map(|&(_, w)| w)
    }
}

/// K-Lasso: select `k` superpixels along the Lasso path, then refit them by
/// weighted least squares.
pub fn fit_k_lasso(
    samples: &[PerturbedSample],
    k: usize,
    target_class: usize,
) -> Result<Surrogate, ExplainError> {
    if samples.len() < 2 {
        return Err(ExplainError::InvalidConfig("need at least 2 samples".into()));
    }
    if k < 1 {
        return Err(ExplainError::InvalidConfig("K must be >= 1".into()));
    }
    if let Some(bad) = samples
        .iter()
        .position(|s| target_class >= s.prediction.probabilities.len())
    {
        return Err(ExplainError::InvalidConfig(format!(
            "target class {target_class} out of range for sample {bad}"
        )));
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.z_prime.iter().map(|&b| f64::from(u8::from(b))).collect())
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.prediction.prob(target_class)).collect();
    let weights: Vec<f64> = samples.iter().map(|s| s.proximity).collect();

    let problem = WeightedProblem::new(&rows, &y, &weights)?;
    let features = problem.k_lasso_select(k);
    let fit = problem.refit(&features, lasso::REFIT_RIDGE)?;

    let mut selected: Vec<(usize, f64)> = features.iter().map(|&j| (j, fit.coef[j])).collect();
    selected.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    Ok(Surrogate {
        target_class,
        selected,
        intercept: fit.intercept,
    })
}

/// A complete explanation: the segmentation used plus the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub segmenter: Segmenter,
    pub seed: u64,
    pub k: usize,
    pub segmentation: LabelMap,
    pub surrogate: Surrogate,
}

/// JSON form of an [`Explanation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub method: String,
    pub params: serde_json::Value,
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub target_class: usize,
    pub intercept: f64,
    pub selected: Vec<SelectedPatch>,
    pub n_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPatch {
    pub segment: usize,
    pub weight: f64,
}

impl Explanation {
    pub fn to_record(&self) -> ExplanationRecord {
        ExplanationRecord {
            method: self.segmenter.method().name().to_string(),
            params: self.segmenter.params_json(),
            seed: self.seed,
            k: self.k,
            target_class: self.surrogate.target_class,
            intercept: self.surrogate.intercept,
            selected: self
                .surrogate
                .selected
                .iter()
                .map(|&(segment, weight)| SelectedPatch { segment, weight })
                .collect(),
            n_segments: self.segmentation.n_segments(),
        }
    }
}

/// Segment, sample and fit. `target_class` defaults to the classifier's
/// decision on the unperturbed image.
pub fn explain(
    img: &Image,
    classifier: &Gateway,
    segmenter: &Segmenter,
    cfg: &PerturbationConfig,
    k: usize,
    target_class: Option<usize>,
) -> Result<Explanation, ExplainError> {
    cfg.validate()?;
    let segmentation = segmenter.segment(img, cfg.seed)?;
    explain_with_segmentation(img, classifier, segmenter, segmentation, cfg, k, target_class)
}

pub fn explain_with_segmentation(
    img: &Image,
    classifier: &Gateway,
    segmenter: &Segmenter,
    segmentation: LabelMap,
    cfg: &PerturbationConfig,
    k: usize,
    target_class: Option<usize>,
) -> Result<Explanation, ExplainError> {
    let samples = sample_pool(&segmentation, img, cfg, classifier)?;
    let target = target_class.unwrap_or_else(|| samples[0].prediction.argmax());
    let surrogate = fit_k_lasso(&samples, k, target)?;
    Ok(Explanation {
        segmenter: segmenter.clone(),
        seed: cfg.seed,
        k,
        segmentation,
        surrogate,
    })
}

/// Mask of the `top` most influential positively weighted patches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationMask {
    pub mask: Mask,
    /// Set when no selected patch has positive weight.
    pub empty: bool,
}

pub fn explanation_mask(e: &Explanation, top: usize) -> Result<ExplanationMask, ExplainError> {
    if top < 1 {
        return Err(ExplainError::InvalidConfig("top must be >= 1".into()));
    }
    let chosen: Vec<usize> = e
        .surrogate
        .selected
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .take(top)
        .map(|&(s, _)| s)
        .collect();
    let lm = &e.segmentation;
    let bits = lm
        .labels()
        .iter()
        .map(|&l| chosen.contains(&(l as usize)))
        .collect();
    Ok(ExplanationMask {
        mask: Mask::new(lm.width(), lm.height(), bits).expect("label map dimensions"),
        empty: chosen.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierSpec;
    use crate::segment::{Method, SlicParams};

    fn stub() -> Gateway {
        Gateway::new(ClassifierSpec::BuiltinStub).unwrap()
    }

    #[test]
    fn proximity_values() {
        assert_eq!(proximity(&[true; 6], 0.25), 1.0);
        let half = [true, false, true, false];
        let d = 1.0 - 0.5f64.sqrt();
        let expected = (-(d * d) / 0.0625).exp();
        assert!((proximity(&half, 0.25) - expected).abs() < 1e-15);
        assert!((expected - 0.2535).abs() < 1e-4);
        let off = proximity(&[false; 4], 0.25);
        assert!(off > 0.0 && off < expected);
    }

    #[test]
    fn proximity_nonincreasing_in_off_bits() {
        let n = 12;
        let mut last = 1.0;
        for off in 0..=n {
            let z: Vec<bool> = (0..n).map(|i| i >= off).collect();
            let p = proximity(&z, 0.25);
            assert!(p <= last && p > 0.0);
            last = p;
        }
    }

    #[test]
    fn rendering_keeps_on_patches() {
        let img = Image::from_fn(6, 4, |x, y| [x as u8 * 30, y as u8 * 60, 200]);
        let raw: Vec<usize> = (0..24).map(|i| (i % 6) / 2).collect();
        let lm = LabelMap::from_raw(6, 4, &raw);
        let r = PatchRenderer::new(&img, &lm, Replacement::FixedColor([128; 3]));
        assert_eq!(r.render(&[true; 3]), img);
        assert_eq!(r.render(&[false; 3]), Image::filled(6, 4, [128; 3]));
        let mixed = r.render(&[true, false, true]);
        for y in 0..4 {
            for x in 0..6 {
                let expect = if x / 2 == 1 { [128; 3] } else { img.get(x, y) };
                assert_eq!(mixed.get(x, y), expect);
            }
        }
        let mean = PatchRenderer::new(&img, &lm, Replacement::MeanColor);
        let off = mean.render(&[false, true, true]);
        assert_eq!(off.get(0, 0), [15, 90, 200]);
    }

    #[test]
    fn pool_anchor_and_size() {
        let img = Image::from_fn(16, 16, |x, y| if x < 5 && y < 5 { [30, 20, 180] } else { [220, 170, 190] });
        let lm = Segmenter::with_defaults(Method::CompactWatershed)
            .segment(&img, 0)
            .unwrap();
        let cfg = PerturbationConfig {
            pool_size: 40,
            ..Default::default()
        };
        let pool = sample_pool(&lm, &img, &cfg, &stub()).unwrap();
        assert_eq!(pool.len(), 40);
        assert!(pool[0].z_prime.iter().all(|&b| b));
        assert_eq!(pool[0].proximity, 1.0);
        assert!(pool.iter().all(|s| s.z_prime.len() == lm.n_segments()));
    }

    fn synthetic_pool(n: usize, p: usize, f: impl Fn(&[bool]) -> f64) -> Vec<PerturbedSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..n)
            .map(|i| {
                let z: Vec<bool> = if i == 0 {
                    vec![true; p]
                } else {
                    (0..p).map(|_| rng.random_bool(0.5)).collect()
                };
                let y = f(&z);
                PerturbedSample {
                    proximity: proximity(&z, 0.25),
                    prediction: Prediction {
                        probabilities: vec![1.0 - y, y],
                        class_names: vec!["a".into(), "b".into()],
                    },
                    z_prime: z,
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_single_feature_recovery() {
        let pool = synthetic_pool(300, 8, |z| 0.2 * f64::from(u8::from(z[3])));
        let s = fit_k_lasso(&pool, 1, 1).unwrap();
        assert_eq!(s.selected.len(), 1);
        assert_eq!(s.selected[0].0, 3);
        assert!((s.selected[0].1 - 0.2).abs() < 1e-6);
        assert!(s.intercept.abs() < 1e-6);
    }

    #[test]
    fn zero_signal_pool() {
        let pool = synthetic_pool(20, 4, |_| 0.3);
        assert!(matches!(fit_k_lasso(&pool, 2, 1), Err(ExplainError::ZeroSignal)));
    }

    #[test]
    fn single_segment_explanation() {
        let img = Image::from_fn(10, 10, |x, _| if x < 3 { [20, 20, 200] } else { [200, 200, 200] });
        let seg = Segmenter::Slic(SlicParams {
            k: 1,
            ..Default::default()
        });
        let cfg = PerturbationConfig {
            pool_size: 30,
            ..Default::default()
        };
        let e = explain(&img, &stub(), &seg, &cfg, 5, None).unwrap();
        assert_eq!(e.segmentation.n_segments(), 1);
        assert_eq!(e.surrogate.selected.len(), 1);
        assert_eq!(e.surrogate.selected[0].0, 0);
        let m = explanation_mask(&e, 1).unwrap();
        assert!(!m.empty);
        assert_eq!(m.mask.count(), 100);
    }

    #[test]
    fn mask_respects_sign_and_top() {
        let lm = LabelMap::from_raw(4, 1, &[0, 1, 2, 3]);
        let e = Explanation {
            segmenter: Segmenter::with_defaults(Method::Slic),
            seed: 0,
            k: 3,
            segmentation: lm,
            surrogate: Surrogate {
                target_class: 1,
                selected: vec![(2, -0.9), (0, 0.5), (3, 0.1)],
                intercept: 0.0,
            },
        };
        let m1 = explanation_mask(&e, 1).unwrap();
        assert_eq!(m1.mask.bits(), &[true, false, false, false]);
        let m3 = explanation_mask(&e, 3).unwrap();
        assert_eq!(m3.mask.bits(), &[true, false, false, true]);
        assert!(explanation_mask(&e, 0).is_err());

        let negative = Explanation {
            surrogate: Surrogate {
                selected: vec![(1, -0.2)],
                ..e.surrogate.clone()
            },
            ..e
        };
        let m = explanation_mask(&negative, 1).unwrap();
        assert!(m.empty && m.mask.is_blank());
    }
}
