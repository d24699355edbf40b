//! Scoring explanations against reference relevance masks.
//!
//! Each corpus image is classified once; images passing the verdict filter
//! are explained with every configured segmenter, the top-1 explanation mask
//! is compared to the reference with the Jaccard coefficient, and the scores
//! are aggregated per method (mean, population variance, standard deviation).

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, Gateway};
use crate::explain::{explain, explanation_mask, ExplainError, PerturbationConfig};
use crate::imaging::{load_mask_png, load_png, Image, ImagingError, Mask};
use crate::segment::{Method, Segmenter, SegmenterError};

pub const REFERENCE_SUFFIX: &str = ".ref.png";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mask dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("Jaccard coefficient is undefined for two empty masks")]
    BothEmpty,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("classifying corpus: {0}")]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error("every grid point failed:\n{}", .reasons.join("\n"))]
    SweepFailed { reasons: Vec<String> },
    #[error("{path}: {reason}")]
    Output { path: String, reason: String },
}

/// `|a ∩ b| / |a ∪ b|`.
pub fn jaccard(a: &Mask, b: &Mask) -> Result<f64, EvalError> {
    if a.dims() != b.dims() {
        return Err(EvalError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        return Err(EvalError::BothEmpty);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    TruePositive,
    FalseNegative,
    Other,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::TruePositive => "true-positive",
            Verdict::FalseNegative => "false-negative",
            Verdict::Other => "other",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictFilter {
    #[default]
    TruePositive,
    FalseNegative,
    All,
}

impl VerdictFilter {
    pub fn name(self) -> &'static str {
        match self {
            VerdictFilter::TruePositive => "true-positive",
            VerdictFilter::FalseNegative => "false-negative",
            VerdictFilter::All => "all",
        }
    }

    pub fn admits(self, v: Verdict) -> bool {
        match self {
            VerdictFilter::TruePositive => v == Verdict::TruePositive,
            VerdictFilter::FalseNegative => v == Verdict::FalseNegative,
            VerdictFilter::All => true,
        }
    }
}

/// Corpus image with its reference relevance mask. Every corpus image is a
/// positive instance; the verdict records what the classifier made of it.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub image: Image,
    pub reference: Mask,
}

/// Loads every `<stem>.png` with a matching `<stem>.ref.png`, sorted by name.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<CorpusItem>, EvalError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|source| ImagingError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut images: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| ImagingError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".png") && !name.ends_with(REFERENCE_SUFFIX) {
            images.push(path);
        }
    }
    images.sort();
    images
        .into_iter()
        .map(|path| {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let stem = name.trim_end_matches(".png").to_string();
            let ref_path = dir.join(format!("{stem}{REFERENCE_SUFFIX}"));
            if !ref_path.exists() {
                return Err(EvalError::Corpus(format!(
                    "{} has no reference mask {}",
                    path.display(),
                    ref_path.display()
                )));
            }
            Ok(CorpusItem {
                id: stem,
                image: load_png(&path)?,
                reference: load_mask_png(&ref_path)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub perturbation: PerturbationConfig,
    /// Feature limit K of the surrogate.
    pub k: usize,
    /// Number of top patches forming the explanation mask.
    pub top: usize,
    /// Index of the class that marks a positive decision.
    pub positive_class: usize,
    pub filter: VerdictFilter,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            perturbation: PerturbationConfig::default(),
            k: 5,
            top: 1,
            positive_class: 1,
            filter: VerdictFilter::TruePositive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image: String,
    pub method: Method,
    pub verdict: Verdict,
    pub jaccard: f64,
    pub n_segments: usize,
    /// More than a quarter as many segments as pixels.
    #[serde(skip)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub image: String,
    pub method: Option<Method>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: Method,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variance_estimator: String,
    pub filter: VerdictFilter,
    pub rows: Vec<MethodStats>,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub records: Vec<EvalRecord>,
    pub failures: Vec<Failure>,
}

/// Mean, population variance and standard deviation.
pub fn summarize(values: &[f64]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, variance, variance.sqrt())
}

fn verdict_of(predicted: usize, positive: usize) -> Verdict {
    if predicted == positive {
        Verdict::TruePositive
    } else if predicted == 0 || (positive == 0 && predicted == 1) {
        Verdict::FalseNegative
    } else {
        Verdict::Other
    }
}

/// Classifies every corpus image once.
pub fn corpus_verdicts(
    corpus: &[CorpusItem],
    classifier: &Gateway,
    positive_class: usize,
) -> Result<Vec<Verdict>, EvalError> {
    let images: Vec<Image> = corpus.iter().map(|c| c.image.clone()).collect();
    Ok(classifier
        .classify_batch(&images)?
        .iter()
        .map(|p| verdict_of(p.argmax(), positive_class))
        .collect())
}

fn score_one(
    item: &CorpusItem,
    index: usize,
    verdict: Verdict,
    segmenter: &Segmenter,
    classifier: &Gateway,
    cfg: &EvalConfig,
) -> Result<EvalRecord, String> {
    if item.reference.dims() != item.image.dims() {
        return Err(format!(
            "reference mask is {:?}, image is {:?}",
            item.reference.dims(),
            item.image.dims()
        ));
    }
    if item.reference.is_blank() {
        return Err("reference mask has no relevant pixel".into());
    }
    let perturbation = PerturbationConfig {
        seed: cfg.perturbation.seed ^ index as u64,
        ..cfg.perturbation.clone()
    };
    let target = (verdict == Verdict::TruePositive).then_some(cfg.positive_class);
    let e = explain(&item.image, classifier, segmenter, &perturbation, cfg.k, target)
        .map_err(|e: ExplainError| e.to_string())?;
    let m = explanation_mask(&e, cfg.top).map_err(|e| e.to_string())?;
    let j = jaccard(&m.mask, &item.reference).map_err(|e| e.to_string())?;
    let n_segments = e.segmentation.n_segments();
    Ok(EvalRecord {
        image: item.id.clone(),
        method: segmenter.method(),
        verdict,
        jaccard: j,
        n_segments,
        degenerate: n_segments > item.image.len() / 4,
    })
}

fn aggregate(
    segmenters: &[Segmenter],
    records: &[EvalRecord],
    filter: VerdictFilter,
) -> EvalReport {
    let mut rows = Vec::new();
    let mut seen = Vec::new();
    for s in segmenters {
        let method = s.method();
        if seen.contains(&method) {
            continue;
        }
        seen.push(method);
        let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.method == method).collect();
        let values: Vec<f64> = mine.iter().map(|r| r.jaccard).collect();
        let (mean, variance, std) = summarize(&values);
        rows.push(MethodStats {
            method,
            count: values.len(),
            mean,
            variance,
            std,
            degenerate: mine.iter().filter(|r| r.degenerate).count(),
        });
    }
    EvalReport {
        variance_estimator: "population".into(),
        filter,
        rows,
    }
}

fn evaluate_with_verdicts(
    corpus: &[CorpusItem],
    verdicts: &[Verdict],
    segmenters: &[Segmenter],
    classifier: &Gateway,
    cfg: &EvalConfig,
) -> (Vec<EvalRecord>, Vec<Failure>) {
    let per_image: Vec<(Vec<EvalRecord>, Vec<Failure>)> = corpus
        .par_iter()
        .enumerate()
        .map(|(index, item)| {
            let verdict = verdicts[index];
            let mut records = Vec::new();
            let mut failures = Vec::new();
            if !cfg.filter.admits(verdict) {
                return (records, failures);
            }
            for seg in segmenters {
                match score_one(item, index, verdict, seg, classifier, cfg) {
                    Ok(r) => records.push(r),
                    Err(reason) => failures.push(Failure {
                        image: item.id.clone(),
                        method: Some(seg.method()),
                        reason,
                    }),
                }
            }
            (records, failures)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_image {
        records.extend(r);
        failures.extend(f);
    }
    (records, failures)
}

pub fn evaluate_corpus(
    corpus: &[CorpusItem],
    segmenters: &[Segmenter],
    classifier: &Gateway,
    cfg: &EvalConfig,
) -> Result<EvalOutcome, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    cfg.perturbation
        .validate()
        .map_err(|e| EvalError::Corpus(e.to_string()))?;
    let verdicts = corpus_verdicts(corpus, classifier, cfg.positive_class)?;
    let (records, failures) = evaluate_with_verdicts(corpus, &verdicts, segmenters, classifier, cfg);
    Ok(EvalOutcome {
        report: aggregate(segmenters, &records, cfg.filter),
        records,
        failures,
    })
}

/// Builds every combination of the axis values on top of the method's
/// defaults. The first axis varies slowest.
pub fn expand_grid(
    method: Method,
    axes: &[(String, Vec<serde_json::Value>)],
) -> Result<Vec<Segmenter>, EvalError> {
    if axes.iter().any(|(_, values)| values.is_empty()) {
        return Err(EvalError::EmptyGrid);
    }
    let mut points: Vec<serde_json::Map<String, serde_json::Value>> = vec![serde_json::Map::new()];
    for (name, values) in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    points
        .iter()
        .map(|p| Segmenter::from_overrides(method, p).map_err(EvalError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub segmenter: Segmenter,
    pub mean: Option<f64>,
    pub included: usize,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best: Segmenter,
    pub best_mean: f64,
    pub points: Vec<SweepPoint>,
}

/// Exhaustive grid search maximizing the mean true-positive Jaccard.
/// Ties go to the earlier grid point.
pub fn sweep(
    grid: &[Segmenter],
    corpus: &[CorpusItem],
    classifier: &Gateway,
    cfg: &EvalConfig,
) -> Result<SweepResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let cfg = EvalConfig {
        filter: VerdictFilter::TruePositive,
        ..cfg.clone()
    };
    let verdicts = corpus_verdicts(corpus, classifier, cfg.positive_class)?;
    let points: Vec<SweepPoint> = grid
        .iter()
        .map(|seg| {
            let (records, failures) =
                evaluate_with_verdicts(corpus, &verdicts, std::slice::from_ref(seg), classifier, &cfg);
            let values: Vec<f64> = records.iter().map(|r| r.jaccard).collect();
            SweepPoint {
                segmenter: seg.clone(),
                mean: (!values.is_empty()).then(|| summarize(&values).0),
                included: values.len(),
                failures,
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if let Some(m) = p.mean {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    match best {
        Some((i, m)) => Ok(SweepResult {
            best: points[i].segmenter.clone(),
            best_mean: m,
            points,
        }),
        None => Err(EvalError::SweepFailed {
            reasons: points
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let why = p
                        .failures
                        .first()
                        .map_or("no true-positive images".to_string(), |f| f.reason.clone());
                    format!("point {i}: {why}")
                })
                .collect(),
        }),
    }
}

fn output_err(path: &Path, e: impl fmt::Display) -> EvalError {
    EvalError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

pub const RECORDS_HEADER: [&str; 5] = ["image", "method", "verdict", "jaccard", "n_segments"];

pub fn write_records_csv(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| output_err(path, e))?;
    w.write_record(RECORDS_HEADER).map_err(|e| output_err(path, e))?;
    for r in records {
        w.write_record([
            r.image.clone(),
            r.method.name().to_string(),
            r.verdict.name().to_string(),
            r.jaccard.to_string(),
            r.n_segments.to_string(),
        ])
        .map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>, EvalError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| output_err(path, e))?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| output_err(path, e))?;
        let field = |i: usize| row.get(i).unwrap_or_default().to_string();
        let quoted = |s: String| serde_json::Value::String(s);
        out.push(EvalRecord {
            image: field(0),
            method: serde_json::from_value(quoted(field(1))).map_err(|e| output_err(path, e))?,
            verdict: serde_json::from_value(quoted(field(2))).map_err(|e| output_err(path, e))?,
            jaccard: field(3).parse().map_err(|e| output_err(path, e))?,
            n_segments: field(4).parse().map_err(|e| output_err(path, e))?,
            degenerate: false,
        });
    }
    Ok(out)
}

pub fn write_report_json(path: impl AsRef<Path>, report: &EvalReport) -> Result<(), EvalError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report).map_err(|e| output_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| output_err(path, e))
}

/// One row per grid point: `point,<param>...,mean,included`.
pub fn write_sweep_csv(path: impl AsRef<Path>, result: &SweepResult) -> Result<(), EvalError> {
    let path = path.as_ref();
    let keys: Vec<String> = result.points[0]
        .segmenter
        .params_json()
        .as_object()
        .map(|m| m.keys().cloned().collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_path(path).map_err(|e| output_err(path, e))?;
    let mut header = vec!["point".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(["mean".to_string(), "included".to_string()]);
    w.write_record(&header).map_err(|e| output_err(path, e))?;
    for (i, p) in result.points.iter().enumerate() {
        let params = p.segmenter.params_json();
        let mut row = vec![i.to_string()];
        row.extend(keys.iter().map(|k| params[k].to_string()));
        row.push(p.mean.map_or(String::new(), |m| m.to_string()));
        row.push(p.included.to_string());
        w.write_record(&row).map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

/// Table with the report's columns, aligned for terminals.
pub fn format_report(report: &EvalReport) -> String {
    let mut out = format!(
        "{:<20} {:>6} {:>12} {:>12} {:>12}\n",
        "Superpixel method", "n", "Mean", "Variance", "Std. dev."
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{:<20} {:>6} {:>12.8} {:>12.8} {:>12.8}\n",
            r.method.name(),
            r.count,
            r.mean,
            r.variance,
            r.std
        ));
    }
    out.push_str(&format!(
        "(variance: {} estimator; filter: {})\n",
        report.variance_estimator,
        report.filter.name()
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8], w: usize) -> Mask {
        Mask::new(w, bits.len() / w, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn jaccard_cases() {
        let m = mask(&[1, 0, 1, 1, 0, 0], 3);
        assert_eq!(jaccard(&m, &m).unwrap(), 1.0);
        let a = mask(&[1, 1, 0, 0, 0, 0], 3);
        let b = mask(&[0, 0, 0, 0, 1, 1], 3);
        assert_eq!(jaccard(&a, &b).unwrap(), 0.0);
        // |a| = 3, |b| = 3, |a ∩ b| = 2, |a ∪ b| = 4.
        let a = mask(&[1, 1, 1, 0, 0, 0], 3);
        let b = mask(&[0, 1, 1, 1, 0, 0], 3);
        assert_eq!(jaccard(&a, &b).unwrap(), 0.5);
        assert_eq!(jaccard(&b, &a).unwrap(), 0.5);
    }

    #[test]
    fn jaccard_errors() {
        let e = Mask::empty(3, 2);
        assert!(matches!(jaccard(&e, &e), Err(EvalError::BothEmpty)));
        assert!(matches!(
            jaccard(&Mask::empty(2, 2), &Mask::empty(3, 2)),
            Err(EvalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn summary_statistics() {
        let (m, v, s) = summarize(&[0.5; 7]);
        assert_eq!((m, v, s), (0.5, 0.0, 0.0));
        let (m, v, s) = summarize(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        assert_eq!(v, 0.25);
        assert_eq!(s, 0.5);
    }

    #[test]
    fn grid_expansion_order() {
        let axes = vec![
            ("k".to_string(), vec![serde_json::json!(10), serde_json::json!(20)]),
            ("m".to_string(), vec![serde_json::json!(1.0), serde_json::json!(5.0), serde_json::json!(9.0)]),
        ];
        let grid = expand_grid(Method::Slic, &axes).unwrap();
        assert_eq!(grid.len(), 6);
        let pairs: Vec<(usize, f64)> = grid
            .iter()
            .map(|s| match s {
                Segmenter::Slic(p) => (p.k, p.m),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(pairs[0], (10, 1.0));
        assert_eq!(pairs[1], (10, 5.0));
        assert_eq!(pairs[3], (20, 1.0));
        assert!(expand_grid(Method::Slic, &[("zz".into(), vec![serde_json::json!(1)])]).is_err());
    }

    #[test]
    fn verdicts() {
        assert_eq!(verdict_of(1, 1), Verdict::TruePositive);
        assert_eq!(verdict_of(0, 1), Verdict::FalseNegative);
        assert_eq!(verdict_of(2, 1), Verdict::Other);
    }
}
