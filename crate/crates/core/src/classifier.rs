//! The black-box classifier `f`.
//!
//! Two backends exist: a deterministic stain-detecting stub, and an external
//! command speaking a small file protocol. For the external backend the batch
//! is written to `<tmp>/batch/NNNNN.png`, the command is run as
//! `command <tmp>/batch`, and it must leave `<tmp>/batch/predictions.csv`
//! with header `index,p_0,p_1[,...]` and one row per image.

use std::path::Path;
use std::process::Command;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{save_png, Image, ImagingError};

/// Simplex tolerance for probability rows.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
    #[error("failed to launch `{command}`: {source}")]
    Launch {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("adapter `{command}` exited with {status}: {stderr}")]
    AdapterFailed {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("malformed adapter output at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("adapter returned {got} predictions for {expected} images ({} missing)", expected.saturating_sub(*got))]
    CountMismatch { expected: usize, got: usize },
    #[error("prediction {index} is not a probability vector: {reason}")]
    NotSimplex { index: usize, reason: String },
    #[error("writing batch image {index}: {source}")]
    BatchWrite {
        index: usize,
        #[source]
        source: ImagingError,
    },
    #[error("adapter scratch directory: {0}")]
    Scratch(#[source] std::io::Error),
}

/// Class probabilities for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub class_names: Vec<String>,
}

impl Prediction {
    pub fn new(probabilities: Vec<f64>, class_names: Vec<String>) -> Result<Self, String> {
        if probabilities.len() != class_names.len() {
            return Err(format!(
                "{} probabilities for {} classes",
                probabilities.len(),
                class_names.len()
            ));
        }
        check_simplex(&probabilities)?;
        Ok(Self {
            probabilities,
            class_names,
        })
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.probabilities[class]
    }
}

fn check_simplex(p: &[f64]) -> Result<(), String> {
    if p.is_empty() {
        return Err("no probabilities".into());
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
        return Err(format!("value {v} outside [0, 1]"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassifierSpec {
    BuiltinStub,
    ExternalCommand { command: String, class_count: usize },
}

impl ClassifierSpec {
    pub fn class_count(&self) -> usize {
        match self {
            ClassifierSpec::BuiltinStub => 2,
            ClassifierSpec::ExternalCommand { class_count, .. } => *class_count,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if let ClassifierSpec::ExternalCommand {
            command,
            class_count,
        } = self
        {
            if command.trim().is_empty() {
                return Err(ClassifierError::InvalidSpec("empty command".into()));
            }
            if shlex::split(command).is_none_or(|argv| argv.is_empty()) {
                return Err(ClassifierError::InvalidSpec(format!(
                    "cannot parse command `{command}`"
                )));
            }
            if *class_count < 2 {
                return Err(ClassifierError::InvalidSpec("class_count must be >= 2".into()));
            }
        }
        Ok(())
    }
}

/// Fraction of pixels whose blue channel exceeds red and green by more than 20.
pub fn stained_fraction(img: &Image) -> f64 {
    let stained = img
        .pixels()
        .iter()
        .filter(|p| {
            let (r, g, b) = (p[0] as i32, p[1] as i32, p[2] as i32);
            b > r + 20 && b > g + 20
        })
        .count();
    stained as f64 / img.len() as f64
}

pub const STUB_CLASSES: [&str; 2] = ["clean", "indicator"];

/// Deterministic stand-in classifier: `p(indicator) = 1 - exp(-40 s)` with
/// `s` the stained fraction.
pub fn stub_score(img: &Image) -> Prediction {
    let s = stained_fraction(img);
    let indicator = 1.0 - (-40.0 * s).exp();
    Prediction {
        probabilities: vec![1.0 - indicator, indicator],
        class_names: STUB_CLASSES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Classifier handle. External invocations through one gateway are serialized.
#[derive(Debug)]
pub struct Gateway {
    spec: ClassifierSpec,
    lock: Mutex<()>,
}

impl Gateway {
    pub fn new(spec: ClassifierSpec) -> Result<Self, ClassifierError> {
        spec.validate()?;
        Ok(Self {
            spec,
            lock: Mutex::new(()),
        })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    /// One prediction per image, in input order.
    pub fn classify_batch(&self, images: &[Image]) -> Result<Vec<Prediction>, ClassifierError> {
        if images.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        match &self.spec {
            ClassifierSpec::BuiltinStub => Ok(images.iter().map(stub_score).collect()),
            ClassifierSpec::ExternalCommand {
                command,
                class_count,
            } => {
                let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
                run_external(command, *class_count, images)
            }
        }
    }
}

pub fn classify_batch(
    spec: &ClassifierSpec,
    images: &[Image],
) -> Result<Vec<Prediction>, ClassifierError> {
    Gateway::new(spec.clone())?.classify_batch(images)
}

fn run_external(
    command: &str,
    class_count: usize,
    images: &[Image],
) -> Result<Vec<Prediction>, ClassifierError> {
    let scratch = tempfile::tempdir().map_err(ClassifierError::Scratch)?;
    let batch = scratch.path().join("batch");
    std::fs::create_dir(&batch).map_err(ClassifierError::Scratch)?;
    for (index, img) in images.iter().enumerate() {
        save_png(img, batch.join(format!("{index:05}.png")))
            .map_err(|source| ClassifierError::BatchWrite { index, source })?;
    }

    let argv = shlex::split(command)
        .filter(|a| !a.is_empty())
        .ok_or_else(|| ClassifierError::InvalidSpec(format!("cannot parse command `{command}`")))?;
    let output = Command::new(&argv[0])
        .args(&argv[1..])
        .arg(&batch)
        .output()
        .map_err(|source| ClassifierError::Launch {
            command: command.to_string(),
            source,
        })?;
    if !output.status.success() {
        return Err(ClassifierError::AdapterFailed {
            command: command.to_string(),
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }

    let csv_path = batch.join("predictions.csv");
    let text = std::fs::read_to_string(&csv_path).map_err(|e| ClassifierError::Malformed {
        line: 0,
        reason: format!("{}: {e}", csv_path.display()),
    })?;
    parse_predictions(&text, images.len(), class_count)
}

/// Parses and validates an adapter's `predictions.csv`.
pub fn parse_predictions(
    text: &str,
    expected: usize,
    class_count: usize,
) -> Result<Vec<Prediction>, ClassifierError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| ClassifierError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let expected_header: Vec<String> = std::iter::once("index".to_string())
        .chain((0..class_count).map(|c| format!("p_{c}")))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected_header {
        return Err(ClassifierError::Malformed {
            line: 1,
            reason: format!(
                "header `{}`, expected `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                expected_header.join(",")
            ),
        });
    }
    let class_names: Vec<String> = (0..class_count).map(|c| format!("class_{c}")).collect();

    let mut rows: Vec<Option<Prediction>> = vec![None; expected];
    let mut got = 0;
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| ClassifierError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        let index: usize = record[0].parse().map_err(|_| ClassifierError::Malformed {
            line,
            reason: format!("bad index `{}`", &record[0]),
        })?;
        let probs = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ClassifierError::Malformed {
                line,
                reason: e.to_string(),
            })?;
        if index >= expected {
            return Err(ClassifierError::Malformed {
                line,
                reason: format!("index {index} out of range for {expected} images"),
            });
        }
        if rows[index].is_some() {
            return Err(ClassifierError::Malformed {
                line,
                reason: format!("duplicate index {index}"),
            });
        }
        let prediction = Prediction::new(probs, class_names.clone())
            .map_err(|reason| ClassifierError::NotSimplex { index, reason })?;
        rows[index] = Some(prediction);
        got += 1;
    }
    if got != expected {
        return Err(ClassifierError::CountMismatch { expected, got });
    }
    Ok(rows.into_iter().map(|r| r.expect("all rows present")).collect())
}

/// Writes `predictions.csv` in the adapter format; used by test adapters and
/// anyone implementing the protocol in Rust.
pub fn write_predictions(path: &Path, predictions: &[Vec<f64>]) -> std::io::Result<()> {
    let classes = predictions.first().map_or(2, Vec::len);
    let mut out = String::from("index");
    for c in 0..classes {
        out.push_str(&format!(",p_{c}"));
    }
    out.push('\n');
    for (i, row) in predictions.iter().enumerate() {
        out.push_str(&i.to_string());
        for p in row {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_on_black_is_clean() {
        let p = stub_score(&Image::filled(8, 8, [0; 3]));
        assert_eq!(p.probabilities, vec![1.0, 0.0]);
        assert_eq!(p.argmax(), 0);
    }

    #[test]
    fn stub_fully_stained() {
        let p = stub_score(&Image::filled(4, 4, [10, 10, 200]));
        assert!((p.prob(1) - (1.0 - (-40f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn stub_decreases_when_stain_removed() {
        let mut img = Image::from_fn(10, 10, |x, y| {
            if x < 3 && y < 3 {
                [40, 30, 160]
            } else {
                [200, 180, 190]
            }
        });
        let before = stub_score(&img).prob(1);
        for y in 0..3 {
            for x in 0..3 {
                img.set(x, y, [128; 3]);
            }
        }
        assert!(stub_score(&img).prob(1) < before);
        // 9 of 100 pixels: 1 - exp(-3.6)
        assert!((before - (1.0 - (-3.6f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn batch_order_and_concatenation() {
        let spec = ClassifierSpec::BuiltinStub;
        let imgs: Vec<Image> = (0..5)
            .map(|k| Image::from_fn(5, 5, move |x, _| if x < k { [0, 0, 255] } else { [0; 3] }))
            .collect();
        let all = classify_batch(&spec, &imgs).unwrap();
        assert_eq!(all.len(), 5);
        let mut split = classify_batch(&spec, &imgs[..2]).unwrap();
        split.extend(classify_batch(&spec, &imgs[2..]).unwrap());
        assert_eq!(all, split);
        for w in all.windows(2) {
            assert!(w[0].prob(1) < w[1].prob(1));
        }
        assert!(matches!(
            classify_batch(&spec, &[]),
            Err(ClassifierError::EmptyBatch)
        ));
    }

    #[test]
    fn parse_rejects_short_output() {
        let text = "index,p_0,p_1\n0,0.5,0.5\n1,0.2,0.8\n";
        let err = parse_predictions(text, 3, 2).unwrap_err();
        assert!(matches!(err, ClassifierError::CountMismatch { expected: 3, got: 2 }));
        assert!(err.to_string().contains("1 missing"));
    }

    #[test]
    fn parse_reorders_by_index() {
        let text = "index,p_0,p_1\n1,0.2,0.8\n0,0.9,0.1\n";
        let rows = parse_predictions(text, 2, 2).unwrap();
        assert_eq!(rows[0].probabilities, vec![0.9, 0.1]);
        assert_eq!(rows[1].probabilities, vec![0.2, 0.8]);
    }

    #[test]
    fn parse_rejects_non_simplex_and_garbage() {
        let bad = "index,p_0,p_1\n0,0.7,0.7\n";
        assert!(matches!(
            parse_predictions(bad, 1, 2),
            Err(ClassifierError::NotSimplex { index: 0, .. })
        ));
        let garbage = "index,p_0,p_1\n0,abc,0.5\n";
        assert!(matches!(
            parse_predictions(garbage, 1, 2),
            Err(ClassifierError::Malformed { line: 2, .. })
        ));
        let header = "idx,a,b\n0,0.5,0.5\n";
        assert!(matches!(
            parse_predictions(header, 1, 2),
            Err(ClassifierError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn spec_validation() {
        let empty = ClassifierSpec::ExternalCommand {
            command: "  ".into(),
            class_count: 2,
        };
        assert!(Gateway::new(empty).is_err());
        let one_class = ClassifierSpec::ExternalCommand {
            command: "true".into(),
            class_count: 1,
        };
        assert!(Gateway::new(one_class).is_err());
    }

    #[test]
    fn missing_program_is_launch_error() {
        let spec = ClassifierSpec::ExternalCommand {
            command: "/nonexistent/superlime-adapter".into(),
            class_count: 2,
        };
        let err = classify_batch(&spec, &[Image::filled(2, 2, [0; 3])]).unwrap_err();
        assert!(matches!(err, ClassifierError::Launch { .. }));
    }
}
