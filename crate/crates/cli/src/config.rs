//! JSON run configurations. Every field is optional; explicit flags win over
//! the file, the file wins over the built-in defaults. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};
use superlime::classifier::ClassifierSpec;
use superlime::evaluation::EvalConfig;
use superlime::{Method, PerturbationConfig, Segmenter};

use crate::error::CliError;

pub const DEFAULT_METHOD: Method = Method::Quickshift;
pub const DEFAULT_SYNTH_COUNT: usize = 50;
pub const DEFAULT_SYNTH_SIZE: usize = 224;
pub const DEFAULT_CLASS_COUNT: usize = 2;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub method: Option<Method>,
    pub params: Option<Map<String, Value>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainConfig {
    pub method: Option<Method>,
    pub params: Option<Map<String, Value>>,
    pub classifier: Option<ClassifierSpec>,
    pub perturbation: Option<PerturbationConfig>,
    pub k: Option<usize>,
    pub top: Option<usize>,
    pub target_class: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub methods: Option<Vec<Method>>,
    /// Per-method parameter overrides keyed by method name.
    pub params: Option<Map<String, Value>>,
    pub classifier: Option<ClassifierSpec>,
    pub evaluation: Option<EvalConfig>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub method: Option<Method>,
    pub params: Option<Map<String, Value>>,
    pub grid: Option<Vec<GridAxis>>,
    pub classifier: Option<ClassifierSpec>,
    pub evaluation: Option<EvalConfig>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub count: Option<usize>,
    pub size: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: invalid config: {e}", path.display())))
}

/// Parses `KEY=VALUE`; the value is read as JSON when possible, else as a string.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("expected KEY=VALUE, got `{s}`")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::usage(format!("empty key in `{s}`")));
    }
    Ok((key.to_string(), json_or_string(value.trim())))
}

fn json_or_string(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

/// Parses `KEY=V1,V2,...` into a grid axis.
pub fn parse_axis(s: &str) -> Result<GridAxis, CliError> {
    let (key, values) = s
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("expected KEY=V1,V2,..., got `{s}`")))?;
    let values: Vec<Value> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(json_or_string)
        .collect();
    if values.is_empty() {
        return Err(CliError::usage(format!("grid axis `{key}` has no values")));
    }
    Ok(GridAxis {
        param: key.trim().to_string(),
        values,
    })
}

/// Defaults of `method` overridden first by `base`, then by `flags`.
pub fn build_segmenter(
    method: Method,
    base: Option<&Map<String, Value>>,
    flags: &[String],
) -> Result<Segmenter, CliError> {
    let mut overrides = base.cloned().unwrap_or_default();
    for f in flags {
        let (key, value) = parse_assignment(f)?;
        overrides.insert(key, value);
    }
    Ok(Segmenter::from_overrides(method, &overrides)?)
}

pub fn parse_classifier(s: &str, class_count: usize) -> Result<ClassifierSpec, CliError> {
    let s = s.trim();
    if s == "stub" {
        Ok(ClassifierSpec::BuiltinStub)
    } else if let Some(command) = s.strip_prefix("cmd:") {
        Ok(ClassifierSpec::ExternalCommand {
            command: command.to_string(),
            class_count,
        })
    } else {
        Err(CliError::usage(format!(
            "unknown classifier `{s}` (expected `stub` or `cmd:<command>`)"
        )))
    }
}

/// Flag beats config beats builtin stub. `--class-count` also applies to an
/// external command given in the config file.
pub fn resolve_classifier(
    flag: Option<&str>,
    class_count: Option<usize>,
    from_config: Option<ClassifierSpec>,
) -> Result<ClassifierSpec, CliError> {
    let spec = match (flag, from_config) {
        (Some(f), _) => parse_classifier(f, class_count.unwrap_or(DEFAULT_CLASS_COUNT))?,
        (None, Some(ClassifierSpec::ExternalCommand { command, class_count: c })) => {
            ClassifierSpec::ExternalCommand {
                command,
                class_count: class_count.unwrap_or(c),
            }
        }
        (None, Some(spec)) => spec,
        (None, None) => ClassifierSpec::BuiltinStub,
    };
    Ok(spec)
}

pub fn parse_replacement(s: &str) -> Result<superlime::Replacement, CliError> {
    use superlime::Replacement;
    match s.trim() {
        "grey" | "gray" => Ok(Replacement::FixedColor([128, 128, 128])),
        "mean" => Ok(Replacement::MeanColor),
        rgb => {
            let parts: Vec<u8> = rgb
                .split(',')
                .map(|c| c.trim().parse::<u8>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::usage(format!("bad replacement `{s}`")))?;
            match parts[..] {
                [r, g, b] => Ok(Replacement::FixedColor([r, g, b])),
                _ => Err(CliError::usage(format!("bad replacement `{s}`"))),
            }
        }
    }
}

pub fn require_out(flag: Option<PathBuf>, config: Option<PathBuf>) -> Result<PathBuf, CliError> {
    flag.or(config)
        .ok_or_else(|| CliError::usage("--out is required (or `out` in the config file)"))
}

/// Every default in one block, rendered from the library's own defaults.
pub fn defaults_help() -> String {
    let mut out = String::from("Defaults:\n");
    out.push_str(&format!("  --method {}\n", DEFAULT_METHOD.name()));
    for m in Method::ALL {
        let params = Segmenter::with_defaults(m).params_json();
        out.push_str(&format!("  {} params: {}\n", m.name(), params));
    }
    let p = PerturbationConfig::default();
    let e = EvalConfig::default();
    out.push_str(&format!(
        "  --n {}  --k {}  --top {}  --seed {}  --replacement grey (128,128,128)  --kernel-width {}\n",
        p.pool_size, e.k, e.top, p.seed, p.kernel_width
    ));
    out.push_str(&format!("  on_probability {}\n", p.on_probability));
    out.push_str(&format!(
        "  --classifier stub  --class-count {DEFAULT_CLASS_COUNT}\n"
    ));
    out.push_str(&format!(
        "  evaluate: --filter true-positive  --positive-class {}  --methods all\n",
        e.positive_class
    ));
    out.push_str(&format!(
        "  synth: --count {DEFAULT_SYNTH_COUNT}  --size {DEFAULT_SYNTH_SIZE}  --seed 0\n"
    ));
    out.push_str("Exit codes: 0 ok, 1 usage, 2 I/O, 3 compute, 4 classifier adapter\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use superlime::Replacement;

    #[test]
    fn assignments() {
        assert_eq!(parse_assignment("k=50").unwrap(), ("k".into(), Value::from(50)));
        assert_eq!(
            parse_assignment("name=abc").unwrap(),
            ("name".into(), Value::from("abc"))
        );
        assert!(parse_assignment("novalue").is_err());
        assert!(parse_assignment("=3").is_err());
    }

    #[test]
    fn axes() {
        let a = parse_axis("max_dist=5,10, 20").unwrap();
        assert_eq!(a.param, "max_dist");
        assert_eq!(a.values, vec![Value::from(5), Value::from(10), Value::from(20)]);
        assert!(parse_axis("k=").is_err());
    }

    #[test]
    fn classifier_specs() {
        assert_eq!(parse_classifier("stub", 2).unwrap(), ClassifierSpec::BuiltinStub);
        assert_eq!(
            parse_classifier("cmd:python3 adapter.py", 3).unwrap(),
            ClassifierSpec::ExternalCommand {
                command: "python3 adapter.py".into(),
                class_count: 3
            }
        );
        assert!(parse_classifier("resnet", 2).is_err());
        let from_file = ClassifierSpec::ExternalCommand {
            command: "a".into(),
            class_count: 2,
        };
        assert_eq!(
            resolve_classifier(None, Some(5), Some(from_file)).unwrap(),
            ClassifierSpec::ExternalCommand {
                command: "a".into(),
                class_count: 5
            }
        );
    }

    #[test]
    fn replacements() {
        assert_eq!(
            parse_replacement("grey").unwrap(),
            Replacement::FixedColor([128; 3])
        );
        assert_eq!(parse_replacement("mean").unwrap(), Replacement::MeanColor);
        assert_eq!(
            parse_replacement("1,2,3").unwrap(),
            Replacement::FixedColor([1, 2, 3])
        );
        assert!(parse_replacement("1,2").is_err());
        assert!(parse_replacement("red").is_err());
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let err = serde_json::from_str::<SegmentConfig>(r#"{"methd": "slic"}"#);
        assert!(err.is_err());
        let ok: ExplainConfig =
            serde_json::from_str(r#"{"perturbation": {"pool_size": 20}, "k": 2}"#).unwrap();
        assert_eq!(ok.perturbation.unwrap().pool_size, 20);
    }

    #[test]
    fn flag_params_override_config() {
        let mut base = Map::new();
        base.insert("k".into(), Value::from(10));
        base.insert("m".into(), Value::from(5.0));
        let s = build_segmenter(Method::Slic, Some(&base), &["k=20".into()]).unwrap();
        assert_eq!(s.params_json()["k"], 20);
        assert_eq!(s.params_json()["m"], 5.0);
        assert!(build_segmenter(Method::Slic, None, &["bogus=1".into()]).is_err());
    }
}
