use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use superlime::classifier::ClassifierSpec;
use superlime::evaluation::{
    expand_grid, format_report, load_corpus, write_records_csv, write_report_json,
    write_sweep_csv, EvalConfig, Failure,
};
use superlime::imaging::{load_png, save_mask_png, save_png};
use superlime::segment::save_labels;
use superlime::synth::{synth_corpus, write_corpus};
use superlime::{
    boundary_overlay, evaluate_corpus, explain, explanation_mask, sweep, Gateway, Method,
    PerturbationConfig, Segmenter, VerdictFilter,
};

use crate::args::{
    Command, EvaluateArgs, ExplainArgs, PerturbationArgs, SegmentArgs, SweepArgs, SynthArgs,
};
use crate::config::{
    self, build_segmenter, parse_assignment, parse_axis, parse_replacement, require_out,
    resolve_classifier, EvaluateConfig, ExplainConfig, GridAxis, SegmentConfig, SweepConfig,
    SynthConfig, DEFAULT_METHOD, DEFAULT_SYNTH_COUNT, DEFAULT_SYNTH_SIZE,
};
use crate::error::CliError;
use crate::render::{dim_outside, DIM_FACTOR, OVERLAY_COLOR};
use crate::staging::Staged;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Segment(a) => segment(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Synth(a) => synth(a),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn segment(a: SegmentArgs) -> Result<(), CliError> {
    let cfg: SegmentConfig = config::load(a.config.as_deref())?;
    let method = a.segmenter.method.or(cfg.method).unwrap_or(DEFAULT_METHOD);
    let segmenter = build_segmenter(method, cfg.params.as_ref(), &a.segmenter.params)?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let prefix = require_out(a.out, cfg.out)?;

    let img = load_png(&a.input)?;
    let lm = segmenter.segment(&img, seed)?;
    let overlay = boundary_overlay(&img, &lm, OVERLAY_COLOR)?;

    let mut staged = Staged::default();
    if let Some(parent) = prefix.parent() {
        staged.ensure_dir(parent)?;
    }
    staged.file(with_suffix(&prefix, ".labels.png"));
    staged.file(with_suffix(&prefix, ".labels.json"));
    save_labels(&lm, &segmenter, &prefix)?;
    save_png(&overlay, staged.file(with_suffix(&prefix, ".overlay.png")))?;
    staged.commit();
    println!("{}: {} segments ({})", a.input.display(), lm.n_segments(), method);
    Ok(())
}

/// Applies perturbation flags on top of `base`.
fn perturbation(base: PerturbationConfig, a: &PerturbationArgs) -> Result<PerturbationConfig, CliError> {
    let mut p = base;
    if let Some(n) = a.n {
        p.pool_size = n;
    }
    if let Some(seed) = a.seed {
        p.seed = seed;
    }
    if let Some(r) = &a.replacement {
        p.replacement = parse_replacement(r)?;
    }
    if let Some(w) = a.kernel_width {
        p.kernel_width = w;
    }
    p.validate()?;
    Ok(p)
}

fn gateway(spec: ClassifierSpec) -> Result<Gateway, CliError> {
    Ok(Gateway::new(spec)?)
}

fn explain_cmd(a: ExplainArgs) -> Result<(), CliError> {
    let cfg: ExplainConfig = config::load(a.config.as_deref())?;
    let method = a.segmenter.method.or(cfg.method).unwrap_or(DEFAULT_METHOD);
    let segmenter = build_segmenter(method, cfg.params.as_ref(), &a.segmenter.params)?;
    let spec = resolve_classifier(
        a.classifier.classifier.as_deref(),
        a.classifier.class_count,
        cfg.classifier,
    )?;
    let defaults = EvalConfig::default();
    let pcfg = perturbation(cfg.perturbation.unwrap_or_default(), &a.perturbation)?;
    let k = a.perturbation.k.or(cfg.k).unwrap_or(defaults.k);
    let top = a.perturbation.top.or(cfg.top).unwrap_or(defaults.top);
    let target = a.target.or(cfg.target_class);
    let out = require_out(a.out, cfg.out)?;
    if k < 1 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    if top < 1 {
        return Err(CliError::usage("--top must be >= 1"));
    }
    if let Some(t) = target {
        if t >= spec.class_count() {
            return Err(CliError::usage(format!(
                "--target {t} out of range for {} classes",
                spec.class_count()
            )));
        }
    }

    let img = load_png(&a.input)?;
    let gw = gateway(spec)?;
    let e = explain(&img, &gw, &segmenter, &pcfg, k, target)?;
    let mask = explanation_mask(&e, top)?;
    if mask.empty {
        eprintln!("warning: no selected patch has a positive weight; mask.png is empty");
    }
    let explained = dim_outside(&img, &mask.mask, DIM_FACTOR);

    let mut staged = Staged::default();
    staged.ensure_dir(&out)?;
    write_json(&staged.file(out.join("explanation.json")), &e.to_record())?;
    save_mask_png(&mask.mask, staged.file(out.join("mask.png")))?;
    save_png(&explained, staged.file(out.join("explained.png")))?;
    staged.commit();

    let sel: Vec<String> = e
        .surrogate
        .selected
        .iter()
        .map(|(s, w)| format!("{s}:{w:+.4}"))
        .collect();
    println!(
        "{}: class {} via {} ({} segments); selected {}",
        a.input.display(),
        e.surrogate.target_class,
        method,
        e.segmentation.n_segments(),
        sel.join(" ")
    );
    Ok(())
}

fn eval_config(
    base: Option<EvalConfig>,
    p: &PerturbationArgs,
    positive_class: Option<usize>,
    filter: Option<&str>,
) -> Result<EvalConfig, CliError> {
    let mut cfg = base.unwrap_or_default();
    cfg.perturbation = perturbation(cfg.perturbation, p)?;
    if let Some(k) = p.k {
        cfg.k = k;
    }
    if let Some(top) = p.top {
        cfg.top = top;
    }
    if let Some(c) = positive_class {
        cfg.positive_class = c;
    }
    if let Some(f) = filter {
        cfg.filter = serde_json::from_value::<VerdictFilter>(Value::String(f.to_string()))
            .map_err(|_| {
                CliError::usage(format!(
                    "unknown filter `{f}` (expected true-positive, false-negative or all)"
                ))
            })?;
    }
    if cfg.k < 1 || cfg.top < 1 {
        return Err(CliError::usage("k and top must be >= 1"));
    }
    Ok(cfg)
}

fn report_failures(failures: &[Failure]) {
    for f in failures {
        let method = f.method.map_or("-".to_string(), |m| m.to_string());
        eprintln!("warning: {} [{}]: {}", f.image, method, f.reason);
    }
}

/// Splits `METHOD.KEY=VALUE` flags into per-method override maps.
fn method_overrides(
    base: Option<Map<String, Value>>,
    flags: &[String],
) -> Result<Vec<(Method, Map<String, Value>)>, CliError> {
    let mut out: Vec<(Method, Map<String, Value>)> = Vec::new();
    let mut put = |method: Method, key: String, value: Value| {
        match out.iter_mut().find(|(m, _)| *m == method) {
            Some((_, map)) => {
                map.insert(key, value);
            }
            None => {
                let mut map = Map::new();
                map.insert(key, value);
                out.push((method, map));
            }
        }
    };
    for (name, params) in base.unwrap_or_default() {
        let method: Method = name.parse()?;
        let Value::Object(params) = params else {
            return Err(CliError::usage(format!("params for `{name}` must be an object")));
        };
        for (k, v) in params {
            put(method, k, v);
        }
    }
    for f in flags {
        let (key, value) = parse_assignment(f)?;
        let (method, key) = key.split_once('.').ok_or_else(|| {
            CliError::usage(format!("evaluate expects METHOD.KEY=VALUE, got `{f}`"))
        })?;
        put(method.parse()?, key.to_string(), value);
    }
    Ok(out)
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let cfg: EvaluateConfig = config::load(a.config.as_deref())?;
    let methods = if !a.methods.is_empty() {
        a.methods.clone()
    } else {
        cfg.methods.clone().unwrap_or_else(|| Method::ALL.to_vec())
    };
    let overrides = method_overrides(cfg.params, &a.params)?;
    for (m, _) in &overrides {
        if !methods.contains(m) {
            return Err(CliError::usage(format!("parameters given for unused method `{m}`")));
        }
    }
    let segmenters: Vec<Segmenter> = methods
        .iter()
        .map(|&m| {
            let o = overrides.iter().find(|(om, _)| *om == m).map(|(_, o)| o);
            build_segmenter(m, o, &[])
        })
        .collect::<Result<_, _>>()?;
    let spec = resolve_classifier(
        a.classifier.classifier.as_deref(),
        a.classifier.class_count,
        cfg.classifier,
    )?;
    let ecfg = eval_config(cfg.evaluation, &a.perturbation, a.positive_class, a.filter.as_deref())?;
    let out = require_out(a.out, cfg.out)?;

    let corpus = load_corpus(&a.corpus)?;
    if corpus.is_empty() {
        return Err(CliError::usage(format!(
            "empty corpus: no <stem>.png with <stem>.ref.png in {}",
            a.corpus.display()
        )));
    }
    let gw = gateway(spec)?;
    let outcome = evaluate_corpus(&corpus, &segmenters, &gw, &ecfg)?;
    report_failures(&outcome.failures);
    if outcome.records.is_empty() && !outcome.failures.is_empty() {
        return Err(CliError::compute("every explanation failed"));
    }

    let mut staged = Staged::default();
    staged.ensure_dir(&out)?;
    write_records_csv(staged.file(out.join("records.csv")), &outcome.records)?;
    write_report_json(staged.file(out.join("report.json")), &outcome.report)?;
    staged.commit();
    print!("{}", format_report(&outcome.report));
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), CliError> {
    let cfg: SweepConfig = config::load(a.config.as_deref())?;
    let method = a.segmenter.method.or(cfg.method).unwrap_or(DEFAULT_METHOD);
    let mut axes: Vec<GridAxis> = Vec::new();
    // Fixed overrides become one-value axes.
    let mut fixed = cfg.params.clone().unwrap_or_default();
    for f in &a.segmenter.params {
        let (key, value) = parse_assignment(f)?;
        fixed.insert(key, value);
    }
    let grid: Vec<GridAxis> = if a.grid.is_empty() {
        cfg.grid.clone().unwrap_or_default()
    } else {
        a.grid.iter().map(|g| parse_axis(g)).collect::<Result<_, _>>()?
    };
    if grid.is_empty() {
        return Err(CliError::usage("sweep needs at least one --grid axis"));
    }
    for (param, value) in fixed {
        if grid.iter().all(|g| g.param != param) {
            axes.push(GridAxis {
                param,
                values: vec![value],
            });
        }
    }
    axes.extend(grid);
    let axes: Vec<(String, Vec<Value>)> = axes.into_iter().map(|g| (g.param, g.values)).collect();
    let points = expand_grid(method, &axes)?;
    let spec = resolve_classifier(
        a.classifier.classifier.as_deref(),
        a.classifier.class_count,
        cfg.classifier,
    )?;
    let ecfg = eval_config(cfg.evaluation, &a.perturbation, a.positive_class, None)?;
    let out = require_out(a.out, cfg.out)?;

    let corpus = load_corpus(&a.corpus)?;
    if corpus.is_empty() {
        return Err(CliError::usage(format!(
            "empty corpus: no <stem>.png with <stem>.ref.png in {}",
            a.corpus.display()
        )));
    }
    let gw = gateway(spec)?;
    let result = sweep(&points, &corpus, &gw, &ecfg)?;
    for p in &result.points {
        report_failures(&p.failures);
    }

    let mut staged = Staged::default();
    staged.ensure_dir(&out)?;
    write_sweep_csv(staged.file(out.join("sweep.csv")), &result)?;
    let best = json!({
        "method": method.name(),
        "params": result.best.params_json(),
        "mean": result.best_mean,
    });
    write_json(&staged.file(out.join("best.json")), &best)?;
    staged.commit();

    for (i, p) in result.points.iter().enumerate() {
        let mean = p.mean.map_or("-".to_string(), |m| format!("{m:.8}"));
        println!("{i:>3}  {mean:>12}  n={:<4} {}", p.included, p.segmenter.params_json());
    }
    println!("best: {} mean {:.8}", result.best.params_json(), result.best_mean);
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let cfg: SynthConfig = config::load(a.config.as_deref())?;
    let count = a.count.or(cfg.count).unwrap_or(DEFAULT_SYNTH_COUNT);
    let size = a.size.or(cfg.size).unwrap_or(DEFAULT_SYNTH_SIZE);
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let out = require_out(a.out, cfg.out)?;
    if size < 8 {
        return Err(CliError::usage("--size must be >= 8"));
    }
    let samples = synth_corpus(count, size, seed);
    let mut staged = Staged::default();
    staged.ensure_dir(&out)?;
    for s in &samples {
        staged.file(out.join(format!("{}.png", s.id)));
        staged.file(out.join(format!("{}{}", s.id, superlime::evaluation::REFERENCE_SUFFIX)));
    }
    write_corpus(&out, &samples)?;
    staged.commit();
    println!("{} images ({size}x{size}) in {}", samples.len(), out.display());
    Ok(())
}
