use superlime::classifier::ClassifierSpec;
use superlime::evaluation::{
    read_records_csv, summarize, write_records_csv, CorpusItem, EvalConfig,
};
use superlime::synth::synth_corpus;
use superlime::{
    evaluate_corpus, explain, explanation_mask, jaccard, sweep, Gateway, Method,
    PerturbationConfig, Segmenter, SlicParams, Verdict,
};

fn corpus(n: usize, size: usize) -> Vec<CorpusItem> {
    synth_corpus(n, size, 99)
        .into_iter()
        .map(|s| CorpusItem {
            id: s.id,
            image: s.image,
            reference: s.reference,
        })
        .collect()
}

fn small_config() -> EvalConfig {
    EvalConfig {
        perturbation: PerturbationConfig {
            pool_size: 80,
            seed: 5,
            ..Default::default()
        },
        k: 2,
        ..Default::default()
    }
}

fn stub() -> Gateway {
    Gateway::new(ClassifierSpec::BuiltinStub).unwrap()
}

fn all_methods() -> Vec<Segmenter> {
    vec![
        Segmenter::with_defaults(Method::Felzenszwalb),
        Segmenter::with_defaults(Method::Quickshift),
        Segmenter::Slic(SlicParams {
            k: 12,
            ..Default::default()
        }),
        Segmenter::from_overrides(
            Method::CompactWatershed,
            serde_json::json!({"n_markers": 12}).as_object().unwrap(),
        )
        .unwrap(),
    ]
}

#[test]
fn report_recomputes_from_records_csv() {
    let c = corpus(6, 48);
    let out = evaluate_corpus(&c, &all_methods(), &stub(), &small_config()).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.report.rows.len(), 4);
    let tp = out.records.iter().filter(|r| r.verdict == Verdict::TruePositive).count();
    assert_eq!(tp, out.records.len());

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("records.csv");
    write_records_csv(&path, &out.records).unwrap();
    let back = read_records_csv(&path).unwrap();
    assert_eq!(back.len(), out.records.len());
    for row in &out.report.rows {
        let values: Vec<f64> = back.iter().filter(|r| r.method == row.method).map(|r| r.jaccard).collect();
        let (mean, var, std) = summarize(&values);
        assert_eq!(values.len(), row.count);
        assert!((mean - row.mean).abs() < 1e-12);
        assert!((var - row.variance).abs() < 1e-12);
        assert!((std - row.std).abs() < 1e-12);
        assert!((row.std * row.std - row.variance).abs() < 1e-12);
    }
}

#[test]
fn evaluation_is_deterministic() {
    let c = corpus(4, 40);
    let a = evaluate_corpus(&c, &all_methods(), &stub(), &small_config()).unwrap();
    let b = evaluate_corpus(&c, &all_methods(), &stub(), &small_config()).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.report, b.report);
}

#[test]
fn sweep_ties_go_to_the_earliest_point() {
    let c = corpus(3, 40);
    let p = Segmenter::Slic(SlicParams {
        k: 9,
        ..Default::default()
    });
    let grid = vec![p.clone(), p.clone(), p];
    let r = sweep(&grid, &c, &stub(), &small_config()).unwrap();
    assert_eq!(r.points.len(), 3);
    assert_eq!(r.points[0].mean, r.points[2].mean);
    assert_eq!(Some(r.best_mean), r.points[0].mean);
}

#[test]
fn k_contract_and_blob_hit() {
    let c = corpus(3, 56);
    let seg = Segmenter::Slic(SlicParams {
        k: 16,
        ..Default::default()
    });
    let cfg = PerturbationConfig {
        pool_size: 150,
        ..Default::default()
    };
    for item in &c {
        for k in [1, 3, 500] {
            let e = explain(&item.image, &stub(), &seg, &cfg, k, None).unwrap();
            assert_eq!(e.surrogate.selected.len(), k.min(e.segmentation.n_segments()));
            assert_eq!(e.surrogate.target_class, 1);
            if k == 1 {
                let m = explanation_mask(&e, 1).unwrap();
                assert!(!m.empty);
                assert!(jaccard(&m.mask, &item.reference).unwrap() > 0.0);
            }
        }
    }
}
