use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use superlime::classifier::{parse_predictions, write_predictions, ClassifierError, ClassifierSpec};
use superlime::{Gateway, Image};

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

fn external(path: &Path) -> Gateway {
    Gateway::new(ClassifierSpec::ExternalCommand {
        command: format!("'{}'", path.display()),
        class_count: 2,
    })
    .unwrap()
}

fn batch(n: usize) -> Vec<Image> {
    (0..n).map(|i| Image::filled(4, 3, [i as u8 * 20, 0, 0])).collect()
}

#[test]
fn round_trip_preserves_order() {
    // Rows are written last-to-first; the class encodes the index parity.
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"dir="$1"
n=$(ls "$dir"/*.png | wc -l)
{ echo "index,p_0,p_1"; i=$((n - 1)); while [ $i -ge 0 ]; do
  if [ $((i % 2)) -eq 0 ]; then echo "$i,1,0"; else echo "$i,0,1"; fi; i=$((i - 1)); done; } > "$dir/predictions.csv""#;
    let gw = external(&script(tmp.path(), "parity.sh", body));
    let preds = gw.classify_batch(&batch(10)).unwrap();
    assert_eq!(preds.len(), 10);
    for (i, p) in preds.iter().enumerate() {
        assert_eq!(p.argmax(), i % 2);
    }
}

#[test]
fn rows_may_arrive_in_any_order() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"printf 'index,p_0,p_1\n2,0.9,0.1\n0,0.2,0.8\n1,0.5,0.5\n' > "$1/predictions.csv""#;
    let gw = external(&script(tmp.path(), "shuffled.sh", body));
    let preds = gw.classify_batch(&batch(3)).unwrap();
    assert_eq!(preds[0].prob(1), 0.8);
    assert_eq!(preds[1].prob(1), 0.5);
    assert_eq!(preds[2].prob(1), 0.1);
}

#[test]
fn batch_directory_holds_numbered_pngs() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("seen.txt");
    let body = format!(
        r#"ls "$1" > '{}'
printf 'index,p_0,p_1\n0,0.5,0.5\n1,0.5,0.5\n' > "$1/predictions.csv""#,
        log.display()
    );
    let gw = external(&script(tmp.path(), "list.sh", &body));
    gw.classify_batch(&batch(2)).unwrap();
    let seen = std::fs::read_to_string(log).unwrap();
    assert_eq!(seen.split_whitespace().collect::<Vec<_>>(), ["00000.png", "00001.png"]);
}

#[test]
fn truncated_csv_is_a_count_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"printf 'index,p_0,p_1\n0,0.5,0.5\n1,0.5,0.5\n' > "$1/predictions.csv""#;
    let gw = external(&script(tmp.path(), "short.sh", body));
    let err = gw.classify_batch(&batch(5)).unwrap_err();
    assert!(
        matches!(err, ClassifierError::CountMismatch { expected: 5, got: 2 }),
        "{err}"
    );
    assert!(err.to_string().contains("3 missing"), "{err}");
}

#[test]
fn non_simplex_row_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"printf 'index,p_0,p_1\n0,0.5,0.5\n1,0.7,0.7\n' > "$1/predictions.csv""#;
    let gw = external(&script(tmp.path(), "bad.sh", body));
    let err = gw.classify_batch(&batch(2)).unwrap_err();
    assert!(matches!(err, ClassifierError::NotSimplex { index: 1, .. }), "{err}");
}

#[test]
fn failing_adapter_reports_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let gw = external(&script(tmp.path(), "fail.sh", "echo 'model missing' >&2\nexit 3"));
    let err = gw.classify_batch(&batch(1)).unwrap_err();
    match err {
        ClassifierError::AdapterFailed { stderr, .. } => assert_eq!(stderr, "model missing"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn missing_output_is_malformed() {
    let tmp = tempfile::tempdir().unwrap();
    let gw = external(&script(tmp.path(), "silent.sh", "exit 0"));
    let err = gw.classify_batch(&batch(1)).unwrap_err();
    assert!(matches!(err, ClassifierError::Malformed { .. }), "{err}");
}

#[test]
fn unlaunchable_command() {
    let gw = Gateway::new(ClassifierSpec::ExternalCommand {
        command: "/nonexistent/adapter --flag".into(),
        class_count: 2,
    })
    .unwrap();
    assert!(matches!(
        gw.classify_batch(&batch(1)),
        Err(ClassifierError::Launch { .. })
    ));
}

#[test]
fn writer_output_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("predictions.csv");
    let rows = vec![vec![0.25, 0.5, 0.25], vec![1.0, 0.0, 0.0], vec![0.1, 0.2, 0.7]];
    write_predictions(&path, &rows).unwrap();
    let parsed = parse_predictions(&std::fs::read_to_string(&path).unwrap(), 3, 3).unwrap();
    for (p, r) in parsed.iter().zip(&rows) {
        assert_eq!(&p.probabilities, r);
    }
}
