use std::path::PathBuf;

use dasha_pp::problems::libsvm::{parse_libsvm, read_libsvm, to_libsvm_string, ParseError};
use dasha_pp::problems::Dataset;
use proptest::prelude::*;

fn fixture_dir(kind: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/libsvm").join(kind)
}

fn valid_fixtures() -> Vec<(PathBuf, PathBuf)> {
    let mut out: Vec<_> = std::fs::read_dir(fixture_dir("valid"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "svm") && !p.to_string_lossy().ends_with(".canonical.svm"))
        .map(|p| {
            let canon = p.with_extension("canonical.svm");
            (p, canon)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn valid_corpus_canonicalizes_to_committed_form() {
    let fixtures = valid_fixtures();
    assert_eq!(fixtures.len(), 4);
    for (raw, canon) in fixtures {
        let data = read_libsvm(&raw, None).unwrap();
        let expected = std::fs::read_to_string(&canon).unwrap();
        assert_eq!(to_libsvm_string(&data), expected, "{}", raw.display());
        // canonical form is a fixed point
        let again = parse_libsvm(&expected, Some(data.dim())).unwrap();
        assert_eq!(again, data);
        assert_eq!(to_libsvm_string(&again), expected);
    }
}

#[test]
fn malformed_corpus_reports_the_offending_line() {
    let cases: [(&str, usize, fn(&ParseError) -> bool); 6] = [
        ("bad_label.svm", 3, |e| matches!(e, ParseError::BadLabel { .. })),
        ("missing_colon.svm", 2, |e| matches!(e, ParseError::BadToken { .. })),
        ("zero_index.svm", 2, |e| matches!(e, ParseError::BadIndex { .. })),
        ("bad_value.svm", 3, |e| matches!(e, ParseError::BadValue { .. })),
        ("duplicate_index.svm", 2, |e| matches!(e, ParseError::DuplicateIndex { index: 1, .. })),
        ("third_label.svm", 3, |e| matches!(e, ParseError::UnsupportedLabels { .. })),
    ];
    for (name, line, kind) in cases {
        let text = std::fs::read_to_string(fixture_dir("malformed").join(name)).unwrap();
        let err = parse_libsvm(&text, None).unwrap_err();
        assert_eq!(err.line(), Some(line), "{name}: {err}");
        assert!(kind(&err), "{name}: unexpected {err:?}");
        assert!(err.to_string().contains(&format!("line {line}")));
    }
}

#[test]
fn dimension_hint_is_enforced() {
    let err = parse_libsvm("+1 1:1\n-1 9:1\n", Some(4)).unwrap_err();
    assert_eq!(err, ParseError::IndexExceedsDim { line: 2, index: 9, dim: 4 });
    let d = parse_libsvm("+1 1:1\n", Some(4)).unwrap();
    assert_eq!(d.dim(), 4);
}

#[test]
fn label_encodings_map_to_signs() {
    let d = parse_libsvm("0 1:1\n1 1:1\n", None).unwrap();
    assert_eq!(d.labels(), &[-1.0, 1.0]);
    let d = parse_libsvm("1 1:1\n2 1:1\n", None).unwrap();
    assert_eq!(d.labels(), &[-1.0, 1.0]);
    // a lone `1` reads as the positive class
    let d = parse_libsvm("1 1:1\n", None).unwrap();
    assert_eq!(d.labels(), &[1.0]);
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..12).prop_flat_map(|dim| {
        let row = (
            proptest::collection::btree_map(0..dim, -1e6f64..1e6, 0..dim.min(6)),
            any::<bool>(),
        );
        proptest::collection::vec(row, 1..8).prop_map(move |rows| {
            let labels = rows.iter().map(|(_, y)| if *y { 1.0 } else { -1.0 }).collect();
            let rows = rows.into_iter().map(|(r, _)| r.into_iter().collect()).collect();
            Dataset::from_rows(dim, rows, labels).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn written_datasets_read_back_exactly(data in dataset_strategy()) {
        let text = to_libsvm_string(&data);
        let back = parse_libsvm(&text, Some(data.dim())).unwrap();
        prop_assert_eq!(back, data);
    }
}
