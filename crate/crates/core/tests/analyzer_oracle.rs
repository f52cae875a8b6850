mod common;

use std::collections::BTreeMap;
use std::fs;

use common::corpus;
use migrate_core::analyzer::analyze_tree;

fn write_corpus(files: &BTreeMap<String, String>) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (rel, text) in files {
        let path = dir.path().join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, text).unwrap();
    }
    dir
}

#[test]
fn analyzer_agrees_with_line_oracle_on_synthetic_corpus() {
    let c = corpus::generate();
    assert_eq!(c.files.len(), corpus::FILES);
    let dir = write_corpus(&c.files);
    let report = analyze_tree(dir.path(), &c.manifest).unwrap();
    assert!(report.parse_errors.is_empty(), "{:?}", report.parse_errors);
    assert!(report.discrepancies.is_empty(), "{:?}", report.discrepancies);

    let expected = corpus::oracle(&c.files, &c.manifest);
    let got_columns: BTreeMap<String, bool> = report
        .columns
        .iter()
        .map(|s| (format!("{}.{}", s.class_name, s.attribute_name), s.migrated))
        .collect();
    let got_methods: BTreeMap<String, bool> =
        report.methods.iter().map(|s| (s.qualified_name.clone(), s.migrated)).collect();
    let got_tests: BTreeMap<String, bool> = report.tests.iter().map(|s| (s.name.clone(), s.migrated)).collect();

    assert_eq!(got_columns, expected.columns);
    assert_eq!(got_methods, expected.methods);
    assert_eq!(got_tests, expected.tests);
}

#[test]
fn corpus_exercises_both_outcomes_in_every_category() {
    let c = corpus::generate();
    let v = corpus::oracle(&c.files, &c.manifest);
    for (label, map) in [("columns", &v.columns), ("methods", &v.methods), ("tests", &v.tests)] {
        let migrated = map.values().filter(|m| **m).count();
        assert!(migrated > 0 && migrated < map.len(), "{label}: {migrated}/{}", map.len());
    }
    // Frozen from the oracle: 4 mapped annotations x 2 mapped_column calls for
    // columns, typed signatures with matching asyncness for methods, and the
    // three awaiting bodies for async tests.
    let count = |m: &BTreeMap<String, bool>| m.values().filter(|x| **x).count();
    assert_eq!((count(&v.columns), v.columns.len()), (EXPECTED_COLUMNS, 48));
    assert_eq!((count(&v.methods), v.methods.len()), (EXPECTED_METHODS, 120));
    assert_eq!((count(&v.tests), v.tests.len()), (3, 14));
}

const EXPECTED_COLUMNS: usize = 8;
const EXPECTED_METHODS: usize = 24;

#[test]
fn converting_one_column_adds_exactly_one() {
    let c = corpus::generate();
    let dir = write_corpus(&c.files);
    let base = analyze_tree(dir.path(), &c.manifest).unwrap();

    for (idx, status) in base.columns.iter().enumerate().filter(|(_, s)| !s.migrated) {
        let module = status.class_name.rsplit_once('.').unwrap().0;
        let rel = format!("{}.py", module.replace('.', "/"));
        let prefix_a = format!("    {}:", status.attribute_name);
        let prefix_b = format!("    {} =", status.attribute_name);
        let text: String = c.files[&rel]
            .split_inclusive('\n')
            .map(|l| {
                if l.starts_with(&prefix_a) || l.starts_with(&prefix_b) {
                    format!("    {}: Mapped[int] = mapped_column(Integer)\n", status.attribute_name)
                } else {
                    l.to_string()
                }
            })
            .collect();
        fs::write(dir.path().join(&rel), &text).unwrap();
        let after = analyze_tree(dir.path(), &c.manifest).unwrap();
        fs::write(dir.path().join(&rel), &c.files[&rel]).unwrap();

        assert_eq!(after.summary.columns.migrated, base.summary.columns.migrated + 1, "{}", status.attribute_name);
        for (i, (a, b)) in base.columns.iter().zip(&after.columns).enumerate() {
            if i != idx {
                assert_eq!(a, b);
            }
        }
        assert!(after.columns[idx].migrated);
        assert_eq!(after.methods, base.methods);
        assert_eq!(after.tests, base.tests);
    }
}

#[test]
fn unresolvable_entries_are_unmigrated_and_reported() {
    let c = corpus::generate();
    let dir = write_corpus(&c.files);
    let mut manifest = c.manifest.clone();
    manifest.expected_methods.push(migrate_core::analyzer::MethodTarget {
        qualified_name: "corpus.mod_00.Missing.nowhere".into(),
        must_be_async: true,
    });
    // A class name is not a test function.
    manifest.expected_tests.push(migrate_core::analyzer::TestTarget { name: "Model0".into() });
    let first = analyze_tree(dir.path(), &manifest).unwrap();
    let second = analyze_tree(dir.path(), &manifest).unwrap();
    assert_eq!(first, second);

    assert_eq!(first.discrepancies.len(), 2, "{:?}", first.discrepancies);
    assert!(!first.methods.last().unwrap().migrated);
    assert!(!first.tests.last().unwrap().migrated);
    for ratio in [first.summary.columns, first.summary.methods, first.summary.tests] {
        assert!(ratio.migrated <= ratio.total);
    }
    assert_eq!(first.summary.methods.total, manifest.expected_methods.len());
}
