use std::path::PathBuf;

use orthate_cli::dataio::{load_csv_dataset, read_csv_dataset, ColumnMap, DataError};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn read(text: &str, n: Option<usize>) -> Result<orthate::estimators::Dataset, DataError> {
    read_csv_dataset(text.as_bytes(), &ColumnMap::default(), n)
}

#[test]
fn three_row_fixture_loads_with_truth() {
    let ds = load_csv_dataset(&fixture("three_rows.csv"), &ColumnMap::default(), None).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.n_features(), 2);
    assert_eq!(ds.n_treatments(), 2);
    assert_eq!(ds.y(), &[1.5, 2.25, 0.75]);
    assert_eq!(ds.d(), &[0, 1, 0]);
    assert_eq!(ds.z().row(1), &[-0.3, 0.4]);
    let truth = ds.truth().unwrap();
    assert_eq!(truth[1], vec![2.1, 2.3, 1.8]);
}

#[test]
fn missing_value_names_its_line() {
    match load_csv_dataset(&fixture("missing_value.csv"), &ColumnMap::default(), None) {
        Err(DataError::Parse { line, column, .. }) => {
            assert_eq!(line, 2);
            assert_eq!(column, "y");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn out_of_range_label_is_a_schema_error() {
    let err = read("y,d,z1\n1,0,0\n2,5,1\n", Some(2)).unwrap_err();
    assert!(matches!(err, DataError::Schema(ref m) if m.contains("label 5")), "{err}");
}

#[test]
fn missing_columns_are_schema_errors() {
    assert!(matches!(read("y,z1\n1,0\n", None), Err(DataError::Schema(_))));
    assert!(matches!(read("y,d\n1,0\n", None), Err(DataError::Schema(_))));
    assert!(matches!(read("y,d,z1,z3\n1,0,0,0\n", None), Err(DataError::Schema(_))));
}

#[test]
fn malformed_cells_are_rejected() {
    for text in [
        "y,d,z1\n1,0,\n",
        "y,d,z1\n1,0,inf\n",
        "y,d,z1\n1,0,NaN\n",
        "y,d,z1\n1,-1,0\n",
        "y,d,z1\n1,0.5,0\n",
        "y,d,z1\n1,0,0,9\n",
        "y,d,z1\n1,0,1e999\n",
    ] {
        assert!(read(text, Some(2)).is_err(), "{text:?} was accepted");
    }
}

#[test]
fn mu_columns_must_match_declared_treatments() {
    let err = read("y,d,z1,mu0,mu1\n1,0,0,1,2\n", Some(3)).unwrap_err();
    assert!(matches!(err, DataError::Schema(_)));
}

#[test]
fn column_order_and_extra_columns_do_not_matter() {
    let a = read("y,d,z1,z2\n1,0,3,4\n2,1,5,6\n", None).unwrap();
    let b = read("id,z2,d,z1,y\n7,4,0,3,1\n8,6,1,5,2\n", None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn custom_column_names() {
    let cols = ColumnMap { y: "outcome".into(), d: "arm".into(), z_prefix: "x".into(), mu_prefix: "m".into() };
    let ds = read_csv_dataset("outcome,arm,x1,m0,m1\n1,0,3,1,2\n2,1,5,1,2\n".as_bytes(), &cols, None).unwrap();
    assert_eq!(ds.n_features(), 1);
    assert!(ds.truth().is_some());
}

#[test]
fn loading_is_deterministic() {
    let path = fixture("toy.csv");
    let a = load_csv_dataset(&path, &ColumnMap::default(), None).unwrap();
    let b = load_csv_dataset(&path, &ColumnMap::default(), None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 300);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_csv_dataset(&fixture("absent.csv"), &ColumnMap::default(), None).unwrap_err();
    assert!(matches!(err, DataError::Io { .. }));
}
