use std::fs;

use skgp::csvio::{load_csv, load_features, write_csv, ResponseColumn};
use skgp::SkgpError;
use skgp_core::simgen::{generate, Manifold, SimConfig};

#[test]
fn swiss_roll_export_reloads_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let sim = generate(&SimConfig::new(Manifold::SwissRoll, 100, 5, 40, 0.01, 9)).unwrap();
    let path = dir.path().join("train.csv");
    write_csv(&sim.train, &path, "y").unwrap();
    let back = load_csv(&path, &ResponseColumn::Name("y".into())).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(back.n(), 100);
    assert_eq!(back.p(), 40);
    assert_eq!(
        bits(back.features().as_slice()),
        bits(sim.train.features().as_slice())
    );
    assert_eq!(bits(back.response()), bits(sim.train.response()));
}

#[test]
fn small_file_parses_by_name_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "x1,x2,y\n1,2,3\n4,5,6\n7,8,9\n").unwrap();
    let by_name = load_csv(&path, &ResponseColumn::Name("y".into())).unwrap();
    let by_index = load_csv(&path, &"2".parse().unwrap()).unwrap();
    assert_eq!((by_name.n(), by_name.p()), (3, 2));
    assert_eq!(by_name.response(), &[3.0, 6.0, 9.0]);
    assert_eq!(by_name.features(), by_index.features());
    let first = load_csv(&path, &ResponseColumn::Index(0)).unwrap();
    assert_eq!(first.response(), &[1.0, 4.0, 7.0]);
    assert_eq!(first.feature_names().unwrap(), &["x2", "y"]);
}

#[test]
fn nan_cell_is_reported_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "x1,x2,y\n1,2,3\n4,NaN,6\n").unwrap();
    let err = load_csv(&path, &ResponseColumn::Name("y".into())).unwrap_err();
    match &err {
        SkgpError::BadCell {
            row, column, value, ..
        } => {
            assert_eq!((*row, column.as_str(), value.as_str()), (2, "x2", "NaN"));
        }
        other => panic!("unexpected error {other}"),
    }
    let text = err.to_string();
    assert!(text.contains("row 2") && text.contains("'x2'"), "{text}");
}

#[test]
fn missing_response_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(matches!(
        load_csv(&path, &ResponseColumn::Name("y".into())),
        Err(SkgpError::MissingResponse { .. })
    ));
}

#[test]
fn prediction_features_match_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("new.csv");
    fs::write(&path, "y,b,a\n0,2,1\n0,4,3\n").unwrap();
    let names = vec!["a".to_string(), "b".to_string()];
    let x = load_features(&path, &names, Some(&ResponseColumn::Name("y".into()))).unwrap();
    assert_eq!(x.row(0), &[1.0, 2.0]);
    assert_eq!(x.row(1), &[3.0, 4.0]);
    let wrong = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    assert!(matches!(
        load_features(&path, &wrong, Some(&ResponseColumn::Name("y".into()))),
        Err(SkgpError::ColumnCount { .. })
    ));
}
