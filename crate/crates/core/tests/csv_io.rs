use lqgsim::harness::{export_csv, import_csv, ResultTable, CSV_HEADER};

#[test]
fn round_trip_keeps_rows_and_order() {
    let mut t = ResultTable::new();
    t.push("1", "two-sided", "cost", 9.27481234567, 0.061, 1024).unwrap();
    t.push("steady", "linear", "cost_minus_modulo", -3.2e-7, 4.5e-8, 1024).unwrap();
    t.push("steady", "modulo", "cost_upper_bound", f64::INFINITY, 0.0, 0).unwrap();
    t.push("steady", "no-si", "infeasible", f64::NAN, 0.0, 0).unwrap();
    t.push("20", "kochman-zamir", "sdr_db", 11.3, 0.004, 200000).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    export_csv(&t, &path).unwrap();
    let back = import_csv(&path).unwrap();
    assert_eq!(back.len(), t.len());
    for (a, b) in t.rows().iter().zip(back.rows()) {
        assert_eq!((&a.key, &a.scheme, &a.statistic, a.n), (&b.key, &b.scheme, &b.statistic, b.n));
        if a.value.is_nan() {
            assert!(b.value.is_nan());
        } else if a.value.is_finite() {
            assert!((a.value - b.value).abs() <= 5e-9 * a.value.abs());
        } else {
            assert_eq!(a.value, b.value);
        }
        assert!((a.std_err - b.std_err).abs() <= 5e-9 * a.std_err);
    }

    // A second export of the re-imported table is byte-identical.
    let again = dir.path().join("u.csv");
    export_csv(&back, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn empty_table_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    export_csv(&ResultTable::new(), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    assert!(import_csv(&path).unwrap().is_empty());
}

#[test]
fn foreign_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t,scheme,stat,value,se,n\n1,linear,cost,1,0,1\n").unwrap();
    assert!(import_csv(&path).is_err());
}

#[test]
fn unwritable_path_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("t.csv");
    assert!(export_csv(&ResultTable::new(), &path).is_err());
}
