mod common;

use equipoise::data::fmt_roundtrip;
use equipoise::{
    validate_dataset, validate_scheme, Dataset, Error, RawTable, SchemeKind, SchemeParams,
    WeightScheme,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn table(cols: &[(&str, Vec<f64>)]) -> RawTable {
    RawTable::new(
        cols.iter().map(|(n, _)| n.to_string()).collect(),
        cols.iter().map(|(_, c)| c.clone()).collect(),
    )
    .unwrap()
}

#[test]
fn four_row_table_validates() {
    let raw = table(&[
        ("X1", vec![0.1, 0.2, 0.3, 0.4]),
        ("Z", vec![0.0, 1.0, 0.0, 1.0]),
        ("Y", vec![1.0, 2.0, 3.0, 4.0]),
        ("X2", vec![5.0, 6.0, 7.0, 8.0]),
    ]);
    let ds = validate_dataset(&raw, "Z", "Y").unwrap();
    assert_eq!(ds.n_units(), 4);
    assert_eq!(ds.treatment(), &[0, 1, 0, 1]);
    assert_eq!(ds.covariate_names(), &["X1".to_string(), "X2".to_string()]);
    assert_eq!(ds.covariate("X2").unwrap(), vec![5.0, 6.0, 7.0, 8.0]);
    assert_eq!((ds.n_treated(), ds.n_control()), (2, 2));
}

#[test]
fn all_treated_is_degenerate() {
    let raw = table(&[
        ("Z", vec![1.0; 3]),
        ("Y", vec![1.0, 2.0, 3.0]),
        ("X", vec![0.0, 1.0, 2.0]),
    ]);
    assert_eq!(
        validate_dataset(&raw, "Z", "Y").unwrap_err(),
        Error::DegenerateTreatment
    );
}

#[test]
fn treatment_two_is_rejected_not_coerced() {
    let raw = table(&[
        ("Z", vec![0.0, 2.0, 1.0]),
        ("Y", vec![1.0, 2.0, 3.0]),
        ("X", vec![0.0, 1.0, 2.0]),
    ]);
    assert!(matches!(
        validate_dataset(&raw, "Z", "Y"),
        Err(Error::NonBinaryTreatment { row: 1, .. })
    ));
}

#[test]
fn missing_and_nonfinite_columns() {
    let raw = table(&[
        ("Z", vec![0.0, 1.0]),
        ("Y", vec![1.0, f64::NAN]),
        ("X", vec![0.0, 1.0]),
    ]);
    assert_eq!(
        validate_dataset(&raw, "T", "Y").unwrap_err(),
        Error::MissingColumn("T".into())
    );
    assert!(matches!(
        validate_dataset(&raw, "Z", "Y"),
        Err(Error::NonFiniteValue { row: 1, .. })
    ));
}

#[test]
fn csv_reader_requires_numeric_cells() {
    let csv = "Z,Y,X\n0,1.5,2\n1,abc,3\n";
    assert!(matches!(
        RawTable::from_csv_reader(csv.as_bytes()),
        Err(Error::InvalidCell { row: 1, .. })
    ));
    let ok = RawTable::from_csv_reader("Z,Y,X\n0,1.5,2\n1,2.5,3\n".as_bytes()).unwrap();
    assert_eq!(ok.column("Y").unwrap(), &[1.5, 2.5]);
}

#[test]
fn scheme_parameter_domains() {
    let alpha = |a| SchemeParams {
        alpha: Some(a),
        ..Default::default()
    };
    assert_eq!(
        validate_scheme(SchemeKind::Trim, alpha(0.1)).unwrap(),
        WeightScheme::Trim { alpha: 0.1 }
    );
    let bw = SchemeParams {
        nu: Some(1.5),
        ..Default::default()
    };
    assert!(matches!(
        validate_scheme(SchemeKind::Bw, bw),
        Err(Error::ParamOutOfRange { param: "nu", .. })
    ));
    let mw = SchemeParams {
        delta: Some(0.002),
        ..Default::default()
    };
    assert_eq!(
        validate_scheme(SchemeKind::Mw, mw).unwrap(),
        WeightScheme::Mw { delta: 0.002 }
    );
    assert_eq!(
        validate_scheme(SchemeKind::Mw, SchemeParams::default()).unwrap(),
        WeightScheme::mw()
    );
    assert!(matches!(
        validate_scheme(SchemeKind::Trunc, SchemeParams::default()),
        Err(Error::MissingParam { .. })
    ));
    assert!(matches!(
        validate_scheme(SchemeKind::Ow, alpha(0.1)),
        Err(Error::ExtraneousParam { .. })
    ));
    assert!(matches!(
        validate_scheme(SchemeKind::Trim, alpha(0.5)),
        Err(Error::ParamOutOfRange { .. })
    ));
}

#[test]
fn scheme_strings_round_trip() {
    for s in [
        "IPW",
        "ATT",
        "ATC",
        "TRIM(0.1)",
        "TRUNC(0.05)",
        "OW",
        "MW",
        "EW",
        "BW(11)",
        "BW(2.5)",
    ] {
        let w: WeightScheme = s.parse().unwrap();
        assert_eq!(w.to_string(), s);
        assert_eq!(w.to_string().parse::<WeightScheme>().unwrap(), w);
    }
    assert!(matches!(
        "XYZ".parse::<WeightScheme>(),
        Err(Error::UnknownScheme(_))
    ));
}

#[test]
fn estimand_labels() {
    let label = |s: &str| s.parse::<WeightScheme>().unwrap().estimand_label();
    assert_eq!(label("IPW"), "ATE");
    assert_eq!(label("ATT"), "ATT");
    assert_eq!(label("ATC"), "ATC");
    assert_eq!(label("TRIM(0.1)"), "OSATE");
    assert_eq!(label("TRUNC(0.1)"), "truncated-population WATE");
    assert_eq!(label("OW"), "equipoise");
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (3usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(-1e6f64..1e6, n),
            proptest::collection::vec(-1e3f64..1e3, 2 * n),
        )
            .prop_filter_map("both arms", move |(z, y, x)| {
                let zf: Vec<f64> = z.iter().map(|&b| f64::from(u8::from(b))).collect();
                let cov = DMatrix::from_column_slice(n, 2, &x);
                Dataset::new(&zf, y, cov, vec!["A".into(), "B".into()]).ok()
            })
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact(ds in arb_dataset()) {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let raw = RawTable::from_csv_reader(buf.as_slice()).unwrap();
        let back = validate_dataset(&raw, "Z", "Y").unwrap();
        prop_assert_eq!(&back, &ds);
        for (a, b) in back.outcome().iter().zip(ds.outcome()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn accepted_datasets_satisfy_invariants(ds in arb_dataset()) {
        prop_assert!(ds.treatment().iter().all(|&t| t <= 1));
        prop_assert!(ds.n_treated() >= 1 && ds.n_control() >= 1);
        prop_assert_eq!(ds.outcome().len(), ds.n_units());
        prop_assert_eq!(ds.covariates().nrows(), ds.n_units());
        prop_assert!(ds.outcome().iter().all(|v| v.is_finite()));
        prop_assert!(ds.covariates().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn roundtrip_formatting(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_roundtrip(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}
