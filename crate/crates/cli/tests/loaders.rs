use std::fs;

use circspec::config::DataSource;
use circspec::data::{default_sidecar, encode_idx, load_csv, load_f32, load_idx, load_source};
use circspec::CliError;

#[test]
fn csv_fixture_exact_values() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("f.csv");
    fs::write(&p, "a,b,c,label\n0.5,-1.25,3e-2,1\n7,8.125,-0,0\n").unwrap();
    let d = load_csv(&p).unwrap();
    assert_eq!(d.dim, 3);
    assert_eq!(d.x, vec![0.5, -1.25, 0.03, 7.0, 8.125, -0.0]);
    assert_eq!(d.labels, vec![1, 0]);

    let q = tmp.path().join("g.csv");
    fs::write(&q, "label,x0,x1\n2,1.5,2.5\n").unwrap();
    let d = load_csv(&q).unwrap();
    assert_eq!((d.x, d.labels), (vec![1.5, 2.5], vec![2]));
}

#[test]
fn csv_rejections_name_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("nan.csv");
    fs::write(&p, "a,b,label\n1,2,0\n3,NaN,1\n").unwrap();
    match load_csv(&p) {
        Err(CliError::Row { row, .. }) => assert_eq!(row, 1),
        other => panic!("{other:?}"),
    }
    fs::write(&p, "a,b,label\n1,2,0\n3,1\n").unwrap();
    match load_csv(&p) {
        Err(CliError::Row { row, message, .. }) => {
            assert_eq!(row, 1);
            assert!(message.contains("expected 3"));
        }
        other => panic!("{other:?}"),
    }
    fs::write(&p, "a,b,label\n1,2,-1\n").unwrap();
    assert!(matches!(load_csv(&p), Err(CliError::Row { row: 0, .. })));
    fs::write(&p, "a,b\n1,2\n").unwrap();
    assert!(matches!(load_csv(&p), Err(CliError::Format { .. })));
}

#[test]
fn f32_block_with_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("x.bin");
    let vals: [f32; 6] = [0.5, 1.0, -2.0, 0.25, 3.0, 4.5];
    fs::write(&p, vals.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()).unwrap();
    let side = default_sidecar(&p);
    fs::write(&side, r#"{"n": 2, "d": 3, "labels": [1, 0]}"#).unwrap();
    let d = load_f32(&p, &side).unwrap();
    assert_eq!(d.x, vals.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
    assert_eq!(d.labels, vec![1, 0]);
    let src = DataSource::F32 { path: p.clone(), sidecar: None, name: None };
    assert_eq!(load_source(&src).unwrap().0, d);

    fs::write(&side, r#"{"n": 3, "d": 3, "labels": [1, 0, 0]}"#).unwrap();
    assert!(matches!(load_f32(&p, &side), Err(CliError::Format { .. })));
    fs::write(&side, r#"{"n": 2, "d": 3, "labels": [1]}"#).unwrap();
    assert!(matches!(load_f32(&p, &side), Err(CliError::Format { .. })));
}

#[test]
fn idx_pair_loads_scaled_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let (img, lab) = (tmp.path().join("img"), tmp.path().join("lab"));
    fs::write(&img, encode_idx(&[2, 2, 2], &[0, 51, 102, 255, 255, 204, 153, 0])).unwrap();
    fs::write(&lab, {
        let mut b = vec![0, 0, 8, 1, 0, 0, 0, 2];
        b.extend([7, 3]);
        b
    })
    .unwrap();
    let d = load_idx(&img, &lab).unwrap();
    assert_eq!(d.dim, 4);
    assert_eq!(d.row(0), &[0.0, 0.2, 0.4, 1.0]);
    assert_eq!(d.row(1), &[1.0, 0.8, 0.6, 0.0]);
    assert_eq!(d.labels, vec![7, 3]);
    assert!(d.check(4, 10, &img).is_ok());
    assert!(matches!(d.check(4, 5, &img), Err(CliError::Row { row: 0, .. })));

    fs::write(&lab, encode_idx(&[3], &[1, 2, 3])).unwrap();
    assert!(matches!(load_idx(&img, &lab), Err(CliError::Format { .. })));
    let mut bytes = encode_idx(&[2, 2, 2], &[0; 8]);
    bytes.truncate(bytes.len() - 1);
    fs::write(&img, bytes).unwrap();
    assert!(matches!(load_idx(&img, &lab), Err(CliError::Idx { offset: 23, .. })));
}
