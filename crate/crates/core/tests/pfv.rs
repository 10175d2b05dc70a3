use pairwise_core::patch_descriptor::{import_features, DescriptorError, FeatureRecord, Origin};
use pairwise_core::pfv::{decode_any, encode_pfv1, encode_pfv2, read_any, write_pfv1, write_pfv2, FeatureFile, PfvError};
use proptest::prelude::*;

fn record(id: &str, index: u32, origin: Origin, vector: Vec<f64>) -> FeatureRecord {
    FeatureRecord { image_id: id.into(), point_index: index, point: (f64::from(index) * 1.5, -2.25), origin, vector }
}

fn file_strategy() -> impl Strategy<Value = FeatureFile> {
    (1usize..5).prop_flat_map(|dim| {
        proptest::collection::vec(
            ("[a-z]{1,4}/[a-z0-9_]{1,6}", any::<u32>(), any::<bool>(), proptest::collection::vec(-1e6f32..1e6, dim)),
            0..8,
        )
        .prop_map(move |raw| FeatureFile {
            dim,
            records: raw
                .into_iter()
                .map(|(id, idx, paired, v)| {
                    let origin = if paired { Origin::Paired } else { Origin::Original };
                    record(&id, idx, origin, v.into_iter().map(f64::from).collect())
                })
                .collect(),
        })
    })
}

proptest! {
    #[test]
    fn pfv2_round_trips_exactly(file in file_strategy()) {
        let bytes = encode_pfv2(&file).unwrap();
        prop_assert_eq!(decode_any(&bytes).unwrap(), file);
    }

    #[test]
    fn every_strict_prefix_is_rejected(file in file_strategy()) {
        let bytes = encode_pfv2(&file).unwrap();
        for cut in 0..bytes.len() {
            prop_assert!(decode_any(&bytes[..cut]).is_err(), "prefix of {} bytes accepted", cut);
        }
    }

    #[test]
    fn pfv1_refuses_paired_rows(file in file_strategy()) {
        let has_paired = file.records.iter().any(|r| r.origin == Origin::Paired);
        prop_assert_eq!(encode_pfv1(&file).is_err(), has_paired);
    }
}

#[test]
fn files_on_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = FeatureFile {
        dim: 2,
        records: vec![record("a/x", 0, Origin::Original, vec![0.5, -1.0]), record("a/x", 0, Origin::Paired, vec![0.25, 3.0])],
    };
    let path = dir.path().join("joint.pfv2");
    write_pfv2(&path, &file).unwrap();
    assert_eq!(read_any(&path).unwrap(), file);
    assert!(matches!(read_any(&dir.path().join("missing")), Err(PfvError::Io { .. })));
    assert!(write_pfv2(&path, &FeatureFile { dim: 0, records: Vec::new() }).is_err());
}

#[test]
fn import_matches_keys_and_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ext.pfv");
    let records = vec![
        record("c/1", 1, Origin::Original, vec![1.0, 2.0]),
        record("c/1", 0, Origin::Original, vec![3.0, 4.0]),
        record("c/2", 0, Origin::Original, vec![5.0, 6.0]),
    ];
    write_pfv1(&path, &FeatureFile { dim: 2, records: records.clone() }).unwrap();

    let expected = [("c/1".to_string(), 0), ("c/1".to_string(), 1)];
    let got = import_features(&path, &expected, 2).unwrap();
    assert_eq!(got, vec![records[1].clone(), records[0].clone()]);

    match import_features(&path, &[("c/3".to_string(), 4)], 2) {
        Err(DescriptorError::MissingKey { image_id, point_index }) => assert_eq!((image_id.as_str(), point_index), ("c/3", 4)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        import_features(&path, &expected, 3),
        Err(DescriptorError::DimensionMismatch { expected: 3, found: 2 })
    ));

    let mut dup = records.clone();
    dup.push(records[0].clone());
    write_pfv1(&path, &FeatureFile { dim: 2, records: dup }).unwrap();
    assert!(matches!(import_features(&path, &expected, 2), Err(DescriptorError::DuplicateKey { .. })));
}
