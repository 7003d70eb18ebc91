use std::collections::BTreeMap;
use std::path::Path;

use codat_core::data::*;
use codat_core::error::Error;
use codat_core::metrics::evaluate;
use codat_core::train::{train_standard_at, Method, TrainConfig};
use codat_core::AttackConfig;
use ndarray::array;

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = 0x0000_0803u32.to_be_bytes().to_vec();
    for v in [n, rows, cols] {
        out.extend(v.to_be_bytes());
    }
    out.extend(pixels);
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = 0x0000_0801u32.to_be_bytes().to_vec();
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend(labels);
    out
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn idx_pair_loads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(
        dir.path(),
        "img",
        &idx_images(2, 2, 2, &[0, 255, 51, 102, 255, 0, 0, 153]),
    );
    let lab = write(dir.path(), "lab", &idx_labels(&[1, 0]));
    let ds = load_idx(&img, &lab).unwrap();
    assert_eq!(ds.features(), &array![[0.0, 1.0, 0.2, 0.4], [1.0, 0.0, 0.0, 0.6]]);
    assert_eq!(ds.labels(), &[1, 0]);
    assert_eq!(ds.num_classes(), 2);
    assert_eq!(ds.provenance().normalization, Normalization::Scale { divisor: 255.0 });
}

#[test]
fn idx_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let lab = write(dir.path(), "lab", &idx_labels(&[1, 0]));

    let short = write(dir.path(), "short", &idx_images(2, 2, 2, &[0; 7]));
    match load_idx(&short, &lab) {
        Err(Error::Truncated { expected, actual, .. }) => {
            assert_eq!((expected, actual), (24, 23));
        }
        other => panic!("expected truncation, got {other:?}"),
    }

    let mut bad = idx_images(2, 2, 2, &[0; 8]);
    bad[3] = 0x01;
    let bad = write(dir.path(), "bad", &bad);
    assert!(matches!(
        load_idx(&bad, &lab),
        Err(Error::BadMagic { found: 0x801, .. })
    ));
    // Swapped files trip the magic check too.
    let img = write(dir.path(), "img", &idx_images(2, 2, 2, &[0; 8]));
    assert!(matches!(load_idx(&lab, &img), Err(Error::BadMagic { .. })));

    let three = write(dir.path(), "three", &idx_labels(&[1, 0, 1]));
    assert!(matches!(
        load_idx(&img, &three),
        Err(Error::CountMismatch { images: 2, labels: 3 })
    ));

    assert!(matches!(load_idx(&dir.path().join("missing"), &lab), Err(Error::Io(_))));
}

fn csv_spec(label_column: usize, num_classes: usize, has_header: bool, normalize: bool) -> CsvSpec {
    CsvSpec {
        label_column,
        num_classes,
        has_header,
        normalize,
    }
}

#[test]
fn csv_fixture_normalizes_per_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "d.csv", b"x,y,label,z\n2,10,0,7\n4,30,1,7\n6,20,2,7\n");
    let ds = load_csv(&p, &csv_spec(2, 3, true, true)).unwrap();
    assert_eq!(
        ds.features(),
        &array![[0.0, 0.0, 0.0], [0.5, 1.0, 0.0], [1.0, 0.5, 0.0]]
    );
    assert_eq!(ds.labels(), &[0, 1, 2]);
    assert_eq!(
        ds.provenance().normalization,
        Normalization::PerColumnMinMax {
            mins: vec![2.0, 10.0, 7.0],
            maxs: vec![6.0, 30.0, 7.0]
        }
    );
}

#[test]
fn csv_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = csv_spec(0, 2, false, true);
    let ragged = write(dir.path(), "r.csv", b"0,1,2\n1,2\n");
    assert!(matches!(load_csv(&ragged, &spec), Err(Error::Parse { line: 2, .. })));
    let text = write(dir.path(), "t.csv", b"0,1\n1,abc\n");
    assert!(matches!(load_csv(&text, &spec), Err(Error::Parse { .. })));
    let range = write(dir.path(), "l.csv", b"0,1\n2,3\n");
    assert!(matches!(load_csv(&range, &spec), Err(Error::Parse { .. })));
    let frac = write(dir.path(), "f.csv", b"0.5,1\n");
    assert!(load_csv(&frac, &spec).is_err());
    let raw = write(dir.path(), "raw.csv", b"0,1.5\n");
    assert!(load_csv(&raw, &csv_spec(0, 2, false, false)).is_err());
}

#[test]
fn emitted_csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = gen_mixture_split(&MixtureSpec::toy3(40, 3), 10).unwrap();
    let p = dir.path().join("out.csv");
    write_csv(&train, &p).unwrap();
    let back = load_csv(&p, &csv_spec(0, 3, true, false)).unwrap();
    assert_eq!(back.features(), train.features());
    assert_eq!(back.labels(), train.labels());
}

#[test]
fn mixture_collapses_to_means_as_spread_vanishes() {
    let mut spec = MixtureSpec::toy3(20, 0);
    spec.spread = 1e-12;
    let ds = gen_gaussian_mixture(&spec).unwrap();
    // Means (0,0), (1,0), (2.2,0): x rescales to 0, 1/2.2, 1; y collapses to a
    // single value.
    let expected = [0.0, 1.0 / 2.2, 1.0];
    for (row, &y) in ds.features().outer_iter().zip(ds.labels()) {
        assert!((row[0] - expected[y]).abs() < 1e-9);
        assert!((row[1] - ds.features()[[0, 1]]).abs() < 1e-9);
    }
    assert_eq!(ds.class_counts(), vec![20, 20, 20]);
}

#[test]
fn mixture_is_seed_stable() {
    let a = gen_mixture_split(&MixtureSpec::toy3(30, 4), 10).unwrap();
    let b = gen_mixture_split(&MixtureSpec::toy3(30, 4), 10).unwrap();
    assert_eq!(a, b);
    let c = gen_mixture_split(&MixtureSpec::toy3(30, 5), 10).unwrap();
    assert_ne!(a.0.features(), c.0.features());
    assert_eq!(a.1.class_counts(), vec![10, 10, 10]);
    assert_eq!(a.1.split(), Split::Test);
}

#[test]
fn default_preset_makes_a_linear_classifier_unfair() {
    let ds = gen_gaussian_mixture(&MixtureSpec::toy3(500, 0)).unwrap();
    let mut cfg = TrainConfig::desk(Method::StandardAt);
    cfg.hidden = vec![];
    cfg.epochs = 30;
    cfg.lr_milestones = vec![];
    cfg.attack = AttackConfig::new(0.0, 0.01, 1, false).unwrap();
    let (model, _) = train_standard_at(&cfg, &ds, None).unwrap();
    let report = evaluate(&model, &ds, None, 0).unwrap();
    assert!(
        report.worst_class_accuracy < report.average_accuracy,
        "{:?}",
        report.per_class_accuracy
    );
}

#[test]
fn batches_partition_every_epoch() {
    let ds = gen_gaussian_mixture(&MixtureSpec::toy3(17, 1)).unwrap();
    for epoch in 0..3 {
        for batches in [
            batch_iter(&ds, 8, 9, epoch, true).unwrap(),
            stratified_batch_iter(&ds, 8, 9, epoch).unwrap(),
        ] {
            let mut seen: Vec<Vec<u64>> = batches
                .iter()
                .flat_map(|b| {
                    b.features()
                        .outer_iter()
                        .map(|r| r.iter().map(|v| v.to_bits()).collect())
                        .collect::<Vec<_>>()
                })
                .collect();
            let mut all: Vec<Vec<u64>> = ds
                .features()
                .outer_iter()
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect();
            seen.sort();
            all.sort();
            assert_eq!(seen, all);
            let mut counts = BTreeMap::new();
            for b in &batches {
                for &l in b.labels() {
                    *counts.entry(l).or_insert(0) += 1;
                }
            }
            assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![17, 17, 17]);
            assert_eq!(batches.last().unwrap().len(), 51 % 8);
        }
    }
    let whole = batch_iter(&ds, 1000, 0, 0, false).unwrap();
    assert_eq!(whole.len(), 1);
    assert_eq!(whole[0].features(), ds.features());
    assert_eq!(
        batch_iter(&ds, 8, 9, 2, true).unwrap(),
        batch_iter(&ds, 8, 9, 2, true).unwrap()
    );
}
