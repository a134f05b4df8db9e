//! Sample loading contracts: bit depths, dimension checks, save/load
//! round-trips.

use rdseg::data::{load_sample, save_sample, ClassMap};
use rdseg::labels::{Labels, IGNORE_ID};
use rdseg::tensor::Tensor;

use image::{ImageBuffer, Luma, Rgb};
use std::path::Path;

fn write_fixture(dir: &Path, h: u32, w: u32, depth16: bool) -> (Vec<u8>, Vec<u8>) {
    let rgb = ImageBuffer::from_fn(w, h, |x, y| {
        Rgb([(x * 7 % 256) as u8, (y * 11 % 256) as u8, ((x + y) * 3 % 256) as u8])
    });
    rgb.save(dir.join("rgb.png")).unwrap();

    if depth16 {
        let depth: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_fn(w, h, |x, y| Luma([(x * y * 131 % 65536) as u16]));
        depth.save(dir.join("depth.png")).unwrap();
    } else {
        let depth: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_fn(w, h, |x, y| Luma([((x + 2 * y) % 256) as u8]));
        depth.save(dir.join("depth.png")).unwrap();
    }

    let label_ids: Vec<u8> =
        (0..h * w).map(|i| if i % 9 == 0 { 200 } else { (i % 4) as u8 }).collect();
    let labels: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w, h, label_ids.clone()).unwrap();
    labels.save(dir.join("labels.png")).unwrap();

    (rgb.into_raw(), label_ids)
}

#[test]
fn loads_and_remaps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (_, raw_labels) = write_fixture(dir.path(), 10, 12, true);
    let map = ClassMap::identity(4, "identity").unwrap();
    let sample = load_sample(
        &dir.path().join("rgb.png"),
        &dir.path().join("depth.png"),
        &dir.path().join("labels.png"),
        &map,
    )
    .unwrap();
    assert_eq!(sample.hw(), (10, 12));
    // raw id 200 is unmapped -> ignore
    for (got, &raw) in sample.labels.ids.iter().zip(&raw_labels) {
        if raw == 200 {
            assert_eq!(*got, IGNORE_ID);
        } else {
            assert_eq!(*got, raw);
        }
    }
    assert!(sample.rgb.to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn sixteen_bit_depth_endpoint_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let depth: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(2, 1, vec![65535u16, 0]).unwrap();
    depth.save(dir.path().join("depth.png")).unwrap();
    let rgb = ImageBuffer::from_fn(2, 1, |_, _| Rgb([0u8, 0, 0]));
    rgb.save(dir.path().join("rgb.png")).unwrap();
    let labels: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(2, 1, vec![0, 1]).unwrap();
    labels.save(dir.path().join("labels.png")).unwrap();

    let map = ClassMap::identity(2, "identity").unwrap();
    let sample = load_sample(
        &dir.path().join("rgb.png"),
        &dir.path().join("depth.png"),
        &dir.path().join("labels.png"),
        &map,
    )
    .unwrap();
    assert_eq!(sample.depth.to_vec(), vec![1.0, 0.0]);
}

#[test]
fn eight_bit_depth_is_autodetected() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 6, 6, false);
    let map = ClassMap::identity(4, "identity").unwrap();
    let sample = load_sample(
        &dir.path().join("rgb.png"),
        &dir.path().join("depth.png"),
        &dir.path().join("labels.png"),
        &map,
    )
    .unwrap();
    // 8-bit value v loads as v/255
    let d = sample.depth.to_vec();
    assert!((d[1] - 1.0 / 255.0).abs() < 1e-7);
}

#[test]
fn load_save_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 24, 16, true);
    let map = ClassMap::identity(4, "identity").unwrap();
    let first = load_sample(
        &dir.path().join("rgb.png"),
        &dir.path().join("depth.png"),
        &dir.path().join("labels.png"),
        &map,
    )
    .unwrap();

    save_sample(
        &first,
        &dir.path().join("rgb2.png"),
        &dir.path().join("depth2.png"),
        &dir.path().join("labels2.png"),
    )
    .unwrap();
    let second = load_sample(
        &dir.path().join("rgb2.png"),
        &dir.path().join("depth2.png"),
        &dir.path().join("labels2.png"),
        &map,
    )
    .unwrap();

    assert_eq!(first.rgb.to_vec(), second.rgb.to_vec());
    assert_eq!(first.depth.to_vec(), second.depth.to_vec());
    assert_eq!(first.labels.ids, second.labels.ids);
}

#[test]
fn dimension_mismatch_and_missing_files_error() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 8, 8, true);
    let small: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(4, 4, vec![0; 16]).unwrap();
    small.save(dir.path().join("small.png")).unwrap();

    let map = ClassMap::identity(4, "identity").unwrap();
    let err = load_sample(
        &dir.path().join("rgb.png"),
        &dir.path().join("depth.png"),
        &dir.path().join("small.png"),
        &map,
    )
    .unwrap_err();
    assert!(err.to_string().contains("do not match"));

    assert!(load_sample(
        &dir.path().join("missing.png"),
        &dir.path().join("depth.png"),
        &dir.path().join("labels.png"),
        &map,
    )
    .is_err());
}

#[test]
fn sample_plane_alignment_is_enforced() {
    let rgb = Tensor::zeros(&[3, 4, 4]).unwrap();
    let depth = Tensor::zeros(&[1, 4, 5]).unwrap();
    let labels = Labels::filled(1, 4, 4, 0);
    assert!(rdseg::data::Sample::new(rgb, depth, labels).is_err());
}
