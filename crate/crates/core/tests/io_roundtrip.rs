use std::fs;

use image::{ImageBuffer, Luma, Rgb};
use istd_core::io::*;
use istd_core::metrics::Mask;
use istd_core::network::NetConfig;
use istd_core::weights::{ParamTensor, WeightStore};
use istd_core::{Error, FormatError, Tensor};
use proptest::prelude::*;

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let store = WeightStore::seeded(&NetConfig::new(8).layout().unwrap(), 4);
    let (a, b) = (dir.path().join("a.cspw"), dir.path().join("b.cspw"));
    save_weights(&store, &a).unwrap();
    let loaded = load_weights(&a).unwrap();
    assert_eq!(loaded, store);
    save_weights(&loaded, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn corrupted_files_give_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = WeightStore::seeded(&NetConfig::new(8).layout().unwrap(), 4);
    let bytes = encode(&store).unwrap();
    let p = dir.path().join("w");
    fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        load_weights(&p),
        Err(Error::Format(FormatError::Truncated { .. }))
    ));
    let mut foreign = bytes.clone();
    foreign[..4].copy_from_slice(b"PK\x03\x04");
    fs::write(&p, &foreign).unwrap();
    assert!(matches!(load_weights(&p), Err(Error::Format(FormatError::BadMagic(_)))));
    assert!(matches!(
        load_weights(&dir.path().join("missing")),
        Err(Error::Io { .. })
    ));
}

fn write_l8(path: &std::path::Path, w: u32, h: u32, f: impl Fn(u32, u32) -> u8) {
    ImageBuffer::from_fn(w, h, |x, y| Luma([f(x, y)])).save(path).unwrap();
}

#[test]
fn dataset_pairs_sorts_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir_all(root.join("images")).unwrap();
    fs::create_dir_all(root.join("masks")).unwrap();
    for stem in ["a2", "a10", "b"] {
        write_l8(&root.join(format!("images/{stem}.png")), 4, 3, |x, _| {
            if x == 0 {
                255
            } else {
                51
            }
        });
        write_l8(&root.join(format!("masks/{stem}.png")), 4, 3, |x, y| {
            if (x, y) == (1, 1) {
                1
            } else {
                0
            }
        });
    }
    fs::write(root.join("images/notes.txt"), "ignored").unwrap();
    let samples = load_dataset(root, DatasetMode::Masked).unwrap();
    let ids: Vec<_> = samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["a10", "a2", "b"]);
    let s = &samples[0];
    assert_eq!(s.image.shape(), (3, 4, 1));
    assert_eq!(s.image.at(0, 0, 0), 1.0);
    assert_eq!(s.image.at(0, 1, 0), 0.2);
    let m = s.mask.as_ref().unwrap();
    assert_eq!(m.count(), 1);
    assert!(m.get(1, 1));
}

#[test]
fn sixteen_bit_images_use_full_range() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.png");
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 1, vec![65535, 32768]).unwrap();
    buf.save(&p).unwrap();
    let t = read_gray_png(&p).unwrap();
    assert_eq!(t.at(0, 0, 0), 1.0);
    assert_eq!(t.at(0, 1, 0), (32768.0f64 / 65535.0) as f32);
}

#[test]
fn dataset_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert!(matches!(scan_dataset(root, DatasetMode::Scored), Err(Error::Input(_))));
    fs::create_dir_all(root.join("images")).unwrap();
    assert!(scan_dataset(root, DatasetMode::Masked).unwrap().is_empty());
    write_l8(&root.join("images/x1.png"), 2, 2, |_, _| 0);
    let err = scan_dataset(root, DatasetMode::Masked).unwrap_err();
    assert!(err.to_string().contains("x1"));
    assert_eq!(scan_dataset(root, DatasetMode::Scored).unwrap().len(), 1);

    fs::create_dir_all(root.join("masks")).unwrap();
    write_l8(&root.join("masks/x1.png"), 3, 2, |_, _| 0);
    let err = load_dataset(root, DatasetMode::Masked).unwrap_err();
    assert!(matches!(err, Error::Input(_)));

    ImageBuffer::from_fn(2, 2, |_, _| Rgb([1u8, 2, 3]))
        .save(root.join("images/x1.png"))
        .unwrap();
    assert!(matches!(load_dataset(root, DatasetMode::Scored), Err(Error::Input(_))));
}

#[test]
fn png16_and_mask_writers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tensor::from_fn(5, 7, 1, |r, c, _| (r * 7 + c) as f32 / 34.0);
    let p = dir.path().join("t.png");
    write_png16(&p, &t).unwrap();
    let back = read_gray_png(&p).unwrap();
    for (a, b) in t.data().iter().zip(back.data()) {
        assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-7);
    }
    let m = Mask::from_fn(5, 7, |r, c| (r + c) % 3 == 0);
    let mp = dir.path().join("m.png");
    write_mask_png(&mp, &m).unwrap();
    assert_eq!(read_mask_png(&mp).unwrap(), m);
    let rp = dir.path().join("t.f32");
    write_raw_f32(&rp, &t).unwrap();
    assert_eq!(read_raw_f32(&rp).unwrap(), t);
}

#[test]
fn config_file_loading() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.cfg");
    fs::write(&p, "baseChannels = 8\nthreads = 3\n").unwrap();
    let cfg = RunConfig::load(&p).unwrap();
    assert_eq!((cfg.base_channels, cfg.threads), (8, 3));
    fs::write(&p, "colour = blue\n").unwrap();
    let err = RunConfig::load(&p).unwrap_err();
    assert!(err.is_weight_or_config());
    assert!(err.to_string().contains("colour"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_stores_round_trip(
        entries in proptest::collection::vec(
            ("[a-z/_0-9]{1,12}", proptest::collection::vec(0usize..4, 0..4)),
            0..6,
        ),
        seed in any::<u32>(),
    ) {
        let mut store = WeightStore::new();
        for (k, (name, dims)) in entries.into_iter().enumerate() {
            let n: usize = dims.iter().product();
            let data = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 97 + k as u32) & 0x7f7f_ffff)).collect();
            let _ = store.insert(name, ParamTensor::new(dims, data).unwrap());
        }
        let bytes = encode(&store).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}
