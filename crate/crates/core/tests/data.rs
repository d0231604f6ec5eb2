use std::fs;

use act_core::data::{
    augment_flip, compute_velocities, flip, load_dataset, save_dataset, stratified_folds, synth_generate, SynthConfig,
    BLOB_FILE, MANIFEST_FILE,
};
use act_core::{Error, Split, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        classes: 4,
        train_per_class: 6,
        test_per_class: 2,
        features: 52,
        seed,
    }
}

#[test]
fn round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_generate(&small(1)).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    for (a, b) in back.samples.iter().zip(&ds.samples) {
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.features), bits(&b.features));
    }
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_dataset(&synth_generate(&small(5)).unwrap(), a.path()).unwrap();
    save_dataset(&synth_generate(&small(5)).unwrap(), b.path()).unwrap();
    for f in [MANIFEST_FILE, BLOB_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn truncated_blob_names_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_generate(&small(2)).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let blob = dir.path().join(BLOB_FILE);
    let bytes = fs::read(&blob).unwrap();
    fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    let last = &ds.samples.last().unwrap().id;
    assert!(err.to_string().contains(last.as_str()), "{err}");
}

fn edit_manifest(dir: &std::path::Path, f: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join(MANIFEST_FILE);
    let mut value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    f(&mut value);
    fs::write(&path, value.to_string()).unwrap();
}

#[test]
fn unknown_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&synth_generate(&small(3)).unwrap(), dir.path()).unwrap();
    edit_manifest(dir.path(), |m| m["version"] = 7.into());
    match load_dataset(dir.path()) {
        Err(Error::Version { expected, found, .. }) => assert_eq!((expected.as_str(), found.as_str()), ("1", "7")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn manifest_invariants_are_enforced() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&synth_generate(&small(4)).unwrap(), dir.path()).unwrap();
    edit_manifest(dir.path(), |m| {
        m["samples"][1]["offset"] = m["samples"][0]["offset"].clone()
    });
    assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("overlap"));

    save_dataset(&synth_generate(&small(4)).unwrap(), dir.path()).unwrap();
    edit_manifest(dir.path(), |m| m["samples"][0]["label"] = 9.into());
    assert!(matches!(load_dataset(dir.path()), Err(Error::Data(_))));

    save_dataset(&synth_generate(&small(4)).unwrap(), dir.path()).unwrap();
    let blob = dir.path().join(BLOB_FILE);
    let mut bytes = fs::read(&blob).unwrap();
    bytes[0..4].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&blob, bytes).unwrap();
    assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("non-finite"));
}

#[test]
fn synthetic_counts_actors_and_seeds() {
    let ds = synth_generate(&SynthConfig::default()).unwrap();
    assert_eq!(ds.split(Split::Train).len(), 2000);
    assert_eq!(ds.split(Split::Test).len(), 400);
    let actors = |s: Split| {
        ds.split(s)
            .iter()
            .map(|x| x.actor.clone())
            .collect::<std::collections::HashSet<_>>()
    };
    assert!(actors(Split::Train).is_disjoint(&actors(Split::Test)));
    let other = synth_generate(&SynthConfig {
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!(ds.samples[0].label, other.samples[0].label);
    assert_ne!(ds.samples[0].features, other.samples[0].features);
    let two = synth_generate(&SynthConfig {
        classes: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!(two.class_names.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forced_flip_is_an_involution(len in 1usize..30, k in 1usize..18, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let orig = Tensor::<f32>::from_fn(&[len, 4 * k], |i| ((i as u64 ^ seed) % 997) as f32 / 500.0 - 1.0);
        let mut x = orig.clone();
        flip(&mut x);
        prop_assert!(augment_flip(&mut x, 1.0, &mut rng));
        prop_assert_eq!(x, orig);
    }

    #[test]
    fn velocities_are_backward_differences(len in 1usize..30, k in 1usize..18, seed in any::<u64>()) {
        let pos = Tensor::<f64>::from_fn(&[len, k, 2], |i| ((i as u64).wrapping_mul(seed | 1) % 1009) as f64 / 1009.0);
        let f = compute_velocities(&pos).unwrap();
        for j in 0..4 * k {
            if j % 4 >= 2 {
                prop_assert_eq!(f.row(0)[j], 0.0);
            }
        }
        for t in 1..len {
            for j in 0..k {
                prop_assert_eq!(f.row(t)[4 * j] - f.row(t - 1)[4 * j], f.row(t)[4 * j + 2]);
                prop_assert_eq!(f.row(t)[4 * j + 1] - f.row(t - 1)[4 * j + 1], f.row(t)[4 * j + 3]);
            }
        }
    }

    #[test]
    fn folds_partition_and_stratify(
        counts in prop::collection::vec(10usize..40, 2..8),
        folds in 2usize..=10,
        seed in any::<u64>(),
    ) {
        let names: Vec<String> = (0..counts.len()).map(|c| format!("c{c}")).collect();
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let a = stratified_folds(&labels, &names, folds, 0.1, seed).unwrap();
        let b = stratified_folds(&labels, &names, folds, 0.1, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), folds);
        for fold in &a {
            let mut all: Vec<usize> = fold.train.iter().chain(&fold.validation).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for (c, &n) in counts.iter().enumerate() {
                let got = fold.validation.iter().filter(|&&i| labels[i] == c).count() as f64;
                prop_assert!((got - n as f64 * 0.1).abs() <= 1.0, "class {c}: {got} of {n}");
            }
        }
    }
}
