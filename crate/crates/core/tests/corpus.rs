//! The fuzz corpus seeds, and byte-level mutations of them, through the
//! decoders. Mirrors the checks of the fuzz targets on stable toolchains.

use std::path::PathBuf;

use moldkit::predict::parse_model_meta;
use moldkit::roi::{actions_to_json, parse_actions};
use moldkit::{dimg, pgm, CameraIntrinsics};
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed-"))
        .collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds in {}", dir.display());
    paths.into_iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn check_pgm(data: &[u8]) -> bool {
    if let Ok(raw) = pgm::decode_raw(data) {
        assert_eq!(raw.samples.len(), raw.width * raw.height);
        assert!(raw.samples.iter().all(|&s| s <= raw.maxval));
    }
    match pgm::decode(data) {
        Ok(img) => {
            assert_eq!(pgm::decode(&pgm::encode(&img)).unwrap(), img);
            true
        }
        Err(_) => false,
    }
}

fn check_dimg(data: &[u8]) -> bool {
    match dimg::decode(data) {
        Ok(b) => {
            assert_eq!(dimg::encode(&b).unwrap(), data);
            true
        }
        Err(_) => false,
    }
}

fn check_intrinsics(data: &[u8]) -> bool {
    let Ok(s) = std::str::from_utf8(data) else { return false };
    match CameraIntrinsics::from_json_str(s) {
        Ok(c) => {
            assert_eq!(CameraIntrinsics::from_json_str(&c.to_json_string()).unwrap(), c);
            true
        }
        Err(_) => false,
    }
}

fn check_actions(data: &[u8]) -> bool {
    let Ok(s) = std::str::from_utf8(data) else { return false };
    match parse_actions(s) {
        Ok(specs) => {
            assert_eq!(parse_actions(&actions_to_json(&specs)).unwrap(), specs);
            true
        }
        Err(_) => false,
    }
}

fn check_meta(data: &[u8]) -> bool {
    let Ok(s) = std::str::from_utf8(data) else { return false };
    match parse_model_meta(s) {
        Ok(m) => {
            assert_eq!(parse_model_meta(&serde_json::to_string(&m).unwrap()).unwrap(), m);
            true
        }
        Err(_) => false,
    }
}

type Check = fn(&[u8]) -> bool;

const TARGETS: [(&str, Check); 5] = [
    ("pgm_decode", check_pgm),
    ("dimg_decode", check_dimg),
    ("intrinsics_json", check_intrinsics),
    ("actions_json", check_actions),
    ("model_meta", check_meta),
];

#[test]
fn every_seed_decodes() {
    for (target, check) in TARGETS {
        for (k, seed) in seeds(target).iter().enumerate() {
            assert!(check(seed), "{target} seed {k} is rejected");
        }
    }
}

#[derive(Clone, Debug)]
enum Mutation {
    Set(usize, u8),
    Truncate(usize),
    Insert(usize, u8),
}

fn mutate(mut data: Vec<u8>, ms: &[Mutation]) -> Vec<u8> {
    for m in ms {
        match *m {
            Mutation::Set(i, b) if !data.is_empty() => {
                let n = data.len();
                data[i % n] = b;
            }
            Mutation::Truncate(i) => data.truncate(i % (data.len() + 1)),
            Mutation::Insert(i, b) => data.insert(i % (data.len() + 1), b),
            Mutation::Set(..) => {}
        }
    }
    data
}

fn mutations() -> impl Strategy<Value = Vec<Mutation>> {
    let one = prop_oneof![
        (any::<usize>(), any::<u8>()).prop_map(|(i, b)| Mutation::Set(i, b)),
        any::<usize>().prop_map(Mutation::Truncate),
        (any::<usize>(), any::<u8>()).prop_map(|(i, b)| Mutation::Insert(i, b)),
    ];
    proptest::collection::vec(one, 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mutated_seeds_never_panic(t in 0..TARGETS.len(), pick in any::<usize>(), ms in mutations()) {
        let (target, check) = TARGETS[t];
        let all = seeds(target);
        let data = mutate(all[pick % all.len()].clone(), &ms);
        check(&data);
    }
}
