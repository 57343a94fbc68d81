use std::collections::BTreeMap;
use std::path::Path;

use lora_hull::checkpoint::{adapter_to_checkpoint, checkpoint_to_adapter, decode, encode, read_checkpoint, write_checkpoint, Checkpoint};
use lora_hull::manifest::{load_anchor_manifest, Manifest, ManifestEntry};
use lora_hull::table::{similarity_csv, sweep_csv, sweep_json};
use lora_hull::Error;
use lora_hull_core::adapter::MixSpec;
use lora_hull_core::diagnostics::pairwise_sq_l2;
use lora_hull_core::interpolation::{compose_multi, to_dense, to_lowrank_concat};
use lora_hull_core::sweep::{plan_alpha_line, plan_simplex, run_sweep, SweepResult};
use lora_hull_core::synthetic::{gen_anchor_set, SyntheticSpec};
use lora_hull_core::{Adapter, AdapterLayer, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_checkpoint(r: &mut ChaCha8Rng) -> Checkpoint {
    let mut ck = Checkpoint::default();
    for t in 0..r.random_range(0..6) {
        let (rows, cols) = (r.random_range(1..9), r.random_range(1..9));
        let data = (0..rows * cols).map(|_| r.random_range(-1e3f32..1e3)).collect();
        ck.tensors.insert(format!("t{t}.{}", r.random_range(0..100)), Matrix::new(rows, cols, data).unwrap());
    }
    for k in 0..r.random_range(0..3) {
        ck.metadata.insert(format!("k{k}"), format!("v{}", r.random::<u32>()));
    }
    ck
}

#[test]
fn write_read_write_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for i in 0..20 {
        let ck = random_checkpoint(&mut r);
        let p = dir.path().join(format!("{i}.safetensors"));
        write_checkpoint(&p, &ck).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert_eq!(back, ck);
        let first = std::fs::read(&p).unwrap();
        assert_eq!(encode(&back).unwrap(), first);
    }
}

#[test]
fn reference_reader_accepts_our_files() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let ck = random_checkpoint(&mut r);
    let bytes = encode(&ck).unwrap();
    let st = safetensors::SafeTensors::deserialize(&bytes).unwrap();
    assert_eq!(st.len(), ck.tensors.len());
}

#[test]
fn exported_merge_reloads_to_same_delta() {
    let spec = SyntheticSpec { n_attributes: 3, layer_shapes: vec![(12, 10), (8, 9)], rank: 3, ..SyntheticSpec::default() };
    let (set, _) = gen_anchor_set(&spec).unwrap();
    let c = compose_multi(&set, &MixSpec::new(vec![-1.0, 0.5, 2.0], vec![0.2, 0.3, 0.5])).unwrap();
    let merged = to_lowrank_concat(&c, "merged");
    let bytes = encode(&adapter_to_checkpoint(&merged)).unwrap();
    let back = checkpoint_to_adapter("merged", &decode(&bytes).unwrap(), None).unwrap();
    let want = to_dense(&c);
    for (name, m) in back.deltas() {
        let scale = want[&name].max_abs().max(1.0);
        for (x, y) in m.data().iter().zip(want[&name].data()) {
            assert!(((x - y) / scale).abs() <= 1e-6);
        }
    }
}

fn write_pair(dir: &Path, name: &str, shapes: &[(usize, usize)], r: &mut ChaCha8Rng) -> ManifestEntry {
    let mut make = |side: &str| {
        let layers = shapes
            .iter()
            .enumerate()
            .map(|(l, &(d1, d2))| {
                let b = Matrix::new(d1, 2, (0..d1 * 2).map(|_| r.random_range(-1.0f32..1.0)).collect()).unwrap();
                let a = Matrix::new(2, d2, (0..2 * d2).map(|_| r.random_range(-1.0f32..1.0)).collect()).unwrap();
                AdapterLayer::new(format!("model.layers.{l}.q_proj"), b, a, 1.0).unwrap()
            })
            .collect();
        let ad = Adapter::new(format!("{name}.{side}"), layers).unwrap();
        let file = format!("{name}_{side}.safetensors");
        let mut ck = adapter_to_checkpoint(&ad);
        ck.metadata.remove("scaling");
        ck.metadata.insert("lora_alpha".into(), "16".into());
        ck.metadata.insert("r".into(), "32".into());
        write_checkpoint(&dir.join(&file), &ck).unwrap();
        file
    };
    let minus = make("minus");
    let plus = make("plus");
    ManifestEntry { name: name.into(), minus: minus.into(), plus: plus.into(), scaling: None }
}

#[test]
fn five_attribute_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let names = ["simplicity", "formality", "politeness", "sentiment", "humor"];
    let mut entries: Vec<_> = names.iter().map(|n| write_pair(dir.path(), n, &[(6, 5), (6, 5)], &mut r)).collect();
    entries[4].scaling = Some(2.0);
    let path = dir.path().join("m.json");
    Manifest { attributes: entries.clone(), layers: None }.write(&path).unwrap();
    let set = load_anchor_manifest(&path).unwrap();
    assert_eq!(set.len(), 5);
    assert_eq!(set.attributes().collect::<Vec<_>>(), names);
    let first = set.pairs()[0].minus.layers().next().unwrap();
    assert_eq!(first.scaling(), 0.5);
    assert_eq!(set.pairs()[4].plus.layers().next().unwrap().scaling(), 2.0);

    // One entry is a valid single-pair set.
    Manifest { attributes: entries[..1].to_vec(), layers: None }.write(&path).unwrap();
    assert_eq!(load_anchor_manifest(&path).unwrap().len(), 1);

    // Schema expectations are enforced.
    let mut layers = BTreeMap::new();
    layers.insert("model.layers.0.q_proj".to_string(), (6, 5));
    Manifest { attributes: entries[..1].to_vec(), layers: Some(layers) }.write(&path).unwrap();
    let err = load_anchor_manifest(&path).unwrap_err();
    assert!(matches!(err, Error::Validation(ref m) if m.contains("model.layers.1.q_proj")), "{err}");

    // Missing files name the path.
    let mut bad = entries[0].clone();
    bad.plus = "nowhere.safetensors".into();
    Manifest { attributes: vec![bad], layers: None }.write(&path).unwrap();
    let err = load_anchor_manifest(&path).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("nowhere.safetensors"), "{err}");

    // Duplicate names are a validation error naming the attribute.
    Manifest { attributes: vec![entries[0].clone(), entries[0].clone()], layers: None }.write(&path).unwrap();
    let err = load_anchor_manifest(&path).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("simplicity"), "{err}");
}

#[test]
fn mismatched_layers_name_the_layer() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let a = write_pair(dir.path(), "a", &[(6, 5), (6, 5)], &mut r);
    let b = write_pair(dir.path(), "b", &[(6, 5)], &mut r);
    let path = dir.path().join("m.json");
    Manifest { attributes: vec![a, b], layers: None }.write(&path).unwrap();
    let err = load_anchor_manifest(&path).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("model.layers.1.q_proj"), "{err}");
}

fn small_sweep(m: usize) -> SweepResult {
    let spec = SyntheticSpec { n_attributes: 3, layer_shapes: vec![(6, 5)], rank: 2, ..SyntheticSpec::default() };
    let (set, oracle) = gen_anchor_set(&spec).unwrap();
    run_sweep(&plan_simplex(3, [0, 1, 2], m, 0.5).unwrap(), &set, Some(&oracle)).unwrap()
}

#[test]
fn sweep_tables() {
    let spec = SyntheticSpec { n_attributes: 2, layer_shapes: vec![(6, 5)], rank: 2, ..SyntheticSpec::default() };
    let (set, _) = gen_anchor_set(&spec).unwrap();
    let res = run_sweep(&plan_alpha_line(2, 0, 0.0, 1.0, 3).unwrap(), &set, None).unwrap();
    let text = String::from_utf8(sweep_csv(&res)).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "row_id,alpha_1,alpha_2,lambda_1,lambda_2,score_1,score_2,delta_norm");
    assert!(lines[2].starts_with("alpha-00001,0.5,0,1,0,,,"), "{}", lines[2]);

    let res = small_sweep(10);
    let text = String::from_utf8(sweep_csv(&res)).unwrap();
    assert_eq!(text.lines().count(), 67);

    let back: SweepResult = serde_json::from_slice(&sweep_json(&res)).unwrap();
    for (a, b) in back.rows.iter().zip(&res.rows) {
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.lambda, b.lambda);
        assert!((a.delta_norm - b.delta_norm).abs() <= 1e-9);
        for (x, y) in a.scores.as_ref().unwrap().iter().zip(b.scores.as_ref().unwrap()) {
            assert!((x - y).abs() <= 1e-9);
        }
    }
}

#[test]
fn similarity_table_shape() {
    let spec = SyntheticSpec { n_attributes: 2, layer_shapes: vec![(6, 5)], rank: 2, ..SyntheticSpec::default() };
    let (set, _) = gen_anchor_set(&spec).unwrap();
    let ads: Vec<_> = set.pairs().iter().flat_map(|p| [&p.minus, &p.plus]).collect();
    let text = String::from_utf8(similarity_csv(&pairwise_sq_l2(&ads).unwrap())).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "label,attr0.minus,attr0.plus,attr1.minus,attr1.plus");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("attr0.minus,0,"));
}

fn header_bytes(n: u64, header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut b = n.to_le_bytes().to_vec();
    b.extend_from_slice(header);
    b.extend_from_slice(payload);
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn corrupted_headers_are_errors(
        n in any::<u64>(),
        header in "[ -~]{0,80}",
        payload in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        let _ = decode(&header_bytes(n, header.as_bytes(), &payload));
    }

    #[test]
    fn mutated_valid_files_never_panic(seed in any::<u64>(), flips in proptest::collection::vec((any::<usize>(), any::<u8>()), 1..6)) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut bytes = encode(&random_checkpoint(&mut r)).unwrap();
        for (pos, val) in flips {
            let i = pos % bytes.len();
            bytes[i] = val;
        }
        let _ = decode(&bytes);
    }
}
