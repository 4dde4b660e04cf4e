use nast_core::data::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, Checkpoint, MAGIC};
use nast_core::model::{ModelConfig, NastModel};
use nast_core::train::TrainConfig;
use nast_core::{CheckpointError, NastError, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_checkpoint(seed: u64) -> Checkpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = rng.gen_range(2..20);
    let vocab = Vocab::from_tokens((0..words).map(|i| format!("w{i}"))).unwrap();
    let heads = rng.gen_range(1..4);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: heads * rng.gen_range(2..6),
        enc_layers: rng.gen_range(1..3),
        dec_layers: rng.gen_range(1..3),
        heads,
        ffn_dim: rng.gen_range(4..20),
        lambda: rng.gen_range(1..4),
        k: rng.gen_range(0..4),
        dropout: 0.0,
        max_positions: 64,
    };
    let train = rng.gen_bool(0.5).then(|| TrainConfig {
        stage: 2,
        l_min: 3.0,
        ..Default::default()
    });
    Checkpoint {
        model: NastModel::new(config, seed).unwrap(),
        vocab,
        train,
    }
}

fn header_len(bytes: &[u8]) -> usize {
    MAGIC.len() + 8 + u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize
}

fn checkpoint_err(bytes: &[u8]) -> CheckpointError {
    match checkpoint_from_bytes(bytes) {
        Err(NastError::Checkpoint(e)) => e,
        other => panic!("expected a checkpoint error, got {other:?}"),
    }
}

#[test]
fn roundtrip_is_bitwise() {
    for seed in 0..10 {
        let ckpt = random_checkpoint(seed);
        let bytes = checkpoint_to_bytes(&ckpt).unwrap();
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back.model.config(), ckpt.model.config());
        assert_eq!(back.vocab, ckpt.vocab);
        assert_eq!(back.train, ckpt.train);
        for ((n1, a), (n2, b)) in ckpt.model.params().iter().zip(back.model.params().iter()) {
            assert_eq!(n1, n2);
            let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "{n1}");
        }
        assert_eq!(checkpoint_to_bytes(&back).unwrap(), bytes);
    }
}

#[test]
fn file_roundtrip_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let ckpt = random_checkpoint(3);
    save_checkpoint(&path, &ckpt).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    let missing = dir.path().join("nope.ckpt");
    match load_checkpoint(&missing) {
        Err(NastError::Io { path, .. }) => assert_eq!(path, missing),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_magic() {
    let mut bytes = checkpoint_to_bytes(&random_checkpoint(1)).unwrap();
    bytes[0] = b'X';
    assert!(matches!(checkpoint_err(&bytes), CheckpointError::BadMagic));
    assert!(matches!(checkpoint_err(b"NAST"), CheckpointError::BadMagic));
}

#[test]
fn version_mismatch() {
    let mut bytes = checkpoint_to_bytes(&random_checkpoint(1)).unwrap();
    bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(
        checkpoint_err(&bytes),
        CheckpointError::VersionMismatch { found: 7, expected: 1 }
    ));
}

#[test]
fn truncation_names_the_tensor() {
    let ckpt = random_checkpoint(2);
    let bytes = checkpoint_to_bytes(&ckpt).unwrap();
    let last = ckpt.model.params().names().last().unwrap().clone();
    match checkpoint_err(&bytes[..bytes.len() - 3]) {
        CheckpointError::Truncated(what) => assert_eq!(what, last),
        other => panic!("{other:?}"),
    }
    assert!(matches!(checkpoint_err(&bytes[..10]), CheckpointError::Truncated(_)));
    // Every proper prefix fails with some error, never a panic.
    for cut in (0..bytes.len()).step_by(97) {
        assert!(checkpoint_from_bytes(&bytes[..cut]).is_err());
    }
}

#[test]
fn unknown_tensor_name() {
    let mut bytes = checkpoint_to_bytes(&random_checkpoint(4)).unwrap();
    // First tensor name starts after the header and the tensor count.
    let name_at = header_len(&bytes) + 4 + 4;
    bytes[name_at] = b'#';
    match checkpoint_err(&bytes) {
        CheckpointError::UnknownTensor(name) => assert!(name.starts_with('#')),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_tensor() {
    let ckpt = random_checkpoint(5);
    let mut bytes = checkpoint_to_bytes(&ckpt).unwrap();
    let at = header_len(&bytes);
    let count = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    bytes[at..at + 4].copy_from_slice(&(count - 1).to_le_bytes());
    let last = ckpt.model.params().names().last().unwrap().clone();
    match checkpoint_err(&bytes) {
        CheckpointError::MissingTensor(name) => assert_eq!(name, last),
        other => panic!("{other:?}"),
    }
}

#[test]
fn shape_mismatch() {
    let mut bytes = checkpoint_to_bytes(&random_checkpoint(6)).unwrap();
    let at = header_len(&bytes) + 4;
    let name_len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let dim_at = at + 4 + name_len + 4;
    let d = u32::from_le_bytes(bytes[dim_at..dim_at + 4].try_into().unwrap());
    bytes[dim_at..dim_at + 4].copy_from_slice(&(d + 1).to_le_bytes());
    assert!(matches!(checkpoint_err(&bytes), CheckpointError::ShapeMismatch { .. }));
}

#[test]
fn bad_embedded_config() {
    let mut bytes = checkpoint_to_bytes(&random_checkpoint(7)).unwrap();
    bytes[16] = b'!';
    assert!(matches!(checkpoint_err(&bytes), CheckpointError::BadConfig(_)));
}
