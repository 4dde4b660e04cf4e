use nast_core::lattice::collapse;
use nast_core::model::{ModelConfig, NastModel};
use nast_core::stream::{offline_decode, offline_reference_decode, CollapseMode, ScriptedDecoder, StreamSession};
use nast_core::verify::tiny_model_config;
use nast_core::{TokenId, BLANK};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [CollapseMode; 2] = [CollapseMode::PaperLiteral, CollapseMode::Exact];

fn stream_scripted(raw: &[TokenId], lambda: usize, k: usize, mode: CollapseMode) -> Vec<TokenId> {
    let dec = ScriptedDecoder::new(raw.to_vec(), lambda).unwrap();
    let n = dec.source_len();
    let mut s = StreamSession::new(dec, k, mode);
    let mut out = Vec::new();
    for _ in 0..n {
        out.extend(s.push(3).unwrap());
    }
    let (tail, trace) = s.finalize().unwrap();
    out.extend(tail);
    assert_eq!(trace.emitted(), out);
    assert_eq!(s.prefix(), out.as_slice());
    out
}

#[test]
fn random_raw_alignments_stream_like_offline() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10_000 {
        let lambda = rng.gen_range(1..5);
        let n = rng.gen_range(1..9);
        let vocab = rng.gen_range(2..6);
        let raw: Vec<TokenId> = (0..lambda * n)
            .map(|_| if rng.gen_bool(0.4) { BLANK } else { rng.gen_range(1..vocab) })
            .collect();
        let k = rng.gen_range(0..4);
        for mode in MODES {
            let streamed = stream_scripted(&raw, lambda, k, mode);
            assert_eq!(streamed, offline_reference_decode(&raw, lambda, mode), "{raw:?} λ={lambda} k={k} {mode}");
        }
        assert_eq!(stream_scripted(&raw, lambda, k, CollapseMode::Exact), collapse(&raw));
    }
}

#[test]
fn blank_boundary_divergence() {
    let raw = [3, BLANK, 3, 4];
    assert_eq!(stream_scripted(&raw, 2, 0, CollapseMode::PaperLiteral), vec![3, 4]);
    assert_eq!(stream_scripted(&raw, 2, 0, CollapseMode::Exact), vec![3, 3, 4]);
}

fn varied_model(seed: u64) -> NastModel<f32> {
    // A wider vocabulary than the gradient-check model gives argmax paths with
    // repeats and blanks at chunk edges.
    let cfg = ModelConfig {
        vocab_size: 9,
        ..tiny_model_config(3)
    };
    NastModel::new(cfg, seed).unwrap()
}

#[test]
fn model_streaming_matches_offline_decoding() {
    let model = varied_model(31);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut emitted = 0;
    for i in 0..200 {
        let n = rng.gen_range(1..12);
        let src: Vec<TokenId> = (0..n).map(|_| rng.gen_range(3..9)).collect();
        let k = i % 4;
        for mode in MODES {
            let mut s = StreamSession::for_model(&model, k, mode);
            let mut out = Vec::new();
            for &t in &src {
                out.extend(s.push(t).unwrap());
            }
            out.extend(s.finalize().unwrap().0);
            assert_eq!(out, offline_decode(&model, &src, k, mode).unwrap(), "src {src:?} k={k} {mode}");
            emitted += out.len();
        }
    }
    assert!(emitted > 400, "model emitted only {emitted} tokens");
}

#[test]
fn encoder_is_causal_bitwise() {
    let model = varied_model(41);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let d = model.config().embed_dim;
    for _ in 0..100 {
        let n = rng.gen_range(2..10);
        let src: Vec<TokenId> = (0..n).map(|_| rng.gen_range(3..9)).collect();
        let cut = rng.gen_range(1..n);
        let mut other = src.clone();
        for t in &mut other[cut..] {
            *t = rng.gen_range(3..9);
        }
        let a = model.encoder_forward(&src).unwrap();
        let b = model.encoder_forward(&other).unwrap();
        assert_eq!(a.data()[..cut * d], b.data()[..cut * d]);
    }
}

#[test]
fn chunks_are_causal_under_chunk_wait_bitwise() {
    let model = varied_model(51);
    let lambda = model.config().lambda;
    let vocab = model.config().vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for k in [0, 2, 5] {
        for _ in 0..100 {
            let n = rng.gen_range(2..10);
            let src: Vec<TokenId> = (0..n).map(|_| rng.gen_range(3..9)).collect();
            let chunk = rng.gen_range(1..=n);
            let horizon = (chunk + k).min(n);
            let mut other = src.clone();
            for t in &mut other[horizon..] {
                *t = rng.gen_range(3..9);
            }
            let a = model.log_probs(&src, k).unwrap();
            let b = model.log_probs(&other, k).unwrap();
            let rows = chunk * lambda * vocab;
            assert_eq!(a.data()[..rows], b.data()[..rows], "k={k} chunk={chunk} n={n}");
        }
    }
}

#[test]
fn session_rejects_misuse() {
    let model = varied_model(61);
    let mut s = StreamSession::for_model(&model, 1, CollapseMode::Exact);
    assert!(s.finalize().is_err());
    s.push(3).unwrap();
    s.finalize().unwrap();
    assert!(s.push(4).is_err());
    assert!(s.finalize().is_err());
    let mut s = StreamSession::for_model(&model, 0, CollapseMode::Exact);
    assert!(s.push(99).is_err());
}
