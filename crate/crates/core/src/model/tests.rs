use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ndtensor::AdamState;
use crate::SaniError;

fn tiny(variant: Variant) -> ModelParams {
    let cfg = ModelConfig {
        variant,
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        max_seq: 12,
        vocab_size: 20,
        seed: 5,
    };
    ModelParams::init(&cfg).unwrap()
}

fn random_ids(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(0..vocab as u32)).collect()
}

#[test]
fn causal_prefix_logits_are_unchanged_by_later_tokens() {
    let p = tiny(Variant::Clm);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let ids = random_ids(&mut rng, n, 20);
        let t = rng.random_range(0..n);
        let mut changed = ids.clone();
        changed[t] = (changed[t] + 1 + rng.random_range(0..18)) % 20;
        let a = forward(&p, &ids, AttentionMode::Causal).unwrap();
        let b = forward(&p, &changed, AttentionMode::Causal).unwrap();
        for pos in 0..t {
            assert_eq!(a.row(pos), b.row(pos), "position {pos} saw token {t}");
        }
    }
}

#[test]
fn bidirectional_positions_see_later_tokens() {
    let p = tiny(Variant::Mlm);
    let ids = vec![1, 2, 3, 4, 5];
    let mut changed = ids.clone();
    changed[4] = 9;
    let a = forward(&p, &ids, AttentionMode::Bidirectional).unwrap();
    let b = forward(&p, &changed, AttentionMode::Bidirectional).unwrap();
    assert_ne!(a.row(0), b.row(0));
}

#[test]
fn zero_head_gives_uniform_distribution() {
    let mut p = tiny(Variant::Mlm);
    let (w, b) = p.head();
    p.store.get_mut(w).fill(0.0);
    p.store.get_mut(b).fill(0.0);
    let logits = forward(&p, &[4, 5, 6], AttentionMode::Bidirectional).unwrap();
    for r in 0..3 {
        assert!(logits.row(r).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn forward_is_pure() {
    let p = tiny(Variant::Mlm);
    let a = forward(&p, &[7, 8, 9], AttentionMode::Bidirectional).unwrap();
    let b = forward(&p, &[7, 8, 9], AttentionMode::Bidirectional).unwrap();
    assert_eq!(a, b);
}

#[test]
fn overlong_input_is_rejected() {
    let p = tiny(Variant::Clm);
    let ids = vec![4; 13];
    assert!(matches!(
        forward(&p, &ids, AttentionMode::Causal),
        Err(SaniError::SequenceTooLong { len: 13, max: 12 })
    ));
}

#[test]
fn editing_the_head_changes_only_head_entries() {
    let p = tiny(Variant::Mlm);
    let mut q = p.clone();
    let (w, b) = q.head();
    q.store.get_mut(w).row_mut(3).fill(0.0);
    q.store.get_mut(b).data_mut()[3] = 0.5;
    for i in 0..p.store.len() {
        let same = p.store.get(i) == q.store.get(i);
        assert_eq!(same, i != w && i != b, "{}", p.store.name(i));
    }
}

fn checkpoint() -> Checkpoint {
    let params = tiny(Variant::Mlm);
    let mut opt = AdamState::new(&params.store);
    opt.step = 17;
    opt.m[0].data_mut()[0] = 0.25;
    opt.v[3].data_mut()[1] = -1.5e-7;
    Checkpoint {
        params,
        optimizer: Some(opt),
        epoch: 9,
        rng_seed: 0xdead_beef_cafe_f00d,
    }
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let ck = checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.sani");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), ck.to_bytes());
    let ids = [4, 5, 6, 7];
    assert_eq!(
        forward(&ck.params, &ids, AttentionMode::Bidirectional).unwrap(),
        forward(&back.params, &ids, AttentionMode::Bidirectional).unwrap()
    );
}

#[test]
fn checkpoint_header_layout() {
    let bytes = checkpoint().to_bytes();
    assert_eq!(&bytes[..4], b"SANI");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
    let cfg_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cfg: ModelConfig = serde_json::from_slice(&bytes[12..12 + cfg_len]).unwrap();
    assert_eq!(cfg.vocab_size, 20);
    let name_len = u32::from_le_bytes(bytes[12 + cfg_len..16 + cfg_len].try_into().unwrap());
    assert_eq!(&bytes[16 + cfg_len..16 + cfg_len + name_len as usize], b"tok_emb");
}

#[test]
fn truncated_checkpoint_is_corrupt() {
    let bytes = checkpoint().to_bytes();
    for cut in [10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..cut]),
            Err(SaniError::CorruptFile(_))
        ));
    }
    let mut flipped = bytes.clone();
    flipped[100] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(SaniError::CorruptFile(_))));
}

#[test]
fn other_format_version_is_refused() {
    let mut bytes = checkpoint().to_bytes();
    bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        Checkpoint::from_bytes(&bytes),
        Err(SaniError::FormatVersionMismatch { found: 2, .. })
    ));
}

#[test]
fn variant_mismatch_is_a_config_error() {
    let ck = checkpoint();
    assert!(ck.expect_variant(Variant::Mlm).is_ok());
    assert!(matches!(ck.expect_variant(Variant::Clm), Err(SaniError::Config(_))));
}
