use gsmcad_core::cad::{
    dequantize, deserialize_sequence, quantize, serialize_tree, validate_sequence, CadSequence, TokenId,
};
use gsmcad_core::dataset::generate_one;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantization_error_is_half_a_level(x in 0.0f64..=1.0) {
        let back = dequantize(quantize(x).unwrap()).unwrap();
        prop_assert!((back - x).abs() <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn value_tokens_survive_a_round_trip(v in 11u16..=266) {
        let t = TokenId::value(v).unwrap();
        prop_assert_eq!(quantize(dequantize(t).unwrap()).unwrap(), t);
    }

    #[test]
    fn generated_trees_round_trip(seed in any::<u64>(), lo in 20usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = generate_one(lo, lo + 100, &mut rng).unwrap();
        let seq = serialize_tree(&tree, 256).unwrap();
        prop_assert!(seq.valid_len >= lo && seq.valid_len <= lo + 100);
        prop_assert_eq!(&deserialize_sequence(&seq).unwrap(), &tree);
        prop_assert!(validate_sequence(&seq).all_pass());
        // re-serializing the parsed tree gives the same tokens
        prop_assert_eq!(serialize_tree(&deserialize_sequence(&seq).unwrap(), 256).unwrap(), seq);
    }

    #[test]
    fn truncation_is_rejected(seed in any::<u64>(), cut in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = serialize_tree(&generate_one(20, 120, &mut rng).unwrap(), 256).unwrap();
        let keep = seq.valid_len.saturating_sub(cut).max(1);
        let short = CadSequence::from_tokens(seq.valid_tokens()[..keep].to_vec(), 256);
        if let Ok(short) = short {
            prop_assert!(deserialize_sequence(&short).is_err());
        }
    }
}

#[test]
fn padding_does_not_change_the_program() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tree = generate_one(20, 60, &mut rng).unwrap();
    let a = serialize_tree(&tree, 64).unwrap();
    let b = serialize_tree(&tree, 256).unwrap();
    assert_eq!(a.valid_tokens(), b.valid_tokens());
    assert_eq!(deserialize_sequence(&a).unwrap(), deserialize_sequence(&b).unwrap());
}
