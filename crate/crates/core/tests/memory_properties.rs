mod common;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::doc;
use common::memory_ops::{step, Op};
use subfuse::memory::{FactEntry, FactRef, MemoryBank, MemoryError};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_sequences_keep_invariants(seed in any::<u64>(), len in 1usize..40, cap in 0usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bank = MemoryBank::new();
        for _ in 0..len {
            let op = Op::random(&mut rng);
            let cap = if rng.random_bool(0.5) { cap } else { subfuse::memory::SUMMARY_CAP };
            if let Err(e) = step(&mut bank, &op, cap) {
                prop_assert!(false, "{}", e);
            }
        }
    }

    #[test]
    fn keyword_search_ignores_case(word in "[A-Za-z]{1,8}") {
        let mut bank = MemoryBank::new();
        bank.add_keyword(&doc("v"), &word).unwrap();
        let upper = bank.search_by_keyword(&word.to_uppercase()).videos.len();
        let lower = bank.search_by_keyword(&word.to_lowercase()).videos.len();
        prop_assert_eq!((upper, lower), (1, 1));
    }
}

#[test]
fn selection_is_all_or_nothing() {
    let mut bank = MemoryBank::new();
    bank.add_fact(&doc("a"), FactEntry::new("kept", "video_qa")).unwrap();
    bank.select_facts(&[FactRef::new(doc("a"), 0)]).unwrap();
    let err = bank
        .select_facts(&[FactRef::new(doc("a"), 0), FactRef::new(doc("a"), 5)])
        .unwrap_err();
    assert!(matches!(err, MemoryError::IndexOutOfRange { index: 5, .. }));
    assert_eq!(bank.selected_facts(), ["kept"]);
}

#[test]
fn removal_shifts_flat_numbers() {
    let mut bank = MemoryBank::new();
    for text in ["zero", "one", "two"] {
        bank.add_fact(&doc("a"), FactEntry::new(text, "t")).unwrap();
    }
    bank.add_fact(&doc("b"), FactEntry::new("bee", "t")).unwrap();
    assert_eq!(bank.resolve_flat("F#3").unwrap(), FactRef::new(doc("b"), 0));
    bank.remove_fact(&doc("a"), 1).unwrap();
    assert_eq!(bank.resolve_flat("F#1").unwrap(), FactRef::new(doc("a"), 1));
    assert_eq!(bank.fact(&FactRef::new(doc("a"), 1)).unwrap().fact, "two");
    assert!(bank.resolve_flat("F#3").is_err());
}

#[test]
fn loading_rejects_broken_banks() {
    for text in [
        r#"{"keywords": {"a": ["x"]}}"#,
        r#"{"videos": {"a": {"status": "processed"}}}"#,
        r#"{"keywords": {"a": ["Mixed"]}, "videos": {"a": {"status": "pending"}}}"#,
        r#"{"notes": []}"#,
    ] {
        assert!(MemoryBank::load(text.as_bytes()).is_err(), "{text}");
    }
    assert_eq!(MemoryBank::load(b"{}").unwrap(), MemoryBank::new());
}
