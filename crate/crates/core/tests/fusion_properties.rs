mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{all_strategies, compare_with_oracle, Instance};
use subfuse::fusion::{fuse, FusionInput, FusionStrategy};

fn instance() -> impl Strategy<Value = Instance> {
    any::<u64>().prop_map(|seed| Instance::random(&mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn agrees_with_exact_oracle(inst in instance()) {
        let input = inst.to_input();
        for strategy in all_strategies() {
            let fused = fuse(&input, strategy, usize::MAX).unwrap();
            prop_assert!(compare_with_oracle(&inst, strategy, &fused).is_ok(), "{:?}", compare_with_oracle(&inst, strategy, &fused));
        }
    }

    #[test]
    fn list_order_does_not_matter(inst in instance(), rotation in 0usize..5, reverse in any::<bool>()) {
        let input = inst.to_input();
        let mut lists = input.sub_lists().to_vec();
        let r = rotation % lists.len();
        lists.rotate_left(r);
        if reverse {
            lists.reverse();
        }
        let shuffled = FusionInput::new(input.query.clone(), lists).unwrap();
        for strategy in all_strategies() {
            prop_assert_eq!(fuse(&input, strategy, usize::MAX).unwrap(), fuse(&shuffled, strategy, usize::MAX).unwrap());
        }
    }

    #[test]
    fn depth_is_a_prefix(inst in instance(), depth in 0usize..12) {
        let input = inst.to_input();
        for strategy in all_strategies() {
            let full = fuse(&input, strategy, usize::MAX).unwrap();
            let cut = fuse(&input, strategy, depth).unwrap();
            prop_assert_eq!(cut.entries(), &full.entries()[..depth.min(full.len())]);
        }
    }

    #[test]
    fn fused_documents_are_the_union(inst in instance()) {
        let input = inst.to_input();
        let mut union: Vec<String> = inst.lists.iter().flatten().map(|(d, _)| d.clone()).collect();
        union.sort();
        union.dedup();
        for strategy in all_strategies() {
            let mut docs: Vec<String> = fuse(&input, strategy, usize::MAX).unwrap().docs().map(|d| d.to_string()).collect();
            docs.sort();
            prop_assert_eq!(&docs, &union);
        }
    }
}

#[test]
fn exact_tie_falls_back_to_document_id() {
    let inst = Instance::rrf_tie();
    let fused = fuse(&inst.to_input(), FusionStrategy::Rrf { k: 10 }, usize::MAX).unwrap();
    assert_eq!(fused.score_of(&common::doc("a")), fused.score_of(&common::doc("z")));
    let a = fused.rank_of(&common::doc("a")).unwrap();
    assert_eq!(fused.rank_of(&common::doc("z")), Some(a + 1));
    compare_with_oracle(&inst, FusionStrategy::Rrf { k: 10 }, &fused).unwrap();
}
