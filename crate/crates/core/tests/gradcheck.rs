mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reverse_mode_matches_central_differences(seed in any::<u64>()) {
        let r = common::check_instance(seed);
        prop_assert!(r.checked > 0);
        prop_assert_eq!(r.failures, 0, "worst relative error {}", r.worst_rel);
    }
}

#[test]
fn every_head_is_exercised() {
    let mut seen = [false; common::N_HEADS];
    for seed in 0..200 {
        seen[common::GradInstance::random(seed).head] = true;
    }
    assert!(seen.iter().all(|&s| s));
}
