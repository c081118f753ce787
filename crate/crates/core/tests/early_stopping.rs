use crownscale_core::{early_stop_check, EarlyStopping, StopDecision};
use proptest::prelude::*;

/// Direct transcription of the rule: an epoch improves iff its loss is below
/// the best so far minus `min_delta`; stop once `patience` consecutive
/// epochs fail to improve.
fn reference(losses: &[f64], patience: usize, min_delta: f64) -> StopDecision {
    let mut best = f64::INFINITY;
    let mut bad = 0;
    for &l in losses {
        if best.is_infinite() || l < best - min_delta {
            best = l;
            bad = 0;
        } else {
            bad += 1;
            if bad >= patience {
                return StopDecision::Stop;
            }
        }
    }
    StopDecision::Continue
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_reference(
        losses in prop::collection::vec(0.0f64..2.0, 1..40),
        patience in 1usize..8,
        min_delta in prop_oneof![Just(0.0), Just(0.001), 0.0f64..0.1],
    ) {
        prop_assert_eq!(early_stop_check(&losses, patience, min_delta), reference(&losses, patience, min_delta));
    }

    #[test]
    fn stateful_tracker_agrees_with_prefix_checks(
        losses in prop::collection::vec(0.0f64..2.0, 1..30),
        patience in 1usize..6,
    ) {
        let mut es = EarlyStopping::new(patience, 0.001);
        for i in 0..losses.len() {
            let (_, d) = es.observe(losses[i]);
            prop_assert_eq!(d, early_stop_check(&losses[..=i], patience, 0.001));
            if d == StopDecision::Stop {
                break;
            }
        }
    }
}

#[test]
fn hand_traced_sequence_stops_at_entry_seven() {
    let losses = [1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95];
    for i in 1..7 {
        assert_eq!(early_stop_check(&losses[..i], 5, 0.001), StopDecision::Continue);
    }
    assert_eq!(early_stop_check(&losses, 5, 0.001), StopDecision::Stop);
}
