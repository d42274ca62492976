//! Property-based invariants across module boundaries.

use proptest::prelude::*;

use memo::game::action::extract_action;
use memo::game::trajectory::TrajectoryPrefix;
use memo::memory::parse_memory_ops;
use memo::rating::kendall_tau_b;
use memo::replay::ReplayBuffer;

proptest! {
    #[test]
    fn extraction_only_yields_legal_tokens(raw in ".{0,200}") {
        let legal: Vec<String> = vec!["[check]".into(), "[bet]".into(), "[play 1]".into()];
        if let Some(token) = extract_action(&raw, &legal) {
            prop_assert!(legal.contains(&token));
        }
    }

    #[test]
    fn extraction_finds_a_legal_token_it_was_given(
        prefix in "[^\\[\\]]{0,40}",
        suffix in "[^\\[\\]]{0,40}",
        pick in 0usize..3,
    ) {
        let legal: Vec<String> = vec!["[check]".into(), "[bet]".into(), "[play 1]".into()];
        let raw = format!("{prefix}{}{suffix}", legal[pick]);
        prop_assert_eq!(extract_action(&raw, &legal), Some(legal[pick].clone()));
    }

    #[test]
    fn replay_buffer_respects_capacity(
        capacity in 1usize..16,
        seeds in proptest::collection::vec(0u64..40, 0..200),
    ) {
        let mut buffer = ReplayBuffer::new(capacity, 0.6, 0.4);
        for seed in seeds {
            buffer.insert(TrajectoryPrefix {
                game_id: "kuhn_poker".into(),
                seed,
                actions: vec!["[check]".into()],
                state_digest: seed,
            });
        }
        prop_assert!(buffer.len() <= capacity);
        let total: f64 = buffer.probabilities().iter().map(|(_, p)| p).sum();
        if !buffer.is_empty() {
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn memory_parser_is_total(noise in ".{0,300}") {
        let parsed = parse_memory_ops(&noise);
        // Every op the parser returns came from a well-formed tag pair.
        prop_assert!(parsed.ops.len() <= noise.matches("</").count() + 1);
    }

    #[test]
    fn kendall_tau_stays_in_range(
        pairs in proptest::collection::vec((0u8..8, 0u8..8), 2..20),
    ) {
        let a: Vec<f64> = pairs.iter().map(|(x, _)| *x as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|(_, y)| *y as f64).collect();
        if let Ok(tau) = kendall_tau_b(&a, &b) {
            prop_assert!((-1.0..=1.0).contains(&tau));
        }
    }
}
