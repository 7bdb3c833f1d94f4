//! Contract properties of the rule-based next-activity predictor.

use actlearn::prediction::predict_next;
use actlearn::tpminer::{
    contains_slots, generate_rules, mine, to_endpoint_sequence, EndpointSequence,
    EndpointSymbol, Polarity, PredictionRule, TemporalPattern,
};
use actlearn::types::Timestamp;
use proptest::prelude::*;

type IntervalSpec = Vec<(&'static str, i64, i64)>;

fn arb_sequence_spec() -> impl Strategy<Value = IntervalSpec> {
    prop::collection::vec(
        (prop::sample::select(vec!["a", "b"]), 0i64..12, 1i64..8),
        1..=3,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(label, start, dur)| (label, start, start + dur))
            .collect()
    })
}

fn build_db(specs: &[IntervalSpec]) -> Option<Vec<EndpointSequence>> {
    specs
        .iter()
        .enumerate()
        .map(|(sid, spec)| {
            let intervals: Vec<(String, Timestamp, Timestamp)> = spec
                .iter()
                .map(|&(l, s, e)| {
                    (
                        l.to_string(),
                        Timestamp::from_unix_secs(s),
                        Timestamp::from_unix_secs(e),
                    )
                })
                .collect();
            to_endpoint_sequence(&intervals, sid as u64).ok()
        })
        .collect()
}

/// A hand-assembled rule predicting `next+` after seeing `seen` in order.
fn start_rule(seen: &str, next: &str, predictability: f64, support: u64) -> PredictionRule {
    let full = TemporalPattern {
        slots: vec![
            [EndpointSymbol::start(seen)].into_iter().collect(),
            [EndpointSymbol::end(seen)].into_iter().collect(),
            [EndpointSymbol::start(next)].into_iter().collect(),
        ],
        support,
    };
    let (mut prefix, sym) = full.prefix_split().unwrap();
    prefix.support = support * 2;
    PredictionRule { prefix, full, predicted_symbol: sym, predictability, support }
}

fn rule_pool(db: &[EndpointSequence]) -> Vec<PredictionRule> {
    let mut rules = generate_rules(&mine(db, 1), db, 0.0);
    rules.push(start_rule("a", "b", 0.9, 4));
    rules.push(start_rule("a", "c", 0.7, 9));
    rules.push(start_rule("b", "a", 0.6, 2));
    rules.push(start_rule("b", "c", 0.7, 3));
    rules
}

proptest! {
    #[test]
    fn fired_predictions_satisfy_their_rules(
        specs in prop::collection::vec(arb_sequence_spec(), 1..=3),
        window in 1usize..=12,
    ) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        let rules = rule_pool(&db);
        let history = &db[0];
        let predictions = predict_next(history, &rules, window);

        let slots = history.slots();
        let recent = &slots[slots.len().saturating_sub(window.max(1))..];
        for p in &predictions {
            prop_assert_eq!(p.score, p.rule.predictability);
            prop_assert_eq!(&p.activity_label, &p.rule.predicted_symbol.label);
            prop_assert_eq!(p.rule.predicted_symbol.polarity, Polarity::Start);
            prop_assert!(contains_slots(recent, &p.rule.prefix));
        }
    }

    #[test]
    fn ranking_is_deterministic_and_labels_unique(
        specs in prop::collection::vec(arb_sequence_spec(), 1..=3),
        window in 1usize..=12,
    ) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        let rules = rule_pool(&db);
        let predictions = predict_next(&db[0], &rules, window);
        for pair in predictions.windows(2) {
            let a = (&pair[0], &pair[1]);
            prop_assert!(a.0.score >= a.1.score);
            if a.0.score == a.1.score {
                prop_assert!(a.0.rule.support >= a.1.rule.support);
                if a.0.rule.support == a.1.rule.support {
                    prop_assert!(a.0.activity_label < a.1.activity_label);
                }
            }
            prop_assert!(a.0.activity_label != a.1.activity_label);
        }
        prop_assert_eq!(predict_next(&db[0], &rules, window), predictions);
    }

    #[test]
    fn predictions_grow_monotonically_with_rules(
        specs in prop::collection::vec(arb_sequence_spec(), 1..=3),
        window in 1usize..=12,
    ) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        let rules = rule_pool(&db);
        let half: Vec<_> = rules.iter().step_by(2).cloned().collect();
        let full = predict_next(&db[0], &rules, window);
        let partial = predict_next(&db[0], &half, window);
        for p in &partial {
            let richer = full
                .iter()
                .find(|q| q.activity_label == p.activity_label);
            match richer {
                Some(q) => prop_assert!(q.score >= p.score),
                None => prop_assert!(false, "label {} vanished", p.activity_label),
            }
        }
    }
}
