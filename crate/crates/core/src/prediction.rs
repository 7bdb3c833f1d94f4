//! Next-activity prediction: match rule prefixes against the recent endpoint
//! history and rank the predicted starts.

use std::collections::BTreeMap;

use crate::tpminer::{contains_slots, EndpointSequence, Polarity, PredictionRule};

/// One predicted next activity, backed by the rule that fired.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub activity_label: String,
    pub rule: PredictionRule,
    pub score: f64,
}

/// Match rules against the last `window` slots of `history`. A rule fires
/// when its prefix is contained in the window, it predicts a start symbol,
/// and that activity is not already running unmatched in the window.
/// One prediction per label (the best-scoring rule), ranked by
/// (score desc, support desc, label asc).
pub fn predict_next(
    history: &EndpointSequence,
    rules: &[PredictionRule],
    window: usize,
) -> Vec<Prediction> {
    let slots = history.slots();
    let recent = &slots[slots.len().saturating_sub(window.max(1))..];

    // Start-minus-end balance per label within the window: a positive
    // balance means the activity is currently running.
    let mut balance: BTreeMap<&str, i64> = BTreeMap::new();
    for slot in recent {
        for sym in &slot.symbols {
            let delta = match sym.polarity {
                Polarity::Start => 1,
                Polarity::End => -1,
            };
            *balance.entry(&sym.label).or_insert(0) += delta;
        }
    }

    let mut best: BTreeMap<&str, &PredictionRule> = BTreeMap::new();
    for rule in rules {
        if rule.predicted_symbol.polarity != Polarity::Start {
            continue;
        }
        let label = rule.predicted_symbol.label.as_str();
        if balance.get(label).copied().unwrap_or(0) > 0 {
            continue;
        }
        if !contains_slots(recent, &rule.prefix) {
            continue;
        }
        let wins = match best.get(label) {
            None => true,
            Some(cur) => {
                rule.predictability
                    .total_cmp(&cur.predictability)
                    .then(rule.support.cmp(&cur.support))
                    .is_gt()
            }
        };
        if wins {
            best.insert(label, rule);
        }
    }

    let mut predictions: Vec<Prediction> = best
        .into_iter()
        .map(|(label, rule)| Prediction {
            activity_label: label.to_string(),
            rule: rule.clone(),
            score: rule.predictability,
        })
        .collect();
    predictions.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.rule.support.cmp(&a.rule.support))
            .then_with(|| a.activity_label.cmp(&b.activity_label))
    });
    predictions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpminer::{to_endpoint_sequence, EndpointSequence, EndpointSymbol, TemporalPattern};
    use crate::types::Timestamp;

    fn iv(label: &str, s: i64, e: i64) -> (String, Timestamp, Timestamp) {
        (
            label.to_string(),
            Timestamp::from_unix_secs(s),
            Timestamp::from_unix_secs(e),
        )
    }

    fn pat(slots: &[&[&str]], support: u64) -> TemporalPattern {
        TemporalPattern {
            slots: slots
                .iter()
                .map(|slot| slot.iter().map(|s| s.parse().unwrap()).collect())
                .collect(),
            support,
        }
    }

    fn rule(prefix: &[&[&str]], label: &str, pre: f64, support: u64) -> PredictionRule {
        let mut full = pat(prefix, support);
        full.slots
            .push([EndpointSymbol::start(label)].into_iter().collect());
        PredictionRule {
            prefix: pat(prefix, support),
            full,
            predicted_symbol: EndpointSymbol::start(label),
            predictability: pre,
            support,
        }
    }

    #[test]
    fn no_rules_no_predictions() {
        let history = to_endpoint_sequence(&[iv("a", 0, 10)], 0).unwrap();
        assert!(predict_next(&history, &[], 12).is_empty());
    }

    #[test]
    fn matching_prefix_fires() {
        let history = to_endpoint_sequence(&[iv("a", 0, 10)], 0).unwrap();
        let r = rule(&[&["a+"], &["a-"]], "b", 0.8, 5);
        let out = predict_next(&history, std::slice::from_ref(&r), 12);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].activity_label, "b");
        assert_eq!(out[0].score, 0.8);
        assert_eq!(out[0].rule, r);
    }

    #[test]
    fn higher_score_ranks_first() {
        let history = to_endpoint_sequence(&[iv("a", 0, 10)], 0).unwrap();
        let rules = vec![
            rule(&[&["a+"]], "c", 0.6, 9),
            rule(&[&["a+"], &["a-"]], "b", 0.9, 2),
        ];
        let out = predict_next(&history, &rules, 12);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].activity_label, "b");
        assert_eq!(out[1].activity_label, "c");
    }

    #[test]
    fn window_limits_what_the_prefix_can_match() {
        // Slots: a+@0, b+@5, a-@10, b-@100.
        let history = to_endpoint_sequence(&[iv("a", 0, 10), iv("b", 5, 100)], 0).unwrap();
        let r = rule(&[&["a+"]], "c", 0.9, 3);
        assert_eq!(predict_next(&history, std::slice::from_ref(&r), 4).len(), 1);
        // The last three slots no longer contain a+.
        assert!(predict_next(&history, &[r], 3).is_empty());
    }

    #[test]
    fn running_activity_is_not_predicted() {
        // A history captured mid-activity: b has started and not ended.
        let slot = |t: i64, syms: &[&str]| crate::tpminer::Slot {
            time: Timestamp::from_unix_secs(t),
            symbols: syms.iter().map(|s| s.parse().unwrap()).collect(),
        };
        let ongoing = EndpointSequence::with_open_tail(
            0,
            vec![slot(0, &["a+"]), slot(10, &["a-"]), slot(20, &["b+"])],
        )
        .unwrap();
        let rules = vec![
            rule(&[&["a+"]], "b", 0.9, 3),
            rule(&[&["a+"]], "c", 0.6, 3),
        ];
        let out = predict_next(&ongoing, &rules, 12);
        // b is suppressed while it runs; c still fires.
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].activity_label, "c");
        // Once b closes, both fire.
        let closed = EndpointSequence::new(
            0,
            vec![
                slot(0, &["a+"]),
                slot(10, &["a-"]),
                slot(20, &["b+"]),
                slot(30, &["b-"]),
            ],
        )
        .unwrap();
        assert_eq!(predict_next(&closed, &rules, 12).len(), 2);
    }

    #[test]
    fn dedup_keeps_best_rule_per_label() {
        let history = to_endpoint_sequence(&[iv("a", 0, 10)], 0).unwrap();
        let rules = vec![
            rule(&[&["a+"]], "b", 0.7, 1),
            rule(&[&["a+"], &["a-"]], "b", 0.9, 1),
        ];
        let out = predict_next(&history, &rules, 12);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn end_polarity_rules_never_fire() {
        let history = to_endpoint_sequence(&[iv("a", 0, 10)], 0).unwrap();
        let mut r = rule(&[&["a+"]], "b", 0.9, 3);
        r.predicted_symbol = EndpointSymbol::end("b");
        assert!(predict_next(&history, &[r], 12).is_empty());
    }

    #[test]
    fn label_tie_breaks_lexicographically() {
        let history = to_endpoint_sequence(&[iv("a", 0, 10)], 0).unwrap();
        let rules = vec![
            rule(&[&["a+"]], "z", 0.8, 3),
            rule(&[&["a+"]], "m", 0.8, 3),
        ];
        let out = predict_next(&history, &rules, 12);
        assert_eq!(out[0].activity_label, "m");
        assert_eq!(out[1].activity_label, "z");
    }
}
