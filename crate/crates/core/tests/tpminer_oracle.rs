//! Cross-checks the pattern-growth miner against a brute-force enumerator
//! that lists every slot-subset pattern of every sequence and counts support
//! with a naive recursive matcher.

use std::collections::{BTreeMap, BTreeSet};

use actlearn::tpminer::{
    contains, contains_slots, mine, mine_detailed, to_endpoint_sequence, EndpointSequence,
    EndpointSymbol, Polarity, Slot, TemporalPattern,
};
use actlearn::types::Timestamp;
use proptest::prelude::*;

type PatternSlots = Vec<BTreeSet<EndpointSymbol>>;

fn naive_contains(slots: &[Slot], pattern: &[BTreeSet<EndpointSymbol>]) -> bool {
    if pattern.is_empty() {
        return true;
    }
    if slots.is_empty() {
        return false;
    }
    (pattern[0].is_subset(&slots[0].symbols) && naive_contains(&slots[1..], &pattern[1..]))
        || naive_contains(&slots[1..], pattern)
}

fn naive_support(db: &[EndpointSequence], pattern: &PatternSlots) -> u64 {
    db.iter()
        .filter(|seq| naive_contains(seq.slots(), pattern))
        .count() as u64
}

/// Balanced iff no end symbol outruns its starts and every start is closed.
/// Starts inside a slot are visible to ends in the same slot.
fn naive_balanced(pattern: &[BTreeSet<EndpointSymbol>]) -> bool {
    let mut open: BTreeMap<&str, i64> = BTreeMap::new();
    for slot in pattern {
        for sym in slot {
            if sym.polarity == Polarity::Start {
                *open.entry(&sym.label).or_insert(0) += 1;
            }
        }
        for sym in slot {
            if sym.polarity == Polarity::End {
                let count = open.entry(&sym.label).or_insert(0);
                *count -= 1;
                if *count < 0 {
                    return false;
                }
            }
        }
    }
    open.values().all(|c| *c == 0)
}

fn nonempty_subsets(symbols: &BTreeSet<EndpointSymbol>) -> Vec<BTreeSet<EndpointSymbol>> {
    let items: Vec<&EndpointSymbol> = symbols.iter().collect();
    (1..1u32 << items.len())
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, s)| (*s).clone())
                .collect()
        })
        .collect()
}

/// Every pattern obtainable from `seq` by keeping a subsequence of slots and
/// a non-empty symbol subset within each kept slot.
fn enumerate_patterns(seq: &EndpointSequence) -> BTreeSet<PatternSlots> {
    let mut found: BTreeSet<PatternSlots> = BTreeSet::new();
    fn walk(
        slots: &[Slot],
        current: &mut PatternSlots,
        found: &mut BTreeSet<PatternSlots>,
    ) {
        if slots.is_empty() {
            if !current.is_empty() {
                found.insert(current.clone());
            }
            return;
        }
        walk(&slots[1..], current, found);
        for subset in nonempty_subsets(&slots[0].symbols) {
            current.push(subset);
            walk(&slots[1..], current, found);
            current.pop();
        }
    }
    walk(seq.slots(), &mut Vec::new(), &mut found);
    found
}

fn brute_force_mine(db: &[EndpointSequence], minsup: u64) -> Vec<TemporalPattern> {
    let minsup = minsup.max(1);
    let mut candidates: BTreeSet<PatternSlots> = BTreeSet::new();
    for seq in db {
        candidates.extend(enumerate_patterns(seq));
    }
    let mut out: Vec<TemporalPattern> = candidates
        .into_iter()
        .filter(|p| naive_balanced(p))
        .filter_map(|slots| {
            let support = naive_support(db, &slots);
            (support >= minsup).then_some(TemporalPattern { slots, support })
        })
        .collect();
    out.sort_by_key(|p| p.to_string());
    out
}

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

fn arb_db_spec() -> impl Strategy<Value = Vec<IntervalSpec>> {
    prop::collection::vec(arb_sequence_spec(), 1..=4)
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

/// Pattern slots lifted to a slot list with synthetic times, so patterns can
/// be compared to each other with the containment predicate.
fn as_slots(pattern: &TemporalPattern) -> Vec<Slot> {
    pattern
        .slots
        .iter()
        .enumerate()
        .map(|(i, symbols)| Slot {
            time: Timestamp::from_unix_secs(i as i64),
            symbols: symbols.clone(),
        })
        .collect()
}

proptest! {
    #[test]
    fn miner_agrees_with_brute_force(specs in arb_db_spec(), minsup in 1u64..=3) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        let mined = mine(&db, minsup);
        let expected = brute_force_mine(&db, minsup);
        prop_assert_eq!(mined, expected);
    }

    #[test]
    fn emitted_patterns_are_balanced_with_exact_supports(specs in arb_db_spec()) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        for entry in mine_detailed(&db, 1) {
            prop_assert!(entry.pattern.is_well_formed());
            prop_assert!(naive_balanced(&entry.pattern.slots));
            prop_assert_eq!(entry.pattern.support, naive_support(&db, &entry.pattern.slots));
        }
    }

    #[test]
    fn prefix_support_is_exact_and_anti_monotone(specs in arb_db_spec()) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        for entry in mine_detailed(&db, 1) {
            let (prefix, _) = entry.pattern.prefix_split().unwrap();
            prop_assert_eq!(entry.prefix_support, naive_support(&db, &prefix.slots));
            prop_assert!(entry.prefix_support >= entry.pattern.support);
        }
    }

    #[test]
    fn pattern_count_is_non_increasing_in_minsup(specs in arb_db_spec()) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        let counts: Vec<usize> = (1..=4).map(|m| mine(&db, m).len()).collect();
        for pair in counts.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
    }

    #[test]
    fn containment_is_reflexive_and_transitive(specs in arb_db_spec()) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        let mined = mine(&db, 1);
        for p in &mined {
            prop_assert!(contains_slots(&as_slots(p), p));
        }
        let sample: Vec<&TemporalPattern> = mined.iter().take(12).collect();
        for p in &sample {
            for q in &sample {
                if !contains_slots(&as_slots(q), p) {
                    continue;
                }
                for r in &sample {
                    if contains_slots(&as_slots(r), q) {
                        prop_assert!(contains_slots(&as_slots(r), p));
                    }
                }
            }
        }
    }

    #[test]
    fn full_sequences_contain_their_mined_patterns(specs in arb_db_spec()) {
        let Some(db) = build_db(&specs) else { return Ok(()) };
        for p in mine(&db, db.len() as u64) {
            for seq in &db {
                prop_assert!(contains(seq, &p));
            }
        }
    }
}

/// Intervals of one label, pairwise separated in time. Different labels may
/// still overlap freely once the per-label tracks are merged.
fn arb_disjoint_track(label: &'static str) -> impl Strategy<Value = Vec<(String, i64, i64)>> {
    prop::collection::vec((0i64..4, 1i64..6), 0..=3).prop_map(move |parts| {
        let mut cursor = 0;
        parts
            .into_iter()
            .map(|(gap, dur)| {
                let start = cursor + gap;
                let end = start + dur;
                cursor = end + 1;
                (label.to_string(), start, end)
            })
            .collect()
    })
}

proptest! {
    /// With at most one open interval per label at any instant, pairing each
    /// end slot with the oldest open start recovers the original intervals.
    #[test]
    fn endpoint_form_preserves_interval_multiset(
        track_a in arb_disjoint_track("a"),
        track_b in arb_disjoint_track("b"),
    ) {
        let mut intervals: Vec<(String, i64, i64)> = track_a;
        intervals.extend(track_b);
        if intervals.is_empty() {
            return Ok(());
        }
        let wire: Vec<(String, Timestamp, Timestamp)> = intervals
            .iter()
            .map(|(l, s, e)| {
                (l.clone(), Timestamp::from_unix_secs(*s), Timestamp::from_unix_secs(*e))
            })
            .collect();
        let seq = to_endpoint_sequence(&wire, 0).unwrap();

        let mut open: BTreeMap<String, Vec<i64>> = BTreeMap::new();
        let mut recovered: Vec<(String, i64, i64)> = Vec::new();
        for slot in seq.slots() {
            let t = slot.time.unix_secs();
            for sym in &slot.symbols {
                if sym.polarity == Polarity::End {
                    let queue = open.get_mut(&sym.label).expect("end had an open start");
                    recovered.push((sym.label.clone(), queue.remove(0), t));
                }
            }
            for sym in &slot.symbols {
                if sym.polarity == Polarity::Start {
                    open.entry(sym.label.clone()).or_default().push(t);
                }
            }
        }
        prop_assert!(open.values().all(Vec::is_empty));
        let mut expected = intervals;
        expected.sort();
        recovered.sort();
        prop_assert_eq!(recovered, expected);
    }
}
