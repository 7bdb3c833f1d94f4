//! Interval temporal-pattern mining over endpoint sequences.
//!
//! Labeled activity intervals are flattened into ordered time slots of start
//! (`label+`) and end (`label-`) symbols; co-timed endpoints share a slot, so
//! interval relations like "meet" and "equal" survive the flattening. Frequent
//! well-formed slot subsequences are mined with depth-first pattern growth
//! over projected databases, and each frequent pattern yields a prediction
//! rule scored by how often its prefix extends to the full pattern.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::types::{ActivityOccurrence, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum TpError {
    #[error("interval `{label}` has start {start} not before end {end}")]
    InvalidInterval {
        label: String,
        start: Timestamp,
        end: Timestamp,
    },
    #[error("sequence {sid}: duplicate endpoint {symbol} at {time}")]
    DuplicateEndpoint {
        sid: u64,
        symbol: String,
        time: Timestamp,
    },
    #[error("sequence {sid}: slot times not strictly increasing at {time}")]
    NonIncreasingTime { sid: u64, time: Timestamp },
    #[error("sequence {sid}: empty slot at {time}")]
    EmptySlot { sid: u64, time: Timestamp },
    #[error("sequence {sid}: end symbol `{label}-` with no open start")]
    UnmatchedEnd { sid: u64, label: String },
    #[error("sequence {sid}: start symbol `{label}+` never closed")]
    UnbalancedStart { sid: u64, label: String },
    #[error("cannot parse endpoint symbol `{0}`: expected `label+` or `label-`")]
    BadSymbol(String),
    #[error("pattern is empty, no prefix to take")]
    EmptyPattern,
    #[error("prefix pattern has support 0")]
    PrefixSupportZero,
}

/// Whether a symbol marks an interval start or end. Starts order before ends,
/// which fixes the canonical within-slot symbol order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Start,
    End,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Start => "+",
            Polarity::End => "-",
        })
    }
}

/// One interval endpoint: an activity label plus start/end polarity.
/// Ordering is (label, start-before-end).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EndpointSymbol {
    pub label: String,
    pub polarity: Polarity,
}

impl EndpointSymbol {
    pub fn start(label: impl Into<String>) -> EndpointSymbol {
        EndpointSymbol { label: label.into(), polarity: Polarity::Start }
    }

    pub fn end(label: impl Into<String>) -> EndpointSymbol {
        EndpointSymbol { label: label.into(), polarity: Polarity::End }
    }
}

impl fmt::Display for EndpointSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.label, self.polarity)
    }
}

impl FromStr for EndpointSymbol {
    type Err = TpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (label, pol) = match s.strip_suffix('+') {
            Some(l) => (l, Polarity::Start),
            None => match s.strip_suffix('-') {
                Some(l) => (l, Polarity::End),
                None => return Err(TpError::BadSymbol(s.to_string())),
            },
        };
        if label.is_empty() {
            return Err(TpError::BadSymbol(s.to_string()));
        }
        Ok(EndpointSymbol { label: label.to_string(), polarity: pol })
    }
}

/// A group of endpoint symbols sharing one instant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub time: Timestamp,
    pub symbols: BTreeSet<EndpointSymbol>,
}

/// A validated, time-ordered sequence of endpoint slots: slot times strictly
/// increase and every end symbol is covered by an earlier-or-same-slot start.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EndpointSequence {
    pub sid: u64,
    slots: Vec<Slot>,
}

impl EndpointSequence {
    pub fn new(sid: u64, slots: Vec<Slot>) -> Result<EndpointSequence, TpError> {
        let seq = Self::with_open_tail(sid, slots)?;
        let balance = open_balance(&seq.slots);
        if let Some((label, _)) = balance.iter().find(|(_, b)| **b != 0) {
            return Err(TpError::UnbalancedStart { sid, label: label.to_string() });
        }
        Ok(seq)
    }

    /// As [`EndpointSequence::new`] but permits unclosed trailing starts,
    /// modeling a history captured while activities are still running.
    /// Unmatched end symbols are still rejected.
    pub fn with_open_tail(sid: u64, slots: Vec<Slot>) -> Result<EndpointSequence, TpError> {
        let mut balance: BTreeMap<&str, i64> = BTreeMap::new();
        let mut prev_time: Option<Timestamp> = None;
        for slot in &slots {
            if slot.symbols.is_empty() {
                return Err(TpError::EmptySlot { sid, time: slot.time });
            }
            if prev_time.is_some_and(|p| p >= slot.time) {
                return Err(TpError::NonIncreasingTime { sid, time: slot.time });
            }
            prev_time = Some(slot.time);
            // Starts in a slot are visible to ends in the same slot.
            for sym in &slot.symbols {
                if sym.polarity == Polarity::Start {
                    *balance.entry(&sym.label).or_insert(0) += 1;
                }
            }
            for sym in &slot.symbols {
                if sym.polarity == Polarity::End {
                    let b = balance.entry(&sym.label).or_insert(0);
                    if *b == 0 {
                        return Err(TpError::UnmatchedEnd { sid, label: sym.label.clone() });
                    }
                    *b -= 1;
                }
            }
        }
        Ok(EndpointSequence { sid, slots })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }
}

/// Per-label start-minus-end balance across a slot list.
fn open_balance(slots: &[Slot]) -> BTreeMap<&str, i64> {
    let mut balance: BTreeMap<&str, i64> = BTreeMap::new();
    for slot in slots {
        for sym in &slot.symbols {
            let delta = match sym.polarity {
                Polarity::Start => 1,
                Polarity::End => -1,
            };
            *balance.entry(&sym.label).or_insert(0) += delta;
        }
    }
    balance
}

/// Flatten labeled intervals into an endpoint sequence. Each interval
/// contributes `label+` at its start instant and `label-` at its end;
/// co-timed symbols share a slot.
pub fn to_endpoint_sequence(
    intervals: &[(String, Timestamp, Timestamp)],
    sid: u64,
) -> Result<EndpointSequence, TpError> {
    let mut by_time: BTreeMap<Timestamp, BTreeSet<EndpointSymbol>> = BTreeMap::new();
    for (label, start, end) in intervals {
        if start >= end {
            return Err(TpError::InvalidInterval {
                label: label.clone(),
                start: *start,
                end: *end,
            });
        }
        for (time, sym) in [
            (*start, EndpointSymbol::start(label.clone())),
            (*end, EndpointSymbol::end(label.clone())),
        ] {
            let slot = by_time.entry(time).or_default();
            if !slot.insert(sym.clone()) {
                return Err(TpError::DuplicateEndpoint { sid, symbol: sym.to_string(), time });
            }
        }
    }
    let slots = by_time
        .into_iter()
        .map(|(time, symbols)| Slot { time, symbols })
        .collect();
    EndpointSequence::new(sid, slots)
}

/// One endpoint sequence per calendar day of labeled occurrences, days in
/// ascending order, sids numbered from 0. Unlabeled occurrences are skipped.
pub fn daily_database(occurrences: &[ActivityOccurrence]) -> Result<Vec<EndpointSequence>, TpError> {
    let mut by_day: BTreeMap<i64, Vec<(String, Timestamp, Timestamp)>> = BTreeMap::new();
    for occ in occurrences {
        if let Some(label) = &occ.label {
            by_day
                .entry(occ.start.day_index())
                .or_default()
                .push((label.clone(), occ.start, occ.end));
        }
    }
    by_day
        .into_values()
        .enumerate()
        .map(|(sid, intervals)| to_endpoint_sequence(&intervals, sid as u64))
        .collect()
}

/// An ordered sequence of symbol slots with its support count. `support` is
/// meaningful only relative to the database it was counted against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalPattern {
    pub slots: Vec<BTreeSet<EndpointSymbol>>,
    pub support: u64,
}

impl TemporalPattern {
    pub fn empty(support: u64) -> TemporalPattern {
        TemporalPattern { slots: Vec::new(), support }
    }

    /// Build from slot lists of `label+`/`label-` strings, with support 0.
    pub fn parse_slots(slots: &[Vec<String>]) -> Result<TemporalPattern, TpError> {
        let parsed = slots
            .iter()
            .map(|slot| slot.iter().map(|s| s.parse()).collect())
            .collect::<Result<Vec<BTreeSet<EndpointSymbol>>, TpError>>()?;
        Ok(TemporalPattern { slots: parsed, support: 0 })
    }

    pub fn symbol_len(&self) -> usize {
        self.slots.iter().map(BTreeSet::len).sum()
    }

    /// Balanced and prefix-valid: every end symbol has an earlier-or-same-slot
    /// start, and every start is eventually closed.
    pub fn is_well_formed(&self) -> bool {
        let mut balance: BTreeMap<&str, i64> = BTreeMap::new();
        for slot in &self.slots {
            for sym in slot {
                if sym.polarity == Polarity::Start {
                    *balance.entry(&sym.label).or_insert(0) += 1;
                }
            }
            for sym in slot {
                if sym.polarity == Polarity::End {
                    let b = balance.entry(&sym.label).or_insert(0);
                    if *b == 0 {
                        return false;
                    }
                    *b -= 1;
                }
            }
        }
        balance.values().all(|b| *b == 0)
    }

    /// Split off the final symbol (the canonically largest of the last slot),
    /// yielding the prefix pattern and that symbol. The prefix's support is
    /// set to 0; it must be re-counted by the caller. None for empty patterns.
    pub fn prefix_split(&self) -> Option<(TemporalPattern, EndpointSymbol)> {
        let mut slots = self.slots.clone();
        let last = slots.last_mut()?;
        let sym = last.iter().next_back()?.clone();
        last.remove(&sym);
        if last.is_empty() {
            slots.pop();
        }
        Some((TemporalPattern { slots, support: 0 }, sym))
    }

    pub fn slot_strings(&self) -> Vec<Vec<String>> {
        self.slots
            .iter()
            .map(|slot| slot.iter().map(|s| s.to_string()).collect())
            .collect()
    }
}

impl fmt::Display for TemporalPattern {
    /// Canonical form: slots joined by `|`, symbols within a slot by `,`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, slot) in self.slots.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            for (k, sym) in slot.iter().enumerate() {
                if k > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{sym}")?;
            }
        }
        Ok(())
    }
}

/// True iff the pattern's slots can be mapped, in order, onto distinct slots
/// of the sequence with each pattern slot a subset of its image.
pub fn contains(seq: &EndpointSequence, pattern: &TemporalPattern) -> bool {
    contains_slots(seq.slots(), pattern)
}

/// [`contains`] over a raw slot window.
pub fn contains_slots(slots: &[Slot], pattern: &TemporalPattern) -> bool {
    let mut pi = 0;
    for slot in slots {
        if pi == pattern.slots.len() {
            break;
        }
        if pattern.slots[pi].is_subset(&slot.symbols) {
            pi += 1;
        }
    }
    pi == pattern.slots.len()
}

/// Number of database sequences containing the pattern.
pub fn support(pattern: &TemporalPattern, db: &[EndpointSequence]) -> u64 {
    db.iter().filter(|seq| contains(seq, pattern)).count() as u64
}

/// A database sequence's remainder after matching a prefix pattern:
/// same-slot extension candidates left in the matched final slot, plus all
/// following slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Suffix {
    pub sid: u64,
    pub partial: BTreeSet<EndpointSymbol>,
    pub rest: Vec<Slot>,
}

/// The suffixes of every database sequence containing `prefix`, searched in
/// place of the full database during pattern growth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectedDatabase {
    pub prefix: TemporalPattern,
    pub suffixes: Vec<Suffix>,
}

impl ProjectedDatabase {
    /// The empty-prefix projection: every sequence in full.
    pub fn root(db: &[EndpointSequence]) -> ProjectedDatabase {
        ProjectedDatabase {
            prefix: TemporalPattern::empty(db.len() as u64),
            suffixes: db
                .iter()
                .map(|seq| Suffix {
                    sid: seq.sid,
                    partial: BTreeSet::new(),
                    rest: seq.slots().to_vec(),
                })
                .collect(),
        }
    }

    /// Support of the prefix: one suffix per containing sequence.
    pub fn support(&self) -> u64 {
        self.suffixes.len() as u64
    }

    /// Extend the prefix by one symbol and re-project. With `same_slot` the
    /// symbol joins the prefix's final slot (it must order after everything
    /// already there); otherwise it opens a new slot. Sequences that no
    /// longer contain the extended prefix drop out.
    pub fn project(&self, ext: &EndpointSymbol, same_slot: bool) -> ProjectedDatabase {
        let mut slots = self.prefix.slots.clone();
        let target = if same_slot {
            let last = slots
                .last_mut()
                .expect("same-slot extension requires a non-empty prefix");
            last.insert(ext.clone());
            slots.last().cloned()
        } else {
            slots.push(BTreeSet::from([ext.clone()]));
            None
        };

        let mut suffixes = Vec::new();
        for s in &self.suffixes {
            let next = match &target {
                // Same-slot: the current matched slot may already hold the
                // symbol; otherwise re-match the whole enlarged slot later.
                Some(target) => {
                    if s.partial.contains(ext) {
                        Some(Suffix {
                            sid: s.sid,
                            partial: above(&s.partial, ext),
                            rest: s.rest.clone(),
                        })
                    } else {
                        s.rest
                            .iter()
                            .position(|slot| target.is_subset(&slot.symbols))
                            .map(|k| Suffix {
                                sid: s.sid,
                                partial: above(&s.rest[k].symbols, ext),
                                rest: s.rest[k + 1..].to_vec(),
                            })
                    }
                }
                None => s
                    .rest
                    .iter()
                    .position(|slot| slot.symbols.contains(ext))
                    .map(|k| Suffix {
                        sid: s.sid,
                        partial: above(&s.rest[k].symbols, ext),
                        rest: s.rest[k + 1..].to_vec(),
                    }),
            };
            suffixes.extend(next);
        }
        let support = suffixes.len() as u64;
        ProjectedDatabase {
            prefix: TemporalPattern { slots, support },
            suffixes,
        }
    }
}

/// Symbols strictly above `bound` in canonical order.
fn above(set: &BTreeSet<EndpointSymbol>, bound: &EndpointSymbol) -> BTreeSet<EndpointSymbol> {
    set.iter().filter(|s| *s > bound).cloned().collect()
}

/// A mined pattern together with the support of its prefix (the pattern
/// minus its final symbol), which prices the pattern's prediction rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinedPattern {
    pub pattern: TemporalPattern,
    pub prefix_support: u64,
}

/// All well-formed patterns with support ≥ `minsup`, sorted by canonical
/// form, each carrying its exact support.
pub fn mine(db: &[EndpointSequence], minsup: u64) -> Vec<TemporalPattern> {
    mine_detailed(db, minsup).into_iter().map(|m| m.pattern).collect()
}

/// As [`mine`], also recording each pattern's prefix support.
pub fn mine_detailed(db: &[EndpointSequence], minsup: u64) -> Vec<MinedPattern> {
    let minsup = minsup.max(1);
    let mut out = Vec::new();
    grow(&ProjectedDatabase::root(db), minsup, &mut out);
    out.sort_by_key(|m| m.pattern.to_string());
    out
}

fn grow(node: &ProjectedDatabase, minsup: u64, out: &mut Vec<MinedPattern>) {
    // Same-slot candidates: either left over in a matched slot, or present in
    // a later slot that repeats the prefix's whole final slot.
    let mut i_cands: BTreeSet<EndpointSymbol> = BTreeSet::new();
    if let Some(last) = node.prefix.slots.last() {
        let max_sym = last.iter().next_back().expect("slots are non-empty");
        for s in &node.suffixes {
            i_cands.extend(s.partial.iter().cloned());
            for slot in &s.rest {
                if last.is_subset(&slot.symbols) {
                    i_cands.extend(slot.symbols.iter().filter(|x| *x > max_sym).cloned());
                }
            }
        }
    }
    let mut s_cands: BTreeSet<EndpointSymbol> = BTreeSet::new();
    for s in &node.suffixes {
        for slot in &s.rest {
            s_cands.extend(slot.symbols.iter().cloned());
        }
    }

    let opens = open_counts(&node.prefix);
    for (cands, same_slot) in [(i_cands, true), (s_cands, false)] {
        for ext in cands {
            // An end symbol is only admissible while its activity is open;
            // nothing well-formed can grow from a dangling end.
            if ext.polarity == Polarity::End
                && opens.get(ext.label.as_str()).copied().unwrap_or(0) == 0
            {
                continue;
            }
            let child = node.project(&ext, same_slot);
            if child.support() < minsup {
                continue;
            }
            if child.prefix.is_well_formed() {
                out.push(MinedPattern {
                    pattern: child.prefix.clone(),
                    prefix_support: node.support(),
                });
            }
            grow(&child, minsup, out);
        }
    }
}

/// Per-label start-minus-end balance over the whole pattern.
fn open_counts(pattern: &TemporalPattern) -> BTreeMap<&str, i64> {
    let mut opens: BTreeMap<&str, i64> = BTreeMap::new();
    for slot in &pattern.slots {
        for sym in slot {
            let delta = match sym.polarity {
                Polarity::Start => 1,
                Polarity::End => -1,
            };
            *opens.entry(&sym.label).or_insert(0) += delta;
        }
    }
    opens
}

/// sup(full) / sup(prefix of full), both counted against `db`.
pub fn predictability(full: &TemporalPattern, db: &[EndpointSequence]) -> Result<f64, TpError> {
    let (prefix, _) = full.prefix_split().ok_or(TpError::EmptyPattern)?;
    let sup_prefix = support(&prefix, db);
    if sup_prefix == 0 {
        return Err(TpError::PrefixSupportZero);
    }
    Ok(support(full, db) as f64 / sup_prefix as f64)
}

/// `prefix → full` with the predicted final symbol and its scores.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRule {
    pub prefix: TemporalPattern,
    pub full: TemporalPattern,
    pub predicted_symbol: EndpointSymbol,
    pub predictability: f64,
    pub support: u64,
}

/// One rule per pattern of at least two symbols whose predictability against
/// `db` reaches `min_pre`; sorted by (predictability desc, support desc,
/// canonical form asc).
pub fn generate_rules(
    patterns: &[TemporalPattern],
    db: &[EndpointSequence],
    min_pre: f64,
) -> Vec<PredictionRule> {
    let mut rules = Vec::new();
    for p in patterns {
        if p.symbol_len() < 2 {
            continue;
        }
        let (mut prefix, sym) = p.prefix_split().expect("two-symbol pattern has a prefix");
        let sup_full = support(p, db);
        let sup_prefix = support(&prefix, db);
        if sup_prefix == 0 {
            continue;
        }
        let pre = sup_full as f64 / sup_prefix as f64;
        if pre < min_pre {
            continue;
        }
        prefix.support = sup_prefix;
        let mut full = p.clone();
        full.support = sup_full;
        rules.push(PredictionRule {
            prefix,
            full,
            predicted_symbol: sym,
            predictability: pre,
            support: sup_full,
        });
    }
    sort_rules(&mut rules);
    rules
}

/// As [`generate_rules`] but priced from the supports recorded at mining
/// time, so no database is needed.
pub fn rules_from_mined(mined: &[MinedPattern], min_pre: f64) -> Vec<PredictionRule> {
    let mut rules = Vec::new();
    for m in mined {
        if m.pattern.symbol_len() < 2 || m.prefix_support == 0 {
            continue;
        }
        let pre = m.pattern.support as f64 / m.prefix_support as f64;
        if pre < min_pre {
            continue;
        }
        let (mut prefix, sym) = m.pattern.prefix_split().expect("two-symbol pattern");
        prefix.support = m.prefix_support;
        rules.push(PredictionRule {
            prefix,
            full: m.pattern.clone(),
            predicted_symbol: sym,
            predictability: pre,
            support: m.pattern.support,
        });
    }
    sort_rules(&mut rules);
    rules
}

fn sort_rules(rules: &mut [PredictionRule]) {
    rules.sort_by(|a, b| {
        b.predictability
            .total_cmp(&a.predictability)
            .then(b.support.cmp(&a.support))
            .then_with(|| a.full.to_string().cmp(&b.full.to_string()))
    });
}
