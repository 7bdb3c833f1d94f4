//! Model-bundle persistence: clusters, HMMs and rules in one JSON document.
//!
//! Probabilities are written as plain JSON numbers with shortest
//! round-trip precision, so reading a bundle back yields bit-identical
//! floats. Event-type keys serialize as `service_id:event_type` strings and
//! endpoint symbols as `label+`/`label-`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::Cluster;
use crate::hmm::{ActivityHMM, ModelCheckError};
use crate::tpminer::{MinedPattern, PredictionRule, TemporalPattern, TpError};
use crate::types::EventTypeKey;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bundle is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {got}, expected {want}")]
    SchemaVersion { got: u32, want: u32 },
    #[error("hmm references unknown cluster id {0}")]
    UnknownClusterId(u64),
    #[error("cluster {0} has no members")]
    EmptyCluster(u64),
    #[error("sid {0} belongs to more than one cluster")]
    DuplicateMember(u64),
    #[error("hmm {cluster_id}: non-finite value in {place}")]
    NonFinite { cluster_id: u64, place: &'static str },
    #[error("rule {index}: non-finite predictability")]
    NonFiniteRule { index: usize },
    #[error("rule {index}: prefix is not the full pattern minus its final symbol")]
    InconsistentRule { index: usize },
    #[error("service id `{0}` must not contain ':'")]
    ColonInServiceId(String),
    #[error("cannot parse event-type key `{0}`")]
    BadKey(String),
    #[error(transparent)]
    Check(#[from] ModelCheckError),
    #[error(transparent)]
    Symbol(#[from] TpError),
}

#[derive(Serialize, Deserialize)]
struct BundleWire {
    schema_version: u32,
    clusters: Vec<Cluster>,
    hmms: Vec<HmmWire>,
    rules: Vec<RuleWire>,
}

#[derive(Serialize, Deserialize)]
struct HmmWire {
    cluster_id: u64,
    states: Vec<String>,
    vocabulary: Vec<String>,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
    emission_floor: f64,
}

#[derive(Serialize, Deserialize)]
struct RuleWire {
    prefix: Vec<Vec<String>>,
    prefix_support: u64,
    full: Vec<Vec<String>>,
    support: u64,
    predicted_symbol: String,
    predictability: f64,
}

fn validate_parts(
    clusters: &[Cluster],
    hmms: &[ActivityHMM],
    rules: &[PredictionRule],
) -> Result<(), BundleError> {
    let mut sids = BTreeSet::new();
    for c in clusters {
        if c.members.is_empty() {
            return Err(BundleError::EmptyCluster(c.cluster_id));
        }
        for &sid in &c.members {
            if !sids.insert(sid) {
                return Err(BundleError::DuplicateMember(sid));
            }
        }
    }
    let cluster_ids: BTreeSet<u64> = clusters.iter().map(|c| c.cluster_id).collect();
    for hmm in hmms {
        if !cluster_ids.contains(&hmm.cluster_id) {
            return Err(BundleError::UnknownClusterId(hmm.cluster_id));
        }
        for (rows, place) in [
            (std::slice::from_ref(&hmm.initial), "initial"),
            (hmm.transition.as_slice(), "transition"),
            (hmm.emission.as_slice(), "emission"),
        ] {
            if rows.iter().flatten().any(|x| !x.is_finite()) {
                return Err(BundleError::NonFinite { cluster_id: hmm.cluster_id, place });
            }
        }
        hmm.validate()?;
        for key in hmm.states.iter().chain(&hmm.vocabulary) {
            if key.service_id.contains(':') {
                return Err(BundleError::ColonInServiceId(key.service_id.clone()));
            }
        }
    }
    validate_rules(rules)
}

fn validate_rules(rules: &[PredictionRule]) -> Result<(), BundleError> {
    for (index, rule) in rules.iter().enumerate() {
        if !rule.predictability.is_finite() {
            return Err(BundleError::NonFiniteRule { index });
        }
        match rule.full.prefix_split() {
            Some((prefix, sym))
                if prefix.slots == rule.prefix.slots && sym == rule.predicted_symbol => {}
            _ => return Err(BundleError::InconsistentRule { index }),
        }
    }
    Ok(())
}

fn rule_to_wire(r: &PredictionRule) -> RuleWire {
    RuleWire {
        prefix: r.prefix.slot_strings(),
        prefix_support: r.prefix.support,
        full: r.full.slot_strings(),
        support: r.full.support,
        predicted_symbol: r.predicted_symbol.to_string(),
        predictability: r.predictability,
    }
}

fn wire_to_rule(r: &RuleWire) -> Result<PredictionRule, BundleError> {
    let mut prefix = TemporalPattern::parse_slots(&r.prefix)?;
    prefix.support = r.prefix_support;
    let mut full = TemporalPattern::parse_slots(&r.full)?;
    full.support = r.support;
    Ok(PredictionRule {
        prefix,
        full,
        predicted_symbol: r.predicted_symbol.parse()?,
        predictability: r.predictability,
        support: r.support,
    })
}

/// Serialize a model bundle to `path` as one pretty-printed JSON document.
pub fn write_model_bundle(
    clusters: &[Cluster],
    hmms: &[ActivityHMM],
    rules: &[PredictionRule],
    path: &Path,
) -> Result<(), BundleError> {
    let text = render_model_bundle(clusters, hmms, rules)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// The bundle document as a string; used by [`write_model_bundle`].
pub fn render_model_bundle(
    clusters: &[Cluster],
    hmms: &[ActivityHMM],
    rules: &[PredictionRule],
) -> Result<String, BundleError> {
    validate_parts(clusters, hmms, rules)?;
    let wire = BundleWire {
        schema_version: SCHEMA_VERSION,
        clusters: clusters.to_vec(),
        hmms: hmms
            .iter()
            .map(|h| HmmWire {
                cluster_id: h.cluster_id,
                states: h.states.iter().map(|k| k.to_string()).collect(),
                vocabulary: h.vocabulary.iter().map(|k| k.to_string()).collect(),
                initial: h.initial.clone(),
                transition: h.transition.clone(),
                emission: h.emission.clone(),
                emission_floor: h.emission_floor,
            })
            .collect(),
        rules: rules.iter().map(rule_to_wire).collect(),
    };
    let mut text = serde_json::to_string_pretty(&wire)?;
    text.push('\n');
    Ok(text)
}

/// Read and validate a bundle written by [`write_model_bundle`].
#[allow(clippy::type_complexity)]
pub fn read_model_bundle(
    path: &Path,
) -> Result<(Vec<Cluster>, Vec<ActivityHMM>, Vec<PredictionRule>), BundleError> {
    parse_model_bundle(&std::fs::read_to_string(path)?)
}

/// The string-level inverse of [`render_model_bundle`].
#[allow(clippy::type_complexity)]
pub fn parse_model_bundle(
    text: &str,
) -> Result<(Vec<Cluster>, Vec<ActivityHMM>, Vec<PredictionRule>), BundleError> {
    let wire: BundleWire = serde_json::from_str(text)?;
    if wire.schema_version != SCHEMA_VERSION {
        return Err(BundleError::SchemaVersion {
            got: wire.schema_version,
            want: SCHEMA_VERSION,
        });
    }
    let parse_keys = |keys: &[String]| -> Result<Vec<EventTypeKey>, BundleError> {
        keys.iter()
            .map(|k| k.parse().map_err(|_| BundleError::BadKey(k.clone())))
            .collect()
    };
    let hmms = wire
        .hmms
        .iter()
        .map(|h| {
            let model = ActivityHMM {
                cluster_id: h.cluster_id,
                states: parse_keys(&h.states)?,
                vocabulary: parse_keys(&h.vocabulary)?,
                initial: h.initial.clone(),
                transition: h.transition.clone(),
                emission: h.emission.clone(),
                emission_floor: h.emission_floor,
            };
            Ok(model)
        })
        .collect::<Result<Vec<ActivityHMM>, BundleError>>()?;
    let rules = wire
        .rules
        .iter()
        .map(wire_to_rule)
        .collect::<Result<Vec<PredictionRule>, BundleError>>()?;
    validate_parts(&wire.clusters, &hmms, &rules)?;
    Ok((wire.clusters, hmms, rules))
}

#[derive(Serialize, Deserialize)]
struct PatternWire {
    slots: Vec<Vec<String>>,
    support: u64,
    prefix_support: u64,
}

/// Mined patterns as a JSON array of `{slots, support, prefix_support}`.
pub fn render_pattern_list(patterns: &[MinedPattern]) -> String {
    let wire: Vec<PatternWire> = patterns
        .iter()
        .map(|m| PatternWire {
            slots: m.pattern.slot_strings(),
            support: m.pattern.support,
            prefix_support: m.prefix_support,
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&wire).expect("pattern list serializes");
    text.push('\n');
    text
}

pub fn parse_pattern_list(text: &str) -> Result<Vec<MinedPattern>, BundleError> {
    let wire: Vec<PatternWire> = serde_json::from_str(text)?;
    wire.iter()
        .map(|w| {
            let mut pattern = TemporalPattern::parse_slots(&w.slots)?;
            pattern.support = w.support;
            Ok(MinedPattern { pattern, prefix_support: w.prefix_support })
        })
        .collect()
}

/// Rules as a JSON array, entry-compatible with the bundle's `rules` field.
pub fn render_rule_list(rules: &[PredictionRule]) -> Result<String, BundleError> {
    validate_rules(rules)?;
    let wire: Vec<RuleWire> = rules.iter().map(rule_to_wire).collect();
    let mut text = serde_json::to_string_pretty(&wire)?;
    text.push('\n');
    Ok(text)
}

pub fn parse_rule_list(text: &str) -> Result<Vec<PredictionRule>, BundleError> {
    let wire: Vec<RuleWire> = serde_json::from_str(text)?;
    let rules = wire
        .iter()
        .map(wire_to_rule)
        .collect::<Result<Vec<PredictionRule>, BundleError>>()?;
    validate_rules(&rules)?;
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tpminer::EndpointSymbol;

    fn key(s: &str) -> EventTypeKey {
        s.parse().unwrap()
    }

    fn sample_cluster() -> Cluster {
        Cluster { cluster_id: 0, members: vec![3, 5], label_hint: Some("tea".into()) }
    }

    fn sample_hmm() -> ActivityHMM {
        ActivityHMM {
            cluster_id: 0,
            states: vec![key("1:ON"), key("2:ON")],
            vocabulary: vec![key("1:ON"), key("2:ON")],
            initial: vec![0.75, 0.25],
            transition: vec![vec![0.1, 0.9], vec![0.6, 0.4]],
            emission: vec![vec![0.999, 0.001], vec![0.001, 0.999]],
            emission_floor: 1e-3,
        }
    }

    fn sample_rule() -> PredictionRule {
        let full = TemporalPattern {
            slots: vec![
                [EndpointSymbol::start("tea")].into_iter().collect(),
                [EndpointSymbol::end("tea")].into_iter().collect(),
            ],
            support: 3,
        };
        let (mut prefix, sym) = full.prefix_split().unwrap();
        prefix.support = 5;
        PredictionRule {
            prefix,
            full,
            predicted_symbol: sym,
            predictability: 0.6,
            support: 3,
        }
    }

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn empty_bundle_round_trips() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        write_model_bundle(&[], &[], &[], &path).unwrap();
        let (c, h, r) = read_model_bundle(&path).unwrap();
        assert!(c.is_empty() && h.is_empty() && r.is_empty());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"schema_version\": 1"));
    }

    #[test]
    fn full_bundle_round_trips_exactly() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        let clusters = vec![sample_cluster()];
        let hmms = vec![sample_hmm()];
        let rules = vec![sample_rule()];
        write_model_bundle(&clusters, &hmms, &rules, &path).unwrap();
        let (c, h, r) = read_model_bundle(&path).unwrap();
        assert_eq!(c, clusters);
        assert_eq!(h, hmms);
        assert_eq!(r, rules);
    }

    #[test]
    fn odd_probabilities_survive_bitwise() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        let mut hmm = sample_hmm();
        let p = 1.0 / 3.0 + 1e-16;
        hmm.initial = vec![p, 1.0 - p];
        write_model_bundle(&[sample_cluster()], &[hmm.clone()], &[], &path).unwrap();
        let (_, h, _) = read_model_bundle(&path).unwrap();
        assert_eq!(h[0].initial[0].to_bits(), hmm.initial[0].to_bits());
        assert_eq!(h[0].initial[1].to_bits(), hmm.initial[1].to_bits());
    }

    #[test]
    fn nan_probability_is_rejected_on_write() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        let mut hmm = sample_hmm();
        hmm.transition[0][0] = f64::NAN;
        let err =
            write_model_bundle(&[sample_cluster()], &[hmm], &[], &path).unwrap_err();
        assert!(matches!(
            err,
            BundleError::NonFinite { cluster_id: 0, place: "transition" }
        ));
        assert!(!path.exists());
    }

    #[test]
    fn unknown_cluster_and_colon_are_rejected() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        let mut hmm = sample_hmm();
        hmm.cluster_id = 9;
        assert!(matches!(
            write_model_bundle(&[sample_cluster()], &[hmm], &[], &path),
            Err(BundleError::UnknownClusterId(9))
        ));
        let mut colon = sample_hmm();
        colon.states[0].service_id = "0:a".into();
        colon.vocabulary[0].service_id = "0:a".into();
        assert!(matches!(
            write_model_bundle(&[sample_cluster()], &[colon], &[], &path),
            Err(BundleError::ColonInServiceId(_))
        ));
    }

    #[test]
    fn truncated_document_fails_wholesale() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        write_model_bundle(&[sample_cluster()], &[sample_hmm()], &[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(read_model_bundle(&path), Err(BundleError::Json(_))));
    }

    #[test]
    fn bad_row_sum_is_named_on_read() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        write_model_bundle(&[sample_cluster()], &[sample_hmm()], &[], &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("0.999", "0.799");
        std::fs::write(&path, text).unwrap();
        let err = read_model_bundle(&path).unwrap_err();
        match err {
            BundleError::Check(ModelCheckError::RowNotNormalized { matrix, row, .. }) => {
                assert_eq!(matrix, "emission");
                assert_eq!(row, 0);
            }
            other => panic!("expected a row check failure, got {other}"),
        }
    }

    #[test]
    fn schema_version_mismatch_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        write_model_bundle(&[], &[], &[], &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 2");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            read_model_bundle(&path),
            Err(BundleError::SchemaVersion { got: 2, want: 1 })
        ));
    }

    #[test]
    fn pattern_list_round_trips() {
        let strings = |v: &[&[&str]]| -> Vec<Vec<String>> {
            v.iter()
                .map(|slot| slot.iter().map(|s| s.to_string()).collect())
                .collect()
        };
        let mut pattern = TemporalPattern::parse_slots(&strings(&[
            &["a+"],
            &["a-", "b+"],
            &["b-"],
        ]))
        .unwrap();
        pattern.support = 7;
        let mined = vec![MinedPattern { pattern, prefix_support: 9 }];
        let text = render_pattern_list(&mined);
        assert_eq!(parse_pattern_list(&text).unwrap(), mined);
        assert!(parse_pattern_list("[{\"slots\": [[\"oops\"]]").is_err());
    }

    #[test]
    fn rule_list_round_trips_and_validates() {
        let rules = vec![sample_rule()];
        let text = render_rule_list(&rules).unwrap();
        assert_eq!(parse_rule_list(&text).unwrap(), rules);
        let mut broken = sample_rule();
        broken.predicted_symbol = EndpointSymbol::start("tv");
        assert!(matches!(
            render_rule_list(&[broken]),
            Err(BundleError::InconsistentRule { index: 0 })
        ));
    }

    #[test]
    fn inconsistent_rule_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("model.json");
        let mut rule = sample_rule();
        rule.predicted_symbol = EndpointSymbol::start("tv");
        assert!(matches!(
            write_model_bundle(&[sample_cluster()], &[sample_hmm()], &[rule], &path),
            Err(BundleError::InconsistentRule { index: 0 })
        ));
    }
}
