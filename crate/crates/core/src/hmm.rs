//! Per-cluster discrete HMMs: counting-based construction, log-space Forward
//! scoring, and likelihood-argmax recognition.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::clustering::Cluster;
use crate::types::{ActivityOccurrence, EventTypeKey};

#[derive(Debug, Error, PartialEq)]
pub enum HmmError {
    #[error("cluster {0} is empty")]
    EmptyCluster(u64),
    #[error("cluster {cluster_id}: occurrence {sid} has no events")]
    NoEvents { cluster_id: u64, sid: u64 },
    #[error("cluster {cluster_id}: member sid {sid} not found in corpus")]
    UnknownSid { cluster_id: u64, sid: u64 },
    #[error("emission floor {floor} leaves no probability mass on the diagonal for {v} symbols")]
    EmissionFloorTooLarge { floor: f64, v: usize },
    #[error("observation sequence is empty")]
    EmptyObservation,
    #[error("no models to recognize against")]
    NoModels,
}

/// A discrete HMM for one cluster. States and vocabulary are sorted, unique
/// lists of event-type keys; `transition` is N×N, `emission` N×V, `initial`
/// length N, all row-stochastic.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityHMM {
    pub cluster_id: u64,
    pub states: Vec<EventTypeKey>,
    pub vocabulary: Vec<EventTypeKey>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    /// Probability assigned to off-diagonal and out-of-vocabulary symbols.
    pub emission_floor: f64,
}

/// A matrix row that fails validation, reported by name.
#[derive(Debug, Error, PartialEq)]
pub enum ModelCheckError {
    #[error("hmm {cluster_id}: {matrix} row {row} sums to {sum}, expected 1")]
    RowNotNormalized {
        cluster_id: u64,
        matrix: &'static str,
        row: usize,
        sum: f64,
    },
    #[error("hmm {cluster_id}: {matrix} row {row} has a negative or non-finite entry")]
    BadEntry {
        cluster_id: u64,
        matrix: &'static str,
        row: usize,
    },
    #[error("hmm {cluster_id}: {matrix} has {got} rows, expected {want}")]
    RowCount {
        cluster_id: u64,
        matrix: &'static str,
        got: usize,
        want: usize,
    },
    #[error("hmm {cluster_id}: {matrix} row {row} has {got} columns, expected {want}")]
    ColCount {
        cluster_id: u64,
        matrix: &'static str,
        row: usize,
        got: usize,
        want: usize,
    },
    #[error("hmm {cluster_id}: {list} is not sorted and unique")]
    Unsorted { cluster_id: u64, list: &'static str },
    #[error("hmm {cluster_id}: emission_floor {floor} outside (0,1)")]
    Floor { cluster_id: u64, floor: f64 },
}

const ROW_SUM_TOL: f64 = 1e-9;

impl ActivityHMM {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Check dimensions, sortedness, entry ranges and row normalization.
    pub fn validate(&self) -> Result<(), ModelCheckError> {
        let id = self.cluster_id;
        let n = self.states.len();
        let v = self.vocabulary.len();
        for (list, name) in [(&self.states, "states"), (&self.vocabulary, "vocabulary")] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ModelCheckError::Unsorted { cluster_id: id, list: name });
            }
        }
        if !(self.emission_floor > 0.0 && self.emission_floor < 1.0) {
            return Err(ModelCheckError::Floor { cluster_id: id, floor: self.emission_floor });
        }
        let shapes: [(&'static str, &[Vec<f64>], usize, usize); 3] = [
            ("initial", std::slice::from_ref(&self.initial), 1, n),
            ("transition", &self.transition, n, n),
            ("emission", &self.emission, n, v),
        ];
        for (name, rows, want_rows, want_cols) in shapes {
            if rows.len() != want_rows {
                return Err(ModelCheckError::RowCount {
                    cluster_id: id,
                    matrix: name,
                    got: rows.len(),
                    want: want_rows,
                });
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != want_cols {
                    return Err(ModelCheckError::ColCount {
                        cluster_id: id,
                        matrix: name,
                        row: r,
                        got: row.len(),
                        want: want_cols,
                    });
                }
                if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(ModelCheckError::BadEntry { cluster_id: id, matrix: name, row: r });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(ModelCheckError::RowNotNormalized {
                        cluster_id: id,
                        matrix: name,
                        row: r,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    /// Log emission probability of `key` from state `i`; out-of-vocabulary
    /// symbols get the floor from every state.
    fn log_emission(&self, i: usize, key: &EventTypeKey) -> f64 {
        match self.vocabulary.binary_search(key) {
            Ok(k) => self.emission[i][k].ln(),
            Err(_) => self.emission_floor.ln(),
        }
    }
}

/// Build one HMM from a cluster's member occurrences. States are the sorted
/// distinct event types seen in the cluster; initial and transition
/// probabilities are Laplace-smoothed counts of first events and adjacent
/// event pairs; emission is an identity with `emission_floor` off-diagonal
/// mass. A state with no outgoing pairs and zero smoothing falls back to a
/// uniform transition row.
pub fn build_hmm(
    cluster: &Cluster,
    corpus: &[ActivityOccurrence],
    smoothing: f64,
    emission_floor: f64,
) -> Result<ActivityHMM, HmmError> {
    if cluster.members.is_empty() {
        return Err(HmmError::EmptyCluster(cluster.cluster_id));
    }
    let by_sid: BTreeMap<u64, &ActivityOccurrence> =
        corpus.iter().map(|o| (o.sid, o)).collect();
    let mut members = Vec::with_capacity(cluster.members.len());
    for &sid in &cluster.members {
        let occ = by_sid.get(&sid).ok_or(HmmError::UnknownSid {
            cluster_id: cluster.cluster_id,
            sid,
        })?;
        if occ.events.is_empty() {
            return Err(HmmError::NoEvents { cluster_id: cluster.cluster_id, sid });
        }
        members.push(*occ);
    }

    let states: Vec<EventTypeKey> = members
        .iter()
        .flat_map(|o| o.events.iter().map(|e| e.type_key()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = states.len();
    if emission_floor * (n.saturating_sub(1)) as f64 >= 1.0 {
        return Err(HmmError::EmissionFloorTooLarge { floor: emission_floor, v: n });
    }
    let idx = |key: &EventTypeKey| states.binary_search(key).expect("state from corpus");

    let mut first_counts = vec![0.0f64; n];
    let mut pair_counts = vec![vec![0.0f64; n]; n];
    for occ in &members {
        let keys = occ.events.type_keys();
        first_counts[idx(&keys[0])] += 1.0;
        for w in keys.windows(2) {
            pair_counts[idx(&w[0])][idx(&w[1])] += 1.0;
        }
    }

    let initial = normalize_counts(&first_counts, smoothing);
    let transition: Vec<Vec<f64>> = pair_counts
        .iter()
        .map(|row| normalize_counts(row, smoothing))
        .collect();
    let emission: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    if i == k {
                        1.0 - emission_floor * (n - 1) as f64
                    } else {
                        emission_floor
                    }
                })
                .collect()
        })
        .collect();

    Ok(ActivityHMM {
        cluster_id: cluster.cluster_id,
        vocabulary: states.clone(),
        states,
        initial,
        transition,
        emission,
        emission_floor,
    })
}

/// Laplace-smooth and normalize a count vector; an all-zero row with zero
/// smoothing becomes uniform.
fn normalize_counts(counts: &[f64], smoothing: f64) -> Vec<f64> {
    let n = counts.len();
    let total: f64 = counts.iter().sum::<f64>() + smoothing * n as f64;
    if total == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    counts.iter().map(|c| (c + smoothing) / total).collect()
}

/// Log P(obs | model) by the Forward algorithm in log space.
pub fn forward(model: &ActivityHMM, obs: &[EventTypeKey]) -> Result<f64, HmmError> {
    if obs.is_empty() {
        return Err(HmmError::EmptyObservation);
    }
    let n = model.n_states();
    let mut alpha: Vec<f64> = (0..n)
        .map(|i| model.initial[i].ln() + model.log_emission(i, &obs[0]))
        .collect();
    for symbol in &obs[1..] {
        let mut next = vec![f64::NEG_INFINITY; n];
        for (j, slot) in next.iter_mut().enumerate() {
            let terms: Vec<f64> = (0..n)
                .map(|i| alpha[i] + model.transition[i][j].ln())
                .collect();
            *slot = log_sum_exp(&terms) + model.log_emission(j, symbol);
        }
        alpha = next;
    }
    Ok(log_sum_exp(&alpha))
}

/// Numerically stable ln(Σ exp(x)); an all-`-inf` input yields `-inf`.
fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Score `obs` against every model and rank by log-likelihood, ties broken
/// by smaller cluster id. Returns the winning cluster id and the full table.
pub fn recognize(
    obs: &[EventTypeKey],
    models: &[ActivityHMM],
) -> Result<(u64, Vec<(u64, f64)>), HmmError> {
    if models.is_empty() {
        return Err(HmmError::NoModels);
    }
    let mut table = Vec::with_capacity(models.len());
    for m in models {
        table.push((m.cluster_id, forward(m, obs)?));
    }
    table.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok((table[0].0, table))
}
