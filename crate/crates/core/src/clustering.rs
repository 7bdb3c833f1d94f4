//! Occurrence similarity and threshold-bounded average-linkage clustering.
//!
//! Similarity between two occurrences is the sum of three components, each in
//! [0,1]: same location, time-of-day interval overlap, and Jaccard similarity
//! of the event-type sets. Distance is `1 - sim/3`, so it also lives in [0,1]
//! and the merge threshold `rho` is comparable across corpora.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::ActivityOccurrence;

/// A discovered group of occurrences, identified by their sids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: u64,
    pub members: Vec<u64>,
    /// Majority ground-truth label among labeled members, if any are labeled.
    pub label_hint: Option<String>,
}

/// 1 if the two occurrences share a location, else 0.
pub fn location_similarity(a: &ActivityOccurrence, b: &ActivityOccurrence) -> f64 {
    if a.location == b.location {
        1.0
    } else {
        0.0
    }
}

/// Interval overlap score `(dur_a + dur_b) / (2 * span)` where span covers
/// both intervals. Identical intervals score 1; far-apart short intervals
/// approach 0. A zero-duration occurrence scores 0 against any partner.
pub fn time_similarity(a: &ActivityOccurrence, b: &ActivityOccurrence) -> f64 {
    let dur_a = a.duration_secs();
    let dur_b = b.duration_secs();
    if dur_a == 0 || dur_b == 0 {
        return 0.0;
    }
    let span = a.end.max(b.end).secs_since(a.start.min(b.start));
    (dur_a + dur_b) as f64 / (2.0 * span as f64)
}

/// Jaccard similarity of the two occurrences' event-type sets. Two empty
/// sets count as identical (1); one empty side as disjoint (0).
pub fn structure_similarity(a: &ActivityOccurrence, b: &ActivityOccurrence) -> f64 {
    let sa = a.type_key_set();
    let sb = b.type_key_set();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    inter as f64 / union as f64
}

/// Total similarity in [0,3]: location + time + structure.
pub fn similarity(a: &ActivityOccurrence, b: &ActivityOccurrence) -> f64 {
    location_similarity(a, b) + time_similarity(a, b) + structure_similarity(a, b)
}

/// Normalized distance in [0,1].
pub fn distance(a: &ActivityOccurrence, b: &ActivityOccurrence) -> f64 {
    1.0 - similarity(a, b) / 3.0
}

/// Symmetric pairwise-distance matrix over a corpus, indexed by position and
/// carrying the corresponding sids.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    sids: Vec<u64>,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.sids.len()
    }

    pub fn sids(&self) -> &[u64] {
        &self.sids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n() + j]
    }
}

/// Pairwise distances `1 - sim/3` for every occurrence pair.
pub fn distance_matrix(data: &[ActivityOccurrence]) -> DistanceMatrix {
    let n = data.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(&data[i], &data[j]);
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    DistanceMatrix {
        sids: data.iter().map(|o| o.sid).collect(),
        entries,
    }
}

/// Mean cross-pair distance between two clusters. Members are sids resolved
/// through the matrix's sid list; unknown sids are ignored.
pub fn average_linkage(ci: &Cluster, cj: &Cluster, m: &DistanceMatrix) -> f64 {
    let index: BTreeMap<u64, usize> = m.sids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let ai: Vec<usize> = ci.members.iter().filter_map(|s| index.get(s).copied()).collect();
    let aj: Vec<usize> = cj.members.iter().filter_map(|s| index.get(s).copied()).collect();
    if ai.is_empty() || aj.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &i in &ai {
        for &j in &aj {
            total += m.get(i, j);
        }
    }
    total / (ai.len() * aj.len()) as f64
}

/// Agglomerate occurrences: repeatedly merge the globally closest pair of
/// clusters (ties broken by smallest id pair) while that distance is below
/// `rho`. Returns a hard partition with clusters numbered by smallest member
/// sid; the result is independent of input order.
pub fn agglomerate(data: &[ActivityOccurrence], rho: f64) -> Vec<Cluster> {
    agglomerate_trace(data, rho).0
}

/// As [`agglomerate`], also returning the sequence of merge distances in the
/// order the merges happened (non-decreasing under average linkage).
pub fn agglomerate_trace(data: &[ActivityOccurrence], rho: f64) -> (Vec<Cluster>, Vec<f64>) {
    let n = data.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }

    // Canonical working order: positions sorted by sid, so the tie-break
    // below (and hence the whole merge schedule) ignores input permutation.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| data[i].sid);
    let points: Vec<&ActivityOccurrence> = order.iter().map(|&i| &data[i]).collect();

    // Pairwise distance sums between live clusters. Merging i and j only
    // needs additions: T[k][i∪j] = T[k][i] + T[k][j].
    let mut sums = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(points[i], points[j]);
            sums[i * n + j] = d;
            sums[j * n + i] = d;
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut trace = Vec::new();

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            let Some(mi) = &members[i] else { continue };
            for j in (i + 1)..n {
                let Some(mj) = &members[j] else { continue };
                let link = sums[i * n + j] / (mi.len() * mj.len()) as f64;
                let better = match best {
                    None => true,
                    Some((bd, _, _)) => link < bd,
                };
                if better {
                    best = Some((link, i, j));
                }
            }
        }
        let Some((dist, i, j)) = best else { break };
        if dist >= rho {
            break;
        }
        trace.push(dist);
        for k in 0..n {
            if k != i && k != j {
                sums[i * n + k] += sums[j * n + k];
                sums[k * n + i] = sums[i * n + k];
            }
        }
        let mj = members[j].take().expect("merge target is live");
        members[i].as_mut().expect("merge target is live").extend(mj);
    }

    let mut clusters: Vec<Cluster> = members
        .into_iter()
        .flatten()
        .map(|positions| {
            let mut sids: Vec<u64> = positions.iter().map(|&p| points[p].sid).collect();
            sids.sort_unstable();
            let label_hint = majority_label(positions.iter().map(|&p| points[p]));
            Cluster {
                cluster_id: 0,
                members: sids,
                label_hint,
            }
        })
        .collect();
    clusters.sort_by_key(|c| c.members[0]);
    for (id, c) in clusters.iter_mut().enumerate() {
        c.cluster_id = id as u64;
    }
    (clusters, trace)
}

/// Most frequent label among labeled occurrences, ties broken by the
/// lexicographically smallest label; None when nothing is labeled.
fn majority_label<'a>(occs: impl Iterator<Item = &'a ActivityOccurrence>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for o in occs {
        if let Some(l) = &o.label {
            *counts.entry(l).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
}
