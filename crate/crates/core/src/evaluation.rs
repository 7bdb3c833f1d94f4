//! BCubed extrinsic clustering scores and parameter-sweep reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::clustering::{agglomerate, Cluster};
use crate::tpminer::{self, TpError};
use crate::types::{ActivityOccurrence, MiningConfig, SupportThreshold};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("sid {0} appears more than once")]
    DuplicateSid(u64),
    #[error("sid {0} is not in the assignment")]
    UnknownSid(u64),
    #[error("cluster member sid {0} is not in the truth corpus")]
    MissingTruth(u64),
    #[error("occurrence {0} has no ground-truth label")]
    Unlabeled(u64),
    #[error("assignment is empty")]
    Empty,
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Endpoint(#[from] TpError),
}

/// Each object's ground-truth category and assigned cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledAssignment {
    sids: Vec<u64>,
    categories: Vec<String>,
    clusters: Vec<u64>,
    index: BTreeMap<u64, usize>,
}

impl LabeledAssignment {
    pub fn new(objects: Vec<(u64, String, u64)>) -> Result<LabeledAssignment, EvalError> {
        if objects.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut index = BTreeMap::new();
        let mut sids = Vec::with_capacity(objects.len());
        let mut categories = Vec::with_capacity(objects.len());
        let mut clusters = Vec::with_capacity(objects.len());
        for (i, (sid, category, cluster)) in objects.into_iter().enumerate() {
            if index.insert(sid, i).is_some() {
                return Err(EvalError::DuplicateSid(sid));
            }
            sids.push(sid);
            categories.push(category);
            clusters.push(cluster);
        }
        Ok(LabeledAssignment { sids, categories, clusters, index })
    }

    /// Pair a clustering with ground-truth labels from the corpus. Every
    /// cluster member must exist in the corpus and carry a label.
    pub fn from_clustering(
        clusters: &[Cluster],
        corpus: &[ActivityOccurrence],
    ) -> Result<LabeledAssignment, EvalError> {
        let truth: BTreeMap<u64, &ActivityOccurrence> =
            corpus.iter().map(|o| (o.sid, o)).collect();
        let mut objects = Vec::new();
        for c in clusters {
            for &sid in &c.members {
                let occ = truth.get(&sid).ok_or(EvalError::MissingTruth(sid))?;
                let label = occ.label.clone().ok_or(EvalError::Unlabeled(sid))?;
                objects.push((sid, label, c.cluster_id));
            }
        }
        LabeledAssignment::new(objects)
    }

    pub fn len(&self) -> usize {
        self.sids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sids.is_empty()
    }

    /// 1 iff the two objects agree on the biconditional "same category ⇔
    /// same cluster".
    pub fn correctness(&self, o: u64, o2: u64) -> Result<u8, EvalError> {
        let i = *self.index.get(&o).ok_or(EvalError::UnknownSid(o))?;
        let j = *self.index.get(&o2).ok_or(EvalError::UnknownSid(o2))?;
        Ok(self.correct_at(i, j) as u8)
    }

    fn correct_at(&self, i: usize, j: usize) -> bool {
        (self.categories[i] == self.categories[j]) == (self.clusters[i] == self.clusters[j])
    }

    /// BCubed (precision, recall, F1), with each object counted as its own
    /// cluster- and category-mate.
    pub fn bcubed(&self) -> (f64, f64, f64) {
        let n = self.len();
        let mut precision = 0.0;
        let mut recall = 0.0;
        for i in 0..n {
            let mut cluster_mates = 0u64;
            let mut cluster_correct = 0u64;
            let mut category_mates = 0u64;
            let mut category_correct = 0u64;
            for j in 0..n {
                let correct = self.correct_at(i, j);
                if self.clusters[i] == self.clusters[j] {
                    cluster_mates += 1;
                    cluster_correct += correct as u64;
                }
                if self.categories[i] == self.categories[j] {
                    category_mates += 1;
                    category_correct += correct as u64;
                }
            }
            precision += cluster_correct as f64 / cluster_mates as f64;
            recall += category_correct as f64 / category_mates as f64;
        }
        precision /= n as f64;
        recall /= n as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        (precision, recall, f1)
    }
}

/// Which pipeline threshold a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Rho,
    MinSup,
    MinPre,
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rho" => Ok(SweepParam::Rho),
            "minsup" => Ok(SweepParam::MinSup),
            "min_pre" => Ok(SweepParam::MinPre),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

/// One CSV report row per grid value: F1 for rho sweeps, pattern count and
/// mining wall-clock (median of 3, milliseconds) for minsup sweeps, rule
/// count for min_pre sweeps. Values below 1 are fractional minsups; values
/// of 1 or more are absolute counts.
pub fn sweep_report(
    corpus: &[ActivityOccurrence],
    param: SweepParam,
    grid: &[f64],
    config: &MiningConfig,
) -> Result<String, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut out = String::new();
    match param {
        SweepParam::Rho => {
            out.push_str("rho,f1\n");
            for &rho in grid {
                let clusters = agglomerate(corpus, rho);
                let (_, _, f1) = LabeledAssignment::from_clustering(&clusters, corpus)?.bcubed();
                writeln!(out, "{rho},{f1}").expect("string write");
            }
        }
        SweepParam::MinSup => {
            let db = tpminer::daily_database(corpus)?;
            out.push_str("minsup,patterns,ms\n");
            for &v in grid {
                let threshold = if v < 1.0 {
                    SupportThreshold::Fraction(v)
                } else {
                    SupportThreshold::Count(v.round() as u64)
                };
                let minsup = threshold.resolve(db.len());
                let mut times = Vec::with_capacity(3);
                let mut patterns = 0usize;
                for _ in 0..3 {
                    let started = Instant::now();
                    patterns = tpminer::mine(&db, minsup).len();
                    times.push(started.elapsed().as_millis());
                }
                times.sort_unstable();
                writeln!(out, "{v},{patterns},{}", times[1]).expect("string write");
            }
        }
        SweepParam::MinPre => {
            let db = tpminer::daily_database(corpus)?;
            let minsup = config.minsup.resolve(db.len());
            let mined = tpminer::mine_detailed(&db, minsup);
            out.push_str("min_pre,rules\n");
            for &v in grid {
                let rules = tpminer::rules_from_mined(&mined, v).len();
                writeln!(out, "{v},{rules}").expect("string write");
            }
        }
    }
    Ok(out)
}
