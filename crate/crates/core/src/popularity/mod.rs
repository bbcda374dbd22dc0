//! Entity popularity from Wikidata statement counts, and the five-way
//! bucketing of a run's named entities.

mod wikidata;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use wikidata::{WikidataClient, WikidataConfig, POPULARITY_CACHE_FILE, WIKIDATA_API};

#[derive(Debug, Error)]
pub enum PopularityError {
    #[error("cannot resolve an empty label")]
    EmptyEntity,
    #[error("wikidata transport error: {0}")]
    Transport(String),
    #[error("unexpected wikidata payload: {0}")]
    Payload(String),
    #[error("popularity cache error: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    NotFound,
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Bucket {
    pub const ALL: [Bucket; 5] = [Bucket::NotFound, Bucket::Q1, Bucket::Q2, Bucket::Q3, Bucket::Q4];
    pub const QUARTILES: [Bucket; 4] = [Bucket::Q1, Bucket::Q2, Bucket::Q3, Bucket::Q4];

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::NotFound => "not_found",
            Bucket::Q1 => "q1",
            Bucket::Q2 => "q2",
            Bucket::Q3 => "q3",
            Bucket::Q4 => "q4",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopularityRecord {
    pub entity: String,
    pub qid: Option<String>,
    pub statement_count: Option<u64>,
    pub resolved_at: DateTime<Utc>,
}

impl PopularityRecord {
    pub fn found(entity: &str, qid: &str, statement_count: u64) -> Self {
        PopularityRecord {
            entity: entity.to_string(),
            qid: Some(qid.to_string()),
            statement_count: Some(statement_count),
            resolved_at: Utc::now(),
        }
    }

    pub fn not_found(entity: &str) -> Self {
        PopularityRecord {
            entity: entity.to_string(),
            qid: None,
            statement_count: None,
            resolved_at: Utc::now(),
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.qid.is_some() && self.statement_count.is_some()
    }
}

/// Partition of one run's named entities.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketAssignment {
    pub buckets: BTreeMap<Bucket, BTreeSet<String>>,
}

impl BucketAssignment {
    pub fn get(&self, bucket: Bucket) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.buckets.get(&bucket).unwrap_or(&EMPTY)
    }

    pub fn bucket_of(&self, label: &str) -> Option<Bucket> {
        self.buckets.iter().find(|(_, s)| s.contains(label)).map(|(b, _)| *b)
    }

    /// Every label across all buckets.
    pub fn labels(&self) -> BTreeSet<String> {
        self.buckets.values().flatten().cloned().collect()
    }

    pub fn sizes(&self) -> BTreeMap<Bucket, usize> {
        Bucket::ALL.iter().map(|b| (*b, self.get(*b).len())).collect()
    }
}

/// Unresolved entities go to `NotFound`; the rest are sorted by
/// `(statement_count, label)` and cut into four contiguous ranges, lower
/// quartiles taking the remainder first.
pub fn bucketize(records: &[PopularityRecord]) -> BucketAssignment {
    let mut buckets: BTreeMap<Bucket, BTreeSet<String>> = Bucket::ALL.iter().map(|b| (*b, BTreeSet::new())).collect();
    let mut resolved: Vec<(u64, &str)> = Vec::new();
    for r in records {
        match r.statement_count {
            Some(n) if r.qid.is_some() => resolved.push((n, &r.entity)),
            _ => {
                buckets.get_mut(&Bucket::NotFound).unwrap().insert(r.entity.clone());
            }
        }
    }
    resolved.sort_unstable();
    resolved.dedup_by(|a, b| a.1 == b.1);

    let n = resolved.len();
    let (base, extra) = (n / 4, n % 4);
    let mut start = 0;
    for (q, bucket) in Bucket::QUARTILES.iter().enumerate() {
        let size = base + usize::from(q < extra);
        let set = buckets.get_mut(bucket).unwrap();
        set.extend(resolved[start..start + size].iter().map(|(_, l)| l.to_string()));
        start += size;
    }
    BucketAssignment { buckets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(label: &str, n: Option<u64>) -> PopularityRecord {
        match n {
            Some(n) => PopularityRecord::found(label, "Q1", n),
            None => PopularityRecord::not_found(label),
        }
    }

    #[test]
    fn even_split() {
        let recs: Vec<_> = (0..8).map(|i| rec(&format!("e{i}"), Some(i))).collect();
        let b = bucketize(&recs);
        assert_eq!(b.get(Bucket::Q1).len(), 2);
        assert_eq!(b.get(Bucket::Q4).len(), 2);
        assert!(b.get(Bucket::Q1).contains("e0") && b.get(Bucket::Q1).contains("e1"));
        assert!(b.get(Bucket::Q4).contains("e7"));
    }

    #[test]
    fn remainder_goes_low() {
        let recs: Vec<_> = ["a", "b", "c", "d", "e"].iter().map(|l| rec(l, Some(10))).collect();
        let sizes: Vec<usize> = Bucket::QUARTILES.iter().map(|q| bucketize(&recs).get(*q).len()).collect();
        assert_eq!(sizes, vec![2, 1, 1, 1]);
        let sizes7: Vec<usize> = {
            let r: Vec<_> = (0..7).map(|i| rec(&format!("x{i}"), Some(1))).collect();
            let b = bucketize(&r);
            Bucket::QUARTILES.iter().map(|q| b.get(*q).len()).collect()
        };
        assert_eq!(sizes7, vec![2, 2, 2, 1]);
        // Ties broken by label.
        assert_eq!(bucketize(&recs).get(Bucket::Q1).iter().cloned().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn unresolved_only() {
        let recs = vec![rec("x", None), rec("y", None)];
        let b = bucketize(&recs);
        assert_eq!(b.get(Bucket::NotFound).len(), 2);
        assert!(Bucket::QUARTILES.iter().all(|q| b.get(*q).is_empty()));
        assert_eq!(b.bucket_of("y"), Some(Bucket::NotFound));
    }

    proptest! {
        #[test]
        fn partition_and_order(counts in prop::collection::vec(prop::option::of(0u64..50), 0..40)) {
            let recs: Vec<_> = counts.iter().enumerate().map(|(i, c)| rec(&format!("e{i:02}"), *c)).collect();
            let b = bucketize(&recs);
            let total: usize = b.sizes().values().sum();
            prop_assert_eq!(total, recs.len());
            prop_assert_eq!(b.labels().len(), recs.len());
            prop_assert_eq!(&b, &bucketize(&recs));
            let count_of = |l: &str| recs.iter().find(|r| r.entity == l).unwrap().statement_count.unwrap();
            for w in Bucket::QUARTILES.windows(2) {
                if let (Some(hi), Some(lo)) = (b.get(w[0]).iter().map(|l| count_of(l)).max(), b.get(w[1]).iter().map(|l| count_of(l)).min()) {
                    prop_assert!(hi <= lo);
                }
            }
            let sizes: Vec<usize> = Bucket::QUARTILES.iter().map(|q| b.get(*q).len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
