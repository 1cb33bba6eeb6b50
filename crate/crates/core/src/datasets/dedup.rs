use serde::{Deserialize, Serialize};

use super::{hamming, DatasetError, DatasetManifest};

pub const DEFAULT_HAMMING_THRESHOLD: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactDuplicate {
    pub a_id: String,
    pub b_id: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearDuplicate {
    pub a_id: String,
    pub b_id: String,
    pub distance: u32,
}

/// Cross-manifest duplicate findings. Exact pairs share a sha256; near pairs
/// have differing content but dHash distance at most `hamming_threshold`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicityReport {
    pub hamming_threshold: u32,
    pub a_records: usize,
    pub b_records: usize,
    pub exact: Vec<ExactDuplicate>,
    pub near: Vec<NearDuplicate>,
}

impl DuplicityReport {
    pub fn is_clean(&self) -> bool {
        self.exact.is_empty() && self.near.is_empty()
    }

    pub fn flagged_pairs(&self) -> usize {
        self.exact.len() + self.near.len()
    }

    /// Same findings with the roles of `a` and `b` exchanged.
    pub fn swapped(&self) -> Self {
        let mut exact: Vec<_> = self
            .exact
            .iter()
            .map(|d| ExactDuplicate {
                a_id: d.b_id.clone(),
                b_id: d.a_id.clone(),
                sha256: d.sha256.clone(),
            })
            .collect();
        let mut near: Vec<_> = self
            .near
            .iter()
            .map(|d| NearDuplicate {
                a_id: d.b_id.clone(),
                b_id: d.a_id.clone(),
                distance: d.distance,
            })
            .collect();
        exact.sort_by(|x, y| (&x.a_id, &x.b_id).cmp(&(&y.a_id, &y.b_id)));
        near.sort_by(|x, y| (&x.a_id, &x.b_id).cmp(&(&y.a_id, &y.b_id)));
        Self {
            hamming_threshold: self.hamming_threshold,
            a_records: self.b_records,
            b_records: self.a_records,
            exact,
            near,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Compares every record of `a` against every record of `b`. Pairs are
/// sorted by `(a_id, b_id)`, so `dedup_check(b, a)` equals
/// `dedup_check(a, b).swapped()`.
pub fn dedup_check(a: &DatasetManifest, b: &DatasetManifest, hamming_threshold: u32) -> Result<DuplicityReport, DatasetError> {
    let hashes = |m: &DatasetManifest| -> Result<Vec<u64>, DatasetError> { m.records.iter().map(|r| r.phash_bits()).collect() };
    let (ha, hb) = (hashes(a)?, hashes(b)?);
    let mut exact = Vec::new();
    let mut near = Vec::new();
    for (ra, &pa) in a.records.iter().zip(&ha) {
        for (rb, &pb) in b.records.iter().zip(&hb) {
            if ra.sha256.eq_ignore_ascii_case(&rb.sha256) {
                exact.push(ExactDuplicate {
                    a_id: ra.id.clone(),
                    b_id: rb.id.clone(),
                    sha256: ra.sha256.to_ascii_lowercase(),
                });
                continue;
            }
            let distance = hamming(pa, pb);
            if distance <= hamming_threshold {
                near.push(NearDuplicate {
                    a_id: ra.id.clone(),
                    b_id: rb.id.clone(),
                    distance,
                });
            }
        }
    }
    exact.sort_by(|x, y| (&x.a_id, &x.b_id).cmp(&(&y.a_id, &y.b_id)));
    near.sort_by(|x, y| (&x.a_id, &x.b_id).cmp(&(&y.a_id, &y.b_id)));
    Ok(DuplicityReport {
        hamming_threshold,
        a_records: a.len(),
        b_records: b.len(),
        exact,
        near,
    })
}
