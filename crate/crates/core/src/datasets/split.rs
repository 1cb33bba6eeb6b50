use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetError, DatasetManifest, Label, Source, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.75,
            val: 0.10,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(DatasetError::Ratios(format!("{parts:?} must be finite and non-negative")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Ratios(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMix {
    /// Share of the Mpox train split that is synthetic.
    pub mpox_train_synthetic_fraction: f64,
}

impl Default for SplitMix {
    fn default() -> Self {
        Self {
            mpox_train_synthetic_fraction: 0.5,
        }
    }
}

fn order_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Assigns every record to train, val or test.
///
/// Per class, `val = round(ratio_val·n)`, `test = round(ratio_test·n)` and
/// train takes the remainder. Synthetic records (Mpox only) all go to train
/// and must make up `fraction·train` of it within one sample. Within each
/// class, records are ordered by `sha256(seed ‖ id)`, so the result does not
/// depend on manifest order.
pub fn split(
    manifest: &DatasetManifest,
    ratios: SplitRatios,
    mix: SplitMix,
    seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    ratios.validate()?;
    let f = mix.mpox_train_synthetic_fraction;
    if !(0.0..=1.0).contains(&f) {
        return Err(DatasetError::Ratios(format!("synthetic fraction {f} is outside [0, 1]")));
    }
    manifest.validate()?;
    if manifest.is_empty() {
        return Err(DatasetError::Empty);
    }

    // (real, synthetic) record indices per class.
    let mut groups: BTreeMap<Label, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        let g = groups.entry(r.label).or_default();
        match r.source {
            Source::Real => g.0.push(i),
            Source::Synthetic => g.1.push(i),
        }
    }

    let mut out = manifest.clone();
    for (label, (mut real, synthetic)) in groups {
        let n = real.len() + synthetic.len();
        let n_val = (ratios.val * n as f64).round() as usize;
        let n_test = (ratios.test * n as f64).round() as usize;
        if n_val + n_test > n {
            return Err(DatasetError::Ratios(format!("class {label}: {n} records cannot hold {n_val} val + {n_test} test")));
        }
        let n_train = n - n_val - n_test;
        if label == Label::Mpox {
            let target = f * n_train as f64;
            let have = synthetic.len();
            if (have as f64 - target).abs() > 1.0 {
                let need_syn = target.round() as usize;
                let need_real = n_val + n_test + (n_train - need_syn);
                let msg = if have > need_syn {
                    format!(
                        "mpox needs {need_real} real images ({n_val} val + {n_test} test + {} train) but has {}; shortfall of {}",
                        n_train - need_syn,
                        real.len(),
                        need_real - real.len()
                    )
                } else {
                    format!(
                        "mpox train of {n_train} needs {need_syn} synthetic images at fraction {f} but has {have}; shortfall of {}",
                        need_syn - have
                    )
                };
                return Err(DatasetError::InfeasibleMix(msg));
            }
        } else if !synthetic.is_empty() {
            return Err(DatasetError::Invalid(format!("class {label} contains synthetic records")));
        }

        real.sort_by_cached_key(|&i| order_key(seed, &manifest.records[i].id));
        for (rank, &i) in real.iter().enumerate() {
            out.records[i].split = Some(if rank < n_val {
                Split::Val
            } else if rank < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            });
        }
        for &i in &synthetic {
            out.records[i].split = Some(Split::Train);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SampleRecord;

    fn class(label: Label, real: usize, synthetic: usize) -> Vec<SampleRecord> {
        let mk = |i: usize, source: Source| SampleRecord {
            id: format!("{label}-{}-{i}", source.as_str()),
            path: format!("{label}/{}/{i}.png", source.as_str()),
            label,
            source,
            sha256: "a".repeat(64),
            phash: "0".repeat(16),
            split: None,
        };
        (0..real)
            .map(|i| mk(i, Source::Real))
            .chain((0..synthetic).map(|i| mk(i, Source::Synthetic)))
            .collect()
    }

    fn counts(m: &DatasetManifest, label: Label, source: Option<Source>) -> [usize; 3] {
        let mut c = [0; 3];
        for r in &m.records {
            if r.label == label && source.is_none_or(|s| s == r.source) {
                c[r.split.unwrap() as usize] += 1;
            }
        }
        c
    }

    #[test]
    fn twelve_hundred_per_class() {
        let mut records = class(Label::Mpox, 750, 450);
        records.extend(class(Label::OtherSkin, 1200, 0));
        records.extend(class(Label::Normal, 1200, 0));
        let m = DatasetManifest::new(records).unwrap();
        let s = split(&m, SplitRatios::default(), SplitMix::default(), 7).unwrap();
        for label in Label::ALL {
            assert_eq!(counts(&s, label, None), [900, 120, 180]);
        }
        assert_eq!(counts(&s, Label::Mpox, Some(Source::Synthetic)), [450, 0, 0]);
        assert_eq!(counts(&s, Label::Mpox, Some(Source::Real)), [450, 120, 180]);
    }

    #[test]
    fn zero_fraction_is_all_real() {
        let m = DatasetManifest::new(class(Label::Mpox, 100, 0)).unwrap();
        let mix = SplitMix {
            mpox_train_synthetic_fraction: 0.0,
        };
        let s = split(&m, SplitRatios::default(), mix, 1).unwrap();
        assert_eq!(counts(&s, Label::Mpox, None), [75, 10, 15]);
    }

    #[test]
    fn too_few_real_images_reports_shortfall() {
        let m = DatasetManifest::new(class(Label::Mpox, 600, 600)).unwrap();
        let err = split(&m, SplitRatios::default(), SplitMix::default(), 1).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, DatasetError::InfeasibleMix(_)));
        assert!(msg.contains("needs 750 real images") && msg.contains("shortfall of 150"), "{msg}");
    }

    #[test]
    fn bad_ratios() {
        let m = DatasetManifest::new(class(Label::Normal, 10, 0)).unwrap();
        let r = SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.1,
        };
        assert!(matches!(split(&m, r, SplitMix::default(), 0), Err(DatasetError::Ratios(_))));
    }

    #[test]
    fn seed_changes_assignment() {
        let m = DatasetManifest::new(class(Label::Normal, 200, 0)).unwrap();
        let a = split(&m, SplitRatios::default(), SplitMix::default(), 1).unwrap();
        let b = split(&m, SplitRatios::default(), SplitMix::default(), 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, split(&m, SplitRatios::default(), SplitMix::default(), 1).unwrap());
    }
}
