//! Train/validation/test splits and stratified k-fold plans.
//!
//! All randomness flows from an explicit seed; the same manifest, seed and
//! parameters always yield the same split. Group keys are sorted before
//! shuffling so that `HashMap` iteration order never leaks into the result.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Manifest, TaskLabeling};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingKey {
    Patient,
    Record,
}

/// Requested split sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSizes {
    /// Proportions of the manifest, e.g. `8:1:1`.
    Ratios { train: f64, validation: f64, test: f64 },
    /// Exact class-balanced validation and test sets; training gets the rest.
    BalancedCounts {
        validation_pos: usize,
        validation_neg: usize,
        test_pos: usize,
        test_neg: usize,
    },
}

impl SplitSizes {
    pub const EIGHT_ONE_ONE: SplitSizes = SplitSizes::Ratios {
        train: 8.0,
        validation: 1.0,
        test: 1.0,
    };

    /// Validation 1024 + 1024, test 266 + 266, everything else to training.
    pub const CHESTXRAY14_TABLE: SplitSizes = SplitSizes::BalancedCounts {
        validation_pos: 1024,
        validation_neg: 1024,
        test_pos: 266,
        test_neg: 266,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub grouping_key: GroupingKey,
    pub seed: u64,
}

impl SplitSpec {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<SplitSpec>,
}

/// On-disk, human-readable form of a split or fold plan.
#[derive(Debug, Serialize, Deserialize)]
struct PlanFile<T> {
    kind: String,
    seed: u64,
    manifest_len: usize,
    plan: T,
}

impl SplitSpec {
    pub fn write_json(&self, manifest: &Manifest, path: &Path) -> Result<()> {
        write_plan("split", self.seed, manifest, self, path)
    }

    pub fn read_json(path: &Path) -> Result<SplitSpec> {
        read_plan(path)
    }
}

impl FoldPlan {
    pub fn write_json(&self, manifest: &Manifest, path: &Path) -> Result<()> {
        write_plan("fold_plan", self.seed, manifest, self, path)
    }

    pub fn read_json(path: &Path) -> Result<FoldPlan> {
        read_plan(path)
    }
}

fn write_plan<T: Serialize>(kind: &str, seed: u64, manifest: &Manifest, plan: &T, path: &Path) -> Result<()> {
    let file = PlanFile {
        kind: kind.to_string(),
        seed,
        manifest_len: manifest.len(),
        plan,
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_plan<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let file: PlanFile<T> = serde_json::from_str(&text)?;
    Ok(file.plan)
}

struct Group {
    members: Vec<usize>,
    pos: usize,
    neg: usize,
}

fn groups(manifest: &Manifest, labels: &[u8], key: GroupingKey) -> Vec<Group> {
    let mut by_key: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records().iter().enumerate() {
        let k = match key {
            GroupingKey::Patient => r.patient_id.as_str(),
            GroupingKey::Record => r.image_ref.as_str(),
        };
        by_key.entry(k).or_default().push(i);
    }
    by_key
        .into_values()
        .map(|members| {
            let pos = members.iter().filter(|&&i| labels[i] == 1).count();
            Group {
                neg: members.len() - pos,
                pos,
                members,
            }
        })
        .collect()
}

/// Quota for one split. `pos`/`neg` when class-balanced, otherwise `total`.
#[derive(Debug, Clone, Copy)]
enum Quota {
    Total(usize),
    Classes { pos: usize, neg: usize },
}

impl Quota {
    fn fits(&self, g: &Group) -> bool {
        match *self {
            Quota::Total(t) => g.members.len() <= t,
            Quota::Classes { pos, neg } => g.pos <= pos && g.neg <= neg,
        }
    }

    fn take(&mut self, g: &Group) {
        match self {
            Quota::Total(t) => *t -= g.members.len(),
            Quota::Classes { pos, neg } => {
                *pos -= g.pos;
                *neg -= g.neg;
            }
        }
    }

    fn is_filled(&self) -> bool {
        match *self {
            Quota::Total(t) => t == 0,
            Quota::Classes { pos, neg } => pos == 0 && neg == 0,
        }
    }
}

/// Seeded split that never places one group (patient or record) in two parts.
///
/// Groups are visited in shuffled order and placed in the test set if they
/// fit its remaining quota, else in validation if they fit there, else in
/// training. The request is infeasible when a quota is left unfilled.
pub fn split_grouped(
    manifest: &Manifest,
    labeling: &TaskLabeling,
    sizes: SplitSizes,
    grouping_key: GroupingKey,
    seed: u64,
) -> Result<SplitSpec> {
    let labels = manifest.labels(labeling)?;
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let (mut val_quota, mut test_quota) = match sizes {
        SplitSizes::Ratios { train, validation, test } => {
            let total = train + validation + test;
            if !(train >= 0.0 && validation >= 0.0 && test >= 0.0 && total > 0.0) {
                return Err(Error::invalid("split ratios must be non-negative with a positive sum"));
            }
            let n_test = (n as f64 * test / total).round() as usize;
            let n_val = (n as f64 * validation / total).round() as usize;
            if n_test + n_val > n {
                return Err(Error::InfeasibleSplit(format!(
                    "{n_val} validation + {n_test} test exceed {n} records"
                )));
            }
            (Quota::Total(n_val), Quota::Total(n_test))
        }
        SplitSizes::BalancedCounts {
            validation_pos,
            validation_neg,
            test_pos,
            test_neg,
        } => {
            let (want_pos, want_neg) = (validation_pos + test_pos, validation_neg + test_neg);
            if want_pos > n_pos || want_neg > n - n_pos {
                return Err(Error::InfeasibleSplit(format!(
                    "requested {want_pos} positives and {want_neg} negatives outside training, \
                     available {n_pos} positives and {} negatives",
                    n - n_pos
                )));
            }
            (
                Quota::Classes {
                    pos: validation_pos,
                    neg: validation_neg,
                },
                Quota::Classes {
                    pos: test_pos,
                    neg: test_neg,
                },
            )
        }
    };

    let mut groups = groups(manifest, &labels, grouping_key);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    let mut split = SplitSpec {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        grouping_key,
        seed,
    };
    for g in &groups {
        let target = if !test_quota.is_filled() && test_quota.fits(g) {
            test_quota.take(g);
            &mut split.test
        } else if !val_quota.is_filled() && val_quota.fits(g) {
            val_quota.take(g);
            &mut split.validation
        } else {
            &mut split.train
        };
        target.extend_from_slice(&g.members);
    }
    if !test_quota.is_filled() || !val_quota.is_filled() {
        return Err(Error::InfeasibleSplit(format!(
            "could not fill quotas with whole {grouping_key:?} groups (unfilled test {test_quota:?}, \
             validation {val_quota:?}); manifest has {n_pos} positives and {} negatives in {} groups",
            n - n_pos,
            groups.len()
        )));
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Stratified k-fold plan.
///
/// Each class is shuffled and dealt round-robin into `k` folds, continuing the
/// deal from one class to the next, so fold sizes differ by at most one and
/// every fold receives its share of positives. Fold `i` is the test set of
/// plan entry `i`; the remaining records are divided between training and
/// validation in the ratio `train_ratio : validation_ratio`, again per class.
pub fn make_folds(
    manifest: &Manifest,
    labeling: &TaskLabeling,
    k: usize,
    train_ratio: f64,
    validation_ratio: f64,
    seed: u64,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > manifest.len() {
        return Err(Error::invalid(format!(
            "{k} folds requested for {} records",
            manifest.len()
        )));
    }
    if !(train_ratio > 0.0 && validation_ratio >= 0.0) {
        return Err(Error::invalid("train ratio must be positive, validation ratio non-negative"));
    }
    let labels = manifest.labels(labeling)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[usize::from(y)].push(i);
    }
    // positives first, then negatives
    by_class.reverse();
    for class in by_class.iter_mut() {
        class.shuffle(&mut rng);
    }

    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in &by_class {
        for &i in class {
            fold_of[i] = next % k;
            next += 1;
        }
    }

    let val_frac = validation_ratio / (train_ratio + validation_ratio);
    let folds = (0..k)
        .map(|f| {
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            let mut train = Vec::new();
            let mut validation = Vec::new();
            for class in &by_class {
                let rest: Vec<usize> = class.iter().copied().filter(|&i| fold_of[i] != f).collect();
                let n_val = (rest.len() as f64 * val_frac).round() as usize;
                validation.extend_from_slice(&rest[..n_val]);
                train.extend_from_slice(&rest[n_val..]);
            }
            train.sort_unstable();
            validation.sort_unstable();
            SplitSpec {
                train,
                validation,
                test,
                grouping_key: GroupingKey::Record,
                seed,
            }
        })
        .collect();
    Ok(FoldPlan { k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Malignancy, SampleRecord, Source};
    use std::collections::HashSet;

    fn toy(n: usize, n_pos: usize, per_patient: usize) -> Manifest {
        let records = (0..n)
            .map(|i| SampleRecord {
                image_ref: format!("img{i}.png"),
                patient_id: format!("p{}", i / per_patient),
                findings: if i < n_pos { ["nodule".to_string()].into() } else { Default::default() },
                malignancy: if i < n_pos { Malignancy::Malignant } else { Malignancy::None },
                nodule_center: None,
                nodule_size: None,
            })
            .collect();
        Manifest::new(Source::Jsrt, records).unwrap()
    }

    #[test]
    fn exact_ratio_split() {
        let m = toy(10, 5, 1);
        let s = split_grouped(&m, &TaskLabeling::malignancy(), SplitSizes::EIGHT_ONE_ONE, GroupingKey::Record, 1).unwrap();
        assert_eq!(s.sizes(), (8, 1, 1));
    }

    #[test]
    fn grouped_split_has_no_shared_patients() {
        let m = toy(300, 90, 3);
        let s = split_grouped(&m, &TaskLabeling::nodule(), SplitSizes::EIGHT_ONE_ONE, GroupingKey::Patient, 4).unwrap();
        let pats = |idx: &[usize]| -> HashSet<String> {
            idx.iter().map(|&i| m.records()[i].patient_id.clone()).collect()
        };
        let (a, b, c) = (pats(&s.train), pats(&s.validation), pats(&s.test));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), 300);
    }

    #[test]
    fn balanced_counts_infeasible_reports_availability() {
        let m = toy(20, 3, 1);
        let err = split_grouped(
            &m,
            &TaskLabeling::nodule(),
            SplitSizes::BalancedCounts { validation_pos: 2, validation_neg: 2, test_pos: 2, test_neg: 2 },
            GroupingKey::Patient,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("available 3 positives"));
    }

    #[test]
    fn split_deterministic() {
        let m = toy(100, 30, 2);
        let a = split_grouped(&m, &TaskLabeling::nodule(), SplitSizes::EIGHT_ONE_ONE, GroupingKey::Patient, 9).unwrap();
        let b = split_grouped(&m, &TaskLabeling::nodule(), SplitSizes::EIGHT_ONE_ONE, GroupingKey::Patient, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn folds_of_247() {
        let m = toy(247, 100, 1);
        let plan = make_folds(&m, &TaskLabeling::malignancy(), 10, 8.0, 1.0, 3).unwrap();
        let mut seen = vec![0; 247];
        for f in &plan.folds {
            assert!(f.test.len() == 24 || f.test.len() == 25);
            for &i in &f.test {
                seen[i] += 1;
            }
            let all: HashSet<usize> = f.train.iter().chain(&f.validation).chain(&f.test).copied().collect();
            assert_eq!(all.len(), 247);
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(plan.folds.iter().filter(|f| f.test.len() == 25).count(), 7);
    }

    #[test]
    fn smallest_stratified_case() {
        let m = toy(4, 2, 1);
        let plan = make_folds(&m, &TaskLabeling::malignancy(), 2, 8.0, 1.0, 0).unwrap();
        for f in &plan.folds {
            let pos = f.test.iter().filter(|&&i| i < 2).count();
            assert_eq!((pos, f.test.len()), (1, 2));
        }
    }

    #[test]
    fn folds_deterministic_and_checked() {
        let m = toy(30, 10, 1);
        let l = TaskLabeling::malignancy();
        assert_eq!(make_folds(&m, &l, 3, 8.0, 1.0, 5).unwrap(), make_folds(&m, &l, 3, 8.0, 1.0, 5).unwrap());
        assert!(make_folds(&m, &l, 31, 8.0, 1.0, 5).is_err());
        assert!(make_folds(&m, &l, 1, 8.0, 1.0, 5).is_err());
    }

    #[test]
    fn plan_json_round_trip() {
        let set = generate_synthetic(6, 6, 16, 1);
        let plan = make_folds(&set.manifest, &TaskLabeling::nodule(), 3, 8.0, 1.0, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("folds.json");
        plan.write_json(&set.manifest, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"seed\": 2"));
        assert_eq!(FoldPlan::read_json(&p).unwrap(), plan);
    }
}
