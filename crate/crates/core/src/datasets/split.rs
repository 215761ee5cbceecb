//! Stratified train/val/test splitting and nested label-fraction subsets.
//!
//! Label-efficiency experiments fine-tune on shrinking fractions of the train
//! split. Two properties matter and are guaranteed here:
//!
//! * **Stratification** — every part (and every fraction subset) holds each
//!   grade class in proportion to the full manifest, within one sample.
//! * **Nesting** — for a fixed seed, `subset(f1) ⊆ subset(f2)` whenever
//!   `f1 ≤ f2`, so a 10% run trains on a strict subset of the 20% run's data
//!   and fraction curves measure data volume, not sampling luck.
//!
//! Nesting falls out of the construction: each class's train ids are shuffled
//! once per seed, and a fraction takes a per-class prefix whose length grows
//! monotonically with the fraction (see [`subset_by_fraction`]).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::datasets::manifest::{DatasetManifest, SplitAssignment};
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Stream tags keeping split shuffles independent of other seeded streams.
const TAG_SPLIT: u64 = 0x5350;
const TAG_SUBSET: u64 = 0x5355;

/// A materialized split: the ids in each part, plus the seed and train
/// fraction that produced it.
///
/// Serializes to JSON as `{seed, fraction, train_ids, val_ids, test_ids}`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    /// Fraction of the full train split retained (1.0 for the initial split).
    pub fraction: f64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitSpec {
    /// Canonical JSON rendering (stable field and id order).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serialization cannot fail")
    }

    /// Write the split as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Read a split back from JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::CheckpointFormat {
            path: path.to_path_buf(),
            message: format!("split JSON: {e}"),
        })
    }

    /// True when no id appears in more than one part.
    pub fn is_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.train_ids
            .iter()
            .chain(&self.val_ids)
            .chain(&self.test_ids)
            .all(|id| seen.insert(id))
    }

    /// Total number of ids across all parts.
    pub fn len(&self) -> usize {
        self.train_ids.len() + self.val_ids.len() + self.test_ids.len()
    }

    /// True when all three parts are empty.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mark each manifest sample with its part from `split`.
///
/// Ids in the split that are missing from the manifest are an error; manifest
/// samples absent from the split stay `Unassigned`.
pub fn assign_split(manifest: &mut DatasetManifest, split: &SplitSpec) -> Result<()> {
    let index: HashMap<&str, usize> = manifest
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut assignments = vec![SplitAssignment::Unassigned; manifest.samples.len()];
    for (ids, part) in [
        (&split.train_ids, SplitAssignment::Train),
        (&split.val_ids, SplitAssignment::Val),
        (&split.test_ids, SplitAssignment::Test),
    ] {
        for id in ids {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| Error::UnknownSampleId { id: id.clone() })?;
            assignments[i] = part;
        }
    }
    for (sample, assignment) in manifest.samples.iter_mut().zip(assignments) {
        sample.split = assignment;
    }
    Ok(())
}

/// Split a manifest into train/val/test, stratified by grade.
///
/// Within each grade class the ids are shuffled with a class-specific stream
/// of `seed` and dealt to the three parts by largest-remainder allocation, so
/// each part's class count is within one sample of `ratio * class_size`.
/// Ratios must be strictly positive and sum to 1; a class with fewer samples
/// than parts is an error rather than being silently dropped.
pub fn stratified_split(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitSpec> {
    let (rt, rv, rs) = ratios;
    if !(rt > 0.0 && rv > 0.0 && rs > 0.0) {
        return Err(Error::InvalidSplitRatios {
            train: rt,
            val: rv,
            test: rs,
            message: "all three ratios must be strictly positive".to_string(),
        });
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSplitRatios {
            train: rt,
            val: rv,
            test: rs,
            message: format!("ratios sum to {}, expected 1", rt + rv + rs),
        });
    }

    // Group ids by grade, preserving manifest order inside each class.
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for s in &manifest.samples {
        by_class.entry(s.grade).or_default().push(&s.id);
    }

    let mut train_ids = Vec::new();
    let mut val_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (&class, ids) in &by_class {
        let n = ids.len();
        if n < 3 {
            return Err(Error::ClassTooSmall {
                class,
                count: n,
                parts: 3,
            });
        }
        let mut shuffled: Vec<&str> = ids.clone();
        shuffled.shuffle(&mut rng_from(seed, &[TAG_SPLIT, class as u64]));

        let counts = largest_remainder(n, &[rt, rv, rs]);
        let (a, b) = (counts[0], counts[0] + counts[1]);
        train_ids.extend(shuffled[..a].iter().map(|s| s.to_string()));
        val_ids.extend(shuffled[a..b].iter().map(|s| s.to_string()));
        test_ids.extend(shuffled[b..].iter().map(|s| s.to_string()));
    }

    Ok(SplitSpec {
        seed,
        fraction: 1.0,
        train_ids,
        val_ids,
        test_ids,
    })
}

/// Allocate `n` items to parts proportionally to `ratios`, summing exactly to
/// `n` with each count within one of `ratio * n` (largest-remainder rule,
/// ties broken by part order).
fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let targets: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Keep a stratified fraction of the train split; val and test are untouched.
///
/// The retained set has `round(fraction * |train|)` ids. Per class, counts
/// follow a largest-deficit walk that assigns one slot at a time, so the
/// count vector for a smaller fraction is coordinate-wise ≤ that of a larger
/// one; combined with per-class prefix selection under a fraction-independent
/// shuffle this makes subsets nested. Classes that end up empty are an error.
/// Output order follows the original `train_ids` order, so `fraction = 1`
/// returns the train list unchanged.
pub fn subset_by_fraction(
    split: &SplitSpec,
    manifest: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<SplitSpec> {
    if !(fraction > 0.0 && fraction <= 1.0) || !fraction.is_finite() {
        return Err(Error::InvalidFraction { fraction });
    }

    let grade_of: HashMap<&str, usize> = manifest
        .samples
        .iter()
        .map(|s| (s.id.as_str(), s.grade))
        .collect();

    // Class membership in train order.
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for id in &split.train_ids {
        let &grade = grade_of
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownSampleId { id: id.clone() })?;
        by_class.entry(grade).or_default().push(id);
    }

    let classes: Vec<usize> = by_class.keys().copied().collect();
    let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let want = (fraction * total as f64).round() as usize;

    let counts = largest_deficit_walk(&sizes, want);

    let empty: Vec<usize> = classes
        .iter()
        .zip(&counts)
        .filter(|&(_, &k)| k == 0)
        .map(|(&c, _)| c)
        .collect();
    if !empty.is_empty() {
        return Err(Error::EmptyStratum {
            fraction,
            classes: empty,
        });
    }

    // Fraction-independent per-class shuffle; take a prefix of each.
    let mut keep: HashSet<&str> = HashSet::new();
    for ((&class, ids), &k) in by_class.iter().zip(&counts) {
        let mut shuffled: Vec<&str> = ids.clone();
        shuffled.shuffle(&mut rng_from(seed, &[TAG_SUBSET, class as u64]));
        keep.extend(&shuffled[..k]);
    }

    Ok(SplitSpec {
        seed,
        fraction,
        train_ids: split
            .train_ids
            .iter()
            .filter(|id| keep.contains(id.as_str()))
            .cloned()
            .collect(),
        val_ids: split.val_ids.clone(),
        test_ids: split.test_ids.clone(),
    })
}

/// Hand out `total` slots across classes of the given sizes, one at a time,
/// always to the class whose running count lags its proportional share the
/// most (ties to the lowest class index).
///
/// Because slot `t`'s allocation never depends on `total`, the count vectors
/// form a chain: `walk(sizes, t1) ≤ walk(sizes, t2)` pointwise for
/// `t1 ≤ t2`. Each count also stays within one slot of its proportional
/// share (checked exhaustively in the tests).
fn largest_deficit_walk(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut counts = vec![0usize; sizes.len()];
    for step in 1..=total.min(n) {
        let mut best: Option<(f64, usize)> = None;
        for (c, (&size, &have)) in sizes.iter().zip(counts.iter()).enumerate() {
            if have >= size {
                continue;
            }
            let deficit = step as f64 * size as f64 / n as f64 - have as f64;
            let better = match best {
                None => true,
                Some((b, _)) => deficit > b,
            };
            if better {
                best = Some((deficit, c));
            }
        }
        if let Some((_, c)) = best {
            counts[c] += 1;
        }
    }
    counts
}
