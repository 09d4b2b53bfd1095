//! Deterministic stratified train/val/test splitting.
//!
//! Each class is allocated seats per split by largest remainder: floor
//! the quota `n_class * ratio`, then hand the leftover seats to the
//! largest fractional remainders. This bounds every cell's deviation
//! from its quota below one sample. Within a class, samples are ordered
//! by a seeded hash of their id, so the assignment is deterministic,
//! independent of input order, and equivariant under relabeling classes.
//!
//! Largest remainder fixes row (class) totals but lets column (split)
//! totals drift by a seat or two. When every global target
//! `n_total * ratio` is an integer, a repair pass moves single seats
//! between splits *within* a class — donor cells are the least-entitled
//! rounded-up cells — until the column totals are exact; each move keeps
//! the cell deviations below one.

use crate::error::{Error, Result};
use std::collections::HashMap;

/// Quotas this close to an integer are treated as exact; covers the
/// rounding noise of `count as f64 * ratio` without touching any
/// legitimate fractional remainder.
const SNAP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!(
                "unknown split {other:?}; expected train, val, or test"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Fractions of each class assigned to the three splits; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.795,
            val: 0.103,
            test: 0.102,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, r) in [
            ("train", self.train),
            ("val", self.val),
            ("test", self.test),
        ] {
            if !(0.0..=1.0).contains(&r) {
                problems.push(format!("ratio {name} = {r} must lie in [0, 1]"));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            problems.push(format!("ratios sum to {sum}, expected 1"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

fn snap(q: f64) -> f64 {
    let r = q.round();
    if (q - r).abs() < SNAP_EPS {
        r
    } else {
        q
    }
}

/// Seeded, platform-independent 64-bit hash of a sample id (FNV-1a over
/// the seed bytes then the id bytes).
fn keyed_hash(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in seed.to_le_bytes().into_iter().chain(id.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

struct ClassCells {
    /// Sample ids of this class, hash-ordered.
    ids: Vec<usize>,
    quotas: [f64; 3],
    alloc: [usize; 3],
    /// Fractional remainders of the quotas (post-snap).
    rems: [f64; 3],
    /// Which cells took a leftover seat.
    rounded_up: [bool; 3],
    /// Smallest sample id in the class: a label-independent tie-break.
    min_id: String,
}

/// Assigns every `(id, class)` pair to a split. Returns the splits in
/// input order.
///
/// Guarantees, for any input meeting the preconditions (unique ids,
/// classes `0..n_classes` each with at least 3 samples):
/// - every class/split count is within 1 of `n_class * ratio`;
/// - when every global target `n_total * ratio` is an integer, the
///   split totals equal the targets exactly;
/// - output depends only on `(id, class)` *sets*, the ratios, and the
///   seed — not on input order or on how class indices are named.
pub fn stratified_split(
    samples: &[(String, usize)],
    n_classes: usize,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<Vec<Split>> {
    ratios.validate()?;
    if n_classes == 0 {
        return Err(Error::data("stratified_split: n_classes must be positive"));
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (pos, (id, class)) in samples.iter().enumerate() {
        if let Some(first) = seen.insert(id.as_str(), pos) {
            return Err(Error::data(format!(
                "duplicate sample id {id:?} at positions {first} and {pos}"
            )));
        }
        if *class >= n_classes {
            return Err(Error::data(format!(
                "sample {id:?} has class {class}, outside 0..{n_classes}"
            )));
        }
    }

    // Group sample indices by class and order them by seeded hash.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (pos, (_, class)) in samples.iter().enumerate() {
        by_class[*class].push(pos);
    }
    let mut cells: Vec<ClassCells> = Vec::with_capacity(n_classes);
    for (class, mut ids) in by_class.into_iter().enumerate() {
        if ids.len() < 3 {
            return Err(Error::data(format!(
                "class {class} has {} samples; stratification needs at least 3",
                ids.len()
            )));
        }
        ids.sort_by(|&a, &b| {
            let (ia, ib) = (&samples[a].0, &samples[b].0);
            (keyed_hash(seed, ia), ia).cmp(&(keyed_hash(seed, ib), ib))
        });
        let n = ids.len();
        let quotas = ratios.as_array().map(|r| snap(n as f64 * r));
        let floors = quotas.map(|q| q.floor() as usize);
        let rems = [0, 1, 2].map(|s| quotas[s] - floors[s] as f64);
        let mut alloc = floors;
        let mut rounded_up = [false; 3];
        let leftover = n - floors.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            rems[b]
                .partial_cmp(&rems[a])
                .expect("remainders are finite")
                .then(a.cmp(&b))
        });
        for &s in order.iter().take(leftover) {
            alloc[s] += 1;
            rounded_up[s] = true;
        }
        let min_id = ids
            .iter()
            .map(|&pos| samples[pos].0.as_str())
            .min()
            .expect("class has samples")
            .to_string();
        cells.push(ClassCells {
            ids,
            quotas,
            alloc,
            rems,
            rounded_up,
            min_id,
        });
    }

    // Exact-total repair, when the targets are integers.
    let targets = ratios.as_array().map(|r| snap(samples.len() as f64 * r));
    if targets.iter().all(|t| t.fract() == 0.0) {
        repair_totals(&mut cells, targets.map(|t| t as usize))?;
    }

    let mut out = vec![Split::Train; samples.len()];
    for cell in &cells {
        let mut cursor = cell.ids.iter();
        for split in Split::ALL {
            for &pos in cursor.by_ref().take(cell.alloc[split.index()]) {
                out[pos] = split;
            }
        }
    }
    Ok(out)
}

/// Moves single seats between splits within classes until the column
/// totals hit `targets`, keeping every cell within 1 of its quota.
fn repair_totals(cells: &mut [ClassCells], targets: [usize; 3]) -> Result<()> {
    let max_moves = targets.iter().sum::<usize>() + 1;
    for _ in 0..max_moves {
        let totals = [0, 1, 2].map(|s| cells.iter().map(|c| c.alloc[s]).sum::<usize>());
        let over = (0..3)
            .max_by_key(|&s| totals[s] as i64 - targets[s] as i64)
            .expect("three splits");
        if totals[over] <= targets[over] {
            return Ok(()); // nothing over target: all totals exact
        }
        // Donor: the rounded-up cell least entitled to its extra seat.
        // Receiver: within the same class, an under-target split whose
        // cell can absorb a seat and stay within 1 of quota (rem > 0
        // and not already rounded up).
        let mut best: Option<(f64, f64, &str, usize, usize)> = None;
        for (ci, cell) in cells.iter().enumerate() {
            if !cell.rounded_up[over] {
                continue;
            }
            for under in 0..3 {
                if totals[under] >= targets[under]
                    || cell.rounded_up[under]
                    || cell.rems[under] <= 0.0
                {
                    continue;
                }
                let key = (
                    cell.rems[over],
                    -cell.rems[under],
                    cell.min_id.as_str(),
                    ci,
                    under,
                );
                if best.is_none_or(|(r, u, id, _, _)| (key.0, key.1, key.2) < (r, u, id)) {
                    best = Some(key);
                }
            }
        }
        let Some((_, _, _, ci, under)) = best else {
            return Err(Error::contract(
                "stratified_split",
                "could not reconcile split totals without breaking a class quota",
            ));
        };
        let cell = &mut cells[ci];
        cell.alloc[over] -= 1;
        cell.rounded_up[over] = false;
        cell.alloc[under] += 1;
        cell.rounded_up[under] = true;
        debug_assert!((cell.alloc[over] as f64 - cell.quotas[over]).abs() < 1.0);
        debug_assert!((cell.alloc[under] as f64 - cell.quotas[under]).abs() < 1.0);
    }
    Err(Error::contract(
        "stratified_split",
        "split repair did not converge",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn make_samples(class_sizes: &[usize]) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (class, &n) in class_sizes.iter().enumerate() {
            for k in 0..n {
                out.push((format!("c{class}_s{k:05}"), class));
            }
        }
        out
    }

    fn counts(samples: &[(String, usize)], splits: &[Split], n_classes: usize) -> Vec<[usize; 3]> {
        let mut table = vec![[0usize; 3]; n_classes];
        for ((_, class), split) in samples.iter().zip(splits) {
            table[*class][*split as usize] += 1;
        }
        table
    }

    #[test]
    fn ten_samples_split_eight_one_one() {
        let samples = make_samples(&[10]);
        let ratios = SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        };
        let splits = stratified_split(&samples, 1, &ratios, 7).unwrap();
        assert_eq!(counts(&samples, &splits, 1), vec![[8, 1, 1]]);
    }

    #[test]
    fn six_class_corpus_hits_exact_global_totals() {
        let sizes = [648, 484, 400, 466, 650, 400];
        let n: usize = sizes.iter().sum();
        assert_eq!(n, 3048);
        let samples = make_samples(&sizes);
        let ratios = SplitRatios {
            train: 2423.0 / 3048.0,
            val: 313.0 / 3048.0,
            test: 312.0 / 3048.0,
        };
        let splits = stratified_split(&samples, 6, &ratios, 0).unwrap();
        let table = counts(&samples, &splits, 6);
        let totals = [0, 1, 2].map(|s| table.iter().map(|row| row[s]).sum::<usize>());
        assert_eq!(totals, [2423, 313, 312]);
        for (class, row) in table.iter().enumerate() {
            let quotas = [ratios.train, ratios.val, ratios.test].map(|r| sizes[class] as f64 * r);
            for s in 0..3 {
                let dev = (row[s] as f64 - quotas[s]).abs();
                assert!(
                    dev < 1.0,
                    "class {class} split {s}: {} vs {}",
                    row[s],
                    quotas[s]
                );
            }
        }
    }

    #[test]
    fn default_ratios_on_uniform_classes() {
        let samples = make_samples(&[126; 6]);
        let splits = stratified_split(&samples, 6, &SplitRatios::default(), 3).unwrap();
        let table = counts(&samples, &splits, 6);
        for row in &table {
            assert_eq!(row, &[100, 13, 13]);
        }
    }

    #[test]
    fn assignment_ignores_input_order() {
        let mut samples = make_samples(&[20, 35, 11]);
        let splits = stratified_split(&samples, 3, &SplitRatios::default(), 9).unwrap();
        let by_id: std::collections::HashMap<String, Split> = samples
            .iter()
            .map(|(id, _)| id.clone())
            .zip(splits)
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        samples.shuffle(&mut rng);
        let splits = stratified_split(&samples, 3, &SplitRatios::default(), 9).unwrap();
        for ((id, _), split) in samples.iter().zip(splits) {
            assert_eq!(by_id[id], split, "{id}");
        }
    }

    #[test]
    fn assignment_is_equivariant_under_class_relabeling() {
        let samples = make_samples(&[30, 30, 17]);
        let splits = stratified_split(&samples, 3, &SplitRatios::default(), 5).unwrap();
        // Rename classes 0 -> 2, 1 -> 0, 2 -> 1; same cohorts, same ids.
        let perm = [2usize, 0, 1];
        let renamed: Vec<(String, usize)> = samples
            .iter()
            .map(|(id, c)| (id.clone(), perm[*c]))
            .collect();
        let renamed_splits = stratified_split(&renamed, 3, &SplitRatios::default(), 5).unwrap();
        assert_eq!(splits, renamed_splits);
    }

    #[test]
    fn different_seeds_move_samples_between_splits() {
        let samples = make_samples(&[40, 40]);
        let a = stratified_split(&samples, 2, &SplitRatios::default(), 1).unwrap();
        let b = stratified_split(&samples, 2, &SplitRatios::default(), 2).unwrap();
        assert_eq!(a.len(), b.len());
        assert_ne!(a, b, "the seed must shuffle the within-class assignment");
        // Class/split counts stay identical regardless of seed.
        assert_eq!(counts(&samples, &a, 2), counts(&samples, &b, 2));
    }

    #[test]
    fn preconditions_are_enforced() {
        let samples = make_samples(&[5, 2]);
        let err = stratified_split(&samples, 2, &SplitRatios::default(), 0).unwrap_err();
        assert!(err.to_string().contains("at least 3"), "{err}");

        let mut samples = make_samples(&[5]);
        samples.push((samples[0].0.clone(), 0));
        let err = stratified_split(&samples, 1, &SplitRatios::default(), 0).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let bad = SplitRatios {
            train: 0.9,
            val: 0.2,
            test: 0.1,
        };
        let samples = make_samples(&[5]);
        assert!(stratified_split(&samples, 1, &bad, 0).is_err());
    }

    proptest! {
        #[test]
        fn every_cell_stays_within_one_of_its_quota(
            sizes in proptest::collection::vec(3usize..120, 1..6),
            weights in proptest::collection::vec(1u32..50, 3),
            seed in 0u64..1000,
        ) {
            let total_w: u32 = weights.iter().sum();
            let ratios = SplitRatios {
                train: weights[0] as f64 / total_w as f64,
                val: weights[1] as f64 / total_w as f64,
                test: weights[2] as f64 / total_w as f64,
            };
            let samples = make_samples(&sizes);
            let splits = stratified_split(&samples, sizes.len(), &ratios, seed).unwrap();
            let table = counts(&samples, &splits, sizes.len());
            for (class, row) in table.iter().enumerate() {
                prop_assert_eq!(row.iter().sum::<usize>(), sizes[class]);
                let quotas = [ratios.train, ratios.val, ratios.test]
                    .map(|r| sizes[class] as f64 * r);
                for s in 0..3 {
                    let dev = (row[s] as f64 - quotas[s]).abs();
                    prop_assert!(dev < 1.0 + 1e-9,
                        "class {} split {}: {} vs quota {}", class, s, row[s], quotas[s]);
                }
            }
        }

        #[test]
        fn integral_targets_always_land_exactly(
            sizes in proptest::collection::vec(3usize..60, 2..6),
            seed in 0u64..1000,
        ) {
            // Force integral global targets: pad the last class so the
            // total is a multiple of 10, then use tenths as ratios.
            let mut sizes = sizes;
            let total: usize = sizes.iter().sum();
            let pad = (10 - total % 10) % 10;
            if let Some(last) = sizes.last_mut() { *last += pad; }
            let ratios = SplitRatios { train: 0.8, val: 0.1, test: 0.1 };
            let samples = make_samples(&sizes);
            let n: usize = sizes.iter().sum();
            let splits = stratified_split(&samples, sizes.len(), &ratios, seed).unwrap();
            let table = counts(&samples, &splits, sizes.len());
            let totals = [0usize, 1, 2].map(|s| table.iter().map(|row| row[s]).sum::<usize>());
            prop_assert_eq!(totals, [n * 8 / 10, n / 10, n / 10]);
        }
    }
}
