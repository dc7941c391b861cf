use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stratified assignment of samples to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// `(train, held_out)` for one fold, both in ascending index order.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded per-class shuffle followed by round-robin dealing. The dealing
/// offset carries over between classes so overall fold sizes stay balanced.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> FoldPlan {
    assert!(k >= 1, "k must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut assignments = vec![0; labels.len()];
    let mut offset = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            assignments[i] = (offset + pos) % k;
        }
        offset = (offset + members.len()) % k;
    }
    FoldPlan { k, assignments, seed }
}

/// Stratified subset of `pool` holding roughly `fraction` of each class
/// (at least one sample per class present in the pool).
pub fn stratified_fraction(labels: &[usize], pool: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in pool {
        by_class[labels[i]].push(i);
    }
    let mut chosen = Vec::new();
    let mut rest = Vec::new();
    for members in &mut by_class {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        chosen.extend_from_slice(&members[..take]);
        rest.extend_from_slice(&members[take..]);
    }
    chosen.sort_unstable();
    rest.sort_unstable();
    (chosen, rest)
}

/// Per-class holdout of about `fraction` of `pool` that always leaves at
/// least one sample of each class behind. Returns `(held_out, kept)`.
pub fn holdout_split(labels: &[usize], pool: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in pool {
        by_class[labels[i]].push(i);
    }
    let (mut held, mut kept) = (Vec::new(), Vec::new());
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * fraction).round() as usize).min(members.len().saturating_sub(1));
        held.extend_from_slice(&members[..take]);
        kept.extend_from_slice(&members[take..]);
    }
    held.sort_unstable();
    kept.sort_unstable();
    (held, kept)
}

/// Stratified subset of exactly `n` samples from `pool` (largest-remainder
/// allocation across classes, at least one per class while `n` allows).
pub fn stratified_sample(labels: &[usize], pool: &[usize], n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n.min(pool.len());
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in pool {
        by_class[labels[i]].push(i);
    }
    for m in &mut by_class {
        m.shuffle(&mut rng);
    }
    let total = pool.len() as f64;
    let mut quota: Vec<usize> = by_class
        .iter()
        .map(|m| ((m.len() as f64) * n as f64 / total).floor() as usize)
        .collect();
    let mut assigned: usize = quota.iter().sum();
    // Hand out the remainder by largest fractional part, then class order.
    let mut order: Vec<usize> = (0..num_classes).filter(|&c| !by_class[c].is_empty()).collect();
    order.sort_by(|&a, &b| {
        let fa = by_class[a].len() as f64 * n as f64 / total - quota[a] as f64;
        let fb = by_class[b].len() as f64 * n as f64 / total - quota[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut it = order.iter().cycle();
    while assigned < n {
        let &c = it.next().unwrap();
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            assigned += 1;
        }
    }
    let mut out: Vec<usize> = by_class
        .iter()
        .zip(&quota)
        .flat_map(|(m, &q)| m[..q].iter().copied())
        .collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_ten_samples() {
        let plan = stratified_kfold(&[0; 10], 5, 1);
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn eight_samples_pigeonhole() {
        let plan = stratified_kfold(&[0; 8], 5, 3);
        let mut sizes = plan.fold_sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![2, 2, 2, 1, 1]);
    }

    #[test]
    fn deterministic_and_stratified() {
        let labels: Vec<usize> = (0..200).map(|i| (i * 7 + i / 3) % 9).collect();
        let a = stratified_kfold(&labels, 5, 11);
        assert_eq!(a, stratified_kfold(&labels, 5, 11));
        assert_ne!(a, stratified_kfold(&labels, 5, 12));
        for c in 0..9 {
            let mut per_fold = vec![0usize; 5];
            for (i, &l) in labels.iter().enumerate() {
                if l == c {
                    per_fold[a.assignments[i]] += 1;
                }
            }
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            assert!(hi - lo <= 1, "class {c}: {per_fold:?}");
        }
        let sizes = a.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn fraction_and_sample_are_stratified() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let pool: Vec<usize> = (0..100).collect();
        let (chosen, rest) = stratified_fraction(&labels, &pool, 0.1, 5);
        assert_eq!(chosen.len() + rest.len(), 100);
        for c in 0..4 {
            assert!(chosen.iter().filter(|&&i| labels[i] == c).count() >= 1);
        }
        assert!(chosen.iter().all(|i| !rest.contains(i)));
        let (held, kept) = holdout_split(&[0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1], &(0..11).collect::<Vec<_>>(), 0.5, 1);
        assert_eq!(kept.iter().filter(|&&i| i == 0).count(), 1);
        assert_eq!(held.len(), 5);
        let s = stratified_sample(&labels, &pool, 30, 2);
        assert_eq!(s.len(), 30);
        for c in 0..4 {
            let n = s.iter().filter(|&&i| labels[i] == c).count();
            assert!((7..=8).contains(&n));
        }
    }
}
