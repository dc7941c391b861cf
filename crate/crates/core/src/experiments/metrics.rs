/// Class indices ordered by descending probability (ties: lower index first).
pub fn ranked_classes(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// Fraction of rows whose label is among the `k` highest-probability classes.
pub fn topk_accuracy(probs: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, &l)| ranked_classes(p).iter().take(k).any(|&c| c == l))
        .count();
    hits as f64 / probs.len() as f64
}

/// Mean difference between the two largest probabilities of each row.
pub fn confidence_gap(probs: &[Vec<f64>]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .map(|p| {
            let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &v in p {
                if v > a {
                    b = a;
                    a = v;
                } else if v > b {
                    b = v;
                }
            }
            if b.is_finite() {
                a - b
            } else {
                a
            }
        })
        .sum();
    total / probs.len() as f64
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn topk_examples() {
        let probs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        for k in 1..=3 {
            assert_eq!(topk_accuracy(&probs, &[0, 1], k), 1.0);
        }
        let second = vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.2, 0.7]];
        assert_eq!(topk_accuracy(&second, &[1, 1], 1), 0.0);
        assert_eq!(topk_accuracy(&second, &[1, 1], 3), 1.0);
    }

    #[test]
    fn topk_random_uniform_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probs: Vec<Vec<f64>> = (0..10_000).map(|_| (0..10).map(|_| rng.gen()).collect()).collect();
        let labels: Vec<usize> = (0..10_000).map(|_| rng.gen_range(0..10)).collect();
        let acc = topk_accuracy(&probs, &labels, 3);
        assert!((acc - 0.3).abs() < 0.02, "{acc}");
    }

    #[test]
    fn gap_examples() {
        assert!((confidence_gap(&[vec![0.7, 0.2, 0.1]]) - 0.5).abs() < 1e-12);
        assert_eq!(confidence_gap(&[vec![0.25; 4]]), 0.0);
    }
}
