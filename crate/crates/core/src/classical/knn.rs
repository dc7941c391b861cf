use serde::{Deserialize, Serialize};

use super::ClassicalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 1 }
    }
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force Euclidean k-nearest-neighbour classifier.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    cfg: KnnConfig,
}

impl KnnClassifier {
    pub fn fit(features: Vec<Vec<f64>>, labels: Vec<usize>, cfg: KnnConfig) -> Result<Self, ClassicalError> {
        if features.is_empty() {
            return Err(ClassicalError::EmptyTrainingSet);
        }
        if cfg.k == 0 || cfg.k > features.len() {
            return Err(ClassicalError::InvalidConfig(format!(
                "k={} with {} training samples",
                cfg.k,
                features.len()
            )));
        }
        Ok(KnnClassifier { features, labels, cfg })
    }

    /// Majority label among the `k` nearest samples. Equal distances rank the
    /// lower training index first; equal votes pick the smallest class index.
    pub fn classify(&self, query: &[f64]) -> usize {
        let mut dist: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (squared_euclidean(f, query), i))
            .collect();
        let k = self.cfg.k;
        if k == 1 {
            let best = dist
                .iter()
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
                .unwrap();
            return self.labels[best.1];
        }
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut votes: Vec<(usize, usize)> = Vec::new();
        for &(_, i) in &dist[..k] {
            let l = self.labels[i];
            match votes.iter_mut().find(|v| v.0 == l) {
                Some(v) => v.1 += 1,
                None => votes.push((l, 1)),
            }
        }
        votes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        votes[0].0
    }
}

/// Convenience wrapper over [`KnnClassifier`].
pub fn knn_classify(
    train: &[Vec<f64>],
    labels: &[usize],
    query: &[f64],
    cfg: KnnConfig,
) -> Result<usize, ClassicalError> {
    Ok(KnnClassifier::fit(train.to_vec(), labels.to_vec(), cfg)?.classify(query))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_match_k1() {
        let train = vec![vec![0.0, 1.0], vec![5.0, 5.0], vec![9.0, 0.0]];
        let labels = vec![2, 0, 1];
        assert_eq!(knn_classify(&train, &labels, &[5.0, 5.0], KnnConfig { k: 1 }).unwrap(), 0);
    }

    #[test]
    fn equidistant_tie_takes_lower_index() {
        let train = vec![vec![-1.0], vec![1.0]];
        assert_eq!(knn_classify(&train, &[4, 3], &[0.0], KnnConfig { k: 1 }).unwrap(), 4);
        let train = vec![vec![1.0], vec![-1.0]];
        assert_eq!(knn_classify(&train, &[4, 3], &[0.0], KnnConfig { k: 1 }).unwrap(), 4);
    }

    #[test]
    fn k3_majority_and_vote_tie() {
        let train = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert_eq!(knn_classify(&train, &[1, 0, 1], &[10.0], KnnConfig { k: 3 }).unwrap(), 1);
        let train = vec![vec![0.0], vec![1.0]];
        assert_eq!(knn_classify(&train, &[5, 2], &[0.0], KnnConfig { k: 2 }).unwrap(), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            knn_classify(&[], &[], &[0.0], KnnConfig::default()),
            Err(ClassicalError::EmptyTrainingSet)
        ));
        assert!(knn_classify(&[vec![0.0]], &[0], &[0.0], KnnConfig { k: 2 }).is_err());
    }

    proptest! {
        #[test]
        fn inserted_query_wins(
            train in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..30),
            query in prop::collection::vec(-5.0f64..5.0, 4),
            label in 0usize..7,
        ) {
            let mut feats = vec![query.clone()];
            feats.extend(train.iter().cloned());
            let mut labels = vec![label];
            labels.extend((0..train.len()).map(|i| i % 7));
            prop_assert_eq!(knn_classify(&feats, &labels, &query, KnnConfig { k: 1 }).unwrap(), label);
        }
    }
}
