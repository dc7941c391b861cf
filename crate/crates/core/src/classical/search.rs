use serde::{Deserialize, Serialize};

use super::knn::{squared_euclidean, KnnClassifier, KnnConfig};
use super::svm::{svm_train, SvmConfig};
use super::ClassicalError;
use crate::experiments::FoldPlan;
use crate::par;

/// One hyperparameter setting in a search grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ParamCell {
    Knn { k: usize },
    Svm { c: f64, gamma: f64 },
}

impl ParamCell {
    /// Trains on `train` and returns top-1 accuracy on `test`.
    pub fn evaluate(
        &self,
        features: &[Vec<f64>],
        labels: &[usize],
        train: &[usize],
        test: &[usize],
    ) -> Result<f64, ClassicalError> {
        let xs: Vec<Vec<f64>> = train.iter().map(|&i| features[i].clone()).collect();
        let ys: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let predict: Box<dyn Fn(&[f64]) -> usize> = match *self {
            ParamCell::Knn { k } => {
                let m = KnnClassifier::fit(xs, ys, KnnConfig { k })?;
                Box::new(move |q| m.classify(q))
            }
            ParamCell::Svm { c, gamma } => {
                let m = svm_train(&xs, &ys, &SvmConfig { c, gamma, ..Default::default() })?;
                Box::new(move |q| m.predict(q))
            }
        };
        if test.is_empty() {
            return Ok(0.0);
        }
        let correct = test.iter().filter(|&&i| predict(&features[i]) == labels[i]).count();
        Ok(correct as f64 / test.len() as f64)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellScore {
    pub cell: ParamCell,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ParamCell,
    pub best_index: usize,
    pub cells: Vec<CellScore>,
}

/// Scores every cell by mean held-out top-1 over the folds of `plan`. Ties
/// go to the earliest cell in `grid`.
pub fn grid_search(
    grid: &[ParamCell],
    features: &[Vec<f64>],
    labels: &[usize],
    plan: &FoldPlan,
    jobs: usize,
) -> Result<GridSearchResult, ClassicalError> {
    if grid.is_empty() {
        return Err(ClassicalError::InvalidConfig("empty parameter grid".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..plan.k).map(move |f| (c, f)))
        .collect();
    let results = par::map_indexed(tasks.len(), jobs, |t| {
        let (c, f) = tasks[t];
        let (train, test) = plan.split(f);
        grid[c].evaluate(features, labels, &train, &test)
    });
    let mut cells = Vec::with_capacity(grid.len());
    let mut it = results.into_iter();
    for &cell in grid {
        let fold_accuracy = (0..plan.k).map(|_| it.next().unwrap()).collect::<Result<Vec<_>, _>>()?;
        let mean_accuracy = fold_accuracy.iter().sum::<f64>() / plan.k as f64;
        cells.push(CellScore {
            cell,
            fold_accuracy,
            mean_accuracy,
        });
    }
    let mut best_index = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.mean_accuracy > cells[best_index].mean_accuracy {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        best: cells[best_index].cell,
        best_index,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub intra: f64,
    pub inter: f64,
}

/// Mean Euclidean distance over same-class pairs and over cross-class pairs.
pub fn class_distance_stats(features: &[Vec<f64>], labels: &[usize]) -> Result<DistanceStats, ClassicalError> {
    let (mut intra, mut n_intra) = (0.0, 0usize);
    let (mut inter, mut n_inter) = (0.0, 0usize);
    for i in 0..features.len() {
        for j in i + 1..features.len() {
            let d = squared_euclidean(&features[i], &features[j]).sqrt();
            if labels[i] == labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let inter = if n_inter > 0 { inter / n_inter as f64 } else { f64::NAN };
    if n_intra == 0 {
        return Err(ClassicalError::IntraClassUndefined { inter });
    }
    Ok(DistanceStats {
        intra: intra / n_intra as f64,
        inter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::stratified_kfold;

    #[test]
    fn distance_examples() {
        let s = class_distance_stats(&[vec![0.0], vec![2.0], vec![10.0], vec![12.0]], &[0, 0, 1, 1]).unwrap();
        assert!((s.intra - 2.0).abs() < 1e-12);
        assert!((s.inter - 10.0).abs() < 1e-12);
        match class_distance_stats(&[vec![0.0], vec![10.0]], &[0, 1]) {
            Err(ClassicalError::IntraClassUndefined { inter }) => assert_eq!(inter, 10.0),
            other => panic!("{other:?}"),
        }
    }

    fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for c in 0..3 {
            for k in 0..10 {
                x.push(vec![c as f64 * 5.0 + (k % 5) as f64 * 0.2, (k / 5) as f64 * 0.3]);
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn single_cell_and_tie_break() {
        let (x, y) = blobs();
        let plan = stratified_kfold(&y, 5, 0);
        let r = grid_search(&[ParamCell::Knn { k: 3 }], &x, &y, &plan, 1).unwrap();
        assert_eq!(r.best, ParamCell::Knn { k: 3 });
        // Both cells are perfect on well-separated blobs; the first wins.
        let grid = [ParamCell::Knn { k: 1 }, ParamCell::Knn { k: 3 }];
        let r = grid_search(&grid, &x, &y, &plan, 2).unwrap();
        assert_eq!(r.cells[0].mean_accuracy, 1.0);
        assert_eq!(r.cells[1].mean_accuracy, 1.0);
        assert_eq!(r.best_index, 0);
        let r = grid_search(&[ParamCell::Svm { c: 10.0, gamma: 0.5 }], &x, &y, &plan, 2).unwrap();
        assert_eq!(r.cells[0].fold_accuracy.len(), 5);
        assert!(grid_search(&[], &x, &y, &plan, 1).is_err());
    }
}
