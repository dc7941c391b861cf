//! RBF-kernel soft-margin SVM trained by sequential minimal optimization,
//! extended to multiclass by one-vs-one voting.

use serde::{Deserialize, Serialize};

use super::knn::squared_euclidean;
use super::ClassicalError;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: f64,
    /// KKT violation tolerance (maximal violating pair gap).
    pub tol: f64,
    /// Iteration cap per binary problem.
    pub max_iter: usize,
    /// Turn a hit cap into [`ClassicalError::SolverIterationCapExceeded`]
    /// instead of keeping the current iterate.
    pub fail_on_cap: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 10.0,
            gamma: 0.01,
            tol: 1e-3,
            max_iter: 100_000,
            fail_on_cap: false,
        }
    }
}

/// Solution of one binary dual problem.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `min ½ αᵀQα − Σα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`, `Q = yyᵀ∘K`, using
/// second-order working-set selection.
pub fn smo_solve(kernel: &[Vec<f64>], y: &[f64], c: f64, tol: f64, max_iter: usize) -> BinarySolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let qd: Vec<f64> = (0..n).map(|i| kernel[i][i]).collect();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i][j];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = if y[t] > 0.0 {
                (alpha[t] < c).then_some(-grad[t])
            } else {
                (alpha[t] > 0.0).then_some(grad[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };

        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let (in_low, g) = if y[t] > 0.0 {
                (alpha[t] > 0.0, grad[t])
            } else {
                (alpha[t] < c, -grad[t])
            };
            if !in_low {
                continue;
            }
            let diff = gmax + g;
            if g >= gmax2 {
                gmax2 = g;
            }
            if diff > 0.0 {
                let mut quad = qd[i] + qd[t] - 2.0 * y[i] * q(i, t) * y[t] * y[t];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = Some(t);
                }
            }
        }
        let j = match j_sel {
            Some(j) if gmax + gmax2 >= tol => j,
            _ => {
                converged = true;
                break;
            }
        };
        iterations += 1;

        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = qd[i] + qd[j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for k in 0..n {
            grad[k] += q(i, k) * dai + q(j, k) * daj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    BinarySolution {
        alpha,
        rho,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairModel {
    class_a: usize,
    class_b: usize,
    /// `(support index, α·y)`; `y = +1` for `class_a`.
    coef: Vec<(usize, f64)>,
    rho: f64,
    converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    gamma: f64,
    support: Vec<Vec<f64>>,
    pairs: Vec<PairModel>,
    pub unconverged_pairs: usize,
}

impl SvmModel {
    fn kernel_row(&self, x: &[f64]) -> Vec<f64> {
        self.support
            .iter()
            .map(|s| (-self.gamma * squared_euclidean(s, x)).exp())
            .collect()
    }

    /// Decision value of the binary problem `(a, b)`; positive favours `a`.
    pub fn decision(&self, x: &[f64], a: usize, b: usize) -> Option<f64> {
        let k = self.kernel_row(x);
        self.pairs
            .iter()
            .find(|p| p.class_a == a && p.class_b == b)
            .map(|p| p.coef.iter().map(|&(s, c)| c * k[s]).sum::<f64>() - p.rho)
    }

    /// Pairwise voting; ties go to the smallest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let k = self.kernel_row(x);
        let mut votes: Vec<(usize, usize)> = Vec::new();
        for p in &self.pairs {
            let f = p.coef.iter().map(|&(s, c)| c * k[s]).sum::<f64>() - p.rho;
            let winner = if f > 0.0 { p.class_a } else { p.class_b };
            match votes.iter_mut().find(|v| v.0 == winner) {
                Some(v) => v.1 += 1,
                None => votes.push((winner, 1)),
            }
        }
        votes.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        votes[0].0
    }

    pub fn num_support(&self) -> usize {
        self.support.len()
    }
}

pub fn svm_train(features: &[Vec<f64>], labels: &[usize], cfg: &SvmConfig) -> Result<SvmModel, ClassicalError> {
    if !(cfg.c > 0.0) || !(cfg.gamma > 0.0) {
        return Err(ClassicalError::InvalidConfig("C and gamma must be positive".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ClassicalError::SingleClassInput);
    }
    let n = features.len();
    let gram: Vec<Vec<f64>> = {
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            g[i][i] = 1.0;
            for j in 0..i {
                let v = (-cfg.gamma * squared_euclidean(&features[i], &features[j])).exp();
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        g
    };

    let mut support_of = vec![usize::MAX; n];
    let mut support = Vec::new();
    let mut pairs = Vec::new();
    let mut unconverged = 0;
    for (ai, &a) in classes.iter().enumerate() {
        for &b in &classes[ai + 1..] {
            let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            let k: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| gram[i][j]).collect()).collect();
            let sol = smo_solve(&k, &y, cfg.c, cfg.tol, cfg.max_iter);
            if !sol.converged {
                if cfg.fail_on_cap {
                    return Err(ClassicalError::SolverIterationCapExceeded { class_a: a, class_b: b });
                }
                log::warn!("SVM pair ({a},{b}) hit the {} iteration cap", cfg.max_iter);
                unconverged += 1;
            }
            let mut coef = Vec::new();
            for (local, &global) in idx.iter().enumerate() {
                if sol.alpha[local] > 0.0 {
                    if support_of[global] == usize::MAX {
                        support_of[global] = support.len();
                        support.push(features[global].clone());
                    }
                    coef.push((support_of[global], sol.alpha[local] * y[local]));
                }
            }
            pairs.push(PairModel {
                class_a: a,
                class_b: b,
                coef,
                rho: sol.rho,
                converged: sol.converged,
            });
        }
    }
    Ok(SvmModel {
        gamma: cfg.gamma,
        support,
        pairs,
        unconverged_pairs: unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
        (-gamma * squared_euclidean(a, b)).exp()
    }

    /// Independent oracle: projected gradient ascent on the dual. Projection
    /// onto {0 ≤ α ≤ C, yᵀα = 0} bisects on the equality multiplier.
    fn dual_oracle(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> (Vec<f64>, f64) {
        let n = x.len();
        let q: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| y[i] * y[j] * rbf(&x[i], &x[j], gamma)).collect())
            .collect();
        let project = |v: &[f64]| -> Vec<f64> {
            let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
            let g = |mu: f64| at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>();
            let (mut lo, mut hi) = (-1e3, 1e3);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            at(0.5 * (lo + hi))
        };
        let mut a = vec![0.0; n];
        for _ in 0..20_000 {
            let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).collect();
            let step: Vec<f64> = a.iter().zip(&grad).map(|(ai, gi)| ai + 0.05 * gi).collect();
            a = project(&step);
        }
        // Bias from free vectors: y_i f(x_i) = 1.
        let free: Vec<usize> = (0..n).filter(|&i| a[i] > 1e-6 && a[i] < c - 1e-6).collect();
        let b = free
            .iter()
            .map(|&i| y[i] - (0..n).map(|j| a[j] * y[j] * rbf(&x[j], &x[i], gamma)).sum::<f64>())
            .sum::<f64>()
            / free.len().max(1) as f64;
        (a, b)
    }

    #[test]
    fn separable_1d() {
        let x = vec![vec![0.0], vec![10.0]];
        for c in [1.0, 10.0, 100.0] {
            let m = svm_train(&x, &[0, 1], &SvmConfig { c, gamma: 0.01, ..Default::default() }).unwrap();
            assert_eq!(m.predict(&[0.0]), 0);
            assert_eq!(m.predict(&[10.0]), 1);
        }
    }

    #[test]
    fn xor_matches_dual_oracle() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let labels = [0, 0, 1, 1];
        let y: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
        let (alpha_ref, b_ref) = dual_oracle(&x, &y, 10.0, 1.0);
        let cfg = SvmConfig { c: 10.0, gamma: 1.0, tol: 1e-8, ..Default::default() };
        let m = svm_train(&x, &labels, &cfg).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert_eq!(m.predict(xi), labels[i]);
            let f_ref = (0..4).map(|j| alpha_ref[j] * y[j] * rbf(&x[j], xi, 1.0)).sum::<f64>() + b_ref;
            let f = m.decision(xi, 0, 1).unwrap();
            assert!((f - f_ref).abs() < 1e-4, "point {i}: {f} vs {f_ref}");
        }
        let sol = smo_solve(
            &x.iter().map(|a| x.iter().map(|b| rbf(a, b, 1.0)).collect()).collect::<Vec<_>>(),
            &y,
            10.0,
            1e-8,
            10_000,
        );
        for (a, r) in sol.alpha.iter().zip(&alpha_ref) {
            assert!((a - r).abs() < 1e-4, "{:?} vs {:?}", sol.alpha, alpha_ref);
        }
    }

    #[test]
    fn conflicting_duplicates_terminate_with_training_error() {
        let x = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![5.0, 5.0]];
        let labels = [0, 1, 1];
        let cfg = SvmConfig { c: 1.0, gamma: 0.5, max_iter: 1000, ..Default::default() };
        let m = svm_train(&x, &labels, &cfg).unwrap();
        let errors = x.iter().zip(labels).filter(|(xi, l)| m.predict(xi) != *l).count();
        assert!(errors > 0);
    }

    #[test]
    fn cap_reported_when_requested() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let cfg = SvmConfig { max_iter: 1, fail_on_cap: true, gamma: 1.0, ..Default::default() };
        assert!(matches!(
            svm_train(&x, &labels, &cfg),
            Err(ClassicalError::SolverIterationCapExceeded { .. })
        ));
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            svm_train(&[vec![0.0], vec![1.0]], &[3, 3], &SvmConfig::default()),
            Err(ClassicalError::SingleClassInput)
        ));
    }

    #[test]
    fn multiclass_and_permutation_invariance() {
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for k in 0..6 {
                x.push(vec![c as f64 * 4.0 + (k as f64) * 0.1, (k % 2) as f64 * 0.3]);
                labels.push(c);
            }
        }
        let cfg = SvmConfig { gamma: 0.5, tol: 1e-8, ..Default::default() };
        let m = svm_train(&x, &labels, &cfg).unwrap();
        for (xi, &l) in x.iter().zip(&labels) {
            assert_eq!(m.predict(xi), l);
        }
        let perm: Vec<usize> = (0..x.len()).rev().collect();
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let mp = svm_train(&xp, &lp, &cfg).unwrap();
        for q in [vec![2.0, 0.1], vec![5.5, 0.0], vec![9.0, 0.2]] {
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                let d1 = m.decision(&q, a, b).unwrap();
                let d2 = mp.decision(&q, a, b).unwrap();
                assert!((d1 - d2).abs() < 1e-5, "{d1} vs {d2}");
            }
        }
    }
}
