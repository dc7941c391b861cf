//! Central finite-difference gradient checking.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::{NnError, Tensor};

/// Uniform `[-1, 1)` tensor.
pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces `v` to a scalar by a fixed random projection `Σ v·r`.
pub fn project(g: &mut Graph, v: Var, seed: u64) -> Result<Var, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let r = random_tensor(g.value(v).shape(), &mut rng);
    let rv = g.input(r);
    let p = g.mul(v, rv)?;
    Ok(g.sum(p))
}

/// Largest relative error `|a − n| / max(|a|, |n|, floor)` between analytic
/// and central-difference gradients of `build` w.r.t. every input element.
/// Each evaluation uses a fresh graph with the same `seed`, so dropout masks
/// are reproduced.
pub fn max_relative_error<F>(inputs: &[Tensor], training: bool, seed: u64, eps: f64, floor: f64, build: F) -> Result<f64, NnError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, NnError>,
{
    let run = |vals: &[Tensor], grad: bool| -> Result<(f64, Vec<Option<Tensor>>), NnError> {
        let mut g = Graph::new(training, seed);
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(Arc::new(t.clone()), grad)).collect();
        let loss = build(&mut g, &vars)?;
        let value = g.value(loss).data()[0];
        if !grad {
            return Ok((value, Vec::new()));
        }
        let mut grads = g.backward(loss)?;
        Ok((value, vars.iter().map(|&v| grads.take(v)).collect()))
    };
    let (_, analytic) = run(inputs, true)?;
    let mut worst: f64 = 0.0;
    let mut vals = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let orig = vals[i].data()[j];
            vals[i].data_mut()[j] = orig + eps;
            let (up, _) = run(&vals, false)?;
            vals[i].data_mut()[j] = orig - eps;
            let (down, _) = run(&vals, false)?;
            vals[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[i].as_ref().map_or(0.0, |t| t.data()[j]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}


/// Gradient check of every differentiable op at one of three shape
/// variants (`variant` in `0..3`). Returns `(op name, max relative error)`.
pub fn op_suite(seed: u64, variant: usize) -> Result<Vec<(&'static str, f64)>, NnError> {
    const EPS: f64 = 1e-4;
    const FLOOR: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(variant as u64));
    let (b, c, len, k) = [(1, 1, 7, 3), (2, 2, 9, 5), (3, 3, 6, 1)][variant % 3];
    let cout = [2, 3, 2][variant % 3];
    let feats = [4, 6, 3][variant % 3];
    let mut out = Vec::new();
    let mut check = |name: &'static str, inputs: Vec<Tensor>, training: bool, f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var, NnError>| -> Result<(), NnError> {
        out.push((name, max_relative_error(&inputs, training, seed, EPS, FLOOR, f)?));
        Ok(())
    };
    let r = &mut rng;
    check(
        "conv1d",
        vec![random_tensor(&[b, c, len], r), random_tensor(&[cout, c, k], r), random_tensor(&[cout], r)],
        false,
        &|g, v| {
            let y = g.conv1d(v[0], v[1], v[2])?;
            project(g, y, seed)
        },
    )?;
    check(
        "conv_transpose1d",
        vec![random_tensor(&[b, c, len], r), random_tensor(&[c, cout, 4], r), random_tensor(&[cout], r)],
        false,
        &|g, v| {
            let y = g.conv_transpose1d(v[0], v[1], v[2], 2, 1)?;
            project(g, y, seed)
        },
    )?;
    let m = [2, 3, 4][variant % 3];
    check("maxpool1d", vec![random_tensor(&[b, c, len], r)], false, &|g, v| {
        let y = g.maxpool1d(v[0], m)?;
        project(g, y, seed)
    })?;
    check(
        "dense",
        vec![random_tensor(&[b, feats], r), random_tensor(&[feats, cout], r), random_tensor(&[cout], r)],
        false,
        &|g, v| {
            let y = g.dense(v[0], v[1], v[2])?;
            project(g, y, seed)
        },
    )?;
    let x2 = random_tensor(&[b, feats], r);
    check("leaky_relu", vec![x2.clone()], false, &|g, v| {
        let y = g.leaky_relu(v[0], 0.01);
        project(g, y, seed)
    })?;
    check("relu", vec![x2.clone()], false, &|g, v| {
        let y = g.relu(v[0]);
        project(g, y, seed)
    })?;
    check("tanh", vec![x2.clone()], false, &|g, v| {
        let y = g.tanh(v[0]);
        project(g, y, seed)
    })?;
    check("dropout", vec![x2.clone()], true, &|g, v| {
        let y = g.dropout(v[0], 0.5);
        project(g, y, seed)
    })?;
    check("softmax", vec![x2.clone()], false, &|g, v| {
        let y = g.softmax(v[0]);
        project(g, y, seed)
    })?;
    check("log_softmax", vec![x2.clone()], false, &|g, v| {
        let y = g.log_softmax(v[0]);
        project(g, y, seed)
    })?;
    check("logsumexp_rows", vec![x2.clone()], false, &|g, v| {
        let y = g.logsumexp_rows(v[0])?;
        project(g, y, seed)
    })?;
    check("narrow", vec![x2.clone()], false, &|g, v| {
        let y = g.narrow(v[0], 1, feats - 1)?;
        project(g, y, seed)
    })?;
    check("reshape", vec![x2.clone()], false, &|g, v| {
        let y = g.reshape(v[0], vec![feats, b])?;
        project(g, y, seed)
    })?;
    check("affine", vec![x2.clone()], false, &|g, v| {
        let y = g.affine(v[0], 0.5, 0.5);
        project(g, y, seed)
    })?;
    let y2 = random_tensor(&[b, feats], r);
    check("add_sub_mul", vec![x2.clone(), y2.clone()], false, &|g, v| {
        let s = g.add(v[0], v[1])?;
        let d = g.sub(v[0], v[1])?;
        let p = g.mul(s, d)?;
        project(g, p, seed)
    })?;
    check("sum_mean_abs", vec![x2.clone()], false, &|g, v| {
        let sq = g.mul(v[0], v[0])?;
        let a = g.sum(sq);
        let m = g.mean(v[0]);
        let l1 = g.abs_sum(v[0]);
        let t = g.add(a, m)?;
        g.add(t, l1)
    })?;
    let targets: Vec<usize> = (0..b).map(|i| (i * 7 + variant) % feats).collect();
    let weights: Vec<f64> = (0..feats).map(|i| 0.5 + i as f64 * 0.25).collect();
    check("weighted_cross_entropy", vec![x2.clone()], false, &|g, v| {
        g.weighted_cross_entropy(v[0], &targets, &weights)
    })?;
    check("mse_sum", vec![x2.clone(), y2.clone()], false, &|g, v| g.mse(v[0], v[1], false))?;
    check("mse_mean", vec![x2.clone(), y2.clone()], false, &|g, v| g.mse(v[0], v[1], true))?;
    let pairs = [2, 3, 4][variant % 3];
    check("nt_xent", vec![random_tensor(&[2 * pairs, feats], r)], false, &|g, v| g.nt_xent(v[0], 0.5))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_wrong_gradient() {
        // tanh gradient is exact; the checker must report a tiny error.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&[5], &mut rng);
        let e = max_relative_error(&[x], false, 0, 1e-4, 1e-4, |g, v| {
            let y = g.tanh(v[0]);
            project(g, y, 1)
        })
        .unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn every_op_matches_finite_differences() {
        for variant in 0..3 {
            for (name, err) in op_suite(11, variant).unwrap() {
                assert!(err <= 1e-3, "{name} variant {variant}: {err}");
            }
        }
    }
}
