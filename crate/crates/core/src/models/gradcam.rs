use std::fmt::Write as _;
use std::sync::Arc;

use super::{last_conv_stop, logits_stop, ModelError};
use crate::nn::{Graph, Sequential, Tensor, Var};

/// Class-activation curve for one spectrum: channel weights are the
/// position-averaged gradients of the target logit w.r.t. the last conv
/// activation `A`; the curve is `ReLU(Σ_k w_k A_k)`, linearly upsampled to
/// the input length and scaled so its maximum is 1 (all-zero stays zero).
pub fn gradcam(net: &Sequential, x: &[f64], target: usize) -> Result<Vec<f64>, ModelError> {
    let act_stop = last_conv_stop(net).ok_or(ModelError::NoConvLayer)?;
    let stop = logits_stop(net);
    let len = x.len();
    let mut g = Graph::new(false, 0);
    let bound: Vec<Var> = net.params().iter().map(|p| g.leaf(Arc::clone(&p.value), true)).collect();
    let xv = g.input(Tensor::new(vec![1, 1, len], x.to_vec())?);
    let trace = net.forward_trace(&mut g, xv, &bound, stop)?;
    let logits = *trace.last().unwrap();
    let classes = g.value(logits).shape()[1];
    if target >= classes {
        return Err(ModelError::InvalidConfig(format!("target class {target} of {classes}")));
    }
    let a = trace[act_stop - 1];
    let picked = g.narrow(logits, target, 1)?;
    let score = g.sum(picked);
    let grads = g.backward(score)?;
    let (k, la) = (g.value(a).shape()[1], g.value(a).shape()[2]);
    let act = g.value(a).data();
    let zero = Tensor::zeros(g.value(a).shape());
    let da = grads.get(a).unwrap_or(&zero).data();
    let mut cam = vec![0.0; la];
    for c in 0..k {
        let w = da[c * la..(c + 1) * la].iter().sum::<f64>() / la as f64;
        for (t, v) in cam.iter_mut().enumerate() {
            *v += w * act[c * la + t];
        }
    }
    for v in &mut cam {
        *v = v.max(0.0);
    }
    let mut curve = upsample_linear(&cam, len);
    let mx = curve.iter().cloned().fold(0.0, f64::max);
    if mx > 0.0 {
        for v in &mut curve {
            *v /= mx;
        }
    }
    Ok(curve)
}

/// Half-pixel-centred linear interpolation from `src.len()` to `n` samples.
fn upsample_linear(src: &[f64], n: usize) -> Vec<f64> {
    if src.len() == n {
        return src.to_vec();
    }
    let scale = src.len() as f64 / n as f64;
    (0..n)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src.len() - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src.len() - 1);
            let f = pos - lo as f64;
            src[lo] * (1.0 - f) + src[hi] * f
        })
        .collect()
}

/// Two whitespace-separated columns: shift and importance.
pub fn gradcam_export_text(shifts: &[f64], curve: &[f64]) -> String {
    let mut out = String::from("# shift_cm-1\timportance\n");
    for (s, v) in shifts.iter().zip(curve) {
        let _ = writeln!(out, "{s}\t{v:.6}");
    }
    out
}
