//! Per-layer forward/backward math. Each forward returns the output plus a
//! cache holding exactly what its backward needs. Reductions accumulate in
//! f64 before casting back to f32 storage.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) const BN_EPS: f64 = 1e-3;
pub(crate) const BN_MOMENTUM: f64 = 0.99;
/// Probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] in the loss and
/// its gradient, which also keeps output-layer gradients away from exact zero.
pub(crate) const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Dense { input: Tensor },
    Conv { input: Tensor },
    MaxPool { in_shape: Vec<usize>, argmax: Vec<usize> },
    GlobalAvg { in_shape: Vec<usize> },
    BatchNorm { xhat: Vec<f32>, inv_std: Vec<f64> },
    Dropout { mask: Option<Tensor> },
    Activation { pre: Tensor },
    Softmax { probs: Vec<f64> },
    Noop,
}

fn dims4(x: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, h, w, c] => Ok((n, h, w, c)),
        ref s => Err(Error::shape(format!("expected rank-4 input, got {s:?}"))),
    }
}

pub(crate) fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(Tensor, LayerCache)> {
    let mut y = x.matmul(w)?;
    let units = b.len();
    let bias = b.data();
    for (i, v) in y.data_mut().iter_mut().enumerate() {
        *v += bias[i % units];
    }
    Ok((y, LayerCache::Dense { input: x.clone() }))
}

pub(crate) fn dense_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let dw = x.transpose2()?.matmul(dy)?;
    let dx = dy.matmul(&w.transpose2()?)?;
    let units = dy.shape()[1];
    let mut db = vec![0.0f64; units];
    for (i, &g) in dy.data().iter().enumerate() {
        db[i % units] += g as f64;
    }
    let db = Tensor::new(vec![units], db.into_iter().map(|v| v as f32).collect())?;
    Ok((dw, db, dx))
}

pub(crate) fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(Tensor, LayerCache)> {
    let (n, h, wd, ci) = dims4(x)?;
    let k = w.shape()[0];
    let f = w.shape()[3];
    if w.shape()[2] != ci {
        return Err(Error::shape(format!(
            "conv weights expect {} input channels, input has {ci}",
            w.shape()[2]
        )));
    }
    if h < k || wd < k {
        return Err(Error::shape(format!(
            "conv kernel {k} does not fit {h}x{wd} input"
        )));
    }
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let xd = x.data();
    let wv = w.data();
    let bd = b.data();
    let mut out = vec![0.0f32; n * oh * ow * f];
    for i in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for fi in 0..f {
                    let mut acc = bd[fi] as f64;
                    for ky in 0..k {
                        for kx in 0..k {
                            for c in 0..ci {
                                let xv = xd[((i * h + oy + ky) * wd + ox + kx) * ci + c];
                                let wgt = wv[((ky * k + kx) * ci + c) * f + fi];
                                acc += xv as f64 * wgt as f64;
                            }
                        }
                    }
                    out[((i * oh + oy) * ow + ox) * f + fi] = acc as f32;
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![n, oh, ow, f], out)?,
        LayerCache::Conv { input: x.clone() },
    ))
}

pub(crate) fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, h, wd, ci) = dims4(x)?;
    let k = w.shape()[0];
    let f = w.shape()[3];
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let xd = x.data();
    let wv = w.data();
    let gd = dy.data();
    let mut dw = vec![0.0f64; w.len()];
    let mut db = vec![0.0f64; f];
    let mut dx = vec![0.0f64; x.len()];
    for i in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for fi in 0..f {
                    let g = gd[((i * oh + oy) * ow + ox) * f + fi] as f64;
                    db[fi] += g;
                    for ky in 0..k {
                        for kx in 0..k {
                            for c in 0..ci {
                                let xi = ((i * h + oy + ky) * wd + ox + kx) * ci + c;
                                let wi = ((ky * k + kx) * ci + c) * f + fi;
                                dw[wi] += xd[xi] as f64 * g;
                                dx[xi] += wv[wi] as f64 * g;
                            }
                        }
                    }
                }
            }
        }
    }
    let cast = |v: Vec<f64>| v.into_iter().map(|e| e as f32).collect::<Vec<f32>>();
    Ok((
        Tensor::new(w.shape().to_vec(), cast(dw))?,
        Tensor::new(vec![f], cast(db))?,
        Tensor::new(x.shape().to_vec(), cast(dx))?,
    ))
}

pub(crate) fn maxpool_forward(x: &Tensor, window: usize) -> Result<(Tensor, LayerCache)> {
    let (n, h, wd, c) = dims4(x)?;
    if window == 0 || window > h || window > wd {
        return Err(Error::shape(format!(
            "pool window {window} does not fit {h}x{wd} input"
        )));
    }
    let (oh, ow) = ((h - window) / window + 1, (wd - window) / window + 1);
    let xd = x.data();
    let mut out = vec![0.0f32; n * oh * ow * c];
    let mut argmax = vec![0usize; out.len()];
    for i in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for ky in 0..window {
                        for kx in 0..window {
                            let xi =
                                ((i * h + oy * window + ky) * wd + ox * window + kx) * c + ch;
                            // Strict > keeps the first of tied maxima.
                            if xd[xi] > best {
                                best = xd[xi];
                                best_idx = xi;
                            }
                        }
                    }
                    let oi = ((i * oh + oy) * ow + ox) * c + ch;
                    out[oi] = best;
                    argmax[oi] = best_idx;
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![n, oh, ow, c], out)?,
        LayerCache::MaxPool {
            in_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

pub(crate) fn maxpool_backward(
    in_shape: &[usize],
    argmax: &[usize],
    dy: &Tensor,
) -> Result<Tensor> {
    let len = in_shape.iter().product();
    let mut dx = vec![0.0f32; len];
    for (oi, &xi) in argmax.iter().enumerate() {
        dx[xi] += dy.data()[oi];
    }
    Tensor::new(in_shape.to_vec(), dx)
}

pub(crate) fn gap_forward(x: &Tensor) -> Result<(Tensor, LayerCache)> {
    let (n, h, wd, c) = dims4(x)?;
    let hw = (h * wd) as f64;
    let xd = x.data();
    let mut out = vec![0.0f32; n * c];
    for i in 0..n {
        for ch in 0..c {
            let mut acc = 0.0f64;
            for y in 0..h {
                for xx in 0..wd {
                    acc += xd[((i * h + y) * wd + xx) * c + ch] as f64;
                }
            }
            out[i * c + ch] = (acc / hw) as f32;
        }
    }
    Ok((
        Tensor::new(vec![n, c], out)?,
        LayerCache::GlobalAvg {
            in_shape: x.shape().to_vec(),
        },
    ))
}

pub(crate) fn gap_backward(in_shape: &[usize], dy: &Tensor) -> Result<Tensor> {
    let (n, h, wd, c) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let hw = (h * wd) as f64;
    let mut dx = vec![0.0f32; n * h * wd * c];
    for i in 0..n {
        for ch in 0..c {
            let g = (dy.data()[i * c + ch] as f64 / hw) as f32;
            for y in 0..h {
                for xx in 0..wd {
                    dx[((i * h + y) * wd + xx) * c + ch] = g;
                }
            }
        }
    }
    Tensor::new(in_shape.to_vec(), dx)
}

/// Training-mode batch normalization over the trailing (feature/channel)
/// axis, with biased batch variance. Running statistics update in place:
/// `r = momentum * r + (1 - momentum) * batch_stat`.
pub(crate) fn batchnorm_forward_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut [f32],
    running_var: &mut [f32],
) -> Result<(Tensor, LayerCache)> {
    let f = gamma.len();
    let len = x.len();
    let n_eff = (len / f) as f64;
    let xd = x.data();
    let mut mean = vec![0.0f64; f];
    for (i, &v) in xd.iter().enumerate() {
        mean[i % f] += v as f64;
    }
    for m in &mut mean {
        *m /= n_eff;
    }
    let mut var = vec![0.0f64; f];
    for (i, &v) in xd.iter().enumerate() {
        let d = v as f64 - mean[i % f];
        var[i % f] += d * d;
    }
    for v in &mut var {
        *v /= n_eff;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0f32; len];
    let mut y = vec![0.0f32; len];
    for (i, &v) in xd.iter().enumerate() {
        let j = i % f;
        let h = ((v as f64 - mean[j]) * inv_std[j]) as f32;
        xhat[i] = h;
        y[i] = gamma.data()[j] * h + beta.data()[j];
    }
    for j in 0..f {
        running_mean[j] =
            (BN_MOMENTUM * running_mean[j] as f64 + (1.0 - BN_MOMENTUM) * mean[j]) as f32;
        running_var[j] =
            (BN_MOMENTUM * running_var[j] as f64 + (1.0 - BN_MOMENTUM) * var[j]) as f32;
    }
    Ok((
        Tensor::new(x.shape().to_vec(), y)?,
        LayerCache::BatchNorm { xhat, inv_std },
    ))
}

pub(crate) fn batchnorm_forward_infer(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &[f32],
    running_var: &[f32],
) -> Result<Tensor> {
    let f = gamma.len();
    let y = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let j = i % f;
            let inv = 1.0 / (running_var[j] as f64 + BN_EPS).sqrt();
            (gamma.data()[j] as f64 * ((v as f64 - running_mean[j] as f64) * inv)
                + beta.data()[j] as f64) as f32
        })
        .collect();
    Tensor::new(x.shape().to_vec(), y)
}

/// Gradient through training-mode batch normalization, differentiating
/// through the batch statistics themselves.
pub(crate) fn batchnorm_backward(
    dy: &Tensor,
    gamma: &Tensor,
    xhat: &[f32],
    inv_std: &[f64],
) -> Result<(Tensor, Tensor, Tensor)> {
    let f = gamma.len();
    let n_eff = (dy.len() / f) as f64;
    let gd = dy.data();
    let mut sum_dy = vec![0.0f64; f];
    let mut sum_dy_xhat = vec![0.0f64; f];
    for (i, &g) in gd.iter().enumerate() {
        let j = i % f;
        sum_dy[j] += g as f64;
        sum_dy_xhat[j] += g as f64 * xhat[i] as f64;
    }
    let mut dx = vec![0.0f32; dy.len()];
    for (i, &g) in gd.iter().enumerate() {
        let j = i % f;
        dx[i] = (gamma.data()[j] as f64
            * inv_std[j]
            * (g as f64 - sum_dy[j] / n_eff - xhat[i] as f64 * sum_dy_xhat[j] / n_eff))
            as f32;
    }
    let dgamma = Tensor::new(vec![f], sum_dy_xhat.iter().map(|&v| v as f32).collect())?;
    let dbeta = Tensor::new(vec![f], sum_dy.iter().map(|&v| v as f32).collect())?;
    Ok((dgamma, dbeta, Tensor::new(dy.shape().to_vec(), dx)?))
}

/// Inverted dropout: kept values scale by 1/(1-rate) so expected activations
/// match inference; rate 0 is exactly the identity (no RNG draws).
pub(crate) fn dropout_forward_train(
    x: &Tensor,
    rate: f32,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, LayerCache)> {
    if rate == 0.0 {
        return Ok((x.clone(), LayerCache::Dropout { mask: None }));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mask_data: Vec<f32> = (0..x.len())
        .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { keep_scale })
        .collect();
    let mask = Tensor::new(x.shape().to_vec(), mask_data)?;
    let y = x.hadamard(&mask)?;
    Ok((y, LayerCache::Dropout { mask: Some(mask) }))
}

/// Row-wise numerically stable softmax; probabilities are computed in f64
/// and cached for the loss gradient.
pub(crate) fn softmax_forward(z: &Tensor) -> Result<(Tensor, LayerCache)> {
    if z.rank() != 2 {
        return Err(Error::shape(format!(
            "softmax expects rank-2 logits, got {:?}",
            z.shape()
        )));
    }
    let (n, k) = (z.shape()[0], z.shape()[1]);
    let zd = z.data();
    let mut probs = vec![0.0f64; n * k];
    for i in 0..n {
        let row = &zd[i * k..(i + 1) * k];
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
        let mut sum = 0.0f64;
        for (j, &v) in row.iter().enumerate() {
            let e = ((v as f64) - m).exp();
            probs[i * k + j] = e;
            sum += e;
        }
        for j in 0..k {
            probs[i * k + j] /= sum;
        }
    }
    let out: Vec<f32> = probs.iter().map(|&p| p as f32).collect();
    Ok((
        Tensor::new(vec![n, k], out)?,
        LayerCache::Softmax { probs },
    ))
}

/// Mean cross-entropy over the batch plus the gradient with respect to the
/// softmax logits, `(clamp(p) - y) / n`. Clamping the probabilities in both
/// places keeps the loss finite and the logit gradient strictly nonzero.
pub(crate) fn softmax_ce_backward(probs: &[f64], targets: &Tensor) -> Result<(f64, Tensor)> {
    let (n, k) = (targets.shape()[0], targets.shape()[1]);
    if probs.len() != n * k {
        return Err(Error::shape(format!(
            "{} cached probabilities for {n}x{k} targets",
            probs.len()
        )));
    }
    let mut loss = 0.0f64;
    let mut dz = vec![0.0f32; n * k];
    for i in 0..n {
        for j in 0..k {
            let y = targets.data()[i * k + j] as f64;
            let p = probs[i * k + j].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y != 0.0 {
                loss -= y * p.ln();
            }
            dz[i * k + j] = ((p - y) / n as f64) as f32;
        }
    }
    Ok((loss / n as f64, Tensor::new(vec![n, k], dz)?))
}

/// Same clamped mean cross-entropy, computed from an f32 probability tensor.
/// Used by finite-difference checks that only need loss values.
pub(crate) fn cross_entropy_from_probs(probs: &Tensor, targets: &Tensor) -> Result<f64> {
    if probs.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "probability shape {:?} vs target shape {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    let n = probs.shape()[0];
    let mut loss = 0.0f64;
    for (i, &y) in targets.data().iter().enumerate() {
        if y != 0.0 {
            let p = (probs.data()[i] as f64).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            loss -= y as f64 * p.ln();
        }
    }
    Ok(loss / n as f64)
}
