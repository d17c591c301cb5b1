//! Training objective and hand-rolled backward pass for the toy VAE.
//!
//! The per-item loss is mean per-token cross-entropy between the decoder
//! logits and the target tokens, plus `kl_weight · KL(q(z|x) ‖ N(0, I))`
//! with the reparameterization `z = μ + exp(½·logvar) ∘ ε`. Training is
//! plain full-batch gradient descent, no momentum, one fresh ε per item per
//! epoch. The returned parameters are the best snapshot under the
//! deterministic evaluation loss (ε = 0), so the loss after training never
//! exceeds the loss before.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{Latent, TokenSequence};

use super::{decode_forward, encode_forward, DecodeCache, EncodeCache, VaeParams, VaeWeights};

/// `KL(N(μ, diag exp(logvar)) ‖ N(0, I))`, summed over latent dimensions.
/// Non-negative, zero exactly at μ = 0, logvar = 0.
pub fn kl_divergence(mean: &[f64], logvar: &[f64]) -> f64 {
    mean.iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum()
}

/// Mean per-token cross-entropy of `logits` against `target`, with the
/// gradient `∂CE/∂logits` (softmax minus one-hot, divided by max_len).
fn ce_and_dlogits(
    max_len: usize,
    vocab: usize,
    logits: &[f64],
    target: &TokenSequence,
) -> (f64, Vec<f64>) {
    let inv_m = 1.0 / max_len as f64;
    let mut ce = 0.0;
    let mut dlogits = vec![0.0; logits.len()];
    for m in 0..max_len {
        let row = &logits[m * vocab..(m + 1) * vocab];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum_exp.ln();
        let t = target.padded()[m] as usize;
        ce += (lse - row[t]) * inv_m;
        for v in 0..vocab {
            let p = (row[v] - max).exp() / sum_exp;
            dlogits[m * vocab + v] = (p - f64::from(v == t)) * inv_m;
        }
    }
    (ce, dlogits)
}

/// Backward through the decoder given `∂loss/∂logits`; accumulates weight
/// gradients into `grads` and returns `∂loss/∂z`.
fn decode_backward(
    p: &VaeParams,
    z: &[f64],
    cache: &DecodeCache,
    dlogits: &[f64],
    grads: &mut VaeWeights,
) -> Vec<f64> {
    let d = &p.dims;
    let mv = d.max_len * d.vocab;
    let mut dh = vec![0.0; d.hidden];
    for (hi, hv) in cache.h.iter().enumerate() {
        let w_row = &p.w.dec_w2[hi * mv..(hi + 1) * mv];
        let g_row = &mut grads.dec_w2[hi * mv..(hi + 1) * mv];
        let mut acc = 0.0;
        for (j, dl) in dlogits.iter().enumerate() {
            g_row[j] += hv * dl;
            acc += w_row[j] * dl;
        }
        dh[hi] = acc;
    }
    for (g, dl) in grads.dec_b2.iter_mut().zip(dlogits) {
        *g += dl;
    }
    let mut dz = vec![0.0; d.latent];
    for hi in 0..d.hidden {
        let dpre = dh[hi] * (1.0 - cache.h[hi] * cache.h[hi]);
        grads.dec_b1[hi] += dpre;
        for (dd, zv) in z.iter().enumerate() {
            grads.dec_w1[dd * d.hidden + hi] += zv * dpre;
            dz[dd] += p.w.dec_w1[dd * d.hidden + hi] * dpre;
        }
    }
    dz
}

/// Backward through the encoder given `∂loss/∂μ` and `∂loss/∂logvar`;
/// accumulates weight gradients into `grads`.
pub(crate) fn encode_backward(
    p: &VaeParams,
    x: &TokenSequence,
    cache: &EncodeCache,
    dmu: &[f64],
    dlv: &[f64],
    grads: &mut VaeWeights,
) {
    let d = &p.dims;
    let mut dh = vec![0.0; d.hidden];
    for (hi, hv) in cache.h.iter().enumerate() {
        for dd in 0..d.latent {
            grads.mu_w[hi * d.latent + dd] += hv * dmu[dd];
            grads.lv_w[hi * d.latent + dd] += hv * dlv[dd];
            dh[hi] += p.w.mu_w[hi * d.latent + dd] * dmu[dd]
                + p.w.lv_w[hi * d.latent + dd] * dlv[dd];
        }
    }
    for (g, v) in grads.mu_b.iter_mut().zip(dmu) {
        *g += v;
    }
    for (g, v) in grads.lv_b.iter_mut().zip(dlv) {
        *g += v;
    }
    let mut dpooled = vec![0.0; d.embed];
    for (hi, hv) in cache.h.iter().enumerate() {
        let dpre = dh[hi] * (1.0 - hv * hv);
        grads.enc_b[hi] += dpre;
        for (e, pe) in cache.pooled.iter().enumerate() {
            grads.enc_w[e * d.hidden + hi] += pe * dpre;
            dpooled[e] += p.w.enc_w[e * d.hidden + hi] * dpre;
        }
    }
    let inv_m = 1.0 / d.max_len as f64;
    for &tok in x.padded() {
        let row = &mut grads.emb[tok as usize * d.embed..(tok as usize + 1) * d.embed];
        for (g, dp) in row.iter_mut().zip(&dpooled) {
            *g += dp * inv_m;
        }
    }
}

/// Loss of one item under fixed reparameterization noise `eps`.
pub fn elbo_item(p: &VaeParams, x: &TokenSequence, eps: &[f64], kl_weight: f64) -> f64 {
    let enc = encode_forward(p, x);
    let z: Vec<f64> = enc
        .mean
        .iter()
        .zip(&enc.logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    let dec = decode_forward(p, &z);
    let (ce, _) = ce_and_dlogits(p.dims.max_len, p.dims.vocab, &dec.logits, x);
    ce + kl_weight * kl_divergence(&enc.mean, &enc.logvar)
}

/// Loss and full parameter gradient of one item under fixed noise `eps`.
/// Gradients accumulate into `grads`; the return value is the loss.
pub fn elbo_item_backward(
    p: &VaeParams,
    x: &TokenSequence,
    eps: &[f64],
    kl_weight: f64,
    grads: &mut VaeWeights,
) -> f64 {
    let enc = encode_forward(p, x);
    let sigma: Vec<f64> = enc.logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
    let z: Vec<f64> = enc
        .mean
        .iter()
        .zip(&sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect();
    let dec = decode_forward(p, &z);
    let (ce, dlogits) = ce_and_dlogits(p.dims.max_len, p.dims.vocab, &dec.logits, x);
    let kl = kl_divergence(&enc.mean, &enc.logvar);

    let dz = decode_backward(p, &z, &dec, &dlogits, grads);
    let dmu: Vec<f64> = dz
        .iter()
        .zip(&enc.mean)
        .map(|(g, m)| g + kl_weight * m)
        .collect();
    let dlv: Vec<f64> = dz
        .iter()
        .zip(&sigma)
        .zip(eps)
        .zip(&enc.logvar)
        .map(|(((g, s), e), lv)| g * e * 0.5 * s + kl_weight * 0.5 * (lv.exp() - 1.0))
        .collect();
    encode_backward(p, x, &enc, &dmu, &dlv, grads);
    ce + kl_weight * kl
}

/// Convenience wrapper returning `(loss, grads)` for a single item.
pub fn elbo_item_grads(
    p: &VaeParams,
    x: &TokenSequence,
    eps: &[f64],
    kl_weight: f64,
) -> (f64, VaeWeights) {
    let mut grads = VaeWeights::zeros(&p.dims);
    let loss = elbo_item_backward(p, x, eps, kl_weight, &mut grads);
    (loss, grads)
}

/// Deterministic corpus loss: cross-entropy at the posterior mean (ε = 0)
/// plus the weighted KL term, averaged over items.
pub fn eval_loss(p: &VaeParams, corpus: &[TokenSequence], kl_weight: f64) -> f64 {
    let zeros = vec![0.0; p.dims.latent];
    corpus
        .iter()
        .map(|x| elbo_item(p, x, &zeros, kl_weight))
        .sum::<f64>()
        / corpus.len() as f64
}

/// Deterministic corpus reconstruction loss alone (ε = 0, no KL).
pub fn recon_loss(p: &VaeParams, corpus: &[TokenSequence]) -> f64 {
    eval_loss(p, corpus, 0.0)
}

/// Full-batch gradient descent on the reparameterized ELBO. Returns the
/// best parameters seen under [`eval_loss`], which is never worse than the
/// input parameters. Bit-reproducible for a fixed generator.
pub fn train_vae(
    params: &VaeParams,
    corpus: &[TokenSequence],
    epochs: usize,
    lr: f64,
    kl_weight: f64,
    rng: &mut ChaCha12Rng,
) -> Result<VaeParams> {
    if corpus.is_empty() {
        return Err(Error::Input("training corpus must be non-empty".into()));
    }
    if epochs == 0 {
        return Ok(params.clone());
    }
    let n = corpus.len() as f64;
    let mut cur = params.clone();
    let mut best = params.clone();
    let mut best_eval = eval_loss(&cur, corpus, kl_weight);
    let mut eps = vec![0.0; params.dims.latent];
    for epoch in 0..epochs {
        let mut grads = VaeWeights::zeros(&cur.dims);
        let mut batch_loss = 0.0;
        for x in corpus {
            for e in eps.iter_mut() {
                *e = rng.sample::<f64, _>(StandardNormal);
            }
            batch_loss += elbo_item_backward(&cur, x, &eps, kl_weight, &mut grads);
        }
        batch_loss /= n;
        if !batch_loss.is_finite() {
            return Err(Error::Training {
                step: epoch,
                what: format!("non-finite training loss {batch_loss}"),
            });
        }
        grads.scale(1.0 / n);
        cur.w.axpy(-lr, &grads);
        if !cur.w.is_finite() {
            return Err(Error::Training {
                step: epoch,
                what: "weights became non-finite after update".into(),
            });
        }
        let ev = eval_loss(&cur, corpus, kl_weight);
        if ev.is_finite() && ev < best_eval {
            best_eval = ev;
            best = cur.clone();
        }
    }
    Ok(best)
}

/// Gradient of the mean per-token cross-entropy between `decode_logits(z)`
/// and `target` with respect to `z` only (decoder weights frozen).
pub fn grad_wrt_latent(p: &VaeParams, z: &Latent, target: &TokenSequence) -> Latent {
    let dec = decode_forward(p, z.as_slice());
    let (_, dlogits) = ce_and_dlogits(p.dims.max_len, p.dims.vocab, &dec.logits, target);
    let mut scratch = VaeWeights::zeros(&p.dims);
    Latent(decode_backward(p, z.as_slice(), &dec, &dlogits, &mut scratch))
}
