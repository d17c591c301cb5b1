//! A minimal token-sequence VAE with hand-rolled differentiation.
//!
//! Encoder: token embedding, mean-pool over positions, one tanh hidden
//! layer, affine mean and log-variance heads. Decoder: one tanh hidden
//! layer from the latent, affine map to `max_len × vocab` logits. Weights
//! init uniform in `±1/√fan_in`, biases at zero. Everything is plain `f64`
//! slices so the backward pass (in [`train`]) stays auditable end to end.
//!
//! Mean-pooling makes the encoder blind to token order; the decoder is not.
//! That asymmetry is deliberate: it gives the encoder a realistic failure
//! mode (distinct sequences with equal token multisets collide) which latent
//! inversion can recover from while plain encoding cannot.

mod train;

pub use train::{
    elbo_item, elbo_item_grads, eval_loss, grad_wrt_latent, kl_divergence, recon_loss, train_vae,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Latent, TokenSequence};

/// Model shape: vocabulary size (incl. pad), padded sequence length, latent
/// width, hidden width, embedding width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeDims {
    pub vocab: usize,
    pub max_len: usize,
    pub latent: usize,
    pub hidden: usize,
    pub embed: usize,
}

impl VaeDims {
    pub fn with_vocab(vocab: usize, max_len: usize) -> Self {
        VaeDims {
            vocab,
            max_len,
            latent: 8,
            hidden: 64,
            embed: 64,
        }
    }

    fn logits_len(&self) -> usize {
        self.max_len * self.vocab
    }
}

/// All weight tensors, stored row-major as flat `f64` vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeWeights {
    /// vocab × embed
    pub emb: Vec<f64>,
    /// embed × hidden
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    /// hidden × latent
    pub mu_w: Vec<f64>,
    pub mu_b: Vec<f64>,
    /// hidden × latent
    pub lv_w: Vec<f64>,
    pub lv_b: Vec<f64>,
    /// latent × hidden
    pub dec_w1: Vec<f64>,
    pub dec_b1: Vec<f64>,
    /// hidden × (max_len · vocab)
    pub dec_w2: Vec<f64>,
    pub dec_b2: Vec<f64>,
}

impl VaeWeights {
    pub fn zeros(d: &VaeDims) -> Self {
        VaeWeights {
            emb: vec![0.0; d.vocab * d.embed],
            enc_w: vec![0.0; d.embed * d.hidden],
            enc_b: vec![0.0; d.hidden],
            mu_w: vec![0.0; d.hidden * d.latent],
            mu_b: vec![0.0; d.latent],
            lv_w: vec![0.0; d.hidden * d.latent],
            lv_b: vec![0.0; d.latent],
            dec_w1: vec![0.0; d.latent * d.hidden],
            dec_b1: vec![0.0; d.hidden],
            dec_w2: vec![0.0; d.hidden * d.logits_len()],
            dec_b2: vec![0.0; d.logits_len()],
        }
    }

    fn tensors(&self) -> [&Vec<f64>; 11] {
        [
            &self.emb, &self.enc_w, &self.enc_b, &self.mu_w, &self.mu_b, &self.lv_w, &self.lv_b,
            &self.dec_w1, &self.dec_b1, &self.dec_w2, &self.dec_b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 11] {
        [
            &mut self.emb, &mut self.enc_w, &mut self.enc_b, &mut self.mu_w, &mut self.mu_b,
            &mut self.lv_w, &mut self.lv_b, &mut self.dec_w1, &mut self.dec_b1, &mut self.dec_w2,
            &mut self.dec_b2,
        ]
    }

    /// All weights as one flat vector (fixed tensor order).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    /// Inverse of [`to_flat`]; panics if the length does not match.
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat weight vector length mismatch");
    }

    /// In-place `self += scale * other`, tensor by tensor.
    pub fn axpy(&mut self, scale: f64, other: &VaeWeights) {
        let others = other.tensors();
        for (t, o) in self.tensors_mut().into_iter().zip(others) {
            for (a, b) in t.iter_mut().zip(o) {
                *a += scale * b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for a in t.iter_mut() {
                *a *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Encoder/decoder parameters plus their shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    pub dims: VaeDims,
    pub w: VaeWeights,
}

/// Fresh parameters: weights uniform in `±1/√fan_in`, biases zero.
pub fn init_params(dims: VaeDims, rng: &mut ChaCha12Rng) -> VaeParams {
    let mut w = VaeWeights::zeros(&dims);
    let mut fill = |t: &mut Vec<f64>, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in t.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
    };
    fill(&mut w.emb, dims.embed);
    fill(&mut w.enc_w, dims.embed);
    fill(&mut w.mu_w, dims.hidden);
    fill(&mut w.lv_w, dims.hidden);
    fill(&mut w.dec_w1, dims.latent);
    fill(&mut w.dec_w2, dims.hidden);
    VaeParams { dims, w }
}

/// Intermediate encoder activations kept for the backward pass.
pub(crate) struct EncodeCache {
    pub pooled: Vec<f64>,
    pub h: Vec<f64>,
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

pub(crate) fn encode_forward(p: &VaeParams, x: &TokenSequence) -> EncodeCache {
    let d = &p.dims;
    debug_assert_eq!(x.max_len(), d.max_len);
    let mut pooled = vec![0.0; d.embed];
    for &tok in x.padded() {
        let row = &p.w.emb[tok as usize * d.embed..(tok as usize + 1) * d.embed];
        for (acc, v) in pooled.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let inv_m = 1.0 / d.max_len as f64;
    for acc in pooled.iter_mut() {
        *acc *= inv_m;
    }
    let mut h = vec![0.0; d.hidden];
    for (hi, hv) in h.iter_mut().enumerate() {
        let mut pre = p.w.enc_b[hi];
        for (e, pe) in pooled.iter().enumerate() {
            pre += pe * p.w.enc_w[e * d.hidden + hi];
        }
        *hv = pre.tanh();
    }
    let mut mean = p.w.mu_b.clone();
    let mut logvar = p.w.lv_b.clone();
    for (hi, hv) in h.iter().enumerate() {
        for dd in 0..d.latent {
            mean[dd] += hv * p.w.mu_w[hi * d.latent + dd];
            logvar[dd] += hv * p.w.lv_w[hi * d.latent + dd];
        }
    }
    EncodeCache {
        pooled,
        h,
        mean,
        logvar,
    }
}

/// Deterministic encoder pass: posterior mean and log-variance of `q(z|x)`.
pub fn encode(p: &VaeParams, x: &TokenSequence) -> (Latent, Latent) {
    let c = encode_forward(p, x);
    (Latent(c.mean), Latent(c.logvar))
}

/// Intermediate decoder activations kept for the backward pass.
pub(crate) struct DecodeCache {
    pub h: Vec<f64>,
    pub logits: Vec<f64>,
}

pub(crate) fn decode_forward(p: &VaeParams, z: &[f64]) -> DecodeCache {
    let d = &p.dims;
    debug_assert_eq!(z.len(), d.latent);
    let mut h = vec![0.0; d.hidden];
    for (hi, hv) in h.iter_mut().enumerate() {
        let mut pre = p.w.dec_b1[hi];
        for (dd, zv) in z.iter().enumerate() {
            pre += zv * p.w.dec_w1[dd * d.hidden + hi];
        }
        *hv = pre.tanh();
    }
    let mv = d.logits_len();
    let mut logits = p.w.dec_b2.clone();
    for (hi, hv) in h.iter().enumerate() {
        let row = &p.w.dec_w2[hi * mv..(hi + 1) * mv];
        for (l, wv) in logits.iter_mut().zip(row) {
            *l += hv * wv;
        }
    }
    DecodeCache { h, logits }
}

/// Unnormalized per-position token logits as a `max_len × vocab` matrix.
pub fn decode_logits(p: &VaeParams, z: &Latent) -> DMatrix<f64> {
    let c = decode_forward(p, z.as_slice());
    DMatrix::from_fn(p.dims.max_len, p.dims.vocab, |m, v| c.logits[m * p.dims.vocab + v])
}

/// The discrete decode `p_θ(z)`: per-position argmax over logits, ties to
/// the lowest token id, tail after the first pad canonicalized.
pub fn decode_argmax(p: &VaeParams, z: &Latent) -> TokenSequence {
    let c = decode_forward(p, z.as_slice());
    let d = &p.dims;
    let mut grid = Vec::with_capacity(d.max_len);
    for m in 0..d.max_len {
        let row = &c.logits[m * d.vocab..(m + 1) * d.vocab];
        let mut best = 0usize;
        for (v, l) in row.iter().enumerate().skip(1) {
            if *l > row[best] {
                best = v;
            }
        }
        grid.push(best as u16);
    }
    TokenSequence::from_padded_grid(&grid)
}

const CHECKPOINT_FORMAT: &str = "toy-seq-vae";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dims: VaeDims,
    weights: VaeWeights,
}

/// Serializes parameters to the versioned JSON checkpoint format.
pub fn checkpoint_to_string(p: &VaeParams) -> String {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        dims: p.dims,
        weights: p.w.clone(),
    };
    serde_json::to_string(&file).expect("checkpoint serialization cannot fail")
}

/// Parses and validates a checkpoint produced by [`checkpoint_to_string`].
pub fn checkpoint_from_str(text: &str) -> Result<VaeParams> {
    let file: CheckpointFile = serde_json::from_str(text)
        .map_err(|e| Error::Input(format!("malformed checkpoint: {e}")))?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::Input(format!(
            "unsupported checkpoint format {}/{} (expected {}/{})",
            file.format, file.version, CHECKPOINT_FORMAT, CHECKPOINT_VERSION
        )));
    }
    let params = VaeParams {
        dims: file.dims,
        w: file.weights,
    };
    let expect = VaeWeights::zeros(&params.dims);
    for (have, want) in params.w.tensors().iter().zip(expect.tensors()) {
        if have.len() != want.len() {
            return Err(Error::Input("checkpoint tensor shapes inconsistent with dims".into()));
        }
    }
    if !params.w.is_finite() {
        return Err(Error::Input("checkpoint contains non-finite weights".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(p: &VaeParams, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(p)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<VaeParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn tiny_dims() -> VaeDims {
        VaeDims {
            vocab: 5,
            max_len: 4,
            latent: 3,
            hidden: 6,
            embed: 4,
        }
    }

    fn seq(tokens: &[u16]) -> TokenSequence {
        TokenSequence::from_unpadded(tokens, 4, 5).unwrap()
    }

    #[test]
    fn zero_weights_encode_to_bias_vectors() {
        let dims = tiny_dims();
        let mut p = VaeParams {
            dims,
            w: VaeWeights::zeros(&dims),
        };
        p.w.mu_b = vec![0.3, -0.1, 0.7];
        p.w.lv_b = vec![-0.5, 0.2, 0.0];
        let (mean, logvar) = encode(&p, &seq(&[1, 2]));
        assert_eq!(mean.as_slice(), &[0.3, -0.1, 0.7]);
        assert_eq!(logvar.as_slice(), &[-0.5, 0.2, 0.0]);
    }

    #[test]
    fn encode_is_deterministic() {
        let dims = tiny_dims();
        let p = init_params(dims, &mut seed::rng(1, "vae", 0));
        let x = seq(&[2, 3, 1]);
        let (m1, v1) = encode(&p, &x);
        let (m2, v2) = encode(&p, &x);
        assert_eq!(m1, m2);
        assert_eq!(v1, v2);
    }

    #[test]
    fn zero_weights_decode_to_output_bias() {
        let dims = tiny_dims();
        let mut p = VaeParams {
            dims,
            w: VaeWeights::zeros(&dims),
        };
        for (i, b) in p.w.dec_b2.iter_mut().enumerate() {
            *b = i as f64 * 0.01;
        }
        let logits = decode_logits(&p, &Latent(vec![0.4, -0.2, 1.0]));
        for m in 0..dims.max_len {
            for v in 0..dims.vocab {
                assert_eq!(logits[(m, v)], (m * dims.vocab + v) as f64 * 0.01);
            }
        }
    }

    #[test]
    fn identical_latents_give_identical_logit_rows() {
        let dims = tiny_dims();
        let p = init_params(dims, &mut seed::rng(2, "vae", 0));
        let z = Latent(vec![0.1, 0.2, -0.3]);
        assert_eq!(decode_logits(&p, &z), decode_logits(&p, &z.clone()));
    }

    #[test]
    fn argmax_picks_strict_maxima_and_breaks_ties_low() {
        let dims = tiny_dims();
        let mut p = VaeParams {
            dims,
            w: VaeWeights::zeros(&dims),
        };
        // Position 0: token 3 wins. Position 1: token 1 wins. Position 2:
        // all equal -> pad (token 0) wins by tie-break, truncating there.
        p.w.dec_b2[3] = 5.0;
        p.w.dec_b2[dims.vocab + 1] = 2.0;
        let x = decode_argmax(&p, &Latent(vec![0.0; 3]));
        assert_eq!(x.unpadded(), &[3, 1]);

        // All-equal logits everywhere -> all-pad sequence.
        let q = VaeParams {
            dims,
            w: VaeWeights::zeros(&dims),
        };
        let x = decode_argmax(&q, &Latent(vec![0.0; 3]));
        assert!(x.is_empty());
    }

    #[test]
    fn argmax_invariant_to_per_position_logit_shift() {
        let dims = tiny_dims();
        let p = init_params(dims, &mut seed::rng(3, "vae", 0));
        let z = Latent(vec![0.5, -0.5, 0.25]);
        let base = decode_argmax(&p, &z);
        let mut shifted = p.clone();
        for m in 0..dims.max_len {
            for v in 0..dims.vocab {
                shifted.w.dec_b2[m * dims.vocab + v] += (m as f64 + 1.0) * 3.7;
            }
        }
        // The shift must be applied post-hidden-layer to stay a pure logit
        // shift; with zero hidden contribution this holds exactly only for
        // the bias, so compare through the bias route.
        let with_shift = decode_argmax(&shifted, &z);
        assert_eq!(base, with_shift);
    }

    #[test]
    fn checkpoint_round_trips_and_validates() {
        let dims = tiny_dims();
        let p = init_params(dims, &mut seed::rng(4, "vae", 0));
        let text = checkpoint_to_string(&p);
        let q = checkpoint_from_str(&text).unwrap();
        assert_eq!(p, q);
        assert!(checkpoint_from_str("{}").is_err());
        let bad = text.replace("\"version\":1", "\"version\":9");
        assert!(checkpoint_from_str(&bad).is_err());
    }
}
