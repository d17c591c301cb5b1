//! Numeric diagnostics: an empirical check of the surrogate-error bound and
//! the encoder-vs-decoder triplet surrogate comparison.
//!
//! The bound under test: for an anchor pair `(x, z)` with surrogate error
//! `c = |f(x) − m(z)|` and decode gap `γ = d_X(x, p(z))`, any `z'` within
//! Euclidean distance δ of `z` satisfies
//! `|f(p(z')) − m(z')| ≤ c + γ·L1 + δ·(L2 + L3)`
//! where `L1, L2, L3` are Lipschitz constants of `f`, `m`, and `f∘p`.
//! Empirical Lipschitz estimates are max difference quotients over sampled
//! pairs — lower bounds on the true constants — so a reported violation
//! means either an underestimated constant or a genuine local spike; the
//! report carries margins rather than claiming a proof.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::distance::normalized_levenshtein;
use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpHyperparams, GpModel};
use crate::inversion::{invert, InversionSettings};
use crate::types::{Latent, TokenSequence, Triplet};
use crate::vae::{decode_argmax, encode, VaeParams};

/// Empirical Lipschitz lower bound: the maximum difference quotient
/// `|f(a) − f(b)| / d(a, b)` over pairs with nonzero distance. Adding pairs
/// can only increase it.
pub fn estimate_lipschitz<P>(
    f: impl Fn(&P) -> f64,
    pairs: &[(P, P)],
    metric: impl Fn(&P, &P) -> f64,
) -> Result<f64> {
    let mut best: Option<f64> = None;
    for (a, b) in pairs {
        let d = metric(a, b);
        if d > 0.0 {
            let ratio = (f(a) - f(b)).abs() / d;
            best = Some(best.map_or(ratio, |cur| cur.max(ratio)));
        }
    }
    best.ok_or_else(|| Error::Estimation("all sampled pairs coincide".into()))
}

/// One tested point of a bound check.
#[derive(Debug, Clone)]
pub struct BoundSample {
    pub index: usize,
    pub dz: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub violated: bool,
}

/// Outcome of one [`check_bound`] run.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub c: f64,
    pub gamma: f64,
    pub delta: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub samples: usize,
    pub violation_rate: f64,
    pub min_margin: f64,
    pub mean_margin: f64,
    pub rows: Vec<BoundSample>,
}

impl BoundReport {
    /// Right-hand side of the bound at an arbitrary radius, with the
    /// estimates this report measured. Monotone in the radius.
    pub fn rhs_at(&self, delta: f64) -> f64 {
        self.c + self.gamma * self.l1 + delta * (self.l2 + self.l3)
    }
}

fn sample_in_ball(center: &Latent, radius: f64, rng: &mut ChaCha12Rng) -> Latent {
    let dim = center.dim();
    if radius == 0.0 {
        return center.clone();
    }
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
    Latent(
        center
            .as_slice()
            .iter()
            .zip(&dir)
            .map(|(c, d)| c + r * d / norm)
            .collect(),
    )
}

/// Empirically tests the bound around one anchor triplet: `c` and `γ` are
/// measured at the anchor, `L1..L3` estimated from `n_pairs` sampled pairs
/// in the radius-δ ball (constants whose multiplier is zero are skipped and
/// reported as 0), then `n_samples` points `z'` are tested. Deterministic
/// per generator state.
pub fn check_bound(
    vae: &VaeParams,
    gp: &GpModel,
    score_fn: &dyn Fn(&TokenSequence) -> f64,
    anchor: &Triplet,
    delta: f64,
    n_samples: usize,
    n_pairs: usize,
    rng: &mut ChaCha12Rng,
) -> Result<BoundReport> {
    let z = &anchor.z;
    let m_at = |q: &Latent| -> Result<f64> { Ok(gp.posterior(std::slice::from_ref(q))?.0[0]) };
    let composite = |q: &Latent| score_fn(&decode_argmax(vae, q));

    let c = (score_fn(&anchor.x) - m_at(z)?).abs();
    let gamma = normalized_levenshtein(&anchor.x, &decode_argmax(vae, z));

    // L1 over the input space: pairs of decoded sequences from the region,
    // seeded with the anchor's own (x, p(z)) pair when it is nonzero.
    let l1 = if gamma > 0.0 {
        let mut pairs: Vec<(TokenSequence, TokenSequence)> =
            vec![(anchor.x.clone(), decode_argmax(vae, z))];
        for _ in 0..n_pairs {
            let a = decode_argmax(vae, &sample_in_ball(z, delta, rng));
            let b = decode_argmax(vae, &sample_in_ball(z, delta, rng));
            pairs.push((a, b));
        }
        estimate_lipschitz(|s: &TokenSequence| score_fn(s), &pairs, |a, b| {
            normalized_levenshtein(a, b)
        })?
    } else {
        0.0
    };

    // L2 (posterior mean) and L3 (composite) over the latent ball.
    let (l2, l3) = if delta > 0.0 {
        let pairs: Vec<(Latent, Latent)> = (0..n_pairs)
            .map(|_| (sample_in_ball(z, delta, rng), sample_in_ball(z, delta, rng)))
            .collect();
        let l2 = estimate_lipschitz(
            |q: &Latent| m_at(q).expect("posterior evaluation"),
            &pairs,
            |a, b| a.distance(b),
        )?;
        let l3 = estimate_lipschitz(composite, &pairs, |a, b| a.distance(b))?;
        (l2, l3)
    } else {
        (0.0, 0.0)
    };

    let rhs = c + gamma * l1 + delta * (l2 + l3);
    let mut rows = Vec::with_capacity(n_samples);
    let mut violations = 0usize;
    let mut min_margin = f64::INFINITY;
    let mut margin_sum = 0.0;
    for index in 0..n_samples {
        let zp = sample_in_ball(z, delta, rng);
        let lhs = (composite(&zp) - m_at(&zp)?).abs();
        let margin = rhs - lhs;
        let violated = lhs > rhs + 1e-12;
        if violated {
            violations += 1;
        }
        min_margin = min_margin.min(margin);
        margin_sum += margin;
        rows.push(BoundSample {
            index,
            dz: z.distance(&zp),
            lhs,
            rhs,
            margin,
            violated,
        });
    }
    Ok(BoundReport {
        c,
        gamma,
        delta,
        l1,
        l2,
        l3,
        samples: n_samples,
        violation_rate: violations as f64 / n_samples.max(1) as f64,
        min_margin,
        mean_margin: margin_sum / n_samples.max(1) as f64,
        rows,
    })
}

/// Per-sample CSV of a bound report.
pub fn bound_csv(report: &BoundReport) -> String {
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.index,
                crate::output::fmt_f64(r.dz),
                crate::output::fmt_f64(r.lhs),
                crate::output::fmt_f64(r.rhs),
                crate::output::fmt_f64(r.margin),
                r.violated
            )
        })
        .collect();
    crate::output::csv_document("sample_index,dz,lhs,rhs,margin,violated", &rows)
}

/// Human-readable summary block of a bound report.
pub fn bound_summary(report: &BoundReport) -> String {
    format!(
        "bound check: c={:.6} gamma={:.6} delta={:.6}\n\
         lipschitz estimates (lower bounds): L1={:.6} L2={:.6} L3={:.6}\n\
         samples={} violation_rate={:.4} min_margin={:.6} mean_margin={:.6}\n",
        report.c,
        report.gamma,
        report.delta,
        report.l1,
        report.l2,
        report.l3,
        report.samples,
        report.violation_rate,
        report.min_margin,
        report.mean_margin
    )
}

/// Train/test RMSE of surrogates built from encoder triplets vs decoder
/// (inversion) triplets.
#[derive(Debug, Clone)]
pub struct FitComparison {
    pub encoder_train_rmse: f64,
    pub encoder_test_rmse: f64,
    pub decoder_train_rmse: f64,
    pub decoder_test_rmse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl FitComparison {
    pub fn text(&self) -> String {
        format!(
            "surrogate fit comparison ({} train / {} test)\n\
             encoder triplets: train_rmse={:.6} test_rmse={:.6}\n\
             decoder triplets: train_rmse={:.6} test_rmse={:.6}\n",
            self.n_train,
            self.n_test,
            self.encoder_train_rmse,
            self.encoder_test_rmse,
            self.decoder_train_rmse,
            self.decoder_test_rmse
        )
    }

    pub fn csv(&self) -> String {
        crate::output::csv_document(
            "triplets,train_rmse,test_rmse",
            &[
                format!(
                    "encoder,{},{}",
                    crate::output::fmt_f64(self.encoder_train_rmse),
                    crate::output::fmt_f64(self.encoder_test_rmse)
                ),
                format!(
                    "decoder,{},{}",
                    crate::output::fmt_f64(self.decoder_train_rmse),
                    crate::output::fmt_f64(self.decoder_test_rmse)
                ),
            ],
        )
    }
}

fn rmse_against_composite(
    gp: &GpModel,
    zs: &[Latent],
    vae: &VaeParams,
    score_fn: &dyn Fn(&TokenSequence) -> f64,
) -> Result<f64> {
    let (means, _) = gp.posterior(zs)?;
    let mut sq = 0.0;
    for (m, z) in means.iter().zip(zs) {
        let truth = score_fn(&decode_argmax(vae, z));
        sq += (m - truth) * (m - truth);
    }
    Ok((sq / zs.len() as f64).sqrt())
}

/// Fits one GP on encoder triplets and one on decoder (inversion) triplets
/// of the same scored sequences, then reports each surrogate's RMSE against
/// the true composite value `f(p(z))` at its own train and held-out query
/// latents. The dataset is shuffled with `rng`, the first `n_train` points
/// train, the rest test.
#[allow(clippy::too_many_arguments)]
pub fn surrogate_fit_comparison(
    vae: &VaeParams,
    dataset: &[(TokenSequence, f64)],
    n_train: usize,
    score_fn: &dyn Fn(&TokenSequence) -> f64,
    inversion: &InversionSettings,
    gp_fit_steps: usize,
    gp_fit_lr: f64,
    rng: &mut ChaCha12Rng,
) -> Result<FitComparison> {
    if n_train < 2 {
        return Err(Error::Input("fit comparison needs at least 2 training points".into()));
    }
    if dataset.len() <= n_train {
        return Err(Error::Input(format!(
            "fit comparison needs held-out points: dataset {} <= n_train {n_train}",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let latent_dim = vae.dims.latent;
    let mut enc_z = Vec::with_capacity(dataset.len());
    let mut inv_z = Vec::with_capacity(dataset.len());
    let mut ys = Vec::with_capacity(dataset.len());
    for &i in &order {
        let (x, y) = &dataset[i];
        enc_z.push(encode(vae, x).0);
        inv_z.push(invert(vae, x, inversion)?.z_inv);
        ys.push(*y);
    }
    let init = GpHyperparams::isotropic(latent_dim, 1.0, 1.0, 0.01);
    let gp_enc = fit_gp(&enc_z[..n_train], &ys[..n_train], &init, gp_fit_steps, gp_fit_lr)?;
    let gp_dec = fit_gp(&inv_z[..n_train], &ys[..n_train], &init, gp_fit_steps, gp_fit_lr)?;
    Ok(FitComparison {
        encoder_train_rmse: rmse_against_composite(&gp_enc, &enc_z[..n_train], vae, score_fn)?,
        encoder_test_rmse: rmse_against_composite(&gp_enc, &enc_z[n_train..], vae, score_fn)?,
        decoder_train_rmse: rmse_against_composite(&gp_dec, &inv_z[..n_train], vae, score_fn)?,
        decoder_test_rmse: rmse_against_composite(&gp_dec, &inv_z[n_train..], vae, score_fn)?,
        n_train,
        n_test: dataset.len() - n_train,
    })
}
