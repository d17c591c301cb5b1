//! Trust-region anchor selection.
//!
//! The potential-aware policy scores every candidate anchor by what a
//! Thompson draw says the region around it could still reach: for anchor i,
//! draw one joint sample from the GP posterior over `n_cand` points in the
//! region centered at its latent and keep the maximum (`α_pot`). Potential
//! scores are min-max rescaled to the observed score range
//! (`α_scaled = (α_pot − A_min)/(A_max − A_min) · (Y_max − Y_min)`), and the
//! final anchor score is `s = y + α_scaled`. Baseline policies (objective,
//! acquisition, random) are provided for comparison.
//!
//! Region scoring is read-only over the fitted GP and uses one derived seed
//! stream per region, so distinct regions may be scored concurrently without
//! affecting the result.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::seed;
use crate::trust_region::{region_bounds, sample_candidates, BoxBounds, RegionGeometry, TrustRegionState};
use crate::types::Latent;

/// Which anchor the engine centers the trust region on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorPolicy {
    /// Potential-aware: argmax of `y + α_scaled`.
    Pas,
    /// Incumbent best: argmax of `y`.
    Objective,
    /// Acquisition only: argmax of `α_pot`.
    Acquisition,
    /// Uniformly random anchor.
    Random,
}

impl std::str::FromStr for AnchorPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pas" => Ok(AnchorPolicy::Pas),
            "objective" => Ok(AnchorPolicy::Objective),
            "acquisition" => Ok(AnchorPolicy::Acquisition),
            "random" => Ok(AnchorPolicy::Random),
            other => Err(Error::Config(format!(
                "anchor_policy '{other}' is not one of pas|objective|acquisition|random"
            ))),
        }
    }
}

impl std::fmt::Display for AnchorPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AnchorPolicy::Pas => "pas",
            AnchorPolicy::Objective => "objective",
            AnchorPolicy::Acquisition => "acquisition",
            AnchorPolicy::Random => "random",
        };
        f.write_str(s)
    }
}

/// Per-anchor score breakdown.
#[derive(Debug, Clone)]
pub struct AnchorScores {
    pub y: Vec<f64>,
    pub alpha_pot: Vec<f64>,
    pub alpha_scaled: Vec<f64>,
    pub s: Vec<f64>,
}

/// Potential score of each candidate anchor: the maximum of one joint
/// Thompson draw over `n_cand` points in the trust region centered at it.
/// Each region uses its own seed stream derived from `base_seed`.
pub fn potential_scores(
    anchors: &[Latent],
    model: &GpModel,
    tr: &TrustRegionState,
    geometry: RegionGeometry,
    global: &BoxBounds,
    n_cand: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    if anchors.is_empty() {
        return Err(Error::Input("potential scoring needs at least one anchor".into()));
    }
    let lengthscales = &model.hyperparams().lengthscales;
    anchors
        .iter()
        .enumerate()
        .map(|(i, anchor)| {
            let mut rng = seed::rng(base_seed, "region", i as u64);
            let bounds = region_bounds(anchor, tr, lengthscales, geometry, global);
            let cands = sample_candidates(&bounds, n_cand, &mut rng);
            let draw = model.thompson_sample(&cands, &mut rng)?;
            Ok(draw
                .values
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

/// Min-max rescaling of potential scores onto the observed score range.
/// Degenerate ranges (all potentials equal, or all observations equal) map
/// to zero, reducing the final score to the objective value alone.
pub fn scale_scores(alpha_pot: &[f64], y: &[f64]) -> Vec<f64> {
    let a_min = alpha_pot.iter().copied().fold(f64::INFINITY, f64::min);
    let a_max = alpha_pot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if a_max == a_min || y_max == y_min {
        return vec![0.0; alpha_pot.len()];
    }
    alpha_pot
        .iter()
        .map(|a| (a - a_min) / (a_max - a_min) * (y_max - y_min))
        .collect()
}

/// Elementwise final anchor scores `s_i = y_i + α_scaled_i`.
pub fn final_scores(y: &[f64], alpha_scaled: &[f64]) -> Vec<f64> {
    y.iter().zip(alpha_scaled).map(|(a, b)| a + b).collect()
}

/// Index of the maximum, ties broken by lowest index.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Full potential-aware score breakdown for a candidate anchor set.
pub fn score_anchors(
    anchors: &[Latent],
    ys: &[f64],
    model: &GpModel,
    tr: &TrustRegionState,
    geometry: RegionGeometry,
    global: &BoxBounds,
    n_cand: usize,
    base_seed: u64,
) -> Result<AnchorScores> {
    let alpha_pot = potential_scores(anchors, model, tr, geometry, global, n_cand, base_seed)?;
    let alpha_scaled = scale_scores(&alpha_pot, ys);
    let s = final_scores(ys, &alpha_scaled);
    Ok(AnchorScores {
        y: ys.to_vec(),
        alpha_pot,
        alpha_scaled,
        s,
    })
}

/// Selects the anchor index under the given policy. Deterministic for a
/// given generator state; ties break to the lowest index.
#[allow(clippy::too_many_arguments)]
pub fn select_anchor(
    anchors: &[Latent],
    ys: &[f64],
    model: &GpModel,
    tr: &TrustRegionState,
    geometry: RegionGeometry,
    global: &BoxBounds,
    policy: AnchorPolicy,
    n_cand: usize,
    rng: &mut ChaCha12Rng,
) -> Result<usize> {
    if anchors.is_empty() || anchors.len() != ys.len() {
        return Err(Error::Input("anchor selection needs matching non-empty anchors and scores".into()));
    }
    match policy {
        AnchorPolicy::Objective => Ok(argmax_first(ys)),
        AnchorPolicy::Random => Ok(rng.gen_range(0..anchors.len())),
        AnchorPolicy::Acquisition => {
            let base_seed = rng.gen::<u64>();
            let pot = potential_scores(anchors, model, tr, geometry, global, n_cand, base_seed)?;
            Ok(argmax_first(&pot))
        }
        AnchorPolicy::Pas => {
            let base_seed = rng.gen::<u64>();
            let scores =
                score_anchors(anchors, ys, model, tr, geometry, global, n_cand, base_seed)?;
            Ok(argmax_first(&scores.s))
        }
    }
}
