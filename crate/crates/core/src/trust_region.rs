//! Trust-region geometry and side-length scheduling.
//!
//! One box-shaped region is kept around a chosen anchor. Its side length `L`
//! doubles (capped at `L_max`) after `τ_succ` consecutive improvements,
//! halves after `τ_fail` consecutive failures, and restarts at `L_init`
//! whenever it falls below `L_min`. Counters reset on every trigger and on
//! every direction flip, so the state machine is a pure function of the
//! update stream.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::types::Latent;

/// Schedule constants: `L_min < L_init ≤ L_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionConfig {
    pub l_init: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub tau_succ: u32,
    pub tau_fail: u32,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            l_init: 0.8,
            l_min: 0.008,
            l_max: 1.6,
            tau_succ: 3,
            tau_fail: 10,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l_min > 0.0
            && self.l_min < self.l_init
            && self.l_init <= self.l_max
            && self.tau_succ >= 1
            && self.tau_fail >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "trust region requires 0 < l_min < l_init <= l_max and taus >= 1".into(),
            ))
        }
    }
}

/// Current side length plus the success/failure streak counters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionState {
    pub side_length: f64,
    pub succ_count: u32,
    pub fail_count: u32,
    pub config: TrustRegionConfig,
}

impl TrustRegionState {
    pub fn new(config: TrustRegionConfig) -> Result<Self> {
        config.validate()?;
        Ok(TrustRegionState {
            side_length: config.l_init,
            succ_count: 0,
            fail_count: 0,
            config,
        })
    }
}

/// Advances the schedule one step. Pure: replays over the same stream are
/// bit-identical.
pub fn update_schedule(state: &TrustRegionState, improved: bool) -> TrustRegionState {
    let mut next = state.clone();
    if improved {
        next.succ_count += 1;
        next.fail_count = 0;
        if next.succ_count >= next.config.tau_succ {
            next.side_length = (2.0 * next.side_length).min(next.config.l_max);
            next.succ_count = 0;
        }
    } else {
        next.fail_count += 1;
        next.succ_count = 0;
        if next.fail_count >= next.config.tau_fail {
            next.side_length *= 0.5;
            next.fail_count = 0;
            if next.side_length < next.config.l_min {
                next.side_length = next.config.l_init;
            }
        }
    }
    next
}

/// How per-dimension half-widths follow the kernel lengthscales.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionGeometry {
    /// Half-width `L/2` in every dimension.
    Isotropic,
    /// Half-width `(L/2) · ℓ_d / mean(ℓ)`: region volume tracks `L` while
    /// stretching along dimensions the kernel considers flat.
    ArdWeighted,
}

/// An axis-aligned box, `lower ≤ upper` elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    /// The symmetric box `[-half_width, half_width]^dim`.
    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        BoxBounds {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &Latent) -> bool {
        p.as_slice()
            .iter()
            .enumerate()
            .all(|(d, v)| *v >= self.lower[d] && *v <= self.upper[d])
    }

    pub fn center(&self) -> Latent {
        Latent(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
        )
    }
}

/// The trust-region box around `anchor` for the current side length,
/// clipped to the global search box. Anchors outside the global box are
/// projected onto it first (inverted latents may drift out), so the result
/// always satisfies `lower ≤ upper`.
pub fn region_bounds(
    anchor: &Latent,
    state: &TrustRegionState,
    lengthscales: &[f64],
    geometry: RegionGeometry,
    global: &BoxBounds,
) -> BoxBounds {
    let dim = anchor.dim();
    assert_eq!(lengthscales.len(), dim, "lengthscale vector matches anchor dimension");
    assert_eq!(global.dim(), dim, "global box matches anchor dimension");
    let half = 0.5 * state.side_length;
    let mean_l = lengthscales.iter().sum::<f64>() / dim as f64;
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    for d in 0..dim {
        let w = match geometry {
            RegionGeometry::Isotropic => half,
            RegionGeometry::ArdWeighted => half * lengthscales[d] / mean_l,
        };
        let center = anchor[d].clamp(global.lower[d], global.upper[d]);
        lower.push((center - w).max(global.lower[d]));
        upper.push((center + w).min(global.upper[d]));
    }
    BoxBounds { lower, upper }
}

/// `n_cand` points uniform in the box; deterministic given the generator.
pub fn sample_candidates(bounds: &BoxBounds, n_cand: usize, rng: &mut ChaCha12Rng) -> Vec<Latent> {
    let dim = bounds.dim();
    (0..n_cand)
        .map(|_| {
            Latent(
                (0..dim)
                    .map(|d| {
                        let (lo, hi) = (bounds.lower[d], bounds.upper[d]);
                        lo + rng.gen::<f64>() * (hi - lo)
                    })
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn state(l: f64, tau_succ: u32, tau_fail: u32) -> TrustRegionState {
        TrustRegionState {
            side_length: l,
            succ_count: 0,
            fail_count: 0,
            config: TrustRegionConfig {
                l_init: 0.8,
                l_min: 0.008,
                l_max: 1.6,
                tau_succ,
                tau_fail,
            },
        }
    }

    #[test]
    fn three_successes_double_up_to_cap() {
        let mut s = state(0.8, 3, 10);
        for _ in 0..3 {
            s = update_schedule(&s, true);
        }
        assert_eq!(s.side_length, 1.6);
        assert_eq!(s.succ_count, 0);
        // Further successes stay capped at L_max.
        for _ in 0..3 {
            s = update_schedule(&s, true);
        }
        assert_eq!(s.side_length, 1.6);
    }

    #[test]
    fn halving_below_min_restarts_at_init() {
        let mut s = state(0.012, 3, 2);
        s = update_schedule(&s, false);
        s = update_schedule(&s, false);
        // 0.012 / 2 = 0.006 < l_min = 0.008 -> restart at l_init.
        assert_eq!(s.side_length, 0.8);
        assert_eq!(s.fail_count, 0);
    }

    #[test]
    fn alternating_outcomes_never_change_length() {
        let mut s = state(0.8, 3, 10);
        for i in 0..1000 {
            s = update_schedule(&s, i % 2 == 0);
            assert_eq!(s.side_length, 0.8);
        }
    }

    #[test]
    fn counters_stay_strictly_below_taus() {
        let mut rng = seed::rng(1, "tr", 0);
        let mut s = state(0.8, 3, 10);
        for _ in 0..10_000 {
            s = update_schedule(&s, rand::Rng::gen_bool(&mut rng, 0.4));
            assert!(s.succ_count < s.config.tau_succ);
            assert!(s.fail_count < s.config.tau_fail);
            assert!(s.side_length > 0.0 && s.side_length <= s.config.l_max);
        }
    }

    #[test]
    fn isotropic_unit_region_is_half_box() {
        let s = state(1.0, 3, 10);
        let global = BoxBounds::symmetric(3, 10.0);
        let b = region_bounds(
            &Latent::zeros(3),
            &s,
            &[1.0, 1.0, 1.0],
            RegionGeometry::Isotropic,
            &global,
        );
        assert_eq!(b.lower, vec![-0.5; 3]);
        assert_eq!(b.upper, vec![0.5; 3]);
    }

    #[test]
    fn ard_half_widths_follow_stated_formula() {
        let s = state(1.0, 3, 10);
        let global = BoxBounds::symmetric(2, 10.0);
        let b = region_bounds(
            &Latent::zeros(2),
            &s,
            &[2.0, 1.0],
            RegionGeometry::ArdWeighted,
            &global,
        );
        assert!((b.upper[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.upper[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_length_region_collapses_to_anchor() {
        let mut s = state(1.0, 3, 10);
        s.side_length = 0.0;
        let global = BoxBounds::symmetric(2, 10.0);
        let anchor = Latent(vec![0.3, -0.7]);
        let b = region_bounds(&anchor, &s, &[1.0, 1.0], RegionGeometry::Isotropic, &global);
        assert_eq!(b.lower, anchor.as_slice());
        assert_eq!(b.upper, anchor.as_slice());
        let cands = sample_candidates(&b, 5, &mut seed::rng(2, "tr", 0));
        for c in cands {
            assert_eq!(c.as_slice(), anchor.as_slice());
        }
    }

    #[test]
    fn bounds_clip_to_global_box() {
        let s = state(1.0, 3, 10);
        let global = BoxBounds::symmetric(1, 1.0);
        let b = region_bounds(
            &Latent(vec![0.9]),
            &s,
            &[1.0],
            RegionGeometry::Isotropic,
            &global,
        );
        assert_eq!(b.upper[0], 1.0);
        assert!((b.lower[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn candidates_lie_inside_and_hit_box_center_on_average() {
        let bounds = BoxBounds {
            lower: vec![-1.0, 2.0],
            upper: vec![3.0, 2.5],
        };
        let mut rng = seed::rng(3, "tr", 0);
        let n = 10_000;
        let cands = sample_candidates(&bounds, n, &mut rng);
        assert_eq!(cands.len(), n);
        let mut mean = [0.0; 2];
        for c in &cands {
            assert!(bounds.contains(c));
            mean[0] += c[0];
            mean[1] += c[1];
        }
        for d in 0..2 {
            mean[d] /= n as f64;
            let width = bounds.upper[d] - bounds.lower[d];
            let center = 0.5 * (bounds.lower[d] + bounds.upper[d]);
            // SE of a uniform mean is width / sqrt(12 n).
            let se = width / (12.0 * n as f64).sqrt();
            assert!(
                (mean[d] - center).abs() < 3.0 * se,
                "dim {d}: mean {} vs center {center} (se {se})",
                mean[d]
            );
        }
        assert!(sample_candidates(&bounds, 0, &mut rng).is_empty());
    }
}
