//! Pure continuous trust-region Bayesian optimization on the Ackley
//! function: no generative model, the search space is the input space.
//!
//! Used to compare plain incumbent-anchored search (`turbo`) against
//! potential-aware anchor selection (`turbo_pas`) under shared seeds: both
//! policies draw the same initial design and differ only in how the trust
//! region anchor is chosen. Ackley is a minimization task; internally the
//! loop maximizes its negation.

use rand::Rng;

use crate::anchor::{argmax_first, select_anchor, AnchorPolicy};
use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpHyperparams};
use crate::seed;
use crate::tasks::{ackley, MeteredOracle, ACKLEY_INPUT_BOUND};
use crate::trust_region::{
    region_bounds, sample_candidates, BoxBounds, RegionGeometry, TrustRegionConfig,
    TrustRegionState,
};
use crate::types::Latent;

/// Anchor policy of the continuous benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchPolicy {
    /// Anchor at the incumbent best point.
    Turbo,
    /// Potential-aware anchor selection over the top-k points.
    TurboPas,
}

impl std::str::FromStr for BenchPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "turbo" => Ok(BenchPolicy::Turbo),
            "turbo_pas" => Ok(BenchPolicy::TurboPas),
            other => Err(Error::Config(format!(
                "policy '{other}' is not one of turbo|turbo_pas"
            ))),
        }
    }
}

impl std::fmt::Display for BenchPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchPolicy::Turbo => "turbo",
            BenchPolicy::TurboPas => "turbo_pas",
        })
    }
}

/// Knobs of one continuous benchmark run.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dim: usize,
    pub budget: u64,
    pub n_init: usize,
    pub n_query: usize,
    pub seed: u64,
    pub policy: BenchPolicy,
    /// Candidate count for Thompson draws (queries and region scoring).
    pub n_cand: usize,
    /// How many top points are scored as candidate anchors under PAS.
    pub anchor_top_k: usize,
    /// GP training-set cap: most recent half plus best half.
    pub gp_max_points: usize,
    pub gp_fit_steps: usize,
    pub gp_fit_lr: f64,
    pub tr: TrustRegionConfig,
    pub tr_geometry: RegionGeometry,
}

impl BenchConfig {
    pub fn new(dim: usize, budget: u64, n_init: usize, policy: BenchPolicy, seed: u64) -> Self {
        BenchConfig {
            dim,
            budget,
            n_init,
            n_query: 10,
            seed,
            policy,
            n_cand: 256,
            anchor_top_k: 10,
            gp_max_points: 300,
            gp_fit_steps: 15,
            gp_fit_lr: 0.1,
            tr: TrustRegionConfig::default(),
            tr_geometry: RegionGeometry::ArdWeighted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if self.budget <= self.n_init as u64 {
            return Err(Error::Config(format!(
                "budget {} must exceed n_init {}",
                self.budget, self.n_init
            )));
        }
        if self.n_query == 0 || self.n_cand == 0 || self.anchor_top_k == 0 {
            return Err(Error::Config(
                "n_query, n_cand and anchor_top_k must be at least 1".into(),
            ));
        }
        self.tr.validate()
    }
}

/// One oracle call of a benchmark run (raw Ackley value; best is a running
/// minimum).
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub call_index: u64,
    pub y: f64,
    pub best_so_far: f64,
    pub tr_length: f64,
}

/// A finished benchmark run.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub policy: BenchPolicy,
    pub seed: u64,
    pub records: Vec<BenchRecord>,
    pub final_best: f64,
}

/// Runs one seeded benchmark to budget exhaustion.
pub fn run_ackley_bench(cfg: &BenchConfig) -> Result<BenchRun> {
    cfg.validate()?;
    let global = BoxBounds::symmetric(cfg.dim, ACKLEY_INPUT_BOUND);
    let mut oracle: MeteredOracle<Vec<f64>> = MeteredOracle::new(
        "ackley",
        cfg.budget,
        |x: &Vec<f64>| ackley(x).expect("benchmark points stay inside the box"),
    );
    let mut records: Vec<BenchRecord> = Vec::with_capacity(cfg.budget as usize);
    let mut best = f64::INFINITY;
    let mut tr = TrustRegionState::new(cfg.tr.clone())?;

    // Shared initial design: the stream depends on the seed only, so both
    // policies start from identical evaluations.
    let mut init_rng = seed::rng(cfg.seed, "bench-init", 0);
    let mut points: Vec<Latent> = Vec::new();
    let mut scores: Vec<f64> = Vec::new(); // negated (maximized) values
    for _ in 0..cfg.n_init {
        let p: Vec<f64> = (0..cfg.dim)
            .map(|_| -ACKLEY_INPUT_BOUND + 2.0 * ACKLEY_INPUT_BOUND * init_rng.gen::<f64>())
            .collect();
        let y = oracle.evaluate(&p)?;
        best = best.min(y);
        records.push(BenchRecord {
            call_index: records.len() as u64 + 1,
            y,
            best_so_far: best,
            tr_length: tr.side_length,
        });
        points.push(Latent(p));
        scores.push(-y);
    }

    let mut rng = seed::rng(cfg.seed, "bench-loop", 0);
    let mut warm: Option<GpHyperparams> = None;
    while oracle.remaining() > 0 {
        // GP training subset: best half plus most recent half, capped.
        let train_idx = training_subset(&scores, cfg.gp_max_points);
        let inputs: Vec<Latent> = train_idx.iter().map(|&i| points[i].clone()).collect();
        let targets: Vec<f64> = train_idx.iter().map(|&i| scores[i]).collect();
        let init = warm
            .clone()
            .unwrap_or_else(|| GpHyperparams::isotropic(cfg.dim, 8.0, 1.0, 0.01));
        let steps = if warm.is_none() {
            cfg.gp_fit_steps * 4
        } else {
            cfg.gp_fit_steps
        };
        let model = fit_gp(&inputs, &targets, &init, steps, cfg.gp_fit_lr)?;
        warm = Some(model.hyperparams().clone());

        // Anchor under the configured policy.
        let anchor = match cfg.policy {
            BenchPolicy::Turbo => {
                let best_idx = argmax_first(&scores);
                points[best_idx].clone()
            }
            BenchPolicy::TurboPas => {
                let mut order: Vec<usize> = (0..scores.len()).collect();
                order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                let top: Vec<usize> = order.into_iter().take(cfg.anchor_top_k).collect();
                let anchors: Vec<Latent> = top.iter().map(|&i| points[i].clone()).collect();
                let ys: Vec<f64> = top.iter().map(|&i| scores[i]).collect();
                let idx = select_anchor(
                    &anchors,
                    &ys,
                    &model,
                    &tr,
                    cfg.tr_geometry,
                    &global,
                    AnchorPolicy::Pas,
                    cfg.n_cand,
                    &mut rng,
                )?;
                anchors[idx].clone()
            }
        };

        let bounds = region_bounds(
            &anchor,
            &tr,
            &model.hyperparams().lengthscales,
            cfg.tr_geometry,
            &global,
        );
        let candidates = sample_candidates(&bounds, cfg.n_cand, &mut rng);
        let draw = model.thompson_sample(&candidates, &mut rng)?;
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| draw.values[b].total_cmp(&draw.values[a]).then(a.cmp(&b)));
        let n_take = (cfg.n_query as u64).min(oracle.remaining()) as usize;

        let y_star = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut improved = false;
        for &ci in order.iter().take(n_take) {
            let p = candidates[ci].as_slice().to_vec();
            let y = oracle.evaluate(&p)?;
            best = best.min(y);
            records.push(BenchRecord {
                call_index: records.len() as u64 + 1,
                y,
                best_so_far: best,
                tr_length: tr.side_length,
            });
            if -y > y_star {
                improved = true;
            }
            points.push(Latent(p));
            scores.push(-y);
        }
        tr = crate::trust_region::update_schedule(&tr, improved);
    }

    Ok(BenchRun {
        policy: cfg.policy,
        seed: cfg.seed,
        records,
        final_best: best,
    })
}

/// Indices of the GP training subset: best half plus most recent half of
/// the cap, deduplicated, ascending.
fn training_subset(scores: &[f64], cap: usize) -> Vec<usize> {
    let n = scores.len();
    if n <= cap {
        return (0..n).collect();
    }
    let half = cap / 2;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut pick: std::collections::HashSet<usize> = order[..half].iter().copied().collect();
    pick.extend(n - half..n);
    let mut out: Vec<usize> = pick.into_iter().collect();
    out.sort_unstable();
    out
}

/// Per-seed history CSV.
pub fn bench_csv(run: &BenchRun) -> String {
    let rows: Vec<String> = run
        .records
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                r.call_index,
                crate::output::fmt_f64(r.y),
                crate::output::fmt_f64(r.best_so_far),
                crate::output::fmt_f64(r.tr_length),
            )
        })
        .collect();
    crate::output::csv_document("call_index,y,best_so_far,tr_length", &rows)
}

/// Mean and sample standard deviation of the best-so-far curves across
/// runs, per call index. All runs must share the same budget.
pub fn aggregate_curves(runs: &[BenchRun]) -> Result<Vec<(u64, f64, f64)>> {
    if runs.is_empty() {
        return Err(Error::Input("no runs to aggregate".into()));
    }
    let len = runs[0].records.len();
    if runs.iter().any(|r| r.records.len() != len) {
        return Err(Error::Input("runs have differing budgets".into()));
    }
    let n = runs.len() as f64;
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let mean = runs.iter().map(|r| r.records[i].best_so_far).sum::<f64>() / n;
        let var = if runs.len() > 1 {
            runs.iter()
                .map(|r| (r.records[i].best_so_far - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        out.push((i as u64 + 1, mean, var.sqrt()));
    }
    Ok(out)
}

/// Aggregate CSV across seeds for one policy.
pub fn aggregate_csv(curves: &[(u64, f64, f64)]) -> String {
    let rows: Vec<String> = curves
        .iter()
        .map(|(i, m, s)| {
            format!("{},{},{}", i, crate::output::fmt_f64(*m), crate::output::fmt_f64(*s))
        })
        .collect();
    crate::output::csv_document("call_index,mean_best,std_best", &rows)
}
