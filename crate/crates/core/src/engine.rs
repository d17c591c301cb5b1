//! The optimization loop: latent Bayesian optimization over a discrete task
//! with trust-region search, configurable dataset alignment (inversion /
//! recentering / encoder-only) and anchor selection, plus strict oracle
//! accounting.
//!
//! One iteration: retrain and realign the VAE when the failure streak hits
//! its threshold, fit the GP surrogate on the working subset (most recent
//! `N_q` plus top-`k` by score, deduplicated), pick a trust-region anchor
//! under the configured policy, Thompson-sample `N_q` query latents inside
//! the region, decode, evaluate, and update the schedule against the global
//! best. New evaluations store `x = decode(z)`, so they are aligned by
//! construction; only VAE retrains can invalidate latents, and every
//! triplet's aligned flag is revalidated after each retrain.
//!
//! Every oracle call flows through one meter; the history has exactly one
//! row per call. Runs are bit-reproducible per seed.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::anchor::{select_anchor, AnchorPolicy};
use crate::distance::normalized_levenshtein;
use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpHyperparams, GpModel};
use crate::inversion::{align_dataset, invert, recenter, AlignMode, InversionSettings};
use crate::seed;
use crate::tasks::{sequence_task, MeteredOracle, SequenceTask};
use crate::trust_region::{
    region_bounds, sample_candidates, BoxBounds, RegionGeometry, TrustRegionConfig,
    TrustRegionState,
};
use crate::types::{Latent, TokenSequence, Triplet};
use crate::vae::{decode_argmax, encode, init_params, train_vae, VaeDims, VaeParams};

/// Toy-VAE training knobs of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub latent: usize,
    pub hidden: usize,
    pub embed: usize,
    /// How many of the initial sequences the pretraining corpus keeps
    /// (0 = all of them).
    pub pretrain_items: usize,
    pub pretrain_epochs: usize,
    pub update_epochs: usize,
    pub lr: f64,
    pub kl_weight: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent: 8,
            hidden: 64,
            embed: 64,
            pretrain_items: 64,
            pretrain_epochs: 2000,
            update_epochs: 300,
            lr: 1.5,
            kl_weight: 0.01,
        }
    }
}

/// Every knob of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: String,
    pub seed: u64,
    /// Total oracle budget, including the initial dataset.
    pub budget: u64,
    pub n_init: usize,
    /// Query batch size per step.
    pub n_query: usize,
    /// Failure streak that triggers a VAE retrain.
    pub n_fail: u32,
    /// Top-k size of the working subset.
    pub top_k: usize,
    pub align_mode: AlignMode,
    pub anchor_policy: AnchorPolicy,
    /// Candidate count for Thompson draws (anchor scoring and queries).
    pub n_cand: usize,
    /// Query batch from one joint draw (true) or independent draws (false).
    pub query_joint: bool,
    pub gp_fit_steps: usize,
    pub gp_fit_lr: f64,
    pub tr: TrustRegionConfig,
    pub tr_geometry: RegionGeometry,
    /// Half-width of the global latent search box.
    pub latent_box_half: f64,
    pub vae: VaeConfig,
    pub inversion: InversionSettings,
    /// Reuse cached scores for repeated sequences instead of re-querying.
    pub memoize_evals: bool,
    pub history_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub vae_checkpoint_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: "target-string".into(),
            seed: 0,
            budget: 500,
            n_init: 100,
            n_query: 5,
            n_fail: 10,
            top_k: 50,
            align_mode: AlignMode::Inversion,
            anchor_policy: AnchorPolicy::Pas,
            n_cand: 512,
            query_joint: true,
            gp_fit_steps: 40,
            gp_fit_lr: 0.1,
            tr: TrustRegionConfig::default(),
            tr_geometry: RegionGeometry::ArdWeighted,
            latent_box_half: 10.0,
            vae: VaeConfig::default(),
            inversion: InversionSettings::default(),
            memoize_evals: false,
            history_path: None,
            summary_path: None,
            vae_checkpoint_path: None,
        }
    }
}

impl RunConfig {
    /// Whether dataset alignment is inversion-based (the zero-cost route).
    pub fn use_inversion(&self) -> bool {
        self.align_mode == AlignMode::Inversion
    }

    /// Whether anchors are selected potential-aware.
    pub fn use_pas(&self) -> bool {
        self.anchor_policy == AnchorPolicy::Pas
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 {
            return Err(Error::Config("n_init must be at least 1".into()));
        }
        if self.budget <= self.n_init as u64 {
            return Err(Error::Config(format!(
                "budget {} must exceed n_init {}",
                self.budget, self.n_init
            )));
        }
        if self.n_query == 0 {
            return Err(Error::Config("n_query must be at least 1".into()));
        }
        if self.n_cand == 0 {
            return Err(Error::Config("n_cand must be at least 1".into()));
        }
        if self.latent_box_half <= 0.0 {
            return Err(Error::Config("latent_box_half must be positive".into()));
        }
        self.tr.validate()
    }
}

/// Which activity produced an oracle call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Bo,
    Realign,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Bo => "bo",
            Phase::Realign => "realign",
        })
    }
}

/// One row per oracle call.
#[derive(Debug, Clone)]
pub struct HistoryRecord {
    pub call_index: u64,
    pub y: f64,
    pub best_so_far: f64,
    pub unique_count: u64,
    pub tr_length: f64,
    pub n_fail: u32,
    pub phase: Phase,
}

/// Mutable state of a run.
#[derive(Debug, Clone)]
pub struct RunState {
    pub dataset: Vec<Triplet>,
    pub oracle_calls_used: u64,
    /// Best score over the current dataset.
    pub best_score: f64,
    pub best_x: TokenSequence,
    pub n_fail: u32,
    pub tr: TrustRegionState,
    pub history: Vec<HistoryRecord>,
    /// The sequence behind each oracle call, parallel to `history`.
    pub eval_log: Vec<TokenSequence>,
    unique_seen: HashSet<TokenSequence>,
}

impl RunState {
    fn new(tr: TrustRegionState, max_len: usize) -> Self {
        RunState {
            dataset: Vec::new(),
            oracle_calls_used: 0,
            best_score: f64::NEG_INFINITY,
            best_x: TokenSequence::empty(max_len),
            n_fail: 0,
            tr,
            history: Vec::new(),
            eval_log: Vec::new(),
            unique_seen: HashSet::new(),
        }
    }

    /// Refreshes `best_score`/`best_x` from the dataset.
    fn refresh_dataset_best(&mut self) {
        if let Some(best) = self
            .dataset
            .iter()
            .max_by(|a, b| a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
        {
            self.best_score = best.y;
            self.best_x = best.x.clone();
        }
    }

    /// Best objective value ever evaluated (monotone across the history).
    pub fn best_evaluated(&self) -> f64 {
        self.history.last().map_or(f64::NEG_INFINITY, |r| r.best_so_far)
    }
}

/// Cumulative count of distinct sequences evaluated, one entry per oracle
/// call.
pub fn exploration_metric(state: &RunState) -> Vec<u64> {
    let mut seen = HashSet::new();
    let mut series = Vec::with_capacity(state.eval_log.len());
    for x in &state.eval_log {
        seen.insert(x.clone());
        series.push(seen.len() as u64);
    }
    series
}

/// Indices of the working subset: the `n_q` most recent triplets united
/// with the top-`k` by score, deduplicated by sequence identity keeping the
/// best score (earliest index on ties), ascending index order.
pub fn working_subset(dataset: &[Triplet], n_q: usize, k: usize) -> Vec<usize> {
    let n = dataset.len();
    let mut candidates: HashSet<usize> = (n.saturating_sub(n_q)..n).collect();
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| {
        dataset[b]
            .y
            .partial_cmp(&dataset[a].y)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    candidates.extend(by_score.iter().take(k));
    // Deduplicate by sequence identity, keeping the best-scoring entry.
    let mut best_for: HashMap<&TokenSequence, usize> = HashMap::new();
    let mut sorted: Vec<usize> = candidates.into_iter().collect();
    sorted.sort_unstable();
    for &i in &sorted {
        let t = &dataset[i];
        match best_for.entry(&t.x) {
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(i);
            }
            std::collections::hash_map::Entry::Occupied(mut e) => {
                if dataset[*e.get()].y < t.y {
                    e.insert(i);
                }
            }
        }
    }
    let mut out: Vec<usize> = best_for.into_values().collect();
    out.sort_unstable();
    out
}

/// Outcome of one finished run.
pub struct RunOutput {
    pub state: RunState,
    pub vae: VaeParams,
    pub wall_clock_seconds: f64,
}

/// Owns all mutable state of one optimization run.
pub struct Engine {
    pub config: RunConfig,
    pub task: SequenceTask,
    pub vae: VaeParams,
    pub state: RunState,
    oracle: MeteredOracle<TokenSequence>,
    gp_warm: Option<GpHyperparams>,
    rng: ChaCha12Rng,
    memo: HashMap<TokenSequence, f64>,
    init_seqs: Vec<TokenSequence>,
}

/// The initial design: `n_init` distinct corpus sequences drawn with the
/// run seed, identical for every policy configuration sharing that seed.
pub fn initial_sequences(task: &SequenceTask, config: &RunConfig) -> Result<Vec<TokenSequence>> {
    if config.n_init > task.corpus.len() {
        return Err(Error::Config(format!(
            "n_init {} exceeds corpus size {}",
            config.n_init,
            task.corpus.len()
        )));
    }
    let mut rng = seed::rng(config.seed, "init", 0);
    let mut idx: Vec<usize> = (0..task.corpus.len()).collect();
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    Ok(idx[..config.n_init]
        .iter()
        .map(|&i| task.corpus[i].clone())
        .collect())
}

/// Pretrains the run's VAE on the head of the initial design. Depends only
/// on the seed and VAE settings, so policy variants share the same model.
pub fn pretrain_vae(
    task: &SequenceTask,
    config: &RunConfig,
    init_seqs: &[TokenSequence],
) -> Result<VaeParams> {
    let dims = VaeDims {
        vocab: task.vocab.size() as usize,
        max_len: task.max_len,
        latent: config.vae.latent,
        hidden: config.vae.hidden,
        embed: config.vae.embed,
    };
    let n_pre = if config.vae.pretrain_items == 0 {
        init_seqs.len()
    } else {
        config.vae.pretrain_items.min(init_seqs.len())
    };
    let corpus = &init_seqs[..n_pre];
    let mut rng = seed::rng(config.seed, "vae-pretrain", 0);
    let fresh = init_params(dims, &mut rng);
    train_vae(
        &fresh,
        corpus,
        config.vae.pretrain_epochs,
        config.vae.lr,
        config.vae.kl_weight,
        &mut rng,
    )
}

impl Engine {
    /// Builds the engine, pretraining the VAE from scratch.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let task = sequence_task(&config.task)?;
        let init_seqs = initial_sequences(&task, &config)?;
        let vae = pretrain_vae(&task, &config, &init_seqs)?;
        Self::assemble(config, task, init_seqs, vae)
    }

    /// Builds the engine around an already-pretrained VAE (it must match
    /// the task vocabulary and length).
    pub fn with_pretrained(config: RunConfig, vae: VaeParams) -> Result<Self> {
        config.validate()?;
        let task = sequence_task(&config.task)?;
        if vae.dims.vocab != task.vocab.size() as usize || vae.dims.max_len != task.max_len {
            return Err(Error::Config(
                "pretrained VAE dims do not match the task".into(),
            ));
        }
        let init_seqs = initial_sequences(&task, &config)?;
        Self::assemble(config, task, init_seqs, vae)
    }

    fn assemble(
        config: RunConfig,
        task: SequenceTask,
        init_seqs: Vec<TokenSequence>,
        vae: VaeParams,
    ) -> Result<Self> {
        let oracle = task.oracle(config.budget);
        let tr = TrustRegionState::new(config.tr.clone())?;
        let state = RunState::new(tr, task.max_len);
        let rng = seed::rng(config.seed, "loop", 0);
        Ok(Engine {
            config,
            task,
            vae,
            state,
            oracle,
            gp_warm: None,
            rng,
            memo: HashMap::new(),
            init_seqs,
        })
    }

    pub fn oracle_calls_used(&self) -> u64 {
        self.oracle.calls_used()
    }

    fn global_box(&self) -> BoxBounds {
        BoxBounds::symmetric(self.config.vae.latent, self.config.latent_box_half)
    }

    /// Mirrors oracle-log entries that have no history row yet into the
    /// history, stamped with `phase`. Keeps `history.len() == calls_used`.
    fn sync_history(&mut self, phase: Phase) {
        let log = self.oracle.log();
        for (x, y) in &log[self.state.history.len()..] {
            self.state.unique_seen.insert(x.clone());
            let best = self
                .state
                .history
                .last()
                .map_or(f64::NEG_INFINITY, |r| r.best_so_far)
                .max(*y);
            self.state.history.push(HistoryRecord {
                call_index: self.state.history.len() as u64 + 1,
                y: *y,
                best_so_far: best,
                unique_count: self.state.unique_seen.len() as u64,
                tr_length: self.state.tr.side_length,
                n_fail: self.state.n_fail,
                phase,
            });
            self.state.eval_log.push(x.clone());
        }
        self.state.oracle_calls_used = self.oracle.calls_used();
    }

    /// Scores the initial design and aligns it under the configured mode.
    /// Inversion and encoder-only alignment add no oracle calls; recentering
    /// adds exactly one per triplet.
    pub fn build_initial_dataset(&mut self) -> Result<()> {
        let mut scored = Vec::with_capacity(self.init_seqs.len());
        let init_seqs = self.init_seqs.clone();
        for x in &init_seqs {
            let y = self.oracle.evaluate(x)?;
            scored.push(Triplet {
                x: x.clone(),
                z: Latent::zeros(self.config.vae.latent),
                y,
                aligned: false,
            });
        }
        self.sync_history(Phase::Init);
        let aligned = align_dataset(
            &self.vae,
            &scored,
            self.config.align_mode,
            &self.config.inversion,
            &mut self.oracle,
        )?;
        self.sync_history(Phase::Realign);
        self.state.dataset = aligned;
        self.state.refresh_dataset_best();
        Ok(())
    }

    fn fit_surrogate(&mut self, subset: &[usize]) -> Result<GpModel> {
        let inputs: Vec<Latent> = subset.iter().map(|&i| self.state.dataset[i].z.clone()).collect();
        let targets: Vec<f64> = subset.iter().map(|&i| self.state.dataset[i].y).collect();
        let init = self
            .gp_warm
            .clone()
            .unwrap_or_else(|| GpHyperparams::isotropic(self.config.vae.latent, 1.0, 1.0, 0.01));
        let model = fit_gp(&inputs, &targets, &init, self.config.gp_fit_steps, self.config.gp_fit_lr)?;
        self.gp_warm = Some(model.hyperparams().clone());
        Ok(model)
    }

    /// Retrains the VAE on the working subset, realigns that subset, and
    /// revalidates every aligned flag under the new decoder. Recentering
    /// variants may exhaust the budget mid-way; processed items keep their
    /// new triplets and the step reports `false` (stop).
    fn retrain_and_realign(&mut self) -> Result<bool> {
        let subset = working_subset(&self.state.dataset, self.config.n_query, self.config.top_k);
        let seqs: Vec<TokenSequence> = subset.iter().map(|&i| self.state.dataset[i].x.clone()).collect();
        self.vae = train_vae(
            &self.vae,
            &seqs,
            self.config.vae.update_epochs,
            self.config.vae.lr,
            self.config.vae.kl_weight,
            &mut self.rng,
        )?;
        let mut exhausted = false;
        match self.config.align_mode {
            AlignMode::Inversion => {
                for &i in &subset {
                    let inv = invert(&self.vae, &self.state.dataset[i].x, &self.config.inversion)?;
                    self.state.dataset[i].z = inv.z_inv;
                }
            }
            AlignMode::EncoderOnly => {
                for &i in &subset {
                    let (z, _) = encode(&self.vae, &self.state.dataset[i].x);
                    self.state.dataset[i].z = z;
                }
            }
            AlignMode::Recentering => {
                for &i in &subset {
                    match recenter(&self.vae, &self.state.dataset[i], &mut self.oracle) {
                        Ok(t) => self.state.dataset[i] = t,
                        Err(Error::BudgetExhausted { .. }) => {
                            exhausted = true;
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        // No triplet keeps a stale flag: revalidate everything against the
        // new decoder.
        for t in &mut self.state.dataset {
            t.aligned = normalized_levenshtein(&t.x, &decode_argmax(&self.vae, &t.z)) == 0.0;
        }
        self.state.refresh_dataset_best();
        self.state.n_fail = 0;
        self.sync_history(Phase::Realign);
        Ok(!exhausted)
    }

    /// Selects the next query latents inside the trust region around the
    /// chosen anchor.
    fn select_queries(&mut self, model: &GpModel, subset: &[usize]) -> Result<Vec<Latent>> {
        let anchors: Vec<Latent> = subset.iter().map(|&i| self.state.dataset[i].z.clone()).collect();
        let ys: Vec<f64> = subset.iter().map(|&i| self.state.dataset[i].y).collect();
        let global = self.global_box();
        let anchor_idx = select_anchor(
            &anchors,
            &ys,
            model,
            &self.state.tr,
            self.config.tr_geometry,
            &global,
            self.config.anchor_policy,
            self.config.n_cand,
            &mut self.rng,
        )?;
        let bounds = region_bounds(
            &anchors[anchor_idx],
            &self.state.tr,
            &model.hyperparams().lengthscales,
            self.config.tr_geometry,
            &global,
        );
        let n_take = (self.config.n_query as u64).min(self.oracle.remaining()) as usize;
        let candidates = sample_candidates(&bounds, self.config.n_cand, &mut self.rng);
        if self.config.query_joint {
            // Top n_take coordinates of one joint posterior draw.
            let draw = model.thompson_sample(&candidates, &mut self.rng)?;
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| {
                draw.values[b]
                    .partial_cmp(&draw.values[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            Ok(order[..n_take.min(order.len())]
                .iter()
                .map(|&i| candidates[i].clone())
                .collect())
        } else {
            // Independent draws, argmax each.
            let mut out = Vec::with_capacity(n_take);
            for _ in 0..n_take {
                let draw = model.thompson_sample(&candidates, &mut self.rng)?;
                let best = crate::anchor::argmax_first(&draw.values);
                out.push(candidates[best].clone());
            }
            Ok(out)
        }
    }

    /// One optimization step. Returns `false` when the budget is spent.
    pub fn bo_step(&mut self) -> Result<bool> {
        if self.oracle.remaining() == 0 {
            return Ok(false);
        }
        if self.state.n_fail >= self.config.n_fail && !self.retrain_and_realign()? {
            return Ok(false);
        }
        let subset = working_subset(&self.state.dataset, self.config.n_query, self.config.top_k);
        let model = self.fit_surrogate(&subset)?;
        let queries = self.select_queries(&model, &subset)?;

        let y_star = self.state.best_score;
        let mut improved = false;
        for z in queries {
            let x = decode_argmax(&self.vae, &z);
            let y = if self.config.memoize_evals {
                if let Some(&cached) = self.memo.get(&x) {
                    cached
                } else {
                    match self.oracle.evaluate(&x) {
                        Ok(y) => {
                            self.memo.insert(x.clone(), y);
                            y
                        }
                        Err(Error::BudgetExhausted { .. }) => break,
                        Err(e) => return Err(e),
                    }
                }
            } else {
                match self.oracle.evaluate(&x) {
                    Ok(y) => y,
                    Err(Error::BudgetExhausted { .. }) => break,
                    Err(e) => return Err(e),
                }
            };
            if y > y_star {
                improved = true;
            }
            // x is the decode of z: aligned by construction.
            self.state.dataset.push(Triplet {
                x,
                z,
                y,
                aligned: true,
            });
        }
        if improved {
            self.state.n_fail = 0;
        } else {
            self.state.n_fail += 1;
        }
        self.state.tr = crate::trust_region::update_schedule(&self.state.tr, improved);
        self.state.refresh_dataset_best();
        self.sync_history(Phase::Bo);
        Ok(self.oracle.remaining() > 0)
    }

    /// Runs to budget exhaustion and writes result files when paths are
    /// configured.
    pub fn run(mut self) -> Result<RunOutput> {
        let start = std::time::Instant::now();
        self.build_initial_dataset()?;
        while self.bo_step()? {}
        let wall = start.elapsed().as_secs_f64();
        let out = RunOutput {
            state: self.state,
            vae: self.vae,
            wall_clock_seconds: wall,
        };
        if let Some(path) = &self.config.history_path {
            crate::output::write_atomic(path, &history_csv(&out.state))?;
        }
        if let Some(path) = &self.config.summary_path {
            crate::output::write_atomic(path, &summary_text(&self.config, &out))?;
        }
        if let Some(path) = &self.config.vae_checkpoint_path {
            crate::vae::save_checkpoint(&out.vae, path)?;
        }
        Ok(out)
    }
}

/// Renders the per-call history CSV.
pub fn history_csv(state: &RunState) -> String {
    let rows: Vec<String> = state
        .history
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.call_index,
                crate::output::fmt_f64(r.y),
                crate::output::fmt_f64(r.best_so_far),
                r.unique_count,
                crate::output::fmt_f64(r.tr_length),
                r.n_fail,
                r.phase
            )
        })
        .collect();
    crate::output::csv_document(
        "call_index,y,best_so_far,unique_count,tr_length,n_fail,phase",
        &rows,
    )
}

/// Renders the run summary as a flat JSON object. All fields except
/// `wall_clock_seconds` are deterministic per seed.
pub fn summary_text(config: &RunConfig, out: &RunOutput) -> String {
    let state = &out.state;
    let task = sequence_task(&config.task).expect("config was validated");
    let mut obj = serde_json::Map::new();
    let mut put = |k: &str, v: serde_json::Value| {
        obj.insert(k.to_string(), v);
    };
    put("schema", "lbo-summary/1".into());
    put("task", config.task.clone().into());
    put("seed", config.seed.into());
    put("budget", config.budget.into());
    put("n_init", config.n_init.into());
    put("n_query", config.n_query.into());
    put("align_mode", config.align_mode.to_string().into());
    put("anchor_policy", config.anchor_policy.to_string().into());
    put("use_inversion", config.use_inversion().into());
    put("use_pas", config.use_pas().into());
    put("total_oracle_calls", state.oracle_calls_used.into());
    put("final_best", state.best_evaluated().into());
    put("final_best_dataset", state.best_score.into());
    put("best_sequence", task.vocab.format(&state.best_x).into());
    put(
        "unique_sequences",
        exploration_metric(state).last().copied().unwrap_or(0).into(),
    );
    put("wall_clock_seconds", out.wall_clock_seconds.into());
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(obj))
        .expect("summary serialization cannot fail");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> RunConfig {
        RunConfig {
            budget: 60,
            n_init: 20,
            n_query: 5,
            top_k: 10,
            n_cand: 32,
            gp_fit_steps: 10,
            vae: VaeConfig {
                pretrain_items: 12,
                pretrain_epochs: 200,
                update_epochs: 60,
                ..VaeConfig::default()
            },
            inversion: InversionSettings {
                max_iters: 60,
                ..InversionSettings::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_validation_rejects_bad_budgets() {
        let mut c = quick_config();
        c.budget = 20;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.budget = 60;
        c.n_init = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.n_init = 20;
        c.n_query = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn initial_dataset_accounting_by_align_mode() {
        let mut inv = Engine::new(quick_config()).unwrap();
        inv.build_initial_dataset().unwrap();
        assert_eq!(inv.oracle_calls_used(), 20);
        assert_eq!(inv.state.history.len(), 20);

        let mut cfg = quick_config();
        cfg.align_mode = AlignMode::Recentering;
        let mut rec = Engine::new(cfg).unwrap();
        rec.build_initial_dataset().unwrap();
        assert_eq!(rec.oracle_calls_used(), 40, "one extra call per triplet");
        assert_eq!(rec.state.history.len(), 40);
        assert!(rec
            .state
            .history
            .iter()
            .skip(20)
            .all(|r| r.phase == Phase::Realign));
    }

    #[test]
    fn working_subset_matches_brute_force_oracle() {
        // Crafted 10-point dataset, k = 3, n_q = 2, with one duplicate
        // sequence to exercise dedup-keep-best.
        let task = sequence_task("target-string").unwrap();
        let xs: Vec<TokenSequence> = (0..9).map(|i| task.corpus[i].clone()).collect();
        let ys = [0.3, 0.9, 0.1, 0.5, 0.9, 0.2, 0.05, 0.7, 0.4];
        let mut dataset: Vec<Triplet> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| Triplet {
                x: x.clone(),
                z: Latent::zeros(2),
                y,
                aligned: true,
            })
            .collect();
        // Duplicate of item 2's sequence with a better score, placed last
        // (inside the recent window).
        dataset.push(Triplet {
            x: xs[2].clone(),
            z: Latent::zeros(2),
            y: 0.6,
            aligned: true,
        });

        let got = working_subset(&dataset, 2, 3);

        // Brute-force oracle: sort-and-merge, dedup keep-best.
        let mut top: Vec<usize> = (0..dataset.len()).collect();
        top.sort_by(|&a, &b| dataset[b].y.total_cmp(&dataset[a].y).then(a.cmp(&b)));
        let mut want_set: Vec<usize> = top[..3].to_vec();
        want_set.extend([8, 9]);
        let mut best: HashMap<&TokenSequence, usize> = HashMap::new();
        for &i in &want_set {
            let cur = best.entry(&dataset[i].x).or_insert(i);
            if dataset[*cur].y < dataset[i].y {
                *cur = i;
            }
        }
        let mut want: Vec<usize> = best.into_values().collect();
        want.sort_unstable();
        assert_eq!(got, want);
        // No duplicate sequences in the output.
        let seqs: HashSet<&TokenSequence> = got.iter().map(|&i| &dataset[i].x).collect();
        assert_eq!(seqs.len(), got.len());
    }

    #[test]
    fn working_subset_small_dataset_is_whole_dataset() {
        let task = sequence_task("target-string").unwrap();
        let dataset: Vec<Triplet> = (0..4)
            .map(|i| Triplet {
                x: task.corpus[i].clone(),
                z: Latent::zeros(2),
                y: i as f64,
                aligned: true,
            })
            .collect();
        assert_eq!(working_subset(&dataset, 2, 10), vec![0, 1, 2, 3]);
    }

    #[test]
    fn bo_steps_account_and_flag_failures() {
        let mut engine = Engine::new(quick_config()).unwrap();
        engine.build_initial_dataset().unwrap();
        let before = engine.oracle_calls_used();
        engine.bo_step().unwrap();
        let spent = engine.oracle_calls_used() - before;
        assert_eq!(spent, 5, "one batch of n_query evaluations");
        assert_eq!(engine.state.history.len() as u64, engine.oracle_calls_used());
        // n_fail is 0 after improvement or 1 after a failed batch, and the
        // schedule moved in the matching direction.
        assert!(engine.state.n_fail <= 1);
        // New triplets are aligned by construction.
        for t in engine.state.dataset.iter().skip(20) {
            assert!(t.aligned);
            assert_eq!(
                normalized_levenshtein(&t.x, &decode_argmax(&engine.vae, &t.z)),
                0.0
            );
        }
    }

    #[test]
    fn run_consumes_exact_budget_and_is_reproducible() {
        let cfg = quick_config();
        let out1 = Engine::new(cfg.clone()).unwrap().run().unwrap();
        let out2 = Engine::new(cfg).unwrap().run().unwrap();
        assert_eq!(out1.state.oracle_calls_used, 60);
        assert_eq!(out1.state.history.len(), 60);
        assert_eq!(history_csv(&out1.state), history_csv(&out2.state));
        // best_so_far is monotone.
        let mut prev = f64::NEG_INFINITY;
        for r in &out1.state.history {
            assert!(r.best_so_far >= prev);
            prev = r.best_so_far;
        }
    }

    #[test]
    fn budget_equal_to_init_plus_zero_steps_keeps_initial_best() {
        let mut cfg = quick_config();
        cfg.budget = 21;
        cfg.n_query = 5;
        // One step of up to 5 queries is truncated at the budget.
        let out = Engine::new(cfg).unwrap().run().unwrap();
        assert_eq!(out.state.oracle_calls_used, 21);
        assert_eq!(out.state.history.len(), 21);
    }

    #[test]
    fn exploration_metric_matches_hash_set_oracle() {
        let task = sequence_task("target-string").unwrap();
        let mut state = RunState::new(
            TrustRegionState::new(TrustRegionConfig::default()).unwrap(),
            task.max_len,
        );
        // Crafted history: a, b, a, c, b, d.
        for i in [0usize, 1, 0, 2, 1, 3] {
            state.eval_log.push(task.corpus[i].clone());
        }
        assert_eq!(exploration_metric(&state), vec![1, 2, 2, 3, 3, 4]);

        let mut all_same = RunState::new(
            TrustRegionState::new(TrustRegionConfig::default()).unwrap(),
            task.max_len,
        );
        for _ in 0..5 {
            all_same.eval_log.push(task.corpus[0].clone());
        }
        assert_eq!(exploration_metric(&all_same), vec![1; 5]);
    }

    #[test]
    fn memoization_skips_oracle_for_repeats() {
        let mut cfg = quick_config();
        cfg.memoize_evals = true;
        let mut engine = Engine::new(cfg).unwrap();
        engine.build_initial_dataset().unwrap();
        // Force the memo to contain a sequence, then re-evaluate it.
        let x = engine.state.dataset[0].x.clone();
        engine.memo.insert(x.clone(), 0.123);
        let before = engine.oracle_calls_used();
        // Direct memo path: a bo_step may or may not hit it, so check the
        // bookkeeping invariant instead after one step.
        engine.bo_step().unwrap();
        assert_eq!(engine.state.history.len() as u64, engine.oracle_calls_used());
        assert!(engine.oracle_calls_used() >= before);
    }

    #[test]
    fn realign_revalidates_every_flag() {
        let mut cfg = quick_config();
        cfg.n_fail = 1;
        let mut engine = Engine::new(cfg).unwrap();
        engine.build_initial_dataset().unwrap();
        engine.state.n_fail = 1;
        engine.bo_step().unwrap();
        for t in &engine.state.dataset {
            let really =
                normalized_levenshtein(&t.x, &decode_argmax(&engine.vae, &t.z)) == 0.0;
            assert_eq!(t.aligned, really, "stale aligned flag survived a retrain");
        }
    }
}
