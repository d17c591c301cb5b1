//! Run-configuration files: flat `key = value` text with a versioned schema
//! header.
//!
//! The first directive must be `schema = lbo-run/1`. Lines starting with
//! `#` and blank lines are ignored. Unknown keys are rejected by name;
//! every value is type-checked. The same keys double as command-line
//! overrides (`--key value`), applied after the file in the order given.
//!
//! `use_inversion` and `use_pas` are sugar: they set `align_mode`
//! (inversion / recentering) and `anchor_policy` (pas / objective). The
//! explicit keys take precedence when they appear later.

use std::path::PathBuf;

use crate::engine::RunConfig;
use crate::error::{Error, Result};
use crate::trust_region::RegionGeometry;

pub const SCHEMA: &str = "lbo-run/1";

/// Diagnostics knobs consumed by the bound-check and fit-comparison
/// commands.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagConfig {
    pub delta: f64,
    pub samples: usize,
    pub pairs: usize,
    pub report_csv: Option<PathBuf>,
    pub report_txt: Option<PathBuf>,
    pub fit_train_points: usize,
    pub fit_test_points: usize,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            delta: 0.5,
            samples: 200,
            pairs: 10_000,
            report_csv: None,
            report_txt: None,
            fit_train_points: 300,
            fit_test_points: 100,
        }
    }
}

/// Everything a CLI command needs: the run configuration plus diagnostics
/// extras.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FullConfig {
    pub run: RunConfig,
    pub diag: DiagConfig,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse value '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "key '{key}': expected a boolean, got '{value}'"
        ))),
    }
}

fn apply_key(cfg: &mut FullConfig, key: &str, value: &str) -> Result<()> {
    let run = &mut cfg.run;
    match key {
        "task" => run.task = value.to_string(),
        "seed" => run.seed = parse_value(key, value)?,
        "budget" => run.budget = parse_value(key, value)?,
        "n_init" => run.n_init = parse_value(key, value)?,
        "n_query" => run.n_query = parse_value(key, value)?,
        "n_fail" => run.n_fail = parse_value(key, value)?,
        "top_k" => run.top_k = parse_value(key, value)?,
        "use_inversion" => {
            run.align_mode = if parse_bool(key, value)? {
                crate::inversion::AlignMode::Inversion
            } else {
                crate::inversion::AlignMode::Recentering
            }
        }
        "use_pas" => {
            run.anchor_policy = if parse_bool(key, value)? {
                crate::anchor::AnchorPolicy::Pas
            } else {
                crate::anchor::AnchorPolicy::Objective
            }
        }
        "align_mode" => run.align_mode = value.parse()?,
        "anchor_policy" => run.anchor_policy = value.parse()?,
        "n_cand" => run.n_cand = parse_value(key, value)?,
        "query_joint" => run.query_joint = parse_bool(key, value)?,
        "gp_fit_steps" => run.gp_fit_steps = parse_value(key, value)?,
        "gp_fit_lr" => run.gp_fit_lr = parse_value(key, value)?,
        "tr_l_init" => run.tr.l_init = parse_value(key, value)?,
        "tr_l_min" => run.tr.l_min = parse_value(key, value)?,
        "tr_l_max" => run.tr.l_max = parse_value(key, value)?,
        "tr_tau_succ" => run.tr.tau_succ = parse_value(key, value)?,
        "tr_tau_fail" => run.tr.tau_fail = parse_value(key, value)?,
        "tr_geometry" => {
            run.tr_geometry = match value {
                "isotropic" => RegionGeometry::Isotropic,
                "ard-weighted" | "ard" => RegionGeometry::ArdWeighted,
                other => {
                    return Err(Error::Config(format!(
                        "key 'tr_geometry': '{other}' is not one of isotropic|ard-weighted"
                    )))
                }
            }
        }
        "latent_box_half" => run.latent_box_half = parse_value(key, value)?,
        "vae_latent" => run.vae.latent = parse_value(key, value)?,
        "vae_hidden" => run.vae.hidden = parse_value(key, value)?,
        "vae_embed" => run.vae.embed = parse_value(key, value)?,
        "vae_pretrain_items" => run.vae.pretrain_items = parse_value(key, value)?,
        "vae_pretrain_epochs" => run.vae.pretrain_epochs = parse_value(key, value)?,
        "vae_update_epochs" => run.vae.update_epochs = parse_value(key, value)?,
        "vae_lr" => run.vae.lr = parse_value(key, value)?,
        "vae_kl_weight" => run.vae.kl_weight = parse_value(key, value)?,
        "inv_max_iters" => run.inversion.max_iters = parse_value(key, value)?,
        "inv_step_size" => run.inversion.step_size = parse_value(key, value)?,
        "inv_epsilon" => run.inversion.epsilon = parse_value(key, value)?,
        "memoize_evals" => run.memoize_evals = parse_bool(key, value)?,
        "history_path" => run.history_path = Some(PathBuf::from(value)),
        "summary_path" => run.summary_path = Some(PathBuf::from(value)),
        "vae_checkpoint_path" => run.vae_checkpoint_path = Some(PathBuf::from(value)),
        "diag_delta" => cfg.diag.delta = parse_value(key, value)?,
        "diag_samples" => cfg.diag.samples = parse_value(key, value)?,
        "diag_pairs" => cfg.diag.pairs = parse_value(key, value)?,
        "diag_report_csv" => cfg.diag.report_csv = Some(PathBuf::from(value)),
        "diag_report_txt" => cfg.diag.report_txt = Some(PathBuf::from(value)),
        "fit_train_points" => cfg.diag.fit_train_points = parse_value(key, value)?,
        "fit_test_points" => cfg.diag.fit_test_points = parse_value(key, value)?,
        other => return Err(Error::Config(format!("unknown key '{other}'"))),
    }
    Ok(())
}

fn split_line(line: &str) -> Result<(&str, &str)> {
    let (key, value) = line
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("malformed line '{line}' (expected key = value)")))?;
    Ok((key.trim(), value.trim()))
}

/// Parses a configuration document. The required keys are the schema header
/// and `task`; everything else is defaulted.
pub fn parse_config(text: &str) -> Result<FullConfig> {
    let mut cfg = FullConfig::default();
    let mut saw_schema = false;
    let mut saw_task = false;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = split_line(line)?;
        if !saw_schema {
            if key != "schema" {
                return Err(Error::Config(
                    "missing schema header: the first directive must be 'schema = lbo-run/1'".into(),
                ));
            }
            if value != SCHEMA {
                return Err(Error::Config(format!(
                    "unsupported schema '{value}' (expected '{SCHEMA}')"
                )));
            }
            saw_schema = true;
            continue;
        }
        if key == "schema" {
            return Err(Error::Config("duplicate schema header".into()));
        }
        if key == "task" {
            saw_task = true;
        }
        apply_key(&mut cfg, key, value)?;
    }
    if !saw_schema {
        return Err(Error::Config(
            "missing schema header: the first directive must be 'schema = lbo-run/1'".into(),
        ));
    }
    if !saw_task {
        return Err(Error::Config("missing required key 'task'".into()));
    }
    Ok(cfg)
}

/// Loads and parses a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<FullConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Applies `--key value` override pairs on top of a parsed configuration.
pub fn apply_overrides(cfg: &mut FullConfig, pairs: &[(String, String)]) -> Result<()> {
    for (key, value) in pairs {
        apply_key(cfg, key, value)?;
    }
    Ok(())
}

/// Parses raw CLI trailing arguments of the form `--key value ...`.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let key = args[i]
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, got '{}'", args[i])))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| Error::Config(format!("override '--{key}' is missing a value")))?;
        out.push((key.to_string(), value.clone()));
        i += 2;
    }
    Ok(out)
}
