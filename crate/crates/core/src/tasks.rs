//! Objective functions with oracle-call metering.
//!
//! Two discrete toy tasks drive the latent pipeline (sequence-to-target
//! matching and micro arithmetic-expression fitting), and the continuous
//! Ackley function serves the standard-BO benchmark. All scoring functions
//! are pure; budget accounting lives in [`MeteredOracle`], which logs every
//! evaluation and refuses calls past the budget before evaluating.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::distance::normalized_levenshtein;
use crate::error::{Error, Result};
use crate::types::{TokenSequence, Vocab};

/// Ackley input box: every coordinate in `[-ACKLEY_INPUT_BOUND, +...]`.
pub const ACKLEY_INPUT_BOUND: f64 = 32.768;

/// `f(x) = −20·exp(−0.2·√(mean x²)) − exp(mean cos(2πx)) + 20 + e`.
/// Global minimum 0 at the origin; a minimization task (the optimizer
/// maximizes `−f`).
pub fn ackley(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Input("ackley needs at least one coordinate".into()));
    }
    for (i, v) in x.iter().enumerate() {
        if !(-ACKLEY_INPUT_BOUND..=ACKLEY_INPUT_BOUND).contains(v) {
            return Err(Error::Input(format!(
                "ackley coordinate {i} = {v} outside [-{ACKLEY_INPUT_BOUND}, {ACKLEY_INPUT_BOUND}]"
            )));
        }
    }
    let d = x.len() as f64;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let mean_cos = x
        .iter()
        .map(|v| (2.0 * std::f64::consts::PI * v).cos())
        .sum::<f64>()
        / d;
    Ok(-20.0 * (-0.2 * mean_sq.sqrt()).exp() - mean_cos.exp() + 20.0 + std::f64::consts::E)
}

/// `1 − normalized_levenshtein(x, target)`, in `[0, 1]`; maximization.
pub fn target_string_score(x: &TokenSequence, target: &TokenSequence) -> f64 {
    1.0 - normalized_levenshtein(x, target)
}

/// Score assigned to sequences that do not parse as an expression. Strictly
/// below every parseable score (parseable scores are bounded below by about
/// −35.2 given the digit/length limits).
pub const EXPR_SCORE_FLOOR: f64 = -40.0;

const EXPR_GRID_POINTS: usize = 32;
const EXPR_GRID_MIN: f64 = -2.0;
const EXPR_GRID_MAX: f64 = 2.0;

// Expression vocabulary ids.
const EXPR_ID_PLUS: u16 = 11;
const EXPR_ID_MINUS: u16 = 12;
const EXPR_ID_TIMES: u16 = 13;
const EXPR_ID_VAR: u16 = 14;

fn expr_grid() -> impl Iterator<Item = f64> {
    (0..EXPR_GRID_POINTS).map(|i| {
        EXPR_GRID_MIN + (EXPR_GRID_MAX - EXPR_GRID_MIN) * i as f64 / (EXPR_GRID_POINTS - 1) as f64
    })
}

/// Evaluates the token sequence as a left-to-right expression (no operator
/// precedence) at the point `x`. `None` when the sequence does not parse:
/// empty, even length, operand/operator out of place.
fn eval_expression(tokens: &[u16], x: f64) -> Option<f64> {
    if tokens.is_empty() || tokens.len() % 2 == 0 {
        return None;
    }
    let operand = |t: u16| -> Option<f64> {
        match t {
            1..=10 => Some(f64::from(t - 1)),
            EXPR_ID_VAR => Some(x),
            _ => None,
        }
    };
    let mut acc = operand(tokens[0])?;
    let mut i = 1;
    while i < tokens.len() {
        let rhs = operand(tokens[i + 1])?;
        match tokens[i] {
            EXPR_ID_PLUS => acc += rhs,
            EXPR_ID_MINUS => acc -= rhs,
            EXPR_ID_TIMES => acc *= rhs,
            _ => return None,
        }
        i += 2;
    }
    Some(acc)
}

/// `−ln(1 + MSE)` of the parsed expression against the task's target
/// expression on a fixed 32-point grid over `[−2, 2]`; unparseable
/// sequences take [`EXPR_SCORE_FLOOR`]. Always ≤ 0, with equality only at
/// zero error; maximization.
pub fn micro_expression_score(x: &TokenSequence, target_tokens: &[u16]) -> f64 {
    let tokens = x.unpadded();
    let mut sq_sum = 0.0;
    for g in expr_grid() {
        let target = eval_expression(target_tokens, g)
            .expect("task target expression must be parseable");
        match eval_expression(tokens, g) {
            Some(v) => sq_sum += (v - target) * (v - target),
            None => return EXPR_SCORE_FLOOR,
        }
    }
    -(1.0 + sq_sum / EXPR_GRID_POINTS as f64).ln()
}

/// What a [`SequenceTask`] actually scores.
#[derive(Debug, Clone)]
enum TaskKind {
    TargetString { target: TokenSequence },
    MicroExpr { target_tokens: Vec<u16> },
}

/// A discrete optimization task: vocabulary, padded length, a shipped
/// corpus for pretraining/initialization, and the scoring rule.
#[derive(Debug, Clone)]
pub struct SequenceTask {
    pub id: String,
    pub vocab: Vocab,
    pub max_len: usize,
    pub corpus: Vec<TokenSequence>,
    kind: TaskKind,
}

const TARGET_STRING_CORPUS: &str = include_str!("../corpora/target_string.txt");
const MICRO_EXPR_CORPUS: &str = include_str!("../corpora/micro_expr.txt");

/// The fixed goal sequence of the target-string task.
const TARGET_STRING_GOAL: &str = "c a b d o g e h a m";
/// The fixed goal expression of the micro-expression task.
const MICRO_EXPR_GOAL: &str = "x * x + 3";

fn load_corpus(vocab: &Vocab, max_len: usize, text: &str) -> Result<Vec<TokenSequence>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|line| vocab.parse(line, max_len))
        .collect()
}

/// Looks a task up by its string id: `target-string` or `micro-expr`.
pub fn sequence_task(id: &str) -> Result<SequenceTask> {
    match id {
        "target-string" => {
            let vocab = Vocab::new(&[
                "_", "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o",
            ]);
            let max_len = 16;
            let corpus = load_corpus(&vocab, max_len, TARGET_STRING_CORPUS)?;
            let target = vocab.parse(TARGET_STRING_GOAL, max_len)?;
            Ok(SequenceTask {
                id: id.into(),
                vocab,
                max_len,
                corpus,
                kind: TaskKind::TargetString { target },
            })
        }
        "micro-expr" => {
            let vocab = Vocab::new(&[
                "_", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "+", "-", "*", "x",
            ]);
            let max_len = 16;
            let corpus = load_corpus(&vocab, max_len, MICRO_EXPR_CORPUS)?;
            let target_tokens = vocab.parse(MICRO_EXPR_GOAL, max_len)?.unpadded().to_vec();
            Ok(SequenceTask {
                id: id.into(),
                vocab,
                max_len,
                corpus,
                kind: TaskKind::MicroExpr { target_tokens },
            })
        }
        other => Err(Error::Config(format!(
            "unknown task id '{other}' (expected target-string or micro-expr)"
        ))),
    }
}

impl SequenceTask {
    /// Pure, deterministic score of one sequence.
    pub fn score(&self, x: &TokenSequence) -> f64 {
        match &self.kind {
            TaskKind::TargetString { target } => target_string_score(x, target),
            TaskKind::MicroExpr { target_tokens } => micro_expression_score(x, target_tokens),
        }
    }

    /// The goal sequence for tasks that have one.
    pub fn goal(&self) -> Option<TokenSequence> {
        match &self.kind {
            TaskKind::TargetString { target } => Some(target.clone()),
            TaskKind::MicroExpr { .. } => None,
        }
    }

    /// A fresh random sequence from the same family the corpus was drawn
    /// from (used for held-out studies, not for optimization runs).
    pub fn sample_sequence(&self, rng: &mut ChaCha12Rng) -> TokenSequence {
        match &self.kind {
            TaskKind::TargetString { .. } => {
                let len = rng.gen_range(4..=12usize);
                let toks: Vec<u16> = (0..len).map(|_| rng.gen_range(1..16u16)).collect();
                TokenSequence::from_unpadded(&toks, self.max_len, self.vocab.size()).unwrap()
            }
            TaskKind::MicroExpr { .. } => {
                let n_ops = rng.gen_range(1..=5usize);
                let mut toks = Vec::with_capacity(2 * n_ops + 1);
                for i in 0..=n_ops {
                    if rng.gen::<f64>() < 0.4 {
                        toks.push(EXPR_ID_VAR);
                    } else {
                        toks.push(rng.gen_range(1..=10u16));
                    }
                    if i < n_ops {
                        toks.push(*[EXPR_ID_PLUS, EXPR_ID_MINUS, EXPR_ID_TIMES]
                            .get(rng.gen_range(0..3))
                            .unwrap());
                    }
                }
                TokenSequence::from_unpadded(&toks, self.max_len, self.vocab.size()).unwrap()
            }
        }
    }

    /// A metered oracle scoring this task under the given budget.
    pub fn oracle(&self, budget: u64) -> MeteredOracle<TokenSequence> {
        let task = self.clone();
        MeteredOracle::new(&self.id, budget, move |x: &TokenSequence| task.score(x))
    }
}

/// Budgeted oracle wrapper: refuses evaluations past the budget (before
/// evaluating) and logs every evaluation before returning it.
pub struct MeteredOracle<X> {
    task_id: String,
    budget: u64,
    log: Vec<(X, f64)>,
    scorer: Box<dyn Fn(&X) -> f64 + Send + Sync>,
}

impl<X: Clone> MeteredOracle<X> {
    pub fn new(
        task_id: &str,
        budget: u64,
        scorer: impl Fn(&X) -> f64 + Send + Sync + 'static,
    ) -> Self {
        MeteredOracle {
            task_id: task_id.into(),
            budget,
            log: Vec::new(),
            scorer: Box::new(scorer),
        }
    }

    pub fn evaluate(&mut self, x: &X) -> Result<f64> {
        let used = self.calls_used();
        if used >= self.budget {
            return Err(Error::BudgetExhausted {
                used,
                budget: self.budget,
            });
        }
        let y = (self.scorer)(x);
        self.log.push((x.clone(), y));
        Ok(y)
    }

    pub fn calls_used(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.calls_used()
    }

    pub fn log(&self) -> &[(X, f64)] {
        &self.log
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::levenshtein;
    use crate::seed;

    #[test]
    fn ackley_origin_is_global_minimum() {
        for d in [1, 2, 7, 40] {
            let v = ackley(&vec![0.0; d]).unwrap();
            assert!(v.abs() < 1e-12, "d={d}: {v}");
        }
    }

    #[test]
    fn ackley_matches_high_precision_references() {
        // Frozen from a 50-digit arbitrary-precision evaluation of the
        // formula.
        let corner = ackley(&vec![ACKLEY_INPUT_BOUND; 40]).unwrap();
        assert!((corner - 21.57031115128249221303).abs() < 1e-12 * corner);
        let generic = ackley(&[1.5, -2.25, 0.125, 10.0, -0.5]).unwrap();
        assert!((generic - 13.86592343233647147621).abs() < 1e-12 * generic);
        let ones = ackley(&[1.0, 1.0]).unwrap();
        assert!((ones - 3.625384938440362826601).abs() < 1e-12 * ones);
    }

    #[test]
    fn ackley_is_permutation_invariant() {
        let a = ackley(&[1.5, -2.25, 0.125, 10.0, -0.5]).unwrap();
        let b = ackley(&[10.0, 0.125, -0.5, 1.5, -2.25]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ackley_rejects_out_of_box_points() {
        assert!(matches!(ackley(&[0.0, 40.0]), Err(Error::Input(_))));
        assert!(matches!(ackley(&[]), Err(Error::Input(_))));
    }

    #[test]
    fn target_string_endpoints() {
        let task = sequence_task("target-string").unwrap();
        let target = task.goal().unwrap();
        assert_eq!(task.score(&target), 1.0);
        // Disjoint same-length strings: every position substituted.
        let a = task.vocab.parse("a a a a", 16).unwrap();
        let b = task.vocab.parse("b b b b", 16).unwrap();
        assert_eq!(target_string_score(&a, &b), 0.0);
    }

    #[test]
    fn target_string_matches_dp_oracle_on_random_pairs() {
        let task = sequence_task("target-string").unwrap();
        let target = task.goal().unwrap();
        let mut rng = seed::rng(4, "ts-task", 0);
        for _ in 0..500 {
            let x = task.sample_sequence(&mut rng);
            let expected =
                1.0 - levenshtein(x.unpadded(), target.unpadded()) as f64
                    / x.len().max(target.len()) as f64;
            assert!((task.score(&x) - expected).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&task.score(&x)));
        }
    }

    /// Independent expression evaluator: recursive instead of iterative.
    fn reference_eval(tokens: &[u16], x: f64) -> Option<f64> {
        fn rec(tokens: &[u16], x: f64) -> Option<f64> {
            match tokens.len() {
                0 => None,
                1 => match tokens[0] {
                    1..=10 => Some(f64::from(tokens[0] - 1)),
                    EXPR_ID_VAR => Some(x),
                    _ => None,
                },
                n => {
                    let head = rec(&tokens[..n - 2], x)?;
                    let rhs = rec(&tokens[n - 1..], x)?;
                    match tokens[n - 2] {
                        EXPR_ID_PLUS => Some(head + rhs),
                        EXPR_ID_MINUS => Some(head - rhs),
                        EXPR_ID_TIMES => Some(head * rhs),
                        _ => None,
                    }
                }
            }
        }
        rec(tokens, x)
    }

    fn reference_score(task: &SequenceTask, x: &TokenSequence) -> f64 {
        let target = task.vocab.parse(MICRO_EXPR_GOAL, 16).unwrap();
        let mut sq = 0.0;
        for g in expr_grid() {
            let t = reference_eval(target.unpadded(), g).unwrap();
            match reference_eval(x.unpadded(), g) {
                Some(v) => sq += (v - t) * (v - t),
                None => return EXPR_SCORE_FLOOR,
            }
        }
        -(1.0 + sq / EXPR_GRID_POINTS as f64).ln()
    }

    #[test]
    fn expression_target_scores_zero() {
        let task = sequence_task("micro-expr").unwrap();
        let exact = task.vocab.parse(MICRO_EXPR_GOAL, 16).unwrap();
        assert_eq!(task.score(&exact), 0.0);
    }

    #[test]
    fn unparseable_sequences_take_the_floor() {
        let task = sequence_task("micro-expr").unwrap();
        let empty = TokenSequence::empty(16);
        assert_eq!(task.score(&empty), EXPR_SCORE_FLOOR);
        let dangling = task.vocab.parse("3 +", 16).unwrap();
        assert_eq!(task.score(&dangling), EXPR_SCORE_FLOOR);
        let double_op = task.vocab.parse("3 + + 4", 16).unwrap();
        assert_eq!(task.score(&double_op), EXPR_SCORE_FLOOR);
    }

    #[test]
    fn near_miss_scores_between_floor_and_zero() {
        let task = sequence_task("micro-expr").unwrap();
        let near = task.vocab.parse("x * x + 4", 16).unwrap();
        let s = task.score(&near);
        assert!(s > EXPR_SCORE_FLOOR && s < 0.0, "score {s}");
        assert!((s - reference_score(&task, &near)).abs() < 1e-12);
    }

    #[test]
    fn expression_scores_match_reference_on_corpus_and_samples() {
        let task = sequence_task("micro-expr").unwrap();
        let mut rng = seed::rng(5, "expr", 0);
        for x in task.corpus.iter().cloned().chain((0..200).map(|_| task.sample_sequence(&mut rng))) {
            let got = task.score(&x);
            let want = reference_score(&task, &x);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            assert!(got <= 0.0);
        }
    }

    #[test]
    fn corpora_load_and_are_distinct() {
        for id in ["target-string", "micro-expr"] {
            let task = sequence_task(id).unwrap();
            assert_eq!(task.corpus.len(), 128, "{id}");
            let unique: std::collections::HashSet<_> = task.corpus.iter().collect();
            assert_eq!(unique.len(), task.corpus.len(), "{id} corpus has duplicates");
        }
        assert!(sequence_task("nope").is_err());
    }

    #[test]
    fn meter_counts_logs_and_raises_before_evaluation() {
        let task = sequence_task("target-string").unwrap();
        let mut oracle = task.oracle(3);
        let x = task.corpus[0].clone();
        for i in 0..3 {
            assert_eq!(oracle.calls_used(), i);
            oracle.evaluate(&x).unwrap();
        }
        assert_eq!(oracle.calls_used(), 3);
        assert_eq!(oracle.log().len(), 3);
        match oracle.evaluate(&x) {
            Err(Error::BudgetExhausted { used: 3, budget: 3 }) => {}
            other => panic!("expected budget error, got {other:?}"),
        }
        // The refused call was not evaluated or logged.
        assert_eq!(oracle.calls_used(), 3);
    }
}
