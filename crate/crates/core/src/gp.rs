//! Exact Gaussian-process regression with an RBF-ARD kernel.
//!
//! The surrogate keeps one lengthscale per latent dimension, a signal
//! variance and a noise variance. Targets are standardized internally before
//! fitting; posterior queries are mapped back to the original scale.
//! Hyperparameters are optimized by plain gradient descent on the negative
//! log marginal likelihood in log-parameter space, with step-halving so the
//! NLL never increases between the first and last step.
//!
//! Covariance factorization failures are retried with escalating diagonal
//! jitter, `1e-8 .. 1e-4` relative to the signal variance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::Latent;

/// Lengthscale bounds (natural scale).
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
/// Signal-variance bounds (natural scale).
pub const SIGNAL_BOUNDS: (f64, f64) = (1e-4, 1e4);
/// Noise-variance bounds (natural scale).
pub const NOISE_BOUNDS: (f64, f64) = (1e-6, 1e1);

/// Relative jitter ladder tried when a factorization fails.
const JITTER_LADDER: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Kernel hyperparameters of the RBF-ARD kernel
/// `k(a, b) = σ_f² · exp(−½ Σ_d ((a_d − b_d) / ℓ_d)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyperparams {
    /// One shared lengthscale value replicated over `dim` dimensions.
    pub fn isotropic(dim: usize, lengthscale: f64, signal: f64, noise: f64) -> Self {
        GpHyperparams {
            lengthscales: vec![lengthscale; dim],
            signal_variance: signal,
            noise_variance: noise,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite())
            && self.signal_variance > 0.0
            && self.signal_variance.is_finite()
            && self.noise_variance > 0.0
            && self.noise_variance.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Input("hyperparameters must be strictly positive and finite".into()))
        }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        GpHyperparams {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: theta[d + 1].exp(),
        }
    }

    fn clamp_log(theta: &mut [f64]) {
        let d = theta.len() - 2;
        for t in &mut theta[..d] {
            *t = t.clamp(LENGTHSCALE_BOUNDS.0.ln(), LENGTHSCALE_BOUNDS.1.ln());
        }
        theta[d] = theta[d].clamp(SIGNAL_BOUNDS.0.ln(), SIGNAL_BOUNDS.1.ln());
        theta[d + 1] = theta[d + 1].clamp(NOISE_BOUNDS.0.ln(), NOISE_BOUNDS.1.ln());
    }
}

/// Gradient of the NLL with respect to the log of each hyperparameter.
#[derive(Debug, Clone)]
pub struct GpHyperGrad {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

/// One joint draw from the GP posterior over a candidate set.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub values: Vec<f64>,
}

/// A fitted GP: hyperparameters plus the cached factorization of the
/// training covariance. Immutable once built; posterior queries and
/// Thompson draws are read-only and safe to share across threads.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyperparams,
    train_inputs: Vec<Latent>,
    train_targets: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter_used: f64,
    initial_nll: f64,
    final_nll: f64,
}

fn check_dims(points: &[Latent], dim: usize) -> Result<()> {
    for p in points {
        if p.dim() != dim {
            return Err(Error::Input(format!(
                "latent dimension {} does not match kernel dimension {}",
                p.dim(),
                dim
            )));
        }
    }
    Ok(())
}

/// RBF-ARD kernel matrix between two point sets:
/// entry `(i, j) = σ_f² · exp(−½ Σ_d ((a_i,d − b_j,d) / ℓ_d)²)`.
pub fn kernel_matrix(a: &[Latent], b: &[Latent], h: &GpHyperparams) -> Result<DMatrix<f64>> {
    h.validate()?;
    check_dims(a, h.dim())?;
    check_dims(b, h.dim())?;
    let mut k = DMatrix::zeros(a.len(), b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            let mut sq = 0.0;
            for (d, l) in h.lengthscales.iter().enumerate() {
                let diff = (ai[d] - bj[d]) / l;
                sq += diff * diff;
            }
            k[(i, j)] = h.signal_variance * (-0.5 * sq).exp();
        }
    }
    Ok(k)
}

/// Cholesky with escalating diagonal jitter relative to `scale`. Returns the
/// factorization together with the jitter that was actually applied.
fn cholesky_with_jitter(k: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
    }
    Err(Error::Numerical(format!(
        "covariance not positive definite after jitter escalation up to {:.1e} (relative 1e-4)",
        JITTER_LADDER.last().unwrap() * scale
    )))
}

struct NllCache {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// NLL of the data under the kernel, with the factorization kept for reuse.
fn nll_with_cache(inputs: &[Latent], ys: &DVector<f64>, h: &GpHyperparams) -> Result<(f64, NllCache)> {
    let n = inputs.len();
    let mut k = kernel_matrix(inputs, inputs, h)?;
    for i in 0..n {
        k[(i, i)] += h.noise_variance;
    }
    let (chol, jitter) = cholesky_with_jitter(&k, h.signal_variance)?;
    let alpha = chol.solve(ys);
    let log_det: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
    let nll = 0.5 * ys.dot(&alpha) + log_det + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok((nll, NllCache { chol, alpha, jitter }))
}

/// Negative log marginal likelihood of `(inputs, targets)` under the kernel.
/// Targets are used exactly as given (no standardization).
pub fn marginal_nll(inputs: &[Latent], targets: &[f64], h: &GpHyperparams) -> Result<f64> {
    let ys = DVector::from_column_slice(targets);
    Ok(nll_with_cache(inputs, &ys, h)?.0)
}

/// NLL and its analytic gradient with respect to the *log* of each
/// hyperparameter. The gradient of `tr((ααᵀ − K⁻¹) ∂K/∂θ)` form; matches
/// central finite differences of [`marginal_nll`].
pub fn marginal_nll_grad(
    inputs: &[Latent],
    targets: &[f64],
    h: &GpHyperparams,
) -> Result<(f64, GpHyperGrad)> {
    let n = inputs.len();
    let d = h.dim();
    let ys = DVector::from_column_slice(targets);
    let (nll, cache) = nll_with_cache(inputs, &ys, h)?;
    let k_inv = cache.chol.inverse();
    let alpha = &cache.alpha;

    // A = ααᵀ − K⁻¹; grad wrt log θ is −½ Σ_ij A_ij (∂K/∂log θ)_ij.
    // ∂K/∂log σ_f² = K_f, ∂K/∂log σ_n² = σ_n² I (plus the jitter actually
    // applied, which is proportional to σ_f² and treated as part of it),
    // ∂K/∂log ℓ_d = K_f ∘ sq_d with sq_d(i,j) = ((x_i,d − x_j,d)/ℓ_d)².
    let mut g_len = vec![0.0; d];
    let mut g_sig = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a_ij = alpha[i] * alpha[j] - k_inv[(i, j)];
            let mut sq = 0.0;
            let mut per_dim = [0.0; 64];
            debug_assert!(d <= 64, "per-dim scratch sized for desk-scale dims");
            for (dd, l) in h.lengthscales.iter().enumerate() {
                let diff = (inputs[i][dd] - inputs[j][dd]) / l;
                let s = diff * diff;
                per_dim[dd] = s;
                sq += s;
            }
            let kf = h.signal_variance * (-0.5 * sq).exp();
            let kf_with_jitter = if i == j { kf + cache.jitter } else { kf };
            g_sig += a_ij * kf_with_jitter;
            for (dd, g) in g_len.iter_mut().enumerate() {
                *g += a_ij * kf * per_dim[dd];
            }
        }
    }
    let mut g_noise = 0.0;
    for i in 0..n {
        let a_ii = alpha[i] * alpha[i] - k_inv[(i, i)];
        g_noise += a_ii * h.noise_variance;
    }
    Ok((
        nll,
        GpHyperGrad {
            lengthscales: g_len.iter().map(|g| -0.5 * g).collect(),
            signal_variance: -0.5 * g_sig,
            noise_variance: -0.5 * g_noise,
        },
    ))
}

fn grad_to_vec(g: &GpHyperGrad) -> Vec<f64> {
    let mut v = g.lengthscales.clone();
    v.push(g.signal_variance);
    v.push(g.noise_variance);
    v
}

/// Fits hyperparameters by gradient descent on the NLL in log space
/// (step-halving on any increase, bounds clamped), then caches the final
/// factorization. Targets are standardized internally; posterior queries
/// report on the original scale.
pub fn fit_gp(
    inputs: &[Latent],
    targets: &[f64],
    init: &GpHyperparams,
    steps: usize,
    lr: f64,
) -> Result<GpModel> {
    if inputs.len() < 2 {
        return Err(Error::Input("gp fit needs at least 2 points".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Input("inputs and targets differ in length".into()));
    }
    init.validate()?;
    check_dims(inputs, init.dim())?;

    let n = targets.len() as f64;
    let y_mean = targets.iter().sum::<f64>() / n;
    let y_var = targets.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n;
    let y_std = y_var.sqrt().max(1e-12);
    let std_targets: Vec<f64> = targets.iter().map(|y| (y - y_mean) / y_std).collect();

    // Bounds constrain the optimizer's proposals; an explicit init outside
    // them is honored as-is (steps = 0 fits with exactly the given kernel).
    let mut theta = init.to_log();
    let mut h = GpHyperparams::from_log(&theta);
    let (mut nll, _) = marginal_nll_grad(inputs, &std_targets, &h)?;
    let initial_nll = nll;

    let mut work_lr = lr;
    for _ in 0..steps {
        let (_, grad) = marginal_nll_grad(inputs, &std_targets, &h)?;
        let g = grad_to_vec(&grad);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite NLL gradient".into()));
        }
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-8 {
            break;
        }
        // Step-halving line search; the working step size carries over
        // between iterations (doubled once, capped at the configured lr).
        work_lr = (work_lr * 2.0).min(lr);
        let mut accepted = false;
        while work_lr >= 1e-12 {
            let mut proposal = theta.clone();
            for (t, gi) in proposal.iter_mut().zip(&g) {
                *t -= work_lr * gi;
            }
            GpHyperparams::clamp_log(&mut proposal);
            let hp = GpHyperparams::from_log(&proposal);
            match marginal_nll_grad(inputs, &std_targets, &hp) {
                Ok((new_nll, _)) if new_nll.is_finite() && new_nll <= nll => {
                    theta = proposal;
                    h = hp;
                    nll = new_nll;
                    accepted = true;
                    break;
                }
                _ => work_lr *= 0.5,
            }
        }
        if !accepted {
            break;
        }
    }

    let ys = DVector::from_column_slice(&std_targets);
    let (final_nll, cache) = nll_with_cache(inputs, &ys, &h)?;
    Ok(GpModel {
        hyper: h,
        train_inputs: inputs.to_vec(),
        train_targets: targets.to_vec(),
        y_mean,
        y_std,
        alpha: cache.alpha,
        chol: cache.chol,
        jitter_used: cache.jitter,
        initial_nll,
        final_nll,
    })
}

impl GpModel {
    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn train_len(&self) -> usize {
        self.train_inputs.len()
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.train_targets
    }

    /// NLL (on standardized targets) before the first fitting step.
    pub fn initial_nll(&self) -> f64 {
        self.initial_nll
    }

    /// NLL (on standardized targets) after the last accepted step.
    pub fn final_nll(&self) -> f64 {
        self.final_nll
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Prior variance on the original target scale; posterior variance
    /// reverts to this far from the training data.
    pub fn prior_variance(&self) -> f64 {
        self.hyper.signal_variance * self.y_std * self.y_std
    }

    /// Mean of the training targets on the original scale.
    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    /// Verifies the cached factorization reproduces `K + σ_n²·I` (plus the
    /// jitter actually applied) to the stated relative tolerance.
    pub fn factorization_residual(&self) -> f64 {
        let n = self.train_inputs.len();
        let mut k = kernel_matrix(&self.train_inputs, &self.train_inputs, &self.hyper).unwrap();
        for i in 0..n {
            k[(i, i)] += self.hyper.noise_variance + self.jitter_used;
        }
        let l = self.chol.l();
        let rebuilt = &l * l.transpose();
        let norm = k.norm();
        (rebuilt - k).norm() / norm.max(1e-300)
    }

    /// Posterior mean and variance (original target scale) at query points.
    /// Variances are clamped at zero after subtracting numerical noise.
    pub fn posterior(&self, query: &[Latent]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dims(query, self.hyper.dim())?;
        let k_star = kernel_matrix(query, &self.train_inputs, &self.hyper)?;
        let mean_std = &k_star * &self.alpha;
        // v = L⁻¹ k_*ᵀ column-wise; posterior var = σ_f² − ‖v_i‖².
        let mut v = k_star.transpose();
        self.chol.l_dirty().solve_lower_triangular_unchecked_mut(&mut v);
        let mut means = Vec::with_capacity(query.len());
        let mut vars = Vec::with_capacity(query.len());
        for i in 0..query.len() {
            means.push(self.y_mean + self.y_std * mean_std[i]);
            let reduction: f64 = v.column(i).norm_squared();
            let var_std = (self.hyper.signal_variance - reduction).max(0.0);
            vars.push(var_std * self.y_std * self.y_std);
        }
        Ok((means, vars))
    }

    /// One joint draw from the posterior Gaussian over the candidate set,
    /// via a jitter-stabilized factorization of the posterior covariance.
    /// Deterministic given the generator state.
    pub fn thompson_sample(
        &self,
        candidates: &[Latent],
        rng: &mut ChaCha12Rng,
    ) -> Result<PosteriorSample> {
        if candidates.is_empty() {
            return Err(Error::Input("thompson sampling needs a non-empty candidate set".into()));
        }
        check_dims(candidates, self.hyper.dim())?;
        let q = candidates.len();
        let k_star = kernel_matrix(candidates, &self.train_inputs, &self.hyper)?;
        let mean_std = &k_star * &self.alpha;
        let mut v = k_star.transpose();
        self.chol.l_dirty().solve_lower_triangular_unchecked_mut(&mut v);
        let mut cov = kernel_matrix(candidates, candidates, &self.hyper)?;
        cov -= v.transpose() * &v;
        // Enforce exact symmetry before factoring; the subtraction can leave
        // asymmetry at rounding level.
        for i in 0..q {
            for j in (i + 1)..q {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        let (chol, _) = cholesky_with_jitter(&cov, self.hyper.signal_variance)?;
        let eps = DVector::from_iterator(q, (0..q).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let draw_std = mean_std + chol.l_dirty().lower_triangle() * eps;
        let values = draw_std
            .iter()
            .map(|s| self.y_mean + self.y_std * s)
            .collect();
        Ok(PosteriorSample { values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn pts(xs: &[&[f64]]) -> Vec<Latent> {
        xs.iter().map(|x| Latent(x.to_vec())).collect()
    }

    #[test]
    fn kernel_zero_distance_gives_signal_variance() {
        let h = GpHyperparams::isotropic(2, 1.0, 1.0, 1e-6);
        let a = pts(&[&[0.0, 0.0]]);
        let k = kernel_matrix(&a, &a, &h).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn kernel_distant_points_decorrelate() {
        let h = GpHyperparams::isotropic(1, 1.0, 1.0, 1e-6);
        let a = pts(&[&[0.0]]);
        let b = pts(&[&[100.0]]);
        let k = kernel_matrix(&a, &b, &h).unwrap();
        assert!(k[(0, 0)] < 1e-12);
    }

    #[test]
    fn kernel_off_diagonal_hand_evaluated() {
        let h = GpHyperparams::isotropic(1, 1.0, 2.0, 1e-6);
        let a = pts(&[&[0.0], &[1.0]]);
        let k = kernel_matrix(&a, &a, &h).unwrap();
        let expected = 2.0 * (-0.5f64).exp();
        assert!((k[(0, 1)] - expected).abs() < 1e-14);
        assert!((k[(1, 0)] - expected).abs() < 1e-14);
        // Symmetric PSD on identical inputs: Cholesky with noise succeeds.
        let mut kn = k.clone();
        for i in 0..2 {
            kn[(i, i)] += 1e-6;
        }
        assert!(Cholesky::new(kn).is_some());
    }

    #[test]
    fn kernel_rejects_dimension_mismatch() {
        let h = GpHyperparams::isotropic(2, 1.0, 1.0, 1e-6);
        let a = pts(&[&[0.0]]);
        assert!(matches!(kernel_matrix(&a, &a, &h), Err(Error::Input(_))));
    }

    #[test]
    fn nll_matches_single_point_closed_form() {
        // n = 1: NLL = ½ y²/(σ_f²+σ_n²) + ½ ln(σ_f²+σ_n²) + ½ ln 2π.
        let h = GpHyperparams::isotropic(1, 0.7, 1.3, 0.2);
        let nll = marginal_nll(&pts(&[&[0.4]]), &[0.9], &h).unwrap();
        let s: f64 = 1.3 + 0.2;
        let expected = 0.5 * 0.9 * 0.9 / s + 0.5 * s.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((nll - expected).abs() < 1e-12);
    }

    #[test]
    fn nll_gradient_matches_central_differences() {
        let mut rng = seed::rng(11, "gp-grad", 0);
        for case in 0..10 {
            let dim = 1 + case % 3;
            let n = 6;
            let inputs: Vec<Latent> = (0..n)
                .map(|_| Latent((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()))
                .collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let h = GpHyperparams {
                lengthscales: (0..dim).map(|_| rng.gen_range(0.3..2.0)).collect(),
                signal_variance: rng.gen_range(0.3..2.0),
                noise_variance: rng.gen_range(0.01..0.3),
            };
            let (_, grad) = marginal_nll_grad(&inputs, &targets, &h).unwrap();
            let analytic = grad_to_vec(&grad);
            let theta = h.to_log();
            let fd_h = 1e-5;
            for (k, &g) in analytic.iter().enumerate() {
                let mut tp = theta.clone();
                tp[k] += fd_h;
                let hp = GpHyperparams::from_log(&tp);
                let mut tm = theta.clone();
                tm[k] -= fd_h;
                let hm = GpHyperparams::from_log(&tm);
                let fd = (marginal_nll(&inputs, &targets, &hp).unwrap()
                    - marginal_nll(&inputs, &targets, &hm).unwrap())
                    / (2.0 * fd_h);
                let rel = (g - fd).abs() / fd.abs().max(1e-6);
                assert!(
                    rel < 1e-4,
                    "case {case} param {k}: analytic {g} vs fd {fd} (rel {rel})"
                );
            }
        }
    }

    #[test]
    fn fit_descends_on_smooth_function() {
        let mut rng = seed::rng(3, "gp-fit", 0);
        let inputs: Vec<Latent> = (0..20)
            .map(|i| Latent(vec![i as f64 / 19.0 * 4.0 - 2.0 + 0.01 * rng.gen_range(-1.0..1.0)]))
            .collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (1.7 * x[0]).sin()).collect();
        let init = GpHyperparams::isotropic(1, 1.0, 1.0, 0.1);
        let model = fit_gp(&inputs, &targets, &init, 60, 0.1).unwrap();
        assert!(model.final_nll() < model.initial_nll());
        assert!(model.factorization_residual() < 1e-8);
    }

    #[test]
    fn fit_on_constant_targets_collapses_noise() {
        let inputs = pts(&[&[0.0], &[0.5], &[1.0], &[1.5]]);
        let targets = vec![3.3; 4];
        let init = GpHyperparams::isotropic(1, 1.0, 1.0, 0.1);
        let model = fit_gp(&inputs, &targets, &init, 80, 0.2).unwrap();
        assert!(model.hyperparams().noise_variance < 1e-4);
        let (means, _) = model.posterior(&pts(&[&[-3.0], &[0.7], &[9.0]])).unwrap();
        for m in means {
            assert!((m - 3.3).abs() < 1e-6);
        }
    }

    #[test]
    fn posterior_interpolates_with_vanishing_noise() {
        let inputs = pts(&[&[0.0], &[1.0], &[2.0]]);
        let targets = vec![0.3, -0.8, 0.5];
        let h = GpHyperparams::isotropic(1, 1.0, 1.0, 1e-10);
        let model = fit_gp(&inputs, &targets, &h, 0, 0.1).unwrap();
        let (means, vars) = model.posterior(&inputs).unwrap();
        for (m, t) in means.iter().zip(&targets) {
            assert!((m - t).abs() < 1e-6, "mean {m} target {t}");
        }
        for v in vars {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn posterior_reverts_to_prior_far_away() {
        let inputs = pts(&[&[0.0], &[1.0]]);
        let targets = vec![1.0, 3.0];
        let h = GpHyperparams::isotropic(1, 0.5, 1.2, 1e-4);
        let model = fit_gp(&inputs, &targets, &h, 0, 0.1).unwrap();
        let (means, vars) = model.posterior(&pts(&[&[500.0]])).unwrap();
        assert!((means[0] - model.prior_mean()).abs() < 1e-9);
        assert!((vars[0] - model.prior_variance()).abs() < 1e-9 * model.prior_variance());
    }

    #[test]
    fn posterior_midpoint_matches_two_by_two_solve() {
        let inputs = pts(&[&[0.0], &[1.0]]);
        let targets = vec![0.0, 1.0];
        let h = GpHyperparams::isotropic(1, 1.0, 1.0, 1e-6);
        let model = fit_gp(&inputs, &targets, &h, 0, 0.1).unwrap();
        let (means, _) = model.posterior(&pts(&[&[0.5]])).unwrap();
        assert!(means[0] > 0.0 && means[0] < 1.0);

        // Independent route: explicit 2x2 inverse on standardized targets.
        let hp = model.hyperparams();
        let y_mean = 0.5;
        let y_std = 0.5;
        let ys = [(0.0 - y_mean) / y_std, (1.0 - y_mean) / y_std];
        let k01 = hp.signal_variance * (-0.5f64).exp();
        let kd = hp.signal_variance + hp.noise_variance;
        let det = kd * kd - k01 * k01;
        let (a00, a01, a11) = (kd / det, -k01 / det, kd / det);
        let alpha = [a00 * ys[0] + a01 * ys[1], a01 * ys[0] + a11 * ys[1]];
        let ks = [
            hp.signal_variance * (-0.5f64 * 0.25).exp(),
            hp.signal_variance * (-0.5f64 * 0.25).exp(),
        ];
        let expected = y_mean + y_std * (ks[0] * alpha[0] + ks[1] * alpha[1]);
        assert!((means[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn thompson_single_candidate_statistics() {
        let inputs = pts(&[&[0.0], &[2.0]]);
        let targets = vec![-1.0, 2.0];
        let h = GpHyperparams::isotropic(1, 1.0, 1.0, 0.05);
        let model = fit_gp(&inputs, &targets, &h, 0, 0.1).unwrap();
        let query = pts(&[&[0.8]]);
        let (means, vars) = model.posterior(&query).unwrap();
        let mut rng = seed::rng(5, "ts", 0);
        let n = 10_000usize;
        let draws: Vec<f64> = (0..n)
            .map(|_| model.thompson_sample(&query, &mut rng).unwrap().values[0])
            .collect();
        let emp_mean = draws.iter().sum::<f64>() / n as f64;
        let emp_var = draws.iter().map(|d| (d - emp_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = (vars[0] / n as f64).sqrt();
        assert!(
            (emp_mean - means[0]).abs() < 3.0 * se_mean,
            "mean {emp_mean} vs {} (se {se_mean})",
            means[0]
        );
        let se_var = vars[0] * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (emp_var - vars[0]).abs() < 3.0 * se_var,
            "var {emp_var} vs {} (se {se_var})",
            vars[0]
        );
    }

    #[test]
    fn thompson_degenerate_returns_posterior_mean() {
        let inputs = pts(&[&[0.0], &[1.0]]);
        let targets = vec![0.4, -0.6];
        let h = GpHyperparams::isotropic(1, 1.0, 1.0, 1e-10);
        let model = fit_gp(&inputs, &targets, &h, 0, 0.1).unwrap();
        let query = pts(&[&[1.0]]);
        let (means, _) = model.posterior(&query).unwrap();
        let mut rng = seed::rng(6, "ts", 0);
        let s = model.thompson_sample(&query, &mut rng).unwrap();
        assert!((s.values[0] - means[0]).abs() < 1e-3);
    }

    #[test]
    fn thompson_is_deterministic_per_seed() {
        let inputs = pts(&[&[0.0], &[1.0], &[2.0]]);
        let targets = vec![0.0, 1.0, 0.5];
        let h = GpHyperparams::isotropic(1, 0.8, 1.0, 0.01);
        let model = fit_gp(&inputs, &targets, &h, 10, 0.1).unwrap();
        let cands = pts(&[&[0.3], &[0.9], &[1.7]]);
        let a = model.thompson_sample(&cands, &mut seed::rng(9, "ts", 1)).unwrap();
        let b = model.thompson_sample(&cands, &mut seed::rng(9, "ts", 1)).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn fitted_model_is_share_safe_across_threads() {
        let inputs = pts(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let targets = vec![0.0, 1.0, 0.5, -0.5];
        let h = GpHyperparams::isotropic(1, 1.0, 1.0, 0.01);
        let model = std::sync::Arc::new(fit_gp(&inputs, &targets, &h, 10, 0.1).unwrap());
        let mut handles = Vec::new();
        for t in 0..4 {
            let m = model.clone();
            handles.push(std::thread::spawn(move || {
                let q = vec![Latent(vec![0.1 * t as f64])];
                m.posterior(&q).unwrap().0[0]
            }));
        }
        let seq: Vec<f64> = (0..4)
            .map(|t| model.posterior(&[Latent(vec![0.1 * t as f64])]).unwrap().0[0])
            .collect();
        let par: Vec<f64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(seq, par);
    }
}
