//! Baseline inversion, robust joint latent/mask inversion, and the
//! generator fine-tuning variant.
//!
//! With the squared loss the joint objective is
//!
//! ```text
//! f(z, M) = Σ (1 − M)² (x − G(z))² + λ Σ |M|
//! ```
//!
//! whose per-pixel minimizer over `M` is `(1 − λ / 2r²)₊`. Substituting
//! it back gives a bounded robust loss (quadratic below `2r² = λ`,
//! saturating at `λ` above), so gross outliers cannot dominate the fit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{AdamParams, AdamState};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::generator::GeneratorModel;
use crate::metrics;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    L2,
    L1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskStrategy {
    /// Joint ADAM on `(z, M)`, `M` projected onto `[0, 1]` after every step.
    Gradient,
    /// Exact per-pixel `M` update, then one ADAM step on `z`.
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitZ {
    Zero,
    SeededNormal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub loss: Loss,
    pub iterations: usize,
    pub lr_z: f64,
    pub lr_mask: f64,
    pub lr_theta: f64,
    /// θ is frozen for iterations `< finetune_start` (R-RGI only).
    pub finetune_start: usize,
    pub mask_strategy: MaskStrategy,
    /// Optional box `|z_k| ≤ R`.
    pub latent_bound: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub init_z: InitZ,
    pub threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            loss: Loss::L2,
            iterations: 2000,
            lr_z: 0.1,
            lr_mask: 0.1,
            lr_theta: 1e-5,
            finetune_start: 1500,
            mask_strategy: MaskStrategy::ClosedForm,
            latent_bound: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            init_z: InitZ::Zero,
            threshold: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.lr_z > 0.0) || !(self.lr_mask > 0.0) {
            return bad(format!(
                "learning rates must be > 0 (lr_z {}, lr_mask {})",
                self.lr_z, self.lr_mask
            ));
        }
        if !(self.lr_theta >= 0.0) {
            return bad(format!("lr_theta must be >= 0, got {}", self.lr_theta));
        }
        if self.finetune_start > self.iterations {
            return bad(format!(
                "finetune_start {} exceeds iterations {}",
                self.finetune_start, self.iterations
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            ));
        }
        if let Some(r) = self.latent_bound {
            if !(r > 0.0) {
                return bad(format!("latent bound must be > 0, got {r}"));
            }
        }
        Ok(())
    }

    /// Sets the iteration count, moving `finetune_start` so that the last
    /// quarter of the run fine-tunes (the default 1500 of 2000 ratio).
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self.finetune_start = iterations - iterations / 4;
        self
    }

    fn adam(&self, lr: f64) -> AdamParams {
        AdamParams {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InversionResult {
    pub z_hat: Tensor,
    pub mask: Tensor,
    pub restored: Tensor,
    pub binary_mask: Tensor,
    /// Fine-tuned parameters; present only for R-RGI.
    pub theta_final: Option<Vec<Tensor>>,
    /// `(iteration, objective)` evaluated before each parameter step.
    pub loss_trace: Vec<(usize, f64)>,
    /// Objective at the returned `(z_hat, mask, θ)`.
    pub final_objective: f64,
    /// Closed-form strategy only: objective change caused by each exact
    /// mask update (never positive).
    pub mask_step_deltas: Vec<f64>,
    pub config: SolverConfig,
}

/// Per-pixel minimizer of `(1−M)² r² + λ|M|` over `M`: `(1 − λ/2r²)₊`.
pub fn optimal_mask_pixel(r: f64, lambda: f64) -> f64 {
    let two_r2 = 2.0 * r * r;
    if two_r2 <= lambda {
        0.0
    } else {
        1.0 - lambda / two_r2
    }
}

/// `min_M (1−M)² r² + λ|M|`: `r²` if `2r² < λ`, else `λ − λ²/4r²`.
pub fn robust_loss_pixel(r: f64, lambda: f64) -> f64 {
    let r2 = r * r;
    if 2.0 * r2 <= lambda {
        r2
    } else {
        lambda - lambda * lambda / (4.0 * r2)
    }
}

/// Per-pixel objective for a given mask value.
pub fn pixel_objective(r: f64, m: f64, lambda: f64, loss: Loss) -> f64 {
    match loss {
        Loss::L2 => (1.0 - m).powi(2) * r * r + lambda * m.abs(),
        Loss::L1 => (1.0 - m).abs() * r.abs() + lambda * m.abs(),
    }
}

/// Exact per-pixel mask for either loss. The L1 objective is linear in `M`,
/// so its minimizer is `1` when `|r| > λ` and `0` otherwise.
pub fn optimal_mask(residual: &Tensor, lambda: f64, loss: Loss) -> Tensor {
    match loss {
        Loss::L2 => residual.map(|r| optimal_mask_pixel(r, lambda)),
        Loss::L1 => residual.map(|r| if r.abs() > lambda { 1.0 } else { 0.0 }),
    }
}

/// Indicator of `M > threshold`.
pub fn binarize_mask(mask: &Tensor, threshold: f64) -> Tensor {
    mask.map(|m| if m > threshold { 1.0 } else { 0.0 })
}

/// Objective value from a residual and a mask.
pub fn objective_value(residual: &Tensor, mask: &Tensor, lambda: f64, loss: Loss) -> Result<f64> {
    residual.check_same_shape(mask, "objective")?;
    Ok(residual
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&r, &m)| pixel_objective(r, m, lambda, loss))
        .sum())
}

/// Builds `L((1−M)⊙x, (1−M)⊙img) + λ‖M‖₁` on `g`.
pub fn objective_node(
    g: &mut Graph,
    x: Var,
    img: Var,
    mask: Var,
    lambda: f64,
    loss: Loss,
) -> Result<Var> {
    let ones = g.constant(Tensor::ones(g.value(mask).shape())?);
    let keep = g.sub(ones, mask)?;
    let diff = g.sub(x, img)?;
    let weighted = g.mul_elementwise(keep, diff)?;
    let rec = match loss {
        Loss::L2 => g.sum_squares(weighted),
        Loss::L1 => g.abs_sum(weighted),
    };
    let l1 = g.abs_sum(mask);
    let pen = g.scalar_mul(lambda, l1);
    g.add(rec, pen)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum MaskMode {
    Zero,
    Robust,
}

fn initial_latent(model: &GeneratorModel, cfg: &SolverConfig) -> Result<Tensor> {
    match cfg.init_z {
        InitZ::Zero => Tensor::zeros(&[model.latent_dim]),
        InitZ::SeededNormal => Tensor::randn(
            &[model.latent_dim],
            &mut ChaCha8Rng::seed_from_u64(cfg.seed),
        ),
    }
}

fn project_latent(z: &mut Tensor, bound: Option<f64>) {
    if let Some(r) = bound {
        for v in z.data_mut() {
            *v = v.clamp(-r, r);
        }
    }
}

fn run(
    model: &GeneratorModel,
    x: &Tensor,
    cfg: &SolverConfig,
    mode: MaskMode,
    finetune: bool,
) -> Result<InversionResult> {
    cfg.validate()?;
    if x.shape() != model.image_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            op: "solve",
            left: x.shape().to_vec(),
            right: model.image_shape.clone(),
        });
    }
    let mut z = initial_latent(model, cfg)?;
    project_latent(&mut z, cfg.latent_bound);
    let mut mask = x.zeros_like();
    let mut theta = model.theta.clone();

    let mut z_state = AdamState::new(&z);
    let mut m_state = AdamState::new(&mask);
    let mut theta_states: Vec<AdamState> = theta.iter().map(AdamState::new).collect();
    let (z_adam, m_adam, t_adam) = (
        cfg.adam(cfg.lr_z),
        cfg.adam(cfg.lr_mask),
        cfg.adam(cfg.lr_theta),
    );
    let closed_form = mode == MaskMode::Robust && cfg.mask_strategy == MaskStrategy::ClosedForm;
    let mask_trainable = mode == MaskMode::Robust && cfg.mask_strategy == MaskStrategy::Gradient;

    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut deltas = Vec::new();

    for it in 0..cfg.iterations {
        let tune = finetune && it >= cfg.finetune_start;
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let zv = g.param(z.clone());
        let tv: Vec<Var> = theta.iter().map(|t| g.leaf(t.clone(), tune)).collect();
        let img = model.forward_with(&mut g, zv, &tv)?;
        if closed_form {
            let residual = x.sub(g.value(img))?;
            let before = objective_value(&residual, &mask, cfg.lambda, cfg.loss)?;
            mask = optimal_mask(&residual, cfg.lambda, cfg.loss);
            let after = objective_value(&residual, &mask, cfg.lambda, cfg.loss)?;
            deltas.push(after - before);
        }
        let mv = g.leaf(mask.clone(), mask_trainable);
        let obj = objective_node(&mut g, xv, img, mv, cfg.lambda, cfg.loss)?;
        let value = g.value(obj).item();
        if !value.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        trace.push((it, value));

        let mut grads = g.backward(obj)?;
        z_state.step(&mut z, &grads.take(zv), &z_adam)?;
        project_latent(&mut z, cfg.latent_bound);
        if mask_trainable {
            m_state.step(&mut mask, &grads.take(mv), &m_adam)?;
            for v in mask.data_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        if tune {
            for ((t, st), v) in theta.iter_mut().zip(&mut theta_states).zip(&tv) {
                st.step(t, &grads.take(*v), &t_adam)?;
            }
        }
    }

    let final_model;
    let model_out = if finetune {
        final_model = model.with_theta(theta.clone())?;
        &final_model
    } else {
        model
    };
    let restored = model_out.generate(&z)?;
    let residual = x.sub(&restored)?;
    if closed_form {
        mask = optimal_mask(&residual, cfg.lambda, cfg.loss);
    }
    let final_objective = objective_value(&residual, &mask, cfg.lambda, cfg.loss)?;
    if !final_objective.is_finite() {
        return Err(Error::NonFinite {
            iteration: cfg.iterations,
        });
    }
    Ok(InversionResult {
        binary_mask: binarize_mask(&mask, cfg.threshold),
        z_hat: z,
        mask,
        restored,
        theta_final: finetune.then_some(theta),
        loss_trace: trace,
        final_objective,
        mask_step_deltas: deltas,
        config: cfg.clone(),
    })
}

/// Plain inversion `min_z L(x, G(z))`; the returned mask is all zeros.
pub fn invert_baseline(
    model: &GeneratorModel,
    x: &Tensor,
    cfg: &SolverConfig,
) -> Result<InversionResult> {
    run(model, x, cfg, MaskMode::Zero, false)
}

/// Joint latent / mask recovery with a frozen generator.
pub fn solve_rgi(
    model: &GeneratorModel,
    x: &Tensor,
    cfg: &SolverConfig,
) -> Result<InversionResult> {
    run(model, x, cfg, MaskMode::Robust, false)
}

/// As [`solve_rgi`], additionally fine-tuning θ from `cfg.finetune_start`
/// on. `model` is not modified; the tuned θ is in `theta_final`.
pub fn solve_rrgi(
    model: &GeneratorModel,
    x: &Tensor,
    cfg: &SolverConfig,
) -> Result<InversionResult> {
    run(model, x, cfg, MaskMode::Robust, true)
}

/// Ground truth used to score a sweep.
#[derive(Clone, Copy, Debug)]
pub struct Truth<'a> {
    pub clean: &'a Tensor,
    pub mask: &'a Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepMetrics {
    pub dice: Option<f64>,
    pub rmse: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub lambda: f64,
    pub result: InversionResult,
    pub metrics: SweepMetrics,
}

pub fn score(result: &InversionResult, truth: Option<Truth<'_>>) -> Result<SweepMetrics> {
    let mut m = SweepMetrics {
        dice: None,
        rmse: None,
        psnr: None,
        ssim: None,
        objective: result.final_objective,
    };
    if let Some(t) = truth {
        m.dice = Some(metrics::dice(&result.binary_mask, t.mask)?);
        m.rmse = Some(metrics::rmse(
            std::slice::from_ref(&result.restored),
            std::slice::from_ref(t.clean),
        )?);
        m.psnr = Some(metrics::psnr(
            &result.restored,
            t.clean,
            metrics::DEFAULT_PEAK,
        )?);
        m.ssim = metrics::ssim(&result.restored, t.clean).ok();
    }
    Ok(m)
}

/// One RGI solve per λ (same seed and template otherwise).
pub fn sweep_lambda(
    model: &GeneratorModel,
    x: &Tensor,
    lambdas: &[f64],
    template: &SolverConfig,
    truth: Option<Truth<'_>>,
) -> Result<Vec<SweepPoint>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = SolverConfig {
                lambda,
                ..template.clone()
            };
            let annotate = |e: Error| Error::AtLambda {
                lambda,
                source: Box::new(e),
            };
            let result = solve_rgi(model, x, &cfg).map_err(annotate)?;
            let metrics = score(&result, truth).map_err(annotate)?;
            Ok(SweepPoint {
                lambda,
                result,
                metrics,
            })
        })
        .collect()
}

/// Whether `lambdas` is strictly decreasing.
pub fn strictly_decreasing(lambdas: &[f64]) -> bool {
    lambdas.windows(2).all(|w| w[1] < w[0])
}
