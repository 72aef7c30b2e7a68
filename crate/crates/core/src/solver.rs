//! ADMM weight update and gradual mask selection for one linear layer.
//!
//! The layer maps `m` input features to `n` outputs through `W` (`m x n`),
//! and `X` (`N x m`) holds calibration inputs. The solver minimises the
//! damped reconstruction objective
//!
//! ```text
//! ||X (W - W_hat)||^2 + lambda ||W - W_hat||^2   subject to   W_hat * (1 - M) = 0
//! ```
//!
//! in preconditioned coordinates, where every weight row is multiplied by the
//! norm of its input feature and every column of `X` is divided by it. After
//! that scaling the Gram matrix has a unit diagonal and ranking weights by
//! magnitude is the Wanda criterion.
//!
//! One ADMM iteration is a projection onto the mask (`Z`), a dual update
//! (`U`) and a ridge-like solve for `W` against a Cholesky factor of
//! `X^T X + (lambda + rho) I` computed once per layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::{
    cubic_sparsity, select_structured_mask, select_topk_mask, Mask, SparsitySchedule,
    StructurePattern,
};
use crate::report::{IterRecord, PruneReport, ReportSummary, Stopwatch};
use crate::tensor::{column_norms, gram, matmul, spd_factor, Matrix, SpdFactor};

/// Which scores drive mask selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskRule {
    /// `|W + U|` in preconditioned coordinates (Wanda at the first step).
    #[default]
    WandaPrecond,
    /// `|W + U|` in the original weight scale.
    Magnitude,
}

impl std::str::FromStr for MaskRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wanda_precond" => Ok(MaskRule::WandaPrecond),
            "magnitude" => Ok(MaskRule::Magnitude),
            other => Err(Error::config(
                "mask_rule",
                format!("unknown rule {other:?} (expected wanda_precond or magnitude)"),
            )),
        }
    }
}

impl MaskRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskRule::WandaPrecond => "wanda_precond",
            MaskRule::Magnitude => "magnitude",
        }
    }
}

/// Hyperparameters of the gradual ADMM pruning loop.
///
/// Serializes with the config-file keys (see [`crate::io::ConfigFile`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::io::ConfigFile", into = "crate::io::ConfigFile")]
pub struct SolverConfig {
    /// ADMM penalty factor.
    pub rho: f64,
    /// Gram damping, added after preconditioning.
    pub lambda: f64,
    /// Added to every input-feature norm.
    pub eps: f64,
    /// Total ADMM iterations `k`.
    pub iterations: usize,
    /// Iterations that (re)select the mask, `k_s <= k`.
    pub sparsify_steps: usize,
    /// Final sparsity `s_f`.
    pub sparsity: f64,
    pub structure: Option<StructurePattern>,
    pub mask_rule: MaskRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            lambda: 0.1,
            eps: 1e-8,
            iterations: 20,
            sparsify_steps: 15,
            sparsity: 0.5,
            structure: None,
            mask_rule: MaskRule::WandaPrecond,
        }
    }
}

impl SolverConfig {
    pub fn with_sparsity(mut self, sparsity: f64) -> Self {
        self.sparsity = sparsity;
        self
    }

    pub fn with_iterations(mut self, iterations: usize, sparsify_steps: usize) -> Self {
        self.iterations = iterations;
        self.sparsify_steps = sparsify_steps;
        self
    }

    pub fn with_structure(mut self, pattern: StructurePattern) -> Self {
        self.structure = Some(pattern);
        self.sparsity = pattern.final_sparsity();
        self
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho", format!("{} must be positive", self.rho)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", format!("{} must be non-negative", self.lambda)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::config("eps", format!("{} must be non-negative", self.eps)));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        if self.sparsify_steps == 0 {
            return Err(Error::config("sparsify_steps", "must be at least 1"));
        }
        if self.sparsify_steps > self.iterations {
            return Err(Error::config(
                "sparsify_steps",
                format!(
                    "{} exceeds iterations ({})",
                    self.sparsify_steps, self.iterations
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::config(
                "sparsity",
                format!("{} is outside [0, 1]", self.sparsity),
            ));
        }
        if let Some(p) = self.structure {
            if self.sparsity != p.final_sparsity() {
                return Err(Error::config(
                    "sparsity",
                    format!(
                        "structured {p} pruning requires sparsity {}, got {}",
                        p.final_sparsity(),
                        self.sparsity
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> SparsitySchedule {
        SparsitySchedule {
            final_sparsity: self.sparsity,
            steps: self.sparsify_steps,
        }
    }
}

/// A layer problem moved into preconditioned coordinates, with everything
/// the iterations reuse precomputed.
#[derive(Debug, Clone)]
pub struct PreconditionedProblem {
    /// Input-feature norms plus eps, one per weight row.
    pub norms: Vec<f64>,
    /// `W` with row `i` multiplied by `norms[i]`.
    pub w_scaled: Matrix,
    /// `X_s^T X_s + lambda I` for the scaled inputs `X_s`.
    pub gram_damped: Matrix,
    /// `gram_damped * w_scaled`.
    pub gram_w: Matrix,
    /// Cholesky factor of `gram_damped + rho I`.
    pub solve_factor: SpdFactor,
    pub rho: f64,
}

/// Input norms, row-scaled weights and the damped Gram matrix of the
/// column-scaled inputs.
pub(crate) fn scale_problem(
    w: &Matrix,
    x: &Matrix,
    lambda: f64,
    eps: f64,
) -> Result<(Vec<f64>, Matrix, Matrix)> {
    if x.cols() != w.rows() {
        return Err(Error::shape(
            "precondition",
            format!(
                "calibration has {} features but weights have {} input rows",
                x.cols(),
                w.rows()
            ),
        ));
    }
    w.check_finite("weights")?;
    x.check_finite("calibration inputs")?;
    let norms = column_norms(x, eps);
    if let Some((feature, &value)) = norms
        .iter()
        .enumerate()
        .find(|(_, v)| **v <= 0.0 || !v.is_finite())
    {
        return Err(Error::NonPositiveNorm { feature, value });
    }
    let w_scaled = w.scale_rows(&norms)?;
    let x_scaled = x.div_cols(&norms)?;
    let gram_damped = gram(&x_scaled, lambda);
    Ok((norms, w_scaled, gram_damped))
}

/// Scales the problem by input norms and factors the W-update system.
pub fn precondition(w: &Matrix, x: &Matrix, cfg: &SolverConfig) -> Result<PreconditionedProblem> {
    if cfg.rho.is_nan() || cfg.rho <= 0.0 {
        return Err(Error::config("rho", format!("{} must be positive", cfg.rho)));
    }

    let (norms, w_scaled, gram_damped) = scale_problem(w, x, cfg.lambda, cfg.eps)?;
    let gram_w = matmul(&gram_damped, &w_scaled)?;
    let mut shifted = gram_damped.clone();
    shifted.add_diagonal(cfg.rho);
    let solve_factor = spd_factor(&shifted)?;
    Ok(PreconditionedProblem {
        norms,
        w_scaled,
        gram_damped,
        gram_w,
        solve_factor,
        rho: cfg.rho,
    })
}

impl PreconditionedProblem {
    /// Damped objective `tr(D^T G D)` with `D = w_scaled - w_hat`, for a
    /// candidate in preconditioned coordinates.
    pub fn objective(&self, w_hat_scaled: &Matrix) -> Result<f64> {
        let diff = self.w_scaled.sub(w_hat_scaled)?;
        let g_diff = matmul(&self.gram_damped, &diff)?;
        Ok(frobenius_inner(&diff, &g_diff))
    }

    /// Damped objective of a candidate given in the original weight scale.
    pub fn objective_unscaled(&self, w_hat: &Matrix) -> Result<f64> {
        self.objective(&self.scale(w_hat)?)
    }

    pub fn scale(&self, w: &Matrix) -> Result<Matrix> {
        w.scale_rows(&self.norms)
    }

    pub fn unscale(&self, w_scaled: &Matrix) -> Result<Matrix> {
        w_scaled.div_rows(&self.norms)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w_scaled.shape()
    }
}

/// `sum_ij a_ij b_ij`.
pub(crate) fn frobenius_inner(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// ADMM iterate: primal `w`, projected copy `z`, scaled dual `u`, and the
/// mask `z` is projected onto.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub w: Matrix,
    pub z: Matrix,
    pub u: Matrix,
    pub mask: Mask,
    pub step: usize,
}

impl AdmmState {
    /// Starts from the preconditioned dense weights with a zero dual and a
    /// keep-all mask.
    pub fn new(prob: &PreconditionedProblem) -> Self {
        let (rows, cols) = prob.shape();
        Self {
            w: prob.w_scaled.clone(),
            z: prob.w_scaled.clone(),
            u: Matrix::zeros(rows, cols),
            mask: Mask::ones(rows, cols),
            step: 0,
        }
    }

    /// `W + U`, the quantity masks are selected from.
    pub fn w_plus_u(&self) -> Matrix {
        self.w.add(&self.u).expect("state shapes are congruent")
    }

    /// Feasible candidate `(W + U) * M` in preconditioned coordinates.
    pub fn candidate(&self) -> Matrix {
        self.mask
            .apply(&self.w_plus_u())
            .expect("state shapes are congruent")
    }
}

/// One ADMM iteration: optional mask swap, `Z = (W+U)*M`, `U += W - Z`,
/// `W = (G + rho I)^{-1} (G W_0 + rho (Z - U))`.
pub fn admm_iteration(
    mut state: AdmmState,
    prob: &PreconditionedProblem,
    new_mask: Option<Mask>,
) -> Result<AdmmState> {
    if state.w.shape() != prob.shape() {
        return Err(Error::shape(
            "admm_iteration",
            format!("state {:?} vs problem {:?}", state.w.shape(), prob.shape()),
        ));
    }
    if let Some(mask) = new_mask {
        if mask.shape() != prob.shape() {
            return Err(Error::shape(
                "admm_iteration",
                format!("mask {:?} vs problem {:?}", mask.shape(), prob.shape()),
            ));
        }
        state.mask = mask;
    }

    let rho = prob.rho;
    let mut rhs = prob.gram_w.clone();
    let w = state.w.data();
    let bits = state.mask.bits();
    let z = state.z.data_mut();
    let u = state.u.data_mut();
    for (idx, r) in rhs.data_mut().iter_mut().enumerate() {
        let zi = if bits[idx] { w[idx] + u[idx] } else { 0.0 };
        let ui = u[idx] + (w[idx] - zi);
        z[idx] = zi;
        u[idx] = ui;
        *r += rho * (zi - ui);
    }
    state.w = prob.solve_factor.solve(&rhs)?;
    state.step += 1;
    Ok(state)
}

/// Scores used to select the mask from the current iterate.
pub fn selection_scores(
    state: &AdmmState,
    prob: &PreconditionedProblem,
    rule: MaskRule,
) -> Matrix {
    let scores = state.w_plus_u().map(f64::abs);
    match rule {
        MaskRule::WandaPrecond => scores,
        MaskRule::Magnitude => scores
            .div_rows(&prob.norms)
            .expect("norms match weight rows"),
    }
}

/// Selects the mask for a target sparsity under the configured structure.
pub fn select_mask(scores: &Matrix, sparsity: f64, cfg: &SolverConfig) -> Result<Mask> {
    match cfg.structure {
        Some(pattern) => select_structured_mask(scores, sparsity, pattern),
        None => Ok(select_topk_mask(scores, sparsity)),
    }
}

/// Result of pruning one layer.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    /// Pruned and updated weights in the original scale.
    pub weights: Matrix,
    pub mask: Mask,
    pub report: PruneReport,
}

/// What an observer sees after each iteration of [`prune_layer_observed`].
#[derive(Debug)]
pub struct StepView<'a> {
    pub step: usize,
    /// Scores the mask was selected from at this step, if it was reselected.
    pub scores: Option<&'a Matrix>,
    pub target_sparsity: f64,
    pub state: &'a AdmmState,
    pub problem: &'a PreconditionedProblem,
}

/// Gradual pruning of one layer: `k` ADMM iterations, reselecting the mask at
/// the cubic-schedule sparsity during the first `k_s` of them, and returning
/// `(W + U) * M` mapped back to the original scale.
pub fn prune_layer(w: &Matrix, x: &Matrix, cfg: &SolverConfig) -> Result<PruneOutcome> {
    prune_layer_observed(w, x, cfg, |_| {})
}

/// [`prune_layer`] with a callback after every iteration.
pub fn prune_layer_observed(
    w: &Matrix,
    x: &Matrix,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&StepView<'_>),
) -> Result<PruneOutcome> {
    cfg.validate()?;
    if let Some(p) = cfg.structure {
        if !w.rows().is_multiple_of(p.m_group) {
            return Err(Error::InvalidPattern(format!(
                "{} input rows are not divisible by group size {}",
                w.rows(),
                p.m_group
            )));
        }
    }
    let mut clock = Stopwatch::start();
    let prob = precondition(w, x, cfg)?;
    let schedule = cfg.schedule();
    let mut state = AdmmState::new(&prob);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut target = 0.0;

    for step in 1..=cfg.iterations {
        let mut scores = None;
        let new_mask = if step <= cfg.sparsify_steps {
            target = cubic_sparsity(step, &schedule);
            let s = selection_scores(&state, &prob, cfg.mask_rule);
            let mask = select_mask(&s, target, cfg)?;
            scores = Some(s);
            Some(mask)
        } else {
            None
        };
        state = admm_iteration(state, &prob, new_mask)?;

        clock.pause();
        let objective = prob.objective(&state.candidate())?;
        records.push(IterRecord {
            iter: step,
            seconds: clock.seconds(),
            objective,
            sparsity: target,
        });
        observer(&StepView {
            step,
            scores: scores.as_ref(),
            target_sparsity: target,
            state: &state,
            problem: &prob,
        });
        clock.resume();
    }

    finish(prob, state, records, cfg)
}

/// Runs `cfg.iterations` ADMM iterations over a fixed mask (no selection).
pub fn admm_fixed_mask(
    w: &Matrix,
    x: &Matrix,
    mask: &Mask,
    cfg: &SolverConfig,
) -> Result<PruneOutcome> {
    if mask.shape() != w.shape() {
        return Err(Error::shape(
            "admm_fixed_mask",
            format!("mask {:?} vs weights {:?}", mask.shape(), w.shape()),
        ));
    }
    if cfg.iterations == 0 {
        return Err(Error::config("iterations", "must be at least 1"));
    }
    let mut clock = Stopwatch::start();
    let prob = precondition(w, x, cfg)?;
    let mut state = AdmmState::new(&prob);
    let mut records = Vec::with_capacity(cfg.iterations);
    let sparsity = mask.sparsity();
    let mut next_mask = Some(mask.clone());
    for step in 1..=cfg.iterations {
        state = admm_iteration(state, &prob, next_mask.take())?;
        clock.pause();
        records.push(IterRecord {
            iter: step,
            seconds: clock.seconds(),
            objective: prob.objective(&state.candidate())?,
            sparsity,
        });
        clock.resume();
    }
    finish(prob, state, records, cfg)
}

fn finish(
    prob: PreconditionedProblem,
    state: AdmmState,
    records: Vec<IterRecord>,
    cfg: &SolverConfig,
) -> Result<PruneOutcome> {
    let weights = prob.unscale(&state.candidate())?;
    let final_objective = records.last().map_or(0.0, |r| r.objective);
    let report = PruneReport {
        layer: String::new(),
        records,
        summary: ReportSummary {
            final_objective,
            final_density: state.mask.density(),
            config: *cfg,
        },
    };
    Ok(PruneOutcome {
        weights,
        mask: state.mask,
        report,
    })
}

/// Undamped reconstruction error `||X W_ref - X W_hat||_F^2`.
pub fn reconstruction_error(x: &Matrix, w_ref: &Matrix, w_hat: &Matrix) -> Result<f64> {
    let a = matmul(x, w_ref)?;
    let b = matmul(x, w_hat)?;
    Ok(a.sub(&b)?.frobenius_sq())
}
