//! Comparison updaters over a fixed mask: the exact per-column masked ridge
//! solution, and projected SGD-with-momentum and Adam on the same damped,
//! preconditioned objective the ADMM solver minimises.

use crate::error::{Error, Result};
use crate::masking::Mask;
use crate::report::{IterRecord, PruneReport, ReportSummary, Stopwatch};
use crate::solver::{frobenius_inner, precondition, scale_problem, SolverConfig};
use crate::tensor::{matmul, spd_factor, Matrix};

/// Optimal weights for a fixed mask.
///
/// Every output column is an independent least-squares problem restricted to
/// its kept inputs: `G[S,S] w_S = (G w)[S]` with `G = X_s^T X_s + lambda I`
/// in preconditioned coordinates. Columns that keep every input return the
/// original weights unchanged.
pub fn exact_masked_solve(
    w: &Matrix,
    x: &Matrix,
    mask: &Mask,
    lambda: f64,
    eps: f64,
) -> Result<Matrix> {
    if mask.shape() != w.shape() {
        return Err(Error::shape(
            "exact_masked_solve",
            format!("mask {:?} vs weights {:?}", mask.shape(), w.shape()),
        ));
    }
    let (norms, w_scaled, gram_damped) = scale_problem(w, x, lambda, eps)?;
    let rhs = matmul(&gram_damped, &w_scaled)?;
    let (m, n) = w.shape();
    let mut out = Matrix::zeros(m, n);
    let mut support = Vec::with_capacity(m);

    for j in 0..n {
        support.clear();
        support.extend((0..m).filter(|&i| mask.is_kept(i, j)));
        if support.is_empty() {
            continue;
        }
        if support.len() == m {
            for i in 0..m {
                out.set(i, j, w.get(i, j));
            }
            continue;
        }
        let k = support.len();
        let a = Matrix::from_fn(k, k, |p, q| gram_damped.get(support[p], support[q]));
        let b = Matrix::from_fn(k, 1, |p, _| rhs.get(support[p], j));
        let factor = match spd_factor(&a) {
            Ok(f) => f,
            Err(Error::NotPositiveDefinite { .. }) => {
                return Err(Error::SingularRestrictedSystem { column: j })
            }
            Err(e) => return Err(e),
        };
        let sol = factor.solve(&b)?;
        for (p, &i) in support.iter().enumerate() {
            out.set(i, j, sol.get(p, 0) / norms[i]);
        }
    }
    Ok(out)
}

/// Gradient of half the damped objective with respect to the kept
/// parameters: `(G (M * w_hat - w)) * M`. All arguments are in
/// preconditioned coordinates.
pub fn masked_objective_gradient(
    w: &Matrix,
    w_hat: &Matrix,
    mask: &Mask,
    gram_damped: &Matrix,
) -> Result<Matrix> {
    let diff = mask.apply(w_hat)?.sub(w)?;
    let g = matmul(gram_damped, &diff)?;
    mask.apply(&g)
}

/// Which first-order method [`run_fixed_mask_gd`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdVariant {
    SgdMomentum,
    Adam,
}

impl GdVariant {
    pub fn name(&self) -> &'static str {
        match self {
            GdVariant::SgdMomentum => "sgd",
            GdVariant::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub learning_rate: f64,
    /// Heavy-ball momentum for SGD.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub steps: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            steps: 100,
        }
    }
}

impl GdConfig {
    pub fn new(learning_rate: f64, steps: usize) -> Self {
        Self {
            learning_rate,
            steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must be in [0, 1)"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return Err(Error::config("beta1", "must be in (0, 1)"));
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::config("beta2", "must be in (0, 1)"));
        }
        if self.eps_adam.is_nan() || self.eps_adam <= 0.0 {
            return Err(Error::config("eps_adam", "must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Result of a gradient run: the trace is kept even when the run diverges.
#[derive(Debug, Clone)]
pub struct GdTrace {
    pub weights: Option<Matrix>,
    pub report: PruneReport,
    pub diverged_at: Option<usize>,
}

/// Projected first-order descent on the damped objective over a fixed mask,
/// starting from the masked original weights. Pruned coordinates are pinned
/// to zero after every step.
pub fn run_fixed_mask_gd(
    w: &Matrix,
    x: &Matrix,
    mask: &Mask,
    cfg: &GdConfig,
    variant: GdVariant,
    solver_cfg: &SolverConfig,
) -> Result<(Matrix, PruneReport)> {
    let trace = trace_fixed_mask_gd(w, x, mask, cfg, variant, solver_cfg)?;
    match (trace.weights, trace.diverged_at) {
        (Some(weights), None) => Ok((weights, trace.report)),
        (_, step) => Err(Error::Divergence {
            step: step.unwrap_or(0),
            objective: trace.report.records.last().map_or(f64::NAN, |r| r.objective),
        }),
    }
}

/// Objective above this multiple of the starting objective counts as
/// divergence.
const DIVERGENCE_FACTOR: f64 = 1e12;

/// Like [`run_fixed_mask_gd`] but returns the partial trace on divergence.
pub fn trace_fixed_mask_gd(
    w: &Matrix,
    x: &Matrix,
    mask: &Mask,
    cfg: &GdConfig,
    variant: GdVariant,
    solver_cfg: &SolverConfig,
) -> Result<GdTrace> {
    cfg.validate()?;
    if mask.shape() != w.shape() {
        return Err(Error::shape(
            "run_fixed_mask_gd",
            format!("mask {:?} vs weights {:?}", mask.shape(), w.shape()),
        ));
    }
    let mut clock = Stopwatch::start();
    let (norms, w_scaled, gram) = scale_problem(w, x, solver_cfg.lambda, solver_cfg.eps)?;
    let gram_w = matmul(&gram, &w_scaled)?;
    let bits = mask.bits();

    let mut w_hat = mask.apply(&w_scaled)?;
    let mut g_what = matmul(&gram, &w_hat)?;
    let objective_of = |w_hat: &Matrix, g_what: &Matrix| -> f64 {
        // D = W - W_hat and G D = G W - G W_hat
        let d = w_scaled.sub(w_hat).expect("congruent");
        let gd = gram_w.sub(g_what).expect("congruent");
        frobenius_inner(&d, &gd)
    };
    let initial = objective_of(&w_hat, &g_what);
    let limit = if initial > 0.0 {
        DIVERGENCE_FACTOR * initial
    } else {
        f64::INFINITY
    };

    let len = w_hat.data().len();
    let mut first = vec![0.0; len];
    let mut second = vec![0.0; len];
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let lr = cfg.learning_rate;
    let sparsity = mask.sparsity();
    let mut records = Vec::with_capacity(cfg.steps);
    let mut diverged_at = None;

    for step in 1..=cfg.steps {
        let bias1 = 1.0 - b1.powi(step as i32);
        let bias2 = 1.0 - b2.powi(step as i32);
        let gw = g_what.data();
        let gram_w = gram_w.data();
        for (idx, v) in w_hat.data_mut().iter_mut().enumerate() {
            if !bits[idx] {
                *v = 0.0;
                continue;
            }
            let grad = gw[idx] - gram_w[idx];
            match variant {
                GdVariant::SgdMomentum => {
                    first[idx] = cfg.momentum * first[idx] + grad;
                    *v -= lr * first[idx];
                }
                GdVariant::Adam => {
                    first[idx] = b1 * first[idx] + (1.0 - b1) * grad;
                    second[idx] = b2 * second[idx] + (1.0 - b2) * grad * grad;
                    let m_hat = first[idx] / bias1;
                    let v_hat = second[idx] / bias2;
                    *v -= lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
                }
            }
        }
        g_what = matmul(&gram, &w_hat)?;

        clock.pause();
        let objective = objective_of(&w_hat, &g_what);
        records.push(IterRecord {
            iter: step,
            seconds: clock.seconds(),
            objective,
            sparsity,
        });
        if !objective.is_finite() || objective > limit {
            diverged_at = Some(step);
            break;
        }
        clock.resume();
    }

    let final_objective = records.last().map_or(initial, |r| r.objective);
    let report = PruneReport {
        layer: String::new(),
        records,
        summary: ReportSummary {
            final_objective,
            final_density: mask.density(),
            config: *solver_cfg,
        },
    };
    let weights = match diverged_at {
        Some(_) => None,
        None => Some(w_hat.div_rows(&norms)?),
    };
    Ok(GdTrace {
        weights,
        report,
        diverged_at,
    })
}

/// Damped objective of unscaled weights `w_hat` against `w`, using the same
/// preconditioning as the solver.
pub fn damped_objective(
    w: &Matrix,
    x: &Matrix,
    w_hat: &Matrix,
    lambda: f64,
    eps: f64,
) -> Result<f64> {
    let cfg = SolverConfig {
        lambda,
        eps,
        ..SolverConfig::default()
    };
    precondition(w, x, &cfg)?.objective_unscaled(w_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{select_topk_mask, wanda_scores};
    use crate::tensor::column_norms;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn instance(seed: u64, m: usize, n: usize, samples: usize) -> (Matrix, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = gaussian(m, n, &mut rng);
        let x = gaussian(samples, m, &mut rng);
        (w, x)
    }

    fn wanda_mask(w: &Matrix, x: &Matrix, s: f64) -> Mask {
        select_topk_mask(&wanda_scores(w, &column_norms(x, 1e-8)).unwrap(), s)
    }

    #[test]
    fn oracle_trivial_masks() {
        let (w, x) = instance(1, 8, 4, 32);
        let all = exact_masked_solve(&w, &x, &Mask::ones(8, 4), 0.1, 1e-8).unwrap();
        assert_eq!(all, w);
        let none = exact_masked_solve(&w, &x, &Mask::zeros(8, 4), 0.1, 1e-8).unwrap();
        assert_eq!(none, Matrix::zeros(8, 4));
    }

    #[test]
    fn oracle_beats_random_feasible_perturbations() {
        let (w, x) = instance(2, 16, 4, 64);
        let mask = wanda_mask(&w, &x, 0.5);
        let sol = exact_masked_solve(&w, &x, &mask, 0.1, 1e-8).unwrap();
        let best = damped_objective(&w, &x, &sol, 0.1, 1e-8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            let noise = Matrix::from_fn(16, 4, |_, _| scale * rng.random_range(-1.0..1.0));
            let probe = mask.apply(&sol.add(&noise).unwrap()).unwrap();
            let obj = damped_objective(&w, &x, &probe, 0.1, 1e-8).unwrap();
            assert!(obj >= best, "{obj} < {best}");
        }
    }

    #[test]
    fn oracle_satisfies_restricted_normal_equations() {
        let (w, x) = instance(3, 12, 5, 48);
        let mask = wanda_mask(&w, &x, 0.6);
        let sol = exact_masked_solve(&w, &x, &mask, 0.1, 1e-8).unwrap();
        let (norms, ws, g) = scale_problem(&w, &x, 0.1, 1e-8).unwrap();
        let sol_s = sol.scale_rows(&norms).unwrap();
        // G (w_hat - w) vanishes on the support
        let resid = matmul(&g, &sol_s.sub(&ws).unwrap()).unwrap();
        let rhs = matmul(&g, &ws).unwrap();
        for i in 0..12 {
            for j in 0..5 {
                if mask.is_kept(i, j) {
                    assert!(resid.get(i, j).abs() <= 1e-9 * rhs.frobenius());
                } else {
                    assert_eq!(sol.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn oracle_singular_without_damping() {
        // two identical input features: any column keeping both is singular
        let x = Matrix::from_rows(&[[1.0, 1.0, 0.0], [2.0, 2.0, 1.0]]);
        let w = Matrix::from_rows(&[[1.0], [1.0], [1.0]]);
        let mask = Mask::new(3, 1, vec![true, true, false]).unwrap();
        assert!(matches!(
            exact_masked_solve(&w, &x, &mask, 0.0, 0.0),
            Err(Error::SingularRestrictedSystem { column: 0 })
        ));
        assert!(exact_masked_solve(&w, &x, &mask, 0.1, 0.0).is_ok());
    }

    #[test]
    fn gradient_examples() {
        let w = Matrix::from_rows(&[[2.0]]);
        let g = Matrix::from_rows(&[[1.0]]);
        let m = Mask::ones(1, 1);
        let grad = masked_objective_gradient(&w, &Matrix::zeros(1, 1), &m, &g).unwrap();
        assert_eq!(grad.data(), &[-2.0]);
        let zero = masked_objective_gradient(&w, &w, &m, &g).unwrap();
        assert_eq!(zero.data(), &[0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (w, x) = instance(4, 6, 3, 20);
        let mask = wanda_mask(&w, &x, 0.5);
        let (_, ws, g) = scale_problem(&w, &x, 0.1, 1e-8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w_hat = Matrix::from_fn(6, 3, |_, _| rng.random_range(-2.0..2.0));
        let half_obj = |wh: &Matrix| {
            let d = ws.sub(&mask.apply(wh).unwrap()).unwrap();
            0.5 * frobenius_inner(&d, &matmul(&g, &d).unwrap())
        };
        let grad = masked_objective_gradient(&ws, &w_hat, &mask, &g).unwrap();
        let h = 1e-4;
        for idx in 0..18 {
            let mut plus = w_hat.clone();
            let mut minus = w_hat.clone();
            plus.data_mut()[idx] += h;
            minus.data_mut()[idx] -= h;
            let fd = (half_obj(&plus) - half_obj(&minus)) / (2.0 * h);
            let an = grad.data()[idx];
            if !mask.bits()[idx] {
                assert_eq!(an, 0.0);
            }
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{idx}: {fd} vs {an}");
        }
    }

    #[test]
    fn tiny_learning_rate_barely_moves() {
        let (w, x) = instance(6, 8, 4, 32);
        let mask = wanda_mask(&w, &x, 0.5);
        let cfg = SolverConfig::default();
        let start = damped_objective(&w, &x, &mask.apply(&w).unwrap(), 0.1, 1e-8).unwrap();
        for variant in [GdVariant::SgdMomentum, GdVariant::Adam] {
            let (_, rep) =
                run_fixed_mask_gd(&w, &x, &mask, &GdConfig::new(1e-20, 1), variant, &cfg).unwrap();
            let end = rep.records[0].objective;
            assert!((end - start).abs() <= 1e-12 * start, "{variant:?}");
        }
    }

    #[test]
    fn adam_first_step_does_not_increase_objective() {
        let (w, x) = instance(7, 16, 8, 64);
        let cfg = SolverConfig::default();
        let (_, rep) =
            run_fixed_mask_gd(&w, &x, &Mask::ones(16, 8), &GdConfig::new(1e-3, 1), GdVariant::Adam, &cfg)
                .unwrap();
        assert!(rep.records[0].objective <= 1e-20);

        let mask = wanda_mask(&w, &x, 0.5);
        let start = damped_objective(&w, &x, &mask.apply(&w).unwrap(), 0.1, 1e-8).unwrap();
        let (_, rep) =
            run_fixed_mask_gd(&w, &x, &mask, &GdConfig::new(1e-3, 1), GdVariant::Adam, &cfg).unwrap();
        assert!(rep.records[0].objective <= start);
    }

    #[test]
    fn divergence_is_reported() {
        let (w, x) = instance(8, 8, 4, 32);
        let mask = wanda_mask(&w, &x, 0.5);
        let cfg = GdConfig {
            momentum: 0.0,
            ..GdConfig::new(1e3, 50)
        };
        let err = run_fixed_mask_gd(&w, &x, &mask, &cfg, GdVariant::SgdMomentum, &SolverConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        let trace =
            trace_fixed_mask_gd(&w, &x, &mask, &cfg, GdVariant::SgdMomentum, &SolverConfig::default())
                .unwrap();
        let step = trace.diverged_at.unwrap();
        assert_eq!(trace.report.records.len(), step);
    }

    #[test]
    fn gd_config_validation() {
        assert!(GdConfig::new(0.0, 1).validate().is_err());
        assert!(GdConfig::new(1e-3, 0).validate().is_err());
        assert!(GdConfig { momentum: 1.0, ..GdConfig::default() }.validate().is_err());
        assert!(GdConfig { beta2: 1.0, ..GdConfig::default() }.validate().is_err());
    }
}
