// Weight updates on a fixed 50% mask: ADMM against the exact per-column
// solution and against projected Adam and SGD with momentum.

use admm_prune::baselines::{
    damped_objective, exact_masked_solve, trace_fixed_mask_gd, GdConfig, GdVariant,
};
use admm_prune::bench::{bench_mask, gen_synthetic, InputDist};
use admm_prune::{admm_fixed_mask, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = gen_synthetic(64, 32, 256, 1, InputDist::Gaussian)?;
    let (w, x) = (&problem.weights, &problem.calib);
    let cfg = SolverConfig::default();
    let mask = bench_mask(w, x, &cfg)?;

    let exact = exact_masked_solve(w, x, &mask, cfg.lambda, cfg.eps)?;
    let best = damped_objective(w, x, &exact, cfg.lambda, cfg.eps)?;
    let start = damped_objective(w, x, &mask.apply(w)?, cfg.lambda, cfg.eps)?;
    println!("masked start {start:.6e}, optimum {best:.6e}");

    let admm = admm_fixed_mask(w, x, &mask, &SolverConfig { iterations: 10, ..cfg })?;
    for r in &admm.report.records {
        println!("admm  step {:>3}  gap {:.3e}", r.iter, r.objective / best - 1.0);
    }

    for variant in [GdVariant::Adam, GdVariant::SgdMomentum] {
        for lr in [1e-4, 1e-3, 1e-2] {
            let trace = trace_fixed_mask_gd(w, x, &mask, &GdConfig::new(lr, 100), variant, &cfg)?;
            let last = trace.report.summary.final_objective;
            match trace.diverged_at {
                Some(step) => println!("{:<4}  lr {lr:e}  diverged at step {step}", variant.name()),
                None => println!("{:<4}  lr {lr:e}  100 steps  gap {:.3e}", variant.name(), last / best - 1.0),
            }
        }
    }
    Ok(())
}
