// Gradual pruning of one synthetic layer to 60% sparsity, printing the
// per-iteration trace and comparing against Wanda's mask with no update.

use admm_prune::bench::{gen_synthetic, InputDist};
use admm_prune::masking::{select_topk_mask, wanda_scores};
use admm_prune::tensor::column_norms;
use admm_prune::{prune_layer, reconstruction_error, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = gen_synthetic(64, 32, 256, 7, InputDist::Correlated)?;
    let (w, x) = (&problem.weights, &problem.calib);
    let cfg = SolverConfig::default().with_sparsity(0.6);

    let out = prune_layer(w, x, &cfg)?;
    println!("iter  target   objective");
    for r in &out.report.records {
        println!("{:>4}  {:.4}  {:.6e}", r.iter, r.sparsity, r.objective);
    }

    let wanda = select_topk_mask(&wanda_scores(w, &column_norms(x, cfg.eps))?, 0.6);
    let admm_err = reconstruction_error(x, w, &out.weights)?;
    let wanda_err = reconstruction_error(x, w, &wanda.apply(w)?)?;
    println!("density={} admm_error={admm_err:.6e} wanda_error={wanda_err:.6e}", out.mask.density());
    assert!(admm_err < wanda_err);
    Ok(())
}
