// 2:4 structured pruning: every group of four consecutive inputs feeding an
// output keeps exactly two weights.

use admm_prune::bench::{gen_synthetic, InputDist};
use admm_prune::{prune_layer, SolverConfig, StructurePattern};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = gen_synthetic(32, 8, 128, 3, InputDist::Gaussian)?;
    let cfg = SolverConfig::default().with_structure(StructurePattern::TWO_FOUR);
    let out = prune_layer(&problem.weights, &problem.calib, &cfg)?;

    let (m, n) = out.mask.shape();
    for j in 0..n {
        for g in (0..m).step_by(4) {
            let kept = (g..g + 4).filter(|&i| out.mask.is_kept(i, j)).count();
            assert_eq!(kept, 2, "column {j} group {g}");
        }
    }
    println!("pattern of output 0, groups of four inputs:");
    let rows: Vec<String> = (0..m)
        .step_by(4)
        .map(|g| (g..g + 4).map(|i| if out.mask.is_kept(i, 0) { '#' } else { '.' }).collect())
        .collect();
    println!("{}", rows.join(" "));
    println!(
        "density={} objective={:.6e}",
        out.mask.density(),
        out.report.summary.final_objective
    );
    Ok(())
}
