// Sequential pruning of a three-layer ReLU network. Each layer is
// calibrated on the outputs of the already pruned layers before it; the
// alternative calibrates on the dense network's activations.

use admm_prune::bench::{gen_chain, prune_chain, Activation, ChainSpec, Propagation};
use admm_prune::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = gen_chain(&[48, 48, 48, 48], 256, 11, Activation::Relu)?;
    let cfg = SolverConfig::default().with_sparsity(0.5);

    for propagation in [Propagation::Pruned, Propagation::Dense] {
        let out = prune_chain(&ChainSpec {
            chain: chain.clone(),
            configs: vec![cfg],
            propagation,
        })?;
        let per_layer: Vec<String> = out
            .reports
            .iter()
            .map(|r| format!("{:.3e}", r.summary.final_objective))
            .collect();
        println!(
            "{propagation:?}: end-to-end relative error {:.4}, layer objectives [{}]",
            out.relative_error,
            per_layer.join(", ")
        );
    }
    Ok(())
}
