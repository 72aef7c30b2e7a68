// The cubic sparsity schedule, and gradual mask selection against choosing
// the final mask in the first iteration.

use admm_prune::bench::{gen_synthetic, schedule_csv, InputDist};
use admm_prune::{prune_layer, reconstruction_error, SolverConfig, SparsitySchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", schedule_csv(&SparsitySchedule::new(0.7, 15)?));

    let mut wins = 0;
    for seed in 0..5 {
        let p = gen_synthetic(64, 32, 256, seed, InputDist::Gaussian)?;
        let (w, x) = (&p.weights, &p.calib);
        let gradual = SolverConfig::default().with_sparsity(0.7);
        let one_shot = gradual.with_iterations(20, 1);
        let g = reconstruction_error(x, w, &prune_layer(w, x, &gradual)?.weights)?;
        let o = reconstruction_error(x, w, &prune_layer(w, x, &one_shot)?.weights)?;
        wins += usize::from(g <= o);
        println!("seed {seed}: gradual {g:.6e}  one-shot {o:.6e}");
    }
    println!("gradual no worse on {wins}/5 seeds");
    Ok(())
}
