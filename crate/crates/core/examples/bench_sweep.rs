// Updater benchmark over a step and learning-rate grid, printing the best
// objective each updater reaches relative to the exact optimum.

use admm_prune::baselines::GdConfig;
use admm_prune::bench::{run_bench, BenchSpec, InputDist, ProblemSource, Updater};
use admm_prune::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = BenchSpec {
        updaters: vec![Updater::Admm, Updater::Adam, Updater::Sgd],
        steps: vec![1, 10, 20, 50, 100],
        learning_rates: vec![1e-4, 1e-3, 1e-2],
        seeds: vec![0, 1, 2],
        source: ProblemSource::Synthetic {
            m: 64,
            n: 32,
            samples: 256,
            dist: InputDist::Gaussian,
        },
        solver: SolverConfig::default(),
        gd: GdConfig::default(),
    };
    let rows = run_bench(&spec)?;

    for &seed in &spec.seeds {
        let oracle = rows
            .iter()
            .find(|r| r.seed == seed && r.updater == Updater::Oracle)
            .map(|r| r.objective)
            .expect("every instance has an oracle row");
        println!("seed {seed}");
        for &updater in &spec.updaters {
            let gaps: Vec<String> = spec
                .steps
                .iter()
                .map(|&k| {
                    let best = rows
                        .iter()
                        .filter(|r| r.seed == seed && r.updater == updater && r.steps == k)
                        .map(|r| r.objective)
                        .fold(f64::INFINITY, f64::min);
                    format!("{k}:{:.1e}", best / oracle - 1.0)
                })
                .collect();
            println!("  {:<5} {}", updater.name(), gaps.join("  "));
        }
    }
    Ok(())
}
