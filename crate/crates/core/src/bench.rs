//! Synthetic problems, the fixed-mask updater benchmark and chained
//! multi-layer pruning.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::{damped_objective, exact_masked_solve, trace_fixed_mask_gd, GdConfig, GdVariant};
use crate::error::{Error, Result};
use crate::io::{self, format_number, Dtype, ProblemBundle};
use crate::masking::{cubic_sparsity, wanda_scores, Mask, SparsitySchedule};
use crate::report::PruneReport;
use crate::solver::{admm_fixed_mask, prune_layer, select_mask, SolverConfig};
use crate::tensor::{column_norms, matmul, Matrix};

/// Distribution of generated calibration inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputDist {
    /// i.i.d. standard normal features.
    #[default]
    Gaussian,
    /// Rows `z G / sqrt(m)` for standard normal `z` and a seeded Gaussian
    /// `G`, so the feature covariance is `G^T G / m`.
    Correlated,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn check_dims(dims: &[(&'static str, usize)]) -> Result<()> {
    match dims.iter().find(|(_, v)| *v == 0) {
        Some((field, _)) => Err(Error::config(field, "must be at least 1")),
        None => Ok(()),
    }
}

/// Random layer problem with `m` inputs, `n` outputs and `samples`
/// calibration rows. Weights are i.i.d. standard normal. The same seed always
/// yields the same bundle.
pub fn gen_synthetic(
    m: usize,
    n: usize,
    samples: usize,
    seed: u64,
    dist: InputDist,
) -> Result<ProblemBundle> {
    check_dims(&[("m", m), ("n", n), ("samples", samples)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = normal_matrix(&mut rng, m, n);
    let calib = match dist {
        InputDist::Gaussian => normal_matrix(&mut rng, samples, m),
        InputDist::Correlated => {
            let mix = normal_matrix(&mut rng, m, m).scale(1.0 / (m as f64).sqrt());
            matmul(&normal_matrix(&mut rng, samples, m), &mix)?
        }
    };
    ProblemBundle::new(format!("synthetic-{m}x{n}-s{seed}"), weights, calib)
}

/// Nonlinearity applied after every layer of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    None,
    Relu,
}

impl Activation {
    pub fn apply(self, m: Matrix) -> Matrix {
        match self {
            Activation::None => m,
            Activation::Relu => m.map(|v| v.max(0.0)),
        }
    }
}

/// A stack of linear layers `Y = act(... act(act(X0 W1) W2) ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub input: Matrix,
    pub layers: Vec<Matrix>,
    pub activation: Activation,
}

impl Chain {
    pub fn new(input: Matrix, layers: Vec<Matrix>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("layers", "chain needs at least one layer"));
        }
        let mut width = input.cols();
        for (l, w) in layers.iter().enumerate() {
            if w.rows() != width {
                return Err(Error::shape(
                    "chain",
                    format!("layer {l} expects {} inputs but receives {width}", w.rows()),
                ));
            }
            width = w.cols();
        }
        Ok(Self {
            input,
            layers,
            activation,
        })
    }

    /// Output of the chain with the given weights in place of its own.
    pub fn forward_with(&self, layers: &[Matrix]) -> Result<Matrix> {
        let mut h = self.input.clone();
        for w in layers {
            h = self.activation.apply(matmul(&h, w)?);
        }
        Ok(h)
    }

    pub fn forward(&self) -> Result<Matrix> {
        self.forward_with(&self.layers)
    }
}

/// Random chain with layer widths `widths[0] -> widths[1] -> ...`. Weights are
/// standard normal scaled by `1/sqrt(fan_in)` so activations stay O(1).
pub fn gen_chain(
    widths: &[usize],
    samples: usize,
    seed: u64,
    activation: Activation,
) -> Result<Chain> {
    if widths.len() < 2 {
        return Err(Error::config("widths", "need at least an input and an output width"));
    }
    if widths.contains(&0) {
        return Err(Error::config("widths", "must be at least 1"));
    }
    check_dims(&[("samples", samples)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = normal_matrix(&mut rng, samples, widths[0]);
    let layers = widths
        .windows(2)
        .map(|d| normal_matrix(&mut rng, d[0], d[1]).scale(1.0 / (d[0] as f64).sqrt()))
        .collect();
    Chain::new(input, layers, activation)
}

/// Where each layer's calibration inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Propagation {
    /// Outputs of the already pruned preceding layers.
    #[default]
    Pruned,
    /// Outputs of the original dense chain.
    Dense,
}

#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub chain: Chain,
    /// One config per layer, or a single config shared by all layers.
    pub configs: Vec<SolverConfig>,
    pub propagation: Propagation,
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub weights: Vec<Matrix>,
    pub masks: Vec<Mask>,
    pub reports: Vec<PruneReport>,
    pub output: Matrix,
    pub dense_output: Matrix,
    /// `||output - dense_output||_F / ||dense_output||_F`.
    pub relative_error: f64,
}

/// Prunes the layers of a chain in order. Each layer is calibrated on the
/// inputs it receives in the chain, taken from the pruned or the dense
/// forward pass.
pub fn prune_chain(spec: &ChainSpec) -> Result<ChainOutcome> {
    let chain = &spec.chain;
    let n_layers = chain.layers.len();
    let config_for = |l: usize| -> Result<&SolverConfig> {
        match spec.configs.len() {
            1 => Ok(&spec.configs[0]),
            k if k == n_layers => Ok(&spec.configs[l]),
            k => Err(Error::config(
                "configs",
                format!("{k} configs for {n_layers} layers"),
            )),
        }
    };

    let mut pruned_in = chain.input.clone();
    let mut dense_in = chain.input.clone();
    let mut out = ChainOutcome {
        weights: Vec::with_capacity(n_layers),
        masks: Vec::with_capacity(n_layers),
        reports: Vec::with_capacity(n_layers),
        output: Matrix::zeros(1, 1),
        dense_output: Matrix::zeros(1, 1),
        relative_error: 0.0,
    };
    for (l, w) in chain.layers.iter().enumerate() {
        let calib = match spec.propagation {
            Propagation::Pruned => &pruned_in,
            Propagation::Dense => &dense_in,
        };
        let mut res = prune_layer(w, calib, config_for(l)?)?;
        res.report.layer = format!("layer{l}");
        pruned_in = chain.activation.apply(matmul(&pruned_in, &res.weights)?);
        dense_in = chain.activation.apply(matmul(&dense_in, w)?);
        out.weights.push(res.weights);
        out.masks.push(res.mask);
        out.reports.push(res.report);
    }
    out.relative_error = relative_distance(&pruned_in, &dense_in)?;
    out.output = pruned_in;
    out.dense_output = dense_in;
    Ok(out)
}

/// `||a - b||_F / ||b||_F`, or `||a||_F` when `b` is zero.
pub fn relative_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    let diff = a.sub(b)?.frobenius();
    let scale = b.frobenius();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Chain directory file holding the input and layer tensor paths.
pub const CHAIN_FILE: &str = "chain.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainManifest {
    pub input_path: String,
    pub layers: Vec<String>,
    #[serde(default)]
    pub activation: Activation,
}

pub fn write_chain(dir: impl AsRef<Path>, chain: &Chain) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_tensor(dir.join("input.tensor"), &chain.input, Dtype::F64)?;
    let mut layers = Vec::with_capacity(chain.layers.len());
    for (l, w) in chain.layers.iter().enumerate() {
        let name = format!("layer{l}.tensor");
        io::write_tensor(dir.join(&name), w, Dtype::F64)?;
        layers.push(name);
    }
    let manifest = ChainManifest {
        input_path: "input.tensor".into(),
        layers,
        activation: chain.activation,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("chain manifest serializes");
    io::write_text(&dir.join(CHAIN_FILE), &(text + "\n"))
}

pub fn load_chain(dir: impl AsRef<Path>) -> Result<Chain> {
    let dir = dir.as_ref();
    let path = dir.join(CHAIN_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ChainManifest = serde_json::from_str(&text).map_err(|e| Error::Bundle {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let input = io::read_tensor(dir.join(&manifest.input_path))?;
    let layers = manifest
        .layers
        .iter()
        .map(|p| io::read_tensor(dir.join(p)))
        .collect::<Result<Vec<_>>>()?;
    Chain::new(input, layers, manifest.activation)
}

/// Weight updater compared by the benchmark. The order is the row order of
/// benchmark output.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Updater {
    Oracle,
    Admm,
    Adam,
    Sgd,
}

impl Updater {
    pub fn name(self) -> &'static str {
        match self {
            Updater::Oracle => "oracle",
            Updater::Admm => "admm",
            Updater::Adam => "adam",
            Updater::Sgd => "sgd",
        }
    }

    fn gd_variant(self) -> Option<GdVariant> {
        match self {
            Updater::Adam => Some(GdVariant::Adam),
            Updater::Sgd => Some(GdVariant::SgdMomentum),
            _ => None,
        }
    }
}

/// Problem instances for a benchmark: one per seed.
#[derive(Debug, Clone)]
pub enum ProblemSource {
    /// The same bundle for every seed.
    Bundle(ProblemBundle),
    Synthetic {
        m: usize,
        n: usize,
        samples: usize,
        dist: InputDist,
    },
}

impl ProblemSource {
    pub fn instance(&self, seed: u64) -> Result<ProblemBundle> {
        match self {
            ProblemSource::Bundle(b) => Ok(b.clone()),
            &ProblemSource::Synthetic {
                m,
                n,
                samples,
                dist,
            } => gen_synthetic(m, n, samples, seed, dist),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub updaters: Vec<Updater>,
    /// Iteration counts at which each updater is evaluated.
    pub steps: Vec<usize>,
    /// Learning rates for the gradient updaters.
    pub learning_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub source: ProblemSource,
    /// Supplies `rho`, `lambda`, `eps`, the target sparsity and structure.
    pub solver: SolverConfig,
    /// Momentum and Adam constants; `learning_rate` and `steps` are
    /// overridden by the grids.
    pub gd: GdConfig,
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.updaters.is_empty() {
            return Err(Error::config("updaters", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        if self.steps.is_empty() || self.steps.contains(&0) {
            return Err(Error::config("steps", "need at least one positive step count"));
        }
        let needs_lr = self.updaters.iter().any(|u| u.gd_variant().is_some());
        if needs_lr && self.learning_rates.is_empty() {
            return Err(Error::config("learning_rates", "gradient updaters need a learning rate"));
        }
        for &lr in &self.learning_rates {
            GdConfig { learning_rate: lr, ..self.gd }.validate()?;
        }
        self.solver.validate()
    }
}

/// One benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub updater: Updater,
    pub lr: Option<f64>,
    pub steps: usize,
    pub seed: u64,
    pub seconds: f64,
    /// Damped objective; infinite when the updater diverged.
    pub objective: f64,
}

impl BenchRow {
    fn sort_key(&self, other: &Self) -> Ordering {
        self.seed
            .cmp(&other.seed)
            .then(self.updater.cmp(&other.updater))
            .then(match (self.lr, other.lr) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                (a, b) => a.is_some().cmp(&b.is_some()),
            })
            .then(self.steps.cmp(&other.steps))
    }
}

/// The fixed mask every updater is benchmarked on: Wanda scores
/// `|W_ij| * ||X_j||` at the target sparsity and structure.
pub fn bench_mask(w: &Matrix, x: &Matrix, cfg: &SolverConfig) -> Result<Mask> {
    let norms = column_norms(x, cfg.eps);
    select_mask(&wanda_scores(w, &norms)?, cfg.sparsity, cfg)
}

/// Runs every (updater, steps, learning rate) cell on every seed.
///
/// Each instance also gets an `oracle` row with the exact optimum for the
/// mask, whether or not it was requested. A run is traced once to the largest
/// step count and read off at each grid point, which equals separate runs
/// because neither updater depends on the total step budget. Rows come back
/// sorted by seed, updater, learning rate and steps.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let max_steps = *spec.steps.iter().max().expect("validated non-empty");
    let cfg = &spec.solver;
    let mut rows = Vec::new();

    for &seed in &spec.seeds {
        let inst = spec.source.instance(seed)?;
        let (w, x) = (&inst.weights, &inst.calib);
        let mask = bench_mask(w, x, cfg)?;

        let t0 = Instant::now();
        let exact = exact_masked_solve(w, x, &mask, cfg.lambda, cfg.eps)?;
        let seconds = t0.elapsed().as_secs_f64();
        rows.push(BenchRow {
            updater: Updater::Oracle,
            lr: None,
            steps: 0,
            seed,
            seconds,
            objective: damped_objective(w, x, &exact, cfg.lambda, cfg.eps)?,
        });

        let mut updaters = spec.updaters.clone();
        updaters.sort();
        updaters.dedup();
        for updater in updaters {
            match (updater, updater.gd_variant()) {
                (Updater::Oracle, _) => {}
                (Updater::Admm, _) => {
                    let run_cfg = SolverConfig {
                        iterations: max_steps,
                        sparsify_steps: 1,
                        ..*cfg
                    };
                    let trace = admm_fixed_mask(w, x, &mask, &run_cfg)?.report;
                    for &k in &spec.steps {
                        let r = trace.records[k - 1];
                        rows.push(BenchRow {
                            updater,
                            lr: None,
                            steps: k,
                            seed,
                            seconds: r.seconds,
                            objective: r.objective,
                        });
                    }
                }
                (_, Some(variant)) => {
                    for &lr in &spec.learning_rates {
                        let gd = GdConfig {
                            learning_rate: lr,
                            steps: max_steps,
                            ..spec.gd
                        };
                        let trace = trace_fixed_mask_gd(w, x, &mask, &gd, variant, cfg)?;
                        let records = &trace.report.records;
                        for &k in &spec.steps {
                            let diverged = trace.diverged_at.is_some_and(|d| k >= d);
                            let r = records[(k - 1).min(records.len() - 1)];
                            rows.push(BenchRow {
                                updater,
                                lr: Some(lr),
                                steps: k,
                                seed,
                                seconds: r.seconds,
                                objective: if diverged { f64::INFINITY } else { r.objective },
                            });
                        }
                    }
                }
                (Updater::Adam | Updater::Sgd, None) => unreachable!("gradient updaters have a variant"),
            }
        }
    }
    rows.sort_by(BenchRow::sort_key);
    Ok(rows)
}

pub const BENCH_CSV_HEADER: &str = "updater,lr,steps,seed,seconds,objective";

/// Benchmark rows as CSV. `lr` is empty for updaters without one; divergent
/// runs print `inf`.
pub fn bench_to_csv(rows: &[BenchRow], omit_timing: bool) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let lr = r.lr.map(format_number).unwrap_or_default();
        let seconds = if omit_timing { 0.0 } else { r.seconds };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.updater.name(),
            lr,
            r.steps,
            r.seed,
            format_number(seconds),
            format_number(r.objective)
        )
        .expect("writing to a String");
    }
    out
}

/// `t,s_t` rows of the cubic schedule for `t = 0..=steps`.
pub fn schedule_csv(schedule: &SparsitySchedule) -> String {
    let mut out = String::from("t,s_t\n");
    for t in 0..=schedule.steps {
        writeln!(out, "{},{}", t, format_number(cubic_sparsity(t, schedule))).expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::precondition;

    #[test]
    fn same_seed_same_bundle() {
        for dist in [InputDist::Gaussian, InputDist::Correlated] {
            let a = gen_synthetic(6, 3, 10, 42, dist).unwrap();
            let b = gen_synthetic(6, 3, 10, 42, dist).unwrap();
            assert_eq!(io::encode_tensor(&a.weights, Dtype::F64), io::encode_tensor(&b.weights, Dtype::F64));
            assert_eq!(io::encode_tensor(&a.calib, Dtype::F64), io::encode_tensor(&b.calib, Dtype::F64));
            assert_ne!(a.calib, gen_synthetic(6, 3, 10, 43, dist).unwrap().calib);
        }
    }

    #[test]
    fn scaled_gram_diagonal_is_one() {
        let b = gen_synthetic(8, 2, 4096, 1, InputDist::Gaussian).unwrap();
        let cfg = SolverConfig {
            lambda: 0.0,
            ..SolverConfig::default()
        };
        let prob = precondition(&b.weights, &b.calib, &cfg).unwrap();
        for i in 0..8 {
            assert!((prob.gram_damped.get(i, i) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn degenerate_and_invalid_sizes() {
        let b = gen_synthetic(1, 1, 1, 0, InputDist::Correlated).unwrap();
        assert_eq!(b.weights.shape(), (1, 1));
        assert_eq!(b.calib.shape(), (1, 1));
        match gen_synthetic(0, 1, 1, 0, InputDist::Gaussian) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "m"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn correlated_inputs_follow_mixing_covariance() {
        // Sample covariance converges to G^T G / m; check it is far from
        // identity, unlike the Gaussian case.
        let b = gen_synthetic(4, 1, 20000, 3, InputDist::Correlated).unwrap();
        let cov = crate::tensor::gram(&b.calib, 0.0).scale(1.0 / 20000.0);
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| cov.get(i, j).abs())
            .fold(0.0, f64::max);
        assert!(off > 0.1, "max off-diagonal covariance {off}");
    }

    #[test]
    fn schedule_csv_ends_at_final_sparsity() {
        let csv = schedule_csv(&SparsitySchedule::new(0.5, 15).unwrap());
        assert_eq!(csv.lines().next(), Some("t,s_t"));
        assert_eq!(csv.lines().last(), Some("15,0.5"));
        assert_eq!(csv.lines().nth(1), Some("0,0"));
        assert_eq!(csv.lines().count(), 17);
    }

    #[test]
    fn chain_rejects_mismatched_widths() {
        let err = Chain::new(Matrix::zeros(3, 4), vec![Matrix::zeros(4, 2), Matrix::zeros(3, 2)], Activation::None);
        assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn keep_all_chain_matches_dense() {
        let chain = gen_chain(&[6, 5, 4], 32, 9, Activation::Relu).unwrap();
        let cfg = SolverConfig::default().with_sparsity(0.0);
        let out = prune_chain(&ChainSpec {
            chain: chain.clone(),
            configs: vec![cfg],
            propagation: Propagation::Pruned,
        })
        .unwrap();
        assert!(out.relative_error <= 1e-9);
        assert_eq!(out.dense_output, chain.forward().unwrap());
        assert_eq!(out.reports.len(), 2);
        assert_eq!(out.reports[1].layer, "layer1");
    }

    #[test]
    fn identity_relu_chain_is_relu_of_input() {
        let input = Matrix::from_fn(5, 3, |i, j| (i as f64 - 2.0) * (j as f64 + 0.5));
        let chain = Chain::new(input.clone(), vec![Matrix::identity(3), Matrix::identity(3)], Activation::Relu).unwrap();
        let out = prune_chain(&ChainSpec {
            chain,
            configs: vec![SolverConfig::default().with_sparsity(0.0)],
            propagation: Propagation::Pruned,
        })
        .unwrap();
        let expect = input.map(|v| v.max(0.0));
        assert!(relative_distance(&out.output, &expect).unwrap() <= 1e-9);
    }

    #[test]
    fn chain_config_count_must_match() {
        let chain = gen_chain(&[4, 4, 4, 4], 16, 1, Activation::None).unwrap();
        let spec = ChainSpec {
            chain,
            configs: vec![SolverConfig::default(); 2],
            propagation: Propagation::Pruned,
        };
        assert!(matches!(prune_chain(&spec), Err(Error::InvalidConfig { field: "configs", .. })));
    }

    fn small_spec() -> BenchSpec {
        BenchSpec {
            updaters: vec![Updater::Sgd, Updater::Admm, Updater::Adam],
            steps: vec![1, 5, 20],
            learning_rates: vec![1e-3, 1e-2],
            seeds: vec![2, 1],
            source: ProblemSource::Synthetic {
                m: 16,
                n: 8,
                samples: 64,
                dist: InputDist::Gaussian,
            },
            solver: SolverConfig::default(),
            gd: GdConfig::default(),
        }
    }

    #[test]
    fn bench_rows_are_sorted_and_include_oracle() {
        let rows = run_bench(&small_spec()).unwrap();
        // Per seed: oracle + 3 admm + 2 lrs x 3 steps x 2 gd updaters.
        assert_eq!(rows.len(), 2 * (1 + 3 + 12));
        assert!(rows.windows(2).all(|p| p[0].sort_key(&p[1]) != Ordering::Greater));
        for seed in [1, 2] {
            let oracle = rows
                .iter()
                .find(|r| r.seed == seed && r.updater == Updater::Oracle)
                .unwrap()
                .objective;
            for r in rows.iter().filter(|r| r.seed == seed) {
                assert!(r.objective >= oracle * (1.0 - 1e-12), "{r:?} beats oracle {oracle}");
            }
        }
    }

    #[test]
    fn bench_grid_points_equal_separate_runs() {
        let spec = small_spec();
        let rows = run_bench(&spec).unwrap();
        let inst = spec.source.instance(1).unwrap();
        let mask = bench_mask(&inst.weights, &inst.calib, &spec.solver).unwrap();
        let cfg = SolverConfig {
            iterations: 5,
            sparsify_steps: 1,
            ..spec.solver
        };
        let direct = admm_fixed_mask(&inst.weights, &inst.calib, &mask, &cfg).unwrap();
        let row = rows
            .iter()
            .find(|r| r.seed == 1 && r.updater == Updater::Admm && r.steps == 5)
            .unwrap();
        assert_eq!(row.objective, direct.report.summary.final_objective);

        let gd = GdConfig::new(1e-2, 5);
        let (_, rep) = crate::baselines::run_fixed_mask_gd(
            &inst.weights,
            &inst.calib,
            &mask,
            &gd,
            GdVariant::Adam,
            &spec.solver,
        )
        .unwrap();
        let row = rows
            .iter()
            .find(|r| r.seed == 1 && r.updater == Updater::Adam && r.steps == 5 && r.lr == Some(1e-2))
            .unwrap();
        assert_eq!(row.objective, rep.summary.final_objective);
    }

    #[test]
    fn divergence_becomes_infinite_row() {
        let spec = BenchSpec {
            updaters: vec![Updater::Sgd],
            steps: vec![1, 100],
            learning_rates: vec![1e3],
            gd: GdConfig {
                momentum: 0.0,
                ..GdConfig::default()
            },
            ..small_spec()
        };
        let rows = run_bench(&spec).unwrap();
        assert!(rows
            .iter()
            .any(|r| r.updater == Updater::Sgd && r.steps == 100 && r.objective == f64::INFINITY));
        let csv = bench_to_csv(&rows, true);
        assert!(csv.lines().any(|l| l.starts_with("sgd,1000,100,") && l.ends_with(",inf")));
    }

    #[test]
    fn bench_validation() {
        let mut spec = small_spec();
        spec.seeds.clear();
        assert!(matches!(run_bench(&spec), Err(Error::InvalidConfig { field: "seeds", .. })));
        let mut spec = small_spec();
        spec.updaters.clear();
        assert!(matches!(run_bench(&spec), Err(Error::InvalidConfig { field: "updaters", .. })));
        let mut spec = small_spec();
        spec.learning_rates.clear();
        assert!(matches!(run_bench(&spec), Err(Error::InvalidConfig { field: "learning_rates", .. })));
    }
}
