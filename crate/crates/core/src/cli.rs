//! The `admm-prune` command line.
//!
//! Every subcommand prints one `key=value` summary line on success. Exit codes
//! are 0 on success, 2 for invalid flags or configs, 1 for file errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{damped_objective, exact_masked_solve, GdConfig};
use crate::bench::{
    bench_mask, bench_to_csv, gen_chain, gen_synthetic, load_chain, prune_chain, run_bench,
    schedule_csv, write_chain, Activation, BenchSpec, ChainSpec, InputDist, ProblemSource,
    Propagation, Updater,
};
use crate::error::{Error, Result};
use crate::io::{self, Dtype, ProblemBundle, ReportFormat};
use crate::masking::{SparsitySchedule, StructurePattern};
use crate::solver::{prune_layer, MaskRule, SolverConfig};

#[derive(Debug, Parser)]
#[command(name = "admm-prune", version, about = "Layer-wise pruning with ADMM weight updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic layer problem bundle.
    Gen(GenArgs),
    /// Generate a synthetic multi-layer chain.
    GenChain(GenChainArgs),
    /// Prune one layer with gradual ADMM.
    Prune(PruneArgs),
    /// Compare weight updaters on a fixed mask.
    Bench(BenchArgs),
    /// Prune the layers of a chain in sequence.
    Chain(ChainArgs),
    /// Print the cubic sparsity schedule as CSV.
    Schedule(ScheduleArgs),
    /// Exact optimal weights for a fixed mask.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = InputDist::Gaussian)]
    dist: InputDist,
    /// Bundle directory to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenChainArgs {
    /// Layer widths, input first, e.g. 64,64,64,64 for three layers.
    #[arg(long, value_delimiter = ',', default_value = "64,64,64,64")]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Activation::None)]
    activation: Activation,
    /// Chain directory to write.
    #[arg(long)]
    out: PathBuf,
}

/// Where a single-layer problem comes from.
#[derive(Debug, Args)]
struct InputArgs {
    /// Weight tensor (inputs x outputs).
    #[arg(long, requires = "calib", required_unless_present = "bundle", conflicts_with = "bundle")]
    weights: Option<PathBuf>,
    /// Calibration input tensor (samples x inputs).
    #[arg(long, requires = "weights")]
    calib: Option<PathBuf>,
    /// Bundle directory with a manifest.json.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

impl InputArgs {
    fn load(&self) -> Result<ProblemBundle> {
        match (&self.bundle, &self.weights, &self.calib) {
            (Some(dir), _, _) => io::load_bundle(dir),
            (None, Some(w), Some(x)) => {
                let name = w
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "layer".into());
                ProblemBundle::new(name, io::read_tensor(w)?, io::read_tensor(x)?)
            }
            _ => Err(Error::config("bundle", "pass --bundle or both --weights and --calib")),
        }
    }
}

/// Objective and mask-target settings; flags override values from
/// `--config`.
#[derive(Debug, Args)]
struct ObjectiveArgs {
    /// JSON config file; absent keys take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Final sparsity in [0, 1].
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// N:M structured sparsity along the input dimension, e.g. 2:4.
    #[arg(long)]
    structured: Option<StructurePattern>,
}

impl ObjectiveArgs {
    fn apply(&self) -> Result<SolverConfig> {
        let mut cfg = match &self.config {
            Some(path) => io::load_config(path)?,
            None => SolverConfig::default(),
        };
        if let Some(p) = self.structured {
            cfg.structure = Some(p);
            cfg.sparsity = p.final_sparsity();
        }
        if let Some(s) = self.sparsity {
            cfg.sparsity = s;
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        Ok(cfg)
    }

    fn resolve(&self) -> Result<SolverConfig> {
        let cfg = self.apply()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Full solver settings for the gradual pruning commands.
#[derive(Debug, Args)]
struct SolverArgs {
    #[command(flatten)]
    objective: ObjectiveArgs,
    /// Total ADMM iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Iterations during which the mask is reselected.
    #[arg(long)]
    steps: Option<usize>,
    /// wanda_precond or magnitude.
    #[arg(long)]
    mask_rule: Option<MaskRule>,
}

impl SolverArgs {
    fn resolve(&self) -> Result<SolverConfig> {
        let mut cfg = self.objective.apply()?;
        if let Some(k) = self.iters {
            cfg.iterations = k;
            if self.steps.is_none() && cfg.sparsify_steps > k {
                cfg.sparsify_steps = k;
            }
        }
        if let Some(ks) = self.steps {
            cfg.sparsify_steps = ks;
        }
        if let Some(r) = self.mask_rule {
            cfg.mask_rule = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report path; defaults to report.csv or report.json in the output
    /// directory.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    report_format: ReportFormat,
    /// Write zero for every timestamp so reports are byte-reproducible.
    #[arg(long)]
    omit_timing: bool,
}

impl ReportArgs {
    fn path(&self, out_dir: &Path) -> PathBuf {
        self.report.clone().unwrap_or_else(|| {
            out_dir.join(match self.report_format {
                ReportFormat::Csv => "report.csv",
                ReportFormat::Json => "report.json",
            })
        })
    }
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory for weights.tensor and mask.tensor.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "admm,adam,sgd")]
    updaters: Vec<Updater>,
    /// Step counts at which every updater is evaluated.
    #[arg(long, value_delimiter = ',', default_value = "1,10,20,50,100")]
    steps: Vec<usize>,
    /// Learning rates for adam and sgd.
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2")]
    lrs: Vec<f64>,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Explicit seeds; overrides --num-seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Use seeds 0..N.
    #[arg(long, default_value_t = 1)]
    num_seeds: u64,
    /// Benchmark one bundle instead of generated problems.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = InputDist::Gaussian)]
    dist: InputDist,
    #[command(flatten)]
    objective: ObjectiveArgs,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Debug, Args)]
struct ChainArgs {
    /// Chain directory with a chain.json.
    #[arg(long)]
    chain: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Calibrate every layer on dense-chain inputs instead of pruned ones.
    #[arg(long)]
    dense_propagation: bool,
    /// Output directory for pruned layer tensors and masks.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    /// Final sparsity.
    #[arg(long)]
    sf: f64,
    /// Sparsification steps.
    #[arg(long)]
    ks: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    objective: ObjectiveArgs,
    /// Fixed mask tensor; defaults to the Wanda mask at --sparsity.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output directory for weights.tensor and mask.tensor.
    #[arg(long)]
    out: PathBuf,
}

/// Config fields and the flags that set them, for error messages.
const FIELD_FLAGS: &[(&str, &str)] = &[
    ("sparsity", "--sparsity"),
    ("iterations", "--iters"),
    ("sparsify_steps", "--steps"),
    ("rho", "--rho"),
    ("lambda", "--lambda"),
    ("eps", "--eps"),
    ("structured", "--structured"),
    ("mask_rule", "--mask-rule"),
    ("learning_rate", "--lrs"),
    ("momentum", "--momentum"),
    ("seeds", "--seeds"),
    ("steps", "--steps"),
    ("widths", "--widths"),
    ("sf", "--sf"),
    ("ks", "--ks"),
];

fn describe(err: &Error) -> String {
    if let Error::InvalidConfig { field, reason } = err {
        if let Some((_, flag)) = FIELD_FLAGS.iter().find(|(f, _)| f == field) {
            return format!("{flag} ({field}): {reason}");
        }
    }
    err.to_string()
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Summaries go to `out`, diagnostics to `err`; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{e}");
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", describe(&e));
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a, out),
        Command::GenChain(a) => cmd_gen_chain(a, out),
        Command::Prune(a) => cmd_prune(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Chain(a) => cmd_chain(a, out),
        Command::Schedule(a) => cmd_schedule(a, out),
        Command::Oracle(a) => cmd_oracle(a, out),
    }
}

fn emit(out: &mut dyn Write, line: String) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = gen_synthetic(a.m, a.n, a.samples, a.seed, a.dist)?;
    io::write_bundle(&a.out, &bundle)?;
    emit(
        out,
        format!(
            "name={} m={} n={} samples={} out={}",
            bundle.name,
            a.m,
            a.n,
            a.samples,
            a.out.display()
        ),
    )
}

fn cmd_gen_chain(a: GenChainArgs, out: &mut dyn Write) -> Result<()> {
    let chain = gen_chain(&a.widths, a.samples, a.seed, a.activation)?;
    write_chain(&a.out, &chain)?;
    emit(
        out,
        format!(
            "layers={} samples={} out={}",
            chain.layers.len(),
            a.samples,
            a.out.display()
        ),
    )
}

fn cmd_prune(a: PruneArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.solver.resolve()?;
    let bundle = a.input.load()?;
    let mut res = prune_layer(&bundle.weights, &bundle.calib, &cfg)?;
    res.report.layer = bundle.name.clone();
    if a.report.omit_timing {
        res.report = res.report.without_timing();
    }

    create_dir(&a.out)?;
    io::write_tensor(a.out.join("weights.tensor"), &res.weights, Dtype::F64)?;
    io::write_mask(a.out.join("mask.tensor"), &res.mask)?;
    io::write_report(a.report.path(&a.out), &res.report, a.report.report_format)?;
    emit(
        out,
        format!(
            "layer={} objective={} density={} iterations={}",
            bundle.name,
            res.report.summary.final_objective,
            res.report.summary.final_density,
            res.report.records.len()
        ),
    )
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let solver = a.objective.resolve()?;
    let source = match &a.bundle {
        Some(dir) => ProblemSource::Bundle(io::load_bundle(dir)?),
        None => ProblemSource::Synthetic {
            m: a.m,
            n: a.n,
            samples: a.samples,
            dist: a.dist,
        },
    };
    let seeds = if a.seeds.is_empty() {
        (0..a.num_seeds).collect()
    } else {
        a.seeds
    };
    let spec = BenchSpec {
        updaters: a.updaters,
        steps: a.steps,
        learning_rates: a.lrs,
        seeds,
        source,
        solver,
        gd: GdConfig {
            momentum: a.momentum,
            ..GdConfig::default()
        },
    };
    let rows = run_bench(&spec)?;
    io::write_text(&a.out, &bench_to_csv(&rows, a.omit_timing))?;
    let diverged = rows.iter().filter(|r| r.objective.is_infinite()).count();
    emit(
        out,
        format!(
            "rows={} instances={} diverged={} out={}",
            rows.len(),
            spec.seeds.len(),
            diverged,
            a.out.display()
        ),
    )
}

fn cmd_chain(a: ChainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.solver.resolve()?;
    let chain = load_chain(&a.chain)?;
    let spec = ChainSpec {
        chain,
        configs: vec![cfg],
        propagation: if a.dense_propagation {
            Propagation::Dense
        } else {
            Propagation::Pruned
        },
    };
    let mut res = prune_chain(&spec)?;
    if a.report.omit_timing {
        res.reports = res.reports.iter().map(|r| r.without_timing()).collect();
    }

    create_dir(&a.out)?;
    for (l, (w, mask)) in res.weights.iter().zip(&res.masks).enumerate() {
        io::write_tensor(a.out.join(format!("layer{l}.tensor")), w, Dtype::F64)?;
        io::write_mask(a.out.join(format!("layer{l}.mask.tensor")), mask)?;
    }
    io::write_tensor(a.out.join("output.tensor"), &res.output, Dtype::F64)?;
    io::write_reports(a.report.path(&a.out), &res.reports, a.report.report_format)?;
    emit(
        out,
        format!(
            "layers={} propagation={} relative_error={}",
            res.weights.len(),
            if a.dense_propagation { "dense" } else { "pruned" },
            res.relative_error
        ),
    )
}

fn cmd_schedule(a: ScheduleArgs, out: &mut dyn Write) -> Result<()> {
    let schedule = SparsitySchedule::new(a.sf, a.ks).map_err(|e| match e {
        Error::InvalidConfig { field: "sparsity", reason } => Error::config("sf", reason),
        Error::InvalidConfig { reason, .. } => Error::config("ks", reason),
        other => other,
    })?;
    let csv = schedule_csv(&schedule);
    match &a.out {
        Some(path) => {
            io::write_text(path, &csv)?;
            emit(out, format!("rows={} out={}", a.ks + 1, path.display()))
        }
        None => out
            .write_all(csv.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn cmd_oracle(a: OracleArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.objective.resolve()?;
    let bundle = a.input.load()?;
    let (w, x) = (&bundle.weights, &bundle.calib);
    let mask = match &a.mask {
        Some(path) => io::read_mask(path)?,
        None => bench_mask(w, x, &cfg)?,
    };
    let exact = exact_masked_solve(w, x, &mask, cfg.lambda, cfg.eps)?;
    let objective = damped_objective(w, x, &exact, cfg.lambda, cfg.eps)?;

    create_dir(&a.out)?;
    io::write_tensor(a.out.join("weights.tensor"), &exact, Dtype::F64)?;
    io::write_mask(a.out.join("mask.tensor"), &mask)?;
    emit(
        out,
        format!(
            "layer={} objective={} density={}",
            bundle.name,
            objective,
            mask.density()
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_and_clamp_steps() {
        let a = SolverArgs {
            objective: ObjectiveArgs {
                config: None,
                sparsity: None,
                rho: Some(2.0),
                lambda: None,
                eps: None,
                structured: Some(StructurePattern::TWO_FOUR),
            },
            iters: Some(5),
            steps: None,
            mask_rule: None,
        };
        let cfg = a.resolve().unwrap();
        assert_eq!((cfg.iterations, cfg.sparsify_steps), (5, 5));
        assert_eq!(cfg.sparsity, 0.5);
        assert_eq!(cfg.rho, 2.0);
    }

    #[test]
    fn validation_errors_name_the_flag() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            ["admm-prune", "schedule", "--sf", "1.5", "--ks", "3"],
            &mut out,
            &mut err,
        );
        assert_eq!(code, 2);
        assert!(String::from_utf8(err).unwrap().contains("--sf"));
    }
}
