//! Command-line harness: seeded optimizer runs over LIBSVM or synthetic
//! data, smoothness-constant inspection, and batch-size sweeps. All output
//! columns except wall time are deterministic given the seed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use loopless::record::fmt_f64;
use loopless::{
    build_problem, build_sampler_and_profile, run_experiment, Algo, DataSource, ExperimentConfig,
    Loss, SamplingKind, SyntheticSpec,
};

#[derive(Parser)]
#[command(
    name = "loopless",
    version,
    about = "Loopless variance-reduced optimizers for sparse regularized ERM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one optimizer run and emit a metrics CSV.
    Run(RunArgs),
    /// Print the smoothness constants of a dataset/sampling pair.
    Constants(ConstantsArgs),
    /// Sweep the expected batch size over a list, one CSV per cell.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Lsvrg,
    Lkatyusha,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Lsvrg => Algo::LSvrg,
            AlgoArg::Lkatyusha => Algo::LKatyusha,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    /// Uniform random batch of fixed size tau.
    Uniform,
    /// Group sampling with marginals proportional to the component constants.
    ImportanceGroup,
    /// Group sampling with uniform marginals tau/n.
    Group,
    /// Independent inclusion with probability tau/n per example.
    Independent,
    /// tau draws with replacement, weighted by the component constants.
    Replacement,
}

impl From<SamplingArg> for SamplingKind {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Uniform => SamplingKind::Uniform,
            SamplingArg::ImportanceGroup => SamplingKind::ImportanceGroup,
            SamplingArg::Group => SamplingKind::Group,
            SamplingArg::Independent => SamplingKind::Independent,
            SamplingArg::Replacement => SamplingKind::Replacement,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Logistic,
    Squared,
    SigmoidSquared,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Logistic => Loss::Logistic,
            LossArg::Squared => Loss::Squared,
            LossArg::SigmoidSquared => Loss::SigmoidSquared,
        }
    }
}

#[derive(Args)]
struct SourceArgs {
    /// LIBSVM-format text file.
    #[arg(long, value_name = "PATH", group = "source", required = true)]
    data: Option<PathBuf>,
    /// Synthetic generator spec: n,d,density[,data_seed].
    #[arg(long, value_name = "N,D,DENSITY[,SEED]", group = "source", value_parser = parse_synthetic)]
    synthetic: Option<SyntheticSpec>,
}

impl SourceArgs {
    fn to_source(&self) -> DataSource {
        match (&self.data, &self.synthetic) {
            (Some(path), _) => DataSource::File(path.clone()),
            (None, Some(spec)) => DataSource::Synthetic(spec.clone()),
            (None, None) => unreachable!("clap enforces the source group"),
        }
    }
}

fn parse_synthetic(value: &str) -> Result<SyntheticSpec, String> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err("expected n,d,density[,data_seed]".into());
    }
    let n: usize = parts[0].trim().parse().map_err(|_| "invalid n")?;
    let d: usize = parts[1].trim().parse().map_err(|_| "invalid d")?;
    let density: f64 = parts[2].trim().parse().map_err(|_| "invalid density")?;
    let seed: u64 = if parts.len() == 4 {
        parts[3].trim().parse().map_err(|_| "invalid data seed")?
    } else {
        1
    };
    Ok(SyntheticSpec::new(n, d, density, seed))
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum, default_value = "lsvrg")]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value = "uniform")]
    sampling: SamplingArg,
    /// Expected batch size.
    #[arg(long, default_value_t = 1)]
    tau: usize,
    /// Reference-refresh probability (default tau/n).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    lambda1: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda2: f64,
    #[arg(long, value_enum, default_value = "logistic")]
    loss: LossArg,
    /// Budget in epochs (n component gradients each).
    #[arg(long, default_value_t = 30.0)]
    epochs: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record every this many iterations (default: about one pass).
    #[arg(long)]
    cadence: Option<u64>,
    /// Use the sparse lazy-update path (needs lambda2 > 0).
    #[arg(long)]
    lazy: bool,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn to_config(&self) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(
            self.source.to_source(),
            self.algo.into(),
            self.sampling.into(),
            self.tau,
        );
        config.p = self.p;
        config.lambda1 = self.lambda1;
        config.lambda2 = self.lambda2;
        config.loss = self.loss.into();
        config.epochs = self.epochs;
        config.seed = self.seed;
        config.cadence = self.cadence;
        config.lazy = self.lazy;
        config.out = self.out.clone();
        config
    }
}

#[derive(Args)]
struct ConstantsArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum, default_value = "uniform")]
    sampling: SamplingArg,
    #[arg(long, default_value_t = 1)]
    tau: usize,
    #[arg(long, default_value_t = 1e-4)]
    lambda1: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda2: f64,
    #[arg(long, value_enum, default_value = "logistic")]
    loss: LossArg,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum, default_value = "lsvrg")]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value = "uniform")]
    sampling: SamplingArg,
    /// Batch sizes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    tau: Vec<usize>,
    #[arg(long, default_value_t = 1e-4)]
    lambda1: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda2: f64,
    #[arg(long, value_enum, default_value = "logistic")]
    loss: LossArg,
    #[arg(long, default_value_t = 30.0)]
    epochs: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lazy: bool,
    /// Directory receiving one CSV per sweep cell.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Constants(args) => constants_command(args),
        Command::Bench(args) => bench_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run_command(args: RunArgs) -> Result<(), String> {
    let config = args.to_config();
    let record = run_experiment(&config).map_err(|e| e.to_string())?;
    if config.out.is_none() {
        print!("{}", record.to_csv_string());
    } else if let Some(last) = record.rows.last() {
        println!(
            "wrote {} rows; final epoch {:.3}, suboptimality {:.3e}",
            record.rows.len(),
            last.epoch,
            last.subopt
        );
    }
    Ok(())
}

fn constants_command(args: ConstantsArgs) -> Result<(), String> {
    let mut config = ExperimentConfig::new(
        args.source.to_source(),
        Algo::LSvrg,
        args.sampling.into(),
        args.tau,
    );
    config.lambda1 = args.lambda1;
    config.lambda2 = args.lambda2;
    config.loss = args.loss.into();
    let problem = build_problem(&config).map_err(|e| e.to_string())?;
    let (_, profile) = build_sampler_and_profile(&problem, config.sampling, config.tau)
        .map_err(|e| e.to_string())?;
    println!("l1 = {}", fmt_f64(profile.l1));
    println!("l2 = {}", fmt_f64(profile.l2));
    println!("l3 = {}", fmt_f64(profile.l3));
    println!("l_f = {}", fmt_f64(problem.l_f()));
    println!("l_bar = {}", fmt_f64(problem.l_bar()));
    Ok(())
}

fn bench_command(args: BenchArgs) -> Result<(), String> {
    std::fs::create_dir_all(&args.out_dir).map_err(|e| e.to_string())?;
    let algo: Algo = args.algo.into();
    let sampling: SamplingKind = args.sampling.into();
    for &tau in &args.tau {
        let mut config =
            ExperimentConfig::new(args.source.to_source(), algo, sampling, tau);
        config.lambda1 = args.lambda1;
        config.lambda2 = args.lambda2;
        config.loss = args.loss.into();
        config.epochs = args.epochs;
        config.seed = args.seed;
        config.lazy = args.lazy;
        let file = args
            .out_dir
            .join(format!("{}_{}_tau{}.csv", algo.name(), sampling.name(), tau));
        config.out = Some(file.clone());
        let record = run_experiment(&config).map_err(|e| format!("tau = {tau}: {e}"))?;
        let last = record.rows.last().expect("at least the initial row");
        println!(
            "tau {:>4}: {} rows -> {} (final suboptimality {:.3e})",
            tau,
            record.rows.len(),
            file.display(),
            last.subopt
        );
    }
    Ok(())
}
