use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pathwise::cli_ingest::{run, Experiment, ExperimentConfig, Format, Overrides};
use pathwise::generators::{GeneratorKind, GeneratorSpec};

#[derive(Parser)]
#[command(name = "pathwise", version, about = "Pathwise stochastic calculus experiments")]
struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Report directory (overrides PATHWISE_OUT_DIR and the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write only this report format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads; 0 uses the machine default.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum KindArg {
    Brownian,
    EulerSde,
    CompoundPoisson,
    JumpDiffusion,
    LampertiDirichlet,
}

impl From<KindArg> for GeneratorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Brownian => GeneratorKind::Brownian,
            KindArg::EulerSde => GeneratorKind::EulerSde,
            KindArg::CompoundPoisson => GeneratorKind::CompoundPoisson,
            KindArg::JumpDiffusion => GeneratorKind::JumpDiffusion,
            KindArg::LampertiDirichlet => GeneratorKind::LampertiDirichlet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SuiteArg {
    LipschitzDecomposition,
    TimeDependentDecomposition,
    ZcqvCovariation,
    DirichletSum,
    NegativeControl,
}

#[derive(clap::Args, Default)]
struct GenArgs {
    /// Generator kind (replaces the config file's generator).
    #[arg(long, value_enum)]
    generator: Option<KindArg>,
    /// Grid steps on [0, horizon].
    #[arg(long)]
    steps: Option<usize>,
    /// Jump intensity for jump generators.
    #[arg(long)]
    jump_rate: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an ensemble and write its paths.
    Simulate(GenArgs),
    /// Realized quadratic variation ladder and ucp summary.
    Qv(GenArgs),
    /// Decompose f(t, X_t) into an Ito integral plus a remainder.
    Decompose {
        #[command(flatten)]
        gen: GenArgs,
        /// Registry expression, e.g. `abs` or `moving_kink(k_jump=0.5)`.
        #[arg(long)]
        function: Option<String>,
    },
    /// Call-surface identities on a Monte Carlo ensemble.
    Identity {
        #[command(flatten)]
        gen: GenArgs,
        /// Function for the nondifferentiability identity.
        #[arg(long)]
        function: Option<String>,
    },
    /// Deterministic grid checks of the space-time calculus.
    Appendix {
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        partner: Option<String>,
    },
    /// Load a t,x CSV series and report its realized variation.
    Ingest {
        input: PathBuf,
        /// Absolute increments above this become jumps.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run a named verification suite.
    Suite {
        #[arg(value_enum)]
        name: Option<SuiteArg>,
        #[arg(long)]
        function: Option<String>,
        #[command(flatten)]
        gen: GenArgs,
    },
}

fn suite_experiment(s: SuiteArg) -> Experiment {
    match s {
        SuiteArg::LipschitzDecomposition => Experiment::LipschitzDecomposition,
        SuiteArg::TimeDependentDecomposition => Experiment::TimeDependentDecomposition,
        SuiteArg::ZcqvCovariation => Experiment::ZcqvCovariation,
        SuiteArg::DirichletSum => Experiment::DirichletSum,
        SuiteArg::NegativeControl => Experiment::NegativeControl,
    }
}

fn apply_gen(cfg: &mut ExperimentConfig, g: &GenArgs) {
    if g.generator.is_none() && g.steps.is_none() && g.jump_rate.is_none() {
        return;
    }
    let mut spec = cfg.generator.clone().unwrap_or_else(|| cfg.generator_spec());
    if let Some(k) = g.generator {
        spec = GeneratorSpec {
            n_steps: spec.n_steps,
            seed: spec.seed,
            ..GeneratorSpec::new(k.into())
        };
    }
    if let Some(n) = g.steps {
        spec.n_steps = n;
    }
    if let Some(r) = g.jump_rate {
        spec.jump_rate = r;
    }
    cfg.generator = Some(spec);
}

fn build(cli: &Cli) -> Result<ExperimentConfig, String> {
    let file = match &cli.config {
        Some(p) => Some(ExperimentConfig::load(p).map_err(|e| e.to_string())?),
        None => None,
    };
    let experiment = match &cli.command {
        Command::Simulate(_) => Experiment::Simulate,
        Command::Qv(_) => Experiment::Qv,
        Command::Decompose { .. } => Experiment::Decompose,
        Command::Identity { .. } => Experiment::CallIdentity,
        Command::Appendix { .. } => Experiment::Appendix,
        Command::Ingest { .. } => Experiment::Ingest,
        Command::Suite { name: Some(n), .. } => suite_experiment(*n),
        Command::Suite { name: None, .. } => match file.as_ref().map(|c| c.experiment) {
            Some(e) if e.suite().is_some() => e,
            _ => return Err("suite needs a name, either as an argument or in the config file".into()),
        },
    };
    let mut cfg = file.unwrap_or_else(|| ExperimentConfig::new(experiment));
    cfg.experiment = experiment;

    let mut o = Overrides {
        seed: cli.seed,
        paths: cli.paths,
        out: cli.out.clone(),
        format: cli.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
        workers: cli.workers,
        ..Default::default()
    };
    match &cli.command {
        Command::Simulate(g) | Command::Qv(g) => apply_gen(&mut cfg, g),
        Command::Decompose { gen, function }
        | Command::Identity { gen, function }
        | Command::Suite { gen, function, .. } => {
            apply_gen(&mut cfg, gen);
            o.function = function.clone();
        }
        Command::Appendix { function, partner } => {
            o.function = function.clone();
            if let Some(p) = partner {
                cfg.function.partner = p.clone();
            }
        }
        Command::Ingest { input, threshold } => {
            o.input = Some(input.clone());
            if let Some(t) = threshold {
                cfg.thresholds.jump_threshold = *t;
            }
        }
    }
    cfg.apply(&o);
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            let status = if outcome.pass { "ok" } else { "FAILED" };
            println!("{}: {status}", cfg.experiment.as_str());
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
