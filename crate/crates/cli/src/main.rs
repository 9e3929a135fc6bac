mod rates;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fedspike_core::experiments::{
    run_realdata, run_scenario_to_dir, ExperimentSpec, Method, PluginConfig, RealdataSpec, Scenario,
};
use fedspike_core::{Dataset, PrivacyBudget};

#[derive(Debug, Parser)]
#[command(name = "fedspike", version, about = "Federated differentially private PCA and spiked covariance estimation")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte-Carlo scenario and write CSV (and SVG) results.
    Simulate(SimulateArgs),
    /// Split a data matrix across clients and compare methods by explained variance.
    Realdata(RealdataArgs),
    /// Print per-client rates, weights and error bounds for a client layout.
    Rates(RatesArgs),
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// privacy_utility, vary_clients, fixed_total or heterogeneous.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// TOML file with a full experiment description.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of fedspike, equal, reference, oja.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    no_plot: bool,
    /// Use the data-independent weights proportional to the rate itself.
    #[arg(long)]
    rate_proportional_weights: bool,
}

#[derive(Debug, clap::Args)]
struct RealdataArgs {
    /// CSV with one observation per row (see --observations-in-columns).
    #[arg(long)]
    input: PathBuf,
    /// The first line of the CSV is a header.
    #[arg(long)]
    header: bool,
    /// Each CSV column is an observation instead of each row.
    #[arg(long)]
    observations_in_columns: bool,
    #[arg(long, value_delimiter = ',', default_value = "130,51")]
    clients: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, default_value_t = 0.4)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of leading sample eigenvalues averaged for the signal estimate.
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    /// 1-indexed inclusive eigenvalue range for the noise estimate [default: 51,p].
    #[arg(long, value_delimiter = ',')]
    tail: Option<Vec<usize>>,
    /// Use the raw top-eigenvalue mean as the signal estimate.
    #[arg(long)]
    no_sigma_subtract: bool,
    /// Keep the data uncentred.
    #[arg(long)]
    no_center: bool,
    #[arg(long, value_delimiter = ',', default_value = "fedspike,equal,reference")]
    methods: Vec<Method>,
    #[arg(long)]
    rate_proportional_weights: bool,
    /// Clip negative eigenvalues of the assembled covariance.
    #[arg(long)]
    psd_clip: bool,
    /// Also write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct RatesArgs {
    /// TOML file with model constants and a `[[clients]]` list.
    #[arg(long)]
    config: PathBuf,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut spec = match (&args.config, args.scenario) {
        (Some(path), scenario) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec: ExperimentSpec = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if let Some(s) = scenario {
                if s != spec.scenario {
                    bail!("--scenario {s} conflicts with scenario {} in the config", spec.scenario);
                }
            }
            spec
        }
        (None, Some(s)) => ExperimentSpec::standard(s),
        (None, None) => bail!("either --scenario or --config is required"),
    };
    if spec.scenario == Scenario::Realdata {
        bail!("use `fedspike realdata` for the realdata scenario");
    }
    if let Some(reps) = args.reps {
        spec.replications = reps;
    }
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    if let Some(methods) = args.methods {
        spec.methods = methods;
    }
    spec.rate_proportional_weights |= args.rate_proportional_weights;
    let out = run_scenario_to_dir(&spec, &args.out, !args.no_plot)?;
    eprintln!(
        "wrote {} records to {}",
        out.records.len(),
        args.out.join(format!("{}.csv", spec.scenario)).display()
    );
    Ok(())
}

fn realdata(args: RealdataArgs) -> Result<()> {
    let mut data = Dataset::read_csv_path(&args.input, args.header).with_context(|| format!("reading {}", args.input.display()))?;
    if args.observations_in_columns {
        data = data.transposed_source()?;
    }
    let p = data.dim();
    let mut spec = RealdataSpec::standard(p);
    spec.sizes = args.clients;
    spec.rank = args.rank;
    spec.budget = PrivacyBudget::new(args.eps, args.delta)?;
    spec.seed = args.seed;
    let tail = match args.tail.as_deref() {
        None => spec.plugins.tail,
        Some(&[a, b]) => (a, b),
        Some(other) => bail!("--tail takes two indices, got {other:?}"),
    };
    spec.plugins = PluginConfig { top_k: args.top_k, tail, subtract_sigma: !args.no_sigma_subtract };
    spec.center = !args.no_center;
    spec.methods = args.methods;
    spec.rate_proportional_weights = args.rate_proportional_weights;
    spec.psd_clip = args.psd_clip;
    let report = run_realdata(&data, &spec)?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "method,explained_variance")?;
    for s in &report.scores {
        writeln!(stdout, "{},{}", s.method, s.explained_variance)?;
    }
    eprintln!(
        "p={p}, N={}, server lambda={:.6}, sigma2={:.6}, weights={:?}",
        data.len(),
        report.server_lambda,
        report.server_sigma2,
        report.pca_weights
    );
    if let Some(path) = args.json {
        std::fs::write(&path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Realdata(args) => realdata(args),
        Command::Rates(args) => {
            let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
            let cfg: rates::RatesConfig = toml::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
            rates::write_table(&cfg, std::io::stdout().lock())
        }
    }
}
