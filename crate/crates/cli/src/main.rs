//! `eastkcm`: batch front-end for the East model library.

mod commands;
mod table;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "eastkcm", version, about = "East kinetically constrained model: exact gaps, paths, simulations")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Human,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact spectral gap of the East (v = 1) or wave chain.
    Gap(GapArgs),
    /// Variational ratio Var(g) / E(g, g) for a named test function.
    Dirichlet(DirichletArgs),
    /// Event trajectory of the East process.
    SimEast(SimEastArgs),
    /// Front first-passage times from a single particle.
    Front(FrontArgs),
    /// Single-site autocorrelation and its relaxation time.
    Tau0(Tau0Args),
    /// Wave trajectory.
    SimWave(SimWaveArgs),
    /// Stopping-cycle supermartingale ratio.
    Supermg(SupermgArgs),
    /// Overshoot of chained stopping cycles.
    Overshoot(OvershootArgs),
    /// Minimum-energy path from the origin to the particle at 2^m.
    LmPath(MArgs),
    /// Exact energy barrier by breadth-first search.
    HOracle(HOracleArgs),
    /// Distinguished path between two configurations, or exit counts.
    DistPath(DistPathArgs),
    /// Comparison constants and the exact finite-chain check.
    Compare(CompareArgs),
    /// CRJ test function g(S), exact and Monte Carlo.
    CrjG(CrjGArgs),
    /// Admissible / good classification of (S, i).
    Goodness(GoodnessArgs),
    /// alpha(p) and beta(p) over a grid.
    Bounds(BoundsArgs),
    /// Variational lower bound from the CRJ test function.
    LowerBound(LowerBoundArgs),
    /// Exact relaxation times over a p grid.
    Scan(ScanArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gap(_) => "gap",
            Command::Dirichlet(_) => "dirichlet",
            Command::SimEast(_) => "sim-east",
            Command::Front(_) => "front",
            Command::Tau0(_) => "tau0",
            Command::SimWave(_) => "sim-wave",
            Command::Supermg(_) => "supermg",
            Command::Overshoot(_) => "overshoot",
            Command::LmPath(_) => "lm-path",
            Command::HOracle(_) => "h-oracle",
            Command::DistPath(_) => "dist-path",
            Command::Compare(_) => "compare",
            Command::CrjG(_) => "crj-g",
            Command::Goodness(_) => "goodness",
            Command::Bounds(_) => "bounds",
            Command::LowerBound(_) => "lower-bound",
            Command::Scan(_) => "scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    /// Wave length; 1 is the East chain.
    #[arg(long, default_value_t = 1)]
    pub v: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    pub solver: SolverArg,
    /// Also write the generator in coordinate format to this file.
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestFn {
    /// Occupation of site n.
    SiteN,
    /// Number of particles.
    Particles,
    /// Rightmost occupied site.
    Rightmost,
    /// The CRJ test function.
    Crj,
    /// The gap eigenfunction (ratio equals tau).
    Eigen,
}

#[derive(Debug, Args)]
pub struct DirichletArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 1)]
    pub v: usize,
    #[arg(long, value_enum, default_value_t = TestFn::SiteN)]
    pub test_fn: TestFn,
}

#[derive(Debug, Args)]
pub struct SimEastArgs {
    #[arg(long)]
    pub p: f64,
    /// Finite chain 0..=n; omit for the half-line.
    #[arg(long)]
    pub n: Option<usize>,
    /// Site cap on the half-line.
    #[arg(long, default_value_t = 100_000)]
    pub cap: usize,
    #[arg(long)]
    pub horizon: f64,
    /// Initially occupied sites besides the origin.
    #[arg(long, value_delimiter = ',')]
    pub init: Vec<usize>,
    /// Start from Bernoulli(p) on the finite chain.
    #[arg(long)]
    pub stationary: bool,
}

#[derive(Debug, Args)]
pub struct FrontArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub thresholds: Vec<f64>,
    /// Times at which the hit fraction is reported.
    #[arg(long, value_delimiter = ',', default_value = "10,50,100")]
    pub times: Vec<f64>,
    #[arg(long, default_value_t = 1000.0)]
    pub budget: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
}

#[derive(Debug, Args)]
pub struct Tau0Args {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub n: usize,
    /// Probe site; defaults to n/2.
    #[arg(long)]
    pub probe: Option<usize>,
    #[arg(long, default_value_t = 20.0)]
    pub horizon: f64,
    /// Number of lag steps after lag 0.
    #[arg(long, default_value_t = 40)]
    pub lags: usize,
    #[arg(long, default_value_t = 20_000)]
    pub replicas: usize,
}

#[derive(Debug, Args)]
pub struct SimWaveArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub v: usize,
    /// Finite chain 0..=n; omit for the half-line.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, value_delimiter = ',')]
    pub init: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Single,
    Block,
    Adversarial,
    All,
}

#[derive(Debug, Args)]
pub struct SupermgArgs {
    #[arg(long, default_value_t = 0.02)]
    pub p: f64,
    /// Wave length; defaults to 2 ceil(5/p).
    #[arg(long)]
    pub v: Option<usize>,
    #[arg(long, default_value_t = 3.0 / 7.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Adversarial)]
    pub init: InitArg,
    /// Shift every initial particle right by this many sites.
    #[arg(long, default_value_t = 0)]
    pub shift: usize,
    /// One summary row per initial configuration instead of per-replica rows.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Args)]
pub struct OvershootArgs {
    #[arg(long, default_value_t = 0.02)]
    pub p: f64,
    #[arg(long)]
    pub v: Option<usize>,
    #[arg(long, default_value_t = 3.0 / 7.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.7)]
    pub a: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t: f64,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub u: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct MArgs {
    #[arg(long)]
    pub m: u32,
}

#[derive(Debug, Args)]
pub struct HOracleArgs {
    /// Source configuration as a 0/1 string, site 0 first.
    #[arg(long, conflicts_with = "m")]
    pub from: Option<String>,
    #[arg(long, requires = "from")]
    pub to: Option<String>,
    /// Shortcut: from the origin to the origin plus a particle at 2^m.
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long, default_value_t = 12)]
    pub energy_cap: usize,
    #[arg(long, default_value_t = 5_000_000)]
    pub budget: usize,
}

#[derive(Debug, Args)]
pub struct DistPathArgs {
    #[arg(long)]
    pub m: u32,
    /// Endpoints as 0/1 strings on 0..=2^m; drawn from Bernoulli(p) if omitted.
    #[arg(long)]
    pub w: Option<String>,
    #[arg(long)]
    pub w_prime: Option<String>,
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    /// Estimate exit counts at the probe configurations with this many samples.
    #[arg(long)]
    pub exit_samples: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub probes: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub m: u32,
    #[arg(long)]
    pub p: f64,
    /// Also check tau_East <= B L tau_wave exactly on 0..=n.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CrjGArgs {
    #[arg(long)]
    pub p: f64,
    /// Defaults to floor(1/p).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sites: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct GoodnessArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub i: usize,
    /// Site set; a random S_i is drawn when omitted.
    #[arg(long, value_delimiter = ',')]
    pub sites: Vec<usize>,
    /// Number of random S_i draws when no site set is given.
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.01,0.001,0.000001")]
    pub p_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Exact,
    Mc,
}

#[derive(Debug, Args)]
pub struct LowerBoundArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_enum, default_value_t = SourceArg::Exact)]
    pub source: SourceArg,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.4,0.3,0.25,0.2")]
    pub p_grid: Vec<f64>,
    #[arg(long, default_value_t = 12)]
    pub n_cap: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let table = match commands::run(&cli.command, cli.seed) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_precondition() { 1 } else { 2 });
        }
    };
    let header = format!("# eastkcm {} {} {:?} seed={}", env!("CARGO_PKG_VERSION"), cli.command.name(), cli.command, cli.seed);
    let written = match &cli.out {
        Some(path) => File::create(path).and_then(|f| emit(BufWriter::new(f), &header, &table, cli.format)),
        None => emit(io::stdout().lock(), &header, &table, cli.format),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (e.g. `| head`) is not an error.
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: writing output: {e}");
            ExitCode::from(2)
        }
    }
}

fn emit<W: Write>(mut out: W, header: &str, table: &table::Table, format: Format) -> io::Result<()> {
    writeln!(out, "{header}")?;
    match format {
        Format::Csv => table.write_csv(&mut out)?,
        Format::Human => table.write_human(&mut out)?,
    }
    out.flush()
}
