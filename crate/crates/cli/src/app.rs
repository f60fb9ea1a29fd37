use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{Experiment, ExperimentConfig, Grid, Mode};
use crate::error::CliError;
use crate::experiments;
use crate::output::{read_embedded_config, write_output, write_table};

#[derive(Debug, Parser)]
#[command(name = "perclab", version, about = "Matchings and local limits of percolated regular graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment named in the config (or by --experiment).
    Run {
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Fixed point y(c) and the matching fraction F(c).
    Theory(RunOpts),
    /// Matching number of percolated hosts against F(c).
    Match(RunOpts),
    /// Census of radius-r balls against the Galton-Watson measure.
    LocalLimit(RunOpts),
    /// Exact binomial-vs-Poisson total variation.
    Binpo(RunOpts),
    /// Coupled breadth-first explorations.
    Coupling(RunOpts),
    /// Spread of per-class vertex counts across seeds.
    Concentration(RunOpts),
    /// Ball classes of one percolated host.
    Census(RunOpts),
    /// Edge list of one percolated host.
    Percolate(RunOpts),
    /// Regenerate a result CSV from the config embedded in its header.
    Replay {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "PERCLAB_THREADS")]
        threads: Option<usize>,
    },
}

#[derive(Debug, Args, Default)]
pub struct RunOpts {
    /// TOML experiment config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV; the summary goes to `<stem>.summary.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    #[arg(long, env = "PERCLAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub d: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub path: Option<PathBuf>,
    #[arg(long)]
    pub allow_irregular: bool,
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<usize>,
    #[arg(long)]
    pub delta_cap: Option<usize>,
    #[arg(long)]
    pub tail_target: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
}

impl RunOpts {
    /// Load the config file (if any) and apply flag overrides.
    pub fn resolve(&self, experiment: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match (&self.config, experiment) {
            (Some(path), exp) => ExperimentConfig::from_file(path, exp)?,
            (None, Some(exp)) => ExperimentConfig::new(exp),
            (None, None) => return Err(CliError::Config("run needs --config or --experiment".into())),
        };
        if let Some(exp) = experiment {
            cfg.experiment = exp;
        }
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.seeds, self.seeds);
        set!(cfg.base_seed, self.base_seed);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.family.is_some() {
            cfg.host.family = self.family.clone();
        }
        if !self.d.is_empty() {
            cfg.host.d = Grid(self.d.clone());
        }
        if !self.n.is_empty() {
            cfg.host.n = Grid(self.n.clone());
        }
        set!(cfg.host.k, self.k.map(Some));
        set!(cfg.host.side, self.side.map(Some));
        set!(cfg.host.dim, self.dim.map(Some));
        if self.path.is_some() {
            cfg.host.path = self.path.clone();
        }
        cfg.host.allow_irregular |= self.allow_irregular;
        if !self.c.is_empty() {
            cfg.params.c = Grid(self.c.clone());
        }
        if !self.r.is_empty() {
            cfg.params.r = Grid(self.r.clone());
        }
        set!(cfg.params.delta_cap, self.delta_cap.map(Some));
        set!(cfg.params.tail_target, self.tail_target.map(Some));
        set!(cfg.params.trials, self.trials.map(Some));
        set!(cfg.params.mode, self.mode);
        Ok(cfg)
    }
}

/// Run `cfg` on a pool of `cfg.threads` workers (all cores if unset).
pub fn run_config(cfg: &ExperimentConfig) -> Result<crate::output::Output, CliError> {
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| experiments::run(cfg)),
        None => experiments::run(cfg),
    }
}

fn execute(cfg: ExperimentConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let out = run_config(&cfg)?;
    let elapsed = start.elapsed();
    match &cfg.out {
        Some(path) => write_output(path, &cfg, &out, elapsed),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let to_io = |e| CliError::io(std::path::Path::new("<stdout>"), e);
            write_table(&mut lock, &cfg, &out.main, Some(elapsed)).map_err(to_io)?;
            if let Some(summary) = &out.summary {
                writeln!(lock).map_err(to_io)?;
                write_table(&mut lock, &cfg, summary, None).map_err(to_io)?;
            }
            Ok(())
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (exp, opts) = match cli.command {
        Command::Replay { csv, out, threads } => {
            let file = std::fs::File::open(&csv).map_err(|e| CliError::io(&csv, e))?;
            let mut cfg = read_embedded_config(std::io::BufReader::new(file))?;
            cfg.out = out;
            cfg.threads = threads;
            return execute(cfg);
        }
        Command::Run { experiment, opts } => (experiment, opts),
        Command::Theory(o) => (Some(Experiment::Theory), o),
        Command::Match(o) => (Some(Experiment::MatchingConvergence), o),
        Command::LocalLimit(o) => (Some(Experiment::LocalLimit), o),
        Command::Binpo(o) => (Some(Experiment::BinpoRate), o),
        Command::Coupling(o) => (Some(Experiment::CouplingRate), o),
        Command::Concentration(o) => (Some(Experiment::Concentration), o),
        Command::Census(o) => (Some(Experiment::Census), o),
        Command::Percolate(o) => (Some(Experiment::Percolate), o),
    };
    execute(opts.resolve(exp)?)
}

/// Parse arguments, run, and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("perclab: {e}");
            e.exit_code()
        }
    }
}
