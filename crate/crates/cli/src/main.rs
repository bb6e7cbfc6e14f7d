use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mfcce::{run, Command, ConfigError, Layout, RunConfig};

/// Coarse correlated equilibria of the bang-bang mean field game: region
/// sweeps, gap estimates, propagation of chaos, consistency checks and
/// McKean-Vlasov fixed points.
#[derive(Debug, Parser)]
#[command(name = "mfcce", version)]
struct Cli {
    /// Command to run; may also come from the configuration file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON configuration, or an output file whose header line holds one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, env = "MFCCE_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Population sizes, comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Mixing weights of the off-diagonal mass, comma separated.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Device p11,p12,p21,p22.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    p: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Time horizon T.
    #[arg(long)]
    horizon: Option<f64>,
    /// Points of the constant deviation grid.
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Constant control for `mkv` (default b).
    #[arg(long, allow_hyphen_values = true)]
    action: Option<f64>,
    #[arg(long, value_enum)]
    layout: Option<Layout>,
    /// Consistency passes when sup W2 is at most this multiple of the null band.
    #[arg(long)]
    band_factor: Option<f64>,
}

impl Cli {
    fn config(&self) -> Result<RunConfig, ConfigError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        set!(seed, steps, resolution, alpha, a, b, c, horizon, grid_size, particles, max_iters, tol, layout, band_factor);
        if self.command.is_some() {
            c.command = self.command;
        }
        if self.n.is_some() {
            c.n = self.n.clone();
        }
        if self.reps.is_some() {
            c.reps = self.reps;
        }
        if self.action.is_some() {
            c.action = self.action;
        }
        if let Some(p) = &self.p {
            c.p = <[f64; 4]>::try_from(p.as_slice()).map_err(|_| ConfigError {
                source: None,
                line: None,
                column: None,
                field: Some("p".into()),
                message: format!("expected 4 comma separated values, got {}", p.len()),
            })?;
        }
        c.resolved()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: cannot start {w} workers: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&config, &cli.out) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            for n in &outcome.notes {
                eprintln!("note: {n}");
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {} check failed", config.command.map_or("", Command::name));
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
