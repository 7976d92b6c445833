use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparseode::harness::{
    self, build_dataset, coefficient_records, plot_boxplot, plot_coefficients, plot_sweep, prepare_output_dir,
    run_methods, run_single, write_coefficients, write_config, write_summary, ExperimentConfig, Grid, GridVar,
    Method, Simulation, COEFFICIENTS_CSV,
};
use sparseode::{Error, NoiseMode, Trajectory};

#[derive(Parser)]
#[command(name = "sparseode", version, about = "Learn sparse ODE right-hand sides from noisy trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a built-in system, add noise, and write the trajectory CSV.
    Simulate(Common),
    /// Fit every method to one dataset and write coefficients.csv.
    Fit {
        /// Trajectory CSV (`t,x1,...,xd`) to fit instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run seeded replicates over a grid of sample sizes or noise levels.
    Sweep(Common),
    /// Draw SVG charts from the CSV files in a results directory.
    Plot {
        /// Directory holding coefficients.csv and/or sweep.csv and boxplot.csv.
        #[arg(long)]
        input: PathBuf,
        /// Where to put the charts; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON configuration; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// van_der_pol, spiral or lotka_volterra.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "alpha-sys")]
    alpha_sys: Option<f64>,
    #[arg(long = "beta-sys")]
    beta_sys: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Number of steps over the time span. A comma list makes a sweep grid.
    #[arg(long)]
    n: Option<String>,
    /// Noise scale. A comma list makes a sweep grid.
    #[arg(long)]
    noise: Option<String>,
    /// absolute or max_scaled.
    #[arg(long = "noise-mode")]
    noise_mode: Option<String>,
    /// Library degree [default: 4].
    #[arg(long)]
    degree: Option<u32>,
    /// Comma list of lasso, debiased_lasso, bc_ridge, semms, esindy, stls.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Significance level [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (a file path for `simulate`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> sparseode::Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("--{flag}: cannot parse '{s}'"))))
        .collect()
}

impl Common {
    fn resolve(&self) -> sparseode::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.system {
            cfg.system = s.clone();
        }
        cfg.params.mu = self.mu.or(cfg.params.mu);
        cfg.params.alpha = self.alpha_sys.or(cfg.params.alpha);
        cfg.params.beta = self.beta_sys.or(cfg.params.beta);
        cfg.t_end = self.t_end.or(cfg.t_end);
        if self.step.is_some() {
            cfg.step = self.step;
            cfg.n = None;
        }
        if let Some(text) = &self.n {
            let values: Vec<usize> = parse_list("n", text)?;
            match values.as_slice() {
                [one] => cfg.n = Some(*one),
                _ => {
                    cfg.grid = Some(Grid {
                        variable: GridVar::N,
                        values: values.iter().map(|&v| v as f64).collect(),
                    })
                }
            }
        }
        if let Some(text) = &self.noise {
            let values: Vec<f64> = parse_list("noise", text)?;
            match values.as_slice() {
                [one] => cfg.noise = *one,
                _ => {
                    if self.n.as_deref().is_some_and(|n| n.contains(',')) {
                        return Err(Error::Config("only one of --n and --noise may list several values".into()));
                    }
                    cfg.grid = Some(Grid {
                        variable: GridVar::Sigma,
                        values,
                    })
                }
            }
        }
        if let Some(mode) = &self.noise_mode {
            cfg.noise_mode = match mode.as_str() {
                "absolute" => NoiseMode::Absolute,
                "max_scaled" => NoiseMode::MaxScaled,
                other => return Err(Error::Config(format!("unknown noise mode '{other}'"))),
            };
        }
        cfg.degree = self.degree.unwrap_or(cfg.degree);
        if let Some(text) = &self.methods {
            cfg.methods = parse_list::<Method>("methods", text)?;
        }
        cfg.replicates = self.replicates.unwrap_or(cfg.replicates);
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn simulate(common: &Common) -> sparseode::Result<()> {
    let cfg = common.resolve()?;
    let sim = Simulation::new(&cfg)?;
    let traj = sim.noisy(&cfg, cfg.seed)?;
    match &cfg.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            traj.write_csv(BufWriter::new(File::create(path)?))?;
            eprintln!("wrote {}", path.display());
        }
        None => traj.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

/// Fails only when every method failed; the exit code then follows the
/// kind of the failures.
fn fit(input: Option<&Path>, common: &Common) -> sparseode::Result<ExitCode> {
    let cfg = common.resolve()?;
    let dir = output_dir(&cfg);
    prepare_output_dir(&dir)?;
    let run = match input {
        Some(path) => {
            let traj = Trajectory::read_csv(File::open(path)?)?;
            let data = build_dataset(&traj, cfg.degree, cfg.derivatives)?;
            run_methods(&data, &cfg, cfg.seed)
        }
        None => run_single(&cfg, cfg.seed)?,
    };
    write_config(&dir, &cfg)?;
    let path = dir.join(COEFFICIENTS_CSV);
    write_coefficients(&path, &coefficient_records(&run))?;
    let mut numerical = false;
    for cell in &run.cells {
        if let Err(e) = &cell.result {
            eprintln!("{} dim {}: {}", cell.method, cell.dim + 1, e.message);
            numerical |= e.numerical;
        }
    }
    eprintln!("wrote {}", path.display());
    if run.cells.iter().all(|c| c.result.is_err()) {
        eprintln!("error: every method failed");
        return Ok(ExitCode::from(if numerical { 2 } else { 1 }));
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(common: &Common) -> sparseode::Result<()> {
    let cfg = common.resolve()?;
    let dir = output_dir(&cfg);
    prepare_output_dir(&dir)?;
    let summary = harness::sweep(&cfg)?;
    write_config(&dir, &cfg)?;
    for path in write_summary(&dir, &summary)? {
        eprintln!("wrote {}", path.display());
    }
    if !summary.failures.is_empty() {
        eprintln!("{} method fits failed; see failures.csv", summary.failures.len());
    }
    Ok(())
}

fn plot(input: &Path, out: Option<&Path>) -> sparseode::Result<()> {
    let dir = out.unwrap_or(input);
    prepare_output_dir(dir)?;
    let mut written = Vec::new();
    let coef = input.join(COEFFICIENTS_CSV);
    if coef.exists() {
        written.extend(plot_coefficients(&harness::read_coefficients(&coef)?, dir)?);
    }
    if input.join(harness::SWEEP_CSV).exists() {
        let summary = harness::read_summary(input)?;
        written.extend(plot_sweep(&summary.rows, dir)?);
        written.extend(plot_boxplot(&summary.boxplot, dir)?);
    }
    if written.is_empty() {
        return Err(Error::Input(format!("no result CSVs found in {}", input.display())));
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c).map(|_| ExitCode::SUCCESS),
        Command::Fit { input, common } => fit(input.as_deref(), common),
        Command::Sweep(c) => sweep(c).map(|_| ExitCode::SUCCESS),
        Command::Plot { input, out } => plot(input, out.as_deref()).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
