use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use msgfem::decomposition::{Cover, PartitionOfUnity};
use msgfem::fem::StructuredMesh;
use msgfem::harness::{self, ExperimentConfig, Sweep};
use msgfem::validation::{reports_to_csv, run_property_suite, SuiteConfig};
use msgfem::MsgfemError;

#[derive(Parser)]
#[command(name = "msgfem", version, about = "Multiscale spectral GFEM for singularly perturbed reaction-diffusion")]
struct Cli {
    /// Key-value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set eps=1e-4,1e-5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (0: all cores).
    #[arg(long, env = "MSGFEM_WORKERS", global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Start from the h = 1e-3 preset instead of the desk defaults.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One point: the first entry of each list.
    Solve {
        /// Also write the partition of unity as CSV.
        #[arg(long)]
        dump_pu: bool,
    },
    /// Error against the number of local basis functions.
    SweepNloc,
    /// Error against oversampling layers, without local bases.
    SweepOversampling,
    /// Error against ε.
    SweepEps,
    /// Run the property suite on a small problem.
    Validate {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 6)]
        nloc: usize,
    },
    /// Write the synthetic coefficient raster.
    GenCoef {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Plot data and fits from a result CSV.
    PlotData { csv: PathBuf },
    /// Print the effective configuration.
    Config,
}

enum Failure {
    Error(MsgfemError),
    Acceptance(String),
}

impl From<MsgfemError> for Failure {
    fn from(e: MsgfemError) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
        Err(Failure::Acceptance(msg)) => {
            eprintln!("acceptance failure: {msg}");
            ExitCode::from(4)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, MsgfemError> {
    let mut cfg = match (&cli.config, cli.full_scale, &cli.command) {
        (Some(path), _, _) => ExperimentConfig::load(path)?,
        (None, true, Command::SweepNloc) => ExperimentConfig::full_scale_nloc(),
        (None, true, _) => ExperimentConfig::full_scale(),
        (None, false, _) => ExperimentConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| MsgfemError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Config => print!("{}", cfg.to_text()),
        Command::Solve { dump_pu } => {
            fs::create_dir_all(&cfg.out)?;
            if *dump_pu {
                let mesh = StructuredMesh::new(cfg.n)?;
                let cover = Cover::build(&mesh, cfg.per_axis, cfg.ell[0])?;
                let pu = PartitionOfUnity::build(&cover, &mesh)?;
                fs::write(cfg.out.join("pu.csv"), pu.to_csv(&mesh))?;
            }
            let record = harness::run_single(&cfg)?;
            let sweep = Sweep { records: vec![record], failures: Vec::new(), record_timing: cfg.record_timing };
            write_sweep(&cfg, "solve", &sweep, false)?;
        }
        Command::SweepNloc => write_sweep(&cfg, "sweep_nloc", &harness::sweep_nloc(&cfg)?, true)?,
        Command::SweepOversampling => {
            write_sweep(&cfg, "sweep_oversampling", &harness::sweep_oversampling(&cfg)?, true)?
        }
        Command::SweepEps => write_sweep(&cfg, "sweep_eps", &harness::sweep_eps(&cfg)?, false)?,
        Command::Validate { eps, nloc } => {
            let suite = SuiteConfig { eps: *eps, nloc: *nloc, seed: cfg.seed, ..SuiteConfig::default() };
            let reports = run_property_suite(&suite);
            fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("validate.csv");
            fs::write(&path, reports_to_csv(&reports))?;
            for r in &reports {
                println!("{} {} {}", if r.passed { "PASS" } else { "FAIL" }, r.case, r.detail);
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Failure::Acceptance(format!("{failed} checks failed, see {}", path.display())));
            }
        }
        Command::GenCoef { output } => {
            let field = cfg.coefficient_field()?;
            let path = output.clone().unwrap_or_else(|| cfg.out.join("coefficient.bin"));
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            field.save(&path)?;
            println!("{}", path.display());
        }
        Command::PlotData { csv } => {
            let dir = cfg.out.join("plot");
            for p in harness::emit_plotdata(csv, &dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn write_sweep(cfg: &ExperimentConfig, name: &str, sweep: &Sweep, plot: bool) -> Result<(), Failure> {
    fs::create_dir_all(&cfg.out)?;
    let csv = cfg.out.join(format!("{name}.csv"));
    fs::write(&csv, sweep.to_csv())?;
    fs::write(cfg.out.join(format!("{name}.log")), sweep.log())?;
    fs::write(cfg.out.join(format!("{name}.config")), cfg.to_text())?;
    if plot {
        harness::emit_plotdata(&csv, &cfg.out.join("plot"))?;
    }
    println!("{}", csv.display());
    report_failures(sweep, &csv)
}

fn report_failures(sweep: &Sweep, csv: &Path) -> Result<(), Failure> {
    match sweep.failures.first() {
        None => Ok(()),
        Some((point, e)) => {
            eprintln!("{} of {} points failed; first: {point}", sweep.failures.len(), sweep.failures.len() + sweep.records.len());
            eprintln!("partial results in {}", csv.display());
            Err(Failure::Error(if e.is_config() {
                MsgfemError::Config(e.to_string())
            } else {
                MsgfemError::NoConvergence(e.to_string())
            }))
        }
    }
}
