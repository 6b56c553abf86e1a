use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmw_oob::error::{Result, SimError};
use mmw_oob::harness::{self, RunOptions};
use mmw_oob::{EstimationMethod, SinrMode, SystemConfig, WeightTable};

#[derive(Parser)]
#[command(name = "mmw-oob", version, about = "Sub-6 GHz aided mmWave channel estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// `key = value` config file; defaults apply to missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Worker threads (results do not depend on this)
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo SE sweep over the config's K and SNR grids
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: conventional, perfect_csi, translating, averaging, weighting
        #[arg(long, default_value = "conventional,perfect_csi,translating,averaging,weighting")]
        methods: String,
        #[arg(long)]
        out: PathBuf,
        /// Weight table CSV; built on the fly when weighting is requested without one
        #[arg(long)]
        weight_table: Option<PathBuf>,
        /// Diagnostic: sum per-stream rates instead of the aggregate SINR
        #[arg(long)]
        per_stream: bool,
    },
    /// Regenerate the weighting-factor lookup table
    WeightTable {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = harness::DEFAULT_W_STEP)]
        w_step: f64,
    },
    /// Run the invariant suite on a small configuration
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<SystemConfig> {
    let mut cfg = match &common.config {
        Some(path) => SystemConfig::from_file(path)?,
        None => SystemConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(l) = common.realizations {
        cfg.realizations = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_pool<T: Send>(parallelism: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = parallelism {
        if n == 0 {
            return Err(SimError::config("parallelism must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| SimError::config(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep {
            common,
            methods,
            out,
            weight_table,
            per_stream,
        } => {
            let cfg = load_config(&common)?;
            let methods = methods
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<EstimationMethod>>>()?;
            let table = weight_table.map(WeightTable::read_csv).transpose()?;
            let opts = RunOptions {
                sinr_mode: if per_stream { SinrMode::PerStream } else { SinrMode::Aggregate },
            };
            let results = with_pool(common.parallelism, || {
                harness::run_sweep(&cfg, &methods, table.as_ref(), &opts, &out)
            })?;
            eprintln!("wrote {} rows to {}", results.len(), out.display());
        }
        Command::WeightTable { common, out, w_step } => {
            let cfg = load_config(&common)?;
            let table = with_pool(common.parallelism, || harness::regenerate_weight_table(&cfg, w_step, &out))?;
            eprintln!(
                "wrote {}x{} table to {}",
                table.k_grid_db.len(),
                table.snr_grid_db.len(),
                out.display()
            );
        }
        Command::Validate { common } => {
            let cfg = load_config(&common)?;
            let outcomes = with_pool(common.parallelism, || mmw_oob::validate::run_suite(&cfg))?;
            let mut failed = 0;
            for o in &outcomes {
                println!(
                    "{} {:<28} value={:.3e} tol={:.1e}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.value,
                    o.tolerance
                );
                failed += usize::from(!o.passed);
            }
            if failed > 0 {
                return Err(SimError::config(format!("{failed} invariant check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
