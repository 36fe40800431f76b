use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gesedd_core::aic::write_matrix_le;
use gesedd_core::parallel::Execution;
use gesedd_core::pipeline::Method;
use gesedd_harness::config::{Profile, RunConfig};
use gesedd_harness::emit::emit;
use gesedd_harness::run_once::run_once;
use gesedd_harness::sweeps::{self, Table};

#[derive(Parser)]
#[command(
    name = "gesedd",
    version,
    about = "Sub-Nyquist delay-Doppler estimation experiments"
)]
struct Cli {
    /// TOML config; missing fields take the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// Estimator realization, overriding the config.
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Run trials on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// RRMSE against SNR.
    SweepSnr,
    /// RRMSE against target spacing (NTD or NDD).
    SweepResolution,
    /// RRMSE against SCR with the clutter filter on.
    SweepClutter,
    /// Full-rank probability of the compressed dictionary.
    Theorem1,
    /// Coefficient-matrix rank verdicts on coherent and decohered scenes.
    Theorem2,
    /// Concentration-of-measure tail.
    ComTest,
    /// One scene with full diagnostics.
    RunOnce {
        /// Also write the measurement matrix as little-endian f64 pairs.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Print the effective config.
    EmitConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, cli.profile)
            .with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::for_profile(cli.profile),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(method) = cli.method {
        cfg.pipeline.method = method;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_tables(tables: &[Table], hash: &str, dir: &Path) -> Result<()> {
    for t in tables {
        for path in emit(t, hash, dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let hash = cfg.hash();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let tables = match &cli.command {
        Command::EmitConfig => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::RunOnce { dump_matrix } => {
            let out = run_once(&cfg)?;
            std::fs::create_dir_all(&cli.out)?;
            let record = out.record(&hash);
            let path = cli.out.join("run_once.txt");
            std::fs::write(&path, &record)?;
            print!("{record}");
            println!("wrote {}", path.display());
            if let Some(d) = &out.report.delay_diagnostics {
                let files = [
                    ("eigenvalues.csv", d.eigenvalues_csv()),
                    ("roots.csv", d.roots_csv()),
                    ("spectrum.csv", d.spectrum_csv()),
                ];
                for (name, body) in files {
                    let p = cli.out.join(name);
                    std::fs::write(&p, body)?;
                    println!("wrote {}", p.display());
                }
            }
            if *dump_matrix {
                let p = cli.out.join("matrix.bin");
                let file = std::io::BufWriter::new(std::fs::File::create(&p)?);
                write_matrix_le(&out.observation.mat.data, file)?;
                println!(
                    "wrote {} ({}x{} row-major complex f64 LE)",
                    p.display(),
                    out.observation.mat.m(),
                    out.observation.mat.n()
                );
            }
            return Ok(());
        }
        Command::SweepSnr => vec![sweeps::sweep_snr(&cfg, exec)?],
        Command::SweepResolution => vec![sweeps::sweep_resolution(&cfg, exec)?],
        Command::SweepClutter => vec![sweeps::sweep_clutter(&cfg, exec)?],
        Command::Theorem1 => sweeps::sweep_theorem1(&cfg, exec)?,
        Command::Theorem2 => vec![sweeps::sweep_theorem2(&cfg, exec)?],
        Command::ComTest => vec![sweeps::sweep_com(&cfg, exec)?],
    };
    write_tables(&tables, &hash, &cli.out)
}
