use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rfsgd::decomposition::Estimate;
use rfsgd::sweep::{
    decompose_cell, output_path, parse_config, read_csv, render_svg, spectra_report, sweep_to_dir,
    write_spectra_csv, SweepSpec,
};

#[derive(Parser)]
#[command(
    name = "rfsgd",
    version,
    about = "Random-features regression sweeps with averaged SGD"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Directory for relative output paths.
    #[arg(long, global = true, env = "RFSGD_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (m, schedule, repetition) cell and write the CSV and plots.
    Sweep { config: PathBuf },
    /// Covariance spectra and concentration diagnostics over the m grid.
    Spectra { config: PathBuf },
    /// Bias/variance report for a single cell.
    Decompose {
        config: PathBuf,
        /// Number of feature rows; defaults to the first grid entry.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        schedule: usize,
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
    /// Plot metrics from a sweep CSV.
    Plot {
        csv: PathBuf,
        #[arg(long = "metric", required = true)]
        metrics: Vec<String>,
        #[arg(short = 'o', long)]
        output: PathBuf,
        #[arg(long)]
        log_y: bool,
    },
}

fn load(path: &Path, g: &Global) -> Result<SweepSpec> {
    let mut spec = parse_config(path)?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    if g.parallelism.is_some() {
        spec.parallelism = g.parallelism;
    }
    Ok(spec)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn show(name: &str, e: &Estimate) {
    println!("{name:<16} {:>14.6e}  +- {:.2e}", e.mean, e.stderr);
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let g = &cli.global;
    match &cli.command {
        Command::Sweep { config } => {
            let spec = load(config, g)?;
            let out = sweep_to_dir(&spec, &g.out_dir)?;
            let failed = out.rows.iter().filter(|r| !r.is_ok()).count();
            println!(
                "{} rows ({failed} with failures) -> {}",
                out.rows.len(),
                out.csv.display()
            );
            for r in out.rows.iter().filter(|r| !r.is_ok()) {
                eprintln!(
                    "m = {} schedule = {} rep = {}: {}",
                    r.m, r.schedule, r.rep, r.status
                );
            }
            for p in &out.plots {
                println!("plot -> {}", p.display());
            }
        }
        Command::Spectra { config } => {
            let spec = load(config, g)?;
            let rows = spectra_report(&spec)?;
            println!(
                "{:>6} {:>6} {:>12} {:>12} {:>12} {:>12}",
                "m", "p", "trace", "trace sd", "inv-trace", "psd gap"
            );
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
            for r in &rows {
                println!(
                    "{:>6} {:>6} {:>12.6} {:>12.2e} {:>12} {:>12}",
                    r.m,
                    r.p,
                    r.sample_trace_mean,
                    r.sample_trace_sd,
                    opt(r.inverse_weighted_trace),
                    opt(r.psd_gap)
                );
                println!("       eigenvalues: {}", r.eigenvalues);
            }
            ensure_dir(&g.out_dir)?;
            let path = output_path(&g.out_dir, Path::new("spectra.csv"));
            write_spectra_csv(&rows, &path)?;
            println!("-> {}", path.display());
        }
        Command::Decompose {
            config,
            m,
            schedule,
            rep,
        } => {
            let spec = load(config, g)?;
            let m = m.unwrap_or(spec.m_grid[0]);
            if *rep >= spec.repetitions {
                bail!(
                    "rep {rep} is outside the {} configured repetitions",
                    spec.repetitions
                );
            }
            let r = decompose_cell(&spec, m, *schedule, *rep)?;
            println!(
                "n = {} m = {} p = {} draws: {} W x {} noise x {} orders",
                r.n, r.m, r.p, r.counts.n_w, r.counts.n_noise, r.counts.n_order
            );
            for (name, e) in [
                ("B1", &r.b1),
                ("B2", &r.b2),
                ("B3", &r.b3),
                ("V1", &r.v1),
                ("V2", &r.v2),
                ("V3", &r.v3),
                ("bias", &r.bias),
                ("variance", &r.variance),
                ("excess", &r.excess),
                ("additivity gap", &r.additivity_gap),
            ] {
                show(name, e);
            }
            if r.stability_warning {
                println!("warning: gamma0 exceeds the stability bound");
            }
        }
        Command::Plot {
            csv,
            metrics,
            output,
            log_y,
        } => {
            let rows = read_csv(csv)?;
            let path = output_path(&g.out_dir, output);
            if let Some(parent) = path.parent() {
                ensure_dir(parent)?;
            }
            render_svg(&rows, metrics, &path, *log_y)?;
            println!("-> {}", path.display());
        }
    }
    Ok(())
}
