//! `uwoc`: batch front-end for the underwater optical MIMO BER toolkit.
//!
//! Subcommands:
//! - `simulate-channel`: run the photon transport once per receiver count
//!   and write the impulse responses as CSV.
//! - `validate`: schema/invariant check of a sweep configuration, printing
//!   the derived link quantities without running anything.
//! - `sweep`: full BER sweep producing figure-ready CSV plus a
//!   reproducibility manifest.

mod cache;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use uwoc_core::config::{dbm_to_watts, SweepConfig};
use uwoc_core::io::write_impulse_csv;
use uwoc_core::link::{compute_gammas, TransmitPulse};
use uwoc_core::water_channel::link_displacement_class;

use crate::cache::ChannelRequest;
use crate::sweep::EffectiveSeeds;

/// Environment variable overriding the channel cache directory.
const CACHE_ENV: &str = "UWOC_CACHE_DIR";

#[derive(Parser)]
#[command(
    name = "uwoc",
    version,
    about = "BER analysis for underwater wireless optical MIMO links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON sweep configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured random seeds (channel and Monte Carlo).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Channel cache directory (default: $UWOC_CACHE_DIR, then
    /// <out>/channel-cache).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate channel impulse responses and write them as CSV.
    SimulateChannel {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a configuration and print derived quantities.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the BER sweep.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Write a file atomically: to a temporary in the same directory, then
/// rename over the destination.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    std::io::Write::write_all(&mut tmp, contents)?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn load_config(path: &Path) -> Result<SweepConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config = SweepConfig::from_json_str(&text).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(config)
}

fn effective_seeds(config: &SweepConfig, overridden: Option<u64>) -> EffectiveSeeds {
    match overridden {
        Some(seed) => EffectiveSeeds {
            channel: seed,
            mc: seed,
        },
        None => EffectiveSeeds {
            channel: config.seeds.channel,
            mc: config.seeds.mc,
        },
    }
}

fn resolve_cache_dir(common: &CommonArgs, out: Option<&Path>) -> PathBuf {
    if let Some(dir) = &common.cache {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var(CACHE_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    match out {
        Some(out) => out.join("channel-cache"),
        None => PathBuf::from("channel-cache"),
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn cmd_validate(common: &CommonArgs) -> Result<()> {
    let config = load_config(&common.config)?;
    let report = config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;

    println!("config: OK ({})", common.config.display());
    println!("  range: {} m", report.range);
    println!("  bit duration: {:e} s", report.bit_duration);
    println!("  bin width: {:e} s", config.effective_bin_width());
    println!("  responsivity: {:.4} A/W", report.responsivity);
    println!(
        "  integrated noise: sigma2_Tb = {:.4e} C^2 (sigma_Tb = {:.4e} C)",
        report.noise.sigma2_tb,
        report.noise.sigma_tb()
    );
    println!(
        "  count-domain noise: sigma2_m = {:.4e} (thermal {:.4e}, background {:.2e}, dark {:.2e})",
        report.noise.sigma2_m, report.noise.thermal_m, report.noise.background_m,
        report.noise.dark_m
    );
    println!(
        "  shot-noise limit: {:.3e} W received; negligible assuming the full \
         sweep-max transmit power arrives (conservative): {}",
        report.noise.shot_limit, report.noise.shot_noise_negligible
    );

    // Channel memory per link class, served from cache only; validate
    // never simulates.
    let cache_dir = resolve_cache_dir(common, None);
    let seeds = effective_seeds(&config, common.seed);
    let water = config.water().map_err(|e| anyhow::anyhow!("{e}"))?;
    let bin_width = config.effective_bin_width();
    for &[m, n] in &config.configurations {
        let mut classes: Vec<usize> = (0..m)
            .flat_map(|i| (0..n).map(move |j| link_displacement_class(i, m, n, j)))
            .collect();
        classes.sort_unstable();
        classes.dedup();
        for class in classes {
            let geometry = config.link_geometry().with_displacement_class(n, class);
            let request = ChannelRequest {
                water: &water,
                geometry: &geometry,
                photon_count: config.photon_count,
                weight_threshold: config.weight_threshold,
                bin_width,
                seed: seeds.channel,
            };
            let key = cache::channel_key(&request);
            let path = cache::cache_path(&cache_dir, &key);
            if path.exists() {
                let text = fs::read_to_string(&path)?;
                let response = uwoc_core::io::parse_impulse_csv(&text)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                let pulse = TransmitPulse::rectangular(1.0 / m as f64, config.bit_duration())
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                let gamma = compute_gammas(
                    &response,
                    &pulse,
                    report.responsivity,
                    config.memory_threshold,
                )
                .map_err(|e| anyhow::anyhow!("{e}"))?;
                println!(
                    "  {m}x{n} class {class}: channel memory L = {} (cached {key})",
                    gamma.memory()
                );
            } else {
                println!(
                    "  {m}x{n} class {class}: channel not cached (key {key}); \
                     run simulate-channel or sweep"
                );
            }
        }
    }

    let max_watts = dbm_to_watts(config.power_sweep_dbm.stop_dbm);
    println!(
        "  power sweep: {} points, max {:.3e} W",
        config.power_sweep_dbm.points().len(),
        max_watts
    );
    Ok(())
}

fn cmd_simulate_channel(common: &CommonArgs, out: &Path) -> Result<()> {
    let config = load_config(&common.config)?;
    config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let cache_dir = resolve_cache_dir(common, Some(out));
    let seeds = effective_seeds(&config, common.seed);

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let channels = sweep::prepare_channels(&config, &cache_dir, seeds.channel)?;
    let responsivity = config.noise.responsivity();
    for (&(n, class), response) in &channels.responses {
        let path = out.join(format!("impulse_rx{n}_class{class}.csv"));
        write_atomic(&path, write_impulse_csv(response).as_bytes())?;
        println!(
            "wrote {} (key {}, received fraction {:.4e})",
            path.display(),
            channels.keys[&(n, class)],
            response.total_fraction()
        );
        // Reference signal/ISI coefficients at 1 W from a single
        // transmitter, for inspection; they scale linearly with the
        // per-transmitter power.
        let pulse = TransmitPulse::rectangular(1.0, config.bit_duration())
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let gamma = compute_gammas(response, &pulse, responsivity, config.memory_threshold)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let gamma_path = out.join(format!("gamma_rx{n}_class{class}_1w.csv"));
        write_atomic(&gamma_path, uwoc_core::io::write_gamma_csv(&gamma).as_bytes())?;
        println!("wrote {} (L = {})", gamma_path.display(), gamma.memory());
    }
    Ok(())
}

fn cmd_sweep(common: &CommonArgs, out: &Path) -> Result<()> {
    let config = load_config(&common.config)?;
    let cache_dir = resolve_cache_dir(common, Some(out));
    let seeds = effective_seeds(&config, common.seed);
    let files = sweep::run_sweep(&config, out, &cache_dir, seeds)?;
    println!("sweep complete: {} files in {}", files.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::SimulateChannel { common, out } => {
            init_threads(common.threads)?;
            cmd_simulate_channel(common, out)
        }
        Command::Validate { common } => {
            init_threads(common.threads)?;
            cmd_validate(common)
        }
        Command::Sweep { common, out } => {
            init_threads(common.threads)?;
            cmd_sweep(common, out)
        }
    }
}
