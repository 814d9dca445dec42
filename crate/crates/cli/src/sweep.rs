//! Sweep execution: one CSV per (configuration, sigma_x), a reproducibility
//! manifest, and the per-receiver-count channel simulation behind them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use uwoc_core::ber::{
    ber_mimo_exact, ber_mimo_fw, ber_mimo_upper, ghq_rule, BerResult, GhqRule,
};
use uwoc_core::config::{dbm_to_watts, Method, SweepConfig};
use uwoc_core::fading::FadingSpec;
use uwoc_core::io::{mc_report_csv_row, MC_REPORT_CSV_HEADER};
use uwoc_core::link::{compute_gammas, GammaSet, MimoScenario, TransmitPulse};
use uwoc_core::oracle::{simulate_link_ber_with, McRunReport, SimOptions};
use uwoc_core::water_channel::{link_displacement_class, ImpulseResponse};

use crate::cache::{get_or_simulate, ChannelRequest};

/// Effective seeds after CLI overrides.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffectiveSeeds {
    pub channel: u64,
    pub mc: u64,
}

/// CSV header shared by every sweep output file.
pub const SWEEP_CSV_HEADER: &str = "power_dBm,method,ber,diag_sequences,diag_quadrature_order,\
                                    diag_fw_fallback_terms,diag_mc_bits,diag_mc_errors,\
                                    diag_mc_std_error,diag_flag";

/// Channel responses per (receiver count, displacement class): the
/// aperture is split across the receivers, each transmitter aims at one of
/// them, and a link's response depends only on how far (in aperture
/// pitches) its receiver sits from the aimed point.
pub struct ChannelSet {
    pub responses: BTreeMap<(usize, usize), ImpulseResponse>,
    pub keys: BTreeMap<(usize, usize), String>,
    pub hits: usize,
}

impl ChannelSet {
    pub fn response(&self, n: usize, class: usize) -> &ImpulseResponse {
        &self.responses[&(n, class)]
    }
}

/// Every (receiver count, displacement class) pair the configuration list
/// needs.
fn needed_classes(config: &SweepConfig) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = config
        .configurations
        .iter()
        .flat_map(|&[m, n]| {
            (0..m).flat_map(move |i| {
                (0..n).map(move |j| (n, link_displacement_class(i, m, n, j)))
            })
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Simulate (or fetch) the impulse response for every receiver-count and
/// displacement class the configurations need.
pub fn prepare_channels(
    config: &SweepConfig,
    cache_dir: &Path,
    seed: u64,
) -> Result<ChannelSet> {
    let water = config.water()?;
    let base_geometry = config.link_geometry();
    let bin_width = config.effective_bin_width();

    let mut responses = BTreeMap::new();
    let mut keys = BTreeMap::new();
    let mut hits = 0;
    for (n, class) in needed_classes(config) {
        let geometry = base_geometry.with_displacement_class(n, class);
        let request = ChannelRequest {
            water: &water,
            geometry: &geometry,
            photon_count: config.photon_count,
            weight_threshold: config.weight_threshold,
            bin_width,
            seed,
        };
        let cached = get_or_simulate(cache_dir, &request)
            .with_context(|| format!("channel simulation for N = {n}, class {class}"))?;
        if cached.cache_hit {
            hits += 1;
        }
        responses.insert((n, class), cached.response);
        keys.insert((n, class), cached.key);
    }
    Ok(ChannelSet {
        responses,
        keys,
        hits,
    })
}

/// One output row; `result` is an error message when the method failed at
/// this point (the run continues).
struct Row {
    power_dbm: f64,
    method: Method,
    outcome: std::result::Result<RowValue, String>,
}

enum RowValue {
    Analytic(BerResult),
    Mc {
        ber: f64,
        bits: u64,
        errors: u64,
        std_error: f64,
    },
}

fn format_row(row: &Row) -> String {
    let mut fields: Vec<String> = vec![
        format!("{}", row.power_dbm),
        row.method.to_string(),
    ];
    match &row.outcome {
        Ok(RowValue::Analytic(res)) => {
            fields.push(format!("{:e}", res.ber));
            fields.push(res.diagnostics.sequences.to_string());
            fields.push(res.diagnostics.quadrature_order.to_string());
            fields.push(res.diagnostics.fw_fallback_terms.to_string());
            fields.extend(["".into(), "".into(), "".into()]);
            fields.push("ok".into());
        }
        Ok(RowValue::Mc {
            ber,
            bits,
            errors,
            std_error,
        }) => {
            fields.push(format!("{ber:e}"));
            fields.extend(["".into(), "".into(), "".into()]);
            fields.push(bits.to_string());
            fields.push(errors.to_string());
            fields.push(format!("{std_error:e}"));
            fields.push("ok".into());
        }
        Err(message) => {
            fields.push("nan".into());
            fields.extend(["".into(), "".into(), "".into(), "".into(), "".into(), "".into()]);
            fields.push(message.replace(',', ";"));
        }
    }
    fields.join(",")
}

/// Evaluate every (power, method) point for one (configuration, sigma_x)
/// file. Points run in parallel; rows come back in sweep order.
#[allow(clippy::too_many_arguments)]
fn evaluate_file(
    config: &SweepConfig,
    m: usize,
    n: usize,
    sigma_x: f64,
    channels: &ChannelSet,
    rule: &GhqRule,
    per_dim_rule: &GhqRule,
    sigma_tb: f64,
    seeds: EffectiveSeeds,
) -> Result<(Vec<String>, Vec<String>)> {
    let spec = FadingSpec::from_sigma_x(sigma_x)
        .map_err(|e| anyhow::anyhow!("sigma_x = {sigma_x}: {e}"))?;
    let t_b = config.bit_duration();
    let responsivity = config.noise.responsivity();

    // Gammas are linear in power: integrate each link once at 1 W total
    // and scale per sweep point.
    let unit_pulse = TransmitPulse::rectangular(1.0 / m as f64, t_b)
        .map_err(|e| anyhow::anyhow!("pulse: {e}"))?;
    let mut unit_matrix: Vec<GammaSet> = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let class = link_displacement_class(i, m, n, j);
            let gamma = compute_gammas(
                channels.response(n, class),
                &unit_pulse,
                responsivity,
                config.memory_threshold,
            )
            .map_err(|e| anyhow::anyhow!("gamma integration: {e}"))?;
            unit_matrix.push(gamma);
        }
    }

    let points = config.power_sweep_dbm.points();
    let grid: Vec<(f64, Method)> = points
        .iter()
        .flat_map(|&p| config.methods.iter().map(move |&method| (p, method)))
        .collect();

    let rows: Vec<Row> = grid
        .par_iter()
        .map(|&(power_dbm, method)| {
            let watts = dbm_to_watts(power_dbm);
            let matrix: Vec<GammaSet> =
                unit_matrix.iter().map(|g| g.scaled(watts)).collect();
            let outcome = evaluate_point(
                config, m, n, matrix, spec, sigma_tb, rule, per_dim_rule, method, seeds,
            );
            Row {
                power_dbm,
                method,
                outcome,
            }
        })
        .collect();

    // Monte Carlo points also go to the run-wide results log.
    let mc_log: Vec<String> = rows
        .iter()
        .filter_map(|row| match &row.outcome {
            Ok(RowValue::Mc {
                ber,
                bits,
                errors,
                std_error,
            }) => {
                let report = McRunReport {
                    bits_simulated: *bits,
                    errors_observed: *errors,
                    ber_estimate: *ber,
                    binomial_std_error: *std_error,
                    seed: seeds.mc,
                };
                Some(format!(
                    "{m}x{n},{sigma_x},{},{}",
                    row.power_dbm,
                    mc_report_csv_row(&report)
                ))
            }
            _ => None,
        })
        .collect();

    Ok((rows.iter().map(format_row).collect(), mc_log))
}

#[allow(clippy::too_many_arguments)]
fn evaluate_point(
    config: &SweepConfig,
    m: usize,
    n: usize,
    matrix: Vec<GammaSet>,
    spec: FadingSpec,
    sigma_tb: f64,
    rule: &GhqRule,
    per_dim_rule: &GhqRule,
    method: Method,
    seeds: EffectiveSeeds,
) -> std::result::Result<RowValue, String> {
    let fading = vec![spec; m * n];
    let scenario = MimoScenario::new(m, n, matrix, fading, sigma_tb, config.bit_rate)
        .map_err(|e| e.to_string())?;
    match method {
        Method::Exact => ber_mimo_exact(&scenario, per_dim_rule)
            .map(RowValue::Analytic)
            .map_err(|e| e.to_string()),
        Method::Upper => ber_mimo_upper(&scenario, per_dim_rule)
            .map(RowValue::Analytic)
            .map_err(|e| e.to_string()),
        Method::Fw => ber_mimo_fw(&scenario, rule)
            .map(RowValue::Analytic)
            .map_err(|e| e.to_string()),
        Method::Mc => simulate_link_ber_with(
            &scenario,
            config.mc_bits,
            seeds.mc,
            SimOptions {
                stop_after_errors: config.mc_stop_after_errors,
            },
        )
        .map(|report| RowValue::Mc {
            ber: report.ber_estimate,
            bits: report.bits_simulated,
            errors: report.errors_observed,
            std_error: report.binomial_std_error,
        })
        .map_err(|e| e.to_string()),
    }
}

/// Reproducibility manifest written next to the sweep outputs.
#[derive(Serialize)]
struct Manifest<'a> {
    toolkit_version: &'a str,
    config_hash: String,
    seeds: EffectiveSeeds,
    /// Cache key per "rx<N>_class<k>" channel.
    channel_cache_keys: BTreeMap<String, &'a str>,
    files: Vec<String>,
}

/// Hash of the canonical config serialization.
pub fn config_hash(config: &SweepConfig) -> String {
    let digest = Sha256::digest(config.canonical_json().as_bytes());
    hex::encode(&digest[..16])
}

/// Run the full sweep, writing one CSV per (configuration, sigma_x) plus
/// `manifest.json` into `out_dir`.
pub fn run_sweep(
    config: &SweepConfig,
    out_dir: &Path,
    cache_dir: &Path,
    seeds: EffectiveSeeds,
) -> Result<Vec<PathBuf>> {
    let report = config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let channels = prepare_channels(config, cache_dir, seeds.channel)?;
    eprintln!(
        "channel responses ready ({} cached, {} simulated)",
        channels.hits,
        channels.responses.len() - channels.hits
    );

    let rule = ghq_rule(config.ghq_order).map_err(|e| anyhow::anyhow!("{e}"))?;
    let per_dim_rule = ghq_rule(config.per_dim_order).map_err(|e| anyhow::anyhow!("{e}"))?;
    let sigma_tb = report.noise.sigma_tb();

    let mut files = Vec::new();
    let mut mc_log_rows: Vec<String> = Vec::new();
    for &[m, n] in &config.configurations {
        for &sigma_x in &config.sigma_x {
            let (rows, mc_rows) = evaluate_file(
                config, m, n, sigma_x, &channels, &rule, &per_dim_rule, sigma_tb, seeds,
            )?;
            mc_log_rows.extend(mc_rows);
            let name = format!("ber_{m}x{n}_sigma{sigma_x}.csv");
            let path = out_dir.join(&name);
            let mut text = String::from(SWEEP_CSV_HEADER);
            text.push('\n');
            for row in rows {
                text.push_str(&row);
                text.push('\n');
            }
            crate::write_atomic(&path, text.as_bytes())?;
            files.push(name);
            eprintln!("wrote {}", path.display());
        }
    }

    if !mc_log_rows.is_empty() {
        let name = "mc_runs.csv".to_string();
        let mut text = format!("config,sigma_x,power_dBm,{MC_REPORT_CSV_HEADER}\n");
        for row in &mc_log_rows {
            text.push_str(row);
            text.push('\n');
        }
        crate::write_atomic(&out_dir.join(&name), text.as_bytes())?;
        files.push(name);
    }

    let manifest = Manifest {
        toolkit_version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(config),
        seeds,
        channel_cache_keys: channels
            .keys
            .iter()
            .map(|(&(n, class), key)| (format!("rx{n}_class{class}"), key.as_str()))
            .collect(),
        files: files.clone(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let manifest_text =
        serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    crate::write_atomic(&manifest_path, manifest_text.as_bytes())?;

    let mut written: Vec<PathBuf> = files.into_iter().map(|f| out_dir.join(f)).collect();
    written.push(manifest_path);
    Ok(written)
}
