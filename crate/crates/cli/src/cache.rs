//! Content-addressed cache of simulated impulse responses.
//!
//! The key hashes every input that determines the response bit-for-bit:
//! water properties, link geometry, photon count, weight threshold, bin
//! width, and the seed. Responses are stored in the CSV interchange format,
//! which round-trips `f64` exactly, so a cache hit reproduces the original
//! run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use uwoc_core::io::{parse_impulse_csv, write_impulse_csv};
use uwoc_core::water_channel::{trace_photons, ImpulseResponse, LinkGeometry, WaterProperties};

#[derive(Serialize)]
struct ChannelKey<'a> {
    water: &'a WaterProperties,
    geometry: &'a LinkGeometry,
    photon_count: u64,
    weight_threshold: f64,
    bin_width: f64,
    seed: u64,
}

/// Inputs for one channel simulation.
#[derive(Debug, Clone, Copy)]
pub struct ChannelRequest<'a> {
    pub water: &'a WaterProperties,
    pub geometry: &'a LinkGeometry,
    pub photon_count: u64,
    pub weight_threshold: f64,
    pub bin_width: f64,
    pub seed: u64,
}

/// Stable content hash of the simulation inputs.
pub fn channel_key(request: &ChannelRequest) -> String {
    let key = ChannelKey {
        water: request.water,
        geometry: request.geometry,
        photon_count: request.photon_count,
        weight_threshold: request.weight_threshold,
        bin_width: request.bin_width,
        seed: request.seed,
    };
    let json = serde_json::to_string(&key).expect("key serialization cannot fail");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..16])
}

/// Result of a cache lookup.
pub struct CachedResponse {
    pub response: ImpulseResponse,
    pub key: String,
    pub cache_hit: bool,
}

/// Fetch the response from the cache or simulate and store it.
pub fn get_or_simulate(cache_dir: &Path, request: &ChannelRequest) -> Result<CachedResponse> {
    let key = channel_key(request);
    let path = cache_path(cache_dir, &key);
    if path.exists() {
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading cached response {}", path.display()))?;
        match parse_impulse_csv(&text) {
            Ok(response) => {
                return Ok(CachedResponse {
                    response,
                    key,
                    cache_hit: true,
                })
            }
            Err(e) => {
                eprintln!(
                    "warning: cached response {} is unreadable ({e}); regenerating",
                    path.display()
                );
            }
        }
    }

    let report = trace_photons(
        request.water,
        request.geometry,
        request.photon_count,
        request.weight_threshold,
        request.bin_width,
        request.seed,
    )?;
    if report.no_arrivals() {
        eprintln!("warning: no photons reached the receiver (key {key})");
    }
    fs::create_dir_all(cache_dir)
        .with_context(|| format!("creating cache directory {}", cache_dir.display()))?;
    super::write_atomic(&path, write_impulse_csv(&report.response).as_bytes())?;
    Ok(CachedResponse {
        response: report.response,
        key,
        cache_hit: false,
    })
}

pub fn cache_path(cache_dir: &Path, key: &str) -> PathBuf {
    cache_dir.join(format!("{key}.csv"))
}
