//! CSV serialization of impulse responses, gamma sets, and Monte Carlo run
//! reports.
//!
//! The formats are line-oriented and self-describing:
//!
//! Impulse response (only nonzero bins are written):
//! ```text
//! t_start,bin_width
//! 1.1095061725638762e-7,6.25e-11
//! bin_index,fraction
//! 0,4.77e-5
//! 3,1.2e-7
//! ```
//!
//! Gamma set (all `k = 1..=L` rows are written):
//! ```text
//! gamma_s
//! 1.65e-14
//! k,gamma_k
//! 1,2.2e-16
//! 2,3e-18
//! ```
//!
//! Floats are written in exponent form, which round-trips `f64` exactly, so
//! a response written and re-read drives bit-identical downstream results.
//! The parsers never panic on malformed input; they return a line-numbered
//! error (and are fuzzed to keep it that way).

use crate::error::{Error, Result};
use crate::link::GammaSet;
use crate::oracle::McRunReport;
use crate::water_channel::ImpulseResponse;

/// Parsers refuse bin indices beyond this, to bound allocation on hostile
/// input; matches the simulator's own histogram cap.
const MAX_BIN_INDEX: u64 = 1 << 24;

/// Serialize an impulse response; one row per nonzero bin.
pub fn write_impulse_csv(response: &ImpulseResponse) -> String {
    let mut out = String::new();
    out.push_str("t_start,bin_width\n");
    out.push_str(&format!(
        "{:e},{:e}\n",
        response.t_start(),
        response.bin_width()
    ));
    out.push_str("bin_index,fraction\n");
    for (i, &b) in response.bins().iter().enumerate() {
        if b != 0.0 {
            out.push_str(&format!("{i},{b:e}\n"));
        }
    }
    out
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("expected a number, got {field:?}"),
    })
}

fn split2(line_text: &str, line: usize) -> Result<(&str, &str)> {
    let mut parts = line_text.splitn(3, ',');
    let a = parts.next().unwrap_or("");
    let b = parts.next().ok_or_else(|| Error::Parse {
        line,
        message: "expected two comma-separated fields".into(),
    })?;
    if parts.next().is_some() {
        return Err(Error::Parse {
            line,
            message: "expected exactly two comma-separated fields".into(),
        });
    }
    Ok((a, b))
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    number: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines(),
            number: 0,
        }
    }

    /// Next line with its 1-based number, trailing CR stripped.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.inner.next().map(|l| {
            self.number += 1;
            (self.number, l.strip_suffix('\r').unwrap_or(l))
        })
    }

    fn expect_header(&mut self, header: &str) -> Result<()> {
        match self.next() {
            Some((_, l)) if l.trim() == header => Ok(()),
            Some((n, l)) => Err(Error::Parse {
                line: n,
                message: format!("expected header {header:?}, got {l:?}"),
            }),
            None => Err(Error::Parse {
                line: self.number + 1,
                message: format!("missing header {header:?}"),
            }),
        }
    }
}

/// Parse an impulse response written by [`write_impulse_csv`] (or produced
/// externally in the same format). Bin indices must be strictly increasing;
/// all invariants of [`ImpulseResponse`] are re-checked.
pub fn parse_impulse_csv(text: &str) -> Result<ImpulseResponse> {
    let mut lines = Lines::new(text);
    lines.expect_header("t_start,bin_width")?;
    let (n, values) = lines.next().ok_or(Error::Parse {
        line: 2,
        message: "missing t_start,bin_width values".into(),
    })?;
    let (a, b) = split2(values, n)?;
    let t_start = parse_f64(a, n)?;
    let bin_width = parse_f64(b, n)?;
    lines.expect_header("bin_index,fraction")?;

    let mut bins: Vec<f64> = Vec::new();
    let mut last_index: Option<u64> = None;
    while let Some((n, row)) = lines.next() {
        if row.trim().is_empty() {
            continue;
        }
        let (idx_field, frac_field) = split2(row, n)?;
        let index: u64 = idx_field.trim().parse().map_err(|_| Error::Parse {
            line: n,
            message: format!("expected a bin index, got {idx_field:?}"),
        })?;
        if index >= MAX_BIN_INDEX {
            return Err(Error::Parse {
                line: n,
                message: format!("bin index {index} exceeds the cap {MAX_BIN_INDEX}"),
            });
        }
        if let Some(prev) = last_index {
            if index <= prev {
                return Err(Error::Parse {
                    line: n,
                    message: format!("bin indices must be strictly increasing ({prev} then {index})"),
                });
            }
        }
        last_index = Some(index);
        let fraction = parse_f64(frac_field, n)?;
        bins.resize(index as usize + 1, 0.0);
        bins[index as usize] = fraction;
    }

    ImpulseResponse::new(bin_width, bins, t_start)
}

/// Serialize a gamma set; every ISI coefficient row is written.
pub fn write_gamma_csv(gamma: &GammaSet) -> String {
    let mut out = String::new();
    out.push_str("gamma_s\n");
    out.push_str(&format!("{:e}\n", gamma.gamma_s));
    out.push_str("k,gamma_k\n");
    for (k, &g) in gamma.gamma_isi.iter().enumerate() {
        out.push_str(&format!("{},{g:e}\n", k + 1));
    }
    out
}

/// Parse a gamma set written by [`write_gamma_csv`]. The `k` rows must be
/// contiguous from 1.
pub fn parse_gamma_csv(text: &str) -> Result<GammaSet> {
    let mut lines = Lines::new(text);
    lines.expect_header("gamma_s")?;
    let (n, value) = lines.next().ok_or(Error::Parse {
        line: 2,
        message: "missing gamma_s value".into(),
    })?;
    let gamma_s = parse_f64(value, n)?;
    lines.expect_header("k,gamma_k")?;

    let mut gamma_isi: Vec<f64> = Vec::new();
    while let Some((n, row)) = lines.next() {
        if row.trim().is_empty() {
            continue;
        }
        let (k_field, g_field) = split2(row, n)?;
        let k: u64 = k_field.trim().parse().map_err(|_| Error::Parse {
            line: n,
            message: format!("expected an ISI index, got {k_field:?}"),
        })?;
        if k != gamma_isi.len() as u64 + 1 {
            return Err(Error::Parse {
                line: n,
                message: format!(
                    "ISI rows must be contiguous from 1; expected k = {}, got {k}",
                    gamma_isi.len() + 1
                ),
            });
        }
        gamma_isi.push(parse_f64(g_field, n)?);
    }

    GammaSet::from_parts(gamma_s, gamma_isi)
}

/// Header for the Monte Carlo results log.
pub const MC_REPORT_CSV_HEADER: &str = "bits,errors,ber,std_error,seed";

/// One results-log row for a Monte Carlo run.
pub fn mc_report_csv_row(report: &McRunReport) -> String {
    format!(
        "{},{},{:e},{:e},{}",
        report.bits_simulated,
        report.errors_observed,
        report.ber_estimate,
        report.binomial_std_error,
        report.seed
    )
}
