//! Serial vs. data-parallel timing of the normalization kernel.
//!
//! Each run fits the global bounds and applies the pixel map to a seeded
//! random buffer. Both variants process identical input and must produce
//! bit-identical output; only wall-clock time differs. Warmup runs are
//! discarded and the median of the timed runs is the headline number.

use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normcodec::{NormMode, NormParams, PIXEL_MAX, PIXEL_MIN};
use crate::rng::SplitMix64;

pub const BENCH_SEED: u64 = 0x5eed_0f7a_b1e1;
const UNKNOWN: &str = "unknown";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least 3 timed repetitions, got {0}")]
    InsufficientRepetitions(usize),
    #[error("need at least 1 warmup run")]
    NoWarmup,
    #[error("need at least one element")]
    NoElements,
    #[error("{0:?} output differs from the serial reference")]
    OutputMismatch(Variant),
    #[error(transparent)]
    Codec(#[from] crate::normcodec::CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Serial,
    Parallel,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Serial => "serial",
            Variant::Parallel => "parallel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub cpu_model: String,
    pub logical_cores: String,
    pub total_memory: String,
    pub os: String,
}

impl MachineInfo {
    pub fn logical_core_count(&self) -> Option<usize> {
        self.logical_cores.parse().ok()
    }

    /// One-line label used in the timing table.
    pub fn label(&self) -> String {
        format!("{} ({} logical cores)", self.cpu_model, self.logical_cores)
    }

    /// Host description laid out like a system-configuration table.
    pub fn to_markdown(&self) -> String {
        format!(
            "| Processor | Logical cores | Physical RAM | Operating system |\n\
             |---|---|---|---|\n\
             | {} | {} | {} | {} |\n",
            self.cpu_model, self.logical_cores, self.total_memory, self.os
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "processor,logical_cores,physical_ram,operating_system\n{},{},{},{}\n",
            csv_field(&self.cpu_model),
            csv_field(&self.logical_cores),
            csv_field(&self.total_memory),
            csv_field(&self.os)
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn proc_field(path: &str, key: &str) -> Option<String> {
    let text = fs::read_to_string(path).ok()?;
    text.lines()
        .find(|l| l.starts_with(key))
        .and_then(|l| l.split_once(':'))
        .map(|(_, v)| v.trim().to_string())
        .filter(|v| !v.is_empty())
}

fn os_description() -> Option<String> {
    let text = fs::read_to_string("/etc/os-release").ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("PRETTY_NAME="))
        .map(|v| v.trim_matches('"').to_string())
}

/// Best-effort host description; undetectable fields read "unknown".
pub fn machine_info() -> MachineInfo {
    let cpu_model = proc_field("/proc/cpuinfo", "model name")
        .or_else(|| proc_field("/proc/cpuinfo", "Hardware"))
        .unwrap_or_else(|| UNKNOWN.to_string());
    let logical_cores = std::thread::available_parallelism()
        .map(|n| n.get().to_string())
        .unwrap_or_else(|_| UNKNOWN.to_string());
    let total_memory = proc_field("/proc/meminfo", "MemTotal")
        .and_then(|v| {
            let kib: f64 = v.split_whitespace().next()?.parse().ok()?;
            Some(format!("{:.1} GiB", kib / (1024.0 * 1024.0)))
        })
        .unwrap_or_else(|| UNKNOWN.to_string());
    let os = format!(
        "{} {}",
        os_description().unwrap_or_else(|| std::env::consts::OS.to_string()),
        std::env::consts::ARCH
    );
    MachineInfo {
        cpu_model,
        logical_cores,
        total_memory,
        os,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub variant: Variant,
    pub element_count: usize,
    /// Seconds per timed run, in execution order.
    pub samples: Vec<f64>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub machine: MachineInfo,
}

/// Median of a sample; the mean of the two middle order statistics when the
/// count is even.
pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn fit_parallel(values: &[f64]) -> (f64, f64) {
    values
        .par_chunks(1 << 16)
        .map(|c| {
            c.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |(a, b), (c, d)| (a.min(c), b.max(d)),
        )
}

/// The timed kernel: fit global bounds, then map every element.
pub fn normalize_kernel(values: &[f64], variant: Variant) -> Result<Vec<f64>, BenchError> {
    let n = values.len();
    match variant {
        Variant::Serial => {
            let params = NormParams::fit(values, n, 1, NormMode::Global, PIXEL_MIN, PIXEL_MAX)?;
            Ok(params.apply(values))
        }
        Variant::Parallel => {
            // min/max are exact under any grouping, so the bounds match the serial fit.
            let (x_min, x_max) = fit_parallel(values);
            let params = NormParams {
                x_min,
                x_max,
                a: PIXEL_MIN,
                b: PIXEL_MAX,
                mode: NormMode::Global,
                per_column_bounds: None,
                rows: n,
                cols: 1,
                degenerate_columns: if x_min == x_max { vec![0] } else { vec![] },
                orientation: crate::normcodec::ORIENTATION.to_string(),
                column_names: None,
            };
            Ok(params.apply_parallel(values))
        }
    }
}

pub fn bench_input(n_elements: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(BENCH_SEED);
    (0..n_elements).map(|_| rng.uniform(-1000.0, 1000.0)).collect()
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Runs each variant `warmup + repetitions` times on the same seeded input.
/// Every variant's output is checked bit-for-bit against the serial result.
pub fn bench_normalize(
    n_elements: usize,
    repetitions: usize,
    warmup: usize,
    variants: &[Variant],
) -> Result<Vec<BenchResult>, BenchError> {
    if n_elements == 0 {
        return Err(BenchError::NoElements);
    }
    if repetitions < 3 {
        return Err(BenchError::InsufficientRepetitions(repetitions));
    }
    if warmup < 1 {
        return Err(BenchError::NoWarmup);
    }
    let input = bench_input(n_elements);
    let reference = normalize_kernel(&input, Variant::Serial)?;
    let machine = machine_info();

    let mut results = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut samples = Vec::with_capacity(repetitions);
        for run in 0..warmup + repetitions {
            let start = Instant::now();
            let out = normalize_kernel(&input, variant)?;
            let elapsed = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
            if !same_bits(&out, &reference) {
                return Err(BenchError::OutputMismatch(variant));
            }
            if run >= warmup {
                samples.push(elapsed);
            }
        }
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        results.push(BenchResult {
            variant,
            element_count: n_elements,
            median: median(&samples),
            samples,
            min,
            max,
            machine: machine.clone(),
        });
    }
    Ok(results)
}

pub fn results_csv(results: &[BenchResult]) -> String {
    let mut s = String::from("machine,variant,elements,min_s,median_s,max_s\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6}",
            csv_field(&r.machine.label()),
            r.variant.as_str(),
            r.element_count,
            r.min,
            r.median,
            r.max
        );
    }
    s
}

/// Median times per host in a two-column serial/parallel layout.
pub fn render_table(results: &[BenchResult]) -> String {
    let cell = |v: Variant| {
        results
            .iter()
            .find(|r| r.variant == v)
            .map(|r| format!("{:.6}", r.median))
            .unwrap_or_else(|| "N/A".to_string())
    };
    let machine = results
        .first()
        .map(|r| r.machine.label())
        .unwrap_or_else(|| UNKNOWN.to_string());
    let elements = results.first().map(|r| r.element_count).unwrap_or(0);
    format!(
        "EXECUTION TIME OF THE NORMALIZATION KERNEL ({elements} elements, median of timed runs; \
         times cover min-max fitting and the pixel map only)\n\n\
         | Computer description | Serial CPU execution time (seconds) | Parallel CPU execution time (seconds) |\n\
         |---|---|---|\n\
         | {machine} | {} | {} |\n",
        cell(Variant::Serial),
        cell(Variant::Parallel)
    )
}
