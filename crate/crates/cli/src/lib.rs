//! Command-line driver: config parsing, pipelines and CSV export.

pub mod config;
pub mod csv;
pub mod error;
pub mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rayon::ThreadPool;
use sha2::{Digest, Sha256};

use config::{Method, RawConfig, RunConfig};
use csv::{num, Table};
pub use error::{CliError, CliResult};
use pipeline::Outputs;

/// Caps the worker pool.
pub const THREADS_ENV: &str = "FPE_DSS_THREADS";

/// Name of the effective-config echo inside each output directory.
pub const ECHO_FILE: &str = "effective_config.ini";

pub fn thread_pool() -> CliResult<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::config(None, Some(THREADS_ENV), format!("expected a positive integer, found `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::config(None, Some(THREADS_ENV), e.to_string()))
}

fn read_config(path: &Path) -> CliResult<RawConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(None, None, format!("cannot read {}: {e}", path.display())))?;
    RawConfig::parse(&text)
}

/// Writes the echo and every output file; returns the paths written.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, out: &Outputs) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    let echo = format!("{}{}", csv::provenance(&cfg.hash, cfg.seed), cfg.echo);
    for (name, text) in std::iter::once((ECHO_FILE, echo.as_str())).chain(out.files.iter().map(|(n, t)| (n.as_str(), t.as_str()))) {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Runs the method named in the config, or `compare` when forced.
pub fn solve(path: &Path, force_compare: bool) -> CliResult<Vec<PathBuf>> {
    let mut raw = read_config(path)?;
    if force_compare {
        raw.set("", "method", Method::Compare.name())?;
    }
    let cfg = RunConfig::from_raw(&raw)?;
    let pool = thread_pool()?;
    let out = pool.install(|| pipeline::run(&cfg))?;
    write_outputs(&cfg.output_dir, &cfg, &out)
}

/// `KEY=v1,v2,...` as given to `--vary`.
pub fn parse_vary(spec: &str) -> CliResult<(String, Vec<String>)> {
    let bad = |m: &str| CliError::config(None, Some("--vary"), format!("{m} in `{spec}`"));
    let (key, values) = spec.split_once('=').ok_or_else(|| bad("expected KEY=v1,v2"))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_owned()).collect();
    if key.trim().is_empty() || values.iter().any(String::is_empty) {
        return Err(bad("empty key or value"));
    }
    Ok((key.trim().to_owned(), values))
}

fn label(assignment: &[(String, String)]) -> String {
    assignment.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("_")
}

/// Cartesian product over the `--vary` lists, first list outermost. Each
/// point runs in `<output_dir>/<key=value_...>/`; `sweep.csv` in the base
/// directory gathers every moment row.
pub fn sweep(path: &Path, varies: &[(String, Vec<String>)]) -> CliResult<Vec<PathBuf>> {
    let base = read_config(path)?;
    let base_cfg = RunConfig::from_raw(&base)?;
    let mut slots = Vec::new();
    for (name, _) in varies {
        let slot = base
            .resolve(name)
            .ok_or_else(|| CliError::config(None, Some(name), "unknown or ambiguous key for --vary"))?;
        slots.push(slot);
    }
    let mut points: Vec<Vec<(String, String)>> = vec![vec![]];
    for (name, values) in varies {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((name.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    let mut configs = Vec::with_capacity(points.len());
    for point in &points {
        let mut raw = base.clone();
        for ((_, value), (section, key)) in point.iter().zip(&slots) {
            raw.set(section, key, value)?;
        }
        let dir = base_cfg.output_dir.join(label(point));
        raw.set("", "output_dir", &dir.to_string_lossy())?;
        configs.push(RunConfig::from_raw(&raw)?);
    }
    let pool = thread_pool()?;
    let results: Vec<CliResult<Outputs>> = pool.install(|| configs.par_iter().map(pipeline::run).collect());

    let mut spec = base_cfg.echo.clone();
    for (k, vs) in varies {
        spec.push_str(&format!("--vary {k}={}\n", vs.join(",")));
    }
    let hash: String = Sha256::digest(spec.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let mut columns: Vec<&str> = varies.iter().map(|(k, _)| k.as_str()).collect();
    columns.extend(["method", "x2", "x2_rel_error"]);
    let mut summary = Table::with_header(&hash, base_cfg.seed, &columns);

    let mut written = Vec::new();
    for ((cfg, point), result) in configs.iter().zip(&points).zip(results) {
        let out = result?;
        written.extend(write_outputs(&cfg.output_dir, cfg, &out)?);
        for m in &out.moments {
            let mut row: Vec<String> = point.iter().map(|(_, v)| v.clone()).collect();
            row.extend([m.method.clone(), num(m.x2), num(m.rel_error)]);
            summary.row(&row);
        }
    }
    let dir = &base_cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join("sweep.csv");
    fs::write(&path, summary.finish()).map_err(|e| CliError::io(&path, e))?;
    written.push(path);
    Ok(written)
}
