//! Strict `key = value` configuration with `[section]` headers.
//!
//! Keys before the first header belong to the model. Every key has a
//! default, every unknown key or section is an error, and each key may be
//! given once. Full-line comments start with `#` or `;`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fpe_dss::classical::uniform_grid;
use fpe_dss::fpe::ModelParams;
use fpe_dss::hermite::BasisSpec;
use fpe_dss::langevin::{stability_limit, DnsConfig};
use fpe_dss::noise::{Extrapolation, NoiseParams, TrexConfig, ZneConfig};
use fpe_dss::qpe::{QpeConfig, QueryInit, TimeScale};
use fpe_dss::vqe::{Entanglement, ImfilConfig, Mitigation, Optimizer, SpsaConfig, VqeConfig};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// `(section, key, default)`; the empty section is the model block.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("", "a", "-1"),
    ("", "b", "2"),
    ("", "gamma", "1"),
    ("", "ell", "0.5"),
    ("", "N", "8"),
    ("", "headroom", "4"),
    ("", "method", "classical"),
    ("", "seed", "0"),
    ("", "output_dir", "out"),
    ("output", "grid_min", "-2"),
    ("output", "grid_max", "2"),
    ("output", "grid_points", "401"),
    ("output", "dump_matrix", "false"),
    ("qpe", "enabled", "false"),
    ("qpe", "precision_qubits", "7"),
    ("qpe", "shots", "8192"),
    ("qpe", "time_scale", "1"),
    ("qpe", "sign_correction", "true"),
    ("vqe", "enabled", "false"),
    ("vqe", "optimizer", "spsa"),
    ("vqe", "iters", "500"),
    ("vqe", "shots", "0"),
    ("vqe", "reps", "4"),
    ("vqe", "entanglement", "linear"),
    ("vqe", "noisy", "false"),
    ("vqe", "mitigation", "none"),
    ("vqe", "penalty", "auto"),
    ("vqe", "compare_seeds", "0"),
    ("vqe", "spsa_a", "auto"),
    ("vqe", "spsa_c", "0.1"),
    ("vqe", "spsa_stability", "auto"),
    ("vqe", "spsa_alpha", "0.602"),
    ("vqe", "spsa_gamma", "0.101"),
    ("vqe", "spsa_target_step", "2"),
    ("vqe", "spsa_blocking", "true"),
    ("vqe", "imfil_lower", "-3.141592653589793"),
    ("vqe", "imfil_upper", "3.141592653589793"),
    ("vqe", "imfil_mesh", "0.5"),
    ("vqe", "imfil_min_mesh", "0.001"),
    ("noise", "p1", "0.005"),
    ("noise", "p2", "0.05"),
    ("noise", "readout_p01", "0.005"),
    ("noise", "readout_p10", "0.005"),
    ("zne", "scale_factors", "1,3,5"),
    ("zne", "extrapolation", "quadratic"),
    ("trex", "twirls", "16"),
    ("trex", "calibration_shots", "8192"),
    ("dns", "step", "0.001"),
    ("dns", "steps", "10000000"),
    ("dns", "burn_in", "10000"),
    ("dns", "x0", "0"),
    ("dns", "bins", "100"),
    ("dns", "range_min", "-2"),
    ("dns", "range_max", "2"),
];

fn sections() -> Vec<&'static str> {
    let mut out: Vec<&str> = Vec::new();
    for (s, _, _) in SCHEMA {
        if !out.contains(s) {
            out.push(s);
        }
    }
    out
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_owned()
    } else {
        format!("{section}.{key}")
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: Option<usize>,
}

/// Parsed but untyped config: every schema key with its text and the line
/// it came from (`None` for defaults and overrides).
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), Entry>,
}

impl RawConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let known = sections();
        let mut given: BTreeMap<(String, String), Entry> = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(Some(line), None, "unterminated section header"))?
                    .trim();
                if name.is_empty() || !known.contains(&name) {
                    return Err(CliError::config(Some(line), None, format!("unknown section [{name}]")));
                }
                section = name.to_owned();
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| CliError::config(Some(line), None, format!("expected `key = value`, found `{trimmed}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let q = qualified(&section, key);
            if key.is_empty() {
                return Err(CliError::config(Some(line), None, "missing key before `=`"));
            }
            if !SCHEMA.iter().any(|(s, k, _)| *s == section && *k == key) {
                let place = if section.is_empty() { "model block".to_owned() } else { format!("[{section}]") };
                return Err(CliError::config(Some(line), Some(&q), format!("unknown key in {place}")));
            }
            if value.is_empty() {
                return Err(CliError::config(Some(line), Some(&q), "empty value"));
            }
            let slot = (section.clone(), key.to_owned());
            if let Some(prev) = given.get(&slot) {
                let first = prev.line.unwrap_or(0);
                return Err(CliError::config(Some(line), Some(&q), format!("duplicate key (first set on line {first})")));
            }
            given.insert(
                slot,
                Entry {
                    value: value.to_owned(),
                    line: Some(line),
                },
            );
        }
        let mut entries = BTreeMap::new();
        for (s, k, d) in SCHEMA {
            let slot = (s.to_string(), k.to_string());
            let entry = given.remove(&slot).unwrap_or(Entry {
                value: d.to_string(),
                line: None,
            });
            entries.insert(slot, entry);
        }
        Ok(Self { entries })
    }

    /// Resolves `section.key`, a model key, or a unique bare key name.
    pub fn resolve(&self, name: &str) -> Option<(String, String)> {
        let name = if name == "iters" { "vqe.iters" } else { name };
        if let Some((s, k)) = name.split_once('.') {
            return self.entries.contains_key(&(s.to_owned(), k.to_owned())).then(|| (s.to_owned(), k.to_owned()));
        }
        if self.entries.contains_key(&(String::new(), name.to_owned())) {
            return Some((String::new(), name.to_owned()));
        }
        let hits: Vec<_> = self.entries.keys().filter(|(_, k)| k == name).collect();
        match hits.as_slice() {
            [one] => Some((*one).clone()),
            _ => None,
        }
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> CliResult<()> {
        let q = qualified(section, key);
        let entry = self
            .entries
            .get_mut(&(section.to_owned(), key.to_owned()))
            .ok_or_else(|| CliError::config(None, Some(&q), "unknown key"))?;
        *entry = Entry {
            value: value.trim().to_owned(),
            line: None,
        };
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> &str {
        &self.entries[&(section.to_owned(), key.to_owned())].value
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.entries.get(&(section.to_owned(), key.to_owned())).and_then(|e| e.line)
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> CliError {
        CliError::config(self.line(section, key), Some(&qualified(section, key)), message)
    }

    fn parse_with<T>(&self, section: &str, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> CliResult<T> {
        let v = self.get(section, key);
        f(v).ok_or_else(|| self.err(section, key, format!("expected {what}, found `{v}`")))
    }

    fn real(&self, section: &str, key: &str) -> CliResult<f64> {
        self.parse_with(section, key, "a finite number", |v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
    }

    fn optional_real(&self, section: &str, key: &str) -> CliResult<Option<f64>> {
        if self.get(section, key) == "auto" {
            return Ok(None);
        }
        self.parse_with(section, key, "a finite number or `auto`", |v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .map(Some)
    }

    fn count(&self, section: &str, key: &str) -> CliResult<usize> {
        self.parse_with(section, key, "a non-negative integer", |v| v.parse::<usize>().ok())
    }

    fn positive_count(&self, section: &str, key: &str) -> CliResult<usize> {
        let n = self.count(section, key)?;
        if n == 0 {
            return Err(self.err(section, key, "must be at least 1"));
        }
        Ok(n)
    }

    fn flag(&self, section: &str, key: &str) -> CliResult<bool> {
        self.parse_with(section, key, "`true` or `false`", |v| match v {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    fn probability(&self, section: &str, key: &str) -> CliResult<f64> {
        let p = self.real(section, key)?;
        if !(0.0..1.0).contains(&p) {
            return Err(self.err(section, key, format!("probability must lie in [0, 1), got {p}")));
        }
        Ok(p)
    }

    fn choice<T: Copy>(&self, section: &str, key: &str, options: &[(&str, T)]) -> CliResult<T> {
        let v = self.get(section, key);
        options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            self.err(section, key, format!("expected one of {}, found `{v}`", names.join("|")))
        })
    }

    /// Maps a core validation error to the key that caused it.
    fn core<T>(&self, section: &str, names: &[(&str, &str)], r: fpe_dss::Result<T>) -> CliResult<T> {
        r.map_err(|e| match &e {
            fpe_dss::Error::InvalidParameter { name, reason } => match names.iter().find(|(n, _)| n == name) {
                Some((_, key)) => self.err(section, key, reason.clone()),
                None => CliError::config(None, Some(name), reason.clone()),
            },
            _ => CliError::config(None, None, e.to_string()),
        })
    }

    /// Canonical text of every key, defaults included.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for s in sections() {
            if !s.is_empty() {
                out.push_str(&format!("\n[{s}]\n"));
            }
            for (sec, k, _) in SCHEMA.iter().filter(|(sec, _, _)| *sec == s) {
                out.push_str(&format!("{k} = {}\n", self.get(sec, k)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Classical,
    Qpe,
    Vqe,
    Dns,
    Compare,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Classical => "classical",
            Method::Qpe => "qpe",
            Method::Vqe => "vqe",
            Method::Dns => "dns",
            Method::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpeSettings {
    pub enabled: bool,
    pub config: QpeConfig,
    pub sign_correction: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqeSettings {
    pub enabled: bool,
    pub config: VqeConfig,
    pub reps: usize,
    pub entanglement: Entanglement,
    /// Seeds in the mitigation comparison; `0` skips it.
    pub compare_seeds: usize,
    pub noise: NoiseParams,
    pub zne: ZneConfig,
    pub trex: TrexConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnsSettings {
    pub config: DnsConfig,
    pub bins: usize,
    pub range: (f64, f64),
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub basis: BasisSpec,
    pub method: Method,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: Vec<f64>,
    pub dump_matrix: bool,
    pub qpe: QpeSettings,
    pub vqe: VqeSettings,
    pub dns: DnsSettings,
    pub echo: String,
    /// SHA-256 of `echo`, hex.
    pub hash: String,
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    RunConfig::from_raw(&RawConfig::parse(text)?)
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        let m = "";
        let model = raw.core(
            m,
            &[("a", "a"), ("b", "b"), ("gamma", "gamma")],
            ModelParams::new(raw.real(m, "a")?, raw.real(m, "b")?, raw.real(m, "gamma")?),
        )?;
        if model.b() == 0.0 && model.a() <= 0.0 {
            return Err(raw.err(m, "a", "with b = 0 the density is normalizable only for a > 0"));
        }
        let n = raw.positive_count(m, "N")?;
        let headroom = raw.count(m, "headroom")?;
        let basis = raw.core(
            m,
            &[("N", "N"), ("ell", "ell"), ("headroom", "headroom")],
            BasisSpec::with_headroom(n, raw.real(m, "ell")?, headroom),
        )?;
        if headroom < 4 {
            return Err(raw.err(m, "headroom", "at least 4 extra basis indices are required"));
        }
        let method = raw.choice(
            m,
            "method",
            &[
                ("classical", Method::Classical),
                ("qpe", Method::Qpe),
                ("vqe", Method::Vqe),
                ("dns", Method::Dns),
                ("compare", Method::Compare),
            ],
        )?;
        let seed = raw.parse_with(m, "seed", "a non-negative integer", |v| v.parse::<u64>().ok())?;
        let output_dir = PathBuf::from(raw.get(m, "output_dir"));

        let o = "output";
        let (lo, hi) = (raw.real(o, "grid_min")?, raw.real(o, "grid_max")?);
        if !(lo < hi) {
            return Err(raw.err(o, "grid_max", format!("must exceed grid_min = {lo}")));
        }
        let points = raw.count(o, "grid_points")?;
        if points < 2 {
            return Err(raw.err(o, "grid_points", "at least 2 points are required"));
        }
        let grid = uniform_grid(lo, hi, points);
        let dump_matrix = raw.flag(o, "dump_matrix")?;

        let qpe = Self::qpe(raw, seed)?;
        let vqe = Self::vqe(raw, seed, n)?;
        let dns = Self::dns(raw, seed, &model)?;

        let echo = raw.echo();
        let hash = Sha256::digest(echo.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            model,
            basis,
            method,
            seed,
            output_dir,
            grid,
            dump_matrix,
            qpe,
            vqe,
            dns,
            echo,
            hash,
        })
    }

    fn qpe(raw: &RawConfig, seed: u64) -> CliResult<QpeSettings> {
        let s = "qpe";
        let precision = raw.positive_count(s, "precision_qubits")?;
        let time_scale = match raw.get(s, "time_scale") {
            "gershgorin" => TimeScale::GershgorinPi,
            _ => {
                let tau = raw.parse_with(s, "time_scale", "a positive number or `gershgorin`", |v| {
                    v.parse::<f64>().ok().filter(|t| t.is_finite() && *t > 0.0)
                })?;
                TimeScale::Fixed(tau)
            }
        };
        let config = QpeConfig {
            num_precision_qubits: precision,
            shots: raw.count(s, "shots")?,
            time_scale,
            init_query_state: QueryInit::Uniform,
            seed,
        };
        let config = raw.core(
            s,
            &[("num_precision_qubits", "precision_qubits"), ("tau", "time_scale")],
            config.validate().map(|_| config.clone()),
        )?;
        Ok(QpeSettings {
            enabled: raw.flag(s, "enabled")?,
            config,
            sign_correction: raw.flag(s, "sign_correction")?,
        })
    }

    fn vqe(raw: &RawConfig, seed: u64, n: usize) -> CliResult<VqeSettings> {
        let s = "vqe";
        let noise = NoiseParams {
            p1: raw.probability("noise", "p1")?,
            p2: raw.probability("noise", "p2")?,
            readout_p01: raw.probability("noise", "readout_p01")?,
            readout_p10: raw.probability("noise", "readout_p10")?,
        };
        let scale_factors = raw.parse_with("zne", "scale_factors", "a comma-separated list of odd integers", |v| {
            v.split(',').map(|x| x.trim().parse::<usize>().ok()).collect::<Option<Vec<_>>>()
        })?;
        let extrapolation = raw.choice(
            "zne",
            "extrapolation",
            &[("linear", Extrapolation::Linear), ("quadratic", Extrapolation::Quadratic)],
        )?;
        let zne = ZneConfig { scale_factors, extrapolation };
        if let Err(e) = zne.validate() {
            let reason = match e {
                fpe_dss::Error::InvalidParameter { reason, .. } => reason,
                other => other.to_string(),
            };
            return Err(raw.err("zne", "scale_factors", reason));
        }
        let trex = TrexConfig {
            num_twirls: raw.positive_count("trex", "twirls")?,
            calibration_shots: raw.positive_count("trex", "calibration_shots")?,
        };

        let optimizer = match raw.choice(s, "optimizer", &[("spsa", false), ("imfil", true)])? {
            false => {
                let spsa = SpsaConfig {
                    a: raw.optional_real(s, "spsa_a")?,
                    c: raw.real(s, "spsa_c")?,
                    stability: raw.optional_real(s, "spsa_stability")?,
                    alpha: raw.real(s, "spsa_alpha")?,
                    gamma: raw.real(s, "spsa_gamma")?,
                    target_step: raw.real(s, "spsa_target_step")?,
                    calibration_steps: SpsaConfig::default().calibration_steps,
                    blocking: raw.flag(s, "spsa_blocking")?,
                };
                for (key, v) in [("spsa_c", spsa.c), ("spsa_target_step", spsa.target_step)] {
                    if !(v > 0.0) {
                        return Err(raw.err(s, key, "must be positive"));
                    }
                }
                if spsa.a.is_some_and(|a| !(a > 0.0)) {
                    return Err(raw.err(s, "spsa_a", "must be positive"));
                }
                if spsa.stability.is_some_and(|a| a < 0.0) {
                    return Err(raw.err(s, "spsa_stability", "must be non-negative"));
                }
                Optimizer::Spsa(spsa)
            }
            true => {
                let imfil = ImfilConfig {
                    lower: raw.real(s, "imfil_lower")?,
                    upper: raw.real(s, "imfil_upper")?,
                    initial_mesh: raw.real(s, "imfil_mesh")?,
                    min_mesh: raw.real(s, "imfil_min_mesh")?,
                    ..ImfilConfig::default()
                };
                if !(imfil.upper > imfil.lower) {
                    return Err(raw.err(s, "imfil_upper", "must exceed imfil_lower"));
                }
                if !(imfil.initial_mesh > 0.0) || !(imfil.min_mesh > 0.0) {
                    return Err(raw.err(s, "imfil_mesh", "mesh sizes must be positive"));
                }
                Optimizer::Imfil(imfil)
            }
        };
        let noisy = raw.flag(s, "noisy")?;
        let mitigation = match raw.choice(s, "mitigation", &[("none", 0), ("zne", 1), ("trex", 2)])? {
            0 => Mitigation::None,
            1 => Mitigation::Zne(zne.clone()),
            _ => Mitigation::Trex(trex),
        };
        if !noisy && mitigation != Mitigation::None {
            return Err(raw.err(s, "mitigation", "mitigation needs `noisy = true`"));
        }
        let compare_seeds = raw.count(s, "compare_seeds")?;
        if compare_seeds > 0 && !noisy {
            return Err(raw.err(s, "compare_seeds", "the mitigation comparison needs `noisy = true`"));
        }
        let qubits = (n.next_power_of_two().trailing_zeros() as usize).max(1);
        if noisy && qubits > fpe_dss::noise::MAX_NOISY_QUBITS {
            return Err(raw.err(s, "noisy", format!("N = {n} needs {qubits} qubits, above the noisy-simulation limit")));
        }
        let penalty = raw.optional_real(s, "penalty")?;
        let config = VqeConfig {
            optimizer,
            max_iterations: raw.positive_count(s, "iters")?,
            shots: raw.count(s, "shots")?,
            seed,
            noise: noisy.then_some(noise),
            mitigation,
            penalty,
        };
        Ok(VqeSettings {
            enabled: raw.flag(s, "enabled")?,
            config,
            reps: raw.count(s, "reps")?,
            entanglement: raw.choice(s, "entanglement", &[("linear", Entanglement::Linear), ("full", Entanglement::Full)])?,
            compare_seeds,
            noise,
            zne,
            trex,
        })
    }

    fn dns(raw: &RawConfig, seed: u64, model: &ModelParams) -> CliResult<DnsSettings> {
        let s = "dns";
        let step = raw.real(s, "step")?;
        if !(step > 0.0) {
            return Err(raw.err(s, "step", "must be positive"));
        }
        let config = DnsConfig {
            step,
            num_steps: raw.positive_count(s, "steps")?,
            burn_in: raw.count(s, "burn_in")?,
            seed,
            x0: raw.real(s, "x0")?,
        };
        if config.burn_in >= config.num_steps {
            return Err(raw.err(s, "burn_in", format!("must be below steps = {}", config.num_steps)));
        }
        raw.core(s, &[("x0", "x0"), ("step", "step")], config.validate())?;
        let limit = stability_limit(model, config.x0);
        if step > limit {
            return Err(raw.err(s, "step", format!("exceeds the stability limit {limit:e} for this drift")));
        }
        let bins = raw.count(s, "bins")?;
        if bins < 2 {
            return Err(raw.err(s, "bins", "at least 2 bins are required"));
        }
        let range = (raw.real(s, "range_min")?, raw.real(s, "range_max")?);
        if !(range.0 < range.1) {
            return Err(raw.err(s, "range_max", format!("must exceed range_min = {}", range.0)));
        }
        Ok(DnsSettings { config, bins, range })
    }

    pub fn num_qubits(&self) -> usize {
        (self.basis.num_even_states().next_power_of_two().trailing_zeros() as usize).max(1)
    }
}
