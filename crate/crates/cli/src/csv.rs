use fpe_dss::output::fmt17;

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `# fpe-dss <version> config_sha256=<hash> seed=<seed>`
pub fn provenance(hash: &str, seed: u64) -> String {
    format!("# fpe-dss {VERSION} config_sha256={hash} seed={seed}\n")
}

/// A CSV file built in memory; cells are written as given.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(cfg: &RunConfig, columns: &[&str]) -> Self {
        Self::with_header(&cfg.hash, cfg.seed, columns)
    }

    pub fn with_header(hash: &str, seed: u64, columns: &[&str]) -> Self {
        let mut text = provenance(hash, seed);
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let cells: Vec<&str> = cells.iter().map(AsRef::as_ref).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// `-0` prints as `0`.
pub fn num(x: f64) -> String {
    fmt17(if x == 0.0 { 0.0 } else { x })
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
