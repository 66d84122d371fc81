//! One function per method. Each returns the files it would write, so runs
//! can be compared byte for byte without touching the disk.

use fpe_dss::classical::{moment_from_amplitudes, normalize_zero_mode, reconstruct_pdf, solve_classical, ClassicalSolution, PdfReconstruction, ZeroMode};
use fpe_dss::exact::{exact_moment, make_exact_pdf};
use fpe_dss::langevin::{simulate_with, Histogram, PdfEstimate, SecondMoment};
use fpe_dss::qpe::{qpe_zero_mode, QpeResult};
use fpe_dss::vqe::{run_vqe, AnsatzSpec, Mitigation, VqeResult};
use rayon::prelude::*;

use crate::config::{Method, RunConfig};
use crate::csv::{num, opt, Table};
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub method: String,
    pub x2: f64,
    pub rel_error: f64,
}

/// Files of one run, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
    pub moments: Vec<MomentRow>,
}

impl Outputs {
    fn add(&mut self, name: &str, text: String) {
        self.files.push((name.to_owned(), text));
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }
}

struct Baseline {
    exact_x2: f64,
    exact_grid: Vec<f64>,
    classical: ClassicalSolution,
    classical_pdf: PdfReconstruction,
}

impl Baseline {
    fn new(cfg: &RunConfig) -> CliResult<Self> {
        let exact = make_exact_pdf(&cfg.model)?;
        let classical = solve_classical(&cfg.model, &cfg.basis)?;
        Ok(Self {
            exact_x2: exact_moment(&exact, 2)?,
            exact_grid: cfg.grid.iter().map(|&x| exact.eval(x)).collect(),
            classical_pdf: classical.pdf(&cfg.grid),
            classical,
        })
    }

    fn moment_rows(&self) -> Vec<MomentRow> {
        let x2 = self.classical.second_moment();
        vec![
            MomentRow {
                method: "exact".into(),
                x2: self.exact_x2,
                rel_error: 0.0,
            },
            MomentRow {
                method: "classical".into(),
                x2,
                rel_error: relative(x2, self.exact_x2),
            },
        ]
    }

    /// `x,p_method,p_exact,p_classical,negative_region`
    fn pdf_table(&self, cfg: &RunConfig, method: &[Option<f64>]) -> String {
        let mut t = Table::new(cfg, &["x", "p_method", "p_exact", "p_classical", "negative_region"]);
        for (i, &x) in cfg.grid.iter().enumerate() {
            let negative = method[i].is_some_and(|p| p < 0.0);
            t.row(&[
                num(x),
                opt(method[i]),
                num(self.exact_grid[i]),
                num(self.classical_pdf.values[i]),
                u8::from(negative).to_string(),
            ]);
        }
        t.finish()
    }

    fn normalized(&self, amplitudes: &[f64]) -> CliResult<ZeroMode> {
        Ok(normalize_zero_mode(&ZeroMode::raw(amplitudes.to_vec(), 0.0), &self.classical.integrals)?)
    }

    fn quantum_moment(&self, method: &str, mode: &ZeroMode) -> MomentRow {
        let x2 = moment_from_amplitudes(mode, &self.classical.integrals);
        MomentRow {
            method: method.into(),
            x2,
            rel_error: relative(x2, self.classical.second_moment()),
        }
    }
}

fn relative(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs()
}

fn moments_table(cfg: &RunConfig, rows: &[MomentRow]) -> String {
    let mut t = Table::new(cfg, &["method", "x2", "x2_rel_error"]);
    for r in rows {
        t.row(&[r.method.clone(), num(r.x2), num(r.rel_error)]);
    }
    t.finish()
}

fn amplitude_table(cfg: &RunConfig, mode: &ZeroMode) -> String {
    let mut t = Table::new(cfg, &["n", "b_n"]);
    for (k, b) in mode.amplitudes.iter().enumerate() {
        t.row(&[(2 * k).to_string(), num(*b)]);
    }
    t.finish()
}

fn matrix_dump(cfg: &RunConfig, base: &Baseline) -> String {
    format!("{}{}", crate::csv::provenance(&cfg.hash, cfg.seed), base.classical.fpe.to_csv())
}

pub fn run(cfg: &RunConfig) -> CliResult<Outputs> {
    let base = Baseline::new(cfg)?;
    let mut out = Outputs::default();
    if cfg.dump_matrix {
        out.add("L.csv", matrix_dump(cfg, &base));
    }
    match cfg.method {
        Method::Classical => classical(cfg, &base, &mut out),
        Method::Qpe => qpe(cfg, &base, &mut out).map(|_| ())?,
        Method::Vqe => vqe(cfg, &base, &mut out).map(|_| ())?,
        Method::Dns => dns(cfg, &base, &mut out).map(|_| ())?,
        Method::Compare => compare(cfg, &base, &mut out)?,
    }
    let moments = moments_table(cfg, &out.moments);
    out.add("moments.csv", moments);
    Ok(out)
}

fn classical(cfg: &RunConfig, base: &Baseline, out: &mut Outputs) {
    let p: Vec<Option<f64>> = base.classical_pdf.values.iter().map(|&v| Some(v)).collect();
    out.add("pdf.csv", base.pdf_table(cfg, &p));
    out.add("classical_amplitudes.csv", amplitude_table(cfg, &base.classical.mode));
    out.moments = base.moment_rows();
}

fn qpe(cfg: &RunConfig, base: &Baseline, out: &mut Outputs) -> CliResult<Vec<f64>> {
    let reference = cfg.qpe.sign_correction.then_some(base.classical.mode.amplitudes.as_slice());
    let r: QpeResult = qpe_zero_mode(&base.classical.hamiltonian, &cfg.qpe.config, reference)?;

    let mut t = Table::new(cfg, &["n", "abs_amplitude", "signed_amplitude_or_blank"]);
    for (k, a) in r.abs_amplitudes.iter().enumerate() {
        let signed = r.signed_amplitudes.as_ref().map(|s| s[k]);
        t.row(&[(2 * k).to_string(), num(*a), opt(signed)]);
    }
    out.add("qpe_amplitudes.csv", t.finish());

    let mut t = Table::new(cfg, &["bitstring", "count"]);
    for (bits, w) in &r.phase_histogram {
        let cell = if r.shots > 0 { format!("{}", *w as u64) } else { num(*w) };
        t.row(&[bits.clone(), cell]);
    }
    out.add("qpe_phases.csv", t.finish());

    let unsigned = base.normalized(&r.abs_amplitudes)?;
    let mode = match &r.signed_amplitudes {
        Some(s) => base.normalized(s)?,
        None => unsigned.clone(),
    };
    let pdf = reconstruct_pdf(&mode, &cfg.basis, &cfg.grid).values;
    let pdf_unsigned = reconstruct_pdf(&unsigned, &cfg.basis, &cfg.grid).values;
    if cfg.method == Method::Qpe {
        out.add("pdf.csv", base.pdf_table(cfg, &pdf.iter().map(|&v| Some(v)).collect::<Vec<_>>()));
        out.add("pdf_unsigned.csv", base.pdf_table(cfg, &pdf_unsigned.iter().map(|&v| Some(v)).collect::<Vec<_>>()));
        out.moments = base.moment_rows();
    }
    out.moments.push(base.quantum_moment("qpe", &mode));
    Ok(pdf)
}

fn ansatz(cfg: &RunConfig) -> AnsatzSpec {
    AnsatzSpec {
        num_qubits: cfg.num_qubits(),
        reps: cfg.vqe.reps,
        entanglement: cfg.vqe.entanglement,
    }
}

fn vqe(cfg: &RunConfig, base: &Baseline, out: &mut Outputs) -> CliResult<Vec<f64>> {
    let r: VqeResult = run_vqe(&base.classical.hamiltonian, &ansatz(cfg), &cfg.vqe.config)?;
    let mut t = Table::new(cfg, &["iteration", "energy_estimate"]);
    for (i, e) in r.energy_trace.iter().enumerate() {
        t.row(&[i.to_string(), num(*e)]);
    }
    out.add("vqe_trace.csv", t.finish());
    let mode = base.normalized(&r.amplitudes)?;
    out.add("vqe_result.csv", amplitude_table(cfg, &mode));
    let pdf = reconstruct_pdf(&mode, &cfg.basis, &cfg.grid).values;
    if cfg.method == Method::Vqe {
        out.add("pdf.csv", base.pdf_table(cfg, &pdf.iter().map(|&v| Some(v)).collect::<Vec<_>>()));
        out.moments = base.moment_rows();
    }
    out.moments.push(base.quantum_moment("vqe", &mode));
    if cfg.vqe.compare_seeds > 0 {
        out.add("mitigation.csv", mitigation_comparison(cfg, base)?);
    }
    Ok(pdf)
}

/// Paired seeds, each run without mitigation, with ZNE and with TREX.
fn mitigation_comparison(cfg: &RunConfig, base: &Baseline) -> CliResult<String> {
    let variants = [
        ("none", Mitigation::None),
        ("zne", Mitigation::Zne(cfg.vqe.zne.clone())),
        ("trex", Mitigation::Trex(cfg.vqe.trex)),
    ];
    let jobs: Vec<(u64, usize)> = (0..cfg.vqe.compare_seeds as u64)
        .flat_map(|s| (0..variants.len()).map(move |v| (cfg.seed + s, v)))
        .collect();
    let spec = ansatz(cfg);
    let rows: Vec<CliResult<[String; 4]>> = jobs
        .par_iter()
        .map(|&(seed, v)| {
            let mut config = cfg.vqe.config.clone();
            config.seed = seed;
            config.noise = Some(cfg.vqe.noise);
            config.mitigation = variants[v].1.clone();
            let r = run_vqe(&base.classical.hamiltonian, &spec, &config)?;
            let row = base.quantum_moment(variants[v].0, &base.normalized(&r.amplitudes)?);
            Ok([seed.to_string(), row.method, num(row.rel_error), num(r.final_energy)])
        })
        .collect();
    let mut t = Table::new(cfg, &["seed", "method", "x2_rel_error", "final_energy"]);
    for r in rows {
        t.row(&r?);
    }
    Ok(t.finish())
}

fn histogram_at(h: &PdfEstimate, x: f64) -> Option<f64> {
    let edges = &h.bin_edges;
    if x < edges[0] || x > edges[edges.len() - 1] {
        return None;
    }
    let i = edges.partition_point(|e| *e <= x).saturating_sub(1).min(h.densities.len() - 1);
    Some(h.densities[i])
}

fn dns(cfg: &RunConfig, base: &Baseline, out: &mut Outputs) -> CliResult<Vec<Option<f64>>> {
    let mut hist = Histogram::new(cfg.dns.bins, cfg.dns.range)?;
    let mut moment = SecondMoment::default();
    simulate_with(&cfg.model, &cfg.dns.config, |x| {
        hist.push(x);
        moment.push(x);
    })?;
    let h = hist.finish()?;
    let mut t = Table::new(cfg, &["bin_left", "bin_right", "density"]);
    for (w, d) in h.bin_edges.windows(2).zip(&h.densities) {
        t.row(&[num(w[0]), num(w[1]), num(*d)]);
    }
    out.add("dns_histogram.csv", t.finish());
    let pdf: Vec<Option<f64>> = cfg.grid.iter().map(|&x| histogram_at(&h, x)).collect();
    if cfg.method == Method::Dns {
        out.add("pdf.csv", base.pdf_table(cfg, &pdf));
        out.moments = base.moment_rows();
    }
    let x2 = moment.value()?;
    out.moments.push(MomentRow {
        method: "dns".into(),
        x2,
        rel_error: relative(x2, base.exact_x2),
    });
    Ok(pdf)
}

fn compare(cfg: &RunConfig, base: &Baseline, out: &mut Outputs) -> CliResult<()> {
    out.moments = base.moment_rows();
    out.add("classical_amplitudes.csv", amplitude_table(cfg, &base.classical.mode));
    let p_dns = dns(cfg, base, out)?;
    let p_qpe = if cfg.qpe.enabled { Some(qpe(cfg, base, out)?) } else { None };
    let p_vqe = if cfg.vqe.enabled { Some(vqe(cfg, base, out)?) } else { None };
    let mut columns = vec!["x", "p_exact", "p_classical", "p_dns"];
    if p_qpe.is_some() {
        columns.push("p_qpe");
    }
    if p_vqe.is_some() {
        columns.push("p_vqe");
    }
    let mut t = Table::new(cfg, &columns);
    for (i, &x) in cfg.grid.iter().enumerate() {
        let mut row = vec![num(x), num(base.exact_grid[i]), num(base.classical_pdf.values[i]), opt(p_dns[i])];
        if let Some(p) = &p_qpe {
            row.push(num(p[i]));
        }
        if let Some(p) = &p_vqe {
            row.push(num(p[i]));
        }
        t.row(&row);
    }
    out.add("compare.csv", t.finish());
    Ok(())
}
