use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const DOUBLE_WELL: &str = "a = -1\nb = 2\ngamma = 1\nell = 0.5\n";

fn run(dir: &Path, body: &str, args: &[&str]) -> Output {
    let config = dir.join("run.ini");
    fs::write(&config, format!("output_dir = {}\n{body}", dir.join("out").display())).unwrap();
    let mut full = vec![args[0], "--config", config.to_str().unwrap()];
    full.extend_from_slice(&args[1..]);
    Command::new(env!("CARGO_BIN_EXE_fpe-dss")).args(&full).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

/// Header comment, column line, then parsed rows.
fn table(text: &str) -> (String, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let columns = lines.next().unwrap().to_owned();
    (columns, lines.map(|l| l.split(',').map(str::to_owned).collect()).collect())
}

#[test]
fn config_errors_exit_2_with_location() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), "N = 4\n[vqe]\nitres = 10\n", &["solve"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.starts_with("error kind=config exit=2"), "{e}");
    assert!(e.contains("line 4") && e.contains("vqe.itres"), "{e}");
    assert_eq!(e.lines().count(), 1);

    let o = run(tmp.path(), "b = -1\n", &["solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2, key `b`"));

    let o = run(tmp.path(), "a = -1\nb = 0\n", &["solve"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(tmp.path(), "[dns]\nstep = 0.5\n", &["solve"]);
    assert!(stderr(&o).contains("dns.step"));

    let o = Command::new(env!("CARGO_BIN_EXE_fpe-dss"))
        .args(["solve", "--config", "/nonexistent/run.ini"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = run(tmp.path(), DOUBLE_WELL, &["sweep", "--vary", "bogus=1,2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_must_be_positive() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("run.ini");
    fs::write(&config, format!("output_dir = {}\n", tmp.path().join("out").display())).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fpe-dss"))
        .args(["solve", "--config", config.to_str().unwrap()])
        .env("FPE_DSS_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FPE_DSS_THREADS"));
}

#[test]
fn unresolved_zero_mode_exits_3() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{DOUBLE_WELL}N = 4\nmethod = qpe\n[qpe]\ntime_scale = 17.5\nprecision_qubits = 3\nshots = 0\n");
    let o = run(tmp.path(), &body, &["solve"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error kind=numerical exit=3"));
}

#[test]
fn echo_records_defaults() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &format!("{DOUBLE_WELL}N = 8\nmethod = classical\n"), &["solve"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = read(tmp.path(), "effective_config.ini");
    assert!(echo.starts_with("# fpe-dss "));
    assert!(echo.contains("\nseed = 0\n"));
    assert!(echo.contains("[vqe]\nenabled = false\n"));
    let header = echo.lines().next().unwrap().to_owned();
    for name in ["pdf.csv", "moments.csv", "classical_amplitudes.csv"] {
        assert_eq!(read(tmp.path(), name).lines().next().unwrap(), header, "{name}");
    }
}

#[test]
fn method_outputs_have_documented_columns() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        "{DOUBLE_WELL}N = 8\nmethod = qpe\n[output]\ndump_matrix = true\n[vqe]\nenabled = true\niters = 50\n[dns]\nsteps = 100000\n"
    );
    assert!(run(tmp.path(), &body, &["compare"]).status.success());
    let expect = [
        ("compare.csv", "x,p_exact,p_classical,p_dns,p_vqe"),
        ("moments.csv", "method,x2,x2_rel_error"),
        ("dns_histogram.csv", "bin_left,bin_right,density"),
        ("vqe_trace.csv", "iteration,energy_estimate"),
        ("vqe_result.csv", "n,b_n"),
    ];
    for (name, columns) in expect {
        assert_eq!(table(&read(tmp.path(), name)).0, columns, "{name}");
    }
    let dump = read(tmp.path(), "L.csv");
    assert_eq!(dump.lines().nth(1).unwrap(), "# L matrix N=8 a=-1 b=2 gamma=1 ell=0.5");
    assert_eq!(dump.lines().filter(|l| !l.starts_with('#')).count(), 8);

    let tmp = TempDir::new().unwrap();
    assert!(run(tmp.path(), &body, &["solve"]).status.success());
    let (columns, rows) = table(&read(tmp.path(), "qpe_amplitudes.csv"));
    assert_eq!(columns, "n,abs_amplitude,signed_amplitude_or_blank");
    assert_eq!(rows.len(), 8);
    assert_eq!(table(&read(tmp.path(), "qpe_phases.csv")).0, "bitstring,count");
    let (columns, rows) = table(&read(tmp.path(), "pdf.csv"));
    assert_eq!(columns, "x,p_method,p_exact,p_classical,negative_region");
    assert_eq!(rows.len(), 401);
    assert!(rows.iter().all(|r| r[4] == "0" || r[4] == "1"));
    // Sign-dropped reconstruction sits alongside the corrected one.
    assert_ne!(read(tmp.path(), "pdf.csv"), read(tmp.path(), "pdf_unsigned.csv"));
}

#[test]
fn truncation_sweep_converges() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &format!("{DOUBLE_WELL}method = classical\n[output]\ngrid_min = -1.5\ngrid_max = 1.5\ngrid_points = 301\n"), &["sweep", "--vary", "N=6,14,18,24"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sup: Vec<f64> = [6, 14, 18, 24]
        .iter()
        .map(|n| {
            let (_, rows) = table(&read(tmp.path(), &format!("N={n}/pdf.csv")));
            rows.iter()
                .map(|r| (r[1].parse::<f64>().unwrap() - r[2].parse::<f64>().unwrap()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(sup.windows(2).all(|w| w[1] < w[0]), "{sup:?}");
}

#[test]
fn iteration_sweep_reports_each_budget() {
    let tmp = TempDir::new().unwrap();
    let body = "a = 1\nb = 2\ngamma = 1\nell = 0.5\nN = 2\nmethod = vqe\n";
    let o = run(tmp.path(), body, &["sweep", "--vary", "iters=150,300,500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (columns, rows) = table(&read(tmp.path(), "sweep.csv"));
    assert_eq!(columns, "iters,method,x2,x2_rel_error");
    let vqe: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "vqe").collect();
    assert_eq!(vqe.len(), 3);
    for r in vqe {
        assert!(r[3].parse::<f64>().unwrap() < 0.05, "{r:?}");
    }
}

#[test]
fn mitigation_table_pairs_seeds() {
    let tmp = TempDir::new().unwrap();
    let body = "a = 1\nb = 2\ngamma = 1\nell = 0.5\nN = 4\nmethod = vqe\nseed = 7\n[vqe]\niters = 40\nnoisy = true\ncompare_seeds = 2\n";
    assert!(run(tmp.path(), body, &["solve"]).status.success());
    let (columns, rows) = table(&read(tmp.path(), "mitigation.csv"));
    assert_eq!(columns, "seed,method,x2_rel_error,final_energy");
    let keys: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    let want: Vec<(String, String)> = ["7", "8"]
        .iter()
        .flat_map(|s| ["none", "zne", "trex"].iter().map(move |m| (s.to_string(), m.to_string())))
        .collect();
    assert_eq!(keys, want);
}
