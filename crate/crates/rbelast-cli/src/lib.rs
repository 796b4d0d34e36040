//! Command-line front end: offline training, online certified queries,
//! convergence tables, SIF sweeps and problem validation.
//!
//! Exit codes: 0 success, 1 validation/pipeline failure, 2 usage errors.

use clap::{Args, Parser, Subcommand};
use rbelast::archive;
use rbelast::greedy;
use rbelast::problems;
use rbelast::sif;
use rbelast::truth;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "rbelast", version, about = "certified reduced-basis elasticity solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the offline stage (SCM + greedy) and write a model archive.
    Offline(OfflineArgs),
    /// Query a trained archive at one parameter value.
    Online(OnlineArgs),
    /// Tabulate max relative bounds and mean effectivities over a test set.
    Convergence(ConvergenceArgs),
    /// Sweep the crack-length parameter and emit certified SIF values.
    Sif(SifArgs),
    /// Check a problem configuration: mesh, maps, SPD sampling.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct OfflineArgs {
    /// Problem configuration file (TOML).
    config: PathBuf,
    /// Output archive path.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct OnlineArgs {
    /// Model archive produced by `offline`.
    archive: PathBuf,
    /// Parameter value, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    mu: Vec<f64>,
    /// Reduced basis dimension.
    #[arg(long = "N")]
    n: usize,
}

#[derive(Args)]
struct ConvergenceArgs {
    archive: PathBuf,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    #[arg(long, default_value_t = 777)]
    seed: u64,
    /// Basis sizes, comma separated.
    #[arg(long = "N", value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SifArgs {
    archive: PathBuf,
    /// Sweep of the crack length: start:end:steps.
    #[arg(long)]
    mu1: String,
    /// Fixed remaining parameter (plate height).
    #[arg(long)]
    mu2: f64,
    #[arg(long = "N")]
    n: usize,
    /// Forward-difference step.
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    config: PathBuf,
}

/// Entry point used by `main` and the CLI tests.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.command {
        Command::Offline(a) => cmd_offline(a),
        Command::Online(a) => cmd_online(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Sif(a) => cmd_sif(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn fail(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    1
}

fn sci(x: f64) -> String {
    format!("{x:.5E}")
}

fn cmd_offline(a: OfflineArgs) -> i32 {
    let text = match fs::read_to_string(&a.config) {
        Ok(t) => t,
        Err(e) => return fail(format_args!("cannot read {}: {e}", a.config.display())),
    };
    let cfg = match rbelast::parse_problem_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let start = Instant::now();
    let (model, _ops, _spec) = match rbelast::offline_train(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let elapsed = start.elapsed();
    let mut buf = Vec::new();
    if let Err(e) = archive::save(&model, &cfg.text, &mut buf) {
        return fail(e);
    }
    if let Err(e) = fs::write(&a.out, &buf) {
        return fail(format_args!("cannot write {}: {e}", a.out.display()));
    }
    let final_bound = model.history.last().map(|h| h.max_bound).unwrap_or(0.0);
    println!(
        "offline complete: N = {}, last max estimator = {}, wall time = {:.2}s, archive = {}",
        model.n_max(),
        sci(final_bound),
        elapsed.as_secs_f64(),
        a.out.display()
    );
    0
}

fn load_archive(path: &PathBuf) -> Result<archive::ModelArchive, String> {
    let bytes = fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    archive::load(&mut bytes.as_slice()).map_err(|e| e.to_string())
}

fn cmd_online(a: OnlineArgs) -> i32 {
    let arch = match load_archive(&a.archive) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    if a.n == 0 || a.n > arch.model.n_max() {
        return fail(format_args!(
            "N = {} out of range (archive holds N_max = {})",
            a.n,
            arch.model.n_max()
        ));
    }
    if let Err(e) = arch.model.decomp.check_domain(&a.mu) {
        return fail(e);
    }
    match arch.model.query(&a.mu, a.n) {
        Ok(out) => {
            println!(
                "s_N = {}  delta_N = {}  alpha_LB = {}  rigorous = {}  t_RB = {:.3}ms",
                sci(out.s_n),
                sci(out.delta_n),
                sci(out.alpha_lb),
                out.rigorous,
                out.online_time.as_secs_f64() * 1e3
            );
            0
        }
        Err(e) => fail(e),
    }
}

/// Rebuild the truth layer from the configuration embedded in an archive.
fn rebuild_truth(
    arch: &archive::ModelArchive,
) -> Result<(truth::TruthOperators, problems::ProblemSpec), String> {
    let cfg = rbelast::parse_problem_config(&arch.config_text).map_err(|e| e.to_string())?;
    let spec = problems::build_problem(cfg.name, &cfg.options).map_err(|e| e.to_string())?;
    let mut ops = truth::assemble_parameter_independent(&spec.mesh, &spec.decomp, &spec.bcs)
        .map_err(|e| e.to_string())?;
    let mu_bar = spec.decomp.box_.centroid();
    truth::build_inner_product(&mut ops, &spec.decomp, &mu_bar).map_err(|e| e.to_string())?;
    Ok((ops, spec))
}

fn write_csv(path: &Option<PathBuf>, contents: &str) -> i32 {
    match path {
        Some(p) => {
            if let Err(e) = fs::write(p, contents) {
                return fail(format_args!("cannot write {}: {e}", p.display()));
            }
            0
        }
        None => {
            let mut stdout = std::io::stdout();
            let _ = stdout.write_all(contents.as_bytes());
            0
        }
    }
}

fn cmd_convergence(a: ConvergenceArgs) -> i32 {
    let arch = match load_archive(&a.archive) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let (ops, _spec) = match rebuild_truth(&arch) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let test = greedy::training_sample(&arch.model.decomp, a.n_test, a.seed);
    let rows = match greedy::convergence_study(&arch.model, &ops, &test, &a.n_list) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let mut csv = String::from("N,E_N,eta_bar\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.n, sci(r.e_n), sci(r.eta_bar)));
    }
    write_csv(&a.out, &csv)
}

fn cmd_sif(a: SifArgs) -> i32 {
    let arch = match load_archive(&a.archive) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let cfg = match rbelast::parse_problem_config(&arch.config_text) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if cfg.name != problems::ProblemName::CenterCrack || !arch.model.decomp.compliant {
        return fail("SIF sweeps require a compliant crack-type archive");
    }
    let parts: Vec<&str> = a.mu1.split(':').collect();
    let (start, end, steps) = match parts.as_slice() {
        [s, e, n] => match (s.parse::<f64>(), e.parse::<f64>(), n.parse::<usize>()) {
            (Ok(s), Ok(e), Ok(n)) if n >= 1 => (s, e, n),
            _ => return fail("bad --mu1 sweep (want start:end:steps)"),
        },
        _ => return fail("bad --mu1 sweep (want start:end:steps)"),
    };
    let values: Vec<f64> = (0..steps)
        .map(|i| start + (end - start) * i as f64 / (steps.max(2) - 1) as f64)
        .collect();
    let nu = cfg.options.nu;
    let base = vec![values[0], a.mu2];
    let rows = match sif::sif_sweep(&arch.model, &base, &values, a.n, a.delta, nu) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let mut csv = String::from("mu1,mu2,G_N,dG,SIF_N,dSIF\n");
    let mut flagged = 0usize;
    for r in &rows {
        let (s, d) = match (r.sif_n, r.dsif) {
            (Some(s), Some(d)) => (sci(s), sci(d)),
            _ => {
                flagged += 1;
                ("nan".into(), "nan".into())
            }
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sci(r.mu[0]),
            sci(r.mu[1]),
            sci(r.g_n),
            sci(r.dg),
            s,
            d
        ));
    }
    if flagged > 0 {
        eprintln!(
            "warning: {flagged} rows have an ERR band crossing zero; SIF fields set to nan"
        );
    }
    write_csv(&a.out, &csv)
}

fn cmd_validate(a: ValidateArgs) -> i32 {
    let text = match fs::read_to_string(&a.config) {
        Ok(t) => t,
        Err(e) => return fail(format_args!("cannot read {}: {e}", a.config.display())),
    };
    let cfg = match rbelast::parse_problem_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let spec = match problems::build_problem(cfg.name, &cfg.options) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let report = problems::validate_problem(&spec, 20);
    println!(
        "problem '{}': {} nodes, {} elements, {} regions, Qa = {}, Qf = {}, Ql = {}",
        spec.name.as_str(),
        spec.mesh.n_nodes(),
        spec.mesh.triangles.len(),
        spec.mesh.n_regions,
        spec.decomp.qa(),
        spec.decomp.qf(),
        spec.decomp.ql()
    );
    if report.is_empty() {
        println!("validation clean");
        0
    } else {
        for line in &report {
            println!("violation: {line}");
        }
        1
    }
}
