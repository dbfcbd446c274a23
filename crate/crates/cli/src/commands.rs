//! The four subcommands. Computation may run on a rayon pool; every file is
//! written from the calling thread after results are collected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vervaat_core::bk_vervaat::{r_star, vervaat, vervaat_error};
use vervaat_core::experiments::{
    choose_p, derive_seed, iid_baseline, run_plan, ExperimentReport, Metric, PBound, RateSpec, Stream,
};
use vervaat_core::hermite::HermiteAnalysis;
use vervaat_core::limit_processes::limit_constants;
use vervaat_core::lrd_gauss::PathGenerator;
use vervaat_core::seq_processes::{d_norm, level_index, process_field, ProcessKind, SampleBatch};
use vervaat_core::{Side, TwoParamField};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Scientific notation with `digits` significant digits.
pub fn num(x: f64, digits: usize) -> String {
    format!("{:.*e}", digits - 1, x)
}

fn opt_num(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "nan".to_string(), |v| num(v, digits))
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(runtime)
}

fn manifest(cfg: &RunConfig, command: &str, extra: &[(String, String)]) -> String {
    let mut s = String::new();
    writeln!(s, "# vervaat run manifest; config.txt alone reproduces every CSV").unwrap();
    writeln!(s, "command = {command}").unwrap();
    writeln!(s, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
    s.push_str(&cfg.to_text());
    for (k, v) in extra {
        writeln!(s, "{k} = {v}").unwrap();
    }
    s
}

fn write_run(cfg: &RunConfig, command: &str, extra: &[(String, String)]) -> Result<(), CliError> {
    write_file(&cfg.out, "config.txt", &cfg.to_text())?;
    write_file(&cfg.out, "manifest.txt", &manifest(cfg, command, extra))
}

/// Reporting grid in `t`: every `k/n` for short paths, else `grid` points.
fn t_grid(n: usize, grid: usize) -> Vec<f64> {
    if n <= 64 {
        (0..=n).map(|k| k as f64 / n as f64).collect()
    } else {
        (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect()
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_simulate()?;
    let cov = cfg.covariance();
    let analysis = HermiteAnalysis::new(&cfg.g).map_err(|e| ConfigError::new("g", e.to_string()))?;
    let tau = analysis.tau();
    if cfg.tau.is_some_and(|t| t != tau) {
        return Err(ConfigError::new("tau", format!("G has Hermite rank {tau}")).into());
    }
    let n = cfg.n;
    let d_n = d_norm(n, tau, cov.d, cov.normalizing_l(n as f64)).map_err(|e| ConfigError::new("d", e.to_string()))?;
    let generator = PathGenerator::new(&cov, n, cfg.policy()).map_err(runtime)?;
    let path_seed = derive_seed(cfg.seed, Stream::Coupling, 0);
    let eta = generator.sample_values(path_seed);
    let u: Vec<f64> = eta.iter().map(|&e| cfg.g.pit(e)).collect();
    let batch = SampleBatch::new(u, None).map_err(runtime)?;

    let alpha = process_field(ProcessKind::Alpha, d_n, None).map_err(runtime)?;
    let quant = process_field(ProcessKind::U, d_n, None).map_err(runtime)?;
    let (rs, v, q) = (r_star::<f64>(), vervaat(d_n), vervaat_error(d_n));
    let gy = cfg.grid.min(n + 1);
    let ys: Vec<f64> = (0..gy).map(|i| i as f64 / (gy - 1) as f64).collect();
    let p = cfg.precision;

    let mut csv = String::from("y,t,alpha,u,rstar,vervaat,qerr\n");
    for t in t_grid(n, cfg.grid) {
        let level = batch.level(level_index(n, t));
        for &y in &ys {
            let row = [
                y,
                t,
                alpha.eval(&level, y, Side::Value),
                quant.eval(&level, y, Side::Value),
                rs.eval(&level, y, Side::Value),
                v.eval(&level, y, Side::Value),
                q.eval(&level, y, Side::Value),
            ];
            let cells: Vec<String> = row.iter().map(|&x| num(x, p)).collect();
            csv.push_str(&cells.join(","));
            csv.push('\n');
        }
    }
    write_file(&cfg.out, "simulate.csv", &csv)?;
    let extra = vec![
        ("tau_computed".into(), tau.to_string()),
        ("d_n".into(), num(d_n, p)),
        ("path_seed".into(), path_seed.to_string()),
    ];
    write_run(cfg, "simulate", &extra)
}

fn rates_csv(report: &ExperimentReport, p: usize) -> String {
    let mut s = String::from("metric,n,median,q1,q3\n");
    for r in &report.rates {
        let m = &r.summary;
        writeln!(s, "{},{},{},{},{}", r.metric, r.n, num(m.median, p), num(m.q1, p), num(m.q3, p)).unwrap();
    }
    s
}

fn slopes_csv(report: &ExperimentReport, p: usize) -> String {
    let mut s = String::from("metric,slope,stderr,expected,pass\n");
    for r in &report.slopes {
        let (slope, se) = (r.fit.map(|f| f.slope), r.fit.map(|f| f.slope_se));
        writeln!(s, "{},{},{},{},{}", r.metric, opt_num(slope, p), opt_num(se, p), opt_num(r.expected, p), r.pass).unwrap();
    }
    s
}

fn dist_csv(report: &ExperimentReport, p: usize) -> String {
    let mut s = String::from("metric,ks,threshold,pass\n");
    for r in &report.dists {
        writeln!(s, "{},{},{},{}", r.metric, opt_num(r.ks, p), num(r.threshold, p), r.pass).unwrap();
    }
    s
}

fn checks_csv(report: &ExperimentReport, p: usize) -> String {
    let mut s = String::from("name,value,reference,pass\n");
    for c in &report.checks {
        writeln!(s, "{},{},{},{}", c.name, num(c.value, p), num(c.reference, p), c.pass).unwrap();
    }
    s
}

fn provenance_lines(report: &ExperimentReport, p: usize) -> Vec<(String, String)> {
    let pv = &report.provenance;
    let opt = |x: Option<usize>| x.map_or("none".to_string(), |v| v.to_string());
    let mut out = vec![
        ("tau_computed".into(), pv.tau.to_string()),
        ("nu".into(), num(pv.nu, p)),
        ("p_prop21".into(), opt(pv.p21)),
        ("p_prop22".into(), opt(pv.p22)),
        ("sampling".into(), pv.sampling.clone()),
        ("limit_method".into(), if pv.limit_method.is_empty() { "none".into() } else { pv.limit_method.clone() }),
        ("limit_m_used".into(), opt(pv.limit_m)),
    ];
    if let Some(c) = pv.constants {
        out.push(("c_weak".into(), num(c.c_weak, p)));
        out.push(("c_q".into(), num(c.c_q, p)));
    }
    for (stream, first, last) in &pv.seeds {
        out.push((format!("seeds.{stream}"), format!("{first}..{last}")));
    }
    for d in &report.dists {
        out.push((format!("probe.{}", d.metric), format!("y={} t={} degenerate={}", d.y, d.t, d.degenerate)));
    }
    for note in &pv.notes {
        out.push(("note".into(), note.clone()));
    }
    out
}

fn write_report(cfg: &RunConfig, command: &str, report: &ExperimentReport) -> Result<(), CliError> {
    let p = cfg.precision;
    write_file(&cfg.out, "rates.csv", &rates_csv(report, p))?;
    write_file(&cfg.out, "slopes.csv", &slopes_csv(report, p))?;
    write_file(&cfg.out, "dist.csv", &dist_csv(report, p))?;
    write_file(&cfg.out, "checks.csv", &checks_csv(report, p))?;
    write_run(cfg, command, &provenance_lines(report, p))
}

pub fn experiment(cfg: &RunConfig) -> Result<(), CliError> {
    let plan = cfg.plan()?;
    let report = pool(cfg.workers)?.install(|| run_plan(&plan)).map_err(runtime)?;
    write_report(cfg, "experiment", &report)?;
    eprintln!(
        "experiment: {} rate rows, {} slopes, {} distribution rows -> {}",
        report.rates.len(),
        report.slopes.len(),
        report.dists.len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn baseline(cfg: &RunConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    cfg.metrics = vec![Metric::IidBaseline];
    let plan = cfg.plan()?;
    let report = pool(cfg.workers)?.install(|| iid_baseline(&plan)).map_err(runtime)?;
    write_report(&cfg, "baseline", &report)?;
    eprintln!("baseline: {} rate rows -> {}", report.rates.len(), cfg.out.display());
    Ok(())
}

/// Constants table as `name,value` lines.
pub fn constants(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let rank = HermiteAnalysis::new(&cfg.g).map_err(|e| ConfigError::new("g", e.to_string()))?.tau();
    let tau = cfg.tau.unwrap_or(rank);
    if tau == 0 {
        return Err(ConfigError::new("tau", "must be at least 1").into());
    }
    let d = cfg.d;
    if tau as f64 * d >= 1.0 {
        return Err(ConfigError::new("d", format!("need tau * d < 1, got {}", tau as f64 * d)).into());
    }
    let analysis = HermiteAnalysis::with_rank(&cfg.g, tau);
    let k = analysis.kappas();
    let c = limit_constants(tau, d, &k).map_err(|e| ConfigError::new("d", e.to_string()))?;
    let rates = RateSpec::new(tau, d, None);
    let p = cfg.precision;
    let choice = |which| choose_p(tau, d, which).map_or_else(|e| format!("none ({e})"), |v| v.to_string());

    let mut s = String::from("name,value\n");
    let mut row = |name: &str, value: String| writeln!(s, "{name},{value}").unwrap();
    row("tau", tau.to_string());
    row("d", num(d, p));
    row("g", cfg.g.to_string());
    row("hermite_rank_g", rank.to_string());
    row("nu", num(rates.nu, p));
    row("p_prop21", choice(PBound::Prop21));
    row("p_prop22", choice(PBound::Prop22));
    row("kappa1", num(k.k1, p));
    row("kappa2", num(k.k2, p));
    row("kappa3", num(k.k3, p));
    row("c_weak", num(c.c_weak, p));
    row("c_q", num(c.c_q, p));
    row("lil_partial", num(c.lil_partial, p));
    row("lil_bk", num(c.lil_bk, p));
    row("lil_q", num(c.lil_q, p));
    let cov = cfg.covariance();
    for &n in &cfg.n_grid {
        let d_n = d_norm(n, tau, d, cov.normalizing_l(n as f64)).map_err(|e| ConfigError::new("n_grid", e.to_string()))?;
        row(&format!("d_n[{n}]"), num(d_n, p));
    }
    Ok(s)
}
