use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vervaat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vervaat")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn simulate_shape_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = vervaat(&["simulate", "--set", "n=16", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let csv = read(&a, "simulate.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("y,t,alpha,u,rstar,vervaat,qerr"));
    assert_eq!(lines.count(), 17 * 17);
    assert!(!csv.contains('\r'));
    assert_eq!(csv, read(&b, "simulate.csv"));
    assert_eq!(read(&a, "manifest.txt"), read(&b, "manifest.txt"));

    // the last row is y = 1, t = 1 where every process vanishes except V
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(&last[..2], &[1.0, 1.0]);
    assert_eq!(last[2], 0.0);
}

#[test]
fn larger_paths_use_the_configured_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = vervaat(&["simulate", "--set", "n=100", "--set", "grid=9", "--set", "precision=6", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(tmp.path(), "simulate.csv");
    assert_eq!(csv.lines().count(), 1 + 9 * 9);
    assert_eq!(csv.lines().nth(2).unwrap().split(',').next(), Some("1.25000e-1"));
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# short run\nn = 8\nseed = 3\n").unwrap();
    let out = tmp.path().join("o");
    let o = vervaat(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let config = read(&out, "config.txt");
    assert!(config.contains("n = 8\n") && config.contains("seed = 4\n"));

    // the written config reproduces the run
    let again = tmp.path().join("again");
    let o = vervaat(&["simulate", "--config", out.join("config.txt").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&out, "simulate.csv"), read(&again, "simulate.csv"));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    for (args, key) in [
        (vec!["simulate", "--set", "n=0"], "`n`"),
        (vec!["simulate", "--set", "colour=blue"], "`colour`"),
        (vec!["experiment", "--set", "replications=0"], "`replications`"),
        (vec!["experiment", "--set", "g=square", "--set", "d=0.6"], "`d`"),
        (vec!["constants", "2", "0.6"], "`d`"),
    ] {
        let o = vervaat(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains(key), "{args:?}: {}", stderr(&o));
    }
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("dup.cfg");
    fs::write(&cfg, "n = 8\nn = 9\n").unwrap();
    assert_eq!(vervaat(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    // L ≡ 1 in the pure-power family is not a covariance; without repair the
    // embedding fails after the config has been accepted
    let tmp = tempfile::tempdir().unwrap();
    let o = vervaat(&[
        "simulate",
        "--set",
        "family=pure-power",
        "--set",
        "repair=false",
        "--set",
        "n=4096",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn constants_table() {
    let o = vervaat(&["constants", "1", "0.4", "quantile-compose(exponential(1))"]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    let value = |name: &str| -> f64 {
        let line = table.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!((value("c_weak") - 2.08333).abs() < 1e-5);
    assert!((value("kappa1") - 0.398942).abs() < 1e-6);
    assert!((value("d_n[1024]") - 1024f64.powf(0.8) * (0.8f64 * 0.6).sqrt()).abs() < 1e-6 * 1024f64.powf(0.8));

    let o = vervaat(&["constants", "1", "0.5", "-"]);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("p_prop21,3\n") && table.contains("p_prop22,4\n"));
}

fn small_experiment(dir: &Path, workers: &str, metrics: &str, reps: &str) -> Output {
    vervaat(&[
        "experiment",
        "--set",
        "n_grid=64,128,256",
        "--set",
        &format!("replications={reps}"),
        "--set",
        &format!("metrics={metrics}"),
        "--set",
        "limit_m=4096",
        "--set",
        "limit_m_t=32",
        "--workers",
        workers,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn experiment_tables_independent_of_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let (one, eight) = (tmp.path().join("w1"), tmp.path().join("w8"));
    let metrics = "cor21,prop22,thm22,prop42,gc_rate,iid_baseline";
    for (dir, w) in [(&one, "1"), (&eight, "8")] {
        let o = small_experiment(dir, w, metrics, "12");
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["rates.csv", "slopes.csv", "dist.csv", "checks.csv", "manifest.txt"] {
        assert_eq!(read(&one, f), read(&eight, f), "{f}");
    }
    let slopes = read(&one, "slopes.csv");
    assert_eq!(slopes.lines().next(), Some("metric,slope,stderr,expected,pass"));
    let names: Vec<&str> = slopes.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, metrics.split(',').collect::<Vec<_>>());
    let rates = read(&one, "rates.csv");
    assert_eq!(rates.lines().next(), Some("metric,n,median,q1,q3"));
    assert_eq!(rates.lines().count(), 1 + 6 * 3);
    let manifest = read(&one, "manifest.txt");
    assert!(manifest.contains("seeds.coupling = ") && manifest.contains("p_prop21 = "));
}

#[test]
fn distribution_rows_carry_the_threshold_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let o = small_experiment(tmp.path(), "0", "thm23_dist", "60");
    assert!(o.status.success(), "{}", stderr(&o));
    let dist = read(tmp.path(), "dist.csv");
    assert_eq!(dist.lines().next(), Some("metric,ks,threshold,pass"));
    let row: Vec<&str> = dist.lines().find(|l| l.starts_with("thm23_dist,")).unwrap().split(',').collect();
    let (ks, threshold): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
    assert_eq!(threshold, 0.15);
    assert_eq!(row[3], (ks <= threshold).to_string());
    assert!(read(tmp.path(), "manifest.txt").contains("limit_method = "));
}

#[test]
fn baseline_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vervaat(&["baseline", "--set", "n_grid=64,256", "--set", "replications=20", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let checks = read(tmp.path(), "checks.csv");
    assert!(checks.contains("iid_vervaat_mean,"));
    assert!(read(tmp.path(), "manifest.txt").contains("command = baseline"));
}
