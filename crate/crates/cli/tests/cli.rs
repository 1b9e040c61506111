use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn esn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_esn"));
    c.env_remove("ESN_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    esn().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn noise(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (*state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn monthly_row(id: &str, n: usize, seed: u64) -> String {
    let mut s = seed;
    let values: Vec<String> = (0..n)
        .map(|t| {
            let tf = t as f64;
            let v = 200.0 + 0.8 * tf + 15.0 * (2.0 * std::f64::consts::PI * tf / 12.0).sin() + 4.0 * noise(&mut s);
            format!("{v:.3}")
        })
        .collect();
    format!("{id},{}\n", values.join(","))
}

fn fixture(dir: &Path, count: usize) -> PathBuf {
    let mut text = String::new();
    for i in 0..count {
        text.push_str(&monthly_row(&format!("M{i}"), 60 + i, i as u64 + 1));
    }
    let p = dir.join("pool.csv");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_is_available_for_every_subcommand() {
    assert_eq!(code(&run(&["--help"])), 0);
    for sub in ["sample", "characterize", "fit", "forecast", "benchmark", "sweep", "report"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["sample", "--bogus"])), 1);
}

#[test]
fn sample_is_disjoint_deterministic_and_guarded() {
    let dir = tempfile::tempdir().unwrap();
    let pool = fixture(dir.path(), 30);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = run(&["sample", "--input", s(&pool), "--freq", "monthly", "--n", "10", "--seed", "42", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ids = |p: PathBuf| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect()
    };
    let par = ids(out_a.join("parameter.csv"));
    let fc = ids(out_a.join("forecast.csv"));
    assert_eq!((par.len(), fc.len()), (10, 10));
    assert!(par.iter().all(|id| !fc.contains(id)));
    for f in ["parameter.csv", "forecast.csv", "manifest.json"] {
        assert_eq!(fs::read(out_a.join(f)).unwrap(), fs::read(out_b.join(f)).unwrap(), "{f}");
    }
    let o = run(&["sample", "--input", s(&pool), "--freq", "monthly", "--n", "20", "--seed", "42", "--out", s(&out_b)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn forecast_rows_determinism_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let pool = fixture(dir.path(), 3);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["forecast", "--input", s(&pool), "--freq", "monthly", "--seed", "5", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next().unwrap(), "series_id,step,forecast");
    assert_eq!(text.lines().count(), 1 + 3 * 18);
    assert_eq!(text, fs::read_to_string(&b).unwrap());

    let o = run(&["forecast", "--input", s(&pool), "--alpha", "1.5"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
}

#[test]
fn forecast_keep_going() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("mixed.csv");
    fs::write(&p, format!("{}SHORT,1,2,3\n", monthly_row("OK", 60, 3))).unwrap();
    assert_ne!(code(&run(&["forecast", "--input", s(&p)])), 0);
    let out = dir.path().join("f.csv");
    let o = run(&["forecast", "--input", s(&p), "--keep-going", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 19);
}

#[test]
fn fit_then_forecast_from_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let pool = fixture(dir.path(), 2);
    let model = dir.path().join("m1.json");
    let o = run(&["fit", "--input", s(&pool), "--series", "M1", "--tau", "0.2", "--out", s(&model)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let from_model = run(&["forecast", "--model", s(&model)]);
    let direct = run(&["forecast", "--input", s(&pool), "--series", "M1", "--tau", "0.2"]);
    assert_eq!(code(&from_model), 0);
    assert_eq!(from_model.stdout, direct.stdout);
    let h6 = run(&["forecast", "--model", s(&model), "--horizon", "6"]);
    assert_eq!(String::from_utf8_lossy(&h6.stdout).lines().count(), 7);
}

#[test]
fn benchmark_summary_has_one_row_per_model() {
    let dir = tempfile::tempdir().unwrap();
    let pool = fixture(dir.path(), 4);
    let out = dir.path().join("bench");
    let o = run(&["benchmark", "--input", s(&pool), "--out-dir", s(&out), "--threads", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "rank,model,mase_mean,mase_median,smape_mean,smape_median,time_mean_s,time_total_s,n,n_degenerate"
    );
    let models: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(models.len(), 6);
    assert!(models.contains(&"mean"));
    let accuracy = fs::read_to_string(out.join("accuracy.csv")).unwrap();
    assert_eq!(accuracy.lines().count(), 1 + 4 * 6);

    let again = dir.path().join("report");
    let o = run(&["report", "--records", s(&out.join("accuracy.csv")), "--out-dir", s(&again)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(again.join("summary.csv")).unwrap().lines().count(), 7);

    let o = run(&["benchmark", "--input", s(&pool), "--models", "naive,arima", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn characterize_rows() {
    let dir = tempfile::tempdir().unwrap();
    let trend: Vec<String> = (0..48).map(|t| (3 * t + 1).to_string()).collect();
    let p = dir.path().join("c.csv");
    fs::write(&p, format!("TREND,{}\nSHORT,1,2,3,4\n{}", trend.join(","), monthly_row("S", 72, 9))).unwrap();
    let out = dir.path().join("chars.csv");
    let hist = dir.path().join("hist.csv");
    let o = run(&["characterize", "--input", s(&p), "--out", s(&out), "--histogram", s(&hist)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 5));
    assert_eq!(rows[1][0], "TREND");
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[2][4], "too_short");
    assert_eq!(fs::read_to_string(&hist).unwrap().lines().count(), 21);
}

#[test]
fn sweep_resume_matches_clean_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 0..2 {
        let mut st = i + 11;
        let v: Vec<String> = (0..40)
            .map(|t| format!("{:.4}", 50.0 + t as f64 * 0.4 + [3.0, -1.0, 1.0, -3.0][t % 4] + noise(&mut st)))
            .collect();
        text.push_str(&format!("Q{i},{}\n", v.join(",")));
    }
    let data = dir.path().join("q.csv");
    fs::write(&data, text).unwrap();
    let grid = dir.path().join("grid.toml");
    fs::write(&grid, "alphas = [0.5, 1.0]\nrhos = [0.5, 0.9]\ntaus = [0.2]\nics = [\"AIC\", \"BIC\"]\n").unwrap();

    let sweep = |out: &Path, extra: &[&str]| {
        let mut args = vec!["sweep", "--input", s(&data), "--freq", "quarterly", "--grid", s(&grid), "--seed", "9", "--threads", "1", "--out-dir", s(out)];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    let clean = dir.path().join("clean");
    sweep(&clean, &[]);
    let partial = dir.path().join("partial");
    sweep(&partial, &["--stop-after", "5"]);
    assert!(!partial.join("ranking.csv").exists());
    sweep(&partial, &["--resume"]);

    let sorted_rows = |p: &Path| {
        let text = fs::read_to_string(p.join("records.csv")).unwrap();
        let mut rows: Vec<String> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                // drop timing
                format!("{},{},{},{}", f[0], f[1], f[6], f[10])
            })
            .collect();
        rows.sort();
        rows
    };
    assert_eq!(sorted_rows(&clean).len(), 16);
    assert_eq!(sorted_rows(&clean), sorted_rows(&partial));
    for f in ["ranking.csv", "marginals.csv", "summary.txt"] {
        assert!(partial.join(f).exists(), "{f}");
    }
    let ranking = fs::read_to_string(clean.join("ranking.csv")).unwrap();
    assert!(ranking.starts_with("rank,model,config_index,ic,alpha,rho,tau,mase_mean"));

    let o = run(&["report", "--records", s(&clean.join("records.csv")), "--top-k", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(clean.join("ranking.csv")).unwrap().lines().count(), 4);

    // existing results without --resume are refused
    let o = run(&["sweep", "--input", s(&data), "--freq", "quarterly", "--grid", s(&grid), "--out-dir", s(&clean)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn config_file_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let pool = fixture(dir.path(), 1);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[run]\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&bad), "forecast", "--input", s(&pool)])), 1);
    let o = esn().env("ESN_CONFIG", &bad).args(["forecast", "--input", s(&pool)]).output().unwrap();
    assert_eq!(code(&o), 1);

    let good = dir.path().join("good.toml");
    fs::write(&good, "[esn]\nalpha = 0.3\nseed = 4\n").unwrap();
    let via_file = run(&["--config", s(&good), "forecast", "--input", s(&pool)]);
    let via_flags = run(&["forecast", "--input", s(&pool), "--alpha", "0.3", "--seed", "4"]);
    assert_eq!(code(&via_file), 0);
    assert_eq!(via_file.stdout, via_flags.stdout);
    // flags win over the file
    let overridden = run(&["--config", s(&good), "forecast", "--input", s(&pool), "--alpha", "1.0", "--seed", "4"]);
    let plain = run(&["forecast", "--input", s(&pool), "--seed", "4"]);
    assert_eq!(overridden.stdout, plain.stdout);
}

#[test]
fn missing_input_is_a_data_error() {
    assert_eq!(code(&run(&["forecast", "--input", "/nonexistent/x.csv"])), 2);
}
