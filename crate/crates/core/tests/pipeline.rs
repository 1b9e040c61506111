use esn_core::benchmarks::BenchmarkKind;
use esn_core::data::{self, Frequency, TimeSeries};
use esn_core::forecaster::{self, EsnConfig};
use esn_core::readout::IcKind;
use esn_core::registry::{evaluate_all, ModelRegistry};
use esn_core::sweep::{self, Grid, SweepOptions};

fn series(id: &str, len: usize, shift: f64) -> TimeSeries {
    let v = (0..len)
        .map(|t| {
            let tf = t as f64;
            200.0 + shift + 1.5 * tf + 20.0 * (2.0 * std::f64::consts::PI * tf / 12.0).cos() + 3.0 * (tf * 1.7).sin()
        })
        .collect();
    TimeSeries::new(id, Frequency::Monthly, v)
}

#[test]
fn csv_to_benchmark_records() {
    let pool = vec![series("M1", 90, 0.0), series("M2", 110, 50.0), series("M3", 40, 0.0)];
    let mut buf = Vec::new();
    data::write_m4_csv(&mut buf, &pool).unwrap();
    let parsed = data::read_m4_csv(buf.as_slice(), Frequency::Monthly).unwrap();
    // M3 is below the monthly minimum length
    let kept = data::filter_by_length(parsed);
    assert_eq!(kept.len(), 2);
    let splits: Vec<_> = kept.iter().map(|s| data::split_train_test(s).unwrap()).collect();
    assert!(splits.iter().all(|s| s.test.len() == 18));

    let registry = ModelRegistry::default();
    let names = ["esn".to_string(), BenchmarkKind::Naive.name().to_string()];
    let models = registry.create_all(&names, &EsnConfig::default()).unwrap();
    let (records, failures) = evaluate_all(&models, &splits, 1).unwrap();
    assert!(failures.is_empty());
    let ids: Vec<_> = records.iter().map(|r| (r.series_id.as_str(), r.model_id.as_str())).collect();
    assert_eq!(ids, [("M1", "esn"), ("M1", "naive"), ("M2", "esn"), ("M2", "naive")]);
}

#[test]
fn sub_grid_sweep_and_reports() {
    let splits: Vec<_> = [series("A", 80, 0.0), series("B", 96, 10.0)]
        .iter()
        .map(|s| data::split_train_test(s).unwrap())
        .collect();
    let grid = Grid {
        alphas: vec![0.3, 0.6, 1.0],
        rhos: vec![0.5, 0.9, 1.1],
        taus: vec![0.4],
        ics: vec![IcKind::Bic],
    };
    let dir = tempfile::tempdir().unwrap();
    let out = sweep::run_sweep(&splits, &grid, &SweepOptions::default(), dir.path()).unwrap();
    assert_eq!((out.total, out.written), (18, 18));
    let records = sweep::read_records(&dir.path().join(sweep::RECORDS_FILE)).unwrap();
    sweep::write_reports(dir.path(), &records, 5).unwrap();
    let ranking = std::fs::read_to_string(dir.path().join(sweep::RANKING_FILE)).unwrap();
    assert_eq!(ranking.lines().count(), 1 + 5);
    let ranked = sweep::rank_configs(&records, 100).unwrap();
    assert_eq!(ranked.rows.len(), 9);
    assert!(ranked.rows.iter().all(|r| r.n == 2));
}

#[test]
fn fit_is_independent_of_future_values() {
    let full = series("F", 120, 0.0).values;
    let cfg = EsnConfig::new(IcKind::Hqc, 0.7, 0.8, 0.4).with_seed(5);
    let a = forecaster::forecast(&forecaster::fit(&full[..100], &cfg).unwrap(), 6).unwrap();
    let mut altered = full.clone();
    for v in &mut altered[100..] {
        *v = -1e6;
    }
    let b = forecaster::forecast(&forecaster::fit(&altered[..100], &cfg).unwrap(), 6).unwrap();
    assert_eq!(a, b);
}
