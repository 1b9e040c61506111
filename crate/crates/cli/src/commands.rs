use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use esn_core::config::GlobalConfig;
use esn_core::data::{self, Frequency, SampleManifest, SplitSeries, TimeSeries};
use esn_core::forecaster::{self, EsnConfig, SavedModel};
use esn_core::metrics;
use esn_core::registry::{self, ModelRegistry};
use esn_core::sweep::{self, Grid, SweepOptions};
use esn_core::{Error, Result};

use crate::{Command, DataArgs, EsnArgs};

pub fn dispatch(command: Command, mut cfg: GlobalConfig) -> Result<()> {
    match command {
        Command::Sample {
            input,
            freq,
            n,
            seed,
            out,
        } => {
            let freq = freq.unwrap_or(cfg.run.frequency);
            sample(&input, freq, n, seed.unwrap_or(cfg.run.master_seed), &out)
        }
        Command::Characterize {
            input,
            freq,
            out,
            histogram,
        } => characterize(&input, freq.unwrap_or(cfg.run.frequency), &out, histogram.as_deref()),
        Command::Fit {
            input,
            freq,
            series,
            esn,
            out,
        } => {
            let freq = freq.unwrap_or(cfg.run.frequency);
            let esn = merge_esn(&cfg.esn, &esn)?;
            fit(&input, freq, series.as_deref(), &esn, &out)
        }
        Command::Forecast {
            input,
            freq,
            series,
            model,
            horizon,
            esn,
            out,
            keep_going,
        } => {
            let freq = freq.unwrap_or(cfg.run.frequency);
            let esn = merge_esn(&cfg.esn, &esn)?;
            let rows = match model {
                Some(path) => forecast_saved(&path, horizon)?,
                None => {
                    let input = input.expect("clap requires --input without --model");
                    forecast_series(&input, freq, series.as_deref(), horizon, &esn, keep_going)?
                }
            };
            write_forecasts(out.as_deref(), &rows)
        }
        Command::Benchmark {
            data,
            esn,
            models,
            threads,
            out_dir,
            keep_going,
        } => {
            let esn = merge_esn(&cfg.esn, &esn)?;
            if let Some(t) = threads {
                cfg.run.parallelism = t;
            }
            let out_dir = out_dir.unwrap_or_else(|| cfg.output.dir.clone());
            benchmark(&data, &cfg, &esn, &models, &out_dir, keep_going)
        }
        Command::Sweep {
            data,
            grid,
            seed,
            threads,
            out_dir,
            resume,
            top_k,
            stop_after,
        } => {
            if let Some(p) = grid {
                cfg.grid = Grid::from_file(&p)?;
            }
            if let Some(s) = seed {
                cfg.run.master_seed = s;
            }
            if let Some(t) = threads {
                cfg.run.parallelism = t;
            }
            if let Some(k) = top_k {
                cfg.output.top_k = k;
            }
            cfg.validate()?;
            let out_dir = out_dir.unwrap_or_else(|| cfg.output.dir.clone());
            run_sweep(&data, &cfg, &out_dir, resume, stop_after)
        }
        Command::Report {
            records,
            out_dir,
            top_k,
        } => {
            let dir = out_dir.unwrap_or_else(|| parent_dir(&records));
            report(&records, &dir, top_k.unwrap_or(cfg.output.top_k))
        }
    }
}

fn merge_esn(base: &EsnConfig, args: &EsnArgs) -> Result<EsnConfig> {
    let mut c = base.clone();
    if let Some(v) = args.alpha {
        c.alpha = v;
    }
    if let Some(v) = args.rho {
        c.rho = v;
    }
    if let Some(v) = args.tau {
        c.tau = v;
    }
    if let Some(v) = args.ic {
        c.ic = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    c.validate()?;
    Ok(c)
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create(path: &Path) -> Result<File> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create(path)?
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Training/test splits, either from a separate test file or by holding out
/// the last horizon values. Series too short to split are skipped.
fn load_splits(args: &DataArgs, default_freq: Frequency) -> Result<Vec<SplitSeries>> {
    let freq = args.freq.unwrap_or(default_freq);
    let train = data::parse_m4_csv(&args.input, freq)?;
    let splits = match &args.test {
        Some(t) => data::join_train_test(train, data::parse_m4_csv(t, freq)?)?,
        None => {
            let mut out = Vec::with_capacity(train.len());
            for s in &train {
                match data::split_train_test(s) {
                    Ok(sp) => out.push(sp),
                    Err(e) => log::warn!("skipping {}: {e}", s.id),
                }
            }
            out
        }
    };
    if splits.is_empty() {
        return Err(Error::Empty(format!("{}: no usable series", args.input.display())));
    }
    Ok(splits)
}

fn sample(input: &Path, freq: Frequency, n: usize, seed: u64, out: &Path) -> Result<()> {
    let pool = data::parse_m4_csv(input, freq)?;
    let pool_size = pool.len();
    let qualifying = data::filter_by_length(pool);
    log::info!("{} of {pool_size} series within the length bounds", qualifying.len());
    let sampled = data::sample_disjoint(&qualifying, n, seed)?;
    let pick = |ids: &[String]| -> Vec<TimeSeries> {
        ids.iter()
            .filter_map(|id| qualifying.iter().find(|s| &s.id == id).cloned())
            .collect()
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let p = out.join("parameter.csv");
    data::write_m4_csv(create(&p)?, &pick(&sampled.parameter_set))?;
    let f = out.join("forecast.csv");
    data::write_m4_csv(create(&f)?, &pick(&sampled.forecast_set))?;
    let manifest = SampleManifest {
        frequency: freq,
        seed,
        n_each: n,
        pool_size,
        qualifying: qualifying.len(),
        pool_hash: data::pool_hash(&qualifying),
        parameter_set: sampled.parameter_set,
        forecast_set: sampled.forecast_set,
    };
    write_text(&out.join("manifest.json"), &manifest.to_json())?;
    println!("wrote {} and {} ({n} series each)", p.display(), f.display());
    Ok(())
}

const HISTOGRAM_BINS: usize = 10;

fn characterize(input: &Path, freq: Frequency, out: &Path, histogram: Option<&Path>) -> Result<()> {
    let series = data::parse_m4_csv(input, freq)?;
    let m = freq.period();
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["series_id", "length", "trend_strength", "seasonal_strength", "flag"])?;
    let mut trend = Vec::new();
    let mut seasonal = Vec::new();
    for s in &series {
        let (ft, fs, flag) = match metrics::decompose_additive(&s.values, m) {
            Ok(d) => {
                let t = metrics::strength_of_trend(&d);
                let se = metrics::strength_of_seasonality(&d);
                trend.push(t.value);
                seasonal.push(se.value);
                let flag = if t.degenerate || se.degenerate { "degenerate" } else { "" };
                (t.value.to_string(), se.value.to_string(), flag)
            }
            Err(Error::TooShort(_)) => (String::new(), String::new(), "too_short"),
            Err(e) => return Err(e),
        };
        w.write_record([s.id.clone(), s.len().to_string(), ft, fs, flag.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;

    if let Some(path) = histogram {
        let mut h = csv::Writer::from_writer(create(path)?);
        h.write_record(["characteristic", "bin_lo", "bin_hi", "count"])?;
        for (name, values) in [("trend", &trend), ("seasonal", &seasonal)] {
            let mut counts = [0usize; HISTOGRAM_BINS];
            for v in values.iter() {
                counts[((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
            }
            for (b, c) in counts.iter().enumerate() {
                h.write_record([
                    name.to_string(),
                    format!("{:.1}", b as f64 / HISTOGRAM_BINS as f64),
                    format!("{:.1}", (b + 1) as f64 / HISTOGRAM_BINS as f64),
                    c.to_string(),
                ])?;
            }
        }
        h.flush().map_err(|e| Error::io(path, e))?;
    }
    println!("characterized {} series", series.len());
    Ok(())
}

fn select_series(all: Vec<TimeSeries>, id: Option<&str>, input: &Path) -> Result<Vec<TimeSeries>> {
    match id {
        None => Ok(all),
        Some(id) => {
            let found: Vec<TimeSeries> = all.into_iter().filter(|s| s.id == id).collect();
            if found.is_empty() {
                return Err(Error::Empty(format!("series '{id}' not in {}", input.display())));
            }
            Ok(found)
        }
    }
}

fn fit(input: &Path, freq: Frequency, series: Option<&str>, esn: &EsnConfig, out: &Path) -> Result<()> {
    let all = data::parse_m4_csv(input, freq)?;
    let s = select_series(all, series, input)?.swap_remove(0);
    let model = forecaster::fit(&s.values, esn)?;
    if model.is_constant() {
        log::warn!("{} is constant after preprocessing; saved a constant model", s.id);
    }
    let saved = SavedModel {
        series_id: s.id.clone(),
        frequency: freq,
        model,
    };
    forecaster::save_model(io::BufWriter::new(create(out)?), &saved)?;
    println!("saved model for {} to {}", s.id, out.display());
    Ok(())
}

type ForecastRows = Vec<(String, Vec<f64>)>;

fn forecast_saved(path: &Path, horizon: Option<usize>) -> Result<ForecastRows> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let saved = forecaster::load_model(BufReader::new(f))?;
    let h = horizon.unwrap_or(saved.frequency.horizon());
    Ok(vec![(saved.series_id, forecaster::forecast(&saved.model, h)?)])
}

fn forecast_series(
    input: &Path,
    freq: Frequency,
    series: Option<&str>,
    horizon: Option<usize>,
    esn: &EsnConfig,
    keep_going: bool,
) -> Result<ForecastRows> {
    let all = select_series(data::parse_m4_csv(input, freq)?, series, input)?;
    let h = horizon.unwrap_or(freq.horizon());
    let mut rows = Vec::new();
    let mut last_err = None;
    for s in &all {
        match forecaster::fit(&s.values, esn).and_then(|m| forecaster::forecast(&m, h)) {
            Ok(f) => rows.push((s.id.clone(), f)),
            Err(e) if keep_going => {
                log::warn!("{}: {e}", s.id);
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match (rows.is_empty(), last_err) {
        (true, Some(e)) => Err(e),
        _ => Ok(rows),
    }
}

fn write_forecasts(out: Option<&Path>, rows: &ForecastRows) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["series_id", "step", "forecast"])?;
    for (id, f) in rows {
        for (k, v) in f.iter().enumerate() {
            w.write_record([id.clone(), (k + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(out.unwrap_or(Path::new("<stdout>")), e))
}

fn benchmark(
    data_args: &DataArgs,
    cfg: &GlobalConfig,
    esn: &EsnConfig,
    models: &[String],
    out_dir: &Path,
    keep_going: bool,
) -> Result<()> {
    let splits = load_splits(data_args, cfg.run.frequency)?;
    let reg = ModelRegistry::default();
    let names: Vec<String> = if models.is_empty() {
        reg.names().iter().map(|s| s.to_string()).collect()
    } else {
        models.to_vec()
    };
    let forecasters = reg.create_all(&names, esn)?;
    let (records, failures) = registry::evaluate_all(&forecasters, &splits, cfg.run.threads())?;
    if let Some(first) = failures.first() {
        if !keep_going {
            return Err(Error::Model(format!(
                "{} on {}: {} ({} failures in total)",
                first.model_id,
                first.series_id,
                first.error,
                failures.len()
            )));
        }
        for f in &failures {
            log::warn!("{} on {}: {}", f.model_id, f.series_id, f.error);
        }
    }
    if records.is_empty() {
        return Err(Error::Empty("every forecast failed".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    metrics::write_accuracy_csv(create(&out_dir.join("accuracy.csv"))?, &records)?;
    let summary = metrics::aggregate(&records)?;
    metrics::write_summary_csv(create(&out_dir.join("summary.csv"))?, &summary)?;
    let table = metrics::format_summary_table(&summary);
    write_text(&out_dir.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn run_sweep(
    data_args: &DataArgs,
    cfg: &GlobalConfig,
    out_dir: &Path,
    resume: bool,
    stop_after: Option<usize>,
) -> Result<()> {
    let splits = load_splits(data_args, cfg.run.frequency)?;
    let opts = SweepOptions {
        master_seed: cfg.run.master_seed,
        parallelism: cfg.run.threads(),
        base: cfg.esn.clone(),
        resume,
        stop_after,
    };
    let outcome = sweep::run_sweep(&splits, &cfg.grid, &opts, out_dir)?;
    let records = sweep::read_records(&out_dir.join(sweep::RECORDS_FILE))?;
    if outcome.interrupted {
        println!(
            "stopped after {} of {} tasks; rerun with --resume to finish",
            outcome.skipped + outcome.written,
            outcome.total
        );
        return Ok(());
    }
    sweep::write_reports(out_dir, &records, cfg.output.top_k)?;
    print!(
        "{}",
        fs::read_to_string(out_dir.join(sweep::SUMMARY_FILE)).unwrap_or_default()
    );
    Ok(())
}

fn report(records: &Path, out_dir: &Path, top_k: usize) -> Result<()> {
    let f = File::open(records).map_err(|e| Error::io(records, e))?;
    let mut header = String::new();
    BufReader::new(f)
        .read_line(&mut header)
        .map_err(|e| Error::io(records, e))?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if header.split(',').any(|c| c.trim() == "config_index") {
        let recs = sweep::read_records(records)?;
        if recs.is_empty() {
            return Err(Error::Empty(format!("{}: no records", records.display())));
        }
        sweep::write_reports(out_dir, &recs, top_k)?;
        print!(
            "{}",
            fs::read_to_string(out_dir.join(sweep::SUMMARY_FILE)).unwrap_or_default()
        );
    } else {
        let f = File::open(records).map_err(|e| Error::io(records, e))?;
        let recs = metrics::read_accuracy_csv(f)?;
        let summary = metrics::aggregate(&recs)?;
        metrics::write_summary_csv(create(&out_dir.join("summary.csv"))?, &summary)?;
        let table = metrics::format_summary_table(&summary);
        write_text(&out_dir.join("summary.txt"), &table)?;
        print!("{table}");
    }
    Ok(())
}
