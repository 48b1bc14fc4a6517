//! Batch CLI for the traffic-mining pipeline.
//!
//! Subcommands: ingest, synth, cluster, train, predict, evaluate, report.
//! Exit codes: 0 success, 1 usage error, 2 data/model error. All randomized
//! stages honor --seed (or a `seed` config key, or IMINER_SEED).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use clap::{Parser, Subcommand};

use iminer::error::{Error, Result};
use iminer::evo::{history_to_csv, GaConfig};
use iminer::fcm;
use iminer::ingest::{
    self, features_from_csv, features_to_csv, parse_log_line, series_to_csv, FeatureTable,
    Granularity,
};
use iminer::metrics;
use iminer::pipeline::{
    self, predictions_from_csv, predictions_to_csv, Method, ModelBundle, BASELINE_CLUSTERS,
    SOM_GRID,
};
use iminer::som::{self, SomSchedule};
use iminer::synth::{self, TrafficProfile};

#[derive(Parser)]
#[command(
    name = "iminer",
    version,
    about = "Web traffic mining and trend prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse access-log files and write aggregated traffic and feature CSVs
    Ingest {
        /// Glob over log files (CLF or Combined format)
        #[arg(long)]
        logs: String,
        #[arg(long, default_value = "hourly")]
        granularity: String,
        /// Prediction horizon (buckets ahead) for the feature file
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic traffic corpus
    Synth {
        #[arg(long, default_value_t = 180)]
        days: u32,
        #[arg(long)]
        seed: Option<u64>,
        /// First day (YYYY-MM-DD)
        #[arg(long, default_value = "2002-02-17")]
        start: String,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// Also write raw CLF log lines (access.log)
        #[arg(long)]
        emit_logs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a feature file and write it back re-indexed by cluster
    Cluster {
        #[arg(long)]
        features: PathBuf,
        /// fcm | som
        #[arg(long, default_value = "fcm")]
        method: String,
        /// Cluster count (FCM only)
        #[arg(long, default_value_t = BASELINE_CLUSTERS)]
        clusters: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a prediction model on a feature file
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Flat `key = value` config file; flags take precedence
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// i-miner | fcm-only | som-baseline | fis-only
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        granularity: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Timestamp of the first feature row (feature CSVs carry no times)
        #[arg(long)]
        start: Option<String>,
        /// Train/test boundary timestamp; rows strictly before it train
        #[arg(long)]
        split: Option<String>,
        /// Fallback train fraction when --split is absent
        #[arg(long)]
        train_frac: Option<f64>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a feature file with a trained model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Timestamp of the first feature row
        #[arg(long)]
        start: Option<String>,
        /// Output CSV path (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction CSV
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
    },
    /// Merge eval.csv files under a directory into one comparison table
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parse_granularity(s: &str) -> Result<Granularity> {
    match s {
        "hourly" => Ok(Granularity::Hourly),
        "daily" => Ok(Granularity::Daily),
        other => Err(Error::InvalidInput(format!(
            "unknown granularity `{other}` (expected hourly or daily)"
        ))),
    }
}

/// Accept RFC 3339 timestamps or bare dates (midnight UTC).
fn parse_datetime(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    let date: NaiveDate = s
        .parse()
        .map_err(|_| Error::InvalidInput(format!("unparseable datetime `{s}`")))?;
    Ok(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).unwrap()))
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("IMINER_SEED") {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidInput(format!("IMINER_SEED `{v}` is not an integer"))),
        Err(_) => Ok(None),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Flat `key = value` file; `#` starts a comment.
fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("{}:{}: expected `key = value`", path.display(), i + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct TrainSettings {
    ga: GaConfig,
    method: Method,
    granularity: Granularity,
    horizon: usize,
    start: DateTime<Utc>,
    split: Option<DateTime<Utc>>,
    train_frac: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            ga: GaConfig::default(),
            method: Method::IMiner,
            granularity: Granularity::Hourly,
            horizon: 1,
            start: Utc.with_ymd_and_hms(1970, 1, 1, 0, 0, 0).unwrap(),
            split: None,
            train_frac: 0.8,
        }
    }
}

fn apply_config_entry(settings: &mut TrainSettings, key: &str, value: &str) -> Result<()> {
    let bad = |what: &str| Error::InvalidInput(format!("config key {key}: bad {what} `{value}`"));
    macro_rules! num {
        ($what:expr) => {
            value.parse().map_err(|_| bad($what))?
        };
    }
    match key {
        "population_size" => settings.ga.population_size = num!("integer"),
        "max_generations" => settings.ga.max_generations = num!("integer"),
        "mfs_per_input" => settings.ga.mfs_per_input = num!("integer"),
        "gd_epochs" => settings.ga.gd_epochs = num!("integer"),
        "ranking_pressure" => settings.ga.ranking_pressure = num!("number"),
        "elitism_fraction" => settings.ga.elitism_fraction = num!("number"),
        "mutation_rate_start" => settings.ga.mutation_rate_start = num!("number"),
        "mutation_shape_b" => settings.ga.mutation_shape_b = num!("number"),
        "c_max" => settings.ga.c_max = num!("integer"),
        "target_error" => settings.ga.target_error = Some(num!("number")),
        "fuzzifier" => settings.ga.fuzzifier = num!("number"),
        "fcm_tol" => settings.ga.fcm_tol = num!("number"),
        "fcm_max_iter" => settings.ga.fcm_max_iter = num!("integer"),
        "seed" => settings.ga.seed = num!("integer"),
        "method" => settings.method = Method::parse(value)?,
        "granularity" => settings.granularity = parse_granularity(value)?,
        "horizon" => settings.horizon = num!("integer"),
        "start" => settings.start = parse_datetime(value)?,
        "split" => settings.split = Some(parse_datetime(value)?),
        "train_frac" => settings.train_frac = num!("number"),
        other => {
            return Err(Error::InvalidInput(format!("unknown config key `{other}`")));
        }
    }
    Ok(())
}

fn load_table(path: &Path, start: DateTime<Utc>, granularity: Granularity) -> Result<FeatureTable> {
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "{}: no such file",
            path.display()
        )));
    }
    features_from_csv(path, start, granularity)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            logs,
            granularity,
            horizon,
            out,
        } => {
            let granularity = parse_granularity(&granularity)?;
            let paths: Vec<PathBuf> = glob::glob(&logs)
                .map_err(|e| Error::InvalidInput(format!("bad glob `{logs}`: {e}")))?
                .filter_map(|p| p.ok())
                .collect();
            if paths.is_empty() {
                return Err(Error::InvalidInput(format!("{logs}: no files matched")));
            }
            let mut records = Vec::new();
            let mut skipped = 0usize;
            for path in &paths {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                for line in text.lines() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    match parse_log_line(line) {
                        Ok(r) => records.push(r),
                        Err(_) => skipped += 1,
                    }
                }
            }
            let series = ingest::aggregate(&records, granularity)?;
            let features = ingest::build_features(&series, horizon)?;
            ensure_dir(&out)?;
            let name = match granularity {
                Granularity::Hourly => "hourly",
                Granularity::Daily => "daily",
            };
            series_to_csv(&series, &out.join(format!("traffic_{name}.csv")))?;
            features_to_csv(&features, &out.join(format!("features_{name}.csv")))?;
            println!(
                "ingested {} records from {} file(s) ({} malformed line(s) skipped), {} {} bucket(s), start {}",
                records.len(),
                paths.len(),
                skipped,
                series.buckets.len(),
                name,
                series.buckets[0].start.to_rfc3339()
            );
            Ok(())
        }
        Command::Synth {
            days,
            seed,
            start,
            horizon,
            emit_logs,
            out,
        } => {
            let seed = match seed.or(env_seed()?) {
                Some(s) => s,
                None => GaConfig::default().seed,
            };
            let start: NaiveDate = start
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad start date `{start}`")))?;
            let hourly = synth::generate(&TrafficProfile::default(), start, days, seed)?;
            let daily = synth::to_daily(&hourly)?;
            ensure_dir(&out)?;
            series_to_csv(&hourly, &out.join("traffic_hourly.csv"))?;
            series_to_csv(&daily, &out.join("traffic_daily.csv"))?;
            features_to_csv(
                &ingest::build_features(&hourly, horizon)?,
                &out.join("features_hourly.csv"),
            )?;
            features_to_csv(
                &ingest::build_features(&daily, horizon)?,
                &out.join("features_daily.csv"),
            )?;
            if emit_logs {
                let lines = synth::to_log_lines(&hourly);
                write_file(&out.join("access.log"), &(lines.join("\n") + "\n"))?;
            }
            println!(
                "generated {days} day(s) from {start} with seed {seed} into {}",
                out.display()
            );
            Ok(())
        }
        Command::Cluster {
            features,
            method,
            clusters,
            seed,
            out,
        } => {
            let raw = load_table(&features, TrainSettings::default().start, Granularity::Hourly)?;
            let norm = raw.normalize()?;
            let data = pipeline::cluster_features(&norm);
            ensure_dir(&out)?;
            let assignments: Vec<usize> = match method.as_str() {
                "fcm" => {
                    let init = pipeline::spread_init_centers(&data, clusters)?;
                    let ga = GaConfig::default();
                    let model = fcm::fcm_run(&data, &init, ga.fuzzifier, ga.fcm_tol, ga.fcm_max_iter)?;
                    fcm::memberships_to_csv(&model.memberships, &out.join("memberships.csv"))?;
                    write_file(
                        &out.join("centers.json"),
                        &serde_json::to_string_pretty(&model)?,
                    )?;
                    data.iter().map(|p| fcm::assign(&model, p)).collect()
                }
                "som" => {
                    let seed = match seed.or(env_seed()?) {
                        Some(s) => s,
                        None => GaConfig::default().seed,
                    };
                    let (rows, cols) = SOM_GRID;
                    let schedule = SomSchedule::standard(rows, cols, 10 * data.len());
                    let model = som::som_train(&data, rows, cols, &schedule, seed)?;
                    write_file(
                        &out.join("som.json"),
                        &serde_json::to_string_pretty(&model)?,
                    )?;
                    data.iter()
                        .map(|p| som::winner(p, &model))
                        .collect::<Result<Vec<_>>>()?
                }
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown cluster method `{other}` (expected fcm or som)"
                    )));
                }
            };
            let clustered = raw.reindex_by_cluster(&assignments)?;
            features_to_csv(&clustered, &out.join("features_clustered.csv"))?;
            let distinct: std::collections::BTreeSet<_> = assignments.iter().collect();
            println!(
                "clustered {} row(s) into {} group(s) with {method}",
                clustered.len(),
                distinct.len()
            );
            Ok(())
        }
        Command::Train {
            features,
            config,
            seed,
            method,
            granularity,
            horizon,
            start,
            split,
            train_frac,
            generations,
            population,
            out,
        } => {
            let mut settings = TrainSettings::default();
            if let Some(path) = &config {
                let map = parse_config_file(path)?;
                let mut keys: Vec<_> = map.keys().collect();
                keys.sort();
                for key in keys {
                    apply_config_entry(&mut settings, key, &map[key])?;
                }
            }
            // flags beat the file; the env seed fills in only when neither is given
            if let Some(m) = method {
                settings.method = Method::parse(&m)?;
            }
            if let Some(g) = granularity {
                settings.granularity = parse_granularity(&g)?;
            }
            if let Some(h) = horizon {
                settings.horizon = h;
            }
            if let Some(s) = start {
                settings.start = parse_datetime(&s)?;
            }
            if let Some(s) = split {
                settings.split = Some(parse_datetime(&s)?);
            }
            if let Some(f) = train_frac {
                settings.train_frac = f;
            }
            if let Some(g) = generations {
                settings.ga.max_generations = g;
            }
            if let Some(p) = population {
                settings.ga.population_size = p;
            }
            if let Some(s) = seed {
                settings.ga.seed = s;
            } else if config
                .as_ref()
                .map(|p| parse_config_file(p))
                .transpose()?
                .is_none_or(|m| !m.contains_key("seed"))
            {
                if let Some(s) = env_seed()? {
                    settings.ga.seed = s;
                }
            }
            if !(0.0..1.0).contains(&settings.train_frac) || settings.train_frac == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "train_frac {} outside (0, 1)",
                    settings.train_frac
                )));
            }

            let raw = load_table(&features, settings.start, settings.granularity)?;
            let boundary = match settings.split {
                Some(b) => b,
                None => {
                    let cut = ((raw.len() as f64) * settings.train_frac).round() as usize;
                    let cut = cut.clamp(1, raw.len() - 1);
                    raw.rows[cut].time
                }
            };
            let (train_raw, test_raw) = raw.split(boundary)?;
            let train = train_raw.normalize()?;
            let test = test_raw.normalize_with(train.scaler.unwrap());

            let artifacts = pipeline::run_method(
                settings.method,
                &train,
                &test,
                &settings.ga,
                settings.granularity,
                settings.horizon,
            )?;
            ensure_dir(&out)?;
            write_file(
                &out.join("model.json"),
                &serde_json::to_string_pretty(&artifacts.bundle)?,
            )?;
            if let Some(history) = &artifacts.history {
                write_file(&out.join("history.csv"), &history_to_csv(history))?;
            }
            if let Some(best) = &artifacts.best_chromosome {
                write_file(
                    &out.join("chromosome.json"),
                    &serde_json::to_string_pretty(best)?,
                )?;
            }
            write_file(&out.join("eval.csv"), &metrics::compare(&[artifacts.report.clone()])?)?;
            let scaler = artifacts.bundle.scaler;
            write_file(
                &out.join("predictions_train.csv"),
                &predictions_to_csv(&artifacts.train_predictions, &scaler)?,
            )?;
            write_file(
                &out.join("predictions_test.csv"),
                &predictions_to_csv(&artifacts.test_predictions, &scaler)?,
            )?;
            let r = &artifacts.report;
            println!(
                "{} {}: train_rmse={:.6} test_rmse={:.6} test_cc={:.4} rules={} clusters={}",
                r.method,
                r.horizon,
                r.train_rmse,
                r.test_rmse,
                r.test_cc,
                r.rules.map_or("-".into(), |v| v.to_string()),
                r.clusters.map_or("-".into(), |v| v.to_string()),
            );
            Ok(())
        }
        Command::Predict {
            model,
            features,
            start,
            out,
        } => {
            let text = fs::read_to_string(&model)
                .map_err(|e| Error::io(model.display().to_string(), e))?;
            let bundle: ModelBundle = serde_json::from_str(&text)?;
            let start = match start {
                Some(s) => parse_datetime(&s)?,
                None => TrainSettings::default().start,
            };
            let raw = load_table(&features, start, bundle.granularity)?;
            let rows = bundle.predict(&raw)?;
            let csv = predictions_to_csv(&rows, &bundle.scaler)?;
            match out {
                Some(path) => write_file(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Evaluate { pred } => {
            let text =
                fs::read_to_string(&pred).map_err(|e| Error::io(pred.display().to_string(), e))?;
            let rows = predictions_from_csv(&text)?;
            let actual: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let predicted: Vec<f64> = rows.iter().map(|r| r.2).collect();
            println!(
                "n={} rmse={:.6} cc={:.4}",
                rows.len(),
                metrics::rmse(&predicted, &actual)?,
                metrics::corr_coef(&predicted, &actual)?
            );
            Ok(())
        }
        Command::Report { runs, out } => {
            let pattern = runs.join("**").join("eval.csv");
            let mut reports = Vec::new();
            for entry in glob::glob(&pattern.to_string_lossy())
                .map_err(|e| Error::InvalidInput(format!("bad runs dir: {e}")))?
                .filter_map(|p| p.ok())
            {
                let text = fs::read_to_string(&entry)
                    .map_err(|e| Error::io(entry.display().to_string(), e))?;
                reports.extend(metrics::parse_comparison(&text)?);
            }
            if reports.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "{}: no eval.csv files found",
                    runs.display()
                )));
            }
            let table = metrics::compare(&reports)?;
            match out {
                Some(path) => write_file(&path, &table)?,
                None => print!("{table}"),
            }
            Ok(())
        }
    }
}
