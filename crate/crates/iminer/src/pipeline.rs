//! End-to-end wiring: feature matrices, cluster assignment, prediction and
//! the four comparable training methods (evolved pipeline, FCM-seeded FIS,
//! SOM-seeded FIS, plain FIS without a cluster feature).

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::{self, Chromosome, EvolutionHistory, GaConfig};
use crate::fcm::{self, ClusterModel};
use crate::ingest::{FeatureTable, Granularity, Scaler};
use crate::metrics::{self, EvalReport};
use crate::som::{self, SomModel, SomSchedule};
use crate::tsfis::{grid_partition, infer, TsModel};
use crate::tune::{fine_tune, output_error, Sample};

/// Baseline fine-tuning settings. The squared-error objective is summed over
/// samples, so the baseline learning rate is specified per sample and divided
/// by the training-set size before use.
pub const BASELINE_LEARN_RATE_PER_SAMPLE: f64 = 0.3;
pub const BASELINE_MOMENTUM: f64 = 0.9;
pub const BASELINE_EPOCHS: usize = 100;
/// Cluster count of the fixed FCM baseline.
pub const BASELINE_CLUSTERS: usize = 5;
/// SOM baseline grid.
pub const SOM_GRID: (usize, usize) = (3, 3);

/// Normalize a row index into [0,1] over the index span of the table.
fn index_scale(table: &FeatureTable) -> (usize, usize) {
    let lo = table.rows.iter().map(|r| r.index).min().unwrap_or(0);
    let hi = table.rows.iter().map(|r| r.index).max().unwrap_or(0);
    (lo, hi)
}

fn scale_index(index: usize, (lo, hi): (usize, usize)) -> f64 {
    if hi > lo {
        (index - lo) as f64 / (hi - lo) as f64
    } else {
        0.5
    }
}

/// Clustering feature space: (requests, bytes, normalized time index).
pub fn cluster_features(table: &FeatureTable) -> Vec<Vec<f64>> {
    let span = index_scale(table);
    table
        .rows
        .iter()
        .map(|r| vec![r.requests, r.bytes, scale_index(r.index, span)])
        .collect()
}

/// Per-dimension (min, max) bounding box of a feature matrix.
pub fn data_bounds(data: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let dim = data.first().map_or(0, |p| p.len());
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for p in data {
        for (b, &x) in bounds.iter_mut().zip(p) {
            b.0 = b.0.min(x);
            b.1 = b.1.max(x);
        }
    }
    bounds
}

/// Model samples with the cluster id as fourth input: (requests, bytes,
/// normalized index, cluster id scaled over 0..n_clusters-1) → target.
pub fn model_inputs(table: &FeatureTable, n_clusters: usize) -> Result<Vec<Sample>> {
    let span = index_scale(table);
    table
        .rows
        .iter()
        .map(|r| {
            let c = r.cluster.ok_or_else(|| {
                Error::InvalidInput(format!("row {} has no cluster id", r.index))
            })?;
            let cnorm = if n_clusters > 1 {
                c as f64 / (n_clusters - 1) as f64
            } else {
                0.5
            };
            Ok((
                vec![r.requests, r.bytes, scale_index(r.index, span), cnorm],
                r.target,
            ))
        })
        .collect()
}

/// Three-input samples for the variant that skips clustering entirely.
pub fn model_inputs_no_cluster(table: &FeatureTable) -> Vec<Sample> {
    let span = index_scale(table);
    table
        .rows
        .iter()
        .map(|r| {
            (
                vec![r.requests, r.bytes, scale_index(r.index, span)],
                r.target,
            )
        })
        .collect()
}

/// Crisp-assign every row to its FCM cluster, then re-sort and re-index.
pub fn assign_and_reindex(model: &ClusterModel, table: &FeatureTable) -> Result<FeatureTable> {
    let data = cluster_features(table);
    let assignments: Vec<usize> = data.iter().map(|p| fcm::assign(model, p)).collect();
    table.reindex_by_cluster(&assignments)
}

/// Same re-indexing with SOM winners as cluster ids.
pub fn assign_and_reindex_som(model: &SomModel, table: &FeatureTable) -> Result<FeatureTable> {
    let data = cluster_features(table);
    let assignments = data
        .iter()
        .map(|p| som::winner(p, model))
        .collect::<Result<Vec<_>>>()?;
    table.reindex_by_cluster(&assignments)
}

/// RMSE of a model over samples (output_error is a residual sum of squares).
pub fn model_rmse(model: &TsModel, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    Ok((output_error(model, data)? / data.len() as f64).sqrt())
}

/// Test-set RMSE of an evolved individual: cluster-assign the test rows with
/// its FCM model, then run its FIS.
pub fn evaluate_test_rmse(eval: &evo::Evaluated, test: &FeatureTable) -> Result<f64> {
    let reindexed = assign_and_reindex(&eval.cluster_model, test)?;
    let samples = model_inputs(&reindexed, eval.cluster_model.centers.len())?;
    model_rmse(&eval.ts_model, &samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub time: DateTime<Utc>,
    pub actual: f64,
    pub predicted: f64,
}

/// Predict each table row and hand the results back in time order.
fn predict_samples(
    model: &TsModel,
    table: &FeatureTable,
    samples: &[Sample],
) -> Result<Vec<PredictionRow>> {
    let mut rows: Vec<PredictionRow> = table
        .rows
        .iter()
        .zip(samples)
        .map(|(r, (x, d))| {
            Ok(PredictionRow {
                time: r.time,
                actual: *d,
                predicted: infer(model, x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.time);
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    IMiner,
    FcmOnly,
    SomBaseline,
    FisOnly,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::IMiner => "i-miner",
            Method::FcmOnly => "fcm-only",
            Method::SomBaseline => "som-baseline",
            Method::FisOnly => "fis-only",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "i-miner" => Ok(Method::IMiner),
            "fcm-only" => Ok(Method::FcmOnly),
            "som-baseline" => Ok(Method::SomBaseline),
            "fis-only" => Ok(Method::FisOnly),
            other => Err(Error::InvalidInput(format!(
                "unknown method `{other}` (expected i-miner, fcm-only, som-baseline or fis-only)"
            ))),
        }
    }
}

/// Everything a training run leaves behind.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: EvalReport,
    pub bundle: ModelBundle,
    pub history: Option<EvolutionHistory>,
    pub best_chromosome: Option<Chromosome>,
    pub train_predictions: Vec<PredictionRow>,
    pub test_predictions: Vec<PredictionRow>,
}

/// Serializable trained-model package: whatever is needed to predict fresh
/// (unnormalized) feature rows later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub method: Method,
    pub granularity: Granularity,
    pub horizon: usize,
    pub scaler: Scaler,
    pub ts_model: TsModel,
    pub cluster: Option<ClusterModel>,
    pub som: Option<SomModel>,
}

impl ModelBundle {
    /// Predict an unnormalized feature table; output stays in normalized
    /// units (invert with `self.scaler` for raw request counts).
    pub fn predict(&self, raw: &FeatureTable) -> Result<Vec<PredictionRow>> {
        let table = raw.normalize_with(self.scaler);
        match self.method {
            Method::FisOnly => {
                let samples = model_inputs_no_cluster(&table);
                predict_samples(&self.ts_model, &table, &samples)
            }
            Method::SomBaseline => {
                let som = self
                    .som
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("bundle lacks a SOM".into()))?;
                let reindexed = assign_and_reindex_som(som, &table)?;
                let samples = model_inputs(&reindexed, som.node_count())?;
                predict_samples(&self.ts_model, &reindexed, &samples)
            }
            Method::IMiner | Method::FcmOnly => {
                let cm = self
                    .cluster
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("bundle lacks a cluster model".into()))?;
                let reindexed = assign_and_reindex(cm, &table)?;
                let samples = model_inputs(&reindexed, cm.centers.len())?;
                predict_samples(&self.ts_model, &reindexed, &samples)
            }
        }
    }
}

/// Distinct initial centers spread across the data (quantile positions of
/// the first feature ordering), for the deterministic FCM baseline.
pub fn spread_init_centers(data: &[Vec<f64>], c: usize) -> Result<Vec<Vec<f64>>> {
    if data.len() < c {
        return Err(Error::InvalidInput(format!(
            "{} points for {c} centers",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        data[a]
            .partial_cmp(&data[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(c);
    let push_if_new = |p: &Vec<f64>, centers: &mut Vec<Vec<f64>>| {
        if !centers.iter().any(|q| q == p) {
            centers.push(p.clone());
        }
    };
    for k in 0..c {
        let i = order[k * (data.len() - 1) / c.max(1)];
        push_if_new(&data[i], &mut centers);
    }
    for &i in &order {
        if centers.len() >= c {
            break;
        }
        push_if_new(&data[i], &mut centers);
    }
    if centers.len() < c {
        return Err(Error::DegenerateCenters(format!(
            "only {} distinct points for {c} centers",
            centers.len()
        )));
    }
    Ok(centers)
}

fn report_from(
    method: Method,
    horizon_label: &str,
    train: &[PredictionRow],
    test: &[PredictionRow],
    rules: Option<usize>,
    clusters: Option<usize>,
) -> Result<EvalReport> {
    let series = |rows: &[PredictionRow]| -> (Vec<f64>, Vec<f64>) {
        (
            rows.iter().map(|r| r.predicted).collect(),
            rows.iter().map(|r| r.actual).collect(),
        )
    };
    let (ptr, atr) = series(train);
    let (pte, ate) = series(test);
    Ok(EvalReport {
        method: method.name().to_string(),
        horizon: horizon_label.to_string(),
        train_rmse: metrics::rmse(&ptr, &atr)?,
        test_rmse: metrics::rmse(&pte, &ate)?,
        test_cc: metrics::corr_coef(&pte, &ate)?,
        rules,
        clusters,
    })
}

/// Train one method on normalized train/test tables and evaluate it.
///
/// `granularity` / `horizon` only annotate the returned bundle and report.
pub fn run_method(
    method: Method,
    train: &FeatureTable,
    test: &FeatureTable,
    config: &GaConfig,
    granularity: Granularity,
    horizon: usize,
) -> Result<RunArtifacts> {
    let scaler = train
        .scaler
        .ok_or_else(|| Error::InvalidInput("train table is not normalized".into()))?;
    let horizon_label = match granularity {
        Granularity::Hourly => "hourly",
        Granularity::Daily => "daily",
    };
    let mut history = None;
    let mut best_chromosome = None;

    let (ts_model, cluster, som_model) = match method {
        Method::IMiner => {
            let outcome = evo::evolve(train, test, config)?;
            let e = outcome.evaluated;
            history = Some(outcome.history);
            best_chromosome = Some(outcome.best);
            (e.ts_model, Some(e.cluster_model), None)
        }
        Method::FcmOnly => {
            let data = cluster_features(train);
            let init = spread_init_centers(&data, BASELINE_CLUSTERS)?;
            let cm = fcm::fcm_run(
                &data,
                &init,
                config.fuzzifier,
                config.fcm_tol,
                config.fcm_max_iter,
            )?;
            let reindexed = assign_and_reindex(&cm, train)?;
            let samples = model_inputs(&reindexed, cm.centers.len())?;
            let base = grid_partition(4, config.mfs_per_input, &[(0.0, 1.0); 4])?;
            let tuned = fine_tune(
                &base,
                &samples,
                BASELINE_LEARN_RATE_PER_SAMPLE / samples.len() as f64,
                BASELINE_MOMENTUM,
                BASELINE_EPOCHS,
            )?;
            (tuned, Some(cm), None)
        }
        Method::SomBaseline => {
            let data = cluster_features(train);
            let (rows, cols) = SOM_GRID;
            let schedule = SomSchedule::standard(rows, cols, 10 * data.len());
            let sm = som::som_train(&data, rows, cols, &schedule, config.seed)?;
            let reindexed = assign_and_reindex_som(&sm, train)?;
            let samples = model_inputs(&reindexed, sm.node_count())?;
            let base = grid_partition(4, config.mfs_per_input, &[(0.0, 1.0); 4])?;
            let tuned = fine_tune(
                &base,
                &samples,
                BASELINE_LEARN_RATE_PER_SAMPLE / samples.len() as f64,
                BASELINE_MOMENTUM,
                BASELINE_EPOCHS,
            )?;
            (tuned, None, Some(sm))
        }
        Method::FisOnly => {
            let samples = model_inputs_no_cluster(train);
            let base = grid_partition(3, config.mfs_per_input, &[(0.0, 1.0); 3])?;
            let tuned = fine_tune(
                &base,
                &samples,
                BASELINE_LEARN_RATE_PER_SAMPLE / samples.len() as f64,
                BASELINE_MOMENTUM,
                BASELINE_EPOCHS,
            )?;
            (tuned, None, None)
        }
    };

    let bundle = ModelBundle {
        method,
        granularity,
        horizon,
        scaler,
        ts_model,
        cluster,
        som: som_model,
    };
    // tables here are already normalized; bundle.predict normalizes again,
    // so feed it the denormalized rows
    let train_predictions = bundle.predict(&train.denormalize()?)?;
    let test_predictions = bundle.predict(&test.denormalize()?)?;
    let clusters = match method {
        Method::IMiner | Method::FcmOnly => {
            bundle.cluster.as_ref().map(|c| c.centers.len())
        }
        Method::SomBaseline => bundle.som.as_ref().map(|s| s.node_count()),
        Method::FisOnly => None,
    };
    let report = report_from(
        method,
        horizon_label,
        &train_predictions,
        &test_predictions,
        Some(bundle.ts_model.rules.len()),
        clusters,
    )?;
    Ok(RunArtifacts {
        report,
        bundle,
        history,
        best_chromosome,
        train_predictions,
        test_predictions,
    })
}

/// Prediction CSV: `t,actual,predicted,trend` with a degree-6 polynomial
/// trend over the predicted series; values converted back to raw request
/// counts with the scaler.
pub fn predictions_to_csv(rows: &[PredictionRow], scaler: &Scaler) -> Result<String> {
    let predicted: Vec<f64> = rows
        .iter()
        .map(|r| scaler.invert_target(r.predicted))
        .collect();
    let trend = if predicted.len() >= 8 {
        metrics::polyfit_trend(&predicted, 6)?.fitted
    } else {
        predicted.clone()
    };
    let mut out = String::from("t,actual,predicted,trend\n");
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.time.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            scaler.invert_target(r.actual),
            predicted[i],
            trend[i]
        ));
    }
    Ok(out)
}

pub fn predictions_from_csv(text: &str) -> Result<Vec<(DateTime<Utc>, f64, f64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "t,actual,predicted,trend" {
                return Err(Error::InvalidInput(format!(
                    "unexpected prediction header `{line}`"
                )));
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::InvalidInput(format!("bad prediction row `{line}`")));
        }
        let t = DateTime::parse_from_rfc3339(parts[0])
            .map_err(|e| Error::InvalidInput(format!("bad time `{}`: {e}", parts[0])))?
            .with_timezone(&Utc);
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidInput(format!("bad number `{s}`")))
        };
        out.push((t, parse(parts[1])?, parse(parts[2])?, parse(parts[3])?));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("empty prediction file".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::build_features;
    use crate::synth::{generate, TrafficProfile};
    use chrono::NaiveDate;

    fn corpus(days: u32) -> FeatureTable {
        let start: NaiveDate = "2002-02-17".parse().unwrap();
        let series = generate(&TrafficProfile::default(), start, days, 11).unwrap();
        build_features(&series, 1).unwrap()
    }

    fn split_normalized(days: u32) -> (FeatureTable, FeatureTable) {
        let raw = corpus(days);
        let cut = raw.rows[raw.len() * 4 / 5].time;
        let (train_raw, test_raw) = raw.split(cut).unwrap();
        let train = train_raw.normalize().unwrap();
        let test = test_raw.normalize_with(train.scaler.unwrap());
        (train, test)
    }

    #[test]
    fn cluster_features_are_three_dimensional_and_span_unit_index() {
        let t = corpus(5).normalize().unwrap();
        let data = cluster_features(&t);
        assert_eq!(data.len(), t.len());
        assert!(data.iter().all(|p| p.len() == 3));
        assert_eq!(data.first().unwrap()[2], 0.0);
        assert_eq!(data.last().unwrap()[2], 1.0);
    }

    #[test]
    fn model_inputs_requires_clusters() {
        let t = corpus(5).normalize().unwrap();
        assert!(model_inputs(&t, 3).is_err());
        let assigned = t.reindex_by_cluster(&vec![0; t.len()]).unwrap();
        let samples = model_inputs(&assigned, 3).unwrap();
        assert_eq!(samples[0].0.len(), 4);
        assert!(samples.iter().all(|(x, _)| x[3] == 0.0));
    }

    #[test]
    fn no_cluster_inputs_are_three_dimensional() {
        let t = corpus(5).normalize().unwrap();
        let samples = model_inputs_no_cluster(&t);
        assert_eq!(samples.len(), t.len());
        assert!(samples.iter().all(|(x, _)| x.len() == 3));
    }

    #[test]
    fn spread_centers_distinct_and_counted() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.0]).collect();
        let c = spread_init_centers(&data, 5).unwrap();
        assert_eq!(c.len(), 5);
        for (i, a) in c.iter().enumerate() {
            for b in &c[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn spread_centers_insufficient_distinct_points() {
        let data = vec![vec![1.0], vec![1.0], vec![1.0]];
        assert!(spread_init_centers(&data, 2).is_err());
    }

    #[test]
    fn fis_only_learns_something_and_round_trips() {
        let (train, test) = split_normalized(20);
        let art = run_method(
            Method::FisOnly,
            &train,
            &test,
            &GaConfig::default(),
            Granularity::Hourly,
            1,
        )
        .unwrap();
        assert_eq!(art.report.method, "fis-only");
        assert_eq!(art.report.rules, Some(27));
        assert_eq!(art.report.clusters, None);
        assert!(art.report.train_rmse.is_finite());
        // an untrained model with zero consequents predicts 0 everywhere;
        // training must beat that
        let zero_rmse = {
            let actual: Vec<f64> = art.train_predictions.iter().map(|r| r.actual).collect();
            let zeros = vec![0.0; actual.len()];
            metrics::rmse(&zeros, &actual).unwrap()
        };
        assert!(art.report.train_rmse < zero_rmse);

        let json = serde_json::to_string(&art.bundle).unwrap();
        let back: ModelBundle = serde_json::from_str(&json).unwrap();
        let raw_test = test.denormalize().unwrap();
        assert_eq!(
            back.predict(&raw_test).unwrap(),
            art.bundle.predict(&raw_test).unwrap()
        );
    }

    #[test]
    fn fcm_method_attaches_cluster_model() {
        let (train, test) = split_normalized(12);
        let art = run_method(
            Method::FcmOnly,
            &train,
            &test,
            &GaConfig::default(),
            Granularity::Hourly,
            1,
        )
        .unwrap();
        assert_eq!(art.report.clusters, Some(BASELINE_CLUSTERS));
        assert!(art.bundle.cluster.is_some());
        assert_eq!(art.test_predictions.len(), test.len());
        // time-sorted output
        for w in art.test_predictions.windows(2) {
            assert!(w[0].time < w[1].time);
        }
    }

    #[test]
    fn som_method_uses_grid_nodes_as_clusters() {
        let (train, test) = split_normalized(12);
        let art = run_method(
            Method::SomBaseline,
            &train,
            &test,
            &GaConfig::default(),
            Granularity::Hourly,
            1,
        )
        .unwrap();
        assert_eq!(art.report.clusters, Some(9));
        assert!(art.bundle.som.is_some());
    }

    #[test]
    fn evolved_method_small_run_is_deterministic() {
        let (train, test) = split_normalized(10);
        let config = GaConfig {
            population_size: 6,
            max_generations: 3,
            gd_epochs: 3,
            c_max: 5,
            seed: 7,
            ..Default::default()
        };
        let a = run_method(Method::IMiner, &train, &test, &config, Granularity::Hourly, 1).unwrap();
        let b = run_method(Method::IMiner, &train, &test, &config, Granularity::Hourly, 1).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.history, b.history);
        assert_eq!(a.best_chromosome, b.best_chromosome);
        let h = a.history.unwrap();
        assert_eq!(h.len(), 3);
        for w in h.windows(2) {
            assert!(w[1].train_rmse <= w[0].train_rmse + 1e-12);
        }
    }

    #[test]
    fn prediction_csv_round_trip() {
        let (train, test) = split_normalized(10);
        let art = run_method(
            Method::FisOnly,
            &train,
            &test,
            &GaConfig::default(),
            Granularity::Hourly,
            1,
        )
        .unwrap();
        let csv = predictions_to_csv(&art.test_predictions, &art.bundle.scaler).unwrap();
        let rows = predictions_from_csv(&csv).unwrap();
        assert_eq!(rows.len(), art.test_predictions.len());
        let scaler = art.bundle.scaler;
        for (row, pred) in rows.iter().zip(&art.test_predictions) {
            assert_eq!(row.0, pred.time);
            assert!((row.2 - scaler.invert_target(pred.predicted)).abs() < 1e-9);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::IMiner,
            Method::FcmOnly,
            Method::SomBaseline,
            Method::FisOnly,
        ] {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("bogus").is_err());
    }
}
