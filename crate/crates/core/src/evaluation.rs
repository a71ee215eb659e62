//! Stratified cross-validation comparing GNB, FNB and XNB.

use std::io::Write;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::classifier::{fit_detailed, fit_gnb, Method, Prediction, StageTimings, XnbConfig};
use crate::dataset::{stratified_kfold, Dataset};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_FOLDS: usize = 10;

pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], truth: &[T]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("accuracy of an empty prediction set"));
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Per fold, the number of variables each training class used.
    pub fold_feature_counts: Vec<Vec<usize>>,
    /// Per fold, the mean over classes of the counts above.
    pub fold_mean_features: Vec<f64>,
    /// Mean over folds of `fold_mean_features`.
    pub mean_features: f64,
    /// Per fold, the training classes the counts refer to.
    pub fold_classes: Vec<Vec<String>>,
    /// Per fold, selected variable names per class (XNB only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fold_selected: Vec<Vec<Vec<String>>>,
    /// Wall-clock seconds per fold for fitting and predicting.
    pub fold_fit_seconds: Vec<f64>,
    pub fold_predict_seconds: Vec<f64>,
    /// Fitting stages summed over folds (KDE methods only).
    pub stage_seconds: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub n_samples: usize,
    pub n_vars: usize,
    pub classes: Vec<String>,
    pub folds: usize,
    pub seed: u64,
    pub shuffler: String,
    pub config: XnbConfig,
    pub methods: Vec<MethodResult>,
}

impl EvaluationReport {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }

    /// The report with every timing field zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> EvaluationReport {
        let mut r = self.clone();
        for m in &mut r.methods {
            m.fold_fit_seconds.iter_mut().for_each(|t| *t = 0.0);
            m.fold_predict_seconds.iter_mut().for_each(|t| *t = 0.0);
            m.stage_seconds = StageTimings::default();
        }
        r
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tmean_accuracy\tmean_vars\n");
        for m in &self.methods {
            out.push_str(&format!("{}\t{:.3}\t{:.1}\n", m.method, m.mean_accuracy, m.mean_features));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Tsv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "tsv" => Ok(ReportFormat::Tsv),
            _ => Err(Error::InvalidParameter(format!("unknown format '{s}'"))),
        }
    }
}

pub fn emit_report<W: Write>(report: &EvaluationReport, format: ReportFormat, mut out: W) -> Result<()> {
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Tsv => report.to_tsv(),
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<report output>", e))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Runs stratified `k`-fold cross-validation of every method in `methods`.
/// Fold assignment depends only on the dataset, `k` and `seed`.
pub fn evaluate_cv(d: &Dataset, methods: &[Method], k: usize, seed: u64, cfg: &XnbConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods to evaluate".into()));
    }
    let smallest = d.class_counts().into_iter().min().unwrap_or(0);
    if k > smallest {
        warn!("{k} folds exceed the smallest class size {smallest}; some folds miss that class");
    }
    let plan = stratified_kfold(d, k, seed)?;

    let mut results: Vec<MethodResult> = methods
        .iter()
        .map(|&method| MethodResult {
            method,
            fold_accuracies: Vec::with_capacity(k),
            mean_accuracy: 0.0,
            fold_feature_counts: Vec::with_capacity(k),
            fold_mean_features: Vec::with_capacity(k),
            mean_features: 0.0,
            fold_classes: Vec::with_capacity(k),
            fold_selected: Vec::new(),
            fold_fit_seconds: Vec::with_capacity(k),
            fold_predict_seconds: Vec::with_capacity(k),
            stage_seconds: StageTimings::default(),
        })
        .collect();

    for fold in 0..k {
        let wrap = |e: Error| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let train = d.subset(&plan.train_indices(fold)).map_err(wrap)?;
        let test_rows = plan.test_indices(fold);
        if test_rows.is_empty() {
            return Err(wrap(Error::Empty("test fold")));
        }
        let test = d.subset(&test_rows).map_err(wrap)?;

        for result in &mut results {
            let start = Instant::now();
            let (preds, counts, selected): (Vec<Prediction>, Vec<usize>, Option<Vec<Vec<String>>>) = match result.method {
                Method::Gnb => {
                    let model = fit_gnb(&train).map_err(wrap)?;
                    result.fold_fit_seconds.push(start.elapsed().as_secs_f64());
                    let start = Instant::now();
                    let preds = model.predict_dataset(&test).map_err(wrap)?;
                    result.fold_predict_seconds.push(start.elapsed().as_secs_f64());
                    (preds, vec![train.n_vars(); train.n_classes()], None)
                }
                method => {
                    let fit = fit_detailed(&train, cfg, method).map_err(wrap)?;
                    result.fold_fit_seconds.push(start.elapsed().as_secs_f64());
                    result.stage_seconds.add(&fit.timings);
                    let start = Instant::now();
                    let preds = fit.model.predict_dataset(&test).map_err(wrap)?;
                    result.fold_predict_seconds.push(start.elapsed().as_secs_f64());
                    let selected = (method == Method::Xnb).then(|| {
                        fit.model
                            .features()
                            .into_iter()
                            .map(|f| f.into_iter().map(str::to_string).collect())
                            .collect()
                    });
                    (preds, fit.model.feature_counts(), selected)
                }
            };
            let labels: Vec<&str> = preds.iter().map(|p| p.label.as_str()).collect();
            result.fold_accuracies.push(accuracy(&labels, test.labels()).map_err(wrap)?);
            result
                .fold_mean_features
                .push(counts.iter().sum::<usize>() as f64 / counts.len() as f64);
            result.fold_feature_counts.push(counts);
            result.fold_classes.push(train.classes().to_vec());
            if let Some(s) = selected {
                result.fold_selected.push(s);
            }
        }
    }

    for r in &mut results {
        r.mean_accuracy = mean(&r.fold_accuracies);
        r.mean_features = mean(&r.fold_mean_features);
    }
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n_samples: d.n_samples(),
        n_vars: d.n_vars(),
        classes: d.classes().to_vec(),
        folds: k,
        seed,
        shuffler: plan.shuffler,
        config: *cfg,
        methods: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
        assert_eq!(accuracy(&["b", "a"], &["a", "b"]).unwrap(), 0.0);
        assert_eq!(accuracy(&["a", "a", "b", "a"], &["a", "a", "b", "b"]).unwrap(), 0.75);
        assert!(accuracy(&["a"], &["a", "b"]).is_err());
        assert!(accuracy::<&str, &str>(&[], &[]).is_err());
    }

    fn blobs(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 60;
        let labels: Vec<String> = (0..n).map(|i| ["A", "B", "C"][i % 3].to_string()).collect();
        let cols = (0..8)
            .map(|v| {
                (0..n)
                    .map(|i| normal.sample(&mut rng) + if v == i % 3 { 6.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        Dataset::new((0..8).map(|v| format!("g{v}")).collect(), cols, labels).unwrap()
    }

    #[test]
    fn report_contents_and_determinism() {
        let d = blobs(1);
        let cfg = XnbConfig::default();
        let r = evaluate_cv(&d, &[Method::Gnb, Method::Fnb, Method::Xnb], 5, 3, &cfg).unwrap();
        assert_eq!(r.methods.len(), 3);
        for m in &r.methods {
            assert_eq!(m.fold_accuracies.len(), 5);
            assert!((m.mean_accuracy - mean(&m.fold_accuracies)).abs() < 1e-15);
            assert!(m.fold_accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
        }
        let x = r.method(Method::Xnb).unwrap();
        assert!(x.mean_features <= 8.0);
        assert_eq!(x.fold_selected.len(), 5);
        assert_eq!(r.method(Method::Fnb).unwrap().mean_features, 8.0);
        assert!(x.stage_seconds.hellinger > 0.0);

        let again = evaluate_cv(&d, &[Method::Gnb, Method::Fnb, Method::Xnb], 5, 3, &cfg).unwrap();
        assert_eq!(r.without_timings(), again.without_timings());
    }

    #[test]
    fn tsv_and_json_emission() {
        let d = blobs(2);
        let r = evaluate_cv(&d, &[Method::Gnb, Method::Xnb], 3, 0, &XnbConfig::default()).unwrap();
        let mut tsv = Vec::new();
        emit_report(&r, ReportFormat::Tsv, &mut tsv).unwrap();
        let tsv = String::from_utf8(tsv).unwrap();
        assert_eq!(tsv.lines().count(), 3);
        assert!(tsv.lines().nth(2).unwrap().starts_with("xnb\t"));

        let mut json = Vec::new();
        emit_report(&r, ReportFormat::Json, &mut json).unwrap();
        let back: EvaluationReport = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, r);
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        for stage in ["bandwidth", "kde", "hellinger", "select", "build"] {
            assert!(v["methods"][1]["stage_seconds"][stage].is_number());
        }
    }

    #[test]
    fn too_many_folds_fail() {
        let d = blobs(3);
        assert!(evaluate_cv(&d, &[Method::Xnb], 61, 0, &XnbConfig::default()).is_err());
        assert!(evaluate_cv(&d, &[], 3, 0, &XnbConfig::default()).is_err());
    }
}
