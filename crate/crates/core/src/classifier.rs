//! Class-specific KDE naive Bayes (XNB), its all-variables variant (FNB) and
//! the Gaussian naive Bayes baseline.
//!
//! Scores are log posteriors up to a constant:
//! `log P(c) + Σ_{v ∈ Ψ(c)} log max(f̂_v(x_v | c), floor)`, where `Ψ(c)` is the
//! class's own variable subset. Each class is scored on its own variables only.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hellinger::{grid_distributions, HellingerTable};
use crate::kde::{class_bandwidths, BandwidthRule, KdeBank, KdeModel, KernelKind, DEFAULT_MU};
use crate::selection::{select_class_specific, ClassFeatureMap, SelectionConfig, TieBreak, DEFAULT_THETA};

/// Version written to and required from model files.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gnb,
    Fnb,
    Xnb,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gnb => "gnb",
            Method::Fnb => "fnb",
            Method::Xnb => "xnb",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnb" | "nb" => Ok(Method::Gnb),
            "fnb" => Ok(Method::Fnb),
            "xnb" => Ok(Method::Xnb),
            _ => Err(Error::InvalidParameter(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XnbConfig {
    pub kernel: KernelKind,
    pub bandwidth: BandwidthRule,
    pub mu: usize,
    pub theta: f64,
    /// Lower bound applied to every density before taking its logarithm.
    pub floor: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for XnbConfig {
    fn default() -> Self {
        XnbConfig {
            kernel: KernelKind::default(),
            bandwidth: BandwidthRule::default(),
            mu: DEFAULT_MU,
            theta: DEFAULT_THETA,
            floor: DEFAULT_FLOOR,
            tie_break: TieBreak::default(),
        }
    }
}

impl XnbConfig {
    pub fn validate(&self) -> Result<()> {
        self.selection().validate()?;
        if self.mu < 2 {
            return Err(Error::InvalidParameter(format!("mu must be at least 2, got {}", self.mu)));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::InvalidParameter(format!("floor must be positive, got {}", self.floor)));
        }
        Ok(())
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            theta: self.theta,
            tie_break: self.tie_break,
        }
    }
}

/// Wall-clock time spent in each fitting stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub bandwidth: f64,
    pub kde: f64,
    pub hellinger: f64,
    pub select: f64,
    pub build: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.bandwidth + self.kde + self.hellinger + self.select + self.build
    }

    pub fn add(&mut self, other: &StageTimings) {
        self.bandwidth += other.bandwidth;
        self.kde += other.kde;
        self.hellinger += other.hellinger;
        self.select += other.select;
        self.build += other.build;
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Outcome of the class-of-a-sample decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub class_index: usize,
    /// Log score per class, aligned with the model's class order.
    pub log_scores: Vec<f64>,
    /// Number of univariate densities evaluated for this sample.
    pub density_evaluations: usize,
}

/// Index of the best score: highest score, then larger prior, then the
/// earlier (lexicographically smaller) class.
fn decide(scores: &[f64], priors: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..scores.len() {
        let better = scores[c] > scores[best] || (scores[c] == scores[best] && priors[c] > priors[best]);
        if better {
            best = c;
        }
    }
    best
}

fn check_classes(d: &Dataset) -> Result<()> {
    if d.n_classes() < 2 {
        return Err(Error::TooFewClasses(d.n_classes()));
    }
    for (class, count) in d.classes().iter().zip(d.class_counts()) {
        if count < 2 {
            warn!("class '{class}' has a single sample; its bandwidths use the degenerate fallback");
        }
    }
    Ok(())
}

/// A fitted XNB or FNB model.
#[derive(Debug, Clone, PartialEq)]
pub struct XnbModel {
    method: Method,
    config: XnbConfig,
    variables: Vec<String>,
    classes: Vec<String>,
    priors: Vec<f64>,
    /// Per class, `(variable index, density)` in selection order.
    kde: Vec<Vec<(usize, KdeModel)>>,
}

/// Everything produced while fitting, beyond the model itself.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: XnbModel,
    /// Present for XNB.
    pub selection: Option<ClassFeatureMap>,
    pub table: Option<HellingerTable>,
    pub timings: StageTimings,
}

/// Fits XNB: per-(class, variable) bandwidths and KDEs, Hellinger table,
/// class-specific selection, then KDEs refit on the selected variables only.
pub fn fit_xnb(d: &Dataset, cfg: &XnbConfig) -> Result<XnbModel> {
    fit_detailed(d, cfg, Method::Xnb).map(|f| f.model)
}

/// Fits FNB: the XNB pipeline without the Hellinger and selection stages.
pub fn fit_fnb(d: &Dataset, cfg: &XnbConfig) -> Result<XnbModel> {
    fit_detailed(d, cfg, Method::Fnb).map(|f| f.model)
}

pub fn fit_detailed(d: &Dataset, cfg: &XnbConfig, method: Method) -> Result<FitOutput> {
    cfg.validate()?;
    check_classes(d)?;
    let mut timings = StageTimings::default();

    let start = Instant::now();
    let bandwidths = class_bandwidths(d, cfg.bandwidth);
    timings.bandwidth = secs(start.elapsed());

    let (features, selection, table): (Vec<Vec<usize>>, _, _) = match method {
        Method::Xnb => {
            let start = Instant::now();
            let bank = KdeBank::from_bandwidths(d, cfg.kernel, &bandwidths)?;
            let dists = grid_distributions(d, &bank, cfg.mu)?;
            drop(bank);
            timings.kde = secs(start.elapsed());

            let start = Instant::now();
            let table = HellingerTable::from_distributions(d.variable_names().to_vec(), d.classes().to_vec(), &dists)?;
            timings.hellinger = secs(start.elapsed());

            let start = Instant::now();
            let selection = select_class_specific(&table, &cfg.selection())?;
            timings.select = secs(start.elapsed());
            let features = selection.classes.iter().map(|c| c.indices()).collect();
            (features, Some(selection), Some(table))
        }
        Method::Fnb => ((0..d.n_classes()).map(|_| (0..d.n_vars()).collect()).collect(), None, None),
        Method::Gnb => {
            return Err(Error::InvalidParameter("Gaussian NB is fitted with fit_gnb".into()));
        }
    };

    let start = Instant::now();
    let rows = d.rows_by_class();
    let kde = features
        .iter()
        .enumerate()
        .map(|(c, vars)| {
            vars.iter()
                .map(|&v| {
                    let col = d.column(v);
                    let samples = rows[c].iter().map(|&i| col[i]).collect();
                    Ok((v, KdeModel::new(samples, bandwidths[v][c], cfg.kernel)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    timings.build = secs(start.elapsed());

    let model = XnbModel {
        method,
        config: *cfg,
        variables: d.variable_names().to_vec(),
        classes: d.classes().to_vec(),
        priors: d.class_priors(),
        kde,
    };
    Ok(FitOutput {
        model,
        selection,
        table,
        timings,
    })
}

impl XnbModel {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &XnbConfig {
        &self.config
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// Variable indices used by each class, in selection order.
    pub fn feature_indices(&self) -> Vec<Vec<usize>> {
        self.kde.iter().map(|c| c.iter().map(|(v, _)| *v).collect()).collect()
    }

    /// Variable names used by each class, in selection order.
    pub fn features(&self) -> Vec<Vec<&str>> {
        self.kde
            .iter()
            .map(|c| c.iter().map(|(v, _)| self.variables[*v].as_str()).collect())
            .collect()
    }

    pub fn feature_counts(&self) -> Vec<usize> {
        self.kde.iter().map(Vec::len).collect()
    }

    pub fn density(&self, class: usize, var: usize) -> Option<&KdeModel> {
        self.kde.get(class)?.iter().find(|(v, _)| *v == var).map(|(_, m)| m)
    }

    pub fn predict(&self, sample: &[f64]) -> Result<Prediction> {
        if sample.len() != self.variables.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variables.len(),
                actual: sample.len(),
            });
        }
        if sample.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("sample contains non-finite values".into()));
        }
        let floor = self.config.floor;
        let mut evaluations = 0;
        let log_scores: Vec<f64> = self
            .kde
            .iter()
            .zip(&self.priors)
            .map(|(models, prior)| {
                evaluations += models.len();
                prior.ln()
                    + models
                        .iter()
                        .map(|(v, m)| m.density_at(sample[*v]).max(floor).ln())
                        .sum::<f64>()
            })
            .collect();
        let best = decide(&log_scores, &self.priors);
        Ok(Prediction {
            label: self.classes[best].clone(),
            class_index: best,
            log_scores,
            density_evaluations: evaluations,
        })
    }

    pub fn predict_dataset(&self, d: &Dataset) -> Result<Vec<Prediction>> {
        let cols = map_columns(&self.variables, d)?;
        (0..d.n_samples())
            .map(|i| {
                let row: Vec<f64> = cols.iter().map(|&j| d.column(j)[i]).collect();
                self.predict(&row)
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file = ModelFile {
            version: MODEL_SCHEMA_VERSION,
            method: self.method,
            config: self.config,
            pair_order: PAIR_ORDER.to_string(),
            classes: self.classes.clone(),
            priors: self.classes.iter().cloned().zip(self.priors.iter().copied()).collect(),
            variables: self.variables.clone(),
            features: self
                .classes
                .iter()
                .cloned()
                .zip(self.features().into_iter().map(|f| f.into_iter().map(str::to_string).collect()))
                .collect(),
            kde: self
                .classes
                .iter()
                .zip(&self.kde)
                .map(|(c, models)| {
                    let inner = models
                        .iter()
                        .map(|(v, m)| (self.variables[*v].clone(), m.clone()))
                        .collect();
                    (c.clone(), inner)
                })
                .collect(),
        };
        serde_json::to_value(file).expect("model serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Model("missing version".into()))?;
        if version != MODEL_SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                found: version as u32,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(serde_json::from_str(&text)?)
    }
}

pub fn predict_xnb(model: &XnbModel, sample: &[f64]) -> Result<Prediction> {
    model.predict(sample)
}

pub fn save_model(model: &XnbModel, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<XnbModel> {
    XnbModel::load(path)
}

/// Column in `d` of every name in `variables`.
fn map_columns(variables: &[String], d: &Dataset) -> Result<Vec<usize>> {
    variables
        .iter()
        .map(|v| d.variable_index(v).ok_or_else(|| Error::UnknownVariable(v.clone())))
        .collect()
}

const PAIR_ORDER: &str = "sorted-label";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    method: Method,
    config: XnbConfig,
    pair_order: String,
    classes: Vec<String>,
    priors: BTreeMap<String, f64>,
    variables: Vec<String>,
    features: BTreeMap<String, Vec<String>>,
    kde: BTreeMap<String, BTreeMap<String, KdeModel>>,
}

impl ModelFile {
    fn into_model(mut self) -> Result<XnbModel> {
        if self.classes.is_empty() {
            return Err(Error::Model("no classes".into()));
        }
        let lookup: std::collections::HashMap<&str, usize> =
            self.variables.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let mut priors = Vec::with_capacity(self.classes.len());
        let mut kde = Vec::with_capacity(self.classes.len());
        for class in &self.classes {
            let prior = *self
                .priors
                .get(class)
                .ok_or_else(|| Error::Model(format!("no prior for class '{class}'")))?;
            priors.push(prior);
            let names = self
                .features
                .get(class)
                .ok_or_else(|| Error::Model(format!("no features for class '{class}'")))?;
            let mut models = self.kde.remove(class).unwrap_or_default();
            let mut entries = Vec::with_capacity(names.len());
            for name in names {
                let v = *lookup
                    .get(name.as_str())
                    .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
                let m = models.remove(name).ok_or_else(|| Error::IncompleteBank {
                    class: class.clone(),
                    variable: name.clone(),
                })?;
                entries.push((v, KdeModel::new(m.samples().to_vec(), m.bandwidth(), m.kernel())?));
            }
            if let Some(extra) = models.keys().next() {
                return Err(Error::Model(format!("density for unselected variable '{extra}' in class '{class}'")));
            }
            kde.push(entries);
        }
        if let Some(extra) = self.kde.keys().next() {
            return Err(Error::Model(format!("densities for unknown class '{extra}'")));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!("priors sum to {total}")));
        }
        self.config.validate()?;
        Ok(XnbModel {
            method: self.method,
            config: self.config,
            variables: self.variables,
            classes: self.classes,
            priors,
            kde,
        })
    }
}

/// Gaussian naive Bayes over all variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub variables: Vec<String>,
    pub classes: Vec<String>,
    pub priors: Vec<f64>,
    /// `[class][variable]`
    pub means: Vec<Vec<f64>>,
    /// `[class][variable]`, smoothed.
    pub variances: Vec<Vec<f64>>,
    pub smoothing: f64,
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

/// Per-(class, variable) mean and `n - 1` variance; every variance is
/// increased by `1e-9` times the largest global per-variable variance.
pub fn fit_gnb(d: &Dataset) -> Result<GnbModel> {
    check_classes(d)?;
    let max_global = (0..d.n_vars())
        .map(|v| mean_var(d.column(v).iter().copied()).1)
        .fold(0.0, f64::max);
    let smoothing = if max_global > 0.0 { 1e-9 * max_global } else { 1e-9 };
    let rows = d.rows_by_class();
    let mut means = Vec::with_capacity(rows.len());
    let mut variances = Vec::with_capacity(rows.len());
    for r in &rows {
        let (mu, var): (Vec<f64>, Vec<f64>) = (0..d.n_vars())
            .map(|v| {
                let col = d.column(v);
                let (m, s2) = mean_var(r.iter().map(|&i| col[i]));
                (m, s2 + smoothing)
            })
            .unzip();
        means.push(mu);
        variances.push(var);
    }
    Ok(GnbModel {
        variables: d.variable_names().to_vec(),
        classes: d.classes().to_vec(),
        priors: d.class_priors(),
        means,
        variances,
        smoothing,
    })
}

impl GnbModel {
    pub fn predict(&self, sample: &[f64]) -> Result<Prediction> {
        if sample.len() != self.variables.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variables.len(),
                actual: sample.len(),
            });
        }
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let log_scores: Vec<f64> = (0..self.classes.len())
            .map(|c| {
                self.priors[c].ln()
                    + sample
                        .iter()
                        .zip(self.means[c].iter().zip(&self.variances[c]))
                        .map(|(x, (mu, var))| -0.5 * (ln_2pi + var.ln()) - (x - mu) * (x - mu) / (2.0 * var))
                        .sum::<f64>()
            })
            .collect();
        let best = decide(&log_scores, &self.priors);
        Ok(Prediction {
            label: self.classes[best].clone(),
            class_index: best,
            log_scores,
            density_evaluations: self.classes.len() * self.variables.len(),
        })
    }

    pub fn predict_dataset(&self, d: &Dataset) -> Result<Vec<Prediction>> {
        let cols = map_columns(&self.variables, d)?;
        (0..d.n_samples())
            .map(|i| {
                let row: Vec<f64> = cols.iter().map(|&j| d.column(j)[i]).collect();
                self.predict(&row)
            })
            .collect()
    }
}

pub fn predict_gnb(model: &GnbModel, sample: &[f64]) -> Result<Prediction> {
    model.predict(sample)
}
