//! One-dimensional Parzen–Rosenblatt density estimation.
//!
//! Kernels are the Gaussian plus the symmetric beta-polynomial family
//! `K_s(u) = c_s (1 - u²)^s` on `|u| ≤ 1` with `c_s = (2s+1)!! / (2^{s+1} s!)`:
//! uniform (s = 0), Epanechnikov (1), biweight (2) and triweight (3). All of
//! them are second-order, non-negative and integrate to one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::dataset::{min_max, Dataset};
use crate::error::{Error, Result};

/// Default number of grid points used to discretise a density.
pub const DEFAULT_MU: usize = 50;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Uniform,
    Epanechnikov,
    Biweight,
    Triweight,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [
        KernelKind::Gaussian,
        KernelKind::Uniform,
        KernelKind::Epanechnikov,
        KernelKind::Biweight,
        KernelKind::Triweight,
    ];

    /// Exponent `s` of the beta-polynomial family, `None` for the Gaussian.
    pub fn beta_order(self) -> Option<u32> {
        match self {
            KernelKind::Gaussian => None,
            KernelKind::Uniform => Some(0),
            KernelKind::Epanechnikov => Some(1),
            KernelKind::Biweight => Some(2),
            KernelKind::Triweight => Some(3),
        }
    }

    /// Half-width of the support, infinite for the Gaussian.
    pub fn support(self) -> f64 {
        match self {
            KernelKind::Gaussian => f64::INFINITY,
            _ => 1.0,
        }
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelKind::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
            KernelKind::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelKind::Epanechnikov => beta_eval(0.75, 1, u),
            KernelKind::Biweight => beta_eval(15.0 / 16.0, 2, u),
            KernelKind::Triweight => beta_eval(35.0 / 32.0, 3, u),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Uniform => "uniform",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Biweight => "biweight",
            KernelKind::Triweight => "triweight",
        }
    }
}

#[inline]
fn beta_eval(coefficient: f64, s: i32, u: f64) -> f64 {
    if u.abs() <= 1.0 {
        coefficient * (1.0 - u * u).powi(s)
    } else {
        0.0
    }
}

/// `(2s+1)!! / (2^{s+1} s!)`, the normalising constant of the order-`s` beta kernel.
pub fn beta_coefficient(s: u32) -> f64 {
    let double_factorial: u64 = (1..=2 * s as u64 + 1).step_by(2).product();
    let factorial: u64 = (1..=s as u64).product();
    double_factorial as f64 / ((1u64 << (s + 1)) * factorial) as f64
}

pub fn kernel_eval(kind: KernelKind, u: f64) -> f64 {
    kind.eval(u)
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown kernel '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// `3.49 σ n^{-1/3}`
    Scott,
    /// `1.059 σ n^{-1/5}`
    #[default]
    Silverman,
    /// `0.9 min(σ, IQR/1.34) n^{-1/5}`
    SilvermanAdaptive,
}

impl BandwidthRule {
    pub const ALL: [BandwidthRule; 3] = [
        BandwidthRule::Scott,
        BandwidthRule::Silverman,
        BandwidthRule::SilvermanAdaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BandwidthRule::Scott => "scott",
            BandwidthRule::Silverman => "silverman",
            BandwidthRule::SilvermanAdaptive => "silverman-adaptive",
        }
    }

    /// The rule evaluated on summary statistics. May be zero or non-finite
    /// for degenerate inputs; [`bandwidth`] applies the fallback.
    pub fn from_stats(self, sigma: f64, iqr: f64, n: usize) -> f64 {
        let n = n as f64;
        match self {
            BandwidthRule::Scott => 3.49 * sigma * n.powf(-1.0 / 3.0),
            BandwidthRule::Silverman => 1.059 * sigma * n.powf(-0.2),
            BandwidthRule::SilvermanAdaptive => 0.9 * sigma.min(iqr / 1.34) * n.powf(-0.2),
        }
    }

    /// The rule applied to a sample, without fallback.
    pub fn raw(self, values: &[f64]) -> f64 {
        let sigma = sample_std(values);
        let iqr = match self {
            BandwidthRule::SilvermanAdaptive => interquartile_range(values),
            _ => 0.0,
        };
        self.from_stats(sigma, iqr, values.len())
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BandwidthRule::ALL
            .into_iter()
            .find(|r| r.name() == s || (r.name().replace('-', "_") == s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown bandwidth rule '{s}'")))
    }
}

/// Sample standard deviation with denominator `n - 1`; zero when `n < 2`.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Quantile by linear interpolation between order statistics at position
/// `(n - 1) p`. `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn interquartile_range(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)
}

/// Bandwidth used when a rule yields `h ≤ 0` or a non-finite value.
pub fn fallback_bandwidth(global_range: f64) -> f64 {
    let scaled = 1e-3 * global_range;
    if scaled.is_finite() {
        scaled.max(1e-9)
    } else {
        1e-9
    }
}

/// Applies `rule` to `values`, falling back to [`fallback_bandwidth`] of
/// `global_range` (the range of the variable over the whole dataset).
pub fn bandwidth_with_fallback(rule: BandwidthRule, values: &[f64], global_range: f64) -> f64 {
    let h = rule.raw(values);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        fallback_bandwidth(global_range)
    }
}

/// Applies `rule` to `values`, using the range of `values` itself as the
/// fallback scale.
pub fn bandwidth(rule: BandwidthRule, values: &[f64]) -> f64 {
    let (lo, hi) = min_max(values);
    bandwidth_with_fallback(rule, values, hi - lo)
}

/// A fitted univariate kernel density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    samples: Vec<f64>,
    h: f64,
    kernel: KernelKind,
}

impl KdeModel {
    pub fn new(samples: Vec<f64>, h: f64, kernel: KernelKind) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("KDE needs at least one sample"));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth must be finite and > 0, got {h}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("KDE samples must be finite".into()));
        }
        Ok(KdeModel { samples, h, kernel })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// `(1 / nh) Σ K((x - x_i) / h)`, summed over every sample.
    pub fn density_at(&self, x: f64) -> f64 {
        let inv_h = 1.0 / self.h;
        let sum: f64 = match self.kernel {
            KernelKind::Gaussian => {
                self.samples
                    .iter()
                    .map(|&xi| {
                        let u = (x - xi) * inv_h;
                        (-0.5 * u * u).exp()
                    })
                    .sum::<f64>()
                    * FRAC_1_SQRT_2PI
            }
            kernel => self.samples.iter().map(|&xi| kernel.eval((x - xi) * inv_h)).sum(),
        };
        sum * inv_h / self.samples.len() as f64
    }

    pub fn on_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.density_at(x)).collect()
    }
}

/// Fits a KDE with the bandwidth chosen by `rule` (fallback scale: the
/// sample's own range).
pub fn fit_kde(values: &[f64], kernel: KernelKind, rule: BandwidthRule) -> Result<KdeModel> {
    if values.is_empty() {
        return Err(Error::Empty("KDE needs at least one sample"));
    }
    KdeModel::new(values.to_vec(), bandwidth(rule, values), kernel)
}

pub fn kde_density_at(model: &KdeModel, x: f64) -> f64 {
    model.density_at(x)
}

pub fn kde_on_grid(model: &KdeModel, grid: &[f64]) -> Vec<f64> {
    model.on_grid(grid)
}

/// `mu` equally spaced points from the minimum to the maximum of `values`.
/// A constant variable yields the two-point grid `[c - 1, c + 1]`.
pub fn make_grid(values: &[f64], mu: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("grid needs at least one value"));
    }
    if mu < 2 {
        return Err(Error::InvalidParameter(format!("grid needs mu >= 2, got {mu}")));
    }
    let (lo, hi) = min_max(values);
    if lo == hi {
        return Ok(vec![lo - 1.0, lo + 1.0]);
    }
    let step = (hi - lo) / (mu - 1) as f64;
    let mut grid: Vec<f64> = (0..mu).map(|i| lo + step * i as f64).collect();
    grid[mu - 1] = hi;
    Ok(grid)
}

/// Fitted KDEs for (class, variable) pairs, indexed `[class][variable]`
/// against a dataset's class and variable order.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeBank {
    models: Vec<Vec<Option<KdeModel>>>,
}

impl KdeBank {
    pub fn empty(n_classes: usize, n_vars: usize) -> Self {
        KdeBank {
            models: vec![vec![None; n_vars]; n_classes],
        }
    }

    /// Fits every (class, variable) pair of `d`. Bandwidths that degenerate
    /// fall back to a fraction of the variable's range over all classes.
    pub fn fit(d: &Dataset, kernel: KernelKind, rule: BandwidthRule) -> Result<Self> {
        let bandwidths = class_bandwidths(d, rule);
        Self::from_bandwidths(d, kernel, &bandwidths)
    }

    /// Builds models for every (class, variable) pair from precomputed
    /// bandwidths indexed `[variable][class]`.
    pub fn from_bandwidths(d: &Dataset, kernel: KernelKind, bandwidths: &[Vec<f64>]) -> Result<Self> {
        let rows = d.rows_by_class();
        let per_var: Vec<Vec<KdeModel>> = (0..d.n_vars())
            .into_par_iter()
            .map(|v| {
                let col = d.column(v);
                rows.iter()
                    .zip(&bandwidths[v])
                    .map(|(r, &h)| KdeModel::new(r.iter().map(|&i| col[i]).collect(), h, kernel))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut bank = KdeBank::empty(d.n_classes(), d.n_vars());
        for (v, models) in per_var.into_iter().enumerate() {
            for (c, m) in models.into_iter().enumerate() {
                bank.models[c][v] = Some(m);
            }
        }
        Ok(bank)
    }

    pub fn insert(&mut self, class: usize, var: usize, model: KdeModel) {
        self.models[class][var] = Some(model);
    }

    pub fn get(&self, class: usize, var: usize) -> Option<&KdeModel> {
        self.models.get(class)?.get(var)?.as_ref()
    }

    pub fn n_classes(&self) -> usize {
        self.models.len()
    }
}

/// Bandwidth of every (variable, class) pair, indexed `[variable][class]`.
pub fn class_bandwidths(d: &Dataset, rule: BandwidthRule) -> Vec<Vec<f64>> {
    let rows = d.rows_by_class();
    (0..d.n_vars())
        .into_par_iter()
        .map(|v| {
            let col = d.column(v);
            let range = d.range_of(v);
            let mut buf = Vec::new();
            rows.iter()
                .map(|r| {
                    buf.clear();
                    buf.extend(r.iter().map(|&i| col[i]));
                    bandwidth_with_fallback(rule, &buf, range)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Composite Simpson rule; `n` must be even.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + h * i as f64);
        }
        s * h / 3.0
    }

    #[test]
    fn kernel_values() {
        assert!((kernel_eval(KernelKind::Gaussian, 0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(kernel_eval(KernelKind::Epanechnikov, 0.0), 0.75);
        assert_eq!(kernel_eval(KernelKind::Uniform, 1.5), 0.0);
        assert_eq!(kernel_eval(KernelKind::Triweight, 0.0), 35.0 / 32.0);
        assert_eq!(kernel_eval(KernelKind::Biweight, 1.0), 0.0);
        assert_eq!(kernel_eval(KernelKind::Epanechnikov, -2.0), 0.0);
    }

    #[test]
    fn beta_coefficients_are_exact() {
        assert_eq!(beta_coefficient(0), 0.5);
        assert_eq!(beta_coefficient(1), 0.75);
        assert_eq!(beta_coefficient(2), 15.0 / 16.0);
        assert_eq!(beta_coefficient(3), 35.0 / 32.0);
        for kind in KernelKind::ALL {
            if let Some(s) = kind.beta_order() {
                assert_eq!(kind.eval(0.0), beta_coefficient(s));
            }
        }
    }

    #[test]
    fn kernels_are_second_order_densities() {
        for kind in KernelKind::ALL {
            let w = if kind == KernelKind::Gaussian { 12.0 } else { 1.0 };
            let mass = simpson(|u| kind.eval(u), -w, w, 200_000);
            let first = simpson(|u| u * kind.eval(u), -w, w, 200_000);
            assert!((mass - 1.0).abs() < 1e-6, "{kind}: {mass}");
            assert!(first.abs() < 1e-9, "{kind}: {first}");
        }
    }

    #[test]
    fn bandwidth_examples() {
        assert!((BandwidthRule::Scott.from_stats(1.0, 0.0, 1) - 3.49).abs() < 1e-15);
        assert!((BandwidthRule::Silverman.from_stats(2.0, 0.0, 32) - 1.059).abs() < 1e-12);
        assert!((BandwidthRule::SilvermanAdaptive.from_stats(1.0, 1.34, 1) - 0.9).abs() < 1e-15);
        for rule in BandwidthRule::ALL {
            let h = bandwidth(rule, &[5.0, 5.0, 5.0]);
            assert!(h > 0.0 && h.is_finite());
        }
        assert_eq!(bandwidth_with_fallback(BandwidthRule::Silverman, &[5.0, 5.0], 20.0), 0.02);
        assert_eq!(bandwidth_with_fallback(BandwidthRule::Silverman, &[5.0], 0.0), 1e-9);
    }

    #[test]
    fn std_and_iqr() {
        assert_eq!(sample_std(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(sample_std(&[4.0]), 0.0);
        // positions 0.75 and 2.25 on [1, 2, 3, 4]
        assert_eq!(interquartile_range(&[4.0, 1.0, 3.0, 2.0]), 1.5);
    }

    #[test]
    fn tokens_round_trip() {
        for k in KernelKind::ALL {
            assert_eq!(k.to_string().parse::<KernelKind>().unwrap(), k);
        }
        for r in BandwidthRule::ALL {
            assert_eq!(r.to_string().parse::<BandwidthRule>().unwrap(), r);
        }
        assert!("cosine".parse::<KernelKind>().is_err());
        assert_eq!(
            serde_json::to_string(&BandwidthRule::SilvermanAdaptive).unwrap(),
            "\"silverman-adaptive\""
        );
    }

    #[test]
    fn density_examples() {
        let m = KdeModel::new(vec![0.0], 1.0, KernelKind::Gaussian).unwrap();
        assert!((m.density_at(0.0) - 0.398_942_280_4).abs() < 1e-10);
        let m = KdeModel::new(vec![-1.0, 1.0], 1.0, KernelKind::Gaussian).unwrap();
        assert!((m.density_at(0.0) - 0.241_970_724_5).abs() < 1e-10);
    }

    #[test]
    fn fit_kde_cases() {
        assert!(fit_kde(&[], KernelKind::Gaussian, BandwidthRule::Silverman).is_err());
        let m = fit_kde(&[0.0], KernelKind::Gaussian, BandwidthRule::Silverman).unwrap();
        assert_eq!(m.n(), 1);
        assert!(m.bandwidth() > 0.0);
        let m = fit_kde(&[3.0, 3.0, 3.0], KernelKind::Gaussian, BandwidthRule::Scott).unwrap();
        assert_eq!(m.bandwidth(), 1e-9);
        assert!(KdeModel::new(vec![1.0], 0.0, KernelKind::Gaussian).is_err());
    }

    #[test]
    fn grid_cases() {
        assert_eq!(make_grid(&[10.0, 0.0, 3.0], 5).unwrap(), [0.0, 2.5, 5.0, 7.5, 10.0]);
        assert_eq!(make_grid(&[4.0, 4.0], 50).unwrap(), [3.0, 5.0]);
        assert_eq!(make_grid(&[0.0, 1.0], DEFAULT_MU).unwrap().len(), 50);
        assert!(make_grid(&[0.0, 1.0], 1).is_err());
        assert!(make_grid(&[], 5).is_err());
    }

    #[test]
    fn grid_evaluation_matches_points() {
        let m = KdeModel::new(vec![0.3, 1.7, 2.2, 5.0], 0.8, KernelKind::Biweight).unwrap();
        let grid = make_grid(m.samples(), 50).unwrap();
        let dens = m.on_grid(&grid);
        assert_eq!(dens.len(), 50);
        assert!(dens.iter().sum::<f64>() > 0.0);
        for (x, d) in grid.iter().zip(&dens) {
            assert_eq!(d.to_bits(), m.density_at(*x).to_bits());
        }
    }

    proptest! {
        #[test]
        fn symmetric_samples_give_even_density(half in proptest::collection::vec(0.0f64..10.0, 1..10), x in -15.0f64..15.0, k in 0usize..5) {
            let mut samples = half.clone();
            samples.extend(half.iter().map(|v| -v));
            let m = KdeModel::new(samples, 0.7, KernelKind::ALL[k]).unwrap();
            let (a, b) = (m.density_at(x), m.density_at(-x));
            prop_assert!((a - b).abs() <= 1e-12 * a.max(b).max(1.0));
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn silverman_matches_hand_formula(values in proptest::collection::vec(-100.0f64..100.0, 2..60)) {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let expected = 1.059 * var.sqrt() / n.powf(0.2);
            let got = BandwidthRule::Silverman.raw(&values);
            prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }
}
