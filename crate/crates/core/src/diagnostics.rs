//! Dataset characterisation: how many variables fail a normality test, and
//! how many are strongly dependent on another variable once the class is
//! accounted for.

use std::collections::HashMap;
use std::hash::Hash;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const SW_MIN_N: usize = 3;
pub const SW_MAX_N: usize = 5000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_P_MAX: f64 = 1e-6;
pub const DEFAULT_R_MIN: f64 = 0.7;
pub const DEFAULT_MAX_PAIRS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

/// Evaluates `c[0] + c[1] x + ... + c[len-1] x^{len-1}`.
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro–Wilk W and its p-value, using Royston's approximations for the
/// coefficients and for the null distribution of `log(1 - W)` (AS R94).
pub fn shapiro_wilk(values: &[f64]) -> Result<ShapiroWilk> {
    let n = values.len();
    if !(SW_MIN_N..=SW_MAX_N).contains(&n) {
        return Err(Error::SampleSize {
            n,
            min: SW_MIN_N,
            max: SW_MAX_N,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("Shapiro-Wilk input must be finite".into()));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range.is_nan() || range <= 0.0 {
        return Err(Error::ZeroVariance);
    }

    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let nn2 = n / 2;
    let an = n as f64;
    // a[1..=nn2], one-based as in the reference algorithm
    let mut a = vec![0.0; nn2 + 1];
    if n == 3 {
        a[1] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let an25 = an + 0.25;
        let mut summ2 = 0.0;
        for (i, ai) in a.iter_mut().enumerate().skip(1) {
            *ai = std_normal.inverse_cdf((i as f64 - 0.375) / an25);
            summ2 += *ai * *ai;
        }
        summ2 *= 2.0;
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - a[1] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -a[2] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * a[1] * a[1] - 2.0 * a[2] * a[2]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            a[2] = a2;
            (3, fac)
        } else {
            (2, ((summ2 - 2.0 * a[1] * a[1]) / (1.0 - 2.0 * a1 * a1)).sqrt())
        };
        a[1] = a1;
        for ai in a.iter_mut().skip(first) {
            *ai /= -fac;
        }
    }

    // Coefficient of the i-th order statistic (zero-based), antisymmetric.
    let coef = |i: usize| -> f64 {
        let j = n - 1 - i;
        match i.cmp(&j) {
            std::cmp::Ordering::Less => -a[i + 1],
            std::cmp::Ordering::Greater => a[j + 1],
            std::cmp::Ordering::Equal => 0.0,
        }
    };

    // W as the squared correlation between the scaled data and the coefficients.
    let xs: Vec<f64> = x.iter().map(|v| v / range).collect();
    let sx = xs.iter().sum::<f64>() / an;
    let sa = (0..n).map(coef).sum::<f64>() / an;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, xi) in xs.iter().enumerate() {
        let asa = coef(i) - sa;
        let xsx = xi - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    let p_value = if n == 3 {
        const PI6: f64 = 1.909_859_317_102_74;
        const STQR: f64 = std::f64::consts::FRAC_PI_3;
        (PI6 * (w.sqrt().asin() - STQR)).clamp(0.0, 1.0)
    } else {
        let y = w1.ln();
        let xx = an.ln();
        let (z, m, s) = if n <= 11 {
            const G: [f64; 2] = [-2.273, 0.459];
            const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
            const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
            let gamma = poly(&G, an);
            if y >= gamma {
                return Ok(ShapiroWilk { w, p_value: 1e-99 });
            }
            (-(gamma - y).ln(), poly(&C3, an), poly(&C4, an).exp())
        } else {
            const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
            const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
            (y, poly(&C5, xx), poly(&C6, xx).exp())
        };
        std_normal.sf((z - m) / s)
    };
    Ok(ShapiroWilk { w, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityRow {
    pub variable: String,
    pub w: Option<f64>,
    pub p_value: Option<f64>,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityScan {
    pub alpha: f64,
    pub rejection_ratio: f64,
    pub rejected: usize,
    /// Zero-variance variables, counted as rejections.
    pub zero_variance: usize,
    pub rows: Vec<NormalityRow>,
}

/// Fraction of variables whose Shapiro–Wilk p-value falls below `alpha`.
pub fn normality_scan(d: &Dataset, alpha: f64) -> Result<NormalityScan> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let n = d.n_samples();
    if !(SW_MIN_N..=SW_MAX_N).contains(&n) {
        return Err(Error::SampleSize {
            n,
            min: SW_MIN_N,
            max: SW_MAX_N,
        });
    }
    let rows: Vec<NormalityRow> = (0..d.n_vars())
        .into_par_iter()
        .map(|v| {
            let variable = d.variable_names()[v].clone();
            match shapiro_wilk(d.column(v)) {
                Ok(sw) => Ok(NormalityRow {
                    variable,
                    w: Some(sw.w),
                    p_value: Some(sw.p_value),
                    rejected: sw.p_value < alpha,
                }),
                Err(Error::ZeroVariance) => Ok(NormalityRow {
                    variable,
                    w: None,
                    p_value: None,
                    rejected: true,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let rejected = rows.iter().filter(|r| r.rejected).count();
    let zero_variance = rows.iter().filter(|r| r.w.is_none()).count();
    if zero_variance > 0 {
        info!("{zero_variance} zero-variance variables counted as non-normal");
    }
    Ok(NormalityScan {
        alpha,
        rejection_ratio: rejected as f64 / rows.len() as f64,
        rejected,
        zero_variance,
        rows,
    })
}

/// Each value minus the mean of its class: the residuals of regressing a
/// continuous variable on the categorical class.
pub fn within_class_residuals<L: Eq + Hash>(values: &[f64], labels: &[L]) -> Result<Vec<f64>> {
    if values.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            actual: labels.len(),
        });
    }
    let mut sums: HashMap<&L, (f64, usize)> = HashMap::new();
    for (v, l) in values.iter().zip(labels) {
        let e = sums.entry(l).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    Ok(values
        .iter()
        .zip(labels)
        .map(|(v, l)| {
            let (s, c) = sums[l];
            v - s / c as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiScanConfig {
    pub p_max: f64,
    pub r_min: f64,
    /// Pairs examined before switching to a seeded uniform sample of pairs.
    pub max_pairs: Option<usize>,
    pub seed: u64,
}

impl Default for CiScanConfig {
    fn default() -> Self {
        CiScanConfig {
            p_max: DEFAULT_P_MAX,
            r_min: DEFAULT_R_MIN,
            max_pairs: Some(DEFAULT_MAX_PAIRS),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPair {
    pub a: String,
    pub b: String,
    pub r: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiScan {
    pub config: CiScanConfig,
    /// Flagged variables over examined variables.
    pub dependent_ratio: f64,
    pub dependent_variables: usize,
    pub examined_variables: usize,
    pub examined_pairs: usize,
    pub total_pairs: usize,
    /// Pairs skipped because a residual vector had zero variance.
    pub skipped_pairs: usize,
    pub sampled: bool,
    pub flagged: Vec<FlaggedPair>,
    /// Per variable, the number of flagged pairs it belongs to.
    pub partner_counts: Vec<usize>,
}

/// Two-sided p-value of a Pearson correlation `r` over `n` samples, from
/// `t = r √((n-2)/(1-r²))` on `n - 2` degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    let r = r.clamp(-1.0, 1.0);
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Pair `{i, j}`, `i < j`, at linear position `idx` of the upper triangle.
fn decode_pair(idx: usize, m: usize) -> (usize, usize) {
    // start of row i is i(2m - i - 1)/2
    let start = |i: usize| i * (2 * m - i - 1) / 2;
    let (mut lo, mut hi) = (0, m - 1);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if start(mid) <= idx {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = if start(hi) <= idx { hi } else { lo };
    (i, i + 1 + idx - start(i))
}

pub fn conditional_independence_scan(d: &Dataset, cfg: &CiScanConfig) -> Result<CiScan> {
    let n = d.n_samples();
    if n < 4 {
        return Err(Error::SampleSize { n, min: 4, max: usize::MAX });
    }
    let m = d.n_vars();
    let labels = d.class_indices();
    // Centred residuals and their norms.
    let residuals: Vec<(Vec<f64>, f64)> = (0..m)
        .into_par_iter()
        .map(|v| {
            let mut res = within_class_residuals(d.column(v), labels).expect("lengths match");
            let mean = res.iter().sum::<f64>() / n as f64;
            res.iter_mut().for_each(|x| *x -= mean);
            let norm = res.iter().map(|x| x * x).sum::<f64>().sqrt();
            (res, norm)
        })
        .collect();

    let total_pairs = m * m.saturating_sub(1) / 2;
    let sampled = matches!(cfg.max_pairs, Some(cap) if cap < total_pairs);
    let pairs: Vec<(usize, usize)> = if sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = rand::seq::index::sample(&mut rng, total_pairs, cfg.max_pairs.unwrap_or(0)).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| decode_pair(i, m)).collect()
    } else {
        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
    };

    // Residual norms below this are treated as zero variance.
    let scale = |v: usize| d.column(v).iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    let tiny = |v: usize| residuals[v].1 <= 1e-12 * scale(v) * (n as f64).sqrt();
    let degenerate: Vec<bool> = (0..m).map(tiny).collect();

    let outcomes: Vec<Option<(f64, f64)>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            if degenerate[a] || degenerate[b] {
                return None;
            }
            let (ra, na) = &residuals[a];
            let (rb, nb) = &residuals[b];
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            let r = (dot / (na * nb)).clamp(-1.0, 1.0);
            Some((r, correlation_p_value(r, n)))
        })
        .collect();

    let mut examined = vec![false; m];
    let mut partner_counts = vec![0; m];
    let mut flagged = Vec::new();
    let mut skipped_pairs = 0;
    for (&(a, b), out) in pairs.iter().zip(&outcomes) {
        examined[a] = true;
        examined[b] = true;
        let Some((r, p)) = *out else {
            skipped_pairs += 1;
            continue;
        };
        if p < cfg.p_max && r.abs() > cfg.r_min {
            partner_counts[a] += 1;
            partner_counts[b] += 1;
            flagged.push(FlaggedPair {
                a: d.variable_names()[a].clone(),
                b: d.variable_names()[b].clone(),
                r,
                p_value: p,
            });
        }
    }
    if skipped_pairs > 0 {
        info!("{skipped_pairs} pairs skipped: zero-variance residuals");
    }
    let examined_variables = examined.iter().filter(|&&e| e).count();
    let dependent_variables = partner_counts.iter().filter(|&&c| c > 0).count();
    Ok(CiScan {
        config: *cfg,
        dependent_ratio: if examined_variables == 0 {
            0.0
        } else {
            dependent_variables as f64 / examined_variables as f64
        },
        dependent_variables,
        examined_variables,
        examined_pairs: pairs.len(),
        total_pairs,
        skipped_pairs,
        sampled,
        flagged,
        partner_counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub n_samples: usize,
    pub n_vars: usize,
    pub n_classes: usize,
    pub sw_rejection_ratio: f64,
    pub ci_dependent_ratio: f64,
    pub normality: NormalityScan,
    pub independence: CiScan,
    /// How the dependent ratio is counted.
    pub ci_ratio_definition: String,
}

impl DiagnosticsReport {
    /// `SW=0.57 P=0.58 (n=…, m=…, k=…)`
    pub fn summary(&self) -> String {
        format!(
            "SW={:.2} P={:.2} (n={}, m={}, k={}, alpha={}, pairs={}{})",
            self.sw_rejection_ratio,
            self.ci_dependent_ratio,
            self.n_samples,
            self.n_vars,
            self.n_classes,
            self.normality.alpha,
            self.independence.examined_pairs,
            if self.independence.sampled { ", sampled" } else { "" }
        )
    }
}

pub fn diagnose(d: &Dataset, alpha: f64, ci: &CiScanConfig) -> Result<DiagnosticsReport> {
    let normality = normality_scan(d, alpha)?;
    let independence = conditional_independence_scan(d, ci)?;
    Ok(DiagnosticsReport {
        schema_version: 1,
        n_samples: d.n_samples(),
        n_vars: d.n_vars(),
        n_classes: d.n_classes(),
        sw_rejection_ratio: normality.rejection_ratio,
        ci_dependent_ratio: independence.dependent_ratio,
        normality,
        independence,
        ci_ratio_definition: "variables in at least one flagged pair / variables examined".into(),
    })
}
