//! Hellinger distances between class-conditional densities.
//!
//! For every variable the class KDEs are evaluated on one grid spanning the
//! variable's range over all classes, normalised by their sum into discrete
//! distributions, and compared pairwise.

use std::f64::consts::FRAC_1_SQRT_2;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kde::{make_grid, KdeBank};

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution(Vec<f64>);

impl DiscreteDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub distribution: DiscreteDistribution,
    /// Set when the input summed to zero and the uniform distribution was
    /// substituted.
    pub degenerate: bool,
}

pub fn normalize_to_distribution(densities: &[f64]) -> Result<Normalized> {
    if densities.is_empty() {
        return Err(Error::Empty("density vector"));
    }
    if let Some((index, &value)) = densities.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
        return Err(Error::NegativeDensity { index, value });
    }
    let total: f64 = densities.iter().sum();
    if total > 0.0 && total.is_finite() {
        Ok(Normalized {
            distribution: DiscreteDistribution(densities.iter().map(|v| v / total).collect()),
            degenerate: false,
        })
    } else {
        let k = densities.len();
        Ok(Normalized {
            distribution: DiscreteDistribution(vec![1.0 / k as f64; k]),
            degenerate: true,
        })
    }
}

#[inline]
fn hellinger_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let ss: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    (FRAC_1_SQRT_2 * ss.sqrt()).min(1.0)
}

/// `(1/√2) ‖√p − √q‖₂`, in `[0, 1]`.
pub fn hellinger(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    Ok(hellinger_unchecked(&p.0, &q.0))
}

/// Position of the unordered pair `{i, j}` (`i != j`) among the
/// `k(k-1)/2` pairs of `k` classes, in lexicographic order.
pub fn pair_index(i: usize, j: usize, k: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * (2 * k - a - 1) / 2 + (b - a - 1)
}

/// `H(c_i, c_j | v)` for every variable and unordered class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellingerTable {
    variables: Vec<String>,
    classes: Vec<String>,
    /// Row-major `[variable][pair]`.
    values: Vec<f64>,
}

impl HellingerTable {
    /// Builds a table from raw `[variable][pair]` values. Intended for
    /// callers that already hold distances (tests, replays).
    pub fn from_values(variables: Vec<String>, classes: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let k = classes.len();
        let pairs = k * k.saturating_sub(1) / 2;
        if values.len() != variables.len() {
            return Err(Error::DimensionMismatch {
                expected: variables.len(),
                actual: values.len(),
            });
        }
        let mut flat = Vec::with_capacity(values.len() * pairs);
        for row in values {
            if row.len() != pairs {
                return Err(Error::DimensionMismatch {
                    expected: pairs,
                    actual: row.len(),
                });
            }
            if let Some(h) = row.iter().find(|h| !(0.0..=1.0).contains(*h)) {
                return Err(Error::InvalidParameter(format!("Hellinger distance {h} outside [0, 1]")));
            }
            flat.extend(row);
        }
        Ok(HellingerTable {
            variables,
            classes,
            values: flat,
        })
    }

    /// Distances from per-variable, per-class distributions indexed
    /// `[variable][class]`.
    pub fn from_distributions(
        variables: Vec<String>,
        classes: Vec<String>,
        dists: &[Vec<DiscreteDistribution>],
    ) -> Result<Self> {
        let k = classes.len();
        let pairs = k * k.saturating_sub(1) / 2;
        let rows: Vec<Vec<f64>> = dists
            .par_iter()
            .map(|per_class| {
                let mut row = Vec::with_capacity(pairs);
                for i in 0..k {
                    for j in i + 1..k {
                        row.push(hellinger(&per_class[i], &per_class[j])?);
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(rows.len() * pairs);
        rows.into_iter().for_each(|r| values.extend(r));
        Ok(HellingerTable {
            variables,
            classes,
            values,
        })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_pairs(&self) -> usize {
        let k = self.classes.len();
        k * k.saturating_sub(1) / 2
    }

    /// Number of stored entries, `m · k(k-1)/2`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Distance for variable `var` between classes `i` and `j` (by index).
    /// Zero when `i == j`.
    #[inline]
    pub fn get(&self, var: usize, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.values[var * self.n_pairs() + pair_index(i, j, self.classes.len())]
    }

    /// Distance by names.
    pub fn lookup(&self, variable: &str, class_i: &str, class_j: &str) -> Result<f64> {
        let v = self
            .variables
            .iter()
            .position(|x| x == variable)
            .ok_or_else(|| Error::UnknownVariable(variable.to_string()))?;
        let ci = self.class_position(class_i)?;
        let cj = self.class_position(class_j)?;
        Ok(self.get(v, ci, cj))
    }

    pub fn class_position(&self, class: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::UnknownClass(class.to_string()))
    }

    /// Rows `(variable, class_i, class_j, h)` with `i < j`, variable-major.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &str, f64)> + '_ {
        let k = self.classes.len();
        (0..self.variables.len()).flat_map(move |v| {
            (0..k).flat_map(move |i| {
                (i + 1..k).map(move |j| {
                    (
                        self.variables[v].as_str(),
                        self.classes[i].as_str(),
                        self.classes[j].as_str(),
                        self.get(v, i, j),
                    )
                })
            })
        })
    }

    /// TSV with header `variable  class_i  class_j  h`, six decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("variable\tclass_i\tclass_j\th\n");
        for (v, a, b, h) in self.entries() {
            out.push_str(&format!("{v}\t{a}\t{b}\t{h:.6}\n"));
        }
        out
    }
}

/// Evaluates every class KDE of every variable on the variable's shared grid
/// and normalises, giving distributions indexed `[variable][class]`.
pub fn grid_distributions(d: &Dataset, bank: &KdeBank, mu: usize) -> Result<Vec<Vec<DiscreteDistribution>>> {
    let k = d.n_classes();
    let out: Vec<(Vec<DiscreteDistribution>, usize)> = (0..d.n_vars())
        .into_par_iter()
        .map(|v| {
            let grid = make_grid(d.column(v), mu)?;
            let mut degenerate = 0;
            let dists = (0..k)
                .map(|c| {
                    let model = bank.get(c, v).ok_or_else(|| Error::IncompleteBank {
                        class: d.classes()[c].clone(),
                        variable: d.variable_names()[v].clone(),
                    })?;
                    let norm = normalize_to_distribution(&model.on_grid(&grid))?;
                    degenerate += norm.degenerate as usize;
                    Ok(norm.distribution)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((dists, degenerate))
        })
        .collect::<Result<_>>()?;
    let degenerate: usize = out.iter().map(|(_, n)| n).sum();
    if degenerate > 0 {
        warn!("{degenerate} class densities vanished on their grid and were replaced by uniform distributions");
    }
    Ok(out.into_iter().map(|(d, _)| d).collect())
}

/// Full Hellinger table for a dataset and a complete KDE bank.
pub fn hellinger_table(d: &Dataset, bank: &KdeBank, mu: usize) -> Result<HellingerTable> {
    let dists = grid_distributions(d, bank, mu)?;
    HellingerTable::from_distributions(d.variable_names().to_vec(), d.classes().to_vec(), &dists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kde::{BandwidthRule, KdeModel, KernelKind};
    use proptest::prelude::*;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        normalize_to_distribution(p).unwrap().distribution
    }

    #[test]
    fn normalization_cases() {
        assert_eq!(dist(&[1.0, 1.0, 1.0, 1.0]).probabilities(), [0.25; 4]);
        assert_eq!(dist(&[2.0, 0.0, 0.0]).probabilities(), [1.0, 0.0, 0.0]);
        let n = normalize_to_distribution(&[0.0, 0.0]).unwrap();
        assert!(n.degenerate);
        assert_eq!(n.distribution.probabilities(), [0.5, 0.5]);
        assert!(matches!(
            normalize_to_distribution(&[1.0, -0.5]),
            Err(Error::NegativeDensity { index: 1, .. })
        ));
        assert!(normalize_to_distribution(&[]).is_err());
    }

    #[test]
    fn hellinger_examples() {
        let p = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
        assert_eq!(hellinger(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(), 1.0);
        let h = hellinger(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap();
        assert!((h - 0.541_196_100_1).abs() < 1e-10);
        assert!(hellinger(&dist(&[1.0]), &dist(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn pair_indices_are_dense() {
        for k in 2..7 {
            let mut seen = Vec::new();
            for i in 0..k {
                for j in i + 1..k {
                    assert_eq!(pair_index(i, j, k), pair_index(j, i, k));
                    seen.push(pair_index(i, j, k));
                }
            }
            assert_eq!(seen, (0..k * (k - 1) / 2).collect::<Vec<_>>());
        }
    }

    fn two_var_dataset(a: Vec<f64>, b: Vec<f64>) -> Dataset {
        let labels: Vec<String> = (0..a.len()).map(|_| "A".into()).chain((0..b.len()).map(|_| "B".into())).collect();
        let mut col = a;
        col.extend(b);
        Dataset::new(vec!["v".into()], vec![col], labels).unwrap()
    }

    #[test]
    fn identical_class_samples_give_zero() {
        let s = vec![0.1, 0.5, 0.9, 1.4, 2.0];
        let d = two_var_dataset(s.clone(), s);
        let bank = KdeBank::fit(&d, KernelKind::Gaussian, BandwidthRule::Silverman).unwrap();
        let t = hellinger_table(&d, &bank, 50).unwrap();
        assert!(t.get(0, 0, 1) < 1e-9);
    }

    #[test]
    fn separated_classes_give_near_one() {
        let d = two_var_dataset(vec![0.0, 0.1, -0.1, 0.05], vec![1000.0, 1000.1, 999.9, 1000.05]);
        let bank = KdeBank::fit(&d, KernelKind::Gaussian, BandwidthRule::Silverman).unwrap();
        let t = hellinger_table(&d, &bank, 50).unwrap();
        assert!(t.get(0, 0, 1) >= 0.99);
        assert!(t.lookup("v", "B", "A").unwrap() >= 0.99);
    }

    #[test]
    fn table_shape_three_classes() {
        let labels: Vec<String> = ["A", "B", "C"].iter().flat_map(|c| std::iter::repeat_n(c.to_string(), 4)).collect();
        let cols = vec![(0..12).map(|i| i as f64).collect(), (0..12).map(|i| ((i * 7) % 5) as f64).collect()];
        let d = Dataset::new(vec!["x".into(), "y".into()], cols, labels).unwrap();
        let bank = KdeBank::fit(&d, KernelKind::Epanechnikov, BandwidthRule::Scott).unwrap();
        let t = hellinger_table(&d, &bank, 20).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.entries().count(), 6);
        let tsv = t.to_tsv();
        assert_eq!(tsv.lines().count(), 7);
        assert!(tsv.lines().nth(1).unwrap().starts_with("x\tA\tB\t"));
    }

    #[test]
    fn incomplete_bank_is_an_error() {
        let d = two_var_dataset(vec![0.0, 1.0], vec![2.0, 3.0]);
        let mut bank = KdeBank::empty(2, 1);
        bank.insert(0, 0, KdeModel::new(vec![0.0, 1.0], 1.0, KernelKind::Gaussian).unwrap());
        assert!(matches!(hellinger_table(&d, &bank, 10), Err(Error::IncompleteBank { .. })));
    }

    #[test]
    fn constant_variable_is_degenerate_but_defined() {
        let d = two_var_dataset(vec![3.0, 3.0, 3.0], vec![3.0, 3.0]);
        let bank = KdeBank::fit(&d, KernelKind::Gaussian, BandwidthRule::Silverman).unwrap();
        let t = hellinger_table(&d, &bank, 50).unwrap();
        assert_eq!(t.get(0, 0, 1), 0.0);
    }

    fn arb_dist(k: usize) -> impl Strategy<Value = DiscreteDistribution> {
        proptest::collection::vec(0.0f64..1.0, k).prop_map(|v| dist(&v))
    }

    proptest! {
        #[test]
        fn metric_properties((p, q, r) in (2usize..30).prop_flat_map(|k| (arb_dist(k), arb_dist(k), arb_dist(k)))) {
            let pq = hellinger(&p, &q).unwrap();
            let qp = hellinger(&q, &p).unwrap();
            prop_assert_eq!(pq, qp);
            prop_assert!((0.0..=1.0).contains(&pq));
            let pr = hellinger(&p, &r).unwrap();
            let rq = hellinger(&r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-9);
        }

        #[test]
        fn normalized_sums_to_one(v in proptest::collection::vec(0.0f64..1e6, 1..100)) {
            let n = normalize_to_distribution(&v).unwrap();
            let s: f64 = n.distribution.probabilities().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
