//! Labeled numeric matrices, class priors and stratified fold plans.
//!
//! Values are stored column-major: every stage of the pipeline walks one
//! variable across all samples, so each variable is a contiguous `Vec<f64>`.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the generator used to shuffle samples within each class.
pub const SHUFFLER: &str = "ChaCha8";

/// Selects the class column of a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassColumn {
    Name(String),
    /// Zero-based position; negative values count from the end (`-1` is the last column).
    Index(isize),
}

impl Default for ClassColumn {
    fn default() -> Self {
        ClassColumn::Index(-1)
    }
}

impl FromStr for ClassColumn {
    type Err = Error;

    /// `NAME` or `@INDEX`.
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix('@') {
            Some(idx) => idx
                .parse::<isize>()
                .map(ClassColumn::Index)
                .map_err(|_| Error::InvalidParameter(format!("bad class column index '{s}'"))),
            None if s.is_empty() => Err(Error::InvalidParameter("empty class column name".into())),
            None => Ok(ClassColumn::Name(s.to_string())),
        }
    }
}

impl fmt::Display for ClassColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassColumn::Name(n) => write!(f, "'{n}'"),
            ClassColumn::Index(i) => write!(f, "@{i}"),
        }
    }
}

impl ClassColumn {
    fn resolve(&self, header: &[String]) -> Result<usize> {
        match self {
            ClassColumn::Name(name) => header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingClassColumn(self.to_string())),
            ClassColumn::Index(i) => {
                let len = header.len() as isize;
                let pos = if *i < 0 { len + i } else { *i };
                if (0..len).contains(&pos) {
                    Ok(pos as usize)
                } else {
                    Err(Error::MissingClassColumn(self.to_string()))
                }
            }
        }
    }
}

/// A complete labeled matrix of `n` samples by `m` continuous variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    variable_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Vec<String>,
    classes: Vec<String>,
    class_of: Vec<usize>,
    var_lookup: HashMap<String, usize>,
}

impl Dataset {
    /// Builds a dataset from per-variable columns. Classes are the sorted
    /// distinct labels.
    pub fn new(variable_names: Vec<String>, columns: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("no samples"));
        }
        if variable_names.is_empty() {
            return Err(Error::Empty("no variables"));
        }
        if columns.len() != variable_names.len() {
            return Err(Error::DimensionMismatch {
                expected: variable_names.len(),
                actual: columns.len(),
            });
        }
        let n = labels.len();
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: col.len(),
                });
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::BadCell {
                    row: i + 1,
                    column: variable_names[j].clone(),
                    value: col[i].to_string(),
                });
            }
        }
        let mut var_lookup = HashMap::with_capacity(variable_names.len());
        for (j, name) in variable_names.iter().enumerate() {
            if var_lookup.insert(name.clone(), j).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate variable name '{name}'")));
            }
        }
        let mut classes = labels.clone();
        classes.sort();
        classes.dedup();
        let class_of = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label drawn from classes"))
            .collect();
        Ok(Dataset {
            variable_names,
            columns,
            labels,
            classes,
            class_of,
            var_lookup,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, class_column: &ClassColumn) -> Result<Self> {
        Self::load_csv_with(path, class_column, &[])
    }

    /// Like [`Dataset::load_csv`], skipping the columns named in `ignore`
    /// (sample identifiers, for instance).
    pub fn load_csv_with(path: impl AsRef<Path>, class_column: &ClassColumn, ignore: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader_with(file, class_column, ignore)
    }

    pub fn from_csv_reader<R: Read>(reader: R, class_column: &ClassColumn) -> Result<Self> {
        Self::from_csv_reader_with(reader, class_column, &[])
    }

    pub fn from_csv_reader_with<R: Read>(reader: R, class_column: &ClassColumn, ignore: &[String]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let class_idx = class_column.resolve(&header)?;
        let skip: Vec<bool> = header
            .iter()
            .enumerate()
            .map(|(j, h)| j == class_idx || ignore.contains(h))
            .collect();
        let variable_names: Vec<String> = header
            .iter()
            .zip(&skip)
            .filter(|(_, &s)| !s)
            .map(|(h, _)| h.clone())
            .collect();

        let mut columns = vec![Vec::new(); variable_names.len()];
        let mut labels = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let mut var = 0;
            for (j, cell) in record.iter().enumerate() {
                if j == class_idx {
                    labels.push(cell.to_string());
                    continue;
                }
                if skip[j] {
                    continue;
                }
                let value = parse_finite(cell).ok_or_else(|| Error::BadCell {
                    row: r + 1,
                    column: header[j].clone(),
                    value: cell.to_string(),
                })?;
                columns[var].push(value);
                var += 1;
            }
        }
        Self::new(variable_names, columns, labels)
    }

    /// Reads the named columns of an unlabeled CSV, in the order given. Other
    /// columns are ignored. Every row gets the empty label.
    pub fn load_csv_unlabeled(path: impl AsRef<Path>, keep: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader_unlabeled(file, keep)
    }

    pub fn from_csv_reader_unlabeled<R: Read>(reader: R, keep: &[String]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let positions = keep
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::UnknownVariable(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut columns = vec![Vec::new(); keep.len()];
        let mut n = 0;
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            for (col, &j) in columns.iter_mut().zip(&positions) {
                let cell = record.get(j).unwrap_or("");
                let value = parse_finite(cell).ok_or_else(|| Error::BadCell {
                    row: r + 1,
                    column: header[j].clone(),
                    value: cell.to_string(),
                })?;
                col.push(value);
            }
            n += 1;
        }
        Self::new(keep.to_vec(), columns, vec![String::new(); n])
    }

    /// Writes the dataset as CSV with the class in the last column. Values use
    /// the shortest representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W, class_header: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = self.variable_names.clone();
        header.push(class_header.to_string());
        wtr.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for i in 0..self.n_samples() {
            row.clear();
            row.extend(self.columns.iter().map(|c| format!("{:?}", c[i])));
            row.push(self.labels[i].clone());
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, class_header: &str) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), class_header)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.var_lookup.get(name).copied()
    }

    pub fn column(&self, var: usize) -> &[f64] {
        &self.columns[var]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Index into [`classes`](Self::classes) of every sample's label.
    pub fn class_indices(&self) -> &[usize] {
        &self.class_of
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &c in &self.class_of {
            counts[c] += 1;
        }
        counts
    }

    /// Sample positions grouped by class, in class order.
    pub fn rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.classes.len()];
        for (i, &c) in self.class_of.iter().enumerate() {
            rows[c].push(i);
        }
        rows
    }

    /// `|c| / n` for every class, aligned with [`classes`](Self::classes).
    pub fn class_priors(&self) -> Vec<f64> {
        let n = self.n_samples() as f64;
        self.class_counts().into_iter().map(|c| c as f64 / n).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Observed range `max - min` of a variable over all samples.
    pub fn range_of(&self, var: usize) -> f64 {
        let (lo, hi) = min_max(&self.columns[var]);
        hi - lo
    }

    /// A new dataset holding only the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        let labels = rows.iter().map(|&i| self.labels[i].clone()).collect();
        Dataset::new(self.variable_names.clone(), columns, labels)
    }
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Assignment of every sample to one of `k` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub shuffler: String,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Stratified k-fold assignment.
///
/// Every class contributes `floor(n_c / k)` or one more sample to each fold.
/// The folds receiving the extra samples start from a round-robin deal with
/// the position carried across classes, then extras are moved between folds
/// while that lowers the total amount by which fold proportions stray more
/// than `1 / fold_size` from the global class proportions. Samples of each
/// class are shuffled with a ChaCha8 generator seeded by `seed` before being
/// dealt into their folds.
pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("fold count must be at least 2, got {k}")));
    }
    if k > d.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "fold count {k} exceeds sample count {}",
            d.n_samples()
        )));
    }
    let class_sizes = d.class_counts();
    let counts = fold_class_counts(&class_sizes, k);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; d.n_samples()];
    for (c, mut rows) in d.rows_by_class().into_iter().enumerate() {
        rows.shuffle(&mut rng);
        let rounds = counts.iter().map(|f| f[c]).max().unwrap_or(0);
        let counts = &counts;
        let slots = (0..rounds).flat_map(|round| (0..k).filter(move |&f| counts[f][c] > round));
        for (i, f) in rows.into_iter().zip(slots) {
            assignments[i] = f;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
        shuffler: SHUFFLER.to_string(),
    })
}

/// Total excess of `|x/s - n_c/n|` over `1/s`, scaled by `n * s`.
fn proportion_excess(class_sizes: &[usize], counts: &[Vec<usize>]) -> i64 {
    let n: i64 = class_sizes.iter().sum::<usize>() as i64;
    counts
        .iter()
        .map(|fold| {
            let s: i64 = fold.iter().sum::<usize>() as i64;
            if s == 0 {
                return 0;
            }
            fold.iter()
                .zip(class_sizes)
                .map(|(&x, &nc)| ((x as i64 * n - nc as i64 * s).abs() - n).max(0))
                .sum::<i64>()
        })
        .sum()
}

/// Per fold, per class sample counts.
fn fold_class_counts(class_sizes: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n_classes = class_sizes.len();
    let mut counts = vec![vec![0; n_classes]; k];
    let mut next = 0;
    for (c, &nc) in class_sizes.iter().enumerate() {
        for _ in 0..nc {
            counts[next][c] += 1;
            next = (next + 1) % k;
        }
    }
    let mut current = proportion_excess(class_sizes, &counts);
    while current > 0 {
        let mut best: Option<(i64, usize, usize, usize)> = None;
        for c in 0..n_classes {
            let lo = counts.iter().map(|f| f[c]).min().unwrap_or(0);
            let holders: Vec<usize> = (0..k).filter(|&f| counts[f][c] == lo + 1).collect();
            let others: Vec<usize> = (0..k).filter(|&f| counts[f][c] == lo).collect();
            for &from in &holders {
                for &to in &others {
                    counts[from][c] -= 1;
                    counts[to][c] += 1;
                    let v = proportion_excess(class_sizes, &counts);
                    counts[from][c] += 1;
                    counts[to][c] -= 1;
                    if v < current && best.is_none_or(|b| v < b.0) {
                        best = Some((v, c, from, to));
                    }
                }
            }
        }
        let Some((v, c, from, to)) = best else { break };
        counts[from][c] -= 1;
        counts[to][c] += 1;
        current = v;
    }
    counts
}
