//! Class-specific variable selection driven by Hellinger distances.
//!
//! For a class `c_i` and subset `S`, the discriminatory power is
//! `D(S, c_i) = 1 - Π_{j≠i} Π_{v∈S} (1 - H(c_i, c_j | v))`. Selection is
//! greedy per class pair: for each other class `c_j` (in sorted order) the
//! residual `r = Π_{v∈S} (1 - H(c_i, c_j | v))` is first computed from the
//! variables already chosen, then the unchosen variable with the largest
//! `H(c_i, c_j | ·)` is appended until `1 - r > θ` or nothing is left.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hellinger::HellingerTable;

pub const DEFAULT_THETA: f64 = 0.999;

/// How equal distances are ordered during the greedy search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Lexicographically smaller variable name first.
    #[default]
    LexicographicVariable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub theta: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            theta: DEFAULT_THETA,
            tie_break: TieBreak::default(),
        }
    }
}

impl SelectionConfig {
    pub fn new(theta: f64) -> Result<Self> {
        let cfg = SelectionConfig {
            theta,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta > 0.0 && self.theta < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {}", self.theta)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairContribution {
    pub other_class: String,
    pub h: f64,
}

/// One variable chosen for a class, with the trace of how it got there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedVariable {
    pub variable: String,
    /// Column of the variable in the dataset the table was built from.
    pub index: usize,
    /// `H(c_i, c_j | v)` for every other class `c_j`.
    pub pairs: Vec<PairContribution>,
    /// Zero-based position in the class's selection order.
    pub step: usize,
    /// The other class whose pair triggered the addition.
    pub entered_for: String,
    /// `1 - r` of that pair right after the addition.
    pub pair_power: f64,
    /// `D(S, c_i)` of the selection prefix ending with this variable.
    pub class_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFeatures {
    pub class: String,
    pub variables: Vec<SelectedVariable>,
    /// True when every variable was taken and some pair still did not
    /// exceed θ.
    pub exhausted: bool,
}

impl ClassFeatures {
    pub fn indices(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.index).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.variable.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }
}

/// Selected variables per class, in class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFeatureMap {
    pub classes: Vec<ClassFeatures>,
}

impl ClassFeatureMap {
    pub fn get(&self, class: &str) -> Option<&ClassFeatures> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.classes.iter().map(ClassFeatures::len).collect()
    }

    /// `{class: [{variable, pairs: [{other_class, h}]}]}`
    pub fn to_json(&self) -> serde_json::Value {
        let mut out = serde_json::Map::new();
        for c in &self.classes {
            let vars = c
                .variables
                .iter()
                .map(|v| serde_json::json!({ "variable": v.variable, "pairs": v.pairs }))
                .collect();
            out.insert(c.class.clone(), serde_json::Value::Array(vars));
        }
        serde_json::Value::Object(out)
    }
}

/// `D(S, c_i)` for variable indices.
pub fn discriminatory_power_of(subset: &[usize], class: usize, table: &HellingerTable) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidParameter("discriminatory power of an empty subset".into()));
    }
    if class >= table.n_classes() {
        return Err(Error::UnknownClass(format!("#{class}")));
    }
    if let Some(&v) = subset.iter().find(|&&v| v >= table.n_vars()) {
        return Err(Error::UnknownVariable(format!("#{v}")));
    }
    let mut residual = 1.0;
    for j in (0..table.n_classes()).filter(|&j| j != class) {
        for &v in subset {
            residual *= 1.0 - table.get(v, class, j);
        }
    }
    Ok(1.0 - residual)
}

/// `D(S, c_i)` by variable and class names.
pub fn discriminatory_power(subset: &[&str], class: &str, table: &HellingerTable) -> Result<f64> {
    let idx = subset
        .iter()
        .map(|name| {
            table
                .variables()
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    discriminatory_power_of(&idx, table.class_position(class)?, table)
}

/// Variables ordered by decreasing `H(c_i, c_j | ·)`, ties by name.
fn pair_order(table: &HellingerTable, i: usize, j: usize, tie_break: TieBreak) -> Vec<usize> {
    let names = table.variables();
    let mut order: Vec<usize> = (0..table.n_vars()).collect();
    match tie_break {
        TieBreak::LexicographicVariable => order.sort_by(|&a, &b| {
            table
                .get(b, i, j)
                .total_cmp(&table.get(a, i, j))
                .then_with(|| names[a].cmp(&names[b]))
        }),
    }
    order
}

pub fn select_class_specific(table: &HellingerTable, cfg: &SelectionConfig) -> Result<ClassFeatureMap> {
    cfg.validate()?;
    let k = table.n_classes();
    let m = table.n_vars();
    if k < 2 {
        warn!("selection needs at least two classes; every class gets an empty subset");
    }

    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let orders: Vec<Vec<usize>> = pairs
        .par_iter()
        .map(|&(i, j)| pair_order(table, i, j, cfg.tie_break))
        .collect();
    let order_for = |i: usize, j: usize| -> &[usize] {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        &orders[crate::hellinger::pair_index(a, b, k)]
    };

    let classes = (0..k)
        .into_par_iter()
        .map(|i| {
            let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
            let mut chosen = vec![false; m];
            let mut selected: Vec<usize> = Vec::new();
            let mut records = Vec::new();
            // Residual of the whole class, Π over other classes and selected variables.
            let mut class_residual = 1.0;
            let mut exhausted = false;

            for &j in &others {
                let mut residual: f64 = selected.iter().map(|&v| 1.0 - table.get(v, i, j)).product();
                let order = order_for(i, j);
                let mut cursor = 0;
                while 1.0 - residual <= cfg.theta {
                    while cursor < m && chosen[order[cursor]] {
                        cursor += 1;
                    }
                    if cursor == m {
                        exhausted = true;
                        break;
                    }
                    let v = order[cursor];
                    chosen[v] = true;
                    selected.push(v);
                    residual *= 1.0 - table.get(v, i, j);
                    class_residual *= others.iter().map(|&o| 1.0 - table.get(v, i, o)).product::<f64>();
                    records.push(SelectedVariable {
                        variable: table.variables()[v].clone(),
                        index: v,
                        pairs: others
                            .iter()
                            .map(|&o| PairContribution {
                                other_class: table.classes()[o].clone(),
                                h: table.get(v, i, o),
                            })
                            .collect(),
                        step: records.len(),
                        entered_for: table.classes()[j].clone(),
                        pair_power: 1.0 - residual,
                        class_power: 1.0 - class_residual,
                    });
                }
            }
            ClassFeatures {
                class: table.classes()[i].clone(),
                variables: records,
                exhausted,
            }
        })
        .collect();
    Ok(ClassFeatureMap { classes })
}

/// One row of the per-class selection trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRow {
    pub class: String,
    pub variable: String,
    pub step: usize,
    pub pair: String,
    pub h: f64,
    pub cumulative_d: f64,
}

/// Selection trace for display: one block per class, one row per selected
/// variable, with the pair that pulled it in and the pair's `1 - r` reached.
pub fn explain_selection(map: &ClassFeatureMap) -> Vec<Vec<ExplanationRow>> {
    if map.classes.len() < 2 {
        warn!("no class pairs to explain");
        return Vec::new();
    }
    map.classes
        .iter()
        .map(|c| {
            c.variables
                .iter()
                .map(|v| ExplanationRow {
                    class: c.class.clone(),
                    variable: v.variable.clone(),
                    step: v.step,
                    pair: v.entered_for.clone(),
                    h: v.pairs
                        .iter()
                        .find(|p| p.other_class == v.entered_for)
                        .map_or(0.0, |p| p.h),
                    cumulative_d: v.pair_power,
                })
                .collect()
        })
        .collect()
}

/// 0/1 membership of every selected variable (union over classes, first
/// appearance order) in every class's subset. Returns the variable names and
/// the `[class][variable]` matrix.
pub fn membership_matrix(map: &ClassFeatureMap) -> (Vec<String>, Vec<Vec<u8>>) {
    let mut union: Vec<String> = Vec::new();
    for c in &map.classes {
        for v in &c.variables {
            if !union.contains(&v.variable) {
                union.push(v.variable.clone());
            }
        }
    }
    let matrix = map
        .classes
        .iter()
        .map(|c| {
            union
                .iter()
                .map(|u| c.variables.iter().any(|v| &v.variable == u) as u8)
                .collect()
        })
        .collect();
    (union, matrix)
}
