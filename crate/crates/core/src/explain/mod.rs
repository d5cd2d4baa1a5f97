//! Explanations built from decompositions: per-variable contribution
//! curves, per-window patch importance and test-set importance maps.

mod export;

pub use export::{
    contribution_records, curve_records, importance_records, read_contributions_csv,
    read_contributions_json, read_curves_csv, read_importance_csv, read_importance_json,
    write_contributions_csv, write_contributions_json, write_curves_csv, write_importance_csv,
    write_importance_json, ContributionRecord, CurveRecord, ImportanceRecord,
    CONTRIBUTIONS_SCHEMA, IMPORTANCE_SCHEMA, SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PatchLayout;
use crate::model::Decomposition;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("global explanation needs at least one window")]
    Empty,
    #[error("decomposition has {found} patches, layout has {expected}")]
    PatchCount { expected: usize, found: usize },
    #[error("explanation io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unexpected schema `{found}` version {version}")]
    Schema { found: String, version: u32 },
}

/// Patch importance for one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub origin: usize,
    /// `s[j] = sum_h |c[h][j]|`, in target units.
    pub importance: Vec<f64>,
    /// `s[j] / max_j s[j]`, all zero when every `s[j]` is zero.
    pub normalized: Vec<f64>,
    /// Sum of `s[j]` over each variable's patches.
    pub per_variable: Vec<f64>,
    pub max: f64,
}

/// Per-variable contribution series of one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionCurves {
    pub origin: usize,
    pub variables: Vec<String>,
    /// `curves[v][h]`
    pub curves: Vec<Vec<f64>>,
    pub baseline: Vec<f64>,
    pub prediction: Vec<f64>,
}

impl ContributionCurves {
    /// `max_h |baseline + sum_v curve_v - prediction| / (1 + |prediction|)`
    pub fn max_residual(&self) -> f64 {
        (0..self.prediction.len())
            .map(|h| {
                let total = self.baseline[h] + self.curves.iter().map(|c| c[h]).sum::<f64>();
                (total - self.prediction[h]).abs() / (1.0 + self.prediction[h].abs())
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    pub n_windows: usize,
    /// Mean local importance per flat patch index.
    pub importance: Vec<f64>,
    /// `importance / max`, all zero when every entry is zero.
    pub normalized: Vec<f64>,
}

impl GlobalExplanation {
    /// Flat indices sorted by decreasing importance, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        rank_desc(&self.importance)
    }
}

/// Indices of `values` by decreasing value; equal values keep index order.
pub fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

fn max_normalize(values: &[f64]) -> (f64, Vec<f64>) {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let normalized = if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    };
    (max, normalized)
}

fn check_patches(d: &Decomposition, layout: &PatchLayout) -> Result<(), ExplainError> {
    let found = d.n_patch();
    if found != layout.n_patch() {
        return Err(ExplainError::PatchCount {
            expected: layout.n_patch(),
            found,
        });
    }
    Ok(())
}

pub fn local_explain(
    d: &Decomposition,
    layout: &PatchLayout,
    origin: usize,
) -> Result<LocalExplanation, ExplainError> {
    check_patches(d, layout)?;
    let mut importance = vec![0.0; layout.n_patch()];
    for row in &d.contributions {
        for (s, c) in importance.iter_mut().zip(row) {
            *s += c.abs();
        }
    }
    let mut per_variable = vec![0.0; layout.n_variables()];
    for e in layout.entries() {
        per_variable[e.variable] += importance[e.flat_index];
    }
    let (max, normalized) = max_normalize(&importance);
    Ok(LocalExplanation {
        origin,
        importance,
        normalized,
        per_variable,
        max,
    })
}

pub fn variable_curves(
    d: &Decomposition,
    layout: &PatchLayout,
    origin: usize,
) -> Result<ContributionCurves, ExplainError> {
    check_patches(d, layout)?;
    let h = d.horizon();
    let mut curves = vec![vec![0.0; h]; layout.n_variables()];
    for (t, row) in d.contributions.iter().enumerate() {
        for e in layout.entries() {
            curves[e.variable][t] += row[e.flat_index];
        }
    }
    Ok(ContributionCurves {
        origin,
        variables: layout.variable_names().to_vec(),
        curves,
        baseline: d.baseline.clone(),
        prediction: d.prediction.clone(),
    })
}

/// Mean of local importances per patch. Each patch's values are summed in
/// sorted order, so the result does not depend on window order.
pub fn global_explain(locals: &[LocalExplanation]) -> Result<GlobalExplanation, ExplainError> {
    let first = locals.first().ok_or(ExplainError::Empty)?;
    let np = first.importance.len();
    if let Some(bad) = locals.iter().find(|l| l.importance.len() != np) {
        return Err(ExplainError::PatchCount {
            expected: np,
            found: bad.importance.len(),
        });
    }
    let n = locals.len() as f64;
    let importance: Vec<f64> = (0..np)
        .map(|j| {
            let mut col: Vec<f64> = locals.iter().map(|l| l.importance[j]).collect();
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / n
        })
        .collect();
    let (_, normalized) = max_normalize(&importance);
    Ok(GlobalExplanation {
        n_windows: locals.len(),
        importance,
        normalized,
    })
}
