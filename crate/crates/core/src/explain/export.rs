//! Long-format tables behind the explanation plots, as CSV or JSON.
//! Column order is fixed by field order; see `docs/explanations.md`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ContributionCurves, ExplainError, GlobalExplanation, LocalExplanation};
use crate::data::PatchLayout;
use crate::model::Decomposition;

pub const CONTRIBUTIONS_SCHEMA: &str = "patchdecomp.contributions";
pub const IMPORTANCE_SCHEMA: &str = "patchdecomp.importance";
pub const SCHEMA_VERSION: u32 = 1;

/// One contribution `c[h][j]`, or a baseline / prediction value when
/// `kind` is `baseline` or `prediction` (then the patch fields are empty).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContributionRecord {
    pub origin: usize,
    pub variable: String,
    pub kind: String,
    pub patch_slot: Option<usize>,
    pub flat_index: Option<usize>,
    pub h: usize,
    pub contribution: f64,
}

/// One cell of an importance map. `origin` is empty for test-set maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceRecord {
    pub origin: Option<usize>,
    pub n_windows: usize,
    pub variable: String,
    pub kind: String,
    pub patch_slot: usize,
    pub flat_index: usize,
    pub importance: f64,
    pub normalized: f64,
}

/// One point of a per-variable curve; `variable` is also `baseline` or
/// `prediction` for the two reference series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRecord {
    pub origin: usize,
    pub variable: String,
    pub h: usize,
    pub value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<C> {
    schema: String,
    version: u32,
    records: C,
}

/// Flattens a decomposition: patch rows in `(h, flat_index)` order, then
/// one baseline and one prediction row per step.
pub fn contribution_records(
    d: &Decomposition,
    layout: &PatchLayout,
    origin: usize,
) -> Vec<ContributionRecord> {
    let mut out = Vec::with_capacity(d.horizon() * (layout.n_patch() + 2));
    for (h, row) in d.contributions.iter().enumerate() {
        for e in layout.entries() {
            out.push(ContributionRecord {
                origin,
                variable: layout.variable_name(e.variable).to_string(),
                kind: e.kind.as_str().into(),
                patch_slot: Some(e.slot),
                flat_index: Some(e.flat_index),
                h,
                contribution: row[e.flat_index],
            });
        }
    }
    for (kind, values) in [("baseline", &d.baseline), ("prediction", &d.prediction)] {
        for (h, &v) in values.iter().enumerate() {
            out.push(ContributionRecord {
                origin,
                variable: kind.into(),
                kind: kind.into(),
                patch_slot: None,
                flat_index: None,
                h,
                contribution: v,
            });
        }
    }
    out
}

pub fn curve_records(c: &ContributionCurves) -> Vec<CurveRecord> {
    let named = c.variables.iter().map(String::as_str).zip(&c.curves);
    let refs = [("baseline", &c.baseline), ("prediction", &c.prediction)];
    named
        .chain(refs)
        .flat_map(|(name, values)| {
            values.iter().enumerate().map(move |(h, &value)| CurveRecord {
                origin: c.origin,
                variable: name.to_string(),
                h,
                value,
            })
        })
        .collect()
}

fn map_records(
    layout: &PatchLayout,
    origin: Option<usize>,
    n_windows: usize,
    importance: &[f64],
    normalized: &[f64],
) -> Vec<ImportanceRecord> {
    layout
        .entries()
        .iter()
        .map(|e| ImportanceRecord {
            origin,
            n_windows,
            variable: layout.variable_name(e.variable).to_string(),
            kind: e.kind.as_str().into(),
            patch_slot: e.slot,
            flat_index: e.flat_index,
            importance: importance[e.flat_index],
            normalized: normalized[e.flat_index],
        })
        .collect()
}

/// Map rows for any number of local explanations followed by an optional
/// test-set map.
pub fn importance_records(
    layout: &PatchLayout,
    locals: &[LocalExplanation],
    global: Option<&GlobalExplanation>,
) -> Vec<ImportanceRecord> {
    let mut out: Vec<ImportanceRecord> = locals
        .iter()
        .flat_map(|l| map_records(layout, Some(l.origin), 1, &l.importance, &l.normalized))
        .collect();
    if let Some(g) = global {
        out.extend(map_records(layout, None, g.n_windows, &g.importance, &g.normalized));
    }
    out
}

fn write_csv<R: Serialize>(records: &[R], path: &Path) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, ExplainError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn write_json<R: Serialize>(schema: &str, records: &[R], path: &Path) -> Result<(), ExplainError> {
    let env = Envelope {
        schema: schema.to_string(),
        version: SCHEMA_VERSION,
        records,
    };
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, &env)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn read_json<R: DeserializeOwned>(schema: &str, path: &Path) -> Result<Vec<R>, ExplainError> {
    let env: Envelope<Vec<R>> = serde_json::from_str(&fs::read_to_string(path)?)?;
    if env.schema != schema || env.version != SCHEMA_VERSION {
        return Err(ExplainError::Schema {
            found: env.schema,
            version: env.version,
        });
    }
    Ok(env.records)
}

pub fn write_contributions_csv(
    records: &[ContributionRecord],
    path: &Path,
) -> Result<(), ExplainError> {
    write_csv(records, path)
}

pub fn read_contributions_csv(path: &Path) -> Result<Vec<ContributionRecord>, ExplainError> {
    read_csv(path)
}

pub fn write_contributions_json(
    records: &[ContributionRecord],
    path: &Path,
) -> Result<(), ExplainError> {
    write_json(CONTRIBUTIONS_SCHEMA, records, path)
}

pub fn read_contributions_json(path: &Path) -> Result<Vec<ContributionRecord>, ExplainError> {
    read_json(CONTRIBUTIONS_SCHEMA, path)
}

pub fn write_importance_csv(records: &[ImportanceRecord], path: &Path) -> Result<(), ExplainError> {
    write_csv(records, path)
}

pub fn read_importance_csv(path: &Path) -> Result<Vec<ImportanceRecord>, ExplainError> {
    read_csv(path)
}

pub fn write_importance_json(
    records: &[ImportanceRecord],
    path: &Path,
) -> Result<(), ExplainError> {
    write_json(IMPORTANCE_SCHEMA, records, path)
}

pub fn read_importance_json(path: &Path) -> Result<Vec<ImportanceRecord>, ExplainError> {
    read_json(IMPORTANCE_SCHEMA, path)
}

pub fn write_curves_csv(records: &[CurveRecord], path: &Path) -> Result<(), ExplainError> {
    write_csv(records, path)
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<CurveRecord>, ExplainError> {
    read_csv(path)
}
