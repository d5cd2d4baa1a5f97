//! Patch layout: which time points of which variable land in which patch.
//!
//! Patches are cut backwards from the forecast origin, so when `P` does not
//! divide `L` the zero padding sits at the earliest lookback positions and
//! the patch adjacent to the origin is fully observed. Horizon patches of
//! future-known variables are padded at the end.
//!
//! Flat patch order: the target's lookback patches, then each historical
//! exogenous variable's lookback patches, then each future-known variable's
//! lookback patches followed by its horizon patches. `flat_index` on each
//! entry is the single source of truth for that order.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{DataError, WindowSample};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Target,
    HistExog,
    FutrExog,
}

impl VariableKind {
    pub const ALL: [VariableKind; 3] = [Self::Target, Self::HistExog, Self::FutrExog];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Target => "target",
            Self::HistExog => "hist_exog",
            Self::FutrExog => "futr_exog",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchEntry {
    pub flat_index: usize,
    /// 0 = target, then hist_exog, then futr_exog.
    pub variable: usize,
    pub kind: VariableKind,
    /// Position slot: `0..n_hist` for lookback, `n_hist..n_hist + n_futr`
    /// for horizon patches.
    pub slot: usize,
    /// Observed points of the variable's window series covered by the
    /// patch. The series is the lookback (length `L`) for target and
    /// hist_exog, lookback followed by horizon (length `L + H`) for
    /// futr_exog.
    pub series_range: Range<usize>,
    /// Leading zeros inside the patch before the first observed point.
    pub pad_lead: usize,
}

impl PatchEntry {
    /// Time steps relative to the forecast origin (0 = last observed
    /// point, 1 = first horizon step) covered by observed values.
    pub fn time_offsets(&self, lookback: usize) -> Range<isize> {
        let shift = lookback as isize - 1;
        (self.series_range.start as isize - shift)..(self.series_range.end as isize - shift)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchLayout {
    pub patch_len: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub n_hist: usize,
    pub n_futr: usize,
    /// Zeros prepended to the lookback.
    pub pad_hist: usize,
    /// Zeros appended to the horizon.
    pub pad_futr: usize,
    pub d_hist: usize,
    pub d_futr: usize,
    entries: Vec<PatchEntry>,
    variable_names: Vec<String>,
}

pub fn build_layout(
    lookback: usize,
    horizon: usize,
    patch_len: usize,
    d_hist: usize,
    d_futr: usize,
) -> Result<PatchLayout, DataError> {
    if patch_len == 0 || lookback == 0 || horizon == 0 {
        return Err(DataError::InvalidWindow(format!(
            "lookback ({lookback}), horizon ({horizon}) and patch length ({patch_len}) must be at least 1"
        )));
    }
    let n_hist = lookback.div_ceil(patch_len);
    let n_futr = horizon.div_ceil(patch_len);
    let pad_hist = n_hist * patch_len - lookback;
    let pad_futr = n_futr * patch_len - horizon;

    let mut entries = Vec::new();
    let mut push = |variable: usize, kind: VariableKind, slot: usize| {
        let (series_range, pad_lead) = if slot < n_hist {
            let lo = slot * patch_len;
            let hi = lo + patch_len;
            (lo.max(pad_hist) - pad_hist..hi - pad_hist, pad_hist.saturating_sub(lo).min(patch_len))
        } else {
            let lo = lookback + (slot - n_hist) * patch_len;
            (lo..(lo + patch_len).min(lookback + horizon), 0)
        };
        let flat_index = entries.len();
        entries.push(PatchEntry {
            flat_index,
            variable,
            kind,
            slot,
            series_range,
            pad_lead,
        });
    };
    for slot in 0..n_hist {
        push(0, VariableKind::Target, slot);
    }
    for v in 0..d_hist {
        for slot in 0..n_hist {
            push(1 + v, VariableKind::HistExog, slot);
        }
    }
    for v in 0..d_futr {
        for slot in 0..n_hist + n_futr {
            push(1 + d_hist + v, VariableKind::FutrExog, slot);
        }
    }

    let variable_names = std::iter::once("y".to_string())
        .chain((1..=d_hist).map(|i| format!("hist_{i}")))
        .chain((1..=d_futr).map(|i| format!("futr_{i}")))
        .collect();
    Ok(PatchLayout {
        patch_len,
        lookback,
        horizon,
        n_hist,
        n_futr,
        pad_hist,
        pad_futr,
        d_hist,
        d_futr,
        entries,
        variable_names,
    })
}

impl PatchLayout {
    /// Closed form `(1 + D_hist + D_futr) * N_hist + D_futr * N_futr`.
    pub fn n_patch(&self) -> usize {
        (1 + self.d_hist + self.d_futr) * self.n_hist + self.d_futr * self.n_futr
    }

    pub fn n_slots(&self) -> usize {
        self.n_hist + self.n_futr
    }

    pub fn n_variables(&self) -> usize {
        1 + self.d_hist + self.d_futr
    }

    pub fn entries(&self) -> &[PatchEntry] {
        &self.entries
    }

    pub fn entry(&self, flat_index: usize) -> Option<&PatchEntry> {
        self.entries.get(flat_index)
    }

    pub fn variable_kind(&self, variable: usize) -> VariableKind {
        if variable == 0 {
            VariableKind::Target
        } else if variable <= self.d_hist {
            VariableKind::HistExog
        } else {
            VariableKind::FutrExog
        }
    }

    /// Flat indices of every patch of one kind; contiguous by construction.
    pub fn kind_range(&self, kind: VariableKind) -> Range<usize> {
        let target = self.n_hist;
        let hist = self.d_hist * self.n_hist;
        let futr = self.d_futr * (self.n_hist + self.n_futr);
        match kind {
            VariableKind::Target => 0..target,
            VariableKind::HistExog => target..target + hist,
            VariableKind::FutrExog => target + hist..target + hist + futr,
        }
    }

    pub fn variable_range(&self, variable: usize) -> Range<usize> {
        match self.variable_kind(variable) {
            VariableKind::Target => 0..self.n_hist,
            VariableKind::HistExog => {
                let start = self.n_hist * variable;
                start..start + self.n_hist
            }
            VariableKind::FutrExog => {
                let per = self.n_hist + self.n_futr;
                let start = self.kind_range(VariableKind::FutrExog).start
                    + per * (variable - 1 - self.d_hist);
                start..start + per
            }
        }
    }

    /// Position slot of every patch in flat order.
    pub fn slots(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.slot).collect()
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn variable_name(&self, variable: usize) -> &str {
        &self.variable_names[variable]
    }

    pub fn with_variable_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.n_variables() {
            return Err(DataError::LayoutMismatch(format!(
                "{} variable names for a layout with {} variables",
                names.len(),
                self.n_variables()
            )));
        }
        self.variable_names = names;
        Ok(self)
    }

    /// Length of a variable's window series.
    pub fn series_len(&self, variable: usize) -> usize {
        match self.variable_kind(variable) {
            VariableKind::FutrExog => self.lookback + self.horizon,
            _ => self.lookback,
        }
    }

    pub fn check_sample(&self, sample: &WindowSample) -> Result<(), DataError> {
        let mismatch = |what: String| Err(DataError::LayoutMismatch(what));
        if sample.y_hist.len() != self.lookback {
            return mismatch(format!(
                "target lookback {} != layout lookback {}",
                sample.y_hist.len(),
                self.lookback
            ));
        }
        if sample.x_hist.len() != self.d_hist || sample.x_futr.len() != self.d_futr {
            return mismatch(format!(
                "sample has {} hist / {} futr channels, layout expects {} / {}",
                sample.x_hist.len(),
                sample.x_futr.len(),
                self.d_hist,
                self.d_futr
            ));
        }
        for v in 1..self.n_variables() {
            let len = sample.variable_series(v).len();
            if len != self.series_len(v) {
                return mismatch(format!(
                    "variable {v} series length {len} != {}",
                    self.series_len(v)
                ));
            }
        }
        Ok(())
    }
}

/// Cuts a window into an `N_patch x P` matrix, zero padded.
pub fn patchify(sample: &WindowSample, layout: &PatchLayout) -> Result<Tensor, DataError> {
    layout.check_sample(sample)?;
    let p = layout.patch_len;
    let mut data = vec![0.0; layout.n_patch() * p];
    for e in layout.entries() {
        let series = sample.variable_series(e.variable);
        let row = &mut data[e.flat_index * p..(e.flat_index + 1) * p];
        let n = e.series_range.len();
        row[e.pad_lead..e.pad_lead + n].copy_from_slice(&series[e.series_range.clone()]);
    }
    Ok(Tensor::new(&[layout.n_patch(), p], data).expect("sized from layout"))
}

/// Per-variable window series recovered from a patch matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Unpatched {
    pub y_hist: Vec<f64>,
    pub x_hist: Vec<Vec<f64>>,
    pub x_futr: Vec<Vec<f64>>,
}

/// Inverse of [`patchify`]: reassembles each variable's series and drops
/// the padding.
pub fn unpatchify(patches: &Tensor, layout: &PatchLayout) -> Result<Unpatched, DataError> {
    let p = layout.patch_len;
    if patches.shape() != [layout.n_patch(), p] {
        return Err(DataError::LayoutMismatch(format!(
            "patch matrix {:?} != [{}, {p}]",
            patches.shape(),
            layout.n_patch()
        )));
    }
    let mut series: Vec<Vec<f64>> = (0..layout.n_variables())
        .map(|v| vec![0.0; layout.series_len(v)])
        .collect();
    let data = patches.data();
    for e in layout.entries() {
        let row = &data[e.flat_index * p..(e.flat_index + 1) * p];
        let n = e.series_range.len();
        series[e.variable][e.series_range.clone()].copy_from_slice(&row[e.pad_lead..e.pad_lead + n]);
    }
    let mut it = series.into_iter();
    let y_hist = it.next().expect("target always present");
    let x_hist = it.by_ref().take(layout.d_hist).collect();
    let x_futr = it.collect();
    Ok(Unpatched {
        y_hist,
        x_hist,
        x_futr,
    })
}
