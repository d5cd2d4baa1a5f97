use super::{DataError, Subset, TimeSeriesDataset};

/// One forecasting instance cut from a dataset.
///
/// `origin` is the index of the last observed timestamp: the lookback is
/// `origin + 1 - L ..= origin` and the horizon `origin + 1 ..= origin + H`.
/// Future-known channels cover lookback and horizon contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub y_hist: Vec<f64>,
    pub x_hist: Vec<Vec<f64>>,
    pub x_futr: Vec<Vec<f64>>,
    pub x_stat: Vec<f64>,
    pub y_future: Vec<f64>,
    pub origin: usize,
}

impl WindowSample {
    pub fn lookback(&self) -> usize {
        self.y_hist.len()
    }

    pub fn horizon(&self) -> usize {
        self.y_future.len()
    }

    /// Lookback-side series of layout variable `id` (target, hist, futr).
    pub fn variable_series(&self, id: usize) -> &[f64] {
        let d_hist = self.x_hist.len();
        match id {
            0 => &self.y_hist,
            i if i <= d_hist => &self.x_hist[i - 1],
            i => &self.x_futr[i - 1 - d_hist],
        }
    }

    pub fn variable_series_mut(&mut self, id: usize) -> &mut Vec<f64> {
        let d_hist = self.x_hist.len();
        match id {
            0 => &mut self.y_hist,
            i if i <= d_hist => &mut self.x_hist[i - 1],
            i => &mut self.x_futr[i - 1 - d_hist],
        }
    }
}

/// Cuts the window whose forecast origin is `origin`.
pub fn window_at(
    ds: &TimeSeriesDataset,
    origin: usize,
    lookback: usize,
    horizon: usize,
) -> Result<WindowSample, DataError> {
    if lookback == 0 || horizon == 0 {
        return Err(DataError::InvalidWindow(format!(
            "lookback ({lookback}) and horizon ({horizon}) must be at least 1"
        )));
    }
    if origin + 1 < lookback || origin + horizon >= ds.len() {
        return Err(DataError::OriginOutOfRange {
            origin,
            min: lookback - 1,
            max: ds.len().saturating_sub(horizon + 1),
        });
    }
    let start = origin + 1 - lookback;
    let end = origin + 1 + horizon;
    Ok(WindowSample {
        y_hist: ds.target.values[start..=origin].to_vec(),
        x_hist: ds
            .hist_exog
            .iter()
            .map(|c| c.values[start..=origin].to_vec())
            .collect(),
        x_futr: ds
            .futr_exog
            .iter()
            .map(|c| c.values[start..end].to_vec())
            .collect(),
        x_stat: ds.static_values(),
        y_future: ds.target.values[origin + 1..end].to_vec(),
        origin,
    })
}

/// Forecast origins whose horizon lies entirely inside `subset`, ordered.
///
/// The first origin sits just before the subset start; lookbacks may reach
/// into earlier data, and origins without enough history are skipped.
pub fn window_origins(
    ds: &TimeSeriesDataset,
    lookback: usize,
    horizon: usize,
    stride: usize,
    subset: Subset,
) -> Vec<usize> {
    let range = ds.subset_range(subset);
    let stride = stride.max(1);
    if lookback == 0 || horizon == 0 {
        return Vec::new();
    }
    if range.len() < horizon {
        log::warn!(
            "{subset:?} subset has {} points, shorter than horizon {horizon}; no windows",
            range.len()
        );
        return Vec::new();
    }
    let count = (range.len() - horizon) / stride + 1;
    (0..count)
        .filter_map(|k| {
            // origin = range.start - 1 + k * stride, kept in unsigned arithmetic
            let first_target = range.start + k * stride;
            let origin = first_target.checked_sub(1)?;
            (origin + 1 >= lookback).then_some(origin)
        })
        .collect()
}

pub fn make_windows(
    ds: &TimeSeriesDataset,
    lookback: usize,
    horizon: usize,
    stride: usize,
    subset: Subset,
) -> Vec<WindowSample> {
    window_origins(ds, lookback, horizon, stride, subset)
        .into_iter()
        .map(|o| window_at(ds, o, lookback, horizon).expect("origin range checked"))
        .collect()
}
