use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::calendar;
use super::DataError;

/// One named series aligned with the dataset timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

impl Channel {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StaticVar {
    pub name: String,
    pub value: f64,
}

/// Chronological split boundaries: train is `[0, train_end)`, valid is
/// `[train_end, valid_end)`, test is `[valid_end, len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_end: usize,
    pub valid_end: usize,
}

/// How split boundaries are chosen for a dataset of a given length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SplitSpec {
    Indices { train_end: usize, valid_end: usize },
    Ratios { train: f64, valid: f64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Ratios {
            train: 0.7,
            valid: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn resolve(&self, len: usize) -> Result<Split, DataError> {
        let split = match *self {
            SplitSpec::Indices {
                train_end,
                valid_end,
            } => Split {
                train_end,
                valid_end,
            },
            SplitSpec::Ratios { train, valid } => {
                if !(train > 0.0 && valid > 0.0 && train + valid <= 1.0) {
                    return Err(DataError::InvalidSplit(format!(
                        "ratios train={train}, valid={valid} must be positive and sum to at most 1"
                    )));
                }
                let train_end = (len as f64 * train).floor() as usize;
                let valid_end = (len as f64 * (train + valid)).floor() as usize;
                Split {
                    train_end,
                    valid_end,
                }
            }
        };
        split.validate(len)?;
        Ok(split)
    }
}

impl Split {
    pub fn validate(&self, len: usize) -> Result<(), DataError> {
        if 0 < self.train_end && self.train_end < self.valid_end && self.valid_end <= len {
            Ok(())
        } else {
            Err(DataError::InvalidSplit(format!(
                "need 0 < train_end ({}) < valid_end ({}) <= length ({len})",
                self.train_end, self.valid_end
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Valid,
    Test,
}

/// Target series plus exogenous channels on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    /// Epoch seconds, strictly increasing with constant spacing.
    pub timestamps: Vec<i64>,
    pub step_seconds: i64,
    pub target: Channel,
    pub hist_exog: Vec<Channel>,
    pub futr_exog: Vec<Channel>,
    pub static_exog: Vec<StaticVar>,
    pub split: Split,
}

impl TimeSeriesDataset {
    /// Validates alignment, frequency and split, then builds the dataset.
    pub fn new(
        timestamps: Vec<i64>,
        target: Channel,
        hist_exog: Vec<Channel>,
        futr_exog: Vec<Channel>,
        static_exog: Vec<StaticVar>,
        split: Split,
    ) -> Result<Self, DataError> {
        let len = timestamps.len();
        if len < 2 {
            return Err(DataError::TooShort { len, needed: 2 });
        }
        let step = timestamps[1] - timestamps[0];
        if step <= 0 {
            return Err(DataError::Frequency {
                row: 1,
                expected: step,
                found: step,
            });
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] - w[0] != step {
                return Err(DataError::Frequency {
                    row: i + 1,
                    expected: step,
                    found: w[1] - w[0],
                });
            }
        }
        for ch in std::iter::once(&target).chain(&hist_exog).chain(&futr_exog) {
            if ch.values.len() != len {
                return Err(DataError::ChannelLength {
                    channel: ch.name.clone(),
                    len: ch.values.len(),
                    expected: len,
                });
            }
            if let Some(row) = ch.values.iter().position(|v| !v.is_finite()) {
                return Err(DataError::MissingValue {
                    column: ch.name.clone(),
                    row,
                });
            }
        }
        split.validate(len)?;
        Ok(Self {
            timestamps,
            step_seconds: step,
            target,
            hist_exog,
            futr_exog,
            static_exog,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn d_hist(&self) -> usize {
        self.hist_exog.len()
    }

    pub fn d_futr(&self) -> usize {
        self.futr_exog.len()
    }

    pub fn d_stat(&self) -> usize {
        self.static_exog.len()
    }

    pub fn subset_range(&self, subset: Subset) -> Range<usize> {
        match subset {
            Subset::Train => 0..self.split.train_end,
            Subset::Valid => self.split.train_end..self.split.valid_end,
            Subset::Test => self.split.valid_end..self.len(),
        }
    }

    /// Names in layout variable order: target, hist_exog, futr_exog.
    pub fn variable_names(&self) -> Vec<String> {
        std::iter::once(&self.target)
            .chain(&self.hist_exog)
            .chain(&self.futr_exog)
            .map(|c| c.name.clone())
            .collect()
    }

    /// Series for layout variable `id` (target = 0, then hist, then futr).
    pub fn variable(&self, id: usize) -> &Channel {
        let d_hist = self.hist_exog.len();
        match id {
            0 => &self.target,
            i if i <= d_hist => &self.hist_exog[i - 1],
            i => &self.futr_exog[i - 1 - d_hist],
        }
    }

    pub fn static_values(&self) -> Vec<f64> {
        self.static_exog.iter().map(|s| s.value).collect()
    }

    /// Appends month, week_day and hour as future-known channels.
    pub fn with_calendar_features(mut self) -> Self {
        self.futr_exog
            .extend(calendar::calendar_channels(&self.timestamps));
        self
    }
}
