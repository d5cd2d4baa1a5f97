//! Datasets, windowing and patching.

mod calendar;
mod csv_io;
mod dataset;
mod layout;
mod synth;
mod window;

pub use calendar::{calendar_channels, calendar_features, CalendarFeatures};
pub use csv_io::{format_timestamp, load_csv, parse_timestamp, write_csv, write_csv_to, ColumnRoles};
pub use dataset::{Channel, Split, SplitSpec, StaticVar, Subset, TimeSeriesDataset};
pub use layout::{build_layout, patchify, unpatchify, PatchEntry, PatchLayout, Unpatched, VariableKind};
pub use synth::{synth_generate, SynthSpec};
pub use window::{make_windows, window_at, window_origins, WindowSample};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("missing value in column `{column}` at data row {row}")]
    MissingValue { column: String, row: usize },
    #[error("cannot parse `{value}` in column `{column}` at data row {row}")]
    Parse {
        column: String,
        row: usize,
        value: String,
    },
    #[error("unrecognised timestamp `{value}` at data row {row}")]
    Timestamp { row: usize, value: String },
    #[error("non-uniform frequency at row {row}: expected step {expected}s, found {found}s")]
    Frequency { row: usize, expected: i64, found: i64 },
    #[error("channel `{channel}` has {len} values, expected {expected}")]
    ChannelLength {
        channel: String,
        len: usize,
        expected: usize,
    },
    #[error("static column `{0}` is not constant")]
    NonConstantStatic(String),
    #[error("dataset has {len} rows, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("forecast origin {origin} outside the valid range {min}..={max}")]
    OriginOutOfRange { origin: usize, min: usize, max: usize },
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSynth(String),
}
