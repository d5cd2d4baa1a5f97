use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::data::{build_layout, PatchLayout, TimeSeriesDataset};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub patch_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Number of residual MLP blocks in the patch encoder.
    pub n_enc: usize,
    /// Hidden width of each encoder block.
    pub d_ff: usize,
    #[serde(default)]
    pub dropout: f64,
}

/// Channel counts taken from the dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataDims {
    pub d_hist: usize,
    pub d_futr: usize,
    pub d_stat: usize,
}

impl DataDims {
    pub fn of(ds: &TimeSeriesDataset) -> Self {
        Self {
            d_hist: ds.d_hist(),
            d_futr: ds.d_futr(),
            d_stat: ds.d_stat(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.lookback < 2 {
            return fail(format!("lookback must be at least 2, got {}", self.lookback));
        }
        if self.horizon == 0 || self.patch_len == 0 {
            return fail("horizon and patch_len must be at least 1".into());
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("d_model, n_heads and d_ff must be at least 1".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Per-head key/value width.
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn layout(&self, dims: DataDims) -> Result<PatchLayout, ModelError> {
        Ok(build_layout(
            self.lookback,
            self.horizon,
            self.patch_len,
            dims.d_hist,
            dims.d_futr,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ModelConfig {
        ModelConfig {
            lookback: 8,
            horizon: 4,
            patch_len: 4,
            d_model: 8,
            n_heads: 2,
            n_enc: 1,
            d_ff: 8,
            dropout: 0.0,
        }
    }

    #[test]
    fn head_divisibility_is_enforced() {
        assert!(base().validate().is_ok());
        let bad = ModelConfig { n_heads: 3, ..base() };
        assert!(matches!(bad.validate(), Err(ModelError::Config(_))));
        let bad = ModelConfig { lookback: 1, ..base() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { dropout: 1.0, ..base() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"lookback":8,"horizon":4,"patch_len":4,"d_model":8,"n_heads":2,"n_enc":1,"d_ff":8,"heads":2}"#;
        assert!(serde_json::from_str::<ModelConfig>(json).is_err());
    }
}
