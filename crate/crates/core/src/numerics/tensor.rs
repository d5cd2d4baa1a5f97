//! Dense row-major `f64` tensors.
//!
//! Storage is an [`ndarray::ArrayD`] kept in standard (C) layout, so
//! [`Tensor::data`] is always the contiguous row-major buffer.

use ndarray::{ArrayD, IxDyn};

use super::TensorError;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    array: ArrayD<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        let array = ArrayD::from_shape_vec(IxDyn(shape), data).expect("length checked above");
        Ok(Self { array })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            array: ArrayD::zeros(IxDyn(shape)),
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            array: ArrayD::from_elem(IxDyn(shape), value),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            array: ArrayD::from_elem(IxDyn(&[]), value),
        }
    }

    /// 1-D tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(&[n], data).expect("vector shape always matches")
    }

    /// 2-D tensor from nested rows. All rows must have the same length.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(&[rows.len(), cols], data)
    }

    pub(crate) fn from_array(array: ArrayD<f64>) -> Self {
        let array = if array.is_standard_layout() {
            array
        } else {
            array.as_standard_layout().into_owned()
        };
        Self { array }
    }

    pub fn array(&self) -> &ArrayD<f64> {
        &self.array
    }

    pub fn into_array(self) -> ArrayD<f64> {
        self.array
    }

    pub fn shape(&self) -> &[usize] {
        self.array.shape()
    }

    pub fn ndim(&self) -> usize {
        self.array.ndim()
    }

    pub fn len(&self) -> usize {
        self.array.len()
    }

    pub fn is_empty(&self) -> bool {
        self.array.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        self.array
            .as_slice()
            .expect("tensor storage is kept in standard layout")
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.array
            .as_slice_mut()
            .expect("tensor storage is kept in standard layout")
    }

    pub fn into_data(self) -> Vec<f64> {
        let (data, offset) = self.array.into_raw_vec_and_offset();
        debug_assert!(offset.unwrap_or(0) == 0);
        data
    }

    /// Value of a 0-d or single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.len() == 1).then(|| self.data()[0])
    }

    pub fn is_finite(&self) -> bool {
        self.array.iter().all(|v| v.is_finite())
    }

    /// Returns the same data under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self, TensorError> {
        Self::new(shape, self.data().to_vec())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            array: self.array.mapv(f),
        }
    }
}

/// Right-aligned broadcast of two shapes over size-1 axes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>, TensorError> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::Broadcast {
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}
