use ndarray::Array2;

/// A dense rank-2 `f64` value in standard (row-major) layout. Vectors are
/// represented as single-column matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    inner: Array2<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            inner: Array2::zeros((rows, cols)),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            inner: Array2::from_elem((1, 1), v),
        }
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Tensor {
            inner: Array2::from_shape_vec((values.len(), 1), values.to_vec())
                .expect("shape matches data length"),
        }
    }

    pub fn from_array(a: Array2<f64>) -> Self {
        let inner = if a.is_standard_layout() {
            a
        } else {
            Array2::from_shape_vec(a.raw_dim(), a.iter().copied().collect())
                .expect("shape matches data length")
        };
        Tensor { inner }
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.inner
    }

    pub fn array_mut(&mut self) -> &mut Array2<f64> {
        &mut self.inner
    }

    pub fn as_slice(&self) -> &[f64] {
        self.inner.as_slice().expect("tensors are standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        self.inner
            .as_slice_mut()
            .expect("tensors are standard layout")
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.inner[(r, c)]
    }

    /// The single element of a 1x1 tensor.
    pub fn scalar_value(&self) -> f64 {
        assert!(
            self.rows() == 1 && self.cols() == 1,
            "expected a scalar, got {}x{}",
            self.rows(),
            self.cols()
        );
        self.inner[(0, 0)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            inner: self.inner.map(|&v| f(v)),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// Squared Euclidean norm of all entries.
    pub fn sq_norm(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum()
    }
}
