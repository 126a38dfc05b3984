use crate::error::{Error, Result};

/// Dense row-major real matrix. Vectors are stored as `1 × n`, batches as
/// `batch × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::usage(format!(
                "tensor shape {rows}x{cols} does not match {} elements",
                data.len()
            )));
        }
        Ok(Tensor { data, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            data: vec![value; rows * cols],
            rows,
            cols,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            data: vec![value],
            rows: 1,
            cols: 1,
        }
    }

    /// A single row vector.
    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Tensor {
            data,
            rows: 1,
            cols,
        }
    }

    /// Stacks equally long rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            data,
            rows: rows.len(),
            cols,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// `self · other` (or `self · otherᵀ` when `transpose_other`).
    pub fn matmul(&self, other: &Tensor, transpose_other: bool) -> Result<Tensor> {
        let (k2, n) = if transpose_other {
            (other.cols, other.rows)
        } else {
            (other.rows, other.cols)
        };
        if self.cols != k2 {
            return Err(Error::usage(format!(
                "matmul shape mismatch: {}x{} by {}x{}{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols,
                if transpose_other { "ᵀ" } else { "" }
            )));
        }
        let (m, k) = (self.rows, self.cols);
        let mut out = vec![0.0; m * n];
        if transpose_other {
            for i in 0..m {
                let a = &self.data[i * k..(i + 1) * k];
                for j in 0..n {
                    let b = &other.data[j * k..(j + 1) * k];
                    out[i * n + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
                }
            }
        } else {
            for i in 0..m {
                let o = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let a = self.data[i * k + p];
                    if a == 0.0 {
                        continue;
                    }
                    let b = &other.data[p * n..(p + 1) * n];
                    o.iter_mut().zip(b).for_each(|(o, b)| *o += a * b);
                }
            }
        }
        Ok(Tensor {
            data: out,
            rows: m,
            cols: n,
        })
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    /// Sums a broadcast gradient back down to `shape`.
    pub(crate) fn reduce_to(&self, shape: [usize; 2]) -> Tensor {
        if self.shape() == shape {
            return self.clone();
        }
        let mut out = Tensor::zeros(shape[0], shape[1]);
        for i in 0..self.rows {
            let oi = if shape[0] == 1 { 0 } else { i };
            for j in 0..self.cols {
                let oj = if shape[1] == 1 { 0 } else { j };
                out.data[oi * shape[1] + oj] += self.data[i * self.cols + j];
            }
        }
        out
    }
}
