//! Dense row-major `f64` tensors and the eager arithmetic every kernel shares.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Caller guarantees `product(shape) == data.len()`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    /// Stacks equal-length 1-D rows into a `[rows, len]` matrix.
    pub fn stack_rows<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let mut data = Vec::new();
        let mut width = None;
        let mut count = 0;
        for row in rows {
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::shape(format!(
                        "cannot stack rows of length {w} and {}",
                        row.len()
                    )))
                }
                _ => {}
            }
            data.extend_from_slice(&row.data);
            count += 1;
        }
        Ok(Self {
            shape: vec![count, width.unwrap_or(0)],
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Mutable view of the entries; the shape is fixed.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Leading dimension of a matrix.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing dimension of a matrix.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> Tensor {
        let w = self.cols();
        Tensor::from_vec(self.data[i * w..(i + 1) * w].to_vec())
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        let w = self.cols();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise binary map; panics on shape mismatch.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(
            self.shape, other.shape,
            "elementwise op on shapes {:?} and {:?}",
            self.shape, other.shape
        );
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    /// `self + s * other`, elementwise.
    pub fn axpy(&self, s: f64, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        gemm(self, false, other, false)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        gemm(self, true, other, false)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        gemm(self, false, other, true)
    }

    /// `[B, D] -> [B, 1]`
    pub fn sum_rows(&self) -> Tensor {
        let (b, d) = self.dims2();
        let data = (0..b).map(|i| self.data[i * d..(i + 1) * d].iter().sum()).collect();
        Tensor::from_parts(vec![b, 1], data)
    }

    /// `[1, H] -> [rows, H]`, or `[B, 1] -> [B, cols]` via [`Tensor::broadcast_cols`].
    pub fn broadcast_rows(&self, rows: usize) -> Tensor {
        let (r, h) = self.dims2();
        assert_eq!(r, 1, "broadcast_rows expects a single row, got {:?}", self.shape);
        let mut data = Vec::with_capacity(rows * h);
        for _ in 0..rows {
            data.extend_from_slice(&self.data);
        }
        Tensor::from_parts(vec![rows, h], data)
    }

    pub fn broadcast_cols(&self, cols: usize) -> Tensor {
        let (b, c) = self.dims2();
        assert_eq!(c, 1, "broadcast_cols expects a single column, got {:?}", self.shape);
        let data = self
            .data
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, cols))
            .collect();
        Tensor::from_parts(vec![b, cols], data)
    }

    /// Column sums `[B, H] -> [1, H]` (adjoint of `broadcast_rows`).
    pub fn sum_cols(&self) -> Tensor {
        let (b, h) = self.dims2();
        let mut out = vec![0.0; h];
        for i in 0..b {
            for (o, v) in out.iter_mut().zip(&self.data[i * h..(i + 1) * h]) {
                *o += v;
            }
        }
        Tensor::from_parts(vec![1, h], out)
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let b = parts[0].dims2().0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let (pb, w) = p.dims2();
                assert_eq!(pb, b, "concat rows differ: {pb} vs {b}");
                w
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(b * total);
        for i in 0..b {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data[i * w..(i + 1) * w]);
            }
        }
        Tensor::from_parts(vec![b, total], data)
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        let (b, w) = self.dims2();
        assert!(start + len <= w, "slice {start}..{} of width {w}", start + len);
        let mut data = Vec::with_capacity(b * len);
        for i in 0..b {
            data.extend_from_slice(&self.data[i * w + start..i * w + start + len]);
        }
        Tensor::from_parts(vec![b, len], data)
    }

    /// Adjoint of `slice_cols`: embeds a `[B, len]` block into zeros of width `width`.
    pub(crate) fn pad_cols(&self, start: usize, width: usize) -> Tensor {
        let (b, len) = self.dims2();
        let mut data = vec![0.0; b * width];
        for i in 0..b {
            data[i * width + start..i * width + start + len]
                .copy_from_slice(&self.data[i * len..(i + 1) * len]);
        }
        Tensor::from_parts(vec![b, width], data)
    }

    pub(crate) fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            s => panic!("expected a matrix, got shape {s:?}"),
        }
    }
}

fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (ar, ac) = a.dims2();
    let (br, bc) = b.dims2();
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "matmul inner dimensions {k} and {k2} differ");
    let (rsa, csa) = if ta { (1, ac) } else { (ac, 1) };
    let (rsb, csb) = if tb { (1, bc) } else { (bc, 1) };
    let mut c = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: strides describe the row-major buffers of `a`, `b` and `c`
        // exactly; all three are sized from the asserted dimensions above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data.as_ptr(),
                rsa as isize,
                csa as isize,
                b.data.as_ptr(),
                rsb as isize,
                csb as isize,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Tensor::from_parts(vec![m, n], c)
}
