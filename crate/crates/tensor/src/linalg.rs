//! Strided GEMM over flat buffers, backed by ndarray's matrix multiply.

use ndarray::{linalg::general_mat_mul, ArrayView2, ArrayViewMut2, ShapeBuilder};

use crate::element::Element;

/// Read-only strided matrix view into a flat buffer.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'s, T> {
    pub data: &'s [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'s, T> MatRef<'s, T> {
    /// Dense row-major `rows × cols` block starting at `offset`.
    pub fn dense(data: &'s [T], offset: usize, rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            ..self
        }
    }

    fn view(&self) -> ArrayView2<'s, T> {
        let end = self.end();
        ArrayView2::from_shape(
            (self.rows, self.cols).strides((self.row_stride, self.col_stride)),
            &self.data[self.offset..end],
        )
        .expect("matrix view within bounds")
    }

    fn end(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return self.offset;
        }
        self.offset + (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride + 1
    }
}

pub(crate) struct MatMut<'s, T> {
    pub data: &'s mut [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'s, T> MatMut<'s, T> {
    pub fn dense(data: &'s mut [T], offset: usize, rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    fn view(&mut self) -> ArrayViewMut2<'_, T> {
        let end = if self.rows == 0 || self.cols == 0 {
            self.offset
        } else {
            self.offset + (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride + 1
        };
        ArrayViewMut2::from_shape(
            (self.rows, self.cols).strides((self.row_stride, self.col_stride)),
            &mut self.data[self.offset..end],
        )
        .expect("matrix view within bounds")
    }
}

/// `c ← alpha·a·b + beta·c`.
pub(crate) fn gemm<T: Element>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, mut c: MatMut<'_, T>) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(a.rows, c.rows);
    debug_assert_eq!(b.cols, c.cols);
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        let mut cv = c.view();
        cv.mapv_inplace(|v| v * beta);
        return;
    }
    let av = a.view();
    let bv = b.view();
    let mut cv = c.view();
    general_mat_mul(alpha, &av, &bv, beta, &mut cv);
}
