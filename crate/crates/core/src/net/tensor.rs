use ndarray::linalg::general_mat_mul;
use ndarray::{Array4, ArrayView2, ArrayViewMut2};

/// Activation stored channel-major: `[c][n][h][w]`, so each channel is one
/// contiguous row of `n * h * w` values and a convolution is a single GEMM
/// over the whole batch.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Act {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            n,
            h,
            w,
            data: vec![0.0; c * n * h * w],
        }
    }

    pub fn like(&self, c: usize) -> Self {
        Self::zeros(c, self.n, self.h, self.w)
    }

    /// Number of pixels per channel across the batch.
    pub fn cols(&self) -> usize {
        self.n * self.h * self.w
    }

    pub fn row(&self, c: usize) -> &[f64] {
        let m = self.cols();
        &self.data[c * m..(c + 1) * m]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        let m = self.cols();
        &mut self.data[c * m..(c + 1) * m]
    }

    pub fn plane(&self, c: usize, n: usize) -> &[f64] {
        let p = self.h * self.w;
        &self.data[(c * self.n + n) * p..][..p]
    }

    pub fn view2(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.c, self.cols()), &self.data).expect("act shape")
    }

    pub fn view2_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let cols = self.cols();
        ArrayViewMut2::from_shape((self.c, cols), &mut self.data).expect("act shape")
    }

    /// From a `[n, c, h, w]` batch.
    pub fn from_nchw(batch: &Array4<f64>) -> Self {
        let (n, c, h, w) = batch.dim();
        let permuted = batch.view().permuted_axes([1, 0, 2, 3]);
        Self {
            c,
            n,
            h,
            w,
            data: permuted.iter().copied().collect(),
        }
    }

    pub fn to_nchw(&self) -> Array4<f64> {
        let a = Array4::from_shape_vec((self.c, self.n, self.h, self.w), self.data.clone()).expect("act shape");
        a.permuted_axes([1, 0, 2, 3]).as_standard_layout().into_owned()
    }

    pub fn add_assign(&mut self, other: &Act) {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

/// `c = alpha * a * b + beta * c`.
pub(crate) fn gemm(alpha: f64, a: &ArrayView2<f64>, b: &ArrayView2<f64>, beta: f64, c: &mut ArrayViewMut2<f64>) {
    general_mat_mul(alpha, a, b, beta, c);
}
