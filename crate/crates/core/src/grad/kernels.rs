//! Plain (tape-free) numeric kernels shared by the forward and backward passes.

use super::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// 1x1, stride 1, no padding: the input item already is the column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

pub fn im2col<T: Real>(g: &ConvGeom, input: &[T], col: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * s) as isize + ky as isize - p;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * s) as isize + kx as isize - p;
                        *d = if ix < 0 || ix >= g.width as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Transposed scatter of [`im2col`], accumulating into `input`.
pub fn col2im<T: Real>(g: &ConvGeom, col: &[T], input: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * s) as isize + ky as isize - p;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * s) as isize + kx as isize - p;
                        if ix >= 0 && ix < g.width as isize {
                            line[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x: [N,C,H,W]` with `w: [Co,C,k,k]`.
pub fn conv2d_forward<T: Real>(g: &ConvGeom, x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    let n = x.batch();
    let co = w.shape()[0];
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut out = Tensor::zeros(&[n, co, g.out_h, g.out_w]);
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * cols] };
    let item = co * cols;
    for i in 0..n {
        let dst = &mut out.data_mut()[i * item..(i + 1) * item];
        if let Some(b) = b {
            for (c, chunk) in dst.chunks_mut(cols).enumerate() {
                chunk.fill(b.data()[c]);
            }
        }
        let src: &[T] = if g.is_pointwise() {
            x.item(i)
        } else {
            im2col(g, x.item(i), &mut col);
            &col
        };
        let beta = if b.is_some() { T::one() } else { T::zero() };
        T::gemm(co, rows, cols, T::one(), w.data(), rows as isize, 1, src, cols as isize, 1, beta, dst, cols as isize, 1);
    }
    out
}

pub fn conv2d_backward_input<T: Real>(g: &ConvGeom, grad: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let n = grad.batch();
    let co = w.shape()[0];
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut dx = Tensor::zeros(&[n, g.channels, g.height, g.width]);
    let item = g.channels * g.height * g.width;
    let mut col = vec![T::zero(); rows * cols];
    for i in 0..n {
        let dst = &mut dx.data_mut()[i * item..(i + 1) * item];
        let gi = grad.item(i);
        if g.is_pointwise() {
            T::gemm(rows, co, cols, T::one(), w.data(), 1, rows as isize, gi, cols as isize, 1, T::zero(), dst, cols as isize, 1);
        } else {
            T::gemm(rows, co, cols, T::one(), w.data(), 1, rows as isize, gi, cols as isize, 1, T::zero(), &mut col, cols as isize, 1);
            col2im(g, &col, dst);
        }
    }
    dx
}

pub fn conv2d_backward_weight<T: Real>(g: &ConvGeom, grad: &Tensor<T>, x: &Tensor<T>, w_shape: &[usize]) -> Tensor<T> {
    let n = grad.batch();
    let co = w_shape[0];
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut dw = Tensor::zeros(w_shape);
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * cols] };
    for i in 0..n {
        let src: &[T] = if g.is_pointwise() {
            x.item(i)
        } else {
            im2col(g, x.item(i), &mut col);
            &col
        };
        T::gemm(co, cols, rows, T::one(), grad.item(i), cols as isize, 1, src, 1, cols as isize, T::one(), dw.data_mut(), rows as isize, 1);
    }
    dw
}

/// Per-channel sum over batch and space of a `[N,C,...]` tensor.
pub fn channel_sums<T: Real>(t: &Tensor<T>) -> Vec<T> {
    let n = t.batch();
    let c = t.shape()[1];
    let plane = t.item_len() / c;
    let mut out = vec![T::zero(); c];
    for i in 0..n {
        for (ch, chunk) in t.item(i).chunks(plane).enumerate() {
            out[ch] += chunk.iter().copied().sum();
        }
    }
    out
}

/// `y = x · wᵀ + b` for `x: [N,F]`, `w: [Fo,F]`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let fo = w.shape()[0];
    let mut out = Tensor::zeros(&[n, fo]);
    for row in out.data_mut().chunks_mut(fo) {
        row.copy_from_slice(b.data());
    }
    T::gemm(n, f, fo, T::one(), x.data(), f as isize, 1, w.data(), 1, f as isize, T::one(), out.data_mut(), fo as isize, 1);
    out
}

/// `w: [m,k]`, returns `w · v` for a row-major `v: [k, cols]`.
pub fn matmul<T: Real>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, n as isize, 1, T::zero(), &mut out, n as isize, 1);
    out
}
