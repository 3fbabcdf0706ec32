//! Differentiable primitives recorded on a [`Tape`].

use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::{Real, Tape, Tensor, Var};
use crate::error::{dim_err, Error, Result};

fn same_shape<T: Real>(op: &str, a: &Var<T>, b: &Var<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!("{op}: shape mismatch {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// Batch-norm statistics of one training-mode application.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance, as used for running-statistics updates.
    pub var_unbiased: Vec<T>,
}

impl<T: Real> Tape<T> {
    pub fn add(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        same_shape("add", a, b)?;
        let out = a.value().zip_map(b.value(), |x, y| x + y);
        self.record("add", out, &[a, b], |g, _| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        same_shape("sub", a, b)?;
        let out = a.value().zip_map(b.value(), |x, y| x - y);
        self.record("sub", out, &[a, b], |g, _| vec![Some(g.clone()), Some(g.map(|v| -v))])
    }

    pub fn mul(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        same_shape("mul", a, b)?;
        let out = a.value().zip_map(b.value(), |x, y| x * y);
        let (av, bv) = (a.rc(), b.rc());
        self.record("mul", out, &[a, b], move |g, needs| {
            vec![
                needs[0].then(|| g.zip_map(&bv, |g, b| g * b)),
                needs[1].then(|| g.zip_map(&av, |g, a| g * a)),
            ]
        })
    }

    pub fn scale(&self, a: &Var<T>, k: T) -> Result<Var<T>> {
        self.record("scale", a.value().scale(k), &[a], move |g, _| vec![Some(g.scale(k))])
    }

    pub fn exp(&self, a: &Var<T>) -> Result<Var<T>> {
        let out = Rc::new(a.value().map(T::exp));
        let saved = Rc::clone(&out);
        self.record("exp", (*out).clone(), &[a], move |g, _| vec![Some(g.zip_map(&saved, |g, e| g * e))])
    }

    /// `alpha * tanh(x / alpha)`: smooth clamp of `x` to `(-alpha, alpha)`.
    pub fn soft_clamp(&self, a: &Var<T>, alpha: T) -> Result<Var<T>> {
        let th = Rc::new(a.value().map(|x| (x / alpha).tanh()));
        let out = th.scale(alpha);
        self.record("soft_clamp", out, &[a], move |g, _| {
            vec![Some(g.zip_map(&th, |g, t| g * (T::one() - t * t)))]
        })
    }

    pub fn leaky_relu(&self, a: &Var<T>, slope: T) -> Result<Var<T>> {
        let out = a.value().map(|x| if x >= T::zero() { x } else { slope * x });
        let av = a.rc();
        self.record("leaky_relu", out, &[a], move |g, _| {
            vec![Some(g.zip_map(&av, |g, x| if x >= T::zero() { g } else { slope * g }))]
        })
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self, a: &Var<T>) -> Result<Var<T>> {
        let shape = a.shape().to_vec();
        self.record("sum", Tensor::scalar(a.value().sum()), &[a], move |g, _| {
            vec![Some(Tensor::full(&shape, g.data()[0]))]
        })
    }

    /// Per-batch-item sum: `[N, ...] -> [N]`.
    pub fn sum_items(&self, a: &Var<T>) -> Result<Var<T>> {
        let n = a.value().batch();
        let shape = a.shape().to_vec();
        let out = Tensor::from_fn(&[n], |i| a.value().item(i).iter().copied().sum());
        self.record("sum_items", out, &[a], move |g, _| {
            let per = shape[1..].iter().product::<usize>();
            let mut d = Tensor::zeros(&shape);
            for (i, chunk) in d.data_mut().chunks_mut(per.max(1)).enumerate() {
                chunk.fill(g.data()[i]);
            }
            vec![Some(d)]
        })
    }

    /// `x + s` with `s` a scalar broadcast over `x`.
    pub fn add_scalar(&self, x: &Var<T>, s: &Var<T>) -> Result<Var<T>> {
        if s.value().len() != 1 {
            return Err(dim_err!("add_scalar: expected a scalar, got {:?}", s.shape()));
        }
        let k = s.value().data()[0];
        self.record("add_scalar", x.value().map(|v| v + k), &[x, s], |g, _| {
            vec![Some(g.clone()), Some(Tensor::scalar(g.sum()))]
        })
    }

    pub fn reshape(&self, a: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
        let out = a.value().clone().reshape(shape)?;
        let orig = a.shape().to_vec();
        self.record("reshape", out, &[a], move |g, _| vec![Some(g.clone().reshape(&orig).expect("same size"))])
    }

    /// Slice `len` entries of axis 1 starting at `start`.
    pub fn slice1(&self, a: &Var<T>, start: usize, len: usize) -> Result<Var<T>> {
        let shape = a.shape().to_vec();
        if shape.len() < 2 || start + len > shape[1] {
            return Err(dim_err!("slice1 [{start}, {}) out of range for {:?}", start + len, shape));
        }
        let inner: usize = shape[2..].iter().product();
        let n = shape[0];
        let mut out_shape = shape.clone();
        out_shape[1] = len;
        let mut out = Vec::with_capacity(n * len * inner);
        for i in 0..n {
            let item = a.value().item(i);
            out.extend_from_slice(&item[start * inner..(start + len) * inner]);
        }
        let out = Tensor::new(&out_shape, out)?;
        self.record("slice1", out, &[a], move |g, _| {
            let mut d = Tensor::zeros(&shape);
            let item = shape[1] * inner;
            for i in 0..n {
                d.data_mut()[i * item + start * inner..i * item + (start + len) * inner]
                    .copy_from_slice(g.item(i));
            }
            vec![Some(d)]
        })
    }

    /// Concatenate along axis 1. All other axes must agree.
    pub fn concat1(&self, parts: &[&Var<T>]) -> Result<Var<T>> {
        let first = parts.first().ok_or_else(|| dim_err!("concat1 of nothing"))?;
        let base = first.shape().to_vec();
        if base.len() < 2 {
            return Err(dim_err!("concat1 needs rank >= 2, got {:?}", base));
        }
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            if s.len() != base.len() || s[0] != base[0] || s[2..] != base[2..] {
                return Err(dim_err!("concat1 shape mismatch {:?} vs {:?}", s, base));
            }
            widths.push(s[1]);
        }
        let n = base[0];
        let inner: usize = base[2..].iter().product();
        let total: usize = widths.iter().sum();
        let mut out_shape = base.clone();
        out_shape[1] = total;
        let mut out = Vec::with_capacity(n * total * inner);
        for i in 0..n {
            for p in parts {
                out.extend_from_slice(p.value().item(i));
            }
        }
        let out = Tensor::new(&out_shape, out)?;
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
        self.record("concat1", out, parts, move |g, needs| {
            let mut offset = 0;
            let mut grads = Vec::with_capacity(shapes.len());
            for (k, s) in shapes.iter().enumerate() {
                let w = s[1] * inner;
                if needs[k] {
                    let mut d = Vec::with_capacity(n * w);
                    for i in 0..n {
                        d.extend_from_slice(&g.item(i)[offset..offset + w]);
                    }
                    grads.push(Some(Tensor::new(s, d).expect("slice shape")));
                } else {
                    grads.push(None);
                }
                offset += w;
            }
            grads
        })
    }

    /// Per-item gather: `y[n, i] = x[n, index[i]]` over the flattened item.
    pub fn gather_items(&self, a: &Var<T>, index: Rc<[usize]>, out_shape: &[usize]) -> Result<Var<T>> {
        let per = a.value().item_len();
        let out_per: usize = out_shape[1..].iter().product();
        if out_shape[0] != a.value().batch() || out_per != index.len() || index.iter().any(|&j| j >= per) {
            return Err(dim_err!("gather_items: bad index for {:?} -> {:?}", a.shape(), out_shape));
        }
        let n = a.value().batch();
        let mut out = Vec::with_capacity(n * index.len());
        for i in 0..n {
            let item = a.value().item(i);
            out.extend(index.iter().map(|&j| item[j]));
        }
        let out = Tensor::new(out_shape, out)?;
        let in_shape = a.shape().to_vec();
        self.record("gather_items", out, &[a], move |g, _| {
            let mut d = Tensor::zeros(&in_shape);
            for i in 0..n {
                let gi = g.item(i);
                let di = &mut d.data_mut()[i * per..(i + 1) * per];
                for (k, &j) in index.iter().enumerate() {
                    di[j] += gi[k];
                }
            }
            vec![Some(d)]
        })
    }

    /// Cross-correlation `[N,C,H,W] * [Co,C,k,k] -> [N,Co,H',W']` with
    /// `H' = floor((H + 2·padding − k)/stride) + 1`.
    pub fn conv2d(&self, x: &Var<T>, w: &Var<T>, b: Option<&Var<T>>, stride: usize, padding: usize) -> Result<Var<T>> {
        let [_, c, h, wd] = x.value().dims4()?;
        let [co, ci, kh, kw] = w.value().dims4()?;
        if ci != c {
            return Err(dim_err!("conv2d: input has {c} channels, weight expects {ci}"));
        }
        if kh != kw {
            return Err(dim_err!("conv2d: non-square kernel {kh}x{kw}"));
        }
        if let Some(b) = b {
            if b.shape() != [co] {
                return Err(dim_err!("conv2d: bias shape {:?}, expected [{co}]", b.shape()));
            }
        }
        if stride == 0 || h + 2 * padding < kh || wd + 2 * padding < kh {
            return Err(dim_err!("conv2d: kernel {kh} does not fit {h}x{wd} with padding {padding}"));
        }
        let g = ConvGeom {
            channels: c,
            height: h,
            width: wd,
            kernel: kh,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (wd + 2 * padding - kh) / stride + 1,
        };
        let out = kernels::conv2d_forward(&g, x.value(), w.value(), b.map(|b| b.value()));
        let (xv, wv) = (x.rc(), w.rc());
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.record("conv2d", out, &inputs, move |grad, needs| {
            let mut grads = vec![
                needs[0].then(|| kernels::conv2d_backward_input(&g, grad, &wv)),
                needs[1].then(|| kernels::conv2d_backward_weight(&g, grad, &xv, wv.shape())),
            ];
            if needs.len() > 2 {
                grads.push(needs[2].then(|| Tensor::new(&[co], kernels::channel_sums(grad)).expect("bias")));
            }
            grads
        })
    }

    /// Affine map `[N,F] -> [N,Fo]` with `w: [Fo,F]`, `b: [Fo]`.
    pub fn dense(&self, x: &Var<T>, w: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let [n, f] = x.value().dims2()?;
        let [fo, fi] = w.value().dims2()?;
        if fi != f || b.shape() != [fo] {
            return Err(dim_err!("dense: input {:?}, weight {:?}, bias {:?}", x.shape(), w.shape(), b.shape()));
        }
        let out = kernels::dense_forward(x.value(), w.value(), b.value());
        let (xv, wv) = (x.rc(), w.rc());
        self.record("dense", out, &[x, w, b], move |g, needs| {
            let dx = needs[0].then(|| {
                Tensor::new(&[n, f], kernels::matmul(g.data(), n, fo, wv.data(), f)).expect("dense dx")
            });
            let dw = needs[1].then(|| {
                let mut d = Tensor::zeros(&[fo, f]);
                T::gemm(fo, n, f, T::one(), g.data(), 1, fo as isize, xv.data(), f as isize, 1, T::zero(), d.data_mut(), f as isize, 1);
                d
            });
            let db = needs[2].then(|| {
                let mut d = vec![T::zero(); fo];
                for row in g.data().chunks(fo) {
                    for (a, &v) in d.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                Tensor::new(&[fo], d).expect("dense db")
            });
            vec![dx, dw, db]
        })
    }

    /// Mean over spatial axes: `[N,C,H,W] -> [N,C]`.
    pub fn avg_pool_global(&self, x: &Var<T>) -> Result<Var<T>> {
        let [n, c, h, w] = x.value().dims4()?;
        let hw = h * w;
        let inv = T::one() / T::of(hw as f64);
        let out: Vec<T> = x.value().data().chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let out = Tensor::new(&[n, c], out)?;
        self.record("avg_pool_global", out, &[x], move |g, _| {
            let mut d = Tensor::zeros(&[n, c, h, w]);
            for (chunk, &gv) in d.data_mut().chunks_mut(hw).zip(g.data()) {
                chunk.fill(gv * inv);
            }
            vec![Some(d)]
        })
    }

    /// Batch normalization with batch statistics over all axes but 1.
    /// Returns the batch statistics for running-average updates.
    pub fn batch_norm_train(
        &self,
        x: &Var<T>,
        scale: &Var<T>,
        shift: &Var<T>,
        eps: T,
    ) -> Result<(Var<T>, BatchStats<T>)> {
        let shape = x.shape().to_vec();
        if shape.len() < 2 {
            return Err(dim_err!("batch_norm: rank >= 2 required, got {:?}", shape));
        }
        let (n, c) = (shape[0], shape[1]);
        let plane: usize = shape[2..].iter().product();
        let count = n * plane;
        if count < 2 {
            return Err(Error::Contract(format!("batch_norm in train mode needs N*H*W >= 2, got {count}")));
        }
        if scale.shape() != [c] || shift.shape() != [c] {
            return Err(dim_err!("batch_norm: affine params must be [{c}]"));
        }
        let cnt = T::of(count as f64);
        let xv = x.value();
        let mut mean = vec![T::zero(); c];
        for i in 0..n {
            for (ch, p) in xv.item(i).chunks(plane).enumerate() {
                mean[ch] += p.iter().copied().sum();
            }
        }
        mean.iter_mut().for_each(|m| *m /= cnt);
        let mut var = vec![T::zero(); c];
        for i in 0..n {
            for (ch, p) in xv.item(i).chunks(plane).enumerate() {
                var[ch] += p.iter().map(|&v| (v - mean[ch]) * (v - mean[ch])).sum();
            }
        }
        let var_unbiased: Vec<T> = var.iter().map(|&v| v / T::of((count - 1) as f64)).collect();
        var.iter_mut().for_each(|v| *v /= cnt);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(&shape);
        let mut out = Tensor::zeros(&shape);
        let (gam, bet) = (scale.value().data(), shift.value().data());
        for (idx, (&v, (h, o))) in xv.data().iter().zip(xhat.data_mut().iter_mut().zip(out.data_mut())).enumerate() {
            let ch = (idx / plane) % c;
            *h = (v - mean[ch]) * inv_std[ch];
            *o = *h * gam[ch] + bet[ch];
        }
        let xhat = Rc::new(xhat);
        let gamma = scale.rc();
        let y = self.record("batch_norm", out, &[x, scale, shift], move |g, needs| {
            let mut dbeta = vec![T::zero(); c];
            let mut dgamma = vec![T::zero(); c];
            for (idx, (&gv, &h)) in g.data().iter().zip(xhat.data()).enumerate() {
                let ch = (idx / plane) % c;
                dbeta[ch] += gv;
                dgamma[ch] += gv * h;
            }
            let dx = needs[0].then(|| {
                let mut d = Tensor::zeros(&shape);
                for (idx, (dv, (&gv, &h))) in d.data_mut().iter_mut().zip(g.data().iter().zip(xhat.data())).enumerate() {
                    let ch = (idx / plane) % c;
                    *dv = gamma.data()[ch] * inv_std[ch] * (gv - dbeta[ch] / cnt - h * dgamma[ch] / cnt);
                }
                d
            });
            vec![
                dx,
                Some(Tensor::new(&[c], dgamma).expect("bn")),
                Some(Tensor::new(&[c], dbeta).expect("bn")),
            ]
        })?;
        Ok((y, BatchStats { mean, var_unbiased }))
    }

    /// Batch normalization with fixed statistics (inference mode).
    pub fn batch_norm_eval(
        &self,
        x: &Var<T>,
        scale: &Var<T>,
        shift: &Var<T>,
        mean: &[T],
        var: &[T],
        eps: T,
    ) -> Result<Var<T>> {
        let shape = x.shape().to_vec();
        if shape.len() < 2 {
            return Err(dim_err!("batch_norm: rank >= 2 required, got {:?}", shape));
        }
        let c = shape[1];
        if scale.shape() != [c] || shift.shape() != [c] || mean.len() != c || var.len() != c {
            return Err(dim_err!("batch_norm: per-channel params must have length {c}"));
        }
        let plane: usize = shape[2..].iter().product();
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mean = mean.to_vec();
        let xhat = Rc::new(Tensor::from_fn(&shape, |idx| {
            let ch = (idx / plane) % c;
            (x.value().data()[idx] - mean[ch]) * inv_std[ch]
        }));
        let (gam, bet) = (scale.value().data(), shift.value().data());
        let out = Tensor::from_fn(&shape, |idx| {
            let ch = (idx / plane) % c;
            xhat.data()[idx] * gam[ch] + bet[ch]
        });
        let gamma = scale.rc();
        self.record("batch_norm_eval", out, &[x, scale, shift], move |g, needs| {
            let mut dbeta = vec![T::zero(); c];
            let mut dgamma = vec![T::zero(); c];
            for (idx, (&gv, &h)) in g.data().iter().zip(xhat.data()).enumerate() {
                let ch = (idx / plane) % c;
                dbeta[ch] += gv;
                dgamma[ch] += gv * h;
            }
            let dx = needs[0].then(|| {
                Tensor::from_fn(&shape, |idx| {
                    let ch = (idx / plane) % c;
                    g.data()[idx] * gamma.data()[ch] * inv_std[ch]
                })
            });
            vec![dx, Some(Tensor::new(&[c], dgamma).expect("bn")), Some(Tensor::new(&[c], dbeta).expect("bn"))]
        })
    }

    /// Rearrange each 2x2 spatial block into 4 channel groups, mixing the four block
    /// entries with `mix` (row `q` gives output group `q`).
    ///
    /// Block entries are ordered `(0,0), (0,1), (1,0), (1,1)`; output channel `q*C + c`
    /// holds group `q` of input channel `c`.
    pub fn space_to_depth(&self, x: &Var<T>, mix: [[T; 4]; 4]) -> Result<Var<T>> {
        let [n, c, h, w] = x.value().dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(dim_err!("space_to_depth: spatial size {h}x{w} must be even"));
        }
        let out = s2d_kernel(x.value(), mix)?;
        self.record("space_to_depth", out, &[x], move |g, _| {
            vec![Some(d2s_kernel(g, transpose4(mix), [n, c, h, w]))]
        })
    }

    /// Inverse rearrangement of [`space_to_depth`](Self::space_to_depth) for an
    /// orthogonal `mix`.
    pub fn depth_to_space(&self, x: &Var<T>, mix: [[T; 4]; 4]) -> Result<Var<T>> {
        let [n, c4, h, w] = x.value().dims4()?;
        if c4 % 4 != 0 {
            return Err(dim_err!("depth_to_space: channel count {c4} not divisible by 4"));
        }
        let out_dims = [n, c4 / 4, 2 * h, 2 * w];
        let out = d2s_kernel(x.value(), transpose4(mix), out_dims);
        self.record("depth_to_space", out, &[x], move |g, _| {
            vec![Some(s2d_kernel(g, mix).expect("even dims"))]
        })
    }

    /// Square matrix `P · L · U` from the packed lower/upper factors.
    ///
    /// `lower` and `upper` are full `C×C` tensors whose strict lower (resp. strict
    /// upper) triangles are used; `log_diag` and `sign` give `diag(U) = sign·exp(log_diag)`.
    pub fn plu_compose(
        &self,
        perm: &[usize],
        lower: &Var<T>,
        upper: &Var<T>,
        log_diag: &Var<T>,
        sign: &[T],
    ) -> Result<Var<T>> {
        let c = perm.len();
        if lower.shape() != [c, c] || upper.shape() != [c, c] || log_diag.shape() != [c] || sign.len() != c {
            return Err(dim_err!("plu_compose: factor shapes do not match C={c}"));
        }
        let l = Tensor::from_fn(&[c, c], |k| {
            let (i, j) = (k / c, k % c);
            match i.cmp(&j) {
                std::cmp::Ordering::Greater => lower.value().data()[k],
                std::cmp::Ordering::Equal => T::one(),
                std::cmp::Ordering::Less => T::zero(),
            }
        });
        let diag: Vec<T> = log_diag.value().data().iter().zip(sign).map(|(&s, &g)| g * s.exp()).collect();
        let u = Tensor::from_fn(&[c, c], |k| {
            let (i, j) = (k / c, k % c);
            match i.cmp(&j) {
                std::cmp::Ordering::Less => upper.value().data()[k],
                std::cmp::Ordering::Equal => diag[i],
                std::cmp::Ordering::Greater => T::zero(),
            }
        });
        let lu = kernels::matmul(l.data(), c, c, u.data(), c);
        // W[i] = LU[perm[i]]: row i of W is row perm[i] of L·U.
        let mut w = vec![T::zero(); c * c];
        for i in 0..c {
            w[i * c..(i + 1) * c].copy_from_slice(&lu[perm[i] * c..(perm[i] + 1) * c]);
        }
        let perm = perm.to_vec();
        self.record("plu_compose", Tensor::new(&[c, c], w)?, &[lower, upper, log_diag], move |g, needs| {
            // d(LU) = Pᵀ dW
            let mut dlu = vec![T::zero(); c * c];
            for i in 0..c {
                dlu[perm[i] * c..(perm[i] + 1) * c].copy_from_slice(&g.data()[i * c..(i + 1) * c]);
            }
            // dL = dLU · Uᵀ, dU = Lᵀ · dLU
            let mut dl = vec![T::zero(); c * c];
            T::gemm(c, c, c, T::one(), &dlu, c as isize, 1, u.data(), 1, c as isize, T::zero(), &mut dl, c as isize, 1);
            let mut du = vec![T::zero(); c * c];
            T::gemm(c, c, c, T::one(), l.data(), 1, c as isize, &dlu, c as isize, 1, T::zero(), &mut du, c as isize, 1);
            let dlower = Tensor::from_fn(&[c, c], |k| if k / c > k % c { dl[k] } else { T::zero() });
            let dupper = Tensor::from_fn(&[c, c], |k| if k / c < k % c { du[k] } else { T::zero() });
            let dlog = Tensor::from_fn(&[c], |i| du[i * c + i] * diag[i]);
            vec![needs[0].then_some(dlower), needs[1].then_some(dupper), needs[2].then_some(dlog)]
        })
    }
}

fn transpose4<T: Copy>(m: [[T; 4]; 4]) -> [[T; 4]; 4] {
    let mut t = m;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}

fn s2d_kernel<T: Real>(x: &Tensor<T>, mix: [[T; 4]; 4]) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, 4 * c, ho, wo]);
    let src = x.data();
    let dst = out.data_mut();
    for i in 0..n {
        for ch in 0..c {
            let plane = &src[(i * c + ch) * h * w..(i * c + ch + 1) * h * w];
            for y in 0..ho {
                for xx in 0..wo {
                    let b = [
                        plane[2 * y * w + 2 * xx],
                        plane[2 * y * w + 2 * xx + 1],
                        plane[(2 * y + 1) * w + 2 * xx],
                        plane[(2 * y + 1) * w + 2 * xx + 1],
                    ];
                    for (q, row) in mix.iter().enumerate() {
                        let v = row[0] * b[0] + row[1] * b[1] + row[2] * b[2] + row[3] * b[3];
                        dst[((i * 4 + q) * c + ch) * ho * wo + y * wo + xx] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse layout of [`s2d_kernel`]; `mix` is applied to each gathered 4-vector.
fn d2s_kernel<T: Real>(x: &Tensor<T>, mix: [[T; 4]; 4], out_dims: [usize; 4]) -> Tensor<T> {
    let [n, c, h, w] = out_dims;
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&out_dims);
    let src = x.data();
    let dst = out.data_mut();
    for i in 0..n {
        for ch in 0..c {
            let plane = &mut dst[(i * c + ch) * h * w..(i * c + ch + 1) * h * w];
            for y in 0..ho {
                for xx in 0..wo {
                    let mut g = [T::zero(); 4];
                    for (q, gq) in g.iter_mut().enumerate() {
                        *gq = src[((i * 4 + q) * c + ch) * ho * wo + y * wo + xx];
                    }
                    let b = mix.map(|r| r[0] * g[0] + r[1] * g[1] + r[2] * g[2] + r[3] * g[3]);
                    plane[2 * y * w + 2 * xx] = b[0];
                    plane[2 * y * w + 2 * xx + 1] = b[1];
                    plane[(2 * y + 1) * w + 2 * xx] = b[2];
                    plane[(2 * y + 1) * w + 2 * xx + 1] = b[3];
                }
            }
        }
    }
    out
}
