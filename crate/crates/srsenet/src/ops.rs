//! Differentiable layer primitives: convolution, transposed convolution,
//! leaky ReLU, global average pooling, dense, sigmoid, elementwise/broadcast
//! arithmetic and the Charbonnier penalty.
//!
//! Every primitive exists twice: a pure function in [`raw`] (forward plus an
//! explicit backward), and a recording wrapper in [`tape`] that pushes the
//! matching backward closure onto a [`Tape`]. Convolutions are cross-
//! correlations (no kernel flip) and run as im2col + gemm.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Convolution parameters: weight `(C_out, C_in, k, k)`, bias `(1, C_out, 1, 1)`.
#[derive(Clone, Debug)]
pub struct Conv2dParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

/// Transposed-convolution parameters: weight `(C_in, C_out, k, k)`,
/// bias `(1, C_out, 1, 1)`. Output size law `H_out = (H_in - 1)*s - 2p + k`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2dParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> ConvTranspose2dParams<T> {
    /// `(H - 1)*s - 2p + k`, or an error when the law yields a non-positive extent.
    pub fn output_extent(&self, input: usize) -> Result<usize> {
        let k = self.weight.shape()[2];
        conv_transpose_extent(input, k, self.stride, self.padding)
    }
}

pub fn conv_transpose_extent(input: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    let out = (input as isize - 1) * stride as isize - 2 * padding as isize + k as isize;
    if out < 1 {
        return Err(Error::invalid(
            "conv_transpose2d",
            format!("size law gives non-positive extent {out} for input {input}, k={k}, s={stride}, p={padding}"),
        ));
    }
    Ok(out as usize)
}

/// Fully-connected parameters acting on `(N, C_in, 1, 1)` tensors:
/// weight `(1, C_out, 1, C_in)`, bias `(1, C_out, 1, 1)`.
#[derive(Clone, Debug)]
pub struct DenseParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub mod raw {
    //! Pure forward and backward kernels, shared by the tape wrappers, the
    //! inference path and the finite-difference gradient checks.

    use ndarray::linalg::general_mat_mul;
    use ndarray::{Array2, ArrayView2};

    use super::*;

    fn weight_dims(weight: &Tensor<impl Scalar>, op: &'static str) -> Result<(usize, usize, usize)> {
        let [co, ci, kh, kw] = weight.shape();
        if kh != kw {
            return Err(Error::invalid(op, format!("kernel must be square, got {kh}x{kw}")));
        }
        Ok((co, ci, kh))
    }

    fn check_bias(bias: &Tensor<impl Scalar>, cout: usize, op: &'static str) -> Result<()> {
        if bias.shape() != [1, cout, 1, 1] {
            return Err(Error::ShapeMismatch { op, expected: [1, cout, 1, 1], got: bias.shape() });
        }
        Ok(())
    }

    /// Unfolds one image `(C,H,W)` into a `(C*k*k, Ho*Wo)` patch matrix with
    /// zero padding.
    #[allow(clippy::needless_range_loop)]
    fn im2col<T: Scalar>(
        x: &[T],
        (c, h, w): (usize, usize, usize),
        k: usize,
        s: usize,
        p: usize,
        (ho, wo): (usize, usize),
    ) -> Array2<T> {
        let mut cols = Array2::<T>::zeros((c * k * k, ho * wo));
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let mut row_view = cols.row_mut(row);
                    let row_slice = row_view.as_slice_mut().unwrap();
                    for oy in 0..ho {
                        let iy = (oy * s + ki) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize) * w + w];
                        let dst = &mut row_slice[oy * wo..(oy + 1) * wo];
                        for ox in 0..wo {
                            let ix = (ox * s + kj) as isize - p as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`im2col`]: scatter-adds a patch-matrix gradient back into
    /// image space.
    #[allow(clippy::needless_range_loop)]
    fn col2im_add<T: Scalar>(
        cols: &Array2<T>,
        dx: &mut [T],
        (c, h, w): (usize, usize, usize),
        k: usize,
        s: usize,
        p: usize,
        (ho, wo): (usize, usize),
    ) {
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = cols.row((ci * k + ki) * k + kj);
                    let row_slice = row.as_slice().unwrap();
                    for oy in 0..ho {
                        let iy = (oy * s + ki) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst =
                            &mut dx[(ci * h + iy as usize) * w..(ci * h + iy as usize) * w + w];
                        let src = &row_slice[oy * wo..(oy + 1) * wo];
                        for ox in 0..wo {
                            let ix = (ox * s + kj) as isize - p as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] = dst[ix as usize] + src[ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn conv_out_extent(input: usize, k: usize, s: usize, p: usize) -> Result<usize> {
        let padded = input + 2 * p;
        if padded < k {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {k} larger than padded input {padded}"),
            ));
        }
        if !(padded - k).is_multiple_of(s) {
            return Err(Error::invalid(
                "conv2d",
                format!("non-integer output size for input {input}, k={k}, s={s}, p={p}"),
            ));
        }
        Ok((padded - k) / s + 1)
    }

    /// Cross-correlation with zero padding.
    pub fn conv2d<T: Scalar>(
        x: &Tensor<T>,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<T>> {
        let (cout, cin, k) = weight_dims(weight, "conv2d")?;
        let [n, xc, h, w] = x.shape();
        if xc != cin {
            return Err(Error::ShapeMismatch { op: "conv2d", expected: [n, cin, h, w], got: x.shape() });
        }
        if let Some(b) = bias {
            check_bias(b, cout, "conv2d")?;
        }
        let ho = conv_out_extent(h, k, stride, padding)?;
        let wo = conv_out_extent(w, k, stride, padding)?;

        let wmat = ArrayView2::from_shape((cout, cin * k * k), weight.data()).unwrap();
        let mut y = Tensor::zeros([n, cout, ho, wo]);
        let in_len = cin * h * w;
        let out_len = cout * ho * wo;
        for item in 0..n {
            let cols = im2col(&x.data()[item * in_len..(item + 1) * in_len], (cin, h, w), k, stride, padding, (ho, wo));
            let out = wmat.dot(&cols);
            let dst = &mut y.data_mut()[item * out_len..(item + 1) * out_len];
            dst.copy_from_slice(out.as_slice().unwrap());
        }
        if let Some(b) = bias {
            let plane = ho * wo;
            for item in 0..n {
                for co in 0..cout {
                    let bv = b.data()[co];
                    for v in &mut y.data_mut()[(item * cout + co) * plane..(item * cout + co + 1) * plane] {
                        *v = *v + bv;
                    }
                }
            }
        }
        Ok(y)
    }

    /// Gradient of [`conv2d`] with respect to its input (also the forward pass
    /// of the transposed convolution).
    pub fn conv2d_input_grad<T: Scalar>(
        grad_out: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        padding: usize,
        (h, w): (usize, usize),
    ) -> Result<Tensor<T>> {
        let (cout, cin, k) = weight_dims(weight, "conv2d_input_grad")?;
        let [n, gc, ho, wo] = grad_out.shape();
        if gc != cout {
            return Err(Error::ShapeMismatch {
                op: "conv2d_input_grad",
                expected: [n, cout, ho, wo],
                got: grad_out.shape(),
            });
        }
        let wmat = ArrayView2::from_shape((cout, cin * k * k), weight.data()).unwrap();
        let wt = wmat.t();
        let mut dx = Tensor::zeros([n, cin, h, w]);
        let in_len = cin * h * w;
        let out_len = cout * ho * wo;
        for item in 0..n {
            let g2 = ArrayView2::from_shape(
                (cout, ho * wo),
                &grad_out.data()[item * out_len..(item + 1) * out_len],
            )
            .unwrap();
            let cols_grad = wt.dot(&g2);
            col2im_add(
                &cols_grad,
                &mut dx.data_mut()[item * in_len..(item + 1) * in_len],
                (cin, h, w),
                k,
                stride,
                padding,
                (ho, wo),
            );
        }
        Ok(dx)
    }

    /// Gradient of [`conv2d`] with respect to its weight.
    pub fn conv2d_weight_grad<T: Scalar>(
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        stride: usize,
        padding: usize,
        k: usize,
    ) -> Result<Tensor<T>> {
        let [n, cin, h, w] = x.shape();
        let [gn, cout, ho, wo] = grad_out.shape();
        if gn != n {
            return Err(Error::ShapeMismatch {
                op: "conv2d_weight_grad",
                expected: x.shape(),
                got: grad_out.shape(),
            });
        }
        let mut dwmat = Array2::<T>::zeros((cout, cin * k * k));
        let in_len = cin * h * w;
        let out_len = cout * ho * wo;
        for item in 0..n {
            let cols = im2col(&x.data()[item * in_len..(item + 1) * in_len], (cin, h, w), k, stride, padding, (ho, wo));
            let g2 = ArrayView2::from_shape(
                (cout, ho * wo),
                &grad_out.data()[item * out_len..(item + 1) * out_len],
            )
            .unwrap();
            general_mat_mul(T::one(), &g2, &cols.t(), T::one(), &mut dwmat);
        }
        let raw = dwmat.into_raw_vec();
        Tensor::from_vec([cout, cin, k, k], raw)
    }

    /// Per-output-channel sum of a gradient, the bias gradient of both
    /// convolution flavours.
    pub fn bias_grad<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = grad_out.shape();
        let mut db = Tensor::zeros([1, c, 1, 1]);
        let plane = h * w;
        for item in 0..n {
            for ch in 0..c {
                let mut acc = T::zero();
                for &v in &grad_out.data()[(item * c + ch) * plane..(item * c + ch + 1) * plane] {
                    acc = acc + v;
                }
                db.data_mut()[ch] = db.data_mut()[ch] + acc;
            }
        }
        db
    }

    pub fn conv2d_backward<T: Scalar>(
        x: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        padding: usize,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let [_, _, h, w] = x.shape();
        let k = weight.shape()[2];
        let dx = conv2d_input_grad(grad_out, weight, stride, padding, (h, w))?;
        let dw = conv2d_weight_grad(x, grad_out, stride, padding, k)?;
        let db = bias_grad(grad_out);
        Ok((dx, dw, db))
    }

    /// Transposed convolution: each input pixel scatters a stride-spaced k×k
    /// stamp of the kernel. Implemented as the adjoint of [`conv2d`], which is
    /// exactly [`conv2d_input_grad`] with the weight read as `(C_in, C_out, k, k)`.
    pub fn conv_transpose2d<T: Scalar>(
        x: &Tensor<T>,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<T>> {
        let (cin_w, cout, k) = weight_dims(weight, "conv_transpose2d")?;
        let [n, cin, h, w] = x.shape();
        if cin != cin_w {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose2d",
                expected: [n, cin_w, h, w],
                got: x.shape(),
            });
        }
        if let Some(b) = bias {
            check_bias(b, cout, "conv_transpose2d")?;
        }
        let ho = conv_transpose_extent(h, k, stride, padding)?;
        let wo = conv_transpose_extent(w, k, stride, padding)?;
        let mut y = conv2d_input_grad(x, weight, stride, padding, (ho, wo))?;
        debug_assert_eq!(y.shape(), [n, cout, ho, wo]);
        if let Some(b) = bias {
            let plane = ho * wo;
            for item in 0..n {
                for co in 0..cout {
                    let bv = b.data()[co];
                    for v in &mut y.data_mut()[(item * cout + co) * plane..(item * cout + co + 1) * plane] {
                        *v = *v + bv;
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn conv_transpose2d_backward<T: Scalar>(
        x: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        padding: usize,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let k = weight.shape()[2];
        // dL/dx of the adjoint is the plain convolution of the output gradient.
        let dx = conv2d(grad_out, weight, None, stride, padding)?;
        let dw = conv2d_weight_grad(grad_out, x, stride, padding, k)?;
        let db = bias_grad(grad_out);
        Ok((dx, dw, db))
    }

    pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: f64) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&slope) {
            return Err(Error::invalid("leaky_relu", format!("slope {slope} outside [0,1)")));
        }
        let a = T::from_f64(slope);
        Ok(x.map(|v| if v >= T::zero() { v } else { a * v }))
    }

    /// Subgradient at 0 is taken as 1.
    pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, slope: f64, grad_out: &Tensor<T>) -> Tensor<T> {
        let a = T::from_f64(slope);
        let mut dx = grad_out.clone();
        for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v < T::zero() {
                *g = *g * a;
            }
        }
        dx
    }

    /// Per-channel mean over the spatial extents: `(N,C,H,W) -> (N,C,1,1)`.
    pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if h * w == 0 {
            return Err(Error::invalid("global_avg_pool", "empty spatial extents"));
        }
        let inv = T::from_f64(1.0 / (h * w) as f64);
        let mut z = Tensor::zeros([n, c, 1, 1]);
        for item in 0..n {
            for ch in 0..c {
                let mut acc = T::zero();
                for &v in &x.data()[(item * c + ch) * h * w..(item * c + ch + 1) * h * w] {
                    acc = acc + v;
                }
                z.data_mut()[item * c + ch] = acc * inv;
            }
        }
        Ok(z)
    }

    pub fn global_avg_pool_backward<T: Scalar>(
        input_shape: [usize; 4],
        grad_out: &Tensor<T>,
    ) -> Tensor<T> {
        let [n, c, h, w] = input_shape;
        let inv = T::from_f64(1.0 / (h * w) as f64);
        let mut dx = Tensor::zeros(input_shape);
        for item in 0..n {
            for ch in 0..c {
                let g = grad_out.data()[item * c + ch] * inv;
                for v in &mut dx.data_mut()[(item * c + ch) * h * w..(item * c + ch + 1) * h * w] {
                    *v = g;
                }
            }
        }
        dx
    }

    /// `y = W x + b` on `(N, C_in, 1, 1)` tensors.
    pub fn dense<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, cin, h, w] = x.shape();
        if h != 1 || w != 1 {
            return Err(Error::ShapeMismatch { op: "dense", expected: [n, cin, 1, 1], got: x.shape() });
        }
        let [_, cout, _, wcin] = weight.shape();
        if weight.shape()[0] != 1 || weight.shape()[2] != 1 || wcin != cin {
            return Err(Error::ShapeMismatch { op: "dense", expected: [1, cout, 1, cin], got: weight.shape() });
        }
        check_bias(bias, cout, "dense")?;
        let mut y = Tensor::zeros([n, cout, 1, 1]);
        for item in 0..n {
            let xv = &x.data()[item * cin..(item + 1) * cin];
            for co in 0..cout {
                let row = &weight.data()[co * cin..(co + 1) * cin];
                let mut acc = bias.data()[co];
                for (wv, &v) in row.iter().zip(xv) {
                    acc = acc + *wv * v;
                }
                y.data_mut()[item * cout + co] = acc;
            }
        }
        Ok(y)
    }

    #[allow(clippy::needless_range_loop)]
    pub fn dense_backward<T: Scalar>(
        x: &Tensor<T>,
        weight: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let [n, cin, _, _] = x.shape();
        let cout = weight.shape()[1];
        let mut dx = Tensor::zeros(x.shape());
        let mut dw = Tensor::zeros(weight.shape());
        let mut db = Tensor::zeros([1, cout, 1, 1]);
        for item in 0..n {
            let xv = &x.data()[item * cin..(item + 1) * cin];
            for co in 0..cout {
                let g = grad_out.data()[item * cout + co];
                db.data_mut()[co] = db.data_mut()[co] + g;
                for ci in 0..cin {
                    dw.data_mut()[co * cin + ci] = dw.data_mut()[co * cin + ci] + g * xv[ci];
                    dx.data_mut()[item * cin + ci] =
                        dx.data_mut()[item * cin + ci] + g * weight.data()[co * cin + ci];
                }
            }
        }
        (dx, dw, db)
    }

    pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| T::one() / (T::one() + (-v).exp()))
    }

    pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
        let mut dx = grad_out.clone();
        for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
            *g = *g * s * (T::one() - s);
        }
        dx
    }

    /// Elementwise sum; `b` of shape `(N,C,1,1)` broadcasts over H,W.
    pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = a.shape();
        if a.shape() == b.shape() {
            let mut y = a.clone();
            for (v, &bv) in y.data_mut().iter_mut().zip(b.data()) {
                *v = *v + bv;
            }
            Ok(y)
        } else if b.shape() == [n, c, 1, 1] {
            let mut y = a.clone();
            let plane = h * w;
            for item in 0..n {
                for ch in 0..c {
                    let bv = b.data()[item * c + ch];
                    for v in &mut y.data_mut()[(item * c + ch) * plane..(item * c + ch + 1) * plane] {
                        *v = *v + bv;
                    }
                }
            }
            Ok(y)
        } else {
            Err(Error::ShapeMismatch { op: "add", expected: a.shape(), got: b.shape() })
        }
    }

    /// Gradient of [`add`] for the second operand: pass-through, or summed
    /// over the broadcast axes.
    pub fn add_rhs_backward<T: Scalar>(b_shape: [usize; 4], grad_out: &Tensor<T>) -> Tensor<T> {
        if grad_out.shape() == b_shape {
            grad_out.clone()
        } else {
            let [n, c, h, w] = grad_out.shape();
            let mut db = Tensor::zeros([n, c, 1, 1]);
            let plane = h * w;
            for item in 0..n {
                for ch in 0..c {
                    let mut acc = T::zero();
                    for &v in &grad_out.data()[(item * c + ch) * plane..(item * c + ch + 1) * plane] {
                        acc = acc + v;
                    }
                    db.data_mut()[item * c + ch] = acc;
                }
            }
            db
        }
    }

    /// Rescales each channel plane of `u (N,C,H,W)` by the scalar `s (N,C,1,1)`.
    pub fn mul_channelwise<T: Scalar>(u: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = u.shape();
        if s.shape() != [n, c, 1, 1] {
            return Err(Error::ShapeMismatch { op: "mul_channelwise", expected: [n, c, 1, 1], got: s.shape() });
        }
        let mut y = u.clone();
        let plane = h * w;
        for item in 0..n {
            for ch in 0..c {
                let sv = s.data()[item * c + ch];
                for v in &mut y.data_mut()[(item * c + ch) * plane..(item * c + ch + 1) * plane] {
                    *v = *v * sv;
                }
            }
        }
        Ok(y)
    }

    pub fn mul_channelwise_backward<T: Scalar>(
        u: &Tensor<T>,
        s: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> (Tensor<T>, Tensor<T>) {
        let [n, c, h, w] = u.shape();
        let plane = h * w;
        let mut du = grad_out.clone();
        let mut ds = Tensor::zeros([n, c, 1, 1]);
        for item in 0..n {
            for ch in 0..c {
                let base = (item * c + ch) * plane;
                let sv = s.data()[item * c + ch];
                let mut acc = T::zero();
                for i in base..base + plane {
                    acc = acc + grad_out.data()[i] * u.data()[i];
                    du.data_mut()[i] = du.data_mut()[i] * sv;
                }
                ds.data_mut()[item * c + ch] = acc;
            }
        }
        (du, ds)
    }

    pub fn sum<T: Scalar>(x: &Tensor<T>) -> T {
        let mut acc = T::zero();
        for &v in x.data() {
            acc = acc + v;
        }
        acc
    }

    /// Mean Charbonnier penalty `mean sqrt((pred-target)^2 + eps^2)`.
    pub fn charbonnier<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, epsilon: f64) -> Result<T> {
        if pred.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "charbonnier",
                expected: target.shape(),
                got: pred.shape(),
            });
        }
        let eps2 = T::from_f64(epsilon * epsilon);
        let mut acc = T::zero();
        for (&p, &t) in pred.data().iter().zip(target.data()) {
            let d = p - t;
            acc = acc + (d * d + eps2).sqrt();
        }
        Ok(acc / T::from_f64(pred.len() as f64))
    }

    /// `d/dpred` of the mean Charbonnier penalty, scaled by the upstream
    /// scalar gradient.
    pub fn charbonnier_backward<T: Scalar>(
        pred: &Tensor<T>,
        target: &Tensor<T>,
        epsilon: f64,
        grad_scalar: T,
    ) -> Tensor<T> {
        let eps2 = T::from_f64(epsilon * epsilon);
        let inv_n = T::from_f64(1.0 / pred.len() as f64);
        let mut dp = Tensor::zeros(pred.shape());
        for (g, (&p, &t)) in dp.data_mut().iter_mut().zip(pred.data().iter().zip(target.data())) {
            let d = p - t;
            *g = grad_scalar * inv_n * d / (d * d + eps2).sqrt();
        }
        dp
    }
}

pub mod tape {
    //! Recording wrappers: each runs the [`raw`] forward and pushes the
    //! matching backward closure.

    use crate::autodiff::{Tape, Var};

    use super::*;

    pub fn conv2d<T: Scalar>(
        tape: &Tape<T>,
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let y = tape.with_value(x, |xv| {
            tape.with_value(weight, |wv| {
                tape.with_value(bias, |bv| raw::conv2d(xv, wv, Some(bv), stride, padding))
            })
        })?;
        tape.push(
            "conv2d",
            y,
            vec![x, weight, bias],
            Box::new(move |grad, _y, parents| {
                let (dx, dw, db) = raw::conv2d_backward(parents[0], parents[1], stride, padding, grad)?;
                Ok(vec![dx, dw, db])
            }),
        )
    }

    pub fn conv_transpose2d<T: Scalar>(
        tape: &Tape<T>,
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let y = tape.with_value(x, |xv| {
            tape.with_value(weight, |wv| {
                tape.with_value(bias, |bv| raw::conv_transpose2d(xv, wv, Some(bv), stride, padding))
            })
        })?;
        tape.push(
            "conv_transpose2d",
            y,
            vec![x, weight, bias],
            Box::new(move |grad, _y, parents| {
                let (dx, dw, db) =
                    raw::conv_transpose2d_backward(parents[0], parents[1], stride, padding, grad)?;
                Ok(vec![dx, dw, db])
            }),
        )
    }

    pub fn leaky_relu<T: Scalar>(tape: &Tape<T>, x: Var, slope: f64) -> Result<Var> {
        let y = tape.with_value(x, |xv| raw::leaky_relu(xv, slope))?;
        tape.push(
            "leaky_relu",
            y,
            vec![x],
            Box::new(move |grad, _y, parents| Ok(vec![raw::leaky_relu_backward(parents[0], slope, grad)])),
        )
    }

    pub fn global_avg_pool<T: Scalar>(tape: &Tape<T>, x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        let z = tape.with_value(x, raw::global_avg_pool)?;
        tape.push(
            "global_avg_pool",
            z,
            vec![x],
            Box::new(move |grad, _y, _| Ok(vec![raw::global_avg_pool_backward(shape, grad)])),
        )
    }

    pub fn dense<T: Scalar>(tape: &Tape<T>, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = tape.with_value(x, |xv| {
            tape.with_value(weight, |wv| tape.with_value(bias, |bv| raw::dense(xv, wv, bv)))
        })?;
        tape.push(
            "dense",
            y,
            vec![x, weight, bias],
            Box::new(move |grad, _y, parents| {
                let (dx, dw, db) = raw::dense_backward(parents[0], parents[1], grad);
                Ok(vec![dx, dw, db])
            }),
        )
    }

    pub fn sigmoid<T: Scalar>(tape: &Tape<T>, x: Var) -> Result<Var> {
        let y = tape.with_value(x, |xv| Ok(raw::sigmoid(xv)))?;
        tape.push(
            "sigmoid",
            y,
            vec![x],
            Box::new(move |grad, y, _| Ok(vec![raw::sigmoid_backward(y, grad)])),
        )
    }

    pub fn add<T: Scalar>(tape: &Tape<T>, a: Var, b: Var) -> Result<Var> {
        let b_shape = tape.shape(b);
        let y = tape.with_value(a, |av| tape.with_value(b, |bv| raw::add(av, bv)))?;
        tape.push(
            "add",
            y,
            vec![a, b],
            Box::new(move |grad, _y, _| Ok(vec![grad.clone(), raw::add_rhs_backward(b_shape, grad)])),
        )
    }

    pub fn mul_channelwise<T: Scalar>(tape: &Tape<T>, u: Var, s: Var) -> Result<Var> {
        let y = tape.with_value(u, |uv| tape.with_value(s, |sv| raw::mul_channelwise(uv, sv)))?;
        tape.push(
            "mul_channelwise",
            y,
            vec![u, s],
            Box::new(move |grad, _y, parents| {
                let (du, ds) = raw::mul_channelwise_backward(parents[0], parents[1], grad);
                Ok(vec![du, ds])
            }),
        )
    }

    pub fn mul_elementwise<T: Scalar>(tape: &Tape<T>, a: Var, b: Var) -> Result<Var> {
        let y = tape.with_value(a, |av| {
            tape.with_value(b, |bv| {
                if av.shape() != bv.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "mul_elementwise",
                        expected: av.shape(),
                        got: bv.shape(),
                    });
                }
                let mut y = av.clone();
                for (v, &bvv) in y.data_mut().iter_mut().zip(bv.data()) {
                    *v = *v * bvv;
                }
                Ok(y)
            })
        })?;
        tape.push(
            "mul_elementwise",
            y,
            vec![a, b],
            Box::new(move |grad, _y, parents| {
                let mut da = grad.clone();
                for (g, &bv) in da.data_mut().iter_mut().zip(parents[1].data()) {
                    *g = *g * bv;
                }
                let mut db = grad.clone();
                for (g, &av) in db.data_mut().iter_mut().zip(parents[0].data()) {
                    *g = *g * av;
                }
                Ok(vec![da, db])
            }),
        )
    }

    pub fn sum<T: Scalar>(tape: &Tape<T>, x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        let s = tape.with_value(x, |xv| Tensor::scalar(raw::sum(xv)));
        tape.push(
            "sum",
            s,
            vec![x],
            Box::new(move |grad, _y, _| {
                let g = grad.data()[0];
                Ok(vec![Tensor::filled(shape, g)])
            }),
        )
    }

    pub fn scale<T: Scalar>(tape: &Tape<T>, x: Var, factor: f64) -> Result<Var> {
        let c = T::from_f64(factor);
        let y = tape.with_value(x, |xv| xv.map(|v| v * c));
        tape.push(
            "scale",
            y,
            vec![x],
            Box::new(move |grad, _y, _| Ok(vec![grad.map(|g| g * c)])),
        )
    }

    /// Mean Charbonnier penalty against a constant target.
    pub fn charbonnier<T: Scalar>(
        tape: &Tape<T>,
        pred: Var,
        target: &Tensor<T>,
        epsilon: f64,
    ) -> Result<Var> {
        let loss = tape.with_value(pred, |pv| raw::charbonnier(pv, target, epsilon))?;
        let target = target.clone();
        tape.push(
            "charbonnier",
            Tensor::scalar(loss),
            vec![pred],
            Box::new(move |grad, _y, parents| {
                Ok(vec![raw::charbonnier_backward(parents[0], &target, epsilon, grad.data()[0])])
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_ones_counts_overlap() {
        // 3x3 ones image, 3x3 ones kernel, p=1: center 9, edge-middle 6, corner 4.
        let x = Tensor::<f64>::filled([1, 1, 3, 3], 1.0);
        let w = Tensor::<f64>::filled([1, 1, 3, 3], 1.0);
        let b = Tensor::<f64>::zeros([1, 1, 1, 1]);
        let y = raw::conv2d(&x, &w, Some(&b), 1, 1).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&mut rng, [2, 1, 4, 4]);
        let w = Tensor::<f64>::filled([1, 1, 1, 1], 1.0);
        let b = Tensor::<f64>::zeros([1, 1, 1, 1]);
        let y = raw::conv2d(&x, &w, Some(&b), 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let x = Tensor::<f64>::zeros([1, 1, 2, 2]);
        let w = Tensor::<f64>::zeros([1, 1, 5, 5]);
        assert!(raw::conv2d(&x, &w, None, 1, 1).is_err());
    }

    #[test]
    fn conv_preserves_extents_with_same_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &hw in &[4usize, 7, 13, 32] {
            let x = rand_tensor(&mut rng, [1, 2, hw, hw]);
            let w = rand_tensor(&mut rng, [3, 2, 3, 3]);
            let b = Tensor::<f64>::zeros([1, 3, 1, 1]);
            let y = raw::conv2d(&x, &w, Some(&b), 1, 1).unwrap();
            assert_eq!(y.shape(), [1, 3, hw, hw]);
        }
    }

    #[test]
    fn conv_transpose_single_pixel_stamp() {
        // A single input pixel of value 1 reproduces the kernel.
        let x = Tensor::<f64>::filled([1, 1, 1, 1], 1.0);
        let w = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f64>::zeros([1, 1, 1, 1]);
        let y = raw::conv_transpose2d(&x, &w, Some(&b), 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv_transpose_size_law() {
        assert_eq!(conv_transpose_extent(24, 4, 2, 1).unwrap(), 48);
        assert_eq!(conv_transpose_extent(24, 8, 4, 2).unwrap(), 96);
        assert_eq!(conv_transpose_extent(24, 16, 8, 4).unwrap(), 192);
        assert_eq!(conv_transpose_extent(16, 16, 8, 4).unwrap(), 128);
        // Every supported triple upscales by exactly its stride.
        for &(k, s, p) in &[(4usize, 2usize, 1usize), (8, 4, 2), (16, 8, 4)] {
            for h in 1..=64 {
                assert_eq!(conv_transpose_extent(h, k, s, p).unwrap(), s * h);
            }
        }
    }

    #[test]
    fn conv_transpose_rejects_degenerate_extent() {
        assert!(conv_transpose_extent(1, 2, 1, 1).is_err());
    }

    #[test]
    fn adjoint_of_conv_is_conv_transpose() {
        // <conv(x), y> == <x, conv_transpose(y)> pins the scatter semantics.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, s, p) in &[(4usize, 2usize, 1usize), (8, 4, 2), (3, 1, 1)] {
            // Weight (a, b, k, k): conv maps b -> a channels, its adjoint a -> b.
            let (a_ch, b_ch, h) = (2, 3, 8);
            let ho = (h + 2 * p - k) / s + 1;
            let w = rand_tensor(&mut rng, [a_ch, b_ch, k, k]);
            let x = rand_tensor(&mut rng, [1, b_ch, h, h]);
            let y = rand_tensor(&mut rng, [1, a_ch, ho, ho]);
            let cx = raw::conv2d(&x, &w, None, s, p).unwrap();
            let ty = raw::conv_transpose2d(&y, &w, None, s, p).unwrap();
            let lhs: f64 = cx.data().iter().zip(y.data()).map(|(u, v)| u * v).sum();
            let rhs: f64 = x.data().iter().zip(ty.data()).map(|(u, v)| u * v).sum();
            assert!((lhs - rhs).abs() < 1e-10, "adjoint mismatch: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 4], vec![2.0, -1.0, -3.0, 3.0]).unwrap();
        let y = raw::leaky_relu(&x, 0.25).unwrap();
        assert_eq!(y.data(), &[2.0, -0.25, -0.75, 3.0]);
        let relu = raw::leaky_relu(&x, 0.0).unwrap();
        assert_eq!(relu.data(), &[2.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn leaky_relu_positively_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&mut rng, [1, 1, 3, 3]);
        let alpha = 2.5;
        let lhs = raw::leaky_relu(&x.map(|v| v * alpha), 0.2).unwrap();
        let rhs = raw::leaky_relu(&x, 0.2).unwrap().map(|v| v * alpha);
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_of_constant_and_mean() {
        let c = Tensor::<f64>::filled([1, 1, 3, 5], 7.5);
        assert_eq!(raw::global_avg_pool(&c).unwrap().data(), &[7.5]);
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(raw::global_avg_pool(&x).unwrap().data(), &[2.5]);
    }

    #[test]
    fn dense_identity_and_pure_bias() {
        let x = Tensor::<f64>::from_vec([1, 2, 1, 1], vec![0.3, -0.7]).unwrap();
        let eye = Tensor::<f64>::from_vec([1, 2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zb = Tensor::<f64>::zeros([1, 2, 1, 1]);
        assert_eq!(raw::dense(&x, &eye, &zb).unwrap().data(), x.data());

        let zw = Tensor::<f64>::zeros([1, 2, 1, 2]);
        let b = Tensor::<f64>::from_vec([1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
        assert_eq!(raw::dense(&x, &zw, &b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn sigmoid_values() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![0.0, 30.0, 1.7]).unwrap();
        let y = raw::sigmoid(&x);
        assert_eq!(y.data()[0], 0.5);
        assert!(y.data()[1] > 1.0 - 1e-12 && y.data()[1] < 1.0);
        // sigma(-v) = 1 - sigma(v)
        let neg = raw::sigmoid(&Tensor::scalar(-1.7));
        assert!((neg.data()[0] - (1.0 - y.data()[2])).abs() < 1e-15);
    }

    #[test]
    fn add_broadcast() {
        let a = Tensor::<f64>::filled([1, 2, 2, 2], 1.0);
        let b = Tensor::<f64>::from_vec([1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
        let y = raw::add(&a, &b).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0]);
        assert!(raw::add(&a, &Tensor::zeros([1, 3, 1, 1])).is_err());
    }

    #[test]
    fn broadcast_add_gradient_matches_tiled_add() {
        // Sum of the broadcast-input gradient over H,W equals the gradient of
        // the explicitly tiled add.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grad = rand_tensor(&mut rng, [2, 3, 4, 4]);
        let reduced = raw::add_rhs_backward([2, 3, 1, 1], &grad);
        for n in 0..2 {
            for c in 0..3 {
                let mut manual = 0.0;
                for h in 0..4 {
                    for w in 0..4 {
                        manual += grad.at(n, c, h, w);
                    }
                }
                assert!((reduced.at(n, c, 0, 0) - manual).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_scaling_values() {
        let u = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = Tensor::<f64>::scalar(0.5);
        let y = raw::mul_channelwise(&u, &s).unwrap();
        assert_eq!(y.data(), &[0.5, 1.0, 1.5, 2.0]);
        let ones = Tensor::<f64>::scalar(1.0);
        assert_eq!(raw::mul_channelwise(&u, &ones).unwrap().data(), u.data());
    }

    #[test]
    fn charbonnier_values() {
        let p = Tensor::<f64>::scalar(0.3);
        let t = Tensor::<f64>::scalar(0.0);
        let loss = raw::charbonnier(&p, &t, 1e-3).unwrap();
        assert!((loss - (0.09f64 + 1e-6).sqrt()).abs() < 1e-15);
        // pred == target -> loss == epsilon
        let same = raw::charbonnier(&t, &t, 1e-3).unwrap();
        assert!((same - 1e-3).abs() < 1e-18);
        // gradient at z=0 is 0, at z=epsilon it is 1/sqrt(2)
        let g0 = raw::charbonnier_backward(&t, &t, 1e-3, 1.0);
        assert_eq!(g0.data()[0], 0.0);
        let pe = Tensor::<f64>::scalar(1e-3);
        let ge = raw::charbonnier_backward(&pe, &t, 1e-3, 1.0);
        assert!((ge.data()[0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn charbonnier_penalty_shape() {
        // rho is even, >= max(|z|, eps), and approaches |z| for large z.
        let eps = 1e-3;
        for &z in &[0.0, 1e-3, 1e-2, 1.0] {
            let rho = |v: f64| (v * v + eps * eps).sqrt();
            assert!((rho(z) - rho(-z)).abs() < 1e-18);
            assert!(rho(z) >= z.abs().max(eps));
        }
        let rho1 = (1f64 + eps * eps).sqrt();
        assert!(rho1 - 1.0 < 1e-6);
    }
}
