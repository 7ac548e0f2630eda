//! Convolution, pooling and dense primitives used by the residual
//! classifier. Convolutions are same-padded and implemented as im2col plus
//! a matrix product, double precision throughout.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

/// Unfold a (C, H, W) volume into a (C*kh*kw, H*W) patch matrix with zero
/// padding so the convolution output keeps the spatial shape.
pub fn im2col(x: &Array3<f64>, kh: usize, kw: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let (ph, pw) = (kh / 2, kw / 2);
    let mut col = Array2::zeros((c * kh * kw, h * w));
    for ci in 0..c {
        for i in 0..kh {
            for j in 0..kw {
                let row = ci * kh * kw + i * kw + j;
                for y in 0..h {
                    let sy = y as isize + i as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xpos in 0..w {
                        let sx = xpos as isize + j as isize - pw as isize;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        col[[row, y * w + xpos]] = x[[ci, sy as usize, sx as usize]];
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add the patch-matrix gradient back onto the input volume.
pub fn col2im(dcol: &Array2<f64>, c: usize, h: usize, w: usize, kh: usize, kw: usize) -> Array3<f64> {
    let (ph, pw) = (kh / 2, kw / 2);
    let mut dx = Array3::zeros((c, h, w));
    for ci in 0..c {
        for i in 0..kh {
            for j in 0..kw {
                let row = ci * kh * kw + i * kw + j;
                for y in 0..h {
                    let sy = y as isize + i as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xpos in 0..w {
                        let sx = xpos as isize + j as isize - pw as isize;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        dx[[ci, sy as usize, sx as usize]] += dcol[[row, y * w + xpos]];
                    }
                }
            }
        }
    }
    dx
}

/// Same-padded convolution: weights (C_out, C_in*kh*kw) as a matrix over the
/// unfolded input. Returns the output volume and the patch matrix, which the
/// backward pass reuses.
pub fn conv_forward(
    x: &Array3<f64>,
    w_mat: &ArrayView2<f64>,
    bias: &ArrayView1<f64>,
    kh: usize,
    kw: usize,
) -> (Array3<f64>, Array2<f64>) {
    let (_, h, w) = x.dim();
    let col = im2col(x, kh, kw);
    let mut y_mat = w_mat.dot(&col);
    for (mut row, &b) in y_mat.axis_iter_mut(Axis(0)).zip(bias.iter()) {
        row += b;
    }
    let c_out = w_mat.shape()[0];
    let y = y_mat.into_shape_with_order((c_out, h, w)).unwrap();
    (y, col)
}

pub struct ConvGrads {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
    pub dx: Array3<f64>,
}

/// Backward pass of [`conv_forward`].
pub fn conv_backward(
    dy: &Array3<f64>,
    col: &Array2<f64>,
    w_mat: &ArrayView2<f64>,
    c_in: usize,
    kh: usize,
    kw: usize,
) -> ConvGrads {
    let (c_out, h, w) = dy.dim();
    let dy_mat = dy
        .to_owned()
        .into_shape_with_order((c_out, h * w))
        .unwrap();
    let dw = dy_mat.dot(&col.t());
    let db = dy_mat.sum_axis(Axis(1));
    let dcol = w_mat.t().dot(&dy_mat);
    let dx = col2im(&dcol, c_in, h, w, kh, kw);
    ConvGrads { dw, db, dx }
}

pub fn relu(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| v.max(0.0))
}

/// dL/dx given dL/dy and the pre-activation, using the x > 0 subgradient.
pub fn relu_backward(dy: &Array3<f64>, pre: &Array3<f64>) -> Array3<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(pre, |d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Mean over the spatial axes, one value per channel.
pub fn global_avg_pool(x: &Array3<f64>) -> Array1<f64> {
    let (c, h, w) = x.dim();
    let scale = 1.0 / (h * w) as f64;
    Array1::from_iter((0..c).map(|ci| x.index_axis(Axis(0), ci).sum() * scale))
}

pub fn global_avg_pool_backward(dpool: &ArrayView1<f64>, c: usize, h: usize, w: usize) -> Array3<f64> {
    let scale = 1.0 / (h * w) as f64;
    let mut dx = Array3::zeros((c, h, w));
    for ci in 0..c {
        dx.index_axis_mut(Axis(0), ci).fill(dpool[ci] * scale);
    }
    dx
}

/// Per-channel spatial maximum and its flat argmax (first occurrence).
pub fn global_max_pool(x: &Array3<f64>) -> (Array1<f64>, Vec<usize>) {
    let (c, h, w) = x.dim();
    let mut vals = Array1::zeros(c);
    let mut args = vec![0usize; c];
    for ci in 0..c {
        let plane = x.index_axis(Axis(0), ci);
        let flat = plane.as_slice().unwrap();
        let (mut best_i, mut best) = (0usize, flat[0]);
        for (i, &v) in flat.iter().enumerate() {
            if v > best {
                best = v;
                best_i = i;
            }
        }
        vals[ci] = best;
        args[ci] = best_i;
        let _ = (h, w);
    }
    (vals, args)
}

/// Route each channel's gradient to the element that produced the maximum.
pub fn global_max_pool_backward(
    dpool: &ArrayView1<f64>,
    argmax: &[usize],
    c: usize,
    h: usize,
    w: usize,
) -> Array3<f64> {
    let mut dx = Array3::zeros((c, h, w));
    for ci in 0..c {
        let (y, x_pos) = (argmax[ci] / w, argmax[ci] % w);
        dx[[ci, y, x_pos]] = dpool[ci];
    }
    dx
}

/// Numerically stable log(1 + e^z).
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
