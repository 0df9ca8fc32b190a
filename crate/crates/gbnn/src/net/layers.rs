//! Hand-written layer forward/backward kernels. Everything fp64, explicit
//! loops, no autodiff; each layer is finite-difference checked in tests.

use crate::matrix::Matrix;
use crate::rng::SeededRng;

/// Shape-level description of a layer, used for checkpoint headers and
/// composition checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Relu,
    Conv5x5 { in_ch: usize, out_ch: usize, in_h: usize, in_w: usize },
    MaxPool2x2 { ch: usize, in_h: usize, in_w: usize },
    Flatten,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub input: usize,
    pub output: usize,
    /// Row-major (output x input).
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLayer {
    /// Fan-in-scaled uniform init, biases zero.
    pub fn init(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = (0..input * output)
            .map(|_| rng.gen_range_f64(-bound, bound))
            .collect();
        Self {
            input,
            output,
            w,
            b: vec![0.0; output],
        }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.input, "dense input width mismatch");
        let mut y = Matrix::zeros(x.rows(), self.output);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let yr = y.row_mut(r);
            for o in 0..self.output {
                let wrow = &self.w[o * self.input..(o + 1) * self.input];
                let mut acc = self.b[o];
                for i in 0..self.input {
                    acc += xr[i] * wrow[i];
                }
                yr[o] = acc;
            }
        }
        y
    }

    /// Returns (grad wrt input, grad wrt w, grad wrt b).
    pub fn backward(&self, x: &Matrix, dy: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        assert_eq!(dy.cols(), self.output);
        assert_eq!(dy.rows(), x.rows());
        let mut dx = Matrix::zeros(x.rows(), self.input);
        let mut dw = vec![0.0; self.w.len()];
        let mut db = vec![0.0; self.output];
        for r in 0..x.rows() {
            let xr = x.row(r);
            let dyr = dy.row(r);
            let dxr = dx.row_mut(r);
            for o in 0..self.output {
                let g = dyr[o];
                db[o] += g;
                let wrow = &self.w[o * self.input..(o + 1) * self.input];
                let dwrow = &mut dw[o * self.input..(o + 1) * self.input];
                for i in 0..self.input {
                    dxr[i] += g * wrow[i];
                    dwrow[i] += g * xr[i];
                }
            }
        }
        (dx, dw, db)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    /// [out_ch][in_ch][5][5] flattened.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

pub const KERNEL: usize = 5;

impl ConvLayer {
    pub fn init(in_ch: usize, out_ch: usize, in_h: usize, in_w: usize, rng: &mut SeededRng) -> Self {
        let fan_in = in_ch * KERNEL * KERNEL;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..out_ch * fan_in)
            .map(|_| rng.gen_range_f64(-bound, bound))
            .collect();
        Self {
            in_ch,
            out_ch,
            in_h,
            in_w,
            w,
            b: vec![0.0; out_ch],
        }
    }

    pub fn out_h(&self) -> usize {
        self.in_h - KERNEL + 1
    }

    pub fn out_w(&self) -> usize {
        self.in_w - KERNEL + 1
    }

    /// Valid convolution, stride 1. Rows are channel-major flattened images.
    pub fn forward(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.in_ch * self.in_h * self.in_w);
        let (oh, ow) = (self.out_h(), self.out_w());
        let mut y = Matrix::zeros(x.rows(), self.out_ch * oh * ow);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let yr = y.row_mut(r);
            for oc in 0..self.out_ch {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = self.b[oc];
                        for ic in 0..self.in_ch {
                            let xoff = ic * self.in_h * self.in_w;
                            let woff = (oc * self.in_ch + ic) * KERNEL * KERNEL;
                            for kh in 0..KERNEL {
                                let xrow = xoff + (i + kh) * self.in_w + j;
                                let wrow = woff + kh * KERNEL;
                                for kw in 0..KERNEL {
                                    acc += xr[xrow + kw] * self.w[wrow + kw];
                                }
                            }
                        }
                        yr[oc * oh * ow + i * ow + j] = acc;
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &Matrix, dy: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let (oh, ow) = (self.out_h(), self.out_w());
        assert_eq!(dy.cols(), self.out_ch * oh * ow);
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        let mut dw = vec![0.0; self.w.len()];
        let mut db = vec![0.0; self.out_ch];
        for r in 0..x.rows() {
            let xr = x.row(r);
            let dyr = dy.row(r);
            let dxr = dx.row_mut(r);
            for oc in 0..self.out_ch {
                for i in 0..oh {
                    for j in 0..ow {
                        let g = dyr[oc * oh * ow + i * ow + j];
                        db[oc] += g;
                        for ic in 0..self.in_ch {
                            let xoff = ic * self.in_h * self.in_w;
                            let woff = (oc * self.in_ch + ic) * KERNEL * KERNEL;
                            for kh in 0..KERNEL {
                                let xrow = xoff + (i + kh) * self.in_w + j;
                                let wrow = woff + kh * KERNEL;
                                for kw in 0..KERNEL {
                                    dxr[xrow + kw] += g * self.w[wrow + kw];
                                    dw[wrow + kw] += g * xr[xrow + kw];
                                }
                            }
                        }
                    }
                }
            }
        }
        (dx, dw, db)
    }
}

pub fn relu_forward(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

pub fn relu_backward(x: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// 2x2 max pooling, stride 2. Returns output plus the flat argmax index of
/// each pooled element (ties resolved to the first in scan order).
pub fn maxpool2x2_forward(
    x: &Matrix,
    ch: usize,
    in_h: usize,
    in_w: usize,
) -> (Matrix, Vec<usize>) {
    assert_eq!(x.cols(), ch * in_h * in_w);
    assert!(in_h % 2 == 0 && in_w % 2 == 0, "pool needs even dims");
    let (oh, ow) = (in_h / 2, in_w / 2);
    let mut y = Matrix::zeros(x.rows(), ch * oh * ow);
    let mut argmax = vec![0usize; x.rows() * ch * oh * ow];
    for r in 0..x.rows() {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for c in 0..ch {
            let base = c * in_h * in_w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best_idx = base + (2 * i) * in_w + 2 * j;
                    let mut best = xr[best_idx];
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * in_w + 2 * j + dj;
                        if xr[idx] > best {
                            best = xr[idx];
                            best_idx = idx;
                        }
                    }
                    let out_idx = c * oh * ow + i * ow + j;
                    yr[out_idx] = best;
                    argmax[r * ch * oh * ow + out_idx] = best_idx;
                }
            }
        }
    }
    (y, argmax)
}

pub fn maxpool2x2_backward(
    dy: &Matrix,
    argmax: &[usize],
    in_cols: usize,
) -> Matrix {
    let mut dx = Matrix::zeros(dy.rows(), in_cols);
    let out_cols = dy.cols();
    for r in 0..dy.rows() {
        let dyr = dy.row(r);
        let dxr = dx.row_mut(r);
        for k in 0..out_cols {
            dxr[argmax[r * out_cols + k]] += dyr[k];
        }
    }
    dx
}
