//! 2-D convolution via im2col + GEMM, CHW layout, single sample.
//!
//! Weights are used in standardized form: each output channel's filter is
//! shifted to zero mean and scaled to variance `SILU_GAIN² / fan_in`, which
//! keeps activation scale fixed under SiLU no matter how the raw weights
//! drift during training.

/// `1 / sqrt(Var[silu(z)])` for `z ~ N(0, 1)`.
pub(crate) const SILU_GAIN: f64 = 1.788_1;
const WS_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvLayer {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Offset of the `out_c × (in_c·k·k)` weight matrix in the parameter vector.
    pub w: usize,
    /// Offset of the `out_c` biases.
    pub b: usize,
}

impl ConvLayer {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, in_h: usize, in_w: usize) -> Self {
        let pad = k / 2;
        let out = |n: usize| (n + 2 * pad - k) / stride + 1;
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            in_h,
            in_w,
            out_h: out(in_h),
            out_w: out(in_w),
            w: 0,
            b: 0,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.fan_in()
    }

    pub fn fan_in(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    /// Standardized weights and the per-channel `sqrt(var + eps)`.
    fn standardized(&self, params: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.fan_in();
        let gain = SILU_GAIN / (n as f64).sqrt();
        let raw = &params[self.w..self.w + self.weight_len()];
        let mut w = Vec::with_capacity(raw.len());
        let mut sigma = Vec::with_capacity(self.out_c);
        for row in raw.chunks_exact(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let s = (var + WS_EPS).sqrt();
            w.extend(row.iter().map(|x| gain * (x - mean) / s));
            sigma.push(s);
        }
        (w, sigma)
    }

    /// Chain rule through [`Self::standardized`]: `gw_hat` is the gradient
    /// with respect to the standardized weights.
    fn standardize_backward(&self, w_hat: &[f64], sigma: &[f64], gw_hat: &[f64], grads: &mut [f64]) {
        let n = self.fan_in();
        let gain = SILU_GAIN / (n as f64).sqrt();
        let gw = &mut grads[self.w..self.w + self.weight_len()];
        for (r, &s) in sigma.iter().enumerate() {
            let rows = r * n..(r + 1) * n;
            let u = &w_hat[rows.clone()];
            let g = &gw_hat[rows.clone()];
            let g_mean = g.iter().sum::<f64>() / n as f64;
            let gu_mean = g.iter().zip(u).map(|(a, b)| a * b / gain).sum::<f64>() / n as f64;
            for ((dst, &gi), &ui) in gw[rows].iter_mut().zip(g).zip(u) {
                *dst += gain / s * (gi - g_mean - ui / gain * gu_mean);
            }
        }
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col(&self, input: &[f64], col: &mut Vec<f64>) {
        let p = self.positions();
        col.clear();
        col.resize(self.fan_in() * p, 0.0);
        for ic in 0..self.in_c {
            let plane = &input[ic * self.in_h * self.in_w..(ic + 1) * self.in_h * self.in_w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ic * self.k + ky) * self.k + kx;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                dst[oy * self.out_w + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, col: &[f64], din: &mut [f64]) {
        let p = self.positions();
        for ic in 0..self.in_c {
            let plane = &mut din[ic * self.in_h * self.in_w..(ic + 1) * self.in_h * self.in_w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ic * self.k + ky) * self.k + kx;
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let base = iy as usize * self.in_w;
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                plane[base + ix as usize] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `out = Ŵ · im2col(input) + b`.
    pub fn forward(&self, params: &[f64], input: &[f64], out: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        debug_assert_eq!(input.len(), self.in_len());
        let p = self.positions();
        let kk = self.fan_in();
        out.clear();
        out.reserve(self.out_len());
        for oc in 0..self.out_c {
            out.extend(std::iter::repeat_n(params[self.b + oc], p));
        }
        let col: &[f64] = if self.is_pointwise() {
            input
        } else {
            self.im2col(input, scratch);
            scratch
        };
        let (w, _) = self.standardized(params);
        // SAFETY: slice lengths match the dimensions and strides passed.
        unsafe {
            matrixmultiply::dgemm(
                self.out_c, kk, p,
                1.0,
                w.as_ptr(), kk as isize, 1,
                col.as_ptr(), p as isize, 1,
                1.0,
                out.as_mut_ptr(), p as isize, 1,
            );
        }
    }

    /// Accumulates weight/bias gradients into `grads` and, when `din` is
    /// given, adds the input gradient to it.
    pub fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        input: &[f64],
        dout: &[f64],
        din: Option<&mut [f64]>,
        scratch: &mut Vec<f64>,
    ) {
        let p = self.positions();
        let kk = self.fan_in();
        debug_assert_eq!(dout.len(), self.out_len());

        for oc in 0..self.out_c {
            grads[self.b + oc] += dout[oc * p..(oc + 1) * p].iter().sum::<f64>();
        }

        let col: &[f64] = if self.is_pointwise() {
            input
        } else {
            self.im2col(input, scratch);
            scratch
        };
        let (w, sigma) = self.standardized(params);
        let mut gw_hat = vec![0.0; self.weight_len()];
        // dŴ = dout · colᵀ
        unsafe {
            matrixmultiply::dgemm(
                self.out_c, p, kk,
                1.0,
                dout.as_ptr(), p as isize, 1,
                col.as_ptr(), 1, p as isize,
                0.0,
                gw_hat.as_mut_ptr(), kk as isize, 1,
            );
        }
        self.standardize_backward(&w, &sigma, &gw_hat, grads);

        let Some(din) = din else { return };
        let mut dcol = vec![0.0; kk * p];
        // dcol = Ŵᵀ · dout
        unsafe {
            matrixmultiply::dgemm(
                kk, self.out_c, p,
                1.0,
                w.as_ptr(), 1, kk as isize,
                dout.as_ptr(), p as isize, 1,
                0.0,
                dcol.as_mut_ptr(), p as isize, 1,
            );
        }
        if self.is_pointwise() {
            for (d, c) in din.iter_mut().zip(&dcol) {
                *d += c;
            }
        } else {
            self.col2im_add(&dcol, din);
        }
    }
}
