//! Dense `C×H×W` feature maps and the handful of differentiable kernels the
//! separation / uncertainty / fusion pipeline is built from.
//!
//! Every kernel comes as a `forward` plus an explicit `backward` that takes the
//! upstream gradient and returns gradients for each input. There is no graph
//! or tape; callers chain backward passes by hand. Everything is `f64` so the
//! analytic gradients can be checked against central finite differences.

use rand::Rng;

use crate::error::{shape_err, Error, Result};

/// A `channels × height × width` tensor stored row-major (`c`, then `y`, then `x`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return shape_err(format!(
                "feature map dimensions must be >= 1, got {channels}x{height}x{width}"
            ));
        }
        if data.len() != channels * height * width {
            return shape_err(format!(
                "buffer length {} does not match {channels}x{height}x{width}",
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite value {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
            grad: None,
        })
    }

    /// Constant-valued map. Panics on a zero dimension.
    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        assert!(
            channels > 0 && height > 0 && width > 0,
            "feature map dimensions must be >= 1"
        );
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
            grad: None,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    /// Channel `c` as a contiguous `height × width` slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &FeatureMap) -> Result<()> {
        ensure_same_shape(self, g, "accumulate_grad")?;
        match &mut self.grad {
            Some(buf) => {
                for (b, v) in buf.iter_mut().zip(&g.data) {
                    *b += v;
                }
            }
            None => self.grad = Some(g.data.clone()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn same_shape_from(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
            grad: None,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.same_shape_from(self.data.iter().map(|&v| f(v)).collect())
    }

    /// Sum over all elements of `self ⊙ weights`. Handy as a scalar loss.
    pub fn dot(&self, other: &FeatureMap) -> Result<f64> {
        ensure_same_shape(self, other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

pub(crate) fn ensure_same_shape(a: &FeatureMap, b: &FeatureMap, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

/// 2D convolution with zero padding. Weight layout is `(c_out, c_in, kh, kw)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    c_out: usize,
    c_in: usize,
    kh: usize,
    kw: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
    stride: usize,
    padding: usize,
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads {
    pub input: FeatureMap,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c_out: usize,
        c_in: usize,
        kh: usize,
        kw: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if c_out == 0 || c_in == 0 || kh == 0 || kw == 0 {
            return shape_err("convolution dimensions must be >= 1");
        }
        if stride == 0 {
            return Err(Error::Parameter("convolution stride must be >= 1".into()));
        }
        if weight.len() != c_out * c_in * kh * kw {
            return shape_err(format!(
                "kernel has {} values, expected {c_out}x{c_in}x{kh}x{kw}",
                weight.len()
            ));
        }
        if bias.len() != c_out {
            return shape_err(format!("bias has {} values, expected {c_out}", bias.len()));
        }
        Ok(Self {
            c_out,
            c_in,
            kh,
            kw,
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// `1×1` convolution passing every channel through unchanged.
    pub fn identity(channels: usize) -> Self {
        let mut weight = vec![0.0; channels * channels];
        for c in 0..channels {
            weight[c * channels + c] = 1.0;
        }
        Self::new(channels, channels, 1, 1, weight, vec![0.0; channels], 1, 0)
            .expect("identity conv is well-formed")
    }

    pub fn zeros(c_out: usize, c_in: usize, kh: usize, kw: usize, stride: usize, padding: usize) -> Self {
        Self::new(
            c_out,
            c_in,
            kh,
            kw,
            vec![0.0; c_out * c_in * kh * kw],
            vec![0.0; c_out],
            stride,
            padding,
        )
        .expect("zero conv is well-formed")
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation for weights and bias.
    #[allow(clippy::too_many_arguments)]
    pub fn random<R: Rng + ?Sized>(
        c_out: usize,
        c_in: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / ((c_in * kh * kw) as f64).sqrt();
        let weight = (0..c_out * c_in * kh * kw)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..c_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(c_out, c_in, kh, kw, weight, bias, stride, padding)
    }

    pub fn in_channels(&self) -> usize {
        self.c_in
    }

    pub fn out_channels(&self) -> usize {
        self.c_out
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kh, self.kw)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.c_in + i) * self.kh + ky) * self.kw + kx
    }

    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let ph = height + 2 * self.padding;
        let pw = width + 2 * self.padding;
        if ph < self.kh || pw < self.kw {
            return shape_err(format!(
                "{}x{} kernel does not fit a {height}x{width} input with padding {}",
                self.kh, self.kw, self.padding
            ));
        }
        Ok(((ph - self.kh) / self.stride + 1, (pw - self.kw) / self.stride + 1))
    }

    fn check_input(&self, input: &FeatureMap) -> Result<(usize, usize)> {
        if input.channels() != self.c_in {
            return shape_err(format!(
                "conv expects {} input channels, got {}",
                self.c_in,
                input.channels()
            ));
        }
        self.output_size(input.height(), input.width())
    }

    /// Input coordinate touched by output index `o` and kernel tap `k`, if inside.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    pub fn forward(&self, input: &FeatureMap) -> Result<FeatureMap> {
        let (oh, ow) = self.check_input(input)?;
        let (h, w) = (input.height(), input.width());
        let mut out = Vec::with_capacity(self.c_out * oh * ow);
        for o in 0..self.c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[o];
                    for i in 0..self.c_in {
                        for ky in 0..self.kh {
                            let Some(iy) = self.src(oy, ky, h) else { continue };
                            for kx in 0..self.kw {
                                let Some(ix) = self.src(ox, kx, w) else { continue };
                                acc += self.weight[self.widx(o, i, ky, kx)] * input.get(i, iy, ix);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        FeatureMap::new(self.c_out, oh, ow, out)
    }

    pub fn backward(&self, input: &FeatureMap, grad_out: &FeatureMap) -> Result<Conv2dGrads> {
        let (oh, ow) = self.check_input(input)?;
        if grad_out.shape() != (self.c_out, oh, ow) {
            return shape_err(format!(
                "conv grad_out has shape {:?}, expected {:?}",
                grad_out.shape(),
                (self.c_out, oh, ow)
            ));
        }
        let (h, w) = (input.height(), input.width());
        let mut g_in = vec![0.0; input.len()];
        let mut g_w = vec![0.0; self.weight.len()];
        let mut g_b = vec![0.0; self.c_out];
        for o in 0..self.c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad_out.get(o, oy, ox);
                    g_b[o] += g;
                    for i in 0..self.c_in {
                        for ky in 0..self.kh {
                            let Some(iy) = self.src(oy, ky, h) else { continue };
                            for kx in 0..self.kw {
                                let Some(ix) = self.src(ox, kx, w) else { continue };
                                let wi = self.widx(o, i, ky, kx);
                                let ii = input.index(i, iy, ix);
                                g_w[wi] += g * input.data[ii];
                                g_in[ii] += g * self.weight[wi];
                            }
                        }
                    }
                }
            }
        }
        Ok(Conv2dGrads {
            input: input.same_shape_from(g_in),
            weight: g_w,
            bias: g_b,
        })
    }
}

/// Fully connected layer `y = W x + b`, `W` stored `(out, in)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    out_dim: usize,
    in_dim: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads {
    pub input: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(out_dim: usize, in_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return shape_err("linear layer dimensions must be >= 1");
        }
        if weight.len() != out_dim * in_dim {
            return shape_err(format!(
                "linear weight has {} values, expected {out_dim}x{in_dim}",
                weight.len()
            ));
        }
        if bias.len() != out_dim {
            return shape_err(format!("linear bias has {} values, expected {out_dim}", bias.len()));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weight,
            bias,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self::new(dim, dim, weight, vec![0.0; dim]).expect("identity linear is well-formed")
    }

    pub fn random<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = (0..out_dim * in_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(out_dim, in_dim, weight, bias)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn check_len(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.in_dim {
            return shape_err(format!(
                "linear layer expects {} inputs, got {}",
                self.in_dim,
                input.len()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_len(input)?;
        Ok(self
            .weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }

    pub fn backward(&self, input: &[f64], grad_out: &[f64]) -> Result<LinearGrads> {
        self.check_len(input)?;
        if grad_out.len() != self.out_dim {
            return shape_err(format!(
                "linear grad_out has {} values, expected {}",
                grad_out.len(),
                self.out_dim
            ));
        }
        let mut g_in = vec![0.0; self.in_dim];
        let mut g_w = vec![0.0; self.weight.len()];
        for (o, &g) in grad_out.iter().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let g_row = &mut g_w[o * self.in_dim..(o + 1) * self.in_dim];
            for j in 0..self.in_dim {
                g_row[j] = g * input[j];
                g_in[j] += g * row[j];
            }
        }
        Ok(LinearGrads {
            input: g_in,
            weight: g_w,
            bias: grad_out.to_vec(),
        })
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &FeatureMap) -> FeatureMap {
    input.map(sigmoid_scalar)
}

/// Backward of [`sigmoid`] expressed through its forward output.
pub fn sigmoid_backward(output: &FeatureMap, grad_out: &FeatureMap) -> Result<FeatureMap> {
    ensure_same_shape(output, grad_out, "sigmoid_backward")?;
    Ok(output.same_shape_from(
        output
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(s, g)| g * s * (1.0 - s))
            .collect(),
    ))
}

/// Numerically stable softmax (max-subtracted). Empty input yields empty output.
pub fn softmax(input: &[f64]) -> Vec<f64> {
    let max = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = input.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax_backward(output: &[f64], grad_out: &[f64]) -> Result<Vec<f64>> {
    if output.len() != grad_out.len() {
        return shape_err(format!(
            "softmax_backward: {} outputs vs {} gradients",
            output.len(),
            grad_out.len()
        ));
    }
    let inner: f64 = output.iter().zip(grad_out).map(|(y, g)| y * g).sum();
    Ok(output
        .iter()
        .zip(grad_out)
        .map(|(y, g)| y * (g - inner))
        .collect())
}

/// Source taps `(lo, hi, frac)` for one axis of an align-corners=false resize.
fn resize_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

fn check_upsample_target(input: (usize, usize), target: (usize, usize)) -> Result<()> {
    let (h, w) = input;
    let (th, tw) = target;
    if th < h || tw < w {
        return shape_err(format!(
            "upsample target {th}x{tw} is smaller than source {h}x{w}"
        ));
    }
    Ok(())
}

/// `a + (b − a) t`: returns `a` exactly when `a == b`, so constants survive resizing.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Bilinear resize with align-corners=false semantics (half-pixel centres).
pub fn bilinear_upsample(input: &FeatureMap, target: (usize, usize)) -> Result<FeatureMap> {
    check_upsample_target((input.height(), input.width()), target)?;
    let (th, tw) = target;
    let ty = resize_taps(input.height(), th);
    let tx = resize_taps(input.width(), tw);
    let mut out = Vec::with_capacity(input.channels() * th * tw);
    for c in 0..input.channels() {
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = lerp(input.get(c, y0, x0), input.get(c, y0, x1), fx);
                let bottom = lerp(input.get(c, y1, x0), input.get(c, y1, x1), fx);
                out.push(lerp(top, bottom, fy));
            }
        }
    }
    FeatureMap::new(input.channels(), th, tw, out)
}

/// Backward of [`bilinear_upsample`]; `input_shape` is the `(C, H, W)` of the forward input.
pub fn bilinear_upsample_backward(
    input_shape: (usize, usize, usize),
    grad_out: &FeatureMap,
) -> Result<FeatureMap> {
    let (c, h, w) = input_shape;
    let (th, tw) = (grad_out.height(), grad_out.width());
    check_upsample_target((h, w), (th, tw))?;
    if grad_out.channels() != c {
        return shape_err("upsample backward: channel count differs");
    }
    let ty = resize_taps(h, th);
    let tx = resize_taps(w, tw);
    let mut g = FeatureMap::zeros(c, h, w);
    for ch in 0..c {
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let go = grad_out.get(ch, oy, ox);
                let base = ch * h * w;
                g.data[base + y0 * w + x0] += go * (1.0 - fy) * (1.0 - fx);
                g.data[base + y0 * w + x1] += go * (1.0 - fy) * fx;
                g.data[base + y1 * w + x0] += go * fy * (1.0 - fx);
                g.data[base + y1 * w + x1] += go * fy * fx;
            }
        }
    }
    Ok(g)
}

pub fn add(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    ensure_same_shape(a, b, "add")?;
    Ok(a.same_shape_from(a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect()))
}

pub fn elementwise_mul(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    ensure_same_shape(a, b, "elementwise_mul")?;
    Ok(a.same_shape_from(a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect()))
}

/// Gradients of `a ⊙ b` with respect to `a` and `b`.
pub fn elementwise_mul_backward(
    a: &FeatureMap,
    b: &FeatureMap,
    grad_out: &FeatureMap,
) -> Result<(FeatureMap, FeatureMap)> {
    ensure_same_shape(a, b, "elementwise_mul_backward")?;
    ensure_same_shape(a, grad_out, "elementwise_mul_backward")?;
    let ga = elementwise_mul(b, grad_out)?;
    let gb = elementwise_mul(a, grad_out)?;
    Ok((ga, gb))
}

/// Repeats a single-channel map `channels` times.
pub fn broadcast_channels(input: &FeatureMap, channels: usize) -> Result<FeatureMap> {
    if input.channels() != 1 {
        return shape_err(format!(
            "broadcast_channels expects 1 channel, got {}",
            input.channels()
        ));
    }
    let data = input.data.repeat(channels);
    FeatureMap::new(channels, input.height(), input.width(), data)
}

/// Backward of [`broadcast_channels`]: sums the gradient over channels.
pub fn broadcast_channels_backward(grad_out: &FeatureMap) -> FeatureMap {
    let plane = grad_out.height() * grad_out.width();
    let mut g = vec![0.0; plane];
    for c in 0..grad_out.channels() {
        for (acc, v) in g.iter_mut().zip(grad_out.channel(c)) {
            *acc += v;
        }
    }
    FeatureMap {
        channels: 1,
        height: grad_out.height(),
        width: grad_out.width(),
        data: g,
        grad: None,
    }
}
