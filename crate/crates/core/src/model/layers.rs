//! Convolutional building blocks with explicit backward passes.
//!
//! Training-mode forward returns a [`Cache`] per layer; `backward` consumes
//! it, accumulating parameter gradients into [`Param::grad`] and returning
//! the gradient with respect to the layer input. Per-sample work runs on the
//! rayon pool; per-sample parameter gradients are summed in sample order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;

use super::tensor::{gemm, Param, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        Self {
            weight: Param::zeros(vec![out_channels, in_channels, kernel, kernel]),
            bias: bias.then(|| Param::zeros(vec![out_channels])),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let mut cols = vec![0.0; self.in_channels * k * k * ho * wo];
        for c in 0..self.in_channels {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for i in 0..k {
                for j in 0..k {
                    let row = ((c * k + i) * k + j) * ho * wo;
                    for oy in 0..ho {
                        let iy = (oy * self.stride + i) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut cols[row + oy * wo..row + (oy + 1) * wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + j) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let mut x = vec![0.0; self.in_channels * h * w];
        for c in 0..self.in_channels {
            let plane = &mut x[c * h * w..(c + 1) * h * w];
            for i in 0..k {
                for j in 0..k {
                    let row = ((c * k + i) * k + j) * ho * wo;
                    for oy in 0..ho {
                        let iy = (oy * self.stride + i) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &cols[row + oy * wo..row + (oy + 1) * wo];
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &g) in src.iter().enumerate() {
                            let ix = (ox * self.stride + j) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
        x
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_channels, "conv input channels");
        let (ho, wo) = self.output_hw(x.h, x.w);
        let ckk = self.in_channels * self.kernel * self.kernel;
        let outs: Vec<Vec<f64>> = (0..x.n)
            .into_par_iter()
            .map(|i| {
                let xs = x.sample(i);
                let mut y = vec![0.0; self.out_channels * ho * wo];
                if self.is_pointwise() {
                    gemm(self.out_channels, ckk, ho * wo, &self.weight.value, false, xs, false, 0.0, &mut y);
                } else {
                    let cols = self.im2col(xs, x.h, x.w, ho, wo);
                    gemm(self.out_channels, ckk, ho * wo, &self.weight.value, false, &cols, false, 0.0, &mut y);
                }
                if let Some(b) = &self.bias {
                    for (o, plane) in y.chunks_mut(ho * wo).enumerate() {
                        plane.iter_mut().for_each(|v| *v += b.value[o]);
                    }
                }
                y
            })
            .collect();
        Tensor::stack(self.out_channels, ho, wo, outs)
    }

    pub fn backward(&mut self, x: &Tensor, gy: &Tensor) -> Tensor {
        let (ho, wo) = (gy.h, gy.w);
        let ckk = self.in_channels * self.kernel * self.kernel;
        let this = &*self;
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..x.n)
            .into_par_iter()
            .map(|i| {
                let xs = x.sample(i);
                let g = gy.sample(i);
                let mut dw = vec![0.0; this.out_channels * ckk];
                let mut dcols = vec![0.0; ckk * ho * wo];
                gemm(ckk, this.out_channels, ho * wo, &this.weight.value, true, g, false, 0.0, &mut dcols);
                let dx = if this.is_pointwise() {
                    gemm(this.out_channels, ho * wo, ckk, g, false, xs, true, 0.0, &mut dw);
                    dcols
                } else {
                    let cols = this.im2col(xs, x.h, x.w, ho, wo);
                    gemm(this.out_channels, ho * wo, ckk, g, false, &cols, true, 0.0, &mut dw);
                    this.col2im(&dcols, x.h, x.w, ho, wo)
                };
                (dx, dw)
            })
            .collect();
        let mut dx_all = Vec::with_capacity(x.data.len());
        for (dx, dw) in parts {
            dx_all.extend(dx);
            for (a, b) in self.weight.grad.iter_mut().zip(dw) {
                *a += b;
            }
        }
        if let Some(b) = &mut self.bias {
            for g in gy.samples() {
                for (o, plane) in g.chunks(ho * wo).enumerate() {
                    b.grad[o] += plane.iter().sum::<f64>();
                }
            }
        }
        Tensor {
            n: x.n,
            c: x.c,
            h: x.h,
            w: x.w,
            data: dx_all,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub weight: Param,
    pub bias: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            weight: Param::filled(vec![channels], 1.0),
            bias: Param::zeros(vec![channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let plane = x.h * x.w;
        let mut y = x.clone();
        for s in y.data.chunks_mut(x.sample_len()) {
            for (c, p) in s.chunks_mut(plane).enumerate() {
                let inv = 1.0 / (self.running_var[c] + self.eps).sqrt();
                let (g, b, m) = (self.weight.value[c], self.bias.value[c], self.running_mean[c]);
                p.iter_mut().for_each(|v| *v = (*v - m) * inv * g + b);
            }
        }
        y
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BnCache) {
        let plane = x.h * x.w;
        let count = (x.n * plane) as f64;
        let mut mean = vec![0.0; x.c];
        let mut var = vec![0.0; x.c];
        for s in x.samples() {
            for (c, p) in s.chunks(plane).enumerate() {
                mean[c] += p.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for s in x.samples() {
            for (c, p) in s.chunks(plane).enumerate() {
                var[c] += p.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= count);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut xhat = x.data.clone();
        let mut y = x.clone();
        for (sx, sy) in xhat.chunks_mut(x.sample_len()).zip(y.data.chunks_mut(x.sample_len())) {
            for (c, (px, py)) in sx.chunks_mut(plane).zip(sy.chunks_mut(plane)).enumerate() {
                for (a, b) in px.iter_mut().zip(py.iter_mut()) {
                    *a = (*a - mean[c]) * inv_std[c];
                    *b = *a * self.weight.value[c] + self.bias.value[c];
                }
            }
        }
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        for c in 0..x.c {
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean[c];
            self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * var[c] * unbias;
        }
        (y, BnCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &BnCache, gy: &Tensor) -> Tensor {
        let plane = gy.h * gy.w;
        let count = (gy.n * plane) as f64;
        let mut sum_g = vec![0.0; gy.c];
        let mut sum_gx = vec![0.0; gy.c];
        for (sg, sx) in gy.samples().zip(cache.xhat.chunks(gy.sample_len())) {
            for (c, (pg, px)) in sg.chunks(plane).zip(sx.chunks(plane)).enumerate() {
                for (g, xh) in pg.iter().zip(px) {
                    sum_g[c] += g;
                    sum_gx[c] += g * xh;
                }
            }
        }
        for c in 0..gy.c {
            self.weight.grad[c] += sum_gx[c];
            self.bias.grad[c] += sum_g[c];
        }
        let mut gx = gy.clone();
        for (sg, sx) in gx.data.chunks_mut(gy.sample_len()).zip(cache.xhat.chunks(gy.sample_len())) {
            for (c, (pg, px)) in sg.chunks_mut(plane).zip(sx.chunks(plane)).enumerate() {
                let k = self.weight.value[c] * cache.inv_std[c] / count;
                for (g, xh) in pg.iter_mut().zip(px) {
                    *g = k * (count * *g - sum_g[c] - xh * sum_gx[c]);
                }
            }
        }
        gx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Pool {
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    /// Max pooling; returns the output and the flat input index of each max.
    pub fn max_forward(&self, x: &Tensor) -> (Tensor, Vec<usize>) {
        let (ho, wo) = self.output_hw(x.h, x.w);
        let mut y = Tensor::zeros(x.n, x.c, ho, wo);
        let mut arg = vec![0usize; y.data.len()];
        let mut o = 0;
        for base in (0..x.n * x.c).map(|p| p * x.h * x.w) {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = base;
                    for i in 0..self.kernel {
                        let iy = (oy * self.stride + i) as isize - self.padding as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        for j in 0..self.kernel {
                            let ix = (ox * self.stride + j) as isize - self.padding as isize;
                            if ix < 0 || ix >= x.w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * x.w + ix as usize;
                            if x.data[idx] > best {
                                best = x.data[idx];
                                at = idx;
                            }
                        }
                    }
                    y.data[o] = best;
                    arg[o] = at;
                    o += 1;
                }
            }
        }
        (y, arg)
    }

    pub fn max_backward(shape: [usize; 4], argmax: &[usize], gy: &Tensor) -> Tensor {
        let [n, c, h, w] = shape;
        let mut gx = Tensor::zeros(n, c, h, w);
        for (&i, &g) in argmax.iter().zip(&gy.data) {
            gx.data[i] += g;
        }
        gx
    }

    /// Average pooling without padding.
    pub fn avg_forward(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(self.padding, 0);
        let (ho, wo) = self.output_hw(x.h, x.w);
        let norm = 1.0 / (self.kernel * self.kernel) as f64;
        let mut y = Tensor::zeros(x.n, x.c, ho, wo);
        for (p, out) in y.data.chunks_mut(ho * wo).enumerate() {
            let src = &x.data[p * x.h * x.w..(p + 1) * x.h * x.w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for i in 0..self.kernel {
                        let row = (oy * self.stride + i) * x.w;
                        for j in 0..self.kernel {
                            s += src[row + ox * self.stride + j];
                        }
                    }
                    out[oy * wo + ox] = s * norm;
                }
            }
        }
        y
    }

    pub fn avg_backward(&self, shape: [usize; 4], gy: &Tensor) -> Tensor {
        let [n, c, h, w] = shape;
        let norm = 1.0 / (self.kernel * self.kernel) as f64;
        let mut gx = Tensor::zeros(n, c, h, w);
        for (p, g) in gy.data.chunks(gy.h * gy.w).enumerate() {
            let dst = &mut gx.data[p * h * w..(p + 1) * h * w];
            for oy in 0..gy.h {
                for ox in 0..gy.w {
                    let v = g[oy * gy.w + ox] * norm;
                    for i in 0..self.kernel {
                        let row = (oy * self.stride + i) * w;
                        for j in 0..self.kernel {
                            dst[row + ox * self.stride + j] += v;
                        }
                    }
                }
            }
        }
        gx
    }
}

/// One densely connected unit: its output is the input with `growth` new
/// channels appended.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseUnit {
    pub inner: Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    BatchNorm(BatchNorm2d),
    Relu,
    MaxPool(Pool),
    AvgPool(Pool),
    Dense(DenseUnit),
}

#[derive(Debug, Clone)]
pub enum Cache {
    Input(Tensor),
    Bn(BnCache),
    Relu(Tensor),
    MaxPool { shape: [usize; 4], argmax: Vec<usize> },
    AvgPool { shape: [usize; 4] },
    Dense { in_channels: usize, inner: Vec<Cache> },
}

impl Layer {
    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Conv(c) => c.forward(x),
            Layer::BatchNorm(b) => b.forward_eval(x),
            Layer::Relu => relu(x),
            Layer::MaxPool(p) => p.max_forward(x).0,
            Layer::AvgPool(p) => p.avg_forward(x),
            Layer::Dense(d) => Tensor::concat_channels(x, &d.inner.forward_eval(x)),
        }
    }

    pub fn forward_train(&mut self, x: Tensor) -> (Tensor, Cache) {
        match self {
            Layer::Conv(c) => {
                let y = c.forward(&x);
                (y, Cache::Input(x))
            }
            Layer::BatchNorm(b) => {
                let (y, cache) = b.forward_train(&x);
                (y, Cache::Bn(cache))
            }
            Layer::Relu => {
                let y = relu(&x);
                (y.clone(), Cache::Relu(y))
            }
            Layer::MaxPool(p) => {
                let (y, argmax) = p.max_forward(&x);
                (y, Cache::MaxPool { shape: x.shape(), argmax })
            }
            Layer::AvgPool(p) => (p.avg_forward(&x), Cache::AvgPool { shape: x.shape() }),
            Layer::Dense(d) => {
                let (new, inner) = d.inner.forward_train(x.clone());
                (
                    Tensor::concat_channels(&x, &new),
                    Cache::Dense { in_channels: x.c, inner },
                )
            }
        }
    }

    pub fn backward(&mut self, cache: &Cache, gy: Tensor) -> Tensor {
        match (self, cache) {
            (Layer::Conv(c), Cache::Input(x)) => c.backward(x, &gy),
            (Layer::BatchNorm(b), Cache::Bn(cache)) => b.backward(cache, &gy),
            (Layer::Relu, Cache::Relu(y)) => {
                let mut g = gy;
                for (gv, &yv) in g.data.iter_mut().zip(&y.data) {
                    if yv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                g
            }
            (Layer::MaxPool(_), Cache::MaxPool { shape, argmax }) => Pool::max_backward(*shape, argmax, &gy),
            (Layer::AvgPool(p), Cache::AvgPool { shape }) => p.avg_backward(*shape, &gy),
            (Layer::Dense(d), Cache::Dense { in_channels, inner }) => {
                let (g_direct, g_new) = gy.split_channels(*in_channels);
                let mut g = d.inner.backward(inner, g_new);
                for (a, b) in g.data.iter_mut().zip(&g_direct.data) {
                    *a += b;
                }
                g
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}

fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Named layers applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<(String, Layer)>,
}

impl Sequential {
    pub fn push(&mut self, name: impl Into<String>, layer: Layer) {
        self.layers.push((name.into(), layer));
    }

    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let mut it = self.layers.iter();
        let Some((_, first)) = it.next() else {
            return x.clone();
        };
        let mut y = first.forward_eval(x);
        for (_, l) in it {
            y = l.forward_eval(&y);
        }
        y
    }

    pub fn forward_train(&mut self, x: Tensor) -> (Tensor, Vec<Cache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut y = x;
        for (_, l) in &mut self.layers {
            let (out, cache) = l.forward_train(y);
            caches.push(cache);
            y = out;
        }
        (y, caches)
    }

    pub fn backward(&mut self, caches: &[Cache], gy: Tensor) -> Tensor {
        let mut g = gy;
        for ((_, l), cache) in self.layers.iter_mut().zip(caches).rev() {
            g = l.backward(cache, g);
        }
        g
    }

    /// Visits trainable parameters as `(qualified name, param)`.
    pub fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        for (name, l) in &self.layers {
            let p = format!("{prefix}.{name}");
            match l {
                Layer::Conv(c) => {
                    f(format!("{p}.weight"), &c.weight);
                    if let Some(b) = &c.bias {
                        f(format!("{p}.bias"), b);
                    }
                }
                Layer::BatchNorm(b) => {
                    f(format!("{p}.weight"), &b.weight);
                    f(format!("{p}.bias"), &b.bias);
                }
                Layer::Dense(d) => d.inner.visit_params(&p, f),
                _ => {}
            }
        }
    }

    pub fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        for (name, l) in &mut self.layers {
            let p = format!("{prefix}.{name}");
            match l {
                Layer::Conv(c) => {
                    f(format!("{p}.weight"), &mut c.weight);
                    if let Some(b) = &mut c.bias {
                        f(format!("{p}.bias"), b);
                    }
                }
                Layer::BatchNorm(b) => {
                    f(format!("{p}.weight"), &mut b.weight);
                    f(format!("{p}.bias"), &mut b.bias);
                }
                Layer::Dense(d) => d.inner.visit_params_mut(&p, f),
                _ => {}
            }
        }
    }

    /// Visits non-trainable state (batch-norm running statistics).
    pub fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        for (name, l) in &mut self.layers {
            let p = format!("{prefix}.{name}");
            match l {
                Layer::BatchNorm(b) => {
                    f(format!("{p}.running_mean"), &mut b.running_mean);
                    f(format!("{p}.running_var"), &mut b.running_var);
                }
                Layer::Dense(d) => d.inner.visit_buffers_mut(&p, f),
                _ => {}
            }
        }
    }

    pub fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64])) {
        for (name, l) in &self.layers {
            let p = format!("{prefix}.{name}");
            match l {
                Layer::BatchNorm(b) => {
                    f(format!("{p}.running_mean"), &b.running_mean);
                    f(format!("{p}.running_var"), &b.running_var);
                }
                Layer::Dense(d) => d.inner.visit_buffers(&p, f),
                _ => {}
            }
        }
    }
}
