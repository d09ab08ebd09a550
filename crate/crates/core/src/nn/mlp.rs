use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Output head. Softmax groups partition the output vector; each group is
/// normalized on its own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Linear,
    Softmax { groups: Vec<usize> },
}

/// Fully-connected network with parameters in one flat vector: for each layer
/// the `out x in` row-major weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    hidden: Activation,
    head: Head,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations recorded by [`Mlp::forward`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `layers[0]` is the input; `layers[l]` the post-activation of layer `l`.
    layers: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.layers[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

pub(crate) fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = i * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

impl Mlp {
    /// Zero-initialized network.
    pub fn zeros(dims: &[usize], hidden: Activation, head: Head) -> Result<Self, NnError> {
        Self::from_params(dims, hidden, head, vec![0.0; param_count(dims)])
    }

    pub fn from_params(
        dims: &[usize],
        hidden: Activation,
        head: Head,
        params: Vec<f64>,
    ) -> Result<Self, NnError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NnError::Shape(format!("invalid layer dims {dims:?}")));
        }
        if let Head::Softmax { groups } = &head {
            if groups.contains(&0) || groups.iter().sum::<usize>() != *dims.last().unwrap() {
                return Err(NnError::Shape(format!(
                    "softmax groups {groups:?} do not partition output of size {}",
                    dims.last().unwrap()
                )));
            }
        }
        if params.len() != param_count(dims) {
            return Err(NnError::Shape(format!(
                "expected {} parameters, got {}",
                param_count(dims),
                params.len()
            )));
        }
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for w in dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        Ok(Self { dims: dims.to_vec(), hidden, head, params, offsets })
    }

    /// Uniform fan-in scaled initialization in `[-1/√fan_in, 1/√fan_in]`.
    pub fn init(dims: &[usize], hidden: Activation, head: Head, seed: u64) -> Result<Self, NnError> {
        let mut net = Self::zeros(dims, hidden, head)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.num_layers() {
            let bound = 1.0 / (dims[l] as f64).sqrt();
            let (start, end) = net.layer_range(l);
            for p in &mut net.params[start..end] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_range(&self, l: usize) -> (usize, usize) {
        let start = self.offsets[l];
        (start, start + self.dims[l] * self.dims[l + 1] + self.dims[l + 1])
    }

    /// Weights (`out x in`, row-major) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (start, end) = self.layer_range(l);
        let split = start + self.dims[l] * self.dims[l + 1];
        (&self.params[start..split], &self.params[split..end])
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let n = self.num_layers();
        let mut layers = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        layers.push(input.to_vec());
        for l in 0..n {
            let (w, b) = self.layer(l);
            let x = &layers[l];
            let fan_in = self.dims[l];
            let z: Vec<f64> =
                b.iter().enumerate().map(|(o, bo)| bo + dot(&w[o * fan_in..(o + 1) * fan_in], x)).collect();
            let a = if l + 1 < n {
                z.iter().map(|&v| self.hidden.apply(v)).collect()
            } else {
                match &self.head {
                    Head::Linear => z.clone(),
                    Head::Softmax { groups } => grouped_softmax(&z, groups),
                }
            };
            pre.push(z);
            layers.push(a);
        }
        Ok(ForwardCache { layers, pre })
    }

    /// Output only.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward(input).map(|c| c.layers.into_iter().next_back().unwrap())
    }

    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Gradients, NnError> {
        let mut params = vec![0.0; self.num_params()];
        let input = self.backward_into(cache, grad_output, Some(&mut params))?;
        Ok(Gradients { params, input })
    }

    /// Backpropagate `grad_output`, accumulating parameter gradients into
    /// `param_grads` when given. Returns the gradient with respect to the input.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        mut param_grads: Option<&mut [f64]>,
    ) -> Result<Vec<f64>, NnError> {
        let n = self.num_layers();
        if cache.layers.len() != n + 1
            || cache.layers.iter().zip(&self.dims).any(|(a, &d)| a.len() != d)
        {
            return Err(NnError::CacheMismatch);
        }
        if grad_output.len() != self.output_dim() {
            return Err(NnError::Shape("output gradient length".into()));
        }
        if let Some(g) = &param_grads {
            if g.len() != self.num_params() {
                return Err(NnError::Shape("parameter gradient length".into()));
            }
        }

        let mut delta: Vec<f64> = match &self.head {
            Head::Linear => grad_output.to_vec(),
            Head::Softmax { groups } => softmax_backward(&cache.layers[n], grad_output, groups),
        };
        for l in (0..n).rev() {
            let fan_in = self.dims[l];
            let x = &cache.layers[l];
            let (w, _) = self.layer(l);
            if let Some(g) = param_grads.as_deref_mut() {
                let start = self.offsets[l];
                let split = start + fan_in * self.dims[l + 1];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut g[start + o * fan_in..start + (o + 1) * fan_in];
                    for (gi, &xi) in row.iter_mut().zip(x) {
                        *gi += d * xi;
                    }
                    g[split + o] += d;
                }
            }
            let mut prev = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, &wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * wi;
                }
            }
            if l > 0 {
                for ((p, &z), &a) in prev.iter_mut().zip(&cache.pre[l - 1]).zip(&cache.layers[l]) {
                    *p *= self.hidden.derivative(z, a);
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// `self ← τ·source + (1 − τ)·self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        debug_assert_eq!(self.params.len(), source.params.len());
        for (t, &s) in self.params.iter_mut().zip(&source.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

pub(crate) fn grouped_softmax(z: &[f64], groups: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut start = 0;
    for &g in groups {
        let chunk = &z[start..start + g];
        let max = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = chunk.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / sum));
        start += g;
    }
    out
}

fn softmax_backward(y: &[f64], grad: &[f64], groups: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    let mut start = 0;
    for &g in groups {
        let r = start..start + g;
        let inner: f64 = y[r.clone()].iter().zip(&grad[r.clone()]).map(|(a, b)| a * b).sum();
        for k in r {
            out[k] = y[k] * (grad[k] - inner);
        }
        start += g;
    }
    out
}
