//! Small dense networks with exact backpropagation, Adam and soft target
//! updates. Hidden layers use ReLU; the output is either `tanh` (bounded
//! actors) or linear (critics, Gaussian policy heads).
//!
//! Batches are row-major: one sample per row.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the uniform initialisation of the final layer.
pub const FINAL_LAYER_INIT: f64 = 3e-3;

pub const CHECKPOINT_FORMAT: &str = "rosb-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    /// `weights[l]` has shape `(sizes[l + 1], sizes[l])`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    output: OutputActivation,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Parameter-shaped container, used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            biases: net
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Flattened in layer order, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Random initialisation: hidden layers uniform in `±1/sqrt(fan_in)`,
    /// the final layer in `±3e-3`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let last = net.weights.len() - 1;
        for (l, (w, b)) in net
            .weights
            .iter_mut()
            .zip(net.biases.iter_mut())
            .enumerate()
        {
            let bound = if l == last {
                FINAL_LAYER_INIT
            } else {
                1.0 / (sizes[l] as f64).sqrt()
            };
            w.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound));
            b.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let weights = sizes
            .windows(2)
            .map(|p| Array2::zeros((p[1], p[0])))
            .collect();
        let biases = sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            output,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters in the same order as [`Gradients::flatten`].
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn activate_output(&self, z: &mut Array2<f64>) {
        if self.output == OutputActivation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(&w.t()) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else {
                self.activate_output(&mut z);
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(self.forward(&x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = h.dot(&w.t()) + b;
            let mut a = z.clone();
            if l < last {
                a.mapv_inplace(|v| v.max(0.0));
            } else {
                self.activate_output(&mut a);
            }
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: h,
        })
    }

    /// Reverse-mode pass. `grad_out` is `dL/d(output)` with the same shape as
    /// the cached output. Returns the parameter gradients (summed over the
    /// batch) and `dL/d(input)`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if grad_out.dim() != cache.output.dim() {
            return Err(Error::Shape {
                expected: cache.output.len(),
                got: grad_out.len(),
            });
        }
        let n = self.weights.len();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out.clone();
        if self.output == OutputActivation::Tanh {
            Zip::from(&mut delta)
                .and(&cache.output)
                .for_each(|d, &y| *d *= 1.0 - y * y);
        }
        for l in (0..n).rev() {
            grads.weights[l] = delta.t().dot(&cache.inputs[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            let mut upstream = delta.dot(&self.weights[l]);
            if l > 0 {
                Zip::from(&mut upstream)
                    .and(&cache.pre[l - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = upstream;
        }
        Ok((grads, delta))
    }

    fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.output == other.output
    }
}

/// `target <- tau * online + (1 - tau) * target` for every parameter.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::ArchitectureMismatch);
    }
    for (t, o) in target.weights.iter_mut().zip(&online.weights) {
        Zip::from(t)
            .and(o)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    for (t, o) in target.biases.iter_mut().zip(&online.biases) {
        Zip::from(t)
            .and(o)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam, element-wise over arrays of any layout.
fn adam_apply<D: ndarray::Dimension>(
    cfg: &AdamConfig,
    t: u64,
    theta: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
) {
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    Zip::from(theta)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        });
}

/// Adam state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            config: AdamConfig::with_lr(lr),
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&Gradients, &Gradients) {
        (&self.m, &self.v)
    }

    /// One descent step on `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != net.weights.len()
            || grads
                .weights
                .iter()
                .zip(&net.weights)
                .any(|(g, w)| g.dim() != w.dim())
        {
            return Err(Error::ArchitectureMismatch);
        }
        self.step += 1;
        let t = self.step;
        let cfg = self.config;
        for (l, (w, b)) in net
            .weights
            .iter_mut()
            .zip(net.biases.iter_mut())
            .enumerate()
        {
            adam_apply(
                &cfg,
                t,
                w,
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
            );
            adam_apply(
                &cfg,
                t,
                b,
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
        }
        Ok(())
    }
}

/// Adam on a single scalar parameter (the SAC temperature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            config: AdamConfig::with_lr(lr),
            step: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    pub fn step(&mut self, theta: &mut f64, grad: f64) {
        self.step += 1;
        let mut p = ndarray::arr1(&[*theta]);
        let mut m = ndarray::arr1(&[self.m]);
        let mut v = ndarray::arr1(&[self.v]);
        adam_apply(
            &self.config,
            self.step,
            &mut p,
            &ndarray::arr1(&[grad]),
            &mut m,
            &mut v,
        );
        *theta = p[0];
        self.m = m[0];
        self.v = v[0];
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub sizes: Vec<usize>,
    pub output: OutputActivation,
    pub params: Vec<f64>,
}

impl NetworkRecord {
    pub fn from_net(net: &Mlp) -> Self {
        Self {
            sizes: net.sizes.clone(),
            output: net.output,
            params: net.params(),
        }
    }

    pub fn to_net(&self) -> Result<Mlp> {
        let mut net = Mlp::zeros(&self.sizes, self.output)?;
        net.set_params(&self.params)
            .map_err(|e| Error::Checkpoint(format!("parameter count: {e}")))?;
        if !net.is_finite() {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamRecord {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamRecord {
    pub fn from_adam(a: &Adam) -> Self {
        Self {
            config: a.config,
            step: a.step,
            m: a.m.flatten(),
            v: a.v.flatten(),
        }
    }

    pub fn to_adam(&self, net: &Mlp) -> Result<Adam> {
        let mut m = net.clone();
        let mut v = net.clone();
        m.set_params(&self.m)?;
        v.set_params(&self.v)?;
        Ok(Adam {
            config: self.config,
            step: self.step,
            m: Gradients {
                weights: m.weights,
                biases: m.biases,
            },
            v: Gradients {
                weights: v.weights,
                biases: v.biases,
            },
        })
    }
}

/// Versioned, self-describing container for one network role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub role: String,
    pub algo: String,
    pub network: NetworkRecord,
    pub optimizer: Option<AdamRecord>,
    pub counters: BTreeMap<String, u64>,
    pub scalars: BTreeMap<String, f64>,
}

impl Checkpoint {
    pub fn new(role: &str, algo: &str, net: &Mlp, opt: Option<&Adam>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            role: role.to_string(),
            algo: algo.to_string(),
            network: NetworkRecord::from_net(net),
            optimizer: opt.map(AdamRecord::from_adam),
            counters: BTreeMap::new(),
            scalars: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        ck.network.to_net()?;
        Ok(ck)
    }
}
