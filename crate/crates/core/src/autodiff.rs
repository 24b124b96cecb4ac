//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records vector-valued nodes in evaluation order; each node keeps
//! its value, a gradient buffer filled by [`Tape::backward`], and the rule
//! that produced it. Only the primitives the PINN loss needs are provided.
//! Trainable tensors live in a flat [`ParamStore`] so the optimizer can walk
//! one contiguous buffer.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fermi::{electron_density, electron_density_deriv, SemiconductorParams};
use crate::mesh::Region;
use crate::surrogate::{LowRankMap, DENSITY_OFFSET, DENSITY_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// All trainable values of a model, stored contiguously.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    tensors: Vec<Range<usize>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, len: usize) -> ParamId {
        let start = self.values.len();
        self.values.resize(start + len, 0.0);
        self.grads.resize(start + len, 0.0);
        self.tensors.push(start..start + len);
        ParamId(self.tensors.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[self.tensors[id.0].clone()]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        let r = self.tensors[id.0].clone();
        &mut self.values[r]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[self.tensors[id.0].clone()]
    }

    pub fn range(&self, id: ParamId) -> Range<usize> {
        self.tensors[id.0].clone()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Region-aware `φ → ñ_FD = (n(φ) + 1e10) / 1e19`.
#[derive(Debug, Clone)]
pub struct FermiClosure {
    pub params: SemiconductorParams,
    pub regions: Vec<Region>,
}

impl FermiClosure {
    pub fn new(params: SemiconductorParams, regions: Vec<Region>) -> Self {
        Self { params, regions }
    }

    /// Normalized density and its derivative with respect to `φ`.
    #[inline]
    pub fn eval(&self, phi: f64, region: Region) -> (f64, f64) {
        let n = electron_density(phi, &self.params, region);
        let dn = electron_density_deriv(phi, &self.params, region);
        ((n + DENSITY_OFFSET) / DENSITY_SCALE, dn / DENSITY_SCALE)
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Geometry of a 3×3 same-padded convolution over an `h × w` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Dense { x: Var, w: ParamId, b: ParamId },
    Conv3x3 { x: Var, w: ParamId, b: ParamId, shape: ConvShape },
    Elu(Var),
    AddConst(Var),
    Affine(Var, Arc<LowRankMap>),
    Fermi(Var),
    Log10(Var),
    Gather(Var, Arc<[usize]>),
    Mse(Var, Var),
    MseConst(Var, f64),
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    grad: Vec<f64>,
    /// Local derivative cached at forward time (ELU, Fermi, log).
    aux: Vec<f64>,
    op: Op,
}

/// Records one forward evaluation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Vec<f64>, aux: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, grad: Vec::new(), aux, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass's loss with respect to `v`.
    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Vec::new(), Op::Constant)
    }

    /// `y = W x + b` with `W` row-major `out × in`.
    pub fn dense(&mut self, store: &ParamStore, x: Var, w: ParamId, b: ParamId) -> Var {
        let input = &self.nodes[x.0].value;
        let bias = store.value(b);
        let weights = store.value(w);
        let fan_in = input.len();
        debug_assert_eq!(weights.len(), fan_in * bias.len());
        let out: Vec<f64> = weights
            .chunks_exact(fan_in)
            .zip(bias)
            .map(|(row, b)| b + kernels::dot(row, input))
            .collect();
        self.push(out, Vec::new(), Op::Dense { x, w, b })
    }

    /// 3×3 convolution with zero padding, channel-major `[c][i][j]` layout.
    /// Weights are `[out][in][3][3]`.
    pub fn conv3x3(&mut self, store: &ParamStore, x: Var, w: ParamId, b: ParamId, shape: ConvShape) -> Var {
        let input = &self.nodes[x.0].value;
        let ConvShape { in_channels, out_channels, height, width } = shape;
        let plane = height * width;
        debug_assert_eq!(input.len(), in_channels * plane);
        let weights = store.value(w);
        let bias = store.value(b);
        let mut out = vec![0.0; out_channels * plane];
        for o in 0..out_channels {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..in_channels {
                let src = &input[c * plane..(c + 1) * plane];
                let k = &weights[(o * in_channels + c) * 9..(o * in_channels + c + 1) * 9];
                for di in 0..3 {
                    for dj in 0..3 {
                        let kw = k[di * 3 + dj];
                        for i in 0..height {
                            let si = i as isize + di as isize - 1;
                            if si < 0 || si >= height as isize {
                                continue;
                            }
                            let si = si as usize;
                            for j in 0..width {
                                let sj = j as isize + dj as isize - 1;
                                if sj < 0 || sj >= width as isize {
                                    continue;
                                }
                                dst[i * width + j] += kw * src[si * width + sj as usize];
                            }
                        }
                    }
                }
            }
        }
        self.push(out, Vec::new(), Op::Conv3x3 { x, w, b, shape })
    }

    /// Exponential linear unit, `x` for `x > 0`, `eˣ − 1` otherwise.
    pub fn elu(&mut self, x: Var) -> Var {
        let input = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(input.len());
        let mut deriv = Vec::with_capacity(input.len());
        for &v in input {
            if v > 0.0 {
                out.push(v);
                deriv.push(1.0);
            } else {
                let e = v.exp();
                out.push(v.exp_m1());
                deriv.push(e);
            }
        }
        self.push(out, deriv, Op::Elu(x))
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let out = self.nodes[x.0].value.iter().map(|v| v + c).collect();
        self.push(out, Vec::new(), Op::AddConst(x))
    }

    /// Fixed affine map `y = W x + b`; not trainable.
    pub fn affine(&mut self, x: Var, map: &Arc<LowRankMap>) -> Var {
        let mut out = vec![0.0; map.dim()];
        map.apply(&self.nodes[x.0].value, &mut out);
        self.push(out, Vec::new(), Op::Affine(x, Arc::clone(map)))
    }

    /// Elementwise Fermi–Dirac closure producing normalized densities.
    pub fn fermi(&mut self, x: Var, closure: &FermiClosure) -> Var {
        let input = &self.nodes[x.0].value;
        debug_assert_eq!(input.len(), closure.regions.len());
        let (out, deriv): (Vec<f64>, Vec<f64>) = input
            .iter()
            .zip(&closure.regions)
            .map(|(&phi, &r)| closure.eval(phi, r))
            .unzip();
        self.push(out, deriv, Op::Fermi(x))
    }

    pub fn log10(&mut self, x: Var) -> Var {
        let input = &self.nodes[x.0].value;
        let out = input.iter().map(|v| v.log10()).collect();
        let deriv = input.iter().map(|v| 1.0 / (v * std::f64::consts::LN_10)).collect();
        self.push(out, deriv, Op::Log10(x))
    }

    pub fn gather(&mut self, x: Var, indices: &Arc<[usize]>) -> Var {
        let input = &self.nodes[x.0].value;
        let out = indices.iter().map(|&k| input[k]).collect();
        self.push(out, Vec::new(), Op::Gather(x, Arc::clone(indices)))
    }

    /// `mean((a − b)²)`
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        debug_assert_eq!(va.len(), vb.len());
        let s: f64 = va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push(vec![s / va.len() as f64], Vec::new(), Op::Mse(a, b))
    }

    /// `mean((a − c)²)`
    pub fn mse_const(&mut self, a: Var, c: f64) -> Var {
        let va = &self.nodes[a.0].value;
        let s: f64 = va.iter().map(|x| (x - c) * (x - c)).sum();
        self.push(vec![s / va.len() as f64], Vec::new(), Op::MseConst(a, c))
    }

    /// `Σ wᵢ sᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let s = terms.iter().map(|&(v, w)| w * self.nodes[v.0].value[0]).sum();
        self.push(vec![s], Vec::new(), Op::WeightedSum(terms.to_vec()))
    }

    /// Reverse sweep from the scalar `loss`; parameter gradients are
    /// accumulated into `store.grads`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node has {} values",
                self.nodes[loss.0].value.len()
            )));
        }
        for node in &mut self.nodes[..=loss.0] {
            node.grad.clear();
            node.grad.resize(node.value.len(), 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(idx);
            let node = &rest[0];
            let g = &node.grad;
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Dense { x, w, b } => {
                    let input = &before[x.0];
                    let fan_in = input.value.len();
                    let wr = store.range(*w);
                    let br = store.range(*b);
                    let (values, grads) = (&store.values, &mut store.grads);
                    for (o, &go) in g.iter().enumerate() {
                        grads[br.start + o] += go;
                        if go == 0.0 {
                            continue;
                        }
                        let row = wr.start + o * fan_in;
                        kernels::axpy(go, &input.value, &mut grads[row..row + fan_in]);
                    }
                    let gx = &mut before[x.0].grad;
                    let weights = &values[wr];
                    for (o, &go) in g.iter().enumerate() {
                        if go == 0.0 {
                            continue;
                        }
                        kernels::axpy(go, &weights[o * fan_in..(o + 1) * fan_in], gx);
                    }
                }
                Op::Conv3x3 { x, w, b, shape } => {
                    conv3x3_backward(g, &mut before[x.0], store, *w, *b, *shape);
                }
                Op::Elu(x) | Op::Fermi(x) | Op::Log10(x) => {
                    before[x.0]
                        .grad
                        .iter_mut()
                        .zip(g.iter().zip(&node.aux))
                        .for_each(|(gx, (gy, d))| *gx += gy * d);
                }
                Op::AddConst(x) => {
                    before[x.0].grad.iter_mut().zip(g).for_each(|(gx, gy)| *gx += gy);
                }
                Op::Affine(x, map) => {
                    map.adjoint_accumulate(g, &mut before[x.0].grad);
                }
                Op::Gather(x, indices) => {
                    let gx = &mut before[x.0].grad;
                    for (&k, gy) in indices.iter().zip(g) {
                        gx[k] += gy;
                    }
                }
                Op::Mse(a, b) => {
                    let scale = 2.0 * g[0] / before[a.0].value.len() as f64;
                    let diff: Vec<f64> = before[a.0]
                        .value
                        .iter()
                        .zip(&before[b.0].value)
                        .map(|(x, y)| scale * (x - y))
                        .collect();
                    before[a.0].grad.iter_mut().zip(&diff).for_each(|(ga, d)| *ga += d);
                    before[b.0].grad.iter_mut().zip(&diff).for_each(|(gb, d)| *gb -= d);
                }
                Op::MseConst(a, c) => {
                    let scale = 2.0 * g[0] / before[a.0].value.len() as f64;
                    let ga = &mut before[a.0];
                    ga.grad.iter_mut().zip(&ga.value).for_each(|(gx, x)| *gx += scale * (x - c));
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        before[v.0].grad[0] += w * g[0];
                    }
                }
            }
        }
        Ok(())
    }
}

mod kernels {
    pub struct AdamCoefficients {
        pub b1: f64,
        pub b2: f64,
        pub eps: f64,
        pub step_size: f64,
        pub inv_sqrt_c2: f64,
    }

    pub fn adam(c: &AdamCoefficients, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        let n = p.len();
        let (g, m, v) = (&g[..n], &mut m[..n], &mut v[..n]);
        for k in 0..n {
            m[k] = c.b1 * m[k] + (1.0 - c.b1) * g[k];
            v[k] = c.b2 * v[k] + (1.0 - c.b2) * g[k] * g[k];
            p[k] -= c.step_size * m[k] / (v[k].sqrt() * c.inv_sqrt_c2 + c.eps);
        }
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// `y += alpha x`
    pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
    }
}

fn conv3x3_backward(g: &[f64], input: &mut Node, store: &mut ParamStore, w: ParamId, b: ParamId, shape: ConvShape) {
    let ConvShape { in_channels, out_channels, height, width } = shape;
    let plane = height * width;
    let wr = store.range(w);
    let br = store.range(b);
    let (values, grads) = (&store.values, &mut store.grads);
    for o in 0..out_channels {
        let go = &g[o * plane..(o + 1) * plane];
        grads[br.start + o] += go.iter().sum::<f64>();
        for c in 0..in_channels {
            let base = (o * in_channels + c) * 9;
            for di in 0..3 {
                for dj in 0..3 {
                    let kw = values[wr.start + base + di * 3 + dj];
                    let mut acc = 0.0;
                    for i in 0..height {
                        let si = i as isize + di as isize - 1;
                        if si < 0 || si >= height as isize {
                            continue;
                        }
                        let si = si as usize;
                        for j in 0..width {
                            let sj = j as isize + dj as isize - 1;
                            if sj < 0 || sj >= width as isize {
                                continue;
                            }
                            let src = c * plane + si * width + sj as usize;
                            let gv = go[i * width + j];
                            acc += gv * input.value[src];
                            input.grad[src] += gv * kw;
                        }
                    }
                    grads[wr.start + base + di * 3 + dj] += acc;
                }
            }
        }
    }
}

/// Network family used to generate the density profile from the bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Architecture {
    /// Fully connected: `1 → hidden[0] → … → output`, ELU everywhere.
    Dense { hidden: Vec<usize> },
    /// `1 → hidden → channels·grid` dense stem reshaped onto the mesh grid,
    /// then a `channels → channels` and a `channels → 1` 3×3 refinement.
    Conv { hidden: usize, channels: usize },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Dense { hidden: vec![64, 256] }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::Dense { hidden } => {
                let parts: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
                write!(f, "dense:{}", parts.join("-"))
            }
            Architecture::Conv { hidden, channels } => write!(f, "conv:{hidden}-{channels}"),
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown architecture `{s}` (expected dense:64-256 or conv:64-4)"));
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<usize> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split('-').map(|p| p.parse().map_err(|_| bad())).collect::<Result<_>>()?
        };
        if nums.contains(&0) {
            return Err(bad());
        }
        match kind {
            "dense" if nums.is_empty() => Ok(Architecture::default()),
            "dense" => Ok(Architecture::Dense { hidden: nums }),
            "conv" if nums.is_empty() => Ok(Architecture::Conv { hidden: 64, channels: 4 }),
            "conv" if nums.len() == 2 => Ok(Architecture::Conv { hidden: nums[0], channels: nums[1] }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Dense { w: ParamId, b: ParamId, fan_in: usize },
    Conv { w: ParamId, b: ParamId, shape: ConvShape },
}

/// Maps a scalar (the scaled gate bias) to a raw, post-ELU profile.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    pub architecture: Architecture,
    pub params: ParamStore,
    layers: Vec<Layer>,
    output_len: usize,
    /// Mesh grid (`nx`, `ny`) the output is laid out on.
    grid: (usize, usize),
    seed: u64,
}

/// Repository-wide default seed.
pub const DEFAULT_SEED: u64 = 42;

impl GeneratorNet {
    pub fn new(architecture: Architecture, grid: (usize, usize), seed: u64) -> Result<Self> {
        let output_len = grid.0 * grid.1;
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let dense = |params: &mut ParamStore, fan_in: usize, fan_out: usize| Layer::Dense {
            w: params.add(fan_in * fan_out),
            b: params.add(fan_out),
            fan_in,
        };
        match &architecture {
            Architecture::Dense { hidden } => {
                if hidden.is_empty() {
                    return Err(Error::Config("dense architecture needs at least one hidden layer".into()));
                }
                let mut fan_in = 1;
                for &h in hidden {
                    layers.push(dense(&mut params, fan_in, h));
                    fan_in = h;
                }
                layers.push(dense(&mut params, fan_in, output_len));
            }
            &Architecture::Conv { hidden, channels } => {
                layers.push(dense(&mut params, 1, hidden));
                layers.push(dense(&mut params, hidden, channels * output_len));
                for (cin, cout) in [(channels, channels), (channels, 1)] {
                    let shape = ConvShape { in_channels: cin, out_channels: cout, height: grid.0, width: grid.1 };
                    layers.push(Layer::Conv { w: params.add(cout * cin * 9), b: params.add(cout), shape });
                }
            }
        }
        let mut net = Self { architecture, params, layers, output_len, grid, seed };
        net.init_params(seed);
        Ok(net)
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform `±1/√fan_in` initialization of every weight and bias, fully
    /// determined by `seed`.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &self.layers {
            let (w, b, fan_in) = match *layer {
                Layer::Dense { w, b, fan_in } => (w, b, fan_in),
                Layer::Conv { w, b, shape } => (w, b, shape.in_channels * 9),
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for id in [w, b] {
                for v in self.params.value_mut(id) {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        self.seed = seed;
    }

    /// Zeroes the last layer so the raw output is identically zero.
    pub fn zero_output_layer(&mut self) {
        if let Some(layer) = self.layers.last() {
            let (w, b) = match *layer {
                Layer::Dense { w, b, .. } | Layer::Conv { w, b, .. } => (w, b),
            };
            self.params.value_mut(w).iter_mut().for_each(|v| *v = 0.0);
            self.params.value_mut(b).iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Records the forward pass on `tape`; returns the post-ELU output.
    pub fn forward(&self, tape: &mut Tape, input: f64) -> Var {
        let mut x = tape.constant(vec![input]);
        for layer in &self.layers {
            let pre = match *layer {
                Layer::Dense { w, b, .. } => tape.dense(&self.params, x, w, b),
                Layer::Conv { w, b, shape } => tape.conv3x3(&self.params, x, w, b, shape),
            };
            x = tape.elu(pre);
        }
        x
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, input: f64) -> Vec<f64> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, input);
        tape.value(out).to_vec()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { step: 0, m: vec![0.0; len], v: vec![0.0; len], beta1: 0.9, beta2: 0.999, eps: 1e-8, lr }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "Adam state has {} entries, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let coef = kernels::AdamCoefficients {
            b1,
            b2,
            eps,
            step_size: lr / c1,
            inv_sqrt_c2: 1.0 / c2.sqrt(),
        };
        kernels::adam(&coef, params, grads, &mut self.m, &mut self.v);
        Ok(())
    }
}

/// Halves the learning rate when the loss stops improving.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub best: f64,
    pub bad_steps: usize,
    pub patience: usize,
    pub factor: f64,
    pub floor: f64,
    /// Relative improvement required to reset the patience counter.
    pub threshold: f64,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl PlateauScheduler {
    pub fn new(lr: f64) -> Self {
        Self { lr, best: f64::INFINITY, bad_steps: 0, patience: 2000, factor: 0.5, floor: 1e-5, threshold: 1e-3 }
    }

    pub fn step(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.bad_steps = 0;
        } else {
            self.bad_steps += 1;
            if self.bad_steps >= self.patience {
                self.lr = (self.lr * self.factor).max(self.floor);
                self.bad_steps = 0;
            }
        }
        self.lr
    }
}
