//! Fully connected tanh networks with exact input derivatives.
//!
//! A network maps `R^d -> R` through hidden tanh layers and an affine output
//! layer. Besides plain evaluation it propagates *jets*: the value together
//! with all first and second partial derivatives with respect to the input.
//! The jet recursion is closed-form because every layer is a composition of an
//! affine map and the elementwise tanh:
//!
//! ```text
//! z   = W a + b            (first/second channels: z_i = W a_i, z_ij = W a_ij)
//! a'  = tanh(z)
//! a'_i  = s1 z_i
//! a'_ij = s1 z_ij + s2 z_i z_j,   s1 = 1 - tanh^2 z,  s2 = -2 tanh(z) s1
//! ```
//!
//! Single-point evaluation lives here; the batched engine with reverse-mode
//! parameter gradients lives in [`batch`].

mod batch;

pub use batch::{BatchForward, BatchOutput};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::MultiIndex;

/// Hidden layer widths used unless a configuration says otherwise.
pub const DEFAULT_HIDDEN: [usize; 4] = [20, 20, 20, 20];

/// Glorot initialization variant. The uniform form `U(-r, r)` with
/// `r = sqrt(6 / (fan_in + fan_out))` is used throughout.
pub const GLOROT_UNIFORM: bool = true;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkArchitecture {
    input_dim: usize,
    hidden_layers: Vec<usize>,
}

impl NetworkArchitecture {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be positive".into()));
        }
        if hidden_layers.contains(&0) {
            return Err(Error::InvalidParameter("hidden layer widths must be positive".into()));
        }
        Ok(Self {
            input_dim,
            hidden_layers,
        })
    }

    /// Four hidden layers of twenty neurons.
    pub fn standard(input_dim: usize) -> Result<Self> {
        Self::new(input_dim, DEFAULT_HIDDEN.to_vec())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_layers(&self) -> &[usize] {
        &self.hidden_layers
    }

    /// `(fan_in, fan_out)` for every affine layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_layers {
            shapes.push((fan_in, w));
            fan_in = w;
        }
        shapes.push((fan_in, 1));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(fan_in, fan_out)| (fan_in + 1) * fan_out)
            .sum()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

/// Location of one layer's weights and biases inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Start of the row-major `fan_out x fan_in` weight matrix.
    pub weights: usize,
    /// Start of the `fan_out` biases, directly after the weights.
    pub biases: usize,
}

/// One addressable entry of the parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamEntry {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, row: usize },
}

/// Deterministic map between [`ParamEntry`] and flat indices: layers in
/// order, each as its row-major weights followed by its biases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    slots: Vec<LayerSlot>,
    len: usize,
}

impl ParamLayout {
    fn new(arch: &NetworkArchitecture) -> Self {
        let mut offset = 0;
        let slots = arch
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let slot = LayerSlot {
                    fan_in,
                    fan_out,
                    weights: offset,
                    biases: offset + fan_in * fan_out,
                };
                offset += (fan_in + 1) * fan_out;
                slot
            })
            .collect();
        Self { slots, len: offset }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slots(&self) -> &[LayerSlot] {
        &self.slots
    }

    pub fn index(&self, entry: ParamEntry) -> Option<usize> {
        match entry {
            ParamEntry::Weight { layer, row, col } => {
                let s = self.slots.get(layer)?;
                (row < s.fan_out && col < s.fan_in).then(|| s.weights + row * s.fan_in + col)
            }
            ParamEntry::Bias { layer, row } => {
                let s = self.slots.get(layer)?;
                (row < s.fan_out).then(|| s.biases + row)
            }
        }
    }

    pub fn entry(&self, index: usize) -> Option<ParamEntry> {
        let layer = self.slots.iter().position(|s| index < s.biases + s.fan_out)?;
        let s = &self.slots[layer];
        Some(if index < s.biases {
            let k = index - s.weights;
            ParamEntry::Weight {
                layer,
                row: k / s.fan_in,
                col: k % s.fan_in,
            }
        } else {
            ParamEntry::Bias {
                layer,
                row: index - s.biases,
            }
        })
    }
}

/// All weights and biases of a network, flattened according to
/// [`ParamLayout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    arch: NetworkArchitecture,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(arch: NetworkArchitecture, values: Vec<f64>) -> Result<Self> {
        let expected = arch.parameter_count();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { arch, values })
    }

    pub fn zeros(arch: NetworkArchitecture) -> Self {
        let values = vec![0.0; arch.parameter_count()];
        Self { arch, values }
    }

    pub fn architecture(&self) -> &NetworkArchitecture {
        &self.arch
    }

    pub fn layout(&self) -> ParamLayout {
        self.arch.layout()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Indexing of jet channels: value first, then the `d` first derivatives,
/// then the `d(d+1)/2` second derivatives of the upper triangle in row-major
/// order. A channel layout of order `k` carries all channels of order `<= k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelLayout {
    dim: usize,
    order: usize,
}

impl ChannelLayout {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if order > 2 {
            return Err(Error::UnsupportedOrder(order));
        }
        Ok(Self { dim, order })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn count(&self) -> usize {
        match self.order {
            0 => 1,
            1 => 1 + self.dim,
            _ => 1 + self.dim + self.dim * (self.dim + 1) / 2,
        }
    }

    pub fn first(&self, i: usize) -> usize {
        1 + i
    }

    /// Channel of `d^2 / dx_i dx_j`; symmetric in `i, j`.
    pub fn second(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // Rows 0..i of the upper triangle hold d + (d-1) + ... entries.
        1 + self.dim + i * self.dim - i * i.saturating_sub(1) / 2 + (j - i)
    }

    /// Unordered index pairs `(i, j)`, `i <= j`, in channel order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        if self.order < 2 {
            return Vec::new();
        }
        let mut pairs = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for i in 0..self.dim {
            for j in i..self.dim {
                pairs.push((i, j));
            }
        }
        pairs
    }

    pub fn channel_of(&self, index: &MultiIndex) -> Result<usize> {
        if index.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: index.dim(),
            });
        }
        let order = index.order();
        if order > 2 {
            return Err(Error::UnsupportedOrder(order));
        }
        if order > self.order {
            return Err(Error::MissingDerivative {
                required: order,
                available: self.order,
            });
        }
        let nonzero: Vec<usize> = (0..self.dim)
            .flat_map(|i| std::iter::repeat_n(i, index.orders()[i]))
            .collect();
        Ok(match nonzero.as_slice() {
            [] => 0,
            [i] => self.first(*i),
            [i, j] => self.second(*i, *j),
            _ => unreachable!(),
        })
    }
}

/// Value, gradient and Hessian of a scalar function at a point.
///
/// Entries above the jet's `order` are zero-filled.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    order: usize,
    value: f64,
    first: Vec<f64>,
    /// Row-major `d x d`, symmetric.
    second: Vec<f64>,
}

impl Jet {
    /// A full second-order jet. `second` is row-major `d x d`.
    pub fn new(value: f64, first: Vec<f64>, second: Vec<f64>) -> Self {
        let d = first.len();
        assert_eq!(second.len(), d * d, "Hessian must be d x d");
        Self {
            order: 2,
            value,
            first,
            second,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(0.0, vec![0.0; dim], vec![0.0; dim * dim])
    }

    /// The jet of a constant function.
    pub fn constant(dim: usize, value: f64) -> Self {
        Self::new(value, vec![0.0; dim], vec![0.0; dim * dim])
    }

    fn with_order(order: usize, value: f64, first: Vec<f64>, second: Vec<f64>) -> Self {
        Self {
            order,
            value,
            first,
            second,
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn first(&self) -> &[f64] {
        &self.first
    }

    pub fn second(&self, i: usize, j: usize) -> f64 {
        self.second[i * self.dim() + j]
    }

    pub fn hessian(&self) -> &[f64] {
        &self.second
    }

    /// The partial derivative selected by `index`.
    pub fn derivative(&self, index: &MultiIndex) -> Result<f64> {
        let layout = ChannelLayout::new(self.dim(), self.order)?;
        let channel = layout.channel_of(index)?;
        Ok(self.channel(&layout, channel))
    }

    fn channel(&self, layout: &ChannelLayout, channel: usize) -> f64 {
        let d = self.dim();
        if channel == 0 {
            self.value
        } else if channel <= d {
            self.first[channel - 1]
        } else {
            let (i, j) = layout.pairs()[channel - 1 - d];
            self.second(i, j)
        }
    }

    /// Adds `other` to this jet, channel by channel.
    #[allow(clippy::should_implement_trait)]
    pub fn add(mut self, other: &Jet) -> Jet {
        self.value += other.value;
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
        self.order = self.order.min(other.order);
        self
    }

    pub fn scale(mut self, c: f64) -> Jet {
        self.value *= c;
        self.first.iter_mut().for_each(|v| *v *= c);
        self.second.iter_mut().for_each(|v| *v *= c);
        self
    }
}

/// `b + sum_k w[k] a[k]`, accumulated left to right.
///
/// Shared by [`Network::forward`] and [`Network::eval_jet`] so their values
/// agree bit for bit.
#[inline]
fn affine_row(w: &[f64], a: &[f64], b: f64) -> f64 {
    let mut acc = 0.0;
    for (wk, ak) in w.iter().zip(a) {
        acc += wk * ak;
    }
    acc + b
}

/// A network architecture together with its parameter layout.
#[derive(Clone, Debug)]
pub struct Network {
    arch: NetworkArchitecture,
    layout: ParamLayout,
}

impl Network {
    pub fn new(arch: NetworkArchitecture) -> Self {
        let layout = arch.layout();
        Self { arch, layout }
    }

    pub fn architecture(&self) -> &NetworkArchitecture {
        &self.arch
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.len
    }

    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn glorot_init(&self, seed: u64) -> ParameterVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; self.layout.len];
        for s in &self.layout.slots {
            let limit = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
            for w in &mut values[s.weights..s.biases] {
                *w = rng.random_range(-limit..limit);
            }
        }
        ParameterVector {
            arch: self.arch.clone(),
            values,
        }
    }

    fn check(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.layout.len {
            return Err(Error::DimensionMismatch {
                expected: self.layout.len,
                got: params.len(),
            });
        }
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Network output at `x`.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.check(params, x)?;
        let mut a = x.to_vec();
        let last = self.layout.slots.len() - 1;
        for (l, s) in self.layout.slots.iter().enumerate() {
            let w = &params[s.weights..s.biases];
            let b = &params[s.biases..s.biases + s.fan_out];
            let z: Vec<f64> = (0..s.fan_out)
                .map(|r| affine_row(&w[r * s.fan_in..(r + 1) * s.fan_in], &a, b[r]))
                .collect();
            a = if l == last {
                z
            } else {
                z.into_iter().map(f64::tanh).collect()
            };
        }
        Ok(a[0])
    }

    /// Value and input derivatives up to `order` (0, 1 or 2) at `x`.
    pub fn eval_jet(&self, params: &[f64], x: &[f64], order: usize) -> Result<Jet> {
        let channels = ChannelLayout::new(self.arch.input_dim, order)?;
        self.check(params, x)?;
        let d = x.len();
        let nc = channels.count();
        let pairs = channels.pairs();

        // a[c][k]: channel c of unit k.
        let mut a: Vec<Vec<f64>> = vec![vec![0.0; d]; nc];
        a[0].copy_from_slice(x);
        if order >= 1 {
            for i in 0..d {
                a[channels.first(i)][i] = 1.0;
            }
        }

        let last = self.layout.slots.len() - 1;
        for (l, s) in self.layout.slots.iter().enumerate() {
            let w = &params[s.weights..s.biases];
            let b = &params[s.biases..s.biases + s.fan_out];
            let mut z: Vec<Vec<f64>> = vec![vec![0.0; s.fan_out]; nc];
            for r in 0..s.fan_out {
                let row = &w[r * s.fan_in..(r + 1) * s.fan_in];
                z[0][r] = affine_row(row, &a[0], b[r]);
                for c in 1..nc {
                    z[c][r] = affine_row(row, &a[c], 0.0);
                }
            }
            if l == last {
                a = z;
                break;
            }
            let mut next: Vec<Vec<f64>> = vec![vec![0.0; s.fan_out]; nc];
            for r in 0..s.fan_out {
                let t = z[0][r].tanh();
                let s1 = 1.0 - t * t;
                let s2 = -2.0 * t * s1;
                next[0][r] = t;
                for i in 0..d.min(nc - 1) {
                    let c = channels.first(i);
                    next[c][r] = s1 * z[c][r];
                }
                for (q, &(i, j)) in pairs.iter().enumerate() {
                    let c = 1 + d + q;
                    let zi = z[channels.first(i)][r];
                    let zj = z[channels.first(j)][r];
                    next[c][r] = s1 * z[c][r] + s2 * zi * zj;
                }
            }
            a = next;
        }

        let value = a[0][0];
        let mut first = vec![0.0; d];
        let mut second = vec![0.0; d * d];
        if order >= 1 {
            for (i, f) in first.iter_mut().enumerate() {
                *f = a[channels.first(i)][0];
            }
        }
        for (q, &(i, j)) in pairs.iter().enumerate() {
            let v = a[1 + d + q][0];
            second[i * d + j] = v;
            second[j * d + i] = v;
        }
        Ok(Jet::with_order(order, value, first, second))
    }
}
