//! Time-conditioned multilayer perceptron with hand-written backpropagation,
//! plus an Adam optimizer.
//!
//! The network has exactly five affine layers with a SiLU nonlinearity between
//! them. Its input is the state concatenated with the time `t`.
//!
//! Parameters are stored in one flat vector. Layer `l` contributes its weight
//! matrix (`fan_in × fan_out`, row-major, so `W[i][j]` maps input `i` to
//! output `j`) followed by its bias (`fan_out`). Gradients use the same layout.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub const NUM_LAYERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `x · sigmoid(x)`.
    Silu,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Silu => "silu",
        }
    }

    #[inline]
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + libm::exp(-x)),
        }
    }

    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + libm::exp(-x));
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
}

fn layout(
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
) -> (Vec<(usize, usize)>, Vec<usize>, usize) {
    let mut shapes = Vec::with_capacity(NUM_LAYERS);
    shapes.push((input_dim, hidden_dim));
    for _ in 1..NUM_LAYERS - 1 {
        shapes.push((hidden_dim, hidden_dim));
    }
    shapes.push((hidden_dim, output_dim));
    let mut offsets = Vec::with_capacity(NUM_LAYERS);
    let mut total = 0;
    for &(i, o) in &shapes {
        offsets.push(total);
        total += i * o + o;
    }
    (shapes, offsets, total)
}

impl Mlp {
    /// Fan-in scaled uniform initialization, `U(-1/√fan_in, 1/√fan_in)` for
    /// weights and biases.
    pub fn init(seed: u64, input_dim: usize, hidden_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument("network dimensions must be >= 1"));
        }
        let (shapes, offsets, total) = layout(input_dim, hidden_dim, output_dim);
        let mut params = Vec::with_capacity(total);
        let mut rng = rng::substream(seed, rng::STREAM_INIT);
        for &(fan_in, fan_out) in &shapes {
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Self {
            shapes,
            offsets,
            params,
            activation: Activation::Silu,
        })
    }

    /// Rebuilds a network from a flat parameter vector in the layout above.
    pub fn from_params(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument("network dimensions must be >= 1"));
        }
        let (shapes, offsets, total) = layout(input_dim, hidden_dim, output_dim);
        if params.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("network parameters must be finite"));
        }
        Ok(Self {
            shapes,
            offsets,
            params,
            activation: Activation::Silu,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.shapes[0].0
    }

    pub fn hidden_dim(&self) -> usize {
        self.shapes[0].1
    }

    pub fn output_dim(&self) -> usize {
        self.shapes[NUM_LAYERS - 1].1
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layer_shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn weights(&self, l: usize) -> &[f64] {
        let (i, o) = self.shapes[l];
        &self.params[self.offsets[l]..self.offsets[l] + i * o]
    }

    fn bias(&self, l: usize) -> &[f64] {
        let (i, o) = self.shapes[l];
        let start = self.offsets[l] + i * o;
        &self.params[start..start + o]
    }

    /// Evaluates the network at state `x` and time `t`.
    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.forward_batch(x, core::slice::from_ref(&t))
    }

    /// Row-wise forward pass over `n = ts.len()` states stored back to back in
    /// `xs`. Returns `n × output_dim` values.
    pub fn forward_batch(&self, xs: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        let inputs = self.pack_inputs(xs, ts)?;
        let mut cache = ForwardCache::default();
        self.forward_cached(&inputs, ts.len(), &mut cache);
        Ok(cache.output().to_vec())
    }

    /// Concatenates states and times into the `n × input_dim` input matrix.
    pub fn pack_inputs(&self, xs: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim() - 1;
        if xs.len() != d * ts.len() {
            return Err(Error::DimensionMismatch {
                expected: d * ts.len(),
                got: xs.len(),
            });
        }
        let mut inputs = Vec::with_capacity(ts.len() * (d + 1));
        for (i, t) in ts.iter().enumerate() {
            inputs.extend_from_slice(&xs[i * d..(i + 1) * d]);
            inputs.push(*t);
        }
        Ok(inputs)
    }

    /// Forward pass over an `n × input_dim` matrix, keeping the intermediate
    /// values needed by [`backward`](Self::backward).
    pub fn forward_cached(&self, inputs: &[f64], n: usize, cache: &mut ForwardCache) {
        assert_eq!(inputs.len(), n * self.input_dim());
        cache.n = n;
        cache.input.clear();
        cache.input.extend_from_slice(inputs);
        cache.pre.resize_with(NUM_LAYERS, Vec::new);
        cache.act.resize_with(NUM_LAYERS - 1, Vec::new);
        for l in 0..NUM_LAYERS {
            let (fan_in, fan_out) = self.shapes[l];
            let mut z = core::mem::take(&mut cache.pre[l]);
            z.clear();
            z.reserve(n * fan_out);
            let b = self.bias(l);
            for _ in 0..n {
                z.extend_from_slice(b);
            }
            let a: &[f64] = if l == 0 {
                &cache.input
            } else {
                &cache.act[l - 1]
            };
            gemm(
                n,
                fan_in,
                fan_out,
                a,
                fan_in as isize,
                1,
                self.weights(l),
                fan_out as isize,
                1,
                1.0,
                &mut z,
            );
            if l < NUM_LAYERS - 1 {
                let act = &mut cache.act[l];
                act.clear();
                act.extend(z.iter().map(|&v| self.activation.apply(v)));
            }
            cache.pre[l] = z;
        }
    }

    /// Accumulates into `grads` the gradient of a scalar whose derivative with
    /// respect to the cached outputs is `grad_out` (`n × output_dim`).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut [f64]) {
        let n = cache.n;
        assert_eq!(grad_out.len(), n * self.output_dim());
        assert_eq!(grads.len(), self.params.len());
        let mut g = grad_out.to_vec();
        let mut g_prev = Vec::new();
        for l in (0..NUM_LAYERS).rev() {
            let (fan_in, fan_out) = self.shapes[l];
            let a: &[f64] = if l == 0 {
                &cache.input
            } else {
                &cache.act[l - 1]
            };
            let off = self.offsets[l];
            let (gw, rest) =
                grads[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            // dW = Aᵀ G
            gemm(
                fan_in,
                n,
                fan_out,
                a,
                1,
                fan_in as isize,
                &g,
                fan_out as isize,
                1,
                1.0,
                gw,
            );
            for row in g.chunks_exact(fan_out) {
                for (gb, v) in rest.iter_mut().zip(row) {
                    *gb += v;
                }
            }
            if l > 0 {
                // dA = G Wᵀ, then through the nonlinearity
                g_prev.clear();
                g_prev.resize(n * fan_in, 0.0);
                gemm(
                    n,
                    fan_out,
                    fan_in,
                    &g,
                    fan_out as isize,
                    1,
                    self.weights(l),
                    1,
                    fan_out as isize,
                    0.0,
                    &mut g_prev,
                );
                for (gv, z) in g_prev.iter_mut().zip(&cache.pre[l - 1]) {
                    *gv *= self.activation.derivative(*z);
                }
                core::mem::swap(&mut g, &mut g_prev);
            }
        }
    }
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    n: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Network outputs of the last forward pass, `n × output_dim`.
    pub fn output(&self) -> &[f64] {
        &self.pre[NUM_LAYERS - 1]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// `C = A·B + beta·C` for row-major `C` (`m × n`), with arbitrary strides on
/// `A` (`m × k`) and `B` (`k × n`).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slice lengths checked above cover every index reachable
    // through the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Runs a forward pass over `n` packed inputs, lets `loss` turn the outputs
/// into a scalar and its output gradient, and backpropagates.
///
/// Returns the loss and a gradient vector in the parameter layout.
pub fn loss_and_grad<F>(params: &Mlp, inputs: &[f64], n: usize, loss: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[f64], &mut [f64]) -> Result<f64>,
{
    let mut cache = ForwardCache::default();
    let mut grads = vec![0.0; params.num_params()];
    let value = loss_and_grad_with(params, &mut cache, inputs, n, loss, &mut grads)?;
    Ok((value, grads))
}

/// Allocation-reusing form of [`loss_and_grad`]; `grads` is overwritten.
pub fn loss_and_grad_with<F>(
    params: &Mlp,
    cache: &mut ForwardCache,
    inputs: &[f64],
    n: usize,
    loss: F,
    grads: &mut [f64],
) -> Result<f64>
where
    F: FnOnce(&[f64], &mut [f64]) -> Result<f64>,
{
    if inputs.len() != n * params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: n * params.input_dim(),
            got: inputs.len(),
        });
    }
    params.forward_cached(inputs, n, cache);
    let mut grad_out = vec![0.0; n * params.output_dim()];
    let value = loss(cache.output(), &mut grad_out)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    grads.iter_mut().for_each(|g| *g = 0.0);
    params.backward(cache, &grad_out, grads);
    Ok(value)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Result<Self> {
        Self::with_hyperparameters(num_params, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(
        num_params: usize,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive"));
        }
        if !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0) {
            return Err(Error::InvalidArgument("Adam betas must lie in (0, 1)"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument("Adam epsilon must be positive"));
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first_moment.len(),
                got: grads.len(),
            });
        }
        self.step_count += 1;
        let k = self.step_count as i32;
        let c1 = 1.0 - libm::pow(self.beta1, k as f64);
        let c2 = 1.0 - libm::pow(self.beta2, k as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(
            self.first_moment
                .iter_mut()
                .zip(self.second_moment.iter_mut()),
        ) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
        }
        Ok(())
    }
}
