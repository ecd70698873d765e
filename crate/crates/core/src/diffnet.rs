//! Small fixed-topology multilayer perceptron with hand-derived gradients.
//!
//! Weights are stored row-major as `output_width x input_width`; batched
//! inputs are row-major `rows x width` matrices. Dense products go through
//! `matrixmultiply`, which is single-threaded and therefore reproducible.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
        }
    }
}

/// Layer chain `input -> hidden... -> output` with a shared hidden activation.
pub fn mlp_layers(
    input: usize,
    hidden: &[usize],
    output: usize,
    hidden_activation: Activation,
    output_activation: Activation,
) -> Vec<LayerSpec> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut width = input;
    for &h in hidden {
        layers.push(LayerSpec::new(width, h, hidden_activation));
        width = h;
    }
    layers.push(LayerSpec::new(width, output, output_activation));
    layers
}

/// Row-major dense matrix used for minibatches.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data length",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                context: "hstack rows",
                expected: self.rows,
                actual: other.rows,
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Copy of columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        assert!(start <= end && end <= self.cols);
        let cols = end - start;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// C <- A * B + beta * C, with arbitrary strides for A and B and C row-major (m x n).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the strided extents of A and B stay inside their slices (checked
    // above in debug builds, guaranteed by every caller's shape validation)
    // and C is a distinct, exclusively borrowed m x n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Layer shapes plus weights and biases of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<LayerSpec>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Gradients with the same shapes as the owning [`NetworkParams`].
///
/// `input` holds the gradient with respect to the network input when it was
/// requested. For batched backward passes it is row-major `rows x input_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Option<Vec<f64>>,
}

impl GradientBundle {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input: None,
        }
    }

    pub fn iter_all(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
    }
}

/// Activations cached by a batched forward pass, consumed by [`NetworkParams::backward_batch`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[i + 1]` is layer `i`'s output.
    activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations
            .last()
            .expect("trace always holds the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

fn validate_chain(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::contract("network needs at least one layer"));
    }
    for (i, l) in layers.iter().enumerate() {
        if l.input_width == 0 || l.output_width == 0 {
            return Err(Error::contract(format!("layer {i} has a zero width")));
        }
        if i > 0 && layers[i - 1].output_width != l.input_width {
            return Err(Error::DimensionMismatch {
                context: "layer chain",
                expected: layers[i - 1].output_width,
                actual: l.input_width,
            });
        }
    }
    Ok(())
}

impl NetworkParams {
    /// All-zero parameters for a validated layer chain.
    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        validate_chain(&layers)?;
        let weights = layers
            .iter()
            .map(|l| vec![0.0; l.input_width * l.output_width])
            .collect();
        let biases = layers.iter().map(|l| vec![0.0; l.output_width]).collect();
        Ok(Self {
            layers,
            weights,
            biases,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization of weights and biases.
    pub fn init_uniform<R: Rng + ?Sized>(layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(layers)?;
        for i in 0..params.layers.len() {
            let bound = 1.0 / (params.layers[i].input_width as f64).sqrt();
            for w in params.weights[i].iter_mut() {
                *w = rng.random_range(-bound..=bound);
            }
            for b in params.biases[i].iter_mut() {
                *b = rng.random_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    /// Builds parameters from explicit arrays, validating every shape and value.
    pub fn from_parts(
        layers: Vec<LayerSpec>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_chain(&layers)?;
        if weights.len() != layers.len() || biases.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter layer count",
                expected: layers.len(),
                actual: weights.len().min(biases.len()),
            });
        }
        for (i, l) in layers.iter().enumerate() {
            if weights[i].len() != l.input_width * l.output_width {
                return Err(Error::DimensionMismatch {
                    context: "weight matrix size",
                    expected: l.input_width * l.output_width,
                    actual: weights[i].len(),
                });
            }
            if biases[i].len() != l.output_width {
                return Err(Error::DimensionMismatch {
                    context: "bias vector size",
                    expected: l.output_width,
                    actual: biases[i].len(),
                });
            }
        }
        let params = Self {
            layers,
            weights,
            biases,
        };
        if !params.is_finite() {
            return Err(Error::contract("non-finite parameter"));
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .map(Vec::len)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        self.layers == other.layers
    }

    /// Every parameter, weights of all layers first, then biases.
    pub fn iter_all(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
    }

    /// Mutable visit of every parameter in the same order as [`Self::iter_all`].
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(&mut f);
        }
    }

    /// `self <- (1 - retained) * online + retained * self`.
    pub fn blend_toward(&mut self, online: &NetworkParams, retained: f64) -> Result<()> {
        if !self.same_shape(online) {
            return Err(Error::contract(
                "soft update between differently shaped networks",
            ));
        }
        let mix = 1.0 - retained;
        for (t, o) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(online.weights.iter().chain(online.biases.iter()))
        {
            for (tv, ov) in t.iter_mut().zip(o) {
                *tv = mix * ov + retained * *tv;
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_width(),
                actual: input.len(),
            });
        }
        let mut current = input.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let w = &self.weights[i];
            let mut next = self.biases[i].clone();
            for (o, out) in next.iter_mut().enumerate() {
                let row = &w[o * l.input_width..(o + 1) * l.input_width];
                *out += row.iter().zip(&current).map(|(a, b)| a * b).sum::<f64>();
                *out = l.activation.apply(*out);
            }
            current = next;
        }
        Ok(current)
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<Matrix> {
        let mut trace = self.forward_trace(input)?;
        Ok(trace.activations.pop().expect("non-empty"))
    }

    pub fn forward_trace(&self, input: &Matrix) -> Result<ForwardTrace> {
        if input.cols != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "batched network input",
                expected: self.input_width(),
                actual: input.cols,
            });
        }
        let rows = input.rows;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (i, l) in self.layers.iter().enumerate() {
            let prev = &activations[i];
            let mut out = Matrix::zeros(rows, l.output_width);
            for r in 0..rows {
                out.row_mut(r).copy_from_slice(&self.biases[i]);
            }
            // out (rows x out) += prev (rows x in) * W^T (in x out)
            gemm(
                rows,
                l.input_width,
                l.output_width,
                &prev.data,
                l.input_width,
                1,
                &self.weights[i],
                1,
                l.input_width,
                1.0,
                &mut out.data,
            );
            if l.activation != Activation::Linear {
                out.data
                    .iter_mut()
                    .for_each(|v| *v = l.activation.apply(*v));
            }
            activations.push(out);
        }
        Ok(ForwardTrace { activations })
    }

    /// Gradients of `upstream . forward(input)` for a single input vector.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<GradientBundle> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let trace = self.forward_trace(&x)?;
        let up = Matrix::from_vec(1, upstream.len(), upstream.to_vec())?;
        self.backward_batch(&trace, &up, true)
    }

    /// Gradients of `sum_r upstream[r] . output[r]` summed over the batch rows.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace,
        upstream: &Matrix,
        want_input_grad: bool,
    ) -> Result<GradientBundle> {
        self.backpropagate(trace, upstream, true, want_input_grad)
    }

    /// Input gradient only (`rows x input_width`), skipping parameter gradients.
    pub fn input_gradient_batch(&self, trace: &ForwardTrace, upstream: &Matrix) -> Result<Matrix> {
        let grads = self.backpropagate(trace, upstream, false, true)?;
        Matrix::from_vec(
            upstream.rows,
            self.input_width(),
            grads.input.expect("input gradient requested"),
        )
    }

    fn backpropagate(
        &self,
        trace: &ForwardTrace,
        upstream: &Matrix,
        want_param_grads: bool,
        want_input_grad: bool,
    ) -> Result<GradientBundle> {
        let out_width = self.output_width();
        if upstream.cols != out_width {
            return Err(Error::DimensionMismatch {
                context: "upstream gradient",
                expected: out_width,
                actual: upstream.cols,
            });
        }
        if trace.activations.len() != self.layers.len() + 1 || upstream.rows != trace.input().rows {
            return Err(Error::contract(
                "forward trace does not match network or upstream",
            ));
        }
        let rows = upstream.rows;
        let mut grads = GradientBundle::zeros_like(self);
        let mut delta = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let l = self.layers[i];
            let out = &trace.activations[i + 1];
            if l.activation != Activation::Linear {
                for (d, y) in delta.data.iter_mut().zip(&out.data) {
                    *d *= l.activation.derivative_from_output(*y);
                }
            }
            let prev = &trace.activations[i];
            if want_param_grads {
                // dW (out x in) = delta^T (out x rows) * prev (rows x in)
                gemm(
                    l.output_width,
                    rows,
                    l.input_width,
                    &delta.data,
                    1,
                    l.output_width,
                    &prev.data,
                    l.input_width,
                    1,
                    0.0,
                    &mut grads.weights[i],
                );
                let db = &mut grads.biases[i];
                for r in 0..rows {
                    for (b, d) in db.iter_mut().zip(delta.row(r)) {
                        *b += d;
                    }
                }
            }
            if i > 0 || want_input_grad {
                // dX (rows x in) = delta (rows x out) * W (out x in)
                let mut dx = Matrix::zeros(rows, l.input_width);
                gemm(
                    rows,
                    l.output_width,
                    l.input_width,
                    &delta.data,
                    l.output_width,
                    1,
                    &self.weights[i],
                    l.input_width,
                    1,
                    0.0,
                    &mut dx.data,
                );
                delta = dx;
            }
        }
        if want_input_grad {
            grads.input = Some(delta.data);
        }
        Ok(grads)
    }
}

/// Conventional Adam constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one array per parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m_weights: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<f64>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        let zw: Vec<Vec<f64>> = params.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let zb: Vec<Vec<f64>> = params.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            config,
            step: 0,
            m_weights: zw.clone(),
            v_weights: zw,
            m_biases: zb.clone(),
            v_biases: zb,
        }
    }

    fn matches(&self, params: &NetworkParams) -> bool {
        let same = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
        };
        same(&self.m_weights, &params.weights)
            && same(&self.v_weights, &params.weights)
            && same(&self.m_biases, &params.biases)
            && same(&self.v_biases, &params.biases)
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &GradientBundle,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::contract(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let shapes_ok = grads.weights.len() == params.weights.len()
        && grads.biases.len() == params.biases.len()
        && grads
            .weights
            .iter()
            .zip(&params.weights)
            .chain(grads.biases.iter().zip(&params.biases))
            .all(|(g, p)| g.len() == p.len());
    if !shapes_ok || !state.matches(params) {
        return Err(Error::contract(
            "gradient or optimizer state shape differs from parameters",
        ));
    }
    for i in 0..params.layers.len() {
        if grads.weights[i]
            .iter()
            .chain(&grads.biases[i])
            .any(|g| !g.is_finite())
        {
            return Err(Error::Divergence(format!(
                "non-finite gradient in layer {i}"
            )));
        }
    }

    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    for i in 0..params.layers.len() {
        update(
            &mut params.weights[i],
            &grads.weights[i],
            &mut state.m_weights[i],
            &mut state.v_weights[i],
        );
        update(
            &mut params.biases[i],
            &grads.biases[i],
            &mut state.m_biases[i],
            &mut state.v_biases[i],
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_linear(w: f64, b: f64) -> NetworkParams {
        NetworkParams::from_parts(
            vec![LayerSpec::new(1, 1, Activation::Linear)],
            vec![vec![w]],
            vec![vec![b]],
        )
        .unwrap()
    }

    /// Naive triple-loop forward pass, written independently of `forward`.
    fn oracle_forward(p: &NetworkParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (i, l) in p.layers().iter().enumerate() {
            let w = p.weights(i);
            let mut z = vec![0.0; l.output_width];
            for o in 0..l.output_width {
                let mut s = p.biases(i)[o];
                for k in 0..l.input_width {
                    s += w[o * l.input_width + k] * a[k];
                }
                z[o] = match l.activation {
                    Activation::Relu => {
                        if s > 0.0 {
                            s
                        } else {
                            0.0
                        }
                    }
                    Activation::Tanh => s.tanh(),
                    Activation::Linear => s,
                };
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_network_with_tanh_head_outputs_zero() {
        let p = NetworkParams::zeros(mlp_layers(4, &[8], 3, Activation::Relu, Activation::Tanh))
            .unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_linear_layer_forward() {
        assert_eq!(single_linear(2.0, 1.0).forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = NetworkParams::init_uniform(
            mlp_layers(4, &[8], 1, Activation::Relu, Activation::Linear),
            &mut rng,
        )
        .unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = p.forward(&x).unwrap();
            let want = oracle_forward(&p, &x);
            assert!((got[0] - want[0]).abs() <= 1e-12);
            let batched = p
                .forward_batch(&Matrix::from_vec(1, 4, x.clone()).unwrap())
                .unwrap();
            assert!((batched.row(0)[0] - want[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = single_linear(1.0, 0.0);
        match p.forward(&[1.0, 2.0]) {
            Err(Error::DimensionMismatch {
                expected, actual, ..
            }) => assert_eq!((expected, actual), (1, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn broken_chain_is_rejected() {
        let layers = vec![
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(4, 1, Activation::Linear),
        ];
        assert!(NetworkParams::zeros(layers).is_err());
        assert!(NetworkParams::zeros(vec![LayerSpec::new(0, 1, Activation::Relu)]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = NetworkParams::init_uniform(
            mlp_layers(3, &[5], 2, Activation::Relu, Activation::Tanh),
            &mut rng,
        )
        .unwrap();
        let g = p.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.iter_all().all(|v| v == 0.0));
        assert!(g.input.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_hand_derivative() {
        let g = single_linear(2.5, 1.0).backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(g.weights, vec![vec![3.0]]);
        assert_eq!(g.biases, vec![vec![1.0]]);
        assert_eq!(g.input, Some(vec![2.5]));
    }

    #[test]
    fn backward_rejects_bad_upstream() {
        assert!(single_linear(1.0, 0.0)
            .backward(&[1.0], &[1.0, 2.0])
            .is_err());
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = single_linear(0.7, -0.2);
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = GradientBundle::zeros_like(&p);
        adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
        assert_eq!(st.m_weights, vec![vec![0.0]]);
        assert_eq!(st.v_weights, vec![vec![0.0]]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = single_linear(0.0, 0.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let mut g = GradientBundle::zeros_like(&p);
        g.weights[0][0] = 1.0;
        adam_step(&mut p, &g, &mut st, 0.001).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.weights(0)[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_second_step_matches_scripted_oracle() {
        let (b1, b2, eps, lr, g) = (0.9f64, 0.999f64, 1e-8, 0.01, 0.37);
        // scripted reference
        let (mut m, mut v, mut w) = (0.0, 0.0, 0.5);
        let mut deltas = Vec::new();
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let step = lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            w -= step;
            deltas.push(step);
        }
        let mut p = single_linear(0.5, 0.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let mut grads = GradientBundle::zeros_like(&p);
        grads.weights[0][0] = g;
        adam_step(&mut p, &grads, &mut st, lr).unwrap();
        let after_first = p.weights(0)[0];
        adam_step(&mut p, &grads, &mut st, lr).unwrap();
        let second = (p.weights(0)[0] - after_first).abs();
        assert!((second - deltas[1]).abs() <= 1e-12);
        assert!((p.weights(0)[0] - w).abs() <= 1e-12);
    }

    #[test]
    fn adam_reports_diverging_layer() {
        let mut p =
            NetworkParams::zeros(mlp_layers(2, &[2], 1, Activation::Relu, Activation::Linear))
                .unwrap();
        let mut st = AdamState::new(&p, AdamConfig::default());
        let mut g = GradientBundle::zeros_like(&p);
        g.biases[1][0] = f64::NAN;
        let err = adam_step(&mut p, &g, &mut st, 1e-3).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        assert_eq!(st.step, 0);
        let zero = GradientBundle::zeros_like(&p);
        assert!(adam_step(&mut p, &zero, &mut st, 0.0).is_err());
    }

    #[test]
    fn blend_toward_mixes_with_retained_fraction() {
        let mut target = single_linear(1.0, 1.0);
        let online = single_linear(0.0, 0.0);
        target.blend_toward(&online, 0.96).unwrap();
        assert!((target.weights(0)[0] - 0.96).abs() < 1e-15);
    }
}
