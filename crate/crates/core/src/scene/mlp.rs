//! Two-layer perceptron `y = W2 relu(W1 x + b1) + b2` with a hand-written
//! backward pass.
//!
//! Parameters live in one flat buffer laid out as `[W1 | b1 | W2 | b2]`,
//! both weight matrices row-major. Gradient buffers share the layout, so an
//! optimizer can treat a whole network as a single slice.

use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    params: Vec<f64>,
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        let n = hidden * inputs + hidden + outputs * hidden + outputs;
        Self { inputs, hidden, outputs, params: vec![0.0; n] }
    }

    /// Kaiming-uniform hidden layer, zero output layer.
    pub fn kaiming<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        Self::kaiming_with_output(inputs, hidden, outputs, 0.0, rng)
    }

    /// Kaiming-uniform hidden layer; output weights uniform in
    /// `[-gain, gain) / sqrt(hidden)`, output biases zero.
    pub fn kaiming_with_output<R: Rng + ?Sized>(inputs: usize, hidden: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(inputs, hidden, outputs);
        let bound = (6.0 / inputs as f64).sqrt();
        for w in net.w1_mut() {
            *w = rng.random_range(-bound..bound);
        }
        if gain > 0.0 {
            let bound = gain / (hidden as f64).sqrt();
            for w in net.w2_mut() {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn from_params(inputs: usize, hidden: usize, outputs: usize, params: Vec<f64>) -> Option<Self> {
        let net = Self::zeros(inputs, hidden, outputs);
        (net.params.len() == params.len()).then_some(Self { params, ..net })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
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

    fn offsets(&self) -> [usize; 4] {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.outputs * self.hidden;
        [0, b1, w2, b2]
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        let [_, b1, ..] = self.offsets();
        &mut self.params[..b1]
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        let [_, _, w2, b2] = self.offsets();
        &mut self.params[w2..b2]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        let [.., b2] = self.offsets();
        &mut self.params[b2..]
    }

    /// Writes the outputs into `out` and the hidden pre-activations into
    /// `pre`, which the backward pass needs.
    pub fn forward(&self, x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(pre.len(), self.hidden);
        debug_assert_eq!(out.len(), self.outputs);
        let [_, b1, w2, b2] = self.offsets();
        let p = &self.params;
        for (j, pre_j) in pre.iter_mut().enumerate() {
            let row = &p[j * self.inputs..(j + 1) * self.inputs];
            *pre_j = p[b1 + j] + dot(row, x);
        }
        for (o, out_o) in out.iter_mut().enumerate() {
            let row = &p[w2 + o * self.hidden..w2 + (o + 1) * self.hidden];
            let mut acc = p[b2 + o];
            for (w, &h) in row.iter().zip(pre.iter()) {
                if h > 0.0 {
                    acc += w * h;
                }
            }
            *out_o = acc;
        }
    }

    /// Accumulates parameter gradients into `grad` (same layout as the
    /// parameters) and writes the input gradient into `dx`.
    pub fn backward(&self, x: &[f64], pre: &[f64], dy: &[f64], grad: &mut [f64], dx: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let [_, b1, w2, b2] = self.offsets();
        let p = &self.params;
        let mut dh = vec![0.0; self.hidden];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[b2 + o] += g;
            let row = w2 + o * self.hidden;
            for j in 0..self.hidden {
                let h = pre[j];
                if h > 0.0 {
                    grad[row + j] += g * h;
                    dh[j] += g * p[row + j];
                }
            }
        }
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (j, &d) in dh.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[b1 + j] += d;
            let row = j * self.inputs;
            for i in 0..self.inputs {
                grad[row + i] += d * x[i];
                dx[i] += d * p[row + i];
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
