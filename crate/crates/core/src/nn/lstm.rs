//! Stacked LSTM with forget gates (no peepholes), a logistic output layer
//! applied at every step, and backpropagation through time.
//!
//! Per layer and step, with `x` the layer input and `h⁻`, `s⁻` the previous
//! hidden and cell state:
//!
//! ```text
//! g = tanh(Wgx x + Wgh h⁻ + bg)
//! i = σ(Wix x + Wih h⁻ + bi)
//! f = σ(Wfx x + Wfh h⁻ + bf)
//! o = σ(Wox x + Woh h⁻ + bo)
//! s = g ⊙ i + s⁻ ⊙ f
//! h = tanh(s) ⊙ o
//! ```
//!
//! Gate blocks are stacked row-wise in the order g, i, f, o.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{log_loss, log_loss_logit_grad, replication_weight};
use super::tensor::{sigmoid, Matrix};
use super::{uniform_init, Dropout, Network, Parameters, TensorRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Node,
    Input,
    Forget,
    Output,
}

impl Gate {
    fn offset(self) -> usize {
        match self {
            Gate::Node => 0,
            Gate::Input => 1,
            Gate::Forget => 2,
            Gate::Output => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub hidden: usize,
    /// `4H × D_in`
    pub w_x: Matrix,
    /// `4H × H`
    pub w_h: Matrix,
    /// `4H`
    pub bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            hidden,
            w_x: Matrix::zeros(4 * hidden, input),
            w_h: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_x.cols()
    }

    /// Rows of the input weights belonging to one gate.
    pub fn gate_rows(&self, gate: Gate) -> std::ops::Range<usize> {
        let h = self.hidden;
        gate.offset() * h..(gate.offset() + 1) * h
    }

    fn preactivation(&self, x: &[f64], h_prev: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        self.w_x.matvec_acc(x, out);
        self.w_h.matvec_acc(h_prev, out);
    }
}

/// Activates a stacked pre-activation in place: tanh for the node block,
/// logistic for the three gates.
fn activate(pre: &mut [f64], hidden: usize) {
    let (node, gates) = pre.split_at_mut(hidden);
    node.iter_mut().for_each(|v| *v = v.tanh());
    gates.iter_mut().for_each(|v| *v = sigmoid(*v));
}

/// One step of a single layer. Returns `(h, s)`.
pub fn lstm_cell_step(
    x: &[f64],
    h_prev: &[f64],
    s_prev: &[f64],
    params: &LstmLayerParams,
) -> (Vec<f64>, Vec<f64>) {
    let h = params.hidden;
    assert_eq!(x.len(), params.input_size(), "input size mismatch");
    assert_eq!(h_prev.len(), h, "hidden size mismatch");
    assert_eq!(s_prev.len(), h, "cell size mismatch");
    let mut act = vec![0.0; 4 * h];
    params.preactivation(x, h_prev, &mut act);
    activate(&mut act, h);
    let mut s = vec![0.0; h];
    let mut out = vec![0.0; h];
    for j in 0..h {
        let (g, i, f, o) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j]);
        s[j] = g * i + s_prev[j] * f;
        out[j] = s[j].tanh() * o;
    }
    (out, s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub layers: Vec<LstmLayerParams>,
    /// `K × H_last`
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
    /// Weight of the intermediate-step losses in the replicated objective.
    pub alpha: f64,
}

impl LstmModel {
    pub fn zeros(input: usize, hidden: &[usize], labels: usize, alpha: f64) -> Self {
        assert!(!hidden.is_empty(), "need at least one LSTM layer");
        assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
        let mut layers = Vec::with_capacity(hidden.len());
        let mut din = input;
        for &h in hidden {
            layers.push(LstmLayerParams::zeros(din, h));
            din = h;
        }
        Self {
            layers,
            out_w: Matrix::zeros(labels, din),
            out_b: vec![0.0; labels],
            alpha,
        }
    }

    /// Uniform `±1/√fan_in` weights, zero biases except the forget gate (1.0).
    pub fn new(input: usize, hidden: &[usize], labels: usize, alpha: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(input, hidden, labels, alpha);
        for layer in &mut m.layers {
            let (din, h) = (layer.input_size(), layer.hidden);
            uniform_init(&mut rng, layer.w_x.as_mut_slice(), din);
            uniform_init(&mut rng, layer.w_h.as_mut_slice(), h);
            let forget = layer.gate_rows(Gate::Forget);
            layer.bias[forget].fill(1.0);
        }
        let h_last = m.out_w.cols();
        uniform_init(&mut rng, m.out_w.as_mut_slice(), h_last);
        m
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    fn top_hidden(&self) -> usize {
        self.out_w.cols()
    }

    /// Predictions at every step, inference mode.
    pub fn forward(&self, seq: &Matrix) -> Vec<Vec<f64>> {
        let trace = self.run(seq, None);
        trace.preds
    }

    fn run(&self, seq: &Matrix, mut dropout: Option<&mut Dropout<'_>>) -> Trace {
        let steps = seq.rows();
        assert!(steps >= 1, "sequence must be nonempty");
        assert_eq!(seq.cols(), self.input_size(), "input width mismatch");
        let mut layer_traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        let mut below: Matrix = seq.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let h = layer.hidden;
            let din = layer.input_size();
            let mut input = below;
            let in_mask = if l > 0 {
                dropout.as_deref_mut().map(|d| {
                    let m = d.sample_mask(steps * din);
                    for (v, k) in input.as_mut_slice().iter_mut().zip(&m) {
                        *v *= k;
                    }
                    m
                })
            } else {
                None
            };
            let mut gates = Matrix::zeros(steps, 4 * h);
            let mut cell = Matrix::zeros(steps, h);
            let mut tanh_cell = Matrix::zeros(steps, h);
            let mut hid = Matrix::zeros(steps, h);
            let zeros = vec![0.0; h];
            for t in 0..steps {
                let (h_prev, s_prev) = if t == 0 {
                    (zeros.clone(), zeros.clone())
                } else {
                    (hid.row(t - 1).to_vec(), cell.row(t - 1).to_vec())
                };
                let act = gates.row_mut(t);
                layer.preactivation(input.row(t), &h_prev, act);
                activate(act, h);
                let act = gates.row(t).to_vec();
                for j in 0..h {
                    let s = act[j] * act[h + j] + s_prev[j] * act[2 * h + j];
                    let ts = s.tanh();
                    cell.set(t, j, s);
                    tanh_cell.set(t, j, ts);
                    hid.set(t, j, ts * act[3 * h + j]);
                }
            }
            below = hid.clone();
            layer_traces.push(LayerTrace {
                input,
                in_mask,
                gates,
                cell,
                tanh_cell,
                hidden: hid,
            });
        }
        // output layer reads the (dropped-out) top hidden state at each step
        let mut top = below;
        let out_mask = dropout.map(|d| {
            let m = d.sample_mask(top.as_slice().len());
            for (v, k) in top.as_mut_slice().iter_mut().zip(&m) {
                *v *= k;
            }
            m
        });
        let k = self.out_b.len();
        let mut preds = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut z = self.out_b.clone();
            self.out_w.matvec_acc(top.row(t), &mut z);
            preds.push(z.iter().map(|&v| sigmoid(v)).collect::<Vec<_>>());
        }
        debug_assert!(preds.iter().all(|p| p.len() == k));
        Trace {
            layers: layer_traces,
            top,
            out_mask,
            preds,
        }
    }

    fn replicated(&self, preds: &[Vec<f64>], labels: &[u8]) -> f64 {
        let steps = preds.len();
        preds
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let w = replication_weight(t, steps, self.alpha);
                if w == 0.0 {
                    0.0
                } else {
                    w * log_loss(p, labels)
                }
            })
            .sum()
    }

    fn backward(&self, trace: &Trace, labels: &[u8], grad: &mut LstmModel, scale: f64) {
        let steps = trace.preds.len();
        let k = self.out_b.len();
        let h_top = self.top_hidden();
        // gradient w.r.t. the hidden state feeding the layer above, per step
        let mut d_above = Matrix::zeros(steps, h_top);
        let mut dz = vec![0.0; k];
        for t in 0..steps {
            let w = replication_weight(t, steps, self.alpha);
            if w == 0.0 {
                continue;
            }
            log_loss_logit_grad(&trace.preds[t], labels, w * scale, &mut dz);
            grad.out_w.outer_acc(&dz, trace.top.row(t));
            super::tensor::axpy(1.0, &dz, &mut grad.out_b);
            self.out_w.matvec_t_acc(&dz, d_above.row_mut(t));
        }
        if let Some(mask) = &trace.out_mask {
            for (v, m) in d_above.as_mut_slice().iter_mut().zip(mask) {
                *v *= m;
            }
        }

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let lt = &trace.layers[l];
            let g_layer = &mut grad.layers[l];
            let h = layer.hidden;
            let din = layer.input_size();
            let mut d_input = Matrix::zeros(steps, din);
            let mut dh_next = vec![0.0; h];
            let mut ds_next = vec![0.0; h];
            let mut dpre = vec![0.0; 4 * h];
            let zeros = vec![0.0; h];
            for t in (0..steps).rev() {
                let act = lt.gates.row(t);
                let s_prev = if t == 0 {
                    &zeros[..]
                } else {
                    lt.cell.row(t - 1)
                };
                let tanh_s = lt.tanh_cell.row(t);
                let dh_above = d_above.row(t);
                for j in 0..h {
                    let (g, i, f, o) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j]);
                    let dh = dh_above[j] + dh_next[j];
                    let ts = tanh_s[j];
                    let ds = dh * o * (1.0 - ts * ts) + ds_next[j];
                    let d_o = dh * ts;
                    let d_g = ds * i;
                    let d_i = ds * g;
                    let d_f = ds * s_prev[j];
                    ds_next[j] = ds * f;
                    dpre[j] = d_g * (1.0 - g * g);
                    dpre[h + j] = d_i * i * (1.0 - i);
                    dpre[2 * h + j] = d_f * f * (1.0 - f);
                    dpre[3 * h + j] = d_o * o * (1.0 - o);
                }
                g_layer.w_x.outer_acc(&dpre, lt.input.row(t));
                super::tensor::axpy(1.0, &dpre, &mut g_layer.bias);
                layer.w_x.matvec_t_acc(&dpre, d_input.row_mut(t));
                dh_next.fill(0.0);
                if t > 0 {
                    g_layer.w_h.outer_acc(&dpre, lt.hidden.row(t - 1));
                    layer.w_h.matvec_t_acc(&dpre, &mut dh_next);
                }
            }
            if let Some(mask) = &lt.in_mask {
                for (v, m) in d_input.as_mut_slice().iter_mut().zip(mask) {
                    *v *= m;
                }
            }
            d_above = d_input;
        }
    }
}

struct LayerTrace {
    /// Layer input after dropout.
    input: Matrix,
    in_mask: Option<Vec<f64>>,
    /// Activated g, i, f, o per step.
    gates: Matrix,
    cell: Matrix,
    tanh_cell: Matrix,
    hidden: Matrix,
}

struct Trace {
    layers: Vec<LayerTrace>,
    top: Matrix,
    out_mask: Option<Vec<f64>>,
    preds: Vec<Vec<f64>>,
}

impl Parameters for LstmModel {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(TensorRef {
                name: format!("layer{l}.w_x"),
                data: layer.w_x.as_slice(),
                decay: true,
            });
            out.push(TensorRef {
                name: format!("layer{l}.w_h"),
                data: layer.w_h.as_slice(),
                decay: true,
            });
            out.push(TensorRef {
                name: format!("layer{l}.bias"),
                data: &layer.bias,
                decay: false,
            });
        }
        out.push(TensorRef {
            name: "output.w".into(),
            data: self.out_w.as_slice(),
            decay: true,
        });
        out.push(TensorRef {
            name: "output.b".into(),
            data: &self.out_b,
            decay: false,
        });
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.w_x.as_mut_slice());
            out.push(layer.w_h.as_mut_slice());
            out.push(&mut layer.bias);
        }
        out.push(self.out_w.as_mut_slice());
        out.push(&mut self.out_b);
        out
    }
}

impl Network for LstmModel {
    type Input = Matrix;

    fn loss_and_grad(
        &self,
        input: &Matrix,
        labels: &[u8],
        dropout: Option<&mut Dropout<'_>>,
        grad: &mut Self,
        scale: f64,
    ) -> f64 {
        let trace = self.run(input, dropout);
        let loss = self.replicated(&trace.preds, labels);
        self.backward(&trace, labels, grad, scale);
        loss
    }

    fn loss(&self, input: &Matrix, labels: &[u8]) -> f64 {
        self.replicated(&self.forward(input), labels)
    }

    /// Final-step output only.
    fn predict(&self, input: &Matrix) -> Vec<f64> {
        self.forward(input).pop().expect("nonempty sequence")
    }

    fn num_labels(&self) -> usize {
        self.out_b.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::replicated_loss;

    #[test]
    fn zero_parameters_give_half_gates() {
        let p = LstmLayerParams::zeros(3, 2);
        let (h, s) = lstm_cell_step(&[1.0, -2.0, 0.5], &[0.3, 0.1], &[0.0, 0.0], &p);
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(s, vec![0.0, 0.0]);
        // i=f=o=0.5, g=0: s = 0.5 * s_prev
        let (_, s) = lstm_cell_step(&[1.0, -2.0, 0.5], &[0.3, 0.1], &[0.4, -0.2], &p);
        assert_eq!(s, vec![0.2, -0.1]);
    }

    #[test]
    fn forget_path_inert_without_previous_state() {
        let mut p = LstmLayerParams::zeros(1, 1);
        p.w_x.as_mut_slice().copy_from_slice(&[0.7, -0.4, 2.5, 0.3]);
        p.bias.copy_from_slice(&[0.1, 0.2, -3.0, 0.0]);
        let (_, s) = lstm_cell_step(&[0.9], &[0.0], &[0.0], &p);
        let g = (0.7f64 * 0.9 + 0.1).tanh();
        let i = sigmoid(-0.4 * 0.9 + 0.2);
        assert!((s[0] - g * i).abs() < 1e-15);
    }

    #[test]
    fn cell_step_matches_scalar_arithmetic() {
        // H = 2, D = 2, hand-set parameters
        let mut p = LstmLayerParams::zeros(2, 2);
        let wx = [
            0.1, -0.2, 0.3, 0.4, // g
            -0.5, 0.6, 0.7, -0.8, // i
            0.9, 0.1, -0.2, 0.3, // f
            0.4, -0.5, 0.6, 0.2, // o
        ];
        let wh = [
            0.05, -0.1, 0.15, 0.2, // g
            -0.25, 0.3, 0.35, -0.4, // i
            0.45, 0.05, -0.1, 0.15, // f
            0.2, -0.25, 0.3, 0.1, // o
        ];
        p.w_x.as_mut_slice().copy_from_slice(&wx);
        p.w_h.as_mut_slice().copy_from_slice(&wh);
        p.bias
            .copy_from_slice(&[0.01, -0.02, 0.03, 0.04, 1.0, 1.0, -0.05, 0.06]);
        let x = [0.5, -1.5];
        let hp = [0.2, -0.3];
        let sp = [0.7, -0.1];
        let (h, s) = lstm_cell_step(&x, &hp, &sp, &p);
        for j in 0..2 {
            let pre = |block: usize| {
                let r = block * 2 + j;
                wx[r * 2] * x[0]
                    + wx[r * 2 + 1] * x[1]
                    + wh[r * 2] * hp[0]
                    + wh[r * 2 + 1] * hp[1]
                    + p.bias[r]
            };
            let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
            let g = pre(0).tanh();
            let i = logistic(pre(1));
            let f = logistic(pre(2));
            let o = logistic(pre(3));
            let s_exp = g * i + sp[j] * f;
            assert!((s[j] - s_exp).abs() < 1e-14);
            assert!((h[j] - s_exp.tanh() * o).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_model_predicts_half_everywhere() {
        let m = LstmModel::zeros(3, &[4, 4], 2, 0.5);
        let seq = Matrix::from_fn(5, 3, |r, c| (r + c) as f64);
        for p in m.forward(&seq) {
            assert_eq!(p, vec![0.5, 0.5]);
        }
    }

    /// Independent forward evaluation on nested Vecs.
    fn scalar_forward(m: &LstmModel, seq: &Matrix) -> Vec<Vec<f64>> {
        let mut inputs: Vec<Vec<f64>> = (0..seq.rows()).map(|t| seq.row(t).to_vec()).collect();
        for layer in &m.layers {
            let mut h = vec![0.0; layer.hidden];
            let mut s = vec![0.0; layer.hidden];
            let mut outs = Vec::new();
            for x in &inputs {
                let (nh, ns) = lstm_cell_step(x, &h, &s, layer);
                h = nh;
                s = ns;
                outs.push(h.clone());
            }
            inputs = outs;
        }
        inputs
            .iter()
            .map(|h| {
                (0..m.out_b.len())
                    .map(|k| {
                        let z: f64 = m.out_b[k]
                            + (0..h.len()).map(|j| m.out_w.get(k, j) * h[j]).sum::<f64>();
                        1.0 / (1.0 + (-z).exp())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn forward_matches_stepwise_oracle() {
        let m = LstmModel::new(2, &[2, 2], 2, 0.5, 11);
        let seq = Matrix::from_vec(3, 2, vec![0.1, -0.4, 0.9, 0.0, -0.3, 0.6]);
        let got = m.forward(&seq);
        let want = scalar_forward(&m, &seq);
        for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(m.predict(&seq), want[2]);
        assert!(got.iter().flatten().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn single_step_losses_coincide() {
        let seq = Matrix::from_vec(1, 2, vec![0.3, 0.8]);
        let y = [1, 0];
        let mut a = LstmModel::new(2, &[3], 2, 0.0, 5);
        let l0 = a.loss(&seq, &y);
        a.alpha = 1.0;
        let l1 = a.loss(&seq, &y);
        assert!((l0 - l1).abs() < 1e-15);
        assert!((l0 - replicated_loss(&a.forward(&seq), &y, 0.3)).abs() < 1e-15);
    }

    #[test]
    fn alpha_changes_gradient_only_for_longer_sequences() {
        let y = [1, 0];
        let grads = |alpha: f64, steps: usize| {
            let mut m = LstmModel::new(2, &[3], 2, alpha, 9);
            m.alpha = alpha;
            let seq = Matrix::from_fn(steps, 2, |r, c| 0.1 * (r as f64) - 0.2 * c as f64);
            let mut g = m.zeros_like();
            m.loss_and_grad(&seq, &y, None, &mut g, 1.0);
            g.tensors()
                .iter()
                .flat_map(|t| t.data.to_vec())
                .collect::<Vec<f64>>()
        };
        assert_eq!(grads(0.0, 1), grads(1.0, 1));
        assert_ne!(grads(0.0, 4), grads(1.0, 4));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let m = LstmModel::new(3, &[4], 2, 0.5, 1);
        let rows = m.layers[0].gate_rows(Gate::Forget);
        assert!(m.layers[0].bias[rows].iter().all(|&b| b == 1.0));
        let bound = 1.0 / 3f64.sqrt();
        assert!(m.layers[0].w_x.as_slice().iter().all(|w| w.abs() <= bound));
    }
}
