//! Multilayer perceptron (rectified hidden layers, dropout) and logistic
//! regression over fixed-width feature vectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{log_loss, log_loss_logit_grad};
use super::tensor::{axpy, sigmoid, Matrix};
use super::{uniform_init, Dropout, Network, Parameters, TensorRef};

/// Layer activations (input first), hidden dropout masks, output probabilities.
type ForwardTrace = (Vec<Vec<f64>>, Vec<Option<Vec<f64>>>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Matrix::zeros(output, input),
            b: vec![0.0; output],
        }
    }

    fn init(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut d = Self::zeros(input, output);
        uniform_init(rng, d.w.as_mut_slice(), input);
        d
    }

    pub fn input_size(&self) -> usize {
        self.w.cols()
    }

    pub fn output_size(&self) -> usize {
        self.w.rows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b.clone();
        self.w.matvec_acc(x, &mut z);
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub hidden: Vec<Dense>,
    pub output: Dense,
}

impl MlpModel {
    pub fn new(input: usize, hidden: &[usize], labels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len());
        let mut din = input;
        for &h in hidden {
            layers.push(Dense::init(din, h, &mut rng));
            din = h;
        }
        Self {
            hidden: layers,
            output: Dense::init(din, labels, &mut rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.hidden.first().unwrap_or(&self.output).input_size()
    }

    /// Returns the (post-dropout) activations entering each layer, the
    /// dropout masks, and the output probabilities.
    fn run(&self, x: &[f64], mut dropout: Option<&mut Dropout<'_>>) -> ForwardTrace {
        assert_eq!(x.len(), self.input_size(), "feature length mismatch");
        let mut acts = vec![x.to_vec()];
        let mut masks = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let mut a = layer.apply(acts.last().unwrap());
            a.iter_mut().for_each(|v| *v = v.max(0.0));
            let mask = dropout.as_deref_mut().map(|d| d.sample_mask(a.len()));
            if let Some(m) = &mask {
                a.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            masks.push(mask);
            acts.push(a);
        }
        let probs = self
            .output
            .apply(acts.last().unwrap())
            .into_iter()
            .map(sigmoid)
            .collect();
        (acts, masks, probs)
    }
}

impl Parameters for MlpModel {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (i, l) in self
            .hidden
            .iter()
            .chain(std::iter::once(&self.output))
            .enumerate()
        {
            let tag = if i == self.hidden.len() {
                "output".to_string()
            } else {
                format!("hidden{i}")
            };
            out.push(TensorRef {
                name: format!("{tag}.w"),
                data: l.w.as_slice(),
                decay: true,
            });
            out.push(TensorRef {
                name: format!("{tag}.b"),
                data: &l.b,
                decay: false,
            });
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self
            .hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.output))
        {
            out.push(l.w.as_mut_slice());
            out.push(&mut l.b);
        }
        out
    }
}

impl Network for MlpModel {
    type Input = Vec<f64>;

    fn loss_and_grad(
        &self,
        input: &Vec<f64>,
        labels: &[u8],
        dropout: Option<&mut Dropout<'_>>,
        grad: &mut Self,
        scale: f64,
    ) -> f64 {
        let (acts, masks, probs) = self.run(input, dropout);
        let loss = log_loss(&probs, labels);
        let mut delta = vec![0.0; probs.len()];
        log_loss_logit_grad(&probs, labels, scale, &mut delta);

        let n = self.hidden.len();
        grad.output.w.outer_acc(&delta, &acts[n]);
        axpy(1.0, &delta, &mut grad.output.b);
        let mut upstream = vec![0.0; self.output.input_size()];
        self.output.w.matvec_t_acc(&delta, &mut upstream);
        for l in (0..n).rev() {
            // acts[l + 1] is post-ReLU, post-dropout; zero exactly where the
            // unit was inactive or dropped
            let mut d = upstream;
            for (j, v) in d.iter_mut().enumerate() {
                let keep = masks[l].as_ref().map_or(1.0, |m| m[j]);
                *v = if acts[l + 1][j] > 0.0 { *v * keep } else { 0.0 };
            }
            grad.hidden[l].w.outer_acc(&d, &acts[l]);
            axpy(1.0, &d, &mut grad.hidden[l].b);
            upstream = vec![0.0; self.hidden[l].input_size()];
            if l > 0 {
                self.hidden[l].w.matvec_t_acc(&d, &mut upstream);
            }
        }
        loss
    }

    fn loss(&self, input: &Vec<f64>, labels: &[u8]) -> f64 {
        log_loss(&self.predict(input), labels)
    }

    fn predict(&self, input: &Vec<f64>) -> Vec<f64> {
        self.run(input, None).2
    }

    fn num_labels(&self) -> usize {
        self.output.output_size()
    }
}

/// Logistic regression with its own ℓ2 penalty coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub layer: Dense,
    pub l2: f64,
}

impl LinearModel {
    pub fn zeros(input: usize, labels: usize, l2: f64) -> Self {
        Self {
            layer: Dense::zeros(input, labels),
            l2,
        }
    }

    pub fn new(input: usize, labels: usize, l2: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layer: Dense::init(input, labels, &mut rng),
            l2,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.layer.input_size(), "feature length mismatch");
        self.layer.apply(x)
    }
}

impl Parameters for LinearModel {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            TensorRef {
                name: "w".into(),
                data: self.layer.w.as_slice(),
                decay: true,
            },
            TensorRef {
                name: "b".into(),
                data: &self.layer.b,
                decay: false,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.layer.w.as_mut_slice(), &mut self.layer.b]
    }
}

impl Network for LinearModel {
    type Input = Vec<f64>;

    fn loss_and_grad(
        &self,
        input: &Vec<f64>,
        labels: &[u8],
        _dropout: Option<&mut Dropout<'_>>,
        grad: &mut Self,
        scale: f64,
    ) -> f64 {
        let probs = self.predict(input);
        let mut delta = vec![0.0; probs.len()];
        log_loss_logit_grad(&probs, labels, scale, &mut delta);
        grad.layer.w.outer_acc(&delta, input);
        axpy(1.0, &delta, &mut grad.layer.b);
        log_loss(&probs, labels)
    }

    fn loss(&self, input: &Vec<f64>, labels: &[u8]) -> f64 {
        log_loss(&self.predict(input), labels)
    }

    fn predict(&self, input: &Vec<f64>) -> Vec<f64> {
        self.logits(input).into_iter().map(sigmoid).collect()
    }

    fn num_labels(&self) -> usize {
        self.layer.output_size()
    }

    fn decay_coefficient(&self, _configured: f64) -> f64 {
        self.l2
    }
}
