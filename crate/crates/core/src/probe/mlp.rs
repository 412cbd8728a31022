//! Fully connected ReLU network with a two-unit softmax output, trained by
//! hand-written backpropagation over a flat parameter buffer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

/// Layer widths from input to output, e.g. `[64, 80, 40, 2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Negates the backpropagated signal at the first hidden layer. Only used
    /// to check that the gradient harness notices a broken backward pass.
    pub(crate) corrupt_backward: bool,
}

struct Cache {
    /// Input to each layer (post-activation, post-dropout for hidden ones).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers per hidden layer.
    masks: Vec<Option<Array2<f64>>>,
}

impl Mlp {
    /// Uniform initialization in +-1/sqrt(fan_in) for weights and biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let mut params = Vec::with_capacity(Self::count_params(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
            corrupt_backward: false,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::count_params(sizes)],
            corrupt_backward: false,
        }
    }

    fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offsets of (weights, bias) of layer `l` in the flat buffer.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.sizes[..=l]
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum();
        (start, start + self.sizes[l] * self.sizes[l + 1])
    }

    fn weights(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w, b) = self.offsets(l);
        ArrayView2::from_shape((self.sizes[l], self.sizes[l + 1]), &self.params[w..b])
            .expect("weight shape")
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.offsets(l);
        ArrayView1::from(&self.params[b..b + self.sizes[l + 1]])
    }

    /// Output logits without dropout.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for l in 0..self.n_layers() {
            let mut z = a.dot(&self.weights(l)) + self.bias(l);
            if l + 1 < self.n_layers() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Predicted labels: 1 iff the positive unit strictly wins.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<u8> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|r| u8::from(r[1] > r[0]))
            .collect()
    }

    fn forward<R: Rng>(&self, x: ArrayView2<'_, f64>, dropout: f64, rng: &mut R) -> (Array2<f64>, Cache) {
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.n_layers()),
            pre: Vec::new(),
            masks: Vec::new(),
        };
        let mut a = x.to_owned();
        for l in 0..self.n_layers() {
            let z = a.dot(&self.weights(l)) + self.bias(l);
            cache.inputs.push(a);
            if l + 1 == self.n_layers() {
                return (z, cache);
            }
            let mut h = z.mapv(|v| v.max(0.0));
            let mask = if dropout > 0.0 {
                let keep = 1.0 - dropout;
                let m = Array2::from_shape_fn(h.raw_dim(), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                h *= &m;
                Some(m)
            } else {
                None
            };
            cache.pre.push(z);
            cache.masks.push(mask);
            a = h;
        }
        unreachable!("network has an output layer")
    }

    /// Mean softmax cross-entropy over the batch. Writes parameter gradients
    /// into `grad` (overwriting it) and returns the loss.
    pub fn loss_and_grad<R: Rng>(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[u8],
        dropout: f64,
        rng: &mut R,
        grad: &mut [f64],
    ) -> f64 {
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(x.nrows(), labels.len());
        let n = labels.len() as f64;
        let (logits, cache) = self.forward(x, dropout, rng);
        let (loss, mut delta) = softmax_xent(&logits, labels);
        let loss = loss / n;
        delta /= n;

        for l in (0..self.n_layers()).rev() {
            let (w_off, b_off) = self.offsets(l);
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let dw = cache.inputs[l].t().dot(&delta);
            grad[w_off..b_off].copy_from_slice(dw.as_slice().expect("contiguous"));
            let db: Array1<f64> = delta.sum_axis(Axis(0));
            grad[b_off..b_off + fan_out].copy_from_slice(db.as_slice().expect("contiguous"));
            debug_assert_eq!(dw.dim(), (fan_in, fan_out));
            if l == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.weights(l).t());
            if let Some(mask) = &cache.masks[l - 1] {
                upstream *= mask;
            }
            let pre = &cache.pre[l - 1];
            upstream.zip_mut_with(pre, |d, &z| {
                if z <= 0.0 {
                    *d = 0.0
                }
            });
            if self.corrupt_backward && l == 1 {
                upstream.mapv_inplace(|v| -v);
            }
            delta = upstream;
        }
        loss
    }

    /// Mean loss without dropout.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[u8]) -> f64 {
        softmax_xent(&self.logits(x), labels).0 / labels.len() as f64
    }
}

/// Summed cross-entropy and the per-row gradient `softmax - onehot`.
fn softmax_xent(logits: &Array2<f64>, labels: &[u8]) -> (f64, Array2<f64>) {
    let mut delta = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = max + sum.ln();
        let y = usize::from(labels[i]);
        loss += log_sum - row[y];
        for (j, &v) in row.iter().enumerate() {
            delta[[i, j]] = (v - log_sum).exp() - if j == y { 1.0 } else { 0.0 };
        }
    }
    (loss, delta)
}
