use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::dense::{Activation, DenseLayer};
use super::params::{prefixed, ParamView, Parameterized};
use crate::{Error, Result, Scalar};

/// One LSTM cell. Every gate reads the concatenation `[x_t, h_{t-1}]`.
///
/// ```text
/// i = sigmoid(W_i [x, h] + b_i)    f = sigmoid(W_f [x, h] + b_f)
/// o = sigmoid(W_o [x, h] + b_o)    g = tanh(W_g [x, h] + b_g)
/// c_t = f * c_{t-1} + i * g        h_t = o * tanh(c_t)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell<T> {
    pub input_gate: DenseLayer<T>,
    pub forget_gate: DenseLayer<T>,
    pub output_gate: DenseLayer<T>,
    pub candidate: DenseLayer<T>,
}

/// Activations of one batched step, kept for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmStepCache<T> {
    xh: Array2<T>,
    i: Array2<T>,
    f: Array2<T>,
    o: Array2<T>,
    g: Array2<T>,
    c_prev: Array2<T>,
    tanh_c: Array2<T>,
}

impl<T: Scalar> LstmCell<T> {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        let gate = |a| DenseLayer::zeros(input_size + hidden, hidden, a);
        LstmCell {
            input_gate: gate(Activation::Sigmoid),
            forget_gate: gate(Activation::Sigmoid),
            output_gate: gate(Activation::Sigmoid),
            candidate: gate(Activation::Tanh),
        }
    }

    /// Glorot-uniform gate weights, zero biases except the forget gate at +1.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input_size: usize, hidden: usize) -> Self {
        let n = input_size + hidden;
        let mut cell = LstmCell {
            input_gate: DenseLayer::glorot(rng, n, hidden, Activation::Sigmoid),
            forget_gate: DenseLayer::glorot(rng, n, hidden, Activation::Sigmoid),
            output_gate: DenseLayer::glorot(rng, n, hidden, Activation::Sigmoid),
            candidate: DenseLayer::glorot(rng, n, hidden, Activation::Tanh),
        };
        cell.forget_gate.bias.fill(T::one());
        cell
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.outputs()
    }

    pub fn input_size(&self) -> usize {
        self.input_gate.inputs() - self.hidden()
    }

    fn gates(&self) -> [&DenseLayer<T>; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate]
    }

    /// One step for a batch: `x` is `B x input`, `h` and `c` are `B x H`.
    pub fn step_batch(
        &self,
        x: ArrayView2<'_, T>,
        h: ArrayView2<'_, T>,
        c: ArrayView2<'_, T>,
    ) -> Result<(Array2<T>, Array2<T>, LstmStepCache<T>)> {
        let hs = self.hidden();
        if x.ncols() != self.input_size() || h.ncols() != hs || c.ncols() != hs || x.nrows() != h.nrows() || h.nrows() != c.nrows()
        {
            return Err(Error::Shape(format!(
                "LSTM step expects x: B x {}, h/c: B x {hs}; got {:?}, {:?}, {:?}",
                self.input_size(),
                x.shape(),
                h.shape(),
                c.shape()
            )));
        }
        let xh = concatenate(Axis(1), &[x, h]).expect("rows agree");
        let i = self.input_gate.forward_batch(xh.view())?;
        let f = self.forget_gate.forward_batch(xh.view())?;
        let o = self.output_gate.forward_batch(xh.view())?;
        let g = self.candidate.forward_batch(xh.view())?;
        let c_new = &f * &c + &i * &g;
        let tanh_c = c_new.mapv(|v| v.tanh());
        let h_new = &o * &tanh_c;
        let cache = LstmStepCache {
            xh,
            i,
            f,
            o,
            g,
            c_prev: c.to_owned(),
            tanh_c,
        };
        Ok((h_new, c_new, cache))
    }

    /// Backward through one step given the gradients flowing into `h_t` and
    /// `c_t`. Accumulates into `grad`; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward_batch(
        &self,
        cache: &LstmStepCache<T>,
        dh: ArrayView2<'_, T>,
        dc: ArrayView2<'_, T>,
        grad: &mut LstmCell<T>,
    ) -> (Array2<T>, Array2<T>, Array2<T>) {
        let one = T::one();
        let d_o = &dh * &cache.tanh_c;
        let mut dc_total = dc.to_owned();
        ndarray::Zip::from(&mut dc_total)
            .and(&dh)
            .and(&cache.o)
            .and(&cache.tanh_c)
            .for_each(|d, dh, o, tc| *d += *dh * *o * (one - *tc * *tc));
        let d_f = &dc_total * &cache.c_prev;
        let d_i = &dc_total * &cache.g;
        let d_g = &dc_total * &cache.i;
        let dc_prev = &dc_total * &cache.f;

        let xh = cache.xh.view();
        let mut dxh = self
            .input_gate
            .backward_batch(xh, cache.i.view(), d_i.view(), &mut grad.input_gate);
        dxh += &self
            .forget_gate
            .backward_batch(xh, cache.f.view(), d_f.view(), &mut grad.forget_gate);
        dxh += &self
            .output_gate
            .backward_batch(xh, cache.o.view(), d_o.view(), &mut grad.output_gate);
        dxh += &self
            .candidate
            .backward_batch(xh, cache.g.view(), d_g.view(), &mut grad.candidate);
        let n_in = self.input_size();
        let dx = dxh.slice(s![.., ..n_in]).to_owned();
        let dh_prev = dxh.slice(s![.., n_in..]).to_owned();
        (dx, dh_prev, dc_prev)
    }
}

impl<T: Scalar> Parameterized<T> for LstmCell<T> {
    fn param_views(&self) -> Vec<ParamView<'_, T>> {
        let names = ["input", "forget", "output", "candidate"];
        names
            .iter()
            .zip(self.gates())
            .flat_map(|(n, g)| prefixed(n, g.param_views()))
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.input_gate.param_slices_mut();
        v.extend(self.forget_gate.param_slices_mut());
        v.extend(self.output_gate.param_slices_mut());
        v.extend(self.candidate.param_slices_mut());
        v
    }
}

/// Single-sample LSTM step: returns `(h_t, c_t, cache)`.
pub fn lstm_step<T: Scalar>(
    cell: &LstmCell<T>,
    x: ArrayView1<'_, T>,
    h_prev: ArrayView1<'_, T>,
    c_prev: ArrayView1<'_, T>,
) -> Result<(Array1<T>, Array1<T>, LstmStepCache<T>)> {
    let (h, c, cache) = cell.step_batch(
        x.insert_axis(Axis(0)),
        h_prev.insert_axis(Axis(0)),
        c_prev.insert_axis(Axis(0)),
    )?;
    Ok((h.row(0).to_owned(), c.row(0).to_owned(), cache))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_stays_at_zero() {
        let cell = LstmCell::<f64>::zeros(3, 4);
        let z = Array1::zeros(4);
        let (h, c, _) = lstm_step(&cell, ndarray::array![1.0, -5.0, 2.0].view(), z.view(), z.view()).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
        assert!(c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn closed_forget_gate_erases_memory() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cell = LstmCell::<f64>::init(&mut rng, 2, 3);
        cell.forget_gate.weights.fill(0.0);
        cell.forget_gate.bias.fill(-50.0);
        let x = ndarray::array![0.4, -0.9];
        let h0 = ndarray::array![0.2, 0.1, -0.3];
        let c0 = ndarray::array![5.0, -7.0, 3.0];
        let (_, c, cache) = lstm_step(&cell, x.view(), h0.view(), c0.view()).unwrap();
        let ig = &cache.i.row(0) * &cache.g.row(0);
        for (a, b) in c.iter().zip(ig.iter()) {
            assert!((a - b).abs() < 1e-20);
        }
    }

    #[test]
    fn shape_errors() {
        let cell = LstmCell::<f64>::zeros(3, 4);
        let z = Array1::zeros(4);
        assert!(lstm_step(&cell, ndarray::array![1.0].view(), z.view(), z.view()).is_err());
    }

    // Loss = sum of random projections of every h_t and the final c, over a
    // 5-step sequence of a batch of 2.
    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n_in, hid, steps, batch) = (3, 4, 5, 2);
        let cell = LstmCell::<f64>::init(&mut rng, n_in, hid);
        let xs: Vec<Array2<f64>> = (0..steps)
            .map(|_| Array2::from_shape_simple_fn((batch, n_in), || rng.random_range(-1.0..1.0)))
            .collect();
        let proj: Vec<Array2<f64>> = (0..steps)
            .map(|_| Array2::from_shape_simple_fn((batch, hid), || rng.random_range(-1.0..1.0)))
            .collect();
        let cproj = Array2::from_shape_simple_fn((batch, hid), || rng.random_range(-1.0..1.0));

        let run = |cell: &LstmCell<f64>| {
            let mut h = Array2::zeros((batch, hid));
            let mut c = Array2::zeros((batch, hid));
            let mut loss = 0.0;
            let mut caches = Vec::new();
            for t in 0..steps {
                let (h2, c2, cache) = cell.step_batch(xs[t].view(), h.view(), c.view()).unwrap();
                loss += (&h2 * &proj[t]).sum();
                h = h2;
                c = c2;
                caches.push(cache);
            }
            loss += (&c * &cproj).sum();
            (loss, caches)
        };
        let (_, caches) = run(&cell);
        let mut grad = LstmCell::zeros(n_in, hid);
        let mut dh = Array2::zeros((batch, hid));
        let mut dc = cproj.clone();
        for t in (0..steps).rev() {
            dh += &proj[t];
            let (_, dhp, dcp) = cell.backward_batch(&caches[t], dh.view(), dc.view(), &mut grad);
            dh = dhp;
            dc = dcp;
        }
        let report = grad_check(&cell, &grad, |c| run(c).0, 1e-5);
        assert!(report.passes(1e-5), "{report:?}");
    }
}
