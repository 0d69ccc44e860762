use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::params::{ParamView, Parameterized};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(T::zero()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `y = act(W x + b)` with `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: super::glorot(rng, outputs, inputs),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Row-wise forward pass over a batch `B x in`.
    pub fn forward_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.ncols() != self.inputs() {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        let mut z = x.dot(&self.weights.t());
        let act = self.activation;
        for mut row in z.rows_mut() {
            row.zip_mut_with(&self.bias, |v, b| *v = act.apply(*v + *b));
        }
        Ok(z)
    }

    /// Backward pass for a batch. Accumulates parameter gradients into
    /// `grad` and returns the input gradient.
    pub fn backward_batch(
        &self,
        x: ArrayView2<'_, T>,
        y: ArrayView2<'_, T>,
        dy: ArrayView2<'_, T>,
        grad: &mut DenseLayer<T>,
    ) -> Array2<T> {
        let act = self.activation;
        let mut dz = dy.to_owned();
        if act != Activation::Identity {
            dz.zip_mut_with(&y, |d, y| *d *= act.derivative_from_output(*y));
        }
        ndarray::linalg::general_mat_mul(T::one(), &dz.t(), &x, T::one(), &mut grad.weights);
        grad.bias += &dz.sum_axis(Axis(0));
        dz.dot(&self.weights)
    }

    /// Gradient w.r.t. the pre-activation, shared by fused losses.
    pub(crate) fn backward_from_preactivation(
        &self,
        x: ArrayView2<'_, T>,
        dz: ArrayView2<'_, T>,
        grad: &mut DenseLayer<T>,
    ) -> Array2<T> {
        ndarray::linalg::general_mat_mul(T::one(), &dz.t(), &x, T::one(), &mut grad.weights);
        grad.bias += &dz.sum_axis(Axis(0));
        dz.dot(&self.weights)
    }
}

impl<T: Scalar> Parameterized<T> for DenseLayer<T> {
    fn param_views(&self) -> Vec<ParamView<'_, T>> {
        vec![
            ParamView {
                name: "weight".into(),
                shape: self.weights.shape().to_vec(),
                data: self.weights.as_slice().expect("standard layout"),
            },
            ParamView {
                name: "bias".into(),
                shape: vec![self.bias.len()],
                data: self.bias.as_slice().expect("standard layout"),
            },
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Activations kept from a single-sample forward pass.
#[derive(Clone, Debug)]
pub struct DenseCache<T> {
    pub input: Array1<T>,
    pub output: Array1<T>,
}

pub fn dense_forward<T: Scalar>(layer: &DenseLayer<T>, input: ArrayView1<'_, T>) -> Result<DenseCache<T>> {
    let x = input.insert_axis(Axis(0));
    let y = layer.forward_batch(x)?;
    Ok(DenseCache {
        input: input.to_owned(),
        output: y.row(0).to_owned(),
    })
}

/// Returns `(input gradient, parameter gradients)` for one cached sample.
pub fn dense_backward<T: Scalar>(
    layer: &DenseLayer<T>,
    cache: &DenseCache<T>,
    upstream: ArrayView1<'_, T>,
) -> Result<(Array1<T>, DenseLayer<T>)> {
    if upstream.len() != layer.outputs() || cache.input.len() != layer.inputs() {
        return Err(Error::Shape(format!(
            "dense backward: layer {}x{}, input {}, upstream {}",
            layer.outputs(),
            layer.inputs(),
            cache.input.len(),
            upstream.len()
        )));
    }
    let mut grad = DenseLayer::zeros(layer.inputs(), layer.outputs(), layer.activation);
    let dx = layer.backward_batch(
        cache.input.view().insert_axis(Axis(0)),
        cache.output.view().insert_axis(Axis(0)),
        upstream.insert_axis(Axis(0)),
        &mut grad,
    );
    Ok((dx.row(0).to_owned(), grad))
}
