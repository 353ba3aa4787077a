//! Dense feed-forward networks with hand-written backpropagation and an
//! adaptive-moment optimizer. Shared by the conditional kernel, the
//! reconstruction baseline and the downstream probes.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::num::Scalar;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dense<T: Scalar> {
    /// `inputs × outputs`
    #[serde(with = "crate::serial::decimal_array2")]
    pub weights: Array2<T>,
    #[serde(with = "crate::serial::decimal_array1")]
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    /// Fan-in scaled uniform initialization, `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || T::lit(rng.random_range(-bound..bound));
        Self {
            weights: Array2::from_shape_simple_fn((inputs, outputs), &mut draw),
            bias: Array1::from_shape_simple_fn(outputs, &mut draw),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weights) + &self.bias
    }
}

/// ReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mlp<T: Scalar> {
    pub layers: Vec<Dense<T>>,
}

/// Intermediate values recorded by [`Mlp::forward_train`] for backprop.
pub struct Tape<T: Scalar> {
    /// Input to every layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<T>>,
    /// Inverted-dropout scale per hidden activation, when dropout is active.
    masks: Vec<Option<Array2<T>>>,
    pub output: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice().expect("contiguous"), b.as_slice().expect("contiguous")])
            .collect()
    }
}

impl<T: Scalar> Mlp<T> {
    /// `sizes = [input, hidden.., output]`.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "network needs an input and an output size");
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense<T> {
        self.layers.last_mut().expect("non-empty")
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut h = self.layers[0].apply(x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(relu);
            h = layer.apply(h.view());
        }
        h
    }

    /// Forward pass that records activations. `dropout` is applied to every
    /// hidden activation when `rng` is given and `dropout > 0`.
    pub fn forward_train(&self, x: ArrayView2<T>, dropout: T, mut rng: Option<&mut Rng>) -> Tape<T> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_owned());
        masks.push(None);
        let mut h = self.layers[0].apply(x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(relu);
            let mask = match rng.as_deref_mut() {
                Some(rng) if dropout > T::zero() => {
                    let keep = T::one() - dropout;
                    let scale = T::one() / keep;
                    let keep_p = keep.as_f64();
                    let m = Array2::from_shape_simple_fn(h.dim(), || {
                        if rng.random::<f64>() < keep_p {
                            scale
                        } else {
                            T::zero()
                        }
                    });
                    h *= &m;
                    Some(m)
                }
                _ => None,
            };
            let next = layer.apply(h.view());
            inputs.push(h);
            masks.push(mask);
            h = next;
        }
        Tape {
            inputs,
            masks,
            output: h,
        }
    }

    /// Backpropagates `grad_output` (d loss / d output, one row per sample).
    pub fn backward(&self, tape: &Tape<T>, grad_output: Array2<T>) -> Gradients<T> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_output;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a = &tape.inputs[i];
            let gw = a.t().dot(&g).as_standard_layout().into_owned();
            let gb = g.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = g.dot(&layer.weights.t());
                // derivative of relu (and dropout) wrt the pre-activation
                match &tape.masks[i] {
                    Some(mask) => ndarray::Zip::from(&mut prev).and(a).and(mask).for_each(|p, &act, &m| {
                        *p = if act > T::zero() { *p * m } else { T::zero() };
                    }),
                    None => ndarray::Zip::from(&mut prev).and(a).for_each(|p, &act| {
                        if act <= T::zero() {
                            *p = T::zero();
                        }
                    }),
                }
                g = prev;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("contiguous"),
                    l.bias.as_slice_mut().expect("contiguous"),
                ]
            })
            .collect()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect()
    }
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Adam over a fixed list of flat parameter groups.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    pub learning_rate: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: T, group_sizes: &[usize]) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            first: group_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: group_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let c1 = T::one() - self.beta1.powi(self.step);
        let c2 = T::one() - self.beta2.powi(self.step);
        let lr = self.learning_rate;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
