use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn get(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.tensors[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Places every parameter on `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| g.leaf(t.clone(), trainable)).collect()
    }

    /// Replaces values by name, checking shapes; every parameter must be given.
    pub fn load(&mut self, mut lookup: impl FnMut(&str) -> Option<Tensor<T>>) -> Result<()> {
        for (name, slot) in self.names.iter().zip(self.tensors.iter_mut()) {
            let value = lookup(name).ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))?;
            if value.shape() != slot.shape() {
                return Err(Error::ShapeMismatch {
                    expected: slot.shape().to_vec(),
                    actual: value.shape().to_vec(),
                });
            }
            *slot = value;
        }
        Ok(())
    }
}

/// He-style normal initialization scaled for leaky ReLU with slope 0.2.
fn init<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let gain = (2.0f64 / (1.0 + 0.2 * 0.2)).sqrt();
    let normal = Normal::new(0.0, gain / (fan_in as f64).sqrt()).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(normal.sample(rng))).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

/// Strided 2-D convolution with bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    weight: usize,
    bias: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), init(vec![out_c, in_c, k, k], in_c * k * k, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(vec![out_c]));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], x: Var) -> Result<Var> {
        g.conv2d(x, bound[self.weight], Some(bound[self.bias]), self.stride, self.pad)
    }
}

/// Transposed (upsampling) 2-D convolution with bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvTranspose2d {
    weight: usize,
    bias: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        // Each output pixel receives about in_c * (k / stride)^2 taps.
        let fan_in = (in_c * k * k / (stride * stride)).max(1);
        let weight = params.add(format!("{name}.weight"), init(vec![in_c, out_c, k, k], fan_in, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(vec![out_c]));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], x: Var) -> Result<Var> {
        g.conv_transpose2d(x, bound[self.weight], Some(bound[self.bias]), self.stride, self.pad)
    }
}

/// Fully connected layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    weight: usize,
    bias: usize,
}

impl Dense {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let weight = params.add(format!("{name}.weight"), init(vec![outputs, inputs], inputs, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(vec![outputs]));
        Self { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], x: Var) -> Result<Var> {
        g.dense(x, bound[self.weight], Some(bound[self.bias]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{check_gradients, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_layer_stack_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::<f64>::new();
        let l1 = Dense::new(&mut params, "l1", 4, 6, &mut rng);
        let l2 = Dense::new(&mut params, "l2", 6, 2, &mut rng);
        let mut inputs: Vec<Tensor<f64>> = (0..params.len()).map(|i| params.get(i).clone()).collect();
        // Nonzero biases so their gradients are exercised away from zero.
        inputs[1] = random_tensor(&[6], 7);
        inputs.push(random_tensor(&[3, 4], 8));
        let build = move |g: &mut Graph<f64>, v: &[Var]| {
            let x = v[4];
            let h = l1.forward(g, v, x).unwrap();
            let h = g.tanh(h);
            let y = l2.forward(g, v, h).unwrap();
            let y = g.tanh(y);
            g.mean_square_to(y, 0.25)
        };
        let worst = check_gradients(&inputs, &build, 1e-4);
        assert!(worst < 1e-4, "relative error {worst}");
    }

    #[test]
    fn load_checks_names_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::<f32>::new();
        Conv2d::new(&mut params, "c", 2, 3, 3, 1, 1, &mut rng);
        let mut other = params.clone();
        other.get_mut(0).data_mut()[0] = 42.0;
        params.load(|n| other.iter().find(|(m, _)| *m == n).map(|(_, t)| t.clone())).unwrap();
        assert_eq!(params.get(0).data()[0], 42.0);
        assert!(params.load(|_| None).is_err());
        assert!(params.load(|_| Some(Tensor::zeros(vec![1]))).is_err());
    }
}
