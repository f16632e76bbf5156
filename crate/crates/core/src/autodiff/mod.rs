//! A small reverse-mode differentiation engine with just the layers the
//! image-to-spectrogram GAN needs: strided and transposed 2-D convolution,
//! leaky ReLU, pixelwise normalization, dense layers, tanh, and Adam.
//!
//! Tensors are NCHW. Everything is generic over [`Scalar`] so gradients can
//! be checked in double precision while training runs in single precision.

mod adam;
pub mod checkpoint;
mod graph;
pub mod gradcheck;
pub(crate) mod kernels;
mod layers;

use std::fmt::Debug;

pub use adam::{Adam, AdamConfig};
pub use graph::{CustomOp, Graph, Var};
pub use layers::{Conv2d, ConvTranspose2d, Dense, ParamSet};

use crate::error::{Error, Result};

/// Floating-point element type of a [`Tensor`].
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + Default + Debug + Send + Sync + std::iter::Sum + 'static
{
    /// Raw GEMM, `C = alpha A B + beta C`.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n`
    /// views.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Dense row-major array with a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on a tensor with {} values", self.data.len());
        self.data[0]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
        }
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                actual: self.shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }
}
