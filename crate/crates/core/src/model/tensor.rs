use alloc::vec;
use alloc::vec::Vec;

use super::Real;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub dims: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(dims: &[usize]) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![F::zero(); dims.iter().product()],
        }
    }

    pub fn filled(dims: &[usize], value: F) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.dims)
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: F) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| G::lit(v.as_f64())).collect(),
        }
    }
}
