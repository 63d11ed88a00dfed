//! Real-valued latent feature tensors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};

/// Logical `(w, h, c)` shape of a latent. Elements are stored channel-major:
/// index `(ch * h + row) * w + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub w: usize,
    pub h: usize,
    pub c: usize,
}

impl Shape {
    pub fn new(w: usize, h: usize, c: usize) -> Result<Self> {
        if w == 0 || h == 0 || c == 0 {
            return Err(config_err("shape", "all dimensions must be positive"));
        }
        Ok(Shape { w, h, c })
    }

    /// A flat `(len, 1, 1)` shape.
    pub fn flat(len: usize) -> Self {
        Shape { w: len, h: 1, c: 1 }
    }

    pub fn len(&self) -> usize {
        self.w * self.h * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    data: Vec<f64>,
    shape: Shape,
}

impl Latent {
    pub fn new(data: Vec<f64>, shape: Shape) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: shape.len(),
                actual: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain {
                what: "latent entry",
                expected: "finite",
                value: bad,
            });
        }
        Ok(Latent { data, shape })
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let shape = Shape::flat(data.len());
        Latent { data, shape }
    }

    pub fn zeros(shape: Shape) -> Self {
        Latent {
            data: vec![0.0; shape.len()],
            shape,
        }
    }

    /// Builds a latent without the finiteness check. Used on hot paths where
    /// inputs are already validated.
    pub(crate) fn from_parts(data: Vec<f64>, shape: Shape) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        Latent { data, shape }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, k: f64) -> Latent {
        Latent::from_parts(self.data.iter().map(|x| k * x).collect(), self.shape)
    }

    pub(crate) fn check_same_shape(&self, other: &Latent) -> Result<()> {
        if self.data.len() != other.data.len() {
            return Err(Error::ShapeMismatch {
                expected: self.data.len(),
                actual: other.data.len(),
            });
        }
        Ok(())
    }

    /// Extracts the elements at `indices` into a flat latent.
    pub fn gather(&self, indices: &[usize]) -> Latent {
        Latent::from_vec(indices.iter().map(|&i| self.data[i]).collect())
    }

    /// Writes a flat latent back into the positions `indices`.
    pub fn scatter(&mut self, indices: &[usize], values: &Latent) {
        for (&i, &v) in indices.iter().zip(values.as_slice()) {
            self.data[i] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Shape::new(0, 1, 1).is_err());
        let s = Shape::new(2, 2, 1).unwrap();
        assert!(Latent::new(vec![0.0; 3], s).is_err());
        assert!(Latent::new(vec![0.0, 1.0, f64::NAN, 0.0], s).is_err());
        assert!(Latent::new(vec![0.0; 4], s).is_ok());
    }

    #[test]
    fn gather_scatter() {
        let mut l = Latent::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let g = l.gather(&[1, 3]);
        assert_eq!(g.as_slice(), &[2.0, 4.0]);
        l.scatter(&[0, 2], &Latent::from_vec(vec![9.0, 8.0]));
        assert_eq!(l.as_slice(), &[9.0, 2.0, 8.0, 4.0]);
    }
}
