//! Flat parameter vectors partitioned into named blocks.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("unknown block name: {0}")]
    UnknownBlock(String),
    #[error("duplicate block name: {0}")]
    DuplicateBlock(String),
    #[error("block shape mismatch for {name}: expected {expected}, got {got}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
}

/// Ordered map block-name → vector. Block order is fixed per model; the
/// flat view concatenates blocks in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVec<S> {
    blocks: Vec<(String, Vec<S>)>,
}

impl<S: Scalar> Default for ParamVec<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamVec<S> {
    pub fn new() -> Self {
        ParamVec { blocks: Vec::new() }
    }

    pub fn push_block(&mut self, name: &str, values: Vec<S>) -> Result<(), ParamError> {
        if self.blocks.iter().any(|(n, _)| n == name) {
            return Err(ParamError::DuplicateBlock(name.to_string()));
        }
        self.blocks.push((name.to_string(), values));
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|(n, _)| n.as_str())
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.blocks.iter().any(|(n, _)| n == name)
    }

    pub fn block(&self, name: &str) -> Result<&[S], ParamError> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| ParamError::UnknownBlock(name.to_string()))
    }

    pub fn block_mut(&mut self, name: &str) -> Result<&mut Vec<S>, ParamError> {
        self.blocks
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| ParamError::UnknownBlock(name.to_string()))
    }

    /// Flat offset of the first entry of `name` in the concatenated view.
    pub fn block_offset(&self, name: &str) -> Result<usize, ParamError> {
        let mut off = 0;
        for (n, v) in &self.blocks {
            if n == name {
                return Ok(off);
            }
            off += v.len();
        }
        Err(ParamError::UnknownBlock(name.to_string()))
    }

    pub fn iter_blocks(&self) -> impl Iterator<Item = (&str, &[S])> {
        self.blocks.iter().map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = S> + '_ {
        self.blocks.iter().flat_map(|(_, v)| v.iter().copied())
    }

    pub fn to_flat(&self) -> Vec<S> {
        self.iter_flat().collect()
    }

    /// Rebuild from a flat vector using this vector's block structure.
    pub fn with_flat(&self, flat: &[S]) -> ParamVec<S> {
        assert_eq!(flat.len(), self.total_len());
        let mut out = ParamVec::new();
        let mut off = 0;
        for (n, v) in &self.blocks {
            out.push_block(n, flat[off..off + v.len()].to_vec()).unwrap();
            off += v.len();
        }
        out
    }

    pub fn zeros_like(&self) -> ParamVec<S> {
        let mut out = ParamVec::new();
        for (n, v) in &self.blocks {
            out.push_block(n, vec![S::zero(); v.len()]).unwrap();
        }
        out
    }

    pub fn same_shape(&self, other: &ParamVec<S>) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|((an, av), (bn, bv))| an == bn && av.len() == bv.len())
    }

    pub fn dot(&self, other: &ParamVec<S>) -> S {
        debug_assert!(self.same_shape(other));
        let mut acc = S::zero();
        for ((_, a), (_, b)) in self.blocks.iter().zip(&other.blocks) {
            for (x, y) in a.iter().zip(b) {
                acc = acc + *x * *y;
            }
        }
        acc
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn scale_in_place(&mut self, c: S) {
        for (_, v) in &mut self.blocks {
            for x in v {
                *x = *x * c;
            }
        }
    }

    /// self += c * other
    pub fn axpy(&mut self, c: S, other: &ParamVec<S>) {
        debug_assert!(self.same_shape(other));
        for ((_, a), (_, b)) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + c * *y;
            }
        }
    }

    pub fn add(&self, other: &ParamVec<S>) -> ParamVec<S> {
        let mut out = self.clone();
        out.axpy(S::one(), other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.iter_flat().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(pairs: &[(&str, &[f64])]) -> ParamVec<f64> {
        let mut p = ParamVec::new();
        for (n, v) in pairs {
            p.push_block(n, v.to_vec()).unwrap();
        }
        p
    }

    #[test]
    fn block_accounting() {
        let p = pv(&[("trunk", &[1.0, 2.0]), ("readout", &[3.0])]);
        assert_eq!(p.total_len(), 3);
        assert_eq!(p.block_offset("readout").unwrap(), 2);
        assert_eq!(p.block("trunk").unwrap(), &[1.0, 2.0]);
        assert!(matches!(
            p.block("bogus"),
            Err(ParamError::UnknownBlock(_))
        ));
    }

    #[test]
    fn duplicate_block_rejected() {
        let mut p = ParamVec::<f64>::new();
        p.push_block("a", vec![1.0]).unwrap();
        assert!(matches!(
            p.push_block("a", vec![2.0]),
            Err(ParamError::DuplicateBlock(_))
        ));
    }

    #[test]
    fn dot_and_axpy() {
        let a = pv(&[("x", &[1.0, 2.0, 3.0])]);
        let b = pv(&[("x", &[4.0, 5.0, 6.0])]);
        assert_eq!(a.dot(&b), 32.0);
        let mut c = a.clone();
        c.axpy(2.0, &b);
        assert_eq!(c.block("x").unwrap(), &[9.0, 12.0, 15.0]);
    }

    #[test]
    fn flat_round_trip() {
        let a = pv(&[("x", &[1.0, 2.0]), ("y", &[3.0])]);
        let flat = a.to_flat();
        assert_eq!(a.with_flat(&flat), a);
    }
}
