//! Symmetric banded matrices stored by diagonal offset.
//!
//! Only the main diagonal and the upper diagonals are stored; the lower
//! triangle is implied by symmetry. Every matrix in this crate has a small,
//! fixed set of offsets (`{0}`, `{0, 1}` or `{0, 1, n}`), so a list of offsets
//! with one dense array per offset is both compact and fast to traverse.

use serde::{Deserialize, Serialize};

use crate::error::LinalgError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymBandMatrix {
    size: usize,
    offsets: Vec<usize>,
    diagonals: Vec<Vec<f64>>,
}

impl SymBandMatrix {
    /// Zero matrix with the given (deduplicated, sorted) offsets.
    ///
    /// Offsets that do not fit (`k >= size`) are dropped, except offset 0
    /// which is always present.
    pub fn zeros(size: usize, offsets: &[usize]) -> Self {
        let mut offs: Vec<usize> = offsets
            .iter()
            .copied()
            .filter(|&k| k == 0 || k < size)
            .chain(std::iter::once(0))
            .collect();
        offs.sort_unstable();
        offs.dedup();
        let diagonals = offs
            .iter()
            .map(|&k| vec![0.0; size - k.min(size)])
            .collect();
        Self {
            size,
            offsets: offs,
            diagonals,
        }
    }

    pub fn identity(size: usize) -> Self {
        Self::from_diagonal(vec![1.0; size])
    }

    pub fn from_diagonal(diag: Vec<f64>) -> Self {
        Self {
            size: diag.len(),
            offsets: vec![0],
            diagonals: vec![diag],
        }
    }

    /// Builds a matrix from `(offset, values)` pairs.
    ///
    /// Panics if an array has the wrong length for its offset or an offset
    /// appears twice; these are programming errors, not data errors.
    pub fn from_diagonals(size: usize, diags: Vec<(usize, Vec<f64>)>) -> Self {
        let mut pairs = diags;
        pairs.sort_by_key(|(k, _)| *k);
        if pairs.first().map(|(k, _)| *k) != Some(0) {
            pairs.insert(0, (0, vec![0.0; size]));
        }
        for w in pairs.windows(2) {
            assert!(w[0].0 != w[1].0, "duplicate offset {}", w[0].0);
        }
        for (k, v) in &pairs {
            assert!(
                *k == 0 || *k < size,
                "offset {k} out of range for size {size}"
            );
            assert_eq!(v.len(), size - k, "offset {k} needs {} values", size - k);
        }
        let (offsets, diagonals) = pairs.into_iter().unzip();
        Self {
            size,
            offsets,
            diagonals,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Largest stored offset.
    pub fn bandwidth(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0)
    }

    pub fn diagonal(&self, offset: usize) -> Option<&[f64]> {
        self.offsets
            .iter()
            .position(|&k| k == offset)
            .map(|p| self.diagonals[p].as_slice())
    }

    pub fn diagonal_mut(&mut self, offset: usize) -> Option<&mut [f64]> {
        self.offsets
            .iter()
            .position(|&k| k == offset)
            .map(move |p| self.diagonals[p].as_mut_slice())
    }

    pub fn main_diagonal(&self) -> &[f64] {
        &self.diagonals[0]
    }

    pub fn main_diagonal_mut(&mut self) -> &mut [f64] {
        &mut self.diagonals[0]
    }

    /// Iterates over `(offset, values)` pairs in increasing offset order.
    pub fn iter_diagonals(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.offsets
            .iter()
            .copied()
            .zip(self.diagonals.iter().map(Vec::as_slice))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        match self.diagonal(c - r) {
            Some(d) => d[r],
            None => 0.0,
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut out = vec![0.0; self.size];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = M v`. Dimension checked.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        if v.len() != self.size {
            return Err(LinalgError::DimensionMismatch {
                expected: self.size,
                found: v.len(),
            });
        }
        if out.len() != self.size {
            return Err(LinalgError::DimensionMismatch {
                expected: self.size,
                found: out.len(),
            });
        }
        for (o, (d, x)) in out.iter_mut().zip(self.diagonals[0].iter().zip(v)) {
            *o = d * x;
        }
        for (k, vals) in self.iter_diagonals().skip(1) {
            for (i, &a) in vals.iter().enumerate() {
                out[i] += a * v[i + k];
                out[i + k] += a * v[i];
            }
        }
        Ok(())
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64, LinalgError> {
        let mx = self.matvec(x)?;
        Ok(mx.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    /// Gershgorin bound on the spectral radius: max over rows of the
    /// absolute row sum.
    pub fn gershgorin_radius(&self) -> f64 {
        self.row_abs_sums().into_iter().fold(0.0, f64::max)
    }

    pub fn row_abs_sums(&self) -> Vec<f64> {
        let mut sums: Vec<f64> = self.diagonals[0].iter().map(|d| d.abs()).collect();
        for (k, vals) in self.iter_diagonals().skip(1) {
            for (i, &a) in vals.iter().enumerate() {
                sums[i] += a.abs();
                sums[i + k] += a.abs();
            }
        }
        sums
    }

    /// `Σ wᵢ Mᵢ` over matrices of equal size; the result carries the union
    /// of the operand offsets.
    pub fn linear_combination(terms: &[(f64, &SymBandMatrix)]) -> Self {
        let size = terms.first().map(|(_, m)| m.size).unwrap_or(0);
        let mut offsets: Vec<usize> = terms
            .iter()
            .flat_map(|(_, m)| m.offsets.iter().copied())
            .collect();
        offsets.sort_unstable();
        offsets.dedup();
        let mut out = Self::zeros(size, &offsets);
        for (w, m) in terms {
            assert_eq!(m.size, size, "size mismatch in linear combination");
            for (k, vals) in m.iter_diagonals() {
                let dst = out.diagonal_mut(k).expect("offset present by construction");
                for (d, s) in dst.iter_mut().zip(vals) {
                    *d += w * s;
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s: f64 = self.diagonals[0].iter().map(|x| x * x).sum();
        for (_, vals) in self.iter_diagonals().skip(1) {
            s += 2.0 * vals.iter().map(|x| x * x).sum::<f64>();
        }
        s.sqrt()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.size;
        let mut a = vec![0.0; n * n];
        for (k, vals) in self.iter_diagonals() {
            for (i, &v) in vals.iter().enumerate() {
                a[i * n + i + k] = v;
                a[(i + k) * n + i] = v;
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matvec() {
        let m = SymBandMatrix::identity(4);
        let v = vec![1.0, -2.0, 3.5, 0.25];
        assert_eq!(m.matvec(&v).unwrap(), v);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let m = SymBandMatrix::identity(3);
        assert_eq!(
            m.matvec(&[1.0, 2.0]),
            Err(LinalgError::DimensionMismatch {
                expected: 3,
                found: 2
            })
        );
    }

    #[test]
    fn gershgorin_of_diagonal() {
        let m = SymBandMatrix::from_diagonal(vec![1.0, 2.0, 3.0]);
        assert_eq!(m.gershgorin_radius(), 3.0);
    }

    #[test]
    fn large_offsets_are_dropped() {
        let m = SymBandMatrix::zeros(3, &[0, 1, 5]);
        assert_eq!(m.offsets(), &[0, 1]);
        assert_eq!(m.diagonal(1).unwrap().len(), 2);
    }

    #[test]
    fn linear_combination_unions_offsets() {
        let a = SymBandMatrix::from_diagonals(4, vec![(0, vec![1.0; 4]), (1, vec![2.0; 3])]);
        let b = SymBandMatrix::from_diagonals(4, vec![(0, vec![1.0; 4]), (2, vec![3.0; 2])]);
        let c = SymBandMatrix::linear_combination(&[(2.0, &a), (-1.0, &b)]);
        assert_eq!(c.offsets(), &[0, 1, 2]);
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(1, 0), 4.0);
        assert_eq!(c.get(2, 0), -3.0);
        assert_eq!(c.get(3, 0), 0.0);
    }
}
