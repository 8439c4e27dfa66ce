//! Row-major dense LU with partial pivoting.

use crate::error::LinalgError;

#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    swaps: usize,
}

impl DenseLu {
    /// Factors `P A = L U`. An exactly zero pivot column is skipped rather
    /// than rejected so that the determinant sign can still be reported.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Self {
        assert_eq!(a.len(), n * n, "dense matrix must be n x n");
        let mut perm = Vec::with_capacity(n);
        let mut swaps = 0;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            perm.push(p);
            if p != k {
                swaps += 1;
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let piv = a[k * n + k];
            if piv == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n..(k + 1) * n];
            for row in lower.chunks_exact_mut(n) {
                let l = row[k] / piv;
                row[k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        row[j] -= l * pivot_row[j];
                    }
                }
            }
        }
        Self {
            n,
            lu: a,
            perm,
            swaps,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn pivots(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.lu[k * self.n + k])
    }

    /// Smallest pivot magnitude and its index.
    pub fn min_pivot(&self) -> Option<(usize, f64)> {
        self.pivots()
            .enumerate()
            .map(|(i, p)| (i, p.abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn det_sign(&self) -> i8 {
        let mut sign: i8 = if self.swaps.is_multiple_of(2) { 1 } else { -1 };
        for p in self.pivots() {
            if p == 0.0 {
                return 0;
            }
            if p < 0.0 {
                sign = -sign;
            }
        }
        sign
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x = b.to_vec();
        for (k, &p) in self.perm.iter().enumerate() {
            x.swap(k, p);
        }
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..]
                .iter()
                .zip(&x[i + 1..])
                .map(|(u, v)| u * v)
                .sum();
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x = b.to_vec();
        // Uᵀ u = b
        for i in 0..n {
            x[i] /= self.lu[i * n + i];
            let xi = x[i];
            for j in i + 1..n {
                x[j] -= self.lu[i * n + j] * xi;
            }
        }
        // Lᵀ v = u
        for i in (0..n).rev() {
            let xi = x[i];
            for j in 0..i {
                x[j] -= self.lu[i * n + j] * xi;
            }
        }
        for (k, &p) in self.perm.iter().enumerate().rev() {
            x.swap(k, p);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_and_transposes() {
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let lu = DenseLu::factor(a.clone(), 3);
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b).unwrap();
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert_abs_diff_eq!(r, b[i], epsilon = 1e-14);
        }
        let y = lu.solve_transpose(&b).unwrap();
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[j * 3 + i] * y[j]).sum();
            assert_abs_diff_eq!(r, b[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn det_sign_of_permutation() {
        let a = vec![0.0, 1.0, 1.0, 0.0];
        assert_eq!(DenseLu::factor(a, 2).det_sign(), -1);
        let singular = vec![1.0, 2.0, 2.0, 4.0];
        assert_eq!(DenseLu::factor(singular, 2).det_sign(), 0);
    }
}
