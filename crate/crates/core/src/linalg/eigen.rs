//! Full symmetric eigendecomposition: Householder reduction to tridiagonal
//! form followed by the implicit-shift QL iteration (the EISPACK `tred2` /
//! `tql2` pair). Tridiagonal inputs skip the reduction.

use crate::band::SymBandMatrix;
use crate::error::LinalgError;

pub const DEFAULT_DENSE_CAP: usize = 4096;

const QL_MAX_SWEEPS: usize = 60;

/// Eigenvalues in ascending order with orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct DenseSymEig {
    n: usize,
    values: Vec<f64>,
    // column-major: vector i occupies vectors[i*n .. (i+1)*n]
    vectors: Vec<f64>,
}

impl DenseSymEig {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }

    /// Smallest gap between consecutive eigenvalues (infinite for n < 2).
    pub fn min_gap(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn sym_eigen_full(m: &SymBandMatrix) -> Result<DenseSymEig, LinalgError> {
    sym_eigen_full_capped(m, DEFAULT_DENSE_CAP)
}

pub fn sym_eigen_full_capped(m: &SymBandMatrix, cap: usize) -> Result<DenseSymEig, LinalgError> {
    let n = m.size();
    if n > cap {
        return Err(LinalgError::TooLarge { size: n, cap });
    }
    if n == 0 {
        return Ok(DenseSymEig {
            n,
            values: vec![],
            vectors: vec![],
        });
    }
    let (mut d, mut e, mut z) = if m.bandwidth() <= 1 {
        let d = m.main_diagonal().to_vec();
        let mut e = vec![0.0; n];
        if let Some(off) = m.diagonal(1) {
            e[1..].copy_from_slice(off);
        }
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        (d, e, z)
    } else {
        let mut z = m.to_dense();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        tred2(n, &mut z, &mut d, &mut e);
        (d, e, z)
    };
    tql2(n, &mut z, &mut d, &mut e)?;
    Ok(DenseSymEig {
        n,
        values: d,
        vectors: z,
    })
}

/// Householder tridiagonalization. On entry `v` holds the symmetric matrix;
/// on exit it holds the accumulated orthogonal transform (column-major), `d`
/// the diagonal and `e[1..]` the subdiagonal.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    // v(r, c) lives at v[c * n + r]; the input is symmetric so either layout
    // reads the same matrix.
    macro_rules! at {
        ($r:expr, $c:expr) => {
            v[($c) * n + ($r)]
        };
    }
    for j in 0..n {
        d[j] = at!(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = at!(i - 1, j);
                at!(i, j) = 0.0;
                at!(j, i) = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                at!(j, i) = f;
                g = e[j] + at!(j, j) * f;
                let col = &v[j * n..j * n + i];
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut v[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = at!(i - 1, j);
                at!(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        at!(n - 1, i) = at!(i, i);
        at!(i, i) = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = at!(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += at!(k, i + 1) * at!(k, j);
                }
                for k in 0..=i {
                    at!(k, j) -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            at!(k, i + 1) = 0.0;
        }
    }
    for j in 0..n {
        d[j] = at!(n - 1, j);
        at!(n - 1, j) = 0.0;
    }
    at!(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal `(d, e)`, accumulating rotations
/// into the column-major `v`. Eigenpairs come out sorted ascending.
fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > QL_MAX_SWEEPS {
                    return Err(LinalgError::NoConvergence {
                        what: "tridiagonal QL",
                        iterations: sweeps,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    let (left, right) = v.split_at_mut((i + 1) * n);
                    let vi = &mut left[i * n..];
                    let vi1 = &mut right[..n];
                    for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                        let hb = *b;
                        *b = s * *a + c * hb;
                        *a = c * *a - s * hb;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            let (left, right) = v.split_at_mut(k * n);
            left[i * n..(i + 1) * n].swap_with_slice(&mut right[..n]);
        }
    }
    Ok(())
}
