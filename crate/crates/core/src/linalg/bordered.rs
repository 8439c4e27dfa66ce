//! Bordered systems `[M B; Cᵀ E]` with a symmetric banded core `M`.
//!
//! The factorization is Gaussian elimination with row pivoting in two
//! phases. Leading core columns are eliminated with pivots drawn from the
//! band (the outermost sub-diagonal of every Jacobian in this crate is
//! bounded away from zero, so these pivots are safe); the border rows are
//! eliminated alongside but never pivot. The trailing `w` core columns and
//! the border columns then form a small dense block factored with ordinary
//! partial pivoting, where the border rows may pivot. A near-singular core
//! (which is exactly the situation at the start of every homotopy path)
//! therefore never produces a huge multiplier. If a leading band pivot is
//! unexpectedly tiny the whole system is factored densely instead.

use crate::band::SymBandMatrix;
use crate::error::LinalgError;
use crate::linalg::dense::DenseLu;

/// Relative pivot size below which the assembled system is treated as
/// rank deficient.
pub const PIVOT_TOL: f64 = 1e-14;

/// A leading band pivot smaller than this (relative to the row scale)
/// triggers the dense fallback.
const BAND_PIVOT_FLOOR: f64 = 1e-6;

const REFINEMENT_STEPS: usize = 3;
const BACKWARD_ERROR_TARGET: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct BorderedSystem {
    core: SymBandMatrix,
    // each of length N
    cols: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
    // p x p, row-major
    corner: Vec<f64>,
}

impl BorderedSystem {
    /// Core only, no border.
    pub fn plain(core: SymBandMatrix) -> Self {
        Self {
            core,
            cols: vec![],
            rows: vec![],
            corner: vec![],
        }
    }

    pub fn new(
        core: SymBandMatrix,
        cols: Vec<Vec<f64>>,
        rows: Vec<Vec<f64>>,
        corner: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        let n = core.size();
        let p = cols.len();
        if rows.len() != p {
            return Err(LinalgError::DimensionMismatch {
                expected: p,
                found: rows.len(),
            });
        }
        if corner.len() != p * p {
            return Err(LinalgError::DimensionMismatch {
                expected: p * p,
                found: corner.len(),
            });
        }
        for v in cols.iter().chain(&rows) {
            if v.len() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        Ok(Self {
            core,
            cols,
            rows,
            corner,
        })
    }

    pub fn core(&self) -> &SymBandMatrix {
        &self.core
    }

    pub fn border_cols(&self) -> &[Vec<f64>] {
        &self.cols
    }

    pub fn border_rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Row-major `p x p` corner block.
    pub fn corner(&self) -> &[f64] {
        &self.corner
    }

    pub fn border_width(&self) -> usize {
        self.cols.len()
    }

    pub fn core_size(&self) -> usize {
        self.core.size()
    }

    /// Dimension of the assembled square system.
    pub fn dim(&self) -> usize {
        self.core.size() + self.cols.len()
    }

    /// Appends one column (length `dim()`) and one row (length `dim() + 1`).
    pub fn extend(mut self, col: &[f64], row: &[f64]) -> Result<Self, LinalgError> {
        let n = self.core_size();
        let p = self.border_width();
        if col.len() != n + p {
            return Err(LinalgError::DimensionMismatch {
                expected: n + p,
                found: col.len(),
            });
        }
        if row.len() != n + p + 1 {
            return Err(LinalgError::DimensionMismatch {
                expected: n + p + 1,
                found: row.len(),
            });
        }
        let q = p + 1;
        let mut corner = vec![0.0; q * q];
        for r in 0..p {
            for c in 0..p {
                corner[r * q + c] = self.corner[r * p + c];
            }
            corner[r * q + p] = col[n + r];
        }
        corner[p * q..p * q + q].copy_from_slice(&row[n..]);
        self.cols.push(col[..n].to_vec());
        self.rows.push(row[..n].to_vec());
        self.corner = corner;
        Ok(self)
    }

    /// `y = J x` for the assembled matrix.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.core_size();
        let p = self.border_width();
        if x.len() != n + p {
            return Err(LinalgError::DimensionMismatch {
                expected: n + p,
                found: x.len(),
            });
        }
        let (xc, xb) = x.split_at(n);
        let mut y = self.core.matvec(xc)?;
        for (col, &s) in self.cols.iter().zip(xb) {
            for (yi, ci) in y.iter_mut().zip(col) {
                *yi += ci * s;
            }
        }
        for r in 0..p {
            let mut s: f64 = self.rows[r].iter().zip(xc).map(|(a, b)| a * b).sum();
            for c in 0..p {
                s += self.corner[r * p + c] * xb[c];
            }
            y.push(s);
        }
        Ok(y)
    }

    /// Max absolute row sum of the assembled matrix.
    pub fn row_scale(&self) -> f64 {
        let p = self.border_width();
        let mut sums = self.core.row_abs_sums();
        for col in &self.cols {
            for (s, c) in sums.iter_mut().zip(col) {
                *s += c.abs();
            }
        }
        let mut scale = sums.into_iter().fold(0.0, f64::max);
        for r in 0..p {
            let s: f64 = self.rows[r].iter().map(|v| v.abs()).sum::<f64>()
                + self.corner[r * p..(r + 1) * p]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>();
            scale = scale.max(s);
        }
        scale
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.core_size();
        let p = self.border_width();
        let t = n + p;
        let core = self.core.to_dense();
        let mut a = vec![0.0; t * t];
        for i in 0..n {
            a[i * t..i * t + n].copy_from_slice(&core[i * n..(i + 1) * n]);
            for (q, col) in self.cols.iter().enumerate() {
                a[i * t + n + q] = col[i];
            }
        }
        for r in 0..p {
            a[(n + r) * t..(n + r) * t + n].copy_from_slice(&self.rows[r]);
            a[(n + r) * t + n..(n + r + 1) * t].copy_from_slice(&self.corner[r * p..(r + 1) * p]);
        }
        a
    }

    pub fn factorize(&self) -> BorderedLu<'_> {
        BorderedLu::new(self)
    }
}

/// LU factors of a [`BorderedSystem`], borrowing the system for residual
/// checks during refinement.
#[derive(Debug, Clone)]
pub struct BorderedLu<'a> {
    sys: &'a BorderedSystem,
    kind: LuKind,
    scale: f64,
}

#[derive(Debug, Clone)]
enum LuKind {
    Structured(StructuredLu),
    Dense(DenseLu),
}

#[derive(Debug, Clone)]
struct StructuredLu {
    n: usize,
    p: usize,
    w: usize,
    lead: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    // n x p, row-major
    right: Vec<f64>,
    // p x (n + p), row-major; leading columns hold multipliers
    bottom: Vec<f64>,
    trail: DenseLu,
}

impl StructuredLu {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + 2 * self.w + i - j
    }

    fn build(sys: &BorderedSystem, scale: f64) -> Option<Self> {
        let n = sys.core_size();
        let p = sys.border_width();
        let w = sys.core.bandwidth().min(n.saturating_sub(1));
        let ldab = 3 * w + 1;
        let mut lu = StructuredLu {
            n,
            p,
            w,
            lead: n - w.min(n),
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: Vec::new(),
            right: vec![0.0; n * p],
            bottom: vec![0.0; p * (n + p)],
            trail: DenseLu::factor(vec![], 0),
        };
        for (k, vals) in sys.core.iter_diagonals() {
            if k > w {
                continue;
            }
            for (i, &v) in vals.iter().enumerate() {
                let a = lu.idx(i, i + k);
                lu.ab[a] = v;
                let b = lu.idx(i + k, i);
                lu.ab[b] = v;
            }
        }
        for (q, col) in sys.cols.iter().enumerate() {
            for i in 0..n {
                lu.right[i * p + q] = col[i];
            }
        }
        for r in 0..p {
            let row = &mut lu.bottom[r * (n + p)..(r + 1) * (n + p)];
            row[..n].copy_from_slice(&sys.rows[r]);
            row[n..].copy_from_slice(&sys.corner[r * p..(r + 1) * p]);
        }

        let floor = BAND_PIVOT_FLOOR * scale;
        lu.ipiv.reserve(lu.lead);
        for k in 0..lu.lead {
            let last = (k + w).min(n - 1);
            let mut ip = k;
            let mut best = lu.ab[lu.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = lu.ab[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    ip = i;
                }
            }
            if !(best > floor) {
                return None;
            }
            lu.ipiv.push(ip);
            let jmax = (k + 2 * w).min(n - 1);
            if ip != k {
                for j in k..=jmax {
                    let (a, b) = (lu.idx(k, j), lu.idx(ip, j));
                    lu.ab.swap(a, b);
                }
                for q in 0..p {
                    lu.right.swap(k * p + q, ip * p + q);
                }
            }
            let piv = lu.ab[lu.idx(k, k)];
            for i in k + 1..=last {
                let li = lu.idx(i, k);
                let l = lu.ab[li] / piv;
                lu.ab[li] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=jmax {
                    let (dst, src) = (lu.idx(i, j), lu.idx(k, j));
                    lu.ab[dst] -= l * lu.ab[src];
                }
                for q in 0..p {
                    lu.right[i * p + q] -= l * lu.right[k * p + q];
                }
            }
            for r in 0..p {
                let base = r * (n + p);
                let l = lu.bottom[base + k] / piv;
                lu.bottom[base + k] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=jmax {
                    lu.bottom[base + j] -= l * lu.ab[lu.idx(k, j)];
                }
                for q in 0..p {
                    lu.bottom[base + n + q] -= l * lu.right[k * p + q];
                }
            }
        }

        // Trailing dense block: rows/cols lead..n+p.
        let s = lu.lead;
        let t = n + p - s;
        let mut dense = vec![0.0; t * t];
        for i in s..n {
            for j in s..n {
                if i + 2 * w >= j && i <= j + w {
                    dense[(i - s) * t + (j - s)] = lu.ab[lu.idx(i, j)];
                }
            }
            for q in 0..p {
                dense[(i - s) * t + (n - s) + q] = lu.right[i * p + q];
            }
        }
        for r in 0..p {
            let base = r * (n + p);
            let row = n - s + r;
            dense[row * t..(row + 1) * t].copy_from_slice(&lu.bottom[base + s..base + n + p]);
        }
        lu.trail = DenseLu::factor(dense, t);
        Some(lu)
    }

    fn pivots(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.lead)
            .map(move |k| self.ab[self.idx(k, k)])
            .chain(self.trail.pivots())
    }

    fn det_sign(&self) -> i8 {
        let mut sign = self.trail.det_sign();
        for (k, &ip) in self.ipiv.iter().enumerate() {
            if ip != k {
                sign = -sign;
            }
            let d = self.ab[self.idx(k, k)];
            if d == 0.0 {
                return 0;
            }
            if d < 0.0 {
                sign = -sign;
            }
        }
        sign
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let (n, p, w, s) = (self.n, self.p, self.w, self.lead);
        let mut y = b.to_vec();
        for k in 0..s {
            let ip = self.ipiv[k];
            y.swap(k, ip);
            let yk = y[k];
            if yk == 0.0 {
                continue;
            }
            for i in k + 1..=(k + w).min(n - 1) {
                y[i] -= self.ab[self.idx(i, k)] * yk;
            }
            for r in 0..p {
                y[n + r] -= self.bottom[r * (n + p) + k] * yk;
            }
        }
        let tail = self.trail.solve(&y[s..])?;
        y[s..].copy_from_slice(&tail);
        for k in (0..s).rev() {
            let mut acc = y[k];
            for j in k + 1..=(k + 2 * w).min(n - 1) {
                acc -= self.ab[self.idx(k, j)] * y[j];
            }
            for q in 0..p {
                acc -= self.right[k * p + q] * y[n + q];
            }
            y[k] = acc / self.ab[self.idx(k, k)];
        }
        Ok(y)
    }

    fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let (n, p, w, s) = (self.n, self.p, self.w, self.lead);
        let mut z = b.to_vec();
        // Uᵀ z = b over the leading columns.
        for k in 0..s {
            let mut acc = z[k];
            for i in k.saturating_sub(2 * w)..k {
                acc -= self.ab[self.idx(i, k)] * z[i];
            }
            z[k] = acc / self.ab[self.idx(k, k)];
        }
        // Couple the leading unknowns into the trailing equations.
        for j in s..n {
            let mut acc = 0.0;
            for i in j.saturating_sub(2 * w)..s {
                acc += self.ab[self.idx(i, j)] * z[i];
            }
            z[j] -= acc;
        }
        for q in 0..p {
            let acc: f64 = (0..s).map(|i| self.right[i * p + q] * z[i]).sum();
            z[n + q] -= acc;
        }
        let tail = self.trail.solve_transpose(&z[s..])?;
        z[s..].copy_from_slice(&tail);
        for k in (0..s).rev() {
            let mut acc = 0.0;
            for i in k + 1..=(k + w).min(n - 1) {
                acc += self.ab[self.idx(i, k)] * z[i];
            }
            for r in 0..p {
                acc += self.bottom[r * (n + p) + k] * z[n + r];
            }
            z[k] -= acc;
            z.swap(k, self.ipiv[k]);
        }
        Ok(z)
    }
}

impl<'a> BorderedLu<'a> {
    fn new(sys: &'a BorderedSystem) -> Self {
        let scale = sys.row_scale();
        let kind = match StructuredLu::build(sys, scale) {
            Some(lu) => LuKind::Structured(lu),
            None => LuKind::Dense(DenseLu::factor(sys.to_dense(), sys.dim())),
        };
        Self { sys, kind, scale }
    }

    pub fn system(&self) -> &BorderedSystem {
        self.sys
    }

    /// Whether the dense fallback was taken.
    pub fn is_dense(&self) -> bool {
        matches!(self.kind, LuKind::Dense(_))
    }

    /// Index and magnitude of the smallest pivot.
    pub fn min_pivot(&self) -> (usize, f64) {
        let pivots: Box<dyn Iterator<Item = f64>> = match &self.kind {
            LuKind::Structured(lu) => Box::new(lu.pivots()),
            LuKind::Dense(lu) => Box::new(lu.pivots()),
        };
        pivots
            .map(f64::abs)
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::INFINITY))
    }

    pub fn det_sign(&self) -> i8 {
        match &self.kind {
            LuKind::Structured(lu) => lu.det_sign(),
            LuKind::Dense(lu) => lu.det_sign(),
        }
    }

    fn check_rank(&self) -> Result<(), LinalgError> {
        let (index, pivot) = self.min_pivot();
        if self.sys.dim() > 0 && !(pivot > PIVOT_TOL * self.scale) {
            return Err(LinalgError::RankDeficient { index, pivot });
        }
        Ok(())
    }

    fn solve_raw(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        match &self.kind {
            LuKind::Structured(lu) => lu.solve(b),
            LuKind::Dense(lu) => lu.solve(b),
        }
    }

    fn solve_transpose_raw(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        match &self.kind {
            LuKind::Structured(lu) => lu.solve_transpose(b),
            LuKind::Dense(lu) => lu.solve_transpose(b),
        }
    }

    /// Solves `J x = b`, refining until the normwise backward error is at
    /// round-off level.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let dim = self.sys.dim();
        if b.len() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                found: b.len(),
            });
        }
        self.check_rank()?;
        let mut x = self.solve_raw(b)?;
        let bnorm = inf_norm(b);
        for _ in 0..REFINEMENT_STEPS {
            let jx = self.sys.apply(&x)?;
            let r: Vec<f64> = b.iter().zip(&jx).map(|(bi, ji)| bi - ji).collect();
            let denom = self.scale * inf_norm(&x) + bnorm;
            if denom == 0.0 || inf_norm(&r) <= BACKWARD_ERROR_TARGET * denom {
                break;
            }
            let dx = self.solve_raw(&r)?;
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        Ok(x)
    }

    /// Solves `Jᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let dim = self.sys.dim();
        if b.len() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                found: b.len(),
            });
        }
        self.check_rank()?;
        self.solve_transpose_raw(b)
    }

    /// Estimate of the smallest singular value by inverse iteration on
    /// `JᵀJ`. The estimate approaches `σ_min` from above.
    pub fn min_singular_estimate(&self) -> Result<f64, LinalgError> {
        let dim = self.sys.dim();
        if dim == 0 {
            return Ok(f64::INFINITY);
        }
        self.check_rank()?;
        let mut x: Vec<f64> = (0..dim)
            .map(|i| 1.0 + 0.5 * ((i % 7) as f64) / 7.0)
            .collect();
        normalize(&mut x);
        let mut estimate = f64::INFINITY;
        for _ in 0..40 {
            let z = self.solve_transpose_raw(&x)?;
            let mut y = self.solve_raw(&z)?;
            let growth = l2_norm(&y);
            if !(growth.is_finite() && growth > 0.0) {
                return Err(LinalgError::RankDeficient {
                    index: 0,
                    pivot: 0.0,
                });
            }
            let next = 1.0 / growth.sqrt();
            for v in y.iter_mut() {
                *v /= growth;
            }
            x = y;
            let converged = (estimate - next).abs() <= 1e-4 * next;
            estimate = next;
            if converged {
                break;
            }
        }
        Ok(estimate)
    }
}

/// Solves the assembled bordered system.
pub fn solve_bordered(sys: &BorderedSystem, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    sys.factorize().solve(rhs)
}

/// Sign of the determinant of the assembled system (`0` on an exactly zero
/// pivot).
pub fn det_sign(sys: &BorderedSystem) -> i8 {
    sys.factorize().det_sign()
}

pub fn min_singular_estimate(sys: &BorderedSystem) -> Result<f64, LinalgError> {
    sys.factorize().min_singular_estimate()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = l2_norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
