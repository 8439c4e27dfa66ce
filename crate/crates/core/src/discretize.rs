//! Finite-difference grids and the discrete operator `D = ½(-Δ_h) + V`.
//!
//! Unknowns are vectorized row-major with the y index innermost: node
//! `(i, j)` (1-based, `i` along x, `j` along y) sits at position
//! `j + (i - 1) n` (1-based). The 2D operator therefore has offsets
//! `{0, 1, n}` with the offset-1 coupling cut at every block boundary.

use serde::{Deserialize, Serialize};

use crate::band::SymBandMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Domain {
    /// Interval `[a, b]` with `n` interior points.
    Line { a: f64, b: f64, n: usize },
    /// Rectangle `[a, b] × [c, d]` with `m` interior points along x and `n`
    /// along y.
    Rectangle {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        m: usize,
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// `V(x) = ½ Σ xᵢ²`.
    Harmonic,
    /// One value per interior node, in vectorization order.
    Tabulated(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub beta: f64,
    pub potential: Potential,
}

impl ProblemSpec {
    pub fn line(a: f64, b: f64, n: usize, beta: f64) -> Self {
        Self {
            domain: Domain::Line { a, b, n },
            beta,
            potential: Potential::Harmonic,
        }
    }

    pub fn rectangle(a: f64, b: f64, c: f64, d: f64, m: usize, n: usize, beta: f64) -> Self {
        Self {
            domain: Domain::Rectangle { a, b, c, d, m, n },
            beta,
            potential: Potential::Harmonic,
        }
    }

    pub fn dim(&self) -> usize {
        match self.domain {
            Domain::Line { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        match self.domain {
            Domain::Line { n, .. } => n,
            Domain::Rectangle { m, n, .. } => m * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match self.domain {
            Domain::Line { a, b, n } => {
                if n < 1 {
                    return bad("need at least one interior point".into());
                }
                if !(a.is_finite() && b.is_finite() && b > a) {
                    return bad(format!("interval [{a}, {b}] is empty or not finite"));
                }
            }
            Domain::Rectangle { a, b, c, d, m, n } => {
                if m < 1 || n < 1 {
                    return bad(format!("grid {m}x{n} has no interior points"));
                }
                if !(a.is_finite() && b.is_finite() && b > a) {
                    return bad(format!("x-range [{a}, {b}] is empty or not finite"));
                }
                if !(c.is_finite() && d.is_finite() && d > c) {
                    return bad(format!("y-range [{c}, {d}] is empty or not finite"));
                }
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!(
                "beta must be finite and non-negative, got {}",
                self.beta
            ));
        }
        if let Potential::Tabulated(values) = &self.potential {
            if values.len() != self.len() {
                return bad(format!(
                    "tabulated potential has {} values, grid has {} nodes",
                    values.len(),
                    self.len()
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return bad("tabulated potential contains non-finite values".into());
            }
        }
        Ok(())
    }
}

/// Interior nodes and mesh constants of a discretized domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    counts: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    steps: Vec<f64>,
    coords: Vec<f64>,
    norm_const: f64,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Interior point counts per axis (`[n]` or `[m, n]`).
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Mesh sizes per axis (`[h]` or `[h₁, h₂]`).
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Normalization constant `c`: the discrete constraint is `φᵀφ = c`.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// Coordinates of node `k` (0-based vectorization index).
    pub fn node(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[k * d..(k + 1) * d]
    }

    /// 0-based vectorization index of the 1-based node `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        match self.counts.as_slice() {
            [_] => i - 1,
            [_, n] => (j - 1) + (i - 1) * n,
            _ => unreachable!("grids are 1D or 2D"),
        }
    }

    /// Coordinates along axis `axis` including both boundary nodes.
    pub fn axis_with_boundary(&self, axis: usize) -> Vec<f64> {
        let n = self.counts[axis];
        let (a, h) = (self.lower[axis], self.steps[axis]);
        (0..n + 2)
            .map(|j| {
                if j == n + 1 {
                    self.upper[axis]
                } else {
                    a + j as f64 * h
                }
            })
            .collect()
    }
}

pub fn build_grid(spec: &ProblemSpec) -> Result<Grid> {
    spec.validate()?;
    let grid = match spec.domain {
        Domain::Line { a, b, n } => {
            let h = (b - a) / (n as f64 + 1.0);
            let coords = (1..=n).map(|j| a + j as f64 * h).collect();
            Grid {
                counts: vec![n],
                lower: vec![a],
                upper: vec![b],
                steps: vec![h],
                coords,
                norm_const: 1.0 / h,
            }
        }
        Domain::Rectangle { a, b, c, d, m, n } => {
            let h1 = (b - a) / (m as f64 + 1.0);
            let h2 = (d - c) / (n as f64 + 1.0);
            let mut coords = Vec::with_capacity(2 * m * n);
            for i in 1..=m {
                for j in 1..=n {
                    coords.push(a + i as f64 * h1);
                    coords.push(c + j as f64 * h2);
                }
            }
            Grid {
                counts: vec![m, n],
                lower: vec![a, c],
                upper: vec![b, d],
                steps: vec![h1, h2],
                coords,
                norm_const: 1.0 / (h1 * h2),
            }
        }
    };
    Ok(grid)
}

/// Potential values at the interior nodes.
pub fn potential_values(spec: &ProblemSpec, grid: &Grid) -> Vec<f64> {
    match &spec.potential {
        Potential::Harmonic => (0..grid.len())
            .map(|k| 0.5 * grid.node(k).iter().map(|x| x * x).sum::<f64>())
            .collect(),
        Potential::Tabulated(v) => v.clone(),
    }
}

/// Assembles `D = ½ D₁ + V` for the grid built from `spec`.
pub fn build_operator(spec: &ProblemSpec, grid: &Grid) -> SymBandMatrix {
    let v = potential_values(spec, grid);
    match grid.counts() {
        [n] => {
            let h = grid.steps()[0];
            let inv = 1.0 / (h * h);
            let diag = v.iter().map(|vj| inv + vj).collect();
            let mut diags = vec![(0, diag)];
            if *n > 1 {
                diags.push((1, vec![-0.5 * inv; n - 1]));
            }
            SymBandMatrix::from_diagonals(*n, diags)
        }
        [m, n] => {
            let (m, n) = (*m, *n);
            let size = m * n;
            let (h1, h2) = (grid.steps()[0], grid.steps()[1]);
            let (ix, iy) = (1.0 / (h1 * h1), 1.0 / (h2 * h2));
            let diag = v.iter().map(|vk| ix + iy + vk).collect();
            let along_y = (0..size.saturating_sub(1))
                .map(|k| if (k + 1) % n == 0 { 0.0 } else { -0.5 * iy })
                .collect();
            let mut diags = vec![(0, diag)];
            if n == 1 {
                // every y-coupling is cut; x-neighbours are adjacent in memory
                if m > 1 {
                    diags.push((1, vec![-0.5 * ix; size - 1]));
                }
            } else {
                diags.push((1, along_y));
                if m > 1 {
                    diags.push((n, vec![-0.5 * ix; size - n]));
                }
            }
            SymBandMatrix::from_diagonals(size, diags)
        }
        _ => unreachable!("grids are 1D or 2D"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_line_grid() {
        let g = build_grid(&ProblemSpec::line(-2.0, 2.0, 3, 0.0)).unwrap();
        assert_eq!(g.steps(), &[1.0]);
        assert_eq!(g.norm_const(), 1.0);
        let xs: Vec<f64> = (0..3).map(|k| g.node(k)[0]).collect();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn line_grid_for_fine_mesh() {
        let g = build_grid(&ProblemSpec::line(-2.0, 2.0, 999, 20.0)).unwrap();
        assert_abs_diff_eq!(g.steps()[0], 0.004, epsilon = 1e-15);
        assert_abs_diff_eq!(g.norm_const(), 250.0, epsilon = 1e-9);
    }

    #[test]
    fn square_grid_for_fine_mesh() {
        let g = build_grid(&ProblemSpec::rectangle(0.0, 1.0, 0.0, 1.0, 29, 29, 20.0)).unwrap();
        assert_abs_diff_eq!(g.steps()[0], 1.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.steps()[1], 1.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.norm_const(), 900.0, epsilon = 1e-9);
    }

    #[test]
    fn vectorization_order() {
        let g = build_grid(&ProblemSpec::rectangle(0.0, 4.0, 0.0, 3.0, 3, 2, 0.0)).unwrap();
        // y is the inner index.
        assert_eq!(g.index(1, 1), 0);
        assert_eq!(g.index(1, 2), 1);
        assert_eq!(g.index(2, 1), 2);
        assert_eq!(g.node(g.index(2, 1)), &[2.0, 1.0]);
        assert_eq!(g.node(g.index(3, 2)), &[3.0, 2.0]);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(build_grid(&ProblemSpec::line(1.0, 1.0, 3, 0.0)).is_err());
        assert!(build_grid(&ProblemSpec::line(0.0, 1.0, 0, 0.0)).is_err());
        assert!(build_grid(&ProblemSpec::line(0.0, 1.0, 3, -1.0)).is_err());
        assert!(build_grid(&ProblemSpec::rectangle(0.0, 1.0, 2.0, 1.0, 3, 3, 0.0)).is_err());
        let mut s = ProblemSpec::line(0.0, 1.0, 3, 0.0);
        s.potential = Potential::Tabulated(vec![0.0; 2]);
        assert!(build_grid(&s).is_err());
    }

    #[test]
    fn line_operator_entries() {
        let spec = ProblemSpec::line(-2.0, 2.0, 3, 0.0);
        let g = build_grid(&spec).unwrap();
        let d = build_operator(&spec, &g);
        let dense = d.to_dense();
        let expected = [1.5, -0.5, 0.0, -0.5, 1.0, -0.5, 0.0, -0.5, 1.5];
        for (a, b) in dense.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn square_operator_entries() {
        let spec = ProblemSpec::rectangle(0.0, 1.0, 0.0, 1.0, 2, 2, 0.0);
        let g = build_grid(&spec).unwrap();
        let d = build_operator(&spec, &g);
        assert_eq!(d.offsets(), &[0, 1, 2]);
        assert_abs_diff_eq!(d.main_diagonal()[0], 18.0 + 1.0 / 9.0, epsilon = 1e-12);
        // node (2,2) sits at (2/3, 2/3)
        assert_abs_diff_eq!(d.main_diagonal()[3], 18.0 + 4.0 / 9.0, epsilon = 1e-12);
        let off1 = d.diagonal(1).unwrap();
        assert_abs_diff_eq!(off1[0], -4.5, epsilon = 1e-12);
        assert_eq!(off1[1], 0.0);
        assert_abs_diff_eq!(off1[2], -4.5, epsilon = 1e-12);
        for &v in d.diagonal(2).unwrap() {
            assert_abs_diff_eq!(v, -4.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn block_boundary_zero_count() {
        for (m, n) in [(6, 6), (4, 7), (29, 29)] {
            let spec = ProblemSpec::rectangle(0.0, 1.0, 0.0, 1.0, m, n, 0.0);
            let g = build_grid(&spec).unwrap();
            let d = build_operator(&spec, &g);
            let zeros = d.diagonal(1).unwrap().iter().filter(|&&v| v == 0.0).count();
            assert_eq!(zeros, m - 1);
        }
    }

    #[test]
    fn degenerate_rectangles_are_tridiagonal() {
        let spec = ProblemSpec::rectangle(0.0, 1.0, 0.0, 1.0, 4, 1, 0.0);
        let g = build_grid(&spec).unwrap();
        let d = build_operator(&spec, &g);
        assert_eq!(d.offsets(), &[0, 1]);
        assert!(d.diagonal(1).unwrap().iter().all(|&v| v < 0.0));
    }

    #[test]
    fn gershgorin_discs_in_right_half_line() {
        for spec in [
            ProblemSpec::line(-2.0, 2.0, 50, 0.0),
            ProblemSpec::rectangle(0.0, 1.0, 0.0, 1.0, 8, 5, 0.0),
        ] {
            let g = build_grid(&spec).unwrap();
            let d = build_operator(&spec, &g);
            let sums = d.row_abs_sums();
            for (k, &dk) in d.main_diagonal().iter().enumerate() {
                let radius = sums[k] - dk.abs();
                assert!(dk - radius >= 0.0, "row {k}: disc leaves right half line");
                assert!(dk > 0.0);
            }
        }
    }
}
