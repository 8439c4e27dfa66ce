//! The homotopy `H(φ, λ, t)`, its derivatives, and the random start matrix.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::band::SymBandMatrix;
use crate::discretize::{build_grid, build_operator, Grid, ProblemSpec};
use crate::error::{Error, Result};
use crate::linalg::{
    dot, norm_inf, sym_eigen_full_capped, BorderedSystem, DenseSymEig, DEFAULT_DENSE_CAP,
};

/// Sparsity pattern of the random start matrix `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RandomMatrixKind {
    /// Random diagonal (1D only).
    #[serde(rename = "diag")]
    Diag1D,
    /// Block diagonal with random tridiagonal `n x n` blocks (2D only).
    #[serde(rename = "blocktridiag")]
    BlockTridiag2D,
    /// Same offsets `{0, 1, n}` as the 2D operator (2D only).
    #[serde(rename = "pentadiag")]
    Pentadiag2D,
}

impl RandomMatrixKind {
    pub fn default_for_dim(dim: usize) -> Self {
        if dim == 1 {
            Self::Diag1D
        } else {
            Self::BlockTridiag2D
        }
    }

    pub fn supports_dim(self, dim: usize) -> bool {
        match self {
            Self::Diag1D => dim == 1,
            Self::BlockTridiag2D | Self::Pentadiag2D => dim == 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Diag1D => "diag",
            Self::BlockTridiag2D => "blocktridiag",
            Self::Pentadiag2D => "pentadiag",
        }
    }
}

impl fmt::Display for RandomMatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RandomMatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag" => Ok(Self::Diag1D),
            "blocktridiag" => Ok(Self::BlockTridiag2D),
            "pentadiag" => Ok(Self::Pentadiag2D),
            other => Err(Error::Config(format!(
                "unknown matrix kind '{other}' (expected diag, blocktridiag or pentadiag)"
            ))),
        }
    }
}

/// A point `(φ, λ, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub phi: Vec<f64>,
    pub lambda: f64,
    pub t: f64,
}

/// Knobs for building a [`HomotopyProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyOptions {
    pub kind: Option<RandomMatrixKind>,
    pub seed: u64,
    /// Scale of the random entries; defaults to `1e-3 ρ_G(D)`.
    pub sigma: Option<f64>,
    /// Minimum eigenvalue gap of `A + D`, relative to `ρ_G(A + D)`.
    pub gap_rel_tol: f64,
    pub max_attempts: usize,
    pub dense_cap: usize,
}

impl Default for HomotopyOptions {
    fn default() -> Self {
        Self {
            kind: None,
            seed: 0,
            sigma: None,
            gap_rel_tol: 1e-8,
            max_attempts: 10,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

pub const DEFAULT_SIGMA_FRACTION: f64 = 1e-3;

/// Immutable description of one homotopy: target operator, random start
/// matrix and the spectrum of the start problem.
#[derive(Debug, Clone)]
pub struct HomotopyProblem {
    spec: ProblemSpec,
    grid: Grid,
    d: SymBandMatrix,
    a: SymBandMatrix,
    kind: RandomMatrixKind,
    seed: u64,
    sample_seed: u64,
    sigma: f64,
    start: DenseSymEig,
}

/// Draws the random start matrix. The sequence of draws is fixed by the
/// seed: diagonal first, then the offset-1 and offset-n arrays.
pub fn sample_a(
    grid: &Grid,
    kind: RandomMatrixKind,
    seed: u64,
    sigma: f64,
) -> Result<SymBandMatrix> {
    if !kind.supports_dim(grid.dim()) {
        return Err(Error::Config(format!(
            "matrix kind {kind} is not available in {}D",
            grid.dim()
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!(
            "sigma must be finite and non-negative, got {sigma}"
        )));
    }
    let size = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symmetric = |rng: &mut ChaCha8Rng| {
        if sigma > 0.0 {
            rng.gen_range(-sigma..sigma)
        } else {
            0.0
        }
    };
    let diag: Vec<f64> = (0..size).map(|_| symmetric(&mut rng)).collect();
    let negative = |rng: &mut ChaCha8Rng| {
        if sigma > 0.0 {
            rng.gen_range(-sigma..=-0.1 * sigma)
        } else {
            0.0
        }
    };
    let a = match kind {
        RandomMatrixKind::Diag1D => SymBandMatrix::from_diagonal(diag),
        RandomMatrixKind::BlockTridiag2D | RandomMatrixKind::Pentadiag2D => {
            let n = grid.counts()[1];
            let mut diags = vec![(0, diag)];
            if size > 1 && n > 1 {
                let off1: Vec<f64> = (0..size - 1)
                    .map(|k| {
                        let v = negative(&mut rng);
                        if (k + 1) % n == 0 {
                            0.0
                        } else {
                            v
                        }
                    })
                    .collect();
                diags.push((1, off1));
            }
            if kind == RandomMatrixKind::Pentadiag2D && grid.counts()[0] > 1 {
                let offn: Vec<f64> = (0..size - n).map(|_| negative(&mut rng)).collect();
                if n == 1 {
                    diags.retain(|(k, _)| *k != 1);
                }
                diags.push((n, offn));
            }
            SymBandMatrix::from_diagonals(size, diags)
        }
    };
    Ok(a)
}

impl HomotopyProblem {
    pub fn new(spec: ProblemSpec, opts: &HomotopyOptions) -> Result<Self> {
        let grid = build_grid(&spec)?;
        let d = build_operator(&spec, &grid);
        let kind = opts
            .kind
            .unwrap_or_else(|| RandomMatrixKind::default_for_dim(grid.dim()));
        if !kind.supports_dim(grid.dim()) {
            return Err(Error::Config(format!(
                "matrix kind {kind} is not available in {}D",
                grid.dim()
            )));
        }
        if grid.dim() == 2 && grid.counts().iter().any(|&k| k < 6) {
            log::warn!(
                "grid {}x{} is below the 6x6 size for which path regularity is established",
                grid.counts()[0],
                grid.counts()[1]
            );
        }
        let sigma = opts
            .sigma
            .unwrap_or(DEFAULT_SIGMA_FRACTION * d.gershgorin_radius());
        let attempts = opts.max_attempts.max(1);
        let mut last_gap = 0.0;
        for attempt in 0..attempts {
            let sample_seed = opts.seed.wrapping_add(attempt as u64);
            let a = sample_a(&grid, kind, sample_seed, sigma)?;
            let start_matrix = SymBandMatrix::linear_combination(&[(1.0, &a), (1.0, &d)]);
            let start = sym_eigen_full_capped(&start_matrix, opts.dense_cap)?;
            let gap_tol = opts.gap_rel_tol * start_matrix.gershgorin_radius();
            last_gap = start.min_gap();
            if last_gap > gap_tol {
                return Ok(Self {
                    spec,
                    grid,
                    d,
                    a,
                    kind,
                    seed: opts.seed,
                    sample_seed,
                    sigma,
                    start,
                });
            }
            log::debug!("seed {sample_seed}: eigen-gap {last_gap:e} below {gap_tol:e}, resampling");
        }
        Err(Error::Config(format!(
            "start matrix has nearly repeated eigenvalues after {attempts} draws (smallest gap {last_gap:e}); \
             try a larger sigma"
        )))
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Target operator `D`.
    pub fn operator(&self) -> &SymBandMatrix {
        &self.d
    }

    /// Random start matrix `A`.
    pub fn start_matrix(&self) -> &SymBandMatrix {
        &self.a
    }

    pub fn kind(&self) -> RandomMatrixKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the draw that passed the eigen-gap check.
    pub fn sample_seed(&self) -> u64 {
        self.sample_seed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    pub fn norm_const(&self) -> f64 {
        self.grid.norm_const()
    }

    pub fn len(&self) -> usize {
        self.d.size()
    }

    pub fn is_empty(&self) -> bool {
        self.d.size() == 0
    }

    /// Eigenpairs of `A + D`.
    pub fn start_spectrum(&self) -> &DenseSymEig {
        &self.start
    }

    /// `ρ_G(A) + ρ_G(D) + β c`, a bound on `|λ|` along every path.
    pub fn lambda_bound(&self) -> f64 {
        self.a.gershgorin_radius() + self.d.gershgorin_radius() + self.beta() * self.norm_const()
    }

    /// `H(φ, λ, t)`, length `N + 1`.
    pub fn eval_h(&self, s: &State) -> Vec<f64> {
        let n = self.len();
        assert_eq!(s.phi.len(), n, "state has wrong length");
        let ap = self.a.matvec(&s.phi).expect("length checked");
        let dp = self.d.matvec(&s.phi).expect("length checked");
        let tb = s.t * self.beta();
        let mut h: Vec<f64> = (0..n)
            .map(|i| {
                let p = s.phi[i];
                (1.0 - s.t) * ap[i] + dp[i] + tb * p * p * p - s.lambda * p
            })
            .collect();
        h.push(0.5 * (self.norm_const() - dot(&s.phi, &s.phi)));
        h
    }

    /// `∂H/∂t`, length `N + 1`.
    pub fn dh_dt(&self, s: &State) -> Vec<f64> {
        let ap = self.a.matvec(&s.phi).expect("state has wrong length");
        let b = self.beta();
        let mut out: Vec<f64> = s
            .phi
            .iter()
            .zip(&ap)
            .map(|(p, a)| b * p * p * p - a)
            .collect();
        out.push(0.0);
        out
    }

    /// Core block `(1-t) A + D + 3tβ diag(φ²) - λ I` of the Jacobian.
    pub fn jacobian_core(&self, s: &State) -> SymBandMatrix {
        let mut m = SymBandMatrix::linear_combination(&[(1.0 - s.t, &self.a), (1.0, &self.d)]);
        let tb3 = 3.0 * s.t * self.beta();
        for (d, p) in m.main_diagonal_mut().iter_mut().zip(&s.phi) {
            *d += tb3 * p * p - s.lambda;
        }
        m
    }

    /// `∂H/∂(φ, λ)` as a bordered system with border `-φ` / `-φᵀ`.
    pub fn jacobian_x(&self, s: &State) -> BorderedSystem {
        let neg: Vec<f64> = s.phi.iter().map(|p| -p).collect();
        BorderedSystem::new(
            self.jacobian_core(s),
            vec![neg.clone()],
            vec![neg],
            vec![0.0],
        )
        .expect("dimensions consistent by construction")
    }

    /// `(1/c)(φᵀ((1-t)A + D)φ + tβ φᵀφ³)`, which equals `λ` on solutions.
    pub fn lambda_identity(&self, s: &State) -> f64 {
        let ap = self.a.matvec(&s.phi).expect("state has wrong length");
        let dp = self.d.matvec(&s.phi).expect("state has wrong length");
        let quad: f64 = s
            .phi
            .iter()
            .zip(ap.iter().zip(&dp))
            .map(|(p, (a, d))| p * ((1.0 - s.t) * a + d))
            .sum();
        let quart: f64 = s.phi.iter().map(|p| p.powi(4)).sum();
        (quad + s.t * self.beta() * quart) / self.norm_const()
    }

    /// Start points for the 1-based path indices in `which`.
    pub fn initial_states(&self, which: &[usize]) -> Result<Vec<State>> {
        let n = self.len();
        let scale = self.norm_const().sqrt();
        which
            .iter()
            .map(|&k| {
                if k == 0 || k > n {
                    return Err(Error::Config(format!("path index {k} outside 1..={n}")));
                }
                let mut phi: Vec<f64> = self
                    .start
                    .eigenvector(k - 1)
                    .iter()
                    .map(|v| v * scale)
                    .collect();
                normalize_sign(&mut phi);
                Ok(self.refine_start(State {
                    phi,
                    lambda: self.start.eigenvalues()[k - 1],
                    t: 0.0,
                }))
            })
            .collect()
    }

    /// A few Newton steps on `H(·, 0) = 0` to remove the eigensolver's
    /// rounding error; keeps the best iterate.
    fn refine_start(&self, s: State) -> State {
        let res = |s: &State| norm_inf(&self.eval_h(s));
        let mut best_res = res(&s);
        let mut best = s.clone();
        let mut cur = s;
        for _ in 0..3 {
            let Ok(delta) = self.jacobian_x(&cur).factorize().solve(&self.eval_h(&cur)) else {
                break;
            };
            let n = cur.phi.len();
            for (p, d) in cur.phi.iter_mut().zip(&delta[..n]) {
                *p -= d;
            }
            cur.lambda -= delta[n];
            let r = res(&cur);
            if !(r < best_res) {
                break;
            }
            best_res = r;
            best = cur.clone();
        }
        best
    }
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is
/// positive.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0.0;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
