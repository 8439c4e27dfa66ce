//! Independent checks on traced eigenpairs: the SCF ground state, the
//! antisymmetric 1D solution, the λ bound, order preservation along paths
//! and a finite-difference audit of the Jacobian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::band::SymBandMatrix;
use crate::discretize::{potential_values, Grid, ProblemSpec};
use crate::error::{Error, Result};
use crate::homotopy::{HomotopyProblem, State};
use crate::linalg::{dot, norm_inf, BorderedSystem};
use crate::tracer::PathResult;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EigenpairFlags {
    /// Every component has the same strict sign.
    pub positive: bool,
    /// `None` when the check does not apply (2D or asymmetric domain).
    pub antisymmetric: Option<bool>,
    pub degenerate_endgame: bool,
}

/// A solution of the discretized problem `Dφ + βφ³ = λφ, φᵀφ = c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub lambda: f64,
    pub phi: Vec<f64>,
    /// `‖H(φ, λ, 1)‖∞`, recomputed from `φ` and `λ`.
    pub residual: f64,
    pub flags: EigenpairFlags,
}

impl Eigenpair {
    pub fn at_target(p: &HomotopyProblem, phi: &[f64], lambda: f64) -> Self {
        let residual = target_residual(p.operator(), p.beta(), p.norm_const(), phi, lambda);
        let mut pair = Self {
            lambda,
            phi: phi.to_vec(),
            residual,
            flags: EigenpairFlags::default(),
        };
        pair.flags.positive = is_one_signed(phi);
        let anti = check_antisymmetric(&pair, p.grid(), ANTISYMMETRY_TOL);
        pair.flags.antisymmetric = anti.applicable.then_some(anti.antisymmetric);
        pair
    }
}

pub const ANTISYMMETRY_TOL: f64 = 1e-8;

/// `‖[Dφ + βφ³ - λφ; ½(c - φᵀφ)]‖∞`.
pub fn target_residual(d: &SymBandMatrix, beta: f64, c: f64, phi: &[f64], lambda: f64) -> f64 {
    let Ok(dp) = d.matvec(phi) else {
        return f64::INFINITY;
    };
    let body = phi
        .iter()
        .zip(&dp)
        .map(|(p, q)| (q + beta * p * p * p - lambda * p).abs())
        .fold(0.0, f64::max);
    let r = body.max((0.5 * (c - dot(phi, phi))).abs());
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}

pub fn is_one_signed(v: &[f64]) -> bool {
    !v.is_empty() && (v.iter().all(|&x| x > 0.0) || v.iter().all(|&x| x < 0.0))
}

/// Damped self-consistent field controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ScfOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Mixing weight of the new iterate.
    pub alpha: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for ScfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            alpha: 0.5,
            inner_tol: 1e-14,
            inner_max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScfSolution {
    pub phi: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Positive solution of `Mφ + βφ³ = λφ, φᵀφ = c` for a Stieltjes matrix
/// `M` and `β ≥ 0`. Each outer step mixes `φ` with the ground eigenvector
/// of `M + β diag(φ²)`, halving the mixing weight until the energy
/// `½φᵀMφ + ¼βΣφ⁴` does not increase. Once the residual is small the
/// iterate is finished with Newton's method on the bordered system.
pub fn scf_solve(m: &SymBandMatrix, beta: f64, c: f64, opts: &ScfOptions) -> Result<ScfSolution> {
    let n = m.size();
    if n == 0 {
        return Err(Error::Oracle("empty system".into()));
    }
    if beta < 0.0 {
        return Err(Error::Oracle("SCF oracle needs beta >= 0".into()));
    }
    let quartic = |phi: &[f64]| phi.iter().map(|p| p.powi(4)).sum::<f64>();
    let energy = |phi: &[f64]| {
        let mp = m.matvec(phi).expect("length checked");
        0.5 * dot(phi, &mp) + 0.25 * beta * quartic(phi)
    };
    let rayleigh = |phi: &[f64]| {
        let mp = m.matvec(phi).expect("length checked");
        (dot(phi, &mp) + beta * quartic(phi)) / dot(phi, phi)
    };
    let mut phi = vec![(c / n as f64).sqrt(); n];
    let mut e = energy(&phi);
    let mut lambda = rayleigh(&phi);
    let mut residual = target_residual(m, beta, c, &phi, lambda);
    let mut alpha = opts.alpha;
    let mut polish_at = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut op = m.clone();
        for (d, p) in op.main_diagonal_mut().iter_mut().zip(&phi) {
            *d += beta * p * p;
        }
        let ground = ground_vector(op, &phi, opts)?;
        let mut next;
        loop {
            next = phi
                .iter()
                .zip(&ground)
                .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
                .collect::<Vec<_>>();
            scale_to(&mut next, c);
            let e_next = energy(&next);
            if e_next <= e || alpha < 1e-6 {
                e = e_next;
                break;
            }
            alpha *= 0.5;
        }
        phi = next;
        alpha = (2.0 * alpha).min(opts.alpha);
        lambda = rayleigh(&phi);
        residual = target_residual(m, beta, c, &phi, lambda);
        if residual <= opts.tol {
            return Ok(ScfSolution {
                phi,
                lambda,
                residual,
                iterations: it,
            });
        }
        let scale = lambda.abs().max(1.0) * norm_inf(&phi);
        if residual <= 1e-3 * scale && residual < 0.1 * polish_at {
            polish_at = residual;
            if let Some((p, l, r)) = newton_polish(m, beta, c, &phi, lambda, opts.tol) {
                if is_one_signed(&p) {
                    return Ok(ScfSolution {
                        phi: p,
                        lambda: l,
                        residual: r,
                        iterations: it,
                    });
                }
            }
        }
    }
    Err(Error::Oracle(format!(
        "SCF stalled after {} iterations at residual {residual:e}",
        opts.max_iter
    )))
}

/// Newton on `[Mφ + βφ³ - λφ; ½(c - φᵀφ)]`. Returns the final iterate if
/// it reaches `tol`.
fn newton_polish(
    m: &SymBandMatrix,
    beta: f64,
    c: f64,
    phi: &[f64],
    lambda: f64,
    tol: f64,
) -> Option<(Vec<f64>, f64, f64)> {
    let n = phi.len();
    let mut phi = phi.to_vec();
    let mut lambda = lambda;
    let mut residual = target_residual(m, beta, c, &phi, lambda);
    for _ in 0..20 {
        let mut core = m.clone();
        for (d, p) in core.main_diagonal_mut().iter_mut().zip(&phi) {
            *d += 3.0 * beta * p * p - lambda;
        }
        let neg: Vec<f64> = phi.iter().map(|p| -p).collect();
        let sys = BorderedSystem::new(core, vec![neg.clone()], vec![neg], vec![0.0]).ok()?;
        let mp = m.matvec(&phi).ok()?;
        let mut f: Vec<f64> = (0..n)
            .map(|i| mp[i] + beta * phi[i].powi(3) - lambda * phi[i])
            .collect();
        f.push(0.5 * (c - dot(&phi, &phi)));
        let delta = sys.factorize().solve(&f).ok()?;
        for (p, d) in phi.iter_mut().zip(&delta[..n]) {
            *p -= d;
        }
        lambda -= delta[n];
        let next = target_residual(m, beta, c, &phi, lambda);
        if next <= tol {
            return Some((phi, lambda, next));
        }
        if !(next < residual) {
            return None;
        }
        residual = next;
    }
    None
}

/// Positive ground eigenvector of a symmetric positive definite band
/// matrix, scaled to the norm of `start`.
fn ground_vector(op: SymBandMatrix, start: &[f64], opts: &ScfOptions) -> Result<Vec<f64>> {
    let target = dot(start, start);
    let sys = BorderedSystem::plain(op);
    let lu = sys.factorize();
    let mut x = start.to_vec();
    let mut prev = x.clone();
    for _ in 0..opts.inner_max_iter {
        x = lu.solve(&x)?;
        scale_to(&mut x, target);
        if x.iter().sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        let change = x
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change <= opts.inner_tol * norm_inf(&x) {
            break;
        }
        prev.copy_from_slice(&x);
    }
    Ok(x)
}

fn scale_to(v: &mut [f64], c: f64) {
    let s = (c / dot(v, v)).sqrt();
    v.iter_mut().for_each(|x| *x *= s);
}

/// Ground state of the target problem (`t = 1`) by damped SCF.
pub fn scf_ground_state(p: &HomotopyProblem, opts: &ScfOptions) -> Result<Eigenpair> {
    let sol = scf_solve(p.operator(), p.beta(), p.norm_const(), opts)?;
    Ok(Eigenpair::at_target(p, &sol.phi, sol.lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntisymmetryReport {
    pub applicable: bool,
    /// `max_j |φ_j + φ_{n+1-j}|`.
    pub max_defect: f64,
    pub tol: f64,
    pub antisymmetric: bool,
    /// Whether the first half (without the middle node) is one-signed.
    pub half_one_signed: bool,
}

/// Tests `φ_j = -φ_{n+1-j}` with tolerance `rel_tol · ‖φ‖∞`. Applies to
/// 1D grids on intervals symmetric about the origin.
pub fn check_antisymmetric(e: &Eigenpair, grid: &Grid, rel_tol: f64) -> AntisymmetryReport {
    let applicable = grid.dim() == 1
        && (grid.lower()[0] + grid.upper()[0]).abs() <= 1e-12 * grid.upper()[0].abs().max(1.0)
        && e.phi.len() == grid.len();
    let tol = rel_tol * norm_inf(&e.phi);
    if !applicable {
        return AntisymmetryReport {
            applicable,
            max_defect: f64::NAN,
            tol,
            antisymmetric: false,
            half_one_signed: false,
        };
    }
    let n = e.phi.len();
    let max_defect = (0..n)
        .map(|j| (e.phi[j] + e.phi[n - 1 - j]).abs())
        .fold(0.0, f64::max);
    AntisymmetryReport {
        applicable,
        max_defect,
        tol,
        antisymmetric: max_defect <= tol,
        half_one_signed: is_one_signed(&e.phi[..n / 2]),
    }
}

/// Antisymmetric solution of a 1D problem on a symmetric interval built
/// from the half-domain system: solve the positive problem on the left half
/// (with a Dirichlet node in the middle for odd `n`, reflection coupling for
/// even `n`) and mirror it with a sign change.
pub fn antisymmetric_fixture(
    spec: &ProblemSpec,
    grid: &Grid,
    opts: &ScfOptions,
) -> Result<Eigenpair> {
    if grid.dim() != 1 || grid.len() < 2 {
        return Err(Error::Oracle(
            "half-domain fixture needs a 1D grid with n >= 2".into(),
        ));
    }
    let n = grid.len();
    let h = grid.steps()[0];
    let half = n / 2;
    let v = potential_values(spec, grid);
    let mut diag: Vec<f64> = v[..half].iter().map(|vj| 1.0 / (h * h) + vj).collect();
    if n.is_multiple_of(2) {
        diag[half - 1] += 0.5 / (h * h);
    }
    let mut diags = vec![(0, diag)];
    if half > 1 {
        diags.push((1, vec![-0.5 / (h * h); half - 1]));
    }
    let d2 = SymBandMatrix::from_diagonals(half, diags);
    let sol = scf_solve(&d2, spec.beta, 0.5 * grid.norm_const(), opts)?;
    let mut phi = vec![0.0; n];
    for j in 0..half {
        phi[j] = sol.phi[j];
        phi[n - 1 - j] = -sol.phi[j];
    }
    let d = crate::discretize::build_operator(spec, grid);
    let residual = target_residual(&d, spec.beta, grid.norm_const(), &phi, sol.lambda);
    let flags = EigenpairFlags {
        positive: false,
        antisymmetric: Some(true),
        degenerate_endgame: false,
    };
    Ok(Eigenpair {
        lambda: sol.lambda,
        phi,
        residual,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound: f64,
    pub max_abs_lambda: f64,
    pub ok: bool,
}

/// Checks `|λ| ≤ bound` for every value.
pub fn check_bound_values(lambdas: impl IntoIterator<Item = f64>, bound: f64) -> BoundReport {
    let max_abs_lambda = lambdas.into_iter().map(f64::abs).fold(0.0, f64::max);
    BoundReport {
        bound,
        max_abs_lambda,
        ok: max_abs_lambda <= bound,
    }
}

/// Checks `|λ| ≤ ρ_G(A) + ρ_G(D) + βc` on every sample of a path.
pub fn check_bound(path: &PathResult, p: &HomotopyProblem) -> BoundReport {
    let final_lambda = path.eigenpair.as_ref().map(|e| e.lambda);
    check_bound_values(
        path.samples.iter().map(|s| s.lambda).chain(final_lambda),
        p.lambda_bound(),
    )
}

/// Per-point invariants of a state on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateInvariants {
    pub residual: f64,
    /// `|φᵀφ - c| / c`.
    pub norm_rel_error: f64,
    /// Relative gap between `λ` and the value given by the λ identity.
    pub identity_rel_error: f64,
    pub lambda_abs: f64,
    pub bound: f64,
}

pub fn state_invariants(p: &HomotopyProblem, s: &State) -> StateInvariants {
    let c = p.norm_const();
    let ident = p.lambda_identity(s);
    StateInvariants {
        residual: norm_inf(&p.eval_h(s)),
        norm_rel_error: (dot(&s.phi, &s.phi) - c).abs() / c,
        identity_rel_error: (ident - s.lambda).abs() / s.lambda.abs().max(1.0),
        lambda_abs: s.lambda.abs(),
        bound: p.lambda_bound(),
    }
}

/// `λ(t)` along a path at the first crossing of `t`, by linear
/// interpolation between samples.
pub fn lambda_at(samples: &[crate::tracer::PathSample], t: f64) -> Option<f64> {
    let first = samples.first()?;
    if first.t == t {
        return Some(first.lambda);
    }
    samples.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        let (lo, hi) = if a.t <= b.t { (a.t, b.t) } else { (b.t, a.t) };
        if lo <= t && t <= hi {
            if b.t == a.t {
                Some(b.lambda)
            } else {
                Some(a.lambda + (b.lambda - a.lambda) * (t - a.t) / (b.t - a.t))
            }
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub checkpoints: Vec<f64>,
    /// `lambdas[k][i]`: path `i` at checkpoint `k` (`None` if not reached).
    pub lambdas: Vec<Vec<Option<f64>>>,
    pub preserved: bool,
    /// `(checkpoint, i, j)` with paths `i < j` in initial order but
    /// `λ_i ≥ λ_j` at that checkpoint.
    pub violations: Vec<(f64, usize, usize)>,
    /// Smallest pairwise `|λ_i - λ_j|` over checkpoints with `t < 1`.
    pub min_separation: f64,
}

pub fn default_checkpoints() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Compares the λ-ranking of the paths at each checkpoint with their
/// ranking at `t = 0`.
pub fn check_order_preservation(paths: &[PathResult], checkpoints: &[f64]) -> OrderReport {
    let start: Vec<f64> = paths
        .iter()
        .map(|p| p.samples.first().map_or(f64::NAN, |s| s.lambda))
        .collect();
    let mut rank: Vec<usize> = (0..paths.len()).collect();
    rank.sort_by(|&a, &b| start[a].total_cmp(&start[b]));

    let mut lambdas = Vec::with_capacity(checkpoints.len());
    let mut violations = Vec::new();
    let mut min_separation = f64::INFINITY;
    for &t in checkpoints {
        let row: Vec<Option<f64>> = paths
            .iter()
            .map(|p| {
                if t == 1.0 {
                    p.eigenpair
                        .as_ref()
                        .map(|e| e.lambda)
                        .or_else(|| lambda_at(&p.samples, t))
                } else {
                    lambda_at(&p.samples, t)
                }
            })
            .collect();
        for (x, &i) in rank.iter().enumerate() {
            for &j in &rank[x + 1..] {
                if let (Some(li), Some(lj)) = (row[i], row[j]) {
                    if li >= lj {
                        violations.push((t, i, j));
                    }
                    if t < 1.0 {
                        min_separation = min_separation.min((li - lj).abs());
                    }
                }
            }
        }
        lambdas.push(row);
    }
    OrderReport {
        checkpoints: checkpoints.to_vec(),
        lambdas,
        preserved: violations.is_empty(),
        violations,
        min_separation,
    }
}

/// Worst normwise relative error between central differences of `H` and
/// the analytic `H_x`, `H_t` over `samples` random states.
pub fn jacobian_fd_audit(p: &HomotopyProblem, samples: usize, seed: u64) -> f64 {
    let n = p.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = 2.0 * (p.norm_const() / n as f64).sqrt();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let s = State {
            phi: (0..n).map(|_| rng.gen_range(-amp..amp)).collect(),
            lambda: rng.gen_range(-1.0..1.0) * p.operator().gershgorin_radius(),
            t: rng.gen_range(0.0..1.0),
        };
        let jac = p.jacobian_x(&s).to_dense();
        let dim = n + 1;
        let ht = p.dh_dt(&s);
        let scale = jac
            .iter()
            .chain(&ht)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for j in 0..=dim {
            let (plus, minus, step) = perturbed(&s, j, n);
            let hp = p.eval_h(&plus);
            let hm = p.eval_h(&minus);
            for i in 0..dim {
                let fd = (hp[i] - hm[i]) / (2.0 * step);
                let exact = if j < dim { jac[i * dim + j] } else { ht[i] };
                worst = worst.max((fd - exact).abs() / scale);
            }
        }
    }
    worst
}

fn perturbed(s: &State, j: usize, n: usize) -> (State, State, f64) {
    let mut plus = s.clone();
    let mut minus = s.clone();
    let step;
    if j < n {
        step = 1e-6 * s.phi[j].abs().max(1.0);
        plus.phi[j] += step;
        minus.phi[j] -= step;
    } else if j == n {
        step = 1e-6 * s.lambda.abs().max(1.0);
        plus.lambda += step;
        minus.lambda -= step;
    } else {
        step = 1e-6;
        plus.t += step;
        minus.t -= step;
    }
    (plus, minus, step)
}
