//! Predictor-corrector tracing of homotopy paths from `t = 0` to `t = 1`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LinalgError, Result};
use crate::homotopy::{normalize_sign, HomotopyProblem, State};
use crate::linalg::{dot, norm2, norm_inf, BorderedSystem};
use crate::verify::Eigenpair;

/// Step-size and Newton controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub angle_halve_deg: f64,
    pub angle_double_deg: f64,
    /// Tolerance on `‖H‖∞`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Cap on predictor-corrector attempts (accepted plus rejected).
    pub max_steps: usize,
    /// Iterations of the damped Newton fallback at `t = 1`.
    pub damped_max_iter: usize,
    /// Estimate `σ_min` of the augmented Jacobian at every accepted point.
    pub monitor_sigma_min: bool,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            ds0: 0.01,
            ds_min: 1e-8,
            ds_max: 0.1,
            angle_halve_deg: 18.0,
            angle_double_deg: 6.0,
            newton_tol: 1e-10,
            newton_max_iter: 10,
            max_steps: 100_000,
            damped_max_iter: 50,
            monitor_sigma_min: true,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.ds_min > 0.0
            && self.ds_min < self.ds0
            && self.ds0 <= self.ds_max
            && self.ds_max.is_finite())
        {
            return bad("step sizes must satisfy 0 < ds_min < ds0 <= ds_max");
        }
        if !(self.angle_double_deg > 0.0
            && self.angle_double_deg < self.angle_halve_deg
            && self.angle_halve_deg < 90.0)
        {
            return bad("angles must satisfy 0 < angle_double_deg < angle_halve_deg < 90");
        }
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return bad("newton_tol must be positive");
        }
        if self.newton_max_iter == 0 || self.max_steps == 0 {
            return bad("newton_max_iter and max_steps must be at least 1");
        }
        Ok(())
    }
}

/// Unit tangent `(φ̇, λ̇, ṫ)` with the orientation recorded for its path.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub dot_phi: Vec<f64>,
    pub dot_lambda: f64,
    pub dot_t: f64,
    pub ori: i8,
}

impl Tangent {
    fn from_vec(mut z: Vec<f64>, ori: i8) -> Self {
        let dot_t = z.pop().expect("tangent has at least two entries");
        let dot_lambda = z.pop().expect("tangent has at least two entries");
        Self {
            dot_phi: z,
            dot_lambda,
            dot_t,
            ori,
        }
    }

    fn negate(&mut self) {
        self.dot_phi.iter_mut().for_each(|v| *v = -*v);
        self.dot_lambda = -self.dot_lambda;
        self.dot_t = -self.dot_t;
    }

    pub fn dot(&self, other: &Tangent) -> f64 {
        dot(&self.dot_phi, &other.dot_phi)
            + self.dot_lambda * other.dot_lambda
            + self.dot_t * other.dot_t
    }

    /// Angle to `other` in degrees, in `[0, 180]`.
    pub fn angle_deg(&self, other: &Tangent) -> f64 {
        self.dot(other).clamp(-1.0, 1.0).acos().to_degrees()
    }

    pub fn norm(&self) -> f64 {
        (dot(&self.dot_phi, &self.dot_phi) + self.dot_lambda.powi(2) + self.dot_t.powi(2)).sqrt()
    }
}

/// `[H_x H_t; rᵀ]` as a bordered system.
fn augmented(
    p: &HomotopyProblem,
    s: &State,
    r_phi: &[f64],
    r_lambda: f64,
    r_t: f64,
) -> BorderedSystem {
    let n = p.len();
    let ht = p.dh_dt(s);
    let neg: Vec<f64> = s.phi.iter().map(|v| -v).collect();
    BorderedSystem::new(
        p.jacobian_core(s),
        vec![neg.clone(), ht[..n].to_vec()],
        vec![neg, r_phi.to_vec()],
        vec![0.0, ht[n], r_lambda, r_t],
    )
    .expect("dimensions consistent by construction")
}

struct TangentSolve {
    tangent: Tangent,
    det_sign: i8,
    sigma_min: Option<f64>,
    scale: f64,
}

fn tangent_solve(
    p: &HomotopyProblem,
    s: &State,
    reference: Option<&Tangent>,
    want_sigma: bool,
) -> Result<TangentSolve, LinalgError> {
    let n = p.len();
    let sys = match reference {
        Some(r) => augmented(p, s, &r.dot_phi, r.dot_lambda, r.dot_t),
        None => augmented(p, s, &vec![0.0; n], 0.0, 1.0),
    };
    let lu = sys.factorize();
    let mut rhs = vec![0.0; n + 2];
    rhs[n + 1] = 1.0;
    let mut z = lu.solve(&rhs)?;
    let nz = norm2(&z);
    z.iter_mut().for_each(|v| *v /= nz);
    // rᵀz > 0, so det[J; zᵀ] has the sign of det[J; rᵀ].
    let det_sign = lu.det_sign();
    let sigma_min = if want_sigma {
        Some(lu.min_singular_estimate()?)
    } else {
        None
    };
    Ok(TangentSolve {
        tangent: Tangent::from_vec(z, det_sign),
        det_sign,
        sigma_min,
        scale: sys.row_scale(),
    })
}

/// Unit null vector of `[H_x H_t]` at `s`. Without an orientation the sign
/// is chosen so that `ṫ > 0` and the resulting orientation is recorded;
/// with one, the sign is chosen to reproduce it.
pub fn tangent_at(p: &HomotopyProblem, s: &State, ori: Option<i8>) -> Result<Tangent> {
    let mut ts = tangent_solve(p, s, None, false)?;
    if ts.det_sign == 0 {
        return Err(LinalgError::RankDeficient {
            index: p.len() + 1,
            pivot: 0.0,
        }
        .into());
    }
    if let Some(o) = ori {
        if ts.det_sign != o {
            ts.tangent.negate();
        }
        ts.tangent.ori = o;
    }
    Ok(ts.tangent)
}

/// Euler step. Returns the predicted point and the step actually taken,
/// which is shortened so that the prediction lands on `t = 1` exactly.
pub fn predict(s: &State, tg: &Tangent, ds: f64) -> (State, f64) {
    let mut ds = ds;
    let mut t = s.t + ds * tg.dot_t;
    if t >= 1.0 && tg.dot_t > 0.0 {
        ds = (1.0 - s.t) / tg.dot_t;
        t = 1.0;
    }
    let phi = s
        .phi
        .iter()
        .zip(&tg.dot_phi)
        .map(|(x, v)| x + ds * v)
        .collect();
    (
        State {
            phi,
            lambda: s.lambda + ds * tg.dot_lambda,
            t,
        },
        ds,
    )
}

/// Constraint appended to `H = 0` by the corrector.
#[derive(Debug, Clone, Copy)]
pub enum Hyperplane<'a> {
    /// `vᵀ(x - x̄) + τ(t - t̄) = 0` with `(v, τ)` the tangent.
    Tangent(&'a Tangent),
    /// `t = t̄`, i.e. `(v, τ) = (0, 1)`.
    FixedT,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorStats {
    pub iterations: usize,
    /// `‖H‖∞` before the first and after every iteration.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrectorError {
    #[error("Newton did not reach tolerance (last residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error(transparent)]
    Singular(#[from] LinalgError),
}

fn residual_inf(p: &HomotopyProblem, s: &State) -> f64 {
    let r = norm_inf(&p.eval_h(s));
    if r.is_finite() {
        r
    } else {
        f64::INFINITY
    }
}

/// Newton's method on `[H; hyperplane]` starting from `predicted`.
pub fn correct(
    p: &HomotopyProblem,
    predicted: &State,
    plane: Hyperplane<'_>,
    cfg: &TraceConfig,
) -> Result<(State, CorrectorStats), CorrectorError> {
    let n = p.len();
    let mut s = predicted.clone();
    let mut res = residual_inf(p, &s);
    let mut stats = CorrectorStats {
        iterations: 0,
        residuals: vec![res],
    };
    if res <= cfg.newton_tol {
        return Ok((s, stats));
    }
    for it in 1..=cfg.newton_max_iter {
        let mut h = p.eval_h(&s);
        let delta = match plane {
            Hyperplane::Tangent(tg) => {
                let g = dot(&tg.dot_phi, &diff(&s.phi, &predicted.phi))
                    + tg.dot_lambda * (s.lambda - predicted.lambda)
                    + tg.dot_t * (s.t - predicted.t);
                h.push(g);
                let sys = augmented(p, &s, &tg.dot_phi, tg.dot_lambda, tg.dot_t);
                sys.factorize().solve(&h)?
            }
            Hyperplane::FixedT => {
                let sys = p.jacobian_x(&s);
                sys.factorize().solve(&h)?
            }
        };
        for (x, d) in s.phi.iter_mut().zip(&delta[..n]) {
            *x -= d;
        }
        s.lambda -= delta[n];
        if let Hyperplane::Tangent(_) = plane {
            s.t -= delta[n + 1];
        }
        let prev = res;
        res = residual_inf(p, &s);
        stats.iterations = it;
        stats.residuals.push(res);
        if res <= cfg.newton_tol {
            return Ok((s, stats));
        }
        if !res.is_finite() || (it >= 3 && res > prev) {
            break;
        }
    }
    Err(CorrectorError::NoConvergence { residual: res })
}

/// Newton at fixed `t` with step halving whenever `‖H‖` would grow.
fn damped_newton(p: &HomotopyProblem, start: &State, cfg: &TraceConfig) -> Option<State> {
    let n = p.len();
    let mut s = start.clone();
    let mut res = residual_inf(p, &s);
    for _ in 0..cfg.damped_max_iter {
        if res <= cfg.newton_tol {
            return Some(s);
        }
        let h = p.eval_h(&s);
        let delta = p.jacobian_x(&s).factorize().solve(&h).ok()?;
        let mut alpha = 1.0;
        loop {
            let trial = State {
                phi: s
                    .phi
                    .iter()
                    .zip(&delta[..n])
                    .map(|(x, d)| x - alpha * d)
                    .collect(),
                lambda: s.lambda - alpha * delta[n],
                t: s.t,
            };
            let r = residual_inf(p, &trial);
            if r < res {
                s = trial;
                res = r;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return None;
            }
        }
    }
    (res <= cfg.newton_tol).then_some(s)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// One row of the path log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub step: usize,
    pub t: f64,
    pub lambda: f64,
    pub ds: f64,
    pub theta_deg: f64,
    pub sigma_min: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathOutcome {
    Converged,
    /// `t = 1` was not reached by Newton; λ is extrapolated from the last
    /// point with `t < 1`.
    DegenerateEndgame,
    Failed {
        reason: String,
    },
}

impl PathOutcome {
    pub fn is_converged(&self) -> bool {
        matches!(self, Self::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    /// 1-based index of the start eigenpair.
    pub index: usize,
    pub outcome: PathOutcome,
    pub eigenpair: Option<Eigenpair>,
    pub last_state: State,
    pub ori: i8,
    pub samples: Vec<PathSample>,
    pub accepted_steps: usize,
    pub corrector_rejects: usize,
    pub angle_rejects: usize,
    pub orientation_flips: usize,
    pub newton_iterations: usize,
    pub min_sigma: f64,
    pub warnings: Vec<String>,
}

impl PathResult {
    pub fn lambda(&self) -> Option<f64> {
        self.eigenpair.as_ref().map(|e| e.lambda)
    }
}

/// Accepted point handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct AcceptedPoint<'a> {
    pub step: usize,
    pub state: &'a State,
    pub tangent: Option<&'a Tangent>,
    pub sample: &'a PathSample,
}

/// Traces the path starting at `s0` (the start eigenpair with 1-based
/// index `index`).
pub fn trace_path(p: &HomotopyProblem, index: usize, s0: &State, cfg: &TraceConfig) -> PathResult {
    trace_path_with(p, index, s0, cfg, &mut |_| {})
}

pub fn trace_path_with(
    p: &HomotopyProblem,
    index: usize,
    s0: &State,
    cfg: &TraceConfig,
    observer: &mut dyn FnMut(&AcceptedPoint<'_>),
) -> PathResult {
    let mut out = PathResult {
        index,
        outcome: PathOutcome::Failed {
            reason: String::new(),
        },
        eigenpair: None,
        last_state: s0.clone(),
        ori: 0,
        samples: Vec::new(),
        accepted_steps: 0,
        corrector_rejects: 0,
        angle_rejects: 0,
        orientation_flips: 0,
        newton_iterations: 0,
        min_sigma: f64::INFINITY,
        warnings: Vec::new(),
    };
    let fail = |mut out: PathResult, reason: String| {
        log::debug!("path {index}: {reason}");
        out.outcome = PathOutcome::Failed { reason };
        out
    };

    let first = match tangent_solve(p, s0, None, cfg.monitor_sigma_min) {
        Ok(ts) if ts.det_sign != 0 => ts,
        Ok(_) => return fail(out, "start point is singular".into()),
        Err(e) => return fail(out, format!("start tangent: {e}")),
    };
    let mut tangent = first.tangent;
    out.ori = first.det_sign;
    let sigma0 = first.sigma_min.unwrap_or(f64::NAN);
    record_sigma(&mut out, sigma0, first.scale, 0.0);
    let s0_sample = PathSample {
        step: 0,
        t: s0.t,
        lambda: s0.lambda,
        ds: 0.0,
        theta_deg: 0.0,
        sigma_min: sigma0,
        residual: residual_inf(p, s0),
    };
    observer(&AcceptedPoint {
        step: 0,
        state: s0,
        tangent: Some(&tangent),
        sample: &s0_sample,
    });
    out.samples.push(s0_sample);

    let mut state = s0.clone();
    let mut ds = cfg.ds0;
    let mut attempts = 0;
    let mut endgame_tried = false;
    loop {
        if ds < cfg.ds_min {
            if endgame_tried && state.t > 0.0 && tangent.dot_t > 0.0 {
                return degenerate_endgame(p, out, &state, &tangent);
            }
            return fail(
                out,
                format!("step size fell below {:e} at t = {}", cfg.ds_min, state.t),
            );
        }
        if attempts >= cfg.max_steps {
            return fail(
                out,
                format!("step limit {} reached at t = {}", cfg.max_steps, state.t),
            );
        }
        attempts += 1;

        let (predicted, ds_eff) = predict(&state, &tangent, ds);
        let endgame = predicted.t == 1.0;
        let plane = if endgame {
            Hyperplane::FixedT
        } else {
            Hyperplane::Tangent(&tangent)
        };
        let corrected = match correct(p, &predicted, plane, cfg) {
            Ok((s, stats)) => {
                out.newton_iterations += stats.iterations;
                Some(s)
            }
            Err(CorrectorError::NoConvergence { .. }) | Err(CorrectorError::Singular(_))
                if endgame =>
            {
                endgame_tried = true;
                damped_newton(p, &predicted, cfg)
            }
            Err(_) => None,
        };
        let Some(next) = corrected else {
            out.corrector_rejects += 1;
            ds *= 0.5;
            continue;
        };

        let ts = match tangent_solve(p, &next, Some(&tangent), cfg.monitor_sigma_min) {
            Ok(ts) => Some(ts),
            Err(e) if endgame => {
                out.warnings.push(format!("no tangent at t = 1: {e}"));
                None
            }
            Err(_) => {
                out.corrector_rejects += 1;
                ds *= 0.5;
                continue;
            }
        };

        let (next_tangent, theta, sigma) = match ts {
            Some(mut ts) => {
                if ts.det_sign != out.ori {
                    out.orientation_flips += 1;
                    ts.tangent.negate();
                }
                ts.tangent.ori = out.ori;
                let theta = tangent.angle_deg(&ts.tangent);
                if theta > cfg.angle_halve_deg {
                    out.angle_rejects += 1;
                    ds *= 0.5;
                    continue;
                }
                let sigma = ts.sigma_min.unwrap_or(f64::NAN);
                record_sigma(&mut out, sigma, ts.scale, next.t);
                (Some(ts.tangent), theta, sigma)
            }
            None => (None, f64::NAN, f64::NAN),
        };

        out.accepted_steps += 1;
        let sample = PathSample {
            step: out.accepted_steps,
            t: next.t,
            lambda: next.lambda,
            ds: ds_eff,
            theta_deg: theta,
            sigma_min: sigma,
            residual: residual_inf(p, &next),
        };
        observer(&AcceptedPoint {
            step: out.accepted_steps,
            state: &next,
            tangent: next_tangent.as_ref(),
            sample: &sample,
        });
        out.samples.push(sample);

        if endgame {
            let mut fin = next;
            normalize_sign(&mut fin.phi);
            out.eigenpair = Some(Eigenpair::at_target(p, &fin.phi, fin.lambda));
            out.last_state = fin;
            out.outcome = PathOutcome::Converged;
            return out;
        }
        if next.t < 0.0 {
            out.last_state = next;
            return fail(out, "path returned below t = 0".into());
        }
        state = next;
        tangent = next_tangent.expect("tangent exists away from t = 1");
        out.last_state = state.clone();
        if theta < cfg.angle_double_deg {
            ds = (2.0 * ds).min(cfg.ds_max);
        }
    }
}

fn record_sigma(out: &mut PathResult, sigma: f64, scale: f64, t: f64) {
    if sigma.is_nan() {
        return;
    }
    out.min_sigma = out.min_sigma.min(sigma);
    if sigma < 1e-10 * scale {
        out.warnings.push(format!(
            "near-singular Jacobian at t = {t}: sigma_min {sigma:e}"
        ));
    }
}

fn degenerate_endgame(
    p: &HomotopyProblem,
    mut out: PathResult,
    state: &State,
    tangent: &Tangent,
) -> PathResult {
    let dt = 1.0 - state.t;
    let lambda = state.lambda + dt * tangent.dot_lambda / tangent.dot_t;
    let mut phi = state.phi.clone();
    normalize_sign(&mut phi);
    let mut pair = Eigenpair::at_target(p, &phi, lambda);
    pair.flags.degenerate_endgame = true;
    out.warnings.push(format!(
        "endgame stalled; lambda extrapolated from t = {}",
        state.t
    ));
    out.eigenpair = Some(pair);
    out.outcome = PathOutcome::DegenerateEndgame;
    out
}

/// Traces the paths with 1-based indices `which` on `workers` threads.
/// Results come back in input order and do not depend on `workers`.
pub fn trace_all(
    p: &HomotopyProblem,
    cfg: &TraceConfig,
    which: &[usize],
    workers: usize,
) -> Result<Vec<PathResult>> {
    trace_all_with(p, cfg, which, workers, &|_, _| {})
}

pub fn trace_all_with(
    p: &HomotopyProblem,
    cfg: &TraceConfig,
    which: &[usize],
    workers: usize,
    observer: &(dyn Fn(usize, &AcceptedPoint<'_>) + Sync),
) -> Result<Vec<PathResult>> {
    cfg.validate()?;
    let starts = p.initial_states(which)?;
    let slots: Vec<Mutex<Option<PathResult>>> = which.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, which.len().max(1));
    let run = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= which.len() {
            break;
        }
        let k = which[i];
        let r = trace_path_with(p, k, &starts[i], cfg, &mut |pt| observer(k, pt));
        log::info!(
            "path {k}: {:?} lambda = {:?} after {} steps",
            r.outcome,
            r.lambda(),
            r.accepted_steps
        );
        *slots[i].lock().expect("result slot poisoned") = Some(r);
    };
    if workers == 1 {
        run();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(run);
            }
        });
    }
    Ok(slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot poisoned")
                .expect("every path traced")
        })
        .collect())
}
