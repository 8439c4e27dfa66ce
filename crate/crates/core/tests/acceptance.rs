//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::sync::Mutex;
use std::time::Instant;

use gpe_homotopy::homotopy::HomotopyOptions;
use gpe_homotopy::linalg::sym_eigen_full;
use gpe_homotopy::tracer::{trace_all_with, AcceptedPoint};
use gpe_homotopy::verify::{
    antisymmetric_fixture, check_antisymmetric, check_order_preservation, is_one_signed,
    jacobian_fd_audit, lambda_at, scf_ground_state, state_invariants, ScfOptions, ANTISYMMETRY_TOL,
};
use gpe_homotopy::{
    trace_all, HomotopyProblem, PathResult, ProblemSpec, RandomMatrixKind, TraceConfig,
};

const EXPECTED_1D: [f64; 9] = [6.76, 8.39, 10.35, 12.73, 15.62, 19.08, 23.13, 27.79, 33.05];
const EXPECTED_2D: [f64; 12] = [
    43.36, 60.89, 65.31, 78.81, 86.28, 94.06, 104.4, 108.82, 120.47, 129.67, 133.81, 138.68,
];

#[derive(Debug, Default, Clone, Copy)]
struct Worst {
    points: usize,
    residual: f64,
    norm_rel: f64,
    identity_rel: f64,
    bound_excess: f64,
    ori_changes: usize,
}

impl Worst {
    fn merge(&mut self, o: &Worst) {
        self.points += o.points;
        self.residual = self.residual.max(o.residual);
        self.norm_rel = self.norm_rel.max(o.norm_rel);
        self.identity_rel = self.identity_rel.max(o.identity_rel);
        self.bound_excess = self.bound_excess.max(o.bound_excess);
        self.ori_changes += o.ori_changes;
    }

    fn ok(&self) -> bool {
        self.points > 0
            && self.residual <= 1e-10
            && self.norm_rel <= 1e-8
            && self.identity_rel <= 1e-8
            && self.bound_excess <= 0.0
            && self.ori_changes == 0
    }

    fn describe(&self) -> String {
        format!(
            "{} points, residual {:.1e}, norm {:.1e}, identity {:.1e}, bound excess {:.1e}, ori changes {}",
            self.points, self.residual, self.norm_rel, self.identity_rel, self.bound_excess, self.ori_changes
        )
    }
}

struct Run {
    problem: HomotopyProblem,
    paths: Vec<PathResult>,
    worst: Worst,
    seconds: f64,
}

fn run(
    spec: ProblemSpec,
    opts: HomotopyOptions,
    cfg: &TraceConfig,
    which: &[usize],
    workers: usize,
) -> Run {
    let start = Instant::now();
    let problem = HomotopyProblem::new(spec, &opts).expect("problem setup");
    let per_path: Mutex<Vec<(usize, i8, Worst)>> = Mutex::new(Vec::new());
    let observe = |k: usize, pt: &AcceptedPoint<'_>| {
        let inv = state_invariants(&problem, pt.state);
        let w = Worst {
            points: 1,
            residual: inv.residual,
            norm_rel: inv.norm_rel_error,
            identity_rel: inv.identity_rel_error,
            bound_excess: inv.lambda_abs - inv.bound,
            ori_changes: 0,
        };
        let ori = pt.tangent.map_or(0, |t| t.ori);
        let mut all = per_path.lock().unwrap();
        match all.iter_mut().find(|(j, _, _)| *j == k) {
            Some((_, first, acc)) => {
                if ori != 0 && *first != 0 && ori != *first {
                    acc.ori_changes += 1;
                }
                acc.merge(&w);
            }
            None => all.push((k, ori, w)),
        }
    };
    let paths = trace_all_with(&problem, cfg, which, workers, &observe).expect("tracing");
    let mut worst = Worst::default();
    for (_, _, w) in per_path.into_inner().unwrap() {
        worst.merge(&w);
    }
    Run {
        problem,
        paths,
        worst,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn full_cfg() -> TraceConfig {
    TraceConfig {
        ds_max: 2.0,
        ..Default::default()
    }
}

fn harmonic_1d(workers: usize) -> Run {
    let which: Vec<usize> = (1..=9).collect();
    run(
        ProblemSpec::line(-2.0, 2.0, 999, 20.0),
        HomotopyOptions::default(),
        &full_cfg(),
        &which,
        workers,
    )
}

fn harmonic_2d() -> Run {
    let opts = HomotopyOptions {
        seed: 1,
        kind: Some(RandomMatrixKind::BlockTridiag2D),
        ..Default::default()
    };
    let which: Vec<usize> = (1..=15).collect();
    run(
        ProblemSpec::rectangle(0.0, 1.0, 0.0, 1.0, 29, 29, 20.0),
        opts,
        &full_cfg(),
        &which,
        1,
    )
}

fn lambdas(paths: &[PathResult]) -> Vec<Option<f64>> {
    paths.iter().map(PathResult::lambda).collect()
}

fn fmt_lambdas(v: &[Option<f64>]) -> String {
    v.iter()
        .map(|l| l.map_or("-".to_string(), |x| format!("{x:.4}")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn sign_free_distance(a: &[f64], b: &[f64]) -> f64 {
    let plus: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let minus: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y).powi(2))
        .sum::<f64>()
        .sqrt();
    plus.min(minus)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn ac1(r: &Run) -> Line {
    let got = lambdas(&r.paths);
    let pass = got.len() == EXPECTED_1D.len()
        && got
            .iter()
            .zip(EXPECTED_1D)
            .all(|(l, want)| l.is_some_and(|x| (x - want).abs() <= 0.05));
    Line {
        id: "AC1",
        pass,
        detail: format!("1D lambdas [{}] in {:.1}s", fmt_lambdas(&got), r.seconds),
    }
}

fn ac2(r: &Run) -> Line {
    let got = lambdas(&r.paths);
    let mut missing = Vec::new();
    for want in EXPECTED_2D {
        let tol = if want == 104.4 { 0.5 } else { 0.05 };
        if !got.iter().flatten().any(|x| (x - want).abs() <= tol) {
            missing.push(want);
        }
    }
    Line {
        id: "AC2",
        pass: missing.is_empty(),
        detail: format!(
            "2D found {}/{}, missing {missing:?}; lambdas [{}] in {:.1}s",
            EXPECTED_2D.len() - missing.len(),
            EXPECTED_2D.len(),
            fmt_lambdas(&got),
            r.seconds
        ),
    }
}

fn scf_agreement(r: &Run) -> (bool, String) {
    let Some(path1) = r.paths.first().and_then(|p| p.eigenpair.as_ref()) else {
        return (false, "path 1 did not converge".into());
    };
    match scf_ground_state(&r.problem, &ScfOptions::default()) {
        Ok(scf) => {
            let dl = (scf.lambda - path1.lambda).abs();
            let dist = sign_free_distance(&scf.phi, &path1.phi);
            let rel = dist / l2(&path1.phi);
            let signed = is_one_signed(&path1.phi);
            (
                dl <= 1e-6 && rel <= 1e-6 && signed,
                format!("dlambda {dl:.1e}, dphi {rel:.1e}, one-signed {signed}"),
            )
        }
        Err(e) => (false, format!("SCF failed: {e}")),
    }
}

fn ac3(one: &Run, two: &Run) -> Line {
    let (p1, d1) = scf_agreement(one);
    let (p2, d2) = scf_agreement(two);
    Line {
        id: "AC3",
        pass: p1 && p2,
        detail: format!("1D {d1}; 2D {d2}"),
    }
}

// At beta = 20 on coarse even grids path 2 ends on a non-antisymmetric
// solution with larger lambda, so the small-grid comparison uses beta = 1.
fn fixture_match(n: usize) -> (bool, String) {
    let spec = ProblemSpec::line(-2.0, 2.0, n, 1.0);
    let r = run(
        spec.clone(),
        HomotopyOptions::default(),
        &TraceConfig::default(),
        &[2],
        1,
    );
    let Some(traced) = r.paths[0].eigenpair.as_ref() else {
        return (false, format!("n={n}: path 2 did not converge"));
    };
    let fixture = match antisymmetric_fixture(&spec, r.problem.grid(), &ScfOptions::default()) {
        Ok(f) => f,
        Err(e) => return (false, format!("n={n}: fixture failed: {e}")),
    };
    let dl = (fixture.lambda - traced.lambda).abs();
    let dphi = sign_free_distance(&fixture.phi, &traced.phi) / l2(&traced.phi);
    (
        dl <= 1e-8 * traced.lambda.abs().max(1.0) && dphi <= 1e-8,
        format!("n={n} beta=1 dlambda {dl:.1e} dphi {dphi:.1e}"),
    )
}

fn ac4(one: &Run) -> Line {
    let (p, d) = match one.paths.get(1).and_then(|p| p.eigenpair.as_ref()) {
        Some(e) => {
            let rep = check_antisymmetric(e, one.problem.grid(), ANTISYMMETRY_TOL);
            let fixture = antisymmetric_fixture(
                one.problem.spec(),
                one.problem.grid(),
                &ScfOptions::default(),
            );
            let (same, fd) = match fixture {
                Ok(f) => {
                    let dl = (f.lambda - e.lambda).abs();
                    let dphi = sign_free_distance(&f.phi, &e.phi) / l2(&e.phi);
                    (
                        dl <= 1e-8 * e.lambda && dphi <= 1e-8,
                        format!("fixture dlambda {dl:.1e} dphi {dphi:.1e}"),
                    )
                }
                Err(err) => (false, format!("fixture failed: {err}")),
            };
            (
                rep.antisymmetric && rep.half_one_signed && same,
                format!(
                    "path 2 defect {:.1e} <= {:.1e}, half one-signed {}, {fd}",
                    rep.max_defect, rep.tol, rep.half_one_signed
                ),
            )
        }
        None => (false, "path 2 did not converge".into()),
    };
    let (p7, d7) = fixture_match(7);
    let (p8, d8) = fixture_match(8);
    Line {
        id: "AC4",
        pass: p && p7 && p8,
        detail: format!("{d}; {d7}; {d8}"),
    }
}

fn ac5(one: &Run, two: &Run) -> Line {
    let which: Vec<usize> = (1..=10).collect();
    let smoke = run(
        ProblemSpec::line(-2.0, 2.0, 50, 1.0),
        HomotopyOptions::default(),
        &TraceConfig::default(),
        &which,
        1,
    );
    let runs = [("smoke", &smoke), ("1D", one), ("2D", two)];
    let pass = runs.iter().all(|(_, r)| r.worst.ok());
    let detail = runs
        .iter()
        .map(|(n, r)| format!("{n}: {}", r.worst.describe()))
        .collect::<Vec<_>>()
        .join("; ");
    Line {
        id: "AC5",
        pass,
        detail,
    }
}

fn ac6() -> Line {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, spec) in [
        ("1D n=20", ProblemSpec::line(-2.0, 2.0, 20, 20.0)),
        (
            "2D 8x8",
            ProblemSpec::rectangle(0.0, 1.0, 0.0, 1.0, 8, 8, 20.0),
        ),
    ] {
        let p = HomotopyProblem::new(
            spec,
            &HomotopyOptions {
                seed: 5,
                ..Default::default()
            },
        )
        .expect("setup");
        let err = jacobian_fd_audit(&p, 100, 17);
        pass &= err <= 1e-6;
        parts.push(format!("{name} max rel error {err:.1e}"));
    }
    Line {
        id: "AC6",
        pass,
        detail: parts.join("; "),
    }
}

fn ac7(one: &Run) -> Line {
    let checkpoints: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
    let mut min_sep = f64::INFINITY;
    let mut missing = 0;
    for &t in &checkpoints {
        let row: Vec<Option<f64>> = one.paths.iter().map(|p| lambda_at(&p.samples, t)).collect();
        missing += row.iter().filter(|x| x.is_none()).count();
        let vals: Vec<f64> = row.into_iter().flatten().collect();
        for i in 0..vals.len() {
            for j in i + 1..vals.len() {
                min_sep = min_sep.min((vals[i] - vals[j]).abs());
            }
        }
    }
    let order = check_order_preservation(&one.paths, &gpe_homotopy::verify::default_checkpoints());
    let pass = missing == 0 && min_sep > 1e-8 && order.preserved;
    Line {
        id: "AC7",
        pass,
        detail: format!(
            "min separation {min_sep:.3e}, missing samples {missing}, order preserved {} ({} violations)",
            order.preserved,
            order.violations.len()
        ),
    }
}

fn ac8(one: &Run) -> Line {
    let four = harmonic_1d(4);
    let same = one.paths.len() == four.paths.len()
        && one.paths.iter().zip(&four.paths).all(|(a, b)| {
            a.lambda().map(f64::to_bits) == b.lambda().map(f64::to_bits)
                && a.accepted_steps == b.accepted_steps
                && a.samples == b.samples
        });
    Line {
        id: "AC8",
        pass: same,
        detail: format!("1 vs 4 workers bit-identical lambdas and step counts: {same}"),
    }
}

fn ac9() -> Line {
    let spec = ProblemSpec::line(-2.0, 2.0, 999, 0.0);
    let opts = HomotopyOptions {
        sigma: Some(0.0),
        ..Default::default()
    };
    let p = HomotopyProblem::new(spec, &opts).expect("setup");
    let which: Vec<usize> = (1..=9).collect();
    let paths = trace_all(&p, &TraceConfig::default(), &which, 1).expect("tracing");
    let eig = sym_eigen_full(p.operator()).expect("eigensolver");
    let mut worst: f64 = 0.0;
    let mut all = true;
    for (r, mu) in paths.iter().zip(eig.eigenvalues()) {
        match r.lambda() {
            Some(l) => worst = worst.max((l - mu).abs() / mu.abs()),
            None => all = false,
        }
    }
    Line {
        id: "AC9",
        pass: all && worst <= 1e-9,
        detail: format!("max rel diff to eigensolver {worst:.1e}"),
    }
}

fn main() {
    let one = harmonic_1d(1);
    let two = harmonic_2d();
    let lines = [
        ac1(&one),
        ac2(&two),
        ac3(&one, &two),
        ac4(&one),
        ac5(&one, &two),
        ac6(),
        ac7(&one),
        ac8(&one),
        ac9(),
    ];
    let mut failed = 0;
    for l in &lines {
        println!(
            "{} {}: {}",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.detail
        );
        failed += usize::from(!l.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        lines.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
