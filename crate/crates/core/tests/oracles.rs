use gpe_homotopy::homotopy::HomotopyOptions;
use gpe_homotopy::linalg::{sym_eigen_full, BorderedSystem};
use gpe_homotopy::tracer::{correct, tangent_at, Hyperplane};
use gpe_homotopy::verify::target_residual;
use gpe_homotopy::{
    build_grid, build_operator, trace_path, HomotopyProblem, Potential, ProblemSpec, State,
    SymBandMatrix, TraceConfig,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn band(size: usize, offsets: &[usize], vals: &[f64]) -> SymBandMatrix {
    let mut k = 0;
    let mut next = || {
        k += 1;
        vals[k % vals.len()]
    };
    let diags = offsets
        .iter()
        .filter(|&&o| o == 0 || o < size)
        .map(|&o| {
            let len = size.saturating_sub(o);
            let d: Vec<f64> = (0..len)
                .map(|_| if o == 0 { 4.0 * next() } else { next() })
                .collect();
            (o, d)
        })
        .collect();
    SymBandMatrix::from_diagonals(size, diags)
}

fn bordered(size: usize, width: usize, vals: &[f64]) -> BorderedSystem {
    let core = band(size, &[0, 1, 3], vals);
    let pick = |k: usize| vals[(k * 7 + 3) % vals.len()];
    let cols = (0..width)
        .map(|q| (0..size).map(|i| pick(i + 31 * q)).collect())
        .collect();
    let rows = (0..width)
        .map(|q| (0..size).map(|i| pick(i * 3 + 17 * q + 1)).collect())
        .collect();
    let corner = (0..width * width).map(|k| pick(k + 5)).collect();
    BorderedSystem::new(core, cols, rows, corner).unwrap()
}

fn dense_of(sys: &BorderedSystem) -> DMatrix<f64> {
    DMatrix::from_row_slice(sys.dim(), sys.dim(), &sys.to_dense())
}

fn flat_line(n: usize) -> ProblemSpec {
    let mut spec = ProblemSpec::line(0.0, 1.0, n, 0.0);
    spec.potential = Potential::Tabulated(vec![0.0; n]);
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bordered_solve_matches_dense_lu(
        size in 2usize..24,
        width in 0usize..3,
        vals in prop::collection::vec(-1.0f64..1.0, 40),
        rhs in prop::collection::vec(-1.0f64..1.0, 30),
    ) {
        let sys = bordered(size, width, &vals);
        let a = dense_of(&sys);
        let det = a.clone().lu().determinant();
        prop_assume!(a.clone().svd(false, false).singular_values.min() > 1e-6);
        let b = &rhs[..sys.dim()];
        let x = sys.factorize().solve(b).unwrap();
        let expect = a.clone().lu().solve(&DVector::from_column_slice(b)).unwrap();
        let scale = expect.amax().max(1.0);
        for (u, v) in x.iter().zip(expect.iter()) {
            prop_assert!((u - v).abs() <= 1e-8 * scale, "{} vs {}", u, v);
        }
        prop_assert_eq!(sys.factorize().det_sign() as f64, det.signum());
        let xt = sys.factorize().solve_transpose(b).unwrap();
        let back = a.transpose() * DVector::from_column_slice(&xt);
        for (u, v) in back.iter().zip(b) {
            prop_assert!((u - v).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn sigma_estimate_bounds_true_value(
        size in 2usize..16,
        width in 0usize..3,
        vals in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let sys = bordered(size, width, &vals);
        let smin = dense_of(&sys).svd(false, false).singular_values.min();
        prop_assume!(smin > 1e-6);
        let est = sys.factorize().min_singular_estimate().unwrap();
        prop_assert!(est >= smin * (1.0 - 1e-9));
        prop_assert!(est <= smin * 1.5, "estimate {} vs {}", est, smin);
    }

    #[test]
    fn det_sign_under_scaling(
        size in 2usize..12,
        vals in prop::collection::vec(-1.0f64..1.0, 40),
        alpha in 1e-3f64..1e3,
    ) {
        let sys = bordered(size, 1, &vals);
        prop_assume!(dense_of(&sys).svd(false, false).singular_values.min() > 1e-6);
        let s0 = sys.factorize().det_sign();
        let scale = |f: f64| {
            let core = SymBandMatrix::linear_combination(&[(f, sys.core())]);
            let cols = sys.border_cols().iter().map(|c| c.iter().map(|x| f * x).collect()).collect();
            let rows = sys.border_rows().iter().map(|c| c.iter().map(|x| f * x).collect()).collect();
            let corner = sys.corner().iter().map(|x| f * x).collect();
            BorderedSystem::new(core, cols, rows, corner).unwrap()
        };
        prop_assert_eq!(scale(alpha).factorize().det_sign(), s0);
        let flipped = if sys.dim().is_multiple_of(2) { s0 } else { -s0 };
        prop_assert_eq!(scale(-alpha).factorize().det_sign(), flipped);
    }

    #[test]
    fn matvec_matches_dense(
        size in 1usize..30,
        vals in prop::collection::vec(-2.0f64..2.0, 50),
        v in prop::collection::vec(-1.0f64..1.0, 30),
    ) {
        let m = band(size, &[0, 1, 5], &vals);
        let a = DMatrix::from_row_slice(size, size, &m.to_dense());
        prop_assert_eq!(a.clone(), a.transpose());
        let x = &v[..size];
        let got = m.matvec(x).unwrap();
        let want = a * DVector::from_column_slice(x);
        for (g, w) in got.iter().zip(want.iter()) {
            prop_assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn gershgorin_bounds_spectrum_and_eigen_reconstructs(
        size in 1usize..25,
        vals in prop::collection::vec(-2.0f64..2.0, 50),
    ) {
        let m = band(size, &[0, 1, 4], &vals);
        let eig = sym_eigen_full(&m).unwrap();
        let rho = m.gershgorin_radius();
        let a = DMatrix::from_row_slice(size, size, &m.to_dense());
        let mut reference: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (k, (&mu, &r)) in eig.eigenvalues().iter().zip(&reference).enumerate() {
            prop_assert!(mu.abs() <= rho * (1.0 + 1e-12));
            prop_assert!((mu - r).abs() <= 1e-10 * rho.max(1.0));
            let v = DVector::from_column_slice(eig.eigenvector(k));
            prop_assert!(((&a * &v) - &v * mu).amax() <= 1e-10 * rho.max(1.0));
            prop_assert!((v.norm() - 1.0).abs() <= 1e-12);
        }
        prop_assert!(eig.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn laplacian_spectrum_closed_form_1d() {
    let n = 40;
    let spec = flat_line(n);
    let grid = build_grid(&spec).unwrap();
    let h = grid.steps()[0];
    let eig = sym_eigen_full(&build_operator(&spec, &grid)).unwrap();
    for (k, mu) in eig.eigenvalues().iter().enumerate() {
        let exact =
            (1.0 - ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos()) / (h * h);
        assert!((mu - exact).abs() <= 1e-10 * exact, "{mu} vs {exact}");
    }
}

#[test]
fn laplacian_spectrum_closed_form_2d() {
    let (m, n) = (5, 7);
    let mut spec = ProblemSpec::rectangle(0.0, 1.0, 0.0, 2.0, m, n, 0.0);
    spec.potential = Potential::Tabulated(vec![0.0; m * n]);
    let grid = build_grid(&spec).unwrap();
    let (h1, h2) = (grid.steps()[0], grid.steps()[1]);
    let pi = std::f64::consts::PI;
    let mut exact = Vec::new();
    for i in 1..=m {
        for j in 1..=n {
            exact.push(
                (1.0 - (i as f64 * pi / (m + 1) as f64).cos()) / (h1 * h1)
                    + (1.0 - (j as f64 * pi / (n + 1) as f64).cos()) / (h2 * h2),
            );
        }
    }
    exact.sort_by(f64::total_cmp);
    let eig = sym_eigen_full(&build_operator(&spec, &grid)).unwrap();
    for (mu, e) in eig.eigenvalues().iter().zip(&exact) {
        assert!((mu - e).abs() <= 1e-10 * e, "{mu} vs {e}");
    }
}

#[test]
fn single_node_closed_form() {
    // n = 1: φ² = c and λ = d + βc exactly.
    let spec = ProblemSpec::line(-1.0, 1.0, 1, 3.0);
    let p = HomotopyProblem::new(
        spec,
        &HomotopyOptions {
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let s0 = p.initial_states(&[1]).unwrap().remove(0);
    let r = trace_path(&p, 1, &s0, &TraceConfig::default());
    assert!(r.outcome.is_converged());
    let c = p.norm_const();
    let d = p.operator().main_diagonal()[0];
    let e = r.eigenpair.unwrap();
    assert!((e.lambda - (d + 3.0 * c)).abs() <= 1e-12 * e.lambda);
    assert!((e.phi[0] - c.sqrt()).abs() <= 1e-12 * c.sqrt());
}

#[test]
fn start_tangent_gives_rayleigh_derivative() {
    for beta in [0.0, 2.5] {
        let p = HomotopyProblem::new(
            ProblemSpec::line(-2.0, 2.0, 30, beta),
            &HomotopyOptions::default(),
        )
        .unwrap();
        for s in p.initial_states(&[1, 2, 5]).unwrap() {
            let tg = tangent_at(&p, &s, None).unwrap();
            assert!(tg.dot_t > 0.0);
            let c = p.norm_const();
            let a_phi = p.start_matrix().matvec(&s.phi).unwrap();
            let phi_a_phi: f64 = s.phi.iter().zip(&a_phi).map(|(x, u)| x * u).sum();
            let quartic: f64 = s.phi.iter().map(|x| x.powi(4)).sum();
            let expect = (beta * quartic - phi_a_phi) / c;
            let got = tg.dot_lambda / tg.dot_t;
            assert!(
                (got - expect).abs() <= 1e-8 * expect.abs().max(1.0),
                "{got} vs {expect}"
            );
        }
    }
}

#[test]
fn corrector_converges_quadratically() {
    let p = HomotopyProblem::new(
        ProblemSpec::line(-2.0, 2.0, 50, 1.0),
        &HomotopyOptions::default(),
    )
    .unwrap();
    let s0 = p.initial_states(&[2]).unwrap().remove(0);
    let r = trace_path(&p, 2, &s0, &TraceConfig::default());
    let e = r.eigenpair.unwrap();
    let mut start = State {
        phi: e.phi.clone(),
        lambda: e.lambda * 1.01,
        t: 1.0,
    };
    for (k, x) in start.phi.iter_mut().enumerate() {
        *x *= 1.0 + 0.01 * ((k % 5) as f64 - 2.0);
    }
    let cfg = TraceConfig {
        newton_tol: 1e-13,
        ..Default::default()
    };
    let (fin, stats) = correct(&p, &start, Hyperplane::FixedT, &cfg).unwrap();
    assert!((fin.lambda - e.lambda).abs() <= 1e-10 * e.lambda);
    let res = &stats.residuals;
    assert!(res.len() >= 3 && res.len() <= 8, "{res:?}");
    // Once in the asymptotic range, each step roughly squares the error.
    let k = res.iter().position(|&r| r < 1e-2).unwrap();
    for w in res[k..].windows(2) {
        if w[1] > 1e-11 {
            assert!(w[1] <= 50.0 * w[0] * w[0], "{res:?}");
        }
    }
}

#[test]
fn endgame_lands_exactly_on_target() {
    let p = HomotopyProblem::new(
        ProblemSpec::rectangle(0.0, 1.0, 0.0, 1.0, 6, 6, 5.0),
        &HomotopyOptions::default(),
    )
    .unwrap();
    let cfg = TraceConfig {
        ds_max: 2.0,
        ..Default::default()
    };
    for s in p.initial_states(&[1, 2, 3]).unwrap() {
        let r = trace_path(&p, 1, &s, &cfg);
        assert!(r.outcome.is_converged(), "{:?}", r.outcome);
        assert_eq!(r.samples.last().unwrap().t, 1.0);
        let e = r.eigenpair.unwrap();
        let res = target_residual(p.operator(), p.beta(), p.norm_const(), &e.phi, e.lambda);
        assert_eq!(res, e.residual);
        assert!(res <= cfg.newton_tol);
    }
}

#[test]
fn tracing_is_deterministic() {
    let spec = ProblemSpec::line(-2.0, 2.0, 60, 4.0);
    let opts = HomotopyOptions {
        seed: 11,
        ..Default::default()
    };
    let a = HomotopyProblem::new(spec.clone(), &opts).unwrap();
    let b = HomotopyProblem::new(spec, &opts).unwrap();
    assert_eq!(a.start_matrix(), b.start_matrix());
    let s = a.initial_states(&[3]).unwrap().remove(0);
    let ra = trace_path(&a, 3, &s, &TraceConfig::default());
    let rb = trace_path(&b, 3, &s, &TraceConfig::default());
    assert_eq!(ra.samples, rb.samples);
    assert_eq!(ra.eigenpair, rb.eigenpair);
}
