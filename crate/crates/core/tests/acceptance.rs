//! Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

mod support;

use std::time::Instant;

use lqconic_core::analyzers::{
    bounded_real_test, dri_cloud, hinf_norm_bisection, passivity_test, solve_lqr, solve_stoch_lqr,
    AnalyzerOptions, DriCloudOptions, OptimalValue, ScalarPreset,
};
use lqconic_core::covariance::{
    closed_loop_simulate, descriptor_residual, deterministic_covariance, monte_carlo_cost,
    primal_objective, Gain,
};
use lqconic_core::dlmi::{assemble_m, extremal_factorization, lure_residuals};
use lqconic_core::model::{
    apply_a_adj, apply_a_op, apply_e, apply_e_adj, assemble_quadform, CostData, MatrixFn,
    ProblemSpec, QuadForm, StateSpace, TimeGrid, Variant,
};
use lqconic_core::riccati::{
    loewner_margins, solve_dre_final, solve_lyapunov_final, DreOptions, RiccatiData,
};
use lqconic_core::symmat::{eps_rank, nuclear_norm, trace_duality_maximizer, trace_inner, SymMat};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use support::{report, rng, uniform};

/// Runs `body`, reports its verdict and panics on failure.
fn criterion(id: u32, name: &str, body: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome =
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(body)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => report(&format!(
            "criterion {id:>2} PASS  {name} [{secs:.2}s] {detail}"
        )),
        Err(detail) => report(&format!(
            "criterion {id:>2} FAIL  {name} [{secs:.2}s] {detail}"
        )),
    }
    if let Err(detail) = outcome {
        panic!("criterion {id} ({name}) failed: {detail}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Debug>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| format!("{e:?}"))
}

#[test]
fn criterion_01_dri_cloud_maximality() {
    criterion(1, "DRI cloud lies below the DRE extremal", || {
        let start = Instant::now();
        let grid = ok(TimeGrid::new(ScalarPreset::HORIZON, 512))?;
        let mut parts = Vec::new();
        for preset in ScalarPreset::ALL {
            let opts = DriCloudOptions {
                n_samples: 100,
                switch_points: 10,
                seed: 1,
                ..DriCloudOptions::default()
            };
            let r = ok(dri_cloud(&preset.data(), &SymMat::zeros(1), grid, &opts))?;
            let escaped = r.samples.iter().filter(|s| s.solution.escaped).count();
            ensure(r.maximal, || {
                format!(
                    "{}: {} violations, worst margin {:e}",
                    preset.name(),
                    r.violations,
                    r.worst_margin
                )
            })?;
            parts.push(format!(
                "{} margin {:.1e} dre_escape={} dri_escapes={escaped}",
                preset.name(),
                r.worst_margin,
                r.extremal.escaped
            ));
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
        Ok(parts.join("; "))
    });
}

#[test]
fn criterion_02_closed_form_dre() {
    criterion(2, "closed-form tanh solution and tan escape", || {
        let grid = ok(TimeGrid::new(1.0, 512))?;
        let data = ok(RiccatiData::from_cost(
            &StateSpace::scalar(0.0, 1.0, 0.0, 0.0),
            &CostData::scalar(1.0, 0.0, 1.0),
        ))?;
        let sol = ok(solve_dre_final(
            &data,
            &SymMat::zeros(1),
            grid,
            DreOptions::default(),
        ))?;
        let err = sol
            .lambda
            .iter()
            .map(|(_, t, l)| (l.get(0, 0) - (1.0 - t).tanh()).abs())
            .fold(0.0, f64::max);
        ensure(err <= 1e-8, || format!("max error {err:e}"))?;

        let grid = ok(TimeGrid::new(2.0, 512))?;
        let data = ok(RiccatiData::from_cost(
            &StateSpace::scalar(0.0, 1.0, 0.0, 0.0),
            &CostData::scalar(-1.0, 0.0, 1.0),
        ))?;
        let sol = ok(solve_dre_final(
            &data,
            &SymMat::zeros(1),
            grid,
            DreOptions::default(),
        ))?;
        let want = 2.0 - std::f64::consts::FRAC_PI_2;
        let te = sol.escape_time.ok_or("no escape reported")?;
        let steps_off = (te - want).abs() / grid.step();
        ensure(steps_off <= 2.0, || {
            format!("escape at {te}, {steps_off:.2} steps off")
        })?;
        Ok(format!(
            "tanh error {err:.1e}; escape {steps_off:.2} steps from 2-pi/2"
        ))
    });
}

#[test]
fn criterion_03_zero_duality_gap() {
    criterion(3, "zero duality gap with second-order shrink", || {
        let mut r = rng(303);
        let mut worst_rel = 0.0_f64;
        let mut min_ratio = f64::INFINITY;
        let opts = AnalyzerOptions::default();
        for i in 0..20 {
            let n = 1 + i % 3;
            let m = 1 + (i / 3) % 2;
            let spec = support::random_lqr(&mut r, n, m, 1.0, 200);
            let gap = |steps: usize| -> Result<(f64, f64), String> {
                let s = spec.with_grid(ok(TimeGrid::new(1.0, steps))?);
                let cert = ok(solve_lqr(&s, &opts))?;
                let dual = cert.optimal_value.finite().ok_or("infinite value")?;
                // primal recomputed from scratch rather than read from the certificate
                let x_i = s.initial_state();
                let gain = cert.gain.as_ref().ok_or("no gain")?;
                let cl = ok(closed_loop_simulate(&s.sys, gain, &x_i, s.grid))?;
                let qf = ok(assemble_quadform(&s))?;
                let primal = ok(primal_objective(&ok(deterministic_covariance(&cl))?, &qf))?;
                let dual_direct =
                    (x_i.transpose() * cert.lambda.get(0).unwrap().as_matrix() * &x_i)[(0, 0)];
                ensure(
                    (dual - dual_direct).abs() < 1e-14 * (1.0 + dual.abs()),
                    || "dual mismatch".into(),
                )?;
                Ok(((primal - dual).abs(), dual))
            };
            let (g200, dual) = gap(200)?;
            let (g400, _) = gap(400)?;
            let tol = (1e-3 * dual.abs()).max(1e-6);
            ensure(g200 <= tol, || {
                format!("instance {i}: gap {g200:e} > {tol:e}")
            })?;
            let ratio = g200 / g400;
            ensure(ratio >= 4.0, || {
                format!("instance {i}: shrink ratio {ratio:.3} (gaps {g200:e}, {g400:e})")
            })?;
            worst_rel = worst_rel.max(g200 / tol);
            min_ratio = min_ratio.min(ratio);
        }
        Ok(format!(
            "worst gap/tol {worst_rel:.1e}, min shrink ratio {min_ratio:.2}"
        ))
    });
}

#[test]
fn criterion_04_dense_qp_oracle() {
    criterion(4, "LQR value matches the discretized QP", || {
        let mut r = rng(404);
        let mut worst = 0.0_f64;
        for i in 0..10 {
            let n = 1 + i % 3;
            let m = 1 + i % 2;
            let spec = support::random_lqr(&mut r, n, m, 1.0, 50);
            let cert = ok(solve_lqr(&spec, &AnalyzerOptions::default()))?;
            let value = cert.optimal_value.finite().ok_or("infinite value")?;
            let (a, b, q, x_i) = support::lqr_parts(&spec);
            let oracle = support::zoh_quadratic(&a, &b, &q, &x_i, 1.0, 50).minimum();
            let rel = (value - oracle).abs() / oracle.abs().max(1e-12);
            ensure(rel <= 0.01, || {
                format!("instance {i}: {value} vs oracle {oracle}")
            })?;
            worst = worst.max(rel);
        }
        Ok(format!("worst relative deviation {worst:.1e}"))
    });
}

#[test]
fn criterion_05_riccati_comparison() {
    criterion(5, "Q1 >= Q2 implies Lambda1 >= Lambda2", || {
        let mut r = rng(505);
        let grid = ok(TimeGrid::new(1.0, 256))?;
        let mut worst = f64::INFINITY;
        for i in 0..50 {
            let n = 1 + i % 3;
            let m = 1 + i % 2;
            let a = uniform(&mut r, n, n);
            let b = uniform(&mut r, n, m);
            let g = uniform(&mut r, m, m);
            let rr = SymMat::gram(&(&g + DMatrix::identity(m, m) * 1.5));
            let nn = uniform(&mut r, n, m) * 0.5;
            let q2 = ok(SymMat::symmetrize(&uniform(&mut r, n, n)))?;
            let d = uniform(&mut r, n, n) * 0.7;
            let q1 = &q2 + &SymMat::gram(&d);
            let lf = ok(SymMat::symmetrize(&(uniform(&mut r, n, n) * 0.3)))?;
            let sys = StateSpace::without_output(a, b);
            let solve = |q: SymMat| -> Result<_, String> {
                let data = ok(RiccatiData::from_cost(
                    &sys,
                    &CostData::new(q, nn.clone(), rr.clone()),
                ))?;
                ok(solve_dre_final(&data, &lf, grid, DreOptions::default()))
            };
            let s1 = solve(q1)?;
            let s2 = solve(q2)?;
            let c = ok(loewner_margins(&s1.lambda, &s2.lambda))?;
            ensure(c.shared_nodes > 0, || format!("pair {i}: no shared nodes"))?;
            ensure(c.min_eig_a_minus_b >= -1e-8, || {
                format!("pair {i}: min eig {:e}", c.min_eig_a_minus_b)
            })?;
            worst = worst.min(c.min_eig_a_minus_b);
        }
        Ok(format!("worst min eig of difference {worst:.1e}"))
    });
}

#[test]
fn criterion_06_rank_and_factorization() {
    criterion(6, "extremal DLMI has rank m and factors as UU^T", || {
        let mut r = rng(606);
        let grid = ok(TimeGrid::new(1.0, 256))?;
        let mut checked = 0;
        let mut worst_fact = 0.0_f64;
        let mut worst_lure = 0.0_f64;
        for i in 0..30 {
            let n = 1 + i % 3;
            let m = 1 + i % 2;
            let a = uniform(&mut r, n, n);
            let b = uniform(&mut r, n, m);
            let g = uniform(&mut r, m, m);
            let rr = SymMat::gram(&(&g + DMatrix::identity(m, m) * 1.5));
            // indefinite Q: some extremals escape and are skipped
            let q = ok(SymMat::symmetrize(&uniform(&mut r, n, n)))?;
            let nn = uniform(&mut r, n, m) * 0.5;
            let cost = CostData::new(q, nn, rr.clone());
            let sys = StateSpace::without_output(a, b);
            let qf = ok(QuadForm::from_cost(&cost))?;
            let data = ok(RiccatiData::from_problem(&sys, &qf))?;
            let sol = ok(solve_dre_final(
                &data,
                &SymMat::zeros(n),
                grid,
                DreOptions::default(),
            ))?;
            if sol.escaped {
                continue;
            }
            checked += 1;
            let rank_r = eps_rank(&rr, 1e-9);
            for (_, t, l) in sol.lambda.iter() {
                let dot = data.derivative(t, l, None);
                let mm = ok(assemble_m(l, &dot, &sys, &qf, t))?;
                let rank = eps_rank(&mm, 1e-9);
                ensure(rank == rank_r, || {
                    format!("instance {i} t={t}: rank {rank} vs {rank_r}")
                })?;
                let f = ok(extremal_factorization(l, &dot, &sys, &qf, t, 1e-8))?;
                let fact = (&f.reconstruct() - &mm).norm_max() / (1.0 + mm.norm_max());
                let u1 = f.u.rows(0, n).into_owned();
                let u2 = f.u.rows(n, m).into_owned();
                let lure = ok(lure_residuals(l, &dot, &u1, &u2, &sys, &qf, t))?.max();
                ensure(fact <= 1e-8 && lure <= 1e-8, || {
                    format!("instance {i} t={t}: factor {fact:e}, lure {lure:e}")
                })?;
                worst_fact = worst_fact.max(fact);
                worst_lure = worst_lure.max(lure);
            }
        }
        ensure(checked >= 10, || {
            format!("only {checked} non-escaping instances")
        })?;
        Ok(format!("{checked} extremals; factor residual {worst_fact:.1e}, Lur'e residual {worst_lure:.1e}"))
    });
}

#[test]
fn criterion_07_bounded_real() {
    criterion(7, "finite-horizon induced norm of 1/(s+1)", || {
        let sys = StateSpace::scalar(-1.0, 1.0, 1.0, 0.0);
        let grid = ok(TimeGrid::new(10.0, 512))?;
        let opts = AnalyzerOptions::default();
        let norm = ok(hinf_norm_bisection(&sys, grid, 1e-6, &opts))?;
        let oracle = support::induced_norm_oracle(-1.0, 1.0, 1.0, 10.0, 1000);
        let rel = (norm.gamma_star - oracle).abs() / oracle;
        ensure(rel <= 0.02, || {
            format!("gamma* {} vs oracle {oracle}", norm.gamma_star)
        })?;
        let (lo, hi) = norm.bracket;
        let at_hi = ok(bounded_real_test(&sys, hi, grid, &opts))?;
        let at_lo = ok(bounded_real_test(&sys, lo, grid, &opts))?;
        ensure(at_hi.passes && !at_lo.passes, || {
            format!("verdicts at bracket ({lo}, {hi}) do not flip")
        })?;
        let mut worst_sign = f64::NEG_INFINITY;
        for gamma in [hi, 1.5, 2.0, 10.0] {
            let out = ok(bounded_real_test(&sys, gamma, grid, &opts))?;
            ensure(out.passes, || format!("gamma {gamma} fails"))?;
            let max_eig = out.certificate.lambda_max_eig.ok_or("no sign record")?;
            ensure(max_eig <= 1e-9, || {
                format!("gamma {gamma}: max eig {max_eig:e}")
            })?;
            worst_sign = worst_sign.max(max_eig);
        }
        Ok(format!(
            "gamma* {:.6} vs oracle {oracle:.6} ({rel:.1e} rel), bracket width {:.1e}, max eig {worst_sign:.1e}",
            norm.gamma_star,
            hi - lo
        ))
    });
}

#[test]
fn criterion_08_passivity() {
    criterion(8, "passivity verdicts agree with the QP oracle", || {
        let opts = AnalyzerOptions::default();
        let cases = [
            ("positive-real", (-1.0, 1.0, 1.0, 1.0), true),
            ("adversarial", (-1.0, 1.0, -5.0, 0.01), false),
        ];
        let mut parts = Vec::new();
        for (name, (a, b, c, d), expect) in cases {
            let sys = StateSpace::scalar(a, b, c, d);
            let grid = ok(TimeGrid::new(10.0, 512))?;
            let out = ok(passivity_test(&sys, grid, &opts))?;
            let oracle = support::passivity_oracle((a, b, c, d), 10.0, 400);
            let oracle_passive = oracle >= 0.0;
            ensure(out.passes == expect && oracle_passive == expect, || {
                format!("{name}: analyzer {} oracle min eig {oracle:e}", out.passes)
            })?;
            if expect {
                let max_eig = out.certificate.lambda_max_eig.ok_or("no sign record")?;
                ensure(max_eig <= 1e-9, || {
                    format!("{name}: Lambda max eig {max_eig:e}")
                })?;
            } else {
                ensure(
                    matches!(
                        out.certificate.optimal_value,
                        OptimalValue::MinusInfinity { .. }
                    ),
                    || format!("{name}: no escape reported"),
                )?;
            }
            parts.push(format!("{name} passes={} oracle {oracle:.3e}", out.passes));
        }
        Ok(parts.join("; "))
    });
}

#[test]
fn criterion_09_stochastic_consistency() {
    criterion(
        9,
        "stochastic LQR value, Monte Carlo and gain invariance",
        || {
            let sys = StateSpace::scalar(0.0, 1.0, 0.0, 0.0);
            let grid = ok(TimeGrid::new(1.0, 512))?;
            let cost = CostData::scalar(1.0, 0.0, 1.0);
            let w = MatrixFn::Constant(dmatrix![1.0]);
            let spec = ProblemSpec::new(
                sys.clone(),
                grid,
                Variant::StochLqr {
                    cost: cost.clone(),
                    x_i_cov: SymMat::zeros(1),
                    w: w.clone(),
                },
            );
            let opts = AnalyzerOptions::default();
            let cert = ok(solve_stoch_lqr(&spec, &opts))?;
            let value = cert.optimal_value.finite().ok_or("infinite value")?;
            let want = 1.0_f64.cosh().ln();
            ensure((value - want).abs() <= 1e-6, || {
                format!("value {value} vs {want}")
            })?;

            let gain = cert.gain.as_ref().ok_or("no gain")?;
            let qf = ok(assemble_quadform(&spec))?;
            let mc = ok(monte_carlo_cost(
                &sys,
                gain,
                &qf,
                &w,
                &SymMat::zeros(1),
                grid,
                10_000,
                99,
            ))?;
            let z = (mc.mean - value).abs() / mc.stderr;
            ensure(z <= 4.0, || {
                format!("MC mean {} stderr {} ({z:.2} sigma)", mc.mean, mc.stderr)
            })?;

            let det = ok(solve_lqr(
                &ProblemSpec::new(
                    sys,
                    grid,
                    Variant::Lqr {
                        cost,
                        x_i: dvector![1.0],
                    },
                ),
                &opts,
            ))?;
            let det_gain = det.gain.as_ref().ok_or("no gain")?;
            let diff = gain
                .samples()
                .iter()
                .zip(det_gain.samples())
                .map(|(a, b)| (a - b).amax())
                .fold(0.0, f64::max);
            ensure(diff <= 1e-12, || format!("gain difference {diff:e}"))?;
            Ok(format!(
                "value error {:.1e}; MC {:.4} +- {:.4} ({z:.2} sigma); gain diff {diff:.1e}",
                (value - want).abs(),
                mc.mean,
                mc.stderr
            ))
        },
    );
}

fn deterministic_runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn sym_strategy(n: usize) -> impl Strategy<Value = SymMat> {
    proptest::collection::vec(-2.0..2.0f64, n * n)
        .prop_map(move |v| SymMat::symmetrize(&DMatrix::from_vec(n, n, v)).unwrap())
}

fn mat_strategy(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-2.0..2.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

fn run_suite<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<String, String> {
    deterministic_runner(cases)
        .run(&strategy, test)
        .map(|_| format!("{name} ({cases})"))
        .map_err(|e| format!("{name}: {e}"))
}

#[test]
fn criterion_10_structural_invariants() {
    criterion(10, "structural invariant suites", || {
        let start = Instant::now();
        let mut done = Vec::new();

        // ⟨ℰ(S) , Y⟩ = ⟨S, ℰ*(Y)⟩ and ⟨𝒜(S), Y⟩ = ⟨S, 𝒜*(Y)⟩
        done.push(run_suite(
            "adjointness",
            200,
            (
                mat_strategy(3, 3),
                mat_strategy(3, 2),
                sym_strategy(5),
                sym_strategy(3),
            ),
            |(a, b, s, y)| {
                let sys = StateSpace::without_output(a, b);
                let lhs_e = trace_inner(&apply_e(&s, 3).unwrap(), &y).unwrap();
                let rhs_e = trace_inner(&s, &apply_e_adj(&y, 2)).unwrap();
                let lhs_a = trace_inner(&apply_a_op(&sys, &s, 0.0).unwrap(), &y).unwrap();
                let rhs_a = trace_inner(&s, &apply_a_adj(&sys, &y, 0.0).unwrap()).unwrap();
                let scale = 1.0 + s.norm_max() * y.norm_max();
                prop_assert!((lhs_e - rhs_e).abs() <= 1e-12 * scale);
                prop_assert!((lhs_a - rhs_a).abs() <= 1e-12 * scale * 10.0);
                Ok(())
            },
        )?);

        // max over ‖X‖_* ≤ 1 of ⟨H, X⟩ equals σ_max(H), attained by the maximizer
        done.push(run_suite(
            "trace-duality tightness",
            200,
            sym_strategy(4),
            |h| {
                prop_assume!(h.norm_max() > 1e-6);
                let x = trace_duality_maximizer(&h).unwrap();
                let sigma = h
                    .eigenvalues()
                    .iter()
                    .fold(0.0_f64, |acc, v| acc.max(v.abs()));
                prop_assert!((nuclear_norm(&x) - 1.0).abs() <= 1e-12);
                prop_assert!((trace_inner(&h, &x).unwrap() - sigma).abs() <= 1e-12 * (1.0 + sigma));
                Ok(())
            },
        )?);

        // H ⪰ 0, X(T) ⪰ 0 ⇒ X(t) ⪰ 0 for −Ẋ = FᵀX + XF + H
        let grid = TimeGrid::new(1.0, 64).unwrap();
        done.push(run_suite(
            "Lyapunov sign law",
            48,
            (mat_strategy(3, 3), mat_strategy(3, 3), mat_strategy(3, 3)),
            move |(f, g, xt)| {
                let h = SymMat::gram(&g);
                let x_t = SymMat::gram(&xt);
                let x = solve_lyapunov_final(
                    &MatrixFn::Constant(f),
                    &MatrixFn::Constant(h.into_matrix()),
                    &x_t,
                    grid,
                )
                .unwrap();
                for s in x.samples() {
                    prop_assert!(s.min_eig() >= -1e-9 * (1.0 + s.norm_max()));
                }
                Ok(())
            },
        )?);

        // any gain: primal ≥ dual − tol
        let grid = TimeGrid::new(1.0, 128).unwrap();
        done.push(run_suite(
            "weak duality on arbitrary gains",
            48,
            (
                mat_strategy(2, 2),
                mat_strategy(2, 1),
                mat_strategy(3, 3),
                mat_strategy(1, 2),
            ),
            move |(a, b, l, k)| {
                let mut full = &l * l.transpose();
                full[(2, 2)] += 0.5;
                let sys = StateSpace::without_output(a, b);
                let qf = QuadForm::constant(2, 1, SymMat::symmetrize(&full).unwrap()).unwrap();
                let data = RiccatiData::from_problem(&sys, &qf).unwrap();
                let sol =
                    solve_dre_final(&data, &SymMat::zeros(2), grid, DreOptions::default()).unwrap();
                let x_i = dvector![1.0, -0.5];
                let dual =
                    (x_i.transpose() * sol.lambda.get(0).unwrap().as_matrix() * &x_i)[(0, 0)];
                let cl = closed_loop_simulate(&sys, &Gain::constant(grid, k), &x_i, grid).unwrap();
                let primal =
                    primal_objective(&deterministic_covariance(&cl).unwrap(), &qf).unwrap();
                prop_assert!(
                    primal >= dual - 1e-6 * (1.0 + dual.abs()),
                    "{} < {}",
                    primal,
                    dual
                );
                Ok(())
            },
        )?);

        // centered-difference descriptor residual falls ≈ 4× per halving of h
        done.push(run_suite(
            "descriptor residual O(h^2)",
            24,
            (mat_strategy(2, 2), mat_strategy(2, 1), mat_strategy(1, 2)),
            |(a, b, k)| {
                let sys = StateSpace::without_output(a, b);
                let x_i = dvector![1.0, 0.5];
                let res = |steps| {
                    let grid = TimeGrid::new(1.0, steps).unwrap();
                    let cl =
                        closed_loop_simulate(&sys, &Gain::constant(grid, k.clone()), &x_i, grid)
                            .unwrap();
                    descriptor_residual(&deterministic_covariance(&cl).unwrap(), &sys, None)
                        .unwrap()
                };
                let (r1, r2) = (res(100), res(200));
                prop_assume!(r1 > 1e-9);
                let ratio = r1 / r2;
                prop_assert!(ratio > 3.0 && ratio < 5.0, "ratio {}", ratio);
                Ok(())
            },
        )?);

        // deterministic covariance rank ≤ 1 at every node
        let grid = TimeGrid::new(1.0, 64).unwrap();
        done.push(run_suite(
            "deterministic covariance rank <= 1",
            64,
            (
                mat_strategy(3, 3),
                mat_strategy(3, 2),
                mat_strategy(2, 3),
                mat_strategy(3, 1),
            ),
            move |(a, b, k, x)| {
                let sys = StateSpace::without_output(a, b);
                let x_i = DVector::from_column_slice(x.as_slice());
                let cl = closed_loop_simulate(&sys, &Gain::constant(grid, k), &x_i, grid).unwrap();
                let cov = deterministic_covariance(&cl).unwrap();
                prop_assert!(cov.max_rank(1e-9) <= 1);
                Ok(())
            },
        )?);

        let secs = start.elapsed().as_secs_f64();
        ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
        Ok(done.join(", "))
    });
}
