//! Acceptance criteria, one test each. Run with
//! `cargo test --release -p mmo-decomp --test acceptance -- --nocapture`
//! to see the PASS/FAIL line of every criterion.

use std::process::Command;
use std::time::{Duration, Instant};

use mmo_core::hybrid::{
    canard_count, detect_chaos, equilibrium_of_sh, run_hybrid, CanardCount, FoldedNodeNF, GlobalReturnModel, HybridOptions, LocalModel,
    SectionPair, SingularHopfNF,
};
use mmo_core::integrator::{solve_adaptive, Direction, EventSpec, OdeProblem, SolverOptions};
use mmo_core::io::AnalysisReport;
use mmo_core::koper::{apply_symmetry, cubic, full_vector_field, KoperParams, LAMBDA_FSN, LAMBDA_NODE_FOCUS};
use mmo_core::map_fit::{fit_piecewise, simpson};
use mmo_core::mmo_analysis::{compose_and_eval, fixed_points, ReturnMapModel};
use mmo_core::singular_maps::{compute_map, m_a_plus_point, m_j_point, MapId, MapOptions};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

fn report(n: u32, name: &str, pass: bool, detail: impl std::fmt::Display, elapsed: Duration) {
    println!(
        "criterion {n:>2} [{name}]: {} ({detail}; {:.2} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
}

const EPS: f64 = 0.01;

/// Compare a signature with its expected form: same groups and `L` values,
/// `s` within `s_tol(expected s)`.
fn signature_matches(observed: Option<&str>, expected: &str, s_tol: impl Fn(u32) -> u32) -> bool {
    let parse = |t: &str| -> Vec<(u32, u32)> {
        t.split_whitespace()
            .map(|g| {
                let (l, s) = g.split_once('^').unwrap();
                (l.parse().unwrap(), s.parse().unwrap())
            })
            .collect()
    };
    let Some(obs) = observed else { return false };
    let (o, e) = (parse(obs), parse(expected));
    o.len() == e.len() && o.iter().zip(&e).all(|(a, b)| a.0 == b.0 && a.1.abs_diff(b.1) <= s_tol(b.1))
}

fn table(local: LocalModel, rows: &[(f64, &str)], n_returns: usize) -> Vec<(f64, Option<String>)> {
    rows.par_iter()
        .map(|&(m0, _)| {
            let run = run_hybrid(
                &local,
                &SectionPair::default(),
                &GlobalReturnModel::quadratic(0.0, 0.1, m0),
                (EPS, 0.15),
                n_returns,
                &HybridOptions::default(),
            )
            .unwrap();
            (m0, run.signature.canonical)
        })
        .collect()
}

#[test]
fn criterion_01_lambda_r() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_mmo-decomp"))
        .args(["--quiet", "--no-timestamp", "mmo-analyze", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    let text = std::fs::read_to_string(dir.path().join("analysis.json")).unwrap();
    let r: AnalysisReport = serde_json::from_str(&text).unwrap();
    let l = r.lambda_r.unwrap();
    let elapsed = t.elapsed();
    let pass = status.success() && (l - (-6.7887)).abs() <= 0.02 && elapsed <= Duration::from_secs(300);
    report(1, "lambda_r", pass, format!("lambda_r = {l:.5}, direct {:.5}", r.lambda_r_direct.unwrap()), elapsed);
    assert!(pass);
}

#[test]
fn criterion_02_fit_error_bound() {
    let t = Instant::now();
    let width = LAMBDA_NODE_FOCUS - LAMBDA_FSN;
    let grid: Vec<f64> = (1..=21).map(|i| LAMBDA_FSN + width * i as f64 / 22.0).collect();
    let opts = MapOptions::default();
    let worst: Vec<(f64, MapId, f64)> = grid
        .par_iter()
        .flat_map_iter(|&lambda| {
            let p = KoperParams::singular(lambda, 0.1);
            MapId::ALL.into_iter().map(move |id| {
                let s = compute_map(id, &p, &opts).unwrap();
                let f = fit_piecewise(&s, id.model_degrees()).unwrap();
                (lambda, id, f.fit_report.e_linf)
            })
        })
        .collect();
    let max = worst.iter().max_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
    let elapsed = t.elapsed();
    let pass = max.2 <= 5e-2 && elapsed <= Duration::from_secs(600);
    report(
        2,
        "fit error bound",
        pass,
        format!("{} fits, max Linf {:.3e} ({} at lambda {:.4})", worst.len(), max.2, max.1.as_str(), max.0),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_03_folded_node_table() {
    let t = Instant::now();
    let rows = [(-0.015, "1^14"), (-0.01, "1^9"), (-0.005, "1^4"), (-0.0025, "1^2"), (-0.001, "2^1"), (0.0, "1^0")];
    let got = table(LocalModel::FoldedNode(FoldedNodeNF { eps: EPS, mu: 0.006 }), &rows, 80);
    let pass = rows
        .iter()
        .zip(&got)
        .all(|((_, e), (_, o))| signature_matches(o.as_deref(), e, |s| if s <= 2 { 1 } else { 0 }));
    let elapsed = t.elapsed();
    let shown: Vec<String> = got.iter().map(|(m, s)| format!("{m}->{}", s.as_deref().unwrap_or("aperiodic"))).collect();
    report(3, "folded-node table", pass && elapsed <= Duration::from_secs(120), shown.join(", "), elapsed);
    assert!(pass);
}

#[test]
fn criterion_04_singular_hopf_table() {
    let t = Instant::now();
    let rows = [(0.0, "1^0"), (0.01, "2^1"), (0.025, "1^3"), (0.05, "1^6"), (0.075, "1^9"), (0.1, "1^9")];
    let local = LocalModel::SingularHopf(SingularHopfNF {
        eps: EPS,
        nu: 0.01,
        a: 0.5,
        b: -1.0,
        c: 1.0,
    });
    let got = table(local, &rows, 80);
    let pass = rows.iter().zip(&got).all(|((_, e), (_, o))| signature_matches(o.as_deref(), e, |_| 1));
    let elapsed = t.elapsed();
    let shown: Vec<String> = got.iter().map(|(m, s)| format!("{m}->{}", s.as_deref().unwrap_or("aperiodic"))).collect();
    report(4, "singular-Hopf table", pass && elapsed <= Duration::from_secs(120), shown.join(", "), elapsed);
    assert!(pass);
}

#[test]
fn criterion_05_canard_count() {
    let t = Instant::now();
    let c = canard_count(0.006).unwrap();
    let pass = c
        == CanardCount {
            k: 82,
            n_canards: 84,
            max_saos: 83,
        };
    report(5, "canard count", pass, format!("{c:?}"), t.elapsed());
    assert!(pass);
}

#[test]
fn criterion_06_singular_hopf_equilibrium() {
    let t = Instant::now();
    let nf = SingularHopfNF {
        eps: EPS,
        nu: 0.01,
        a: 0.5,
        b: -1.0,
        c: 1.0,
    };
    let q = equilibrium_of_sh(&nf)[0];
    let expected = [-6.63729e-3, 4.40537e-5, -6.63729e-3];
    let mut d = [0.0; 3];
    LocalModel::SingularHopf(nf).rhs(&q, &mut d);
    let residual = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let pass = q.iter().zip(expected).all(|(a, b)| (a - b).abs() <= 1e-6) && residual <= 1e-10;
    report(6, "singular-Hopf equilibrium", pass, format!("q = {q:?}, residual {residual:.1e}"), t.elapsed());
    assert!(pass);
}

#[test]
fn criterion_07_funnel_regime() {
    let t = Instant::now();
    let opts = MapOptions::default();
    let model = |l: f64| ReturnMapModel::build(&KoperParams::singular(l, 0.1), &opts).unwrap();
    let before = model(-7.5).funnel_margin(2.0 * -7.5 + 6.0).unwrap().margin;
    let after_model = model(-6.5);
    let after = after_model.funnel_margin(2.0 * -6.5 + 6.0).unwrap().margin;
    let fps = fixed_points(&after_model.relaxation_return());
    let stable = fps.iter().find(|f| f.stable && f.derivative.abs() < 1.0);
    let pass = before > 0.0 && after < 0.0 && stable.is_some();
    report(
        7,
        "funnel regime",
        pass,
        format!("margin(-7.5) = {before:.4}, margin(-6.5) = {after:.4}, fixed point {stable:?}"),
        t.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_08_chaos() {
    let t = Instant::now();
    let local = LocalModel::SingularHopf(SingularHopfNF {
        eps: EPS,
        nu: 0.01,
        a: 0.5,
        b: -1.0,
        c: 1.0,
    });
    let run = run_hybrid(
        &local,
        &SectionPair::default(),
        &GlobalReturnModel::quadratic(3.0, 0.2, -0.8),
        (EPS, 0.15),
        500,
        &HybridOptions::default(),
    )
    .unwrap();
    let v = detect_chaos(&run.log, 20, 1e-6).unwrap();
    let pass = v.aperiodic && v.symbols.contains(&0) && v.symbols.contains(&1);
    report(
        8,
        "chaos",
        pass,
        format!("z period {:?}, SAO symbols {:?}", v.z_period, v.symbols),
        t.elapsed(),
    );
    assert!(pass);
}

/// Error of the Dormand-Prince solution of `y' = y cos t` at `t = 2`, with
/// the step pinned to `h` (tolerances loose enough that no step is rejected).
fn fixed_step_error(h: f64) -> f64 {
    let opts = SolverOptions {
        abs_tol: 1e6,
        rel_tol: 1e6,
        max_step: h,
        max_steps: 1_000_000,
        initial_step: Some(h),
    };
    let p = OdeProblem::new(|t: f64, y: &[f64], d: &mut [f64]| d[0] = y[0] * t.cos(), 0.0, vec![1.0]).with_options(opts);
    let sol = solve_adaptive(&p, 2.0, &[]).unwrap();
    (sol.trajectory.last_state()[0] - 2f64.sin().exp()).abs()
}

#[test]
fn criterion_09_numerical_kernels() {
    let t = Instant::now();
    let order = (fixed_step_error(0.1) / fixed_step_error(0.05)).log2();

    let z: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let cube: Vec<f64> = z.iter().map(|z| z * z * z).collect();
    let simpson_err = (simpson(&cube, 0.05).unwrap() - 0.25).abs();

    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let mut sym_err: f64 = 0.0;
    for _ in 0..1000 {
        let p = KoperParams {
            eps1: rng.gen_range(0.001..0.1),
            eps2: rng.gen_range(0.1..2.0),
            k: -10.0,
            lambda: rng.gen_range(-9.0..9.0),
            mu: 0.0,
        };
        let s = [rng.gen_range(-3.0..3.0), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)];
        let f = full_vector_field(s, &p).unwrap();
        let (ms, mp) = apply_symmetry(s, &p);
        let g = full_vector_field(ms, &mp).unwrap();
        for i in 0..3 {
            sym_err = sym_err.max((g[i] + f[i]).abs() / f[i].abs().max(1.0));
        }
    }
    let jumps = cubic(-2.0) == cubic(1.0) && cubic(2.0) == cubic(-1.0);
    let pass = order >= 4.0 && simpson_err <= 1e-14 && sym_err <= 1e-12 && jumps;
    report(
        9,
        "numerical kernels",
        pass,
        format!("RK order {order:.2}, Simpson cubic error {simpson_err:.1e}, symmetry error {sym_err:.1e}, jump identities {jumps}"),
        t.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_10_oracle_equivalence() {
    let t = Instant::now();
    let m = ReturnMapModel::build(&KoperParams::singular(-7.0, 0.1), &MapOptions::default()).unwrap();
    let g = m.global_map();
    let [lo, hi] = g.domain;
    let worst = (0..10)
        .map(|i| {
            let z = lo + (hi - lo) * i as f64 / 9.0;
            (compose_and_eval(&g, z).unwrap() - m.direct_global(z).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    let elapsed = t.elapsed();
    let pass = worst <= 6e-2 && elapsed <= Duration::from_secs(60);
    report(10, "oracle equivalence", pass, format!("max |fitted - direct| = {worst:.3e}"), elapsed);
    assert!(pass);
}

/// `z` where the full system, started on the critical manifold at `x0`,
/// crosses `{x = target}` in the given direction.
fn full_system_map(p: &KoperParams, x0: f64, z0: f64, target: f64, direction: Direction) -> f64 {
    let params = *p;
    let rhs = move |_t: f64, s: &[f64], d: &mut [f64]| d.copy_from_slice(&full_vector_field([s[0], s[1], s[2]], &params).unwrap());
    let problem = OdeProblem::new(rhs, 0.0, vec![x0, cubic(x0), z0]).with_options(SolverOptions::default().with_tol(1e-10));
    let sol = solve_adaptive(&problem, 50.0, &[EventSpec::section(0, target, direction)]).unwrap();
    assert_eq!(sol.terminated_by, Some(0));
    sol.trajectory.last_state()[2]
}

#[test]
fn eps_refinement_trend() {
    let t = Instant::now();
    let lambda = -7.0;
    let singular = KoperParams::singular(lambda, 0.1);
    let opts = MapOptions::default();
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    for &z in &[-8.9, -8.7, -8.5, -8.3, -8.1] {
        let dist = |eps1: f64| {
            let p = KoperParams { eps1, ..singular };
            // m_{a,+}: from L^{a,+} to L^mu
            let da = (full_system_map(&p, 2.0, z, 1.1, Direction::Falling) - m_a_plus_point(&singular, z, &opts).unwrap()).abs();
            // m_j: from F+ through both jumps; z is read mid-way through the second jump
            let dj = (full_system_map(&p, 1.0, z, 0.0, Direction::Rising) - m_j_point(&singular, z, &opts).unwrap()).abs();
            (da, dj)
        };
        let (a2, j2) = dist(1e-2);
        let (a3, j3) = dist(1e-3);
        ok &= a3 < a2 && j3 < j2;
        worst_ratio = worst_ratio.max(a3 / a2).max(j3 / j2);
    }
    println!(
        "eps refinement [trend]: {} (largest distance ratio eps=1e-3 / eps=1e-2: {worst_ratio:.3}; {:.2} s)",
        if ok { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64()
    );
    assert!(ok);
}
