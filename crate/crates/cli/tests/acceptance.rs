//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use so5_vortex::continuation::{bifurcation_direction, decay_radius, trace_branch, transition_order, uniqueness_probe};
use so5_vortex::diagnostics::{check_admissible, g_to_zero_scan, limit_check};
use so5_vortex::solver::{model_with_reference, solve, solve_normal_core};
use so5_vortex::spectral::{hessian_min_eig, threshold_from_core};
use so5_vortex::*;

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(n: usize, r_max: f64) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(n, r_max, Grading::Uniform).unwrap())
}

fn default_grid(kappa: Kappa) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::default_for_core(kappa.core_width()))
}

struct Solved {
    params: ModelParams,
    profile: Profile,
}

/// Converged AF and normal solutions over a spread of κ and g.
fn solution_set() -> Vec<Solved> {
    let mut out = Vec::new();
    let cases: [(Kappa, &[f64]); 4] = [
        (Kappa::Infinite, &[0.05, 0.1, 0.2, 0.3, 0.5]),
        (Kappa::Finite(1.0), &[0.05, 0.1, 0.3]),
        (Kappa::Finite(2.0), &[0.05, 0.1, 0.3]),
        (Kappa::Finite(20.0), &[0.05, 0.1, 0.2, 0.3]),
    ];
    for (kappa, gs) in cases {
        let grid = default_grid(kappa);
        for &g in gs {
            let params = ModelParams::new(kappa, 1, g).unwrap();
            let profile = solve(&params, &grid, &SolveOptions::with_seed(Seed::Perturbed(0.5))).unwrap();
            out.push(Solved { params, profile });
        }
    }
    out
}

/// `∫(S'/r)² r dr` cell by cell.
fn magnetic_integral(p: &Profile) -> f64 {
    let r = p.grid.r();
    (0..r.len() - 1)
        .map(|c| {
            let h = r[c + 1] - r[c];
            (p.s[c + 1] - p.s[c]).powi(2) / (h * 0.5 * (r[c] + r[c + 1]))
        })
        .sum()
}

fn threshold_cli() -> Outcome {
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_so5vortex"))
        .args(["threshold", "--kappa", "inf", "--d", "1", "--n", "4001", "--rmax", "40"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    if !out.status.success() {
        return Err(format!("exit {:?}", out.status.code()));
    }
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let g = doc["g_star"].as_f64().ok_or("no g_star")?;
    ensure(
        (0.2525..=0.2565).contains(&g) && elapsed < Duration::from_secs(30),
        format!("g* = {g:.10} in {:.2} s", elapsed.as_secs_f64()),
    )
}

fn normal_core_pohozaev() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (grid, tol) in [(uniform(4001, 40.0), 1e-3), (uniform(8001, 80.0), 1e-4)] {
        let params = ModelParams::new(Kappa::Infinite, 1, 0.5).unwrap();
        let core = solve_normal_core(&params, &grid, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let q: Vec<f64> = core.f.iter().map(|f| 0.5 * (1.0 - f * f).powi(2)).collect();
        let lhs = grid.integrate(&q).unwrap();
        let rel = (lhs - 0.5).abs() / 0.5;
        ok &= rel < tol;
        detail.push(format!("n={} R={}: rel {rel:.2e} (< {tol:e})", grid.n(), grid.r_max()));
    }
    ensure(ok, detail.join("; "))
}

fn all_solutions_pohozaev(set: &[Solved]) -> Outcome {
    let (mut worst, mut worst_mag) = (0.0_f64, f64::NEG_INFINITY);
    let mut bad = Vec::new();
    for s in set {
        let (model, _) = model_with_reference(&s.params, &s.profile.grid).unwrap();
        let rel = model.pohozaev(&s.profile).rel_err;
        worst = worst.max(rel);
        let mut pass = rel < 1e-3;
        if !s.params.kappa.is_infinite() {
            let excess = magnetic_integral(&s.profile) - 0.5 * (s.params.d as f64).powi(2);
            worst_mag = worst_mag.max(excess);
            pass &= excess <= 1e-3;
        }
        if !pass {
            bad.push(format!("kappa {} g {}", s.params.kappa, s.params.g));
        }
    }
    ensure(
        bad.is_empty(),
        format!(
            "{} solutions, worst rel_err {worst:.2e}, max of ∫(S'/r)² r dr − d²/2 = {worst_mag:.2e}{}",
            set.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; failing {bad:?}")
            }
        ),
    )
}

fn stability_dichotomy() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for kappa in [Kappa::Finite(2.0), Kappa::Finite(20.0), Kappa::Infinite] {
        let grid = default_grid(kappa);
        let base = ModelParams::new(kappa, 1, 1.0).unwrap();
        let core = solve_normal_core(&base, &grid, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let th = threshold_from_core(&base, core.clone()).map_err(|e| e.to_string())?;
        let mut lambdas = Vec::new();
        for dg in [-0.02, 0.02] {
            let params = base.with_g(th.g_star + dg).unwrap();
            let (model, _) = model_with_reference(&params, &grid).unwrap();
            let lambda = hessian_min_eig(&model, &core).map_err(|e| e.to_string())?.lambda;
            ok &= lambda.signum() == dg.signum();
            lambdas.push(lambda);
        }
        detail.push(format!(
            "kappa {kappa}: g* {:.6}, λ {:+.2e} / {:+.2e}",
            th.g_star, lambdas[0], lambdas[1]
        ));
    }
    ensure(ok, detail.join("; "))
}

/// The high-kappa branch on the domain the CLI uses by default.
fn high_kappa_branch() -> (continuation::Branch, Duration) {
    let spec = GridSpec::default().with_min_radius(decay_radius(Kappa::Infinite, 0.02));
    let grid = Arc::new(spec.build(1.0).unwrap());
    let t0 = Instant::now();
    let b = trace_branch(Kappa::Infinite, 1, &grid, 0.02, 40).unwrap();
    (b, t0.elapsed())
}

fn second_order_transition(b: &continuation::Branch, elapsed: Duration) -> Outcome {
    let fit = transition_order(b).map_err(|e| e.to_string())?;
    let traced = b.points.len() - 1;
    ensure(
        b.aborted.is_none()
            && traced == 40
            && (fit.exponent - 0.5).abs() < 0.1
            && fit.r2 > 0.99
            && elapsed < Duration::from_secs(300),
        format!(
            "{traced} points on n={} R={}, exponent {:.4}, r² {:.6}, {:.1} s{}",
            b.profiles[0].grid.n(),
            b.profiles[0].grid.r_max(),
            fit.exponent,
            fit.r2,
            elapsed.as_secs_f64(),
            b.aborted
                .as_deref()
                .map_or(String::new(), |a| format!(", aborted: {a}"))
        ),
    )
}

fn uniqueness() -> Outcome {
    let grid = uniform(4001, 40.0);
    let below = uniqueness_probe(Kappa::Infinite, 1, 0.1, &grid, 10, 17).map_err(|e| e.to_string())?;
    let above = uniqueness_probe(Kappa::Infinite, 1, 0.5, &grid, 10, 29).map_err(|e| e.to_string())?;
    let sup_above = above.sup_m.iter().copied().fold(0.0_f64, f64::max);
    ensure(
        below.failures.is_empty()
            && below.m0.len() == 10
            && below.max_pairwise_dist < 1e-6
            && above.failures.is_empty()
            && above.sup_m.len() == 10
            && sup_above < 1e-6,
        format!(
            "g=0.1: pairwise {:.2e}, m0 {:.8}; g=0.5: sup m {sup_above:.2e}",
            below.max_pairwise_dist, below.m0[0]
        ),
    )
}

fn admissibility(set: &[Solved], b: &continuation::Branch) -> Outcome {
    let mut bad = Vec::new();
    let mut count = 0;
    let branch = b
        .points
        .iter()
        .zip(&b.profiles)
        .map(|(pt, p)| (ModelParams::new(Kappa::Infinite, 1, pt.g).unwrap(), p));
    for (params, p) in set.iter().map(|s| (s.params, &s.profile)).chain(branch) {
        count += 1;
        let report = check_admissible(&params, p);
        if !report.overall {
            let names: Vec<_> = report.failed().map(|c| c.name.clone()).collect();
            bad.push(format!("kappa {} g {}: {names:?}", params.kappa, params.g));
        }
    }
    ensure(
        bad.is_empty(),
        format!(
            "{count} profiles checked{}",
            if bad.is_empty() {
                String::new()
            } else {
                format!("; {bad:?}")
            }
        ),
    )
}

fn quotient_form() -> Outcome {
    let grid = uniform(4001, 40.0);
    let params = ModelParams::new(Kappa::Infinite, 1, 0.1).unwrap();
    let sol = solve(&params, &grid, &SolveOptions::with_seed(Seed::Perturbed(0.5))).map_err(|e| e.to_string())?;
    let (model, _) = model_with_reference(&params, &grid).unwrap();
    let h = model.hessian(&sol);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = grid.n();
    let mut worst = [0.0_f64; 3];
    for _ in 0..20 {
        let mut dir = TangentDirection::zeros(n);
        for _ in 0..3 {
            let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (centre, width) = (rng.gen_range(0.0..6.0), rng.gen_range(0.5..4.0));
            for (i, &r) in grid.r().iter().enumerate() {
                let bump = (-((r - centre) / width).powi(2)).exp();
                dir.u[i] += a * r * bump;
                dir.w[i] += b * bump;
            }
        }
        dir.u[n - 1] = 0.0;
        dir.w[n - 1] = 0.0;
        let form = h.form(&dir, &dir);
        for (k, c) in [1.0, 2.0, 4.0].into_iter().enumerate() {
            let q = model.quotient_form_with(&sol, &dir, c).map_err(|e| e.to_string())?;
            worst[k] = worst[k].max(((q - form) / form).abs());
        }
    }
    ensure(
        worst[1] < 1e-3,
        format!(
            "worst relative error c=2: {:.2e} (c=1: {:.2e}, c=4: {:.2e})",
            worst[1], worst[0], worst[2]
        ),
    )
}

fn kappa_limit() -> Outcome {
    let spec = GridSpec::default();
    let inf_grid = Arc::new(spec.build(1.0).unwrap());
    let t = limit_check(&[5.0, 10.0, 20.0], 1, 0.1, &inf_grid, &spec).map_err(|e| e.to_string())?;
    let rows: Vec<String> = t
        .rows
        .iter()
        .map(|r| {
            format!(
                "κ={}: {:.3e} {:.3e} {:.3e} {:.3e}",
                r.kappa, r.sup_f, r.sup_m, r.sup_s_over_r, r.g_star_gap
            )
        })
        .collect();
    ensure(
        t.all_decreasing(),
        format!("{} (decreasing {:?})", rows.join(", "), t.decreasing),
    )
}

fn g_to_zero() -> Outcome {
    let scan =
        g_to_zero_scan(Kappa::Finite(1.0), 1, &GridSpec::default(), &[0.1, 0.01, 0.001]).map_err(|e| e.to_string())?;
    let last = scan.rows.last().ok_or("empty scan")?;
    let energies: Vec<String> = scan.rows.iter().map(|r| format!("{:.6}", r.energy)).collect();
    ensure(
        scan.energy_decreasing && last.m0 > 0.9,
        format!("energies [{}], m0(1e-3) = {:.4}", energies.join(", "), last.m0),
    )
}

fn numerical_consistency() -> Outcome {
    let grid = Arc::new(RadialGrid::new(801, 16.0, Grading::Graded { strength: 1.5 }).unwrap());
    let n = grid.n();
    let r = grid.r().to_vec();
    let params = ModelParams::new(Kappa::Finite(2.0), 1, 0.2).unwrap();
    let f: Vec<f64> = r.iter().map(|&x| (0.8 * x).tanh()).collect();
    let s: Vec<f64> = r.iter().map(|&x| 1.0 - 1.0 / x.cosh()).collect();
    let m: Vec<f64> = r
        .iter()
        .map(|&x| 0.6 * (-x * x / 6.0).exp() * (1.0 - x / 16.0))
        .collect();
    let p = Profile::new(grid.clone(), f, s, m).unwrap();
    let model = Model::new(params);
    let mut dir = TangentDirection::zeros(n);
    let mut other = TangentDirection::zeros(n);
    for i in 0..n - 1 {
        let x = r[i];
        dir.u[i] = x * (-0.4 * x).exp();
        dir.v[i] = x * (-0.5 * x).exp() * x.cos();
        dir.w[i] = (-0.3 * x * x).exp();
        other.u[i] = x * (-0.3 * x).exp() * (1.0 + x.sin());
        other.v[i] = x * (-0.6 * x).exp();
        other.w[i] = (-0.2 * x * x).exp() * x.cos();
    }

    let exact = TangentDirection::dot(&grid, &model.residual(&p), &dir);
    let e = |t: f64| model.energy(&dir.displace(&p, t)).unwrap().total;
    let err = |t: f64| ((e(t) - e(-t)) / (2.0 * t) - exact).abs();
    let fd_ratio = err(1e-3) / err(1e-4);

    let h = model.hessian(&p);
    let (ab, ba) = (h.form(&dir, &other), h.form(&other, &dir));
    let asym = (ab - ba).abs() / ab.abs().max(1.0);

    let quad = RadialGrid::new(513, 12.5, Grading::Graded { strength: 4.0 }).unwrap();
    let quad_err = (quad.integrate(&vec![1.0; quad.n()]).unwrap() - 12.5 * 12.5 / 2.0).abs();

    let lap_err = |n: usize| {
        let g = RadialGrid::new(n, 8.0, Grading::Uniform).unwrap();
        let u: Vec<f64> = g.r().iter().map(|r| (-r * r).exp()).collect();
        let lu = g.apply_radial_laplacian(&u, OriginBc::Neumann0).unwrap();
        g.r()
            .iter()
            .zip(&lu)
            .take(n - 1)
            .map(|(r, v)| (v - 4.0 * (1.0 - r * r) * (-r * r).exp()).abs())
            .fold(0.0, f64::max)
    };
    let lap_ratio = lap_err(401) / lap_err(801);

    ensure(
        (90.0..=110.0).contains(&fd_ratio) && asym < 1e-10 && quad_err < 1e-12 && (3.5..=4.5).contains(&lap_ratio),
        format!(
            "FD error ratio {fd_ratio:.2}, Hessian asymmetry {asym:.1e}, quadrature error {quad_err:.1e}, Laplacian ratio {lap_ratio:.3}"
        ),
    )
}

fn bifurcation() -> Outcome {
    let kappa = Kappa::Finite(20.0);
    let grid = default_grid(kappa);
    let dir = bifurcation_direction(kappa, 1, &grid).map_err(|e| e.to_string())?;
    let b = trace_branch(kappa, 1, &grid, 0.15, 20).map_err(|e| e.to_string())?;
    let af: Vec<_> = b.points.iter().filter(|p| p.m0 > 1e-3).collect();
    let left = af.iter().all(|p| p.g < dir.g_star);
    let side_matches = !af.is_empty() && (dir.gamma2 < 0.0) == left;
    ensure(
        dir.sign_integral < 0.0 && side_matches && b.aborted.is_none(),
        format!(
            "∫ f u* w² r dr = {:.3}, γ''(0) = {:.3}, {} AF points all below g* = {:.6}: {left}",
            dir.sign_integral,
            dir.gamma2,
            af.len(),
            dir.g_star
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, run: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1} s]");
            }
        }
    };

    let set = solution_set();
    let (branch, branch_time) = high_kappa_branch();

    report("threshold reproduction", &mut threshold_cli);
    report("normal-core Pohozaev", &mut normal_core_pohozaev);
    report("Pohozaev for converged solutions", &mut || all_solutions_pohozaev(&set));
    report("stability dichotomy", &mut stability_dichotomy);
    report("second-order transition", &mut || {
        second_order_transition(&branch, branch_time)
    });
    report("uniqueness", &mut uniqueness);
    report("monotonicity and bounds", &mut || admissibility(&set, &branch));
    report("quotient form", &mut quotient_form);
    report("kappa limit", &mut kappa_limit);
    report("g to zero", &mut g_to_zero);
    report("numerical consistency", &mut numerical_consistency);
    report("bifurcation direction", &mut bifurcation);

    println!("{} criteria, {failed} failed", 12);
    if failed > 0 {
        std::process::exit(1);
    }
}
