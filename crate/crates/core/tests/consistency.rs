//! Discretization checks against closed forms and finite differences.

use std::sync::Arc;

use so5_vortex::diagnostics::x_norm;
use so5_vortex::spectral::ground_state;
use so5_vortex::*;

/// First zero of J0.
const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

fn j0_series(x: f64) -> f64 {
    // Σ (−1)^k (x/2)^{2k} / (k!)²
    let q = -(x * x) / 4.0;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..60 {
        term *= q / (k as f64 * k as f64);
        sum += term;
    }
    sum
}

fn smooth_profile(grid: &Arc<RadialGrid>, d: f64) -> Profile {
    let r = grid.r();
    let rm = grid.r_max();
    let f: Vec<f64> = r.iter().map(|&x| (0.8 * x).tanh()).collect();
    let s: Vec<f64> = r.iter().map(|&x| d * (1.0 - 1.0 / x.cosh())).collect();
    let m: Vec<f64> = r.iter().map(|&x| 0.6 * (-x * x / 6.0).exp() * (1.0 - x / rm)).collect();
    Profile::new(grid.clone(), f, s, m).unwrap()
}

/// Direction vanishing on every clamped row.
fn direction(grid: &RadialGrid, phase: f64) -> TangentDirection {
    let r = grid.r();
    let n = r.len();
    let mut dir = TangentDirection::zeros(n);
    for i in 0..n {
        let x = r[i];
        dir.u[i] = x * (-0.4 * x).exp() * (1.0 + 0.3 * (x + phase).sin());
        dir.v[i] = x * (-0.5 * x).exp() * (x + 2.0 * phase).cos();
        dir.w[i] = (-0.3 * x * x).exp() * (0.5 + (x - phase).cos());
    }
    dir.u[n - 1] = 0.0;
    dir.v[n - 1] = 0.0;
    dir.w[n - 1] = 0.0;
    dir
}

fn models(grid: &Arc<RadialGrid>) -> Vec<(Model, Profile)> {
    let mut out = Vec::new();
    for (kappa, d, g) in [
        (Kappa::Finite(2.0), 1, 0.2),
        (Kappa::Finite(0.7), 2, 0.05),
        (Kappa::Infinite, 1, 0.1),
    ] {
        let params = ModelParams::new(kappa, d, g).unwrap();
        let p = smooth_profile(grid, d as f64);
        let model = Model::new(params).with_reference(Arc::new(p.f.clone()));
        out.push((model, p));
    }
    out
}

fn test_grid() -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(801, 16.0, Grading::Graded { strength: 1.5 }).unwrap())
}

#[test]
fn gradient_matches_central_differences_at_second_order() {
    let grid = test_grid();
    for (model, p) in models(&grid) {
        let dir = direction(&grid, 0.3);
        let exact = TangentDirection::dot(&grid, &model.residual(&p), &dir);
        let e = |t: f64| model.energy(&dir.displace(&p, t)).unwrap().total;
        let err = |t: f64| ((e(t) - e(-t)) / (2.0 * t) - exact).abs();
        let (e3, e4) = (err(1e-3), err(1e-4));
        let ratio = e3 / e4;
        assert!(
            (90.0..110.0).contains(&ratio),
            "{:?}: errors {e3:e} {e4:e} ratio {ratio}",
            model.params.kappa
        );
    }
}

#[test]
fn hessian_is_symmetric() {
    let grid = test_grid();
    for (model, p) in models(&grid) {
        let h = model.hessian(&p);
        let (a, b) = (direction(&grid, 0.1), direction(&grid, 1.7));
        let (ab, ba) = (h.form(&a, &b), h.form(&b, &a));
        assert!((ab - ba).abs() <= 1e-10 * ab.abs().max(1.0), "{ab} vs {ba}");
        let (ha, hb) = (h.apply(&a), h.apply(&b));
        let (x, y) = (
            TangentDirection::dot(&grid, &ha, &b),
            TangentDirection::dot(&grid, &a, &hb),
        );
        assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn hessian_matches_second_differences() {
    let grid = test_grid();
    for (model, p) in models(&grid) {
        let dir = direction(&grid, 0.9);
        let q = model.hessian(&p).form(&dir, &dir);
        let e = |t: f64| model.energy(&dir.displace(&p, t)).unwrap().total;
        let t = 1e-3;
        let fd = (e(t) - 2.0 * e(0.0) + e(-t)) / (t * t);
        assert!((fd - q).abs() < 1e-5 * q.abs().max(1.0), "{fd} vs {q}");
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let grid = test_grid();
    for (model, p) in models(&grid) {
        let (a, b) = (direction(&grid, 0.4), direction(&grid, 2.2));
        let t = 1e-5;
        let gp = model.residual(&a.displace(&p, t));
        let gm = model.residual(&a.displace(&p, -t));
        let mut fd = TangentDirection::dot(&grid, &gp, &b) - TangentDirection::dot(&grid, &gm, &b);
        fd /= 2.0 * t;
        let q = model.hessian(&p).form(&a, &b);
        assert!((fd - q).abs() < 1e-6 * q.abs().max(1.0), "{fd} vs {q}");
    }
}

#[test]
fn quadrature_is_exact_for_constants() {
    for grading in [Grading::Uniform, Grading::Graded { strength: 4.0 }] {
        let grid = RadialGrid::new(513, 12.5, grading).unwrap();
        let total = grid.integrate(&vec![1.0; grid.n()]).unwrap();
        assert!((total - 12.5 * 12.5 / 2.0).abs() < 1e-12);
        assert!(grid.w().iter().all(|w| *w > 0.0));
    }
}

#[test]
fn quadrature_converges_at_second_order() {
    let err = |n: usize| {
        let grid = RadialGrid::new(n, 30.0, Grading::Uniform).unwrap();
        let u: Vec<f64> = grid.r().iter().map(|r| (-r).exp()).collect();
        // ∫₀^∞ e^{−r} r dr = 1; the tail beyond 30 is below 1e-11.
        (grid.integrate(&u).unwrap() - 1.0).abs()
    };
    let ratio = err(2001) / err(4001);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    assert!(err(16001) < 1e-6);
}

fn laplacian_error(n: usize) -> f64 {
    let grid = RadialGrid::new(n, 8.0, Grading::Uniform).unwrap();
    let u: Vec<f64> = grid.r().iter().map(|r| (-r * r).exp()).collect();
    let lu = grid.apply_radial_laplacian(&u, OriginBc::Neumann0).unwrap();
    grid.r()
        .iter()
        .zip(&lu)
        .take(n - 1)
        .map(|(r, v)| (v - 4.0 * (1.0 - r * r) * (-r * r).exp()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn laplacian_refinement_ratio() {
    for (coarse, fine) in [(201, 401), (401, 801)] {
        let ratio = laplacian_error(coarse) / laplacian_error(fine);
        assert!((3.5..=4.5).contains(&ratio), "{coarse}->{fine}: ratio {ratio}");
    }
}

#[test]
fn laplacian_is_exact_for_quadratics_at_the_origin() {
    let grid = RadialGrid::new(101, 3.0, Grading::Graded { strength: 2.0 }).unwrap();
    let u: Vec<f64> = grid.r().iter().map(|r| 2.5 * r * r).collect();
    let lu = grid.apply_radial_laplacian(&u, OriginBc::Neumann0).unwrap();
    assert!((lu[0] + 10.0).abs() < 1e-10, "{}", lu[0]);
    let lu = grid.apply_radial_laplacian(&u, OriginBc::Dirichlet0).unwrap();
    assert_eq!(lu[0], 0.0);
    assert_eq!(lu[100], 0.0);
}

#[test]
fn disk_ground_state_matches_bessel() {
    let r_max = 3.0;
    let grid = RadialGrid::new(1601, r_max, Grading::Uniform).unwrap();
    let eig = ground_state(&grid, &vec![0.0; grid.n()], OriginBc::Neumann0).unwrap();
    let exact = (J0_FIRST_ZERO / r_max).powi(2);
    assert!((eig.lambda / exact - 1.0).abs() < 1e-5, "{} vs {exact}", eig.lambda);
    let scale = eig.vec[0];
    for (r, v) in grid.r().iter().zip(&eig.vec) {
        assert!((v / scale - j0_series(J0_FIRST_ZERO * r / r_max)).abs() < 1e-5);
    }
}

#[test]
fn j0_series_oracle() {
    assert!(j0_series(J0_FIRST_ZERO).abs() < 1e-14);
    assert!((j0_series(1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
}

#[test]
fn x_norm_of_r_exp_minus_r() {
    // ∫[(1−r)² + r² + 1] e^{−2r} r dr = 1/8 + 3/8 + 1/4.
    let grid = RadialGrid::new(16001, 30.0, Grading::Uniform).unwrap();
    let u: Vec<f64> = grid.r().iter().map(|r| r * (-r).exp()).collect();
    let x = x_norm(&grid, &u).unwrap();
    assert!((x * x - 0.75).abs() < 1e-6, "{}", x * x);
}
