//! Quotient form of the second variation at the high-kappa AF solution.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use so5_vortex::model::QUOTIENT_COEFF;
use so5_vortex::solver::{model_with_reference, solve};
use so5_vortex::*;

/// Sums of Gaussian bumps, `u ∝ r` at the origin, zero on the far clamp.
fn random_direction(grid: &RadialGrid, rng: &mut ChaCha8Rng) -> TangentDirection {
    let mut dir = TangentDirection::zeros(grid.n());
    for _ in 0..3 {
        let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let (centre, width) = (rng.gen_range(0.0..6.0), rng.gen_range(0.5..4.0));
        for (i, &r) in grid.r().iter().enumerate() {
            let bump = (-((r - centre) / width).powi(2)).exp();
            dir.u[i] += a * r * bump;
            dir.w[i] += b * bump;
        }
    }
    let n = grid.n();
    dir.u[n - 1] = 0.0;
    dir.w[n - 1] = 0.0;
    dir
}

fn worst_relative_error(c: f64) -> f64 {
    let grid = Arc::new(RadialGrid::new(4001, 40.0, Grading::Uniform).unwrap());
    let params = ModelParams::new(Kappa::Infinite, 1, 0.1).unwrap();
    let sol = solve(&params, &grid, &SolveOptions::with_seed(Seed::Perturbed(0.5))).unwrap();
    let (model, _) = model_with_reference(&params, &grid).unwrap();
    let h = model.hessian(&sol);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..20)
        .map(|_| {
            let dir = random_direction(&grid, &mut rng);
            let q = model.quotient_form_with(&sol, &dir, c).unwrap();
            let form = h.form(&dir, &dir);
            ((q - form) / form).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn coefficient_two_matches_the_hessian() {
    assert_eq!(QUOTIENT_COEFF, 2.0);
    let err = worst_relative_error(QUOTIENT_COEFF);
    assert!(err < 1e-3, "{err:e}");
}

#[test]
fn other_coefficients_do_not() {
    for c in [1.0, 4.0] {
        assert!(worst_relative_error(c) > 0.1, "c = {c}");
    }
}

#[test]
fn quotient_form_needs_positive_fields() {
    let grid = Arc::new(RadialGrid::new(401, 20.0, Grading::Uniform).unwrap());
    let params = ModelParams::new(Kappa::Infinite, 1, 0.5).unwrap();
    let (model, core) = model_with_reference(&params, &grid).unwrap();
    let dir = TangentDirection::zeros(grid.n());
    assert!(matches!(
        model.quotient_form(&core.unwrap(), &dir),
        Err(Error::NonPositive("m"))
    ));
    let finite = Model::new(ModelParams::new(Kappa::Finite(2.0), 1, 0.1).unwrap());
    let p = Profile::new(grid.clone(), vec![0.5; 401], vec![0.0; 401], vec![0.5; 401]).unwrap();
    assert!(finite.quotient_form(&p, &dir).is_err());
}
