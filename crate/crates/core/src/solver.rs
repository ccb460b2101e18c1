//! Normal-core and AF-core solutions.
//!
//! The main iteration is an energy-descent Newton method on the free unknowns:
//! each step solves `(H + μM)δ = −∇E` with the smallest `μ ≥ 0` that makes the
//! shifted Hessian positive definite, then backtracks on the energy. With
//! `μ > 0` the step is one backward-Euler step of the gradient flow with
//! `dt = 1/μ`, which carries iterates off saddles such as the normal core
//! below threshold. Near a minimizer `μ = 0` and the steps are pure Newton.
//! Explicit gradient flow is kept as a fallback when that iteration stalls.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::{assemble_hessian, free_gradient, raw_energy, Fields, Layout, Model, ModelParams, Profile};
use crate::spectral::normal_core_mode;

#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    NormalCore,
    /// Normal core plus `amplitude` times the threshold eigenfunction scaled to unit maximum.
    Perturbed(f64),
    Trial(f64),
    Custom(Profile),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Sup-norm of the residual at convergence.
    pub tol_residual: f64,
    pub max_newton: usize,
    /// Budget of explicit flow steps used when the Newton iteration stalls.
    pub max_flow_steps: usize,
    /// Explicit flow step; `None` picks half the Gershgorin stability limit.
    pub flow_dt: Option<f64>,
    pub seed: Seed,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_newton: 50,
            max_flow_steps: 20_000,
            flow_dt: None,
            seed: Seed::NormalCore,
        }
    }
}

impl SolveOptions {
    pub fn with_seed(seed: Seed) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub profile: Profile,
    pub newton_iters: usize,
    pub flow_steps: usize,
    /// Residual sup-norm before each Newton step, and at the end.
    pub history: Vec<f64>,
    pub residual: f64,
    /// Rounding floor used in the convergence test.
    pub floor: f64,
    /// Energy of the normal core when the seed was a perturbation of it.
    pub normal_core_energy: Option<f64>,
}

/// Constant `C` of the trial-profile bound `C/ρ² + π²/(4 ln ρ) + κ²gρ⁴/2` for `d = 1`.
///
/// The magnetic step `S = d·s((r − ρ/2)/(ρ/2))` with `s(t) = 3t² − 2t³` costs
/// `½∫(S'/r)² r dr = 2d²/ρ² · ∫₀¹ s'(t)²/(1+t) dt = d²(288 ln 2 − 198)/ρ²`.
pub fn trial_bound_constant(d: u32) -> f64 {
    (d as f64).powi(2) * (288.0 * 2f64.ln() - 198.0)
}

pub fn trial_bound(params: &ModelParams, rho: f64) -> f64 {
    let k2 = params.kappa.k2();
    trial_bound_constant(params.d) / (rho * rho) + PI * PI / (4.0 * rho.ln()) + 0.5 * k2 * params.g * rho.powi(4)
}

/// Log-cutoff trial fields `(cos(u_ρπ/2), step, sin(u_ρπ/2))`.
pub fn trial_profile(params: &ModelParams, grid: &Arc<RadialGrid>, rho: f64) -> Result<Profile> {
    if !(rho >= 2.0) || rho * rho > grid.r_max() {
        return Err(Error::RhoOutOfRange { rho });
    }
    let d = params.d as f64;
    let ln_inv = (1.0 / rho).ln();
    let u = |r: f64| {
        if r <= rho {
            1.0
        } else if r >= rho * rho {
            0.0
        } else {
            (r / (rho * rho)).ln() / ln_inv
        }
    };
    let step = |r: f64| {
        let t = ((r - 0.5 * rho) / (0.5 * rho)).clamp(0.0, 1.0);
        d * t * t * (3.0 - 2.0 * t)
    };
    let mut f = Vec::with_capacity(grid.n());
    let mut s = Vec::with_capacity(grid.n());
    let mut m = Vec::with_capacity(grid.n());
    for &r in grid.r() {
        let ur = u(r);
        f.push(if ur >= 1.0 { 0.0 } else { (0.5 * PI * ur).cos() });
        m.push(if ur <= 0.0 { 0.0 } else { (0.5 * PI * ur).sin() });
        s.push(if params.kappa.is_infinite() { 0.0 } else { step(r) });
    }
    Profile::new(grid.clone(), f, s, m)
}

fn clamp_boundary(params: &ModelParams, p: &mut Profile) {
    let n = p.f.len();
    p.f[0] = 0.0;
    p.s[0] = 0.0;
    p.f[n - 1] = 1.0;
    p.m[n - 1] = 0.0;
    p.s[n - 1] = if params.kappa.is_infinite() {
        0.0
    } else {
        params.d as f64
    };
    if params.kappa.is_infinite() {
        p.s.iter_mut().for_each(|v| *v = 0.0);
    }
}

fn normal_core_guess(params: &ModelParams, grid: &Arc<RadialGrid>) -> Profile {
    let c = 0.7 / params.kappa.core_width();
    let d = params.d as f64;
    let f = grid.r().iter().map(|r| (c * r).tanh().powi(params.d as i32)).collect();
    let s = grid
        .r()
        .iter()
        .map(|r| {
            if params.kappa.is_infinite() {
                0.0
            } else {
                d * (1.0 - 1.0 / r.cosh())
            }
        })
        .collect();
    let mut p = Profile {
        grid: grid.clone(),
        f,
        s,
        m: vec![0.0; grid.n()],
    };
    clamp_boundary(params, &mut p);
    p
}

/// Residual sup-norm (in tangent units) and the rounding floor for that measure.
fn residual_and_floor(
    params: &ModelParams,
    p: &Profile,
    layout: &Layout,
    grad: &[f64],
    abs_terms: &[f64],
) -> (f64, f64) {
    let (r, w) = (p.grid.r(), p.grid.w());
    let (mut res, mut floor) = (0.0_f64, 0.0_f64);
    let k2 = params.kappa.k2();
    for i in 0..r.len() {
        for (idx, factor) in [
            (layout.idx_f[i], 1.0 / w[i]),
            (layout.idx_s[i], r[i] / w[i]),
            (layout.idx_m[i], 1.0 / w[i]),
        ] {
            if let Some(k) = idx {
                res = res.max(grad[k].abs() * factor);
                floor = floor.max(abs_terms[k] * factor);
            }
        }
    }
    (res, 16.0 * f64::EPSILON * floor.max(k2))
}

/// Sup of the tangent residual over all free unknowns, with the round-off
/// floor the solver accepts.
pub fn residual_norm(params: &ModelParams, p: &Profile) -> (f64, f64) {
    let layout = Layout::new(p.grid.n(), !params.kappa.is_infinite(), Fields::All);
    let x = layout.gather(p);
    let grad = free_gradient(params, p, &layout);
    let h = assemble_hessian(params, p, &layout);
    residual_and_floor(params, p, &layout, &grad, &h.abs_matvec(&x))
}

/// Energy-descent Newton on the selected fields.
fn descend(params: &ModelParams, start: Profile, fields: Fields, opts: &SolveOptions) -> Result<SolveReport> {
    if !(opts.tol_residual > 0.0) {
        return Err(Error::InvalidParameter("tol_residual must be positive".into()));
    }
    let grid = start.grid.clone();
    let has_s = !params.kappa.is_infinite();
    let layout = Layout::new(grid.n(), has_s, fields);
    let mass = layout.mass(&grid);
    let k2 = params.kappa.k2();
    let mu_min = 1e-3 * k2;

    let mut p = start;
    clamp_boundary(params, &mut p);
    if fields == Fields::NormalCore {
        p.m.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut x = layout.gather(&p);
    let mut history = Vec::new();
    let mut mu_prev = 0.0_f64;
    let mut flow_steps = 0;
    let mut stalls = 0;

    for iter in 0..=opts.max_newton {
        let grad = free_gradient(params, &p, &layout);
        let h = assemble_hessian(params, &p, &layout);
        let (res, floor) = residual_and_floor(params, &p, &layout, &grad, &h.abs_matvec(&x));
        history.push(res);
        if res <= opts.tol_residual.max(floor) {
            return Ok(SolveReport {
                profile: p,
                newton_iters: iter,
                flow_steps,
                history,
                residual: res,
                floor,
                normal_core_energy: None,
            });
        }
        if iter == opts.max_newton {
            break;
        }

        // Smallest workable shift: try μ = 0, then grow from the last one used.
        let mut mu = 0.0_f64;
        let chol = loop {
            let mut shifted = h.clone();
            if mu > 0.0 {
                shifted.add_diag(&mass, mu);
            }
            match shifted.cholesky() {
                Ok(c) => break c,
                Err(_) => {
                    mu = if mu == 0.0 {
                        (0.25 * mu_prev).max(mu_min)
                    } else {
                        4.0 * mu
                    };
                    if mu > 1e20 {
                        return Err(Error::SingularSystem("Hessian shift diverged".into()));
                    }
                }
            }
        };
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let delta = chol.solve(&neg);
        let step_sup = delta.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

        // Pure Newton in the rounding regime; there the energy is too flat to compare.
        if mu == 0.0 && res < 1e-5 {
            if step_sup < 1e-13 {
                return Ok(SolveReport {
                    profile: p,
                    newton_iters: iter,
                    flow_steps,
                    history,
                    residual: res,
                    floor: res,
                    normal_core_energy: None,
                });
            }
            for (xi, di) in x.iter_mut().zip(&delta) {
                *xi += di;
            }
            layout.scatter(&x, &mut p);
            mu_prev = 0.0;
            continue;
        }

        let e0 = raw_energy(params, &p).total;
        let slope: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + alpha * di).collect();
            let mut q = p.clone();
            layout.scatter(&trial, &mut q);
            let e1 = raw_energy(params, &q).total;
            if e1.is_finite() && e1 <= e0 + 1e-4 * alpha * slope {
                accepted = Some((trial, q));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, q)) => {
                x = trial;
                p = q;
                mu_prev = mu;
                stalls = 0;
            }
            None => {
                stalls += 1;
                mu_prev = (4.0 * mu).max(mu_min);
                if stalls >= 3 && flow_steps < opts.max_flow_steps {
                    let budget = (opts.max_flow_steps - flow_steps).min(2000);
                    p = flow(params, &p, &layout, budget, opts.flow_dt)?;
                    x = layout.gather(&p);
                    flow_steps += budget;
                    stalls = 0;
                }
            }
        }
    }
    let res = *history.last().unwrap_or(&f64::INFINITY);
    Err(Error::NonConvergence {
        iterations: opts.max_newton,
        residual: res,
        last: Box::new(p),
        history,
    })
}

/// Largest explicit step that keeps the iteration stable at `p`, halved.
fn stable_dt(params: &ModelParams, p: &Profile, layout: &Layout) -> f64 {
    let h = assemble_hessian(params, p, layout);
    1.0 / h.gershgorin_max(&layout.mass(&p.grid))
}

fn flow(params: &ModelParams, start: &Profile, layout: &Layout, steps: usize, dt: Option<f64>) -> Result<Profile> {
    let mass = layout.mass(&start.grid);
    let dt = dt.unwrap_or_else(|| stable_dt(params, start, layout));
    let mut p = start.clone();
    let mut x = layout.gather(&p);
    let mut e = raw_energy(params, &p).total;
    let slack = 1e-12 * e.abs().max(1.0);
    for step in 0..steps {
        let grad = free_gradient(params, &p, layout);
        for ((xi, g), m) in x.iter_mut().zip(&grad).zip(&mass) {
            *xi -= dt * g / m;
        }
        layout.scatter(&x, &mut p);
        let e1 = raw_energy(params, &p).total;
        if !(e1 <= e + slack) {
            return Err(Error::StabilityViolation { step, increase: e1 - e });
        }
        e = e1;
    }
    Ok(p)
}

/// Explicit Euler steps of `∂ₜx = −M⁻¹∇E`, checking that the energy never rises.
pub fn gradient_flow(params: &ModelParams, start: &Profile, steps: usize, dt: Option<f64>) -> Result<Profile> {
    let layout = Layout::new(start.grid.n(), !params.kappa.is_infinite(), Fields::All);
    let mut p = start.clone();
    clamp_boundary(params, &mut p);
    flow(params, &p, &layout, steps, dt)
}

/// Largest explicit flow step the checker in [`gradient_flow`] tolerates, halved.
pub fn flow_dt_limit(params: &ModelParams, p: &Profile) -> f64 {
    let layout = Layout::new(p.grid.n(), !params.kappa.is_infinite(), Fields::All);
    stable_dt(params, p, &layout)
}

/// Normal core `(f̃, S̃, 0)`.
pub fn solve_normal_core(params: &ModelParams, grid: &Arc<RadialGrid>, opts: &SolveOptions) -> Result<Profile> {
    Ok(solve_normal_core_report(params, grid, opts)?.profile)
}

pub fn solve_normal_core_report(
    params: &ModelParams,
    grid: &Arc<RadialGrid>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let start = match &opts.seed {
        Seed::Custom(p) => {
            if p.grid.r() != grid.r() {
                return Err(Error::GridMismatch);
            }
            p.clone()
        }
        _ => normal_core_guess(params, grid),
    };
    let mut report = descend(params, start, Fields::NormalCore, opts)?;
    fix_signs(params, &mut report, Fields::NormalCore, opts)?;
    Ok(report)
}

/// Energy minimizer reached from the seed in `opts`.
pub fn solve(params: &ModelParams, grid: &Arc<RadialGrid>, opts: &SolveOptions) -> Result<Profile> {
    Ok(solve_report(params, grid, opts)?.profile)
}

pub fn solve_report(params: &ModelParams, grid: &Arc<RadialGrid>, opts: &SolveOptions) -> Result<SolveReport> {
    let core_opts = SolveOptions {
        seed: Seed::NormalCore,
        ..opts.clone()
    };
    let (start, core) = match &opts.seed {
        Seed::NormalCore => {
            let core = solve_normal_core(params, grid, &core_opts)?;
            (core.clone(), Some(core))
        }
        Seed::Perturbed(amplitude) => {
            let core = solve_normal_core(params, grid, &core_opts)?;
            let start = perturb(params, &core, *amplitude)?;
            (start, Some(core))
        }
        Seed::Trial(rho) => (trial_profile(params, grid, *rho)?, None),
        Seed::Custom(p) => {
            if p.grid.r() != grid.r() {
                return Err(Error::GridMismatch);
            }
            (p.clone(), None)
        }
    };
    let mut report = descend(params, start, Fields::All, opts)?;
    fix_signs(params, &mut report, Fields::All, opts)?;
    if let Some(core) = core {
        // Keep whichever converged state is lower.
        let e_core = raw_energy(params, &core).total;
        let e_sol = raw_energy(params, &report.profile).total;
        report.normal_core_energy = Some(e_core);
        if e_core < e_sol {
            report.profile = core;
        }
    }
    Ok(report)
}

/// Normal core plus a multiple of the threshold eigenfunction.
pub fn perturb(params: &ModelParams, core: &Profile, amplitude: f64) -> Result<Profile> {
    let mode = normal_core_mode(params, core)?;
    let peak = mode.vec.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut p = core.clone();
    for (m, v) in p.m.iter_mut().zip(&mode.vec) {
        *m = amplitude * v / peak;
    }
    Ok(p)
}

/// Replaces sign-flipped fields by their absolute values and re-converges if needed.
fn fix_signs(params: &ModelParams, report: &mut SolveReport, fields: Fields, opts: &SolveOptions) -> Result<()> {
    let n = report.profile.f.len();
    let flipped =
        report.profile.f[..n - 1].iter().any(|v| *v < 0.0) || report.profile.m[..n - 1].iter().any(|v| *v < 0.0);
    if !flipped {
        return Ok(());
    }
    let mut p = report.profile.clone();
    p.f.iter_mut().for_each(|v| *v = v.abs());
    p.m.iter_mut().for_each(|v| *v = v.abs());
    let again = descend(params, p, fields, opts)?;
    report.newton_iters += again.newton_iters;
    report.history.extend(again.history);
    report.residual = again.residual;
    report.floor = again.floor;
    report.profile = again.profile;
    Ok(())
}

/// Model carrying the normal-core reference needed by the high-kappa energy.
pub fn model_with_reference(params: &ModelParams, grid: &Arc<RadialGrid>) -> Result<(Model, Option<Profile>)> {
    if params.kappa.is_infinite() {
        let core = solve_normal_core(params, grid, &SolveOptions::default())?;
        let model = Model::new(*params).with_reference(Arc::new(core.f.clone()));
        Ok((model, Some(core)))
    } else {
        Ok((Model::new(*params), None))
    }
}
