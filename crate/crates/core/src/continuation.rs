//! Natural-parameter continuation of the AF-core branch in `g`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{check_admissible, linear_fit};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::{assemble_hessian, Fields, Kappa, Layout, Model, ModelParams, Profile};
use crate::solver::{solve_report, Seed, SolveOptions, SolveReport};
use crate::spectral::{hessian_min_eig, threshold_from_core, Threshold};

/// Per-point acceptance gates.
pub const POHOZAEV_GATE: f64 = 1e-3;
pub const STABILITY_GATE: f64 = -1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub g: f64,
    pub m0: f64,
    pub energy: f64,
    pub lambda_min: f64,
    pub pohozaev_rel: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub kappa: Kappa,
    pub d: u32,
    pub g_star: f64,
    /// Ordered by decreasing `g`; the first point is the bifurcation point itself.
    pub points: Vec<BranchPoint>,
    pub profiles: Vec<Profile>,
    /// Why tracing stopped early, if it did.
    pub aborted: Option<String>,
}

/// Ten decay lengths of the order parameter at coupling `g`.
pub fn decay_radius(kappa: Kappa, g: f64) -> f64 {
    let k = match kappa {
        Kappa::Finite(k) => k,
        Kappa::Infinite => 1.0,
    };
    10.0 / (k * g.sqrt())
}

/// `g* − g_k` geometric from `10⁻³g*` to `g* − g_min`.
pub fn schedule(g_star: f64, g_min: f64, steps: usize) -> Result<Vec<f64>> {
    let first = 1e-3 * g_star;
    let span = g_star - g_min;
    if !(g_min > 0.0) || span <= first {
        return Err(Error::InvalidParameter(format!(
            "g_min = {g_min} must lie in (0, {})",
            g_star - first
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidParameter("need at least 2 steps".into()));
    }
    let ratio = span / first;
    Ok((0..steps)
        .map(|k| g_star - first * ratio.powf(k as f64 / (steps - 1) as f64))
        .collect())
}

struct Gate {
    point: BranchPoint,
    profile: Profile,
}

fn evaluate(model: &Model, rep: SolveReport) -> std::result::Result<Gate, String> {
    let p = rep.profile;
    let params = model.params;
    let poho = model.pohozaev(&p);
    if !(poho.rel_err < POHOZAEV_GATE) {
        return Err(format!("Pohozaev rel_err {:.3e} at g = {}", poho.rel_err, params.g));
    }
    let adm = check_admissible(&params, &p);
    if !adm.overall {
        let names: Vec<_> = adm.failed().map(|c| c.name.clone()).collect();
        return Err(format!("admissibility failed at g = {}: {names:?}", params.g));
    }
    let lambda_min = hessian_min_eig(model, &p).map_err(|e| e.to_string())?.lambda;
    if !(lambda_min > STABILITY_GATE) {
        return Err(format!(
            "unstable point at g = {}: lambda_min = {lambda_min:.3e}",
            params.g
        ));
    }
    let energy = model.energy(&p).map_err(|e| e.to_string())?.total;
    Ok(Gate {
        point: BranchPoint {
            g: params.g,
            m0: p.m0(),
            energy,
            lambda_min,
            pohozaev_rel: poho.rel_err,
            newton_iters: rep.newton_iters,
        },
        profile: p,
    })
}

fn solve_gated(model: &Model, grid: &Arc<RadialGrid>, seed: Seed) -> std::result::Result<Gate, String> {
    let rep = solve_report(&model.params, grid, &SolveOptions::with_seed(seed)).map_err(|e| e.to_string())?;
    evaluate(model, rep)
}

/// Traces AF solutions from just below `g*` down to `g_min`.
///
/// A point failing a gate is retried after an intermediate solve at half
/// the step; a second failure stops the trace and the partial branch is returned.
pub fn trace_branch(kappa: Kappa, d: u32, grid: &Arc<RadialGrid>, g_min: f64, steps: usize) -> Result<Branch> {
    let base = ModelParams::new(kappa, d as i64, 1.0)?;
    let core_rep = solve_report(&base, grid, &SolveOptions::default())?;
    let th = threshold_from_core(&base, core_rep.profile.clone())?;
    trace_from_threshold(&th, grid, g_min, steps, core_rep.newton_iters)
}

pub fn trace_from_threshold(
    th: &Threshold,
    grid: &Arc<RadialGrid>,
    g_min: f64,
    steps: usize,
    core_iters: usize,
) -> Result<Branch> {
    let g_star = th.g_star;
    let gs = schedule(g_star, g_min, steps)?;
    let params_star = ModelParams::new(th.kappa, th.d as i64, g_star)?;
    let core = th.normal_core.clone();
    let model_star = {
        let m = Model::new(params_star);
        if th.kappa.is_infinite() {
            m.with_reference(Arc::new(core.f.clone()))
        } else {
            m
        }
    };

    let bifurcation = BranchPoint {
        g: g_star,
        m0: core.m0(),
        energy: model_star.energy(&core)?.total,
        lambda_min: hessian_min_eig(&model_star, &core)?.lambda,
        pohozaev_rel: model_star.pohozaev(&core).rel_err,
        newton_iters: core_iters,
    };
    let mut branch = Branch {
        kappa: th.kappa,
        d: th.d,
        g_star,
        points: vec![bifurcation],
        profiles: vec![core.clone()],
        aborted: None,
    };

    let mut prev_g = g_star;
    let mut prev: Option<Profile> = None;
    for g in gs {
        let model = model_star.with_params(params_star.with_g(g)?);
        let seed = match &prev {
            Some(p) => Seed::Custom(p.clone()),
            None => Seed::Perturbed(0.1),
        };
        let gate = match solve_gated(&model, grid, seed.clone()) {
            Ok(gate) => Ok(gate),
            Err(_) => {
                let mid = 0.5 * (prev_g + g);
                let mid_model = model_star.with_params(params_star.with_g(mid)?);
                solve_gated(&mid_model, grid, seed).and_then(|m| solve_gated(&model, grid, Seed::Custom(m.profile)))
            }
        };
        match gate {
            Ok(gate) => {
                prev = Some(gate.profile.clone());
                branch.points.push(gate.point);
                branch.profiles.push(gate.profile);
                prev_g = g;
            }
            Err(msg) => {
                branch.aborted = Some(msg);
                break;
            }
        }
    }
    Ok(branch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub points_used: usize,
}

/// Fit of `log m0` against `log(g* − g)` on the points in `[0.8g*, g*)`.
pub fn transition_order(branch: &Branch) -> Result<TransitionFit> {
    let g_star = branch.g_star;
    let pts: Vec<&BranchPoint> = branch
        .points
        .iter()
        .filter(|p| p.m0 > 0.0 && p.g < g_star && p.g >= 0.8 * g_star)
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientPoints {
            needed: 10,
            got: pts.len(),
        });
    }
    let x: Vec<f64> = pts.iter().map(|p| (g_star - p.g).ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.m0.ln()).collect();
    let (a, b, r2) = linear_fit(&x, &y)?;
    Ok(TransitionFit {
        exponent: b,
        prefactor: a.exp(),
        r2,
        points_used: pts.len(),
    })
}

/// Root of a straight-line fit of `m0²` against `g` over the first points below `g*`.
pub fn extrapolated_threshold(branch: &Branch, points: usize) -> Result<f64> {
    let pts: Vec<&BranchPoint> = branch
        .points
        .iter()
        .filter(|p| p.m0 > 0.0 && p.g < branch.g_star)
        .take(points)
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: pts.len(),
        });
    }
    let x: Vec<f64> = pts.iter().map(|p| p.g).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.m0 * p.m0).collect();
    let (a, b, _) = linear_fit(&x, &y)?;
    Ok(-a / b)
}

#[derive(Debug, Clone, Serialize)]
pub struct BifurcationDirection {
    pub g_star: f64,
    /// `γ''(0)` for `m = t·w + O(t³)`, `g = g* + γ''(0)t²/2`, with `∫w² r dr = 1`.
    pub gamma2: f64,
    /// `∫ f̃ u* w² r dr`
    pub sign_integral: f64,
    /// `⟨(u*, v*, 0), (0, 0, w)⟩`; zero because `u*` carries no `m` component.
    pub kernel_overlap: f64,
    /// `w(0)` of the normalized kernel.
    pub kernel_at_origin: f64,
}

impl BifurcationDirection {
    /// Leading-order `m(0)` on the branch at `g`, or `None` on the wrong side.
    pub fn predicted_m0(&self, g: f64) -> Option<f64> {
        let t2 = 2.0 * (g - self.g_star) / self.gamma2;
        (t2 >= 0.0).then(|| t2.sqrt() * self.kernel_at_origin)
    }
}

/// Solves `F'_{(f,S)}[u*, v*] = −(2κ² f̃ w², 0)` and evaluates `γ''(0)`.
pub fn bifurcation_direction(kappa: Kappa, d: u32, grid: &Arc<RadialGrid>) -> Result<BifurcationDirection> {
    let base = ModelParams::new(kappa, d as i64, 1.0)?;
    let core = crate::solver::solve_normal_core(&base, grid, &SolveOptions::default())?;
    let th = threshold_from_core(&base, core)?;
    bifurcation_from_threshold(&th)
}

pub fn bifurcation_from_threshold(th: &Threshold) -> Result<BifurcationDirection> {
    let d2 = (th.d as f64).powi(2);
    match th.kappa {
        Kappa::Infinite => {
            return Err(Error::InvalidParameter(
                "bifurcation direction needs finite kappa".into(),
            ))
        }
        Kappa::Finite(k) if k * k < 2.0 * d2 => {
            return Err(Error::InvalidParameter(format!(
                "need kappa^2 >= 2 d^2, got kappa = {k}"
            )))
        }
        Kappa::Finite(_) => {}
    }
    let core = &th.normal_core;
    let grid = &core.grid;
    let params = ModelParams::new(th.kappa, th.d as i64, th.g_star)?;
    let k2 = params.kappa.k2();
    let wk = &th.eigen.vec;
    let (w, n) = (grid.w(), grid.n());

    let layout = Layout::new(n, !params.kappa.is_infinite(), Fields::NormalCore);
    let h = assemble_hessian(&params, core, &layout);
    let rhs_f: Vec<f64> = (0..n).map(|i| -w[i] * 2.0 * k2 * core.f[i] * wk[i] * wk[i]).collect();
    let zeros = vec![0.0; n];
    let b = layout.restrict(&rhs_f, &zeros, &zeros);
    let x = match h.cholesky() {
        Ok(c) => c.solve(&b),
        Err(_) => {
            let ones = vec![1.0; layout.len];
            crate::banded::BandLu::factor_shifted(&h, 0.0, &ones)?.solve(&b)
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite solution of the (f,S) block".into()));
    }
    let mut u = vec![0.0; n];
    for i in 0..n {
        if let Some(k) = layout.idx_f[i] {
            u[i] = x[k];
        }
    }
    let sign_integral: f64 = (0..n).map(|i| w[i] * core.f[i] * u[i] * wk[i] * wk[i]).sum();
    let quartic: f64 = (0..n).map(|i| w[i] * wk[i].powi(4)).sum();
    let norm: f64 = (0..n).map(|i| w[i] * wk[i] * wk[i]).sum();
    Ok(BifurcationDirection {
        g_star: th.g_star,
        gamma2: -2.0 * (sign_integral + quartic) / norm,
        sign_integral,
        kernel_overlap: 0.0,
        kernel_at_origin: wk[0] / norm.sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub max_pairwise_dist: f64,
    pub m0: Vec<f64>,
    pub sup_m: Vec<f64>,
    pub failures: Vec<(usize, String)>,
}

/// Solves from `n_starts` randomized seeds around the normal core.
pub fn uniqueness_probe(
    kappa: Kappa,
    d: u32,
    g: f64,
    grid: &Arc<RadialGrid>,
    n_starts: usize,
    rng_seed: u64,
) -> Result<ProbeResult> {
    let params = ModelParams::new(kappa, d as i64, g)?;
    let core = crate::solver::solve_normal_core(&params, grid, &SolveOptions::default())?;
    let mode = crate::spectral::normal_core_mode(&params, &core)?;
    let peak = mode.vec.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let width = kappa.core_width();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let mut solutions: Vec<Profile> = Vec::new();
    let mut m0 = Vec::new();
    let mut sup_m = Vec::new();
    let mut failures = Vec::new();
    for start in 0..n_starts {
        let amplitude = rng.gen_range(0.05..0.9);
        let length = width * rng.gen_range(0.5..6.0);
        let mix = rng.gen_range(0.0..1.0);
        let mut seed = core.clone();
        for (i, &r) in grid.r().iter().enumerate() {
            let bump = (-(r / length).powi(2)).exp();
            seed.m[i] = amplitude * (mix * mode.vec[i] / peak + (1.0 - mix) * bump);
        }
        match solve_report(&params, grid, &SolveOptions::with_seed(Seed::Custom(seed))) {
            Ok(rep) => {
                m0.push(rep.profile.m0());
                sup_m.push(rep.profile.sup_m());
                solutions.push(rep.profile);
            }
            Err(e) => failures.push((start, e.to_string())),
        }
    }
    let mut max_pairwise_dist = 0.0_f64;
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            max_pairwise_dist = max_pairwise_dist.max(solutions[i].distance(&solutions[j]));
        }
    }
    Ok(ProbeResult {
        max_pairwise_dist,
        m0,
        sup_m,
        failures,
    })
}
