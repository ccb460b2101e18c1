//! Pass/fail checks and quantitative reports on computed profiles.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, RadialGrid};
use crate::model::{Kappa, Model, ModelParams, Profile};
use crate::solver::{model_with_reference, solve, solve_normal_core, solve_report, Seed, SolveOptions};
use crate::spectral::threshold_from_core;

/// Slack applied to every admissibility inequality.
pub const ADMISSIBLE_SLACK: f64 = 1e-8;

/// Slack applied to every strict-monotonicity trend.
pub const TREND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<Check>,
    pub overall: bool,
}

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self {
            checks: Vec::new(),
            overall: true,
        }
    }

    /// Records `measured ≤ threshold`.
    pub fn at_most(&mut self, name: &str, measured: f64, threshold: f64) {
        let passed = measured <= threshold;
        self.push(name, passed, measured, threshold);
    }

    /// Records `measured ≥ threshold`.
    pub fn at_least(&mut self, name: &str, measured: f64, threshold: f64) {
        let passed = measured >= threshold;
        self.push(name, passed, measured, threshold);
    }

    pub fn push(&mut self, name: &str, passed: bool, measured: f64, threshold: f64) {
        self.overall &= passed;
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            measured,
            threshold,
        });
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl Default for DiagnosticsReport {
    fn default() -> Self {
        Self::new()
    }
}

fn fold_min(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

fn fold_max(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

/// Pointwise bounds and monotonicity expected of an admissible solution.
pub fn check_admissible(params: &ModelParams, p: &Profile) -> DiagnosticsReport {
    let n = p.f.len();
    let eps = ADMISSIBLE_SLACK;
    let interior = 1..n - 1;
    let d = params.d as f64;
    let mut rep = DiagnosticsReport::new();

    let finite = p.f.iter().chain(&p.s).chain(&p.m).all(|v| v.is_finite());
    rep.push("finite", finite, if finite { 0.0 } else { 1.0 }, 0.0);

    rep.at_least("f_positive", fold_min(interior.clone().map(|i| p.f[i])), -eps);
    rep.at_most("f_below_one", fold_max(interior.clone().map(|i| p.f[i])), 1.0 + eps);
    rep.at_least("m_nonnegative", fold_min((0..n - 1).map(|i| p.m[i])), -eps);
    rep.at_most("m_below_one", fold_max((0..n - 1).map(|i| p.m[i])), 1.0 + eps);
    rep.at_most(
        "f2_plus_m2_below_one",
        fold_max((0..n - 1).map(|i| p.f[i] * p.f[i] + p.m[i] * p.m[i])),
        1.0 + eps,
    );
    rep.at_least("f_increasing", fold_min((0..n - 1).map(|i| p.f[i + 1] - p.f[i])), -eps);
    if !params.kappa.is_infinite() {
        rep.at_least("s_positive", fold_min(interior.clone().map(|i| p.s[i])), -eps);
        rep.at_most("s_below_d", fold_max(interior.clone().map(|i| p.s[i])), d + eps);
        rep.at_least("s_increasing", fold_min((0..n - 1).map(|i| p.s[i + 1] - p.s[i])), -eps);
    }
    let m_max = fold_max(p.m.iter().copied());
    let normal = m_max < eps;
    if !normal {
        rep.at_most("m_decreasing", fold_max((0..n - 1).map(|i| p.m[i + 1] - p.m[i])), eps);
    }
    // Either m vanishes identically or it is positive at every interior node.
    let m_min = fold_min((0..n - 1).map(|i| p.m[i]));
    let dichotomy = normal || m_min > -eps;
    rep.push("m_dichotomy", dichotomy, if normal { m_max } else { m_min }, eps);
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailField {
    /// `1 − f`
    FDeficit,
    M,
    /// `d − S`
    SDeficit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `C₀ e^{−σr}`
    Exponential { c0: f64, sigma: f64 },
    /// `coeff/r² + second/r⁴`; `coeff` comes from the one-term fit.
    InverseSquare { coeff: f64, second: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub window: (f64, f64),
    pub r2: f64,
}

/// Least-squares line `y ≈ a + b x`; returns `(a, b, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: n.min(y.len()),
        });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints { needed: 2, got: 1 });
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok((a, b, r2))
}

/// Tail fit on `[R_max/2, 0.9 R_max]`.
pub fn decay_fit(params: &ModelParams, p: &Profile, field: TailField) -> Result<DecayFit> {
    let r = p.grid.r();
    let (lo, hi) = (0.5 * p.grid.r_max(), 0.9 * p.grid.r_max());
    let d = params.d as f64;
    let value = |i: usize| match field {
        TailField::FDeficit => 1.0 - p.f[i],
        TailField::M => p.m[i],
        TailField::SDeficit => d - p.s[i],
    };
    let window: Vec<usize> = (0..r.len()).filter(|&i| r[i] >= lo && r[i] <= hi).collect();
    let usable: Vec<usize> = window.iter().copied().filter(|&i| value(i) > 1e-14).collect();
    if usable.is_empty() {
        return Err(Error::DegenerateTail);
    }
    if usable.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: usable.len(),
        });
    }

    if field == TailField::FDeficit && params.kappa.is_infinite() {
        // One-term fit y ≈ c/r², and a two-term fit for the r⁻⁴ coefficient.
        let xs: Vec<f64> = usable.iter().map(|&i| r[i].powi(-2)).collect();
        let ys: Vec<f64> = usable.iter().map(|&i| value(i)).collect();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let coeff = sxy / sxx;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - coeff * x).powi(2)).sum();
        let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let r2 = (1.0 - ss_res / ss_tot).clamp(0.0, 1.0);
        // y r² ≈ c + c₂ / r²
        let zs: Vec<f64> = usable.iter().map(|&i| value(i) * r[i] * r[i]).collect();
        let (_, second, _) = linear_fit(&xs, &zs)?;
        return Ok(DecayFit {
            model: DecayModel::InverseSquare { coeff, second },
            window: (lo, hi),
            r2,
        });
    }

    let xs: Vec<f64> = usable.iter().map(|&i| r[i]).collect();
    let ys: Vec<f64> = usable.iter().map(|&i| value(i).ln()).collect();
    let (a, b, r2) = linear_fit(&xs, &ys)?;
    Ok(DecayFit {
        model: DecayModel::Exponential { c0: a.exp(), sigma: -b },
        window: (lo, hi),
        r2,
    })
}

fn grad_sq(grid: &RadialGrid, u: &[f64]) -> f64 {
    let r = grid.r();
    (0..r.len() - 1)
        .map(|c| {
            let h = r[c + 1] - r[c];
            0.5 * (r[c] + r[c + 1]) / h * (u[c + 1] - u[c]).powi(2)
        })
        .sum()
}

/// `√(∫[(u')² + u²] r dr)`.
pub fn h_norm(grid: &RadialGrid, u: &[f64]) -> Result<f64> {
    grid.check_len(u.len())?;
    let l2: f64 = grid.integrate(&u.iter().map(|v| v * v).collect::<Vec<_>>())?;
    Ok((grad_sq(grid, u) + l2).sqrt())
}

/// `√(∫[(u')² + u² + u²/r²] r dr)`; the `r = 0` node is left out of the last term.
pub fn x_norm(grid: &RadialGrid, u: &[f64]) -> Result<f64> {
    let h = h_norm(grid, u)?;
    let (r, w) = (grid.r(), grid.w());
    let extra: f64 = (1..r.len()).map(|i| w[i] * u[i] * u[i] / (r[i] * r[i])).sum();
    Ok((h * h + extra).sqrt())
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|p| p[1] < p[0] + TREND_SLACK)
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|p| p[1] > p[0] - TREND_SLACK)
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitRow {
    pub kappa: f64,
    pub sup_f: f64,
    pub sup_m: f64,
    pub sup_s_over_r: f64,
    pub g_star: f64,
    pub g_star_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitTable {
    pub d: u32,
    pub g: f64,
    pub g_star_inf: f64,
    pub m0_inf: f64,
    pub rows: Vec<LimitRow>,
    /// Strict decrease of `sup_f`, `sup_m`, `sup_s_over_r`, `g_star_gap` along the rows.
    pub decreasing: [bool; 4],
}

impl LimitTable {
    pub fn all_decreasing(&self) -> bool {
        self.decreasing.iter().all(|b| *b)
    }
}

/// Compares rescaled finite-κ solutions `f(r/κ)` with the high-κ solution.
///
/// The high-κ problem is solved on `inf_grid`; each finite κ on `spec`
/// graded for its own core. Independent κ values run on separate threads.
pub fn limit_check(kappas: &[f64], d: u32, g: f64, inf_grid: &Arc<RadialGrid>, spec: &GridSpec) -> Result<LimitTable> {
    if kappas.is_empty() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    let inf_params = ModelParams::new(Kappa::Infinite, d as i64, g)?;
    let core_inf = solve_normal_core(&inf_params, inf_grid, &SolveOptions::default())?;
    let th_inf = threshold_from_core(&inf_params, core_inf)?;
    let sol_inf = solve(&inf_params, inf_grid, &SolveOptions::with_seed(Seed::Perturbed(0.1)))?;

    let results: Vec<Result<LimitRow>> = std::thread::scope(|scope| {
        let handles: Vec<_> = kappas
            .iter()
            .map(|&k| {
                let sol_inf = &sol_inf;
                let g_star_inf = th_inf.g_star;
                scope.spawn(move || -> Result<LimitRow> {
                    let params = ModelParams::new(Kappa::finite(k)?, d as i64, g)?;
                    let grid = Arc::new(spec.build(1.0 / k)?);
                    let core = solve_normal_core(&params, &grid, &SolveOptions::default())?;
                    let th = threshold_from_core(&params, core)?;
                    let sol = solve(&params, &grid, &SolveOptions::with_seed(Seed::Perturbed(0.1)))?;
                    let (mut sup_f, mut sup_m, mut sup_s) = (0.0_f64, 0.0_f64, 0.0_f64);
                    for (i, &rh) in sol_inf.grid.r().iter().enumerate() {
                        let x = rh / k;
                        sup_f = sup_f.max((grid.interpolate(&sol.f, x) - sol_inf.f[i]).abs());
                        sup_m = sup_m.max((grid.interpolate(&sol.m, x) - sol_inf.m[i]).abs());
                        if rh > 0.0 {
                            sup_s = sup_s.max((grid.interpolate(&sol.s, x) / rh).abs());
                        }
                    }
                    Ok(LimitRow {
                        kappa: k,
                        sup_f,
                        sup_m,
                        sup_s_over_r: sup_s,
                        g_star: th.g_star,
                        g_star_gap: (th.g_star - g_star_inf).abs(),
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("limit worker panicked"))
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&LimitRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let decreasing = [
        strictly_decreasing(&col(|r| r.sup_f)),
        strictly_decreasing(&col(|r| r.sup_m)),
        strictly_decreasing(&col(|r| r.sup_s_over_r)),
        strictly_decreasing(&col(|r| r.g_star_gap)),
    ];
    Ok(LimitTable {
        d,
        g,
        g_star_inf: th_inf.g_star,
        m0_inf: sol_inf.m0(),
        rows,
        decreasing,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GScanRow {
    pub g: f64,
    pub energy: f64,
    pub m0: f64,
    /// `max_{r ≤ 5} f`
    pub f_core_max: f64,
    pub pohozaev_rel: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GScan {
    pub kappa: Kappa,
    pub d: u32,
    pub rows: Vec<GScanRow>,
    pub energy_decreasing: bool,
    pub m0_increasing: bool,
    pub f_core_decreasing: bool,
}

/// Domain radius for the scan at coupling `g`: at least 20 decay lengths
/// `1/(κ√g)` of the order parameter.
pub fn scan_r_max(kappa: Kappa, g: f64, base: f64) -> f64 {
    match kappa {
        Kappa::Finite(k) => base.max(20.0 / (k * g.sqrt())),
        Kappa::Infinite => base,
    }
}

fn resample(p: &Profile, grid: &Arc<RadialGrid>) -> Result<Profile> {
    let map = |u: &[f64]| grid.r().iter().map(|&x| p.grid.interpolate(u, x)).collect::<Vec<_>>();
    Profile::new(grid.clone(), map(&p.f), map(&p.s), map(&p.m))
}

/// Minimizers along a decreasing list of `g` values.
///
/// Each `g` is solved from the previous minimizer and from a perturbed
/// normal core; the lower-energy result is kept. The domain grows with
/// [`scan_r_max`] as `g` shrinks.
pub fn g_to_zero_scan(kappa: Kappa, d: u32, spec: &GridSpec, g_list: &[f64]) -> Result<GScan> {
    if g_list.is_empty() || g_list.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidParameter("g_list must be positive".into()));
    }
    if g_list.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::InvalidParameter("g_list must be decreasing".into()));
    }
    let base = ModelParams::new(kappa, d as i64, g_list[0])?;
    let mut rows = Vec::new();
    let mut prev: Option<Profile> = None;
    for &g in g_list {
        let params = base.with_g(g)?;
        let spec_g = GridSpec {
            r_max: scan_r_max(kappa, g, spec.r_max),
            ..*spec
        };
        let grid = Arc::new(spec_g.build(kappa.core_width())?);
        let (model, _) = model_with_reference(&params, &grid)?;
        let mut best: Option<(f64, Profile)> = None;
        let mut seeds = vec![Seed::Perturbed(0.5)];
        if let Some(p) = &prev {
            seeds.push(Seed::Custom(resample(p, &grid)?));
        }
        for seed in seeds {
            let Ok(rep) = solve_report(&params, &grid, &SolveOptions::with_seed(seed)) else {
                continue;
            };
            let e = model.energy(&rep.profile)?.total;
            if best.as_ref().map_or(true, |(eb, _)| e < *eb) {
                best = Some((e, rep.profile));
            }
        }
        let Some((energy, p)) = best else {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: f64::NAN,
                last: Box::new(match &prev {
                    Some(p) => resample(p, &grid)?,
                    None => Profile::new(
                        grid.clone(),
                        vec![0.0; grid.n()],
                        vec![0.0; grid.n()],
                        vec![0.0; grid.n()],
                    )?,
                }),
                history: Vec::new(),
            });
        };
        let f_core_max = fold_max(grid.r().iter().zip(&p.f).filter(|(r, _)| **r <= 5.0).map(|(_, f)| *f));
        rows.push(GScanRow {
            g,
            energy,
            m0: p.m0(),
            f_core_max,
            pohozaev_rel: model.pohozaev(&p).rel_err,
        });
        prev = Some(p);
    }
    let col = |f: fn(&GScanRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    Ok(GScan {
        kappa,
        d,
        energy_decreasing: strictly_decreasing(&col(|r| r.energy)),
        m0_increasing: strictly_increasing(&col(|r| r.m0)),
        f_core_decreasing: strictly_decreasing(&col(|r| r.f_core_max)),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyScaling {
    pub kappas: Vec<f64>,
    pub energies: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fit of the minimizer energy against `ln κ`.
pub fn energy_scaling(kappas: &[f64], d: u32, g: f64, spec: &GridSpec) -> Result<EnergyScaling> {
    if kappas.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: kappas.len(),
        });
    }
    let mut energies = Vec::with_capacity(kappas.len());
    for &k in kappas {
        let params = ModelParams::new(Kappa::finite(k)?, d as i64, g)?;
        let grid = Arc::new(spec.build(1.0 / k)?);
        let p = solve(&params, &grid, &SolveOptions::with_seed(Seed::Perturbed(0.1)))?;
        energies.push(Model::new(params).energy(&p)?.total);
    }
    let logs: Vec<f64> = kappas.iter().map(|k| k.ln()).collect();
    let (intercept, slope, r2) = linear_fit(&logs, &energies)?;
    Ok(EnergyScaling {
        kappas: kappas.to_vec(),
        energies,
        slope,
        intercept,
        r2,
    })
}
