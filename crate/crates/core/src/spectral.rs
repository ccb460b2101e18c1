//! Ground states of radial Schrödinger operators, the bifurcation threshold,
//! and the smallest eigenvalue of the second variation.
//!
//! All eigenproblems are generalized, `A x = λ M x`, with `M` the diagonal
//! quadrature metric. The smallest eigenvalue is bracketed by Sylvester
//! inertia counts, refined by shifted inverse iteration, and polished by
//! Rayleigh-quotient iteration.

use std::sync::Arc;

use serde::Serialize;

use crate::banded::{BandLu, SymBand};
use crate::error::{Error, Result};
use crate::grid::{OriginBc, RadialGrid};
use crate::model::{Kappa, Model, ModelParams, Profile, TangentDirection};
use crate::solver::{solve_normal_core, SolveOptions};

/// Below this magnitude an eigenvalue is flagged as degenerate.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Eigenfunction on every node, `Σ w v² = 1`, positive sum.
    pub vec: Vec<f64>,
    pub degenerate: bool,
    /// `‖M⁻¹A v − λ v‖` in the quadrature norm.
    pub residual: f64,
}

/// Lowest mode of the second variation.
#[derive(Debug, Clone)]
pub struct StabilityMode {
    pub lambda: f64,
    pub direction: TangentDirection,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct Threshold {
    pub kappa: Kappa,
    pub d: u32,
    pub g_star: f64,
    pub lambda0: f64,
    pub eigen: EigenPair,
    pub normal_core: Profile,
}

pub(crate) struct GenEig {
    pub lambda: f64,
    pub x: Vec<f64>,
}

fn m_normalize(x: &mut [f64], mass: &[f64]) {
    let nrm = x.iter().zip(mass).map(|(v, m)| m * v * v).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= nrm;
    }
}

fn rayleigh(a: &SymBand, mass: &[f64], x: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let num: f64 = x.iter().zip(&ax).map(|(p, q)| p * q).sum();
    let den: f64 = x.iter().zip(mass).map(|(p, m)| m * p * p).sum();
    num / den
}

fn count_below(a: &SymBand, sigma: f64, mass: &[f64]) -> usize {
    let mut s = sigma;
    for k in 0..8 {
        if let Some(c) = a.count_below(s, mass) {
            return c;
        }
        s = sigma * (1.0 + 1e-12 * (k + 1) as f64) + 1e-14 * (k + 1) as f64;
    }
    a.count_below(s, mass).unwrap_or(0)
}

fn relative_residual(a: &SymBand, mass: &[f64], x: &[f64], lambda: f64) -> f64 {
    let ax = a.matvec(x);
    ax.iter()
        .zip(x)
        .zip(mass)
        .map(|((p, q), m)| {
            let r = p / m - lambda * q;
            m * r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Smallest eigenpair of `A x = λ M x`.
pub(crate) fn smallest_generalized(a: &SymBand, mass: &[f64]) -> Result<GenEig> {
    let n = a.n();
    if n == 0 {
        return Err(Error::EigenFailure("empty operator".into()));
    }
    let scale = a.gershgorin_max(mass).max(1.0);
    let mut lo = a.gershgorin_min(mass);
    lo -= 1e-6 * scale.max(lo.abs());
    while count_below(a, lo, mass) > 0 {
        lo -= scale;
    }

    // Upper end of the bracket: a Rayleigh quotient after a few inverse steps.
    let chol = a_shift(a, lo, mass).cholesky()?;
    let mut x = vec![1.0; n];
    m_normalize(&mut x, mass);
    for _ in 0..3 {
        let b: Vec<f64> = x.iter().zip(mass).map(|(v, m)| v * m).collect();
        x = chol.solve(&b);
        m_normalize(&mut x, mass);
    }
    let mut hi = rayleigh(a, mass, &x);
    hi += 1e-9 * scale.max(hi.abs()) + 1e-12;
    if count_below(a, hi, mass) == 0 {
        return Err(Error::EigenFailure("Rayleigh quotient below the spectrum".into()));
    }

    // Bisect until exactly one eigenvalue lies in [lo, hi) and the bracket is tight.
    let tight = |lo: f64, hi: f64| hi - lo <= 1e-7 * hi.abs().max(1e-3);
    let mut count_hi = count_below(a, hi, mass);
    for _ in 0..300 {
        if count_hi == 1 && tight(lo, hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let c = count_below(a, mid, mass);
        if c == 0 {
            lo = mid;
        } else {
            hi = mid;
            count_hi = c;
        }
    }
    if count_hi != 1 {
        return Err(Error::EigenFailure("could not isolate the lowest eigenvalue".into()));
    }

    let shift = lo - 1e-3 * (hi - lo).max(1e-12 * scale);
    let chol = a_shift(a, shift, mass).cholesky()?;
    for _ in 0..6 {
        let b: Vec<f64> = x.iter().zip(mass).map(|(v, m)| v * m).collect();
        x = chol.solve(&b);
        m_normalize(&mut x, mass);
    }
    let mut lambda = rayleigh(a, mass, &x);

    // Rayleigh-quotient polish; kept only while it stays in the bracket.
    let tol = 1e-11 * scale;
    for _ in 0..5 {
        if relative_residual(a, mass, &x, lambda) < tol {
            break;
        }
        let Ok(lu) = BandLu::factor_shifted(a, lambda, mass) else {
            break;
        };
        let b: Vec<f64> = x.iter().zip(mass).map(|(v, m)| v * m).collect();
        let mut y = lu.solve(&b);
        if y.iter().any(|v| !v.is_finite()) {
            break;
        }
        m_normalize(&mut y, mass);
        let mu = rayleigh(a, mass, &y);
        let slack = 1e-8 * scale.max(1.0);
        if mu < lo - slack || mu > hi + slack {
            break;
        }
        x = y;
        lambda = mu;
    }
    if x.iter().sum::<f64>() < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
    Ok(GenEig { lambda, x })
}

fn a_shift(a: &SymBand, sigma: f64, mass: &[f64]) -> SymBand {
    let mut s = a.clone();
    s.add_diag(mass, -sigma);
    s
}

/// Nodes carrying unknowns for a scalar field with the given origin condition.
fn scalar_nodes(n: usize, bc: OriginBc) -> std::ops::Range<usize> {
    match bc {
        OriginBc::Neumann0 => 0..n - 1,
        OriginBc::Dirichlet0 => 1..n - 1,
    }
}

/// Smallest eigenvalue of `−Δ_r − V` (Dirichlet at `R_max`).
pub fn ground_state(grid: &RadialGrid, potential: &[f64], bc: OriginBc) -> Result<EigenPair> {
    grid.check_len(potential.len())?;
    if potential.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("potential must be finite".into()));
    }
    let n = grid.n();
    let nodes = scalar_nodes(n, bc);
    let off = nodes.start;
    let len = nodes.len();
    let w = grid.w();
    let mut a = SymBand::zeros(len, 1);
    for (c, k) in grid.cell_a().iter().enumerate() {
        let (i, j) = (c, c + 1);
        let ii = nodes.contains(&i).then(|| i - off);
        let jj = nodes.contains(&j).then(|| j - off);
        if let Some(ii) = ii {
            a.add(ii, ii, *k);
        }
        if let Some(jj) = jj {
            a.add(jj, jj, *k);
        }
        if let (Some(ii), Some(jj)) = (ii, jj) {
            a.add(ii, jj, -k);
        }
    }
    let mass: Vec<f64> = nodes.clone().map(|i| w[i]).collect();
    for i in nodes.clone() {
        a.add(i - off, i - off, -w[i] * potential[i]);
    }
    let eig = smallest_generalized(&a, &mass)?;
    let residual = relative_residual(&a, &mass, &eig.x, eig.lambda);
    let mut vec = vec![0.0; n];
    for i in nodes {
        vec[i] = eig.x[i - off];
    }
    Ok(EigenPair {
        lambda: eig.lambda,
        vec,
        degenerate: eig.lambda.abs() < DEGENERATE_EIGENVALUE,
        residual,
    })
}

/// Ground state of the `m`-block operator `−Δ_r − κ²(1 − f²)` at a normal core.
pub fn normal_core_mode(params: &ModelParams, normal_core: &Profile) -> Result<EigenPair> {
    let k2 = params.kappa.k2();
    let v: Vec<f64> = normal_core.f.iter().map(|f| k2 * (1.0 - f * f)).collect();
    ground_state(&normal_core.grid, &v, OriginBc::Neumann0)
}

/// `g*` from the normal-core ground state: `−λ₀/κ²` (or `−λ₀` at `κ = ∞`).
pub fn threshold_g(kappa: Kappa, d: u32, grid: &Arc<RadialGrid>) -> Result<Threshold> {
    // The normal core does not depend on g.
    let params = ModelParams::new(kappa, d as i64, 1.0)?;
    let core = solve_normal_core(&params, grid, &SolveOptions::default())?;
    threshold_from_core(&params, core)
}

pub fn threshold_from_core(params: &ModelParams, core: Profile) -> Result<Threshold> {
    let eigen = normal_core_mode(params, &core)?;
    let lambda0 = eigen.lambda;
    Ok(Threshold {
        kappa: params.kappa,
        d: params.d,
        g_star: -lambda0 / params.kappa.k2(),
        lambda0,
        eigen,
        normal_core: core,
    })
}

/// Smallest eigenvalue of the full second variation in the quadrature metric.
pub fn hessian_min_eig(model: &Model, p: &Profile) -> Result<StabilityMode> {
    let h = model.hessian(p);
    let mass = h.mass();
    let eig = smallest_generalized(&h.band, &mass)?;
    let direction = h.layout.to_direction(&h.grid, &{
        // to_direction divides by the metric; undo that for a vector (not a covector).
        let mut y = eig.x.clone();
        for (v, m) in y.iter_mut().zip(&mass) {
            *v *= m;
        }
        y
    });
    Ok(StabilityMode {
        lambda: eig.lambda,
        direction,
        degenerate: eig.lambda.abs() < DEGENERATE_EIGENVALUE,
    })
}
