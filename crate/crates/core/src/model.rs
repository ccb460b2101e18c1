//! Parameters, profiles, the discrete energies and their first and second variations.
//!
//! The discrete energy is
//!
//! ```text
//! E = ½Σ_c a_c (Δf)² + ½Σ_c b_c (ΔS)² + ½Σ_c a_c (Δm)² + Σ_i w_i e(r_i, f_i, S_i, m_i)
//! ```
//!
//! with `e` the pointwise density (winding term dropped at `r = 0`). Every
//! derivative below is exact for this sum, so the residual is the true
//! gradient and the Hessian the true second derivative.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::banded::SymBand;
use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Coefficient of `(fu + mw)²` in the quotient form.
pub const QUOTIENT_COEFF: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Finite(f64),
    Infinite,
}

impl Kappa {
    pub fn parse(s: &str) -> Result<Kappa> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Kappa::Infinite);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("kappa must be a number or 'inf', got '{s}'")))?;
        Kappa::finite(v)
    }

    pub fn finite(v: f64) -> Result<Kappa> {
        if v > 0.0 && v.is_finite() {
            Ok(Kappa::Finite(v))
        } else {
            Err(Error::InvalidParameter(format!("kappa must be positive, got {v}")))
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Kappa::Infinite)
    }

    /// `κ²`, or 1 in the high-kappa system.
    pub fn k2(&self) -> f64 {
        match self {
            Kappa::Finite(k) => k * k,
            Kappa::Infinite => 1.0,
        }
    }

    /// Width of the vortex core on the solver's length scale.
    pub fn core_width(&self) -> f64 {
        match self {
            Kappa::Finite(k) => 1.0 / k,
            Kappa::Infinite => 1.0,
        }
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Finite(k) => write!(f, "{k}"),
            Kappa::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Kappa {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Kappa::Finite(k) => s.serialize_f64(*k),
            Kappa::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Kappa {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let k = match Raw::deserialize(d)? {
            Raw::Num(v) => Kappa::finite(v),
            Raw::Text(s) => Kappa::parse(&s),
        };
        k.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: Kappa,
    pub d: u32,
    pub g: f64,
}

impl ModelParams {
    /// Negative degrees are folded onto `|d|` (the energy is invariant under `d → −d, S → −S`).
    pub fn new(kappa: Kappa, d: i64, g: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("degree d must be nonzero".into()));
        }
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::InvalidParameter(format!("g must be positive, got {g}")));
        }
        if let Kappa::Finite(k) = kappa {
            Kappa::finite(k)?;
        }
        let d =
            u32::try_from(d.unsigned_abs()).map_err(|_| Error::InvalidParameter(format!("degree {d} too large")))?;
        Ok(Self { kappa, d, g })
    }

    pub fn with_g(&self, g: f64) -> Result<Self> {
        Self::new(self.kappa, self.d as i64, g)
    }

    fn df(&self) -> f64 {
        self.d as f64
    }
}

/// Sampled fields on a grid. `s` is identically zero in the high-kappa system.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: Arc<RadialGrid>,
    pub f: Vec<f64>,
    pub s: Vec<f64>,
    pub m: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Arc<RadialGrid>, f: Vec<f64>, s: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        for v in [&f, &s, &m] {
            grid.check_len(v.len())?;
        }
        Ok(Self { grid, f, s, m })
    }

    pub fn m0(&self) -> f64 {
        self.m[0]
    }

    pub fn sup_m(&self) -> f64 {
        self.m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Sup-norm distance over all three fields.
    pub fn distance(&self, other: &Profile) -> f64 {
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()));
        sup(&self.f, &other.f)
            .max(sup(&self.s, &other.s))
            .max(sup(&self.m, &other.m))
    }
}

/// Perturbation `(f, S, m) → (f + u, S + r·v, m + w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentDirection {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl TangentDirection {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
            w: vec![0.0; n],
        }
    }

    /// Quadrature inner product `Σ w_i (a_u b_u + a_v b_v + a_w b_w)`.
    pub fn dot(grid: &RadialGrid, a: &TangentDirection, b: &TangentDirection) -> f64 {
        let w = grid.w();
        (0..w.len())
            .map(|i| w[i] * (a.u[i] * b.u[i] + a.v[i] * b.v[i] + a.w[i] * b.w[i]))
            .sum()
    }

    pub fn sup(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .chain(&self.w)
            .fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// The displaced profile `p + t·self`.
    pub fn displace(&self, p: &Profile, t: f64) -> Profile {
        let r = p.grid.r();
        let mut q = p.clone();
        for i in 0..r.len() {
            q.f[i] += t * self.u[i];
            q.s[i] += t * r[i] * self.v[i];
            q.m[i] += t * self.w[i];
        }
        q
    }
}

/// Energy split by term; each term carries the overall ½.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub grad_f: f64,
    pub magnetic: f64,
    pub grad_m: f64,
    pub mass_m: f64,
    pub winding: f64,
    pub potential: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pohozaev {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

/// Which fields are unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Fields {
    /// `m` frozen at zero.
    NormalCore,
    All,
}

/// Map from (field, node) to the index of a free unknown, interleaved per node.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub(crate) idx_f: Vec<Option<usize>>,
    pub(crate) idx_s: Vec<Option<usize>>,
    pub(crate) idx_m: Vec<Option<usize>>,
    pub(crate) len: usize,
    pub(crate) kd: usize,
}

impl Layout {
    pub(crate) fn new(n: usize, has_s: bool, fields: Fields) -> Self {
        let has_m = fields == Fields::All;
        let mut idx_f = vec![None; n];
        let mut idx_s = vec![None; n];
        let mut idx_m = vec![None; n];
        let mut next = 0;
        for i in 0..n {
            let interior = i > 0 && i + 1 < n;
            if interior {
                idx_f[i] = Some(next);
                next += 1;
                if has_s {
                    idx_s[i] = Some(next);
                    next += 1;
                }
            }
            if has_m && i + 1 < n {
                idx_m[i] = Some(next);
                next += 1;
            }
        }
        let mut kd = 0;
        for i in 0..n {
            let at = [idx_f[i], idx_s[i], idx_m[i]];
            let lo = at.iter().flatten().min();
            let hi = at.iter().flatten().max();
            if let (Some(lo), Some(hi)) = (lo, hi) {
                kd = kd.max(hi - lo);
            }
            if i + 1 < n {
                for (a, b) in [
                    (idx_f[i], idx_f[i + 1]),
                    (idx_s[i], idx_s[i + 1]),
                    (idx_m[i], idx_m[i + 1]),
                ] {
                    if let (Some(a), Some(b)) = (a, b) {
                        kd = kd.max(b - a);
                    }
                }
            }
        }
        Self {
            idx_f,
            idx_s,
            idx_m,
            len: next,
            kd,
        }
    }

    pub(crate) fn gather(&self, p: &Profile) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for i in 0..p.f.len() {
            if let Some(k) = self.idx_f[i] {
                x[k] = p.f[i];
            }
            if let Some(k) = self.idx_s[i] {
                x[k] = p.s[i];
            }
            if let Some(k) = self.idx_m[i] {
                x[k] = p.m[i];
            }
        }
        x
    }

    pub(crate) fn scatter(&self, x: &[f64], p: &mut Profile) {
        for i in 0..p.f.len() {
            if let Some(k) = self.idx_f[i] {
                p.f[i] = x[k];
            }
            if let Some(k) = self.idx_s[i] {
                p.s[i] = x[k];
            }
            if let Some(k) = self.idx_m[i] {
                p.m[i] = x[k];
            }
        }
    }

    /// Restriction of a nodal field triple to the free unknowns.
    pub(crate) fn restrict(&self, gf: &[f64], gs: &[f64], gm: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for i in 0..gf.len() {
            if let Some(k) = self.idx_f[i] {
                x[k] = gf[i];
            }
            if let Some(k) = self.idx_s[i] {
                x[k] = gs[i];
            }
            if let Some(k) = self.idx_m[i] {
                x[k] = gm[i];
            }
        }
        x
    }

    /// Nodal form of a tangent direction (`δS = r·v`), restricted to the unknowns.
    pub(crate) fn from_direction(&self, grid: &RadialGrid, dir: &TangentDirection) -> Vec<f64> {
        let dv: Vec<f64> = grid.r().iter().zip(&dir.v).map(|(r, v)| r * v).collect();
        self.restrict(&dir.u, &dv, &dir.w)
    }

    /// Turns a nodal covector (a gradient) into a tangent direction via the mass matrix.
    pub(crate) fn to_direction(&self, grid: &RadialGrid, y: &[f64]) -> TangentDirection {
        let (r, w) = (grid.r(), grid.w());
        let mut out = TangentDirection::zeros(r.len());
        for i in 0..r.len() {
            if let Some(k) = self.idx_f[i] {
                out.u[i] = y[k] / w[i];
            }
            if let Some(k) = self.idx_s[i] {
                out.v[i] = y[k] * r[i] / w[i];
            }
            if let Some(k) = self.idx_m[i] {
                out.w[i] = y[k] / w[i];
            }
        }
        out
    }

    /// Diagonal metric of the tangent coordinates: `w` for `f, m` and `w/r²` for `S`.
    pub(crate) fn mass(&self, grid: &RadialGrid) -> Vec<f64> {
        let (r, w) = (grid.r(), grid.w());
        let mut out = vec![0.0; self.len];
        for i in 0..r.len() {
            if let Some(k) = self.idx_f[i] {
                out[k] = w[i];
            }
            if let Some(k) = self.idx_s[i] {
                out[k] = w[i] / (r[i] * r[i]);
            }
            if let Some(k) = self.idx_m[i] {
                out[k] = w[i];
            }
        }
        out
    }
}

/// Pointwise density and its derivatives at one node.
struct Local {
    winding: f64,
    mass: f64,
    potential: f64,
    ef: f64,
    es: f64,
    em: f64,
    hff: f64,
    hfs: f64,
    hfm: f64,
    hss: f64,
    hmm: f64,
}

fn local(params: &ModelParams, r: f64, f: f64, s: f64, m: f64) -> Local {
    let k2 = params.kappa.k2();
    let g = params.g;
    let q = 1.0 - f * f - m * m;
    let (winding, ef_w, es, hff_w, hfs, hss) = if r > 0.0 {
        let ds = params.df() - s;
        let ir2 = 1.0 / (r * r);
        (
            0.5 * ds * ds * f * f * ir2,
            ds * ds * f * ir2,
            -ds * f * f * ir2,
            ds * ds * ir2,
            -2.0 * ds * f * ir2,
            f * f * ir2,
        )
    } else {
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    };
    Local {
        winding,
        mass: 0.5 * k2 * g * m * m,
        potential: 0.25 * k2 * q * q,
        ef: ef_w - k2 * q * f,
        es,
        em: k2 * g * m - k2 * q * m,
        hff: hff_w - k2 * q + 2.0 * k2 * f * f,
        hfs,
        hfm: 2.0 * k2 * f * m,
        hss,
        hmm: k2 * g - k2 * q + 2.0 * k2 * m * m,
    }
}

/// Applies the cell stiffness `Σ_c coeff_c (u_{c+1} − u_c)(·)` to `u`.
fn stiffness_apply(coeff: &[f64], u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for (c, k) in coeff.iter().enumerate() {
        let flux = k * (u[c + 1] - u[c]);
        out[c] -= flux;
        out[c + 1] += flux;
    }
    out
}

fn stiffness_energy(coeff: &[f64], u: &[f64]) -> f64 {
    0.5 * coeff
        .iter()
        .enumerate()
        .map(|(c, k)| k * (u[c + 1] - u[c]).powi(2))
        .sum::<f64>()
}

/// Energy without the high-kappa reference subtraction.
pub(crate) fn raw_energy(params: &ModelParams, p: &Profile) -> EnergyBreakdown {
    let grid = &p.grid;
    let (r, w) = (grid.r(), grid.w());
    let grad_f = stiffness_energy(grid.cell_a(), &p.f);
    let grad_m = stiffness_energy(grid.cell_a(), &p.m);
    let magnetic = if params.kappa.is_infinite() {
        0.0
    } else {
        stiffness_energy(grid.cell_b(), &p.s)
    };
    let (mut winding, mut mass_m, mut potential) = (0.0, 0.0, 0.0);
    let s_of = |i: usize| if params.kappa.is_infinite() { 0.0 } else { p.s[i] };
    for i in 0..r.len() {
        let l = local(params, r[i], p.f[i], s_of(i), p.m[i]);
        winding += w[i] * l.winding;
        mass_m += w[i] * l.mass;
        potential += w[i] * l.potential;
    }
    EnergyBreakdown {
        grad_f,
        magnetic,
        grad_m,
        mass_m,
        winding,
        potential,
        total: grad_f + magnetic + grad_m + mass_m + winding + potential,
    }
}

/// Nodal gradient `∂E/∂(f_i, S_i, m_i)` at every node, clamped or not.
pub(crate) fn nodal_gradient(params: &ModelParams, p: &Profile) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let grid = &p.grid;
    let (r, w) = (grid.r(), grid.w());
    let inf = params.kappa.is_infinite();
    let mut gf = stiffness_apply(grid.cell_a(), &p.f);
    let mut gm = stiffness_apply(grid.cell_a(), &p.m);
    let mut gs = if inf {
        vec![0.0; r.len()]
    } else {
        stiffness_apply(grid.cell_b(), &p.s)
    };
    for i in 0..r.len() {
        let s = if inf { 0.0 } else { p.s[i] };
        let l = local(params, r[i], p.f[i], s, p.m[i]);
        gf[i] += w[i] * l.ef;
        gm[i] += w[i] * l.em;
        if !inf {
            gs[i] += w[i] * l.es;
        }
    }
    (gf, gs, gm)
}

pub(crate) fn free_gradient(params: &ModelParams, p: &Profile, layout: &Layout) -> Vec<f64> {
    let (gf, gs, gm) = nodal_gradient(params, p);
    layout.restrict(&gf, &gs, &gm)
}

/// Second derivative of the discrete energy restricted to the free unknowns.
pub(crate) fn assemble_hessian(params: &ModelParams, p: &Profile, layout: &Layout) -> SymBand {
    let grid = &p.grid;
    let (r, w) = (grid.r(), grid.w());
    let inf = params.kappa.is_infinite();
    let mut h = SymBand::zeros(layout.len, layout.kd);
    let mut cells = |idx: &[Option<usize>], coeff: &[f64]| {
        for (c, k) in coeff.iter().enumerate() {
            let (a, b) = (idx[c], idx[c + 1]);
            if let Some(a) = a {
                h.add(a, a, *k);
            }
            if let Some(b) = b {
                h.add(b, b, *k);
            }
            if let (Some(a), Some(b)) = (a, b) {
                h.add(a, b, -k);
            }
        }
    };
    cells(&layout.idx_f, grid.cell_a());
    cells(&layout.idx_m, grid.cell_a());
    if !inf {
        cells(&layout.idx_s, grid.cell_b());
    }
    for i in 0..r.len() {
        let s = if inf { 0.0 } else { p.s[i] };
        let l = local(params, r[i], p.f[i], s, p.m[i]);
        let (jf, js, jm) = (layout.idx_f[i], layout.idx_s[i], layout.idx_m[i]);
        let wi = w[i];
        if let Some(a) = jf {
            h.add(a, a, wi * l.hff);
        }
        if let Some(a) = js {
            h.add(a, a, wi * l.hss);
        }
        if let Some(a) = jm {
            h.add(a, a, wi * l.hmm);
        }
        if let (Some(a), Some(b)) = (jf, js) {
            h.add(a, b, wi * l.hfs);
        }
        if let (Some(a), Some(b)) = (jf, jm) {
            h.add(a, b, wi * l.hfm);
        }
    }
    h
}

/// Discrete second variation as an operator on tangent directions.
#[derive(Debug, Clone)]
pub struct Hessian {
    pub(crate) grid: Arc<RadialGrid>,
    pub(crate) layout: Layout,
    pub(crate) band: SymBand,
}

impl Hessian {
    /// `H·dir`, symmetric in the quadrature inner product.
    pub fn apply(&self, dir: &TangentDirection) -> TangentDirection {
        let x = self.layout.from_direction(&self.grid, dir);
        let y = self.band.matvec(&x);
        self.layout.to_direction(&self.grid, &y)
    }

    /// `⟨a, H b⟩`.
    pub fn form(&self, a: &TangentDirection, b: &TangentDirection) -> f64 {
        let xa = self.layout.from_direction(&self.grid, a);
        let xb = self.layout.from_direction(&self.grid, b);
        let y = self.band.matvec(&xb);
        xa.iter().zip(&y).map(|(p, q)| p * q).sum()
    }

    pub(crate) fn mass(&self) -> Vec<f64> {
        self.layout.mass(&self.grid)
    }
}

/// Parameters plus, for the high-kappa system, the normal-core reference `f̃∞`.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    reference: Option<Arc<Vec<f64>>>,
}

impl Model {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            reference: None,
        }
    }

    pub fn with_reference(mut self, f_ref: Arc<Vec<f64>>) -> Self {
        self.reference = Some(f_ref);
        self
    }

    /// Same reference, different parameters.
    pub fn with_params(&self, params: ModelParams) -> Self {
        Self {
            params,
            reference: self.reference.clone(),
        }
    }

    pub fn reference(&self) -> Option<&Arc<Vec<f64>>> {
        self.reference.as_ref()
    }

    pub(crate) fn has_s(&self) -> bool {
        !self.params.kappa.is_infinite()
    }

    pub fn energy(&self, p: &Profile) -> Result<EnergyBreakdown> {
        let mut e = raw_energy(&self.params, p);
        if self.params.kappa.is_infinite() {
            let f_ref = self.reference.as_ref().ok_or(Error::MissingReference)?;
            if f_ref.len() != p.f.len() {
                return Err(Error::GridMismatch);
            }
            let (r, w) = (p.grid.r(), p.grid.w());
            let d2 = (self.params.d as f64).powi(2);
            let shift: f64 = (1..r.len())
                .map(|i| 0.5 * w[i] * d2 * f_ref[i] * f_ref[i] / (r[i] * r[i]))
                .sum();
            e.winding -= shift;
            e.total -= shift;
        }
        Ok(e)
    }

    /// Gradient of the energy in the quadrature metric. Clamped rows carry
    /// the boundary-condition defect instead.
    pub fn residual(&self, p: &Profile) -> TangentDirection {
        let n = p.f.len();
        let layout = Layout::new(n, self.has_s(), Fields::All);
        let (gf, gs, gm) = nodal_gradient(&self.params, p);
        let mut out = layout.to_direction(&p.grid, &layout.restrict(&gf, &gs, &gm));
        let d = self.params.d as f64;
        out.u[0] = p.f[0];
        out.u[n - 1] = p.f[n - 1] - 1.0;
        out.w[n - 1] = p.m[n - 1];
        if self.has_s() {
            out.v[0] = p.s[0];
            out.v[n - 1] = p.s[n - 1] - d;
        }
        out
    }

    pub fn hessian(&self, p: &Profile) -> Hessian {
        let layout = Layout::new(p.f.len(), self.has_s(), Fields::All);
        let band = assemble_hessian(&self.params, p, &layout);
        Hessian {
            grid: p.grid.clone(),
            layout,
            band,
        }
    }

    /// `∫{f²[(u/f)']² + m²[(w/m)']² + c(fu+mw)²} r dr` with `c` = [`QUOTIENT_COEFF`].
    pub fn quotient_form(&self, p: &Profile, dir: &TangentDirection) -> Result<f64> {
        self.quotient_form_with(p, dir, QUOTIENT_COEFF)
    }

    pub fn quotient_form_with(&self, p: &Profile, dir: &TangentDirection, c: f64) -> Result<f64> {
        if !self.params.kappa.is_infinite() {
            return Err(Error::InvalidParameter(
                "quotient form is defined for kappa = inf".into(),
            ));
        }
        let n = p.f.len();
        if (1..n - 1).any(|i| !(p.f[i] > 0.0)) {
            return Err(Error::NonPositive("f"));
        }
        if (1..n - 1).any(|i| !(p.m[i] > 0.0)) {
            return Err(Error::NonPositive("m"));
        }
        let (parts, cross) = quotient_parts(p, dir);
        Ok(parts + c * cross)
    }

    pub fn pohozaev(&self, p: &Profile) -> Pohozaev {
        let grid = &p.grid;
        let w = grid.w();
        let k2 = self.params.kappa.k2();
        let (mut mass, mut pot) = (0.0, 0.0);
        for i in 0..w.len() {
            let q = 1.0 - p.f[i] * p.f[i] - p.m[i] * p.m[i];
            mass += w[i] * p.m[i] * p.m[i];
            pot += w[i] * q * q;
        }
        let lhs = self.params.g * k2 * mass + 0.5 * k2 * pot;
        let rhs = if self.params.kappa.is_infinite() {
            0.5 * (self.params.d as f64).powi(2)
        } else {
            2.0 * stiffness_energy(grid.cell_b(), &p.s)
        };
        Pohozaev {
            lhs,
            rhs,
            rel_err: (lhs - rhs).abs() / rhs.max(1e-30),
        }
    }
}

/// `(Σ quotient-gradient terms, Σ w (fu + mw)²)`.
pub(crate) fn quotient_parts(p: &Profile, dir: &TangentDirection) -> (f64, f64) {
    let grid = &p.grid;
    let (r, w) = (grid.r(), grid.w());
    let cell = |a: &[f64], u: &[f64], c: usize| {
        let h = r[c + 1] - r[c];
        let weight = 0.5 * (r[c] + r[c + 1]) * h;
        let am = 0.5 * (a[c] + a[c + 1]);
        let um = 0.5 * (u[c] + u[c + 1]);
        let da = (a[c + 1] - a[c]) / h;
        let du = (u[c + 1] - u[c]) / h;
        if am == 0.0 {
            return weight * du * du;
        }
        let ratio = da / am;
        weight * (du * du - 2.0 * um * du * ratio + um * um * ratio * ratio)
    };
    let mut parts = 0.0;
    for c in 0..r.len() - 1 {
        parts += cell(&p.f, &dir.u, c) + cell(&p.m, &dir.w, c);
    }
    let cross = (0..r.len())
        .map(|i| w[i] * (p.f[i] * dir.u[i] + p.m[i] * dir.w[i]).powi(2))
        .sum();
    (parts, cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grading;

    #[test]
    fn kappa_parsing() {
        assert_eq!(Kappa::parse("inf").unwrap(), Kappa::Infinite);
        assert_eq!(Kappa::parse("2.5").unwrap(), Kappa::Finite(2.5));
        assert!(Kappa::parse("0").is_err());
        assert!(Kappa::parse("-1").is_err());
        assert!(Kappa::parse("abc").is_err());
    }

    #[test]
    fn kappa_json() {
        let p = ModelParams::new(Kappa::Infinite, 1, 0.1).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"inf\""));
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn negative_degree_is_folded() {
        let a = ModelParams::new(Kappa::Finite(2.0), -1, 0.3).unwrap();
        let b = ModelParams::new(Kappa::Finite(2.0), 1, 0.3).unwrap();
        assert_eq!(a, b);
        assert!(ModelParams::new(Kappa::Finite(2.0), 0, 0.3).is_err());
        assert!(ModelParams::new(Kappa::Finite(2.0), 1, 0.0).is_err());
    }

    #[test]
    fn layout_bandwidth() {
        let l = Layout::new(20, true, Fields::All);
        assert_eq!(l.len, 18 * 2 + 19);
        assert_eq!(l.kd, 3);
        let l = Layout::new(20, false, Fields::All);
        assert_eq!(l.kd, 2);
        let l = Layout::new(20, false, Fields::NormalCore);
        assert_eq!((l.len, l.kd), (18, 1));
    }

    #[test]
    fn trivial_field_is_critical() {
        let grid = Arc::new(RadialGrid::new(101, 10.0, Grading::Uniform).unwrap());
        let z = vec![0.0; 101];
        let p = Profile::new(grid, z.clone(), z.clone(), z).unwrap();
        let model = Model::new(ModelParams::new(Kappa::Finite(1.5), 1, 0.3).unwrap());
        let res = model.residual(&p);
        for i in 1..100 {
            assert_eq!(res.u[i], 0.0);
            assert_eq!(res.v[i], 0.0);
            assert_eq!(res.w[i], 0.0);
        }
        assert_eq!(res.w[0], 0.0);
    }

    #[test]
    fn high_kappa_energy_needs_reference() {
        let grid = Arc::new(RadialGrid::new(101, 10.0, Grading::Uniform).unwrap());
        let f: Vec<f64> = grid.r().iter().map(|r| (r / 2.0).tanh()).collect();
        let z = vec![0.0; 101];
        let p = Profile::new(grid, f.clone(), z.clone(), z).unwrap();
        let model = Model::new(ModelParams::new(Kappa::Infinite, 1, 0.3).unwrap());
        assert!(matches!(model.energy(&p), Err(Error::MissingReference)));
        let model = model.with_reference(Arc::new(vec![0.0; 50]));
        assert!(matches!(model.energy(&p), Err(Error::GridMismatch)));
    }
}
