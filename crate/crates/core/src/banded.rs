//! Symmetric banded matrices: Cholesky, LDLᵀ inertia, and pivoted LU.

use crate::error::{Error, Result};

/// Symmetric matrix with half-bandwidth `kd`, upper band stored row-wise.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kd(&self) -> usize {
        self.kd
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(j - i <= self.kd);
        i * (self.kd + 1) + (j - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        if hi - lo > self.kd {
            0.0
        } else {
            self.data[self.idx(lo, hi)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn add_diag(&mut self, diag: &[f64], scale: f64) {
        for (i, d) in diag.iter().enumerate() {
            let k = self.idx(i, i);
            self.data[k] += scale * d;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.kd + 1)..(i + 1) * (self.kd + 1)];
            y[i] += row[0] * x[i];
            for k in 1..=self.kd.min(self.n - 1 - i) {
                y[i] += row[k] * x[i + k];
                y[i + k] += row[k] * x[i];
            }
        }
        y
    }

    /// `|A|·|x|`, used to bound rounding in `A·x`.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.kd + 1)..(i + 1) * (self.kd + 1)];
            y[i] += row[0].abs() * x[i].abs();
            for k in 1..=self.kd.min(self.n - 1 - i) {
                y[i] += row[k].abs() * x[i + k].abs();
                y[i + k] += row[k].abs() * x[i].abs();
            }
        }
        y
    }

    /// Largest Gershgorin row bound of `diag(mass)⁻¹·A`.
    pub fn gershgorin_max(&self, mass: &[f64]) -> f64 {
        let ones = vec![1.0; self.n];
        self.abs_matvec(&ones)
            .iter()
            .zip(mass)
            .fold(0.0_f64, |acc, (s, m)| acc.max(s / m))
    }

    /// Smallest Gershgorin lower bound of `diag(mass)^{-1/2} A diag(mass)^{-1/2}`.
    pub fn gershgorin_min(&self, mass: &[f64]) -> f64 {
        let mut lo = f64::INFINITY;
        for i in 0..self.n {
            let mut off = 0.0;
            let jlo = i.saturating_sub(self.kd);
            let jhi = (i + self.kd).min(self.n - 1);
            for j in jlo..=jhi {
                if j != i {
                    off += self.get(i, j).abs() / (mass[i] * mass[j]).sqrt();
                }
            }
            lo = lo.min(self.get(i, i) / mass[i] - off);
        }
        lo
    }

    /// `A = UᵀU` with `U` upper banded.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, kd) = (self.n, self.kd);
        let mut u = self.data.clone();
        let w = kd + 1;
        for i in 0..n {
            let pivot = u[i * w];
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::NotPositiveDefinite(i));
            }
            let d = pivot.sqrt();
            u[i * w] = d;
            let jmax = kd.min(n - 1 - i);
            for k in 1..=jmax {
                u[i * w + k] /= d;
            }
            for k in 1..=jmax {
                let uik = u[i * w + k];
                if uik == 0.0 {
                    continue;
                }
                let row = i + k;
                for l in k..=jmax {
                    u[row * w + (l - k)] -= uik * u[i * w + l];
                }
            }
        }
        Ok(BandCholesky { n, kd, u })
    }

    /// Number of negative eigenvalues of `A − σ·diag(mass)` from the LDLᵀ pivots.
    /// `None` when a pivot vanishes.
    pub fn count_below(&self, sigma: f64, mass: &[f64]) -> Option<usize> {
        let (n, kd) = (self.n, self.kd);
        let w = kd + 1;
        let mut a = self.data.clone();
        for (i, m) in mass.iter().enumerate() {
            a[i * w] -= sigma * m;
        }
        let mut negatives = 0;
        for i in 0..n {
            let d = a[i * w];
            if d == 0.0 || !d.is_finite() {
                return None;
            }
            if d < 0.0 {
                negatives += 1;
            }
            let jmax = kd.min(n - 1 - i);
            for k in 1..=jmax {
                let lik = a[i * w + k] / d;
                if lik == 0.0 {
                    continue;
                }
                let row = i + k;
                for l in k..=jmax {
                    a[row * w + (l - k)] -= lik * a[i * w + l];
                }
            }
        }
        Some(negatives)
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    kd: usize,
    u: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kd) = (self.n, self.kd);
        let w = kd + 1;
        let mut x = b.to_vec();
        // Uᵀ y = b
        for i in 0..n {
            x[i] /= self.u[i * w];
            let xi = x[i];
            for k in 1..=kd.min(n - 1 - i) {
                x[i + k] -= self.u[i * w + k] * xi;
            }
        }
        // U x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in 1..=kd.min(n - 1 - i) {
                s -= self.u[i * w + k] * x[i + k];
            }
            x[i] = s / self.u[i * w];
        }
        x
    }
}

/// LU with partial pivoting of `A − σ·diag(mass)` for a symmetric band `A`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn factor_shifted(a: &SymBand, sigma: f64, mass: &[f64]) -> Result<Self> {
        let (n, kl) = (a.n(), a.kd());
        let width = 3 * kl + 1;
        let mut ab = vec![0.0; n * width];
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + kl).min(n - 1);
            for j in lo..=hi {
                ab[at(i, j)] = a.get(i, j);
            }
            ab[at(i, i)] -= sigma * mass[i];
        }
        let scale = ab.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut piv = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[at(k, k)].abs();
            for i in k + 1..=last {
                let v = ab[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 * scale {
                return Err(Error::SingularSystem(format!("zero pivot at row {k}")));
            }
            piv[k] = p;
            let jend = (k + 2 * kl).min(n - 1);
            if p != k {
                for j in k..=jend {
                    ab.swap(at(k, j), at(p, j));
                }
            }
            let pivot = ab[at(k, k)];
            for i in k + 1..=last {
                let l = ab[at(i, k)] / pivot;
                ab[at(i, k)] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=jend {
                    ab[at(i, j)] -= l * ab[at(k, j)];
                }
            }
        }
        Ok(Self { n, kl, width, ab, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= self.ab[at(i, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + 2 * kl).min(n - 1) {
                s -= self.ab[at(k, j)] * x[j];
            }
            x[k] = s / self.ab[at(k, k)];
        }
        x
    }
}
