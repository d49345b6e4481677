//! Regression basis and normal-equation solver shared by the Monte Carlo
//! backward schemes.
//!
//! The polynomial part is all monomials of total degree `<= degree` in the
//! state coordinates, scaled by `1/sqrt(t)` so the design stays O(1) at
//! every step. Claims that declare kinks get three extra heat-kernel
//! features per kink, `Phi(s), phi(s), s phi(s)` with
//! `s = (x - kink)/sqrt(T - t)`: the shapes a diffused jump actually
//! takes, which plain cubics cannot represent near expiry.

use alloc::vec;
use alloc::vec::Vec;

use crate::claims::{Claim, Coordinate};
use crate::error::{Error, Result};

/// Hard cap on the number of basis functions (stack buffers downstream).
pub const MAX_FUNCS: usize = 160;

/// Basis configuration.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    /// Total degree of the polynomial part.
    pub degree: usize,
    /// Ridge added to the sample-averaged Gram diagonal.
    pub ridge: f64,
    /// Augment with heat-kernel features at declared claim kinks.
    pub kink_features: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            degree: 3,
            ridge: 1e-8,
            kink_features: true,
        }
    }
}

/// Monomial exponent tuples of total degree <= `degree` over `dims`
/// variables, in a fixed deterministic order.
fn monomials(dims: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; dims];
    fn rec(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, dim: usize, remaining: u32) {
        if dim == current.len() {
            out.push(current.clone());
            return;
        }
        for e in 0..=remaining {
            current[dim] = e;
            rec(out, current, dim + 1, remaining - e);
        }
        current[dim] = 0;
    }
    rec(&mut out, &mut current, 0, degree as u32);
    out
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI)
}

/// Basis bound to one time knot.
#[derive(Debug, Clone)]
pub struct StepBasis {
    m: usize,
    inv_scale: f64,
    monomials: Vec<Vec<u32>>,
    /// `(flat coordinate, location, 1/sqrt(T - t))` per kink.
    kinks: Vec<(usize, f64, f64)>,
}

impl StepBasis {
    /// Build the basis for states of dimension `(m, n)` at time `t` on a
    /// horizon `T`; `dt_floor` prevents a singular scale at `t = 0`.
    pub fn new(
        spec: &BasisSpec,
        claim: &Claim,
        m: usize,
        n: usize,
        t: f64,
        horizon: f64,
        dt_floor: f64,
    ) -> Result<Self> {
        let inv_scale = 1.0 / libm::sqrt(t.max(dt_floor));
        let kinks: Vec<(usize, f64, f64)> = if spec.kink_features {
            claim
                .kinks()
                .iter()
                .map(|k| {
                    let flat = match k.coord {
                        Coordinate::W(i) => i,
                        Coordinate::Wperp(j) => m + j,
                    };
                    let tau = (horizon - t).max(dt_floor * 1e-3);
                    (flat, k.location, 1.0 / libm::sqrt(tau))
                })
                .collect()
        } else {
            Vec::new()
        };
        let monomials = monomials(m + n, spec.degree);
        if monomials.len() + 3 * kinks.len() > MAX_FUNCS {
            return Err(Error::Invalid {
                what: alloc::format!(
                    "basis too large: {} functions exceeds the cap {MAX_FUNCS}",
                    monomials.len() + 3 * kinks.len()
                ),
            });
        }
        Ok(Self {
            m,
            inv_scale,
            monomials,
            kinks,
        })
    }

    pub fn len(&self) -> usize {
        self.monomials.len() + 3 * self.kinks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluate all features at a state into `out`.
    pub fn eval_into(&self, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let state = |i: usize| -> f64 {
            if i < self.m {
                w[i]
            } else {
                wperp[i - self.m]
            }
        };
        for (f, mono) in self.monomials.iter().enumerate() {
            let mut v = 1.0;
            for (i, &e) in mono.iter().enumerate() {
                if e > 0 {
                    let x = state(i) * self.inv_scale;
                    for _ in 0..e {
                        v *= x;
                    }
                }
            }
            out[f] = v;
        }
        let mut f = self.monomials.len();
        for &(flat, loc, inv_sqrt_tau) in &self.kinks {
            let s = (state(flat) - loc) * inv_sqrt_tau;
            let phi = std_normal_pdf(s);
            out[f] = std_normal_cdf(s);
            out[f + 1] = phi;
            out[f + 2] = s * phi;
            f += 3;
        }
    }
}

/// Sample-averaged Gram matrix accumulator.
pub struct Gram {
    p: usize,
    n_samples: usize,
    a: Vec<f64>,
}

impl Gram {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            n_samples: 0,
            a: vec![0.0; p * p],
        }
    }

    #[inline]
    pub fn add(&mut self, phi: &[f64]) {
        debug_assert_eq!(phi.len(), self.p);
        for i in 0..self.p {
            let fi = phi[i];
            let row = i * self.p;
            for j in i..self.p {
                self.a[row + j] += fi * phi[j];
            }
        }
        self.n_samples += 1;
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Cholesky-factorize `mean Gram + ridge I`.
    pub fn factorize(mut self, ridge: f64, step: usize) -> Result<CholFactor> {
        let p = self.p;
        let inv_n = 1.0 / self.n_samples.max(1) as f64;
        for i in 0..p {
            for j in i..p {
                let v = self.a[i * p + j] * inv_n;
                self.a[i * p + j] = v;
                self.a[j * p + i] = v;
            }
            self.a[i * p + i] += ridge;
        }
        for i in 0..p {
            for j in 0..=i {
                let mut s = self.a[i * p + j];
                for k in 0..j {
                    s -= self.a[i * p + k] * self.a[j * p + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::RankDeficient { step });
                    }
                    self.a[i * p + i] = libm::sqrt(s);
                } else {
                    self.a[i * p + j] = s / self.a[j * p + j];
                }
            }
        }
        Ok(CholFactor { p, l: self.a })
    }
}

/// Lower-triangular Cholesky factor of the regularized Gram.
#[derive(Debug)]
pub struct CholFactor {
    p: usize,
    l: Vec<f64>,
}

impl CholFactor {
    /// Solve `(G + ridge I) x = rhs` in place; `rhs` must be the
    /// sample-averaged cross moment `mean(phi * target)`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let p = self.p;
        debug_assert_eq!(rhs.len(), p);
        for i in 0..p {
            let mut s = rhs[i];
            for j in 0..i {
                s -= self.l[i * p + j] * rhs[j];
            }
            rhs[i] = s / self.l[i * p + i];
        }
        for i in (0..p).rev() {
            let mut s = rhs[i];
            for j in i + 1..p {
                s -= self.l[j * p + i] * rhs[j];
            }
            rhs[i] = s / self.l[i * p + i];
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}
