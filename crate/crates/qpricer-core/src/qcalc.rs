//! Deformed exponential/logarithm calculus.
//!
//! The pair
//!
//! ```text
//! exp_q(x) = [1 + (1-q) x]^(1/(1-q))        ln_q(x) = (x^(1-q) - 1) / (1-q)
//! ```
//!
//! for `q > 0`, `q != 1`, together with
//!
//! ```text
//! mu(y) = (1 - (1-q) gamma y) / q           f(y) = gamma / (2 mu(y))
//! ```
//!
//! underlies every formula in this crate: entropies weight densities by
//! `D^q ln_q D`, the pricing BSDE's quadratic driver is `f(y) |z_perp|^2`,
//! and optimal measure tilts are scaled by `1/mu(y)`.
//!
//! Domains: for `0 < q < 1`, `exp_q` needs `x >= -1/(1-q)`; for `q > 1` it
//! needs `x < 1/(q-1)`. `ln_q` needs `x >= 0` (resp. `x > 0` for `q > 1`).
//! Inputs with `|1 + (1-q) x| < 1e-12` are rejected before exponentiation;
//! near-zero bases raised to negative powers overflow.

use crate::error::{Error, Result};

/// `|q - 1|` below this switches evaluation to an expansion in `(1-q)`.
pub const NEAR_ONE_EPS: f64 = 1e-6;

/// Reject bases `|1 + (1-q) x|` smaller than this before exponentiation.
pub const BASE_GUARD: f64 = 1e-12;

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Invalid {
            what: alloc::format!("q must be a positive real, got {q}"),
        });
    }
    if q == 1.0 {
        return Err(Error::Invalid {
            what: alloc::format!("q = 1 is excluded (q != 1 is assumed throughout)"),
        });
    }
    Ok(())
}

/// Deformed exponential `[1 + (1-q) x]^(1/(1-q))`.
///
/// Strictly increasing and continuous on its domain. For `|q-1| < 1e-6`
/// the direct formula loses every significant digit, so the value is
/// computed as `exp(x - e x^2/2 + e^2 x^3/3)` with `e = 1-q` (second order
/// in `e`).
pub fn q_exp(x: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    let eps = 1.0 - q;
    if !x.is_finite() {
        return Err(Error::Domain {
            what: "exp_q",
            value: x,
            bound: -1.0 / eps,
            q,
        });
    }
    if eps.abs() < NEAR_ONE_EPS {
        let s = x * (1.0 - eps * x * (0.5 - eps * x / 3.0));
        return Ok(libm::exp(s));
    }
    let base = 1.0 + eps * x;
    // Domain: base > 0, i.e. x >= -1/(1-q) for q < 1 and x < 1/(q-1) for q > 1.
    if base < BASE_GUARD {
        return Err(Error::Domain {
            what: "exp_q",
            value: x,
            bound: -1.0 / eps,
            q,
        });
    }
    Ok(libm::pow(base, 1.0 / eps))
}

/// Deformed logarithm `(x^(1-q) - 1) / (1-q)`, inverse of [`q_exp`].
///
/// Defined for `x >= 0` when `0 < q < 1` (with `ln_q(0) = -1/(1-q)`) and
/// for `x > 0` when `q > 1`.
pub fn q_ln(x: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    let eps = 1.0 - q;
    if !x.is_finite() || x < 0.0 || (x == 0.0 && q > 1.0) {
        return Err(Error::Domain {
            what: "ln_q",
            value: x,
            bound: 0.0,
            q,
        });
    }
    if x == 0.0 {
        return Ok(-1.0 / eps);
    }
    if eps.abs() < NEAR_ONE_EPS {
        let l = libm::log(x);
        return Ok(l * (1.0 + eps * l * (0.5 + eps * l / 6.0)));
    }
    Ok((libm::pow(x, eps) - 1.0) / eps)
}

/// Kullback-Leibler limit of `x^q ln_q x` as `q -> 1`, i.e. `x ln x`.
/// Exposed for the `q = 1` entropy route.
pub fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * libm::log(x)
    }
}

/// Distortion and ambiguity-aversion parameters, validated once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGammaParams {
    q: f64,
    gamma: f64,
    near_one: bool,
}

impl QGammaParams {
    pub fn new(q: f64, gamma: f64) -> Result<Self> {
        check_q(q)?;
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Invalid {
                what: alloc::format!("gamma must be a positive real, got {gamma}"),
            });
        }
        Ok(Self {
            q,
            gamma,
            near_one: (q - 1.0).abs() < NEAR_ONE_EPS,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// True when `|q - 1| < 1e-6` and the expansion regime is active.
    pub fn near_one(&self) -> bool {
        self.near_one
    }

    /// Same distortion, rescaled aversion. Used by the scaling identity
    /// `F(kappa xi, gamma) = kappa F(xi, kappa gamma)`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.q, gamma)
    }

    /// Positivity domain of `mu`.
    pub fn lambda_domain(&self) -> LambdaDomain {
        LambdaDomain::new(self.q, self.gamma)
    }

    /// `mu(y) = (1 - (1-q) gamma y) / q`, positive exactly on the domain.
    pub fn mu(&self, y: f64) -> Result<f64> {
        let v = self.mu_unchecked(y);
        if v <= 0.0 || !v.is_finite() {
            let dom = self.lambda_domain();
            return Err(Error::Domain {
                what: "mu",
                value: y,
                bound: dom.endpoint(),
                q: self.q,
            });
        }
        Ok(v)
    }

    /// `mu` without the domain check, for inner loops that clamp first.
    #[inline]
    pub fn mu_unchecked(&self, y: f64) -> f64 {
        (1.0 - (1.0 - self.q) * self.gamma * y) / self.q
    }

    /// Quadratic-driver coefficient `f(y) = gamma / (2 mu(y))`.
    pub fn driver_f(&self, y: f64) -> Result<f64> {
        Ok(self.gamma / (2.0 * self.mu(y)?))
    }

    #[inline]
    pub fn driver_f_unchecked(&self, y: f64) -> f64 {
        self.gamma / (2.0 * self.mu_unchecked(y))
    }
}

/// The open half-line `Lambda` on which `mu(y) > 0`:
/// `y < 1/((1-q) gamma)` for `0 < q < 1`, `y > 1/((1-q) gamma)` for `q > 1`
/// (the endpoint is negative in the latter case). Bounds are extended
/// reals so membership is a uniform interval test in both regimes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaDomain {
    q: f64,
    gamma: f64,
    lower: f64,
    upper: f64,
}

impl LambdaDomain {
    pub fn new(q: f64, gamma: f64) -> Self {
        let endpoint = 1.0 / ((1.0 - q) * gamma);
        if q < 1.0 {
            Self {
                q,
                gamma,
                lower: f64::NEG_INFINITY,
                upper: endpoint,
            }
        } else {
            Self {
                q,
                gamma,
                lower: endpoint,
                upper: f64::INFINITY,
            }
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// The finite endpoint `1/((1-q) gamma)`.
    pub fn endpoint(&self) -> f64 {
        if self.q < 1.0 {
            self.upper
        } else {
            self.lower
        }
    }

    /// Strict membership (the endpoint itself is excluded).
    pub fn contains(&self, y: f64) -> bool {
        y > self.lower && y < self.upper
    }

    /// Membership with a safety margin, used by admissibility prechecks.
    pub fn contains_with_margin(&self, y: f64, margin: f64) -> bool {
        y > self.lower + margin && y < self.upper - margin
    }
}
