//! Solvers for the pricing backward SDE and its relatives.
//!
//! The value process solves
//!
//! ```text
//! dY = (lambda . Z + gamma |Zperp|^2 / (2 mu(Y))) dt + Z . dW + Zperp . dWperp,   Y_T = xi,
//! ```
//!
//! equivalently, in Markovian form, the semilinear PDE
//! `u_t + (u_ww + u_pp)/2 = lambda u_w + f(u) u_p^2`. Two independent
//! schemes solve it: an ADI finite-difference march ([`pde`]) and a
//! regression Monte Carlo backward induction ([`lsmc`]); one-sided claims
//! have closed forms ([`closed`]), and the dual recursion over measure
//! tilts lives in [`recursion`]. Optimizer fields and the martingale
//! check under the induced pricing measure are shared here.

pub mod basis;
pub mod closed;
pub mod lsmc;
pub mod pde;
pub mod recursion;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::claims::Claim;
use crate::error::{Error, Result};
use crate::market::{Coords, Loadings, MarketModel, PairLoadings, PathEnsemble};
use crate::qcalc::QGammaParams;
use crate::stats;

/// Which scheme produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Pde,
    Lsmc,
    ClosedForm,
}

/// Numerical bookkeeping accumulated by a solve.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Total Picard iterations over all time steps (PDE).
    pub picard_iterations: usize,
    /// Worst Picard residual at acceptance (PDE).
    pub picard_residual: f64,
    /// Smallest `mu(Y)` seen on the solution.
    pub mu_min: f64,
    /// Fraction of pathwise values clamped back into the claim bounds.
    pub clamp_rate: f64,
    /// Root mean square of the fitted `Z` field (traded block).
    pub z_norm: f64,
    /// Root mean square of the fitted `Zperp` field.
    pub zperp_norm: f64,
    /// Three sigma of what a field fitted to pure noise would measure;
    /// `z`/`zperp` norms below this are statistically zero.
    pub noise_floor: f64,
    /// Replicate values behind a Monte Carlo `y0` (empty for single runs).
    pub replicates: Vec<f64>,
    /// Scheme-specific notes ("richardson", "smoothed terminal", ...).
    pub notes: Vec<String>,
}

/// Value and gradient fields of a solved BSDE.
#[derive(Debug, Clone)]
pub enum ValueField {
    /// Space-time cube from the finite difference scheme.
    Pde(pde::PdeField),
    /// Per-step regression coefficients from the Monte Carlo scheme.
    Lsmc(lsmc::LsmcField),
    /// No field (closed-form scalar solves).
    None,
}

impl ValueField {
    pub fn y_at(&self, t: f64, w: &[f64], wperp: &[f64]) -> f64 {
        match self {
            ValueField::Pde(f) => f.y_at(t, w[0], wperp[0]),
            ValueField::Lsmc(f) => f.y_at(t, w, wperp),
            ValueField::None => 0.0,
        }
    }

    pub fn z_at(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        match self {
            ValueField::Pde(f) => out[0] = f.z_at(t, w[0], wperp[0]),
            ValueField::Lsmc(f) => f.z_at(t, w, wperp, out),
            ValueField::None => out.fill(0.0),
        }
    }

    pub fn zperp_at(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        match self {
            ValueField::Pde(f) => out[0] = f.zperp_at(t, w[0], wperp[0]),
            ValueField::Lsmc(f) => f.zperp_at(t, w, wperp, out),
            ValueField::None => out.fill(0.0),
        }
    }

    pub fn has_field(&self) -> bool {
        !matches!(self, ValueField::None)
    }
}

/// A solved BSDE: initial value, optional sampling error, fields and
/// diagnostics.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub scheme: Scheme,
    pub y0: f64,
    pub y0_stderr: Option<f64>,
    pub field: ValueField,
    pub diagnostics: Diagnostics,
}

/// Floor below which `mu(Y)` is treated as a domain violation.
pub const MU_FLOOR: f64 = 1e-8;

/// The optimal tilts induced by a solution:
/// `alpha* = -gamma Zperp / (q mu(Y))` attains the entropy-penalized
/// infimum, `theta* = -gamma Zperp / mu(Y) = q alpha*` attains the
/// recursive dual, and the pricing-measure density loads
/// `-gamma Zperp / (2 mu(Y))` on `W_perp` next to `-lambda` on `W`.
pub struct OptimalControls<'a> {
    solution: &'a BsdeSolution,
    params: QGammaParams,
    n_dim: usize,
}

impl<'a> OptimalControls<'a> {
    pub fn alpha_star_at(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        self.scaled_zperp(t, w, wperp, out, self.params.q());
    }

    pub fn theta_star_at(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        self.scaled_zperp(t, w, wperp, out, 1.0);
    }

    /// `W_perp` loading of the pricing-measure density.
    pub fn qxi_perp_at(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        self.scaled_zperp(t, w, wperp, out, 2.0);
    }

    /// Traded-block tilt of the certainty-equivalent optimizer:
    /// `beta* = -gamma Z / (q mu(Y))` (zero for martingale measures).
    pub fn beta_star_at(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        let y = self.solution.field.y_at(t, w, wperp);
        let mu = self.params.mu_unchecked(y).max(MU_FLOOR);
        self.solution.field.z_at(t, w, wperp, out);
        let scale = -self.params.gamma() / (self.params.q() * mu);
        for x in out.iter_mut() {
            *x *= scale;
        }
    }

    /// `-gamma Zperp / (divisor * mu(Y))`.
    fn scaled_zperp(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64], divisor: f64) {
        let y = self.solution.field.y_at(t, w, wperp);
        let mu = self.params.mu_unchecked(y).max(MU_FLOOR);
        self.solution.field.zperp_at(t, w, wperp, out);
        let scale = -self.params.gamma() / (divisor * mu);
        for x in out.iter_mut() {
            *x *= scale;
        }
    }

    pub fn params(&self) -> &QGammaParams {
        &self.params
    }

    /// Loadings adapter for the optimal martingale-measure tilt.
    pub fn alpha_star_loadings(&'a self) -> ScaledZperpLoadings<'a> {
        ScaledZperpLoadings {
            controls: self,
            divisor: self.params.q(),
        }
    }

    /// Loadings adapter for the dual-recursion optimizer.
    pub fn theta_star_loadings(&'a self) -> ScaledZperpLoadings<'a> {
        ScaledZperpLoadings {
            controls: self,
            divisor: 1.0,
        }
    }

    /// Pair loadings of the pricing-measure density against `P`.
    pub fn qxi_density_loadings(&'a self, model: &'a MarketModel) -> QxiDensityLoadings<'a> {
        QxiDensityLoadings {
            controls: self,
            model,
        }
    }

    /// Loadings adapter for the certainty-equivalent traded-block tilt.
    pub fn beta_star_loadings(&'a self, m_dim: usize) -> BetaStarLoadings<'a> {
        BetaStarLoadings {
            controls: self,
            m_dim,
        }
    }
}

/// `Loadings` view of `beta* = -gamma Z / (q mu(Y))`.
pub struct BetaStarLoadings<'a> {
    controls: &'a OptimalControls<'a>,
    m_dim: usize,
}

impl Loadings for BetaStarLoadings<'_> {
    fn dim(&self) -> usize {
        self.m_dim
    }

    fn eval(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        self.controls.beta_star_at(t, w, wperp, out);
    }
}

/// `Loadings` view of `-gamma Zperp / (divisor mu(Y))`.
pub struct ScaledZperpLoadings<'a> {
    controls: &'a OptimalControls<'a>,
    divisor: f64,
}

impl Loadings for ScaledZperpLoadings<'_> {
    fn dim(&self) -> usize {
        self.controls.n_dim
    }

    fn eval(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        self.controls.scaled_zperp(t, w, wperp, out, self.divisor);
    }
}

/// Density integrand of the pricing measure under `P` coordinates:
/// `(-lambda, -gamma Zperp / (2 mu(Y)))`.
pub struct QxiDensityLoadings<'a> {
    controls: &'a OptimalControls<'a>,
    model: &'a MarketModel,
}

impl PairLoadings for QxiDensityLoadings<'_> {
    fn eval(&self, t: f64, w: &[f64], wperp: &[f64], out_w: &mut [f64], out_perp: &mut [f64]) {
        self.model.drift().eval_into(t, w, out_w);
        for x in out_w.iter_mut() {
            *x = -*x;
        }
        self.controls.qxi_perp_at(t, w, wperp, out_perp);
    }
}

/// Extract the optimizer fields from a solved BSDE, verifying the
/// `theta* = q alpha*` identity and the `mu` floor on a sample lattice.
pub fn extract_optimizers<'a>(
    solution: &'a BsdeSolution,
    params: &QGammaParams,
    model: &MarketModel,
) -> Result<OptimalControls<'a>> {
    if !solution.field.has_field() {
        return Err(Error::Invalid {
            what: String::from("solution carries no field; optimizers need PDE or LSMC output"),
        });
    }
    let controls = OptimalControls {
        solution,
        params: *params,
        n_dim: model.n(),
    };
    let horizon = model.horizon();
    let spread = 3.0 * libm::sqrt(horizon);
    let mut a = vec![0.0; model.n()];
    let mut th = vec![0.0; model.n()];
    let mut wbuf = vec![0.0; model.m()];
    let mut pbuf = vec![0.0; model.n()];
    for it in 0..5 {
        let t = horizon * it as f64 / 4.0;
        for iw in -2i32..=2 {
            for ip in -2i32..=2 {
                wbuf.fill(spread * iw as f64 / 2.0);
                pbuf.fill(spread * ip as f64 / 2.0);
                let y = solution.field.y_at(t, &wbuf, &pbuf);
                let mu = params.mu_unchecked(y);
                if mu < MU_FLOOR {
                    return Err(Error::MuFloor {
                        value: mu,
                        floor: MU_FLOOR,
                    });
                }
                controls.alpha_star_at(t, &wbuf, &pbuf, &mut a);
                controls.theta_star_at(t, &wbuf, &pbuf, &mut th);
                for j in 0..model.n() {
                    let lhs = a[j] * params.q();
                    if (lhs - th[j]).abs() > 1e-12 * th[j].abs().max(1.0) {
                        return Err(Error::Invalid {
                            what: alloc::format!(
                                "optimizer identity q alpha* = theta* violated: {lhs} vs {}",
                                th[j]
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(controls)
}

/// Result of checking `Y_0 = E_{Q^xi}[xi]` under the induced pricing
/// measure (reweighted against `P`).
#[derive(Debug, Clone)]
pub struct QxiReport {
    pub estimate: f64,
    pub stderr: f64,
    pub y0: f64,
    pub gap: f64,
    pub pass: bool,
}

/// Reweight the claim by the pricing-measure density
/// `E(-lambda . W - (gamma Zperp / (2 mu(Y))) . W_perp)` along `P`-paths
/// and compare with the solver's `Y_0`.
pub fn martingale_check_qxi(
    solution: &BsdeSolution,
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
) -> Result<QxiReport> {
    let controls = extract_optimizers(solution, params, model)?;
    let loadings = controls.qxi_density_loadings(model);
    let density =
        crate::market::stochastic_exponential(ens, model, Coords::UnderP, &loadings, "Qxi", "P")?;
    let states = crate::market::terminal_states(ens, model, Coords::UnderP);
    let payoff: Vec<f64> = (0..ens.n_paths())
        .map(|p| {
            claim.eval(
                &states.w[p * model.m()..(p + 1) * model.m()],
                &states.wperp[p * model.n()..(p + 1) * model.n()],
            )
        })
        .collect();
    let (estimate, stderr) = crate::market::reweighted_expectation(&payoff, &density, 1.0)?;
    let gap = estimate - solution.y0;
    let tol = 4.0 * combined_stderr(stderr, solution.y0_stderr.unwrap_or(0.0));
    Ok(QxiReport {
        estimate,
        stderr,
        y0: solution.y0,
        gap,
        pass: gap.abs() <= tol,
    })
}

/// Combined standard error of two estimates treated as independent.
pub fn combined_stderr(a: f64, b: f64) -> f64 {
    libm::sqrt(a * a + b * b)
}

/// Sample mean and stderr of claim payoffs under `Q^min`: the
/// risk-neutral reference price.
pub fn riskneutral_price(
    claim: &Claim,
    model: &MarketModel,
    ens: &PathEnsemble,
) -> Result<(f64, f64)> {
    let states = crate::market::terminal_states(ens, model, Coords::UnderQmin);
    let vals: Vec<f64> = (0..ens.n_paths())
        .map(|p| {
            claim.eval(
                &states.w[p * model.m()..(p + 1) * model.m()],
                &states.wperp[p * model.n()..(p + 1) * model.n()],
            )
        })
        .collect();
    Ok(stats::mean_stderr(&vals))
}
