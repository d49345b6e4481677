//! The recursive dual: for a tilt `theta` on the orthogonal block,
//!
//! ```text
//! Y^theta_t = E_{Q^theta}[ xi + int_t^T (mu(Y^theta_s) / (2 gamma)) |theta_s|^2 ds | F_t ],
//! ```
//!
//! where `Q^theta` has density `E(-lambda . W + theta . W_perp)`. The
//! pricing BSDE's value is the infimum of `Y^theta` over tilts, attained
//! at `theta* = -gamma Zperp / mu(Y)`; every tilt gives an upper bound,
//! so the recursion is a one-sided check that costs one regression pass.
//!
//! Simulation runs directly under `Q^theta` coordinates: block one is the
//! driftless traded Brownian, block two is `W_perp` minus the tilt drift;
//! the physical states are reconstructed pathwise. The penalty integral
//! is accumulated by trapezoid (the terminal weight `mu(xi)` is known),
//! and the implicit `mu(Y_k)` at each knot is resolved by a pathwise
//! contraction iteration.

use alloc::vec;
use alloc::vec::Vec;

use crate::claims::Claim;
use crate::error::{Error, Result};
use crate::market::{Loadings, MarketModel, PathEnsemble};
use crate::qcalc::QGammaParams;
use crate::stats;

use super::basis::{dot, BasisSpec, Gram, StepBasis};
use super::Diagnostics;

/// Options for the dual recursion.
#[derive(Debug, Clone)]
pub struct RecursionOpts {
    pub basis: BasisSpec,
    /// Pathwise fixed-point tolerance on the implicit `mu(Y)` solve.
    pub fixed_point_tol: f64,
    pub fixed_point_max: usize,
}

impl Default for RecursionOpts {
    fn default() -> Self {
        Self {
            basis: BasisSpec::default(),
            fixed_point_tol: 1e-12,
            fixed_point_max: 100,
        }
    }
}

/// Value of the recursion at time zero.
#[derive(Debug, Clone)]
pub struct YthetaValue {
    pub y0: f64,
    pub stderr: f64,
    pub diagnostics: Diagnostics,
}

/// Evaluate `Y^theta_0` for the claim under the tilt `theta`.
pub fn backward_recursion_ytheta(
    theta: &dyn Loadings,
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
    opts: &RecursionOpts,
) -> Result<YthetaValue> {
    claim.admissibility(params)?;
    let (m, n) = (model.m(), model.n());
    let grid = ens.grid();
    let steps = grid.steps();
    let n_paths = ens.n_paths();
    let horizon = grid.horizon();
    let gamma = params.gamma();
    let dom = params.lambda_domain();
    // Keep the implicit solve inside the positivity domain of mu.
    let margin = 1e-6 * (1.0 + dom.endpoint().abs());
    let clamp_dom = |y: f64| y.clamp(dom.lower() + margin, dom.upper() - margin);

    // Forward pass under Q^theta coordinates: reconstruct the physical
    // states and record |theta|^2 at every knot.
    let knots = steps + 1;
    let mut w_all = vec![0.0; n_paths * knots * m];
    let mut wp_all = vec![0.0; n_paths * knots * n];
    let mut th2_all = vec![0.0; n_paths * knots];
    let mut lam = vec![0.0; m];
    let mut th = vec![0.0; n];
    let mut th_end = vec![0.0; n];
    let mut lam_end = vec![0.0; m];
    let mut w_pred = vec![0.0; m];
    let mut wp_pred = vec![0.0; n];
    for p in 0..n_paths {
        let mut w = vec![0.0; m];
        let mut wp = vec![0.0; n];
        for k in 0..=steps {
            let t = grid.t(k);
            w_all[(p * knots + k) * m..(p * knots + k + 1) * m].copy_from_slice(&w);
            wp_all[(p * knots + k) * n..(p * knots + k + 1) * n].copy_from_slice(&wp);
            theta.eval(t, &w, &wp, &mut th);
            if !th.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "tilt",
                    path: p,
                    step: k,
                });
            }
            th2_all[p * knots + k] = th.iter().map(|x| x * x).sum();
            if k < steps {
                // Heun step for the tilt drifts: a plain Euler update
                // leaves an O(dt) bias in the terminal states that
                // dominates the dual value's error.
                let dt = grid.dt(k);
                let t_end = grid.t(k + 1);
                model.drift().eval_into(t, &w, &mut lam);
                let d1 = ens.dw(p, k);
                let d2 = ens.dwp(p, k);
                for i in 0..m {
                    w_pred[i] = w[i] + d1[i] - lam[i] * dt;
                }
                for j in 0..n {
                    wp_pred[j] = wp[j] + d2[j] + th[j] * dt;
                }
                theta.eval(t_end, &w_pred, &wp_pred, &mut th_end);
                model.drift().eval_into(t_end, &w_pred, &mut lam_end);
                for i in 0..m {
                    w[i] += d1[i] - 0.5 * (lam[i] + lam_end[i]) * dt;
                }
                for j in 0..n {
                    wp[j] += d2[j] + 0.5 * (th[j] + th_end[j]) * dt;
                }
            }
        }
    }

    // Terminal values and terminal penalty rate (mu(xi) is known).
    let mut y: Vec<f64> = (0..n_paths)
        .map(|p| {
            claim.eval(
                &w_all[(p * knots + steps) * m..(p * knots + steps + 1) * m],
                &wp_all[(p * knots + steps) * n..(p * knots + steps + 1) * n],
            )
        })
        .collect();
    let mut pen_next: Vec<f64> = (0..n_paths)
        .map(|p| params.mu_unchecked(clamp_dom(y[p])) / (2.0 * gamma) * th2_all[p * knots + steps])
        .collect();

    let dt_floor = (0..steps).map(|k| grid.dt(k)).fold(f64::INFINITY, f64::min);
    let mut feats: Vec<f64> = Vec::new();
    let mut mu_min = f64::INFINITY;

    for k in (1..steps).rev() {
        let t = grid.t(k);
        let dt = grid.dt(k);
        let basis = StepBasis::new(&opts.basis, claim, m, n, t, horizon, dt_floor)?;
        let p_funcs = basis.len();
        feats.resize(n_paths * p_funcs, 0.0);
        let mut gram = Gram::new(p_funcs);
        let mut rhs = vec![0.0; p_funcs];
        for path in 0..n_paths {
            let phi = &mut feats[path * p_funcs..(path + 1) * p_funcs];
            basis.eval_into(
                &w_all[(path * knots + k) * m..(path * knots + k + 1) * m],
                &wp_all[(path * knots + k) * n..(path * knots + k + 1) * n],
                phi,
            );
            gram.add(phi);
            // Trapezoid: the target carries the half-panel at k+1.
            let tgt = y[path] + 0.5 * dt * pen_next[path];
            for i in 0..p_funcs {
                rhs[i] += phi[i] * tgt;
            }
        }
        let inv_n = 1.0 / n_paths as f64;
        for r in rhs.iter_mut() {
            *r *= inv_n;
        }
        let factor = gram.factorize(opts.basis.ridge, k)?;
        factor.solve_in_place(&mut rhs);

        for path in 0..n_paths {
            let phi = &feats[path * p_funcs..(path + 1) * p_funcs];
            let c = dot(phi, &rhs);
            let th2 = th2_all[path * knots + k];
            // Implicit in y through mu: y = c + (dt/2) mu(y) |theta|^2 / (2 gamma).
            let rate = 0.5 * dt * th2 / (2.0 * gamma);
            let mut yk = clamp_dom(c);
            let mut converged = false;
            for _ in 0..opts.fixed_point_max {
                let next = clamp_dom(c + rate * params.mu_unchecked(yk));
                if (next - yk).abs() <= opts.fixed_point_tol * (1.0 + yk.abs()) {
                    yk = next;
                    converged = true;
                    break;
                }
                yk = next;
            }
            if !converged {
                return Err(Error::FixedPointDiverged { step: k });
            }
            let mu = params.mu_unchecked(yk);
            if mu < mu_min {
                mu_min = mu;
            }
            y[path] = yk;
            pen_next[path] = mu / (2.0 * gamma) * th2;
        }
    }

    // Root step: degenerate regression (all states coincide).
    let dt0 = grid.dt(0);
    let tgt0: Vec<f64> = (0..n_paths)
        .map(|p| y[p] + 0.5 * dt0 * pen_next[p])
        .collect();
    let (c0, se0) = stats::mean_stderr(&tgt0);
    let th2_0 = th2_all[0];
    let rate0 = 0.5 * dt0 * th2_0 / (2.0 * gamma);
    let mut y0 = clamp_dom(c0);
    for _ in 0..opts.fixed_point_max {
        let next = clamp_dom(c0 + rate0 * params.mu_unchecked(y0));
        if (next - y0).abs() <= opts.fixed_point_tol * (1.0 + y0.abs()) {
            y0 = next;
            break;
        }
        y0 = next;
    }
    mu_min = mu_min.min(params.mu_unchecked(y0));
    if mu_min < super::MU_FLOOR {
        return Err(Error::MuFloor {
            value: mu_min,
            floor: super::MU_FLOOR,
        });
    }
    Ok(YthetaValue {
        y0,
        stderr: se0,
        diagnostics: Diagnostics {
            mu_min,
            ..Diagnostics::default()
        },
    })
}
