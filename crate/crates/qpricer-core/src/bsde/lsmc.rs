//! Regression Monte Carlo backward induction for the pricing BSDE.
//!
//! Per backward step at knot `k`:
//!
//! * gradients from the martingale increment representation,
//!   `Z_k ~ E[(Y_{k+1} - c(X_k)) dW_k | X_k] / dt` — the fitted
//!   continuation is subtracted first (a control variate; without it the
//!   coefficient noise enters the quadratic driver as an `O(pK/N)` bias);
//! * value from a Crank-Nicolson driver: the conditional-expectation
//!   target carries half of the step-(k+1) driver evaluated pathwise, the
//!   other half is applied at `k` after one Picard refresh of the `mu`
//!   argument (the very last step is explicit — a jump payoff has no
//!   terminal gradient);
//! * values clamped to the claim's certified bounds, which keeps `mu`
//!   positive; the clamp activation rate is reported and high rates
//!   flagged.
//!
//! The cross-sectional standard error at the root step ignores
//! coefficient noise shared across paths, so `replicates > 1` runs the
//! whole solve on independent sub-ensembles and reports the spread of the
//! replicate values instead.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::claims::Claim;
use crate::error::{Error, Result};
use crate::market::{state_paths, Coords, MarketModel, PathEnsemble};
use crate::qcalc::QGammaParams;
use crate::stats;

use super::basis::{dot, BasisSpec, Gram, StepBasis, MAX_FUNCS};
use super::{BsdeSolution, Diagnostics, Scheme, ValueField};

/// Options for the regression scheme.
#[derive(Debug, Clone)]
pub struct LsmcOpts {
    pub basis: BasisSpec,
    /// Crank-Nicolson driver weights (explicit Euler when false).
    pub cn_driver: bool,
    /// Number of independent replicate solves behind the reported value.
    pub replicates: usize,
    /// Clamp activation rate above which a warning note is attached.
    pub clamp_warn_rate: f64,
}

impl Default for LsmcOpts {
    fn default() -> Self {
        Self {
            basis: BasisSpec::default(),
            cn_driver: true,
            replicates: 1,
            clamp_warn_rate: 0.05,
        }
    }
}

/// Per-step regression coefficients, evaluable as value/gradient fields.
#[derive(Debug, Clone)]
pub struct LsmcField {
    m: usize,
    n: usize,
    /// `(t_k, basis, y coefficients, z coefficients (m), zperp (n))`.
    steps: Vec<StepEntry>,
    /// Root-step constants.
    y0: f64,
    z0: Vec<f64>,
    zp0: Vec<f64>,
    t1: f64,
}

#[derive(Debug, Clone)]
struct StepEntry {
    t: f64,
    basis: StepBasis,
    coef_y: Vec<f64>,
    coef_z: Vec<Vec<f64>>,
    coef_zp: Vec<Vec<f64>>,
}

impl LsmcField {
    fn entry_at(&self, t: f64) -> Option<&StepEntry> {
        if self.steps.is_empty() || t < self.t1 {
            return None;
        }
        let mut best = &self.steps[0];
        let mut dist = f64::INFINITY;
        for e in &self.steps {
            let d = (e.t - t).abs();
            if d < dist {
                dist = d;
                best = e;
            }
        }
        Some(best)
    }

    fn eval_coef(&self, e: &StepEntry, w: &[f64], wperp: &[f64], coef: &[f64]) -> f64 {
        let mut phi = [0.0_f64; MAX_FUNCS];
        let p = e.basis.len();
        e.basis.eval_into(w, wperp, &mut phi[..p]);
        dot(&phi[..p], coef)
    }

    pub fn y_at(&self, t: f64, w: &[f64], wperp: &[f64]) -> f64 {
        match self.entry_at(t) {
            Some(e) => self.eval_coef(e, w, wperp, &e.coef_y),
            None => self.y0,
        }
    }

    pub fn z_at(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        match self.entry_at(t) {
            Some(e) => {
                for i in 0..self.m {
                    out[i] = self.eval_coef(e, w, wperp, &e.coef_z[i]);
                }
            }
            None => out.copy_from_slice(&self.z0),
        }
    }

    pub fn zperp_at(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]) {
        match self.entry_at(t) {
            Some(e) => {
                for j in 0..self.n {
                    out[j] = self.eval_coef(e, w, wperp, &e.coef_zp[j]);
                }
            }
            None => out.copy_from_slice(&self.zp0),
        }
    }
}

struct SingleRun {
    y0: f64,
    stderr: f64,
    field: LsmcField,
    diag: Diagnostics,
}

fn single_solve(
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
    opts: &LsmcOpts,
) -> Result<SingleRun> {
    let (m, n) = (model.m(), model.n());
    if m + n > 6 {
        return Err(Error::Invalid {
            what: format!("regression scheme supports m + n <= 6, got {}", m + n),
        });
    }
    let grid = ens.grid();
    let steps = grid.steps();
    let n_paths = ens.n_paths();
    let horizon = grid.horizon();
    let (lo, hi) = (claim.lo(), claim.hi());
    let gamma = params.gamma();
    let dt_floor = (0..steps).map(|k| grid.dt(k)).fold(f64::INFINITY, f64::min);

    let states = state_paths(ens, model, Coords::UnderP);

    // Terminal values.
    let mut y: Vec<f64> = (0..n_paths)
        .map(|p| claim.eval(states.w_at(p, steps), states.wperp_at(p, steps)))
        .collect();
    let mut g_prev: Option<Vec<f64>> = None;

    let mut feats: Vec<f64> = Vec::new();
    let mut z = vec![0.0; n_paths * m];
    let mut zp = vec![0.0; n_paths * n];
    let mut lam = vec![0.0; m];
    let mut entries: Vec<StepEntry> = Vec::with_capacity(steps.saturating_sub(1));

    let mut clamped = 0usize;
    let mut mu_min = f64::INFINITY;
    let mut z_norm2_sum = 0.0;
    let mut zp_norm2_sum = 0.0;
    let mut floor2_sum = 0.0;
    let mut norm_steps = 0usize;

    for k in (1..steps).rev() {
        let t = grid.t(k);
        let dt = grid.dt(k);
        let basis = StepBasis::new(&opts.basis, claim, m, n, t, horizon, dt_floor)?;
        let p = basis.len();
        feats.resize(n_paths * p, 0.0);
        let mut gram = Gram::new(p);
        for path in 0..n_paths {
            let phi = &mut feats[path * p..(path + 1) * p];
            basis.eval_into(states.w_at(path, k), states.wperp_at(path, k), phi);
            gram.add(phi);
        }
        let factor = gram.factorize(opts.basis.ridge, k)?;

        // Continuation fits: the CN-adjusted value target and the raw
        // next-step value (control-variate center for the gradients).
        let half = if opts.cn_driver && g_prev.is_some() {
            0.5
        } else {
            1.0
        };
        let mut rhs_c = vec![0.0; p];
        let mut rhs_raw = vec![0.0; p];
        for path in 0..n_paths {
            let phi = &feats[path * p..(path + 1) * p];
            let tgt_c = match (&g_prev, opts.cn_driver) {
                (Some(g), true) => y[path] - 0.5 * dt * g[path],
                _ => y[path],
            };
            for i in 0..p {
                rhs_c[i] += phi[i] * tgt_c;
                rhs_raw[i] += phi[i] * y[path];
            }
        }
        let inv_n = 1.0 / n_paths as f64;
        for i in 0..p {
            rhs_c[i] *= inv_n;
            rhs_raw[i] *= inv_n;
        }
        factor.solve_in_place(&mut rhs_c);
        factor.solve_in_place(&mut rhs_raw);

        // Gradient fits on the control-variate targets.
        let mut rhs_z = vec![vec![0.0; p]; m];
        let mut rhs_zp = vec![vec![0.0; p]; n];
        let mut tgt_var = 0.0;
        for path in 0..n_paths {
            let phi = &feats[path * p..(path + 1) * p];
            let resid = y[path] - dot(phi, &rhs_raw);
            let dw = ens.dw(path, k);
            let dwp = ens.dwp(path, k);
            for i in 0..m {
                let tgt = resid * dw[i] / dt;
                for (r, &f) in rhs_z[i].iter_mut().zip(phi.iter()) {
                    *r += f * tgt;
                }
            }
            for j in 0..n {
                let tgt = resid * dwp[j] / dt;
                tgt_var += tgt * tgt;
                for (r, &f) in rhs_zp[j].iter_mut().zip(phi.iter()) {
                    *r += f * tgt;
                }
            }
        }
        tgt_var *= inv_n / n as f64;
        for i in 0..m {
            for r in rhs_z[i].iter_mut() {
                *r *= inv_n;
            }
            factor.solve_in_place(&mut rhs_z[i]);
        }
        for j in 0..n {
            for r in rhs_zp[j].iter_mut() {
                *r *= inv_n;
            }
            factor.solve_in_place(&mut rhs_zp[j]);
        }

        // Pathwise update with one Picard refresh of the mu argument.
        let mut g_new = vec![0.0; n_paths];
        let mut z2 = 0.0;
        let mut zp2 = 0.0;
        for path in 0..n_paths {
            let phi = &feats[path * p..(path + 1) * p];
            let c = dot(phi, &rhs_c);
            for i in 0..m {
                z[path * m + i] = dot(phi, &rhs_z[i]);
            }
            for j in 0..n {
                zp[path * n + j] = dot(phi, &rhs_zp[j]);
            }
            model.drift().eval_into(t, states.w_at(path, k), &mut lam);
            let mut lam_dot_z = 0.0;
            for i in 0..m {
                lam_dot_z += lam[i] * z[path * m + i];
            }
            let mut zp_sq = 0.0;
            for j in 0..n {
                zp_sq += zp[path * n + j] * zp[path * n + j];
            }
            z2 += (0..m).map(|i| z[path * m + i] * z[path * m + i]).sum::<f64>();
            zp2 += zp_sq;

            let mut mu = params.mu_unchecked(c.clamp(lo, hi));
            let mut g = lam_dot_z + gamma * zp_sq / (2.0 * mu);
            let y1 = (c - half * g * dt).clamp(lo, hi);
            mu = params.mu_unchecked(y1);
            if mu < mu_min {
                mu_min = mu;
            }
            if mu < super::MU_FLOOR {
                return Err(Error::MuFloor {
                    value: mu,
                    floor: super::MU_FLOOR,
                });
            }
            g = lam_dot_z + gamma * zp_sq / (2.0 * mu);
            let raw = c - half * g * dt;
            if raw < lo || raw > hi {
                clamped += 1;
            }
            y[path] = raw.clamp(lo, hi);
            g_new[path] = g;
        }
        g_prev = Some(g_new);

        z_norm2_sum += z2 * inv_n;
        zp_norm2_sum += zp2 * inv_n;
        floor2_sum += p as f64 * tgt_var.max(0.0) / n_paths as f64;
        norm_steps += 1;

        entries.push(StepEntry {
            t,
            basis,
            coef_y: rhs_c,
            coef_z: rhs_z,
            coef_zp: rhs_zp,
        });
    }
    entries.reverse();

    // Root step: all paths share the origin state, so the regressions
    // degenerate to plain means.
    let dt0 = grid.dt(0);
    let half0 = if opts.cn_driver && g_prev.is_some() {
        0.5
    } else {
        1.0
    };
    let tgt0: Vec<f64> = match (&g_prev, opts.cn_driver) {
        (Some(g), true) => (0..n_paths).map(|i| y[i] - 0.5 * dt0 * g[i]).collect(),
        _ => y.clone(),
    };
    let (c0, se0) = stats::mean_stderr(&tgt0);
    let y_mean = stats::mean(&y);
    let mut z0 = vec![0.0; m];
    let mut zp0 = vec![0.0; n];
    for path in 0..n_paths {
        let resid = y[path] - y_mean;
        let dw = ens.dw(path, 0);
        let dwp = ens.dwp(path, 0);
        for i in 0..m {
            z0[i] += resid * dw[i];
        }
        for j in 0..n {
            zp0[j] += resid * dwp[j];
        }
    }
    for v in z0.iter_mut().chain(zp0.iter_mut()) {
        *v /= n_paths as f64 * dt0;
    }
    model.drift().eval_into(0.0, &vec![0.0; m], &mut lam);
    let lam_dot_z0 = dot(&lam, &z0);
    let zp0_sq = dot(&zp0, &zp0);
    let mut mu0 = params.mu_unchecked(c0.clamp(lo, hi));
    let mut g0 = lam_dot_z0 + gamma * zp0_sq / (2.0 * mu0);
    let y1 = (c0 - half0 * g0 * dt0).clamp(lo, hi);
    mu0 = params.mu_unchecked(y1);
    g0 = lam_dot_z0 + gamma * zp0_sq / (2.0 * mu0);
    let y0 = (c0 - half0 * g0 * dt0).clamp(lo, hi);

    let clamp_rate = clamped as f64 / (n_paths * norm_steps.max(1)) as f64;
    let mut notes = Vec::new();
    if clamp_rate > opts.clamp_warn_rate {
        notes.push(format!(
            "clamp rate {clamp_rate:.3} above warn threshold {}",
            opts.clamp_warn_rate
        ));
    }
    let diag = Diagnostics {
        mu_min,
        clamp_rate,
        z_norm: libm::sqrt(z_norm2_sum / norm_steps.max(1) as f64),
        zperp_norm: libm::sqrt(zp_norm2_sum / norm_steps.max(1) as f64),
        noise_floor: 3.0 * libm::sqrt(floor2_sum / norm_steps.max(1) as f64),
        notes,
        ..Diagnostics::default()
    };
    Ok(SingleRun {
        y0,
        stderr: se0,
        field: LsmcField {
            m,
            n,
            steps: entries,
            y0,
            z0,
            zp0,
            t1: grid.t(1),
        },
        diag,
    })
}

/// Solve the pricing BSDE by regression Monte Carlo on the given
/// ensemble. With `replicates > 1`, the value is the mean over that many
/// independent sub-ensembles (seeds derived from the base ensemble's) and
/// the standard error is the replicate spread; fields come from the first
/// replicate.
pub fn solve_lsmc(
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
    opts: &LsmcOpts,
) -> Result<BsdeSolution> {
    claim.admissibility(params)?;
    let first = single_solve(claim, model, params, ens, opts)?;
    let reps = opts.replicates.max(1);
    if reps == 1 {
        return Ok(BsdeSolution {
            scheme: Scheme::Lsmc,
            y0: first.y0,
            y0_stderr: Some(first.stderr),
            field: ValueField::Lsmc(first.field),
            diagnostics: first.diag,
        });
    }
    let mut values = vec![first.y0];
    for r in 1..reps {
        let sub = crate::market::simulate(
            model,
            ens.grid(),
            ens.n_paths(),
            ens.seed() ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(r as u64)),
        )?;
        let run = single_solve(claim, model, params, &sub, opts)?;
        values.push(run.y0);
    }
    let (mean, se) = stats::mean_stderr(&values);
    let mut diag = first.diag;
    diag.replicates = values;
    diag.notes.push(String::from("replicated"));
    Ok(BsdeSolution {
        scheme: Scheme::Lsmc,
        y0: mean,
        y0_stderr: Some(se),
        field: ValueField::Lsmc(first.field),
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::registry;
    use crate::market::{simulate, Drift, TimeGrid};

    fn model(lam: f64) -> MarketModel {
        MarketModel::new(1, 1, Drift::Constant(vec![lam]), None, 1.0, vec![0.0]).unwrap()
    }

    #[test]
    fn zero_claim_prices_to_zero_exactly() {
        let m = model(0.6);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let ens = simulate(&m, &grid, 2_000, 3).unwrap();
        let sol = solve_lsmc(
            &registry::constant(0.0),
            &m,
            &params,
            &ens,
            &LsmcOpts::default(),
        )
        .unwrap();
        assert_eq!(sol.y0, 0.0);
    }

    #[test]
    fn attainable_digital_prices_risk_neutrally() {
        // 1{S_T > S_0} with lambda = 0.6: price 1/2 by symmetry of the
        // driftless traded Brownian under Q^min, and no orthogonal
        // exposure.
        let m = model(0.6);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let ens = simulate(&m, &grid, 30_000, 11).unwrap();
        let claim = registry::digital_w(&m, 0.0, 1.0).unwrap();
        let sol = solve_lsmc(&claim, &m, &params, &ens, &LsmcOpts::default()).unwrap();
        let se = sol.y0_stderr.unwrap();
        assert!(
            (sol.y0 - 0.5).abs() < 3.0 * se.max(3e-3),
            "y0 = {} +- {se}",
            sol.y0
        );
        assert!(
            sol.diagnostics.zperp_norm < sol.diagnostics.noise_floor,
            "zperp {} vs floor {}",
            sol.diagnostics.zperp_norm,
            sol.diagnostics.noise_floor
        );
    }

    #[test]
    fn unhedged_digital_matches_two_point_law() {
        // Small configuration; the acceptance suite runs the full-size one.
        let m = model(0.0);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let ens = simulate(&m, &grid, 30_000, 17).unwrap();
        let claim = registry::digital_wperp(0.0, 1.0);
        let sol = solve_lsmc(&claim, &m, &params, &ens, &LsmcOpts::default()).unwrap();
        assert!(
            (sol.y0 - 1.0 / 3.0).abs() < 8e-3,
            "y0 = {} vs 1/3",
            sol.y0
        );
        // The unhedged claim has no traded exposure.
        assert!(
            sol.diagnostics.z_norm < sol.diagnostics.noise_floor,
            "z {} vs floor {}",
            sol.diagnostics.z_norm,
            sol.diagnostics.noise_floor
        );
    }

    #[test]
    fn replicates_report_spread() {
        let m = model(0.0);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 25).unwrap();
        let ens = simulate(&m, &grid, 4_000, 23).unwrap();
        let opts = LsmcOpts {
            replicates: 3,
            ..LsmcOpts::default()
        };
        let sol = solve_lsmc(&registry::digital_wperp(0.0, 1.0), &m, &params, &ens, &opts).unwrap();
        assert_eq!(sol.diagnostics.replicates.len(), 3);
        assert!(sol.y0_stderr.unwrap() > 0.0);
    }

    #[test]
    fn field_evaluates_near_fitted_surface() {
        let m = model(0.0);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 25).unwrap();
        let ens = simulate(&m, &grid, 10_000, 29).unwrap();
        let claim = registry::digital_wperp(0.0, 1.0);
        let sol = solve_lsmc(&claim, &m, &params, &ens, &LsmcOpts::default()).unwrap();
        // Midlife, at the kink, the value is near the closed form
        // -ln_2(E exp_2(-1{B_{1/2} > 0}))  = 1/3 scaled by remaining
        // horizon; just sanity-check the field is a price in [0, 1] with
        // positive orthogonal slope.
        let y = sol.field.y_at(0.5, &[0.0], &[0.0]);
        assert!((0.0..=1.0).contains(&y), "field value {y}");
        let mut zp = [0.0];
        sol.field.zperp_at(0.5, &[0.0], &[0.0], &mut zp);
        assert!(zp[0] > 0.1, "orthogonal slope {}", zp[0]);
    }
}
