//! Closed-form prices for one-sided claims.
//!
//! * Completely unhedged (`Wperp`-measurable) claims:
//!   `F_t = -(1/gamma) ln_q E_{Qmin}[exp_q(-gamma xi) | F_t]` — under the
//!   minimal martingale measure the orthogonal Brownian is unchanged, so
//!   `F_0` is a plain Monte Carlo mean through the deformed pair.
//! * Attainable (`W`-measurable) claims: risk-neutral pricing
//!   `F_t = E_{Qmin}[xi | F_t]`, by direct simulation of the driftless
//!   traded Brownian.
//! * Certainty equivalent for any claim: same deformed-mean formula with
//!   the expectation over the full terminal state under `Q^min`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::claims::{Claim, HedgeClass};
use crate::error::{Error, Result};
use crate::market::{terminal_states, Coords, MarketModel, PathEnsemble};
use crate::qcalc::{q_exp, q_ln, QGammaParams};
use crate::rng::SubstreamRng;
use crate::stats;

use super::{BsdeSolution, Diagnostics, Scheme, ValueField};

/// Deformed-mean price `-(1/gamma) ln_q(mean exp_q(-gamma xi_i))` with a
/// delta-method standard error `mean^{-q} se(mean) / gamma`.
fn deformed_mean_price(payoffs: &[f64], params: &QGammaParams) -> Result<(f64, f64)> {
    let q = params.q();
    let gamma = params.gamma();
    let mut vals = vec![0.0; payoffs.len()];
    for (v, &x) in vals.iter_mut().zip(payoffs.iter()) {
        *v = q_exp(-gamma * x, q).map_err(|e| Error::Inadmissible {
            reason: format!("claim bounds misdeclared: {e}"),
        })?;
    }
    let (mean, se) = stats::mean_stderr(&vals);
    let value = -q_ln(mean, q)? / gamma;
    let deriv = libm::pow(mean, -q) / gamma;
    Ok((value, deriv * se))
}

fn collect_payoffs(claim: &Claim, model: &MarketModel, ens: &PathEnsemble) -> Vec<f64> {
    let states = terminal_states(ens, model, Coords::UnderQmin);
    (0..ens.n_paths())
        .map(|p| {
            claim.eval(
                &states.w[p * model.m()..(p + 1) * model.m()],
                &states.wperp[p * model.n()..(p + 1) * model.n()],
            )
        })
        .collect()
}

/// Price a completely unhedged claim by the deformed-mean closed form.
pub fn solve_unhedged(
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
) -> Result<BsdeSolution> {
    if claim.hedge_class() != HedgeClass::Unhedged {
        return Err(Error::Invalid {
            what: format!(
                "claim '{}' reads the traded block; the unhedged closed form does not apply",
                claim.id()
            ),
        });
    }
    claim.admissibility(params)?;
    let payoffs = collect_payoffs(claim, model, ens);
    let (y0, se) = deformed_mean_price(&payoffs, params)?;
    Ok(BsdeSolution {
        scheme: Scheme::ClosedForm,
        y0,
        y0_stderr: Some(se),
        field: ValueField::None,
        diagnostics: Diagnostics::default(),
    })
}

/// Conditional unhedged price at a grid knot by nested Monte Carlo:
/// per outer path, `m_inner` fresh continuations of `Wperp` feed the
/// deformed mean. Returns `(value, stderr)` per outer path.
pub fn solve_unhedged_at(
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
    t_index: usize,
    m_inner: usize,
) -> Result<Vec<(f64, f64)>> {
    if claim.hedge_class() != HedgeClass::Unhedged {
        return Err(Error::Invalid {
            what: format!("claim '{}' is not unhedged", claim.id()),
        });
    }
    claim.admissibility(params)?;
    let steps = ens.grid().steps();
    if t_index > steps {
        return Err(Error::Invalid {
            what: format!("t_index {t_index} beyond grid"),
        });
    }
    if m_inner < 2 && t_index < steps {
        return Err(Error::TooFewInnerPaths { m: m_inner });
    }
    let n = model.n();
    let q = params.q();
    let gamma = params.gamma();
    let w_dummy = vec![0.0; model.m()];
    let inner_seed = ens.seed() ^ 0x243f_6a88_85a3_08d3;
    let mut out = Vec::with_capacity(ens.n_paths());
    let mut inner = vec![0.0; m_inner.max(1)];
    for p in 0..ens.n_paths() {
        // Wperp is measure-invariant between P and Q^min.
        let mut wp = vec![0.0; n];
        for k in 0..t_index {
            let d = ens.dwp(p, k);
            for j in 0..n {
                wp[j] += d[j];
            }
        }
        if t_index == steps {
            let x = claim.eval(&w_dummy, &wp);
            out.push((x, 0.0));
            continue;
        }
        for i in 0..m_inner {
            let mut rng = SubstreamRng::new(inner_seed, (p * m_inner + i) as u64);
            let mut wpe = wp.clone();
            for k in t_index..steps {
                let sdt = libm::sqrt(ens.grid().dt(k));
                for x in wpe.iter_mut() {
                    *x += sdt * rng.normal();
                }
            }
            inner[i] = q_exp(-gamma * claim.eval(&w_dummy, &wpe), q)?;
        }
        let (mean, se) = stats::mean_stderr(&inner[..m_inner]);
        let value = -q_ln(mean, q)? / gamma;
        out.push((value, libm::pow(mean, -q) / gamma * se));
    }
    Ok(out)
}

/// Price an attainable claim risk-neutrally under `Q^min`.
pub fn solve_attainable(
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
) -> Result<BsdeSolution> {
    // Constants are vacuously attainable whatever their classification.
    if claim.hedge_class() != HedgeClass::Attainable && !claim.is_constant() {
        return Err(Error::Invalid {
            what: format!(
                "claim '{}' reads the orthogonal block; risk-neutral pricing does not apply",
                claim.id()
            ),
        });
    }
    claim.admissibility(params)?;
    let payoffs = collect_payoffs(claim, model, ens);
    let (y0, se) = stats::mean_stderr(&payoffs);
    Ok(BsdeSolution {
        scheme: Scheme::ClosedForm,
        y0,
        y0_stderr: Some(se),
        // Z_perp vanishes for attainable claims by construction.
        field: ValueField::None,
        diagnostics: Diagnostics::default(),
    })
}

/// Certainty equivalent at time zero for any admissible claim:
/// `-(1/gamma) ln_q E_{Qmin}[exp_q(-gamma xi)]` by plain Monte Carlo.
pub fn solve_ce(
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
) -> Result<BsdeSolution> {
    claim.admissibility(params)?;
    let payoffs = collect_payoffs(claim, model, ens);
    let (y0, se) = deformed_mean_price(&payoffs, params)?;
    Ok(BsdeSolution {
        scheme: Scheme::ClosedForm,
        y0,
        y0_stderr: Some(se),
        field: ValueField::None,
        diagnostics: Diagnostics::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::registry;
    use crate::market::{simulate, Drift, TimeGrid};

    fn setup(lam: f64, n_paths: usize) -> (MarketModel, PathEnsemble) {
        let model =
            MarketModel::new(1, 1, Drift::Constant(vec![lam]), None, 1.0, vec![0.0]).unwrap();
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let ens = simulate(&model, &grid, n_paths, 41).unwrap();
        (model, ens)
    }

    #[test]
    fn unhedged_digital_two_point_law() {
        // E exp_2(-1{B > 0}) = (1/2)(1/2) + 1/2 = 3/4; F = -ln_2(3/4) = 1/3.
        let (model, ens) = setup(0.0, 40_000);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let claim = registry::digital_wperp(0.0, 1.0);
        let sol = solve_unhedged(&claim, &model, &params, &ens).unwrap();
        let se = sol.y0_stderr.unwrap();
        assert!(
            (sol.y0 - 1.0 / 3.0).abs() < 4.0 * se,
            "{} vs 1/3 (se {se})",
            sol.y0
        );
        // Constant claim: exact.
        let c = registry::constant(0.25);
        let sc = solve_unhedged(&c, &model, &params, &ens).unwrap();
        assert!((sc.y0 - 0.25).abs() < 1e-12);
        assert!(sc.y0_stderr.unwrap() < 1e-12);
    }

    #[test]
    fn unhedged_small_gamma_approaches_risk_neutral() {
        let (model, ens) = setup(0.0, 40_000);
        let params = QGammaParams::new(2.0, 0.01).unwrap();
        let claim = registry::digital_wperp(0.0, 1.0);
        let sol = solve_unhedged(&claim, &model, &params, &ens).unwrap();
        // Closed form: 1/(2 + gamma); within 0.01 of the risk-neutral 1/2.
        assert!((sol.y0 - 0.5).abs() < 0.01, "{}", sol.y0);
    }

    #[test]
    fn attainable_digital_is_symmetric() {
        let (model, ens) = setup(0.6, 40_000);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let claim = registry::digital_w(&model, 0.0, 1.0).unwrap();
        let sol = solve_attainable(&claim, &model, &params, &ens).unwrap();
        let se = sol.y0_stderr.unwrap();
        assert!((sol.y0 - 0.5).abs() < 4.0 * se, "{} (se {se})", sol.y0);
        // Wrong-class dispatch is an error.
        assert!(solve_attainable(
            &registry::digital_wperp(0.0, 1.0),
            &model,
            &params,
            &ens
        )
        .is_err());
        assert!(solve_unhedged(&claim, &model, &params, &ens).is_err());
    }

    #[test]
    fn ce_of_attainable_digital_is_below_risk_neutral() {
        // CE = -ln_2(3/4) = 1/3 < 1/2 = F for the attainable digital:
        // the certainty equivalent is not compatible with risk-neutral
        // pricing.
        let (model, ens) = setup(0.6, 40_000);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let claim = registry::digital_w(&model, 0.0, 1.0).unwrap();
        let ce = solve_ce(&claim, &model, &params, &ens).unwrap();
        let se = ce.y0_stderr.unwrap();
        assert!(
            (ce.y0 - 1.0 / 3.0).abs() < 4.0 * se,
            "{} vs 1/3 (se {se})",
            ce.y0
        );
    }

    #[test]
    fn conditional_unhedged_reduces_at_endpoints() {
        let (model, ens) = setup(0.0, 300);
        let params = QGammaParams::new(2.0, 1.0).unwrap();
        let claim = registry::digital_wperp(0.0, 1.0);
        // t = T: the conditional price is the payoff itself.
        let vals = solve_unhedged_at(&claim, &model, &params, &ens, 50, 2).unwrap();
        for (p, &(v, se)) in vals.iter().enumerate() {
            let mut wp = 0.0;
            for k in 0..50 {
                wp += ens.dwp(p, k)[0];
            }
            let xi = if wp > 0.0 { 1.0 } else { 0.0 };
            assert_eq!(v, xi);
            assert_eq!(se, 0.0);
        }
        // t = 0: aggregate of the per-path values targets 1/3.
        let vals0 = solve_unhedged_at(&claim, &model, &params, &ens, 0, 256).unwrap();
        let xs: Vec<f64> = vals0.iter().map(|&(v, _)| v).collect();
        let (mean, se) = stats::mean_stderr(&xs);
        assert!((mean - 1.0 / 3.0).abs() < 4.0 * se.max(2e-3), "{mean} +- {se}");
        assert!(matches!(
            solve_unhedged_at(&claim, &model, &params, &ens, 10, 1),
            Err(Error::TooFewInnerPaths { .. })
        ));
    }
}
