//! The pricing principle: reports, dual gap records, bounds, sweeps and
//! the property battery.
//!
//! The buyer price of an admissible claim is the infimum over equivalent
//! martingale measures of the distorted expectation plus the entropy
//! penalty; the solvers in [`crate::bsde`] compute it and this module
//! wraps them into checked reports:
//!
//! * every price is sandwiched between the certainty equivalent and the
//!   risk-neutral reference;
//! * no dual candidate (constant tilts on a grid, or the analytic
//!   optimizer fields) may undercut the primal value;
//! * prices fall in the aversion parameter with pinned limits at both
//!   ends, and obey the exact rescaling identity
//!   `F(kappa xi, gamma) = kappa F(xi, kappa gamma)`;
//! * monotonicity, concavity, scaling and the one-sided cash
//!   additivities hold within reported tolerances.
//!
//! Tolerances are never silent: each inequality row carries
//! `tol = max(3 combined stderr, scheme discretization allowance)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bsde::{
    self, closed, combined_stderr, extract_optimizers, lsmc, pde, recursion, BsdeSolution, Scheme,
};
use crate::claims::{Claim, HedgeClass};
use crate::error::{Error, Result};
use crate::market::{ConstLoadings, Loadings, MarketModel, PathCursor, PathEnsemble};
use crate::market::Coords;
use crate::qcalc::QGammaParams;
use crate::stats;

/// A value with an optional sampling error and a scheme allowance.
#[derive(Debug, Clone, Copy)]
pub struct PriceValue {
    pub value: f64,
    pub stderr: f64,
    /// Discretization allowance of the producing scheme (zero for exact
    /// closed forms up to Monte Carlo noise).
    pub scheme_tol: f64,
}

impl PriceValue {
    pub fn tol(&self) -> f64 {
        (3.0 * self.stderr).max(self.scheme_tol).max(1e-12)
    }
}

/// Everything a pricing run needs besides the claim and parameters.
pub struct PricingContext<'a> {
    pub model: &'a MarketModel,
    pub ens: &'a PathEnsemble,
    pub pde_grid: pde::PdeGridSpec,
    pub pde_opts: pde::PdeOpts,
    pub lsmc_opts: lsmc::LsmcOpts,
}

impl<'a> PricingContext<'a> {
    pub fn new(model: &'a MarketModel, ens: &'a PathEnsemble) -> Self {
        Self {
            model,
            ens,
            pde_grid: pde::PdeGridSpec::for_model(model, 101, 101, 100),
            pde_opts: pde::PdeOpts::default(),
            lsmc_opts: lsmc::LsmcOpts::default(),
        }
    }
}

/// Scheme selection for [`price`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeSelector {
    /// Closed form for one-sided claims, regression Monte Carlo otherwise.
    Auto,
    ClosedForm,
    Pde,
    Lsmc,
}

/// Relative discretization allowance attributed to grid/regression
/// schemes (of the claim's certified range).
pub const SCHEME_TOL_REL: f64 = 1e-3;

/// One candidate measure's objective against the primal value.
#[derive(Debug, Clone)]
pub struct DualRecord {
    pub label: String,
    pub objective: f64,
    pub stderr: f64,
    /// `objective - primal`; nonnegative up to noise by duality.
    pub gap: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Price report for one claim at one parameter point.
#[derive(Debug, Clone)]
pub struct PriceReport {
    pub claim_id: String,
    pub q: f64,
    pub gamma: f64,
    pub scheme: Scheme,
    pub f0: PriceValue,
    /// Seller price `-F(-xi)` when the negated claim is admissible.
    pub seller: Option<PriceValue>,
    pub ce0: PriceValue,
    pub riskneutral0: PriceValue,
    /// `ce0 - tol <= f0 <= riskneutral0 + tol`.
    pub sandwich_pass: bool,
    pub sandwich_tol: f64,
    /// For unhedged claims, `|f0 - ce0|` must vanish within tolerance.
    pub unhedged_coincidence: Option<bool>,
    pub duals: Vec<DualRecord>,
    /// `(alpha*, theta*)` sampled at the origin when a field exists.
    pub optimizer_at_origin: Option<(f64, f64)>,
    pub diagnostics: bsde::Diagnostics,
}

fn solve_with(
    claim: &Claim,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    selector: SchemeSelector,
) -> Result<BsdeSolution> {
    match selector {
        SchemeSelector::Auto => match claim.hedge_class() {
            HedgeClass::Unhedged => closed::solve_unhedged(claim, ctx.model, params, ctx.ens),
            HedgeClass::Attainable => closed::solve_attainable(claim, ctx.model, params, ctx.ens),
            HedgeClass::General => {
                lsmc::solve_lsmc(claim, ctx.model, params, ctx.ens, &ctx.lsmc_opts)
            }
        },
        SchemeSelector::ClosedForm => match claim.hedge_class() {
            HedgeClass::Unhedged => closed::solve_unhedged(claim, ctx.model, params, ctx.ens),
            HedgeClass::Attainable => closed::solve_attainable(claim, ctx.model, params, ctx.ens),
            HedgeClass::General => Err(Error::Invalid {
                what: format!("claim '{}' has no closed form", claim.id()),
            }),
        },
        SchemeSelector::Pde => {
            pde::solve_pde(claim, ctx.model, params, &ctx.pde_grid, &ctx.pde_opts)
        }
        SchemeSelector::Lsmc => lsmc::solve_lsmc(claim, ctx.model, params, ctx.ens, &ctx.lsmc_opts),
    }
}

fn price_value(sol: &BsdeSolution, claim: &Claim) -> PriceValue {
    let scheme_tol = match sol.scheme {
        Scheme::ClosedForm => 0.0,
        _ => SCHEME_TOL_REL * claim.range().max(1.0),
    };
    PriceValue {
        value: sol.y0,
        stderr: sol.y0_stderr.unwrap_or(0.0),
        scheme_tol,
    }
}

/// Price a claim and assemble the checked report.
pub fn price(
    claim: &Claim,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    selector: SchemeSelector,
) -> Result<PriceReport> {
    claim.admissibility(params)?;
    let sol = solve_with(claim, params, ctx, selector)?;
    let f0 = price_value(&sol, claim);

    let ce_sol = closed::solve_ce(claim, ctx.model, params, ctx.ens)?;
    let ce0 = PriceValue {
        value: ce_sol.y0,
        stderr: ce_sol.y0_stderr.unwrap_or(0.0),
        scheme_tol: 0.0,
    };
    let (rn, rn_se) = bsde::riskneutral_price(claim, ctx.model, ctx.ens)?;
    let riskneutral0 = PriceValue {
        value: rn,
        stderr: rn_se,
        scheme_tol: 0.0,
    };

    // Floor at 1e-12: exact claims have zero sampling error but the two
    // sides are still distinct float expressions.
    let sandwich_tol = (3.0 * combined_stderr(f0.stderr, ce0.stderr.max(riskneutral0.stderr)))
        .max(f0.scheme_tol)
        .max(1e-12);
    let sandwich_pass =
        ce0.value - sandwich_tol <= f0.value && f0.value <= riskneutral0.value + sandwich_tol;

    let unhedged_coincidence = match claim.hedge_class() {
        HedgeClass::Unhedged => Some((f0.value - ce0.value).abs() <= sandwich_tol.max(1e-12)),
        _ => None,
    };

    let seller = match claim.negate() {
        Ok(neg) => match neg.admissibility(params) {
            Ok(_) => {
                let nsol = solve_with(&neg, params, ctx, selector)?;
                let nv = price_value(&nsol, &neg);
                Some(PriceValue {
                    value: -nv.value,
                    stderr: nv.stderr,
                    scheme_tol: nv.scheme_tol,
                })
            }
            Err(_) => None,
        },
        Err(_) => None,
    };

    let optimizer_at_origin = if sol.field.has_field() {
        let controls = extract_optimizers(&sol, params, ctx.model)?;
        let mut a = vec![0.0; ctx.model.n()];
        let mut th = vec![0.0; ctx.model.n()];
        controls.alpha_star_at(0.0, &vec![0.0; ctx.model.m()], &vec![0.0; ctx.model.n()], &mut a);
        controls.theta_star_at(0.0, &vec![0.0; ctx.model.m()], &vec![0.0; ctx.model.n()], &mut th);
        Some((a[0], th[0]))
    } else {
        None
    };

    Ok(PriceReport {
        claim_id: String::from(claim.id()),
        q: params.q(),
        gamma: params.gamma(),
        scheme: sol.scheme,
        f0,
        seller,
        ce0,
        riskneutral0,
        sandwich_pass,
        sandwich_tol,
        unhedged_coincidence,
        duals: Vec::new(),
        optimizer_at_origin,
        diagnostics: sol.diagnostics,
    })
}

/// One pass under `Q^min` coordinates: distorted terminal expectation and
/// the penalty integral for a candidate with loadings `(beta, alpha)`.
struct DualPass {
    distorted: (f64, f64),
    objective: (f64, f64),
}

fn qmin_candidate_pass(
    claim: &Claim,
    model: &MarketModel,
    params: &QGammaParams,
    ens: &PathEnsemble,
    beta: Option<&dyn Loadings>,
    alpha: &dyn Loadings,
) -> Result<DualPass> {
    let q = params.q();
    let gamma = params.gamma();
    let steps = ens.grid().steps();
    let n_paths = ens.n_paths();
    let (m, n) = (ens.m(), ens.n());
    let mut th_b = vec![0.0; m];
    let mut th_a = vec![0.0; n];
    let mut distorted = vec![0.0; n_paths];
    let mut objective = vec![0.0; n_paths];
    for p in 0..n_paths {
        let mut cur = PathCursor::new(ens, model, Coords::UnderQmin, p);
        let mut logd = 0.0;
        let mut acc = 0.0;
        let eval = |cur: &PathCursor<'_>, th_b: &mut [f64], th_a: &mut [f64]| {
            match beta {
                Some(b) => b.eval(cur.t(), cur.w(), cur.wperp(), th_b),
                None => th_b.fill(0.0),
            }
            alpha.eval(cur.t(), cur.w(), cur.wperp(), th_a);
        };
        eval(&cur, &mut th_b, &mut th_a);
        let norm2 = |tb: &[f64], ta: &[f64]| {
            tb.iter().map(|x| x * x).sum::<f64>() + ta.iter().map(|x| x * x).sum::<f64>()
        };
        let mut integrand_left = norm2(&th_b, &th_a); // D_0 = 1
        for k in 0..steps {
            if !th_b.iter().chain(th_a.iter()).all(|x| x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "loading",
                    path: p,
                    step: k,
                });
            }
            let (d1, d2) = cur.increments();
            let dt = cur.dt();
            let mut dot = 0.0;
            for i in 0..m {
                dot += th_b[i] * d1[i];
            }
            for j in 0..n {
                dot += th_a[j] * d2[j];
            }
            logd += dot - 0.5 * norm2(&th_b, &th_a) * dt;
            cur.advance();
            eval(&cur, &mut th_b, &mut th_a);
            let integrand_right = libm::exp(q * logd) * norm2(&th_b, &th_a);
            acc += 0.5 * (integrand_left + integrand_right) * dt;
            integrand_left = integrand_right;
        }
        let xi = claim.eval(cur.w(), cur.wperp());
        let dqt = libm::exp(q * logd);
        distorted[p] = dqt * xi;
        objective[p] = dqt * xi + 0.5 * q / gamma * acc;
    }
    Ok(DualPass {
        distorted: stats::mean_stderr(&distorted),
        objective: stats::mean_stderr(&objective),
    })
}

fn dual_record(label: String, obj: (f64, f64), primal: &PriceValue) -> DualRecord {
    let gap = obj.0 - primal.value;
    let tol = (4.0 * combined_stderr(obj.1, primal.stderr))
        .max(primal.scheme_tol)
        .max(1e-12);
    DualRecord {
        label,
        objective: obj.0,
        stderr: obj.1,
        gap,
        tol,
        pass: gap >= -tol,
    }
}

/// Entropy-penalized objective of a martingale-measure candidate
/// (`alpha` tilt only): `E[(D_T)^q xi] + H_q(Q|Qmin)/gamma`.
pub fn problem1_objective(
    alpha: &dyn Loadings,
    label: impl Into<String>,
    claim: &Claim,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    f0: &PriceValue,
) -> Result<DualRecord> {
    let pass = qmin_candidate_pass(claim, ctx.model, params, ctx.ens, None, alpha)?;
    Ok(dual_record(label.into(), pass.objective, f0))
}

/// Recursive dual value at a tilt `theta`.
pub fn problem2_value(
    theta: &dyn Loadings,
    label: impl Into<String>,
    claim: &Claim,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    f0: &PriceValue,
    opts: &recursion::RecursionOpts,
) -> Result<DualRecord> {
    let v = recursion::backward_recursion_ytheta(theta, claim, ctx.model, params, ctx.ens, opts)?;
    Ok(dual_record(label.into(), (v.y0, v.stderr), f0))
}

/// Certainty-equivalent dual objective for a candidate in the wider
/// equivalent-measure family (tilts on both blocks).
pub fn ce_dual_objective(
    beta: Option<&dyn Loadings>,
    alpha: &dyn Loadings,
    label: impl Into<String>,
    claim: &Claim,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    ce0: &PriceValue,
) -> Result<DualRecord> {
    let pass = qmin_candidate_pass(claim, ctx.model, params, ctx.ens, beta, alpha)?;
    Ok(dual_record(label.into(), pass.objective, ce0))
}

/// Distorted expectation (no penalty) of a candidate: the large-aversion
/// objective.
pub fn distorted_expectation(
    alpha: &dyn Loadings,
    claim: &Claim,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
) -> Result<(f64, f64)> {
    Ok(qmin_candidate_pass(claim, ctx.model, params, ctx.ens, None, alpha)?.distorted)
}

/// Symmetric grid of constant tilt magnitudes.
pub fn constant_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64)
        .collect()
}

/// Per-claim sandwich and distorted-lower-bound rows.
#[derive(Debug, Clone)]
pub struct BoundsRow {
    pub claim_id: String,
    pub f0: PriceValue,
    pub ce0: PriceValue,
    pub riskneutral0: PriceValue,
    pub tol: f64,
    pub sandwich_pass: bool,
    /// Grid infimum of the distorted expectation and whether it stays
    /// below `f0 + tol`.
    pub distorted_inf: f64,
    pub distorted_pass: bool,
}

#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub rows: Vec<BoundsRow>,
    pub all_pass: bool,
}

/// Run the sandwich and distorted-bound checks over a battery of claims.
pub fn bounds_report(
    claims: &[Claim],
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    alpha_grid: &[f64],
) -> Result<BoundsReport> {
    let mut rows = Vec::with_capacity(claims.len());
    let mut all = true;
    for claim in claims {
        let rep = price(claim, params, ctx, SchemeSelector::Auto)?;
        let mut inf = f64::INFINITY;
        for &a in alpha_grid {
            let alpha = ConstLoadings(vec![a; ctx.model.n()]);
            let (d, _) = distorted_expectation(&alpha, claim, params, ctx)?;
            if d < inf {
                inf = d;
            }
        }
        let tol = rep.sandwich_tol;
        let distorted_pass = inf <= rep.f0.value + tol;
        all &= rep.sandwich_pass && distorted_pass;
        rows.push(BoundsRow {
            claim_id: rep.claim_id,
            f0: rep.f0,
            ce0: rep.ce0,
            riskneutral0: rep.riskneutral0,
            tol,
            sandwich_pass: rep.sandwich_pass,
            distorted_inf: inf,
            distorted_pass,
        });
    }
    Ok(BoundsReport {
        rows,
        all_pass: all,
    })
}

/// Seller-side report: the arbitrage-free interval `[F(xi), -F(-xi)]`.
#[derive(Debug, Clone)]
pub struct SellerReport {
    pub buyer: PriceValue,
    pub seller: PriceValue,
    pub width: f64,
    /// `buyer <= seller + tol`.
    pub ordered: bool,
}

pub fn seller_price(
    claim: &Claim,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    selector: SchemeSelector,
) -> Result<SellerReport> {
    let neg = claim.negate()?;
    neg.admissibility(params).map_err(|e| Error::Inadmissible {
        reason: format!("seller side: {e}"),
    })?;
    let buy = solve_with(claim, params, ctx, selector)?;
    let sell = solve_with(&neg, params, ctx, selector)?;
    let buyer = price_value(&buy, claim);
    let seller = PriceValue {
        value: -sell.y0,
        stderr: sell.y0_stderr.unwrap_or(0.0),
        scheme_tol: buyer.scheme_tol,
    };
    let tol = (3.0 * combined_stderr(buyer.stderr, seller.stderr))
        .max(buyer.scheme_tol)
        .max(1e-12);
    Ok(SellerReport {
        buyer,
        seller,
        width: seller.value - buyer.value,
        ordered: buyer.value <= seller.value + tol,
    })
}

/// One row of a gamma sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub gamma: f64,
    pub f0: PriceValue,
    pub ce0: f64,
    pub riskneutral0: f64,
}

/// Behavior of the price in the aversion parameter, under common random
/// numbers.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub monotone_pass: bool,
    /// `|F(gamma_min) - riskneutral| <= 0.01`.
    pub small_gamma_pass: bool,
    /// Distorted grid infimum comparison at the largest gamma.
    pub large_gamma: EndpointCheck,
}

/// Large-aversion endpoint: `F(gamma_max)` against the candidate-grid
/// distorted infimum. The first-order penalty `H_q(alpha_hat)/gamma_max`
/// at the grid's own objective minimizer is part of the tolerance: the
/// check certifies grid-consistency, not the uncomputable global
/// infimum.
#[derive(Debug, Clone)]
pub struct EndpointCheck {
    pub gamma: f64,
    pub f0: f64,
    pub distorted_inf: f64,
    pub penalty_at_minimizer: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Sweep the price over `gammas` (sorted ascending) with shared paths.
pub fn gamma_sweep(
    claim: &Claim,
    q: f64,
    gammas: &[f64],
    ctx: &PricingContext<'_>,
    selector: SchemeSelector,
    alpha_grid: &[f64],
) -> Result<SweepReport> {
    if gammas.is_empty() {
        return Err(Error::Invalid {
            what: String::from("gamma sweep needs at least one gamma"),
        });
    }
    let mut rows = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let params = QGammaParams::new(q, g)?;
        let rep = price(claim, &params, ctx, selector)?;
        rows.push(SweepRow {
            gamma: g,
            f0: rep.f0,
            ce0: rep.ce0.value,
            riskneutral0: rep.riskneutral0.value,
        });
    }
    let mut monotone = true;
    for w in rows.windows(2) {
        let tol = (3.0 * combined_stderr(w[0].f0.stderr, w[1].f0.stderr))
            .max(w[0].f0.scheme_tol.max(w[1].f0.scheme_tol))
            .max(1e-12);
        if w[1].f0.value > w[0].f0.value + tol {
            monotone = false;
        }
    }
    let small_gamma_pass = (rows[0].f0.value - rows[0].riskneutral0).abs() <= 0.01;

    // Large-gamma endpoint against the constant-candidate grid.
    let g_max = *gammas.last().unwrap();
    let params_max = QGammaParams::new(q, g_max)?;
    let mut dist_inf = f64::INFINITY;
    let mut best_obj = f64::INFINITY;
    let mut penalty_at_min = 0.0;
    for &a in alpha_grid {
        let alpha = ConstLoadings(vec![a; ctx.model.n()]);
        let pass = qmin_candidate_pass(claim, ctx.model, &params_max, ctx.ens, None, &alpha)?;
        if pass.distorted.0 < dist_inf {
            dist_inf = pass.distorted.0;
        }
        if pass.objective.0 < best_obj {
            best_obj = pass.objective.0;
            penalty_at_min = pass.objective.0 - pass.distorted.0;
        }
    }
    let last = rows.last().unwrap();
    let tol = penalty_at_min + (3.0 * last.f0.stderr).max(last.f0.scheme_tol);
    let large_gamma = EndpointCheck {
        gamma: g_max,
        f0: last.f0.value,
        distorted_inf: dist_inf,
        penalty_at_minimizer: penalty_at_min,
        tol,
        pass: (last.f0.value - dist_inf).abs() <= tol,
    };
    Ok(SweepReport {
        rows,
        monotone_pass: monotone,
        small_gamma_pass,
        large_gamma,
    })
}

/// `F(kappa xi, gamma)` vs `kappa F(xi, kappa gamma)` with shared paths.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub kappa: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn scaling_identity(
    claim: &Claim,
    kappa: f64,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    selector: SchemeSelector,
) -> Result<ScalingReport> {
    if !(kappa > 0.0) {
        return Err(Error::Invalid {
            what: format!("scaling needs kappa > 0, got {kappa}"),
        });
    }
    let scaled = claim.scale(kappa)?;
    scaled.admissibility(params)?;
    let lhs = solve_with(&scaled, params, ctx, selector)?.y0;
    let params_k = params.with_gamma(kappa * params.gamma())?;
    let rhs = kappa * solve_with(claim, &params_k, ctx, selector)?.y0;
    let tol = match selector {
        SchemeSelector::Pde | SchemeSelector::Lsmc => 1e-3 * claim.range().max(1.0),
        _ => 1e-12 * claim.range().max(1.0),
    };
    Ok(ScalingReport {
        kappa,
        lhs,
        rhs,
        diff: lhs - rhs,
        tol,
        pass: (lhs - rhs).abs() <= tol,
    })
}

/// One named inequality or identity check.
#[derive(Debug, Clone)]
pub struct PropertyCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct PropertyMatrix {
    pub q: f64,
    pub gamma: f64,
    pub checks: Vec<PropertyCheck>,
    pub all_pass: bool,
}

fn ge_check(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> PropertyCheck {
    PropertyCheck {
        name: name.into(),
        lhs,
        rhs,
        tol,
        pass: lhs >= rhs - tol,
    }
}

fn eq_check(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> PropertyCheck {
    PropertyCheck {
        name: name.into(),
        lhs,
        rhs,
        tol,
        pass: (lhs - rhs).abs() <= tol,
    }
}

/// Run the property battery at one parameter point: normalization,
/// monotonicity, concavity, positive-homogeneity directions, the cash
/// super/sub-additivity quadrants for both signs of the shift, and the
/// semigroup restart of the finite difference scheme.
pub fn property_suite(
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
) -> Result<PropertyMatrix> {
    use crate::claims::registry;
    let mut checks = Vec::new();
    let f = |c: &Claim| -> Result<PriceValue> {
        let sol = solve_with(c, params, ctx, SchemeSelector::Auto)?;
        Ok(price_value(&sol, c))
    };
    let mc_tol = |vals: &[&PriceValue]| {
        let mut s = 0.0;
        for v in vals {
            s += v.stderr * v.stderr;
        }
        (3.0 * libm::sqrt(s)).max(1e-12)
    };

    // Normalization: exact.
    let zero = f(&registry::constant(0.0))?;
    checks.push(eq_check("normalization F(0) = 0", zero.value, 0.0, 0.0));

    // Monotonicity on a pointwise-ordered unhedged pair.
    let dig = registry::digital_wperp(0.0, 0.5);
    let dig_small = registry::digital_wperp(0.0, 0.25);
    let (fd, fs) = (f(&dig)?, f(&dig_small)?);
    checks.push(ge_check(
        "monotonicity F(xi) >= F(eta), xi >= eta",
        fd.value,
        fs.value,
        mc_tol(&[&fd, &fs]),
    ));

    // Concavity across mixtures with a constant.
    let cst = registry::constant(0.4);
    let fc = f(&cst)?;
    for kappa in [0.25, 0.5, 0.75] {
        let mixed = dig.mix(&cst, kappa)?;
        let fm = f(&mixed)?;
        checks.push(ge_check(
            format!("concavity at kappa = {kappa}"),
            fm.value,
            kappa * fd.value + (1.0 - kappa) * fc.value,
            mc_tol(&[&fm, &fd, &fc]),
        ));
    }

    // Scaling directions.
    for kappa in [0.5, 2.0] {
        let scaled = dig.scale(kappa)?;
        if scaled.admissibility(params).is_err() {
            continue;
        }
        let fk = f(&scaled)?;
        let tol = mc_tol(&[&fk, &fd]);
        if kappa < 1.0 {
            checks.push(ge_check(
                format!("scaling F({kappa} xi) >= {kappa} F(xi)"),
                fk.value,
                kappa * fd.value,
                tol,
            ));
        } else {
            checks.push(ge_check(
                format!("scaling F({kappa} xi) <= {kappa} F(xi)"),
                kappa * fd.value,
                fk.value,
                tol,
            ));
        }
    }

    // Cash additivity quadrants: direction decided by sign(c) and q vs 1.
    for c in [-0.2, 0.2] {
        let shifted = dig.shift(c)?;
        if shifted.admissibility(params).is_err() {
            continue;
        }
        let fsh = f(&shifted)?;
        let tol = mc_tol(&[&fsh, &fd]);
        let superadditive = (params.q() < 1.0 && c <= 0.0) || (params.q() > 1.0 && c >= 0.0);
        if superadditive {
            checks.push(ge_check(
                format!("cash superadditivity F(xi + {c}) >= F(xi) + {c}"),
                fsh.value,
                fd.value + c,
                tol,
            ));
        } else {
            checks.push(ge_check(
                format!("cash subadditivity F(xi + {c}) <= F(xi) + {c}"),
                fd.value + c,
                fsh.value,
                tol,
            ));
        }
    }

    // Time consistency: the finite difference march restarted from its
    // own slice must reproduce the earlier surfaces.
    let mixed = registry::smooth_mixed(0.25, 0.25, 0.5);
    if mixed.admissibility(params).is_ok() && ctx.model.m() == 1 && ctx.model.n() == 1 {
        let sol = pde::solve_pde(&mixed, ctx.model, params, &ctx.pde_grid, &ctx.pde_opts)?;
        let half = ctx.pde_grid.nt / 2;
        let restarted = pde::restart_from(
            &sol,
            &mixed,
            ctx.model,
            params,
            &ctx.pde_grid,
            &ctx.pde_opts,
            half,
        )?;
        let worst = match (&sol.field, &restarted.field) {
            (crate::bsde::ValueField::Pde(a), crate::bsde::ValueField::Pde(b)) => {
                let mut w = 0.0_f64;
                for k in 0..=half {
                    for (x, y) in a.slice(k).iter().zip(b.slice(k)) {
                        w = w.max((x - y).abs());
                    }
                }
                w
            }
            _ => f64::INFINITY,
        };
        checks.push(eq_check(
            "time consistency: restarted march reproduces surfaces",
            worst,
            0.0,
            1e-10,
        ));
    }

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(PropertyMatrix {
        q: params.q(),
        gamma: params.gamma(),
        checks,
        all_pass,
    })
}
