//! Tsallis relative entropy estimators.
//!
//! Two independent routes to `H_q(Q|P) = E_P[(D_T)^q ln_q D_T]`:
//!
//! * definitional — a sample mean of the terminal density functional;
//! * integral — `(q/2) E[ int_0^T (D_s)^q (|lambda_s|^2 + |alpha_s|^2) ds ]`
//!   by trapezoidal quadrature along paths. Against the minimal martingale
//!   measure the `lambda` term drops and the expectation runs under
//!   `Q^min` coordinates.
//!
//! Their agreement on every tested measure is the numerical content of the
//! integral-representation theorem. Conditional variants use nested Monte
//! Carlo with per-(outer, inner) path substreams.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market::{
    Coords, DensityPaths, Loadings, MarketModel, PairLoadings, PathCursor, PathEnsemble,
    SplitLoadings,
};
use crate::qcalc;
use crate::rng::SubstreamRng;
use crate::stats;

/// Which estimator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Definitional,
    Integral,
}

/// One entropy estimate with its sampling error and provenance.
#[derive(Debug, Clone)]
pub struct EntropyEstimate {
    pub value: f64,
    pub stderr: f64,
    pub route: Route,
    pub q: f64,
    pub source: String,
    pub base: String,
    /// Largest relative pathwise gap between `x^q ln_q x` and
    /// `(x - x^q)/(1-q)`; an algebraic identity, so pure rounding noise.
    pub identity_gap: f64,
}

/// `x^q ln_q x`, the entropy integrand, with the `q = 1` limit `x ln x`.
pub fn entropy_weight(x: f64, q: f64) -> f64 {
    if q == 1.0 {
        return qcalc::xlnx(x);
    }
    if x == 0.0 {
        // (x - x^q)/(1-q) -> 0 as x -> 0 for q > 0.
        return 0.0;
    }
    libm::pow(x, q) * (libm::pow(x, 1.0 - q) - 1.0) / (1.0 - q)
}

/// Definitional estimate `mean(D_T^q ln_q D_T)` from terminal densities.
///
/// `q = 1` is routed to the Kullback-Leibler integrand `D ln D`. The
/// per-sample identity `x^q ln_q x = (x - x^q)/(1-q)` is verified along
/// the way and its worst relative gap reported.
pub fn tsallis_definitional(density: &DensityPaths, q: f64) -> Result<EntropyEstimate> {
    if !(q > 0.0) {
        return Err(Error::Invalid {
            what: alloc::format!("entropy needs q > 0, got {q}"),
        });
    }
    let n = density.n_paths();
    let mut vals = vec![0.0; n];
    let mut gap = 0.0_f64;
    for p in 0..n {
        let d = density.terminal(p);
        let v = entropy_weight(d, q);
        if q != 1.0 && d > 0.0 {
            let alt = (d - libm::pow(d, q)) / (1.0 - q);
            gap = gap.max((v - alt).abs() / v.abs().max(1.0));
        }
        vals[p] = v;
    }
    let (value, stderr) = stats::mean_stderr(&vals);
    Ok(EntropyEstimate {
        value,
        stderr,
        route: Route::Definitional,
        q,
        source: density.source.clone(),
        base: density.base.clone(),
        identity_gap: gap,
    })
}

/// Core of the integral route: trapezoid of `(D_s)^q * |selected loadings|^2`
/// along each path, times `q/2`.
fn integral_route(
    ens: &PathEnsemble,
    model: &MarketModel,
    coords: Coords,
    theta: &dyn PairLoadings,
    weight_w: bool,
    weight_perp: bool,
    q: f64,
    source: &str,
    base: &str,
) -> Result<EntropyEstimate> {
    if !(q > 0.0) {
        return Err(Error::Invalid {
            what: alloc::format!("entropy needs q > 0, got {q}"),
        });
    }
    let steps = ens.grid().steps();
    let mut per_path = vec![0.0; ens.n_paths()];
    let mut th_w = vec![0.0; ens.m()];
    let mut th_p = vec![0.0; ens.n()];
    let weight_norm2 = |tw: &[f64], tp: &[f64]| {
        let mut c = 0.0;
        if weight_w {
            c += tw.iter().map(|x| x * x).sum::<f64>();
        }
        if weight_perp {
            c += tp.iter().map(|x| x * x).sum::<f64>();
        }
        c
    };
    for p in 0..ens.n_paths() {
        let mut cur = PathCursor::new(ens, model, coords, p);
        let mut logd = 0.0;
        let mut acc = 0.0;
        theta.eval(cur.t(), cur.w(), cur.wperp(), &mut th_w, &mut th_p);
        let mut integrand_left = weight_norm2(&th_w, &th_p); // D_0 = 1
        for k in 0..steps {
            if !th_w.iter().chain(th_p.iter()).all(|x| x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "loading",
                    path: p,
                    step: k,
                });
            }
            let (d1, d2) = cur.increments();
            let dt = cur.dt();
            let mut dot = 0.0;
            let mut norm2 = 0.0;
            for i in 0..th_w.len() {
                dot += th_w[i] * d1[i];
                norm2 += th_w[i] * th_w[i];
            }
            for j in 0..th_p.len() {
                dot += th_p[j] * d2[j];
                norm2 += th_p[j] * th_p[j];
            }
            logd += dot - 0.5 * norm2 * dt;
            cur.advance();
            theta.eval(cur.t(), cur.w(), cur.wperp(), &mut th_w, &mut th_p);
            let integrand_right = libm::exp(q * logd) * weight_norm2(&th_w, &th_p);
            acc += 0.5 * (integrand_left + integrand_right) * dt;
            integrand_left = integrand_right;
        }
        per_path[p] = 0.5 * q * acc;
    }
    let (value, stderr) = stats::mean_stderr(&per_path);
    Ok(EntropyEstimate {
        value,
        stderr,
        route: Route::Integral,
        q,
        source: String::from(source),
        base: String::from(base),
        identity_gap: 0.0,
    })
}

/// Integral-route estimate of `H_q(Q|P)` for the measure with density
/// `E(-lambda . W + alpha . W_perp)`, computed under `P` coordinates.
pub fn tsallis_integral(
    ens: &PathEnsemble,
    model: &MarketModel,
    alpha: &dyn Loadings,
    q: f64,
) -> Result<EntropyEstimate> {
    struct MinusLambdaAlpha<'a> {
        model: &'a MarketModel,
        alpha: &'a dyn Loadings,
    }
    impl PairLoadings for MinusLambdaAlpha<'_> {
        fn eval(&self, t: f64, w: &[f64], wp: &[f64], out_w: &mut [f64], out_p: &mut [f64]) {
            self.model.drift().eval_into(t, w, out_w);
            for x in out_w.iter_mut() {
                *x = -*x;
            }
            self.alpha.eval(t, w, wp, out_p);
        }
    }
    let pair = MinusLambdaAlpha { model, alpha };
    integral_route(ens, model, Coords::UnderP, &pair, true, true, q, "Q", "P")
}

/// Integral-route estimate of `H_q(Q|Q^min)`:
/// `(q/2) E_{Qmin}[ int (D^{Q,Qmin}_s)^q |alpha_s|^2 ds ]`, computed under
/// `Q^min` coordinates where `W_perp` is unchanged.
pub fn tsallis_q_vs_qmin(
    ens: &PathEnsemble,
    model: &MarketModel,
    alpha: &dyn Loadings,
    q: f64,
) -> Result<EntropyEstimate> {
    let pair = SplitLoadings {
        on_w: None,
        on_perp: Some(alpha),
    };
    integral_route(
        ens,
        model,
        Coords::UnderQmin,
        &pair,
        false,
        true,
        q,
        "Q",
        "Qmin",
    )
}

/// Per-path nested estimate of the conditional entropy
/// `H_{q,t} = E[(D_{t,T})^q ln_q D_{t,T} | F_t]` at a grid knot.
#[derive(Debug, Clone)]
pub struct ConditionalEntropy {
    pub t_index: usize,
    pub t: f64,
    pub q: f64,
    /// `(estimate, inner standard error)` per outer path.
    pub per_path: Vec<(f64, f64)>,
}

/// Nested Monte Carlo for the conditional entropy of the measure with
/// loadings `theta` against the measure whose coordinates the ensemble is
/// interpreted in. Outer paths run to `t_index`; `m_inner` fresh sub-paths
/// continue each of them to `T` on substreams keyed by `(seed, outer, inner)`.
pub fn tsallis_conditional(
    ens: &PathEnsemble,
    model: &MarketModel,
    coords: Coords,
    theta: &dyn PairLoadings,
    q: f64,
    t_index: usize,
    m_inner: usize,
) -> Result<ConditionalEntropy> {
    let (per_path, t) =
        nested_terminal_functional(ens, model, coords, theta, t_index, m_inner, |_, rel, _| {
            entropy_weight(rel, q)
        })?;
    Ok(ConditionalEntropy {
        t_index,
        t,
        q,
        per_path,
    })
}

/// Shared nested walker: for each outer path, continue `m_inner` fresh
/// sub-paths from the state at `t_index` and average
/// `f(D_t, D_{t,T}, terminal state)`.
fn nested_terminal_functional(
    ens: &PathEnsemble,
    model: &MarketModel,
    coords: Coords,
    theta: &dyn PairLoadings,
    t_index: usize,
    m_inner: usize,
    f: impl Fn(f64, f64, (&[f64], &[f64])) -> f64,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let steps = ens.grid().steps();
    if t_index > steps {
        return Err(Error::Invalid {
            what: alloc::format!("t_index {t_index} beyond grid ({steps} steps)"),
        });
    }
    if m_inner < 2 && t_index < steps {
        return Err(Error::TooFewInnerPaths { m: m_inner });
    }
    let (m, n) = (ens.m(), ens.n());
    let mut th_w = vec![0.0; m];
    let mut th_p = vec![0.0; n];
    let mut out = Vec::with_capacity(ens.n_paths());
    let mut inner_vals = vec![0.0; m_inner.max(1)];
    let mut lam = vec![0.0; m];
    // Salt the inner streams away from the outer stream indices.
    let inner_seed = ens.seed() ^ 0x5bd1_e995_9d0e_7c25;
    for p in 0..ens.n_paths() {
        let (logd_t, w0, wp0) = outer_log_density(ens, model, coords, theta, p, t_index)?;
        let d_t = libm::exp(logd_t);
        if t_index == steps {
            out.push((f(d_t, 1.0, (&w0, &wp0)), 0.0));
            continue;
        }
        for inner in 0..m_inner {
            let mut rng = SubstreamRng::new(inner_seed, (p * m_inner + inner) as u64);
            let mut w = w0.clone();
            let mut wp = wp0.clone();
            let mut log_rel = 0.0;
            for k in t_index..steps {
                let t = ens.grid().t(k);
                let dt = ens.grid().dt(k);
                let sdt = libm::sqrt(dt);
                theta.eval(t, &w, &wp, &mut th_w, &mut th_p);
                if !th_w.iter().chain(th_p.iter()).all(|x| x.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "loading",
                        path: p,
                        step: k,
                    });
                }
                let mut dot = 0.0;
                let mut norm2 = 0.0;
                if coords == Coords::UnderQmin {
                    model.drift().eval_into(t, &w, &mut lam);
                }
                for i in 0..m {
                    let dz = sdt * rng.normal();
                    dot += th_w[i] * dz;
                    norm2 += th_w[i] * th_w[i];
                    w[i] += match coords {
                        Coords::UnderP => dz,
                        Coords::UnderQmin => dz - lam[i] * dt,
                    };
                }
                for j in 0..n {
                    let dz = sdt * rng.normal();
                    dot += th_p[j] * dz;
                    norm2 += th_p[j] * th_p[j];
                    wp[j] += dz;
                }
                log_rel += dot - 0.5 * norm2 * dt;
            }
            inner_vals[inner] = f(d_t, libm::exp(log_rel), (&w, &wp));
        }
        out.push(stats::mean_stderr(&inner_vals[..m_inner]));
    }
    Ok((out, ens.grid().t(t_index)))
}

/// Walk one outer path to `t_index`, returning `(log D_t, state)`.
fn outer_log_density(
    ens: &PathEnsemble,
    model: &MarketModel,
    coords: Coords,
    theta: &dyn PairLoadings,
    path: usize,
    t_index: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut th_w = vec![0.0; ens.m()];
    let mut th_p = vec![0.0; ens.n()];
    let mut cur = PathCursor::new(ens, model, coords, path);
    let mut logd = 0.0;
    for k in 0..t_index {
        theta.eval(cur.t(), cur.w(), cur.wperp(), &mut th_w, &mut th_p);
        if !th_w.iter().chain(th_p.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                what: "loading",
                path,
                step: k,
            });
        }
        let (d1, d2) = cur.increments();
        let dt = cur.dt();
        let mut dot = 0.0;
        let mut norm2 = 0.0;
        for i in 0..th_w.len() {
            dot += th_w[i] * d1[i];
            norm2 += th_w[i] * th_w[i];
        }
        for j in 0..th_p.len() {
            dot += th_p[j] * d2[j];
            norm2 += th_p[j] * th_p[j];
        }
        logd += dot - 0.5 * norm2 * dt;
        cur.advance();
    }
    Ok((logd, cur.w().to_vec(), cur.wperp().to_vec()))
}

/// Result of the pathwise submartingale check of `x -> x^q ln_q x`.
#[derive(Debug, Clone)]
pub struct SubmartingaleReport {
    pub t_index: usize,
    pub q: f64,
    pub checked: usize,
    pub violations: usize,
    pub violation_fraction: f64,
}

/// Checks `E[f(D_T) | F_t] >= f(D_t)` with `f(x) = x^q ln_q x` by nested
/// Monte Carlo, counting outer paths whose inner estimate undershoots
/// `f(D_t)` by more than three inner standard errors.
pub fn submartingale_check(
    ens: &PathEnsemble,
    model: &MarketModel,
    coords: Coords,
    theta: &dyn PairLoadings,
    q: f64,
    t_index: usize,
    m_inner: usize,
) -> Result<SubmartingaleReport> {
    let (per_path, _) =
        nested_terminal_functional(ens, model, coords, theta, t_index, m_inner, |d_t, rel, _| {
            entropy_weight(d_t * rel, q)
        })?;
    let mut violations = 0;
    for (p, &(est, se)) in per_path.iter().enumerate() {
        let (logd_t, _, _) = outer_log_density(ens, model, coords, theta, p, t_index)?;
        let f_dt = entropy_weight(libm::exp(logd_t), q);
        if est < f_dt - 3.0 * se {
            violations += 1;
        }
    }
    let checked = per_path.len();
    Ok(SubmartingaleReport {
        t_index,
        q,
        checked,
        violations,
        violation_fraction: violations as f64 / checked.max(1) as f64,
    })
}

/// Closed form `(e^{q(q-1)cT/2} - 1)/(q-1)` for the entropy of a constant
/// `|loadings|^2 = c` measure change over horizon `T`; continuous at
/// `q = 1` with value `cT/2`.
pub fn constant_loading_entropy(q: f64, c: f64, horizon: f64) -> f64 {
    if q == 1.0 {
        return 0.5 * c * horizon;
    }
    libm::expm1(0.5 * q * (q - 1.0) * c * horizon) / (q - 1.0)
}

/// Empirical check that `H_q -> H_1 = cT/2` as `q -> 1`.
#[derive(Debug, Clone)]
pub struct KlLimitReport {
    pub delta: f64,
    pub kl_value: f64,
    /// `(q, estimate, stderr, closed form at q)` for `q = 1-delta, 1, 1+delta`.
    pub rows: Vec<(f64, f64, f64, f64)>,
    /// Each estimate satisfied `|H_q - H_1| <= cT delta + 4 se`.
    pub within_band: bool,
}

/// Brackets the Kullback-Leibler value with `q = 1 +- delta` definitional
/// estimates of a constant-loading measure change.
pub fn kl_limit_check(
    ens: &PathEnsemble,
    model: &MarketModel,
    lambda_const: &[f64],
    alpha_const: &[f64],
    delta: f64,
) -> Result<KlLimitReport> {
    if !(delta > 0.0 && delta <= 0.1) {
        return Err(Error::Invalid {
            what: alloc::format!("delta must lie in (0, 0.1], got {delta}"),
        });
    }
    let c = lambda_const.iter().map(|x| x * x).sum::<f64>()
        + alpha_const.iter().map(|x| x * x).sum::<f64>();
    let horizon = ens.grid().horizon();
    let kl_value = 0.5 * c * horizon;
    let lam = crate::market::ConstLoadings(lambda_const.iter().map(|&x| -x).collect());
    let alp = crate::market::ConstLoadings(alpha_const.to_vec());
    let pair = SplitLoadings {
        on_w: Some(&lam),
        on_perp: Some(&alp),
    };
    let density =
        crate::market::stochastic_exponential(ens, model, Coords::UnderP, &pair, "Q", "P")?;
    let mut rows = Vec::new();
    let mut within = true;
    for q in [1.0 - delta, 1.0, 1.0 + delta] {
        let est = tsallis_definitional(&density, q)?;
        let closed = constant_loading_entropy(q, c, horizon);
        if (est.value - kl_value).abs() > c * horizon * delta + 4.0 * est.stderr {
            within = false;
        }
        rows.push((q, est.value, est.stderr, closed));
    }
    Ok(KlLimitReport {
        delta,
        kl_value,
        rows,
        within_band: within,
    })
}
