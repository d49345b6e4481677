//! Acceptance suite: every release criterion with its pinned tolerance,
//! one printed line per criterion (run with `-- --nocapture` to see the
//! lines on success).
//!
//! Tolerance conventions follow the library's policy: statistical checks
//! use multiples of (combined) standard errors; grid/regression schemes
//! additionally carry a discretization allowance of 1e-3 of the claim
//! range; exact identities use machine-precision bands.

use std::time::Instant;

use qpricer_core::bsde::pde::{self, PdeGridSpec, PdeOpts};
use qpricer_core::bsde::recursion::RecursionOpts;
use qpricer_core::bsde::{self, closed, extract_optimizers, lsmc, martingale_check_qxi};
use qpricer_core::claims::registry;
use qpricer_core::entropy;
use qpricer_core::market::{
    simulate, ConstLoadings, Coords, Drift, MarketModel, PathEnsemble, SplitLoadings, TimeGrid,
};
use qpricer_core::pricing::{self, PriceValue, PricingContext, SchemeSelector};
use qpricer_core::QGammaParams;

struct Criterion {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn model_1d(lam: f64) -> MarketModel {
    MarketModel::new(1, 1, Drift::Constant(vec![lam]), None, 1.0, vec![0.0]).unwrap()
}

/// Simpson quadrature of `f` against the standard normal density.
fn gauss_quad(f: impl Fn(f64) -> f64) -> f64 {
    let n = 200_001;
    let (a, b) = (-10.0f64, 10.0f64);
    let h = (b - a) / (n - 1) as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * f(x) * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    }
    acc * h / 3.0
}

/// Criterion 1: the definitional and integral entropy routes agree with
/// the lognormal closed form and with each other, within 60 s per case.
fn c1_entropy_equivalence() -> Criterion {
    let model = model_1d(0.6);
    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let ens = simulate(&model, &grid, 200_000, 0x5eed_0001).unwrap();
    let alpha = ConstLoadings(vec![0.8]);
    let lam_neg = ConstLoadings(vec![-0.6]);
    let pair = SplitLoadings {
        on_w: Some(&lam_neg),
        on_perp: Some(&alpha),
    };
    let density =
        qpricer_core::market::stochastic_exponential(&ens, &model, Coords::UnderP, &pair, "Q", "P")
            .unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for q in [0.5, 2.0] {
        let t0 = Instant::now();
        let def = entropy::tsallis_definitional(&density, q).unwrap();
        let int = entropy::tsallis_integral(&ens, &model, &alpha, q).unwrap();
        let elapsed = t0.elapsed();
        let target = entropy::constant_loading_entropy(q, 1.0, 1.0);
        let ok_def = (def.value - target).abs() <= 4.0 * def.stderr;
        let ok_int = (int.value - target).abs() <= 4.0 * int.stderr;
        let comb = bsde::combined_stderr(def.stderr, int.stderr);
        let ok_route = (def.value - int.value).abs() <= 4.0 * comb;
        let ok_time = elapsed.as_secs_f64() < 60.0;
        pass &= ok_def && ok_int && ok_route && ok_time;
        detail.push_str(&format!(
            "q={q}: def {:.5}+-{:.1e} int {:.5}+-{:.1e} target {:.5} [{:.1}s] ",
            def.value,
            def.stderr,
            int.value,
            int.stderr,
            target,
            elapsed.as_secs_f64()
        ));
    }
    Criterion {
        name: "1 entropy representation equivalence",
        pass,
        detail,
    }
}

/// Criterion 2: q = 1 +- 0.01 estimates bracket the Kullback-Leibler
/// value cT/2 = 1/2 within four standard errors each.
fn c2_kl_bridge() -> Criterion {
    let model = model_1d(0.6);
    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let ens = simulate(&model, &grid, 200_000, 0x5eed_0002).unwrap();
    let rep = entropy::kl_limit_check(&ens, &model, &[0.6], &[0.8], 0.01).unwrap();
    let mut pass = true;
    let mut detail = format!("KL = {}: ", rep.kl_value);
    for &(q, est, se, _closed) in rep.rows.iter().filter(|r| r.0 != 1.0) {
        let ok = (est - rep.kl_value).abs() <= 4.0 * se;
        pass &= ok;
        detail.push_str(&format!("H_{q:.2} = {est:.5}+-{se:.1e} "));
    }
    // The exact closed forms straddle the KL value.
    pass &= rep.rows[0].3 < rep.kl_value && rep.rows[2].3 > rep.kl_value;
    Criterion {
        name: "2 q->1 bridge",
        pass,
        detail,
    }
}

/// Criterion 3: the unhedged digital prices to 1/3 by all three schemes
/// and the attainable digital to 1/2 with no orthogonal exposure.
fn c3_closed_form_prices() -> Criterion {
    let params = QGammaParams::new(2.0, 1.0).unwrap();
    let mut pass = true;
    let mut detail = String::new();

    // (a) deformed-mean closed form.
    {
        let model = model_1d(0.0);
        let grid = TimeGrid::uniform(1.0, 200).unwrap();
        let ens = simulate(&model, &grid, 200_000, 0x5eed_0003).unwrap();
        let claim = registry::digital_wperp(0.0, 1.0);
        let sol = closed::solve_unhedged(&claim, &model, &params, &ens).unwrap();
        let tol = (3.0 * sol.y0_stderr.unwrap()).max(1e-3);
        let ok = (sol.y0 - 1.0 / 3.0).abs() <= tol;
        pass &= ok;
        detail.push_str(&format!("closed {:.5} (tol {:.1e}) ", sol.y0, tol));
    }
    // (b) regression Monte Carlo.
    {
        let model = model_1d(0.0);
        let grid = TimeGrid::uniform(1.0, 400).unwrap();
        let ens = simulate(&model, &grid, 100_000, 0x5eed_0004).unwrap();
        let claim = registry::digital_wperp(0.0, 1.0);
        let opts = lsmc::LsmcOpts {
            replicates: 3,
            ..lsmc::LsmcOpts::default()
        };
        let sol = lsmc::solve_lsmc(&claim, &model, &params, &ens, &opts).unwrap();
        let tol = (3.0 * sol.y0_stderr.unwrap()).max(1e-3);
        let ok = (sol.y0 - 1.0 / 3.0).abs() <= tol;
        pass &= ok;
        detail.push_str(&format!("lsmc {:.5} (tol {:.1e}) ", sol.y0, tol));
    }
    // (c) finite differences against the smoothed-claim quadrature.
    {
        let model = model_1d(0.0);
        let claim = registry::digital_wperp(0.0, 1.0);
        let grid = PdeGridSpec::for_model(&model, 201, 201, 200);
        let opts = PdeOpts::default();
        let sol = pde::solve_pde(&claim, &model, &params, &grid, &opts).unwrap();
        let smoothed = pde::smoothed_claim(&claim, &grid, &opts).unwrap();
        let mean = gauss_quad(|y| {
            qpricer_core::qcalc::q_exp(-smoothed.eval(&[0.0], &[y]), 2.0).unwrap()
        });
        let target = -qpricer_core::qcalc::q_ln(mean, 2.0).unwrap();
        let ok = (sol.y0 - target).abs() <= 1e-3;
        pass &= ok;
        detail.push_str(&format!(
            "pde {:.5} vs smoothed {:.5} (diff {:+.1e}) ",
            sol.y0,
            target,
            sol.y0 - target
        ));
    }
    // (d) attainable digital at lambda = 0.6.
    {
        let model = model_1d(0.6);
        let grid = TimeGrid::uniform(1.0, 200).unwrap();
        let ens = simulate(&model, &grid, 100_000, 0x5eed_0005).unwrap();
        let claim = registry::digital_w(&model, 0.0, 1.0).unwrap();
        let sol = closed::solve_attainable(&claim, &model, &params, &ens).unwrap();
        let ok = (sol.y0 - 0.5).abs() <= 3.0 * sol.y0_stderr.unwrap();
        pass &= ok;
        detail.push_str(&format!("attainable {:.5} ", sol.y0));
        let opts = lsmc::LsmcOpts {
            replicates: 3,
            ..lsmc::LsmcOpts::default()
        };
        let lsol = lsmc::solve_lsmc(&claim, &model, &params, &ens, &opts).unwrap();
        let ok_val = (lsol.y0 - 0.5).abs() <= (3.0 * lsol.y0_stderr.unwrap()).max(1e-3);
        let ok_zp = lsol.diagnostics.zperp_norm < lsol.diagnostics.noise_floor;
        pass &= ok_val && ok_zp;
        detail.push_str(&format!(
            "lsmc {:.5} zperp {:.2e} < floor {:.2e}",
            lsol.y0, lsol.diagnostics.zperp_norm, lsol.diagnostics.noise_floor
        ));
    }
    Criterion {
        name: "3 closed-form prices",
        pass,
        detail,
    }
}

/// Criterion 4: PDE and LSMC agree on a smooth mixed claim; mesh halving
/// shrinks the PDE value change by more than a factor four.
fn c4_scheme_agreement() -> Criterion {
    let model = model_1d(0.6);
    let params = QGammaParams::new(2.0, 1.0).unwrap();
    let claim = registry::smooth_mixed(0.25, 0.25, 0.5);
    let mut pass = true;
    let mut detail = String::new();

    let pgrid = PdeGridSpec::for_model(&model, 201, 201, 200);
    let popts = PdeOpts {
        store_cube: false,
        ..PdeOpts::default()
    };
    let psol = pde::solve_pde(&claim, &model, &params, &pgrid, &popts).unwrap();

    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let ens = simulate(&model, &grid, 100_000, 0x5eed_0006).unwrap();
    let lsol = lsmc::solve_lsmc(&claim, &model, &params, &ens, &lsmc::LsmcOpts::default()).unwrap();
    let tol = (0.01 * claim.range()).max(3.0 * lsol.y0_stderr.unwrap());
    let ok_agree = (psol.y0 - lsol.y0).abs() <= tol;
    pass &= ok_agree;
    detail.push_str(&format!(
        "pde {:.6} lsmc {:.6} (tol {:.1e}) ",
        psol.y0, lsol.y0, tol
    ));

    // Plain solves at the pinned meshes: the second halving's change must
    // be under a quarter of the first.
    let mut vals = Vec::new();
    for (nx, nt) in [(101usize, 100usize), (201, 200), (401, 400)] {
        let g = PdeGridSpec::for_model(&model, nx, nx, nt);
        vals.push(pde::solve_pde(&claim, &model, &params, &g, &popts).unwrap().y0);
    }
    let c1 = vals[1] - vals[0];
    let c2 = vals[2] - vals[1];
    let ratio = (c2 / c1).abs();
    pass &= ratio < 0.25;
    detail.push_str(&format!("plain ratio {:.4} ", ratio));

    // Extrapolated solves: same criterion with structural margin.
    let ropts = PdeOpts {
        store_cube: false,
        richardson: true,
        ..PdeOpts::default()
    };
    let mut rvals = Vec::new();
    for (nx, nt) in [(51usize, 50usize), (101, 100), (201, 200)] {
        let g = PdeGridSpec::for_model(&model, nx, nx, nt);
        rvals.push(pde::solve_pde(&claim, &model, &params, &g, &ropts).unwrap().y0);
    }
    let rratio = ((rvals[2] - rvals[1]) / (rvals[1] - rvals[0])).abs();
    pass &= rratio < 0.25;
    detail.push_str(&format!("richardson ratio {:.4}", rratio));

    Criterion {
        name: "4 scheme agreement and refinement",
        pass,
        detail,
    }
}

/// Criterion 5: the analytic optimizers attain the primal value within
/// tolerance and no constant candidate undercuts it.
fn c5_duality() -> Criterion {
    let model = model_1d(0.6);
    let params = QGammaParams::new(2.0, 1.0).unwrap();
    let claim = registry::smooth_mixed(0.25, 0.25, 0.5);
    let mut pass = true;
    let mut detail = String::new();

    let pgrid = PdeGridSpec::for_model(&model, 201, 201, 200);
    let psol = pde::solve_pde(&claim, &model, &params, &pgrid, &PdeOpts::default()).unwrap();
    let f0 = PriceValue {
        value: psol.y0,
        stderr: 0.0,
        scheme_tol: 1e-3 * claim.range(),
    };
    let controls = extract_optimizers(&psol, &params, &model).unwrap();

    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let ens = simulate(&model, &grid, 100_000, 0x5eed_0007).unwrap();
    let ctx = PricingContext::new(&model, &ens);

    // alpha*: two-sided within max(4 combined SE, scheme allowance).
    let r_alpha = pricing::problem1_objective(
        &controls.alpha_star_loadings(),
        "alpha*",
        &claim,
        &params,
        &ctx,
        &f0,
    )
    .unwrap();
    let tol_a = (4.0 * r_alpha.stderr).max(f0.scheme_tol);
    pass &= r_alpha.gap.abs() <= tol_a;
    detail.push_str(&format!("alpha* gap {:+.1e} (tol {:.1e}) ", r_alpha.gap, tol_a));

    // theta*: recursion on a fine dedicated grid.
    let rec_grid = TimeGrid::uniform(1.0, 400).unwrap();
    let rec_ens = simulate(&model, &rec_grid, 40_000, 0x5eed_0008).unwrap();
    let rec_ctx = PricingContext::new(&model, &rec_ens);
    let r_theta = pricing::problem2_value(
        &controls.theta_star_loadings(),
        "theta*",
        &claim,
        &params,
        &rec_ctx,
        &f0,
        &RecursionOpts::default(),
    )
    .unwrap();
    let tol_t = (4.0 * r_theta.stderr).max(f0.scheme_tol);
    pass &= r_theta.gap.abs() <= tol_t;
    detail.push_str(&format!("theta* gap {:+.1e} (tol {:.1e}) ", r_theta.gap, tol_t));

    // Certainty-equivalent dual optimizer pair (wider measure family).
    let cesol = pde::solve_ce_pde(&claim, &model, &params, &pgrid, &PdeOpts::default()).unwrap();
    let ce_controls = extract_optimizers(&cesol, &params, &model).unwrap();
    let ce0 = PriceValue {
        value: cesol.y0,
        stderr: 0.0,
        scheme_tol: 1e-3 * claim.range(),
    };
    let r_ce = pricing::ce_dual_objective(
        Some(&ce_controls.beta_star_loadings(1)),
        &ce_controls.alpha_star_loadings(),
        "ce optimizer",
        &claim,
        &params,
        &ctx,
        &ce0,
    )
    .unwrap();
    let tol_ce = (4.0 * r_ce.stderr).max(ce0.scheme_tol);
    pass &= r_ce.gap.abs() <= tol_ce;
    detail.push_str(&format!("ce gap {:+.1e} ", r_ce.gap));

    // Constant-candidate grids never undercut.
    let mut worst_alpha: f64 = f64::INFINITY;
    for a in pricing::constant_grid(-2.0, 2.0, 21) {
        let alpha = ConstLoadings(vec![a]);
        let rec = pricing::problem1_objective(&alpha, "grid", &claim, &params, &ctx, &f0).unwrap();
        worst_alpha = worst_alpha.min(rec.gap + rec.tol * 0.0);
        pass &= rec.pass;
    }
    let rec_grid_small = TimeGrid::uniform(1.0, 100).unwrap();
    let rec_ens_small = simulate(&model, &rec_grid_small, 20_000, 0x5eed_0009).unwrap();
    let rec_ctx_small = PricingContext::new(&model, &rec_ens_small);
    let mut worst_theta: f64 = f64::INFINITY;
    for a in pricing::constant_grid(-2.0, 2.0, 21) {
        let theta = ConstLoadings(vec![a]);
        let rec = pricing::problem2_value(
            &theta,
            "grid",
            &claim,
            &params,
            &rec_ctx_small,
            &f0,
            &RecursionOpts::default(),
        )
        .unwrap();
        worst_theta = worst_theta.min(rec.gap);
        pass &= rec.pass;
    }
    detail.push_str(&format!(
        "grid min gaps: alpha {:+.1e} theta {:+.1e} ",
        worst_alpha, worst_theta
    ));

    // The induced pricing measure reprices the claim.
    let qxi = martingale_check_qxi(&psol, &claim, &model, &params, &ens).unwrap();
    pass &= qxi.pass;
    detail.push_str(&format!("qxi gap {:+.1e}", qxi.gap));

    Criterion {
        name: "5 duality at the optimizers",
        pass,
        detail,
    }
}

/// Criterion 6: certainty equivalent <= price <= risk-neutral reference
/// on the battery, with the one-sided members achieving equality.
fn c6_sandwich_bounds() -> Criterion {
    let model = model_1d(0.6);
    let params = QGammaParams::new(2.0, 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let ens = simulate(&model, &grid, 20_000, 0x5eed_000a).unwrap();
    let ctx = PricingContext::new(&model, &ens);
    let battery = vec![
        registry::constant(0.3),
        registry::digital_wperp(0.0, 0.5),
        registry::digital_w(&model, 0.0, 1.0).unwrap(),
        registry::smooth_mixed(0.25, 0.25, 0.5),
        registry::clamped_linear_w(&model, -0.5, 0.5).unwrap(),
    ];
    let rep = pricing::bounds_report(&battery, &params, &ctx, &pricing::constant_grid(-2.0, 2.0, 21))
        .unwrap();
    let mut pass = rep.all_pass;
    let mut detail = String::new();
    for row in &rep.rows {
        detail.push_str(&format!(
            "[{} ce {:.4} f {:.4} rn {:.4}] ",
            if row.sandwich_pass && row.distorted_pass {
                "ok"
            } else {
                "FAIL"
            },
            row.ce0.value,
            row.f0.value,
            row.riskneutral0.value
        ));
    }
    // One-sided members achieve their respective equalities.
    let unhedged = pricing::price(&battery[1], &params, &ctx, SchemeSelector::Auto).unwrap();
    pass &= unhedged.unhedged_coincidence == Some(true);
    let attainable = pricing::price(&battery[2], &params, &ctx, SchemeSelector::Auto).unwrap();
    pass &=
        (attainable.f0.value - attainable.riskneutral0.value).abs() <= attainable.sandwich_tol;
    Criterion {
        name: "6 sandwich bounds on the battery",
        pass,
        detail,
    }
}

/// Criterion 7: prices fall in gamma with pinned limits at both ends and
/// obey the rescaling identity.
fn c7_gamma_behavior() -> Criterion {
    let model = model_1d(0.0);
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let ens = simulate(&model, &grid, 50_000, 0x5eed_000b).unwrap();
    let ctx = PricingContext::new(&model, &ens);
    let claim = registry::digital_wperp(0.0, 1.0);
    let rep = pricing::gamma_sweep(
        &claim,
        2.0,
        &[0.01, 0.1, 1.0, 10.0, 100.0],
        &ctx,
        SchemeSelector::Auto,
        &pricing::constant_grid(-2.0, 2.0, 21),
    )
    .unwrap();
    let mut pass = rep.monotone_pass && rep.small_gamma_pass && rep.large_gamma.pass;
    let mut detail = format!(
        "monotone {} smallgamma |{:.4}-{:.4}| endpoint f {:.4} vs inf {:.4} (tol {:.1e}) ",
        rep.monotone_pass,
        rep.rows[0].f0.value,
        rep.rows[0].riskneutral0,
        rep.large_gamma.f0,
        rep.large_gamma.distorted_inf,
        rep.large_gamma.tol
    );

    // Rescaling identity: exact on closed forms, 1e-3 on meshes.
    let params = QGammaParams::new(2.0, 1.0).unwrap();
    for kappa in [0.5, 2.0] {
        let s = pricing::scaling_identity(&claim, kappa, &params, &ctx, SchemeSelector::Auto)
            .unwrap();
        pass &= s.pass;
        detail.push_str(&format!("scale[{kappa}] {:+.1e} ", s.diff));
    }
    let mixed = registry::smooth_mixed(0.25, 0.25, 0.5);
    let mut pctx = PricingContext::new(&model, &ens);
    pctx.pde_grid = PdeGridSpec::for_model(&model, 101, 101, 100);
    pctx.pde_opts.store_cube = false;
    let s = pricing::scaling_identity(&mixed, 0.5, &params, &pctx, SchemeSelector::Pde).unwrap();
    pass &= s.pass;
    detail.push_str(&format!("pde scale {:+.1e}", s.diff));

    Criterion {
        name: "7 gamma monotonicity, limits, rescaling",
        pass,
        detail,
    }
}

/// Criterion 8: the property battery passes at both distortion regimes
/// and the restarted finite difference march reproduces its surfaces.
fn c8_property_matrix() -> Criterion {
    let model = model_1d(0.6);
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let ens = simulate(&model, &grid, 50_000, 0x5eed_000c).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for q in [0.5, 2.0] {
        let params = QGammaParams::new(q, 1.0).unwrap();
        let mut ctx = PricingContext::new(&model, &ens);
        ctx.pde_grid = PdeGridSpec::for_model(&model, 101, 101, 100);
        let matrix = pricing::property_suite(&params, &ctx).unwrap();
        pass &= matrix.all_pass;
        let fails: Vec<&str> = matrix
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        detail.push_str(&format!(
            "q={q}: {}/{} ok {} ",
            matrix.checks.iter().filter(|c| c.pass).count(),
            matrix.checks.len(),
            if fails.is_empty() {
                String::new()
            } else {
                format!("failing: {fails:?}")
            }
        ));
    }
    Criterion {
        name: "8 property matrix",
        pass,
        detail,
    }
}

/// Criterion 9: the entropy integrand of the density is a submartingale:
/// under 1% of nested checks may undershoot beyond three inner sigmas.
fn c9_submartingale() -> Criterion {
    let model = model_1d(0.6);
    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let ens = simulate(&model, &grid, 1024, 0x5eed_000d).unwrap();
    let lam_neg = ConstLoadings(vec![-0.6]);
    let alpha = ConstLoadings(vec![0.8]);
    let pair = SplitLoadings {
        on_w: Some(&lam_neg),
        on_perp: Some(&alpha),
    };
    let mut pass = true;
    let mut detail = String::new();
    for q in [0.5, 2.0] {
        for t_index in [50usize, 100] {
            let rep = entropy::submartingale_check(
                &ens,
                &model,
                Coords::UnderP,
                &pair,
                q,
                t_index,
                256,
            )
            .unwrap();
            pass &= rep.violation_fraction < 0.01;
            detail.push_str(&format!(
                "q={q} t={t_index}: {}/{} ",
                rep.violations, rep.checked
            ));
        }
    }
    Criterion {
        name: "9 submartingale of the entropy integrand",
        pass,
        detail,
    }
}

/// Criterion 10: report files are byte-identical across repeat runs and
/// across worker counts.
fn c10_reproducibility() -> Criterion {
    let config = r#"
[market]
m = 1
n = 1
horizon = 1.0
s0 = [0.0]

[market.lambda]
type = "constant"
value = [0.6]

[params]
q = 2.0
gamma = 1.0

[claim]
name = "digital_wperp"
level = 0.0
scale = 0.5

[numerics]
n_paths = 20000
steps = 50
seed = 99

[entropy]
qs = [0.5, 2.0]
alphas = [0.8]
kl_delta = 0.01

[sweep]
gammas = [0.1, 1.0, 10.0]
"#;
    let dir = std::env::temp_dir().join(format!("qpricer-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("scenario.toml");
    std::fs::write(&cfg_path, config).unwrap();
    let bin = env!("CARGO_BIN_EXE_qpricer");
    let run = |cmd: &str, out: &str, threads: &str| {
        let status = std::process::Command::new(bin)
            .args([
                cmd,
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                dir.join(out).to_str().unwrap(),
                "--threads",
                threads,
            ])
            .output()
            .expect("binary runs");
        assert!(
            status.status.success(),
            "{cmd} failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
    };
    let mut pass = true;
    let mut detail = String::new();
    for (cmd, file) in [
        ("price", "price_report.json"),
        ("entropy", "entropy.csv"),
        ("entropy", "entropy_report.json"),
        ("sweep", "sweep.csv"),
        ("sweep", "sweep_report.json"),
    ] {
        run(cmd, "a", "1");
        run(cmd, "b", "1");
        run(cmd, "c", "4");
        let a = std::fs::read(dir.join("a").join(file)).unwrap();
        let b = std::fs::read(dir.join("b").join(file)).unwrap();
        let c = std::fs::read(dir.join("c").join(file)).unwrap();
        let ok = a == b && a == c;
        pass &= ok;
        detail.push_str(&format!("{file}: {} ", if ok { "stable" } else { "DIFFERS" }));
    }
    let _ = std::fs::remove_dir_all(&dir);
    Criterion {
        name: "10 byte-identical reports",
        pass,
        detail,
    }
}

#[test]
fn acceptance() {
    let criteria: Vec<fn() -> Criterion> = vec![
        c1_entropy_equivalence,
        c2_kl_bridge,
        c3_closed_form_prices,
        c4_scheme_agreement,
        c5_duality,
        c6_sandwich_bounds,
        c7_gamma_behavior,
        c8_property_matrix,
        c9_submartingale,
        c10_reproducibility,
    ];
    let mut all = true;
    let mut lines = Vec::new();
    for c in criteria {
        let t0 = Instant::now();
        let r = c();
        let line = format!(
            "[{}] criterion {} — {} ({:.1}s)",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.detail.trim(),
            t0.elapsed().as_secs_f64()
        );
        println!("{line}");
        all &= r.pass;
        lines.push(line);
    }
    assert!(all, "acceptance failures:\n{}", lines.join("\n"));
}
