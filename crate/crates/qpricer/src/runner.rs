//! Command orchestration: builds the scenario, drives the solvers, writes
//! report files, and folds every enabled invariant check into a single
//! pass/fail outcome.

use std::path::{Path, PathBuf};

use qpricer_core::bsde::{self, recursion::RecursionOpts};
use qpricer_core::entropy;
use qpricer_core::market::{
    density_ratio, ConstLoadings, Coords, MeasureSpec, SplitLoadings,
};
use qpricer_core::pricing::{self, PricingContext, SchemeSelector};
use qpricer_core::QGammaParams;

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};
use crate::parallel::simulate_par;
use crate::report::{self, write_csv, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Price,
    Entropy,
    Dual,
    Sweep,
    Properties,
}

/// CLI-level overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: usize,
    pub strict: bool,
}

pub struct Outcome {
    pub passed: bool,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn out_dir(cfg: &ScenarioConfig, ov: &Overrides) -> PathBuf {
    ov.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(cfg.output.dir.as_deref().unwrap_or("out")))
}

pub fn run(cmd: Command, cfg: &ScenarioConfig, ov: &Overrides) -> Result<Outcome> {
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let seed = ov.seed.unwrap_or(cfg.numerics.seed);
    let threads = if ov.threads == 0 { 1 } else { ov.threads };
    let ens = simulate_par(&model, &grid, cfg.numerics.n_paths, seed, threads)?;
    let params = cfg.qgamma()?;
    let mut ctx = PricingContext::new(&model, &ens);
    ctx.pde_grid = cfg.pde_grid(&model);
    ctx.pde_opts = cfg.pde_opts();
    ctx.lsmc_opts = cfg.lsmc_opts();
    let dir = out_dir(cfg, ov);

    let mut warnings = Vec::new();
    let mut files = Vec::new();
    let passed = match cmd {
        Command::Price => run_price(cfg, &params, &ctx, &dir, &mut warnings, &mut files)?,
        Command::Entropy => run_entropy(cfg, &ctx, &dir, seed, &mut files)?,
        Command::Dual => run_dual(cfg, &params, &ctx, &dir, seed, &mut files)?,
        Command::Sweep => run_sweep(cfg, &ctx, &dir, &mut files)?,
        Command::Properties => run_properties(&params, &ctx, &dir, &mut files)?,
    };
    let passed = passed && (!ov.strict || warnings.is_empty());
    Ok(Outcome {
        passed,
        warnings,
        files,
    })
}

fn run_price(
    cfg: &ScenarioConfig,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    dir: &Path,
    warnings: &mut Vec<String>,
    files: &mut Vec<PathBuf>,
) -> Result<bool> {
    let claim = cfg.claim(ctx.model)?;
    let selector = cfg.scheme()?;
    let rep = pricing::price(&claim, params, ctx, selector)?;
    warnings.extend(rep.diagnostics.notes.iter().cloned());

    // Seller-side ordering when the negated claim is admissible.
    let seller_ordered = match rep.seller {
        Some(_) => Some(
            pricing::seller_price(&claim, params, ctx, selector)
                .map(|s| s.ordered)
                .unwrap_or(false),
        ),
        None => None,
    };

    let json = report::PriceReportJson::new(&rep, seller_ordered);
    files.push(write_json(dir, "price_report.json", &json)?);

    if cfg.output.write_surfaces {
        let sol = match claim.hedge_class() {
            qpricer_core::claims::HedgeClass::General => Some(qpricer_core::bsde::pde::solve_pde(
                &claim,
                ctx.model,
                params,
                &ctx.pde_grid,
                &ctx.pde_opts,
            )?),
            _ => None,
        };
        if let Some(sol) = sol {
            if let Some(rows) = report::maybe_surface_rows(&sol, ctx.model.horizon()) {
                files.push(write_csv(dir, "surface.csv", "t,w,wperp,y,z,zperp", &rows)?);
            }
        }
    }
    if cfg.output.write_ensemble {
        let rows = report::ensemble_csv_rows(ctx.ens);
        let mut header = String::from("path,step");
        for i in 0..ctx.model.m() {
            header.push_str(&format!(",dw_{i}"));
        }
        for j in 0..ctx.model.n() {
            header.push_str(&format!(",dwperp_{j}"));
        }
        files.push(write_csv(dir, "ensemble.csv", &header, &rows)?);
    }

    let mut pass = rep.sandwich_pass;
    if let Some(u) = rep.unhedged_coincidence {
        pass &= u;
    }
    if let Some(o) = seller_ordered {
        pass &= o;
    }
    Ok(pass)
}

fn run_entropy(
    cfg: &ScenarioConfig,
    ctx: &PricingContext<'_>,
    dir: &Path,
    seed: u64,
    files: &mut Vec<PathBuf>,
) -> Result<bool> {
    let ec = cfg
        .entropy
        .as_ref()
        .ok_or_else(|| CliError::Invalid("the entropy command needs an [entropy] block".into()))?;
    let model = ctx.model;
    let ens = ctx.ens;
    let horizon = model.horizon();
    let lambda_c = model.drift().as_constant().map(|c| c.to_vec());

    let mut rows = Vec::new();
    let mut agreements = Vec::new();
    let mut all_pass = true;

    for &alpha_val in &ec.alphas {
        let alpha = ConstLoadings(vec![alpha_val; model.n()]);
        // Density of Q against P (terminal values feed the definitional
        // route for every q at once).
        let lam_neg = ConstLoadings(
            lambda_c
                .clone()
                .unwrap_or_else(|| vec![0.0; model.m()])
                .iter()
                .map(|&x| -x)
                .collect(),
        );
        let pair = SplitLoadings {
            on_w: lambda_c.as_ref().map(|_| &lam_neg as &dyn qpricer_core::market::Loadings),
            on_perp: Some(&alpha),
        };
        let density_p =
            qpricer_core::market::stochastic_exponential(ens, model, Coords::UnderP, &pair, format!("Q(alpha={alpha_val})"), "P")?;
        let spec = MeasureSpec::martingale(&alpha, format!("Q(alpha={alpha_val})"));
        let density_qmin = density_ratio(&spec, model, ens)?;

        for &q in &ec.qs {
            let c_full = lambda_c
                .as_ref()
                .map(|l| l.iter().map(|x| x * x).sum::<f64>())
                .unwrap_or(0.0)
                + alpha_val * alpha_val * model.n() as f64;
            let c_perp = alpha_val * alpha_val * model.n() as f64;
            let closed_full = lambda_c
                .as_ref()
                .map(|_| entropy::constant_loading_entropy(q, c_full, horizon));
            let closed_perp = Some(entropy::constant_loading_entropy(q, c_perp, horizon));

            let def_p = entropy::tsallis_definitional(&density_p, q)?;
            rows.push(report::entropy_row(&def_p, &density_p.source, closed_full));
            let def_qmin = entropy::tsallis_definitional(&density_qmin, q)?;
            rows.push(report::entropy_row(
                &def_qmin,
                &format!("{}|Qmin", density_qmin.source),
                closed_perp,
            ));
            all_pass &= def_p.value >= -4.0 * def_p.stderr;
            all_pass &= def_qmin.value >= -4.0 * def_qmin.stderr;

            if q != 1.0 {
                let int_p = entropy::tsallis_integral(ens, model, &alpha, q)?;
                rows.push(report::entropy_row(&int_p, &density_p.source, closed_full));
                let int_qmin = entropy::tsallis_q_vs_qmin(ens, model, &alpha, q)?;
                rows.push(report::entropy_row(
                    &int_qmin,
                    &format!("{}|Qmin", density_qmin.source),
                    closed_perp,
                ));
                for (def, int, measure) in [
                    (&def_p, &int_p, density_p.source.clone()),
                    (&def_qmin, &int_qmin, format!("{}|Qmin", density_qmin.source)),
                ] {
                    let comb = bsde::combined_stderr(def.stderr, int.stderr);
                    let pass = (def.value - int.value).abs() <= 4.0 * comb;
                    all_pass &= pass;
                    agreements.push(report::RouteAgreementJson {
                        q,
                        measure,
                        definitional: def.value,
                        integral: int.value,
                        combined_stderr: comb,
                        pass,
                    });
                }
            }
        }
    }

    // Near-one bracket against the Kullback-Leibler value.
    let kl = match (ec.kl_delta, &lambda_c) {
        (Some(delta), Some(lc)) => {
            let alpha0 = ec.alphas.first().copied().unwrap_or(0.0);
            let rep = entropy::kl_limit_check(
                ens,
                model,
                lc,
                &vec![alpha0; model.n()],
                delta,
            )?;
            all_pass &= rep.within_band;
            Some(report::KlJson::from(&rep))
        }
        _ => None,
    };

    // Nested submartingale checks on a smaller outer ensemble.
    let mut submart = Vec::new();
    if !ec.conditional_fractions.is_empty() {
        let outer = ec.outer_paths.unwrap_or(1024).min(cfg.numerics.n_paths);
        let inner = ec.inner_paths.unwrap_or(256);
        let sub_ens = qpricer_core::market::simulate(
            model,
            ens.grid(),
            outer,
            seed ^ 0x00c0_ffee_c0ff_ee00,
        )?;
        let alpha0 = ec.alphas.first().copied().unwrap_or(0.0);
        let alpha = ConstLoadings(vec![alpha0; model.n()]);
        let pair = SplitLoadings {
            on_w: None,
            on_perp: Some(&alpha),
        };
        for &frac in &ec.conditional_fractions {
            let t_index = ens.grid().index_of(frac * horizon);
            for &q in &ec.qs {
                if q == 1.0 {
                    continue;
                }
                let rep = entropy::submartingale_check(
                    &sub_ens,
                    model,
                    Coords::UnderQmin,
                    &pair,
                    q,
                    t_index,
                    inner,
                )?;
                all_pass &= rep.violation_fraction < 0.01;
                submart.push(report::submartingale_row(&rep));
            }
        }
    }

    let json = report::EntropyReportJson {
        rows,
        route_agreement: agreements,
        kl,
        submartingale: submart,
        all_pass,
    };
    files.push(write_csv(
        dir,
        "entropy.csv",
        "q,measure,route,estimate,stderr",
        &report::entropy_csv_rows(&json.rows),
    )?);
    files.push(write_json(dir, "entropy_report.json", &json)?);
    Ok(all_pass)
}

fn run_dual(
    cfg: &ScenarioConfig,
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    dir: &Path,
    seed: u64,
    files: &mut Vec<PathBuf>,
) -> Result<bool> {
    let dc = cfg
        .dual
        .as_ref()
        .ok_or_else(|| CliError::Invalid("the dual command needs a [dual] block".into()))?;
    let claim = cfg.claim(ctx.model)?;
    let selector = cfg.scheme()?;
    let rep = pricing::price(&claim, params, ctx, selector)?;
    let f0 = rep.f0;

    let grid_vals = pricing::constant_grid(dc.grid_min, dc.grid_max, dc.grid_points);
    let mut records = Vec::new();

    // Entropy-penalized objectives on the constant-tilt grid.
    for &a in &grid_vals {
        let alpha = ConstLoadings(vec![a; ctx.model.n()]);
        records.push(pricing::problem1_objective(
            &alpha,
            format!("penalized alpha={a}"),
            &claim,
            params,
            ctx,
            &f0,
        )?);
    }

    // Recursive dual on a smaller dedicated ensemble.
    let rec_paths = dc.recursion_paths.unwrap_or(20_000).min(cfg.numerics.n_paths);
    let rec_steps = dc.recursion_steps.unwrap_or(ctx.ens.grid().steps().min(100));
    let rec_grid = qpricer_core::market::TimeGrid::uniform(ctx.model.horizon(), rec_steps)?;
    let rec_ens =
        qpricer_core::market::simulate(ctx.model, &rec_grid, rec_paths, seed ^ 0x7ec4_17ab)?;
    let rec_ctx = PricingContext {
        model: ctx.model,
        ens: &rec_ens,
        pde_grid: ctx.pde_grid,
        pde_opts: ctx.pde_opts,
        lsmc_opts: ctx.lsmc_opts.clone(),
    };
    for &a in &grid_vals {
        let theta = ConstLoadings(vec![a; ctx.model.n()]);
        records.push(pricing::problem2_value(
            &theta,
            format!("recursive theta={a}"),
            &claim,
            params,
            &rec_ctx,
            &f0,
            &RecursionOpts::default(),
        )?);
    }

    // Analytic optimizer fields. The finite difference cube gives the
    // most accurate gradient fields whenever the market is 1 + 1
    // dimensional; regression fields otherwise.
    let mut qxi = None;
    if dc.use_optimizer {
        let sol = if ctx.model.m() == 1 && ctx.model.n() == 1 && selector != SchemeSelector::Lsmc {
            qpricer_core::bsde::pde::solve_pde(
                &claim,
                ctx.model,
                params,
                &ctx.pde_grid,
                &ctx.pde_opts,
            )?
        } else {
            qpricer_core::bsde::lsmc::solve_lsmc(
                &claim,
                ctx.model,
                params,
                ctx.ens,
                &ctx.lsmc_opts,
            )?
        };
        let controls = bsde::extract_optimizers(&sol, params, ctx.model)?;
        records.push(pricing::problem1_objective(
            &controls.alpha_star_loadings(),
            "penalized alpha*",
            &claim,
            params,
            ctx,
            &f0,
        )?);
        records.push(pricing::problem2_value(
            &controls.theta_star_loadings(),
            "recursive theta*",
            &claim,
            params,
            &rec_ctx,
            &f0,
            &RecursionOpts::default(),
        )?);
        let q_rep = bsde::martingale_check_qxi(&sol, &claim, ctx.model, params, ctx.ens)?;
        qxi = Some(report::QxiJson::from(&q_rep));
    }

    let all_pass = records.iter().all(|r| r.pass)
        && qxi.as_ref().map(|q| q.pass).unwrap_or(true);
    let json = report::DualReportJson {
        claim: claim.id().to_string(),
        q: params.q(),
        gamma: params.gamma(),
        f0: (&f0).into(),
        records: records.iter().map(Into::into).collect(),
        qxi_martingale: qxi,
        all_pass,
    };
    files.push(write_json(dir, "dual_report.json", &json)?);
    Ok(all_pass)
}

fn run_sweep(
    cfg: &ScenarioConfig,
    ctx: &PricingContext<'_>,
    dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<bool> {
    let sc = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Invalid("the sweep command needs a [sweep] block".into()))?;
    let claim = cfg.claim(ctx.model)?;
    let selector = cfg.scheme()?;
    let grid_vals = match &cfg.dual {
        Some(d) => pricing::constant_grid(d.grid_min, d.grid_max, d.grid_points),
        None => pricing::constant_grid(-2.0, 2.0, 21),
    };
    let rep = pricing::gamma_sweep(&claim, cfg.params.q, &sc.gammas, ctx, selector, &grid_vals)?;
    // Scaling identity at the configured gamma.
    let params = cfg.qgamma()?;
    let mut scalings = Vec::new();
    for kappa in [0.5, 2.0] {
        // Inadmissible scaled claims are skipped, other errors surface.
        match pricing::scaling_identity(&claim, kappa, &params, ctx, selector) {
            Ok(s) => scalings.push(s),
            Err(qpricer_core::Error::Inadmissible { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let json = report::sweep_json(claim.id(), cfg.params.q, &rep, &scalings);
    files.push(write_csv(
        dir,
        "sweep.csv",
        "gamma,f0,ce0,riskneutral0",
        &report::sweep_csv_rows(&json),
    )?);
    let pass = json.all_pass;
    files.push(write_json(dir, "sweep_report.json", &json)?);
    Ok(pass)
}

fn run_properties(
    params: &QGammaParams,
    ctx: &PricingContext<'_>,
    dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<bool> {
    let matrix = pricing::property_suite(params, ctx)?;
    let json = report::PropertyMatrixJson::from(&matrix);
    files.push(write_json(dir, "properties_report.json", &json)?);
    Ok(matrix.all_pass)
}
