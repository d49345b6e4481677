//! Serializable report mirrors and file writers.
//!
//! Reports are byte-deterministic for a fixed config and seed: struct
//! field order fixes JSON key order, floats print in shortest round-trip
//! form, and nothing volatile (timestamps, durations, host info) enters a
//! report file — that goes to the `meta.txt` side channel.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use qpricer_core::bsde::pde::PdeField;
use qpricer_core::bsde::{BsdeSolution, Diagnostics, QxiReport, Scheme, ValueField};
use qpricer_core::entropy::{EntropyEstimate, KlLimitReport, Route, SubmartingaleReport};
use qpricer_core::market::PathEnsemble;
use qpricer_core::pricing::{
    BoundsReport, DualRecord, EndpointCheck, PriceReport, PriceValue, PropertyMatrix,
    ScalingReport, SellerReport, SweepReport,
};

use crate::error::{CliError, Result};

#[derive(Serialize)]
pub struct ValueJson {
    pub value: f64,
    pub stderr: f64,
    pub tol: f64,
}

impl From<&PriceValue> for ValueJson {
    fn from(v: &PriceValue) -> Self {
        Self {
            value: v.value,
            stderr: v.stderr,
            tol: v.tol(),
        }
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Pde => "pde",
        Scheme::Lsmc => "lsmc",
        Scheme::ClosedForm => "closed_form",
    }
}

#[derive(Serialize)]
pub struct DiagnosticsJson {
    pub picard_iterations: usize,
    pub picard_residual: f64,
    pub mu_min: f64,
    pub clamp_rate: f64,
    pub z_norm: f64,
    pub zperp_norm: f64,
    pub noise_floor: f64,
    pub replicates: Vec<f64>,
    pub notes: Vec<String>,
}

impl From<&Diagnostics> for DiagnosticsJson {
    fn from(d: &Diagnostics) -> Self {
        Self {
            picard_iterations: d.picard_iterations,
            picard_residual: d.picard_residual,
            mu_min: if d.mu_min.is_finite() { d.mu_min } else { 0.0 },
            clamp_rate: d.clamp_rate,
            z_norm: d.z_norm,
            zperp_norm: d.zperp_norm,
            noise_floor: d.noise_floor,
            replicates: d.replicates.clone(),
            notes: d.notes.clone(),
        }
    }
}

#[derive(Serialize)]
pub struct DualRecordJson {
    pub label: String,
    pub objective: f64,
    pub stderr: f64,
    pub gap: f64,
    pub tol: f64,
    pub pass: bool,
}

impl From<&DualRecord> for DualRecordJson {
    fn from(r: &DualRecord) -> Self {
        Self {
            label: r.label.clone(),
            objective: r.objective,
            stderr: r.stderr,
            gap: r.gap,
            tol: r.tol,
            pass: r.pass,
        }
    }
}

#[derive(Serialize)]
pub struct ChecksJson {
    pub sandwich: bool,
    pub unhedged_coincidence: Option<bool>,
    pub seller_ordered: Option<bool>,
}

#[derive(Serialize)]
pub struct OptimizerJson {
    pub alpha_star_origin: f64,
    pub theta_star_origin: f64,
}

#[derive(Serialize)]
pub struct PriceReportJson {
    pub claim: String,
    pub q: f64,
    pub gamma: f64,
    pub scheme: &'static str,
    pub f0: ValueJson,
    pub seller: Option<ValueJson>,
    pub ce0: ValueJson,
    pub riskneutral0: ValueJson,
    pub checks: ChecksJson,
    pub duals: Vec<DualRecordJson>,
    pub optimizer: Option<OptimizerJson>,
    pub diagnostics: DiagnosticsJson,
}

impl PriceReportJson {
    pub fn new(rep: &PriceReport, seller_ordered: Option<bool>) -> Self {
        Self {
            claim: rep.claim_id.clone(),
            q: rep.q,
            gamma: rep.gamma,
            scheme: scheme_name(rep.scheme),
            f0: (&rep.f0).into(),
            seller: rep.seller.as_ref().map(Into::into),
            ce0: (&rep.ce0).into(),
            riskneutral0: (&rep.riskneutral0).into(),
            checks: ChecksJson {
                sandwich: rep.sandwich_pass,
                unhedged_coincidence: rep.unhedged_coincidence,
                seller_ordered,
            },
            duals: rep.duals.iter().map(Into::into).collect(),
            optimizer: rep.optimizer_at_origin.map(|(a, t)| OptimizerJson {
                alpha_star_origin: a,
                theta_star_origin: t,
            }),
            diagnostics: (&rep.diagnostics).into(),
        }
    }
}

#[derive(Serialize)]
pub struct EntropyRowJson {
    pub q: f64,
    pub measure: String,
    pub route: &'static str,
    pub estimate: f64,
    pub stderr: f64,
    pub closed_form: Option<f64>,
}

pub fn entropy_row(est: &EntropyEstimate, measure: &str, closed_form: Option<f64>) -> EntropyRowJson {
    EntropyRowJson {
        q: est.q,
        measure: measure.to_string(),
        route: match est.route {
            Route::Definitional => "definitional",
            Route::Integral => "integral",
        },
        estimate: est.value,
        stderr: est.stderr,
        closed_form,
    }
}

#[derive(Serialize)]
pub struct RouteAgreementJson {
    pub q: f64,
    pub measure: String,
    pub definitional: f64,
    pub integral: f64,
    pub combined_stderr: f64,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct KlRowJson {
    pub q: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub closed_form: f64,
}

#[derive(Serialize)]
pub struct KlJson {
    pub delta: f64,
    pub kl_value: f64,
    pub rows: Vec<KlRowJson>,
    pub within_band: bool,
}

impl From<&KlLimitReport> for KlJson {
    fn from(r: &KlLimitReport) -> Self {
        Self {
            delta: r.delta,
            kl_value: r.kl_value,
            rows: r
                .rows
                .iter()
                .map(|&(q, est, se, cf)| KlRowJson {
                    q,
                    estimate: est,
                    stderr: se,
                    closed_form: cf,
                })
                .collect(),
            within_band: r.within_band,
        }
    }
}

#[derive(Serialize)]
pub struct SubmartingaleJson {
    pub q: f64,
    pub t_index: usize,
    pub checked: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub pass: bool,
}

pub fn submartingale_row(r: &SubmartingaleReport) -> SubmartingaleJson {
    SubmartingaleJson {
        q: r.q,
        t_index: r.t_index,
        checked: r.checked,
        violations: r.violations,
        violation_fraction: r.violation_fraction,
        pass: r.violation_fraction < 0.01,
    }
}

#[derive(Serialize)]
pub struct EntropyReportJson {
    pub rows: Vec<EntropyRowJson>,
    pub route_agreement: Vec<RouteAgreementJson>,
    pub kl: Option<KlJson>,
    pub submartingale: Vec<SubmartingaleJson>,
    pub all_pass: bool,
}

#[derive(Serialize)]
pub struct DualReportJson {
    pub claim: String,
    pub q: f64,
    pub gamma: f64,
    pub f0: ValueJson,
    pub records: Vec<DualRecordJson>,
    pub qxi_martingale: Option<QxiJson>,
    pub all_pass: bool,
}

#[derive(Serialize)]
pub struct QxiJson {
    pub estimate: f64,
    pub stderr: f64,
    pub y0: f64,
    pub gap: f64,
    pub pass: bool,
}

impl From<&QxiReport> for QxiJson {
    fn from(r: &QxiReport) -> Self {
        Self {
            estimate: r.estimate,
            stderr: r.stderr,
            y0: r.y0,
            gap: r.gap,
            pass: r.pass,
        }
    }
}

#[derive(Serialize)]
pub struct SweepRowJson {
    pub gamma: f64,
    pub f0: f64,
    pub f0_stderr: f64,
    pub ce0: f64,
    pub riskneutral0: f64,
}

#[derive(Serialize)]
pub struct EndpointJson {
    pub gamma: f64,
    pub f0: f64,
    pub distorted_inf: f64,
    pub penalty_at_minimizer: f64,
    pub tol: f64,
    pub pass: bool,
}

impl From<&EndpointCheck> for EndpointJson {
    fn from(e: &EndpointCheck) -> Self {
        Self {
            gamma: e.gamma,
            f0: e.f0,
            distorted_inf: e.distorted_inf,
            penalty_at_minimizer: e.penalty_at_minimizer,
            tol: e.tol,
            pass: e.pass,
        }
    }
}

#[derive(Serialize)]
pub struct SweepReportJson {
    pub claim: String,
    pub q: f64,
    pub rows: Vec<SweepRowJson>,
    pub monotone_pass: bool,
    pub small_gamma_pass: bool,
    pub large_gamma: EndpointJson,
    pub scaling: Vec<ScalingJson>,
    pub all_pass: bool,
}

#[derive(Serialize)]
pub struct ScalingJson {
    pub kappa: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub tol: f64,
    pub pass: bool,
}

impl From<&ScalingReport> for ScalingJson {
    fn from(r: &ScalingReport) -> Self {
        Self {
            kappa: r.kappa,
            lhs: r.lhs,
            rhs: r.rhs,
            diff: r.diff,
            tol: r.tol,
            pass: r.pass,
        }
    }
}

pub fn sweep_json(claim: &str, q: f64, rep: &SweepReport, scaling: &[ScalingReport]) -> SweepReportJson {
    let all_pass = rep.monotone_pass
        && rep.small_gamma_pass
        && rep.large_gamma.pass
        && scaling.iter().all(|s| s.pass);
    SweepReportJson {
        claim: claim.to_string(),
        q,
        rows: rep
            .rows
            .iter()
            .map(|r| SweepRowJson {
                gamma: r.gamma,
                f0: r.f0.value,
                f0_stderr: r.f0.stderr,
                ce0: r.ce0,
                riskneutral0: r.riskneutral0,
            })
            .collect(),
        monotone_pass: rep.monotone_pass,
        small_gamma_pass: rep.small_gamma_pass,
        large_gamma: (&rep.large_gamma).into(),
        scaling: scaling.iter().map(Into::into).collect(),
        all_pass,
    }
}

#[derive(Serialize)]
pub struct PropertyCheckJson {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct PropertyMatrixJson {
    pub q: f64,
    pub gamma: f64,
    pub checks: Vec<PropertyCheckJson>,
    pub all_pass: bool,
}

impl From<&PropertyMatrix> for PropertyMatrixJson {
    fn from(m: &PropertyMatrix) -> Self {
        Self {
            q: m.q,
            gamma: m.gamma,
            checks: m
                .checks
                .iter()
                .map(|c| PropertyCheckJson {
                    name: c.name.clone(),
                    lhs: c.lhs,
                    rhs: c.rhs,
                    tol: c.tol,
                    pass: c.pass,
                })
                .collect(),
            all_pass: m.all_pass,
        }
    }
}

#[derive(Serialize)]
pub struct BoundsRowJson {
    pub claim: String,
    pub f0: f64,
    pub ce0: f64,
    pub riskneutral0: f64,
    pub tol: f64,
    pub sandwich_pass: bool,
    pub distorted_inf: f64,
    pub distorted_pass: bool,
}

#[derive(Serialize)]
pub struct BoundsReportJson {
    pub rows: Vec<BoundsRowJson>,
    pub all_pass: bool,
}

impl From<&BoundsReport> for BoundsReportJson {
    fn from(r: &BoundsReport) -> Self {
        Self {
            rows: r
                .rows
                .iter()
                .map(|row| BoundsRowJson {
                    claim: row.claim_id.clone(),
                    f0: row.f0.value,
                    ce0: row.ce0.value,
                    riskneutral0: row.riskneutral0.value,
                    tol: row.tol,
                    sandwich_pass: row.sandwich_pass,
                    distorted_inf: row.distorted_inf,
                    distorted_pass: row.distorted_pass,
                })
                .collect(),
            all_pass: r.all_pass,
        }
    }
}

pub fn seller_json(rep: &SellerReport) -> serde_json::Value {
    serde_json::json!({
        "buyer": ValueJson::from(&rep.buyer),
        "seller": ValueJson::from(&rep.seller),
        "width": rep.width,
        "ordered": rep.ordered,
    })
}

/// Write a JSON report (pretty, trailing newline).
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Invalid(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(&path, text).map_err(CliError::io(path.display().to_string()))?;
    Ok(path)
}

/// Write CSV rows (UTF-8, '.' decimal separator, fixed documented header).
pub fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    let path = dir.join(name);
    let mut text = String::with_capacity(rows.len() * 48 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(&path, text).map_err(CliError::io(path.display().to_string()))?;
    Ok(path)
}

/// Entropy CSV: `q,measure,route,estimate,stderr`.
pub fn entropy_csv_rows(rows: &[EntropyRowJson]) -> Vec<String> {
    rows.iter()
        .map(|r| format!("{},{},{},{},{}", r.q, r.measure, r.route, r.estimate, r.stderr))
        .collect()
}

/// Sweep CSV: `gamma,f0,ce0,riskneutral0`.
pub fn sweep_csv_rows(rep: &SweepReportJson) -> Vec<String> {
    rep.rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.gamma, r.f0, r.ce0, r.riskneutral0))
        .collect()
}

/// Solution surface CSV at selected time knots:
/// `t,w,wperp,y,z,zperp`.
pub fn surface_csv_rows(field: &PdeField, horizon: f64) -> Vec<String> {
    let (nt, nx, ny) = field.shape();
    let l = field.half_width();
    let hx = 2.0 * l / (nx - 1) as f64;
    let hy = 2.0 * l / (ny - 1) as f64;
    let mut rows = Vec::new();
    for k in [0, nt / 2, nt] {
        let t = horizon * k as f64 / nt as f64;
        for ix in 0..nx {
            let x = -l + ix as f64 * hx;
            for iy in 0..ny {
                let y = -l + iy as f64 * hy;
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    t,
                    x,
                    y,
                    field.y_at(t, x, y),
                    field.z_at(t, x, y),
                    field.zperp_at(t, x, y)
                ));
            }
        }
    }
    rows
}

/// Ensemble debug CSV: `path,step,dw...,dwperp...`.
pub fn ensemble_csv_rows(ens: &PathEnsemble) -> Vec<String> {
    let steps = ens.grid().steps();
    let mut rows = Vec::with_capacity(ens.n_paths() * steps);
    for p in 0..ens.n_paths() {
        for k in 0..steps {
            let mut row = format!("{p},{k}");
            for v in ens.dw(p, k) {
                row.push(',');
                row.push_str(&v.to_string());
            }
            for v in ens.dwp(p, k) {
                row.push(',');
                row.push_str(&v.to_string());
            }
            rows.push(row);
        }
    }
    rows
}

/// Surfaces from a solution if the scheme kept a cube.
pub fn maybe_surface_rows(sol: &BsdeSolution, horizon: f64) -> Option<Vec<String>> {
    match &sol.field {
        ValueField::Pde(f) => Some(surface_csv_rows(f, horizon)),
        _ => None,
    }
}
