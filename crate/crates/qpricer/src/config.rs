//! Scenario configuration: a single TOML file with strict schema
//! validation (unknown keys rejected, ranges checked at build time).

use serde::Deserialize;

use qpricer_core::bsde::basis::BasisSpec;
use qpricer_core::bsde::lsmc::LsmcOpts;
use qpricer_core::bsde::pde::{PdeGridSpec, PdeOpts};
use qpricer_core::claims::{parse_payoff, Claim};
use qpricer_core::market::{Drift, MarketModel, TimeGrid};
use qpricer_core::pricing::SchemeSelector;
use qpricer_core::QGammaParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub market: MarketConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub claim: Option<ClaimConfig>,
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub entropy: Option<EntropyConfig>,
    #[serde(default)]
    pub dual: Option<DualConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub m: usize,
    pub n: usize,
    pub lambda: LambdaConfig,
    #[serde(default)]
    pub lambda_max: Option<f64>,
    pub horizon: f64,
    pub s0: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum LambdaConfig {
    /// Constant drift vector.
    #[serde(rename = "constant")]
    Constant { value: Vec<f64> },
    /// `lambda_i(t, w) = coef_i tanh(scale w_i)`.
    #[serde(rename = "tanh_state")]
    TanhState { coef: Vec<f64>, scale: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub q: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimConfig {
    /// Registry name: `constant`, `digital_w`, `digital_wperp`,
    /// `smooth_mixed`, `clamped_linear_w`, or `custom`.
    pub name: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub level: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    /// Bounded payoff expression for `name = "custom"`.
    #[serde(default)]
    pub expr: Option<String>,
    /// Scheme override: `auto` (default), `closed_form`, `pde`, `lsmc`.
    #[serde(default)]
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub pde: Option<PdeConfig>,
    #[serde(default)]
    pub lsmc: Option<LsmcConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub richardson: Option<bool>,
    #[serde(default)]
    pub smoothing_cells: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsmcConfig {
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default)]
    pub ridge: Option<f64>,
    #[serde(default)]
    pub kink_features: Option<bool>,
    #[serde(default)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub write_surfaces: bool,
    #[serde(default)]
    pub write_ensemble: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    /// Distortions to estimate at (1.0 allowed: Kullback-Leibler row).
    pub qs: Vec<f64>,
    /// Constant orthogonal loadings defining the candidate measures.
    pub alphas: Vec<f64>,
    /// Near-one bracket half-width for the KL limit check.
    #[serde(default)]
    pub kl_delta: Option<f64>,
    /// Conditional-entropy knots (fractions of the horizon) and inner paths.
    #[serde(default)]
    pub conditional_fractions: Vec<f64>,
    #[serde(default)]
    pub inner_paths: Option<usize>,
    /// Outer paths for nested checks (capped by n_paths).
    #[serde(default)]
    pub outer_paths: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    /// Also evaluate the analytic optimizer fields (needs a field-bearing
    /// scheme for the primal solve).
    #[serde(default)]
    pub use_optimizer: bool,
    /// Smaller ensemble for the recursive dual (it runs one regression
    /// pass per candidate).
    #[serde(default)]
    pub recursion_paths: Option<usize>,
    #[serde(default)]
    pub recursion_steps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
}

impl ScenarioConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(CliError::Config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.params.q == 1.0 {
            return Err(CliError::Invalid(
                "params.q = 1 is rejected: the pricing principle assumes q != 1 \
                 (the Kullback-Leibler case is the excluded limit)"
                    .into(),
            ));
        }
        if !(self.params.q > 0.0) {
            return Err(CliError::Invalid(format!(
                "params.q must be positive, got {}",
                self.params.q
            )));
        }
        if !(self.params.gamma > 0.0) {
            return Err(CliError::Invalid(format!(
                "params.gamma must be positive, got {}",
                self.params.gamma
            )));
        }
        if self.numerics.n_paths == 0 || self.numerics.steps == 0 {
            return Err(CliError::Invalid(
                "numerics.n_paths and numerics.steps must be at least 1".into(),
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.gammas.is_empty() || sweep.gammas.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::Invalid(
                    "sweep.gammas must be a strictly increasing, non-empty list".into(),
                ));
            }
        }
        if let Some(d) = &self.dual {
            if d.grid_points < 2 || d.grid_max <= d.grid_min {
                return Err(CliError::Invalid(
                    "dual grid needs grid_points >= 2 and grid_max > grid_min".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MarketModel> {
        let drift = match &self.market.lambda {
            LambdaConfig::Constant { value } => Drift::Constant(value.clone()),
            LambdaConfig::TanhState { coef, scale } => Drift::TanhState {
                coef: coef.clone(),
                scale: *scale,
            },
        };
        MarketModel::new(
            self.market.m,
            self.market.n,
            drift,
            self.market.lambda_max,
            self.market.horizon,
            self.market.s0.clone(),
        )
        .map_err(CliError::Core)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.market.horizon, self.numerics.steps).map_err(CliError::Core)
    }

    pub fn qgamma(&self) -> Result<QGammaParams> {
        QGammaParams::new(self.params.q, self.params.gamma).map_err(CliError::Core)
    }

    pub fn pde_grid(&self, model: &MarketModel) -> PdeGridSpec {
        match &self.numerics.pde {
            Some(p) => PdeGridSpec {
                nx: p.nx,
                ny: p.ny,
                nt: p.nt,
                half_width: p
                    .half_width
                    .unwrap_or(5.0 * self.market.horizon.sqrt()),
            },
            None => PdeGridSpec::for_model(model, 101, 101, 100),
        }
    }

    pub fn pde_opts(&self) -> PdeOpts {
        let mut opts = PdeOpts::default();
        if let Some(p) = &self.numerics.pde {
            if let Some(r) = p.richardson {
                opts.richardson = r;
            }
            if let Some(s) = p.smoothing_cells {
                opts.smoothing_cells = s;
            }
        }
        opts
    }

    pub fn lsmc_opts(&self) -> LsmcOpts {
        let mut basis = BasisSpec::default();
        let mut replicates = 1;
        if let Some(l) = &self.numerics.lsmc {
            if let Some(d) = l.degree {
                basis.degree = d;
            }
            if let Some(r) = l.ridge {
                basis.ridge = r;
            }
            if let Some(k) = l.kink_features {
                basis.kink_features = k;
            }
            if let Some(r) = l.replicates {
                replicates = r.max(1);
            }
        }
        LsmcOpts {
            basis,
            replicates,
            ..LsmcOpts::default()
        }
    }

    pub fn claim(&self, model: &MarketModel) -> Result<Claim> {
        let cc = self.claim.as_ref().ok_or_else(|| {
            CliError::Invalid("this command needs a [claim] block".into())
        })?;
        cc.build(model)
    }

    pub fn scheme(&self) -> Result<SchemeSelector> {
        let name = self
            .claim
            .as_ref()
            .and_then(|c| c.scheme.as_deref())
            .unwrap_or("auto");
        match name {
            "auto" => Ok(SchemeSelector::Auto),
            "closed_form" => Ok(SchemeSelector::ClosedForm),
            "pde" => Ok(SchemeSelector::Pde),
            "lsmc" => Ok(SchemeSelector::Lsmc),
            other => Err(CliError::Invalid(format!(
                "unknown scheme '{other}' (expected auto|closed_form|pde|lsmc)"
            ))),
        }
    }
}

impl ClaimConfig {
    pub fn build(&self, model: &MarketModel) -> Result<Claim> {
        use qpricer_core::claims::registry;
        let claim = match self.name.as_str() {
            "constant" => registry::constant(self.value.ok_or_else(|| {
                CliError::Invalid("claim 'constant' needs a value".into())
            })?),
            "digital_w" => registry::digital_w(
                model,
                self.level.unwrap_or(0.0),
                self.scale.unwrap_or(1.0),
            )
            .map_err(CliError::Core)?,
            "digital_wperp" => {
                registry::digital_wperp(self.level.unwrap_or(0.0), self.scale.unwrap_or(1.0))
            }
            "smooth_mixed" => registry::smooth_mixed(
                self.a.unwrap_or(0.25),
                self.b.unwrap_or(0.25),
                self.c.unwrap_or(0.5),
            ),
            "clamped_linear_w" => registry::clamped_linear_w(
                model,
                self.lo.unwrap_or(-0.5),
                self.hi.unwrap_or(0.5),
            )
            .map_err(CliError::Core)?,
            "custom" => {
                let src = self.expr.as_deref().ok_or_else(|| {
                    CliError::Invalid("claim 'custom' needs an expr".into())
                })?;
                let expr = parse_payoff(src).map_err(CliError::Core)?;
                Claim::from_expr(format!("custom({src})"), expr).map_err(CliError::Core)?
            }
            other => {
                return Err(CliError::Invalid(format!(
                    "unknown claim '{other}' (expected constant|digital_w|digital_wperp|\
                     smooth_mixed|clamped_linear_w|custom)"
                )))
            }
        };
        Ok(claim)
    }
}
