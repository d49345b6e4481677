//! The `(m+n)`-dimensional Brownian market: seeded increment ensembles,
//! stochastic exponentials, measure changes and reweighted expectations.
//!
//! Conventions. The traded price is `S_t = S_0 + int lambda ds + W_t` with
//! `W` the first `m` Brownian components and `W_perp` the remaining `n`.
//! A candidate martingale-measure density against `P` is
//! `E(-lambda . W + alpha . W_perp)`; against the minimal martingale
//! measure it is `E(beta . W^{-lambda} + alpha . W_perp)` with `beta = 0`
//! for martingale measures.
//!
//! An ensemble is a bag of i.i.d. Gaussian increments for an
//! `(m+n)`-dimensional Brownian motion. Which measure those increments
//! "are Brownian under" is chosen by the caller per computation
//! ([`Coords`]): under `P` block one is `W`; under `Q^min` block one is
//! `W^{-lambda}` and the `P`-state of `W` is reconstructed pathwise from
//! `dW = dW^{-lambda} - lambda(t, W) dt`. `W_perp` is shared by both.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SubstreamRng;
use crate::stats;

/// Strictly increasing knots `t_0 = 0 < ... < t_K = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    knots: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(Error::Invalid {
                what: format!("time grid needs horizon > 0 and steps >= 1, got T={horizon}, K={steps}"),
            });
        }
        let knots = (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect();
        Ok(Self { knots })
    }

    /// Uniform grid refined by a geometric tail: `base_steps` uniform
    /// knots on `[0, (1 - tail_fraction) T]`, then `tail_steps` knots
    /// with geometrically shrinking spacing down to the horizon. Backward
    /// schemes facing terminal-layer singularities (digital payoffs) keep
    /// their bulk cost while resolving the layer.
    pub fn uniform_with_geometric_tail(
        horizon: f64,
        base_steps: usize,
        tail_fraction: f64,
        tail_steps: usize,
    ) -> Result<Self> {
        if !(horizon > 0.0) || base_steps == 0 || tail_steps < 2 {
            return Err(Error::Invalid {
                what: format!(
                    "geometric-tail grid needs horizon > 0, base_steps >= 1, tail_steps >= 2"
                ),
            });
        }
        if !(tail_fraction > 0.0 && tail_fraction < 0.5) {
            return Err(Error::Invalid {
                what: format!("tail_fraction must lie in (0, 0.5), got {tail_fraction}"),
            });
        }
        let t_split = horizon * (1.0 - tail_fraction);
        let dt_base = t_split / base_steps as f64;
        let tail_len = horizon - t_split;
        // Tail steps dt_base r^j, j = 1..=n: solve
        // dt_base r (1 - r^n)/(1 - r) = tail_len for the ratio r.
        let n = tail_steps as f64;
        let f = |r: f64| dt_base * r * (1.0 - libm::pow(r, n)) / (1.0 - r) - tail_len;
        let (mut lo, mut hi) = (1e-6, 1.0 - 1e-9);
        if f(hi) < 0.0 {
            return Err(Error::Invalid {
                what: format!(
                    "geometric tail infeasible: {tail_steps} shrinking steps starting at {dt_base} cannot cover {tail_len}"
                ),
            });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let mut knots = Vec::with_capacity(base_steps + tail_steps + 1);
        for k in 0..=base_steps {
            knots.push(t_split * k as f64 / base_steps as f64);
        }
        let mut t = t_split;
        let mut dt = dt_base * r;
        // The last knot is pinned to the horizon; it absorbs the residual
        // of the bisection (about the smallest step in size).
        for _ in 0..tail_steps - 1 {
            t += dt;
            knots.push(t);
            dt *= r;
        }
        knots.push(horizon);
        Self::from_knots(knots)
    }

    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots[0] != 0.0 {
            return Err(Error::Invalid {
                what: String::from("time grid must start at 0 and have at least one step"),
            });
        }
        if !knots.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Invalid {
                what: String::from("time grid knots must be strictly increasing"),
            });
        }
        Ok(Self { knots })
    }

    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn t(&self, k: usize) -> f64 {
        self.knots[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.knots[k + 1] - self.knots[k]
    }

    pub fn horizon(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Knot index closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (k, &tk) in self.knots.iter().enumerate() {
            let d = (tk - t).abs();
            if d < dist {
                dist = d;
                best = k;
            }
        }
        best
    }
}

/// Deterministic Markovian drift `lambda(t, w)` of the traded block.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    Constant(Vec<f64>),
    /// `lambda_i(t, w) = coef_i * tanh(scale * w_i)`; bounded by `|coef|`.
    TanhState { coef: Vec<f64>, scale: f64 },
}

impl Drift {
    pub fn dim(&self) -> usize {
        match self {
            Drift::Constant(c) => c.len(),
            Drift::TanhState { coef, .. } => coef.len(),
        }
    }

    pub fn eval_into(&self, _t: f64, w: &[f64], out: &mut [f64]) {
        match self {
            Drift::Constant(c) => out.copy_from_slice(c),
            Drift::TanhState { coef, scale } => {
                for i in 0..coef.len() {
                    out[i] = coef[i] * libm::tanh(scale * w[i]);
                }
            }
        }
    }

    /// A mechanical bound on the Euclidean norm of the drift.
    pub fn sup_bound(&self) -> f64 {
        let c = match self {
            Drift::Constant(c) => c,
            Drift::TanhState { coef, .. } => coef,
        };
        libm::sqrt(stats::pairwise_sum_by(c, |x| x * x))
    }

    pub fn as_constant(&self) -> Option<&[f64]> {
        match self {
            Drift::Constant(c) => Some(c),
            _ => None,
        }
    }
}

/// Market dimensions, drift and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    m: usize,
    n: usize,
    drift: Drift,
    lambda_max: f64,
    horizon: f64,
    s0: Vec<f64>,
}

impl MarketModel {
    pub fn new(
        m: usize,
        n: usize,
        drift: Drift,
        lambda_max: Option<f64>,
        horizon: f64,
        s0: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Invalid {
                what: format!("need m >= 1 traded and n >= 1 orthogonal dimensions, got ({m}, {n})"),
            });
        }
        if !(horizon > 0.0) {
            return Err(Error::Invalid {
                what: format!("horizon must be positive, got {horizon}"),
            });
        }
        if drift.dim() != m {
            return Err(Error::Invalid {
                what: format!("drift has dimension {}, expected m = {m}", drift.dim()),
            });
        }
        if s0.len() != m {
            return Err(Error::Invalid {
                what: format!("s0 has dimension {}, expected m = {m}", s0.len()),
            });
        }
        let declared = lambda_max.unwrap_or_else(|| drift.sup_bound());
        if declared + 1e-12 < drift.sup_bound() {
            return Err(Error::Invalid {
                what: format!(
                    "declared drift bound {declared} is below the drift's own bound {}",
                    drift.sup_bound()
                ),
            });
        }
        Ok(Self {
            m,
            n,
            drift,
            lambda_max: declared,
            horizon,
            s0,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    /// Total drift shift `int_0^T lambda dt` for constant drifts.
    pub fn constant_drift_shift(&self) -> Option<Vec<f64>> {
        self.drift
            .as_constant()
            .map(|c| c.iter().map(|&x| x * self.horizon).collect())
    }
}

/// Measure the ensemble's raw increments are Brownian under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coords {
    /// Block one is `W` under the physical measure.
    UnderP,
    /// Block one is `W^{-lambda}` under the minimal martingale measure.
    UnderQmin,
}

/// Seeded Gaussian increment ensemble on a time grid.
///
/// Each path owns substream `path_index` of the seed, so content depends
/// only on `(seed, grid, dims, path_index)` — never on how generation work
/// was split.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    seed: u64,
    n_paths: usize,
    m: usize,
    n: usize,
    grid: TimeGrid,
    dw: Vec<f64>,
    dwp: Vec<f64>,
}

impl PathEnsemble {
    /// Fill increments of paths `first_path..first_path + count` into the
    /// given buffers (layout `[(local_path * K + k) * dim + i]`).
    pub fn fill_range(
        grid: &TimeGrid,
        m: usize,
        n: usize,
        seed: u64,
        first_path: usize,
        count: usize,
        dw_out: &mut [f64],
        dwp_out: &mut [f64],
    ) {
        let steps = grid.steps();
        debug_assert_eq!(dw_out.len(), count * steps * m);
        debug_assert_eq!(dwp_out.len(), count * steps * n);
        let sqrt_dt: Vec<f64> = (0..steps).map(|k| libm::sqrt(grid.dt(k))).collect();
        for p in 0..count {
            let mut rng = SubstreamRng::new(seed, (first_path + p) as u64);
            for k in 0..steps {
                let s = sqrt_dt[k];
                let base_w = (p * steps + k) * m;
                for i in 0..m {
                    dw_out[base_w + i] = s * rng.normal();
                }
                let base_p = (p * steps + k) * n;
                for j in 0..n {
                    dwp_out[base_p + j] = s * rng.normal();
                }
            }
        }
    }

    pub fn generate(grid: TimeGrid, m: usize, n: usize, n_paths: usize, seed: u64) -> Self {
        let steps = grid.steps();
        let mut dw = vec![0.0; n_paths * steps * m];
        let mut dwp = vec![0.0; n_paths * steps * n];
        Self::fill_range(&grid, m, n, seed, 0, n_paths, &mut dw, &mut dwp);
        Self {
            seed,
            n_paths,
            m,
            n,
            grid,
            dw,
            dwp,
        }
    }

    /// Assemble an ensemble from externally filled buffers (parallel
    /// drivers use this; content must come from [`PathEnsemble::fill_range`]).
    pub fn from_parts(
        grid: TimeGrid,
        m: usize,
        n: usize,
        n_paths: usize,
        seed: u64,
        dw: Vec<f64>,
        dwp: Vec<f64>,
    ) -> Result<Self> {
        if dw.len() != n_paths * grid.steps() * m || dwp.len() != n_paths * grid.steps() * n {
            return Err(Error::Mismatch {
                what: "ensemble buffers",
                left: dw.len(),
                right: n_paths * grid.steps() * m,
            });
        }
        Ok(Self {
            seed,
            n_paths,
            m,
            n,
            grid,
            dw,
            dwp,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn dw(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * self.grid.steps() + step) * self.m;
        &self.dw[base..base + self.m]
    }

    #[inline]
    pub fn dwp(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * self.grid.steps() + step) * self.n;
        &self.dwp[base..base + self.n]
    }

    pub fn raw_dw(&self) -> &[f64] {
        &self.dw
    }

    pub fn raw_dwp(&self) -> &[f64] {
        &self.dwp
    }
}

/// Simulate an ensemble for a model, checking the declared drift bound on
/// every sampled grid state.
pub fn simulate(
    model: &MarketModel,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::Invalid {
            what: String::from("need at least one path"),
        });
    }
    let ens = PathEnsemble::generate(grid.clone(), model.m(), model.n(), n_paths, seed);
    if model.drift.as_constant().is_none() {
        let mut worst = 0.0_f64;
        let mut lam = vec![0.0; model.m()];
        for p in 0..n_paths {
            let mut cur = PathCursor::new(&ens, model, Coords::UnderP, p);
            loop {
                model.drift.eval_into(cur.t(), cur.w(), &mut lam);
                let norm = libm::sqrt(lam.iter().map(|x| x * x).sum());
                worst = worst.max(norm);
                if cur.done() {
                    break;
                }
                cur.advance();
            }
        }
        if worst > model.lambda_max + 1e-9 {
            return Err(Error::Invalid {
                what: format!(
                    "drift exceeded declared bound on the grid: {worst} > {}",
                    model.lambda_max
                ),
            });
        }
    }
    Ok(ens)
}

/// Walks one path knot by knot, maintaining the `P`-coordinate state.
pub struct PathCursor<'a> {
    ens: &'a PathEnsemble,
    model: &'a MarketModel,
    coords: Coords,
    path: usize,
    k: usize,
    w: Vec<f64>,
    wperp: Vec<f64>,
    lam: Vec<f64>,
}

impl<'a> PathCursor<'a> {
    pub fn new(ens: &'a PathEnsemble, model: &'a MarketModel, coords: Coords, path: usize) -> Self {
        Self {
            ens,
            model,
            coords,
            path,
            k: 0,
            w: vec![0.0; ens.m()],
            wperp: vec![0.0; ens.n()],
            lam: vec![0.0; ens.m()],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> f64 {
        self.ens.grid().t(self.k)
    }

    pub fn done(&self) -> bool {
        self.k == self.ens.grid().steps()
    }

    pub fn dt(&self) -> f64 {
        self.ens.grid().dt(self.k)
    }

    /// `P`-coordinate `W` state at the current knot.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn wperp(&self) -> &[f64] {
        &self.wperp
    }

    /// Raw block increments over the upcoming step.
    pub fn increments(&self) -> (&'a [f64], &'a [f64]) {
        (self.ens.dw(self.path, self.k), self.ens.dwp(self.path, self.k))
    }

    pub fn advance(&mut self) {
        debug_assert!(!self.done());
        let (d1, d2) = self.increments();
        match self.coords {
            Coords::UnderP => {
                for i in 0..self.w.len() {
                    self.w[i] += d1[i];
                }
            }
            Coords::UnderQmin => {
                let t = self.t();
                let dt = self.dt();
                self.model.drift.eval_into(t, &self.w, &mut self.lam);
                for i in 0..self.w.len() {
                    self.w[i] += d1[i] - self.lam[i] * dt;
                }
            }
        }
        for j in 0..self.wperp.len() {
            self.wperp[j] += d2[j];
        }
        self.k += 1;
    }
}

/// State-dependent loadings on one Brownian block, evaluated at the
/// `P`-coordinate state.
pub trait Loadings {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, w: &[f64], wperp: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct ConstLoadings(pub Vec<f64>);

impl Loadings for ConstLoadings {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _t: f64, _w: &[f64], _wperp: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroLoadings(pub usize);

impl Loadings for ZeroLoadings {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, _t: f64, _w: &[f64], _wperp: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// A candidate measure given by its loading on `W_perp` and, for members
/// of the wider equivalent-measure family only, a loading `beta` on the
/// driftless traded Brownian.
pub struct MeasureSpec<'a> {
    pub alpha: &'a dyn Loadings,
    pub beta: Option<&'a dyn Loadings>,
    pub label: String,
}

impl<'a> MeasureSpec<'a> {
    pub fn martingale(alpha: &'a dyn Loadings, label: impl Into<String>) -> Self {
        Self {
            alpha,
            beta: None,
            label: label.into(),
        }
    }
}

/// Density process paths `D_{t_k}` per path; strictly positive with
/// `D_0 = 1` by construction (log-Euler).
#[derive(Debug, Clone)]
pub struct DensityPaths {
    n_paths: usize,
    knots: usize,
    values: Vec<f64>,
    pub source: String,
    pub base: String,
}

impl DensityPaths {
    #[inline]
    pub fn at(&self, path: usize, knot: usize) -> f64 {
        self.values[path * self.knots + knot]
    }

    pub fn terminal(&self, path: usize) -> f64 {
        self.at(path, self.knots - 1)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn knots(&self) -> usize {
        self.knots
    }

    pub fn collect_terminal(&self) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.terminal(p)).collect()
    }
}

/// Loadings on both blocks at once.
pub trait PairLoadings {
    fn eval(
        &self,
        t: f64,
        w: &[f64],
        wperp: &[f64],
        out_w: &mut [f64],
        out_perp: &mut [f64],
    );
}

/// Adapter combining optional per-block loadings (missing block = zero).
pub struct SplitLoadings<'a> {
    pub on_w: Option<&'a dyn Loadings>,
    pub on_perp: Option<&'a dyn Loadings>,
}

impl PairLoadings for SplitLoadings<'_> {
    fn eval(&self, t: f64, w: &[f64], wperp: &[f64], out_w: &mut [f64], out_perp: &mut [f64]) {
        match self.on_w {
            Some(l) => l.eval(t, w, wperp, out_w),
            None => out_w.fill(0.0),
        }
        match self.on_perp {
            Some(l) => l.eval(t, w, wperp, out_perp),
            None => out_perp.fill(0.0),
        }
    }
}

/// Negated drift on the traded block: the minimal-measure integrand.
pub struct MinimalLoadings<'a>(pub &'a MarketModel);

impl PairLoadings for MinimalLoadings<'_> {
    fn eval(&self, t: f64, w: &[f64], _wperp: &[f64], out_w: &mut [f64], out_perp: &mut [f64]) {
        self.0.drift().eval_into(t, w, out_w);
        for x in out_w.iter_mut() {
            *x = -*x;
        }
        out_perp.fill(0.0);
    }
}

/// Doleans-Dade exponential of `theta . dBlocks` along every path,
/// discretized in log space so positivity is exact:
/// `D_{k+1} = D_k * exp(theta_k . dB_k - |theta_k|^2 dt_k / 2)`.
pub fn stochastic_exponential(
    ens: &PathEnsemble,
    model: &MarketModel,
    coords: Coords,
    theta: &dyn PairLoadings,
    source: impl Into<String>,
    base: impl Into<String>,
) -> Result<DensityPaths> {
    let steps = ens.grid().steps();
    let knots = steps + 1;
    let mut values = vec![0.0; ens.n_paths() * knots];
    let mut th_w = vec![0.0; ens.m()];
    let mut th_p = vec![0.0; ens.n()];
    for p in 0..ens.n_paths() {
        let mut cur = PathCursor::new(ens, model, coords, p);
        let mut logd = 0.0;
        values[p * knots] = 1.0;
        for k in 0..steps {
            theta.eval(cur.t(), cur.w(), cur.wperp(), &mut th_w, &mut th_p);
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
            values[p * knots + k + 1] = libm::exp(logd);
            cur.advance();
        }
    }
    Ok(DensityPaths {
        n_paths: ens.n_paths(),
        knots,
        values,
        source: source.into(),
        base: base.into(),
    })
}

/// Density of the minimal martingale measure against `P`:
/// the stochastic exponential of `(-lambda, 0)` under `P` coordinates.
pub fn minimal_density(model: &MarketModel, ens: &PathEnsemble) -> Result<DensityPaths> {
    stochastic_exponential(
        ens,
        model,
        Coords::UnderP,
        &MinimalLoadings(model),
        "Qmin",
        "P",
    )
}

/// Density of a candidate measure against the minimal martingale measure,
/// built under `Q^min` coordinates: `E(beta . W^{-lambda} + alpha . W_perp)`.
pub fn density_ratio(
    measure: &MeasureSpec<'_>,
    model: &MarketModel,
    ens: &PathEnsemble,
) -> Result<DensityPaths> {
    let pair = SplitLoadings {
        on_w: measure.beta,
        on_perp: Some(measure.alpha),
    };
    stochastic_exponential(
        ens,
        model,
        Coords::UnderQmin,
        &pair,
        measure.label.clone(),
        "Qmin",
    )
}

/// Sample mean and standard error of `D_T^power * payoff`.
pub fn reweighted_expectation(
    payoff: &[f64],
    density: &DensityPaths,
    power: f64,
) -> Result<(f64, f64)> {
    if payoff.len() != density.n_paths() {
        return Err(Error::Mismatch {
            what: "reweighted expectation",
            left: payoff.len(),
            right: density.n_paths(),
        });
    }
    let vals: Vec<f64> = (0..payoff.len())
        .map(|p| {
            let d = density.terminal(p);
            let w = if power == 0.0 {
                1.0
            } else if power == 1.0 {
                d
            } else {
                libm::pow(d, power)
            };
            w * payoff[p]
        })
        .collect();
    Ok(stats::mean_stderr(&vals))
}

/// Terminal `P`-coordinate states of every path.
pub struct TerminalStates {
    pub w: Vec<f64>,
    pub wperp: Vec<f64>,
}

pub fn terminal_states(ens: &PathEnsemble, model: &MarketModel, coords: Coords) -> TerminalStates {
    let (m, n) = (ens.m(), ens.n());
    let mut w = vec![0.0; ens.n_paths() * m];
    let mut wperp = vec![0.0; ens.n_paths() * n];
    for p in 0..ens.n_paths() {
        let mut cur = PathCursor::new(ens, model, coords, p);
        while !cur.done() {
            cur.advance();
        }
        w[p * m..(p + 1) * m].copy_from_slice(cur.w());
        wperp[p * n..(p + 1) * n].copy_from_slice(cur.wperp());
    }
    TerminalStates { w, wperp }
}

/// Full `P`-coordinate state paths at every knot (regression schemes need
/// the whole cross-section per step).
pub struct StatePaths {
    pub n_paths: usize,
    pub knots: usize,
    pub m: usize,
    pub n: usize,
    pub w: Vec<f64>,
    pub wperp: Vec<f64>,
}

impl StatePaths {
    #[inline]
    pub fn w_at(&self, path: usize, knot: usize) -> &[f64] {
        let base = (path * self.knots + knot) * self.m;
        &self.w[base..base + self.m]
    }

    #[inline]
    pub fn wperp_at(&self, path: usize, knot: usize) -> &[f64] {
        let base = (path * self.knots + knot) * self.n;
        &self.wperp[base..base + self.n]
    }
}

pub fn state_paths(ens: &PathEnsemble, model: &MarketModel, coords: Coords) -> StatePaths {
    let (m, n) = (ens.m(), ens.n());
    let knots = ens.grid().steps() + 1;
    let mut w = vec![0.0; ens.n_paths() * knots * m];
    let mut wperp = vec![0.0; ens.n_paths() * knots * n];
    for p in 0..ens.n_paths() {
        let mut cur = PathCursor::new(ens, model, coords, p);
        loop {
            let k = cur.k();
            w[(p * knots + k) * m..(p * knots + k + 1) * m].copy_from_slice(cur.w());
            wperp[(p * knots + k) * n..(p * knots + k + 1) * n].copy_from_slice(cur.wperp());
            if cur.done() {
                break;
            }
            cur.advance();
        }
    }
    StatePaths {
        n_paths: ens.n_paths(),
        knots,
        m,
        n,
        w,
        wperp,
    }
}

/// Euler price paths `S = S_0 + int lambda dt + W` under `P`,
/// layout `[(path * (K+1) + k) * m + i]`.
pub fn asset_paths(model: &MarketModel, ens: &PathEnsemble) -> Vec<f64> {
    let m = ens.m();
    let knots = ens.grid().steps() + 1;
    let mut s = vec![0.0; ens.n_paths() * knots * m];
    let mut lam = vec![0.0; m];
    for p in 0..ens.n_paths() {
        let mut cur = PathCursor::new(ens, model, Coords::UnderP, p);
        let mut drift_acc = vec![0.0; m];
        loop {
            let k = cur.k();
            for i in 0..m {
                s[(p * knots + k) * m + i] = model.s0()[i] + drift_acc[i] + cur.w()[i];
            }
            if cur.done() {
                break;
            }
            model.drift().eval_into(cur.t(), cur.w(), &mut lam);
            let dt = cur.dt();
            for i in 0..m {
                drift_acc[i] += lam[i] * dt;
            }
            cur.advance();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_1d(lam: f64) -> MarketModel {
        MarketModel::new(
            1,
            1,
            Drift::Constant(vec![lam]),
            None,
            1.0,
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::uniform(0.0, 10).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::from_knots(vec![0.0, 0.5, 0.5]).is_err());
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.steps(), 4);
        assert_eq!(g.horizon(), 2.0);
        assert!((g.dt(1) - 0.5).abs() < 1e-15);
        assert_eq!(g.index_of(1.1), 2);
    }

    #[test]
    fn ensemble_deterministic_in_seed() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let a = PathEnsemble::generate(g.clone(), 1, 1, 16, 7);
        let b = PathEnsemble::generate(g.clone(), 1, 1, 16, 7);
        assert_eq!(a, b);
        let c = PathEnsemble::generate(g, 1, 1, 16, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn fill_range_matches_full_generation() {
        // Chunked generation must be byte-identical to whole-ensemble
        // generation: the worker-count independence contract.
        let g = TimeGrid::uniform(1.0, 5).unwrap();
        let full = PathEnsemble::generate(g.clone(), 2, 1, 10, 99);
        let steps = g.steps();
        for (first, count) in [(0usize, 3usize), (3, 4), (7, 3)] {
            let mut dw = vec![0.0; count * steps * 2];
            let mut dwp = vec![0.0; count * steps];
            PathEnsemble::fill_range(&g, 2, 1, 99, first, count, &mut dw, &mut dwp);
            for p in 0..count {
                for k in 0..steps {
                    assert_eq!(full.dw(first + p, k), &dw[(p * steps + k) * 2..(p * steps + k) * 2 + 2]);
                    assert_eq!(full.dwp(first + p, k)[0], dwp[p * steps + k]);
                }
            }
        }
    }

    #[test]
    fn increment_moments() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let ens = PathEnsemble::generate(g, 1, 1, 20_000, 11);
        let dt = ens.grid().dt(0);
        for k in [0usize, 7, 19] {
            let xs: Vec<f64> = (0..ens.n_paths()).map(|p| ens.dw(p, k)[0]).collect();
            let (m, se) = stats::mean_stderr(&xs);
            assert!(m.abs() < 5.0 * se, "mean {m} vs se {se} at step {k}");
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let (v, vse) = stats::mean_stderr(&sq);
            assert!((v - dt).abs() < 5.0 * vse, "var {v} vs dt {dt} at step {k}");
        }
    }

    #[test]
    fn zero_integrand_gives_unit_density() {
        let model = model_1d(0.6);
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let ens = simulate(&model, &g, 50, 3).unwrap();
        let d = stochastic_exponential(
            &ens,
            &model,
            Coords::UnderP,
            &SplitLoadings {
                on_w: None,
                on_perp: None,
            },
            "Q",
            "P",
        )
        .unwrap();
        for p in 0..50 {
            for k in 0..=10 {
                assert_eq!(d.at(p, k), 1.0);
            }
        }
    }

    #[test]
    fn constant_loading_martingale_and_moment() {
        // |theta|^2 = c: E D_T = 1, E D_T^q = exp(q(q-1) c T / 2).
        let model = model_1d(0.0);
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let ens = simulate(&model, &g, 40_000, 5).unwrap();
        let alpha = ConstLoadings(vec![0.8]);
        let laml = ConstLoadings(vec![0.6]);
        let pair = SplitLoadings {
            on_w: Some(&laml),
            on_perp: Some(&alpha),
        };
        let d = stochastic_exponential(&ens, &model, Coords::UnderP, &pair, "Q", "P").unwrap();
        let term = d.collect_terminal();
        let (mean, se) = stats::mean_stderr(&term);
        assert!((mean - 1.0).abs() < 4.0 * se, "martingale mean {mean} +- {se}");
        let c = 0.6f64 * 0.6 + 0.8 * 0.8;
        for q in [0.5, 2.0] {
            let vals: Vec<f64> = term.iter().map(|&x| libm::pow(x, q)).collect();
            let (mq, seq) = stats::mean_stderr(&vals);
            let target = libm::exp(q * (q - 1.0) * c * 0.5);
            assert!(
                (mq - target).abs() < 4.0 * seq,
                "q-moment {mq} vs {target} (q={q})"
            );
        }
    }

    #[test]
    fn minimal_density_cases() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let flat = model_1d(0.0);
        let ens0 = simulate(&flat, &g, 100, 2).unwrap();
        let d0 = minimal_density(&flat, &ens0).unwrap();
        for p in 0..100 {
            assert_eq!(d0.terminal(p), 1.0);
        }

        let model = model_1d(0.6);
        let ens = simulate(&model, &g, 40_000, 2).unwrap();
        let d = minimal_density(&model, &ens).unwrap();
        let term = d.collect_terminal();
        let (mean, se) = stats::mean_stderr(&term);
        assert!((mean - 1.0).abs() < 4.0 * se);
        let sq: Vec<f64> = term.iter().map(|&x| x * x).collect();
        let (m2, se2) = stats::mean_stderr(&sq);
        let target = libm::exp(0.36);
        assert!((m2 - target).abs() < 4.0 * se2, "{m2} vs {target}");
    }

    #[test]
    fn density_ratio_cases() {
        let model = model_1d(0.6);
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let ens = simulate(&model, &g, 40_000, 9).unwrap();
        let zero = ZeroLoadings(1);
        let spec = MeasureSpec::martingale(&zero, "Qmin");
        let d = density_ratio(&spec, &model, &ens).unwrap();
        for p in 0..ens.n_paths() {
            assert_eq!(d.terminal(p), 1.0);
        }
        let alpha = ConstLoadings(vec![0.8]);
        let spec = MeasureSpec::martingale(&alpha, "Q");
        let d = density_ratio(&spec, &model, &ens).unwrap();
        let term = d.collect_terminal();
        let (mean, se) = stats::mean_stderr(&term);
        assert!((mean - 1.0).abs() < 4.0 * se);
        let q = 0.5;
        let vals: Vec<f64> = term.iter().map(|&x| libm::pow(x, q)).collect();
        let (mq, seq) = stats::mean_stderr(&vals);
        let target = libm::exp(q * (q - 1.0) * 0.64 * 0.5);
        assert!((mq - target).abs() < 4.0 * seq);
    }

    #[test]
    fn reweighted_expectation_cases() {
        let model = model_1d(0.0);
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let ens = simulate(&model, &g, 40_000, 13).unwrap();
        let ones = vec![1.0; ens.n_paths()];
        let alpha = ConstLoadings(vec![0.8]);
        let spec = MeasureSpec::martingale(&alpha, "Q");
        let d = density_ratio(&spec, &model, &ens).unwrap();
        let (v, se) = reweighted_expectation(&ones, &d, 0.0).unwrap();
        assert_eq!((v, se), (1.0, 0.0));
        let (v2, se2) = reweighted_expectation(&ones, &d, 2.0).unwrap();
        let target = libm::exp(0.64);
        assert!((v2 - target).abs() < 4.0 * se2, "{v2} vs {target}");

        // Digital on W_perp under alpha = 0: symmetric, expectation 1/2.
        let term = terminal_states(&ens, &model, Coords::UnderQmin);
        let digital: Vec<f64> = (0..ens.n_paths())
            .map(|p| if term.wperp[p] > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let unit = stochastic_exponential(
            &ens,
            &model,
            Coords::UnderQmin,
            &SplitLoadings {
                on_w: None,
                on_perp: None,
            },
            "Qmin",
            "Qmin",
        )
        .unwrap();
        let (vd, sed) = reweighted_expectation(&digital, &unit, 2.0).unwrap();
        assert!((vd - 0.5).abs() < 4.0 * sed);

        assert!(reweighted_expectation(&ones[..10], &d, 1.0).is_err());
    }

    #[test]
    fn asset_paths_cases() {
        let g = TimeGrid::uniform(1.0, 40).unwrap();
        let flat = model_1d(0.0);
        let ens = simulate(&flat, &g, 2_000, 17).unwrap();
        let s = asset_paths(&flat, &ens);
        let states = state_paths(&ens, &flat, Coords::UnderP);
        for p in 0..ens.n_paths() {
            for k in 0..=40 {
                assert_eq!(s[p * 41 + k], states.w_at(p, k)[0]);
            }
        }

        let model = model_1d(1.0);
        let ens = simulate(&model, &g, 40_000, 17).unwrap();
        let s = asset_paths(&model, &ens);
        let st: Vec<f64> = (0..ens.n_paths()).map(|p| s[p * 41 + 40]).collect();
        let (m, se) = stats::mean_stderr(&st);
        assert!((m - 1.0).abs() < 4.0 * se, "mean terminal price {m} +- {se}");

        // Under Q^min reweighting the price is a martingale: E = S_0.
        let d = minimal_density(&model, &ens).unwrap();
        let (mq, seq) = reweighted_expectation(&st, &d, 1.0).unwrap();
        assert!(mq.abs() < 4.0 * seq, "martingale check {mq} +- {seq}");
    }

    #[test]
    fn girsanov_shift_removal() {
        // E_P[D^{Qmin,P} phi(W^{-lambda})] = E[phi(B)] for a standard B.
        let model = model_1d(0.6);
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let ens = simulate(&model, &g, 40_000, 23).unwrap();
        let d = minimal_density(&model, &ens).unwrap();
        let states = terminal_states(&ens, &model, Coords::UnderP);
        let cases: [(fn(f64) -> f64, f64); 3] =
            [(|x| x, 0.0), (|x| x * x, 1.0), (|x| libm::tanh(x), 0.0)];
        for (phi, target) in cases {
            let vals: Vec<f64> = (0..ens.n_paths())
                .map(|p| phi(states.w[p] + 0.6))
                .collect();
            let (v, se) = reweighted_expectation(&vals, &d, 1.0).unwrap();
            assert!(
                (v - target).abs() < 4.0 * se.max(1e-12),
                "phi check {v} vs {target}"
            );
        }
    }

    #[test]
    fn qmin_coords_reconstruct_p_state() {
        // Under Q^min coordinates with constant drift, the reconstructed
        // P-state is exactly block1 - lambda * t.
        let model = model_1d(0.6);
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let ens = simulate(&model, &g, 5, 31).unwrap();
        for p in 0..5 {
            let mut cur = PathCursor::new(&ens, &model, Coords::UnderQmin, p);
            let mut raw = 0.0;
            loop {
                assert!((cur.w()[0] - (raw - 0.6 * cur.t())).abs() < 1e-12);
                if cur.done() {
                    break;
                }
                raw += cur.increments().0[0];
                cur.advance();
            }
        }
    }

    #[test]
    fn nonfinite_loading_reports_position() {
        struct Bad;
        impl Loadings for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, t: f64, _w: &[f64], _wp: &[f64], out: &mut [f64]) {
                out[0] = if t > 0.4 { f64::NAN } else { 0.0 };
            }
        }
        let model = model_1d(0.0);
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let ens = simulate(&model, &g, 3, 1).unwrap();
        let bad = Bad;
        let spec = MeasureSpec::martingale(&bad, "bad");
        match density_ratio(&spec, &model, &ens) {
            Err(Error::NonFinite { path, step, .. }) => {
                assert_eq!(path, 0);
                assert_eq!(step, 5);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn model_validation() {
        assert!(MarketModel::new(0, 1, Drift::Constant(vec![]), None, 1.0, vec![]).is_err());
        assert!(
            MarketModel::new(1, 1, Drift::Constant(vec![0.6]), Some(0.5), 1.0, vec![0.0]).is_err()
        );
        let m = MarketModel::new(1, 1, Drift::Constant(vec![0.6]), None, 1.0, vec![0.0]).unwrap();
        assert_eq!(m.lambda_max(), 0.6);
        assert_eq!(m.constant_drift_shift().unwrap(), vec![0.6]);
    }
}
