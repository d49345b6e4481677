//! Bounded contingent claims with mechanical bound certificates.
//!
//! A claim is a payoff of the terminal state `(W_T, Wperp_T)` together
//! with certified bounds `lo <= payoff <= hi` and a hedgeability class
//! derived from which coordinates the payoff reads. Bounds come from
//! interval arithmetic over the payoff expression, never from sampling,
//! so admissibility for a given `(q, gamma)` — `exp_q(-gamma xi)` pinched
//! between positive constants — is decidable before any simulation.
//!
//! Custom payoffs are restricted to a small expression grammar (constants,
//! `w`/`wperp` coordinates, `+`, `*`, `min`, `max`, `clamp`, smoothed
//! indicator). Indicator nodes expose their threshold as a "kink" that
//! numerical schemes may use: the finite difference solver smooths the
//! jump over a ramp, the regression solver anchors extra basis functions
//! at it.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::qcalc::{q_exp, QGammaParams};

/// Which terminal coordinates a payoff depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HedgeClass {
    /// Function of `W_T` only: replicable by trading, priced risk-neutrally.
    Attainable,
    /// Function of `Wperp_T` only: orthogonal to the traded directions.
    Unhedged,
    /// Depends on both blocks.
    General,
}

/// A terminal-state coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    W(usize),
    Wperp(usize),
}

/// Location of a payoff discontinuity (pre-smoothing), used as a scheme
/// hint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub coord: Coordinate,
    pub location: f64,
}

/// Payoff expression tree. `SmoothInd` is a linear ramp from 0 to 1 over
/// `[center - width/2, center + width/2]`; `width = 0` is a hard jump.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffExpr {
    Const(f64),
    W(usize),
    Wperp(usize),
    Add(Box<PayoffExpr>, Box<PayoffExpr>),
    Mul(Box<PayoffExpr>, Box<PayoffExpr>),
    Min(Box<PayoffExpr>, Box<PayoffExpr>),
    Max(Box<PayoffExpr>, Box<PayoffExpr>),
    Clamp {
        arg: Box<PayoffExpr>,
        lo: f64,
        hi: f64,
    },
    SmoothInd {
        arg: Box<PayoffExpr>,
        center: f64,
        width: f64,
    },
    Tanh(Box<PayoffExpr>),
}

fn ramp(x: f64, center: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return if x > center { 1.0 } else { 0.0 };
    }
    ((x - center) / width + 0.5).clamp(0.0, 1.0)
}

/// Closed interval with extended-real endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    fn add(self, o: Self) -> Self {
        Self {
            lo: self.lo + o.lo,
            hi: self.hi + o.hi,
        }
    }

    fn mul(self, o: Self) -> Self {
        // 0 * inf = 0: payoff factors are pointwise finite; an infinite
        // endpoint only marks an unbounded range.
        let prod = |a: f64, b: f64| {
            if a == 0.0 || b == 0.0 {
                0.0
            } else {
                a * b
            }
        };
        let cands = [
            prod(self.lo, o.lo),
            prod(self.lo, o.hi),
            prod(self.hi, o.lo),
            prod(self.hi, o.hi),
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in cands {
            lo = lo.min(c);
            hi = hi.max(c);
        }
        Self { lo, hi }
    }

    fn min(self, o: Self) -> Self {
        Self {
            lo: self.lo.min(o.lo),
            hi: self.hi.min(o.hi),
        }
    }

    fn max(self, o: Self) -> Self {
        Self {
            lo: self.lo.max(o.lo),
            hi: self.hi.max(o.hi),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

impl PayoffExpr {
    pub fn eval(&self, w: &[f64], wperp: &[f64]) -> f64 {
        match self {
            PayoffExpr::Const(c) => *c,
            PayoffExpr::W(i) => w[*i],
            PayoffExpr::Wperp(j) => wperp[*j],
            PayoffExpr::Add(a, b) => a.eval(w, wperp) + b.eval(w, wperp),
            PayoffExpr::Mul(a, b) => a.eval(w, wperp) * b.eval(w, wperp),
            PayoffExpr::Min(a, b) => a.eval(w, wperp).min(b.eval(w, wperp)),
            PayoffExpr::Max(a, b) => a.eval(w, wperp).max(b.eval(w, wperp)),
            PayoffExpr::Clamp { arg, lo, hi } => arg.eval(w, wperp).clamp(*lo, *hi),
            PayoffExpr::SmoothInd { arg, center, width } => {
                ramp(arg.eval(w, wperp), *center, *width)
            }
            PayoffExpr::Tanh(a) => libm::tanh(a.eval(w, wperp)),
        }
    }

    /// Certified range by interval arithmetic (monotone nodes exact,
    /// products conservative).
    pub fn bounds(&self) -> Interval {
        match self {
            PayoffExpr::Const(c) => Interval::point(*c),
            PayoffExpr::W(_) | PayoffExpr::Wperp(_) => Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
            PayoffExpr::Add(a, b) => a.bounds().add(b.bounds()),
            PayoffExpr::Mul(a, b) => a.bounds().mul(b.bounds()),
            PayoffExpr::Min(a, b) => a.bounds().min(b.bounds()),
            PayoffExpr::Max(a, b) => a.bounds().max(b.bounds()),
            PayoffExpr::Clamp { lo, hi, .. } => Interval { lo: *lo, hi: *hi },
            PayoffExpr::SmoothInd { .. } => Interval { lo: 0.0, hi: 1.0 },
            PayoffExpr::Tanh(_) => Interval { lo: -1.0, hi: 1.0 },
        }
    }

    fn collect_coords(&self, w_used: &mut Vec<usize>, p_used: &mut Vec<usize>) {
        match self {
            PayoffExpr::Const(_) => {}
            PayoffExpr::W(i) => {
                if !w_used.contains(i) {
                    w_used.push(*i);
                }
            }
            PayoffExpr::Wperp(j) => {
                if !p_used.contains(j) {
                    p_used.push(*j);
                }
            }
            PayoffExpr::Add(a, b)
            | PayoffExpr::Mul(a, b)
            | PayoffExpr::Min(a, b)
            | PayoffExpr::Max(a, b) => {
                a.collect_coords(w_used, p_used);
                b.collect_coords(w_used, p_used);
            }
            PayoffExpr::Clamp { arg, .. }
            | PayoffExpr::SmoothInd { arg, .. }
            | PayoffExpr::Tanh(arg) => arg.collect_coords(w_used, p_used),
        }
    }

    /// Widen indicator ramps to at least the given width per block
    /// (`w_width` for indicators reading `W`, `p_width` otherwise).
    /// Finite difference schemes need Lipschitz terminal data.
    pub fn widen_indicators(self, w_width: f64, p_width: f64) -> PayoffExpr {
        let rec = |e: Box<PayoffExpr>| Box::new(e.widen_indicators(w_width, p_width));
        match self {
            PayoffExpr::SmoothInd { arg, center, width } => {
                let mut w_used = Vec::new();
                let mut p_used = Vec::new();
                arg.collect_coords(&mut w_used, &mut p_used);
                let min_width = if p_used.is_empty() { w_width } else { p_width };
                PayoffExpr::SmoothInd {
                    arg: rec(arg),
                    center,
                    width: width.max(min_width),
                }
            }
            PayoffExpr::Add(a, b) => PayoffExpr::Add(rec(a), rec(b)),
            PayoffExpr::Mul(a, b) => PayoffExpr::Mul(rec(a), rec(b)),
            PayoffExpr::Min(a, b) => PayoffExpr::Min(rec(a), rec(b)),
            PayoffExpr::Max(a, b) => PayoffExpr::Max(rec(a), rec(b)),
            PayoffExpr::Clamp { arg, lo, hi } => PayoffExpr::Clamp {
                arg: rec(arg),
                lo,
                hi,
            },
            PayoffExpr::Tanh(a) => PayoffExpr::Tanh(rec(a)),
            leaf => leaf,
        }
    }

    /// Kinks of hard indicators sitting directly on a coordinate.
    fn collect_kinks(&self, out: &mut Vec<Kink>) {
        match self {
            PayoffExpr::SmoothInd { arg, center, .. } => match **arg {
                PayoffExpr::W(i) => out.push(Kink {
                    coord: Coordinate::W(i),
                    location: *center,
                }),
                PayoffExpr::Wperp(j) => out.push(Kink {
                    coord: Coordinate::Wperp(j),
                    location: *center,
                }),
                _ => arg.collect_kinks(out),
            },
            PayoffExpr::Add(a, b)
            | PayoffExpr::Mul(a, b)
            | PayoffExpr::Min(a, b)
            | PayoffExpr::Max(a, b) => {
                a.collect_kinks(out);
                b.collect_kinks(out);
            }
            PayoffExpr::Clamp { arg, .. } | PayoffExpr::Tanh(arg) => arg.collect_kinks(out),
            _ => {}
        }
    }
}

/// A bounded claim: payoff expression, certified bounds, hedge class.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    id: String,
    expr: PayoffExpr,
    lo: f64,
    hi: f64,
    hedge: HedgeClass,
    kinks: Vec<Kink>,
}

impl Claim {
    /// Build a claim from an expression; fails if the certified range is
    /// unbounded.
    pub fn from_expr(id: impl Into<String>, expr: PayoffExpr) -> Result<Self> {
        let b = expr.bounds();
        if !b.is_bounded() {
            return Err(Error::Invalid {
                what: String::from(
                    "payoff bounds are not certifiable: wrap coordinates in clamp/min/max/ind",
                ),
            });
        }
        let mut w_used = Vec::new();
        let mut p_used = Vec::new();
        expr.collect_coords(&mut w_used, &mut p_used);
        let hedge = match (w_used.is_empty(), p_used.is_empty()) {
            (true, true) | (false, true) => HedgeClass::Attainable,
            (true, false) => HedgeClass::Unhedged,
            (false, false) => HedgeClass::General,
        };
        // Constants are attainable and unhedged at once; classify as
        // unhedged so the one-dimensional closed form applies unchanged.
        let hedge = if w_used.is_empty() && p_used.is_empty() {
            HedgeClass::Unhedged
        } else {
            hedge
        };
        let mut kinks = Vec::new();
        expr.collect_kinks(&mut kinks);
        Ok(Self {
            id: id.into(),
            expr,
            lo: b.lo,
            hi: b.hi,
            hedge,
            kinks,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn expr(&self) -> &PayoffExpr {
        &self.expr
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn range(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn hedge_class(&self) -> HedgeClass {
        self.hedge
    }

    pub fn kinks(&self) -> &[Kink] {
        &self.kinks
    }

    pub fn is_constant(&self) -> bool {
        self.lo == self.hi
    }

    #[inline]
    pub fn eval(&self, w: &[f64], wperp: &[f64]) -> f64 {
        self.expr.eval(w, wperp)
    }

    /// Pinching constants of `exp_q(-gamma xi)`: admissibility means the
    /// claim's certified bounds map into `(0, inf)` under the deformed
    /// exponential, i.e. the bounds sit strictly inside the positivity
    /// domain of `mu`. Returns `(m1, m2)` with `0 < m1 <= m2`.
    pub fn admissibility(&self, params: &QGammaParams) -> Result<(f64, f64)> {
        let g = params.gamma();
        let q = params.q();
        let m1 = q_exp(-g * self.hi, q).map_err(|_| Error::Inadmissible {
            reason: format!(
                "exp_q(-gamma hi) undefined for claim '{}' at q={q}, gamma={g} (hi={})",
                self.id, self.hi
            ),
        })?;
        let m2 = q_exp(-g * self.lo, q).map_err(|_| Error::Inadmissible {
            reason: format!(
                "exp_q(-gamma lo) undefined for claim '{}' at q={q}, gamma={g} (lo={})",
                self.id, self.lo
            ),
        })?;
        if !(m1 > 0.0) {
            return Err(Error::Inadmissible {
                reason: format!("exp_q(-gamma xi) touches zero for claim '{}'", self.id),
            });
        }
        let dom = params.lambda_domain();
        if !dom.contains(self.lo) || !dom.contains(self.hi) {
            return Err(Error::Inadmissible {
                reason: format!(
                    "claim '{}' bounds [{}, {}] leave the positivity domain of mu",
                    self.id, self.lo, self.hi
                ),
            });
        }
        Ok((m1, m2))
    }

    /// `-xi`, for seller-side pricing.
    pub fn negate(&self) -> Result<Claim> {
        Claim::from_expr(
            format!("neg({})", self.id),
            PayoffExpr::Mul(
                Box::new(PayoffExpr::Const(-1.0)),
                Box::new(self.expr.clone()),
            ),
        )
    }

    /// `kappa * xi`.
    pub fn scale(&self, kappa: f64) -> Result<Claim> {
        Claim::from_expr(
            format!("{}*{}", kappa, self.id),
            PayoffExpr::Mul(
                Box::new(PayoffExpr::Const(kappa)),
                Box::new(self.expr.clone()),
            ),
        )
    }

    /// `c + xi`.
    pub fn shift(&self, c: f64) -> Result<Claim> {
        Claim::from_expr(
            format!("{}+{}", self.id, c),
            PayoffExpr::Add(
                Box::new(self.expr.clone()),
                Box::new(PayoffExpr::Const(c)),
            ),
        )
    }

    /// Convex mixture `kappa xi + (1-kappa) eta`.
    pub fn mix(&self, other: &Claim, kappa: f64) -> Result<Claim> {
        Claim::from_expr(
            format!("mix({},{},{})", kappa, self.id, other.id),
            PayoffExpr::Add(
                Box::new(PayoffExpr::Mul(
                    Box::new(PayoffExpr::Const(kappa)),
                    Box::new(self.expr.clone()),
                )),
                Box::new(PayoffExpr::Mul(
                    Box::new(PayoffExpr::Const(1.0 - kappa)),
                    Box::new(other.expr.clone()),
                )),
            ),
        )
    }
}

/// Registry of named payoffs.
pub mod registry {
    use super::*;
    use crate::market::MarketModel;

    /// `xi = c`.
    pub fn constant(c: f64) -> Claim {
        Claim::from_expr(format!("constant({c})"), PayoffExpr::Const(c)).unwrap()
    }

    /// Scaled digital on the orthogonal coordinate:
    /// `scale * 1{Wperp_T > level}`.
    pub fn digital_wperp(level: f64, scale: f64) -> Claim {
        Claim::from_expr(
            format!("digital_wperp(level={level}, scale={scale})"),
            PayoffExpr::Mul(
                Box::new(PayoffExpr::Const(scale)),
                Box::new(PayoffExpr::SmoothInd {
                    arg: Box::new(PayoffExpr::Wperp(0)),
                    center: level,
                    width: 0.0,
                }),
            ),
        )
        .unwrap()
    }

    /// Digital on the traded price: `scale * 1{S_T - S_0 > level}`.
    /// Requires a constant drift so `S_T - S_0 = W_T + lambda T` is a
    /// function of the terminal state.
    pub fn digital_w(model: &MarketModel, level: f64, scale: f64) -> Result<Claim> {
        let shift = model.constant_drift_shift().ok_or_else(|| Error::Invalid {
            what: String::from("digital_w needs a constant drift"),
        })?;
        Claim::from_expr(
            format!("digital_w(level={level}, scale={scale})"),
            PayoffExpr::Mul(
                Box::new(PayoffExpr::Const(scale)),
                Box::new(PayoffExpr::SmoothInd {
                    arg: Box::new(PayoffExpr::W(0)),
                    center: level - shift[0],
                    width: 0.0,
                }),
            ),
        )
    }

    /// Clamped linear payoff of the traded price:
    /// `clamp(S_T - S_0, lo, hi)`; constant drift required.
    pub fn clamped_linear_w(model: &MarketModel, lo: f64, hi: f64) -> Result<Claim> {
        let shift = model.constant_drift_shift().ok_or_else(|| Error::Invalid {
            what: String::from("clamped_linear_w needs a constant drift"),
        })?;
        Claim::from_expr(
            format!("clamped_linear_w({lo},{hi})"),
            PayoffExpr::Clamp {
                arg: Box::new(PayoffExpr::Add(
                    Box::new(PayoffExpr::W(0)),
                    Box::new(PayoffExpr::Const(shift[0])),
                )),
                lo,
                hi,
            },
        )
    }

    /// Smooth claim reading both blocks:
    /// `a tanh(W_T) + b tanh(Wperp_T) + c`.
    pub fn smooth_mixed(a: f64, b: f64, c: f64) -> Claim {
        Claim::from_expr(
            format!("smooth_mixed({a},{b},{c})"),
            PayoffExpr::Add(
                Box::new(PayoffExpr::Add(
                    Box::new(PayoffExpr::Mul(
                        Box::new(PayoffExpr::Const(a)),
                        Box::new(PayoffExpr::Tanh(Box::new(PayoffExpr::W(0)))),
                    )),
                    Box::new(PayoffExpr::Mul(
                        Box::new(PayoffExpr::Const(b)),
                        Box::new(PayoffExpr::Tanh(Box::new(PayoffExpr::Wperp(0)))),
                    )),
                )),
                Box::new(PayoffExpr::Const(c)),
            ),
        )
        .unwrap()
    }
}

/// Recursive-descent parser for the payoff mini-grammar.
///
/// ```text
/// expr    := term (('+' | '-') term)*
/// term    := factor ('*' factor)*
/// factor  := number | 'w' | 'wperp' | 'w[i]' | 'wperp[i]'
///          | 'min' '(' expr ',' expr ')' | 'max' '(' expr ',' expr ')'
///          | 'clamp' '(' expr ',' number ',' number ')'
///          | 'ind' '(' expr ',' number ',' number ')'   # center, width
///          | 'tanh' '(' expr ')' | '(' expr ')' | '-' factor
/// ```
pub fn parse_payoff(src: &str) -> Result<PayoffExpr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, what: &str) -> Error {
        Error::Invalid {
            what: format!(
                "payoff expression: {what} at byte {} of {:?}",
                self.pos,
                core::str::from_utf8(self.src).unwrap_or("<non-utf8>")
            ),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<PayoffExpr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = PayoffExpr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = PayoffExpr::Mul(
                        Box::new(PayoffExpr::Const(-1.0)),
                        Box::new(self.term()?),
                    );
                    acc = PayoffExpr::Add(Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<PayoffExpr> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            acc = PayoffExpr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'.' || *c == b'e' || *c == b'E' || (*c == b'-' && self.pos > start && matches!(self.src[self.pos-1], b'e' | b'E')))
        {
            self.pos += 1;
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map_err(|_| self.err("expected number"))
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        String::from(core::str::from_utf8(&self.src[start..self.pos]).unwrap_or(""))
    }

    fn opt_index(&mut self) -> Result<usize> {
        if self.peek() == Some(b'[') {
            self.pos += 1;
            let n = self.number()?;
            self.eat(b']')?;
            Ok(n as usize)
        } else {
            Ok(0)
        }
    }

    fn factor(&mut self) -> Result<PayoffExpr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.eat(b')')?;
                Ok(e)
            }
            Some(c) if c == b'-' || c.is_ascii_digit() || c == b'.' => {
                Ok(PayoffExpr::Const(self.number()?))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident();
                match name.as_str() {
                    "w" => Ok(PayoffExpr::W(self.opt_index()?)),
                    "wperp" => Ok(PayoffExpr::Wperp(self.opt_index()?)),
                    "min" | "max" => {
                        self.eat(b'(')?;
                        let a = self.expr()?;
                        self.eat(b',')?;
                        let b = self.expr()?;
                        self.eat(b')')?;
                        Ok(if name == "min" {
                            PayoffExpr::Min(Box::new(a), Box::new(b))
                        } else {
                            PayoffExpr::Max(Box::new(a), Box::new(b))
                        })
                    }
                    "clamp" => {
                        self.eat(b'(')?;
                        let a = self.expr()?;
                        self.eat(b',')?;
                        let lo = self.number()?;
                        self.eat(b',')?;
                        let hi = self.number()?;
                        self.eat(b')')?;
                        if lo > hi {
                            return Err(self.err("clamp bounds inverted"));
                        }
                        Ok(PayoffExpr::Clamp {
                            arg: Box::new(a),
                            lo,
                            hi,
                        })
                    }
                    "ind" => {
                        self.eat(b'(')?;
                        let a = self.expr()?;
                        self.eat(b',')?;
                        let center = self.number()?;
                        self.eat(b',')?;
                        let width = self.number()?;
                        self.eat(b')')?;
                        if width < 0.0 {
                            return Err(self.err("indicator width must be >= 0"));
                        }
                        Ok(PayoffExpr::SmoothInd {
                            arg: Box::new(a),
                            center,
                            width,
                        })
                    }
                    "tanh" => {
                        self.eat(b'(')?;
                        let a = self.expr()?;
                        self.eat(b')')?;
                        Ok(PayoffExpr::Tanh(Box::new(a)))
                    }
                    other => Err(self.err(&format!("unknown identifier '{other}'"))),
                }
            }
            _ => Err(self.err("expected factor")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Drift, MarketModel};
    use alloc::vec;

    fn model() -> MarketModel {
        MarketModel::new(1, 1, Drift::Constant(vec![0.6]), None, 1.0, vec![0.0]).unwrap()
    }

    #[test]
    fn registry_bounds_and_classes() {
        let c = registry::constant(0.3);
        assert_eq!((c.lo(), c.hi()), (0.3, 0.3));
        assert!(c.is_constant());

        let d = registry::digital_wperp(0.0, 1.0);
        assert_eq!((d.lo(), d.hi()), (0.0, 1.0));
        assert_eq!(d.hedge_class(), HedgeClass::Unhedged);
        assert_eq!(d.kinks().len(), 1);
        assert_eq!(d.kinks()[0].coord, Coordinate::Wperp(0));

        let a = registry::digital_w(&model(), 0.0, 1.0).unwrap();
        assert_eq!(a.hedge_class(), HedgeClass::Attainable);
        // Kink in W shifted by the drift integral: level - lambda T = -0.6.
        assert_eq!(a.kinks()[0].location, -0.6);
        // 1{S_T - S_0 > 0} at W_T = -0.5: S - S0 = -0.5 + 0.6 > 0.
        assert_eq!(a.eval(&[-0.5], &[0.0]), 1.0);
        assert_eq!(a.eval(&[-0.7], &[0.0]), 0.0);

        let s = registry::smooth_mixed(0.25, 0.25, 0.5);
        assert_eq!(s.hedge_class(), HedgeClass::General);
        assert_eq!((s.lo(), s.hi()), (0.0, 1.0));

        let cl = registry::clamped_linear_w(&model(), -0.5, 0.5).unwrap();
        assert_eq!(cl.hedge_class(), HedgeClass::Attainable);
        assert_eq!((cl.lo(), cl.hi()), (-0.5, 0.5));
        assert_eq!(cl.eval(&[0.2], &[0.0]), 0.5_f64.min(0.2 + 0.6));
    }

    #[test]
    fn unbounded_rejected() {
        assert!(Claim::from_expr("raw", PayoffExpr::W(0)).is_err());
        let e = PayoffExpr::Mul(
            Box::new(PayoffExpr::Const(0.0)),
            Box::new(PayoffExpr::W(0)),
        );
        // 0 * unbounded is certifiably zero.
        assert!(Claim::from_expr("zero", e).is_ok());
    }

    #[test]
    fn admissibility() {
        let p = QGammaParams::new(2.0, 1.0).unwrap();
        let d = registry::digital_wperp(0.0, 1.0);
        let (m1, m2) = d.admissibility(&p).unwrap();
        assert!((m1 - 0.5).abs() < 1e-15); // exp_2(-1) = 1/2
        assert_eq!(m2, 1.0);
        // Seller side of the unit digital at q=2: bounds [-1, 0] touch the
        // boundary of Lambda, so it must be rejected.
        assert!(d.negate().unwrap().admissibility(&p).is_err());
        // The half-size digital is admissible on both sides.
        let h = registry::digital_wperp(0.0, 0.5);
        assert!(h.admissibility(&p).is_ok());
        assert!(h.negate().unwrap().admissibility(&p).is_ok());
        // q = 0.5, gamma = 100: Lambda = (-inf, 0.02), unit digital fails.
        let p2 = QGammaParams::new(0.5, 100.0).unwrap();
        assert!(d.admissibility(&p2).is_err());
    }

    #[test]
    fn parser_round_trips() {
        let e = parse_payoff("clamp(w, -0.5, 0.5) + 0.25*tanh(wperp)").unwrap();
        let c = Claim::from_expr("custom", e).unwrap();
        assert_eq!(c.hedge_class(), HedgeClass::General);
        assert!((c.lo() + 0.75).abs() < 1e-15 && (c.hi() - 0.75).abs() < 1e-15);
        let v = c.eval(&[0.3], &[1.0]);
        assert!((v - (0.3 + 0.25 * libm::tanh(1.0))).abs() < 1e-15);

        let d = parse_payoff("0.5*ind(wperp, 0, 0)").unwrap();
        let dc = Claim::from_expr("digital", d).unwrap();
        assert_eq!(dc.kinks().len(), 1);
        assert_eq!(dc.eval(&[0.0], &[0.1]), 0.5);

        assert!(parse_payoff("w +").is_err());
        assert!(parse_payoff("foo(w)").is_err());
        assert!(parse_payoff("min(w, 1) extra").is_err());
        assert!(parse_payoff("clamp(w, 2, 1)").is_err());

        let neg = parse_payoff("min(max(w, -1), 1) - 0.5").unwrap();
        let nc = Claim::from_expr("band", neg).unwrap();
        assert_eq!((nc.lo(), nc.hi()), (-1.5, 0.5));
    }

    #[test]
    fn algebra_preserves_certificates() {
        let d = registry::digital_wperp(0.0, 1.0);
        let s = d.scale(0.5).unwrap();
        assert_eq!((s.lo(), s.hi()), (0.0, 0.5));
        let n = d.negate().unwrap();
        assert_eq!((n.lo(), n.hi()), (-1.0, 0.0));
        let sh = d.shift(0.2).unwrap();
        assert_eq!((sh.lo(), sh.hi()), (0.2, 1.2));
        let m = d.mix(&registry::constant(1.0), 0.25).unwrap();
        assert_eq!((m.lo(), m.hi()), (0.75, 1.0));
        assert_eq!(m.eval(&[0.0], &[1.0]), 0.25 + 0.75);
    }
}
