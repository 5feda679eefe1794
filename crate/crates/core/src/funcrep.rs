//! Scalar functions and their integral representations.
//!
//! A [`ScalarFunction`] is an expression tree over a small catalog, the two
//! resolvent-sum representations and the shifted-reciprocal constructor. Every
//! node knows its domain and, when smooth, its first two derivatives in closed
//! form. The label of a function is its spec string and parses back to the
//! same function.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::Interval;

/// Grid size used to validate `g < λ` for the shifted reciprocal.
pub const SHIFT_GRID: usize = 1000;

/// Point mass `w · δ_r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub r: f64,
    pub w: f64,
}

/// Discrete measures `μ₋`, `μ₊` and constant `c` of
/// `f(x) = c + Σ_below w/(x − r) + Σ_above w/(r − x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepMeasure {
    pub c: f64,
    pub atoms_below: Vec<Atom>,
    pub atoms_above: Vec<Atom>,
    pub interval: Interval,
}

fn check_atoms(below: &[Atom], above: &[Atom], interval: &Interval) -> Result<()> {
    for a in below.iter().chain(above) {
        if !(a.w > 0.0 && a.w.is_finite() && a.r.is_finite()) {
            return Err(Error::Config(format!(
                "atom ({}, {}) needs a finite location and positive weight",
                a.r, a.w
            )));
        }
    }
    if let Some(a) = below.iter().find(|a| a.r > interval.lo || (a.r == interval.lo && interval.lo_closed)) {
        return Err(Error::Config(format!(
            "atom at {} is not below the interval {interval}",
            a.r
        )));
    }
    if let Some(a) = above.iter().find(|a| a.r < interval.hi || (a.r == interval.hi && interval.hi_closed)) {
        return Err(Error::Config(format!(
            "atom at {} is not above the interval {interval}",
            a.r
        )));
    }
    let mass: f64 = below.iter().chain(above).map(|a| a.w / (1.0 + a.r.abs())).sum();
    if !mass.is_finite() {
        return Err(Error::Config("measure has infinite mass".into()));
    }
    Ok(())
}

/// Largest open interval avoiding every atom.
fn gap_between(below: &[Atom], above: &[Atom]) -> Result<Interval> {
    let lo = below.iter().map(|a| a.r).fold(f64::NEG_INFINITY, f64::max);
    let hi = above.iter().map(|a| a.r).fold(f64::INFINITY, f64::min);
    Interval::open(lo, hi)
}

impl RepMeasure {
    pub fn new(c: f64, atoms_below: Vec<Atom>, atoms_above: Vec<Atom>, interval: Interval) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("constant term must be ≥ 0, got {c}")));
        }
        check_atoms(&atoms_below, &atoms_above, &interval)?;
        Ok(RepMeasure {
            c,
            atoms_below,
            atoms_above,
            interval,
        })
    }

    /// Representation on the widest open interval between the atoms.
    pub fn on_natural_interval(c: f64, atoms_below: Vec<Atom>, atoms_above: Vec<Atom>) -> Result<Self> {
        let interval = gap_between(&atoms_below, &atoms_above)?;
        Self::new(c, atoms_below, atoms_above, interval)
    }

    /// Random representation on a bounded `interval`: `c ∈ [0, 1)` and one to
    /// three atoms on each side (possibly none on one side, never on both),
    /// at distance between 10% and 200% of the interval length.
    pub fn random<R: Rng>(rng: &mut R, interval: Interval) -> Result<Self> {
        if !interval.is_bounded() {
            return Err(Error::Config(format!("random representation needs a bounded interval, got {interval}")));
        }
        let len = interval.length();
        let (nb, na) = match rng.gen_range(0..4) {
            0 => (0, rng.gen_range(1..4)),
            1 => (rng.gen_range(1..4), 0),
            _ => (rng.gen_range(1..4), rng.gen_range(1..4)),
        };
        let mut atom = |sign: f64, end: f64| Atom {
            r: end + sign * len * (0.1 + 1.9 * rng.gen::<f64>()),
            w: 0.1 + 1.9 * rng.gen::<f64>(),
        };
        let below: Vec<Atom> = (0..nb).map(|_| atom(-1.0, interval.lo)).collect();
        let above: Vec<Atom> = (0..na).map(|_| atom(1.0, interval.hi)).collect();
        let c = rng.gen::<f64>();
        Self::new(c, below, above, interval)
    }

    fn value(&self, x: f64) -> f64 {
        self.c
            + self.atoms_below.iter().map(|a| a.w / (x - a.r)).sum::<f64>()
            + self.atoms_above.iter().map(|a| a.w / (a.r - x)).sum::<f64>()
    }

    fn d1(&self, x: f64) -> f64 {
        -self.atoms_below.iter().map(|a| a.w / (x - a.r).powi(2)).sum::<f64>()
            + self.atoms_above.iter().map(|a| a.w / (a.r - x).powi(2)).sum::<f64>()
    }

    fn d2(&self, x: f64) -> f64 {
        self.atoms_below.iter().map(|a| 2.0 * a.w / (x - a.r).powi(3)).sum::<f64>()
            + self.atoms_above.iter().map(|a| 2.0 * a.w / (a.r - x).powi(3)).sum::<f64>()
    }
}

pub fn eval_soc_rep(rep: &RepMeasure, x: f64) -> Result<f64> {
    if !rep.interval.contains(x) {
        return Err(Error::Domain {
            x,
            domain: rep.interval.to_string(),
        });
    }
    Ok(rep.value(x))
}

/// `f(x) = a x² + b x + c` plus the resolvent terms with their first-order
/// Taylor polynomial at `x0` removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpConvexRep {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub x0: f64,
    pub atoms_below: Vec<Atom>,
    pub atoms_above: Vec<Atom>,
    pub interval: Interval,
}

impl OpConvexRep {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: f64,
        b: f64,
        c: f64,
        x0: f64,
        atoms_below: Vec<Atom>,
        atoms_above: Vec<Atom>,
        interval: Interval,
    ) -> Result<Self> {
        if !(a >= 0.0) {
            return Err(Error::Config(format!("quadratic coefficient must be ≥ 0, got {a}")));
        }
        if !interval.contains_interior(x0) {
            return Err(Error::Config(format!("x0 = {x0} is not interior to {interval}")));
        }
        check_atoms(&atoms_below, &atoms_above, &interval)?;
        Ok(OpConvexRep {
            a,
            b,
            c,
            x0,
            atoms_below,
            atoms_above,
            interval,
        })
    }

    fn value(&self, x: f64) -> f64 {
        let d2 = (x - self.x0).powi(2);
        self.a * x * x
            + self.b * x
            + self.c
            + self
                .atoms_below
                .iter()
                .map(|at| at.w * d2 / ((x - at.r) * (self.x0 - at.r).powi(2)))
                .sum::<f64>()
            + self
                .atoms_above
                .iter()
                .map(|at| at.w * d2 / ((at.r - x) * (at.r - self.x0).powi(2)))
                .sum::<f64>()
    }

    // The integrands equal 1/(r−x) − 1/(r−x0) − (x−x0)/(r−x0)² (and the mirror
    // image below), which gives the derivatives termwise.
    fn d1(&self, x: f64) -> f64 {
        2.0 * self.a * x
            + self.b
            + self
                .atoms_below
                .iter()
                .map(|at| at.w * (1.0 / (self.x0 - at.r).powi(2) - 1.0 / (x - at.r).powi(2)))
                .sum::<f64>()
            + self
                .atoms_above
                .iter()
                .map(|at| at.w * (1.0 / (at.r - x).powi(2) - 1.0 / (at.r - self.x0).powi(2)))
                .sum::<f64>()
    }

    fn d2(&self, x: f64) -> f64 {
        2.0 * self.a
            + self.atoms_below.iter().map(|at| 2.0 * at.w / (x - at.r).powi(3)).sum::<f64>()
            + self.atoms_above.iter().map(|at| 2.0 * at.w / (at.r - x).powi(3)).sum::<f64>()
    }
}

pub fn eval_oc_rep(rep: &OpConvexRep, x: f64) -> Result<f64> {
    if !rep.interval.contains(x) {
        return Err(Error::Domain {
            x,
            domain: rep.interval.to_string(),
        });
    }
    Ok(rep.value(x))
}

#[derive(Clone, Debug, PartialEq)]
pub enum FnKind {
    Identity,
    Affine { slope: f64, intercept: f64 },
    Square,
    Abs,
    Cube,
    Exp,
    /// `1/(r − x)` on `(−∞, r)`.
    ResolventAbove(f64),
    /// `1/(x − r)` on `(r, ∞)`.
    ResolventBelow(f64),
    /// `ε/(ε + x)` on `[0, ∞)`.
    EpsOver(f64),
    Constant(f64),
    Soc(RepMeasure),
    OpConvex(OpConvexRep),
    /// `1/(λ − g)`.
    Shift { lambda: f64, inner: Box<ScalarFunction> },
    /// `−1/f`.
    NegReciprocal(Box<ScalarFunction>),
}

/// Real function on an interval, with closed-form derivatives where smooth.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFunction {
    kind: FnKind,
    domain: Interval,
}

impl ScalarFunction {
    pub fn kind(&self) -> &FnKind {
        &self.kind
    }

    pub fn domain(&self) -> &Interval {
        &self.domain
    }

    /// Spec string; parses back to this function.
    pub fn label(&self) -> String {
        self.to_string()
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            FnKind::Identity => x,
            FnKind::Affine { slope, intercept } => slope * x + intercept,
            FnKind::Square => x * x,
            FnKind::Abs => x.abs(),
            FnKind::Cube => x * x * x,
            FnKind::Exp => x.exp(),
            FnKind::ResolventAbove(r) => 1.0 / (r - x),
            FnKind::ResolventBelow(r) => 1.0 / (x - r),
            FnKind::EpsOver(e) => e / (e + x),
            FnKind::Constant(c) => *c,
            FnKind::Soc(rep) => rep.value(x),
            FnKind::OpConvex(rep) => rep.value(x),
            FnKind::Shift { lambda, inner } => 1.0 / (lambda - inner.eval(x)),
            FnKind::NegReciprocal(inner) => -1.0 / inner.eval(x),
        }
    }

    pub fn eval_checked(&self, x: f64) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::Domain {
                x,
                domain: self.domain.to_string(),
            });
        }
        Ok(self.eval(x))
    }

    pub fn deriv1(&self, x: f64) -> Option<f64> {
        Some(match &self.kind {
            FnKind::Identity => 1.0,
            FnKind::Affine { slope, .. } => *slope,
            FnKind::Square => 2.0 * x,
            FnKind::Abs => return None,
            FnKind::Cube => 3.0 * x * x,
            FnKind::Exp => x.exp(),
            FnKind::ResolventAbove(r) => 1.0 / (r - x).powi(2),
            FnKind::ResolventBelow(r) => -1.0 / (x - r).powi(2),
            FnKind::EpsOver(e) => -e / (e + x).powi(2),
            FnKind::Constant(_) => 0.0,
            FnKind::Soc(rep) => rep.d1(x),
            FnKind::OpConvex(rep) => rep.d1(x),
            FnKind::Shift { lambda, inner } => inner.deriv1(x)? / (lambda - inner.eval(x)).powi(2),
            FnKind::NegReciprocal(inner) => inner.deriv1(x)? / inner.eval(x).powi(2),
        })
    }

    pub fn deriv2(&self, x: f64) -> Option<f64> {
        Some(match &self.kind {
            FnKind::Identity | FnKind::Affine { .. } | FnKind::Constant(_) => 0.0,
            FnKind::Square => 2.0,
            FnKind::Abs => return None,
            FnKind::Cube => 6.0 * x,
            FnKind::Exp => x.exp(),
            FnKind::ResolventAbove(r) => 2.0 / (r - x).powi(3),
            FnKind::ResolventBelow(r) => 2.0 / (x - r).powi(3),
            FnKind::EpsOver(e) => 2.0 * e / (e + x).powi(3),
            FnKind::Soc(rep) => rep.d2(x),
            FnKind::OpConvex(rep) => rep.d2(x),
            FnKind::Shift { lambda, inner } => {
                let d = lambda - inner.eval(x);
                let g1 = inner.deriv1(x)?;
                inner.deriv2(x)? / (d * d) + 2.0 * g1 * g1 / (d * d * d)
            }
            FnKind::NegReciprocal(inner) => {
                let f = inner.eval(x);
                let f1 = inner.deriv1(x)?;
                inner.deriv2(x)? / (f * f) - 2.0 * f1 * f1 / (f * f * f)
            }
        })
    }

    pub fn has_deriv1(&self) -> bool {
        match &self.kind {
            FnKind::Abs => false,
            FnKind::Shift { inner, .. } | FnKind::NegReciprocal(inner) => inner.has_deriv1(),
            _ => true,
        }
    }

    pub fn has_deriv2(&self) -> bool {
        match &self.kind {
            FnKind::Abs => false,
            FnKind::Shift { inner, .. } | FnKind::NegReciprocal(inner) => inner.has_deriv2(),
            _ => true,
        }
    }

    /// Same function on `domain ∩ j`.
    ///
    /// Shifted reciprocals re-run their `g < λ` validation on the smaller domain.
    pub fn restrict(&self, j: &Interval) -> Result<ScalarFunction> {
        let domain = self.domain.intersect(j)?;
        let kind = match &self.kind {
            FnKind::Shift { lambda, inner } => {
                return soc_from_shifted_opconvex(&inner.restrict(&domain)?, *lambda, &domain);
            }
            FnKind::NegReciprocal(inner) => {
                return Ok(neg_reciprocal(&inner.restrict(&domain)?));
            }
            FnKind::Soc(rep) => FnKind::Soc(RepMeasure::new(
                rep.c,
                rep.atoms_below.clone(),
                rep.atoms_above.clone(),
                domain,
            )?),
            FnKind::OpConvex(rep) => {
                if !domain.contains_interior(rep.x0) {
                    return Err(Error::Config(format!(
                        "restriction to {domain} excludes the expansion point {}",
                        rep.x0
                    )));
                }
                FnKind::OpConvex(OpConvexRep::new(
                    rep.a,
                    rep.b,
                    rep.c,
                    rep.x0,
                    rep.atoms_below.clone(),
                    rep.atoms_above.clone(),
                    domain,
                )?)
            }
            other => other.clone(),
        };
        Ok(ScalarFunction { kind, domain })
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn fmt_atoms(atoms: &[Atom]) -> String {
    atoms
        .iter()
        .map(|a| format!("({},{})", fmt_num(a.r), fmt_num(a.w)))
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FnKind::Identity => write!(f, "identity"),
            FnKind::Affine { slope, intercept } => {
                write!(f, "affine({},{})", fmt_num(*slope), fmt_num(*intercept))
            }
            FnKind::Square => write!(f, "square"),
            FnKind::Abs => write!(f, "abs"),
            FnKind::Cube => write!(f, "cube"),
            FnKind::Exp => write!(f, "exp"),
            FnKind::ResolventAbove(r) => write!(f, "resolvent_above({})", fmt_num(*r)),
            FnKind::ResolventBelow(r) => write!(f, "resolvent_below({})", fmt_num(*r)),
            FnKind::EpsOver(e) => write!(f, "eps_over({})", fmt_num(*e)),
            FnKind::Constant(c) => write!(f, "constant({})", fmt_num(*c)),
            FnKind::Soc(rep) => write!(
                f,
                "rep{{c={};below=[{}];above=[{}]}}",
                fmt_num(rep.c),
                fmt_atoms(&rep.atoms_below),
                fmt_atoms(&rep.atoms_above)
            ),
            FnKind::OpConvex(rep) => write!(
                f,
                "ocrep{{a={};b={};c={};x0={};below=[{}];above=[{}]}}",
                fmt_num(rep.a),
                fmt_num(rep.b),
                fmt_num(rep.c),
                fmt_num(rep.x0),
                fmt_atoms(&rep.atoms_below),
                fmt_atoms(&rep.atoms_above)
            ),
            FnKind::Shift { lambda, inner } => write!(f, "shift({},{})", fmt_num(*lambda), inner),
            FnKind::NegReciprocal(inner) => write!(f, "negrecip({inner})"),
        }
    }
}

fn catalog_fn(kind: FnKind, domain: Interval) -> ScalarFunction {
    ScalarFunction { kind, domain }
}

pub fn catalog(name: &str, params: &[f64]) -> Result<ScalarFunction> {
    let arity = |n: usize| -> Result<()> {
        if params.len() == n {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{name} takes {n} parameter(s), got {}",
                params.len()
            )))
        }
    };
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Config(format!("{name}: parameters must be finite")));
    }
    let line = Interval::real_line();
    let f = match name {
        "identity" => {
            arity(0)?;
            catalog_fn(FnKind::Identity, line)
        }
        "affine" => {
            arity(2)?;
            catalog_fn(
                FnKind::Affine {
                    slope: params[0],
                    intercept: params[1],
                },
                line,
            )
        }
        "square" => {
            arity(0)?;
            catalog_fn(FnKind::Square, line)
        }
        "abs" => {
            arity(0)?;
            catalog_fn(FnKind::Abs, line)
        }
        "cube" => {
            arity(0)?;
            catalog_fn(FnKind::Cube, line)
        }
        "exp" => {
            arity(0)?;
            catalog_fn(FnKind::Exp, line)
        }
        "resolvent_above" => {
            arity(1)?;
            let r = params[0];
            catalog_fn(FnKind::ResolventAbove(r), Interval::open(f64::NEG_INFINITY, r)?)
        }
        "resolvent_below" => {
            arity(1)?;
            let r = params[0];
            catalog_fn(FnKind::ResolventBelow(r), Interval::open(r, f64::INFINITY)?)
        }
        "eps_over" => {
            arity(1)?;
            let e = params[0];
            if !(e > 0.0) {
                return Err(Error::Config(format!("eps_over needs ε > 0, got {e}")));
            }
            catalog_fn(FnKind::EpsOver(e), Interval::new(0.0, f64::INFINITY, true, false)?)
        }
        "constant" => {
            arity(1)?;
            catalog_fn(FnKind::Constant(params[0]), line)
        }
        _ => return Err(Error::Config(format!("unknown function '{name}'"))),
    };
    Ok(f)
}

/// `f = 1/(λ − g)` on `j ∩ domain(g)`.
///
/// `g < λ` is checked on a uniform grid of [`SHIFT_GRID`] points when the
/// interval is bounded. Unbounded intervals are accepted unchecked; restricting
/// the result to a bounded interval runs the check.
pub fn soc_from_shifted_opconvex(g: &ScalarFunction, lambda: f64, j: &Interval) -> Result<ScalarFunction> {
    if !lambda.is_finite() {
        return Err(Error::Config(format!("shift level must be finite, got {lambda}")));
    }
    let domain = g.domain.intersect(j)?;
    if domain.is_bounded() {
        for x in domain.grid(SHIFT_GRID)? {
            let gx = g.eval(x);
            if !(gx < lambda) {
                return Err(Error::Construction {
                    witness: x,
                    reason: format!("g(x) = {gx} is not below λ = {lambda}"),
                });
            }
        }
    }
    let inner = if domain == g.domain {
        g.clone()
    } else {
        g.restrict(&domain)?
    };
    Ok(ScalarFunction {
        kind: FnKind::Shift {
            lambda,
            inner: Box::new(inner),
        },
        domain,
    })
}

/// `−1/f` on the domain of `f`.
pub fn neg_reciprocal(f: &ScalarFunction) -> ScalarFunction {
    ScalarFunction {
        kind: FnKind::NegReciprocal(Box::new(f.clone())),
        domain: f.domain,
    }
}

/// Wraps a representation as an evaluable function.
pub trait Representation {
    fn as_scalar_function(&self) -> ScalarFunction;
}

impl Representation for RepMeasure {
    fn as_scalar_function(&self) -> ScalarFunction {
        ScalarFunction {
            kind: FnKind::Soc(self.clone()),
            domain: self.interval,
        }
    }
}

impl Representation for OpConvexRep {
    fn as_scalar_function(&self) -> ScalarFunction {
        ScalarFunction {
            kind: FnKind::OpConvex(self.clone()),
            domain: self.interval,
        }
    }
}

pub fn rep_as_scalar_function(rep: &impl Representation) -> ScalarFunction {
    rep.as_scalar_function()
}
