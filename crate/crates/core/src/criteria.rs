//! Inequality checkers and the tiered classifier.
//!
//! Each check evaluates one operator inequality `lhs ⪯ rhs` on concrete
//! operands and reports the smallest eigenvalue of `rhs − lhs`. Structural
//! preconditions (a projection that is not idempotent, a spectrum outside the
//! domain, a singular block) are errors, never failed inequalities.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::{frechet_first, frechet_second};
use crate::funcrep::{neg_reciprocal, ScalarFunction};
use crate::hermitian::{
    apply_fn, block2, c64, complete_isometry, eigh, is_psd_geq, matrix_serde, max_abs, op_norm,
    random_isometry, sample_contraction, sample_hermitian, sample_projection, sample_soft,
    spd_inverse, sqrt_psd, stream_rng, CMatrix, Ensemble, HermitianMatrix, Interval, PsdVerdict,
};

/// Absolute slack allowed on structural checks (idempotence, isometry, norms).
const STRUCTURE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    Midpoint,
    OcDef,
    Davis,
    Hp,
    HpMulti,
    SocIi,
    SocIii,
    SocIiiX0,
    Block8,
    Ineq10,
    Ineq2pp,
    Ineq2ppp,
    Ineq11,
    Ineq12,
    Jensen13,
    Jensen14,
    Jensen15,
    Diff15,
    NegRecip,
}

impl CheckId {
    pub const ALL: [CheckId; 19] = [
        CheckId::Midpoint,
        CheckId::OcDef,
        CheckId::Davis,
        CheckId::Hp,
        CheckId::HpMulti,
        CheckId::SocIi,
        CheckId::SocIii,
        CheckId::SocIiiX0,
        CheckId::Block8,
        CheckId::Ineq10,
        CheckId::Ineq2pp,
        CheckId::Ineq2ppp,
        CheckId::Ineq11,
        CheckId::Ineq12,
        CheckId::Jensen13,
        CheckId::Jensen14,
        CheckId::Jensen15,
        CheckId::Diff15,
        CheckId::NegRecip,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckId::Midpoint => "midpoint",
            CheckId::OcDef => "oc_def",
            CheckId::Davis => "davis",
            CheckId::Hp => "hp",
            CheckId::HpMulti => "hp_multi",
            CheckId::SocIi => "soc_ii",
            CheckId::SocIii => "soc_iii",
            CheckId::SocIiiX0 => "soc_iii_x0",
            CheckId::Block8 => "block8",
            CheckId::Ineq10 => "ineq10",
            CheckId::Ineq2pp => "ineq2pp",
            CheckId::Ineq2ppp => "ineq2ppp",
            CheckId::Ineq11 => "ineq11",
            CheckId::Ineq12 => "ineq12",
            CheckId::Jensen13 => "jensen13",
            CheckId::Jensen14 => "jensen14",
            CheckId::Jensen15 => "jensen15",
            CheckId::Diff15 => "diff15",
            CheckId::NegRecip => "neg_recip",
        }
    }

    pub fn tier(&self) -> Tier {
        match self {
            CheckId::Midpoint => Tier::Convex,
            CheckId::OcDef | CheckId::Davis | CheckId::Hp | CheckId::HpMulti => Tier::OperatorConvex,
            _ => Tier::StronglyOperatorConvex,
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckId::ALL
            .iter()
            .find(|c| c.as_str() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown check '{s}'")))
    }
}

/// Finitely supported probability measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mu = DiscreteMeasure { points, weights };
        mu.validate()?;
        Ok(mu)
    }

    pub fn uniform(points: Vec<f64>) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        let n = points.len();
        Self::new(points, vec![w; n])
    }

    fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.points.len() != self.weights.len() {
            return Err(Error::Precondition("measure needs matching, non-empty points and weights".into()));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Precondition("measure weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!("measure weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }
}

/// Operands of one check, tagged by check id. This is also the operand-file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Operands {
    Midpoint {
        x: f64,
        y: f64,
    },
    OcDef {
        t1: HermitianMatrix,
        t2: HermitianMatrix,
        lambda: f64,
    },
    Davis {
        h: HermitianMatrix,
        p: HermitianMatrix,
    },
    Hp {
        h: HermitianMatrix,
        #[serde(with = "matrix_serde")]
        a: CMatrix,
    },
    HpMulti {
        ts: Vec<HermitianMatrix>,
        #[serde(with = "matrix_serde::vec")]
        a: Vec<CMatrix>,
    },
    SocIi {
        t: HermitianMatrix,
        p: HermitianMatrix,
    },
    SocIii {
        t: HermitianMatrix,
        p: HermitianMatrix,
    },
    SocIiiX0 {
        t: HermitianMatrix,
        p: HermitianMatrix,
        x0: f64,
    },
    Block8 {
        ts: Vec<HermitianMatrix>,
        #[serde(with = "matrix_serde::vec")]
        a: Vec<CMatrix>,
    },
    Ineq10 {
        ts: Vec<HermitianMatrix>,
        #[serde(with = "matrix_serde::vec")]
        a: Vec<CMatrix>,
    },
    Ineq2pp {
        t: HermitianMatrix,
        #[serde(with = "matrix_serde")]
        a: CMatrix,
    },
    Ineq2ppp {
        t: HermitianMatrix,
        #[serde(with = "matrix_serde")]
        a: CMatrix,
    },
    Ineq11 {
        t1: HermitianMatrix,
        t2: HermitianMatrix,
        lambda: f64,
    },
    Ineq12 {
        ts: Vec<HermitianMatrix>,
        #[serde(with = "matrix_serde::vec")]
        a: Vec<CMatrix>,
        /// Components `uᵢ` of the unit vector spanning the complement; derived when empty.
        #[serde(default, with = "matrix_serde::vec", skip_serializing_if = "Vec::is_empty")]
        u: Vec<CMatrix>,
    },
    Jensen13 {
        mu: DiscreteMeasure,
    },
    Jensen14 {
        mu: DiscreteMeasure,
    },
    Jensen15 {
        mu: DiscreteMeasure,
        s: f64,
    },
    Diff15 {
        t: HermitianMatrix,
        h: HermitianMatrix,
    },
    NegRecip {
        samples: Vec<Operands>,
    },
}

impl Operands {
    pub fn id(&self) -> CheckId {
        match self {
            Operands::Midpoint { .. } => CheckId::Midpoint,
            Operands::OcDef { .. } => CheckId::OcDef,
            Operands::Davis { .. } => CheckId::Davis,
            Operands::Hp { .. } => CheckId::Hp,
            Operands::HpMulti { .. } => CheckId::HpMulti,
            Operands::SocIi { .. } => CheckId::SocIi,
            Operands::SocIii { .. } => CheckId::SocIii,
            Operands::SocIiiX0 { .. } => CheckId::SocIiiX0,
            Operands::Block8 { .. } => CheckId::Block8,
            Operands::Ineq10 { .. } => CheckId::Ineq10,
            Operands::Ineq2pp { .. } => CheckId::Ineq2pp,
            Operands::Ineq2ppp { .. } => CheckId::Ineq2ppp,
            Operands::Ineq11 { .. } => CheckId::Ineq11,
            Operands::Ineq12 { .. } => CheckId::Ineq12,
            Operands::Jensen13 { .. } => CheckId::Jensen13,
            Operands::Jensen14 { .. } => CheckId::Jensen14,
            Operands::Jensen15 { .. } => CheckId::Jensen15,
            Operands::Diff15 { .. } => CheckId::Diff15,
            Operands::NegRecip { .. } => CheckId::NegRecip,
        }
    }
}

/// How `(iii)ₓ₀` places `x0` inside `f`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Variant {
    /// `f(ptp + x0(1 − p²)) ⪯ f(t) + f(x0)(1 − p)`.
    #[default]
    AsPrinted,
    /// `f(ptp + x0(1 − p)) ⪯ f(t) + f(x0)(1 − p)`.
    PLinear,
}

impl FromStr for X0Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_printed" => Ok(X0Variant::AsPrinted),
            "p_linear" => Ok(X0Variant::PLinear),
            _ => Err(Error::Config(format!("unknown x0 variant '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub tol: f64,
    pub x0_variant: X0Variant,
    /// Evaluate the Jensen-type bound with argument `s²` instead of `s² ∫x dμ`.
    pub j15_literal: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            tol: crate::hermitian::DEFAULT_TOL,
            x0_variant: X0Variant::AsPrinted,
            j15_literal: false,
        }
    }
}

/// Verdict of one inequality instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub kind: CheckId,
    pub pass: bool,
    /// Smallest eigenvalue of `rhs − lhs`.
    pub margin: f64,
    pub scale: f64,
    pub tolerance: f64,
    pub witnesses: Operands,
    pub notes: String,
    /// Verdict of the equivalent Schur-complement form, where one is computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schur_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schur_pass: Option<bool>,
}

impl CheckOutcome {
    fn from_verdict(operands: &Operands, v: PsdVerdict, notes: impl Into<String>) -> Self {
        let notes = notes.into();
        let scale_note = format!("scale={}", v.scale);
        CheckOutcome {
            kind: operands.id(),
            pass: v.pass,
            margin: v.min_eigenvalue,
            scale: v.scale,
            tolerance: v.tolerance,
            witnesses: operands.clone(),
            notes: if notes.is_empty() {
                scale_note
            } else {
                format!("{scale_note}; {notes}")
            },
            schur_margin: None,
            schur_pass: None,
        }
    }

    fn with_schur(mut self, v: Option<PsdVerdict>) -> Self {
        if let Some(v) = v {
            self.schur_margin = Some(v.min_eigenvalue);
            self.schur_pass = Some(v.pass);
        }
        self
    }

    /// `margin / scale`, the quantity compared against `−tolerance`.
    pub fn normalized_margin(&self) -> f64 {
        self.margin / self.scale
    }
}

fn f_of(f: &ScalarFunction, m: &HermitianMatrix) -> Result<HermitianMatrix> {
    apply_fn(f, m)
}

fn f_at(f: &ScalarFunction, x: f64) -> Result<f64> {
    f.eval_checked(x).map_err(|_| Error::SpectrumDomain {
        eigenvalue: x,
        domain: f.domain().to_string(),
    })
}

fn same_dims(ms: &[&HermitianMatrix]) -> Result<usize> {
    let n = ms[0].dim();
    if ms.iter().any(|m| m.dim() != n) {
        return Err(Error::Input("operands have different dimensions".into()));
    }
    Ok(n)
}

fn identity(n: usize) -> HermitianMatrix {
    HermitianMatrix::identity(n)
}

/// Orthonormal basis of the range of a projection.
fn projection_range(p: &HermitianMatrix) -> Result<CMatrix> {
    let pm = p.as_matrix();
    let defect = max_abs(&(pm * pm - pm));
    if defect > STRUCTURE_TOL * (1.0 + p.max_abs()) {
        return Err(Error::Precondition(format!("p is not a projection (‖p² − p‖ = {defect:e})")));
    }
    let sd = eigh(p)?;
    let cols: Vec<usize> = (0..p.dim()).filter(|&j| sd.eigenvalues[j] > 0.5).collect();
    Ok(CMatrix::from_fn(p.dim(), cols.len(), |i, j| sd.basis[(i, cols[j])]))
}

/// `p f(ptp) p`, computed on the range of `p` so that only the spectrum of the
/// compression enters `f`.
fn compressed(f: &ScalarFunction, t: &HermitianMatrix, q: &CMatrix) -> Result<HermitianMatrix> {
    let n = t.dim();
    if q.ncols() == 0 {
        return Ok(HermitianMatrix::zeros(n));
    }
    let inner = t.congruence(q);
    let fi = f_of(f, &inner)?;
    Ok(fi.congruence(&q.adjoint()))
}

fn check_unit_interval(p: &HermitianMatrix, what: &str) -> Result<()> {
    let sd = eigh(p)?;
    if sd.min() < -STRUCTURE_TOL || sd.max() > 1.0 + STRUCTURE_TOL {
        return Err(Error::Precondition(format!(
            "{what} must satisfy 0 ≤ p ≤ 1 (spectrum [{}, {}])",
            sd.min(),
            sd.max()
        )));
    }
    Ok(())
}

fn check_contraction(a: &CMatrix) -> Result<()> {
    let norm = op_norm(a);
    if norm > 1.0 + STRUCTURE_TOL {
        return Err(Error::Precondition(format!("‖a‖ = {norm} exceeds 1")));
    }
    Ok(())
}

fn check_zero_in_domain(f: &ScalarFunction) -> Result<()> {
    if !f.domain().contains(0.0) {
        return Err(Error::Precondition(format!("0 is not in the domain {}", f.domain())));
    }
    Ok(())
}

fn check_lambda(lambda: f64, open: bool) -> Result<()> {
    let ok = if open {
        lambda > 0.0 && lambda < 1.0
    } else {
        (0.0..=1.0).contains(&lambda)
    };
    if !ok {
        return Err(Error::Precondition(format!("λ = {lambda} out of range")));
    }
    Ok(())
}

/// Returns `(Σ aᵢ* tᵢ aᵢ, Σ aᵢ* f(tᵢ) aᵢ, [f(tᵢ)])` after validating the isometry.
fn multi_parts(
    f: &ScalarFunction,
    ts: &[HermitianMatrix],
    a: &[CMatrix],
) -> Result<(HermitianMatrix, HermitianMatrix, Vec<HermitianMatrix>)> {
    if ts.is_empty() || ts.len() != a.len() {
        return Err(Error::Input("need as many operators tᵢ as coefficients aᵢ".into()));
    }
    let m = ts[0].dim();
    if ts.iter().any(|t| t.dim() != m) || a.iter().any(|ai| ai.shape() != (m, m)) {
        return Err(Error::Input(format!("every tᵢ and aᵢ must be {m}x{m}")));
    }
    let gram: CMatrix = a.iter().map(|ai| ai.adjoint() * ai).sum();
    let defect = max_abs(&(gram - CMatrix::identity(m, m)));
    if defect > STRUCTURE_TOL {
        return Err(Error::Precondition(format!("Σ aᵢ*aᵢ ≠ 1 (defect {defect:e})")));
    }
    let fts = ts.iter().map(|t| f_of(f, t)).collect::<Result<Vec<_>>>()?;
    let mix = HermitianMatrix::symmetrized(ts.iter().zip(a).map(|(t, ai)| ai.adjoint() * t.as_matrix() * ai).sum());
    let avg = HermitianMatrix::symmetrized(fts.iter().zip(a).map(|(ft, ai)| ai.adjoint() * ft.as_matrix() * ai).sum());
    Ok((mix, avg, fts))
}

fn verdict(rhs: &HermitianMatrix, lhs: &HermitianMatrix, tol: f64) -> Result<PsdVerdict> {
    is_psd_geq(rhs, lhs, tol)
}

/// Runs one check. Errors signal violated preconditions, not failed inequalities.
pub fn run_check(f: &ScalarFunction, operands: &Operands, opts: &CheckOptions) -> Result<CheckOutcome> {
    let tol = opts.tol;
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let out = |v: PsdVerdict, notes: &str| CheckOutcome::from_verdict(operands, v, notes);
    match operands {
        Operands::Midpoint { x, y } => {
            let (fx, fy) = (f_at(f, *x)?, f_at(f, *y)?);
            let lhs = f_at(f, 0.5 * (x + y))?;
            let rhs = 0.5 * (fx + fy);
            Ok(out(scalar_verdict(rhs, lhs, tol), ""))
        }
        Operands::OcDef { t1, t2, lambda } => {
            same_dims(&[t1, t2])?;
            check_lambda(*lambda, false)?;
            let mix = t1.scale(*lambda).add(&t2.scale(1.0 - lambda));
            let lhs = f_of(f, &mix)?;
            let rhs = f_of(f, t1)?.scale(*lambda).add(&f_of(f, t2)?.scale(1.0 - lambda));
            Ok(out(verdict(&rhs, &lhs, tol)?, ""))
        }
        Operands::Davis { h, p } => {
            same_dims(&[h, p])?;
            let q = projection_range(p)?;
            let lhs = compressed(f, h, &q)?;
            let rhs = f_of(f, h)?.congruence(&(&q * q.adjoint()));
            Ok(out(verdict(&rhs, &lhs, tol)?, ""))
        }
        Operands::Hp { h, a } => {
            let n = h.dim();
            if a.shape() != (n, n) {
                return Err(Error::Input(format!("a must be {n}x{n}")));
            }
            check_contraction(a)?;
            check_zero_in_domain(f)?;
            let f0 = f_at(f, 0.0)?;
            if f0 > 0.0 {
                return Err(Error::Precondition(format!("f(0) = {f0} > 0")));
            }
            let lhs = f_of(f, &h.congruence(a))?;
            let rhs = f_of(f, h)?.congruence(a);
            Ok(out(verdict(&rhs, &lhs, tol)?, ""))
        }
        Operands::HpMulti { ts, a } => {
            let (mix, avg, _) = multi_parts(f, ts, a)?;
            let lhs = f_of(f, &mix)?;
            Ok(out(verdict(&avg, &lhs, tol)?, ""))
        }
        Operands::SocIi { t, p } => {
            same_dims(&[t, p])?;
            let q = projection_range(p)?;
            let lhs = compressed(f, t, &q)?;
            let rhs = f_of(f, t)?;
            Ok(out(verdict(&rhs, &lhs, tol)?, ""))
        }
        Operands::SocIii { t, p } => {
            let n = same_dims(&[t, p])?;
            check_unit_interval(p, "p")?;
            check_zero_in_domain(f)?;
            let f0 = f_at(f, 0.0)?;
            let lhs = f_of(f, &t.congruence(p.as_matrix()))?;
            let rhs = f_of(f, t)?.add(&identity(n).sub(p).scale(f0));
            Ok(out(verdict(&rhs, &lhs, tol)?, ""))
        }
        Operands::SocIiiX0 { t, p, x0 } => {
            let n = same_dims(&[t, p])?;
            check_unit_interval(p, "p")?;
            let fx0 = f_at(f, *x0)?;
            let id = identity(n);
            let complement = match opts.x0_variant {
                X0Variant::AsPrinted => id.sub(&HermitianMatrix::symmetrized(p.as_matrix() * p.as_matrix())),
                X0Variant::PLinear => id.sub(p),
            };
            let arg = t.congruence(p.as_matrix()).add(&complement.scale(*x0));
            let lhs = f_of(f, &arg)?;
            let rhs = f_of(f, t)?.add(&id.sub(p).scale(fx0));
            let note = match opts.x0_variant {
                X0Variant::AsPrinted => "x0_variant=as_printed",
                X0Variant::PLinear => "x0_variant=p_linear",
            };
            Ok(out(verdict(&rhs, &lhs, tol)?, note))
        }
        Operands::Block8 { ts, a } => {
            let (mix, avg, fts) = multi_parts(f, ts, a)?;
            let bs = complete_isometry(a)?;
            let (cross, comp) = complement_blocks(&fts, a, &bs);
            let m = mix.dim();
            let k = comp.nrows();
            let lhs_top = f_of(f, &mix)?;
            let zero_mk = CMatrix::zeros(m, k);
            let lhs = HermitianMatrix::symmetrized(block2(
                lhs_top.as_matrix(),
                &zero_mk,
                &zero_mk.adjoint(),
                &CMatrix::zeros(k, k),
            ));
            let rhs = HermitianMatrix::symmetrized(block2(avg.as_matrix(), &cross, &cross.adjoint(), &comp));
            let v = verdict(&rhs, &lhs, tol)?;
            let schur = schur_slack(&lhs_top, &avg, &cross, &comp, tol).ok();
            Ok(out(v, "").with_schur(schur))
        }
        Operands::Ineq10 { ts, a } => {
            let (mix, avg, fts) = multi_parts(f, ts, a)?;
            let bs = complete_isometry(a)?;
            let (cross, comp) = complement_blocks(&fts, a, &bs);
            let lhs = f_of(f, &mix)?;
            let v = schur_slack(&lhs, &avg, &cross, &comp, tol)?;
            Ok(out(v, ""))
        }
        Operands::Ineq2pp { t, a } | Operands::Ineq2ppp { t, a } => {
            let n = t.dim();
            if a.shape() != (n, n) {
                return Err(Error::Input(format!("a must be {n}x{n}")));
            }
            check_contraction(a)?;
            check_zero_in_domain(f)?;
            let f0 = f_at(f, 0.0)?;
            let id = CMatrix::identity(n, n);
            let s = sqrt_psd(&HermitianMatrix::symmetrized(&id - a * a.adjoint()))?;
            let ft = f_of(f, t)?;
            let lhs_full = f_of(f, &t.congruence(a))?;
            let g = ft.sub(&identity(n).scale(f0));
            // Both forms share the inverted block (1−aa*)^{1/2} f(t) (1−aa*)^{1/2} + f(0) aa*.
            let inner = match operands {
                Operands::Ineq2pp { .. } => ft
                    .congruence(s.as_matrix())
                    .add(&HermitianMatrix::symmetrized(a * a.adjoint() * c64(f0))),
                _ => identity(n).scale(f0).add(&g.congruence(s.as_matrix())),
            };
            let inv = spd_inverse(&inner, tol)?;
            let x = a.adjoint() * g.as_matrix() * s.as_matrix();
            let correction = HermitianMatrix::symmetrized(&x * inv * x.adjoint());
            let (lhs, rhs) = match operands {
                Operands::Ineq2pp { .. } => {
                    let rhs = ft
                        .congruence(a)
                        .add(&HermitianMatrix::symmetrized((&id - a.adjoint() * a) * c64(f0)))
                        .sub(&correction);
                    (lhs_full, rhs)
                }
                _ => {
                    let rhs = g.congruence(a).sub(&correction);
                    (lhs_full.sub(&identity(n).scale(f0)), rhs)
                }
            };
            Ok(out(verdict(&rhs, &lhs, tol)?, ""))
        }
        Operands::Ineq11 { t1, t2, lambda } => {
            same_dims(&[t1, t2])?;
            check_lambda(*lambda, true)?;
            let l = *lambda;
            let (f1, f2) = (f_of(f, t1)?, f_of(f, t2)?);
            let d = f1.sub(&f2);
            let weighted = f1.scale(1.0 - l).add(&f2.scale(l));
            let inv = spd_inverse(&weighted, tol)?;
            let correction = HermitianMatrix::symmetrized(d.as_matrix() * inv * d.as_matrix()).scale(l * (1.0 - l));
            let rhs = f1.scale(l).add(&f2.scale(1.0 - l)).sub(&correction);
            let lhs = f_of(f, &t1.scale(l).add(&t2.scale(1.0 - l)))?;
            Ok(out(verdict(&rhs, &lhs, tol)?, ""))
        }
        Operands::Ineq12 { ts, a, u } => {
            let (mix, avg, fts) = multi_parts(f, ts, a)?;
            let m = mix.dim();
            let derived;
            let u: &[CMatrix] = if u.is_empty() {
                let bs = complete_isometry(a)?;
                if bs[0].ncols() != 1 {
                    return Err(Error::Structure(format!(
                        "orthogonal complement has dimension {}, not 1",
                        bs[0].ncols()
                    )));
                }
                derived = bs;
                &derived
            } else {
                check_unit_complement(a, u)?;
                u
            };
            let b: CMatrix = fts.iter().zip(a).zip(u).map(|((ft, ai), ui)| ai.adjoint() * ft.as_matrix() * ui).sum();
            let c: f64 = fts
                .iter()
                .zip(u)
                .map(|(ft, ui)| (ui.adjoint() * ft.as_matrix() * ui)[(0, 0)].re)
                .sum();
            let scale_c = 1.0 + fts.iter().map(|ft| ft.norm()).fold(0.0, f64::max);
            if c <= tol * scale_c {
                return Err(Error::Singularity(format!("Σ (f(tᵢ)uᵢ, uᵢ) = {c} is not positive")));
            }
            debug_assert_eq!(b.shape(), (m, 1));
            let rhs = avg.sub(&HermitianMatrix::symmetrized(&b * b.adjoint() * c64(1.0 / c)));
            let lhs = f_of(f, &mix)?;
            Ok(out(verdict(&rhs, &lhs, tol)?, ""))
        }
        Operands::Jensen13 { mu } => {
            mu.validate()?;
            let vals = mu.points.iter().map(|&x| f_at(f, x)).collect::<Result<Vec<_>>>()?;
            let rhs: f64 = vals.iter().zip(&mu.weights).map(|(v, w)| v * w).sum();
            let lhs = f_at(f, mu.mean())?;
            Ok(out(scalar_verdict(rhs, lhs, tol), ""))
        }
        Operands::Jensen14 { mu } => {
            mu.validate()?;
            if let Some(v) = positivity_violation(f, mu, tol)? {
                return Ok(out(v, POSITIVITY_NOTE));
            }
            let rhs = harmonic_bound(f, mu)?;
            let lhs = f_at(f, mu.mean())?;
            Ok(out(scalar_verdict(rhs, lhs, tol), ""))
        }
        Operands::Jensen15 { mu, s } => {
            mu.validate()?;
            if !(0.0..=1.0).contains(s) {
                return Err(Error::Precondition(format!("s = {s} is outside [0, 1]")));
            }
            check_zero_in_domain(f)?;
            let f0 = f_at(f, 0.0)?;
            if let Some(v) = positivity_violation(f, mu, tol)? {
                return Ok(out(v, POSITIVITY_NOTE));
            }
            let rhs = harmonic_bound(f, mu)? + f0 * (1.0 - s);
            let (arg, note) = if opts.j15_literal {
                (s * s, "j15_literal=true")
            } else {
                (s * s * mu.mean(), "j15_literal=false")
            };
            let lhs = f_at(f, arg)?;
            Ok(out(scalar_verdict(rhs, lhs, tol), note))
        }
        Operands::Diff15 { t, h } => check_differential(f, t, h, operands, tol),
        Operands::NegRecip { samples } => check_neg_recip(f, samples, operands, opts),
    }
}

fn scalar_verdict(rhs: f64, lhs: f64, tol: f64) -> PsdVerdict {
    PsdVerdict::from_margin(rhs - lhs, 1.0 + rhs.abs().max(lhs.abs()), tol)
}

const POSITIVITY_NOTE: &str = "singularity: f ≤ 0 at a support point of the measure";

/// Failing verdict carrying `min f(xⱼ)` as margin when `f` is not positive on the support.
fn positivity_violation(f: &ScalarFunction, mu: &DiscreteMeasure, tol: f64) -> Result<Option<PsdVerdict>> {
    let mut worst = f64::INFINITY;
    for &x in &mu.points {
        worst = worst.min(f_at(f, x)?);
    }
    Ok((!(worst > 0.0)).then(|| PsdVerdict {
        min_eigenvalue: worst,
        scale: 1.0 + worst.abs(),
        tolerance: tol,
        pass: false,
    }))
}

fn harmonic_bound(f: &ScalarFunction, mu: &DiscreteMeasure) -> Result<f64> {
    let mut acc = 0.0;
    for (&x, &w) in mu.points.iter().zip(&mu.weights) {
        let fx = f_at(f, x)?;
        if !(fx > 0.0) {
            return Err(Error::Singularity(format!("f({x}) = {fx} is not positive")));
        }
        acc += w / fx;
    }
    Ok(1.0 / acc)
}

/// `(Σ aᵢ* f(tᵢ) bᵢ, Σ bᵢ* f(tᵢ) bᵢ)`.
fn complement_blocks(fts: &[HermitianMatrix], a: &[CMatrix], bs: &[CMatrix]) -> (CMatrix, CMatrix) {
    let m = a[0].nrows();
    let k = bs[0].ncols();
    let mut cross = CMatrix::zeros(m, k);
    let mut comp = CMatrix::zeros(k, k);
    for ((ft, ai), bi) in fts.iter().zip(a).zip(bs) {
        let fb = ft.as_matrix() * bi;
        cross += ai.adjoint() * &fb;
        comp += bi.adjoint() * fb;
    }
    (cross, comp)
}

/// Verdict on `lhs ⪯ avg − cross · comp⁻¹ · cross*`.
fn schur_slack(
    lhs: &HermitianMatrix,
    avg: &HermitianMatrix,
    cross: &CMatrix,
    comp: &CMatrix,
    tol: f64,
) -> Result<PsdVerdict> {
    let rhs = if comp.nrows() == 0 {
        avg.clone()
    } else {
        let comp = HermitianMatrix::new(comp.clone())?;
        let inv = spd_inverse(&comp, tol)?;
        avg.sub(&HermitianMatrix::symmetrized(cross * inv * cross.adjoint()))
    };
    verdict(&rhs, lhs, tol)
}

fn check_unit_complement(a: &[CMatrix], u: &[CMatrix]) -> Result<()> {
    if u.len() != a.len() || u.iter().any(|ui| ui.shape() != (a[0].nrows(), 1)) {
        return Err(Error::Structure("u must have one column block per aᵢ".into()));
    }
    let m = a[0].nrows();
    if (a.len() - 1) * m != 1 {
        return Err(Error::Structure(format!(
            "orthogonal complement has dimension {}, not 1",
            (a.len() - 1) * m
        )));
    }
    let norm2: f64 = u.iter().map(|ui| ui.norm_squared()).sum();
    let overlap: CMatrix = a.iter().zip(u).map(|(ai, ui)| ai.adjoint() * ui).sum();
    if (norm2 - 1.0).abs() > STRUCTURE_TOL || max_abs(&overlap) > STRUCTURE_TOL {
        return Err(Error::Structure("u is not a unit vector orthogonal to the range of v".into()));
    }
    Ok(())
}

/// 2n×2n block `[[F″(t)(h,h)/2, F′(t)·h], [F′(t)·h, F(t)]] ⪰ 0`, together with
/// its Schur form `F″(t)(h,h) ⪰ 2 (F′(t)·h) F(t)⁻¹ (F′(t)·h)` when `F(t)` is invertible.
fn check_differential(
    f: &ScalarFunction,
    t: &HermitianMatrix,
    h: &HermitianMatrix,
    operands: &Operands,
    tol: f64,
) -> Result<CheckOutcome> {
    same_dims(&[t, h])?;
    if !f.has_deriv1() || !f.has_deriv2() {
        return Err(Error::DerivativeRequired(format!("the differential criterion for {f}")));
    }
    let sd = eigh(t)?;
    if let Some(&x) = sd.eigenvalues.iter().find(|&&x| !f.domain().contains_interior(x)) {
        return Err(Error::SpectrumDomain {
            eigenvalue: x,
            domain: format!("interior of {}", f.domain()),
        });
    }
    let ft = f_of(f, t)?;
    let d1 = frechet_first(f, t, h)?;
    let d2 = frechet_second(f, t, h)?;
    let block = HermitianMatrix::symmetrized(block2(
        d2.scale(0.5).as_matrix(),
        d1.as_matrix(),
        d1.as_matrix(),
        ft.as_matrix(),
    ));
    let v = PsdVerdict::of_slack(&block, 1.0 + block.norm(), tol)?;
    let schur = spd_inverse(&ft, tol).ok().map(|inv| {
        let rhs = HermitianMatrix::symmetrized(d1.as_matrix() * inv * d1.as_matrix()).scale(2.0);
        is_psd_geq(&d2, &rhs, tol)
    });
    let schur = schur.transpose()?;
    Ok(CheckOutcome::from_verdict(operands, v, "").with_schur(schur))
}

/// Runs the operator-convexity definition and Davis checks on `−1/f`, after
/// confirming `f > 0` on every spectrum that enters.
fn check_neg_recip(
    f: &ScalarFunction,
    samples: &[Operands],
    operands: &Operands,
    opts: &CheckOptions,
) -> Result<CheckOutcome> {
    if samples.is_empty() {
        return Err(Error::Input("neg_recip needs at least one sample".into()));
    }
    for s in samples {
        let mats: Vec<HermitianMatrix> = match s {
            Operands::OcDef { t1, t2, lambda } => {
                same_dims(&[t1, t2])?;
                vec![t1.clone(), t2.clone(), t1.scale(*lambda).add(&t2.scale(1.0 - lambda))]
            }
            Operands::Davis { h, p } => {
                same_dims(&[h, p])?;
                let q = projection_range(p)?;
                let mut v = vec![h.clone()];
                if q.ncols() > 0 {
                    v.push(h.congruence(&q));
                }
                v
            }
            other => {
                return Err(Error::Input(format!(
                    "neg_recip samples must be oc_def or davis, got {}",
                    other.id()
                )))
            }
        };
        let mut worst = f64::INFINITY;
        for m in &mats {
            for x in eigh(m)?.eigenvalues {
                worst = worst.min(f_at(f, x)?);
            }
        }
        if !(worst > 0.0) {
            let v = PsdVerdict {
                min_eigenvalue: worst,
                scale: 1.0 + worst.abs(),
                tolerance: opts.tol,
                pass: false,
            };
            let mut o = CheckOutcome::from_verdict(
                &Operands::NegRecip {
                    samples: vec![s.clone()],
                },
                v,
                "positivity violation: f ≤ 0 on a sampled spectrum",
            );
            o.kind = operands.id();
            return Ok(o);
        }
    }
    let g = neg_reciprocal(f);
    let mut worst: Option<(CheckOutcome, &Operands)> = None;
    for s in samples {
        let o = run_check(&g, s, opts)?;
        let replace = match &worst {
            None => true,
            Some((w, _)) => o.normalized_margin() < w.normalized_margin(),
        };
        if replace {
            worst = Some((o, s));
        }
    }
    let (o, s) = worst.expect("samples is non-empty");
    let v = PsdVerdict {
        min_eigenvalue: o.margin,
        scale: o.scale,
        tolerance: o.tolerance,
        pass: o.pass,
    };
    Ok(CheckOutcome::from_verdict(
        &Operands::NegRecip {
            samples: vec![s.clone()],
        },
        v,
        format!("worst sub-check: {} on -1/f", o.kind),
    ))
}

/// Verdict for one tier of the classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum TierVerdict {
    NoCounterexample {
        checks_run: usize,
    },
    Counterexample {
        witness: Box<CheckOutcome>,
        /// Set when the failure was found by a weaker tier and carried upward.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inherited_from: Option<Tier>,
    },
}

impl TierVerdict {
    pub fn is_clean(&self) -> bool {
        matches!(self, TierVerdict::NoCounterexample { .. })
    }

    pub fn witness(&self) -> Option<&CheckOutcome> {
        match self {
            TierVerdict::Counterexample { witness, .. } => Some(witness),
            TierVerdict::NoCounterexample { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Convex,
    OperatorConvex,
    StronglyOperatorConvex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tiers {
    pub convex: TierVerdict,
    pub operator_convex: TierVerdict,
    pub strongly_operator_convex: TierVerdict,
}

/// Per-check, per-dimension tally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: CheckId,
    pub dim: usize,
    pub trials: usize,
    pub passes: usize,
    pub fails: usize,
    /// Trials whose operands violated a precondition of the check.
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_witness: Option<CheckOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_skip_reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tiers: Tiers,
    pub trials: usize,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub summaries: Vec<CheckSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub dims: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub options: CheckOptions,
    /// Sampling box, intersected with the domain of `f`; must end up bounded.
    pub interval: Interval,
    /// Checks to run; all of them when `None`.
    pub checks: Option<Vec<CheckId>>,
    /// Grid size of the scalar midpoint-convexity scan.
    pub grid: usize,
}

impl ClassifyConfig {
    pub fn new(interval: Interval, dims: Vec<usize>, trials: usize, seed: u64) -> Self {
        ClassifyConfig {
            dims,
            trials,
            seed,
            options: CheckOptions::default(),
            interval,
            checks: None,
            grid: 41,
        }
    }
}

/// Checks of the operator-convex battery.
pub const OC_BATTERY: [CheckId; 4] = [CheckId::OcDef, CheckId::Davis, CheckId::Hp, CheckId::HpMulti];

/// Checks of the strongly-operator-convex battery.
pub const SOC_BATTERY: [CheckId; 13] = [
    CheckId::SocIi,
    CheckId::SocIii,
    CheckId::SocIiiX0,
    CheckId::Diff15,
    CheckId::NegRecip,
    CheckId::Ineq11,
    CheckId::Jensen14,
    CheckId::Ineq2pp,
    CheckId::Ineq2ppp,
    CheckId::Block8,
    CheckId::Ineq10,
    CheckId::Ineq12,
    CheckId::Jensen15,
];

/// Random operands for one trial of a check.
pub struct Sampler<'a> {
    pub interval: &'a Interval,
    pub margin: f64,
}

impl Sampler<'_> {
    pub fn new(interval: &Interval) -> Result<Sampler<'_>> {
        if !interval.is_bounded() {
            return Err(Error::Config(format!(
                "sampling interval {interval} is unbounded; pass a bounded --interval"
            )));
        }
        Ok(Sampler {
            interval,
            margin: 1e-2 * interval.length(),
        })
    }

    fn herm<R: Rng>(&self, rng: &mut R, n: usize, trial: usize) -> Result<HermitianMatrix> {
        let e = Ensemble::ALL[trial % Ensemble::ALL.len()];
        sample_hermitian(rng, self.interval, n, self.margin, e)
    }

    fn point<R: Rng>(&self, rng: &mut R) -> f64 {
        let lo = self.interval.lo + self.margin;
        let hi = self.interval.hi - self.margin;
        lo + (hi - lo) * rng.gen::<f64>()
    }

    fn projection<R: Rng>(&self, rng: &mut R, n: usize) -> Result<HermitianMatrix> {
        let rank = rng.gen_range(0..=n);
        HermitianMatrix::new(sample_projection(rng, n, rank)?)
    }

    fn isometry_blocks<R: Rng>(&self, rng: &mut R, m: usize, trial: usize) -> Vec<CMatrix> {
        if trial % 3 == 0 {
            // contraction paired with its defect operator
            let a = sample_contraction(rng, m);
            let d = sqrt_psd(&HermitianMatrix::symmetrized(CMatrix::identity(m, m) - a.adjoint() * &a))
                .expect("finite input")
                .into_matrix();
            vec![a, d]
        } else {
            let k = 2 + trial % 2;
            let v = random_isometry(rng, k * m, m);
            (0..k).map(|i| v.rows(i * m, m).into_owned()).collect()
        }
    }

    fn multi<R: Rng>(&self, rng: &mut R, m: usize, trial: usize) -> Result<(Vec<HermitianMatrix>, Vec<CMatrix>)> {
        let a = self.isometry_blocks(rng, m, trial);
        let ts = (0..a.len())
            .map(|j| self.herm(rng, m, trial + j))
            .collect::<Result<Vec<_>>>()?;
        Ok((ts, a))
    }

    fn measure<R: Rng>(&self, rng: &mut R, atoms: usize) -> Result<DiscreteMeasure> {
        let points: Vec<f64> = (0..atoms).map(|_| self.point(rng)).collect();
        let raw: Vec<f64> = (0..atoms).map(|_| 0.05 + rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        // absorb rounding so the weights sum to one
        let rest: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - rest;
        DiscreteMeasure::new(points, weights)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, check: CheckId, n: usize, trial: usize) -> Result<Operands> {
        Ok(match check {
            CheckId::Midpoint => Operands::Midpoint {
                x: self.point(rng),
                y: self.point(rng),
            },
            CheckId::OcDef => Operands::OcDef {
                t1: self.herm(rng, n, trial)?,
                t2: self.herm(rng, n, trial + 1)?,
                lambda: rng.gen(),
            },
            CheckId::Davis => Operands::Davis {
                h: self.herm(rng, n, trial)?,
                p: self.projection(rng, n)?,
            },
            CheckId::Hp => Operands::Hp {
                h: self.herm(rng, n, trial)?,
                a: sample_contraction(rng, n),
            },
            CheckId::HpMulti => {
                let (ts, a) = self.multi(rng, n, trial)?;
                Operands::HpMulti { ts, a }
            }
            CheckId::SocIi => Operands::SocIi {
                t: self.herm(rng, n, trial)?,
                p: self.projection(rng, n)?,
            },
            CheckId::SocIii => Operands::SocIii {
                t: self.herm(rng, n, trial)?,
                p: HermitianMatrix::new(sample_soft(rng, n))?,
            },
            CheckId::SocIiiX0 => Operands::SocIiiX0 {
                t: self.herm(rng, n, trial)?,
                p: HermitianMatrix::new(sample_soft(rng, n))?,
                x0: self.point(rng),
            },
            CheckId::Block8 => {
                let (ts, a) = self.multi(rng, n, trial)?;
                Operands::Block8 { ts, a }
            }
            CheckId::Ineq10 => {
                let (ts, a) = self.multi(rng, n, trial)?;
                Operands::Ineq10 { ts, a }
            }
            CheckId::Ineq2pp => Operands::Ineq2pp {
                t: self.herm(rng, n, trial)?,
                a: sample_contraction(rng, n),
            },
            CheckId::Ineq2ppp => Operands::Ineq2ppp {
                t: self.herm(rng, n, trial)?,
                a: sample_contraction(rng, n),
            },
            CheckId::Ineq11 => Operands::Ineq11 {
                t1: self.herm(rng, n, trial)?,
                t2: self.herm(rng, n, trial + 1)?,
                lambda: 0.01 + 0.98 * rng.gen::<f64>(),
            },
            CheckId::Ineq12 => {
                // a one-dimensional complement forces scalar blocks and k = 2
                let v = random_isometry(rng, 2 * n, n);
                let a: Vec<CMatrix> = (0..2).map(|i| v.rows(i * n, n).into_owned()).collect();
                let ts = (0..2)
                    .map(|j| self.herm(rng, n, trial + j))
                    .collect::<Result<Vec<_>>>()?;
                Operands::Ineq12 { ts, a, u: vec![] }
            }
            CheckId::Jensen13 => Operands::Jensen13 {
                mu: self.measure(rng, n.max(2))?,
            },
            CheckId::Jensen14 => Operands::Jensen14 {
                mu: self.measure(rng, n.max(2))?,
            },
            CheckId::Jensen15 => Operands::Jensen15 {
                mu: self.measure(rng, n.max(2))?,
                s: rng.gen(),
            },
            CheckId::Diff15 => {
                let t = self.herm(rng, n, trial)?;
                let g = crate::hermitian::gaussian_matrix(rng, n, n);
                let h = HermitianMatrix::new(g)?;
                let h = h.scale(1.0 / (1.0 + h.norm()));
                Operands::Diff15 { t, h }
            }
            CheckId::NegRecip => Operands::NegRecip {
                samples: vec![
                    self.sample(rng, CheckId::OcDef, n, trial)?,
                    self.sample(rng, CheckId::Davis, n, trial)?,
                ],
            },
        })
    }
}

/// Dimensions at which a check is scheduled.
fn scheduled(check: CheckId, dim: usize) -> bool {
    match check {
        CheckId::Ineq12 => dim == 1,
        _ => true,
    }
}

enum TrialResult {
    Outcome(CheckOutcome),
    Skipped(String),
}

fn trial_seed_path(check: CheckId, dim: usize, trial: usize) -> [u64; 3] {
    [check as u64, dim as u64, trial as u64]
}

/// Regenerates the operands of a trial of [`classify`].
pub fn trial_operands(
    f: &ScalarFunction,
    config: &ClassifyConfig,
    check: CheckId,
    dim: usize,
    trial: usize,
) -> Result<Operands> {
    let sampling = f.domain().intersect(&config.interval)?;
    let sampler = Sampler::new(&sampling)?;
    let mut rng = stream_rng(config.seed, &trial_seed_path(check, dim, trial));
    sampler.sample(&mut rng, check, dim, trial)
}

/// Runs the convex, operator-convex and strongly-operator-convex batteries.
///
/// A counterexample against a weaker tier is also recorded against every
/// stronger tier. The result depends only on `(f, config)`.
pub fn classify(f: &ScalarFunction, config: &ClassifyConfig) -> Result<Classification> {
    if config.dims.is_empty() || config.dims.iter().any(|&d| d == 0) {
        return Err(Error::Config("dims must be a non-empty list of positive integers".into()));
    }
    if config.trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let sampling = f.domain().intersect(&config.interval)?;
    let sampler = Sampler::new(&sampling)?;
    let f = f.restrict(&sampling)?;
    let wanted = |c: CheckId| config.checks.as_ref().map_or(true, |cs| cs.contains(&c));

    let mut summaries = Vec::new();

    if wanted(CheckId::Midpoint) {
        summaries.push(midpoint_scan(&f, &sampler, config)?);
    }

    let mut jobs: Vec<(CheckId, usize, usize)> = Vec::new();
    for &check in OC_BATTERY.iter().chain(SOC_BATTERY.iter()) {
        if !wanted(check) {
            continue;
        }
        for &dim in &config.dims {
            if !scheduled(check, dim) {
                continue;
            }
            for trial in 0..config.trials {
                jobs.push((check, dim, trial));
            }
        }
    }

    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(check, dim, trial)| {
            let mut rng = stream_rng(config.seed, &trial_seed_path(check, dim, trial));
            let operands = match sampler.sample(&mut rng, check, dim, trial) {
                Ok(o) => o,
                Err(e) => return TrialResult::Skipped(e.to_string()),
            };
            match run_check(&f, &operands, &config.options) {
                Ok(o) => TrialResult::Outcome(o),
                Err(e) => TrialResult::Skipped(e.to_string()),
            }
        })
        .collect();

    let mut k = 0;
    while k < jobs.len() {
        let (check, dim, _) = jobs[k];
        let mut s = CheckSummary {
            check,
            dim,
            trials: 0,
            passes: 0,
            fails: 0,
            skipped: 0,
            worst_margin: None,
            worst_scale: None,
            first_witness: None,
            first_skip_reason: None,
        };
        while k < jobs.len() && jobs[k].0 == check && jobs[k].1 == dim {
            tally(&mut s, &results[k]);
            k += 1;
        }
        summaries.push(s);
    }

    let tiers = tiers_from(&summaries);
    Ok(Classification {
        tiers,
        trials: config.trials,
        dims: config.dims.clone(),
        seed: config.seed,
        summaries,
    })
}

fn tally(s: &mut CheckSummary, r: &TrialResult) {
    s.trials += 1;
    match r {
        TrialResult::Skipped(reason) => {
            s.skipped += 1;
            if s.first_skip_reason.is_none() {
                s.first_skip_reason = Some(reason.clone());
            }
        }
        TrialResult::Outcome(o) => {
            if o.pass {
                s.passes += 1;
            } else {
                s.fails += 1;
                if s.first_witness.is_none() {
                    s.first_witness = Some(o.clone());
                }
            }
            let worse = match (s.worst_margin, s.worst_scale) {
                (Some(m), Some(sc)) => o.normalized_margin() < m / sc,
                _ => true,
            };
            if worse {
                s.worst_margin = Some(o.margin);
                s.worst_scale = Some(o.scale);
            }
        }
    }
}

fn midpoint_scan(f: &ScalarFunction, sampler: &Sampler<'_>, config: &ClassifyConfig) -> Result<CheckSummary> {
    let inner = Interval::closed(sampler.interval.lo + sampler.margin, sampler.interval.hi - sampler.margin)?;
    let grid = inner.grid(config.grid.max(2))?;
    let mut s = CheckSummary {
        check: CheckId::Midpoint,
        dim: 1,
        trials: 0,
        passes: 0,
        fails: 0,
        skipped: 0,
        worst_margin: None,
        worst_scale: None,
        first_witness: None,
        first_skip_reason: None,
    };
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let ops = Operands::Midpoint { x: grid[i], y: grid[j] };
            let r = match run_check(f, &ops, &config.options) {
                Ok(o) => TrialResult::Outcome(o),
                Err(e) => TrialResult::Skipped(e.to_string()),
            };
            tally(&mut s, &r);
        }
    }
    Ok(s)
}

fn tiers_from(summaries: &[CheckSummary]) -> Tiers {
    let first_fail = |tier: Tier| -> Option<CheckOutcome> {
        summaries
            .iter()
            .filter(|s| s.check.tier() == tier)
            .find_map(|s| s.first_witness.clone())
    };
    let runs = |tier: Tier| -> usize {
        summaries
            .iter()
            .filter(|s| s.check.tier() == tier)
            .map(|s| s.passes + s.fails)
            .sum()
    };
    let mut carried: Option<(CheckOutcome, Tier)> = None;
    let mut verdict = |tier: Tier| -> TierVerdict {
        if let Some(w) = first_fail(tier) {
            if carried.is_none() {
                carried = Some((w.clone(), tier));
            }
            TierVerdict::Counterexample {
                witness: Box::new(w),
                inherited_from: None,
            }
        } else if let Some((w, from)) = &carried {
            TierVerdict::Counterexample {
                witness: Box::new(w.clone()),
                inherited_from: Some(*from),
            }
        } else {
            TierVerdict::NoCounterexample { checks_run: runs(tier) }
        }
    };
    let convex = verdict(Tier::Convex);
    let operator_convex = verdict(Tier::OperatorConvex);
    let strongly_operator_convex = verdict(Tier::StronglyOperatorConvex);
    Tiers {
        convex,
        operator_convex,
        strongly_operator_convex,
    }
}
