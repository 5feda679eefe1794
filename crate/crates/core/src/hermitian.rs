//! Dense Hermitian linear algebra.
//!
//! Everything the inequality checkers need lives here: eigendecomposition and
//! functional calculus, the tolerance-aware semidefinite order, seeded random
//! ensembles and the isometry-to-unitary completion used by the block
//! inequalities.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen, QR};
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::funcrep::ScalarFunction;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Default relative tolerance of the semidefinite order.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Eigenvalues this close (relative) to a closed endpoint are snapped onto it.
const ENDPOINT_SNAP: f64 = 1e-12;

pub fn c64(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `m*` for a general complex matrix.
pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Dense self-adjoint matrix. Constructors symmetrize their input.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::Input(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Input("matrix has non-finite entries".into()));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without validation; callers guarantee a finite square input.
    pub(crate) fn symmetrized(m: CMatrix) -> Self {
        let h = (&m + m.adjoint()) * c64(0.5);
        HermitianMatrix(h)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input("rows must form a square matrix".into()));
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| c64(rows[i][j])))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                c64(values[i])
            } else {
                c64(0.0)
            }
        }))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::diag(&[x])
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(CMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.0)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    /// Largest deviation from self-adjointness, `max |m_ij - conj(m_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.0 - self.0.adjoint()))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::symmetrized(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::symmetrized(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix(&self.0 * c64(s))
    }

    /// `a* self a` for a general (possibly rectangular) `a`.
    pub fn congruence(&self, a: &CMatrix) -> Self {
        Self::symmetrized(a.adjoint() * &self.0 * a)
    }
}

impl fmt::Display for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Serialization of complex matrices as row-major nested arrays of `[re, im]`.
pub mod matrix_serde {
    use super::*;

    pub fn to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Input("ragged matrix rows".into()));
        }
        Ok(CMatrix::from_fn(n, m, |i, j| {
            Complex::new(rows[i][j][0], rows[i][j][1])
        }))
    }

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(
            ms: &[CMatrix],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<CMatrix>, D::Error> {
            let all = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
            all.iter()
                .map(|rows| from_rows(rows).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

impl Serialize for HermitianMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_serde::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = matrix_serde::deserialize(d)?;
        HermitianMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Real interval with independently open or closed ends. Infinite ends are open.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() {
            return Err(Error::Config("interval endpoint is NaN".into()));
        }
        let lo_closed = lo_closed && lo.is_finite();
        let hi_closed = hi_closed && hi.is_finite();
        if lo > hi || (lo == hi && !(lo_closed && hi_closed)) {
            return Err(Error::Config(format!("empty interval ({lo}, {hi})")));
        }
        Ok(Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }

    pub fn closed(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, true)
    }

    pub fn open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, false, false)
    }

    pub fn real_line() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn contains_interior(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Result<Interval> {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        Interval::new(lo, hi, lo_closed, hi_closed)
            .map_err(|_| Error::Config(format!("intervals {self} and {other} do not overlap")))
    }

    /// Closed interval `[lo + margin, hi - margin]`.
    pub fn shrink(&self, margin: f64) -> Result<Interval> {
        if !self.is_bounded() {
            return Err(Error::Config(format!(
                "cannot sample from unbounded interval {self} without a sampling box"
            )));
        }
        if !(margin > 0.0 && 2.0 * margin < self.length()) {
            return Err(Error::Config(format!(
                "margin {margin} must lie in (0, {})",
                self.length() / 2.0
            )));
        }
        Interval::closed(self.lo + margin, self.hi - margin)
    }

    /// `n` uniformly spaced points of a bounded interval, open ends excluded.
    pub fn grid(&self, n: usize) -> Result<Vec<f64>> {
        if !self.is_bounded() {
            return Err(Error::Config(format!("cannot grid unbounded interval {self}")));
        }
        let (a, b) = (self.lo, self.hi);
        if n == 1 {
            return Ok(vec![self.midpoint()]);
        }
        let pts: Vec<f64> = if self.lo_closed && self.hi_closed {
            (0..n)
                .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
                .map(|x| x.min(b))
                .collect()
        } else {
            // open ends: interior nodes of an (n+1)-step partition, closed ends re-added
            let step = (b - a) / (n + 1) as f64;
            let mut v: Vec<f64> = (1..=n).map(|k| (a + step * k as f64).min(b)).collect();
            if self.lo_closed {
                v[0] = a;
            }
            if self.hi_closed {
                v[n - 1] = b;
            }
            v
        };
        Ok(pts)
    }

    /// Snaps `x` onto a closed endpoint when it misses it by rounding noise.
    fn snap(&self, x: f64) -> f64 {
        if self.lo_closed && x < self.lo && self.lo - x <= ENDPOINT_SNAP * (1.0 + self.lo.abs()) {
            return self.lo;
        }
        if self.hi_closed && x > self.hi && x - self.hi <= ENDPOINT_SNAP * (1.0 + self.hi.abs()) {
            return self.hi;
        }
        x
    }
}

fn fmt_endpoint(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{},{}{}",
            if self.lo_closed { '[' } else { '(' },
            fmt_endpoint(self.lo),
            fmt_endpoint(self.hi),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

impl FromStr for Interval {
    type Err = Error;

    /// Accepts `a,b` (closed), `[a,b]`, `(a,b)`, and the half-open forms.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Config(format!("malformed interval '{s}'"));
        let (lo_closed, body) = match s.chars().next() {
            Some('[') => (true, &s[1..]),
            Some('(') => (false, &s[1..]),
            _ => (true, s.as_str()),
        };
        let (hi_closed, body) = match body.chars().last() {
            Some(']') => (true, &body[..body.len() - 1]),
            Some(')') => (false, &body[..body.len() - 1]),
            _ if s.starts_with(['[', '(']) => return Err(bad()),
            _ => (true, body),
        };
        let (a, b) = body.split_once(',').ok_or_else(bad)?;
        let parse = |t: &str| -> Result<f64> {
            match t {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => t.parse::<f64>().map_err(|_| bad()),
            }
        };
        Interval::new(parse(a)?, parse(b)?, lo_closed, hi_closed)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub basis: CMatrix,
}

impl SpectralDecomposition {
    /// `basis · diag(g(λ)) · basis*`.
    pub fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> HermitianMatrix {
        let values: Vec<f64> = self.eigenvalues.iter().map(|&x| g(x)).collect();
        self.reconstruct_values(&values)
    }

    /// `basis · diag(values) · basis*`.
    pub fn reconstruct_values(&self, values: &[f64]) -> HermitianMatrix {
        let mut scaled = self.basis.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        HermitianMatrix::symmetrized(scaled * self.basis.adjoint())
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

pub fn eigh(m: &HermitianMatrix) -> Result<SpectralDecomposition> {
    if m.0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    let n = m.dim();
    let eig = SymmetricEigen::try_new(m.0.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Input("eigensolver did not converge".into()))?;
    let (values, vectors) = jacobi_refine(&m.0, eig.eigenvectors);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let basis = CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Ok(SpectralDecomposition { eigenvalues, basis })
}

/// Polishes an approximate eigenbasis with cyclic complex Jacobi sweeps.
///
/// The QR iteration leaves residuals around 1e-11 when eigenvalues nearly
/// coincide; starting from its basis, Jacobi converges quadratically to
/// working precision in one or two sweeps.
fn jacobi_refine(a: &CMatrix, mut v: CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let mut d = v.adjoint() * a * &v;
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let threshold = 0.25 * f64::EPSILON * scale;
    for _sweep in 0..12 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = d[(p, q)];
                let abs = apq.norm();
                if abs <= threshold {
                    continue;
                }
                rotated = true;
                let e = apq / abs;
                let theta = (d[(q, q)].re - d[(p, p)].re) / (2.0 * abs);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let ec = e.conj();
                // columns: A ← A G with G = [[c, s], [−s ē, c ē]] on (p, q)
                for i in 0..n {
                    let (xp, xq) = (d[(i, p)], d[(i, q)]);
                    d[(i, p)] = xp * c - xq * ec * s;
                    d[(i, q)] = xp * s + xq * ec * c;
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = vp * c - vq * ec * s;
                    v[(i, q)] = vp * s + vq * ec * c;
                }
                // rows: A ← G* A
                for j in 0..n {
                    let (xp, xq) = (d[(p, j)], d[(q, j)]);
                    d[(p, j)] = xp * c - xq * e * s;
                    d[(q, j)] = xp * s + xq * e * c;
                }
                d[(p, q)] = c64(0.0);
                d[(q, p)] = c64(0.0);
            }
        }
        if !rotated {
            break;
        }
    }
    ((0..n).map(|i| d[(i, i)].re).collect(), v)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(eigh(&HermitianMatrix::new(m.clone())?)?.min())
}

/// `f(m)` by the functional calculus; every eigenvalue must lie in `f`'s domain.
pub fn apply_fn(f: &ScalarFunction, m: &HermitianMatrix) -> Result<HermitianMatrix> {
    let sd = eigh(m)?;
    apply_fn_spectral(f, &sd)
}

pub(crate) fn apply_fn_spectral(
    f: &ScalarFunction,
    sd: &SpectralDecomposition,
) -> Result<HermitianMatrix> {
    let lambdas = checked_spectrum(f, &sd.eigenvalues)?;
    let values: Vec<f64> = lambdas.iter().map(|&x| f.eval(x)).collect();
    Ok(sd.reconstruct_values(&values))
}

/// Validates eigenvalues against `f`'s domain, snapping rounding noise at closed ends.
pub(crate) fn checked_spectrum(f: &ScalarFunction, eigenvalues: &[f64]) -> Result<Vec<f64>> {
    let dom = f.domain();
    eigenvalues
        .iter()
        .map(|&x| {
            let y = dom.snap(x);
            if dom.contains(y) {
                Ok(y)
            } else {
                Err(Error::SpectrumDomain {
                    eigenvalue: x,
                    domain: dom.to_string(),
                })
            }
        })
        .collect()
}

/// Matrix square root of a positive semidefinite matrix; tiny negative eigenvalues clip to zero.
pub fn sqrt_psd(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(eigh(m)?.reconstruct_with(|x| x.max(0.0).sqrt()))
}

/// Outcome of one semidefinite comparison `a ⪰ b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdVerdict {
    pub min_eigenvalue: f64,
    pub scale: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl PsdVerdict {
    pub fn from_margin(min_eigenvalue: f64, scale: f64, tolerance: f64) -> Self {
        PsdVerdict {
            min_eigenvalue,
            scale,
            tolerance,
            pass: min_eigenvalue >= -tolerance * scale,
        }
    }

    /// Verdict on `slack ⪰ 0`, with the scale supplied by the caller.
    pub fn of_slack(slack: &HermitianMatrix, scale: f64, tolerance: f64) -> Result<Self> {
        Ok(Self::from_margin(eigh(slack)?.min(), scale, tolerance))
    }
}

pub fn is_psd_geq(a: &HermitianMatrix, b: &HermitianMatrix, tol: f64) -> Result<PsdVerdict> {
    if a.dim() != b.dim() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tolerance must be positive, got {tol}")));
    }
    let scale = 1.0 + a.norm().max(b.norm());
    PsdVerdict::of_slack(&a.sub(b), scale, tol)
}

/// Inverse of a positive definite matrix through its Cholesky factor.
///
/// Fails with a singularity error unless `λ_min(c) > tol · (1 + ‖c‖)`.
pub fn spd_inverse(c: &HermitianMatrix, tol: f64) -> Result<CMatrix> {
    let sd = eigh(c)?;
    let scale = 1.0 + sd.max().abs().max(sd.min().abs());
    if sd.min() <= tol * scale {
        return Err(Error::Singularity(format!(
            "smallest eigenvalue {} is not above {}",
            sd.min(),
            tol * scale
        )));
    }
    let chol = Cholesky::new(c.as_matrix().clone())
        .ok_or_else(|| Error::Singularity("Cholesky factorization failed".into()))?;
    Ok(chol.inverse())
}

/// Assembles `[[a, b], [c, d]]`.
pub fn block2(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> CMatrix {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut m = CMatrix::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a);
    if c2 > 0 {
        m.view_mut((0, c1), (r1, c2)).copy_from(b);
    }
    if r2 > 0 {
        m.view_mut((r1, 0), (r2, c1)).copy_from(c);
        m.view_mut((r1, c1), (r2, c2)).copy_from(d);
    }
    m
}

/// Verdicts on `[[a, b], [b*, c]] ⪰ 0` and on `a ⪰ b c⁻¹ b*`, in that order.
pub fn schur_psd_equivalent(
    a: &HermitianMatrix,
    b: &CMatrix,
    c: &HermitianMatrix,
    tol: f64,
) -> Result<(PsdVerdict, PsdVerdict)> {
    if b.nrows() != a.dim() || b.ncols() != c.dim() {
        return Err(Error::Input("block shapes do not match".into()));
    }
    let c_inv = spd_inverse(c, tol)?;
    let block = HermitianMatrix::symmetrized(block2(
        a.as_matrix(),
        b,
        &b.adjoint(),
        c.as_matrix(),
    ));
    let block_verdict = PsdVerdict::of_slack(&block, 1.0 + block.norm(), tol)?;
    let schur = HermitianMatrix::symmetrized(b * c_inv * b.adjoint());
    let schur_verdict = is_psd_geq(a, &schur, tol)?;
    Ok((block_verdict, schur_verdict))
}

/// Deterministic generator for one `(seed, path)` stream.
///
/// Every trial derives its own stream from the run seed and its indices, so the
/// values it draws do not depend on execution order.
pub fn stream_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// `rows × cols` matrix with orthonormal columns (`cols ≤ rows`).
pub fn random_isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    assert!(cols <= rows);
    if cols == 0 {
        return CMatrix::zeros(rows, 0);
    }
    let g = gaussian_matrix(rng, rows, cols);
    let q = QR::new(g).q();
    q.columns(0, cols).into_owned()
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    random_isometry(rng, n, n)
}

/// Spectrum shapes used when sampling Hermitian matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ensemble {
    /// Extreme eigenvalues land on the ends of the shrunk interval.
    Stretch,
    /// Spectrum rescaled into a random sub-interval.
    Spread,
    /// All eigenvalues within `1e-9 · length` of one point.
    Clustered,
    /// Two clusters of width `1e-3 · length`.
    NearDegenerate,
}

impl Ensemble {
    pub const ALL: [Ensemble; 4] = [
        Ensemble::Spread,
        Ensemble::Stretch,
        Ensemble::Clustered,
        Ensemble::NearDegenerate,
    ];
}

pub fn sample_hermitian<R: Rng + ?Sized>(
    rng: &mut R,
    interval: &Interval,
    n: usize,
    margin: f64,
    ensemble: Ensemble,
) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::Input("dimension must be positive".into()));
    }
    let box_ = interval.shrink(margin)?;
    let (lo, hi) = (box_.lo, box_.hi);
    let len = hi - lo;

    let g = gaussian_matrix(rng, n, n);
    let gue = HermitianMatrix::symmetrized(g);
    let sd = eigh(&gue)?;
    let (emin, emax) = (sd.min(), sd.max());
    let unit: Vec<f64> = sd
        .eigenvalues
        .iter()
        .map(|&x| if emax > emin { (x - emin) / (emax - emin) } else { 0.5 })
        .collect();

    let target: Vec<f64> = match ensemble {
        Ensemble::Stretch => {
            if n == 1 {
                vec![lo + len * rng.gen::<f64>()]
            } else {
                unit.iter().map(|u| lo + len * u).collect()
            }
        }
        Ensemble::Spread => {
            let mut a = lo + len * rng.gen::<f64>();
            let mut b = lo + len * rng.gen::<f64>();
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            unit.iter().map(|u| a + (b - a) * u).collect()
        }
        Ensemble::Clustered => {
            let w = 1e-9 * len;
            let c = lo + w + (len - 2.0 * w) * rng.gen::<f64>();
            unit.iter().map(|u| c + w * (2.0 * u - 1.0)).collect()
        }
        Ensemble::NearDegenerate => {
            let w = 1e-3 * len;
            let c1 = lo + w + (len - 2.0 * w) * rng.gen::<f64>();
            let c2 = lo + w + (len - 2.0 * w) * rng.gen::<f64>();
            unit.iter()
                .enumerate()
                .map(|(k, u)| if k % 2 == 0 { c1 } else { c2 } + w * (2.0 * u - 1.0))
                .map(|x| x.clamp(lo, hi))
                .collect()
        }
    };
    Ok(sd.reconstruct_values(&target))
}

/// Gaussian Hermitian matrix rescaled so that `σ ⊂ [lo + margin, hi - margin]`.
pub fn random_hermitian_in(
    interval: &Interval,
    n: usize,
    seed: u64,
    margin: f64,
) -> Result<HermitianMatrix> {
    let mut rng = stream_rng(seed, &[0x4845_524D, n as u64]);
    sample_hermitian(&mut rng, interval, n, margin, Ensemble::Stretch)
}

/// Structured random operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Projection { rank: usize },
    Soft,
    Contraction,
}

pub fn sample_projection<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize) -> Result<CMatrix> {
    if rank > n {
        return Err(Error::Input(format!("rank {rank} exceeds dimension {n}")));
    }
    let q = random_isometry(rng, n, rank);
    Ok(&q * q.adjoint())
}

pub fn sample_soft<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let u = random_unitary(rng, n);
    let d = CMatrix::from_fn(n, n, |i, j| if i == j { c64(rng.gen::<f64>()) } else { c64(0.0) });
    let p = &u * d * u.adjoint();
    HermitianMatrix::symmetrized(p).into_matrix()
}

pub fn sample_contraction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = gaussian_matrix(rng, n, n) * c64(1.0 / (n as f64).sqrt());
    let mut svd = g.svd(true, true);
    for s in svd.singular_values.iter_mut() {
        *s = s.min(1.0);
    }
    svd.recompose().expect("both factors were requested")
}

pub fn random_operator(kind: OperatorKind, n: usize, seed: u64) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::Input("dimension must be positive".into()));
    }
    let mut rng = stream_rng(seed, &[0x4F50, n as u64]);
    match kind {
        OperatorKind::Projection { rank } => sample_projection(&mut rng, n, rank),
        OperatorKind::Soft => Ok(sample_soft(&mut rng, n)),
        OperatorKind::Contraction => Ok(sample_contraction(&mut rng, n)),
    }
}

fn vstack(blocks: &[CMatrix]) -> CMatrix {
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut v = CMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        v.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    v
}

/// Given `v = [a₁; …; a_k]` with `Σ aᵢ* aᵢ = 1`, returns `b₁, …, b_k` such that
/// `u = (v w)` with `w = [b₁; …; b_k]` is unitary.
///
/// For `k = 2` with `a₂ = (1 − a₁*a₁)^{1/2}` the closed form
/// `b₁ = (1 − a₁a₁*)^{1/2}`, `b₂ = −a₁*` is used; otherwise `w` is an
/// orthonormal basis of `ker v*`.
pub fn complete_isometry(blocks: &[CMatrix]) -> Result<Vec<CMatrix>> {
    let m = blocks
        .first()
        .ok_or_else(|| Error::Input("need at least one block".into()))?
        .nrows();
    if blocks.iter().any(|b| b.nrows() != m || b.ncols() != m) {
        return Err(Error::Input(format!("every block must be {m}x{m}")));
    }
    let v = vstack(blocks);
    let gram = v.adjoint() * &v;
    let defect = max_abs(&(gram - CMatrix::identity(m, m)));
    if defect > 1e-10 {
        return Err(Error::Input(format!(
            "blocks do not form an isometry (‖Σ aᵢ*aᵢ − 1‖ = {defect:e})"
        )));
    }

    let w_blocks = match closed_form_pair(blocks)? {
        Some(bs) => bs,
        None => {
            let k = blocks.len();
            let q = HermitianMatrix::symmetrized(CMatrix::identity(k * m, k * m) - &v * v.adjoint());
            let sd = eigh(&q)?;
            let cols: Vec<usize> = (0..k * m).filter(|&j| sd.eigenvalues[j] > 0.5).collect();
            if cols.len() != (k - 1) * m {
                return Err(Error::Structure(format!(
                    "complement has dimension {} instead of {}",
                    cols.len(),
                    (k - 1) * m
                )));
            }
            let w = CMatrix::from_fn(k * m, cols.len(), |i, j| sd.basis[(i, cols[j])]);
            (0..k)
                .map(|i| w.rows(i * m, m).into_owned())
                .collect()
        }
    };
    verify_unitary(&v, &w_blocks)?;
    Ok(w_blocks)
}

fn closed_form_pair(blocks: &[CMatrix]) -> Result<Option<Vec<CMatrix>>> {
    if blocks.len() != 2 {
        return Ok(None);
    }
    let (a, a2) = (&blocks[0], &blocks[1]);
    let m = a.nrows();
    if max_abs(&(a2 - a2.adjoint())) > 1e-12 {
        return Ok(None);
    }
    let id = CMatrix::identity(m, m);
    let expected = sqrt_psd(&HermitianMatrix::symmetrized(&id - a.adjoint() * a))?;
    if max_abs(&(a2 - expected.as_matrix())) > 1e-10 {
        return Ok(None);
    }
    let b1 = sqrt_psd(&HermitianMatrix::symmetrized(&id - a * a.adjoint()))?;
    Ok(Some(vec![b1.into_matrix(), -a.adjoint()]))
}

fn verify_unitary(v: &CMatrix, w_blocks: &[CMatrix]) -> Result<()> {
    let w = vstack(w_blocks);
    let mut u = CMatrix::zeros(v.nrows(), v.ncols() + w.ncols());
    u.view_mut((0, 0), v.shape()).copy_from(v);
    if w.ncols() > 0 {
        u.view_mut((0, v.ncols()), w.shape()).copy_from(&w);
    }
    if u.nrows() != u.ncols() {
        return Err(Error::Structure("completed operator is not square".into()));
    }
    let n = u.nrows();
    let id = CMatrix::identity(n, n);
    let e1 = max_abs(&(u.adjoint() * &u - &id));
    let e2 = max_abs(&(&u * u.adjoint() - &id));
    if e1.max(e2) > 1e-8 {
        return Err(Error::Structure(format!(
            "completion is not unitary (defects {e1:e}, {e2:e})"
        )));
    }
    Ok(())
}
