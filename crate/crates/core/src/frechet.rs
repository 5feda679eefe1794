//! First and second Fréchet derivatives of `t ↦ f(t)` through divided
//! differences in the eigenbasis of `t`, plus a finite-difference oracle that
//! goes through the functional calculus instead.

use crate::error::{Error, Result};
use crate::funcrep::ScalarFunction;
use crate::hermitian::{apply_fn, checked_spectrum, eigh, max_abs, CMatrix, HermitianMatrix};

/// Relative confluence threshold for divided differences.
pub const CONFLUENCE: f64 = 1e-6;

/// Default finite-difference steps, before scale normalization.
pub const FD_STEP_FIRST: f64 = 1e-4;
pub const FD_STEP_SECOND: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct DividedDifferenceTable {
    pub eigenvalues: Vec<f64>,
    /// `first[i][j] = f^[1](λᵢ, λⱼ)`.
    pub first: Vec<Vec<f64>>,
    /// `second[i][k][j] = f^[2](λᵢ, λₖ, λⱼ)`.
    pub second: Vec<Vec<Vec<f64>>>,
}

fn spread(lambdas: &[f64]) -> f64 {
    let lo = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo).max(1.0)
}

struct Differ<'a> {
    f: &'a ScalarFunction,
    delta: f64,
}

impl Differ<'_> {
    fn d1(&self, x: f64) -> Result<f64> {
        self.f
            .deriv1(x)
            .ok_or_else(|| Error::DerivativeRequired(format!("divided differences of {}", self.f)))
    }

    fn d2(&self, x: f64) -> Result<f64> {
        self.f
            .deriv2(x)
            .ok_or_else(|| Error::DerivativeRequired(format!("second divided differences of {}", self.f)))
    }

    fn first(&self, a: f64, b: f64) -> Result<f64> {
        if (a - b).abs() > self.delta {
            Ok((self.f.eval(a) - self.f.eval(b)) / (a - b))
        } else {
            self.d1(0.5 * (a + b))
        }
    }

    fn second(&self, a: f64, b: f64, c: f64) -> Result<f64> {
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        let [x, y, z] = v;
        let d = self.delta;
        if z - x <= d {
            Ok(0.5 * self.d2((x + y + z) / 3.0)?)
        } else if y - x <= d {
            let m = 0.5 * (x + y);
            Ok((self.first(m, z)? - self.d1(m)?) / (z - m))
        } else if z - y <= d {
            let m = 0.5 * (y + z);
            Ok((self.d1(m)? - self.first(x, m)?) / (m - x))
        } else {
            Ok((self.first(y, z)? - self.first(x, y)?) / (z - x))
        }
    }
}

fn differ<'a>(f: &'a ScalarFunction, lambdas: &[f64]) -> Differ<'a> {
    Differ {
        f,
        delta: CONFLUENCE * spread(lambdas),
    }
}

/// Löwner matrix `[f^[1](λᵢ, λⱼ)]`, with `f′` at the midpoint for confluent pairs.
pub fn divided_diff_first(f: &ScalarFunction, lambdas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let lambdas = checked_spectrum(f, lambdas)?;
    let dd = differ(f, &lambdas);
    let n = lambdas.len();
    let mut t = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = dd.first(lambdas[i], lambdas[j])?;
            t[i][j] = v;
            t[j][i] = v;
        }
    }
    Ok(t)
}

/// Fully symmetric table `[f^[2](λᵢ, λₖ, λⱼ)]`.
pub fn divided_diff_second(f: &ScalarFunction, lambdas: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
    if !f.has_deriv1() || !f.has_deriv2() {
        return Err(Error::DerivativeRequired(format!("second divided differences of {f}")));
    }
    let lambdas = checked_spectrum(f, lambdas)?;
    let dd = differ(f, &lambdas);
    let n = lambdas.len();
    let mut t = vec![vec![vec![0.0; n]; n]; n];
    for i in 0..n {
        for k in i..n {
            for j in k..n {
                let v = dd.second(lambdas[i], lambdas[k], lambdas[j])?;
                for (a, b, c) in [(i, k, j), (i, j, k), (k, i, j), (k, j, i), (j, i, k), (j, k, i)] {
                    t[a][b][c] = v;
                }
            }
        }
    }
    Ok(t)
}

pub fn divided_difference_table(f: &ScalarFunction, lambdas: &[f64]) -> Result<DividedDifferenceTable> {
    Ok(DividedDifferenceTable {
        eigenvalues: lambdas.to_vec(),
        first: divided_diff_first(f, lambdas)?,
        second: divided_diff_second(f, lambdas)?,
    })
}

fn check_dims(t: &HermitianMatrix, h: &HermitianMatrix) -> Result<()> {
    if t.dim() != h.dim() {
        return Err(Error::Input(format!(
            "dimension mismatch: t is {}, h is {}",
            t.dim(),
            h.dim()
        )));
    }
    Ok(())
}

/// `F′(t)·h`: Schur product of the Löwner matrix with `h` in the eigenbasis of `t`.
pub fn frechet_first(f: &ScalarFunction, t: &HermitianMatrix, h: &HermitianMatrix) -> Result<HermitianMatrix> {
    check_dims(t, h)?;
    let sd = eigh(t)?;
    let lowner = divided_diff_first(f, &sd.eigenvalues)?;
    let ht = h.congruence(&sd.basis).into_matrix();
    let n = t.dim();
    let inner = CMatrix::from_fn(n, n, |i, j| ht[(i, j)] * lowner[i][j]);
    Ok(HermitianMatrix::new(inner)?.congruence(&sd.basis.adjoint()))
}

/// `F″(t)(h, h)`: entry `(i, j)` in the eigenbasis is `2 Σₖ f^[2](λᵢ, λₖ, λⱼ) h̃ᵢₖ h̃ₖⱼ`.
pub fn frechet_second(f: &ScalarFunction, t: &HermitianMatrix, h: &HermitianMatrix) -> Result<HermitianMatrix> {
    check_dims(t, h)?;
    let sd = eigh(t)?;
    let table = divided_diff_second(f, &sd.eigenvalues)?;
    let ht = h.congruence(&sd.basis).into_matrix();
    let n = t.dim();
    let inner = CMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| ht[(i, k)] * ht[(k, j)] * (2.0 * table[i][k][j]))
            .sum()
    });
    Ok(HermitianMatrix::new(inner)?.congruence(&sd.basis.adjoint()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdOrder {
    First,
    Second,
}

/// Scale-normalized default step for the given order.
pub fn default_step(order: FdOrder, t: &HermitianMatrix, h: &HermitianMatrix) -> f64 {
    let base = match order {
        FdOrder::First => FD_STEP_FIRST,
        FdOrder::Second => FD_STEP_SECOND,
    };
    base * (1.0 + t.norm()) / (1.0 + h.norm())
}

/// Central finite differences of `s ↦ f(t + s·h)` at `s = 0`.
pub fn fd_oracle(
    f: &ScalarFunction,
    t: &HermitianMatrix,
    h: &HermitianMatrix,
    order: FdOrder,
    step: Option<f64>,
) -> Result<HermitianMatrix> {
    check_dims(t, h)?;
    let s = step.unwrap_or_else(|| default_step(order, t, h));
    let eval_at = |coef: f64| -> Result<HermitianMatrix> {
        apply_fn(f, &t.add(&h.scale(coef * s))).map_err(|e| match e {
            Error::SpectrumDomain { .. } => Error::StepTooLarge { step: s },
            other => other,
        })
    };
    let plus = eval_at(1.0)?;
    let minus = eval_at(-1.0)?;
    match order {
        FdOrder::First => Ok(plus.sub(&minus).scale(0.5 / s)),
        FdOrder::Second => {
            let mid = apply_fn(f, t)?;
            Ok(plus.add(&minus).sub(&mid.scale(2.0)).scale(1.0 / (s * s)))
        }
    }
}

/// `‖a − b‖_max / (1 + ‖b‖_max)`.
pub fn relative_error(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    max_abs(&(a.as_matrix() - b.as_matrix())) / (1.0 + b.max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcrep::catalog;
    use crate::hermitian::{gaussian_matrix, sample_hermitian, stream_rng, Ensemble, Interval};

    fn sq() -> ScalarFunction {
        catalog("square", &[]).unwrap()
    }

    fn res2() -> ScalarFunction {
        catalog("resolvent_above", &[2.0]).unwrap()
    }

    fn herm(rows: &[&[f64]]) -> HermitianMatrix {
        HermitianMatrix::from_real_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_pair(seed: u64, n: usize) -> (HermitianMatrix, HermitianMatrix) {
        let mut rng = stream_rng(seed, &[n as u64]);
        let i = Interval::closed(-1.0, 1.0).unwrap();
        let t = sample_hermitian(&mut rng, &i, n, 0.02, Ensemble::Spread).unwrap();
        let h = HermitianMatrix::new(gaussian_matrix(&mut rng, n, n)).unwrap();
        (t, h)
    }

    #[test]
    fn first_table_examples() {
        assert_eq!(divided_diff_first(&sq(), &[1.0, 2.0]).unwrap(), vec![vec![2.0, 3.0], vec![3.0, 4.0]]);
        let id = catalog("identity", &[]).unwrap();
        let t = divided_diff_first(&id, &[0.1, 0.5, 0.9]).unwrap();
        assert!(t.iter().flatten().all(|&v| (v - 1.0).abs() < 1e-14));
        let t = divided_diff_first(&res2(), &[0.0, 1.0]).unwrap();
        assert_eq!(t, vec![vec![0.25, 0.5], vec![0.5, 1.0]]);
    }

    #[test]
    fn first_table_requires_derivative() {
        let abs = catalog("abs", &[]).unwrap();
        assert!(matches!(
            divided_diff_first(&abs, &[0.1, 0.2]),
            Err(Error::DerivativeRequired(_))
        ));
    }

    #[test]
    fn second_table_examples() {
        let t = divided_diff_second(&sq(), &[0.3, -0.2, 0.9]).unwrap();
        assert!(t.iter().flatten().flatten().all(|&v| (v - 1.0).abs() < 1e-13));
        let id = catalog("identity", &[]).unwrap();
        let t = divided_diff_second(&id, &[0.3, -0.2, 0.9]).unwrap();
        assert!(t.iter().flatten().flatten().all(|&v| v.abs() < 1e-13));
        let t = divided_diff_second(&res2(), &[0.0]).unwrap();
        assert_eq!(t[0][0][0], 0.125);
    }

    #[test]
    fn second_table_is_symmetric_and_matches_resolvent_closed_form() {
        // f^[2](a,b,c) of 1/(r-x) is 1/((r-a)(r-b)(r-c))
        let l = [-0.7, -0.7 + 1e-8, 0.1, 0.4, 0.4 + 3e-7, 0.95];
        let t = divided_diff_second(&res2(), &l).unwrap();
        for i in 0..l.len() {
            for k in 0..l.len() {
                for j in 0..l.len() {
                    let exact = 1.0 / ((2.0 - l[i]) * (2.0 - l[k]) * (2.0 - l[j]));
                    assert!((t[i][k][j] - exact).abs() < 1e-7 * exact, "{i}{k}{j}");
                    assert_eq!(t[i][k][j], t[j][i][k]);
                    assert_eq!(t[i][k][j], t[k][j][i]);
                }
            }
        }
    }

    #[test]
    fn first_derivative_examples() {
        let t = HermitianMatrix::diag(&[1.0, 2.0]).unwrap();
        let h = herm(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let d = frechet_first(&sq(), &t, &h).unwrap();
        assert!(max_abs(&(d.as_matrix() - herm(&[&[0.0, 3.0], &[3.0, 0.0]]).as_matrix())) < 1e-14);

        let (t, h) = random_pair(3, 4);
        let expected = HermitianMatrix::new(t.as_matrix() * h.as_matrix() + h.as_matrix() * t.as_matrix()).unwrap();
        assert!(relative_error(&frechet_first(&sq(), &t, &h).unwrap(), &expected) < 1e-12);
        let id = catalog("identity", &[]).unwrap();
        assert!(relative_error(&frechet_first(&id, &t, &h).unwrap(), &h) < 1e-12);
    }

    #[test]
    fn second_derivative_examples() {
        let (t, h) = random_pair(4, 4);
        let expected = HermitianMatrix::new(h.as_matrix() * h.as_matrix() * crate::hermitian::c64(2.0)).unwrap();
        assert!(relative_error(&frechet_second(&sq(), &t, &h).unwrap(), &expected) < 1e-12);
        let id = catalog("identity", &[]).unwrap();
        assert!(frechet_second(&id, &t, &h).unwrap().max_abs() < 1e-12);
        let one = HermitianMatrix::scalar(1.0).unwrap();
        let zero = HermitianMatrix::scalar(0.0).unwrap();
        let d2 = frechet_second(&res2(), &zero, &one).unwrap();
        assert_eq!(d2.as_matrix()[(0, 0)].re, 0.25);
    }

    #[test]
    fn fd_oracle_on_quadratics() {
        let (t, h) = random_pair(5, 3);
        let th = HermitianMatrix::new(t.as_matrix() * h.as_matrix() + h.as_matrix() * t.as_matrix()).unwrap();
        let fd1 = fd_oracle(&sq(), &t, &h, FdOrder::First, None).unwrap();
        assert!(relative_error(&fd1, &th) < 1e-8);
        let h2 = HermitianMatrix::new(h.as_matrix() * h.as_matrix() * crate::hermitian::c64(2.0)).unwrap();
        let fd2 = fd_oracle(&sq(), &t, &h, FdOrder::Second, None).unwrap();
        assert!(relative_error(&fd2, &h2) < 1e-8);
    }

    #[test]
    fn fd_oracle_matches_resolvent_derivative() {
        let (t, h) = random_pair(6, 5);
        let exact = frechet_first(&res2(), &t, &h).unwrap();
        let fd = fd_oracle(&res2(), &t, &h, FdOrder::First, None).unwrap();
        assert!(relative_error(&exact, &fd) < 1e-6);
    }

    #[test]
    fn fd_oracle_reports_escaping_step() {
        let f = res2().restrict(&Interval::closed(-1.0, 1.0).unwrap()).unwrap();
        let t = HermitianMatrix::scalar(0.99).unwrap();
        let h = HermitianMatrix::scalar(1.0).unwrap();
        assert!(matches!(
            fd_oracle(&f, &t, &h, FdOrder::First, Some(0.1)),
            Err(Error::StepTooLarge { .. })
        ));
    }
}
