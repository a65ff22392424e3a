//! Real polynomials, rational transfer functions, zero-order-hold
//! discretization and the stable/unstable factorization of a discrete plant.
//!
//! Coefficients are stored in ascending powers of the indeterminate, so
//! `[c0, c1, c2]` is `c0 + c1 z + c2 z^2`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold below which trailing coefficients are stripped.
pub const NORMALIZE_REL_TOL: f64 = 1e-12;

/// Default modulus margin used when classifying roots as stable.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Polynomial::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Polynomial { coeffs };
        p.normalize();
        p
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Polynomial::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `c * z^degree`
    pub fn monomial(degree: usize, c: f64) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = c;
        Polynomial::new(coeffs)
    }

    /// Monic polynomial with the given real roots.
    pub fn from_real_roots(roots: &[f64]) -> Self {
        roots.iter().fold(Polynomial::one(), |acc, &r| {
            &acc * &Polynomial::new(vec![-r, 1.0])
        })
    }

    fn normalize(&mut self) {
        if self.coeffs.is_empty() {
            self.coeffs.push(0.0);
            return;
        }
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 || !scale.is_finite() {
            if scale == 0.0 {
                self.coeffs = vec![0.0];
            }
            return;
        }
        let thresh = NORMALIZE_REL_TOL * scale;
        while self.coeffs.len() > 1 && self.coeffs.last().is_some_and(|c| c.abs() <= thresh) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `z^power`, zero beyond the degree.
    pub fn coeff(&self, power: usize) -> f64 {
        self.coeffs.get(power).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().expect("polynomial is never empty")
    }

    /// Number of zero coefficients at the low end, i.e. the power of `z` that divides it.
    pub fn z_valuation(&self) -> usize {
        if self.is_zero() {
            return 0;
        }
        self.coeffs.iter().take_while(|c| **c == 0.0).count()
    }

    pub fn scale(&self, k: f64) -> Self {
        Polynomial::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    /// Multiply by `z^k`.
    pub fn shift(&self, k: usize) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let mut coeffs = vec![0.0; k];
        coeffs.extend_from_slice(&self.coeffs);
        Polynomial::new(coeffs)
    }

    /// Divide by `z^k`, which must divide the polynomial exactly.
    pub fn unshift(&self, k: usize) -> Self {
        debug_assert!(k <= self.z_valuation() || self.is_zero());
        if self.is_zero() {
            return self.clone();
        }
        Polynomial::new(self.coeffs[k.min(self.coeffs.len() - 1)..].to_vec())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Polynomial::zero();
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Roots from the eigenvalues of the companion matrix, refined by a few
    /// Newton steps.
    pub fn roots(&self) -> Vec<Complex64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -self.coeffs[i] / lead;
        }
        let eig = companion.complex_eigenvalues();
        let deriv = self.derivative();
        eig.iter()
            .map(|z0| {
                let mut z = *z0;
                let mut best = self.eval_complex(z).norm();
                for _ in 0..8 {
                    let d = deriv.eval_complex(z);
                    if d.norm() == 0.0 {
                        break;
                    }
                    let cand = z - self.eval_complex(z) / d;
                    let val = self.eval_complex(cand).norm();
                    if val < best {
                        best = val;
                        z = cand;
                    } else {
                        break;
                    }
                }
                z
            })
            .collect()
    }

    /// Largest absolute coefficient difference relative to the larger operand.
    pub fn rel_distance(&self, other: &Polynomial) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        let scale = self.max_abs_coeff().max(other.max_abs_coeff()).max(f64::MIN_POSITIVE);
        (0..n)
            .map(|i| (self.coeff(i) - other.coeff(i)).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if *c == 0.0 && self.coeffs.len() > 1 {
                continue;
            }
            if !first {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            let a = c.abs();
            match i {
                0 => write!(f, "{a}")?,
                1 => write!(f, "{a}z")?,
                _ => write!(f, "{a}z^{i}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// Coefficient convolution. Normalizes the result.
pub fn poly_mul(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut out = vec![0.0; a.coeffs.len() + b.coeffs.len() - 1];
    for (i, x) in a.coeffs.iter().enumerate() {
        for (j, y) in b.coeffs.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    Polynomial::new(out)
}

impl<'a> Mul<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        poly_mul(self, rhs)
    }
}

impl Mul for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        poly_mul(&self, &rhs)
    }
}

impl<'a> Add<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Add for Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: Polynomial) -> Polynomial {
        &self + &rhs
    }
}

impl<'a> Sub<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Sub for Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Polynomial) -> Polynomial {
        &self - &rhs
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTime {
    Continuous,
    /// Sampling period in seconds.
    Discrete(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTf {
    pub num: Polynomial,
    pub den: Polynomial,
    pub sample_time: SampleTime,
}

impl RationalTf {
    pub fn new(num: Polynomial, den: Polynomial, sample_time: SampleTime) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DegenerateDenominator);
        }
        Ok(RationalTf {
            num,
            den,
            sample_time,
        })
    }

    pub fn continuous(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        RationalTf::new(Polynomial::new(num), Polynomial::new(den), SampleTime::Continuous)
    }

    pub fn discrete(num: Vec<f64>, den: Vec<f64>, t: f64) -> Result<Self> {
        RationalTf::new(Polynomial::new(num), Polynomial::new(den), SampleTime::Discrete(t))
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.sample_time, SampleTime::Discrete(_))
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.num.eval_complex(z) / self.den.eval_complex(z)
    }

    /// Remove the common `z^k` factor of numerator and denominator.
    pub fn cancel_z_powers(&self) -> RationalTf {
        let k = self.num.z_valuation().min(self.den.z_valuation());
        if self.num.is_zero() {
            return RationalTf {
                num: self.num.clone(),
                den: Polynomial::monomial(self.den.degree() - self.den.z_valuation(), 1.0),
                sample_time: self.sample_time,
            };
        }
        RationalTf {
            num: self.num.unshift(k),
            den: self.den.unshift(k),
            sample_time: self.sample_time,
        }
    }

    /// Scale numerator and denominator so the denominator is monic.
    pub fn monic(&self) -> RationalTf {
        let lead = self.den.leading();
        RationalTf {
            num: self.num.scale(1.0 / lead),
            den: self.den.scale(1.0 / lead),
            sample_time: self.sample_time,
        }
    }
}

impl fmt::Display for RationalTf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

/// Zero-order-hold equivalent of a continuous transfer function.
///
/// The plant is realized in controllable canonical form and the exponential
/// of the augmented matrix `[[A, B], [0, 0]] * t` yields `(Phi, Gamma)`; the
/// discrete numerator and denominator then follow from the Faddeev-LeVerrier
/// recursion on `Phi`.
pub fn zoh_discretize(plant: &RationalTf, t: f64) -> Result<RationalTf> {
    if plant.is_discrete() {
        return Err(Error::structural("zoh_discretize expects a continuous plant"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::structural("sampling time must be positive"));
    }
    let den = &plant.den;
    if den.is_zero() || den.leading() == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    let n = den.degree();
    if plant.num.degree() > n && !plant.num.is_zero() {
        return Err(Error::structural("plant is improper"));
    }
    let lead = den.leading();
    if n == 0 {
        return RationalTf::discrete(vec![plant.num.coeff(0) / lead], vec![1.0], t);
    }
    let a: Vec<f64> = (0..=n).map(|i| den.coeff(i) / lead).collect();
    let b: Vec<f64> = (0..=n).map(|i| plant.num.coeff(i) / lead).collect();
    let direct = b[n];
    let c: Vec<f64> = (0..n).map(|i| b[i] - direct * a[i]).collect();

    // augmented [[A, B], [0, 0]] scaled by t
    let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n - 1 {
        aug[(i, i + 1)] = t;
    }
    for j in 0..n {
        aug[(n - 1, j)] = -a[j] * t;
    }
    aug[(n - 1, n)] = t;
    let e = aug.exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, 1)).into_owned();

    // Faddeev-LeVerrier: char(z) = z^n + c_{n-1} z^{n-1} + ... ,
    // adj(zI - Phi) = sum_k z^{n-1-k} N_k
    let ident = DMatrix::<f64>::identity(n, n);
    let mut char_desc = vec![1.0; n + 1]; // char_desc[k] multiplies z^{n-k}
    let mut nk = ident.clone();
    let mut num_desc = vec![0.0; n]; // coefficient of z^{n-1-k}
    for k in 1..=n {
        let cvec = DMatrix::from_row_slice(1, n, &c);
        num_desc[k - 1] = (&cvec * &nk * &gamma)[(0, 0)];
        let phin = &phi * &nk;
        let ck = -phin.trace() / k as f64;
        char_desc[k] = ck;
        nk = phin + &ident * ck;
    }
    let mut den_d = vec![0.0; n + 1];
    for k in 0..=n {
        den_d[n - k] = char_desc[k];
    }
    let mut num_d = vec![0.0; n + 1];
    for k in 0..n {
        num_d[n - 1 - k] = num_desc[k];
    }
    for i in 0..=n {
        num_d[i] += direct * den_d[i];
    }
    RationalTf::discrete(num_d, den_d, t)
}

/// Factorization `P(z) = N_P / (M(z) * D_P'(z))` with `M` holding the stable
/// poles and `D_P'` the remaining ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableUnstableSplit {
    /// `M(z)`, monic, roots strictly inside the stability margin.
    pub stable_part: Polynomial,
    /// `z^r + a_{r-1} z^{r-1} + ... + a_0`.
    pub unstable_part_den: Polynomial,
    pub r: usize,
    /// Plant numerator scaled by the inverse of the denominator's leading coefficient.
    pub numerator: Polynomial,
}

impl StableUnstableSplit {
    /// Full monic denominator `M * D_P'`.
    pub fn denominator(&self) -> Polynomial {
        &self.stable_part * &self.unstable_part_den
    }

    pub fn n(&self) -> usize {
        self.stable_part.degree() + self.r
    }
}

/// Group roots into real linear and quadratic factors.
fn real_factors(roots: &[Complex64]) -> Vec<Polynomial> {
    let mut remaining: Vec<Complex64> = roots.to_vec();
    let mut out = Vec::new();
    while let Some(z) = remaining.pop() {
        let tol = 1e-9 * z.norm().max(1.0);
        if z.im.abs() <= tol {
            out.push(Polynomial::new(vec![-z.re, 1.0]));
            continue;
        }
        // nearest partner to the conjugate
        let target = z.conj();
        let (idx, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - target).norm()))
            .fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let (re, modsq) = if idx == usize::MAX {
            (z.re, z.norm_sqr())
        } else {
            let w = remaining.swap_remove(idx);
            let avg = (z + w.conj()) * 0.5;
            (avg.re, avg.norm_sqr())
        };
        out.push(Polynomial::new(vec![modsq, -2.0 * re, 1.0]));
    }
    out
}

/// Split the plant denominator by root modulus. Roots with modulus at or
/// above `1 - boundary_tol` go to the unstable part.
pub fn split_stable(plant: &RationalTf, boundary_tol: f64) -> Result<StableUnstableSplit> {
    if !plant.is_discrete() {
        return Err(Error::structural("split_stable expects a discrete plant"));
    }
    let den = &plant.den;
    let lead = den.leading();
    let roots = den.roots();
    let (stable, unstable): (Vec<Complex64>, Vec<Complex64>) = roots
        .iter()
        .partition(|z| z.norm() < 1.0 - boundary_tol);
    let m = real_factors(&stable)
        .iter()
        .fold(Polynomial::one(), |acc, f| &acc * f);
    let u = real_factors(&unstable)
        .iter()
        .fold(Polynomial::one(), |acc, f| &acc * f);
    let rebuilt = (&m * &u).scale(lead);
    let residual = rebuilt.rel_distance(den);
    if !(residual < 1e-6) {
        return Err(Error::RootFinding { residual });
    }
    Ok(StableUnstableSplit {
        r: u.degree(),
        stable_part: m,
        unstable_part_den: u,
        numerator: plant.num.scale(1.0 / lead),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec())
    }

    #[test]
    fn difference_of_squares() {
        assert_eq!(poly_mul(&p(&[1.0, 1.0]), &p(&[-1.0, 1.0])), p(&[-1.0, 0.0, 1.0]));
    }

    #[test]
    fn multiplicative_identity() {
        let a = p(&[0.3, -2.0, 5.0]);
        assert_eq!(&a * &Polynomial::one(), a);
    }

    #[test]
    fn integrator_pole_times_quadratic() {
        let (c1, c0) = (0.7, -1.3);
        let got = &p(&[-1.0, 1.0]) * &p(&[c0, c1, 1.0]);
        let want = p(&[-c0, c0 - c1, c1 - 1.0, 1.0]);
        assert!(got.rel_distance(&want) < 1e-15);
    }

    #[test]
    fn normalization_strips_trailing_noise() {
        let a = p(&[1.0, 2.0, 1e-14]);
        assert_eq!(a.degree(), 1);
        assert!(Polynomial::new(vec![0.0, 0.0]).is_zero());
        assert_eq!(Polynomial::new(vec![]).degree(), 0);
    }

    #[test]
    fn zoh_of_integrator() {
        let t = 0.02;
        let d = zoh_discretize(&RationalTf::continuous(vec![1.0], vec![0.0, 1.0]).unwrap(), t)
            .unwrap();
        assert!(d.num.rel_distance(&p(&[t])) < 1e-12);
        assert!(d.den.rel_distance(&p(&[-1.0, 1.0])) < 1e-12);
    }

    #[test]
    fn zoh_first_order_matches_analytic_formula() {
        for &(a, t) in &[(2.0, 0.1), (0.5, 1.0), (10.0, 0.01)] {
            let d = zoh_discretize(&RationalTf::continuous(vec![a], vec![a, 1.0]).unwrap(), t)
                .unwrap();
            let pole = (-a * t).exp();
            assert!((d.num.coeff(0) - (1.0 - pole)).abs() < 1e-12);
            assert_eq!(d.num.degree(), 0);
            assert!((d.den.coeff(0) + pole).abs() < 1e-12);
            assert!((d.den.coeff(1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zoh_of_constant_gain() {
        let d = zoh_discretize(&RationalTf::continuous(vec![4.0], vec![2.0]).unwrap(), 0.1).unwrap();
        assert_eq!(d.num, p(&[2.0]));
        assert_eq!(d.den, Polynomial::one());
    }

    #[test]
    fn zoh_rejects_bad_input() {
        let tf = RationalTf {
            num: p(&[1.0]),
            den: Polynomial::zero(),
            sample_time: SampleTime::Continuous,
        };
        assert_eq!(zoh_discretize(&tf, 0.1), Err(Error::DegenerateDenominator));
        let ok = RationalTf::continuous(vec![1.0], vec![1.0, 1.0]).unwrap();
        assert!(zoh_discretize(&ok, 0.0).is_err());
        let improper = RationalTf::continuous(vec![0.0, 0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(zoh_discretize(&improper, 0.1).is_err());
    }

    #[test]
    fn zoh_maps_poles_through_exponential() {
        // (s+1)(s-0.5)(s^2+0.4s+4)
        let den = &(&p(&[1.0, 1.0]) * &p(&[-0.5, 1.0])) * &p(&[4.0, 0.4, 1.0]);
        let tf = RationalTf::new(p(&[2.0, 1.0]), den.clone(), SampleTime::Continuous).unwrap();
        let t = 0.05;
        let d = zoh_discretize(&tf, t).unwrap();
        let zpoles = d.den.roots();
        for s in den.roots() {
            let mapped = (s * t).exp();
            let best = zpoles.iter().map(|z| (z - mapped).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "pole {s} maps to {mapped}, nearest miss {best}");
        }
        // DC gain is preserved by the hold equivalent
        let dc_c = tf.num.eval(0.0) / tf.den.eval(0.0);
        let dc_d = d.num.eval(1.0) / d.den.eval(1.0);
        assert!((dc_c - dc_d).abs() < 1e-9 * dc_c.abs());
    }

    #[test]
    fn split_single_unstable_pole() {
        let tf = RationalTf::discrete(vec![1.0], vec![3.0, 1.0], 1.0).unwrap();
        let s = split_stable(&tf, DEFAULT_BOUNDARY_TOL).unwrap();
        assert_eq!(s.stable_part, Polynomial::one());
        assert!(s.unstable_part_den.rel_distance(&p(&[3.0, 1.0])) < 1e-12);
        assert_eq!(s.r, 1);
    }

    #[test]
    fn split_one_root_each_side() {
        let den = &p(&[-0.5, 1.0]) * &p(&[-2.0, 1.0]);
        let tf = RationalTf::new(p(&[1.0]), den, SampleTime::Discrete(1.0)).unwrap();
        let s = split_stable(&tf, DEFAULT_BOUNDARY_TOL).unwrap();
        assert!(s.stable_part.rel_distance(&p(&[-0.5, 1.0])) < 1e-12);
        assert!(s.unstable_part_den.rel_distance(&p(&[-2.0, 1.0])) < 1e-12);
    }

    #[test]
    fn split_marginal_pole_is_unstable() {
        let den = &p(&[-1.0, 1.0]) * &p(&[0.25, 0.0, 1.0]);
        let tf = RationalTf::new(p(&[1.0]), den.scale(2.0), SampleTime::Discrete(1.0)).unwrap();
        let s = split_stable(&tf, DEFAULT_BOUNDARY_TOL).unwrap();
        assert!(s.unstable_part_den.rel_distance(&p(&[-1.0, 1.0])) < 1e-9);
        assert!(s.stable_part.rel_distance(&p(&[0.25, 0.0, 1.0])) < 1e-9);
        assert!(s.numerator.rel_distance(&p(&[0.5])) < 1e-15);
    }

    #[test]
    fn split_requires_discrete() {
        let tf = RationalTf::continuous(vec![1.0], vec![1.0, 1.0]).unwrap();
        assert!(split_stable(&tf, DEFAULT_BOUNDARY_TOL).is_err());
    }

    #[test]
    fn cancel_common_z_power() {
        let tf = RationalTf::discrete(vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 0.0, 1.0], 1.0).unwrap();
        let c = tf.cancel_z_powers();
        assert_eq!(c.num, p(&[2.0]));
        assert_eq!(c.den, p(&[0.0, 1.0]));
    }

    fn coeffs() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1..6)
    }

    proptest! {
        #[test]
        fn mul_commutes_and_associates(a in coeffs(), b in coeffs(), c in coeffs()) {
            let (a, b, c) = (p(&a), p(&b), p(&c));
            prop_assert!((&a * &b).rel_distance(&(&b * &a)) <= 1e-12);
            let l = &(&a * &b) * &c;
            let r = &a * &(&b * &c);
            prop_assert!(l.rel_distance(&r) <= 1e-12);
        }

        #[test]
        fn split_reconstructs_denominator(
            stable in prop::collection::vec(-0.95f64..0.95, 0..3),
            unstable in prop::collection::vec(1.05f64..4.0, 1..3),
            flip in any::<bool>(),
        ) {
            let unstable: Vec<f64> = unstable.iter().map(|u| if flip { -u } else { *u }).collect();
            let mut all = stable.clone();
            all.extend(&unstable);
            let den = Polynomial::from_real_roots(&all);
            let tf = RationalTf::new(p(&[1.0]), den.clone(), SampleTime::Discrete(1.0)).unwrap();
            let s = split_stable(&tf, DEFAULT_BOUNDARY_TOL).unwrap();
            prop_assert!(s.denominator().rel_distance(&den) < 1e-9);
            prop_assert_eq!(s.r, unstable.len());
            for z in s.stable_part.roots() {
                prop_assert!(z.norm() < 1.0);
            }
            for z in s.unstable_part_den.roots() {
                prop_assert!(z.norm() >= 1.0 - DEFAULT_BOUNDARY_TOL);
            }
        }
    }
}
