//! Exact arithmetic in cyclotomic fields `Q(zeta_n)`.
//!
//! A value is a dense vector of `BigRational` coefficients in the power basis
//! `1, zeta, ..., zeta^{phi(n)-1}`, always kept reduced modulo the cyclotomic
//! polynomial `Phi_n`. Reduction makes the representation canonical, so
//! equality and the zero test are coefficient comparisons after promoting both
//! sides to a common order.
//!
//! Orders are capped at [`MAX_ORDER`]. File validation rejects inputs whose
//! phase denominators could push arithmetic past the cap, so a cap breach
//! inside the library is a bug and panics.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::phase::Phase;

/// Largest permitted cyclotomic order. `Phi_n` tables and coefficient vectors
/// are dense in the order, so this bounds memory per value.
pub const MAX_ORDER: u32 = 65_536;

pub fn euler_phi(n: u32) -> u32 {
    let mut n = n;
    let mut result = n;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            while n.is_multiple_of(p) {
                n /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

fn divisors(n: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            if d != n / d {
                out.push(n / d);
            }
        }
        d += 1;
    }
    out.sort_unstable();
    out
}

/// Exact quotient of integer polynomials, requiring the divisor to be monic
/// and the division to be exact. Coefficients ascending.
fn int_poly_div_exact(num: &[BigInt], den: &[BigInt]) -> Vec<BigInt> {
    assert!(den.last().map(|c| c.is_one()).unwrap_or(false));
    let mut rem: Vec<BigInt> = num.to_vec();
    let dd = den.len() - 1;
    let nd = num.len() - 1;
    assert!(nd >= dd);
    let mut quot = vec![BigInt::zero(); nd - dd + 1];
    for k in (dd..=nd).rev() {
        let c = rem[k].clone();
        if !c.is_zero() {
            quot[k - dd] = c.clone();
            for j in 0..=dd {
                rem[k - dd + j] -= &c * &den[j];
            }
        }
    }
    assert!(rem.iter().all(|c| c.is_zero()), "inexact polynomial division");
    quot
}

/// The `n`-th cyclotomic polynomial, coefficients ascending, monic, cached.
pub fn cyclotomic_poly(n: u32) -> Arc<Vec<BigInt>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Vec<BigInt>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(p) = guard.get(&n) {
        return Arc::clone(p);
    }
    for d in divisors(n) {
        if guard.contains_key(&d) {
            continue;
        }
        // x^d - 1 divided by the product of Phi_e over proper divisors e of d.
        let mut poly: Vec<BigInt> = vec![BigInt::zero(); d as usize + 1];
        poly[0] = BigInt::from(-1);
        poly[d as usize] = BigInt::one();
        for e in divisors(d) {
            if e == d {
                continue;
            }
            let phi_e = Arc::clone(guard.get(&e).expect("divisors visited in order"));
            poly = int_poly_div_exact(&poly, &phi_e);
        }
        guard.insert(d, Arc::new(poly));
    }
    Arc::clone(guard.get(&n).unwrap())
}

/// An element of `Q(zeta_order)` in reduced power-basis form.
#[derive(Clone)]
pub struct Cyc {
    order: u32,
    c: Vec<BigRational>,
}

fn lcm_u32(a: u32, b: u32) -> u32 {
    let g = {
        let (mut a, mut b) = (a as u64, b as u64);
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    };
    let l = a as u64 / g * b as u64;
    assert!(
        l <= MAX_ORDER as u64,
        "cyclotomic order {l} exceeds the supported maximum {MAX_ORDER}"
    );
    l as u32
}

/// Reduce a group-ring vector (exponents taken mod `order`) to the power
/// basis of degree `phi(order)`.
fn reduce(order: u32, v: Vec<BigRational>) -> Vec<BigRational> {
    let n = order as usize;
    let mut folded = vec![BigRational::zero(); n.max(1)];
    for (e, coeff) in v.into_iter().enumerate() {
        if !coeff.is_zero() {
            folded[e % n] += coeff;
        }
    }
    let phi = cyclotomic_poly(order);
    let deg = phi.len() - 1;
    for k in (deg..n).rev() {
        if folded[k].is_zero() {
            continue;
        }
        let c = std::mem::replace(&mut folded[k], BigRational::zero());
        for j in 0..deg {
            let t = &c * BigRational::from(phi[j].clone());
            folded[k - deg + j] -= t;
        }
    }
    folded.truncate(deg.max(1));
    folded.resize(deg.max(1), BigRational::zero());
    folded
}

impl Cyc {
    pub fn zero() -> Cyc {
        Cyc {
            order: 1,
            c: vec![BigRational::zero()],
        }
    }

    pub fn one() -> Cyc {
        Cyc::from_rational(BigRational::one())
    }

    pub fn i() -> Cyc {
        Cyc::root_of_unity(1, 4)
    }

    pub fn from_rational(r: BigRational) -> Cyc {
        Cyc {
            order: 1,
            c: vec![r],
        }
    }

    pub fn from_i64(k: i64) -> Cyc {
        Cyc::from_rational(BigRational::from(BigInt::from(k)))
    }

    /// `re + im * i` with rational parts.
    pub fn gaussian(re: BigRational, im: BigRational) -> Cyc {
        Cyc::from_rational(re).add(&Cyc::i().scale(&im))
    }

    /// `zeta_den^num`, reduced. Panics if `den` exceeds [`MAX_ORDER`];
    /// validated input cannot reach that.
    pub fn root_of_unity(num: i64, den: i64) -> Cyc {
        assert!(den > 0, "root of unity with nonpositive order");
        assert!(
            den <= MAX_ORDER as i64,
            "cyclotomic order {den} exceeds the supported maximum {MAX_ORDER}"
        );
        let den = den as u32;
        let e = num.rem_euclid(den as i64) as usize;
        let mut v = vec![BigRational::zero(); den as usize];
        v[e] = BigRational::one();
        Cyc {
            order: den,
            c: reduce(den, v),
        }
    }

    /// The circle value of an exact phase as a cyclotomic number.
    /// Returns `None` for float phases.
    pub fn from_phase(p: &Phase) -> Option<Cyc> {
        match p {
            Phase::Exact { num, den } => Some(Cyc::root_of_unity(*num, *den)),
            Phase::Float(_) => None,
        }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.c
    }

    /// Rewrite in `Q(zeta_m)` for a multiple `m` of the current order.
    pub fn promote(&self, m: u32) -> Cyc {
        assert!(m.is_multiple_of(self.order), "promotion target must be a multiple");
        if m == self.order {
            return self.clone();
        }
        let step = (m / self.order) as usize;
        let mut v = vec![BigRational::zero(); m as usize];
        for (k, coeff) in self.c.iter().enumerate() {
            if !coeff.is_zero() {
                v[k * step] = coeff.clone();
            }
        }
        Cyc {
            order: m,
            c: reduce(m, v),
        }
    }

    fn promoted_pair(&self, other: &Cyc) -> (Cyc, Cyc) {
        let m = lcm_u32(self.order, other.order);
        (self.promote(m), other.promote(m))
    }

    pub fn add(&self, other: &Cyc) -> Cyc {
        let (mut a, b) = self.promoted_pair(other);
        for (x, y) in a.c.iter_mut().zip(b.c.iter()) {
            *x += y;
        }
        a
    }

    pub fn sub(&self, other: &Cyc) -> Cyc {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Cyc {
        Cyc {
            order: self.order,
            c: self.c.iter().map(|x| -x).collect(),
        }
    }

    pub fn mul(&self, other: &Cyc) -> Cyc {
        let (a, b) = self.promoted_pair(other);
        let mut v = vec![BigRational::zero(); a.c.len() + b.c.len()];
        for (i, x) in a.c.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.c.iter().enumerate() {
                if !y.is_zero() {
                    v[i + j] += x * y;
                }
            }
        }
        Cyc {
            order: a.order,
            c: reduce(a.order, v),
        }
    }

    pub fn scale(&self, r: &BigRational) -> Cyc {
        Cyc {
            order: self.order,
            c: self.c.iter().map(|x| x * r).collect(),
        }
    }

    /// Complex conjugation: `zeta^k` maps to `zeta^{order-k}`.
    pub fn conj(&self) -> Cyc {
        let n = self.order as usize;
        let mut v = vec![BigRational::zero(); n.max(1)];
        for (k, coeff) in self.c.iter().enumerate() {
            if !coeff.is_zero() {
                v[(n - k) % n.max(1)] += coeff;
            }
        }
        Cyc {
            order: self.order,
            c: reduce(self.order, v),
        }
    }

    /// `|z|^2 = z * conj(z)`, a real (totally real) cyclotomic value.
    pub fn abs_sq(&self) -> Cyc {
        self.mul(&self.conj())
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    pub fn is_real(&self) -> bool {
        *self == self.conj()
    }

    /// The value as a rational if it lies in `Q`.
    pub fn as_rational(&self) -> Option<BigRational> {
        if self.c[1..].iter().all(|x| x.is_zero()) {
            Some(self.c[0].clone())
        } else {
            None
        }
    }

    pub fn to_complex(&self) -> Complex64 {
        let mut z = Complex64::new(0.0, 0.0);
        for (k, coeff) in self.c.iter().enumerate() {
            if coeff.is_zero() {
                continue;
            }
            let t = 2.0 * std::f64::consts::PI * k as f64 / self.order as f64;
            let r = coeff.to_f64().unwrap_or(f64::NAN);
            z += Complex64::new(t.cos(), t.sin()) * r;
        }
        z
    }
}

impl PartialEq for Cyc {
    fn eq(&self, other: &Cyc) -> bool {
        let (a, b) = self.promoted_pair(other);
        a.c == b.c
    }
}

impl Eq for Cyc {}

impl fmt::Debug for Cyc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cyc(order={}, {:?})", self.order, self.c)
    }
}

impl fmt::Display for Cyc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, coeff) in self.c.iter().enumerate() {
            if coeff.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if k == 0 {
                write!(f, "{coeff}")?;
            } else if k == 1 {
                write!(f, "{coeff}*z{}", self.order)?;
            } else {
                write!(f, "{coeff}*z{}^{k}", self.order)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn cyclotomic_polys_match_known_tables() {
        // Phi_1 = x - 1, Phi_2 = x + 1, Phi_4 = x^2 + 1,
        // Phi_6 = x^2 - x + 1, Phi_12 = x^4 - x^2 + 1.
        let as_i64 = |n: u32| -> Vec<i64> {
            cyclotomic_poly(n)
                .iter()
                .map(|c| c.to_i64().unwrap())
                .collect()
        };
        assert_eq!(as_i64(1), vec![-1, 1]);
        assert_eq!(as_i64(2), vec![1, 1]);
        assert_eq!(as_i64(3), vec![1, 1, 1]);
        assert_eq!(as_i64(4), vec![1, 0, 1]);
        assert_eq!(as_i64(6), vec![1, -1, 1]);
        assert_eq!(as_i64(12), vec![1, 0, -1, 0, 1]);
        assert_eq!(as_i64(105).len(), euler_phi(105) as usize + 1);
    }

    #[test]
    fn euler_phi_values() {
        assert_eq!(euler_phi(1), 1);
        assert_eq!(euler_phi(12), 4);
        assert_eq!(euler_phi(36), 12);
        assert_eq!(euler_phi(97), 96);
    }

    #[test]
    fn roots_of_unity_relations() {
        // zeta_6 = -zeta_3^2 and zeta_6^3 = -1.
        let z6 = Cyc::root_of_unity(1, 6);
        let z3 = Cyc::root_of_unity(1, 3);
        assert_eq!(z6, z3.mul(&z3).neg());
        let mut p = Cyc::one();
        for _ in 0..3 {
            p = p.mul(&z6);
        }
        assert_eq!(p, Cyc::from_i64(-1));
        // Sum of all primitive cube roots with 1 is zero.
        let s = Cyc::one().add(&z3).add(&z3.mul(&z3));
        assert!(s.is_zero());
    }

    #[test]
    fn equality_across_orders() {
        // 1/2 stored at order 12 equals 1/2 stored at order 1.
        let half12 = Cyc::from_rational(rat(1, 2)).promote(12);
        assert_eq!(half12, Cyc::from_rational(rat(1, 2)));
        // i at order 4 equals zeta_12^3.
        assert_eq!(Cyc::i(), Cyc::root_of_unity(3, 12));
    }

    #[test]
    fn conjugation_and_abs_sq() {
        let z = Cyc::gaussian(rat(3, 5), rat(-4, 5));
        assert_eq!(z.abs_sq().as_rational().unwrap(), rat(1, 1));
        let w = Cyc::root_of_unity(1, 7);
        assert_eq!(w.abs_sq().as_rational().unwrap(), rat(1, 1));
        let u = Cyc::one().add(&Cyc::root_of_unity(1, 5));
        assert!(u.abs_sq().is_real());
        assert!(u.abs_sq().as_rational().is_none());
    }

    #[test]
    fn field_axioms_spot_check() {
        let a = Cyc::root_of_unity(1, 3).scale(&rat(2, 7)).add(&Cyc::one());
        let b = Cyc::root_of_unity(1, 4).sub(&Cyc::from_rational(rat(1, 2)));
        let c = Cyc::root_of_unity(5, 6);
        let left = a.mul(&b.add(&c));
        let right = a.mul(&b).add(&a.mul(&c));
        assert_eq!(left, right);
        assert_eq!(a.mul(&b), b.mul(&a));
        assert_eq!(a.mul(&b).conj(), a.conj().mul(&b.conj()));
    }

    #[test]
    fn to_complex_agrees_with_direct_evaluation() {
        let z = Cyc::root_of_unity(1, 12);
        let w = z.to_complex();
        let t = 2.0 * std::f64::consts::PI / 12.0;
        assert!((w.re - t.cos()).abs() < 1e-14);
        assert!((w.im - t.sin()).abs() < 1e-14);
    }
}
