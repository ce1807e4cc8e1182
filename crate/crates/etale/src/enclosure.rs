//! Certified interval enclosures with f64 endpoints.
//!
//! Every operation rounds outward by a few ulps, so an `Iv` produced from
//! exact rational data is a true enclosure of the exact real value under the
//! standard assumption that libm `cos` is faithfully rounded (error below two
//! ulps; arguments here are reduced to `[0, pi/2]` where that holds with a
//! wide margin).

use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::cyclo::Cyc;

/// A closed interval `[lo, hi]` guaranteed to contain the exact value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Iv {
    pub lo: f64,
    pub hi: f64,
}

fn down(x: f64, steps: u32) -> f64 {
    let mut x = x;
    for _ in 0..steps {
        x = x.next_down();
    }
    x
}

fn up(x: f64, steps: u32) -> f64 {
    let mut x = x;
    for _ in 0..steps {
        x = x.next_up();
    }
    x
}

impl Iv {
    pub const ZERO: Iv = Iv { lo: 0.0, hi: 0.0 };

    pub fn point(x: f64) -> Iv {
        Iv { lo: x, hi: x }
    }

    /// Enclose a rational. The f64 conversion is close to correctly rounded;
    /// eight ulps of outward widening absorb it safely.
    pub fn from_rational(r: &BigRational) -> Iv {
        let x = r.to_f64().expect("rational out of f64 range");
        Iv {
            lo: down(x, 8),
            hi: up(x, 8),
        }
    }

    pub fn add(self, o: Iv) -> Iv {
        Iv {
            lo: down(self.lo + o.lo, 1),
            hi: up(self.hi + o.hi, 1),
        }
    }

    pub fn neg(self) -> Iv {
        Iv {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn mul(self, o: Iv) -> Iv {
        let cands = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        let lo = cands.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Iv {
            lo: down(lo, 1),
            hi: up(hi, 1),
        }
    }

    /// Square root of a nonnegative quantity; the lower endpoint is clamped
    /// at zero so tiny negative slack from earlier widening is harmless.
    pub fn sqrt_nonneg(self) -> Iv {
        let lo = if self.lo <= 0.0 {
            0.0
        } else {
            down(self.lo.sqrt(), 1).max(0.0)
        };
        let hi = up(self.hi.max(0.0).sqrt(), 1);
        Iv { lo, hi }
    }

    pub fn max(self, o: Iv) -> Iv {
        Iv {
            lo: self.lo.max(o.lo),
            hi: self.hi.max(o.hi),
        }
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Certified enclosure of `cos(2 pi k / n)`.
///
/// The argument is reduced with exact rational symmetries to `[0, 1/4]` of a
/// turn, where the final `cos` call sees an argument in `[0, pi/2]`. The
/// accumulated argument and function error is below `2e-15`; the enclosure
/// widens by twice that.
pub fn cos_2pi_frac(k: u64, n: u64) -> Iv {
    assert!(n > 0);
    let mut a = (k % n) as u128;
    let mut b = n as u128;
    // cos(2 pi (1 - q)) = cos(2 pi q)
    if 2 * a > b {
        a = b - a;
    }
    // cos(2 pi q) = -cos(2 pi (1/2 - q)) for q in (1/4, 1/2]
    let mut sign = 1.0;
    if 4 * a > b {
        a = b - 2 * a;
        b *= 2;
        sign = -1.0;
    }
    let t = std::f64::consts::TAU * (a as f64 / b as f64);
    let c = t.cos();
    const SLACK: f64 = 4e-15;
    let iv = Iv {
        lo: (c - SLACK).max(-1.0),
        hi: (c + SLACK).min(1.0),
    };
    if sign < 0.0 {
        iv.neg()
    } else {
        iv
    }
}

/// Certified enclosure of the real part of a cyclotomic value. For a real
/// value (such as `abs_sq` of anything) this encloses the value itself.
pub fn real_interval(z: &Cyc) -> Iv {
    let n = z.order() as u64;
    let mut acc = Iv::ZERO;
    for (k, coeff) in z.coeffs().iter().enumerate() {
        if num_traits::Zero::is_zero(coeff) {
            continue;
        }
        acc = acc.add(Iv::from_rational(coeff).mul(cos_2pi_frac(k as u64, n)));
    }
    acc
}

/// Certified enclosure of `|z|`.
pub fn abs_interval(z: &Cyc) -> Iv {
    real_interval(&z.abs_sq()).sqrt_nonneg()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn cos_special_angles() {
        assert!(cos_2pi_frac(0, 1).contains(1.0));
        assert!(cos_2pi_frac(1, 2).contains(-1.0));
        assert!(cos_2pi_frac(1, 4).contains(0.0));
        assert!(cos_2pi_frac(1, 3).contains(-0.5));
        assert!(cos_2pi_frac(1, 6).contains(0.5));
        let c12 = cos_2pi_frac(1, 12);
        assert!(c12.contains(0.75f64.sqrt()));
        assert!(c12.width() < 1e-13);
    }

    #[test]
    fn interval_arithmetic_encloses() {
        let a = Iv::from_rational(&rat(1, 3));
        let b = Iv::from_rational(&rat(1, 7));
        let s = a.add(b);
        assert!(s.contains(1.0 / 3.0 + 1.0 / 7.0));
        let p = a.mul(b);
        assert!(p.contains(1.0 / 21.0));
        assert!(p.width() < 1e-15);
    }

    #[test]
    fn sqrt_of_two_enclosure() {
        let two = Iv::from_rational(&rat(2, 1));
        let r = two.sqrt_nonneg();
        assert!(r.contains(std::f64::consts::SQRT_2));
        assert!(r.lo * r.lo <= 2.0 && 2.0 <= up(r.hi * r.hi, 2));
    }

    #[test]
    fn abs_of_root_of_unity_is_one() {
        for n in [3u32, 5, 7, 12] {
            let z = Cyc::root_of_unity(1, n as i64);
            let iv = abs_interval(&z);
            assert!(iv.contains(1.0), "order {n}: {iv:?}");
            assert!(iv.width() < 1e-12);
        }
    }

    #[test]
    fn abs_of_one_plus_i() {
        let z = Cyc::gaussian(rat(1, 1), rat(1, 1));
        let iv = abs_interval(&z);
        assert!(iv.contains(std::f64::consts::SQRT_2));
    }
}
