//! Scalar coefficients: exact cyclotomic numbers or complex floats.
//!
//! Exact coefficients stay exact under every ring operation. Any operation
//! mixing an exact value with a float demotes the result to a float, and
//! nothing ever silently promotes a float back to exact.

use std::fmt;

use num_complex::Complex64;
use num_rational::BigRational;

use crate::cyclo::Cyc;
use crate::enclosure::{self, Iv};
use crate::phase::Phase;

#[derive(Clone, Debug, PartialEq)]
pub enum Coeff {
    Exact(Cyc),
    Float(Complex64),
}

impl Coeff {
    pub fn zero() -> Coeff {
        Coeff::Exact(Cyc::zero())
    }

    pub fn one() -> Coeff {
        Coeff::Exact(Cyc::one())
    }

    pub fn from_rational(r: BigRational) -> Coeff {
        Coeff::Exact(Cyc::from_rational(r))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Coeff::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coeff::Exact(z) => z.is_zero(),
            Coeff::Float(z) => z.re == 0.0 && z.im == 0.0,
        }
    }

    pub fn to_complex(&self) -> Complex64 {
        match self {
            Coeff::Exact(z) => z.to_complex(),
            Coeff::Float(z) => *z,
        }
    }

    pub fn add(&self, other: &Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Exact(a), Coeff::Exact(b)) => Coeff::Exact(a.add(b)),
            _ => Coeff::Float(self.to_complex() + other.to_complex()),
        }
    }

    pub fn mul(&self, other: &Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Exact(a), Coeff::Exact(b)) => Coeff::Exact(a.mul(b)),
            _ => Coeff::Float(self.to_complex() * other.to_complex()),
        }
    }

    pub fn neg(&self) -> Coeff {
        match self {
            Coeff::Exact(a) => Coeff::Exact(a.neg()),
            Coeff::Float(z) => Coeff::Float(-z),
        }
    }

    pub fn conj(&self) -> Coeff {
        match self {
            Coeff::Exact(a) => Coeff::Exact(a.conj()),
            Coeff::Float(z) => Coeff::Float(z.conj()),
        }
    }

    /// Multiply by a circle value. Exact coefficient with exact phase stays
    /// exact; everything else goes through floats.
    pub fn rotate(&self, p: &Phase) -> Coeff {
        if p.is_zero() {
            return self.clone();
        }
        match (self, Cyc::from_phase(p)) {
            (Coeff::Exact(a), Some(w)) => Coeff::Exact(a.mul(&w)),
            _ => Coeff::Float(self.to_complex() * p.to_complex()),
        }
    }

    /// Deterministic float modulus. The exact branch evaluates the canonical
    /// reduced form of `|z|^2`, so conjugate coefficients (whose `|z|^2`
    /// forms are identical) produce bit-identical results.
    pub fn abs_f64(&self) -> f64 {
        match self {
            Coeff::Exact(z) => z.abs_sq().to_complex().re.max(0.0).sqrt(),
            Coeff::Float(z) => (z.re * z.re + z.im * z.im).sqrt(),
        }
    }

    /// Certified enclosure of `|z|` for exact coefficients, a degenerate
    /// point interval for floats.
    pub fn abs_interval(&self) -> Iv {
        match self {
            Coeff::Exact(z) => enclosure::abs_interval(z),
            Coeff::Float(z) => Iv::point((z.re * z.re + z.im * z.im).sqrt()),
        }
    }

    /// Exact `|z|^2` when the coefficient is exact.
    pub fn abs_sq_exact(&self) -> Option<Cyc> {
        match self {
            Coeff::Exact(z) => Some(z.abs_sq()),
            Coeff::Float(_) => None,
        }
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coeff::Exact(z) => write!(f, "{z}"),
            Coeff::Float(z) => write!(f, "{}+{}i", z.re, z.im),
        }
    }
}
