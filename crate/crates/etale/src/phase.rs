//! Points on the unit circle, written additively as fractions of a turn.

use std::fmt;

use num_complex::Complex64;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An angle measured in turns, reduced to `[0, 1)`.
///
/// `Exact` values are rationals in lowest terms with a positive denominator.
/// Arithmetic between exact values is exact (intermediates use `i128`, so no
/// overflow occurs for denominators up to `i64::MAX`). Any operation that
/// involves a `Float` value demotes the result to `Float`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Exact { num: i64, den: i64 },
    Float(f64),
}

fn gcd_i128(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Reduce `num/den` (den > 0) to canonical form with the numerator in `[0, den)`.
fn canonical(num: i128, den: i128) -> (i64, i64) {
    debug_assert!(den > 0);
    let num = num.rem_euclid(den);
    let g = gcd_i128(num, den).max(1);
    let (n, d) = (num / g, den / g);
    debug_assert!(n >= 0 && n < d);
    (
        i64::try_from(n).expect("phase numerator overflow"),
        i64::try_from(d).expect("phase denominator overflow"),
    )
}

impl Phase {
    pub const ZERO: Phase = Phase::Exact { num: 0, den: 1 };

    /// Exact phase `num/den` turns. Fails if `den <= 0`.
    pub fn exact(num: i64, den: i64) -> Result<Phase> {
        if den <= 0 {
            return Err(Error::Parse(format!(
                "phase denominator must be positive, got {den}"
            )));
        }
        let (num, den) = canonical(num as i128, den as i128);
        Ok(Phase::Exact { num, den })
    }

    /// Exact phase, panicking on a nonpositive denominator. For literals.
    pub fn turns(num: i64, den: i64) -> Phase {
        Phase::exact(num, den).expect("bad phase literal")
    }

    pub fn float(turns: f64) -> Phase {
        Phase::Float(turns.rem_euclid(1.0))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Phase::Exact { .. })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Phase::Exact { num, .. } => *num == 0,
            Phase::Float(t) => *t == 0.0,
        }
    }

    /// Denominator of an exact phase, `None` for floats.
    pub fn denominator(&self) -> Option<i64> {
        match self {
            Phase::Exact { den, .. } => Some(*den),
            Phase::Float(_) => None,
        }
    }

    pub fn add(self, other: Phase) -> Phase {
        match (self, other) {
            (Phase::Exact { num: a, den: p }, Phase::Exact { num: b, den: q }) => {
                let (a, p, b, q) = (a as i128, p as i128, b as i128, q as i128);
                let (num, den) = canonical(a * q + b * p, p * q);
                Phase::Exact { num, den }
            }
            _ => Phase::float(self.as_turns() + other.as_turns()),
        }
    }

    pub fn neg(self) -> Phase {
        match self {
            Phase::Exact { num, den } => {
                let (num, den) = canonical(-(num as i128), den as i128);
                Phase::Exact { num, den }
            }
            Phase::Float(t) => Phase::float(-t),
        }
    }

    pub fn sub(self, other: Phase) -> Phase {
        self.add(other.neg())
    }

    /// Complex conjugation of the circle value is negation of the angle.
    pub fn conj(self) -> Phase {
        self.neg()
    }

    /// Integer multiple of the angle.
    pub fn times(self, k: i64) -> Phase {
        match self {
            Phase::Exact { num, den } => {
                let (num, den) = canonical(num as i128 * k as i128, den as i128);
                Phase::Exact { num, den }
            }
            Phase::Float(t) => Phase::float(t * k as f64),
        }
    }

    pub fn as_turns(&self) -> f64 {
        match self {
            Phase::Exact { num, den } => *num as f64 / *den as f64,
            Phase::Float(t) => *t,
        }
    }

    /// The circle value `e^{2 pi i  (angle)}`.
    pub fn to_complex(&self) -> Complex64 {
        let t = 2.0 * std::f64::consts::PI * self.as_turns();
        Complex64::new(t.cos(), t.sin())
    }
}

impl Default for Phase {
    fn default() -> Self {
        Phase::ZERO
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Exact { num, den } => {
                if *den == 1 {
                    write!(f, "{num}")
                } else {
                    write!(f, "{num}/{den}")
                }
            }
            Phase::Float(t) => write!(f, "{t}"),
        }
    }
}

/// Parse a rational written as `"p/q"` or `"p"`.
pub fn parse_rational_str(s: &str) -> Result<(i64, i64)> {
    let s = s.trim();
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s, "1"),
    };
    let num: i64 = p
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational numerator in {s:?}")))?;
    let den: i64 = q
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational denominator in {s:?}")))?;
    if den == 0 {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(if den < 0 { (-num, -den) } else { (num, den) })
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Phase::Exact { num, den } => serializer.serialize_str(&format!("{num}/{den}")),
            Phase::Float(t) => serializer.serialize_f64(*t),
        }
    }
}

struct PhaseVisitor;

impl Visitor<'_> for PhaseVisitor {
    type Value = Phase;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a rational string \"p/q\" or a float number of turns")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Phase, E> {
        let (num, den) = parse_rational_str(v).map_err(E::custom)?;
        Phase::exact(num, den).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Phase, E> {
        Ok(Phase::float(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Phase, E> {
        Phase::exact(v, 1).map_err(E::custom)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Phase, E> {
        let v = i64::try_from(v).map_err(E::custom)?;
        Phase::exact(v, 1).map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Phase, D::Error> {
        deserializer.deserialize_any(PhaseVisitor)
    }
}
