//! Finite groupoids given by explicit structure tables, validated
//! exhaustively at construction.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// A finite groupoid with `num_units` units embedded as distinguished unit
/// arrows and composition given by a partial table.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteGroupoid {
    pub num_units: u32,
    pub unit_arrows: Vec<u32>,
    pub range: Vec<u32>,
    pub source: Vec<u32>,
    pub inverse: Vec<u32>,
    comp: HashMap<(u32, u32), u32>,
    source_fibers: Vec<Vec<u32>>,
    range_fibers: Vec<Vec<u32>>,
}

impl FiniteGroupoid {
    pub fn arrow_count(&self) -> usize {
        self.range.len()
    }

    pub fn compose(&self, a: u32, b: u32) -> Option<u32> {
        self.comp.get(&(a, b)).copied()
    }

    pub fn source_fiber(&self, x: u32) -> &[u32] {
        &self.source_fibers[x as usize]
    }

    pub fn range_fiber(&self, x: u32) -> &[u32] {
        &self.range_fibers[x as usize]
    }

    /// Validate raw tables exhaustively. `compose` holds triples `(a, b, ab)`.
    pub fn from_tables(
        num_units: u32,
        unit_arrows: Vec<u32>,
        range: Vec<u32>,
        source: Vec<u32>,
        inverse: Vec<u32>,
        compose: Vec<(u32, u32, u32)>,
    ) -> Result<FiniteGroupoid> {
        let n = range.len();
        if n == 0 || n > 100_000 {
            return Err(Error::MalformedSpec(format!(
                "arrow count must be in 1..=100000, got {n}"
            )));
        }
        if source.len() != n || inverse.len() != n {
            return Err(Error::MalformedSpec(
                "range, source, inverse tables must have equal length".into(),
            ));
        }
        if unit_arrows.len() != num_units as usize {
            return Err(Error::MalformedSpec(
                "unit arrow list length differs from unit count".into(),
            ));
        }
        let arrow_ok = |a: u32| (a as usize) < n;
        if !unit_arrows.iter().all(|&a| arrow_ok(a))
            || !inverse.iter().all(|&a| arrow_ok(a))
            || !range.iter().all(|&u| u < num_units)
            || !source.iter().all(|&u| u < num_units)
        {
            return Err(Error::MalformedSpec("table entry out of range".into()));
        }
        let mut seen_units = vec![false; num_units as usize];
        for (x, &e) in unit_arrows.iter().enumerate() {
            if std::mem::replace(&mut seen_units[x], true) {
                return Err(Error::MalformedSpec("duplicate unit arrow".into()));
            }
            if range[e as usize] != x as u32 || source[e as usize] != x as u32 {
                return Err(Error::Structure {
                    reason: "unit arrow endpoints differ from its unit".into(),
                    witness: format!("unit {x}, arrow {e}"),
                });
            }
        }

        let mut comp = HashMap::with_capacity(compose.len());
        for &(a, b, c) in &compose {
            if !arrow_ok(a) || !arrow_ok(b) || !arrow_ok(c) {
                return Err(Error::MalformedSpec(format!(
                    "composition entry ({a},{b},{c}) out of range"
                )));
            }
            if comp.insert((a, b), c).is_some() {
                return Err(Error::MalformedSpec(format!(
                    "duplicate composition entry for ({a},{b})"
                )));
            }
        }

        // Composability must match the source/range relation exactly.
        for a in 0..n as u32 {
            for b in 0..n as u32 {
                let should = source[a as usize] == range[b as usize];
                match (should, comp.get(&(a, b))) {
                    (true, None) => {
                        return Err(Error::Structure {
                            reason: "missing composition for a composable pair".into(),
                            witness: format!("({a},{b})"),
                        })
                    }
                    (false, Some(_)) => {
                        return Err(Error::Structure {
                            reason: "composition defined for a non-composable pair".into(),
                            witness: format!("({a},{b})"),
                        })
                    }
                    _ => {}
                }
            }
        }

        let at = |a: u32, b: u32| comp[&(a, b)];
        for a in 0..n as u32 {
            let ia = inverse[a as usize];
            if inverse[ia as usize] != a {
                return Err(Error::Structure {
                    reason: "inverse is not an involution".into(),
                    witness: format!("arrow {a}"),
                });
            }
            if range[ia as usize] != source[a as usize] || source[ia as usize] != range[a as usize]
            {
                return Err(Error::Structure {
                    reason: "inverse does not swap range and source".into(),
                    witness: format!("arrow {a}"),
                });
            }
            let e_r = unit_arrows[range[a as usize] as usize];
            let e_s = unit_arrows[source[a as usize] as usize];
            if at(e_r, a) != a || at(a, e_s) != a {
                return Err(Error::Structure {
                    reason: "unit arrows do not act as identities".into(),
                    witness: format!("arrow {a}"),
                });
            }
            if at(a, ia) != e_r || at(ia, a) != e_s {
                return Err(Error::Structure {
                    reason: "arrow composed with its inverse is not a unit".into(),
                    witness: format!("arrow {a}"),
                });
            }
        }

        for (&(a, b), &ab) in &comp {
            if range[ab as usize] != range[a as usize] || source[ab as usize] != source[b as usize]
            {
                return Err(Error::Structure {
                    reason: "composition endpoints violate r(ab)=r(a), s(ab)=s(b)".into(),
                    witness: format!("({a},{b})"),
                });
            }
        }

        // Associativity over all composable triples.
        for (&(a, b), &ab) in &comp {
            for c in 0..n as u32 {
                if source[b as usize] == range[c as usize] {
                    let bc = at(b, c);
                    if at(ab, c) != at(a, bc) {
                        return Err(Error::Structure {
                            reason: "composition is not associative".into(),
                            witness: format!("({a},{b},{c})"),
                        });
                    }
                }
            }
        }

        let mut source_fibers = vec![Vec::new(); num_units as usize];
        let mut range_fibers = vec![Vec::new(); num_units as usize];
        for a in 0..n as u32 {
            source_fibers[source[a as usize] as usize].push(a);
            range_fibers[range[a as usize] as usize].push(a);
        }

        Ok(FiniteGroupoid {
            num_units,
            unit_arrows,
            range,
            source,
            inverse,
            comp,
            source_fibers,
            range_fibers,
        })
    }
}
