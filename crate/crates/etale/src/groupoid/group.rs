//! Group families usable as groupoid constructors and acting groups.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::error::{Error, Result};

/// A group element in normal form. The variant must match the family.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupElem {
    /// Element of a free abelian group of fixed rank.
    Z(Vec<i64>),
    /// Residue in a cyclic group.
    C(u64),
    /// Residue vector in a product of cyclic groups.
    P(Vec<u64>),
    /// Index into an explicit multiplication table.
    T(u32),
    /// Lamplighter element: finitely supported lamp configuration and shift.
    /// Lamp values are nonzero residues mod the base modulus.
    L { lamps: BTreeMap<i64, u64>, shift: i64 },
}

/// Explicit finite group given by its multiplication table.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupTable {
    pub order: u32,
    mul: Vec<u32>,
    inv: Vec<u32>,
    pub identity: u32,
    pub names: Vec<String>,
    abelian: bool,
}

impl GroupTable {
    /// Validate a raw table exhaustively: identity, inverses, associativity.
    pub fn new(mul_rows: Vec<Vec<u32>>, names: Option<Vec<String>>) -> Result<GroupTable> {
        let n = mul_rows.len();
        if n == 0 || n > 512 {
            return Err(Error::MalformedSpec(format!(
                "group table order must be in 1..=512, got {n}"
            )));
        }
        let mut mul = Vec::with_capacity(n * n);
        for row in &mul_rows {
            if row.len() != n {
                return Err(Error::MalformedSpec("group table is not square".into()));
            }
            for &v in row {
                if v as usize >= n {
                    return Err(Error::MalformedSpec(format!(
                        "group table entry {v} out of range"
                    )));
                }
                mul.push(v);
            }
        }
        let at = |a: usize, b: usize| mul[a * n + b] as usize;
        let identity = (0..n)
            .find(|&e| (0..n).all(|g| at(e, g) == g && at(g, e) == g))
            .ok_or_else(|| Error::Structure {
                reason: "group table has no identity".into(),
                witness: "all candidates fail".into(),
            })?;
        let mut inv = vec![u32::MAX; n];
        for g in 0..n {
            match (0..n).find(|&h| at(g, h) == identity && at(h, g) == identity) {
                Some(h) => inv[g] = h as u32,
                None => {
                    return Err(Error::Structure {
                        reason: "group table element has no inverse".into(),
                        witness: format!("element {g}"),
                    })
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if at(at(a, b), c) != at(a, at(b, c)) {
                        return Err(Error::Structure {
                            reason: "group table not associative".into(),
                            witness: format!("({a}*{b})*{c} != {a}*({b}*{c})"),
                        });
                    }
                }
            }
        }
        let abelian = (0..n).all(|a| (0..n).all(|b| at(a, b) == at(b, a)));
        let names = match names {
            Some(v) => {
                if v.len() != n {
                    return Err(Error::MalformedSpec(
                        "group table names length mismatch".into(),
                    ));
                }
                v
            }
            None => (0..n).map(|i| format!("g{i}")).collect(),
        };
        Ok(GroupTable {
            order: n as u32,
            mul,
            inv,
            identity: identity as u32,
            names,
            abelian,
        })
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        self.mul[a as usize * self.order as usize + b as usize]
    }

    pub fn inv(&self, a: u32) -> u32 {
        self.inv[a as usize]
    }

    pub fn name_index(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }
}

/// The supported group constructors.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupFamily {
    FreeAbelian(u32),
    Cyclic(u64),
    Product(Vec<u64>),
    Table(GroupTable),
    /// Wreath-type lamplighter `(sum over Z of Z_m) semidirect Z`.
    Lamplighter { modulus: u64 },
}

fn lamp_normalize(lamps: BTreeMap<i64, u64>, m: u64) -> BTreeMap<i64, u64> {
    lamps
        .into_iter()
        .map(|(k, v)| (k, v % m))
        .filter(|(_, v)| *v != 0)
        .collect()
}

/// Lamp configuration translated by `s`: the lamp at `i` moves to `i + s`.
fn lamp_shift(lamps: &BTreeMap<i64, u64>, s: i64) -> BTreeMap<i64, u64> {
    lamps.iter().map(|(k, v)| (k + s, *v)).collect()
}

impl GroupFamily {
    pub fn validate_spec(&self) -> Result<()> {
        match self {
            GroupFamily::FreeAbelian(d) => {
                if *d > 8 {
                    return Err(Error::MalformedSpec(format!(
                        "free abelian rank {d} exceeds the supported maximum 8"
                    )));
                }
            }
            GroupFamily::Cyclic(n) => {
                if *n == 0 || *n > 1 << 20 {
                    return Err(Error::MalformedSpec(format!("bad cyclic modulus {n}")));
                }
            }
            GroupFamily::Product(ms) => {
                if ms.is_empty() || ms.len() > 8 {
                    return Err(Error::MalformedSpec(
                        "product of cyclics needs 1..=8 factors".into(),
                    ));
                }
                for m in ms {
                    if *m == 0 || *m > 1 << 20 {
                        return Err(Error::MalformedSpec(format!("bad factor modulus {m}")));
                    }
                }
                let total: u128 = ms.iter().map(|m| *m as u128).product();
                if total > 1 << 20 {
                    return Err(Error::MalformedSpec("product group too large".into()));
                }
            }
            GroupFamily::Table(_) => {}
            GroupFamily::Lamplighter { modulus } => {
                if *modulus < 2 || *modulus > 64 {
                    return Err(Error::MalformedSpec(format!(
                        "lamplighter base modulus must be in 2..=64, got {modulus}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn identity(&self) -> GroupElem {
        match self {
            GroupFamily::FreeAbelian(d) => GroupElem::Z(vec![0; *d as usize]),
            GroupFamily::Cyclic(_) => GroupElem::C(0),
            GroupFamily::Product(ms) => GroupElem::P(vec![0; ms.len()]),
            GroupFamily::Table(t) => GroupElem::T(t.identity),
            GroupFamily::Lamplighter { .. } => GroupElem::L {
                lamps: BTreeMap::new(),
                shift: 0,
            },
        }
    }

    pub fn check_elem(&self, e: &GroupElem) -> Result<()> {
        let ok = match (self, e) {
            (GroupFamily::FreeAbelian(d), GroupElem::Z(v)) => v.len() == *d as usize,
            (GroupFamily::Cyclic(n), GroupElem::C(k)) => k < n,
            (GroupFamily::Product(ms), GroupElem::P(v)) => {
                v.len() == ms.len() && v.iter().zip(ms).all(|(k, m)| k < m)
            }
            (GroupFamily::Table(t), GroupElem::T(i)) => *i < t.order,
            (GroupFamily::Lamplighter { modulus }, GroupElem::L { lamps, .. }) => {
                lamps.values().all(|v| *v != 0 && v < modulus)
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownArrow(format!(
                "group element {e:?} does not belong to {self:?}"
            )))
        }
    }

    pub fn mul(&self, a: &GroupElem, b: &GroupElem) -> GroupElem {
        match (self, a, b) {
            (GroupFamily::FreeAbelian(_), GroupElem::Z(x), GroupElem::Z(y)) => {
                GroupElem::Z(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (GroupFamily::Cyclic(n), GroupElem::C(x), GroupElem::C(y)) => {
                GroupElem::C((x + y) % n)
            }
            (GroupFamily::Product(ms), GroupElem::P(x), GroupElem::P(y)) => GroupElem::P(
                x.iter()
                    .zip(y)
                    .zip(ms)
                    .map(|((p, q), m)| (p + q) % m)
                    .collect(),
            ),
            (GroupFamily::Table(t), GroupElem::T(x), GroupElem::T(y)) => {
                GroupElem::T(t.mul(*x, *y))
            }
            (
                GroupFamily::Lamplighter { modulus },
                GroupElem::L { lamps: l1, shift: s1 },
                GroupElem::L { lamps: l2, shift: s2 },
            ) => {
                let mut lamps = l1.clone();
                for (k, v) in lamp_shift(l2, *s1) {
                    *lamps.entry(k).or_insert(0) += v;
                }
                GroupElem::L {
                    lamps: lamp_normalize(lamps, *modulus),
                    shift: s1 + s2,
                }
            }
            _ => panic!("group element variant mismatch"),
        }
    }

    pub fn inv(&self, a: &GroupElem) -> GroupElem {
        match (self, a) {
            (GroupFamily::FreeAbelian(_), GroupElem::Z(x)) => {
                GroupElem::Z(x.iter().map(|p| -p).collect())
            }
            (GroupFamily::Cyclic(n), GroupElem::C(x)) => GroupElem::C((n - x) % n),
            (GroupFamily::Product(ms), GroupElem::P(x)) => {
                GroupElem::P(x.iter().zip(ms).map(|(p, m)| (m - p) % m).collect())
            }
            (GroupFamily::Table(t), GroupElem::T(x)) => GroupElem::T(t.inv(*x)),
            (GroupFamily::Lamplighter { modulus }, GroupElem::L { lamps, shift }) => {
                let neg: BTreeMap<i64, u64> = lamp_shift(lamps, -shift)
                    .into_iter()
                    .map(|(k, v)| (k, modulus - v))
                    .collect();
                GroupElem::L {
                    lamps: lamp_normalize(neg, *modulus),
                    shift: -shift,
                }
            }
            _ => panic!("group element variant mismatch"),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.order().is_some()
    }

    pub fn order(&self) -> Option<u64> {
        match self {
            GroupFamily::FreeAbelian(d) => (*d == 0).then_some(1),
            GroupFamily::Cyclic(n) => Some(*n),
            GroupFamily::Product(ms) => Some(ms.iter().product()),
            GroupFamily::Table(t) => Some(t.order as u64),
            GroupFamily::Lamplighter { .. } => None,
        }
    }

    pub fn is_abelian(&self) -> bool {
        match self {
            GroupFamily::FreeAbelian(_) | GroupFamily::Cyclic(_) | GroupFamily::Product(_) => true,
            GroupFamily::Table(t) => t.abelian,
            GroupFamily::Lamplighter { .. } => false,
        }
    }

    /// All elements of a finite family in a fixed deterministic order.
    pub fn elements(&self) -> Option<Vec<GroupElem>> {
        match self {
            GroupFamily::FreeAbelian(0) => Some(vec![GroupElem::Z(vec![])]),
            GroupFamily::FreeAbelian(_) => None,
            GroupFamily::Cyclic(n) => Some((0..*n).map(GroupElem::C).collect()),
            GroupFamily::Product(ms) => {
                let mut out = vec![vec![]];
                for m in ms {
                    let mut next = Vec::with_capacity(out.len() * *m as usize);
                    for prefix in &out {
                        for k in 0..*m {
                            let mut v = prefix.clone();
                            v.push(k);
                            next.push(v);
                        }
                    }
                    out = next;
                }
                Some(out.into_iter().map(GroupElem::P).collect())
            }
            GroupFamily::Table(t) => Some((0..t.order).map(GroupElem::T).collect()),
            GroupFamily::Lamplighter { .. } => None,
        }
    }

    /// Deterministic enumeration prefix of the group: all elements when
    /// finite (capped at `bound`), a word-metric ball otherwise. Returns the
    /// prefix and whether it was truncated.
    pub fn ball(&self, bound: usize) -> (Vec<GroupElem>, bool) {
        if let Some(all) = self.elements() {
            let truncated = all.len() > bound;
            let mut v = all;
            v.truncate(bound);
            return (v, truncated);
        }
        match self {
            GroupFamily::FreeAbelian(d) => {
                let d = *d as usize;
                let mut out = Vec::new();
                let mut radius: i64 = 0;
                loop {
                    let shell = chebyshev_shell(d, radius);
                    for v in shell {
                        if out.len() == bound {
                            return (out, true);
                        }
                        out.push(GroupElem::Z(v));
                    }
                    radius += 1;
                    if d == 0 {
                        return (out, bound == 0);
                    }
                }
            }
            GroupFamily::Lamplighter { modulus } => {
                let gens = {
                    let mut g = vec![
                        GroupElem::L {
                            lamps: BTreeMap::new(),
                            shift: 1,
                        },
                        GroupElem::L {
                            lamps: BTreeMap::new(),
                            shift: -1,
                        },
                        GroupElem::L {
                            lamps: [(0, 1)].into_iter().collect(),
                            shift: 0,
                        },
                    ];
                    if *modulus > 2 {
                        g.push(GroupElem::L {
                            lamps: [(0, modulus - 1)].into_iter().collect(),
                            shift: 0,
                        });
                    }
                    g
                };
                let mut seen: BTreeSet<GroupElem> = BTreeSet::new();
                let mut order: Vec<GroupElem> = Vec::new();
                let mut frontier = vec![self.identity()];
                seen.insert(self.identity());
                while !frontier.is_empty() && order.len() < bound {
                    frontier.sort();
                    let mut next = Vec::new();
                    for e in frontier {
                        if order.len() == bound {
                            break;
                        }
                        order.push(e.clone());
                        for g in &gens {
                            let h = self.mul(&e, g);
                            if seen.insert(h.clone()) {
                                next.push(h);
                            }
                        }
                    }
                    frontier = next;
                }
                (order, true)
            }
            _ => unreachable!("finite families handled above"),
        }
    }

    pub fn elem_label(&self, e: &GroupElem) -> String {
        match (self, e) {
            (GroupFamily::Table(t), GroupElem::T(i)) => t.names[*i as usize].clone(),
            (_, GroupElem::Z(v)) if v.len() == 1 => format!("{}", v[0]),
            (_, GroupElem::Z(v)) => format!("{v:?}"),
            (_, GroupElem::C(k)) => format!("{k}"),
            (_, GroupElem::P(v)) => format!("{v:?}"),
            (_, GroupElem::L { lamps, shift }) => format!("lamps{lamps:?};shift{shift}"),
            _ => format!("{e:?}"),
        }
    }

    pub fn elem_to_json(&self, e: &GroupElem) -> Value {
        match e {
            GroupElem::Z(v) if v.len() == 1 => json!({ "n": v[0] }),
            GroupElem::Z(v) => json!({ "z": v }),
            GroupElem::C(k) => json!({ "k": k }),
            GroupElem::P(v) => json!({ "prod": v }),
            GroupElem::T(i) => match self {
                GroupFamily::Table(t) => json!({ "t": t.names[*i as usize] }),
                _ => json!({ "t": i }),
            },
            GroupElem::L { lamps, shift } => {
                let m: BTreeMap<String, u64> = lamps.iter().map(|(k, v)| (k.to_string(), *v)).collect();
                json!({ "lamps": m, "shift": shift })
            }
        }
    }

    /// Parse a group element from its JSON form. `{"n": k}` is accepted as a
    /// shorthand for rank-1 free abelian and cyclic elements.
    pub fn elem_from_json(&self, v: &Value) -> Result<GroupElem> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parse(format!("group element must be an object, got {v}")))?;
        let get_i64 = |val: &Value| -> Result<i64> {
            val.as_i64()
                .ok_or_else(|| Error::Parse(format!("expected integer, got {val}")))
        };
        let e = if let Some(n) = obj.get("n") {
            let k = get_i64(n)?;
            match self {
                GroupFamily::FreeAbelian(1) => GroupElem::Z(vec![k]),
                GroupFamily::Cyclic(m) => GroupElem::C(k.rem_euclid(*m as i64) as u64),
                _ => {
                    return Err(Error::Parse(
                        "shorthand {\"n\": k} needs a rank-1 or cyclic group".into(),
                    ))
                }
            }
        } else if let Some(z) = obj.get("z") {
            let arr = z
                .as_array()
                .ok_or_else(|| Error::Parse("\"z\" must be an array".into()))?;
            GroupElem::Z(arr.iter().map(get_i64).collect::<Result<_>>()?)
        } else if let Some(k) = obj.get("k") {
            let k = get_i64(k)?;
            match self {
                GroupFamily::Cyclic(m) => GroupElem::C(k.rem_euclid(*m as i64) as u64),
                _ => return Err(Error::Parse("\"k\" element needs a cyclic group".into())),
            }
        } else if let Some(p) = obj.get("prod") {
            let arr = p
                .as_array()
                .ok_or_else(|| Error::Parse("\"prod\" must be an array".into()))?;
            match self {
                GroupFamily::Product(ms) => {
                    if arr.len() != ms.len() {
                        return Err(Error::Parse("\"prod\" arity mismatch".into()));
                    }
                    GroupElem::P(
                        arr.iter()
                            .zip(ms)
                            .map(|(x, m)| Ok(get_i64(x)?.rem_euclid(*m as i64) as u64))
                            .collect::<Result<_>>()?,
                    )
                }
                _ => return Err(Error::Parse("\"prod\" element needs a product group".into())),
            }
        } else if let Some(t) = obj.get("t") {
            match self {
                GroupFamily::Table(tab) => {
                    let idx = if let Some(name) = t.as_str() {
                        tab.name_index(name).ok_or_else(|| {
                            Error::UnknownArrow(format!("no group element named {name:?}"))
                        })?
                    } else {
                        get_i64(t)? as u32
                    };
                    GroupElem::T(idx)
                }
                _ => return Err(Error::Parse("\"t\" element needs a table group".into())),
            }
        } else if obj.contains_key("lamps") || obj.contains_key("shift") {
            let m = match self {
                GroupFamily::Lamplighter { modulus } => *modulus,
                _ => return Err(Error::Parse("lamp element needs a lamplighter group".into())),
            };
            let mut lamps = BTreeMap::new();
            if let Some(l) = obj.get("lamps") {
                let lobj = l
                    .as_object()
                    .ok_or_else(|| Error::Parse("\"lamps\" must be an object".into()))?;
                for (k, val) in lobj {
                    let pos: i64 = k
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad lamp position {k:?}")))?;
                    let v = get_i64(val)?.rem_euclid(m as i64) as u64;
                    if v != 0 {
                        lamps.insert(pos, v);
                    }
                }
            }
            let shift = obj.get("shift").map(get_i64).transpose()?.unwrap_or(0);
            GroupElem::L { lamps, shift }
        } else {
            return Err(Error::Parse(format!("unrecognized group element {v}")));
        };
        self.check_elem(&e)?;
        Ok(e)
    }
}

fn chebyshev_shell(d: usize, radius: i64) -> Vec<Vec<i64>> {
    if d == 0 {
        return if radius == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    let mut v = vec![-radius; d];
    loop {
        if v.iter().map(|x| x.abs()).max().unwrap() == radius {
            out.push(v.clone());
        }
        // Lexicographic increment over the cube [-radius, radius]^d.
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if v[i] < radius {
                v[i] += 1;
                for x in v.iter_mut().skip(i + 1) {
                    *x = -radius;
                }
                break;
            }
        }
    }
}
