//! Transformation groupoids from right actions of a group family on a finite
//! point set. Arrows are pairs (x, g) with r(x,g) = x and s(x,g) = x.g.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::snf;

use super::group::{GroupElem, GroupFamily};

/// How the action is presented: one permutation per canonical generator, or
/// a full point-by-element table (explicit table groups only).
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Perms(Vec<Vec<u32>>),
    Table(Vec<Vec<u32>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransfModel {
    pub point_names: Vec<String>,
    pub family: GroupFamily,
    action: Action,
}

fn is_permutation(p: &[u32], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &v in p {
        if v as usize >= n || std::mem::replace(&mut seen[v as usize], true) {
            return false;
        }
    }
    true
}

fn perm_compose(a: &[u32], b: &[u32]) -> Vec<u32> {
    // (a then b): x -> b[a[x]]
    a.iter().map(|&x| b[x as usize]).collect()
}

fn perm_inverse(a: &[u32]) -> Vec<u32> {
    let mut out = vec![0; a.len()];
    for (i, &v) in a.iter().enumerate() {
        out[v as usize] = i as u32;
    }
    out
}

fn perm_identity(n: usize) -> Vec<u32> {
    (0..n as u32).collect()
}

fn perm_pow(p: &[u32], k: i64) -> Vec<u32> {
    let n = p.len();
    let (mut base, mut k) = if k < 0 {
        (perm_inverse(p), (-k) as u64)
    } else {
        (p.to_vec(), k as u64)
    };
    let mut acc = perm_identity(n);
    while k > 0 {
        if k & 1 == 1 {
            acc = perm_compose(&acc, &base);
        }
        base = perm_compose(&base, &base);
        k >>= 1;
    }
    acc
}

impl TransfModel {
    pub fn new(
        point_names: Vec<String>,
        family: GroupFamily,
        action: Action,
    ) -> Result<TransfModel> {
        let n = point_names.len();
        if n == 0 || n > 4096 {
            return Err(Error::MalformedSpec(format!(
                "transformation point count must be in 1..=4096, got {n}"
            )));
        }
        {
            let mut sorted = point_names.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != n {
                return Err(Error::MalformedSpec("duplicate point names".into()));
            }
        }
        family.validate_spec()?;
        match (&family, &action) {
            (GroupFamily::Lamplighter { .. }, _) => {
                return Err(Error::UnsupportedModel(
                    "lamplighter acting groups on finite point sets are not supported".into(),
                ))
            }
            (GroupFamily::Table(t), Action::Table(rows)) => {
                if rows.len() != n {
                    return Err(Error::MalformedSpec(
                        "action table must have one row per point".into(),
                    ));
                }
                for row in rows {
                    if row.len() != t.order as usize || row.iter().any(|&x| x as usize >= n) {
                        return Err(Error::MalformedSpec("action table entry out of range".into()));
                    }
                }
                // Right action: x.e = x and (x.g).h = x.(gh), exhaustively.
                let at = |x: usize, g: u32| rows[x][g as usize] as usize;
                for x in 0..n {
                    if at(x, t.identity) != x {
                        return Err(Error::Structure {
                            reason: "action does not fix points under the identity".into(),
                            witness: format!("point {}", point_names[x]),
                        });
                    }
                    for g in 0..t.order {
                        for h in 0..t.order {
                            if at(at(x, g), h) != at(x, t.mul(g, h)) {
                                return Err(Error::Structure {
                                    reason: "action is not a right action".into(),
                                    witness: format!(
                                        "point {}, elements {g},{h}",
                                        point_names[x]
                                    ),
                                });
                            }
                        }
                    }
                }
            }
            (GroupFamily::Table(_), Action::Perms(_)) => {
                return Err(Error::MalformedSpec(
                    "table acting groups need a full action table".into(),
                ))
            }
            (fam, Action::Perms(perms)) => {
                let expected = match fam {
                    GroupFamily::FreeAbelian(d) => *d as usize,
                    GroupFamily::Cyclic(_) => 1,
                    GroupFamily::Product(ms) => ms.len(),
                    _ => unreachable!(),
                };
                if perms.len() != expected {
                    return Err(Error::MalformedSpec(format!(
                        "action needs {expected} generator permutation(s), got {}",
                        perms.len()
                    )));
                }
                for p in perms {
                    if !is_permutation(p, n) {
                        return Err(Error::MalformedSpec(
                            "action generator is not a permutation of the points".into(),
                        ));
                    }
                }
                // Commuting generators present the abelian family exactly;
                // order relations pin the finite factors.
                for (i, p) in perms.iter().enumerate() {
                    for q in perms.iter().skip(i + 1) {
                        if perm_compose(p, q) != perm_compose(q, p) {
                            return Err(Error::Structure {
                                reason: "action generators do not commute".into(),
                                witness: format!("generators {i} and later"),
                            });
                        }
                    }
                }
                match fam {
                    GroupFamily::Cyclic(m) => {
                        if perm_pow(&perms[0], *m as i64) != perm_identity(n) {
                            return Err(Error::Structure {
                                reason: "generator order does not divide the cyclic modulus".into(),
                                witness: format!("modulus {m}"),
                            });
                        }
                    }
                    GroupFamily::Product(ms) => {
                        for (i, m) in ms.iter().enumerate() {
                            if perm_pow(&perms[i], *m as i64) != perm_identity(n) {
                                return Err(Error::Structure {
                                    reason: "generator order does not divide its factor modulus"
                                        .into(),
                                    witness: format!("factor {i}, modulus {m}"),
                                });
                            }
                        }
                    }
                    GroupFamily::FreeAbelian(_) => {}
                    _ => unreachable!(),
                }
            }
            (_, Action::Table(_)) => {
                return Err(Error::MalformedSpec(
                    "full action tables are only supported for table groups".into(),
                ))
            }
        }
        Ok(TransfModel {
            point_names,
            family,
            action,
        })
    }

    pub fn point_count(&self) -> usize {
        self.point_names.len()
    }

    pub fn point_index(&self, name: &str) -> Option<u32> {
        self.point_names.iter().position(|p| p == name).map(|i| i as u32)
    }

    /// The right action x.g.
    pub fn act(&self, x: u32, g: &GroupElem) -> u32 {
        match (&self.action, g) {
            (Action::Table(rows), GroupElem::T(i)) => rows[x as usize][*i as usize],
            (Action::Perms(perms), GroupElem::C(k)) => perm_pow(&perms[0], *k as i64)[x as usize],
            (Action::Perms(perms), GroupElem::P(ks)) => {
                let mut y = x;
                for (p, k) in perms.iter().zip(ks) {
                    y = perm_pow(p, *k as i64)[y as usize];
                }
                y
            }
            (Action::Perms(perms), GroupElem::Z(ks)) => {
                let mut y = x;
                for (p, k) in perms.iter().zip(ks) {
                    y = perm_pow(p, *k)[y as usize];
                }
                y
            }
            _ => panic!("group element variant mismatch for the action"),
        }
    }

    /// Stabilizer of a point for finite acting families: the fixing elements
    /// in enumeration order.
    pub fn stabilizer_elements(&self, x: u32) -> Option<Vec<GroupElem>> {
        let all = self.family.elements()?;
        Some(all.into_iter().filter(|g| self.act(x, g) == x).collect())
    }

    /// Stabilizer lattice of a point for free abelian acting families:
    /// a basis (rows) of `{ n : x . n = x }`, a finite-index sublattice.
    pub fn stabilizer_lattice(&self, x: u32) -> Option<Vec<Vec<i64>>> {
        let d = match &self.family {
            GroupFamily::FreeAbelian(d) => *d as usize,
            _ => return None,
        };
        // BFS over the orbit, labeling each point with one representative
        // exponent vector; closing edges generate the stabilizer lattice
        // because the acting group is abelian and the orbit is finite.
        let mut label: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
        let mut relations: Vec<Vec<i64>> = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        label.insert(x, vec![0; d]);
        queue.push_back(x);
        while let Some(y) = queue.pop_front() {
            let vy = label[&y].clone();
            for i in 0..d {
                for step in [1i64, -1] {
                    let mut g = vec![0i64; d];
                    g[i] = step;
                    let z = self.act(y, &GroupElem::Z(g));
                    let mut vz = vy.clone();
                    vz[i] += step;
                    match label.get(&z) {
                        None => {
                            label.insert(z, vz);
                            queue.push_back(z);
                        }
                        Some(w) => {
                            let rel: Vec<i64> = vz.iter().zip(w).map(|(a, b)| a - b).collect();
                            if rel.iter().any(|&v| v != 0) {
                                relations.push(rel);
                            }
                        }
                    }
                }
            }
        }
        let basis = snf::lattice_basis(&relations);
        use num_traits::ToPrimitive;
        Some(
            basis
                .into_iter()
                .map(|row| row.iter().map(|v| v.to_i64().unwrap()).collect())
                .collect(),
        )
    }

    pub fn parse_action(v: &Value) -> Result<Action> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parse("action must be an object".into()))?;
        let gens = obj.get("generators");
        let table = obj.get("table");
        for key in obj.keys() {
            if key != "generators" && key != "table" {
                return Err(Error::MalformedSpec(format!("unknown action field {key:?}")));
            }
        }
        let parse_rows = |val: &Value| -> Result<Vec<Vec<u32>>> {
            val.as_array()
                .ok_or_else(|| Error::Parse("expected an array of arrays".into()))?
                .iter()
                .map(|row| {
                    row.as_array()
                        .ok_or_else(|| Error::Parse("expected an array".into()))?
                        .iter()
                        .map(|x| {
                            x.as_u64()
                                .map(|v| v as u32)
                                .ok_or_else(|| Error::Parse("expected a nonnegative index".into()))
                        })
                        .collect()
                })
                .collect()
        };
        match (gens, table) {
            (Some(g), None) => Ok(Action::Perms(parse_rows(g)?)),
            (None, Some(t)) => Ok(Action::Table(parse_rows(t)?)),
            _ => Err(Error::MalformedSpec(
                "action needs exactly one of \"generators\" or \"table\"".into(),
            )),
        }
    }

    pub fn action_to_json(&self) -> Value {
        match &self.action {
            Action::Perms(p) => serde_json::json!({ "generators": p }),
            Action::Table(t) => serde_json::json!({ "table": t }),
        }
    }
}
