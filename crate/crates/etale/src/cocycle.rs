//! Normalized 2-cocycles on groupoid models: construction, validation,
//! evaluation, coboundaries, cohomology at a root-of-unity level, fiber
//! restriction, and the Mackey group of a twisted group.
//!
//! Phases are additive: a cocycle value `q` stands for `exp(2 pi i q)`. The
//! normalization `sigma(r(g), g) = 1 = sigma(g, s(g))` and the identity
//! `sigma(a,b) sigma(ab,c) = sigma(b,c) sigma(a,bc)` are checked
//! exhaustively on finite models and on a deterministic depth-bounded
//! sample otherwise.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::groupoid::group::{GroupElem, GroupFamily, GroupTable};
use crate::groupoid::{Arrow, GroupoidModel, IsotropyStructure, Unit};
use crate::phase::{parse_rational_str, Phase};
use crate::snf::{solve_linear_mod, Mat};

/// A 2-cocycle on a group family, in additive phase notation.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupCocycle {
    Trivial,
    /// `c(m, n) = m^T Theta n` on integer exponent vectors; on cyclic and
    /// product families the entries must be compatible with the factor
    /// orders so the value is independent of residue representatives.
    Bicharacter { theta: Vec<Vec<Phase>> },
    /// Dense table over a finite family, keyed by element pairs.
    Table {
        values: BTreeMap<(GroupElem, GroupElem), Phase>,
    },
}

/// A 2-cocycle on a groupoid model.
#[derive(Clone, Debug, PartialEq)]
pub enum TwoCocycle {
    Trivial,
    /// Sparse table over composable arrow pairs of a finite model; missing
    /// pairs evaluate to phase 0.
    FiniteTable {
        values: BTreeMap<(Arrow, Arrow), Phase>,
    },
    /// Bicharacter on a group model over exponent vectors.
    Bicharacter { theta: Vec<Vec<Phase>> },
    /// Pullback of a group cocycle along the anchor map:
    /// `sigma((x, g), (x.g, h)) = c(g, h)`.
    Pullback { cocycle: GroupCocycle },
}

/// A unit-normalized 1-cochain: phases on arrows, 0 on units. Missing
/// arrows evaluate to 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OneCochain {
    values: BTreeMap<Arrow, Phase>,
}

impl OneCochain {
    pub fn new(model: &GroupoidModel, values: BTreeMap<Arrow, Phase>) -> Result<OneCochain> {
        for (arrow, phase) in &values {
            model.check_arrow(arrow)?;
            if model.is_unit_arrow(arrow)? && !phase.is_zero() {
                return Err(Error::MalformedSpec(format!(
                    "1-cochain must vanish on units, got {phase} at {}",
                    model.arrow_label(arrow)
                )));
            }
        }
        Ok(OneCochain { values })
    }

    pub fn eval(&self, a: &Arrow) -> Phase {
        self.values.get(a).copied().unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Arrow, &Phase)> {
        self.values.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub pairs_checked: u64,
    pub triples_checked: u64,
    pub exhaustive: bool,
}

fn elem_vector(e: &GroupElem) -> Option<Vec<i64>> {
    match e {
        GroupElem::Z(v) => Some(v.clone()),
        GroupElem::C(k) => Some(vec![*k as i64]),
        GroupElem::P(v) => Some(v.iter().map(|&x| x as i64).collect()),
        _ => None,
    }
}

fn eval_bicharacter(theta: &[Vec<Phase>], m: &[i64], n: &[i64]) -> Phase {
    let mut acc = Phase::turns(0, 1);
    for (i, &mi) in m.iter().enumerate() {
        if mi == 0 {
            continue;
        }
        for (j, &nj) in n.iter().enumerate() {
            if nj == 0 {
                continue;
            }
            acc = acc.add(theta[i][j].times(mi).times(nj));
        }
    }
    acc
}

/// Check a bicharacter matrix against a family: square of the right size,
/// exact entries, and compatibility with cyclic factor orders.
fn check_bicharacter(theta: &[Vec<Phase>], family: &GroupFamily) -> Result<()> {
    let d = match family {
        GroupFamily::FreeAbelian(d) => *d as usize,
        GroupFamily::Cyclic(_) => 1,
        GroupFamily::Product(ms) => ms.len(),
        _ => {
            return Err(Error::IncompatibleVariant(format!(
                "bicharacters need an abelian exponent-vector family, got {family:?}"
            )))
        }
    };
    if theta.len() != d || theta.iter().any(|row| row.len() != d) {
        return Err(Error::MalformedSpec(format!(
            "bicharacter matrix must be {d}x{d} for this family"
        )));
    }
    for row in theta {
        for p in row {
            if !p.is_exact() {
                return Err(Error::MalformedSpec(
                    "bicharacter entries must be exact rationals".into(),
                ));
            }
        }
    }
    let orders: Vec<u64> = match family {
        GroupFamily::Cyclic(n) => vec![*n],
        GroupFamily::Product(ms) => ms.clone(),
        _ => return Ok(()),
    };
    for (i, &oi) in orders.iter().enumerate() {
        for (j, &oj) in orders.iter().enumerate() {
            if !theta[i][j].times(oi as i64).is_zero() || !theta[i][j].times(oj as i64).is_zero() {
                return Err(Error::MalformedSpec(format!(
                    "bicharacter entry ({i},{j}) = {} is not defined modulo the factor orders",
                    theta[i][j]
                )));
            }
        }
    }
    Ok(())
}

/// Evaluate a group cocycle; the pair is always composable.
pub fn eval_group(family: &GroupFamily, c: &GroupCocycle, g: &GroupElem, h: &GroupElem) -> Phase {
    match c {
        GroupCocycle::Trivial => Phase::turns(0, 1),
        GroupCocycle::Bicharacter { theta } => {
            let m = elem_vector(g).expect("bicharacter families have exponent vectors");
            let n = elem_vector(h).expect("bicharacter families have exponent vectors");
            eval_bicharacter(theta, &m, &n)
        }
        GroupCocycle::Table { values } => {
            let _ = family;
            values
                .get(&(g.clone(), h.clone()))
                .copied()
                .unwrap_or_default()
        }
    }
}

/// Check variant/model compatibility without evaluating anything.
pub fn check_compatibility(model: &GroupoidModel, sigma: &TwoCocycle) -> Result<()> {
    match sigma {
        TwoCocycle::Trivial => Ok(()),
        TwoCocycle::FiniteTable { values } => {
            if model.arrows().is_none() {
                return Err(Error::IncompatibleVariant(
                    "finite-table cocycles need a model with finitely many arrows".into(),
                ));
            }
            for (a, b) in values.keys() {
                model.check_arrow(a)?;
                model.check_arrow(b)?;
                if model.source(a)? != model.range(b)? {
                    return Err(Error::NotComposable {
                        left_source: model.unit_label(&model.source(a)?),
                        right_range: model.unit_label(&model.range(b)?),
                    });
                }
            }
            Ok(())
        }
        TwoCocycle::Bicharacter { theta } => match model {
            GroupoidModel::Group { family } => check_bicharacter(theta, family),
            _ => Err(Error::IncompatibleVariant(
                "bicharacter cocycles live on group models".into(),
            )),
        },
        TwoCocycle::Pullback { cocycle } => {
            let family = acting_family(model).ok_or_else(|| {
                Error::IncompatibleVariant(
                    "pullback cocycles need a group, bundle, transformation, or shift model"
                        .into(),
                )
            })?;
            match cocycle {
                GroupCocycle::Trivial => Ok(()),
                GroupCocycle::Bicharacter { theta } => check_bicharacter(theta, &family),
                GroupCocycle::Table { values } => {
                    if !family.is_finite() {
                        return Err(Error::IncompatibleVariant(
                            "table group cocycles need a finite acting group".into(),
                        ));
                    }
                    for (g, h) in values.keys() {
                        family.check_elem(g)?;
                        family.check_elem(h)?;
                    }
                    Ok(())
                }
            }
        }
    }
}

/// The group whose elements appear as arrow components, for pullbacks.
pub fn acting_family(model: &GroupoidModel) -> Option<GroupFamily> {
    match model {
        GroupoidModel::Group { family } => Some(family.clone()),
        GroupoidModel::GroupBundle { family, .. } => Some(family.clone()),
        GroupoidModel::Transf(t) => Some(t.family.clone()),
        GroupoidModel::Cyl(_) => Some(GroupFamily::FreeAbelian(1)),
        _ => None,
    }
}

fn pullback_component(a: &Arrow) -> GroupElem {
    match a {
        Arrow::Grp(g) => g.clone(),
        Arrow::Bundle { g, .. } => g.clone(),
        Arrow::Transf { g, .. } => g.clone(),
        Arrow::Cyl { shift, .. } => GroupElem::Z(vec![*shift]),
        _ => unreachable!("pullback compatibility restricts the model"),
    }
}

/// Evaluate without re-checking composability; callers guarantee
/// `s(a) = r(b)`.
pub fn eval_unchecked(model: &GroupoidModel, sigma: &TwoCocycle, a: &Arrow, b: &Arrow) -> Phase {
    match sigma {
        TwoCocycle::Trivial => Phase::turns(0, 1),
        TwoCocycle::FiniteTable { values } => values
            .get(&(a.clone(), b.clone()))
            .copied()
            .unwrap_or_default(),
        TwoCocycle::Bicharacter { theta } => {
            let (Arrow::Grp(g), Arrow::Grp(h)) = (a, b) else {
                unreachable!("bicharacter compatibility restricts the model")
            };
            let m = elem_vector(g).expect("bicharacter families have exponent vectors");
            let n = elem_vector(h).expect("bicharacter families have exponent vectors");
            eval_bicharacter(theta, &m, &n)
        }
        TwoCocycle::Pullback { cocycle } => {
            let family = acting_family(model).expect("pullback compatibility checked");
            eval_group(&family, cocycle, &pullback_component(a), &pullback_component(b))
        }
    }
}

/// Evaluate `sigma(a, b)` on a composable pair.
pub fn eval(model: &GroupoidModel, sigma: &TwoCocycle, a: &Arrow, b: &Arrow) -> Result<Phase> {
    let s = model.source(a)?;
    let r = model.range(b)?;
    if s != r {
        return Err(Error::NotComposable {
            left_source: model.unit_label(&s),
            right_range: model.unit_label(&r),
        });
    }
    Ok(eval_unchecked(model, sigma, a, b))
}

fn phases_equal(a: Phase, b: Phase) -> bool {
    if a.is_exact() && b.is_exact() {
        return a == b;
    }
    let d = (a.as_turns() - b.as_turns()).rem_euclid(1.0);
    !(1e-9..=1.0 - 1e-9).contains(&d)
}

/// Deterministic arrow sample used for depth-bounded validation on models
/// with infinitely many arrows.
fn arrow_sample(model: &GroupoidModel, depth: u32) -> Vec<Arrow> {
    if let Some(all) = model.arrows() {
        return all;
    }
    match model {
        GroupoidModel::Group { family } => {
            let (ball, _) = family.ball(8 + 2 * depth as usize);
            ball.into_iter().map(Arrow::Grp).collect()
        }
        GroupoidModel::GroupBundle { num_units, family } => {
            let (ball, _) = family.ball(8 + 2 * depth as usize);
            let mut out = Vec::new();
            for unit in 0..(*num_units).min(4) {
                out.extend(ball.iter().cloned().map(|g| Arrow::Bundle { unit, g }));
            }
            out
        }
        GroupoidModel::Transf(t) => {
            let (ball, _) = t.family.ball(8 + 2 * depth as usize);
            let mut out = Vec::new();
            for point in 0..t.point_count() as u32 {
                out.extend(ball.iter().cloned().map(|g| Arrow::Transf { point, g }));
            }
            out
        }
        GroupoidModel::Cyl(m) => {
            let d = depth.max(1) as i64;
            let mut out = Vec::new();
            for point in m.sample_points(depth.max(2) as usize, 6) {
                for shift in -d..=d {
                    out.push(Arrow::Cyl {
                        point: point.clone(),
                        shift,
                    });
                }
            }
            out
        }
        _ => unreachable!("finite models return full arrow lists"),
    }
}

/// Validate normalization and the cocycle identity: exhaustively when the
/// model has finitely many arrows, on a deterministic sample otherwise.
pub fn validate_cocycle(
    model: &GroupoidModel,
    sigma: &TwoCocycle,
    depth: u32,
) -> Result<ValidationReport> {
    check_compatibility(model, sigma)?;
    let exhaustive = model.arrows().is_some();
    let sample = arrow_sample(model, depth);

    // Normalization at both endpoints of every sampled arrow.
    let mut pairs: u64 = 0;
    for g in &sample {
        let (r, s) = model.endpoints(g)?;
        let left = eval_unchecked(model, sigma, &model.unit_arrow(&r)?, g);
        if !phases_equal(left, Phase::turns(0, 1)) {
            return Err(Error::CocycleNotNormalized {
                arrow: model.arrow_label(g),
                value: left.to_string(),
            });
        }
        let right = eval_unchecked(model, sigma, g, &model.unit_arrow(&s)?);
        if !phases_equal(right, Phase::turns(0, 1)) {
            return Err(Error::CocycleNotNormalized {
                arrow: model.arrow_label(g),
                value: right.to_string(),
            });
        }
        pairs += 2;
    }

    // Index sampled arrows by range unit to walk composable chains.
    let mut by_range: BTreeMap<Unit, Vec<&Arrow>> = BTreeMap::new();
    for a in &sample {
        by_range.entry(model.range(a)?).or_default().push(a);
    }
    let empty = Vec::new();
    let mut triples: u64 = 0;
    for a in &sample {
        let sa = model.source(a)?;
        for b in by_range.get(&sa).unwrap_or(&empty) {
            let sab = model.source(b)?;
            let ab = model.compose(a, b)?;
            let s_ab = eval_unchecked(model, sigma, a, b);
            for c in by_range.get(&sab).unwrap_or(&empty) {
                let bc = model.compose(b, c)?;
                let lhs = s_ab.add(eval_unchecked(model, sigma, &ab, c));
                let rhs = eval_unchecked(model, sigma, b, c)
                    .add(eval_unchecked(model, sigma, a, &bc));
                if !phases_equal(lhs, rhs) {
                    return Err(Error::CocycleViolation {
                        a: model.arrow_label(a),
                        b: model.arrow_label(b),
                        c: model.arrow_label(c),
                        lhs: lhs.to_string(),
                        rhs: rhs.to_string(),
                    });
                }
                triples += 1;
            }
        }
    }
    Ok(ValidationReport {
        pairs_checked: pairs,
        triples_checked: triples,
        exhaustive,
    })
}

/// The coboundary of a unit-normalized 1-cochain:
/// `sigma(a, b) = b(a) + b(b) - b(ab)`, materialized as a finite table.
pub fn coboundary_from(model: &GroupoidModel, b: &OneCochain) -> Result<TwoCocycle> {
    let arrows = model.arrows().ok_or_else(|| {
        Error::UnsupportedModel("coboundaries are materialized on finite models only".into())
    })?;
    let mut values = BTreeMap::new();
    for alpha in &arrows {
        for beta in &arrows {
            if model.source(alpha)? != model.range(beta)? {
                continue;
            }
            let ab = model.compose(alpha, beta)?;
            let phase = b.eval(alpha).add(b.eval(beta)).sub(b.eval(&ab));
            if !phase.is_zero() {
                values.insert((alpha.clone(), beta.clone()), phase);
            }
        }
    }
    if values.is_empty() {
        Ok(TwoCocycle::Trivial)
    } else {
        Ok(TwoCocycle::FiniteTable { values })
    }
}

/// Outcome of the level-`m` cohomology test on a finite group.
#[derive(Clone, Debug, PartialEq)]
pub enum CohomologyOutcome {
    /// A 1-cochain `b` with `sigma1 - sigma2 = coboundary(b)`, valued in
    /// m-th roots of unity.
    Cochain(BTreeMap<GroupElem, Phase>),
    NotCohomologousAtLevel(u64),
}

fn phase_at_level(p: Phase, m: u64) -> Result<i64> {
    match p {
        Phase::Exact { num, den } => {
            if !m.is_multiple_of(den as u64) {
                return Err(Error::IncompatibleDenominator(format!(
                    "phase {num}/{den} is not an m-th root of unity at level {m}"
                )));
            }
            Ok(num * (m as i64 / den))
        }
        Phase::Float(_) => Err(Error::IncompatibleDenominator(
            "cohomology needs exact phases".into(),
        )),
    }
}

/// Decide whether two cocycles on a finite group differ by a coboundary
/// with values in m-th roots of unity, by solving the linear system over
/// Z_m in Smith normal form.
pub fn cohomologous(
    family: &GroupFamily,
    sigma1: &GroupCocycle,
    sigma2: &GroupCocycle,
    m: u64,
) -> Result<CohomologyOutcome> {
    if m == 0 || m > 1 << 20 {
        return Err(Error::IncompatibleDenominator(format!("bad level {m}")));
    }
    let elems = family.elements().ok_or_else(|| {
        Error::UnsupportedModel("cohomology tests need a finite group".into())
    })?;
    let identity = family.identity();
    let vars: Vec<&GroupElem> = elems.iter().filter(|g| **g != identity).collect();
    let index_of = |g: &GroupElem| vars.iter().position(|v| *v == g);

    let mut rows: Vec<Vec<i64>> = Vec::new();
    let mut rhs: Vec<BigInt> = Vec::new();
    for g in &elems {
        for h in &elems {
            let d = eval_group(family, sigma1, g, h).sub(eval_group(family, sigma2, g, h));
            let target = phase_at_level(d, m)?;
            let mut row = vec![0i64; vars.len()];
            let mut bump = |e: &GroupElem, w: i64| {
                if let Some(k) = index_of(e) {
                    row[k] += w;
                }
            };
            bump(g, 1);
            bump(h, 1);
            bump(&family.mul(g, h), -1);
            rows.push(row);
            rhs.push(BigInt::from(target.rem_euclid(m as i64)));
        }
    }
    let a = Mat::from_rows(rows);
    match solve_linear_mod(&a, &rhs, m) {
        None => Ok(CohomologyOutcome::NotCohomologousAtLevel(m)),
        Some(x) => {
            let mut b = BTreeMap::new();
            use num_traits::ToPrimitive;
            for (k, g) in vars.iter().enumerate() {
                let v = x[k].to_i64().expect("solution entries are reduced mod m");
                let phase = Phase::turns(v.rem_euclid(m as i64), m as i64);
                if !phase.is_zero() {
                    b.insert((*g).clone(), phase);
                }
            }
            Ok(CohomologyOutcome::Cochain(b))
        }
    }
}

/// The Mackey group of a finite or exponent-vector group and a cocycle at
/// level m: elements (x, tau), product `(x,tau)(y,eta) = (xy, tau + eta -
/// c(x, y))` with tau in Z_m.
#[derive(Clone, Debug)]
pub struct MackeyGroup {
    pub base: GroupFamily,
    pub level: u64,
    pub cocycle: GroupCocycle,
    /// Explicit realization for finite bases: the table and the element
    /// `(x, tau)` realized by each table index.
    pub table: Option<(GroupTable, Vec<(GroupElem, u64)>)>,
}

impl MackeyGroup {
    pub fn identity(&self) -> (GroupElem, u64) {
        (self.base.identity(), 0)
    }

    pub fn mul(&self, a: &(GroupElem, u64), b: &(GroupElem, u64)) -> Result<(GroupElem, u64)> {
        let c = phase_at_level(eval_group(&self.base, &self.cocycle, &a.0, &b.0), self.level)?;
        let m = self.level as i64;
        let tau = (a.1 as i64 + b.1 as i64 - c).rem_euclid(m) as u64;
        Ok((self.base.mul(&a.0, &b.0), tau))
    }

    pub fn inv(&self, a: &(GroupElem, u64)) -> Result<(GroupElem, u64)> {
        let xinv = self.base.inv(&a.0);
        // (x, tau)(x^{-1}, eta) = (e, tau + eta - c(x, x^{-1})) = (e, 0).
        let c = phase_at_level(
            eval_group(&self.base, &self.cocycle, &a.0, &xinv),
            self.level,
        )?;
        let m = self.level as i64;
        Ok((xinv, (c - a.1 as i64).rem_euclid(m) as u64))
    }

    pub fn order(&self) -> Option<u64> {
        Some(self.base.order()? * self.level)
    }
}

/// Build the Mackey group, validating the cocycle first; finite bases get
/// an explicit validated multiplication table.
pub fn mackey_group(family: &GroupFamily, c: &GroupCocycle, m: u64) -> Result<MackeyGroup> {
    if m == 0 || m > 4096 {
        return Err(Error::IncompatibleDenominator(format!(
            "mackey level must be in 1..=4096, got {m}"
        )));
    }
    validate_group_cocycle(family, c, 3)?;
    let mut mackey = MackeyGroup {
        base: family.clone(),
        level: m,
        cocycle: c.clone(),
        table: None,
    };
    if let Some(elems) = family.elements() {
        let n = elems.len() as u64 * m;
        if n > 512 {
            return Err(Error::MalformedSpec(format!(
                "mackey table order {n} exceeds the 512 cap"
            )));
        }
        let mut members: Vec<(GroupElem, u64)> = Vec::with_capacity(n as usize);
        for g in &elems {
            for tau in 0..m {
                members.push((g.clone(), tau));
            }
        }
        let index_of = |e: &(GroupElem, u64)| {
            members
                .iter()
                .position(|f| f == e)
                .expect("products stay in the member list") as u32
        };
        let mut rows = Vec::with_capacity(members.len());
        for a in &members {
            let mut row = Vec::with_capacity(members.len());
            for b in &members {
                row.push(index_of(&mackey.mul(a, b)?));
            }
            rows.push(row);
        }
        let names = members
            .iter()
            .map(|(g, tau)| format!("({}, {tau}/{m})", family.elem_label(g)))
            .collect();
        mackey.table = Some((GroupTable::new(rows, Some(names))?, members));
    }
    Ok(mackey)
}

/// Validate a group cocycle: normalization and the 2-cocycle identity,
/// exhaustive on finite families and on a ball otherwise.
pub fn validate_group_cocycle(
    family: &GroupFamily,
    c: &GroupCocycle,
    depth: u32,
) -> Result<ValidationReport> {
    match c {
        GroupCocycle::Trivial => {}
        GroupCocycle::Bicharacter { theta } => check_bicharacter(theta, family)?,
        GroupCocycle::Table { values } => {
            let elems = family.elements().ok_or_else(|| {
                Error::IncompatibleVariant("table group cocycles need a finite group".into())
            })?;
            for g in &elems {
                for h in &elems {
                    if !values.contains_key(&(g.clone(), h.clone())) {
                        return Err(Error::MalformedSpec(format!(
                            "cocycle table misses the pair ({}, {})",
                            family.elem_label(g),
                            family.elem_label(h)
                        )));
                    }
                }
            }
        }
    }
    let (sample, truncated) = family.ball(8 + 2 * depth as usize);
    let e = family.identity();
    let mut pairs = 0u64;
    for g in &sample {
        let left = eval_group(family, c, &e, g);
        let right = eval_group(family, c, g, &e);
        if !phases_equal(left, Phase::turns(0, 1)) || !phases_equal(right, Phase::turns(0, 1)) {
            return Err(Error::CocycleNotNormalized {
                arrow: family.elem_label(g),
                value: format!("{left} / {right}"),
            });
        }
        pairs += 2;
    }
    let mut triples = 0u64;
    for g in &sample {
        for h in &sample {
            let gh = family.mul(g, h);
            let c_gh = eval_group(family, c, g, h);
            for k in &sample {
                let hk = family.mul(h, k);
                let lhs = c_gh.add(eval_group(family, c, &gh, k));
                let rhs = eval_group(family, c, h, k).add(eval_group(family, c, g, &hk));
                if !phases_equal(lhs, rhs) {
                    return Err(Error::CocycleViolation {
                        a: family.elem_label(g),
                        b: family.elem_label(h),
                        c: family.elem_label(k),
                        lhs: lhs.to_string(),
                        rhs: rhs.to_string(),
                    });
                }
                triples += 1;
            }
        }
    }
    Ok(ValidationReport {
        pairs_checked: pairs,
        triples_checked: triples,
        exhaustive: !truncated,
    })
}

/// How a materialized fiber group maps back into the model.
#[derive(Clone, Debug, PartialEq)]
pub enum FiberEmbedding {
    /// Table index k realizes this arrow id (finite explicit models).
    FiniteArrows(Vec<u32>),
    /// Table index k realizes this acting-group element at the fixed unit.
    SubgroupElems(Vec<GroupElem>),
    /// Free abelian fiber: exponent u maps to the ambient element `u . B`
    /// with basis rows B (shift fibers use the 1x1 basis [[period]]).
    LatticeBasis(Vec<Vec<i64>>),
    /// The fiber is the whole acting group.
    Whole,
    /// Trivial fiber: the identity realizes the unit arrow itself.
    UnitOnly,
}

/// The restriction of a cocycle to an isotropy fiber, materialized as a
/// group family with a cocycle of its own.
#[derive(Clone, Debug)]
pub struct FiberRestriction {
    pub family: GroupFamily,
    pub cocycle: GroupCocycle,
    pub embedding: FiberEmbedding,
    /// The unit the fiber sits over, as a label for reports.
    pub unit_label: String,
}

impl FiberRestriction {
    /// Realize a fiber element as a model arrow at the fiber's unit.
    pub fn embed(&self, model: &GroupoidModel, x: &Unit, e: &GroupElem) -> Result<Arrow> {
        match (&self.embedding, e) {
            (FiberEmbedding::FiniteArrows(ids), GroupElem::T(k)) => {
                Ok(Arrow::Finite(ids[*k as usize]))
            }
            (FiberEmbedding::SubgroupElems(elems), GroupElem::T(k)) => {
                let Unit::Idx(point) = x else {
                    return Err(Error::ModelMismatch("unit kind".into()));
                };
                Ok(Arrow::Transf {
                    point: *point,
                    g: elems[*k as usize].clone(),
                })
            }
            (FiberEmbedding::LatticeBasis(basis), GroupElem::Z(u)) => {
                let d = basis.first().map_or(0, |row| row.len());
                let mut v = vec![0i64; d];
                for (ui, row) in u.iter().zip(basis) {
                    for (vi, bij) in v.iter_mut().zip(row) {
                        *vi += ui * bij;
                    }
                }
                match (model, x) {
                    (GroupoidModel::Cyl(_), Unit::Point(p)) => Ok(Arrow::Cyl {
                        point: p.clone(),
                        shift: v[0],
                    }),
                    (GroupoidModel::Transf(_), Unit::Idx(point)) => Ok(Arrow::Transf {
                        point: *point,
                        g: GroupElem::Z(v),
                    }),
                    _ => Err(Error::ModelMismatch("lattice fiber embedding".into())),
                }
            }
            (FiberEmbedding::Whole, e) => match (model, x) {
                (GroupoidModel::Group { .. }, _) => Ok(Arrow::Grp(e.clone())),
                (GroupoidModel::GroupBundle { .. }, Unit::Idx(u)) => Ok(Arrow::Bundle {
                    unit: *u,
                    g: e.clone(),
                }),
                _ => Err(Error::ModelMismatch("whole-group fiber embedding".into())),
            },
            (FiberEmbedding::UnitOnly, GroupElem::C(0)) => model.unit_arrow(x),
            _ => Err(Error::ModelMismatch(
                "fiber element does not match the embedding".into(),
            )),
        }
    }
}

/// Restrict a validated cocycle to the isotropy group at a unit,
/// materializing the fiber as a group family with its own cocycle.
pub fn restrict_to_fiber(
    model: &GroupoidModel,
    sigma: &TwoCocycle,
    x: &Unit,
) -> Result<FiberRestriction> {
    check_compatibility(model, sigma)?;
    let report = model.isotropy_report(x, 100_000)?;
    let unit_label = model.unit_label(x);
    match report.structure {
        IsotropyStructure::Trivial => Ok(FiberRestriction {
            family: GroupFamily::Cyclic(1),
            cocycle: GroupCocycle::Trivial,
            embedding: FiberEmbedding::UnitOnly,
            unit_label,
        }),
        IsotropyStructure::ExplicitTable { table, arrow_ids } => {
            let mut values = BTreeMap::new();
            for (i, &a) in arrow_ids.iter().enumerate() {
                for (j, &b) in arrow_ids.iter().enumerate() {
                    let p = eval(model, sigma, &Arrow::Finite(a), &Arrow::Finite(b))?;
                    values.insert((GroupElem::T(i as u32), GroupElem::T(j as u32)), p);
                }
            }
            Ok(FiberRestriction {
                family: GroupFamily::Table(table),
                cocycle: GroupCocycle::Table { values },
                embedding: FiberEmbedding::FiniteArrows(arrow_ids),
                unit_label,
            })
        }
        IsotropyStructure::GroupElems { family, elems } => {
            let table = subgroup_table(&family, &elems)?;
            let point = x.idx().ok_or_else(|| Error::ModelMismatch("unit kind".into()))?;
            let mut values = BTreeMap::new();
            for (i, g) in elems.iter().enumerate() {
                for (j, h) in elems.iter().enumerate() {
                    let a = Arrow::Transf {
                        point,
                        g: g.clone(),
                    };
                    let b = Arrow::Transf {
                        point: model.source(&a)?.idx().expect("isotropy stays at the unit"),
                        g: h.clone(),
                    };
                    let p = eval(model, sigma, &a, &b)?;
                    values.insert((GroupElem::T(i as u32), GroupElem::T(j as u32)), p);
                }
            }
            Ok(FiberRestriction {
                family: GroupFamily::Table(table),
                cocycle: GroupCocycle::Table { values },
                embedding: FiberEmbedding::SubgroupElems(elems),
                unit_label,
            })
        }
        IsotropyStructure::Lattice { basis, .. } => {
            let rank = basis.len();
            let cocycle = match sigma {
                TwoCocycle::Trivial => GroupCocycle::Trivial,
                TwoCocycle::Pullback {
                    cocycle: GroupCocycle::Trivial,
                } => GroupCocycle::Trivial,
                TwoCocycle::Pullback {
                    cocycle: GroupCocycle::Bicharacter { theta },
                } => GroupCocycle::Bicharacter {
                    theta: conjugate_bicharacter(theta, &basis),
                },
                _ => {
                    return Err(Error::IncompatibleVariant(
                        "lattice fibers support trivial and bicharacter pullbacks".into(),
                    ))
                }
            };
            Ok(FiberRestriction {
                family: GroupFamily::FreeAbelian(rank as u32),
                cocycle,
                embedding: FiberEmbedding::LatticeBasis(basis),
                unit_label,
            })
        }
        IsotropyStructure::WholeGroup { family } => {
            let cocycle = match sigma {
                TwoCocycle::Trivial => GroupCocycle::Trivial,
                TwoCocycle::Bicharacter { theta } => GroupCocycle::Bicharacter {
                    theta: theta.clone(),
                },
                TwoCocycle::Pullback { cocycle } => cocycle.clone(),
                TwoCocycle::FiniteTable { .. } => {
                    // Finite group or bundle model with a table cocycle:
                    // materialize by evaluation over the elements.
                    let elems = family.elements().ok_or_else(|| {
                        Error::IncompatibleVariant(
                            "table cocycles need finite fibers to restrict".into(),
                        )
                    })?;
                    let mut values = BTreeMap::new();
                    for g in &elems {
                        for h in &elems {
                            let a = fiber_arrow(model, x, g)?;
                            let b = fiber_arrow(model, x, h)?;
                            values.insert((g.clone(), h.clone()), eval(model, sigma, &a, &b)?);
                        }
                    }
                    return Ok(FiberRestriction {
                        family: family.clone(),
                        cocycle: GroupCocycle::Table { values },
                        embedding: FiberEmbedding::Whole,
                        unit_label,
                    });
                }
            };
            Ok(FiberRestriction {
                family,
                cocycle,
                embedding: FiberEmbedding::Whole,
                unit_label,
            })
        }
    }
}

fn fiber_arrow(model: &GroupoidModel, x: &Unit, g: &GroupElem) -> Result<Arrow> {
    match (model, x) {
        (GroupoidModel::Group { .. }, _) => Ok(Arrow::Grp(g.clone())),
        (GroupoidModel::GroupBundle { .. }, Unit::Idx(u)) => Ok(Arrow::Bundle {
            unit: *u,
            g: g.clone(),
        }),
        _ => Err(Error::ModelMismatch("whole-group fibers".into())),
    }
}

/// The multiplication table of a subgroup given by its element list, with
/// indices into that list.
fn subgroup_table(family: &GroupFamily, elems: &[GroupElem]) -> Result<GroupTable> {
    let index_of = |e: &GroupElem| {
        elems
            .iter()
            .position(|f| f == e)
            .ok_or_else(|| Error::Structure {
                reason: "stabilizer element list is not closed under products".into(),
                witness: format!("{e:?}"),
            })
    };
    let mut rows = Vec::with_capacity(elems.len());
    for g in elems {
        let mut row = Vec::with_capacity(elems.len());
        for h in elems {
            row.push(index_of(&family.mul(g, h))? as u32);
        }
        rows.push(row);
    }
    let names = elems.iter().map(|e| family.elem_label(e)).collect();
    GroupTable::new(rows, Some(names))
}

/// `B Theta B^T` for a lattice basis B (rows) and bicharacter matrix Theta.
fn conjugate_bicharacter(theta: &[Vec<Phase>], basis: &[Vec<i64>]) -> Vec<Vec<Phase>> {
    let r = basis.len();
    let mut out = vec![vec![Phase::turns(0, 1); r]; r];
    for i in 0..r {
        for j in 0..r {
            let mut acc = Phase::turns(0, 1);
            for (k, &bik) in basis[i].iter().enumerate() {
                if bik == 0 {
                    continue;
                }
                for (l, &bjl) in basis[j].iter().enumerate() {
                    if bjl == 0 {
                        continue;
                    }
                    acc = acc.add(theta[k][l].times(bik).times(bjl));
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

pub const COCYCLE_FORMAT: &str = "cocycle/1";

fn parse_phase_value(v: &Value) -> Result<Phase> {
    match v {
        Value::String(s) => {
            let (num, den) = parse_rational_str(s)?;
            Phase::exact(num, den)
        }
        Value::Number(n) => Ok(Phase::float(n.as_f64().unwrap_or(0.0))),
        _ => Err(Error::Parse(format!("bad phase value {v}"))),
    }
}

fn parse_theta(v: &Value) -> Result<Vec<Vec<Phase>>> {
    v.as_array()
        .ok_or_else(|| Error::Parse("\"theta\" must be a matrix".into()))?
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| Error::Parse("theta rows must be arrays".into()))?
                .iter()
                .map(parse_phase_value)
                .collect()
        })
        .collect()
}

fn theta_to_json(theta: &[Vec<Phase>]) -> Value {
    Value::Array(
        theta
            .iter()
            .map(|row| {
                Value::Array(row.iter().map(|p| json!(p.to_string())).collect())
            })
            .collect(),
    )
}

fn check_fields(obj: &Map<String, Value>, allowed: &[&str], what: &str) -> Result<()> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::MalformedSpec(format!(
                "unknown field {key:?} in {what}"
            )));
        }
    }
    Ok(())
}

fn parse_group_cocycle(model: &GroupoidModel, v: &Value) -> Result<GroupCocycle> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse("group cocycle must be an object".into()))?;
    let variant = obj
        .get("variant")
        .and_then(|k| k.as_str())
        .ok_or_else(|| Error::MalformedSpec("group cocycle needs a \"variant\"".into()))?;
    match variant {
        "trivial" => {
            check_fields(obj, &["variant"], "trivial group cocycle")?;
            Ok(GroupCocycle::Trivial)
        }
        "bicharacter" => {
            check_fields(obj, &["variant", "theta"], "bicharacter group cocycle")?;
            let theta = parse_theta(obj.get("theta").ok_or_else(|| {
                Error::MalformedSpec("bicharacter needs a \"theta\" matrix".into())
            })?)?;
            Ok(GroupCocycle::Bicharacter { theta })
        }
        "table" => {
            check_fields(obj, &["variant", "entries"], "table group cocycle")?;
            let family = acting_family(model).ok_or_else(|| {
                Error::IncompatibleVariant("table group cocycles need an acting group".into())
            })?;
            let mut values = BTreeMap::new();
            for entry in obj
                .get("entries")
                .and_then(|e| e.as_array())
                .ok_or_else(|| Error::MalformedSpec("table cocycle needs \"entries\"".into()))?
            {
                let eo = entry
                    .as_object()
                    .ok_or_else(|| Error::Parse("entries are objects".into()))?;
                check_fields(eo, &["g", "h", "phase"], "cocycle table entry")?;
                let g = family.elem_from_json(
                    eo.get("g")
                        .ok_or_else(|| Error::Parse("entry needs \"g\"".into()))?,
                )?;
                let h = family.elem_from_json(
                    eo.get("h")
                        .ok_or_else(|| Error::Parse("entry needs \"h\"".into()))?,
                )?;
                let phase = parse_phase_value(
                    eo.get("phase")
                        .ok_or_else(|| Error::Parse("entry needs \"phase\"".into()))?,
                )?;
                values.insert((g, h), phase);
            }
            Ok(GroupCocycle::Table { values })
        }
        other => Err(Error::MalformedSpec(format!(
            "unknown group cocycle variant {other:?}"
        ))),
    }
}

fn group_cocycle_to_json(model: &GroupoidModel, c: &GroupCocycle) -> Value {
    match c {
        GroupCocycle::Trivial => json!({ "variant": "trivial" }),
        GroupCocycle::Bicharacter { theta } => json!({
            "variant": "bicharacter",
            "theta": theta_to_json(theta),
        }),
        GroupCocycle::Table { values } => {
            let family = acting_family(model).expect("table cocycles have acting groups");
            let entries: Vec<Value> = values
                .iter()
                .map(|((g, h), p)| {
                    json!({
                        "g": family.elem_to_json(g),
                        "h": family.elem_to_json(h),
                        "phase": p.to_string(),
                    })
                })
                .collect();
            json!({ "variant": "table", "entries": entries })
        }
    }
}

/// Parse a cocycle spec against a model; the result passes
/// `check_compatibility` but is not yet depth-validated.
pub fn parse_cocycle(model: &GroupoidModel, v: &Value) -> Result<TwoCocycle> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse("cocycle spec must be a JSON object".into()))?;
    let format = obj
        .get("format")
        .and_then(|f| f.as_str())
        .ok_or_else(|| Error::MalformedSpec("cocycle spec needs a \"format\" field".into()))?;
    if format != COCYCLE_FORMAT {
        return Err(Error::MalformedSpec(format!(
            "unsupported cocycle format {format:?}, expected {COCYCLE_FORMAT:?}"
        )));
    }
    let variant = obj
        .get("variant")
        .and_then(|k| k.as_str())
        .ok_or_else(|| Error::MalformedSpec("cocycle spec needs a \"variant\" field".into()))?;
    let sigma = match variant {
        "trivial" => {
            check_fields(obj, &["format", "variant"], "trivial cocycle")?;
            TwoCocycle::Trivial
        }
        "bicharacter" => {
            check_fields(obj, &["format", "variant", "theta"], "bicharacter cocycle")?;
            let theta = parse_theta(obj.get("theta").ok_or_else(|| {
                Error::MalformedSpec("bicharacter needs a \"theta\" matrix".into())
            })?)?;
            TwoCocycle::Bicharacter { theta }
        }
        "finite-table" => {
            check_fields(obj, &["format", "variant", "entries"], "finite-table cocycle")?;
            let mut values = BTreeMap::new();
            for entry in obj
                .get("entries")
                .and_then(|e| e.as_array())
                .ok_or_else(|| Error::MalformedSpec("finite-table needs \"entries\"".into()))?
            {
                let eo = entry
                    .as_object()
                    .ok_or_else(|| Error::Parse("entries are objects".into()))?;
                check_fields(eo, &["a", "b", "phase"], "cocycle table entry")?;
                let a = model.arrow_from_json(
                    eo.get("a")
                        .ok_or_else(|| Error::Parse("entry needs \"a\"".into()))?,
                )?;
                let b = model.arrow_from_json(
                    eo.get("b")
                        .ok_or_else(|| Error::Parse("entry needs \"b\"".into()))?,
                )?;
                let phase = parse_phase_value(
                    eo.get("phase")
                        .ok_or_else(|| Error::Parse("entry needs \"phase\"".into()))?,
                )?;
                values.insert((a, b), phase);
            }
            TwoCocycle::FiniteTable { values }
        }
        "pullback" => {
            check_fields(obj, &["format", "variant", "cocycle"], "pullback cocycle")?;
            let inner = parse_group_cocycle(
                model,
                obj.get("cocycle").ok_or_else(|| {
                    Error::MalformedSpec("pullback needs an inner \"cocycle\"".into())
                })?,
            )?;
            TwoCocycle::Pullback { cocycle: inner }
        }
        other => {
            return Err(Error::MalformedSpec(format!(
                "unknown cocycle variant {other:?}"
            )))
        }
    };
    check_compatibility(model, &sigma)?;
    Ok(sigma)
}

/// Canonical JSON form; `parse_cocycle` of the output reproduces the
/// cocycle.
pub fn cocycle_to_json(model: &GroupoidModel, sigma: &TwoCocycle) -> Value {
    match sigma {
        TwoCocycle::Trivial => json!({ "format": COCYCLE_FORMAT, "variant": "trivial" }),
        TwoCocycle::Bicharacter { theta } => json!({
            "format": COCYCLE_FORMAT,
            "variant": "bicharacter",
            "theta": theta_to_json(theta),
        }),
        TwoCocycle::FiniteTable { values } => {
            let entries: Vec<Value> = values
                .iter()
                .map(|((a, b), p)| {
                    json!({
                        "a": model.arrow_to_json(a),
                        "b": model.arrow_to_json(b),
                        "phase": p.to_string(),
                    })
                })
                .collect();
            json!({
                "format": COCYCLE_FORMAT,
                "variant": "finite-table",
                "entries": entries,
            })
        }
        TwoCocycle::Pullback { cocycle } => json!({
            "format": COCYCLE_FORMAT,
            "variant": "pullback",
            "cocycle": group_cocycle_to_json(model, cocycle),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupoid::cylinder::{CylModel, PeriodicWord};
    use crate::groupoid::transformation::{Action, TransfModel};

    fn pair3() -> GroupoidModel {
        GroupoidModel::Pair { n: 3 }
    }

    fn z2_model() -> GroupoidModel {
        GroupoidModel::Group {
            family: GroupFamily::FreeAbelian(2),
        }
    }

    fn quarter_theta() -> Vec<Vec<Phase>> {
        vec![
            vec![Phase::turns(0, 1), Phase::turns(1, 4)],
            vec![Phase::turns(0, 1), Phase::turns(0, 1)],
        ]
    }

    #[test]
    fn trivial_validates_everywhere() {
        for model in [
            pair3(),
            z2_model(),
            GroupoidModel::Cyl(CylModel::new(2, vec![], None).unwrap()),
        ] {
            let report = validate_cocycle(&model, &TwoCocycle::Trivial, 2).unwrap();
            assert!(report.pairs_checked > 0);
            assert!(report.triples_checked > 0);
        }
    }

    #[test]
    fn bicharacter_order_exchange() {
        let model = z2_model();
        let sigma = TwoCocycle::Bicharacter {
            theta: quarter_theta(),
        };
        validate_cocycle(&model, &sigma, 2).unwrap();
        let a = Arrow::Grp(GroupElem::Z(vec![0, 1]));
        let b = Arrow::Grp(GroupElem::Z(vec![1, 0]));
        assert_eq!(eval(&model, &sigma, &a, &b).unwrap(), Phase::turns(0, 1));
        assert_eq!(eval(&model, &sigma, &b, &a).unwrap(), Phase::turns(1, 4));
    }

    #[test]
    fn bicharacter_antisymmetrization() {
        let theta = quarter_theta();
        for m in [[2i64, -1], [0, 3], [-2, -2]] {
            for n in [[1i64, 1], [-3, 2], [4, 0]] {
                let diff = eval_bicharacter(&theta, &m, &n)
                    .sub(eval_bicharacter(&theta, &n, &m));
                // Theta - Theta^T has entries (0, 1/4; -1/4, 0).
                let expect = Phase::turns(1, 4)
                    .times(m[0])
                    .times(n[1])
                    .add(Phase::turns(-1, 4).times(m[1]).times(n[0]));
                assert_eq!(diff, expect);
            }
        }
    }

    #[test]
    fn coboundary_is_a_cocycle() {
        let model = pair3();
        let zero = coboundary_from(&model, &OneCochain::default()).unwrap();
        assert_eq!(zero, TwoCocycle::Trivial);

        let mut values = BTreeMap::new();
        values.insert(Arrow::Pair { i: 0, j: 1 }, Phase::turns(1, 3));
        values.insert(Arrow::Pair { i: 2, j: 1 }, Phase::turns(5, 12));
        values.insert(Arrow::Pair { i: 1, j: 0 }, Phase::turns(1, 2));
        let b = OneCochain::new(&model, values).unwrap();
        let sigma = coboundary_from(&model, &b).unwrap();
        let report = validate_cocycle(&model, &sigma, 1).unwrap();
        assert!(report.exhaustive);

        // Unit-normalization is enforced.
        let mut bad = BTreeMap::new();
        bad.insert(Arrow::Pair { i: 0, j: 0 }, Phase::turns(1, 2));
        assert!(OneCochain::new(&model, bad).is_err());
    }

    #[test]
    fn perturbed_table_fails_with_triple_witness() {
        let model = pair3();
        let mut values = BTreeMap::new();
        values.insert(Arrow::Pair { i: 0, j: 1 }, Phase::turns(1, 4));
        let b = OneCochain::new(&model, values).unwrap();
        let TwoCocycle::FiniteTable { mut values } = coboundary_from(&model, &b).unwrap() else {
            panic!("nonzero coboundary is a table");
        };
        // Perturb one non-normalization entry.
        let key = (Arrow::Pair { i: 2, j: 0 }, Arrow::Pair { i: 0, j: 1 });
        let old = values.get(&key).copied().unwrap_or_default();
        values.insert(key, old.add(Phase::turns(1, 2)));
        let bad = TwoCocycle::FiniteTable { values };
        match validate_cocycle(&model, &bad, 1) {
            Err(Error::CocycleViolation { .. }) => {}
            other => panic!("expected a triple witness, got {other:?}"),
        }
    }

    #[test]
    fn cohomologous_identical_and_coboundary() {
        let family = GroupFamily::Product(vec![2, 2]);
        match cohomologous(&family, &GroupCocycle::Trivial, &GroupCocycle::Trivial, 2).unwrap() {
            CohomologyOutcome::Cochain(b) => assert!(b.is_empty()),
            o => panic!("expected the zero cochain, got {o:?}"),
        }
    }

    #[test]
    fn klein_bicharacter_not_cohomologous_at_two() {
        // sigma((a,b),(c,d)) = phase bc/2 against trivial, level 2.
        let family = GroupFamily::Product(vec![2, 2]);
        let sigma = GroupCocycle::Bicharacter {
            theta: vec![
                vec![Phase::turns(0, 1), Phase::turns(0, 1)],
                vec![Phase::turns(1, 2), Phase::turns(0, 1)],
            ],
        };
        validate_group_cocycle(&family, &sigma, 2).unwrap();
        assert_eq!(
            cohomologous(&family, &sigma, &GroupCocycle::Trivial, 2).unwrap(),
            CohomologyOutcome::NotCohomologousAtLevel(2)
        );
    }

    #[test]
    fn mackey_trivial_is_direct_product() {
        let family = GroupFamily::Product(vec![2, 2]);
        let mackey = mackey_group(&family, &GroupCocycle::Trivial, 2).unwrap();
        let (table, members) = mackey.table.as_ref().unwrap();
        assert_eq!(table.order, 8);
        // Compare against the direct product Z2 x Z2 x Z2 with the matching
        // element enumeration (g, tau).
        let direct = GroupFamily::Product(vec![2, 2, 2]);
        for (i, (g, tau)) in members.iter().enumerate() {
            for (j, (h, eta)) in members.iter().enumerate() {
                let (GroupElem::P(gv), GroupElem::P(hv)) = (g, h) else {
                    panic!()
                };
                let a = GroupElem::P(vec![gv[0], gv[1], *tau]);
                let b = GroupElem::P(vec![hv[0], hv[1], *eta]);
                let prod = direct.mul(&a, &b);
                let k = table.mul(i as u32, j as u32);
                let (m, mt) = &members[k as usize];
                let GroupElem::P(mv) = m else { panic!() };
                assert_eq!(prod, GroupElem::P(vec![mv[0], mv[1], *mt]));
            }
        }
    }

    #[test]
    fn mackey_klein_twist_is_nonabelian_of_order_8() {
        let family = GroupFamily::Product(vec![2, 2]);
        let c = GroupCocycle::Bicharacter {
            theta: vec![
                vec![Phase::turns(0, 1), Phase::turns(0, 1)],
                vec![Phase::turns(1, 2), Phase::turns(0, 1)],
            ],
        };
        let mackey = mackey_group(&family, &c, 2).unwrap();
        let (table, members) = mackey.table.as_ref().unwrap();
        assert_eq!(table.order, 8);
        let mut commutes = true;
        'outer: for i in 0..8 {
            for j in 0..8 {
                if table.mul(i, j) != table.mul(j, i) {
                    commutes = false;
                    break 'outer;
                }
            }
        }
        assert!(!commutes, "twisted Klein group must be nonabelian");
        // Inverse axiom through the cocycle-aware inverse.
        for a in members {
            let inv = mackey.inv(a).unwrap();
            assert_eq!(mackey.mul(a, &inv).unwrap(), mackey.identity());
        }
    }

    #[test]
    fn restrict_pullback_to_stabilizer() {
        // Z4 acting on two points through its order-2 quotient; the
        // stabilizer of each point is {0, 2}. Pull back the bicharacter
        // c(a, b) = ab/4 on Z4.
        let t = TransfModel::new(
            vec!["a".into(), "b".into()],
            GroupFamily::Cyclic(4),
            Action::Perms(vec![vec![1, 0]]),
        )
        .unwrap();
        let model = GroupoidModel::Transf(t);
        let sigma = TwoCocycle::Pullback {
            cocycle: GroupCocycle::Bicharacter {
                theta: vec![vec![Phase::turns(1, 4)]],
            },
        };
        validate_cocycle(&model, &sigma, 2).unwrap();
        let fiber = restrict_to_fiber(&model, &sigma, &Unit::Idx(0)).unwrap();
        let GroupFamily::Table(table) = &fiber.family else {
            panic!("stabilizer fibers materialize as tables");
        };
        assert_eq!(table.order, 2);
        // Agreement with eval on embedded arrows: c'(1,1) = c(2,2) = 4/4 = 0.
        let g = GroupElem::T(1);
        let a = fiber.embed(&model, &Unit::Idx(0), &g).unwrap();
        let direct = eval(&model, &sigma, &a, &a).unwrap();
        let restricted = eval_group(&fiber.family, &fiber.cocycle, &g, &g);
        assert_eq!(direct, restricted);
        assert_eq!(restricted, Phase::turns(0, 1));
    }

    #[test]
    fn restrict_bicharacter_at_group_unit_is_itself() {
        let model = z2_model();
        let sigma = TwoCocycle::Bicharacter {
            theta: quarter_theta(),
        };
        let fiber = restrict_to_fiber(&model, &sigma, &Unit::Idx(0)).unwrap();
        assert_eq!(fiber.family, GroupFamily::FreeAbelian(2));
        assert_eq!(
            fiber.cocycle,
            GroupCocycle::Bicharacter {
                theta: quarter_theta()
            }
        );
    }

    #[test]
    fn restrict_shift_cocycle_to_period_lattice() {
        let model = GroupoidModel::Cyl(CylModel::new(2, vec![], None).unwrap());
        let sigma = TwoCocycle::Pullback {
            cocycle: GroupCocycle::Bicharacter {
                theta: vec![vec![Phase::turns(1, 3)]],
            },
        };
        validate_cocycle(&model, &sigma, 2).unwrap();
        let x = Unit::Point(PeriodicWord::new(vec![0, 1]).unwrap());
        let fiber = restrict_to_fiber(&model, &sigma, &x).unwrap();
        assert_eq!(fiber.family, GroupFamily::FreeAbelian(1));
        // Period 2: theta' = 4 * (1/3) = 4/3 = 1/3 mod 1.
        assert_eq!(
            fiber.cocycle,
            GroupCocycle::Bicharacter {
                theta: vec![vec![Phase::turns(1, 3)]]
            }
        );
        // Agreement on embedded arrows: c'(1, 1) = c(2, 2) = 4/3 mod 1.
        let g = GroupElem::Z(vec![1]);
        let a = fiber.embed(&model, &x, &g).unwrap();
        assert_eq!(
            eval(&model, &sigma, &a, &a).unwrap(),
            eval_group(&fiber.family, &fiber.cocycle, &g, &g)
        );
    }

    #[test]
    fn cocycle_spec_round_trip() {
        let model = z2_model();
        let sigma = TwoCocycle::Bicharacter {
            theta: quarter_theta(),
        };
        let v = cocycle_to_json(&model, &sigma);
        assert_eq!(parse_cocycle(&model, &v).unwrap(), sigma);

        let pair = pair3();
        let mut values = BTreeMap::new();
        values.insert(Arrow::Pair { i: 0, j: 1 }, Phase::turns(1, 3));
        let b = OneCochain::new(&pair, values).unwrap();
        let table = coboundary_from(&pair, &b).unwrap();
        let v = cocycle_to_json(&pair, &table);
        assert_eq!(parse_cocycle(&pair, &v).unwrap(), table);

        let trivial = json!({"format": "cocycle/1", "variant": "trivial"});
        assert_eq!(parse_cocycle(&pair, &trivial).unwrap(), TwoCocycle::Trivial);
        let unknown = json!({"format": "cocycle/1", "variant": "trivial", "zz": 0});
        assert!(parse_cocycle(&pair, &unknown).is_err());
        let incompatible = json!({
            "format": "cocycle/1", "variant": "bicharacter",
            "theta": [["1/4"]]
        });
        assert!(matches!(
            parse_cocycle(&pair, &incompatible),
            Err(Error::IncompatibleVariant(_))
        ));
    }

    #[test]
    fn bundle_pullback_validates() {
        let model = GroupoidModel::GroupBundle {
            num_units: 2,
            family: GroupFamily::Cyclic(2),
        };
        let mut values = BTreeMap::new();
        for a in 0..2u64 {
            for b in 0..2u64 {
                let phase = if a == 1 && b == 1 {
                    Phase::turns(1, 2)
                } else {
                    Phase::turns(0, 1)
                };
                values.insert((GroupElem::C(a), GroupElem::C(b)), phase);
            }
        }
        let sigma = TwoCocycle::Pullback {
            cocycle: GroupCocycle::Table { values },
        };
        let report = validate_cocycle(&model, &sigma, 1).unwrap();
        assert!(report.exhaustive);
    }
}
