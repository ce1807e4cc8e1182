//! Finitely supported elements of the twisted convolution algebra:
//! construction, convolution, involution, the I-norm, the interior
//! embedding, fiber restriction, and the unit-space action.
//!
//! Support keys are either single arrows or, on shift models, arrow
//! bundles (a window constraint plus a shift). Bundle terms denote the
//! indicator of their cylinder set; window composition is symbolic, with
//! conflicting meets dropped as exact zeroes and hull overflows raised as
//! errors. Norm maximization over bundle supports searches for periodic
//! witness points; a window whose cylinder contains only aperiodic points
//! past the search cap is treated as unrealized.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Map, Value};

use crate::cocycle::{self, eval_group, FiberEmbedding, TwoCocycle};
use crate::coeff::Coeff;
use crate::cyclo::Cyc;
use crate::enclosure::Iv;
use crate::error::{Error, Result};
use crate::groupoid::cylinder::{self, translate, ArrowBundle, Window};
use crate::groupoid::group::{GroupElem, GroupFamily};
use crate::groupoid::{Arrow, BundleDesc, GroupoidModel, InteriorVerdict, Unit};
use crate::phase::{parse_rational_str, Phase};

/// One support entry: a single arrow or a shift-model arrow bundle.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SupportKey {
    A(Arrow),
    B(ArrowBundle),
}

/// A finitely supported function on arrows with complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    model: GroupoidModel,
    support: BTreeMap<SupportKey, Coeff>,
}

fn bundle_span(w: &Window) -> i64 {
    match (w.keys().next(), w.keys().next_back()) {
        (Some(lo), Some(hi)) => hi - lo + 1,
        _ => 0,
    }
}

fn check_bundle(model: &GroupoidModel, b: &ArrowBundle) -> Result<()> {
    let GroupoidModel::Cyl(m) = model else {
        return Err(Error::BundleIncompatible(
            "bundle-supported terms exist only on shift models".into(),
        ));
    };
    m.check_window_bounds(&b.window)?;
    Ok(())
}

impl Element {
    pub fn new(model: GroupoidModel, terms: Vec<(SupportKey, Coeff)>) -> Result<Element> {
        let mut support: BTreeMap<SupportKey, Coeff> = BTreeMap::new();
        for (key, coeff) in terms {
            match &key {
                SupportKey::A(a) => model.check_arrow(a)?,
                SupportKey::B(b) => check_bundle(&model, b)?,
            }
            let entry = support.entry(key).or_insert_with(Coeff::zero);
            *entry = entry.add(&coeff);
        }
        support.retain(|_, c| !c.is_zero());
        Ok(Element { model, support })
    }

    pub fn zero(model: GroupoidModel) -> Element {
        Element {
            model,
            support: BTreeMap::new(),
        }
    }

    pub fn delta(model: GroupoidModel, arrow: Arrow, coeff: Coeff) -> Result<Element> {
        Element::new(model, vec![(SupportKey::A(arrow), coeff)])
    }

    pub fn model(&self) -> &GroupoidModel {
        &self.model
    }

    pub fn terms(&self) -> impl Iterator<Item = (&SupportKey, &Coeff)> {
        self.support.iter()
    }

    pub fn coeff(&self, key: &SupportKey) -> Coeff {
        self.support.get(key).cloned().unwrap_or_else(Coeff::zero)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.support.values().all(Coeff::is_exact)
    }

    /// The coefficient assigned to a single arrow, with bundle terms
    /// contributing on shift models when the arrow's point matches.
    pub fn eval_arrow(&self, a: &Arrow) -> Coeff {
        let mut acc = self
            .support
            .get(&SupportKey::A(a.clone()))
            .cloned()
            .unwrap_or_else(Coeff::zero);
        if let (GroupoidModel::Cyl(m), Arrow::Cyl { point, shift }) = (&self.model, a) {
            for (key, c) in &self.support {
                if let SupportKey::B(b) = key {
                    if b.shift == *shift && m.point_in_window(point, &b.window) {
                        acc = acc.add(c);
                    }
                }
            }
        }
        acc
    }

    fn same_model(&self, other: &Element) -> Result<()> {
        if self.model != other.model {
            return Err(Error::ModelMismatch(
                "elements live over different models".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Element) -> Result<Element> {
        self.same_model(other)?;
        let mut support = self.support.clone();
        for (key, coeff) in &other.support {
            let entry = support.entry(key.clone()).or_insert_with(Coeff::zero);
            *entry = entry.add(coeff);
        }
        support.retain(|_, c| !c.is_zero());
        Ok(Element {
            model: self.model.clone(),
            support,
        })
    }

    pub fn scale(&self, by: &Coeff) -> Element {
        let mut support: BTreeMap<SupportKey, Coeff> = self
            .support
            .iter()
            .map(|(k, c)| (k.clone(), c.mul(by)))
            .collect();
        support.retain(|_, c| !c.is_zero());
        Element {
            model: self.model.clone(),
            support,
        }
    }

    pub fn neg(&self) -> Element {
        Element {
            model: self.model.clone(),
            support: self
                .support
                .iter()
                .map(|(k, c)| (k.clone(), c.neg()))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Element) -> Result<Element> {
        self.add(&other.neg())
    }
}

/// The shift component of a bundle or shift arrow, as a rank-1 vector.
fn shift_elem(n: i64) -> GroupElem {
    GroupElem::Z(vec![n])
}

/// Cocycle value on a pair of bundles; pullback cocycles over the shift
/// depend only on the shifts, so the value is constant on the bundles.
fn bundle_cocycle(sigma: &TwoCocycle, m: i64, n: i64) -> Phase {
    match sigma {
        TwoCocycle::Trivial => Phase::turns(0, 1),
        TwoCocycle::Pullback { cocycle } => eval_group(
            &GroupFamily::FreeAbelian(1),
            cocycle,
            &shift_elem(m),
            &shift_elem(n),
        ),
        _ => unreachable!("compatibility restricts shift-model cocycles"),
    }
}

/// Compose two bundles: meet the left window with the right window
/// translated by the left shift. `None` means the cylinders are disjoint
/// and the product term vanishes exactly.
fn compose_bundles(
    model: &GroupoidModel,
    left: &ArrowBundle,
    right: &ArrowBundle,
) -> Result<Option<ArrowBundle>> {
    let GroupoidModel::Cyl(m) = model else {
        unreachable!("bundles only live on shift models")
    };
    let Some(window) = cylinder::meet(&left.window, &translate(&right.window, left.shift)) else {
        return Ok(None);
    };
    if bundle_span(&window) > m.max_window {
        return Err(Error::BundleIncompatible(format!(
            "composed window spans {} positions, past the configured bound {}",
            bundle_span(&window),
            m.max_window
        )));
    }
    Ok(Some(ArrowBundle {
        window,
        shift: left.shift + right.shift,
    }))
}

/// Products of one bundle key with one arrow key on a shift model; the
/// point side pins the composite to a single arrow or kills it.
fn compose_mixed(
    model: &GroupoidModel,
    left: &SupportKey,
    right: &SupportKey,
) -> Result<Option<(SupportKey, Phase)>> {
    let GroupoidModel::Cyl(m) = model else {
        unreachable!("mixed composition only on shift models")
    };
    match (left, right) {
        (SupportKey::A(Arrow::Cyl { point, shift }), SupportKey::B(b)) => {
            // (x, n) (y, k) needs y = shift^n(x).
            let y = point.shifted(*shift);
            if !m.point_in_window(&y, &b.window) {
                return Ok(None);
            }
            Ok(Some((
                SupportKey::A(Arrow::Cyl {
                    point: point.clone(),
                    shift: shift + b.shift,
                }),
                Phase::turns(0, 1),
            )))
        }
        (SupportKey::B(b), SupportKey::A(Arrow::Cyl { point, shift })) => {
            // (x, n) (y, k) with y fixed pins x = shift^{-n}(y).
            let x = point.shifted(-b.shift);
            if !m.point_in_window(&x, &b.window) {
                return Ok(None);
            }
            Ok(Some((
                SupportKey::A(Arrow::Cyl {
                    point: x,
                    shift: b.shift + shift,
                }),
                Phase::turns(0, 1),
            )))
        }
        _ => unreachable!("one side is a bundle"),
    }
}

/// Twisted convolution: `(f * g)(c) = sum over ab = c of f(a) g(b)
/// sigma(a, b)`, looped over support pairs.
pub fn convolve(sigma: &TwoCocycle, f: &Element, g: &Element) -> Result<Element> {
    f.same_model(g)?;
    let model = &f.model;
    cocycle::check_compatibility(model, sigma)?;
    let mut out: BTreeMap<SupportKey, Coeff> = BTreeMap::new();
    let mut accumulate = |key: SupportKey, c: Coeff| {
        let entry = out.entry(key).or_insert_with(Coeff::zero);
        *entry = entry.add(&c);
    };
    for (kl, cl) in &f.support {
        for (kr, cr) in &g.support {
            match (kl, kr) {
                (SupportKey::A(a), SupportKey::A(b)) => {
                    if model.source(a)? != model.range(b)? {
                        continue;
                    }
                    let phase = cocycle::eval_unchecked(model, sigma, a, b);
                    accumulate(
                        SupportKey::A(model.compose(a, b)?),
                        cl.mul(cr).rotate(&phase),
                    );
                }
                (SupportKey::B(bl), SupportKey::B(br)) => {
                    if let Some(prod) = compose_bundles(model, bl, br)? {
                        let phase = bundle_cocycle(sigma, bl.shift, br.shift);
                        accumulate(SupportKey::B(prod), cl.mul(cr).rotate(&phase));
                    }
                }
                _ => {
                    if let Some((key, _)) = compose_mixed(model, kl, kr)? {
                        let (m, n) = match (kl, kr) {
                            (SupportKey::A(Arrow::Cyl { shift, .. }), SupportKey::B(b)) => {
                                (*shift, b.shift)
                            }
                            (SupportKey::B(b), SupportKey::A(Arrow::Cyl { shift, .. })) => {
                                (b.shift, *shift)
                            }
                            _ => unreachable!(),
                        };
                        let phase = bundle_cocycle(sigma, m, n);
                        accumulate(key, cl.mul(cr).rotate(&phase));
                    }
                }
            }
        }
    }
    out.retain(|_, c| !c.is_zero());
    Ok(Element {
        model: model.clone(),
        support: out,
    })
}

/// Twisted involution: `f*(c) = conj(sigma(c^{-1}, c)) conj(f(c^{-1}))`.
pub fn involve(sigma: &TwoCocycle, f: &Element) -> Result<Element> {
    let model = &f.model;
    cocycle::check_compatibility(model, sigma)?;
    let mut out: BTreeMap<SupportKey, Coeff> = BTreeMap::new();
    for (key, c) in &f.support {
        let (inv_key, phase) = match key {
            SupportKey::A(a) => {
                let inv = model.invert(a)?;
                let phase = cocycle::eval_unchecked(model, sigma, a, &inv);
                (SupportKey::A(inv), phase)
            }
            SupportKey::B(b) => {
                let inv = ArrowBundle {
                    window: translate(&b.window, -b.shift),
                    shift: -b.shift,
                };
                (SupportKey::B(inv), bundle_cocycle(sigma, b.shift, -b.shift))
            }
        };
        let entry = out.entry(inv_key).or_insert_with(Coeff::zero);
        *entry = entry.add(&c.conj().rotate(&phase.neg()));
    }
    out.retain(|_, c| !c.is_zero());
    Ok(Element {
        model: model.clone(),
        support: out,
    })
}

fn sorted_sum(mut vals: Vec<f64>) -> f64 {
    vals.sort_by(|a, b| a.partial_cmp(b).expect("absolute values are finite"));
    vals.iter().sum()
}

/// Period cap for witness searches over a window: residues are injective
/// once the period covers the hull, so a modest slack suffices.
fn witness_cap(w: &Window) -> usize {
    (bundle_span(w).max(1) as usize + 8).min(24)
}

impl Element {
    /// `max(sum over the source fiber at x of |f|, same over the range
    /// fiber)`, evaluated exactly at the given unit.
    pub fn fiber_sum(&self, x: &Unit) -> Result<f64> {
        self.model.check_unit(x)?;
        let mut source = Vec::new();
        let mut range = Vec::new();
        for (key, c) in &self.support {
            let a = c.abs_f64();
            match key {
                SupportKey::A(arrow) => {
                    if self.model.range(arrow)? == *x {
                        range.push(a);
                    }
                    if self.model.source(arrow)? == *x {
                        source.push(a);
                    }
                }
                SupportKey::B(b) => {
                    let GroupoidModel::Cyl(m) = &self.model else {
                        unreachable!()
                    };
                    let Unit::Point(p) = x else { unreachable!() };
                    if m.point_in_window(p, &b.window) {
                        range.push(a);
                    }
                    if m.point_in_window(p, &translate(&b.window, -b.shift)) {
                        source.push(a);
                    }
                }
            }
        }
        Ok(sorted_sum(source).max(sorted_sum(range)))
    }

    /// Units where the norm maximum can occur: endpoints of arrow terms,
    /// plus periodic witnesses of every consistent meet of bundle windows
    /// (taken separately for range windows and shift-translated source
    /// windows).
    fn norm_candidates(&self) -> Result<Vec<Unit>> {
        let mut units = Vec::new();
        let mut range_windows = Vec::new();
        let mut source_windows = Vec::new();
        for key in self.support.keys() {
            match key {
                SupportKey::A(arrow) => {
                    units.push(self.model.range(arrow)?);
                    units.push(self.model.source(arrow)?);
                }
                SupportKey::B(b) => {
                    range_windows.push(b.window.clone());
                    source_windows.push(translate(&b.window, -b.shift));
                }
            }
        }
        if let GroupoidModel::Cyl(m) = &self.model {
            for windows in [range_windows, source_windows] {
                let mut stack: Vec<(usize, Window)> = vec![(0, Window::new())];
                while let Some((i, meet)) = stack.pop() {
                    if i == windows.len() {
                        if let Some(p) = m.search_point(&meet, None, witness_cap(&meet)) {
                            units.push(Unit::Point(p));
                        }
                        continue;
                    }
                    stack.push((i + 1, meet.clone()));
                    if let Some(joined) = cylinder::meet(&meet, &windows[i]) {
                        stack.push((i + 1, joined));
                    }
                }
            }
        }
        units.sort();
        units.dedup();
        Ok(units)
    }

    /// `sup` over units of the fiber sum: exact on finite models, exact by
    /// witness maximization on shift models with bundle support.
    pub fn i_norm(&self) -> f64 {
        let candidates = self.norm_candidates().expect("support arrows are valid");
        candidates
            .iter()
            .map(|x| self.fiber_sum(x).expect("candidate units are valid"))
            .fold(0.0, f64::max)
    }

    /// Certified enclosure of the I-norm for exact coefficients.
    pub fn i_norm_interval(&self) -> Iv {
        let candidates = self.norm_candidates().expect("support arrows are valid");
        let mut best = Iv::ZERO;
        for x in &candidates {
            let mut source = Iv::ZERO;
            let mut range = Iv::ZERO;
            for (key, c) in &self.support {
                let a = c.abs_interval();
                let (in_range, in_source) = self.membership(key, x);
                if in_range {
                    range = range.add(a);
                }
                if in_source {
                    source = source.add(a);
                }
            }
            best = best.max(source.max(range));
        }
        best
    }

    fn membership(&self, key: &SupportKey, x: &Unit) -> (bool, bool) {
        match key {
            SupportKey::A(arrow) => (
                self.model.range(arrow).map(|r| r == *x).unwrap_or(false),
                self.model.source(arrow).map(|s| s == *x).unwrap_or(false),
            ),
            SupportKey::B(b) => {
                let GroupoidModel::Cyl(m) = &self.model else {
                    return (false, false);
                };
                let Unit::Point(p) = x else {
                    return (false, false);
                };
                (
                    m.point_in_window(p, &b.window),
                    m.point_in_window(p, &translate(&b.window, -b.shift)),
                )
            }
        }
    }
}

/// Certify that every support entry lies in the isotropy interior at the
/// stated search depth; the certificate is required by the interior
/// embedding and the fiber restrictions.
pub fn certify_iso_support(f: &Element, depth: u32) -> Result<()> {
    for key in f.support.keys() {
        let desc = match key {
            SupportKey::A(a) => BundleDesc::Single(a.clone()),
            SupportKey::B(b) => BundleDesc::Window(b.clone()),
        };
        match f.model.interior_isotropy_test(&desc, depth)? {
            InteriorVerdict::Yes => {}
            InteriorVerdict::No { .. } => {
                return Err(Error::NotInterior(format!(
                    "support entry {} leaves the isotropy interior",
                    support_label(&f.model, key)
                )));
            }
            InteriorVerdict::Unknown { depth } => {
                return Err(Error::NotInterior(format!(
                    "support entry {} not certified interior at depth {depth}",
                    support_label(&f.model, key)
                )));
            }
        }
    }
    Ok(())
}

fn support_label(model: &GroupoidModel, key: &SupportKey) -> String {
    match key {
        SupportKey::A(a) => model.arrow_label(a),
        SupportKey::B(b) => format!("bundle(window {:?}, shift {})", b.window, b.shift),
    }
}

/// A finitely supported vector in the group algebra of one isotropy fiber,
/// indexed by the materialized fiber family of `restrict_to_fiber`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberVector {
    pub unit: Unit,
    pub terms: BTreeMap<GroupElem, Coeff>,
}

impl FiberVector {
    pub fn new(unit: Unit, terms: Vec<(GroupElem, Coeff)>) -> FiberVector {
        let mut map: BTreeMap<GroupElem, Coeff> = BTreeMap::new();
        for (g, c) in terms {
            let entry = map.entry(g).or_insert_with(Coeff::zero);
            *entry = entry.add(&c);
        }
        map.retain(|_, c| !c.is_zero());
        FiberVector { unit, terms: map }
    }

    pub fn l1_norm(&self) -> f64 {
        sorted_sum(self.terms.values().map(Coeff::abs_f64).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Extend fiber vectors by zero into the convolution algebra. Every
/// embedded arrow must certify interior at the given depth; the embedding
/// is isometric for the I-norm and intertwines the twisted operations.
pub fn iota_embed(
    model: &GroupoidModel,
    sigma: &TwoCocycle,
    fibers: &[FiberVector],
    depth: u32,
) -> Result<Element> {
    let mut terms = Vec::new();
    for fv in fibers {
        let restriction = cocycle::restrict_to_fiber(model, sigma, &fv.unit)?;
        for (g, c) in &fv.terms {
            let arrow = restriction.embed(model, &fv.unit, g)?;
            match model.interior_isotropy_test(&BundleDesc::Single(arrow.clone()), depth)? {
                InteriorVerdict::Yes => {}
                InteriorVerdict::No { .. } => {
                    return Err(Error::NotInterior(format!(
                        "fiber element {} embeds outside the isotropy interior",
                        model.arrow_label(&arrow)
                    )));
                }
                InteriorVerdict::Unknown { depth } => {
                    return Err(Error::NotInterior(format!(
                        "fiber element {} not certified interior at depth {depth}",
                        model.arrow_label(&arrow)
                    )));
                }
            }
            terms.push((SupportKey::A(arrow), c.clone()));
        }
    }
    Element::new(model.clone(), terms)
}

/// Solve `sum_k u_k basis[k] = v` exactly over the integers.
fn lattice_coordinates(basis: &[Vec<i64>], v: &[i64]) -> Option<Vec<i64>> {
    let r = basis.len();
    if r == 0 {
        return if v.iter().all(|&x| x == 0) {
            Some(Vec::new())
        } else {
            None
        };
    }
    let d = basis[0].len();
    // Augmented system A u = v with A[i][k] = basis[k][i], solved by
    // rational elimination.
    let rat = |x: i64| BigRational::from(BigInt::from(x));
    let mut a: Vec<Vec<BigRational>> = (0..d)
        .map(|i| {
            let mut row: Vec<BigRational> = (0..r).map(|k| rat(basis[k][i])).collect();
            row.push(rat(v[i]));
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..r {
        let Some(p) = (row..d).find(|&i| !a[i][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        let inv = a[row][col].recip();
        for x in a[row].iter_mut() {
            *x *= &inv;
        }
        for i in 0..d {
            if i != row && !a[i][col].is_zero() {
                let factor = a[i][col].clone();
                for k in 0..=r {
                    let sub = &factor * &a[row][k];
                    a[i][k] -= sub;
                }
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    // Consistency: zero rows must have zero right side.
    for i in row..d {
        if !a[i][r].is_zero() {
            return None;
        }
    }
    let mut u = vec![BigRational::zero(); r];
    for (ri, col) in &pivots {
        u[*col] = a[*ri][r].clone();
    }
    u.into_iter()
        .map(|x| {
            if x.denom().is_one() {
                use num_traits::ToPrimitive;
                x.numer().to_i64()
            } else {
                None
            }
        })
        .collect()
}

/// Restrict an interior-supported element to the isotropy fiber at `x`,
/// returning coordinates in the materialized fiber family.
pub fn psi_restrict(
    sigma: &TwoCocycle,
    f: &Element,
    x: &Unit,
    depth: u32,
) -> Result<FiberVector> {
    let model = &f.model;
    model.check_unit(x)?;
    certify_iso_support(f, depth)?;
    let restriction = cocycle::restrict_to_fiber(model, sigma, x)?;
    let mut terms = Vec::new();
    for (key, c) in &f.support {
        match key {
            SupportKey::A(arrow) => {
                if model.range(arrow)? != *x {
                    continue;
                }
                let g = fiber_coordinates(model, &restriction.embedding, arrow)?;
                terms.push((g, c.clone()));
            }
            SupportKey::B(b) => {
                // The bundle contributes at x when the point lies in the
                // window; interior certification makes (x, shift) isotropy.
                let GroupoidModel::Cyl(m) = model else { unreachable!() };
                let Unit::Point(p) = x else { unreachable!() };
                if !m.point_in_window(p, &b.window) {
                    continue;
                }
                let arrow = Arrow::Cyl {
                    point: p.clone(),
                    shift: b.shift,
                };
                let g = fiber_coordinates(model, &restriction.embedding, &arrow)?;
                terms.push((g, c.clone()));
            }
        }
    }
    Ok(FiberVector::new(x.clone(), terms))
}

/// Invert the fiber embedding on an isotropy arrow at the fiber's unit.
fn fiber_coordinates(
    model: &GroupoidModel,
    embedding: &FiberEmbedding,
    arrow: &Arrow,
) -> Result<GroupElem> {
    let mismatch = || {
        Error::ModelMismatch(format!(
            "arrow {} does not lie in the materialized fiber",
            model.arrow_label(arrow)
        ))
    };
    match embedding {
        FiberEmbedding::FiniteArrows(ids) => {
            let Arrow::Finite(a) = arrow else {
                return Err(mismatch());
            };
            let k = ids.iter().position(|x| x == a).ok_or_else(mismatch)?;
            Ok(GroupElem::T(k as u32))
        }
        FiberEmbedding::SubgroupElems(elems) => {
            let Arrow::Transf { g, .. } = arrow else {
                return Err(mismatch());
            };
            let k = elems.iter().position(|x| x == g).ok_or_else(mismatch)?;
            Ok(GroupElem::T(k as u32))
        }
        FiberEmbedding::LatticeBasis(basis) => {
            let v: Vec<i64> = match arrow {
                Arrow::Cyl { shift, .. } => vec![*shift],
                Arrow::Transf {
                    g: GroupElem::Z(v), ..
                } => v.clone(),
                _ => return Err(mismatch()),
            };
            let u = lattice_coordinates(basis, &v).ok_or_else(mismatch)?;
            Ok(GroupElem::Z(u))
        }
        FiberEmbedding::Whole => match arrow {
            Arrow::Grp(g) => Ok(g.clone()),
            Arrow::Bundle { g, .. } => Ok(g.clone()),
            _ => Err(mismatch()),
        },
        FiberEmbedding::UnitOnly => {
            if model.is_unit_arrow(arrow)? {
                Ok(GroupElem::C(0))
            } else {
                Err(mismatch())
            }
        }
    }
}

/// The I-norm of the image in the quotient by the ideal vanishing at `x`:
/// on finite models this equals the fiber restriction's l1 norm, the
/// optimal correction cancelling everything off the fiber.
pub fn quotient_i_norm(sigma: &TwoCocycle, f: &Element, x: &Unit, depth: u32) -> Result<f64> {
    if f.model.arrows().is_none() {
        return Err(Error::UnsupportedModel(
            "quotient norms are computed on finite models only".into(),
        ));
    }
    Ok(psi_restrict(sigma, f, x, depth)?.l1_norm())
}

/// A function on the unit space: finitely supported unit values, or a
/// locally constant combination of window indicators on shift models.
#[derive(Clone, Debug, PartialEq)]
pub enum UnitFunction {
    Discrete(BTreeMap<Unit, Coeff>),
    Windows(Vec<(Window, Coeff)>),
}

impl UnitFunction {
    pub fn discrete(model: &GroupoidModel, entries: Vec<(Unit, Coeff)>) -> Result<UnitFunction> {
        let mut map: BTreeMap<Unit, Coeff> = BTreeMap::new();
        for (x, c) in entries {
            model.check_unit(&x)?;
            let entry = map.entry(x).or_insert_with(Coeff::zero);
            *entry = entry.add(&c);
        }
        map.retain(|_, c| !c.is_zero());
        Ok(UnitFunction::Discrete(map))
    }

    pub fn windows(model: &GroupoidModel, entries: Vec<(Window, Coeff)>) -> Result<UnitFunction> {
        let GroupoidModel::Cyl(m) = model else {
            return Err(Error::ModelMismatch(
                "window unit functions exist only on shift models".into(),
            ));
        };
        for (w, _) in &entries {
            m.check_window_bounds(w)?;
        }
        Ok(UnitFunction::Windows(entries))
    }

    pub fn eval(&self, model: &GroupoidModel, x: &Unit) -> Result<Coeff> {
        match self {
            UnitFunction::Discrete(map) => {
                Ok(map.get(x).cloned().unwrap_or_else(Coeff::zero))
            }
            UnitFunction::Windows(entries) => {
                let GroupoidModel::Cyl(m) = model else {
                    return Err(Error::ModelMismatch("window function off a shift model".into()));
                };
                let Unit::Point(p) = x else {
                    return Err(Error::ModelMismatch("shift units are points".into()));
                };
                let mut acc = Coeff::zero();
                for (w, c) in entries {
                    if m.point_in_window(p, w) {
                        acc = acc.add(c);
                    }
                }
                Ok(acc)
            }
        }
    }
}

/// The unit-space action: `(g . f)(c) = g(r(c)) f(c)`. On interior
/// isotropy support the action commutes with convolution by the
/// corresponding unit-supported element.
pub fn c0_multiply(g: &UnitFunction, f: &Element) -> Result<Element> {
    let model = &f.model;
    let mut terms: Vec<(SupportKey, Coeff)> = Vec::new();
    for (key, c) in &f.support {
        match key {
            SupportKey::A(arrow) => {
                let weight = g.eval(model, &model.range(arrow)?)?;
                terms.push((key.clone(), c.mul(&weight)));
            }
            SupportKey::B(b) => match g {
                UnitFunction::Discrete(map) => {
                    let GroupoidModel::Cyl(m) = model else { unreachable!() };
                    for (x, w) in map {
                        let Unit::Point(p) = x else { continue };
                        if m.point_in_window(p, &b.window) {
                            terms.push((
                                SupportKey::A(Arrow::Cyl {
                                    point: p.clone(),
                                    shift: b.shift,
                                }),
                                c.mul(w),
                            ));
                        }
                    }
                }
                UnitFunction::Windows(entries) => {
                    let GroupoidModel::Cyl(m) = model else { unreachable!() };
                    for (v, w) in entries {
                        let Some(window) = cylinder::meet(&b.window, v) else {
                            continue;
                        };
                        if bundle_span(&window) > m.max_window {
                            return Err(Error::BundleIncompatible(format!(
                                "weighted window spans {} positions, past the configured bound {}",
                                bundle_span(&window),
                                m.max_window
                            )));
                        }
                        terms.push((
                            SupportKey::B(ArrowBundle {
                                window,
                                shift: b.shift,
                            }),
                            c.mul(w),
                        ));
                    }
                }
            },
        }
    }
    Element::new(model.clone(), terms)
}

pub const ELEMENT_FORMAT: &str = "element/1";

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

fn parse_big_rational(s: &str) -> Result<BigRational> {
    BigRational::from_str(s)
        .map_err(|e| Error::Parse(format!("bad rational {s:?}: {e}")))
}

/// Parse a coefficient from `re`/`im` values (strings are exact rationals,
/// numbers are floats) with an optional exact `phase` factor.
fn parse_coeff(obj: &Map<String, Value>) -> Result<Coeff> {
    let field = |name: &str| obj.get(name).cloned().unwrap_or_else(|| json!("0"));
    let (re, im) = (field("re"), field("im"));
    let base = match (&re, &im) {
        (Value::String(r), Value::String(i)) => Coeff::Exact(Cyc::gaussian(
            parse_big_rational(r)?,
            parse_big_rational(i)?,
        )),
        _ => {
            let as_f64 = |v: &Value| -> Result<f64> {
                match v {
                    Value::Number(n) => Ok(n.as_f64().unwrap_or(0.0)),
                    Value::String(s) =>

                        parse_big_rational(s).map(|r| {
                            use num_traits::ToPrimitive;
                            r.to_f64().unwrap_or(f64::NAN)
                        }),
                    _ => Err(Error::Parse(format!("bad coefficient part {v}"))),
                }
            };
            Coeff::Float(num_complex::Complex64::new(as_f64(&re)?, as_f64(&im)?))
        }
    };
    match obj.get("phase") {
        None => Ok(base),
        Some(Value::String(s)) => {
            let (num, den) = parse_rational_str(s)?;
            Ok(base.rotate(&Phase::exact(num, den)?))
        }
        Some(Value::Number(n)) => Ok(base.rotate(&Phase::float(n.as_f64().unwrap_or(0.0)))),
        Some(v) => Err(Error::Parse(format!("bad phase value {v}"))),
    }
}

fn rational_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Real and imaginary rational parts when the value lies in the Gaussian
/// rationals.
fn gaussian_parts(z: &Cyc) -> Option<(BigRational, BigRational)> {
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let conj = z.conj();
    let re = z.add(&conj).scale(&half).as_rational()?;
    let im = z.sub(&conj).mul(&Cyc::i().neg()).scale(&half).as_rational()?;
    Some((re, im))
}

fn coeff_to_json(c: &Coeff) -> Value {
    match c {
        Coeff::Exact(z) => {
            if let Some((re, im)) = gaussian_parts(z) {
                return json!({ "re": rational_string(&re), "im": rational_string(&im) });
            }
            // Try a Gaussian rational times a root of unity of the value's
            // own order before falling back to floats.
            let n = z.order();
            if n <= 4096 {
                for k in 1..n {
                    let unrotated = z.mul(&Cyc::root_of_unity(-(k as i64), n as i64));
                    if let Some((re, im)) = gaussian_parts(&unrotated) {
                        return json!({
                            "re": rational_string(&re),
                            "im": rational_string(&im),
                            "phase": format!("{k}/{n}"),
                        });
                    }
                }
            }
            let f = c.to_complex();
            json!({ "re": f.re, "im": f.im })
        }
        Coeff::Float(z) => json!({ "re": z.re, "im": z.im }),
    }
}

fn window_from_json(v: &Value) -> Result<Window> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Parse("window must be an array of [position, symbol]".into()))?;
    let mut w = Window::new();
    for entry in arr {
        let pair = entry
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| Error::Parse("window entries are [position, symbol] pairs".into()))?;
        let pos = pair[0]
            .as_i64()
            .ok_or_else(|| Error::Parse("window position must be an integer".into()))?;
        let sym = pair[1]
            .as_u64()
            .filter(|&s| s <= u8::MAX as u64)
            .ok_or_else(|| Error::Parse("window symbol must be a small integer".into()))?;
        if w.insert(pos, sym as u8).is_some() {
            return Err(Error::MalformedSpec(format!(
                "window constrains position {pos} twice"
            )));
        }
    }
    Ok(w)
}

fn window_to_json(w: &Window) -> Value {
    Value::Array(
        w.iter()
            .map(|(pos, sym)| json!([pos, sym]))
            .collect(),
    )
}

/// Parse an element spec against a model; duplicate terms are summed.
pub fn parse_element(model: &GroupoidModel, v: &Value) -> Result<Element> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse("element spec must be a JSON object".into()))?;
    check_fields(obj, &["format", "terms"], "element spec")?;
    let format = obj
        .get("format")
        .and_then(|f| f.as_str())
        .ok_or_else(|| Error::MalformedSpec("element spec needs a \"format\" field".into()))?;
    if format != ELEMENT_FORMAT {
        return Err(Error::MalformedSpec(format!(
            "unsupported element format {format:?}, expected {ELEMENT_FORMAT:?}"
        )));
    }
    let terms_json = obj
        .get("terms")
        .and_then(|t| t.as_array())
        .ok_or_else(|| Error::MalformedSpec("element spec needs a \"terms\" array".into()))?;
    let mut terms = Vec::new();
    for term in terms_json {
        let to = term
            .as_object()
            .ok_or_else(|| Error::Parse("element terms are objects".into()))?;
        check_fields(to, &["arrow", "bundle", "re", "im", "phase"], "element term")?;
        let coeff = parse_coeff(to)?;
        let key = match (to.get("arrow"), to.get("bundle")) {
            (Some(a), None) => SupportKey::A(model.arrow_from_json(a)?),
            (None, Some(b)) => {
                let bo = b
                    .as_object()
                    .ok_or_else(|| Error::Parse("bundle must be an object".into()))?;
                check_fields(bo, &["window", "shift"], "bundle term")?;
                let window = window_from_json(
                    bo.get("window")
                        .ok_or_else(|| Error::Parse("bundle needs a \"window\"".into()))?,
                )?;
                let shift = bo
                    .get("shift")
                    .and_then(|s| s.as_i64())
                    .ok_or_else(|| Error::Parse("bundle needs an integer \"shift\"".into()))?;
                SupportKey::B(ArrowBundle { window, shift })
            }
            _ => {
                return Err(Error::MalformedSpec(
                    "each term needs exactly one of \"arrow\" or \"bundle\"".into(),
                ))
            }
        };
        terms.push((key, coeff));
    }
    Element::new(model.clone(), terms)
}

/// Canonical JSON form; `parse_element` of the output reproduces the
/// element whenever the coefficients serialize exactly.
pub fn element_to_json(f: &Element) -> Value {
    let terms: Vec<Value> = f
        .support
        .iter()
        .map(|(key, c)| {
            let mut term = coeff_to_json(c);
            let to = term.as_object_mut().expect("coefficients serialize to objects");
            match key {
                SupportKey::A(a) => {
                    to.insert("arrow".into(), f.model.arrow_to_json(a));
                }
                SupportKey::B(b) => {
                    to.insert(
                        "bundle".into(),
                        json!({ "window": window_to_json(&b.window), "shift": b.shift }),
                    );
                }
            }
            term
        })
        .collect();
    json!({ "format": ELEMENT_FORMAT, "terms": terms })
}
