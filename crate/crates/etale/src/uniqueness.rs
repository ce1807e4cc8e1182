//! One-sided decision procedure for C*-uniqueness of the twisted
//! convolution algebra. The engine assembles a certificate chain from
//! machine-checked sufficient conditions (amenability by construction,
//! topological principality, exhaustive isotropy-fiber classification with
//! exact untwisting) and answers `CStarUnique` only when every link holds.
//! It never claims the negative: every failure is `Inconclusive` with the
//! first obstruction spelled out.

use std::collections::BTreeMap;

use num_integer::lcm;

use crate::cocycle::{
    check_compatibility, cohomologous, mackey_group, restrict_to_fiber, CohomologyOutcome,
    FiberRestriction, GroupCocycle, MackeyGroup, TwoCocycle,
};
use crate::error::{Error, Result};
use crate::groupoid::group::GroupFamily;
use crate::groupoid::{GroupoidModel, Principality};
use crate::phase::Phase;

/// Whether a fact was machine-checked from a constructor or echoed from a
/// caller-supplied assertion. Assertions are never upgraded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Derived,
    Asserted,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Derived => "derived",
            Provenance::Asserted => "asserted",
        }
    }
}

/// The catalog of group classes with C*-unique ℓ¹-algebras, plus `Unknown`
/// for everything the constructors cannot certify.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupClassTag {
    Trivial,
    Finite,
    FinitelyGeneratedAbelian,
    LocallyFinite,
    PolynomialGrowthFlag,
    SemidirectOfAbelians,
    Unknown,
}

impl GroupClassTag {
    pub fn name(&self) -> &'static str {
        match self {
            GroupClassTag::Trivial => "trivial",
            GroupClassTag::Finite => "finite",
            GroupClassTag::FinitelyGeneratedAbelian => "finitely-generated-abelian",
            GroupClassTag::LocallyFinite => "locally-finite",
            GroupClassTag::PolynomialGrowthFlag => "polynomial-growth",
            GroupClassTag::SemidirectOfAbelians => "semidirect-of-abelians",
            GroupClassTag::Unknown => "unknown",
        }
    }

    /// Whether the class certifies C*-uniqueness of the group algebra.
    pub fn in_catalog(&self) -> bool {
        !matches!(self, GroupClassTag::Unknown)
    }
}

#[derive(Clone, Debug)]
pub struct GroupClass {
    pub tag: GroupClassTag,
    pub provenance: Provenance,
    pub note: String,
}

/// A group to classify: a constructor family, the lamp kernel of a
/// lamplighter family, a central extension produced by untwisting, or a
/// caller assertion echoed verbatim.
#[derive(Clone, Debug)]
pub enum GroupHandle<'a> {
    Family(&'a GroupFamily),
    LamplighterBase { modulus: u64 },
    Mackey(&'a MackeyGroup),
    Asserted { tag: GroupClassTag, note: &'a str },
}

pub fn classify_group(g: &GroupHandle) -> GroupClass {
    match g {
        GroupHandle::Family(family) => classify_family(family),
        GroupHandle::LamplighterBase { modulus } => GroupClass {
            tag: GroupClassTag::LocallyFinite,
            provenance: Provenance::Derived,
            note: format!(
                "direct sum over the integers of order-{modulus} cyclic groups: every finite \
                 subset lies in a finite partial sum"
            ),
        },
        GroupHandle::Mackey(mg) => classify_mackey(mg),
        GroupHandle::Asserted { tag, note } => GroupClass {
            tag: *tag,
            provenance: Provenance::Asserted,
            note: (*note).to_string(),
        },
    }
}

fn classify_family(family: &GroupFamily) -> GroupClass {
    if family.order() == Some(1) {
        return GroupClass {
            tag: GroupClassTag::Trivial,
            provenance: Provenance::Derived,
            note: "single element enumerated".into(),
        };
    }
    if let Some(n) = family.order() {
        return GroupClass {
            tag: GroupClassTag::Finite,
            provenance: Provenance::Derived,
            note: format!("finite by enumeration: {n} elements"),
        };
    }
    match family {
        GroupFamily::FreeAbelian(d) => GroupClass {
            tag: GroupClassTag::FinitelyGeneratedAbelian,
            provenance: Provenance::Derived,
            note: format!("free abelian of rank {d}; generators commute by construction"),
        },
        GroupFamily::Lamplighter { modulus } => GroupClass {
            tag: GroupClassTag::SemidirectOfAbelians,
            provenance: Provenance::Derived,
            note: format!(
                "extension of the integers acting on a direct sum of order-{modulus} cyclic \
                 groups; kernel and quotient are abelian by construction"
            ),
        },
        _ => GroupClass {
            tag: GroupClassTag::Unknown,
            provenance: Provenance::Derived,
            note: "no constructor fact applies".into(),
        },
    }
}

fn classify_mackey(mg: &MackeyGroup) -> GroupClass {
    if let Some(n) = mg.order() {
        let evidence = if mg.table.is_some() {
            "validated multiplication table"
        } else {
            "enumerated order"
        };
        return GroupClass {
            tag: GroupClassTag::Finite,
            provenance: Provenance::Derived,
            note: format!("central extension of a finite base: {n} elements, {evidence}"),
        };
    }
    match &mg.base {
        GroupFamily::FreeAbelian(d) => GroupClass {
            tag: GroupClassTag::PolynomialGrowthFlag,
            provenance: Provenance::Derived,
            note: format!(
                "central extension of the rank-{d} free abelian group by an order-{} cyclic \
                 center: nilpotent of class at most two, so every finitely generated subgroup \
                 has polynomial growth",
                mg.level
            ),
        },
        _ => GroupClass {
            tag: GroupClassTag::Unknown,
            provenance: Provenance::Derived,
            note: "central extension of an unclassified infinite base".into(),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WcFlag {
    HoldsByAmenability,
    Asserted,
    Unknown,
}

/// Whether every representation of the ℓ¹-algebra is dominated by the
/// regular one. Certified by constructor amenability, echoed from a caller
/// assertion, or unknown; never computed for arbitrary groups.
#[derive(Clone, Debug)]
pub struct WeakContainmentStatus {
    pub flag: WcFlag,
    pub note: String,
}

pub fn weak_containment_status(
    model: &GroupoidModel,
    _sigma: &TwoCocycle,
    asserted: Option<&str>,
) -> WeakContainmentStatus {
    if let Some(note) = model.amenable_by_construction() {
        return WeakContainmentStatus {
            flag: WcFlag::HoldsByAmenability,
            note,
        };
    }
    if let Some(note) = asserted {
        return WeakContainmentStatus {
            flag: WcFlag::Asserted,
            note: note.to_string(),
        };
    }
    WeakContainmentStatus {
        flag: WcFlag::Unknown,
        note: "no amenability certificate for this constructor and no caller assertion".into(),
    }
}

/// One applied result in a certificate chain.
#[derive(Clone, Debug)]
pub struct ChainStep {
    pub name: &'static str,
    pub evidence: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub enum UniquenessVerdict {
    CStarUnique { chain: Vec<ChainStep> },
    Inconclusive { reason: String, chain: Vec<ChainStep> },
}

impl UniquenessVerdict {
    pub fn is_unique(&self) -> bool {
        matches!(self, UniquenessVerdict::CStarUnique { .. })
    }

    pub fn chain(&self) -> &[ChainStep] {
        match self {
            UniquenessVerdict::CStarUnique { chain } => chain,
            UniquenessVerdict::Inconclusive { chain, .. } => chain,
        }
    }

    pub fn step_names(&self) -> Vec<&'static str> {
        self.chain().iter().map(|s| s.name).collect()
    }
}

/// Decide C*-uniqueness of the twisted convolution algebra, one-sided.
///
/// Pipeline: weak containment must be certified or asserted; then a
/// topological-principality certificate at `depth` settles the question;
/// otherwise every isotropy fiber is extracted, exactly untwisted when the
/// restricted cocycle allows it, and classified against the catalog.
/// Exhaustive fiber coverage requires an enumerable unit space. All
/// computational failures surface as `Inconclusive` reasons, never panics
/// or errors.
pub fn analyze(
    model: &GroupoidModel,
    sigma: &TwoCocycle,
    depth: u32,
    assert_weak_containment: Option<&str>,
) -> UniquenessVerdict {
    let depth = depth.max(1);
    let mut chain: Vec<ChainStep> = Vec::new();

    let wc = weak_containment_status(model, sigma, assert_weak_containment);
    match wc.flag {
        WcFlag::HoldsByAmenability => chain.push(ChainStep {
            name: "weak-containment-amenability",
            evidence: wc.note,
            provenance: Provenance::Derived,
        }),
        WcFlag::Asserted => chain.push(ChainStep {
            name: "weak-containment-asserted",
            evidence: wc.note,
            provenance: Provenance::Asserted,
        }),
        WcFlag::Unknown => {
            return UniquenessVerdict::Inconclusive {
                reason: format!("weak containment is not certified: {}", wc.note),
                chain,
            }
        }
    }

    if let Err(e) = check_compatibility(model, sigma) {
        return UniquenessVerdict::Inconclusive {
            reason: format!("cocycle is incompatible with the model: {e}"),
            chain,
        };
    }

    match model.is_topologically_principal(depth) {
        Ok(Principality::Yes { depth }) => {
            chain.push(ChainStep {
                name: "topological-principality",
                evidence: format!(
                    "units with trivial isotropy are dense, certified at depth {depth}"
                ),
                provenance: Provenance::Derived,
            });
            return UniquenessVerdict::CStarUnique { chain };
        }
        Ok(_) => {}
        Err(e) => {
            return UniquenessVerdict::Inconclusive {
                reason: format!("principality test failed: {e}"),
                chain,
            }
        }
    }

    let Some(units) = model.units() else {
        return UniquenessVerdict::Inconclusive {
            reason: "nontrivial isotropy on a non-enumerable unit space: exhaustive fiber \
                     coverage is unavailable and no symmetry certificate applies"
                .into(),
            chain,
        };
    };
    chain.push(ChainStep {
        name: "unit-coverage",
        evidence: format!("all {} units enumerated", units.len()),
        provenance: Provenance::Derived,
    });

    let mut classes: Vec<(String, GroupClass)> = Vec::new();
    let mut untwisted: Vec<String> = Vec::new();
    for x in &units {
        let fr = match restrict_to_fiber(model, sigma, x) {
            Ok(fr) => fr,
            Err(e) => {
                return UniquenessVerdict::Inconclusive {
                    reason: format!(
                        "fiber restriction failed at {}: {e}",
                        model.unit_label(x)
                    ),
                    chain,
                }
            }
        };
        let label = fr.unit_label.clone();
        match classify_fiber(&fr) {
            Ok((class, mackey_note)) => {
                if !class.tag.in_catalog() {
                    return UniquenessVerdict::Inconclusive {
                        reason: format!(
                            "isotropy fiber at {label} is outside the certified catalog: {}",
                            class.note
                        ),
                        chain,
                    };
                }
                if let Some(n) = mackey_note {
                    untwisted.push(n);
                }
                classes.push((label, class));
            }
            Err(e) => {
                return UniquenessVerdict::Inconclusive {
                    reason: format!("isotropy fiber at {label} could not be classified: {e}"),
                    chain,
                }
            }
        }
    }

    if !untwisted.is_empty() {
        chain.push(ChainStep {
            name: "mackey-untwisting",
            evidence: untwisted.join("; "),
            provenance: Provenance::Derived,
        });
    }
    let provenance = if classes
        .iter()
        .any(|(_, c)| c.provenance == Provenance::Asserted)
    {
        Provenance::Asserted
    } else {
        Provenance::Derived
    };
    chain.push(ChainStep {
        name: "isotropy-fiber-reduction",
        evidence: summarize_classes(&classes),
        provenance,
    });
    UniquenessVerdict::CStarUnique { chain }
}

/// Classify one restricted fiber. Returns the class and, when the cocycle
/// was genuinely twisted, a note describing the central-extension step.
fn classify_fiber(fr: &FiberRestriction) -> Result<(GroupClass, Option<String>)> {
    if cocycle_is_zero(&fr.cocycle) {
        return Ok((classify_family(&fr.family), None));
    }
    let m = cocycle_level(&fr.cocycle)?;
    if fr.family.is_finite() {
        // A coboundary relation with values in m-th roots of unity forces
        // the cochain into (m * exponent)-th roots, so deciding at that
        // level is exhaustive.
        let e = family_exponent(&fr.family).expect("finite families have an exponent");
        let level = m
            .checked_mul(e)
            .filter(|l| *l <= 1 << 20)
            .ok_or_else(|| {
                Error::IncompatibleDenominator(
                    "trivialization level exceeds the supported range".into(),
                )
            })?;
        if let CohomologyOutcome::Cochain(_) =
            cohomologous(&fr.family, &fr.cocycle, &GroupCocycle::Trivial, level)?
        {
            let mut class = classify_family(&fr.family);
            class.note = format!(
                "{}; cocycle trivialized by a one-cochain at level {level}",
                class.note
            );
            return Ok((class, None));
        }
    }
    let mg = mackey_group(&fr.family, &fr.cocycle, m)?;
    let class = classify_mackey(&mg);
    let note = format!(
        "fiber at {} untwisted through a central extension at level {m}",
        fr.unit_label
    );
    Ok((class, Some(note)))
}

fn cocycle_is_zero(c: &GroupCocycle) -> bool {
    match c {
        GroupCocycle::Trivial => true,
        GroupCocycle::Bicharacter { theta } => {
            theta.iter().all(|row| row.iter().all(|p| p.is_zero()))
        }
        GroupCocycle::Table { values } => values.values().all(|p| p.is_zero()),
    }
}

/// Least common denominator of all cocycle phases; exact phases required.
fn cocycle_level(c: &GroupCocycle) -> Result<u64> {
    let mut level = 1u64;
    let mut bump = |p: &Phase| -> Result<()> {
        match p {
            Phase::Exact { den, .. } => {
                level = lcm(level, *den as u64);
                Ok(())
            }
            Phase::Float(_) => Err(Error::IncompatibleDenominator(
                "fiber cocycle has inexact phases; exact untwisting is unavailable".into(),
            )),
        }
    };
    match c {
        GroupCocycle::Trivial => {}
        GroupCocycle::Bicharacter { theta } => {
            for row in theta {
                for p in row {
                    bump(p)?;
                }
            }
        }
        GroupCocycle::Table { values } => {
            for p in values.values() {
                bump(p)?;
            }
        }
    }
    if level > 4096 {
        return Err(Error::IncompatibleDenominator(format!(
            "fiber cocycle level {level} exceeds the 4096 cap"
        )));
    }
    Ok(level)
}

/// The exponent (least common multiple of element orders) of a finite
/// family.
fn family_exponent(family: &GroupFamily) -> Option<u64> {
    match family {
        GroupFamily::FreeAbelian(0) => Some(1),
        GroupFamily::Cyclic(n) => Some((*n).max(1)),
        GroupFamily::Product(ms) => Some(ms.iter().copied().fold(1, lcm)),
        GroupFamily::Table(t) => {
            let mut e = 1u64;
            for k in 0..t.order {
                let mut x = k;
                let mut ord = 1u64;
                while x != t.identity {
                    x = t.mul(x, k);
                    ord += 1;
                }
                e = lcm(e, ord);
            }
            Some(e)
        }
        _ => None,
    }
}

/// Deterministic per-class summary in first-seen unit order.
fn summarize_classes(classes: &[(String, GroupClass)]) -> String {
    let mut order: Vec<&'static str> = Vec::new();
    let mut buckets: BTreeMap<&'static str, (usize, Vec<String>)> = BTreeMap::new();
    for (label, class) in classes {
        let key = class.tag.name();
        let entry = buckets.entry(key).or_insert_with(|| {
            order.push(key);
            (0, Vec::new())
        });
        entry.0 += 1;
        if entry.1.len() < 3 {
            entry.1.push(label.clone());
        }
    }
    let parts: Vec<String> = order
        .iter()
        .map(|key| {
            let (count, labels) = &buckets[key];
            let ellipsis = if *count > labels.len() { ", ..." } else { "" };
            format!("{key} x{count} (at {}{ellipsis})", labels.join(", "))
        })
        .collect();
    format!("{} fibers classified: {}", classes.len(), parts.join("; "))
}
