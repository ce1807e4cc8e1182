//! Groupoid models: units, arrows, structure maps, fibers, isotropy, and
//! the depth-bounded topological tests, for six model constructors.
//!
//! All models are discrete except the cylinder shift, whose unit space
//! carries the product topology with cylinder basis. Transformation-type
//! arrows follow the convention r(x, g) = x and s(x, g) = x.g throughout.

pub mod cylinder;
pub mod finite;
pub mod group;
pub mod transformation;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use cylinder::{ArrowBundle, CylModel, CylPrincipality, PeriodicWord};
use finite::FiniteGroupoid;
use group::{GroupElem, GroupFamily, GroupTable};
use transformation::TransfModel;

/// A point of the unit space.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    Idx(u32),
    Point(PeriodicWord),
}

impl Unit {
    pub fn idx(&self) -> Option<u32> {
        match self {
            Unit::Idx(i) => Some(*i),
            Unit::Point(_) => None,
        }
    }
}

/// An arrow of a groupoid model, in the model's canonical form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arrow {
    /// Arrow id in a finite explicit model.
    Finite(u32),
    /// Pair groupoid arrow (i, j): r = i, s = j.
    Pair { i: u32, j: u32 },
    /// Group element over the one-unit space.
    Grp(GroupElem),
    /// Group-bundle arrow: a group element sitting over one unit.
    Bundle { unit: u32, g: GroupElem },
    /// Transformation arrow (x, g): r = x, s = x.g.
    Transf { point: u32, g: GroupElem },
    /// Shift arrow (x, n): r = x, s = shift^n(x).
    Cyl { point: PeriodicWord, shift: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FiberSide {
    Source,
    Range,
}

/// A basic compact open set of arrows: a singleton for discrete models, a
/// window bundle for cylinder models.
#[derive(Clone, Debug, PartialEq)]
pub enum BundleDesc {
    Single(Arrow),
    Window(ArrowBundle),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InteriorVerdict {
    Yes,
    No { witness: Arrow },
    Unknown { depth: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Principality {
    Yes { depth: u32 },
    No { witness: BundleDesc },
    Unknown { depth: u32, reason: String },
}

/// Structural description of one isotropy group, when derivable from the
/// constructor.
#[derive(Clone, Debug, PartialEq)]
pub enum IsotropyStructure {
    Trivial,
    /// A finite subgroup of the acting or bundled group, listed element-wise.
    GroupElems {
        family: GroupFamily,
        elems: Vec<GroupElem>,
    },
    /// A finite-index sublattice of the acting free abelian group, or the
    /// period lattice of a shift point; rows are a lattice basis.
    Lattice {
        ambient_rank: u32,
        basis: Vec<Vec<i64>>,
    },
    /// The whole constructor group.
    WholeGroup { family: GroupFamily },
    /// Isotropy arrows of a finite explicit model with their induced
    /// multiplication table; `arrow_ids[k]` realizes table element `k`.
    ExplicitTable {
        table: GroupTable,
        arrow_ids: Vec<u32>,
    },
}

#[derive(Clone, Debug)]
pub struct IsotropyReport {
    pub structure: IsotropyStructure,
    pub elements: Vec<Arrow>,
    pub truncated: bool,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupoidModel {
    Finite(FiniteGroupoid),
    Pair { n: u32 },
    Group { family: GroupFamily },
    GroupBundle { num_units: u32, family: GroupFamily },
    Transf(TransfModel),
    Cyl(CylModel),
}

impl GroupoidModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            GroupoidModel::Finite(_) => "finite-explicit",
            GroupoidModel::Pair { .. } => "pair",
            GroupoidModel::Group { .. } => "group",
            GroupoidModel::GroupBundle { .. } => "group-bundle",
            GroupoidModel::Transf(_) => "transformation-finite",
            GroupoidModel::Cyl(_) => "cylinder-shift",
        }
    }

    fn mismatch(&self, what: &str) -> Error {
        Error::ModelMismatch(format!(
            "{what} does not belong to a {} model",
            self.kind_name()
        ))
    }

    /// Check that an arrow is a well-formed member of this model.
    pub fn check_arrow(&self, a: &Arrow) -> Result<()> {
        match (self, a) {
            (GroupoidModel::Finite(fg), Arrow::Finite(i)) => {
                if (*i as usize) < fg.arrow_count() {
                    Ok(())
                } else {
                    Err(Error::UnknownArrow(format!(
                        "arrow id {i} out of range (model has {} arrows)",
                        fg.arrow_count()
                    )))
                }
            }
            (GroupoidModel::Pair { n }, Arrow::Pair { i, j }) => {
                if i < n && j < n {
                    Ok(())
                } else {
                    Err(Error::UnknownArrow(format!(
                        "pair arrow ({i}, {j}) out of range for {n} units"
                    )))
                }
            }
            (GroupoidModel::Group { family }, Arrow::Grp(g)) => family.check_elem(g),
            (GroupoidModel::GroupBundle { num_units, family }, Arrow::Bundle { unit, g }) => {
                if unit >= num_units {
                    return Err(Error::UnknownArrow(format!(
                        "bundle unit {unit} out of range for {num_units} units"
                    )));
                }
                family.check_elem(g)
            }
            (GroupoidModel::Transf(m), Arrow::Transf { point, g }) => {
                if *point as usize >= m.point_count() {
                    return Err(Error::UnknownArrow(format!(
                        "point index {point} out of range for {} points",
                        m.point_count()
                    )));
                }
                m.family.check_elem(g)
            }
            (GroupoidModel::Cyl(m), Arrow::Cyl { point, shift: _ }) => {
                if point.seed().iter().any(|&s| s >= m.alphabet) {
                    return Err(Error::UnknownArrow(
                        "point uses symbols outside the alphabet".into(),
                    ));
                }
                if !m.point_admissible(point) {
                    return Err(Error::UnknownArrow(format!(
                        "point {} hits a forbidden word",
                        point.label()
                    )));
                }
                Ok(())
            }
            _ => Err(self.mismatch("arrow")),
        }
    }

    pub fn check_unit(&self, x: &Unit) -> Result<()> {
        match (self, x) {
            (GroupoidModel::Finite(fg), Unit::Idx(i)) if (*i as usize) < fg.num_units as usize => {
                Ok(())
            }
            (GroupoidModel::Pair { n }, Unit::Idx(i)) if i < n => Ok(()),
            (GroupoidModel::Group { .. }, Unit::Idx(0)) => Ok(()),
            (GroupoidModel::GroupBundle { num_units, .. }, Unit::Idx(i)) if i < num_units => Ok(()),
            (GroupoidModel::Transf(m), Unit::Idx(i)) if (*i as usize) < m.point_count() => Ok(()),
            (GroupoidModel::Cyl(m), Unit::Point(p)) => {
                if m.point_admissible(p) {
                    Ok(())
                } else {
                    Err(Error::UnknownArrow(format!(
                        "point {} hits a forbidden word",
                        p.label()
                    )))
                }
            }
            _ => Err(self.mismatch("unit")),
        }
    }

    pub fn range(&self, a: &Arrow) -> Result<Unit> {
        self.check_arrow(a)?;
        Ok(match (self, a) {
            (GroupoidModel::Finite(fg), Arrow::Finite(i)) => {
                Unit::Idx(fg.range[*i as usize])
            }
            (_, Arrow::Pair { i, .. }) => Unit::Idx(*i),
            (_, Arrow::Grp(_)) => Unit::Idx(0),
            (_, Arrow::Bundle { unit, .. }) => Unit::Idx(*unit),
            (_, Arrow::Transf { point, .. }) => Unit::Idx(*point),
            (_, Arrow::Cyl { point, .. }) => Unit::Point(point.clone()),
            _ => unreachable!("check_arrow filtered mismatches"),
        })
    }

    pub fn source(&self, a: &Arrow) -> Result<Unit> {
        self.check_arrow(a)?;
        Ok(match (self, a) {
            (GroupoidModel::Finite(fg), Arrow::Finite(i)) => {
                Unit::Idx(fg.source[*i as usize])
            }
            (_, Arrow::Pair { j, .. }) => Unit::Idx(*j),
            (_, Arrow::Grp(_)) => Unit::Idx(0),
            (_, Arrow::Bundle { unit, .. }) => Unit::Idx(*unit),
            (GroupoidModel::Transf(m), Arrow::Transf { point, g }) => {
                Unit::Idx(m.act(*point, g))
            }
            (_, Arrow::Cyl { point, shift }) => Unit::Point(point.shifted(*shift)),
            _ => unreachable!("check_arrow filtered mismatches"),
        })
    }

    pub fn endpoints(&self, a: &Arrow) -> Result<(Unit, Unit)> {
        Ok((self.range(a)?, self.source(a)?))
    }

    pub fn compose(&self, a: &Arrow, b: &Arrow) -> Result<Arrow> {
        self.check_arrow(a)?;
        self.check_arrow(b)?;
        let s = self.source(a)?;
        let r = self.range(b)?;
        if s != r {
            return Err(Error::NotComposable {
                left_source: self.unit_label(&s),
                right_range: self.unit_label(&r),
            });
        }
        Ok(match (self, a, b) {
            (GroupoidModel::Finite(fg), Arrow::Finite(i), Arrow::Finite(j)) => Arrow::Finite(
                fg.compose(*i, *j)
                    .expect("composability established via source/range"),
            ),
            (_, Arrow::Pair { i, .. }, Arrow::Pair { j, .. }) => Arrow::Pair { i: *i, j: *j },
            (GroupoidModel::Group { family }, Arrow::Grp(g), Arrow::Grp(h)) => {
                Arrow::Grp(family.mul(g, h))
            }
            (
                GroupoidModel::GroupBundle { family, .. },
                Arrow::Bundle { unit, g },
                Arrow::Bundle { g: h, .. },
            ) => Arrow::Bundle {
                unit: *unit,
                g: family.mul(g, h),
            },
            (GroupoidModel::Transf(m), Arrow::Transf { point, g }, Arrow::Transf { g: h, .. }) => {
                Arrow::Transf {
                    point: *point,
                    g: m.family.mul(g, h),
                }
            }
            (_, Arrow::Cyl { point, shift }, Arrow::Cyl { shift: n, .. }) => Arrow::Cyl {
                point: point.clone(),
                shift: shift + n,
            },
            _ => unreachable!("check_arrow filtered mismatches"),
        })
    }

    pub fn invert(&self, a: &Arrow) -> Result<Arrow> {
        self.check_arrow(a)?;
        Ok(match (self, a) {
            (GroupoidModel::Finite(fg), Arrow::Finite(i)) => {
                Arrow::Finite(fg.inverse[*i as usize])
            }
            (_, Arrow::Pair { i, j }) => Arrow::Pair { i: *j, j: *i },
            (GroupoidModel::Group { family }, Arrow::Grp(g)) => Arrow::Grp(family.inv(g)),
            (GroupoidModel::GroupBundle { family, .. }, Arrow::Bundle { unit, g }) => {
                Arrow::Bundle {
                    unit: *unit,
                    g: family.inv(g),
                }
            }
            (GroupoidModel::Transf(m), Arrow::Transf { point, g }) => Arrow::Transf {
                point: m.act(*point, g),
                g: m.family.inv(g),
            },
            (_, Arrow::Cyl { point, shift }) => Arrow::Cyl {
                point: point.shifted(*shift),
                shift: -shift,
            },
            _ => unreachable!("check_arrow filtered mismatches"),
        })
    }

    pub fn unit_arrow(&self, x: &Unit) -> Result<Arrow> {
        self.check_unit(x)?;
        Ok(match (self, x) {
            (GroupoidModel::Finite(fg), Unit::Idx(i)) => {
                Arrow::Finite(fg.unit_arrows[*i as usize])
            }
            (GroupoidModel::Pair { .. }, Unit::Idx(i)) => Arrow::Pair { i: *i, j: *i },
            (GroupoidModel::Group { family }, Unit::Idx(_)) => Arrow::Grp(family.identity()),
            (GroupoidModel::GroupBundle { family, .. }, Unit::Idx(i)) => Arrow::Bundle {
                unit: *i,
                g: family.identity(),
            },
            (GroupoidModel::Transf(m), Unit::Idx(i)) => Arrow::Transf {
                point: *i,
                g: m.family.identity(),
            },
            (GroupoidModel::Cyl(_), Unit::Point(p)) => Arrow::Cyl {
                point: p.clone(),
                shift: 0,
            },
            _ => unreachable!("check_unit filtered mismatches"),
        })
    }

    pub fn is_unit_arrow(&self, a: &Arrow) -> Result<bool> {
        let r = self.range(a)?;
        Ok(self.unit_arrow(&r)? == *a)
    }

    /// The full unit list for models with finitely many units.
    pub fn units(&self) -> Option<Vec<Unit>> {
        match self {
            GroupoidModel::Finite(fg) => {
                Some((0..fg.num_units).map(Unit::Idx).collect())
            }
            GroupoidModel::Pair { n } => Some((0..*n).map(Unit::Idx).collect()),
            GroupoidModel::Group { .. } => Some(vec![Unit::Idx(0)]),
            GroupoidModel::GroupBundle { num_units, .. } => {
                Some((0..*num_units).map(Unit::Idx).collect())
            }
            GroupoidModel::Transf(m) => {
                Some((0..m.point_count() as u32).map(Unit::Idx).collect())
            }
            GroupoidModel::Cyl(_) => None,
        }
    }

    /// Deterministic unit sample: exhaustive when the unit space is finite,
    /// admissible periodic points of period up to `depth` otherwise.
    pub fn sample_units(&self, depth: u32, bound: usize) -> Vec<Unit> {
        match self {
            GroupoidModel::Cyl(m) => m
                .sample_points(depth.max(1) as usize, bound)
                .into_iter()
                .map(Unit::Point)
                .collect(),
            _ => {
                let mut v = self.units().expect("all non-cylinder models are unit-finite");
                v.truncate(bound);
                v
            }
        }
    }

    /// The full arrow list for finite models; `None` when infinite.
    pub fn arrows(&self) -> Option<Vec<Arrow>> {
        match self {
            GroupoidModel::Finite(fg) => Some(
                (0..fg.arrow_count() as u32).map(Arrow::Finite).collect(),
            ),
            GroupoidModel::Pair { n } => {
                let mut v = Vec::with_capacity((*n as usize) * (*n as usize));
                for i in 0..*n {
                    for j in 0..*n {
                        v.push(Arrow::Pair { i, j });
                    }
                }
                Some(v)
            }
            GroupoidModel::Group { family } => {
                Some(family.elements()?.into_iter().map(Arrow::Grp).collect())
            }
            GroupoidModel::GroupBundle { num_units, family } => {
                let elems = family.elements()?;
                let mut v = Vec::with_capacity(*num_units as usize * elems.len());
                for unit in 0..*num_units {
                    for g in &elems {
                        v.push(Arrow::Bundle { unit, g: g.clone() });
                    }
                }
                Some(v)
            }
            GroupoidModel::Transf(m) => {
                let elems = m.family.elements()?;
                let mut v = Vec::with_capacity(m.point_count() * elems.len());
                for point in 0..m.point_count() as u32 {
                    for g in &elems {
                        v.push(Arrow::Transf { point, g: g.clone() });
                    }
                }
                Some(v)
            }
            GroupoidModel::Cyl(_) => None,
        }
    }

    /// Enumerate the source fiber G_x (arrows with s = x) or range fiber G^x
    /// up to `bound` arrows; the flag reports truncation.
    pub fn fiber(&self, x: &Unit, side: FiberSide, bound: usize) -> Result<(Vec<Arrow>, bool)> {
        self.check_unit(x)?;
        let take = |mut v: Vec<Arrow>| {
            let truncated = v.len() > bound;
            v.truncate(bound);
            (v, truncated)
        };
        Ok(match (self, x) {
            (GroupoidModel::Finite(fg), Unit::Idx(i)) => {
                let ids = match side {
                    FiberSide::Source => fg.source_fiber(*i),
                    FiberSide::Range => fg.range_fiber(*i),
                };
                take(ids.iter().map(|&a| Arrow::Finite(a)).collect())
            }
            (GroupoidModel::Pair { n }, Unit::Idx(u)) => take(
                (0..*n)
                    .map(|k| match side {
                        FiberSide::Source => Arrow::Pair { i: k, j: *u },
                        FiberSide::Range => Arrow::Pair { i: *u, j: k },
                    })
                    .collect(),
            ),
            (GroupoidModel::Group { family }, Unit::Idx(_)) => {
                let (elems, truncated) = family.ball(bound);
                (elems.into_iter().map(Arrow::Grp).collect(), truncated)
            }
            (GroupoidModel::GroupBundle { family, .. }, Unit::Idx(u)) => {
                let (elems, truncated) = family.ball(bound);
                (
                    elems
                        .into_iter()
                        .map(|g| Arrow::Bundle { unit: *u, g })
                        .collect(),
                    truncated,
                )
            }
            (GroupoidModel::Transf(m), Unit::Idx(u)) => {
                let (elems, truncated) = m.family.ball(bound);
                let arrows = elems
                    .into_iter()
                    .map(|g| match side {
                        // (y, g) with y.g = x, so y = x.g^{-1}.
                        FiberSide::Source => Arrow::Transf {
                            point: m.act(*u, &m.family.inv(&g)),
                            g,
                        },
                        FiberSide::Range => Arrow::Transf { point: *u, g },
                    })
                    .collect();
                (arrows, truncated)
            }
            (GroupoidModel::Cyl(_), Unit::Point(p)) => {
                let mut arrows = Vec::with_capacity(bound);
                let mut n: i64 = 0;
                while arrows.len() < bound {
                    arrows.push(match side {
                        // (y, n) with shift^n(y) = x, so y = shift^{-n}(x).
                        FiberSide::Source => Arrow::Cyl {
                            point: p.shifted(-n),
                            shift: n,
                        },
                        FiberSide::Range => Arrow::Cyl {
                            point: p.clone(),
                            shift: n,
                        },
                    });
                    n = if n > 0 { -n } else { -n + 1 };
                }
                (arrows, true)
            }
            _ => unreachable!("check_unit filtered mismatches"),
        })
    }

    /// Isotropy group at a unit: elements up to `bound` plus a structural
    /// tag derived from the constructor.
    pub fn isotropy_report(&self, x: &Unit, bound: usize) -> Result<IsotropyReport> {
        self.check_unit(x)?;
        match (self, x) {
            (GroupoidModel::Finite(fg), Unit::Idx(u)) => {
                let (table, arrow_ids) = finite_isotropy_table(fg, *u)?;
                let elements: Vec<Arrow> =
                    arrow_ids.iter().take(bound).map(|&a| Arrow::Finite(a)).collect();
                let truncated = arrow_ids.len() > bound;
                let tag = if arrow_ids.len() == 1 {
                    "trivial isotropy".to_string()
                } else {
                    format!("explicit isotropy group of order {}", arrow_ids.len())
                };
                let structure = if arrow_ids.len() == 1 {
                    IsotropyStructure::Trivial
                } else {
                    IsotropyStructure::ExplicitTable { table, arrow_ids }
                };
                Ok(IsotropyReport {
                    structure,
                    elements,
                    truncated,
                    tag,
                })
            }
            (GroupoidModel::Pair { .. }, Unit::Idx(u)) => Ok(IsotropyReport {
                structure: IsotropyStructure::Trivial,
                elements: vec![Arrow::Pair { i: *u, j: *u }],
                truncated: false,
                tag: "trivial isotropy".into(),
            }),
            (GroupoidModel::Group { family }, Unit::Idx(_)) => {
                let (elems, truncated) = family.ball(bound);
                Ok(IsotropyReport {
                    structure: IsotropyStructure::WholeGroup {
                        family: family.clone(),
                    },
                    elements: elems.into_iter().map(Arrow::Grp).collect(),
                    truncated,
                    tag: "whole constructor group".into(),
                })
            }
            (GroupoidModel::GroupBundle { family, .. }, Unit::Idx(u)) => {
                let (elems, truncated) = family.ball(bound);
                Ok(IsotropyReport {
                    structure: IsotropyStructure::WholeGroup {
                        family: family.clone(),
                    },
                    elements: elems
                        .into_iter()
                        .map(|g| Arrow::Bundle { unit: *u, g })
                        .collect(),
                    truncated,
                    tag: "whole bundle fiber group".into(),
                })
            }
            (GroupoidModel::Transf(m), Unit::Idx(u)) => {
                if let Some(stab) = m.stabilizer_elements(*u) {
                    let truncated = stab.len() > bound;
                    let elements: Vec<Arrow> = stab
                        .iter()
                        .take(bound)
                        .map(|g| Arrow::Transf {
                            point: *u,
                            g: g.clone(),
                        })
                        .collect();
                    let (structure, tag) = if stab.len() == 1 {
                        (IsotropyStructure::Trivial, "trivial isotropy".to_string())
                    } else {
                        let tag = format!("action stabilizer of order {}", stab.len());
                        (
                            IsotropyStructure::GroupElems {
                                family: m.family.clone(),
                                elems: stab,
                            },
                            tag,
                        )
                    };
                    Ok(IsotropyReport {
                        structure,
                        elements,
                        truncated,
                        tag,
                    })
                } else {
                    let basis = m
                        .stabilizer_lattice(*u)
                        .expect("infinite acting families are free abelian");
                    let rank = basis.len();
                    let ambient = match &m.family {
                        GroupFamily::FreeAbelian(d) => *d,
                        _ => unreachable!("lattice stabilizers only for free abelian"),
                    };
                    let mut elements = Vec::new();
                    for row in basis.iter().take(bound) {
                        elements.push(Arrow::Transf {
                            point: *u,
                            g: GroupElem::Z(row.clone()),
                        });
                    }
                    let structure = if rank == 0 {
                        IsotropyStructure::Trivial
                    } else {
                        IsotropyStructure::Lattice {
                            ambient_rank: ambient,
                            basis,
                        }
                    };
                    let tag = if rank == 0 {
                        "trivial isotropy".to_string()
                    } else {
                        format!("stabilizer lattice of rank {rank}")
                    };
                    Ok(IsotropyReport {
                        structure,
                        elements,
                        truncated: rank > bound,
                        tag,
                    })
                }
            }
            (GroupoidModel::Cyl(_), Unit::Point(p)) => {
                // A primitive point of period p is fixed by shift^n exactly
                // when p divides n.
                let period = p.period() as i64;
                let mut elements = Vec::new();
                let mut k: i64 = 0;
                while elements.len() < bound {
                    elements.push(Arrow::Cyl {
                        point: p.clone(),
                        shift: k * period,
                    });
                    k = if k > 0 { -k } else { -k + 1 };
                }
                Ok(IsotropyReport {
                    structure: IsotropyStructure::Lattice {
                        ambient_rank: 1,
                        basis: vec![vec![period]],
                    },
                    elements,
                    truncated: true,
                    tag: format!("period lattice {period}Z"),
                })
            }
            _ => unreachable!("check_unit filtered mismatches"),
        }
    }

    /// Depth-bounded certificate that a basic bundle lies in the interior of
    /// the isotropy. Discrete models are decided exactly; cylinder models
    /// may honestly answer Unknown.
    pub fn interior_isotropy_test(&self, b: &BundleDesc, depth: u32) -> Result<InteriorVerdict> {
        match (self, b) {
            (GroupoidModel::Cyl(m), BundleDesc::Window(bundle)) => {
                Ok(match m.interior_isotropy(bundle, depth)? {
                    cylinder::InteriorVerdict::Yes => InteriorVerdict::Yes,
                    cylinder::InteriorVerdict::No {
                        witness: (point, shift),
                    } => InteriorVerdict::No {
                        witness: Arrow::Cyl { point, shift },
                    },
                    cylinder::InteriorVerdict::Unknown { depth } => {
                        InteriorVerdict::Unknown { depth }
                    }
                })
            }
            (GroupoidModel::Cyl(m), BundleDesc::Single(a)) => {
                let Arrow::Cyl { point, shift } = a else {
                    return Err(self.mismatch("arrow"));
                };
                self.check_arrow(a)?;
                if point.shifted(*shift) != *point {
                    // Not even isotropy.
                    return Ok(InteriorVerdict::No { witness: a.clone() });
                }
                // Try to certify an isotropy neighborhood: the cylinder
                // window that pins the point on a region of radius
                // depth + |shift| around the origin.
                let radius = depth as i64 + shift.abs();
                let radius = radius.min(m.max_window);
                let window: cylinder::Window =
                    (-radius..=radius).map(|i| (i, point.at(i))).collect();
                match m.interior_isotropy(
                    &ArrowBundle {
                        window,
                        shift: *shift,
                    },
                    depth,
                )? {
                    cylinder::InteriorVerdict::Yes => Ok(InteriorVerdict::Yes),
                    _ => Ok(InteriorVerdict::Unknown { depth }),
                }
            }
            (_, BundleDesc::Single(a)) => {
                let (r, s) = self.endpoints(a)?;
                if r == s {
                    Ok(InteriorVerdict::Yes)
                } else {
                    Ok(InteriorVerdict::No { witness: a.clone() })
                }
            }
            (_, BundleDesc::Window(_)) => Err(self.mismatch("window bundle")),
        }
    }

    /// Depth-bounded topological principality test. Finite and discrete
    /// models are decided exactly; cylinder models enumerate basic bundles
    /// up to the depth.
    pub fn is_topologically_principal(&self, depth: u32) -> Result<Principality> {
        match self {
            GroupoidModel::Finite(fg) => {
                for a in 0..fg.arrow_count() as u32 {
                    let arrow = Arrow::Finite(a);
                    if fg.range[a as usize] == fg.source[a as usize]
                        && !self.is_unit_arrow(&arrow)?
                    {
                        return Ok(Principality::No {
                            witness: BundleDesc::Single(arrow),
                        });
                    }
                }
                Ok(Principality::Yes { depth })
            }
            GroupoidModel::Pair { .. } => Ok(Principality::Yes { depth }),
            GroupoidModel::Group { family } => {
                if family.order() == Some(1) {
                    Ok(Principality::Yes { depth })
                } else {
                    let witness = first_nonidentity(family);
                    Ok(Principality::No {
                        witness: BundleDesc::Single(Arrow::Grp(witness)),
                    })
                }
            }
            GroupoidModel::GroupBundle { family, .. } => {
                if family.order() == Some(1) {
                    Ok(Principality::Yes { depth })
                } else {
                    let witness = first_nonidentity(family);
                    Ok(Principality::No {
                        witness: BundleDesc::Single(Arrow::Bundle {
                            unit: 0,
                            g: witness,
                        }),
                    })
                }
            }
            GroupoidModel::Transf(m) => {
                for u in 0..m.point_count() as u32 {
                    match self.isotropy_report(&Unit::Idx(u), 2)?.structure {
                        IsotropyStructure::Trivial => {}
                        IsotropyStructure::GroupElems { elems, .. } => {
                            let g = elems
                                .into_iter()
                                .find(|g| *g != m.family.identity())
                                .expect("nontrivial stabilizer has a nonidentity element");
                            return Ok(Principality::No {
                                witness: BundleDesc::Single(Arrow::Transf { point: u, g }),
                            });
                        }
                        IsotropyStructure::Lattice { basis, .. } => {
                            let g = GroupElem::Z(basis[0].clone());
                            return Ok(Principality::No {
                                witness: BundleDesc::Single(Arrow::Transf { point: u, g }),
                            });
                        }
                        _ => unreachable!("transformation isotropy is stabilizer-shaped"),
                    }
                }
                Ok(Principality::Yes { depth })
            }
            GroupoidModel::Cyl(m) => Ok(match m.principality(depth)? {
                CylPrincipality::Yes { depth } => Principality::Yes { depth },
                CylPrincipality::No { witness } => Principality::No {
                    witness: BundleDesc::Window(witness),
                },
                CylPrincipality::Unknown { depth, reason } => {
                    Principality::Unknown { depth, reason }
                }
            }),
        }
    }

    /// Constructor-level amenability certificate, when the model class
    /// carries one. The certified catalog is fixed: finite groupoids and
    /// transformation groupoids of finite, free abelian, or lamplighter
    /// groups. Everything else reports no certificate.
    pub fn amenable_by_construction(&self) -> Option<String> {
        match self {
            GroupoidModel::Finite(_) | GroupoidModel::Pair { .. } => {
                Some("finite groupoid".into())
            }
            GroupoidModel::Group { family } | GroupoidModel::Transf(TransfModel { family, .. }) => {
                Some(format!(
                    "transformation groupoid of {}",
                    amenable_family_phrase(family)?
                ))
            }
            GroupoidModel::GroupBundle { family, .. } => {
                if family.is_finite() {
                    Some("finite groupoid".into())
                } else {
                    None
                }
            }
            GroupoidModel::Cyl(_) => {
                Some("transformation groupoid of the integers (free abelian of rank 1)".into())
            }
        }
    }

    /// Whether unit enumeration is exhaustive, so per-unit analyses cover
    /// the whole unit space.
    pub fn units_exhaustive(&self) -> bool {
        !matches!(self, GroupoidModel::Cyl(_))
    }

    pub fn unit_label(&self, x: &Unit) -> String {
        match (self, x) {
            (GroupoidModel::Transf(m), Unit::Idx(i)) => m.point_names[*i as usize].clone(),
            (_, Unit::Idx(i)) => format!("u{i}"),
            (_, Unit::Point(p)) => p.label(),
        }
    }

    pub fn arrow_label(&self, a: &Arrow) -> String {
        match (self, a) {
            (GroupoidModel::Finite(_), Arrow::Finite(i)) => format!("a{i}"),
            (_, Arrow::Pair { i, j }) => format!("({i},{j})"),
            (GroupoidModel::Group { family }, Arrow::Grp(g)) => family.elem_label(g),
            (GroupoidModel::GroupBundle { family, .. }, Arrow::Bundle { unit, g }) => {
                format!("(u{unit}; {})", family.elem_label(g))
            }
            (GroupoidModel::Transf(m), Arrow::Transf { point, g }) => format!(
                "({}; {})",
                m.point_names[*point as usize],
                m.family.elem_label(g)
            ),
            (_, Arrow::Cyl { point, shift }) => format!("({}; {shift})", point.label()),
            _ => format!("{a:?}"),
        }
    }

    pub fn arrow_to_json(&self, a: &Arrow) -> Value {
        match (self, a) {
            (GroupoidModel::Finite(_), Arrow::Finite(i)) => json!({ "id": i }),
            (_, Arrow::Pair { i, j }) => json!({ "i": i, "j": j }),
            (GroupoidModel::Group { family }, Arrow::Grp(g)) => family.elem_to_json(g),
            (GroupoidModel::GroupBundle { family, .. }, Arrow::Bundle { unit, g }) => {
                json!({ "unit": unit, "g": family.elem_to_json(g) })
            }
            (GroupoidModel::Transf(m), Arrow::Transf { point, g }) => json!({
                "point": m.point_names[*point as usize],
                "g": m.family.elem_to_json(g),
            }),
            (_, Arrow::Cyl { point, shift }) => json!({
                "point": word_to_string(point.seed()),
                "shift": shift,
            }),
            _ => Value::Null,
        }
    }

    pub fn arrow_from_json(&self, v: &Value) -> Result<Arrow> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parse(format!("arrow must be an object, got {v}")))?;
        let arrow = match self {
            GroupoidModel::Finite(_) => {
                let id = require_u32(obj, "id", "finite arrow")?;
                Arrow::Finite(id)
            }
            GroupoidModel::Pair { .. } => {
                let i = require_u32(obj, "i", "pair arrow")?;
                let j = require_u32(obj, "j", "pair arrow")?;
                Arrow::Pair { i, j }
            }
            GroupoidModel::Group { family } => Arrow::Grp(family.elem_from_json(v)?),
            GroupoidModel::GroupBundle { family, .. } => {
                let unit = require_u32(obj, "unit", "bundle arrow")?;
                let g = obj
                    .get("g")
                    .ok_or_else(|| Error::Parse("bundle arrow needs field \"g\"".into()))?;
                Arrow::Bundle {
                    unit,
                    g: family.elem_from_json(g)?,
                }
            }
            GroupoidModel::Transf(m) => {
                let point = match obj.get("point") {
                    Some(Value::String(name)) => m.point_index(name).ok_or_else(|| {
                        Error::UnknownArrow(format!("unknown point name {name:?}"))
                    })?,
                    Some(other) => other
                        .as_u64()
                        .map(|k| k as u32)
                        .ok_or_else(|| Error::Parse("point must be a name or index".into()))?,
                    None => return Err(Error::Parse("transformation arrow needs \"point\"".into())),
                };
                let g = obj
                    .get("g")
                    .ok_or_else(|| Error::Parse("transformation arrow needs \"g\"".into()))?;
                Arrow::Transf {
                    point,
                    g: m.family.elem_from_json(g)?,
                }
            }
            GroupoidModel::Cyl(m) => {
                let word = obj
                    .get("point")
                    .and_then(|w| w.as_str())
                    .ok_or_else(|| Error::Parse("shift arrow needs a \"point\" word".into()))?;
                let shift = obj
                    .get("shift")
                    .and_then(|s| s.as_i64())
                    .ok_or_else(|| Error::Parse("shift arrow needs an integer \"shift\"".into()))?;
                let seed = string_to_word(word, m.alphabet)?;
                Arrow::Cyl {
                    point: PeriodicWord::new(seed)?,
                    shift,
                }
            }
        };
        self.check_arrow(&arrow)?;
        Ok(arrow)
    }
}

fn first_nonidentity(family: &GroupFamily) -> GroupElem {
    let (ball, _) = family.ball(8);
    ball.into_iter()
        .find(|g| *g != family.identity())
        .expect("nontrivial group has a nonidentity element in any ball of size > 1")
}

fn amenable_family_phrase(family: &GroupFamily) -> Option<String> {
    match family {
        GroupFamily::FreeAbelian(d) => Some(format!("a free abelian group of rank {d}")),
        GroupFamily::Cyclic(_) | GroupFamily::Product(_) | GroupFamily::Table(_) => {
            Some("a finite group".into())
        }
        GroupFamily::Lamplighter { modulus } => {
            Some(format!("a lamplighter group over Z with modulus {modulus}"))
        }
    }
}

/// Extract the isotropy group at a unit of a finite explicit model as a
/// validated multiplication table; returns the table and the arrow id
/// realizing each table element (index 0 is the unit arrow).
pub fn finite_isotropy_table(fg: &FiniteGroupoid, unit: u32) -> Result<(GroupTable, Vec<u32>)> {
    let mut ids: Vec<u32> = (0..fg.arrow_count() as u32)
        .filter(|&a| fg.range[a as usize] == unit && fg.source[a as usize] == unit)
        .collect();
    let e = fg.unit_arrows[unit as usize];
    ids.sort();
    // Put the unit arrow first so table index 0 is the identity.
    let pos = ids.iter().position(|&a| a == e).expect("unit arrow is isotropy");
    ids.swap(0, pos);
    let index_of = |a: u32| ids.iter().position(|&b| b == a);
    let mut rows = Vec::with_capacity(ids.len());
    for &a in &ids {
        let mut row = Vec::with_capacity(ids.len());
        for &b in &ids {
            let c = fg.compose(a, b).ok_or_else(|| Error::Structure {
                reason: "isotropy arrows at one unit must compose".into(),
                witness: format!("a{a} . a{b}"),
            })?;
            let k = index_of(c).ok_or_else(|| Error::Structure {
                reason: "isotropy composition left the isotropy group".into(),
                witness: format!("a{a} . a{b} = a{c}"),
            })?;
            row.push(k as u32);
        }
        rows.push(row);
    }
    let names = ids.iter().map(|a| format!("a{a}")).collect();
    let table = GroupTable::new(rows, Some(names))?;
    Ok((table, ids))
}

fn word_to_string(seed: &[u8]) -> String {
    seed.iter()
        .map(|&s| char::from_digit(s as u32, 16).expect("alphabet symbols are below 16"))
        .collect()
}

fn string_to_word(word: &str, alphabet: u8) -> Result<Vec<u8>> {
    word.chars()
        .map(|c| {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::Parse(format!("bad symbol {c:?} in word {word:?}")))?;
            if v >= alphabet as u32 {
                return Err(Error::Parse(format!(
                    "symbol {c:?} outside alphabet of size {alphabet}"
                )));
            }
            Ok(v as u8)
        })
        .collect()
}

fn require_u32(obj: &Map<String, Value>, key: &str, what: &str) -> Result<u32> {
    obj.get(key)
        .and_then(|v| v.as_u64())
        .map(|v| v as u32)
        .ok_or_else(|| Error::Parse(format!("{what} needs a nonnegative integer field {key:?}")))
}

pub const MODEL_FORMAT: &str = "model/1";

/// Parse and validate a model description.
pub fn build_model(v: &Value) -> Result<GroupoidModel> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse("model spec must be a JSON object".into()))?;
    let format = obj
        .get("format")
        .and_then(|f| f.as_str())
        .ok_or_else(|| Error::MalformedSpec("model spec needs a \"format\" field".into()))?;
    if format != MODEL_FORMAT {
        return Err(Error::MalformedSpec(format!(
            "unsupported model format {format:?}, expected {MODEL_FORMAT:?}"
        )));
    }
    let kind = obj
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| Error::MalformedSpec("model spec needs a \"kind\" field".into()))?;
    match kind {
        "pair" => {
            check_fields(obj, &["format", "kind", "n"], "pair model")?;
            let n = require_u64(obj, "n", "pair model")?;
            if n == 0 || n > 4096 {
                return Err(Error::MalformedSpec(format!(
                    "pair model size must be in 1..=4096, got {n}"
                )));
            }
            Ok(GroupoidModel::Pair { n: n as u32 })
        }
        "finite-explicit" => {
            check_fields(
                obj,
                &[
                    "format",
                    "kind",
                    "num-units",
                    "unit-arrows",
                    "range",
                    "source",
                    "inverse",
                    "compose",
                ],
                "finite model",
            )?;
            let num_units = require_u64(obj, "num-units", "finite model")? as u32;
            let unit_arrows = require_u32_array(obj, "unit-arrows")?;
            let range = require_u32_array(obj, "range")?;
            let source = require_u32_array(obj, "source")?;
            let inverse = require_u32_array(obj, "inverse")?;
            let compose = obj
                .get("compose")
                .and_then(|c| c.as_array())
                .ok_or_else(|| {
                    Error::MalformedSpec("finite model needs a \"compose\" array".into())
                })?
                .iter()
                .map(|t| {
                    let triple = t
                        .as_array()
                        .filter(|a| a.len() == 3)
                        .ok_or_else(|| Error::Parse("compose entries are [a, b, ab]".into()))?;
                    let mut it = triple.iter().map(|x| {
                        x.as_u64()
                            .map(|v| v as u32)
                            .ok_or_else(|| Error::Parse("compose entries hold arrow ids".into()))
                    });
                    Ok((
                        it.next().unwrap()?,
                        it.next().unwrap()?,
                        it.next().unwrap()?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GroupoidModel::Finite(FiniteGroupoid::from_tables(
                num_units,
                unit_arrows,
                range,
                source,
                inverse,
                compose,
            )?))
        }
        "group" => {
            check_fields(obj, &["format", "kind", "family"], "group model")?;
            let family = parse_family(
                obj.get("family")
                    .ok_or_else(|| Error::MalformedSpec("group model needs \"family\"".into()))?,
            )?;
            family.validate_spec()?;
            Ok(GroupoidModel::Group { family })
        }
        "group-bundle" => {
            check_fields(
                obj,
                &["format", "kind", "num-units", "family"],
                "group bundle model",
            )?;
            let num_units = require_u64(obj, "num-units", "group bundle")? as u32;
            if num_units == 0 || num_units > 4096 {
                return Err(Error::MalformedSpec(format!(
                    "group bundle unit count must be in 1..=4096, got {num_units}"
                )));
            }
            let family = parse_family(obj.get("family").ok_or_else(|| {
                Error::MalformedSpec("group bundle model needs \"family\"".into())
            })?)?;
            family.validate_spec()?;
            Ok(GroupoidModel::GroupBundle { num_units, family })
        }
        "transformation-finite" => {
            check_fields(
                obj,
                &["format", "kind", "points", "family", "action"],
                "transformation model",
            )?;
            let points = obj
                .get("points")
                .and_then(|p| p.as_array())
                .ok_or_else(|| {
                    Error::MalformedSpec("transformation model needs a \"points\" array".into())
                })?
                .iter()
                .map(|p| {
                    p.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| Error::Parse("point names must be strings".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            let family = parse_family(obj.get("family").ok_or_else(|| {
                Error::MalformedSpec("transformation model needs \"family\"".into())
            })?)?;
            let action = TransfModel::parse_action(obj.get("action").ok_or_else(|| {
                Error::MalformedSpec("transformation model needs \"action\"".into())
            })?)?;
            Ok(GroupoidModel::Transf(TransfModel::new(
                points, family, action,
            )?))
        }
        "cylinder-shift" => {
            check_fields(
                obj,
                &["format", "kind", "alphabet", "forbidden", "max-window"],
                "cylinder model",
            )?;
            let alphabet = obj
                .get("alphabet")
                .and_then(|a| a.as_i64())
                .ok_or_else(|| {
                    Error::MalformedSpec("cylinder model needs an integer \"alphabet\"".into())
                })?;
            if alphabet < 0 {
                return Err(Error::MalformedSpec(format!(
                    "alphabet size must be positive, got {alphabet}"
                )));
            }
            let alphabet = u8::try_from(alphabet).map_err(|_| {
                Error::MalformedSpec(format!("alphabet size {alphabet} out of range"))
            })?;
            let forbidden = match obj.get("forbidden") {
                None => Vec::new(),
                Some(f) => f
                    .as_array()
                    .ok_or_else(|| Error::MalformedSpec("\"forbidden\" must be an array".into()))?
                    .iter()
                    .map(|w| {
                        let s = w
                            .as_str()
                            .ok_or_else(|| Error::Parse("forbidden words are strings".into()))?;
                        string_to_word(s, alphabet.max(1))
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            let max_window = match obj.get("max-window") {
                None => None,
                Some(m) => Some(m.as_i64().ok_or_else(|| {
                    Error::MalformedSpec("\"max-window\" must be an integer".into())
                })?),
            };
            Ok(GroupoidModel::Cyl(CylModel::new(
                alphabet, forbidden, max_window,
            )?))
        }
        other => Err(Error::MalformedSpec(format!(
            "unknown model kind {other:?}"
        ))),
    }
}

/// Canonical JSON form of a model; `build_model` of the output reproduces
/// the model.
pub fn model_to_json(m: &GroupoidModel) -> Value {
    match m {
        GroupoidModel::Pair { n } => json!({
            "format": MODEL_FORMAT,
            "kind": "pair",
            "n": n,
        }),
        GroupoidModel::Finite(fg) => {
            let compose: Vec<Value> = {
                let mut triples = Vec::new();
                for a in 0..fg.arrow_count() as u32 {
                    for b in 0..fg.arrow_count() as u32 {
                        if let Some(c) = fg.compose(a, b) {
                            triples.push(json!([a, b, c]));
                        }
                    }
                }
                triples
            };
            json!({
                "format": MODEL_FORMAT,
                "kind": "finite-explicit",
                "num-units": fg.num_units,
                "unit-arrows": fg.unit_arrows,
                "range": fg.range,
                "source": fg.source,
                "inverse": fg.inverse,
                "compose": compose,
            })
        }
        GroupoidModel::Group { family } => json!({
            "format": MODEL_FORMAT,
            "kind": "group",
            "family": family_to_json(family),
        }),
        GroupoidModel::GroupBundle { num_units, family } => json!({
            "format": MODEL_FORMAT,
            "kind": "group-bundle",
            "num-units": num_units,
            "family": family_to_json(family),
        }),
        GroupoidModel::Transf(t) => json!({
            "format": MODEL_FORMAT,
            "kind": "transformation-finite",
            "points": t.point_names,
            "family": family_to_json(&t.family),
            "action": t.action_to_json(),
        }),
        GroupoidModel::Cyl(c) => json!({
            "format": MODEL_FORMAT,
            "kind": "cylinder-shift",
            "alphabet": c.alphabet,
            "forbidden": c.forbidden.iter().map(|w| word_to_string(w)).collect::<Vec<_>>(),
            "max-window": c.max_window,
        }),
    }
}

pub fn parse_family(v: &Value) -> Result<GroupFamily> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Parse("group family must be an object".into()))?;
    let tag = obj
        .get("family")
        .and_then(|t| t.as_str())
        .ok_or_else(|| Error::MalformedSpec("group family needs a \"family\" tag".into()))?;
    let family = match tag {
        "free-abelian" => {
            check_fields(obj, &["family", "rank"], "free abelian family")?;
            GroupFamily::FreeAbelian(require_u64(obj, "rank", "free abelian family")? as u32)
        }
        "cyclic" => {
            check_fields(obj, &["family", "order"], "cyclic family")?;
            GroupFamily::Cyclic(require_u64(obj, "order", "cyclic family")?)
        }
        "product-of-cyclics" => {
            check_fields(obj, &["family", "orders"], "product family")?;
            let orders = obj
                .get("orders")
                .and_then(|o| o.as_array())
                .ok_or_else(|| Error::MalformedSpec("product family needs \"orders\"".into()))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .ok_or_else(|| Error::Parse("orders must be positive integers".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            GroupFamily::Product(orders)
        }
        "table" => {
            check_fields(obj, &["family", "mul", "names"], "table family")?;
            let mul = obj
                .get("mul")
                .and_then(|m| m.as_array())
                .ok_or_else(|| Error::MalformedSpec("table family needs \"mul\" rows".into()))?
                .iter()
                .map(|row| {
                    row.as_array()
                        .ok_or_else(|| Error::Parse("mul rows are arrays".into()))?
                        .iter()
                        .map(|x| {
                            x.as_u64()
                                .map(|v| v as u32)
                                .ok_or_else(|| Error::Parse("mul entries are indices".into()))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let names = match obj.get("names") {
                None => None,
                Some(n) => Some(
                    n.as_array()
                        .ok_or_else(|| Error::Parse("names must be an array".into()))?
                        .iter()
                        .map(|x| {
                            x.as_str()
                                .map(str::to_string)
                                .ok_or_else(|| Error::Parse("names must be strings".into()))
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
            };
            GroupFamily::Table(GroupTable::new(mul, names)?)
        }
        "lamplighter-over-z" => {
            check_fields(obj, &["family", "modulus"], "lamplighter family")?;
            GroupFamily::Lamplighter {
                modulus: require_u64(obj, "modulus", "lamplighter family")?,
            }
        }
        other => {
            return Err(Error::MalformedSpec(format!(
                "unknown group family {other:?}"
            )))
        }
    };
    family.validate_spec()?;
    Ok(family)
}

pub fn family_to_json(f: &GroupFamily) -> Value {
    match f {
        GroupFamily::FreeAbelian(d) => json!({ "family": "free-abelian", "rank": d }),
        GroupFamily::Cyclic(n) => json!({ "family": "cyclic", "order": n }),
        GroupFamily::Product(ms) => json!({ "family": "product-of-cyclics", "orders": ms }),
        GroupFamily::Table(t) => {
            let mut rows = Vec::with_capacity(t.order as usize);
            for a in 0..t.order {
                rows.push((0..t.order).map(|b| t.mul(a, b)).collect::<Vec<_>>());
            }
            json!({ "family": "table", "mul": rows, "names": t.names })
        }
        GroupFamily::Lamplighter { modulus } => {
            json!({ "family": "lamplighter-over-z", "modulus": modulus })
        }
    }
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

fn require_u64(obj: &Map<String, Value>, key: &str, what: &str) -> Result<u64> {
    obj.get(key)
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedSpec(format!("{what} needs a nonnegative integer {key:?}")))
}

fn require_u32_array(obj: &Map<String, Value>, key: &str) -> Result<Vec<u32>> {
    obj.get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::MalformedSpec(format!("missing array field {key:?}")))?
        .iter()
        .map(|x| {
            x.as_u64()
                .map(|v| v as u32)
                .ok_or_else(|| Error::Parse(format!("entries of {key:?} are arrow ids")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::transformation::Action;
    use super::*;

    fn pair3() -> GroupoidModel {
        GroupoidModel::Pair { n: 3 }
    }

    fn z_model() -> GroupoidModel {
        GroupoidModel::Group {
            family: GroupFamily::FreeAbelian(1),
        }
    }

    #[test]
    fn pair_structure() {
        let m = pair3();
        let a = Arrow::Pair { i: 0, j: 1 };
        let b = Arrow::Pair { i: 1, j: 2 };
        assert_eq!(m.compose(&a, &b).unwrap(), Arrow::Pair { i: 0, j: 2 });
        assert_eq!(m.invert(&a).unwrap(), Arrow::Pair { i: 1, j: 0 });
        let bad = m.compose(&a, &Arrow::Pair { i: 2, j: 0 });
        assert!(matches!(bad, Err(Error::NotComposable { .. })));
        assert_eq!(m.arrows().unwrap().len(), 9);
        assert_eq!(m.units().unwrap().len(), 3);
        let (fiber, truncated) = m.fiber(&Unit::Idx(1), FiberSide::Source, 10).unwrap();
        assert_eq!(fiber.len(), 3);
        assert!(!truncated);
        assert!(fiber.iter().all(|a| m.source(a).unwrap() == Unit::Idx(1)));
    }

    #[test]
    fn group_z_structure() {
        let m = z_model();
        let two = Arrow::Grp(GroupElem::Z(vec![2]));
        let three = Arrow::Grp(GroupElem::Z(vec![3]));
        assert_eq!(
            m.compose(&two, &three).unwrap(),
            Arrow::Grp(GroupElem::Z(vec![5]))
        );
        assert_eq!(
            m.invert(&two).unwrap(),
            Arrow::Grp(GroupElem::Z(vec![-2]))
        );
        assert!(m.arrows().is_none());
        let (fiber, truncated) = m.fiber(&Unit::Idx(0), FiberSide::Source, 5).unwrap();
        assert_eq!(fiber.len(), 5);
        assert!(truncated);
    }

    #[test]
    fn cylinder_arrows() {
        let m = GroupoidModel::Cyl(CylModel::new(2, vec![], None).unwrap());
        let x = PeriodicWord::new(vec![0, 1]).unwrap();
        let a = Arrow::Cyl {
            point: x.clone(),
            shift: 2,
        };
        let inv = m.invert(&a).unwrap();
        assert_eq!(
            inv,
            Arrow::Cyl {
                point: x.shifted(2),
                shift: -2
            }
        );
        assert_eq!(m.compose(&a, &inv).unwrap(), m.unit_arrow(&Unit::Point(x.clone())).unwrap());
        let (fiber, truncated) = m.fiber(&Unit::Point(x), FiberSide::Source, 5).unwrap();
        assert!(truncated);
        let shifts: Vec<i64> = fiber
            .iter()
            .map(|a| match a {
                Arrow::Cyl { shift, .. } => *shift,
                _ => unreachable!(),
            })
            .collect();
        let mut sorted = shifts.clone();
        sorted.sort();
        assert_eq!(sorted, vec![-2, -1, 0, 1, 2]);
        for a in &fiber {
            assert_eq!(
                m.source(a).unwrap(),
                Unit::Point(PeriodicWord::new(vec![0, 1]).unwrap())
            );
        }
    }

    #[test]
    fn transformation_endpoints_follow_convention() {
        let t = TransfModel::new(
            vec!["a".into(), "b".into()],
            GroupFamily::Cyclic(4),
            Action::Perms(vec![vec![1, 0]]),
        )
        .unwrap();
        let m = GroupoidModel::Transf(t);
        let a = Arrow::Transf {
            point: 0,
            g: GroupElem::C(1),
        };
        let (r, s) = m.endpoints(&a).unwrap();
        assert_eq!(r, Unit::Idx(0));
        assert_eq!(s, Unit::Idx(1));
        let rep = m.isotropy_report(&Unit::Idx(0), 10).unwrap();
        match rep.structure {
            IsotropyStructure::GroupElems { elems, .. } => {
                assert_eq!(elems, vec![GroupElem::C(0), GroupElem::C(2)]);
            }
            s => panic!("expected stabilizer elements, got {s:?}"),
        }
    }

    #[test]
    fn isotropy_of_cylinder_point() {
        let m = GroupoidModel::Cyl(CylModel::new(2, vec![], None).unwrap());
        let x = Unit::Point(PeriodicWord::new(vec![0, 1]).unwrap());
        let rep = m.isotropy_report(&x, 3).unwrap();
        assert_eq!(
            rep.structure,
            IsotropyStructure::Lattice {
                ambient_rank: 1,
                basis: vec![vec![2]]
            }
        );
        let shifts: Vec<i64> = rep
            .elements
            .iter()
            .map(|a| match a {
                Arrow::Cyl { shift, .. } => *shift,
                _ => unreachable!(),
            })
            .collect();
        assert!(shifts.contains(&2) && shifts.contains(&-2));
    }

    #[test]
    fn finite_isotropy_table_is_a_group() {
        // Two units; unit 0 carries an order-2 isotropy group.
        let fg = FiniteGroupoid::from_tables(
            2,
            vec![0, 2],
            vec![0, 0, 1],
            vec![0, 0, 1],
            vec![0, 1, 2],
            vec![
                (0, 0, 0),
                (0, 1, 1),
                (1, 0, 1),
                (1, 1, 0),
                (2, 2, 2),
            ],
        )
        .unwrap();
        let (table, ids) = finite_isotropy_table(&fg, 0).unwrap();
        assert_eq!(table.order, 2);
        assert_eq!(ids, vec![0, 1]);
        let m = GroupoidModel::Finite(fg);
        match m.is_topologically_principal(1).unwrap() {
            Principality::No { witness } => {
                assert_eq!(witness, BundleDesc::Single(Arrow::Finite(1)));
            }
            v => panic!("expected No, got {v:?}"),
        }
    }

    #[test]
    fn principality_dispatch() {
        assert_eq!(
            pair3().is_topologically_principal(1).unwrap(),
            Principality::Yes { depth: 1 }
        );
        assert!(matches!(
            z_model().is_topologically_principal(1).unwrap(),
            Principality::No { .. }
        ));
        let full = GroupoidModel::Cyl(CylModel::new(2, vec![], None).unwrap());
        assert_eq!(
            full.is_topologically_principal(4).unwrap(),
            Principality::Yes { depth: 4 }
        );
        let t = TransfModel::new(
            vec!["a".into(), "b".into()],
            GroupFamily::Cyclic(4),
            Action::Perms(vec![vec![1, 0]]),
        )
        .unwrap();
        match GroupoidModel::Transf(t).is_topologically_principal(1).unwrap() {
            Principality::No {
                witness: BundleDesc::Single(Arrow::Transf { point: 0, g }),
            } => assert_eq!(g, GroupElem::C(2)),
            v => panic!("expected stabilizer witness, got {v:?}"),
        }
    }

    #[test]
    fn amenability_catalog() {
        assert!(pair3().amenable_by_construction().is_some());
        assert!(z_model().amenable_by_construction().is_some());
        let finite_bundle = GroupoidModel::GroupBundle {
            num_units: 2,
            family: GroupFamily::Cyclic(2),
        };
        assert!(finite_bundle.amenable_by_construction().is_some());
        let z_bundle = GroupoidModel::GroupBundle {
            num_units: 2,
            family: GroupFamily::FreeAbelian(1),
        };
        assert!(z_bundle.amenable_by_construction().is_none());
    }

    #[test]
    fn model_spec_round_trip() {
        let specs = [
            json!({"format": "model/1", "kind": "pair", "n": 3}),
            json!({"format": "model/1", "kind": "group",
                   "family": {"family": "free-abelian", "rank": 2}}),
            json!({"format": "model/1", "kind": "group-bundle", "num-units": 2,
                   "family": {"family": "cyclic", "order": 3}}),
            json!({"format": "model/1", "kind": "transformation-finite",
                   "points": ["a", "b"],
                   "family": {"family": "cyclic", "order": 4},
                   "action": {"generators": [[1, 0]]}}),
            json!({"format": "model/1", "kind": "cylinder-shift",
                   "alphabet": 2, "forbidden": ["00", "11"], "max-window": 32}),
        ];
        for spec in specs {
            let model = build_model(&spec).unwrap();
            let canonical = model_to_json(&model);
            let reparsed = build_model(&canonical).unwrap();
            assert_eq!(model_to_json(&reparsed), canonical);
        }
    }

    #[test]
    fn model_spec_rejections() {
        let negative_alphabet = json!({
            "format": "model/1", "kind": "cylinder-shift", "alphabet": -2, "forbidden": []
        });
        assert!(matches!(
            build_model(&negative_alphabet),
            Err(Error::MalformedSpec(_))
        ));
        let unknown_field = json!({"format": "model/1", "kind": "pair", "n": 3, "extra": 1});
        assert!(matches!(
            build_model(&unknown_field),
            Err(Error::MalformedSpec(_))
        ));
        let bad_format = json!({"format": "model/2", "kind": "pair", "n": 3});
        assert!(matches!(
            build_model(&bad_format),
            Err(Error::MalformedSpec(_))
        ));
        // Broken composition: r(ab) mismatch is caught by table validation.
        let broken = json!({
            "format": "model/1", "kind": "finite-explicit",
            "num-units": 2, "unit-arrows": [0, 1],
            "range": [0, 1], "source": [0, 1], "inverse": [0, 1],
            "compose": [[0, 0, 0], [1, 1, 0]]
        });
        assert!(matches!(build_model(&broken), Err(Error::Structure { .. })));
    }

    #[test]
    fn arrow_json_round_trip() {
        let m = pair3();
        let a = Arrow::Pair { i: 0, j: 2 };
        let v = m.arrow_to_json(&a);
        assert_eq!(m.arrow_from_json(&v).unwrap(), a);

        let z = z_model();
        let g = Arrow::Grp(GroupElem::Z(vec![-3]));
        assert_eq!(z.arrow_from_json(&z.arrow_to_json(&g)).unwrap(), g);
        assert_eq!(z.arrow_from_json(&json!({"n": -3})).unwrap(), g);

        let cyl = GroupoidModel::Cyl(CylModel::new(2, vec![], None).unwrap());
        let c = Arrow::Cyl {
            point: PeriodicWord::new(vec![0, 1]).unwrap(),
            shift: -2,
        };
        assert_eq!(cyl.arrow_from_json(&cyl.arrow_to_json(&c)).unwrap(), c);
    }

    #[test]
    fn interior_test_dispatch() {
        let m = pair3();
        assert!(matches!(
            m.interior_isotropy_test(&BundleDesc::Single(Arrow::Pair { i: 0, j: 0 }), 1)
                .unwrap(),
            InteriorVerdict::Yes
        ));
        assert!(matches!(
            m.interior_isotropy_test(&BundleDesc::Single(Arrow::Pair { i: 0, j: 1 }), 1)
                .unwrap(),
            InteriorVerdict::No { .. }
        ));
        // Single-arrow query on the alternating subshift: the period-2 point
        // with shift 2 is certified interior.
        let alt = GroupoidModel::Cyl(
            CylModel::new(2, vec![vec![0, 0], vec![1, 1]], None).unwrap(),
        );
        let x = PeriodicWord::new(vec![0, 1]).unwrap();
        assert!(matches!(
            alt.interior_isotropy_test(
                &BundleDesc::Single(Arrow::Cyl {
                    point: x.clone(),
                    shift: 2
                }),
                2
            )
            .unwrap(),
            InteriorVerdict::Yes
        ));
        // The same arrow on the full shift cannot be certified.
        let full = GroupoidModel::Cyl(CylModel::new(2, vec![], None).unwrap());
        assert!(matches!(
            full.interior_isotropy_test(
                &BundleDesc::Single(Arrow::Cyl {
                    point: x.clone(),
                    shift: 2
                }),
                2
            )
            .unwrap(),
            InteriorVerdict::Unknown { .. }
        ));
        // A non-isotropy cylinder arrow is a certified No.
        assert!(matches!(
            full.interior_isotropy_test(
                &BundleDesc::Single(Arrow::Cyl { point: x, shift: 1 }),
                2
            )
            .unwrap(),
            InteriorVerdict::No { .. }
        ));
    }
}
