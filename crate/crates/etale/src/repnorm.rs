//! Twisted regular representations and norm computation: compressed
//! representation matrices, power-iteration operator norms, certified
//! `[lower, I-norm]` intervals for the reduced norm, a Fourier oracle for
//! untwisted integer lattices, and block decomposition of finite twisted
//! algebras.
//!
//! Compressions only ever certify lower bounds; truncation boundaries are
//! reported, never padded.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cocycle::{self, TwoCocycle};
use crate::coeff::Coeff;
use crate::element::{involve, Element, SupportKey};
use crate::error::{Error, Result};
use crate::groupoid::group::{GroupElem, GroupFamily};
use crate::groupoid::{Arrow, FiberSide, GroupoidModel, Unit};

/// The compressed matrix of a twisted left-convolution operator on one
/// source fiber, over an ordered truncation basis.
#[derive(Clone, Debug)]
pub struct RepMatrix {
    pub unit: Unit,
    pub basis: Vec<Arrow>,
    /// The fiber enumeration stopped at the truncation bound.
    pub truncated: bool,
    entries: Vec<Coeff>,
}

impl RepMatrix {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> &Coeff {
        &self.entries[row * self.basis.len() + col]
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.entries.iter().map(Coeff::to_complex).collect()
    }

    /// Exact matrix product over a shared basis.
    pub fn mul(&self, other: &RepMatrix) -> Result<RepMatrix> {
        if self.basis != other.basis {
            return Err(Error::ModelMismatch(
                "representation matrices over different bases".into(),
            ));
        }
        let n = self.dim();
        let mut entries = vec![Coeff::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entry(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = other.entry(k, j);
                    if !b.is_zero() {
                        entries[i * n + j] = entries[i * n + j].add(&a.mul(b));
                    }
                }
            }
        }
        Ok(RepMatrix {
            unit: self.unit.clone(),
            basis: self.basis.clone(),
            truncated: self.truncated || other.truncated,
            entries,
        })
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> RepMatrix {
        let n = self.dim();
        let mut entries = vec![Coeff::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                entries[j * n + i] = self.entry(i, j).conj();
            }
        }
        RepMatrix {
            unit: self.unit.clone(),
            basis: self.basis.clone(),
            truncated: self.truncated,
            entries,
        }
    }
}

/// The compressed matrix of left twisted convolution by `f` on the source
/// fiber at `x`: entry `(c', c)` is `sigma(c' c^{-1}, c) f(c' c^{-1})`.
pub fn regular_rep_matrix(
    sigma: &TwoCocycle,
    f: &Element,
    x: &Unit,
    truncation: usize,
) -> Result<RepMatrix> {
    let model = f.model();
    cocycle::check_compatibility(model, sigma)?;
    model.check_unit(x)?;
    let (basis, truncated) = model.fiber(x, FiberSide::Source, truncation)?;
    let n = basis.len();
    let mut entries = vec![Coeff::zero(); n * n];
    for (col, gamma) in basis.iter().enumerate() {
        let gamma_inv = model.invert(gamma)?;
        for (row, gamma_p) in basis.iter().enumerate() {
            // Both arrows share the source x, so the connector composes.
            let mu = model.compose(gamma_p, &gamma_inv)?;
            let c = f.eval_arrow(&mu);
            if c.is_zero() {
                continue;
            }
            let phase = cocycle::eval_unchecked(model, sigma, &mu, gamma);
            entries[row * n + col] = c.rotate(&phase);
        }
    }
    Ok(RepMatrix {
        unit: x.clone(),
        basis,
        truncated,
        entries,
    })
}

fn matvec(n: usize, m: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        let row = &m[i * n..(i + 1) * n];
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o = acc;
    }
}

fn adjoint_matvec(n: usize, m: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    for o in out.iter_mut() {
        *o = Complex64::new(0.0, 0.0);
    }
    for i in 0..n {
        let vi = v[i];
        if vi == Complex64::new(0.0, 0.0) {
            continue;
        }
        let row = &m[i * n..(i + 1) * n];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a.conj() * vi;
        }
    }
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

const POWER_ITERATION_CAP: u32 = 20_000;

/// Largest singular value of a dense square matrix by power iteration on
/// the normal operator, restarted from three seeded starts. Every iterate
/// yields a certified lower bound; the stopping rule is the relative
/// tolerance between successive estimates.
pub fn spectral_norm(n: usize, m: &[Complex64], tol: f64, seed: u64) -> Result<f64> {
    assert!(tol > 0.0, "tolerance must be positive");
    assert_eq!(m.len(), n * n, "entry buffer must be square");
    if n == 0 {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    let mut failed: Option<f64> = None;
    for restart in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart));
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
            .collect();
        let nv = norm2(&v);
        if nv == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= nv;
        }
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        let mut u = vec![Complex64::new(0.0, 0.0); n];
        let mut last = 0.0f64;
        let mut converged = false;
        for _ in 0..POWER_ITERATION_CAP {
            matvec(n, m, &v, &mut w);
            let estimate = norm2(&w);
            if estimate <= f64::MIN_POSITIVE {
                // The normal iteration annihilated the start: the start lay
                // in the kernel; the estimate 0 is exact for this start.
                last = 0.0;
                converged = true;
                break;
            }
            adjoint_matvec(n, m, &w, &mut u);
            let nu = norm2(&u);
            if nu <= f64::MIN_POSITIVE {
                last = estimate;
                converged = true;
                break;
            }
            for (vi, ui) in v.iter_mut().zip(&u) {
                *vi = ui / nu;
            }
            if (estimate - last).abs() <= tol * estimate.max(1.0) {
                last = estimate;
                converged = true;
                break;
            }
            last = estimate;
        }
        best = best.max(last);
        if !converged {
            failed = Some(best.max(last));
        }
    }
    match failed {
        Some(last) => Err(Error::ConvergenceFailure {
            cap: POWER_ITERATION_CAP,
            last,
        }),
        None => Ok(best),
    }
}

/// Operator norm of a compressed representation matrix.
pub fn operator_norm(m: &RepMatrix, tol: f64, seed: u64) -> Result<f64> {
    spectral_norm(m.dim(), &m.to_complex(), tol, seed)
}

/// A certified two-sided enclosure of the reduced norm: the lower bound is
/// attained by a compression, the upper bound is the I-norm.
#[derive(Clone, Debug)]
pub struct NormEstimate {
    pub lower: f64,
    pub upper: f64,
    pub truncation: usize,
    pub sampled_units: Vec<String>,
    pub any_truncated: bool,
    pub tol: f64,
}

/// Maximize compressed operator norms over sampled units; the upper bound
/// is the I-norm, which dominates every representation.
pub fn reduced_norm_estimate(
    sigma: &TwoCocycle,
    f: &Element,
    units: &[Unit],
    truncation: usize,
    tol: f64,
    seed: u64,
) -> Result<NormEstimate> {
    let model = f.model();
    let per_unit: Vec<(f64, bool)> = units
        .par_iter()
        .map(|x| {
            let m = regular_rep_matrix(sigma, f, x, truncation)?;
            Ok((operator_norm(&m, tol, seed)?, m.truncated))
        })
        .collect::<Result<_>>()?;
    let lower = per_unit.iter().map(|(v, _)| *v).fold(0.0, f64::max);
    let any_truncated = per_unit.iter().any(|(_, t)| *t);
    Ok(NormEstimate {
        lower,
        upper: f.i_norm(),
        truncation,
        sampled_units: units.iter().map(|x| model.unit_label(x)).collect(),
        any_truncated,
        tol,
    })
}

/// Grid maximization of the Fourier symbol `|sum_m f(m) e^{2 pi i m.t}|`
/// over the torus: an independent oracle for the reduced norm of untwisted
/// integer-lattice elements.
pub fn fourier_symbol_norm(f: &Element, grid: usize) -> Result<f64> {
    let GroupoidModel::Group {
        family: GroupFamily::FreeAbelian(d),
    } = f.model()
    else {
        return Err(Error::UnsupportedModel(
            "the Fourier oracle works on free abelian group models".into(),
        ));
    };
    if grid == 0 {
        return Err(Error::MalformedSpec("grid must be positive".into()));
    }
    let d = *d as usize;
    let total = (grid as u128).pow(d as u32);
    if total > 100_000_000 {
        return Err(Error::MalformedSpec(format!(
            "grid has {total} points, past the 1e8 cap"
        )));
    }
    let terms: Vec<(Vec<i64>, Complex64)> = f
        .terms()
        .map(|(key, c)| {
            let SupportKey::A(Arrow::Grp(GroupElem::Z(v))) = key else {
                unreachable!("free abelian group arrows carry exponent vectors")
            };
            (v.clone(), c.to_complex())
        })
        .collect();
    let max = (0..total as u64)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat as usize;
            let mut t = vec![0.0f64; d];
            for tk in t.iter_mut() {
                *tk = (rem % grid) as f64 / grid as f64;
                rem /= grid;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for (v, c) in &terms {
                let angle: f64 = v
                    .iter()
                    .zip(&t)
                    .map(|(&m, tk)| 2.0 * std::f64::consts::PI * m as f64 * tk)
                    .sum();
                acc += c * Complex64::new(angle.cos(), angle.sin());
            }
            acc.norm()
        })
        .reduce(|| 0.0, f64::max);
    Ok(max)
}

/// The block decomposition of a finite twisted algebra: matrix block
/// dimensions, the center dimension, and the spectral gap that separated
/// the numerical center from the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockStructure {
    pub blocks: Vec<u32>,
    pub center_dim: usize,
    pub dimension: usize,
    /// Gram-eigenvalue cutoff used for the numerical center rank.
    pub rank_threshold: f64,
    /// Separation between the smallest rejected and the largest accepted
    /// Gram eigenvalue; `None` when every eigenvalue lies in the nullspace
    /// (commutative algebra), where no rank decision is made.
    pub rank_gap: Option<f64>,
}

/// Decompose the finite twisted algebra into matrix blocks: compute the
/// center as the nullspace of all commutator constraints, diagonalize a
/// random self-adjoint central element in the full regular representation,
/// and read block dimensions off eigenvalue multiplicities.
pub fn decompose_finite_cstar(
    model: &GroupoidModel,
    sigma: &TwoCocycle,
    seed: u64,
) -> Result<BlockStructure> {
    cocycle::check_compatibility(model, sigma)?;
    let arrows = model.arrows().ok_or_else(|| {
        Error::UnsupportedModel("block decomposition needs a finite model".into())
    })?;
    let n = arrows.len();
    let positions: std::collections::BTreeMap<&Arrow, usize> =
        arrows.iter().zip(0..).collect();

    // Structure constants: delta_a * delta_b = phase(a, b) delta_{ab},
    // stored per left factor as (right index, product index, phase).
    let mut products: Vec<Vec<(usize, usize, Complex64)>> = vec![Vec::new(); n];
    for (ia, a) in arrows.iter().enumerate() {
        for (ib, b) in arrows.iter().enumerate() {
            if model.source(a)? != model.range(b)? {
                continue;
            }
            let ab = positions[&model.compose(a, b)?];
            let phase = cocycle::eval_unchecked(model, sigma, a, b).to_complex();
            products[ia].push((ib, ab, phase));
        }
    }

    // Gram matrix of the commutator constraints: for each generator g the
    // map z -> [delta_g, z] has at most two entries per column; accumulate
    // G += C_g^dagger C_g row by row.
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for ig in 0..n {
        // Row r of C_g collects +phase(g, b) at column b with gb = r and
        // -phase(b, g) at column b with bg = r.
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        for &(ib, iab, phase) in &products[ig] {
            rows[iab].push((ib, phase));
        }
        for (ib, prods) in products.iter().enumerate() {
            for &(other, iab, phase) in prods {
                if other == ig {
                    rows[iab].push((ib, -phase));
                }
            }
        }
        for row in &rows {
            for &(a, ca) in row {
                for &(b, cb) in row {
                    gram[a * n + b] += ca.conj() * cb;
                }
            }
        }
    }

    let gm = nalgebra::DMatrix::from_fn(n, n, |i, j| gram[i * n + j]);
    let eig = nalgebra::linalg::SymmetricEigen::new(gm);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    // Rank threshold: singular values below sqrt(eps) * sigma_max, which is
    // eps * lambda_max on the Gram eigenvalues.
    let threshold = (f64::EPSILON * lambda_max).max(f64::MIN_POSITIVE);
    let mut center_cols = Vec::new();
    let mut smallest_rejected = f64::INFINITY;
    let mut largest_accepted: f64 = 0.0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.max(0.0) <= threshold {
            center_cols.push(k);
            largest_accepted = largest_accepted.max(lambda.max(0.0));
        } else {
            smallest_rejected = smallest_rejected.min(lambda);
        }
    }
    if smallest_rejected.is_finite() && largest_accepted * 1e4 > smallest_rejected {
        return Err(Error::NumericalRankAmbiguity(format!(
            "center nullspace gap too narrow: accepted {largest_accepted:.3e}, rejected {smallest_rejected:.3e}"
        )));
    }
    let center_dim = center_cols.len();

    // Full regular representation on the direct sum of the source fibers,
    // which is the arrow basis itself: R(delta_g) e_b = phase(g, b) e_{gb}.
    let rep_of = |coeffs: &[Complex64]| -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (ig, prods) in products.iter().enumerate() {
            let cg = coeffs[ig];
            if cg == Complex64::new(0.0, 0.0) {
                continue;
            }
            for &(ib, iab, phase) in prods {
                m[(iab, ib)] += cg * phase;
            }
        }
        m
    };

    for attempt in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        for &col in &center_cols {
            let r = rng.gen_range(-1.0..=1.0);
            for i in 0..n {
                coeffs[i] += eig.eigenvectors[(i, col)] * Complex64::new(r, 0.0);
            }
        }
        // Make the central element self-adjoint through the twisted
        // involution, keeping it central (the center is star-closed).
        let as_element = Element::new(
            model.clone(),
            arrows
                .iter()
                .zip(&coeffs)
                .map(|(a, c)| (SupportKey::A(a.clone()), Coeff::Float(*c)))
                .collect(),
        )?;
        let star = involve(sigma, &as_element)?;
        let mut sa = vec![Complex64::new(0.0, 0.0); n];
        for (i, a) in arrows.iter().enumerate() {
            sa[i] = coeffs[i] + star.eval_arrow(a).to_complex();
        }
        let z = rep_of(&sa);
        let zeig = nalgebra::linalg::SymmetricEigen::new(z);
        let mut values: Vec<f64> = zeig.eigenvalues.iter().cloned().collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        let spread = (values[n - 1] - values[0]).max(1.0);
        let gap = spread * 1e-7;
        let mut blocks = Vec::new();
        let mut start = 0usize;
        let mut ok = true;
        for i in 1..=n {
            if i == n || values[i] - values[i - 1] > gap {
                let mult = i - start;
                let d = (mult as f64).sqrt().round() as u32;
                if (d * d) as usize != mult {
                    ok = false;
                    break;
                }
                blocks.push(d);
                start = i;
            }
        }
        if ok && blocks.iter().map(|&d| (d * d) as usize).sum::<usize>() == n
            && blocks.len() == center_dim
        {
            blocks.sort_unstable_by(|a, b| b.cmp(a));
            return Ok(BlockStructure {
                blocks,
                center_dim,
                dimension: n,
                rank_threshold: threshold,
                rank_gap: smallest_rejected
                    .is_finite()
                    .then_some(smallest_rejected - largest_accepted),
            });
        }
    }
    Err(Error::NumericalRankAmbiguity(
        "central eigenvalue clusters do not form square blocks".into(),
    ))
}
