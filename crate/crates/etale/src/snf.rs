//! Smith and Hermite normal forms over the integers.
//!
//! Matrices here are small (cochain systems on finite groupoids, stabilizer
//! lattices in low rank), so entries are `BigInt` and the classic pivoting
//! algorithm is used without size heuristics.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// Dense row-major integer matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<BigInt>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![BigInt::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Mat {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        assert!(rows.iter().all(|x| x.len() == c));
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = BigInt::from(*v);
            }
        }
        m
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self[(i, k)].is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let t = &self[(i, k)] * &other[(k, j)];
                    out[(i, j)] += t;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| &self[(i, j)] * &v[j]).sum())
            .collect()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            let c = self.cols;
            self.data.swap(a * c + j, b * c + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            let c = self.cols;
            self.data.swap(i * c + a, i * c + b);
        }
    }

    /// row[a] -= q * row[b]
    fn row_sub(&mut self, a: usize, b: usize, q: &BigInt) {
        for j in 0..self.cols {
            let t = q * &self[(b, j)];
            self[(a, j)] -= t;
        }
    }

    fn col_sub(&mut self, a: usize, b: usize, q: &BigInt) {
        for i in 0..self.rows {
            let t = q * &self[(i, b)];
            self[(i, a)] -= t;
        }
    }

    fn negate_row(&mut self, a: usize) {
        for j in 0..self.cols {
            let t = -self[(a, j)].clone();
            self[(a, j)] = t;
        }
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = BigInt;
    fn index(&self, (i, j): (usize, usize)) -> &BigInt {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigInt {
        &mut self.data[i * self.cols + j]
    }
}

/// Smith normal form `U * A * V = D` with `U`, `V` unimodular and `D`
/// diagonal with `d_1 | d_2 | ...`, all `d_i >= 0`.
pub struct Snf {
    pub d: Mat,
    pub u: Mat,
    pub v: Mat,
    pub rank: usize,
}

pub fn smith_normal_form(a: &Mat) -> Snf {
    let mut d = a.clone();
    let mut u = Mat::identity(a.rows);
    let mut v = Mat::identity(a.cols);
    let n = a.rows.min(a.cols);
    let mut t = 0;
    while t < n {
        // Find the nonzero entry of least absolute value in the trailing block.
        let mut pivot: Option<(usize, usize)> = None;
        for i in t..d.rows {
            for j in t..d.cols {
                if !d[(i, j)].is_zero()
                    && pivot
                        .map(|(pi, pj)| d[(i, j)].abs() < d[(pi, pj)].abs())
                        .unwrap_or(true)
                {
                    pivot = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = pivot else { break };
        d.swap_rows(t, pi);
        u.swap_rows(t, pi);
        d.swap_cols(t, pj);
        v.swap_cols(t, pj);

        // Clear row and column t with euclidean steps until exact.
        loop {
            let mut dirty = false;
            for i in t + 1..d.rows {
                if !d[(i, t)].is_zero() {
                    let q = d[(i, t)].div_floor(&d[(t, t)]);
                    d.row_sub(i, t, &q);
                    u.row_sub(i, t, &q);
                    if !d[(i, t)].is_zero() {
                        d.swap_rows(t, i);
                        u.swap_rows(t, i);
                        dirty = true;
                    }
                }
            }
            for j in t + 1..d.cols {
                if !d[(t, j)].is_zero() {
                    let q = d[(t, j)].div_floor(&d[(t, t)]);
                    d.col_sub(j, t, &q);
                    v.col_sub(j, t, &q);
                    if !d[(t, j)].is_zero() {
                        d.swap_cols(t, j);
                        v.swap_cols(t, j);
                        dirty = true;
                    }
                }
            }
            if !dirty {
                break;
            }
        }

        // Enforce the divisibility chain: fold any nondivisible trailing
        // entry into the pivot position and redo this step.
        let mut redo = false;
        'scan: for i in t + 1..d.rows {
            for j in t + 1..d.cols {
                if !(&d[(i, j)] % &d[(t, t)]).is_zero() {
                    let one = BigInt::one();
                    let negone = -one.clone();
                    d.row_sub(t, i, &negone);
                    u.row_sub(t, i, &negone);
                    redo = true;
                    break 'scan;
                }
            }
        }
        if redo {
            continue;
        }
        if d[(t, t)].is_negative() {
            d.negate_row(t);
            u.negate_row(t);
        }
        t += 1;
    }
    let rank = (0..n).take_while(|&i| !d[(i, i)].is_zero()).count();
    Snf { d, u, v, rank }
}

/// Solve `A x = b (mod m)` over the integers, returning one witness solution
/// if the system is solvable.
pub fn solve_linear_mod(a: &Mat, b: &[BigInt], m: u64) -> Option<Vec<BigInt>> {
    assert_eq!(a.rows, b.len());
    assert!(m > 0);
    let m = BigInt::from(m);
    let snf = smith_normal_form(a);
    let c = snf.u.mul_vec(b);
    let mut y = vec![BigInt::zero(); a.cols];
    for i in 0..a.rows {
        let di = if i < a.cols {
            snf.d[(i, i)].clone()
        } else {
            BigInt::zero()
        };
        if di.is_zero() {
            if !(&c[i] % &m).is_zero() {
                return None;
            }
            continue;
        }
        // d_i y = c_i (mod m): solvable iff gcd(d_i, m) divides c_i.
        let g = di.gcd(&m);
        if !(&c[i] % &g).is_zero() {
            return None;
        }
        let dd = &di / &g;
        let mm = &m / &g;
        let cc = &c[i] / &g;
        let inv = mod_inverse(&dd.mod_floor(&mm), &mm).unwrap_or_else(BigInt::zero);
        y[i] = (cc * inv).mod_floor(&mm.max(BigInt::one()));
    }
    let x = snf.v.mul_vec(&y);
    Some(x.into_iter().map(|t| t.mod_floor(&m)).collect())
}

fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    if m.is_one() || m.is_zero() {
        return Some(BigInt::zero());
    }
    let e = a.extended_gcd(m);
    if e.gcd.is_one() {
        Some(e.x.mod_floor(m))
    } else {
        None
    }
}

/// Basis of the lattice spanned by integer vectors, as rows in row echelon
/// (Hermite-like) form. Used to present stabilizer sublattices of `Z^d`.
pub fn lattice_basis(generators: &[Vec<i64>]) -> Vec<Vec<BigInt>> {
    if generators.is_empty() {
        return Vec::new();
    }
    let a = Mat::from_rows(generators.to_vec());
    // Row-reduce with integer pivoting; the SNF machinery is overkill but
    // small sizes make simplicity win.
    let mut m = a;
    let mut row = 0;
    for col in 0..m.cols {
        // Euclid down the column.
        loop {
            let mut best: Option<usize> = None;
            for i in row..m.rows {
                if !m[(i, col)].is_zero()
                    && best.map(|b| m[(i, col)].abs() < m[(b, col)].abs()).unwrap_or(true)
                {
                    best = Some(i);
                }
            }
            let Some(b) = best else { break };
            m.swap_rows(row, b);
            let mut any = false;
            for i in row + 1..m.rows {
                if !m[(i, col)].is_zero() {
                    let q = m[(i, col)].div_floor(&m[(row, col)]);
                    m.row_sub(i, row, &q);
                    if !m[(i, col)].is_zero() {
                        any = true;
                    }
                }
            }
            if !any {
                break;
            }
        }
        if !m[(row, col)].is_zero() {
            if m[(row, col)].is_negative() {
                m.negate_row(row);
            }
            row += 1;
            if row == m.rows {
                break;
            }
        }
    }
    (0..row)
        .map(|i| (0..m.cols).map(|j| m[(i, j)].clone()).collect())
        .collect()
}
