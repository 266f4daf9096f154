//! Exact linear algebra over F_2: bit vectors, dense matrices, reduced row
//! echelon form, linear solving, subspaces and coordinate projections.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by F_2 linear algebra.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Gf2Error {
    /// The linear system has no solution. This is an answer, not a fault.
    #[error("linear system is infeasible")]
    Infeasible,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

const WORD: usize = 64;

fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD)
}

/// A vector in F_2^n stored as packed 64-bit words. Bits beyond `dim` are zero.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GF2Vector {
    dim: usize,
    words: Vec<u64>,
}

impl GF2Vector {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, words: vec![0; words_for(dim)] }
    }

    /// The standard basis vector e_i (0-based).
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.set(i, true);
        v
    }

    /// Builds a vector from the low `dim` bits of `bits`; bit i is coordinate i.
    pub fn from_u64(dim: usize, bits: u64) -> Self {
        let mut v = Self::zeros(dim);
        if dim > 0 {
            let mask = if dim >= WORD { u64::MAX } else { (1u64 << dim) - 1 };
            v.words[0] = bits & mask;
        }
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// The vector as a single word. Panics when `dim > 64`.
    pub fn to_u64(&self) -> u64 {
        assert!(self.dim <= WORD, "vector of dimension {} does not fit in a word", self.dim);
        self.words.first().copied().unwrap_or(0)
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.dim);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.dim, "index {i} out of range for dimension {}", self.dim);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.dim);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor_assign(&mut self, other: &Self) {
        assert_eq!(self.dim, other.dim, "vector dimension mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Inner product over F_2.
    pub fn dot(&self, other: &Self) -> bool {
        assert_eq!(self.dim, other.dim, "vector dimension mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }

    /// Indices of the nonzero coordinates, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD + t)
            })
        })
    }

    pub fn first_one(&self) -> Option<usize> {
        self.ones().next()
    }

    /// Concatenation `self ‖ other`.
    pub fn concat(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.dim + other.dim);
        for i in self.ones() {
            out.set(i, true);
        }
        for i in other.ones() {
            out.set(self.dim + i, true);
        }
        out
    }

    /// Every vector of F_2^dim in increasing integer order. Requires `dim < 64`.
    pub fn all(dim: usize) -> impl Iterator<Item = GF2Vector> {
        assert!(dim < WORD, "cannot enumerate F_2^{dim}");
        (0..(1u64 << dim)).map(move |b| GF2Vector::from_u64(dim, b))
    }
}

impl fmt::Debug for GF2Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        write!(f, "]")
    }
}

impl fmt::Display for GF2Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Dense row-major matrix over F_2.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GF2Matrix {
    rows: usize,
    cols: usize,
    data: Vec<GF2Vector>,
}

impl GF2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![GF2Vector::zeros(cols); rows] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| GF2Vector::unit(n, i)).collect())
            .expect("identity rows have matching length")
    }

    /// Builds a matrix from rows of length `cols`.
    pub fn from_rows(cols: usize, rows: Vec<GF2Vector>) -> Result<Self, Gf2Error> {
        if let Some(bad) = rows.iter().find(|r| r.dim() != cols) {
            return Err(Gf2Error::DimensionMismatch { expected: cols, found: bad.dim() });
        }
        Ok(Self { rows: rows.len(), cols, data: rows })
    }

    /// Builds a matrix whose columns are the given vectors of length `rows`.
    pub fn from_columns(rows: usize, columns: &[GF2Vector]) -> Result<Self, Gf2Error> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.dim() != rows {
                return Err(Gf2Error::DimensionMismatch { expected: rows, found: c.dim() });
            }
            for i in c.ones() {
                m.data[i].set(j, true);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &GF2Vector {
        &self.data[i]
    }

    pub fn row_vectors(&self) -> &[GF2Vector] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i].get(j)
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i].set(j, v);
    }

    pub fn column(&self, j: usize) -> GF2Vector {
        let mut c = GF2Vector::zeros(self.rows);
        for i in 0..self.rows {
            if self.get(i, j) {
                c.set(i, true);
            }
        }
        c
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for (i, r) in self.data.iter().enumerate() {
            for j in r.ones() {
                t.data[j].set(i, true);
            }
        }
        t
    }

    /// Matrix-vector product `self · x`.
    pub fn mul_vec(&self, x: &GF2Vector) -> Result<GF2Vector, Gf2Error> {
        if x.dim() != self.cols {
            return Err(Gf2Error::DimensionMismatch { expected: self.cols, found: x.dim() });
        }
        let mut out = GF2Vector::zeros(self.rows);
        for (i, r) in self.data.iter().enumerate() {
            if r.dot(x) {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self, Gf2Error> {
        if self.cols != other.rows {
            return Err(Gf2Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for (i, r) in self.data.iter().enumerate() {
            for j in r.ones() {
                out.data[i].xor_assign(&other.data[j]);
            }
        }
        Ok(out)
    }

    pub fn rank(&self) -> usize {
        rref(self).rank
    }
}

impl fmt::Debug for GF2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GF2Matrix {}x{}", self.rows, self.cols)?;
        for r in &self.data {
            writeln!(f, "  {r:?}")?;
        }
        Ok(())
    }
}

/// Output of [`rref`]: `transform · m = basis`, with `basis` in reduced row
/// echelon form and its nonzero rows first.
#[derive(Clone, Debug)]
pub struct Rref {
    pub rank: usize,
    pub basis: GF2Matrix,
    pub transform: GF2Matrix,
    /// Pivot column of each of the first `rank` rows, strictly increasing.
    pub pivots: Vec<usize>,
}

/// Gauss–Jordan elimination with a recorded invertible transform.
pub fn rref(m: &GF2Matrix) -> Rref {
    let mut basis = m.clone();
    let mut transform = GF2Matrix::identity(m.rows);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..m.cols {
        if r == m.rows {
            break;
        }
        let Some(p) = (r..m.rows).find(|&i| basis.data[i].get(c)) else {
            continue;
        };
        basis.data.swap(r, p);
        transform.data.swap(r, p);
        let (prow, trow) = (basis.data[r].clone(), transform.data[r].clone());
        for i in 0..m.rows {
            if i != r && basis.data[i].get(c) {
                basis.data[i].xor_assign(&prow);
                transform.data[i].xor_assign(&trow);
            }
        }
        pivots.push(c);
        r += 1;
    }
    Rref { rank: r, basis, transform, pivots }
}

/// Solves `m · x = rhs`; free variables are set to zero.
pub fn solve(m: &GF2Matrix, rhs: &GF2Vector) -> Result<GF2Vector, Gf2Error> {
    if rhs.dim() != m.rows {
        return Err(Gf2Error::DimensionMismatch { expected: m.rows, found: rhs.dim() });
    }
    let red = rref(m);
    let c = red.transform.mul_vec(rhs)?;
    if (red.rank..m.rows).any(|i| c.get(i)) {
        return Err(Gf2Error::Infeasible);
    }
    let mut x = GF2Vector::zeros(m.cols);
    for (i, &p) in red.pivots.iter().enumerate() {
        if c.get(i) {
            x.set(p, true);
        }
    }
    Ok(x)
}

/// Finds coefficients `c` with `Σ c_i · vectors[i] = target`.
pub fn solve_combination(vectors: &[GF2Vector], target: &GF2Vector) -> Result<GF2Vector, Gf2Error> {
    let m = GF2Matrix::from_columns(target.dim(), vectors)?;
    solve(&m, target)
}

/// Basis of the null space `{x : m · x = 0}`.
pub fn kernel(m: &GF2Matrix) -> Vec<GF2Vector> {
    let red = rref(m);
    let mut is_pivot = vec![false; m.cols];
    for &p in &red.pivots {
        is_pivot[p] = true;
    }
    (0..m.cols)
        .filter(|&f| !is_pivot[f])
        .map(|f| {
            let mut v = GF2Vector::unit(m.cols, f);
            for (i, &p) in red.pivots.iter().enumerate() {
                if red.basis.get(i, f) {
                    v.set(p, true);
                }
            }
            v
        })
        .collect()
}

/// A subspace U ≤ F_2^n stored by its canonical RREF basis, so equal
/// subspaces compare equal.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Subspace {
    ambient_dim: usize,
    basis: Vec<GF2Vector>,
}

impl Subspace {
    pub fn whole(n: usize) -> Self {
        Self { ambient_dim: n, basis: (0..n).map(|i| GF2Vector::unit(n, i)).collect() }
    }

    pub fn zero(n: usize) -> Self {
        Self { ambient_dim: n, basis: Vec::new() }
    }

    /// The span of the given vectors.
    pub fn span(n: usize, vectors: &[GF2Vector]) -> Result<Self, Gf2Error> {
        let m = GF2Matrix::from_rows(n, vectors.to_vec())?;
        let red = rref(&m);
        let basis = red.basis.data.into_iter().take(red.rank).collect();
        Ok(Self { ambient_dim: n, basis })
    }

    /// The common zero set of the given linear functionals.
    pub fn kernel_of(n: usize, functionals: &[GF2Vector]) -> Result<Self, Gf2Error> {
        let m = GF2Matrix::from_rows(n, functionals.to_vec())?;
        Self::span(n, &kernel(&m))
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim - self.basis.len()
    }

    pub fn basis(&self) -> &[GF2Vector] {
        &self.basis
    }

    pub fn pivots(&self) -> Vec<usize> {
        self.basis.iter().map(|b| b.first_one().expect("basis rows are nonzero")).collect()
    }

    pub fn contains(&self, x: &GF2Vector) -> bool {
        x.dim() == self.ambient_dim && self.from_coords(&self.coords(x)) == *x
    }

    pub fn is_subspace_of(&self, other: &Subspace) -> bool {
        self.basis.iter().all(|b| other.contains(b))
    }

    /// Coordinates of x with respect to the basis, read off at the pivots.
    /// Meaningful when `x ∈ U`.
    pub fn coords(&self, x: &GF2Vector) -> GF2Vector {
        let mut t = GF2Vector::zeros(self.dim());
        for (i, b) in self.basis.iter().enumerate() {
            if x.get(b.first_one().expect("nonzero basis row")) {
                t.set(i, true);
            }
        }
        t
    }

    /// `Σ t_i b_i`.
    pub fn from_coords(&self, t: &GF2Vector) -> GF2Vector {
        let mut x = GF2Vector::zeros(self.ambient_dim);
        for i in t.ones() {
            x.xor_assign(&self.basis[i]);
        }
        x
    }

    /// All elements, in increasing order of coordinates. Requires `dim < 64`.
    pub fn elements(&self) -> impl Iterator<Item = GF2Vector> + '_ {
        GF2Vector::all(self.dim()).map(|t| self.from_coords(&t))
    }

    pub fn intersect(&self, other: &Subspace) -> Result<Subspace, Gf2Error> {
        let mut functionals = self.annihilator();
        functionals.extend(other.annihilator());
        Subspace::kernel_of(self.ambient_dim, &functionals)
    }

    /// Linear functionals whose common kernel is this subspace.
    pub fn annihilator(&self) -> Vec<GF2Vector> {
        complement_projection(self).functionals
    }
}

/// A splitting `x = π(x) ⊕ Σ φ_i(x) w_i` of F_2^n along a subspace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionData {
    pub subspace: Subspace,
    /// Complement basis: the unit vectors at non-pivot coordinates.
    pub complement: Vec<GF2Vector>,
    /// φ_i as coefficient vectors of linear forms.
    pub functionals: Vec<GF2Vector>,
}

impl ProjectionData {
    pub fn codim(&self) -> usize {
        self.complement.len()
    }

    pub fn project(&self, x: &GF2Vector) -> GF2Vector {
        self.subspace.from_coords(&self.subspace.coords(x))
    }

    /// Values φ_i(x).
    pub fn phi(&self, x: &GF2Vector) -> Vec<bool> {
        self.functionals.iter().map(|f| f.dot(x)).collect()
    }
}

/// Complement and coordinate functionals for `u`, read off from its RREF.
pub fn complement_projection(u: &Subspace) -> ProjectionData {
    let n = u.ambient_dim();
    let pivots = u.pivots();
    let mut is_pivot = vec![false; n];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&j| !is_pivot[j]).collect();
    let complement = free.iter().map(|&j| GF2Vector::unit(n, j)).collect();
    // φ_j(x) = x_j ⊕ Σ_i x_{p_i} b_{i,j}
    let functionals = free
        .iter()
        .map(|&j| {
            let mut f = GF2Vector::unit(n, j);
            for (b, &p) in u.basis().iter().zip(&pivots) {
                if b.get(j) {
                    f.flip(p);
                }
            }
            f
        })
        .collect();
    ProjectionData { subspace: u.clone(), complement, functionals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> GF2Matrix {
        let data = (0..rows).map(|_| GF2Vector::from_u64(cols, rng.gen())).collect();
        GF2Matrix::from_rows(cols, data).unwrap()
    }

    fn span_size(rows: &[GF2Vector]) -> usize {
        let mut seen = std::collections::BTreeSet::new();
        for mask in 0u32..(1 << rows.len()) {
            let mut acc = GF2Vector::zeros(rows[0].dim());
            for (i, r) in rows.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    acc.xor_assign(r);
                }
            }
            seen.insert(acc);
        }
        seen.len()
    }

    #[test]
    fn identity_and_zero_rank() {
        let red = rref(&GF2Matrix::identity(3));
        assert_eq!(red.rank, 3);
        assert_eq!(red.basis, GF2Matrix::identity(3));
        assert_eq!(rref(&GF2Matrix::zeros(4, 5)).rank, 0);
    }

    #[test]
    fn rank_matches_span_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 6, 6);
            let red = rref(&m);
            assert_eq!(1usize << red.rank, span_size(m.row_vectors()));
            assert_eq!(red.transform.mul(&m).unwrap(), red.basis);
            assert_eq!(rref(&red.basis).basis, red.basis);
        }
    }

    #[test]
    fn solve_cases() {
        let e1 = GF2Vector::unit(3, 0);
        assert_eq!(solve(&GF2Matrix::identity(3), &e1).unwrap(), e1);
        assert_eq!(solve(&GF2Matrix::zeros(3, 3), &e1), Err(Gf2Error::Infeasible));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let m = random_matrix(&mut rng, 7, 5);
            let x0 = GF2Vector::from_u64(5, rng.gen());
            let rhs = m.mul_vec(&x0).unwrap();
            let x = solve(&m, &rhs).unwrap();
            assert_eq!(m.mul_vec(&x).unwrap(), rhs);
        }
    }

    #[test]
    fn infeasible_iff_outside_column_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let m = random_matrix(&mut rng, 6, 3);
            let cols: Vec<_> = (0..3).map(|j| m.column(j)).collect();
            let mut span = std::collections::BTreeSet::new();
            for mask in 0..8u32 {
                let mut acc = GF2Vector::zeros(6);
                for (j, c) in cols.iter().enumerate() {
                    if mask >> j & 1 == 1 {
                        acc.xor_assign(c);
                    }
                }
                span.insert(acc);
            }
            for rhs in GF2Vector::all(6) {
                assert_eq!(solve(&m, &rhs).is_ok(), span.contains(&rhs));
            }
        }
    }

    #[test]
    fn projection_trivial_cases() {
        let p = complement_projection(&Subspace::whole(3));
        assert_eq!(p.codim(), 0);
        for x in GF2Vector::all(3) {
            assert_eq!(p.project(&x), x);
        }
        let p = complement_projection(&Subspace::zero(2));
        assert_eq!(p.complement, vec![GF2Vector::unit(2, 0), GF2Vector::unit(2, 1)]);
        for x in GF2Vector::all(2) {
            assert!(p.project(&x).is_zero());
        }
    }

    #[test]
    fn projection_identity_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let vs: Vec<_> = (0..4).map(|_| GF2Vector::from_u64(6, rng.gen())).collect();
            let u = Subspace::span(6, &vs).unwrap();
            let p = complement_projection(&u);
            assert_eq!(p.codim(), u.codim());
            for x in GF2Vector::all(6) {
                let px = p.project(&x);
                assert!(u.contains(&px));
                assert_eq!(p.project(&px), px);
                let mut recon = px.clone();
                for (w, phi) in p.complement.iter().zip(p.phi(&x)) {
                    if phi {
                        recon.xor_assign(w);
                    }
                }
                assert_eq!(recon, x);
            }
            for f in &p.functionals {
                assert!(u.elements().all(|x| !f.dot(&x)));
            }
        }
    }

    #[test]
    fn kernel_is_annihilated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let fs: Vec<_> = (0..3).map(|_| GF2Vector::from_u64(7, rng.gen())).collect();
            let u = Subspace::kernel_of(7, &fs).unwrap();
            let rank = GF2Matrix::from_rows(7, fs.clone()).unwrap().rank();
            assert_eq!(u.codim(), rank);
            for x in u.elements() {
                assert!(fs.iter().all(|f| !f.dot(&x)));
            }
        }
    }
}
