//! Multilinear forms on (F_2^n)^k stored as dense coefficient tensors.
//!
//! Coefficient λ_{i_1..i_k} lives in fiber `(i_1..i_{k-1})` (first axis most
//! significant) at bit `i_k`. All indices are 0-based.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{GF2Matrix, GF2Vector, Subspace};

/// Upper bound on `n^k` coefficient bits.
pub const MAX_TENSOR_BITS: u128 = 1 << 28;

fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn checked_pow(n: usize, k: usize) -> Option<u128> {
    (0..k).try_fold(1u128, |acc, _| acc.checked_mul(n as u128))
}

/// A permutation of the variable slots `0..k`, acting on tuples by
/// `p(x)[p(j)] = x[j]`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; image.len()];
        for &i in &image {
            if i >= image.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Invalid(format!("{image:?} is not a permutation")));
            }
        }
        Ok(Self { image })
    }

    pub fn identity(k: usize) -> Self {
        Self { image: (0..k).collect() }
    }

    /// The transposition `(a b)`.
    pub fn transposition(k: usize, a: usize, b: usize) -> Self {
        let mut image: Vec<usize> = (0..k).collect();
        image.swap(a, b);
        Self { image }
    }

    /// The cycle `c_0 → c_1 → … → c_0`.
    pub fn cycle(k: usize, cyc: &[usize]) -> Self {
        let mut image: Vec<usize> = (0..k).collect();
        for (t, &c) in cyc.iter().enumerate() {
            image[c] = cyc[(t + 1) % cyc.len()];
        }
        Self { image }
    }

    pub fn arity(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn at(&self, j: usize) -> usize {
        self.image[j]
    }

    /// Function composition `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self { image: other.image.iter().map(|&j| self.image[j]).collect() }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.image.len()];
        for (j, &i) in self.image.iter().enumerate() {
            inv[i] = j;
        }
        Self { image: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(j, &i)| i == j)
    }

    /// `p(x)` for a tuple x.
    pub fn apply<T: Clone>(&self, x: &[T]) -> Vec<T> {
        let mut out = x.to_vec();
        for (j, v) in x.iter().enumerate() {
            out[self.image[j]] = v.clone();
        }
        out
    }

    /// All permutations of `0..k` in lexicographic order of images.
    pub fn all(k: usize) -> Vec<Self> {
        fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
            if prefix.len() == used.len() {
                out.push(Permutation { image: prefix.clone() });
                return;
            }
            for i in 0..used.len() {
                if !used[i] {
                    used[i] = true;
                    prefix.push(i);
                    rec(prefix, used, out);
                    prefix.pop();
                    used[i] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; k], &mut out);
        out
    }

    /// Permutations of `0..k` fixing every slot outside `s`.
    pub fn all_within(k: usize, s: &VariableSet) -> Vec<Self> {
        let idx = s.indices();
        Self::all(idx.len())
            .into_iter()
            .map(|q| {
                let mut image: Vec<usize> = (0..k).collect();
                for (t, &v) in idx.iter().enumerate() {
                    image[v] = idx[q.image[t]];
                }
                Self { image }
            })
            .collect()
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Perm{:?}", self.image)
    }
}

/// A subset of the variable slots, kept sorted.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct VariableSet(Vec<usize>);

impl VariableSet {
    pub fn new(mut vars: Vec<usize>) -> Self {
        vars.sort_unstable();
        vars.dedup();
        Self(vars)
    }

    /// `{0, …, m-1}`.
    pub fn prefix(m: usize) -> Self {
        Self((0..m).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }
}

/// A k-linear form on (F_2^n)^k.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultilinearForm {
    n: usize,
    k: usize,
    fibers: Vec<u64>,
}

impl MultilinearForm {
    pub fn zero(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("arity must be at least 1".into()));
        }
        if n > 64 {
            return Err(Error::SizeGuard(format!("dimension {n} exceeds 64")));
        }
        match checked_pow(n, k) {
            Some(bits) if bits <= MAX_TENSOR_BITS => {}
            _ => return Err(Error::SizeGuard(format!("{n}^{k} coefficient bits"))),
        }
        let len = checked_pow(n, k - 1).expect("checked above") as usize;
        Ok(Self { n, k, fibers: vec![0; len] })
    }

    /// Builds a form from the index tuples of its nonzero coefficients.
    /// Repeated tuples cancel.
    pub fn from_support<'a>(n: usize, k: usize, support: impl IntoIterator<Item = &'a [usize]>) -> Result<Self> {
        let mut f = Self::zero(n, k)?;
        for idx in support {
            if idx.len() != k || idx.iter().any(|&i| i >= n) {
                return Err(Error::Invalid(format!("index tuple {idx:?} out of range for n={n}, k={k}")));
            }
            f.flip_coeff(idx);
        }
        Ok(f)
    }

    /// The linear form `x ↦ ⟨v, x⟩`.
    pub fn linear(v: &GF2Vector) -> Result<Self> {
        let mut f = Self::zero(v.dim(), 1)?;
        if v.dim() > 0 {
            f.fibers[0] = v.to_u64();
        }
        Ok(f)
    }

    /// The dot-product bilinear form `Σ_i x_{1i} x_{2i}`.
    pub fn dot(n: usize) -> Result<Self> {
        Self::diagonal(n, 2)
    }

    /// `Σ_i x_{1i} ⋯ x_{ki}`.
    pub fn diagonal(n: usize, k: usize) -> Result<Self> {
        let mut f = Self::zero(n, k)?;
        for i in 0..n {
            f.set_coeff(&vec![i; k], true);
        }
        Ok(f)
    }

    pub fn random(n: usize, k: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut f = Self::zero(n, k)?;
        let mask = low_mask(n);
        for w in &mut f.fibers {
            *w = rng.gen::<u64>() & mask;
        }
        Ok(f)
    }

    /// A bilinear form from its coefficient matrix `λ_{ij} = m[i][j]`.
    pub fn from_matrix(m: &GF2Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        let mut f = Self::zero(m.rows(), 2)?;
        for (i, r) in m.row_vectors().iter().enumerate() {
            if m.cols() > 0 {
                f.fibers[i] = r.to_u64();
            }
        }
        Ok(f)
    }

    /// Coefficient matrix of a bilinear form.
    pub fn to_matrix(&self) -> Result<GF2Matrix> {
        self.expect_arity(2)?;
        let rows = self.fibers.iter().map(|&w| GF2Vector::from_u64(self.n, w)).collect();
        Ok(GF2Matrix::from_rows(self.n, rows)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Raw fibers: one n-bit word per index prefix `(i_1..i_{k-1})`.
    pub fn fibers(&self) -> &[u64] {
        &self.fibers
    }

    pub fn expect_arity(&self, k: usize) -> Result<()> {
        if self.k == k {
            Ok(())
        } else {
            Err(Error::ArityMismatch { expected: k, found: self.k })
        }
    }

    pub fn expect_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        self.expect_arity(other.k)
    }

    fn prefix_index(&self, idx: &[usize]) -> usize {
        idx[..self.k - 1].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    fn decode_prefix(&self, mut p: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = p % self.n;
            p /= self.n;
        }
    }

    pub fn coeff(&self, idx: &[usize]) -> bool {
        debug_assert_eq!(idx.len(), self.k);
        (self.fibers[self.prefix_index(idx)] >> idx[self.k - 1]) & 1 == 1
    }

    pub fn set_coeff(&mut self, idx: &[usize], v: bool) {
        let p = self.prefix_index(idx);
        let bit = 1u64 << idx[self.k - 1];
        if v {
            self.fibers[p] |= bit;
        } else {
            self.fibers[p] &= !bit;
        }
    }

    pub fn flip_coeff(&mut self, idx: &[usize]) {
        let p = self.prefix_index(idx);
        self.fibers[p] ^= 1u64 << idx[self.k - 1];
    }

    pub fn is_zero(&self) -> bool {
        self.fibers.iter().all(|&w| w == 0)
    }

    pub fn weight(&self) -> usize {
        self.fibers.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Nonzero coefficient index tuples in lexicographic order.
    pub fn support(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.weight());
        let mut prefix = vec![0; self.k - 1];
        for (p, &w) in self.fibers.iter().enumerate() {
            if w == 0 {
                continue;
            }
            self.decode_prefix(p, &mut prefix);
            let mut w = w;
            while w != 0 {
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                let mut idx = prefix.clone();
                idx.push(b);
                out.push(idx);
            }
        }
        out
    }

    pub fn xor_assign(&mut self, other: &Self) {
        assert!(self.n == other.n && self.k == other.k, "form shape mismatch");
        for (a, b) in self.fibers.iter_mut().zip(&other.fibers) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// The coefficient tensor as a vector of length n^k (fiber-major).
    pub fn to_vector(&self) -> GF2Vector {
        let mut v = GF2Vector::zeros(self.fibers.len() * self.n);
        for (p, &w) in self.fibers.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                v.set(p * self.n + w.trailing_zeros() as usize, true);
                w &= w - 1;
            }
        }
        v
    }

    pub fn from_vector(n: usize, k: usize, v: &GF2Vector) -> Result<Self> {
        let mut out = Self::zero(n, k)?;
        if v.dim() != out.fibers.len() * n {
            return Err(Error::DimensionMismatch { expected: out.fibers.len() * n, found: v.dim() });
        }
        for i in v.ones() {
            out.fibers[i / n] |= 1u64 << (i % n);
        }
        Ok(out)
    }

    /// Evaluation at vectors packed into words (coordinate i is bit i).
    pub fn eval_words(&self, x: &[u64]) -> bool {
        debug_assert_eq!(x.len(), self.k);
        if self.n == 0 {
            return false;
        }
        let mut cur: Vec<u64> = self.fibers.clone();
        for &xa in &x[..self.k - 1] {
            let block = cur.len() / self.n;
            let mut next = vec![0u64; block];
            let mut bits = xa;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                for (d, s) in next.iter_mut().zip(&cur[i * block..(i + 1) * block]) {
                    *d ^= s;
                }
            }
            cur = next;
        }
        (cur[0] & x[self.k - 1]).count_ones() & 1 == 1
    }

    pub fn evaluate(&self, x: &[GF2Vector]) -> Result<bool> {
        if x.len() != self.k {
            return Err(Error::ArityMismatch { expected: self.k, found: x.len() });
        }
        if let Some(bad) = x.iter().find(|v| v.dim() != self.n) {
            return Err(Error::DimensionMismatch { expected: self.n, found: bad.dim() });
        }
        let words: Vec<u64> = x.iter().map(|v| if self.n == 0 { 0 } else { v.to_u64() }).collect();
        Ok(self.eval_words(&words))
    }

    /// Fixes the variables in `assignment` (slot, value); the remaining slots
    /// keep their relative order.
    pub fn slice(&self, assignment: &[(usize, GF2Vector)]) -> Result<Self> {
        let words: Vec<(usize, u64)> = assignment
            .iter()
            .map(|(s, v)| {
                if v.dim() != self.n {
                    return Err(Error::DimensionMismatch { expected: self.n, found: v.dim() });
                }
                Ok((*s, if self.n == 0 { 0 } else { v.to_u64() }))
            })
            .collect::<Result<_>>()?;
        self.slice_words(&words)
    }

    pub fn slice_words(&self, assignment: &[(usize, u64)]) -> Result<Self> {
        let mut fixed: Vec<Option<u64>> = vec![None; self.k];
        for &(s, w) in assignment {
            if s >= self.k || fixed[s].is_some() {
                return Err(Error::Invalid(format!("bad slice slot {s} for arity {}", self.k)));
            }
            fixed[s] = Some(w);
        }
        let free: Vec<usize> = (0..self.k).filter(|&s| fixed[s].is_none()).collect();
        if free.is_empty() {
            return Err(Error::Invalid("slice must leave at least one variable free".into()));
        }
        let mut out = Self::zero(self.n, free.len())?;
        let mut idx = vec![0usize; self.k];
        let mut sub = vec![0usize; free.len()];
        for full in self.support() {
            let mut keep = true;
            for (s, f) in fixed.iter().enumerate() {
                if let Some(w) = f {
                    if (w >> full[s]) & 1 == 0 {
                        keep = false;
                        break;
                    }
                }
            }
            if keep {
                idx.copy_from_slice(&full);
                for (t, &s) in free.iter().enumerate() {
                    sub[t] = idx[s];
                }
                out.flip_coeff(&sub);
            }
        }
        Ok(out)
    }

    /// `x ↦ f(p(x))`.
    pub fn permute(&self, p: &Permutation) -> Result<Self> {
        if p.arity() != self.k {
            return Err(Error::ArityMismatch { expected: self.k, found: p.arity() });
        }
        if p.is_identity() {
            return Ok(self.clone());
        }
        let mut out = Self::zero(self.n, self.k)?;
        let mut j = vec![0usize; self.k];
        for i in self.support() {
            for (b, slot) in j.iter_mut().enumerate() {
                *slot = i[p.at(b)];
            }
            out.set_coeff(&j, true);
        }
        Ok(out)
    }

    /// `f ∘ (a b)`.
    pub fn swap(&self, a: usize, b: usize) -> Self {
        self.permute(&Permutation::transposition(self.k, a, b)).expect("arity matches")
    }

    pub fn is_symmetric(&self, s: &VariableSet) -> bool {
        s.indices().windows(2).all(|w| self.swap(w[0], w[1]) == *self)
    }

    pub fn is_symmetric_prefix(&self, m: usize) -> bool {
        self.is_symmetric(&VariableSet::prefix(m))
    }

    /// Sum of `f ∘ p` over every permutation p of the slots in `s`.
    pub fn symmetrized(&self, s: &VariableSet) -> Self {
        let mut out = Self::zero(self.n, self.k).expect("shape already valid");
        for p in Permutation::all_within(self.k, s) {
            out.xor_assign(&self.permute(&p).expect("arity matches"));
        }
        out
    }

    /// `(d, y) ↦ f(d, d, y)`, requiring symmetry in the first two slots.
    pub fn diagonal_contract(&self) -> Result<Self> {
        if self.k < 2 {
            return Err(Error::ArityMismatch { expected: 2, found: self.k });
        }
        if !self.is_symmetric_prefix(2) {
            return Err(Error::NotSymmetric("{1,2}".into()));
        }
        let mut out = Self::zero(self.n, self.k - 1)?;
        for idx in self.support() {
            if idx[0] == idx[1] {
                out.set_coeff(&idx[1..], true);
            }
        }
        Ok(out)
    }

    /// Symmetric, with symmetric diagonal contraction. Linear forms count as
    /// strongly symmetric.
    pub fn is_strongly_symmetric(&self) -> bool {
        if self.k == 1 {
            return true;
        }
        if !self.is_symmetric_prefix(self.k) {
            return false;
        }
        let d = self.diagonal_contract().expect("symmetric form contracts");
        d.is_symmetric_prefix(d.k)
    }

    /// A strongly symmetric (k+1)-form whose diagonal contraction is `self`.
    pub fn lift_strongly_symmetric(&self) -> Result<Self> {
        if !self.is_strongly_symmetric() {
            return Err(Error::NotStronglySymmetric);
        }
        let k1 = self.k + 1;
        let mut out = Self::zero(self.n, k1)?;
        let total = checked_pow(self.n, k1).expect("guarded") as usize;
        let mut idx = vec![0usize; k1];
        let mut sorted = vec![0usize; k1];
        for flat in 0..total {
            let mut r = flat;
            for slot in idx.iter_mut().rev() {
                *slot = r % self.n;
                r /= self.n;
            }
            sorted.copy_from_slice(&idx);
            sorted.sort_unstable();
            if let Some(t) = sorted.windows(2).position(|w| w[0] == w[1]) {
                let mut reduced = sorted.clone();
                reduced.remove(t);
                if self.coeff(&reduced) {
                    out.set_coeff(&idx, true);
                }
            }
        }
        debug_assert_eq!(out.diagonal_contract().as_ref(), Ok(self));
        Ok(out)
    }

    /// XORs the product `Π_f factor_f(x_{vars_f})` into `self`. The variable
    /// sets must partition the slots.
    pub fn xor_product(&mut self, factors: &[(&[usize], &MultilinearForm)]) -> Result<()> {
        let mut covered = vec![false; self.k];
        for (vars, f) in factors {
            if vars.len() != f.k || f.n != self.n {
                return Err(Error::Invalid("factor shape does not match its variable set".into()));
            }
            for &v in vars.iter() {
                if v >= self.k || std::mem::replace(&mut covered[v], true) {
                    return Err(Error::Invalid("factor variable sets must partition the slots".into()));
                }
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(Error::Invalid("factor variable sets must cover every slot".into()));
        }
        let supports: Vec<Vec<Vec<usize>>> = factors.iter().map(|(_, f)| f.support()).collect();
        let mut idx = vec![0usize; self.k];
        fn rec(
            t: usize,
            factors: &[(&[usize], &MultilinearForm)],
            supports: &[Vec<Vec<usize>>],
            idx: &mut [usize],
            out: &mut MultilinearForm,
        ) {
            if t == factors.len() {
                out.flip_coeff(idx);
                return;
            }
            for s in &supports[t] {
                for (&v, &i) in factors[t].0.iter().zip(s) {
                    idx[v] = i;
                }
                rec(t + 1, factors, supports, idx, out);
            }
        }
        rec(0, factors, &supports, &mut idx, self);
        Ok(())
    }

    /// The product form `Π_f factor_f(x_{vars_f})` of arity k.
    pub fn product(n: usize, k: usize, factors: &[(&[usize], &MultilinearForm)]) -> Result<Self> {
        let mut out = Self::zero(n, k)?;
        out.xor_product(factors)?;
        Ok(out)
    }

    /// `y ↦ f(M_1 y_1, …, M_k y_k)` for matrices `M_a` of shape `n × n'`.
    pub fn substitute(&self, maps: &[GF2Matrix]) -> Result<Self> {
        if maps.len() != self.k {
            return Err(Error::ArityMismatch { expected: self.k, found: maps.len() });
        }
        let n2 = maps.first().map_or(0, |m| m.cols());
        for m in maps {
            if m.rows() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, found: m.rows() });
            }
            if m.cols() != n2 {
                return Err(Error::DimensionMismatch { expected: n2, found: m.cols() });
            }
        }
        // Mode products one axis at a time on a dense byte tensor.
        let mut dims = vec![self.n; self.k];
        let mut data = vec![0u8; checked_pow(self.n, self.k).expect("guarded") as usize];
        for idx in self.support() {
            let flat = idx.iter().fold(0, |acc, &i| acc * self.n + i);
            data[flat] = 1;
        }
        for (axis, m) in maps.iter().enumerate() {
            let outer: usize = dims[..axis].iter().product();
            let inner: usize = dims[axis + 1..].iter().product();
            let mut next = vec![0u8; outer * n2 * inner];
            for o in 0..outer {
                for i in 0..self.n {
                    let row = m.row(i);
                    let src = &data[(o * self.n + i) * inner..(o * self.n + i + 1) * inner];
                    if src.iter().all(|&b| b == 0) {
                        continue;
                    }
                    for j in row.ones() {
                        let dst = &mut next[(o * n2 + j) * inner..(o * n2 + j + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d ^= s;
                        }
                    }
                }
            }
            dims[axis] = n2;
            data = next;
        }
        let mut out = Self::zero(n2, self.k)?;
        let mut idx = vec![0usize; self.k];
        for (flat, &b) in data.iter().enumerate() {
            if b == 1 {
                let mut r = flat;
                for slot in idx.iter_mut().rev() {
                    *slot = r % n2;
                    r /= n2;
                }
                out.set_coeff(&idx, true);
            }
        }
        Ok(out)
    }

    /// The restriction to `U^k`, in the coordinates of U's basis.
    pub fn restrict(&self, u: &Subspace) -> Result<Self> {
        if u.ambient_dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: u.ambient_dim() });
        }
        let b = GF2Matrix::from_columns(self.n, u.basis())?;
        self.substitute(&vec![b; self.k])
    }

    /// For a form `g` in U-coordinates, the form `x ↦ g(c(x_1), …, c(x_k))`
    /// on the ambient space, where `c` reads the pivot coordinates.
    pub fn extend_from(g: &Self, u: &Subspace) -> Result<Self> {
        if g.n != u.dim() {
            return Err(Error::DimensionMismatch { expected: u.dim(), found: g.n });
        }
        let n = u.ambient_dim();
        let mut sel = GF2Matrix::zeros(u.dim(), n);
        for (i, p) in u.pivots().into_iter().enumerate() {
            sel.set(i, p, true);
        }
        g.substitute(&vec![sel; g.k])
    }
}

impl fmt::Debug for MultilinearForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Form(n={}, k={}, support={:?})", self.n, self.k, self.support())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn all_tuples(n: usize, k: usize) -> Vec<Vec<u64>> {
        let total = 1u64 << (n * k);
        (0..total)
            .map(|b| (0..k).map(|a| (b >> (a * n)) & ((1 << n) - 1)).collect())
            .collect()
    }

    #[test]
    fn vector_roundtrip() {
        let f = MultilinearForm::random(3, 3, &mut rng(4)).unwrap();
        let v = f.to_vector();
        assert_eq!(v.weight(), f.weight());
        assert_eq!(MultilinearForm::from_vector(3, 3, &v).unwrap(), f);
    }

    fn monomial_sum(f: &MultilinearForm, x: &[u64]) -> bool {
        f.support().iter().fold(false, |acc, idx| {
            acc ^ idx.iter().zip(x).all(|(&i, &xa)| (xa >> i) & 1 == 1)
        })
    }

    #[test]
    fn evaluate_basics() {
        let z = MultilinearForm::zero(3, 2).unwrap();
        assert!(!z.eval_words(&[7, 7]));
        let d = MultilinearForm::dot(3).unwrap();
        let e1 = GF2Vector::unit(3, 0);
        let e2 = GF2Vector::unit(3, 1);
        assert!(d.evaluate(&[e1.clone(), e1.clone()]).unwrap());
        assert!(!d.evaluate(&[e1, e2]).unwrap());
    }

    #[test]
    fn evaluate_matches_monomial_sum() {
        let mut r = rng(10);
        let f = MultilinearForm::random(3, 3, &mut r).unwrap();
        for _ in 0..50 {
            let x: Vec<u64> = (0..3).map(|_| r.gen::<u64>() & 7).collect();
            assert_eq!(f.eval_words(&x), monomial_sum(&f, &x));
        }
    }

    #[test]
    fn slice_cases() {
        let z = MultilinearForm::zero(3, 3).unwrap();
        assert!(z.slice_words(&[(0, 5)]).unwrap().is_zero());
        let d = MultilinearForm::dot(3).unwrap();
        let s = d.slice(&[(0, GF2Vector::unit(3, 1))]).unwrap();
        assert_eq!(s.support(), vec![vec![1]]);
        assert!(d.slice_words(&[(0, 1), (1, 1)]).is_err());
    }

    #[test]
    fn slice_matches_merge_exhaustively() {
        let mut r = rng(11);
        let f = MultilinearForm::random(3, 4, &mut r).unwrap();
        let (a, b) = (r.gen::<u64>() & 7, r.gen::<u64>() & 7);
        let s = f.slice_words(&[(1, a), (3, b)]).unwrap();
        for y in all_tuples(3, 2) {
            assert_eq!(s.eval_words(&y), f.eval_words(&[y[0], a, y[1], b]));
        }
    }

    #[test]
    fn permute_equivariance_and_action() {
        let mut r = rng(12);
        let f = MultilinearForm::random(2, 3, &mut r).unwrap();
        assert_eq!(f.permute(&Permutation::identity(3)).unwrap(), f);
        assert_eq!(f.swap(0, 2).swap(0, 2), f);
        let c = Permutation::cycle(3, &[0, 1, 2]);
        let g = f.permute(&c).unwrap();
        for x in all_tuples(2, 3) {
            assert_eq!(g.eval_words(&x), f.eval_words(&c.apply(&x)));
        }
        let all = Permutation::all(4);
        let f4 = MultilinearForm::random(2, 4, &mut r).unwrap();
        for _ in 0..30 {
            let p = &all[r.gen_range(0..24)];
            let q = &all[r.gen_range(0..24)];
            let lhs = f4.permute(p).unwrap().permute(q).unwrap();
            assert_eq!(lhs, f4.permute(&p.compose(q)).unwrap());
        }
    }

    #[test]
    fn slice_commutes_with_permute_on_disjoint_sets() {
        let mut r = rng(13);
        let f = MultilinearForm::random(2, 4, &mut r).unwrap();
        // Swap slots 0,1 and fix slot 3: slicing commutes with the swap.
        let a = 2u64;
        let lhs = f.swap(0, 1).slice_words(&[(3, a)]).unwrap();
        let rhs = f.slice_words(&[(3, a)]).unwrap().swap(0, 1);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn symmetry_predicates() {
        let z = MultilinearForm::zero(2, 3).unwrap();
        assert!(z.is_symmetric_prefix(3));
        let f = MultilinearForm::from_support(2, 2, [&[0usize, 1][..]]).unwrap();
        assert!(!f.is_symmetric_prefix(2));
        let mut r = rng(14);
        let g = MultilinearForm::random(3, 4, &mut r).unwrap();
        let s = VariableSet::new(vec![0, 2, 3]);
        assert!(g.symmetrized(&s).is_symmetric(&s));
    }

    #[test]
    fn diagonal_contract_cases() {
        let d = MultilinearForm::dot(4).unwrap().diagonal_contract().unwrap();
        assert_eq!(d.fibers(), &[0b1111]);
        let f = MultilinearForm::from_support(3, 3, [&[0usize, 0, 2][..]]).unwrap();
        assert_eq!(f.diagonal_contract().unwrap().support(), vec![vec![0, 2]]);
        let asym = MultilinearForm::from_support(2, 2, [&[0usize, 1][..]]).unwrap();
        assert!(matches!(asym.diagonal_contract(), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn diagonal_contract_identity_exhaustive() {
        let mut r = rng(15);
        let f = MultilinearForm::random(2, 4, &mut r).unwrap().symmetrized(&VariableSet::prefix(2));
        let f = f.xor(&MultilinearForm::random(2, 4, &mut r).unwrap().symmetrized(&VariableSet::prefix(2)));
        let c = f.diagonal_contract().unwrap();
        for x in all_tuples(2, 3) {
            assert_eq!(c.eval_words(&x), f.eval_words(&[x[0], x[0], x[1], x[2]]));
        }
    }

    #[test]
    fn strong_symmetry() {
        assert!(MultilinearForm::zero(2, 3).unwrap().is_strongly_symmetric());
        assert!(MultilinearForm::diagonal(3, 3).unwrap().is_strongly_symmetric());
        // λ_{001} + λ_{010} + λ_{100}: symmetric, contraction λ'_{01} only.
        let f = MultilinearForm::from_support(2, 3, [&[0usize, 0, 1][..], &[0, 1, 0], &[1, 0, 0]]).unwrap();
        assert!(f.is_symmetric_prefix(3));
        assert!(!f.is_strongly_symmetric());
        assert!(matches!(f.lift_strongly_symmetric(), Err(Error::NotStronglySymmetric)));
    }

    #[test]
    fn lift_dot_product() {
        let d = MultilinearForm::dot(3).unwrap();
        let l = d.lift_strongly_symmetric().unwrap();
        assert_eq!(l, MultilinearForm::diagonal(3, 3).unwrap());
        assert!(l.is_strongly_symmetric());
        assert_eq!(l.diagonal_contract().unwrap(), d);
        assert!(MultilinearForm::zero(2, 2).unwrap().lift_strongly_symmetric().unwrap().is_zero());
    }

    #[test]
    fn product_and_substitute() {
        let b = MultilinearForm::linear(&GF2Vector::from_u64(3, 0b011)).unwrap();
        let g = MultilinearForm::linear(&GF2Vector::from_u64(3, 0b110)).unwrap();
        let p = MultilinearForm::product(3, 2, &[(&[0], &b), (&[1], &g)]).unwrap();
        for x in all_tuples(3, 2) {
            assert_eq!(p.eval_words(&x), b.eval_words(&[x[0]]) & g.eval_words(&[x[1]]));
        }
        let mut r = rng(16);
        let f = MultilinearForm::random(3, 3, &mut r).unwrap();
        let maps: Vec<GF2Matrix> = (0..3)
            .map(|_| {
                let rows = (0..3).map(|_| GF2Vector::from_u64(2, r.gen())).collect();
                GF2Matrix::from_rows(2, rows).unwrap()
            })
            .collect();
        let s = f.substitute(&maps).unwrap();
        for y in all_tuples(2, 3) {
            let x: Vec<u64> = y
                .iter()
                .zip(&maps)
                .map(|(&ya, m)| m.mul_vec(&GF2Vector::from_u64(2, ya)).unwrap().to_u64())
                .collect();
            assert_eq!(s.eval_words(&y), f.eval_words(&x));
        }
    }
}
