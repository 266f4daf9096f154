//! Non-classical polynomials `F_2^n → T` with exact dyadic values.
//!
//! A polynomial of degree at most `d` is stored through its monomial
//! representation `α + Σ c_{S,j} |x_S| / 2^{j+1}` with `|S| + j ≤ d`, where
//! `|x_S|` is the integer product of the coordinates in `S`.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::MultilinearForm;
use crate::gf2::{solve_combination, GF2Vector};
use crate::par::{self, Exec};

/// Largest supported denominator exponent.
pub const MAX_DEPTH: u32 = 62;

/// Default cap on `2^{(d+2)n}` for exhaustive derivative checks.
pub const DEFAULT_EXHAUSTION_LOG2: u32 = 30;

/// An element `num / 2^log2_den` of `T = R/Z`, with `0 ≤ num < 2^log2_den`
/// and `num` odd unless zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TorusValue {
    num: u64,
    log2_den: u32,
}

impl TorusValue {
    pub const ZERO: TorusValue = TorusValue { num: 0, log2_den: 0 };
    pub const HALF: TorusValue = TorusValue { num: 1, log2_den: 1 };

    /// Reduces `num / 2^log2_den` mod 1. Negative numerators wrap.
    pub fn new(num: i64, log2_den: u32) -> Result<Self> {
        if log2_den > MAX_DEPTH {
            return Err(Error::SizeGuard(format!("denominator 2^{log2_den} exceeds 2^{MAX_DEPTH}")));
        }
        let m = 1i128 << log2_den;
        let r = (num as i128).rem_euclid(m) as u64;
        Ok(Self::reduce(r, log2_den))
    }

    fn reduce(num: u64, log2_den: u32) -> Self {
        if num == 0 {
            return Self::ZERO;
        }
        let tz = num.trailing_zeros().min(log2_den);
        Self { num: num >> tz, log2_den: log2_den - tz }
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn log2_den(self) -> u32 {
        self.log2_den
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    /// Numerator over the common denominator `2^depth`; `depth` must be at
    /// least `log2_den`.
    pub fn scaled_to(self, depth: u32) -> u64 {
        debug_assert!(depth >= self.log2_den);
        self.num << (depth - self.log2_den)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / 2f64.powi(self.log2_den as i32)
    }
}

impl Add for TorusValue {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        let d = self.log2_den.max(other.log2_den);
        let mask = (1u64 << d).wrapping_sub(1);
        Self::reduce(self.scaled_to(d).wrapping_add(other.scaled_to(d)) & mask, d)
    }
}

impl Neg for TorusValue {
    type Output = Self;

    fn neg(self) -> Self {
        let mask = (1u64 << self.log2_den).wrapping_sub(1);
        Self::reduce(self.num.wrapping_neg() & mask, self.log2_den)
    }
}

impl Sub for TorusValue {
    type Output = Self;

    fn sub(self, other: Self) -> Self {
        self + -other
    }
}

impl fmt::Debug for TorusValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.num, self.log2_den)
    }
}

impl fmt::Display for TorusValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A monomial `|x_S| / 2^{j+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Monomial {
    /// Coordinates, sorted and nonempty.
    pub set: Vec<usize>,
    pub depth: u32,
}

impl Monomial {
    pub fn new(mut set: Vec<usize>, depth: u32) -> Self {
        set.sort_unstable();
        set.dedup();
        Self { set, depth }
    }

    fn mask(&self) -> u64 {
        self.set.iter().fold(0, |m, &i| m | 1 << i)
    }

    fn degree(&self) -> usize {
        self.set.len() + self.depth as usize
    }
}

/// A non-classical polynomial in monomial representation. Coefficients are
/// bits, so only the monomials present are stored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonClassicalPoly {
    n: usize,
    degree_bound: usize,
    constant: TorusValue,
    terms: BTreeSet<Monomial>,
}

impl NonClassicalPoly {
    pub fn zero(n: usize, degree_bound: usize) -> Result<Self> {
        if n > 64 {
            return Err(Error::SizeGuard(format!("dimension {n} exceeds 64")));
        }
        Ok(Self { n, degree_bound, constant: TorusValue::ZERO, terms: BTreeSet::new() })
    }

    pub fn new(n: usize, degree_bound: usize, constant: TorusValue, terms: impl IntoIterator<Item = Monomial>) -> Result<Self> {
        let mut p = Self::zero(n, degree_bound)?;
        p.constant = constant;
        for t in terms {
            p.toggle(t)?;
        }
        Ok(p)
    }

    /// Flips the coefficient of `m`, enforcing `|S| + j ≤ d`.
    pub fn toggle(&mut self, m: Monomial) -> Result<()> {
        if m.set.is_empty() || m.set.iter().any(|&i| i >= self.n) {
            return Err(Error::Invalid(format!("monomial set {:?} invalid for n={}", m.set, self.n)));
        }
        if m.degree() > self.degree_bound {
            return Err(Error::Invalid(format!("|S| + j = {} exceeds degree bound {}", m.degree(), self.degree_bound)));
        }
        if m.depth + 1 > MAX_DEPTH {
            return Err(Error::SizeGuard(format!("depth {} too large", m.depth)));
        }
        if !self.terms.remove(&m) {
            self.terms.insert(m);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn constant(&self) -> TorusValue {
        self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = &Monomial> {
        self.terms.iter()
    }

    /// Largest denominator exponent appearing in any value.
    pub fn depth(&self) -> u32 {
        self.terms.iter().map(|m| m.depth + 1).max().unwrap_or(0).max(self.constant.log2_den)
    }

    pub fn eval_word(&self, x: u64) -> TorusValue {
        let d = self.depth();
        let mut acc = self.constant.scaled_to(d);
        for m in &self.terms {
            let mask = m.mask();
            if x & mask == mask {
                acc = acc.wrapping_add(1u64 << (d - m.depth - 1));
            }
        }
        TorusValue::reduce(acc & (1u64 << d).wrapping_sub(1), d)
    }

    pub fn evaluate(&self, x: &GF2Vector) -> Result<TorusValue> {
        if x.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.dim() });
        }
        Ok(self.eval_word(x.to_u64()))
    }

    pub fn table(&self) -> Result<TorusFunction> {
        guard_table(self.n)?;
        TorusFunction::new(self.n, (0..1u64 << self.n).map(|x| self.eval_word(x)).collect())
    }
}

fn guard_table(n: usize) -> Result<()> {
    if n > 24 {
        return Err(Error::SizeGuard(format!("a table over F_2^{n} is too large")));
    }
    Ok(())
}

/// `evaluate_poly`.
pub fn evaluate_poly(q: &NonClassicalPoly, x: &GF2Vector) -> Result<TorusValue> {
    q.evaluate(x)
}

/// A function `F_2^n → T` given by its table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusFunction {
    n: usize,
    table: Vec<TorusValue>,
}

impl TorusFunction {
    pub fn new(n: usize, table: Vec<TorusValue>) -> Result<Self> {
        guard_table(n)?;
        if table.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, found: table.len() });
        }
        Ok(Self { n, table })
    }

    pub fn constant(n: usize, value: TorusValue) -> Result<Self> {
        guard_table(n)?;
        Self::new(n, vec![value; 1 << n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[TorusValue] {
        &self.table
    }

    pub fn at(&self, x: u64) -> TorusValue {
        self.table[x as usize]
    }

    /// `Δ_a f(x) = f(x + a) − f(x)`.
    pub fn derivative(&self, a: u64) -> Self {
        let table = (0..self.table.len() as u64).map(|x| self.at(x ^ a) - self.at(x)).collect();
        Self { n: self.n, table }
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(|v| v.is_zero())
    }

    pub fn depth(&self) -> u32 {
        self.table.iter().map(|v| v.log2_den).max().unwrap_or(0)
    }
}

/// `additive_derivative`.
pub fn additive_derivative(f: &TorusFunction, a: &GF2Vector) -> Result<TorusFunction> {
    if a.dim() != f.n {
        return Err(Error::DimensionMismatch { expected: f.n, found: a.dim() });
    }
    Ok(f.derivative(a.to_u64()))
}

/// Whether every `(d+1)`-fold derivative of `f` vanishes, exhaustively.
pub fn degree_check(f: &TorusFunction, d: usize) -> Result<bool> {
    degree_check_with(f, d, DEFAULT_EXHAUSTION_LOG2, Exec::default())
}

pub fn degree_check_with(f: &TorusFunction, d: usize, budget_log2: u32, exec: Exec) -> Result<bool> {
    let need = (d as u128 + 2) * f.n as u128;
    if need > budget_log2 as u128 {
        return Err(Error::BudgetExceeded { needed: need, budget: budget_log2 as u128 });
    }
    fn rec(g: &TorusFunction, left: usize) -> bool {
        if left == 0 {
            return g.is_zero();
        }
        // Δ_0 is zero, so a = 0 never witnesses failure.
        (1..g.table.len() as u64).all(|a| rec(&g.derivative(a), left - 1))
    }
    let size = f.table.len() as u64;
    Ok(par::find_first(exec, 1..size, |a| !rec(&f.derivative(a), d)).is_none())
}

/// `Δ_{a_1} ⋯ Δ_{a_k} f(x)` evaluated by inclusion–exclusion.
pub fn iterated_derivative(f: &TorusFunction, a: &[u64], x: u64) -> TorusValue {
    let k = a.len();
    let mut acc = TorusValue::ZERO;
    for t in 0u32..1 << k {
        let shift = (0..k).filter(|&i| t >> i & 1 == 1).fold(0u64, |s, i| s ^ a[i]);
        let v = f.at(x ^ shift);
        acc = if (k as u32 - t.count_ones()) % 2 == 0 { acc + v } else { acc - v };
    }
    acc
}

/// The symmetric form `τ` with `Δ^k m = |τ|/2` for a monomial of degree
/// exactly `k`, read off at unit vectors.
fn derivative_form(n: usize, k: usize, m: &Monomial) -> Result<MultilinearForm> {
    let q = NonClassicalPoly::new(n, k, TorusValue::ZERO, [m.clone()])?;
    let mut tau = MultilinearForm::zero(n, k)?;
    // Only coordinates in S can matter; τ is supported on tuples inside S.
    let s = &m.set;
    let mut idx = vec![0usize; k];
    for code in 0..s.len().pow(k as u32) {
        let mut c = code;
        for v in idx.iter_mut() {
            *v = s[c % s.len()];
            c /= s.len();
        }
        let a: Vec<u64> = idx.iter().map(|&i| 1u64 << i).collect();
        let mut acc = TorusValue::ZERO;
        for t in 0u32..1 << k {
            let x = (0..k).filter(|&i| t >> i & 1 == 1).fold(0u64, |s, i| s ^ a[i]);
            let v = q.eval_word(x);
            acc = if (k as u32 - t.count_ones()) % 2 == 0 { acc + v } else { acc - v };
        }
        if acc == TorusValue::HALF {
            tau.set_coeff(&idx, true);
        } else if !acc.is_zero() {
            return Err(Error::SolverFailed(format!("derivative of {m:?} at {idx:?} is {acc}, not in {{0, 1/2}}")));
        }
    }
    Ok(tau)
}

/// A polynomial `q` of degree at most `k` with `Δ_{a_1} ⋯ Δ_{a_k} q =
/// |σ(a)|/2` for strongly symmetric `σ`, verified exhaustively when
/// `2^{(k+1)n}` fits the exhaustion guard.
///
/// `Δ^k` maps degree-`k` polynomials homomorphically onto symmetric forms,
/// so the coefficient bits of the monomials with `|S| + j = k` satisfy an
/// F_2-linear system. Depth 0 is fixed first by the off-diagonal
/// coefficients; the deeper layers then solve the residual.
pub fn integrate(sigma: &MultilinearForm) -> Result<NonClassicalPoly> {
    let (n, k) = (sigma.n(), sigma.k());
    if !sigma.is_strongly_symmetric() {
        return Err(Error::NotStronglySymmetric);
    }
    let mut q = NonClassicalPoly::zero(n, k)?;
    if sigma.is_zero() {
        return Ok(q);
    }
    let mut residual = sigma.clone();
    if k <= n {
        for s in subsets(n, k) {
            if sigma.coeff(&s) {
                let m = Monomial::new(s, 0);
                residual.xor_assign(&derivative_form(n, k, &m)?);
                q.toggle(m)?;
            }
        }
    }
    let mut columns = Vec::new();
    let mut monomials = Vec::new();
    for size in 1..k.min(n + 1) {
        for s in subsets(n, size) {
            let m = Monomial::new(s, (k - size) as u32);
            columns.push(derivative_form(n, k, &m)?.to_vector());
            monomials.push(m);
        }
    }
    if !residual.is_zero() {
        let bits = solve_combination(&columns, &residual.to_vector())
            .map_err(|_| Error::SolverFailed(format!("deeper layers cannot reach the residual; weight {}", residual.weight())))?;
        for (i, m) in monomials.into_iter().enumerate() {
            if bits.get(i) {
                q.toggle(m)?;
            }
        }
    }
    if (k as u32 + 1) * n as u32 <= DEFAULT_EXHAUSTION_LOG2 {
        if let Some(bad) = derivative_identity_violation(&q, sigma, Exec::default())? {
            return Err(Error::SolverFailed(format!("identity fails at a = {:?}, x = {}", bad.0, bad.1)));
        }
    }
    Ok(q)
}

/// First `(a_1, …, a_k, x)` where `Δ_{a_1} ⋯ Δ_{a_k} q(x) ≠ |σ(a)|/2`.
pub fn derivative_identity_violation(q: &NonClassicalPoly, sigma: &MultilinearForm, exec: Exec) -> Result<Option<(Vec<u64>, u64)>> {
    let (n, k) = (sigma.n(), sigma.k());
    let f = q.table()?;
    let total = 1u64 << ((k + 1) * n);
    let mask = (1u64 << n) - 1;
    let split = |b: u64| -> (Vec<u64>, u64) { ((0..k).map(|i| b >> (n * i) & mask).collect(), b >> (n * k)) };
    let hit = par::find_first(exec, 0..total, |b| {
        let (a, x) = split(b);
        let want = if sigma.eval_words(&a) { TorusValue::HALF } else { TorusValue::ZERO };
        iterated_derivative(&f, &a, x) != want
    });
    Ok(hit.map(split))
}

/// Whether the identity holds on `samples` random tuples.
pub fn derivative_identity_sampled(q: &NonClassicalPoly, sigma: &MultilinearForm, samples: u64, rng: &mut impl rand::Rng) -> Result<bool> {
    let (n, k) = (sigma.n(), sigma.k());
    let f = q.table()?;
    let mask = (1u64 << n) - 1;
    Ok((0..samples).all(|_| {
        let a: Vec<u64> = (0..k).map(|_| rng.gen::<u64>() & mask).collect();
        let x = rng.gen::<u64>() & mask;
        let want = if sigma.eval_words(&a) { TorusValue::HALF } else { TorusValue::ZERO };
        iterated_derivative(&f, &a, x) == want
    }))
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0u64..1 << n).filter(|m| m.count_ones() as usize == size).map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use crate::forms::VariableSet;

    fn tv(num: i64, den: u32) -> TorusValue {
        TorusValue::new(num, den).unwrap()
    }

    fn random_poly(n: usize, d: usize, rng: &mut impl Rng) -> NonClassicalPoly {
        let mut q = NonClassicalPoly::zero(n, d).unwrap();
        q.constant = tv(rng.gen_range(0..8), 3);
        for mask in 1u64..1 << n {
            let set: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            for j in 0..=d.saturating_sub(set.len()) {
                if set.len() + j <= d && rng.gen_bool(0.5) {
                    q.toggle(Monomial::new(set.clone(), j as u32)).unwrap();
                }
            }
        }
        q
    }

    #[test]
    fn torus_arithmetic_is_mod_one() {
        assert_eq!(tv(3, 1), TorusValue::HALF);
        assert_eq!(tv(-1, 2), tv(3, 2));
        assert_eq!(tv(1, 2) + tv(3, 4), tv(1, 4) + tv(3, 4) + tv(1, 2) - tv(1, 4));
        assert_eq!(tv(1, 1) + tv(1, 1), TorusValue::ZERO);
        assert_eq!(tv(6, 3), tv(3, 2));
    }

    #[test]
    fn zero_and_single_monomial() {
        let z = NonClassicalPoly::zero(3, 2).unwrap();
        assert!((0..8).all(|x| z.eval_word(x).is_zero()));
        let q = NonClassicalPoly::new(2, 1, TorusValue::ZERO, [Monomial::new(vec![0], 0)]).unwrap();
        assert_eq!(q.eval_word(0b01), TorusValue::HALF);
        assert_eq!(q.eval_word(0), TorusValue::ZERO);
        assert!(NonClassicalPoly::new(2, 1, TorusValue::ZERO, [Monomial::new(vec![0], 1)]).is_err());
    }

    #[test]
    fn evaluation_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = random_poly(3, 4, &mut rng);
            for x in 0..8u64 {
                // Rational oracle: Σ c |x_S| / 2^{j+1} as f64, reduced mod 1.
                let mut v = q.constant().to_f64();
                for m in q.terms() {
                    if m.set.iter().all(|&i| x >> i & 1 == 1) {
                        v += 1.0 / 2f64.powi(m.depth as i32 + 1);
                    }
                }
                assert_eq!(v.rem_euclid(1.0), q.eval_word(x).to_f64());
            }
        }
    }

    #[test]
    fn derivatives_commute_and_kill_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = TorusFunction::new(4, (0..16).map(|_| tv(rng.gen_range(0..64), 6)).collect()).unwrap();
        for a in 0..16 {
            for b in 0..16 {
                assert_eq!(f.derivative(a).derivative(b), f.derivative(b).derivative(a));
            }
        }
        assert!(f.derivative(0).is_zero());
        assert!(TorusFunction::constant(4, tv(1, 3)).unwrap().derivative(5).is_zero());
    }

    #[test]
    fn degree_check_examples() {
        let c = TorusFunction::constant(2, tv(1, 4)).unwrap();
        assert!(degree_check(&c, 0).unwrap());
        let half_x1 = NonClassicalPoly::new(2, 1, TorusValue::ZERO, [Monomial::new(vec![0], 0)]).unwrap().table().unwrap();
        assert!(!degree_check(&half_x1, 0).unwrap());
        assert!(degree_check(&half_x1, 1).unwrap());
        // |x_1|/4 has degree 2 but not 1.
        let quarter = NonClassicalPoly::new(2, 2, TorusValue::ZERO, [Monomial::new(vec![0], 1)]).unwrap().table().unwrap();
        assert!(!degree_check(&quarter, 1).unwrap());
        assert!(degree_check(&quarter, 2).unwrap());
        assert!(matches!(degree_check(&half_x1, 20), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn representation_tables_pass_their_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 0..=3 {
            for _ in 0..3 {
                let q = random_poly(3, d, &mut rng);
                assert!(degree_check(&q.table().unwrap(), d).unwrap(), "d={d}");
            }
        }
    }

    #[test]
    fn integrate_trivial_cases() {
        assert!(integrate(&MultilinearForm::zero(3, 3).unwrap()).unwrap().terms().next().is_none());
        let l = MultilinearForm::linear(&GF2Vector::from_u64(3, 0b110)).unwrap();
        let q = integrate(&l).unwrap();
        for x in 0..8u64 {
            let want = if (x & 0b110).count_ones() % 2 == 1 { TorusValue::HALF } else { TorusValue::ZERO };
            assert_eq!(q.eval_word(x), want);
        }
    }

    #[test]
    fn integrate_dot_product_exhaustively() {
        let dot = MultilinearForm::dot(3).unwrap();
        let q = integrate(&dot).unwrap();
        assert!(q.degree_bound() <= 2);
        assert_eq!(derivative_identity_violation(&q, &dot, Exec::Sequential).unwrap(), None);
        assert!(degree_check(&q.table().unwrap(), 2).unwrap());
    }

    #[test]
    fn integrate_rejects_non_strongly_symmetric() {
        let mut f = MultilinearForm::zero(2, 2).unwrap();
        f.set_coeff(&[0, 1], true);
        assert_eq!(integrate(&f), Err(Error::NotStronglySymmetric));
    }

    #[test]
    fn integrate_lifted_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2, 3] {
            for _ in 0..5 {
                let base = MultilinearForm::random(n, 2, &mut rng).unwrap();
                let sigma = base.symmetrized(&VariableSet::prefix(2)).xor(&MultilinearForm::diagonal(n, 2).unwrap());
                if !sigma.is_strongly_symmetric() {
                    continue;
                }
                let mut cur = sigma;
                for _ in 0..2 {
                    let lifted = cur.lift_strongly_symmetric().unwrap();
                    assert_eq!(lifted.diagonal_contract().unwrap(), cur);
                    for s in [&cur, &lifted] {
                        let q = integrate(s).unwrap();
                        assert_eq!(derivative_identity_violation(&q, s, Exec::Parallel).unwrap(), None);
                    }
                    cur = lifted;
                }
            }
        }
    }
}
