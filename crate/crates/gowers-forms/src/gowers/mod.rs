//! Multiplicative derivatives, Gowers and box norms, correlation with
//! multilinear phases, spectrum search and the restriction lemmas, all with
//! exact sums in `Z[ζ]` and a single final conversion to floating point.

mod phase;
pub mod pipeline;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::forms::{MultilinearForm, Permutation};
use crate::gf2::{complement_projection, GF2Vector, Subspace};
use crate::par::{self, pairwise_sum, Exec};
use crate::rankbias::{bias, PrankCertificate};

pub use phase::{CycloInt, PhaseFunction, MAX_PHASE_DEPTH};
pub use pipeline::{pipeline_demo, step3_check, PipelineConfig, PipelineStatus, PipelineStep, PipelineTrace, Step3Report};

/// Default cap, as a power of two, on the number of summands visited.
pub const DEFAULT_BUDGET_LOG2: u32 = 30;

fn check_budget(needed_log2: usize, budget_log2: u32) -> Result<()> {
    if needed_log2 as u128 > budget_log2 as u128 {
        return Err(Error::BudgetExceeded { needed: needed_log2 as u128, budget: budget_log2 as u128 });
    }
    Ok(())
}

/// `∂_a f`.
pub fn mder(f: &PhaseFunction, a: &GF2Vector) -> Result<PhaseFunction> {
    if a.dim() != f.n() {
        return Err(Error::DimensionMismatch { expected: f.n(), found: a.dim() });
    }
    Ok(f.mder(a.to_u64()))
}

/// `Σ / 2^log2_count` with `Σ ∈ Z[ζ]` exact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactAverage {
    pub sum: CycloInt,
    pub log2_count: u32,
}

impl ExactAverage {
    pub fn value(&self) -> (Complex64, f64) {
        let (z, e) = self.sum.to_complex();
        let s = 2f64.powi(-(self.log2_count as i32));
        (z * s, e * s)
    }

    /// The exact value when it is rational.
    pub fn exact(&self) -> Option<Dyadic> {
        let r = self.sum.rational()?;
        i64::try_from(r).ok().map(|r| Dyadic::new(r, self.log2_count))
    }
}

struct Work {
    depth: u32,
    mask: u32,
    size: u64,
    table: Vec<u32>,
}

impl Work {
    /// Phases at depth at least one so that `−1` is a power of ζ.
    fn new(f: &PhaseFunction) -> Self {
        let depth = f.depth().max(1);
        let table = f.raw().iter().map(|p| p << (depth - f.depth())).collect();
        Self { depth, mask: (1 << depth) - 1, size: 1 << f.n(), table }
    }

    fn half(&self) -> u32 {
        1 << (self.depth - 1)
    }

    fn derive(&self, t: &[u32], a: u64) -> Vec<u32> {
        (0..t.len()).map(|x| t[x ^ a as usize].wrapping_sub(t[x]) & self.mask).collect()
    }

    fn histogram(&self, t: &[u32], shift: u32, hist: &mut [i128]) {
        for &p in t {
            hist[((p + shift) & self.mask) as usize] += 1;
        }
    }

    /// Folds `leaf(acc, a, ∂_{a_1} ⋯ ∂_{a_j} f)` over all `a ∈ G^j`, in
    /// parallel over `a_1`; `merge` must be associative and commutative.
    fn fold<A, Z, L, M>(&self, j: usize, exec: Exec, zero: Z, leaf: L, merge: M) -> A
    where
        A: Send,
        Z: Fn() -> A + Sync + Send,
        L: Fn(&mut A, &[u64], &[u32]) + Sync + Send,
        M: Fn(&mut A, A),
    {
        fn rec<A, L: Fn(&mut A, &[u64], &[u32])>(w: &Work, t: &[u32], level: usize, a: &mut Vec<u64>, acc: &mut A, leaf: &L) {
            if level == a.len() {
                leaf(acc, a, t);
                return;
            }
            for b in 0..w.size {
                a[level] = b;
                let d = w.derive(t, b);
                rec(w, &d, level + 1, a, acc, leaf);
            }
        }
        if j == 0 {
            let mut acc = zero();
            leaf(&mut acc, &[], &self.table);
            return acc;
        }
        let parts = par::map_collect(exec, 0..self.size, |a1| {
            let mut acc = zero();
            let mut a = vec![0u64; j];
            a[0] = a1;
            let d = self.derive(&self.table, a1);
            rec(self, &d, 1, &mut a, &mut acc, &leaf);
            acc
        });
        let mut out = zero();
        for p in parts {
            merge(&mut out, p);
        }
        out
    }

    fn hist_zero(&self) -> Vec<i128> {
        vec![0; 1 << self.depth]
    }
}

#[allow(clippy::ptr_arg)] // Must match the fold combiner signature.
fn add_hist(a: &mut Vec<i128>, b: Vec<i128>) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMethod {
    /// `E_{x,a} ∂_{a_1} ⋯ ∂_{a_k} f(x)` over all `(k+1)n` bits.
    Naive,
    /// `E_{a_1..a_{k−1}} |E_x ∂_{a_1} ⋯ ∂_{a_{k−1}} f(x)|^2`.
    Recursive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub k: usize,
    pub method: NormMethod,
    /// `‖f‖_{U^k}^{2^k}`, exact.
    pub power: ExactAverage,
    pub exact_power: Option<Dyadic>,
    pub value: f64,
    /// Bound on `|value − ‖f‖_{U^k}|`.
    pub error_bound: f64,
}

pub fn gowers_norm(f: &PhaseFunction, k: usize, method: NormMethod) -> Result<NormReport> {
    gowers_norm_with(f, k, method, DEFAULT_BUDGET_LOG2, Exec::default())
}

pub fn gowers_norm_with(f: &PhaseFunction, k: usize, method: NormMethod, budget_log2: u32, exec: Exec) -> Result<NormReport> {
    if k == 0 {
        return Err(Error::Invalid("the U^k norm needs k ≥ 1".into()));
    }
    let n = f.n();
    let w = Work::new(f);
    let sum = match method {
        NormMethod::Naive => {
            check_budget((k + 1) * n, budget_log2)?;
            let hist = w.fold(k, exec, || w.hist_zero(), |acc, _, t| w.histogram(t, 0, acc), add_hist);
            CycloInt::from_histogram(w.depth, &hist)
        }
        NormMethod::Recursive => {
            check_budget(k * n, budget_log2)?;
            w.fold(
                k - 1,
                exec,
                || CycloInt::zero(w.depth),
                |acc, _, t| {
                    let mut h = w.hist_zero();
                    w.histogram(t, 0, &mut h);
                    let s = CycloInt::from_histogram(w.depth, &h);
                    acc.add_assign(&s.mul(&s.conj()));
                },
                |a, b| a.add_assign(&b),
            )
        }
    };
    let power = ExactAverage { sum, log2_count: ((k + 1) * n) as u32 };
    let (z, err) = power.value();
    let root = (2u32.pow(k as u32)) as f64;
    let p = z.re.max(0.0);
    let value = p.powf(root.recip());
    // x ↦ x^{1/m} is 1/m-Hölder with constant one.
    let error_bound = if power.exact().is_some() { 0.0 } else { (err + z.im.abs()).powf(root.recip()) };
    Ok(NormReport { k, method, exact_power: power.exact(), power, value, error_bound })
}

/// Unnormalized Walsh–Hadamard transform in place.
pub fn walsh_hadamard(v: &mut [i128]) {
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// `Σ_ξ f̂(ξ)^4` for ±1-valued `f`, exactly.
pub fn fourier_l4(f: &PhaseFunction) -> Result<Dyadic> {
    if !f.is_pm1() {
        return Err(Error::Invalid("the Fourier ℓ⁴ identity is for ±1 functions".into()));
    }
    let n = f.n();
    let mut v: Vec<i128> = f.raw().iter().map(|&p| if p == 0 { 1 } else { -1 }).collect();
    walsh_hadamard(&mut v);
    let s: i128 = v.iter().map(|c| c.pow(4)).sum();
    // f̂ = W / 2^n, so Σ f̂^4 = Σ W^4 / 2^{4n}.
    Ok(Dyadic::new(i64::try_from(s).map_err(|_| Error::SizeGuard("ℓ⁴ sum overflow".into()))?, 4 * n as u32))
}

/// A complex table on `X_1 × ⋯ × X_k`, last coordinate fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxTable {
    pub dims: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl BoxTable {
    pub fn new(dims: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if values.len() != len || dims.contains(&0) {
            return Err(Error::DimensionMismatch { expected: len, found: values.len() });
        }
        Ok(Self { dims, values })
    }

    /// `F(x_1, …, x_k) = f(x_1 + ⋯ + x_k)`.
    pub fn sum_evaluation(f: &PhaseFunction, k: usize) -> Result<Self> {
        let size = 1usize << f.n();
        let dims = vec![size; k];
        let values = (0..size.pow(k as u32))
            .map(|mut i| {
                let mut x = 0u64;
                for _ in 0..k {
                    x ^= (i % size) as u64;
                    i /= size;
                }
                f.value(x)
            })
            .collect();
        Self::new(dims, values)
    }
}

/// `E_{x^0, x^1} Π_ω C^{|ω|} F_ω(x^ω)` for a family indexed by `ω ∈
/// {0,1}^k`, bit `i` of the index selecting the copy of coordinate `i`.
pub fn box_inner(family: &[BoxTable]) -> Result<Complex64> {
    box_inner_with(family, DEFAULT_BUDGET_LOG2)
}

pub fn box_inner_with(family: &[BoxTable], budget_log2: u32) -> Result<Complex64> {
    let dims = family.first().map(|f| f.dims.clone()).ok_or_else(|| Error::Invalid("empty family".into()))?;
    let k = dims.len();
    if family.len() != 1 << k || family.iter().any(|f| f.dims != dims) {
        return Err(Error::Invalid(format!("a box family on {k} coordinates needs 2^{k} tables of equal shape")));
    }
    let work: f64 = dims.iter().map(|&d| 2.0 * (d as f64).log2()).sum::<f64>() + k as f64;
    check_budget(work.ceil() as usize, budget_log2)?;
    fn rec(fams: Vec<Vec<Complex64>>, dims: &[usize]) -> Complex64 {
        let Some((&s, rest)) = dims.split_first() else {
            return fams[0][0];
        };
        let r: usize = rest.iter().product();
        let mut vals = Vec::with_capacity(s * s);
        for x0 in 0..s {
            for x1 in 0..s {
                let next = (0..fams.len() / 2)
                    .map(|w| (0..r).map(|y| fams[2 * w][x0 * r + y] * fams[2 * w + 1][x1 * r + y].conj()).collect())
                    .collect();
                vals.push(rec(next, rest));
            }
        }
        let re = pairwise_sum(&vals.iter().map(|z| z.re).collect::<Vec<_>>());
        let im = pairwise_sum(&vals.iter().map(|z| z.im).collect::<Vec<_>>());
        Complex64::new(re, im) / (s * s) as f64
    }
    Ok(rec(family.iter().map(|f| f.values.clone()).collect(), &dims))
}

pub fn box_norm(f: &BoxTable) -> Result<f64> {
    let k = f.dims.len();
    let v = box_inner(&vec![f.clone(); 1 << k])?;
    Ok(v.re.max(0.0).powf((2f64.powi(k as i32)).recip()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub value: Complex64,
    pub abs: f64,
    pub error_bound: f64,
    /// Set when the value is rational, e.g. for ±1 functions.
    pub exact: Option<Dyadic>,
    pub form: MultilinearForm,
    pub n: usize,
    pub k: usize,
}

impl CorrelationReport {
    fn from_average(avg: &ExactAverage, form: &MultilinearForm) -> Self {
        let (value, error_bound) = avg.value();
        Self { value, abs: value.norm(), error_bound, exact: avg.exact(), form: form.clone(), n: form.n(), k: form.k() }
    }
}

/// `E_{x, a} ∂_{a_1} ⋯ ∂_{a_k} f(x) (−1)^{α(a)}`.
pub fn correlation(f: &PhaseFunction, alpha: &MultilinearForm) -> Result<CorrelationReport> {
    correlation_with(f, alpha, DEFAULT_BUDGET_LOG2, Exec::default())
}

pub fn correlation_with(f: &PhaseFunction, alpha: &MultilinearForm, budget_log2: u32, exec: Exec) -> Result<CorrelationReport> {
    let (n, k) = (alpha.n(), alpha.k());
    if f.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: f.n() });
    }
    check_budget((k + 1) * n, budget_log2)?;
    let w = Work::new(f);
    let hist = w.fold(
        k,
        exec,
        || w.hist_zero(),
        |acc, a, t| w.histogram(t, if alpha.eval_words(a) { w.half() } else { 0 }, acc),
        add_hist,
    );
    let avg = ExactAverage { sum: CycloInt::from_histogram(w.depth, &hist), log2_count: ((k + 1) * n) as u32 };
    Ok(CorrelationReport::from_average(&avg, alpha))
}

/// Largest `n^k` for which [`spectrum_search`] enumerates every form.
pub const SPECTRUM_MAX_BITS: usize = 16;

/// Every k-linear form with `|correlation| ≥ threshold`, sorted by
/// decreasing magnitude. All `2^{n^k}` forms are scored at once by a
/// Walsh–Hadamard transform over coefficient space.
pub fn spectrum_search(f: &PhaseFunction, k: usize, threshold: f64) -> Result<Vec<CorrelationReport>> {
    let n = f.n();
    let bits = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if k == 0 || bits > SPECTRUM_MAX_BITS as u128 {
        return Err(Error::SizeGuard(format!("n^k = {bits} exceeds {SPECTRUM_MAX_BITS}; supply candidates instead")));
    }
    check_budget(k * n, 24)?;
    let bits = bits as usize;
    let w = Work::new(f);
    let h = w.half() as usize;
    // W[c][m] = Σ over tuples a with monomial pattern m of the c-th
    // coordinate of Σ_x ∂^k f.
    let mut table = vec![vec![0i128; 1 << bits]; h];
    let per_tuple = w.fold(
        k,
        Exec::default(),
        Vec::new,
        |acc: &mut Vec<(usize, CycloInt)>, a, t| {
            let mut hist = w.hist_zero();
            w.histogram(t, 0, &mut hist);
            acc.push((monomial_pattern(a, n), CycloInt::from_histogram(w.depth, &hist)));
        },
        |a, b| a.extend(b),
    );
    for (m, s) in per_tuple {
        for (c, &v) in s.coeffs().iter().enumerate() {
            table[c][m] += v;
        }
    }
    for col in &mut table {
        walsh_hadamard(col);
    }
    let log2_count = ((k + 1) * n) as u32;
    let mut out = Vec::new();
    for mask in 0..1usize << bits {
        let mut sum = CycloInt::zero(w.depth);
        for (c, col) in table.iter().enumerate() {
            sum.add_power(c as u32, col[mask]);
        }
        let avg = ExactAverage { sum, log2_count };
        let (z, _) = avg.value();
        if z.norm() >= threshold {
            let support: Vec<Vec<usize>> = (0..bits).filter(|&b| mask >> b & 1 == 1).map(|b| decode_index(b, n, k)).collect();
            let form = MultilinearForm::from_support(n, k, support.iter().map(|v| v.as_slice()))?;
            out.push((mask, CorrelationReport::from_average(&avg, &form)));
        }
    }
    out.sort_by(|(ma, a), (mb, b)| b.abs.total_cmp(&a.abs).then(ma.cmp(mb)));
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

/// Scores a supplied list instead of enumerating.
pub fn spectrum_candidates(f: &PhaseFunction, candidates: &[MultilinearForm], threshold: f64) -> Result<Vec<CorrelationReport>> {
    let mut out = Vec::new();
    for alpha in candidates {
        let r = correlation(f, alpha)?;
        if r.abs >= threshold {
            out.push(r);
        }
    }
    out.sort_by(|a, b| b.abs.total_cmp(&a.abs));
    Ok(out)
}

fn decode_index(mut code: usize, n: usize, k: usize) -> Vec<usize> {
    (0..k)
        .map(|_| {
            let i = code % n;
            code /= n;
            i
        })
        .collect()
}

/// Bit `Σ_t i_t n^t` is set iff `Π_t a_t[i_t] = 1`.
fn monomial_pattern(a: &[u64], n: usize) -> usize {
    let k = a.len();
    let bits = n.pow(k as u32);
    (0..bits).filter(|&b| decode_index(b, n, k).iter().zip(a).all(|(&i, &x)| x >> i & 1 == 1)).fold(0, |m, b| m | 1 << b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowRankReport {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub rank: usize,
    pub bound: f64,
    pub holds: bool,
}

/// Checks `|corr(f, β)| ≥ 2^{−2^{k+1} r} |corr(f, α)|` given an `r`-term
/// certificate for `α ⊕ β`.
pub fn lowrank_replace_check(f: &PhaseFunction, alpha: &MultilinearForm, beta: &MultilinearForm, diff: &PrankCertificate) -> Result<LowRankReport> {
    alpha.expect_shape(beta)?;
    if diff.target != alpha.xor(beta) || !diff.verify() {
        return Err(Error::InvalidCertificate("certificate does not decompose α ⊕ β".into()));
    }
    let ca = correlation(f, alpha)?;
    let cb = if alpha == beta { ca.clone() } else { correlation(f, beta)? };
    let k = alpha.k() as i32;
    let exponent = -(2f64.powi(k + 1)) * diff.len() as f64;
    let bound = 2f64.powf(exponent) * ca.abs;
    let holds = cb.abs + cb.error_bound + ca.error_bound >= bound;
    Ok(LowRankReport { c_alpha: ca.abs, c_beta: cb.abs, rank: diff.len(), bound, holds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProofChoice {
    pub y: u64,
    pub b: Vec<u64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictReport {
    pub c_original: f64,
    pub c_restricted: f64,
    /// The translate `b̃ ∈ W` with `f̃(x) = f(x + b̃)`.
    pub shift: u64,
    pub shifts_tried: usize,
    /// The averaging step's maximizing `(y, b_1..b_k)`, when affordable.
    pub proof_choice: Option<ProofChoice>,
    pub tolerance: f64,
    pub holds: bool,
}

/// A function on `U` (in its coordinates) whose correlation with `α|_U` is
/// at least that of `f` with `α`. Every translate by the complement `W` is
/// scored, which covers the proof's `y + Σ_{i∈I} b_i`.
pub fn subspace_restrict(f: &PhaseFunction, alpha: &MultilinearForm, u: &Subspace) -> Result<(PhaseFunction, RestrictReport)> {
    subspace_restrict_with(f, alpha, u, DEFAULT_BUDGET_LOG2)
}

pub fn subspace_restrict_with(f: &PhaseFunction, alpha: &MultilinearForm, u: &Subspace, budget_log2: u32) -> Result<(PhaseFunction, RestrictReport)> {
    let (n, k) = (alpha.n(), alpha.k());
    if f.n() != n || u.ambient_dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: u.ambient_dim() });
    }
    let codim = u.codim();
    check_budget(codim + (k + 1) * u.dim(), budget_log2)?;
    let base = correlation_with(f, alpha, budget_log2, Exec::default())?;
    let alpha_u = alpha.restrict(u)?;
    let proj = complement_projection(u);
    let w_elems: Vec<u64> = (0..1u64 << codim)
        .map(|c| proj.complement.iter().enumerate().filter(|(i, _)| c >> i & 1 == 1).fold(0u64, |acc, (_, v)| acc ^ v.to_u64()))
        .collect();
    let mut best: Option<(PhaseFunction, CorrelationReport, u64)> = None;
    for &w in &w_elems {
        let g = f.restrict(u, w)?;
        let r = correlation(&g, &alpha_u)?;
        if best.as_ref().map_or(true, |(_, b, _)| r.abs > b.abs) {
            best = Some((g, r, w));
        }
    }
    let (g, r, shift) = best.expect("W is nonempty");
    let proof_choice = if ((k + 1) * n) as u32 <= budget_log2.min(24) { Some(averaging_choice(f, alpha, u, &w_elems)?) } else { None };
    let tolerance = base.error_bound + r.error_bound;
    let holds = r.abs + tolerance >= base.abs;
    let report = RestrictReport { c_original: base.abs, c_restricted: r.abs, shift, shifts_tried: w_elems.len(), proof_choice, tolerance, holds };
    Ok((g, report))
}

/// `max_{y, b ∈ W} |E_{x, a ∈ U} ∂_{a_1+b_1} ⋯ ∂_{a_k+b_k} f(x+y) (−1)^{α(a+b)}|`.
fn averaging_choice(f: &PhaseFunction, alpha: &MultilinearForm, u: &Subspace, w_elems: &[u64]) -> Result<ProofChoice> {
    let k = alpha.k();
    let m = u.dim();
    let u_elems: Vec<u64> = u.elements().map(|v| v.to_u64()).collect();
    let wl = w_elems.len() as u64;
    let work = Work::new(f);
    let combos = wl.pow(k as u32 + 1);
    let scores = par::map_collect(Exec::default(), 0..combos, |c| {
        let mut idx = c;
        let mut pick = || {
            let v = w_elems[(idx % wl) as usize];
            idx /= wl;
            v
        };
        let y = pick();
        let b: Vec<u64> = (0..k).map(|_| pick()).collect();
        let mut hist = work.hist_zero();
        let inner = 1u64 << (m * (k + 1));
        let um = (1u64 << m) - 1;
        for code in 0..inner {
            let x = u_elems[(code & um) as usize] ^ y;
            let a: Vec<u64> = (0..k).map(|i| u_elems[((code >> (m * (i + 1))) & um) as usize] ^ b[i]).collect();
            let mut p = 0u32;
            for s in 0u32..1 << k {
                let pt = (0..k).filter(|&i| s >> i & 1 == 1).fold(x, |acc, i| acc ^ a[i]);
                let v = work.table[pt as usize];
                p = if (k as u32 - s.count_ones()) % 2 == 0 { p.wrapping_add(v) } else { p.wrapping_sub(v) };
            }
            let shift = if alpha.eval_words(&a) { work.half() } else { 0 };
            hist[(p.wrapping_add(shift) & work.mask) as usize] += 1;
        }
        let avg = ExactAverage { sum: CycloInt::from_histogram(work.depth, &hist), log2_count: (m * (k + 1)) as u32 };
        (avg.value().0.norm(), y, b)
    });
    let (value, y, b) = scores.into_iter().fold((f64::NEG_INFINITY, 0, Vec::new()), |best, s| if s.0 > best.0 { s } else { best });
    Ok(ProofChoice { y, b, value })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub c: f64,
    pub bias: Dyadic,
    pub floor: f64,
    /// `c^{2^{k+1}}`, the monotone curve asserted against; absent below the
    /// floor.
    pub threshold: Option<f64>,
    pub holds: Option<bool>,
}

/// Monotone desk-scale curve for the symmetry argument.
pub fn symmetry_threshold(c: f64, k: usize) -> f64 {
    c.powf(2f64.powi(k as i32 + 1))
}

/// Reports `|corr(f, α)|` against `bias(α ⊕ α∘π)`; the comparison is only
/// made when the correlation clears `floor`.
pub fn symmetry_argument_check(f: &PhaseFunction, alpha: &MultilinearForm, pi: &Permutation, floor: f64) -> Result<SymmetryReport> {
    let c = correlation(f, alpha)?.abs;
    let b = bias(&alpha.xor(&alpha.permute(pi)?))?.value();
    let (threshold, holds) = if c >= floor {
        let t = symmetry_threshold(c, alpha.k());
        (Some(t), Some(b.to_f64() >= t))
    } else {
        (None, None)
    };
    Ok(SymmetryReport { c, bias: b, floor, threshold, holds })
}

/// Support of `A + A + A + A` as a bitmap over F_2^n, by two convolutions.
pub fn sumset4(a: &[GF2Vector], n: usize) -> Result<Vec<bool>> {
    if n > 16 {
        return Err(Error::SizeGuard(format!("sumset over F_2^{n}")));
    }
    if let Some(v) = a.iter().find(|v| v.dim() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: v.dim() });
    }
    let mut ind = vec![0i128; 1 << n];
    for v in a {
        ind[v.to_u64() as usize] = 1;
    }
    let double = |ind: &[i128]| -> Vec<i128> {
        let mut t = ind.to_vec();
        walsh_hadamard(&mut t);
        for x in &mut t {
            *x *= *x;
        }
        walsh_hadamard(&mut t);
        t.iter().map(|&c| (c != 0) as i128).collect()
    };
    Ok(double(&double(&ind)).into_iter().map(|c| c != 0).collect())
}

/// Whether every element of `V` lies in `4A`.
pub fn sumset4_verify(a: &[GF2Vector], v: &Subspace) -> Result<bool> {
    let s = sumset4(a, v.ambient_dim())?;
    Ok(v.elements().all(|x| s[x.to_u64() as usize]))
}
