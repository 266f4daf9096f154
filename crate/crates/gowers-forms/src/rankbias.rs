//! Bias, analytic rank, partition-rank certificates and exact oracles,
//! the rank-proxy policy, quadratic varieties and restriction across
//! subspaces.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::forms::MultilinearForm;
use crate::gf2::{rref, GF2Matrix, GF2Vector, ProjectionData};
use crate::par::{self, Exec};

/// Default cap on `2^{(k-1)n}` contractions for [`bias`].
pub const DEFAULT_BIAS_BUDGET: u64 = 1 << 26;

/// `E_x (-1)^{f(x)}` as an exact dyadic rational.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bias(pub Dyadic);

impl Bias {
    pub fn value(self) -> Dyadic {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64()
    }

    /// `bias ≥ 2^{-t}`.
    pub fn at_least_pow2_neg(self, t: u32) -> bool {
        self.0 >= Dyadic::pow2_neg(t)
    }
}

impl fmt::Debug for Bias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bias({})", self.0)
    }
}

pub fn bias(f: &MultilinearForm) -> Result<Bias> {
    bias_with(f, Exec::Parallel, DEFAULT_BIAS_BUDGET)
}

/// Counts the tuples `x_1..x_{k-1}` whose contraction leaves the zero linear
/// form in the last slot; the bias is that count over `2^{(k-1)n}`.
pub fn bias_with(f: &MultilinearForm, exec: Exec, budget: u64) -> Result<Bias> {
    let (n, k) = (f.n(), f.k());
    if n == 0 {
        return Ok(Bias(Dyadic::ONE));
    }
    if k == 1 {
        return Ok(Bias(if f.is_zero() { Dyadic::ONE } else { Dyadic::ZERO }));
    }
    let levels = k - 1;
    let bits = levels * n;
    if bits >= 62 || (1u64 << bits) > budget {
        return Err(Error::BudgetExceeded { needed: 1u128 << bits.min(127), budget: budget as u128 });
    }
    // Fan out over enough leading variables to give the pool work.
    let split = (1..=levels).find(|&t| t * n >= 8).unwrap_or(levels);
    let fibers = f.fibers();
    let count = par::sum_i128(exec, 0..(1u64 << (split * n)), |idx| {
        let mut cur = fibers.to_vec();
        for level in 0..split {
            let x = (idx >> (level * n)) & ((1u64 << n) - 1);
            cur = contract(&cur, n, x);
        }
        gray_count(&cur, n, levels - split)
    });
    Ok(Bias(Dyadic::new(count as i64, bits as u32)))
}

fn contract(cur: &[u64], n: usize, x: u64) -> Vec<u64> {
    let block = cur.len() / n;
    let mut out = vec![0u64; block];
    let mut bits = x;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        for (d, s) in out.iter_mut().zip(&cur[i * block..(i + 1) * block]) {
            *d ^= s;
        }
    }
    out
}

/// Number of `(x_1..x_levels)` contracting `cur` to the zero fiber, walking
/// each variable in Gray-code order.
fn gray_count(cur: &[u64], n: usize, levels: usize) -> i128 {
    if levels == 0 {
        return i128::from(cur[0] == 0);
    }
    if levels == 1 {
        let mut acc = 0u64;
        let mut total = i128::from(acc == 0);
        for t in 1..(1u64 << n) {
            acc ^= cur[t.trailing_zeros() as usize];
            total += i128::from(acc == 0);
        }
        return total;
    }
    let block = cur.len() / n;
    let mut acc = vec![0u64; block];
    let mut total = gray_count(&acc, n, levels - 1);
    for t in 1..(1u64 << n) {
        let i = t.trailing_zeros() as usize;
        for (d, s) in acc.iter_mut().zip(&cur[i * block..(i + 1) * block]) {
            *d ^= s;
        }
        total += gray_count(&acc, n, levels - 1);
    }
    total
}

/// `-log_2 bias`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Arank {
    Exact(u32),
    /// Strictly between the bounds.
    Bracket { lower: u32, upper: u32, approx: f64 },
    /// Bias zero: only nonzero linear forms.
    Infinite,
}

impl Arank {
    pub fn to_f64(self) -> f64 {
        match self {
            Arank::Exact(v) => v as f64,
            Arank::Bracket { approx, .. } => approx,
            Arank::Infinite => f64::INFINITY,
        }
    }
}

pub fn arank_of(b: Bias) -> Arank {
    let d = b.value();
    assert!(d.num >= 0, "bias of a multilinear form is nonnegative");
    if d.num == 0 {
        return Arank::Infinite;
    }
    let l = d.log2_den;
    let m = d.num as u64;
    if m == 1 {
        return Arank::Exact(l);
    }
    let fl = 63 - m.leading_zeros();
    Arank::Bracket { lower: l - fl - 1, upper: l - fl, approx: l as f64 - (m as f64).log2() }
}

pub fn arank(f: &MultilinearForm) -> Result<Arank> {
    Ok(arank_of(bias(f)?))
}

/// `⌈arank⌉`, a lower bound for the partition rank.
pub fn prank_lower_bound(f: &MultilinearForm) -> Result<usize> {
    Ok(match arank(f)? {
        Arank::Exact(v) => v as usize,
        Arank::Bracket { upper, .. } => upper as usize,
        Arank::Infinite => 1,
    })
}

/// Where a certificate factor came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Free,
    /// The form equals `form_id` with the listed slots fixed, its remaining
    /// slots in increasing order.
    SliceOf { form_id: String, assignment: Vec<(usize, GF2Vector)> },
}

/// A factor `form(x_vars)` of a product.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub form: MultilinearForm,
    pub provenance: Provenance,
}

impl Factor {
    pub fn new(vars: Vec<usize>, form: MultilinearForm) -> Self {
        Self { vars, form, provenance: Provenance::Free }
    }

    pub fn with_provenance(vars: Vec<usize>, form: MultilinearForm, provenance: Provenance) -> Self {
        Self { vars, form, provenance }
    }

    pub fn eval_words(&self, x: &[u64]) -> bool {
        let args: Vec<u64> = self.vars.iter().map(|&v| x[v]).collect();
        self.form.eval_words(&args)
    }

    /// Whether a `SliceOf` tag re-evaluates to this factor.
    pub fn provenance_holds(&self, source: &MultilinearForm) -> bool {
        match &self.provenance {
            Provenance::Free => true,
            Provenance::SliceOf { assignment, .. } => source.slice(assignment).is_ok_and(|s| s == self.form),
        }
    }
}

/// A product of factors on disjoint variable sets.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn new(factors: Vec<Factor>) -> Self {
        let mut factors = factors;
        factors.sort_by(|a, b| a.vars.cmp(&b.vars));
        Self { factors }
    }

    /// Blocks of the term's partition, each sorted.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        self.factors.iter().map(|f| f.vars.clone()).collect()
    }

    pub fn eval_words(&self, x: &[u64]) -> bool {
        self.factors.iter().all(|f| f.eval_words(x))
    }

    pub fn xor_into(&self, out: &mut MultilinearForm) -> Result<()> {
        let fs: Vec<(&[usize], &MultilinearForm)> =
            self.factors.iter().map(|f| (f.vars.as_slice(), &f.form)).collect();
        out.xor_product(&fs)
    }

    pub fn expand(&self, n: usize, k: usize) -> Result<MultilinearForm> {
        let mut out = MultilinearForm::zero(n, k)?;
        self.xor_into(&mut out)?;
        Ok(out)
    }

    /// Structural check against arity k: at least two factors whose variable
    /// sets partition the slots.
    pub fn check_structure(&self, n: usize, k: usize) -> Result<()> {
        if self.factors.len() < 2 {
            return Err(Error::InvalidCertificate("a product needs at least two factors".into()));
        }
        let mut seen = vec![false; k];
        for f in &self.factors {
            if f.vars.is_empty() || f.vars.len() != f.form.k() || f.form.n() != n {
                return Err(Error::InvalidCertificate(format!("malformed factor on {:?}", f.vars)));
            }
            if f.vars.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidCertificate(format!("unsorted variable set {:?}", f.vars)));
            }
            for &v in &f.vars {
                if v >= k || std::mem::replace(&mut seen[v], true) {
                    return Err(Error::InvalidCertificate(format!("variable {v} reused or out of range")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidCertificate("factors do not cover every variable".into()));
        }
        Ok(())
    }
}

pub fn expand_terms(n: usize, k: usize, terms: &[Term]) -> Result<MultilinearForm> {
    let mut out = MultilinearForm::zero(n, k)?;
    for t in terms {
        t.xor_into(&mut out)?;
    }
    Ok(out)
}

/// A decomposition `target = Σ_terms Π factors` witnessing `prank ≤ len`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrankCertificate {
    pub target_id: String,
    pub target: MultilinearForm,
    pub terms: Vec<Term>,
    pub provenance: String,
}

/// Why a certificate fails to verify.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CertificateMismatch {
    Structure(String),
    /// First coefficient (lexicographic) where expansion and target differ.
    Coefficient(Vec<usize>),
}

impl PrankCertificate {
    pub fn new(target_id: impl Into<String>, target: MultilinearForm, terms: Vec<Term>, provenance: impl Into<String>) -> Self {
        Self { target_id: target_id.into(), target, terms, provenance: provenance.into() }
    }

    pub fn empty(target_id: impl Into<String>, target: MultilinearForm) -> Self {
        Self::new(target_id, target, Vec::new(), "empty")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n(&self) -> usize {
        self.target.n()
    }

    pub fn k(&self) -> usize {
        self.target.k()
    }

    pub fn expand(&self) -> Result<MultilinearForm> {
        expand_terms(self.n(), self.k(), &self.terms)
    }

    pub fn check(&self) -> std::result::Result<(), CertificateMismatch> {
        for t in &self.terms {
            t.check_structure(self.n(), self.k()).map_err(|e| CertificateMismatch::Structure(e.to_string()))?;
        }
        let e = self.expand().map_err(|e| CertificateMismatch::Structure(e.to_string()))?;
        match e.xor(&self.target).support().into_iter().next() {
            None => Ok(()),
            Some(idx) => Err(CertificateMismatch::Coefficient(idx)),
        }
    }

    pub fn verify(&self) -> bool {
        self.check().is_ok()
    }

    /// Every `SliceOf` factor naming `source_id` re-evaluates against `source`.
    pub fn provenance_holds(&self, source_id: &str, source: &MultilinearForm) -> bool {
        self.terms.iter().flat_map(|t| &t.factors).all(|f| match &f.provenance {
            Provenance::SliceOf { form_id, .. } if form_id == source_id => f.provenance_holds(source),
            _ => true,
        })
    }

    /// Certificate for `a ⊕ b` from certificates for a and b.
    pub fn concat(&self, other: &Self, target_id: impl Into<String>) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::new(target_id, self.target.xor(&other.target), terms, "concat")
    }

    /// Certificate for `target ∘ p`.
    pub fn permuted(&self, p: &crate::forms::Permutation, target_id: impl Into<String>) -> Result<Self> {
        let terms = self.terms.iter().map(|t| permute_term(t, p)).collect::<Result<Vec<_>>>()?;
        Ok(Self::new(target_id, self.target.permute(p)?, terms, format!("permuted {:?}", p.image())))
    }
}

/// `(Π β_f(x_{I_f})) ∘ p`: the factor on `I` moves to `p^{-1}(I)`.
pub fn permute_term(t: &Term, p: &crate::forms::Permutation) -> Result<Term> {
    // (f ∘ p)(x) = f(p(x)), and p(x)_v = x_{p^{-1}(v)}.
    let inv = p.inverse();
    let factors = t
        .factors
        .iter()
        .map(|f| {
            let new_vars: Vec<usize> = f.vars.iter().map(|&v| inv.at(v)).collect();
            let mut order: Vec<usize> = (0..new_vars.len()).collect();
            order.sort_by_key(|&t| new_vars[t]);
            let sorted: Vec<usize> = order.iter().map(|&t| new_vars[t]).collect();
            // Factor slot order[t'] receives sorted position t'.
            let mut image = vec![0; order.len()];
            for (pos, &t) in order.iter().enumerate() {
                image[pos] = t;
            }
            let q = crate::forms::Permutation::new(image)?;
            let form = f.form.permute(&q)?;
            let provenance = if q.is_identity() { f.provenance.clone() } else { Provenance::Free };
            Ok(Factor::with_provenance(sorted, form, provenance))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Term::new(factors))
}

/// Lower bound, upper bound and (when known) exact partition rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankBounds {
    pub lower: usize,
    pub upper: usize,
    pub exact: Option<usize>,
}

pub fn rank_bounds(f: &MultilinearForm) -> Result<RankBounds> {
    let lower = prank_lower_bound(f)?;
    let cert = best_certificate(f, "f")?;
    let exact = if f.k() == 2 || (f.n() == 2 && f.k() <= 4) || f.is_zero() { Some(cert.len()) } else { None };
    Ok(RankBounds { lower, upper: cert.len(), exact })
}

/// Matrix rank of a bilinear form, with the factorization `M = M[:,P]·R`.
pub fn prank_exact_bilinear(f: &MultilinearForm) -> Result<(usize, PrankCertificate)> {
    f.expect_arity(2)?;
    let n = f.n();
    let m = f.to_matrix()?;
    let red = rref(&m);
    let terms = red
        .pivots
        .iter()
        .enumerate()
        .map(|(t, &p)| {
            let beta = MultilinearForm::linear(&m.column(p))?;
            let gamma = MultilinearForm::linear(red.basis.row(t))?;
            Ok(Term::new(vec![Factor::new(vec![0], beta), Factor::new(vec![1], gamma)]))
        })
        .collect::<Result<Vec<_>>>()?;
    let _ = n;
    let cert = PrankCertificate::new("f", f.clone(), terms, "bilinear-rref");
    debug_assert!(cert.verify());
    Ok((red.rank, cert))
}

struct TinyProduct {
    mask: u64,
    block: Vec<usize>,
    left: MultilinearForm,
    right: MultilinearForm,
}

struct TinyTable {
    products: Vec<TinyProduct>,
    dist: Vec<u8>,
    parent: Vec<u16>,
}

fn tiny_mask(f: &MultilinearForm) -> u64 {
    f.fibers().iter().enumerate().fold(0u64, |acc, (p, &w)| acc | (w << (2 * p)))
}

fn tiny_form(k: usize, mask: u64) -> MultilinearForm {
    let mut f = MultilinearForm::zero(2, k).expect("tiny shape");
    for flat in 0..(1usize << k) {
        if (mask >> flat) & 1 == 1 {
            let idx: Vec<usize> = (0..k).map(|a| (flat >> (k - 1 - a)) & 1).collect();
            f.set_coeff(&idx, true);
        }
    }
    f
}

fn tiny_table(k: usize) -> &'static TinyTable {
    static TABLES: [OnceLock<TinyTable>; 5] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    TABLES[k].get_or_init(|| build_tiny_table(k))
}

fn build_tiny_table(k: usize) -> TinyTable {
    let mut products = Vec::new();
    let mut seen = HashMap::new();
    // Blocks containing slot 0; the complement carries the other factor.
    for bmask in 1u32..(1 << k) {
        if bmask & 1 == 0 || bmask == (1 << k) - 1 {
            continue;
        }
        let block: Vec<usize> = (0..k).filter(|&v| bmask >> v & 1 == 1).collect();
        let rest: Vec<usize> = (0..k).filter(|&v| bmask >> v & 1 == 0).collect();
        let (a, b) = (block.len(), rest.len());
        for lm in 1u64..(1 << (1 << a)) {
            let left = tiny_form(a, lm);
            for rm in 1u64..(1 << (1 << b)) {
                let right = tiny_form(b, rm);
                let prod = MultilinearForm::product(2, k, &[(&block, &left), (&rest, &right)]).expect("partition");
                let mask = tiny_mask(&prod);
                if seen.insert(mask, ()).is_none() {
                    products.push(TinyProduct { mask, block: block.clone(), left: left.clone(), right });
                }
            }
        }
    }
    let states = 1usize << (1 << k);
    let mut dist = vec![u8::MAX; states];
    let mut parent = vec![u16::MAX; states];
    dist[0] = 0;
    let mut frontier = vec![0u64];
    let mut d = 0u8;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &s in &frontier {
            for (pi, p) in products.iter().enumerate() {
                let t = (s ^ p.mask) as usize;
                if dist[t] == u8::MAX {
                    dist[t] = d + 1;
                    parent[t] = pi as u16;
                    next.push(t as u64);
                }
            }
        }
        frontier = next;
        d += 1;
    }
    TinyTable { products, dist, parent }
}

/// Exact partition rank at `n = 2`, `2 ≤ k ≤ 4`, by breadth-first closure
/// under adding products; the certificate is read back from parent links.
pub fn prank_exact_tiny(f: &MultilinearForm) -> Result<(usize, PrankCertificate)> {
    if f.n() != 2 || !(2..=4).contains(&f.k()) {
        return Err(Error::SizeGuard(format!("tiny oracle needs n = 2, 2 ≤ k ≤ 4 (got n = {}, k = {})", f.n(), f.k())));
    }
    let k = f.k();
    let table = tiny_table(k);
    let mut state = tiny_mask(f);
    let rank = table.dist[state as usize] as usize;
    let mut terms = Vec::with_capacity(rank);
    while state != 0 {
        let p = &table.products[table.parent[state as usize] as usize];
        let rest: Vec<usize> = (0..k).filter(|v| !p.block.contains(v)).collect();
        terms.push(Term::new(vec![Factor::new(p.block.clone(), p.left.clone()), Factor::new(rest, p.right.clone())]));
        state ^= p.mask;
    }
    let cert = PrankCertificate::new("f", f.clone(), terms, "tiny-bfs");
    debug_assert!(cert.verify());
    Ok((rank, cert))
}

/// Number of distinct nonzero products used by the tiny oracle.
pub fn tiny_product_count(k: usize) -> usize {
    tiny_table(k).products.len()
}

/// The smallest certificate this crate can produce for `f`: exact for
/// bilinear forms and the tiny domain, otherwise the coordinate expansion
/// of the first variable.
pub fn best_certificate(f: &MultilinearForm, target_id: &str) -> Result<PrankCertificate> {
    let mut cert = if f.is_zero() {
        PrankCertificate::empty(target_id, f.clone())
    } else if f.k() == 2 {
        prank_exact_bilinear(f)?.1
    } else if f.n() == 2 && f.k() <= 4 {
        prank_exact_tiny(f)?.1
    } else if f.k() == 1 {
        return Err(Error::Invalid("a nonzero linear form has no product decomposition".into()));
    } else {
        coordinate_certificate(f, target_id)?
    };
    cert.target_id = target_id.to_string();
    Ok(cert)
}

/// `f = Σ_i x_{1,i} f(e_i, x_2, …)`, at most n terms.
pub fn coordinate_certificate(f: &MultilinearForm, target_id: &str) -> Result<PrankCertificate> {
    let (n, k) = (f.n(), f.k());
    let mut terms = Vec::new();
    for i in 0..n {
        let e = GF2Vector::unit(n, i);
        let assignment = vec![(0, e.clone())];
        let rest = f.slice(&assignment)?;
        if rest.is_zero() {
            continue;
        }
        let prov = Provenance::SliceOf { form_id: target_id.to_string(), assignment };
        terms.push(Term::new(vec![
            Factor::new(vec![0], MultilinearForm::linear(&e)?),
            Factor::with_provenance((1..k).collect(), rest, prov),
        ]));
    }
    Ok(PrankCertificate::new(target_id, f.clone(), terms, "coordinate-slices"))
}

/// A random decomposition with `r` terms, each over a random two-block
/// partition, together with its expansion.
pub fn random_certificate(n: usize, k: usize, r: usize, rng: &mut impl Rng) -> Result<PrankCertificate> {
    if k < 2 {
        return Err(Error::Invalid("products need arity at least 2".into()));
    }
    let mut terms = Vec::with_capacity(r);
    for _ in 0..r {
        let mask = loop {
            let m: u32 = rng.gen_range(1..(1 << k) - 1);
            if m & 1 == 1 {
                break m;
            }
        };
        let a: Vec<usize> = (0..k).filter(|&v| mask >> v & 1 == 1).collect();
        let b: Vec<usize> = (0..k).filter(|&v| mask >> v & 1 == 0).collect();
        let fa = MultilinearForm::random(n, a.len(), rng)?;
        let fb = MultilinearForm::random(n, b.len(), rng)?;
        terms.push(Term::new(vec![Factor::new(a, fa), Factor::new(b, fb)]));
    }
    let target = expand_terms(n, k, &terms)?;
    Ok(PrankCertificate::new("random", target, terms, "random"))
}

/// How "low partition rank" is decided inside iterative proofs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProxyMode {
    ExactBilinear,
    /// Bias at least `2^{-t}` counts as low rank.
    BiasThreshold(u32),
    ExhaustiveTiny,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankProxyPolicy {
    pub mode: ProxyMode,
    /// Largest partition rank treated as "low".
    pub cap: usize,
    /// Witness-search trials and bias evaluation budget.
    pub budget: u64,
    pub seed: u64,
}

impl Default for RankProxyPolicy {
    fn default() -> Self {
        Self { mode: ProxyMode::ExactBilinear, cap: 0, budget: 1 << 20, seed: 0 }
    }
}

/// A logged low-rank decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub low: bool,
    pub method: String,
    #[serde(skip)]
    pub certificate: Option<PrankCertificate>,
}

impl RankProxyPolicy {
    pub fn with_budget(budget: u64) -> Self {
        Self { budget, ..Self::default() }
    }

    /// First applicable of: zero, exact bilinear, exact tiny, bias threshold.
    pub fn decide(&self, f: &MultilinearForm, id: &str) -> Result<Decision> {
        if f.is_zero() {
            return Ok(Decision { low: true, method: "zero".into(), certificate: Some(PrankCertificate::empty(id, f.clone())) });
        }
        if f.k() == 1 {
            return Ok(Decision { low: false, method: "nonzero-linear".into(), certificate: None });
        }
        if f.k() == 2 {
            let (r, mut c) = prank_exact_bilinear(f)?;
            c.target_id = id.into();
            let low = r <= self.cap;
            return Ok(Decision { low, method: format!("exact-bilinear rank {r}"), certificate: low.then_some(c) });
        }
        if f.n() == 2 && f.k() <= 4 {
            let (r, mut c) = prank_exact_tiny(f)?;
            c.target_id = id.into();
            let low = r <= self.cap;
            return Ok(Decision { low, method: format!("exact-tiny prank {r}"), certificate: low.then_some(c) });
        }
        let t = match self.mode {
            ProxyMode::BiasThreshold(t) => t,
            _ => self.cap as u32,
        };
        let b = bias_with(f, Exec::Parallel, self.budget.max(DEFAULT_BIAS_BUDGET))?;
        let low = b.at_least_pow2_neg(t);
        Ok(Decision { low, method: format!("bias {} vs 2^-{t}", b.value()), certificate: None })
    }
}

/// `|{u : ρ_i(u,u) = 0 ∀i}| / |U|`, with each ρ_i given in U-coordinates.
pub fn quadratic_variety_fraction(rhos: &[MultilinearForm]) -> Result<Dyadic> {
    let Some(first) = rhos.first() else {
        return Ok(Dyadic::ONE);
    };
    let d = first.n();
    for r in rhos {
        r.expect_arity(2)?;
        if r.n() != d {
            return Err(Error::DimensionMismatch { expected: d, found: r.n() });
        }
    }
    if d >= 40 {
        return Err(Error::BudgetExceeded { needed: 1u128 << d, budget: 1 << 40 });
    }
    let count = par::sum_i128(Exec::Parallel, 0..(1u64 << d), |u| i128::from(rhos.iter().all(|r| !r.eval_words(&[u, u]))));
    Ok(Dyadic::new(count as i64, d as u32))
}

/// Every nonzero combination `Σ λ_i (ρ_i + ρ_i∘(1 2))` has matrix rank at
/// least `k + 1`, where k = |rhos|.
pub fn quadratic_rank_hypothesis(rhos: &[MultilinearForm]) -> Result<bool> {
    let s = rhos.len();
    if s >= 24 {
        return Err(Error::BudgetExceeded { needed: 1u128 << s, budget: 1 << 24 });
    }
    let sym: Vec<MultilinearForm> = rhos.iter().map(|r| r.xor(&r.swap(0, 1))).collect();
    for mask in 1u32..(1 << s) {
        let mut c = MultilinearForm::zero(sym[0].n(), 2)?;
        for (i, f) in sym.iter().enumerate() {
            if mask >> i & 1 == 1 {
                c.xor_assign(f);
            }
        }
        if c.to_matrix()?.rank() < s + 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn projection_matrix(p: &ProjectionData) -> GF2Matrix {
    let n = p.subspace.ambient_dim();
    let mut m = GF2Matrix::zeros(n, n);
    for (b, piv) in p.subspace.basis().iter().zip(p.subspace.pivots()) {
        for r in b.ones() {
            m.set(r, piv, true);
        }
    }
    m
}

/// `f(x) = f(π x_1, …, π x_k) ⊕ Σ_c Σ_i φ_i(x_c) f(πx_1, …, πx_{c-1}, w_i, x_{c+1}, …, x_k)`.
/// Returns the certificate for `f ⊕ residual` (at most k·d terms) and the
/// residual.
pub fn projection_decomposition(f: &MultilinearForm, p: &ProjectionData) -> Result<(PrankCertificate, MultilinearForm)> {
    let (n, k) = (f.n(), f.k());
    if p.subspace.ambient_dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.subspace.ambient_dim() });
    }
    if k < 2 {
        return Err(Error::Invalid("projection decomposition needs arity at least 2".into()));
    }
    let pi = projection_matrix(p);
    let id = GF2Matrix::identity(n);
    let mut terms = Vec::new();
    for c in 0..k {
        for (w, phi) in p.complement.iter().zip(&p.functionals) {
            let sliced = f.slice(&[(c, w.clone())])?;
            let maps: Vec<GF2Matrix> = (0..k - 1).map(|t| if t < c { pi.clone() } else { id.clone() }).collect();
            let g = sliced.substitute(&maps)?;
            if g.is_zero() {
                continue;
            }
            let rest: Vec<usize> = (0..k).filter(|&v| v != c).collect();
            terms.push(Term::new(vec![Factor::new(vec![c], MultilinearForm::linear(phi)?), Factor::new(rest, g)]));
        }
    }
    let residual = f.substitute(&vec![pi; k])?;
    let cert = PrankCertificate::new("f+residual", f.xor(&residual), terms, "projection");
    Ok((cert, residual))
}

/// `σ̃(x) = σ(π x_1, …, π x_k)` for σ given in U-coordinates.
pub fn extend_form_via_projection(g: &MultilinearForm, p: &ProjectionData) -> Result<MultilinearForm> {
    MultilinearForm::extend_from(g, &p.subspace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::VariableSet;
    use crate::gf2::{complement_projection, Subspace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_bias(f: &MultilinearForm) -> Dyadic {
        let (n, k) = (f.n(), f.k());
        let total = 1u64 << (n * k);
        let mask = (1u64 << n) - 1;
        let s: i64 = (0..total)
            .map(|b| {
                let x: Vec<u64> = (0..k).map(|a| (b >> (a * n)) & mask).collect();
                if f.eval_words(&x) { -1 } else { 1 }
            })
            .sum();
        Dyadic::new(s, (n * k) as u32)
    }

    #[test]
    fn bias_trivial_cases() {
        assert_eq!(bias(&MultilinearForm::zero(3, 3).unwrap()).unwrap().value(), Dyadic::ONE);
        for n in 1..6 {
            let b = bias(&MultilinearForm::dot(n).unwrap()).unwrap();
            assert_eq!(b.value(), Dyadic::pow2_neg(n as u32));
            assert_eq!(arank_of(b), Arank::Exact(n as u32));
        }
    }

    #[test]
    fn bias_fast_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let f = MultilinearForm::random(3, 3, &mut rng).unwrap();
            let fast = bias(&f).unwrap().value();
            assert_eq!(fast, naive_bias(&f));
            assert_eq!(fast, bias_with(&f, Exec::Sequential, DEFAULT_BIAS_BUDGET).unwrap().value());
            assert!(fast > Dyadic::ZERO);
        }
    }

    #[test]
    fn bias_budget() {
        let f = MultilinearForm::zero(10, 4).unwrap();
        assert!(matches!(bias_with(&f, Exec::Sequential, 1 << 20), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn certificate_basics() {
        let z = MultilinearForm::zero(3, 2).unwrap();
        assert!(PrankCertificate::empty("z", z).verify());
        let b = MultilinearForm::linear(&GF2Vector::from_u64(3, 0b101)).unwrap();
        let g = MultilinearForm::linear(&GF2Vector::from_u64(3, 0b011)).unwrap();
        let mut target = MultilinearForm::zero(3, 2).unwrap();
        for i in [0, 2] {
            for j in [0, 1] {
                target.set_coeff(&[i, j], true);
            }
        }
        let t = Term::new(vec![Factor::new(vec![0], b), Factor::new(vec![1], g)]);
        let c = PrankCertificate::new("t", target.clone(), vec![t.clone()], "manual");
        assert!(c.verify());
        let mut wrong = target;
        wrong.flip_coeff(&[1, 1]);
        let c = PrankCertificate::new("t", wrong, vec![t], "manual");
        assert_eq!(c.check(), Err(CertificateMismatch::Coefficient(vec![1, 1])));
    }

    #[test]
    fn random_certificates_verify_and_bound_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let k = rng.gen_range(2..=4);
            let n = rng.gen_range(1..=3);
            let r = rng.gen_range(0..=3);
            let c = random_certificate(n, k, r, &mut rng).unwrap();
            assert!(c.verify());
            assert!(bias(&c.target).unwrap().at_least_pow2_neg(r as u32));
            assert!(prank_lower_bound(&c.target).unwrap() <= r);
        }
    }

    #[test]
    fn bilinear_rank() {
        assert_eq!(prank_exact_bilinear(&MultilinearForm::zero(3, 2).unwrap()).unwrap().0, 0);
        let (r, c) = prank_exact_bilinear(&MultilinearForm::dot(5).unwrap()).unwrap();
        assert_eq!(r, 5);
        assert!(c.verify());
        assert_eq!(prank_lower_bound(&MultilinearForm::dot(5).unwrap()).unwrap(), 5);
    }

    #[test]
    fn bilinear_rank_matches_decomposition_search() {
        // Minimal number of rank-one matrices summing to M, by BFS over 2^9.
        let rank_one: Vec<u16> = (1u16..8)
            .flat_map(|a| (1u16..8).map(move |b| {
                let mut m = 0u16;
                for i in 0..3 {
                    if a >> i & 1 == 1 {
                        m |= b << (3 * i);
                    }
                }
                m
            }))
            .collect();
        let mut dist = vec![u8::MAX; 512];
        dist[0] = 0;
        let mut frontier = vec![0u16];
        let mut d = 0;
        while !frontier.is_empty() {
            let mut next = vec![];
            for &s in &frontier {
                for &p in &rank_one {
                    let t = (s ^ p) as usize;
                    if dist[t] == u8::MAX {
                        dist[t] = d + 1;
                        next.push(t as u16);
                    }
                }
            }
            frontier = next;
            d += 1;
        }
        for m in 0u16..512 {
            let mut f = MultilinearForm::zero(3, 2).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if m >> (3 * i + j) & 1 == 1 {
                        f.set_coeff(&[i, j], true);
                    }
                }
            }
            assert_eq!(prank_exact_bilinear(&f).unwrap().0, dist[m as usize] as usize);
        }
    }

    #[test]
    fn tiny_oracle() {
        assert_eq!(prank_exact_tiny(&MultilinearForm::zero(2, 3).unwrap()).unwrap().0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let c = random_certificate(2, 3, 1, &mut rng).unwrap();
        if !c.target.is_zero() {
            assert_eq!(prank_exact_tiny(&c.target).unwrap().0, 1);
        }
        for m in 0u64..16 {
            let f = tiny_form(2, m);
            let (r, cert) = prank_exact_tiny(&f).unwrap();
            assert!(cert.verify());
            assert_eq!(r, prank_exact_bilinear(&f).unwrap().0);
        }
        assert!(prank_exact_tiny(&MultilinearForm::zero(3, 3).unwrap()).is_err());
    }

    #[test]
    fn tiny_trilinear_classification() {
        let mut hist = [0usize; 8];
        let ranks: Vec<usize> = (0u64..256).map(|m| prank_exact_tiny(&tiny_form(3, m)).unwrap().0).collect();
        for m in 0u64..256 {
            let (r, cert) = prank_exact_tiny(&tiny_form(3, m)).unwrap();
            assert!(cert.verify());
            assert_eq!(cert.len(), r);
            hist[r] += 1;
        }
        for a in (0u64..256).step_by(7) {
            for b in (0u64..256).step_by(11) {
                assert!(ranks[(a ^ b) as usize] <= ranks[a as usize] + ranks[b as usize]);
            }
        }
        assert_eq!(hist.iter().sum::<usize>(), 256);
        assert_eq!(hist[0], 1);
    }

    #[test]
    fn quadratic_fraction_trivial() {
        assert_eq!(quadratic_variety_fraction(&[]).unwrap(), Dyadic::ONE);
        let mut alt = MultilinearForm::zero(4, 2).unwrap();
        alt.set_coeff(&[0, 1], true);
        alt.set_coeff(&[1, 0], true);
        assert_eq!(quadratic_variety_fraction(&[alt]).unwrap(), Dyadic::ONE);
    }

    #[test]
    fn projection_decomposition_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = MultilinearForm::random(3, 2, &mut rng).unwrap();
        let (c, res) = projection_decomposition(&f, &complement_projection(&Subspace::whole(3))).unwrap();
        assert!(c.is_empty());
        assert_eq!(res, f);
        let u = Subspace::kernel_of(3, &[GF2Vector::from_u64(3, 0b110)]).unwrap();
        let p = complement_projection(&u);
        let (c, res) = projection_decomposition(&f, &p).unwrap();
        assert!(c.len() <= 2);
        assert!(c.verify());
        assert_eq!(c.expand().unwrap().xor(&res), f);
    }

    #[test]
    fn extension_preserves_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let fs: Vec<_> = (0..2).map(|_| GF2Vector::from_u64(5, rng.gen())).collect();
        let u = Subspace::kernel_of(5, &fs).unwrap();
        let p = complement_projection(&u);
        let g = MultilinearForm::random(u.dim(), 3, &mut rng).unwrap().symmetrized(&VariableSet::prefix(3));
        let e = extend_form_via_projection(&g, &p).unwrap();
        assert!(e.is_symmetric_prefix(3));
        assert_eq!(e.restrict(&u).unwrap(), g);
        let z = MultilinearForm::zero(u.dim(), 2).unwrap();
        assert!(extend_form_via_projection(&z, &p).unwrap().is_zero());
    }
}
