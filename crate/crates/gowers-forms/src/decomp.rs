//! Partitions of index sets, down-sets, and constructive operations on
//! decompositions: point finding, coefficient extraction, change of basis
//! and rewriting a decomposition so that every factor is a slice.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::MultilinearForm;
use crate::gf2::{rref, GF2Matrix, GF2Vector};
use crate::par::{self, Exec};
use crate::rankbias::{bias, expand_terms, Factor, PrankCertificate, Provenance, RankProxyPolicy, Term};

/// A partition of `0..k` into nonempty blocks, stored canonically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    k: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(k: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        blocks.sort();
        let mut seen = vec![false; k];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::Invalid("empty block".into()));
            }
            for &v in b {
                if v >= k || std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Invalid(format!("blocks {blocks:?} do not partition 0..{k}")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Invalid(format!("blocks {blocks:?} do not cover 0..{k}")));
        }
        Ok(Self { k, blocks })
    }

    pub fn of_term(k: usize, t: &Term) -> Result<Self> {
        Self::new(k, t.blocks())
    }

    pub fn singletons(k: usize) -> Self {
        Self { k, blocks: (0..k).map(|v| vec![v]).collect() }
    }

    pub fn trivial(k: usize) -> Self {
        Self { k, blocks: vec![(0..k).collect()] }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn arity(&self) -> usize {
        self.k
    }

    /// `self ≤ other`: every block of `other` is a union of blocks of `self`.
    pub fn refines(&self, other: &Self) -> bool {
        self.k == other.k && self.blocks.iter().all(|a| other.blocks.iter().any(|b| a.iter().all(|v| b.contains(v))))
    }

    /// Every partition of `0..k`.
    pub fn all(k: usize) -> Vec<Self> {
        fn rec(v: usize, k: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Partition>) {
            if v == k {
                out.push(Partition::new(k, cur.clone()).expect("valid by construction"));
                return;
            }
            for i in 0..cur.len() {
                cur[i].push(v);
                rec(v + 1, k, cur, out);
                cur[i].pop();
            }
            cur.push(vec![v]);
            rec(v + 1, k, cur, out);
            cur.pop();
        }
        let mut out = Vec::new();
        rec(0, k, &mut Vec::new(), &mut out);
        out.sort();
        out
    }
}

/// A set of partitions closed under refinement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownSet {
    k: usize,
    members: BTreeSet<Partition>,
}

impl DownSet {
    pub fn empty(k: usize) -> Self {
        Self { k, members: BTreeSet::new() }
    }

    /// All partitions except the one-block partition.
    pub fn proper(k: usize) -> Self {
        let trivial = Partition::trivial(k);
        Self { k, members: Partition::all(k).into_iter().filter(|p| *p != trivial).collect() }
    }

    /// Inserts `p` and everything refining it.
    pub fn insert(&mut self, p: Partition) {
        if self.members.contains(&p) {
            return;
        }
        for q in Partition::all(self.k) {
            if q.refines(&p) {
                self.members.insert(q);
            }
        }
    }

    pub fn generated_by(k: usize, ps: impl IntoIterator<Item = Partition>) -> Self {
        let mut d = Self::empty(k);
        for p in ps {
            d.insert(p);
        }
        d
    }

    pub fn contains(&self, p: &Partition) -> bool {
        self.members.contains(p)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.members.iter().all(|p| Partition::all(self.k).iter().filter(|q| q.refines(p)).all(|q| self.members.contains(q)))
    }

    pub fn members(&self) -> impl Iterator<Item = &Partition> {
        self.members.iter()
    }
}

/// Conditions for [`find_point`]: `want_one(x) = 1`, every full form zero,
/// every partial form zero on its variables.
#[derive(Clone, Debug, Default)]
pub struct PointConstraints {
    pub want_one: Option<MultilinearForm>,
    pub want_zero_full: Vec<MultilinearForm>,
    pub want_zero_partial: Vec<(Vec<usize>, MultilinearForm)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointFound {
    pub point: Vec<GF2Vector>,
    pub trials: u64,
    pub exhaustive: bool,
}

fn mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Decodes tuple number `b` with `x_1` most significant.
pub fn decode_tuple(b: u64, n: usize, k: usize) -> Vec<u64> {
    (0..k).map(|a| (b >> ((k - 1 - a) * n)) & mask(n)).collect()
}

/// Searches `(F_2^n)^k` for a tuple satisfying `pred`: exhaustively in
/// lexicographic order when `2^{kn} ≤ budget`, else `budget` seeded random
/// trials.
pub fn search_tuple<F>(n: usize, k: usize, policy: &RankProxyPolicy, pred: F) -> (Option<Vec<u64>>, u64, bool)
where
    F: Fn(&[u64]) -> bool + Sync + Send,
{
    let bits = n * k;
    if bits < 63 && (1u64 << bits) <= policy.budget {
        let total = 1u64 << bits;
        match par::find_first(Exec::Parallel, 0..total, |b| pred(&decode_tuple(b, n, k))) {
            Some(b) => (Some(decode_tuple(b, n, k)), b + 1, true),
            None => (None, total, true),
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
        for t in 0..policy.budget {
            let x: Vec<u64> = (0..k).map(|_| rng.gen::<u64>() & mask(n)).collect();
            if pred(&x) {
                return (Some(x), t + 1, false);
            }
        }
        (None, policy.budget, false)
    }
}

/// Finds `x` with `ρ(x) = 1`, `β_i(x) = 0` and `γ_i(x_{I_i}) = 0`.
pub fn find_point(c: &PointConstraints, n: usize, k: usize, policy: &RankProxyPolicy) -> Result<PointFound> {
    for f in c.want_one.iter().chain(&c.want_zero_full) {
        if f.n() != n || f.k() != k {
            return Err(Error::Invalid("full constraint has the wrong shape".into()));
        }
    }
    for (vars, g) in &c.want_zero_partial {
        if g.n() != n || g.k() != vars.len() || vars.iter().any(|&v| v >= k) {
            return Err(Error::Invalid("partial constraint has the wrong shape".into()));
        }
    }
    let pred = |x: &[u64]| {
        c.want_one.as_ref().map_or(true, |r| r.eval_words(x))
            && c.want_zero_full.iter().all(|b| !b.eval_words(x))
            && c.want_zero_partial.iter().all(|(vars, g)| {
                let args: Vec<u64> = vars.iter().map(|&v| x[v]).collect();
                !g.eval_words(&args)
            })
    };
    let (found, trials, exhaustive) = search_tuple(n, k, policy, pred);
    match found {
        Some(x) => Ok(PointFound { point: x.iter().map(|&w| GF2Vector::from_u64(n, w)).collect(), trials, exhaustive }),
        None => Err(Error::NotFound { trials, detail: point_hypothesis_report(c, k) }),
    }
}

/// Checks `bias(ρ + λ·β) < 2^{-k(r+m)}` for all λ when affordable.
fn point_hypothesis_report(c: &PointConstraints, k: usize) -> String {
    let Some(rho) = &c.want_one else {
        return if c.want_zero_partial.is_empty() && c.want_zero_full.is_empty() {
            "no constraints".into()
        } else {
            "zero is always a solution without a want_one form".into()
        };
    };
    let r = c.want_zero_full.len();
    let m = c.want_zero_partial.len();
    if r > 12 {
        return "hypothesis not evaluated: too many full constraints".into();
    }
    let threshold = (k * (r + m)) as u32;
    let mut worst = None;
    for lam in 0u32..(1 << r) {
        let mut f = rho.clone();
        for (i, b) in c.want_zero_full.iter().enumerate() {
            if lam >> i & 1 == 1 {
                f.xor_assign(b);
            }
        }
        match bias(&f) {
            Ok(b) if b.at_least_pow2_neg(threshold) => {
                worst = Some(format!("hypothesis fails at λ = {lam:#b}: bias {} ≥ 2^-{threshold}", b.value()));
                break;
            }
            Ok(_) => {}
            Err(e) => return format!("hypothesis not evaluated: {e}"),
        }
    }
    worst.unwrap_or_else(|| format!("hypothesis holds (all biases < 2^-{threshold}); search budget too small"))
}

/// A structured sum `Σ λ_{i_1..i_r} Π_j α_{j,i_j}(x_{I_j}) + Σ spurious`,
/// where each spurious term has a factor whose variables contain no `I_j`.
#[derive(Clone, Debug)]
pub struct ProductFamilies {
    pub blocks: Vec<Vec<usize>>,
    pub families: Vec<Vec<MultilinearForm>>,
    pub spurious: Vec<Term>,
}

impl ProductFamilies {
    /// `Σ_{(i_j)} λ Π α_{j,i_j} + Σ spurious` for the given coefficients.
    pub fn assemble(&self, n: usize, k: usize, lambda: &BTreeMap<Vec<usize>, bool>) -> Result<MultilinearForm> {
        let mut out = expand_terms(n, k, &self.spurious)?;
        for (idx, &v) in lambda {
            if v {
                let fs: Vec<(&[usize], &MultilinearForm)> =
                    self.blocks.iter().zip(&self.families).zip(idx).map(|((b, fam), &i)| (b.as_slice(), &fam[i])).collect();
                out.xor_product(&fs)?;
            }
        }
        Ok(out)
    }

    pub fn index_tuples(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for fam in &self.families {
            out = out.into_iter().flat_map(|p| (0..fam.len()).map(move |i| [p.clone(), vec![i]].concat())).collect();
        }
        out
    }
}

/// Recovers each λ by evaluating `target` at a point where the selected
/// family members are 1, the others 0, and a designated factor of every
/// spurious term vanishes. `None` marks a coefficient whose witness was not
/// found.
pub fn extract_coefficients(
    products: &ProductFamilies,
    target: &MultilinearForm,
    policy: &RankProxyPolicy,
) -> Result<BTreeMap<Vec<usize>, Option<bool>>> {
    let (n, k) = (target.n(), target.k());
    Partition::new(k, products.blocks.clone())?;
    let killers: Vec<&Factor> = products
        .spurious
        .iter()
        .map(|t| {
            t.factors
                .iter()
                .find(|f| products.blocks.iter().all(|b| !b.iter().all(|v| f.vars.contains(v))))
                .ok_or_else(|| Error::Invalid("spurious term has no factor avoiding every block".into()))
        })
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for idx in products.index_tuples() {
        let pred = |x: &[u64]| {
            products.blocks.iter().zip(&products.families).zip(&idx).all(|((b, fam), &sel)| {
                let args: Vec<u64> = b.iter().map(|&v| x[v]).collect();
                fam.iter().enumerate().all(|(l, a)| a.eval_words(&args) == (l == sel))
            }) && killers.iter().all(|f| !f.eval_words(x))
        };
        let (found, _, _) = search_tuple(n, k, policy, pred);
        out.insert(idx, found.map(|x| target.eval_words(&x)));
    }
    Ok(out)
}

/// Output of [`change_basis`].
#[derive(Clone, Debug)]
pub struct ChangeOfBasis {
    pub s: usize,
    /// Rows `v_1..v_r`; the first s span the image of γ.
    pub v: GF2Matrix,
    /// `V^{-1}`.
    pub m: GF2Matrix,
    pub tilde_betas: Vec<MultilinearForm>,
    pub tilde_gammas: Vec<MultilinearForm>,
    /// `x_J` with `γ̃_j(x_J) = [i = j]`.
    pub witnesses: Vec<Vec<u64>>,
    pub exhaustive: bool,
}

fn combine(forms: &[MultilinearForm], coeffs: impl Iterator<Item = bool>) -> MultilinearForm {
    let mut out = MultilinearForm::zero(forms[0].n(), forms[0].k()).expect("shape of an existing form");
    for (f, c) in forms.iter().zip(coeffs) {
        if c {
            out.xor_assign(f);
        }
    }
    out
}

/// `Σ_i β_i(x_I) γ_i(x_J)` as a k-form.
pub fn pair_sum(i_vars: &[usize], betas: &[MultilinearForm], j_vars: &[usize], gammas: &[MultilinearForm]) -> Result<MultilinearForm> {
    let n = betas.first().or(gammas.first()).map_or(0, |f| f.n());
    let k = i_vars.len() + j_vars.len();
    let mut out = MultilinearForm::zero(n, k)?;
    for (b, g) in betas.iter().zip(gammas) {
        out.xor_product(&[(i_vars, b), (j_vars, g)])?;
    }
    Ok(out)
}

/// Rewrites `Σ β_i γ_i` as `Σ_{i ≤ s} β̃_i γ̃_i` with point witnesses
/// isolating each `γ̃_i`.
pub fn change_basis(
    i_vars: &[usize],
    betas: &[MultilinearForm],
    j_vars: &[usize],
    gammas: &[MultilinearForm],
    policy: &RankProxyPolicy,
) -> Result<ChangeOfBasis> {
    let r = betas.len();
    if gammas.len() != r {
        return Err(Error::Invalid("β and γ lists differ in length".into()));
    }
    if r == 0 {
        return Ok(ChangeOfBasis {
            s: 0,
            v: GF2Matrix::zeros(0, 0),
            m: GF2Matrix::zeros(0, 0),
            tilde_betas: vec![],
            tilde_gammas: vec![],
            witnesses: vec![],
            exhaustive: true,
        });
    }
    if betas.iter().any(|b| b.k() != i_vars.len()) || gammas.iter().any(|g| g.k() != j_vars.len()) {
        return Err(Error::Invalid("form arity does not match its variable set".into()));
    }
    let n = gammas[0].n();
    let kj = j_vars.len();
    let value = |x: &[u64]| GF2Vector::from_bools(&gammas.iter().map(|g| g.eval_words(x)).collect::<Vec<_>>());

    // Greedy maximal independent set of values, in enumeration order.
    let mut reduced: Vec<(usize, GF2Vector)> = Vec::new();
    let mut vs: Vec<GF2Vector> = Vec::new();
    let mut witnesses = Vec::new();
    let mut consider = |x: Vec<u64>| {
        let v = value(&x);
        let mut red = v.clone();
        for (p, b) in &reduced {
            if red.get(*p) {
                red.xor_assign(b);
            }
        }
        if let Some(p) = red.first_one() {
            reduced.push((p, red));
            vs.push(v);
            witnesses.push(x);
        }
        vs.len() == r
    };
    let bits = n * kj;
    let exhaustive = bits < 63 && (1u64 << bits) <= policy.budget;
    if exhaustive {
        for b in 0..(1u64 << bits) {
            if consider(decode_tuple(b, n, kj)) {
                break;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
        for _ in 0..policy.budget {
            let x: Vec<u64> = (0..kj).map(|_| rng.gen::<u64>() & mask(n)).collect();
            if consider(x) {
                break;
            }
        }
    }
    let s = vs.len();
    // Extend to a basis with unit vectors.
    let mut rows = vs.clone();
    for j in 0..r {
        let e = GF2Vector::unit(r, j);
        let mut trial = rows.clone();
        trial.push(e.clone());
        if GF2Matrix::from_rows(r, trial)?.rank() > rows.len() {
            rows.push(e);
        }
        if rows.len() == r {
            break;
        }
    }
    let v = GF2Matrix::from_rows(r, rows)?;
    let red = rref(&v);
    debug_assert_eq!(red.rank, r);
    let m = red.transform;
    let all_betas: Vec<MultilinearForm> = (0..r).map(|i| combine(betas, (0..r).map(|j| v.get(i, j)))).collect();
    let all_gammas: Vec<MultilinearForm> = (0..r).map(|i| combine(gammas, (0..r).map(|j| m.get(j, i)))).collect();
    if let Some(i) = (s..r).find(|&i| !all_gammas[i].is_zero()) {
        return Err(Error::step_failed(
            "change_basis",
            format!("combination γ̃_{i} is nonzero: the search missed part of Im γ ({} samples)", if exhaustive { "exhaustive" } else { "random" }),
            vec![],
        ));
    }
    Ok(ChangeOfBasis {
        s,
        v,
        m,
        tilde_betas: all_betas[..s].to_vec(),
        tilde_gammas: all_gammas[..s].to_vec(),
        witnesses,
        exhaustive,
    })
}

impl ChangeOfBasis {
    /// Checks the three postconditions exactly.
    pub fn verify(&self, i_vars: &[usize], betas: &[MultilinearForm], j_vars: &[usize], gammas: &[MultilinearForm]) -> Result<bool> {
        let r = betas.len();
        if r == 0 {
            return Ok(self.s == 0);
        }
        let comb_ok = (0..self.s).all(|i| {
            self.tilde_betas[i] == combine(betas, (0..r).map(|j| self.v.get(i, j)))
                && self.tilde_gammas[i] == combine(gammas, (0..r).map(|j| self.m.get(j, i)))
        });
        let lhs = pair_sum(i_vars, betas, j_vars, gammas)?;
        let rhs = pair_sum(i_vars, &self.tilde_betas, j_vars, &self.tilde_gammas)?;
        let wit_ok = self
            .witnesses
            .iter()
            .enumerate()
            .all(|(i, x)| self.tilde_gammas.iter().enumerate().all(|(j, g)| g.eval_words(x) == (i == j)));
        Ok(comb_ok && lhs == rhs && wit_ok && self.witnesses.len() == self.s)
    }
}

/// One removal round of [`slice_rewrite`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRound {
    pub set: Vec<usize>,
    pub r1: usize,
    pub r2: usize,
    pub r3: usize,
    pub s: usize,
    pub terms_after: usize,
    /// `r1²(r2 + r3 + 1) + r2 + r3`.
    pub bound: usize,
}

#[derive(Clone, Debug)]
pub struct SliceRewrite {
    pub certificate: PrankCertificate,
    pub rounds: Vec<RewriteRound>,
}

fn is_slice_of(f: &Factor, phi_id: &str) -> bool {
    matches!(&f.provenance, Provenance::SliceOf { form_id, .. } if form_id == phi_id)
}

/// Fixes `factor`'s variables outside `keep` to `y`, composing provenance.
fn restrict_factor(f: &Factor, y: &[u64], n: usize, keep: &[usize]) -> Result<Option<Factor>> {
    let fixed: Vec<(usize, u64)> =
        f.vars.iter().enumerate().filter(|(_, v)| !keep.contains(v)).map(|(slot, &v)| (slot, y[v])).collect();
    if fixed.is_empty() {
        return Ok(Some(f.clone()));
    }
    if fixed.len() == f.vars.len() {
        return Ok(None);
    }
    let form = f.form.slice_words(&fixed)?;
    let vars: Vec<usize> = f.vars.iter().copied().filter(|v| keep.contains(v)).collect();
    let provenance = match &f.provenance {
        Provenance::SliceOf { form_id, assignment } => {
            let mut a = assignment.clone();
            a.extend(f.vars.iter().filter(|v| !keep.contains(v)).map(|&v| (v, GF2Vector::from_u64(n, y[v]))));
            a.sort_by_key(|(v, _)| *v);
            Provenance::SliceOf { form_id: form_id.clone(), assignment: a }
        }
        Provenance::Free => Provenance::Free,
    };
    Ok(Some(Factor::with_provenance(vars, form, provenance)))
}

/// The part of term `t` at `(x_I, y)`: a product of factors on subsets of I,
/// or `None` when it vanishes identically.
fn term_piece(t: &Term, y: &[u64], n: usize, set: &[usize]) -> Result<Option<Vec<Factor>>> {
    let mut piece = Vec::new();
    for f in &t.factors {
        if f.vars.iter().any(|v| set.contains(v)) {
            match restrict_factor(f, y, n, set)? {
                Some(g) => piece.push(g),
                None => unreachable!("factor meets the kept set"),
            }
        } else if !f.eval_words(y) {
            return Ok(None);
        }
    }
    Ok(Some(piece))
}

/// Rewrites `cert` (a decomposition of φ) so every factor is a slice of φ.
/// Non-slice factor sets are removed largest first (ties lexicographic);
/// each round applies [`change_basis`] to the terms with a factor on
/// exactly that set.
pub fn slice_rewrite(
    phi: &MultilinearForm,
    phi_id: &str,
    cert: &PrankCertificate,
    p: &DownSet,
    policy: &RankProxyPolicy,
) -> Result<SliceRewrite> {
    let (n, k) = (phi.n(), phi.k());
    if cert.target != *phi || !cert.verify() {
        return Err(Error::InvalidCertificate("certificate does not decompose φ".into()));
    }
    for t in &cert.terms {
        if !p.contains(&Partition::of_term(k, t)?) {
            return Err(Error::Invalid(format!("term partition {:?} outside the down-set", t.blocks())));
        }
        for f in &t.factors {
            if is_slice_of(f, phi_id) && !f.provenance_holds(phi) {
                return Err(Error::InvalidCertificate(format!("factor on {:?} is not the slice it claims", f.vars)));
            }
        }
    }
    let mut terms = cert.terms.clone();
    let mut rounds = Vec::new();
    let mut trace = Vec::new();
    loop {
        let pending: BTreeSet<(std::cmp::Reverse<usize>, Vec<usize>)> = terms
            .iter()
            .flat_map(|t| &t.factors)
            .filter(|f| !is_slice_of(f, phi_id))
            .map(|f| (std::cmp::Reverse(f.vars.len()), f.vars.clone()))
            .collect();
        let Some((_, set)) = pending.into_iter().next() else { break };
        let jset: Vec<usize> = (0..k).filter(|v| !set.contains(v)).collect();

        let (mut r1, mut r2, mut r3) = (Vec::new(), Vec::new(), Vec::new());
        for t in terms.drain(..) {
            match t.factors.iter().find(|f| set.iter().all(|v| f.vars.contains(v))) {
                Some(f) if f.vars == set && !is_slice_of(f, phi_id) => r1.push(t),
                Some(_) => r2.push(t),
                None => r3.push(t),
            }
        }
        let betas: Vec<MultilinearForm> =
            r1.iter().map(|t| t.factors.iter().find(|f| f.vars == set).expect("r1 has the factor").form.clone()).collect();
        let others: Vec<Vec<Factor>> =
            r1.iter().map(|t| t.factors.iter().filter(|f| f.vars != set).cloned().collect()).collect();
        // γ_j relabeled onto 0..|J|.
        let gammas: Vec<MultilinearForm> = others
            .iter()
            .map(|fs| {
                let relabeled: Vec<Factor> = fs
                    .iter()
                    .map(|f| Factor::new(f.vars.iter().map(|v| jset.binary_search(v).expect("in J")).collect(), f.form.clone()))
                    .collect();
                let mut g = MultilinearForm::zero(n, jset.len())?;
                let fs: Vec<(&[usize], &MultilinearForm)> = relabeled.iter().map(|f| (f.vars.as_slice(), &f.form)).collect();
                g.xor_product(&fs)?;
                Ok(g)
            })
            .collect::<Result<_>>()?;
        let cob = change_basis(&set, &betas, &jset, &gammas, policy).map_err(|e| match e {
            Error::StepFailed(f) => Error::step_failed(format!("slice_rewrite {set:?}"), f.detail, trace.clone()),
            e => e,
        })?;
        let mut new_terms = Vec::new();
        for i in 0..cob.s {
            let wj = &cob.witnesses[i];
            let mut y = vec![0u64; k];
            for (t, &v) in jset.iter().enumerate() {
                y[v] = wj[t];
            }
            // β̃_i = φ(·, y) + Σ_{r2} (term at y) + Σ_{r3} (term at y).
            let mut pieces: Vec<Vec<Factor>> = Vec::new();
            let assignment: Vec<(usize, GF2Vector)> = jset.iter().map(|&v| (v, GF2Vector::from_u64(n, y[v]))).collect();
            let head = phi.slice(&assignment)?;
            if !head.is_zero() {
                pieces.push(vec![Factor::with_provenance(set.clone(), head, Provenance::SliceOf { form_id: phi_id.into(), assignment })]);
            }
            for t in r2.iter().chain(&r3) {
                if let Some(piece) = term_piece(t, &y, n, &set)? {
                    if piece.iter().all(|f| !f.form.is_zero()) {
                        pieces.push(piece);
                    }
                }
            }
            let mut check = MultilinearForm::zero(n, set.len())?;
            for piece in &pieces {
                let fs: Vec<Factor> = piece
                    .iter()
                    .map(|f| Factor::new(f.vars.iter().map(|v| set.binary_search(v).expect("in I")).collect(), f.form.clone()))
                    .collect();
                let fs: Vec<(&[usize], &MultilinearForm)> = fs.iter().map(|f| (f.vars.as_slice(), &f.form)).collect();
                check.xor_product(&fs)?;
            }
            if check != cob.tilde_betas[i] {
                return Err(Error::step_failed(format!("slice_rewrite {set:?}"), "β̃ does not match its slice expansion", trace));
            }
            for (j, other) in others.iter().enumerate() {
                if !cob.m.get(j, i) {
                    continue;
                }
                for piece in &pieces {
                    let mut fs = piece.clone();
                    fs.extend(other.iter().cloned());
                    new_terms.push(Term::new(fs));
                }
            }
        }
        let (c1, c2, c3) = (r1.len(), r2.len(), r3.len());
        new_terms.extend(r2);
        new_terms.extend(r3);
        terms = cancel_pairs(new_terms);
        let round = RewriteRound {
            set: set.clone(),
            r1: c1,
            r2: c2,
            r3: c3,
            s: cob.s,
            terms_after: terms.len(),
            bound: c1 * c1 * (c2 + c3 + 1) + c2 + c3,
        };
        trace.push(format!("{round:?}"));
        rounds.push(round);
    }
    let out = PrankCertificate::new(cert.target_id.clone(), phi.clone(), terms, "slice-rewrite");
    if !out.verify() {
        return Err(Error::step_failed("slice_rewrite", "rewritten certificate does not verify", trace));
    }
    for t in &out.terms {
        if !p.contains(&Partition::of_term(k, t)?) {
            return Err(Error::step_failed("slice_rewrite", "a term left the down-set", trace));
        }
    }
    Ok(SliceRewrite { certificate: out, rounds })
}

/// Drops pairs of identical terms, which cancel over F_2. Factor order
/// within a term is normalized first; survivors keep their first position.
fn cancel_pairs(terms: Vec<Term>) -> Vec<Term> {
    let mut odd: HashMap<Term, bool> = HashMap::new();
    let mut order = Vec::new();
    for mut t in terms {
        t.factors.sort_by(|a, b| a.vars.cmp(&b.vars));
        let seen = odd.entry(t.clone()).or_insert_with(|| {
            order.push(t);
            false
        });
        *seen = !*seen;
    }
    order.into_iter().filter(|t| odd[t]).collect()
}

/// Whether every factor is a slice of φ that re-evaluates correctly.
pub fn all_factors_are_slices(cert: &PrankCertificate, phi_id: &str, phi: &MultilinearForm) -> bool {
    cert.terms.iter().flat_map(|t| &t.factors).all(|f| is_slice_of(f, phi_id) && f.provenance_holds(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankbias::random_certificate;

    fn p(k: usize, b: &[&[usize]]) -> Partition {
        Partition::new(k, b.iter().map(|x| x.to_vec()).collect()).unwrap()
    }

    #[test]
    fn refinement_examples() {
        let s = Partition::singletons(3);
        for q in Partition::all(3) {
            assert!(s.refines(&q));
            assert!(q.refines(&q));
        }
        let a = p(3, &[&[0, 1], &[2]]);
        let b = p(3, &[&[0, 2], &[1]]);
        assert!(!a.refines(&b) && !b.refines(&a));
    }

    #[test]
    fn refinement_is_partial_order() {
        for k in [4, 5] {
            let all = Partition::all(k);
            assert_eq!(all.len(), if k == 4 { 15 } else { 52 });
            for a in &all {
                for b in &all {
                    if a.refines(b) && b.refines(a) {
                        assert_eq!(a, b);
                    }
                    if k == 4 {
                        for c in &all {
                            if a.refines(b) && b.refines(c) {
                                assert!(a.refines(c));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn downset_closure() {
        let d = DownSet::generated_by(4, [p(4, &[&[0, 1], &[2, 3]])]);
        assert!(d.is_closed());
        assert!(d.contains(&Partition::singletons(4)));
        assert!(d.contains(&p(4, &[&[0, 1], &[2], &[3]])));
        assert!(!d.contains(&p(4, &[&[0, 2], &[1, 3]])));
        assert_eq!(d.len(), 4);
        assert!(DownSet::proper(4).is_closed());
    }

    #[test]
    fn find_point_examples() {
        let pol = RankProxyPolicy::default();
        let none = PointConstraints::default();
        let x = find_point(&none, 3, 2, &pol).unwrap();
        assert!(x.point.iter().all(|v| v.is_zero()));
        let dot = MultilinearForm::dot(3).unwrap();
        let c = PointConstraints { want_one: Some(dot.clone()), ..Default::default() };
        let x = find_point(&c, 3, 2, &pol).unwrap();
        assert_eq!(x.point, vec![GF2Vector::unit(3, 0), GF2Vector::unit(3, 0)]);
        let c = PointConstraints { want_one: Some(dot.clone()), want_zero_full: vec![dot], ..Default::default() };
        assert!(matches!(find_point(&c, 3, 2, &pol), Err(Error::NotFound { .. })));
    }

    #[test]
    fn change_basis_small_cases() {
        let pol = RankProxyPolicy::default();
        let b = MultilinearForm::linear(&GF2Vector::from_u64(3, 5)).unwrap();
        let z = MultilinearForm::zero(3, 1).unwrap();
        let cob = change_basis(&[0], std::slice::from_ref(&b), &[1], &[z], &pol).unwrap();
        assert_eq!(cob.s, 0);
        let b2 = MultilinearForm::linear(&GF2Vector::from_u64(3, 3)).unwrap();
        let g = MultilinearForm::linear(&GF2Vector::from_u64(3, 6)).unwrap();
        let cob = change_basis(&[0], &[b.clone(), b2.clone()], &[1], &[g.clone(), g.clone()], &pol).unwrap();
        assert_eq!(cob.s, 1);
        assert_eq!(cob.tilde_betas[0], b.xor(&b2));
        assert!(cob.verify(&[0], &[b, b2], &[1], &[g.clone(), g]).unwrap());
    }

    #[test]
    fn slice_rewrite_fixpoint_and_product() {
        let pol = RankProxyPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let c = random_certificate(3, 3, 1, &mut rng).unwrap();
        let phi = c.target.clone();
        let p = DownSet::proper(3);
        let out = slice_rewrite(&phi, "phi", &c, &p, &pol).unwrap();
        assert!(out.certificate.verify());
        assert!(all_factors_are_slices(&out.certificate, "phi", &phi));
        let again = slice_rewrite(&phi, "phi", &out.certificate, &p, &pol).unwrap();
        assert_eq!(again.certificate.terms, out.certificate.terms);
        assert!(again.rounds.is_empty());
    }
}
