//! Weak regularity for families symmetric in a prefix of the variables, the
//! linear-combination normal form it supports, and the ×2 rank machinery.
//!
//! Slots are 0-based: a family symmetric in the first `m` slots is examined
//! against slot `m`, and the atom `(f, ℓ)` stands for `f ∘ (ℓ m)` with `ℓ = m`
//! meaning `f` itself.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::forms::MultilinearForm;
use crate::gf2::{self, GF2Matrix, GF2Vector, Subspace};
use crate::rankbias::{self, best_certificate, PrankCertificate, ProxyMode, RankProxyPolicy};

/// Largest family handled by exhaustive coefficient enumeration.
const MAX_ENUMERATED_ATOMS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Kind {
    /// Almost symmetric in slots `0..=m`.
    Sigma,
    /// The sum of its twists has low rank.
    Pi,
    /// No low-rank relation among twists.
    Rho,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub kind: Kind,
    pub index: usize,
    pub ell: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyForm {
    pub form: MultilinearForm,
    /// Coefficients over the input forms.
    pub combination: GF2Vector,
}

/// `γ_j = Σ atoms + residual`, with the residual certified.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaExpression {
    pub atoms: Vec<Atom>,
    pub residual: PrankCertificate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub case: String,
    pub combination: Vec<Atom>,
    pub decision: String,
    pub r_after: u128,
    pub q_after: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularizedFamily {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub inputs: Vec<MultilinearForm>,
    pub sigmas: Vec<FamilyForm>,
    pub pis: Vec<FamilyForm>,
    pub rhos: Vec<FamilyForm>,
    /// Tracked bound; saturates at `u128::MAX`.
    pub r_bound: u128,
    pub expressions: Vec<GammaExpression>,
    /// `σ + σ ∘ (m-1 m)` for each σ (empty when m = 0).
    pub sigma_certificates: Vec<PrankCertificate>,
    /// `Σ_ℓ π ∘ (ℓ m)` for each π.
    pub pi_certificates: Vec<PrankCertificate>,
    pub trace: Vec<IterationRecord>,
}

fn twist(f: &MultilinearForm, ell: usize, m: usize) -> MultilinearForm {
    if ell == m {
        f.clone()
    } else {
        f.swap(ell, m)
    }
}

fn sat_pow(base: u128, exp: u32) -> u128 {
    base.checked_pow(exp).unwrap_or(u128::MAX)
}

/// `(C (R + 2r))^D`.
fn grow(c: u32, d: u32, r_bound: u128, r: usize) -> u128 {
    let inner = r_bound.saturating_add(2 * r as u128).saturating_mul(c as u128);
    sat_pow(inner, d)
}

/// Whether `decide` reduces to an exact zero test.
fn policy_is_exact_zero(policy: &RankProxyPolicy) -> bool {
    policy.cap == 0 && !matches!(policy.mode, ProxyMode::BiasThreshold(t) if t > 0)
}

struct Entry {
    kind: Kind,
    form: MultilinearForm,
    combo: GF2Vector,
    alive: bool,
}

struct Expr {
    atoms: BTreeSet<(usize, usize)>,
    residual: MultilinearForm,
}

fn toggle(set: &mut BTreeSet<(usize, usize)>, a: (usize, usize)) {
    if !set.remove(&a) {
        set.insert(a);
    }
}

struct State {
    m: usize,
    entries: Vec<Entry>,
    exprs: Vec<Expr>,
}

impl State {
    fn alive_of(&self, kind: Kind) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().enumerate().filter(move |(_, e)| e.alive && e.kind == kind).map(|(i, _)| i)
    }

    fn count(&self, kind: Kind) -> usize {
        self.alive_of(kind).count()
    }

    fn q_value(&self) -> usize {
        self.count(Kind::Sigma) + 10 * self.count(Kind::Pi) + 100 * self.count(Kind::Rho)
    }

    /// Canonical atom order: σ's, then π's, then ρ's, by id and slot.
    fn atoms(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.alive_of(Kind::Sigma).map(|id| (id, self.m)).collect();
        for kind in [Kind::Pi, Kind::Rho] {
            for id in self.alive_of(kind) {
                out.extend((0..=self.m).map(|ell| (id, ell)));
            }
        }
        out
    }

    fn atom_form(&self, (id, ell): (usize, usize)) -> MultilinearForm {
        twist(&self.entries[id].form, ell, self.m)
    }

    fn combine(&self, atoms: &[(usize, usize)], c: &[bool], n: usize, k: usize) -> Result<MultilinearForm> {
        let mut out = MultilinearForm::zero(n, k)?;
        for (a, _) in atoms.iter().zip(c).filter(|(_, &b)| b) {
            out.xor_assign(&self.atom_form(*a));
        }
        Ok(out)
    }

    /// Combinations of π-twist sums are exempt from regularity.
    fn is_exempt(&self, atoms: &[(usize, usize)], c: &[bool]) -> bool {
        let mut per_pi: BTreeMap<usize, BTreeSet<bool>> = BTreeMap::new();
        for (&(id, _), &b) in atoms.iter().zip(c) {
            if self.entries[id].kind == Kind::Pi {
                per_pi.entry(id).or_default().insert(b);
            } else if b {
                return false;
            }
        }
        per_pi.values().all(|s| s.len() == 1)
    }

    fn toggle_base(&mut self, j: usize, y: usize, ell: usize) {
        let m = self.m;
        if self.entries[y].kind == Kind::Sigma {
            toggle(&mut self.exprs[j].atoms, (y, m));
            if ell != m {
                let f = &self.entries[y].form;
                let fix = f.swap(ell, m).xor(f);
                self.exprs[j].residual.xor_assign(&fix);
            }
        } else {
            toggle(&mut self.exprs[j].atoms, (y, ell));
        }
    }

    /// Replaces every twist of the π/ρ form `x` using `x = Σ others`.
    fn substitute_base(&mut self, x: usize, others: &[usize]) {
        for j in 0..self.exprs.len() {
            for ell in 0..=self.m {
                if self.exprs[j].atoms.remove(&(x, ell)) {
                    for &y in others {
                        self.toggle_base(j, y, ell);
                    }
                }
            }
        }
        self.entries[x].alive = false;
    }

    /// Replaces σ `x` using `x = Σ atoms + phi`.
    fn substitute_sigma(&mut self, x: usize, atoms: &[(usize, usize)], phi: &MultilinearForm) {
        let m = self.m;
        for expr in &mut self.exprs {
            if expr.atoms.remove(&(x, m)) {
                for &a in atoms {
                    toggle(&mut expr.atoms, a);
                }
                expr.residual.xor_assign(phi);
            }
        }
        self.entries[x].alive = false;
    }

    fn push(&mut self, kind: Kind, ids: &[usize], r: usize) -> usize {
        let n = self.entries[ids[0]].form.n();
        let k = self.entries[ids[0]].form.k();
        let mut form = MultilinearForm::zero(n, k).expect("shape already valid");
        let mut combo = GF2Vector::zeros(r);
        for &id in ids {
            form.xor_assign(&self.entries[id].form);
            combo.xor_assign(&self.entries[id].combo);
        }
        self.entries.push(Entry { kind, form, combo, alive: true });
        self.entries.len() - 1
    }
}

enum Violation {
    Exact(Vec<bool>),
    Decided(Vec<bool>, String),
}

fn find_violation(state: &State, atoms: &[(usize, usize)], n: usize, k: usize, policy: &RankProxyPolicy) -> Result<Option<Violation>> {
    if atoms.is_empty() {
        return Ok(None);
    }
    if policy_is_exact_zero(policy) {
        let cols: Vec<GF2Vector> = atoms.iter().map(|&a| state.atom_form(a).to_vector()).collect();
        let mat = GF2Matrix::from_columns(cols[0].dim(), &cols)?;
        for v in gf2::kernel(&mat) {
            let c: Vec<bool> = (0..atoms.len()).map(|i| v.get(i)).collect();
            if !state.is_exempt(atoms, &c) {
                return Ok(Some(Violation::Exact(c)));
            }
        }
        return Ok(None);
    }
    let a = atoms.len();
    if a > MAX_ENUMERATED_ATOMS || (1u64 << a) > policy.budget {
        return Err(Error::PolicyUndecided(format!("{a} atoms exceed the enumeration budget {}", policy.budget)));
    }
    for bits in 1u64..(1u64 << a) {
        let c: Vec<bool> = (0..a).map(|i| bits >> i & 1 == 1).collect();
        if state.is_exempt(atoms, &c) {
            continue;
        }
        let f = state.combine(atoms, &c, n, k)?;
        let d = policy.decide(&f, "combination").map_err(|e| Error::PolicyUndecided(format!("combination {bits:#b}: {e}")))?;
        if d.low {
            return Ok(Some(Violation::Decided(c, d.method)));
        }
    }
    Ok(None)
}

/// Regularizes `gammas` (each symmetric in the first `m` slots).
pub fn weak_regularize(gammas: &[MultilinearForm], m: usize, c: u32, d: u32, policy: &RankProxyPolicy) -> Result<RegularizedFamily> {
    let first = gammas.first().ok_or_else(|| Error::Invalid("empty family".into()))?;
    let (n, k, r) = (first.n(), first.k(), gammas.len());
    if k < m + 1 {
        return Err(Error::Invalid(format!("arity {k} leaves no slot after the symmetric prefix {m}")));
    }
    if c < 2 || d < 2 {
        return Err(Error::Invalid("constants C and D must be at least 2".into()));
    }
    for g in gammas {
        first.expect_shape(g)?;
        if !g.is_symmetric_prefix(m) {
            return Err(Error::NotSymmetric(format!("first {m} slots")));
        }
    }
    let mut state = State {
        m,
        entries: gammas
            .iter()
            .enumerate()
            .map(|(j, g)| Entry { kind: Kind::Rho, form: g.clone(), combo: GF2Vector::unit(r, j), alive: true })
            .collect(),
        exprs: (0..r)
            .map(|j| Ok(Expr { atoms: BTreeSet::from([(j, m)]), residual: MultilinearForm::zero(n, k)? }))
            .collect::<Result<_>>()?,
    };
    let mut r_bound: u128 = 1;
    let mut trace = Vec::new();
    let max_iterations = 100 * r;
    loop {
        let atoms = state.atoms();
        let Some(violation) = find_violation(&state, &atoms, n, k, policy)? else { break };
        if trace.len() >= max_iterations {
            return Err(Error::SolverFailed(format!("no termination within {max_iterations} iterations")));
        }
        let (coef, decision) = match violation {
            Violation::Exact(c) => (c, "zero".to_string()),
            Violation::Decided(c, method) => (c, method),
        };
        let q_before = state.q_value();
        let chosen: Vec<(usize, usize)> = atoms.iter().zip(&coef).filter(|(_, &b)| b).map(|(a, _)| *a).collect();
        let at = |id: usize, ell: usize| chosen.contains(&(id, ell));
        let twisted: Vec<usize> = state.alive_of(Kind::Pi).chain(state.alive_of(Kind::Rho)).collect();
        let pair = (0..=m)
            .flat_map(|l| (l + 1..=m).map(move |l2| (l, l2)))
            .find(|&(l, l2)| twisted.iter().any(|&id| at(id, l) != at(id, l2)));
        let case = match pair {
            None => {
                let sigma_hit = state.alive_of(Kind::Sigma).find(|&id| at(id, m));
                if let Some(x) = sigma_hit {
                    let phi = state.combine(&atoms, &coef, n, k)?;
                    let rest: Vec<_> = chosen.iter().copied().filter(|&a| a != (x, m)).collect();
                    state.substitute_sigma(x, &rest, &phi);
                    r_bound = r_bound.saturating_add(grow(c, d, r_bound, r));
                    "1-sigma"
                } else {
                    let support: Vec<usize> = twisted.iter().copied().filter(|&id| at(id, 0)).collect();
                    let x = state
                        .alive_of(Kind::Rho)
                        .find(|id| support.contains(id))
                        .ok_or_else(|| Error::SolverFailed("exempt combination reported as violation".into()))?;
                    let new = state.push(Kind::Pi, &support, r);
                    let others: Vec<usize> = std::iter::once(new).chain(support.iter().copied().filter(|&id| id != x)).collect();
                    state.substitute_base(x, &others);
                    r_bound = r_bound.saturating_add(grow(c, d, r_bound, r));
                    "1-rho"
                }
            }
            Some((l, l2)) => {
                let support: Vec<usize> = twisted.iter().copied().filter(|&id| at(id, l) != at(id, l2)).collect();
                let rho_hit = state.alive_of(Kind::Rho).find(|id| support.contains(id));
                let pi_hit = state.alive_of(Kind::Pi).find(|id| support.contains(id));
                let x = rho_hit.or(pi_hit).expect("pair chosen with a differing coefficient");
                let s = state.count(Kind::Sigma) as u128;
                let new = state.push(Kind::Sigma, &support, r);
                let others: Vec<usize> = std::iter::once(new).chain(support.iter().copied().filter(|&id| id != x)).collect();
                state.substitute_base(x, &others);
                let g = grow(c, d, r_bound, r);
                r_bound = (m as u128 + 1)
                    .saturating_mul(g.saturating_mul(2).saturating_add(s.saturating_mul(r_bound)))
                    .saturating_add(r_bound);
                "2"
            }
        };
        let q_after = state.q_value();
        if q_after >= q_before {
            return Err(Error::SolverFailed(format!("potential did not decrease ({q_before} -> {q_after})")));
        }
        trace.push(IterationRecord {
            case: case.into(),
            combination: chosen.iter().map(|&(id, ell)| Atom { kind: state.entries[id].kind, index: id, ell }).collect(),
            decision,
            r_after: r_bound,
            q_after,
        });
    }
    rename_degenerate(&mut state);
    finish(state, gammas, n, k, r_bound, trace)
}

/// At m = 0 every π has low rank and joins the residuals; at m ≤ 1 the
/// remaining twisted forms become σ's.
fn rename_degenerate(state: &mut State) {
    let m = state.m;
    if m > 1 {
        return;
    }
    let pis: Vec<usize> = state.alive_of(Kind::Pi).collect();
    for id in pis {
        if m == 0 {
            for expr in &mut state.exprs {
                if expr.atoms.remove(&(id, 0)) {
                    expr.residual.xor_assign(&state.entries[id].form);
                }
            }
            state.entries[id].alive = false;
        } else {
            state.entries[id].kind = Kind::Sigma;
            for j in 0..state.exprs.len() {
                if state.exprs[j].atoms.remove(&(id, 0)) {
                    state.toggle_base(j, id, 0);
                }
            }
        }
    }
    if m == 0 {
        for e in state.entries.iter_mut().filter(|e| e.alive && e.kind == Kind::Rho) {
            e.kind = Kind::Sigma;
        }
    }
}

fn finish(state: State, gammas: &[MultilinearForm], n: usize, k: usize, r_bound: u128, trace: Vec<IterationRecord>) -> Result<RegularizedFamily> {
    let m = state.m;
    let mut index = BTreeMap::new();
    let mut lists: [Vec<FamilyForm>; 3] = Default::default();
    for (slot, kind) in [Kind::Sigma, Kind::Pi, Kind::Rho].into_iter().enumerate() {
        for id in state.alive_of(kind) {
            let e = &state.entries[id];
            index.insert(id, lists[slot].len());
            lists[slot].push(FamilyForm { form: e.form.clone(), combination: e.combo.clone() });
        }
    }
    for f in lists.iter().flatten() {
        let mut re = MultilinearForm::zero(n, k)?;
        for j in f.combination.ones() {
            re.xor_assign(&gammas[j]);
        }
        if re != f.form {
            return Err(Error::SolverFailed("provenance does not reproduce an output form".into()));
        }
    }
    let mut expressions = Vec::with_capacity(gammas.len());
    for (j, (expr, g)) in state.exprs.iter().zip(gammas).enumerate() {
        let mut total = expr.residual.clone();
        for &a in &expr.atoms {
            total.xor_assign(&state.atom_form(a));
        }
        if total != *g {
            return Err(Error::SolverFailed(format!("expression for input {j} does not reproduce it")));
        }
        let atoms = expr
            .atoms
            .iter()
            .map(|&(id, ell)| Atom { kind: state.entries[id].kind, index: index[&id], ell })
            .collect();
        expressions.push(GammaExpression { atoms, residual: best_certificate(&expr.residual, &format!("residual{j}"))? });
    }
    let [sigmas, pis, rhos] = lists;
    let sigma_certificates = if m == 0 {
        Vec::new()
    } else {
        sigmas
            .iter()
            .enumerate()
            .map(|(i, s)| best_certificate(&s.form.xor(&s.form.swap(m - 1, m)), &format!("sigma{i}-asym")))
            .collect::<Result<_>>()?
    };
    let pi_certificates = pis
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut sum = MultilinearForm::zero(n, k)?;
            for ell in 0..=m {
                sum.xor_assign(&twist(&p.form, ell, m));
            }
            best_certificate(&sum, &format!("pi{i}-twists"))
        })
        .collect::<Result<_>>()?;
    Ok(RegularizedFamily {
        m,
        n,
        k,
        inputs: gammas.to_vec(),
        sigmas,
        pis,
        rhos,
        r_bound,
        expressions,
        sigma_certificates,
        pi_certificates,
        trace,
    })
}

impl RegularizedFamily {
    /// The canonical atom list with its forms.
    pub fn atoms(&self) -> Vec<(Atom, MultilinearForm)> {
        let m = self.m;
        let mut out: Vec<_> = self
            .sigmas
            .iter()
            .enumerate()
            .map(|(i, s)| (Atom { kind: Kind::Sigma, index: i, ell: m }, s.form.clone()))
            .collect();
        for (kind, list) in [(Kind::Pi, &self.pis), (Kind::Rho, &self.rhos)] {
            for (i, f) in list.iter().enumerate() {
                out.extend((0..=m).map(|ell| (Atom { kind, index: i, ell }, twist(&f.form, ell, m))));
            }
        }
        out
    }

    /// Every certificate verifies and every expression reproduces its input.
    pub fn verify(&self) -> bool {
        let certs_ok = self
            .sigma_certificates
            .iter()
            .chain(&self.pi_certificates)
            .chain(self.expressions.iter().map(|e| &e.residual))
            .all(PrankCertificate::verify);
        let forms: BTreeMap<Atom, MultilinearForm> = self.atoms().into_iter().collect();
        let exprs_ok = self.expressions.iter().zip(&self.inputs).all(|(e, g)| {
            let mut total = e.residual.target.clone();
            for a in &e.atoms {
                match forms.get(a) {
                    Some(f) => total.xor_assign(f),
                    None => return false,
                }
            }
            total == *g
        });
        certs_ok && exprs_ok
    }
}

/// Coefficients of φ over the family's atoms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedCombination {
    pub lambda: Vec<bool>,
    /// `mu[i][ℓ]`, ℓ ∈ 0..=m.
    pub mu: Vec<Vec<bool>>,
    pub nu: Vec<Vec<bool>>,
    /// Present when φ is symmetric in slots `0..=m`.
    pub nu_tilde: Option<Vec<bool>>,
    /// `φ + Σλσ + Σ ν̃ Σ_ℓ ρ∘(ℓ m)`, certified.
    pub remainder: Option<PrankCertificate>,
    /// `(r + 2) R`.
    pub remainder_bound: u128,
}

/// Expresses `phi + τ` over the family, where `τ` is the supplied low-rank
/// remainder, and checks the coefficient equalities forced by symmetry of
/// `phi` in its first `sym_prefix` slots (`m` or `m + 1`).
pub fn check_symmetric_combination(
    family: &RegularizedFamily,
    phi: &MultilinearForm,
    remainder: Option<&PrankCertificate>,
    sym_prefix: usize,
) -> Result<NormalizedCombination> {
    let m = family.m;
    if sym_prefix != m && sym_prefix != m + 1 {
        return Err(Error::Invalid(format!("symmetric prefix {sym_prefix} must be {m} or {}", m + 1)));
    }
    if phi.n() != family.n || phi.k() != family.k {
        return Err(Error::ArityMismatch { expected: family.k, found: phi.k() });
    }
    if !phi.is_symmetric_prefix(sym_prefix) {
        return Err(Error::NotSymmetric(format!("first {sym_prefix} slots")));
    }
    let mut target = phi.clone();
    if let Some(cert) = remainder {
        if !cert.verify() {
            return Err(Error::InvalidCertificate("remainder certificate does not expand to its target".into()));
        }
        phi.expect_shape(&cert.target)?;
        target.xor_assign(&cert.target);
    }
    let atoms = family.atoms();
    let lambda_len = family.sigmas.len();
    let mut lambda = vec![false; lambda_len];
    let mut mu = vec![vec![false; m + 1]; family.pis.len()];
    let mut nu = vec![vec![false; m + 1]; family.rhos.len()];
    if !atoms.is_empty() {
        let cols: Vec<GF2Vector> = atoms.iter().map(|(_, f)| f.to_vector()).collect();
        let mat = GF2Matrix::from_columns(cols[0].dim(), &cols)?;
        let sol = gf2::solve(&mat, &target.to_vector())
            .map_err(|_| Error::Infeasible("phi is not in the span of the family atoms".into()))?;
        for (i, (a, _)) in atoms.iter().enumerate() {
            let b = sol.get(i);
            match a.kind {
                Kind::Sigma => lambda[a.index] = b,
                Kind::Pi => mu[a.index][a.ell] = b,
                Kind::Rho => nu[a.index][a.ell] = b,
            }
        }
    } else if !target.is_zero() {
        return Err(Error::Infeasible("empty family and nonzero target".into()));
    }
    for (name, table) in [("mu", &mu), ("nu", &nu)] {
        for (i, row) in table.iter().enumerate() {
            if let Some(l) = (1..m).find(|&l| row[l] != row[0]) {
                return Err(Error::EqualityViolated(format!("{name}[{i}] differs at slots 0 and {l}")));
            }
        }
    }
    let input_count = family.inputs.len() as u128;
    let remainder_bound = (input_count + 2).saturating_mul(family.r_bound);
    let mut out = NormalizedCombination { lambda, mu, nu, nu_tilde: None, remainder: None, remainder_bound };
    if sym_prefix == m + 1 {
        for (i, row) in out.nu.iter().enumerate() {
            if let Some(l) = (1..=m).find(|&l| row[l] != row[0]) {
                return Err(Error::EqualityViolated(format!("nu[{i}] differs at slots 0 and {l}")));
            }
        }
        let nu_tilde: Vec<bool> = out.nu.iter().map(|row| row[0]).collect();
        let mut rem = phi.clone();
        for (s, _) in family.sigmas.iter().zip(&out.lambda).filter(|(_, &b)| b) {
            rem.xor_assign(&s.form);
        }
        for (rho, _) in family.rhos.iter().zip(&nu_tilde).filter(|(_, &b)| b) {
            for ell in 0..=m {
                rem.xor_assign(&twist(&rho.form, ell, m));
            }
        }
        out.remainder = Some(best_certificate(&rem, "normalized-remainder")?);
        out.nu_tilde = Some(nu_tilde);
    }
    Ok(out)
}

/// Both sides of `bias(f^{×2}) ≥ 2^{-(k-1)·2^{k-1}·r}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Times2Report {
    pub bias: Dyadic,
    /// The bound is `2^{-exponent}`.
    pub exponent: u64,
    pub rank: usize,
    pub holds: bool,
}

/// Checks the bias lower bound for the diagonal contraction of a certified
/// low-rank form symmetric in its first two slots.
pub fn times2_bias_bound(f: &MultilinearForm, cert: &PrankCertificate) -> Result<Times2Report> {
    if cert.target != *f || !cert.verify() {
        return Err(Error::InvalidCertificate("certificate does not decompose the form".into()));
    }
    if f.k() < 3 {
        return Err(Error::Invalid("the bound needs at least three slots".into()));
    }
    let contracted = f.diagonal_contract()?;
    let b = rankbias::bias(&contracted)?.value();
    let k = f.k() as u64;
    let exponent = (k - 1) * (1u64 << (k - 1)) * cert.len() as u64;
    let log_den = b.log2_den as u64;
    let holds = b.num > 0 && (exponent >= log_den || (b.num as u128) >= 1u128 << (log_den - exponent));
    Ok(Times2Report { bias: b, exponent, rank: cert.len(), holds })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaSplit {
    pub lambda: Subspace,
    pub lambda_x2: Subspace,
    pub r_bound: u128,
    /// Certificates for `λ·α`, one per spanning vector of Λ.
    pub lambda_certificates: Vec<(GF2Vector, PrankCertificate)>,
    /// Certificates for `λ·α^{×2}`, one per spanning vector of Λ^{×2}.
    pub lambda_x2_certificates: Vec<(GF2Vector, PrankCertificate)>,
    /// Coefficient vectors the policy could not decide, with the reason.
    pub gray: Vec<(GF2Vector, String)>,
    pub iterations: usize,
}

fn combine_forms(forms: &[MultilinearForm], lambda: &GF2Vector) -> Result<MultilinearForm> {
    let mut out = MultilinearForm::zero(forms[0].n(), forms[0].k())?;
    for i in lambda.ones() {
        out.xor_assign(&forms[i]);
    }
    Ok(out)
}

/// Smallest `λ ∉ space` that the policy calls low rank on `forms`.
fn first_low(
    forms: &[MultilinearForm],
    space: &Subspace,
    policy: &RankProxyPolicy,
    gray: &mut BTreeMap<GF2Vector, String>,
) -> Result<Option<(GF2Vector, Option<PrankCertificate>)>> {
    let r = forms.len();
    for bits in 1u64..(1u64 << r) {
        let lambda = GF2Vector::from_u64(r, bits);
        if space.contains(&lambda) || gray.contains_key(&lambda) {
            continue;
        }
        match policy.decide(&combine_forms(forms, &lambda)?, "lambda-combination") {
            Ok(d) if d.low => return Ok(Some((lambda, d.certificate))),
            Ok(_) => {}
            Err(e) => {
                gray.insert(lambda, e.to_string());
            }
        }
    }
    Ok(None)
}

const SPLIT_C: u128 = 2;
const SPLIT_D: u32 = 2;

/// Splits coefficient space into low-rank combinations of `alphas` and of
/// their diagonal contractions.
pub fn lambda_split(alphas: &[MultilinearForm], big_m: u32, r0: u128, policy: &RankProxyPolicy) -> Result<LambdaSplit> {
    let first = alphas.first().ok_or_else(|| Error::Invalid("empty family".into()))?;
    let r = alphas.len();
    if r > 20 {
        return Err(Error::SizeGuard(format!("{r} forms give 2^{r} coefficient vectors")));
    }
    for a in alphas {
        first.expect_shape(a)?;
    }
    let contracted: Vec<MultilinearForm> = alphas.iter().map(MultilinearForm::diagonal_contract).collect::<Result<_>>()?;
    let mut lambda = Subspace::zero(r);
    let mut lambda_x2 = Subspace::zero(r);
    let mut r_bound = r0;
    let mut lambda_certificates = Vec::new();
    let mut lambda_x2_certificates = Vec::new();
    let mut gray = BTreeMap::new();
    let mut gray_x2 = BTreeMap::new();
    let mut iterations = 0;
    loop {
        if let Some((v, cert)) = first_low(alphas, &lambda, policy, &mut gray)? {
            let cert = match cert {
                Some(c) => c,
                None => best_certificate(&combine_forms(alphas, &v)?, "lambda-combination")?,
            };
            lambda_certificates.push((v.clone(), cert));
            if !lambda_x2.contains(&v) {
                let x2 = combine_forms(&contracted, &v)?;
                lambda_x2_certificates.push((v.clone(), best_certificate(&x2, "lambda-x2-combination")?));
                lambda_x2 = extend(&lambda_x2, &v)?;
            }
            lambda = extend(&lambda, &v)?;
            let grown = sat_pow(r_bound.saturating_mul(2).saturating_add(1), SPLIT_D * big_m);
            r_bound = grown.saturating_mul(2 * SPLIT_C);
        } else if let Some((v, cert)) = first_low(&contracted, &lambda_x2, policy, &mut gray_x2)? {
            let cert = match cert {
                Some(c) => c,
                None => best_certificate(&combine_forms(&contracted, &v)?, "lambda-x2-combination")?,
            };
            lambda_x2_certificates.push((v.clone(), cert));
            lambda_x2 = extend(&lambda_x2, &v)?;
            r_bound = sat_pow(r_bound.saturating_mul(2).saturating_add(1), big_m).saturating_mul(2);
        } else {
            break;
        }
        iterations += 1;
        if iterations > 2 * r {
            return Err(Error::SolverFailed(format!("more than {} splitting steps", 2 * r)));
        }
    }
    let gray = gray.into_iter().chain(gray_x2).collect();
    Ok(LambdaSplit { lambda, lambda_x2, r_bound, lambda_certificates, lambda_x2_certificates, gray, iterations })
}

fn extend(space: &Subspace, v: &GF2Vector) -> Result<Subspace> {
    let mut basis = space.basis().to_vec();
    basis.push(v.clone());
    Ok(Subspace::span(space.ambient_dim(), &basis)?)
}
