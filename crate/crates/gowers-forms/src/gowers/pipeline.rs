//! The constructive pipeline from a correlating form to a non-classical
//! polynomial: B-set and subspace, restriction, the symmetrization ladder
//! with diagonal repair, extension back to the whole space and integration.
//!
//! Errors never escape [`pipeline_demo`]; they end the trace with
//! [`PipelineStatus::Failed`] naming the step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{correlation, correlation_with, subspace_restrict_with, sumset4_verify, CycloInt, PhaseFunction, DEFAULT_BUDGET_LOG2};
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::forms::{MultilinearForm, Permutation};
use crate::gf2::{complement_projection, GF2Vector, Subspace};
use crate::io::{Check, Relation};
use crate::nonclassical::{derivative_identity_sampled, derivative_identity_violation, integrate, Monomial, NonClassicalPoly, TorusValue};
use crate::par::Exec;
use crate::rankbias::{best_certificate, bias, extend_form_via_projection, RankProxyPolicy};
use crate::symmetrize::{extend_symmetry_4, extend_symmetry_5, remove_repeated, symmetrize_odd, symmetrize_pair};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Correlations below this end the run early.
    pub floor: f64,
    /// Most basis vectors dropped from `span(B)` when searching inside `4B`.
    pub max_codim: usize,
    pub policy: RankProxyPolicy,
    pub budget_log2: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { floor: 0.1, max_codim: 3, policy: RankProxyPolicy::default(), budget_log2: DEFAULT_BUDGET_LOG2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineStep {
    pub name: String,
    pub checks: Vec<Check>,
    pub data: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PipelineStatus {
    Completed,
    Terminated { reason: String },
    Failed { step: String, detail: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub n: usize,
    pub k: usize,
    pub steps: Vec<PipelineStep>,
    pub status: PipelineStatus,
    pub subspace: Option<Subspace>,
    /// The symmetric form reached on the subspace.
    pub sigma_u: Option<MultilinearForm>,
    /// Its extension to the whole space.
    pub sigma_g: Option<MultilinearForm>,
    /// `integrate(σ_G)`.
    pub polynomial: Option<NonClassicalPoly>,
    /// Best lower-degree correction found for the polynomial's phase.
    pub correction: Option<NonClassicalPoly>,
    /// `|E f · conj e(q + p)|`.
    pub final_correlation: Option<f64>,
}

impl PipelineTrace {
    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.steps.iter().flat_map(|s| &s.checks)
    }

    /// Every recorded inequality holds and re-evaluates to its verdict.
    pub fn all_checks_pass(&self) -> bool {
        self.checks().all(|c| c.verdict && c.consistent())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step3Report {
    pub codim: usize,
    pub bias: Dyadic,
    /// `c''^k` with `c'' = 2^{−codim}`.
    pub lhs: f64,
    /// `bias(ρ)^{2^{−k}}`.
    pub rhs: f64,
    pub vanishes_on_u: bool,
    pub holds: bool,
}

/// For `ρ` vanishing on `U^k`, compares `2^{−k·codim U}` with
/// `bias(ρ)^{2^{−k}}`.
pub fn step3_check(rho: &MultilinearForm, u: &Subspace) -> Result<Step3Report> {
    let k = rho.k();
    let codim = u.codim();
    let vanishes_on_u = rho.restrict(u)?.is_zero();
    let b = bias(rho)?.value();
    let lhs = 2f64.powi(-((k * codim) as i32));
    let rhs = b.to_f64().max(0.0).powf(2f64.powi(-(k as i32)));
    Ok(Step3Report { codim, bias: b, lhs, rhs, vanishes_on_u, holds: vanishes_on_u && lhs <= rhs })
}

enum Flow {
    Continue,
    Stop(String),
}

struct Run<'a> {
    trace: PipelineTrace,
    current: String,
    config: &'a PipelineConfig,
}

impl Run<'_> {
    fn begin(&mut self, name: &str) {
        self.current = name.to_string();
    }

    fn push(&mut self, checks: Vec<Check>, data: Value) {
        self.trace.steps.push(PipelineStep { name: self.current.clone(), checks, data });
    }
}

#[derive(Clone, Copy, Debug)]
enum Rung {
    Pair,
    Odd(usize),
    Extend4,
    Extend5,
    Repair(usize),
}

fn ladder(k: usize) -> Vec<Rung> {
    use Rung::*;
    match k {
        2 => vec![Pair, Repair(2)],
        3 => vec![Pair, Repair(2), Odd(1), Repair(3)],
        4 => vec![Pair, Repair(2), Odd(1), Repair(3), Extend4, Repair(4)],
        _ => vec![Pair, Repair(2), Odd(1), Repair(3), Extend5, Repair(4), Odd(2), Repair(5)],
    }
}

/// Runs every step on `f` with its correlating form `alpha`, asserting the
/// claimed correlation `c`.
pub fn pipeline_demo(f: &PhaseFunction, alpha: &MultilinearForm, c: f64, config: &PipelineConfig) -> PipelineTrace {
    let trace = PipelineTrace {
        n: alpha.n(),
        k: alpha.k(),
        steps: Vec::new(),
        status: PipelineStatus::Completed,
        subspace: None,
        sigma_u: None,
        sigma_g: None,
        polynomial: None,
        correction: None,
        final_correlation: None,
    };
    let mut run = Run { trace, current: "setup".into(), config };
    match execute(&mut run, f, alpha, c) {
        Ok(Flow::Continue) => {}
        Ok(Flow::Stop(reason)) => run.trace.status = PipelineStatus::Terminated { reason },
        Err(e) => run.trace.status = PipelineStatus::Failed { step: run.current.clone(), detail: e.to_string() },
    }
    run.trace
}

fn execute(run: &mut Run, f: &PhaseFunction, alpha: &MultilinearForm, c: f64) -> Result<Flow> {
    let (n, k) = (alpha.n(), alpha.k());
    let budget = run.config.budget_log2;
    if !(2..=5).contains(&k) {
        return Err(Error::Invalid(format!("the pipeline handles 2 ≤ k ≤ 5, got {k}")));
    }
    if f.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: f.n() });
    }

    run.begin("correlation");
    let base = correlation_with(f, alpha, budget, Exec::default())?;
    let c0 = base.abs;
    run.push(vec![Check::new("|corr(f, α)| ≥ c", c0, Relation::Ge, c, base.error_bound)], json!({ "c0": c0, "value": [base.value.re, base.value.im] }));
    if c0 < run.config.floor {
        return Ok(Flow::Stop(format!("correlation {c0:.6} is below the floor {}", run.config.floor)));
    }

    run.begin("b-set");
    let mut b_set = Vec::new();
    for b in 0..1u64 << n {
        let slice = alpha.slice_words(&[(0, b)])?;
        let r = correlation_with(&f.mder(b), &slice, budget, Exec::default())?;
        if r.abs + r.error_bound >= c0 / 2.0 {
            b_set.push(GF2Vector::from_u64(n, b));
        }
    }
    let frac = b_set.len() as f64 / 2f64.powi(n as i32);
    run.push(vec![Check::ge("|B| / |G| ≥ c0 / 2", frac, c0 / 2.0)], json!({ "size": b_set.len(), "elements": b_set.iter().map(|v| v.to_u64()).collect::<Vec<_>>() }));
    if b_set.is_empty() {
        return Err(Error::Invalid("the B-set is empty".into()));
    }

    run.begin("subspace");
    let hull = Subspace::span(n, &b_set)?;
    let basis = hull.basis().to_vec();
    let mut chosen = None;
    let mut tried = 0usize;
    'search: for drop in 0..=run.config.max_codim.min(basis.len()) {
        for removed in combinations(basis.len(), drop) {
            let keep: Vec<GF2Vector> = basis.iter().enumerate().filter(|(i, _)| !removed.contains(i)).map(|(_, v)| v.clone()).collect();
            let v = Subspace::span(n, &keep)?;
            tried += 1;
            if sumset4_verify(&b_set, &v)? {
                chosen = Some(v);
                break 'search;
            }
        }
    }
    let Some(u) = chosen else {
        return Err(Error::step_failed("subspace", format!("no candidate among {tried} lies in 4B"), Vec::new()));
    };
    let (g, rep) = subspace_restrict_with(f, alpha, &u, budget)?;
    let strongly: Vec<bool> = u.basis().iter().map(|b| alpha.slice_words(&[(0, b.to_u64())]).map(|s| s.is_strongly_symmetric())).collect::<Result<_>>()?;
    let exponent = 2f64.powi(k as i32);
    run.push(
        vec![
            Check::holds("V ⊆ 4B", sumset4_verify(&b_set, &u)?),
            Check::new("c' ≥ c0^{2^k}", rep.c_restricted, Relation::Ge, c0.powf(exponent), rep.tolerance),
            Check::new("c' ≥ c0", rep.c_restricted, Relation::Ge, c0, rep.tolerance),
        ],
        json!({
            "codim": u.codim(),
            "candidates_tried": tried,
            "basis": u.basis().iter().map(|v| v.to_u64()).collect::<Vec<_>>(),
            "shift": rep.shift,
            "c_restricted": rep.c_restricted,
            "proof_choice": rep.proof_choice,
            "slices_strongly_symmetric": strongly,
        }),
    );
    run.trace.subspace = Some(u.clone());

    let mut g = g;
    let mut beta = alpha.restrict(&u)?;
    let m_dim = u.dim();
    let mut sigma_acc = MultilinearForm::zero(m_dim, k)?;
    for rung in ladder(k) {
        match rung {
            Rung::Repair(m) => repair(run, &mut g, &mut beta, &mut sigma_acc, m)?,
            r => symmetrize_rung(run, &g, &mut beta, r)?,
        }
    }

    run.begin("step3");
    let sigma_u = beta.xor(&sigma_acc);
    let proj = complement_projection(&u);
    let sigma_g = extend_form_via_projection(&sigma_u, &proj)?;
    let rho = alpha.xor(&MultilinearForm::extend_from(&alpha.restrict(&u)?, &u)?);
    let s3 = step3_check(&rho, &u)?;
    let delta = alpha.restrict(&u)?.xor(&sigma_u);
    let delta_cert = best_certificate(&delta, "alpha|U+sigma_U")?;
    run.push(
        vec![
            Check::holds("σ_U strongly symmetric", sigma_u.is_strongly_symmetric()),
            Check::holds("σ_G strongly symmetric", sigma_g.is_strongly_symmetric()),
            Check::holds("ρ vanishes on U", s3.vanishes_on_u),
            Check::le("c''^k ≤ bias(ρ)^{2^{-k}}", s3.lhs, s3.rhs),
            Check::holds("certificate for α|U ⊕ σ_U verifies", delta_cert.verify()),
        ],
        json!({ "rho_zero": rho.is_zero(), "bias_rho": s3.bias.to_string(), "delta_terms": delta_cert.len(), "codim": s3.codim }),
    );
    run.trace.sigma_u = Some(sigma_u);
    run.trace.sigma_g = Some(sigma_g.clone());

    run.begin("integrate");
    let q = integrate(&sigma_g)?;
    let grid_bits = (k as u32 + 1) * n as u32;
    let identity = if grid_bits <= budget.min(IDENTITY_GRID_LOG2) {
        derivative_identity_violation(&q, &sigma_g, Exec::Parallel)?.is_none()
    } else {
        derivative_identity_sampled(&q, &sigma_g, IDENTITY_SAMPLES, &mut ChaCha8Rng::seed_from_u64(0))?
    };
    let eq = PhaseFunction::from_poly(&q)?;
    let h = f.mul(&eq.conj())?;
    let (p, value, searched) = match best_correction(&h, k - 1, budget.min(CORRECTION_BUDGET_LOG2))? {
        Some((p, v)) => (p, v, true),
        None => (NonClassicalPoly::zero(n, k - 1)?, h.inner(&PhaseFunction::one(n)?)?.0.norm(), false),
    };
    run.push(
        vec![Check::holds("Δ^k q = |σ_G|/2", identity), Check::ge("|E f·conj e(q+p)| > 0", value, f64::MIN_POSITIVE)],
        json!({ "terms": q.terms().count(), "depth": q.depth(), "correction_searched": searched, "correction_terms": p.terms().count(), "final_correlation": value }),
    );
    run.trace.polynomial = Some(q);
    run.trace.correction = Some(p);
    run.trace.final_correlation = Some(value);
    Ok(Flow::Continue)
}

fn symmetrize_rung(run: &mut Run, g: &PhaseFunction, beta: &mut MultilinearForm, rung: Rung) -> Result<()> {
    let k = beta.k();
    let policy = run.config.policy;
    let (name, prefix) = match rung {
        Rung::Pair => ("pair".to_string(), 2),
        Rung::Odd(l) => (format!("odd-{l}"), 2 * l + 1),
        Rung::Extend4 => ("extend-4".to_string(), 4),
        Rung::Extend5 => ("extend-5".to_string(), 4),
        Rung::Repair(_) => unreachable!("repairs are handled separately"),
    };
    run.begin(&name);
    if beta.is_symmetric_prefix(prefix) {
        run.push(vec![Check::holds(format!("symmetric in the first {prefix} slots"), true)], json!({ "skipped": true }));
        return Ok(());
    }
    let (a, b) = match rung {
        Rung::Pair => (0, 1),
        Rung::Odd(l) => (0, 2 * l),
        _ => (2, 3),
    };
    let cert = best_certificate(&beta.xor(&beta.permute(&Permutation::transposition(k, a, b))?), "diff")?;
    let result = match rung {
        Rung::Pair => symmetrize_pair(beta, &cert, &policy)?,
        Rung::Odd(l) => symmetrize_odd(beta, l, &cert)?,
        Rung::Extend4 => extend_symmetry_4(beta, &cert, &policy)?,
        _ => extend_symmetry_5(beta, &cert, &policy)?,
    };
    let low = super::lowrank_replace_check(g, beta, &result.output, &result.diff_certificate)?;
    run.push(
        vec![
            Check::holds(format!("symmetric in the first {prefix} slots"), result.output.is_symmetric_prefix(prefix)),
            Check::holds("difference certificate verifies", result.verify(beta)),
            Check::ge("|corr(g, β')| ≥ 2^{-2^{k+1} r}|corr(g, β)|", low.c_beta, low.bound),
        ],
        json!({ "input_cert_terms": cert.len(), "diff_terms": result.diff_certificate.len(), "c_before": low.c_alpha, "c_after": low.c_beta, "driver_steps": result.trace.len() }),
    );
    *beta = result.output;
    Ok(())
}

/// Moves a strongly symmetric diagonal part of `β` into the function, then
/// removes what remains of the contraction.
fn repair(run: &mut Run, g: &mut PhaseFunction, beta: &mut MultilinearForm, sigma_acc: &mut MultilinearForm, m: usize) -> Result<()> {
    run.begin(&format!("repair-{m}"));
    let gamma = beta.diagonal_contract()?;
    if gamma.is_zero() {
        run.push(vec![Check::holds("β(d, d, …) = 0", true)], json!({ "skipped": true }));
        return Ok(());
    }
    let before = correlation(g, beta)?;
    let choice = if gamma.is_strongly_symmetric() { "contraction" } else { "zero" };
    let sigma_t = if choice == "contraction" { gamma.lift_strongly_symmetric()? } else { MultilinearForm::zero(beta.n(), beta.k())? };
    let alpha_t = beta.xor(&sigma_t);
    let mut checks = Vec::new();
    if !sigma_t.is_zero() {
        let q = integrate(&sigma_t)?;
        *g = g.mul(&PhaseFunction::from_poly(&q)?.conj())?;
        let after = correlation(g, &alpha_t)?;
        checks.push(Check::new("corr(g·conj e(q), β ⊕ σ̃) = corr(g, β)", (after.value - before.value).norm(), Relation::Eq, 0.0, before.error_bound + after.error_bound));
        sigma_acc.xor_assign(&sigma_t);
    }
    let contraction = alpha_t.diagonal_contract()?;
    let cert = best_certificate(&contraction, "contract")?;
    let result = remove_repeated(&alpha_t, m, &cert, &run.config.policy)?;
    let low = super::lowrank_replace_check(g, &alpha_t, &result.output, &result.diff_certificate)?;
    checks.push(Check::holds("output contraction vanishes", result.output.diagonal_contract()?.is_zero()));
    checks.push(Check::holds(format!("symmetric in the first {m} slots"), result.output.is_symmetric_prefix(m)));
    checks.push(Check::holds("difference certificate verifies", result.verify(&alpha_t)));
    checks.push(Check::ge("|corr(g, β')| ≥ 2^{-2^{k+1} r}|corr(g, α̃)|", low.c_beta, low.bound));
    run.push(
        checks,
        json!({
            "sigma_choice": choice,
            "contraction_weight": gamma.weight(),
            "contract_cert_terms": cert.len(),
            "diff_terms": result.diff_certificate.len(),
            "subspace_codim": result.subspace.as_ref().map(|s| s.codim()),
        }),
    );
    *beta = result.output;
    Ok(())
}

/// Largest tuple grid checked exhaustively for the integration identity;
/// beyond it the identity is sampled.
const IDENTITY_GRID_LOG2: u32 = 24;
const IDENTITY_SAMPLES: u64 = 100_000;

/// Cap, as a power of two, on `(#corrections) · 2^n` in [`best_correction`].
pub const CORRECTION_BUDGET_LOG2: u32 = 22;

/// The degree-`≤ d` polynomial `p` (no constant term) maximizing
/// `|E h · conj e(p)|`, by Gray-code enumeration; `None` when the search
/// space exceeds the budget.
pub fn best_correction(h: &PhaseFunction, d: usize, budget_log2: u32) -> Result<Option<(NonClassicalPoly, f64)>> {
    let n = h.n();
    let monos: Vec<Monomial> = (1u64..1 << n)
        .filter(|s| s.count_ones() as usize <= d)
        .flat_map(|s| {
            let set: Vec<usize> = (0..n).filter(|i| s >> i & 1 == 1).collect();
            (0..=(d - set.len()) as u32).map(move |j| Monomial::new(set.clone(), j))
        })
        .collect();
    if monos.len() + n > budget_log2 as usize {
        return Ok(None);
    }
    let depth = monos.iter().map(|m| m.depth + 1).max().unwrap_or(0).max(h.depth()).max(1);
    let mask = (1u32 << depth) - 1;
    let tables: Vec<Vec<u32>> = monos
        .iter()
        .map(|m| {
            let bits = m.set.iter().fold(0u64, |a, &i| a | 1 << i);
            let step = 1u32 << (depth - m.depth - 1);
            (0..1u64 << n).map(|x| if x & bits == bits { step } else { 0 }).collect()
        })
        .collect();
    let mut cur: Vec<u32> = h.raw().iter().map(|p| p << (depth - h.depth())).collect();
    let score = |t: &[u32]| CycloInt::from_phases(depth, t).to_complex().0.norm();
    let mut chosen = vec![false; monos.len()];
    let (mut best, mut best_code) = (score(&cur), 0u64);
    let mut code = 0u64;
    for i in 1u64..1 << monos.len() {
        let t = i.trailing_zeros() as usize;
        chosen[t] = !chosen[t];
        code ^= 1 << t;
        for (c, v) in cur.iter_mut().zip(&tables[t]) {
            *c = if chosen[t] { c.wrapping_sub(*v) } else { c.wrapping_add(*v) } & mask;
        }
        let s = score(&cur);
        if s > best + 1e-12 {
            best = s;
            best_code = code;
        }
    }
    let picked = monos.into_iter().enumerate().filter(|(i, _)| best_code >> i & 1 == 1).map(|(_, m)| m);
    let p = NonClassicalPoly::new(n, d, TorusValue::ZERO, picked)?;
    Ok(Some((p, best / 2f64.powi(n as i32))))
}

fn combinations(len: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, len: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..len {
            cur.push(i);
            rec(i + 1, len, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, len, r, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constructed(n: usize) -> (PhaseFunction, MultilinearForm) {
        let sigma = MultilinearForm::dot(n).unwrap().lift_strongly_symmetric().unwrap().lift_strongly_symmetric().unwrap();
        (PhaseFunction::from_poly(&integrate(&sigma).unwrap()).unwrap(), sigma)
    }

    #[test]
    fn constructed_instance_completes() {
        let (f, sigma) = constructed(3);
        let t = pipeline_demo(&f, &sigma, 0.9, &PipelineConfig::default());
        assert_eq!(t.status, PipelineStatus::Completed, "{:#?}", t.steps);
        assert!(t.all_checks_pass());
        let s3 = t.steps.iter().find(|s| s.name == "step3").unwrap();
        assert_eq!(s3.data["rho_zero"], true);
        assert!(t.final_correlation.unwrap() >= 0.9);
        assert!(t.polynomial.is_some());
    }

    #[test]
    fn noise_terminates_early() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let f = PhaseFunction::from_signs(3, &(0..8).map(|_| r.gen_bool(0.5)).collect::<Vec<_>>()).unwrap();
        let alpha = MultilinearForm::random(3, 4, &mut r).unwrap();
        let t = pipeline_demo(&f, &alpha, 0.5, &PipelineConfig { floor: 0.5, ..Default::default() });
        assert!(matches!(t.status, PipelineStatus::Terminated { .. }));
        assert_eq!(t.steps.len(), 1);
    }

    #[test]
    fn budget_failure_is_recorded() {
        let (f, sigma) = constructed(3);
        let t = pipeline_demo(&f, &sigma, 0.9, &PipelineConfig { budget_log2: 8, ..Default::default() });
        assert!(matches!(&t.status, PipelineStatus::Failed { step, .. } if step == "correlation"));
    }

    #[test]
    fn step3_on_codim_one() {
        let n = 4;
        let u = Subspace::kernel_of(n, &[GF2Vector::unit(n, 3)]).unwrap();
        // ρ(x, y) = x_3 y_0 ⊕ x_0 y_3 vanishes on U but not off it.
        let rho = MultilinearForm::from_support(n, 2, [[3usize, 0].as_slice(), [0, 3].as_slice()]).unwrap();
        let r = step3_check(&rho, &u).unwrap();
        assert!(r.vanishes_on_u && r.holds);
        assert!(!rho.is_zero());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let a = MultilinearForm::random(n, 3, &mut rng).unwrap();
            let rho = a.xor(&MultilinearForm::extend_from(&a.restrict(&u).unwrap(), &u).unwrap());
            assert!(step3_check(&rho, &u).unwrap().holds);
        }
    }

    #[test]
    fn correction_recovers_low_degree_phase() {
        let q = NonClassicalPoly::new(3, 2, TorusValue::ZERO, [Monomial::new(vec![0], 1), Monomial::new(vec![1, 2], 0)]).unwrap();
        let h = PhaseFunction::from_poly(&q).unwrap();
        let (p, v) = best_correction(&h, 2, 22).unwrap().unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(PhaseFunction::from_poly(&p).unwrap(), h);
        assert!(best_correction(&PhaseFunction::one(6).unwrap(), 4, 10).unwrap().is_none());
    }
}
