//! Machine-checkable inequalities and the canonical JSON file formats for
//! forms, certificates, polynomials and functions.
//!
//! Every file type has a plain record (`*File`) with sparse, sorted
//! contents; conversion to the in-memory type validates, and conversion back
//! is canonical, so emitting and re-parsing is the identity.

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::MultilinearForm;
use crate::gf2::GF2Vector;
use crate::gowers::PhaseFunction;
use crate::nonclassical::{Monomial, NonClassicalPoly, TorusValue};
use crate::rankbias::{Factor, PrankCertificate, Provenance, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

/// `lhs relation rhs` up to `tol`, with the verdict stored alongside so a
/// report can be re-validated by [`Check::recompute`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub tol: f64,
    pub verdict: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, lhs: f64, relation: Relation, rhs: f64, tol: f64) -> Self {
        let mut c = Self { name: name.into(), lhs, rhs, relation, tol, verdict: false };
        c.verdict = c.recompute();
        c
    }

    pub fn ge(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Ge, rhs, 0.0)
    }

    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Le, rhs, 0.0)
    }

    /// A boolean fact recorded as `value = 1`.
    pub fn holds(name: impl Into<String>, value: bool) -> Self {
        Self::new(name, value as u8 as f64, Relation::Eq, 1.0, 0.0)
    }

    pub fn recompute(&self) -> bool {
        match self.relation {
            Relation::Ge => self.lhs + self.tol >= self.rhs,
            Relation::Le => self.lhs <= self.rhs + self.tol,
            Relation::Eq => (self.lhs - self.rhs).abs() <= self.tol,
        }
    }

    /// The stored verdict agrees with the numbers.
    pub fn consistent(&self) -> bool {
        self.verdict == self.recompute()
    }
}

/// Form file: `{n, k, coeffs}` with the support listed lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormFile {
    pub n: usize,
    pub k: usize,
    pub coeffs: Vec<Vec<usize>>,
}

impl From<&MultilinearForm> for FormFile {
    fn from(f: &MultilinearForm) -> Self {
        Self { n: f.n(), k: f.k(), coeffs: f.support() }
    }
}

impl TryFrom<&FormFile> for MultilinearForm {
    type Error = Error;

    fn try_from(f: &FormFile) -> Result<Self> {
        if let Some(bad) = f.coeffs.iter().find(|c| c.len() != f.k || c.iter().any(|&i| i >= f.n)) {
            return Err(Error::Invalid(format!("index tuple {bad:?} does not fit n = {}, k = {}", f.n, f.k)));
        }
        let mut sorted = f.coeffs.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("repeated index tuple".into()));
        }
        MultilinearForm::from_support(f.n, f.k, f.coeffs.iter().map(|c| c.as_slice()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProvenanceFile {
    Free,
    /// Fixed slots with their vectors as bitmasks, bit `i` for coordinate `i`.
    SliceOf { form_id: String, assignment: Vec<(usize, u64)> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorFile {
    pub vars: Vec<usize>,
    pub form: FormFile,
    pub provenance: ProvenanceFile,
}

/// Certificate file: the target and, per term, its factors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub target_id: String,
    pub n: usize,
    pub k: usize,
    pub target: FormFile,
    pub terms: Vec<Vec<FactorFile>>,
    pub provenance: String,
}

impl From<&PrankCertificate> for CertificateFile {
    fn from(c: &PrankCertificate) -> Self {
        let factor = |f: &Factor| FactorFile {
            vars: f.vars.clone(),
            form: FormFile::from(&f.form),
            provenance: match &f.provenance {
                Provenance::Free => ProvenanceFile::Free,
                Provenance::SliceOf { form_id, assignment } => {
                    ProvenanceFile::SliceOf { form_id: form_id.clone(), assignment: assignment.iter().map(|(s, v)| (*s, v.to_u64())).collect() }
                }
            },
        };
        Self {
            target_id: c.target_id.clone(),
            n: c.target.n(),
            k: c.target.k(),
            target: FormFile::from(&c.target),
            terms: c.terms.iter().map(|t| t.factors.iter().map(factor).collect()).collect(),
            provenance: c.provenance.clone(),
        }
    }
}

impl TryFrom<&CertificateFile> for PrankCertificate {
    type Error = Error;

    fn try_from(c: &CertificateFile) -> Result<Self> {
        let target = MultilinearForm::try_from(&c.target)?;
        if (target.n(), target.k()) != (c.n, c.k) {
            return Err(Error::Invalid("target shape disagrees with the header".into()));
        }
        let mut terms = Vec::with_capacity(c.terms.len());
        for t in &c.terms {
            let mut factors = Vec::with_capacity(t.len());
            for f in t {
                let form = MultilinearForm::try_from(&f.form)?;
                if form.n() != c.n {
                    return Err(Error::DimensionMismatch { expected: c.n, found: form.n() });
                }
                let provenance = match &f.provenance {
                    ProvenanceFile::Free => Provenance::Free,
                    ProvenanceFile::SliceOf { form_id, assignment } => {
                        if assignment.iter().any(|&(_, v)| c.n < 64 && v >> c.n != 0) {
                            return Err(Error::Invalid(format!("slice vector exceeds n = {}", c.n)));
                        }
                        Provenance::SliceOf { form_id: form_id.clone(), assignment: assignment.iter().map(|&(s, v)| (s, GF2Vector::from_u64(c.n, v))).collect() }
                    }
                };
                factors.push(Factor::with_provenance(f.vars.clone(), form, provenance));
            }
            let term = Term::new(factors);
            term.check_structure(c.n, c.k)?;
            terms.push(term);
        }
        Ok(PrankCertificate::new(c.target_id.clone(), target, terms, c.provenance.clone()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusFile {
    pub num: u64,
    pub log2_den: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialFile {
    #[serde(rename = "S")]
    pub s: Vec<usize>,
    pub j: u32,
}

/// Polynomial file: monomials `|x_S| / 2^{j+1}` in increasing order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialFile {
    pub n: usize,
    pub d: usize,
    pub constant: TorusFile,
    pub terms: Vec<MonomialFile>,
}

impl From<&NonClassicalPoly> for PolynomialFile {
    fn from(q: &NonClassicalPoly) -> Self {
        let c = q.constant();
        Self {
            n: q.n(),
            d: q.degree_bound(),
            constant: TorusFile { num: c.num(), log2_den: c.log2_den() },
            terms: q.terms().map(|m| MonomialFile { s: m.set.clone(), j: m.depth }).collect(),
        }
    }
}

impl TryFrom<&PolynomialFile> for NonClassicalPoly {
    type Error = Error;

    fn try_from(p: &PolynomialFile) -> Result<Self> {
        let num = i64::try_from(p.constant.num).map_err(|_| Error::Invalid("constant numerator too large".into()))?;
        let constant = TorusValue::new(num, p.constant.log2_den)?;
        if constant.num() != p.constant.num || constant.log2_den() != p.constant.log2_den {
            return Err(Error::Invalid("constant is not in lowest terms".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &p.terms {
            if !seen.insert((m.s.clone(), m.j)) || m.s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid(format!("monomial {:?} is repeated or unsorted", m.s)));
            }
        }
        NonClassicalPoly::new(p.n, p.d, constant, p.terms.iter().map(|m| Monomial::new(m.s.clone(), m.j)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Values `±1`.
    Pm1,
    /// Values `{num, log2_den}` meaning `e^{2πi num/2^log2_den}`.
    DyadicPhase,
}

/// Function file: `{n, encoding, values}`; the ±1 encoding is used whenever
/// it applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    pub n: usize,
    pub encoding: Encoding,
    pub values: Vec<serde_json::Value>,
}

impl From<&PhaseFunction> for FunctionFile {
    fn from(f: &PhaseFunction) -> Self {
        let size = 1u64 << f.n();
        let (encoding, values) = if f.is_pm1() {
            (Encoding::Pm1, (0..size).map(|x| serde_json::json!(if f.raw()[x as usize] == 0 { 1 } else { -1 })).collect())
        } else {
            let v = (0..size)
                .map(|x| {
                    let t = f.phase(x);
                    serde_json::to_value(TorusFile { num: t.num(), log2_den: t.log2_den() }).expect("plain record")
                })
                .collect();
            (Encoding::DyadicPhase, v)
        };
        Self { n: f.n(), encoding, values }
    }
}

impl TryFrom<&FunctionFile> for PhaseFunction {
    type Error = Error;

    fn try_from(f: &FunctionFile) -> Result<Self> {
        if f.n > 24 {
            return Err(Error::SizeGuard(format!("a table over F_2^{} is too large", f.n)));
        }
        if f.values.len() != 1 << f.n {
            return Err(Error::DimensionMismatch { expected: 1 << f.n, found: f.values.len() });
        }
        match f.encoding {
            Encoding::Pm1 => {
                let signs = f
                    .values
                    .iter()
                    .map(|v| match v.as_i64() {
                        Some(1) => Ok(false),
                        Some(-1) => Ok(true),
                        _ => Err(Error::Invalid(format!("{v} is not ±1"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                PhaseFunction::from_signs(f.n, &signs)
            }
            Encoding::DyadicPhase => {
                let ts = f
                    .values
                    .iter()
                    .map(|v| {
                        let t: TorusFile = serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(e.to_string()))?;
                        let num = i64::try_from(t.num).map_err(|_| Error::Invalid("numerator too large".into()))?;
                        TorusValue::new(num, t.log2_den)
                    })
                    .collect::<Result<Vec<_>>>()?;
                PhaseFunction::from_torus(&crate::nonclassical::TorusFunction::new(f.n, ts)?)
            }
        }
    }
}

/// Canonical pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Invalid(format!("invalid JSON: {e}")))
}

pub fn form_to_json(f: &MultilinearForm) -> Result<String> {
    to_json(&FormFile::from(f))
}

pub fn form_from_json(text: &str) -> Result<MultilinearForm> {
    MultilinearForm::try_from(&from_json::<FormFile>(text)?)
}

pub fn certificate_to_json(c: &PrankCertificate) -> Result<String> {
    to_json(&CertificateFile::from(c))
}

pub fn certificate_from_json(text: &str) -> Result<PrankCertificate> {
    PrankCertificate::try_from(&from_json::<CertificateFile>(text)?)
}

pub fn polynomial_to_json(q: &NonClassicalPoly) -> Result<String> {
    to_json(&PolynomialFile::from(q))
}

pub fn polynomial_from_json(text: &str) -> Result<NonClassicalPoly> {
    NonClassicalPoly::try_from(&from_json::<PolynomialFile>(text)?)
}

pub fn function_to_json(f: &PhaseFunction) -> Result<String> {
    to_json(&FunctionFile::from(f))
}

pub fn function_from_json(text: &str) -> Result<PhaseFunction> {
    PhaseFunction::try_from(&from_json::<FunctionFile>(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonclassical::integrate;
    use crate::rankbias::random_certificate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn check_verdicts() {
        assert!(Check::ge("a", 1.0, 0.5).verdict);
        assert!(!Check::le("b", 1.0, 0.5).verdict);
        assert!(Check::new("c", 1.0, Relation::Eq, 1.0 + 1e-12, 1e-9).verdict);
        let mut tampered = Check::ge("d", 0.1, 0.5);
        tampered.verdict = true;
        assert!(!tampered.consistent());
    }

    #[test]
    fn forms_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, k) in [(3, 4), (5, 2), (2, 1)] {
            let f = MultilinearForm::random(n, k, &mut rng).unwrap();
            let text = form_to_json(&f).unwrap();
            let g = form_from_json(&text).unwrap();
            assert_eq!(f, g);
            assert_eq!(form_to_json(&g).unwrap(), text);
        }
        assert!(form_from_json(r#"{"n":2,"k":2,"coeffs":[[0,2]]}"#).is_err());
        assert!(form_from_json(r#"{"n":2,"k":2,"coeffs":[[0,1],[0,1]]}"#).is_err());
        assert!(form_from_json("{").is_err());
    }

    #[test]
    fn certificates_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_certificate(3, 4, 3, &mut rng).unwrap();
        let text = certificate_to_json(&c).unwrap();
        let d = certificate_from_json(&text).unwrap();
        assert_eq!(c, d);
        assert!(d.verify());
        assert_eq!(certificate_to_json(&d).unwrap(), text);
    }

    #[test]
    fn polynomials_and_functions_round_trip() {
        let sigma = MultilinearForm::dot(3).unwrap().lift_strongly_symmetric().unwrap().lift_strongly_symmetric().unwrap();
        let q = integrate(&sigma).unwrap();
        let text = polynomial_to_json(&q).unwrap();
        assert_eq!(polynomial_from_json(&text).unwrap(), q);
        let f = PhaseFunction::from_poly(&q).unwrap();
        let ftext = function_to_json(&f).unwrap();
        assert!(ftext.contains("dyadic_phase"));
        assert_eq!(function_from_json(&ftext).unwrap(), f);
        let s = PhaseFunction::from_signs(2, &[false, true, true, false]).unwrap();
        let stext = function_to_json(&s).unwrap();
        assert!(stext.contains("pm1"));
        assert_eq!(function_from_json(&stext).unwrap(), s);
        assert!(function_from_json(r#"{"n":1,"encoding":"pm1","values":[1,2]}"#).is_err());
    }
}
