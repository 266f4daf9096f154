use std::path::Path;

use clap::Parser;
use gowers_forms::gowers::{self, correlation_with, gowers_norm_with, pipeline_demo, spectrum_search, NormMethod, PhaseFunction, PipelineConfig, PipelineStatus};
use gowers_forms::io::{self, Check, CertificateFile, FormFile, PolynomialFile, Relation};
use gowers_forms::nonclassical::{derivative_identity_sampled, derivative_identity_violation, integrate};
use gowers_forms::par::Exec;
use gowers_forms::rankbias::{arank, best_certificate, bias, rank_bounds, CertificateMismatch, PrankCertificate};
use gowers_forms::regularity::weak_regularize;
use gowers_forms::symmetrize::{
    build_counterexample, counterexample_certificate, extend_symmetry_4, extend_symmetry_5, planted, remove_repeated, symmetrize_odd, symmetrize_pair,
};
use gowers_forms::{MultilinearForm, Permutation, VariableSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::report::{compare, Builder, Report};
use crate::{Cli, CliError, Command, Driver, GenKind, Method};

/// Tuples sampled when the exhaustive derivative check exceeds the budget.
const IDENTITY_SAMPLES: u64 = 100_000;

pub struct Ran {
    pub report: Report,
    pub step_failed: bool,
}

fn parse_err(e: gowers_forms::Error) -> CliError {
    match e {
        gowers_forms::Error::Invalid(m) => CliError::Parse(m),
        other => CliError::Parse(other.to_string()),
    }
}

fn load_form(b: &mut Builder, p: &Path) -> Result<MultilinearForm, CliError> {
    io::form_from_json(&b.read(p)?).map_err(parse_err)
}

fn load_cert(b: &mut Builder, p: &Path) -> Result<PrankCertificate, CliError> {
    io::certificate_from_json(&b.read(p)?).map_err(parse_err)
}

fn load_function(b: &mut Builder, p: &Path) -> Result<PhaseFunction, CliError> {
    io::function_from_json(&b.read(p)?).map_err(parse_err)
}

fn need(v: Option<usize>, flag: &str) -> Result<usize, CliError> {
    v.ok_or_else(|| CliError::Parse(format!("--{flag} is required")))
}

fn value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("plain records serialize")
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gen { .. } => "gen",
        Command::Eval { .. } => "eval",
        Command::Bias { .. } => "bias",
        Command::Arank { .. } => "arank",
        Command::Prank { .. } => "prank",
        Command::Certify { .. } => "certify",
        Command::Verify { .. } => "verify",
        Command::Regularize { .. } => "regularize",
        Command::Symmetrize { .. } => "symmetrize",
        Command::RemoveRepeated { .. } => "remove-repeated",
        Command::Counterexample => "counterexample",
        Command::Integrate { .. } => "integrate",
        Command::Gowers { .. } => "gowers",
        Command::Correlate { .. } => "correlate",
        Command::Spectrum { .. } => "spectrum",
        Command::Pipeline { .. } => "pipeline",
        Command::ReportVerify { .. } => "report-verify",
    }
}

pub fn run(cli: &Cli, args: Vec<String>) -> Result<Ran, CliError> {
    let g = &cli.global;
    let mut b = Builder::new(command_name(&cli.command), args, g.out.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut step_failed = false;
    match &cli.command {
        Command::Gen { kind } => generate(&mut b, *kind, g.n, g.k, &mut rng)?,
        Command::Eval { form, x } => {
            let f = load_form(&mut b, form)?;
            if x.len() != f.k() || x.iter().any(|&v| f.n() < 64 && v >> f.n() != 0) {
                return Err(CliError::Parse(format!("need {} vectors below 2^{}", f.k(), f.n())));
            }
            b.report.outputs = json!({ "value": f.eval_words(x) });
        }
        Command::Bias { form } => {
            let f = load_form(&mut b, form)?;
            let v = bias(&f)?.value();
            b.check(Check::ge("bias ≥ 0", v.to_f64(), 0.0));
            b.check(Check::le("bias ≤ 1", v.to_f64(), 1.0));
            b.report.outputs = json!({ "num": v.num, "log2_den": v.log2_den, "value": v.to_f64() });
        }
        Command::Arank { form } => {
            let f = load_form(&mut b, form)?;
            b.report.outputs = json!({ "arank": value(&arank(&f)?) });
        }
        Command::Prank { form } => {
            let f = load_form(&mut b, form)?;
            let r = rank_bounds(&f)?;
            b.check(Check::le("lower ≤ upper", r.lower as f64, r.upper as f64));
            b.report.outputs = value(&r);
        }
        Command::Certify { form } => {
            let f = load_form(&mut b, form)?;
            let c = best_certificate(&f, "form")?;
            b.check(Check::holds("certificate verifies", c.verify()));
            b.report.outputs = json!({ "terms": c.len() });
            b.artifact("certificate.json", io::certificate_to_json(&c)?);
        }
        Command::Verify { cert, form } => {
            let c = load_cert(&mut b, cert)?;
            let mismatch = match c.check() {
                Ok(()) => Value::Null,
                Err(CertificateMismatch::Coefficient(idx)) => json!({ "coefficient": idx }),
                Err(CertificateMismatch::Structure(s)) => json!({ "structure": s }),
            };
            b.check(Check::holds("certificate verifies", mismatch.is_null()));
            if let Some(p) = form {
                let f = load_form(&mut b, p)?;
                b.check(Check::holds("target equals form", f == c.target));
            }
            b.report.outputs = json!({ "terms": c.len(), "first_mismatch": mismatch });
        }
        Command::Regularize { forms, m, c, d } => {
            let fs = forms.iter().map(|p| load_form(&mut b, p)).collect::<Result<Vec<_>, _>>()?;
            let r = weak_regularize(&fs, *m, *c, *d, &g.policy)?;
            let certs_ok = r.sigma_certificates.iter().chain(&r.pi_certificates).all(|c| c.verify()) && r.expressions.iter().all(|e| e.residual.verify());
            b.check(Check::holds("all certificates verify", certs_ok));
            b.report.outputs = json!({
                "sigmas": r.sigmas.iter().map(|s| FormFile::from(&s.form)).collect::<Vec<_>>(),
                "pis": r.pis.iter().map(|s| FormFile::from(&s.form)).collect::<Vec<_>>(),
                "rhos": r.rhos.iter().map(|s| FormFile::from(&s.form)).collect::<Vec<_>>(),
                "r_bound": r.r_bound.to_string(),
                "expressions": r.expressions.iter().map(|e| json!({ "atoms": value(&e.atoms), "residual_terms": e.residual.len() })).collect::<Vec<_>>(),
            });
            b.report.trace = value(&r.trace);
        }
        Command::Symmetrize { driver, form, cert, ell } => {
            let f = load_form(&mut b, form)?;
            let k = f.k();
            let (i, j, prefix) = match driver {
                Driver::Pair => (0, 1, 2),
                Driver::Odd => (0, 2 * ell, 2 * ell + 1),
                Driver::Extend4 | Driver::Extend5 => (2, 3, 4),
            };
            if j >= k {
                return Err(CliError::Parse(format!("the driver needs arity above {j}, got {k}")));
            }
            let c = match cert {
                Some(p) => load_cert(&mut b, p)?,
                None => best_certificate(&f.xor(&f.permute(&Permutation::transposition(k, i, j))?), "diff")?,
            };
            let r = match driver {
                Driver::Pair => symmetrize_pair(&f, &c, &g.policy)?,
                Driver::Odd => symmetrize_odd(&f, *ell, &c)?,
                Driver::Extend4 => extend_symmetry_4(&f, &c, &g.policy)?,
                Driver::Extend5 => extend_symmetry_5(&f, &c, &g.policy)?,
            };
            b.check(Check::holds(format!("symmetric in the first {prefix} slots"), r.output.is_symmetric_prefix(prefix)));
            b.check(Check::holds("difference certificate verifies", r.verify(&f)));
            b.report.outputs = json!({ "form": FormFile::from(&r.output), "diff_terms": r.diff_certificate.len(), "subspace_codim": r.subspace.as_ref().map(|s| s.codim()) });
            b.report.trace = value(&r.trace);
            b.artifact("form.json", io::form_to_json(&r.output)?);
            b.artifact("certificate.json", io::certificate_to_json(&r.diff_certificate)?);
        }
        Command::RemoveRepeated { form, cert, m } => {
            let f = load_form(&mut b, form)?;
            let c = match cert {
                Some(p) => load_cert(&mut b, p)?,
                None => best_certificate(&f.diagonal_contract()?, "contract")?,
            };
            let r = remove_repeated(&f, *m, &c, &g.policy)?;
            b.check(Check::holds("contraction vanishes", r.output.diagonal_contract()?.is_zero()));
            b.check(Check::holds(format!("symmetric in the first {m} slots"), r.output.is_symmetric_prefix(*m)));
            b.check(Check::holds("difference certificate verifies", r.verify(&f)));
            b.report.outputs = json!({ "form": FormFile::from(&r.output), "diff_terms": r.diff_certificate.len(), "subspace_codim": r.subspace.as_ref().map(|s| s.codim()) });
            b.report.trace = value(&r.trace);
            b.artifact("form.json", io::form_to_json(&r.output)?);
            b.artifact("certificate.json", io::certificate_to_json(&r.diff_certificate)?);
        }
        Command::Counterexample => counterexample(&mut b, g.n.unwrap_or(4))?,
        Command::Integrate { form } => {
            let s = load_form(&mut b, form)?;
            let q = integrate(&s)?;
            let bits = (s.k() as u32 + 1) * s.n() as u32;
            let (holds, method) = if bits <= g.budget {
                (derivative_identity_violation(&q, &s, Exec::default())?.is_none(), "exhaustive")
            } else {
                (derivative_identity_sampled(&q, &s, IDENTITY_SAMPLES, &mut rng)?, "sampled")
            };
            b.check(Check::holds(format!("Δ^k q = |σ|/2 ({method})"), holds));
            b.report.outputs = json!({ "polynomial": PolynomialFile::from(&q) });
            b.artifact("polynomial.json", io::polynomial_to_json(&q)?);
        }
        Command::Gowers { function, method } => {
            let f = load_function(&mut b, function)?;
            let k = need(g.k, "k")?;
            let methods: &[NormMethod] = match method {
                Method::Naive => &[NormMethod::Naive],
                Method::Recursive => &[NormMethod::Recursive],
                Method::Both => &[NormMethod::Naive, NormMethod::Recursive],
            };
            let reports = methods.iter().map(|m| gowers_norm_with(&f, k, *m, g.budget, Exec::default())).collect::<Result<Vec<_>, _>>()?;
            for r in &reports {
                b.check(Check::new(format!("{:?} norm in [0, 1]", r.method), r.value, Relation::Le, 1.0, r.error_bound));
            }
            if let [x, y] = reports.as_slice() {
                b.check(Check::new("naive = recursive", x.value, Relation::Eq, y.value, 1e-9));
            }
            b.report.outputs = json!({
                "k": k,
                "norms": reports.iter().map(|r| json!({ "method": value(&r.method), "value": r.value, "error_bound": r.error_bound, "exact_power": r.exact_power.map(|d| d.to_string()) })).collect::<Vec<_>>(),
            });
        }
        Command::Correlate { function, form } => {
            let f = load_function(&mut b, function)?;
            let a = load_form(&mut b, form)?;
            let r = correlation_with(&f, &a, g.budget, Exec::default())?;
            b.check(Check::new("|corr| ≤ 1", r.abs, Relation::Le, 1.0, r.error_bound));
            b.report.outputs = json!({ "value": [r.value.re, r.value.im], "abs": r.abs, "error_bound": r.error_bound, "exact": r.exact.map(|d| d.to_string()) });
        }
        Command::Spectrum { function, threshold } => {
            let f = load_function(&mut b, function)?;
            let k = need(g.k, "k")?;
            let list = spectrum_search(&f, k, *threshold)?;
            let sorted = list.windows(2).all(|w| w[0].abs >= w[1].abs);
            b.check(Check::holds("sorted by decreasing |corr|", sorted));
            b.report.outputs = json!({
                "k": k,
                "threshold": threshold,
                "forms": list.iter().map(|r| json!({ "form": FormFile::from(&r.form), "abs": r.abs, "value": [r.value.re, r.value.im] })).collect::<Vec<_>>(),
            });
        }
        Command::Pipeline { function, form, c, floor } => {
            let f = load_function(&mut b, function)?;
            let a = load_form(&mut b, form)?;
            let config = PipelineConfig { floor: *floor, policy: g.policy, budget_log2: g.budget, ..PipelineConfig::default() };
            let t = pipeline_demo(&f, &a, *c, &config);
            for ch in t.checks() {
                b.check(ch.clone());
            }
            step_failed = matches!(t.status, PipelineStatus::Failed { .. });
            b.report.outputs = json!({ "status": value(&t.status), "final_correlation": t.final_correlation });
            b.report.trace = value(&t);
            b.artifact("trace.json", io::to_json(&t)?);
            if let Some(q) = &t.polynomial {
                b.artifact("polynomial.json", io::polynomial_to_json(q)?);
            }
        }
        Command::ReportVerify { report } => {
            let original: Report = io::from_json(&b.read(report)?).map_err(parse_err)?;
            let argv = std::iter::once("gowers-forms".to_string()).chain(original.args.iter().cloned());
            let mut replay = Cli::try_parse_from(argv).map_err(|e| CliError::Parse(e.to_string()))?;
            replay.global.out = None;
            let fresh = run(&replay, original.args.clone())?.report;
            let v = compare(&original, &fresh);
            b.check(Check::holds("input hashes match", v.inputs_match));
            b.check(Check::holds("stored verdicts follow from their numbers", v.checks_consistent));
            b.check(Check::holds("recomputation is identical", v.recomputed_identical));
            b.report.outputs = json!({ "verified_command": original.command, "original_pass": original.all_pass(), "mismatches": v.mismatches });
        }
    }
    Ok(Ran { report: b.finish()?, step_failed })
}

fn generate(b: &mut Builder, kind: GenKind, n: Option<usize>, k: Option<usize>, rng: &mut ChaCha8Rng) -> Result<(), CliError> {
    let form_artifact = |b: &mut Builder, f: &MultilinearForm| -> Result<(), CliError> {
        b.report.outputs = json!({ "form": FormFile::from(f) });
        b.artifact("form.json", io::form_to_json(f)?);
        Ok(())
    };
    let with_cert = |b: &mut Builder, f: &MultilinearForm, c: &PrankCertificate| -> Result<(), CliError> {
        b.check(Check::holds("companion certificate verifies", c.verify()));
        b.report.outputs = json!({ "form": FormFile::from(f), "certificate": CertificateFile::from(c) });
        b.artifact("form.json", io::form_to_json(f)?);
        b.artifact("certificate.json", io::certificate_to_json(c)?);
        Ok(())
    };
    match kind {
        GenKind::Zero => form_artifact(b, &MultilinearForm::zero(need(n, "n")?, need(k, "k")?)?),
        GenKind::Random => form_artifact(b, &MultilinearForm::random(need(n, "n")?, need(k, "k")?, rng)?),
        GenKind::Dot => form_artifact(b, &MultilinearForm::dot(need(n, "n")?)?),
        GenKind::Diagonal => form_artifact(b, &MultilinearForm::diagonal(need(n, "n")?, need(k, "k")?)?),
        GenKind::Symmetric => {
            let k = need(k, "k")?;
            form_artifact(b, &MultilinearForm::random(need(n, "n")?, k, rng)?.symmetrized(&VariableSet::prefix(k)))
        }
        GenKind::Counterexample => counterexample(b, n.unwrap_or(4)),
        GenKind::PlantedPair => {
            let (f, c) = planted::pair(need(n, "n")?, k.unwrap_or(4), rng)?;
            with_cert(b, &f, &c)
        }
        GenKind::PlantedExtend4 => {
            let (f, c) = planted::extend4(need(n, "n")?, true, rng)?;
            with_cert(b, &f, &c)
        }
        GenKind::PlantedRepeated => {
            let (f, c) = planted::repeated5(need(n, "n")?, 2, rng)?;
            with_cert(b, &f, &c)
        }
        GenKind::FunctionConstructed => {
            let (n, k) = (need(n, "n")?, k.unwrap_or(4));
            if k < 2 {
                return Err(CliError::Parse("the constructed function needs k ≥ 2".into()));
            }
            let mut sigma = MultilinearForm::dot(n)?;
            for _ in 2..k {
                sigma = sigma.lift_strongly_symmetric()?;
            }
            let q = integrate(&sigma)?;
            let f = PhaseFunction::from_poly(&q)?;
            let c = gowers::correlation(&f, &sigma)?;
            b.check(Check::new("corr(f, σ) = 1", c.value.re, Relation::Eq, 1.0, c.error_bound));
            b.report.outputs = json!({ "form": FormFile::from(&sigma), "polynomial": PolynomialFile::from(&q) });
            b.artifact("function.json", io::function_to_json(&f)?);
            b.artifact("form.json", io::form_to_json(&sigma)?);
            b.artifact("polynomial.json", io::polynomial_to_json(&q)?);
            Ok(())
        }
        GenKind::FunctionNoise => {
            let n = need(n, "n")?;
            let signs: Vec<bool> = (0..1u64 << n.min(24)).map(|_| rng.gen_bool(0.5)).collect();
            let f = PhaseFunction::from_signs(n, &signs)?;
            b.report.outputs = json!({ "n": n });
            b.artifact("function.json", io::function_to_json(&f)?);
            Ok(())
        }
    }
}

fn counterexample(b: &mut Builder, n: usize) -> Result<(), CliError> {
    let sigma = MultilinearForm::dot(n)?;
    let alpha = build_counterexample(n, &sigma)?;
    let cert = counterexample_certificate(&alpha, &sigma)?;
    b.check(Check::holds("symmetric in the first 3 slots", alpha.is_symmetric_prefix(3)));
    b.check(Check::holds("certificate for α ⊕ α∘(2 3) verifies", cert.verify()));
    b.check(Check::le("certificate terms ≤ 2", cert.len() as f64, 2.0));
    let worst = Permutation::all(4)
        .iter()
        .map(|p| Ok(bias(&alpha.xor(&alpha.permute(p)?))?.value().to_f64()))
        .collect::<Result<Vec<f64>, gowers_forms::Error>>()?
        .into_iter()
        .fold(1.0, f64::min);
    b.check(Check::ge("min_π bias(α ⊕ α∘π) ≥ 2^-3", worst, 0.125));
    b.report.outputs = json!({ "form": FormFile::from(&alpha), "certificate": CertificateFile::from(&cert), "min_bias": worst });
    b.artifact("form.json", io::form_to_json(&alpha)?);
    b.artifact("certificate.json", io::certificate_to_json(&cert)?);
    Ok(())
}
