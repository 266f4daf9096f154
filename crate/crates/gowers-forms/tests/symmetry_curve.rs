//! Correlation against bias of `α ⊕ α∘π` for phases built from symmetric
//! forms and increasingly perturbed α. The points are compared to a golden
//! file, written on the first run.

use std::path::PathBuf;

use gowers_forms::gowers::{symmetry_argument_check, PhaseFunction};
use gowers_forms::nonclassical::integrate;
use gowers_forms::rankbias::random_certificate;
use gowers_forms::{MultilinearForm, Permutation, VariableSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const FLOOR: f64 = 0.05;

fn curve() -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    let mut points = Vec::new();
    for k in [3usize, 4] {
        // Strongly symmetric: the dot product lifted to arity k, plus an orbit sum.
        let lifted = (2..k).fold(MultilinearForm::dot(3).unwrap(), |s, _| s.lift_strongly_symmetric().unwrap());
        let sigma = lifted.xor(&MultilinearForm::random(3, k, &mut rng).unwrap().symmetrized(&VariableSet::prefix(k)));
        let f = PhaseFunction::from_poly(&integrate(&sigma).unwrap()).unwrap();
        for r in 0..=3 {
            let alpha = if r == 0 { sigma.clone() } else { sigma.xor(&random_certificate(3, k, r, &mut rng).unwrap().target) };
            for (a, b) in [(0, 1), (0, k - 1)] {
                let pi = Permutation::transposition(k, a, b);
                let rep = symmetry_argument_check(&f, &alpha, &pi, FLOOR).unwrap();
                assert_ne!(rep.holds, Some(false), "k = {k}, r = {r}, π = ({a} {b}): c = {}, bias = {}", rep.c, rep.bias);
                points.push(json!({
                    "k": k,
                    "perturbation_terms": r,
                    "swap": [a, b],
                    "c": format!("{:.12}", rep.c),
                    "bias": rep.bias.to_string(),
                    "threshold": rep.threshold.map(|t| format!("{t:.12e}")),
                }));
            }
        }
    }
    points
}

#[test]
fn bias_dominates_the_threshold_curve() {
    let points = curve();
    assert!(points.iter().any(|p| p["threshold"].is_string()), "no point cleared the floor");
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/symmetry_curve.json");
    let doc = json!({ "floor": FLOOR, "points": points });
    match std::fs::read_to_string(&path) {
        Ok(text) => assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), doc, "curve differs from {}", path.display()),
        Err(_) => {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())).unwrap();
        }
    }
}
