//! Adjoint gradients of the full pipeline against central differences.

use presstopo::config::parse_override_value;
use presstopo::{check_gradients, library, Problem};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_design(problem: &Problem, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = &problem.mesh;
    let x = (0..mesh.element_count())
        .map(|e| {
            if mesh.is_passive(e) {
                0.0
            } else {
                rng.random_range(0.2..0.9)
            }
        })
        .collect();
    let active = mesh.active_elems();
    let ids = sample(&mut rng, active.len(), 20)
        .into_iter()
        .map(|k| active[k])
        .collect();
    (x, ids)
}

fn small_crimper() -> Problem {
    let spec = library::load("crimper").unwrap();
    let nx = parse_override_value("50");
    let ny = parse_override_value("25");
    spec.with_overrides([("mesh.nx", &nx), ("mesh.ny", &ny)])
        .unwrap()
        .build()
        .unwrap()
}

#[test]
fn compliance_gradient_matches_finite_differences() {
    let problem = library::load("verification").unwrap().build().unwrap();
    let (x, ids) = random_design(&problem, 7);
    let check = check_gradients(&problem, &x, &ids, 1e-6, true).unwrap();
    assert!(check.underflow.is_empty(), "{:?}", check.underflow);
    assert!(check.median_error() < 1e-4, "median {:e}", check.median_error());
    assert!(check.max_error() < 1e-3, "max {:e}", check.max_error());
}

#[test]
fn mechanism_gradient_matches_finite_differences() {
    let problem = small_crimper();
    let (x, ids) = random_design(&problem, 11);
    let check = check_gradients(&problem, &x, &ids, 1e-6, true).unwrap();
    assert!(check.median_error() < 1e-4, "median {:e}", check.median_error());
    assert!(check.max_error() < 1e-3, "max {:e}", check.max_error());
}

#[test]
fn dropping_load_terms_breaks_agreement() {
    // The ablation gradient is not the derivative of the objective; the gap
    // is exactly the omitted load part.
    let problem = small_crimper();
    let (x, ids) = random_design(&problem, 11);
    let full = check_gradients(&problem, &x, &ids, 1e-6, true).unwrap();
    let partial = check_gradients(&problem, &x, &ids, 1e-6, false).unwrap();
    assert!(partial.median_error() > 1e-2, "median {:e}", partial.median_error());
    for k in 0..ids.len() {
        assert!((full.fd[k] - partial.fd[k]).abs() <= 1e-12 * full.fd[k].abs().max(1.0));
    }
}
