//! Bundled benchmark problems.

use crate::config::ProblemSpec;
use crate::error::{Error, Result};

const SOURCES: &[(&str, &str)] = &[
    ("verification", include_str!("../problems/verification.json")),
    ("arch", include_str!("../problems/arch.json")),
    ("piston", include_str!("../problems/piston.json")),
    ("crimper", include_str!("../problems/crimper.json")),
    ("inverter", include_str!("../problems/inverter.json")),
];

/// Names of the bundled problems.
pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

/// Raw JSON of a bundled problem. A trailing `.json` is accepted.
pub fn source(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses and validates a bundled problem.
pub fn load(name: &str) -> Result<ProblemSpec> {
    let text = source(name).ok_or_else(|| {
        Error::config(
            "name",
            format!(
                "no bundled problem `{name}` (available: {})",
                names().collect::<Vec<_>>().join(", ")
            ),
        )
    })?;
    ProblemSpec::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::ObjectiveKind;

    #[test]
    fn every_bundled_problem_validates() {
        for name in names() {
            let spec = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(spec.name, name);
            for study in spec.studies.keys() {
                spec.study(study).unwrap_or_else(|e| panic!("{name}/{study}: {e}"));
            }
        }
        assert!(load("nope").unwrap_err().is_config());
        assert!(source("arch.json").is_some());
    }

    #[test]
    fn arch_and_verification_settings() {
        let arch = load("arch").unwrap();
        assert_eq!((arch.mesh.nx, arch.mesh.ny), (200, 100));
        assert_eq!(arch.volume_fraction, 0.25);

        let v = load("verification").unwrap();
        assert_eq!((v.mesh.nx, v.mesh.ny), (10, 7));
        assert_eq!(v.volume_fraction, 0.45);
        let p = v.build().unwrap();
        assert!((p.r_min - 0.12).abs() < 1e-15);
        assert!((p.darcy.params().delta_s - 0.2).abs() < 1e-15);
        assert_eq!(p.bc.displacement_fixed, vec![66, 67, 86, 87]);
    }

    #[test]
    fn crimper_passive_pocket_and_port() {
        let spec = load("crimper").unwrap();
        assert_eq!(spec.objective.kind, ObjectiveKind::CompliantMechanism);
        let p = spec.build().unwrap();
        assert_eq!(p.mesh.passive_elems().len(), 40 * 20);
        let port = p.bc.output_port.unwrap();
        assert_eq!(p.mesh.node_coords()[port.node], [0.09, 0.01]);
        assert_eq!(p.springs[0].dof, 2 * port.node + 1);
    }

    #[test]
    fn inverter_spring_study() {
        let spec = load("inverter").unwrap();
        let ks: Vec<f64> = spec
            .study("springs")
            .unwrap()
            .iter()
            .map(|(_, s)| s.springs[0].stiffness)
            .collect();
        assert_eq!(ks, vec![5e3, 1e5, 1e6]);
    }
}
