//! JSON problem descriptions.
//!
//! A [`ProblemSpec`] is the on-disk form of a problem: regions are given in
//! normalized coordinates and lengths such as the filter radius may be tied
//! to the element size. [`ProblemSpec::build`] resolves it into a
//! [`Problem`] on a concrete mesh.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::Problem;
use crate::darcy::{DarcyModel, DarcyParams};
use crate::elasticity::{MaterialModel, ObjectiveKind, Spring};
use crate::error::{Error, Result};
use crate::mesh::{BoundarySpec, Mesh, OutputPort, PressureSet, Region};
use crate::optimizer::MmaSettings;

/// A length either given directly or as a multiple of the element size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthRule {
    Absolute(f64),
    /// Multiple of `min(Lx/nx, Ly/ny)`.
    MinElem(f64),
    /// Multiple of `max(Lx/nx, Ly/ny)`.
    MaxElem(f64),
}

impl LengthRule {
    pub fn resolve(&self, mesh: &Mesh) -> f64 {
        match *self {
            LengthRule::Absolute(v) => v,
            LengthRule::MinElem(m) => m * mesh.min_edge(),
            LengthRule::MaxElem(m) => m * mesh.max_edge(),
        }
    }

    fn factor(&self) -> f64 {
        match *self {
            LengthRule::Absolute(v) | LengthRule::MinElem(v) | LengthRule::MaxElem(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn offset(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub lx: f64,
    pub ly: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSize {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Factor applied to the objective and its gradient.
    #[serde(default = "unit")]
    pub scale: f64,
    /// Divide by the unscaled objective of the initial design.
    #[serde(default)]
    pub normalize: bool,
}

fn unit() -> f64 {
    1.0
}

/// Darcy parameters with the penetration depth as a length rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DarcySpec {
    pub k_v: f64,
    pub k_s: f64,
    pub eta_k: f64,
    pub beta_k: f64,
    pub eta_h: f64,
    pub beta_h: f64,
    pub r: f64,
    pub delta_s: LengthRule,
    pub p_ext: f64,
}

impl Default for DarcySpec {
    fn default() -> Self {
        let p = DarcyParams::default();
        Self {
            k_v: p.k_v,
            k_s: p.k_s,
            eta_k: p.eta_k,
            beta_k: p.beta_k,
            eta_h: p.eta_h,
            beta_h: p.beta_h,
            r: p.r,
            delta_s: LengthRule::Absolute(p.delta_s),
            p_ext: p.p_ext,
        }
    }
}

impl DarcySpec {
    pub fn params(&self, mesh: &Mesh) -> DarcyParams {
        DarcyParams {
            k_v: self.k_v,
            k_s: self.k_s,
            eta_k: self.eta_k,
            beta_k: self.beta_k,
            eta_h: self.eta_h,
            beta_h: self.beta_h,
            r: self.r,
            delta_s: self.delta_s.resolve(mesh),
            p_ext: self.p_ext,
        }
    }
}

/// Prescribed pressure on the nodes covered by `regions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureBc {
    pub regions: Vec<Region>,
    pub value: f64,
}

/// Zero displacement along `fix` on the nodes covered by `regions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportBc {
    pub regions: Vec<Region>,
    pub fix: Vec<Axis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Pressure sets; a node claimed by an earlier set is dropped from later ones.
    pub pressure: Vec<PressureBc>,
    pub supports: Vec<SupportBc>,
    #[serde(default)]
    pub symmetry: Vec<SupportBc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringSpec {
    pub at: [f64; 2],
    pub axis: Axis,
    pub stiffness: f64,
}

/// Unit dummy load for mechanism objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub at: [f64; 2],
    pub direction: [f64; 2],
}

/// One member of a study: dotted-path overrides applied to the base problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    pub set: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study {
    #[serde(default)]
    pub description: String,
    pub variants: Vec<Variant>,
}

/// A complete problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub geometry: Geometry,
    pub mesh: MeshSize,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub material: MaterialModel,
    #[serde(default)]
    pub darcy: DarcySpec,
    pub filter_radius: LengthRule,
    pub volume_fraction: f64,
    pub iterations: usize,
    pub boundary: BoundaryConfig,
    /// Regions whose elements are held void.
    #[serde(default)]
    pub passive: Vec<Region>,
    #[serde(default)]
    pub springs: Vec<SpringSpec>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
    #[serde(default)]
    pub mma: MmaSettings,
    #[serde(default)]
    pub studies: BTreeMap<String, Study>,
}

/// Reads and validates a problem file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    ProblemSpec::from_json(&text)
}

fn path_error(path: String, message: String) -> Error {
    // serde reports a missing field at the parent; name the field itself.
    if let Some(rest) = message.strip_prefix("missing field `") {
        if let Some(field) = rest.split('`').next() {
            let full = if path.is_empty() || path == "." {
                field.to_string()
            } else {
                format!("{path}.{field}")
            };
            return Error::config(full, message);
        }
    }
    let path = if path.is_empty() { ".".to_string() } else { path };
    Error::config(path, message)
}

impl ProblemSpec {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| path_error(e.path().to_string(), e.inner().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Parses and validates an already decoded JSON value.
    pub fn from_value(value: Value) -> Result<Self> {
        let spec: Self = serde_path_to_error::deserialize(value)
            .map_err(|e| path_error(e.path().to_string(), e.inner().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("problem spec serializes")
    }

    /// Returns a copy with dotted-path overrides applied, e.g.
    /// `("darcy.eta_k", 0.3)` or `("springs.0.stiffness", 1e5)`.
    pub fn with_overrides<'a, I>(&self, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a Value)>,
    {
        let mut value = self.to_value();
        for (path, v) in overrides {
            set_path(&mut value, path, v.clone())?;
        }
        Self::from_value(value)
    }

    /// Expands a named study into labelled problems. Study definitions are
    /// not carried over into the variants.
    pub fn study(&self, name: &str) -> Result<Vec<(String, ProblemSpec)>> {
        let study = self.studies.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.studies.keys().map(String::as_str).collect();
            Error::config(
                "studies",
                format!("no study `{name}` (available: {})", known.join(", ")),
            )
        })?;
        let mut base = self.clone();
        base.studies.clear();
        study
            .variants
            .iter()
            .map(|v| {
                let mut spec = base.with_overrides(v.set.iter().map(|(k, v)| (k.as_str(), v)))?;
                spec.name = format!("{}_{}", self.name, v.label);
                Ok((v.label.clone(), spec))
            })
            .collect()
    }

    /// Checks physical ranges and that every region resolves on the mesh.
    pub fn validate(&self) -> Result<()> {
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be positive and finite, got {v}")))
            }
        };
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
        {
            return Err(Error::config(
                "name",
                "must be non-empty and use only letters, digits, `_`, `-` or `.`",
            ));
        }
        positive("geometry.lx", self.geometry.lx)?;
        positive("geometry.ly", self.geometry.ly)?;
        positive("geometry.thickness", self.geometry.thickness)?;
        if self.mesh.nx == 0 {
            return Err(Error::config("mesh.nx", "must be at least 1"));
        }
        if self.mesh.ny == 0 {
            return Err(Error::config("mesh.ny", "must be at least 1"));
        }
        positive("objective.scale", self.objective.scale)?;
        positive("filter_radius", self.filter_radius.factor())?;
        positive("darcy.delta_s", self.darcy.delta_s.factor())?;
        if !(self.volume_fraction > 0.0 && self.volume_fraction <= 1.0) {
            return Err(Error::config(
                "volume_fraction",
                format!("must lie in (0, 1], got {}", self.volume_fraction),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        self.material
            .validate()
            .map_err(|e| Error::config("material", e.to_string()))?;
        self.mma.validate().map_err(|e| Error::config("mma", e.to_string()))?;
        for (k, s) in self.springs.iter().enumerate() {
            positive(&format!("springs[{k}].stiffness"), s.stiffness)?;
        }
        match (self.objective.kind, &self.output) {
            (ObjectiveKind::CompliantMechanism, None) => {
                return Err(Error::config("output", "mechanism problems need an output port"));
            }
            (_, Some(out)) => {
                let len = out.direction[0].hypot(out.direction[1]);
                if !((len - 1.0).abs() < 1e-12) {
                    return Err(Error::config("output.direction", "must be a unit vector"));
                }
            }
            _ => {}
        }
        for (name, study) in &self.studies {
            if study.variants.is_empty() {
                return Err(Error::config(format!("studies.{name}.variants"), "must not be empty"));
            }
        }
        self.build().map(|_| ())
    }

    /// Resolves regions and length rules on the mesh.
    pub fn build(&self) -> Result<Problem> {
        let g = &self.geometry;
        let mut mesh = Mesh::grid(self.mesh.nx, self.mesh.ny, g.lx, g.ly, g.thickness)
            .map_err(|e| Error::config("mesh", e.to_string()))?;

        let check_region = |path: &str, r: &Region| r.validate().map_err(|m| Error::config(path, m));
        let nodes_of = |path: &str, regions: &[Region], mesh: &Mesh| -> Result<Vec<usize>> {
            let mut ids = Vec::new();
            for (k, r) in regions.iter().enumerate() {
                let p = format!("{path}.regions[{k}]");
                check_region(&p, r)?;
                let sel = mesh.select_nodes(r);
                if sel.is_empty() {
                    return Err(Error::config(p, "selects no nodes"));
                }
                ids.extend(sel.ids);
            }
            ids.sort_unstable();
            ids.dedup();
            Ok(ids)
        };

        let mut passive = Vec::new();
        for (k, r) in self.passive.iter().enumerate() {
            let p = format!("passive[{k}]");
            check_region(&p, r)?;
            let sel = mesh.select_elements(r);
            if sel.is_empty() {
                return Err(Error::config(p, "selects no elements"));
            }
            passive.extend(sel.ids);
        }
        passive.sort_unstable();
        passive.dedup();
        mesh.set_passive(&passive)
            .map_err(|e| Error::config("passive", e.to_string()))?;
        if mesh.active_elems().is_empty() {
            return Err(Error::config("passive", "every element is passive"));
        }

        let mut claimed = vec![false; mesh.node_count()];
        let mut pressure_dirichlet = Vec::new();
        for (k, set) in self.boundary.pressure.iter().enumerate() {
            let path = format!("boundary.pressure[{k}]");
            if !set.value.is_finite() {
                return Err(Error::config(format!("{path}.value"), "must be finite"));
            }
            let nodes: Vec<usize> = nodes_of(&path, &set.regions, &mesh)?
                .into_iter()
                .filter(|&n| !std::mem::replace(&mut claimed[n], true))
                .collect();
            if nodes.is_empty() {
                return Err(Error::config(path, "every node is already claimed by an earlier set"));
            }
            pressure_dirichlet.push(PressureSet {
                nodes,
                value: set.value,
            });
        }
        if pressure_dirichlet.is_empty() {
            return Err(Error::config(
                "boundary.pressure",
                "at least one pressure set is required",
            ));
        }

        let dofs_of = |path: &str, list: &[SupportBc], mesh: &Mesh| -> Result<Vec<usize>> {
            let mut dofs = Vec::new();
            for (k, s) in list.iter().enumerate() {
                let p = format!("{path}[{k}]");
                if s.fix.is_empty() {
                    return Err(Error::config(format!("{p}.fix"), "must name at least one axis"));
                }
                for n in nodes_of(&p, &s.regions, mesh)? {
                    dofs.extend(s.fix.iter().map(|a| 2 * n + a.offset()));
                }
            }
            dofs.sort_unstable();
            dofs.dedup();
            Ok(dofs)
        };
        let displacement_fixed = dofs_of("boundary.supports", &self.boundary.supports, &mesh)?;
        let symmetry_rollers = dofs_of("boundary.symmetry", &self.boundary.symmetry, &mesh)?;

        let point_node = |path: &str, at: [f64; 2], mesh: &Mesh| -> Result<usize> {
            let r = Region::Point(at);
            check_region(path, &r)?;
            mesh.select_nodes(&r)
                .ids
                .first()
                .copied()
                .ok_or_else(|| Error::config(path, format!("no node near normalized point ({}, {})", at[0], at[1])))
        };
        let output_port = match &self.output {
            Some(out) => Some(OutputPort {
                node: point_node("output.at", out.at, &mesh)?,
                direction: out.direction,
            }),
            None => None,
        };
        let springs = self
            .springs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let node = point_node(&format!("springs[{k}].at"), s.at, &mesh)?;
                Ok(Spring {
                    dof: 2 * node + s.axis.offset(),
                    stiffness: s.stiffness,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let bc = BoundarySpec {
            pressure_dirichlet,
            displacement_fixed,
            symmetry_rollers,
            output_port,
        };
        bc.validate(&mesh)
            .map_err(|e| Error::config("boundary", e.to_string()))?;
        let darcy = DarcyModel::new(self.darcy.params(&mesh)).map_err(|e| Error::config("darcy", e.to_string()))?;
        let r_min = self.filter_radius.resolve(&mesh);
        Ok(Problem {
            mesh,
            bc,
            darcy,
            material: self.material,
            springs,
            objective: self.objective.kind,
            scale: self.objective.scale,
            normalize: self.objective.normalize,
            volume_fraction: self.volume_fraction,
            r_min,
        })
    }
}

/// Parses an override value: JSON if it parses, otherwise a bare string.
pub fn parse_override_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Sets `value` at a dotted path. Missing object keys are created so that
/// fields with defaults can be overridden; array indices must exist.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(path, "malformed override path"));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let len = items.len();
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(path, format!("`{part}` is not an array index")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(path, format!("index {idx} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Null if !last => {
                *node = Value::Object(Default::default());
                match node {
                    Value::Object(map) => map
                        .entry(part.to_string())
                        .or_insert_with(|| Value::Object(Default::default())),
                    _ => unreachable!(),
                }
            }
            _ => return Err(Error::config(path, format!("cannot descend into `{part}`"))),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "name": "strip",
            "geometry": {"lx": 0.4, "ly": 0.2, "thickness": 0.01},
            "mesh": {"nx": 8, "ny": 4},
            "objective": {"kind": "compliance"},
            "filter_radius": {"min_elem": 1.5},
            "volume_fraction": 0.4,
            "iterations": 5,
            "boundary": {
                "pressure": [
                    {"regions": [{"edge": {"side": "bottom"}}], "value": 1e5},
                    {"regions": [{"edge": {"side": "top"}}], "value": 0.0}
                ],
                "supports": [{"regions": [{"edge": {"side": "left"}}], "fix": ["x", "y"]}]
            }
        })
    }

    fn expect_config(r: Result<ProblemSpec>, path: &str) {
        match r {
            Err(Error::Config { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected config error at {path}, got {other:?}"),
        }
    }

    #[test]
    fn minimal_spec_builds() {
        let spec = ProblemSpec::from_value(minimal()).unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.mesh.element_count(), 32);
        assert!((p.r_min - 0.075).abs() < 1e-15);
        assert!((p.darcy.params().delta_s - 0.002).abs() < 1e-15);
        // Bottom corners belong to the inlet, so the outlet keeps only the top row.
        assert_eq!(p.bc.pressure_dirichlet[0].nodes.len(), 9);
        assert_eq!(p.bc.pressure_dirichlet[1].nodes.len(), 9);
        assert_eq!(p.bc.displacement_fixed.len(), 10);
    }

    #[test]
    fn missing_volume_fraction_names_field() {
        let mut v = minimal();
        v.as_object_mut().unwrap().remove("volume_fraction");
        expect_config(ProblemSpec::from_value(v), "volume_fraction");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = minimal();
        v["darcy"] = json!({"k_v": 1e-3, "kv": 2});
        expect_config(ProblemSpec::from_value(v), "darcy.kv");
        let mut v = minimal();
        v["extra"] = json!(1);
        assert!(ProblemSpec::from_value(v).unwrap_err().is_config());
    }

    #[test]
    fn physics_errors_carry_paths() {
        let mut v = minimal();
        v["volume_fraction"] = json!(1.5);
        expect_config(ProblemSpec::from_value(v), "volume_fraction");
        let mut v = minimal();
        v["geometry"]["ly"] = json!(-1.0);
        expect_config(ProblemSpec::from_value(v), "geometry.ly");
        let mut v = minimal();
        v["boundary"]["supports"][0]["regions"] = json!([{"point": [1.5, 0.5]}]);
        expect_config(ProblemSpec::from_value(v), "boundary.supports[0].regions[0]");
        let mut v = minimal();
        v["darcy"] = json!({"r": 2.0});
        expect_config(ProblemSpec::from_value(v), "darcy");
    }

    #[test]
    fn mechanism_without_output_is_rejected() {
        let mut v = minimal();
        v["objective"]["kind"] = json!("compliant_mechanism");
        expect_config(ProblemSpec::from_value(v), "output");
    }

    #[test]
    fn overrides_and_studies() {
        let mut v = minimal();
        v["studies"] = json!({
            "vf": {"variants": [
                {"label": "low", "set": {"volume_fraction": 0.2}},
                {"label": "k", "set": {"darcy.eta_k": 0.3, "boundary.pressure.0.value": 2e5}}
            ]}
        });
        let spec = ProblemSpec::from_value(v).unwrap();
        let variants = spec.study("vf").unwrap();
        assert_eq!(variants.len(), 2);
        assert_eq!(variants[0].1.volume_fraction, 0.2);
        assert_eq!(variants[0].1.name, "strip_low");
        assert!(variants[0].1.studies.is_empty());
        assert_eq!(variants[1].1.darcy.eta_k, 0.3);
        assert_eq!(variants[1].1.boundary.pressure[0].value, 2e5);
        assert!(spec.study("nope").unwrap_err().is_config());

        let bad = json!(1);
        assert!(spec.with_overrides([("boundary.pressure.7.value", &bad)]).is_err());
        assert!(spec.with_overrides([("geometry.depth", &bad)]).unwrap_err().is_config());
    }

    #[test]
    fn override_values_parse_as_json_or_string() {
        assert_eq!(parse_override_value("1e5"), json!(1e5));
        assert_eq!(parse_override_value("compliance"), json!("compliance"));
        assert_eq!(parse_override_value("[1,2]"), json!([1, 2]));
    }

    #[test]
    fn round_trips_through_json() {
        let spec = ProblemSpec::from_value(minimal()).unwrap();
        let again = ProblemSpec::from_value(spec.to_value()).unwrap();
        assert_eq!(spec, again);
    }
}
