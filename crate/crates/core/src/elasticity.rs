//! Plane-stress linear elasticity with modified SIMP interpolation and
//! output springs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::design_stamp;
use crate::linalg::{dot, CsrMatrix, Partition, ReducedSystem, ScatterPattern};
use crate::mesh::{eval_at, gauss_rule, BoundarySpec, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialModel {
    pub e0: f64,
    pub e_min: f64,
    pub zeta: f64,
    pub nu: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self {
            e0: 3e9,
            e_min: 3e4,
            zeta: 3.0,
            nu: 0.4,
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e0.is_finite() && self.e_min > 0.0 && self.e0 > self.e_min) {
            return Err(Error::invalid(format!(
                "need E0 > E_min > 0, got E0={}, E_min={}",
                self.e0, self.e_min
            )));
        }
        if !(self.zeta >= 1.0 && self.zeta.is_finite()) {
            return Err(Error::invalid(format!("penalization must be >= 1, got {}", self.zeta)));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::invalid(format!(
                "Poisson ratio must lie in [0, 0.5), got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// `E(ρ) = E_min(1 − ρ^ζ) + E0 ρ^ζ` and its derivative.
pub fn young_modulus(rho: f64, mat: &MaterialModel) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("density {rho} outside [0, 1]")));
    }
    Ok(young_modulus_unchecked(rho, mat))
}

fn young_modulus_unchecked(rho: f64, mat: &MaterialModel) -> (f64, f64) {
    let pz = rho.powf(mat.zeta);
    let e = mat.e_min * (1.0 - pz) + mat.e0 * pz;
    let de = if rho == 0.0 && mat.zeta > 1.0 {
        0.0
    } else {
        mat.zeta * rho.powf(mat.zeta - 1.0) * (mat.e0 - mat.e_min)
    };
    (e, de)
}

/// Plane-stress stiffness of one bilinear quad, row-major 8×8 in the DOF
/// order `(x0, y0, x1, y1, x2, y2, x3, y3)`.
pub fn element_stiffness(e: f64, nu: f64, coords: &[[f64; 2]; 4], t: f64) -> Result<[f64; 64]> {
    let c = e / (1.0 - nu * nu);
    let d = [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]];
    let mut ke = [0.0; 64];
    for gp in gauss_rule(2)? {
        let pe = eval_at(coords, gp.xi, gp.eta)?;
        let w = gp.weight * pe.det_j * t;
        let mut b = [[0.0; 8]; 3];
        for a in 0..4 {
            let [gx, gy] = pe.grad[a];
            b[0][2 * a] = gx;
            b[1][2 * a + 1] = gy;
            b[2][2 * a] = gy;
            b[2][2 * a + 1] = gx;
        }
        let mut db = [[0.0; 8]; 3];
        for r in 0..3 {
            for k in 0..8 {
                db[r][k] = (0..3).map(|s| d[r][s] * b[s][k]).sum();
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                ke[8 * i + j] += w * (0..3).map(|r| b[r][i] * db[r][j]).sum::<f64>();
            }
        }
    }
    Ok(ke)
}

/// Grounded spring on one displacement DOF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring {
    pub dof: usize,
    pub stiffness: f64,
}

/// Stiffness assembly for one mesh. All elements share the unit-modulus
/// matrix of the uniform grid.
#[derive(Debug, Clone)]
pub struct StiffnessOperator {
    material: MaterialModel,
    pattern: ScatterPattern,
    ke0: [f64; 64],
    dofs: Vec<[usize; 8]>,
    springs: Vec<Spring>,
}

impl StiffnessOperator {
    pub fn new(mesh: &Mesh, material: MaterialModel, springs: &[Spring]) -> Result<Self> {
        material.validate()?;
        let ke0 = element_stiffness(1.0, material.nu, &mesh.element_coords(0), mesh.thickness())?;
        let dofs: Vec<[usize; 8]> = (0..mesh.element_count()).map(|e| mesh.element_dofs(e)).collect();
        for s in springs {
            if s.dof >= mesh.dof_count() {
                return Err(Error::invalid(format!("spring dof {} out of range", s.dof)));
            }
            if !(s.stiffness.is_finite() && s.stiffness >= 0.0) {
                return Err(Error::invalid(format!(
                    "spring stiffness must be non-negative, got {}",
                    s.stiffness
                )));
            }
        }
        let pattern = ScatterPattern::new(mesh.dof_count(), mesh.dof_count(), &dofs, &dofs)?;
        Ok(Self {
            material,
            pattern,
            ke0,
            dofs,
            springs: springs.to_vec(),
        })
    }

    pub fn material(&self) -> &MaterialModel {
        &self.material
    }

    /// Unit-modulus element stiffness.
    pub fn ke0(&self) -> &[f64; 64] {
        &self.ke0
    }

    pub fn springs(&self) -> &[Spring] {
        &self.springs
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        self.dofs[e]
    }

    pub fn pattern(&self) -> &CsrMatrix {
        self.pattern.pattern()
    }

    /// `Σ_e E(ρ_e) k_e⁰` without springs.
    pub fn assemble_elements(&self, rho: &[f64]) -> Result<CsrMatrix> {
        if rho.len() != self.dofs.len() {
            return Err(Error::invalid(format!(
                "density has {} entries, mesh has {} elements",
                rho.len(),
                self.dofs.len()
            )));
        }
        let moduli = rho
            .iter()
            .map(|&r| young_modulus(r, &self.material).map(|(e, _)| e))
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.pattern.assemble(|e, out| {
            for (o, k) in out.iter_mut().zip(&self.ke0) {
                *o = moduli[e] * k;
            }
        }))
    }

    pub fn add_springs(&self, k: &mut CsrMatrix) -> Result<()> {
        for s in &self.springs {
            k.add_to(s.dof, s.dof, s.stiffness)?;
        }
        Ok(())
    }

    pub fn remove_springs(&self, k: &mut CsrMatrix) -> Result<()> {
        for s in &self.springs {
            k.add_to(s.dof, s.dof, -s.stiffness)?;
        }
        Ok(())
    }

    pub fn assemble(&self, rho: &[f64]) -> Result<CsrMatrix> {
        let mut k = self.assemble_elements(rho)?;
        self.add_springs(&mut k)?;
        Ok(k)
    }

    /// `u_eᵀ k_e⁰ w_e` for element `e`.
    pub fn element_form(&self, e: usize, u: &[f64], w: &[f64]) -> f64 {
        let d = self.dofs[e];
        let ue = d.map(|i| u[i]);
        let we = d.map(|i| w[i]);
        let mut s = 0.0;
        for i in 0..8 {
            let row: f64 = (0..8).map(|j| self.ke0[8 * i + j] * we[j]).sum();
            s += ue[i] * row;
        }
        s
    }
}

/// Global stiffness `K(ρ)` including springs.
pub fn assemble_stiffness(mesh: &Mesh, rho: &[f64], mat: &MaterialModel, springs: &[Spring]) -> Result<CsrMatrix> {
    StiffnessOperator::new(mesh, *mat, springs)?.assemble(rho)
}

/// Solves `K u = F` with homogeneous constraints on `constrained`.
pub fn solve_displacement(k: &CsrMatrix, f: &[f64], constrained: &[usize]) -> Result<Vec<f64>> {
    if f.len() != k.nrows() {
        return Err(Error::invalid("force vector does not match the stiffness dimension"));
    }
    let partition = Partition::new(k.nrows(), constrained.iter().copied())?;
    let mut sys = ReducedSystem::new(k, partition)?;
    sys.factorize(k)?;
    let rhs = sys.partition().gather_free(f);
    let fixed = vec![0.0; sys.partition().fixed().len()];
    sys.solve(k, &rhs, &fixed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Compliance,
    CompliantMechanism,
}

/// `uᵀ K u`.
pub fn compliance(k: &CsrMatrix, u: &[f64]) -> f64 {
    dot(u, &k.matvec(u))
}

/// `vᵀ K u`.
pub fn mutual_strain_energy(k: &CsrMatrix, u: &[f64], v: &[f64]) -> f64 {
    dot(v, &k.matvec(u))
}

/// Scaled objective: `s·uᵀKu` for compliance, `−s·vᵀKu / uᵀKu` for mechanisms.
pub fn objectives(u: &[f64], v: Option<&[f64]>, k: &CsrMatrix, kind: ObjectiveKind, scale: f64) -> Result<f64> {
    let two_se = compliance(k, u);
    match kind {
        ObjectiveKind::Compliance => Ok(scale * two_se),
        ObjectiveKind::CompliantMechanism => {
            let v = v.ok_or_else(|| Error::invalid("mechanism objective needs the dummy-load displacement"))?;
            if !(two_se.is_finite() && two_se > 0.0) {
                return Err(Error::DegenerateObjective(format!(
                    "strain energy is {two_se:e}; the pressure load has no path into the structure"
                )));
            }
            Ok(-scale * mutual_strain_energy(k, u, v) / two_se)
        }
    }
}

/// Solved displacement state for one design.
#[derive(Debug, Clone)]
pub struct ElasticState {
    pub k: CsrMatrix,
    pub u: Vec<f64>,
    /// Dummy-load displacement (mechanism problems only).
    pub v: Option<Vec<f64>>,
    pub springs: Vec<Spring>,
    pub partition: Partition,
    pub stamp: u64,
}

/// Displacement solver bound to one mesh and support set; keeps the
/// factorization of `K_ff` for adjoint solves.
#[derive(Debug)]
pub struct ElasticAnalysis {
    op: StiffnessOperator,
    reduced: ReducedSystem,
    current: Option<CsrMatrix>,
    stamp: Option<u64>,
    solves: usize,
}

impl ElasticAnalysis {
    pub fn new(mesh: &Mesh, material: MaterialModel, bc: &BoundarySpec, springs: &[Spring]) -> Result<Self> {
        bc.validate(mesh)?;
        let constrained = bc.constrained_dofs();
        for s in springs {
            if constrained.binary_search(&s.dof).is_ok() {
                return Err(Error::invalid(format!("spring on constrained dof {}", s.dof)));
            }
        }
        check_rigid_modes(mesh, &constrained, springs)?;
        let op = StiffnessOperator::new(mesh, material, springs)?;
        let partition = Partition::new(mesh.dof_count(), constrained)?;
        let reduced = ReducedSystem::new(op.pattern(), partition)?;
        Ok(Self {
            op,
            reduced,
            current: None,
            stamp: None,
            solves: 0,
        })
    }

    pub fn operator(&self) -> &StiffnessOperator {
        &self.op
    }

    pub fn partition(&self) -> &Partition {
        self.reduced.partition()
    }

    /// Number of displacement factorizations performed.
    pub fn solve_count(&self) -> usize {
        self.solves
    }

    /// Assembles and factorizes `K(ρ)`.
    pub fn factorize(&mut self, rho: &[f64]) -> Result<CsrMatrix> {
        let k = self.op.assemble(rho)?;
        self.reduced.factorize(&k)?;
        self.current = Some(k.clone());
        self.stamp = Some(design_stamp(rho));
        self.solves += 1;
        Ok(k)
    }

    /// Design stamp of the density the current factor belongs to.
    pub fn factor_stamp(&self) -> Option<u64> {
        self.stamp
    }

    /// Solves `K x = f` with the current factor; constrained entries are zero.
    pub fn solve_with(&self, f: &[f64]) -> Result<Vec<f64>> {
        let k = self
            .current
            .as_ref()
            .ok_or_else(|| Error::invalid("displacement solve requested before factorization"))?;
        let part = self.reduced.partition();
        let rhs = part.gather_free(f);
        let fixed = vec![0.0; part.fixed().len()];
        self.reduced.solve(k, &rhs, &fixed)
    }

    /// Full state solve: `K u = F` and optionally `K v = F_d`.
    pub fn solve(&mut self, rho: &[f64], f: &[f64], dummy: Option<&[f64]>) -> Result<ElasticState> {
        let k = self.factorize(rho)?;
        let u = self.solve_with(f)?;
        let v = dummy.map(|fd| self.solve_with(fd)).transpose()?;
        Ok(ElasticState {
            k,
            u,
            v,
            springs: self.op.springs().to_vec(),
            partition: self.reduced.partition().clone(),
            stamp: self.stamp.expect("set by factorize"),
        })
    }
}

/// Rejects support sets that leave a rigid-body mode free; such systems are
/// singular however the densities are chosen.
fn check_rigid_modes(mesh: &Mesh, constrained: &[usize], springs: &[Spring]) -> Result<()> {
    let (cx, cy) = (mesh.lx() / 2.0, mesh.ly() / 2.0);
    let scale = mesh.lx().max(mesh.ly());
    let restrained = constrained
        .iter()
        .copied()
        .chain(springs.iter().filter(|s| s.stiffness > 0.0).map(|s| s.dof));
    // Gram matrix of the three rigid modes restricted to restrained DOFs.
    let mut g = [[0.0; 3]; 3];
    for d in restrained {
        let [x, y] = mesh.node_coords()[d / 2];
        let m = if d % 2 == 0 {
            [1.0, 0.0, -(y - cy) / scale]
        } else {
            [0.0, 1.0, (x - cx) / scale]
        };
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += m[i] * m[j];
            }
        }
    }
    let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
        + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
    let trace = g[0][0] + g[1][1] + g[2][2];
    if !(det > 1e-12 * trace.powi(3).max(f64::MIN_POSITIVE)) {
        return Err(Error::Singular(
            "supports do not restrain all rigid-body motions; the stiffness matrix is singular".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    const UNIT: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

    #[test]
    fn modulus_endpoints_and_midpoint() {
        let m = MaterialModel::default();
        assert_eq!(young_modulus(0.0, &m).unwrap().0, 3e4);
        assert_eq!(young_modulus(1.0, &m).unwrap().0, 3e9);
        let e = young_modulus(0.5, &m).unwrap().0;
        assert!((e - (3e4 + 0.125 * (3e9 - 3e4))).abs() < 1e-6);
        let (_, de) = young_modulus(0.5, &m).unwrap();
        assert!((de - 3.0 * 0.25 * (3e9 - 3e4)).abs() < 1e-6);
        assert!(young_modulus(1.5, &m).is_err());
    }

    #[test]
    fn unit_square_stiffness_matches_closed_form() {
        let ke = element_stiffness(1.0, 0.3, &UNIT, 1.0).unwrap();
        let row0 = [
            45.0 / 91.0,
            5.0 / 28.0,
            -55.0 / 182.0,
            -5.0 / 364.0,
            -45.0 / 182.0,
            -5.0 / 28.0,
            5.0 / 91.0,
            5.0 / 364.0,
        ];
        let row1 = [
            5.0 / 28.0,
            45.0 / 91.0,
            5.0 / 364.0,
            5.0 / 91.0,
            -5.0 / 28.0,
            -45.0 / 182.0,
            -5.0 / 364.0,
            -55.0 / 182.0,
        ];
        for j in 0..8 {
            assert!((ke[j] - row0[j]).abs() < 1e-15, "row 0 col {j}");
            assert!((ke[8 + j] - row1[j]).abs() < 1e-15, "row 1 col {j}");
        }
    }

    #[test]
    fn element_stiffness_is_symmetric_with_three_rigid_modes() {
        let coords = [[0.0, 0.0], [0.002, 0.0], [0.002, 0.001], [0.0, 0.001]];
        let ke = element_stiffness(2.0e9, 0.4, &coords, 0.01).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(ke[8 * i + j], ke[8 * j + i]);
            }
        }
        let apply = |v: [f64; 8]| -> Vec<f64> { (0..8).map(|i| (0..8).map(|j| ke[8 * i + j] * v[j]).sum()).collect() };
        let tx = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let ty = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let mut rot = [0.0; 8];
        for (a, [x, y]) in coords.into_iter().enumerate() {
            rot[2 * a] = -y;
            rot[2 * a + 1] = x;
        }
        let kmax = ke.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for mode in [tx, ty, rot] {
            assert!(norm(&apply(mode)) < 1e-12 * kmax);
        }
        // Five positive eigenvalues: the quadratic form is positive on
        // displacement patterns orthogonal to the rigid modes.
        let stretch = [-1.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        let hourglass = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        for mode in [stretch, hourglass] {
            let q: f64 = apply(mode).iter().zip(mode).map(|(a, b)| a * b).sum();
            assert!(q > 0.0);
        }
        let ke2 = element_stiffness(4.0e9, 0.4, &coords, 0.02).unwrap();
        for k in 0..64 {
            assert!((ke2[k] - 4.0 * ke[k]).abs() <= 1e-9 * kmax);
        }
    }

    #[test]
    fn single_solid_element_matches_element_matrix() {
        let mesh = Mesh::grid(1, 1, 1.0, 1.0, 1.0).unwrap();
        let mat = MaterialModel {
            e0: 1.0,
            e_min: 1e-9,
            zeta: 3.0,
            nu: 0.3,
        };
        let k = assemble_stiffness(&mesh, &[1.0], &mat, &[]).unwrap();
        let ke = element_stiffness(1.0, 0.3, &UNIT, 1.0).unwrap();
        let dofs = mesh.element_dofs(0);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(k.get(dofs[i], dofs[j]), ke[8 * i + j]);
            }
        }
    }

    #[test]
    fn spring_adds_to_diagonal_and_round_trips() {
        let mesh = Mesh::grid(2, 2, 0.2, 0.2, 0.01).unwrap();
        let mat = MaterialModel::default();
        let rho = [0.3, 0.6, 0.9, 0.2];
        let springs = [Spring { dof: 9, stiffness: 1e4 }];
        let op = StiffnessOperator::new(&mesh, mat, &springs).unwrap();
        let bare = op.assemble_elements(&rho).unwrap();
        let mut k = op.assemble(&rho).unwrap();
        assert_eq!(k.get(9, 9) - bare.get(9, 9), 1e4);
        let with = k.clone();
        op.remove_springs(&mut k).unwrap();
        op.add_springs(&mut k).unwrap();
        assert_eq!(k, with);
    }

    #[test]
    fn stiffness_is_linear_in_modulus() {
        let mesh = Mesh::grid(3, 2, 0.3, 0.2, 0.01).unwrap();
        let m1 = MaterialModel {
            e0: 1e9,
            e_min: 1e4,
            zeta: 3.0,
            nu: 0.3,
        };
        let m2 = MaterialModel {
            e0: 2e9,
            e_min: 2e4,
            ..m1
        };
        let rho = [0.1, 0.5, 0.7, 0.9, 0.3, 1.0];
        let k1 = assemble_stiffness(&mesh, &rho, &m1, &[]).unwrap();
        let k2 = assemble_stiffness(&mesh, &rho, &m2, &[]).unwrap();
        for (a, b) in k1.values().iter().zip(k2.values()) {
            assert!((2.0 * a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn unconstrained_stiffness_annihilates_translations() {
        let mesh = Mesh::grid(4, 3, 0.4, 0.3, 0.01).unwrap();
        let rho: Vec<f64> = (0..12).map(|e| 0.1 + 0.07 * e as f64).collect();
        let k = assemble_stiffness(&mesh, &rho, &MaterialModel::default(), &[]).unwrap();
        let n = mesh.dof_count();
        for c in 0..2 {
            let t: Vec<f64> = (0..n).map(|d| if d % 2 == c { 1.0 } else { 0.0 }).collect();
            let r = k.matvec(&t);
            assert!(r.iter().all(|v| v.abs() < 1e-9 * k.max_abs() * n as f64));
        }
    }

    #[test]
    fn cantilever_square_matches_dense_solve() {
        // Left edge clamped, unit downward load at the top-right node.
        let mesh = Mesh::grid(1, 1, 1.0, 1.0, 1.0).unwrap();
        let mat = MaterialModel {
            e0: 1.0,
            e_min: 1e-9,
            zeta: 3.0,
            nu: 0.3,
        };
        let k = assemble_stiffness(&mesh, &[1.0], &mat, &[]).unwrap();
        let mut f = vec![0.0; 8];
        f[5] = -1.0;
        let u = solve_displacement(&k, &f, &[0, 1, 6, 7]).unwrap();
        // Dense oracle on the free block (dofs 2, 3, 4, 5).
        let free = [2, 3, 4, 5];
        let mut a = [[0.0; 5]; 4];
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                a[r][c] = k.get(i, j);
            }
            a[r][4] = f[i];
        }
        for p in 0..4 {
            for r in p + 1..4 {
                let m = a[r][p] / a[p][p];
                for c in p..5 {
                    a[r][c] -= m * a[p][c];
                }
            }
        }
        let mut x = [0.0; 4];
        for r in (0..4).rev() {
            x[r] = (a[r][4] - (r + 1..4).map(|c| a[r][c] * x[c]).sum::<f64>()) / a[r][r];
        }
        for (r, &i) in free.iter().enumerate() {
            assert!((u[i] - x[r]).abs() < 1e-12 * x[r].abs().max(1.0));
        }
        assert_eq!([u[0], u[1], u[6], u[7]], [0.0; 4]);
        assert!(dot(&u, &f) > 0.0);
    }

    #[test]
    fn zero_load_gives_zero_displacement() {
        let mesh = Mesh::grid(2, 1, 0.2, 0.1, 0.01).unwrap();
        let k = assemble_stiffness(&mesh, &[1.0, 1.0], &MaterialModel::default(), &[]).unwrap();
        let u = solve_displacement(&k, &[0.0; 12], &[0, 1, 6, 7]).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_supports_are_singular() {
        let mesh = Mesh::grid(2, 2, 0.2, 0.2, 0.01).unwrap();
        let bc = BoundarySpec {
            displacement_fixed: vec![0, 2, 4],
            ..Default::default()
        };
        let err = ElasticAnalysis::new(&mesh, MaterialModel::default(), &bc, &[]).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn spring_on_constrained_dof_is_rejected() {
        let mesh = Mesh::grid(2, 2, 0.2, 0.2, 0.01).unwrap();
        let bc = BoundarySpec {
            displacement_fixed: vec![0, 1, 5],
            ..Default::default()
        };
        let err = ElasticAnalysis::new(
            &mesh,
            MaterialModel::default(),
            &bc,
            &[Spring { dof: 5, stiffness: 1.0 }],
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn objective_values() {
        let mesh = Mesh::grid(2, 1, 0.2, 0.1, 0.01).unwrap();
        let k = assemble_stiffness(&mesh, &[1.0, 1.0], &MaterialModel::default(), &[]).unwrap();
        let zero = vec![0.0; 12];
        assert_eq!(
            objectives(&zero, None, &k, ObjectiveKind::Compliance, 1.0).unwrap(),
            0.0
        );
        let err = objectives(&zero, Some(&zero), &k, ObjectiveKind::CompliantMechanism, 1e4);
        assert!(matches!(err, Err(Error::DegenerateObjective(_))));
        let u: Vec<f64> = (0..12).map(|i| (i as f64).sin() * 1e-6).collect();
        let v: Vec<f64> = (0..12).map(|i| (i as f64).cos() * 1e-6).collect();
        let (a, b) = (mutual_strain_energy(&k, &u, &v), mutual_strain_energy(&k, &v, &u));
        assert!((a - b).abs() <= 1e-12 * a.abs());
        let f = objectives(&u, Some(&v), &k, ObjectiveKind::CompliantMechanism, 1e4).unwrap();
        assert!((f + 1e4 * a / compliance(&k, &u)).abs() < 1e-9 * f.abs());
    }
}
