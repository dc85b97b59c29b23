//! Darcy flow with a density-dependent drainage sink.
//!
//! The pressure field solves `−∇·(K(ρ)∇p) + H(ρ)(p − p_ext) = 0` with
//! prescribed pressures on the inlet and outlet sets and zero flux
//! elsewhere. `K` falls smoothly from `k_v` in void to `k_s` in solid and `H`
//! rises from zero to `h_s`, which is chosen so the pressure decays to a
//! fraction `r` of its boundary value over the penetration depth `delta_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::design_stamp;
use crate::linalg::{CsrMatrix, Partition, ReducedSystem, ScatterPattern};
use crate::mesh::{eval_at, gauss_rule, BoundarySpec, Mesh};

/// Raw Darcy parameters as written in a problem file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DarcyParams {
    pub k_v: f64,
    pub k_s: f64,
    pub eta_k: f64,
    pub beta_k: f64,
    pub eta_h: f64,
    pub beta_h: f64,
    pub r: f64,
    pub delta_s: f64,
    /// Pressure the drainage sink relaxes towards.
    #[serde(default)]
    pub p_ext: f64,
}

impl Default for DarcyParams {
    fn default() -> Self {
        Self {
            k_v: 1e-3,
            k_s: 1e-10,
            eta_k: 0.4,
            beta_k: 10.0,
            eta_h: 0.6,
            beta_h: 10.0,
            r: 0.1,
            delta_s: 0.002,
            p_ext: 0.0,
        }
    }
}

/// Validated flow and drainage interpolation with the derived `h_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarcyModel {
    params: DarcyParams,
    h_s: f64,
}

impl DarcyModel {
    pub fn new(params: DarcyParams) -> Result<Self> {
        let p = &params;
        let finite = [
            p.k_v, p.k_s, p.eta_k, p.beta_k, p.eta_h, p.beta_h, p.r, p.delta_s, p.p_ext,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Darcy parameters must be finite"));
        }
        if !(p.k_v > p.k_s && p.k_s > 0.0) {
            return Err(Error::invalid(format!(
                "need k_v > k_s > 0, got k_v={}, k_s={}",
                p.k_v, p.k_s
            )));
        }
        if !(p.beta_k > 0.0 && p.beta_h > 0.0) {
            return Err(Error::invalid("beta_k and beta_h must be positive"));
        }
        for (name, eta) in [("eta_k", p.eta_k), ("eta_h", p.eta_h)] {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {eta}")));
            }
        }
        if !(p.r > 0.0 && p.r < 1.0) {
            return Err(Error::invalid(format!("r must lie in (0, 1), got {}", p.r)));
        }
        if p.delta_s <= 0.0 {
            return Err(Error::invalid(format!("delta_s must be positive, got {}", p.delta_s)));
        }
        let h_s = (p.r.ln() / p.delta_s).powi(2) * p.k_s;
        Ok(Self { params, h_s })
    }

    pub fn params(&self) -> &DarcyParams {
        &self.params
    }

    /// Solid drainage coefficient `(ln r / Δs)² k_s`.
    pub fn h_s(&self) -> f64 {
        self.h_s
    }

    /// Pressure decay rate `√(h_s / k_s)` inside solid material.
    pub fn decay_rate(&self) -> f64 {
        (self.h_s / self.params.k_s).sqrt()
    }

    pub fn p_ext(&self) -> f64 {
        self.params.p_ext
    }
}

fn check_density(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::invalid(format!("density {rho} outside [0, 1]")))
    }
}

/// Normalized smooth step and its derivative; exactly 0 at ρ = 0 and 1 at ρ = 1.
pub fn smooth_step(rho: f64, beta: f64, eta: f64) -> (f64, f64) {
    let den = (beta * eta).tanh() + (beta * (1.0 - eta)).tanh();
    let t = (beta * (rho - eta)).tanh();
    let s = ((beta * eta).tanh() + t) / den;
    let ds = beta * (1.0 - t * t) / den;
    (s, ds)
}

/// Flow coefficient `K(ρ)` and `dK/dρ`.
pub fn flow_coefficient(rho: f64, model: &DarcyModel) -> Result<(f64, f64)> {
    check_density(rho)?;
    Ok(flow_coefficient_unchecked(rho, model))
}

/// Drainage coefficient `H(ρ)` and `dH/dρ`.
pub fn drainage_coefficient(rho: f64, model: &DarcyModel) -> Result<(f64, f64)> {
    check_density(rho)?;
    Ok(drainage_coefficient_unchecked(rho, model))
}

fn flow_coefficient_unchecked(rho: f64, m: &DarcyModel) -> (f64, f64) {
    let p = &m.params;
    let (s, ds) = smooth_step(rho, p.beta_k, p.eta_k);
    (p.k_v * (1.0 - s) + p.k_s * s, (p.k_s - p.k_v) * ds)
}

fn drainage_coefficient_unchecked(rho: f64, m: &DarcyModel) -> (f64, f64) {
    let p = &m.params;
    let (s, ds) = smooth_step(rho, p.beta_h, p.eta_h);
    (m.h_s * s, m.h_s * ds)
}

/// Element conduction `∫BᵀB dV` and mass `∫NᵀN dV` matrices, row-major 4×4.
pub fn flow_element_matrices(coords: &[[f64; 2]; 4], thickness: f64) -> Result<([f64; 16], [f64; 16])> {
    let mut cond = [0.0; 16];
    let mut mass = [0.0; 16];
    for gp in gauss_rule(2)? {
        let pe = eval_at(coords, gp.xi, gp.eta)?;
        let w = gp.weight * pe.det_j * thickness;
        for a in 0..4 {
            for b in 0..4 {
                let g = pe.grad[a][0] * pe.grad[b][0] + pe.grad[a][1] * pe.grad[b][1];
                cond[4 * a + b] += w * g;
                mass[4 * a + b] += w * pe.n[a] * pe.n[b];
            }
        }
    }
    Ok((cond, mass))
}

/// Global flow matrix `A(ρ)` for a one-off evaluation.
pub fn assemble_flow(mesh: &Mesh, rho: &[f64], model: &DarcyModel) -> Result<CsrMatrix> {
    FlowOperator::new(mesh, *model)?.assemble(rho)
}

/// Solves `A p = f` with the prescribed pressures of `bc`; `f` is the
/// drainage source, zero when `p_ext = 0`.
pub fn solve_pressure(a: &CsrMatrix, bc: &BoundarySpec, rhs: Option<&[f64]>) -> Result<PressureState> {
    let partition = pressure_partition(a.nrows(), bc)?;
    let mut reduced = ReducedSystem::new(a, partition)?;
    reduced.factorize(a)?;
    let fixed_values = prescribed_values(reduced.partition(), bc);
    let rhs_free = match rhs {
        Some(f) => reduced.partition().gather_free(f),
        None => vec![0.0; reduced.partition().free().len()],
    };
    let p = reduced.solve(a, &rhs_free, &fixed_values)?;
    Ok(PressureState {
        a: a.clone(),
        p,
        partition: reduced.partition().clone(),
        stamp: 0,
    })
}

fn pressure_partition(n: usize, bc: &BoundarySpec) -> Result<Partition> {
    let fixed: Vec<usize> = bc.pressure_values().map(|(n, _)| n).collect();
    if fixed.is_empty() {
        return Err(Error::Singular(
            "pressure problem has no prescribed nodes; the flow matrix is singular".into(),
        ));
    }
    Partition::new(n, fixed)
}

fn prescribed_values(partition: &Partition, bc: &BoundarySpec) -> Vec<f64> {
    let mut full = vec![0.0; partition.len()];
    for (n, v) in bc.pressure_values() {
        full[n] = v;
    }
    partition.gather_fixed(&full)
}

/// Solved pressure field together with the matrix it came from.
#[derive(Debug, Clone)]
pub struct PressureState {
    pub a: CsrMatrix,
    pub p: Vec<f64>,
    pub partition: Partition,
    /// Hash of the filtered density the state was computed for (0 if unknown).
    pub stamp: u64,
}

impl PressureState {
    /// `‖A_ff p_f + A_fp p_p − f_f‖ / ‖A_fp p_p‖`-style residual of the free rows.
    pub fn free_residual(&self, rhs: Option<&[f64]>) -> f64 {
        let ap = self.a.matvec(&self.p);
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in self.partition.free() {
            let f = rhs.map_or(0.0, |f| f[i]);
            num += (ap[i] - f).powi(2);
            den += f * f;
        }
        // Scale by the prescribed part so an all-zero right-hand side still
        // gives a relative measure.
        let coupling: f64 = self.partition.fixed().iter().map(|&i| ap[i].powi(2)).sum();
        num.sqrt() / (den + coupling).sqrt().max(f64::MIN_POSITIVE)
    }
}

/// Flow assembly for one mesh: reference element matrices and scatter pattern.
///
/// The grid is uniform, so every element shares one conduction and one mass
/// matrix; only the coefficients `K(ρ_e)` and `H(ρ_e)` vary.
#[derive(Debug, Clone)]
pub struct FlowOperator {
    model: DarcyModel,
    pattern: ScatterPattern,
    conduction: [f64; 16],
    mass: [f64; 16],
    conn: Vec<[usize; 4]>,
    n_nodes: usize,
}

impl FlowOperator {
    pub fn new(mesh: &Mesh, model: DarcyModel) -> Result<Self> {
        let (conduction, mass) = flow_element_matrices(&mesh.element_coords(0), mesh.thickness())?;
        let conn = mesh.elem_conn().to_vec();
        let pattern = ScatterPattern::new(mesh.node_count(), mesh.node_count(), &conn, &conn)?;
        Ok(Self {
            model,
            pattern,
            conduction,
            mass,
            conn,
            n_nodes: mesh.node_count(),
        })
    }

    pub fn model(&self) -> &DarcyModel {
        &self.model
    }

    pub fn conduction(&self) -> &[f64; 16] {
        &self.conduction
    }

    pub fn mass(&self) -> &[f64; 16] {
        &self.mass
    }

    pub fn pattern(&self) -> &CsrMatrix {
        self.pattern.pattern()
    }

    fn coefficients(&self, rho: &[f64]) -> Result<Vec<(f64, f64)>> {
        if rho.len() != self.conn.len() {
            return Err(Error::invalid(format!(
                "density has {} entries, mesh has {} elements",
                rho.len(),
                self.conn.len()
            )));
        }
        rho.iter()
            .map(|&r| {
                check_density(r)?;
                Ok((
                    flow_coefficient_unchecked(r, &self.model).0,
                    drainage_coefficient_unchecked(r, &self.model).0,
                ))
            })
            .collect()
    }

    /// `A(ρ) = Σ_e K(ρ_e) C_e + H(ρ_e) M_e`.
    pub fn assemble(&self, rho: &[f64]) -> Result<CsrMatrix> {
        let coef = self.coefficients(rho)?;
        Ok(self.pattern.assemble(|e, out| {
            let (k, h) = coef[e];
            for (o, (c, m)) in out.iter_mut().zip(self.conduction.iter().zip(&self.mass)) {
                *o = k * c + h * m;
            }
        }))
    }

    /// Drainage source `f = Σ_e H(ρ_e) p_ext M_e 1`; empty when `p_ext = 0`.
    pub fn drainage_source(&self, rho: &[f64]) -> Result<Option<Vec<f64>>> {
        let p_ext = self.model.p_ext();
        if p_ext == 0.0 {
            return Ok(None);
        }
        let coef = self.coefficients(rho)?;
        let mut f = vec![0.0; self.n_nodes];
        for (nodes, &(_, h)) in self.conn.iter().zip(&coef) {
            for a in 0..4 {
                let row: f64 = self.mass[4 * a..4 * a + 4].iter().sum();
                f[nodes[a]] += h * p_ext * row;
            }
        }
        Ok(Some(f))
    }

    /// `(dA_e/dρ_e)(p_e − p_ext)`: element residual derivative for element `e`.
    pub fn residual_derivative(&self, e: usize, rho_e: f64, p: &[f64]) -> [f64; 4] {
        let (_, dk) = flow_coefficient_unchecked(rho_e, &self.model);
        let (_, dh) = drainage_coefficient_unchecked(rho_e, &self.model);
        let p_ext = self.model.p_ext();
        let nodes = self.conn[e];
        let pe = nodes.map(|n| p[n]);
        let mut out = [0.0; 4];
        for a in 0..4 {
            for b in 0..4 {
                out[a] += dk * self.conduction[4 * a + b] * pe[b] + dh * self.mass[4 * a + b] * (pe[b] - p_ext);
            }
        }
        out
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        self.conn[e]
    }
}

/// Pressure solver bound to one mesh and boundary specification. The
/// factorization of `A_ff` is kept so adjoint solves reuse it.
#[derive(Debug)]
pub struct FlowAnalysis {
    op: FlowOperator,
    reduced: ReducedSystem,
    fixed_values: Vec<f64>,
    current: Option<u64>,
    solves: usize,
}

impl FlowAnalysis {
    pub fn new(mesh: &Mesh, model: DarcyModel, bc: &BoundarySpec) -> Result<Self> {
        bc.validate(mesh)?;
        let op = FlowOperator::new(mesh, model)?;
        let partition = pressure_partition(mesh.node_count(), bc)?;
        let fixed_values = prescribed_values(&partition, bc);
        let reduced = ReducedSystem::new(op.pattern(), partition)?;
        Ok(Self {
            op,
            reduced,
            fixed_values,
            current: None,
            solves: 0,
        })
    }

    pub fn operator(&self) -> &FlowOperator {
        &self.op
    }

    pub fn partition(&self) -> &Partition {
        self.reduced.partition()
    }

    /// Number of forward pressure solves performed.
    pub fn solve_count(&self) -> usize {
        self.solves
    }

    /// Assembles, factorizes and solves for the pressure at filtered density `rho`.
    pub fn solve(&mut self, rho: &[f64]) -> Result<PressureState> {
        let a = self.op.assemble(rho)?;
        self.reduced.factorize(&a)?;
        let source = self.op.drainage_source(rho)?;
        let rhs_free = match &source {
            Some(f) => self.reduced.partition().gather_free(f),
            None => vec![0.0; self.reduced.partition().free().len()],
        };
        let p = self.reduced.solve(&a, &rhs_free, &self.fixed_values)?;
        let stamp = design_stamp(rho);
        self.current = Some(stamp);
        self.solves += 1;
        Ok(PressureState {
            a,
            p,
            partition: self.reduced.partition().clone(),
            stamp,
        })
    }

    /// Solves `A_ff x = rhs` with the factor from the last `solve`.
    pub fn solve_adjoint(&self, rhs_free: &[f64]) -> Result<Vec<f64>> {
        if self.current.is_none() {
            return Err(Error::invalid(
                "adjoint pressure solve requested before a forward solve",
            ));
        }
        self.reduced.solve_free(rhs_free)
    }

    /// Design stamp of the density the current factor belongs to.
    pub fn factor_stamp(&self) -> Option<u64> {
        self.current
    }

    /// The free-free block of the last assembled matrix.
    pub fn free_block(&self) -> &CsrMatrix {
        self.reduced.free_block()
    }
}
