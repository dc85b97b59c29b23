//! Adjoint gradients of the compliance and mechanism objectives with respect
//! to filtered densities, including the terms that arise because the
//! pressure load moves with the design.
//!
//! With `K u = −H p`, `A p = f` and (for mechanisms) `K v = F_d`, the
//! multipliers are
//!
//! ```text
//! K λ1 = −∂f/∂u,   A_ff λ2 = −(Hᵀ λ1)_f,   K λ3 = −∂f/∂v
//! ```
//!
//! and the gradient splits into an elastic part
//! `∂f/∂ρ_e + λ1ᵀ K'_e u + λ3ᵀ K'_e v` and a load part `λ2ᵀ A'_e (p − p_ext)`.
//! All multipliers vanish on prescribed entries.

use rayon::prelude::*;

use crate::darcy::{FlowAnalysis, PressureState};
use crate::elasticity::{compliance, mutual_strain_energy, young_modulus, ElasticAnalysis, ElasticState};
use crate::error::{Error, Result};
use crate::filter::design_stamp;
use crate::linalg::norm;
use crate::load_transfer::ConversionMatrix;
use crate::mesh::Mesh;

/// Adjoint multipliers on the full index ranges (zeros on prescribed entries).
#[derive(Debug, Clone)]
pub struct AdjointSet {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Option<Vec<f64>>,
    /// `‖A_ff λ2 + (Hᵀλ1)_f‖ / ‖(Hᵀλ1)_f‖`.
    pub lambda2_residual: f64,
    /// For compliance, `‖λ1 + 2u‖ / ‖2u‖`; the self-adjoint shortcut.
    pub lambda1_deviation: Option<f64>,
}

/// Per-element gradient with respect to filtered densities.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub elastic: Vec<f64>,
    /// Load-sensitivity part; all zeros when excluded.
    pub load: Vec<f64>,
    /// `elastic + load`.
    pub total: Vec<f64>,
    /// Load part that was computed but left out of `total` (ablation runs).
    pub excluded_load: Option<Vec<f64>>,
    pub volume: Vec<f64>,
}

impl GradientReport {
    fn new(elastic: Vec<f64>, load: Vec<f64>, include_load: bool, volume: Vec<f64>) -> Self {
        let (load, excluded_load) = if include_load {
            (load, None)
        } else {
            (vec![0.0; elastic.len()], Some(load))
        };
        let total = elastic.iter().zip(&load).map(|(a, b)| a + b).collect();
        Self {
            elastic,
            load,
            total,
            excluded_load,
            volume,
        }
    }

    /// Load part whether or not it entered `total`.
    pub fn load_terms(&self) -> &[f64] {
        self.excluded_load.as_deref().unwrap_or(&self.load)
    }
}

/// Solvers and operators the gradients are evaluated with. Their current
/// factorizations must belong to the same design as the states.
#[derive(Clone, Copy)]
pub struct SensitivityContext<'a> {
    pub mesh: &'a Mesh,
    pub flow: &'a FlowAnalysis,
    pub conversion: &'a ConversionMatrix,
    pub elastic: &'a ElasticAnalysis,
    pub volume_fraction: f64,
}

impl SensitivityContext<'_> {
    fn check_states(&self, pressure: &PressureState, elastic: &ElasticState, rho: &[f64]) -> Result<()> {
        let stamp = design_stamp(rho);
        let stale = [
            ("pressure state", Some(pressure.stamp)),
            ("displacement state", Some(elastic.stamp)),
            ("pressure factorization", self.flow.factor_stamp()),
            ("stiffness factorization", self.elastic.factor_stamp()),
        ]
        .into_iter()
        .find(|(_, s)| *s != Some(stamp));
        if let Some((what, _)) = stale {
            return Err(Error::Consistency(format!(
                "{what} was computed for a different design than the one supplied"
            )));
        }
        Ok(())
    }

    /// Solves for `λ2` given `λ1` and returns `(λ2, relative residual, load part)`.
    fn load_part(
        &self,
        lambda1: &[f64],
        pressure: &PressureState,
        rho: &[f64],
        scale: f64,
    ) -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let ht = self.conversion.transpose_apply(lambda1)?;
        let part = self.flow.partition();
        let rhs: Vec<f64> = part.free().iter().map(|&i| -ht[i]).collect();
        let lambda2_free = self.flow.solve_adjoint(&rhs)?;
        let residual = {
            let r = self.flow.free_block().matvec(&lambda2_free);
            let diff: Vec<f64> = r.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            norm(&diff) / norm(&rhs).max(f64::MIN_POSITIVE)
        };
        let lambda2 = part.scatter(&lambda2_free, &vec![0.0; part.fixed().len()]);
        let op = self.flow.operator();
        let load = (0..rho.len())
            .into_par_iter()
            .map(|e| {
                let dr = op.residual_derivative(e, rho[e], &pressure.p);
                let nodes = op.element_nodes(e);
                scale * (0..4).map(|a| lambda2[nodes[a]] * dr[a]).sum::<f64>()
            })
            .collect();
        Ok((lambda2, residual, load))
    }

    /// Elastic part from the explicit derivative weights:
    /// `Σ_(a,b) c_ab · dE_e · a_eᵀ k_e⁰ b_e`.
    fn elastic_part(&self, rho: &[f64], terms: &[(f64, &[f64], &[f64])], scale: f64) -> Result<Vec<f64>> {
        let op = self.elastic.operator();
        let mat = *op.material();
        (0..rho.len())
            .into_par_iter()
            .map(|e| {
                let (_, de) = young_modulus(rho[e], &mat)?;
                let s: f64 = terms.iter().map(|&(c, a, b)| c * op.element_form(e, a, b)).sum();
                Ok(scale * de * s)
            })
            .collect()
    }
}

fn scaled(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| c * x).collect()
}

/// Gradient of `scale · uᵀKu`.
pub fn compliance_gradient(
    ctx: &SensitivityContext,
    pressure: &PressureState,
    elastic: &ElasticState,
    rho: &[f64],
    scale: f64,
    include_load: bool,
) -> Result<(GradientReport, AdjointSet)> {
    ctx.check_states(pressure, elastic, rho)?;
    let u = &elastic.u;
    // K λ1 = −∂(uᵀKu)/∂u = −2Ku.
    let ku = elastic.k.matvec(u);
    let lambda1 = ctx.elastic.solve_with(&scaled(&ku, -2.0))?;
    let deviation = {
        let d: Vec<f64> = lambda1.iter().zip(u).map(|(l, x)| l + 2.0 * x).collect();
        norm(&d) / (2.0 * norm(u)).max(f64::MIN_POSITIVE)
    };
    // ∂f/∂ρ_e explicit = uᵀK'u; adjoint term λ1ᵀK'u.
    let elastic_part = ctx.elastic_part(rho, &[(1.0, u, u), (1.0, &lambda1, u)], scale)?;
    let (lambda2, residual, load) = ctx.load_part(&lambda1, pressure, rho, scale)?;
    let report = GradientReport::new(
        elastic_part,
        load,
        include_load,
        volume_gradient(ctx.mesh, ctx.volume_fraction),
    );
    Ok((
        report,
        AdjointSet {
            lambda1,
            lambda2,
            lambda3: None,
            lambda2_residual: residual,
            lambda1_deviation: Some(deviation),
        },
    ))
}

/// Gradient of `−scale · vᵀKu / uᵀKu`.
pub fn cm_gradient(
    ctx: &SensitivityContext,
    pressure: &PressureState,
    elastic: &ElasticState,
    rho: &[f64],
    scale: f64,
    include_load: bool,
) -> Result<(GradientReport, AdjointSet)> {
    ctx.check_states(pressure, elastic, rho)?;
    let u = &elastic.u;
    let v = elastic
        .v
        .as_ref()
        .ok_or_else(|| Error::invalid("mechanism gradient needs the dummy-load displacement"))?;
    let two_se = compliance(&elastic.k, u);
    if !(two_se.is_finite() && two_se > 0.0) {
        return Err(Error::DegenerateObjective(format!(
            "strain energy is {two_se:e}; the pressure load has no path into the structure"
        )));
    }
    let mse = mutual_strain_energy(&elastic.k, u, v);
    let ku = elastic.k.matvec(u);
    let kv = elastic.k.matvec(v);
    // K λ1 = Kv/(2SE) − 2·MSE·Ku/(2SE)², K λ3 = Ku/(2SE).
    let rhs1: Vec<f64> = kv
        .iter()
        .zip(&ku)
        .map(|(a, b)| a / two_se - 2.0 * mse * b / (two_se * two_se))
        .collect();
    let lambda1 = ctx.elastic.solve_with(&rhs1)?;
    let lambda3 = ctx.elastic.solve_with(&scaled(&ku, 1.0 / two_se))?;
    // Explicit derivative of −MSE/(2SE) at fixed u, v:
    //   −vᵀK'u/(2SE) + MSE·uᵀK'u/(2SE)².
    let elastic_part = ctx.elastic_part(
        rho,
        &[
            (-1.0 / two_se, v, u),
            (mse / (two_se * two_se), u, u),
            (1.0, &lambda1, u),
            (1.0, &lambda3, v),
        ],
        scale,
    )?;
    let (lambda2, residual, load) = ctx.load_part(&lambda1, pressure, rho, scale)?;
    let report = GradientReport::new(
        elastic_part,
        load,
        include_load,
        volume_gradient(ctx.mesh, ctx.volume_fraction),
    );
    Ok((
        report,
        AdjointSet {
            lambda1,
            lambda2,
            lambda3: Some(lambda3),
            lambda2_residual: residual,
            lambda1_deviation: None,
        },
    ))
}

/// Gradient of the constraint `V(ρ) / (V*·V_total)`: element volume over
/// `V*·V_total`, identical for every element of a uniform grid.
pub fn volume_gradient(mesh: &Mesh, volume_fraction: f64) -> Vec<f64> {
    let n = mesh.element_count();
    vec![1.0 / (volume_fraction * n as f64); n]
}

/// Central-difference estimate at selected coordinates.
#[derive(Debug, Clone)]
pub struct FdEstimate {
    pub ids: Vec<usize>,
    pub gradient: Vec<f64>,
    /// Elements whose objective change was lost in rounding.
    pub underflow: Vec<usize>,
}

/// Central differences of `f` at coordinates `ids` of `x`. An estimate is
/// flagged when `|f(x+h) − f(x−h)|` is within a few ulps of `|f(x)|`.
pub fn central_differences<F>(mut f: F, x: &[f64], ids: &[usize], step: f64) -> Result<FdEstimate>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let f0 = f(x)?;
    let mut gradient = Vec::with_capacity(ids.len());
    let mut underflow = Vec::new();
    let mut xp = x.to_vec();
    for &i in ids {
        if i >= x.len() {
            return Err(Error::invalid(format!("coordinate {i} out of range")));
        }
        xp[i] = x[i] + step;
        let fp = f(&xp)?;
        xp[i] = x[i] - step;
        let fm = f(&xp)?;
        xp[i] = x[i];
        let delta = fp - fm;
        if delta.abs() <= 16.0 * f64::EPSILON * f0.abs().max(f64::MIN_POSITIVE) {
            underflow.push(i);
        }
        gradient.push(delta / (2.0 * step));
    }
    Ok(FdEstimate {
        ids: ids.to_vec(),
        gradient,
        underflow,
    })
}
