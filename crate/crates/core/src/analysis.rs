//! The analysis pipeline shared by the optimizer loop and the
//! finite-difference oracle: filter, pressure solve, load conversion,
//! displacement solve(s), objective and gradients.

use crate::darcy::{DarcyModel, FlowAnalysis, PressureState};
use crate::elasticity::{
    compliance, mutual_strain_energy, objectives, ElasticAnalysis, ElasticState, MaterialModel, ObjectiveKind, Spring,
};
use crate::error::{Error, Result};
use crate::filter::{DensityField, DensityFilter};
use crate::load_transfer::{assemble_conversion, resultant, ConversionMatrix};
use crate::mesh::{BoundarySpec, Mesh};
use crate::sensitivity::{
    central_differences, cm_gradient, compliance_gradient, AdjointSet, FdEstimate, GradientReport, SensitivityContext,
};

/// A fully resolved optimization problem on one mesh.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub bc: BoundarySpec,
    pub darcy: DarcyModel,
    pub material: MaterialModel,
    pub springs: Vec<Spring>,
    pub objective: ObjectiveKind,
    /// Factor applied to the objective and its gradient.
    pub scale: f64,
    /// Divide the objective by its magnitude at the initial design, so the
    /// first iterate reports exactly `scale`.
    pub normalize: bool,
    pub volume_fraction: f64,
    /// Absolute filter radius.
    pub r_min: f64,
}

impl Problem {
    /// Uniform design at the target volume fraction, zero on passive elements.
    pub fn initial_design(&self) -> Vec<f64> {
        (0..self.mesh.element_count())
            .map(|e| {
                if self.mesh.is_passive(e) {
                    0.0
                } else {
                    self.volume_fraction
                }
            })
            .collect()
    }
}

/// Solve counters used to check the nested-loop ordering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub pressure_solves: usize,
    pub elastic_solves: usize,
    /// Displacement solves that ran against a pressure field from another design.
    pub ordering_violations: usize,
}

/// States and scalar results of one analysis.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub density: DensityField,
    pub pressure: PressureState,
    pub forces: Vec<f64>,
    pub elastic: ElasticState,
    pub objective: f64,
    /// Scale `objective` was computed with.
    pub scale: f64,
    /// `uᵀKu` (unscaled).
    pub two_se: f64,
    /// `vᵀKu` (unscaled), mechanisms only.
    pub mse: Option<f64>,
    /// `V(ρ) / V_total`.
    pub volume: f64,
    /// Constraint value `V(ρ) / (V*·V_total) − 1`.
    pub constraint: f64,
    pub resultant: [f64; 2],
    /// Output displacement along the port direction, mechanisms only.
    pub delta: Option<f64>,
}

/// Gradients with respect to the design variables.
#[derive(Debug, Clone)]
pub struct DesignGradients {
    /// Gradients with respect to filtered densities.
    pub report: GradientReport,
    pub adjoint: AdjointSet,
    pub objective: Vec<f64>,
    pub constraint: Vec<f64>,
}

/// Reusable solvers for one problem.
#[derive(Debug)]
pub struct Evaluator<'a> {
    problem: &'a Problem,
    filter: DensityFilter,
    flow: FlowAnalysis,
    conversion: ConversionMatrix,
    elastic: ElasticAnalysis,
    counters: Counters,
    scale: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a Problem) -> Result<Self> {
        let mesh = &problem.mesh;
        if !(problem.volume_fraction > 0.0 && problem.volume_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "volume fraction must lie in (0, 1], got {}",
                problem.volume_fraction
            )));
        }
        if !(problem.scale.is_finite() && problem.scale > 0.0) {
            return Err(Error::invalid(format!(
                "objective scale must be positive, got {}",
                problem.scale
            )));
        }
        if problem.objective == ObjectiveKind::CompliantMechanism && problem.bc.output_port.is_none() {
            return Err(Error::invalid("mechanism problems need an output port"));
        }
        Ok(Self {
            problem,
            filter: DensityFilter::new(mesh, problem.r_min)?,
            flow: FlowAnalysis::new(mesh, problem.darcy, &problem.bc)?,
            conversion: assemble_conversion(mesh)?,
            elastic: ElasticAnalysis::new(mesh, problem.material, &problem.bc, &problem.springs)?,
            counters: Counters::default(),
            scale: problem.scale,
        })
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    pub fn filter(&self) -> &DensityFilter {
        &self.filter
    }

    pub fn conversion(&self) -> &ConversionMatrix {
        &self.conversion
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Objective scale in effect; starts at the problem's scale.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Replaces the objective scale for later analyses and gradients.
    pub fn set_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("objective scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(())
    }

    /// Runs the state solves for design `x`: pressure first, then the
    /// displacement fields driven by it.
    pub fn analyze(&mut self, x: &[f64]) -> Result<Analysis> {
        let mesh = &self.problem.mesh;
        for (e, &v) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("design variable {e} = {v} outside [0, 1]")));
            }
        }
        let density = DensityField::new(x.to_vec(), &self.filter)?;
        let rho = &density.physical;

        let pressure = self.flow.solve(rho)?;
        self.counters.pressure_solves += 1;
        let forces = self.conversion.nodal_forces(&pressure.p)?;

        let dummy = self
            .problem
            .bc
            .output_port
            .map(|port| port.dummy_load(mesh.dof_count()));
        let dummy = match self.problem.objective {
            ObjectiveKind::CompliantMechanism => dummy,
            ObjectiveKind::Compliance => None,
        };
        let elastic = self.elastic.solve(rho, &forces, dummy.as_deref())?;
        self.counters.elastic_solves += 1;
        if elastic.stamp != pressure.stamp {
            self.counters.ordering_violations += 1;
        }

        let objective = objectives(
            &elastic.u,
            elastic.v.as_deref(),
            &elastic.k,
            self.problem.objective,
            self.scale,
        )?;
        let two_se = compliance(&elastic.k, &elastic.u);
        let mse = elastic
            .v
            .as_ref()
            .map(|v| mutual_strain_energy(&elastic.k, &elastic.u, v));
        let volume = rho.iter().sum::<f64>() / rho.len() as f64;
        let delta = match self.problem.objective {
            ObjectiveKind::CompliantMechanism => self.problem.bc.output_port.map(|p| p.displacement(&elastic.u)),
            ObjectiveKind::Compliance => None,
        };
        Ok(Analysis {
            constraint: volume / self.problem.volume_fraction - 1.0,
            resultant: resultant(&forces),
            density,
            pressure,
            forces,
            elastic,
            objective,
            scale: self.scale,
            two_se,
            mse,
            volume,
            delta,
        })
    }

    /// Objective value only.
    pub fn objective(&mut self, x: &[f64]) -> Result<f64> {
        Ok(self.analyze(x)?.objective)
    }

    /// Adjoint gradients at the design of `analysis`, which must be the most
    /// recent call to [`analyze`](Self::analyze).
    pub fn gradients(&self, analysis: &Analysis, include_load: bool) -> Result<DesignGradients> {
        let ctx = SensitivityContext {
            mesh: &self.problem.mesh,
            flow: &self.flow,
            conversion: &self.conversion,
            elastic: &self.elastic,
            volume_fraction: self.problem.volume_fraction,
        };
        let rho = &analysis.density.physical;
        let scale = analysis.scale;
        let (report, adjoint) = match self.problem.objective {
            ObjectiveKind::Compliance => {
                compliance_gradient(&ctx, &analysis.pressure, &analysis.elastic, rho, scale, include_load)?
            }
            ObjectiveKind::CompliantMechanism => {
                cm_gradient(&ctx, &analysis.pressure, &analysis.elastic, rho, scale, include_load)?
            }
        };
        let objective = self.filter.chain_rule(&report.total)?;
        let constraint = self.filter.chain_rule(&report.volume)?;
        Ok(DesignGradients {
            report,
            adjoint,
            objective,
            constraint,
        })
    }
}

/// Central-difference gradient of the full pipeline objective with respect
/// to design variables `ids` (each perturbation re-solves every state).
pub fn fd_oracle(problem: &Problem, x: &[f64], ids: &[usize], step: f64) -> Result<FdEstimate> {
    for &i in ids {
        if i >= problem.mesh.element_count() {
            return Err(Error::invalid(format!("element {i} out of range")));
        }
        if problem.mesh.is_passive(i) {
            return Err(Error::invalid(format!("element {i} is passive")));
        }
        if x[i] - step < 0.0 || x[i] + step > 1.0 {
            return Err(Error::invalid(format!(
                "perturbing element {i} by {step} leaves [0, 1]"
            )));
        }
    }
    let mut eval = Evaluator::new(problem)?;
    central_differences(|xp| eval.objective(xp), x, ids, step)
}

/// Adjoint and central-difference gradients at the same coordinates.
#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub ids: Vec<usize>,
    pub adjoint: Vec<f64>,
    pub fd: Vec<f64>,
    /// `|adjoint − fd| / |fd|`, with `|fd|` floored at 1e-12 of the largest entry.
    pub relative_error: Vec<f64>,
    /// Coordinates whose difference quotient was lost in rounding.
    pub underflow: Vec<usize>,
}

impl GradientCheck {
    pub fn max_error(&self) -> f64 {
        self.relative_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn median_error(&self) -> f64 {
        let mut e = self.relative_error.clone();
        e.sort_by(f64::total_cmp);
        match e.len() {
            0 => 0.0,
            n if n % 2 == 1 => e[n / 2],
            n => 0.5 * (e[n / 2 - 1] + e[n / 2]),
        }
    }
}

/// Compares the adjoint design gradient with central differences of the
/// full pipeline at design `x`.
pub fn check_gradients(
    problem: &Problem,
    x: &[f64],
    ids: &[usize],
    step: f64,
    include_load: bool,
) -> Result<GradientCheck> {
    let mut eval = Evaluator::new(problem)?;
    let analysis = eval.analyze(x)?;
    let grads = eval.gradients(&analysis, include_load)?;
    let fd = fd_oracle(problem, x, ids, step)?;
    let adjoint: Vec<f64> = ids.iter().map(|&i| grads.objective[i]).collect();
    let floor = 1e-12 * fd.gradient.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let relative_error = adjoint
        .iter()
        .zip(&fd.gradient)
        .map(|(a, f)| (a - f).abs() / f.abs().max(floor).max(f64::MIN_POSITIVE))
        .collect();
    Ok(GradientCheck {
        ids: ids.to_vec(),
        adjoint,
        fd: fd.gradient,
        relative_error,
        underflow: fd.underflow,
    })
}
