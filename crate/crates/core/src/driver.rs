//! The outer optimization loop.

use log::{debug, info};
use serde::Serialize;

use crate::analysis::{Analysis, Counters, Evaluator, Problem};
use crate::config::ProblemSpec;
use crate::darcy::PressureState;
use crate::elasticity::ElasticState;
use crate::error::{Error, Result};
use crate::filter::DensityField;
use crate::linalg::norm;
use crate::optimizer::{mma_update, MmaState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Include the pressure-load terms in the objective gradient.
    pub include_load_sensitivities: bool,
    /// Overrides the iteration budget of the spec.
    pub iterations: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            include_load_sensitivities: true,
            iterations: None,
        }
    }
}

/// One row of the convergence history. Values describe the design entering
/// iteration `iter`; `max_dx` is the change the update then made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub volume: f64,
    pub fx: f64,
    pub fy: f64,
    /// Output displacement, mechanisms only.
    pub delta: Option<f64>,
    pub max_dx: f64,
    /// Norm of the elastic (non-load) part of the objective gradient.
    pub elastic_norm: f64,
    /// Norm of the load part, whether or not it was used in the update.
    pub load_norm: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConvergenceHistory {
    pub records: Vec<IterationRecord>,
}

impl ConvergenceHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }
}

/// Bookkeeping gathered over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub solves: Counters,
    pub mma_bracketing_violations: usize,
    pub mma_feasibility_violations: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub problem: Problem,
    pub history: ConvergenceHistory,
    /// Analysis of the design left after the last update.
    pub final_analysis: Analysis,
    /// Element-wise gradient parts at the last iteration, if any ran.
    pub last_gradients: Option<(Vec<f64>, Vec<f64>)>,
    pub counters: RunCounters,
}

impl RunResult {
    pub fn density(&self) -> &DensityField {
        &self.final_analysis.density
    }

    pub fn pressure(&self) -> &PressureState {
        &self.final_analysis.pressure
    }

    pub fn elastic(&self) -> &ElasticState {
        &self.final_analysis.elastic
    }

    pub fn objective(&self) -> f64 {
        self.final_analysis.objective
    }
}

/// Runs the budgeted number of MMA iterations from the uniform design.
pub fn run(spec: &ProblemSpec, options: &RunOptions) -> Result<RunResult> {
    let problem = spec.build()?;
    let iterations = options.iterations.unwrap_or(spec.iterations);
    let (history, final_analysis, last_gradients, counters) = optimize(&problem, spec, iterations, options)?;
    Ok(RunResult {
        name: spec.name.clone(),
        problem,
        history,
        final_analysis,
        last_gradients,
        counters,
    })
}

type Outcome = (ConvergenceHistory, Analysis, Option<(Vec<f64>, Vec<f64>)>, RunCounters);

fn optimize(problem: &Problem, spec: &ProblemSpec, iterations: usize, options: &RunOptions) -> Result<Outcome> {
    let mut eval = Evaluator::new(problem)?;
    let n = problem.mesh.element_count();
    let mut mma = MmaState::new(n, problem.mesh.passive_mask().to_vec(), spec.mma)?;
    let mut x = problem.initial_design();
    let mut history = ConvergenceHistory::default();
    let mut last_gradients = None;
    info!(
        "{}: {} elements, {} iterations, load sensitivities {}",
        spec.name,
        n,
        iterations,
        if options.include_load_sensitivities {
            "on"
        } else {
            "off"
        }
    );

    for iter in 1..=iterations {
        let mut step = || -> Result<_> {
            let mut analysis = eval.analyze(&x)?;
            if iter == 1 && problem.normalize {
                let raw = analysis.objective / analysis.scale;
                if !(raw.is_finite() && raw != 0.0) {
                    return Err(Error::DegenerateObjective(format!(
                        "cannot normalize by initial objective {raw}"
                    )));
                }
                eval.set_scale(problem.scale / raw.abs())?;
                analysis.objective = raw * eval.scale();
                analysis.scale = eval.scale();
            }
            let grads = eval.gradients(&analysis, options.include_load_sensitivities)?;
            let (x_new, mma_step) = mma_update(&mut mma, &x, &grads.objective, analysis.constraint, &grads.constraint)?;
            Ok((analysis, grads, x_new, mma_step))
        };
        let (analysis, grads, x_new, mma_step) = step().map_err(|e| e.at_iteration(iter))?;
        let record = IterationRecord {
            iter,
            objective: analysis.objective,
            volume: analysis.volume,
            fx: analysis.resultant[0],
            fy: analysis.resultant[1],
            delta: analysis.delta,
            max_dx: mma_step.max_change,
            elastic_norm: norm(&grads.report.elastic),
            load_norm: norm(grads.report.load_terms()),
            kkt_residual: mma_step.kkt_residual,
        };
        debug!(
            "iter {iter:4}  f0 {:.6e}  vol {:.4}  dx {:.3e}",
            record.objective, record.volume, record.max_dx
        );
        history.records.push(record);
        let load = grads.report.load_terms().to_vec();
        last_gradients = Some((grads.report.elastic, load));
        x = x_new;
    }

    let final_analysis = eval.analyze(&x).map_err(|e| e.at_iteration(iterations + 1))?;
    info!(
        "{}: final objective {:.6e}, volume {:.4}",
        spec.name, final_analysis.objective, final_analysis.volume
    );
    let counters = RunCounters {
        solves: eval.counters(),
        mma_bracketing_violations: mma.bracketing_violations(),
        mma_feasibility_violations: mma.feasibility_violations(),
    };
    if counters.solves.ordering_violations != 0 {
        return Err(Error::Consistency(format!(
            "{} displacement solves used a stale pressure field",
            counters.solves.ordering_violations
        )));
    }
    Ok((history, final_analysis, last_gradients, counters))
}
