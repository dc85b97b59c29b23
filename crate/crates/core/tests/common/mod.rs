//! Shared oracles for the integration and acceptance tests.
#![allow(dead_code)]

use presstopo::mesh::{Region, Side};
use presstopo::{BoundarySpec, DarcyModel, DarcyParams, FlowAnalysis, Mesh, PressureSet};

pub const P_IN: f64 = 1e5;

/// Solid strip of `levels` meshes, the coarsest with two elements across the
/// penetration depth. Pressure `P_IN` enters at the left end; the strip is
/// ten penetration depths long so the far end is effectively at infinity.
pub struct DrainageStudy {
    pub h: Vec<f64>,
    /// Max nodal error against `P_IN exp(-mu s)`.
    pub errors: Vec<f64>,
    /// Pressure one penetration depth in, coarsest mesh.
    pub p_at_depth: f64,
}

impl DrainageStudy {
    /// Observed orders between consecutive levels.
    pub fn orders(&self) -> Vec<f64> {
        self.errors
            .windows(2)
            .zip(self.h.windows(2))
            .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect()
    }
}

pub fn drainage_study(levels: usize) -> DrainageStudy {
    let delta_s = 0.002;
    let model = DarcyModel::new(DarcyParams {
        delta_s,
        ..DarcyParams::default()
    })
    .unwrap();
    let mu = model.decay_rate();
    let length = 10.0 * delta_s;
    let mut h = Vec::new();
    let mut errors = Vec::new();
    let mut p_at_depth = f64::NAN;
    for level in 0..levels {
        let nx = 20 << level;
        let dx = length / nx as f64;
        let mesh = Mesh::grid(nx, 1, length, dx, 0.01).unwrap();
        let bc = BoundarySpec {
            pressure_dirichlet: vec![PressureSet {
                nodes: mesh.select_nodes(&Region::edge(Side::Left)).ids,
                value: P_IN,
            }],
            ..Default::default()
        };
        let mut flow = FlowAnalysis::new(&mesh, model, &bc).unwrap();
        let state = flow.solve(&vec![1.0; nx]).unwrap();
        let err = mesh
            .node_coords()
            .iter()
            .zip(&state.p)
            .map(|(c, p)| (p - P_IN * (-mu * c[0]).exp()).abs())
            .fold(0.0, f64::max);
        if level == 0 {
            p_at_depth = state.p[mesh.node_at(2, 0)];
        }
        h.push(dx);
        errors.push(err);
    }
    DrainageStudy { h, errors, p_at_depth }
}
