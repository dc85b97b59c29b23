//! Consistent nodal forces from a pressure field.
//!
//! The pressure gradient acts as the body force `b = −∇p`. Its consistent
//! nodal equivalent is `F = −H p` with `H = Σ_e ∫ N_uᵀ B_p dV`, which depends
//! only on the mesh and is therefore assembled once.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, ScatterPattern};
use crate::mesh::{eval_at, gauss_rule, Mesh};

/// Element block `∫ N_uᵀ B_p dV`, row-major 8×4. Row `2a + c` is node `a`,
/// displacement component `c`; column `b` is pressure node `b`.
pub fn element_conversion(coords: &[[f64; 2]; 4], thickness: f64) -> Result<[f64; 32]> {
    let mut he = [0.0; 32];
    for gp in gauss_rule(2)? {
        let pe = eval_at(coords, gp.xi, gp.eta)?;
        let w = gp.weight * pe.det_j * thickness;
        for a in 0..4 {
            for c in 0..2 {
                for b in 0..4 {
                    he[4 * (2 * a + c) + b] += w * pe.n[a] * pe.grad[b][c];
                }
            }
        }
    }
    Ok(he)
}

/// Global conversion matrix `H` of size `2·n_nodes × n_nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionMatrix {
    h: CsrMatrix,
}

impl ConversionMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.h
    }

    /// `F = −H p`.
    pub fn nodal_forces(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.h.ncols() {
            return Err(Error::invalid(format!(
                "pressure vector has {} entries, expected {}",
                p.len(),
                self.h.ncols()
            )));
        }
        Ok(self.h.matvec(p).into_iter().map(|v| -v).collect())
    }

    /// `Hᵀ y` for a displacement-space vector `y`.
    pub fn transpose_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.h.nrows() {
            return Err(Error::invalid(format!(
                "displacement vector has {} entries, expected {}",
                y.len(),
                self.h.nrows()
            )));
        }
        Ok(self.h.matvec_transpose(y))
    }
}

pub fn assemble_conversion(mesh: &Mesh) -> Result<ConversionMatrix> {
    let he = element_conversion(&mesh.element_coords(0), mesh.thickness())?;
    let rows: Vec<[usize; 8]> = (0..mesh.element_count()).map(|e| mesh.element_dofs(e)).collect();
    let pattern = ScatterPattern::new(mesh.dof_count(), mesh.node_count(), &rows, mesh.elem_conn())?;
    let h = pattern.assemble(|_, out| out.copy_from_slice(&he));
    Ok(ConversionMatrix { h })
}

/// `F = −H p`.
pub fn nodal_forces(conv: &ConversionMatrix, p: &[f64]) -> Result<Vec<f64>> {
    conv.nodal_forces(p)
}

/// Sum of x and y force components.
pub fn resultant(f: &[f64]) -> [f64; 2] {
    let mut r = [0.0; 2];
    for (k, v) in f.iter().enumerate() {
        r[k % 2] += v;
    }
    r
}
