//! Linear density filter with cone weights and its transpose.

use std::hash::{DefaultHasher, Hash, Hasher};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Row-normalized filter matrix `W` with `w_ij ∝ max(0, r_min − |c_i − c_j|)`.
///
/// Passive elements take part as neighbors but their own filtered value is
/// reset to zero, and they never receive a gradient.
#[derive(Debug, Clone)]
pub struct DensityFilter {
    r_min: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    passive: Vec<bool>,
}

impl DensityFilter {
    pub fn new(mesh: &Mesh, r_min: f64) -> Result<Self> {
        if !(r_min.is_finite() && r_min > 0.0) {
            return Err(Error::invalid(format!("filter radius must be positive, got {r_min}")));
        }
        let (nx, ny) = (mesh.nx(), mesh.ny());
        let (dx, dy) = mesh.element_size();
        let reach_x = (r_min / dx).ceil() as usize;
        let reach_y = (r_min / dy).ceil() as usize;
        let rows: Vec<Vec<(usize, f64)>> = (0..mesh.element_count())
            .into_par_iter()
            .map(|e| {
                let (i, j) = (e % nx, e / nx);
                let ci = mesh.centroid(e);
                let mut row = Vec::new();
                for jj in j.saturating_sub(reach_y)..=(j + reach_y).min(ny - 1) {
                    for ii in i.saturating_sub(reach_x)..=(i + reach_x).min(nx - 1) {
                        let f = jj * nx + ii;
                        let cf = mesh.centroid(f);
                        let w = r_min - (ci[0] - cf[0]).hypot(ci[1] - cf[1]);
                        if w > 0.0 {
                            row.push((f, w));
                        }
                    }
                }
                let total: f64 = row.iter().map(|&(_, w)| w).sum();
                row.iter_mut().for_each(|(_, w)| *w /= total);
                row
            })
            .collect();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        for row in rows {
            for (c, w) in row {
                cols.push(c);
                weights.push(w);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            r_min,
            row_ptr,
            cols,
            weights,
            passive: mesh.passive_mask().to_vec(),
        })
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn len(&self) -> usize {
        self.passive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passive.is_empty()
    }

    /// `(neighbor, weight)` pairs of element `e`.
    pub fn row(&self, e: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[e]..self.row_ptr[e + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    pub fn neighbor_count(&self, e: usize) -> usize {
        self.row_ptr[e + 1] - self.row_ptr[e]
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::invalid(format!(
                "vector has {} entries, filter expects {}",
                v.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// `W x` without the passive reset.
    pub fn apply_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok((0..self.len())
            .map(|e| self.row(e).map(|(f, w)| w * x[f]).sum())
            .collect())
    }

    /// `Wᵀ g` without passive masking.
    pub fn transpose_raw(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check(g)?;
        let mut out = vec![0.0; self.len()];
        for (e, &ge) in g.iter().enumerate() {
            for (f, w) in self.row(e) {
                out[f] += w * ge;
            }
        }
        Ok(out)
    }

    /// Filtered densities, with passive elements reset to zero.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut rho = self.apply_raw(x)?;
        for (r, &p) in rho.iter_mut().zip(&self.passive) {
            if p {
                *r = 0.0;
            }
        }
        Ok(rho)
    }

    /// Maps a gradient with respect to filtered densities to one with
    /// respect to design variables: `Wᵀ g`, consistent with [`apply`].
    ///
    /// [`apply`]: Self::apply
    pub fn chain_rule(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check(g)?;
        let masked: Vec<f64> = g
            .iter()
            .zip(&self.passive)
            .map(|(&v, &p)| if p { 0.0 } else { v })
            .collect();
        let mut out = self.transpose_raw(&masked)?;
        for (o, &p) in out.iter_mut().zip(&self.passive) {
            if p {
                *o = 0.0;
            }
        }
        Ok(out)
    }
}

/// Design variables and the filtered (physical) densities derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub design: Vec<f64>,
    pub physical: Vec<f64>,
}

impl DensityField {
    pub fn new(design: Vec<f64>, filter: &DensityFilter) -> Result<Self> {
        let physical = filter.apply(&design)?;
        Ok(Self { design, physical })
    }

    pub fn stamp(&self) -> u64 {
        design_stamp(&self.physical)
    }
}

/// Hash of a density vector, used to tie solved states to their design.
pub fn design_stamp(rho: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    rho.len().hash(&mut h);
    for v in rho {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}
