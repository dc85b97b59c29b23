//! Sparse matrix storage, element scatter patterns, Dirichlet partitioning
//! and the sparse Cholesky backend.
//!
//! Global matrices are assembled into a CSR pattern that is computed once per
//! mesh; each element keeps the value slots it writes to, so re-assembly for
//! a new design is a single pass without sorting. Symmetric positive definite
//! systems are factorized with faer's supernodal Cholesky, and the symbolic
//! analysis is reused for as long as the pattern stays the same.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use crate::error::{Error, Result};

/// Relative residual every direct solve is checked against.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
const MAX_REFINEMENT_STEPS: usize = 4;
const NO_SLOT: usize = usize::MAX;

/// Compressed sparse row matrix; columns are sorted and unique within a row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::invalid(format!(
                    "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[next[r]] = (c, v);
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut entries[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterator over `(col, value)` of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Position of entry `(i, j)` in the value array, if stored.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| span.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `value` to the stored entry `(i, j)`.
    pub fn add_to(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let k = self
            .slot(i, j)
            .ok_or_else(|| Error::invalid(format!("entry ({i}, {j}) is not in the sparsity pattern")))?;
        self.values[k] += value;
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `selfᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec_transpose dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// `max |a_ij − a_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    fn zeroed_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }
}

/// Fixed sparsity pattern plus, per element, the value slots its local
/// matrix scatters into.
#[derive(Debug, Clone)]
pub struct ScatterPattern {
    template: CsrMatrix,
    slots: Vec<usize>,
    local_rows: usize,
    local_cols: usize,
}

impl ScatterPattern {
    /// `row_dofs[e]` / `col_dofs[e]` are the global indices of element `e`'s
    /// local rows and columns.
    pub fn new<R, C>(nrows: usize, ncols: usize, row_dofs: &[R], col_dofs: &[C]) -> Result<Self>
    where
        R: AsRef<[usize]>,
        C: AsRef<[usize]>,
    {
        if row_dofs.len() != col_dofs.len() {
            return Err(Error::invalid("row and column dof lists differ in element count"));
        }
        let local_rows = row_dofs.first().map_or(0, |r| r.as_ref().len());
        let local_cols = col_dofs.first().map_or(0, |c| c.as_ref().len());
        let mut triplets = Vec::with_capacity(row_dofs.len() * local_rows * local_cols);
        for (rows, cols) in row_dofs.iter().zip(col_dofs) {
            let (rows, cols) = (rows.as_ref(), cols.as_ref());
            if rows.len() != local_rows || cols.len() != local_cols {
                return Err(Error::invalid("elements must share one local dof count"));
            }
            for &r in rows {
                for &c in cols {
                    triplets.push((r, c, 0.0));
                }
            }
        }
        let template = CsrMatrix::from_triplets(nrows, ncols, &triplets)?;
        let mut slots = Vec::with_capacity(triplets.len());
        for (rows, cols) in row_dofs.iter().zip(col_dofs) {
            for &r in rows.as_ref() {
                for &c in cols.as_ref() {
                    slots.push(template.slot(r, c).expect("pattern built from these entries"));
                }
            }
        }
        Ok(Self {
            template,
            slots,
            local_rows,
            local_cols,
        })
    }

    pub fn element_count(&self) -> usize {
        self.slots
            .len()
            .checked_div(self.local_rows * self.local_cols)
            .unwrap_or(0)
    }

    /// Zero-valued matrix with the assembled pattern.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.template
    }

    /// Assembles `Σ_e scatter(local_e)`; `fill(e, buf)` writes element `e`'s
    /// row-major local matrix into `buf`.
    pub fn assemble(&self, mut fill: impl FnMut(usize, &mut [f64])) -> CsrMatrix {
        let mut out = self.template.zeroed_like();
        let block = self.local_rows * self.local_cols;
        let mut local = vec![0.0; block];
        for (e, slots) in self.slots.chunks_exact(block.max(1)).enumerate() {
            local.iter_mut().for_each(|v| *v = 0.0);
            fill(e, &mut local);
            for (&k, &v) in slots.iter().zip(&local) {
                out.values[k] += v;
            }
        }
        out
    }
}

/// Where a global index lives after Dirichlet partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Free(usize),
    Fixed(usize),
}

/// Split of a global index range into free and prescribed entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    slots: Vec<Slot>,
    free: Vec<usize>,
    fixed: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, fixed: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut is_fixed = vec![false; n];
        for i in fixed {
            if i >= n {
                return Err(Error::invalid(format!("prescribed index {i} out of range 0..{n}")));
            }
            is_fixed[i] = true;
        }
        let mut slots = Vec::with_capacity(n);
        let (mut free, mut fixed) = (Vec::new(), Vec::new());
        for (i, &f) in is_fixed.iter().enumerate() {
            if f {
                slots.push(Slot::Fixed(fixed.len()));
                fixed.push(i);
            } else {
                slots.push(Slot::Free(free.len()));
                free.push(i);
            }
        }
        Ok(Self { slots, free, fixed })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn slot(&self, i: usize) -> Slot {
        self.slots[i]
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        matches!(self.slots[i], Slot::Fixed(_))
    }

    pub fn gather_free(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    pub fn gather_fixed(&self, full: &[f64]) -> Vec<f64> {
        self.fixed.iter().map(|&i| full[i]).collect()
    }

    /// Full-length vector from free and prescribed parts.
    pub fn scatter(&self, free_values: &[f64], fixed_values: &[f64]) -> Vec<f64> {
        self.slots
            .iter()
            .map(|s| match *s {
                Slot::Free(k) => free_values[k],
                Slot::Fixed(k) => fixed_values[k],
            })
            .collect()
    }
}

/// Free-free block of a symmetric matrix with a reusable Cholesky factor.
///
/// The `A_ff` pattern and the `A_fp` coupling entries are derived once from
/// the full pattern. `factorize` copies values out of a full matrix sharing
/// that pattern, so the same object serves every design iteration.
#[derive(Debug)]
pub struct ReducedSystem {
    partition: Partition,
    ff: CsrMatrix,
    ff_slots: Vec<usize>,
    coupling: Vec<(usize, usize, usize)>,
    full_row_ptr: Vec<usize>,
    full_col_idx: Vec<usize>,
    solver: CholeskySolver,
    factored: bool,
}

impl ReducedSystem {
    pub fn new(full_pattern: &CsrMatrix, partition: Partition) -> Result<Self> {
        if full_pattern.nrows() != partition.len() || full_pattern.ncols() != partition.len() {
            return Err(Error::invalid("partition does not match matrix dimension"));
        }
        let mut triplets = Vec::new();
        let mut coupling = Vec::new();
        for i in 0..full_pattern.nrows() {
            let Slot::Free(fi) = partition.slot(i) else { continue };
            for (k, (j, _)) in (full_pattern.row_ptr[i]..).zip(full_pattern.row(i)) {
                match partition.slot(j) {
                    Slot::Free(fj) => triplets.push((fi, fj, 0.0)),
                    Slot::Fixed(pj) => coupling.push((k, fi, pj)),
                }
            }
        }
        let n_free = partition.free().len();
        let ff = CsrMatrix::from_triplets(n_free, n_free, &triplets)?;
        let mut ff_slots = vec![NO_SLOT; full_pattern.nnz()];
        for i in 0..full_pattern.nrows() {
            let Slot::Free(fi) = partition.slot(i) else { continue };
            for (k, (j, _)) in (full_pattern.row_ptr[i]..).zip(full_pattern.row(i)) {
                if let Slot::Free(fj) = partition.slot(j) {
                    ff_slots[k] = ff.slot(fi, fj).expect("entry inserted above");
                }
            }
        }
        Ok(Self {
            partition,
            ff,
            ff_slots,
            coupling,
            full_row_ptr: full_pattern.row_ptr.clone(),
            full_col_idx: full_pattern.col_idx.clone(),
            solver: CholeskySolver::default(),
            factored: false,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Current `A_ff` values (valid after `factorize`).
    pub fn free_block(&self) -> &CsrMatrix {
        &self.ff
    }

    fn check_pattern(&self, full: &CsrMatrix) -> Result<()> {
        if full.row_ptr != self.full_row_ptr || full.col_idx != self.full_col_idx {
            return Err(Error::invalid(
                "matrix pattern differs from the one this system was built for",
            ));
        }
        Ok(())
    }

    /// Extracts `A_ff` from `full` and factorizes it.
    pub fn factorize(&mut self, full: &CsrMatrix) -> Result<()> {
        self.check_pattern(full)?;
        self.ff.values.iter_mut().for_each(|v| *v = 0.0);
        for (k, &slot) in self.ff_slots.iter().enumerate() {
            if slot != NO_SLOT {
                self.ff.values[slot] = full.values[k];
            }
        }
        self.factored = false;
        self.solver.factorize(&self.ff)?;
        self.factored = true;
        Ok(())
    }

    /// `A_fp x_p` for prescribed values `x_p`, using the coupling entries of `full`.
    pub fn coupling_apply(&self, full: &CsrMatrix, fixed_values: &[f64]) -> Result<Vec<f64>> {
        self.check_pattern(full)?;
        let mut out = vec![0.0; self.partition.free().len()];
        for &(k, fi, pj) in &self.coupling {
            out[fi] += full.values[k] * fixed_values[pj];
        }
        Ok(out)
    }

    /// Solves `A_ff x = rhs` with the current factor.
    pub fn solve_free(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if !self.factored {
            return Err(Error::invalid("reduced system solved before factorization"));
        }
        self.solver.solve_checked(&self.ff, rhs)
    }

    /// Solves `A x = b` for the free entries with prescribed values held
    /// fixed, returning the full vector: `x_f = A_ff⁻¹ (b_f − A_fp x_p)`.
    pub fn solve(&self, full: &CsrMatrix, rhs_free: &[f64], fixed_values: &[f64]) -> Result<Vec<f64>> {
        let coupled = self.coupling_apply(full, fixed_values)?;
        let rhs: Vec<f64> = rhs_free.iter().zip(&coupled).map(|(b, c)| b - c).collect();
        let x_free = self.solve_free(&rhs)?;
        Ok(self.partition.scatter(&x_free, fixed_values))
    }
}

/// Sparse Cholesky factorization that keeps its symbolic analysis between
/// factorizations of matrices with an identical pattern.
#[derive(Debug, Default)]
pub struct CholeskySolver {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLlt<usize>)>,
    factor: Option<Llt<usize, f64>>,
    dim: usize,
}

impl CholeskySolver {
    /// Factorizes a symmetric matrix stored with both triangles. For a
    /// symmetric matrix the CSR arrays double as CSC arrays, and only the
    /// lower triangle is read.
    pub fn factorize(&mut self, a: &CsrMatrix) -> Result<()> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("Cholesky requires a square matrix"));
        }
        self.factor = None;
        self.dim = a.nrows();
        if a.nrows() == 0 {
            return Ok(());
        }
        let reuse = matches!(&self.symbolic, Some((rp, ci, _)) if *rp == a.row_ptr && *ci == a.col_idx);
        if !reuse {
            let sym = SymbolicSparseColMatRef::new_checked(a.nrows(), a.ncols(), &a.row_ptr, None, &a.col_idx);
            let symbolic = SymbolicLlt::try_new(sym, Side::Lower)
                .map_err(|e| Error::Singular(format!("symbolic Cholesky failed: {e:?}")))?;
            self.symbolic = Some((a.row_ptr.clone(), a.col_idx.clone(), symbolic));
        }
        let (rp, ci, symbolic) = self.symbolic.as_ref().expect("set above");
        let sym = SymbolicSparseColMatRef::new_checked(a.nrows(), a.ncols(), rp, None, ci);
        let mat = SparseColMatRef::new(sym, &a.values);
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), mat, Side::Lower).map_err(|e| {
            Error::Singular(format!(
                "matrix is not positive definite ({e:?}); check the boundary conditions"
            ))
        })?;
        self.factor = Some(llt);
        Ok(())
    }

    fn solve_raw(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, expected {}",
                rhs.len(),
                self.dim
            )));
        }
        if self.dim == 0 {
            return Ok(Vec::new());
        }
        let factor = self
            .factor
            .as_ref()
            .ok_or_else(|| Error::invalid("solve called before factorize"))?;
        let mut x = rhs.to_vec();
        factor.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.dim, 1));
        Ok(x)
    }

    /// Solves `A x = b` and iteratively refines until the normwise backward
    /// error `‖b − Ax‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)` is below [`SOLVE_TOLERANCE`].
    /// The plain relative residual is not used because on high-contrast
    /// systems its floating-point floor already exceeds the tolerance.
    pub fn solve_checked(&self, a: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve_raw(rhs)?;
        let b_norm = norm_inf(rhs);
        if b_norm == 0.0 {
            return Ok(x);
        }
        let a_norm = a.norm_inf();
        let mut best = (f64::INFINITY, Vec::new());
        for step in 0..=MAX_REFINEMENT_STEPS {
            let ax = a.matvec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
            let error = norm_inf(&r) / (a_norm * norm_inf(&x) + b_norm);
            if !error.is_finite() {
                return Err(Error::Singular(
                    "non-finite solution; matrix is numerically singular".into(),
                ));
            }
            if error < best.0 {
                best = (error, x.clone());
            }
            if error <= SOLVE_TOLERANCE || step == MAX_REFINEMENT_STEPS {
                break;
            }
            let dx = self.solve_raw(&r)?;
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
        if best.0 > SOLVE_TOLERANCE {
            return Err(Error::IterationLimit { residual: best.0 });
        }
        Ok(best.1)
    }
}

/// One-shot SPD solve of a full system.
pub fn solve_spd(a: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut solver = CholeskySolver::default();
    solver.factorize(a)?;
    solver.solve_checked(a, rhs)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 4.0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 2), 5.0);
        assert_eq!(m.col_idx(), &[1, 0, 2]);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![2.0, 8.0]);
        assert_eq!(m.matvec_transpose(&[1.0, 1.0]), vec![3.0, 2.0, 5.0]);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn cholesky_solves_tridiagonal_system() {
        let a = laplacian_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x_true);
        let x = solve_spd(&a, &b).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_matrix_reports_singular() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(matches!(solve_spd(&a, &[1.0, 1.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn reduced_system_matches_dense_elimination() {
        let a = laplacian_1d(6);
        let part = Partition::new(6, [0, 5]).unwrap();
        let mut sys = ReducedSystem::new(&a, part).unwrap();
        sys.factorize(&a).unwrap();
        // Dirichlet 1 on the left and 0 on the right gives a linear profile.
        let x = sys.solve(&a, &[0.0; 4], &[1.0, 0.0]).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - (1.0 - i as f64 / 5.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn scatter_pattern_assembles_overlapping_elements() {
        let dofs = vec![[0usize, 1], [1, 2]];
        let pat = ScatterPattern::new(3, 3, &dofs, &dofs).unwrap();
        let a = pat.assemble(|_, m| m.copy_from_slice(&[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(
            a.to_dense(),
            vec![vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]
        );
        assert_eq!(pat.element_count(), 2);
    }

    #[test]
    fn symbolic_analysis_is_reused_for_same_pattern() {
        let a = laplacian_1d(10);
        let mut s = CholeskySolver::default();
        s.factorize(&a).unwrap();
        let mut b = a.clone();
        b.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        s.factorize(&b).unwrap();
        let x = s.solve_checked(&b, &[1.0; 10]).unwrap();
        let r = b.matvec(&x);
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
