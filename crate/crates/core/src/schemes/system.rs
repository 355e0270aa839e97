//! Block layout of the per-step linear systems.
//!
//! Unknowns are ordered `[v; H; λ; κ]`, with absent blocks of length zero.
//! Test-function rows reuse the same slots so the assembled matrix is square.
//! Constrained degrees of freedom (the `z` components of `v` and `λ` at
//! contact-line vertices) are removed from both rows and columns.

use crate::mesh::Point;
use crate::solver::{CsrMatrix, TripletMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Velocity,
    Curvature,
    Dual,
    Multiplier,
}

impl Slot {
    fn index(self) -> usize {
        match self {
            Slot::Velocity => 0,
            Slot::Curvature => 1,
            Slot::Dual => 2,
            Slot::Multiplier => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Layout {
    n: usize,
    sizes: [usize; 4],
    offsets: [usize; 4],
    /// Full index to reduced index; `None` for eliminated degrees of freedom.
    reduced: Vec<Option<usize>>,
    reduced_len: usize,
}

impl Layout {
    /// `present` flags the blocks `[v, H, λ, κ]`; `fixed_z` lists vertices whose
    /// `v` and `λ` third components are eliminated.
    pub fn new(n: usize, present: [bool; 4], fixed_z: &[usize]) -> Self {
        let dims = [3 * n, n, 3 * n, n];
        let sizes: [usize; 4] = std::array::from_fn(|b| if present[b] { dims[b] } else { 0 });
        let mut offsets = [0; 4];
        for b in 1..4 {
            offsets[b] = offsets[b - 1] + sizes[b - 1];
        }
        let full = offsets[3] + sizes[3];
        let mut eliminated = vec![false; full];
        for &i in fixed_z {
            for b in [0, 2] {
                if present[b] {
                    eliminated[offsets[b] + 3 * i + 2] = true;
                }
            }
        }
        let mut reduced = Vec::with_capacity(full);
        let mut next = 0;
        for e in eliminated {
            if e {
                reduced.push(None);
            } else {
                reduced.push(Some(next));
                next += 1;
            }
        }
        Self { n, sizes, offsets, reduced, reduced_len: next }
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.reduced_len
    }

    pub fn is_empty(&self) -> bool {
        self.reduced_len == 0
    }

    pub fn full_len(&self) -> usize {
        self.reduced.len()
    }

    pub fn has(&self, slot: Slot) -> bool {
        self.sizes[slot.index()] > 0
    }

    /// Reduced index of entry `k` of `slot`, if it is not eliminated.
    pub fn index(&self, slot: Slot, k: usize) -> Option<usize> {
        debug_assert!(k < self.sizes[slot.index()], "{slot:?}[{k}] outside block");
        self.reduced[self.offsets[slot.index()] + k]
    }

    /// Values of `slot` read from a reduced vector, zeros at eliminated entries.
    pub fn extract(&self, slot: Slot, x: &[f64]) -> Vec<f64> {
        (0..self.sizes[slot.index()]).map(|k| self.index(slot, k).map_or(0.0, |r| x[r])).collect()
    }

    /// Scatters block values into a reduced vector, dropping eliminated entries.
    pub fn insert(&self, slot: Slot, values: &[f64], x: &mut [f64]) {
        assert_eq!(values.len(), self.sizes[slot.index()]);
        for (k, v) in values.iter().enumerate() {
            if let Some(r) = self.index(slot, k) {
                x[r] = *v;
            }
        }
    }
}

/// Accumulates a block system in reduced numbering.
pub struct SystemBuilder {
    layout: Layout,
    matrix: TripletMatrix,
    rhs: Vec<f64>,
}

impl SystemBuilder {
    pub fn new(layout: Layout) -> Self {
        let len = layout.len();
        Self { matrix: TripletMatrix::new(len, len), rhs: vec![0.0; len], layout }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn add(&mut self, row: Slot, r: usize, col: Slot, c: usize, value: f64) {
        if let (Some(i), Some(j)) = (self.layout.index(row, r), self.layout.index(col, c)) {
            self.matrix.push(i, j, value);
        }
    }

    pub fn add_rhs(&mut self, row: Slot, r: usize, value: f64) {
        if let Some(i) = self.layout.index(row, r) {
            self.rhs[i] += value;
        }
    }

    pub fn add_rhs_vector(&mut self, row: Slot, values: &[f64], scale: f64) {
        for (r, v) in values.iter().enumerate() {
            self.add_rhs(row, r, scale * v);
        }
    }

    pub fn add_matrix(&mut self, row: Slot, col: Slot, m: &CsrMatrix, scale: f64) {
        for r in 0..m.nrows() {
            for (c, v) in m.row(r) {
                self.add(row, r, col, c, scale * v);
            }
        }
    }

    /// Adds `scale * B` with `B[(i, c), i] = vectors[i][c]`: a vector-row,
    /// scalar-column block.
    pub fn add_vertex_vectors(&mut self, row: Slot, col: Slot, vectors: &[Point], scale: f64) {
        for (i, p) in vectors.iter().enumerate() {
            for c in 0..3 {
                self.add(row, 3 * i + c, col, i, scale * p[c]);
            }
        }
    }

    /// Adds `scale * Bᵀ`: a scalar-row, vector-column block.
    pub fn add_vertex_vectors_transposed(&mut self, row: Slot, col: Slot, vectors: &[Point], scale: f64) {
        for (i, p) in vectors.iter().enumerate() {
            for c in 0..3 {
                self.add(row, i, col, 3 * i + c, scale * p[c]);
            }
        }
    }

    pub fn add_diagonal(&mut self, row: Slot, col: Slot, diag: &[f64], scale: f64) {
        for (i, d) in diag.iter().enumerate() {
            self.add(row, i, col, i, scale * d);
        }
    }

    pub fn finish(self) -> Result<AssembledSystem, crate::solver::SolveError> {
        Ok(AssembledSystem { matrix: self.matrix.to_csr()?, rhs: self.rhs, layout: self.layout })
    }
}

/// A square block system ready to be solved.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: Layout,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elimination_removes_z_components_of_v_and_lambda() {
        let l = Layout::new(4, [true, true, true, true], &[1, 3]);
        assert_eq!(l.full_len(), 32);
        assert_eq!(l.len(), 28);
        assert_eq!(l.index(Slot::Velocity, 5), None);
        assert_eq!(l.index(Slot::Dual, 11), None);
        assert!(l.index(Slot::Velocity, 4).is_some());
        assert!(l.index(Slot::Curvature, 1).is_some());
        let mut x = vec![0.0; l.len()];
        let v: Vec<f64> = (0..12).map(|k| k as f64 + 1.0).collect();
        l.insert(Slot::Velocity, &v, &mut x);
        let back = l.extract(Slot::Velocity, &x);
        assert_eq!(back[5], 0.0);
        assert_eq!(back[4], 5.0);
    }

    #[test]
    fn absent_blocks_have_no_entries() {
        let l = Layout::new(3, [true, false, false, true], &[]);
        assert_eq!(l.len(), 12);
        assert!(!l.has(Slot::Curvature));
        assert_eq!(l.index(Slot::Multiplier, 0), Some(9));
    }
}
