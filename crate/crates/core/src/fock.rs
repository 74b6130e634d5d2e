//! Jordan-Wigner realization of fermionic mode operators on bit-string
//! occupation states, plus a small CSR matrix type.
//!
//! Mode `k` of an `n`-mode space lives on bit `n - 1 - k`, so the parity
//! string of mode `k` counts the occupied modes `0..k`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeOp {
    pub mode: usize,
    pub dagger: bool,
}

impl ModeOp {
    pub fn create(mode: usize) -> Self {
        Self { mode, dagger: true }
    }

    pub fn annihilate(mode: usize) -> Self {
        Self {
            mode,
            dagger: false,
        }
    }
}

/// Applies `ops[0] ops[1] ... ops[m-1]` to a basis state (rightmost first).
/// Returns the image state and its sign, or `None` if it vanishes.
pub fn apply_string(ops: &[ModeOp], n_modes: usize, mut state: usize) -> Option<(usize, f64)> {
    let mut sign = 1.0;
    for op in ops.iter().rev() {
        let bit = 1usize << (n_modes - 1 - op.mode);
        let occupied = state & bit != 0;
        if occupied == op.dagger {
            return None;
        }
        // modes before `op.mode` sit on the higher bits
        let higher = state >> (n_modes - op.mode);
        if higher.count_ones() % 2 == 1 {
            sign = -sign;
        }
        state ^= bit;
    }
    Some((state, sign))
}

/// A linear combination of products of mode operators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FermionOperator {
    pub terms: Vec<(Complex64, Vec<ModeOp>)>,
}

impl FermionOperator {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn identity() -> Self {
        Self::term(Complex64::new(1.0, 0.0), Vec::new())
    }

    pub fn term(coeff: Complex64, ops: Vec<ModeOp>) -> Self {
        Self {
            terms: vec![(coeff, ops)],
        }
    }

    pub fn mode(op: ModeOp) -> Self {
        Self::term(Complex64::new(1.0, 0.0), vec![op])
    }

    pub fn add_term(&mut self, coeff: Complex64, ops: Vec<ModeOp>) {
        if coeff != Complex64::new(0.0, 0.0) {
            self.terms.push((coeff, ops));
        }
    }

    pub fn scaled(mut self, factor: Complex64) -> Self {
        for (c, _) in &mut self.terms {
            *c *= factor;
        }
        self
    }

    pub fn plus(mut self, other: &FermionOperator) -> Self {
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn times(&self, other: &FermionOperator) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ca, a) in &self.terms {
            for (cb, b) in &other.terms {
                let mut ops = a.clone();
                ops.extend_from_slice(b);
                terms.push((ca * cb, ops));
            }
        }
        Self { terms }
    }

    /// `y = O x`, matrix-free.
    pub fn apply(&self, n_modes: usize, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        for (state, &amp) in x.iter().enumerate() {
            if amp == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (c, ops) in &self.terms {
                if let Some((image, sign)) = apply_string(ops, n_modes, state) {
                    y[image] += c * amp * sign;
                }
            }
        }
        y
    }

    pub fn to_sparse(&self, n_modes: usize) -> SparseMatrix {
        let dim = 1usize << n_modes;
        let mut rows: Vec<HashMap<usize, Complex64>> = vec![HashMap::new(); dim];
        for col in 0..dim {
            for (c, ops) in &self.terms {
                if let Some((row, sign)) = apply_string(ops, n_modes, col) {
                    *rows[row].entry(col).or_default() += c * sign;
                }
            }
        }
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            let mut entries: Vec<_> = row
                .into_iter()
                .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
                .collect();
            entries.sort_by_key(|(c, _)| *c);
            for (c, v) in entries {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            dim,
            indptr,
            indices,
            values,
        }
    }
}

/// Square complex matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (row, out) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out = acc;
        }
    }

    /// `yᵀ = xᵀ A` (no conjugation).
    pub fn left_mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim];
        for (row, xr) in x.iter().enumerate() {
            if *xr == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in self.indptr[row]..self.indptr[row + 1] {
                y[self.indices[k]] += xr * self.values[k];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for row in 0..self.dim {
            for k in self.indptr[row]..self.indptr[row + 1] {
                m[(row, self.indices[k])] = self.values[k];
            }
        }
        m
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        (self.to_dense() - other.to_dense()).iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}
