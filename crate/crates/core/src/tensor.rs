//! Dense operators on tensor products of su(n) representations.
//!
//! Leg `i` of a [`TensorSpace`] carries a [`GeneratorSet`]; the basis of the
//! product is the lexicographic product of the leg bases with leg 0 slowest.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::exact::q_to_f64;
use crate::lie_algebra::GeneratorSet;

/// Eigenvalues of the total Casimir below this are treated as zero.
pub const NULL_THRESHOLD: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct TensorSpace {
    pub legs: Vec<GeneratorSet>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl TensorSpace {
    pub fn new(legs: Vec<GeneratorSet>) -> Self {
        let dims: Vec<usize> = legs.iter().map(GeneratorSet::dim).collect();
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let total = dims.iter().product();
        Self {
            legs,
            dims,
            strides,
            total,
        }
    }

    pub fn dim(&self) -> usize {
        self.total
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn leg_count(&self) -> usize {
        self.legs.len()
    }

    fn leg_index(&self, idx: usize, leg: usize) -> usize {
        (idx / self.strides[leg]) % self.dims[leg]
    }

    fn check_leg(&self, leg: usize) -> Result<()> {
        if leg >= self.legs.len() {
            return Err(Error::LegOutOfRange {
                leg,
                legs: self.legs.len(),
            });
        }
        Ok(())
    }

    /// `op` acting on one leg, identity elsewhere.
    pub fn embed_single(&self, op: &DMatrix<C64>, leg: usize) -> Result<DMatrix<C64>> {
        self.check_leg(leg)?;
        let d = self.dims[leg];
        let s = self.strides[leg];
        let mut out = DMatrix::zeros(self.total, self.total);
        for col in 0..self.total {
            let a = self.leg_index(col, leg);
            let base = col - a * s;
            for r in 0..d {
                let c = op[(r, a)];
                if c != C64::new(0.0, 0.0) {
                    out[(base + r * s, col)] += c;
                }
            }
        }
        Ok(out)
    }

    /// A two-leg operator indexed by `a_i·d_j + a_j` acting on legs `i < j`
    /// or `i > j` (the operator's first factor always goes to leg `i`).
    pub fn embed_pair(&self, op: &DMatrix<C64>, i: usize, j: usize) -> Result<DMatrix<C64>> {
        self.check_leg(i)?;
        self.check_leg(j)?;
        if i == j {
            return Err(Error::SameLeg(i));
        }
        let (di, dj) = (self.dims[i], self.dims[j]);
        let (si, sj) = (self.strides[i], self.strides[j]);
        let mut out = DMatrix::zeros(self.total, self.total);
        for col in 0..self.total {
            let a = self.leg_index(col, i);
            let b = self.leg_index(col, j);
            let base = col - a * si - b * sj;
            let pc = a * dj + b;
            for ra in 0..di {
                for rb in 0..dj {
                    let c = op[(ra * dj + rb, pc)];
                    if c != C64::new(0.0, 0.0) {
                        out[(base + ra * si + rb * sj, col)] += c;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Σ_a tᵃ ⊗ tᵃ` for legs `i`, `j` as a `d_i d_j` square matrix.
    pub fn pair_coupling(&self, i: usize, j: usize) -> Result<DMatrix<C64>> {
        self.check_leg(i)?;
        self.check_leg(j)?;
        let (a, b) = (&self.legs[i], &self.legs[j]);
        let d = a.dim() * b.dim();
        Ok(a.matrices
            .iter()
            .zip(&b.matrices)
            .fold(DMatrix::zeros(d, d), |acc, (x, y)| acc + x.kronecker(y)))
    }

    /// `T_ij = Σ_a tᵃ_i tᵃ_j` on the full space; `i ≠ j`.
    pub fn coupling(&self, i: usize, j: usize) -> Result<DMatrix<C64>> {
        if i == j {
            return Err(Error::SameLeg(i));
        }
        self.embed_pair(&self.pair_coupling(i, j)?, i, j)
    }

    /// Quadratic Casimir of leg `i`.
    pub fn leg_casimir(&self, i: usize) -> f64 {
        q_to_f64(&self.legs[i].weight.casimir)
    }

    /// Basis indices of total weight zero.
    fn zero_weight_indices(&self) -> Vec<usize> {
        let cartan = &self.legs[0].cartan;
        let diags: Vec<Vec<DVector<C64>>> = self
            .legs
            .iter()
            .map(|g| cartan.iter().map(|&c| g.matrices[c].diagonal()).collect())
            .collect();
        (0..self.total)
            .filter(|&idx| {
                (0..cartan.len()).all(|c| {
                    let w: f64 = (0..self.legs.len())
                        .map(|l| diags[l][c][self.leg_index(idx, l)].re)
                        .sum();
                    w.abs() < 1e-9
                })
            })
            .collect()
    }

    /// `(Σ_l tᵃ_l) e_idx` as a dense vector.
    fn total_generator_on_basis(&self, a: usize, idx: usize, out: &mut DVector<C64>) {
        out.fill(C64::new(0.0, 0.0));
        for (l, g) in self.legs.iter().enumerate() {
            let t = &g.matrices[a];
            let s = self.strides[l];
            let x = self.leg_index(idx, l);
            let base = idx - x * s;
            for r in 0..self.dims[l] {
                let c = t[(r, x)];
                if c != C64::new(0.0, 0.0) {
                    out[base + r * s] += c;
                }
            }
        }
    }

    /// Orthonormal basis (as columns) of the invariant subspace W^g.
    ///
    /// W^g is the null space of the total Casimir `Σ_a (Σ_l tᵃ_l)²`, which
    /// commutes with the Cartan generators, so it is computed on the
    /// zero-weight subspace only. The restricted Casimir is real symmetric
    /// for Gell-Mann type generators and is diagonalized in real arithmetic.
    pub fn invariant_basis(&self) -> DMatrix<C64> {
        let zero = self.zero_weight_indices();
        let m = zero.len();
        if m == 0 {
            return DMatrix::zeros(self.total, 0);
        }
        let dim_g = self.legs[0].matrices.len();
        let mut images = vec![DVector::<C64>::zeros(self.total); m];
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for a in 0..dim_g {
            for (z, &idx) in zero.iter().enumerate() {
                self.total_generator_on_basis(a, idx, &mut images[z]);
            }
            for p in 0..m {
                for r in p..m {
                    let v = images[p].dotc(&images[r]);
                    gram[(p, r)] += v.re;
                    if r != p {
                        gram[(r, p)] += v.re;
                    }
                }
            }
        }
        let eig = SymmetricEigen::new(gram);
        let null: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i].abs() < NULL_THRESHOLD).collect();
        let mut basis = DMatrix::<C64>::zeros(self.total, null.len());
        for (col, &i) in null.iter().enumerate() {
            for (z, &idx) in zero.iter().enumerate() {
                basis[(idx, col)] = C64::new(eig.eigenvectors[(z, i)], 0.0);
            }
        }
        basis
    }

    /// `B† op B`.
    pub fn restrict(op: &DMatrix<C64>, basis: &DMatrix<C64>) -> DMatrix<C64> {
        basis.adjoint() * op * basis
    }

    /// Max norm of `(Σ_l tᵃ_l) v` over all a.
    pub fn invariance_defect(&self, v: &DVector<C64>) -> f64 {
        let dim_g = self.legs[0].matrices.len();
        let mut worst: f64 = 0.0;
        let mut tmp = DVector::<C64>::zeros(self.total);
        for a in 0..dim_g {
            let mut acc = DVector::<C64>::zeros(self.total);
            for (idx, &c) in v.iter().enumerate() {
                if c != C64::new(0.0, 0.0) {
                    self.total_generator_on_basis(a, idx, &mut tmp);
                    acc.axpy(c, &tmp, C64::new(1.0, 0.0));
                }
            }
            worst = worst.max(acc.camax());
        }
        worst
    }
}

/// Unit singlet in `V_a ⊗ V_b`, phase fixed so that its first nonzero
/// component is real and positive.
pub fn singlet(a: &GeneratorSet, b: &GeneratorSet) -> Result<DVector<C64>> {
    let space = TensorSpace::new(vec![a.clone(), b.clone()]);
    let basis = space.invariant_basis();
    if basis.ncols() != 1 {
        return Err(Error::InvariantDimension(basis.ncols()));
    }
    let mut v = basis.column(0).into_owned();
    fix_phase(&mut v);
    Ok(v)
}

/// Rotates `v` so its first component above 1e−12 in modulus is positive real.
pub fn fix_phase(v: &mut DVector<C64>) {
    if let Some(first) = v.iter().find(|c| c.norm() > 1e-12).copied() {
        let phase = first.conj() / first.norm();
        *v *= phase;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_algebra::{build_generators, Weight};

    fn fund(n: usize) -> GeneratorSet {
        build_generators(n, &Weight::fundamental(n, 1).unwrap()).unwrap()
    }

    #[test]
    fn fund_antifund_singlet_is_normalized_identity() {
        for n in 2..5 {
            let f = fund(n);
            let e = singlet(&f, &f.conjugate()).unwrap();
            let want = 1.0 / (n as f64).sqrt();
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { want } else { 0.0 };
                    assert!((e[i * n + j] - C64::new(expect, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pair_coupling_eigenvalues_fund_fund() {
        // fund ⊗ fund = Sym² ⊕ Λ²: T = ½(C_R − 2C_f)
        let n = 3;
        let space = TensorSpace::new(vec![fund(n), fund(n)]);
        let t = space.coupling(0, 1).unwrap();
        let herm = nalgebra::DMatrix::from_fn(9, 9, |i, j| t[(i, j)].re);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 4.0 / 3.0).abs() < 1e-12);
        assert!((ev[8] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_symmetric_in_legs() {
        let f = fund(3);
        let space = TensorSpace::new(vec![f.clone(), f.conjugate(), f]);
        let a = space.coupling(0, 2).unwrap();
        let b = space.coupling(2, 0).unwrap();
        assert!((a - b).camax() < 1e-14);
        assert_eq!(space.coupling(1, 1), Err(Error::SameLeg(1)));
        assert!(matches!(space.coupling(0, 5), Err(Error::LegOutOfRange { .. })));
    }

    #[test]
    fn four_leg_invariants_are_two_dimensional() {
        let f = fund(3);
        let space = TensorSpace::new(vec![f.clone(), f.conjugate(), f.clone(), f.conjugate()]);
        let b = space.invariant_basis();
        assert_eq!(b.ncols(), 2);
        for c in 0..2 {
            assert!(space.invariance_defect(&b.column(c).into_owned()) < 1e-12);
        }
        let gram = b.adjoint() * &b;
        assert!((gram - DMatrix::<C64>::identity(2, 2)).camax() < 1e-12);
    }

    #[test]
    fn embed_single_matches_kronecker() {
        let f = fund(2);
        let space = TensorSpace::new(vec![f.clone(), f.clone(), f.clone()]);
        let id = DMatrix::<C64>::identity(2, 2);
        let t = &f.matrices[1];
        let direct = id.kronecker(t).kronecker(&id);
        assert!((space.embed_single(t, 1).unwrap() - direct).camax() < 1e-15);
    }
}
