//! Two-dimensional invariant subspaces `W^g ⊂ V_Λ ⊗ V_λ ⊗ V_λ* ⊗ V_Λ*` and
//! the coupling matrices `T_ij` restricted to them.
//!
//! Legs are numbered 0 (Λ at the origin), 1 (λ at w), 2 (λ* at w̄) and
//! 3 (Λ* at infinity). The basis is `v1 = ε_12 ε'_03` (product of the unit
//! singlets on legs 1,2 and 0,3) and its orthonormal completion `v2`, whose
//! sign is fixed by requiring `⟨v1|T_02|v2⟩ > 0`.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{q, Mat2, QSqrt, Q};
use crate::lie_algebra::{build_generators, casimir_value, GeneratorSet, Weight};
use crate::tensor::{fix_phase, singlet, TensorSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum InvariantCase {
    /// Λ defining rep, λ = Λ*.
    FundAntifund,
    /// Λ = ω_{n/2} (n even), λ defining rep.
    SelfAdjointFund,
}

impl InvariantCase {
    pub fn validate(self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::InvalidRank(n));
        }
        if self == InvariantCase::SelfAdjointFund && !n.is_multiple_of(2) {
            return Err(Error::OddRank(n));
        }
        Ok(())
    }
}

/// Generator sets for legs 0..3 of the given case.
pub fn leg_generators(case: InvariantCase, n: usize) -> Result<[GeneratorSet; 4]> {
    case.validate(n)?;
    let fund = build_generators(n, &Weight::fundamental(n, 1)?)?;
    Ok(match case {
        InvariantCase::FundAntifund => {
            let anti = fund.conjugate();
            [fund.clone(), anti.clone(), fund, anti]
        }
        InvariantCase::SelfAdjointFund => {
            let mid = build_generators(n, &Weight::fundamental(n, n / 2)?)?;
            let mid_conj = mid.conjugate();
            let anti = fund.conjugate();
            [mid, fund, anti, mid_conj]
        }
    })
}

#[derive(Clone, Debug)]
pub struct InvariantSpace {
    pub case: InvariantCase,
    pub n: usize,
    pub space: TensorSpace,
    /// Columns v1, v2.
    pub basis: DMatrix<C64>,
    pub t01: Matrix2<f64>,
    pub t02: Matrix2<f64>,
    pub t12: Matrix2<f64>,
}

impl InvariantSpace {
    pub fn leg_weights(&self) -> Vec<Weight> {
        self.space.legs.iter().map(|g| g.weight.clone()).collect()
    }

    /// Casimir of the bulk leg λ (= 2h_λ/ν).
    pub fn bulk_casimir(&self) -> f64 {
        self.space.leg_casimir(1)
    }

    pub fn v1(&self) -> DVector<C64> {
        self.basis.column(0).into_owned()
    }

    pub fn v2(&self) -> DVector<C64> {
        self.basis.column(1).into_owned()
    }

    /// `T01 + T02 + T12 + C_λ`, which vanishes on W^g.
    pub fn tfn1_residual(&self) -> f64 {
        let c = self.bulk_casimir();
        (self.t01 + self.t02 + self.t12 + Matrix2::identity() * c).amax()
    }

    /// Gram matrix deviation from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        (self.basis.adjoint() * &self.basis - DMatrix::<C64>::identity(2, 2)).camax()
    }
}

fn to_real_2x2(m: &DMatrix<C64>) -> Result<Matrix2<f64>> {
    let imag = m.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if imag > 1e-10 {
        return Err(Error::Inconsistent(format!(
            "restricted coupling has imaginary part {imag:e}"
        )));
    }
    Ok(Matrix2::new(m[(0, 0)].re, m[(0, 1)].re, m[(1, 0)].re, m[(1, 1)].re))
}

pub fn build_invariant_space(case: InvariantCase, n: usize) -> Result<InvariantSpace> {
    let legs = leg_generators(case, n)?;
    let eps12 = singlet(&legs[1], &legs[2])?;
    let eps03 = singlet(&legs[0], &legs[3])?;
    let space = TensorSpace::new(legs.to_vec());
    let null = space.invariant_basis();
    if null.ncols() != 2 {
        return Err(Error::InvariantDimension(null.ncols()));
    }

    let dims = space.dims().to_vec();
    let (d1, d2, d3) = (dims[1], dims[2], dims[3]);
    let mut v1 = DVector::<C64>::zeros(space.dim());
    for (idx, slot) in v1.iter_mut().enumerate() {
        let i3 = idx % d3;
        let i2 = (idx / d3) % d2;
        let i1 = (idx / (d3 * d2)) % d1;
        let i0 = idx / (d3 * d2 * d1);
        *slot = eps03[i0 * d3 + i3] * eps12[i1 * d2 + i2];
    }
    // v1 must lie in the computed null space
    let proj = &null * (null.adjoint() * &v1);
    let miss = (&proj - &v1).camax();
    if miss > 1e-9 {
        return Err(Error::Inconsistent(format!(
            "ε_12 ε'_03 is not invariant (defect {miss:e})"
        )));
    }

    let v2 = (0..2)
        .map(|c| {
            let col = null.column(c).into_owned();
            let overlap = v1.dotc(&col);
            &col - &v1 * overlap
        })
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("two columns");
    let mut v2 = v2.normalize();
    fix_phase(&mut v2);

    let t02_full = space.coupling(0, 2)?;
    let off = v1.dotc(&(&t02_full * &v2));
    if off.re < 0.0 {
        v2 = -v2;
    }

    let mut basis = DMatrix::<C64>::zeros(space.dim(), 2);
    basis.set_column(0, &v1);
    basis.set_column(1, &v2);

    let restrict = |i: usize, j: usize| -> Result<Matrix2<f64>> {
        let full = if (i, j) == (0, 2) {
            t02_full.clone()
        } else {
            space.coupling(i, j)?
        };
        to_real_2x2(&TensorSpace::restrict(&full, &basis))
    };
    let t01 = restrict(0, 1)?;
    let t02 = restrict(0, 2)?;
    let t12 = restrict(1, 2)?;
    Ok(InvariantSpace {
        case,
        n,
        space,
        basis,
        t01,
        t02,
        t12,
    })
}

/// `T_ij` restricted to W^g in the (v1, v2) basis, for any pair of the four
/// legs.
pub fn coupling_matrix(space: &InvariantSpace, i: usize, j: usize) -> Result<Matrix2<f64>> {
    if i == j {
        return Err(Error::SameLeg(i));
    }
    for leg in [i, j] {
        if leg > 3 {
            return Err(Error::LegOutOfRange { leg, legs: 4 });
        }
    }
    match (i.min(j), i.max(j)) {
        (0, 1) => Ok(space.t01),
        (0, 2) => Ok(space.t02),
        (1, 2) => Ok(space.t12),
        (a, b) => {
            let full = space.space.coupling(a, b)?;
            to_real_2x2(&TensorSpace::restrict(&full, &space.basis))
        }
    }
}

/// Exact `T01, T02, T12` on W^g in closed form.
///
/// FundAntifund: radicand `n² − 1`,
/// `T01 = −(1/n)[[0, s], [s, n² − 2]]`, `T02 = (1/n)[[0, s], [s, −2]]`.
/// SelfAdjointFund: radicand `n + 1`,
/// `T01 = −½[[0, s], [s, n]]`, `T02 = ½[[0, s], [s, −n]]`.
/// In both cases `T12 = (1/n) diag(1 − n², 1)`.
///
/// The self-adjoint off-diagonal is `√(n + 1)`: it is the only value
/// compatible with the spectrum {−(n+1)/2, 1/2} of T01 and T02.
pub fn closed_form_couplings(case: InvariantCase, n: usize) -> Result<[Mat2; 3]> {
    case.validate(n)?;
    let ni = n as i128;
    let (d, t01, t02) = match case {
        InvariantCase::FundAntifund => {
            let d = ni * ni - 1;
            let s = QSqrt::surd(q(1, ni), d);
            let t01 = [[QSqrt::zero(d), -s], [-s, QSqrt::rational(q(-(ni * ni - 2), ni), d)]];
            let t02 = [[QSqrt::zero(d), s], [s, QSqrt::rational(q(-2, ni), d)]];
            (d, t01, t02)
        }
        InvariantCase::SelfAdjointFund => {
            let d = ni + 1;
            let s = QSqrt::surd(q(1, 2), d);
            let t01 = [[QSqrt::zero(d), -s], [-s, QSqrt::rational(q(-ni, 2), d)]];
            let t02 = [[QSqrt::zero(d), s], [s, QSqrt::rational(q(-ni, 2), d)]];
            (d, t01, t02)
        }
    };
    let t12 = [
        [QSqrt::rational(q(1 - ni * ni, ni), d), QSqrt::zero(d)],
        [QSqrt::zero(d), QSqrt::rational(q(1, ni), d)],
    ];
    Ok([t01, t02, t12])
}

/// Irreducible components of `V_i ⊗ V_j` that meet W^g, as Dynkin labels.
fn pair_decomposition(case: InvariantCase, n: usize, pair: (usize, usize)) -> [Vec<u32>; 2] {
    let omega = |m: usize| -> Vec<u32> {
        let mut l = vec![0; n - 1];
        if (1..n).contains(&m) {
            l[m - 1] += 1;
        }
        l
    };
    let add = |a: Vec<u32>, b: Vec<u32>| -> Vec<u32> { a.iter().zip(&b).map(|(x, y)| x + y).collect() };
    let trivial = vec![0; n - 1];
    let adjoint = add(omega(1), omega(n - 1));
    match (case, pair) {
        (_, (1, 2)) => [trivial, adjoint],
        (InvariantCase::FundAntifund, (0, 1)) => [trivial, adjoint],
        (InvariantCase::FundAntifund, _) => [add(omega(1), omega(1)), omega(2)],
        (InvariantCase::SelfAdjointFund, (0, 1)) => [omega(n / 2 + 1), add(omega(1), omega(n / 2))],
        (InvariantCase::SelfAdjointFund, _) => [omega(n / 2 - 1), add(omega(n / 2), omega(n - 1))],
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEntry {
    pub pair: (usize, usize),
    /// `½(C_R − C_i − C_j)` over the two components R, ascending.
    #[serde(skip)]
    pub predicted_exact: [Q; 2],
    pub predicted: [f64; 2],
    pub computed: [f64; 2],
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub case: InvariantCase,
    pub n: usize,
    pub entries: Vec<SpectrumEntry>,
}

impl SpectrumReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

fn sorted_eigenvalues(m: &Matrix2<f64>) -> [f64; 2] {
    let ev = SymmetricEigen::new(*m).eigenvalues;
    let (a, b) = (ev[0], ev[1]);
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Compares the spectrum of each restricted `T_ij` with the Casimir
/// differences of the tensor-product decomposition.
pub fn eigen_spectrum_check(space: &InvariantSpace) -> Result<SpectrumReport> {
    let n = space.n;
    let mut entries = Vec::new();
    for (pair, m) in [((0, 1), space.t01), ((0, 2), space.t02), ((1, 2), space.t12)] {
        let ci = space.space.legs[pair.0].weight.casimir;
        let cj = space.space.legs[pair.1].weight.casimir;
        let comps = pair_decomposition(space.case, n, pair);
        let mut exact = [Q::from_integer(0); 2];
        for (slot, labels) in exact.iter_mut().zip(comps.iter()) {
            *slot = q(1, 2) * (casimir_value(n, labels)? - ci - cj);
        }
        exact.sort();
        let predicted = exact.map(|x| crate::exact::q_to_f64(&x));
        let computed = sorted_eigenvalues(&m);
        let residual = (0..2).map(|i| (predicted[i] - computed[i]).abs()).fold(0.0, f64::max);
        entries.push(SpectrumEntry {
            pair,
            predicted_exact: exact,
            predicted,
            computed,
            residual,
        });
    }
    Ok(SpectrumReport {
        case: space.case,
        n,
        entries,
    })
}

/// Conformal weight of the bulk field λ at level one, `(n − 1)/(2n)`.
pub fn bulk_weight_level1(n: usize) -> Q {
    q(n as i128 - 1, 2 * n as i128)
}

/// `ν = 1/(k + n)` at level one.
pub fn nu_level1(n: usize) -> Q {
    q(1, n as i128 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::mat2_to_f64;

    fn max_diff(a: &Matrix2<f64>, b: [[f64; 2]; 2]) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((a[(i, j)] - b[i][j]).abs());
            }
        }
        m
    }

    #[test]
    fn fund_antifund_n2() {
        let s = build_invariant_space(InvariantCase::FundAntifund, 2).unwrap();
        let r3 = 3f64.sqrt();
        assert!(max_diff(&s.t01, [[0.0, -r3 / 2.0], [-r3 / 2.0, -1.0]]) < 1e-12);
        assert!(max_diff(&s.t12, [[-1.5, 0.0], [0.0, 0.5]]) < 1e-12);
    }

    #[test]
    fn fund_antifund_n3_t12() {
        let s = build_invariant_space(InvariantCase::FundAntifund, 3).unwrap();
        assert!(max_diff(&s.t12, [[-8.0 / 3.0, 0.0], [0.0, 1.0 / 3.0]]) < 1e-12);
    }

    #[test]
    fn self_adjoint_n4() {
        let s = build_invariant_space(InvariantCase::SelfAdjointFund, 4).unwrap();
        let r5 = 5f64.sqrt();
        assert!(
            max_diff(&s.t01, [[0.0, -r5 / 2.0], [-r5 / 2.0, -2.0]]) < 1e-12,
            "{}",
            s.t01
        );
        assert!(
            max_diff(&s.t02, [[0.0, r5 / 2.0], [r5 / 2.0, -2.0]]) < 1e-12,
            "{}",
            s.t02
        );
    }

    #[test]
    fn null_space_matches_closed_forms() {
        let cases = [
            (InvariantCase::FundAntifund, vec![2, 3, 4, 5]),
            (InvariantCase::SelfAdjointFund, vec![2, 4]),
        ];
        for (case, ns) in cases {
            for n in ns {
                let s = build_invariant_space(case, n).unwrap();
                let cf = closed_form_couplings(case, n).unwrap();
                for (m, c) in [s.t01, s.t02, s.t12].iter().zip(cf.iter()) {
                    assert!(max_diff(m, mat2_to_f64(c)) < 1e-12, "{case:?} n={n}\n{m}");
                }
                assert!(s.tfn1_residual() < 1e-12);
                assert!(s.orthonormality_defect() < 1e-12);
            }
        }
    }

    #[test]
    fn off_diagonal_radicand_n_minus_1_breaks_the_spectrum() {
        // [[0, s], [s, n]] has eigenvalues {n + 1, −1} only for s² = n + 1
        let n = 4.0f64;
        let s2 = n - 1.0;
        let disc = (n * n + 4.0 * s2).sqrt();
        let top = (n + disc) / 2.0;
        assert!((top - (n + 1.0)).abs() > 0.1);
    }

    #[test]
    fn coupling_matrix_symmetry_and_errors() {
        let s = build_invariant_space(InvariantCase::FundAntifund, 3).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)] {
            let a = coupling_matrix(&s, i, j).unwrap();
            let b = coupling_matrix(&s, j, i).unwrap();
            assert!((a - b).amax() < 1e-14);
            assert!((a - a.transpose()).amax() < 1e-12);
        }
        assert_eq!(coupling_matrix(&s, 2, 2), Err(Error::SameLeg(2)));
        assert!(matches!(coupling_matrix(&s, 0, 4), Err(Error::LegOutOfRange { .. })));
        // T03 = T12 on W^g, both measured against the same singlet structure
        let t03 = coupling_matrix(&s, 0, 3).unwrap();
        assert!((t03 - s.t12).amax() < 1e-12);
    }

    #[test]
    fn spectrum_examples() {
        let s = build_invariant_space(InvariantCase::FundAntifund, 3).unwrap();
        let r = eigen_spectrum_check(&s).unwrap();
        let t02 = &r.entries[1];
        assert_eq!(t02.predicted_exact, [q(-4, 3), q(2, 3)]);
        assert!(t02.residual < 1e-12);
        assert!(r.max_residual() < 1e-12);

        let s = build_invariant_space(InvariantCase::SelfAdjointFund, 4).unwrap();
        let r = eigen_spectrum_check(&s).unwrap();
        assert_eq!(r.entries[0].predicted_exact, [q(-5, 2), q(1, 2)]);
        assert!(r.max_residual() < 1e-12);

        let s = build_invariant_space(InvariantCase::FundAntifund, 2).unwrap();
        let r = eigen_spectrum_check(&s).unwrap();
        assert_eq!(r.entries[2].predicted_exact, [q(-3, 2), q(1, 2)]);
    }

    #[test]
    fn odd_self_adjoint_rejected() {
        assert_eq!(
            build_invariant_space(InvariantCase::SelfAdjointFund, 3).err(),
            Some(Error::OddRank(3))
        );
    }
}
