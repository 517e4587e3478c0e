//! Finite-dimensional su(n) data at level k.
//!
//! Generators are normalized so that `tr(tᵃ tᵇ) = δ_ab` in the defining
//! representation (generalized Gell-Mann matrices divided by √2). With this
//! normalization the quadratic Casimir on the irrep of highest weight Λ is
//! `(Λ, Λ + 2ρ)` with long roots of squared length 2, and the defining rep has
//! Casimir `(n² − 1)/n`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{q, qi, Q};

/// su(n) at level k with the derived quantities used throughout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AlgebraContext {
    pub n: usize,
    pub k: i128,
    pub h_dual: i128,
    pub dim_g: i128,
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub nu: Q,
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub central_charge: Q,
}

pub fn make_context(n: usize, k: i64) -> Result<AlgebraContext> {
    if n < 2 {
        return Err(Error::InvalidRank(n));
    }
    if k < 1 {
        return Err(Error::InvalidLevel(k));
    }
    let (ni, k) = (n as i128, k as i128);
    let h_dual = ni;
    let dim_g = ni * ni - 1;
    Ok(AlgebraContext {
        n,
        k,
        h_dual,
        dim_g,
        nu: q(1, k + h_dual),
        central_charge: q(k * dim_g, k + h_dual),
    })
}

impl AlgebraContext {
    /// `h_Λ = C_Λ / (2(k + h^∨))`.
    pub fn conformal_weight(&self, w: &Weight) -> Q {
        conformal_weight(self, w)
    }

    /// `k + h^∨ = 1/ν`.
    pub fn shifted_level(&self) -> i128 {
        self.k + self.h_dual
    }
}

/// Highest weight of su(n) given by Dynkin labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Weight {
    pub n: usize,
    pub labels: Vec<u32>,
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub casimir: Q,
}

impl Weight {
    pub fn new(n: usize, labels: Vec<u32>) -> Result<Self> {
        let casimir = casimir_value(n, &labels)?;
        Ok(Self { n, labels, casimir })
    }

    /// Fundamental weight ω_m; ω_0 and ω_n are the zero weight.
    pub fn fundamental(n: usize, m: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidRank(n));
        }
        let mut labels = vec![0; n - 1];
        if (1..n).contains(&m) {
            labels[m - 1] = 1;
        }
        Self::new(n, labels)
    }

    pub fn is_zero(&self) -> bool {
        self.labels.iter().all(|&a| a == 0)
    }

    /// Conjugate weight Λ*, obtained by reversing the labels.
    pub fn conjugate(&self) -> Self {
        let mut labels = self.labels.clone();
        labels.reverse();
        Self {
            n: self.n,
            labels,
            casimir: self.casimir,
        }
    }

    /// Sum of Dynkin labels, bounded by k for integrable weights.
    pub fn label_sum(&self) -> u32 {
        self.labels.iter().sum()
    }

    pub fn conformal_weight(&self, ctx: &AlgebraContext) -> Q {
        conformal_weight(ctx, self)
    }

    /// Index m if this is a fundamental weight ω_m.
    pub fn fundamental_index(&self) -> Option<usize> {
        let mut nonzero = self.labels.iter().enumerate().filter(|(_, &a)| a != 0);
        match (nonzero.next(), nonzero.next()) {
            (Some((i, &1)), None) => Some(i + 1),
            _ => None,
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        self.fundamental_index().map(|m| binomial(self.n, m))
    }
}

/// Inverse Cartan matrix of su(n), i.e. the quadratic form on weights in the
/// basis of fundamental weights: `(ω_i, ω_j) = min(i,j)(n − max(i,j))/n`.
fn weight_form(n: usize, i: usize, j: usize) -> Q {
    let (lo, hi) = (i.min(j) as i128, i.max(j) as i128);
    q(lo * (n as i128 - hi), n as i128)
}

/// Quadratic Casimir `(Λ, Λ + 2ρ)`; ρ has all Dynkin labels equal to one.
pub fn casimir_value(n: usize, labels: &[u32]) -> Result<Q> {
    if n < 2 {
        return Err(Error::InvalidRank(n));
    }
    if labels.len() != n - 1 {
        return Err(Error::LabelLength {
            expected: n - 1,
            got: labels.len(),
        });
    }
    let mut c = Q::zero();
    for (i, &a) in labels.iter().enumerate() {
        if a == 0 {
            continue;
        }
        for (j, &b) in labels.iter().enumerate() {
            c += qi(a as i128) * weight_form(n, i + 1, j + 1) * qi(b as i128 + 2);
        }
    }
    Ok(c)
}

pub fn conformal_weight(ctx: &AlgebraContext, w: &Weight) -> Q {
    w.casimir / qi(2 * ctx.shifted_level())
}

/// Hermitian generators of su(n) in some representation.
#[derive(Clone, Debug)]
pub struct GeneratorSet {
    pub n: usize,
    pub weight: Weight,
    pub matrices: Vec<DMatrix<C64>>,
    /// Indices of the diagonal (Cartan) generators.
    pub cartan: Vec<usize>,
    pub normalization: Normalization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// `tr(tᵃ tᵇ) = δ_ab` in the defining representation.
    TraceOrthonormal,
}

impl GeneratorSet {
    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    /// `Σ_a tᵃ tᵃ`.
    pub fn casimir_matrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        self.matrices.iter().fold(DMatrix::zeros(d, d), |acc, t| acc + t * t)
    }

    /// Conjugate representation, `tᵃ ↦ −(tᵃ)ᵀ`.
    pub fn conjugate(&self) -> Self {
        Self {
            n: self.n,
            weight: self.weight.conjugate(),
            matrices: self.matrices.iter().map(|t| -t.transpose()).collect(),
            cartan: self.cartan.clone(),
            normalization: self.normalization,
        }
    }

    /// Largest deviation from Hermiticity over all generators.
    pub fn hermiticity_defect(&self) -> f64 {
        self.matrices
            .iter()
            .map(|t| (t - t.adjoint()).camax())
            .fold(0.0, f64::max)
    }

    pub fn trace_defect(&self) -> f64 {
        self.matrices.iter().map(|t| t.trace().norm()).fold(0.0, f64::max)
    }

    /// Max deviation of `Σ tᵃtᵃ` from `C_Λ · I`.
    pub fn casimir_defect(&self) -> f64 {
        let c = crate::exact::q_to_f64(&self.weight.casimir);
        let d = self.dim();
        (self.casimir_matrix() - DMatrix::<C64>::identity(d, d) * C64::from(c)).camax()
    }
}

/// Generalized Gell-Mann basis scaled by 1/√2, ordered as symmetric and
/// antisymmetric off-diagonal pairs (j < k) followed by the n − 1 diagonal
/// generators. For n = 2 this is σ_x/√2, σ_y/√2, σ_z/√2.
pub fn defining_generators(n: usize) -> Result<Vec<DMatrix<C64>>> {
    if n < 2 {
        return Err(Error::InvalidRank(n));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n - 1);
    for j in 0..n {
        for k in j + 1..n {
            let mut sym = DMatrix::<C64>::zeros(n, n);
            sym[(j, k)] = C64::new(s, 0.0);
            sym[(k, j)] = C64::new(s, 0.0);
            out.push(sym);
            let mut anti = DMatrix::<C64>::zeros(n, n);
            anti[(j, k)] = C64::new(0.0, -s);
            anti[(k, j)] = C64::new(0.0, s);
            out.push(anti);
        }
    }
    for l in 1..n {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut diag = DMatrix::<C64>::zeros(n, n);
        for j in 0..l {
            diag[(j, j)] = C64::new(norm, 0.0);
        }
        diag[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
        out.push(diag);
    }
    Ok(out)
}

fn cartan_indices(n: usize) -> Vec<usize> {
    let off = n * (n - 1);
    (off..off + n - 1).collect()
}

/// Generators on the irrep of weight `w`, restricted to fundamental weights.
///
/// ω_1 is the defining rep, ω_{n−1} its conjugate `−tᵀ`, and any other ω_m is
/// realized on the m-th exterior power of the defining rep.
pub fn build_generators(n: usize, w: &Weight) -> Result<GeneratorSet> {
    if w.n != n || w.labels.len() + 1 != n {
        return Err(Error::LabelLength {
            expected: n.saturating_sub(1),
            got: w.labels.len(),
        });
    }
    let m = w.fundamental_index().ok_or_else(|| Error::UnsupportedWeight {
        labels: w.labels.clone(),
    })?;
    let fund = defining_generators(n)?;
    let matrices = if m == 1 {
        fund
    } else if m == n - 1 {
        fund.iter().map(|t| -t.transpose()).collect()
    } else {
        let basis = subsets(n, m);
        fund.iter().map(|t| exterior_power(t, &basis)).collect()
    };
    Ok(GeneratorSet {
        n,
        weight: w.clone(),
        matrices,
        cartan: cartan_indices(n),
        normalization: Normalization::TraceOrthonormal,
    })
}

/// Sorted m-subsets of 0..n in lexicographic order.
fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut Vec::new(), &mut out);
    out
}

/// Derivation action of `t` on `Λ^m V` in the basis `e_S = e_{s1} ∧ … ∧ e_{sm}`.
fn exterior_power(t: &DMatrix<C64>, basis: &[Vec<usize>]) -> DMatrix<C64> {
    let dim = basis.len();
    let index: std::collections::HashMap<&[usize], usize> =
        basis.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    let n = t.nrows();
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    for (col, set) in basis.iter().enumerate() {
        for (pos, &src) in set.iter().enumerate() {
            for dst in 0..n {
                let c = t[(dst, src)];
                if c == C64::zero() || (dst != src && set.contains(&dst)) {
                    continue;
                }
                let mut img = set.clone();
                img[pos] = dst;
                // bubble into sorted order, tracking the permutation sign
                let mut sign = 1.0;
                let mut p = pos;
                while p > 0 && img[p - 1] > img[p] {
                    img.swap(p - 1, p);
                    sign = -sign;
                    p -= 1;
                }
                while p + 1 < img.len() && img[p] > img[p + 1] {
                    img.swap(p, p + 1);
                    sign = -sign;
                    p += 1;
                }
                let row = index[img.as_slice()];
                out[(row, col)] += c * sign;
            }
        }
    }
    out
}

/// Structure constants `f_abc = −i tr([tᵃ, tᵇ] tᶜ)` of the defining rep, so
/// that `[tᵃ, tᵇ] = i Σ_c f_abc tᶜ`. Indexed `f[a][b][c]`.
pub fn structure_constants(n: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let t = defining_generators(n)?;
    let dim = t.len();
    let mut f = vec![vec![vec![0.0; dim]; dim]; dim];
    for a in 0..dim {
        for b in 0..dim {
            let comm = &t[a] * &t[b] - &t[b] * &t[a];
            for c in 0..dim {
                let v = (&comm * &t[c]).trace() * C64::new(0.0, -1.0);
                f[a][b][c] = v.re;
            }
        }
    }
    Ok(f)
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}
