//! Closed-form level-one conformal blocks, KZ residuals and the algebraic
//! martingale matrices.
//!
//! A one-point block is `F(x) = x^a (1 − x)^b F0(x)` with `F0` linear in `x`,
//! written in the (v1, v2) basis of [`crate::invariant_space`].

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::branch::PowerBranch;
use crate::error::{Error, Result};
use crate::exact::{
    mat2_add, mat2_identity, mat2_mul, mat2_scale, polymat_apply, polymat_det, q, q_to_f64, qi, Mat2, Poly, PolyMat2,
    QSqrt, Q,
};
use crate::invariant_space::{closed_form_couplings, InvariantCase, InvariantSpace};
use crate::tensor::TensorSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BlockCase {
    /// su(2) at level one, spin-½ everywhere.
    Su2Level1,
    /// su(n) at level one, Λ defining, λ = Λ*.
    SunFundLevel1,
    /// su(n), n even, level one, Λ = ω_{n/2}, λ defining.
    SunSelfAdjLevel1,
}

impl BlockCase {
    pub fn invariant_case(self) -> InvariantCase {
        match self {
            BlockCase::Su2Level1 | BlockCase::SunFundLevel1 => InvariantCase::FundAntifund,
            BlockCase::SunSelfAdjLevel1 => InvariantCase::SelfAdjointFund,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BlockCase::Su2Level1 => "su2",
            BlockCase::SunFundLevel1 => "sun-fund",
            BlockCase::SunSelfAdjLevel1 => "sun-selfadj",
        }
    }
}

impl std::str::FromStr for BlockCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "su2" => Ok(BlockCase::Su2Level1),
            "sun-fund" | "fund" => Ok(BlockCase::SunFundLevel1),
            "sun-selfadj" | "selfadj" => Ok(BlockCase::SunSelfAdjLevel1),
            other => Err(Error::InvalidParameter(format!("unknown block case '{other}'"))),
        }
    }
}

/// A validated (case, n) pair with its exponents and level-one data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Block {
    pub case: BlockCase,
    pub n: usize,
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub x_exponent: Q,
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub one_minus_x_exponent: Q,
    /// Conformal weight of the bulk field.
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub h: Q,
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub nu: Q,
    /// Radicand of the √ appearing in F0 and in the couplings.
    pub radicand: i128,
}

impl Block {
    pub fn new(case: BlockCase, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidRank(n));
        }
        let ni = n as i128;
        let h = q(ni - 1, 2 * ni);
        let nu = q(1, ni + 1);
        let (x_exponent, one_minus_x_exponent, radicand) = match case {
            BlockCase::Su2Level1 => {
                if n != 2 {
                    return Err(Error::InvalidParameter(format!("su2 case needs n = 2, got {n}")));
                }
                (q(-1, 2), q(-1, 2), 3)
            }
            BlockCase::SunFundLevel1 => (q(1, ni) - qi(1), q(1, ni) - qi(1), ni * ni - 1),
            BlockCase::SunSelfAdjLevel1 => {
                if !n.is_multiple_of(2) {
                    return Err(Error::OddRank(n));
                }
                (q(-1, 2), q(1, ni) - qi(1), ni + 1)
            }
        };
        Ok(Self {
            case,
            n,
            x_exponent,
            one_minus_x_exponent,
            h,
            nu,
            radicand,
        })
    }

    fn surd(&self) -> f64 {
        (self.radicand as f64).sqrt()
    }

    /// `F0` as exact polynomials.
    pub fn f0_poly(&self) -> [Poly; 2] {
        let d = self.radicand;
        let first = match self.case {
            BlockCase::SunFundLevel1 => Poly::from_rationals(&[qi(1), qi(self.n as i128 - 1)], d),
            _ => Poly::from_rationals(&[qi(1), qi(1)], d),
        };
        let s = QSqrt::surd(qi(1), d);
        [first, Poly::from_coeffs(vec![s, -s], d)]
    }

    pub fn f0(&self, x: C64) -> Vector2<C64> {
        let s = self.surd();
        let first = match self.case {
            BlockCase::SunFundLevel1 => x * (self.n as f64 - 1.0) + 1.0,
            _ => x + 1.0,
        };
        Vector2::new(first, (C64::new(1.0, 0.0) - x) * s)
    }

    pub fn f0_derivative(&self) -> Vector2<C64> {
        let first = match self.case {
            BlockCase::SunFundLevel1 => self.n as f64 - 1.0,
            _ => 1.0,
        };
        Vector2::new(C64::new(first, 0.0), C64::new(-self.surd(), 0.0))
    }

    pub fn exponents_f64(&self) -> (f64, f64) {
        (q_to_f64(&self.x_exponent), q_to_f64(&self.one_minus_x_exponent))
    }

    pub fn h_f64(&self) -> f64 {
        q_to_f64(&self.h)
    }

    pub fn nu_f64(&self) -> f64 {
        q_to_f64(&self.nu)
    }

    /// τ on the line `κ + τ n = 4`.
    pub fn tau_for_kappa(&self, kappa: Q) -> Q {
        (qi(4) - kappa) / qi(self.n as i128)
    }

    /// (κ, τ) at which the printed closed-form martingale matrix applies.
    /// The su(2) family holds for every κ; κ = 2 is returned.
    pub fn reference_parameters(&self) -> (Q, Q) {
        let ni = self.n as i128;
        match self.case {
            BlockCase::Su2Level1 => (qi(2), qi(1)),
            BlockCase::SunFundLevel1 => (qi(2), q(2, ni)),
            BlockCase::SunSelfAdjLevel1 => (q(8, ni + 2), q(4, ni + 2)),
        }
    }

    fn check_regular(x: C64) -> Result<()> {
        if !x.is_finite() || x.norm() < 1e-300 || (x - 1.0).norm() < 1e-300 {
            return Err(Error::SingularPosition(format!("x = {x}")));
        }
        Ok(())
    }

    /// Scalar prefactor on the principal branch.
    pub fn prefactor_principal(&self, x: C64) -> Result<C64> {
        Self::check_regular(x)?;
        let (a, b) = self.exponents_f64();
        Ok(x.powf(a) * (C64::new(1.0, 0.0) - x).powf(b))
    }

    /// `F(x)` on the principal branch.
    pub fn eval_principal(&self, x: C64) -> Result<Vector2<C64>> {
        Ok(self.f0(x) * self.prefactor_principal(x)?)
    }

    /// `F'(x)` on the principal branch, differentiated analytically.
    pub fn derivative_principal(&self, x: C64) -> Result<Vector2<C64>> {
        let p = self.prefactor_principal(x)?;
        let (a, b) = self.exponents_f64();
        let log_der = a / x - b / (C64::new(1.0, 0.0) - x);
        Ok((self.f0_derivative() + self.f0(x) * log_der) * p)
    }
}

/// `F0(x)` for a case, n pair.
pub fn block_f0(case: BlockCase, n: usize, x: C64) -> Result<Vector2<C64>> {
    Ok(Block::new(case, n)?.f0(x))
}

/// Branch-tracked evaluation of `F(x)` along a path in `C \ {0, 1}`.
#[derive(Clone, Debug)]
pub struct BlockBranch {
    pub block: Block,
    x: C64,
    x_pow: PowerBranch,
    one_minus_pow: PowerBranch,
}

const ANCHOR: f64 = 0.5;

impl BlockBranch {
    /// Principal branch at a real anchor in (0, 1).
    pub fn anchored(block: Block, x0: f64) -> Result<Self> {
        if !(x0 > 0.0 && x0 < 1.0) {
            return Err(Error::InvalidParameter(format!("anchor {x0} must lie in (0, 1)")));
        }
        let (a, b) = block.exponents_f64();
        let x = C64::new(x0, 0.0);
        Ok(Self {
            x,
            x_pow: PowerBranch::principal(x, a)?,
            one_minus_pow: PowerBranch::principal(C64::new(1.0 - x0, 0.0), b)?,
            block,
        })
    }

    /// Anchors at ½ and continues to `x`, passing above or below the real
    /// axis according to the sign of `Im x`.
    pub fn at(block: Block, x: C64) -> Result<Self> {
        let mut br = Self::anchored(block, ANCHOR)?;
        let side = if x.im < 0.0 { -1.0 } else { 1.0 };
        let real_inside = x.im == 0.0 && x.re > 0.0 && x.re < 1.0;
        if !real_inside {
            br.advance(C64::new(ANCHOR, 0.5 * side))?;
        }
        br.advance(x)?;
        Ok(br)
    }

    pub fn x(&self) -> C64 {
        self.x
    }

    pub fn prefactor(&self) -> C64 {
        self.x_pow.value * self.one_minus_pow.value
    }

    pub fn value(&self) -> Vector2<C64> {
        self.block.f0(self.x) * self.prefactor()
    }

    /// Moves to `x` along a straight segment, subdividing so that each
    /// piece is short compared with the distance to 0 and 1.
    pub fn advance(&mut self, x: C64) -> Result<Vector2<C64>> {
        Block::check_regular(x)?;
        const MAX_PIECES: usize = 100_000;
        for _ in 0..MAX_PIECES {
            let cur = self.x;
            let gap = cur.norm().min((cur - 1.0).norm());
            let left = (x - cur).norm();
            let next = if left <= 0.25 * gap {
                x
            } else {
                cur + (x - cur) * (0.25 * gap / left)
            };
            self.step(next)?;
            if next == x {
                return Ok(self.value());
            }
        }
        Err(Error::BranchLost(format!("path to x = {x} runs into a branch point")))
    }

    fn step(&mut self, x: C64) -> Result<()> {
        self.x_pow.update(x)?;
        self.one_minus_pow.update(C64::new(1.0, 0.0) - x)?;
        self.x = x;
        Ok(())
    }

    /// `F` at a point close to the current one, continued locally without
    /// moving the tracked state.
    pub fn value_near(&self, x: C64) -> Result<Vector2<C64>> {
        Block::check_regular(x)?;
        let (a, b) = self.block.exponents_f64();
        let r1 = x / self.x;
        let r2 = (C64::new(1.0, 0.0) - x) / (C64::new(1.0, 0.0) - self.x);
        if r1.arg().abs() > crate::branch::MAX_ARG_JUMP || r2.arg().abs() > crate::branch::MAX_ARG_JUMP {
            return Err(Error::BranchLost(format!("{x} is too far from {}", self.x)));
        }
        let p = self.x_pow.value * r1.powf(a) * self.one_minus_pow.value * r2.powf(b);
        Ok(self.block.f0(x) * p)
    }
}

/// Continues the tracked branch to `x` and returns `F(x)`.
pub fn block_eval(branch: &mut BlockBranch, x: C64) -> Result<Vector2<C64>> {
    branch.advance(x)
}

/// Restricted couplings `T01, T02, T12` in floating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Couplings {
    pub t01: Matrix2<f64>,
    pub t02: Matrix2<f64>,
    pub t12: Matrix2<f64>,
}

impl Couplings {
    pub fn from_space(space: &InvariantSpace) -> Self {
        Self {
            t01: space.t01,
            t02: space.t02,
            t12: space.t12,
        }
    }

    pub fn closed_form(block: &Block) -> Result<Self> {
        let [a, b, c] = closed_form_couplings(block.case.invariant_case(), block.n)?;
        let f = |m: &Mat2| {
            let v = crate::exact::mat2_to_f64(m);
            Matrix2::new(v[0][0], v[0][1], v[1][0], v[1][1])
        };
        Ok(Self {
            t01: f(&a),
            t02: f(&b),
            t12: f(&c),
        })
    }
}

fn cplx(m: &Matrix2<f64>) -> Matrix2<C64> {
    m.map(|v| C64::new(v, 0.0))
}

/// `(1/ν) F' − (T01/x + T12/(x − 1)) F`.
pub fn kz_residual(block: &Block, t: &Couplings, x: C64) -> Result<Vector2<C64>> {
    let f = block.eval_principal(x)?;
    let df = block.derivative_principal(x)?;
    let nu = block.nu_f64();
    let conn = cplx(&t.t01) / x + cplx(&t.t12) / (x - 1.0);
    Ok(df.map(|v| v / nu) - conn * f)
}

/// `((1/ν) x ∂ + 2h/ν + T02 − T12/(x − 1)) F`.
pub fn kz3c_residual(block: &Block, t: &Couplings, x: C64) -> Result<Vector2<C64>> {
    let f = block.eval_principal(x)?;
    let df = block.derivative_principal(x)?;
    let nu = block.nu_f64();
    let h = block.h_f64();
    let op = cplx(&t.t02) - cplx(&t.t12) / (x - 1.0);
    Ok(df * (x / nu) + f * c(2.0 * h / nu) + op * f)
}

/// `A = (4 − κ) T0i + κν T0i² + (h/ν)(2τ/ν − 4)`.
pub fn a_matrix_exact(t0i: &Mat2, h: Q, nu: Q, kappa: Q, tau: Q) -> Mat2 {
    let d = t0i[0][0].d;
    let r = |x: Q| QSqrt::rational(x, d);
    let sq = mat2_mul(t0i, t0i);
    let shift = h / nu * (qi(2) * tau / nu - qi(4));
    mat2_add(
        &mat2_add(&mat2_scale(t0i, r(qi(4) - kappa)), &mat2_scale(&sq, r(kappa * nu))),
        &mat2_scale(&mat2_identity(d), r(shift)),
    )
}

/// `B = (2τ/ν − 4) Tij + κν (T0i T0j + T0j T0i)`.
pub fn b_matrix_exact(t0i: &Mat2, t0j: &Mat2, tij: &Mat2, nu: Q, kappa: Q, tau: Q) -> Mat2 {
    let d = tij[0][0].d;
    let r = |x: Q| QSqrt::rational(x, d);
    let anti = mat2_add(&mat2_mul(t0i, t0j), &mat2_mul(t0j, t0i));
    mat2_add(
        &mat2_scale(tij, r(qi(2) * tau / nu - qi(4))),
        &mat2_scale(&anti, r(kappa * nu)),
    )
}

/// `M(x) = A1 + x² A2 + x B12` over Q(√d)[x].
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleMatrix {
    pub poly: PolyMat2,
    pub kappa: Q,
    pub tau: Q,
    pub nu: Q,
    pub h: Q,
}

impl MartingaleMatrix {
    pub fn eval(&self, x: C64) -> Matrix2<C64> {
        Matrix2::from_fn(|i, j| self.poly[i][j].eval_f64(x))
    }

    pub fn is_zero(&self) -> bool {
        self.poly.iter().flatten().all(Poly::is_zero)
    }

    pub fn det(&self) -> Poly {
        polymat_det(&self.poly)
    }

    pub fn apply(&self, v: &[Poly; 2]) -> [Poly; 2] {
        polymat_apply(&self.poly, v)
    }

    pub fn is_symmetric(&self) -> bool {
        self.poly[0][1] == self.poly[1][0]
    }
}

pub fn martingale_matrix_1pt(block: &Block, kappa: Q, tau: Q) -> Result<MartingaleMatrix> {
    let [t01, t02, t12] = closed_form_couplings(block.case.invariant_case(), block.n)?;
    let (h, nu) = (block.h, block.nu);
    let a1 = a_matrix_exact(&t01, h, nu, kappa, tau);
    let a2 = a_matrix_exact(&t02, h, nu, kappa, tau);
    let b12 = b_matrix_exact(&t01, &t02, &t12, nu, kappa, tau);
    let d = block.radicand;
    let entry = |i: usize, j: usize| Poly::from_coeffs(vec![a1[i][j], b12[i][j], a2[i][j]], d);
    let poly = [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]];
    Ok(MartingaleMatrix {
        poly,
        kappa,
        tau,
        nu,
        h,
    })
}

/// The printed closed form `c · u uᵀ` of M(x) at the reference parameters
/// (for su(2), at any κ with τ = 2 − κ/2). Returns (τ, matrix).
pub fn closed_form_martingale(block: &Block, kappa: Q) -> Result<(Q, PolyMat2)> {
    let ni = block.n as i128;
    let d = block.radicand;
    let (ref_kappa, ref_tau) = block.reference_parameters();
    let (tau, c, second) = match block.case {
        BlockCase::Su2Level1 => (qi(2) - kappa / qi(2), qi(2) * (qi(3) - kappa), [qi(1), qi(1)]),
        BlockCase::SunFundLevel1 => {
            if kappa != ref_kappa {
                return Err(Error::InvalidParameter("closed form holds at κ = 2 only".into()));
            }
            (ref_tau, q(2 * (ni * ni + ni - 2), ni * ni), [qi(1), qi(ni - 1)])
        }
        BlockCase::SunSelfAdjLevel1 => {
            if kappa != ref_kappa {
                return Err(Error::InvalidParameter(
                    "closed form holds at κ = 8/(n + 2) only".into(),
                ));
            }
            (ref_tau, q(2 * ni * ni, ni + 2), [qi(1), qi(1)])
        }
    };
    let inv_s = QSqrt::surd(q(1, d), d);
    let u = [
        Poly::from_rationals(&[qi(-1), qi(1)], d),
        Poly::from_rationals(&second, d).scale(inv_s),
    ];
    let cq = QSqrt::rational(c, d);
    let m = |i: usize, j: usize| (&u[i] * &u[j]).scale(cq);
    Ok((tau, [[m(0, 0), m(0, 1)], [m(1, 0), m(1, 1)]]))
}

/// Exact check that `M(x) F0(x) ≡ 0`.
pub fn kernel_check_1pt(block: &Block, kappa: Q, tau: Q) -> Result<bool> {
    let m = martingale_matrix_1pt(block, kappa, tau)?;
    let r = m.apply(&block.f0_poly());
    Ok(r.iter().all(Poly::is_zero))
}

/// `M(x)` in floating point from given couplings.
pub fn martingale_matrix_float(block: &Block, t: &Couplings, kappa: f64, tau: f64, x: C64) -> Matrix2<C64> {
    let nu = block.nu_f64();
    let h = block.h_f64();
    let shift = h / nu * (2.0 * tau / nu - 4.0);
    let a = |m: &Matrix2<f64>| (4.0 - kappa) * m + kappa * nu * m * m + Matrix2::identity() * shift;
    let b = (2.0 * tau / nu - 4.0) * t.t12 + kappa * nu * (t.t01 * t.t02 + t.t02 * t.t01);
    cplx(&a(&t.t01)) + cplx(&a(&t.t02)) * (x * x) + cplx(&b) * x
}

/// Max norm of `M(x) F0(x)` over the sample points.
pub fn kernel_residual_float(block: &Block, t: &Couplings, kappa: f64, tau: f64, xs: &[C64]) -> f64 {
    xs.iter()
        .map(|&x| (martingale_matrix_float(block, t, kappa, tau, x) * block.f0(x)).camax())
        .fold(0.0, f64::max)
}

/// Numerical rank of a 2×2 matrix: singular values below `tol · σ_max` (or
/// below `tol` in absolute terms) count as zero.
pub fn numeric_rank(m: &Matrix2<C64>, tol: f64) -> usize {
    let sv = m.singular_values();
    let top = sv.max();
    if top <= tol {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * top).count()
}

/// Quadratic `ν κ t² + (4 − κ) t + (h/ν)(2τ/ν − 4)` whose roots are the
/// only eigenvalues allowed for T0i on W^g if `A_i` is to vanish there.
/// Coefficients are listed constant term first.
pub fn a_projection_quadratic(h: Q, nu: Q, kappa: Q, tau: Q) -> [Q; 3] {
    [h / nu * (qi(2) * tau / nu - qi(4)), qi(4) - kappa, kappa * nu]
}

pub fn renormalized_weight(h: f64, tau: f64, nu: f64) -> f64 {
    h * (1.0 - tau / (2.0 * nu))
}

/// κ, τ, ν for the full-space generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneratorParams {
    pub kappa: f64,
    pub tau: f64,
    pub nu: f64,
}

/// `h_i = ν C_i / 2` for a leg.
pub fn leg_weight(space: &TensorSpace, leg: usize, nu: f64) -> f64 {
    0.5 * nu * space.leg_casimir(leg)
}

fn identity_like(m: &DMatrix<C64>) -> DMatrix<C64> {
    DMatrix::identity(m.nrows(), m.ncols())
}

fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// `A_i` on the full tensor space.
pub fn a_matrix(space: &TensorSpace, leg: usize, p: &GeneratorParams) -> Result<DMatrix<C64>> {
    let t = space.coupling(0, leg)?;
    Ok(a_from(&t, leg_weight(space, leg, p.nu), p))
}

fn a_from(t0i: &DMatrix<C64>, h: f64, p: &GeneratorParams) -> DMatrix<C64> {
    let shift = h / p.nu * (2.0 * p.tau / p.nu - 4.0);
    t0i * c(4.0 - p.kappa) + (t0i * t0i) * c(p.kappa * p.nu) + identity_like(t0i) * c(shift)
}

/// `B_ij` on the full tensor space.
pub fn b_matrix(space: &TensorSpace, i: usize, j: usize, p: &GeneratorParams) -> Result<DMatrix<C64>> {
    let ti = space.coupling(0, i)?;
    let tj = space.coupling(0, j)?;
    let tij = space.coupling(i, j)?;
    Ok(b_from(&ti, &tj, &tij, p))
}

fn b_from(t0i: &DMatrix<C64>, t0j: &DMatrix<C64>, tij: &DMatrix<C64>, p: &GeneratorParams) -> DMatrix<C64> {
    tij * c(2.0 * p.tau / p.nu - 4.0) + (t0i * t0j + t0j * t0i) * c(p.kappa * p.nu)
}

fn check_positions(points: &[C64]) -> Result<()> {
    for (i, &w) in points.iter().enumerate() {
        if !w.is_finite() || w.norm() == 0.0 {
            return Err(Error::SingularPosition(format!("position {i} is {w}")));
        }
        for &v in &points[..i] {
            if (w - v).norm() == 0.0 {
                return Err(Error::SingularPosition(format!("coincident positions at {w}")));
            }
        }
    }
    Ok(())
}

fn assemble(space: &TensorSpace, points: &[(usize, C64)], p: &GeneratorParams) -> Result<DMatrix<C64>> {
    let t0: Vec<DMatrix<C64>> = points
        .iter()
        .map(|&(l, _)| space.coupling(0, l))
        .collect::<Result<_>>()?;
    let mut m = DMatrix::<C64>::zeros(space.dim(), space.dim());
    for (a, &(la, wa)) in points.iter().enumerate() {
        m += a_from(&t0[a], leg_weight(space, la, p.nu), p) / (wa * wa);
        for (b, &(lb, wb)) in points.iter().enumerate().skip(a + 1) {
            let tab = space.coupling(la, lb)?;
            m += b_from(&t0[a], &t0[b], &tab, p) / (wa * wb);
        }
    }
    Ok(m)
}

/// `M({w}) = Σ A_i / w_i² + Σ_{i<j} B_ij / (w_i w_j)` with `w_i` attached to
/// legs `1..=positions.len()`.
pub fn generator_matrix(space: &TensorSpace, positions: &[C64], p: &GeneratorParams) -> Result<DMatrix<C64>> {
    if positions.len() + 1 >= space.leg_count() {
        return Err(Error::LegOutOfRange {
            leg: positions.len(),
            legs: space.leg_count(),
        });
    }
    check_positions(positions)?;
    let pts: Vec<(usize, C64)> = positions.iter().enumerate().map(|(i, &w)| (i + 1, w)).collect();
    assemble(space, &pts, p)
}

/// `M̃`: as [`generator_matrix`] with one more insertion at the real point
/// `y`, carried by the last leg.
pub fn generator_matrix_rho(
    space: &TensorSpace,
    positions: &[C64],
    y: f64,
    p: &GeneratorParams,
) -> Result<DMatrix<C64>> {
    let last = space.leg_count() - 1;
    if positions.len() + 1 != last {
        return Err(Error::LegOutOfRange {
            leg: positions.len() + 1,
            legs: space.leg_count(),
        });
    }
    let mut all = positions.to_vec();
    all.push(c(y));
    check_positions(&all)?;
    let pts: Vec<(usize, C64)> = all.iter().enumerate().map(|(i, &w)| (i + 1, w)).collect();
    assemble(space, &pts, p)
}

/// Deviations of the su(2) identities `T0i² = h_i/ν − T0i` and
/// `T0i T0j + T0j T0i = T_ij` over all pairs of legs `1..legs−1`.
pub fn su2_identity_defects(space: &TensorSpace, nu: f64) -> Result<(f64, f64)> {
    let legs = space.leg_count();
    let mut sq: f64 = 0.0;
    let mut anti: f64 = 0.0;
    let t0: Vec<DMatrix<C64>> = (1..legs).map(|i| space.coupling(0, i)).collect::<Result<_>>()?;
    for i in 1..legs {
        let t = &t0[i - 1];
        let rhs = identity_like(t) * c(leg_weight(space, i, nu) / nu) - t;
        sq = sq.max((t * t - rhs).camax());
        for j in i + 1..legs {
            let u = &t0[j - 1];
            anti = anti.max((t * u + u * t - space.coupling(i, j)?).camax());
        }
    }
    Ok((sq, anti))
}

/// Result of comparing a finite-difference application of Θ with the
/// algebraic value `(ν/2) M({w}) f`.
#[derive(Clone, Debug)]
pub struct ThetaCheck {
    pub w: C64,
    pub finite_difference: Vector2<C64>,
    pub algebraic: Vector2<C64>,
    /// `|fd − alg| / max(|alg|, |f|)`.
    pub relative_error: f64,
}

const CONTOUR_POINTS: usize = 32;

/// First and second derivatives at 0 of `g` from a Cauchy contour of the
/// given radius.
fn contour_derivatives<F>(radius: f64, g: F) -> Result<(Vector2<C64>, Vector2<C64>)>
where
    F: Fn(C64) -> Result<Vector2<C64>>,
{
    let mut d1 = Vector2::zeros();
    let mut d2 = Vector2::zeros();
    let m = CONTOUR_POINTS as f64;
    for k in 0..CONTOUR_POINTS {
        let e = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m);
        let v = g(e * radius)?;
        d1 += v * (e.conj() / (radius * m));
        d2 += v * (e.conj() * e.conj() * 2.0 / (radius * radius * m));
    }
    Ok((d1, d2))
}

/// Applies Θ to `f(w1, w2) = w2^{−2h} F(w1/w2)` at `(w, w̄)` by contour
/// differentiation, treating `w1`, `w2` as independent.
pub fn theta_fd_check(block: &Block, t: &Couplings, kappa: f64, tau: f64, w: C64) -> Result<ThetaCheck> {
    if w.im <= 0.0 {
        return Err(Error::SingularPosition(format!(
            "w = {w} must lie in the upper half-plane"
        )));
    }
    let (w1, w2) = (w, w.conj());
    let h = block.h_f64();
    let nu = block.nu_f64();
    let br = BlockBranch::at(block.clone(), w1 / w2)?;
    let w2_pow = PowerBranch::principal(w2, -2.0 * h)?;
    let f = |a: C64, b: C64| -> Result<Vector2<C64>> {
        let ratio = b / w2;
        let pre = w2_pow.value * ratio.powf(-2.0 * h);
        Ok(br.value_near(a / b)? * pre)
    };
    let radius = 0.25 * w1.norm().min(w2.norm()).min((w1 - w2).norm());
    let f0 = f(w1, w2)?;
    let (d1, _) = contour_derivatives(radius, |s| f(w1 + s, w2))?;
    let (d2, _) = contour_derivatives(radius, |s| f(w1, w2 + s))?;
    let (_, dd) = contour_derivatives(radius, |s| f(w1 + s, w2 + s))?;

    let cas = 2.0 * h / nu;
    let t12 = cplx(&t.t12);
    let id = Matrix2::<C64>::identity();
    let gauge = id * c(cas) / (w1 * w1) + id * c(cas) / (w2 * w2) + t12 * (c(2.0) / (w1 * w2));
    let fd = d1 * (c(2.0) / w1) + d2 * (c(2.0) / w2) - f0 * (c(2.0 * h) / (w1 * w1) + c(2.0 * h) / (w2 * w2))
        + dd * c(kappa / 2.0)
        + gauge * f0 * c(tau / 2.0);

    let x = w1 / w2;
    let m = martingale_matrix_float(block, t, kappa, tau, x) / (w1 * w1);
    let algebraic = m * f0 * c(nu / 2.0);
    let scale = algebraic.norm().max(f0.norm());
    let relative_error = (fd - algebraic).norm() / scale;
    Ok(ThetaCheck {
        w,
        finite_difference: fd,
        algebraic,
        relative_error,
    })
}
