//! Monte Carlo simulation of SLE_κ and SLE_{κ,ρ} with a group-valued
//! Brownian gauge factor, and a statistical test of the martingale property
//! of the one-point boundary observable.
//!
//! Two layers live here. [`SlePathState`] with [`step_sle`], [`step_sle_rho`]
//! and [`step_gauge`] is the literal Euler–Maruyama scheme on the full bulk
//! space. [`mc_martingale_test`] runs a faster scheme of the same weak order
//! (exact Loewner drift followed by the common Brownian shift, gauge factor
//! stored per bulk leg) over many paths in parallel.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::{martingale_matrix_float, Block, BlockCase, Couplings};
use crate::error::{Error, Result};
use crate::invariant_space::{build_invariant_space, InvariantSpace};
use crate::lie_algebra::GeneratorSet;

/// Paths closer than this multiple of √dt to a singular point are stopped.
pub const CUTOFF_FACTOR: f64 = 10.0;
/// Discard fraction above which a report is flagged unreliable.
pub const MAX_DISCARD_FRACTION: f64 = 0.05;
pub const PASS_Z: f64 = 3.0;
pub const CONTROL_Z: f64 = 5.0;

fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// State of one path: tracked points, their derivative factors, the optional
/// boundary target `y` and the gauge factor on the bulk tensor space.
#[derive(Clone, Debug)]
pub struct SlePathState {
    pub t: f64,
    pub w: Vec<C64>,
    pub deriv: Vec<C64>,
    pub y: Option<f64>,
    pub phi: DMatrix<C64>,
    pub discarded: bool,
}

impl SlePathState {
    /// A bulk point and its mirror, with identity gauge factor of size
    /// `gauge_dim`.
    pub fn new(z: C64, y: Option<f64>, gauge_dim: usize) -> Self {
        Self {
            t: 0.0,
            w: vec![z, z.conj()],
            deriv: vec![c(1.0), c(1.0)],
            y,
            phi: DMatrix::identity(gauge_dim, gauge_dim),
            discarded: false,
        }
    }

    fn breaches_cutoff(&self, dt: f64) -> bool {
        let cut = CUTOFF_FACTOR * dt.sqrt();
        self.w.iter().any(|w| w.norm() < cut) || self.y.is_some_and(|y| y.abs() < cut)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// One Euler–Maruyama step of `dw = 2dt/w − √κ dξ`, with
/// `d(∂w/∂z) = −2 (∂w/∂z) dt / w²`.
pub fn step_sle(state: &mut SlePathState, dt: f64, dxi: f64, kappa: f64) -> Result<()> {
    check_dt(dt)?;
    if state.discarded {
        return Ok(());
    }
    if state.breaches_cutoff(dt) {
        state.discarded = true;
        return Ok(());
    }
    let shift = kappa.sqrt() * dxi;
    for (w, d) in state.w.iter_mut().zip(state.deriv.iter_mut()) {
        *d *= c(1.0) - c(2.0 * dt) / (*w * *w);
        *w += c(2.0 * dt) / *w - shift;
    }
    state.t += dt;
    Ok(())
}

/// One Euler–Maruyama step of SLE_{κ,ρ}:
/// `dw = (2/w + ρ/y) dt − √κ dξ`, `dy = (2 + ρ)/y dt − √κ dξ`.
pub fn step_sle_rho(state: &mut SlePathState, dt: f64, dxi: f64, kappa: f64, rho: f64) -> Result<()> {
    check_dt(dt)?;
    let y = state
        .y
        .ok_or_else(|| Error::InvalidParameter("SLE(κ, ρ) step needs a boundary point y".into()))?;
    if state.discarded {
        return Ok(());
    }
    if y == 0.0 || state.breaches_cutoff(dt) {
        state.discarded = true;
        return Ok(());
    }
    let shift = kappa.sqrt() * dxi;
    for (w, d) in state.w.iter_mut().zip(state.deriv.iter_mut()) {
        *d *= c(1.0) - c(2.0 * dt) / (*w * *w);
        *w += (c(2.0) / *w + rho / y) * dt - shift;
    }
    let y_new = y + (2.0 + rho) / y * dt - shift;
    if y_new.signum() != y.signum() {
        state.discarded = true;
    }
    state.y = Some(y_new);
    state.t += dt;
    Ok(())
}

/// Generators of the two bulk legs embedded in `V_1 ⊗ V_2`.
#[derive(Clone, Debug)]
pub struct GaugeSetup {
    pub leg1: Vec<DMatrix<C64>>,
    pub leg2: Vec<DMatrix<C64>>,
    pub casimir1: f64,
    pub casimir2: f64,
    /// `Σ_a t^a ⊗ t^a` on `V_1 ⊗ V_2`.
    pub t12: DMatrix<C64>,
}

impl GaugeSetup {
    pub fn new(g1: &GeneratorSet, g2: &GeneratorSet) -> Self {
        let (d1, d2) = (g1.dim(), g2.dim());
        let i1 = DMatrix::<C64>::identity(d1, d1);
        let i2 = DMatrix::<C64>::identity(d2, d2);
        let leg1: Vec<_> = g1.matrices.iter().map(|t| t.kronecker(&i2)).collect();
        let leg2: Vec<_> = g2.matrices.iter().map(|t| i1.kronecker(t)).collect();
        let t12 = leg1
            .iter()
            .zip(&leg2)
            .fold(DMatrix::zeros(d1 * d2, d1 * d2), |acc, (a, b)| acc + a * b);
        Self {
            casimir1: crate::exact::q_to_f64(&g1.weight.casimir),
            casimir2: crate::exact::q_to_f64(&g2.weight.casimir),
            leg1,
            leg2,
            t12,
        }
    }

    pub fn dim(&self) -> usize {
        self.t12.nrows()
    }

    /// `G^a = c1 t^a_1 + c2 t^a_2`.
    pub fn g(&self, a: usize, c1: C64, c2: C64) -> DMatrix<C64> {
        &self.leg1[a] * c1 + &self.leg2[a] * c2
    }

    /// `Σ_a (G^a)²` computed directly.
    pub fn drift_direct(&self, c1: C64, c2: C64) -> DMatrix<C64> {
        let d = self.dim();
        (0..self.leg1.len()).fold(DMatrix::zeros(d, d), |acc, a| {
            let g = self.g(a, c1, c2);
            acc + &g * &g
        })
    }

    /// `Σ_a (G^a)² = c1² C_1 + c2² C_2 + 2 c1 c2 T_12`.
    pub fn drift_via_couplings(&self, c1: C64, c2: C64) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::<C64>::identity(d, d) * (c1 * c1 * self.casimir1 + c2 * c2 * self.casimir2)
            + &self.t12 * (c1 * c2 * 2.0)
    }
}

fn gauge_coefficients(state: &SlePathState) -> (C64, C64) {
    let inv_y = state.y.map_or(0.0, |y| 1.0 / y);
    (c(1.0) / state.w[0] - inv_y, c(1.0) / state.w[1] - inv_y)
}

/// `Φ ← Φ · [I + √τ Σ_a Δθ^a G^a + (τ/2) Σ_a (G^a)² dt]`, with
/// `G^a = Σ_i t^a_i / w_i` (or `(1/w_i − 1/y) t^a_i` when `y` is set).
///
/// The new increment multiplies on the right: the accumulated rotation
/// acts on fields that have already been moved by the earlier increments.
pub fn step_gauge(state: &mut SlePathState, dt: f64, dtheta: &[f64], tau: f64, setup: &GaugeSetup) -> Result<()> {
    check_dt(dt)?;
    if dtheta.len() != setup.leg1.len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} gauge increments, got {}",
            setup.leg1.len(),
            dtheta.len()
        )));
    }
    if state.discarded || tau == 0.0 {
        return Ok(());
    }
    let (c1, c2) = gauge_coefficients(state);
    let d = setup.dim();
    let mut u = DMatrix::<C64>::identity(d, d) + setup.drift_via_couplings(c1, c2) * c(0.5 * tau * dt);
    let st = tau.sqrt();
    for (a, &th) in dtheta.iter().enumerate() {
        if th != 0.0 {
            u += setup.g(a, c1, c2) * c(st * th);
        }
    }
    state.phi = &state.phi * u;
    Ok(())
}

/// Everything needed to evaluate the one-point observable for a block case.
#[derive(Clone, Debug)]
pub struct ObservableSetup {
    pub block: Block,
    pub space: InvariantSpace,
    pub gauge: GaugeSetup,
    /// `K_jk[(b,c),(b',c')] = Σ_{a,e} conj(v_j[a,b,c,e]) v_k[a,b',c',e]`.
    kernel: [[DMatrix<C64>; 2]; 2],
}

impl ObservableSetup {
    pub fn new(case: BlockCase, n: usize) -> Result<Self> {
        let block = Block::new(case, n)?;
        let space = build_invariant_space(case.invariant_case(), n)?;
        let gauge = GaugeSetup::new(&space.space.legs[1], &space.space.legs[2]);
        let dims = space.space.dims().to_vec();
        let (d0, d12, d3) = (dims[0], dims[1] * dims[2], dims[3]);
        let mut kernel: [[DMatrix<C64>; 2]; 2] = Default::default();
        for (j, row) in kernel.iter_mut().enumerate() {
            for (k, slot) in row.iter_mut().enumerate() {
                let mut m = DMatrix::<C64>::zeros(d12, d12);
                for a in 0..d0 {
                    for e in 0..d3 {
                        for bc in 0..d12 {
                            let vj = space.basis[((a * d12 + bc) * d3 + e, j)].conj();
                            if vj == c(0.0) {
                                continue;
                            }
                            for bc2 in 0..d12 {
                                m[(bc, bc2)] += vj * space.basis[((a * d12 + bc2) * d3 + e, k)];
                            }
                        }
                    }
                }
                *slot = m;
            }
        }
        Ok(Self {
            block,
            space,
            gauge,
            kernel,
        })
    }

    /// `P_jk = ⟨v_j| I ⊗ Φ ⊗ I |v_k⟩` for Φ on the bulk legs.
    pub fn project(&self, phi: &DMatrix<C64>) -> Matrix2<C64> {
        Matrix2::from_fn(|j, k| self.kernel[j][k].iter().zip(phi.iter()).map(|(a, b)| a * b).sum())
    }

    /// `P_jk` for a factorized `Φ = Φ1 ⊗ Φ2`, given row-major n×n factors.
    fn project_factorized(&self, phi1: &[C64], phi2: &[C64], d1: usize, d2: usize) -> Matrix2<C64> {
        let d12 = d1 * d2;
        Matrix2::from_fn(|j, k| {
            let kern = &self.kernel[j][k];
            let mut acc = c(0.0);
            for b in 0..d1 {
                for bp in 0..d1 {
                    let p1 = phi1[b * d1 + bp];
                    if p1 == c(0.0) {
                        continue;
                    }
                    for cc in 0..d2 {
                        let row = b * d2 + cc;
                        for cp in 0..d2 {
                            acc += p1 * phi2[cc * d2 + cp] * kern[(row, bp * d2 + cp)];
                        }
                    }
                }
            }
            debug_assert!(d12 == kern.nrows());
            acc
        })
    }

    /// Scalar prefactor and block vector at a point `w` of the upper half
    /// plane with derivative factor `d`, before the gauge rotation.
    ///
    /// `x = w/w̄` lies on the unit circle with `arg x = 2 arg w ∈ (0, 2π)`,
    /// which fixes a branch of `x^a` that is continuous on the whole upper
    /// half-plane; `(1 − x)^b` and `w̄^{−2h}` stay on their principal branches
    /// there.
    pub fn unrotated(&self, w: C64, d: C64) -> Result<Vector2<C64>> {
        if w.im <= 0.0 || !w.is_finite() {
            return Err(Error::SingularPosition(format!("w = {w} left the upper half-plane")));
        }
        let h = self.block.h_f64();
        let (a, b) = self.block.exponents_f64();
        let theta = w.arg();
        let x = C64::from_polar(1.0, 2.0 * theta);
        let pre = C64::from_polar(1.0, 2.0 * theta * a) * (c(1.0) - x).powf(b);
        let scalar = d.norm().powf(2.0 * h) * w.conj().powf(-2.0 * h);
        Ok(self.block.f0(x) * (pre * scalar))
    }

    /// Image of `(w, d)` under `m(w) = y w / (y − w)`, which sends `y` to ∞
    /// and fixes 0 with unit derivative.
    pub fn mobius(w: C64, d: C64, y: f64) -> (C64, C64) {
        let den = c(y) - w;
        (w * y / den, d * (y * y) / (den * den))
    }

    /// `M_t = |∂w/∂z|^{2h} w̄^{−2h} (Φ F)(w/w̄)` in the (v1, v2) basis, for
    /// state points `[w, w̄]`.
    pub fn observable(&self, state: &SlePathState) -> Result<Vector2<C64>> {
        let (mut w, mut d) = (state.w[0], state.deriv[0]);
        if let Some(y) = state.y {
            (w, d) = Self::mobius(w, d, y);
        }
        let f = self.unrotated(w, d)?;
        Ok(self.project(&state.phi) * f)
    }
}

/// Evaluates the observable for a state.
pub fn observable(state: &SlePathState, setup: &ObservableSetup) -> Result<Vector2<C64>> {
    setup.observable(state)
}

/// One step of the splitting scheme used by the Monte Carlo harness: the
/// ρ/y translation (exact), the Loewner drift (exact) and the common shift
/// `−√κ dξ`. Updates `w`, the derivative factor and `y` in place.
pub fn split_step(w: &mut C64, d: &mut C64, y: &mut Option<f64>, dt: f64, dxi: f64, kappa: f64, rho: f64) {
    if let Some(yv) = y.as_mut() {
        if rho != 0.0 {
            let y2 = *yv * *yv + 2.0 * rho * dt;
            let y_new = yv.signum() * y2.max(0.0).sqrt();
            *w += y_new - *yv;
            *yv = y_new;
        }
        *yv *= (1.0 + 4.0 * dt / (*yv * *yv)).sqrt();
    }
    let w_new = *w * (c(1.0) + c(4.0 * dt) / (*w * *w)).sqrt();
    *d *= *w / w_new;
    *w = w_new;
    let shift = kappa.sqrt() * dxi;
    *w -= shift;
    if let Some(yv) = y.as_mut() {
        *yv -= shift;
    }
}

/// Closed-form κ = 0 trajectory: `w_t = √(z² + 4t)` on the branch with
/// positive imaginary part, `∂w/∂z = z / w_t`.
pub fn deterministic_flow(z: C64, t: f64) -> (C64, C64) {
    let mut w = (z * z + 4.0 * t).sqrt();
    if w.im < 0.0 {
        w = -w;
    }
    (w, z / w)
}

#[derive(Clone, Debug, Serialize)]
pub struct McConfig {
    pub case: BlockCase,
    pub n: usize,
    pub k: i64,
    pub kappa: f64,
    pub tau: f64,
    pub rho: Option<f64>,
    pub y0: f64,
    pub z0_re: f64,
    pub z0_im: f64,
    pub t_final: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Number of evenly spaced checkpoints (the last one is `t_final`).
    pub checkpoints: usize,
    /// Negative-control mode: success means a detected violation.
    pub expect_violation: bool,
}

impl McConfig {
    pub fn new(case: BlockCase, n: usize, kappa: f64, tau: f64) -> Self {
        Self {
            case,
            n,
            k: 1,
            kappa,
            tau,
            rho: None,
            y0: 1.0,
            z0_re: 0.0,
            z0_im: 1.0,
            t_final: 0.05,
            dt: 1e-4,
            paths: 100_000,
            seed: 7,
            checkpoints: 10,
            expect_violation: false,
        }
    }

    pub fn z0(&self) -> C64 {
        C64::new(self.z0_re, self.z0_im)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k != 1 {
            return bad(format!("closed-form blocks exist at level 1 only, got k = {}", self.k));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be non-negative, got {}", self.kappa));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be non-negative, got {}", self.tau));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0 && self.dt <= self.t_final) {
            return bad(format!("need 0 < dt <= T, got dt = {}, T = {}", self.dt, self.t_final));
        }
        if self.paths < 2 {
            return bad("at least two paths are needed for a standard error".into());
        }
        if self.z0_im.is_nan() || self.z0_im <= 0.0 {
            return bad(format!("z0 must lie in the upper half-plane, got {}", self.z0()));
        }
        if self.checkpoints == 0 {
            return bad("checkpoints must be at least 1".into());
        }
        if let Some(rho) = self.rho {
            if !rho.is_finite() || self.y0 == 0.0 || !self.y0.is_finite() {
                return bad(format!("invalid SLE(κ, ρ) data: rho = {rho}, y = {}", self.y0));
            }
        }
        Block::new(self.case, self.n)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Unreliable,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Unreliable => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Unreliable => "UNRELIABLE",
        }
    }
}

/// Complex number as a serializable pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cplx {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for Cplx {
    fn from(z: C64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    /// `mean(M_t) − M_0` per component.
    pub drift: [Cplx; 2],
    /// Standard errors of the real and imaginary parts, per component.
    pub se: [[f64; 2]; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub config: McConfig,
    pub m0: [Cplx; 2],
    pub mean: [Cplx; 2],
    /// `[component][re, im]`.
    pub se: [[f64; 2]; 2],
    pub z: [[f64; 2]; 2],
    pub paths: usize,
    pub steps: usize,
    pub dt: f64,
    pub discards: usize,
    pub discard_fraction: f64,
    /// `T · E[dM/dt]` at t = 0 from the algebraic generator (SLE_κ only).
    pub predicted_drift: Option<[Cplx; 2]>,
    pub checkpoints: Vec<Checkpoint>,
    pub verdict: Verdict,
}

impl McReport {
    pub fn max_z(&self) -> f64 {
        self.z.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Non-zero entries of each generator, for cheap linear combinations.
#[derive(Clone, Debug)]
struct SparseGenerators {
    dim: usize,
    entries: Vec<Vec<(usize, C64)>>,
}

impl SparseGenerators {
    fn new(g: &GeneratorSet) -> Self {
        let dim = g.dim();
        let entries = g
            .matrices
            .iter()
            .map(|m| {
                let mut v = Vec::new();
                for r in 0..dim {
                    for col in 0..dim {
                        let x = m[(r, col)];
                        if x.norm() > 0.0 {
                            v.push((r * dim + col, x));
                        }
                    }
                }
                v
            })
            .collect();
        Self { dim, entries }
    }

    /// `out = s Σ_a θ_a t^a` in row-major storage.
    fn combine(&self, theta: &[f64], s: C64, out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = c(0.0));
        for (a, ent) in self.entries.iter().enumerate() {
            let th = theta[a];
            for &(idx, v) in ent {
                out[idx] += v * th;
            }
        }
        out.iter_mut().for_each(|x| *x *= s);
    }
}

fn matmul(a: &[C64], b: &[C64], out: &mut [C64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = c(0.0);
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

struct Engine {
    cfg: McConfig,
    setup: ObservableSetup,
    g1: SparseGenerators,
    g2: SparseGenerators,
    steps: usize,
    cutoff: f64,
    checkpoint_steps: Vec<usize>,
}

struct PathOutcome {
    values: Vec<Vector2<C64>>,
    stopped: bool,
}

struct Scratch {
    theta: Vec<f64>,
    x: Vec<C64>,
    x2: Vec<C64>,
    tmp: Vec<C64>,
}

impl Engine {
    fn new(cfg: &McConfig) -> Result<Self> {
        cfg.validate()?;
        let setup = ObservableSetup::new(cfg.case, cfg.n)?;
        let g1 = SparseGenerators::new(&setup.space.space.legs[1]);
        let g2 = SparseGenerators::new(&setup.space.space.legs[2]);
        let steps = cfg.steps().max(1);
        let checkpoint_steps = (1..=cfg.checkpoints)
            .map(|k| ((k * steps) as f64 / cfg.checkpoints as f64).round() as usize)
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            setup,
            g1,
            g2,
            steps,
            cutoff: CUTOFF_FACTOR * cfg.dt.sqrt(),
            checkpoint_steps,
        })
    }

    fn observe(&self, w: C64, d: C64, y: Option<f64>, phi1: &[C64], phi2: &[C64]) -> Result<Vector2<C64>> {
        let (w, d) = match y {
            Some(y) => ObservableSetup::mobius(w, d, y),
            None => (w, d),
        };
        let f = self.setup.unrotated(w, d)?;
        let p = self.setup.project_factorized(phi1, phi2, self.g1.dim, self.g2.dim);
        Ok(p * f)
    }

    fn m0(&self) -> Result<Vector2<C64>> {
        let y = self.cfg.rho.map(|_| self.cfg.y0);
        let (i1, i2) = (identity_flat(self.g1.dim), identity_flat(self.g2.dim));
        self.observe(self.cfg.z0(), c(1.0), y, &i1, &i2)
    }

    /// `Φ ← Φ (I + X + X²/2)` with `X = s Σ θ_a t^a`.
    fn gauge_leg(g: &SparseGenerators, theta: &[f64], s: C64, phi: &mut [C64], sc: &mut Scratch) {
        let n = g.dim;
        let len = n * n;
        g.combine(theta, s, &mut sc.x[..len]);
        matmul(&sc.x[..len], &sc.x[..len], &mut sc.x2[..len], n);
        for i in 0..len {
            sc.x2[i] = sc.x[i] + sc.x2[i] * 0.5;
        }
        for i in 0..n {
            sc.x2[i * n + i] += 1.0;
        }
        matmul(phi, &sc.x2[..len], &mut sc.tmp[..len], n);
        phi.copy_from_slice(&sc.tmp[..len]);
    }

    fn run_path(&self, path: u64) -> Result<PathOutcome> {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path);
        let sqdt = cfg.dt.sqrt();
        let rho = cfg.rho.unwrap_or(0.0);
        let st = cfg.tau.sqrt();
        let dim_g = self.g1.entries.len();
        let mut sc = Scratch {
            theta: vec![0.0; dim_g],
            x: vec![c(0.0); self.g1.dim.max(self.g2.dim).pow(2)],
            x2: vec![c(0.0); self.g1.dim.max(self.g2.dim).pow(2)],
            tmp: vec![c(0.0); self.g1.dim.max(self.g2.dim).pow(2)],
        };
        let mut phi1 = identity_flat(self.g1.dim);
        let mut phi2 = identity_flat(self.g2.dim);
        let mut w = cfg.z0();
        let mut d = c(1.0);
        let mut y = cfg.rho.map(|_| cfg.y0);
        let mut stopped = false;
        let mut values = Vec::with_capacity(self.checkpoint_steps.len());
        let mut next = 0;
        for step in 1..=self.steps {
            if !stopped && (w.norm() < self.cutoff || y.is_some_and(|v| v.abs() < self.cutoff)) {
                stopped = true;
            }
            if !stopped {
                let dxi = sqdt * rng.sample::<f64, _>(StandardNormal);
                if cfg.tau > 0.0 {
                    for th in sc.theta.iter_mut() {
                        *th = sqdt * rng.sample::<f64, _>(StandardNormal);
                    }
                    let inv_y = y.map_or(0.0, |v| 1.0 / v);
                    let c1 = c(1.0) / w - inv_y;
                    let c2 = c1.conj();
                    Self::gauge_leg(&self.g1, &sc.theta.clone(), c1 * st, &mut phi1, &mut sc);
                    Self::gauge_leg(&self.g2, &sc.theta.clone(), c2 * st, &mut phi2, &mut sc);
                }
                let (mut w1, mut d1, mut y1) = (w, d, y);
                split_step(&mut w1, &mut d1, &mut y1, cfg.dt, dxi, cfg.kappa, rho);
                if w1.im <= 0.0 || y1.is_some_and(|v| v.signum() != cfg.y0.signum()) {
                    // swallowed: keep the last valid state and count the path as discarded
                    stopped = true;
                } else {
                    (w, d, y) = (w1, d1, y1);
                }
            }
            while next < self.checkpoint_steps.len() && self.checkpoint_steps[next] == step {
                values.push(self.observe(w, d, y, &phi1, &phi2)?);
                next += 1;
            }
        }
        Ok(PathOutcome { values, stopped })
    }
}

fn identity_flat(n: usize) -> Vec<C64> {
    let mut v = vec![c(0.0); n * n];
    for i in 0..n {
        v[i * n + i] = c(1.0);
    }
    v
}

/// Running sums of `v − M_0` over paths, per checkpoint.
#[derive(Clone, Debug)]
struct Sums {
    count: usize,
    stopped: usize,
    /// `[checkpoint][component][re, im]`.
    s1: Vec<[[f64; 2]; 2]>,
    s2: Vec<[[f64; 2]; 2]>,
}

impl Sums {
    fn new(k: usize) -> Self {
        Self {
            count: 0,
            stopped: 0,
            s1: vec![[[0.0; 2]; 2]; k],
            s2: vec![[[0.0; 2]; 2]; k],
        }
    }

    fn add(&mut self, o: &PathOutcome, m0: &Vector2<C64>) {
        self.count += 1;
        self.stopped += usize::from(o.stopped);
        for (k, v) in o.values.iter().enumerate() {
            for comp in 0..2 {
                let dv = v[comp] - m0[comp];
                for (p, x) in [dv.re, dv.im].into_iter().enumerate() {
                    self.s1[k][comp][p] += x;
                    self.s2[k][comp][p] += x * x;
                }
            }
        }
    }

    fn merge(&mut self, o: &Sums) {
        self.count += o.count;
        self.stopped += o.stopped;
        for k in 0..self.s1.len() {
            for comp in 0..2 {
                for p in 0..2 {
                    self.s1[k][comp][p] += o.s1[k][comp][p];
                    self.s2[k][comp][p] += o.s2[k][comp][p];
                }
            }
        }
    }

    /// (mean offset, standard error) at a checkpoint.
    fn stats(&self, k: usize) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
        let n = self.count as f64;
        let mut mean = [[0.0; 2]; 2];
        let mut se = [[0.0; 2]; 2];
        for comp in 0..2 {
            for p in 0..2 {
                let m = self.s1[k][comp][p] / n;
                let var = ((self.s2[k][comp][p] - n * m * m) / (n - 1.0)).max(0.0);
                mean[comp][p] = m;
                se[comp][p] = (var / n).sqrt();
            }
        }
        (mean, se)
    }
}

const CHUNK: usize = 256;

/// Runs the martingale test described by `cfg`.
pub fn mc_martingale_test(cfg: &McConfig) -> Result<McReport> {
    let engine = Engine::new(cfg)?;
    let m0 = engine.m0()?;
    let k = engine.checkpoint_steps.len();
    let chunks = cfg.paths.div_ceil(CHUNK);
    let partial: Vec<Result<Sums>> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut s = Sums::new(k);
            for p in ch * CHUNK..((ch + 1) * CHUNK).min(cfg.paths) {
                s.add(&engine.run_path(p as u64)?, &m0);
            }
            Ok(s)
        })
        .collect();
    let mut total = Sums::new(k);
    for s in partial {
        total.merge(&s?);
    }

    let times: Vec<f64> = engine.checkpoint_steps.iter().map(|&s| s as f64 * cfg.dt).collect();
    let checkpoints: Vec<Checkpoint> = (0..k)
        .map(|i| {
            let (m, se) = total.stats(i);
            Checkpoint {
                t: times[i],
                drift: [C64::new(m[0][0], m[0][1]).into(), C64::new(m[1][0], m[1][1]).into()],
                se,
            }
        })
        .collect();
    let (off, se) = total.stats(k - 1);
    let mut z = [[0.0; 2]; 2];
    for comp in 0..2 {
        for p in 0..2 {
            z[comp][p] = if se[comp][p] > 0.0 {
                off[comp][p].abs() / se[comp][p]
            } else if off[comp][p] == 0.0 {
                0.0
            } else {
                f64::MAX
            };
        }
    }
    let mean = [
        (m0[0] + C64::new(off[0][0], off[0][1])).into(),
        (m0[1] + C64::new(off[1][0], off[1][1])).into(),
    ];
    let discard_fraction = total.stopped as f64 / total.count as f64;
    let max_z = z.iter().flatten().copied().fold(0.0, f64::max);
    let verdict = if discard_fraction > MAX_DISCARD_FRACTION {
        Verdict::Unreliable
    } else if cfg.expect_violation {
        if max_z > CONTROL_Z {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    } else if max_z < PASS_Z {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let predicted_drift = match cfg.rho {
        Some(_) => None,
        None => Some(predicted_drift(&engine.setup, cfg)?),
    };
    Ok(McReport {
        config: cfg.clone(),
        m0: [m0[0].into(), m0[1].into()],
        mean,
        se,
        z,
        paths: total.count,
        steps: engine.steps,
        dt: cfg.dt,
        discards: total.stopped,
        discard_fraction,
        predicted_drift,
        checkpoints,
        verdict,
    })
}

/// `T · |∂w/∂z|^{2h} (ν/2) M({w}) ⟨w⟩` at t = 0.
fn predicted_drift(setup: &ObservableSetup, cfg: &McConfig) -> Result<[Cplx; 2]> {
    let w = cfg.z0();
    let t = Couplings::from_space(&setup.space);
    let x = C64::from_polar(1.0, 2.0 * w.arg());
    let m = martingale_matrix_float(&setup.block, &t, cfg.kappa, cfg.tau, x) / (w * w);
    let f = setup.unrotated(w, c(1.0))?;
    let rate = m * f * c(0.5 * setup.block.nu_f64() * cfg.t_final);
    Ok([rate[0].into(), rate[1].into()])
}

/// Deterministic κ = τ = 0 run of the splitting scheme, returning
/// `(t, M_t)` at every step.
pub fn deterministic_run(case: BlockCase, n: usize, z: C64, t_final: f64, dt: f64) -> Result<Vec<(f64, Vector2<C64>)>> {
    let setup = ObservableSetup::new(case, n)?;
    let steps = (t_final / dt).round() as usize;
    let (mut w, mut d, mut y) = (z, c(1.0), None);
    let mut out = vec![(0.0, setup.unrotated(w, d)?)];
    for s in 1..=steps {
        split_step(&mut w, &mut d, &mut y, dt, 0.0, 0.0, 0.0);
        out.push((s as f64 * dt, setup.unrotated(w, d)?));
    }
    Ok(out)
}

/// Deviation of the simulated κ = 0 trajectory `(w, ∂w/∂z)` and of `M_t`
/// from the closed form `w = √(z² + 4t)`, `∂w/∂z = z/w`.
pub fn deterministic_scheme_error(case: BlockCase, n: usize, z: C64, t_final: f64, dt: f64) -> Result<f64> {
    let setup = ObservableSetup::new(case, n)?;
    let steps = (t_final / dt).round() as usize;
    let (mut w, mut d, mut y) = (z, c(1.0), None);
    let mut worst: f64 = 0.0;
    for s in 1..=steps {
        split_step(&mut w, &mut d, &mut y, dt, 0.0, 0.0, 0.0);
        let (we, de) = deterministic_flow(z, s as f64 * dt);
        let m_sim = setup.unrotated(w, d)?;
        let m_exact = setup.unrotated(we, de)?;
        worst = worst
            .max((w - we).norm())
            .max((d - de).norm())
            .max((m_sim - m_exact).amax_complex());
    }
    Ok(worst)
}

trait ComplexMax {
    fn amax_complex(&self) -> f64;
}

impl ComplexMax for Vector2<C64> {
    fn amax_complex(&self) -> f64 {
        self[0].norm().max(self[1].norm())
    }
}

/// SVG chart of `|mean(M_t) − M_0|` per component against t, with ±2 SE
/// whiskers.
pub fn checkpoints_svg(report: &McReport) -> String {
    let (wd, ht, pad) = (640.0, 360.0, 50.0);
    let t_max = report.checkpoints.last().map_or(1.0, |c| c.t);
    let mag = |c: &Checkpoint, k: usize| (c.drift[k].re.powi(2) + c.drift[k].im.powi(2)).sqrt();
    let err = |c: &Checkpoint, k: usize| 2.0 * (c.se[k][0].powi(2) + c.se[k][1].powi(2)).sqrt();
    let y_max = report
        .checkpoints
        .iter()
        .flat_map(|c| (0..2).map(move |k| mag(c, k) + err(c, k)))
        .fold(1e-12, f64::max);
    let px = |t: f64| pad + (wd - 2.0 * pad) * t / t_max;
    let py = |v: f64| ht - pad - (ht - 2.0 * pad) * v / y_max;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{wd}" height="{ht}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y0}" stroke="black"/>"#,
        y0 = ht - pad,
        x1 = wd - pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">t</text>"#, wd - pad + 8.0, ht - pad + 4.0);
    let _ = writeln!(s, r#"<text x="8" y="{}">|drift|</text>"#, pad - 12.0);
    let _ = writeln!(s, r#"<text x="{pad}" y="{}">{t_max}</text>"#, ht - pad + 18.0);
    let _ = writeln!(s, r#"<text x="4" y="{}">{y_max:.3e}</text>"#, pad + 4.0);
    for (k, colour) in [(0usize, "#1f77b4"), (1, "#d62728")] {
        let mut pts = format!("{},{}", px(0.0), py(0.0));
        for cp in &report.checkpoints {
            let _ = write!(pts, " {:.2},{:.2}", px(cp.t), py(mag(cp, k)));
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{a:.2}" x2="{x:.2}" y2="{b:.2}" stroke="{colour}" stroke-opacity="0.5"/>"#,
                x = px(cp.t),
                a = py((mag(cp, k) - err(cp, k)).max(0.0)),
                b = py(mag(cp, k) + err(cp, k)),
            );
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}">component {}</text>"#,
            wd - 160.0,
            pad + 16.0 * k as f64,
            k + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_algebra::{build_generators, Weight};

    fn i() -> C64 {
        C64::new(0.0, 1.0)
    }

    #[test]
    fn drift_only_step_examples() {
        let mut s = SlePathState::new(i(), None, 1);
        step_sle(&mut s, 0.01, 0.0, 2.0).unwrap();
        assert!((s.w[0] - C64::new(0.0, 0.98)).norm() < 1e-15);
        assert!((s.deriv[0] - c(1.02)).norm() < 1e-15);
    }

    #[test]
    fn rho_step_examples() {
        let mut s = SlePathState::new(i(), Some(1.0), 1);
        step_sle_rho(&mut s, 0.01, 0.0, 2.0, -4.0).unwrap();
        assert!((s.w[0] - C64::new(-0.04, 0.98)).norm() < 1e-15);
        assert!((s.y.unwrap() - 0.98).abs() < 1e-15);

        let mut a = SlePathState::new(C64::new(0.3, 0.7), Some(2.0), 1);
        let mut b = a.clone();
        b.y = None;
        step_sle_rho(&mut a, 0.01, 0.05, 2.0, 0.0).unwrap();
        step_sle(&mut b, 0.01, 0.05, 2.0).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.deriv, b.deriv);
    }

    #[test]
    fn reflection_and_monotone_imaginary_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = SlePathState::new(C64::new(0.2, 1.0), None, 1);
        let mut im = s.w[0].im;
        for _ in 0..500 {
            let dxi = 0.01 * rng.sample::<f64, _>(StandardNormal);
            step_sle(&mut s, 1e-4, dxi, 3.0).unwrap();
            assert_eq!(s.w[1], s.w[0].conj());
            assert_eq!(s.deriv[1], s.deriv[0].conj());
            assert!(s.w[0].im < im);
            im = s.w[0].im;
        }
    }

    #[test]
    fn cutoff_marks_discard() {
        let mut s = SlePathState::new(C64::new(0.0, 0.05), None, 1);
        step_sle(&mut s, 1e-4, 0.0, 2.0).unwrap();
        assert!(s.discarded);
        let mut s = SlePathState::new(i(), Some(0.05), 1);
        step_sle_rho(&mut s, 1e-4, 0.0, 2.0, -4.0).unwrap();
        assert!(s.discarded);
        assert!(step_sle(&mut s, -1.0, 0.0, 2.0).is_err());
    }

    fn su2_setup() -> GaugeSetup {
        let g = build_generators(2, &Weight::fundamental(2, 1).unwrap()).unwrap();
        GaugeSetup::new(&g.conjugate(), &g)
    }

    #[test]
    fn gauge_drift_two_ways() {
        let g = su2_setup();
        let (w1, w2) = (i(), -i());
        let a = g.drift_direct(c(1.0) / w1, c(1.0) / w2);
        let b = g.drift_via_couplings(c(1.0) / w1, c(1.0) / w2);
        assert!((a - b).camax() < 1e-14);
    }

    #[test]
    fn gauge_step_zero_tau_and_mean() {
        let g = su2_setup();
        let mut s = SlePathState::new(i(), None, 4);
        step_gauge(&mut s, 1e-3, &[0.1, -0.2, 0.3], 0.0, &g).unwrap();
        assert_eq!(s.phi, DMatrix::identity(4, 4));

        let (dt, tau) = (1e-3f64, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = 20_000;
        let mut mean = DMatrix::<C64>::zeros(4, 4);
        for _ in 0..samples {
            let mut st = SlePathState::new(i(), None, 4);
            let th: Vec<f64> = (0..3)
                .map(|_| dt.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            step_gauge(&mut st, dt, &th, tau, &g).unwrap();
            mean += st.phi;
        }
        mean /= c(samples as f64);
        let expect = DMatrix::<C64>::identity(4, 4) + g.drift_direct(c(1.0) / i(), c(1.0) / -i()) * c(0.5 * tau * dt);
        // per-entry noise is about √(dt / samples) ≈ 2e-4
        assert!((mean - expect).camax() < 1.5e-3);
    }

    #[test]
    fn initial_observable_matches_formula() {
        let setup = ObservableSetup::new(BlockCase::Su2Level1, 2).unwrap();
        let s = SlePathState::new(i(), None, 4);
        let m = observable(&s, &setup).unwrap();
        // x = −1 with arg x = π, so x^{−1/2} = −i and (1 − x)^{−1/2} = 1/√2
        let pre = (-i()).powf(-0.5) * C64::new(0.0, -1.0) / 2f64.sqrt();
        let f = setup.block.f0(c(-1.0)) * pre;
        assert!((m - f).amax_complex() < 1e-14);
    }

    #[test]
    fn factorized_projection_matches_full() {
        let setup = ObservableSetup::new(BlockCase::SunFundLevel1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rand_mat = |n: usize| -> Vec<C64> {
            (0..n * n)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let (p1, p2) = (rand_mat(3), rand_mat(3));
        let m1 = DMatrix::from_row_slice(3, 3, &p1);
        let m2 = DMatrix::from_row_slice(3, 3, &p2);
        let full = setup.project(&m1.kronecker(&m2));
        let fact = setup.project_factorized(&p1, &p2, 3, 3);
        assert!((full - fact).camax() < 1e-12);
        assert!((setup.project(&DMatrix::identity(9, 9)) - Matrix2::identity()).camax() < 1e-12);
    }

    #[test]
    fn splitting_is_exact_without_noise() {
        let err = deterministic_scheme_error(BlockCase::Su2Level1, 2, i(), 0.05, 1e-4).unwrap();
        assert!(err < 1e-10, "{err:e}");
    }

    #[test]
    fn rho_translation_and_mobius() {
        let (mut w, mut d, mut y) = (i(), c(1.0), Some(1.0));
        split_step(&mut w, &mut d, &mut y, 1e-3, 0.0, 2.0, -4.0);
        let y1 = y.unwrap();
        let expect_y = (1.0f64 - 8e-3).sqrt();
        let expect_y = expect_y * (1.0 + 4e-3 / (expect_y * expect_y)).sqrt();
        assert!((y1 - expect_y).abs() < 1e-15);
        let (m, dm) = ObservableSetup::mobius(i(), c(1.0), 1.0);
        assert!((m - C64::new(-0.5, 0.5)).norm() < 1e-15);
        assert!((dm - c(1.0) / ((c(1.0) - i()) * (c(1.0) - i()))).norm() < 1e-15);
    }

    #[test]
    fn small_run_is_reproducible() {
        let mut cfg = McConfig::new(BlockCase::Su2Level1, 2, 2.0, 1.0);
        cfg.paths = 300;
        cfg.t_final = 0.01;
        let a = mc_martingale_test(&cfg).unwrap();
        let b = mc_martingale_test(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.paths, 300);
        assert!(a.max_z().is_finite());
        assert!(checkpoints_svg(&a).starts_with("<svg"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = McConfig::new(BlockCase::Su2Level1, 2, 2.0, 1.0);
        cfg.k = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = McConfig::new(BlockCase::Su2Level1, 2, 2.0, 1.0);
        cfg.z0_im = -1.0;
        assert!(cfg.validate().is_err());
        let cfg = McConfig::new(BlockCase::SunSelfAdjLevel1, 3, 2.0, 1.0);
        assert!(cfg.validate().is_err());
    }
}
