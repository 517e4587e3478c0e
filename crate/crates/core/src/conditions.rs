//! Depth-two null-vector conditions for the boundary field at the SLE tip.
//!
//! Requiring `J^a_2 ψ = 0`, `L_1 J^a_1 ψ = 0` and `L_2 ψ = 0` for
//! `ψ = (−2L_{−2} + κ/2 L_{−1}² + τ/2 Σ_a J^a_{−1}J^a_{−1}) φ_Λ` gives three
//! scalar equations in (κ, τ):
//!
//! ```text
//! κ + τ h∨ − 4 = 0
//! 2κ h_Λ + τ k − 2 = 0
//! 3κ h_Λ + ½ τ c (k + h∨) − 8 h_Λ − c = 0
//! ```
//!
//! The first two are solved for (κ, τ) unless they are linearly dependent
//! (`k = 2 h_Λ h∨`); the third then becomes a quadratic condition in k.

use std::fmt;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{q, qi, Q};
use crate::lie_algebra::{make_context, AlgebraContext, Weight};

/// `slope · κ + offset`; with slope zero this is a plain rational.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct KappaAffine {
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub slope: Q,
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub offset: Q,
}

impl KappaAffine {
    pub fn constant(c: Q) -> Self {
        Self {
            slope: Q::zero(),
            offset: c,
        }
    }

    pub fn kappa() -> Self {
        Self {
            slope: Q::one(),
            offset: Q::zero(),
        }
    }

    pub fn eval(&self, kappa: Q) -> Q {
        self.slope * kappa + self.offset
    }

    pub fn as_constant(&self) -> Option<Q> {
        self.slope.is_zero().then_some(self.offset)
    }

    pub fn is_zero(&self) -> bool {
        self.slope.is_zero() && self.offset.is_zero()
    }

    fn add(self, o: Self) -> Self {
        Self {
            slope: self.slope + o.slope,
            offset: self.offset + o.offset,
        }
    }

    fn scale(self, s: Q) -> Self {
        Self {
            slope: self.slope * s,
            offset: self.offset * s,
        }
    }
}

impl fmt::Display for KappaAffine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.slope.is_zero(), self.offset.is_zero()) {
            (true, _) => write!(f, "{}", self.offset),
            (false, true) => write!(f, "{}·κ", self.slope),
            (false, false) => write!(f, "{}·κ + {}", self.slope, self.offset),
        }
    }
}

/// Residuals of the three necessary conditions, as functions of κ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Residuals {
    /// `κ + τ h∨ − 4`
    pub taukap: KappaAffine,
    /// `2κ h_Λ + τ k − 2`
    pub jp3: KappaAffine,
    /// `3κ h_Λ + ½ τ c (k + h∨) − 8 h_Λ − c`
    pub jp4: KappaAffine,
}

impl Residuals {
    pub fn all_zero(&self) -> bool {
        self.taukap.is_zero() && self.jp3.is_zero() && self.jp4.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NullVectorSolution {
    /// `None` when κ is left free (degenerate branch with dim g = 3).
    #[serde(serialize_with = "crate::serde_q::ser_opt")]
    pub kappa: Option<Q>,
    pub tau: KappaAffine,
    pub rho: KappaAffine,
    /// Set when `k = 2 h_Λ h∨` and the generic formulas do not apply.
    pub degenerate: bool,
    /// κ ≤ 0 or τ < 0. Such solutions are reported, not suppressed.
    pub unphysical: bool,
    pub residuals: Residuals,
}

impl NullVectorSolution {
    pub fn tau_value(&self) -> Option<Q> {
        self.tau.as_constant()
    }

    /// τ at a chosen κ (needed on the free branch).
    pub fn tau_at(&self, kappa: Q) -> Q {
        self.tau.eval(kappa)
    }
}

fn residuals(ctx: &AlgebraContext, h: Q, kappa: KappaAffine, tau: KappaAffine) -> Residuals {
    let hv = qi(ctx.h_dual);
    let k = qi(ctx.k);
    let c = ctx.central_charge;
    let taukap = kappa.add(tau.scale(hv)).add(KappaAffine::constant(qi(-4)));
    let jp3 = kappa
        .scale(qi(2) * h)
        .add(tau.scale(k))
        .add(KappaAffine::constant(qi(-2)));
    let jp4 = kappa
        .scale(qi(3) * h)
        .add(tau.scale(q(1, 2) * c * qi(ctx.shifted_level())))
        .add(KappaAffine::constant(-qi(8) * h - c));
    Residuals { taukap, jp3, jp4 }
}

fn finish(ctx: &AlgebraContext, h: Q, kappa: Option<Q>, tau: KappaAffine, degenerate: bool) -> NullVectorSolution {
    let kappa_aff = kappa.map_or(KappaAffine::kappa(), KappaAffine::constant);
    let residuals = residuals(ctx, h, kappa_aff, tau);
    let rho = kappa_aff.add(KappaAffine::constant(qi(-6)));
    let unphysical = match (kappa, tau.as_constant()) {
        (Some(kp), Some(t)) => kp <= Q::zero() || t < Q::zero(),
        (Some(kp), None) => kp <= Q::zero(),
        _ => false,
    };
    NullVectorSolution {
        kappa,
        tau,
        rho,
        degenerate,
        unphysical,
        residuals,
    }
}

/// Solves the null-vector conditions for (κ, τ).
///
/// Returns [`Error::NoSolution`] when the degenerate branch's extra
/// conditions fail or when the third condition is violated on the generic
/// branch.
pub fn solve_kappa_tau(ctx: &AlgebraContext, w: &Weight) -> Result<NullVectorSolution> {
    if w.is_zero() {
        return Err(Error::ZeroWeight);
    }
    let h = ctx.conformal_weight(w);
    let hv = qi(ctx.h_dual);
    let k = qi(ctx.k);
    let denom = qi(2) * h * hv - k;

    if denom.is_zero() {
        // taukap and jp3 are proportional; a solution needs all three of
        // k = h∨/2, h_Λ = 1/4, C_Λ = 3h∨/4.
        let ok = k == hv / qi(2) && h == q(1, 4) && w.casimir == q(3, 4) * hv;
        if !ok {
            return Err(Error::NoSolution(format!(
                "degenerate branch k = 2h_Λh∨ without k = h∨/2, h_Λ = 1/4, C_Λ = 3h∨/4 (k = {}, h_Λ = {}, C_Λ = {})",
                ctx.k, h, w.casimir
            )));
        }
        // jp4 reduces to (3κ − 8)(dim g − 3) = 0
        let kappa = if ctx.dim_g == 3 { None } else { Some(q(8, 3)) };
        let tau = match kappa {
            None => KappaAffine {
                slope: -Q::one() / hv,
                offset: qi(4) / hv,
            },
            Some(kp) => KappaAffine::constant((qi(4) - kp) / hv),
        };
        let sol = finish(ctx, h, kappa, tau, true);
        if !sol.residuals.all_zero() {
            return Err(Error::Inconsistent(format!("degenerate residuals {:?}", sol.residuals)));
        }
        return Ok(sol);
    }

    let kappa = qi(2) * (hv - qi(2) * k) / denom;
    let tau = (qi(8) * h - qi(2)) / denom;
    let sol = finish(ctx, h, Some(kappa), KappaAffine::constant(tau), false);
    if !sol.residuals.jp4.is_zero() {
        return Err(Error::NoSolution(format!(
            "L_2 condition violated with residual {}",
            sol.residuals.jp4
        )));
    }
    Ok(sol)
}

/// Coefficients `[c0, c1, c2]` of the quadratic in k obtained by inserting
/// the generic (κ, τ) into the L_2 condition:
///
/// ```text
/// (h∨ d + 2C(1 − d)) k² + (h∨ d − C(1 + d)) h∨ k + 4C² h∨ − 3C h∨² = 0
/// ```
pub fn casimir_condition_poly(h_dual: i128, dim_g: i128, casimir: Q) -> [Q; 3] {
    let hv = qi(h_dual);
    let d = qi(dim_g);
    let c = casimir;
    [
        qi(4) * c * c * hv - qi(3) * c * hv * hv,
        (hv * d - c * (Q::one() + d)) * hv,
        hv * d + qi(2) * c * (Q::one() - d),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CasimirCheck {
    pub holds: bool,
    #[serde(serialize_with = "crate::serde_q::ser")]
    pub residual: Q,
}

pub fn check_casimir_condition(ctx: &AlgebraContext, w: &Weight) -> CasimirCheck {
    let [c0, c1, c2] = casimir_condition_poly(ctx.h_dual, ctx.dim_g, w.casimir);
    let k = qi(ctx.k);
    let residual = c2 * k * k + c1 * k + c0;
    CasimirCheck {
        holds: residual.is_zero(),
        residual,
    }
}

/// Whether the k-polynomial of the Casimir condition vanishes identically.
pub fn casimir_condition_identically_zero(h_dual: i128, dim_g: i128, casimir: Q) -> bool {
    casimir_condition_poly(h_dual, dim_g, casimir).iter().all(Zero::is_zero)
}

/// ρ for SLE_{κ,ρ}: `ρ = κ − 6`, after checking `2κh_Λ + κ + τ/ν = 6`.
pub fn solve_rho(sol: &NullVectorSolution, ctx: &AlgebraContext, w: &Weight) -> Result<Q> {
    let kappa = sol.kappa.ok_or(Error::KappaFree)?;
    let residual = rho_constraint_residual(sol, ctx, w).eval(kappa);
    if !residual.is_zero() {
        return Err(Error::Inconsistent(format!(
            "2κh_Λ + κ + τ/ν − 6 = {residual} for κ = {kappa}"
        )));
    }
    Ok(sol.rho.eval(kappa))
}

/// `2κh_Λ + κ + τ/ν − 6` as a function of κ.
pub fn rho_constraint_residual(sol: &NullVectorSolution, ctx: &AlgebraContext, w: &Weight) -> KappaAffine {
    let h = ctx.conformal_weight(w);
    KappaAffine::kappa()
        .scale(qi(2) * h + Q::one())
        .add(sol.tau.scale(qi(ctx.shifted_level())))
        .add(KappaAffine::constant(qi(-6)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnumeratedSolution {
    pub n: usize,
    pub k: i128,
    pub labels: Vec<u32>,
    pub solution: NullVectorSolution,
}

/// All nonzero label vectors of length `len` with label sum at most `max_sum`,
/// in lexicographic order.
pub fn label_vectors(len: usize, max_sum: u32) -> Vec<Vec<u32>> {
    fn rec(len: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == len {
            if cur.iter().any(|&a| a > 0) {
                out.push(cur.clone());
            }
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(len, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(len, max_sum, &mut Vec::new(), &mut out);
    out
}

/// Every integrable (n, k, Λ) with n ≤ n_max, k ≤ k_max and label sum at most
/// `min(label_sum_max, k)` that passes the null-vector conditions, in
/// lexicographic (n, k, labels) order.
pub fn enumerate_solutions(n_max: usize, k_max: i64, label_sum_max: u32) -> Vec<EnumeratedSolution> {
    let mut out = Vec::new();
    for n in 2..=n_max {
        for k in 1..=k_max {
            let ctx = make_context(n, k).expect("n >= 2 and k >= 1");
            let bound = label_sum_max.min(k as u32);
            for labels in label_vectors(n - 1, bound) {
                let w = Weight::new(n, labels.clone()).expect("labels have length n - 1");
                if let Ok(solution) = solve_kappa_tau(&ctx, &w) {
                    debug_assert!(solution.degenerate || check_casimir_condition(&ctx, &w).holds);
                    out.push(EnumeratedSolution {
                        n,
                        k: k as i128,
                        labels,
                        solution,
                    });
                }
            }
        }
    }
    out
}

/// One CSV record per enumerated solution. On the free-κ branch the κ columns
/// read `free` and τ, ρ are written as expressions in κ.
pub fn csv_record(s: &EnumeratedSolution) -> Vec<String> {
    let labels = s.labels.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
    let mut rec = vec![s.n.to_string(), s.k.to_string(), labels];
    match s.solution.kappa {
        Some(kp) => {
            let tau = s.solution.tau.eval(kp);
            let rho = s.solution.rho.eval(kp);
            for x in [kp, tau, rho] {
                rec.push(x.numer().to_string());
                rec.push(x.denom().to_string());
            }
        }
        None => {
            // τ = (4 − κ)/h∨ on this branch
            let hv = (Q::one() / -s.solution.tau.slope).to_integer();
            rec.extend(["free".into(), String::new()]);
            rec.extend([format!("{}-kappa", s.solution.tau.offset * qi(hv)), hv.to_string()]);
            rec.extend(["kappa-6".into(), "1".into()]);
        }
    }
    rec.push(s.solution.degenerate.to_string());
    rec
}

pub const CSV_HEADER: [&str; 10] = [
    "n",
    "k",
    "labels",
    "kappa_num",
    "kappa_den",
    "tau_num",
    "tau_den",
    "rho_num",
    "rho_den",
    "degenerate",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn fund(n: usize, m: usize) -> Weight {
        Weight::fundamental(n, m).unwrap()
    }

    #[test]
    fn su2_level2() {
        let ctx = make_context(2, 2).unwrap();
        let s = solve_kappa_tau(&ctx, &fund(2, 1)).unwrap();
        assert_eq!(s.kappa, Some(q(16, 5)));
        assert_eq!(s.tau_value(), Some(q(2, 5)));
        assert!(!s.degenerate);
        assert!(s.residuals.all_zero());
    }

    #[test]
    fn sun_fundamental_level1() {
        let ctx = make_context(3, 1).unwrap();
        let s = solve_kappa_tau(&ctx, &fund(3, 1)).unwrap();
        assert_eq!((s.kappa, s.tau_value()), (Some(qi(2)), Some(q(2, 3))));
    }

    #[test]
    fn su4_middle_weight() {
        let ctx = make_context(4, 1).unwrap();
        let s = solve_kappa_tau(&ctx, &fund(4, 2)).unwrap();
        assert_eq!((s.kappa, s.tau_value()), (Some(q(4, 3)), Some(q(2, 3))));
    }

    #[test]
    fn su2_level1_is_free() {
        let ctx = make_context(2, 1).unwrap();
        let s = solve_kappa_tau(&ctx, &fund(2, 1)).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.kappa, None);
        assert_eq!(s.tau_at(qi(2)), qi(1));
        assert_eq!(s.tau_at(qi(0)), qi(2));
        assert!(s.residuals.all_zero());
        assert_eq!(solve_rho(&s, &ctx, &fund(2, 1)), Err(Error::KappaFree));
        assert!(rho_constraint_residual(&s, &ctx, &fund(2, 1)).is_zero());
    }

    #[test]
    fn degenerate_without_extra_conditions_has_no_solution() {
        // su(2), spin 1 at k = 2 has k = 2 h_Λ h∨ but h_Λ ≠ 1/4
        let ctx = make_context(2, 2).unwrap();
        let w = Weight::new(2, vec![2]).unwrap();
        assert!(matches!(solve_kappa_tau(&ctx, &w), Err(Error::NoSolution(_))));
    }

    #[test]
    fn zero_weight_rejected() {
        let ctx = make_context(3, 1).unwrap();
        let w = Weight::new(3, vec![0, 0]).unwrap();
        assert_eq!(solve_kappa_tau(&ctx, &w), Err(Error::ZeroWeight));
    }

    #[test]
    fn casimir_condition_examples() {
        let j_half = fund(2, 1);
        for k in 1..=10 {
            assert!(check_casimir_condition(&make_context(2, k).unwrap(), &j_half).holds);
        }
        let spin1 = Weight::new(2, vec![2]).unwrap();
        let c = check_casimir_condition(&make_context(2, 3).unwrap(), &spin1);
        assert!(!c.holds && !c.residual.is_zero());
        assert!(check_casimir_condition(&make_context(3, 1).unwrap(), &fund(3, 1)).holds);
        assert!(!check_casimir_condition(&make_context(3, 2).unwrap(), &fund(3, 1)).holds);
    }

    #[test]
    fn su2_factorization_on_grid() {
        // The Casimir condition is a constant multiple of
        // (2j − 1)(2j + 3)(2j − k)(k + 2j + 2).
        let mut ratio: Option<Q> = None;
        for twice_j in 1..=10i128 {
            for k in 1..=10i128 {
                let w = Weight::new(2, vec![twice_j as u32]).unwrap();
                let ctx = make_context(2, k as i64).unwrap();
                let r = check_casimir_condition(&ctx, &w).residual;
                let f = qi((twice_j - 1) * (twice_j + 3) * (twice_j - k) * (k + twice_j + 2));
                if f.is_zero() {
                    assert!(r.is_zero(), "2j={twice_j} k={k}");
                } else {
                    let this = r / f;
                    assert_eq!(*ratio.get_or_insert(this), this);
                }
            }
        }
        assert_eq!(ratio, Some(qi(2)));
    }

    #[test]
    fn adjoint_polynomial() {
        // (3n² − 7)k² + n(n² + 1)k − 10n² up to a common factor
        for n in 3..8i128 {
            let [c0, c1, c2] = casimir_condition_poly(n, n * n - 1, qi(2 * n));
            let s = c2 / qi(3 * n * n - 7);
            assert_eq!(c1, s * qi(n * (n * n + 1)));
            assert_eq!(c0, s * qi(-10 * n * n));
        }
    }

    #[test]
    fn identically_zero_only_for_spin_half() {
        let mut hits = Vec::new();
        for n in 2..=6 {
            for labels in label_vectors(n - 1, 4) {
                let w = Weight::new(n, labels.clone()).unwrap();
                if casimir_condition_identically_zero(n as i128, (n * n - 1) as i128, w.casimir) {
                    hits.push((n, labels));
                }
            }
        }
        assert_eq!(hits, vec![(2, vec![1])]);
    }

    #[test]
    fn enumeration_su2() {
        let sols = enumerate_solutions(2, 4, 4);
        let got: Vec<_> = sols.iter().map(|s| (s.k, s.labels.clone(), s.solution.kappa)).collect();
        assert_eq!(
            got,
            vec![
                (1, vec![1], None),
                (2, vec![1], Some(q(16, 5))),
                (3, vec![1], Some(q(20, 6))),
                (4, vec![1], Some(q(24, 7))),
            ]
        );
    }

    #[test]
    fn enumeration_level1() {
        let sols = enumerate_solutions(4, 1, 1);
        let has = |n: usize, labels: &[u32], kappa: Q| {
            sols.iter()
                .any(|s| s.n == n && s.labels == labels && s.solution.kappa == Some(kappa))
        };
        assert!(has(3, &[1, 0], qi(2)));
        assert!(has(4, &[1, 0, 0], qi(2)));
        assert!(has(4, &[0, 1, 0], q(4, 3)));
        for s in &sols {
            assert!(s.solution.residuals.all_zero());
        }
    }

    #[test]
    fn su7_adjoint_excluded() {
        // The Casimir condition does hold for the su(7) adjoint at k = 1 ...
        let ctx = make_context(7, 1).unwrap();
        let adj = Weight::new(7, vec![1, 0, 0, 0, 0, 1]).unwrap();
        assert!(check_casimir_condition(&ctx, &adj).holds);
        // ... but its label sum exceeds the level.
        let sols = enumerate_solutions(7, 1, 2);
        assert!(!sols.iter().any(|s| s.n == 7 && s.labels == adj.labels));
    }

    #[test]
    fn rho_examples() {
        let ctx = make_context(3, 1).unwrap();
        let w = fund(3, 1);
        let s = solve_kappa_tau(&ctx, &w).unwrap();
        assert_eq!(solve_rho(&s, &ctx, &w), Ok(qi(-4)));

        let ctx = make_context(2, 2).unwrap();
        let w = fund(2, 1);
        let s = solve_kappa_tau(&ctx, &w).unwrap();
        assert_eq!(solve_rho(&s, &ctx, &w), Ok(q(-14, 5)));

        let ctx = make_context(4, 1).unwrap();
        let w = fund(4, 2);
        let s = solve_kappa_tau(&ctx, &w).unwrap();
        // 2·(4/3)·(1/2) + 4/3 + (2/3)·5 = 6
        assert!(rho_constraint_residual(&s, &ctx, &w).eval(q(4, 3)).is_zero());
        assert_eq!(solve_rho(&s, &ctx, &w), Ok(q(-14, 3)));
    }

    #[test]
    fn inconsistent_rho_reported() {
        let ctx = make_context(3, 1).unwrap();
        let w = fund(3, 1);
        let mut s = solve_kappa_tau(&ctx, &w).unwrap();
        s.tau = KappaAffine::constant(qi(1));
        assert!(matches!(solve_rho(&s, &ctx, &w), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn csv_records() {
        let sols = enumerate_solutions(2, 2, 2);
        assert_eq!(
            csv_record(&sols[0]),
            ["2", "1", "1", "free", "", "4-kappa", "2", "kappa-6", "1", "true"]
        );
        assert_eq!(
            csv_record(&sols[1]),
            ["2", "2", "1", "16", "5", "2", "5", "-14", "5", "false"]
        );
    }
}
