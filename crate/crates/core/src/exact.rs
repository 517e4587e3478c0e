//! Exact arithmetic: rationals, the quadratic field Q(√d), and dense
//! univariate polynomials over it.
//!
//! Every coupling matrix that appears in the one-point kernel identities has
//! entries of the form `a + b√d` for a single radicand `d`
//! (either `n² − 1` or `n + 1`), so a two-component representation is closed
//! under all the ring operations needed there.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational with 128-bit numerator and denominator.
pub type Q = Ratio<i128>;

/// Shorthand for `p/q` as an exact rational.
pub fn q(p: i128, d: i128) -> Q {
    Q::new(p, d)
}

/// Shorthand for an integer as an exact rational.
pub fn qi(p: i128) -> Q {
    Q::from_integer(p)
}

pub fn q_to_f64(x: &Q) -> f64 {
    x.numer().to_f64().unwrap_or(f64::NAN) / x.denom().to_f64().unwrap_or(f64::NAN)
}

fn perfect_sqrt(d: i128) -> Option<i128> {
    if d < 0 {
        return None;
    }
    let r = (d as f64).sqrt().round() as i128;
    (r - 1..=r + 1).find(|&c| c >= 0 && c * c == d)
}

/// Element `a + b√d` of Q(√d).
///
/// `d` is carried with the element; mixing different radicands in one
/// operation is a logic error and panics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QSqrt {
    pub a: Q,
    pub b: Q,
    pub d: i128,
}

impl QSqrt {
    /// Builds `a + b√d`; a perfect-square radicand folds into the rational
    /// part so the representation stays a field.
    pub fn new(a: Q, b: Q, d: i128) -> Self {
        match perfect_sqrt(d) {
            Some(r) => Self {
                a: a + b * qi(r),
                b: Q::zero(),
                d,
            },
            None => Self { a, b, d },
        }
    }

    pub fn rational(a: Q, d: i128) -> Self {
        Self { a, b: Q::zero(), d }
    }

    /// `b·√d`.
    pub fn surd(b: Q, d: i128) -> Self {
        Self::new(Q::zero(), b, d)
    }

    pub fn zero(d: i128) -> Self {
        Self::rational(Q::zero(), d)
    }

    pub fn one(d: i128) -> Self {
        Self::rational(Q::one(), d)
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn scale(&self, s: Q) -> Self {
        Self {
            a: self.a * s,
            b: self.b * s,
            d: self.d,
        }
    }

    /// Multiplicative inverse, `(a − b√d)/(a² − b²d)`.
    ///
    /// Panics on zero.
    pub fn inv(&self) -> Self {
        let norm = self.a * self.a - self.b * self.b * qi(self.d);
        assert!(!norm.is_zero(), "inverse of zero in Q(sqrt {})", self.d);
        Self {
            a: self.a / norm,
            b: -self.b / norm,
            d: self.d,
        }
    }

    pub fn to_f64(&self) -> f64 {
        q_to_f64(&self.a) + q_to_f64(&self.b) * (self.d as f64).sqrt()
    }

    fn check(&self, other: &Self) {
        assert!(
            self.d == other.d || self.b.is_zero() || other.b.is_zero(),
            "mixed radicands {} and {}",
            self.d,
            other.d
        );
    }

    fn radicand(&self, other: &Self) -> i128 {
        if self.b.is_zero() {
            other.d
        } else {
            self.d
        }
    }
}

impl Add for QSqrt {
    type Output = QSqrt;
    fn add(self, o: QSqrt) -> QSqrt {
        self.check(&o);
        QSqrt {
            a: self.a + o.a,
            b: self.b + o.b,
            d: self.radicand(&o),
        }
    }
}

impl Sub for QSqrt {
    type Output = QSqrt;
    fn sub(self, o: QSqrt) -> QSqrt {
        self + (-o)
    }
}

impl Neg for QSqrt {
    type Output = QSqrt;
    fn neg(self) -> QSqrt {
        QSqrt {
            a: -self.a,
            b: -self.b,
            d: self.d,
        }
    }
}

impl Mul for QSqrt {
    type Output = QSqrt;
    fn mul(self, o: QSqrt) -> QSqrt {
        self.check(&o);
        let d = self.radicand(&o);
        QSqrt {
            a: self.a * o.a + self.b * o.b * qi(d),
            b: self.a * o.b + self.b * o.a,
            d,
        }
    }
}

impl fmt::Display for QSqrt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a.is_zero(), self.b.is_zero()) {
            (_, true) => write!(f, "{}", self.a),
            (true, false) => write!(f, "{}·√{}", self.b, self.d),
            (false, false) => {
                let sign = if self.b.is_negative() { "-" } else { "+" };
                write!(f, "{} {} {}·√{}", self.a, sign, self.b.abs(), self.d)
            }
        }
    }
}

/// Dense polynomial in one variable with coefficients in Q(√d), lowest
/// degree first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    pub coeffs: Vec<QSqrt>,
    pub d: i128,
}

impl Poly {
    pub fn zero(d: i128) -> Self {
        Self { coeffs: Vec::new(), d }
    }

    pub fn constant(c: QSqrt) -> Self {
        Self {
            coeffs: vec![c],
            d: c.d,
        }
        .trimmed()
    }

    /// Builds from coefficients, lowest degree first.
    pub fn from_coeffs(coeffs: Vec<QSqrt>, d: i128) -> Self {
        Self { coeffs, d }.trimmed()
    }

    /// Polynomial with rational coefficients, lowest degree first.
    pub fn from_rationals(coeffs: &[Q], d: i128) -> Self {
        Self::from_coeffs(coeffs.iter().map(|&c| QSqrt::rational(c, d)).collect(), d)
    }

    fn trimmed(mut self) -> Self {
        while self.coeffs.last().is_some_and(QSqrt::is_zero) {
            self.coeffs.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn scale(&self, s: QSqrt) -> Self {
        Self::from_coeffs(self.coeffs.iter().map(|&c| c * s).collect(), self.d)
    }

    pub fn eval_f64(&self, x: num_complex::Complex64) -> num_complex::Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(num_complex::Complex64::new(0.0, 0.0), |acc, c| acc * x + c.to_f64())
    }

    pub fn eval(&self, x: QSqrt) -> QSqrt {
        self.coeffs
            .iter()
            .rev()
            .fold(QSqrt::zero(self.d), |acc, &c| acc * x + c)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let len = self.coeffs.len().max(o.coeffs.len());
        let zero = QSqrt::zero(self.d);
        let coeffs = (0..len)
            .map(|i| {
                let a = self.coeffs.get(i).copied().unwrap_or(zero);
                let b = o.coeffs.get(i).copied().unwrap_or(zero);
                a + b
            })
            .collect();
        Poly::from_coeffs(coeffs, self.d)
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        self + &o.scale(QSqrt::rational(-Q::one(), o.d))
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero(self.d);
        }
        let mut coeffs = vec![QSqrt::zero(self.d); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in o.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j] + a * b;
            }
        }
        Poly::from_coeffs(coeffs, self.d)
    }
}

/// 2×2 matrix over Q(√d).
pub type Mat2 = [[QSqrt; 2]; 2];

/// 2×2 matrix of polynomials.
pub type PolyMat2 = [[Poly; 2]; 2];

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[QSqrt::zero(a[0][0].d); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat2_add(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = *a;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

pub fn mat2_scale(a: &Mat2, s: QSqrt) -> Mat2 {
    let mut out = *a;
    for row in out.iter_mut() {
        for x in row.iter_mut() {
            *x = *x * s;
        }
    }
    out
}

pub fn mat2_identity(d: i128) -> Mat2 {
    [[QSqrt::one(d), QSqrt::zero(d)], [QSqrt::zero(d), QSqrt::one(d)]]
}

pub fn mat2_to_f64(a: &Mat2) -> [[f64; 2]; 2] {
    [
        [a[0][0].to_f64(), a[0][1].to_f64()],
        [a[1][0].to_f64(), a[1][1].to_f64()],
    ]
}

/// Polynomial matrix times polynomial vector.
pub fn polymat_apply(m: &PolyMat2, v: &[Poly; 2]) -> [Poly; 2] {
    [
        &(&m[0][0] * &v[0]) + &(&m[0][1] * &v[1]),
        &(&m[1][0] * &v[0]) + &(&m[1][1] * &v[1]),
    ]
}

/// Determinant of a polynomial matrix.
pub fn polymat_det(m: &PolyMat2) -> Poly {
    &(&m[0][0] * &m[1][1]) - &(&m[0][1] * &m[1][0])
}
