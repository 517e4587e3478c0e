//! Continuous tracking of fractional powers `z^a` along a path.
//!
//! The value is updated multiplicatively, `z_new^a = z_old^a · (z_new/z_old)^a`,
//! with the principal branch used only for the small ratio. A step whose
//! ratio has argument larger than π/2 is refused, since the continuation
//! would no longer be determined by the path.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const MAX_ARG_JUMP: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerBranch {
    pub exponent: f64,
    pub base: C64,
    pub value: C64,
}

impl PowerBranch {
    /// Principal branch at `base`.
    pub fn principal(base: C64, exponent: f64) -> Result<Self> {
        if base.norm() == 0.0 || !base.is_finite() {
            return Err(Error::SingularPosition(format!("power base {base}")));
        }
        Ok(Self {
            exponent,
            base,
            value: base.powf(exponent),
        })
    }

    /// Branch at `base` with an explicitly chosen value.
    pub fn with_value(base: C64, exponent: f64, value: C64) -> Self {
        Self { exponent, base, value }
    }

    pub fn update(&mut self, new_base: C64) -> Result<C64> {
        if new_base.norm() == 0.0 || !new_base.is_finite() {
            return Err(Error::SingularPosition(format!("power base {new_base}")));
        }
        let ratio = new_base / self.base;
        let arg = ratio.arg();
        if arg.abs() > MAX_ARG_JUMP {
            return Err(Error::BranchLost(format!(
                "argument jump {arg:.3} from {} to {new_base}",
                self.base
            )));
        }
        self.value *= ratio.powf(self.exponent);
        self.base = new_base;
        Ok(self.value)
    }

    /// Continues along the straight segment to `target` in `steps` pieces.
    pub fn walk_to(&mut self, target: C64, steps: usize) -> Result<C64> {
        let start = self.base;
        let steps = steps.max(1);
        for s in 1..=steps {
            let t = s as f64 / steps as f64;
            self.update(start + (target - start) * t)?;
        }
        Ok(self.value)
    }

    /// Continues along a polyline through `points`.
    pub fn walk_through(&mut self, points: &[C64], steps_per_segment: usize) -> Result<C64> {
        for &p in points {
            self.walk_to(p, steps_per_segment)?;
        }
        Ok(self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn full_turn_picks_up_phase() {
        let mut b = PowerBranch::principal(C64::new(1.0, 0.0), 0.5).unwrap();
        for s in 1..=64 {
            let th = 2.0 * PI * s as f64 / 64.0;
            b.update(C64::from_polar(1.0, th)).unwrap();
        }
        assert!((b.value - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn large_jump_refused() {
        let mut b = PowerBranch::principal(C64::new(1.0, 0.0), 0.5).unwrap();
        assert!(matches!(b.update(C64::new(-1.0, 0.1)), Err(Error::BranchLost(_))));
        assert!(matches!(b.update(C64::new(0.0, 0.0)), Err(Error::SingularPosition(_))));
    }

    #[test]
    fn walk_matches_principal_in_right_half_plane() {
        let mut b = PowerBranch::principal(C64::new(2.0, 0.0), -0.3).unwrap();
        let z = C64::new(0.5, 1.5);
        b.walk_to(z, 10).unwrap();
        assert!((b.value - z.powf(-0.3)).norm() < 1e-12);
    }
}
