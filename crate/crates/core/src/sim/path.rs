//! Materialized controlled paths and the cost integrals evaluated on them.

use serde::Serialize;

use crate::error::Result;
use crate::num::quad;

/// Which control a cost integral runs against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlSide {
    Nu,
    Xi,
}

/// A discretized controlled trajectory. `x[k]` is the left limit at `times[k]`
/// (the Euler endpoint before the controls of that instant act); increments
/// are split into the continuous-approximation part and the jump part, with
/// the initial jump at t = 0+ held in slot 0.
#[derive(Clone, Debug, Serialize)]
pub struct ControlPath {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub dnu_c: Vec<f64>,
    pub dnu_j: Vec<f64>,
    pub dxi_c: Vec<f64>,
    pub dxi_j: Vec<f64>,
    /// State after the controls of each instant (what propagates).
    pub x_post: Vec<f64>,
    /// Pre-jump states for the jump parts, NaN where no jump occurred.
    pub nu_jump_from: Vec<f64>,
    pub xi_jump_from: Vec<f64>,
    /// Reflection levels of the two strategies, when they reflect.
    pub nu_level: Option<f64>,
    pub xi_level: Option<f64>,
    /// True when the path left the truncated computational interval.
    pub exit: bool,
    /// Steps on which both controls jumped (admissibility violations).
    pub simultaneous_jump_steps: usize,
    /// Control mass booked while the recorded state stayed strictly away
    /// from the corresponding barrier (should vanish; support condition).
    pub flat_off: (f64, f64),
    /// Largest recorded excursion of the left limits outside [a, b].
    pub band_excursion: f64,
}

impl ControlPath {
    pub fn n_records(&self) -> usize {
        self.times.len()
    }

    /// Cumulative total variation of one control.
    pub fn total_mass(&self, side: ControlSide) -> f64 {
        match side {
            ControlSide::Nu => self.dnu_c.iter().sum::<f64>() + self.dnu_j.iter().sum::<f64>(),
            ControlSide::Xi => self.dxi_c.iter().sum::<f64>() + self.dxi_j.iter().sum::<f64>(),
        }
    }

    /// Discounted cost of control in the jump-smoothing convention: the
    /// continuous part weighs g at the barrier it acts on, each jump
    /// integrates g across the displacement (upward for nu, downward for xi).
    pub fn zhu_integral<G: Fn(f64) -> f64>(&self, g: &G, side: ControlSide, r: f64) -> Result<f64> {
        let (dc, dj, from, level, up) = match side {
            ControlSide::Nu => (&self.dnu_c, &self.dnu_j, &self.nu_jump_from, self.nu_level, true),
            ControlSide::Xi => (&self.dxi_c, &self.dxi_j, &self.xi_jump_from, self.xi_level, false),
        };
        let mut total = 0.0;
        for k in 0..self.times.len() {
            let disc = (-r * self.times[k]).exp();
            if dc[k] != 0.0 {
                // continuous support sits at the barrier
                let at = level.unwrap_or(self.x_post[k]);
                total += disc * g(at) * dc[k];
            }
            if dj[k] != 0.0 {
                total += disc * zhu_jump_cost(g, from[k], dj[k], up)?;
            }
        }
        Ok(total)
    }

    /// Plain Stieltjes integral of e^{-rt} g(X_t) against the control, with
    /// jumps entering as point masses at their pre-jump state. With constant
    /// g this coincides with the smoothing convention.
    pub fn stieltjes_integral<G: Fn(f64) -> f64>(&self, g: &G, side: ControlSide, r: f64) -> f64 {
        let (dc, dj, from, level) = match side {
            ControlSide::Nu => (&self.dnu_c, &self.dnu_j, &self.nu_jump_from, self.nu_level),
            ControlSide::Xi => (&self.dxi_c, &self.dxi_j, &self.xi_jump_from, self.xi_level),
        };
        let mut total = 0.0;
        for k in 0..self.times.len() {
            let disc = (-r * self.times[k]).exp();
            if dc[k] != 0.0 {
                total += disc * g(level.unwrap_or(self.x_post[k])) * dc[k];
            }
            if dj[k] != 0.0 {
                total += disc * g(from[k]) * dj[k];
            }
        }
        total
    }

    /// Left-point discounted time integral of f along the path.
    pub fn discounted_time_integral<F: Fn(f64) -> f64>(&self, f: &F, r: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.times.len().saturating_sub(1) {
            let dt = self.times[k + 1] - self.times[k];
            total += (-r * self.times[k]).exp() * f(self.x_post[k]) * dt;
        }
        total
    }
}

/// Jump cost of the smoothing convention: int_0^size g(from +/- z) dz.
pub fn zhu_jump_cost<G: Fn(f64) -> f64>(g: &G, from: f64, size: f64, upward: bool) -> Result<f64> {
    if size == 0.0 {
        return Ok(0.0);
    }
    let f = |z: f64| if upward { g(from + z) } else { g(from - z) };
    quad::adaptive(&f, 0.0, size, 1e-11)
}

/// Riemann-Stieltjes cost of splitting one jump into `k` equal back-to-back
/// jumps with left-point evaluation; converges to the smoothing-convention
/// value as k grows (the chattering construction).
pub fn chattering_cost<G: Fn(f64) -> f64>(g: &G, from: f64, size: f64, upward: bool, k: usize) -> f64 {
    let step = size / k as f64;
    let mut total = 0.0;
    let mut x = from;
    for _ in 0..k {
        total += g(x) * step;
        x = if upward { x + step } else { x - step };
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jump_cost_of_constant_is_mass_times_value() {
        let c = 2.5;
        let got = zhu_jump_cost(&|_| c, 1.0, 0.7, true).unwrap();
        assert_relative_eq!(got, c * 0.7, max_relative = 1e-12);
    }

    #[test]
    fn jump_cost_of_linear_is_exact() {
        // g(x) = x, upward jump of size d from y: y d + d^2/2
        let (y, d) = (1.3, 0.8);
        let got = zhu_jump_cost(&|x| x, y, d, true).unwrap();
        assert_relative_eq!(got, y * d + d * d / 2.0, max_relative = 1e-12);
        // downward: y d - d^2/2
        let got = zhu_jump_cost(&|x| x, y, d, false).unwrap();
        assert_relative_eq!(got, y * d - d * d / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn chattering_converges_to_smoothing_value_at_first_order() {
        let g = |x: f64| x * x + 0.3 * x.sin();
        let (y, d) = (0.7, 1.1);
        let zhu = zhu_jump_cost(&g, y, d, true).unwrap();
        let mut prev_err = f64::INFINITY;
        for k in [1usize, 2, 4, 8, 16, 32, 64, 128, 256] {
            let err = (chattering_cost(&g, y, d, true, k) - zhu).abs();
            if k > 1 {
                // left Riemann sums halve their error with each doubling
                assert!(err < prev_err * 0.6, "k = {k}: {err} vs {prev_err}");
            }
            prev_err = err;
        }
        // Richardson check: error ~ C/k
        let e64 = (chattering_cost(&g, y, d, true, 64) - zhu).abs();
        let e128 = (chattering_cost(&g, y, d, true, 128) - zhu).abs();
        assert_relative_eq!(e64 / e128, 2.0, max_relative = 0.05);
    }
}
