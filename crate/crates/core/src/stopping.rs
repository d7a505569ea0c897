//! The nonzero-sum game of stopping: payoff geometry, existence conditions,
//! the smooth-fit threshold system, construction and verification of the
//! value functions, and the hitting-time Monte Carlo cross-check.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionModel, FundamentalPair};
use crate::error::{Error, Result};
use crate::func::{C2Fn, ScalarFn};
use crate::num::grid::{approach, linspace};
use crate::num::roots::{self, landscape_error, newton2d, newton2d_multistart};
use crate::num::{mean_stderr, quad};
use crate::report::{CheckItem, CheckReport, CheckStatus};
use crate::sim::rng::path_rng;

/// Player index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

/// Stop/continue payoffs of the stopping game. Player i pays G_i when
/// stopping first, L_i when the opponent stops first. G_i must be C^1
/// (second derivatives are consumed by the generator-based geometry); only
/// values of L_i are required by the theory, but derivative closures travel
/// along for the pasting diagnostics and quadrature shortcuts.
#[derive(Clone)]
pub struct Payoffs {
    pub g1: C2Fn,
    pub g2: C2Fn,
    pub l1: C2Fn,
    pub l2: C2Fn,
}

impl Payoffs {
    pub fn g(&self, p: Player) -> &C2Fn {
        match p {
            Player::One => &self.g1,
            Player::Two => &self.g2,
        }
    }

    pub fn l(&self, p: Player) -> &C2Fn {
        match p {
            Player::One => &self.l1,
            Player::Two => &self.l2,
        }
    }

    /// L_i < G_i pointwise on the grid.
    pub fn validate_order(&self, grid: &[f64]) -> Result<()> {
        for &x in grid {
            if !(self.l1.eval(x) < self.g1.eval(x)) {
                return Err(Error::Assumption(format!("L1({x}) >= G1({x})")));
            }
            if !(self.l2.eval(x) < self.g2.eval(x)) {
                return Err(Error::Assumption(format!("L2({x}) >= G2({x})")));
            }
        }
        Ok(())
    }
}

/// theta_i(x) = (G_i'(x) phi(x) - G_i(x) phi'(x)) / (w S'(x)).
pub fn theta(payoffs: &Payoffs, pair: &FundamentalPair, player: Player) -> ScalarFn {
    let g = payoffs.g(player).clone();
    let phi = pair.phi.clone();
    let sp = pair.scale_density.clone();
    let w = pair.wronskian;
    Arc::new(move |x| (g.deriv(x) * phi.eval(x) - g.eval(x) * phi.deriv(x)) / (w * sp(x)))
}

/// zeta_i = L_X G_i - (r - mu') G_i, the running benefit of waiting.
pub fn zeta(payoffs: &Payoffs, model: &DiffusionModel, player: Player) -> ScalarFn {
    let g = payoffs.g(player).clone();
    let m = model.clone();
    Arc::new(move |x| {
        let s = (m.sigma)(x);
        0.5 * s * s * g.second(x) + m.stopping_drift(x) * g.deriv(x) - m.kill_rate(x) * g.eval(x)
    })
}

/// Root of zeta_i under the single-crossing assumption: zeta_1 > 0 left of
/// x_hat_1, zeta_2 > 0 right of x_hat_2. Bisection to relative 1e-10.
pub fn hat_x(
    payoffs: &Payoffs,
    model: &DiffusionModel,
    scan: (f64, f64),
    player: Player,
) -> Result<f64> {
    let z = zeta(payoffs, model, player);
    let grid = linspace(scan.0, scan.1, 2001);
    let crossings = roots::sign_changes(&|x| z(x), &grid, 1e-10);
    let what = match player {
        Player::One => "zeta_1",
        Player::Two => "zeta_2",
    };
    match crossings.len() {
        0 => Err(Error::NoSignChange { what: what.into(), lo: scan.0, hi: scan.1 }),
        1 => {
            let root = crossings[0];
            // orientation: positive on the waiting side
            let probe = match player {
                Player::One => 0.5 * (scan.0 + root),
                Player::Two => 0.5 * (root + scan.1),
            };
            if z(probe) <= 0.0 {
                return Err(Error::Assumption(format!(
                    "{what} has the wrong sign on its waiting side (value {} at x = {probe})",
                    z(probe)
                )));
            }
            Ok(root)
        }
        _ => Err(Error::MultipleCrossings { what: what.into(), crossings }),
    }
}

// ---------------------------------------------------------------------------
// endpoint trend diagnostics (pass/warn, never proofs)
// ---------------------------------------------------------------------------

/// Values of `f` on a geometric grid marching from `from` toward `target`.
fn trend_values(f: &dyn Fn(f64) -> f64, from: f64, target: f64, n: usize) -> Vec<f64> {
    approach(from, target, n).into_iter().map(f).collect()
}

/// Decay-to-zero trend: the tail must shrink by at least 100x from the head.
fn decay_status(vals: &[f64]) -> (CheckStatus, f64) {
    let head = vals[0].abs().max(1e-300);
    let tail = vals.last().unwrap().abs();
    let monotone_tail = vals[vals.len() / 2..].windows(2).all(|w| w[1].abs() <= w[0].abs() * 1.001);
    if monotone_tail && tail < 1e-2 * head {
        (CheckStatus::Pass, tail)
    } else {
        (CheckStatus::Warn, tail)
    }
}

/// Bounded trend: tail not exploding relative to head.
fn bounded_status(vals: &[f64]) -> (CheckStatus, f64) {
    let head = vals[0].abs().max(1e-300);
    let tail = vals.last().unwrap().abs();
    if tail <= 10.0 * head.max(1.0) {
        (CheckStatus::Pass, tail)
    } else {
        (CheckStatus::Warn, tail)
    }
}

/// Strict-sign trend on the tail grid.
fn sign_status(vals: &[f64], want_positive: bool) -> (CheckStatus, f64) {
    let tail = &vals[vals.len() / 2..];
    let ok = tail.iter().all(|&v| if want_positive { v > 0.0 } else { v < 0.0 });
    (if ok { CheckStatus::Pass } else { CheckStatus::Warn }, *vals.last().unwrap())
}

/// Tail-integral convergence trend for the resolvent integrability condition:
/// panel contributions of `integrand` toward `target` must decay geometrically.
fn integrable_status(integrand: &dyn Fn(f64) -> f64, from: f64, target: f64) -> (CheckStatus, f64) {
    let pts = approach(from, target, 14);
    let mut panels = Vec::new();
    for w in pts.windows(2) {
        let v = quad::adaptive(&|x| integrand(x).abs(), w[0], w[1], 1e-10)
            .map(|v| v.abs())
            .unwrap_or(f64::INFINITY);
        panels.push(v);
    }
    let tail = &panels[panels.len() / 2..];
    let decaying = tail.windows(2).all(|w| w[1] <= w[0] * 0.95 + 1e-14);
    let last = *panels.last().unwrap();
    (if decaying { CheckStatus::Pass } else { CheckStatus::Warn }, last)
}

// ---------------------------------------------------------------------------
// existence conditions
// ---------------------------------------------------------------------------

/// Sufficient-condition and standing-assumption report for existence of a
/// threshold equilibrium. Failures and warnings are entries, not errors.
pub fn check_existence(
    payoffs: &Payoffs,
    model: &DiffusionModel,
    pair: &FundamentalPair,
    trunc: (f64, f64),
) -> CheckReport {
    use crate::diffusion::BoundaryType::*;

    let mut rep = CheckReport::new("existence conditions");
    let (x_lo, x_hi) = trunc;
    let mid = 0.5 * (x_lo + x_hi);
    let grid = linspace(x_lo, x_hi, 1001);

    // ordering L_i < G_i
    let mut worst_gap = f64::INFINITY;
    let mut worst_at = x_lo;
    for &x in &grid {
        for (l, g) in [(&payoffs.l1, &payoffs.g1), (&payoffs.l2, &payoffs.g2)] {
            let gap = g.eval(x) - l.eval(x);
            if gap < worst_gap {
                worst_gap = gap;
                worst_at = x;
            }
        }
    }
    rep.push(
        CheckItem::new(
            "payoff ordering L_i < G_i",
            if worst_gap > 0.0 { CheckStatus::Pass } else { CheckStatus::Fail },
            worst_gap,
        )
        .with_location(worst_at),
    );

    // x_hat geometry
    let xh = (
        hat_x(payoffs, model, trunc, Player::One),
        hat_x(payoffs, model, trunc, Player::Two),
    );
    match (&xh.0, &xh.1) {
        (Ok(x1), Ok(x2)) => {
            rep.push(
                CheckItem::new(
                    "x_hat_1 < x_hat_2",
                    if x1 < x2 { CheckStatus::Pass } else { CheckStatus::Fail },
                    x2 - x1,
                )
                .with_note(format!("x_hat_1 = {x1:.9}, x_hat_2 = {x2:.9}")),
            );
        }
        _ => {
            rep.push(CheckItem::new("x_hat_1 < x_hat_2", CheckStatus::Fail, f64::NAN).with_note(
                format!(
                    "root finding failed: {:?} / {:?}",
                    xh.0.as_ref().err(),
                    xh.1.as_ref().err()
                ),
            ));
        }
    }

    // single crossing of zeta_i
    for (p, name) in [(Player::One, "zeta_1 single crossing"), (Player::Two, "zeta_2 single crossing")] {
        let z = zeta(payoffs, model, p);
        let n = roots::sign_changes(&|x| z(x), &grid, 1e-10).len();
        rep.push(CheckItem::new(
            name,
            if n == 1 { CheckStatus::Pass } else { CheckStatus::Fail },
            n as f64,
        ));
    }

    // decay diagnostics |G_i/phi| -> 0 at lo, |G_i/psi| -> 0 at hi
    for (g, tag) in [(&payoffs.g1, "G1"), (&payoffs.g2, "G2")] {
        let phi = pair.phi.clone();
        let psi = pair.psi.clone();
        let gl = g.clone();
        let gh = g.clone();
        let vals_lo = trend_values(&move |x| (gl.eval(x) / phi.eval(x)).abs(), mid, x_lo, 16);
        let (st, v) = decay_status(&vals_lo);
        rep.push(CheckItem::new(format!("|{tag}/phi| -> 0 at lower endpoint"), st, v));
        let vals_hi = trend_values(&move |x| (gh.eval(x) / psi.eval(x)).abs(), mid, x_hi, 16);
        let (st, v) = decay_status(&vals_hi);
        rep.push(CheckItem::new(format!("|{tag}/psi| -> 0 at upper endpoint"), st, v));
    }

    // boundedness of L_i against the fundamental solutions
    for (l, tag) in [(&payoffs.l1, "L1"), (&payoffs.l2, "L2")] {
        let phi = pair.phi.clone();
        let psi = pair.psi.clone();
        let ll = l.clone();
        let lh = l.clone();
        let vals_lo = trend_values(&move |x| (ll.eval(x) / phi.eval(x)).abs(), mid, x_lo, 16);
        let (st, v) = bounded_status(&vals_lo);
        rep.push(CheckItem::new(format!("|{tag}/phi| bounded at lower endpoint"), st, v));
        let vals_hi = trend_values(&move |x| (lh.eval(x) / psi.eval(x)).abs(), mid, x_hi, 16);
        let (st, v) = bounded_status(&vals_hi);
        rep.push(CheckItem::new(format!("|{tag}/psi| bounded at upper endpoint"), st, v));
    }

    // endpoint sign behaviour of zeta_i (class membership of G_i)
    for (p, tag, pos_lo) in [(Player::One, "zeta_1", true), (Player::Two, "zeta_2", false)] {
        let z = zeta(payoffs, model, p);
        let z2 = z.clone();
        let vals_lo = trend_values(&move |x| z(x), mid, x_lo, 16);
        let (st, v) = sign_status(&vals_lo, pos_lo);
        rep.push(CheckItem::new(format!("{tag} sign at lower endpoint"), st, v));
        let vals_hi = trend_values(&move |x| z2(x), mid, x_hi, 16);
        let (st, v) = sign_status(&vals_hi, !pos_lo);
        rep.push(CheckItem::new(format!("{tag} sign at upper endpoint"), st, v));
    }

    // resolvent integrability of zeta_i against the speed density
    for (p, tag) in [(Player::One, "zeta_1"), (Player::Two, "zeta_2")] {
        let z = zeta(payoffs, model, p);
        let z2 = z.clone();
        let psi = pair.psi.clone();
        let phi = pair.phi.clone();
        let sp = pair.scale_density.clone();
        let sp2 = pair.scale_density.clone();
        let m = model.clone();
        let m2 = model.clone();
        let lo_integrand = move |x: f64| {
            let s = (m.sigma)(x);
            psi.eval(x) * z(x) * 2.0 / (s * s * sp(x))
        };
        let hi_integrand = move |x: f64| {
            let s = (m2.sigma)(x);
            phi.eval(x) * z2(x) * 2.0 / (s * s * sp2(x))
        };
        let (st, v) = integrable_status(&lo_integrand, mid, x_lo);
        rep.push(CheckItem::new(format!("resolvent integrability of {tag} near lower endpoint"), st, v));
        let (st, v) = integrable_status(&hi_integrand, mid, x_hi);
        rep.push(CheckItem::new(format!("resolvent integrability of {tag} near upper endpoint"), st, v));
    }

    // sufficient condition cases by declared boundary types
    match (model.boundary_lo, model.boundary_hi) {
        (Natural, Natural) => {
            rep.push(
                CheckItem::new("case 1: both boundaries natural", CheckStatus::Pass, 1.0)
                    .with_note("declared boundary classification"),
            );
        }
        (EntranceNotExit, Natural) => {
            rep.push(CheckItem::new("case 2: lower entrance-not-exit, upper natural", CheckStatus::Pass, 1.0));
            case2_items(&mut rep, payoffs, model, pair, trunc);
        }
        (lo, hi) => {
            rep.push(
                CheckItem::new("boundary combination outside sufficient conditions", CheckStatus::Warn, 0.0)
                    .with_note(format!("declared ({lo:?}, {hi:?}); no sufficient condition applies")),
            );
        }
    }

    // standing unchecked assumption
    rep.push(
        CheckItem::new("sigma' exponential-martingale integrability", CheckStatus::Warn, f64::NAN)
            .with_note("not verified numerically; unchecked standing assumption of the measure change"),
    );

    rep
}

/// Numeric evaluation of the three case-2 items.
fn case2_items(
    rep: &mut CheckReport,
    payoffs: &Payoffs,
    model: &DiffusionModel,
    pair: &FundamentalPair,
    trunc: (f64, f64),
) {
    let (x_lo, x_hi) = trunc;
    let th1 = theta(payoffs, pair, Player::One);
    let th2 = theta(payoffs, pair, Player::Two);

    // theta_1 at the lower endpoint, taken as the last trend value
    let th1_lo = {
        let pts = approach(0.5 * (x_lo + x_hi), x_lo, 18);
        th1(*pts.last().unwrap())
    };

    // x_2^infty solving theta_2(x) = (G_2/psi)(x) on (x_hat_2, x_hi)
    let xh2 = match hat_x(payoffs, model, trunc, Player::Two) {
        Ok(v) => v,
        Err(e) => {
            rep.push(CheckItem::new("case 2 item (2.i)", CheckStatus::Fail, f64::NAN).with_note(format!("{e}")));
            return;
        }
    };
    let g2 = payoffs.g2.clone();
    let psi = pair.psi.clone();
    let gap = move |x: f64| th2(x) - g2.eval(x) / psi.eval(x);
    let scan = linspace(xh2 + 1e-9 * (x_hi - xh2), x_hi, 801);
    let crossings = roots::sign_changes(&gap, &scan, 1e-12);
    match crossings.first() {
        Some(&x2inf) => {
            let rhs = payoffs.l1.eval(x2inf) / pair.psi.eval(x2inf);
            rep.push(
                CheckItem::new(
                    "case 2 item (2.i): theta_1(lo+) < (L1/psi)(x_2^infty)",
                    if th1_lo < rhs { CheckStatus::Pass } else { CheckStatus::Fail },
                    rhs - th1_lo,
                )
                .with_location(x2inf)
                .with_note(format!("theta_1(lo+) = {th1_lo:.6e}, (L1/psi)(x2inf) = {rhs:.6e}")),
            );
        }
        None => {
            rep.push(
                CheckItem::new("case 2 item (2.i)", CheckStatus::Warn, f64::NAN)
                    .with_note("theta_2(x) = (G2/psi)(x) has no root in the truncated scan range"),
            );
        }
    }

    // (2.ii): sup{x : L1(x) = theta_1(lo+) psi(x)} <= x_hat_2
    let l1 = payoffs.l1.clone();
    let psi2 = pair.psi.clone();
    let diff = move |x: f64| l1.eval(x) - th1_lo * psi2.eval(x);
    let scan2 = linspace(x_lo, x_hi, 2001);
    let cr = roots::sign_changes(&diff, &scan2, 1e-12);
    match cr.last() {
        Some(&sup_x) => {
            rep.push(
                CheckItem::new(
                    "case 2 item (2.ii): sup root of L1 = theta_1(lo+) psi below x_hat_2",
                    if sup_x <= xh2 { CheckStatus::Pass } else { CheckStatus::Fail },
                    xh2 - sup_x,
                )
                .with_location(sup_x),
            );
        }
        None => {
            rep.push(
                CheckItem::new("case 2 item (2.ii)", CheckStatus::Pass, f64::NAN)
                    .with_note("no root on the truncated range; supremum vacuously below x_hat_2"),
            );
        }
    }

    // (2.iii): lim (L1/phi)(x) at the upper endpoint > -infinity (bounded-below trend)
    let l1b = payoffs.l1.clone();
    let phi = pair.phi.clone();
    let vals = trend_values(&move |x| l1b.eval(x) / phi.eval(x), 0.5 * (x_lo + x_hi), x_hi, 16);
    let tail_min = vals[vals.len() / 2..].iter().cloned().fold(f64::INFINITY, f64::min);
    let head = vals[0].abs().max(1.0);
    rep.push(CheckItem::new(
        "case 2 item (2.iii): (L1/phi) bounded below at upper endpoint",
        if tail_min > -1e6 * head { CheckStatus::Pass } else { CheckStatus::Warn },
        tail_min,
    ));
}

// ---------------------------------------------------------------------------
// the smooth-fit threshold system
// ---------------------------------------------------------------------------

/// A threshold equilibrium of the stopping game with its construction
/// diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdEquilibrium {
    pub a_star: f64,
    pub b_star: f64,
    /// (A, B) with v1 = A psi + B phi on (a*, b*).
    pub v1_coeffs: (f64, f64),
    pub v2_coeffs: (f64, f64),
    /// Raw left-hand sides of the two threshold equations at the solution.
    pub residuals: [f64; 2],
    /// Same residuals scaled by the magnitude of the participating terms.
    pub residuals_scaled: [f64; 2],
    /// |v1'(a*+) - G1'(a*)| and |v2'(b*-) - G2'(b*)|.
    pub smooth_fit: [f64; 2],
    /// Further distinct roots of the system inside the box, if any.
    pub other_roots: Vec<(f64, f64)>,
    /// Set when more than one root was found; the returned root minimizes the
    /// combined smooth-fit residual and requires user review.
    pub multiple_roots: bool,
}

/// The two equations of the threshold system and their magnitude scales.
fn system_fn<'a>(
    payoffs: &'a Payoffs,
    pair: &'a FundamentalPair,
) -> impl Fn([f64; 2]) -> ([f64; 2], [f64; 2]) + 'a {
    let th1 = theta(payoffs, pair, Player::One);
    let th2 = theta(payoffs, pair, Player::Two);
    move |v: [f64; 2]| {
        let (a, b) = (v[0], v[1]);
        let fa = |x: f64| pair.psi.eval(x) / pair.phi.eval(x);
        let t11 = payoffs.g1.eval(a) / pair.phi.eval(a);
        let t12 = payoffs.l1.eval(b) / pair.phi.eval(b);
        let t13 = th1(a) * (fa(a) - fa(b));
        let t21 = payoffs.g2.eval(b) / pair.phi.eval(b);
        let t22 = payoffs.l2.eval(a) / pair.phi.eval(a);
        let t23 = th2(b) * (fa(b) - fa(a));
        let s1 = t11.abs().max(t12.abs()).max(t13.abs()).max(1.0);
        let s2 = t21.abs().max(t22.abs()).max(t23.abs()).max(1.0);
        ([t11 - t12 - t13, t21 - t22 - t23], [s1, s2])
    }
}

/// Solve the 2x2 smooth-fit system for (a*, b*) inside the box
/// (x_lo, x_hat_1) x (x_hat_2, x_hi). Multi-start damped Newton when no
/// initial guess is supplied; all distinct roots are reported.
pub fn solve_thresholds(
    payoffs: &Payoffs,
    model: &DiffusionModel,
    pair: &FundamentalPair,
    trunc: (f64, f64),
    init: Option<(f64, f64)>,
) -> Result<ThresholdEquilibrium> {
    let (x_lo, x_hi) = trunc;
    let xh1 = hat_x(payoffs, model, trunc, Player::One)?;
    let xh2 = hat_x(payoffs, model, trunc, Player::Two)?;
    if !(xh1 < xh2) {
        return Err(Error::Assumption(format!(
            "x_hat_1 = {xh1} must lie strictly below x_hat_2 = {xh2}"
        )));
    }
    let eps = 1e-6 * (xh2 - xh1);
    let box_ = [x_lo, xh1 - eps, xh2 + eps, x_hi];
    let raw = system_fn(payoffs, pair);
    let scaled = |v: [f64; 2]| {
        let (f, s) = raw(v);
        [f[0] / s[0], f[1] / s[1]]
    };

    let mut found = match init {
        Some((a0, b0)) => newton2d(&scaled, [a0, b0], box_, 1e-12, 120).into_iter().collect::<Vec<_>>(),
        None => newton2d_multistart(&scaled, box_, 8, 1e-12, 1e-5),
    };
    if found.is_empty() && init.is_some() {
        // fall back to the coarse grid before giving up
        found = newton2d_multistart(&scaled, box_, 8, 1e-12, 1e-5);
    }
    if found.is_empty() {
        return Err(landscape_error(&scaled, box_, 8));
    }

    // assemble candidates with smooth-fit diagnostics
    let mut candidates: Vec<ThresholdEquilibrium> = found
        .iter()
        .map(|root| {
            let (a, b) = (root.x[0], root.x[1]);
            let (rawres, scales) = raw([a, b]);
            let (c1, c2) = band_coefficients(payoffs, pair, a, b)?;
            let v1p = c1.0 * pair.psi.deriv(a) + c1.1 * pair.phi.deriv(a);
            let v2p = c2.0 * pair.psi.deriv(b) + c2.1 * pair.phi.deriv(b);
            Ok(ThresholdEquilibrium {
                a_star: a,
                b_star: b,
                v1_coeffs: c1,
                v2_coeffs: c2,
                residuals: rawres,
                residuals_scaled: [rawres[0] / scales[0], rawres[1] / scales[1]],
                smooth_fit: [
                    (v1p - payoffs.g1.deriv(a)).abs(),
                    (v2p - payoffs.g2.deriv(b)).abs(),
                ],
                other_roots: Vec::new(),
                multiple_roots: false,
            })
        })
        .collect::<Result<_>>()?;

    candidates.sort_by(|p, q| {
        let sp = p.smooth_fit[0] + p.smooth_fit[1];
        let sq = q.smooth_fit[0] + q.smooth_fit[1];
        sp.partial_cmp(&sq).unwrap()
    });
    let mut best = candidates[0].clone();
    if candidates.len() > 1 {
        best.multiple_roots = true;
        best.other_roots = candidates[1..].iter().map(|c| (c.a_star, c.b_star)).collect();
    }
    Ok(best)
}

/// Band coefficients (A_i, B_i) from the value-matching data
/// v1(a) = G1(a), v1(b) = L1(b) and v2(b) = G2(b), v2(a) = L2(a).
fn band_coefficients(
    payoffs: &Payoffs,
    pair: &FundamentalPair,
    a: f64,
    b: f64,
) -> Result<((f64, f64), (f64, f64))> {
    let solve = |rhs_a: f64, rhs_b: f64| -> Result<(f64, f64)> {
        let (pa, fa) = (pair.psi.eval(a), pair.phi.eval(a));
        let (pb, fb) = (pair.psi.eval(b), pair.phi.eval(b));
        let det = pa * fb - fa * pb;
        if det.abs() < 1e-300 * pa.abs().max(fb.abs()).max(1.0) {
            return Err(Error::Numeric(format!(
                "degenerate psi/phi matrix at (a, b) = ({a}, {b})"
            )));
        }
        Ok(((rhs_a * fb - fa * rhs_b) / det, (pa * rhs_b - rhs_a * pb) / det))
    };
    let c1 = solve(payoffs.g1.eval(a), payoffs.l1.eval(b))?;
    let c2 = solve(payoffs.l2.eval(a), payoffs.g2.eval(b))?;
    Ok((c1, c2))
}

// ---------------------------------------------------------------------------
// value functions
// ---------------------------------------------------------------------------

/// Region of the state space relative to the thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Lower,
    Band,
    Upper,
}

impl Region {
    pub fn of(x: f64, a: f64, b: f64) -> Region {
        if x <= a {
            Region::Lower
        } else if x >= b {
            Region::Upper
        } else {
            Region::Band
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Lower => "lower",
            Region::Band => "band",
            Region::Upper => "upper",
        }
    }
}

/// One player's piecewise value function: a fundamental combination (plus an
/// optional particular solution) on the band, pasted to the given region
/// functions outside.
#[derive(Clone)]
pub struct PiecewiseValue {
    pub a: f64,
    pub b: f64,
    pub coeff_psi: f64,
    pub coeff_phi: f64,
    pub particular: Option<C2Fn>,
    pub lower: C2Fn,
    pub upper: C2Fn,
    pub psi: C2Fn,
    pub phi: C2Fn,
}

impl PiecewiseValue {
    pub fn band_eval(&self, x: f64) -> f64 {
        let mut v = self.coeff_psi * self.psi.eval(x) + self.coeff_phi * self.phi.eval(x);
        if let Some(p) = &self.particular {
            v += p.eval(x);
        }
        v
    }

    pub fn band_deriv(&self, x: f64) -> f64 {
        let mut v = self.coeff_psi * self.psi.deriv(x) + self.coeff_phi * self.phi.deriv(x);
        if let Some(p) = &self.particular {
            v += p.deriv(x);
        }
        v
    }

    pub fn band_second(&self, x: f64) -> f64 {
        let mut v = self.coeff_psi * self.psi.second(x) + self.coeff_phi * self.phi.second(x);
        if let Some(p) = &self.particular {
            v += p.second(x);
        }
        v
    }

    pub fn eval(&self, x: f64) -> f64 {
        match Region::of(x, self.a, self.b) {
            Region::Lower => self.lower.eval(x),
            Region::Band => self.band_eval(x),
            Region::Upper => self.upper.eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match Region::of(x, self.a, self.b) {
            Region::Lower => self.lower.deriv(x),
            Region::Band => self.band_deriv(x),
            Region::Upper => self.upper.deriv(x),
        }
    }

    pub fn second(&self, x: f64) -> f64 {
        match Region::of(x, self.a, self.b) {
            Region::Lower => self.lower.second(x),
            Region::Band => self.band_second(x),
            Region::Upper => self.upper.second(x),
        }
    }

    /// Antiderivative of this piecewise function over [from, to], exact when
    /// every piece carries a primitive, composite Gauss otherwise.
    pub fn integrate(&self, from: f64, to: f64) -> Result<f64> {
        if from == to {
            return Ok(0.0);
        }
        if from > to {
            return Ok(-self.integrate(to, from)?);
        }
        // split at region boundaries
        let mut cuts = vec![from];
        for c in [self.a, self.b] {
            if c > from && c < to {
                cuts.push(c);
            }
        }
        cuts.push(to);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += self.integrate_piece(w[0], w[1])?;
        }
        Ok(total)
    }

    fn integrate_piece(&self, lo: f64, hi: f64) -> Result<f64> {
        let mid = 0.5 * (lo + hi);
        match Region::of(mid, self.a, self.b) {
            Region::Lower => integrate_c2(&self.lower, lo, hi),
            Region::Upper => integrate_c2(&self.upper, lo, hi),
            Region::Band => {
                let psi_part = match &self.psi.antiderivative {
                    Some(p) => self.coeff_psi * (p(hi) - p(lo)),
                    None => {
                        let f = |x: f64| self.coeff_psi * self.psi.eval(x);
                        quad::gauss7_composite(&f, lo, hi, panels(lo, hi))
                    }
                };
                let phi_part = match &self.phi.antiderivative {
                    Some(p) => self.coeff_phi * (p(hi) - p(lo)),
                    None => {
                        let f = |x: f64| self.coeff_phi * self.phi.eval(x);
                        quad::gauss7_composite(&f, lo, hi, panels(lo, hi))
                    }
                };
                let part = match &self.particular {
                    Some(p) => integrate_c2(p, lo, hi)?,
                    None => 0.0,
                };
                Ok(psi_part + phi_part + part)
            }
        }
    }
}

fn panels(lo: f64, hi: f64) -> usize {
    (((hi - lo).abs() * 32.0).ceil() as usize).clamp(8, 4096)
}

fn integrate_c2(f: &C2Fn, lo: f64, hi: f64) -> Result<f64> {
    match &f.antiderivative {
        Some(p) => Ok(p(hi) - p(lo)),
        None => {
            let g = |x: f64| f.eval(x);
            quad::adaptive(&g, lo, hi, 1e-12)
        }
    }
}

/// Both players' stopping-game value functions.
#[derive(Clone)]
pub struct StoppingValues {
    pub a_star: f64,
    pub b_star: f64,
    pub v1: PiecewiseValue,
    pub v2: PiecewiseValue,
}

/// Assemble v1, v2 from a threshold equilibrium: fundamental combinations on
/// the band with the value-matching data of the theorem, pasted to G/L
/// outside.
pub fn stopping_values(eq: &ThresholdEquilibrium, payoffs: &Payoffs, pair: &FundamentalPair) -> StoppingValues {
    let v1 = PiecewiseValue {
        a: eq.a_star,
        b: eq.b_star,
        coeff_psi: eq.v1_coeffs.0,
        coeff_phi: eq.v1_coeffs.1,
        particular: None,
        lower: payoffs.g1.clone(),
        upper: payoffs.l1.clone(),
        psi: pair.psi.clone(),
        phi: pair.phi.clone(),
    };
    let v2 = PiecewiseValue {
        a: eq.a_star,
        b: eq.b_star,
        coeff_psi: eq.v2_coeffs.0,
        coeff_phi: eq.v2_coeffs.1,
        particular: None,
        lower: payoffs.l2.clone(),
        upper: payoffs.g2.clone(),
        psi: pair.psi.clone(),
        phi: pair.phi.clone(),
    };
    StoppingValues { a_star: eq.a_star, b_star: eq.b_star, v1, v2 }
}

/// Grid verification of the boundary value problem: equality on the band,
/// the two one-sided inequalities, and the obstacle condition.
pub fn verify_variational(
    v: &StoppingValues,
    payoffs: &Payoffs,
    model: &DiffusionModel,
    grid: &[f64],
) -> CheckReport {
    let mut rep = CheckReport::new("stopping-game variational checks");
    let (a, b) = (v.a_star, v.b_star);
    let eps = 1e-7 * (b - a);
    let op = |pv: &PiecewiseValue, x: f64| {
        let s = (model.sigma)(x);
        0.5 * s * s * pv.second(x) + model.stopping_drift(x) * pv.deriv(x) - model.kill_rate(x) * pv.eval(x)
    };

    // equality on the band, scaled
    let mut worst_eq = 0.0f64;
    let mut worst_eq_at = a;
    for &x in grid.iter().filter(|&&x| x > a + eps && x < b - eps) {
        for pv in [&v.v1, &v.v2] {
            let r = op(pv, x).abs() / pv.eval(x).abs().max(1.0);
            if r > worst_eq {
                worst_eq = r;
                worst_eq_at = x;
            }
        }
    }
    rep.push(
        CheckItem::new(
            "band ODE equality",
            if worst_eq <= 1e-8 { CheckStatus::Pass } else { CheckStatus::Fail },
            worst_eq,
        )
        .with_threshold(1e-8)
        .with_location(worst_eq_at),
    );

    // inequality for v1 on (lo, a]
    let mut worst1 = 0.0f64;
    let mut worst1_at = a;
    for &x in grid.iter().filter(|&&x| x < a - eps) {
        let r = op(&v.v1, x) / v.v1.eval(x).abs().max(1.0);
        if -r > worst1 {
            worst1 = -r;
            worst1_at = x;
        }
    }
    rep.push(
        CheckItem::new(
            "v1 inequality below a*",
            if worst1 <= 1e-9 { CheckStatus::Pass } else { CheckStatus::Fail },
            worst1,
        )
        .with_threshold(1e-9)
        .with_location(worst1_at),
    );

    // inequality for v2 on [b, hi)
    let mut worst2 = 0.0f64;
    let mut worst2_at = b;
    for &x in grid.iter().filter(|&&x| x > b + eps) {
        let r = op(&v.v2, x) / v.v2.eval(x).abs().max(1.0);
        if -r > worst2 {
            worst2 = -r;
            worst2_at = x;
        }
    }
    rep.push(
        CheckItem::new(
            "v2 inequality above b*",
            if worst2 <= 1e-9 { CheckStatus::Pass } else { CheckStatus::Fail },
            worst2,
        )
        .with_threshold(1e-9)
        .with_location(worst2_at),
    );

    // obstacle v_i <= G_i everywhere
    let mut worst_ob = 0.0f64;
    let mut worst_ob_at = a;
    for &x in grid {
        for (pv, g) in [(&v.v1, &payoffs.g1), (&v.v2, &payoffs.g2)] {
            let viol = (pv.eval(x) - g.eval(x)) / g.eval(x).abs().max(1.0);
            if viol > worst_ob {
                worst_ob = viol;
                worst_ob_at = x;
            }
        }
    }
    rep.push(
        CheckItem::new(
            "obstacle v_i <= G_i",
            if worst_ob <= 1e-9 { CheckStatus::Pass } else { CheckStatus::Fail },
            worst_ob,
        )
        .with_threshold(1e-9)
        .with_location(worst_ob_at),
    );

    // pasting: continuity at both thresholds, C^1 at the smooth-fit sides
    let c0 = (v.v1.band_eval(a) - payoffs.g1.eval(a))
        .abs()
        .max((v.v1.band_eval(b) - payoffs.l1.eval(b)).abs())
        .max((v.v2.band_eval(b) - payoffs.g2.eval(b)).abs())
        .max((v.v2.band_eval(a) - payoffs.l2.eval(a)).abs());
    rep.push(
        CheckItem::new("value matching at a*, b*", if c0 <= 1e-9 { CheckStatus::Pass } else { CheckStatus::Fail }, c0)
            .with_threshold(1e-9),
    );
    let c1 = (v.v1.band_deriv(a) - payoffs.g1.deriv(a))
        .abs()
        .max((v.v2.band_deriv(b) - payoffs.g2.deriv(b)).abs());
    rep.push(
        CheckItem::new("smooth fit at a* (v1) and b* (v2)", if c1 <= 1e-8 { CheckStatus::Pass } else { CheckStatus::Fail }, c1)
            .with_threshold(1e-8),
    );

    rep
}

// ---------------------------------------------------------------------------
// hitting-time Monte Carlo
// ---------------------------------------------------------------------------

/// Settings for the hitting-time estimator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StoppingMcConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Brownian-bridge correction for intra-step crossings.
    pub bridge: bool,
}

impl Default for StoppingMcConfig {
    fn default() -> Self {
        Self { n_paths: 10_000, dt: 1e-3, t_max: 80.0, seed: 1, bridge: true }
    }
}

/// Estimates of (J1, J2) under a threshold stopping pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoppingMcResult {
    pub j1: f64,
    pub j2: f64,
    pub stderr1: f64,
    pub stderr2: f64,
    pub n_paths: usize,
    /// Paths hitting the horizon cap (contribute zero; diagnostic only).
    pub truncated_fraction: f64,
    /// Upper bound on the absolute truncation bias.
    pub truncation_bias_bound: f64,
    /// Paths excluded because the state-dependent kill rate went non-positive.
    pub excluded_paths: usize,
    /// False when the truncated mass exceeds the 1e-3 gate.
    pub reliable: bool,
}

enum PathOutcome {
    Stopped { j1: f64, j2: f64 },
    Truncated { discount: f64 },
    Excluded,
}

fn stopping_single_path(
    model: &DiffusionModel,
    payoffs: &Payoffs,
    a: f64,
    b: f64,
    x0: f64,
    cfg: &StoppingMcConfig,
    path_idx: u64,
) -> PathOutcome {
    // degenerate starts stop immediately (strict-infimum convention: the
    // process is already in a stopping region at t = 0+)
    if x0 <= a {
        return PathOutcome::Stopped { j1: payoffs.g1.eval(x0), j2: payoffs.l2.eval(x0) };
    }
    if x0 >= b {
        return PathOutcome::Stopped { j1: payoffs.l1.eval(x0), j2: payoffs.g2.eval(x0) };
    }
    let mut rng = path_rng(cfg.seed, path_idx);
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let n_steps = (cfg.t_max / dt).round() as usize;
    let mut x = x0;
    let mut kill_acc = 0.0; // integral of (r - mu')(X_s) ds
    for _ in 0..n_steps {
        let z: f64 = rng.sample(StandardNormal);
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        let rate = model.kill_rate(x);
        if rate <= 0.0 {
            return PathOutcome::Excluded;
        }
        let sig = (model.sigma)(x);
        let y = x + model.stopping_drift(x) * dt + sig * sq * z;
        let (m, mm) = if cfg.bridge {
            bridge_extremes(x, y, sig * sig * dt, u1, u2)
        } else {
            (x.min(y), x.max(y))
        };
        let hit_a = m <= a;
        let hit_b = mm >= b;
        if hit_a || hit_b {
            let disc = (-(kill_acc + 0.5 * rate * dt)).exp();
            // simultaneous detection resolved toward the nearer barrier;
            // ties themselves follow the player-2-first indicator convention
            let to_b = if hit_a && hit_b { (x - a) >= (b - x) } else { hit_b };
            return if to_b {
                PathOutcome::Stopped { j1: disc * payoffs.l1.eval(b), j2: disc * payoffs.g2.eval(b) }
            } else {
                PathOutcome::Stopped { j1: disc * payoffs.g1.eval(a), j2: disc * payoffs.l2.eval(a) }
            };
        }
        kill_acc += rate * dt;
        x = y;
    }
    PathOutcome::Truncated { discount: (-kill_acc).exp() }
}

/// Conditional Brownian-bridge minimum and maximum over one Euler step with
/// endpoint pair (x, y) and variance s2 = sigma(x)^2 dt.
#[inline]
pub(crate) fn bridge_extremes(x: f64, y: f64, s2: f64, u1: f64, u2: f64) -> (f64, f64) {
    if s2 <= 0.0 {
        return (x.min(y), x.max(y));
    }
    let d = y - x;
    let mn = 0.5 * (x + y - (d * d - 2.0 * s2 * u1.ln()).sqrt());
    let mx = 0.5 * (x + y + (d * d - 2.0 * s2 * u2.ln()).sqrt());
    (mn, mx)
}

/// Per-path payoff pairs for paired-difference work; `None` marks excluded
/// paths.
pub fn stopping_payoff_paths(
    model: &DiffusionModel,
    payoffs: &Payoffs,
    thresholds: (f64, f64),
    x0: f64,
    cfg: &StoppingMcConfig,
) -> Vec<Option<(f64, f64, bool)>> {
    let (a, b) = thresholds;
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| match stopping_single_path(model, payoffs, a, b, x0, cfg, i) {
            PathOutcome::Stopped { j1, j2 } => Some((j1, j2, false)),
            PathOutcome::Truncated { .. } => Some((0.0, 0.0, true)),
            PathOutcome::Excluded => None,
        })
        .collect()
}

/// Monte Carlo estimate of the stopping-game payoffs under threshold
/// strategies (tau_1 = first passage below a, tau_2 = first passage above b),
/// with the state-dependent discount accumulated along the path.
pub fn stopping_payoff_mc(
    model: &DiffusionModel,
    payoffs: &Payoffs,
    thresholds: (f64, f64),
    x0: f64,
    cfg: &StoppingMcConfig,
) -> Result<StoppingMcResult> {
    let (a, b) = thresholds;
    if !(a < b) {
        return Err(Error::Config(format!("thresholds must satisfy a < b, got ({a}, {b})")));
    }
    model.require_inside(x0)?;
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| stopping_single_path(model, payoffs, a, b, x0, cfg, i))
        .collect();

    let band_bound = {
        let pts = linspace(a, b, 33);
        pts.iter()
            .flat_map(|&x| {
                [
                    payoffs.g1.eval(x).abs(),
                    payoffs.g2.eval(x).abs(),
                    payoffs.l1.eval(x).abs(),
                    payoffs.l2.eval(x).abs(),
                ]
            })
            .fold(0.0f64, f64::max)
    };

    let mut v1 = Vec::with_capacity(cfg.n_paths);
    let mut v2 = Vec::with_capacity(cfg.n_paths);
    let mut truncated = 0usize;
    let mut excluded = 0usize;
    let mut bias = 0.0f64;
    for o in outcomes {
        match o {
            PathOutcome::Stopped { j1, j2 } => {
                v1.push(j1);
                v2.push(j2);
            }
            PathOutcome::Truncated { discount } => {
                truncated += 1;
                bias += discount * band_bound;
                v1.push(0.0);
                v2.push(0.0);
            }
            PathOutcome::Excluded => excluded += 1,
        }
    }
    if v1.is_empty() {
        return Err(Error::Numeric("all paths excluded by discount-rate breach".into()));
    }
    let (m1, s1) = mean_stderr(&v1);
    let (m2, s2) = mean_stderr(&v2);
    let frac = truncated as f64 / v1.len() as f64;
    Ok(StoppingMcResult {
        j1: m1,
        j2: m2,
        stderr1: s1,
        stderr2: s2,
        n_paths: v1.len(),
        truncated_fraction: frac,
        truncation_bias_bound: bias / v1.len() as f64,
        excluded_paths: excluded,
        reliable: frac <= 1e-3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pollution::{self, PollutionConfig};
    use approx::assert_relative_eq;

    fn fixture() -> (DiffusionModel, Payoffs, FundamentalPair, (f64, f64)) {
        let cfg = PollutionConfig::reference();
        let model = cfg.model().unwrap();
        let pair = pollution::analytic_pair(&cfg).unwrap();
        let payoffs = pollution::build_payoffs(&cfg).unwrap();
        (model, payoffs, pair, (0.05, 8.0))
    }

    #[test]
    fn theta_of_phi_vanishes_and_theta_of_psi_is_one() {
        let (_, _, pair, _) = fixture();
        // G = phi: numerator phi' phi - phi phi' = 0
        let mk = |g: C2Fn| Payoffs {
            g1: g.clone(),
            g2: g.clone(),
            l1: C2Fn::constant_minus(-1.0, &C2Fn::constant(0.0)),
            l2: C2Fn::constant_minus(-1.0, &C2Fn::constant(0.0)),
        };
        let th_phi = theta(&mk(pair.phi.clone()), &pair, Player::One);
        let th_psi = theta(&mk(pair.psi.clone()), &pair, Player::One);
        for &x in &[0.3, 1.0, 2.7] {
            assert_relative_eq!(th_phi(x), 0.0, epsilon = 1e-12);
            assert_relative_eq!(th_psi(x), 1.0, max_relative = 1e-10);
        }
        // linearity: G = psi + phi -> theta = 1
        let sum = {
            let (p, q) = (pair.psi.clone(), pair.phi.clone());
            let (dp, dq) = (pair.psi.clone(), pair.phi.clone());
            let (sp, sq) = (pair.psi.clone(), pair.phi.clone());
            C2Fn::new(
                Arc::new(move |x| p.eval(x) + q.eval(x)),
                Arc::new(move |x| dp.deriv(x) + dq.deriv(x)),
                Arc::new(move |x| sp.second(x) + sq.second(x)),
            )
        };
        let th_sum = theta(&mk(sum), &pair, Player::One);
        for &x in &[0.5, 1.5] {
            assert_relative_eq!(th_sum(x), 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn hat_x_roots_match_closed_forms() {
        let (model, payoffs, _, trunc) = fixture();
        // zeta_1 root: ((r - mu_hat) alpha_1 / lambda)^(-1/(1-lambda)) = (0.9)^-2
        let x1 = hat_x(&payoffs, &model, trunc, Player::One).unwrap();
        assert_relative_eq!(x1, 0.9f64.powi(-2), max_relative = 1e-9);
        let x2 = hat_x(&payoffs, &model, trunc, Player::Two).unwrap();
        assert_relative_eq!(x2, 1.8, max_relative = 1e-9);
        // root property
        let z1 = zeta(&payoffs, &model, Player::One);
        assert!(z1(x1).abs() <= 1e-9 * z1(trunc.0).abs().max(1.0));
    }

    #[test]
    fn hat_x_rejects_no_crossing() {
        let (model, _, _, trunc) = fixture();
        // G = constant: zeta = -(r - mu') c, no sign change
        let pay = Payoffs {
            g1: C2Fn::constant(1.0),
            g2: C2Fn::constant(1.0),
            l1: C2Fn::constant(0.0),
            l2: C2Fn::constant(0.0),
        };
        assert!(matches!(
            hat_x(&pay, &model, trunc, Player::One),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn existence_report_passes_on_reference_config() {
        let (model, payoffs, pair, trunc) = fixture();
        let rep = check_existence(&payoffs, &model, &pair, trunc);
        assert!(rep.no_failures(), "unexpected failures: {:?}", rep.items);
        assert_eq!(
            rep.get("case 1: both boundaries natural").unwrap().status,
            CheckStatus::Pass
        );
    }

    #[test]
    fn existence_flags_reversed_hats() {
        let (model, _, pair, trunc) = fixture();
        // swap alpha weights so x_hat_1 > x_hat_2
        let cfg = PollutionConfig {
            alpha1: 0.5,
            alpha2: 0.5,
            beta1: None,
            beta2: None,
            ..PollutionConfig::reference()
        };
        let payoffs = pollution::build_payoffs(&cfg).unwrap();
        let rep = check_existence(&payoffs, &model, &pair, trunc);
        assert_eq!(rep.get("x_hat_1 < x_hat_2").unwrap().status, CheckStatus::Fail);
    }

    #[test]
    fn thresholds_match_frozen_reference_roots() {
        // frozen after independent verification: smooth fit below and the
        // Monte Carlo agreement exercised in the acceptance suite
        let (model, payoffs, pair, trunc) = fixture();
        let eq = solve_thresholds(&payoffs, &model, &pair, trunc, None).unwrap();
        assert_relative_eq!(eq.a_star, 0.773_865_123_874_698, max_relative = 1e-7);
        assert_relative_eq!(eq.b_star, 2.153_687_661_291_652, max_relative = 1e-7);
        assert!(!eq.multiple_roots, "unexpected extra roots: {:?}", eq.other_roots);
        assert!(eq.residuals_scaled[0].abs() <= 1e-9);
        assert!(eq.residuals_scaled[1].abs() <= 1e-9);
        assert!(eq.smooth_fit[0] <= 1e-8 && eq.smooth_fit[1] <= 1e-8);
        // ordering against both zeta roots
        assert!(eq.a_star < 0.9f64.powi(-2) && eq.b_star > 1.8);
    }

    #[test]
    fn threshold_solver_honours_initial_guess() {
        let (model, payoffs, pair, trunc) = fixture();
        let eq = solve_thresholds(&payoffs, &model, &pair, trunc, Some((0.8, 2.1))).unwrap();
        assert_relative_eq!(eq.a_star, 0.773_865_123_874_698, max_relative = 1e-7);
    }

    #[test]
    fn smooth_fit_equals_direct_two_dimensional_solve() {
        // solving the two smooth-fit equations directly reproduces (a*, b*)
        let (model, payoffs, pair, trunc) = fixture();
        let eq = solve_thresholds(&payoffs, &model, &pair, trunc, None).unwrap();
        let f = |v: [f64; 2]| {
            let (a, b) = (v[0], v[1]);
            let (c1, c2) = band_coefficients(&payoffs, &pair, a, b).unwrap();
            [
                c1.0 * pair.psi.deriv(a) + c1.1 * pair.phi.deriv(a) - payoffs.g1.deriv(a),
                c2.0 * pair.psi.deriv(b) + c2.1 * pair.phi.deriv(b) - payoffs.g2.deriv(b),
            ]
        };
        let root = newton2d(&f, [0.9, 2.0], [trunc.0, 1.23, 1.81, trunc.1], 1e-12, 100).unwrap();
        assert_relative_eq!(root.x[0], eq.a_star, max_relative = 1e-7);
        assert_relative_eq!(root.x[1], eq.b_star, max_relative = 1e-7);
    }

    #[test]
    fn symmetric_toy_problem_has_mirrored_thresholds() {
        // Brownian model, payoffs symmetric under x -> -x: b* = -a*
        let model = DiffusionModel::brownian(0.0, 1.0, 0.5).unwrap();
        let k = (2.0f64 * model.r).sqrt(); // psi = e^{kx}, phi = e^{-kx}
        let psi = C2Fn::new(
            Arc::new(move |x: f64| (k * x).exp()),
            Arc::new(move |x: f64| k * (k * x).exp()),
            Arc::new(move |x: f64| k * k * (k * x).exp()),
        )
        .with_antiderivative(Arc::new(move |x: f64| (k * x).exp() / k));
        let phi = C2Fn::new(
            Arc::new(move |x: f64| (-k * x).exp()),
            Arc::new(move |x: f64| -k * (-k * x).exp()),
            Arc::new(move |x: f64| k * k * (-k * x).exp()),
        )
        .with_antiderivative(Arc::new(move |x: f64| -(-k * x).exp() / k));
        let pair = crate::diffusion::fundamental_pair(
            &model,
            crate::diffusion::PairMode::Analytic {
                psi,
                phi,
                scale_density: crate::diffusion::scale_density(&model, 0.0).unwrap(),
            },
            0.0,
        )
        .unwrap();
        // G1(x) = 2 - e^{-qx} (zeta_1 crosses once, positive to the left)
        let q = 0.8;
        let g1 = C2Fn::new(
            Arc::new(move |x: f64| 2.0 - (-q * x).exp()),
            Arc::new(move |x: f64| q * (-q * x).exp()),
            Arc::new(move |x: f64| -q * q * (-q * x).exp()),
        );
        let g2 = C2Fn::new(
            Arc::new(move |x: f64| 2.0 - (q * x).exp()),
            Arc::new(move |x: f64| -q * (q * x).exp()),
            Arc::new(move |x: f64| -q * q * (q * x).exp()),
        );
        let l1 = C2Fn::constant_minus(-1.0, &C2Fn::negate(&g1)); // G1 - 1
        let l2 = C2Fn::constant_minus(-1.0, &C2Fn::negate(&g2));
        let payoffs = Payoffs { g1, g2, l1, l2 };
        let trunc = (-6.0, 6.0);
        let eq = solve_thresholds(&payoffs, &model, &pair, trunc, None).unwrap();
        assert_relative_eq!(eq.b_star, -eq.a_star, max_relative = 1e-7);
        // mirrored orientation: swap players through x -> -x and re-solve
        let refl = |g: &C2Fn| {
            let (f, df, d2f) = (g.f.clone(), g.df.clone(), g.d2f.clone());
            C2Fn::new(
                Arc::new(move |x: f64| f(-x)),
                Arc::new(move |x: f64| -df(-x)),
                Arc::new(move |x: f64| d2f(-x)),
            )
        };
        let mirrored = Payoffs {
            g1: refl(&payoffs.g2),
            g2: refl(&payoffs.g1),
            l1: refl(&payoffs.l2),
            l2: refl(&payoffs.l1),
        };
        let eq2 = solve_thresholds(&mirrored, &model, &pair, trunc, None).unwrap();
        assert_relative_eq!(eq2.a_star, -eq.b_star, max_relative = 1e-7);
        assert_relative_eq!(eq2.b_star, -eq.a_star, max_relative = 1e-7);
    }

    #[test]
    fn rescaling_psi_phi_leaves_equilibrium_invariant() {
        let (model, payoffs, pair, trunc) = fixture();
        let eq = solve_thresholds(&payoffs, &model, &pair, trunc, None).unwrap();
        for &(c_psi, c_phi) in &[(3.7, 0.2), (0.013, 51.0)] {
            let scale = |g: &C2Fn, c: f64| {
                let (f, df, d2f) = (g.f.clone(), g.df.clone(), g.d2f.clone());
                C2Fn::new(
                    Arc::new(move |x| c * f(x)),
                    Arc::new(move |x| c * df(x)),
                    Arc::new(move |x| c * d2f(x)),
                )
            };
            let scaled = FundamentalPair {
                psi: scale(&pair.psi, c_psi),
                phi: scale(&pair.phi, c_phi),
                scale_density: pair.scale_density.clone(),
                wronskian: pair.wronskian * c_psi * c_phi,
                provenance: pair.provenance,
                grid: pair.grid.clone(),
                wronskian_spread: pair.wronskian_spread,
                ode_residual: pair.ode_residual,
            };
            let eq2 = solve_thresholds(&payoffs, &model, &scaled, trunc, None).unwrap();
            assert_relative_eq!(eq2.a_star, eq.a_star, max_relative = 1e-9);
            assert_relative_eq!(eq2.b_star, eq.b_star, max_relative = 1e-9);
            let v = stopping_values(&eq, &payoffs, &pair);
            let v2 = stopping_values(&eq2, &payoffs, &scaled);
            for &x in &[0.9, 1.4, 2.0] {
                assert_relative_eq!(v.v1.eval(x), v2.v1.eval(x), max_relative = 1e-9);
                assert_relative_eq!(v.v2.eval(x), v2.v2.eval(x), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn stopping_values_satisfy_boundary_data_and_ode() {
        let (model, payoffs, pair, trunc) = fixture();
        let eq = solve_thresholds(&payoffs, &model, &pair, trunc, None).unwrap();
        let v = stopping_values(&eq, &payoffs, &pair);
        assert_relative_eq!(v.v1.eval(eq.a_star), payoffs.g1.eval(eq.a_star), max_relative = 1e-10);
        assert_relative_eq!(v.v1.band_eval(eq.b_star), payoffs.l1.eval(eq.b_star), max_relative = 1e-10);
        // band ODE residual is zero by construction
        for &x in &linspace(eq.a_star + 1e-3, eq.b_star - 1e-3, 41) {
            let s = (model.sigma)(x);
            let r = 0.5 * s * s * v.v1.band_second(x) + model.stopping_drift(x) * v.v1.band_deriv(x)
                - model.kill_rate(x) * v.v1.band_eval(x);
            assert!(r.abs() <= 1e-10 * v.v1.band_eval(x).abs().max(1.0));
        }
    }

    #[test]
    fn variational_report_passes_on_reference_config() {
        let (model, payoffs, pair, trunc) = fixture();
        let eq = solve_thresholds(&payoffs, &model, &pair, trunc, None).unwrap();
        let v = stopping_values(&eq, &payoffs, &pair);
        let grid = linspace(trunc.0, trunc.1, 2000);
        let rep = verify_variational(&v, &payoffs, &model, &grid);
        assert!(rep.all_pass(), "violations: {:?}", rep.items);
    }

    #[test]
    fn variational_report_catches_perturbed_thresholds() {
        let (model, payoffs, pair, trunc) = fixture();
        let mut eq = solve_thresholds(&payoffs, &model, &pair, trunc, None).unwrap();
        eq.a_star += 0.05;
        let (c1, c2) = band_coefficients(&payoffs, &pair, eq.a_star, eq.b_star).unwrap();
        eq.v1_coeffs = c1;
        eq.v2_coeffs = c2;
        let v = stopping_values(&eq, &payoffs, &pair);
        let grid = linspace(trunc.0, trunc.1, 2000);
        let rep = verify_variational(&v, &payoffs, &model, &grid);
        assert!(!rep.all_pass(), "corrupted equilibrium must fail verification");
    }

    #[test]
    fn degenerate_starts_stop_immediately() {
        let (model, payoffs, _, _) = fixture();
        let cfg = StoppingMcConfig { n_paths: 8, dt: 1e-3, t_max: 10.0, seed: 9, bridge: true };
        let res = stopping_payoff_mc(&model, &payoffs, (0.8, 2.1), 0.5, &cfg).unwrap();
        assert_relative_eq!(res.j1, payoffs.g1.eval(0.5), epsilon = 1e-14);
        assert_relative_eq!(res.j2, payoffs.l2.eval(0.5), epsilon = 1e-14);
        assert_eq!(res.stderr1, 0.0);
        let res = stopping_payoff_mc(&model, &payoffs, (0.8, 2.1), 2.5, &cfg).unwrap();
        assert_relative_eq!(res.j2, payoffs.g2.eval(2.5), epsilon = 1e-14);
        assert_relative_eq!(res.j1, payoffs.l1.eval(2.5), epsilon = 1e-14);
    }

    #[test]
    fn stopping_mc_is_reproducible() {
        let (model, payoffs, _, _) = fixture();
        let cfg = StoppingMcConfig { n_paths: 500, dt: 2e-3, t_max: 40.0, seed: 123, bridge: true };
        let r1 = stopping_payoff_mc(&model, &payoffs, (0.77, 2.15), 1.3, &cfg).unwrap();
        let r2 = stopping_payoff_mc(&model, &payoffs, (0.77, 2.15), 1.3, &cfg).unwrap();
        assert_eq!(r1.j1.to_bits(), r2.j1.to_bits());
        assert_eq!(r1.j2.to_bits(), r2.j2.to_bits());
    }

    #[test]
    fn stopping_mc_matches_analytic_value_at_midpoint() {
        let (model, payoffs, pair, trunc) = fixture();
        let eq = solve_thresholds(&payoffs, &model, &pair, trunc, None).unwrap();
        let v = stopping_values(&eq, &payoffs, &pair);
        let x0 = 0.5 * (eq.a_star + eq.b_star);
        let cfg = StoppingMcConfig { n_paths: 4000, dt: 1e-3, t_max: 60.0, seed: 7, bridge: true };
        let res = stopping_payoff_mc(&model, &payoffs, (eq.a_star, eq.b_star), x0, &cfg).unwrap();
        assert!(res.reliable);
        let budget1 = 3.0 * res.stderr1 + 0.005 * v.v1.eval(x0).abs();
        let budget2 = 3.0 * res.stderr2 + 0.005 * v.v2.eval(x0).abs();
        assert!(
            (res.j1 - v.v1.eval(x0)).abs() <= budget1,
            "J1 {} vs v1 {} (budget {budget1})",
            res.j1,
            v.v1.eval(x0)
        );
        assert!(
            (res.j2 - v.v2.eval(x0)).abs() <= budget2,
            "J2 {} vs v2 {} (budget {budget2})",
            res.j2,
            v.v2.eval(x0)
        );
    }
}
