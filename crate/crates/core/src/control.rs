//! The singular-control game's value functions, built from the stopping
//! game's through the integral link
//!
//!   V_1(x) = kappa_1 + int_{a*}^x v_1,   V_2(x) = kappa_2 + int_x^{b*} v_2,
//!
//! and the grid verification of the coupled variational systems they satisfy.

use crate::diffusion::DiffusionModel;
use crate::error::Result;
use crate::func::ScalarFn;
use crate::report::{CheckItem, CheckReport, CheckStatus};
use crate::stopping::{Payoffs, Region, StoppingValues, ThresholdEquilibrium};

/// Which reward functionals the constants belong to.
#[derive(Clone)]
pub enum KappaVariant {
    /// State-dependent marginal costs: kappa_i from the generator applied to
    /// G_i at the respective barrier.
    Plain,
    /// Running profit pi/u with constant own-control costs alpha_i.
    RunningProfit { pi: ScalarFn, u: ScalarFn, alpha1: f64, alpha2: f64 },
}

/// The integration constants of the value link. In the running-profit case
/// the barrier identity 1/2 sigma^2 V'' + mu V' - r V + f = 0 pins them,
/// with V''(barrier) = 0 by smooth fit and V'(barrier) equal to the constant
/// marginal cost.
pub fn kappas(
    eq: &ThresholdEquilibrium,
    payoffs: &Payoffs,
    model: &DiffusionModel,
    variant: &KappaVariant,
) -> (f64, f64) {
    let (a, b) = (eq.a_star, eq.b_star);
    match variant {
        KappaVariant::Plain => {
            let k1 = (0.5 * (model.sigma)(a).powi(2) * payoffs.g1.deriv(a)
                + (model.mu)(a) * payoffs.g1.eval(a))
                / model.r;
            let k2 = -(0.5 * (model.sigma)(b).powi(2) * payoffs.g2.deriv(b)
                + (model.mu)(b) * payoffs.g2.eval(b))
                / model.r;
            (k1, k2)
        }
        KappaVariant::RunningProfit { pi, u, alpha1, alpha2 } => {
            let k1 = ((model.mu)(a) * alpha1 + pi(a)) / model.r;
            let k2 = -((model.mu)(b) * alpha2 - u(b)) / model.r;
            (k1, k2)
        }
    }
}

/// Both control-game value functions. `values` must be the stopping solution
/// matching the variant the kappas were computed for (the shifted one in the
/// running-profit case).
#[derive(Clone)]
pub struct ControlValues {
    pub kappa1: f64,
    pub kappa2: f64,
    pub values: StoppingValues,
}

/// Assemble V_1, V_2 from the stopping values and the constants.
pub fn control_values(values: &StoppingValues, kappa: (f64, f64)) -> ControlValues {
    ControlValues { kappa1: kappa.0, kappa2: kappa.1, values: values.clone() }
}

impl ControlValues {
    pub fn a_star(&self) -> f64 {
        self.values.a_star
    }

    pub fn b_star(&self) -> f64 {
        self.values.b_star
    }

    pub fn value1(&self, x: f64) -> Result<f64> {
        Ok(self.kappa1 + self.values.v1.integrate(self.values.a_star, x)?)
    }

    pub fn value2(&self, x: f64) -> Result<f64> {
        Ok(self.kappa2 + self.values.v2.integrate(x, self.values.b_star)?)
    }

    /// V_1' = v_1.
    pub fn deriv1(&self, x: f64) -> f64 {
        self.values.v1.eval(x)
    }

    /// V_2' = -v_2.
    pub fn deriv2(&self, x: f64) -> f64 {
        -self.values.v2.eval(x)
    }

    /// V_1'' = v_1' (analytic; never a double difference).
    pub fn second1(&self, x: f64) -> f64 {
        self.values.v1.deriv(x)
    }

    pub fn second2(&self, x: f64) -> f64 {
        -self.values.v2.deriv(x)
    }
}

/// Grid verification of the coupled variational systems. `forcing`, when
/// present, carries the running terms (pi, u) added to the two equations;
/// the gradient-constraint functions are read off the stopping solution's
/// own region functions, which is where both variants keep them.
pub fn verify_hjb(
    v: &ControlValues,
    model: &DiffusionModel,
    grid: &[f64],
    forcing: Option<(&ScalarFn, &ScalarFn)>,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("control-game variational checks");
    let (a, b) = (v.a_star(), v.b_star());
    let eps = 1e-7 * (b - a);
    let r = model.r;

    let pde1 = |x: f64| -> Result<f64> {
        let s = (model.sigma)(x);
        let f = forcing.map_or(0.0, |(pi, _)| pi(x));
        Ok(0.5 * s * s * v.second1(x) + (model.mu)(x) * v.deriv1(x) - r * v.value1(x)? + f)
    };
    let pde2 = |x: f64| -> Result<f64> {
        let s = (model.sigma)(x);
        let f = forcing.map_or(0.0, |(_, u)| u(x));
        Ok(0.5 * s * s * v.second2(x) + (model.mu)(x) * v.deriv2(x) - r * v.value2(x)? + f)
    };

    // scale for the residuals
    let vscale = |x: f64| -> Result<f64> { Ok(v.value1(x)?.abs().max(v.value2(x)?.abs()).max(1.0)) };

    // equality on the band
    let mut worst = 0.0f64;
    let mut worst_at = a;
    for &x in grid.iter().filter(|&&x| x > a + eps && x < b - eps) {
        let sc = vscale(x)?;
        for res in [pde1(x)?, pde2(x)?] {
            let q = res.abs() / sc;
            if q > worst {
                worst = q;
                worst_at = x;
            }
        }
    }
    rep.push(
        CheckItem::new("band PDE equality", status(worst, 1e-7), worst)
            .with_threshold(1e-7)
            .with_location(worst_at),
    );

    // one-sided inequalities: player 1 on (lo, b), player 2 on (a, hi)
    let mut w1 = 0.0f64;
    let mut w1_at = a;
    for &x in grid.iter().filter(|&&x| x < b - eps && (x - a).abs() > eps) {
        let q = pde1(x)? / vscale(x)?;
        if q > w1 {
            w1 = q;
            w1_at = x;
        }
    }
    rep.push(
        CheckItem::new("player-1 PDE inequality below b*", status(w1, 1e-7), w1)
            .with_threshold(1e-7)
            .with_location(w1_at),
    );
    let mut w2 = 0.0f64;
    let mut w2_at = b;
    for &x in grid.iter().filter(|&&x| x > a + eps && (x - b).abs() > eps) {
        let q = pde2(x)? / vscale(x)?;
        if q > w2 {
            w2 = q;
            w2_at = x;
        }
    }
    rep.push(
        CheckItem::new("player-2 PDE inequality above a*", status(w2, 1e-7), w2)
            .with_threshold(1e-7)
            .with_location(w2_at),
    );

    // gradient constraints; the constraint functions are the stopping
    // solution's own stop-region payoffs
    let g1c = &v.values.v1.lower;
    let l1c = &v.values.v1.upper;
    let g2c = &v.values.v2.upper;
    let l2c = &v.values.v2.lower;
    let mut slack_viol = 0.0f64;
    let mut eq_lo = 0.0f64;
    let mut eq_hi = 0.0f64;
    let mut slack2_viol = 0.0f64;
    let mut eq2_lo = 0.0f64;
    let mut eq2_hi = 0.0f64;
    for &x in grid {
        let reg = Region::of(x, a, b);
        let sc1 = g1c.eval(x).abs().max(1.0);
        match reg {
            Region::Lower => {
                eq_lo = eq_lo.max((v.deriv1(x) - g1c.eval(x)).abs() / sc1);
                eq2_lo = eq2_lo.max((v.deriv2(x) + l2c.eval(x)).abs() / l2c.eval(x).abs().max(1.0));
            }
            Region::Band => {
                slack_viol = slack_viol.max((v.deriv1(x) - g1c.eval(x)) / sc1);
                slack2_viol =
                    slack2_viol.max((-g2c.eval(x) - v.deriv2(x)) / g2c.eval(x).abs().max(1.0));
            }
            Region::Upper => {
                eq_hi = eq_hi.max((v.deriv1(x) - l1c.eval(x)).abs() / l1c.eval(x).abs().max(1.0));
                eq2_hi = eq2_hi.max((v.deriv2(x) + g2c.eval(x)).abs() / g2c.eval(x).abs().max(1.0));
            }
        }
    }
    rep.push(CheckItem::new("V1' <= own marginal cost on the band", status(slack_viol, 1e-9), slack_viol).with_threshold(1e-9));
    rep.push(CheckItem::new("V1' equals own marginal cost below a*", status(eq_lo, 1e-9), eq_lo).with_threshold(1e-9));
    rep.push(CheckItem::new("V1' equals opponent term above b*", status(eq_hi, 1e-9), eq_hi).with_threshold(1e-9));
    rep.push(CheckItem::new("V2' >= -(own marginal cost) on the band", status(slack2_viol, 1e-9), slack2_viol).with_threshold(1e-9));
    rep.push(CheckItem::new("V2' equals -(own marginal cost) above b*", status(eq2_hi, 1e-9), eq2_hi).with_threshold(1e-9));
    rep.push(CheckItem::new("V2' equals -(opponent term) below a*", status(eq2_lo, 1e-9), eq2_lo).with_threshold(1e-9));

    // C^1 pasting of V_i across both thresholds: V' = +/- v, so the exact
    // one-sided limits must match where the band meets the outer regions
    let mut paste = 0.0f64;
    let w1 = &v.values.v1;
    let w2 = &v.values.v2;
    paste = paste.max((w1.lower.eval(a) - w1.band_eval(a)).abs() / w1.band_eval(a).abs().max(1.0));
    paste = paste.max((w1.upper.eval(b) - w1.band_eval(b)).abs() / w1.band_eval(b).abs().max(1.0));
    paste = paste.max((w2.lower.eval(a) - w2.band_eval(a)).abs() / w2.band_eval(a).abs().max(1.0));
    paste = paste.max((w2.upper.eval(b) - w2.band_eval(b)).abs() / w2.band_eval(b).abs().max(1.0));
    rep.push(CheckItem::new("C1 pasting of V_i at a*, b*", status(paste, 1e-8), paste).with_threshold(1e-8));

    Ok(rep)
}

fn status(value: f64, tol: f64) -> CheckStatus {
    if value <= tol {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Long-format value table: x, V1, V2, V1', V2', region.
pub fn control_table(v: &ControlValues, grid: &[f64]) -> Result<String> {
    let mut out = String::from("x,V1,V2,V1_prime,V2_prime,region\n");
    for &x in grid {
        out.push_str(&format!(
            "{x},{},{},{},{},{}\n",
            v.value1(x)?,
            v.value2(x)?,
            v.deriv1(x),
            v.deriv2(x),
            Region::of(x, v.a_star(), v.b_star()).as_str()
        ));
    }
    Ok(out)
}
