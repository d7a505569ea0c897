//! The pollution-control game: a social planner caps the production capacity
//! a representative firm keeps expanding. Geometric dynamics, power profit
//! pi(x) = x^lambda and utility u(x) = -x^delta, constant marginal control
//! costs. Everything reduces to closed forms that feed the generic pipeline.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{control_values, kappas, verify_hjb, ControlValues, KappaVariant};
use crate::diffusion::{fundamental_pair, DiffusionModel, FundamentalPair, PairMode};
use crate::error::{Error, Result};
use crate::func::{power, C2Fn, ScalarFn};
use crate::num::grid::{geomspace, linspace};
use crate::report::{CheckItem, CheckReport, CheckStatus};
use crate::sim::mc::{control_payoff_mc, PayoffVariant};
use crate::sim::nash::{verify_nash, NashReport};
use crate::sim::{SimConfig, Strategy};
use crate::stopping::{
    check_existence, solve_thresholds, stopping_payoff_mc, stopping_values, verify_variational,
    Payoffs, PiecewiseValue, StoppingMcConfig, StoppingValues, ThresholdEquilibrium,
};

/// Model and preference parameters of the game.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PollutionConfig {
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub r: f64,
    /// Profit exponent, in (0, 1).
    pub lambda: f64,
    /// Utility exponent, above 1.
    pub delta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Constant cost pair for the pathwise-dominance scenario (alpha_i < beta_i).
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub beta2: Option<f64>,
}

impl PollutionConfig {
    /// Reference parameter set used throughout the tests: every standing
    /// inequality holds with a comfortable margin.
    pub fn reference() -> Self {
        Self {
            mu_hat: 0.05,
            sigma_hat: 0.25,
            r: 0.5,
            lambda: 0.5,
            delta: 2.0,
            alpha1: 1.0,
            alpha2: 8.0,
            beta1: Some(2.0),
            beta2: Some(16.0),
        }
    }

    pub fn model(&self) -> Result<DiffusionModel> {
        DiffusionModel::gbm(self.mu_hat, self.sigma_hat, self.r)
    }

    /// Admissibility gate: discount dominance, the exponent window tied to
    /// the characteristic roots, and the ordering of the action triggers.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_hat > 0.0) {
            return Err(Error::Config(format!("sigma_hat must be positive, got {}", self.sigma_hat)));
        }
        if !(self.r > self.mu_hat) {
            return Err(Error::Config(format!(
                "need r > mu_hat, got r = {}, mu_hat = {}",
                self.r, self.mu_hat
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        if !(self.delta > 1.0) {
            return Err(Error::Config(format!("delta must exceed 1, got {}", self.delta)));
        }
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return Err(Error::Config("alpha_1 and alpha_2 must be positive".into()));
        }
        let (g1, g2) = gamma_roots(self);
        if !(self.lambda > g2 + 1.0) {
            return Err(Error::Config(format!(
                "growth window violated: need lambda > gamma_2 + 1 = {}",
                g2 + 1.0
            )));
        }
        if !(self.delta < 1.0 + g1) {
            return Err(Error::Config(format!(
                "growth window violated: need delta < 1 + gamma_1 = {}",
                1.0 + g1
            )));
        }
        for (name, e) in [("lambda", self.lambda - 1.0), ("delta", self.delta - 1.0)] {
            if char_poly(self, e).abs() < 1e-12 {
                return Err(Error::Config(format!(
                    "resonant exponent: {name} - 1 hits a characteristic root"
                )));
            }
        }
        let (x1, x2) = hat_x_zeta(self);
        if !(x1 < x2) {
            return Err(Error::Assumption(format!(
                "x_hat_1 = {x1} must lie below x_hat_2 = {x2}; adjust alpha_1 or alpha_2"
            )));
        }
        if let (Some(b1), Some(b2)) = (self.beta1, self.beta2) {
            if !(self.alpha1 < b1 && self.alpha2 < b2) {
                return Err(Error::Config("need alpha_i < beta_i for the dominance scenario".into()));
            }
        }
        Ok(())
    }
}

/// Characteristic polynomial of the power ansatz:
/// Q(g) = 1/2 sigma^2 g (g - 1) + (mu + sigma^2) g - (r - mu).
pub fn char_poly(cfg: &PollutionConfig, g: f64) -> f64 {
    0.5 * cfg.sigma_hat.powi(2) * g * (g - 1.0) + (cfg.mu_hat + cfg.sigma_hat.powi(2)) * g
        - (cfg.r - cfg.mu_hat)
}

/// The positive and negative roots of the characteristic polynomial.
pub fn gamma_roots(cfg: &PollutionConfig) -> (f64, f64) {
    let a = 0.5 * cfg.sigma_hat.powi(2);
    let b = cfg.mu_hat + cfg.sigma_hat.powi(2) - a;
    let c = -(cfg.r - cfg.mu_hat);
    let disc = (b * b - 4.0 * a * c).sqrt();
    ((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a))
}

/// Coefficients of the particular power solutions: Pi'(x) = c_pi x^(lambda-1)
/// and U'(x) = c_u x^(delta-1).
pub fn particular_coefficients(cfg: &PollutionConfig) -> (f64, f64) {
    let c_pi = -cfg.lambda / char_poly(cfg, cfg.lambda - 1.0);
    let c_u = -cfg.delta / char_poly(cfg, cfg.delta - 1.0);
    (c_pi, c_u)
}

/// The marginal-value functions Pi', U' as power functions.
pub fn particular_solutions(cfg: &PollutionConfig) -> (C2Fn, C2Fn) {
    let (c_pi, c_u) = particular_coefficients(cfg);
    (power(c_pi, cfg.lambda - 1.0), power(c_u, cfg.delta - 1.0))
}

/// Stop/continue payoffs of the reduced stopping game:
/// G1 = alpha1 - Pi', L1 = -Pi', G2 = alpha2 - U', L2 = -U'.
pub fn build_payoffs(cfg: &PollutionConfig) -> Result<Payoffs> {
    for (name, e) in [("lambda", cfg.lambda - 1.0), ("delta", cfg.delta - 1.0)] {
        if char_poly(cfg, e).abs() < 1e-12 {
            return Err(Error::Config(format!(
                "resonant exponent: {name} - 1 hits a characteristic root of the power ansatz"
            )));
        }
    }
    let (pi_p, u_p) = particular_solutions(cfg);
    Ok(Payoffs {
        g1: C2Fn::constant_minus(cfg.alpha1, &pi_p),
        l1: C2Fn::negate(&pi_p),
        g2: C2Fn::constant_minus(cfg.alpha2, &u_p),
        l2: C2Fn::negate(&u_p),
    })
}

/// Closed-form fundamental pair of the geometric model: psi = x^gamma_1,
/// phi = x^gamma_2, scale density x^(gamma_1 + gamma_2 - 1), anchored at 1.
pub fn analytic_pair(cfg: &PollutionConfig) -> Result<FundamentalPair> {
    let model = cfg.model()?;
    let (g1, g2) = gamma_roots(cfg);
    let p = g1 + g2 - 1.0;
    fundamental_pair(
        &model,
        PairMode::Analytic {
            psi: power(1.0, g1),
            phi: power(1.0, g2),
            scale_density: Arc::new(move |x: f64| x.powf(p)),
        },
        1.0,
    )
}

/// The action triggers from the displayed closed forms, which carry the raw
/// discount rate r.
pub fn hat_x_closed_form(cfg: &PollutionConfig) -> (f64, f64) {
    (
        (cfg.r * cfg.alpha1 / cfg.lambda).powf(-1.0 / (1.0 - cfg.lambda)),
        (cfg.r * cfg.alpha2 / cfg.delta).powf(1.0 / (cfg.delta - 1.0)),
    )
}

/// The action triggers as roots of zeta_i, which carry the killed rate
/// r - mu_hat; these are what the pipeline uses. The two versions coincide
/// exactly when mu_hat = 0.
pub fn hat_x_zeta(cfg: &PollutionConfig) -> (f64, f64) {
    let rho = cfg.r - cfg.mu_hat;
    (
        (rho * cfg.alpha1 / cfg.lambda).powf(-1.0 / (1.0 - cfg.lambda)),
        (rho * cfg.alpha2 / cfg.delta).powf(1.0 / (cfg.delta - 1.0)),
    )
}

/// Running profit and utility closures.
pub fn running_terms(cfg: &PollutionConfig) -> (ScalarFn, ScalarFn) {
    let l = cfg.lambda;
    let d = cfg.delta;
    (Arc::new(move |x: f64| x.powf(l)), Arc::new(move |x: f64| -(x.powf(d))))
}

/// Reward-functional variant for the Monte Carlo estimators.
pub fn running_profit_variant(cfg: &PollutionConfig) -> PayoffVariant {
    let (pi, u) = running_terms(cfg);
    PayoffVariant::RunningProfit { pi, u, alpha1: cfg.alpha1, alpha2: cfg.alpha2 }
}

/// Constant variant for the kappa formulas.
pub fn kappa_variant(cfg: &PollutionConfig) -> KappaVariant {
    let (pi, u) = running_terms(cfg);
    KappaVariant::RunningProfit { pi, u, alpha1: cfg.alpha1, alpha2: cfg.alpha2 }
}

/// Stopping values of the running-term boundary value problem: on the band
/// v_i is the generic fundamental combination plus the particular solution;
/// outside it pastes to the constants alpha_i (own stop) and 0 (opponent
/// stop). The band coefficients coincide with the generic ones.
pub fn running_values(
    eq: &ThresholdEquilibrium,
    cfg: &PollutionConfig,
    pair: &FundamentalPair,
) -> Result<StoppingValues> {
    let (pi_p, u_p) = particular_solutions(cfg);
    let v1 = PiecewiseValue {
        a: eq.a_star,
        b: eq.b_star,
        coeff_psi: eq.v1_coeffs.0,
        coeff_phi: eq.v1_coeffs.1,
        particular: Some(pi_p),
        lower: C2Fn::constant(cfg.alpha1),
        upper: C2Fn::constant(0.0),
        psi: pair.psi.clone(),
        phi: pair.phi.clone(),
    };
    let v2 = PiecewiseValue {
        a: eq.a_star,
        b: eq.b_star,
        coeff_psi: eq.v2_coeffs.0,
        coeff_phi: eq.v2_coeffs.1,
        particular: Some(u_p),
        lower: C2Fn::constant(0.0),
        upper: C2Fn::constant(cfg.alpha2),
        psi: pair.psi.clone(),
        phi: pair.phi.clone(),
    };
    Ok(StoppingValues { a_star: eq.a_star, b_star: eq.b_star, v1, v2 })
}

/// Checks specific to the running-term boundary value problem: band ODE with
/// forcing, value matching to the constants, smooth fit, and the obstacle
/// v_i <= alpha_i.
pub fn verify_running_variational(
    v: &StoppingValues,
    cfg: &PollutionConfig,
    model: &DiffusionModel,
    grid: &[f64],
) -> CheckReport {
    let mut rep = CheckReport::new("running-variant variational checks");
    let (a, b) = (v.a_star, v.b_star);
    let eps = 1e-7 * (b - a);
    let rho = cfg.r - cfg.mu_hat;
    let l = cfg.lambda;
    let d = cfg.delta;
    let pi_prime = move |x: f64| l * x.powf(l - 1.0);
    let u_prime = move |x: f64| -d * x.powf(d - 1.0);

    let mut worst = 0.0f64;
    for &x in grid.iter().filter(|&&x| x > a + eps && x < b - eps) {
        let s = (model.sigma)(x);
        let r1 = 0.5 * s * s * v.v1.band_second(x) + model.stopping_drift(x) * v.v1.band_deriv(x)
            - rho * v.v1.band_eval(x)
            + pi_prime(x);
        let r2 = 0.5 * s * s * v.v2.band_second(x) + model.stopping_drift(x) * v.v2.band_deriv(x)
            - rho * v.v2.band_eval(x)
            - u_prime(x);
        worst = worst.max(r1.abs() / v.v1.band_eval(x).abs().max(1.0));
        worst = worst.max(r2.abs() / v.v2.band_eval(x).abs().max(1.0));
    }
    rep.push(
        CheckItem::new("band ODE with running forcing", bool_status(worst <= 1e-8), worst).with_threshold(1e-8),
    );

    let vm = (v.v1.band_eval(a) - cfg.alpha1)
        .abs()
        .max(v.v1.band_eval(b).abs())
        .max((v.v2.band_eval(b) - cfg.alpha2).abs())
        .max(v.v2.band_eval(a).abs());
    rep.push(CheckItem::new("value matching to alpha_i and 0", bool_status(vm <= 1e-9), vm).with_threshold(1e-9));

    let sf = v.v1.band_deriv(a).abs().max(v.v2.band_deriv(b).abs());
    rep.push(CheckItem::new("smooth fit: flat derivative at own barrier", bool_status(sf <= 1e-8), sf).with_threshold(1e-8));

    let mut ob = 0.0f64;
    for &x in grid {
        ob = ob.max((v.v1.eval(x) - cfg.alpha1) / cfg.alpha1.max(1.0));
        ob = ob.max((v.v2.eval(x) - cfg.alpha2) / cfg.alpha2.max(1.0));
    }
    rep.push(CheckItem::new("obstacle v_i <= alpha_i", bool_status(ob <= 1e-9), ob).with_threshold(1e-9));

    // growth-condition trend diagnostics of the particular solutions
    let (g1r, g2r) = gamma_roots(cfg);
    let (c_pi, _) = particular_coefficients(cfg);
    let big = geomspace(b, b * 64.0, 12);
    let up_trend: Vec<f64> = big.iter().map(|&x| x.powf(g2r) * c_pi * x.powf(cfg.lambda - 1.0)).collect();
    let decaying_up = up_trend.windows(2).all(|w| w[1].abs() <= w[0].abs());
    rep.push(CheckItem::new(
        "growth trend of Pi' against phi at infinity",
        if decaying_up { CheckStatus::Pass } else { CheckStatus::Warn },
        *up_trend.last().unwrap(),
    ));
    let small = geomspace(a / 64.0, a, 12);
    let dn_trend: Vec<f64> = small.iter().map(|&x| x.powf(-g1r) * c_pi * x.powf(cfg.lambda - 1.0)).collect();
    let decaying_dn = dn_trend.windows(2).rev().all(|w| w[0].abs() >= w[1].abs() || w[0].abs() <= 1e-300);
    rep.push(CheckItem::new(
        "growth trend of Pi' against psi at zero",
        if decaying_dn { CheckStatus::Pass } else { CheckStatus::Warn },
        dn_trend[0],
    ));

    rep
}

fn bool_status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Pipeline knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub grid_n: usize,
    pub mc_paths: usize,
    pub mc_dt: f64,
    pub mc_t_max: f64,
    pub seed: u64,
    pub bridge: bool,
    /// Run the (expensive) deviation suite.
    pub with_nash: bool,
    pub nash_paths: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            x_lo: 0.05,
            x_hi: 8.0,
            grid_n: 2000,
            mc_paths: 4000,
            mc_dt: 1e-3,
            mc_t_max: 25.0,
            seed: 20240801,
            bridge: true,
            with_nash: false,
            nash_paths: 4000,
        }
    }
}

/// Monte Carlo / analytic agreement entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueAgreementRow {
    pub x0: f64,
    pub psi1: f64,
    pub stderr1: f64,
    pub v1: f64,
    pub pass1: bool,
    pub psi2: f64,
    pub stderr2: f64,
    pub v2: f64,
    pub pass2: bool,
}

/// Consolidated result of the end-to-end run.
#[derive(Clone, Serialize)]
pub struct PollutionReport {
    pub config: PollutionConfig,
    pub gamma1: f64,
    pub gamma2: f64,
    pub c_pi: f64,
    pub c_u: f64,
    pub hat_x_paper: (f64, f64),
    pub hat_x_zeta: (f64, f64),
    pub existence: CheckReport,
    pub equilibrium: ThresholdEquilibrium,
    pub kappa1: f64,
    pub kappa2: f64,
    pub variational: CheckReport,
    pub variational_running: CheckReport,
    pub hjb: CheckReport,
    pub stopping_mc: Vec<ValueAgreementRow>,
    pub control_mc: Vec<ValueAgreementRow>,
    pub nash: Option<NashReport>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub control: Option<ControlValues>,
    #[serde(skip)]
    pub running: Option<StoppingValues>,
    #[serde(skip)]
    pub generic: Option<StoppingValues>,
}

impl PollutionReport {
    pub fn all_checks_pass(&self) -> bool {
        self.existence.no_failures()
            && self.variational.all_pass()
            && self.variational_running.all_pass()
            && self.hjb.all_pass()
            && self.stopping_mc.iter().all(|r| r.pass1 && r.pass2)
            && self.control_mc.iter().all(|r| r.pass1 && r.pass2)
            && self.nash.as_ref().map_or(true, |n| n.all_pass)
    }
}

/// Execute the full chain: roots, payoffs, existence, thresholds, values
/// (running variant), adjusted constants, both verification passes, and the
/// Monte Carlo cross-checks.
pub fn run_pipeline(cfg: &PollutionConfig, pipe: &PipelineConfig) -> Result<PollutionReport> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let model = cfg.model().map_err(|e| e.at_stage("model"))?;
    let trunc = (pipe.x_lo, pipe.x_hi);
    let grid = linspace(pipe.x_lo, pipe.x_hi, pipe.grid_n);
    model.validate_on_grid(&grid).map_err(|e| e.at_stage("model"))?;

    let (g1, g2) = gamma_roots(cfg);
    let (c_pi, c_u) = particular_coefficients(cfg);
    let pair = analytic_pair(cfg).map_err(|e| e.at_stage("fundamental_pair"))?;
    let payoffs = build_payoffs(cfg).map_err(|e| e.at_stage("build_payoffs"))?;
    payoffs.validate_order(&grid).map_err(|e| e.at_stage("build_payoffs"))?;

    let existence = check_existence(&payoffs, &model, &pair, trunc);
    let eq = solve_thresholds(&payoffs, &model, &pair, trunc, None)
        .map_err(|e| e.at_stage("solve_thresholds"))?;

    let generic = stopping_values(&eq, &payoffs, &pair);
    let variational = verify_variational(&generic, &payoffs, &model, &grid);

    let running = running_values(&eq, cfg, &pair).map_err(|e| e.at_stage("stopping_values"))?;
    let variational_running = verify_running_variational(&running, cfg, &model, &grid);

    let k = kappas(&eq, &payoffs, &model, &kappa_variant(cfg));
    let cv = control_values(&running, k);
    let (pi, u) = running_terms(cfg);
    let hjb = verify_hjb(&cv, &model, &grid, Some((&pi, &u))).map_err(|e| e.at_stage("verify_hjb"))?;

    // hitting-time Monte Carlo against the generic stopping values
    let mut stopping_mc = Vec::new();
    let mc_stop = StoppingMcConfig {
        n_paths: pipe.mc_paths,
        dt: pipe.mc_dt,
        t_max: pipe.mc_t_max.max(60.0),
        seed: pipe.seed,
        bridge: pipe.bridge,
    };
    for frac in [0.25, 0.5, 0.75] {
        let x0 = eq.a_star + frac * (eq.b_star - eq.a_star);
        let res = stopping_payoff_mc(&model, &payoffs, (eq.a_star, eq.b_star), x0, &mc_stop)
            .map_err(|e| e.at_stage("stopping_payoff_mc"))?;
        let (w1, w2) = (generic.v1.eval(x0), generic.v2.eval(x0));
        stopping_mc.push(ValueAgreementRow {
            x0,
            psi1: res.j1,
            stderr1: res.stderr1,
            v1: w1,
            pass1: (res.j1 - w1).abs() <= 3.0 * res.stderr1 + 0.005 * w1.abs(),
            psi2: res.j2,
            stderr2: res.stderr2,
            v2: w2,
            pass2: (res.j2 - w2).abs() <= 3.0 * res.stderr2 + 0.005 * w2.abs(),
        });
    }

    // reflected-path Monte Carlo against the control values
    let sim_cfg = SimConfig {
        dt: pipe.mc_dt,
        t_max: pipe.mc_t_max,
        seed: pipe.seed.wrapping_add(1),
        bridge: pipe.bridge,
        trunc,
    };
    let variant = running_profit_variant(cfg);
    let nu_star = Strategy::ReflectAt { level: eq.a_star };
    let xi_star = Strategy::ReflectAt { level: eq.b_star };
    let mut control_mc = Vec::new();
    for x0 in [0.5 * eq.a_star, 0.5 * (eq.a_star + eq.b_star), (2.0 * eq.b_star).min(0.9 * pipe.x_hi)] {
        let res = control_payoff_mc(&model, &variant, &nu_star, &xi_star, x0, pipe.mc_paths, &sim_cfg)
            .map_err(|e| e.at_stage("control_payoff_mc"))?;
        let w1 = cv.value1(x0).map_err(|e| e.at_stage("control_values"))?;
        let w2 = cv.value2(x0).map_err(|e| e.at_stage("control_values"))?;
        control_mc.push(ValueAgreementRow {
            x0,
            psi1: res.psi1,
            stderr1: res.stderr1,
            v1: w1,
            pass1: (res.psi1 - w1).abs() <= 3.0 * res.stderr1 + 0.005 * w1.abs(),
            psi2: res.psi2,
            stderr2: res.stderr2,
            v2: w2,
            pass2: (res.psi2 - w2).abs() <= 3.0 * res.stderr2 + 0.005 * w2.abs(),
        });
    }

    let nash = if pipe.with_nash {
        let x0 = 0.5 * (eq.a_star + eq.b_star);
        Some(
            verify_nash(&model, &variant, &eq, x0, None, pipe.nash_paths, &sim_cfg)
                .map_err(|e| e.at_stage("verify_nash"))?,
        )
    } else {
        None
    };

    let mut warnings: Vec<String> = existence
        .items
        .iter()
        .filter(|i| i.status == CheckStatus::Warn)
        .map(|i| format!("{}: {}", i.name, i.note))
        .collect();
    if eq.multiple_roots {
        warnings.push(format!(
            "threshold system has multiple roots {:?}; proceeding with the minimal smooth-fit residual",
            eq.other_roots
        ));
    }

    Ok(PollutionReport {
        config: cfg.clone(),
        gamma1: g1,
        gamma2: g2,
        c_pi,
        c_u,
        hat_x_paper: hat_x_closed_form(cfg),
        hat_x_zeta: hat_x_zeta(cfg),
        existence,
        equilibrium: eq,
        kappa1: k.0,
        kappa2: k.1,
        variational,
        variational_running,
        hjb,
        stopping_mc,
        control_mc,
        nash,
        warnings,
        control: Some(cv),
        running: Some(running),
        generic: Some(generic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::GeneratorVariant;
    use crate::stopping::{hat_x, Player};
    use approx::assert_relative_eq;

    #[test]
    fn gamma_roots_match_frozen_reference_and_vieta() {
        let cfg = PollutionConfig::reference();
        let (g1, g2) = gamma_roots(&cfg);
        // quadratic-formula oracle values recomputed independently
        assert_relative_eq!(g1, 2.711_234_224_026_316, max_relative = 1e-12);
        assert_relative_eq!(g2, -5.311_234_224_026_315_5, max_relative = 1e-12);
        // Vieta identities
        let half_s2 = 0.5 * cfg.sigma_hat.powi(2);
        assert_relative_eq!(g1 * g2, -(cfg.r - cfg.mu_hat) / half_s2, max_relative = 1e-12);
        assert_relative_eq!(
            g1 + g2,
            1.0 - 2.0 * (cfg.mu_hat + cfg.sigma_hat.powi(2)) / cfg.sigma_hat.powi(2),
            max_relative = 1e-12
        );
        // each root zeroes the quadratic
        assert!(char_poly(&cfg, g1).abs() <= 1e-12);
        assert!(char_poly(&cfg, g2).abs() <= 1e-12);
    }

    #[test]
    fn particular_solutions_satisfy_their_odes() {
        // numerical substitution validates the hand-derived coefficients
        let cfg = PollutionConfig::reference();
        let model = cfg.model().unwrap();
        let (pi_p, u_p) = particular_solutions(&cfg);
        let rho = cfg.r - cfg.mu_hat;
        let lpi = crate::diffusion::generator_apply(&model, &pi_p, GeneratorVariant::Stopping);
        let lu = crate::diffusion::generator_apply(&model, &u_p, GeneratorVariant::Stopping);
        for &x in &geomspace(0.12, 20.0, 1000) {
            let r1 = lpi(x) - rho * pi_p.eval(x) + cfg.lambda * x.powf(cfg.lambda - 1.0);
            let r2 = lu(x) - rho * u_p.eval(x) - (-(cfg.delta) * x.powf(cfg.delta - 1.0));
            assert!(r1.abs() <= 1e-10 * pi_p.eval(x).abs().max(1.0), "Pi' residual {r1} at {x}");
            assert!(r2.abs() <= 1e-10 * u_p.eval(x).abs().max(1.0), "U' residual {r2} at {x}");
        }
    }

    #[test]
    fn payoff_identification_keeps_unit_gap() {
        let cfg = PollutionConfig::reference();
        let p = build_payoffs(&cfg).unwrap();
        for &x in &[0.2, 1.0, 3.0] {
            assert_relative_eq!(p.g1.eval(x) - p.l1.eval(x), cfg.alpha1, max_relative = 1e-12);
            assert_relative_eq!(p.g2.eval(x) - p.l2.eval(x), cfg.alpha2, max_relative = 1e-12);
        }
    }

    #[test]
    fn zeta_has_paper_monotonicity() {
        // zeta_1 decreasing, zeta_2 increasing on (0, inf)
        let cfg = PollutionConfig::reference();
        let model = cfg.model().unwrap();
        let payoffs = build_payoffs(&cfg).unwrap();
        let z1 = crate::stopping::zeta(&payoffs, &model, Player::One);
        let z2 = crate::stopping::zeta(&payoffs, &model, Player::Two);
        let xs = geomspace(0.05, 10.0, 200);
        assert!(xs.windows(2).all(|w| z1(w[1]) < z1(w[0])));
        assert!(xs.windows(2).all(|w| z2(w[1]) > z2(w[0])));
        // zeta_1 closed form: pi'(x) - (r - mu) alpha_1
        for &x in &[0.3f64, 1.0, 2.0] {
            let want = cfg.lambda * x.powf(cfg.lambda - 1.0) - (cfg.r - cfg.mu_hat) * cfg.alpha1;
            assert_relative_eq!(z1(x), want, max_relative = 1e-9);
        }
    }

    #[test]
    fn closed_form_hats_hit_the_anchor_values() {
        let cfg = PollutionConfig::reference();
        let (x1, x2) = hat_x_closed_form(&cfg);
        assert_eq!(x1, 1.0);
        assert_eq!(x2, 2.0);
        let (z1, z2) = hat_x_zeta(&cfg);
        assert_relative_eq!(z1, 0.9f64.powi(-2), max_relative = 1e-14);
        assert_relative_eq!(z2, 1.8, max_relative = 1e-14);
        // the pipeline root agrees with the zeta closed form
        let model = cfg.model().unwrap();
        let payoffs = build_payoffs(&cfg).unwrap();
        let root = hat_x(&payoffs, &model, (0.05, 8.0), Player::One).unwrap();
        assert_relative_eq!(root, z1, max_relative = 1e-10);
    }

    #[test]
    fn infeasible_configs_name_their_violation() {
        let mut cfg = PollutionConfig::reference();
        cfg.alpha1 = 0.5;
        cfg.alpha2 = 0.5;
        cfg.beta1 = None;
        cfg.beta2 = None;
        match cfg.validate() {
            Err(Error::Assumption(msg)) => assert!(msg.contains("x_hat")),
            other => panic!("expected assumption violation, got {other:?}"),
        }
        let mut cfg = PollutionConfig::reference();
        cfg.r = 0.04; // below mu_hat
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = PollutionConfig::reference();
        cfg.delta = 5.0; // outside the growth window (1 + gamma_1 ~ 3.71)
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn running_values_match_generic_plus_shift() {
        let cfg = PollutionConfig::reference();
        let model = cfg.model().unwrap();
        let pair = analytic_pair(&cfg).unwrap();
        let payoffs = build_payoffs(&cfg).unwrap();
        let eq = solve_thresholds(&payoffs, &model, &pair, (0.05, 8.0), None).unwrap();
        let gen = stopping_values(&eq, &payoffs, &pair);
        let run = running_values(&eq, &cfg, &pair).unwrap();
        let (pi_p, u_p) = particular_solutions(&cfg);
        for &x in &[0.3, 0.9, 1.4, 2.0, 3.5] {
            assert_relative_eq!(run.v1.eval(x), gen.v1.eval(x) + pi_p.eval(x), max_relative = 1e-10);
            assert_relative_eq!(run.v2.eval(x), gen.v2.eval(x) + u_p.eval(x), max_relative = 1e-10);
        }
        // running obstacle: v_i <= alpha_i, tight at the own barrier
        assert_relative_eq!(run.v1.eval(eq.a_star), cfg.alpha1, max_relative = 1e-10);
        assert_relative_eq!(run.v2.eval(eq.b_star), cfg.alpha2, max_relative = 1e-10);
    }

    #[test]
    fn scale_transformation_maps_thresholds_consistently() {
        // scaling the profit/utility argument by c is the same game as
        // scaling the costs by 1/c in rescaled state units
        let base = PollutionConfig::reference();
        let c: f64 = 0.5;
        let scaled_costs = PollutionConfig {
            alpha1: base.alpha1 / c,
            alpha2: base.alpha2 / c,
            beta1: None,
            beta2: None,
            ..base.clone()
        };
        scaled_costs.validate().unwrap();
        let model = base.model().unwrap();
        let pair = analytic_pair(&base).unwrap();
        let pay_costs = build_payoffs(&scaled_costs).unwrap();
        let eq_costs = solve_thresholds(&pay_costs, &model, &pair, (0.02, 16.0), None).unwrap();

        // direct build of the scaled-argument payoffs: Pi'_c = c^lambda Pi'
        let (pi_p, u_p) = particular_solutions(&base);
        let sl = c.powf(base.lambda);
        let sd = c.powf(base.delta);
        let scale_fn = |g: &C2Fn, s: f64| {
            let (f, df, d2f) = (g.f.clone(), g.df.clone(), g.d2f.clone());
            C2Fn::new(
                Arc::new(move |x| s * f(x)),
                Arc::new(move |x| s * df(x)),
                Arc::new(move |x| s * d2f(x)),
            )
        };
        let pi_c = scale_fn(&pi_p, sl);
        let u_c = scale_fn(&u_p, sd);
        let pay_scaled = Payoffs {
            g1: C2Fn::constant_minus(base.alpha1, &pi_c),
            l1: C2Fn::negate(&pi_c),
            g2: C2Fn::constant_minus(base.alpha2, &u_c),
            l2: C2Fn::negate(&u_c),
        };
        let eq_scaled = solve_thresholds(&pay_scaled, &model, &pair, (0.02, 16.0), None).unwrap();
        // thresholds in original units relate through y = c x
        assert_relative_eq!(eq_scaled.a_star, eq_costs.a_star / c, max_relative = 1e-7);
        assert_relative_eq!(eq_scaled.b_star, eq_costs.b_star / c, max_relative = 1e-7);
    }

    #[test]
    fn pipeline_runs_clean_on_reference_config() {
        let cfg = PollutionConfig::reference();
        let pipe = PipelineConfig {
            mc_paths: 1500,
            mc_dt: 2e-3,
            mc_t_max: 20.0,
            grid_n: 800,
            ..PipelineConfig::default()
        };
        let rep = run_pipeline(&cfg, &pipe).unwrap();
        assert!(rep.equilibrium.a_star < 1.0 && rep.equilibrium.b_star > 2.0);
        assert!(rep.variational.all_pass(), "{:?}", rep.variational.items);
        assert!(rep.variational_running.all_pass(), "{:?}", rep.variational_running.items);
        assert!(rep.hjb.all_pass(), "{:?}", rep.hjb.items);
        for row in rep.stopping_mc.iter().chain(&rep.control_mc) {
            assert!(row.pass1 && row.pass2, "MC disagreement: {row:?}");
        }
        assert!(rep.all_checks_pass());
    }

    #[test]
    fn pipeline_rejects_infeasible_config_with_stage_tag() {
        let cfg = PollutionConfig {
            alpha1: 0.5,
            alpha2: 0.5,
            beta1: None,
            beta2: None,
            ..PollutionConfig::reference()
        };
        match run_pipeline(&cfg, &PipelineConfig::default()) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "config"),
            other => panic!("expected staged error, got {:?}", other.map(|_| ())),
        }
    }
}
