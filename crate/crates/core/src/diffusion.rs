//! The underlying diffusions and their analytic machinery.
//!
//! Two processes share the coefficient pair (mu, sigma): the controlled state
//! with generator L f = 1/2 sigma^2 f'' + mu f', and the stopping-game
//! process whose drift picks up the extra sigma*sigma' term. The fundamental
//! solutions psi (increasing) and phi (decreasing) of
//!
//!   L_X u - (r - mu') u = 0
//!
//! together with the scale density S' and the Wronskian
//! w = (psi' phi - phi' psi)/S' drive every construction downstream.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::func::{C2Fn, ScalarFn};
use crate::num::grid::linspace;
use crate::num::hermite::CubicHermite;
use crate::num::{central_diff, ode, quad};

/// Declared endpoint classification; never computed (Feller tests are out of
/// scope), only consumed by the existence conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryType {
    Natural,
    EntranceNotExit,
}

/// Which generator to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorVariant {
    /// 1/2 sigma^2 f'' + mu f' (controlled state).
    Controlled,
    /// 1/2 sigma^2 f'' + (mu + sigma sigma') f' (stopping-game process).
    Stopping,
}

/// Coefficients, state interval and discount of the model. Immutable after
/// construction; safe to share across workers.
#[derive(Clone)]
pub struct DiffusionModel {
    pub mu: ScalarFn,
    pub sigma: ScalarFn,
    pub mu_prime: ScalarFn,
    pub sigma_prime: ScalarFn,
    /// Open state interval (lo, hi); endpoints may be infinite.
    pub lo: f64,
    pub hi: f64,
    pub r: f64,
    pub boundary_lo: BoundaryType,
    pub boundary_hi: BoundaryType,
}

impl DiffusionModel {
    pub fn new(
        mu: ScalarFn,
        sigma: ScalarFn,
        mu_prime: ScalarFn,
        sigma_prime: ScalarFn,
        lo: f64,
        hi: f64,
        r: f64,
        boundary_lo: BoundaryType,
        boundary_hi: BoundaryType,
    ) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Config(format!("empty state interval ({lo}, {hi})")));
        }
        if !(r > 0.0) {
            return Err(Error::Config(format!("discount rate must be positive, got {r}")));
        }
        Ok(Self { mu, sigma, mu_prime, sigma_prime, lo, hi, r, boundary_lo, boundary_hi })
    }

    /// Geometric Brownian motion: mu(x) = mu_hat x, sigma(x) = sigma_hat x on (0, inf).
    pub fn gbm(mu_hat: f64, sigma_hat: f64, r: f64) -> Result<Self> {
        if sigma_hat <= 0.0 {
            return Err(Error::Config(format!("sigma_hat must be positive, got {sigma_hat}")));
        }
        Self::new(
            Arc::new(move |x| mu_hat * x),
            Arc::new(move |x| sigma_hat * x),
            Arc::new(move |_| mu_hat),
            Arc::new(move |_| sigma_hat),
            0.0,
            f64::INFINITY,
            r,
            BoundaryType::Natural,
            BoundaryType::Natural,
        )
    }

    /// Constant-coefficient (arithmetic) Brownian model on (-inf, inf).
    pub fn brownian(mu: f64, sigma: f64, r: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        Self::new(
            Arc::new(move |_| mu),
            Arc::new(move |_| sigma),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
            f64::NEG_INFINITY,
            f64::INFINITY,
            r,
            BoundaryType::Natural,
            BoundaryType::Natural,
        )
    }

    /// Ornstein-Uhlenbeck: mu(x) = rate (mean - x), sigma constant, on (-inf, inf).
    pub fn ou(rate: f64, mean: f64, sigma: f64, r: f64) -> Result<Self> {
        if sigma <= 0.0 || rate < 0.0 {
            return Err(Error::Config("OU needs sigma > 0 and rate >= 0".into()));
        }
        if r <= rate {
            // Assumption on the discount: r > mu'(x) = -rate always holds, but a
            // generous margin keeps the ODE well posed near the boundaries.
            // No hard error: mu' = -rate < 0 < r.
        }
        Self::new(
            Arc::new(move |x| rate * (mean - x)),
            Arc::new(move |_| sigma),
            Arc::new(move |_| -rate),
            Arc::new(|_| 0.0),
            f64::NEG_INFINITY,
            f64::INFINITY,
            r,
            BoundaryType::Natural,
            BoundaryType::Natural,
        )
    }

    /// Coefficients tabulated on a grid, linearly interpolated. All four
    /// columns (mu, sigma, mu', sigma') must be supplied.
    pub fn from_table(
        xs: Vec<f64>,
        mu: Vec<f64>,
        sigma: Vec<f64>,
        mu_prime: Vec<f64>,
        sigma_prime: Vec<f64>,
        r: f64,
        boundary_lo: BoundaryType,
        boundary_hi: BoundaryType,
    ) -> Result<Self> {
        let n = xs.len();
        if n < 2 || mu.len() != n || sigma.len() != n || mu_prime.len() != n || sigma_prime.len() != n {
            return Err(Error::Config("coefficient table columns must share length >= 2".into()));
        }
        if !xs.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Config("coefficient table abscissae must be increasing".into()));
        }
        let lo = xs[0];
        let hi = xs[n - 1];
        let lerp = move |xs: Arc<Vec<f64>>, ys: Arc<Vec<f64>>| -> ScalarFn {
            Arc::new(move |x: f64| {
                let i = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
                    Ok(i) => return ys[i],
                    Err(i) => i.clamp(1, xs.len() - 1) - 1,
                };
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] * (1.0 - t) + ys[i + 1] * t
            })
        };
        let xs = Arc::new(xs);
        Self::new(
            lerp(xs.clone(), Arc::new(mu)),
            lerp(xs.clone(), Arc::new(sigma)),
            lerp(xs.clone(), Arc::new(mu_prime)),
            lerp(xs, Arc::new(sigma_prime)),
            lo,
            hi,
            r,
            boundary_lo,
            boundary_hi,
        )
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn require_inside(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideInterval { x, lo: self.lo, hi: self.hi })
        }
    }

    /// Drift of the stopping-game process: mu + sigma sigma'.
    #[inline]
    pub fn stopping_drift(&self, x: f64) -> f64 {
        (self.mu)(x) + (self.sigma)(x) * (self.sigma_prime)(x)
    }

    /// State-dependent kill rate of the stopping game: r - mu'(x).
    #[inline]
    pub fn kill_rate(&self, x: f64) -> f64 {
        self.r - (self.mu_prime)(x)
    }

    /// Checks sigma > 0, r - mu' > 0 and the consistency of the declared
    /// derivative closures against finite differences on the given grid.
    pub fn validate_on_grid(&self, grid: &[f64]) -> Result<()> {
        for &x in grid {
            self.require_inside(x)?;
            if (self.sigma)(x) <= 0.0 {
                return Err(Error::Assumption(format!("sigma({x}) = {} is not positive", (self.sigma)(x))));
            }
            if self.kill_rate(x) <= 0.0 {
                return Err(Error::Assumption(format!(
                    "r - mu'({x}) = {} is not positive",
                    self.kill_rate(x)
                )));
            }
        }
        // derivative closures vs finite differences, relative 1e-6
        for &x in grid {
            let h = 1e-6 * x.abs().max(1.0);
            if x - h <= self.lo || x + h >= self.hi {
                continue;
            }
            let fd_mu = central_diff(&|z| (self.mu)(z), x, h);
            let fd_sg = central_diff(&|z| (self.sigma)(z), x, h);
            let scale_mu = (self.mu_prime)(x).abs().max(1.0);
            let scale_sg = (self.sigma_prime)(x).abs().max(1.0);
            if ((self.mu_prime)(x) - fd_mu).abs() > 2e-4 * scale_mu {
                return Err(Error::Config(format!(
                    "mu_prime({x}) = {} disagrees with finite difference {}",
                    (self.mu_prime)(x),
                    fd_mu
                )));
            }
            if ((self.sigma_prime)(x) - fd_sg).abs() > 2e-4 * scale_sg {
                return Err(Error::Config(format!(
                    "sigma_prime({x}) = {} disagrees with finite difference {}",
                    (self.sigma_prime)(x),
                    fd_sg
                )));
            }
        }
        Ok(())
    }
}

/// Apply the chosen generator to a twice-differentiable function, returning a
/// pointwise closure. Evaluation outside the state interval is a domain error
/// surfaced through `generator_apply_at`.
pub fn generator_apply(model: &DiffusionModel, f: &C2Fn, variant: GeneratorVariant) -> ScalarFn {
    let sigma = model.sigma.clone();
    let mu = model.mu.clone();
    let sigma_prime = model.sigma_prime.clone();
    let df = f.df.clone();
    let d2f = f.d2f.clone();
    match variant {
        GeneratorVariant::Controlled => Arc::new(move |x| {
            let s = sigma(x);
            0.5 * s * s * d2f(x) + mu(x) * df(x)
        }),
        GeneratorVariant::Stopping => Arc::new(move |x| {
            let s = sigma(x);
            0.5 * s * s * d2f(x) + (mu(x) + s * sigma_prime(x)) * df(x)
        }),
    }
}

/// `generator_apply` with the domain check.
pub fn generator_apply_at(
    model: &DiffusionModel,
    f: &C2Fn,
    variant: GeneratorVariant,
    x: f64,
) -> Result<f64> {
    model.require_inside(x)?;
    Ok(generator_apply(model, f, variant)(x))
}

/// Scale density of the stopping-game process:
/// S'(x) = exp(-int_anchor^x 2 (mu + sigma sigma') / sigma^2 dz), S'(anchor) = 1.
pub fn scale_density(model: &DiffusionModel, anchor: f64) -> Result<ScalarFn> {
    model.require_inside(anchor)?;
    let m = model.clone();
    Ok(Arc::new(move |x: f64| {
        let integrand = |z: f64| {
            let s = (m.sigma)(z);
            2.0 * ((m.mu)(z) + s * (m.sigma_prime)(z)) / (s * s)
        };
        let integral = quad::adaptive(&integrand, anchor, x, 1e-12)
            .unwrap_or_else(|e| panic!("scale density integration failed: {e}"));
        (-integral).exp()
    }))
}

/// Fallible scale-density evaluation for callers that must surface quadrature
/// failures (non-integrable coefficient singularities) instead of panicking.
pub fn scale_density_at(model: &DiffusionModel, anchor: f64, x: f64) -> Result<f64> {
    model.require_inside(anchor)?;
    model.require_inside(x)?;
    let integrand = |z: f64| {
        let s = (model.sigma)(z);
        2.0 * ((model.mu)(z) + s * (model.sigma_prime)(z)) / (s * s)
    };
    Ok((-quad::adaptive(&integrand, anchor, x, 1e-12)?).exp())
}

/// How a fundamental pair was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Numeric,
}

/// The increasing/decreasing fundamental solutions, the scale density and the
/// Wronskian, with validation diagnostics from construction.
#[derive(Clone)]
pub struct FundamentalPair {
    pub psi: C2Fn,
    pub phi: C2Fn,
    pub scale_density: ScalarFn,
    pub wronskian: f64,
    pub provenance: Provenance,
    /// Grid the pair was validated on.
    pub grid: Vec<f64>,
    /// Relative spread of the Wronskian across the validation grid.
    pub wronskian_spread: f64,
    /// Worst scaled ODE residual across the validation grid.
    pub ode_residual: f64,
}

impl FundamentalPair {
    /// (psi' phi - phi' psi) / S' at x.
    pub fn wronskian_at(&self, x: f64) -> f64 {
        (self.psi.deriv(x) * self.phi.eval(x) - self.phi.deriv(x) * self.psi.eval(x))
            / (self.scale_density)(x)
    }

    /// Scaled residual of L_X u - (r - mu') u at x for u in {psi, phi}.
    pub fn ode_residual_at(&self, model: &DiffusionModel, x: f64) -> (f64, f64) {
        let op = |u: &C2Fn| {
            let lu = 0.5 * (model.sigma)(x).powi(2) * u.second(x) + model.stopping_drift(x) * u.deriv(x);
            (lu - model.kill_rate(x) * u.eval(x)) / u.eval(x).abs().max(1.0)
        };
        (op(&self.psi), op(&self.phi))
    }
}

/// Construction mode for `fundamental_pair`.
pub enum PairMode {
    /// Closed-form solutions supplied by the caller, validated here.
    Analytic { psi: C2Fn, phi: C2Fn, scale_density: ScalarFn },
    /// Construct both branches numerically on [x_lo, x_hi] with `n` nodes.
    Numeric { x_lo: f64, x_hi: f64, n: usize },
}

/// Tolerance gates for pair validation; looser in numeric mode.
struct Gates {
    ode_residual: f64,
    wronskian_spread: f64,
}

/// Build and validate a fundamental pair, normalized so that
/// psi(x_ref) = phi(x_ref) = 1.
pub fn fundamental_pair(model: &DiffusionModel, mode: PairMode, x_ref: f64) -> Result<FundamentalPair> {
    model.require_inside(x_ref)?;
    match mode {
        PairMode::Analytic { psi, phi, scale_density } => {
            let lo = if model.lo.is_finite() { model.lo + 0.01 * (x_ref - model.lo) } else { x_ref - 5.0 };
            let hi = if model.hi.is_finite() { model.hi - 0.01 * (model.hi - x_ref) } else { x_ref + 5.0 };
            let grid = linspace(lo, hi, 257);
            let pair = normalize_pair(psi, phi, scale_density, x_ref, Provenance::Analytic, grid)?;
            validate_pair(model, pair, Gates { ode_residual: 1e-8, wronskian_spread: 1e-6 })
        }
        PairMode::Numeric { x_lo, x_hi, n } => {
            if !(model.lo < x_lo && x_lo < x_ref && x_ref < x_hi && x_hi < model.hi || {
                // allow x_hi == model.hi only if finite strictly inside handled above
                false
            }) {
                return Err(Error::Config(format!(
                    "numeric pair needs lo < x_lo < x_ref < x_hi < hi, got ({x_lo}, {x_ref}, {x_hi})"
                )));
            }
            numeric_pair(model, x_lo, x_hi, n.max(64), x_ref)
        }
    }
}

fn normalize_pair(
    psi: C2Fn,
    phi: C2Fn,
    scale_density: ScalarFn,
    x_ref: f64,
    provenance: Provenance,
    grid: Vec<f64>,
) -> Result<FundamentalPair> {
    let cpsi = psi.eval(x_ref);
    let cphi = phi.eval(x_ref);
    if !(cpsi > 0.0) || !(cphi > 0.0) {
        return Err(Error::Construction(format!(
            "candidate solutions must be positive at the reference point: psi({x_ref}) = {cpsi}, phi({x_ref}) = {cphi}"
        )));
    }
    let scale = |g: &C2Fn, c: f64| -> C2Fn {
        let (f, df, d2f) = (g.f.clone(), g.df.clone(), g.d2f.clone());
        let prim = g.antiderivative.clone().map(|p| -> ScalarFn { Arc::new(move |x| p(x) / c) });
        C2Fn {
            f: Arc::new(move |x| f(x) / c),
            df: Arc::new(move |x| df(x) / c),
            d2f: Arc::new(move |x| d2f(x) / c),
            antiderivative: prim,
        }
    };
    let psi_n = scale(&psi, cpsi);
    let phi_n = scale(&phi, cphi);
    let w = (psi_n.deriv(x_ref) * phi_n.eval(x_ref) - phi_n.deriv(x_ref) * psi_n.eval(x_ref))
        / scale_density(x_ref);
    Ok(FundamentalPair {
        psi: psi_n,
        phi: phi_n,
        scale_density,
        wronskian: w,
        provenance,
        grid,
        wronskian_spread: 0.0,
        ode_residual: 0.0,
    })
}

fn validate_pair(model: &DiffusionModel, mut pair: FundamentalPair, gates: Gates) -> Result<FundamentalPair> {
    let grid = pair.grid.clone();
    // monotonicity
    for &x in &grid {
        if pair.psi.deriv(x) <= 0.0 {
            return Err(Error::Construction(format!("psi not increasing at x = {x}")));
        }
        if pair.phi.deriv(x) >= 0.0 {
            return Err(Error::Construction(format!("phi not decreasing at x = {x}")));
        }
        if pair.psi.eval(x) <= 0.0 || pair.phi.eval(x) <= 0.0 {
            return Err(Error::Construction(format!("fundamental solution not positive at x = {x}")));
        }
    }
    // Wronskian constancy
    let ws: Vec<f64> = grid.iter().map(|&x| pair.wronskian_at(x)).collect();
    let mean = ws.iter().sum::<f64>() / ws.len() as f64;
    let spread = ws
        .iter()
        .map(|w| (w - mean).abs())
        .fold(0.0f64, f64::max)
        / mean.abs().max(1e-300);
    if !(mean > 0.0) {
        return Err(Error::Construction(format!("Wronskian not positive: {mean}")));
    }
    if spread > gates.wronskian_spread {
        return Err(Error::Quality(format!(
            "Wronskian relative spread {spread:.3e} exceeds {:.1e}",
            gates.wronskian_spread
        )));
    }
    // ODE residuals at interior points
    let mut worst = 0.0f64;
    for &x in &grid[1..grid.len().saturating_sub(1)] {
        let (r1, r2) = pair.ode_residual_at(model, x);
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    if worst > gates.ode_residual {
        return Err(Error::Quality(format!(
            "ODE residual {worst:.3e} exceeds {:.1e}",
            gates.ode_residual
        )));
    }
    pair.wronskian = mean;
    pair.wronskian_spread = spread;
    pair.ode_residual = worst;
    Ok(pair)
}

/// Numeric construction. Each branch is integrated in the direction where it
/// dominates: psi left-to-right from a near-zero Dirichlet start at x_lo, phi
/// right-to-left from x_hi. Integrating a branch toward the endpoint where it
/// is recessive is ill-conditioned (the opposite branch takes over), so the
/// truncation endpoints act as the shooting data.
fn numeric_pair(model: &DiffusionModel, x_lo: f64, x_hi: f64, n: usize, x_ref: f64) -> Result<FundamentalPair> {
    let nodes = linspace(x_lo, x_hi, n);
    let rhs = |x: f64, y: [f64; 2]| -> [f64; 2] {
        let s2 = (model.sigma)(x).powi(2);
        [
            y[1],
            (2.0 / s2) * (model.kill_rate(x) * y[0] - model.stopping_drift(x) * y[1]),
        ]
    };
    // psi: forward
    let up = ode::integrate_nodes(rhs, &nodes, [0.0, 1.0], 1e-11, 1e-13)?;
    // phi: backward
    let rev: Vec<f64> = nodes.iter().rev().copied().collect();
    let dn_rev = ode::integrate_nodes(rhs, &rev, [0.0, -1.0], 1e-11, 1e-13)?;
    let dn: Vec<[f64; 2]> = dn_rev.into_iter().rev().collect();

    let mk = |vals: Vec<[f64; 2]>| -> C2Fn {
        let interp = Arc::new(CubicHermite::new(
            nodes.clone(),
            vals.iter().map(|v| v[0]).collect(),
            vals.iter().map(|v| v[1]).collect(),
        ));
        let i1 = interp.clone();
        let i2 = interp.clone();
        let m = model.clone();
        // u'' recovered from the ODE itself rather than differentiating the
        // interpolant twice.
        C2Fn::new(
            Arc::new(move |x| interp.eval(x)),
            Arc::new(move |x| i1.deriv(x)),
            Arc::new(move |x| {
                let s2 = (m.sigma)(x).powi(2);
                (2.0 / s2) * (m.kill_rate(x) * i2.eval(x) - m.stopping_drift(x) * i2.deriv(x))
            }),
        )
    };
    let psi = mk(up);
    let phi = mk(dn);
    let sp = scale_density(model, x_ref)?;
    // validate on interior nodes only; the Dirichlet starts vanish at the ends
    let margin = (x_hi - x_lo) * 0.02;
    let grid = linspace(x_lo + margin, x_hi - margin, 201);
    let pair = normalize_pair(psi, phi, sp, x_ref, Provenance::Numeric, grid)?;
    validate_pair(model, pair, Gates { ode_residual: 1e-6, wronskian_spread: 1e-4 })
}
