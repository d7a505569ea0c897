//! Monte Carlo estimation of the control-game reward functionals, with
//! common-random-number support and a step-refinement convergence study.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionModel;
use crate::error::Result;
use crate::func::ScalarFn;
use crate::num::mean_stderr;
use crate::sim::path::zhu_jump_cost;
use crate::sim::rng::{path_rng, tagged_rng};
use crate::sim::{drive, DriveStats, Observer, RngNoise, SimConfig, StepEvents, StepNoise, Strategy};
use crate::stopping::Payoffs;

/// Which reward functionals the estimator evaluates.
#[derive(Clone)]
pub enum PayoffVariant {
    /// State-dependent marginal costs with jump smoothing:
    /// Psi_1 = int L1 d(xi) - int G1 d(nu), Psi_2 symmetric.
    Plain(Payoffs),
    /// Running profit plus constant own-control costs:
    /// Psi_1 = int pi dt - alpha1 d(nu), Psi_2 = int u dt - alpha2 d(xi).
    RunningProfit { pi: ScalarFn, u: ScalarFn, alpha1: f64, alpha2: f64 },
}

/// One path's discounted payoffs plus its diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct PathPayoff {
    pub psi1: f64,
    pub psi2: f64,
    pub exited: bool,
    pub exit_discount: f64,
    pub simultaneous_steps: usize,
    pub flat_off: (f64, f64),
    pub band_excursion: f64,
}

/// Aggregated estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlMcResult {
    pub psi1: f64,
    pub psi2: f64,
    pub stderr1: f64,
    pub stderr2: f64,
    pub n_paths: usize,
    pub exit_fraction: f64,
    /// Mean discount weight leaked through truncation exits.
    pub leaked_discount: f64,
    pub simultaneous_steps: usize,
    pub max_flat_off: f64,
    pub max_band_excursion: f64,
    /// False when more than 0.1% of paths left the truncated interval.
    pub reliable: bool,
}

struct Discount {
    value: f64,
    factor: f64,
}

impl Discount {
    fn new(r: f64, dt: f64) -> Self {
        Self { value: 1.0, factor: (-r * dt).exp() }
    }

    #[inline]
    fn advance(&mut self) {
        self.value *= self.factor;
    }
}

/// Accumulator for the state-dependent-cost functionals.
struct PlainAccumulator<'a> {
    payoffs: &'a Payoffs,
    // cached barrier values for the continuous parts
    g1_at_nu: f64,
    l2_at_nu: f64,
    l1_at_xi: f64,
    g2_at_xi: f64,
    disc: Discount,
    psi1: f64,
    psi2: f64,
}

impl<'a> PlainAccumulator<'a> {
    fn new(payoffs: &'a Payoffs, nu_level: Option<f64>, xi_level: Option<f64>, r: f64, dt: f64) -> Self {
        Self {
            payoffs,
            g1_at_nu: nu_level.map_or(0.0, |a| payoffs.g1.eval(a)),
            l2_at_nu: nu_level.map_or(0.0, |a| payoffs.l2.eval(a)),
            l1_at_xi: xi_level.map_or(0.0, |b| payoffs.l1.eval(b)),
            g2_at_xi: xi_level.map_or(0.0, |b| payoffs.g2.eval(b)),
            disc: Discount::new(r, dt),
            psi1: 0.0,
            psi2: 0.0,
        }
    }
}

impl Observer for PlainAccumulator<'_> {
    fn events(&mut self, ev: &StepEvents) {
        if ev.t > 0.0 {
            self.disc.advance();
        }
        let d = self.disc.value;
        if ev.dnu_c != 0.0 {
            self.psi1 -= d * self.g1_at_nu * ev.dnu_c;
            self.psi2 += d * self.l2_at_nu * ev.dnu_c;
        }
        if ev.dxi_c != 0.0 {
            self.psi1 += d * self.l1_at_xi * ev.dxi_c;
            self.psi2 -= d * self.g2_at_xi * ev.dxi_c;
        }
        for j in ev.nu_jumps.iter().flatten() {
            let g = |x: f64| self.payoffs.g1.eval(x);
            let l = |x: f64| self.payoffs.l2.eval(x);
            self.psi1 -= d * zhu_jump_cost(&g, j.0, j.1, true).expect("jump quadrature");
            self.psi2 += d * zhu_jump_cost(&l, j.0, j.1, true).expect("jump quadrature");
        }
        for j in ev.xi_jumps.iter().flatten() {
            let l = |x: f64| self.payoffs.l1.eval(x);
            let g = |x: f64| self.payoffs.g2.eval(x);
            self.psi1 += d * zhu_jump_cost(&l, j.0, j.1, false).expect("jump quadrature");
            self.psi2 -= d * zhu_jump_cost(&g, j.0, j.1, false).expect("jump quadrature");
        }
    }
}

/// Accumulator for the running-profit functionals.
struct RunningAccumulator {
    pi: ScalarFn,
    u: ScalarFn,
    alpha1: f64,
    alpha2: f64,
    disc: Discount,
    psi1: f64,
    psi2: f64,
}

impl Observer for RunningAccumulator {
    fn time_slice(&mut self, _t: f64, x: f64, dt: f64) {
        let d = self.disc.value;
        self.psi1 += d * (self.pi)(x) * dt;
        self.psi2 += d * (self.u)(x) * dt;
    }

    fn events(&mut self, ev: &StepEvents) {
        if ev.t > 0.0 {
            self.disc.advance();
        }
        let d = self.disc.value;
        let dnu = ev.dnu_c + ev.nu_jump_mass();
        let dxi = ev.dxi_c + ev.xi_jump_mass();
        if dnu != 0.0 {
            self.psi1 -= d * self.alpha1 * dnu;
        }
        if dxi != 0.0 {
            self.psi2 -= d * self.alpha2 * dxi;
        }
    }
}

fn run_one(
    model: &DiffusionModel,
    variant: &PayoffVariant,
    strat_nu: &Strategy,
    strat_xi: &Strategy,
    x0: f64,
    cfg: &SimConfig,
    noise: &mut dyn StepNoise,
) -> Result<PathPayoff> {
    struct DynNoise<'a>(&'a mut dyn StepNoise);
    impl StepNoise for DynNoise<'_> {
        fn draw(&mut self) -> (f64, f64, f64) {
            self.0.draw()
        }
    }
    let mut n = DynNoise(noise);
    let (psi1, psi2, stats): (f64, f64, DriveStats) = match variant {
        PayoffVariant::Plain(p) => {
            let mut acc = PlainAccumulator::new(
                p,
                strat_nu.reflect_level(),
                strat_xi.reflect_level(),
                model.r,
                cfg.dt,
            );
            let stats = drive(model, strat_nu, strat_xi, x0, cfg, &mut n, &mut acc)?;
            (acc.psi1, acc.psi2, stats)
        }
        PayoffVariant::RunningProfit { pi, u, alpha1, alpha2 } => {
            let mut acc = RunningAccumulator {
                pi: pi.clone(),
                u: u.clone(),
                alpha1: *alpha1,
                alpha2: *alpha2,
                disc: Discount::new(model.r, cfg.dt),
                psi1: 0.0,
                psi2: 0.0,
            };
            let stats = drive(model, strat_nu, strat_xi, x0, cfg, &mut n, &mut acc)?;
            (acc.psi1, acc.psi2, stats)
        }
    };
    Ok(PathPayoff {
        psi1,
        psi2,
        exited: stats.exited,
        exit_discount: stats.exit_discount,
        simultaneous_steps: stats.simultaneous_steps,
        flat_off: (stats.flat_off_nu, stats.flat_off_xi),
        band_excursion: stats.band_excursion,
    })
}

/// Per-path payoffs under one strategy pair; path `i` always uses stream
/// (seed, i), so calls sharing a seed are common-random-number comparable.
pub fn control_payoff_paths(
    model: &DiffusionModel,
    variant: &PayoffVariant,
    strat_nu: &Strategy,
    strat_xi: &Strategy,
    x0: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<Vec<PathPayoff>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut noise = RngNoise { rng: path_rng(cfg.seed, i) };
            run_one(model, variant, strat_nu, strat_xi, x0, cfg, &mut noise)
        })
        .collect()
}

/// Monte Carlo estimate of (Psi_1, Psi_2) under a strategy pair.
pub fn control_payoff_mc(
    model: &DiffusionModel,
    variant: &PayoffVariant,
    strat_nu: &Strategy,
    strat_xi: &Strategy,
    x0: f64,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<ControlMcResult> {
    let paths = control_payoff_paths(model, variant, strat_nu, strat_xi, x0, n_paths, cfg)?;
    Ok(aggregate(&paths))
}

/// Deterministic aggregation of per-path payoffs (pairwise reduction).
pub fn aggregate(paths: &[PathPayoff]) -> ControlMcResult {
    let v1: Vec<f64> = paths.iter().map(|p| p.psi1).collect();
    let v2: Vec<f64> = paths.iter().map(|p| p.psi2).collect();
    let (m1, s1) = mean_stderr(&v1);
    let (m2, s2) = mean_stderr(&v2);
    let exits = paths.iter().filter(|p| p.exited).count();
    let leaked: f64 = paths.iter().map(|p| p.exit_discount).sum::<f64>() / paths.len().max(1) as f64;
    let exit_fraction = exits as f64 / paths.len().max(1) as f64;
    ControlMcResult {
        psi1: m1,
        psi2: m2,
        stderr1: s1,
        stderr2: s2,
        n_paths: paths.len(),
        exit_fraction,
        leaked_discount: leaked,
        simultaneous_steps: paths.iter().map(|p| p.simultaneous_steps).sum(),
        max_flat_off: paths
            .iter()
            .map(|p| p.flat_off.0.max(p.flat_off.1))
            .fold(0.0, f64::max),
        max_band_excursion: paths.iter().map(|p| p.band_excursion).fold(0.0, f64::max),
        reliable: exit_fraction <= 1e-3,
    }
}

/// Noise feed aggregating pre-drawn fine-step normals into coarse steps, so
/// every refinement level of a path shares one Brownian trajectory.
struct RefinedNoise<'a, R: Rng> {
    fine_z: &'a [f64],
    agg: usize,
    pos: usize,
    urng: R,
}

impl<R: Rng> StepNoise for RefinedNoise<'_, R> {
    fn draw(&mut self) -> (f64, f64, f64) {
        let mut s = 0.0;
        for _ in 0..self.agg {
            s += self.fine_z[self.pos];
            self.pos += 1;
        }
        // sum of `agg` standard normals, rescaled back to unit variance
        let z = s / (self.agg as f64).sqrt();
        (z, self.urng.gen(), self.urng.gen())
    }
}

/// Step-refinement study: Psi_1 estimates at dt = dt_fine * 2^level for each
/// requested level, with all levels of one path driven by the same fine
/// Brownian increments. Returns (dt, mean Psi_1) sorted fine-to-coarse.
pub fn refinement_study(
    model: &DiffusionModel,
    variant: &PayoffVariant,
    strat_nu: &Strategy,
    strat_xi: &Strategy,
    x0: f64,
    n_paths: usize,
    base: &SimConfig,
    levels: &[u32],
) -> Result<Vec<(f64, f64)>> {
    let max_level = *levels.iter().max().unwrap();
    let fine_steps_per_coarse = 1usize << max_level;
    let n_coarse = (base.t_max / (base.dt * fine_steps_per_coarse as f64)).round() as usize;
    let n_fine = n_coarse * fine_steps_per_coarse;
    let t_max = n_fine as f64 * base.dt;

    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            use rand_distr::StandardNormal;
            let mut zrng = path_rng(base.seed, i);
            let fine_z: Vec<f64> = (0..n_fine).map(|_| zrng.sample(StandardNormal)).collect();
            levels
                .iter()
                .map(|&lvl| {
                    let agg = 1usize << lvl;
                    let cfg = SimConfig {
                        dt: base.dt * agg as f64,
                        t_max,
                        seed: base.seed,
                        bridge: base.bridge,
                        trunc: base.trunc,
                    };
                    let mut noise = RefinedNoise {
                        fine_z: &fine_z,
                        agg,
                        pos: 0,
                        urng: tagged_rng(base.seed, i, lvl as u8 + 1),
                    };
                    run_one(model, variant, strat_nu, strat_xi, x0, &cfg, &mut noise).map(|p| p.psi1)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(levels
        .iter()
        .enumerate()
        .map(|(k, &lvl)| {
            let vals: Vec<f64> = per_path.iter().map(|row| row[k]).collect();
            let (mean, _) = mean_stderr(&vals);
            (base.dt * (1u64 << lvl) as f64, mean)
        })
        .collect())
}
