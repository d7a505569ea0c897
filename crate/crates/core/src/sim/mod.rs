//! Simulation of the controlled SDE under reflection and deviation
//! strategies, cost-functional estimation, and Nash certification.
//!
//! One stepping driver serves every consumer through a lightweight observer:
//! the same per-step semantics back the path dumps, the payoff estimators and
//! the invariant trackers. Per step the driver consumes exactly three draws
//! from the path's stream (one standard normal, two uniforms, in this order),
//! so strategy variants sharing a (seed, path) stream see identical noise.

pub mod dominance;
pub mod mc;
pub mod nash;
pub mod path;
pub mod picard;
pub mod rng;
pub mod strategy;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::stopping::bridge_extremes;
pub use path::{ControlPath, ControlSide};
pub use strategy::{JumpTrigger, Strategy};

/// Numerical settings for one simulated path set.
#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Conditional bridge-extreme correction for the reflection increments
    /// (weak order one); plain endpoint projection when false.
    pub bridge: bool,
    /// Truncated computational interval; paths are killed on leaving it.
    pub trunc: (f64, f64),
}

impl SimConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// Noise feed for one path; abstracts the per-step draw triple so refinement
/// studies can share Brownian increments across step sizes.
pub trait StepNoise {
    /// (standard normal, uniform, uniform)
    fn draw(&mut self) -> (f64, f64, f64);
}

pub struct RngNoise<R: Rng> {
    pub rng: R,
}

impl<R: Rng> StepNoise for RngNoise<R> {
    #[inline]
    fn draw(&mut self) -> (f64, f64, f64) {
        let z: f64 = self.rng.sample(StandardNormal);
        let u1: f64 = self.rng.gen();
        let u2: f64 = self.rng.gen();
        (z, u1, u2)
    }
}

/// Everything that happened at one time instant.
#[derive(Clone, Copy, Debug)]
pub struct StepEvents {
    /// Time at which these controls act (0 for the initial jump record).
    pub t: f64,
    /// Left limit: the state just before the controls act.
    pub x_left: f64,
    pub dnu_c: f64,
    pub dxi_c: f64,
    /// (pre-jump state, size); slot 1 holds a same-instant response jump.
    pub nu_jumps: [Option<(f64, f64)>; 2],
    pub xi_jumps: [Option<(f64, f64)>; 2],
    pub x_new: f64,
    /// Both controls jumped at this instant.
    pub simultaneous: bool,
}

impl StepEvents {
    pub fn nu_jump_mass(&self) -> f64 {
        self.nu_jumps.iter().flatten().map(|j| j.1).sum()
    }

    pub fn xi_jump_mass(&self) -> f64 {
        self.xi_jumps.iter().flatten().map(|j| j.1).sum()
    }
}

/// Per-path consumer of the driver's output.
pub trait Observer {
    fn start(&mut self, _x0: f64) {}
    /// State occupancy over [t, t + dt) (for running-profit terms).
    fn time_slice(&mut self, _t: f64, _x: f64, _dt: f64) {}
    fn events(&mut self, _ev: &StepEvents) {}
    fn finish(&mut self, _t_end: f64, _exited: bool) {}
}

/// Invariant diagnostics accumulated by the driver itself.
#[derive(Clone, Copy, Debug, Default)]
pub struct DriveStats {
    pub exited: bool,
    pub exit_time: f64,
    pub exit_discount: f64,
    pub simultaneous_steps: usize,
    /// Control mass booked while the recorded state stayed away from the
    /// barrier (beyond the excursion tolerance).
    pub flat_off_nu: f64,
    pub flat_off_xi: f64,
    /// Largest excursion of the left limits beyond the reflection band.
    pub band_excursion: f64,
}

struct Resolved {
    reflect: Option<f64>,
    lump0: f64,
    counter: Option<(f64, JumpTrigger)>,
    fired: bool,
}

impl Resolved {
    fn of(s: &Strategy) -> Self {
        Self {
            reflect: s.reflect_level(),
            lump0: s.lump_amount(),
            counter: s.counter_jump(),
            fired: false,
        }
    }
}

fn trigger_fires(tr: &JumpTrigger, t: f64, x: f64) -> bool {
    match tr {
        JumpTrigger::AtTime(t0) => t >= *t0,
        JumpTrigger::FirstHitAbove(lvl) => x >= *lvl,
        JumpTrigger::FirstHitBelow(lvl) => x <= *lvl,
    }
}

/// Run one path, feeding the observer. The returned stats carry the
/// driver-level invariant diagnostics.
pub fn drive<N: StepNoise, O: Observer>(
    model: &DiffusionModel,
    strat_nu: &Strategy,
    strat_xi: &Strategy,
    x0: f64,
    cfg: &SimConfig,
    noise: &mut N,
    obs: &mut O,
) -> Result<DriveStats> {
    if !(x0 > cfg.trunc.0 && x0 < cfg.trunc.1) {
        return Err(Error::OutsideInterval { x: x0, lo: cfg.trunc.0, hi: cfg.trunc.1 });
    }
    if let (Some(a), Some(b)) = (strat_nu.reflect_level(), strat_xi.reflect_level()) {
        if !(a < b) {
            return Err(Error::Config(format!("reflection levels must satisfy a < b, got ({a}, {b})")));
        }
    }
    let mut nu = Resolved::of(strat_nu);
    let mut xi = Resolved::of(strat_xi);
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let n_steps = cfg.n_steps();
    let mut stats = DriveStats::default();

    // excursion tolerance for the support diagnostics: 8 sigma_max sqrt(dt)
    let band = match (nu.reflect, xi.reflect) {
        (Some(a), Some(b)) => {
            let mut smax = 0.0f64;
            for i in 0..=16 {
                let x = a + (b - a) * i as f64 / 16.0;
                smax = smax.max((model.sigma)(x));
            }
            Some((a, b, 8.0 * smax * sq))
        }
        _ => None,
    };

    obs.start(x0);

    // initial jumps at t = 0+
    let mut x = x0;
    let mut ev = StepEvents {
        t: 0.0,
        x_left: x0,
        dnu_c: 0.0,
        dxi_c: 0.0,
        nu_jumps: [None; 2],
        xi_jumps: [None; 2],
        x_new: x0,
        simultaneous: false,
    };
    let mut jn = nu.lump0;
    if let Some(a) = nu.reflect {
        jn += (a - x).max(0.0);
    }
    if jn > 0.0 {
        ev.nu_jumps[0] = Some((x, jn));
        x += jn;
    }
    let mut jx = xi.lump0;
    if let Some(b) = xi.reflect {
        jx += (x - b).max(0.0);
    }
    if jx > 0.0 {
        ev.xi_jumps[0] = Some((x, jx));
        x -= jx;
    }
    // reflector responses to an opponent's initial lump
    if let Some(a) = nu.reflect {
        if x < a {
            ev.nu_jumps[1] = Some((x, a - x));
            x = a;
        }
    }
    if let Some(b) = xi.reflect {
        if x > b {
            ev.xi_jumps[1] = Some((x, x - b));
            x = b;
        }
    }
    ev.simultaneous = ev.nu_jump_mass() > 0.0 && ev.xi_jump_mass() > 0.0;
    if ev.simultaneous {
        stats.simultaneous_steps += 1;
    }
    ev.x_new = x;
    obs.events(&ev);

    let mut t = 0.0;
    for _ in 0..n_steps {
        obs.time_slice(t, x, dt);
        let (z, u1, u2) = noise.draw();
        let t_next = t + dt;
        let sig = (model.sigma)(x);
        let y = x + (model.mu)(x) * dt + sig * sq * z;
        let mut ev = StepEvents {
            t: t_next,
            x_left: y,
            dnu_c: 0.0,
            dxi_c: 0.0,
            nu_jumps: [None; 2],
            xi_jumps: [None; 2],
            x_new: y,
            simultaneous: false,
        };
        let (m, mm) = if cfg.bridge {
            bridge_extremes(x, y, sig * sig * dt, u1, u2)
        } else {
            (x.min(y), x.max(y))
        };
        let mut cur = y;
        if let Some(a) = nu.reflect {
            ev.dnu_c = (a - m).max(0.0);
            cur += ev.dnu_c;
        }
        if let Some(b) = xi.reflect {
            ev.dxi_c = (mm - b).max(0.0);
            cur -= ev.dxi_c;
        }
        // re-clip after combining the two corrections
        if let Some(a) = nu.reflect {
            if cur < a {
                ev.dnu_c += a - cur;
                cur = a;
            }
        }
        if let Some(b) = xi.reflect {
            if cur > b {
                ev.dxi_c += cur - b;
                cur = b;
            }
        }
        // scheduled counter-jumps, then the opposing reflector's response
        if !xi.fired {
            if let Some((jump_to, tr)) = &xi.counter {
                if trigger_fires(tr, t_next, cur) {
                    let size = (cur - jump_to).max(0.0);
                    if size > 0.0 {
                        ev.xi_jumps[0] = Some((cur, size));
                        cur -= size;
                    }
                    xi.fired = true;
                    if let Some(a) = nu.reflect {
                        if cur < a {
                            ev.nu_jumps[1] = Some((cur, a - cur));
                            cur = a;
                        }
                    }
                }
            }
        }
        if !nu.fired {
            if let Some((jump_to, tr)) = &nu.counter {
                if trigger_fires(tr, t_next, cur) {
                    let size = (jump_to - cur).max(0.0);
                    if size > 0.0 {
                        ev.nu_jumps[0] = Some((cur, size));
                        cur += size;
                    }
                    nu.fired = true;
                    if let Some(b) = xi.reflect {
                        if cur > b {
                            ev.xi_jumps[1] = Some((cur, cur - b));
                            cur = b;
                        }
                    }
                }
            }
        }
        ev.x_new = cur;
        ev.simultaneous = ev.nu_jump_mass() > 0.0 && ev.xi_jump_mass() > 0.0;
        if ev.simultaneous {
            stats.simultaneous_steps += 1;
        }
        if let Some((a, b, tol)) = band {
            stats.band_excursion = stats.band_excursion.max((a - y).max(y - b).max(0.0));
            if x > a + tol && y > a + tol {
                stats.flat_off_nu += ev.dnu_c;
            }
            if x < b - tol && y < b - tol {
                stats.flat_off_xi += ev.dxi_c;
            }
        }
        obs.events(&ev);
        x = cur;
        t = t_next;
        if x <= cfg.trunc.0 || x >= cfg.trunc.1 {
            stats.exited = true;
            stats.exit_time = t;
            stats.exit_discount = (-model.r * t).exp();
            break;
        }
    }
    obs.finish(t, stats.exited);
    Ok(stats)
}

/// Observer materializing the full trajectory.
struct PathRecorder {
    dt: f64,
    path: ControlPath,
}

impl PathRecorder {
    fn new(nu_level: Option<f64>, xi_level: Option<f64>, dt: f64, capacity: usize) -> Self {
        Self {
            dt,
            path: ControlPath {
                times: Vec::with_capacity(capacity),
                x: Vec::with_capacity(capacity),
                dnu_c: Vec::with_capacity(capacity),
                dnu_j: Vec::with_capacity(capacity),
                dxi_c: Vec::with_capacity(capacity),
                dxi_j: Vec::with_capacity(capacity),
                x_post: Vec::with_capacity(capacity),
                nu_jump_from: Vec::with_capacity(capacity),
                xi_jump_from: Vec::with_capacity(capacity),
                nu_level,
                xi_level,
                exit: false,
                simultaneous_jump_steps: 0,
                flat_off: (0.0, 0.0),
                band_excursion: 0.0,
            },
        }
    }
}

impl Observer for PathRecorder {
    fn events(&mut self, ev: &StepEvents) {
        let p = &mut self.path;
        p.times.push(ev.t);
        p.x.push(ev.x_left);
        p.dnu_c.push(ev.dnu_c);
        p.dxi_c.push(ev.dxi_c);
        p.dnu_j.push(ev.nu_jump_mass());
        p.dxi_j.push(ev.xi_jump_mass());
        // first jump's origin is the Zhu evaluation base; a same-instant
        // response jump is recorded by mass only (its origin equals the
        // opponent's landing point and is recoverable from x_new)
        p.nu_jump_from.push(ev.nu_jumps[0].or(ev.nu_jumps[1]).map_or(f64::NAN, |j| j.0));
        p.xi_jump_from.push(ev.xi_jumps[0].or(ev.xi_jumps[1]).map_or(f64::NAN, |j| j.0));
        p.x_post.push(ev.x_new);
        let _ = self.dt;
    }
}

/// Simulate one full path under a strategy pair, materializing the record.
/// Deterministic given (seed, dt, t_max).
pub fn simulate(
    model: &DiffusionModel,
    strat_nu: &Strategy,
    strat_xi: &Strategy,
    x0: f64,
    cfg: &SimConfig,
) -> Result<ControlPath> {
    simulate_indexed(model, strat_nu, strat_xi, x0, cfg, 0)
}

/// `simulate` with an explicit path index for stream selection.
pub fn simulate_indexed(
    model: &DiffusionModel,
    strat_nu: &Strategy,
    strat_xi: &Strategy,
    x0: f64,
    cfg: &SimConfig,
    path_idx: u64,
) -> Result<ControlPath> {
    let mut rec = PathRecorder::new(
        strat_nu.reflect_level(),
        strat_xi.reflect_level(),
        cfg.dt,
        cfg.n_steps() + 1,
    );
    let mut noise = RngNoise { rng: rng::path_rng(cfg.seed, path_idx) };
    let stats = drive(model, strat_nu, strat_xi, x0, cfg, &mut noise, &mut rec)?;
    let mut p = rec.path;
    p.exit = stats.exited;
    p.simultaneous_jump_steps = stats.simultaneous_steps;
    p.flat_off = (stats.flat_off_nu, stats.flat_off_xi);
    p.band_excursion = stats.band_excursion;
    Ok(p)
}
