//! Control strategies for the simulated game. The reflecting kinds solve
//! the discrete one-sided Skorokhod problems; the remaining kinds form the
//! parametric deviation menu.

use serde::{Deserialize, Serialize};

/// When a deliberate strategy jump fires (once).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum JumpTrigger {
    /// First grid time >= t.
    AtTime(f64),
    /// First step whose pre-jump state is >= level.
    FirstHitAbove(f64),
    /// First step whose pre-jump state is <= level.
    FirstHitBelow(f64),
}

/// One player's control strategy. The role (increaser nu / decreaser xi) is
/// fixed by the argument position in `simulate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    /// Exert no control.
    None,
    /// Reflect the state at `level` (from above for nu, from below for xi),
    /// with the initial jump onto the barrier when the start is outside.
    ReflectAt { level: f64 },
    /// A single lump of size `amount` at t = 0+, nothing afterwards.
    LumpAtZero { amount: f64 },
    /// Reflect at `level`, and once `trigger` fires jump the state to
    /// `jump_to` (a deliberate overshoot past the opponent's barrier).
    ReflectThenCounterJump {
        level: f64,
        jump_to: f64,
        trigger: JumpTrigger,
    },
}

impl Strategy {
    pub fn reflect_level(&self) -> Option<f64> {
        match self {
            Strategy::ReflectAt { level } => Some(*level),
            Strategy::ReflectThenCounterJump { level, .. } => Some(*level),
            _ => None,
        }
    }

    pub fn lump_amount(&self) -> f64 {
        match self {
            Strategy::LumpAtZero { amount } => *amount,
            _ => 0.0,
        }
    }

    pub fn counter_jump(&self) -> Option<(f64, JumpTrigger)> {
        match self {
            Strategy::ReflectThenCounterJump { jump_to, trigger, .. } => Some((*jump_to, *trigger)),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Strategy::None => "none".into(),
            Strategy::ReflectAt { level } => format!("reflect_at({level})"),
            Strategy::LumpAtZero { amount } => format!("lump_at_zero({amount})"),
            Strategy::ReflectThenCounterJump { level, jump_to, .. } => {
                format!("reflect_then_counter_jump(level={level}, jump_to={jump_to})")
            }
        }
    }
}
