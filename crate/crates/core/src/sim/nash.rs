//! Nash certification by unilateral deviation testing with common random
//! numbers. The menu is a parametric family (threshold shifts, inaction,
//! lump jumps); passing it is falsification-style evidence for equilibrium,
//! not a proof over the full admissible class.

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionModel;
use crate::error::Result;
use crate::num::mean_stderr;
use crate::sim::mc::{aggregate, control_payoff_paths, ControlMcResult, PayoffVariant};
use crate::sim::{SimConfig, Strategy};
use crate::stopping::ThresholdEquilibrium;

/// One deviation's outcome. `diff_*` refer to per-path payoff differences
/// (deviation minus equilibrium) under shared noise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationRow {
    pub player: u8,
    pub strategy: String,
    pub psi_dev: f64,
    pub stderr_dev: f64,
    pub diff_mean: f64,
    pub diff_stderr: f64,
    /// diff_mean <= 3 diff_stderr: the deviation does not improve the payoff
    /// beyond noise.
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NashReport {
    pub x0: f64,
    pub psi1_eq: f64,
    pub psi2_eq: f64,
    pub stderr1_eq: f64,
    pub stderr2_eq: f64,
    pub rows: Vec<DeviationRow>,
    /// Spearman rank correlation between |level - threshold| and the
    /// deviation payoff over the threshold rows, per player (diagnostic).
    pub spearman_player1: Option<f64>,
    pub spearman_player2: Option<f64>,
    pub all_pass: bool,
    pub n_paths: usize,
    pub seed: u64,
}

/// Deviation menus for both players: 8 threshold shifts each, inaction, and
/// a lump jump at zero.
pub fn default_menu(eq: &ThresholdEquilibrium, trunc: (f64, f64)) -> (Vec<Strategy>, Vec<Strategy>) {
    let (a, b) = (eq.a_star, eq.b_star);
    let span = b - a;
    let fracs = [-0.35, -0.2, -0.1, -0.04, 0.04, 0.1, 0.2, 0.35];
    let p1: Vec<Strategy> = fracs
        .iter()
        .map(|f| Strategy::ReflectAt {
            level: (a + f * span).clamp(trunc.0 + 0.02 * span, b - 0.05 * span),
        })
        .chain([Strategy::None, Strategy::LumpAtZero { amount: 0.25 * span }])
        .collect();
    let p2: Vec<Strategy> = fracs
        .iter()
        .map(|f| Strategy::ReflectAt {
            level: (b + f * span).clamp(a + 0.05 * span, trunc.1 - 0.02 * span),
        })
        .chain([Strategy::None, Strategy::LumpAtZero { amount: 0.25 * span }])
        .collect();
    (p1, p2)
}

fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..n {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Run the deviation suite around the equilibrium reflection pair. For each
/// deviation, payoffs are re-simulated under the same per-path streams and
/// compared pathwise.
#[allow(clippy::too_many_arguments)]
pub fn verify_nash(
    model: &DiffusionModel,
    variant: &PayoffVariant,
    eq: &ThresholdEquilibrium,
    x0: f64,
    menu: Option<(Vec<Strategy>, Vec<Strategy>)>,
    n_paths: usize,
    cfg: &SimConfig,
) -> Result<NashReport> {
    let nu_star = Strategy::ReflectAt { level: eq.a_star };
    let xi_star = Strategy::ReflectAt { level: eq.b_star };
    let (menu1, menu2) = menu.unwrap_or_else(|| default_menu(eq, cfg.trunc));

    let eq_paths = control_payoff_paths(model, variant, &nu_star, &xi_star, x0, n_paths, cfg)?;
    let eq_agg: ControlMcResult = aggregate(&eq_paths);

    let mut rows = Vec::new();
    let mut lv1 = Vec::new();
    let mut pv1 = Vec::new();
    let mut lv2 = Vec::new();
    let mut pv2 = Vec::new();

    for dev in &menu1 {
        let dev_paths = control_payoff_paths(model, variant, dev, &xi_star, x0, n_paths, cfg)?;
        let diffs: Vec<f64> = dev_paths
            .iter()
            .zip(&eq_paths)
            .map(|(d, e)| d.psi1 - e.psi1)
            .collect();
        let (dm, ds) = mean_stderr(&diffs);
        let vals: Vec<f64> = dev_paths.iter().map(|p| p.psi1).collect();
        let (m, s) = mean_stderr(&vals);
        let pass = dm <= 3.0 * ds.max(0.0) || dm <= 0.0;
        if let Strategy::ReflectAt { level } = dev {
            lv1.push((level - eq.a_star).abs());
            pv1.push(m);
        }
        rows.push(DeviationRow {
            player: 1,
            strategy: dev.describe(),
            psi_dev: m,
            stderr_dev: s,
            diff_mean: dm,
            diff_stderr: ds,
            pass,
        });
    }
    for dev in &menu2 {
        let dev_paths = control_payoff_paths(model, variant, &nu_star, dev, x0, n_paths, cfg)?;
        let diffs: Vec<f64> = dev_paths
            .iter()
            .zip(&eq_paths)
            .map(|(d, e)| d.psi2 - e.psi2)
            .collect();
        let (dm, ds) = mean_stderr(&diffs);
        let vals: Vec<f64> = dev_paths.iter().map(|p| p.psi2).collect();
        let (m, s) = mean_stderr(&vals);
        let pass = dm <= 3.0 * ds.max(0.0) || dm <= 0.0;
        if let Strategy::ReflectAt { level } = dev {
            lv2.push((level - eq.b_star).abs());
            pv2.push(m);
        }
        rows.push(DeviationRow {
            player: 2,
            strategy: dev.describe(),
            psi_dev: m,
            stderr_dev: s,
            diff_mean: dm,
            diff_stderr: ds,
            pass,
        });
    }

    let all_pass = rows.iter().all(|r| r.pass);
    Ok(NashReport {
        x0,
        psi1_eq: eq_agg.psi1,
        psi2_eq: eq_agg.psi2,
        stderr1_eq: eq_agg.stderr1,
        stderr2_eq: eq_agg.stderr2,
        rows,
        spearman_player1: spearman(&lv1, &pv1),
        spearman_player2: spearman(&lv2, &pv2),
        all_pass,
        n_paths,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_detects_monotone_association() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [10.0, 8.0, 7.0, 3.0, 1.0];
        assert!((spearman(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        let yr = [1.0, 3.0, 5.0, 7.0, 11.0];
        assert!((spearman(&xs, &yr).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_deviation_gives_zero_difference() {
        use crate::pollution::{self, PollutionConfig};
        let cfgp = PollutionConfig::reference();
        let model = cfgp.model().unwrap();
        let variant = pollution::running_profit_variant(&cfgp);
        let eq = ThresholdEquilibrium {
            a_star: 0.8,
            b_star: 2.1,
            v1_coeffs: (0.0, 0.0),
            v2_coeffs: (0.0, 0.0),
            residuals: [0.0; 2],
            residuals_scaled: [0.0; 2],
            smooth_fit: [0.0; 2],
            other_roots: vec![],
            multiple_roots: false,
        };
        let cfg = SimConfig { dt: 2e-3, t_max: 2.0, seed: 3, bridge: true, trunc: (0.01, 50.0) };
        let menu = (vec![Strategy::ReflectAt { level: 0.8 }], vec![Strategy::ReflectAt { level: 2.1 }]);
        let rep = verify_nash(&model, &variant, &eq, 1.2, Some(menu), 64, &cfg).unwrap();
        for row in &rep.rows {
            assert_eq!(row.diff_mean, 0.0, "row {row:?}");
            assert!(row.pass);
        }
    }
}
