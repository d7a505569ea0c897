//! Scalar root bracketing/bisection and a damped Newton iteration for 2x2
//! nonlinear systems with finite-difference Jacobians.

use crate::error::Error;

/// All sign changes of `f` detected on the sample grid `xs`, refined by
/// bisection to relative tolerance `rel_tol`.
pub fn sign_changes<F: Fn(f64) -> f64>(f: &F, xs: &[f64], rel_tol: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev_x = xs[0];
    let mut prev_f = f(prev_x);
    for &x in &xs[1..] {
        let fx = f(x);
        if prev_f == 0.0 {
            out.push(prev_x);
        } else if prev_f * fx < 0.0 {
            out.push(bisect(f, prev_x, x, rel_tol));
        }
        prev_x = x;
        prev_f = fx;
    }
    if prev_f == 0.0 {
        out.push(prev_x);
    }
    out
}

/// Bisection on a bracketing interval; assumes f(a) * f(b) <= 0.
pub fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
        if (b - a).abs() <= rel_tol * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Outcome of a converged 2x2 Newton run.
#[derive(Debug, Clone, Copy)]
pub struct NewtonRoot {
    pub x: [f64; 2],
    pub residual: [f64; 2],
    pub iterations: usize,
}

/// Damped Newton for F(x) = 0, F: R^2 -> R^2, with central finite-difference
/// Jacobian and backtracking on the residual norm. Iterates are clipped to
/// `box_` = [lo1, hi1, lo2, hi2].
pub fn newton2d<F>(f: &F, start: [f64; 2], box_: [f64; 4], tol: f64, max_iter: usize) -> Option<NewtonRoot>
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let clip = |x: [f64; 2]| {
        [x[0].clamp(box_[0], box_[1]), x[1].clamp(box_[2], box_[3])]
    };
    let norm = |v: [f64; 2]| v[0].abs().max(v[1].abs());

    let mut x = clip(start);
    let mut fx = f(x);
    if !fx[0].is_finite() || !fx[1].is_finite() {
        return None;
    }
    for it in 0..max_iter {
        if norm(fx) <= tol {
            return Some(NewtonRoot { x, residual: fx, iterations: it });
        }
        // central-difference Jacobian
        let mut j = [[0.0f64; 2]; 2];
        for k in 0..2 {
            let h = 1e-7 * x[k].abs().max(1e-4);
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fp = f(xp);
            let fm = f(xm);
            for row in 0..2 {
                j[row][k] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            return None;
        }
        let dx = [
            -(j[1][1] * fx[0] - j[0][1] * fx[1]) / det,
            -(-j[1][0] * fx[0] + j[0][0] * fx[1]) / det,
        ];
        // backtracking damping
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = clip([x[0] + lambda * dx[0], x[1] + lambda * dx[1]]);
            let fc = f(cand);
            if fc[0].is_finite() && fc[1].is_finite() && norm(fc) < norm(fx) {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    if norm(fx) <= tol {
        return Some(NewtonRoot { x, residual: fx, iterations: max_iter });
    }
    None
}

/// Multi-start Newton over an `n x n` grid inside the box; returns distinct
/// roots (deduplicated at relative separation `dedup_rel`).
pub fn newton2d_multistart<F>(
    f: &F,
    box_: [f64; 4],
    n: usize,
    tol: f64,
    dedup_rel: f64,
) -> Vec<NewtonRoot>
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let mut roots: Vec<NewtonRoot> = Vec::new();
    let span0 = box_[1] - box_[0];
    let span1 = box_[3] - box_[2];
    for i in 0..n {
        for k in 0..n {
            let s = [
                box_[0] + span0 * (i as f64 + 0.5) / n as f64,
                box_[2] + span1 * (k as f64 + 0.5) / n as f64,
            ];
            if let Some(r) = newton2d(f, s, box_, tol, 80) {
                let dup = roots.iter().any(|q| {
                    (q.x[0] - r.x[0]).abs() <= dedup_rel * span0
                        && (q.x[1] - r.x[1]).abs() <= dedup_rel * span1
                });
                if !dup {
                    roots.push(r);
                }
            }
        }
    }
    roots
}

/// Residual-norm landscape of F over the multi-start grid, for error reports.
pub fn residual_landscape<F>(f: &F, box_: [f64; 4], n: usize) -> Vec<(f64, f64, f64)>
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            let a = box_[0] + (box_[1] - box_[0]) * (i as f64 + 0.5) / n as f64;
            let b = box_[2] + (box_[3] - box_[2]) * (k as f64 + 0.5) / n as f64;
            let r = f([a, b]);
            out.push((a, b, r[0].abs().max(r[1].abs())));
        }
    }
    out
}

pub(crate) fn landscape_error<F>(f: &F, box_: [f64; 4], n: usize) -> Error
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let landscape = residual_landscape(f, box_, n);
    let best = landscape
        .iter()
        .map(|t| t.2)
        .fold(f64::INFINITY, f64::min);
    Error::NoEquilibrium {
        a_lo: box_[0],
        a_hi: box_[1],
        b_lo: box_[2],
        b_hi: box_[3],
        best_residual: best,
        landscape,
    }
}
