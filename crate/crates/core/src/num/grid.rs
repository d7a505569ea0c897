//! Grid constructors used by solvers and verification passes.

/// `n` equally spaced points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let h = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    v[n - 1] = hi;
    v
}

/// `n` log-spaced points covering `[lo, hi]`, both strictly positive.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0, "geomspace needs positive endpoints");
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// Geometric sequence of `n` points marching from `start` toward `target`,
/// halving the remaining gap each step. Used for endpoint trend diagnostics;
/// the endpoint itself is never reached.
pub fn approach(start: f64, target: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    if target.is_infinite() {
        // march geometrically away from start toward +/- infinity
        let sign = if target > 0.0 { 1.0 } else { -1.0 };
        let base = start.abs().max(1.0);
        return (0..n).map(|i| sign * base * 1.5f64.powi(i as i32)).collect();
    }
    let mut gap = target - start;
    let mut v = Vec::with_capacity(n);
    let mut x = start;
    for _ in 0..n {
        v.push(x);
        gap *= 0.5;
        x = target - gap;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_endpoints() {
        let g = linspace(-1.0, 2.0, 7);
        assert_eq!(g.len(), 7);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[6], 2.0);
    }

    #[test]
    fn geomspace_is_log_uniform() {
        let g = geomspace(0.1, 10.0, 5);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - g[1] / g[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn approach_converges_monotonically() {
        let g = approach(1.0, 0.0, 10);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!(*g.last().unwrap() > 0.0);
        let h = approach(1.0, f64::INFINITY, 6);
        assert!(h.windows(2).all(|w| w[1] > w[0]));
    }
}
