//! Numeric building blocks: grids, quadrature, root finding, ODE stepping,
//! finite differences, cubic Hermite interpolation.

pub mod grid;
pub mod hermite;
pub mod ode;
pub mod quad;
pub mod roots;

/// Central difference of `f` at `x` with step `h`.
pub fn central_diff<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Second central difference of `f` at `x` with step `h`.
pub fn central_diff2<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Deterministic pairwise sum; independent of chunking and worker count.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Mean and standard error of a sample via pairwise reduction.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(v) / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pairwise_sum_matches_sequential() {
        let v: Vec<f64> = (0..1001).map(|i| (i as f64).sin()).collect();
        let seq: f64 = v.iter().sum();
        assert_relative_eq!(pairwise_sum(&v), seq, max_relative = 1e-12);
    }

    #[test]
    fn mean_stderr_on_known_sample() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_stderr(&v);
        assert_relative_eq!(m, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert_relative_eq!(se, (5.0f64 / 12.0).sqrt(), max_relative = 1e-12);
    }
}
