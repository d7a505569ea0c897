//! Cubic Hermite interpolation on a sorted node grid from (value, derivative)
//! pairs. Backs the numeric fundamental solutions.

/// Piecewise-cubic interpolant with exact values and first derivatives at the
/// nodes.
#[derive(Clone, Debug)]
pub struct CubicHermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    dys: Vec<f64>,
}

impl CubicHermite {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, dys: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len() && ys.len() == dys.len());
        assert!(xs.windows(2).all(|w| w[1] > w[0]), "nodes must be increasing");
        Self { xs, ys, dys }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.clamp(1, self.xs.len() - 1) - 1,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.dys[i] + h01 * self.ys[i + 1] + h11 * h * self.dys[i + 1]
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t2 + 6.0 * t) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        dh00 * self.ys[i] + dh10 * self.dys[i] + dh01 * self.ys[i + 1] + dh11 * self.dys[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::grid::linspace;
    use approx::assert_relative_eq;

    #[test]
    fn reproduces_cubics_exactly() {
        let f = |x: f64| x.powi(3) - 2.0 * x + 1.0;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let xs = linspace(-1.0, 2.0, 7);
        let interp = CubicHermite::new(
            xs.clone(),
            xs.iter().map(|&x| f(x)).collect(),
            xs.iter().map(|&x| df(x)).collect(),
        );
        for &x in &linspace(-1.0, 2.0, 53) {
            assert_relative_eq!(interp.eval(x), f(x), epsilon = 1e-12, max_relative = 1e-12);
            assert_relative_eq!(interp.deriv(x), df(x), epsilon = 1e-11, max_relative = 1e-11);
        }
    }

    #[test]
    fn smooth_function_error_shrinks_with_grid() {
        let f = |x: f64| x.exp();
        let err = |n: usize| {
            let xs = linspace(0.0, 1.0, n);
            let it = CubicHermite::new(
                xs.clone(),
                xs.iter().map(|&x| f(x)).collect(),
                xs.iter().map(|&x| f(x)).collect(),
            );
            linspace(0.0, 1.0, 997)
                .iter()
                .map(|&x| (it.eval(x) - f(x)).abs())
                .fold(0.0f64, f64::max)
        };
        let e1 = err(11);
        let e2 = err(21);
        assert!(e2 < e1 / 8.0, "expected ~O(h^4): {e1} vs {e2}");
    }
}
