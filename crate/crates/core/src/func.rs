//! Shared-closure wrappers for real functions of one variable.
//!
//! Coefficients, payoffs and fundamental solutions are all plain `f64 -> f64`
//! closures behind `Arc` so they can be cloned into parallel workers. Where a
//! derivative (or an antiderivative) is part of the contract it travels with
//! the function as an explicit closure: nothing in this crate differentiates
//! symbolically.

use std::sync::Arc;

/// A shareable scalar function.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant(c: f64) -> ScalarFn {
    Arc::new(move |_| c)
}

/// A function with first derivative, and optionally an antiderivative.
///
/// The antiderivative, when present, is any fixed primitive: only differences
/// of its values are ever used.
#[derive(Clone)]
pub struct C1Fn {
    pub f: ScalarFn,
    pub df: ScalarFn,
    pub antiderivative: Option<ScalarFn>,
}

impl C1Fn {
    pub fn new(f: ScalarFn, df: ScalarFn) -> Self {
        Self { f, df, antiderivative: None }
    }

    pub fn with_antiderivative(mut self, prim: ScalarFn) -> Self {
        self.antiderivative = Some(prim);
        self
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }
}

/// A function with two derivatives, and optionally an antiderivative.
#[derive(Clone)]
pub struct C2Fn {
    pub f: ScalarFn,
    pub df: ScalarFn,
    pub d2f: ScalarFn,
    pub antiderivative: Option<ScalarFn>,
}

impl C2Fn {
    pub fn new(f: ScalarFn, df: ScalarFn, d2f: ScalarFn) -> Self {
        Self { f, df, d2f, antiderivative: None }
    }

    pub fn with_antiderivative(mut self, prim: ScalarFn) -> Self {
        self.antiderivative = Some(prim);
        self
    }

    /// c - g(x), with derivatives and antiderivative carried through.
    pub fn constant_minus(c: f64, g: &C2Fn) -> C2Fn {
        let (f, df, d2f) = (g.f.clone(), g.df.clone(), g.d2f.clone());
        let prim = g.antiderivative.clone().map(|p| -> ScalarFn {
            Arc::new(move |x| c * x - p(x))
        });
        C2Fn {
            f: Arc::new(move |x| c - f(x)),
            df: Arc::new(move |x| -df(x)),
            d2f: Arc::new(move |x| -d2f(x)),
            antiderivative: prim,
        }
    }

    /// -g(x), with derivatives and antiderivative carried through.
    pub fn negate(g: &C2Fn) -> C2Fn {
        Self::constant_minus(0.0, g)
    }

    pub fn constant(c: f64) -> C2Fn {
        C2Fn {
            f: constant(c),
            df: constant(0.0),
            d2f: constant(0.0),
            antiderivative: Some(Arc::new(move |x| c * x)),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    #[inline]
    pub fn second(&self, x: f64) -> f64 {
        (self.d2f)(x)
    }

    pub fn c1(&self) -> C1Fn {
        C1Fn { f: self.f.clone(), df: self.df.clone(), antiderivative: self.antiderivative.clone() }
    }
}

/// Power function c * x^p with exact derivatives and antiderivative (p != -1).
pub fn power(c: f64, p: f64) -> C2Fn {
    let prim: Option<ScalarFn> = if p == -1.0 {
        Some(Arc::new(move |x: f64| c * x.ln()))
    } else {
        Some(Arc::new(move |x: f64| c * x.powf(p + 1.0) / (p + 1.0)))
    };
    C2Fn {
        f: Arc::new(move |x: f64| c * x.powf(p)),
        df: Arc::new(move |x: f64| c * p * x.powf(p - 1.0)),
        d2f: Arc::new(move |x: f64| c * p * (p - 1.0) * x.powf(p - 2.0)),
        antiderivative: prim,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_derivatives_match_finite_differences() {
        let g = power(2.5, 1.7);
        let h = 1e-6;
        for &x in &[0.4, 1.0, 3.2] {
            let fd = (g.eval(x + h) - g.eval(x - h)) / (2.0 * h);
            assert_relative_eq!(g.deriv(x), fd, max_relative = 1e-8);
            let fd2 = (g.deriv(x + h) - g.deriv(x - h)) / (2.0 * h);
            assert_relative_eq!(g.second(x), fd2, max_relative = 1e-7);
        }
    }

    #[test]
    fn constant_minus_carries_antiderivative() {
        let g = power(1.0, 2.0);
        let cm = C2Fn::constant_minus(3.0, &g);
        let prim = cm.antiderivative.as_ref().unwrap();
        // d/dx [3x - x^3/3] = 3 - x^2
        let h = 1e-6;
        let x = 1.3;
        let fd = (prim(x + h) - prim(x - h)) / (2.0 * h);
        assert_relative_eq!(fd, cm.eval(x), max_relative = 1e-8);
    }
}
