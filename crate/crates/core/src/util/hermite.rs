//! Quintic Hermite segment matching value, slope and curvature at both ends.

/// Polynomial blend on `[a, b]` with prescribed `(f, f', f'')` at the ends.
#[derive(Debug, Clone, Copy)]
pub struct QuinticHermite {
    a: f64,
    h: f64,
    /// Coefficients of the quintic in the normalized variable `t = (x-a)/h`.
    c: [f64; 6],
}

impl QuinticHermite {
    pub fn new(a: f64, b: f64, left: (f64, f64, f64), right: (f64, f64, f64)) -> Self {
        let h = b - a;
        let (p0, m0, s0) = (left.0, left.1 * h, left.2 * h * h);
        let (p1, m1, s1) = (right.0, right.1 * h, right.2 * h * h);
        // f(t) = p0 H0 + m0 H1 + s0 H2 + p1 H3 + m1 H4 + s1 H5 expanded in t.
        let c0 = p0;
        let c1 = m0;
        let c2 = s0 / 2.0;
        let c3 = -10.0 * p0 - 6.0 * m0 - 1.5 * s0 + 10.0 * p1 - 4.0 * m1 + 0.5 * s1;
        let c4 = 15.0 * p0 + 8.0 * m0 + 1.5 * s0 - 15.0 * p1 + 7.0 * m1 - s1;
        let c5 = -6.0 * p0 - 3.0 * m0 - 0.5 * s0 + 6.0 * p1 - 3.0 * m1 + 0.5 * s1;
        QuinticHermite {
            a,
            h,
            c: [c0, c1, c2, c3, c4, c5],
        }
    }

    fn t(&self, x: f64) -> f64 {
        (x - self.a) / self.h
    }

    pub fn value(&self, x: f64) -> f64 {
        let t = self.t(x);
        let c = &self.c;
        ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let t = self.t(x);
        let c = &self.c;
        ((((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1]) / self.h
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let t = self.t(x);
        let c = &self.c;
        (((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2]) / (self.h * self.h)
    }

    /// Integral from the left endpoint to `x`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let t = self.t(x);
        let c = &self.c;
        let mut acc = 0.0;
        let mut tp = t;
        for (i, &ci) in c.iter().enumerate() {
            acc += ci * tp / (i + 1) as f64;
            tp *= t;
        }
        acc * self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matches_end_data() {
        let f = |x: f64| (-x).exp();
        let blend = QuinticHermite::new(
            1.0,
            2.0,
            (f(1.0), -f(1.0), f(1.0)),
            (f(2.0), -f(2.0), f(2.0)),
        );
        assert_relative_eq!(blend.value(1.0), f(1.0), epsilon = 1e-14);
        assert_relative_eq!(blend.value(2.0), f(2.0), epsilon = 1e-13);
        assert_relative_eq!(blend.derivative(1.0), -f(1.0), epsilon = 1e-12);
        assert_relative_eq!(blend.derivative(2.0), -f(2.0), epsilon = 1e-12);
        assert_relative_eq!(blend.second_derivative(1.0), f(1.0), epsilon = 1e-11);
        assert_relative_eq!(blend.second_derivative(2.0), f(2.0), epsilon = 1e-11);
        // The blend of e^{-x} data stays within a few percent of e^{-x}.
        assert!((blend.value(1.5) - f(1.5)).abs() < 0.01);
    }
}
