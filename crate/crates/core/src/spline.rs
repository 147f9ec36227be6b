//! Interpolation of scalar samples over strictly increasing knots.

/// Natural cubic spline when at least four knots are given, piecewise
/// linear for two or three, constant for one.
#[derive(Debug, Clone)]
pub struct Interpolant {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots; empty for linear/constant.
    m: Vec<f64>,
}

impl Interpolant {
    pub fn new(t: &[f64], y: &[f64]) -> Self {
        assert_eq!(t.len(), y.len());
        assert!(!t.is_empty(), "interpolant needs at least one knot");
        debug_assert!(t.windows(2).all(|w| w[1] > w[0]));
        let m = if t.len() >= 4 {
            natural_second_derivatives(t, y)
        } else {
            Vec::new()
        };
        Interpolant {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    pub fn is_cubic(&self) -> bool {
        !self.m.is_empty()
    }

    /// Value at `x`; outside the knot range the end segment is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        if n == 1 {
            return self.y[0];
        }
        let k = self.t.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let h = t1 - t0;
        let a = (t1 - x) / h;
        let b = (x - t0) / h;
        let lin = a * y0 + b * y1;
        if self.m.is_empty() {
            return lin;
        }
        let (m0, m1) = (self.m[k], self.m[k + 1]);
        lin + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }
}

/// Tridiagonal solve for the natural boundary condition (zero curvature at
/// both ends).
fn natural_second_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut m = vec![0.0; n];
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for i in 1..n - 1 {
        let h0 = t[i] - t[i - 1];
        let h1 = t[i + 1] - t[i];
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    // Thomas algorithm; the sub-diagonal entry of row i is h_{i-1}.
    for i in 1..inner {
        let lower = t[i + 1] - t[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (0..inner).rev() {
        let next = if i + 1 < inner { m[i + 2] } else { 0.0 };
        m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_lines() {
        let t = [0.0, 0.1, 0.25, 0.3, 0.5];
        let y: Vec<f64> = t.iter().map(|v| 3.0 * v - 1.0).collect();
        let s = Interpolant::new(&t, &y);
        assert!(s.is_cubic());
        for x in [0.0, 0.05, 0.27, 0.5, 0.7] {
            assert!((s.eval(x) - (3.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn passes_through_knots() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.0, 1.0, 0.0, -1.0, 0.5, 2.0];
        let s = Interpolant::new(&t, &y);
        for (a, b) in t.iter().zip(&y) {
            assert!((s.eval(*a) - b).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_spline_matches_hand_solution() {
        // Uniform knots 0..3 with y = (0,1,0,1): 4·M1 + M2 = -12 and
        // M1 + 4·M2 = 12 give M1 = -4, so S(0.5) = 0.5 + (0.125-0.5)·M1/6.
        let s = Interpolant::new(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0]);
        let m1 = -4.0;
        let expected = 0.5 + (0.125 - 0.5) * m1 / 6.0;
        assert!((s.eval(0.5) - expected).abs() < 1e-12);
    }

    #[test]
    fn low_order_fallbacks() {
        let c = Interpolant::new(&[1.0], &[4.0]);
        assert_eq!(c.eval(-3.0), 4.0);
        let l = Interpolant::new(&[0.0, 1.0, 2.0], &[0.0, 2.0, 2.0]);
        assert!(!l.is_cubic());
        assert_eq!(l.eval(0.5), 1.0);
        assert_eq!(l.eval(1.5), 2.0);
    }
}
