//! Shape-preserving piecewise-cubic interpolation (Fritsch-Carlson).
//!
//! Given data with strictly increasing abscissae, the interpolant is C^1,
//! matches the data exactly, and is monotone on every interval where the
//! data are monotone. That last property is what makes it safe to invert
//! monotone tables by interpolating the swapped coordinates.

/// Monotonicity-preserving cubic Hermite interpolant.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Endpoint-adjusted Fritsch-Carlson derivatives at the knots.
    d: Vec<f64>,
}

impl MonotoneCubic {
    /// Build the interpolant. Requires at least two knots and strictly
    /// increasing `x`; returns a description of the offending pair otherwise.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, String> {
        let n = x.len();
        if n < 2 {
            return Err(format!("need at least 2 knots, got {n}"));
        }
        if y.len() != n {
            return Err(format!("length mismatch: {} abscissae, {} ordinates", n, y.len()));
        }
        for i in 0..n - 1 {
            if !(x[i + 1] > x[i]) {
                return Err(format!(
                    "abscissae must be strictly increasing: x[{}] = {} >= x[{}] = {}",
                    i,
                    x[i],
                    i + 1,
                    x[i + 1]
                ));
            }
        }
        for (i, v) in x.iter().chain(y.iter()).enumerate() {
            if !v.is_finite() {
                return Err(format!("non-finite knot data at flat index {i}"));
            }
        }

        let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            // Interior knots: weighted harmonic mean of adjacent secants,
            // zero across local extrema.
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= 0.0 {
                    d[i] = 0.0;
                } else {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = edge_derivative(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = edge_derivative(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }

        Ok(MonotoneCubic { x, y, d })
    }

    /// Index of the interval containing `xq` (edge intervals extend outward).
    fn segment(&self, xq: f64) -> usize {
        let n = self.x.len();
        let k = self.x.partition_point(|&v| v <= xq);
        k.clamp(1, n - 1) - 1
    }

    /// Evaluate the interpolant. Outside the knot range the edge cubic is
    /// extended, so callers should keep queries inside the data.
    pub fn eval(&self, xq: f64) -> f64 {
        let i = self.segment(xq);
        let h = self.x[i + 1] - self.x[i];
        let t = (xq - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (d0, d1) = (self.d[i], self.d[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }

    /// Derivative of the interpolant.
    pub fn deriv(&self, xq: f64) -> f64 {
        let i = self.segment(xq);
        let h = self.x[i + 1] - self.x[i];
        let t = (xq - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (d0, d1) = (self.d[i], self.d[i + 1]);
        let t2 = t * t;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t2 + 6.0 * t) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }
}

/// Shape-preserving three-point endpoint derivative (non-centered formula
/// with the usual sign and magnitude limits).
fn edge_derivative(h0: f64, h1: f64, delta0: f64, delta1: f64) -> f64 {
    let mut d = ((2.0 * h0 + h1) * delta0 - h0 * delta1) / (h0 + h1);
    if d * delta0 <= 0.0 {
        d = 0.0;
    } else if delta0 * delta1 < 0.0 && d.abs() > 3.0 * delta0.abs() {
        d = 3.0 * delta0;
    }
    d
}
