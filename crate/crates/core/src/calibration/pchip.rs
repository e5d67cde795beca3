//! Monotone piecewise cubic Hermite interpolation (Fritsch-Carlson).

use serde::{Deserialize, Serialize};

/// Interpolating curve through strictly increasing knots, with tangents
/// limited so the interpolant is monotone and never overshoots the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PchipCurve {
    pub(crate) x: Vec<f64>,
    pub(crate) y: Vec<f64>,
    pub(crate) tangents: Vec<f64>,
}

/// Fritsch-Carlson shape-preserving tangents for strictly increasing knots.
pub(crate) fn pchip_tangents(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert!(n >= 2);
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

    let mut d = vec![0.0f64; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }

    // Interior: weighted harmonic mean when neighboring secants agree in
    // sign, zero otherwise.
    for i in 1..n - 1 {
        if delta[i - 1] == 0.0 || delta[i] == 0.0 || delta[i - 1].signum() != delta[i].signum() {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }

    // Endpoints: shape-preserving three-point formula.
    d[0] = endpoint_tangent(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = endpoint_tangent(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn endpoint_tangent(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let mut d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        d = 0.0;
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        d = 3.0 * del0;
    }
    d
}

impl PchipCurve {
    /// Knots must be strictly increasing in x; monotone tangents are
    /// computed here.
    pub(crate) fn fit(x: Vec<f64>, y: Vec<f64>) -> Self {
        let tangents = pchip_tangents(&x, &y);
        Self { x, y, tangents }
    }

    pub(crate) fn x_first(&self) -> f64 {
        self.x[0]
    }

    pub(crate) fn x_last(&self) -> f64 {
        *self.x.last().unwrap()
    }

    pub(crate) fn y_first(&self) -> f64 {
        self.y[0]
    }

    pub(crate) fn y_last(&self) -> f64 {
        *self.y.last().unwrap()
    }

    /// Evaluate inside `[x_first, x_last]`. Knot queries return the knot y
    /// exactly; interval values are clamped into the bracketing knot range,
    /// which keeps the no-overshoot guarantee watertight under rounding.
    pub(crate) fn eval_inside(&self, q: f64) -> f64 {
        let n = self.x.len();
        let i = match self
            .x
            .binary_search_by(|v| v.partial_cmp(&q).expect("knots are finite"))
        {
            Ok(idx) => return self.y[idx],
            Err(0) => 0,
            Err(idx) if idx >= n => n - 2,
            Err(idx) => idx - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let t = (q - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        let v = h00 * self.y[i]
            + h10 * h * self.tangents[i]
            + h01 * self.y[i + 1]
            + h11 * h * self.tangents[i + 1];
        v.clamp(self.y[i], self.y[i + 1])
    }
}
