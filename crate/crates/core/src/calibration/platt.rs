//! Platt scaling: one-dimensional logistic regression on raw scores.

use crate::data::PairLabelSet;
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 100;
const GRADIENT_TOLERANCE: f64 = 1e-10;

/// Numerically stable logistic function, kept strictly inside (0, 1).
pub(crate) fn sigmoid(z: f64) -> f64 {
    let v = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// log(1 + exp(z)) without overflow.
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Ridge-regularized negative Bernoulli log-likelihood of sigma(a*s + b).
fn objective(pairs: &[(f64, bool)], a: f64, b: f64) -> f64 {
    let mut nll = 0.0;
    for &(s, label) in pairs {
        let z = a * s + b;
        let y = if label { 1.0 } else { 0.0 };
        nll += log1p_exp(z) - y * z;
    }
    nll + 0.5 * RIDGE * (a * a + b * b)
}

/// Fit sigma(a*s + b) to the labeled pairs by damped Newton iteration.
///
/// Raw 0/1 targets with an L2 ridge; the ridge keeps the optimum finite
/// under perfect separation. The fit succeeds even when scores
/// anti-correlate with labels; callers inspect the slope for that.
pub(crate) fn fit_platt_raw(pairs: &PairLabelSet) -> Result<(f64, f64)> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "platt fit needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.n_positive() == 0 || pairs.n_negative() == 0 {
        return Err(Error::InsufficientClasses(
            "platt fit needs both a positive and a negative pair".into(),
        ));
    }

    let data = pairs.pairs();
    let mut a = 0.0f64;
    let mut b = 0.0f64;
    let mut fval = objective(data, a, b);

    for iteration in 0..MAX_ITERATIONS {
        let mut g1 = RIDGE * a;
        let mut g2 = RIDGE * b;
        let mut h11 = RIDGE;
        let mut h12 = 0.0f64;
        let mut h22 = RIDGE;
        for &(s, label) in data {
            let p = sigmoid(a * s + b);
            let y = if label { 1.0 } else { 0.0 };
            let r = p - y;
            let w = p * (1.0 - p);
            g1 += r * s;
            g2 += r;
            h11 += w * s * s;
            h12 += w * s;
            h22 += w;
        }
        let gnorm = (g1 * g1 + g2 * g2).sqrt();
        if gnorm <= GRADIENT_TOLERANCE {
            return Ok((a, b));
        }

        let det = h11 * h22 - h12 * h12;
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::Convergence {
                iterations: iteration,
                message: "singular Hessian in platt fit".into(),
            });
        }
        let da = -(h22 * g1 - h12 * g2) / det;
        let db = -(h11 * g2 - h12 * g1) / det;

        // Inside the quadratic basin the objective improvement drops below
        // representable resolution while the gradient still needs polishing;
        // there the bare Newton step is safe and a line search would stall.
        let predicted_decrease = -0.5 * (g1 * da + g2 * db);
        if predicted_decrease <= 1e-12 * (1.0 + fval.abs()) {
            a += da;
            b += db;
            fval = objective(data, a, b);
            continue;
        }

        // Backtracking keeps Newton from overshooting in the saturated
        // regime far from the optimum.
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..60 {
            let na = a + step * da;
            let nb = b + step * db;
            let nf = objective(data, na, nb);
            if nf < fval {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence {
                iterations: iteration,
                message: format!("platt line search stalled with gradient norm {gnorm:.3e}"),
            });
        }
    }

    // Final check after the iteration budget.
    let mut g1 = RIDGE * a;
    let mut g2 = RIDGE * b;
    for &(s, label) in data {
        let p = sigmoid(a * s + b);
        let y = if label { 1.0 } else { 0.0 };
        g1 += (p - y) * s;
        g2 += p - y;
    }
    let gnorm = (g1 * g1 + g2 * g2).sqrt();
    if gnorm <= GRADIENT_TOLERANCE {
        Ok((a, b))
    } else {
        Err(Error::Convergence {
            iterations: MAX_ITERATIONS,
            message: format!("platt gradient norm {gnorm:.3e} above tolerance"),
        })
    }
}
