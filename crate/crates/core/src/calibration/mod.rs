//! Score calibration: strictly increasing maps from raw scores to [0, 1].
//!
//! Two methods are provided. Isotonic regression (pool-adjacent-violators)
//! followed by monotone cubic interpolation through the block centers, and
//! Platt scaling (logistic regression on the raw score). Both preserve
//! ranking, which is why calibration never changes single-score top-1
//! predictions inside the training range.

mod pav;
mod pchip;
mod platt;

pub use pav::{fit_isotonic_pav, fit_isotonic_pav_with_values, IsotonicFit};
pub use pchip::PchipCurve;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PairLabelSet, ScoreKind, ScoreMatrix};
use crate::error::{Error, Result};

/// Slope of the linear extension outside the training range. Near-flat but
/// non-zero so strict monotonicity survives out-of-range queries.
const EXTENSION_SLOPE: f64 = 1e-6;

/// Calibration method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    IsotonicPchip,
    Platt,
}

impl CalibrationMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CalibrationMethod::IsotonicPchip => "isotonic_pchip",
            CalibrationMethod::Platt => "platt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "isotonic_pchip" | "isotonic" => Ok(CalibrationMethod::IsotonicPchip),
            "platt" | "logistic" => Ok(CalibrationMethod::Platt),
            other => Err(Error::Config(format!("unknown calibration method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum CalibratorKind {
    IsotonicPchip(PchipCurve),
    Platt { slope: f64, intercept: f64 },
}

/// Fitted strictly increasing map from raw score to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrator {
    kind: CalibratorKind,
    x_min: f64,
    x_max: f64,
    decreasing: bool,
}

impl Calibrator {
    pub fn method(&self) -> CalibrationMethod {
        match self.kind {
            CalibratorKind::IsotonicPchip(_) => CalibrationMethod::IsotonicPchip,
            CalibratorKind::Platt { .. } => CalibrationMethod::Platt,
        }
    }

    /// Range of raw scores seen during fitting.
    pub fn training_range(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    /// True when the fitted map decreases (platt slope <= 0). Fusion
    /// rejects such calibrators because they silently invert rankings.
    pub fn is_decreasing(&self) -> bool {
        self.decreasing
    }

    /// Platt coefficients when this is a platt calibrator.
    pub fn platt_coefficients(&self) -> Option<(f64, f64)> {
        match self.kind {
            CalibratorKind::Platt { slope, intercept } => Some((slope, intercept)),
            _ => None,
        }
    }

    /// Apply the calibration map to one raw score.
    pub fn apply_scalar(&self, score: f64) -> f64 {
        match &self.kind {
            CalibratorKind::Platt { slope, intercept } => {
                platt::sigmoid(slope * score + intercept)
            }
            CalibratorKind::IsotonicPchip(curve) => {
                if score < curve.x_first() {
                    (curve.y_first() + (score - curve.x_first()) * EXTENSION_SLOPE)
                        .clamp(0.0, 1.0)
                } else if score > curve.x_last() {
                    (curve.y_last() + (score - curve.x_last()) * EXTENSION_SLOPE).clamp(0.0, 1.0)
                } else {
                    curve.eval_inside(score)
                }
            }
        }
    }
}

/// Interpolate the isotonic block centers with a monotone cubic, yielding a
/// strictly increasing calibrator.
pub fn build_pchip(fit: &IsotonicFit) -> Result<Calibrator> {
    if fit.n_knots() < 2 {
        return Err(Error::InsufficientData(format!(
            "pchip needs at least 2 knots, got {}",
            fit.n_knots()
        )));
    }
    let mut x = fit.knots_x().to_vec();
    let y = fit.knots_y().to_vec();
    let (x_min, x_max) = fit.training_range();
    // Pin the boundary knots to the ends of the training range. Boundary
    // blocks routinely carry the values 0 and 1, so a curve ending at the
    // block centers would go flat over the tails of the training range and
    // lose the strict increase that makes ranking survive calibration.
    if x_min < x[0] {
        x[0] = x_min;
    }
    let last = x.len() - 1;
    if x_max > x[last] {
        x[last] = x_max;
    }
    let curve = PchipCurve::fit(x, y);
    Ok(Calibrator {
        kind: CalibratorKind::IsotonicPchip(curve),
        x_min,
        x_max,
        decreasing: false,
    })
}

/// Fit a logistic calibrator on the labeled pairs.
pub fn fit_platt(pairs: &PairLabelSet) -> Result<Calibrator> {
    let (slope, intercept) = platt::fit_platt_raw(pairs)?;
    let (x_min, x_max) = score_range(pairs);
    Ok(Calibrator {
        kind: CalibratorKind::Platt { slope, intercept },
        x_min,
        x_max,
        decreasing: slope <= 0.0,
    })
}

fn score_range(pairs: &PairLabelSet) -> (f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for &(s, _) in pairs.pairs() {
        x_min = x_min.min(s);
        x_max = x_max.max(s);
    }
    (x_min, x_max)
}

/// A fitted calibrator plus any warnings raised during fitting.
#[derive(Debug, Clone)]
pub struct CalibratorFit {
    pub calibrator: Calibrator,
    pub warnings: Vec<String>,
}

/// Fit the requested method. A single-block isotonic fit cannot be made
/// strictly increasing, so that degenerate case falls back to platt scaling
/// with a warning.
pub fn fit_calibrator(method: CalibrationMethod, pairs: &PairLabelSet) -> Result<CalibratorFit> {
    match method {
        CalibrationMethod::Platt => Ok(CalibratorFit {
            calibrator: fit_platt(pairs)?,
            warnings: Vec::new(),
        }),
        CalibrationMethod::IsotonicPchip => {
            let fit = fit_isotonic_pav(pairs)?;
            if fit.n_knots() < 2 {
                let calibrator = fit_platt(pairs)?;
                return Ok(CalibratorFit {
                    calibrator,
                    warnings: vec![
                        "isotonic fit collapsed to a single block; fell back to platt scaling"
                            .to_string(),
                    ],
                });
            }
            Ok(CalibratorFit {
                calibrator: build_pchip(&fit)?,
                warnings: Vec::new(),
            })
        }
    }
}

/// Element-wise calibration of a raw score matrix.
pub fn apply_calibrator(cal: &Calibrator, scores: &ScoreMatrix) -> Result<ScoreMatrix> {
    match scores.kind() {
        ScoreKind::RawGlobal | ScoreKind::RawLocal => {}
        other => {
            return Err(Error::Kind(format!(
                "cannot calibrate a {other:?} matrix; expected a raw kind"
            )))
        }
    }
    let n_database = scores.n_database();
    let mut values = vec![0.0f64; scores.values().len()];
    values
        .par_chunks_mut(n_database.max(1))
        .zip(scores.values().par_chunks(n_database.max(1)))
        .for_each(|(out, row)| {
            for (o, &s) in out.iter_mut().zip(row.iter()) {
                *o = cal.apply_scalar(s);
            }
        });
    ScoreMatrix::new(ScoreKind::Calibrated, scores.n_query(), n_database, values)
}

/// On-disk calibrator document. Self-describing JSON; floats use shortest
/// exact decimal form so round-trips are value-exact.
#[derive(Serialize, Deserialize)]
struct CalibratorDoc {
    format: String,
    version: u32,
    method: String,
    x_min: f64,
    x_max: f64,
    decreasing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<PchipCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    platt: Option<PlattDoc>,
}

#[derive(Serialize, Deserialize)]
struct PlattDoc {
    slope: f64,
    intercept: f64,
}

const CALIBRATOR_FORMAT: &str = "fusecal-calibrator";

impl Calibrator {
    pub fn to_json(&self) -> String {
        let doc = CalibratorDoc {
            format: CALIBRATOR_FORMAT.to_string(),
            version: 1,
            method: self.method().name().to_string(),
            x_min: self.x_min,
            x_max: self.x_max,
            decreasing: self.decreasing,
            curve: match &self.kind {
                CalibratorKind::IsotonicPchip(curve) => Some(curve.clone()),
                _ => None,
            },
            platt: match &self.kind {
                CalibratorKind::Platt { slope, intercept } => Some(PlattDoc {
                    slope: *slope,
                    intercept: *intercept,
                }),
                _ => None,
            },
        };
        serde_json::to_string_pretty(&doc).expect("calibrator serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CalibratorDoc = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "calibrator",
            message: e.to_string(),
        })?;
        if doc.format != CALIBRATOR_FORMAT {
            return Err(Error::Format {
                what: "calibrator",
                message: format!("unexpected document format '{}'", doc.format),
            });
        }
        if doc.version != 1 {
            return Err(Error::Format {
                what: "calibrator",
                message: format!("unsupported version {}", doc.version),
            });
        }
        let kind = match (doc.method.as_str(), doc.curve, doc.platt) {
            ("isotonic_pchip", Some(curve), None) => CalibratorKind::IsotonicPchip(curve),
            ("platt", None, Some(p)) => CalibratorKind::Platt {
                slope: p.slope,
                intercept: p.intercept,
            },
            (method, _, _) => {
                return Err(Error::Format {
                    what: "calibrator",
                    message: format!("method '{method}' does not match payload"),
                })
            }
        };
        Ok(Calibrator {
            kind,
            x_min: doc.x_min,
            x_max: doc.x_max,
            decreasing: doc.decreasing,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
