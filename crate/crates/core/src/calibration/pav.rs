//! Isotonic regression via pool-adjacent-violators.

use serde::{Deserialize, Serialize};

use crate::data::PairLabelSet;
use crate::error::{Error, Result};

/// Monotone step fit produced by PAV, reduced to one knot per block.
///
/// Knot x is the mean of the raw scores pooled into the block, knot y the
/// block's fitted value; both coordinates are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    knots_x: Vec<f64>,
    knots_y: Vec<f64>,
    x_min: f64,
    x_max: f64,
}

impl IsotonicFit {
    /// Build directly from knots; validates strict monotonicity in both
    /// coordinates and y within [0, 1].
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InsufficientData("isotonic fit needs knots".into()));
        }
        for (i, &(x, y)) in knots.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Range(format!("non-finite knot at index {i}")));
            }
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::Range(format!("knot y {y} outside [0, 1]")));
            }
            if i > 0 && (x <= knots[i - 1].0 || y <= knots[i - 1].1) {
                return Err(Error::Range(format!(
                    "knots must increase strictly in both coordinates at index {i}"
                )));
            }
        }
        let x_min = knots[0].0;
        let x_max = knots[knots.len() - 1].0;
        let (knots_x, knots_y) = knots.into_iter().unzip();
        Ok(Self {
            knots_x,
            knots_y,
            x_min,
            x_max,
        })
    }

    pub fn knots_x(&self) -> &[f64] {
        &self.knots_x
    }

    pub fn knots_y(&self) -> &[f64] {
        &self.knots_y
    }

    pub fn n_knots(&self) -> usize {
        self.knots_x.len()
    }

    /// Range of raw scores seen during fitting.
    pub fn training_range(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    pub(crate) fn with_training_range(mut self, x_min: f64, x_max: f64) -> Self {
        self.x_min = x_min;
        self.x_max = x_max;
        self
    }
}

struct Block {
    x_sum: f64,
    y_mean: f64,
    weight: f64,
}

/// Pool samples with exactly equal scores into weighted points; required for
/// the fit to be a well-defined function of the score.
fn pool_ties(sorted: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].0;
        let mut sum = 0.0;
        let mut count = 0usize;
        while i < sorted.len() && sorted[i].0 == x {
            sum += sorted[i].1;
            count += 1;
            i += 1;
        }
        xs.push(x);
        ys.push(sum / count as f64);
        ws.push(count as f64);
    }
    (xs, ys, ws)
}

/// Weighted PAV over pre-pooled points; returns blocks and, per point, the
/// index of the block it belongs to.
fn pav_blocks(xs: &[f64], ys: &[f64], ws: &[f64]) -> (Vec<Block>, Vec<usize>) {
    let n = xs.len();
    let mut blocks: Vec<Block> = Vec::with_capacity(n);
    // Number of pooled points per block, used to map points back to blocks.
    let mut spans: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        blocks.push(Block {
            x_sum: xs[i] * ws[i],
            y_mean: ys[i],
            weight: ws[i],
        });
        spans.push(1);
        while blocks.len() > 1 {
            let last = blocks.len() - 1;
            if blocks[last - 1].y_mean > blocks[last].y_mean {
                let b = blocks.pop().unwrap();
                let s = spans.pop().unwrap();
                let a = &mut blocks[last - 1];
                let w = a.weight + b.weight;
                a.y_mean = (a.y_mean * a.weight + b.y_mean * b.weight) / w;
                a.x_sum += b.x_sum;
                a.weight = w;
                *spans.last_mut().unwrap() += s;
            } else {
                break;
            }
        }
    }
    let mut point_block = Vec::with_capacity(n);
    for (bi, &span) in spans.iter().enumerate() {
        for _ in 0..span {
            point_block.push(bi);
        }
    }
    (blocks, point_block)
}

/// Least-squares non-decreasing fit of labels against scores.
///
/// Ties in score are pre-pooled by averaging; adjacent blocks with equal
/// fitted values are merged, so the resulting knots increase strictly.
pub fn fit_isotonic_pav(pairs: &PairLabelSet) -> Result<IsotonicFit> {
    let (fit, _) = fit_isotonic_pav_with_values(pairs)?;
    Ok(fit)
}

/// As [`fit_isotonic_pav`], also returning the fitted value of every input
/// pair (in input order).
pub fn fit_isotonic_pav_with_values(pairs: &PairLabelSet) -> Result<(IsotonicFit, Vec<f64>)> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "isotonic fit needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.n_positive() == 0 || pairs.n_negative() == 0 {
        return Err(Error::InsufficientClasses(
            "isotonic fit needs both a positive and a negative pair".into(),
        ));
    }

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| {
        pairs.pairs()[a]
            .0
            .partial_cmp(&pairs.pairs()[b].0)
            .expect("pair scores are finite")
    });
    let sorted: Vec<(f64, f64)> = order
        .iter()
        .map(|&i| {
            let (score, label) = pairs.pairs()[i];
            (score, if label { 1.0 } else { 0.0 })
        })
        .collect();

    let (xs, ys, ws) = pool_ties(&sorted);
    let (blocks, point_block) = pav_blocks(&xs, &ys, &ws);

    // Merge adjacent blocks whose fitted values came out equal.
    let mut merged: Vec<Block> = Vec::with_capacity(blocks.len());
    let mut block_remap = Vec::with_capacity(blocks.len());
    for block in blocks {
        match merged.last_mut() {
            Some(last) if last.y_mean == block.y_mean => {
                last.x_sum += block.x_sum;
                last.weight += block.weight;
            }
            _ => merged.push(block),
        }
        block_remap.push(merged.len() - 1);
    }

    let knots: Vec<(f64, f64)> = merged
        .iter()
        .map(|b| (b.x_sum / b.weight, b.y_mean.clamp(0.0, 1.0)))
        .collect();
    let fit = IsotonicFit::from_knots(knots)?
        .with_training_range(xs[0], xs[xs.len() - 1]);

    // Fitted value per original pair: sorted position -> pooled point ->
    // block -> merged block.
    let mut point_of_sorted = Vec::with_capacity(sorted.len());
    {
        let mut point = 0usize;
        let mut prev: Option<f64> = None;
        for &(score, _) in &sorted {
            if let Some(p) = prev {
                if score != p {
                    point += 1;
                }
            }
            prev = Some(score);
            point_of_sorted.push(point);
        }
    }
    let mut fitted = vec![0.0f64; pairs.len()];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        let block = block_remap[point_block[point_of_sorted[sorted_pos]]];
        fitted[orig] = merged[block].y_mean.clamp(0.0, 1.0);
    }
    Ok((fit, fitted))
}
