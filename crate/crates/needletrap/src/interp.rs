//! Monotone piecewise-cubic (Fritsch–Carlson) interpolation.
//!
//! Used for tabulated efficiency factors η(d), η_DC(d). The interpolant is
//! shape-preserving: it never overshoots the data hull, so tabulated values in
//! (0, 1] stay in (0, 1]. Queries outside the node range are an error, never
//! an extrapolation.

use crate::{Error, Result};

/// Shape-preserving cubic Hermite interpolant on strictly increasing nodes.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid("table", "x and y lengths differ"));
        }
        if x.len() < 2 {
            return Err(Error::invalid("table", "need at least two nodes"));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("table", "non-finite node"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("table", "x nodes must be strictly increasing"));
        }
        let slope = fritsch_carlson_slopes(&x, &y);
        Ok(Self { x, y, slope })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn eval(&self, xq: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(xq >= lo && xq <= hi) {
            return Err(Error::TableRange {
                x: xq,
                min: lo,
                max: hi,
            });
        }
        // interval index such that x[i] <= xq <= x[i+1]
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&xq).unwrap()) {
            Ok(k) => k.min(self.x.len() - 2),
            Err(k) => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let t = (xq - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        // cubic Hermite basis
        let t2 = t * t;
        let t3 = t2 * t;
        Ok(y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2))
    }
}

/// Node slopes per Fritsch & Carlson: weighted harmonic mean of adjacent
/// secants, zero at local extrema, one-sided secants at the ends.
fn fritsch_carlson_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m
}
