use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::TaggedPeak;

/// Cubic polynomial in the normalised variable `x = (v - center) / scale`.
///
/// Fitting in a normalised variable keeps the least-squares problem well
/// conditioned for drive voltages of tens to hundreds of volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cubic {
    pub center: f64,
    pub scale: f64,
    /// Coefficients of x^0..x^3.
    pub coeffs: [f64; 4],
}

impl Cubic {
    /// Wraps coefficients given in powers of `v` directly.
    pub fn from_power_basis(coeffs: [f64; 4]) -> Self {
        Self {
            center: 0.0,
            scale: 1.0,
            coeffs,
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        let x = (v - self.center) / self.scale;
        let [c0, c1, c2, c3] = self.coeffs;
        c0 + x * (c1 + x * (c2 + x * c3))
    }

    pub fn derivative(&self, v: f64) -> f64 {
        let x = (v - self.center) / self.scale;
        let [_, c1, c2, c3] = self.coeffs;
        (c1 + x * (2.0 * c2 + x * 3.0 * c3)) / self.scale
    }

    /// Coefficients of v^0..v^3.
    pub fn power_basis(&self) -> [f64; 4] {
        let (c, s) = (self.center, self.scale);
        let [a0, a1, a2, a3] = self.coeffs;
        // Expand a_k ((v - c)/s)^k by the binomial theorem.
        let b1 = a1 / s;
        let b2 = a2 / (s * s);
        let b3 = a3 / (s * s * s);
        [
            a0 - b1 * c + b2 * c * c - b3 * c * c * c,
            b1 - 2.0 * b2 * c + 3.0 * b3 * c * c,
            b2 - 3.0 * b3 * c,
            b3,
        ]
    }

    /// True when the derivative keeps one strict sign over `[lo, hi]`.
    pub fn is_strictly_monotone(&self, lo: f64, hi: f64) -> bool {
        let d_lo = self.derivative(lo);
        let d_hi = self.derivative(hi);
        if !(d_lo * d_hi > 0.0) {
            return false;
        }
        // Stationary points of the derivative quadratic inside the interval.
        let [_, c1, c2, c3] = self.coeffs;
        let (a, b, c) = (3.0 * c3, 2.0 * c2, c1);
        let roots: Vec<f64> = if a.abs() < 1e-300 {
            if b.abs() < 1e-300 {
                vec![]
            } else {
                vec![-c / b]
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                vec![]
            } else {
                let sq = disc.sqrt();
                vec![(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
            }
        };
        roots
            .into_iter()
            .map(|x| x * self.scale + self.center)
            .all(|v| v <= lo || v >= hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFit {
    /// Frequency (MHz) as a function of voltage.
    pub poly: Cubic,
    /// Fitted minus assigned frequency at each peak, MHz.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub voltage_range: (f64, f64),
}

/// Least-squares cubic through tagged peaks, frequency as a function of
/// voltage. Four peaks interpolate exactly.
pub fn fit_branch(peaks: &[TaggedPeak]) -> Result<BranchFit> {
    if peaks.len() < 4 {
        return Err(Error::InsufficientPoints { got: peaks.len() });
    }
    let v_min = peaks.iter().map(|p| p.voltage).fold(f64::INFINITY, f64::min);
    let v_max = peaks.iter().map(|p| p.voltage).fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (v_min + v_max);
    let scale = 0.5 * (v_max - v_min);
    if !(scale > 0.0) {
        return Err(Error::InsufficientPoints { got: 1 });
    }

    let n = peaks.len();
    let design = DMatrix::from_fn(n, 4, |i, k| ((peaks[i].voltage - center) / scale).powi(k as i32));
    let target = DVector::from_iterator(n, peaks.iter().map(|p| p.frequency));
    let solution = design
        .svd(true, true)
        .solve(&target, 1e-14)
        .map_err(|e| Error::Parse(format!("cubic least squares failed: {e}")))?;
    let poly = Cubic {
        center,
        scale,
        coeffs: [solution[0], solution[1], solution[2], solution[3]],
    };

    if !poly.is_strictly_monotone(v_min, v_max) {
        return Err(Error::NonMonotone { v_min, v_max });
    }

    let residuals: Vec<f64> = peaks.iter().map(|p| poly.eval(p.voltage) - p.frequency).collect();
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(BranchFit {
        poly,
        residuals,
        max_residual,
        voltage_range: (v_min, v_max),
    })
}
