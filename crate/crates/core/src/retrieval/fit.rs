//! Damped least-squares fit of a Lorentzian plus constant offset.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::BinSpectrum;

pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Inverse-variance weights with σ² = counts, floored at one.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step ends the fit.
    pub cost_tolerance: f64,
    /// Step norm, relative to the parameter norm, that ends the fit.
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Unweighted,
            max_iterations: 200,
            cost_tolerance: 1e-10,
            step_tolerance: 1e-8,
        }
    }
}

/// Fitted `A / (1 + (ν - ν_B)² / ω²) + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub amplitude: f64,
    pub nu_b: f64,
    /// HWHM of the recorded line (Brillouin plus passband), MHz.
    pub omega_total: f64,
    pub offset: f64,
    /// Parameter covariance in the order (amplitude, nu_b, omega_total, offset).
    pub covariance: [[f64; 4]; 4],
    pub converged: bool,
    pub n_iter: usize,
    /// Largest |residual| as a percentage of the fitted peak amplitude.
    pub max_residual_pct: f64,
}

impl FitResult {
    pub fn sigma(&self, index: usize) -> f64 {
        self.covariance[index][index].max(0.0).sqrt()
    }

    pub fn eval(&self, nu: f64) -> f64 {
        let u = (nu - self.nu_b) / self.omega_total;
        self.amplitude / (1.0 + u * u) + self.offset
    }
}

/// Model and Jacobian at one point for parameters (A, c, w, b) in the
/// centred frequency frame.
#[inline]
fn model_and_gradient(p: &Vector4<f64>, x: f64) -> (f64, Vector4<f64>) {
    let (a, c, w) = (p[0], p[1], p[2]);
    let u = (x - c) / w;
    let d = 1.0 + u * u;
    let shape = 1.0 / d;
    let k = 2.0 * a * u / (w * d * d);
    (a * shape + p[3], Vector4::new(shape, k, k * u, 1.0))
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    weights: Vec<f64>,
}

impl Problem<'_> {
    fn cost(&self, p: &Vector4<f64>) -> f64 {
        0.5 * self
            .x
            .iter()
            .zip(self.y)
            .zip(&self.weights)
            .map(|((&x, &y), &wt)| {
                let r = model_and_gradient(p, x).0 - y;
                wt * r * r
            })
            .sum::<f64>()
    }

    /// Gauss-Newton normal matrix and gradient.
    fn normal_equations(&self, p: &Vector4<f64>) -> (Matrix4<f64>, Vector4<f64>) {
        let mut h = Matrix4::zeros();
        let mut g = Vector4::zeros();
        for ((&x, &y), &wt) in self.x.iter().zip(self.y).zip(&self.weights) {
            let (m, j) = model_and_gradient(p, x);
            h += wt * j * j.transpose();
            g += wt * (m - y) * j;
        }
        (h, g)
    }
}

/// Starting point from the data: peak sample, half-maximum crossings and the
/// lowest smoothed count.
fn initial_guess(x: &[f64], y: &[f64]) -> Result<Vector4<f64>> {
    let n = y.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let (imax, &peak) = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if imax == 0 || imax == n - 1 {
        return Err(Error::DegenerateSpectrum { nu_b: x[imax] });
    }
    let floor = smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let amp = (peak - floor).max(f64::MIN_POSITIVE);
    let half = floor + amp / 2.0;

    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if smooth[i] < half {
                let t = (smooth[prev] - half) / (smooth[prev] - smooth[i]);
                return Some(x[prev] + t * (x[i] - x[prev]));
            }
            prev = i;
        }
        None
    };
    let left = crossing(&mut (0..imax).rev());
    let right = crossing(&mut (imax + 1..n));
    let span = x[n - 1] - x[0];
    let step = span / (n - 1) as f64;
    let width = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (r - l),
        (Some(l), None) => x[imax] - l,
        (None, Some(r)) => r - x[imax],
        (None, None) => span / 4.0,
    }
    .clamp(0.5 * step, span);
    Ok(Vector4::new(amp, x[imax], width, floor))
}

/// Fits the Lorentzian line to a background-subtracted bin spectrum.
pub fn fit_lorentzian(spec: &BinSpectrum, init: Option<&FitResult>, opts: &FitOptions) -> Result<FitResult> {
    let n = spec.len();
    if n < MIN_POINTS {
        return Err(Error::TooFewSpectrumPoints { got: n, need: MIN_POINTS });
    }
    let origin = 0.5 * (spec.frequencies[0] + spec.frequencies[n - 1]);
    let x: Vec<f64> = spec.frequencies.iter().map(|f| f - origin).collect();
    let y = spec.signal();
    let weights = match opts.weighting {
        Weighting::Unweighted => vec![1.0; n],
        Weighting::Poisson => spec.counts.iter().map(|c| 1.0 / c.max(1.0)).collect(),
    };
    let problem = Problem {
        x: &x,
        y: &y,
        weights,
    };

    let mut p = match init {
        Some(r) => Vector4::new(r.amplitude, r.nu_b - origin, r.omega_total, r.offset),
        None => initial_guess(&x, &y)?,
    };
    let mut cost = problem.cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let (h, g) = problem.normal_equations(&p);
        loop {
            let mut damped = h;
            for i in 0..4 {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-300);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    break 'outer;
                }
                continue;
            };
            let delta = -chol.solve(&g);
            if delta.norm() <= opts.step_tolerance * (1.0 + p.norm()) {
                converged = true;
                break 'outer;
            }
            let trial = p + delta;
            let trial_cost = if trial[2] > 0.0 { problem.cost(&trial) } else { f64::INFINITY };
            if trial_cost < cost {
                let drop = cost - trial_cost;
                p = trial;
                let rel = if cost > 0.0 { drop / cost } else { 0.0 };
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-15);
                if rel < opts.cost_tolerance || cost == 0.0 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // No descent direction left: a stationary point.
                converged = true;
                break 'outer;
            }
        }
    }
    if !converged {
        return Err(Error::NotConverged { iterations });
    }

    let (amplitude, center, width, offset) = (p[0], p[1], p[2], p[3]);
    if !(width > 0.0) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::NotConverged { iterations });
    }
    let nu_b = center + origin;
    if center - width < x[0] || center + width > x[n - 1] {
        return Err(Error::DegenerateSpectrum { nu_b });
    }

    let (h, _) = problem.normal_equations(&p);
    let dof = (n - 4) as f64;
    let s2 = 2.0 * cost / dof;
    let inv = h.try_inverse().unwrap_or_else(|| Matrix4::from_element(f64::NAN));
    let mut covariance = [[0.0; 4]; 4];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            // Symmetrise against round-off.
            *c = 0.5 * (inv[(i, j)] + inv[(j, i)]) * s2;
        }
    }
    let max_residual = x
        .iter()
        .zip(&y)
        .map(|(&xi, &yi)| (model_and_gradient(&p, xi).0 - yi).abs())
        .fold(0.0, f64::max);

    Ok(FitResult {
        amplitude,
        nu_b,
        omega_total: width,
        offset,
        covariance,
        converged: true,
        n_iter: iterations,
        max_residual_pct: if amplitude != 0.0 {
            100.0 * max_residual / amplitude.abs()
        } else {
            f64::INFINITY
        },
    })
}
