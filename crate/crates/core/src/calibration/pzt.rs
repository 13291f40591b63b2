use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eval_fpi, FpiEtalon};

use super::{Branch, CalibrationTrace, Cubic};

/// Ground-truth PZT response used to synthesise calibration data: one cubic
/// voltage→frequency polynomial per branch, in powers of volts. The branches
/// meet at both ends of the drive range so the loop closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PztModel {
    pub v_min: f64,
    pub v_max: f64,
    /// MHz as a cubic in volts, coefficients of v^0..v^3.
    pub up: [f64; 4],
    pub down: [f64; 4],
}

impl Default for PztModel {
    fn default() -> Self {
        // Seven interference orders inside a 0-100 V sweep, 12 % loop opening.
        Self::with_loop(0.0, 100.0, 7.0 * 4020.0, -2010.0, 0.12, 0.1)
    }
}

impl PztModel {
    /// Builds a closed loop from shape parameters. With `u` the normalised
    /// drive in [0, 1], the branches are
    /// `offset + span * (u ∓ opening*u(1-u) + cubic*u(1-u)(2u-1))`,
    /// the up branch lagging below the down branch.
    pub fn with_loop(v_min: f64, v_max: f64, span_mhz: f64, offset_mhz: f64, opening: f64, cubic: f64) -> Self {
        let width = v_max - v_min;
        let branch = |sign: f64| {
            // Coefficients in u: u*(1 - sign*opening - cubic) + u^2*(sign*opening + 3*cubic) - 2*cubic*u^3
            let in_u = [
                0.0,
                1.0 - sign * opening - cubic,
                sign * opening + 3.0 * cubic,
                -2.0 * cubic,
            ];
            let mut coeffs = Cubic {
                center: v_min,
                scale: width,
                coeffs: in_u.map(|c| c * span_mhz),
            }
            .power_basis();
            coeffs[0] += offset_mhz;
            coeffs
        };
        Self {
            v_min,
            v_max,
            up: branch(1.0),
            down: branch(-1.0),
        }
    }

    pub fn coefficients(&self, branch: Branch) -> [f64; 4] {
        match branch {
            Branch::Up => self.up,
            Branch::Down => self.down,
        }
    }

    pub fn frequency(&self, v: f64, branch: Branch) -> f64 {
        Cubic::from_power_basis(self.coefficients(branch)).eval(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > self.v_min) {
            return Err(Error::validation("pzt.v_max", "must exceed v_min"));
        }
        let span = (self.frequency(self.v_max, Branch::Up) - self.frequency(self.v_min, Branch::Up)).abs();
        let tol = 1e-6 * span.max(1.0);
        for v in [self.v_min, self.v_max] {
            if (self.frequency(v, Branch::Up) - self.frequency(v, Branch::Down)).abs() > tol {
                return Err(Error::validation("pzt", "up and down branches do not close at the drive limits"));
            }
        }
        for branch in [Branch::Up, Branch::Down] {
            if !Cubic::from_power_basis(self.coefficients(branch)).is_strictly_monotone(self.v_min, self.v_max) {
                return Err(Error::validation(format!("pzt.{branch}"), "branch is not strictly monotone"));
            }
        }
        Ok(())
    }
}

/// Noise added to synthetic calibration traces, standard deviations relative
/// to unit peak transmission.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceNoise {
    pub additive: f64,
    pub multiplicative: f64,
}

impl TraceNoise {
    pub fn additive(sigma: f64) -> Self {
        Self {
            additive: sigma,
            multiplicative: 0.0,
        }
    }

    pub fn multiplicative(sigma: f64) -> Self {
        Self {
            additive: 0.0,
            multiplicative: sigma,
        }
    }
}

/// Oscilloscope trace of the interferometer transmission while the PZT sweeps
/// one branch over its full drive range.
pub fn simulate_calibration_trace(
    model: &PztModel,
    etalon: &FpiEtalon,
    branch: Branch,
    n_samples: usize,
    noise: TraceNoise,
    seed: u64,
) -> CalibrationTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match branch {
        Branch::Up => 1,
        Branch::Down => 2,
    });
    let n = n_samples.max(3);
    let fsr = etalon.fsr_mhz;
    let samples = (0..n)
        .map(|i| {
            let frac = i as f64 / (n - 1) as f64;
            let frac = match branch {
                Branch::Up => frac,
                Branch::Down => 1.0 - frac,
            };
            let v = model.v_min + frac * (model.v_max - model.v_min);
            let f = model.frequency(v, branch);
            let folded = f - fsr * (f / fsr).round();
            let clean = eval_fpi(etalon, folded);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            (v, clean * (1.0 + noise.multiplicative * z1) + noise.additive * z2)
        })
        .collect();
    CalibrationTrace { branch, samples }
}
