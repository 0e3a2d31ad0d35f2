//! Small closed-form building blocks used to describe initial data and
//! forcing in configuration files.

use serde::{Deserialize, Serialize};

use crate::spectral::{PeriodicField, PeriodicGrid, TWO_PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sin,
    Cos,
}

/// `amplitude · sin|cos(2π k·x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub amplitude: f64,
    pub k: [i64; 2],
    pub phase: Phase,
}

impl Harmonic {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let arg = TWO_PI * (self.k[0] as f64 * x1 + self.k[1] as f64 * x2);
        self.amplitude
            * match self.phase {
                Phase::Sin => arg.sin(),
                Phase::Cos => arg.cos(),
            }
    }
}

/// `mean + Σ harmonics`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSum {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub terms: Vec<Harmonic>,
}

impl HarmonicSum {
    pub fn single(mean: f64, amplitude: f64, k: i64, phase: Phase) -> Self {
        HarmonicSum {
            mean,
            terms: vec![Harmonic {
                amplitude,
                k: [k, 0],
                phase,
            }],
        }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        self.mean + self.terms.iter().map(|h| h.eval(x1, x2)).sum::<f64>()
    }

    pub fn sample(&self, grid: PeriodicGrid) -> PeriodicField {
        PeriodicField::from_fn(grid, |x1, x2| self.eval(x1, x2))
    }
}

/// Smooth start-up of a forcing amplitude, `1 − exp(−(t/t_ramp)²)`; flat
/// (zero value and slope) at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeRamp {
    Constant,
    Gaussian { t_ramp: f64 },
}

impl Default for TimeRamp {
    fn default() -> Self {
        TimeRamp::Constant
    }
}

impl TimeRamp {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeRamp::Constant => 1.0,
            TimeRamp::Gaussian { t_ramp } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-(t / t_ramp).powi(2)).exp_m1()
                }
            }
        }
    }
}
