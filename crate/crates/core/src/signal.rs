//! Named excitation waveforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Scalar input signal `u(t)`; applied identically to every input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Waveform {
    /// `A sin(2π f t + φ)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Constant { value: f64 },
    /// Linear chirp from `f0` to `f1` over `duration`: `A sin(2π (f0 t + (f1 - f0) t² / (2 duration)))`.
    Chirp {
        amplitude: f64,
        f0: f64,
        f1: f64,
        duration: f64,
    },
}

impl Waveform {
    /// `sin(t)`, i.e. unit amplitude at `1/(2π)` Hz.
    pub fn unit_sine_rad() -> Self {
        Waveform::Sine {
            amplitude: 1.0,
            frequency: 1.0 / (2.0 * std::f64::consts::PI),
            phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Waveform::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude.is_finite() && frequency.is_finite() && frequency >= 0.0 && phase.is_finite(),
            Waveform::Constant { value } => value.is_finite(),
            Waveform::Chirp {
                amplitude,
                f0,
                f1,
                duration,
            } => amplitude.is_finite() && f0 >= 0.0 && f1 >= 0.0 && duration > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid waveform {self:?}")))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        match *self {
            Waveform::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (TAU * frequency * t + phase).sin(),
            Waveform::Constant { value } => value,
            Waveform::Chirp {
                amplitude,
                f0,
                f1,
                duration,
            } => amplitude * (TAU * (f0 * t + (f1 - f0) * t * t / (2.0 * duration))).sin(),
        }
    }

    /// `u(t)` broadcast to `channels` inputs.
    pub fn sample(&self, t: f64, channels: usize) -> Vector {
        Vector::from_element(channels, self.value(t))
    }
}
