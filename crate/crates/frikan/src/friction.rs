//! Static friction models and the six reference joint axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign-smoothing factor used by the reference axes: `sign(v)` is replaced
/// with `tanh(50 v)`.
pub const DEFAULT_SMOOTHING: f64 = 50.0;

/// Number of reference axes with known ground-truth parameters.
pub const AXIS_COUNT: usize = 6;

/// Noise levels (fraction of torque range) used for the per-joint noisy
/// variants of axes 1..6.
pub const AXIS_NOISE_LAMBDA: [f64; 6] = [0.03, 0.05, 0.08, 0.12, 0.15, 0.20];

const AXIS_TABLE: [[f64; 4]; 6] = [
    [22.0, 8.0, 0.10, 0.03],
    [23.0, 10.0, 0.13, 0.16],
    [24.0, 12.0, 0.16, 0.29],
    [25.0, 14.0, 0.19, 0.42],
    [26.0, 16.0, 0.22, 0.55],
    [27.0, 18.0, 0.25, 0.68],
];

/// Parameters of the smoothed Stribeck model
/// `F(v) = (k1 + k2 exp(-|v/k3|)) tanh(smoothing v) + k4 v`.
///
/// `k1` is the Coulomb level (N·m), `k2` the static excess over it (N·m),
/// `k3` the Stribeck velocity (rad/s), `k4` the viscous coefficient
/// (N·m·s/rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StribeckParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub smoothing: f64,
}

impl StribeckParams {
    pub fn new(k1: f64, k2: f64, k3: f64, k4: f64) -> Result<Self> {
        let p = StribeckParams { k1, k2, k3, k4, smoothing: DEFAULT_SMOOTHING };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k1, self.k2, self.k3, self.k4, self.smoothing]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.k3 <= 0.0 || self.smoothing <= 0.0 {
            return Err(Error::invalid(format!(
                "Stribeck parameters need finite values with k3 > 0 and smoothing > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Ground-truth parameters of reference axis `axis` (1-based, 1..=6).
pub fn axis_params(axis: usize) -> Result<StribeckParams> {
    if axis == 0 || axis > AXIS_COUNT {
        return Err(Error::invalid(format!(
            "axis must be in 1..={AXIS_COUNT}, got {axis}"
        )));
    }
    let row = AXIS_TABLE[axis - 1];
    StribeckParams::new(row[0], row[1], row[2], row[3])
}

/// Smoothed Stribeck friction torque at velocity `v`. Odd in `v`.
pub fn stribeck(v: f64, p: &StribeckParams) -> f64 {
    (p.k1 + p.k2 * (-(v / p.k3).abs()).exp()) * (p.smoothing * v).tanh() + p.k4 * v
}

/// Classical friction model shapes, for comparison against the full
/// Stribeck curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalKind {
    Coulomb,
    CoulombStatic,
    CoulombViscous,
    StribeckNoViscous,
}

/// Sign with `sign(0) = 0`, unlike `f64::signum`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates a classical friction model. `p.k1` is the Coulomb level,
/// `p.k1 + p.k2` the static level, `p.k4` the viscous coefficient.
///
/// `CoulombStatic` returns the static level inside a `|v| < 1e-9` band and
/// the Coulomb term elsewhere.
pub fn classical_model(kind: ClassicalKind, v: f64, p: &StribeckParams) -> f64 {
    match kind {
        ClassicalKind::Coulomb => p.k1 * sign(v),
        ClassicalKind::CoulombStatic => {
            if v.abs() < 1e-9 {
                p.k1 + p.k2
            } else {
                p.k1 * sign(v)
            }
        }
        ClassicalKind::CoulombViscous => p.k1 * sign(v) + p.k4 * v,
        ClassicalKind::StribeckNoViscous => {
            let no_viscous = StribeckParams { k4: 0.0, ..*p };
            stribeck(v, &no_viscous)
        }
    }
}
