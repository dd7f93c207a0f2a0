//! Closed-form relations for the double-drive protocol: dressed gaps, their
//! noise statistics, the optimal modulation frequency and sensing resonances.
//!
//! All frequencies are angular (rad/s).

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Below this |c| the exact shift formula is replaced by its limit, Ω₁.
const C_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftPolicy {
    Resonant,
    /// Exact minimizer of the first-order gap variance.
    Correlated(f64),
    /// Exact minimizer plus the Bloch-Siegert shift Ω₂²/(4Ω₁).
    CorrelatedBs(f64),
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveConfig {
    pub omega1: f64,
    pub omega2: f64,
    pub omega1_tilde: f64,
    pub shift_policy: ShiftPolicy,
}

impl DriveConfig {
    /// Resolves `omega1_tilde` from the policy after validating amplitudes.
    pub fn new(omega1: f64, omega2: f64, policy: ShiftPolicy) -> Result<Self> {
        if !(omega1 > 0.0 && omega1.is_finite()) {
            return Err(Error::invalid(format!("omega1 must be > 0, got {omega1}")));
        }
        if !(omega2 > 0.0 && omega2 < omega1) {
            return Err(Error::invalid(format!(
                "omega2 must satisfy 0 < omega2 < omega1, got omega2={omega2}, omega1={omega1}"
            )));
        }
        if omega2 / omega1 > 0.3 {
            log::warn!(
                "omega2/omega1 = {:.3} strains the second rotating-wave approximation",
                omega2 / omega1
            );
        }
        let omega1_tilde = match policy {
            ShiftPolicy::Resonant => omega1,
            ShiftPolicy::Correlated(c) => {
                check_c(c)?;
                optimal_shift_exact(omega1, omega2, c)
            }
            ShiftPolicy::CorrelatedBs(c) => {
                check_c(c)?;
                optimal_shift_exact(omega1, omega2, c) + omega2 * omega2 / (4.0 * omega1)
            }
            ShiftPolicy::Explicit(v) => {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("explicit omega1_tilde must be > 0, got {v}")));
                }
                v
            }
        };
        if let ShiftPolicy::Correlated(c) | ShiftPolicy::CorrelatedBs(c) = policy {
            if c < 0.0 {
                log::warn!(
                    "negative cross-correlation c={c}: the shift formula is used outside its demonstrated range"
                );
            }
        }
        Ok(DriveConfig {
            omega1,
            omega2,
            omega1_tilde,
            shift_policy: policy,
        })
    }

    /// Ω₁ − Ω̃₁.
    pub fn detuning(&self) -> f64 {
        self.omega1 - self.omega1_tilde
    }
}

fn check_c(c: f64) -> Result<()> {
    if c.abs() <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "cross-correlation must satisfy |c| <= 1, got {c}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingKind {
    HighAttenuation,
    LowAttenuation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingScheme {
    pub kind: SensingKind,
    pub omega0: f64,
    pub g0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingParams {
    pub omega_g: f64,
    pub alpha_dd: f64,
    pub alpha_tilde: f64,
    pub phi: f64,
}

impl SensingParams {
    pub fn alpha(&self) -> f64 {
        self.alpha_dd * self.alpha_tilde
    }
}

/// Ω_e = √(Ω₂² + (Ω₁ − Ω̃₁)²).
pub fn omega_e(d: &DriveConfig) -> f64 {
    d.omega2.hypot(d.detuning())
}

/// Exact gap of the second-frame Hamiltonian for static relative errors.
pub fn dressed_gap(d: &DriveConfig, eps1: f64, eps2: f64) -> f64 {
    let a = d.omega2 * (1.0 + eps2);
    let b = d.detuning() + d.omega1 * eps1;
    a.hypot(b)
}

/// First-order standard deviation of the dressed gap for relative noise `sigma`
/// on both drives with cross-correlation `c`.
pub fn gap_std(d: &DriveConfig, c: f64, sigma: f64) -> f64 {
    let (w1, w2, x) = (d.omega1, d.omega2, d.detuning());
    let den = x * x + w2 * w2;
    let num = w1 * w1 * x * x + w2.powi(4) + c * 2.0 * w1 * w2 * w2 * x;
    sigma * (num / den).max(0.0).sqrt()
}

/// Modulation frequency Ω̃₁ that minimizes [`gap_std`] for correlation `c`.
///
/// Written as `Ω₁ + 2cΩ₁Ω₂²/(S + Ω₁² − Ω₂²)` with `S = √(4c²Ω₁²Ω₂² + (Ω₁² − Ω₂²)²)`,
/// which is algebraically the textbook root but free of the cancellation
/// near c = 0.
pub fn optimal_shift_exact(omega1: f64, omega2: f64, c: f64) -> f64 {
    if c.abs() < C_ZERO {
        return omega1;
    }
    if c == 1.0 {
        return omega1 + omega2 * omega2 / omega1;
    }
    let (w1s, w2s) = (omega1 * omega1, omega2 * omega2);
    let a = w1s - w2s;
    let s = (4.0 * c * c * w1s * w2s + a * a).sqrt();
    omega1 + 2.0 * c * omega1 * w2s / (s + a)
}

/// Leading-order shift `Ω₁ + cΩ₂²/Ω₁`, or `Ω₁ + (c + ¼)Ω₂²/Ω₁` with the Bloch-Siegert term.
pub fn optimal_shift_approx(omega1: f64, omega2: f64, c: f64, bloch_siegert: bool) -> f64 {
    let k = if bloch_siegert { c + 0.25 } else { c };
    omega1 + k * omega2 * omega2 / omega1
}

/// `Ω₁ + (N/4)Ω₂²/Ω₁` for every N.
pub fn shift_scan_grid(omega1: f64, omega2: f64, n_list: &[u32]) -> Result<Vec<f64>> {
    if n_list.is_empty() {
        return Err(Error::invalid("shift_scan_grid needs at least one N"));
    }
    Ok(n_list
        .iter()
        .map(|&n| omega1 + (n as f64 / 4.0) * omega2 * omega2 / omega1)
        .collect())
}

/// Signal resonance and attenuation factors for a dressed-basis sensing scheme.
pub fn sensing_params(s: &SensingScheme, d: &DriveConfig) -> Result<SensingParams> {
    if !(s.g0 >= 0.0) {
        return Err(Error::invalid(format!(
            "signal amplitude g0 must be >= 0, got {}",
            s.g0
        )));
    }
    let oe = omega_e(d);
    Ok(match s.kind {
        SensingKind::HighAttenuation => SensingParams {
            omega_g: s.omega0 - d.omega1_tilde - oe,
            alpha_dd: 0.25,
            alpha_tilde: (d.detuning() + oe) / oe,
            phi: FRAC_PI_2,
        },
        SensingKind::LowAttenuation => SensingParams {
            omega_g: s.omega0 - oe,
            alpha_dd: 0.5,
            alpha_tilde: -d.omega2 / oe,
            phi: 0.0,
        },
    })
}
