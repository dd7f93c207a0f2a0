//! Ornstein-Uhlenbeck noise: exact updates, traces and correlated pairs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Stationary OU process described by its correlation time and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub tau: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl OuParams {
    pub fn new(tau: f64, sigma: f64, dt: f64) -> Result<Self> {
        let p = OuParams { tau, sigma, dt };
        p.validate()?;
        Ok(p)
    }

    /// Builds the process from its diffusion constant, `σ² = Dτ/2`.
    pub fn from_diffusion(tau: f64, diffusion: f64, dt: f64) -> Result<Self> {
        if !(diffusion >= 0.0) {
            return Err(Error::invalid(format!("diffusion must be >= 0, got {diffusion}")));
        }
        Self::new(tau, (diffusion * tau / 2.0).sqrt(), dt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("OU tau must be > 0, got {}", self.tau)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("OU sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("OU dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn diffusion(&self) -> f64 {
        2.0 * self.sigma * self.sigma / self.tau
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        OuParams { dt, ..*self }
    }
}

/// Environmental dephasing `δ(t)` (rad/s) plus the relative drive errors `ε₁, ε₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub delta: OuParams,
    pub eps: OuParams,
    pub c: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        self.delta.validate()?;
        self.eps.validate()?;
        if !(self.c.abs() <= 1.0) {
            return Err(Error::invalid(format!(
                "cross-correlation must satisfy |c| <= 1, got {}",
                self.c
            )));
        }
        if self.eps.sigma > 0.2 {
            log::warn!(
                "relative drive noise sigma {} is not small; perturbative shift formulas degrade",
                self.eps.sigma
            );
        }
        Ok(())
    }

    /// No noise at all (sigma zero on every process).
    pub fn silent(seed: u64) -> Self {
        let quiet = OuParams {
            tau: 1.0,
            sigma: 0.0,
            dt: 1.0,
        };
        NoiseConfig {
            delta: quiet,
            eps: quiet,
            c: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl NoiseTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.values.len().saturating_sub(1)) as f64
    }

    /// Writes `t_s,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t_s", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            wtr.write_record([fmt_f64(i as f64 * self.dt), fmt_f64(*v)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.12e}")
}

/// Which process of a realization a random stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Delta = 0,
    Eps1 = 1,
    EpsInd = 2,
}

/// Independent generator for one (realization, role) pair.
///
/// ChaCha streams are addressed directly, so the result does not depend on
/// which worker draws first.
pub fn stream_rng(seed: u64, realization: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((realization << 2) | role as u64);
    rng
}

/// One exact OU update: `x e^{−dt/τ} + n √((Dτ/2)(1 − e^{−2dt/τ}))`.
pub fn ou_step(x: f64, dt: f64, tau: f64, diffusion: f64, n: f64) -> Result<f64> {
    if !(tau > 0.0) || !(dt > 0.0) {
        return Err(Error::invalid(format!(
            "ou_step needs tau > 0 and dt > 0 (tau={tau}, dt={dt})"
        )));
    }
    if !(diffusion >= 0.0) {
        return Err(Error::invalid(format!("ou_step needs D >= 0, got {diffusion}")));
    }
    Ok(OuStepper::new(dt, tau, diffusion).step(x, n))
}

/// Precomputed decay and kick for repeated exact updates at fixed `dt`.
#[derive(Debug, Clone, Copy)]
pub struct OuStepper {
    decay: f64,
    kick: f64,
}

impl OuStepper {
    pub fn new(dt: f64, tau: f64, diffusion: f64) -> Self {
        let r = dt / tau;
        let decay = (-r).exp();
        // 1 − e^{−2r} without cancellation for tiny r
        let one_minus = -(-2.0 * r).exp_m1();
        OuStepper {
            decay,
            kick: (diffusion * tau / 2.0 * one_minus).sqrt(),
        }
    }

    pub fn from_params(p: &OuParams) -> Self {
        Self::new(p.dt, p.tau, p.diffusion())
    }

    #[inline]
    pub fn step(&self, x: f64, n: f64) -> f64 {
        x * self.decay + n * self.kick
    }
}

/// Stationary OU trace of `n_steps` samples spaced by `params.dt`.
pub fn make_ou_trace<R: Rng + ?Sized>(params: &OuParams, n_steps: usize, rng: &mut R) -> Result<NoiseTrace> {
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::invalid("make_ou_trace needs n_steps >= 1"));
    }
    let mut values = Vec::with_capacity(n_steps);
    if params.sigma == 0.0 {
        values.resize(n_steps, 0.0);
    } else {
        let stepper = OuStepper::from_params(params);
        let mut x = params.sigma * rng.sample::<f64, _>(StandardNormal);
        values.push(x);
        for _ in 1..n_steps {
            x = stepper.step(x, rng.sample(StandardNormal));
            values.push(x);
        }
    }
    Ok(NoiseTrace { dt: params.dt, values })
}

/// `(ε₁, ε₂)` with `ε₂ = c ε₁ + √(1−c²) ε_ind`; both marginals are `OU(eps)`.
pub fn make_correlated_pair<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    eps: &OuParams,
    c: f64,
    n_steps: usize,
    rng_eps1: &mut R1,
    rng_ind: &mut R2,
) -> Result<(NoiseTrace, NoiseTrace)> {
    if !(c.abs() <= 1.0) {
        return Err(Error::invalid(format!(
            "cross-correlation must satisfy |c| <= 1, got {c}"
        )));
    }
    let e1 = make_ou_trace(eps, n_steps, rng_eps1)?;
    let s = (1.0 - c * c).max(0.0).sqrt();
    let values = if s == 0.0 {
        e1.values.iter().map(|&v| c * v).collect()
    } else {
        let ind = make_ou_trace(eps, n_steps, rng_ind)?;
        e1.values
            .iter()
            .zip(ind.values.iter())
            .map(|(&a, &b)| c * a + s * b)
            .collect()
    };
    let e2 = NoiseTrace { dt: eps.dt, values };
    Ok((e1, e2))
}

/// All three traces of one Monte Carlo realization.
pub fn realization_traces(cfg: &NoiseConfig, realization: u64, n_steps: usize) -> Result<[NoiseTrace; 3]> {
    let mut rd = stream_rng(cfg.seed, realization, StreamRole::Delta);
    let mut r1 = stream_rng(cfg.seed, realization, StreamRole::Eps1);
    let mut ri = stream_rng(cfg.seed, realization, StreamRole::EpsInd);
    let delta = make_ou_trace(&cfg.delta, n_steps, &mut rd)?;
    let (e1, e2) = make_correlated_pair(&cfg.eps, cfg.c, n_steps, &mut r1, &mut ri)?;
    Ok([delta, e1, e2])
}
