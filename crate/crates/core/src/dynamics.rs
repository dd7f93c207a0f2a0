//! Monte Carlo propagation in the first interaction picture.
//!
//! Each realization draws its own noise traces, integrates the Hamiltonian
//! with midpoint-sampled piecewise-constant SU(2) steps and records the Bloch
//! rotation at the sample times. Ensemble averages are taken over these
//! rotation matrices: the averaged map `M(t)` fixes the evolved density matrix
//! of every initial state at once.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{fmt_f64, realization_traces, NoiseConfig, NoiseTrace};
use crate::protocol::{omega_e, sensing_params, DriveConfig, SensingScheme, ShiftPolicy};
use crate::smallmat::{pauli_hamiltonian, SmallOperator, Su2};

/// Integration steps per period of the modulation frequency.
pub const STEPS_PER_PERIOD: usize = 40;
/// Noise samples per shortest correlation time.
const NOISE_SAMPLES_PER_TAU: f64 = 50.0;
/// Default number of log-spaced sample times.
pub const DEFAULT_SAMPLES: usize = 400;

/// Sign of the σy signal component relative to σx; fixed by transforming a
/// linearly polarized lab-frame field into the frame rotating at ω₀.
const SIGNAL_SENSE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Free,
    SingleDrive,
    DoubleDrive,
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::Free => "free",
            ProtocolKind::SingleDrive => "single_drive",
            ProtocolKind::DoubleDrive => "double_drive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub drive: DriveConfig,
    pub noise: NoiseConfig,
    pub signal: Option<SensingScheme>,
    pub dt: f64,
    pub duration: f64,
}

impl ProtocolSpec {
    /// Spec with the default step, one fortieth of the modulation period.
    pub fn new(kind: ProtocolKind, drive: DriveConfig, noise: NoiseConfig, duration: f64) -> Result<Self> {
        let spec = ProtocolSpec {
            kind,
            drive,
            noise,
            signal: None,
            dt: default_dt(&drive),
            duration,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_signal(mut self, signal: SensingScheme) -> Self {
        self.signal = Some(signal);
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        let period = TAU / self.drive.omega1_tilde;
        if !(self.dt > 0.0) || self.dt > period / 20.0 * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "dt={:e} s must be positive and at most 1/20 of the modulation period {:e} s",
                self.dt, period
            )));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(Error::invalid(format!(
                "duration {:e} s must be finite and at least dt={:e} s",
                self.duration, self.dt
            )));
        }
        if let Some(s) = &self.signal {
            if !(s.g0 >= 0.0) {
                return Err(Error::invalid("signal amplitude g0 must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Effective amplitudes after the kind has switched drives off.
    fn amplitudes(&self) -> (f64, f64) {
        match self.kind {
            ProtocolKind::Free => (0.0, 0.0),
            ProtocolKind::SingleDrive => (self.drive.omega1, 0.0),
            ProtocolKind::DoubleDrive => (self.drive.omega1, self.drive.omega2),
        }
    }

    /// Detuning Δ = ω₀ − ω_g of the signal seen in the first frame.
    fn signal_detuning(&self) -> Result<Option<(f64, f64)>> {
        match &self.signal {
            None => Ok(None),
            Some(s) => {
                let p = sensing_params(s, &self.drive)?;
                Ok(Some((s.g0, s.omega0 - p.omega_g)))
            }
        }
    }
}

/// One fortieth of the modulation period, so the cosine is sampled at a fixed
/// set of phases.
pub fn default_dt(drive: &DriveConfig) -> f64 {
    TAU / drive.omega1_tilde / STEPS_PER_PERIOD as f64
}

/// `(δ/2)σz + (Ω₁(1+ε₁)/2)σx + Ω₂(1+ε₂)cos(Ω̃₁t)σy`, plus the signal if present.
pub fn h_first_ip(t: f64, spec: &ProtocolSpec, delta: f64, eps1: f64, eps2: f64) -> Result<SmallOperator> {
    let (w1, w2) = spec.amplitudes();
    let mut hx = w1 * (1.0 + eps1);
    let mut hy = 2.0 * w2 * (1.0 + eps2) * (spec.drive.omega1_tilde * t).cos();
    if let Some((g0, det)) = spec.signal_detuning()? {
        let (s, c) = (det * t).sin_cos();
        hx += g0 * c;
        hy += SIGNAL_SENSE * g0 * s;
    }
    pauli_hamiltonian(hx, hy, delta)
}

/// Gauss-Legendre nodes of one step.
const GAUSS_C1: f64 = 0.5 - 0.288_675_134_594_812_9;
const GAUSS_C2: f64 = 0.5 + 0.288_675_134_594_812_9;
/// Weights of the fourth-order commutator-free Magnus step.
const CF4_A1: f64 = (3.0 - 2.0 * 1.732_050_807_568_877_2) / 12.0;
const CF4_A2: f64 = (3.0 + 2.0 * 1.732_050_807_568_877_2) / 12.0;

/// Precomputed per-run tables shared by all realizations.
///
/// A step is `exp(−i dt (a₁H₁ + a₂H₂)) · exp(−i dt (a₂H₁ + a₁H₂))` with `H₁, H₂`
/// at the two Gauss nodes (fourth order). Noise is constant within a step, so
/// only the σy drive term and the signal differ between the nodes.
struct Plan {
    n_steps: usize,
    hold: usize,
    w1: f64,
    w2x2: f64,
    /// cos(Ω̃₁t) weights of the first and second exponential, per step phase.
    cos_table: Option<Vec<(f64, f64)>>,
    omega1_tilde: f64,
    dt: f64,
    signal: Option<(f64, f64)>,
}

impl Plan {
    fn new(spec: &ProtocolSpec, n_steps: usize) -> Result<Self> {
        spec.validate()?;
        let (w1, w2) = spec.amplitudes();
        let per = TAU / (spec.drive.omega1_tilde * spec.dt);
        let k = per.round();
        let cos_table = if k >= 1.0 && (per - k).abs() < 1e-9 * per {
            let k = k as usize;
            Some(
                (0..k)
                    .map(|i| {
                        let c1 = (TAU * (i as f64 + GAUSS_C1) / k as f64).cos();
                        let c2 = (TAU * (i as f64 + GAUSS_C2) / k as f64).cos();
                        (CF4_A2 * c1 + CF4_A1 * c2, CF4_A1 * c1 + CF4_A2 * c2)
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(Plan {
            n_steps,
            hold: hold_steps(&spec.noise, spec.dt, n_steps),
            w1,
            w2x2: 2.0 * w2,
            cos_table,
            omega1_tilde: spec.drive.omega1_tilde,
            dt: spec.dt,
            signal: spec.signal_detuning()?,
        })
    }

    fn noise_len(&self) -> usize {
        self.n_steps / self.hold + 2
    }

    #[inline]
    fn cos_weights(&self, i: usize) -> (f64, f64) {
        match &self.cos_table {
            Some(tab) => tab[i % tab.len()],
            None => {
                let w = self.omega1_tilde * self.dt;
                let c1 = (w * (i as f64 + GAUSS_C1)).cos();
                let c2 = (w * (i as f64 + GAUSS_C2)).cos();
                (CF4_A2 * c1 + CF4_A1 * c2, CF4_A1 * c1 + CF4_A2 * c2)
            }
        }
    }

    /// Runs one realization; `record(sample, U)` is called once the step
    /// count reaches `marks[sample]` (0 meaning before the first step).
    fn run<F: FnMut(usize, &Su2)>(&self, traces: &[NoiseTrace; 3], marks: &[usize], mut record: F) {
        let [delta, e1, e2] = traces;
        let mut u = Su2::IDENTITY;
        let mut next = 0;
        while next < marks.len() && marks[next] == 0 {
            record(next, &u);
            next += 1;
        }
        let last = marks.last().copied().unwrap_or(0).min(self.n_steps);
        for i in 0..last {
            let b = i / self.hold;
            // weights of each exponential sum to ½, hence the halved constant terms
            let d = 0.5 * delta.values[b];
            let hx = 0.5 * self.w1 * (1.0 + e1.values[b]);
            let hy0 = self.w2x2 * (1.0 + e2.values[b]);
            let (ca, cb) = self.cos_weights(i);
            let (mut hxa, mut hya, mut hxb, mut hyb) = (hx, hy0 * ca, hx, hy0 * cb);
            if let Some((g0, det)) = self.signal {
                let t1 = (i as f64 + GAUSS_C1) * self.dt;
                let t2 = (i as f64 + GAUSS_C2) * self.dt;
                let (s1, c1) = (det * t1).sin_cos();
                let (s2, c2) = (det * t2).sin_cos();
                hxa += g0 * (CF4_A2 * c1 + CF4_A1 * c2);
                hya += SIGNAL_SENSE * g0 * (CF4_A2 * s1 + CF4_A1 * s2);
                hxb += g0 * (CF4_A1 * c1 + CF4_A2 * c2);
                hyb += SIGNAL_SENSE * g0 * (CF4_A1 * s1 + CF4_A2 * s2);
            }
            let first = Su2::from_hamiltonian(hxa, hya, d, self.dt);
            let second = Su2::from_hamiltonian(hxb, hyb, d, self.dt);
            u = second.compose(&first.compose(&u));
            // keep |U| = 1 against rounding drift over millions of steps
            if i & 0xffff == 0xffff {
                u = u.normalized();
            }
            while next < marks.len() && marks[next] == i + 1 {
                record(next, &u);
                next += 1;
            }
        }
    }
}

/// Number of integration steps a noise sample is held for.
fn hold_steps(noise: &NoiseConfig, dt: f64, n_steps: usize) -> usize {
    let mut tau_min = f64::INFINITY;
    if noise.delta.sigma > 0.0 {
        tau_min = tau_min.min(noise.delta.tau);
    }
    if noise.eps.sigma > 0.0 {
        tau_min = tau_min.min(noise.eps.tau);
    }
    if !tau_min.is_finite() {
        return n_steps.max(1);
    }
    ((tau_min / NOISE_SAMPLES_PER_TAU / dt).floor() as usize).max(1)
}

fn draw_traces(spec: &ProtocolSpec, plan: &Plan, realization: u64) -> Result<[NoiseTrace; 3]> {
    let dtn = plan.hold as f64 * spec.dt;
    let cfg = NoiseConfig {
        delta: spec.noise.delta.with_dt(dtn),
        eps: spec.noise.eps.with_dt(dtn),
        ..spec.noise
    };
    realization_traces(&cfg, realization, plan.noise_len())
}

/// Time-ordered propagator up to `t_end` for given noise traces.
///
/// The traces must share one spacing that is a whole multiple of `spec.dt`.
pub fn propagate(spec: &ProtocolSpec, traces: &[NoiseTrace; 3], t_end: f64) -> Result<SmallOperator> {
    spec.validate()?;
    let n = (t_end / spec.dt - 1e-9).ceil().max(0.0) as usize;
    let tdt = traces[0].dt;
    if traces.iter().any(|t| t.dt != tdt) {
        return Err(Error::invalid("noise traces must share one spacing"));
    }
    let hold = (tdt / spec.dt).round().max(1.0) as usize;
    if ((hold as f64) * spec.dt - tdt).abs() > 1e-9 * tdt {
        return Err(Error::invalid(format!(
            "noise spacing {tdt:e} s is not a multiple of dt {:e} s",
            spec.dt
        )));
    }
    let needed = if n == 0 { 1 } else { (n - 1) / hold + 1 };
    if traces.iter().any(|t| t.len() < needed) {
        return Err(Error::invalid(format!(
            "noise traces cover {} samples but t_end={t_end:e} s needs {needed}",
            traces.iter().map(|t| t.len()).min().unwrap_or(0)
        )));
    }
    let mut plan = Plan::new(&spec.with_duration(t_end.max(spec.dt)), n.max(1))?;
    plan.hold = hold;
    let mut out = Su2::IDENTITY;
    plan.run(traces, &[n], |_, u| out = *u);
    Ok(out.to_operator())
}

/// Sample times snapped to the step grid: t = 0 plus `n` log-spaced points
/// from one step to the duration, duplicates removed.
pub fn default_sample_times(spec: &ProtocolSpec, n: usize) -> Vec<f64> {
    let steps = log_step_grid(spec.n_steps(), n);
    steps.iter().map(|&k| k as f64 * spec.dt).collect()
}

fn log_step_grid(n_steps: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0usize];
    let hi = n_steps.max(1) as f64;
    for j in 0..n {
        let f = if n > 1 { j as f64 / (n - 1) as f64 } else { 1.0 };
        let k = hi.powf(f).round() as usize;
        if k > *out.last().unwrap() {
            out.push(k);
        }
    }
    out
}

/// Equally spaced sample times at multiples of `period` up to the duration.
pub fn stroboscopic_times(spec: &ProtocolSpec, period: f64) -> Vec<f64> {
    let n = (spec.duration / period).floor() as usize;
    (0..=n).map(|k| k as f64 * period).collect()
}

fn times_to_steps(spec: &ProtocolSpec, times: &[f64]) -> Result<Vec<usize>> {
    if times.is_empty() {
        return Err(Error::invalid("at least one sample time is required"));
    }
    let mut steps: Vec<usize> = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("sample time {t} must be finite and >= 0")));
        }
        let k = (t / spec.dt).round() as usize;
        if let Some(&prev) = steps.last() {
            if k < prev {
                return Err(Error::invalid("sample times must be increasing"));
            }
            if k == prev {
                continue;
            }
        }
        steps.push(k);
    }
    Ok(steps)
}

pub type Mat3 = [[f64; 3]; 3];

fn mat_flat(m: &Mat3) -> [f64; 9] {
    let mut f = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            f[3 * i + j] = m[i][j];
        }
    }
    f
}

fn unflat(f: &[f64; 9]) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = f[3 * i + j];
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    AvgFidelity,
    FidelityX,
    FidelityY,
    FidelityZ,
    Population0,
}

impl CurveKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::AvgFidelity => "avg_fidelity",
            CurveKind::FidelityX => "fidelity_x",
            CurveKind::FidelityY => "fidelity_y",
            CurveKind::FidelityZ => "fidelity_z",
            CurveKind::Population0 => "population_0",
        }
    }

    pub fn axis(axis: Axis) -> Self {
        match axis {
            Axis::X => CurveKind::FidelityX,
            Axis::Y => CurveKind::FidelityY,
            Axis::Z => CurveKind::FidelityZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// How fidelities are read off the averaged Bloch map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// `(1 + M_kk)/2` as defined, oscillating with the coherent drive rotation.
    Raw,
    /// `(1 + P_kk)/2` with `M = QP` the polar decomposition: the coherent
    /// rotation `Q` is divided out, leaving the contraction.
    Envelope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_realizations: usize,
    pub kind: CurveKind,
}

impl FidelityCurve {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Writes `t_s,value,stderr` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t_s", "value", "stderr"])?;
        for i in 0..self.times.len() {
            wtr.write_record([fmt_f64(self.times[i]), fmt_f64(self.values[i]), fmt_f64(self.stderr[i])])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, kind: CurveKind) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (ti, vi) = match (col("t_s"), col("value")) {
            (Some(t), Some(v)) => (t, v),
            _ => return Err(Error::invalid("curve CSV needs t_s and value columns")),
        };
        let si = col("stderr");
        let mut c = FidelityCurve {
            times: vec![],
            values: vec![],
            stderr: vec![],
            n_realizations: 0,
            kind,
        };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("bad number on data row {}", line + 1)))
            };
            c.times.push(parse(ti)?);
            c.values.push(parse(vi)?);
            c.stderr.push(match si {
                Some(i) => parse(i)?,
                None => 0.0,
            });
        }
        if c.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("curve times must be strictly increasing"));
        }
        Ok(c)
    }
}

/// Bloch rotations of every realization at every sample time.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub times: Vec<f64>,
    /// `per_realization[r][s]` is the flattened rotation of realization `r` at sample `s`.
    per_realization: Vec<Vec<[f64; 9]>>,
    mean: Vec<Mat3>,
    omega1_tilde: f64,
}

/// Runs `n_realizations` independent trajectories and keeps their Bloch rotations.
///
/// Realizations are spread over the current rayon pool; results are summed in
/// realization order, so the output does not depend on the number of workers.
pub fn run_ensemble(spec: &ProtocolSpec, n_realizations: usize, sample_times: &[f64]) -> Result<Ensemble> {
    if n_realizations == 0 {
        return Err(Error::invalid("n_realizations must be >= 1"));
    }
    let marks = times_to_steps(spec, sample_times)?;
    let n_steps = *marks.last().unwrap();
    let plan = Plan::new(spec, n_steps.max(1))?;
    let per_realization: Vec<Vec<[f64; 9]>> = (0..n_realizations as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<[f64; 9]>> {
            let traces = draw_traces(spec, &plan, r)?;
            let mut out = vec![[0.0; 9]; marks.len()];
            plan.run(&traces, &marks, |k, u| out[k] = mat_flat(&u.bloch_rotation()));
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut sums = vec![[0.0f64; 9]; marks.len()];
    for rows in &per_realization {
        for (acc, r) in sums.iter_mut().zip(rows) {
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
    }
    let inv = 1.0 / n_realizations as f64;
    let mean = sums
        .iter()
        .map(|s| {
            let mut f = *s;
            f.iter_mut().for_each(|v| *v *= inv);
            unflat(&f)
        })
        .collect();
    Ok(Ensemble {
        times: marks.iter().map(|&k| k as f64 * spec.dt).collect(),
        per_realization,
        mean,
        omega1_tilde: spec.drive.omega1_tilde,
    })
}

impl Ensemble {
    pub fn n_realizations(&self) -> usize {
        self.per_realization.len()
    }

    pub fn mean_map(&self, sample: usize) -> Mat3 {
        self.mean[sample]
    }

    /// Fidelity of one initial axis (or the average over all three).
    pub fn curve(&self, kind: CurveKind, est: Estimator) -> Result<FidelityCurve> {
        let axes: &[usize] = match kind {
            CurveKind::AvgFidelity => &[0, 1, 2],
            CurveKind::FidelityX => &[0],
            CurveKind::FidelityY => &[1],
            CurveKind::FidelityZ => &[2],
            CurveKind::Population0 => {
                return Err(Error::invalid(
                    "population curves come from a projection, not a fidelity",
                ))
            }
        };
        let n = self.n_realizations();
        let mut values = Vec::with_capacity(self.times.len());
        let mut stderr = Vec::with_capacity(self.times.len());
        for s in 0..self.times.len() {
            let q = match est {
                Estimator::Raw => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                Estimator::Envelope => polar(&self.mean[s])?.0,
            };
            // per-realization estimator: (1 + (QᵀR)_kk)/2 averaged over the chosen axes
            let f_of = |r: &[f64; 9]| -> f64 {
                let mut acc = 0.0;
                for &k in axes {
                    let mut d = 0.0;
                    for j in 0..3 {
                        d += q[j][k] * r[3 * j + k];
                    }
                    acc += 0.5 * (1.0 + d);
                }
                acc / axes.len() as f64
            };
            let mut mean = 0.0;
            for rows in &self.per_realization {
                mean += f_of(&rows[s]);
            }
            mean /= n as f64;
            let mut var = 0.0;
            if n > 1 {
                for rows in &self.per_realization {
                    let d = f_of(&rows[s]) - mean;
                    var += d * d;
                }
                var /= (n - 1) as f64;
            }
            values.push(mean);
            stderr.push((var / n as f64).sqrt());
        }
        Ok(FidelityCurve {
            times: self.times.clone(),
            values,
            stderr,
            n_realizations: n,
            kind,
        })
    }

    /// Probability of finding the state prepared along `axis0` still along the
    /// same direction of the frame that rotates about x at Ω̃₁.
    pub fn dressed_population(&self, axis0: [f64; 3]) -> FidelityCurve {
        let n = self.n_realizations();
        let norm = (axis0[0] * axis0[0] + axis0[1] * axis0[1] + axis0[2] * axis0[2]).sqrt();
        let a = [axis0[0] / norm, axis0[1] / norm, axis0[2] / norm];
        let mut values = Vec::with_capacity(self.times.len());
        let mut stderr = Vec::with_capacity(self.times.len());
        for (s, &t) in self.times.iter().enumerate() {
            let (sn, cs) = (self.omega1_tilde * t).sin_cos();
            let m = [a[0], cs * a[1] - sn * a[2], sn * a[1] + cs * a[2]];
            let p_of = |r: &[f64; 9]| -> f64 {
                let mut d = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        d += m[i] * r[3 * i + j] * a[j];
                    }
                }
                0.5 * (1.0 + d)
            };
            let ps: Vec<f64> = self.per_realization.iter().map(|rows| p_of(&rows[s])).collect();
            let mean = ps.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                ps.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            values.push(mean);
            stderr.push((var / n as f64).sqrt());
        }
        FidelityCurve {
            times: self.times.clone(),
            values,
            stderr,
            n_realizations: n,
            kind: CurveKind::Population0,
        }
    }
}

/// Polar decomposition `M = Q P` of a real 3×3 matrix. Directions with
/// vanishing singular value get a zero column in `Q`.
pub fn polar(m: &Mat3) -> Result<(Mat3, Mat3)> {
    use num_complex::Complex64;
    let mut mtm = SmallOperator::zeros(3);
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += m[k][i] * m[k][j];
            }
            mtm.set(i, j, Complex64::new(acc, 0.0));
        }
    }
    let mtm = mtm.with_role(crate::smallmat::Role::Hermitian)?;
    let (vals, vecs) = mtm.eigh()?;
    let top = vals.iter().cloned().fold(0.0f64, f64::max);
    let mut p = [[0.0; 3]; 3];
    let mut pinv = [[0.0; 3]; 3];
    for (k, &l) in vals.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        let si = if l > 1e-24 * top.max(1e-300) { 1.0 / s } else { 0.0 };
        for i in 0..3 {
            for j in 0..3 {
                // eigenvectors of a real symmetric matrix can carry a common phase per column
                let vv = (vecs.get(i, k) * vecs.get(j, k).conj()).re;
                p[i][j] += s * vv;
                pinv[i][j] += si * vv;
            }
        }
    }
    let mut q = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                q[i][j] += m[i][k] * pinv[k][j];
            }
        }
    }
    Ok((q, p))
}

/// `F(t) = ⅓ Σ_k Tr(ρ̄_k(t) ρ_k(0))` over the x, y, z initial states.
pub fn average_fidelity_curve(
    spec: &ProtocolSpec,
    n_realizations: usize,
    sample_times: &[f64],
) -> Result<FidelityCurve> {
    run_ensemble(spec, n_realizations, sample_times)?.curve(CurveKind::AvgFidelity, Estimator::Raw)
}

/// `F_k(t) = Tr(ρ̄_k(t) ρ_k(0))` for one initial axis.
pub fn state_fidelity_curve(
    spec: &ProtocolSpec,
    axis: Axis,
    n_realizations: usize,
    sample_times: &[f64],
) -> Result<FidelityCurve> {
    run_ensemble(spec, n_realizations, sample_times)?.curve(CurveKind::axis(axis), Estimator::Raw)
}

/// Bloch direction of the second-frame effective field, `(Ω₁ − Ω̃₁, Ω₂, 0)/Ω_e`.
pub fn dressed_axis(drive: &DriveConfig) -> [f64; 3] {
    let oe = omega_e(drive);
    [drive.detuning() / oe, drive.omega2 / oe, 0.0]
}

/// Population of the initially prepared dressed state under a resonant signal.
///
/// With `stroboscopic` the samples sit on multiples of the modulation period
/// 2π/Ω̃₁, where the second frame coincides with the first; otherwise the
/// default log grid is used and the frame rotation is divided out.
pub fn sensing_curve(spec: &ProtocolSpec, n_realizations: usize, stroboscopic: bool) -> Result<FidelityCurve> {
    if spec.signal.is_none() {
        return Err(Error::invalid("sensing_curve needs a signal"));
    }
    if spec.kind != ProtocolKind::DoubleDrive {
        return Err(Error::invalid("sensing_curve needs a double-drive protocol"));
    }
    let times = if stroboscopic {
        stroboscopic_times(spec, TAU / spec.drive.omega1_tilde)
    } else {
        default_sample_times(spec, DEFAULT_SAMPLES)
    };
    let ens = run_ensemble(spec, n_realizations, &times)?;
    Ok(ens.dressed_population(dressed_axis(&spec.drive)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseKind {
    Conventional,
    Sdd,
    Cdd,
}

impl PulseKind {
    pub fn name(&self) -> &'static str {
        match self {
            PulseKind::Conventional => "conventional",
            PulseKind::Sdd => "sdd",
            PulseKind::Cdd => "cdd",
        }
    }
}

/// Fidelity of a π-pulse under a static relative amplitude error `eps`.
///
/// The double-drive pulses use the second-frame Hamiltonian with amplitudes
/// and durations chosen so that the effective rotation is exactly π at
/// `eps = 0`: Ω₂ = Ω₁/4 for four π-times (standard) and Ω₂ = Ω₁/√15 with
/// Ω̃₁ = Ω₁ + Ω₂²/Ω₁ for 3.75 π-times (correlated). Fidelity is the overlap of
/// the state reached from |0⟩ with the error-free target.
pub fn pulse_fidelity(kind: PulseKind, omega1: f64, eps: f64) -> Result<f64> {
    if !(eps.abs() <= 0.5) {
        return Err(Error::invalid(format!(
            "pulse error must satisfy |eps| <= 0.5, got {eps}"
        )));
    }
    if !(omega1 > 0.0 && omega1.is_finite()) {
        return Err(Error::invalid(format!("omega1 must be > 0, got {omega1}")));
    }
    let t_pi = PI / omega1;
    let evolve = |e: f64| -> Su2 {
        match kind {
            PulseKind::Conventional => Su2::from_hamiltonian(omega1 * (1.0 + e), 0.0, 0.0, t_pi),
            PulseKind::Sdd => {
                let w2 = omega1 / 4.0;
                Su2::from_hamiltonian(omega1 * e, w2 * (1.0 + e), 0.0, 4.0 * t_pi)
            }
            PulseKind::Cdd => {
                let w2 = omega1 / 15f64.sqrt();
                let det = -w2 * w2 / omega1;
                Su2::from_hamiltonian(det + omega1 * e, w2 * (1.0 + e), 0.0, 3.75 * t_pi)
            }
        }
    };
    let ideal = evolve(0.0);
    let actual = evolve(eps);
    // ⟨ψ_ideal|ψ_actual⟩ with ψ = U|0⟩, i.e. the (0,0) entry of U_ideal† U_actual
    let overlap = ideal.inverse().compose(&actual).amplitude(0, 0);
    Ok(overlap.norm_sqr())
}

/// Memory protocols in order of increasing protection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryProtocol {
    Free,
    Single,
    Sdd,
    Cdd,
}

impl MemoryProtocol {
    pub fn name(&self) -> &'static str {
        match self {
            MemoryProtocol::Free => "free",
            MemoryProtocol::Single => "single",
            MemoryProtocol::Sdd => "sdd",
            MemoryProtocol::Cdd => "cdd",
        }
    }

    /// Curve and threshold whose crossing defines the coherence time.
    ///
    /// `WorstAxis` uses the fastest-decaying initial state (y for the single
    /// drive, x for the double drives); free evolution always uses the average.
    pub fn decay_curve(&self, measure: DecayMeasure) -> (CurveKind, f64) {
        match (self, measure) {
            (MemoryProtocol::Free, _) | (_, DecayMeasure::Average) => (CurveKind::AvgFidelity, AVG_THRESHOLD),
            (MemoryProtocol::Single, DecayMeasure::WorstAxis) => (CurveKind::FidelityY, AXIS_THRESHOLD),
            (_, DecayMeasure::WorstAxis) => (CurveKind::FidelityX, AXIS_THRESHOLD),
        }
    }

    /// Protocol kind plus drive derived from amplitudes and the CDD shift policy.
    pub fn spec(
        &self,
        omega1: f64,
        omega2: f64,
        cdd_policy: ShiftPolicy,
        noise: NoiseConfig,
        duration: f64,
    ) -> Result<ProtocolSpec> {
        let (kind, policy) = match self {
            MemoryProtocol::Free => (ProtocolKind::Free, ShiftPolicy::Resonant),
            MemoryProtocol::Single => (ProtocolKind::SingleDrive, ShiftPolicy::Resonant),
            MemoryProtocol::Sdd => (ProtocolKind::DoubleDrive, ShiftPolicy::Resonant),
            MemoryProtocol::Cdd => (ProtocolKind::DoubleDrive, cdd_policy),
        };
        ProtocolSpec::new(kind, DriveConfig::new(omega1, omega2, policy)?, noise, duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMeasure {
    Average,
    WorstAxis,
}

/// Average-fidelity level marking a 1/e drop towards the ⅔ floor.
pub const AVG_THRESHOLD: f64 = 0.79;
/// Single-axis level marking a 1/e drop towards ½.
pub const AXIS_THRESHOLD: f64 = 0.684;

/// Coherence time from the envelope of the protocol's decay curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceRun {
    pub protocol: MemoryProtocol,
    pub t2: f64,
    pub reached: bool,
    pub duration: f64,
    pub curve: FidelityCurve,
}

/// Runs the protocol, doubling the duration until the threshold is crossed
/// (at most `max_doublings` times).
pub fn coherence_time_adaptive(
    protocol: MemoryProtocol,
    measure: DecayMeasure,
    make_spec: &dyn Fn(f64) -> Result<ProtocolSpec>,
    n_realizations: usize,
    initial_duration: f64,
    max_doublings: usize,
) -> Result<CoherenceRun> {
    let (kind, thr) = protocol.decay_curve(measure);
    let mut duration = initial_duration;
    let mut attempt = 0;
    loop {
        let spec = make_spec(duration)?;
        let times = default_sample_times(&spec, DEFAULT_SAMPLES);
        let ens = run_ensemble(&spec, n_realizations, &times)?;
        let curve = ens.curve(kind, Estimator::Envelope)?;
        let cross = crate::analysis::threshold_time(&curve, thr)?;
        if cross.reached || attempt >= max_doublings {
            return Ok(CoherenceRun {
                protocol,
                t2: cross.time,
                reached: cross.reached,
                duration,
                curve,
            });
        }
        log::info!(
            "{}: threshold not reached within {:.3e} s, doubling",
            protocol.name(),
            duration
        );
        duration *= 2.0;
        attempt += 1;
    }
}

/// One row of a correlation-time sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub delta_omega: f64,
    pub protocol: MemoryProtocol,
    pub t2: f64,
    pub reached: bool,
    /// T₂ relative to the single-drive value of the same row.
    pub ratio: f64,
}

/// Single-drive, standard and correlated DD coherence times for each
/// `(τ_Ω, δ_Ω)` pair. `base` supplies amplitudes, δ(t) noise, c and seed;
/// its ε parameters are replaced row by row.
pub fn coherence_vs_correlation_time(
    base: &ProtocolSpec,
    cdd_policy: ShiftPolicy,
    tau_list: &[f64],
    delta_omega_list: &[f64],
    n_realizations: usize,
) -> Result<Vec<SweepRow>> {
    if tau_list.len() != delta_omega_list.len() || tau_list.is_empty() {
        return Err(Error::invalid(
            "tau_list and delta_omega_list must be non-empty and of equal length",
        ));
    }
    let (w1, w2) = (base.drive.omega1, base.drive.omega2);
    let mut rows = Vec::new();
    for (&tau, &dw) in tau_list.iter().zip(delta_omega_list) {
        let mut noise = base.noise;
        noise.eps = crate::noise::OuParams::new(tau, dw, noise.eps.dt)?;
        let mut t_single = f64::NAN;
        let mut guess = 3.0 * 2f64.sqrt() / (dw * w1);
        for p in [MemoryProtocol::Single, MemoryProtocol::Sdd, MemoryProtocol::Cdd] {
            let make = |d: f64| p.spec(w1, w2, cdd_policy, noise, d);
            let run = coherence_time_adaptive(p, DecayMeasure::WorstAxis, &make, n_realizations, guess, 8)?;
            if p == MemoryProtocol::Single {
                t_single = run.t2;
            }
            guess = (run.t2 * 4.0).max(guess);
            rows.push(SweepRow {
                tau,
                delta_omega: dw,
                protocol: p,
                t2: run.t2,
                reached: run.reached,
                ratio: run.t2 / t_single,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::OuParams;
    use crate::protocol::SensingKind;
    use crate::smallmat::expm_i;

    fn drive() -> DriveConfig {
        let w1 = TAU * 2e6;
        DriveConfig::new(w1, 0.1 * w1, ShiftPolicy::Resonant).unwrap()
    }

    fn quiet_spec(kind: ProtocolKind, duration: f64) -> ProtocolSpec {
        ProtocolSpec::new(kind, drive(), NoiseConfig::silent(1), duration).unwrap()
    }

    fn zero_traces(n: usize, dt: f64) -> [NoiseTrace; 3] {
        let t = NoiseTrace {
            dt,
            values: vec![0.0; n],
        };
        [t.clone(), t.clone(), t]
    }

    #[test]
    fn hamiltonian_structure() {
        let s = quiet_spec(ProtocolKind::Free, 1e-6);
        assert_eq!(h_first_ip(0.3e-6, &s, 0.0, 0.0, 0.0).unwrap().max_abs(), 0.0);
        let s = quiet_spec(ProtocolKind::DoubleDrive, 1e-6);
        let h = h_first_ip(0.0, &s, 0.0, 0.0, 0.0).unwrap();
        // σy coefficient = −Im(H01)
        assert!((-h.get(0, 1).im - s.drive.omega2).abs() < 1e-6);
        let h = h_first_ip(PI / s.drive.omega1_tilde, &s, 0.0, 0.0, 0.1).unwrap();
        assert!((-h.get(0, 1).im + 1.1 * s.drive.omega2).abs() < 1e-6);
    }

    #[test]
    fn pi_pulse_transfer() {
        let mut s = quiet_spec(ProtocolKind::SingleDrive, 1e-6);
        // commensurate step so π/Ω₁ lands on the grid
        s.dt = PI / s.drive.omega1 / 40.0;
        let n = 100;
        let u = propagate(&s, &zero_traces(n, s.dt), PI / s.drive.omega1).unwrap();
        assert!((u.get(1, 0).norm_sqr() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rabi_against_analytic() {
        let s = quiet_spec(ProtocolKind::SingleDrive, 5e-6);
        let times = default_sample_times(&s, 200);
        let ens = run_ensemble(&s, 1, &times).unwrap();
        let w = s.drive.omega1;
        for (i, &t) in ens.times.iter().enumerate() {
            let m = ens.mean_map(i);
            let p0 = 0.5 * (1.0 + m[2][2]);
            assert!((p0 - (w * t / 2.0).cos().powi(2)).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn step_halving_converges() {
        let s = quiet_spec(ProtocolKind::DoubleDrive, 2e-6);
        let t_end = 2e-6;
        let n = s.n_steps() + 2;
        let u1 = propagate(&s, &zero_traces(n, s.dt), t_end).unwrap();
        let h = s.with_dt(s.dt / 2.0);
        let u2 = propagate(&h, &zero_traces(2 * n, h.dt), t_end).unwrap();
        // global phases are dropped by the SU(2) representation on both sides
        assert!(u1.max_diff(&u2) < 1e-6, "{}", u1.max_diff(&u2));
    }

    #[test]
    fn propagate_matches_dense_products() {
        let s = quiet_spec(ProtocolKind::DoubleDrive, 1e-6);
        let n = 37;
        let mut tr = zero_traces(n + 2, s.dt);
        for (k, t) in tr.iter_mut().enumerate() {
            for (i, v) in t.values.iter_mut().enumerate() {
                *v = 1e-3 * ((i + k) as f64).sin();
            }
        }
        tr[0].values.iter_mut().for_each(|v| *v *= 1e5);
        let u = propagate(&s, &tr, n as f64 * s.dt).unwrap();
        let mut dense = SmallOperator::identity(2);
        for i in 0..n {
            let (d, e1, e2) = (tr[0].values[i], tr[1].values[i], tr[2].values[i]);
            let h1 = h_first_ip((i as f64 + GAUSS_C1) * s.dt, &s, d, e1, e2).unwrap();
            let h2 = h_first_ip((i as f64 + GAUSS_C2) * s.dt, &s, d, e1, e2).unwrap();
            let mix = |a: f64, b: f64| {
                (&h1.scale(a.into()) + &h2.scale(b.into()))
                    .with_role(crate::smallmat::Role::Hermitian)
                    .unwrap()
            };
            let first = expm_i(&mix(CF4_A2, CF4_A1), s.dt).unwrap();
            let second = expm_i(&mix(CF4_A1, CF4_A2), s.dt).unwrap();
            dense = &(&second * &first) * &dense;
        }
        // dense exponentials keep the global phase; compare up to it
        let ph = dense.get(0, 0) / u.get(0, 0);
        let dense = dense.scale(ph.conj() / ph.norm());
        assert!(u.max_diff(&dense) < 1e-10);
    }

    #[test]
    fn short_traces_rejected() {
        let s = quiet_spec(ProtocolKind::SingleDrive, 1e-6);
        assert!(propagate(&s, &zero_traces(3, s.dt), 1e-6).is_err());
    }

    #[test]
    fn fidelity_starts_at_one() {
        let mut noise = NoiseConfig::silent(4);
        noise.delta = OuParams::new(25e-6, 4e5, 1e-9).unwrap();
        let s = ProtocolSpec::new(ProtocolKind::Free, drive(), noise, 5e-6).unwrap();
        let times = default_sample_times(&s, 50);
        let c = average_fidelity_curve(&s, 20, &times).unwrap();
        assert_eq!(c.values[0], 1.0);
        assert!(c.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn polar_recovers_rotation() {
        let r = Su2::from_hamiltonian(0.3, 1.0, -0.4, 1.7).bloch_rotation();
        let d = [0.9, 0.5, 0.2];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = r[i][j] * d[j];
            }
        }
        let (q, p) = polar(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((q[i][j] - r[i][j]).abs() < 1e-10);
                let pd = if i == j { d[i] } else { 0.0 };
                assert!((p[i][j] - pd).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pulses_exact_without_error() {
        for k in [PulseKind::Conventional, PulseKind::Sdd, PulseKind::Cdd] {
            let f = pulse_fidelity(k, TAU * 1e6, 0.0).unwrap();
            assert!((f - 1.0).abs() < 1e-9, "{k:?}");
        }
        let f = pulse_fidelity(PulseKind::Conventional, TAU * 1e6, 0.1).unwrap();
        assert!((f - (PI * 0.05).cos().powi(2)).abs() < 1e-12);
        assert!(pulse_fidelity(PulseKind::Cdd, 1.0, 0.6).is_err());
    }

    #[test]
    fn sensing_without_signal_errors() {
        let s = quiet_spec(ProtocolKind::DoubleDrive, 1e-6);
        assert!(sensing_curve(&s, 1, true).is_err());
    }

    #[test]
    fn dressed_state_is_locked_without_signal() {
        let w1 = TAU * 2e6;
        let d = DriveConfig::new(w1, 0.1 * w1, ShiftPolicy::Correlated(1.0)).unwrap();
        let s = ProtocolSpec::new(ProtocolKind::DoubleDrive, d, NoiseConfig::silent(0), 20e-6)
            .unwrap()
            .with_signal(SensingScheme {
                kind: SensingKind::LowAttenuation,
                omega0: 0.0,
                g0: 0.0,
            });
        let c = sensing_curve(&s, 1, true).unwrap();
        assert!(
            c.values.iter().all(|&p| p > 0.97),
            "{:?}",
            c.values.iter().cloned().fold(1.0, f64::min)
        );
    }
}
