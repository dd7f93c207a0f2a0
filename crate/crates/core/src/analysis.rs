//! Curve post-processing: envelopes, stretched-exponential fits, threshold
//! crossings, oscillation frequencies and shot-noise sensitivity.

use std::f64::consts::TAU;
use std::io::Write;

use crate::dynamics::FidelityCurve;
use crate::error::{Error, Result};
use crate::noise::fmt_f64;

/// γ_NV = 2π · 28 Hz/nT, in rad/(s·T).
pub const GAMMA_NV: f64 = TAU * 28e9;

pub const BETA_MIN: f64 = 0.2;
pub const BETA_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    StretchedExp,
    Threshold,
}

impl FitMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FitMethod::StretchedExp => "stretched_exp",
            FitMethod::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceFit {
    pub t2: f64,
    pub beta: f64,
    pub amplitude: f64,
    pub rms_residual: f64,
    pub method: FitMethod,
}

/// Writes `scenario,protocol,t2_s,beta,method,residual` rows.
pub fn write_fit_csv<W: Write>(w: W, rows: &[(String, String, CoherenceFit)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scenario", "protocol", "t2_s", "beta", "method", "residual"])?;
    for (scenario, protocol, f) in rows {
        wtr.write_record([
            scenario.clone(),
            protocol.clone(),
            fmt_f64(f.t2),
            fmt_f64(f.beta),
            f.method.name().to_string(),
            fmt_f64(f.rms_residual),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- envelope

/// Upper and lower envelopes of an oscillating curve.
///
/// Extrema are points that dominate a window of one oscillation period
/// centered on them; `period_hint` gives that period, otherwise it is taken
/// from the median spacing of neighbor extrema. Envelopes are interpolated
/// with monotone cubics. Curves with fewer than five extrema are treated as
/// monotone and returned unchanged.
pub fn extract_envelope(curve: &FidelityCurve, period_hint: Option<f64>) -> Result<(FidelityCurve, FidelityCurve)> {
    let (t, y) = (&curve.times, &curve.values);
    if t.len() < 3 {
        return Err(Error::invalid("extract_envelope needs at least 3 samples"));
    }
    let mut neighbor_ext = Vec::new();
    for i in 1..t.len() - 1 {
        let up = y[i] > y[i - 1] && y[i] >= y[i + 1];
        let down = y[i] < y[i - 1] && y[i] <= y[i + 1];
        if up || down {
            neighbor_ext.push(i);
        }
    }
    if neighbor_ext.len() < 5 {
        return Ok((curve.clone(), curve.clone()));
    }
    let period = match period_hint {
        Some(p) if p > 0.0 => p,
        _ => {
            let mut gaps: Vec<f64> = neighbor_ext.windows(2).map(|w| t[w[1]] - t[w[0]]).collect();
            gaps.sort_by(f64::total_cmp);
            2.0 * gaps[gaps.len() / 2]
        }
    };
    let half = 0.5 * period;
    let pick = |upper: bool| -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        let mut lo = 0;
        let mut hi = 0;
        for i in 0..t.len() {
            while t[lo] < t[i] - half {
                lo += 1;
            }
            while hi + 1 < t.len() && t[hi + 1] <= t[i] + half {
                hi += 1;
            }
            let dominated = (lo..=hi).any(|j| {
                if upper {
                    y[j] > y[i] || (y[j] == y[i] && j < i)
                } else {
                    y[j] < y[i] || (y[j] == y[i] && j < i)
                }
            });
            if !dominated {
                xs.push(t[i]);
                vs.push(y[i]);
            }
        }
        (xs, vs)
    };
    let build = |(xs, vs): (Vec<f64>, Vec<f64>)| -> FidelityCurve {
        let values = if xs.len() >= 2 {
            pchip(&xs, &vs, t)
        } else {
            vec![vs.first().copied().unwrap_or(0.0); t.len()]
        };
        FidelityCurve {
            times: t.clone(),
            values,
            stderr: curve.stderr.clone(),
            n_realizations: curve.n_realizations,
            kind: curve.kind,
        }
    };
    Ok((build(pick(true)), build(pick(false))))
}

/// Monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson), held
/// constant outside the node range.
pub fn pchip(x: &[f64], y: &[f64], at: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        m[0] = d[0];
        m[1] = d[0];
    } else {
        for i in 1..n - 1 {
            if d[i - 1] * d[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        m[0] = end_slope(h[0], h[1], d[0], d[1]);
        m[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    }
    at.iter()
        .map(|&q| {
            if q <= x[0] {
                return y[0];
            }
            if q >= x[n - 1] {
                return y[n - 1];
            }
            let k = x.partition_point(|&v| v <= q) - 1;
            let s = (q - x[k]) / h[k];
            let (s2, s3) = (s * s, s * s * s);
            (2.0 * s3 - 3.0 * s2 + 1.0) * y[k]
                + (s3 - 2.0 * s2 + s) * h[k] * m[k]
                + (-2.0 * s3 + 3.0 * s2) * y[k + 1]
                + (s3 - s2) * h[k] * m[k + 1]
        })
        .collect()
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

// ---------------------------------------------------------------- threshold

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub time: f64,
    pub reached: bool,
}

/// First downward crossing of `threshold`, linearly interpolated. When the
/// curve never crosses, returns its last time with `reached = false`.
pub fn threshold_time(curve: &FidelityCurve, threshold: f64) -> Result<Crossing> {
    let (t, y) = (&curve.times, &curve.values);
    if t.is_empty() {
        return Err(Error::invalid("threshold_time on an empty curve"));
    }
    if !(y[0] > threshold) {
        return Err(Error::invalid(format!(
            "curve starts at {} which is not above the threshold {threshold}",
            y[0]
        )));
    }
    for i in 1..t.len() {
        if y[i] <= threshold {
            let f = (y[i - 1] - threshold) / (y[i - 1] - y[i]);
            return Ok(Crossing {
                time: t[i - 1] + f * (t[i] - t[i - 1]),
                reached: true,
            });
        }
    }
    Ok(Crossing {
        time: *t.last().unwrap(),
        reached: false,
    })
}

// ---------------------------------------------------------------- fitting

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitude {
    /// A equals the first sample.
    FirstPoint,
    Fixed(f64),
    /// A from linear least squares at every (T₂, β).
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub amplitude: Amplitude,
    pub fixed_beta: Option<f64>,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            amplitude: Amplitude::FirstPoint,
            fixed_beta: None,
            max_iter: 4000,
        }
    }
}

struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    amp: Amplitude,
}

impl Problem<'_> {
    /// Weighted sum of squares and the amplitude used.
    fn cost(&self, t2: f64, beta: f64) -> (f64, f64) {
        let shape: Vec<f64> = self.t.iter().map(|&t| (-(t / t2).powf(beta)).exp()).collect();
        let a = match self.amp {
            Amplitude::FirstPoint => self.y[0],
            Amplitude::Fixed(a) => a,
            Amplitude::Free => {
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..self.t.len() {
                    num += self.w[i] * shape[i] * self.y[i];
                    den += self.w[i] * shape[i] * shape[i];
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
        };
        let ss = (0..self.t.len())
            .map(|i| {
                let r = self.y[i] - a * shape[i];
                self.w[i] * r * r
            })
            .sum();
        (ss, a)
    }
}

/// Least-squares fit of `A exp(−(t/T₂)^β)`: log grid over (T₂, β) followed by
/// Nelder-Mead refinement in (ln T₂, β) to relative tolerance 1e-6.
pub fn fit_stretched_exp(
    times: &[f64],
    values: &[f64],
    weights: Option<&[f64]>,
    opts: FitOptions,
) -> Result<CoherenceFit> {
    if times.len() != values.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    if times.len() < 8 {
        return Err(Error::invalid("fit_stretched_exp needs at least 8 points"));
    }
    if values.iter().any(|&v| !(v > 0.0 && v <= 1.05)) {
        return Err(Error::invalid("fit values must lie in (0, 1.05]"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(Error::invalid("fit times must be non-negative and strictly increasing"));
    }
    let t_lo = times.iter().copied().find(|&t| t > 0.0).unwrap_or(0.0);
    let t_hi = *times.last().unwrap();
    if !(t_lo > 0.0) || t_hi < 5.0 * t_lo {
        return Err(Error::invalid("fit times must span at least a factor of 5"));
    }
    let w = match weights {
        Some(w) if w.len() == times.len() => w.to_vec(),
        Some(_) => return Err(Error::invalid("weights length mismatch")),
        None => vec![1.0; times.len()],
    };
    if let Some(b) = opts.fixed_beta {
        if !(b > BETA_MIN && b < BETA_MAX) {
            return Err(Error::invalid(format!(
                "fixed beta {b} outside ({BETA_MIN}, {BETA_MAX})"
            )));
        }
    }
    let prob = Problem {
        t: times,
        y: values,
        w,
        amp: opts.amplitude,
    };

    // coarse grid
    let n_t = 160;
    let (lt0, lt1) = ((t_lo / 10.0).ln(), (t_hi * 10.0).ln());
    let betas: Vec<f64> = match opts.fixed_beta {
        Some(b) => vec![b],
        None => (0..48).map(|k| 0.25 + k as f64 * (3.9 - 0.25) / 47.0).collect(),
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..n_t {
        let lt = lt0 + (lt1 - lt0) * i as f64 / (n_t - 1) as f64;
        for &b in &betas {
            let (c, _) = prob.cost(lt.exp(), b);
            if c < best.0 {
                best = (c, lt, b);
            }
        }
    }

    let penalized = |p: &[f64]| -> f64 {
        let b = match opts.fixed_beta {
            Some(b) => b,
            None => p[1],
        };
        if !(b > BETA_MIN && b < BETA_MAX) {
            return f64::INFINITY;
        }
        prob.cost(p[0].exp(), b).0
    };
    let dims = if opts.fixed_beta.is_some() { 1 } else { 2 };
    let start = [best.1, best.2];
    let step = [0.05, 0.05];
    let (x, converged) = nelder_mead(&penalized, &start[..dims], &step[..dims], 1e-6, opts.max_iter);
    let t2 = x[0].exp();
    let beta = match opts.fixed_beta {
        Some(b) => b,
        None => x[1],
    };
    if !converged {
        return Err(Error::FitFailure {
            t2: best.1.exp(),
            beta: best.2,
        });
    }
    let (ss, a) = prob.cost(t2, beta);
    let wsum: f64 = prob.w.iter().sum();
    Ok(CoherenceFit {
        t2,
        beta,
        amplitude: a,
        rms_residual: (ss / wsum).sqrt(),
        method: FitMethod::StretchedExp,
    })
}

/// Minimal Nelder-Mead; stops when the simplex spans less than `tol` relative
/// in every coordinate.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, bool) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread_x = (0..n)
            .map(|k| {
                let lo = simplex.iter().map(|s| s.0[k]).fold(f64::INFINITY, f64::min);
                let hi = simplex.iter().map(|s| s.0[k]).fold(f64::NEG_INFINITY, f64::max);
                (hi - lo) / simplex[0].0[k].abs().max(1.0)
            })
            .fold(0.0, f64::max);
        if spread_x < tol && simplex[0].1.is_finite() {
            return (simplex[0].0.clone(), true);
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|s| s.0[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |c: f64| -> Vec<f64> {
            (0..n)
                .map(|k| centroid[k] + c * (simplex[n].0[k] - centroid[k]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = if fr < simplex[n].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        s.0[k] = best[k] + 0.5 * (s.0[k] - best[k]);
                    }
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0.clone(), false)
}

// ---------------------------------------------------------------- oscillation

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationFit {
    /// Angular frequency, rad/s.
    pub omega: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub rms_residual: f64,
}

/// Best single sinusoid `a + b cos(ωt) + c sin(ωt)` over `omega_range`.
///
/// Scans ω on a grid fine enough to resolve the record length, then refines
/// the best cell by golden-section search on the residual.
pub fn fit_oscillation(times: &[f64], values: &[f64], omega_range: (f64, f64)) -> Result<OscillationFit> {
    let (w_lo, w_hi) = omega_range;
    if times.len() != values.len() || times.len() < 5 {
        return Err(Error::invalid("fit_oscillation needs at least 5 paired samples"));
    }
    if !(w_lo > 0.0 && w_hi > w_lo) {
        return Err(Error::invalid("omega range must satisfy 0 < lo < hi"));
    }
    let span = times.last().unwrap() - times[0];
    let dw = (TAU / span / 20.0).min((w_hi - w_lo) / 50.0);
    let n = ((w_hi - w_lo) / dw).ceil() as usize + 1;
    let mut best = (f64::INFINITY, w_lo);
    for k in 0..n {
        let w = (w_lo + k as f64 * dw).min(w_hi);
        let r = sinusoid_lsq(times, values, w).0;
        if r < best.0 {
            best = (r, w);
        }
    }
    let (mut a, mut b) = ((best.1 - dw).max(w_lo), (best.1 + dw).min(w_hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = sinusoid_lsq(times, values, c).0;
    let mut fd = sinusoid_lsq(times, values, d).0;
    while (b - a) > 1e-12 * best.1 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sinusoid_lsq(times, values, c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sinusoid_lsq(times, values, d).0;
        }
    }
    let w = 0.5 * (a + b);
    let (ss, coef) = sinusoid_lsq(times, values, w);
    Ok(OscillationFit {
        omega: w,
        offset: coef[0],
        amplitude: coef[1].hypot(coef[2]),
        phase: (-coef[2]).atan2(coef[1]),
        rms_residual: (ss / times.len() as f64).sqrt(),
    })
}

/// Residual sum of squares and coefficients of the linear fit at fixed ω.
fn sinusoid_lsq(t: &[f64], y: &[f64], w: f64) -> (f64, [f64; 3]) {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&ti, &yi) in t.iter().zip(y) {
        let (s, c) = (w * ti).sin_cos();
        let row = [1.0, c, s];
        for i in 0..3 {
            aty[i] += row[i] * yi;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let coef = solve3(ata, aty).unwrap_or([0.0; 3]);
    let ss = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let (s, c) = (w * ti).sin_cos();
            let r = yi - coef[0] - coef[1] * c - coef[2] * s;
            r * r
        })
        .sum();
    (ss, coef)
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for k in col..3 {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut s = b[r];
        for k in r + 1..3 {
            s -= a[r][k] * x[k];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

// ---------------------------------------------------------------- sensitivity

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityInputs {
    pub gamma_nv: f64,
    pub alpha: f64,
    /// Normalized bright-state signal.
    pub a: f64,
    /// Normalized dark-state signal.
    pub b: f64,
    pub t2rho: f64,
    pub n_ph: f64,
    pub tau: f64,
    pub t_r: f64,
    pub overhead_factor: f64,
    /// Decay exponent of the contrast, `C(τ) = (a−b) exp(−(τ/T₂ρ)^p)`.
    pub p: f64,
    /// Measured contrast; replaces the decay model when given.
    pub contrast: Option<f64>,
}

impl Default for SensitivityInputs {
    fn default() -> Self {
        SensitivityInputs {
            gamma_nv: GAMMA_NV,
            alpha: 0.5,
            a: 1.02,
            b: 0.78,
            t2rho: 1.682e-3,
            n_ph: 0.15,
            tau: 1.682e-3 / 2.0,
            t_r: 0.0,
            overhead_factor: 1.0,
            p: 1.0,
            contrast: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    /// T/√Hz, dead time neglected.
    pub eta: f64,
    pub contrast: f64,
    /// δB_min·√t including the dead time, T/√Hz.
    pub delta_b_min_sqrt_t: f64,
    /// η at τ = T₂ρ/2 from the decay model.
    pub eta_at_half_t2: f64,
}

fn contrast_at(inp: &SensitivityInputs, tau: f64) -> f64 {
    (inp.a - inp.b) * (-(tau / inp.t2rho).powf(inp.p)).exp()
}

/// Photon-shot-noise-limited sensitivity `η = 2√k / (γ|α|C(τ)√(N_ph τ))`
/// with `k` the overhead factor.
pub fn sensitivity(inp: &SensitivityInputs) -> Result<Sensitivity> {
    if !(inp.a > inp.b) {
        return Err(Error::invalid("bright signal a must exceed dark signal b"));
    }
    if !(inp.n_ph > 0.0) {
        return Err(Error::invalid("n_ph must be > 0"));
    }
    if inp.alpha == 0.0 || !inp.alpha.is_finite() {
        return Err(Error::invalid("alpha must be non-zero"));
    }
    if !(inp.tau > 0.0 && inp.t2rho > 0.0 && inp.gamma_nv > 0.0 && inp.t_r >= 0.0) {
        return Err(Error::invalid("tau, t2rho, gamma_nv must be > 0 and t_r >= 0"));
    }
    if !(inp.overhead_factor >= 1.0) {
        return Err(Error::invalid("overhead_factor must be >= 1"));
    }
    let c = inp.contrast.unwrap_or_else(|| contrast_at(inp, inp.tau));
    if !(c > 0.0) {
        return Err(Error::invalid(format!("contrast must be > 0, got {c}")));
    }
    let eta_of = |c: f64, tau: f64| {
        2.0 * inp.overhead_factor.sqrt() / (inp.gamma_nv * inp.alpha.abs() * c * (inp.n_ph * tau).sqrt())
    };
    let eta = eta_of(c, inp.tau);
    let half = 0.5 * inp.t2rho;
    Ok(Sensitivity {
        eta,
        contrast: c,
        delta_b_min_sqrt_t: eta * ((inp.tau + inp.t_r) / inp.tau).sqrt(),
        eta_at_half_t2: eta_of(contrast_at(inp, half), half),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CurveKind;

    fn curve(times: Vec<f64>, values: Vec<f64>) -> FidelityCurve {
        let n = times.len();
        FidelityCurve {
            times,
            values,
            stderr: vec![0.0; n],
            n_realizations: 1,
            kind: CurveKind::AvgFidelity,
        }
    }

    fn grid(n: usize, t1: f64) -> Vec<f64> {
        (0..n).map(|i| t1 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn constant_envelope() {
        let c = curve(grid(50, 1.0), vec![0.7; 50]);
        let (u, l) = extract_envelope(&c, None).unwrap();
        assert_eq!(u.values, c.values);
        assert_eq!(l.values, c.values);
    }

    #[test]
    fn damped_cos2_envelope() {
        let (tau, w) = (1.0, 2.0 * TAU * 20.0);
        let t = grid(4001, 3.0);
        let y: Vec<f64> = t
            .iter()
            .map(|&x| (-x / tau).exp() * (w * x / 2.0).cos().powi(2))
            .collect();
        let (u, _) = extract_envelope(&curve(t.clone(), y), Some(TAU / w)).unwrap();
        let rms = (t
            .iter()
            .zip(&u.values)
            .map(|(&x, &v)| {
                let e = (-x / tau).exp();
                ((v - e) / e).powi(2)
            })
            .sum::<f64>()
            / t.len() as f64)
            .sqrt();
        assert!(rms < 0.02, "rms={rms}");
    }

    #[test]
    fn unit_cos_envelope() {
        let t = grid(2001, 10.0);
        let y: Vec<f64> = t.iter().map(|&x| (TAU * 1.3 * x).cos()).collect();
        let (u, l) = extract_envelope(&curve(t, y), None).unwrap();
        assert!(u.values.iter().all(|&v| (v - 1.0).abs() < 0.01));
        assert!(l.values.iter().all(|&v| (v + 1.0).abs() < 0.01));
    }

    #[test]
    fn envelope_needs_three_points() {
        assert!(extract_envelope(&curve(vec![0.0, 1.0], vec![1.0, 0.5]), None).is_err());
    }

    #[test]
    fn threshold_exp() {
        let t = grid(1001, 5.0);
        let y: Vec<f64> = t.iter().map(|&x| (-x / 1.3).exp()).collect();
        let c = threshold_time(&curve(t, y), (-1.0f64).exp()).unwrap();
        assert!(c.reached && (c.time - 1.3).abs() < 5.0 / 1000.0);
    }

    #[test]
    fn threshold_gap_construction() {
        let tt = 2.5e-6;
        let t = grid(2001, 4.0 * tt);
        let y: Vec<f64> = t.iter().map(|&x| (2.0 + (-(x / tt).powi(2)).exp()) / 3.0).collect();
        // 0.79 is the rounded 1/e point of the gap; exact inversion gives t = T·√(−ln(3·0.79 − 2))
        let c = threshold_time(&curve(t, y), 0.79).unwrap();
        let expect = tt * (-(3.0f64 * 0.79 - 2.0).ln()).sqrt();
        assert!((c.time - expect).abs() < 1e-3 * tt);
        assert!((c.time / tt - 1.0).abs() < 0.01);
    }

    #[test]
    fn threshold_not_reached() {
        let t = grid(10, 1.0);
        let y: Vec<f64> = t.iter().map(|&x| 0.8 + 0.1 * x).collect();
        let c = threshold_time(&curve(t, y), 0.5).unwrap();
        assert!(!c.reached && c.time == 1.0);
    }

    #[test]
    fn fit_recovers_stretched() {
        // deterministic pseudo-noise keeps the test stable
        let t: Vec<f64> = (1..=60).map(|i| 5e-6 * i as f64).collect();
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, &x)| (-(x / 100e-6).powf(1.5)).exp() + 0.01 * ((i as f64 * 12.9898).sin() * 43758.5453).fract())
            .map(|v: f64| v.clamp(1e-6, 1.05))
            .collect();
        let f = fit_stretched_exp(
            &t,
            &y,
            None,
            FitOptions {
                amplitude: Amplitude::Fixed(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((f.t2 / 100e-6 - 1.0).abs() < 0.03, "{f:?}");
        assert!((f.beta - 1.5).abs() < 0.1, "{f:?}");
    }

    #[test]
    fn fit_fixed_beta_exact() {
        let t: Vec<f64> = (0..40).map(|i| 0.1 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|&x| (-x / 0.7).exp()).collect();
        let f = fit_stretched_exp(
            &t,
            &y,
            None,
            FitOptions {
                fixed_beta: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((f.t2 - 0.7).abs() < 1e-5 * 0.7);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let t: Vec<f64> = (1..5).map(|i| i as f64).collect();
        assert!(fit_stretched_exp(&t, &[0.5; 4], None, FitOptions::default()).is_err());
        let t: Vec<f64> = (10..20).map(|i| i as f64).collect();
        assert!(fit_stretched_exp(&t, &[0.5; 10], None, FitOptions::default()).is_err());
    }

    #[test]
    fn oscillation_frequency() {
        let t: Vec<f64> = (0..300).map(|i| i as f64 * 1e-6).collect();
        let w = TAU * 4.7e3;
        let y: Vec<f64> = t.iter().map(|&x| 0.5 + 0.5 * (w * x + 0.3).cos()).collect();
        let f = fit_oscillation(&t, &y, (TAU * 1e3, TAU * 2e4)).unwrap();
        assert!((f.omega / w - 1.0).abs() < 1e-8);
        assert!((f.amplitude - 0.5).abs() < 1e-8);
    }

    #[test]
    fn sensitivity_reference_values() {
        let s = sensitivity(&SensitivityInputs {
            contrast: Some(0.146),
            ..Default::default()
        })
        .unwrap();
        assert!((s.eta * 1e9 - 13.9).abs() < 0.139, "{}", s.eta * 1e9);
    }

    #[test]
    fn sensitivity_rejects_zero_contrast() {
        let r = sensitivity(&SensitivityInputs {
            contrast: Some(0.0),
            ..Default::default()
        });
        assert!(r.is_err());
    }

    #[test]
    fn optimum_at_half_t2() {
        let base = SensitivityInputs::default();
        let best = (1..400)
            .map(|k| base.t2rho * k as f64 / 200.0)
            .min_by(|&a, &b| {
                let ea = sensitivity(&SensitivityInputs { tau: a, ..base }).unwrap().eta;
                let eb = sensitivity(&SensitivityInputs { tau: b, ..base }).unwrap().eta;
                ea.total_cmp(&eb)
            })
            .unwrap();
        assert!((best / base.t2rho - 0.5).abs() < 0.006);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn photon_scaling(k in 1.1f64..10.0, n in 0.01f64..1.0) {
                let base = SensitivityInputs { n_ph: n, ..Default::default() };
                let more = SensitivityInputs { n_ph: n * k * k, ..base };
                let e0 = sensitivity(&base).unwrap().eta;
                let e1 = sensitivity(&more).unwrap().eta;
                prop_assert!((e1 * k / e0 - 1.0).abs() < 1e-12);
            }

            #[test]
            fn threshold_monotone(th1 in 0.05f64..0.95, th2 in 0.05f64..0.95, tau in 0.1f64..3.0) {
                let t = grid(500, 10.0);
                let y: Vec<f64> = t.iter().map(|&x| (-x / tau).exp()).collect();
                let c = curve(t, y);
                let (lo, hi) = if th1 < th2 { (th1, th2) } else { (th2, th1) };
                let a = threshold_time(&c, lo).unwrap().time;
                let b = threshold_time(&c, hi).unwrap().time;
                prop_assert!(a >= b);
            }

            #[test]
            fn refit_is_idempotent(t2 in 20e-6f64..200e-6, beta in 0.6f64..3.0) {
                let t: Vec<f64> = (1..=80).map(|i| 6e-6 * i as f64).collect();
                let y: Vec<f64> = t.iter().map(|&x| (-(x / t2).powf(beta)).exp().max(1e-12)).collect();
                let opts = FitOptions { amplitude: Amplitude::Fixed(1.0), ..Default::default() };
                let f1 = fit_stretched_exp(&t, &y, None, opts).unwrap();
                let y2: Vec<f64> = t.iter().map(|&x| (-(x / f1.t2).powf(f1.beta)).exp().max(1e-12)).collect();
                let f2 = fit_stretched_exp(&t, &y2, None, opts).unwrap();
                prop_assert!((f2.t2 / f1.t2 - 1.0).abs() < 1e-3);
                prop_assert!((f2.beta / f1.beta - 1.0).abs() < 1e-3);
            }
        }
    }
}
