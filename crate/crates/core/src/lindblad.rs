//! Three-level master equation for the relaxation limit of the driven qubit.
//!
//! Basis order is (|−1⟩, |0⟩, |+1⟩). The drives act on the |0⟩ ↔ |−1⟩
//! transition, with qubit |0⟩ ≡ |0⟩ and qubit |1⟩ ≡ |−1⟩.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::protocol::DriveConfig;
use crate::smallmat::{Role, SmallOperator, Su2};

const M1: usize = 0;
const Z0: usize = 1;
const P1: usize = 2;

/// Spin projection of each basis state, used by the S_z dephasing channel.
const SZ: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladModel {
    /// Single-quantum rate, channels |−1⟩⟷|0⟩ and |0⟩⟷|+1⟩.
    pub gamma1: f64,
    /// Double-quantum rate, channels |−1⟩⟷|+1⟩.
    pub gamma2: f64,
    /// S_z dephasing rate.
    pub gamma_phi: f64,
    /// Noiseless double drive; `None` leaves the system undriven.
    pub drive: Option<DriveConfig>,
}

impl LindbladModel {
    /// Rates from the |0⟩ population lifetime `T₁ = 1/(3γ₁)` and `γ₂/γ₁`.
    pub fn from_t1(t1: f64, gamma2_ratio: f64, gamma_phi: f64, drive: Option<DriveConfig>) -> Result<Self> {
        if !(t1 > 0.0) {
            return Err(Error::invalid(format!("T1 must be > 0, got {t1}")));
        }
        let gamma1 = 1.0 / (3.0 * t1);
        let m = LindbladModel {
            gamma1,
            gamma2: gamma2_ratio * gamma1,
            gamma_phi,
            drive,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma_phi", self.gamma_phi),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `(rate, to, from)` for every jump operator `|to⟩⟨from|`.
    fn jumps(&self) -> [(f64, usize, usize); 6] {
        [
            (self.gamma1, M1, Z0),
            (self.gamma1, Z0, M1),
            (self.gamma1, Z0, P1),
            (self.gamma1, P1, Z0),
            (self.gamma2, M1, P1),
            (self.gamma2, P1, M1),
        ]
    }
}

/// Density matrix in the (|−1⟩, |0⟩, |+1⟩) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix3(SmallOperator);

impl DensityMatrix3 {
    pub fn new(op: SmallOperator) -> Result<Self> {
        if op.dim() != 3 {
            return Err(Error::invalid("DensityMatrix3 needs a 3x3 operator"));
        }
        Ok(DensityMatrix3(op.with_role(Role::Density)?))
    }

    pub fn basis(level: usize) -> Result<Self> {
        if level > 2 {
            return Err(Error::invalid(format!("level index {level} out of range")));
        }
        let mut m = SmallOperator::zeros(3);
        m.set(level, level, Complex64::new(1.0, 0.0));
        Self::new(m)
    }

    /// Qubit state `(1 + b·σ)/2` placed on the |0⟩, |−1⟩ block.
    pub fn qubit(b: [f64; 3]) -> Result<Self> {
        Self::new(embed(&crate::smallmat::density_from_bloch(b)))
    }

    pub fn operator(&self) -> &SmallOperator {
        &self.0
    }
}

/// Places a 2×2 qubit operator on the |0⟩, |−1⟩ block.
fn embed(q: &SmallOperator) -> SmallOperator {
    let idx = [Z0, M1];
    let mut m = SmallOperator::zeros(3);
    for a in 0..2 {
        for b in 0..2 {
            m.set(idx[a], idx[b], q.get(a, b));
        }
    }
    m
}

/// Qubit Bloch vector of the |0⟩, |−1⟩ block.
fn block_bloch(rho: &SmallOperator) -> [f64; 3] {
    let r01 = rho.get(Z0, M1);
    [2.0 * r01.re, -2.0 * r01.im, rho.get(Z0, Z0).re - rho.get(M1, M1).re]
}

/// `−i[H, ρ] + Σ Γ (L ρ L† − ½{L†L, ρ})` with the six jump operators between
/// levels and S_z dephasing.
pub fn lindblad_rhs(rho: &SmallOperator, h: &SmallOperator, model: &LindbladModel) -> SmallOperator {
    let mut d = rhs_into(rho, h, model);
    d = d.untagged();
    d
}

fn rhs_into(rho: &SmallOperator, h: &SmallOperator, model: &LindbladModel) -> SmallOperator {
    let comm = h.commutator(rho);
    let mut out = comm.scale(Complex64::new(0.0, -1.0));
    for (g, to, from) in model.jumps() {
        if g == 0.0 {
            continue;
        }
        let pop = rho.get(from, from);
        out.set(to, to, out.get(to, to) + pop * g);
        for j in 0..3 {
            // ½{|from⟩⟨from|, ρ} touches row `from` and column `from`
            let r = out.get(from, j) - rho.get(from, j) * (0.5 * g);
            out.set(from, j, r);
            let c = out.get(j, from) - rho.get(j, from) * (0.5 * g);
            out.set(j, from, c);
        }
    }
    if model.gamma_phi != 0.0 {
        for i in 0..3 {
            for j in 0..3 {
                let ds = SZ[i] - SZ[j];
                if ds != 0.0 {
                    out.set(i, j, out.get(i, j) - rho.get(i, j) * (0.5 * model.gamma_phi * ds * ds));
                }
            }
        }
    }
    out
}

/// Noiseless first-frame drive embedded on the qubit block.
fn drive_hamiltonian(drive: &DriveConfig, t: f64) -> SmallOperator {
    let hx = drive.omega1;
    let hy = 2.0 * drive.omega2 * (drive.omega1_tilde * t).cos();
    let h = SmallOperator::from_rows2([
        [Complex64::new(0.0, 0.0), Complex64::new(hx / 2.0, -hy / 2.0)],
        [Complex64::new(hx / 2.0, hy / 2.0), Complex64::new(0.0, 0.0)],
    ]);
    embed(&h)
}

/// Trajectory of the master equation sampled at the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladRun {
    pub times: Vec<f64>,
    /// Populations of (|−1⟩, |0⟩, |+1⟩).
    pub populations: Vec<[f64; 3]>,
    /// `2|⟨0|ρ̃|−1⟩|` with ρ̃ in the frame that follows the noiseless drive.
    pub coherence: Vec<f64>,
    /// Qubit-block Bloch vector in that same frame.
    pub bloch: Vec<[f64; 3]>,
    pub dt: f64,
}

impl LindbladRun {
    /// Projection of the tracked Bloch vector on `axis`.
    pub fn projection(&self, axis: [f64; 3]) -> Vec<f64> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        self.bloch
            .iter()
            .map(|b| (b[0] * axis[0] + b[1] * axis[1] + b[2] * axis[2]) / n)
            .collect()
    }
}

/// Classic RK4 for the density matrix; the drive propagator used for the
/// tracked frame advances with the same step.
///
/// `steps_per_period` sets the step as a fraction of the modulation period
/// (at least 40). Undriven runs use `undriven_dt`.
pub fn evolve_lindblad(
    model: &LindbladModel,
    initial: &DensityMatrix3,
    times: &[f64],
    steps_per_period: usize,
    undriven_dt: f64,
) -> Result<LindbladRun> {
    model.validate()?;
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return Err(Error::invalid(
            "sample times must be non-empty, non-negative and increasing",
        ));
    }
    let dt = match &model.drive {
        Some(d) => {
            if steps_per_period < 40 {
                return Err(Error::invalid("steps_per_period must be >= 40"));
            }
            TAU / d.omega1_tilde / steps_per_period as f64
        }
        None => {
            if !(undriven_dt > 0.0) {
                return Err(Error::invalid("undriven_dt must be > 0"));
            }
            undriven_dt
        }
    };
    let zero = SmallOperator::zeros(3);
    let h_at = |t: f64| match &model.drive {
        Some(d) => drive_hamiltonian(d, t),
        None => zero,
    };

    let mut rho = *initial.operator();
    let mut u = Su2::IDENTITY;
    let mut t = 0.0;
    let mut step: u64 = 0;
    let mut out = LindbladRun {
        times: Vec::with_capacity(times.len()),
        populations: Vec::with_capacity(times.len()),
        coherence: Vec::with_capacity(times.len()),
        bloch: Vec::with_capacity(times.len()),
        dt,
    };
    let half = Complex64::new(0.5 * dt, 0.0);
    let full = Complex64::new(dt, 0.0);
    let sixth = Complex64::new(dt / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    for &target in times {
        let n_target = (target / dt).round() as u64;
        while step < n_target {
            let h0 = h_at(t);
            let hm = h_at(t + 0.5 * dt);
            let h1 = h_at(t + dt);
            let k1 = rhs_into(&rho, &h0, model);
            let k2 = rhs_into(&(&rho + &k1.scale(half)), &hm, model);
            let k3 = rhs_into(&(&rho + &k2.scale(half)), &hm, model);
            let k4 = rhs_into(&(&rho + &k3.scale(full)), &h1, model);
            let sum = &(&(&k1 + &k2.scale(two)) + &k3.scale(two)) + &k4;
            rho = (&rho + &sum.scale(sixth)).untagged();
            if let Some(d) = &model.drive {
                u = cf4_drive_step(d, t, dt).compose(&u);
            }
            t += dt;
            step += 1;
        }
        check_physical(&rho, t, dt)?;
        let tracked = {
            let ue = embed(&u.to_operator());
            // |+1⟩ is not driven; identity there keeps the embedding unitary
            let mut ue = ue;
            ue.set(P1, P1, Complex64::new(1.0, 0.0));
            &(&ue.adjoint() * &rho) * &ue
        };
        out.times.push(t);
        out.populations
            .push([rho.get(M1, M1).re, rho.get(Z0, Z0).re, rho.get(P1, P1).re]);
        out.coherence.push(2.0 * tracked.get(Z0, M1).norm());
        out.bloch.push(block_bloch(&tracked));
    }
    Ok(out)
}

/// Fourth-order commutator-free step of the noiseless drive.
fn cf4_drive_step(d: &DriveConfig, t: f64, dt: f64) -> Su2 {
    const C1: f64 = 0.5 - 0.288_675_134_594_812_9;
    const C2: f64 = 0.5 + 0.288_675_134_594_812_9;
    const A1: f64 = (3.0 - 2.0 * 1.732_050_807_568_877_2) / 12.0;
    const A2: f64 = (3.0 + 2.0 * 1.732_050_807_568_877_2) / 12.0;
    let c1 = (d.omega1_tilde * (t + C1 * dt)).cos();
    let c2 = (d.omega1_tilde * (t + C2 * dt)).cos();
    let hy = 2.0 * d.omega2;
    let first = Su2::from_hamiltonian(0.5 * d.omega1, hy * (A2 * c1 + A1 * c2), 0.0, dt);
    let second = Su2::from_hamiltonian(0.5 * d.omega1, hy * (A1 * c1 + A2 * c2), 0.0, dt);
    second.compose(&first)
}

fn check_physical(rho: &SmallOperator, t: f64, dt: f64) -> Result<()> {
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "trace drifted to {tr} at t={t:e} s (dt={dt:e} s); reduce the step"
        )));
    }
    let herm = rho
        .with_role(Role::Hermitian)
        .map_err(|_| Error::Numerical(format!("density matrix lost Hermiticity at t={t:e} s (dt={dt:e} s)")))?;
    let (vals, _) = herm.eigh()?;
    if vals[0] < -1e-6 {
        return Err(Error::Numerical(format!(
            "negative eigenvalue {:.3e} at t={t:e} s; step dt={dt:e} s is too large",
            vals[0]
        )));
    }
    Ok(())
}

/// Time at which `values` (starting at `values[0]`) first falls to `1/e` of
/// its initial value, linearly interpolated; `None` if it never does.
pub fn one_over_e_time(times: &[f64], values: &[f64]) -> Option<f64> {
    let target = values.first()? * (-1.0f64).exp();
    for i in 1..times.len() {
        if values[i] <= target {
            let f = (values[i - 1] - target) / (values[i - 1] - values[i]);
            return Some(times[i - 1] + f * (times[i] - times[i - 1]));
        }
    }
    None
}

/// Pure-dephasing time `T_φ` from `1/T = 1/T_limit + 1/T_φ`.
pub fn relaxation_free_time(t_total: f64, t_limit: f64) -> Result<f64> {
    if !(t_total > 0.0 && t_limit > 0.0) {
        return Err(Error::invalid("relaxation_free_time needs positive times"));
    }
    if t_total >= t_limit {
        return Err(Error::NoPositiveSolution(format!(
            "total time {t_total:e} s is not shorter than the limit {t_limit:e} s"
        )));
    }
    Ok(1.0 / (1.0 / t_total - 1.0 / t_limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ShiftPolicy;

    fn rates_only(g1: f64) -> LindbladModel {
        LindbladModel {
            gamma1: g1,
            gamma2: 0.0,
            gamma_phi: 0.0,
            drive: None,
        }
    }

    #[test]
    fn zero_rhs() {
        let rho = *DensityMatrix3::basis(1).unwrap().operator();
        let d = lindblad_rhs(&rho, &SmallOperator::zeros(3), &rates_only(0.0));
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn channel_bookkeeping() {
        let rho = *DensityMatrix3::basis(Z0).unwrap().operator();
        let d = lindblad_rhs(&rho, &SmallOperator::zeros(3), &rates_only(2.5));
        assert!((d.get(M1, M1).re - 2.5).abs() < 1e-15);
        assert!((d.get(Z0, Z0).re + 5.0).abs() < 1e-15);
        assert!((d.get(P1, P1).re - 2.5).abs() < 1e-15);
    }

    #[test]
    fn dephasing_only_touches_coherences() {
        let rho = *DensityMatrix3::qubit([1.0, 0.0, 0.0]).unwrap().operator();
        let m = LindbladModel {
            gamma_phi: 10.0,
            ..rates_only(0.0)
        };
        let d = lindblad_rhs(&rho, &SmallOperator::zeros(3), &m);
        // |0⟩–|−1⟩ coherence differs by one unit of S_z: rate Γ/2
        assert!((d.get(Z0, M1).re + 5.0 * rho.get(Z0, M1).re).abs() < 1e-12);
        assert_eq!(d.get(Z0, Z0).re, 0.0);
    }

    #[test]
    fn rate_equations_match_closed_form() {
        // γ₂ = Γ_φ = 0: p₀(t) = 1/3 + (2/3) e^{−3γ₁t}
        let g1 = 61.6;
        let m = rates_only(g1);
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 1e-3).collect();
        let run = evolve_lindblad(&m, &DensityMatrix3::basis(Z0).unwrap(), &times, 40, 1e-6).unwrap();
        for (t, p) in run.times.iter().zip(&run.populations) {
            let expect = 1.0 / 3.0 + 2.0 / 3.0 * (-3.0 * g1 * t).exp();
            assert!((p[1] - expect).abs() < 1e-6);
            assert!((p[0] - p[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_system_matches_unitary() {
        let w1 = TAU * 4.47e6;
        let d = DriveConfig::new(w1, TAU * 0.9e6, ShiftPolicy::Correlated(1.0)).unwrap();
        let m = LindbladModel {
            drive: Some(d),
            ..rates_only(0.0)
        };
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.3e-6).collect();
        let b0 = [1.0, 0.0, 0.0];
        let run = evolve_lindblad(&m, &DensityMatrix3::qubit(b0).unwrap(), &times, 400, 0.0).unwrap();
        // tracked frame undoes the drive exactly when nothing else acts
        for b in &run.bloch {
            for k in 0..3 {
                assert!((b[k] - b0[k]).abs() < 1e-6, "{b:?}");
            }
        }
    }

    #[test]
    fn relaxation_free_examples() {
        assert!((relaxation_free_time(2.32e-3, 3.0e-3).unwrap() - 10.235e-3).abs() < 0.01e-3);
        assert!((relaxation_free_time(2.798e-3, 3.35e-3).unwrap() / 17.0e-3 - 1.0).abs() < 0.01);
        assert!((relaxation_free_time(1e-3, f64::INFINITY).unwrap() - 1e-3).abs() < 1e-18);
        assert!(matches!(
            relaxation_free_time(3e-3, 2e-3),
            Err(Error::NoPositiveSolution(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rhs_is_traceless(
                x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5,
                g1 in 0.0f64..100.0, g2 in 0.0f64..100.0, gp in 0.0f64..500.0,
                t in 0.0f64..1e-6,
            ) {
                let rho = *DensityMatrix3::qubit([x, y, z]).unwrap().operator();
                let d = DriveConfig::new(TAU * 2e6, TAU * 0.2e6, ShiftPolicy::Resonant).unwrap();
                let m = LindbladModel { gamma1: g1, gamma2: g2, gamma_phi: gp, drive: Some(d) };
                let r = lindblad_rhs(&rho, &drive_hamiltonian(&d, t), &m);
                prop_assert!(r.trace().norm() < 1e-12 * (1.0 + d.omega1));
            }
        }
    }
}
