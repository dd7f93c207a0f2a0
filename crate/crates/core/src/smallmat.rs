//! Dense complex 2×2 and 3×3 operators.
//!
//! Everything here is value-typed and allocation free. The 2×2 exponential
//! uses the closed Pauli form, the 3×3 one diagonalizes with complex Jacobi
//! sweeps. [`Su2`] is the fast path used inside Monte Carlo loops: a unit
//! quaternion standing for `w·1 − i(x σx + y σy + z σz)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const CI: Complex64 = Complex64::new(0.0, 1.0);

/// Off-diagonal tolerance (relative) for Jacobi sweeps.
const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

/// What an operator is used as. Tags are checked when assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    General,
    Hermitian,
    Unitary,
    Density,
}

#[derive(Clone, Copy, PartialEq)]
pub struct SmallOperator {
    dim: usize,
    data: [Complex64; 9],
    role: Role,
}

impl fmt::Debug for SmallOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SmallOperator<{}x{}, {:?}>[", self.dim, self.dim, self.role)?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, ", ")?;
                }
                let z = self.get(i, j);
                write!(f, "{:.6}{:+.6}i", z.re, z.im)?;
            }
        }
        write!(f, "]")
    }
}

impl SmallOperator {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "SmallOperator supports dim 2 or 3, got {dim}");
        SmallOperator {
            dim,
            data: [C0; 9],
            role: Role::General,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, C1);
        }
        m.role = Role::Unitary;
        m
    }

    pub fn from_rows2(rows: [[Complex64; 2]; 2]) -> Self {
        let mut m = Self::zeros(2);
        for (i, row) in rows.iter().enumerate() {
            for (j, &z) in row.iter().enumerate() {
                m.set(i, j, z);
            }
        }
        m
    }

    pub fn from_rows3(rows: [[Complex64; 3]; 3]) -> Self {
        let mut m = Self::zeros(3);
        for (i, row) in rows.iter().enumerate() {
            for (j, &z) in row.iter().enumerate() {
                m.set(i, j, z);
            }
        }
        m
    }

    /// Rank-one projector `|v⟩⟨v|` (not normalized).
    pub fn outer(v: &[Complex64]) -> Self {
        let mut m = Self::zeros(v.len());
        for i in 0..v.len() {
            for j in 0..v.len() {
                m.set(i, j, v[i] * v[j].conj());
            }
        }
        m
    }

    pub fn pauli_x() -> Self {
        let mut m = Self::from_rows2([[C0, C1], [C1, C0]]);
        m.role = Role::Hermitian;
        m
    }

    pub fn pauli_y() -> Self {
        let mut m = Self::from_rows2([[C0, -CI], [CI, C0]]);
        m.role = Role::Hermitian;
        m
    }

    pub fn pauli_z() -> Self {
        let mut m = Self::from_rows2([[C1, C0], [C0, -C1]]);
        m.role = Role::Hermitian;
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn role(&self) -> Role {
        self.role
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * 3 + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: Complex64) {
        self.data[i * 3 + j] = z;
    }

    /// Drops the role tag. Mutating accessors do not re-validate tags, so
    /// callers that edit entries should untag first.
    pub fn untagged(mut self) -> Self {
        self.role = Role::General;
        self
    }

    /// Assigns a role after checking the corresponding invariant.
    pub fn with_role(mut self, role: Role) -> Result<Self> {
        let ok = match role {
            Role::General => true,
            Role::Hermitian => self.is_hermitian(),
            Role::Unitary => self.is_unitary(),
            Role::Density => self.is_density(),
        };
        if !ok {
            return Err(Error::ContractViolation(format!(
                "operator does not satisfy the {role:?} invariant: {self:?}"
            )));
        }
        self.role = role;
        Ok(self)
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.set(i, j, self.get(j, i).conj());
            }
        }
        m.role = match self.role {
            Role::Hermitian | Role::Unitary | Role::Density => self.role,
            Role::General => Role::General,
        };
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = *self;
        for z in m.data.iter_mut() {
            *z *= s;
        }
        m.role = Role::General;
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn is_hermitian(&self) -> bool {
        let scale = self.max_abs();
        if scale == 0.0 {
            return true;
        }
        self.max_diff(&self.adjoint()) < 1e-12 * scale
    }

    pub fn is_unitary(&self) -> bool {
        let p = &self.adjoint() * self;
        p.max_diff(&Self::identity(self.dim)) < 1e-10
    }

    pub fn is_density(&self) -> bool {
        if (self.trace() - C1).norm() >= 1e-10 || !self.is_hermitian() {
            return false;
        }
        match self.eigh() {
            Ok((vals, _)) => vals.iter().all(|&v| v >= -1e-10),
            Err(_) => false,
        }
    }

    /// Eigendecomposition of a Hermitian operator by cyclic complex Jacobi
    /// sweeps. Returns ascending eigenvalues and the unitary whose columns are
    /// the eigenvectors.
    pub fn eigh(&self) -> Result<(Vec<f64>, SmallOperator)> {
        if !self.is_hermitian() {
            return Err(Error::ContractViolation("eigh requires a Hermitian operator".into()));
        }
        let n = self.dim;
        let mut a = *self;
        let mut v = Self::identity(n);
        let scale = a.max_abs().max(f64::MIN_POSITIVE);

        for _ in 0..JACOBI_MAX_SWEEPS {
            let off = off_diagonal_max(&a);
            if off <= JACOBI_TOL * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    let r = apq.norm();
                    if r <= JACOBI_TOL * scale * 1e-3 {
                        continue;
                    }
                    // Phase that makes the pivot real and positive, then a real rotation.
                    let phase = apq / r;
                    let alpha = a.get(p, p).re;
                    let beta = a.get(q, q).re;
                    let tau = (beta - alpha) / (2.0 * r);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;

                    let mut rot = Self::identity(n);
                    rot.set(p, p, Complex64::new(c, 0.0));
                    rot.set(p, q, Complex64::new(s, 0.0));
                    rot.set(q, p, -phase.conj() * s);
                    rot.set(q, q, phase.conj() * c);
                    a = &(&rot.adjoint() * &a) * &rot;
                    v = &v * &rot;
                }
            }
        }
        if off_diagonal_max(&a) > 1e3 * JACOBI_TOL * scale {
            return Err(Error::Numerical("Jacobi eigensolver did not converge".into()));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a.get(i, i).re.total_cmp(&a.get(j, j).re));
        let vals = order.iter().map(|&i| a.get(i, i).re).collect();
        let mut vecs = Self::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            for row in 0..n {
                vecs.set(row, col, v.get(row, src));
            }
        }
        vecs.role = Role::Unitary;
        Ok((vals, vecs))
    }
}

fn off_diagonal_max(a: &SmallOperator) -> f64 {
    let mut off: f64 = 0.0;
    for i in 0..a.dim {
        for j in 0..a.dim {
            if i != j {
                off = off.max(a.get(i, j).norm());
            }
        }
    }
    off
}

impl Mul for &SmallOperator {
    type Output = SmallOperator;

    fn mul(self, rhs: &SmallOperator) -> SmallOperator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        let mut m = SmallOperator::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = C0;
                for k in 0..n {
                    acc += self.get(i, k) * rhs.get(k, j);
                }
                m.set(i, j, acc);
            }
        }
        if self.role == Role::Unitary && rhs.role == Role::Unitary {
            m.role = Role::Unitary;
        }
        m
    }
}

impl Add for &SmallOperator {
    type Output = SmallOperator;

    fn add(self, rhs: &SmallOperator) -> SmallOperator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let mut m = *self;
        for (a, b) in m.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
        m.role = if self.role == Role::Hermitian && rhs.role == Role::Hermitian {
            Role::Hermitian
        } else {
            Role::General
        };
        m
    }
}

impl Sub for &SmallOperator {
    type Output = SmallOperator;

    fn sub(self, rhs: &SmallOperator) -> SmallOperator {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let mut m = *self;
        for (a, b) in m.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        m.role = Role::General;
        m
    }
}

/// `(hx σx + hy σy + hz σz) / 2`, tagged Hermitian.
pub fn pauli_hamiltonian(hx: f64, hy: f64, hz: f64) -> Result<SmallOperator> {
    if !(hx.is_finite() && hy.is_finite() && hz.is_finite()) {
        return Err(Error::invalid(format!(
            "pauli_hamiltonian: non-finite component ({hx}, {hy}, {hz})"
        )));
    }
    let mut m = SmallOperator::from_rows2([
        [Complex64::new(hz / 2.0, 0.0), Complex64::new(hx / 2.0, -hy / 2.0)],
        [Complex64::new(hx / 2.0, hy / 2.0), Complex64::new(-hz / 2.0, 0.0)],
    ]);
    m.role = Role::Hermitian;
    Ok(m)
}

/// `exp(−i H dt)` for a Hermitian-tagged operator.
///
/// The 2×2 case splits off the trace and uses the closed Pauli form; the
/// global phase `exp(−i Tr(H) dt / 2)` is kept. The 3×3 case goes through
/// [`SmallOperator::eigh`].
pub fn expm_i(h: &SmallOperator, dt: f64) -> Result<SmallOperator> {
    if h.role != Role::Hermitian {
        return Err(Error::ContractViolation(
            "expm_i requires a Hermitian-tagged operator".into(),
        ));
    }
    if !dt.is_finite() {
        return Err(Error::invalid("expm_i: non-finite dt"));
    }
    match h.dim {
        2 => {
            let a0 = 0.5 * (h.get(0, 0).re + h.get(1, 1).re);
            let hz = h.get(0, 0).re - h.get(1, 1).re;
            let hx = 2.0 * h.get(0, 1).re;
            let hy = -2.0 * h.get(0, 1).im;
            let phase = Complex64::from_polar(1.0, -a0 * dt);
            let mut u = Su2::from_hamiltonian(hx, hy, hz, dt).to_operator().scale(phase);
            u.role = Role::Unitary;
            Ok(u)
        }
        _ => {
            let (vals, vecs) = h.eigh()?;
            let mut d = SmallOperator::zeros(h.dim);
            for (i, &l) in vals.iter().enumerate() {
                d.set(i, i, Complex64::from_polar(1.0, -l * dt));
            }
            let mut u = &(&vecs * &d) * &vecs.adjoint();
            u.role = Role::Unitary;
            Ok(u)
        }
    }
}

/// Element of SU(2) stored as a unit quaternion: `U = w·1 − i(x σx + y σy + z σz)`.
///
/// Multiplication costs 16 real products, which keeps the Monte Carlo inner
/// loop cheap. Global phase is irrelevant for every observable computed from
/// it (Bloch rotations, state overlaps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2 {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Su2 {
    pub const IDENTITY: Su2 = Su2 {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// `exp(−i dt (hx σx + hy σy + hz σz)/2)`.
    #[inline]
    pub fn from_hamiltonian(hx: f64, hy: f64, hz: f64, dt: f64) -> Su2 {
        let g = (hx * hx + hy * hy + hz * hz).sqrt();
        let theta = 0.5 * g * dt;
        let (s, c) = theta.sin_cos();
        // sin(theta)/g, continuous through g = 0
        let k = if theta.abs() > 1e-8 {
            s / g
        } else {
            0.5 * dt * (1.0 - theta * theta / 6.0)
        };
        Su2 {
            w: c,
            x: k * hx,
            y: k * hy,
            z: k * hz,
        }
    }

    /// `self · rhs` (apply `rhs` first).
    #[inline]
    pub fn compose(&self, rhs: &Su2) -> Su2 {
        let (a, b) = (self, rhs);
        Su2 {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + b.w * a.x + (a.y * b.z - a.z * b.y),
            y: a.w * b.y + b.w * a.y + (a.z * b.x - a.x * b.z),
            z: a.w * b.z + b.w * a.z + (a.x * b.y - a.y * b.x),
        }
    }

    pub fn inverse(&self) -> Su2 {
        Su2 {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Su2 {
        let n = self.norm();
        Su2 {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn to_operator(&self) -> SmallOperator {
        let mut m = SmallOperator::from_rows2([
            [Complex64::new(self.w, -self.z), Complex64::new(-self.y, -self.x)],
            [Complex64::new(self.y, -self.x), Complex64::new(self.w, self.z)],
        ]);
        m.role = Role::Unitary;
        m
    }

    /// Rotation of the Bloch vector induced by `ρ ↦ U ρ U†`.
    #[inline]
    pub fn bloch_rotation(&self) -> [[f64; 3]; 3] {
        let Su2 { w, x, y, z } = *self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Amplitude `⟨i|U|j⟩` in the computational basis.
    pub fn amplitude(&self, i: usize, j: usize) -> Complex64 {
        self.to_operator().get(i, j)
    }
}

/// Density matrix `(1 + b·σ)/2` for a Bloch vector `b`.
pub fn density_from_bloch(b: [f64; 3]) -> SmallOperator {
    let mut m = SmallOperator::from_rows2([
        [
            Complex64::new(0.5 * (1.0 + b[2]), 0.0),
            Complex64::new(0.5 * b[0], -0.5 * b[1]),
        ],
        [
            Complex64::new(0.5 * b[0], 0.5 * b[1]),
            Complex64::new(0.5 * (1.0 - b[2]), 0.0),
        ],
    ]);
    m.role = Role::General;
    m
}
