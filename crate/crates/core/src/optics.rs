//! Optical elements acting on single polarization modes, and the polarizing
//! beam splitter used as a parity check between two modes.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qstate::{ModeId, PolKet, PureState, Register};

/// Transmission of one Brewster window for horizontal polarization.
pub const BREWSTER_T_H: f64 = 0.98;
/// Transmission of one Brewster window for vertical polarization.
pub const BREWSTER_T_V: f64 = 0.73;
/// Tilt of the windows' vertical axis. Recorded only; the transmissions
/// above already describe the element.
pub const BREWSTER_TILT_DEG: f64 = 56.0;

/// 2x2 complex matrix acting on `(H, V)` amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix([[Complex64; 2]; 2]);

impl JonesMatrix {
    pub fn new(entries: [[Complex64; 2]; 2]) -> Self {
        JonesMatrix(entries)
    }

    pub fn identity() -> Self {
        Self::diagonal(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))
    }

    pub fn diagonal(h: Complex64, v: Complex64) -> Self {
        let z = Complex64::new(0.0, 0.0);
        JonesMatrix([[h, z], [z, v]])
    }

    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        self.0
    }

    #[inline]
    pub fn apply(&self, h: Complex64, v: Complex64) -> (Complex64, Complex64) {
        let m = &self.0;
        (m[0][0] * h + m[0][1] * v, m[1][0] * h + m[1][1] * v)
    }

    pub fn apply_ket(&self, k: &PolKet) -> PolKet {
        let (h, v) = self.apply(k.h, k.v);
        PolKet::new(h, v)
    }

    /// `self` followed by `next`, i.e. the matrix product `next * self`.
    pub fn then(&self, next: &JonesMatrix) -> JonesMatrix {
        let (a, b) = (&next.0, &self.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        JonesMatrix(out)
    }

    pub fn adjoint(&self) -> JonesMatrix {
        let m = &self.0;
        JonesMatrix([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn conj(&self) -> JonesMatrix {
        let m = &self.0;
        JonesMatrix([[m[0][0].conj(), m[0][1].conj()], [m[1][0].conj(), m[1][1].conj()]])
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let p = self.then(&self.adjoint());
        let id = JonesMatrix::identity();
        (0..2).all(|r| (0..2).all(|c| (p.0[r][c] - id.0[r][c]).norm() <= tol))
    }

    /// Largest singular value.
    pub fn max_singular_value(&self) -> f64 {
        // eigenvalues of the Hermitian 2x2 matrix J^dagger J
        let g = self.then(&self.adjoint());
        let (a, d) = (g.0[0][0].re, g.0[1][1].re);
        let b = g.0[0][1].norm_sqr();
        let half_tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b).sqrt();
        (half_tr + disc).max(0.0).sqrt()
    }

    /// True when the element cannot increase the norm of any input.
    pub fn is_passive(&self, tol: f64) -> bool {
        self.max_singular_value() <= 1.0 + tol
    }
}

/// Half-wave plate with fast axis at `theta`:
/// `[[cos 2θ, sin 2θ], [sin 2θ, -cos 2θ]]`.
pub fn half_wave_plate(theta: f64) -> JonesMatrix {
    let (s, c) = (2.0 * theta).sin_cos();
    JonesMatrix([
        [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(-c, 0.0)],
    ])
}

/// 90° polarization rotation, H <-> V.
pub fn r90() -> JonesMatrix {
    half_wave_plate(std::f64::consts::FRAC_PI_4)
}

/// Birefringent compensator adding phase `phi` to the V component.
pub fn phase_compensator(phi: f64) -> JonesMatrix {
    JonesMatrix::diagonal(Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, phi))
}

/// Transmission axis of a linear polarizer at `theta`: `cos θ|H> + sin θ|V>`.
pub fn polarizer(theta: f64) -> PolKet {
    let (s, c) = theta.sin_cos();
    PolKet::new(Complex64::new(c, 0.0), Complex64::new(s, 0.0))
}

/// Polarization-dependent attenuator `diag(√t_h, √t_v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterElement {
    jones: JonesMatrix,
    t_h: f64,
    t_v: f64,
}

impl FilterElement {
    /// General diagonal filter; both transmissions must lie in `[0, 1]`.
    pub fn new(t_h: f64, t_v: f64) -> Result<Self> {
        for (name, t) in [("t_h", t_h), ("t_v", t_v)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(name, t, "transmission must lie in [0, 1]"));
            }
        }
        Ok(FilterElement {
            jones: JonesMatrix::diagonal(
                Complex64::new(t_h.sqrt(), 0.0),
                Complex64::new(t_v.sqrt(), 0.0),
            ),
            t_h,
            t_v,
        })
    }

    pub fn identity() -> Self {
        FilterElement::new(1.0, 1.0).expect("unit transmissions")
    }

    pub fn jones(&self) -> &JonesMatrix {
        &self.jones
    }

    pub fn t_h(&self) -> f64 {
        self.t_h
    }

    pub fn t_v(&self) -> f64 {
        self.t_v
    }

    /// `t_h / t_v`, the factor applied to the H:V intensity ratio.
    pub fn intensity_ratio(&self) -> f64 {
        self.t_h / self.t_v
    }
}

/// Stack of `n` identical Brewster windows. Windows favor horizontal
/// polarization, so `0 < t_v <= t_h <= 1` is required.
pub fn brewster_window(t_h: f64, t_v: f64, n: u32) -> Result<FilterElement> {
    if !(t_h > 0.0 && t_h <= 1.0) {
        return Err(Error::invalid("t_h", t_h, "transmission must lie in (0, 1]"));
    }
    if !(t_v > 0.0 && t_v <= t_h) {
        return Err(Error::invalid("t_v", t_v, "transmission must lie in (0, t_h]"));
    }
    if n == 0 {
        return Err(Error::invalid("windows", 0.0, "need at least one window"));
    }
    FilterElement::new(t_h.powi(n as i32), t_v.powi(n as i32))
}

/// Keeps the components in which `in_a` and `in_b` carry equal polarization
/// (both transmitted or both reflected, so one photon leaves each output) and
/// renames the modes to the PBS outputs. The result is left unnormalized.
///
/// Labeling: `in_a -> out_a`, `in_b -> out_b`. Only equal-polarization terms
/// survive, so swapping the two output labels gives the same state.
pub fn pbs_post_select<R: Register>(
    s: &R,
    in_a: &ModeId,
    in_b: &ModeId,
    out_a: &ModeId,
    out_b: &ModeId,
) -> Result<R> {
    if in_a == in_b {
        return Err(Error::DuplicateMode(in_a.to_string()));
    }
    if out_a == out_b {
        return Err(Error::DuplicateMode(out_a.to_string()));
    }
    for out in [out_a, out_b] {
        if s.modes().contains(out) && out != in_a && out != in_b {
            return Err(Error::DuplicateMode(out.to_string()));
        }
    }
    let kept = s.keep_equal_polarization(in_a, in_b)?;
    // route through a temporary label so that out_a == in_b is handled
    let tmp = ModeId::new(format!("{in_a}\u{0}pbs"));
    kept.relabel(in_a, &tmp)?
        .relabel(in_b, out_b)?
        .relabel(&tmp, out_a)
}

/// Two-fold coincidence at the PBS outputs: normalized conditional state and
/// its probability.
pub fn pbs_coincidence(
    s: &PureState,
    in_a: &ModeId,
    in_b: &ModeId,
    out_a: &ModeId,
    out_b: &ModeId,
) -> Result<(PureState, f64)> {
    pbs_post_select(s, in_a, in_b, out_a, out_b)?.normalize()
}
