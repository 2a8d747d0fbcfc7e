use num_complex::Complex64;

use super::{
    bit_at, canonicalize, check_fresh, labels, permute_index, position, shift, split_positions,
    sub_index, DensityOperator, ModeId, Pol, PolKet, Register, BRANCH_EPS, NORM_TOL,
};
use crate::error::{Error, Result};
use crate::optics::JonesMatrix;

/// Amplitude table over H/V bit strings of a set of labeled modes.
///
/// The norm is not forced to one: filters and post-selections leave the
/// state unnormalized and its squared norm carries the branch probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    modes: Vec<ModeId>,
    amps: Vec<Complex64>,
}

impl PureState {
    /// Builds a state from modes in any order; amplitudes are indexed with
    /// the first listed mode as most significant bit and are reordered into
    /// canonical form.
    pub fn new(modes: Vec<ModeId>, amps: Vec<Complex64>) -> Result<Self> {
        let n = modes.len();
        let expected = 1usize << n;
        if amps.len() != expected {
            return Err(Error::Dimension {
                expected,
                found: amps.len(),
            });
        }
        let (modes, perm) = canonicalize(modes)?;
        let mut out = vec![Complex64::new(0.0, 0.0); expected];
        for (old, a) in amps.into_iter().enumerate() {
            out[permute_index(old, n, &perm)] = a;
        }
        Ok(PureState { modes, amps: out })
    }

    /// Product of single-mode kets.
    pub fn product(kets: &[(ModeId, PolKet)]) -> Result<Self> {
        let modes: Vec<ModeId> = kets.iter().map(|(m, _)| m.clone()).collect();
        let n = modes.len();
        let amps = (0..1usize << n)
            .map(|i| {
                kets.iter()
                    .enumerate()
                    .fold(Complex64::new(1.0, 0.0), |acc, (p, (_, k))| {
                        acc * k.component(bit_at(i, n, p))
                    })
            })
            .collect();
        PureState::new(modes, amps)
    }

    /// Superposition of basis strings, e.g.
    /// `from_terms(&["1", "2"], &[(a, "HV"), (b, "VH")])`.
    pub fn from_terms(modes: &[&str], terms: &[(Complex64, &str)]) -> Result<Self> {
        let n = modes.len();
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        for (c, pattern) in terms {
            let pols: Vec<Pol> = pattern.chars().filter_map(Pol::from_char).collect();
            if pols.len() != n || pattern.chars().count() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: pattern.chars().count(),
                });
            }
            let idx = pols.iter().fold(0, |acc, p| (acc << 1) | p.bit());
            amps[idx] += *c;
        }
        PureState::new(modes.iter().map(|&m| ModeId::from(m)).collect(), amps)
    }

    /// `(|HV> + |VH>)/√2` on the two modes.
    pub fn psi_plus(first: &str, second: &str) -> Self {
        Self::bell(first, second, 1.0)
    }

    /// `(|HV> - |VH>)/√2` on the two modes.
    pub fn psi_minus(first: &str, second: &str) -> Self {
        Self::bell(first, second, -1.0)
    }

    fn bell(first: &str, second: &str, sign: f64) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        PureState::from_terms(
            &[first, second],
            &[
                (Complex64::new(s, 0.0), "HV"),
                (Complex64::new(sign * s, 0.0), "VH"),
            ],
        )
        .expect("two distinct modes")
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// Amplitude of the basis string given as `(mode, polarization)` pairs
    /// covering every mode.
    pub fn amplitude(&self, pols: &[(ModeId, Pol)]) -> Result<Complex64> {
        if pols.len() != self.modes.len() {
            return Err(Error::Dimension {
                expected: self.modes.len(),
                found: pols.len(),
            });
        }
        let n = self.modes.len();
        let mut idx = 0;
        for (m, p) in pols {
            idx |= p.bit() << shift(n, position(&self.modes, m)?);
        }
        Ok(self.amps[idx])
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        PureState {
            modes: self.modes.clone(),
            amps: self.amps.iter().map(|a| a * c).collect(),
        }
    }

    fn check_same_modes(&self, other: &PureState) -> Result<()> {
        if self.modes != other.modes {
            return Err(Error::ModeMismatch {
                expected: labels(&self.modes),
                found: labels(&other.modes),
            });
        }
        Ok(())
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        self.check_same_modes(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn add(&self, other: &PureState) -> Result<PureState> {
        self.check_same_modes(other)?;
        Ok(PureState {
            modes: self.modes.clone(),
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let nb = other.modes.len();
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        debug_assert_eq!(amps.len(), 1 << (self.modes.len() + nb));
        PureState::new(modes, amps)
    }

    /// Unit-norm copy and the squared norm of the input.
    pub fn normalize(&self) -> Result<(PureState, f64)> {
        let norm_sq = self.norm_sq();
        if norm_sq <= BRANCH_EPS {
            return Err(Error::ImpossibleBranch { prob: norm_sq });
        }
        Ok((self.scaled(Complex64::new(1.0 / norm_sq.sqrt(), 0.0)), norm_sq))
    }

    pub fn apply_single_mode(&self, mode: &ModeId, jones: &JonesMatrix) -> Result<PureState> {
        let n = self.modes.len();
        let bit = 1 << shift(n, position(&self.modes, mode)?);
        let mut amps = self.amps.clone();
        for i0 in (0..amps.len()).filter(|i| i & bit == 0) {
            let i1 = i0 | bit;
            let (h, v) = jones.apply(amps[i0], amps[i1]);
            amps[i0] = h;
            amps[i1] = v;
        }
        Ok(PureState {
            modes: self.modes.clone(),
            amps,
        })
    }

    /// Contracts the modes of `target` and returns the unnormalized residual
    /// state on the remaining modes.
    pub fn project_onto(&self, target: &PureState) -> Result<PureState> {
        let n = self.modes.len();
        let (tpos, rest) = split_positions(&self.modes, &target.modes)?;
        let mut out = vec![Complex64::new(0.0, 0.0); 1 << rest.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let t = sub_index(i, n, &tpos);
            out[sub_index(i, n, &rest)] += target.amps[t].conj() * a;
        }
        Ok(PureState {
            modes: rest.iter().map(|&p| self.modes[p].clone()).collect(),
            amps: out,
        })
    }

    /// Projects the listed modes onto single-photon kets and returns the
    /// normalized residual state with the branch probability.
    pub fn project(&self, targets: &[(ModeId, PolKet)]) -> Result<(PureState, f64)> {
        let target = product_target(targets)?;
        self.project_onto(&target)?.normalize()
    }

    pub fn keep_equal_polarization(&self, a: &ModeId, b: &ModeId) -> Result<PureState> {
        let n = self.modes.len();
        let pa = position(&self.modes, a)?;
        let pb = position(&self.modes, b)?;
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if bit_at(i, n, pa) == bit_at(i, n, pb) {
                    x
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Ok(PureState {
            modes: self.modes.clone(),
            amps,
        })
    }

    /// Components where modes `a`, `b` are both `pol`.
    pub fn sector(&self, a: &ModeId, b: &ModeId, pol: Pol) -> Result<PureState> {
        let n = self.modes.len();
        let pa = position(&self.modes, a)?;
        let pb = position(&self.modes, b)?;
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if bit_at(i, n, pa) == pol.bit() && bit_at(i, n, pb) == pol.bit() {
                    x
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Ok(PureState {
            modes: self.modes.clone(),
            amps,
        })
    }

    pub fn relabel(&self, from: &ModeId, to: &ModeId) -> Result<PureState> {
        let pos = check_fresh(&self.modes, from, to)?;
        let mut modes = self.modes.clone();
        modes[pos] = to.clone();
        PureState::new(modes, self.amps.clone())
    }

    /// Rank-one operator `|s><s|`; the state must be normalized.
    pub fn to_density(&self) -> Result<DensityOperator> {
        let norm_sq = self.norm_sq();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sq });
        }
        Ok(DensityOperator::from_pure(self))
    }

    /// `|<self|other>|` for states over the same modes.
    pub fn overlap(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }
}

/// Product target ket from `(mode, ket)` pairs; every ket must be unit norm.
pub(crate) fn product_target(targets: &[(ModeId, PolKet)]) -> Result<PureState> {
    for (_, k) in targets {
        let norm_sq = k.norm_sq();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sq });
        }
    }
    PureState::product(targets)
}

impl Register for PureState {
    fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    fn weight(&self) -> f64 {
        self.norm_sq()
    }

    fn tensor(&self, other: &Self) -> Result<Self> {
        PureState::tensor(self, other)
    }

    fn apply_single_mode(&self, mode: &ModeId, jones: &JonesMatrix) -> Result<Self> {
        PureState::apply_single_mode(self, mode, jones)
    }

    fn project_onto(&self, target: &PureState) -> Result<Self> {
        PureState::project_onto(self, target)
    }

    fn keep_equal_polarization(&self, a: &ModeId, b: &ModeId) -> Result<Self> {
        PureState::keep_equal_polarization(self, a, b)
    }

    fn dephase_equal_sectors(&self, a: &ModeId, b: &ModeId, gamma: f64) -> Result<Self> {
        position(&self.modes, a)?;
        position(&self.modes, b)?;
        if gamma == 1.0 {
            Ok(self.clone())
        } else {
            Err(Error::RequiresMixedState)
        }
    }

    fn relabel(&self, from: &ModeId, to: &ModeId) -> Result<Self> {
        PureState::relabel(self, from, to)
    }

    fn normalized(&self) -> Result<(Self, f64)> {
        self.normalize()
    }

    fn fidelity_to_pure(&self, target: &PureState) -> Result<f64> {
        Ok(target.inner(self)?.norm_sqr())
    }

    fn to_operator(&self) -> DensityOperator {
        DensityOperator::from_pure(self)
    }

    fn from_pure(s: &PureState) -> Self {
        s.clone()
    }
}
