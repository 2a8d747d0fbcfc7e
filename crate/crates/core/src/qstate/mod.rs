//! Dense multi-photon polarization Hilbert space.
//!
//! Every photon lives in a labeled spatial mode carrying a two-level
//! polarization system (H = 0, V = 1). A state over `n` modes is a dense
//! vector (or matrix) of dimension `2^n`. Modes are always kept in canonical
//! order, sorted by label, and the first canonical mode is the most
//! significant bit of the basis index. Two states with the same mode set
//! therefore always share the same indexing.

mod density;
mod pure;

pub use density::DensityOperator;
pub use pure::PureState;

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::optics::JonesMatrix;

/// Tolerance for squared norms of pure states.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance for operator checks (hermiticity, trace, positivity).
pub const OPERATOR_TOL: f64 = 1e-10;
/// Branch weights at or below this value are treated as impossible outcomes.
pub const BRANCH_EPS: f64 = 1e-14;

/// Label of a spatial photon mode, e.g. `"1"`, `"2p"` or `"4p"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId(String);

impl ModeId {
    pub fn new(label: impl Into<String>) -> Self {
        ModeId(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ModeId {
    fn from(s: &str) -> Self {
        ModeId(s.to_string())
    }
}

impl From<String> for ModeId {
    fn from(s: String) -> Self {
        ModeId(s)
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Polarization of a single photon in the H/V basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pol {
    H,
    V,
}

impl Pol {
    pub fn bit(self) -> usize {
        match self {
            Pol::H => 0,
            Pol::V => 1,
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'H' | 'h' => Some(Pol::H),
            'V' | 'v' => Some(Pol::V),
            _ => None,
        }
    }
}

/// Single-photon polarization ket `h|H> + v|V>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolKet {
    pub h: Complex64,
    pub v: Complex64,
}

impl PolKet {
    pub const H: PolKet = PolKet {
        h: Complex64::new(1.0, 0.0),
        v: Complex64::new(0.0, 0.0),
    };
    pub const V: PolKet = PolKet {
        h: Complex64::new(0.0, 0.0),
        v: Complex64::new(1.0, 0.0),
    };

    pub fn new(h: Complex64, v: Complex64) -> Self {
        PolKet { h, v }
    }

    /// `(|H> + |V>)/√2`
    pub fn plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        PolKet::new(Complex64::new(s, 0.0), Complex64::new(s, 0.0))
    }

    /// `(|H> - |V>)/√2`
    pub fn minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        PolKet::new(Complex64::new(s, 0.0), Complex64::new(-s, 0.0))
    }

    pub fn basis(p: Pol) -> Self {
        match p {
            Pol::H => PolKet::H,
            Pol::V => PolKet::V,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub(crate) fn component(&self, bit: usize) -> Complex64 {
        if bit == 0 {
            self.h
        } else {
            self.v
        }
    }
}

/// Common interface of pure and mixed states, so that every protocol can be
/// evaluated on both representations.
///
/// All operations keep states unnormalized: the weight of a state (squared
/// norm or trace) is the probability of the chain of filters and
/// post-selections that produced it.
pub trait Register: Clone + Sized {
    fn modes(&self) -> &[ModeId];

    /// Squared norm for pure states, trace for density operators.
    fn weight(&self) -> f64;

    fn tensor(&self, other: &Self) -> Result<Self>;

    fn apply_single_mode(&self, mode: &ModeId, jones: &JonesMatrix) -> Result<Self>;

    /// Contracts the target modes with `target` and drops them. The result
    /// is left unnormalized.
    fn project_onto(&self, target: &PureState) -> Result<Self>;

    /// Discards every basis component in which modes `a` and `b` carry
    /// different polarizations.
    fn keep_equal_polarization(&self, a: &ModeId, b: &ModeId) -> Result<Self>;

    /// Scales the coherence between the `HH` and `VV` sectors of modes
    /// `a`, `b` by `gamma`.
    fn dephase_equal_sectors(&self, a: &ModeId, b: &ModeId, gamma: f64) -> Result<Self>;

    fn relabel(&self, from: &ModeId, to: &ModeId) -> Result<Self>;

    /// Returns the normalized state together with the weight of the input.
    fn normalized(&self) -> Result<(Self, f64)>;

    /// `<t|rho|t>`, or `|<t|s>|^2` for pure states.
    fn fidelity_to_pure(&self, target: &PureState) -> Result<f64>;

    /// Density operator `|s><s|` (or the operator itself), without any
    /// normalization check.
    fn to_operator(&self) -> DensityOperator;

    fn from_pure(s: &PureState) -> Self;
}

pub(crate) fn labels(modes: &[ModeId]) -> String {
    modes
        .iter()
        .map(ModeId::as_str)
        .collect::<Vec<_>>()
        .join(",")
}

/// Sorts `modes` and returns the canonical list with `perm[new] = old`.
pub(crate) fn canonicalize(modes: Vec<ModeId>) -> Result<(Vec<ModeId>, Vec<usize>)> {
    let mut order: Vec<usize> = (0..modes.len()).collect();
    order.sort_by(|&x, &y| modes[x].cmp(&modes[y]));
    for w in order.windows(2) {
        if modes[w[0]] == modes[w[1]] {
            return Err(Error::DuplicateMode(modes[w[0]].0.clone()));
        }
    }
    let sorted = order.iter().map(|&i| modes[i].clone()).collect();
    Ok((sorted, order))
}

pub(crate) fn position(modes: &[ModeId], m: &ModeId) -> Result<usize> {
    modes
        .iter()
        .position(|x| x == m)
        .ok_or_else(|| Error::UnknownMode(m.0.clone()))
}

/// Bit shift of mode position `pos` in an `n`-mode index.
#[inline]
pub(crate) fn shift(n: usize, pos: usize) -> usize {
    n - 1 - pos
}

#[inline]
pub(crate) fn bit_at(index: usize, n: usize, pos: usize) -> usize {
    (index >> shift(n, pos)) & 1
}

/// Maps an index in the old mode order to the canonical order, given
/// `perm[new] = old`.
pub(crate) fn permute_index(old: usize, n: usize, perm: &[usize]) -> usize {
    perm.iter()
        .enumerate()
        .fold(0, |acc, (new_pos, &old_pos)| {
            acc | (bit_at(old, n, old_pos) << shift(n, new_pos))
        })
}

/// Index over the sub-register formed by `positions` (most significant first).
pub(crate) fn sub_index(index: usize, n: usize, positions: &[usize]) -> usize {
    positions
        .iter()
        .fold(0, |acc, &p| (acc << 1) | bit_at(index, n, p))
}

/// Splits a sub-register into the positions of `targets` inside `modes` and
/// the positions of the remaining modes.
pub(crate) fn split_positions(
    modes: &[ModeId],
    targets: &[ModeId],
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut target_pos = Vec::with_capacity(targets.len());
    for t in targets {
        target_pos.push(position(modes, t)?);
    }
    let rest = (0..modes.len()).filter(|p| !target_pos.contains(p)).collect();
    Ok((target_pos, rest))
}

pub(crate) fn check_fresh(modes: &[ModeId], from: &ModeId, to: &ModeId) -> Result<usize> {
    let pos = position(modes, from)?;
    if from != to && modes.contains(to) {
        return Err(Error::DuplicateMode(to.0.clone()));
    }
    Ok(pos)
}
