use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{
    bit_at, canonicalize, check_fresh, labels, permute_index, position, pure::product_target,
    shift, split_positions, sub_index, ModeId, Pol, PolKet, PureState, Register, BRANCH_EPS,
    OPERATOR_TOL,
};
use crate::error::{Error, Result};
use crate::optics::JonesMatrix;

/// Density operator over labeled polarization modes.
///
/// Like [`PureState`], the trace is allowed to drop below one so that
/// post-selection probabilities multiply through a chain of elements.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    modes: Vec<ModeId>,
    matrix: DMatrix<Complex64>,
}

impl DensityOperator {
    /// Builds an operator from modes in any order (first listed mode is the
    /// most significant bit of the row/column index).
    pub fn new(modes: Vec<ModeId>, matrix: DMatrix<Complex64>) -> Result<Self> {
        let n = modes.len();
        let dim = 1usize << n;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        let (modes, perm) = canonicalize(modes)?;
        let map: Vec<usize> = (0..dim).map(|i| permute_index(i, n, &perm)).collect();
        let mut out = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                out[(map[r], map[c])] = matrix[(r, c)];
            }
        }
        Ok(DensityOperator { modes, matrix: out })
    }

    /// `|s><s|` without any normalization check.
    pub fn from_pure(s: &PureState) -> Self {
        let v = s.amplitudes();
        let dim = v.len();
        let matrix = DMatrix::from_fn(dim, dim, |r, c| v[r] * v[c].conj());
        DensityOperator {
            modes: s.modes().to_vec(),
            matrix,
        }
    }

    pub fn maximally_mixed(modes: &[&str]) -> Result<Self> {
        let dim = 1usize << modes.len();
        DensityOperator::new(
            modes.iter().map(|&m| ModeId::from(m)).collect(),
            DMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0),
        )
    }

    /// Convex (or unnormalized positive) combination of operators on the
    /// same modes.
    pub fn mixture(parts: &[(f64, &DensityOperator)]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Dimension {
            expected: 1,
            found: 0,
        })?;
        let mut matrix = DMatrix::zeros(first.1.dim(), first.1.dim());
        for (w, rho) in parts {
            first.1.check_same_modes(rho)?;
            matrix += &rho.matrix * Complex64::new(*w, 0.0);
        }
        Ok(DensityOperator {
            modes: first.1.modes.clone(),
            matrix,
        })
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Element `<row|rho|col>` for basis strings given in canonical mode order.
    pub fn element(&self, row: &[Pol], col: &[Pol]) -> Complex64 {
        let idx = |p: &[Pol]| p.iter().fold(0, |acc, x| (acc << 1) | x.bit());
        self.matrix[(idx(row), idx(col))]
    }

    fn check_same_modes(&self, other: &DensityOperator) -> Result<()> {
        if self.modes != other.modes {
            return Err(Error::ModeMismatch {
                expected: labels(&self.modes),
                found: labels(&other.modes),
            });
        }
        Ok(())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|r| (r..d).all(|c| (self.matrix[(r, c)] - self.matrix[(c, r)].conj()).norm() <= tol))
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the physical-state invariants at [`OPERATOR_TOL`]: hermiticity,
    /// non-negative spectrum and (if `normalized`) unit trace.
    pub fn is_physical(&self, normalized: bool) -> bool {
        self.is_hermitian(OPERATOR_TOL)
            && self.min_eigenvalue() >= -OPERATOR_TOL
            && (!normalized || (self.trace() - 1.0).abs() <= OPERATOR_TOL)
    }

    pub fn normalize(&self) -> Result<(DensityOperator, f64)> {
        let tr = self.trace();
        if tr <= BRANCH_EPS {
            return Err(Error::ImpossibleBranch { prob: tr });
        }
        Ok((
            DensityOperator {
                modes: self.modes.clone(),
                matrix: &self.matrix * Complex64::new(1.0 / tr, 0.0),
            },
            tr,
        ))
    }

    /// `rho -> J rho J^dagger` with `J` acting on `mode`.
    pub fn apply_single_mode(&self, mode: &ModeId, jones: &JonesMatrix) -> Result<Self> {
        let n = self.modes.len();
        let bit = 1 << shift(n, position(&self.modes, mode)?);
        let d = self.dim();
        let conj = jones.conj();
        let mut m = self.matrix.clone();
        for i0 in (0..d).filter(|i| i & bit == 0) {
            let i1 = i0 | bit;
            for c in 0..d {
                let (a, b) = jones.apply(m[(i0, c)], m[(i1, c)]);
                m[(i0, c)] = a;
                m[(i1, c)] = b;
            }
            for r in 0..d {
                let (a, b) = conj.apply(m[(r, i0)], m[(r, i1)]);
                m[(r, i0)] = a;
                m[(r, i1)] = b;
            }
        }
        Ok(DensityOperator {
            modes: self.modes.clone(),
            matrix: m,
        })
    }

    /// `<t| rho |t>` contracted over the modes of `target`, leaving an
    /// unnormalized operator on the other modes.
    pub fn project_onto(&self, target: &PureState) -> Result<Self> {
        let n = self.modes.len();
        let (tpos, rest) = split_positions(&self.modes, target.modes())?;
        let t = target.amplitudes();
        let d = self.dim();
        let rdim = 1 << rest.len();
        let ridx: Vec<usize> = (0..d).map(|i| sub_index(i, n, &rest)).collect();
        let tamp: Vec<Complex64> = (0..d).map(|i| t[sub_index(i, n, &tpos)]).collect();
        let mut out = DMatrix::zeros(rdim, rdim);
        for r in 0..d {
            let left = tamp[r].conj();
            if left.norm_sqr() == 0.0 {
                continue;
            }
            for c in 0..d {
                out[(ridx[r], ridx[c])] += left * self.matrix[(r, c)] * tamp[c];
            }
        }
        Ok(DensityOperator {
            modes: rest.iter().map(|&p| self.modes[p].clone()).collect(),
            matrix: out,
        })
    }

    /// Projects the listed modes onto single-photon kets; returns the
    /// renormalized residual operator and the outcome probability relative
    /// to the input weight.
    pub fn project(&self, targets: &[(ModeId, PolKet)]) -> Result<(DensityOperator, f64)> {
        let target = product_target(targets)?;
        self.project_onto(&target)?.normalize()
    }

    /// Reduced operator on `keep`; all other modes are traced out.
    pub fn partial_trace(&self, keep: &[ModeId]) -> Result<DensityOperator> {
        let n = self.modes.len();
        let (kpos, rest) = split_positions(&self.modes, keep)?;
        let mut kpos = kpos;
        kpos.sort_unstable();
        let d = self.dim();
        let kidx: Vec<usize> = (0..d).map(|i| sub_index(i, n, &kpos)).collect();
        let tidx: Vec<usize> = (0..d).map(|i| sub_index(i, n, &rest)).collect();
        let kdim = 1 << kpos.len();
        let mut out = DMatrix::zeros(kdim, kdim);
        for r in 0..d {
            for c in 0..d {
                if tidx[r] == tidx[c] {
                    out[(kidx[r], kidx[c])] += self.matrix[(r, c)];
                }
            }
        }
        Ok(DensityOperator {
            modes: kpos.iter().map(|&p| self.modes[p].clone()).collect(),
            matrix: out,
        })
    }

    /// `<t|rho|t>` for a target over exactly the same modes.
    pub fn fidelity_to_pure(&self, target: &PureState) -> Result<f64> {
        if self.modes != target.modes() {
            return Err(Error::ModeMismatch {
                expected: labels(&self.modes),
                found: labels(target.modes()),
            });
        }
        let t = target.amplitudes();
        let d = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..d {
            for c in 0..d {
                acc += t[r].conj() * self.matrix[(r, c)] * t[c];
            }
        }
        Ok(acc.re)
    }

    pub fn keep_equal_polarization(&self, a: &ModeId, b: &ModeId) -> Result<Self> {
        let n = self.modes.len();
        let pa = position(&self.modes, a)?;
        let pb = position(&self.modes, b)?;
        let keep = |i: usize| bit_at(i, n, pa) == bit_at(i, n, pb);
        let d = self.dim();
        let matrix = DMatrix::from_fn(d, d, |r, c| {
            if keep(r) && keep(c) {
                self.matrix[(r, c)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Ok(DensityOperator {
            modes: self.modes.clone(),
            matrix,
        })
    }

    /// Multiplies every element coupling the `HH` sector of modes `a`, `b`
    /// with their `VV` sector by `gamma`. Populations and all other
    /// coherences are untouched.
    pub fn dephase_equal_sectors(&self, a: &ModeId, b: &ModeId, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid("gamma", gamma, "must lie in [0, 1]"));
        }
        let n = self.modes.len();
        let pa = position(&self.modes, a)?;
        let pb = position(&self.modes, b)?;
        let sector = |i: usize| match (bit_at(i, n, pa), bit_at(i, n, pb)) {
            (0, 0) => Some(Pol::H),
            (1, 1) => Some(Pol::V),
            _ => None,
        };
        let d = self.dim();
        let g = Complex64::new(gamma, 0.0);
        let matrix = DMatrix::from_fn(d, d, |r, c| match (sector(r), sector(c)) {
            (Some(x), Some(y)) if x != y => self.matrix[(r, c)] * g,
            _ => self.matrix[(r, c)],
        });
        Ok(DensityOperator {
            modes: self.modes.clone(),
            matrix,
        })
    }

    pub fn relabel(&self, from: &ModeId, to: &ModeId) -> Result<Self> {
        let pos = check_fresh(&self.modes, from, to)?;
        let mut modes = self.modes.clone();
        modes[pos] = to.clone();
        DensityOperator::new(modes, self.matrix.clone())
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<Self> {
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        DensityOperator::new(modes, self.matrix.kronecker(&other.matrix))
    }
}

impl Register for DensityOperator {
    fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    fn weight(&self) -> f64 {
        self.trace()
    }

    fn tensor(&self, other: &Self) -> Result<Self> {
        DensityOperator::tensor(self, other)
    }

    fn apply_single_mode(&self, mode: &ModeId, jones: &JonesMatrix) -> Result<Self> {
        DensityOperator::apply_single_mode(self, mode, jones)
    }

    fn project_onto(&self, target: &PureState) -> Result<Self> {
        DensityOperator::project_onto(self, target)
    }

    fn keep_equal_polarization(&self, a: &ModeId, b: &ModeId) -> Result<Self> {
        DensityOperator::keep_equal_polarization(self, a, b)
    }

    fn dephase_equal_sectors(&self, a: &ModeId, b: &ModeId, gamma: f64) -> Result<Self> {
        DensityOperator::dephase_equal_sectors(self, a, b, gamma)
    }

    fn relabel(&self, from: &ModeId, to: &ModeId) -> Result<Self> {
        DensityOperator::relabel(self, from, to)
    }

    fn normalized(&self) -> Result<(Self, f64)> {
        self.normalize()
    }

    fn fidelity_to_pure(&self, target: &PureState) -> Result<f64> {
        DensityOperator::fidelity_to_pure(self, target)
    }

    fn to_operator(&self) -> DensityOperator {
        self.clone()
    }

    fn from_pure(s: &PureState) -> Self {
        DensityOperator::from_pure(s)
    }
}
