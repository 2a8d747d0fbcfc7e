//! Concentration, repeater and swapping procedures on two photon pairs.
//!
//! Pair `(1, 2)` and pair `(3, 4)` are the inputs throughout. Photon 4 is
//! rotated by 90° and photons 2 and 4 meet at a PBS whose outputs are
//! labeled `2p` and `4p`. The conditional four-photon state is then measured
//! in the ± basis:
//!
//! * concentration measures modes `3` and `4p`, leaving a pair on `(1, 2p)`,
//! * the one-step repeater measures `2p` and `4p`, leaving a pair on `(1, 3)`.
//!
//! Every function is generic over [`Register`], so the same procedure runs on
//! a [`PureState`] (fast path) or a
//! [`DensityOperator`](crate::qstate::DensityOperator) (mixed path, which also
//! supports partial photon overlap at the PBS).

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::optics::{pbs_post_select, phase_compensator, r90, FilterElement, JonesMatrix};
use crate::qstate::{labels, ModeId, PolKet, PureState, Register, NORM_TOL};

pub const MODE_1: &str = "1";
pub const MODE_2: &str = "2";
pub const MODE_3: &str = "3";
pub const MODE_4: &str = "4";
pub const MODE_2P: &str = "2p";
pub const MODE_4P: &str = "4p";

/// Two-photon state `alpha|H V> + beta|V H>` on two named modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpec {
    alpha: Complex64,
    beta: Complex64,
    mode_first: ModeId,
    mode_second: ModeId,
}

impl PairSpec {
    pub fn new(
        alpha: Complex64,
        beta: Complex64,
        first: impl Into<ModeId>,
        second: impl Into<ModeId>,
    ) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sq: norm });
        }
        let (mode_first, mode_second) = (first.into(), second.into());
        if mode_first == mode_second {
            return Err(Error::DuplicateMode(mode_first.to_string()));
        }
        Ok(PairSpec {
            alpha,
            beta,
            mode_first,
            mode_second,
        })
    }

    /// `Ψ+` sent through `windows` on the first photon, followed by a
    /// compensator adding `phase` to the `|V H>` term.
    pub fn from_windows(
        windows: &FilterElement,
        phase: f64,
        first: impl Into<ModeId>,
        second: impl Into<ModeId>,
    ) -> Result<Self> {
        let total = windows.t_h() + windows.t_v();
        if total <= 0.0 {
            return Err(Error::ImpossibleBranch { prob: 0.0 });
        }
        let alpha = Complex64::new((windows.t_h() / total).sqrt(), 0.0);
        let beta = Complex64::from_polar((windows.t_v() / total).sqrt(), phase);
        PairSpec::new(alpha, beta, first, second)
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    pub fn mode_first(&self) -> &ModeId {
        &self.mode_first
    }

    pub fn mode_second(&self) -> &ModeId {
        &self.mode_second
    }

    /// `|alpha|^2 / |beta|^2`, the H V : V H intensity ratio.
    pub fn ratio(&self) -> f64 {
        self.alpha.norm_sqr() / self.beta.norm_sqr()
    }

    /// Same coefficients on other modes.
    pub fn on_modes(&self, first: impl Into<ModeId>, second: impl Into<ModeId>) -> Result<Self> {
        PairSpec::new(self.alpha, self.beta, first, second)
    }
}

pub fn prepare_pair(spec: &PairSpec) -> PureState {
    let modes = vec![spec.mode_first.clone(), spec.mode_second.clone()];
    let z = Complex64::new(0.0, 0.0);
    // index bits (first, second): HV = 01, VH = 10
    PureState::new(modes, vec![z, spec.alpha, spec.beta, z]).expect("distinct modes")
}

/// Sends the photon in `mode` through `windows`; returns the renormalized
/// pair and the transmission probability.
pub fn degrade_pair<R: Register>(s: &R, mode: &ModeId, windows: &FilterElement) -> Result<(R, f64)> {
    s.apply_single_mode(mode, windows.jones())?.normalized()
}

/// Outcome pair of the two ± measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    PlusPlus,
    PlusMinus,
    MinusPlus,
    MinusMinus,
}

impl Branch {
    pub const ALL: [Branch; 4] = [
        Branch::PlusPlus,
        Branch::PlusMinus,
        Branch::MinusPlus,
        Branch::MinusMinus,
    ];

    pub fn kets(self) -> (PolKet, PolKet) {
        let (p, m) = (PolKet::plus(), PolKet::minus());
        match self {
            Branch::PlusPlus => (p, p),
            Branch::PlusMinus => (p, m),
            Branch::MinusPlus => (m, p),
            Branch::MinusMinus => (m, m),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::PlusPlus => "pp",
            Branch::PlusMinus => "pm",
            Branch::MinusPlus => "mp",
            Branch::MinusMinus => "mm",
        }
    }

    /// Mixed outcomes leave `Ψ-` instead of `Ψ+`.
    pub fn flips_sign(self) -> bool {
        matches!(self, Branch::PlusMinus | Branch::MinusPlus)
    }

    /// Bell state left behind on `(first, second)` for identical inputs.
    pub fn heralded_state(self, first: &str, second: &str) -> PureState {
        if self.flips_sign() {
            PureState::psi_minus(first, second)
        } else {
            PureState::psi_plus(first, second)
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pp" | "++" => Ok(Branch::PlusPlus),
            "pm" | "+-" => Ok(Branch::PlusMinus),
            "mp" | "-+" => Ok(Branch::MinusPlus),
            "mm" | "--" => Ok(Branch::MinusMinus),
            other => Err(format!("unknown branch `{other}` (expected pp, pm, mp or mm)")),
        }
    }
}

/// Post-selected outcome of a protocol run.
#[derive(Debug, Clone)]
pub struct ProtocolResult<R> {
    /// Normalized two-photon output.
    pub output: R,
    /// Probability of the whole chain: filters, PBS (or Bell projection)
    /// and the selected ± branch.
    pub success_prob: f64,
    /// Probability of the interference step alone (two-fold coincidence at
    /// the PBS, or the Bell projection for [`bell_swap`]).
    pub pbs_prob: f64,
    /// Probability of the selected ± branch given the interference step.
    pub branch_prob: f64,
    /// Normalized conditional four-photon state after the PBS.
    pub intermediate: Option<R>,
    pub branch: Option<Branch>,
    /// Phase to apply on the first output photon to turn the output into
    /// `Ψ+` (set for branches that herald `Ψ-`).
    pub corrective_phase: Option<f64>,
}

impl<R: Register> ProtocolResult<R> {
    pub fn fidelity(&self, target: &PureState) -> Result<f64> {
        self.output.fidelity_to_pure(target)
    }

    /// Output after the known corrective phase (if any).
    pub fn corrected(&self) -> Result<R> {
        match self.corrective_phase {
            Some(phi) => {
                let first = self.output.modes()[0].clone();
                self.output.apply_single_mode(&first, &phase_compensator(phi))
            }
            None => Ok(self.output.clone()),
        }
    }

    /// Fidelity of the corrected output to `Ψ+` on the output modes.
    pub fn corrected_fidelity(&self) -> Result<f64> {
        let modes = self.output.modes();
        let target = PureState::psi_plus(modes[0].as_str(), modes[1].as_str());
        self.corrected()?.fidelity_to_pure(&target)
    }
}

/// Where the ± measurements are made after the PBS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Measure `3` and `4p`; output on `(1, 2p)`.
    Concentration,
    /// Measure `2p` and `4p`; output on `(1, 3)`.
    Repeater,
}

impl Scheme {
    pub fn measured_modes(self) -> (&'static str, &'static str) {
        match self {
            Scheme::Concentration => (MODE_3, MODE_4P),
            Scheme::Repeater => (MODE_2P, MODE_4P),
        }
    }

    pub fn output_modes(self) -> (&'static str, &'static str) {
        match self {
            Scheme::Concentration => (MODE_1, MODE_2P),
            Scheme::Repeater => (MODE_1, MODE_3),
        }
    }
}

fn check_pair_modes<R: Register>(s: &R, first: &str, second: &str) -> Result<()> {
    let expected = [ModeId::from(first), ModeId::from(second)];
    if s.modes() != expected {
        return Err(Error::ModeMismatch {
            expected: labels(&expected),
            found: labels(s.modes()),
        });
    }
    Ok(())
}

/// Rotates photon 4, interferes photons 2 and 4 at the PBS and keeps
/// two-fold coincidences. `overlap` is the temporal-mode overlap of the two
/// photons at the PBS (1 for perfect interference). Returns the unnormalized
/// conditional state on `(1, 2p, 3, 4p)`.
pub fn interfere_at_pbs<R: Register>(pair12: &R, pair34: &R, overlap: f64) -> Result<R> {
    check_pair_modes(pair12, MODE_1, MODE_2)?;
    check_pair_modes(pair34, MODE_3, MODE_4)?;
    let joint = pair12
        .tensor(pair34)?
        .apply_single_mode(&MODE_4.into(), &r90())?;
    let (p2p, p4p) = (ModeId::from(MODE_2P), ModeId::from(MODE_4P));
    let kept = pbs_post_select(&joint, &MODE_2.into(), &MODE_4.into(), &p2p, &p4p)?;
    kept.dephase_equal_sectors(&p2p, &p4p, overlap)
}

/// Runs the PBS stage and the ± measurement of `scheme` for one branch.
pub fn run_scheme<R: Register>(
    scheme: Scheme,
    pair12: &R,
    pair34: &R,
    branch: Branch,
    overlap: f64,
) -> Result<ProtocolResult<R>> {
    let w_in = pair12.weight() * pair34.weight();
    let kept = interfere_at_pbs(pair12, pair34, overlap)?;
    let (ghz, pbs_prob) = kept.normalized()?;
    let pbs_prob = pbs_prob / w_in;
    let (ma, mb) = scheme.measured_modes();
    let (ka, kb) = branch.kets();
    let target = PureState::product(&[(ma.into(), ka), (mb.into(), kb)])?;
    let (output, branch_prob) = ghz.project_onto(&target)?.normalized()?;
    Ok(ProtocolResult {
        output,
        success_prob: pbs_prob * branch_prob,
        pbs_prob,
        branch_prob,
        intermediate: Some(ghz),
        branch: Some(branch),
        corrective_phase: branch.flips_sign().then_some(std::f64::consts::PI),
    })
}

/// Entanglement concentration of two pairs with perfect interference.
pub fn concentrate<R: Register>(pair12: &R, pair34: &R, branch: Branch) -> Result<ProtocolResult<R>> {
    run_scheme(Scheme::Concentration, pair12, pair34, branch, 1.0)
}

/// One-step repeater: the PBS both concentrates and swaps.
pub fn repeater_swap<R: Register>(pair12: &R, pair34: &R, branch: Branch) -> Result<ProtocolResult<R>> {
    run_scheme(Scheme::Repeater, pair12, pair34, branch, 1.0)
}

/// All four ± branches of a scheme together with the PBS discard weight.
#[derive(Debug, Clone)]
pub struct BranchTable<R> {
    pub pbs_prob: f64,
    pub discard_prob: f64,
    pub results: Vec<ProtocolResult<R>>,
}

impl<R> BranchTable<R> {
    pub fn get(&self, branch: Branch) -> Option<&ProtocolResult<R>> {
        self.results.iter().find(|r| r.branch == Some(branch))
    }

    /// Sum of all branch probabilities plus the discard weight.
    pub fn total_prob(&self) -> f64 {
        self.results.iter().map(|r| r.success_prob).sum::<f64>() + self.discard_prob
    }
}

pub fn all_branches<R: Register>(
    scheme: Scheme,
    pair12: &R,
    pair34: &R,
    overlap: f64,
) -> Result<BranchTable<R>> {
    let results = Branch::ALL
        .iter()
        .map(|&b| run_scheme(scheme, pair12, pair34, b, overlap))
        .collect::<Result<Vec<_>>>()?;
    let pbs_prob = results[0].pbs_prob;
    Ok(BranchTable {
        pbs_prob,
        discard_prob: 1.0 - pbs_prob,
        results,
    })
}

/// Plain entanglement swapping: photons 2 and 3 are projected onto `Ψ+`,
/// leaving a pair on `(1, 4)`.
pub fn bell_swap<R: Register>(pair12: &R, pair34: &R) -> Result<ProtocolResult<R>> {
    check_pair_modes(pair12, MODE_1, MODE_2)?;
    check_pair_modes(pair34, MODE_3, MODE_4)?;
    let w_in = pair12.weight() * pair34.weight();
    let joint = pair12.tensor(pair34)?;
    let (output, prob) = joint
        .project_onto(&PureState::psi_plus(MODE_2, MODE_3))?
        .normalized()?;
    let prob = prob / w_in;
    Ok(ProtocolResult {
        output,
        success_prob: prob,
        pbs_prob: prob,
        branch_prob: 1.0,
        intermediate: None,
        branch: None,
        corrective_phase: None,
    })
}

/// Procrustean filter for a pair with known coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFilter {
    /// Photon the filter acts on (the first photon of the pair).
    pub mode: ModeId,
    /// Attenuates the larger of the two components down to the smaller one.
    pub filter: FilterElement,
    /// Removes the relative phase between the two components.
    pub compensator: JonesMatrix,
    /// `2 min(|alpha|^2, |beta|^2)`
    pub success_prob: f64,
}

impl LocalFilter {
    pub fn jones(&self) -> JonesMatrix {
        self.filter.jones().then(&self.compensator)
    }

    /// Applies the filter; returns the renormalized state and the
    /// transmission probability.
    pub fn apply<R: Register>(&self, s: &R) -> Result<(R, f64)> {
        s.apply_single_mode(&self.mode, &self.jones())?.normalized()
    }
}

pub fn local_filter(spec: &PairSpec) -> Result<LocalFilter> {
    let (a, b) = (spec.alpha.norm_sqr(), spec.beta.norm_sqr());
    if a <= NORM_TOL || b <= NORM_TOL {
        return Err(Error::ProductState);
    }
    // H on the first photon carries alpha, V carries beta
    let filter = if a >= b {
        FilterElement::new(b / a, 1.0)?
    } else {
        FilterElement::new(1.0, a / b)?
    };
    let relative = spec.beta.arg() - spec.alpha.arg();
    Ok(LocalFilter {
        mode: spec.mode_first.clone(),
        filter,
        compensator: phase_compensator(-relative),
        success_prob: 2.0 * a.min(b),
    })
}

/// Second repeater configuration: pairs with known, different coefficients
/// are filtered to `Ψ+` on their first photons (modes 1 and 3) and then
/// swapped at the PBS.
pub fn repeater_filtered<R: Register>(
    spec12: &PairSpec,
    spec34: &PairSpec,
    branch: Branch,
    overlap: f64,
) -> Result<ProtocolResult<R>> {
    let f12 = local_filter(spec12)?;
    let f34 = local_filter(spec34)?;
    let (pair12, p12) = f12.apply(&R::from_pure(&prepare_pair(spec12)))?;
    let (pair34, p34) = f34.apply(&R::from_pure(&prepare_pair(spec34)))?;
    let mut result = run_scheme(Scheme::Repeater, &pair12, &pair34, branch, overlap)?;
    result.success_prob *= p12 * p34;
    Ok(result)
}
