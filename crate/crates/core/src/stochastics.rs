//! Imperfection model and Monte Carlo coincidence counting.
//!
//! The only imperfection modeled on the state is partial temporal overlap of
//! photons 2 and 4 at the PBS: the coherence between the two kept branches
//! (both photons H, both photons V) is multiplied by an overlap `gamma`.
//! Counting adds a flat accidental background and Poisson statistics.
//!
//! Random streams are derived from one master seed per table row / scan
//! point / replication, so results do not depend on evaluation order or on
//! the number of worker threads.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{chsh_records, correlation, ChshSettings, CorrelationRecord};
use crate::protocols::{run_scheme, Branch, Scheme};
use crate::qstate::{DensityOperator, ModeId, Pol, PureState, Register};

/// Central wavelength of the down-converted photons.
pub const PHOTON_WAVELENGTH_NM: f64 = 788.0;
/// Interference filter bandwidth.
pub const FILTER_FWHM_NM: f64 = 3.6;
/// Four-fold coincidence rate of the source with unattenuated pairs.
pub const FOURFOLD_RATE: f64 = 8.0;
/// Integration time per outcome.
pub const INTEGRATION_TIME_S: f64 = 1000.0;
/// Flat accidental fraction per outcome.
pub const DEFAULT_BACKGROUND: f64 = 0.004;
/// PBS two-fold probability for two `Ψ+` pairs; the four-fold rate above
/// refers to this case.
pub const REFERENCE_PBS_PROB: f64 = 0.5;

/// Coherence length (µm) of a Gaussian transform-limited wave packet behind a
/// filter of the given bandwidth, `0.44 λ² / Δλ`.
pub fn coherence_length_um(wavelength_nm: f64, fwhm_nm: f64) -> f64 {
    0.44 * wavelength_nm * wavelength_nm / fwhm_nm / 1000.0
}

pub fn default_coherence_length_um() -> f64 {
    coherence_length_um(PHOTON_WAVELENGTH_NM, FILTER_FWHM_NM)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Overlap of photons 2 and 4 at the PBS at zero delay.
    pub overlap_gamma: f64,
    /// Uniform accidental fraction added to every outcome.
    pub background_eps: f64,
    /// 1/e half-width of the overlap as a function of delay.
    pub coherence_length_um: f64,
}

impl NoiseParams {
    pub fn new(overlap_gamma: f64, background_eps: f64, coherence_length_um: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&overlap_gamma) {
            return Err(Error::invalid("gamma", overlap_gamma, "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&background_eps) {
            return Err(Error::invalid("background", background_eps, "must lie in [0, 1]"));
        }
        if coherence_length_um.is_nan() || coherence_length_um <= 0.0 {
            return Err(Error::invalid(
                "coherence_length_um",
                coherence_length_um,
                "must be positive",
            ));
        }
        Ok(NoiseParams {
            overlap_gamma,
            background_eps,
            coherence_length_um,
        })
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            overlap_gamma: 1.0,
            background_eps: DEFAULT_BACKGROUND,
            coherence_length_um: default_coherence_length_um(),
        }
    }
}

/// `gamma0 * exp(-(d / L)^2)`
pub fn overlap_from_delay(delay_um: f64, coherence_length_um: f64, gamma0: f64) -> Result<f64> {
    if coherence_length_um.is_nan() || coherence_length_um <= 0.0 {
        return Err(Error::invalid(
            "coherence_length_um",
            coherence_length_um,
            "must be positive",
        ));
    }
    let x = delay_um / coherence_length_um;
    Ok(gamma0 * (-x * x).exp())
}

/// Mixed state from the two PBS-kept components of `kept` (modes `a`, `b`
/// both H, and both V), with their coherence scaled by `gamma`:
/// `|h><h| + |v><v| + gamma (|h><v| + |v><h|)`.
pub fn apply_distinguishability(
    kept: &PureState,
    a: &ModeId,
    b: &ModeId,
    gamma: f64,
) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", gamma, "must lie in [0, 1]"));
    }
    let h = kept.sector(a, b, Pol::H)?;
    let v = kept.sector(a, b, Pol::V)?;
    let hv = h.amplitudes();
    let vv = v.amplitudes();
    let d = hv.len();
    let g = num_complex::Complex64::new(gamma, 0.0);
    let m = nalgebra::DMatrix::from_fn(d, d, |r, c| {
        hv[r] * hv[c].conj() + vv[r] * vv[c].conj() + g * (hv[r] * vv[c].conj() + vv[r] * hv[c].conj())
    });
    DensityOperator::new(kept.modes().to_vec(), m)
}

/// `gamma |Ψ+><Ψ+| + (1 - gamma)(|HV><HV| + |VH><VH|)/2` on two modes.
pub fn dephased_psi_plus(first: &str, second: &str, gamma: f64) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", gamma, "must lie in [0, 1]"));
    }
    let one = num_complex::Complex64::new(1.0, 0.0);
    let hv = PureState::from_terms(&[first, second], &[(one, "HV")])?.to_operator();
    let vh = PureState::from_terms(&[first, second], &[(one, "VH")])?.to_operator();
    let psi = PureState::psi_plus(first, second).to_operator();
    DensityOperator::mixture(&[(gamma, &psi), ((1.0 - gamma) / 2.0, &hv), ((1.0 - gamma) / 2.0, &vh)])
}

/// Overlap for which the dephased `Ψ+` reaches `target_s` at `settings`
/// (bisection; `S` is monotone in the overlap).
pub fn fit_overlap_for_s(target_s: f64, settings: &ChshSettings) -> Result<f64> {
    let s_of = |g: f64| -> Result<f64> {
        crate::metrics::chsh_s(&dephased_psi_plus("1", "2", g)?, settings)
    };
    let (lo_s, hi_s) = (s_of(0.0)?, s_of(1.0)?);
    if !(lo_s.min(hi_s)..=lo_s.max(hi_s)).contains(&target_s) {
        return Err(Error::invalid("S", target_s, "outside the range reachable by the overlap model"));
    }
    let increasing = hi_s >= lo_s;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (s_of(mid)? < target_s) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How the integration time is shared by the four outcomes of a setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accounting {
    /// Every outcome is integrated for the full time.
    PerOutcome,
    /// The time is split evenly over the four outcomes.
    PerSetting,
}

impl fmt::Display for Accounting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Accounting::PerOutcome => "per-outcome",
            Accounting::PerSetting => "per-setting",
        })
    }
}

impl FromStr for Accounting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "per-outcome" => Ok(Accounting::PerOutcome),
            "per-setting" => Ok(Accounting::PerSetting),
            other => Err(format!("unknown accounting `{other}` (expected per-outcome or per-setting)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Rate (1/s) of analyzed pairs entering the correlation measurement.
    pub rate: f64,
    /// Integration time (s), see [`Accounting`].
    pub time: f64,
    pub background: f64,
    pub seed: u64,
    pub accounting: Accounting,
}

impl SamplingConfig {
    pub fn new(rate: f64, time: f64, background: f64, seed: u64, accounting: Accounting) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid("rate", rate, "must be positive"));
        }
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::invalid("time", time, "must be positive"));
        }
        if !(0.0..=1.0).contains(&background) {
            return Err(Error::invalid("background", background, "must lie in [0, 1]"));
        }
        Ok(SamplingConfig {
            rate,
            time,
            background,
            seed,
            accounting,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplingConfig { seed, ..*self }
    }

    pub fn time_per_outcome(&self) -> f64 {
        match self.accounting {
            Accounting::PerOutcome => self.time,
            Accounting::PerSetting => self.time / 4.0,
        }
    }

    /// Mean count of an outcome with probability `p`.
    pub fn mean(&self, p: f64) -> f64 {
        self.rate * self.time_per_outcome() * ((1.0 - self.background) * p + self.background / 4.0)
    }
}

/// Rate of analyzed pairs for a protocol run, scaled from the reference
/// four-fold rate by the window transmissions, the PBS efficiency relative to
/// two `Ψ+` pairs, and the heralding branch probability.
pub fn analyzed_rate(fourfold_rate: f64, window_transmission: f64, pbs_prob: f64, branch_prob: f64) -> f64 {
    fourfold_rate * window_transmission * (pbs_prob / REFERENCE_PBS_PROB) * branch_prob
}

/// SplitMix64 step; used to derive independent sub-seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("finite positive mean");
    dist.sample(rng) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingCounts {
    pub theta1: f64,
    pub theta2: f64,
    /// Model probabilities `(++, +-, -+, --)` before background.
    pub probs: [f64; 4],
    pub counts: [u64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub settings: Vec<SettingCounts>,
    pub config: SamplingConfig,
}

fn check_records(records: &[CorrelationRecord]) -> Result<()> {
    for r in records {
        let total: f64 = r.probs.iter().sum();
        if r.probs.iter().any(|&p| p < -1e-12) || total > 1.0 + 1e-10 {
            return Err(Error::invalid("probability", total, "outcome table must be non-negative and sum to at most 1"));
        }
    }
    Ok(())
}

/// Expected (unsampled) counts per setting.
pub fn expected_counts(records: &[CorrelationRecord], cfg: &SamplingConfig) -> Result<Vec<[f64; 4]>> {
    check_records(records)?;
    Ok(records
        .iter()
        .map(|r| r.probs.map(|p| cfg.mean(p.max(0.0))))
        .collect())
}

/// Independent Poisson draws for every outcome. Setting `k` uses stream `k`
/// of the generator seeded with `cfg.seed`.
pub fn sample_counts(records: &[CorrelationRecord], cfg: &SamplingConfig) -> Result<CountTable> {
    let means = expected_counts(records, cfg)?;
    let settings = records
        .iter()
        .zip(&means)
        .enumerate()
        .map(|(k, (r, m))| {
            let mut rng = rng_for(cfg.seed, k as u64);
            SettingCounts {
                theta1: r.theta1,
                theta2: r.theta2,
                probs: r.probs,
                counts: m.map(|mean| poisson(&mut rng, mean)),
            }
        })
        .collect();
    Ok(CountTable {
        settings,
        config: *cfg,
    })
}

/// CHSH value with a first-order Poisson error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SEstimate {
    pub s: f64,
    pub sigma: f64,
    pub e: [f64; 4],
    pub e_sigma: [f64; 4],
}

/// Estimates `S` from counts of the four CHSH settings, ordered as in
/// [`ChshSettings::pairs`]. For a setting with total `N`,
/// `Var(E) = (1 - E^2) / N` under independent Poisson counts.
pub fn estimate_s_from(counts: &[[f64; 4]]) -> Result<SEstimate> {
    if counts.len() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: counts.len(),
        });
    }
    let mut e = [0.0; 4];
    let mut e_sigma = [0.0; 4];
    for (k, c) in counts.iter().enumerate() {
        let n: f64 = c.iter().sum();
        if n <= 0.0 {
            return Err(Error::EmptySetting(k));
        }
        e[k] = (c[0] + c[3] - c[1] - c[2]) / n;
        e_sigma[k] = ((1.0 - e[k] * e[k]).max(0.0) / n).sqrt();
    }
    let s = e.iter().zip(ChshSettings::SIGNS).map(|(x, sign)| sign * x).sum();
    let sigma = e_sigma.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(SEstimate { s, sigma, e, e_sigma })
}

pub fn estimate_s(table: &CountTable) -> Result<SEstimate> {
    let counts: Vec<[f64; 4]> = table
        .settings
        .iter()
        .map(|s| s.counts.map(|c| c as f64))
        .collect();
    estimate_s_from(&counts)
}

/// `n` independent sampled estimates; replication `i` uses seed
/// `derive_seed(cfg.seed, i)`.
pub fn replicate_s(records: &[CorrelationRecord], cfg: &SamplingConfig, n: usize) -> Result<Vec<SEstimate>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let table = sample_counts(records, &cfg.with_seed(derive_seed(cfg.seed, i as u64)))?;
            estimate_s(&table)
        })
        .collect()
}

/// Model correlations, counts and the resulting estimate for one state.
#[derive(Debug, Clone)]
pub struct ChshRun {
    pub records: [CorrelationRecord; 4],
    pub expected: Vec<[f64; 4]>,
    /// `None` when the run used expected counts only.
    pub table: Option<CountTable>,
    pub estimate: SEstimate,
}

pub fn run_chsh(rho: &DensityOperator, settings: &ChshSettings, cfg: &SamplingConfig, sampled: bool) -> Result<ChshRun> {
    let records = chsh_records(rho, settings)?;
    let expected = expected_counts(&records, cfg)?;
    let (table, estimate) = if sampled {
        let t = sample_counts(&records, cfg)?;
        let est = estimate_s(&t)?;
        (Some(t), est)
    } else {
        (None, estimate_s_from(&expected)?)
    };
    Ok(ChshRun {
        records,
        expected,
        table,
        estimate,
    })
}

/// One delay setting of the interference scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub delay_um: f64,
    pub gamma: f64,
    /// Model probability of `(+, +)` on the output pair, given the herald.
    pub p_pp: f64,
    /// Model probability of `(-, +)` on the output pair, given the herald.
    pub p_mp: f64,
    pub counts_pp: Option<u64>,
    pub counts_mp: Option<u64>,
}

/// Heralds `(+, +)` on the measured modes of `scheme` for every delay and
/// records the `(+, +)` and `(-, +)` outcomes of the remaining pair.
/// Point `i` samples with stream `i` of `sampling.seed`.
pub fn delay_scan(
    scheme: Scheme,
    pair12: &PureState,
    pair34: &PureState,
    delays: &[f64],
    noise: &NoiseParams,
    sampling: Option<&SamplingConfig>,
) -> Result<Vec<ScanPoint>> {
    let r12 = pair12.to_operator();
    let r34 = pair34.to_operator();
    delays
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let gamma = overlap_from_delay(d, noise.coherence_length_um, noise.overlap_gamma)?;
            let run = run_scheme(scheme, &r12, &r34, Branch::PlusPlus, gamma)?;
            let rec = correlation(&run.output, FRAC_PI_4, FRAC_PI_4)?;
            let (p_pp, p_mp) = (rec.probs[0], rec.probs[2]);
            let (counts_pp, counts_mp) = match sampling {
                Some(cfg) => {
                    let mut rng = rng_for(cfg.seed, i as u64);
                    let with_bg = |p: f64| {
                        cfg.rate * cfg.time * ((1.0 - noise.background_eps) * p + noise.background_eps / 4.0)
                    };
                    (
                        Some(poisson(&mut rng, with_bg(p_pp))),
                        Some(poisson(&mut rng, with_bg(p_mp))),
                    )
                }
                None => (None, None),
            };
            Ok(ScanPoint {
                delay_um: d,
                gamma,
                p_pp,
                p_mp,
                counts_pp,
                counts_mp,
            })
        })
        .collect()
}

/// Dip of the `(-, +)` rate at zero delay relative to the far-delay plateau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipAnalysis {
    pub visibility: f64,
    /// Standard error of the visibility from Poisson counts (0 for model values).
    pub visibility_sigma: f64,
    pub dip: f64,
    pub plateau: f64,
    pub plateau_pp: f64,
}

/// `V = 1 - dip / plateau`, the dip taken at the point closest to zero delay
/// and the plateau averaged over points with `|d| >= plateau_from_um`.
/// Uses counts when present, model probabilities otherwise.
pub fn dip_visibility(points: &[ScanPoint], plateau_from_um: f64) -> Result<DipAnalysis> {
    let center = points
        .iter()
        .min_by(|a, b| a.delay_um.abs().total_cmp(&b.delay_um.abs()))
        .ok_or(Error::Dimension { expected: 1, found: 0 })?;
    let far: Vec<&ScanPoint> = points
        .iter()
        .filter(|p| p.delay_um.abs() >= plateau_from_um)
        .collect();
    if far.is_empty() {
        return Err(Error::invalid("plateau_from_um", plateau_from_um, "no scan point on the plateau"));
    }
    let sampled = center.counts_mp.is_some();
    let mp = |p: &ScanPoint| p.counts_mp.map(|c| c as f64).unwrap_or(p.p_mp);
    let pp = |p: &ScanPoint| p.counts_pp.map(|c| c as f64).unwrap_or(p.p_pp);
    let plateau = far.iter().map(|p| mp(p)).sum::<f64>() / far.len() as f64;
    let plateau_pp = far.iter().map(|p| pp(p)).sum::<f64>() / far.len() as f64;
    if plateau <= 0.0 {
        return Err(Error::ImpossibleBranch { prob: plateau });
    }
    let dip = mp(center);
    let visibility = 1.0 - dip / plateau;
    let visibility_sigma = if sampled {
        // Poisson errors on the dip count and on the plateau mean
        let r = dip / plateau;
        let rel_dip = if dip > 0.0 { 1.0 / dip } else { 0.0 };
        let rel_plateau = 1.0 / (plateau * far.len() as f64);
        r * (rel_dip + rel_plateau).sqrt()
    } else {
        0.0
    };
    Ok(DipAnalysis {
        visibility,
        visibility_sigma,
        dip,
        plateau,
        plateau_pp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{chsh_s, fidelity_from_s, optimal_settings_psi_plus, pm_visibility};
    use crate::protocols::{concentrate, prepare_pair, PairSpec};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn m(s: &str) -> ModeId {
        ModeId::from(s)
    }

    fn ghz_kept(a: Complex64, b: Complex64) -> PureState {
        PureState::from_terms(&["1", "2p", "3", "4p"], &[(a, "HVVV"), (b, "VHHH")]).unwrap()
    }

    #[test]
    fn coherence_length_default() {
        let lc = default_coherence_length_um();
        assert!((lc - 75.9).abs() < 0.1, "{lc}");
    }

    #[test]
    fn overlap_from_delay_examples() {
        let lc = 76.0;
        assert_eq!(overlap_from_delay(0.0, lc, 0.83).unwrap(), 0.83);
        assert!(overlap_from_delay(1e5, lc, 0.83).unwrap() < 1e-12);
        assert!(overlap_from_delay(-1e5, lc, 0.83).unwrap() < 1e-12);
        let half = overlap_from_delay(lc * 2f64.ln().sqrt(), lc, 0.83).unwrap();
        assert!((half - 0.415).abs() < 1e-12);
        assert!(overlap_from_delay(1.0, 0.0, 1.0).is_err());
        let mut last = 1.0;
        for k in 0..20 {
            let g = overlap_from_delay(k as f64 * 10.0, lc, 1.0).unwrap();
            assert!(g <= last);
            last = g;
        }
    }

    #[test]
    fn distinguishability_examples() {
        let s = FRAC_1_SQRT_2;
        let ghz = ghz_kept(c(s), c(s));
        let project = |rho: &DensityOperator| {
            let t = PureState::product(&[(m("3"), crate::qstate::PolKet::plus()), (m("4p"), crate::qstate::PolKet::plus())]).unwrap();
            rho.project_onto(&t).unwrap().normalize().unwrap().0
        };
        let full = project(&apply_distinguishability(&ghz, &m("2p"), &m("4p"), 1.0).unwrap());
        assert!((pm_visibility(&full).unwrap() - 1.0).abs() < 1e-12);
        assert!((full.fidelity_to_pure(&PureState::psi_plus("1", "2p")).unwrap() - 1.0).abs() < 1e-12);

        let none = project(&apply_distinguishability(&ghz, &m("2p"), &m("4p"), 0.0).unwrap());
        assert!(pm_visibility(&none).unwrap().abs() < 1e-12);
        assert!(chsh_s(&none, &optimal_settings_psi_plus()).unwrap() <= 2.0);

        let part = project(&apply_distinguishability(&ghz, &m("2p"), &m("4p"), 0.83).unwrap());
        assert!((pm_visibility(&part).unwrap() - 0.83).abs() < 1e-12);
        assert!((part.fidelity_to_pure(&PureState::psi_plus("1", "2p")).unwrap() - 0.915).abs() < 1e-12);
        assert!((chsh_s(&part, &optimal_settings_psi_plus()).unwrap() - SQRT_2 * 1.83).abs() < 1e-12);

        assert!(apply_distinguishability(&ghz, &m("2p"), &m("4p"), 1.2).is_err());
    }

    #[test]
    fn distinguishability_matches_density_route() {
        let ghz = ghz_kept(Complex64::new(0.3, 0.4), c(0.2));
        let direct = apply_distinguishability(&ghz, &m("2p"), &m("4p"), 0.6).unwrap();
        let via = ghz.to_operator().dephase_equal_sectors(&m("2p"), &m("4p"), 0.6).unwrap();
        assert!((direct.matrix() - via.matrix()).norm() < 1e-14);
    }

    #[test]
    fn dephased_family_metrics() {
        for g in [0.0, 0.5, 0.83, 1.0] {
            let rho = dephased_psi_plus("1", "2", g).unwrap();
            assert!(rho.is_physical(true));
            assert!((pm_visibility(&rho).unwrap() - g).abs() < 1e-12);
            let f = rho.fidelity_to_pure(&PureState::psi_plus("1", "2")).unwrap();
            assert!((f - (1.0 + g) / 2.0).abs() < 1e-12);
            let s = chsh_s(&rho, &optimal_settings_psi_plus()).unwrap();
            assert!((s - SQRT_2 * (1.0 + g)).abs() < 1e-12);
            // the CHSH-based estimate (3 + g)/4 never falls below the true fidelity
            assert!((fidelity_from_s(s).unwrap() - (3.0 + g) / 4.0).abs() < 1e-12);
            assert!(fidelity_from_s(s).unwrap() >= f - 1e-12);
        }
    }

    #[test]
    fn fit_inverts_chsh() {
        let opt = optimal_settings_psi_plus();
        for s in [2.58, 2.43, 2.42, 2.44, 2.52] {
            let g = fit_overlap_for_s(s, &opt).unwrap();
            let back = chsh_s(&dephased_psi_plus("1", "2", g).unwrap(), &opt).unwrap();
            assert!((back - s).abs() < 1e-12);
        }
        assert!(fit_overlap_for_s(2.9, &opt).is_err());
    }

    fn single_outcome_record() -> CorrelationRecord {
        CorrelationRecord {
            theta1: 0.0,
            theta2: 0.0,
            probs: [1.0, 0.0, 0.0, 0.0],
            e: 1.0,
        }
    }

    #[test]
    fn sample_counts_examples() {
        let cfg = SamplingConfig::new(8.0, 1000.0, 0.0, 11, Accounting::PerOutcome).unwrap();
        let t = sample_counts(&[single_outcome_record()], &cfg).unwrap();
        let n = t.settings[0].counts[0] as f64;
        assert!((n - 8000.0).abs() <= 4.0 * 8000f64.sqrt());
        assert_eq!(&t.settings[0].counts[1..], &[0, 0, 0]);

        let again = sample_counts(&[single_outcome_record()], &cfg).unwrap();
        assert_eq!(t, again);
        let other = sample_counts(&[single_outcome_record()], &cfg.with_seed(12)).unwrap();
        assert_ne!(t.settings[0].counts, other.settings[0].counts);
    }

    #[test]
    fn sample_counts_validates() {
        assert!(SamplingConfig::new(0.0, 1.0, 0.0, 0, Accounting::PerOutcome).is_err());
        assert!(SamplingConfig::new(1.0, -1.0, 0.0, 0, Accounting::PerOutcome).is_err());
        let cfg = SamplingConfig::new(1.0, 1.0, 0.0, 0, Accounting::PerOutcome).unwrap();
        let bad = CorrelationRecord {
            probs: [0.9, 0.9, 0.0, 0.0],
            ..single_outcome_record()
        };
        assert!(sample_counts(&[bad], &cfg).is_err());
    }

    #[test]
    fn accounting_modes() {
        let a = SamplingConfig::new(8.0, 1000.0, 0.0, 0, Accounting::PerOutcome).unwrap();
        let b = SamplingConfig { accounting: Accounting::PerSetting, ..a };
        assert_eq!(a.mean(0.5), 4000.0);
        assert_eq!(b.mean(0.5), 1000.0);
        let bg = SamplingConfig { background: 0.004, ..a };
        assert!((bg.mean(0.0) - 8000.0 * 0.001).abs() < 1e-12);
        assert_eq!("per-setting".parse::<Accounting>().unwrap(), Accounting::PerSetting);
    }

    #[test]
    fn estimate_matches_chsh_on_expected_counts() {
        let rho = dephased_psi_plus("1", "2", 0.7).unwrap();
        let opt = optimal_settings_psi_plus();
        let cfg = SamplingConfig::new(2.0, 1000.0, 0.0, 0, Accounting::PerOutcome).unwrap();
        let run = run_chsh(&rho, &opt, &cfg, false).unwrap();
        assert!((run.estimate.s - chsh_s(&rho, &opt).unwrap()).abs() < 1e-9);
        assert!(run.estimate.sigma > 0.0);
    }

    #[test]
    fn estimate_of_flat_counts() {
        let est = estimate_s_from(&[[10.0; 4]; 4]).unwrap();
        assert_eq!(est.s, 0.0);
        assert!(est.sigma > 0.0);
        assert_eq!(
            estimate_s_from(&[[10.0; 4], [0.0; 4], [10.0; 4], [10.0; 4]]).unwrap_err(),
            Error::EmptySetting(1)
        );
        assert!(estimate_s_from(&[[10.0; 4]; 3]).is_err());
    }

    #[test]
    fn error_propagation_matches_replication_spread() {
        let rho = dephased_psi_plus("1", "2", 0.8).unwrap();
        let records = chsh_records(&rho, &optimal_settings_psi_plus()).unwrap();
        let cfg = SamplingConfig::new(2.0, 1000.0, 0.0, 99, Accounting::PerOutcome).unwrap();
        let reps = replicate_s(&records, &cfg, 1000).unwrap();
        let mean = reps.iter().map(|r| r.s).sum::<f64>() / reps.len() as f64;
        let sd = (reps.iter().map(|r| (r.s - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
        let sigma = reps.iter().map(|r| r.sigma).sum::<f64>() / reps.len() as f64;
        assert!((sd / sigma - 1.0).abs() < 0.2, "sd {sd} sigma {sigma}");
    }

    #[test]
    fn replication_is_order_independent() {
        let rho = dephased_psi_plus("1", "2", 0.8).unwrap();
        let records = chsh_records(&rho, &optimal_settings_psi_plus()).unwrap();
        let cfg = SamplingConfig::new(2.0, 100.0, 0.01, 5, Accounting::PerSetting).unwrap();
        let par = replicate_s(&records, &cfg, 64).unwrap();
        let seq: Vec<SEstimate> = (0..64)
            .map(|i| estimate_s(&sample_counts(&records, &cfg.with_seed(derive_seed(5, i))).unwrap()).unwrap())
            .collect();
        assert_eq!(par, seq);
    }

    fn psi_pairs() -> (PureState, PureState) {
        let s = FRAC_1_SQRT_2;
        (
            prepare_pair(&PairSpec::new(c(s), c(s), "1", "2").unwrap()),
            prepare_pair(&PairSpec::new(c(s), c(s), "3", "4").unwrap()),
        )
    }

    #[test]
    fn delay_scan_examples() {
        let (p12, p34) = psi_pairs();
        let noise = NoiseParams::new(0.83, 0.0, 76.0).unwrap();
        let pts = delay_scan(Scheme::Concentration, &p12, &p34, &[-2000.0, -30.0, 0.0, 30.0, 2000.0], &noise, None).unwrap();
        let center = pts[2];
        assert!((center.p_mp / center.p_pp - 0.17 / 1.83).abs() < 1e-12);
        assert!((center.p_mp / center.p_pp - 0.093).abs() < 1e-3);
        assert!((pts[0].p_mp - 0.25).abs() < 1e-12 && (pts[0].p_pp - 0.25).abs() < 1e-12);
        assert_eq!(pts[1].p_mp, pts[3].p_mp);
        assert_eq!(pts[1].p_pp, pts[3].p_pp);
        let dip = dip_visibility(&pts, 1000.0).unwrap();
        assert!((dip.visibility - 0.83).abs() < 1e-12);
    }

    #[test]
    fn delay_scan_is_deterministic() {
        let (p12, p34) = psi_pairs();
        let noise = NoiseParams::new(0.83, 0.004, 76.0).unwrap();
        let cfg = SamplingConfig::new(2.0, 1000.0, 0.004, 3, Accounting::PerOutcome).unwrap();
        let delays: Vec<f64> = (-10..=10).map(|k| k as f64 * 20.0).collect();
        let a = delay_scan(Scheme::Concentration, &p12, &p34, &delays, &noise, Some(&cfg)).unwrap();
        let b = delay_scan(Scheme::Concentration, &p12, &p34, &delays, &noise, Some(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_concentration_is_dephased_psi_plus() {
        let (p12, p34) = psi_pairs();
        let r = run_scheme(Scheme::Concentration, &p12.to_operator(), &p34.to_operator(), Branch::PlusPlus, 0.6).unwrap();
        let expect = dephased_psi_plus("1", "2p", 0.6).unwrap();
        assert!((r.output.matrix() - expect.matrix()).norm() < 1e-12);
        let ideal = concentrate(&p12, &p34, Branch::PlusPlus).unwrap();
        assert!((r.success_prob - ideal.success_prob).abs() < 1e-12);
    }

    fn arb_branches() -> impl Strategy<Value = PureState> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(a, b, x, y)| a * a + b * b + x * x + y * y > 1e-3)
            .prop_map(|(a, b, x, y)| ghz_kept(Complex64::new(a, b), Complex64::new(x, y)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn distinguishability_keeps_trace_and_positivity(kept in arb_branches(), g in 0.0f64..=1.0) {
            let rho = apply_distinguishability(&kept, &m("2p"), &m("4p"), g).unwrap();
            prop_assert!((rho.trace() - kept.norm_sq()).abs() < 1e-10);
            prop_assert!(rho.is_hermitian(1e-10));
            prop_assert!(rho.min_eigenvalue() >= -1e-10);
        }
    }

    proptest! {
        #[test]
        fn metrics_are_monotone_in_overlap(g1 in 0.0f64..=1.0, g2 in 0.0f64..=1.0) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let opt = optimal_settings_psi_plus();
            let psi = PureState::psi_plus("1", "2");
            let a = dephased_psi_plus("1", "2", lo).unwrap();
            let b = dephased_psi_plus("1", "2", hi).unwrap();
            prop_assert!(pm_visibility(&a).unwrap() <= pm_visibility(&b).unwrap() + 1e-12);
            prop_assert!(chsh_s(&a, &opt).unwrap() <= chsh_s(&b, &opt).unwrap() + 1e-12);
            prop_assert!(a.fidelity_to_pure(&psi).unwrap() <= b.fidelity_to_pure(&psi).unwrap() + 1e-12);
        }
    }
}
