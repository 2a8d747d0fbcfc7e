//! Figures of merit for two-photon polarization states.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::optics::polarizer;
use crate::qstate::{labels, DensityOperator, PolKet, PureState};

/// Quantum bound on the CHSH combination, `2√2`.
pub const TSIRELSON_BOUND: f64 = 2.0 * SQRT_2;
/// Bound obeyed by every local model.
pub const LOCAL_BOUND: f64 = 2.0;

/// Analyzer angles (radians) for the two photons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// Angles are reduced into `[0, π)`; a polarizer at `θ + π` is the same
    /// element.
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        let wrap = |x: f64| x.rem_euclid(PI);
        ChshSettings {
            a: wrap(a),
            a_prime: wrap(a_prime),
            b: wrap(b),
            b_prime: wrap(b_prime),
        }
    }

    pub fn from_degrees(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        ChshSettings::new(a.to_radians(), a_prime.to_radians(), b.to_radians(), b_prime.to_radians())
    }

    /// `(θ1, θ2)` for `E(a,b)`, `E(a,b')`, `E(a',b)`, `E(a',b')`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }

    /// Sign of each correlation in `S = E(a,b) - E(a,b') + E(a',b) + E(a',b')`.
    pub const SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];
}

/// Settings reaching `2√2` on `Ψ+`.
pub fn optimal_settings_psi_plus() -> ChshSettings {
    ChshSettings::new(0.0, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_8)
}

/// Outcome probabilities for one pair of analyzer angles, ordered
/// `(++, +-, -+, --)`. `+` is transmission through `polarizer(θ)`, `-`
/// through `polarizer(θ + π/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationRecord {
    pub theta1: f64,
    pub theta2: f64,
    pub probs: [f64; 4],
    pub e: f64,
}

/// Correlation of the two photons of `rho` (first canonical mode analyzed at
/// `theta1`). Probabilities are conditional on the state, i.e. divided by
/// its trace.
pub fn correlation(rho: &DensityOperator, theta1: f64, theta2: f64) -> Result<CorrelationRecord> {
    let modes = two_modes(rho)?;
    let trace = rho.trace();
    if trace <= 0.0 {
        return Err(Error::ImpossibleBranch { prob: trace });
    }
    let kets = |t: f64| [polarizer(t), polarizer(t + FRAC_PI_2)];
    let (k1, k2) = (kets(theta1), kets(theta2));
    let mut probs = [0.0; 4];
    for (i, x) in k1.iter().enumerate() {
        for (j, y) in k2.iter().enumerate() {
            probs[2 * i + j] = outcome_prob(rho, &modes, x, y)? / trace;
        }
    }
    Ok(CorrelationRecord {
        theta1,
        theta2,
        probs,
        e: probs[0] + probs[3] - probs[1] - probs[2],
    })
}

fn two_modes(rho: &DensityOperator) -> Result<[crate::qstate::ModeId; 2]> {
    match rho.modes() {
        [a, b] => Ok([a.clone(), b.clone()]),
        other => Err(Error::ModeMismatch {
            expected: "two modes".into(),
            found: labels(other),
        }),
    }
}

fn outcome_prob(
    rho: &DensityOperator,
    modes: &[crate::qstate::ModeId; 2],
    k1: &PolKet,
    k2: &PolKet,
) -> Result<f64> {
    let target = PureState::product(&[(modes[0].clone(), *k1), (modes[1].clone(), *k2)])?;
    rho.fidelity_to_pure(&target)
}

/// The four correlation records entering `S`.
pub fn chsh_records(rho: &DensityOperator, s: &ChshSettings) -> Result<[CorrelationRecord; 4]> {
    let p = s.pairs();
    Ok([
        correlation(rho, p[0].0, p[0].1)?,
        correlation(rho, p[1].0, p[1].1)?,
        correlation(rho, p[2].0, p[2].1)?,
        correlation(rho, p[3].0, p[3].1)?,
    ])
}

pub fn chsh_s(rho: &DensityOperator, s: &ChshSettings) -> Result<f64> {
    Ok(chsh_records(rho, s)?
        .iter()
        .zip(ChshSettings::SIGNS)
        .map(|(r, sign)| sign * r.e)
        .sum())
}

/// Populations in the H/V product basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HvFractions {
    pub hh: f64,
    pub hv: f64,
    pub vh: f64,
    pub vv: f64,
}

impl HvFractions {
    /// `p_HV / p_VH`; infinite when `p_VH` vanishes.
    pub fn ratio(&self) -> f64 {
        if self.vh <= 0.0 {
            f64::INFINITY
        } else {
            self.hv / self.vh
        }
    }

    /// `(p_HV + p_VH) / (p_HH + p_VV)`; infinite when the latter vanishes.
    pub fn signal_to_noise(&self) -> f64 {
        let noise = self.hh + self.vv;
        if noise <= 0.0 {
            f64::INFINITY
        } else {
            (self.hv + self.vh) / noise
        }
    }
}

pub fn hv_fractions(rho: &DensityOperator) -> Result<HvFractions> {
    two_modes(rho)?;
    let tr = rho.trace();
    if tr <= 0.0 {
        return Err(Error::ImpossibleBranch { prob: tr });
    }
    let d = |i: usize| rho.matrix()[(i, i)].re / tr;
    Ok(HvFractions {
        hh: d(0),
        hv: d(1),
        vh: d(2),
        vv: d(3),
    })
}

/// Contrast in the ± basis: `(p++ + p-- - p+- - p-+)` over the four
/// outcomes.
pub fn pm_visibility(rho: &DensityOperator) -> Result<f64> {
    let r = correlation(rho, FRAC_PI_4, FRAC_PI_4)?;
    Ok(r.e / r.probs.iter().sum::<f64>())
}

/// Fidelity estimate from a CHSH value through `V = S/(2√2)` and
/// `F = (1 + V)/2`.
pub fn fidelity_from_s(s: f64) -> Result<f64> {
    if !(0.0..=TSIRELSON_BOUND + 1e-9).contains(&s) {
        return Err(Error::invalid("S", s, "must lie in [0, 2√2]"));
    }
    Ok((1.0 + s / TSIRELSON_BOUND) / 2.0)
}

/// Distance of `S` above the local bound in units of `sigma`.
pub fn violation_sigma(s: f64, sigma: f64) -> Result<f64> {
    if sigma <= 0.0 || sigma.is_nan() {
        return Err(Error::invalid("sigma", sigma, "must be positive"));
    }
    Ok((s - LOCAL_BOUND) / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::ModeId;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn psi_plus() -> DensityOperator {
        PureState::psi_plus("1", "2").to_density().unwrap()
    }

    /// HV/VH populations 1/2, coherence gamma/2.
    fn dephased(gamma: f64) -> DensityOperator {
        let mut m = DMatrix::zeros(4, 4);
        m[(1, 1)] = c(0.5);
        m[(2, 2)] = c(0.5);
        m[(1, 2)] = c(0.5 * gamma);
        m[(2, 1)] = c(0.5 * gamma);
        DensityOperator::new(vec![ModeId::from("1"), ModeId::from("2")], m).unwrap()
    }

    /// Oracle: brute-force contraction of the 4x4 matrix with explicit
    /// product kets, independent of `correlation`.
    fn e_oracle(rho: &DensityOperator, t1: f64, t2: f64) -> f64 {
        let ket = |t: f64| [c(t.cos()), c(t.sin())];
        let mut e = 0.0;
        for (s1, a) in [(1.0, t1), (-1.0, t1 + FRAC_PI_2)] {
            for (s2, b) in [(1.0, t2), (-1.0, t2 + FRAC_PI_2)] {
                let (k1, k2) = (ket(a), ket(b));
                let v: Vec<Complex64> = (0..4).map(|i| k1[i >> 1] * k2[i & 1]).collect();
                let mut p = c(0.0);
                for r in 0..4 {
                    for col in 0..4 {
                        p += v[r].conj() * rho.matrix()[(r, col)] * v[col];
                    }
                }
                e += s1 * s2 * p.re;
            }
        }
        e
    }

    #[test]
    fn psi_plus_correlation_law() {
        let rho = psi_plus();
        for (t1, t2) in [(0.0, FRAC_PI_4), (FRAC_PI_4, FRAC_PI_4), (0.3, 1.1), (0.0, 0.0)] {
            let r = correlation(&rho, t1, t2).unwrap();
            assert!((r.e + (2.0 * (t1 + t2)).cos()).abs() < 1e-12);
            assert!((r.e - e_oracle(&rho, t1, t2)).abs() < 1e-12);
            assert!((r.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!((correlation(&rho, FRAC_PI_4, FRAC_PI_4).unwrap().e - 1.0).abs() < 1e-12);
        assert!(correlation(&rho, 0.0, FRAC_PI_4).unwrap().e.abs() < 1e-12);
    }

    #[test]
    fn product_and_mixed_correlations() {
        let hv = PureState::from_terms(&["1", "2"], &[(c(1.0), "HV")]).unwrap().to_density().unwrap();
        assert!((correlation(&hv, 0.0, 0.0).unwrap().e + 1.0).abs() < 1e-12);
        let mixed = DensityOperator::maximally_mixed(&["1", "2"]).unwrap();
        for (t1, t2) in [(0.0, 0.0), (0.4, 1.3), (FRAC_PI_4, 0.1)] {
            assert!(correlation(&mixed, t1, t2).unwrap().e.abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_needs_two_modes() {
        let one = PureState::product(&[("1".into(), PolKet::H)]).unwrap().to_density().unwrap();
        assert!(matches!(correlation(&one, 0.0, 0.0), Err(Error::ModeMismatch { .. })));
    }

    #[test]
    fn chsh_examples() {
        let opt = optimal_settings_psi_plus();
        assert!((chsh_s(&psi_plus(), &opt).unwrap() - TSIRELSON_BOUND).abs() < 1e-9);

        let psi_minus = PureState::psi_minus("1", "2").to_density().unwrap();
        assert!(chsh_s(&psi_minus, &opt).unwrap() < TSIRELSON_BOUND - 1.0);

        let mixed = DensityOperator::maximally_mixed(&["1", "2"]).unwrap();
        assert!(chsh_s(&mixed, &opt).unwrap().abs() < 1e-12);
    }

    #[test]
    fn chsh_of_dephased_family() {
        // Oracle: E(θ1,θ2) = -cos2θ1 cos2θ2 + γ sin2θ1 sin2θ2 for the
        // HV/VH-dephased Ψ+, so at the optimal Ψ+ settings S = √2 (1 + γ).
        let opt = optimal_settings_psi_plus();
        for gamma in [0.0, 0.3, 0.83, 1.0] {
            let rho = dephased(gamma);
            let brute: f64 = opt
                .pairs()
                .iter()
                .zip(ChshSettings::SIGNS)
                .map(|((a, b), s)| s * e_oracle(&rho, *a, *b))
                .sum();
            let s = chsh_s(&rho, &opt).unwrap();
            assert!((s - brute).abs() < 1e-12);
            assert!((s - SQRT_2 * (1.0 + gamma)).abs() < 1e-12);
        }
        // the HV/VH classical mixture never exceeds the local bound
        let mix = dephased(0.0);
        for k in 0..50 {
            let x = k as f64 * 0.37;
            let set = ChshSettings::new(x, 2.0 * x + 0.1, 0.5 * x + 0.7, 3.0 * x);
            assert!(chsh_s(&mix, &set).unwrap().abs() <= LOCAL_BOUND + 1e-9);
        }
    }

    #[test]
    fn settings_wrap_into_half_turn() {
        let s = ChshSettings::from_degrees(-45.0, 180.0, 67.5, 22.5);
        assert!((s.a - 3.0 * FRAC_PI_4).abs() < 1e-12);
        assert!(s.a_prime.abs() < 1e-12);
        assert!((s.b - 3.0 * FRAC_PI_8).abs() < 1e-12);
    }

    #[test]
    fn hv_fraction_examples() {
        let hv = PureState::from_terms(&["1", "2"], &[(c(1.0), "HV")]).unwrap().to_density().unwrap();
        let f = hv_fractions(&hv).unwrap();
        assert_eq!((f.hh, f.hv, f.vh, f.vv), (0.0, 1.0, 0.0, 0.0));
        assert!(f.ratio().is_infinite());

        let f = hv_fractions(&psi_plus()).unwrap();
        assert!((f.ratio() - 1.0).abs() < 1e-12);
        assert!(f.signal_to_noise().is_infinite());
    }

    #[test]
    fn visibility_examples() {
        assert!((pm_visibility(&psi_plus()).unwrap() - 1.0).abs() < 1e-12);
        assert!(pm_visibility(&dephased(0.0)).unwrap().abs() < 1e-12);
        assert!((pm_visibility(&dephased(0.83)).unwrap() - 0.83).abs() < 1e-12);
    }

    #[test]
    fn fidelity_from_s_examples() {
        assert!((fidelity_from_s(2.58).unwrap() - 0.956).abs() < 1e-3);
        assert!((fidelity_from_s(2.43).unwrap() - 0.930).abs() < 1e-3);
        assert!((fidelity_from_s(TSIRELSON_BOUND).unwrap() - 1.0).abs() < 1e-15);
        assert!(fidelity_from_s(3.0).is_err());
        assert!(fidelity_from_s(-0.1).is_err());
    }

    #[test]
    fn violation_sigma_examples() {
        assert!((violation_sigma(2.58, 0.07).unwrap() - 8.2857).abs() < 1e-3);
        assert!((violation_sigma(2.43, 0.08).unwrap() - 5.375).abs() < 1e-9);
        assert_eq!(violation_sigma(2.0, 0.3).unwrap(), 0.0);
        assert!(violation_sigma(2.5, 0.0).is_err());
    }

    fn arb_density() -> impl Strategy<Value = DensityOperator> {
        // rho = A A^dagger / tr for a random complex 4x4 A
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16).prop_map(|v| {
            let a = DMatrix::from_iterator(4, 4, v.into_iter().map(|(x, y)| Complex64::new(x, y)));
            let m = &a * a.adjoint();
            let tr = m.trace().re.max(1e-12);
            DensityOperator::new(vec!["1".into(), "2".into()], m / Complex64::new(tr, 0.0)).unwrap()
        })
    }

    fn arb_ket() -> impl Strategy<Value = PolKet> {
        (0.0f64..PI, -PI..PI).prop_map(|(t, p)| {
            PolKet::new(c((t / 2.0).cos()), Complex64::from_polar((t / 2.0).sin(), p))
        })
    }

    fn arb_settings() -> impl Strategy<Value = ChshSettings> {
        (0.0f64..PI, 0.0f64..PI, 0.0f64..PI, 0.0f64..PI)
            .prop_map(|(a, b, c, d)| ChshSettings::new(a, b, c, d))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn tsirelson_bound_holds(rho in arb_density(), s in arb_settings()) {
            prop_assert!(chsh_s(&rho, &s).unwrap().abs() <= TSIRELSON_BOUND + 1e-9);
        }

        #[test]
        fn product_states_obey_local_bound(k1 in arb_ket(), k2 in arb_ket(), s in arb_settings()) {
            let rho = PureState::product(&[("1".into(), k1), ("2".into(), k2)]).unwrap()
                .normalize().unwrap().0.to_density().unwrap();
            prop_assert!(chsh_s(&rho, &s).unwrap().abs() <= LOCAL_BOUND + 1e-9);
        }

        #[test]
        fn correlation_probabilities_sum_to_one(rho in arb_density(), t1 in 0.0f64..PI, t2 in 0.0f64..PI) {
            let r = correlation(&rho, t1, t2).unwrap();
            prop_assert!((r.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!((r.e - e_oracle(&rho, t1, t2)).abs() < 1e-10);
        }
    }
}
