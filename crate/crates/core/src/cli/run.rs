//! Command drivers. Every command returns its report and CSV files in
//! memory; writing them out is left to the caller.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metrics::{
    chsh_s, fidelity_from_s, hv_fractions, optimal_settings_psi_plus, pm_visibility, violation_sigma,
    ChshSettings, HvFractions,
};
use crate::optics::brewster_window;
use crate::protocols::{
    all_branches, bell_swap, concentrate, local_filter, prepare_pair, repeater_filtered, run_scheme, Branch,
    PairSpec, ProtocolResult, Scheme, MODE_1, MODE_2, MODE_3, MODE_4,
};
use crate::qstate::{DensityOperator, PureState, Register};
use crate::stochastics::{
    analyzed_rate, delay_scan, derive_seed, dip_visibility, fit_overlap_for_s, run_chsh, ChshRun, NoiseParams,
    SamplingConfig,
};

use super::config::{ExperimentConfig, Protocol};

/// CHSH values regenerated by `table1`, one per window count.
pub const TABLE1_WINDOWS: [u32; 3] = [1, 2, 4];
pub const TABLE1_TARGET_S: [f64; 3] = [2.58, 2.43, 2.42];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Concentrate,
    Repeater,
    RepeaterFiltered,
    BellSwap,
    Chsh,
    DelayScan,
    Table1,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Concentrate => "concentrate",
            Command::Repeater => "repeater",
            Command::RepeaterFiltered => "repeater-filtered",
            Command::BellSwap => "bell-swap",
            Command::Chsh => "chsh",
            Command::DelayScan => "delay-scan",
            Command::Table1 => "table1",
        }
    }
}

/// Report text plus `(file name, contents)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub report: String,
    pub files: Vec<(String, String)>,
}

/// Formats with 12 significant digits, plain notation for moderate
/// magnitudes.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..12).contains(&exp) {
        let s = format!("{:.*}", (11 - exp).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let (mant, e) = sci.split_at(sci.find('e').unwrap());
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}{e}")
    }
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn settings(cfg: &ExperimentConfig) -> ChshSettings {
    ChshSettings::from_degrees(cfg.chsh_a_deg, cfg.chsh_a_prime_deg, cfg.chsh_b_deg, cfg.chsh_b_prime_deg)
}

/// A prepared pair and the fraction of source pairs that survive its windows.
#[derive(Debug, Clone)]
pub struct Source {
    pub spec: PairSpec,
    pub transmission: f64,
    pub windows: Option<u32>,
}

fn source(cfg: &ExperimentConfig, alpha: Option<f64>, windows: u32, first: &str, second: &str) -> Result<Source> {
    let phase = cfg.phase_deg.to_radians();
    match alpha {
        Some(a) => {
            let b = (1.0 - a * a).max(0.0).sqrt();
            Ok(Source {
                spec: PairSpec::new(Complex64::new(a, 0.0), Complex64::from_polar(b, phase), first, second)?,
                transmission: 1.0,
                windows: None,
            })
        }
        None => {
            let w = brewster_window(cfg.t_h, cfg.t_v, windows)?;
            Ok(Source {
                spec: PairSpec::from_windows(&w, phase, first, second)?,
                transmission: (w.t_h() + w.t_v()) / 2.0,
                windows: Some(windows),
            })
        }
    }
}

/// Sources for pairs (1,2) and (3,4).
pub fn sources(cfg: &ExperimentConfig) -> Result<(Source, Source)> {
    let a = source(cfg, cfg.alpha, cfg.windows, MODE_1, MODE_2)?;
    let alpha_b = match (cfg.alpha_b, cfg.windows_b) {
        (Some(x), _) => Some(x),
        (None, Some(_)) => None,
        (None, None) => cfg.alpha,
    };
    let b = source(cfg, alpha_b, cfg.windows_b.unwrap_or(cfg.windows), MODE_3, MODE_4)?;
    Ok((a, b))
}

/// Ratio `(t_h / t_v)^n` that `n` windows imprint on `Ψ+`.
pub fn pair_ratio(s: &Source) -> f64 {
    s.spec.ratio()
}

struct ProtocolRun {
    a: Source,
    b: Source,
    /// `(label, result)` for every branch that was evaluated.
    branches: Vec<(String, ProtocolResult<DensityOperator>)>,
    selected: ProtocolResult<DensityOperator>,
    /// Extra transmission from local filters (1 without filters).
    filter_prob: f64,
}

fn evaluate(protocol: Protocol, cfg: &ExperimentConfig) -> Result<ProtocolRun> {
    let (a, b) = sources(cfg)?;
    let r12 = prepare_pair(&a.spec).to_operator();
    let r34 = prepare_pair(&b.spec).to_operator();
    let (branches, filter_prob) = match protocol {
        Protocol::Concentrate | Protocol::Repeater => {
            let scheme = if protocol == Protocol::Concentrate { Scheme::Concentration } else { Scheme::Repeater };
            let table = all_branches(scheme, &r12, &r34, cfg.gamma)?;
            let rows = table
                .results
                .into_iter()
                .map(|r| (r.branch.unwrap().label().to_string(), r))
                .collect();
            (rows, 1.0)
        }
        Protocol::RepeaterFiltered => {
            let rows = Branch::ALL
                .iter()
                .map(|&br| {
                    repeater_filtered::<DensityOperator>(&a.spec, &b.spec, br, cfg.gamma)
                        .map(|r| (br.label().to_string(), r))
                })
                .collect::<Result<Vec<_>>>()?;
            let fp = local_filter(&a.spec)?.success_prob * local_filter(&b.spec)?.success_prob;
            (rows, fp)
        }
        Protocol::BellSwap => {
            let mut r = bell_swap(&r12, &r34)?;
            // the compensator phases are known; undo them on photon 1
            let (sa, sb) = (&a.spec, &b.spec);
            let relative = (sa.beta() * sb.beta()).arg() - (sa.alpha() * sb.alpha()).arg();
            r.corrective_phase = Some(-relative);
            (vec![("bell".to_string(), r)], 1.0)
        }
    };
    let selected = match protocol {
        Protocol::BellSwap => branches[0].1.clone(),
        _ => branches
            .iter()
            .find(|(_, r)| r.branch == Some(cfg.branch))
            .map(|(_, r)| r.clone())
            .expect("all branches evaluated"),
    };
    if selected.success_prob <= crate::qstate::BRANCH_EPS {
        return Err(Error::ImpossibleBranch {
            prob: selected.success_prob,
        });
    }
    Ok(ProtocolRun {
        a,
        b,
        branches,
        selected,
        filter_prob,
    })
}

fn fractions_row(stage: &str, f: &HvFractions) -> Vec<String> {
    vec![
        stage.to_string(),
        sig12(f.hh),
        sig12(f.hv),
        sig12(f.vh),
        sig12(f.vv),
        sig12(f.ratio()),
    ]
}

fn sampling(cfg: &ExperimentConfig, rate: f64, seed: u64) -> Result<SamplingConfig> {
    SamplingConfig::new(rate, cfg.time, cfg.background, seed, cfg.accounting)
}

fn counts_csv(run: &ChshRun) -> String {
    const OUTCOMES: [&str; 4] = ["++", "+-", "-+", "--"];
    let mut rows = Vec::new();
    for (k, rec) in run.records.iter().enumerate() {
        for (o, name) in OUTCOMES.iter().enumerate() {
            let counts = match &run.table {
                Some(t) => t.settings[k].counts[o].to_string(),
                None => sig12(run.expected[k][o]),
            };
            rows.push(vec![
                k.to_string(),
                sig12(rec.theta1),
                sig12(rec.theta2),
                name.to_string(),
                sig12(rec.probs[o]),
                counts,
            ]);
        }
    }
    csv(&["setting_id", "theta1", "theta2", "outcome", "probability", "counts"], &rows)
}

fn header(command: Command, cfg: &ExperimentConfig) -> String {
    let mut s = format!("# entconc {}\n", command.name());
    s.push_str(&cfg.echo());
    s
}

fn comment(report: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(report, "# {key} = {value}");
}

fn source_comments(report: &mut String, name: &str, s: &Source) {
    let (al, be) = (s.spec.alpha(), s.spec.beta());
    comment(report, &format!("{name}_alpha"), format!("{} {:+}i", sig12(al.re), sig12(al.im)));
    comment(report, &format!("{name}_beta"), format!("{} {:+}i", sig12(be.re), sig12(be.im)));
    comment(report, &format!("{name}_ratio"), sig12(pair_ratio(s)));
    comment(report, &format!("{name}_transmission"), sig12(s.transmission));
}

fn protocol_command(command: Command, protocol: Protocol, cfg: &ExperimentConfig) -> Result<Outputs> {
    let run = evaluate(protocol, cfg)?;
    let sel = &run.selected;
    let corrected = sel.corrected()?;
    let fidelity = sel.corrected_fidelity()?;
    let visibility = pm_visibility(&corrected)?;
    let out_fr = hv_fractions(&corrected)?;

    let transmission = run.a.transmission * run.b.transmission * run.filter_prob;
    let rate = analyzed_rate(cfg.rate, transmission, sel.pbs_prob, sel.branch_prob);
    let chsh = run_chsh(&corrected, &settings(cfg), &sampling(cfg, rate, cfg.seed)?, !cfg.ideal)?;
    let est = chsh.estimate;

    let mut report = header(command, cfg);
    source_comments(&mut report, "pair_a", &run.a);
    source_comments(&mut report, "pair_b", &run.b);
    comment(&mut report, "pbs_prob", sig12(sel.pbs_prob));
    for (label, r) in &run.branches {
        comment(&mut report, &format!("branch_{label}_prob"), sig12(r.success_prob));
    }
    comment(&mut report, "selected_branch", run.branches.iter().find(|(_, r)| r.branch == sel.branch).unwrap().0.as_str());
    comment(&mut report, "success_prob", sig12(sel.success_prob));
    comment(&mut report, "fidelity", sig12(fidelity));
    comment(&mut report, "output_ratio", sig12(out_fr.ratio()));
    comment(&mut report, "visibility", sig12(visibility));
    comment(&mut report, "analyzed_rate", sig12(rate));
    comment(&mut report, "S", format!("{} +- {}", sig12(est.s), sig12(est.sigma)));
    if let Ok(v) = violation_sigma(est.s, est.sigma) {
        comment(&mut report, "violation_sigma", sig12(v));
    }
    if let Ok(f) = fidelity_from_s(est.s) {
        comment(&mut report, "fidelity_from_S", sig12(f));
    }

    let branch_rows: Vec<Vec<String>> = run
        .branches
        .iter()
        .map(|(label, r)| {
            let modes = r.output.modes();
            let target = match r.branch {
                Some(b) => b.heralded_state(modes[0].as_str(), modes[1].as_str()),
                None => PureState::psi_plus(modes[0].as_str(), modes[1].as_str()),
            };
            Ok(vec![
                label.clone(),
                sig12(r.pbs_prob),
                sig12(r.branch_prob),
                sig12(r.success_prob),
                sig12(r.fidelity(&target)?),
                sig12(r.corrected_fidelity()?),
            ])
        })
        .collect::<Result<_>>()?;
    let fr_rows = vec![
        fractions_row("input_a", &hv_fractions(&prepare_pair(&run.a.spec).to_operator())?),
        fractions_row("input_b", &hv_fractions(&prepare_pair(&run.b.spec).to_operator())?),
        fractions_row("output", &out_fr),
    ];
    let summary = csv(
        &["S", "sigma", "visibility", "fidelity", "success_prob"],
        &[vec![sig12(est.s), sig12(est.sigma), sig12(visibility), sig12(fidelity), sig12(sel.success_prob)]],
    );
    Ok(Outputs {
        report,
        files: vec![
            (
                "branches.csv".into(),
                csv(
                    &["branch", "pbs_prob", "branch_prob", "success_prob", "fidelity", "corrected_fidelity"],
                    &branch_rows,
                ),
            ),
            ("fractions.csv".into(), csv(&["stage", "hh", "hv", "vh", "vv", "ratio"], &fr_rows)),
            ("counts.csv".into(), counts_csv(&chsh)),
            ("summary.csv".into(), summary),
        ],
    })
}

fn scan_command(cfg: &ExperimentConfig) -> Result<Outputs> {
    let scheme = match cfg.protocol {
        Protocol::Concentrate => Scheme::Concentration,
        Protocol::Repeater => Scheme::Repeater,
        other => {
            return Err(Error::InvalidParameter {
                name: format!("protocol = {other}"),
                value: f64::NAN,
                reason: "delay scans need concentrate or repeater",
            })
        }
    };
    let (a, b) = sources(cfg)?;
    let (p12, p34) = (prepare_pair(&a.spec), prepare_pair(&b.spec));
    let ideal = run_scheme(scheme, &p12, &p34, Branch::PlusPlus, 1.0)?;
    let rate = analyzed_rate(cfg.rate, a.transmission * b.transmission, ideal.pbs_prob, ideal.branch_prob);
    let noise = NoiseParams::new(cfg.gamma, cfg.background, cfg.coherence_length_um)?;
    let samp = SamplingConfig::new(rate, cfg.scan_time, cfg.background, cfg.seed, cfg.accounting)?;
    let n = cfg.scan_points;
    let delays: Vec<f64> = (0..n)
        .map(|i| cfg.scan_min_um + (cfg.scan_max_um - cfg.scan_min_um) * i as f64 / (n - 1) as f64)
        .collect();
    let points = delay_scan(scheme, &p12, &p34, &delays, &noise, (!cfg.ideal).then_some(&samp))?;
    let dip = dip_visibility(&points, 3.0 * cfg.coherence_length_um)?;

    let opt = |c: Option<u64>| c.map(|x| x.to_string()).unwrap_or_default();
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                sig12(p.delay_um),
                sig12(p.gamma),
                sig12(p.p_pp),
                sig12(p.p_mp),
                opt(p.counts_pp),
                opt(p.counts_mp),
            ]
        })
        .collect();
    let mut report = header(Command::DelayScan, cfg);
    comment(&mut report, "analyzed_rate", sig12(rate));
    comment(&mut report, "visibility", format!("{} +- {}", sig12(dip.visibility), sig12(dip.visibility_sigma)));
    comment(&mut report, "dip", sig12(dip.dip));
    comment(&mut report, "plateau_mp", sig12(dip.plateau));
    comment(&mut report, "plateau_pp", sig12(dip.plateau_pp));
    Ok(Outputs {
        report,
        files: vec![
            (
                "scan.csv".into(),
                csv(&["delay_um", "gamma", "p_pp", "p_mp", "counts_pp", "counts_mp"], &rows),
            ),
            (
                "dip.csv".into(),
                csv(
                    &["visibility", "visibility_sigma", "dip", "plateau_mp", "plateau_pp"],
                    &[vec![
                        sig12(dip.visibility),
                        sig12(dip.visibility_sigma),
                        sig12(dip.dip),
                        sig12(dip.plateau),
                        sig12(dip.plateau_pp),
                    ]],
                ),
            ),
        ],
    })
}

/// One regenerated row of the concentration table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row {
    pub windows: u32,
    pub pre_ratio: f64,
    pub post_ratio: f64,
    pub pbs_prob: f64,
    pub s_ideal: f64,
    pub target_s: f64,
    pub gamma: f64,
    pub s_model: f64,
    pub fidelity: f64,
    pub fidelity_from_s: f64,
    pub s_sampled: f64,
    pub sigma: f64,
}

pub fn table1_rows(cfg: &ExperimentConfig) -> Result<Vec<Table1Row>> {
    let opt = optimal_settings_psi_plus();
    TABLE1_WINDOWS
        .iter()
        .zip(TABLE1_TARGET_S)
        .enumerate()
        .map(|(row, (&n, target_s))| {
            let row_cfg = ExperimentConfig {
                windows: n,
                windows_b: None,
                alpha: None,
                alpha_b: None,
                ..cfg.clone()
            };
            let (a, b) = sources(&row_cfg)?;
            let (p12, p34) = (prepare_pair(&a.spec), prepare_pair(&b.spec));
            let ideal = concentrate(&p12, &p34, Branch::PlusPlus)?;
            let ideal_rho = ideal.output.to_operator();
            let post_ratio = hv_fractions(&ideal_rho)?.ratio();
            let s_ideal = chsh_s(&ideal_rho, &opt)?;
            let gamma = fit_overlap_for_s(target_s, &opt)?;
            let noisy = run_scheme(Scheme::Concentration, &p12.to_operator(), &p34.to_operator(), Branch::PlusPlus, gamma)?;
            let s_model = chsh_s(&noisy.output, &opt)?;
            let fidelity = noisy.fidelity(&PureState::psi_plus(MODE_1, crate::protocols::MODE_2P))?;
            let rate = analyzed_rate(cfg.rate, a.transmission * b.transmission, noisy.pbs_prob, noisy.branch_prob);
            let samp = sampling(cfg, rate, derive_seed(cfg.seed, row as u64))?;
            let est = run_chsh(&noisy.output, &opt, &samp, !cfg.ideal)?.estimate;
            Ok(Table1Row {
                windows: n,
                pre_ratio: a.spec.ratio(),
                post_ratio,
                pbs_prob: noisy.pbs_prob,
                s_ideal,
                target_s,
                gamma,
                s_model,
                fidelity,
                fidelity_from_s: fidelity_from_s(s_model)?,
                s_sampled: est.s,
                sigma: est.sigma,
            })
        })
        .collect()
}

fn table1_command(cfg: &ExperimentConfig) -> Result<Outputs> {
    let rows = table1_rows(cfg)?;
    let mut report = header(Command::Table1, cfg);
    for r in &rows {
        comment(
            &mut report,
            &format!("windows_{}", r.windows),
            format!(
                "ratio {} -> {}, S {} +- {}, F {}",
                sig12(r.pre_ratio),
                sig12(r.post_ratio),
                sig12(r.s_sampled),
                sig12(r.sigma),
                sig12(r.fidelity_from_s)
            ),
        );
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.windows.to_string(),
                sig12(r.pre_ratio),
                sig12(r.post_ratio),
                sig12(r.pbs_prob),
                sig12(r.s_ideal),
                sig12(r.target_s),
                sig12(r.gamma),
                sig12(r.s_model),
                sig12(r.fidelity),
                sig12(r.fidelity_from_s),
                sig12(r.s_sampled),
                sig12(r.sigma),
            ]
        })
        .collect();
    Ok(Outputs {
        report,
        files: vec![(
            "table1.csv".into(),
            csv(
                &[
                    "windows",
                    "pre_ratio",
                    "post_ratio",
                    "pbs_prob",
                    "s_ideal",
                    "target_s",
                    "gamma",
                    "s_model",
                    "fidelity",
                    "fidelity_from_s",
                    "s_sampled",
                    "sigma",
                ],
                &body,
            ),
        )],
    })
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Outputs> {
    match command {
        Command::Concentrate => protocol_command(command, Protocol::Concentrate, cfg),
        Command::Repeater => protocol_command(command, Protocol::Repeater, cfg),
        Command::RepeaterFiltered => protocol_command(command, Protocol::RepeaterFiltered, cfg),
        Command::BellSwap => protocol_command(command, Protocol::BellSwap, cfg),
        Command::Chsh => protocol_command(command, cfg.protocol, cfg),
        Command::DelayScan => scan_command(cfg),
        Command::Table1 => table1_command(cfg),
    }
}
