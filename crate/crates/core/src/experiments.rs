//! Seeded Monte Carlo sweeps and the tables behind the plots.
//!
//! Every trial draws from its own ChaCha stream keyed by the master seed and
//! `(snr_index << 32) | trial_index`. Trials run on a local rayon pool and are
//! reduced in trial order, so the output does not depend on the thread
//! count.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_block_model, sample_channel_with, simulate_exchange, SystemConfig};
use crate::crb::{acrb, acrb_oneway, estimate_gamma, gcrb, stream_rng, CrbInputs, NoiseFactor};
use crate::error::{invalid, Error, Result};
use crate::estimation::{
    build_preserving_filter, correlate_blocks, correlator_estimate, gamle_estimate, MleInput, MleKnowledge, MleOptions,
};
use crate::linalg::lower_triangular_inverse;
use crate::preamble::{
    degradation, generalize_cazac, generate_cazac, heuristic_delta, optimal_delta, principal_angle, BrpSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreambleMode {
    /// Both sources repeat the same CAZAC block.
    Periodic,
    /// Generalised CAZAC blocks with `theta1 = 0`, `theta2 = Delta*(M)`.
    #[default]
    OptimizedBrp,
    /// S1 silent, S2 sends the optimised preamble.
    OneWay,
}

impl PreambleMode {
    pub fn name(self) -> &'static str {
        match self {
            PreambleMode::Periodic => "periodic",
            PreambleMode::OptimizedBrp => "optimized-brp",
            PreambleMode::OneWay => "one-way",
        }
    }
}

/// Preambles of S1 (absent when silent) and S2 for a mode.
pub fn preamble_pair(mode: PreambleMode, config: &SystemConfig) -> Result<(Option<BrpSpec>, BrpSpec)> {
    config.validate()?;
    let (l, m) = (config.block_len, config.num_blocks);
    let base = generate_cazac(l)?;
    if mode == PreambleMode::Periodic {
        let brp = BrpSpec::new(base, 0.0, m)?;
        return Ok((Some(brp.clone()), brp));
    }
    let theta2 = optimal_delta(m)?.delta;
    let brp2 = BrpSpec::new(generalize_cazac(&base, theta2), theta2, m)?;
    let brp1 = (mode == PreambleMode::OptimizedBrp).then(|| BrpSpec::new(base, 0.0, m)).transpose()?;
    Ok((brp1, brp2))
}

fn default_snr_grid() -> Vec<f64> {
    (0..=15).map(|i| 2.0 * i as f64).collect()
}

/// One Monte Carlo sweep over SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub preamble_mode: PreambleMode,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// Prefix for output files.
    pub outputs: String,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub mle_input: MleInput,
    pub mle: MleOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            preamble_mode: PreambleMode::default(),
            snr_grid_db: default_snr_grid(),
            trials: 1000,
            master_seed: 1,
            outputs: "results/".into(),
            threads: 0,
            mle_input: MleInput::default(),
            mle: MleOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.snr_grid_db.is_empty() {
            return Err(invalid("SNR grid is empty"));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(invalid("SNR grid values must be finite"));
        }
        if self.system.num_blocks < 3 {
            return Err(invalid("sweeps need at least 3 retained blocks"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub mse_correlator: f64,
    pub mse_gamle: f64,
    pub emcb: f64,
    pub acrb: f64,
    pub acrb_oneway: f64,
    pub bias_correlator: f64,
    pub trials_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub preamble_mode: PreambleMode,
    /// True `phi21`, identical for every trial.
    pub phi21: f64,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "snr_db,mse_cor,mse_mle,emcb,acrb,acrb_1way,bias_cor,excluded";

/// Scientific notation with 9 significant digits; `inf` and `nan` spelled out.
pub fn format_sci(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.8e}")
    }
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let cols = [r.snr_db, r.mse_correlator, r.mse_gamle, r.emcb, r.acrb, r.acrb_oneway, r.bias_correlator];
            let joined: Vec<String> = cols.iter().map(|&v| format_sci(v)).collect();
            writeln!(out, "{},{}", joined.join(","), r.trials_excluded).unwrap();
        }
        out
    }
}

/// Errors that remove a trial from the averages instead of aborting.
fn excludable(e: &Error) -> bool {
    matches!(e, Error::DegenerateFim(_) | Error::UndefinedAngle | Error::NotPositiveDefinite(_))
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    err_cor: f64,
    err_mle: f64,
    gcrb: f64,
    inv_power: f64,
    k: f64,
}

pub(crate) fn trial_stream(snr_index: usize, trial: usize) -> u64 {
    ((snr_index as u64) << 32) | trial as u64
}

fn run_trial(
    config: &ExperimentConfig,
    system: &SystemConfig,
    brp1: Option<&BrpSpec>,
    brp2: &BrpSpec,
    phi21: f64,
    stream: u64,
) -> Result<TrialOutcome> {
    let mut rng = stream_rng(config.master_seed, stream);
    let ch = sample_channel_with(system, &mut rng)?;
    let model = build_block_model(system, &ch, brp1, brp2)?;
    let noise = Arc::new(NoiseFactor::new(&model.r)?);
    let k = lower_triangular_inverse(noise.lower()).norm_squared() / model.num_samples() as f64;
    let inv_power = 1.0 / model.r21.norm_squared();
    let r1 = simulate_exchange(system, &ch, brp1, brp2, Some(&mut rng))?;

    let cor = if model.self_interference {
        let filter = build_preserving_filter(model.num_blocks, model.block_len, model.phi11)?;
        correlator_estimate(&filter.adjoint_mul(&r1), model.num_blocks, model.block_len)?
    } else {
        correlate_blocks(&r1, model.block_len)?
    };
    let input = if model.self_interference { config.mle_input } else { MleInput::Raw };
    let knowledge = MleKnowledge::with_noise(&model, input, &noise)?;
    let mle = gamle_estimate(&knowledge, &r1, &config.mle)?;
    let bound = gcrb(&CrbInputs::with_noise(model, noise)?)?;
    Ok(TrialOutcome {
        err_cor: principal_angle(cor.phi_hat - phi21),
        err_mle: principal_angle(mle.phi_hat - phi21),
        gcrb: bound,
        inv_power,
        k,
    })
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Monte Carlo MSE of both estimators and the matching bounds at each SNR.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let (brp1, brp2) = preamble_pair(config.preamble_mode, &config.system)?;
    let phi21 = config.system.phi21(brp2.theta());
    let m = config.system.num_blocks;
    let rows = with_pool(config.threads, || {
        config
            .snr_grid_db
            .iter()
            .enumerate()
            .map(|(si, &snr)| {
                let system = SystemConfig { snr_db: snr, ..config.system.clone() };
                let outcomes: Vec<Result<TrialOutcome>> = (0..config.trials)
                    .into_par_iter()
                    .map(|t| run_trial(config, &system, brp1.as_ref(), &brp2, phi21, trial_stream(si, t)))
                    .collect();
                let mut kept = Vec::with_capacity(outcomes.len());
                let mut excluded = 0;
                for o in outcomes {
                    match o {
                        Ok(v) => kept.push(v),
                        Err(e) if excludable(&e) => excluded += 1,
                        Err(e) => return Err(e),
                    }
                }
                summarise(snr, &kept, excluded, m, brp1.as_ref().map(|b| b.theta()), phi21)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(SweepResult { preamble_mode: config.preamble_mode, phi21, rows })
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        xs.sum::<f64>() / n as f64
    }
}

fn summarise(
    snr: f64,
    kept: &[TrialOutcome],
    excluded: usize,
    num_blocks: usize,
    phi11: Option<f64>,
    phi21: f64,
) -> Result<SweepRow> {
    let n = kept.len();
    let k_bar = mean(kept.iter().map(|o| o.k), n);
    let mean_inv_power = mean(kept.iter().map(|o| o.inv_power), n);
    let (acrb_two, acrb_one) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        // The closed forms are linear in 1 / |r21|^2.
        let one = acrb_oneway(1.0, num_blocks, k_bar)? * mean_inv_power;
        let two = match phi11 {
            Some(p11) => match acrb(phi21, p11, 1.0, num_blocks, k_bar) {
                Ok(v) => v * mean_inv_power,
                Err(Error::InvalidRegime(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            },
            None => one,
        };
        (two, one)
    };
    Ok(SweepRow {
        snr_db: snr,
        mse_correlator: mean(kept.iter().map(|o| o.err_cor * o.err_cor), n),
        mse_gamle: mean(kept.iter().map(|o| o.err_mle * o.err_mle), n),
        emcb: mean(kept.iter().map(|o| o.gcrb), n),
        acrb: acrb_two,
        acrb_oneway: acrb_one,
        bias_correlator: mean(kept.iter().map(|o| o.err_cor), n),
        trials_excluded: excluded,
    })
}

/// EMCB of the three preamble modes evaluated on shared channels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComparisonRow {
    pub snr_db: f64,
    pub emcb_periodic: f64,
    pub emcb_optimized: f64,
    pub emcb_oneway: f64,
    pub excluded: usize,
}

/// Average the genie-aided bound of every mode over the same channel draws.
/// Trials where any mode degenerates are excluded from all three.
pub fn run_bound_comparison(
    system: &SystemConfig,
    snr_grid_db: &[f64],
    trials: usize,
    master_seed: u64,
    threads: usize,
) -> Result<Vec<BoundComparisonRow>> {
    system.validate()?;
    if trials == 0 || snr_grid_db.is_empty() {
        return Err(invalid("bound comparison needs trials and SNR points"));
    }
    let modes = [PreambleMode::Periodic, PreambleMode::OptimizedBrp, PreambleMode::OneWay];
    let pairs = modes.iter().map(|&m| preamble_pair(m, system)).collect::<Result<Vec<_>>>()?;
    with_pool(threads, || {
        snr_grid_db
            .iter()
            .enumerate()
            .map(|(si, &snr)| {
                let sys = SystemConfig { snr_db: snr, ..system.clone() };
                let per_trial: Vec<Result<Option<[f64; 3]>>> = (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = stream_rng(master_seed, trial_stream(si, t));
                        let ch = sample_channel_with(&sys, &mut rng)?;
                        let mut out = [0.0; 3];
                        let mut noise = None;
                        for (slot, (b1, b2)) in out.iter_mut().zip(&pairs) {
                            let model = build_block_model(&sys, &ch, b1.as_ref(), b2)?;
                            let factor = match &noise {
                                Some(f) => Arc::clone(f),
                                None => {
                                    let f = Arc::new(NoiseFactor::new(&model.r)?);
                                    noise = Some(Arc::clone(&f));
                                    f
                                }
                            };
                            match gcrb(&CrbInputs::with_noise(model, factor)?) {
                                Ok(v) => *slot = v,
                                Err(e) if excludable(&e) => return Ok(None),
                                Err(e) => return Err(e),
                            }
                        }
                        Ok(Some(out))
                    })
                    .collect();
                let mut sums = [0.0; 3];
                let (mut used, mut excluded) = (0usize, 0usize);
                for r in per_trial {
                    match r? {
                        Some(v) => {
                            for (s, x) in sums.iter_mut().zip(v) {
                                *s += x;
                            }
                            used += 1;
                        }
                        None => excluded += 1,
                    }
                }
                let avg = |s: f64| if used == 0 { f64::NAN } else { s / used as f64 };
                Ok(BoundComparisonRow {
                    snr_db: snr,
                    emcb_periodic: avg(sums[0]),
                    emcb_optimized: avg(sums[1]),
                    emcb_oneway: avg(sums[2]),
                    excluded,
                })
            })
            .collect()
    })?
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegradationRow {
    pub m: usize,
    pub x_rad: f64,
    pub lambda: f64,
}

/// `lambda(x)` on `grid_points` equally spaced points of `[0, 2pi]`.
pub fn run_degradation_table(m_list: &[usize], grid_points: usize) -> Result<Vec<DegradationRow>> {
    if grid_points < 2 {
        return Err(invalid("degradation grid needs at least 2 points"));
    }
    let mut rows = Vec::with_capacity(m_list.len() * grid_points);
    for &m in m_list {
        for i in 0..grid_points {
            let x = std::f64::consts::TAU * i as f64 / (grid_points - 1) as f64;
            rows.push(DegradationRow { m, x_rad: x, lambda: degradation(x, m)? });
        }
    }
    Ok(rows)
}

pub const DEGRADATION_CSV_HEADER: &str = "M,x_rad,lambda";

pub fn degradation_csv(rows: &[DegradationRow]) -> String {
    let mut out = String::from(DEGRADATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{}", r.m, format_sci(r.x_rad), format_sci(r.lambda)).unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeuristicRow {
    pub m: usize,
    pub delta: f64,
    pub lambda: f64,
}

/// Degradation at the heuristic angle for each even `M`.
pub fn run_heuristic_angle_table(m_even_list: &[usize]) -> Result<Vec<HeuristicRow>> {
    m_even_list
        .iter()
        .map(|&m| {
            let delta = heuristic_delta(m)?;
            Ok(HeuristicRow { m, delta, lambda: degradation(delta, m)? })
        })
        .collect()
}

pub const HEURISTIC_CSV_HEADER: &str = "M,delta_rad,lambda";

pub fn heuristic_csv(rows: &[HeuristicRow]) -> String {
    let mut out = String::from(HEURISTIC_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{}", r.m, format_sci(r.delta), format_sci(r.lambda)).unwrap();
    }
    out
}

/// Near-diagonality summary of `Gamma = E[R^{-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaDiagnostic {
    pub k: f64,
    pub k_std_error: f64,
    pub leakage: f64,
    pub spread: f64,
    pub samples: usize,
    /// Row indices shown in `row_profiles`.
    pub rows: Vec<usize>,
    /// `|Gamma[i][j]|` for each selected row.
    pub row_profiles: Vec<Vec<f64>>,
}

pub fn run_gamma_diagnostic(config: &SystemConfig, samples: usize, seed: u64) -> Result<GammaDiagnostic> {
    let est = estimate_gamma(config, samples, seed)?;
    let n = est.gamma.nrows();
    let mut rows = vec![0, n / 4, n / 2, n - 1];
    rows.dedup();
    let row_profiles = rows.iter().map(|&i| (0..n).map(|j| est.gamma[(i, j)].norm()).collect()).collect();
    Ok(GammaDiagnostic {
        k: est.k,
        k_std_error: est.k_std_error,
        leakage: est.leakage,
        spread: est.spread,
        samples,
        rows,
        row_profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small(mode: PreambleMode) -> ExperimentConfig {
        ExperimentConfig {
            system: SystemConfig { block_len: 4, num_taps: 2, ..SystemConfig::default() },
            preamble_mode: mode,
            snr_grid_db: vec![5.0, 25.0],
            trials: 20,
            master_seed: 42,
            threads: 1,
            mle: MleOptions { grid_points: 128, ..MleOptions::default() },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn preamble_modes() {
        let cfg = SystemConfig::default();
        let (b1, b2) = preamble_pair(PreambleMode::Periodic, &cfg).unwrap();
        assert_eq!(b1.unwrap().theta(), 0.0);
        assert_eq!(b2.theta(), 0.0);
        let (b1, b2) = preamble_pair(PreambleMode::OptimizedBrp, &cfg).unwrap();
        assert_eq!(b1.unwrap().theta(), 0.0);
        assert_eq!(b2.theta(), PI);
        let (b1, _) = preamble_pair(PreambleMode::OneWay, &cfg).unwrap();
        assert!(b1.is_none());
    }

    #[test]
    fn sweep_rows_are_sane() {
        for mode in [PreambleMode::OptimizedBrp, PreambleMode::Periodic, PreambleMode::OneWay] {
            let res = run_sweep(&small(mode)).unwrap();
            assert_eq!(res.rows.len(), 2);
            for r in &res.rows {
                assert!(r.mse_correlator >= 0.0 && r.mse_correlator <= PI * PI);
                assert!(r.mse_gamle >= 0.0 && r.mse_gamle <= PI * PI);
                assert!(r.emcb > 0.0);
                assert!(r.acrb >= r.acrb_oneway);
                assert_eq!(r.trials_excluded, 0);
            }
            assert!(res.rows[1].emcb < res.rows[0].emcb);
        }
    }

    #[test]
    fn single_trial_is_reproducible() {
        let cfg = ExperimentConfig { trials: 1, snr_grid_db: vec![60.0], ..small(PreambleMode::OptimizedBrp) };
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.rows[0].mse_gamle < 1e-6);
    }

    #[test]
    fn csv_layout() {
        let res = SweepResult {
            preamble_mode: PreambleMode::Periodic,
            phi21: 0.0,
            rows: vec![SweepRow {
                snr_db: 10.0,
                mse_correlator: 0.000123456789,
                mse_gamle: 1.0,
                emcb: f64::INFINITY,
                acrb: 2.5,
                acrb_oneway: 2.5,
                bias_correlator: -0.5,
                trials_excluded: 3,
            }],
        };
        let csv = res.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "1.00000000e1,1.23456789e-4,1.00000000e0,inf,2.50000000e0,2.50000000e0,-5.00000000e-1,3"
        );
    }

    #[test]
    fn degradation_table_examples() {
        let rows = run_degradation_table(&[3, 4], 361).unwrap();
        assert_eq!(rows.len(), 722);
        let at_pi = rows.iter().find(|r| r.m == 3 && (r.x_rad - PI).abs() < 1e-12).unwrap();
        assert!(at_pi.lambda < 1e-20);
        for m in [3, 4] {
            let sub: Vec<_> = rows.iter().filter(|r| r.m == m).collect();
            for i in 0..sub.len() {
                let mirror = sub[sub.len() - 1 - i];
                assert!((sub[i].lambda - mirror.lambda).abs() < 1e-9);
            }
        }
        let m4: Vec<_> = rows.iter().filter(|r| r.m == 4).collect();
        let best = m4.iter().min_by(|a, b| a.lambda.total_cmp(&b.lambda)).unwrap();
        let step = std::f64::consts::TAU / 360.0;
        let target = (-2.0f64 / 3.0).acos();
        assert!((best.x_rad - target).abs() <= step || (best.x_rad - (std::f64::consts::TAU - target)).abs() <= step);
        assert!(degradation_csv(&rows).starts_with("M,x_rad,lambda\n3,"));
    }

    #[test]
    fn heuristic_table_decreases() {
        let rows = run_heuristic_angle_table(&[4, 6, 8, 10, 12]).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].lambda < w[0].lambda);
        }
        for r in &rows {
            assert!(r.lambda < degradation(PI, r.m).unwrap());
        }
        assert!(run_heuristic_angle_table(&[5]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { snr_grid_db: vec![], ..ExperimentConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
