//! Cramer-Rao bounds on the CFO-dependent phase `phi21`.
//!
//! - [`gcrb`]: genie-aided bound with `h01` (hence `R`) known and the
//!   equivalent channels `r11`, `r21` as complex nuisance parameters.
//! - [`brute_force_crb`]: the same bound from the full real-valued Fisher
//!   information, used as an oracle.
//! - [`mcrb_numeric`]: the modified bound with `R^{-1}` replaced by its
//!   channel average `Gamma`.
//! - [`acrb`], [`acrb_oneway`]: closed forms when `Gamma = k I`.
//! - [`emcb`]: channel average of the genie-aided bound.

use std::sync::Arc;

use nalgebra::linalg::QR;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    build_block_model, noise_covariance, relay_noise_taps, sample_channel_with, BlockModel, ChannelRealization, SimRng,
    SystemConfig,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, real_cholesky, realify, realify_vec, CCholesky, CMat, CVec, RMat};
use crate::preamble::{degradation, principal_angle, BrpSpec};

pub use crate::channel::twisted_circulant as build_rcso;

/// Relative threshold below which an information term counts as zero.
const DEGENERACY_TOL: f64 = 1e-12;

/// Cholesky factor of a noise covariance, shared between bounds that use the
/// same relay channel.
#[derive(Debug, Clone)]
pub struct NoiseFactor {
    chol: CCholesky,
    lower: CMat,
}

impl NoiseFactor {
    pub fn new(r: &CMat) -> Result<Self> {
        let chol = cholesky(r.clone(), "noise covariance R")?;
        let lower = chol.l();
        Ok(Self { chol, lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `L^{-1} x` where `R = L L^H`.
    pub fn whiten(&self, x: &CMat) -> CMat {
        let mut out = x.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut out);
        out
    }

    pub fn whiten_vec(&self, x: &CVec) -> CVec {
        let mut out = x.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut out);
        out
    }

    /// `R^{-1} x`.
    pub fn solve(&self, x: &CMat) -> CMat {
        self.chol.solve(x)
    }

    pub fn inverse(&self) -> CMat {
        self.chol.inverse()
    }

    pub fn lower(&self) -> &CMat {
        &self.lower
    }
}

/// A block model together with the block-index weighting
/// `T = diag(0, 1, ..., M - 1) (x) I_L`.
#[derive(Debug, Clone)]
pub struct CrbInputs {
    pub model: BlockModel,
    noise: Arc<NoiseFactor>,
}

impl CrbInputs {
    pub fn new(model: BlockModel) -> Result<Self> {
        let noise = Arc::new(NoiseFactor::new(&model.r)?);
        Ok(Self { model, noise })
    }

    /// Reuse a factorisation of the same `R`.
    pub fn with_noise(model: BlockModel, noise: Arc<NoiseFactor>) -> Result<Self> {
        if noise.dim() != model.num_samples() {
            return Err(Error::DimensionMismatch(format!(
                "noise factor has size {}, model has {} samples",
                noise.dim(),
                model.num_samples()
            )));
        }
        Ok(Self { model, noise })
    }

    pub fn noise(&self) -> &Arc<NoiseFactor> {
        &self.noise
    }

    /// Diagonal of `T`.
    pub fn block_index_weights(&self) -> DVector<f64> {
        let l = self.model.block_len;
        DVector::from_fn(self.model.num_samples(), |i, _| (i / l) as f64)
    }

    /// `s = T G21 r21`.
    pub fn weighted_signal(&self) -> CVec {
        let t = self.block_index_weights();
        let g = &self.model.g21 * &self.model.r21;
        CVec::from_fn(g.len(), |i, _| g[i] * t[i])
    }
}

/// Remove the span of the orthonormal columns `q` from every column of `x`.
fn project_out(q: &CMat, x: &CMat) -> CMat {
    x - q * (q.adjoint() * x)
}

fn orthonormal_basis(x: CMat) -> (CMat, CMat) {
    let qr = QR::new(x);
    (qr.q(), qr.r())
}

fn degenerate(model: &BlockModel) -> Result<f64> {
    if model.num_blocks == 2 {
        Err(Error::DegenerateFim("self-interference and desired signal are inseparable with two blocks".into()))
    } else {
        Ok(f64::INFINITY)
    }
}

/// Genie-aided CRB of `phi21`.
///
/// The bound is `1 / (2 s^H Phi1 s - 2 s^H Psi1 s)`. Here `Phi1` removes the
/// `R^{-1}`-weighted span of `G21`, and `Psi1` removes what `Phi1 G11` still
/// explains. Both are applied as explicit projections in the whitened
/// domain, so the small difference in the denominator is never formed by
/// cancellation.
///
/// Returns `+inf` when self-interference absorbs the desired signal. With two
/// blocks that is structural and reported as [`Error::DegenerateFim`].
pub fn gcrb(inputs: &CrbInputs) -> Result<f64> {
    let model = &inputs.model;
    let noise = &inputs.noise;
    let s = noise.whiten_vec(&inputs.weighted_signal());
    let (q21, _) = orthonormal_basis(noise.whiten(&model.g21));
    let s_hat = project_out(&q21, &CMat::from_column_slice(s.len(), 1, s.as_slice()));
    let num = 2.0 * s_hat.norm_squared();
    if num.is_nan() || num <= 0.0 {
        return Err(Error::DegenerateFim("desired signal carries no phase information".into()));
    }
    if !model.self_interference {
        return Ok(1.0 / num);
    }

    let g11 = noise.whiten(&model.g11);
    let g11_hat = project_out(&q21, &g11);
    let scale = g11.norm_squared();
    if g11_hat.norm_squared() <= DEGENERACY_TOL * scale {
        return degenerate(model);
    }
    let (q11, r11) = orthonormal_basis(g11_hat);
    let max_col = (0..g11.ncols()).map(|j| g11.column(j).norm_squared()).fold(0.0, f64::max);
    if r11.diagonal().iter().any(|d| d.norm_sqr() <= DEGENERACY_TOL * max_col) {
        return degenerate(model);
    }
    let denom = 2.0 * project_out(&q11, &s_hat).norm_squared();
    if denom <= DEGENERACY_TOL * num {
        return degenerate(model);
    }
    Ok(1.0 / denom)
}

/// `Phi1 = R^{-1} - R^{-1} G21 (G21^H R^{-1} G21)^{-1} G21^H R^{-1}`.
pub fn phi1_matrix(inputs: &CrbInputs) -> Result<CMat> {
    let g = &inputs.model.g21;
    let rg = inputs.noise.solve(g);
    let h = cholesky(g.adjoint() * &rg, "G21^H R^-1 G21")?;
    Ok(inputs.noise.inverse() - &rg * h.solve(&rg.adjoint()))
}

/// Mean of the model, `[G11 G21]`, as a function of the nuisance vector, and
/// the phase derivative `j diag(m + 1) G21 r21`.
fn real_jacobian(model: &BlockModel) -> RMat {
    let l = model.block_len;
    let g = &model.g21 * &model.r21;
    let dq = CVec::from_fn(g.len(), |i, _| g[i] * Complex64::new(0.0, (i / l + 1) as f64));
    let q = realify_vec(&dq);
    let a = if model.self_interference {
        let mut both = CMat::zeros(model.num_samples(), 2 * l);
        both.columns_mut(0, l).copy_from(&model.g11);
        both.columns_mut(l, l).copy_from(&model.g21);
        realify(&both)
    } else {
        realify(&model.g21)
    };
    let mut j = RMat::zeros(q.len(), 1 + a.ncols());
    j.column_mut(0).copy_from(&q);
    j.columns_mut(1, a.ncols()).copy_from(&a);
    j
}

fn invert_fim_first(fim: RMat) -> Result<f64> {
    let max_diag = fim.diagonal().max();
    let chol = real_cholesky(fim, "Fisher information")
        .map_err(|_| Error::DegenerateFim("Fisher information is not positive definite".into()))?;
    let min_pivot = chol.l_dirty().diagonal().min();
    if min_pivot * min_pivot <= DEGENERACY_TOL * max_diag {
        return Err(Error::DegenerateFim("Fisher information is numerically singular".into()));
    }
    let mut e = DVector::zeros(chol.l_dirty().nrows());
    e[0] = 1.0;
    Ok(chol.solve(&e)[0])
}

/// CRB from the full real Fisher information over `[phi21, Re r, Im r]`.
///
/// The real noise vector `[Re u; Im u]` has covariance `realify(R) / 2`,
/// inverted independently of the complex routines. The whitened Jacobian is
/// factored by QR so the information matrix is never formed explicitly.
pub fn brute_force_crb(inputs: &CrbInputs) -> Result<f64> {
    let model = &inputs.model;
    let cov = realify(&model.r) * 0.5;
    let cov_chol = real_cholesky(cov, "real noise covariance")?;
    let mut j = real_jacobian(model);
    if j.nrows() < j.ncols() {
        return Err(Error::DegenerateFim("more parameters than real observations".into()));
    }
    cov_chol.l_dirty().solve_lower_triangular_mut(&mut j);
    let max_col = j.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
    let r = j.qr().r();
    if r.diagonal().iter().any(|d| d * d <= DEGENERACY_TOL * max_col) {
        return Err(Error::DegenerateFim("Fisher information is numerically singular".into()));
    }
    let mut e = DVector::zeros(r.ncols());
    e[0] = 1.0;
    if !r.tr_solve_upper_triangular_mut(&mut e) {
        return Err(Error::DegenerateFim("Fisher information is numerically singular".into()));
    }
    Ok(e.norm_squared())
}

/// Modified CRB with `R^{-1}` replaced by `gamma`: the Fisher information is
/// `2 J^T realify(gamma) J`.
pub fn mcrb_numeric(inputs: &CrbInputs, gamma: &CMat) -> Result<f64> {
    let n = inputs.model.num_samples();
    if gamma.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("gamma must be {n} x {n}")));
    }
    cholesky(gamma.clone(), "gamma")?;
    let j = real_jacobian(&inputs.model);
    let fim = j.transpose() * realify(gamma) * &j * 2.0;
    invert_fim_first(fim)
}

/// Approximate CRB with `Gamma = k I`:
/// `6 / (k M [M^2 - 1 - 3 lambda(phi21 - phi11)] |r21|^2)`.
pub fn acrb(phi21: f64, phi11: f64, r21_power: f64, num_blocks: usize, k: f64) -> Result<f64> {
    check_acrb_args(r21_power, num_blocks, k)?;
    let m = num_blocks as f64;
    let lambda = degradation(phi21 - phi11, num_blocks)?;
    let bracket = m * m - 1.0 - 3.0 * lambda;
    if bracket <= DEGENERACY_TOL * (m * m) {
        return Err(Error::InvalidRegime(format!(
            "degradation {lambda:.6} leaves a nonpositive denominator for M = {num_blocks}"
        )));
    }
    Ok(6.0 / (k * m * bracket * r21_power))
}

/// Approximate CRB without self-interference: `6 / (k M (M^2 - 1) |r21|^2)`.
pub fn acrb_oneway(r21_power: f64, num_blocks: usize, k: f64) -> Result<f64> {
    check_acrb_args(r21_power, num_blocks, k)?;
    let m = num_blocks as f64;
    Ok(6.0 / (k * m * (m * m - 1.0) * r21_power))
}

fn check_acrb_args(r21_power: f64, num_blocks: usize, k: f64) -> Result<()> {
    if num_blocks < 3 {
        return Err(invalid(format!("approximate bound needs M >= 3, got {num_blocks}")));
    }
    if !(r21_power > 0.0 && r21_power.is_finite()) {
        return Err(invalid("r21 power must be positive and finite"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid("k must be positive and finite"));
    }
    Ok(())
}

/// Monte Carlo estimate of `Gamma = E[R^{-1}]` and its scaled-identity fit.
#[derive(Debug, Clone)]
pub struct GammaEstimate {
    pub gamma: CMat,
    /// Mean diagonal value.
    pub k: f64,
    /// Standard error of `k` across draws.
    pub k_std_error: f64,
    /// Largest off-diagonal magnitude over `k`.
    pub leakage: f64,
    /// `(max diag - min diag) / k`.
    pub spread: f64,
    pub samples: usize,
}

impl GammaEstimate {
    fn from_sum(sum: CMat, k_sum: f64, k_sq_sum: f64, samples: usize) -> Self {
        let n = samples as f64;
        let gamma = sum / Complex64::new(n, 0.0);
        let diag: Vec<f64> = gamma.diagonal().iter().map(|d| d.re).collect();
        let k = diag.iter().sum::<f64>() / diag.len() as f64;
        let (lo, hi) = diag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let mut off = 0.0f64;
        for j in 0..gamma.ncols() {
            for i in 0..gamma.nrows() {
                if i != j {
                    off = off.max(gamma[(i, j)].norm());
                }
            }
        }
        let mean_k = k_sum / n;
        let var = if samples > 1 { (k_sq_sum / n - mean_k * mean_k).max(0.0) * n / (n - 1.0) } else { 0.0 };
        Self { k, k_std_error: (var / n).sqrt(), leakage: off / k, spread: (hi - lo) / k, samples, gamma }
    }
}

/// Fixed chunking keeps the floating-point summation order independent of
/// the thread count.
const SUM_CHUNK: usize = 64;

/// Sum `f(i)` for `i in 0..count` in a fixed order, chunks in parallel.
fn ordered_sum<F>(count: usize, zero: &CMat, f: F) -> Result<(CMat, f64, f64)>
where
    F: Fn(usize) -> Result<(CMat, f64)> + Sync,
{
    let chunks: Vec<usize> = (0..count.div_ceil(SUM_CHUNK)).collect();
    let partial: Vec<Result<(CMat, f64, f64)>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = zero.clone();
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(count) {
                let (m, k) = f(i)?;
                acc += m;
                s1 += k;
                s2 += k * k;
            }
            Ok((acc, s1, s2))
        })
        .collect();
    let mut acc = zero.clone();
    let (mut s1, mut s2) = (0.0, 0.0);
    for p in partial {
        let (m, a, b) = p?;
        acc += m;
        s1 += a;
        s2 += b;
    }
    Ok((acc, s1, s2))
}

/// Per-draw random stream: `seed` selects the key, `index` the stream.
pub fn stream_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Average `R^{-1}` over random relay channels.
pub fn estimate_gamma(config: &SystemConfig, num_samples: usize, seed: u64) -> Result<GammaEstimate> {
    config.validate()?;
    estimate_gamma_with(config, num_samples, |i| sample_channel_with(config, &mut stream_rng(seed, i as u64)))
}

/// Average `R^{-1}` over channels produced by `draw(i)`.
pub fn estimate_gamma_with<F>(config: &SystemConfig, num_samples: usize, draw: F) -> Result<GammaEstimate>
where
    F: Fn(usize) -> Result<ChannelRealization> + Sync,
{
    if num_samples < 100 {
        return Err(invalid(format!("Gamma estimate needs at least 100 samples, got {num_samples}")));
    }
    let n = config.num_samples();
    let zero = CMat::zeros(n, n);
    let (sum, k1, k2) = ordered_sum(num_samples, &zero, |i| {
        let ch = draw(i)?;
        let r = noise_covariance(&relay_noise_taps(config, &ch), n);
        let inv = NoiseFactor::new(&r)?.inverse();
        let k = inv.trace().re / n as f64;
        Ok((inv, k))
    })?;
    Ok(GammaEstimate::from_sum(sum, k1, k2, num_samples))
}

/// Genie-aided bound for one trial, with exclusion of degenerate trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialBound {
    Value(f64),
    Excluded,
}

/// Channel average of [`gcrb`], with the number of degenerate trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmcbEstimate {
    pub value: f64,
    pub trials: usize,
    pub excluded: usize,
}

/// Average the bound over `num_trials` channels drawn by `draw(i)`. Degenerate
/// trials are counted, not averaged. Summation is in trial order.
pub fn emcb_with<F>(
    config: &SystemConfig,
    brp1: Option<&BrpSpec>,
    brp2: &BrpSpec,
    num_trials: usize,
    draw: F,
) -> Result<EmcbEstimate>
where
    F: Fn(usize) -> Result<ChannelRealization> + Sync,
{
    if num_trials == 0 {
        return Err(invalid("EMCB needs at least one trial"));
    }
    let bounds: Vec<Result<TrialBound>> = (0..num_trials)
        .into_par_iter()
        .map(|i| {
            let ch = draw(i)?;
            let model = build_block_model(config, &ch, brp1, brp2)?;
            match gcrb(&CrbInputs::new(model)?) {
                Ok(v) => Ok(TrialBound::Value(v)),
                Err(Error::DegenerateFim(_)) => Ok(TrialBound::Excluded),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut sum = 0.0;
    let mut used = 0usize;
    for b in bounds {
        if let TrialBound::Value(v) = b? {
            sum += v;
            used += 1;
        }
    }
    let value = if used == 0 { f64::NAN } else { sum / used as f64 };
    Ok(EmcbEstimate { value, trials: num_trials, excluded: num_trials - used })
}

/// Extended Miller-and-Chang bound: the mean of [`gcrb`] over random
/// channels. Any degenerate trial is an error.
pub fn emcb(
    config: &SystemConfig,
    brp1: Option<&BrpSpec>,
    brp2: &BrpSpec,
    num_trials: usize,
    seed: u64,
) -> Result<f64> {
    config.validate()?;
    let est =
        emcb_with(config, brp1, brp2, num_trials, |i| sample_channel_with(config, &mut stream_rng(seed, i as u64)))?;
    if est.excluded > 0 {
        return Err(Error::DegenerateFim(format!("{} of {} trials degenerate", est.excluded, est.trials)));
    }
    Ok(est.value)
}

/// All bounds for one configuration.
#[derive(Debug, Clone, Serialize)]
pub struct CrbReport {
    pub gcrb: f64,
    pub acrb: f64,
    pub acrb_oneway: f64,
    pub mcrb_numeric: Option<f64>,
    pub emcb: Option<f64>,
    pub k_gamma: f64,
}

impl CrbReport {
    /// Bounds for one channel realisation. `gamma` supplies `k` and the
    /// numeric modified bound. Bounds in the diverging regime are `+inf`.
    pub fn evaluate(inputs: &CrbInputs, gamma: &GammaEstimate, emcb: Option<f64>) -> Result<Self> {
        let model = &inputs.model;
        let gcrb = gcrb(inputs)?;
        let power = model.r21.norm_squared();
        let acrb_1 = acrb_oneway(power, model.num_blocks, gamma.k)?;
        let acrb_2 = if model.self_interference {
            match acrb(model.phi21, model.phi11, power, model.num_blocks, gamma.k) {
                Err(Error::InvalidRegime(_)) => f64::INFINITY,
                other => other?,
            }
        } else {
            acrb_1
        };
        let mcrb = match mcrb_numeric(inputs, &gamma.gamma) {
            Err(Error::DegenerateFim(_)) if gcrb.is_infinite() => f64::INFINITY,
            other => other?,
        };
        Ok(Self { gcrb, acrb: acrb_2, acrb_oneway: acrb_1, mcrb_numeric: Some(mcrb), emcb, k_gamma: gamma.k })
    }
}

/// `phi21 - phi11` reduced to `(-pi, pi]`.
pub fn angle_difference(model: &BlockModel) -> f64 {
    principal_angle(model.phi21 - model.phi11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian_vec, sample_channel};
    use crate::preamble::{generate_cazac, optimal_delta};
    use std::f64::consts::PI;

    fn random_model(seed: u64, m: usize, l: usize, self_interference: bool) -> BlockModel {
        use rand::Rng;
        let mut rng = SimRng::seed_from_u64(seed);
        let taps = rng.random_range(1..=l);
        let noise = complex_gaussian_vec(&mut rng, taps, 0.5);
        let r11 = CVec::from_vec(complex_gaussian_vec(&mut rng, l, 1.0));
        let r21 = CVec::from_vec(complex_gaussian_vec(&mut rng, l, 1.0));
        let phi11 = rng.random_range(-PI..PI);
        let phi21 = rng.random_range(-PI..PI);
        BlockModel::from_parts(m, l, phi11, phi21, r11, r21, noise, self_interference).unwrap()
    }

    #[test]
    fn weighting_matrix_is_block_index() {
        let inputs = CrbInputs::new(random_model(1, 3, 2, true)).unwrap();
        assert_eq!(inputs.block_index_weights().as_slice(), &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn gcrb_matches_brute_force() {
        for seed in 0..30 {
            let m = 3 + (seed as usize % 3);
            let l = [1, 2, 4][seed as usize % 3];
            let inputs = CrbInputs::new(random_model(seed, m, l, true)).unwrap();
            let a = gcrb(&inputs).unwrap();
            let b = brute_force_crb(&inputs).unwrap();
            assert!(((a - b) / b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn phi1_annihilates_g21() {
        for seed in 0..10 {
            let inputs = CrbInputs::new(random_model(seed, 4, 2, true)).unwrap();
            let phi = phi1_matrix(&inputs).unwrap();
            assert!((phi * &inputs.model.g21).norm() < 1e-10);
        }
    }

    #[test]
    fn gcrb_scales_inversely_with_r21_power() {
        let model = random_model(3, 4, 2, true);
        let base = gcrb(&CrbInputs::new(model.clone()).unwrap()).unwrap();
        let mut scaled = model;
        scaled.r21 *= Complex64::new(0.0, 3.0);
        let v = gcrb(&CrbInputs::new(scaled).unwrap()).unwrap();
        assert!((v * 9.0 / base - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_blocks_are_degenerate() {
        for seed in 0..5 {
            let inputs = CrbInputs::new(random_model(seed, 2, 2, true)).unwrap();
            assert!(matches!(gcrb(&inputs), Err(Error::DegenerateFim(_))));
            assert!(matches!(brute_force_crb(&inputs), Err(Error::DegenerateFim(_))));
        }
    }

    #[test]
    fn identical_steering_gives_infinite_bound() {
        let mut model = random_model(4, 5, 2, true);
        model = BlockModel::from_parts(5, 2, 0.4, 0.4, model.r11, model.r21, model.noise_taps, true).unwrap();
        assert_eq!(gcrb(&CrbInputs::new(model).unwrap()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn acrb_examples() {
        let v = acrb_oneway(1.0, 48, 1.0).unwrap();
        assert!((v - 6.0 / (48.0 * 2303.0)).abs() < 1e-18);
        assert!((v - 5.4277e-5).abs() < 1e-8);
        assert!((acrb_oneway(2.0, 48, 1.0).unwrap() * 2.0 - v).abs() < 1e-18);
        assert_eq!(acrb(PI, 0.0, 1.0, 5, 1.0).unwrap(), acrb_oneway(1.0, 5, 1.0).unwrap());
        assert!(acrb_oneway(1.0, 2, 1.0).is_err());
    }

    #[test]
    fn acrb_increases_with_degradation() {
        // lambda(x) decreases on (0, pi) for M = 3.
        let mut prev = 0.0;
        for i in (1..40).rev() {
            let x = PI * i as f64 / 40.0;
            let v = acrb(x, 0.0, 2.0, 3, 0.7).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn acrb_invalid_regime() {
        // lambda(0) = (M^2 - 1) / 3 zeroes the bracket.
        assert!(matches!(acrb(0.0, 0.0, 1.0, 3, 1.0), Err(Error::InvalidRegime(_))));
    }

    #[test]
    fn mcrb_with_scaled_identity_matches_acrb() {
        for seed in 0..10 {
            let m = 3 + seed as usize % 4;
            let model = random_model(seed, m, 2, true);
            let k = 0.3 + 0.1 * seed as f64;
            let gamma = CMat::identity(model.num_samples(), model.num_samples()) * Complex64::new(k, 0.0);
            let inputs = CrbInputs::new(model).unwrap();
            let numeric = mcrb_numeric(&inputs, &gamma).unwrap();
            let m_ = &inputs.model;
            let closed = acrb(m_.phi21, m_.phi11, m_.r21.norm_squared(), m, k).unwrap();
            assert!(((numeric - closed) / closed).abs() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn mcrb_with_exact_inverse_is_gcrb() {
        let inputs = CrbInputs::new(random_model(7, 4, 4, true)).unwrap();
        let g = inputs.noise().inverse();
        let a = mcrb_numeric(&inputs, &g).unwrap();
        let b = gcrb(&inputs).unwrap();
        assert!(((a - b) / b).abs() < 1e-8);
    }

    #[test]
    fn gamma_for_unit_relay_is_half_identity() {
        let cfg = SystemConfig { f0: 0.0, ..SystemConfig::default() };
        let unit = ChannelRealization {
            h10: vec![Complex64::new(1.0, 0.0)],
            h20: vec![Complex64::new(1.0, 0.0)],
            h01: vec![Complex64::new(1.0, 0.0)],
            alpha: 1.0,
        };
        let est = estimate_gamma_with(&cfg, 100, |_| Ok(unit.clone())).unwrap();
        assert!((est.k - 0.5).abs() < 1e-14);
        assert!(est.leakage < 1e-14);
        assert!(est.spread < 1e-14);
        assert!((&est.gamma - CMat::identity(80, 80) * Complex64::new(0.5, 0.0)).norm() < 1e-13);
        assert!(estimate_gamma_with(&cfg, 99, |_| Ok(unit.clone())).is_err());
    }

    #[test]
    fn deterministic_channel_emcb_is_gcrb() {
        let cfg = SystemConfig::default();
        let ch = sample_channel(&cfg, 12).unwrap();
        let b = generate_cazac(16).unwrap();
        let brp1 = BrpSpec::new(b.clone(), 0.0, 5).unwrap();
        let brp2 = BrpSpec::new(b, optimal_delta(5).unwrap().delta, 5).unwrap();
        let est = emcb_with(&cfg, Some(&brp1), &brp2, 3, |_| Ok(ch.clone())).unwrap();
        let model = build_block_model(&cfg, &ch, Some(&brp1), &brp2).unwrap();
        let single = gcrb(&CrbInputs::new(model).unwrap()).unwrap();
        assert!((est.value - single).abs() <= 1e-15 * single);
        assert_eq!(est.excluded, 0);
    }

    #[test]
    fn rcso_examples() {
        let b = generate_cazac(8).unwrap();
        let xi = build_rcso(&b, 0.0);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(xi[(i, j)], b.samples()[(8 + i - j) % 8]);
            }
        }
    }

    #[test]
    fn report_orders_bounds_and_flags_divergence() {
        let cfg = SystemConfig::default();
        let gamma = estimate_gamma(&cfg, 200, 3).unwrap();
        let ch = sample_channel(&cfg, 4).unwrap();
        let b = generate_cazac(16).unwrap();
        let brp1 = BrpSpec::new(b.clone(), 0.0, 5).unwrap();
        let brp2 = BrpSpec::new(b.clone(), PI, 5).unwrap();
        let inputs = CrbInputs::new(build_block_model(&cfg, &ch, Some(&brp1), &brp2).unwrap()).unwrap();
        let report = CrbReport::evaluate(&inputs, &gamma, Some(1.0)).unwrap();
        assert!(report.acrb >= report.acrb_oneway);
        assert_eq!(report.gcrb, gcrb(&inputs).unwrap());
        assert_eq!(report.emcb, Some(1.0));

        let same = SystemConfig { f2: cfg.f1, ..cfg.clone() };
        let inputs = CrbInputs::new(build_block_model(&same, &ch, Some(&brp1), &brp1).unwrap()).unwrap();
        let report = CrbReport::evaluate(&inputs, &gamma, None).unwrap();
        assert_eq!(report.gcrb, f64::INFINITY);
        assert_eq!(report.acrb, f64::INFINITY);
        assert_eq!(report.mcrb_numeric, Some(f64::INFINITY));

        let two = SystemConfig { num_blocks: 2, ..cfg };
        let brp = BrpSpec::new(b, PI, 2).unwrap();
        let inputs = CrbInputs::new(build_block_model(&two, &ch, Some(&brp), &brp).unwrap()).unwrap();
        assert!(matches!(CrbReport::evaluate(&inputs, &gamma, None), Err(Error::DegenerateFim(_))));
    }
}
