//! Multipath channels, the two-phase amplify-and-forward exchange and the
//! equivalent block model observed by source S1.
//!
//! Phase one: both sources transmit to the relay,
//! `r0[n] = e^{-j2pi f0 n} [ (x1 e^{j2pi f1 .}) * h10 + (x2 e^{j2pi f2 .}) * h20 ][n] + v0[n]`.
//! Phase two: the relay amplifies by `alpha` and forwards to S1,
//! `r1[n] = e^{-j2pi f1 n} [ (alpha r0 e^{j2pi f0 .}) * h01 ][n] + v1[n]`.
//!
//! After discarding the first block, the `N = M L` retained samples are
//! `r1 = G21 r21 + G11 r11 + u1`, where `G_i1` stacks `rho_i1^{m+1} I_L` and
//! `u1 ~ CN(0, R)` with `R = K K^H + I`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{CMat, CVec};
use crate::preamble::{BasisBlock, BrpSpec};

/// Random source used by every simulation routine.
pub type SimRng = ChaCha8Rng;

/// Physical parameters of one link budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Basis block length `L`.
    pub block_len: usize,
    /// Retained blocks `M`; the preamble carries `M + 1`.
    pub num_blocks: usize,
    /// FIR length of each physical link, at most `L`.
    pub num_taps: usize,
    /// Decay constant of the exponential power delay profile, in samples.
    pub tau_rms: f64,
    /// Carrier offsets in cycles per sample.
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub snr_db: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { block_len: 16, num_blocks: 5, num_taps: 8, tau_rms: 1.0, f0: 0.0, f1: 0.001, f2: -0.002, snr_db: 10.0 }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_len == 0 {
            return Err(invalid("block_len must be at least 1"));
        }
        if self.num_blocks < 2 {
            return Err(invalid(format!("num_blocks must be at least 2, got {}", self.num_blocks)));
        }
        if self.num_taps == 0 || self.num_taps > self.block_len {
            return Err(invalid(format!("num_taps must lie in 1..={}, got {}", self.block_len, self.num_taps)));
        }
        if !(self.tau_rms.is_finite() && self.tau_rms > 0.0) {
            return Err(invalid("tau_rms must be positive and finite"));
        }
        for (name, v) in [("f0", self.f0), ("f1", self.f1), ("f2", self.f2), ("snr_db", self.snr_db)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Retained sample count `N = M L`.
    pub fn num_samples(&self) -> usize {
        self.num_blocks * self.block_len
    }

    /// Per-source transmit power `P`, noise variance being one.
    pub fn power(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Relay gain that makes the expected relay output power `2P`.
    ///
    /// Each unit-power channel delivers `P` on average, so the relay input
    /// has power `2P + 1`.
    pub fn relay_gain(&self) -> f64 {
        let p = self.power();
        (2.0 * p / (2.0 * p + 1.0)).sqrt()
    }

    /// Normalised tap powers `k e^{-n / tau_rms}`.
    pub fn tap_profile(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.num_taps).map(|n| (-(n as f64) / self.tau_rms).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    /// `phi21 = 2pi (f2 - f1) L + theta2`.
    pub fn phi21(&self, theta2: f64) -> f64 {
        TAU * (self.f2 - self.f1) * self.block_len as f64 + theta2
    }
}

/// Taps of the three physical links plus the relay gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h10: Vec<Complex64>,
    pub h20: Vec<Complex64>,
    pub h01: Vec<Complex64>,
    pub alpha: f64,
}

/// One draw from `CN(0, var)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn complex_gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, var: f64) -> Vec<Complex64> {
    (0..len).map(|_| complex_gaussian(rng, var)).collect()
}

pub fn sample_channel(config: &SystemConfig, seed: u64) -> Result<ChannelRealization> {
    sample_channel_with(config, &mut SimRng::seed_from_u64(seed))
}

/// Independent Rayleigh taps under the exponential profile, drawn in the
/// order `h10, h20, h01`.
pub fn sample_channel_with(config: &SystemConfig, rng: &mut SimRng) -> Result<ChannelRealization> {
    config.validate()?;
    let profile = config.tap_profile();
    let draw = |rng: &mut SimRng| profile.iter().map(|&p| complex_gaussian(rng, p)).collect::<Vec<_>>();
    let h10 = draw(rng);
    let h20 = draw(rng);
    let h01 = draw(rng);
    Ok(ChannelRealization { h10, h20, h01, alpha: config.relay_gain() })
}

fn tone(f: f64, n: usize) -> Complex64 {
    Complex64::from_polar(1.0, TAU * f * n as f64)
}

/// Causal linear convolution truncated to the input length.
fn convolve_truncated(x: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
    (0..x.len()).map(|n| h.iter().enumerate().take(n + 1).map(|(k, &hk)| hk * x[n - k]).sum()).collect()
}

/// Full linear convolution.
pub fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn add_noise(signal: &mut [Complex64], rng: Option<&mut SimRng>) {
    if let Some(rng) = rng {
        for s in signal.iter_mut() {
            *s += complex_gaussian(rng, 1.0);
        }
    }
}

/// Relay input for phase one. Pass `None` for a noiseless run.
pub fn simulate_phase1(
    config: &SystemConfig,
    channels: &ChannelRealization,
    x1: &[Complex64],
    x2: &[Complex64],
    rng: Option<&mut SimRng>,
) -> Result<Vec<Complex64>> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch(format!("preambles have lengths {} and {}", x1.len(), x2.len())));
    }
    let up1: Vec<_> = x1.iter().enumerate().map(|(n, &x)| x * tone(config.f1, n)).collect();
    let up2: Vec<_> = x2.iter().enumerate().map(|(n, &x)| x * tone(config.f2, n)).collect();
    let y1 = convolve_truncated(&up1, &channels.h10);
    let y2 = convolve_truncated(&up2, &channels.h20);
    let mut r0: Vec<_> = (0..x1.len()).map(|n| (y1[n] + y2[n]) * tone(-config.f0, n)).collect();
    add_noise(&mut r0, rng);
    Ok(r0)
}

/// Signal received at S1 in phase two.
pub fn simulate_phase2(
    config: &SystemConfig,
    channels: &ChannelRealization,
    r0: &[Complex64],
    rng: Option<&mut SimRng>,
) -> Vec<Complex64> {
    let up: Vec<_> = r0.iter().enumerate().map(|(n, &r)| r * channels.alpha * tone(config.f0, n)).collect();
    let y = convolve_truncated(&up, &channels.h01);
    let mut r1: Vec<_> = y.iter().enumerate().map(|(n, &v)| v * tone(-config.f1, n)).collect();
    add_noise(&mut r1, rng);
    r1
}

/// `theta`-twisted circulant: `Xi[l][p] = b[l - p]` for `p <= l`, otherwise
/// `b[L + l - p] e^{-j theta}`.
pub fn twisted_circulant(b: &BasisBlock, theta: f64) -> CMat {
    let l = b.len();
    let s = b.samples();
    let twist = Complex64::from_polar(1.0, -theta);
    CMat::from_fn(l, l, |row, col| if col <= row { s[row - col] } else { s[l + row - col] * twist })
}

/// Equivalent block model seen by S1 after the guard block is dropped.
#[derive(Debug, Clone)]
pub struct BlockModel {
    pub num_blocks: usize,
    pub block_len: usize,
    pub phi11: f64,
    pub phi21: f64,
    pub g11: CMat,
    pub g21: CMat,
    /// Self-interference nuisance; all zeros when S1 is silent.
    pub r11: CVec,
    pub r21: CVec,
    /// Taps `g_k` of the forwarded relay noise, `K[i][L + i - k - 1] = g_k`.
    pub noise_taps: Vec<Complex64>,
    /// `R = K K^H + I`.
    pub r: CMat,
    /// False for the one-way model, where `G11` and `r11` carry no information.
    pub self_interference: bool,
}

fn block_steering(num_blocks: usize, block_len: usize, phi: f64) -> CMat {
    let mut g = CMat::zeros(num_blocks * block_len, block_len);
    for m in 0..num_blocks {
        let rho = Complex64::from_polar(1.0, (m + 1) as f64 * phi);
        for l in 0..block_len {
            g[(m * block_len + l, l)] = rho;
        }
    }
    g
}

/// Taps `g_k = alpha h01[k] e^{-j2pi f0 k}` of the forwarded relay noise.
pub fn relay_noise_taps(config: &SystemConfig, channels: &ChannelRealization) -> Vec<Complex64> {
    channels.h01.iter().enumerate().map(|(k, &h)| h * channels.alpha * tone(-config.f0, k)).collect()
}

/// Toeplitz `K K^H + I` from the autocorrelation of the noise taps.
pub fn noise_covariance(taps: &[Complex64], n: usize) -> CMat {
    let corr: Vec<Complex64> =
        (0..taps.len()).map(|d| (0..taps.len() - d).map(|k| taps[k] * taps[k + d].conj()).sum()).collect();
    CMat::from_fn(n, n, |i, j| {
        let base = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        let lag = |d: usize| corr.get(d).copied().unwrap_or_default();
        if j >= i {
            base + lag(j - i)
        } else {
            base + lag(i - j).conj()
        }
    })
}

impl BlockModel {
    /// Assemble a model directly from its parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        num_blocks: usize,
        block_len: usize,
        phi11: f64,
        phi21: f64,
        r11: CVec,
        r21: CVec,
        noise_taps: Vec<Complex64>,
        self_interference: bool,
    ) -> Result<Self> {
        if block_len == 0 || num_blocks < 2 {
            return Err(invalid(format!("need L >= 1 and M >= 2, got L = {block_len}, M = {num_blocks}")));
        }
        if r11.len() != block_len || r21.len() != block_len {
            return Err(Error::DimensionMismatch(format!(
                "nuisance vectors must have length {block_len}, got {} and {}",
                r11.len(),
                r21.len()
            )));
        }
        if noise_taps.len() > block_len {
            return Err(invalid(format!("{} noise taps exceed the block length {block_len}", noise_taps.len())));
        }
        let n = num_blocks * block_len;
        Ok(Self {
            num_blocks,
            block_len,
            phi11,
            phi21,
            g11: block_steering(num_blocks, block_len, phi11),
            g21: block_steering(num_blocks, block_len, phi21),
            r11,
            r21,
            r: noise_covariance(&noise_taps, n),
            noise_taps,
            self_interference,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.num_blocks * self.block_len
    }

    pub fn rho11(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.phi11)
    }

    pub fn rho21(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.phi21)
    }

    /// Dense `N x (N + L - 1)` convolution matrix `K`.
    pub fn conv_matrix(&self) -> CMat {
        let n = self.num_samples();
        let l = self.block_len;
        let mut k = CMat::zeros(n, n + l - 1);
        for i in 0..n {
            for (tap, &g) in self.noise_taps.iter().enumerate() {
                k[(i, l + i - tap - 1)] = g;
            }
        }
        k
    }

    /// `G21 r21 + G11 r11`.
    pub fn noiseless_signal(&self) -> CVec {
        let mut s = &self.g21 * &self.r21;
        if self.self_interference {
            s += &self.g11 * &self.r11;
        }
        s
    }

    /// One draw of `u1 = K v0 + v1`.
    pub fn sample_noise(&self, rng: &mut SimRng) -> CVec {
        let n = self.num_samples();
        let l = self.block_len;
        let v0 = complex_gaussian_vec(rng, n + l - 1, 1.0);
        let v1 = complex_gaussian_vec(rng, n, 1.0);
        CVec::from_fn(n, |i, _| {
            let relayed: Complex64 = self.noise_taps.iter().enumerate().map(|(tap, &g)| g * v0[l + i - tap - 1]).sum();
            relayed + v1[i]
        })
    }
}

/// Build the block model for S1.
///
/// `brp1 = None` models a silent S1, i.e. one-way relaying from S2.
pub fn build_block_model(
    config: &SystemConfig,
    channels: &ChannelRealization,
    brp1: Option<&BrpSpec>,
    brp2: &BrpSpec,
) -> Result<BlockModel> {
    config.validate()?;
    let m = brp2.num_blocks();
    let l = brp2.block_len();
    if let Some(b1) = brp1 {
        if b1.num_blocks() != m || b1.block_len() != l {
            return Err(Error::DimensionMismatch(format!(
                "preambles disagree: M = {} vs {m}, L = {} vs {l}",
                b1.num_blocks(),
                b1.block_len()
            )));
        }
    }
    if m != config.num_blocks || l != config.block_len {
        return Err(Error::DimensionMismatch(format!(
            "preamble has M = {m}, L = {l} but config has M = {}, L = {}",
            config.num_blocks, config.block_len
        )));
    }
    let equiv_len = channels.h01.len() + channels.h10.len().max(channels.h20.len()) - 1;
    if equiv_len > l {
        return Err(invalid(format!("two-hop channel spans {equiv_len} taps, more than the block length {l}")));
    }

    let amp = config.power().sqrt();
    let alpha = channels.alpha;
    let equivalent = |h: &[Complex64], f: f64| -> CVec {
        let c = convolve(&channels.h01, h);
        CVec::from_fn(l, |p, _| c.get(p).map_or(Complex64::default(), |&v| v * alpha * tone(-f, p)))
    };
    let h21 = equivalent(&channels.h20, config.f2);
    let xi2 = twisted_circulant(brp2.basis(), brp2.theta());
    let df = config.f2 - config.f1;
    let r21 = (&xi2 * h21).component_mul(&CVec::from_fn(l, |p, _| tone(df, p) * amp));

    let (r11, phi11) = match brp1 {
        Some(b1) => {
            let h11 = equivalent(&channels.h10, config.f1);
            (twisted_circulant(b1.basis(), b1.theta()) * h11 * Complex64::new(amp, 0.0), b1.theta())
        }
        None => (CVec::zeros(l), 0.0),
    };
    let noise_taps = relay_noise_taps(config, channels);
    BlockModel::from_parts(m, l, phi11, config.phi21(brp2.theta()), r11, r21, noise_taps, brp1.is_some())
}

/// Received S1 samples after the guard block, from the time-domain exchange.
pub fn simulate_exchange(
    config: &SystemConfig,
    channels: &ChannelRealization,
    brp1: Option<&BrpSpec>,
    brp2: &BrpSpec,
    mut rng: Option<&mut SimRng>,
) -> Result<CVec> {
    let amp = Complex64::new(config.power().sqrt(), 0.0);
    let x2: Vec<_> = brp2.assemble().into_iter().map(|x| x * amp).collect();
    let x1 = match brp1 {
        Some(b) => b.assemble().into_iter().map(|x| x * amp).collect(),
        None => vec![Complex64::default(); x2.len()],
    };
    let r0 = simulate_phase1(config, channels, &x1, &x2, rng.as_deref_mut())?;
    let r1 = simulate_phase2(config, channels, &r0, rng);
    Ok(CVec::from_column_slice(&r1[brp2.block_len()..]))
}
