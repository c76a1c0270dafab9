//! Self-interference removal and CFO estimators.
//!
//! The blockwise filter `Q~^H` maps retained block pairs to
//! `z_k = rho11 r_k - r_{k+1}`. It cancels `G11 r11` exactly while keeping
//! every bit of information about `phi21`. The correlator and the
//! genie-aided MLE both work on its output.

use std::f64::consts::{PI, TAU};

use nalgebra::linalg::SVD;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::BlockModel;
use crate::crb::{gcrb, CrbInputs, NoiseFactor};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, lower_triangular_inverse, CMat, CVec};

/// Linear filter `z = Q^H r` applied to the `N` retained samples.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    q: CMat,
    /// `(M, L, rho11)` when `Q` is the two-tap blockwise filter.
    blockwise: Option<(usize, usize, Complex64)>,
}

/// Two-tap blockwise filter with coefficients `{rho11, -1}`; `m = (M - 1) L`.
pub fn build_preserving_filter(num_blocks: usize, block_len: usize, theta1: f64) -> Result<FilterSpec> {
    if num_blocks < 2 || block_len == 0 {
        return Err(invalid(format!("filter needs M >= 2 and L >= 1, got M = {num_blocks}, L = {block_len}")));
    }
    let rho = Complex64::from_polar(1.0, theta1);
    let n = num_blocks * block_len;
    let m = (num_blocks - 1) * block_len;
    let mut q = CMat::zeros(n, m);
    for k in 0..num_blocks - 1 {
        for l in 0..block_len {
            q[(k * block_len + l, k * block_len + l)] = rho.conj();
            q[((k + 1) * block_len + l, k * block_len + l)] = Complex64::new(-1.0, 0.0);
        }
    }
    Ok(FilterSpec { q, blockwise: Some((num_blocks, block_len, rho)) })
}

impl FilterSpec {
    pub fn from_matrix(q: CMat) -> Result<Self> {
        if q.ncols() == 0 || q.ncols() > q.nrows() {
            return Err(invalid(format!("filter must be N x m with 1 <= m <= N, got {:?}", q.shape())));
        }
        Ok(Self { q, blockwise: None })
    }

    /// Pass-through filter, for models without self-interference.
    pub fn identity(n: usize) -> Self {
        Self { q: CMat::identity(n, n), blockwise: None }
    }

    /// Keep only the first `m` output channels.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.q.ncols() {
            return Err(invalid(format!("cannot truncate {} columns to {m}", self.q.ncols())));
        }
        Ok(Self { q: self.q.columns(0, m).into_owned(), blockwise: None })
    }

    pub fn matrix(&self) -> &CMat {
        &self.q
    }

    pub fn input_len(&self) -> usize {
        self.q.nrows()
    }

    pub fn output_len(&self) -> usize {
        self.q.ncols()
    }

    /// `Q^H R Q`.
    pub fn congruence(&self, r: &CMat) -> CMat {
        match self.blockwise {
            Some((m, l, rho)) => {
                let size = (m - 1) * l;
                CMat::from_fn(size, size, |i, j| {
                    r[(i, j)] - rho * r[(i, j + l)] - rho.conj() * r[(i + l, j)] + r[(i + l, j + l)]
                })
            }
            None => self.q.adjoint() * r * &self.q,
        }
    }

    /// `Q^H x`.
    pub fn adjoint_mul(&self, x: &CVec) -> CVec {
        match self.blockwise {
            Some((m, l, rho)) => CVec::from_fn((m - 1) * l, |i, _| rho * x[i] - x[i + l]),
            None => self.q.ad_mul(x),
        }
    }
}

/// `z1 = Q^H r1`.
pub fn apply_filter(spec: &FilterSpec, r1: &CVec) -> Result<CVec> {
    if r1.len() != spec.input_len() {
        return Err(Error::DimensionMismatch(format!("filter expects {} samples, got {}", spec.input_len(), r1.len())));
    }
    Ok(spec.adjoint_mul(r1))
}

/// Orthonormal basis of the numerical range of `x`.
fn range_basis(x: &CMat) -> CMat {
    let svd = SVD::new(x.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax.max(f64::MIN_POSITIVE))
        .collect();
    CMat::from_fn(x.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

/// Genie-aided bound from `r1` and from `z1 = Q^H r1`.
///
/// The filtered bound uses the weighting `Q (Q^H R Q)^{-1} Q^H` in place of
/// `R^{-1}`, with `r21` as the only nuisance.
pub fn filtered_gcrb_check(inputs: &CrbInputs, spec: &FilterSpec) -> Result<(f64, f64)> {
    let model = &inputs.model;
    let q = spec.matrix();
    if q.nrows() != model.num_samples() {
        return Err(Error::DimensionMismatch(format!(
            "filter expects {} samples, model has {}",
            q.nrows(),
            model.num_samples()
        )));
    }
    if model.self_interference {
        let leak = (q.adjoint() * &model.g11).norm();
        if leak > 1e-10 * q.norm() * model.g11.norm() {
            return Err(invalid(format!("filter does not cancel self-interference (residual {leak:.3e})")));
        }
    }
    let gcrb_r = gcrb(inputs)?;

    let cov = spec.congruence(&model.r);
    let lower = cholesky(cov, "filtered noise covariance Q^H R Q")?.l();
    let whiten = |x: &CMat| -> CMat {
        let mut out = q.adjoint() * x;
        lower.solve_lower_triangular_unchecked_mut(&mut out);
        out
    };
    let s = inputs.weighted_signal();
    let sw = whiten(&CMat::from_column_slice(s.len(), 1, s.as_slice()));
    let basis = range_basis(&whiten(&model.g21));
    let residual = &sw - &basis * (basis.adjoint() * &sw);
    let info = 2.0 * residual.norm_squared();
    let gcrb_z = if info <= 1e-12 * 2.0 * sw.norm_squared() { f64::INFINITY } else { 1.0 / info };
    Ok((gcrb_r, gcrb_z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Correlator,
    GaMle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateResult {
    /// Principal value in `[-pi, pi)`.
    pub phi_hat: f64,
    pub method: EstimateMethod,
    /// Correlation magnitude, or the concentrated log-likelihood.
    pub diagnostic: f64,
}

/// Reduce to `[-pi, pi)`.
pub fn wrap_half_open(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Angle of the lag-one block correlation `sum_m x_m^H x_{m+1}` of `x`
/// split into blocks of `block_len`.
pub fn correlate_blocks(x: &CVec, block_len: usize) -> Result<EstimateResult> {
    if block_len == 0 || !x.len().is_multiple_of(block_len) || x.len() < 2 * block_len {
        return Err(Error::DimensionMismatch(format!(
            "need at least two whole blocks of {block_len}, got {} samples",
            x.len()
        )));
    }
    let blocks = x.len() / block_len;
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..blocks - 1 {
        for l in 0..block_len {
            acc += x[m * block_len + l].conj() * x[(m + 1) * block_len + l];
        }
    }
    let mag = acc.norm();
    if mag == 0.0 || !mag.is_finite() {
        return Err(Error::UndefinedAngle);
    }
    Ok(EstimateResult { phi_hat: wrap_half_open(acc.arg()), method: EstimateMethod::Correlator, diagnostic: mag })
}

/// Correlator on the filter output `z1` of length `(M - 1) L`.
pub fn correlator_estimate(z1: &CVec, num_blocks: usize, block_len: usize) -> Result<EstimateResult> {
    if num_blocks < 3 {
        return Err(invalid(format!("correlator needs M >= 3, got {num_blocks}")));
    }
    if z1.len() != (num_blocks - 1) * block_len {
        return Err(Error::DimensionMismatch(format!(
            "filtered signal must have {} samples, got {}",
            (num_blocks - 1) * block_len,
            z1.len()
        )));
    }
    correlate_blocks(z1, block_len)
}

/// Which signal the genie-aided MLE observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MleInput {
    /// `z1` from the blockwise filter.
    #[default]
    Filtered,
    /// `r1` with `r11` profiled out jointly.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleOptions {
    pub grid_points: usize,
    /// Width of the final golden-section bracket, in radians.
    pub tolerance: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { grid_points: 256, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone)]
enum Whitener {
    /// `y = L_C^{-1} Q^H r1` with `C = Q^H R Q`.
    Filtered { filter: FilterSpec, lower: CMat },
    /// `y = P L_R^{-1} r1`, `P` removing the whitened `G11` span if present.
    Raw { lower: CMat, g11_basis: Option<CMat> },
}

/// Everything the genie knows: `R`, `phi11` and the block structure.
///
/// After whitening, the desired signal is `sum_k rho^k B_k r` for blocks
/// `B_k`; the Gram sums `S_d = sum_k B_k^H B_{k+d}` make each likelihood
/// evaluation independent of `N`.
#[derive(Debug, Clone)]
pub struct MleKnowledge {
    block_len: usize,
    blocks: Vec<CMat>,
    /// Packed lower triangles of the cosine and sine coefficients of `H`.
    fourier: Vec<(Vec<Complex64>, Vec<Complex64>)>,
    whitener: Whitener,
}

impl MleKnowledge {
    pub fn from_model(model: &BlockModel, input: MleInput) -> Result<Self> {
        Self::with_noise(model, input, &NoiseFactor::new(&model.r)?)
    }

    /// As [`MleKnowledge::from_model`], reusing a factorisation of `R`.
    pub fn with_noise(model: &BlockModel, input: MleInput, noise: &NoiseFactor) -> Result<Self> {
        let l = model.block_len;
        let (whitener, transform, count) = match input {
            MleInput::Filtered => {
                let filter = build_preserving_filter(model.num_blocks, l, model.phi11)?;
                let lower = cholesky(filter.congruence(&model.r), "filtered noise covariance Q^H R Q")?.l();
                let inv = lower_triangular_inverse(&lower);
                (Whitener::Filtered { filter, lower }, inv, model.num_blocks - 1)
            }
            MleInput::Raw => {
                let inv = lower_triangular_inverse(noise.lower());
                let g11_basis = model.self_interference.then(|| range_basis(&noise.whiten(&model.g11)));
                let transform = match &g11_basis {
                    Some(b) => &inv - b * (b.adjoint() * &inv),
                    None => inv,
                };
                (Whitener::Raw { lower: noise.lower().clone(), g11_basis }, transform, model.num_blocks)
            }
        };
        let blocks: Vec<CMat> = (0..count).map(|k| transform.columns(k * l, l).into_owned()).collect();
        // Filtered blocks are lower triangular: rows above block k + d are zero.
        let skip = |k: usize| if input == MleInput::Filtered { k * l } else { 0 };
        let gram: Vec<CMat> = (0..count)
            .map(|d| {
                let mut s = CMat::zeros(l, l);
                for k in 0..count - d {
                    let start = skip(k + d);
                    let rows = blocks[k].nrows() - start;
                    s += blocks[k].rows(start, rows).ad_mul(&blocks[k + d].rows(start, rows));
                }
                s
            })
            .collect();
        // H(phi) = S_0 + sum_d cos(d phi) (S_d + S_d^H) + sin(d phi) j (S_d - S_d^H).
        let j = Complex64::new(0.0, 1.0);
        let fourier = gram
            .iter()
            .enumerate()
            .map(|(d, s)| {
                let (cos, sin) =
                    if d == 0 { (s.clone(), CMat::zeros(l, l)) } else { (s + s.adjoint(), (s - s.adjoint()) * j) };
                (packed_lower(&cos), packed_lower(&sin))
            })
            .collect();
        Ok(Self { block_len: l, blocks, fourier, whitener })
    }

    pub fn input(&self) -> MleInput {
        match self.whitener {
            Whitener::Filtered { .. } => MleInput::Filtered,
            Whitener::Raw { .. } => MleInput::Raw,
        }
    }

    fn whiten(&self, r1: &CVec) -> Result<CVec> {
        match &self.whitener {
            Whitener::Filtered { filter, lower } => {
                let mut y = apply_filter(filter, r1)?;
                lower.solve_lower_triangular_unchecked_mut(&mut y);
                Ok(y)
            }
            Whitener::Raw { lower, g11_basis } => {
                if r1.len() != lower.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "expected {} samples, got {}",
                        lower.nrows(),
                        r1.len()
                    )));
                }
                let mut y = r1.clone();
                lower.solve_lower_triangular_unchecked_mut(&mut y);
                if let Some(b) = g11_basis {
                    y -= b * b.ad_mul(&y);
                }
                Ok(y)
            }
        }
    }

    /// Concentrated likelihood of one received vector.
    pub fn likelihood(&self, r1: &CVec) -> Result<ConcentratedLikelihood<'_>> {
        let y = self.whiten(r1)?;
        let projections = self.blocks.iter().map(|b| b.ad_mul(&y)).collect();
        Ok(ConcentratedLikelihood { knowledge: self, projections, energy: y.norm_squared() })
    }
}

/// `J(phi) = v^H H^{-1} v`: the energy of the whitened observation explained
/// by the best `r21` at phase `phi`.
#[derive(Debug, Clone)]
pub struct ConcentratedLikelihood<'a> {
    knowledge: &'a MleKnowledge,
    projections: Vec<CVec>,
    energy: f64,
}

impl ConcentratedLikelihood<'_> {
    pub fn evaluate(&self, phi: f64) -> f64 {
        let k = self.knowledge;
        let l = k.block_len;
        let rho = Complex64::from_polar(1.0, phi);

        let mut v = vec![Complex64::new(0.0, 0.0); l];
        let mut pw = Complex64::new(1.0, 0.0);
        for u in &self.projections {
            let c = pw.conj();
            for (vi, ui) in v.iter_mut().zip(u.iter()) {
                *vi += c * ui;
            }
            pw *= rho;
        }

        let mut h = k.fourier[0].0.clone();
        let mut pw = Complex64::new(1.0, 0.0);
        for (cos, sin) in &k.fourier[1..] {
            pw *= rho;
            for ((hi, ci), si) in h.iter_mut().zip(cos).zip(sin) {
                *hi += ci * pw.re + si * pw.im;
            }
        }
        if !packed_cholesky(&mut h, l) {
            return 0.0;
        }
        let mut row = 0;
        for i in 0..l {
            let mut acc = v[i];
            for kk in 0..i {
                acc -= h[row + kk] * v[kk];
            }
            v[i] = acc / h[row + i].re;
            row += i + 1;
        }
        v.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Whitened residual energy `|y|^2 - J(phi)` after profiling `r21`.
    pub fn residual_norm(&self, phi: f64) -> f64 {
        self.energy - self.evaluate(phi)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }
}

/// Row-packed lower triangle: entry `(i, j)`, `j <= i`, at `i (i + 1) / 2 + j`.
fn packed_lower(m: &CMat) -> Vec<Complex64> {
    let n = m.nrows();
    (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
}

/// In-place Cholesky of a row-packed Hermitian lower triangle; false unless
/// every pivot is clearly positive.
fn packed_cholesky(a: &mut [Complex64], n: usize) -> bool {
    let scale = (0..n).map(|i| a[i * (i + 1) / 2 + i].re).fold(0.0, f64::max);
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let mut acc = a[ri + j];
            for k in 0..j {
                acc -= a[ri + k] * a[rj + k].conj();
            }
            if j < i {
                a[ri + j] = acc / a[rj + j].re;
            } else {
                if acc.re.is_nan() || acc.re <= 1e-14 * scale {
                    return false;
                }
                a[ri + i] = Complex64::new(acc.re.sqrt(), 0.0);
            }
        }
    }
    true
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximise `f` on `[a, b]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Genie-aided MLE of `phi21`: grid search of the concentrated likelihood
/// over `[-pi, pi)`, then golden-section refinement around the best cell.
pub fn gamle_estimate(knowledge: &MleKnowledge, r1: &CVec, options: &MleOptions) -> Result<EstimateResult> {
    if options.grid_points < 4 {
        return Err(invalid("GA-MLE grid needs at least 4 points"));
    }
    if options.tolerance.is_nan() || options.tolerance <= 0.0 {
        return Err(invalid("GA-MLE tolerance must be positive"));
    }
    let like = knowledge.likelihood(r1)?;
    let step = TAU / options.grid_points as f64;
    let (best, _) = (0..options.grid_points)
        .map(|i| -PI + step * i as f64)
        .map(|phi| (phi, like.evaluate(phi)))
        .fold((0.0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let phi = golden_max(|x| like.evaluate(x), best - step, best + step, options.tolerance);
    Ok(EstimateResult {
        phi_hat: wrap_half_open(phi),
        method: EstimateMethod::GaMle,
        diagnostic: -like.residual_norm(phi),
    })
}
