//! CAZAC basis blocks, block-rotated preambles and the block-rotation-angle
//! optimisation.
//!
//! A BRP of `M + 1` blocks repeats one basis block, rotating block `m` by
//! `exp(j m theta)`. The receiver drops the first block, so the `M` retained
//! blocks carry the self-interference at block rate `theta_1` and the desired
//! signal at `phi_21`. How much the self-interference hurts is measured by the
//! [`degradation`] function of the angle difference.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Below this `|sin(x/2)|` the degradation function switches to its series.
const SERIES_THRESHOLD: f64 = 1e-4;

/// Grid used to bracket the roots of the optimality condition for even `M`.
const ROOT_SCAN_POINTS: usize = 10_000;
const ROOT_SCAN_MARGIN: f64 = 0.01;

/// One basis block `b` of unit-modulus-or-arbitrary complex samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisBlock {
    samples: Vec<Complex64>,
}

impl BasisBlock {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("basis block must have at least one sample"));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Total energy `b^H b`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Largest deviation of any `|b_n|` from the mean modulus.
    pub fn amplitude_spread(&self) -> f64 {
        let mean = self.samples.iter().map(|s| s.norm()).sum::<f64>() / self.len() as f64;
        self.samples.iter().map(|s| (s.norm() - mean).abs()).fold(0.0, f64::max)
    }

    /// Largest normalised inner product between two distinct cyclic shifts.
    pub fn max_cyclic_correlation(&self) -> f64 {
        let l = self.len();
        let energy = self.energy();
        (1..l)
            .map(|shift| {
                let acc: Complex64 = (0..l).map(|n| self.samples[n].conj() * self.samples[(n + shift) % l]).sum();
                acc.norm() / energy
            })
            .fold(0.0, f64::max)
    }
}

/// Chu sequence of length `len` with root 1: `exp(j pi n^2 / L)` for even `L`,
/// `exp(j pi n (n + 1) / L)` for odd `L`.
pub fn generate_cazac(len: usize) -> Result<BasisBlock> {
    if len == 0 {
        return Err(invalid("CAZAC length must be at least 1"));
    }
    let l = len as f64;
    let samples = (0..len)
        .map(|n| {
            // Reduce the exponent modulo 2L before scaling to keep phases exact.
            let k = if len.is_multiple_of(2) { (n * n) % (2 * len) } else { (n * (n + 1)) % (2 * len) };
            Complex64::from_polar(1.0, PI * k as f64 / l)
        })
        .collect();
    BasisBlock::new(samples)
}

/// Generalised CAZAC block `b'_n = b_n exp(j n theta / L)`.
pub fn generalize_cazac(base: &BasisBlock, theta: f64) -> BasisBlock {
    let l = base.len() as f64;
    let samples =
        base.samples.iter().enumerate().map(|(n, &b)| b * Complex64::from_polar(1.0, n as f64 * theta / l)).collect();
    BasisBlock { samples }
}

/// A block-rotated preamble: basis block, rotation angle and retained block
/// count `M`. The transmitted sequence has `M + 1` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrpSpec {
    basis: BasisBlock,
    theta: f64,
    num_blocks: usize,
}

impl BrpSpec {
    /// `theta` is reduced to `[0, 2pi)`.
    pub fn new(basis: BasisBlock, theta: f64, num_blocks: usize) -> Result<Self> {
        if num_blocks < 2 {
            return Err(invalid(format!("BRP needs at least 2 retained blocks, got {num_blocks}")));
        }
        if !theta.is_finite() {
            return Err(invalid("block rotation angle must be finite"));
        }
        Ok(Self { basis, theta: theta.rem_euclid(TAU), num_blocks })
    }

    pub fn basis(&self) -> &BasisBlock {
        &self.basis
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block_len(&self) -> usize {
        self.basis.len()
    }

    /// Transmitted length `(M + 1) L`, guard block included.
    pub fn len(&self) -> usize {
        (self.num_blocks + 1) * self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn assemble(&self) -> Vec<Complex64> {
        assemble_brp(self)
    }
}

/// `[b, rho b, rho^2 b, ..., rho^M b]` with `rho = exp(j theta)`.
pub fn assemble_brp(spec: &BrpSpec) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(spec.len());
    for m in 0..=spec.num_blocks {
        let rot = Complex64::from_polar(1.0, m as f64 * spec.theta);
        out.extend(spec.basis.samples.iter().map(|&b| b * rot));
    }
    out
}

fn require_blocks(num_blocks: usize) -> Result<f64> {
    if num_blocks < 3 {
        return Err(invalid(format!("degradation function needs M >= 3, got {num_blocks}")));
    }
    Ok(num_blocks as f64)
}

/// Reduce an angle to `(-pi, pi]`.
pub fn principal_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Degradation function `lambda(x)` for `M` retained blocks.
///
/// Non-negative, even and `2pi`-periodic; zero exactly at the optimal angle
/// differences. At `x = 2k pi` the quotient is `0/0` and the limit
/// `(M^2 - 1) / 3` is returned through a fourth-order series.
pub fn degradation(x: f64, num_blocks: usize) -> Result<f64> {
    let m = require_blocks(num_blocks)?;
    if !x.is_finite() {
        return Err(invalid("degradation argument must be finite"));
    }
    let x = principal_angle(x);
    let half = 0.5 * x;
    let (sin_h, cos_h) = half.sin_cos();
    if sin_h.abs() < SERIES_THRESHOLD {
        let m2 = m * m;
        let c0 = (m2 - 1.0) / 3.0;
        let c2 = -(m2 - 1.0) * (m2 - 4.0) / 180.0;
        let c4 = -(m2 - 1.0) * (m2 - 4.0) * (2.0 * m2 + 17.0) / 75_600.0;
        let x2 = x * x;
        return Ok(c0 + x2 * (c2 + x2 * c4));
    }
    let (sin_mh, cos_mh) = (m * half).sin_cos();
    let num = m * cos_mh * sin_h - sin_mh * cos_h;
    let den = sin_h * sin_h * (m * m * sin_h * sin_h - sin_mh * sin_mh);
    Ok((num * num / den).max(0.0))
}

/// Left-minus-right side of the optimality condition
/// `M cos(M D / 2) sin(D / 2) = sin(M D / 2) cos(D / 2)`.
pub fn optimality_residual(delta: f64, num_blocks: usize) -> f64 {
    let m = num_blocks as f64;
    let half = 0.5 * delta;
    m * (m * half).cos() * half.sin() - (m * half).sin() * half.cos()
}

/// How an [`AngleSolution`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleMethod {
    ClosedFormOdd,
    ClosedFormEven,
    RootFound,
    Heuristic,
}

/// Optimal block-rotation angle difference `Delta = theta_2 - theta_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSolution {
    pub delta: f64,
    /// Value of [`optimality_residual`] at `delta`.
    pub residual: f64,
    pub method: AngleMethod,
}

/// Angle difference that zeroes the degradation function.
///
/// Odd `M` gives `pi`, which also minimises the second-order sensitivity to a
/// residual CFO. For even `M` the closed forms cover 4, 6 and 8; everything
/// else is found by bisection. Among several roots the one with the smallest
/// [`taylor_p2`] wins, ties going to the root nearest [`heuristic_delta`].
pub fn optimal_delta(num_blocks: usize) -> Result<AngleSolution> {
    require_blocks(num_blocks)?;
    if num_blocks % 2 == 1 {
        return Ok(AngleSolution {
            delta: PI,
            residual: optimality_residual(PI, num_blocks),
            method: AngleMethod::ClosedFormOdd,
        });
    }
    if let Some(delta) = even_closed_form(num_blocks) {
        let residual = optimality_residual(delta, num_blocks);
        if residual.abs() < 1e-9 {
            return Ok(AngleSolution { delta, residual, method: AngleMethod::ClosedFormEven });
        }
    }
    let delta = best_root(num_blocks)?;
    Ok(AngleSolution { delta, residual: optimality_residual(delta, num_blocks), method: AngleMethod::RootFound })
}

fn even_closed_form(num_blocks: usize) -> Option<f64> {
    let d1 = 2.0 * 21f64.sqrt();
    let d2 = 2.0 * 15f64.sqrt() * ((19.0 / (5.0 * 15f64.sqrt())).acos() / 3.0).cos();
    match num_blocks {
        4 => Some((-2.0 / 3.0f64).acos()),
        6 => Some((-(9.0 + d1) / (12.0 + d1)).acos()),
        // d2 in both numerator and denominator; see the module tests.
        8 => Some((-(4.0 + d2) / (5.0 + d2)).acos()),
        _ => None,
    }
}

/// All roots of the optimality condition on `(0.01, 2pi - 0.01)`.
pub fn optimality_roots(num_blocks: usize) -> Vec<f64> {
    let lo = ROOT_SCAN_MARGIN;
    let hi = TAU - ROOT_SCAN_MARGIN;
    let step = (hi - lo) / (ROOT_SCAN_POINTS - 1) as f64;
    let f = |x: f64| optimality_residual(x, num_blocks);
    let mut roots = Vec::new();
    let mut prev_x = lo;
    let mut prev_f = f(lo);
    for i in 1..ROOT_SCAN_POINTS {
        let x = lo + i as f64 * step;
        let fx = f(x);
        if prev_f == 0.0 {
            roots.push(prev_x);
        } else if prev_f.signum() != fx.signum() && fx != 0.0 {
            roots.push(bisect(f, prev_x, x, prev_f));
        }
        prev_x = x;
        prev_f = fx;
    }
    if prev_f == 0.0 {
        roots.push(prev_x);
    }
    roots
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn best_root(num_blocks: usize) -> Result<f64> {
    let target = if num_blocks.is_multiple_of(2) { heuristic_delta(num_blocks)? } else { PI };
    // Minimising p2 means maximising sin^2(D/2).
    let score = |d: f64| (0.5 * d).sin().powi(2);
    optimality_roots(num_blocks)
        .into_iter()
        .fold(None::<f64>, |best, r| match best {
            None => Some(r),
            Some(b) => {
                let (sr, sb) = (score(r), score(b));
                if sr > sb + 1e-12 || ((sr - sb).abs() <= 1e-12 && (r - target).abs() < (b - target).abs()) {
                    Some(r)
                } else {
                    Some(b)
                }
            }
        })
        .ok_or(Error::NoRootBracketed(num_blocks))
}

/// `(1 - M / (M^2 - 1)) pi`, a near-optimal angle for even `M`.
pub fn heuristic_delta(num_blocks: usize) -> Result<f64> {
    if num_blocks < 4 || num_blocks % 2 == 1 {
        return Err(invalid(format!("heuristic angle needs even M >= 4, got {num_blocks}")));
    }
    let m = num_blocks as f64;
    Ok((1.0 - m / (m * m - 1.0)) * PI)
}

/// Second-order coefficient `(M^2 - 1) / (4 sin^2(D / 2))` of the degradation
/// function around an optimal angle.
pub fn taylor_p2(delta: f64, num_blocks: usize) -> Result<f64> {
    let m = require_blocks(num_blocks)?;
    let s = (0.5 * delta).sin();
    if s.abs() < 1e-12 {
        return Err(invalid("second-order coefficient undefined at multiples of 2pi"));
    }
    Ok((m * m - 1.0) / (4.0 * s * s))
}
