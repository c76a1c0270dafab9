#![allow(dead_code)]

use std::f64::consts::PI;

use brp_cfo::channel::{complex_gaussian_vec, SimRng};
use brp_cfo::linalg::CVec;
use brp_cfo::BlockModel;
use rand::{Rng, SeedableRng};

const SEPARATION: f64 = 0.05;

/// Random block model with arbitrary phases, nuisance vectors and relay taps.
pub fn random_model(seed: u64, m: usize, l: usize, self_interference: bool) -> BlockModel {
    let mut rng = SimRng::seed_from_u64(seed);
    let taps = rng.random_range(1..=l);
    let variance = rng.random_range(0.1..2.0);
    let noise = complex_gaussian_vec(&mut rng, taps, variance);
    let r11 = CVec::from_vec(complex_gaussian_vec(&mut rng, l, 1.0));
    let r21 = CVec::from_vec(complex_gaussian_vec(&mut rng, l, 1.0));
    let phi11 = rng.random_range(-PI..PI);
    // Keep clear of rho21 = rho11, where the bound diverges.
    let phi21 = phi11 + rng.random_range(SEPARATION..2.0 * PI - SEPARATION);
    BlockModel::from_parts(m, l, phi11, phi21, r11, r21, noise, self_interference).unwrap()
}

/// The (M, L) grid used by the oracle comparisons.
pub fn instance_shape(i: usize) -> (usize, usize) {
    ([3, 4, 5][i % 3], [1, 2, 4][(i / 3) % 3])
}
