mod common;

use std::f64::consts::PI;

use brp_cfo::channel::{build_block_model, complex_gaussian_vec, sample_channel, twisted_circulant, SimRng};
use brp_cfo::crb::{acrb, acrb_oneway, brute_force_crb, build_rcso, estimate_gamma, gcrb, mcrb_numeric, phi1_matrix};
use brp_cfo::estimation::{build_preserving_filter, filtered_gcrb_check};
use brp_cfo::linalg::CMat;
use brp_cfo::preamble::{generalize_cazac, generate_cazac, optimal_delta};
use brp_cfo::{BasisBlock, BrpSpec, Complex64, CrbInputs, Error, FilterSpec, SystemConfig};
use common::{instance_shape, random_model};
use rand::SeedableRng;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn closed_form_matches_full_fim_with_and_without_self_interference() {
    for i in 0..60 {
        let (m, l) = instance_shape(i);
        let inputs = CrbInputs::new(random_model(100 + i as u64, m, l, i % 4 != 0)).unwrap();
        let a = gcrb(&inputs).unwrap();
        let b = brute_force_crb(&inputs).unwrap();
        assert!(rel(a, b) < 1e-8, "instance {i}: {a} vs {b}");
        assert!(a > 0.0 && a.is_finite());
    }
}

#[test]
fn phi1_null_space() {
    for i in 0..20 {
        let (m, l) = instance_shape(i);
        let inputs = CrbInputs::new(random_model(200 + i as u64, m, l, true)).unwrap();
        let phi = phi1_matrix(&inputs).unwrap();
        assert!((&phi * &inputs.model.g21).norm() < 1e-10);
        assert!((&phi - phi.adjoint()).norm() < 1e-10 * phi.norm());
    }
}

fn periodic_model(cfg: &SystemConfig, seed: u64) -> CrbInputs {
    let ch = sample_channel(cfg, seed).unwrap();
    let brp = BrpSpec::new(generate_cazac(cfg.block_len).unwrap(), 0.0, cfg.num_blocks).unwrap();
    CrbInputs::new(build_block_model(cfg, &ch, Some(&brp), &brp).unwrap()).unwrap()
}

#[test]
fn periodic_bound_grows_as_offsets_merge() {
    let base = SystemConfig::default();
    let l = base.block_len as f64;
    let mut prev = 0.0;
    for delta in [1e-2, 1e-3, 1e-4, 1e-5] {
        let cfg = SystemConfig { f2: base.f1 + delta / l, ..base.clone() };
        let v = gcrb(&periodic_model(&cfg, 77)).unwrap();
        assert!(v > prev, "delta {delta}: {v} <= {prev}");
        prev = v;
    }
    let equal = SystemConfig { f2: base.f1, ..base };
    assert_eq!(gcrb(&periodic_model(&equal, 77)).unwrap(), f64::INFINITY);
}

#[test]
fn two_blocks_always_degenerate() {
    let cfg = SystemConfig { num_blocks: 2, ..SystemConfig::default() };
    let b = generate_cazac(16).unwrap();
    let brp1 = BrpSpec::new(b.clone(), 0.0, 2).unwrap();
    let brp2 = BrpSpec::new(b, 2.0, 2).unwrap();
    for seed in 0..5 {
        let ch = sample_channel(&cfg, seed).unwrap();
        let inputs = CrbInputs::new(build_block_model(&cfg, &ch, Some(&brp1), &brp2).unwrap()).unwrap();
        assert!(matches!(gcrb(&inputs), Err(Error::DegenerateFim(_))));
    }
}

#[test]
fn modified_bound_with_scaled_identity_is_closed_form() {
    for i in 0..30 {
        let (m, l) = instance_shape(i);
        let two_way = i % 3 != 0;
        let model = random_model(300 + i as u64, m, l, two_way);
        let k = 0.2 + 0.05 * i as f64;
        let gamma = CMat::identity(m * l, m * l) * Complex64::new(k, 0.0);
        let power = model.r21.norm_squared();
        let closed = if two_way {
            acrb(model.phi21, model.phi11, power, m, k).unwrap()
        } else {
            acrb_oneway(power, m, k).unwrap()
        };
        let numeric = mcrb_numeric(&CrbInputs::new(model).unwrap(), &gamma).unwrap();
        assert!(rel(numeric, closed) < 1e-8, "instance {i}: {numeric} vs {closed}");
    }
}

#[test]
fn acrb_dominates_oneway() {
    for m in 3..10 {
        for i in 0..50 {
            let x = -PI + 2.0 * PI * i as f64 / 50.0;
            match acrb(x, 0.0, 1.3, m, 0.6) {
                Ok(v) => assert!(v >= acrb_oneway(1.3, m, 0.6).unwrap()),
                Err(Error::InvalidRegime(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn fitted_gamma_bound_close_to_closed_form() {
    let cfg = SystemConfig::default();
    let est = estimate_gamma(&cfg, 2000, 5).unwrap();
    let b = generate_cazac(16).unwrap();
    let delta = optimal_delta(5).unwrap().delta;
    let brp1 = BrpSpec::new(b.clone(), 0.0, 5).unwrap();
    let brp2 = BrpSpec::new(generalize_cazac(&b, delta), delta, 5).unwrap();
    for seed in 0..5 {
        let ch = sample_channel(&cfg, seed).unwrap();
        let model = build_block_model(&cfg, &ch, Some(&brp1), &brp2).unwrap();
        let closed = acrb(model.phi21, model.phi11, model.r21.norm_squared(), 5, est.k).unwrap();
        let numeric = mcrb_numeric(&CrbInputs::new(model).unwrap(), &est.gamma).unwrap();
        assert!(rel(numeric, closed) < 0.10, "seed {seed}: {numeric} vs {closed}");
    }
}

#[test]
fn gamma_standard_error_follows_sample_size() {
    let cfg = SystemConfig::default();
    let small = estimate_gamma(&cfg, 1000, 9).unwrap();
    let large = estimate_gamma(&cfg, 2000, 9).unwrap();
    let ratio = small.k_std_error / large.k_std_error;
    assert!((ratio - 2f64.sqrt()).abs() < 0.2, "{ratio}");
}

#[test]
fn preserving_filter_keeps_the_bound() {
    for i in 0..30 {
        let (m, l) = instance_shape(i);
        let inputs = CrbInputs::new(random_model(400 + i as u64, m, l, true)).unwrap();
        let spec = build_preserving_filter(m, l, inputs.model.phi11).unwrap();
        let (r, z) = filtered_gcrb_check(&inputs, &spec).unwrap();
        assert!(rel(z, r) < 1e-8, "instance {i}: {r} vs {z}");

        let drop = spec.output_len() - 1;
        if drop > l {
            let (r, zt) = filtered_gcrb_check(&inputs, &spec.truncate(drop).unwrap()).unwrap();
            assert!(zt > r * (1.0 + 1e-9), "instance {i}: truncated {zt} vs {r}");
        }
    }
}

#[test]
fn one_way_passes_through_identity_filter() {
    for i in 0..10 {
        let (m, l) = instance_shape(i);
        let inputs = CrbInputs::new(random_model(500 + i as u64, m, l, false)).unwrap();
        let (r, z) = filtered_gcrb_check(&inputs, &FilterSpec::identity(m * l)).unwrap();
        assert!(rel(z, r) < 1e-8);
        assert!(rel(r, gcrb(&inputs).unwrap()) < 1e-15);
    }
}

#[test]
fn filter_must_cancel_self_interference() {
    let inputs = CrbInputs::new(random_model(600, 4, 2, true)).unwrap();
    let wrong = build_preserving_filter(4, 2, inputs.model.phi11 + 0.5).unwrap();
    assert!(filtered_gcrb_check(&inputs, &wrong).is_err());
}

#[test]
fn rcso_of_generalized_cazac_has_orthogonal_columns() {
    for l in [1usize, 2, 5, 16] {
        for theta in [0.0, 0.7, PI] {
            let b = generalize_cazac(&generate_cazac(l).unwrap(), theta);
            let xi = build_rcso(&b, theta);
            let gram = xi.adjoint() * &xi;
            let want = CMat::identity(l, l) * Complex64::new(l as f64, 0.0);
            assert!((gram - want).norm() < 1e-10 * l as f64, "L={l} theta={theta}");
        }
    }
    let one = BasisBlock::new(vec![Complex64::new(0.3, 0.4)]).unwrap();
    assert_eq!(twisted_circulant(&one, 2.0)[(0, 0)], Complex64::new(0.3, 0.4));
}

fn min_eigenvalue(m: &CMat) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Among unit-power blocks the generalised CAZAC maximises the worst-case
/// gain `min_h |Xi h|^2 / |h|^2`.
#[test]
fn generalized_cazac_maximises_worst_case_gain() {
    let l = 16;
    let theta = PI;
    let cazac = build_rcso(&generalize_cazac(&generate_cazac(l).unwrap(), theta), theta);
    assert!((min_eigenvalue(&(cazac.adjoint() * &cazac)) - l as f64).abs() < 1e-9);
    let mut rng = SimRng::seed_from_u64(31);
    for _ in 0..200 {
        let raw = complex_gaussian_vec(&mut rng, l, 1.0);
        let scale = (l as f64 / raw.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        let b = BasisBlock::new(raw.into_iter().map(|z| z * scale).collect()).unwrap();
        let xi = build_rcso(&b, theta);
        assert!(min_eigenvalue(&(xi.adjoint() * &xi)) <= l as f64 + 1e-9);
    }
}

#[test]
fn periodic_bound_explodes_against_optimized_on_same_channel() {
    let cfg = SystemConfig { f2: SystemConfig::default().f1 + 1e-6, ..SystemConfig::default() };
    let ch = sample_channel(&cfg, 12).unwrap();
    let periodic = gcrb(&periodic_model(&cfg, 12)).unwrap();
    let b = generate_cazac(cfg.block_len).unwrap();
    let delta = optimal_delta(cfg.num_blocks).unwrap().delta;
    let brp1 = BrpSpec::new(b.clone(), 0.0, cfg.num_blocks).unwrap();
    let brp2 = BrpSpec::new(generalize_cazac(&b, delta), delta, cfg.num_blocks).unwrap();
    let optimized = gcrb(&CrbInputs::new(build_block_model(&cfg, &ch, Some(&brp1), &brp2).unwrap()).unwrap()).unwrap();
    assert!(periodic > 1e6 * optimized, "{periodic} vs {optimized}");
}
