use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nrep_core::adapt::apply_exponential;
use nrep_core::experiments::experiment_pool_config;
use nrep_core::fock::{
    annihilate, apply_string_bits, build_determinant, build_purified_mixture, create, enumerate_sector, ModeLayout,
    SectorBasis, StateVector,
};
use nrep_core::nrep::coleman_check;
use nrep_core::pool::{apply_generator, build_pool, PoolConfig};
use nrep_core::rdm::{compute_1rdm, compute_2rdm, compute_rdm, contract_2rdm, hs_distance, RdmLayout, RdmMatrix};
use nrep_core::targets::{add_noise, build_mixture_target, MixtureSpec, NoiseSpec};

fn random_state(basis: &Arc<SectorBasis>, rng: &mut impl Rng) -> StateVector<f64> {
    let amps = (0..basis.len()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    StateVector::from_amplitudes(basis.clone(), amps).unwrap().normalized()
}

/// Orthonormal states by Gram-Schmidt on random vectors.
fn orthonormal_states(basis: &Arc<SectorBasis>, k: usize, rng: &mut impl Rng) -> Vec<StateVector<f64>> {
    let mut out: Vec<StateVector<f64>> = Vec::new();
    while out.len() < k {
        let mut v = random_state(basis, rng);
        for u in &out {
            let overlap = u.inner(&v);
            for (a, b) in v.amplitudes_mut().iter_mut().zip(u.amplitudes()) {
                *a -= overlap * b;
            }
        }
        out.push(v.normalized());
    }
    out
}

#[test]
fn hand_evaluated_sign() {
    // a†₁ a₃ |1,0,1,1⟩ = -|1,1,1,0⟩
    let (bits, negative) = apply_string_bits(0b1101, &[1], &[3]).unwrap();
    assert_eq!(bits, 0b0111);
    assert!(negative);
}

proptest! {
    #[test]
    fn single_mode_anticommutators(bits in 0u64..(1 << 10), i in 0usize..10, j in 0usize..10) {
        // {a_i, a†_j}|bits⟩ = δ_ij |bits⟩
        let term = |first: bool| -> Option<(u64, i32)> {
            let (b1, s1, b2, s2);
            if first {
                (b1, s1) = create(bits, j)?;
                (b2, s2) = annihilate(b1, i)?;
            } else {
                (b1, s1) = annihilate(bits, i)?;
                (b2, s2) = create(b1, j)?;
            }
            Some((b2, if s1 ^ s2 { -1 } else { 1 }))
        };
        let (a, b) = (term(true), term(false));
        if i == j {
            let total: i32 = [a, b].iter().flatten().map(|&(out, s)| { assert_eq!(out, bits); s }).sum();
            prop_assert_eq!(total, 1);
        } else {
            match (a, b) {
                (Some((x, s)), Some((y, t))) => {
                    prop_assert_eq!(x, y);
                    prop_assert_eq!(s + t, 0);
                }
                (None, None) => {}
                _ => prop_assert!(false, "only one ordering survives"),
            }
        }
    }

    #[test]
    fn pool_evolution_preserves_invariants(seed in any::<u64>(), ensemble in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = if ensemble { ModeLayout::ensemble(6, 3).unwrap() } else { ModeLayout::pure(6, 3).unwrap() };
        let basis = Arc::new(enumerate_sector(layout).unwrap());
        let pool = build_pool(&layout, &PoolConfig::default()).unwrap();
        let mut psi = build_determinant::<f64>(&basis, &if ensemble { vec![0, 1, 2, 6, 7, 8] } else { vec![0, 1, 2] }).unwrap();
        for _ in 0..8 {
            let g = &pool[rng.random_range(0..pool.len())];
            psi = apply_exponential(g, rng.random_range(-3.0..3.0), &psi).unwrap();
        }
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        let expected = if ensemble { vec![(3, 3)] } else { vec![(3, 0)] };
        let counts: Vec<(usize, usize)> = psi.register_counts(1e-14);
        prop_assert_eq!(counts, expected);

        let g1 = compute_1rdm(&psi);
        let g2 = compute_2rdm(&psi).unwrap();
        prop_assert!(g1.hermiticity_error() < 1e-12 && g2.hermiticity_error() < 1e-12);
        prop_assert!((g1.trace().re - 3.0).abs() < 1e-10);
        prop_assert!((g2.trace().re - 6.0).abs() < 1e-10);
        let contracted = contract_2rdm(&g2).unwrap();
        prop_assert!(hs_distance(&contracted, &g1).unwrap().value() < 1e-20);
    }

    #[test]
    fn generator_expectations_are_imaginary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = ModeLayout::ensemble(4, 2).unwrap();
        let basis = Arc::new(enumerate_sector(layout).unwrap());
        let pool = build_pool(&layout, &PoolConfig::default()).unwrap();
        let psi = random_state(&basis, &mut rng);
        let g = &pool[rng.random_range(0..pool.len())];
        let e = psi.inner(&apply_generator(g, &psi).unwrap());
        prop_assert!((e + e.conj()).norm() < 1e-12);
    }

    #[test]
    fn purification_is_faithful(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = ModeLayout::ensemble(6, 2).unwrap();
        let basis = Arc::new(enumerate_sector(layout).unwrap());
        let sys = Arc::new(enumerate_sector(layout.system_only()).unwrap());
        let phis = orthonormal_states(&sys, k, &mut rng);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let comps: Vec<(f64, StateVector<f64>)> = raw.iter().map(|w| w / total).zip(phis).collect();
        let psi = build_purified_mixture(&basis, &comps).unwrap();

        for p in [1, 2] {
            let mut expected = compute_rdm(&comps[0].1, p).unwrap().data().mapv(|x| x * comps[0].0);
            for (w, phi) in &comps[1..] {
                expected += &compute_rdm(phi, p).unwrap().data().mapv(|x| x * *w);
            }
            let got = compute_rdm(&psi, p).unwrap();
            let err = (got.data() - &expected).iter().map(|x| x.norm()).fold(0.0, f64::max);
            prop_assert!(err < 1e-12, "p={} error {:e}", p, err);
        }
    }
}

#[test]
fn noise_is_bit_reproducible() {
    let system = ModeLayout::pure(8, 4).unwrap();
    let spec = MixtureSpec { determinants: vec![vec![0, 1, 2, 3], vec![0, 1, 4, 3]], w: 0.5 };
    for p in [1, 2] {
        let target = build_mixture_target::<f64>(&spec, &system, p).unwrap();
        let noise = NoiseSpec { epsilon: 0.01, seed: 7, ..Default::default() };
        let a = add_noise(&target, &noise).unwrap();
        let b = add_noise(&target, &noise).unwrap();
        let bits = |m: &RdmMatrix<f64>| -> Vec<(u64, u64)> {
            m.data().iter().map(|x| (x.re.to_bits(), x.im.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = add_noise(&target, &NoiseSpec { seed: 8, ..noise }).unwrap();
        assert_ne!(bits(&a), bits(&c));
        if p == 2 {
            assert_eq!(a.layout(), RdmLayout::FullTensor);
        }
    }
}

#[test]
fn strong_noise_breaks_coleman_conditions() {
    let system = ModeLayout::pure(8, 4).unwrap();
    let spec = MixtureSpec { determinants: vec![vec![0, 1, 2, 3], vec![0, 1, 4, 3]], w: 0.5 };
    let target = build_mixture_target::<f64>(&spec, &system, 1).unwrap();
    let failures = (0..100u64)
        .filter(|&seed| {
            let noisy = add_noise(&target, &NoiseSpec { epsilon: 0.1, seed, ..Default::default() }).unwrap();
            !coleman_check(&noisy, 4, 1e-9).unwrap().coleman_ok()
        })
        .count();
    assert_eq!(failures, 100, "only {failures}/100 noisy 1-RDMs violate a Coleman condition");
}

#[test]
fn experiment_pool_conserves_registers() {
    for (n, np) in [(4, 2), (6, 3), (6, 4), (8, 4)] {
        for layout in [ModeLayout::pure(n, np).unwrap(), ModeLayout::ensemble(n, np).unwrap()] {
            let pool = build_pool(&layout, &experiment_pool_config()).unwrap();
            for g in &pool {
                let (c, a) = g.x_strings();
                let count = |v: &[usize], bath: bool| v.iter().filter(|&&m| (m >= n) == bath).count();
                assert_eq!(count(&c, false), count(&a, false), "{g:?}");
                assert_eq!(count(&c, true), count(&a, true), "{g:?}");
                assert!(c.iter().chain(&a).any(|&m| m < n), "bath-only generator {g:?}");
            }
        }
    }
}
