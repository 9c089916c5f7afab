#![allow(dead_code)]

use std::f64::consts::TAU;

use proptest::prelude::*;
use super::{finite_difference_qfi, random_density};
use qsearch::bayes::{bayesian_update, LikelihoodCache, Posterior, MIN_GRID};
use qsearch::hilbert::{make_coherent, make_fock, make_squeezed, tensor, SingleModeState, Truncation, TwoModeState, C64};
use qsearch::metrology::{apply_loss, qfi_lossy_pair, qfi_mixed, qfi_pure, DensityMatrix, ProbeState};
use qsearch::operators::{apply_beam_splitter, apply_displacement, apply_phase, Mode};
use qsearch::postselect::{hermite_functions, project_number};
use qsearch::search::{evaluate, hill_climb, mutate, random_genome, restart_rng, SearchConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn arm(kind: u8, a: f64, b: f64) -> SingleModeState {
    match kind % 3 {
        0 => make_fock((a * 2.0).round() as usize, Truncation::Auto).unwrap(),
        1 => make_coherent(C64::from_polar(a * 1.5, b), Truncation::Auto).unwrap(),
        _ => make_squeezed(a * 0.8, b, Truncation::Auto).unwrap(),
    }
}

pub fn two_mode() -> impl Strategy<Value = TwoModeState> {
    (0u8..3, 0.0..1.0f64, 0.0..TAU, 0u8..3, 0.0..1.0f64, 0.0..TAU)
        .prop_map(|(k1, a1, b1, k2, a2, b2)| tensor(&arm(k1, a1, b1), &arm(k2, a2, b2)))
}

pub fn beam_splitter_preserves_norm_and_sector_weights() {
    proptest!(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }, |(s in two_mode(), t in 1.0..100.0f64)| {
        let out = apply_beam_splitter(t, &s).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
        let before = s.total_number_distribution();
        let after = out.total_number_distribution();
        for n in 0..before.len().max(after.len()) {
            let x = before.get(n).copied().unwrap_or(0.0);
            let y = after.get(n).copied().unwrap_or(0.0);
            prop_assert!((x - y).abs() < 1e-9, "sector {} {} vs {}", n, x, y);
        }
    });
}

pub fn displacement_and_phase_preserve_norm() {
    proptest!(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }, |(s in two_mode(), mag in 0.0..2.5f64, th in 0.0..TAU, a in any::<bool>())| {
        let mode = if a { Mode::A } else { Mode::B };
        let d = apply_displacement(C64::from_polar(mag, th), mode, &s).unwrap();
        prop_assert!((d.norm_sqr() - 1.0).abs() < 1e-8);
        let p = apply_phase(th, mode, &s);
        prop_assert!((p.norm_sqr() - 1.0).abs() < 1e-12);
        for (x, y) in p.marginal_a().iter().zip(s.marginal_a()) {
            prop_assert!((x - y).abs() < 1e-14);
        }
    });
}

pub fn number_heralds_sum_to_one() {
    proptest!(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }, |(s in two_mode(), t in 5.0..95.0f64)| {
        let out = apply_beam_splitter(t, &s).unwrap();
        let mut total = 0.0;
        for k in 0..out.dim_a() {
            if let Ok(h) = project_number(k, Mode::A, &out) {
                total += h.prob;
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    });
}

pub fn hermite_recurrence() {
    proptest!(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }, |(x in -12.0..12.0f64)| {
        // psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}, which is
        // H_{n+1} = 2x H_n - 2n H_{n-1} after removing the normalization
        let psi = hermite_functions(x, 62);
        for n in 1..60 {
            let nf = n as f64;
            let rhs = (2.0 / (nf + 1.0)).sqrt() * x * psi[n] - (nf / (nf + 1.0)).sqrt() * psi[n - 1];
            let scale = psi[n + 1].abs().max(psi[n].abs()).max(1e-300);
            prop_assert!((psi[n + 1] - rhs).abs() <= 1e-9 * scale);
        }
    });
}

pub fn product_qfi_is_twice_arm_variance() {
    proptest!(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }, |(k in 0u8..3, a in 0.05..1.0f64, b in 0.0..TAU)| {
        let psi = arm(k, a, b);
        let f = qfi_pure(&tensor(&psi, &psi)).unwrap();
        prop_assert!((f - 2.0 * psi.photon_variance().unwrap()).abs() < 1e-9 * f.max(1.0));
    });
}

pub fn qfi_ignores_common_phase() {
    proptest!(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }, |(s in two_mode(), t in 5.0..95.0f64, th in 0.0..TAU)| {
        let p = apply_beam_splitter(t, &s).unwrap();
        let f = qfi_pure(&p).unwrap();
        let both = apply_phase(th, Mode::A, &apply_phase(th, Mode::B, &p));
        prop_assert!((qfi_pure(&both).unwrap() - f).abs() < 1e-9 * f.max(1.0));
    });
}

pub fn posterior_stays_normalized() {
    proptest!(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }, |(seed in 0u64..1000)| {
        let s = tensor(&make_coherent(C64::new(1.0, 0.0), Truncation::Auto).unwrap(), &make_fock(0, 2).unwrap());
        let probe = apply_beam_splitter(50.0, &s).unwrap();
        let prior = Posterior::uniform(MIN_GRID, std::f64::consts::PI).unwrap();
        let cache = LikelihoodCache::new(&probe, &prior).unwrap();
        let truth = qsearch::bayes::outcome_distribution(&probe, 1.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut post = prior;
        for _ in 0..30 {
            post = bayesian_update(&post, truth.sample(&mut rng), &cache).unwrap();
            prop_assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    });
}

pub fn genomes_and_mutants_are_valid_and_seeded() {
    proptest!(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }, |(seed in any::<u64>(), m in 2usize..6)| {
        let cfg = SearchConfig { m, ..SearchConfig::default() };
        let g = random_genome(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&g, &random_genome(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)));
        prop_assert!(g.validate().is_ok());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut cur = g;
        for _ in 0..50 {
            cur = mutate(&cur, &mut rng);
            prop_assert!(cur.validate().is_ok());
            prop_assert_eq!(cur.m(), m);
        }
    });
}

pub fn hill_climb_monotone_and_reproducible() {
    proptest!(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() }, |(seed in any::<u64>())| {
        let cfg = SearchConfig { max_failed_mutations: 8, rng_seed: seed, ..SearchConfig::default() };
        let a = hill_climb(&cfg, &mut restart_rng(seed, 0), 0);
        let b = hill_climb(&cfg, &mut restart_rng(seed, 0), 0);
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        prop_assert!(a.lineage.windows(2).all(|w| w[1] > w[0]));
        let again = evaluate(&a.genome, &cfg);
        prop_assert!((again.fitness - a.report.fitness).abs() <= 1e-9);
        let counted = a.genome.herald().map(|h| h.2).unwrap_or(false);
        if counted && a.report.fitness > 0.0 {
            prop_assert!(a.report.herald_prob >= cfg.herald_floor);
        }
    });
}

pub fn loss_is_monotone() {
    proptest!(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() }, |(k in 0u8..3, a in 0.1..0.7f64, b in 0.0..TAU)| {
        let psi = arm(k, a, b);
        let mut last = f64::INFINITY;
        for i in (0..=10).rev() {
            let eta = i as f64 / 10.0;
            let f = qfi_lossy_pair(&psi, eta).unwrap();
            prop_assert!(f <= last + 1e-6, "eta {} gives {} after {}", eta, f, last);
            last = f;
        }
    });
}

pub fn lossy_qfi_bounded_by_pure() {
    proptest!(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() }, |(k in 0u8..3, a in 0.1..0.5f64, b in 0.0..TAU, eta in 0.0..1.0f64)| {
        let psi = arm(k, a, b).resized(10);
        let psi = psi.normalize().unwrap().0;
        let probe = tensor(&psi, &psi);
        let pure = qfi_pure(&probe).unwrap();
        let rho = apply_loss(&ProbeState::Pure(probe), eta, eta).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-9);
        prop_assert!(qfi_mixed(&rho).unwrap() <= pure + 1e-6);
    });
}

pub fn mixed_qfi_matches_finite_differences() {
    proptest!(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() }, |(seed in any::<u64>(), rank in 1usize..5)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho: DensityMatrix = random_density(&mut rng, 3, 3, rank);
        let f = qfi_mixed(&rho).unwrap();
        let fd = finite_difference_qfi(&rho, 1e-5);
        prop_assert!((f - fd).abs() <= 1e-4 * fd.max(1e-12), "{} vs {}", f, fd);
    });
}

/// Every property suite, by name.
pub const ALL: &[(&str, fn())] = &[
    ("beam_splitter_preserves_norm_and_sector_weights", beam_splitter_preserves_norm_and_sector_weights),
    ("displacement_and_phase_preserve_norm", displacement_and_phase_preserve_norm),
    ("number_heralds_sum_to_one", number_heralds_sum_to_one),
    ("hermite_recurrence", hermite_recurrence),
    ("product_qfi_is_twice_arm_variance", product_qfi_is_twice_arm_variance),
    ("qfi_ignores_common_phase", qfi_ignores_common_phase),
    ("posterior_stays_normalized", posterior_stays_normalized),
    ("genomes_and_mutants_are_valid_and_seeded", genomes_and_mutants_are_valid_and_seeded),
    ("hill_climb_monotone_and_reproducible", hill_climb_monotone_and_reproducible),
    ("loss_is_monotone", loss_is_monotone),
    ("lossy_qfi_bounded_by_pure", lossy_qfi_bounded_by_pure),
    ("mixed_qfi_matches_finite_differences", mixed_qfi_matches_finite_differences),
];
