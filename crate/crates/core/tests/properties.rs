mod common;

use bohmian::equilibrium::sample_equilibrium;
use bohmian::grid::tensor_product;
use bohmian::propagator::{Potential, Propagator, PropagatorConfig};
use bohmian::{ParticleSystem, WaveFunction};
use common::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn state(seed: u64) -> WaveFunction {
    let packets = random_superposition(&mut rng(seed));
    WaveFunction::from_fn(&line(256), 0.0, |q| eval(&packets, q[0])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn velocity_ignores_global_factor(seed in any::<u64>()) {
        prop_assert!(scaling_case(seed) <= SCALING_TOLERANCE);
    }

    #[test]
    fn spinor_velocity_ignores_global_rotation(seed in any::<u64>()) {
        prop_assert!(spinor_case(seed) <= SPINOR_TOLERANCE);
    }

    #[test]
    fn swapped_start_gives_swapped_path(seed in any::<u64>()) {
        prop_assert!(permutation_case(seed) <= PERMUTATION_TOLERANCE);
    }

    #[test]
    fn one_dimensional_paths_keep_their_order(seed in any::<u64>()) {
        prop_assert_eq!(crossing_case(seed), 0);
    }

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>()) {
        let once = state(seed).normalize().unwrap();
        let twice = once.normalize().unwrap();
        let diff = once.amplitudes().iter().zip(twice.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn density_scales_with_modulus_squared(seed in any::<u64>(), r in 0.01f64..100.0, phase in 0.0f64..6.3) {
        let psi = state(seed);
        let c = Complex64::from_polar(r, phase);
        for (a, b) in psi.scaled(c).density().iter().zip(psi.density()) {
            prop_assert!((a - r * r * b).abs() <= 1e-12 * (r * r * b).max(1e-300));
        }
    }

    #[test]
    fn tensor_product_norms_multiply(a in any::<u64>(), b in any::<u64>()) {
        let (pa, pb) = (state(a), state(b));
        let prod = tensor_product(&pa, &pb).unwrap();
        prop_assert!((prod.norm() - pa.norm() * pb.norm()).abs() <= 1e-9 * pa.norm() * pb.norm());
    }

    #[test]
    fn spinor_density_is_sum_of_components(a in any::<u64>(), b in any::<u64>()) {
        let (pa, pb) = (state(a), state(b));
        let grid = pa.grid().clone();
        let mut amps = pa.amplitudes().to_vec();
        amps.extend_from_slice(pb.amplitudes());
        let spinor = WaveFunction::new(grid, 2, amps, 0.0).unwrap();
        for ((s, x), y) in spinor.density().iter().zip(pa.density()).zip(pb.density()) {
            prop_assert_eq!(*s, x + y);
        }
    }

    #[test]
    fn propagation_is_linear(a in any::<u64>(), b in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let (pa, pb) = (state(a), state(b));
        let sys = ParticleSystem::natural(1);
        let pot = Potential::Harmonic { omega: vec![0.3], center: None };
        let cfg = PropagatorConfig::spectral(0.005);
        let evolve = |psi: &WaveFunction| {
            let mut p = Propagator::new(psi.grid(), &sys, &pot, &cfg).unwrap();
            let mut psi = psi.clone();
            for _ in 0..20 {
                p.step(&mut psi).unwrap();
            }
            psi
        };
        let (ca, cb) = (Complex64::new(alpha, 0.0), Complex64::new(0.0, beta));
        let lhs = evolve(&pa.combine(ca, &pb, cb).unwrap());
        let rhs = evolve(&pa).combine(ca, &evolve(&pb), cb).unwrap();
        let diff = lhs.amplitudes().iter().zip(rhs.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-9);
    }

    #[test]
    fn sampling_is_reproducible_and_stays_on_the_grid(seed in any::<u64>()) {
        let psi = state(seed).normalize().unwrap();
        let a = sample_equilibrium(&psi, 200, seed).unwrap();
        let b = sample_equilibrium(&psi, 200, seed).unwrap();
        prop_assert_eq!(a.positions(), b.positions());
        for q in a.positions() {
            prop_assert!(psi.grid().contains(&q));
        }
    }
}
