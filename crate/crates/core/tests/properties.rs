use kerrsim::calibrate::{decimate, RawDataset, RawTrace};
use kerrsim::classical::amplitude_roots;
use kerrsim::constants::{ghz, khz, mhz};
use kerrsim::device::{epsilon_from_dbm, CircuitParams};
use kerrsim::fitkit::point_term;
use kerrsim::fock::{adequate_dim, coherent_ket, create, destroy, number, Ket};
use kerrsim::lindblad;
use kerrsim::perturbative::amplitude_cardano;
use kerrsim::wigner::{self, PhaseSpaceGrid};
use kerrsim::C64;
use nalgebra::DVector;
use proptest::prelude::*;

fn device() -> impl Strategy<Value = CircuitParams> {
    (4.0f64..8.0, 50.0f64..800.0, 0.2f64..3.0, 0.0f64..300.0, 0.0f64..0.5).prop_map(|(w, ki, ke, k, n)| {
        CircuitParams::new(ghz(w), khz(ki), mhz(ke), khz(k), n).unwrap()
    })
}

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ladder_commutator_below_cutoff(dim in 2usize..40) {
        let a = destroy(dim).unwrap();
        let c = a.commutator(&create(dim).unwrap()).unwrap();
        let n = number(dim).unwrap();
        let ada = create(dim).unwrap().mul(&a).unwrap();
        for i in 0..dim - 1 {
            prop_assert!((c.matrix()[(i, i)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        prop_assert!((ada.matrix() - n.matrix()).norm() < 1e-12 * dim as f64);
    }

    #[test]
    fn coherent_state_moments(re in -4.0f64..4.0, im in -4.0f64..4.0) {
        let alpha = C64::new(re, im);
        let ket = coherent_ket(adequate_dim(alpha.norm()), alpha).unwrap();
        let rho = ket.to_density();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
        prop_assert!((rho.mean_amplitude() - alpha).norm() < 1e-6);
        prop_assert!((rho.mean_photons() - alpha.norm_sqr()).abs() < 1e-5);
    }

    #[test]
    fn classical_roots_satisfy_complex_identity(
        p in device(),
        g in 0.0f64..20.0,
        detune in -3.0f64..8.0,
        power in -140.0f64..-105.0,
    ) {
        let eps = epsilon_from_dbm(power, &p);
        let delta = detune * p.kappa();
        let sol = amplitude_roots(&p, khz(g), delta, eps).unwrap();
        prop_assert!(!sol.amplitudes.is_empty());
        prop_assert_eq!(sol.multistable, sol.amplitudes.len() > 1);
        for a in &sol.amplitudes {
            let u = a.norm_sqr();
            let lhs = C64::new(0.5 * (p.kappa() + khz(g) * u), delta - p.kerr * u) * a;
            prop_assert!((lhs - eps).norm() <= 1e-8 * eps, "residual {}", (lhs - eps).norm() / eps);
        }
        for w in sol.amplitudes.windows(2) {
            prop_assert!(w[0].norm() <= w[1].norm());
        }
    }

    #[test]
    fn cardano_root_is_bounded_and_monotone(p in device(), power in -140.0f64..-115.0) {
        let lo = amplitude_cardano(&p, epsilon_from_dbm(power, &p)).unwrap();
        let hi = amplitude_cardano(&p, epsilon_from_dbm(power + 0.5, &p)).unwrap();
        let alpha = p.linear_amplitude(epsilon_from_dbm(power, &p));
        prop_assert!(lo > 0.0 && lo <= alpha * (1.0 + 1e-12));
        prop_assert!(hi >= lo);
    }

    #[test]
    fn drive_scales_with_root_power(p in device(), power in -150.0f64..-90.0, step in 0.5f64..20.0) {
        let r = epsilon_from_dbm(power + step, &p) / epsilon_from_dbm(power, &p);
        prop_assert!((r / 10f64.powf(step / 20.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_term_ignores_point_order(
        pairs in prop::collection::vec((complex(), complex()), 1..60),
        seed in any::<u64>(),
    ) {
        let (model, data): (Vec<C64>, Vec<C64>) = pairs.iter().cloned().unzip();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let m2: Vec<C64> = order.iter().map(|&i| model[i]).collect();
        let d2: Vec<C64> = order.iter().map(|&i| data[i]).collect();
        let a = point_term(&model, &data);
        prop_assert!((a - point_term(&m2, &d2)).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(point_term(&data, &data) == 0.0);
    }

    #[test]
    fn decimation_preserves_mean(
        values in prop::collection::vec(complex(), 2..80),
        block in 1usize..9,
    ) {
        let n = values.len();
        let freq: Vec<f64> = (0..n).map(|i| 5e9 + 1e3 * i as f64).collect();
        let ds = RawDataset::new(vec![RawTrace::new(-120.0, freq, values.clone()).unwrap()]).unwrap();
        let out = decimate(&ds, block).unwrap();
        let t = &out.traces[0];
        prop_assert_eq!(t.len(), n.div_ceil(block));
        prop_assert!(t.freq_hz.windows(2).all(|w| w[1] > w[0]));
        if n % block == 0 {
            let before: C64 = values.iter().sum::<C64>() / n as f64;
            let after: C64 = t.s21.iter().sum::<C64>() / t.len() as f64;
            prop_assert!((before - after).norm() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn steady_state_is_a_physical_state(
        p in device(),
        power in -140.0f64..-125.0,
        detune in -2.0f64..4.0,
    ) {
        let p = CircuitParams { n_th: p.n_th.min(0.2), ..p };
        let eps = epsilon_from_dbm(power, &p);
        let dim = lindblad::default_dim(&p, eps);
        prop_assume!(dim <= 40);
        let l = lindblad::build(&p, detune * p.kappa(), eps, dim).unwrap();
        let ss = lindblad::steady_state_with(&l, &Default::default()).unwrap();
        prop_assert!((ss.rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
        prop_assert!(ss.rho.hermiticity_error() < 1e-10);
        prop_assert!(ss.rho.min_eigenvalue() >= -1e-8);
        prop_assert!(ss.residual < 1e-10 * p.kappa());
    }

    #[test]
    fn wigner_normalized_and_centered(re in -2.5f64..2.5, im in -2.5f64..2.5, mix in 0.0f64..1.0) {
        let alpha = C64::new(re, im);
        let dim = adequate_dim(alpha.norm() + 1.0);
        let coh = coherent_ket(dim, alpha).unwrap().to_density();
        let mut one = DVector::zeros(dim);
        one[1] = C64::new(1.0, 0.0);
        let fock1 = Ket::new(one).unwrap().to_density();
        let mat = coh.matrix() * C64::new(1.0 - mix, 0.0) + fock1.matrix() * C64::new(mix, 0.0);
        let rho = kerrsim::fock::DensityMatrix::new(mat).unwrap();
        let grid = PhaseSpaceGrid::for_amplitude(alpha.norm() + 1.0);
        let field = wigner::wigner_grid(&rho, &grid).unwrap();
        prop_assert!((field.normalization() - 1.0).abs() < 1e-6);
        prop_assert!((field.mean_amplitude() - rho.mean_amplitude()).norm() < 1e-5);
    }

    #[test]
    fn kerr_deformation_conserves_photons(
        amp in 0.5f64..5.0,
        phase in -3.1f64..3.1,
        lambda in 0.0f64..40.0,
        turns in 0.001f64..0.1,
    ) {
        let p = CircuitParams::reference();
        let alpha = C64::from_polar(amp, phase);
        let rho = wigner::kerr_deform(alpha, &p, lambda, turns / p.kerr).unwrap();
        prop_assert!((rho.mean_photons() / (amp * amp) - 1.0).abs() < 1e-9);
        prop_assert!(rho.mean_amplitude().norm() <= amp * (1.0 + 1e-9));
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }
}
