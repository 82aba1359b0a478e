use intmit::phy::{draw_interference, gen_channel, nmse, synth_received_pilot, zf_estimate, CArray3, CellScenario, InterferenceSet, Link, PilotGrid};
use intmit::seed::{derive_seed, Stream};
use intmit::ul::{postprocess, preprocess};
use num_complex::Complex;
use proptest::prelude::*;

fn small(m: usize, n: usize, k: usize, seed: u64) -> CellScenario {
    CellScenario { bs_ant: m, ue_ant: n, n_re: k, seed, n_taps: 2.min(k), ..Default::default() }
}

fn max_abs_diff<T: intmit::Real>(a: &CArray3<T>, b: &CArray3<T>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm().to_f64().unwrap()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn received_pilot_is_a_superposition(m in 1usize..5, n in 1usize..3, k in 2usize..17, seed in 0u64..1000, up in any::<bool>()) {
        let s = small(m, n, k, seed);
        let link = if up { Link::Uplink } else { Link::Downlink };
        let x = PilotGrid::<f64>::qpsk(k, seed);
        let h = gen_channel::<f64>(&s, seed + 1).h;
        let ints = draw_interference::<f64>(&s, link, seed);
        let none = InterferenceSet::empty();
        let zero = CArray3::zeros(h.dim());
        let nv = s.noise_var();
        let full = synth_received_pilot(&h, &x, &ints, nv, seed).unwrap();
        let parts = synth_received_pilot(&h, &x, &none, 0.0, seed).unwrap()
            + synth_received_pilot(&zero, &x, &ints, 0.0, seed).unwrap()
            + synth_received_pilot(&zero, &x, &none, nv, seed).unwrap();
        prop_assert!(max_abs_diff(&full, &parts) <= 1e-12);
    }

    #[test]
    fn noiseless_zf_recovers_the_channel(m in 1usize..5, n in 1usize..3, k in 2usize..33, seed in 0u64..1000) {
        let s = small(m, n, k, seed);
        let x = PilotGrid::<f64>::qpsk(k, seed);
        let h = gen_channel::<f64>(&s, seed).h;
        let y = synth_received_pilot(&h, &x, &InterferenceSet::empty(), 0.0, seed).unwrap();
        prop_assert!(nmse(&zf_estimate(&y, &x).unwrap(), &h).unwrap() < 1e-20);
    }

    #[test]
    fn interference_amplitude_scales_power_quadratically(seed in 0u64..1000, f in 0.1f64..4.0) {
        let s = small(4, 2, 8, seed);
        let ints = draw_interference::<f64>(&s, Link::Uplink, seed);
        let p = ints.total_power();
        prop_assert!((ints.scaled(f).total_power() - f * f * p).abs() <= 1e-9 * p.max(1.0));
    }

    #[test]
    fn nmse_ignores_a_common_scale(seed in 0u64..1000, c in 0.01f64..100.0) {
        let s = small(3, 2, 8, seed);
        let h = gen_channel::<f64>(&s, seed).h;
        let e = gen_channel::<f64>(&s, seed + 7).h;
        let a = nmse(&e, &h).unwrap();
        let b = nmse(&e.mapv(|v| v * c), &h.mapv(|v| v * c)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
        prop_assert_eq!(nmse(&h, &h).unwrap(), 0.0);
    }

    #[test]
    fn row_layout_round_trips(m in 1usize..6, n in 1usize..4, k in 1usize..20, seed in 0u64..100) {
        let s = small(m, n, k.max(2), seed);
        let h = gen_channel::<f64>(&s, seed).h;
        let t = preprocess(&h);
        prop_assert_eq!(t.shape(), &[m * n, k.max(2), 2][..]);
        prop_assert_eq!(postprocess(&t, m, n).unwrap(), h);
    }

    #[test]
    fn derived_seeds_separate_streams(master in any::<u64>(), i in 0u64..1000) {
        let a = derive_seed(master, Stream::Channel, i);
        prop_assert_ne!(a, derive_seed(master, Stream::Noise, i));
        prop_assert_ne!(a, derive_seed(master, Stream::Channel, i + 1));
        prop_assert_eq!(a, derive_seed(master, Stream::Channel, i));
    }
}

#[test]
fn single_precision_tracks_double() {
    let s = CellScenario::default();
    let h64 = gen_channel::<f64>(&s, 3).h;
    let h32 = gen_channel::<f32>(&s, 3).h;
    let x = PilotGrid::<f32>::qpsk(s.n_re, 1);
    let y = synth_received_pilot(&h32, &x, &draw_interference::<f32>(&s, Link::Uplink, 1), s.noise_var(), 9).unwrap();
    assert!(zf_estimate(&y, &x).unwrap().iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    let diff = h64.iter().zip(&h32).map(|(a, b)| (a - Complex::new(b.re as f64, b.im as f64)).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-5, "{diff}");
}
