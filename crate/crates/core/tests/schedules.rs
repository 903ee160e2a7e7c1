use proptest::prelude::*;
use sica_core::regen::{AlphaSchedule, PeerDecaySchedule};
use sica_core::trainer::{RunConfig, Schedules, SigmaSchedule, Variant};

fn schedules(variant: Variant, total: u64) -> Schedules {
    let mut cfg = RunConfig::default();
    cfg.run.total_steps = total;
    cfg.run.variant = variant;
    Schedules::from_config(&cfg, 3)
}

proptest! {
    #[test]
    fn alpha_endpoints_and_monotone(half in 1u64..50_000) {
        let t_max = 2 * half;
        let s = AlphaSchedule::new(t_max);
        prop_assert_eq!(s.alpha(0), 1.0);
        prop_assert_eq!(s.alpha(t_max), 0.0);
        prop_assert_eq!(s.alpha(half), 0.5);
        prop_assert_eq!(s.alpha(t_max + 17), 0.0);
        let stride = (t_max / 500).max(1);
        let mut prev = s.alpha(0);
        for t in (0..=t_max + stride).step_by(stride as usize) {
            let a = s.alpha(t);
            prop_assert!(a <= prev && (0.0..=1.0).contains(&a));
            prev = a;
        }
    }

    #[test]
    fn sigma_switches_after_threshold(threshold in 0u64..10_000, b1 in 0.0f64..2.0, b2 in 0.0f64..2.0) {
        let s = SigmaSchedule { threshold, beta1: b1, beta2: b2 };
        prop_assert_eq!(s.sigma(threshold), b1);
        prop_assert_eq!(s.sigma(threshold + 1), b2);
        prop_assert_eq!(s.sigma(0), b1);
    }

    #[test]
    fn peers_decay_to_zero(n in 1usize..8, k in 1u64..1000) {
        let s = PeerDecaySchedule { k, n_agents: n };
        prop_assert_eq!(s.peers(0), n - 1);
        prop_assert_eq!(s.peers(k), 0);
        let mut prev = n - 1;
        for t in 0..=k {
            let p = s.peers(t);
            prop_assert!(p <= prev);
            prev = p;
        }
    }
}

#[test]
fn variant_presets() {
    let sica = schedules(Variant::Sica, 1000);
    assert_eq!(sica.alpha(0), 1.0);
    assert_eq!(sica.alpha(800), 0.0);
    assert_eq!(sica.alpha(400), 0.5);
    assert_eq!(sica.sigma(500), 0.1);
    assert_eq!(sica.sigma(501), 1.0);
    assert_eq!(sica.peers(0), 2);
    assert_eq!(sica.peers(200), 0);

    let zero = schedules(Variant::SicaZero, 1000);
    for t in [0, 1, 500, 999] {
        assert_eq!(zero.alpha(t), 0.0);
        assert_eq!(zero.sigma(t), 0.0);
        assert_eq!(zero.peers(t), 0);
    }

    let one = schedules(Variant::SicaOne, 1000);
    assert_eq!(one.alpha(949), 1.0);
    assert_eq!(one.alpha(950), 0.0);

    assert_eq!(schedules(Variant::Ica, 1000).alpha(400), 0.5);
}

#[test]
fn epsilon_is_linear_then_flat() {
    let s = schedules(Variant::Sica, 1000);
    assert_eq!(s.epsilon(0), 1.0);
    assert!((s.epsilon(50) - 0.525).abs() < 1e-12);
    assert_eq!(s.epsilon(100), 0.05);
    assert_eq!(s.epsilon(5000), 0.05);
}
