use dermacal::clinical::*;
use dermacal::colorspace::LabColor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[test]
fn gradient_matches_finite_differences_on_skin_gamut() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-4;
    for _ in 0..1000 {
        let l = rng.random_range(40.0..90.0);
        let a = rng.random_range(0.0..20.0);
        let b = rng.random_range(5.0..30.0);
        let s = ita_sensitivity(LabColor::new(l, a, b)).unwrap();
        let fd_l = central_difference(|x| ita(LabColor::new(x, a, b)), l, h);
        let fd_b = central_difference(|x| ita(LabColor::new(l, a, x)), b, h);
        assert!((fd_l - s.d_ita_d_l).abs() <= 1e-6, "∂L at ({l}, {b}): {fd_l} vs {}", s.d_ita_d_l);
        assert!((fd_b - s.d_ita_d_b).abs() <= 1e-6, "∂b at ({l}, {b}): {fd_b} vs {}", s.d_ita_d_b);
    }
}

#[test]
fn reference_point() {
    let s = ita_sensitivity(LabColor::new(75.0, 0.0, 15.0)).unwrap();
    assert!((s.d_ita_d_b_rad() - (-0.0294)).abs() < 1e-4);
    assert!((s.d_ita_d_b_rad().abs() - 25.0 / 850.0).abs() < 1e-15);
    assert!(s.d_ita_d_b.abs() > s.d_ita_d_l.abs());
    assert!((ita(LabColor::new(75.0, 0.0, 15.0)) - 59.036).abs() < 5e-4);
    assert!((melanin_index(LabColor::new(50.0, 0.0, 0.0)).unwrap() - 30.103).abs() < 5e-4);
}

proptest! {
    #[test]
    fn melanin_index_decreases_with_lightness(l in 0.01f64..100.0, dl in 1e-6f64..10.0) {
        let hi = (l + dl).min(100.0);
        prop_assume!(hi > l);
        let a = melanin_index(LabColor::new(l, 0.0, 0.0)).unwrap();
        let b = melanin_index(LabColor::new(hi, 0.0, 0.0)).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn erythema_index_is_additive(
        l in 0.0f64..100.0, a in -20.0f64..40.0, dl in -5.0f64..5.0, da in -5.0f64..5.0,
    ) {
        let base = erythema_index(LabColor::new(l, a, 0.0));
        let moved = erythema_index(LabColor::new(l + dl, a + da, 0.0));
        prop_assert!((moved - base - (da - 0.5 * dl)).abs() < 1e-12);
    }

    #[test]
    fn ita_is_scale_invariant(u in -40.0f64..40.0, v in 0.01f64..40.0, k in 0.1f64..5.0) {
        let one = ita(LabColor::new(50.0 + u, 0.0, v));
        let scaled = ita(LabColor::new(50.0 + k * u, 0.0, k * v));
        prop_assert!((one - scaled).abs() < 1e-9);
    }

    #[test]
    fn ita_is_bounded(l in 0.0f64..100.0, b in -50.0f64..50.0) {
        let angle = ita(LabColor::new(l, 0.0, b));
        prop_assert!((-90.0..=90.0).contains(&angle));
    }
}
