mod common;

use hnls_core::solver::{illposedness_slope, integrate, InteractionFlow, Scheme, SimConfig};
use hnls_core::{FreqVector, SpectralField};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn single_mode_error(dt: f64) -> f64 {
    let n0 = FreqVector::new(2, 1);
    let amp = Complex64::new(1.2, 0.5);
    let u0 = SpectralField::single_mode(3, n0, amp).unwrap();
    let cfg = SimConfig { radius: 3, dt, t_end: 1.0, scheme: Scheme::Rk4InteractionPicture, record_every: 1_000_000 };
    let traj = integrate(&u0, &cfg).unwrap();
    let (t, u) = traj.samples.last().unwrap();
    (u.get(n0) - common::single_mode_exact(n0, amp, *t)).norm()
}

#[test]
fn rk4_is_fourth_order() {
    let ratio = single_mode_error(0.1) / single_mode_error(0.05);
    assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "ratio {ratio}");
}

#[test]
fn trapezoid_scheme_agrees_with_rk4() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u0 = common::smooth_field(&mut rng, 3, 2, 0.4);
    let run = |scheme| {
        let cfg = SimConfig { radius: 3, dt: 1e-3, t_end: 0.2, scheme, record_every: 200 };
        integrate(&u0, &cfg).unwrap()
    };
    let a = run(Scheme::Rk4InteractionPicture);
    let b = run(Scheme::PicardOnly);
    let (ua, ub) = (&a.samples.last().unwrap().1, &b.samples.last().unwrap().1);
    assert!(ua.max_abs_diff(ub) < 1e-6);
    let drift = b.conserved.mass_drift();
    assert!(drift < 1e-8, "mass drift {drift}");
}

#[test]
fn evolve_is_reversible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = common::smooth_field(&mut rng, 4, 3, 0.5);
    let mut flow = InteractionFlow::new(4);
    let fwd = flow.evolve(&w, 0.0, 1e-3, 200);
    let back = flow.evolve(&fwd, 0.2, -1e-3, 200);
    assert!(back.max_abs_diff(&w) < 1e-10);
}

#[test]
fn blow_up_guard_stops_the_run() {
    let u0 = SpectralField::single_mode(1, FreqVector::ZERO, Complex64::new(100.0, 0.0)).unwrap();
    let cfg = SimConfig { radius: 1, dt: 0.5, t_end: 50.0, scheme: Scheme::Rk4InteractionPicture, record_every: 1 };
    let traj = integrate(&u0, &cfg).unwrap();
    let b = traj.blowup.expect("guard trips");
    assert!(b.magnitude > 1e6 || b.magnitude.is_nan());
    assert!(traj.samples.last().unwrap().0 < b.t);
}

#[test]
fn ill_posedness_slope_is_independent_of_t() {
    for t in [0.1, 1.0] {
        let r = illposedness_slope(0.0, 2.0, t, &[16, 32, 64, 128]).unwrap();
        assert!((0.95..=1.05).contains(&r.slope), "t = {t}: {}", r.slope);
    }
    let a = illposedness_slope(0.25, 2.0, 0.3, &[16, 32, 64]).unwrap();
    let b = illposedness_slope(0.25, 2.0, 0.6, &[16, 32, 64]).unwrap();
    for (x, y) in a.points.iter().zip(&b.points) {
        assert!((y.1 / x.1 - 2.0).abs() < 1e-12);
    }
}
