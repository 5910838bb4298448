//! Fourier-Lebesgue norms, the linear flow and the splitting of the cubic term.

use hnls_core::field::{cubic_convolution, fl_norm, propagate, trilinear_n, trilinear_r1, trilinear_r2};
use hnls_core::{FlNormParams, FreqVector, SpectralField};
use num_complex::Complex64;

fn main() -> hnls_core::Result<()> {
    let u = SpectralField::from_modes(
        4,
        [
            (FreqVector::new(0, 0), Complex64::new(0.4, 0.0)),
            (FreqVector::new(1, 2), Complex64::new(0.0, -0.3)),
            (FreqVector::new(-3, 1), Complex64::new(0.1, 0.2)),
        ],
    )?;
    for (s, p) in [(0.0, 2.0), (1.0, 2.0), (0.5, 4.0)] {
        let q = FlNormParams::new(s, p)?;
        let before = fl_norm(&u, q);
        let after = fl_norm(&propagate(&u, 2.5), q);
        println!("FL^{{{s},{p}}}: {before:.12} -> {after:.12} after S(2.5)");
    }

    let split = trilinear_n(&u, &u, &u).add(&trilinear_r1(&u, &u, &u)).add(&trilinear_r2(&u, &u, &u));
    let full = cubic_convolution(&u, &u, &u);
    println!("|N + R1 + R2 - u ū u|_max = {:.2e}", split.max_abs_diff(&full));

    println!("{}", u.to_json());
    Ok(())
}
