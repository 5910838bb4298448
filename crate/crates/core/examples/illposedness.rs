//! Growth of the second Picard iterate on the diagonal data `f_N`.

use hnls_core::solver::illposedness_slope;

fn main() -> hnls_core::Result<()> {
    for (s, p) in [(0.0, 2.0), (0.25, 2.0), (0.0, 4.0), (0.5, 2.0)] {
        let r = illposedness_slope(s, p, 1.0, &[16, 32, 64, 128])?;
        println!("s = {s}, p = {p}: slope {:.4} (expected {:.4})", r.slope, r.expected);
        for (n, v) in &r.points {
            println!("    N = {n:4}  norm = {v:.6e}");
        }
    }
    Ok(())
}
