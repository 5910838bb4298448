//! RK4 integration in the interaction picture with conservation tracking.

use hnls_core::solver::{integrate, Scheme, SimConfig};
use hnls_core::{FreqVector, SpectralField};
use num_complex::Complex64;

fn main() -> hnls_core::Result<()> {
    let u0 = SpectralField::from_modes(
        6,
        [
            (FreqVector::new(0, 0), Complex64::new(0.3, 0.0)),
            (FreqVector::new(2, 1), Complex64::new(0.1, 0.2)),
            (FreqVector::new(-1, 3), Complex64::new(-0.15, 0.05)),
        ],
    )?;
    let cfg = SimConfig { radius: 6, dt: 1e-3, t_end: 1.0, scheme: Scheme::Rk4InteractionPicture, record_every: 250 };
    let traj = integrate(&u0, &cfg)?;
    for (i, (t, u)) in traj.samples.iter().enumerate() {
        println!(
            "t = {t:.3}  mass = {:.15}  H = {:.15}  modes = {}",
            traj.conserved.mass[i],
            traj.conserved.hamiltonian[i],
            u.iter().filter(|(_, c)| c.norm() > 1e-12).count()
        );
    }
    println!("mass drift {:.2e}, hamiltonian drift {:.2e}", traj.conserved.mass_drift(), traj.conserved.hamiltonian_drift());
    Ok(())
}
