//! Enumerates a resonance set and estimates the counting constant.

use hnls_core::lattice::{empirical_count_constant, enumerate_gamma, DyadicShell, FreqVector, ModulusSign};

fn main() -> hnls_core::Result<()> {
    let n = FreqVector::new(3, -1);
    let shell = DyadicShell::new(4)?;
    for sign in [ModulusSign::Hyperbolic, ModulusSign::Elliptic] {
        let triples = enumerate_gamma(n, 6, sign, shell, shell);
        println!("{sign:?}: |Γ_6(n)| = {} with |n1|, |n3| ~ 4", triples.len());
        for t in triples.iter().take(5) {
            println!("  n1 = {}, n2 = {}, n3 = {}", t.n1, t.n2, t.n3);
        }
    }

    let report = empirical_count_constant(ModulusSign::Hyperbolic, 0.25, 32, 2000, 7)?;
    println!("max count/(N1·N3·max^θ) = {:.3}", report.max_ratio);
    if let Some(w) = &report.witness {
        println!("attained at n = {}, μ = {}, N1 = {}, N3 = {} ({} triples)", w.n, w.mu, w.n1, w.n3, w.count);
    }
    Ok(())
}
