//! Ordered ternary trees: enumeration, parity and frequency assignments.

use hnls_core::lattice::{FreqVector, ModulusSign};
use hnls_core::trees::{enumerate_assignments, enumerate_trees, modulations, project};

fn main() -> hnls_core::Result<()> {
    for j in 1..=5 {
        println!("|T({j})| = {}", enumerate_trees(j)?.len());
    }

    let trees = enumerate_trees(2)?;
    for t in &trees {
        let signs: Vec<i64> = t.terminals().iter().map(|&a| t.parity_sign(a)).collect();
        println!("{t}  terminal parities {signs:?}  parent {}", project(t, 1)?);
    }

    let tree = &trees[1];
    let root = FreqVector::new(1, 0);
    let mut shown = 0;
    for a in enumerate_assignments(tree, root, 2)? {
        if !a.is_nondegenerate() {
            continue;
        }
        let m = modulations(&a, ModulusSign::Hyperbolic);
        let freqs: Vec<String> = a.freqs().iter().map(|f| f.to_string()).collect();
        println!("{}  μ̃ = ({}, {})", freqs.join(" "), m.mu_tilde(1), m.mu_tilde(2));
        shown += 1;
        if shown == 5 {
            break;
        }
    }
    Ok(())
}
