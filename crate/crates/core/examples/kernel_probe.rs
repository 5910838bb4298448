//! Kernel sums behind the trilinear estimate and the modulation sums.

use hnls_core::lattice::FreqVector;
use hnls_core::probe::{b_p, kernel_sum_j2, kernel_sum_j2_sup_mu, modulation_sum_bound, modulation_sum_s, threshold_scan, KernelQuery};

fn main() -> hnls_core::Result<()> {
    let n = FreqVector::new(3, 3);
    for s in [0.4, 0.6] {
        let values: Vec<String> = [4, 8, 16]
            .iter()
            .map(|&r| {
                let q = KernelQuery::new(s, 2.0, r);
                format!("{:.2}/{:.2}", kernel_sum_j2(n, 0, &q).unwrap(), kernel_sum_j2_sup_mu(n, &q).unwrap())
            })
            .collect();
        println!("s = {s}: shifted/sup-μ at radius 4, 8, 16: {}", values.join("  "));
    }

    let scan = threshold_scan(2.0, &[0.4, 0.6], &[8, 16, 32], 4, 0.1)?;
    scan.write_csv(std::io::stdout())?;

    println!("B_2 = {:.6}", b_p(2.0)?);
    for j in 2..=3 {
        for k in [1.0, 2.0] {
            println!("S({j}) at K = {k}: {:.4e} <= {:.4e}", modulation_sum_s(j, k, 2.0, 100_000)?, modulation_sum_bound(j, k, 2.0)?);
        }
    }
    Ok(())
}
