//! Independent oracles shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

use hnls_core::lattice::{FreqVector, ModulusSign};
use hnls_core::SpectralField;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `|n|²` with the sign convention spelled out by hand.
pub fn quad(n: FreqVector, sign: ModulusSign) -> i128 {
    let (j, k) = (n.j as i128, n.k as i128);
    match sign {
        ModulusSign::Hyperbolic => j * j - k * k,
        ModulusSign::Elliptic => j * j + k * k,
    }
}

pub fn phi(n: FreqVector, n1: FreqVector, n2: FreqVector, n3: FreqVector, sign: ModulusSign) -> i128 {
    quad(n, sign) - quad(n1, sign) + quad(n2, sign) - quad(n3, sign)
}

/// `|v| ∼ big_n`, by direct comparison of squared lengths.
pub fn in_shell(v: FreqVector, big_n: i64) -> bool {
    let r2 = (v.j as i128).pow(2) + (v.k as i128).pow(2);
    let n2 = (big_n as i128).pow(2);
    if big_n == 1 {
        4 * r2 < 16
    } else {
        n2 <= 4 * r2 && 4 * r2 < 16 * n2
    }
}

/// All `(n1, n2, n3)` with `n = n1 - n2 + n3`, `n1, n3 ≠ n`, `Φ = μ`, `|n1| ∼ big_n1`, `|n3| ∼ big_n3`.
pub fn brute_gamma(n: FreqVector, mu: i128, sign: ModulusSign, big_n1: i64, big_n3: i64) -> Vec<(FreqVector, FreqVector, FreqVector)> {
    let mut out = Vec::new();
    let b1 = 2 * big_n1;
    let b3 = 2 * big_n3;
    for a in -b1..=b1 {
        for b in -b1..=b1 {
            let n1 = FreqVector::new(a, b);
            if n1 == n || !in_shell(n1, big_n1) {
                continue;
            }
            for c in -b3..=b3 {
                for d in -b3..=b3 {
                    let n3 = FreqVector::new(c, d);
                    if n3 == n || !in_shell(n3, big_n3) {
                        continue;
                    }
                    let n2 = n1 - n + n3;
                    if phi(n, n1, n2, n3, sign) == mu {
                        out.push((n1, n2, n3));
                    }
                }
            }
        }
    }
    out.sort();
    out
}

fn jb(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

fn jb_vec(n: FreqVector) -> f64 {
    (1.0 + (n.j as f64).powi(2) + (n.k as f64).powi(2)).sqrt()
}

/// Triple-loop evaluation of the shifted second-generation kernel.
pub fn brute_kernel_j2(n: FreqVector, sigma0: i64, s: f64, p: f64, eps: f64, radius: i64, sign: ModulusSign) -> f64 {
    let pd = p / (p - 1.0);
    let mut acc = 0.0;
    for a in -radius..=radius {
        for b in -radius..=radius {
            let n1 = FreqVector::new(a, b);
            if a * a + b * b > radius * radius || n1 == n {
                continue;
            }
            for c in -radius..=radius {
                for d in -radius..=radius {
                    let n3 = FreqVector::new(c, d);
                    if c * c + d * d > radius * radius || n3 == n {
                        continue;
                    }
                    let n2 = n1 - n + n3;
                    let f = phi(n, n1, n2, n3, sign) as f64;
                    acc += jb_vec(n).powf(s * pd) / (jb(f - sigma0 as f64).powf(1.0 + eps * pd) * (jb_vec(n1) * jb_vec(n2) * jb_vec(n3)).powf(s * pd));
                }
            }
        }
    }
    acc
}

/// `(2j-1)!!` by recursion.
pub fn double_factorial(j: u64) -> u64 {
    if j <= 1 {
        1
    } else {
        (2 * j - 1) * double_factorial(j - 1)
    }
}

/// Random field with `modes` entries in the ball of radius `radius`.
pub fn random_field(rng: &mut ChaCha8Rng, radius: i64, modes: usize, amp: f64) -> SpectralField {
    let mut u = SpectralField::zero(radius);
    while u.len() < modes {
        let n = FreqVector::new(rng.gen_range(-radius..=radius), rng.gen_range(-radius..=radius));
        if n.in_ball(radius) {
            u.set(n, Complex64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp))).unwrap();
        }
    }
    u
}

/// Dense Gaussian-profile data on the ball, rescaled to `ℓ²` norm `l2`.
pub fn smooth_field(rng: &mut ChaCha8Rng, radius: i64, support: i64, l2: f64) -> SpectralField {
    let mut modes = Vec::new();
    for j in -support..=support {
        for k in -support..=support {
            let n = FreqVector::new(j, k);
            if n.in_ball(support) {
                let a = (-((j * j + k * k) as f64) / 4.0).exp();
                modes.push((n, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * a));
            }
        }
    }
    let u = SpectralField::from_modes(radius, modes).unwrap();
    let m = u.mass().sqrt();
    u.scale(Complex64::new(l2 / m, 0.0))
}

/// `û(t) = c·exp(-i(|n0|²₋ - |c|²)t)`.
pub fn single_mode_exact(n0: FreqVector, c: Complex64, t: f64) -> Complex64 {
    let w = quad(n0, ModulusSign::Hyperbolic) as f64 - c.norm_sqr();
    c * Complex64::from_polar(1.0, -w * t)
}

/// `i ∫_0^t S(t-t')(|S(t')f|² S(t')f) dt'` by the composite trapezoid rule.
pub fn picard_trapezoid(f: &SpectralField, t: f64, steps: usize) -> std::collections::BTreeMap<FreqVector, Complex64> {
    let modes: Vec<(FreqVector, Complex64)> = f.iter().collect();
    let lin = |n: FreqVector, tau: f64| Complex64::from_polar(1.0, -(quad(n, ModulusSign::Hyperbolic) as f64) * tau);
    let h = t / steps as f64;
    let mut acc = std::collections::BTreeMap::new();
    for m in 0..=steps {
        let tp = m as f64 * h;
        let w = if m == 0 || m == steps { 0.5 * h } else { h };
        let v: Vec<(FreqVector, Complex64)> = modes.iter().map(|&(n, c)| (n, c * lin(n, tp))).collect();
        for &(n1, a) in &v {
            for &(n2, b) in &v {
                for &(n3, c) in &v {
                    let n = n1 - n2 + n3;
                    let term = a * b.conj() * c * lin(n, t - tp) * Complex64::new(0.0, w);
                    *acc.entry(n).or_insert(Complex64::default()) += term;
                }
            }
        }
    }
    acc
}
